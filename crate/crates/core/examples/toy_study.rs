//! Writes the synthetic three-node study to a directory.
//!
//! cargo run --release --example toy_study -- /tmp/toy [dt_hours]

use std::path::PathBuf;

use storage_adequacy::synthetic::{write_toy_study, ToyOptions};

fn main() -> storage_adequacy::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "toy-study".into()));
    let mut opts = ToyOptions::default();
    if let Some(dt) = args.next() {
        opts.dt_hours = dt.parse().expect("dt_hours must be a number");
    }
    let path = write_toy_study(&dir, &opts)?;
    println!("{}", path.display());
    Ok(())
}
