use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use storage_adequacy::config::StudyConfig;
use storage_adequacy::exec::Execution;
use storage_adequacy::sizing::{run_study, Study};
use storage_adequacy::synthetic::{write_toy_study, ToyOptions};

fn toy_study(n_samples: usize) -> Study {
    let dir = tempfile::tempdir().expect("temp dir");
    let opts = ToyOptions {
        n_samples,
        study_years: vec![2030],
        ..ToyOptions::default()
    };
    let cfg = write_toy_study(dir.path(), &opts).expect("toy study");
    StudyConfig::load(&cfg)
        .and_then(|c| c.build_study())
        .expect("toy study loads")
}

fn samples(c: &mut Criterion) {
    let n = 16;
    let study = toy_study(n);
    let mut modes = vec![("sequential", Execution::Sequential)];
    #[cfg(feature = "parallel")]
    modes.push(("parallel", Execution::Parallel { threads: None }));

    let mut group = c.benchmark_group("toy_year");
    group.sample_size(10);
    for (name, exec) in modes {
        group.bench_with_input(BenchmarkId::new(name, n), &exec, |b, &exec| {
            b.iter(|| run_study(&study, exec).expect("study runs"))
        });
    }
    group.finish();
}

criterion_group!(benches, samples);
criterion_main!(benches);
