use std::cmp::Ordering;

use crate::model::StorageUnit;

/// Single-node time-to-go policy.
///
/// A positive `request_gw` is a shortfall: units are taken in descending
/// time-to-go and discharged as hard as power and stored energy allow until the
/// request is met. A negative request is surplus: units are taken in ascending
/// time-to-go and charged at their maximum rate. Ties go to the lower index.
/// Whatever is not covered is left as `request - sum(p)`.
pub fn greedy_single_node(request_gw: f64, fleet: &[StorageUnit], dt_hours: f64) -> Vec<f64> {
    let mut p = vec![0.0; fleet.len()];
    if request_gw == 0.0 || fleet.is_empty() {
        return p;
    }
    let mut order: Vec<usize> = (0..fleet.len()).collect();
    let discharge = request_gw > 0.0;
    order.sort_by(|&a, &b| {
        let (ta, tb) = (fleet[a].time_to_go(), fleet[b].time_to_go());
        let ord = if discharge {
            tb.partial_cmp(&ta)
        } else {
            ta.partial_cmp(&tb)
        };
        ord.unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    let mut remaining = request_gw.abs();
    for u in order {
        if remaining <= 0.0 {
            break;
        }
        let unit = &fleet[u];
        let limit = if discharge {
            unit.max_discharge(dt_hours)
        } else {
            unit.max_charge(dt_hours, unit.eta)
        };
        let take = limit.min(remaining).max(0.0);
        p[u] = if discharge { take } else { -take };
        remaining -= take;
    }
    p
}
