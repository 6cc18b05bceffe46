//! Shortfall events, peak power-not-served, and event-category tallies.

use crate::model::{EventCategory, TimeSeries};

/// Resultant values at or below this (GW) count as fully served.
pub const NOISE_FLOOR_GW: f64 = 1e-6;

/// Maximal run of positive resultant shortfall at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortfallEvent {
    pub node: usize,
    pub start_k: usize,
    /// Inclusive.
    pub end_k: usize,
    /// Peak power-not-served over the event.
    pub ppns_gw: f64,
}

/// Streaming event extraction over all nodes, one step at a time.
#[derive(Debug, Clone)]
pub struct EventTracker {
    open: Vec<Option<ShortfallEvent>>,
    closed: Vec<ShortfallEvent>,
}

impl EventTracker {
    pub fn new(nodes: usize) -> Self {
        EventTracker {
            open: vec![None; nodes],
            closed: Vec::new(),
        }
    }

    pub fn push(&mut self, k: usize, resultant_gw: &[f64]) {
        for (node, (&v, slot)) in resultant_gw.iter().zip(self.open.iter_mut()).enumerate() {
            if v > NOISE_FLOOR_GW {
                match slot {
                    Some(ev) => {
                        ev.end_k = k;
                        ev.ppns_gw = ev.ppns_gw.max(v);
                    }
                    None => {
                        *slot = Some(ShortfallEvent {
                            node,
                            start_k: k,
                            end_k: k,
                            ppns_gw: v,
                        })
                    }
                }
            } else if let Some(ev) = slot.take() {
                self.closed.push(ev);
            }
        }
    }

    /// Closes any running events and returns all events ordered by start, then node.
    pub fn finish(mut self) -> Vec<ShortfallEvent> {
        self.closed.extend(self.open.into_iter().flatten());
        self.closed.sort_by_key(|e| (e.start_k, e.node));
        self.closed
    }
}

/// Events of one node's resultant trace, ordered by start index.
pub fn extract_events(resultant: &TimeSeries, node: usize) -> Vec<ShortfallEvent> {
    let mut tracker = EventTracker::new(node + 1);
    let mut row = vec![0.0; node + 1];
    for (k, &v) in resultant.values().iter().enumerate() {
        row[node] = v;
        tracker.push(k, &row);
    }
    tracker.finish()
}

/// Events across all nodes; node `i` is `resultants[i]`.
pub fn extract_all_events(resultants: &[TimeSeries]) -> Vec<ShortfallEvent> {
    let mut events: Vec<_> = resultants
        .iter()
        .enumerate()
        .flat_map(|(i, t)| extract_events(t, i))
        .collect();
    events.sort_by_key(|e| (e.start_k, e.node));
    events
}

/// Number of events whose PPNS strictly exceeds `threshold_gw`.
pub fn count_events(events: &[ShortfallEvent], threshold_gw: f64) -> usize {
    count_peaks(events.iter().map(|e| e.ppns_gw), threshold_gw)
}

pub(crate) fn count_peaks(peaks: impl IntoIterator<Item = f64>, threshold_gw: f64) -> usize {
    peaks.into_iter().filter(|&p| p > threshold_gw).count()
}

/// Whether the per-node event tallies, summed, stay within the category allowance.
pub fn criterion_met(resultants: &[TimeSeries], category: &EventCategory) -> bool {
    events_meet(&extract_all_events(resultants), category)
}

pub fn events_meet(events: &[ShortfallEvent], category: &EventCategory) -> bool {
    count_events(events, category.ppns_threshold_gw) <= category.allowed_per_year as usize
}
