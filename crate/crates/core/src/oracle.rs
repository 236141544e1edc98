//! Post-hoc collision check over a transmission log.
//!
//! Works from the log alone: for every pair of transmissions and every
//! receiver of the first, compare arrival intervals. Deliberately naive so
//! it shares nothing with the medium's incremental bookkeeping.

use std::collections::HashMap;

use crate::frame::VehicleId;
use crate::trace::{Trace, TraceRecord, TraceVehicle};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleVerdict {
    /// Per record: receivers in range that had spawned by its start.
    pub receivers: Vec<u32>,
    /// Per record: how many of those saw an overlap.
    pub collided_receptions: Vec<u32>,
}

impl OracleVerdict {
    pub fn collided(&self, i: usize) -> bool {
        self.collided_receptions[i] > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Discrepancy {
    pub index: usize,
    pub record: TraceRecord,
    pub oracle_collided: bool,
}

struct Geometry<'a> {
    trace: &'a Trace,
    index: HashMap<VehicleId, &'a TraceVehicle>,
}

impl Geometry<'_> {
    fn vehicle(&self, id: VehicleId) -> &TraceVehicle {
        self.index
            .get(&id)
            .unwrap_or_else(|| panic!("log has no vehicle {id}"))
    }

    fn dist(&self, a: VehicleId, b: VehicleId) -> f64 {
        let (pa, pb) = (self.vehicle(a).position, self.vehicle(b).position);
        (pa.x - pb.x).hypot(pa.y - pb.y)
    }

    fn in_range(&self, a: VehicleId, b: VehicleId) -> bool {
        self.dist(a, b) <= self.trace.range_m
    }

    /// Signal delay in whole nanoseconds, rounded up.
    fn delay(&self, a: VehicleId, b: VehicleId) -> u64 {
        (self.dist(a, b) * 1e9 / self.trace.propagation_mps).ceil() as u64
    }
}

pub fn check(trace: &Trace) -> OracleVerdict {
    let g = Geometry {
        trace,
        index: trace.vehicles.iter().map(|v| (v.id, v)).collect(),
    };
    let recs = &trace.records;
    let mut receivers = vec![0u32; recs.len()];
    let mut collided = vec![0u32; recs.len()];
    for (i, a) in recs.iter().enumerate() {
        for rx in &trace.vehicles {
            let r = rx.id;
            if r == a.sender || rx.spawn_at > a.start || !g.in_range(a.sender, r) {
                continue;
            }
            receivers[i] += 1;
            let d = g.delay(a.sender, r);
            let (a0, a1) = (a.start.as_ns() + d, a.end.as_ns() + d);
            let hit = recs.iter().enumerate().any(|(j, b)| {
                // a signal cannot arrive before it is sent
                if j == i || b.start.as_ns() >= a1 {
                    return false;
                }
                if b.sender == r {
                    return b.start.as_ns() < a1 && a0 < b.end.as_ns();
                }
                if !g.in_range(b.sender, r) {
                    return false;
                }
                let e = g.delay(b.sender, r);
                b.start.as_ns() + e < a1 && a0 < b.end.as_ns() + e
            });
            if hit {
                collided[i] += 1;
            }
        }
    }
    OracleVerdict {
        receivers,
        collided_receptions: collided,
    }
}

/// Records whose logged collided flag disagrees with the oracle.
pub fn discrepancies(trace: &Trace) -> Vec<Discrepancy> {
    let verdict = check(trace);
    trace
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| r.collided != verdict.collided(*i))
        .map(|(i, r)| Discrepancy {
            index: i,
            record: *r,
            oracle_collided: verdict.collided(i),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameKind;
    use crate::kernel::SimTime;
    use crate::medium::Position;

    fn trace(xs: &[f64], recs: &[(VehicleId, u64, u64)]) -> Trace {
        Trace {
            range_m: 100.0,
            propagation_mps: 3.0e8,
            vehicles: xs
                .iter()
                .enumerate()
                .map(|(i, x)| TraceVehicle {
                    id: i as VehicleId,
                    position: Position::new(*x, 0.0),
                    spawn_at: SimTime::ZERO,
                })
                .collect(),
            records: recs
                .iter()
                .map(|(s, a, b)| TraceRecord {
                    sender: *s,
                    start: SimTime::from_ns(*a),
                    end: SimTime::from_ns(*b),
                    size_bytes: 100,
                    kind: FrameKind::Data,
                    collided: false,
                })
                .collect(),
        }
    }

    #[test]
    fn disjoint_frames_are_clean() {
        let v = check(&trace(&[0.0, 50.0, 100.0], &[(0, 0, 1000), (1, 2000, 3000)]));
        assert_eq!(v.receivers, vec![2, 2]);
        assert_eq!(v.collided_receptions, vec![0, 0]);
    }

    #[test]
    fn simultaneous_frames_collide_at_the_third_node() {
        let v = check(&trace(&[0.0, 50.0, 100.0], &[(0, 0, 1000), (2, 0, 1000)]));
        // the middle node hears both; each sender is deaf to the other
        assert_eq!(v.collided_receptions, vec![2, 2]);
    }

    #[test]
    fn hidden_terminals_collide_only_where_both_reach() {
        let v = check(&trace(&[0.0, 90.0, 180.0], &[(0, 0, 1000), (2, 0, 1000)]));
        assert_eq!(v.receivers, vec![1, 1]);
        assert_eq!(v.collided_receptions, vec![1, 1]);
    }

    #[test]
    fn propagation_separates_back_to_back_frames() {
        // 90 m: 300 ns delay. B starts right as A's tail leaves the sender.
        let v = check(&trace(&[0.0, 90.0], &[(0, 0, 1000), (0, 1000, 2000)]));
        assert_eq!(v.collided_receptions, vec![0, 0]);
    }
}
