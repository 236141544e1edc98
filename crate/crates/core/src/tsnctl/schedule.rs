//! Windowed slot layout and slot allocation.
//!
//! A window of `window` nanoseconds is cut into `slot_len` slots. Slots 0
//! and 1 carry control traffic (announces, then the master's allocation);
//! data slots start at index 2. When `slot_len` does not divide `window`
//! the remainder is an unused guard interval at the end of the window.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::frame::VehicleId;
use crate::kernel::{SimRng, SimTime};

/// Index of the first data slot.
pub const FIRST_DATA_SLOT: u16 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("slot length must be positive")]
    ZeroSlot,
    #[error("window {window} holds {slots} slot(s) of {slot_len}; at least 3 are required")]
    TooFewSlots {
        window: SimTime,
        slot_len: SimTime,
        slots: u64,
    },
    #[error("window holds {0} slots; at most 65535 are supported")]
    TooManySlots(u64),
    #[error("control frame airtime {tx} exceeds slot length {slot_len}")]
    ControlFrameTooLong { tx: SimTime, slot_len: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowConfig {
    window: SimTime,
    slot_len: SimTime,
}

impl WindowConfig {
    pub fn new(window: SimTime, slot_len: SimTime) -> Result<Self, ScheduleError> {
        if slot_len == SimTime::ZERO {
            return Err(ScheduleError::ZeroSlot);
        }
        let slots = window.as_ns() / slot_len.as_ns();
        if slots < 3 {
            return Err(ScheduleError::TooFewSlots {
                window,
                slot_len,
                slots,
            });
        }
        if slots > u16::MAX as u64 {
            return Err(ScheduleError::TooManySlots(slots));
        }
        Ok(WindowConfig { window, slot_len })
    }

    pub fn window(&self) -> SimTime {
        self.window
    }

    pub fn slot_len(&self) -> SimTime {
        self.slot_len
    }

    pub fn slot_count(&self) -> u16 {
        (self.window.as_ns() / self.slot_len.as_ns()) as u16
    }

    pub fn data_slots(&self) -> u16 {
        self.slot_count() - FIRST_DATA_SLOT
    }

    /// Start of slot `index` in the window beginning at `epoch`.
    ///
    /// Panics if `index` is out of range.
    pub fn slot_origin(&self, epoch: SimTime, index: u16) -> SimTime {
        assert!(
            index < self.slot_count(),
            "slot index {index} out of range (slot_count {})",
            self.slot_count()
        );
        epoch + self.slot_len * index as u64
    }

    /// Start of the window containing `t`.
    pub fn epoch_of(&self, t: SimTime) -> SimTime {
        SimTime::from_ns(t.as_ns() - t.as_ns() % self.window.as_ns())
    }

    /// First window boundary at or after `t`.
    pub fn next_epoch_at_or_after(&self, t: SimTime) -> SimTime {
        let w = self.window.as_ns();
        SimTime::from_ns(t.as_ns().div_ceil(w) * w)
    }

    /// Slot index containing `t`, or `None` in the trailing guard interval.
    pub fn slot_index_at(&self, t: SimTime) -> Option<u16> {
        let offset = (t - self.epoch_of(t)).as_ns() / self.slot_len.as_ns();
        (offset < self.slot_count() as u64).then_some(offset as u16)
    }
}

/// Uniform start offset that keeps a control frame of airtime `tx` inside
/// one slot: a draw from `[0, slot_len - tx]`.
pub fn announce_offset(
    rng: &mut SimRng,
    cfg: &WindowConfig,
    tx: SimTime,
) -> Result<SimTime, ScheduleError> {
    let slack = cfg
        .slot_len
        .checked_sub(tx)
        .ok_or(ScheduleError::ControlFrameTooLong {
            tx,
            slot_len: cfg.slot_len,
        })?;
    Ok(rng.uniform(SimTime::ZERO, slack))
}

/// Kind of vehicle, used to order admission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum NodeType {
    #[default]
    Car,
    Emergency,
}

impl NodeType {
    pub fn code(self) -> u8 {
        match self {
            NodeType::Car => 0,
            NodeType::Emergency => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<NodeType> {
        match code {
            0 => Some(NodeType::Car),
            1 => Some(NodeType::Emergency),
            _ => None,
        }
    }

    /// Lower ranks are admitted first.
    fn admission_rank(self) -> u8 {
        match self {
            NodeType::Emergency => 0,
            NodeType::Car => 1,
        }
    }
}

/// A contiguous run of slot indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotRange {
    pub start: u16,
    pub count: u16,
}

impl SlotRange {
    pub fn contains(&self, index: u16) -> bool {
        index >= self.start && index - self.start < self.count
    }

    pub fn indices(&self) -> impl Iterator<Item = u16> {
        self.start..self.start + self.count
    }

    fn end(&self) -> u16 {
        self.start + self.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinRequest {
    pub vehicle: VehicleId,
    pub slots_requested: u8,
    pub node_type: NodeType,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SlotSchedule {
    config: WindowConfig,
    assignments: BTreeMap<VehicleId, SlotRange>,
    epoch: SimTime,
}

/// Result of one admission round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Admission {
    pub admitted: Vec<VehicleId>,
    pub rejected: Vec<VehicleId>,
}

impl SlotSchedule {
    pub fn new(config: WindowConfig, epoch: SimTime) -> Self {
        SlotSchedule {
            config,
            assignments: BTreeMap::new(),
            epoch,
        }
    }

    pub fn from_assignments(
        config: WindowConfig,
        epoch: SimTime,
        assignments: BTreeMap<VehicleId, SlotRange>,
    ) -> Self {
        SlotSchedule {
            config,
            assignments,
            epoch,
        }
    }

    pub fn config(&self) -> &WindowConfig {
        &self.config
    }

    pub fn epoch(&self) -> SimTime {
        self.epoch
    }

    pub fn set_epoch(&mut self, epoch: SimTime) {
        self.epoch = epoch;
    }

    pub fn assignments(&self) -> &BTreeMap<VehicleId, SlotRange> {
        &self.assignments
    }

    pub fn get(&self, vehicle: VehicleId) -> Option<SlotRange> {
        self.assignments.get(&vehicle).copied()
    }

    pub fn members(&self) -> usize {
        self.assignments.len()
    }

    pub fn owner_of(&self, index: u16) -> Option<VehicleId> {
        self.assignments
            .iter()
            .find(|(_, r)| r.contains(index))
            .map(|(v, _)| *v)
    }

    pub fn free_slots(&self) -> u16 {
        let used: u16 = self.assignments.values().map(|r| r.count).sum();
        self.config.data_slots() - used
    }

    /// Lowest free run starting at or after the first data slot, at most
    /// `want` long.
    fn lowest_free_run(&self, want: u16) -> Option<SlotRange> {
        let mut taken: Vec<SlotRange> = self.assignments.values().copied().collect();
        taken.sort_by_key(|r| r.start);
        let mut cursor = FIRST_DATA_SLOT;
        let limit = self.config.slot_count();
        for r in taken.iter().chain(std::iter::once(&SlotRange {
            start: limit,
            count: 0,
        })) {
            if r.start > cursor {
                let count = want.min(r.start - cursor);
                return Some(SlotRange {
                    start: cursor,
                    count,
                });
            }
            cursor = cursor.max(r.end());
        }
        None
    }

    /// Admit requests in the given order. Vehicles already holding slots
    /// keep them; a vehicle granted zero slots is rejected.
    pub fn admit(&mut self, requests: &[JoinRequest]) -> Admission {
        let mut out = Admission::default();
        for req in requests {
            if self.assignments.contains_key(&req.vehicle) {
                continue;
            }
            let want = req.slots_requested as u16;
            match self.lowest_free_run(want).filter(|r| r.count > 0) {
                Some(range) => {
                    self.assignments.insert(req.vehicle, range);
                    out.admitted.push(req.vehicle);
                }
                None => out.rejected.push(req.vehicle),
            }
        }
        out
    }

    pub fn remove(&mut self, vehicle: VehicleId) -> Option<SlotRange> {
        self.assignments.remove(&vehicle)
    }

    /// Check the structural invariants: no control slots handed out,
    /// pairwise-disjoint assignments, every index inside the window.
    pub fn validate(&self) -> Result<(), String> {
        let mut owner = vec![None; self.config.slot_count() as usize];
        for (v, r) in &self.assignments {
            if r.count == 0 {
                return Err(format!("vehicle {v} holds an empty range"));
            }
            for i in r.indices() {
                if i < FIRST_DATA_SLOT {
                    return Err(format!("vehicle {v} holds control slot {i}"));
                }
                let Some(cell) = owner.get_mut(i as usize) else {
                    return Err(format!("vehicle {v} holds out-of-range slot {i}"));
                };
                if let Some(other) = cell.replace(*v) {
                    return Err(format!("slot {i} held by both {other} and {v}"));
                }
            }
        }
        Ok(())
    }
}

/// Admission order used by the master: emergency vehicles first, then by id.
pub fn admission_order(requests: &mut [JoinRequest]) {
    requests.sort_by_key(|r| (r.node_type.admission_rank(), r.vehicle));
}

/// Build a fresh schedule for `requests` under the default policy.
pub fn allocate(requests: &[JoinRequest], cfg: WindowConfig, epoch: SimTime) -> (SlotSchedule, Admission) {
    let mut ordered = requests.to_vec();
    admission_order(&mut ordered);
    let mut schedule = SlotSchedule::new(cfg, epoch);
    let admission = schedule.admit(&ordered);
    (schedule, admission)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RngStreams;

    fn cfg(window_ms: u64, slot_ms: u64) -> WindowConfig {
        WindowConfig::new(SimTime::from_ms(window_ms), SimTime::from_ms(slot_ms)).unwrap()
    }

    fn req(vehicle: VehicleId, slots: u8) -> JoinRequest {
        JoinRequest {
            vehicle,
            slots_requested: slots,
            node_type: NodeType::Car,
        }
    }

    #[test]
    fn slot_counts() {
        assert_eq!(cfg(100, 10).slot_count(), 10);
        assert_eq!(cfg(100, 2).slot_count(), 50);
        assert_eq!(cfg(100, 1).slot_count(), 100);
    }

    #[test]
    fn non_divisor_slot_leaves_trailing_guard() {
        let c = cfg(100, 3);
        assert_eq!(c.slot_count(), 33);
        assert_eq!(c.slot_index_at(SimTime::from_ms(98)), Some(32));
        assert_eq!(c.slot_index_at(SimTime::from_ms(99)), None);
    }

    #[test]
    fn degenerate_window_rejected() {
        assert!(matches!(
            WindowConfig::new(SimTime::from_ms(2), SimTime::from_ms(2)),
            Err(ScheduleError::TooFewSlots { slots: 1, .. })
        ));
        assert!(WindowConfig::new(SimTime::from_ms(6), SimTime::from_ms(2)).is_ok());
        assert_eq!(
            WindowConfig::new(SimTime::from_ms(6), SimTime::ZERO),
            Err(ScheduleError::ZeroSlot)
        );
    }

    #[test]
    fn slot_origins() {
        let c = cfg(100, 2);
        assert_eq!(c.slot_origin(SimTime::ZERO, 0), SimTime::ZERO);
        assert_eq!(c.slot_origin(SimTime::from_ms(100), 2), SimTime::from_ms(104));
        assert_eq!(c.slot_origin(SimTime::ZERO, 49), SimTime::from_ms(98));
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn slot_origin_out_of_range_faults() {
        cfg(100, 2).slot_origin(SimTime::ZERO, 50);
    }

    #[test]
    fn epoch_helpers() {
        let c = cfg(100, 2);
        assert_eq!(c.epoch_of(SimTime::from_ms(250)), SimTime::from_ms(200));
        assert_eq!(c.next_epoch_at_or_after(SimTime::from_ms(200)), SimTime::from_ms(200));
        assert_eq!(c.next_epoch_at_or_after(SimTime::from_ns(200_000_001)), SimTime::from_ms(300));
    }

    #[test]
    fn announce_offset_bounds() {
        let mut rng = RngStreams::new(1).stream(0);
        let c2 = cfg(100, 2);
        assert_eq!(
            announce_offset(&mut rng, &c2, SimTime::from_ms(2)).unwrap(),
            SimTime::ZERO
        );
        let c3 = cfg(99, 3);
        for _ in 0..1000 {
            let o = announce_offset(&mut rng, &c3, SimTime::from_ms(1)).unwrap();
            assert!(o <= SimTime::from_ms(2));
        }
        assert!(matches!(
            announce_offset(&mut rng, &c2, SimTime::from_ms(3)),
            Err(ScheduleError::ControlFrameTooLong { .. })
        ));
    }

    #[test]
    fn three_single_slot_requests() {
        let (s, a) = allocate(&[req(7, 1), req(3, 1), req(5, 1)], cfg(100, 2), SimTime::ZERO);
        assert!(a.rejected.is_empty());
        assert_eq!(s.get(3), Some(SlotRange { start: 2, count: 1 }));
        assert_eq!(s.get(5), Some(SlotRange { start: 3, count: 1 }));
        assert_eq!(s.get(7), Some(SlotRange { start: 4, count: 1 }));
    }

    #[test]
    fn multi_slot_request() {
        let (s, _) = allocate(&[req(1, 2), req(2, 1)], cfg(100, 2), SimTime::ZERO);
        assert_eq!(s.get(1).unwrap().indices().collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(s.get(2).unwrap().indices().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn capacity_overflow_rejects_later_requesters() {
        let reqs: Vec<_> = (0..60).map(|v| req(v, 1)).collect();
        let (s, a) = allocate(&reqs, cfg(100, 2), SimTime::ZERO);
        assert_eq!(a.admitted.len(), 48);
        assert_eq!(a.rejected.len(), 12);
        assert_eq!(a.rejected, (48..60).collect::<Vec<_>>());
        assert_eq!(s.free_slots(), 0);
        s.validate().unwrap();
    }

    #[test]
    fn partial_grant_when_nearly_full() {
        let c = WindowConfig::new(SimTime::from_ms(10), SimTime::from_ms(2)).unwrap();
        let (s, a) = allocate(&[req(1, 2), req(2, 3)], c, SimTime::ZERO);
        assert_eq!(a.admitted, vec![1, 2]);
        assert_eq!(s.get(2), Some(SlotRange { start: 4, count: 1 }));
    }

    #[test]
    fn emergency_vehicles_first() {
        let mut reqs = vec![req(1, 1), req(2, 1)];
        reqs[1].node_type = NodeType::Emergency;
        let (s, _) = allocate(&reqs, cfg(100, 2), SimTime::ZERO);
        assert_eq!(s.get(2).unwrap().start, 2);
        assert_eq!(s.get(1).unwrap().start, 3);
    }

    #[test]
    fn zero_slot_request_rejected() {
        let (_, a) = allocate(&[req(1, 0)], cfg(100, 2), SimTime::ZERO);
        assert_eq!(a.rejected, vec![1]);
    }

    #[test]
    fn newcomer_gets_lowest_free_index() {
        let (mut s, _) = allocate(&[req(1, 1), req(2, 1), req(3, 1)], cfg(100, 2), SimTime::ZERO);
        let a = s.admit(&[req(9, 1)]);
        assert_eq!(a.admitted, vec![9]);
        assert_eq!(s.get(9).unwrap().start, 5);
        s.remove(2);
        s.admit(&[req(10, 1)]);
        assert_eq!(s.get(10).unwrap().start, 3);
        s.validate().unwrap();
    }

    #[test]
    fn full_schedule_rejects_newcomer() {
        let c = WindowConfig::new(SimTime::from_ms(8), SimTime::from_ms(2)).unwrap();
        let (mut s, _) = allocate(&[req(1, 1), req(2, 1)], c, SimTime::ZERO);
        assert_eq!(s.admit(&[req(3, 1)]).rejected, vec![3]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn allocations_stay_valid(
                slot_ms in 1u64..6,
                rounds in proptest::collection::vec(
                    proptest::collection::vec((0u32..80, 0u8..4, any::<bool>()), 0..12), 1..6),
            ) {
                let c = cfg(100, slot_ms);
                let mut s = SlotSchedule::new(c, SimTime::ZERO);
                for round in rounds {
                    let mut reqs: Vec<_> = round.iter().map(|(v, n, e)| JoinRequest {
                        vehicle: *v,
                        slots_requested: *n,
                        node_type: if *e { NodeType::Emergency } else { NodeType::Car },
                    }).collect();
                    reqs.sort_by_key(|r| r.vehicle);
                    reqs.dedup_by_key(|r| r.vehicle);
                    admission_order(&mut reqs);
                    let before = s.members();
                    let a = s.admit(&reqs);
                    prop_assert!(s.validate().is_ok(), "{:?}", s.validate());
                    prop_assert_eq!(s.members(), before + a.admitted.len());
                    for r in &reqs {
                        if let Some(range) = s.get(r.vehicle) {
                            prop_assert!(range.count <= r.slots_requested as u16 || !a.admitted.contains(&r.vehicle));
                        }
                    }
                }
            }
        }
    }
}
