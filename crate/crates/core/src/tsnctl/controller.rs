//! Per-vehicle controller.
//!
//! The controller is sans-IO. The owner feeds it timer expiries, received
//! control frames and application messages; it answers with
//! [`CtlAction`]s (timers to arm, frames to hand to the MAC).
//!
//! Window timeline for a participating vehicle:
//!
//! ```text
//! epoch             slot 0 end        slot 1 end
//!   | announce@rand  | allocation@rand |  data slots ...            | next epoch
//! ```
//!
//! A freshly spawned vehicle listens for one full window before its first
//! formation round, which lets it learn about an existing master from that
//! master's periodic allocation.

use std::collections::BTreeSet;

use super::fsm::{step_fsm, FsmAction, FsmEvent, FsmState, IllegalTransition, Role, Status};
use super::queues::{plan_burst, PriorityQueueSet};
use super::schedule::{admission_order, announce_offset, JoinRequest, NodeType, SlotRange, SlotSchedule, WindowConfig};
use super::wire::ControlSizes;
use super::{elect_master, ControlAllocation, ControlAnnounce};
use crate::frame::{Frame, FrameBody, VehicleId};
use crate::kernel::{SimRng, SimTime};
use crate::medium::{tx_duration, RadioConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub window: WindowConfig,
    pub sizes: ControlSizes,
    pub radio: RadioConfig,
    pub priority_classes: usize,
    pub slots_requested: u8,
    /// Windows without hearing the master before an in-platoon slave gives up.
    pub master_lost_windows: u32,
}

impl ControllerConfig {
    pub fn new(window: WindowConfig) -> Self {
        ControllerConfig {
            window,
            sizes: ControlSizes::default(),
            radio: RadioConfig::default(),
            priority_classes: 2,
            slots_requested: 1,
            master_lost_windows: 3,
        }
    }

    fn airtime(&self, bytes: u32) -> SimTime {
        tx_duration(bytes, &self.radio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CtlTimer {
    WindowStart,
    Announce,
    Slot0End,
    Allocation,
    Slot1End,
    SlotOpen(u16),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CtlAction {
    SetTimer { at: SimTime, timer: CtlTimer },
    /// Hand these frames to the MAC, in order.
    Transmit(Vec<Frame>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CtlCounters {
    pub announces: u64,
    pub allocations: u64,
    pub data_sent: u64,
    /// Frames left queued at the end of an owned slot.
    pub deferred: u64,
    /// Bursts whose first frame was longer than the slot.
    pub overruns: u64,
    /// Join requests the master could not satisfy.
    pub rejected: u64,
}

/// One recorded state change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub at: SimTime,
    pub from: FsmState,
    pub event: FsmEvent,
    pub to: FsmState,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Controller {
    id: VehicleId,
    node_type: NodeType,
    cfg: ControllerConfigKey,
    fsm: FsmState,
    epoch: SimTime,
    generated_at: Option<SimTime>,
    heard: Vec<ControlAnnounce>,
    best_master: Option<(SimTime, VehicleId)>,
    assignment: Option<SlotRange>,
    schedule: Option<SlotSchedule>,
    allocation_sent: bool,
    heard_master: bool,
    silent_windows: u32,
    armed_slots: BTreeSet<u16>,
    queues: PriorityQueueSet<Frame>,
    next_control_seq: u64,
    counters: CtlCounters,
    transitions: Vec<Transition>,
}

/// `ControllerConfig` holds floats; the controller keeps a hashable copy of
/// what it needs so whole controller states can be compared and memoized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct ControllerConfigKey {
    window: WindowConfig,
    sizes: ControlSizes,
    data_rate_bps: u64,
    preamble_overhead: SimTime,
    slots_requested: u8,
    master_lost_windows: u32,
}

impl ControllerConfigKey {
    fn airtime(&self, bytes: u32) -> SimTime {
        ControllerConfig {
            window: self.window,
            sizes: self.sizes,
            radio: RadioConfig {
                data_rate_bps: self.data_rate_bps,
                preamble_overhead: self.preamble_overhead,
                ..RadioConfig::default()
            },
            priority_classes: 1,
            slots_requested: self.slots_requested,
            master_lost_windows: self.master_lost_windows,
        }
        .airtime(bytes)
    }
}

type Actions = Result<Vec<CtlAction>, IllegalTransition>;

impl Controller {
    pub fn new(id: VehicleId, node_type: NodeType, cfg: ControllerConfig) -> Self {
        Controller {
            id,
            node_type,
            cfg: ControllerConfigKey {
                window: cfg.window,
                sizes: cfg.sizes,
                data_rate_bps: cfg.radio.data_rate_bps,
                preamble_overhead: cfg.radio.preamble_overhead,
                slots_requested: cfg.slots_requested,
                master_lost_windows: cfg.master_lost_windows,
            },
            fsm: FsmState::INIT,
            epoch: SimTime::ZERO,
            generated_at: None,
            heard: Vec::new(),
            best_master: None,
            assignment: None,
            schedule: None,
            allocation_sent: false,
            heard_master: false,
            silent_windows: 0,
            armed_slots: BTreeSet::new(),
            queues: PriorityQueueSet::new(cfg.priority_classes),
            next_control_seq: 0,
            counters: CtlCounters::default(),
            transitions: Vec::new(),
        }
    }

    pub fn id(&self) -> VehicleId {
        self.id
    }

    pub fn state(&self) -> FsmState {
        self.fsm
    }

    pub fn assignment(&self) -> Option<SlotRange> {
        self.assignment
    }

    /// The schedule this vehicle maintains as master.
    pub fn schedule(&self) -> Option<&SlotSchedule> {
        self.schedule.as_ref()
    }

    pub fn best_master(&self) -> Option<(SimTime, VehicleId)> {
        self.best_master
    }

    pub fn generated_at(&self) -> Option<SimTime> {
        self.generated_at
    }

    pub fn counters(&self) -> CtlCounters {
        self.counters
    }

    pub fn queued(&self) -> usize {
        self.queues.len()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn take_transitions(&mut self) -> Vec<Transition> {
        std::mem::take(&mut self.transitions)
    }

    pub fn window(&self) -> WindowConfig {
        self.cfg.window
    }

    fn key(&self) -> Option<(SimTime, VehicleId)> {
        self.generated_at.map(|t| (t, self.id))
    }

    fn fire(&mut self, at: SimTime, event: FsmEvent) -> Result<Vec<FsmAction>, IllegalTransition> {
        let step = step_fsm(self.fsm, event)?;
        self.transitions.push(Transition {
            at,
            from: self.fsm,
            event,
            to: step.next,
        });
        self.fsm = step.next;
        Ok(step.actions)
    }

    fn timer(at: SimTime, timer: CtlTimer) -> CtlAction {
        CtlAction::SetTimer { at, timer }
    }

    /// Called once when the vehicle appears. Arms the first window start a
    /// full window later.
    pub fn on_spawn(&mut self, now: SimTime) -> Vec<CtlAction> {
        let first = self
            .cfg
            .window
            .next_epoch_at_or_after(now + self.cfg.window.window());
        vec![Self::timer(first, CtlTimer::WindowStart)]
    }

    /// Queue an application message in priority class `class`.
    ///
    /// Panics if `class` is not a configured class.
    pub fn enqueue_app_message(&mut self, frame: Frame, class: usize) {
        self.queues.enqueue(frame, class);
    }

    pub fn on_timer(&mut self, timer: CtlTimer, now: SimTime, rng: &mut SimRng) -> Actions {
        match timer {
            CtlTimer::WindowStart => self.on_window_start(now, rng),
            CtlTimer::Announce => Ok(self.on_announce(now)),
            CtlTimer::Slot0End => self.on_slot0_end(now, rng),
            CtlTimer::Allocation => self.on_allocation(now),
            CtlTimer::Slot1End => self.on_slot1_end(now),
            CtlTimer::SlotOpen(i) => self.on_slot_open(i, now),
        }
    }

    fn on_window_start(&mut self, now: SimTime, rng: &mut SimRng) -> Actions {
        let w = self.cfg.window;
        self.epoch = now;
        self.heard.clear();
        self.allocation_sent = false;
        self.armed_slots.clear();

        if self.fsm.role == Role::Slave && self.fsm.status != Status::Init {
            if self.heard_master {
                self.silent_windows = 0;
            } else {
                self.silent_windows += 1;
            }
        }
        self.heard_master = false;
        if self.silent_windows >= self.cfg.master_lost_windows {
            self.silent_windows = 0;
            self.best_master = None;
            if self.fsm == FsmState::new(Status::InPlatoon, Role::Slave) {
                let actions = self.fire(now, FsmEvent::MasterLost)?;
                self.apply_reset(&actions);
            }
        }

        let mut out = vec![
            Self::timer(now + w.window(), CtlTimer::WindowStart),
            Self::timer(w.slot_origin(now, 1), CtlTimer::Slot0End),
            Self::timer(w.slot_origin(now, 2), CtlTimer::Slot1End),
        ];
        for action in self.fire(now, FsmEvent::WindowStart)? {
            if action == FsmAction::Announce {
                let tx = self.cfg.airtime(self.cfg.sizes.announce_bytes);
                let offset = announce_offset(rng, &w, tx).expect("announce airtime checked at config load");
                out.push(Self::timer(now + offset, CtlTimer::Announce));
            }
        }
        if self.fsm.status == Status::InPlatoon {
            self.arm_own_slots(now, &mut out);
        }
        Ok(out)
    }

    fn arm_own_slots(&mut self, now: SimTime, out: &mut Vec<CtlAction>) {
        let Some(range) = self.assignment else { return };
        let w = self.cfg.window;
        for i in range.indices().filter(|i| *i < w.slot_count()) {
            let at = w.slot_origin(self.epoch, i);
            if at >= now && self.armed_slots.insert(i) {
                out.push(Self::timer(at, CtlTimer::SlotOpen(i)));
            }
        }
    }

    fn on_announce(&mut self, now: SimTime) -> Vec<CtlAction> {
        if self.fsm.status != Status::JoiningPlatoon {
            return Vec::new();
        }
        let generated_at = *self.generated_at.get_or_insert(now);
        let announce = ControlAnnounce {
            sender: self.id,
            generated_at,
            slots_requested: self.cfg.slots_requested,
            node_type: self.node_type,
        };
        self.counters.announces += 1;
        let frame = self.control_frame(self.cfg.sizes.announce_bytes, FrameBody::Announce(announce));
        vec![CtlAction::Transmit(vec![frame])]
    }

    fn control_frame(&mut self, size: u32, body: FrameBody) -> Frame {
        let seq = self.next_control_seq;
        self.next_control_seq += 1;
        Frame {
            sender: self.id,
            priority: 0,
            size_bytes: size,
            generated_at: self.generated_at.unwrap_or(self.epoch),
            sequence: seq,
            body,
        }
    }

    /// Candidates for the election: everything heard this window, our own
    /// announce, and the best master we know of.
    fn elected(&self) -> bool {
        let own = self.generated_at.map(|t| ControlAnnounce {
            sender: self.id,
            generated_at: t,
            slots_requested: self.cfg.slots_requested,
            node_type: self.node_type,
        });
        let known = self.best_master.map(|(t, id)| ControlAnnounce {
            sender: id,
            generated_at: t,
            slots_requested: 0,
            node_type: NodeType::Car,
        });
        let candidates: Vec<&ControlAnnounce> = self.heard.iter().chain(own.iter()).chain(known.iter()).collect();
        elect_master(candidates) == Some(self.id)
    }

    fn on_slot0_end(&mut self, now: SimTime, rng: &mut SimRng) -> Actions {
        let elected = match self.fsm.status {
            Status::Init => return Ok(Vec::new()),
            Status::JoiningPlatoon => self.elected(),
            Status::InPlatoon if self.fsm.role == Role::Master => true,
            Status::InPlatoon => return Ok(Vec::new()),
        };
        let mut out = Vec::new();
        for action in self.fire(now, FsmEvent::Slot0End { elected })? {
            if action == FsmAction::SendAllocation {
                let members = self.schedule.as_ref().map_or(0, |s| s.members()) + self.heard.len() + 1;
                let tx = self.cfg.airtime(self.cfg.sizes.allocation_bytes(members));
                let w = self.cfg.window;
                let offset = announce_offset(rng, &w, tx).unwrap_or(SimTime::ZERO);
                out.push(Self::timer(now + offset, CtlTimer::Allocation));
            }
        }
        Ok(out)
    }

    fn own_request(&self) -> JoinRequest {
        JoinRequest {
            vehicle: self.id,
            slots_requested: self.cfg.slots_requested,
            node_type: self.node_type,
        }
    }

    fn on_allocation(&mut self, now: SimTime) -> Actions {
        if self.fsm.role != Role::Master || self.fsm.status == Status::Init {
            return Ok(Vec::new());
        }
        let w = self.cfg.window;
        let own = self.own_request();
        let schedule = self
            .schedule
            .get_or_insert_with(|| SlotSchedule::new(w, self.epoch));
        schedule.set_epoch(self.epoch);
        let mut requests: Vec<JoinRequest> = self
            .heard
            .iter()
            .filter(|a| schedule.get(a.sender).is_none())
            .map(|a| JoinRequest {
                vehicle: a.sender,
                slots_requested: a.slots_requested,
                node_type: a.node_type,
            })
            .collect();
        requests.sort_by_key(|r| r.vehicle);
        requests.dedup_by_key(|r| r.vehicle);
        admission_order(&mut requests);
        // the master itself goes first
        let mut admission = schedule.admit(&[own]);
        let others = schedule.admit(&requests);
        admission.admitted.extend(others.admitted);
        admission.rejected.extend(others.rejected);
        self.counters.rejected += admission.rejected.len() as u64;
        let neighbors = schedule.assignments().keys().any(|v| *v != self.id);

        if !neighbors {
            self.schedule = None;
            self.assignment = None;
            let actions = self.fire(now, FsmEvent::NoNeighbors)?;
            debug_assert!(actions.contains(&FsmAction::RetryNextWindow));
            return Ok(Vec::new());
        }

        let schedule = self.schedule.clone().expect("schedule built above");
        self.assignment = schedule.get(self.id);
        let allocation = ControlAllocation {
            master: self.id,
            master_generated_at: self.generated_at.expect("master has announced"),
            schedule,
        };
        let size = self.cfg.sizes.allocation_bytes(allocation.schedule.members());
        let alloc_tx = self.cfg.airtime(size);
        let frame = self.control_frame(size, FrameBody::Allocation(allocation));
        self.allocation_sent = true;
        self.counters.allocations += 1;

        let mut frames = vec![frame];
        let slot1_end = w.slot_origin(self.epoch, 2);
        let available = slot1_end.saturating_sub(now + alloc_tx);
        let airtime = |f: &Frame| self.cfg.airtime(f.size_bytes);
        let burst = plan_burst(&mut self.queues, available, false, airtime);
        self.counters.data_sent += burst.items.len() as u64;
        frames.extend(burst.items.into_iter().map(|(_, f)| f));

        let mut out = vec![CtlAction::Transmit(frames)];
        self.arm_own_slots(now, &mut out);
        Ok(out)
    }

    fn on_slot1_end(&mut self, now: SimTime) -> Actions {
        let holds_slot = match (self.fsm.status, self.fsm.role) {
            (Status::Init, _) => return Ok(Vec::new()),
            (_, Role::Master) => self.allocation_sent,
            (_, Role::Slave) => self.assignment.is_some(),
        };
        for action in self.fire(now, FsmEvent::Slot1End { holds_slot })? {
            if action == FsmAction::RetryNextWindow {
                self.assignment = None;
                if self.fsm.role == Role::Master {
                    self.schedule = None;
                }
            }
        }
        Ok(Vec::new())
    }

    fn on_slot_open(&mut self, index: u16, now: SimTime) -> Actions {
        let owns = self.assignment.is_some_and(|r| r.contains(index));
        if !owns || self.fsm.status == Status::Init {
            return Ok(Vec::new());
        }
        let actions = self.fire(now, FsmEvent::OwnSlotTrigger)?;
        if !actions.contains(&FsmAction::TransmitBurst) {
            return Ok(Vec::new());
        }
        let w = self.cfg.window;
        let slot_end = self.epoch + w.slot_len() * (index as u64 + 1);
        let available = slot_end.saturating_sub(now);
        let cfg = self.cfg;
        let burst = plan_burst(&mut self.queues, available, true, |f: &Frame| cfg.airtime(f.size_bytes));
        if burst.overrun {
            self.counters.overruns += 1;
        }
        self.counters.deferred += burst.deferred as u64;
        self.counters.data_sent += burst.items.len() as u64;
        if burst.items.is_empty() {
            return Ok(Vec::new());
        }
        Ok(vec![CtlAction::Transmit(
            burst.items.into_iter().map(|(_, f)| f).collect(),
        )])
    }

    fn apply_reset(&mut self, actions: &[FsmAction]) {
        if actions.contains(&FsmAction::Reset) {
            self.assignment = None;
            self.schedule = None;
            self.armed_slots.clear();
            if self.fsm.status == Status::Init {
                self.generated_at = None;
                self.best_master = None;
            }
        }
    }

    /// A control frame arrived intact.
    pub fn on_receive(&mut self, frame: &Frame, now: SimTime) -> Actions {
        match &frame.body {
            FrameBody::Data => Ok(Vec::new()),
            FrameBody::Announce(a) => {
                if a.sender != self.id {
                    match self.heard.iter_mut().find(|h| h.sender == a.sender) {
                        Some(h) => *h = a.clone(),
                        None => {
                            self.heard.push(a.clone());
                            self.heard.sort_by_key(|h| h.sender);
                        }
                    }
                }
                Ok(Vec::new())
            }
            FrameBody::Allocation(alloc) => self.on_allocation_received(alloc, now),
        }
    }

    fn on_allocation_received(&mut self, alloc: &ControlAllocation, now: SimTime) -> Actions {
        let key = alloc.master_key();
        if self.best_master.is_none_or(|best| key < best) {
            self.best_master = Some(key);
        }
        if self.best_master != Some(key) {
            return Ok(Vec::new());
        }
        self.heard_master = true;
        if self.fsm.status == Status::Init {
            return Ok(Vec::new());
        }
        if self.fsm.role == Role::Master && self.key().is_some_and(|own| own < key) {
            // we outrank this master; it will step down when it hears us
            return Ok(Vec::new());
        }
        let mine = alloc.schedule.get(self.id);
        let actions = self.fire(now, FsmEvent::AllocationReceived { includes_self: mine.is_some() })?;
        self.apply_reset(&actions);
        let mut out = Vec::new();
        if actions.contains(&FsmAction::AdoptAssignment) {
            self.schedule = None;
            if self.assignment != mine {
                self.armed_slots.clear();
            }
            self.assignment = mine;
            self.arm_own_slots(now, &mut out);
        } else if self.fsm.status == Status::JoiningPlatoon {
            self.assignment = None;
            self.schedule = None;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RngStreams;

    fn cfg() -> ControllerConfig {
        ControllerConfig::new(WindowConfig::new(SimTime::from_ms(100), SimTime::from_ms(2)).unwrap())
    }

    fn timers(actions: &[CtlAction]) -> Vec<(SimTime, CtlTimer)> {
        actions
            .iter()
            .filter_map(|a| match a {
                CtlAction::SetTimer { at, timer } => Some((*at, *timer)),
                _ => None,
            })
            .collect()
    }

    fn frames(actions: &[CtlAction]) -> Vec<Frame> {
        actions
            .iter()
            .flat_map(|a| match a {
                CtlAction::Transmit(f) => f.clone(),
                _ => Vec::new(),
            })
            .collect()
    }

    #[test]
    fn first_window_is_one_full_window_after_spawn() {
        let mut c = Controller::new(0, NodeType::Car, cfg());
        assert_eq!(timers(&c.on_spawn(SimTime::ZERO)), vec![(SimTime::from_ms(100), CtlTimer::WindowStart)]);
        let mut c = Controller::new(1, NodeType::Car, cfg());
        assert_eq!(
            timers(&c.on_spawn(SimTime::from_ms(1))),
            vec![(SimTime::from_ms(200), CtlTimer::WindowStart)]
        );
    }

    #[test]
    fn window_start_schedules_announce_inside_slot0() {
        let mut c = Controller::new(0, NodeType::Car, cfg());
        let mut rng = RngStreams::new(1).stream(0);
        let epoch = SimTime::from_ms(100);
        let out = c.on_timer(CtlTimer::WindowStart, epoch, &mut rng).unwrap();
        assert_eq!(c.state().status, Status::JoiningPlatoon);
        let t = timers(&out);
        let (at, _) = t.iter().find(|(_, k)| *k == CtlTimer::Announce).unwrap();
        let tx = tx_duration(100, &RadioConfig::default());
        assert!(*at >= epoch && *at + tx <= epoch + SimTime::from_ms(2));
    }

    #[test]
    fn announce_timestamp_is_stable_across_retries() {
        let mut c = Controller::new(0, NodeType::Car, cfg());
        let mut rng = RngStreams::new(1).stream(0);
        let mut stamps = Vec::new();
        for w in 1..4u64 {
            let epoch = SimTime::from_ms(100 * w);
            c.on_timer(CtlTimer::WindowStart, epoch, &mut rng).unwrap();
            let out = c.on_timer(CtlTimer::Announce, epoch + SimTime::from_us(10 * w), &mut rng).unwrap();
            match &frames(&out)[0].body {
                FrameBody::Announce(a) => stamps.push(a.generated_at),
                other => panic!("{other:?}"),
            }
            c.on_timer(CtlTimer::Slot0End, epoch + SimTime::from_ms(2), &mut rng).unwrap();
            let out = c.on_timer(CtlTimer::Allocation, epoch + SimTime::from_ms(2), &mut rng).unwrap();
            assert!(out.is_empty(), "lone master sends nothing");
            c.on_timer(CtlTimer::Slot1End, epoch + SimTime::from_ms(4), &mut rng).unwrap();
            assert_eq!(c.state(), FsmState::new(Status::JoiningPlatoon, Role::Master));
        }
        assert!(stamps.iter().all(|t| *t == stamps[0]));
    }

    #[test]
    fn two_vehicle_formation() {
        let mut rng = RngStreams::new(1).stream(0);
        let mut a = Controller::new(0, NodeType::Car, cfg());
        let mut b = Controller::new(1, NodeType::Car, cfg());
        let epoch = SimTime::from_ms(100);
        a.on_timer(CtlTimer::WindowStart, epoch, &mut rng).unwrap();
        b.on_timer(CtlTimer::WindowStart, epoch, &mut rng).unwrap();
        let fa = frames(&a.on_timer(CtlTimer::Announce, epoch + SimTime::from_us(5), &mut rng).unwrap());
        let fb = frames(&b.on_timer(CtlTimer::Announce, epoch + SimTime::from_us(300), &mut rng).unwrap());
        b.on_receive(&fa[0], epoch + SimTime::from_us(200)).unwrap();
        a.on_receive(&fb[0], epoch + SimTime::from_us(500)).unwrap();
        let s0 = epoch + SimTime::from_ms(2);
        a.on_timer(CtlTimer::Slot0End, s0, &mut rng).unwrap();
        b.on_timer(CtlTimer::Slot0End, s0, &mut rng).unwrap();
        assert_eq!(a.state().role, Role::Master);
        assert_eq!(b.state().role, Role::Slave);
        let out = a.on_timer(CtlTimer::Allocation, s0 + SimTime::from_us(10), &mut rng).unwrap();
        let alloc = frames(&out);
        assert_eq!(alloc.len(), 1);
        let out_b = b.on_receive(&alloc[0], s0 + SimTime::from_us(200)).unwrap();
        assert_eq!(b.assignment(), Some(SlotRange { start: 3, count: 1 }));
        assert_eq!(a.assignment(), Some(SlotRange { start: 2, count: 1 }));
        assert!(timers(&out_b).contains(&(epoch + SimTime::from_ms(6), CtlTimer::SlotOpen(3))));
        let s1 = epoch + SimTime::from_ms(4);
        a.on_timer(CtlTimer::Slot1End, s1, &mut rng).unwrap();
        b.on_timer(CtlTimer::Slot1End, s1, &mut rng).unwrap();
        assert_eq!(a.state(), FsmState::new(Status::InPlatoon, Role::Master));
        assert_eq!(b.state(), FsmState::new(Status::JoiningPlatoon, Role::Slave));
        b.on_timer(CtlTimer::SlotOpen(3), epoch + SimTime::from_ms(6), &mut rng).unwrap();
        assert_eq!(b.state(), FsmState::new(Status::InPlatoon, Role::Slave));
    }

    #[test]
    fn slot_burst_respects_priorities() {
        let mut c = Controller::new(0, NodeType::Car, cfg());
        c.fsm = FsmState::new(Status::InPlatoon, Role::Slave);
        c.assignment = Some(SlotRange { start: 2, count: 1 });
        c.epoch = SimTime::ZERO;
        c.enqueue_app_message(Frame::data(0, 1, 200, SimTime::ZERO, 1), 1);
        c.enqueue_app_message(Frame::data(0, 0, 200, SimTime::ZERO, 2), 0);
        let mut rng = RngStreams::new(1).stream(0);
        let out = c.on_timer(CtlTimer::SlotOpen(2), SimTime::from_ms(4), &mut rng).unwrap();
        let seqs: Vec<_> = frames(&out).iter().map(|f| f.sequence).collect();
        assert_eq!(seqs, vec![2, 1]);
    }

    #[test]
    fn slave_reverts_to_init_after_silent_windows() {
        let mut c = Controller::new(0, NodeType::Car, cfg());
        c.fsm = FsmState::new(Status::InPlatoon, Role::Slave);
        c.assignment = Some(SlotRange { start: 3, count: 1 });
        c.best_master = Some((SimTime::ZERO, 7));
        let mut rng = RngStreams::new(1).stream(0);
        for w in 1..=3u64 {
            c.on_timer(CtlTimer::WindowStart, SimTime::from_ms(100 * w), &mut rng).unwrap();
        }
        // third silent window: master lost, then a fresh formation round begins
        let t = c.transitions();
        assert!(t.iter().any(|t| t.event == FsmEvent::MasterLost && t.to == FsmState::INIT));
        assert_eq!(c.state().status, Status::JoiningPlatoon);
        assert_eq!(c.best_master(), None);
        assert_eq!(c.assignment(), None);
    }
}
