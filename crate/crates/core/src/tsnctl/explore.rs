//! Exhaustive interleaving exploration of the formation protocol.
//!
//! Real [`Controller`]s are driven over a perfect channel: every frame
//! reaches every spawned vehicle intact before the end of the slot it was
//! sent in. Within a control slot, the order of send timers and of
//! individual deliveries is chosen by depth-first search, with memoization
//! on the complete system state and one commutation reduction (see
//! `slot`). Timers pinned to slot boundaries
//! (window start, slot ends, data slot openings) fire at their instants.
//!
//! Each vehicle is assigned a spawn window; every assignment in
//! `0..=max_spawn_window` is explored. A run passes if, on every path, the
//! platoon is formed by the end of the last window and never falls apart
//! once formed, and every state change is a listed FSM edge.

use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;

use super::controller::{Controller, ControllerConfig, CtlAction, CtlTimer};
use super::fsm::{is_edge, FsmState, IllegalTransition, Role, Status};
use super::schedule::{NodeType, WindowConfig};
use crate::frame::{Frame, FrameKind, VehicleId};
use crate::kernel::{RngStreams, SimRng, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreConfig {
    pub vehicles: usize,
    /// Vehicles spawn in windows `0..=max_spawn_window`.
    pub max_spawn_window: u32,
    /// Windows simulated after the last spawn window.
    pub settle_windows: u32,
    pub window: WindowConfig,
    /// Deliver announces eagerly instead of branching on them.
    pub reduce: bool,
}

impl ExploreConfig {
    pub fn new(vehicles: usize) -> Self {
        ExploreConfig {
            vehicles,
            max_spawn_window: 1,
            settle_windows: 6,
            window: WindowConfig::new(SimTime::from_ms(100), SimTime::from_ms(2)).expect("valid window"),
            reduce: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExploreReport {
    pub spawn_patterns: u64,
    /// Distinct states visited, summed over spawn patterns.
    pub states: u64,
    /// Distinct final states, summed over spawn patterns.
    pub final_states: u64,
    /// Latest window, counted from the last spawn, at which some path first
    /// formed the platoon.
    pub worst_windows_to_form: u32,
    pub transitions_checked: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExploreFailure {
    #[error("spawn windows {spawn:?}: {source}")]
    Illegal {
        spawn: Vec<u32>,
        #[source]
        source: IllegalTransition,
    },
    #[error("spawn windows {spawn:?}: vehicle {vehicle} took {from} -> {to}, not an edge")]
    OffEdge {
        spawn: Vec<u32>,
        vehicle: VehicleId,
        from: FsmState,
        to: FsmState,
    },
    #[error("spawn windows {spawn:?}: platoon not formed after window {window}: {detail}")]
    NotFormed { spawn: Vec<u32>, window: u32, detail: String },
    #[error("spawn windows {spawn:?}: platoon fell apart in window {window}: {detail}")]
    Diverged { spawn: Vec<u32>, window: u32, detail: String },
}

/// An event whose position within its slot is chosen by the search.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Free {
    Timer(VehicleId, CtlTimer),
    Deliver(VehicleId, Frame),
}

impl Free {
    /// A control frame is identified by its sender and sequence number.
    fn key(&self) -> (u8, VehicleId, Option<CtlTimer>, VehicleId, u64) {
        match self {
            Free::Timer(v, t) => (0, *v, Some(*t), 0, 0),
            Free::Deliver(r, f) => (1, *r, None, f.sender, f.sequence),
        }
    }
}

impl Ord for Free {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Free {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Node {
    ctls: Vec<Controller>,
    free: BTreeSet<Free>,
    armed: Vec<BTreeSet<u16>>,
    /// Send timers fired so far in the current slot; orders send instants.
    fired: u32,
    formed_at: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Phase {
    Slot0,
    Slot1,
}

struct Search<'a> {
    cfg: &'a ExploreConfig,
    spawn: Vec<u32>,
    rng: SimRng,
    transitions: u64,
}

impl Search<'_> {
    fn epoch(&self, window: u32) -> SimTime {
        self.cfg.window.window() * (window as u64 + 1)
    }

    fn listening(&self, v: usize, window: u32) -> bool {
        self.spawn[v] <= window
    }

    fn active(&self, v: usize, window: u32) -> bool {
        self.spawn[v] < window
    }

    fn check_transitions(&mut self, node: &mut Node, v: usize) -> Result<(), ExploreFailure> {
        for t in node.ctls[v].take_transitions() {
            self.transitions += 1;
            if !is_edge(t.from, t.to) {
                return Err(ExploreFailure::OffEdge {
                    spawn: self.spawn.clone(),
                    vehicle: v as VehicleId,
                    from: t.from,
                    to: t.to,
                });
            }
        }
        Ok(())
    }

    fn apply(
        &mut self,
        node: &mut Node,
        v: usize,
        window: u32,
        actions: Result<Vec<CtlAction>, IllegalTransition>,
    ) -> Result<(), ExploreFailure> {
        let actions = actions.map_err(|source| ExploreFailure::Illegal {
            spawn: self.spawn.clone(),
            source,
        })?;
        self.check_transitions(node, v)?;
        for action in actions {
            match action {
                CtlAction::SetTimer { timer, .. } => match timer {
                    CtlTimer::Announce | CtlTimer::Allocation => {
                        node.free.insert(Free::Timer(v as VehicleId, timer));
                    }
                    CtlTimer::SlotOpen(i) => {
                        node.armed[v].insert(i);
                    }
                    // driven by the search itself
                    CtlTimer::WindowStart | CtlTimer::Slot0End | CtlTimer::Slot1End => {}
                },
                CtlAction::Transmit(frames) => {
                    for frame in frames.into_iter().filter(|f| f.kind().is_control()) {
                        for r in 0..self.cfg.vehicles {
                            if r != v && self.listening(r, window) {
                                node.free.insert(Free::Deliver(r as VehicleId, frame.clone()));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn fire_free(&mut self, node: &mut Node, ev: Free, window: u32, phase: Phase) -> Result<(), ExploreFailure> {
        let base = match phase {
            Phase::Slot0 => self.epoch(window),
            Phase::Slot1 => self.cfg.window.slot_origin(self.epoch(window), 1),
        };
        if matches!(ev, Free::Timer(..)) {
            node.fired += 1;
        }
        let now = base + SimTime::from_us(node.fired as u64);
        match ev {
            Free::Timer(v, timer) => {
                let out = node.ctls[v as usize].on_timer(timer, now, &mut self.rng);
                self.apply(node, v as usize, window, out)
            }
            Free::Deliver(r, frame) => {
                let out = node.ctls[r as usize].on_receive(&frame, now);
                self.apply(node, r as usize, window, out)
            }
        }
    }

    /// All orderings of the free events of one control slot. Returns the
    /// distinct states in which the slot can end.
    fn slot(&mut self, start: Node, window: u32, phase: Phase, seen: &mut u64) -> Result<Vec<Node>, ExploreFailure> {
        let mut visited = HashSet::new();
        let mut ends = HashSet::new();
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            if !visited.insert(node.clone()) {
                continue;
            }
            *seen += 1;
            if node.free.is_empty() {
                let mut end = node;
                end.fired = 0;
                ends.insert(end);
                continue;
            }
            // An announce delivery only adds to the receiver's heard set,
            // which no other event of the slot reads, so it commutes with
            // everything pending and one order suffices.
            let eager = node
                .free
                .iter()
                .find(|ev| matches!(ev, Free::Deliver(_, f) if f.kind() == FrameKind::ControlAnnounce))
                .filter(|_| self.cfg.reduce)
                .cloned();
            let choices: Vec<Free> = match eager {
                Some(ev) => vec![ev],
                None => node.free.iter().cloned().collect(),
            };
            for ev in choices {
                let mut next = node.clone();
                next.free.remove(&ev);
                self.fire_free(&mut next, ev, window, phase)?;
                stack.push(next);
            }
        }
        Ok(ends.into_iter().collect())
    }

    fn barrier(&mut self, node: &mut Node, window: u32, timer: CtlTimer) -> Result<(), ExploreFailure> {
        let at = match timer {
            CtlTimer::WindowStart => self.epoch(window),
            CtlTimer::Slot0End => self.cfg.window.slot_origin(self.epoch(window), 1),
            CtlTimer::Slot1End => self.cfg.window.slot_origin(self.epoch(window), 2),
            other => unreachable!("{other:?} is not a barrier"),
        };
        for v in 0..self.cfg.vehicles {
            if self.active(v, window) {
                if timer == CtlTimer::WindowStart {
                    node.armed[v].clear();
                }
                let out = node.ctls[v].on_timer(timer, at, &mut self.rng);
                self.apply(node, v, window, out)?;
            }
        }
        Ok(())
    }

    fn data_slots(&mut self, node: &mut Node, window: u32) -> Result<(), ExploreFailure> {
        let epoch = self.epoch(window);
        for i in 2..self.cfg.window.slot_count() {
            for v in 0..self.cfg.vehicles {
                if node.armed[v].remove(&i) {
                    let at = self.cfg.window.slot_origin(epoch, i);
                    let out = node.ctls[v].on_timer(CtlTimer::SlotOpen(i), at, &mut self.rng);
                    self.apply(node, v, window, out)?;
                }
            }
        }
        Ok(())
    }

    fn run(&mut self, seen: &mut u64) -> Result<(u64, u32), ExploreFailure> {
        let cfg = self.cfg;
        let ctl_cfg = ControllerConfig::new(cfg.window);
        let start = Node {
            ctls: (0..cfg.vehicles)
                .map(|v| Controller::new(v as VehicleId, NodeType::Car, ctl_cfg))
                .collect(),
            free: BTreeSet::new(),
            armed: vec![BTreeSet::new(); cfg.vehicles],
            fired: 0,
            formed_at: None,
        };
        let last_spawn = *self.spawn.iter().max().expect("at least one vehicle");
        let final_window = last_spawn + 1 + cfg.settle_windows;
        let mut frontier = vec![start];
        let mut worst = 0;
        for window in 0..=final_window {
            let mut next_frontier = HashSet::new();
            for mut node in frontier {
                self.barrier(&mut node, window, CtlTimer::WindowStart)?;
                for mut n in self.slot(node, window, Phase::Slot0, seen)? {
                    self.barrier(&mut n, window, CtlTimer::Slot0End)?;
                    for mut m in self.slot(n, window, Phase::Slot1, seen)? {
                        self.barrier(&mut m, window, CtlTimer::Slot1End)?;
                        self.data_slots(&mut m, window)?;
                        let all_active = (0..cfg.vehicles).all(|v| self.active(v, window));
                        let verdict = if all_active { formed(&m.ctls) } else { Err("not all spawned".into()) };
                        match (verdict, m.formed_at) {
                            (Ok(()), None) => {
                                worst = worst.max(window - last_spawn);
                                m.formed_at = Some(window);
                            }
                            (Err(detail), Some(_)) => {
                                return Err(ExploreFailure::Diverged {
                                    spawn: self.spawn.clone(),
                                    window,
                                    detail,
                                })
                            }
                            (Err(detail), None) if window == final_window => {
                                return Err(ExploreFailure::NotFormed {
                                    spawn: self.spawn.clone(),
                                    window,
                                    detail,
                                })
                            }
                            _ => {}
                        }
                        next_frontier.insert(m);
                    }
                }
            }
            frontier = next_frontier.into_iter().collect();
        }
        Ok((frontier.len() as u64, worst))
    }
}

/// Exactly one in-platoon master whose schedule is valid and covers every
/// vehicle, and every other vehicle an in-platoon slave holding the slots
/// the schedule gives it.
pub fn formed(ctls: &[Controller]) -> Result<(), String> {
    let masters: Vec<&Controller> = ctls
        .iter()
        .filter(|c| c.state() == FsmState::new(Status::InPlatoon, Role::Master))
        .collect();
    let [master] = masters.as_slice() else {
        return Err(format!("{} in-platoon masters", masters.len()));
    };
    let schedule = master.schedule().ok_or("master holds no schedule")?;
    schedule.validate()?;
    for c in ctls {
        if c.state().status != Status::InPlatoon {
            return Err(format!("vehicle {} is {}", c.id(), c.state()));
        }
        let expected = schedule.get(c.id());
        if expected.is_none() || c.assignment() != expected {
            return Err(format!(
                "vehicle {} holds {:?}, schedule says {:?}",
                c.id(),
                c.assignment(),
                expected
            ));
        }
    }
    Ok(())
}

/// Explore every spawn pattern and every interleaving.
pub fn explore(cfg: &ExploreConfig) -> Result<ExploreReport, ExploreFailure> {
    assert!(cfg.vehicles >= 1, "need at least one vehicle");
    let base = cfg.max_spawn_window as u64 + 1;
    let patterns = base.pow(cfg.vehicles as u32);
    let results: Vec<_> = (0..patterns)
        .into_par_iter()
        .map(|code| {
            let spawn: Vec<u32> = (0..cfg.vehicles)
                .map(|v| ((code / base.pow(v as u32)) % base) as u32)
                .collect();
            // relabelling vehicles changes tie-breaks, so every pattern is kept
            let mut search = Search {
                cfg,
                spawn,
                rng: RngStreams::new(0).stream(0),
                transitions: 0,
            };
            let mut seen = 0;
            let (finals, worst) = search.run(&mut seen)?;
            Ok((seen, finals, worst, search.transitions))
        })
        .collect();
    let mut report = ExploreReport::default();
    for r in results {
        let (seen, finals, worst, transitions) = r?;
        report.spawn_patterns += 1;
        report.states += seen;
        report.final_states += finals;
        report.worst_windows_to_form = report.worst_windows_to_form.max(worst);
        report.transitions_checked += transitions;
    }
    Ok(report)
}
