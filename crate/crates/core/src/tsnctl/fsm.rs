//! Platoon-formation state machine.
//!
//! A node's state is its status (`init`, `joining_platoon`, `in_platoon`)
//! paired with its role (`slave`, `master`). [`step_fsm`] is the complete
//! transition function; any event not accepted in the current state is
//! reported as [`IllegalTransition`].
//!
//! Formation steps:
//!
//! | step | edge                                   | trigger                                    |
//! |------|----------------------------------------|--------------------------------------------|
//! | 1    | joining → joining/slave                | another node holds the earliest timestamp  |
//! | 2    | joining → joining/master               | this node holds the earliest timestamp     |
//! | 3    | joining/slave → joining/slave          | no allocation for us by the end of slot 1  |
//! | 4    | joining/master → joining/master        | no neighbor to form a platoon with         |
//! | 5    | joining/master → joining/slave         | an earlier master shows up                 |
//! | 6    | joining/slave → in_platoon/slave       | own slot opens after a valid allocation    |
//! | 7    | joining/master → in_platoon/master     | allocation sent with at least one neighbor |
//!
//! Three further edges cover situations the formation steps leave open:
//! an in-platoon master that hears an earlier master steps down to
//! joining/slave, an in-platoon slave left out of its master's allocation
//! rejoins, and a slave that hears no master for several windows goes back
//! to init.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Init,
    JoiningPlatoon,
    InPlatoon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Slave,
    Master,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FsmState {
    pub status: Status,
    pub role: Role,
}

impl FsmState {
    pub const INIT: FsmState = FsmState::new(Status::Init, Role::Slave);

    pub const fn new(status: Status, role: Role) -> Self {
        FsmState { status, role }
    }

    const fn joining(role: Role) -> Self {
        FsmState::new(Status::JoiningPlatoon, role)
    }

    const fn in_platoon(role: Role) -> Self {
        FsmState::new(Status::InPlatoon, role)
    }
}

impl Default for FsmState {
    fn default() -> Self {
        FsmState::INIT
    }
}

impl fmt::Display for FsmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match self.status {
            Status::Init => return f.write_str("init/-"),
            Status::JoiningPlatoon => "joining_platoon",
            Status::InPlatoon => "in_platoon",
        };
        let role = match self.role {
            Role::Slave => "slave",
            Role::Master => "master",
        };
        write!(f, "{status}/{role}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsmEvent {
    WindowStart,
    /// Announce slot over; `elected` is true if this node won the election.
    Slot0End { elected: bool },
    /// Allocation slot over. For a slave, `holds_slot` says whether a valid
    /// allocation named it; for a master, whether it allocated to at least
    /// one neighbor.
    Slot1End { holds_slot: bool },
    /// An allocation from the best known master. For a master this means a
    /// master with an earlier timestamp exists.
    AllocationReceived { includes_self: bool },
    OwnSlotTrigger,
    NoNeighbors,
    MasterLost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsmAction {
    /// Send an announce at a random offset inside slot 0.
    Announce,
    /// Send the slot allocation during slot 1.
    SendAllocation,
    /// Give up for this window; retry in the next one.
    RetryNextWindow,
    /// Use the slot assignment carried by the allocation.
    AdoptAssignment,
    /// Transmit queued frames in the slot that just opened.
    TransmitBurst,
    /// Forget platoon membership.
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event {event:?} is not accepted in state {state}")]
pub struct IllegalTransition {
    pub state: FsmState,
    pub event: FsmEvent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub next: FsmState,
    pub actions: Vec<FsmAction>,
}

fn step(next: FsmState, actions: &[FsmAction]) -> Result<Step, IllegalTransition> {
    Ok(Step {
        next,
        actions: actions.to_vec(),
    })
}

/// The transition function.
pub fn step_fsm(state: FsmState, event: FsmEvent) -> Result<Step, IllegalTransition> {
    use FsmAction as A;
    use FsmEvent as E;
    use Role::{Master, Slave};
    use Status::*;

    let illegal = Err(IllegalTransition { state, event });
    match (state.status, state.role, event) {
        (Init, _, E::WindowStart) => step(FsmState::joining(Slave), &[A::Announce]),
        (Init, _, _) => illegal,

        (JoiningPlatoon, role, E::WindowStart) => step(FsmState::joining(role), &[A::Announce]),
        (JoiningPlatoon, _, E::Slot0End { elected: true }) => {
            step(FsmState::joining(Master), &[A::SendAllocation])
        }
        (JoiningPlatoon, _, E::Slot0End { elected: false }) => step(FsmState::joining(Slave), &[]),
        (JoiningPlatoon, Master, E::NoNeighbors) => {
            step(FsmState::joining(Master), &[A::RetryNextWindow])
        }
        (JoiningPlatoon, Master, E::AllocationReceived { includes_self }) => step(
            FsmState::joining(Slave),
            if includes_self { &[A::AdoptAssignment] } else { &[] },
        ),
        (JoiningPlatoon, Master, E::Slot1End { holds_slot: true }) => {
            step(FsmState::in_platoon(Master), &[])
        }
        (JoiningPlatoon, Master, E::Slot1End { holds_slot: false }) => {
            step(FsmState::joining(Master), &[A::RetryNextWindow])
        }
        (JoiningPlatoon, Slave, E::AllocationReceived { includes_self: true }) => {
            step(FsmState::joining(Slave), &[A::AdoptAssignment])
        }
        (JoiningPlatoon, Slave, E::AllocationReceived { includes_self: false }) => {
            step(FsmState::joining(Slave), &[])
        }
        (JoiningPlatoon, Slave, E::Slot1End { holds_slot: true }) => step(FsmState::joining(Slave), &[]),
        (JoiningPlatoon, Slave, E::Slot1End { holds_slot: false }) => {
            step(FsmState::joining(Slave), &[A::RetryNextWindow])
        }
        (JoiningPlatoon, Slave, E::OwnSlotTrigger) => {
            step(FsmState::in_platoon(Slave), &[A::TransmitBurst])
        }
        (JoiningPlatoon, _, _) => illegal,

        (InPlatoon, role, E::WindowStart) => step(FsmState::in_platoon(role), &[]),
        (InPlatoon, role, E::OwnSlotTrigger) => step(FsmState::in_platoon(role), &[A::TransmitBurst]),
        (InPlatoon, role, E::Slot1End { .. }) => step(FsmState::in_platoon(role), &[]),
        (InPlatoon, Master, E::Slot0End { elected: true }) => {
            step(FsmState::in_platoon(Master), &[A::SendAllocation])
        }
        (InPlatoon, Master, E::AllocationReceived { .. }) => {
            step(FsmState::joining(Slave), &[A::Reset, A::RetryNextWindow])
        }
        (InPlatoon, Slave, E::AllocationReceived { includes_self: true }) => {
            step(FsmState::in_platoon(Slave), &[A::AdoptAssignment])
        }
        (InPlatoon, Slave, E::AllocationReceived { includes_self: false }) => {
            step(FsmState::joining(Slave), &[A::Reset, A::RetryNextWindow])
        }
        (InPlatoon, Slave, E::MasterLost) => step(FsmState::INIT, &[A::Reset]),
        (InPlatoon, _, _) => illegal,
    }
}

/// Every (from, to) pair [`step_fsm`] can produce.
pub const EDGES: &[(FsmState, FsmState)] = {
    use Role::{Master, Slave};
    const I: FsmState = FsmState::INIT;
    const JS: FsmState = FsmState::joining(Slave);
    const JM: FsmState = FsmState::joining(Master);
    const PS: FsmState = FsmState::in_platoon(Slave);
    const PM: FsmState = FsmState::in_platoon(Master);
    &[
        (I, JS),
        // steps 1 and 2, re-evaluated every round
        (JS, JS),
        (JS, JM),
        (JM, JM),
        (JM, JS),
        // steps 6 and 7
        (JS, PS),
        (JM, PM),
        (PS, PS),
        (PM, PM),
        (PM, JS),
        (PS, JS),
        (PS, I),
    ]
};

pub fn is_edge(from: FsmState, to: FsmState) -> bool {
    EDGES.contains(&(from, to))
}

#[cfg(test)]
mod tests {
    use super::*;
    use FsmEvent as E;
    use Role::*;
    use Status::*;

    const JS: FsmState = FsmState::new(JoiningPlatoon, Slave);
    const JM: FsmState = FsmState::new(JoiningPlatoon, Master);
    const PS: FsmState = FsmState::new(InPlatoon, Slave);
    const PM: FsmState = FsmState::new(InPlatoon, Master);

    fn all_states() -> Vec<FsmState> {
        vec![FsmState::INIT, JS, JM, PS, PM]
    }

    fn all_events() -> Vec<FsmEvent> {
        vec![
            E::WindowStart,
            E::Slot0End { elected: true },
            E::Slot0End { elected: false },
            E::Slot1End { holds_slot: true },
            E::Slot1End { holds_slot: false },
            E::AllocationReceived { includes_self: true },
            E::AllocationReceived { includes_self: false },
            E::OwnSlotTrigger,
            E::NoNeighbors,
            E::MasterLost,
        ]
    }

    #[test]
    fn init_window_start_begins_joining_with_announce() {
        let s = step_fsm(FsmState::INIT, E::WindowStart).unwrap();
        assert_eq!(s.next.status, JoiningPlatoon);
        assert_eq!(s.actions, vec![FsmAction::Announce]);
    }

    #[test]
    fn election_decides_role() {
        assert_eq!(step_fsm(JS, E::Slot0End { elected: false }).unwrap().next, JS);
        assert_eq!(step_fsm(JS, E::Slot0End { elected: true }).unwrap().next, JM);
    }

    #[test]
    fn lone_master_restarts() {
        let s = step_fsm(JM, E::NoNeighbors).unwrap();
        assert_eq!(s.next, JM);
        assert_eq!(s.actions, vec![FsmAction::RetryNextWindow]);
    }

    #[test]
    fn slave_without_allocation_retries() {
        let s = step_fsm(JS, E::Slot1End { holds_slot: false }).unwrap();
        assert_eq!(s.next, JS);
        assert_eq!(s.actions, vec![FsmAction::RetryNextWindow]);
    }

    #[test]
    fn slave_joins_on_own_slot() {
        let s = step_fsm(JS, E::AllocationReceived { includes_self: true }).unwrap();
        assert_eq!(s.actions, vec![FsmAction::AdoptAssignment]);
        let s = step_fsm(s.next, E::OwnSlotTrigger).unwrap();
        assert_eq!(s.next, PS);
        assert_eq!(s.actions, vec![FsmAction::TransmitBurst]);
    }

    #[test]
    fn master_with_neighbors_forms_platoon() {
        assert_eq!(step_fsm(JM, E::Slot1End { holds_slot: true }).unwrap().next, PM);
    }

    #[test]
    fn master_steps_down_for_earlier_master() {
        assert_eq!(
            step_fsm(JM, E::AllocationReceived { includes_self: false }).unwrap().next,
            JS
        );
        assert_eq!(
            step_fsm(PM, E::AllocationReceived { includes_self: false }).unwrap().next,
            JS
        );
    }

    #[test]
    fn slave_loses_master() {
        assert_eq!(step_fsm(PS, E::MasterLost).unwrap().next, FsmState::INIT);
        assert!(step_fsm(PM, E::MasterLost).is_err());
    }

    #[test]
    fn illegal_events_are_rejected() {
        assert!(step_fsm(FsmState::INIT, E::OwnSlotTrigger).is_err());
        assert!(step_fsm(JS, E::NoNeighbors).is_err());
        assert!(step_fsm(PS, E::Slot0End { elected: true }).is_err());
    }

    #[test]
    fn every_accepted_transition_is_a_listed_edge() {
        let mut used = Vec::new();
        for s in all_states() {
            for e in all_events() {
                if let Ok(step) = step_fsm(s, e) {
                    assert!(is_edge(s, step.next), "{s} --{e:?}--> {}", step.next);
                    used.push((s, step.next));
                }
            }
        }
        for edge in EDGES {
            assert!(used.contains(edge), "edge {} -> {} unreachable", edge.0, edge.1);
        }
    }

    #[test]
    fn display() {
        assert_eq!(FsmState::INIT.to_string(), "init/-");
        assert_eq!(PM.to_string(), "in_platoon/master");
    }
}
