//! Slot-based platoon controller.
//!
//! Time is divided into windows. In every window slot 0 carries announces
//! from vehicles that want to join, slot 1 carries the master's slot
//! allocation, and the remaining slots are data slots owned by platoon
//! members. The vehicle whose announce carries the earliest generation
//! timestamp becomes master.

pub mod controller;
pub mod explore;
pub mod fsm;
pub mod queues;
pub mod schedule;
pub mod wire;

pub use controller::{Controller, ControllerConfig, CtlAction, CtlCounters, CtlTimer};
pub use fsm::{step_fsm, FsmAction, FsmEvent, FsmState, IllegalTransition, Role, Status};
pub use queues::{plan_burst, Burst, PriorityQueueSet};
pub use schedule::{
    allocate, announce_offset, JoinRequest, NodeType, ScheduleError, SlotRange, SlotSchedule,
    WindowConfig,
};

use crate::frame::VehicleId;
use crate::kernel::SimTime;

/// Join request broadcast in slot 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ControlAnnounce {
    pub sender: VehicleId,
    /// When the sender first created an announce in the current formation
    /// round; unchanged across retries.
    pub generated_at: SimTime,
    pub slots_requested: u8,
    pub node_type: NodeType,
}

/// Slot allocation broadcast by the master in slot 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ControlAllocation {
    pub master: VehicleId,
    pub master_generated_at: SimTime,
    pub schedule: SlotSchedule,
}

impl ControlAllocation {
    /// Election key of the sending master.
    pub fn master_key(&self) -> (SimTime, VehicleId) {
        (self.master_generated_at, self.master)
    }
}

/// The sender with the earliest `generated_at`; ties go to the lowest id.
pub fn elect_master<'a>(announces: impl IntoIterator<Item = &'a ControlAnnounce>) -> Option<VehicleId> {
    announces
        .into_iter()
        .min_by_key(|a| (a.generated_at, a.sender))
        .map(|a| a.sender)
}
