//! Frames exchanged over the radio medium.

use std::fmt;

use crate::kernel::SimTime;
use crate::tsnctl::{ControlAllocation, ControlAnnounce};

pub type VehicleId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameKind {
    ControlAnnounce,
    ControlAllocation,
    Data,
}

impl FrameKind {
    pub fn is_control(self) -> bool {
        !matches!(self, FrameKind::Data)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::ControlAnnounce => "announce",
            FrameKind::ControlAllocation => "allocation",
            FrameKind::Data => "data",
        }
    }

    pub fn parse(s: &str) -> Option<FrameKind> {
        match s {
            "announce" => Some(FrameKind::ControlAnnounce),
            "allocation" => Some(FrameKind::ControlAllocation),
            "data" => Some(FrameKind::Data),
            _ => None,
        }
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FrameBody {
    Data,
    Announce(ControlAnnounce),
    Allocation(ControlAllocation),
}

/// A message handed to the medium.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub sender: VehicleId,
    /// Priority class; 0 is the highest.
    pub priority: u8,
    pub size_bytes: u32,
    pub generated_at: SimTime,
    pub sequence: u64,
    pub body: FrameBody,
}

impl Frame {
    pub fn data(
        sender: VehicleId,
        priority: u8,
        size_bytes: u32,
        generated_at: SimTime,
        sequence: u64,
    ) -> Frame {
        Frame {
            sender,
            priority,
            size_bytes,
            generated_at,
            sequence,
            body: FrameBody::Data,
        }
    }

    pub fn kind(&self) -> FrameKind {
        match self.body {
            FrameBody::Data => FrameKind::Data,
            FrameBody::Announce(_) => FrameKind::ControlAnnounce,
            FrameBody::Allocation(_) => FrameKind::ControlAllocation,
        }
    }
}
