//! Fixed-layout binary encoding of control frames.
//!
//! ```text
//! kind            u8     0 = announce, 1 = allocation
//! sender          u32 BE
//! generated_at    u64 BE (ns)
//! slots_requested u8
//! node_type       u8
//! -- allocation only --
//! member count    u16 BE
//! per member:     vehicle u32 BE, first slot u16 BE, slot count u16 BE
//! -- zero padding up to the declared frame size --
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use super::schedule::{NodeType, SlotRange, SlotSchedule, WindowConfig};
use super::{ControlAllocation, ControlAnnounce};
use crate::kernel::SimTime;

pub const HEADER_LEN: usize = 15;
pub const MEMBER_LEN: usize = 8;

const KIND_ANNOUNCE: u8 = 0;
const KIND_ALLOCATION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("frame truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("unknown node type {0}")]
    UnknownNodeType(u8),
    #[error("encoded length {encoded} exceeds declared frame size {declared}")]
    TooLarge { encoded: usize, declared: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMessage {
    Announce(ControlAnnounce),
    Allocation(ControlAllocation),
}

/// Declared sizes of control frames on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControlSizes {
    pub announce_bytes: u32,
    pub allocation_base_bytes: u32,
    pub allocation_per_member_bytes: u32,
}

impl Default for ControlSizes {
    fn default() -> Self {
        ControlSizes {
            announce_bytes: 100,
            allocation_base_bytes: 100,
            allocation_per_member_bytes: 8,
        }
    }
}

impl ControlSizes {
    pub fn allocation_bytes(&self, members: usize) -> u32 {
        self.allocation_base_bytes + self.allocation_per_member_bytes * members as u32
    }

    pub fn size_of(&self, msg: &ControlMessage) -> u32 {
        match msg {
            ControlMessage::Announce(_) => self.announce_bytes,
            ControlMessage::Allocation(a) => self.allocation_bytes(a.schedule.members()),
        }
    }
}

fn header(out: &mut Vec<u8>, kind: u8, sender: u32, ts: SimTime, slots: u8, node: NodeType) {
    out.push(kind);
    out.extend_from_slice(&sender.to_be_bytes());
    out.extend_from_slice(&ts.as_ns().to_be_bytes());
    out.push(slots);
    out.push(node.code());
}

/// Encode `msg` and zero-pad to `declared` bytes.
pub fn encode(msg: &ControlMessage, declared: usize) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(declared);
    match msg {
        ControlMessage::Announce(a) => header(
            &mut out,
            KIND_ANNOUNCE,
            a.sender,
            a.generated_at,
            a.slots_requested,
            a.node_type,
        ),
        ControlMessage::Allocation(a) => {
            header(
                &mut out,
                KIND_ALLOCATION,
                a.master,
                a.master_generated_at,
                0,
                NodeType::Car,
            );
            let members = a.schedule.assignments();
            out.extend_from_slice(&(members.len() as u16).to_be_bytes());
            for (v, r) in members {
                out.extend_from_slice(&v.to_be_bytes());
                out.extend_from_slice(&r.start.to_be_bytes());
                out.extend_from_slice(&r.count.to_be_bytes());
            }
        }
    }
    if out.len() > declared {
        return Err(WireError::TooLarge {
            encoded: out.len(),
            declared,
        });
    }
    out.resize(declared, 0);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let end = self.pos + N;
        let bytes = self.buf.get(self.pos..end).ok_or(WireError::Truncated {
            need: end,
            have: self.buf.len(),
        })?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice length"))
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take()?))
    }
}

/// Decode a control frame. Allocations are rebuilt against `window` and
/// `epoch`, which every vehicle shares.
pub fn decode(bytes: &[u8], window: WindowConfig, epoch: SimTime) -> Result<ControlMessage, WireError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let kind = r.u8()?;
    let sender = r.u32()?;
    let ts = SimTime::from_ns(r.u64()?);
    let slots_requested = r.u8()?;
    let node_code = r.u8()?;
    let node_type = NodeType::from_code(node_code).ok_or(WireError::UnknownNodeType(node_code))?;
    match kind {
        KIND_ANNOUNCE => Ok(ControlMessage::Announce(ControlAnnounce {
            sender,
            generated_at: ts,
            slots_requested,
            node_type,
        })),
        KIND_ALLOCATION => {
            let n = r.u16()?;
            let mut assignments = BTreeMap::new();
            for _ in 0..n {
                let v = r.u32()?;
                let start = r.u16()?;
                let count = r.u16()?;
                assignments.insert(v, SlotRange { start, count });
            }
            Ok(ControlMessage::Allocation(ControlAllocation {
                master: sender,
                master_generated_at: ts,
                schedule: SlotSchedule::from_assignments(window, epoch, assignments),
            }))
        }
        other => Err(WireError::UnknownKind(other)),
    }
}
