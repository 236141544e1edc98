//! Baseline medium access: carrier sense with a fixed contention window.
//!
//! There are no acknowledgments, no retransmissions and no exponential
//! backoff. A frame at the head of the FIFO is sent at once if the medium
//! is idle; otherwise the station waits for the medium to go idle, defers a
//! uniform number of backoff slots in `[0, cw_slots)`, and senses again.
//! If the medium is busy at that point the procedure repeats with a fresh
//! draw from the same window.
//!
//! The MAC is sans-IO: methods take the current time and a [`ChannelSense`]
//! (plus an RNG where a backoff may be drawn), and return at most one [`MacCommand`] for the caller to carry
//! out on the kernel.

use std::collections::VecDeque;

use crate::frame::{Frame, VehicleId};
use crate::kernel::{SimRng, SimTime};
use crate::medium::Medium;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsmaConfig {
    pub cw_slots: u32,
    pub backoff_slot: SimTime,
}

impl Default for CsmaConfig {
    fn default() -> Self {
        CsmaConfig {
            cw_slots: 16,
            backoff_slot: SimTime::from_us(13),
        }
    }
}

pub trait ChannelSense {
    /// `Some(t)` if the medium is busy at `listener`, with `t` the time the
    /// currently sensed signals end.
    fn busy_until(&self, listener: VehicleId, at: SimTime) -> Option<SimTime>;
}

impl ChannelSense for Medium {
    fn busy_until(&self, listener: VehicleId, at: SimTime) -> Option<SimTime> {
        Medium::busy_until(self, listener, at)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacQueueEntry {
    pub frame: Frame,
    pub enqueued_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacState {
    Idle,
    Transmitting,
    /// Waiting for the medium to go idle; a wake-up is pending.
    AwaitIdle,
    /// Backoff drawn; a re-sense is pending.
    Backoff,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MacCommand {
    /// Put this frame on the air now; call [`CsmaMac::on_tx_end`] when it ends.
    Transmit(Frame),
    /// Call [`CsmaMac::on_wake`] at this time.
    WakeAt(SimTime),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacCounters {
    pub submitted: u64,
    pub transmitted: u64,
    pub deferrals: u64,
    pub max_backoff: SimTime,
}

#[derive(Debug, Clone)]
pub struct CsmaMac {
    id: VehicleId,
    cfg: CsmaConfig,
    carrier_sense: bool,
    queue: VecDeque<MacQueueEntry>,
    state: MacState,
    counters: MacCounters,
}

impl CsmaMac {
    pub fn new(id: VehicleId, cfg: CsmaConfig) -> Self {
        assert!(cfg.cw_slots >= 1, "cw_slots must be at least 1");
        assert!(cfg.backoff_slot > SimTime::ZERO, "backoff_slot must be positive");
        CsmaMac {
            id,
            cfg,
            carrier_sense: true,
            queue: VecDeque::new(),
            state: MacState::Idle,
            counters: MacCounters::default(),
        }
    }

    /// A MAC that only serializes the station's own frames and never senses
    /// the medium.
    pub fn without_carrier_sense(id: VehicleId, cfg: CsmaConfig) -> Self {
        CsmaMac {
            carrier_sense: false,
            ..CsmaMac::new(id, cfg)
        }
    }

    pub fn state(&self) -> MacState {
        self.state
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn counters(&self) -> MacCounters {
        self.counters
    }

    pub fn submit(
        &mut self,
        frame: Frame,
        now: SimTime,
        sense: &impl ChannelSense,
    ) -> Option<MacCommand> {
        self.counters.submitted += 1;
        self.queue.push_back(MacQueueEntry {
            frame,
            enqueued_at: now,
        });
        match self.state {
            MacState::Idle => self.serve_head(now, sense),
            _ => None,
        }
    }

    pub fn on_tx_end(&mut self, now: SimTime, sense: &impl ChannelSense) -> Option<MacCommand> {
        debug_assert_eq!(self.state, MacState::Transmitting);
        self.state = MacState::Idle;
        self.serve_head(now, sense)
    }

    /// Timer expiry: either the medium was expected to go idle, or a
    /// backoff finished.
    pub fn on_wake(
        &mut self,
        now: SimTime,
        sense: &impl ChannelSense,
        rng: &mut SimRng,
    ) -> Option<MacCommand> {
        match self.state {
            MacState::AwaitIdle => self.on_medium_idle(now, sense, rng),
            MacState::Backoff => match sense.busy_until(self.id, now) {
                Some(until) => {
                    self.state = MacState::AwaitIdle;
                    Some(MacCommand::WakeAt(until))
                }
                None => Some(self.transmit_head()),
            },
            MacState::Idle | MacState::Transmitting => None,
        }
    }

    fn on_medium_idle(
        &mut self,
        now: SimTime,
        sense: &impl ChannelSense,
        rng: &mut SimRng,
    ) -> Option<MacCommand> {
        if let Some(until) = sense.busy_until(self.id, now) {
            return Some(MacCommand::WakeAt(until));
        }
        let k = rng.below(self.cfg.cw_slots) as u64;
        let backoff = self.cfg.backoff_slot * k;
        self.counters.deferrals += 1;
        self.counters.max_backoff = self.counters.max_backoff.max(backoff);
        if k == 0 {
            return Some(self.transmit_head());
        }
        self.state = MacState::Backoff;
        Some(MacCommand::WakeAt(now + backoff))
    }

    fn serve_head(&mut self, now: SimTime, sense: &impl ChannelSense) -> Option<MacCommand> {
        if self.queue.is_empty() {
            return None;
        }
        if self.carrier_sense {
            if let Some(until) = sense.busy_until(self.id, now) {
                self.state = MacState::AwaitIdle;
                return Some(MacCommand::WakeAt(until));
            }
        }
        Some(self.transmit_head())
    }

    fn transmit_head(&mut self) -> MacCommand {
        let entry = self.queue.pop_front().expect("transmit with empty queue");
        self.state = MacState::Transmitting;
        self.counters.transmitted += 1;
        MacCommand::Transmit(entry.frame)
    }
}
