//! Idealized broadcast channel.
//!
//! Every registered vehicle within `range_m` of a sender receives the frame
//! after its airtime plus propagation delay. There is no attenuation, fading
//! or capture: a reception is lost if and only if another in-range
//! transmission overlaps it at the receiver, or the receiver was itself on
//! the air (half-duplex).
//!
//! Overlap is evaluated on arrival intervals, i.e. the on-air interval
//! shifted by the sender-to-receiver propagation delay.

use crate::frame::{Frame, VehicleId};
use crate::kernel::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    pub range_m: f64,
    pub data_rate_bps: u64,
    pub propagation_mps: f64,
    pub preamble_overhead: SimTime,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            range_m: 100.0,
            data_rate_bps: 6_000_000,
            propagation_mps: 3.0e8,
            preamble_overhead: SimTime::ZERO,
        }
    }
}

impl RadioConfig {
    /// Propagation delay over `distance_m`, rounded up to whole nanoseconds.
    pub fn propagation_delay(&self, distance_m: f64) -> SimTime {
        SimTime::from_ns((distance_m * 1e9 / self.propagation_mps).ceil() as u64)
    }
}

/// Airtime of a frame: preamble plus the payload bits at `data_rate_bps`,
/// rounded up to whole nanoseconds.
pub fn tx_duration(size_bytes: u32, cfg: &RadioConfig) -> SimTime {
    let bits = size_bytes as u128 * 8;
    let rate = cfg.data_rate_bps as u128;
    let ns = (bits * 1_000_000_000).div_ceil(rate);
    cfg.preamble_overhead + SimTime::from_ns(ns as u64)
}

pub type TxId = usize;

#[derive(Debug, Clone)]
pub struct Transmission {
    pub id: TxId,
    pub sender: VehicleId,
    pub frame: Frame,
    pub start: SimTime,
    pub end: SimTime,
    pub origin: Position,
}

/// A pending frame arrival, to be scheduled on the kernel by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub receiver: VehicleId,
    pub tx: TxId,
    pub delivered_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptionOutcome {
    pub receiver: VehicleId,
    pub transmission: TxId,
    pub delivered_at: SimTime,
    pub collided: bool,
}

/// Per-transmission reception bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TxOutcome {
    /// Receivers in range when the transmission started.
    pub receivers: u32,
    pub delivered: u32,
    pub collided: u32,
}

impl TxOutcome {
    pub fn is_complete(&self) -> bool {
        self.delivered == self.receivers
    }
}

#[derive(Debug, Clone, Copy)]
struct Station {
    position: Position,
    registered_at: SimTime,
}

pub struct Medium {
    cfg: RadioConfig,
    stations: Vec<Option<Station>>,
    on_air_until: Vec<SimTime>,
    transmissions: Vec<Transmission>,
    outcomes: Vec<TxOutcome>,
    max_airtime: SimTime,
    max_propagation: SimTime,
}

impl Medium {
    pub fn new(cfg: RadioConfig) -> Self {
        let max_propagation = cfg.propagation_delay(cfg.range_m);
        Medium {
            cfg,
            stations: Vec::new(),
            on_air_until: Vec::new(),
            transmissions: Vec::new(),
            outcomes: Vec::new(),
            max_airtime: SimTime::ZERO,
            max_propagation,
        }
    }

    pub fn config(&self) -> &RadioConfig {
        &self.cfg
    }

    pub fn register(&mut self, id: VehicleId, position: Position, at: SimTime) {
        let idx = id as usize;
        if self.stations.len() <= idx {
            self.stations.resize(idx + 1, None);
            self.on_air_until.resize(idx + 1, SimTime::ZERO);
        }
        self.stations[idx] = Some(Station {
            position,
            registered_at: at,
        });
    }

    pub fn position(&self, id: VehicleId) -> Option<Position> {
        self.station(id).map(|s| s.position)
    }

    pub fn registered_at(&self, id: VehicleId) -> Option<SimTime> {
        self.station(id).map(|s| s.registered_at)
    }

    fn station(&self, id: VehicleId) -> Option<&Station> {
        self.stations.get(id as usize).and_then(|s| s.as_ref())
    }

    pub fn in_range(&self, a: VehicleId, b: VehicleId) -> bool {
        match (self.station(a), self.station(b)) {
            (Some(sa), Some(sb)) => sa.position.distance(&sb.position) <= self.cfg.range_m,
            _ => false,
        }
    }

    fn delay(&self, from: VehicleId, to: VehicleId) -> SimTime {
        let (Some(a), Some(b)) = (self.station(from), self.station(to)) else {
            return SimTime::ZERO;
        };
        self.cfg.propagation_delay(a.position.distance(&b.position))
    }

    pub fn transmissions(&self) -> &[Transmission] {
        &self.transmissions
    }

    pub fn outcome(&self, tx: TxId) -> TxOutcome {
        self.outcomes[tx]
    }

    pub fn outcomes(&self) -> &[TxOutcome] {
        &self.outcomes
    }

    /// Whether `sender` is currently on the air.
    pub fn is_transmitting(&self, sender: VehicleId, at: SimTime) -> bool {
        self.on_air_until
            .get(sender as usize)
            .is_some_and(|until| *until > at)
    }

    /// Put `frame` on the air at `start`. Returns the transmission id and the
    /// arrivals the caller must schedule; the sender is never among them.
    ///
    /// Panics if the sender is unregistered or already transmitting.
    pub fn broadcast(
        &mut self,
        sender: VehicleId,
        frame: Frame,
        start: SimTime,
    ) -> (TxId, SimTime, Vec<Delivery>) {
        let origin = self
            .station(sender)
            .unwrap_or_else(|| panic!("broadcast from unregistered vehicle {sender}"))
            .position;
        assert!(
            !self.is_transmitting(sender, start),
            "vehicle {sender} started a transmission while already on the air"
        );
        let airtime = tx_duration(frame.size_bytes, &self.cfg);
        let end = start + airtime;
        self.max_airtime = self.max_airtime.max(airtime);
        self.on_air_until[sender as usize] = end;

        let id = self.transmissions.len();
        let deliveries: Vec<Delivery> = self
            .stations
            .iter()
            .enumerate()
            .filter_map(|(rid, st)| {
                let st = st.as_ref()?;
                let rid = rid as VehicleId;
                if rid == sender || st.registered_at > start {
                    return None;
                }
                let d = origin.distance(&st.position);
                (d <= self.cfg.range_m).then(|| Delivery {
                    receiver: rid,
                    tx: id,
                    delivered_at: end + self.cfg.propagation_delay(d),
                })
            })
            .collect();
        self.transmissions.push(Transmission {
            id,
            sender,
            frame,
            start,
            end,
            origin,
        });
        self.outcomes.push(TxOutcome {
            receivers: deliveries.len() as u32,
            ..TxOutcome::default()
        });
        (id, end, deliveries)
    }

    /// Arrival interval of `tx` at `receiver`.
    fn arrival(&self, tx: &Transmission, receiver: VehicleId) -> (SimTime, SimTime) {
        let d = self.delay(tx.sender, receiver);
        (tx.start + d, tx.end + d)
    }

    /// Transmissions that could overlap `[from, to)` at any receiver, newest first.
    fn candidates(&self, from: SimTime, to: SimTime) -> impl Iterator<Item = &Transmission> {
        let horizon = from.saturating_sub(self.max_airtime + self.max_propagation);
        self.transmissions
            .iter()
            .rev()
            .skip_while(move |t| t.start >= to)
            .take_while(move |t| t.start >= horizon)
    }

    /// Resolve an arrival. Must be called at `delivery.delivered_at`; every
    /// transmission able to overlap it has started by then.
    pub fn deliver(&mut self, delivery: Delivery) -> ReceptionOutcome {
        let tx = &self.transmissions[delivery.tx];
        let rx = delivery.receiver;
        let (a0, a1) = self.arrival(tx, rx);
        debug_assert_eq!(a1, delivery.delivered_at);
        let collided = self.candidates(a0, a1).any(|other| {
            if other.id == tx.id {
                return false;
            }
            if other.sender == rx {
                // half-duplex: receiver on the air during the arrival
                return other.start < a1 && a0 < other.end;
            }
            if !self.in_range(other.sender, rx) {
                return false;
            }
            let (b0, b1) = self.arrival(other, rx);
            b0 < a1 && a0 < b1
        });
        let out = &mut self.outcomes[delivery.tx];
        out.delivered += 1;
        if collided {
            out.collided += 1;
        }
        ReceptionOutcome {
            receiver: rx,
            transmission: delivery.tx,
            delivered_at: delivery.delivered_at,
            collided,
        }
    }

    /// Carrier sense: true iff some other in-range signal is arriving at
    /// `listener` strictly after its leading edge and before its trailing
    /// edge. A signal whose leading edge arrives exactly at `at` has not
    /// been detected yet.
    pub fn is_busy(&self, listener: VehicleId, at: SimTime) -> bool {
        self.busy_until(listener, at).is_some()
    }

    /// If the medium is busy at `listener`, the latest trailing edge among
    /// the signals currently sensed there.
    pub fn busy_until(&self, listener: VehicleId, at: SimTime) -> Option<SimTime> {
        self.candidates(at, at + SimTime::from_ns(1))
            .filter(|t| t.sender != listener && self.in_range(t.sender, listener))
            .filter_map(|t| {
                let (b0, b1) = self.arrival(t, listener);
                (b0 < at && at < b1).then_some(b1)
            })
            .max()
    }
}
