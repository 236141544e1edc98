//! Deterministic discrete-event kernel.
//!
//! Time is an integer count of nanoseconds. Events are ordered by
//! `(fire_at, sequence)` where `sequence` is assigned at scheduling time, so
//! events sharing a timestamp fire in the order they were scheduled.
//!
//! Randomness comes from [`RngStreams`]: one ChaCha8 stream per entity,
//! keyed by the global seed and the entity id, so adding an entity never
//! shifts the draws seen by another.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Simulated time in nanoseconds since simulation start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("SimTime subtraction underflow"),
        )
    }
}

impl Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Identifier of the entity an event is addressed to.
pub type EntityId = u32;

/// A scheduled occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub target: EntityId,
    pub payload: P,
}

/// Returned by [`Kernel::schedule`]; pass to [`Kernel::cancel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// One line of the processed-event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub target: EntityId,
}

struct Queued<P>(Event<P>);

impl<P> Queued<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_at, self.0.sequence)
    }
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Single-threaded event queue and clock.
pub struct Kernel<P> {
    now: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    live: HashSet<u64>,
    cancelled: HashSet<u64>,
    processed: u64,
    log: Option<Vec<EventRecord>>,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Kernel {
            now: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            live: HashSet::new(),
            cancelled: HashSet::new(),
            processed: 0,
            log: None,
        }
    }

    /// Keep a record of every processed event (for replay comparisons).
    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn event_log(&self) -> Option<&[EventRecord]> {
        self.log.as_deref()
    }

    /// Enqueue `payload` for `target` at `fire_at`.
    ///
    /// Panics if `fire_at` lies in the past.
    pub fn schedule(&mut self, fire_at: SimTime, target: EntityId, payload: P) -> EventHandle {
        assert!(
            fire_at >= self.now,
            "event scheduled in the past: fire_at={fire_at}, now={}",
            self.now
        );
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.live.insert(sequence);
        self.queue.push(Reverse(Queued(Event {
            fire_at,
            sequence,
            target,
            payload,
        })));
        EventHandle(sequence)
    }

    pub fn schedule_in(&mut self, delay: SimTime, target: EntityId, payload: P) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, target, payload)
    }

    /// Cancel a pending event. Cancelling an event that already fired is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        if self.live.remove(&handle.0) {
            self.cancelled.insert(handle.0);
        }
    }

    fn pop_due(&mut self, end: SimTime) -> Option<Event<P>> {
        loop {
            let due = matches!(self.queue.peek(), Some(Reverse(q)) if q.0.fire_at <= end);
            if !due {
                return None;
            }
            let Reverse(Queued(event)) = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&event.sequence) {
                continue;
            }
            self.live.remove(&event.sequence);
            return Some(event);
        }
    }

    /// Process every event with `fire_at <= end` in `(fire_at, sequence)`
    /// order, then advance the clock to `end`.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> SimTime
    where
        F: FnMut(&mut Kernel<P>, Event<P>),
    {
        while let Some(event) = self.pop_due(end) {
            self.now = event.fire_at;
            self.processed += 1;
            if let Some(log) = self.log.as_mut() {
                log.push(EventRecord {
                    fire_at: event.fire_at,
                    sequence: event.sequence,
                    target: event.target,
                });
            }
            handler(self, event);
        }
        if end > self.now {
            self.now = end;
        }
        self.now
    }
}

/// Per-entity random streams derived from one global seed.
#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, stream_id: u64) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream_id);
        SimRng(rng)
    }
}

/// A ChaCha8 generator bound to one stream.
#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    /// Uniform draw in `[lo, hi]` (inclusive). Panics if `lo > hi`.
    pub fn uniform(&mut self, lo: SimTime, hi: SimTime) -> SimTime {
        assert!(lo <= hi, "uniform: empty interval [{lo}, {hi}]");
        if lo == hi {
            return lo;
        }
        SimTime(self.0.random_range(lo.0..=hi.0))
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u32) -> u32 {
        assert!(n > 0, "below: n must be positive");
        self.0.random_range(0..n)
    }

    /// Uniform real in `[lo, hi]`.
    pub fn real(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.0.random_range(lo..=hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(kernel: &mut Kernel<&'static str>, end: SimTime) -> Vec<(SimTime, &'static str)> {
        let mut seen = Vec::new();
        kernel.run_until(end, |k, e| seen.push((k.now(), e.payload)));
        seen
    }

    #[test]
    fn earlier_time_fires_first() {
        let mut k = Kernel::new();
        k.schedule(SimTime::from_ns(1), 0, "later");
        k.schedule(SimTime::ZERO, 0, "now");
        let seen = drain(&mut k, SimTime::from_ns(5));
        assert_eq!(seen, vec![(SimTime::ZERO, "now"), (SimTime::from_ns(1), "later")]);
    }

    #[test]
    fn ties_fire_in_scheduling_order() {
        let mut k = Kernel::new();
        let t = SimTime::from_us(3);
        k.schedule(t, 1, "a");
        k.schedule(t, 0, "b");
        k.schedule(t, 2, "c");
        let order: Vec<_> = drain(&mut k, t).into_iter().map(|(_, p)| p).collect();
        assert_eq!(order, vec!["a", "b", "c"]);
    }

    #[test]
    fn cancelled_event_never_fires() {
        let mut k = Kernel::new();
        let h = k.schedule(SimTime::from_ms(1), 0, "gone");
        k.schedule(SimTime::from_ms(2), 0, "kept");
        k.cancel(h);
        assert_eq!(k.pending(), 1);
        let seen = drain(&mut k, SimTime::from_secs(1));
        assert_eq!(seen, vec![(SimTime::from_ms(2), "kept")]);
    }

    #[test]
    fn empty_queue_advances_clock_to_end() {
        let mut k: Kernel<&str> = Kernel::new();
        let end = k.run_until(SimTime::from_secs(1), |_, _| unreachable!());
        assert_eq!(end, SimTime::from_secs(1));
        assert_eq!(k.processed(), 0);
    }

    #[test]
    fn event_inside_horizon_processed_at_its_time() {
        let mut k = Kernel::new();
        k.schedule(SimTime::from_ms(500), 0, "x");
        let seen = drain(&mut k, SimTime::from_secs(1));
        assert_eq!(seen, vec![(SimTime::from_ms(500), "x")]);
        assert_eq!(k.now(), SimTime::from_secs(1));
    }

    #[test]
    fn event_beyond_horizon_stays_queued() {
        let mut k = Kernel::new();
        k.schedule(SimTime::from_ms(1500), 0, "x");
        assert!(drain(&mut k, SimTime::from_secs(1)).is_empty());
        assert_eq!(k.pending(), 1);
        assert_eq!(drain(&mut k, SimTime::from_secs(2)).len(), 1);
    }

    #[test]
    #[should_panic(expected = "in the past")]
    fn scheduling_in_the_past_faults() {
        let mut k = Kernel::new();
        k.schedule(SimTime::from_ms(1), 0, "x");
        k.run_until(SimTime::from_ms(1), |k, _| {
            k.schedule(SimTime::ZERO, 0, "bad");
        });
    }

    #[test]
    fn handler_may_schedule_at_current_time() {
        let mut k = Kernel::new();
        k.schedule(SimTime::from_ms(1), 0, "first");
        let mut seen = Vec::new();
        k.run_until(SimTime::from_ms(1), |k, e| {
            if e.payload == "first" {
                k.schedule(k.now(), 0, "second");
            }
            seen.push(e.payload);
        });
        assert_eq!(seen, vec!["first", "second"]);
    }

    #[test]
    fn degenerate_uniform_returns_bound() {
        let mut rng = RngStreams::new(1).stream(0);
        let t = SimTime::from_us(5);
        assert_eq!(rng.uniform(t, t), t);
    }

    #[test]
    #[should_panic(expected = "empty interval")]
    fn inverted_uniform_faults() {
        let mut rng = RngStreams::new(1).stream(0);
        rng.uniform(SimTime::from_ns(2), SimTime::from_ns(1));
    }

    #[test]
    fn uniform_mean_within_one_percent() {
        let mut rng = RngStreams::new(7).stream(3);
        let hi = SimTime::from_ms(1);
        let n = 100_000u64;
        let sum: u128 = (0..n)
            .map(|_| rng.uniform(SimTime::ZERO, hi).as_ns() as u128)
            .sum();
        let mean = sum as f64 / n as f64;
        let expected = hi.as_ns() as f64 / 2.0;
        assert!((mean - expected).abs() / expected < 0.01, "mean {mean}");
    }

    #[test]
    fn same_stream_same_draws() {
        let s = RngStreams::new(99);
        let mut a = s.stream(4);
        let mut b = s.stream(4);
        let mut c = s.stream(5);
        let hi = SimTime::from_secs(1);
        let da: Vec<_> = (0..16).map(|_| a.uniform(SimTime::ZERO, hi)).collect();
        let db: Vec<_> = (0..16).map(|_| b.uniform(SimTime::ZERO, hi)).collect();
        let dc: Vec<_> = (0..16).map(|_| c.uniform(SimTime::ZERO, hi)).collect();
        assert_eq!(da, db);
        assert_ne!(da, dc);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn processed_order_is_total(times in proptest::collection::vec(0u64..50, 1..64)) {
                let mut k = Kernel::new().with_event_log();
                for (i, t) in times.iter().enumerate() {
                    k.schedule(SimTime::from_ns(*t), i as u32, ());
                }
                k.run_until(SimTime::from_ns(100), |_, _| {});
                let log = k.event_log().unwrap();
                prop_assert_eq!(log.len(), times.len());
                for w in log.windows(2) {
                    prop_assert!((w[0].fire_at, w[0].sequence) < (w[1].fire_at, w[1].sequence));
                }
            }
        }
    }
}
