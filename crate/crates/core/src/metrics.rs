//! Collision statistics, repetition batches, CSV tables and sweeps.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::kernel::SimTime;
use crate::scenario::{Counting, MetricsConfig, Mode, ScenarioConfig};
use crate::sim::{run, RunError, RunOutput, TxRecord};
use crate::tsnctl::{ScheduleError, WindowConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CollisionStats {
    pub frames_sent: u64,
    pub frames_collided: u64,
    pub control_frames_sent: u64,
    pub control_frames_collided: u64,
    pub receptions: u64,
    pub receptions_collided: u64,
    pub control_receptions: u64,
    pub control_receptions_collided: u64,
    /// Transmissions nobody could hear; kept out of every denominator.
    pub unheard: u64,
    pub deferred_frames: u64,
    pub rejected_joins: u64,
}

/// Sender-side classification: collided at one or more in-range receivers.
/// `None` when nobody was in range to receive.
pub fn classify_transmission(tx: &TxRecord) -> Option<bool> {
    (tx.receivers > 0).then(|| tx.collided())
}

impl CollisionStats {
    pub fn from_run(out: &RunOutput) -> Self {
        let mut s = CollisionStats {
            deferred_frames: out.ctl_counters.deferred,
            rejected_joins: out.ctl_counters.rejected,
            ..CollisionStats::default()
        };
        for tx in &out.transmissions {
            let Some(collided) = classify_transmission(tx) else {
                s.unheard += 1;
                continue;
            };
            let (rx, rx_col) = (tx.receivers as u64, tx.collided_receptions as u64);
            if tx.kind.is_control() {
                s.control_frames_sent += 1;
                s.control_frames_collided += collided as u64;
                s.control_receptions += rx;
                s.control_receptions_collided += rx_col;
            }
            s.frames_sent += 1;
            s.frames_collided += collided as u64;
            s.receptions += rx;
            s.receptions_collided += rx_col;
        }
        s
    }

    /// (counted, collided) under the given convention.
    pub fn counts(&self, m: &MetricsConfig) -> (u64, u64) {
        match (m.counting, m.include_control) {
            (Counting::Sender, true) => (self.frames_sent, self.frames_collided),
            (Counting::Sender, false) => (
                self.frames_sent - self.control_frames_sent,
                self.frames_collided - self.control_frames_collided,
            ),
            (Counting::Reception, true) => (self.receptions, self.receptions_collided),
            (Counting::Reception, false) => (
                self.receptions - self.control_receptions,
                self.receptions_collided - self.control_receptions_collided,
            ),
        }
    }

    /// Percentage of counted frames that collided; 0 when nothing was counted.
    pub fn collision_rate(&self, m: &MetricsConfig) -> f64 {
        match self.counts(m) {
            (0, _) => 0.0,
            (n, c) => 100.0 * c as f64 / n as f64,
        }
    }

    /// True when the rate is undefined because nothing was counted.
    pub fn rate_undefined(&self, m: &MetricsConfig) -> bool {
        self.counts(m).0 == 0
    }
}

#[derive(Debug, Clone)]
pub struct Repetition {
    pub seed: u64,
    pub stats: CollisionStats,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ScenarioConfig,
    pub repetitions: Vec<Repetition>,
    pub mean_rate: f64,
    /// Sample standard deviation; 0 for a single repetition.
    pub stddev_rate: f64,
}

impl ExperimentResult {
    pub fn totals(&self) -> CollisionStats {
        let mut t = CollisionStats::default();
        for r in &self.repetitions {
            let s = &r.stats;
            t.frames_sent += s.frames_sent;
            t.frames_collided += s.frames_collided;
            t.control_frames_sent += s.control_frames_sent;
            t.control_frames_collided += s.control_frames_collided;
            t.receptions += s.receptions;
            t.receptions_collided += s.receptions_collided;
            t.control_receptions += s.control_receptions;
            t.control_receptions_collided += s.control_receptions_collided;
            t.unheard += s.unheard;
            t.deferred_frames += s.deferred_frames;
            t.rejected_joins += s.rejected_joins;
        }
        t
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: RunError,
    },
}

pub fn mean_and_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Configuration checks beyond what the types enforce.
pub fn validate(cfg: &ScenarioConfig) -> Result<(), ExperimentError> {
    let err = |m: String| Err(ExperimentError::Config(m));
    if cfg.vehicle_count == 0 {
        return err("vehicle_count must be at least 1".into());
    }
    if cfg.repetitions == 0 {
        return err("repetitions must be at least 1".into());
    }
    if cfg.payload_bytes == 0 || cfg.payload_bytes > crate::scenario::MAX_PAYLOAD_BYTES {
        return err(format!(
            "payload_bytes must be in 1..={} (got {})",
            crate::scenario::MAX_PAYLOAD_BYTES,
            cfg.payload_bytes
        ));
    }
    if !(cfg.area_length_m >= 0.0 && cfg.area_length_m.is_finite()) {
        return err("area_length_m must be a finite non-negative number".into());
    }
    if cfg.message_interval == SimTime::ZERO {
        return err("message_interval must be positive".into());
    }
    if cfg.csma.cw_slots == 0 || cfg.csma.backoff_slot == SimTime::ZERO {
        return err("csma cw_slots and backoff_slot must be positive".into());
    }
    let range_ok = cfg.radio.range_m >= 0.0;
    let speed_ok = cfg.radio.propagation_mps > 0.0;
    if !range_ok || !speed_ok || cfg.radio.data_rate_bps == 0 {
        return err("radio range must be non-negative and rates positive".into());
    }
    if cfg.emergency_vehicles > cfg.vehicle_count {
        return err("emergency_vehicles exceeds vehicle_count".into());
    }
    if cfg.mode == Mode::Tsnctl {
        let t = &cfg.tsnctl;
        if t.priority_classes == 0 {
            return err("priority_classes must be at least 1".into());
        }
        if cfg.message_priority as usize >= t.priority_classes {
            return err(format!(
                "message_priority {} is not below priority_classes {}",
                cfg.message_priority, t.priority_classes
            ));
        }
        if t.slots_requested == 0 {
            return err("slots_requested must be at least 1".into());
        }
        if t.master_lost_windows == 0 {
            return err("master_lost_windows must be at least 1".into());
        }
        let window = WindowConfig::new(cfg.window.window(), cfg.window.slot_len())
            .map_err(|e: ScheduleError| ExperimentError::Config(e.to_string()))?;
        let airtime = |b| crate::medium::tx_duration(b, &cfg.radio);
        let announce = airtime(t.sizes.announce_bytes);
        let members = (cfg.vehicle_count as usize).min(window.data_slots() as usize);
        let alloc = airtime(t.sizes.allocation_bytes(members));
        for (what, tx) in [("announce", announce), ("allocation", alloc)] {
            if tx > window.slot_len() {
                return err(format!(
                    "{what} frame airtime {tx} exceeds the slot length {}",
                    window.slot_len()
                ));
            }
        }
    }
    Ok(())
}

/// Run `cfg.repetitions` independent repetitions with seeds `seed + k`.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentResult, ExperimentError> {
    experiment(cfg, false).map(|(r, _)| r)
}

/// As [`run_experiment`], also returning each repetition's raw output.
pub fn run_experiment_with_outputs(
    cfg: &ScenarioConfig,
) -> Result<(ExperimentResult, Vec<RunOutput>), ExperimentError> {
    experiment(cfg, true)
}

fn experiment(cfg: &ScenarioConfig, keep: bool) -> Result<(ExperimentResult, Vec<RunOutput>), ExperimentError> {
    validate(cfg)?;
    let runs = (0..cfg.repetitions as u64)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed.wrapping_add(k);
            let out = run(cfg, seed).map_err(|source| ExperimentError::Run { seed, source })?;
            let stats = CollisionStats::from_run(&out);
            let rep = Repetition {
                seed,
                stats,
                rate: stats.collision_rate(&cfg.metrics),
            };
            Ok((rep, keep.then_some(out)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (repetitions, outputs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let rates: Vec<f64> = repetitions.iter().map(|r| r.rate).collect();
    let (mean_rate, stddev_rate) = mean_and_stddev(&rates);
    let result = ExperimentResult {
        config: cfg.clone(),
        repetitions,
        mean_rate,
        stddev_rate,
    };
    Ok((result, outputs.into_iter().flatten().collect()))
}

pub const CSV_HEADER: &str = "mode,vehicles,slot_len_ns,window_ns,payload_B,spawn_interval_ns,seed,frames_sent,frames_collided,collision_rate_pct,deferred,rejected";

/// Header, one row per repetition, then a summary row whose seed column
/// reads `mean` and whose rate is the mean of the repetition rates.
pub fn write_csv(result: &ExperimentResult, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    let c = &result.config;
    let prefix = format!(
        "{},{},{},{},{},{}",
        c.mode,
        c.vehicle_count,
        c.window.slot_len().as_ns(),
        c.window.window().as_ns(),
        c.payload_bytes,
        c.spawn_interval.as_ns()
    );
    for r in &result.repetitions {
        let (sent, collided) = r.stats.counts(&c.metrics);
        writeln!(
            w,
            "{prefix},{},{},{},{:.2},{},{}",
            r.seed, sent, collided, r.rate, r.stats.deferred_frames, r.stats.rejected_joins
        )?;
    }
    let t = result.totals();
    let (sent, collided) = t.counts(&c.metrics);
    writeln!(
        w,
        "{prefix},mean,{},{},{:.2},{},{}",
        sent, collided, result.mean_rate, t.deferred_frames, t.rejected_joins
    )
}

pub fn csv_string(result: &ExperimentResult) -> String {
    let mut buf = Vec::new();
    write_csv(result, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is ascii")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    PlatoonSize,
    PacketSize,
    SlotLen,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "platoon_size" => Ok(Axis::PlatoonSize),
            "packet_size" => Ok(Axis::PacketSize),
            "slot_len" => Ok(Axis::SlotLen),
            other => Err(format!(
                "unknown axis {other:?} (expected platoon_size, packet_size or slot_len)"
            )),
        }
    }
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::PlatoonSize => "platoon_size",
            Axis::PacketSize => "packet_size",
            Axis::SlotLen => "slot_len",
        }
    }
}

/// One sweep point: the axis value, the variant label and its result.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: u64,
    pub variant: String,
    pub result: ExperimentResult,
}

/// Apply an axis value to a base config. Slot lengths are in nanoseconds.
pub fn apply_axis(base: &ScenarioConfig, axis: Axis, value: u64) -> Result<ScenarioConfig, ExperimentError> {
    let mut cfg = base.clone();
    let bad = |e: String| ExperimentError::Config(e);
    match axis {
        Axis::PlatoonSize => {
            cfg.vehicle_count = u32::try_from(value).map_err(|_| bad(format!("platoon size {value} too large")))?
        }
        Axis::PacketSize => {
            cfg.payload_bytes = u32::try_from(value).map_err(|_| bad(format!("packet size {value} too large")))?
        }
        Axis::SlotLen => {
            cfg.window = WindowConfig::new(cfg.window.window(), SimTime::from_ns(value)).map_err(|e| bad(e.to_string()))?
        }
    }
    Ok(cfg)
}

/// For every value run the baseline once and the controller at each slot
/// length in `slot_lens` (the base slot length if empty). On the slot_len
/// axis the controller runs at the swept value only.
pub fn sweep(
    base: &ScenarioConfig,
    axis: Axis,
    values: &[u64],
    slot_lens: &[SimTime],
) -> Result<Vec<SweepPoint>, ExperimentError> {
    if values.is_empty() {
        return Err(ExperimentError::Config("sweep needs at least one value".into()));
    }
    let slot_lens: Vec<SimTime> = if slot_lens.is_empty() {
        vec![base.window.slot_len()]
    } else {
        slot_lens.to_vec()
    };
    let mut jobs = Vec::new();
    for &value in values {
        let cfg = apply_axis(base, axis, value)?;
        jobs.push((value, "baseline".to_string(), ScenarioConfig { mode: Mode::Baseline, ..cfg.clone() }));
        let lens = if axis == Axis::SlotLen { vec![cfg.window.slot_len()] } else { slot_lens.clone() };
        for slot in lens {
            let window = WindowConfig::new(cfg.window.window(), slot)
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
            jobs.push((
                value,
                format!("tsnctl_slot_{}us", slot.as_ns() / 1000),
                ScenarioConfig { mode: Mode::Tsnctl, window, ..cfg.clone() },
            ));
        }
    }
    jobs.into_par_iter()
        .map(|(value, variant, cfg)| {
            Ok(SweepPoint {
                value,
                variant,
                result: run_experiment(&cfg)?,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "axis,value,variant,mode,slot_len_ns,repetition,seed,frames_sent,frames_collided,collision_rate_pct";

/// Long-format sweep table: one row per repetition plus a `mean` row per point.
pub fn write_sweep(axis: Axis, points: &[SweepPoint], w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for p in points {
        let c = &p.result.config;
        let prefix = format!("{},{},{},{},{}", axis.as_str(), p.value, p.variant, c.mode, c.window.slot_len().as_ns());
        for (i, r) in p.result.repetitions.iter().enumerate() {
            let (sent, collided) = r.stats.counts(&c.metrics);
            writeln!(w, "{prefix},{i},{},{sent},{collided},{:.2}", r.seed, r.rate)?;
        }
        let (sent, collided) = p.result.totals().counts(&c.metrics);
        writeln!(w, "{prefix},mean,,{sent},{collided},{:.2}", p.result.mean_rate)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameKind;

    fn tx(receivers: u32, collided: u32, kind: FrameKind) -> TxRecord {
        TxRecord {
            sender: 0,
            start: SimTime::ZERO,
            end: SimTime::from_us(10),
            size_bytes: 100,
            kind,
            receivers,
            collided_receptions: collided,
        }
    }

    #[test]
    fn classification_conventions() {
        assert_eq!(classify_transmission(&tx(4, 0, FrameKind::Data)), Some(false));
        assert_eq!(classify_transmission(&tx(5, 1, FrameKind::Data)), Some(true));
        assert_eq!(classify_transmission(&tx(0, 0, FrameKind::Data)), None);
    }

    #[test]
    fn rates_under_each_convention() {
        let out = RunOutput {
            seed: 0,
            vehicles: Vec::new(),
            transmissions: vec![
                tx(4, 1, FrameKind::Data),
                tx(4, 0, FrameKind::Data),
                tx(4, 4, FrameKind::ControlAnnounce),
                tx(0, 0, FrameKind::Data),
            ],
            controllers: Vec::new(),
            ctl_counters: Default::default(),
            app_messages: 0,
            events: 0,
        };
        let s = CollisionStats::from_run(&out);
        assert_eq!((s.frames_sent, s.frames_collided, s.unheard), (3, 2, 1));
        let m = |counting, include_control| MetricsConfig { counting, include_control };
        assert!((s.collision_rate(&m(Counting::Sender, true)) - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(s.collision_rate(&m(Counting::Sender, false)), 50.0);
        assert!((s.collision_rate(&m(Counting::Reception, true)) - 500.0 / 12.0).abs() < 1e-9);
        assert_eq!(s.collision_rate(&m(Counting::Reception, false)), 12.5);
    }

    #[test]
    fn empty_run_rate_is_flagged_zero() {
        let s = CollisionStats::default();
        let m = MetricsConfig::default();
        assert_eq!(s.collision_rate(&m), 0.0);
        assert!(s.rate_undefined(&m));
    }

    #[test]
    fn sample_stddev() {
        let (m, s) = mean_and_stddev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_and_stddev(&[3.0]), (3.0, 0.0));
    }
}
