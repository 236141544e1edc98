//! On-disk scenario configuration.
//!
//! TOML with one table per module. Every key is optional and falls back to
//! [`ScenarioConfig::default`]; unknown keys and tables are rejected.
//! Durations are integers (nanoseconds) or strings with a unit suffix
//! (`"100ms"`, `"13us"`, `"2s"`, `"500ns"`).
//!
//! ```toml
//! [scenario]
//! mode = "tsnctl"
//! vehicle_count = 20
//! spawn_interval = "1ms"
//!
//! [window]
//! slot_len = "2ms"
//! ```

use std::path::Path;

use serde::{Deserialize, Deserializer};

use crate::kernel::SimTime;
use crate::scenario::{Access, Counting, Mode, ScenarioConfig};
use crate::tsnctl::WindowConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Parse a duration: plain nanoseconds or a number with `ns`, `us`, `ms`
/// or `s`.
pub fn parse_duration(s: &str) -> Result<SimTime, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, unit) = s.split_at(split);
    let n: u64 = digits.parse().map_err(|_| format!("bad duration {s:?}"))?;
    let scale = match unit.trim() {
        "" | "ns" => 1,
        "us" | "µs" => 1_000,
        "ms" => 1_000_000,
        "s" => 1_000_000_000,
        other => return Err(format!("bad duration unit {other:?} in {s:?}")),
    };
    n.checked_mul(scale)
        .map(SimTime::from_ns)
        .ok_or_else(|| format!("duration {s:?} overflows"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dur(SimTime);

impl<'de> Deserialize<'de> for Dur {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Ns(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Ns(n) => Ok(Dur(SimTime::from_ns(n))),
            Raw::Text(s) => parse_duration(&s).map(Dur).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    #[serde(default)]
    scenario: ScenarioTable,
    #[serde(default)]
    window: WindowTable,
    #[serde(default)]
    radio: RadioTable,
    #[serde(default)]
    csma: CsmaTable,
    #[serde(default)]
    tsnctl: TsnctlTable,
    #[serde(default)]
    metrics: MetricsTable,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioTable {
    mode: Option<String>,
    vehicle_count: Option<u32>,
    spawn_interval: Option<Dur>,
    area_length_m: Option<f64>,
    message_interval: Option<Dur>,
    payload_bytes: Option<u32>,
    message_priority: Option<u8>,
    emergency_vehicles: Option<u32>,
    sim_duration: Option<Dur>,
    seed: Option<u64>,
    repetitions: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowTable {
    window: Option<Dur>,
    slot_len: Option<Dur>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadioTable {
    range_m: Option<f64>,
    data_rate_bps: Option<u64>,
    propagation_mps: Option<f64>,
    preamble_overhead: Option<Dur>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CsmaTable {
    cw_slots: Option<u32>,
    backoff_slot: Option<Dur>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TsnctlTable {
    access: Option<String>,
    priority_classes: Option<usize>,
    slots_requested: Option<u8>,
    master_lost_windows: Option<u32>,
    announce_bytes: Option<u32>,
    allocation_base_bytes: Option<u32>,
    allocation_per_member_bytes: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsTable {
    counting: Option<String>,
    include_control: Option<bool>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let file: File = toml::from_str(text)?;
    let mut c = ScenarioConfig::default();
    let invalid = ConfigError::Invalid;

    let s = file.scenario;
    if let Some(m) = s.mode {
        c.mode = m.parse::<Mode>().map_err(invalid)?;
    }
    set(&mut c.vehicle_count, s.vehicle_count);
    set(&mut c.spawn_interval, s.spawn_interval.map(|d| d.0));
    set(&mut c.area_length_m, s.area_length_m);
    set(&mut c.message_interval, s.message_interval.map(|d| d.0));
    set(&mut c.payload_bytes, s.payload_bytes);
    set(&mut c.message_priority, s.message_priority);
    set(&mut c.emergency_vehicles, s.emergency_vehicles);
    set(&mut c.sim_duration, s.sim_duration.map(|d| d.0));
    set(&mut c.seed, s.seed);
    set(&mut c.repetitions, s.repetitions);

    let w = file.window;
    let window = w.window.map_or(c.window.window(), |d| d.0);
    let slot_len = w.slot_len.map_or(c.window.slot_len(), |d| d.0);
    c.window = WindowConfig::new(window, slot_len).map_err(|e| invalid(e.to_string()))?;

    let r = file.radio;
    set(&mut c.radio.range_m, r.range_m);
    set(&mut c.radio.data_rate_bps, r.data_rate_bps);
    set(&mut c.radio.propagation_mps, r.propagation_mps);
    set(&mut c.radio.preamble_overhead, r.preamble_overhead.map(|d| d.0));

    set(&mut c.csma.cw_slots, file.csma.cw_slots);
    set(&mut c.csma.backoff_slot, file.csma.backoff_slot.map(|d| d.0));

    let t = file.tsnctl;
    if let Some(a) = t.access {
        c.tsnctl.access = match a.as_str() {
            "csma" => Access::Csma,
            "direct" => Access::Direct,
            other => return Err(invalid(format!("unknown access {other:?} (expected csma or direct)"))),
        };
    }
    set(&mut c.tsnctl.priority_classes, t.priority_classes);
    set(&mut c.tsnctl.slots_requested, t.slots_requested);
    set(&mut c.tsnctl.master_lost_windows, t.master_lost_windows);
    set(&mut c.tsnctl.sizes.announce_bytes, t.announce_bytes);
    set(&mut c.tsnctl.sizes.allocation_base_bytes, t.allocation_base_bytes);
    set(&mut c.tsnctl.sizes.allocation_per_member_bytes, t.allocation_per_member_bytes);

    if let Some(k) = file.metrics.counting {
        c.metrics.counting = match k.as_str() {
            "sender" => Counting::Sender,
            "reception" => Counting::Reception,
            other => return Err(invalid(format!("unknown counting {other:?} (expected sender or reception)"))),
        };
    }
    set(&mut c.metrics.include_control, file.metrics.include_control);

    crate::metrics::validate(&c).map_err(|e| invalid(e.to_string()))?;
    Ok(c)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}
