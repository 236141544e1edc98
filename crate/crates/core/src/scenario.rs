//! Experiment fixtures: vehicle spawner and periodic application traffic.

use std::fmt;
use std::str::FromStr;

use crate::csma::CsmaConfig;
use crate::frame::VehicleId;
use crate::kernel::{RngStreams, SimTime};
use crate::medium::{Position, RadioConfig};
use crate::tsnctl::{NodeType, WindowConfig};
use crate::tsnctl::wire::ControlSizes;

/// Largest application payload accepted by default.
pub const MAX_PAYLOAD_BYTES: u32 = 800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Application traffic goes straight to the CSMA MAC.
    Baseline,
    /// Application traffic goes through the slot controller.
    Tsnctl,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Tsnctl => "tsnctl",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "tsnctl" => Ok(Mode::Tsnctl),
            other => Err(format!("unknown mode {other:?} (expected baseline or tsnctl)")),
        }
    }
}

/// How the controller's frames reach the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Access {
    /// Through the CSMA MAC, like any other application traffic.
    Csma,
    /// Straight onto the medium at the gated instant; a station only
    /// serializes its own frames.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counting {
    /// One count per sent frame, collided if it collided anywhere.
    Sender,
    /// One count per (frame, receiver) pair.
    Reception,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsnctlConfig {
    pub access: Access,
    pub priority_classes: usize,
    pub slots_requested: u8,
    pub master_lost_windows: u32,
    pub sizes: ControlSizes,
}

impl Default for TsnctlConfig {
    fn default() -> Self {
        TsnctlConfig {
            access: Access::Csma,
            priority_classes: 2,
            slots_requested: 1,
            master_lost_windows: 3,
            sizes: ControlSizes::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    pub counting: Counting,
    pub include_control: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            counting: Counting::Sender,
            include_control: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub vehicle_count: u32,
    pub spawn_interval: SimTime,
    pub area_length_m: f64,
    pub message_interval: SimTime,
    pub payload_bytes: u32,
    /// Priority class of application messages in tsnctl mode.
    pub message_priority: u8,
    pub emergency_vehicles: u32,
    pub sim_duration: SimTime,
    pub seed: u64,
    pub repetitions: u32,
    pub window: WindowConfig,
    pub radio: RadioConfig,
    pub csma: CsmaConfig,
    pub tsnctl: TsnctlConfig,
    pub metrics: MetricsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            mode: Mode::Tsnctl,
            vehicle_count: 20,
            spawn_interval: SimTime::from_ms(1),
            area_length_m: 100.0,
            message_interval: SimTime::from_ms(100),
            payload_bytes: 800,
            message_priority: 0,
            emergency_vehicles: 0,
            sim_duration: SimTime::from_secs(10),
            seed: 1,
            repetitions: 5,
            window: WindowConfig::new(SimTime::from_ms(100), SimTime::from_ms(2))
                .expect("default window is valid"),
            radio: RadioConfig::default(),
            csma: CsmaConfig::default(),
            tsnctl: TsnctlConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSpec {
    pub id: VehicleId,
    pub position: Position,
    pub spawn_at: SimTime,
    pub node_type: NodeType,
}

/// RNG stream reserved for vehicle placement.
pub const PLACEMENT_STREAM: u64 = u64::MAX;

/// The i-th vehicle spawns at `i * spawn_interval` at a uniform x in
/// `[0, area_length]`, y = 0. The first `emergency_vehicles` ids are
/// emergency vehicles.
pub fn build_vehicles(cfg: &ScenarioConfig, streams: &RngStreams) -> Vec<VehicleSpec> {
    assert!(cfg.vehicle_count >= 1, "need at least one vehicle");
    let mut rng = streams.stream(PLACEMENT_STREAM);
    (0..cfg.vehicle_count)
        .map(|i| VehicleSpec {
            id: i,
            position: Position::new(rng.real(0.0, cfg.area_length_m), 0.0),
            spawn_at: cfg.spawn_interval * i as u64,
            node_type: if i < cfg.emergency_vehicles {
                NodeType::Emergency
            } else {
                NodeType::Car
            },
        })
        .collect()
}

/// Generation instants of one vehicle's application messages: every
/// `interval` from `spawn_at`, strictly before `end`.
pub fn message_times(spawn_at: SimTime, interval: SimTime, end: SimTime) -> impl Iterator<Item = SimTime> {
    assert!(interval > SimTime::ZERO, "message interval must be positive");
    (0u64..)
        .map(move |k| spawn_at + interval * k)
        .take_while(move |t| *t < end)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spawn_times_are_multiples_of_interval() {
        let cfg = ScenarioConfig {
            vehicle_count: 3,
            ..ScenarioConfig::default()
        };
        let v = build_vehicles(&cfg, &RngStreams::new(3));
        let t: Vec<_> = v.iter().map(|v| v.spawn_at).collect();
        assert_eq!(t, vec![SimTime::ZERO, SimTime::from_ms(1), SimTime::from_ms(2)]);
    }

    #[test]
    fn last_spawn_at_fast_rate() {
        let cfg = ScenarioConfig {
            vehicle_count: 20,
            spawn_interval: SimTime::from_us(100),
            ..ScenarioConfig::default()
        };
        let v = build_vehicles(&cfg, &RngStreams::new(3));
        assert_eq!(v.last().unwrap().spawn_at, SimTime::from_us(1900));
    }

    #[test]
    fn positions_inside_area_and_mutually_in_range() {
        let cfg = ScenarioConfig {
            vehicle_count: 30,
            ..ScenarioConfig::default()
        };
        for seed in 0..50 {
            let v = build_vehicles(&cfg, &RngStreams::new(seed));
            for a in &v {
                assert!((0.0..=100.0).contains(&a.position.x));
                assert_eq!(a.position.y, 0.0);
                for b in &v {
                    assert!(a.position.distance(&b.position) <= cfg.radio.range_m);
                }
            }
        }
    }

    #[test]
    fn placement_is_pure_in_seed() {
        let cfg = ScenarioConfig::default();
        assert_eq!(build_vehicles(&cfg, &RngStreams::new(9)), build_vehicles(&cfg, &RngStreams::new(9)));
        assert_ne!(build_vehicles(&cfg, &RngStreams::new(9)), build_vehicles(&cfg, &RngStreams::new(10)));
    }

    #[test]
    fn message_ticks() {
        let ms = SimTime::from_ms;
        assert_eq!(message_times(SimTime::ZERO, ms(100), SimTime::from_secs(1)).count(), 10);
        let t: Vec<_> = message_times(ms(2), ms(100), ms(300)).collect();
        assert_eq!(t, vec![ms(2), ms(102), ms(202)]);
    }
}
