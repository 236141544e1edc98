//! One simulation run: kernel, medium, MACs, controllers and traffic.

use crate::csma::{CsmaMac, MacCommand};
use crate::frame::{Frame, FrameKind, VehicleId};
use crate::kernel::{Kernel, RngStreams, SimRng, SimTime};
use crate::medium::{Delivery, Medium};
use crate::scenario::{build_vehicles, message_times, Access, Mode, ScenarioConfig, VehicleSpec};
use crate::tsnctl::fsm::IllegalTransition;
use crate::tsnctl::{Controller, ControllerConfig, CtlAction, CtlCounters, CtlTimer};

#[derive(Debug, Clone, PartialEq)]
enum Ev {
    Spawn,
    AppMessage,
    MacWake,
    TxEnd,
    Arrival(Delivery),
    Ctl(CtlTimer),
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("vehicle {vehicle}: {source}")]
    Fsm {
        vehicle: VehicleId,
        #[source]
        source: IllegalTransition,
    },
}

/// One transmission as it ended up on the air.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxRecord {
    pub sender: VehicleId,
    pub start: SimTime,
    pub end: SimTime,
    pub size_bytes: u32,
    pub kind: FrameKind,
    pub receivers: u32,
    pub collided_receptions: u32,
}

impl TxRecord {
    /// Collided at one or more receivers.
    pub fn collided(&self) -> bool {
        self.collided_receptions > 0
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub vehicles: Vec<VehicleSpec>,
    pub transmissions: Vec<TxRecord>,
    pub controllers: Vec<Controller>,
    pub ctl_counters: CtlCounters,
    pub app_messages: u64,
    pub events: u64,
}

struct Vehicle {
    spec: VehicleSpec,
    mac: CsmaMac,
    ctl: Option<Controller>,
    mac_rng: SimRng,
    ctl_rng: SimRng,
    next_seq: u64,
}

struct World<'a> {
    cfg: &'a ScenarioConfig,
    medium: Medium,
    vehicles: Vec<Vehicle>,
    app_messages: u64,
    error: Option<RunError>,
}

impl World<'_> {
    fn on_mac(&mut self, k: &mut Kernel<Ev>, id: VehicleId, cmd: Option<MacCommand>) {
        match cmd {
            None => {}
            Some(MacCommand::WakeAt(at)) => {
                k.schedule(at, id, Ev::MacWake);
            }
            Some(MacCommand::Transmit(frame)) => {
                let now = k.now();
                let (_, end, deliveries) = self.medium.broadcast(id, frame, now);
                k.schedule(end, id, Ev::TxEnd);
                for d in deliveries {
                    k.schedule(d.delivered_at, d.receiver, Ev::Arrival(d));
                }
            }
        }
    }

    fn on_ctl(&mut self, k: &mut Kernel<Ev>, id: VehicleId, actions: Result<Vec<CtlAction>, IllegalTransition>) {
        let actions = match actions {
            Ok(a) => a,
            Err(source) => {
                self.error.get_or_insert(RunError::Fsm { vehicle: id, source });
                return;
            }
        };
        for action in actions {
            match action {
                CtlAction::SetTimer { at, timer } => {
                    k.schedule(at, id, Ev::Ctl(timer));
                }
                CtlAction::Transmit(frames) => {
                    for frame in frames {
                        let now = k.now();
                        let v = &mut self.vehicles[id as usize];
                        let cmd = v.mac.submit(frame, now, &self.medium);
                        self.on_mac(k, id, cmd);
                    }
                }
            }
        }
    }

    fn handle(&mut self, k: &mut Kernel<Ev>, id: VehicleId, ev: Ev) {
        let now = k.now();
        let cfg = self.cfg;
        match ev {
            Ev::Spawn => {
                let v = &mut self.vehicles[id as usize];
                self.medium.register(id, v.spec.position, now);
                for t in message_times(now, cfg.message_interval, cfg.sim_duration) {
                    k.schedule(t, id, Ev::AppMessage);
                }
                if let Some(ctl) = v.ctl.as_mut() {
                    let actions = ctl.on_spawn(now);
                    self.on_ctl(k, id, Ok(actions));
                }
            }
            Ev::AppMessage => {
                self.app_messages += 1;
                let v = &mut self.vehicles[id as usize];
                let frame = Frame::data(id, cfg.message_priority, cfg.payload_bytes, now, v.next_seq);
                v.next_seq += 1;
                match v.ctl.as_mut() {
                    Some(ctl) => ctl.enqueue_app_message(frame, cfg.message_priority as usize),
                    None => {
                        let cmd = v.mac.submit(frame, now, &self.medium);
                        self.on_mac(k, id, cmd);
                    }
                }
            }
            Ev::MacWake => {
                let v = &mut self.vehicles[id as usize];
                let cmd = v.mac.on_wake(now, &self.medium, &mut v.mac_rng);
                self.on_mac(k, id, cmd);
            }
            Ev::TxEnd => {
                let cmd = self.vehicles[id as usize].mac.on_tx_end(now, &self.medium);
                self.on_mac(k, id, cmd);
            }
            Ev::Arrival(d) => {
                let outcome = self.medium.deliver(d);
                if outcome.collided {
                    return;
                }
                let frame = self.medium.transmissions()[d.tx].frame.clone();
                if let Some(ctl) = self.vehicles[id as usize].ctl.as_mut() {
                    if frame.kind().is_control() {
                        let actions = ctl.on_receive(&frame, now);
                        self.on_ctl(k, id, actions);
                    }
                }
            }
            Ev::Ctl(timer) => {
                let v = &mut self.vehicles[id as usize];
                let ctl = v.ctl.as_mut().expect("controller timer without controller");
                let actions = ctl.on_timer(timer, now, &mut v.ctl_rng);
                self.on_ctl(k, id, actions);
            }
        }
    }
}

fn stream_id(vehicle: VehicleId, which: u64) -> u64 {
    vehicle as u64 * 4 + which
}

/// Run one repetition of `cfg` with `seed`.
///
/// New traffic stops at `sim_duration`; frames already on the air are then
/// allowed to reach every receiver so that each logged transmission has a
/// final collision outcome.
pub fn run(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput, RunError> {
    let streams = RngStreams::new(seed);
    let specs = build_vehicles(cfg, &streams);
    let ctl_cfg = ControllerConfig {
        window: cfg.window,
        sizes: cfg.tsnctl.sizes,
        radio: cfg.radio,
        priority_classes: cfg.tsnctl.priority_classes,
        slots_requested: cfg.tsnctl.slots_requested,
        master_lost_windows: cfg.tsnctl.master_lost_windows,
    };
    let vehicles = specs
        .iter()
        .map(|spec| {
            let direct = cfg.mode == Mode::Tsnctl && cfg.tsnctl.access == Access::Direct;
            Vehicle {
                spec: *spec,
                mac: if direct {
                    CsmaMac::without_carrier_sense(spec.id, cfg.csma)
                } else {
                    CsmaMac::new(spec.id, cfg.csma)
                },
                ctl: (cfg.mode == Mode::Tsnctl).then(|| Controller::new(spec.id, spec.node_type, ctl_cfg)),
                mac_rng: streams.stream(stream_id(spec.id, 0)),
                ctl_rng: streams.stream(stream_id(spec.id, 1)),
                next_seq: 0,
            }
        })
        .collect();
    let mut world = World {
        cfg,
        medium: Medium::new(cfg.radio),
        vehicles,
        app_messages: 0,
        error: None,
    };
    let mut kernel = Kernel::new();
    for spec in &specs {
        kernel.schedule(spec.spawn_at, spec.id, Ev::Spawn);
    }
    kernel.run_until(cfg.sim_duration, |k, ev| {
        if world.error.is_none() {
            world.handle(k, ev.target, ev.payload);
        }
    });
    if let Some(err) = world.error {
        return Err(err);
    }
    // drain: resolve arrivals of frames already on the air, start nothing new
    kernel.run_until(SimTime::MAX, |_, ev| {
        if let Ev::Arrival(d) = ev.payload {
            world.medium.deliver(d);
        }
    });

    let transmissions = world
        .medium
        .transmissions()
        .iter()
        .zip(world.medium.outcomes())
        .map(|(t, o)| {
            debug_assert!(o.is_complete());
            TxRecord {
                sender: t.sender,
                start: t.start,
                end: t.end,
                size_bytes: t.frame.size_bytes,
                kind: t.frame.kind(),
                receivers: o.receivers,
                collided_receptions: o.collided,
            }
        })
        .collect();
    let mut ctl_counters = CtlCounters::default();
    let mut controllers = Vec::new();
    for v in world.vehicles {
        if let Some(ctl) = v.ctl {
            let c = ctl.counters();
            ctl_counters.announces += c.announces;
            ctl_counters.allocations += c.allocations;
            ctl_counters.data_sent += c.data_sent;
            ctl_counters.deferred += c.deferred;
            ctl_counters.overruns += c.overruns;
            ctl_counters.rejected += c.rejected;
            controllers.push(ctl);
        }
    }
    Ok(RunOutput {
        seed,
        vehicles: specs,
        transmissions,
        controllers,
        ctl_counters,
        app_messages: world.app_messages,
        events: kernel.processed(),
    })
}
