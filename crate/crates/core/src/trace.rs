//! Line-delimited transmission log.
//!
//! ```text
//! # radio range_m=100 propagation_mps=300000000
//! # vehicle id=0 x=41.3 y=0 spawn_ns=0
//! sender,start_ns,end_ns,size_B,kind,collided
//! 0,100001234,100134568,100,announce,0
//! ```
//!
//! The `#` lines carry the geometry needed to replay the log through the
//! oracle. Records keep the header's field order.

use std::io::{self, BufRead, Write};

use crate::frame::{FrameKind, VehicleId};
use crate::kernel::SimTime;
use crate::medium::{Position, RadioConfig};
use crate::sim::RunOutput;

pub const RECORD_HEADER: &str = "sender,start_ns,end_ns,size_B,kind,collided";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceVehicle {
    pub id: VehicleId,
    pub position: Position,
    pub spawn_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub sender: VehicleId,
    pub start: SimTime,
    pub end: SimTime,
    pub size_bytes: u32,
    pub kind: FrameKind,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub range_m: f64,
    pub propagation_mps: f64,
    pub vehicles: Vec<TraceVehicle>,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing `# radio` line")]
    NoRadio,
}

impl Trace {
    pub fn from_run(out: &RunOutput, radio: &RadioConfig) -> Trace {
        Trace {
            range_m: radio.range_m,
            propagation_mps: radio.propagation_mps,
            vehicles: out
                .vehicles
                .iter()
                .map(|v| TraceVehicle {
                    id: v.id,
                    position: v.position,
                    spawn_at: v.spawn_at,
                })
                .collect(),
            records: out
                .transmissions
                .iter()
                .map(|t| TraceRecord {
                    sender: t.sender,
                    start: t.start,
                    end: t.end,
                    size_bytes: t.size_bytes,
                    kind: t.kind,
                    collided: t.collided(),
                })
                .collect(),
        }
    }

    pub fn write(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "# radio range_m={} propagation_mps={}", self.range_m, self.propagation_mps)?;
        for v in &self.vehicles {
            writeln!(
                w,
                "# vehicle id={} x={} y={} spawn_ns={}",
                v.id,
                v.position.x,
                v.position.y,
                v.spawn_at.as_ns()
            )?;
        }
        writeln!(w, "{RECORD_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.sender,
                r.start.as_ns(),
                r.end.as_ns(),
                r.size_bytes,
                r.kind,
                r.collided as u8
            )?;
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("trace is utf-8")
    }

    pub fn parse(r: impl BufRead) -> Result<Trace, TraceError> {
        let mut radio = None;
        let mut vehicles = Vec::new();
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let n = i + 1;
            let err = |msg: String| TraceError::Parse { line: n, msg };
            let line = line.trim();
            if line.is_empty() || line == RECORD_HEADER {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let mut words = meta.split_whitespace();
                match words.next() {
                    Some("radio") => {
                        let kv = key_values(words).map_err(err)?;
                        radio = Some((
                            get(&kv, "range_m").map_err(err)?,
                            get(&kv, "propagation_mps").map_err(err)?,
                        ));
                    }
                    Some("vehicle") => {
                        let kv = key_values(words).map_err(err)?;
                        vehicles.push(TraceVehicle {
                            id: get(&kv, "id").map_err(err)?,
                            position: Position::new(get(&kv, "x").map_err(err)?, get(&kv, "y").map_err(err)?),
                            spawn_at: SimTime::from_ns(get(&kv, "spawn_ns").map_err(err)?),
                        });
                    }
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let [sender, start, end, size, kind, collided] = fields.as_slice() else {
                return Err(err(format!("expected 6 fields, found {}", fields.len())));
            };
            let num = |s: &str, what: &str| s.parse::<u64>().map_err(|e| err(format!("{what}: {e}")));
            records.push(TraceRecord {
                sender: num(sender, "sender")? as VehicleId,
                start: SimTime::from_ns(num(start, "start_ns")?),
                end: SimTime::from_ns(num(end, "end_ns")?),
                size_bytes: num(size, "size_B")? as u32,
                kind: FrameKind::parse(kind).ok_or_else(|| err(format!("unknown kind {kind:?}")))?,
                collided: match *collided {
                    "0" => false,
                    "1" => true,
                    other => return Err(err(format!("collided must be 0 or 1, found {other:?}"))),
                },
            });
        }
        let (range_m, propagation_mps) = radio.ok_or(TraceError::NoRadio)?;
        Ok(Trace {
            range_m,
            propagation_mps,
            vehicles,
            records,
        })
    }
}

fn key_values<'a>(words: impl Iterator<Item = &'a str>) -> Result<Vec<(&'a str, &'a str)>, String> {
    words
        .map(|w| w.split_once('=').ok_or_else(|| format!("expected key=value, found {w:?}")))
        .collect()
}

fn get<T: std::str::FromStr>(kv: &[(&str, &str)], key: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    let (_, v) = kv
        .iter()
        .find(|(k, _)| *k == key)
        .ok_or_else(|| format!("missing {key}"))?;
    v.parse().map_err(|e| format!("{key}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        Trace {
            range_m: 100.0,
            propagation_mps: 3.0e8,
            vehicles: vec![
                TraceVehicle {
                    id: 0,
                    position: Position::new(0.1 + 0.2, 0.0),
                    spawn_at: SimTime::ZERO,
                },
                TraceVehicle {
                    id: 1,
                    position: Position::new(99.999999999, 0.0),
                    spawn_at: SimTime::from_us(100),
                },
            ],
            records: vec![TraceRecord {
                sender: 1,
                start: SimTime::from_ns(5),
                end: SimTime::from_ns(133_339),
                size_bytes: 100,
                kind: FrameKind::ControlAnnounce,
                collided: true,
            }],
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let t = sample();
        let text = t.render();
        assert_eq!(Trace::parse(text.as_bytes()).unwrap(), t);
        assert!(text.contains("\nsender,start_ns,end_ns,size_B,kind,collided\n1,5,133339,100,announce,1\n"));
    }

    #[test]
    fn bad_lines_are_reported_with_numbers() {
        let text = "# radio range_m=100 propagation_mps=3e8\n1,2,3\n";
        let e = Trace::parse(text.as_bytes()).unwrap_err();
        assert!(e.to_string().starts_with("line 2:"), "{e}");
        assert!(matches!(Trace::parse("".as_bytes()), Err(TraceError::NoRadio)));
    }
}
