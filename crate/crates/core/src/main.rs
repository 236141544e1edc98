use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use platoon_sim::config::{self, ConfigError};
use platoon_sim::metrics::{self, Axis, ExperimentError};
use platoon_sim::oracle;
use platoon_sim::trace::{Trace, TraceError};

#[derive(Parser)]
#[command(version, about = "Platoon medium-access simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario for a number of repetitions.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seed of the first repetition; later ones use seed+1, seed+2, ...
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repetitions: Option<u32>,
        /// Write results.csv and one trace per repetition here instead of
        /// printing the CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter, running the baseline and the controller at each value.
    Sweep {
        /// platoon_size, packet_size or slot_len (slot lengths in ns or with a unit)
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Controller slot lengths to compare at each value.
        #[arg(long, value_delimiter = ',')]
        slot_lens: Vec<String>,
    },
    /// Recompute collisions in a transmission log and compare with its flags.
    Verify {
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Experiment(#[from] ExperimentError),
    #[error("{path}: {source}")]
    Trace { path: String, source: TraceError },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0} of {1} records disagree with the recomputed collisions")]
    Mismatch(usize, usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Experiment(ExperimentError::Config(_)) => 2,
            CliError::Trace { source: TraceError::Io(_), .. } => 1,
            CliError::Trace { .. } => 2,
            CliError::Experiment(_) | CliError::Io { .. } | CliError::Mismatch(..) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn run_cmd(config: &Path, seed: Option<u64>, repetitions: Option<u32>, out: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = config::load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = repetitions {
        cfg.repetitions = r;
    }
    let Some(dir) = out else {
        let result = metrics::run_experiment(&cfg)?;
        print!("{}", metrics::csv_string(&result));
        return Ok(());
    };
    let (result, outputs) = metrics::run_experiment_with_outputs(&cfg)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("results.csv"), |w| metrics::write_csv(&result, w))?;
    for o in &outputs {
        let trace = Trace::from_run(o, &cfg.radio);
        write_file(&dir.join(format!("trace_seed{}.log", o.seed)), |w| trace.write(w))?;
    }
    println!(
        "{} repetitions, mean collision rate {:.2}% (stddev {:.2}), written to {}",
        result.repetitions.len(),
        result.mean_rate,
        result.stddev_rate,
        dir.display()
    );
    Ok(())
}

fn parse_value(axis: Axis, s: &str) -> Result<u64, CliError> {
    let parsed = match axis {
        Axis::SlotLen => config::parse_duration(s).map(|t| t.as_ns()),
        _ => s.trim().parse::<u64>().map_err(|e| e.to_string()),
    };
    parsed.map_err(|e| CliError::Usage(format!("bad sweep value {s:?}: {e}")))
}

fn sweep_cmd(axis: &str, values: &[String], config: &Path, out: &Path, slot_lens: &[String]) -> Result<(), CliError> {
    let axis: Axis = axis.parse().map_err(CliError::Usage)?;
    let cfg = config::load_config(config)?;
    let values = values.iter().map(|v| parse_value(axis, v)).collect::<Result<Vec<_>, _>>()?;
    let slot_lens = slot_lens
        .iter()
        .map(|s| config::parse_duration(s).map_err(|e| CliError::Usage(format!("bad slot length: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let points = metrics::sweep(&cfg, axis, &values, &slot_lens)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("sweep.csv");
    write_file(&path, |w| metrics::write_sweep(axis, &points, w))?;
    for p in &points {
        println!("{}={} {}: {:.2}%", axis.as_str(), p.value, p.variant, p.result.mean_rate);
    }
    Ok(())
}

fn verify_cmd(log: &Path) -> Result<(), CliError> {
    let trace_err = |source| CliError::Trace {
        path: log.display().to_string(),
        source,
    };
    let file = File::open(log).map_err(|e| trace_err(TraceError::Io(e)))?;
    let trace = Trace::parse(BufReader::new(file)).map_err(trace_err)?;
    let bad = oracle::discrepancies(&trace);
    let collided = trace.records.iter().filter(|r| r.collided).count();
    println!(
        "{} transmissions, {} flagged collided, {} disagreements",
        trace.records.len(),
        collided,
        bad.len()
    );
    for d in bad.iter().take(20) {
        println!(
            "  record {}: sender {} at {} ns logged {} oracle {}",
            d.index,
            d.record.sender,
            d.record.start.as_ns(),
            d.record.collided as u8,
            d.oracle_collided as u8
        );
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Mismatch(bad.len(), trace.records.len()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = match &cli.cmd {
        Cmd::Run {
            config,
            seed,
            repetitions,
            out,
        } => run_cmd(config, *seed, *repetitions, out.as_deref()),
        Cmd::Sweep {
            axis,
            values,
            config,
            out,
            slot_lens,
        } => sweep_cmd(axis, values, config, out, slot_lens),
        Cmd::Verify { log } => verify_cmd(log),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
