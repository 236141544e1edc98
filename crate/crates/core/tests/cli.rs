use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[scenario]
vehicle_count = 6
sim_duration = "500ms"
repetitions = 2
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platoon-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_csv_and_traces_that_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let out = dir.path().join("out");
    let o = bin(&["run", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], platoon_sim::metrics::CSV_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("tsnctl,6,2000000,100000000,800,1000000,9,"));
    assert!(lines[3].contains(",mean,"));
    for seed in [9, 10] {
        let log = out.join(format!("trace_seed{seed}.log"));
        let o = bin(&["verify", "--log", log.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn run_without_out_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let o = bin(&["run", "--config", &cfg, "--repetitions", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.toml", "[scenario]\nplatoon = 3\n");
    let o = bin(&["run", "--config", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("platoon"));

    let degenerate = write(dir.path(), "d.toml", "[window]\nwindow = \"4ms\"\nslot_len = \"2ms\"\n");
    assert_eq!(bin(&["run", "--config", &degenerate]).status.code(), Some(2));

    let missing = dir.path().join("nope.toml");
    assert_eq!(bin(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(bin(&["run"]).status.code(), Some(2));
    let cfg = write(dir.path(), "s.toml", SMALL);
    let o = bin(&["sweep", "--axis", "speed", "--values", "1", "--config", &cfg, "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_block_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let out = dir.path().join("sw");
    let o = bin(&[
        "sweep", "--axis", "platoon_size", "--values", "3,5", "--config", &cfg,
        "--out", out.to_str().unwrap(), "--slot-lens", "1ms,2ms",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    // 2 values x 3 variants x (2 repetitions + mean)
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 3);
    assert!(csv.contains("platoon_size,5,tsnctl_slot_1000us,tsnctl,1000000,mean,"));
}

#[test]
fn tampered_log_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let log = write(
        dir.path(),
        "t.log",
        "# radio range_m=100 propagation_mps=300000000\n\
         # vehicle id=0 x=0 y=0 spawn_ns=0\n\
         # vehicle id=1 x=50 y=0 spawn_ns=0\n\
         sender,start_ns,end_ns,size_B,kind,collided\n\
         0,0,1000,100,data,1\n",
    );
    assert_eq!(bin(&["verify", "--log", &log]).status.code(), Some(1));

    let garbled = write(dir.path(), "g.log", "# radio range_m=100 propagation_mps=3e8\n0,0,x,1,data,0\n");
    assert_eq!(bin(&["verify", "--log", &garbled]).status.code(), Some(2));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = platoon_sim::config::load_config(&dir.join("default.toml")).unwrap();
    assert_eq!(default, platoon_sim::scenario::ScenarioConfig::default());
    for name in ["baseline_100us.toml", "slot_1ms.toml"] {
        platoon_sim::config::load_config(&dir.join(name)).unwrap();
    }
}
