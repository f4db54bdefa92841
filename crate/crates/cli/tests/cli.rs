use std::path::Path;
use std::process::{Command, Output};

use homsim_cli::record::ResultRecord;

const CONFIG: &str = r#"
[emitter]
t1_ps = 375.0
t2_ps = 270.0
line = "biexciton"
scheme = "two-photon-resonant"

[run]
n_pulse_pairs = 5000
seed = 11
"#;

fn homsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homsim"))
        .current_dir(dir)
        .env_remove("HOMSIM_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn unknown_subcommand_exits_with_usage_code() {
    let dir = setup();
    assert_eq!(homsim(dir.path(), &["frobnicate"]).status.code(), Some(1));
}

#[test]
fn invalid_config_exits_with_usage_code_and_names_the_field() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.toml"), "[emitter]\nt1_ps = 375.0\nt2_ps = 270.0\n[optics]\npump_delay_ns = 20.0\n").unwrap();
    let out = homsim(dir.path(), &["--config", "bad.toml", "simulate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pump_delay"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.toml"), "[emitter]\nt1_ps = 375.0\nt2_ps = 270.0\nt3_ps = 1.0\n").unwrap();
    assert_eq!(homsim(dir.path(), &["--config", "bad.toml", "simulate"]).status.code(), Some(1));
}

#[test]
fn missing_input_file_is_a_usage_error() {
    let dir = setup();
    let out = homsim(dir.path(), &["fit", "--table", "nope.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_events_histogram_and_record() {
    let dir = setup();
    let out = homsim(dir.path(), &["--config", "exp.toml", "--out", "run", "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    for f in ["events.txt", "histogram.txt", "record.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let rec = ResultRecord::from_json(&std::fs::read_to_string(run.join("record.json")).unwrap()).unwrap();
    assert_eq!(rec.metadata.events, 10_000);
    let p = rec.probability.unwrap();
    assert!(p.value > 0.1 && p.value < 0.5, "{p:?}");
}

#[test]
fn output_dir_from_environment() {
    let dir = setup();
    let out = Command::new(env!("CARGO_BIN_EXE_homsim"))
        .current_dir(dir.path())
        .env("HOMSIM_OUT", "envout")
        .args(["--config", "exp.toml", "simulate"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("envout/record.json").exists());
}

#[test]
fn event_stream_is_identical_across_thread_counts() {
    let dir = setup();
    let mut files = Vec::new();
    for jobs in ["1", "2", "8"] {
        let name = format!("j{jobs}");
        let out = homsim(dir.path(), &["--config", "exp.toml", "--out", &name, "--jobs", jobs, "--format", "binary", "simulate"]);
        assert!(out.status.success());
        files.push(std::fs::read(dir.path().join(&name).join("events.bin")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn seed_override_changes_the_stream_and_fingerprint() {
    let dir = setup();
    homsim(dir.path(), &["--config", "exp.toml", "--out", "a", "simulate"]);
    homsim(dir.path(), &["--config", "exp.toml", "--out", "b", "--seed", "12", "simulate"]);
    let a = std::fs::read_to_string(dir.path().join("a/events.txt")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/events.txt")).unwrap();
    assert_ne!(a, b);
    assert_ne!(a.lines().nth(1), b.lines().nth(1));
}

#[test]
fn analyze_reproduces_simulate_peaks_for_every_format() {
    let dir = setup();
    for fmt in ["text", "binary", "csv"] {
        let sim = format!("sim-{fmt}");
        assert!(homsim(dir.path(), &["--config", "exp.toml", "--out", &sim, "--format", fmt, "simulate"]).status.success());
        let ext = match fmt {
            "text" => "txt",
            "binary" => "bin",
            _ => "csv",
        };
        let events = format!("{sim}/events.{ext}");
        let ana = format!("ana-{fmt}");
        let out = homsim(dir.path(), &["--config", "exp.toml", "--out", &ana, "analyze", "--events", &events]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let read = |p: String| ResultRecord::from_json(&std::fs::read_to_string(dir.path().join(p)).unwrap()).unwrap();
        assert_eq!(read(format!("{sim}/record.json")).peaks, read(format!("{ana}/record.json")).peaks);
        assert!(dir.path().join(&ana).join("peaks.csv").exists());
    }
}

#[test]
fn sweep_output_round_trips_through_fit_and_report() {
    let dir = setup();
    std::fs::write(
        dir.path().join("sweep.toml"),
        "parameter = \"optics.delay_offset_ps\"\nlinspace = { start = -800.0, stop = 800.0, num = 7 }\nn_pulse_pairs = 20000\n",
    )
    .unwrap();
    let out = homsim(dir.path(), &["--config", "exp.toml", "--out", "sw", "sweep", "--spec", "sweep.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert!(csv.starts_with("# fingerprint: "));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 8);
    for f in ["fit_report.txt", "fit_curve.csv", "record.json"] {
        assert!(dir.path().join("sw").join(f).exists(), "{f}");
    }

    let out = homsim(dir.path(), &["--out", "fit", "fit", "--table", "sw/sweep.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("fit/fit_report.txt")).unwrap();
    let fp = csv.lines().next().unwrap().trim_start_matches("# fingerprint: ");
    assert!(report.contains(fp));
    assert!(report.contains("p0 = "));

    homsim(dir.path(), &["--config", "exp.toml", "--out", "one", "simulate"]);
    let out = homsim(dir.path(), &["--out", "rep", "report", "one/record.json", "sw/record.json"]);
    assert!(out.status.success());
    let rows = std::fs::read_to_string(dir.path().join("rep/report.csv")).unwrap();
    assert_eq!(rows.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn report_warns_about_mismatched_geometry() {
    let dir = setup();
    std::fs::write(dir.path().join("other.toml"), format!("{CONFIG}\n[optics]\nhom_delay_ns = 4.0\n")).unwrap();
    homsim(dir.path(), &["--config", "exp.toml", "--out", "a", "simulate"]);
    let out = homsim(dir.path(), &["--config", "other.toml", "--out", "b", "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    homsim(dir.path(), &["--out", "r", "report", "a/record.json", "b/record.json"]);
    let txt = std::fs::read_to_string(dir.path().join("r/report.txt")).unwrap();
    assert!(txt.starts_with("# warning"), "{txt}");
}

#[test]
fn dip_fit_requires_wavepacket_timing() {
    let dir = setup();
    homsim(dir.path(), &["--config", "exp.toml", "--out", "a", "simulate"]);
    let out = homsim(dir.path(), &["--config", "exp.toml", "fit", "--dip", "a/histogram.txt"]);
    assert_eq!(out.status.code(), Some(1));
}
