use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phonfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phonfield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn preset_toml(name: &str) -> String {
    let o = phonfield(&["presets", name]);
    assert!(o.status.success());
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn simulate_writes_three_block_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("strut.csv");
    let o = phonfield(&["simulate", "--preset", "strut", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "block,peak_t,peak_x,peak_u,x_diff");
    assert_eq!(lines.len(), 4);
    for (line, block) in lines[1..].iter().zip(["baseline", "shadowing", "post"]) {
        assert!(line.starts_with(block), "{line}");
    }
    assert!(dir.path().join("strut.csv.meta.json").exists());
}

#[test]
fn duplicate_preset_is_usage_error() {
    let o = phonfield(&["simulate", "--preset", "strut", "--preset", "bath"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn preset_and_config_conflict() {
    let o = phonfield(&["simulate", "--preset", "strut", "--config", "x.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let o = phonfield(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_and_preset_are_usage_errors() {
    assert_eq!(phonfield(&["simulate", "--preset", "strut", "--bogus"]).status.code(), Some(2));
    let o = phonfield(&["validate", "--preset", "trap"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("trap"));
}

#[test]
fn validate_names_missing_tau() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = preset_toml("strut")
        .lines()
        .filter(|l| !l.starts_with("tau ="))
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, text).unwrap();
    let o = phonfield(&["validate", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tau"), "{}", stderr(&o));
}

#[test]
fn validate_rejects_timescale_inversion() {
    let dir = tempfile::tempdir().unwrap();
    let text = preset_toml("bath").replace("tau_mem = 150.0", "tau_mem = 600.0");
    let cfg = dir.path().join("slow.toml");
    fs::write(&cfg, text).unwrap();
    let o = phonfield(&["validate", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tau_decay"), "{}", stderr(&o));
}

#[test]
fn presets_round_trip_through_config() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["strut", "bath"] {
        let cfg = dir.path().join(format!("{name}.toml"));
        fs::write(&cfg, preset_toml(name)).unwrap();
        let from_cfg = phonfield(&["validate", "--config", path_str(&cfg)]);
        let from_preset = phonfield(&["validate", "--preset", name]);
        assert!(from_cfg.status.success());
        assert_eq!(from_cfg.stdout, from_preset.stdout);
    }
}

#[test]
fn shipped_configs_match_presets() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["strut", "bath"] {
        let cfg = root.join(format!("{name}.toml"));
        let a = phonfield(&["validate", "--config", path_str(&cfg)]);
        let b = phonfield(&["validate", "--preset", name]);
        assert!(a.status.success(), "{}", stderr(&a));
        assert_eq!(a.stdout, b.stdout);
    }
    let sweep = root.join("sweep_inhibition.toml");
    assert!(phonfield(&["validate", "--config", path_str(&sweep)]).status.success());
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("run{i}.json"));
        let o = phonfield(&[
            "simulate", "--preset", "bath", "--grid-points", "201", "--no-timestamp", "--out",
            path_str(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_is_inert_without_noise() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = dir.path().join(format!("s{seed}.csv"));
        let o = phonfield(&[
            "simulate", "--preset", "strut", "--grid-points", "201", "--seed", seed, "--out",
            path_str(&out),
        ]);
        assert!(o.status.success());
        fs::read(&out).unwrap()
    };
    assert_eq!(run("1"), run("2"));
}

#[test]
fn overrides_are_recorded_in_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = phonfield(&[
        "simulate", "--preset", "strut", "--q", "0.5", "--seed", "7", "--grid-points", "201",
        "--out", path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    for needle in ["\"seed=7\"", "\"q=0.5\"", "\"grid_points=201\"", "\"created_unix\""] {
        assert!(text.contains(needle), "missing {needle}");
    }
}

#[test]
fn dt_override_keeps_frame_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = phonfield(&[
        "simulate", "--preset", "strut", "--dt", "0.25", "--grid-points", "101", "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta = fs::read_to_string(dir.path().join("r.csv.meta.json")).unwrap();
    assert!(meta.contains("\"dt=0.25\""));
    assert!(meta.contains("\"frame_stride=8\""));
}

#[test]
fn sweep_rows_follow_spec_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = phonfield(&[
        "sweep", "--preset", "bath", "--grid-points", "101", "--parameter",
        "memory.kernel.c_inhibit", "--values", "1.8,1.0,1.4", "--jobs", "3", "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let firsts: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(firsts, vec![1.8, 1.0, 1.4]);
}

#[test]
fn sweep_without_axis_is_usage_error() {
    let o = phonfield(&["sweep", "--preset", "strut"]);
    assert_eq!(o.status.code(), Some(2));
    let o = phonfield(&[
        "sweep", "--preset", "strut", "--parameter", "planning.nope", "--values", "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_trajectory_is_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mem.csv");
    let o = phonfield(&[
        "export-trajectory", "--preset", "strut", "--grid-points", "21", "--dt", "1",
        "--frame-stride", "100", "--which", "memory", "--block", "post", "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,value"));
    // frames at 0, 100, 200 and 300 ms, 21 points each
    assert_eq!(lines.count(), 4 * 21);
}

#[test]
fn unreadable_config_fails_with_path() {
    let o = phonfield(&["validate", "--config", "/nonexistent/phonfield.toml"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("/nonexistent/phonfield.toml"));
}
