use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use optofcs_cli::output::embedded_config;
use optofcs_cli::{exit, RunConfig, Task};
use proptest::prelude::*;

fn optofcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optofcs"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, cfg: &RunConfig) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

fn small(out: &Path) -> RunConfig {
    RunConfig {
        out: out.to_path_buf(),
        detuning: 0.3,
        drive: 0.1,
        n_photon_max: 6,
        n_phonon_max: 1,
        probe_photon: 0,
        probe_phonon: 0,
        ..RunConfig::default()
    }
}

/// Data rows of a CSV file, without the provenance header.
fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn no_tasks_prints_usage() {
    let out = optofcs(&[]);
    assert_eq!(out.status.code(), Some(exit::OK));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_preset("fig2a").unwrap();
    let out = optofcs(&[&write_config(dir.path(), &cfg)]);
    assert_eq!(out.status.code(), Some(exit::OK));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--allow-unconverged"));
}

#[test]
fn configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "tasks = [\"steady\"]\ndetunning = 0.1\n").unwrap();
    assert_eq!(optofcs(&[bad.to_str().unwrap()]).status.code(), Some(exit::CONFIG));
    assert_eq!(
        optofcs(&["--preset", "fig9", "-t", "steady"]).status.code(),
        Some(exit::CONFIG)
    );
    assert_eq!(optofcs(&["-t", "nonsense"]).status.code(), Some(exit::CONFIG));
    let missing = dir.path().join("missing.toml");
    assert_eq!(optofcs(&[missing.to_str().unwrap()]).status.code(), Some(exit::CONFIG));
}

#[test]
fn presets_resolve_to_caption_parameters() {
    let out = optofcs(&["--preset", "fig2a", "--print-config"]);
    assert_eq!(out.status.code(), Some(exit::OK));
    let cfg = RunConfig::from_toml(&String::from_utf8_lossy(&out.stdout), None).unwrap();
    assert_eq!(
        (cfg.detuning, cfg.g0, cfg.drive, cfg.kappa_in, cfg.kappa_out),
        (0.75, 0.5, 5e-3, 0.0625, 0.0625)
    );
    assert_eq!(cfg.mech_damping, 1e-3);
    let out = optofcs(&["--preset", "fig5", "--print-config"]);
    let cfg = RunConfig::from_toml(&String::from_utf8_lossy(&out.stdout), None).unwrap();
    assert!((cfg.detuning + 1.0).abs() < 1e-15);
    assert!((cfg.kappa_in + cfg.kappa_out - cfg.g0 / 4.0).abs() < 1e-15);
    assert_eq!(cfg.n_th, 0.0);
}

#[test]
fn steady_and_g2_outputs_carry_the_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        tasks: vec![Task::Steady, Task::G2],
        delay_count: 10,
        ..small(&dir.path().join("out"))
    };
    let out = optofcs(&[&write_config(dir.path(), &cfg)]);
    assert_eq!(
        out.status.code(),
        Some(exit::OK),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let o = dir.path().join("out");
    for csv in ["distributions.csv", "g2.csv"] {
        let text = fs::read_to_string(o.join(csv)).unwrap();
        assert_eq!(embedded_config(&text).unwrap(), cfg);
    }
    let g2 = rows(&o.join("g2.csv"));
    assert_eq!(g2[0], "tau,g2");
    assert_eq!(g2.len(), 12);
    for line in &g2[1..] {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 1e-6, "coherent drive: {line}");
    }
    let steady: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("steady.json")).unwrap()).unwrap();
    let nbar = 0.01 / (0.09 + 0.0025);
    assert!((steady["n_photon"].as_f64().unwrap() - nbar).abs() < 1e-3 * nbar);
    assert!((steady["fano_long_time"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    let embedded: RunConfig = serde_json::from_value(steady["config"].clone()).unwrap();
    assert_eq!(embedded, cfg);
    assert_eq!(RunConfig::load(&o.join("config.toml"), None).unwrap(), cfg);
}

#[test]
fn stochastic_outputs_replay_from_the_emitted_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let cfg = RunConfig {
        tasks: vec![Task::Trajectories, Task::Counting],
        seed: 42,
        trajectories: 2,
        t_total: 2e4,
        sample_stride: 1000,
        dt: Some(0.01),
        windows: vec![1.0, 10.0, 100.0],
        allow_unconverged: true,
        ..small(&first)
    };
    let out = optofcs(&[&write_config(dir.path(), &cfg)]);
    assert_eq!(
        out.status.code(),
        Some(exit::OK),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let second = dir.path().join("second");
    let out = optofcs(&[
        first.join("config.toml").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(exit::OK));
    for f in [
        "jumps.csv",
        "fano.csv",
        "histograms.csv",
        "trace_000.csv",
        "trace_001.csv",
    ] {
        let a = rows(&first.join(f));
        assert!(a.len() > 2, "{f}");
        assert_eq!(a, rows(&second.join(f)), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("counting.json")).unwrap()).unwrap();
    assert_eq!(summary["windows"].as_array().unwrap().len(), 3);
    // a different seed gives a different record
    let third = dir.path().join("third");
    optofcs(&[
        first.join("config.toml").to_str().unwrap(),
        "--out",
        third.to_str().unwrap(),
        "--seed",
        "43",
    ]);
    assert_ne!(rows(&first.join("jumps.csv")), rows(&third.join("jumps.csv")));
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    // no photons: g2 is undefined
    let cfg = RunConfig {
        tasks: vec![Task::G2],
        drive: 0.0,
        ..small(&dir.path().join("a"))
    };
    assert_eq!(
        optofcs(&[&write_config(dir.path(), &cfg)]).status.code(),
        Some(exit::SOLVER)
    );

    // windows longer than the record
    let cfg = RunConfig {
        tasks: vec![Task::Counting],
        trajectories: 1,
        t_total: 50.0,
        windows: vec![100.0, 200.0],
        ..small(&dir.path().join("b"))
    };
    assert_eq!(
        optofcs(&[&write_config(dir.path(), &cfg)]).status.code(),
        Some(exit::STATISTICS)
    );

    // a probe tolerance nothing can meet
    let cfg = RunConfig {
        tasks: vec![Task::Steady],
        g0: 0.3,
        n_phonon_max: 2,
        probe_photon: 1,
        probe_phonon: 2,
        probe_tolerance: 1e-300,
        ..small(&dir.path().join("c"))
    };
    let path = write_config(dir.path(), &cfg);
    assert_eq!(optofcs(&[&path]).status.code(), Some(exit::UNCONVERGED));
    assert!(dir.path().join("c/steady.json").exists());
    assert_eq!(optofcs(&[&path, "--allow-unconverged"]).status.code(), Some(exit::OK));
}

#[test]
fn cascade_map_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("out");
    let mut cfg = RunConfig::from_preset("fig5").unwrap();
    cfg.out = o.clone();
    cfg.tasks = vec![Task::CascadeMap, Task::Sweep];
    cfg.map_alphas = vec![0.01, 0.15, 0.5];
    cfg.map_g0s = vec![0.5, 0.7071067811865476];
    cfg.n_photon_max = 3;
    cfg.n_phonon_max = 8;
    cfg.probe_photon = 0;
    cfg.probe_phonon = 0;
    cfg.sweep_values = vec![0.02, 0.05];
    let out = optofcs(&[&write_config(dir.path(), &cfg)]);
    assert_eq!(
        out.status.code(),
        Some(exit::OK),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let map = rows(&o.join("regime_map.csv"));
    assert_eq!(map[0], "alpha,g0,gamma_01,gamma_0n,first,second,third,region");
    assert_eq!(map.len(), 7);
    let sweep = rows(&o.join("sweep.csv"));
    assert!(sweep[0].starts_with("alpha,"));
    assert_eq!(sweep.len(), 3);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("sweep.json")).unwrap()).unwrap();
    let window = summary["cascade_window"].as_array().unwrap();
    assert!(window[0].as_f64().unwrap() < 0.15 && window[1].as_f64().unwrap() > 0.15);
    assert!(embedded_config(&fs::read_to_string(o.join("sweep.csv")).unwrap()).is_some());
}

fn config() -> impl Strategy<Value = RunConfig> {
    (
        (
            0..=i64::MAX as u64,
            0usize..8,
            -3.0..3.0f64,
            0.0..2.0f64,
            0.0..1.0f64,
            0.0..1.0f64,
            1e-3..1.0f64,
        ),
        (
            1e-4..0.1f64,
            0.0..3.0f64,
            0.0..=1.0f64,
            1usize..8,
            1usize..30,
            prop::option::of(1e-4..0.1f64),
        ),
        (
            prop::collection::vec(0.1..1e4f64, 0..5),
            any::<bool>(),
            2usize..6,
            prop::collection::vec(1e-4..1.0f64, 0..4),
        ),
    )
        .prop_map(
            |(
                (seed, workers, detuning, g0, drive, kappa_in, kappa_out),
                (gm, n_th, eta, na, nb, dt),
                (mut windows, flag, n, values),
            )| {
                windows.sort_by(f64::total_cmp);
                windows.dedup();
                RunConfig {
                    tasks: vec![Task::Steady, Task::Sweep],
                    preset: flag.then(|| "fig5".to_string()),
                    seed,
                    workers,
                    detuning,
                    g0,
                    drive,
                    kappa_in,
                    kappa_out,
                    mech_damping: gm,
                    n_th,
                    detector_efficiency: eta,
                    n_photon_max: na,
                    n_phonon_max: nb,
                    dt,
                    windows,
                    quadrature_check: flag,
                    resonance: n,
                    sweep_values: values,
                    ..RunConfig::default()
                }
            },
        )
}

proptest! {
    #[test]
    fn configurations_round_trip(cfg in config()) {
        let back = RunConfig::from_toml(&cfg.to_toml(), None).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
