use std::io::Write;

use optofcs::cascade::{cascade_sweep, cascade_window, regime_map, CascadeQuery, Estimator, SweepOptions};
use optofcs::counting::{
    counting_statistics, default_window_grid, fano_curve, fano_from_g2, quadrature_delays, stationary_counting,
    CountingOptions, QuadratureEstimate,
};
use optofcs::lindblad::{assemble_liouvillian, default_delays, g2_of_tau, steady_state, G2Curve, Liouvillian};
use optofcs::ode::OdeOptions;
use optofcs::operators::build_hamiltonian;
use optofcs::spectral::{g2_series, SpectralDecomposition};
use optofcs::trajectory::{run_ensemble, Ensemble, TrajectoryConfig, TrajectoryEngine};
use optofcs::{HilbertDims, SystemParams};
use serde::Serialize;

use crate::output::Output;
use crate::{CliError, RunConfig, SweepEstimator, Task};

pub struct Context<'a> {
    cfg: &'a RunConfig,
    out: Output,
    ensemble: Option<(TrajectoryEngine, Ensemble)>,
    /// Convergence problems found so far.
    pub flags: Vec<String>,
}

fn liouvillian(cfg: &RunConfig, p: &SystemParams, dims: HilbertDims) -> Result<Liouvillian, CliError> {
    let h = build_hamiltonian(p, dims, cfg.hamiltonian)?;
    Ok(assemble_liouvillian(p, &h)?)
}

#[derive(Serialize)]
struct Probe {
    n_photon_max: usize,
    n_phonon_max: usize,
    n_photon: f64,
    fano: f64,
    photon_drift: f64,
    fano_drift: f64,
}

#[derive(Serialize)]
struct SteadySummary {
    n_photon_max: usize,
    n_phonon_max: usize,
    n_photon: f64,
    n_phonon: f64,
    residual: f64,
    gap_estimate: f64,
    method: String,
    detection_rate: f64,
    fano_long_time: f64,
    third_moment_long_time: f64,
    probe: Option<Probe>,
}

#[derive(Serialize)]
struct G2Summary {
    g2_zero: Option<f64>,
    delays: usize,
    g2_last: f64,
}

#[derive(Serialize)]
struct TrajectorySummary {
    trajectories: usize,
    sampler: optofcs::trajectory::Sampler,
    detections: usize,
    total_time: f64,
    rate: f64,
    rate_error: f64,
    stationary_rate: f64,
    failures: Vec<String>,
}

#[derive(Serialize)]
struct CountingSummary {
    windows: Vec<f64>,
    fano: Vec<f64>,
    errors: Vec<f64>,
    third_moment: Vec<f64>,
    third_errors: Vec<f64>,
    flags: Vec<Option<String>>,
    block_length: f64,
    plateau: Option<optofcs::counting::Plateau>,
    initial_slope: Option<(f64, f64)>,
    fano_long_time: f64,
    quadrature: Option<Vec<QuadratureEstimate>>,
}

#[derive(Serialize)]
struct MapSummary {
    n: usize,
    cells: usize,
    cascade_cells: usize,
    violations: [usize; 3],
}

#[derive(Serialize)]
struct SweepSummary {
    table: optofcs::cascade::SweepTable,
    cascade_window: Option<(f64, f64)>,
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig, out: Output) -> Self {
        Self {
            cfg,
            out,
            ensemble: None,
            flags: Vec::new(),
        }
    }

    pub fn run(&mut self, task: Task) -> Result<(), CliError> {
        match task {
            Task::Steady => self.steady(),
            Task::G2 => self.g2(),
            Task::Trajectories => self.trajectories(),
            Task::Counting => self.counting(),
            Task::CascadeMap => self.cascade_map(),
            Task::Sweep => self.sweep(),
        }
    }

    fn flag(&mut self, msg: String) {
        log::warn!("{msg}");
        self.flags.push(msg);
    }

    fn steady(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let p = cfg.params();
        let dims = cfg.dims()?;
        let l = liouvillian(cfg, &p, dims)?;
        let ss = steady_state(&l)?;
        let counting = stationary_counting(&l)?;
        let probe = match cfg.probe() {
            Some((dp, dn)) => {
                let big = dims.enlarged(dp, dn);
                let c = stationary_counting(&liouvillian(cfg, &p, big)?)?;
                let probe = Probe {
                    n_photon_max: big.n_photon_max,
                    n_phonon_max: big.n_phonon_max,
                    n_photon: c.mean_photons,
                    fano: c.fano,
                    photon_drift: c.mean_photons - counting.mean_photons,
                    fano_drift: c.fano - counting.fano,
                };
                let rel = probe.photon_drift.abs() / counting.mean_photons.max(f64::MIN_POSITIVE);
                if probe.fano_drift.abs() > cfg.probe_tolerance || rel > cfg.probe_tolerance {
                    self.flag(format!(
                        "steady: truncation probe drift ΔF = {:.3e}, Δn/n = {rel:.3e}",
                        probe.fano_drift
                    ));
                }
                Some(probe)
            }
            None => None,
        };
        let photons = ss.rho.photon_distribution();
        let phonons = ss.rho.phonon_distribution();
        let mut w = self.out.csv("distributions.csv")?;
        writeln!(w, "n,photon,phonon")?;
        for n in 0..photons.len().max(phonons.len()) {
            let cell = |v: &[f64]| v.get(n).map(|x| x.to_string()).unwrap_or_default();
            writeln!(w, "{n},{},{}", cell(&photons), cell(&phonons))?;
        }
        w.flush()?;
        self.out.json(
            "steady.json",
            &SteadySummary {
                n_photon_max: dims.n_photon_max,
                n_phonon_max: dims.n_phonon_max,
                n_photon: counting.mean_photons,
                n_phonon: counting.mean_phonons,
                residual: ss.residual,
                gap_estimate: ss.gap_estimate,
                method: format!("{:?}", ss.method),
                detection_rate: counting.rate,
                fano_long_time: counting.fano,
                third_moment_long_time: counting.third_normalized,
                probe,
            },
        )
    }

    fn delays(&self) -> Vec<f64> {
        if self.cfg.delays.is_empty() {
            default_delays(&self.cfg.params(), self.cfg.delay_count)
        } else {
            self.cfg.delays.clone()
        }
    }

    fn g2(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let p = cfg.params();
        let l = liouvillian(cfg, &p, cfg.dims()?)?;
        let ss = steady_state(&l)?;
        let g2 = g2_of_tau(&l, &ss.rho, &self.delays(), OdeOptions::default())?;
        let mut w = self.out.csv("g2.csv")?;
        writeln!(w, "tau,g2")?;
        for (t, v) in g2.delays.iter().zip(&g2.values) {
            writeln!(w, "{t},{v}")?;
        }
        w.flush()?;
        self.out.json(
            "g2.json",
            &G2Summary {
                g2_zero: g2.at_zero(),
                delays: g2.delays.len(),
                g2_last: *g2.values.last().unwrap_or(&f64::NAN),
            },
        )
    }

    fn run_trajectories(&mut self) -> Result<(), CliError> {
        if self.ensemble.is_some() {
            return Ok(());
        }
        let cfg = self.cfg;
        let p = cfg.params();
        let h = build_hamiltonian(&p, cfg.dims()?, cfg.hamiltonian)?;
        let engine = TrajectoryEngine::new(&p, &h, cfg.sampler)?;
        let tcfg = TrajectoryConfig {
            seed: cfg.seed,
            t_total: cfg.t_total,
            dt: cfg.dt,
            sample_stride: cfg.sample_stride,
            burn_in: cfg.burn_in,
            ..TrajectoryConfig::default()
        };
        let ens = run_ensemble(&engine, &tcfg, cfg.trajectories, cfg.workers)?;
        if ens.records.is_empty() {
            let (_, e) = ens.failures.into_iter().next().expect("an empty ensemble has failures");
            return Err(e.into());
        }
        for (stream, e) in &ens.failures {
            self.flag(format!("trajectory {stream} failed: {e}"));
        }
        self.ensemble = Some((engine, ens));
        Ok(())
    }

    fn trajectories(&mut self) -> Result<(), CliError> {
        self.run_trajectories()?;
        let (engine, ens) = self.ensemble.as_ref().unwrap();
        let mut w = self.out.csv("jumps.csv")?;
        writeln!(w, "trajectory,t")?;
        for r in &ens.records {
            for t in &r.jump_times {
                writeln!(w, "{},{t}", r.stream)?;
            }
        }
        w.flush()?;
        if self.cfg.sample_stride > 0 {
            for r in &ens.records {
                let w = self.out.csv(&format!("trace_{:03}.csv", r.stream))?;
                r.write_trace_csv(w)?;
            }
        }
        let detections = ens.total_jumps();
        let time = ens.total_time();
        self.out.json(
            "trajectories.json",
            &TrajectorySummary {
                trajectories: ens.records.len(),
                sampler: engine.sampler(),
                detections,
                total_time: time,
                rate: detections as f64 / time,
                rate_error: (detections as f64).sqrt() / time,
                stationary_rate: engine.stationary_rate(),
                failures: ens.failures.iter().map(|(s, e)| format!("{s}: {e}")).collect(),
            },
        )
    }

    fn counting(&mut self) -> Result<(), CliError> {
        self.run_trajectories()?;
        let cfg = self.cfg;
        let (engine, ens) = self.ensemble.as_ref().unwrap();
        let windows = if cfg.windows.is_empty() {
            default_window_grid(&cfg.params(), cfg.window_count)
        } else {
            cfg.windows.clone()
        };
        let opts = CountingOptions {
            block_length: cfg.block_length,
            bootstrap_samples: cfg.bootstrap_samples,
            seed: cfg.seed,
            ..CountingOptions::default()
        };
        let curve = fano_curve(&ens.records, &windows, &opts)?;
        if curve.points.iter().all(|p| p.flag.is_some()) {
            return Err(CliError::Statistics(format!(
                "no window could be evaluated: {}",
                curve.points[0].flag.as_deref().unwrap_or("")
            )));
        }
        curve.write_csv(self.out.csv("fano.csv")?)?;

        let mut w = self.out.csv("histograms.csv")?;
        writeln!(w, "t_s,n,probability")?;
        for &t_s in &windows {
            if let Ok(stats) = counting_statistics(&ens.records, t_s, &opts) {
                for (n, p) in stats.histogram.iter().enumerate() {
                    writeln!(w, "{t_s},{n},{p}")?;
                }
            }
        }
        w.flush()?;

        let quadrature = if cfg.quadrature_check {
            let l = engine.liouvillian();
            let decomp = SpectralDecomposition::new(l.generator())?;
            let series = g2_series(l, &decomp, &engine.steady_state().rho)?;
            let t_max = *windows.last().unwrap();
            let delays = quadrature_delays(0.05, t_max.min(1e4), t_max, 2000);
            let g2 = G2Curve {
                values: delays.iter().map(|&t| series.eval(t)).collect(),
                delays,
            };
            let est: Result<Vec<_>, _> = windows
                .iter()
                .map(|&t| fano_from_g2(&g2, engine.stationary_rate(), t, 1e-3))
                .collect();
            Some(est?)
        } else {
            None
        };

        let plateau = curve.plateau();
        let flagged: Vec<String> = curve
            .points
            .iter()
            .filter_map(|p| p.flag.as_ref().map(|f| format!("counting: T_S = {}: {f}", p.t_s)))
            .collect();
        let summary = CountingSummary {
            windows: curve.points.iter().map(|p| p.t_s).collect(),
            fano: curve.points.iter().map(|p| p.fano).collect(),
            errors: curve.points.iter().map(|p| p.error).collect(),
            third_moment: curve.points.iter().map(|p| p.third_central).collect(),
            third_errors: curve.points.iter().map(|p| p.third_error).collect(),
            flags: curve.points.iter().map(|p| p.flag.clone()).collect(),
            block_length: curve.block_length,
            plateau,
            initial_slope: curve.initial_slope(windows[windows.len().min(4) - 1]),
            fano_long_time: stationary_counting(engine.liouvillian())?.fano,
            quadrature,
        };
        self.out.json("counting.json", &summary)?;
        for f in flagged {
            self.flag(f);
        }
        match plateau {
            Some(pl) if !pl.converged => self.flag(format!(
                "counting: plateau drift {:.3e} exceeds its error {:.3e}",
                pl.drift, pl.error
            )),
            None => self.flag("counting: no plateau over the largest decade of windows".into()),
            _ => {}
        }
        Ok(())
    }

    fn cascade_map(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let alphas = if cfg.map_alphas.is_empty() {
            log_space(1e-3, 1.0, 40)
        } else {
            cfg.map_alphas.clone()
        };
        let g0s = if cfg.map_g0s.is_empty() {
            (0..20).map(|i| 0.1 + 0.1 * i as f64).collect()
        } else {
            cfg.map_g0s.clone()
        };
        let map = regime_map(cfg.resonance, cfg.map_g0_over_kappa, &alphas, &g0s, cfg.margins())?;
        map.write_csv(self.out.csv("regime_map.csv")?)?;
        let mut violations = [0; 3];
        for c in &map.cells {
            if let optofcs::cascade::Region::Violates(k) = c.region {
                violations[k as usize - 1] += 1;
            }
        }
        self.out.json(
            "regime_map.json",
            &MapSummary {
                n: map.n,
                cells: map.cells.len(),
                cascade_cells: map.cells.iter().filter(|c| c.in_cascade()).count(),
                violations,
            },
        )
    }

    fn sweep(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        if cfg.sweep_values.is_empty() {
            return Err(CliError::Config("sweep needs sweep_values".into()));
        }
        let estimator = match cfg.sweep_estimator {
            SweepEstimator::MasterEquation => Estimator::MasterEquation,
            SweepEstimator::Trajectories => Estimator::Trajectories {
                sampler: cfg.sampler,
                t_total: cfg.t_total,
                trajectories: cfg.trajectories,
                seed: cfg.seed,
                workers: cfg.workers,
            },
        };
        let opts = SweepOptions {
            dims: cfg.dims()?,
            estimator,
            probe: cfg.probe(),
            probe_tolerance: cfg.probe_tolerance,
        };
        let table = cascade_sweep(
            cfg.resonance,
            &cfg.params(),
            cfg.sweep_axis,
            &cfg.sweep_values,
            cfg.hamiltonian,
            &opts,
        )?;
        table.write_csv(self.out.csv("sweep.csv")?)?;
        let window = CascadeQuery::at_resonance(cfg.resonance, cfg.params(), cfg.margins())
            .ok()
            .and_then(|q| cascade_window(&q));
        let flagged: Vec<String> = table
            .flagged()
            .map(|r| {
                format!(
                    "sweep: {} = {}: {}",
                    cfg.sweep_axis.name(),
                    r.value,
                    r.flag.as_deref().unwrap_or("")
                )
            })
            .collect();
        self.out.json(
            "sweep.json",
            &SweepSummary {
                table,
                cascade_window: window,
            },
        )?;
        for f in flagged {
            self.flag(f);
        }
        Ok(())
    }
}
