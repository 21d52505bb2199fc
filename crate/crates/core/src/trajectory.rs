//! Photodetection-conditioned quantum-jump trajectories.
//!
//! Only the output-mirror channel, with efficiency η, is monitored. Every
//! other channel (κ_I, the undetected (1−η)κ_O fraction, mechanical damping
//! and heating) stays in the generator, so the conditional state is a
//! density matrix evolving under L0 = L − J between detections.
//!
//! Two samplers are provided. `FirstOrder` is the textbook scheme: in each
//! step of length dt a detection happens with probability ηκ_O⟨a†a⟩dt,
//! otherwise the state takes one RK4 step under L0 and is renormalized.
//! `WaitingTime` is exact: the trace of e^{L0 s}ρ is the probability of no
//! detection during s, so with L0 = VΛV⁻¹ the next detection time is found by
//! solving Tr e^{L0 s}ρ = u for uniform u. It costs two dense products per
//! detection and is independent of how long the system stays dark, which is
//! what makes runs with 10⁵ detections at rates of 10⁻⁴ feasible.
//!
//! Random streams: trajectory `i` of an ensemble with master seed `s` draws
//! from `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lindblad::{
    assemble_liouvillian, dot, hermitize_in_place, observable_functional, steady_state, trace_positions, vec_trace,
    DensityMatrix, Liouvillian, SteadyState,
};
use crate::operators::{build_annihilation, build_displacement_quadrature, build_number, Mode, OperatorMatrix};
use crate::params::SystemParams;
use crate::sparse::{CsrMatrix, C64};
use crate::spectral::SpectralDecomposition;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    FirstOrder,
    #[default]
    WaitingTime,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub enum InitialState {
    #[default]
    SteadyState,
    Vacuum,
    Custom(DensityMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryConfig {
    pub seed: u64,
    /// Stream index within the seed; ensembles use the trajectory index.
    pub stream: u64,
    pub t_total: f64,
    /// Step of the first-order sampler; `None` uses
    /// min(0.01/Ω, 0.1/κ, 0.05/(ηκ_O n_max)). Also the trace resolution.
    pub dt: Option<f64>,
    /// Record expectation values every `sample_stride` steps of dt
    /// (0 disables the traces).
    pub sample_stride: usize,
    pub initial_state: InitialState,
    /// Detections before this time are discarded. `None` means 0 for a
    /// steady-state start and 5/Γ_M otherwise.
    pub burn_in: Option<f64>,
    /// Delays after each detection at which the conditional photon number is
    /// recorded.
    pub post_jump_delays: Vec<f64>,
    /// Keep the normalized conditional state at every trace sample.
    pub keep_states: bool,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            stream: 0,
            t_total: 100.0,
            dt: None,
            sample_stride: 10,
            initial_state: InitialState::SteadyState,
            burn_in: None,
            post_jump_delays: Vec::new(),
            keep_states: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub n_photon: f64,
    pub n_phonon: f64,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub stream: u64,
    /// Start of the stationary (post burn-in) counting interval.
    pub t_start: f64,
    pub t_end: f64,
    pub jump_times: Vec<f64>,
    /// ⟨a†a⟩ of the conditional state just before each detection.
    pub pre_jump_photons: Vec<f64>,
    /// ⟨a†a⟩ at each configured delay after each detection (NaN past t_end).
    pub post_jump_photons: Vec<Vec<f64>>,
    pub post_jump_delays: Vec<f64>,
    pub traces: Vec<TraceSample>,
    /// Conditional states aligned with `traces`, when requested.
    #[serde(skip)]
    pub states: Vec<DensityMatrix>,
    pub sampler: Sampler,
    pub dt: f64,
}

impl TrajectoryRecord {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Writes the traces as CSV with columns t, n_photon, n_phonon, x,
    /// jump_flag; jump_flag counts detections since the previous row.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "n_photon", "n_phonon", "x", "jump_flag"])?;
        let mut next = 0;
        for s in &self.traces {
            let mut flag = 0usize;
            while next < self.jump_times.len() && self.jump_times[next] <= s.t {
                flag += 1;
                next += 1;
            }
            w.write_record(&[
                s.t.to_string(),
                s.n_photon.to_string(),
                s.n_phonon.to_string(),
                s.x.to_string(),
                flag.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pending post-detection evaluation, ordered by time (earliest first).
#[derive(Clone, Copy, Debug)]
struct Pending {
    t: f64,
    jump: usize,
    delay: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.jump.cmp(&self.jump))
            .then_with(|| other.delay.cmp(&self.delay))
    }
}

struct Recorder {
    record: TrajectoryRecord,
    pending: BinaryHeap<Pending>,
    next_sample: usize,
    sample_interval: Option<f64>,
    keep_states: bool,
}

impl Recorder {
    fn new(cfg: &TrajectoryConfig, sampler: Sampler, dt: f64, t_start: f64) -> Self {
        Self {
            record: TrajectoryRecord {
                seed: cfg.seed,
                stream: cfg.stream,
                t_start,
                t_end: cfg.t_total,
                jump_times: Vec::new(),
                pre_jump_photons: Vec::new(),
                post_jump_photons: Vec::new(),
                post_jump_delays: cfg.post_jump_delays.clone(),
                traces: Vec::new(),
                states: Vec::new(),
                sampler,
                dt,
            },
            pending: BinaryHeap::new(),
            next_sample: 0,
            sample_interval: (cfg.sample_stride > 0).then_some(dt * cfg.sample_stride as f64),
            keep_states: cfg.keep_states,
        }
    }

    fn next_sample_time(&self) -> Option<f64> {
        self.sample_interval.map(|h| self.next_sample as f64 * h)
    }

    fn jump(&mut self, t: f64, photons_before: f64) {
        if t < self.record.t_start {
            return;
        }
        let idx = self.record.jump_times.len();
        self.record.jump_times.push(t);
        self.record.pre_jump_photons.push(photons_before);
        self.record
            .post_jump_photons
            .push(vec![f64::NAN; self.record.post_jump_delays.len()]);
        for (d, &tau) in self.record.post_jump_delays.iter().enumerate() {
            self.pending.push(Pending {
                t: t + tau,
                jump: idx,
                delay: d,
            });
        }
    }
}

/// Precomputed operators shared by all trajectories of one parameter set.
pub struct TrajectoryEngine {
    params: SystemParams,
    liouvillian: Liouvillian,
    steady: SteadyState,
    no_jump: CsrMatrix,
    /// J/(ηκ_O): ρ ↦ aρa†.
    jump_map: CsrMatrix,
    n_fn: Vec<C64>,
    nb_fn: Vec<C64>,
    x_fn: Vec<C64>,
    sampler: Sampler,
    spectral: Option<NoJumpSpectrum>,
}

struct NoJumpSpectrum {
    decomp: SpectralDecomposition,
    trace_row: Vec<C64>,
    n_row: Vec<C64>,
    nb_row: Vec<C64>,
    x_row: Vec<C64>,
}

fn observables(dims: crate::params::HilbertDims) -> [OperatorMatrix; 3] {
    [
        build_number(dims, Mode::Photon),
        build_number(dims, Mode::Phonon),
        build_displacement_quadrature(dims),
    ]
}

impl TrajectoryEngine {
    pub fn new(p: &SystemParams, h: &OperatorMatrix, sampler: Sampler) -> Result<Self> {
        let liouvillian = assemble_liouvillian(p, h)?;
        let steady = steady_state(&liouvillian)?;
        Self::with_steady_state(p, liouvillian, steady, sampler)
    }

    pub fn with_steady_state(
        p: &SystemParams,
        liouvillian: Liouvillian,
        steady: SteadyState,
        sampler: Sampler,
    ) -> Result<Self> {
        let dims = liouvillian.dims();
        let a = build_annihilation(dims, Mode::Photon);
        let jump_map = a.matrix().kron(&a.matrix().adjoint().transpose());
        let no_jump = liouvillian.no_jump();
        let [n_op, nb_op, x_op] = observables(dims);
        let n_fn = observable_functional(&n_op);
        let nb_fn = observable_functional(&nb_op);
        let x_fn = observable_functional(&x_op);
        let spectral = match sampler {
            Sampler::FirstOrder => None,
            Sampler::WaitingTime => {
                let decomp = SpectralDecomposition::new(&no_jump)?;
                let mut trace_fn = vec![ZERO; liouvillian.dim()];
                trace_positions(dims.dim()).for_each(|k| trace_fn[k] = C64::new(1.0, 0.0));
                Some(NoJumpSpectrum {
                    trace_row: decomp.functional(&trace_fn),
                    n_row: decomp.functional(&n_fn),
                    nb_row: decomp.functional(&nb_fn),
                    x_row: decomp.functional(&x_fn),
                    decomp,
                })
            }
        };
        Ok(Self {
            params: *p,
            liouvillian,
            steady,
            no_jump,
            jump_map,
            n_fn,
            nb_fn,
            x_fn,
            sampler,
            spectral,
        })
    }

    pub fn liouvillian(&self) -> &Liouvillian {
        &self.liouvillian
    }

    pub fn steady_state(&self) -> &SteadyState {
        &self.steady
    }

    pub fn sampler(&self) -> Sampler {
        self.sampler
    }

    /// Stationary detection rate ηκ_O n̄.
    pub fn stationary_rate(&self) -> f64 {
        self.liouvillian.monitored_rate()
            * self
                .steady
                .rho
                .expectation(&build_number(self.liouvillian.dims(), Mode::Photon))
    }

    pub fn default_dt(&self) -> f64 {
        let p = &self.params;
        let n_max = self.liouvillian.dims().n_photon_max as f64;
        let mut dt = (0.01 / p.mech_frequency).min(0.1 / p.kappa());
        let rate = self.liouvillian.monitored_rate() * n_max;
        if rate > 0.0 {
            dt = dt.min(0.05 / rate);
        }
        dt
    }

    fn initial_vector(&self, cfg: &TrajectoryConfig) -> Result<Vec<C64>> {
        let dims = self.liouvillian.dims();
        let rho = match &cfg.initial_state {
            InitialState::SteadyState => self.steady.rho.clone(),
            InitialState::Vacuum => DensityMatrix::vacuum(dims),
            InitialState::Custom(rho) => {
                if rho.dims() != dims {
                    return Err(Error::DimensionMismatch {
                        expected: dims.dim(),
                        found: rho.dims().dim(),
                    });
                }
                let tr = rho.trace();
                if (tr - C64::new(1.0, 0.0)).norm() > 1e-9 {
                    return Err(invalid("initial_state", format!("trace {tr} is not 1")));
                }
                rho.clone()
            }
        };
        Ok(rho.into_vec())
    }

    fn burn_in(&self, cfg: &TrajectoryConfig) -> f64 {
        cfg.burn_in.unwrap_or(match cfg.initial_state {
            InitialState::SteadyState => 0.0,
            _ if self.params.mech_damping > 0.0 => 5.0 / self.params.mech_damping,
            _ => 0.0,
        })
    }

    fn validate(&self, cfg: &TrajectoryConfig) -> Result<f64> {
        if !(cfg.t_total > 0.0) || !cfg.t_total.is_finite() {
            return Err(invalid("t_total", "must be positive and finite"));
        }
        let dt = cfg.dt.unwrap_or_else(|| self.default_dt());
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", "must be positive and finite"));
        }
        if cfg.post_jump_delays.iter().any(|d| !(*d >= 0.0)) {
            return Err(invalid("post_jump_delays", "delays must be nonnegative"));
        }
        let burn = self.burn_in(cfg);
        if !(burn >= 0.0) || burn >= cfg.t_total {
            return Err(invalid(
                "burn_in",
                format!("{burn} leaves no counting interval before {}", cfg.t_total),
            ));
        }
        Ok(dt)
    }

    pub fn run(&self, cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
        let dt = self.validate(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(cfg.stream);
        let x0 = self.initial_vector(cfg)?;
        let rec = Recorder::new(cfg, self.sampler, dt, self.burn_in(cfg));
        match self.sampler {
            Sampler::FirstOrder => self.run_first_order(cfg, dt, x0, rec, &mut rng),
            Sampler::WaitingTime => self.run_waiting_time(cfg, x0, rec, &mut rng),
        }
    }

    fn expectations(&self, x: &[C64], norm: f64) -> (f64, f64, f64) {
        (
            dot(&self.n_fn, x).re / norm,
            dot(&self.nb_fn, x).re / norm,
            dot(&self.x_fn, x).re / norm,
        )
    }

    fn rk4_step(&self, x: &mut [C64], h: f64, k: &mut [Vec<C64>; 5]) {
        let g = &self.no_jump;
        let n = x.len();
        g.matvec(x, &mut k[0]);
        for i in 0..n {
            k[4][i] = x[i] + k[0][i] * (0.5 * h);
        }
        let (head, tail) = k.split_at_mut(4);
        g.matvec(&tail[0], &mut head[1]);
        for i in 0..n {
            tail[0][i] = x[i] + head[1][i] * (0.5 * h);
        }
        g.matvec(&tail[0], &mut head[2]);
        for i in 0..n {
            tail[0][i] = x[i] + head[2][i] * h;
        }
        g.matvec(&tail[0], &mut head[3]);
        for i in 0..n {
            x[i] += (head[0][i] + (head[1][i] + head[2][i]) * 2.0 + head[3][i]) * (h / 6.0);
        }
    }

    fn apply_jump(&self, x: &[C64], t: f64) -> Result<Vec<C64>> {
        let d = self.liouvillian.dims().dim();
        let mut y = self.jump_map.apply(x);
        let tr = vec_trace(&y, d).re;
        if !(tr > 1e-14 * vec_trace(x, d).re.abs()) {
            return Err(Error::SamplingPathology {
                t,
                photons: tr / vec_trace(x, d).re,
            });
        }
        y.iter_mut().for_each(|v| *v /= tr);
        hermitize_in_place(&mut y, d);
        Ok(y)
    }

    fn run_first_order(
        &self,
        cfg: &TrajectoryConfig,
        dt: f64,
        mut x: Vec<C64>,
        mut rec: Recorder,
        rng: &mut ChaCha8Rng,
    ) -> Result<TrajectoryRecord> {
        let d = self.liouvillian.dims().dim();
        let eta_kappa = self.liouvillian.monitored_rate();
        let steps = (cfg.t_total / dt).round().max(1.0) as u64;
        let mut work: [Vec<C64>; 5] = std::array::from_fn(|_| vec![ZERO; x.len()]);
        for step in 0..=steps {
            let t = step as f64 * dt;
            while rec.next_sample_time().is_some_and(|ts| ts <= t + 0.5 * dt) {
                let (n, nb, xq) = self.expectations(&x, 1.0);
                rec.record.traces.push(TraceSample {
                    t,
                    n_photon: n,
                    n_phonon: nb,
                    x: xq,
                });
                if rec.keep_states {
                    rec.record
                        .states
                        .push(DensityMatrix::new(self.liouvillian.dims(), x.clone())?);
                }
                rec.next_sample += 1;
            }
            while rec.pending.peek().is_some_and(|p| p.t <= t + 0.5 * dt) {
                let p = rec.pending.pop().unwrap();
                rec.record.post_jump_photons[p.jump][p.delay] = dot(&self.n_fn, &x).re;
            }
            if step == steps {
                break;
            }
            let n = dot(&self.n_fn, &x).re;
            let prob = eta_kappa * n * dt;
            if prob > 0.05 {
                return Err(Error::JumpProbabilityTooLarge { probability: prob, dt });
            }
            let u: f64 = rng.random();
            if u < prob {
                let t_jump = t + dt;
                x = self.apply_jump(&x, t_jump)?;
                rec.jump(t_jump, n);
            } else {
                self.rk4_step(&mut x, dt, &mut work);
                let tr = vec_trace(&x, d);
                x.iter_mut().for_each(|v| *v /= tr);
            }
        }
        rec.record.t_end = steps as f64 * dt;
        Ok(rec.record)
    }

    fn run_waiting_time(
        &self,
        cfg: &TrajectoryConfig,
        x0: Vec<C64>,
        mut rec: Recorder,
        rng: &mut ChaCha8Rng,
    ) -> Result<TrajectoryRecord> {
        let spec = self.spectral.as_ref().expect("waiting-time sampler needs the spectrum");
        let rates = spec.decomp.eigenvalues();
        let t_end = cfg.t_total;
        let mut w = spec.decomp.coefficients(&x0);
        let mut t0 = 0.0;
        let mut trace_w: Vec<C64> = vec![ZERO; w.len()];

        loop {
            for k in 0..w.len() {
                trace_w[k] = spec.trace_row[k] * w[k];
            }
            let survival = |s: f64| -> (f64, f64) {
                let mut v = 0.0;
                let mut dv = 0.0;
                for (c, l) in trace_w.iter().zip(rates) {
                    let term = c * (l * s).exp();
                    v += term.re;
                    dv += (term * l).re;
                }
                (v, dv)
            };
            let u: f64 = rng.random();
            let horizon = t_end - t0;
            let (s_end, _) = survival(horizon);
            let wait = if s_end > u {
                None
            } else {
                Some(find_wait(&survival, u, horizon))
            };
            let seg_end = wait.map_or(t_end, |s| t0 + s);

            let eval = |s: f64, row: &[C64]| -> f64 {
                row.iter()
                    .zip(&w)
                    .zip(rates)
                    .map(|((r, a), l)| (r * a * (l * s).exp()).re)
                    .sum()
            };
            while let Some(ts) = rec.next_sample_time() {
                if ts > seg_end || (wait.is_some() && ts == seg_end) {
                    break;
                }
                let s = ts - t0;
                let norm = survival(s).0;
                rec.record.traces.push(TraceSample {
                    t: ts,
                    n_photon: eval(s, &spec.n_row) / norm,
                    n_phonon: eval(s, &spec.nb_row) / norm,
                    x: eval(s, &spec.x_row) / norm,
                });
                if rec.keep_states {
                    let factors: Vec<C64> = w.iter().zip(rates).map(|(a, l)| a * (l * s).exp() / norm).collect();
                    let state = spec.decomp.reconstruct(&factors);
                    rec.record
                        .states
                        .push(DensityMatrix::new(self.liouvillian.dims(), state)?);
                }
                rec.next_sample += 1;
            }
            while rec
                .pending
                .peek()
                .is_some_and(|p| p.t < seg_end || (wait.is_none() && p.t <= seg_end))
            {
                let p = rec.pending.pop().unwrap();
                let s = p.t - t0;
                rec.record.post_jump_photons[p.jump][p.delay] = eval(s, &spec.n_row) / survival(s).0;
            }

            let Some(s) = wait else { break };
            let factors: Vec<C64> = w.iter().zip(rates).map(|(a, l)| a * (l * s).exp()).collect();
            let norm = survival(s).0;
            let photons = eval(s, &spec.n_row) / norm;
            let x = spec.decomp.reconstruct(&factors);
            let t_jump = t0 + s;
            let y = self.apply_jump(&x, t_jump)?;
            rec.jump(t_jump, photons);
            w = spec.decomp.coefficients(&y);
            t0 = t_jump;
        }
        rec.record.t_end = t_end;
        Ok(rec.record)
    }
}

/// Solves S(s) = u for the survival function S on [0, horizon], given
/// S(0) = 1 > u ≥ S(horizon). Newton steps safeguarded by bisection.
fn find_wait(survival: &impl Fn(f64) -> (f64, f64), u: f64, horizon: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, horizon);
    let (_, d0) = survival(0.0);
    let mut s = if d0 < 0.0 {
        ((-u.ln()) / -d0).min(horizon)
    } else {
        0.5 * horizon
    };
    for _ in 0..200 {
        let (v, dv) = survival(s);
        let f = v - u;
        if f > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if f.abs() <= 1e-13 || hi - lo <= 1e-12 * hi.max(1.0) {
            return s;
        }
        // Newton on ln S, which is close to linear once the fast transients
        // after a detection have decayed
        let newton = if dv < 0.0 && v > 0.0 {
            s - (v.ln() - u.ln()) * v / dv
        } else {
            f64::NAN
        };
        s = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    s
}

pub fn run_trajectory(
    p: &SystemParams,
    h: &OperatorMatrix,
    cfg: &TrajectoryConfig,
    sampler: Sampler,
) -> Result<TrajectoryRecord> {
    TrajectoryEngine::new(p, h, sampler)?.run(cfg)
}

/// Outcome of an ensemble run; failures do not abort sibling trajectories.
#[derive(Debug)]
pub struct Ensemble {
    pub records: Vec<TrajectoryRecord>,
    pub failures: Vec<(u64, Error)>,
}

impl Ensemble {
    pub fn total_jumps(&self) -> usize {
        self.records.iter().map(|r| r.jump_times.len()).sum()
    }

    pub fn total_time(&self) -> f64 {
        self.records.iter().map(|r| r.duration()).sum()
    }
}

/// Runs trajectories with streams 0..n_traj of `cfg.seed` on `workers`
/// threads (0 uses the global pool). Output is ordered by stream.
pub fn run_ensemble(
    engine: &TrajectoryEngine,
    cfg: &TrajectoryConfig,
    n_traj: usize,
    workers: usize,
) -> Result<Ensemble> {
    if n_traj == 0 {
        return Err(invalid("n_traj", "must be at least 1"));
    }
    let job = || -> Vec<(u64, Result<TrajectoryRecord>)> {
        (0..n_traj as u64)
            .into_par_iter()
            .map(|i| {
                let mut c = cfg.clone();
                c.stream = i;
                (i, engine.run(&c))
            })
            .collect()
    };
    let results = if workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?
            .install(job)
    };
    let mut ensemble = Ensemble {
        records: Vec::with_capacity(n_traj),
        failures: Vec::new(),
    };
    for (i, r) in results {
        match r {
            Ok(rec) => ensemble.records.push(rec),
            Err(e) => {
                log::warn!("trajectory {i} failed: {e}");
                ensemble.failures.push((i, e));
            }
        }
    }
    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_hamiltonian, HamiltonianKind};
    use crate::params::HilbertDims;

    fn weak() -> (SystemParams, OperatorMatrix) {
        let p = SystemParams {
            detuning: 0.75,
            g0: 0.5,
            drive: 0.05,
            kappa_in: 0.0625,
            kappa_out: 0.0625,
            mech_damping: 0.02,
            ..SystemParams::default()
        };
        let d = HilbertDims::new(2, 5).unwrap();
        let h = build_hamiltonian(&p, d, HamiltonianKind::Optomechanical).unwrap();
        (p, h)
    }

    #[test]
    fn dark_cavity_never_clicks() {
        let p = SystemParams {
            g0: 0.5,
            ..SystemParams::default()
        };
        let d = HilbertDims::new(2, 3).unwrap();
        let h = build_hamiltonian(&p, d, HamiltonianKind::Optomechanical).unwrap();
        for sampler in [Sampler::FirstOrder, Sampler::WaitingTime] {
            let cfg = TrajectoryConfig {
                t_total: 20.0,
                initial_state: InitialState::Vacuum,
                burn_in: Some(0.0),
                ..TrajectoryConfig::default()
            };
            let rec = run_trajectory(&p, &h, &cfg, sampler).unwrap();
            assert!(rec.jump_times.is_empty());
            assert!(rec
                .traces
                .iter()
                .all(|s| s.n_photon.abs() < 1e-12 && s.n_phonon.abs() < 1e-12));
        }
    }

    #[test]
    fn seeds_replay_exactly() {
        let (p, h) = weak();
        let engine = TrajectoryEngine::new(&p, &h, Sampler::WaitingTime).unwrap();
        let cfg = TrajectoryConfig {
            seed: 7,
            t_total: 2000.0,
            sample_stride: 0,
            ..TrajectoryConfig::default()
        };
        let a = engine.run(&cfg).unwrap();
        let b = engine.run(&cfg).unwrap();
        assert_eq!(a.jump_times, b.jump_times);
        assert!(!a.jump_times.is_empty());
        assert!(a.jump_times.windows(2).all(|w| w[1] > w[0]));
        let other = engine
            .run(&TrajectoryConfig {
                stream: 1,
                ..cfg.clone()
            })
            .unwrap();
        assert_ne!(a.jump_times, other.jump_times);
    }

    #[test]
    fn ensemble_of_one_matches_single_run() {
        let (p, h) = weak();
        let engine = TrajectoryEngine::new(&p, &h, Sampler::FirstOrder).unwrap();
        let cfg = TrajectoryConfig {
            seed: 3,
            t_total: 200.0,
            ..TrajectoryConfig::default()
        };
        let single = engine.run(&cfg).unwrap();
        let ens = run_ensemble(&engine, &cfg, 1, 1).unwrap();
        assert_eq!(ens.records[0], single);
    }

    #[test]
    fn first_order_rejects_large_steps() {
        let (p, h) = weak();
        let engine = TrajectoryEngine::new(&p, &h, Sampler::FirstOrder).unwrap();
        let cfg = TrajectoryConfig {
            dt: Some(50.0),
            t_total: 1000.0,
            initial_state: InitialState::Custom(DensityMatrix::fock(h.dims(), 2, 0)),
            burn_in: Some(0.0),
            ..TrajectoryConfig::default()
        };
        assert!(matches!(engine.run(&cfg), Err(Error::JumpProbabilityTooLarge { .. })));
    }

    #[test]
    fn traces_are_physical_and_csv_has_columns() {
        let (p, h) = weak();
        let engine = TrajectoryEngine::new(&p, &h, Sampler::WaitingTime).unwrap();
        let cfg = TrajectoryConfig {
            seed: 11,
            t_total: 500.0,
            dt: Some(0.5),
            sample_stride: 1,
            post_jump_delays: vec![0.0, 1.0, 10.0],
            ..TrajectoryConfig::default()
        };
        let rec = engine.run(&cfg).unwrap();
        assert_eq!(rec.traces.len(), 1001);
        for s in &rec.traces {
            assert!(s.n_photon >= -1e-10 && s.n_phonon >= -1e-10 && s.x.is_finite());
        }
        for (pre, post) in rec.pre_jump_photons.iter().zip(&rec.post_jump_photons) {
            assert!(*pre > 0.0);
            if post[0].is_finite() {
                // just after a detection the photon number is the post-jump value
                assert!(post[0] >= 0.0);
            }
        }
        let mut buf = Vec::new();
        rec.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,n_photon,n_phonon,x,jump_flag\n"));
        let flagged: usize = text
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(flagged, rec.jump_times.len());
    }
}
