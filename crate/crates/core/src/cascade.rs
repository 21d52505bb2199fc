//! Multi-photon cascades at red detuning Δ = −n g0²/Ω: closed-form
//! transition rates, the regime test, regime maps and parameter sweeps of
//! the long-time Fano factor.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{fano_curve, stationary_counting, CountingOptions};
use crate::error::{invalid, Error, Result};
use crate::lindblad::{assemble_liouvillian, DensityMatrix};
use crate::operators::{build_hamiltonian, build_number, HamiltonianKind, Mode};
use crate::params::{HilbertDims, SystemParams};
use crate::sparse::C64;
use crate::spectral::SpectralDecomposition;
use crate::trajectory::{run_ensemble, Sampler, TrajectoryConfig, TrajectoryEngine};

/// Thresholds for the three cascade conditions:
/// Γ₀ₙ > m₁Γ₀₁, |Δ| ≥ m₂κ and κ ≥ m₃Γ₀ₙ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub first: f64,
    pub second: f64,
    pub third: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            first: 1.0,
            second: 5.0,
            third: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeQuery {
    n: usize,
    params: SystemParams,
    margins: Margins,
}

impl CascadeQuery {
    /// Validates `n ≥ 2`, g0 > 0 and that Δ sits on the n-photon resonance.
    pub fn new(n: usize, params: SystemParams, margins: Margins) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "resonance order must be at least 2"));
        }
        params.validate()?;
        if !(params.g0 > 0.0) {
            return Err(invalid("g0", "cascade rates need g0 > 0"));
        }
        let target = params.resonant_detuning(n);
        if (params.detuning - target).abs() > 1e-12 * target.abs().max(1.0) {
            return Err(invalid(
                "detuning",
                format!("Δ = {} is off the {n}-photon resonance {target}", params.detuning),
            ));
        }
        Ok(Self { n, params, margins })
    }

    /// Query with Δ set to the n-photon resonance.
    pub fn at_resonance(n: usize, mut params: SystemParams, margins: Margins) -> Result<Self> {
        params.detuning = params.resonant_detuning(n);
        Self::new(n, params, margins)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn margins(&self) -> Margins {
        self.margins
    }
}

/// Γ₀→₁ = α² κ e^{−(g0/Ω)²} / ((n−1)² g0⁴/Ω² + κ²/4).
pub fn rate_0_to_1(q: &CascadeQuery) -> f64 {
    let p = &q.params;
    let k = p.kappa();
    let m = (q.n - 1) as f64;
    let shift = p.kerr_shift();
    p.drive * p.drive * k * (-p.coupling_ratio().powi(2)).exp() / (m * m * shift * shift + k * k / 4.0)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Γ₀→ₙ = (4α^{2n}/κ)(Ω/g0²)^{2(n−1)} e^{−n(g0/Ω)²} / [(n−1)!]³,
/// evaluated in the log domain.
pub fn rate_0_to_n(q: &CascadeQuery) -> f64 {
    let p = &q.params;
    if p.drive == 0.0 {
        return 0.0;
    }
    let n = q.n as f64;
    let ln = 4f64.ln() + 2.0 * n * p.drive.abs().ln()
        - p.kappa().ln()
        - 2.0 * (n - 1.0) * p.kerr_shift().ln()
        - n * p.coupling_ratio().powi(2)
        - 3.0 * ln_factorial(q.n - 1);
    ln.exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Cascade,
    /// The lowest-index condition that fails (1, 2 or 3).
    Violates(u8),
}

impl Region {
    pub fn label(&self) -> String {
        match self {
            Region::Cascade => "cascade".into(),
            Region::Violates(i) => format!("({i})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeCell {
    pub alpha: f64,
    pub g0: f64,
    pub gamma_01: f64,
    pub gamma_0n: f64,
    /// Which of the three conditions hold.
    pub holds: [bool; 3],
    pub region: Region,
}

impl RegimeCell {
    pub fn in_cascade(&self) -> bool {
        self.region == Region::Cascade
    }
}

/// Evaluates the three cascade conditions for one query.
pub fn classify(q: &CascadeQuery) -> RegimeCell {
    let g01 = rate_0_to_1(q);
    let g0n = rate_0_to_n(q);
    let p = &q.params;
    let k = p.kappa();
    let m = q.margins;
    let holds = [
        g0n > m.first * g01,
        p.detuning.abs() >= m.second * k,
        k >= m.third * g0n,
    ];
    let region = match holds.iter().position(|h| !h) {
        None => Region::Cascade,
        Some(i) => Region::Violates(i as u8 + 1),
    };
    RegimeCell {
        alpha: p.drive,
        g0: p.g0,
        gamma_01: g01,
        gamma_0n: g0n,
        holds,
        region,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeMap {
    pub n: usize,
    pub g0_over_kappa: f64,
    pub alphas: Vec<f64>,
    pub g0s: Vec<f64>,
    /// Row-major over (g0, α): `cells[i * alphas.len() + j]`.
    pub cells: Vec<RegimeCell>,
}

impl RegimeMap {
    pub fn cell(&self, g0_index: usize, alpha_index: usize) -> &RegimeCell {
        &self.cells[g0_index * self.alphas.len() + alpha_index]
    }

    /// Writes `alpha,g0,gamma_01,gamma_0n,first,second,third,region`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "alpha", "g0", "gamma_01", "gamma_0n", "first", "second", "third", "region",
        ])?;
        for c in &self.cells {
            w.write_record(&[
                c.alpha.to_string(),
                c.g0.to_string(),
                c.gamma_01.to_string(),
                c.gamma_0n.to_string(),
                c.holds[0].to_string(),
                c.holds[1].to_string(),
                c.holds[2].to_string(),
                c.region.label(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn map_params(n: usize, g0: f64, g0_over_kappa: f64, alpha: f64) -> SystemParams {
    let kappa = g0 / g0_over_kappa;
    let mut p = SystemParams {
        g0,
        drive: alpha,
        kappa_in: kappa / 2.0,
        kappa_out: kappa / 2.0,
        ..SystemParams::default()
    };
    p.detuning = p.resonant_detuning(n);
    p
}

/// Regime map over (α_L/Ω, g0/Ω) at fixed g0/κ, with Ω = 1 and a
/// symmetric cavity.
pub fn regime_map(n: usize, g0_over_kappa: f64, alphas: &[f64], g0s: &[f64], margins: Margins) -> Result<RegimeMap> {
    if !(g0_over_kappa > 0.0) {
        return Err(invalid("g0_over_kappa", "must be positive"));
    }
    if alphas.iter().chain(g0s).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid("grid", "grid values must be positive"));
    }
    let mut cells = Vec::with_capacity(alphas.len() * g0s.len());
    for &g0 in g0s {
        for &alpha in alphas {
            let q = CascadeQuery::new(n, map_params(n, g0, g0_over_kappa, alpha), margins)?;
            cells.push(classify(&q));
        }
    }
    Ok(RegimeMap {
        n,
        g0_over_kappa,
        alphas: alphas.to_vec(),
        g0s: g0s.to_vec(),
        cells,
    })
}

/// Drive interval [α_lo, α_hi] in which all three conditions hold, or `None`.
///
/// Γ₀ₙ/Γ₀₁ grows as α^{2n−2} and Γ₀ₙ as α^{2n}, so the first condition sets
/// the lower end and the third the upper end; the second does not involve α.
pub fn cascade_window(q: &CascadeQuery) -> Option<(f64, f64)> {
    let mut unit = q.clone();
    unit.params.drive = 1.0;
    let g01 = rate_0_to_1(&unit);
    let g0n = rate_0_to_n(&unit);
    let p = &q.params;
    let k = p.kappa();
    let m = q.margins;
    if p.detuning.abs() < m.second * k {
        return None;
    }
    let n = q.n as f64;
    let lo = (m.first * g01 / g0n).powf(1.0 / (2.0 * n - 2.0));
    let hi = (k / (m.third * g0n)).powf(1.0 / (2.0 * n));
    (lo < hi).then_some((lo, hi))
}

/// Result of the numerical |0⟩ → |n⟩ transfer-rate extraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRate {
    pub alpha: f64,
    /// Γ₀→ₙ from the closed form.
    pub predicted_0n: f64,
    pub predicted_01: f64,
    /// Mean probability flux out of the n-photon manifold per surviving
    /// population, n κ Pₙ / P_survive, over the fit window.
    pub extracted_0n: f64,
    /// Decay rate of the surviving population from a log-linear fit.
    pub total_decay: f64,
    pub window: (f64, f64),
}

impl TransferRate {
    pub fn ratio(&self) -> f64 {
        self.extracted_0n / self.predicted_0n
    }
}

/// Extracts the rate at which the drive moves population from |0, 0⟩ into
/// the n-photon manifold.
///
/// Photon loss is made absorbing (its jump term is dropped from the
/// generator), so the trace of the state is the probability that no photon
/// has left yet. Starting from |0, 0⟩, the flux out through the n-photon
/// states, nκ Pₙ(t), divided by the surviving population, is the transfer
/// rate once intracavity transients have died out. It is averaged over
/// t ∈ [T/8, T] with T = 0.1/Γ₀→ₙ so depletion stays near 10%.
pub fn transfer_rate(q: &CascadeQuery, dims: HilbertDims) -> Result<TransferRate> {
    let p = q.params();
    let n = q.n();
    if dims.n_photon_max < n {
        return Err(invalid("n_photon_max", format!("must reach the {n}-photon manifold")));
    }
    let predicted = rate_0_to_n(q);
    if !(predicted > 0.0) {
        return Err(invalid("drive", "transfer rate needs α_L > 0"));
    }
    let h = build_hamiltonian(p, dims, HamiltonianKind::Optomechanical)?;
    let l = assemble_liouvillian(p, &h)?;
    let d = dims.dim();
    let a = crate::operators::build_annihilation(dims, Mode::Photon);
    let photon_jump = a.matrix().kron(&a.matrix().conj()).scaled(C64::new(p.kappa(), 0.0));
    let absorbing = l.generator().add(&photon_jump, C64::new(1.0, 0.0), C64::new(-1.0, 0.0));
    let decomp = SpectralDecomposition::new(&absorbing)?;

    let rho0 = DensityMatrix::fock(dims, 0, 0);
    let x0 = rho0.as_slice();
    let mut trace_fn = vec![C64::new(0.0, 0.0); d * d];
    crate::lindblad::trace_positions(d).for_each(|i| trace_fn[i] = C64::new(1.0, 0.0));
    let survive = decomp.series(&trace_fn, x0);
    // population of the n-photon manifold
    let mut proj = vec![C64::new(0.0, 0.0); d * d];
    for i in (0..d).filter(|&i| dims.occupation(i).0 == n) {
        proj[i * d + i] = C64::new(1.0, 0.0);
    }
    let pn = decomp.series(&proj, x0);

    let t_end = 0.1 / predicted;
    let t_start = t_end / 8.0;
    let samples = 36;
    let mut flux = 0.0;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..samples {
        let t = t_start + (t_end - t_start) * i as f64 / (samples - 1) as f64;
        let s = survive.eval(t);
        if !(s > 0.0) {
            return Err(Error::OutOfValidity(format!("surviving population {s} at t = {t}")));
        }
        flux += n as f64 * p.kappa() * pn.eval(t) / s;
        let y = s.ln();
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
    }
    let m = samples as f64;
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    Ok(TransferRate {
        alpha: p.drive,
        predicted_0n: predicted,
        predicted_01: rate_0_to_1(q),
        extracted_0n: flux / m,
        total_decay: -slope,
        window: (t_start, t_end),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// α_L
    Drive,
    /// Γ_M
    MechDamping,
    /// n_th
    Thermal,
}

impl SweepAxis {
    pub fn apply(&self, p: &mut SystemParams, value: f64) {
        match self {
            SweepAxis::Drive => p.drive = value,
            SweepAxis::MechDamping => p.mech_damping = value,
            SweepAxis::Thermal => p.n_th = value,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Drive => "alpha",
            SweepAxis::MechDamping => "mech_damping",
            SweepAxis::Thermal => "n_th",
        }
    }
}

/// How F(∞) is obtained at each sweep point.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    /// Exact long-time cumulants of the master equation (no statistical
    /// error).
    MasterEquation,
    /// Plateau of the counting Fano curve from a trajectory ensemble.
    Trajectories {
        sampler: Sampler,
        t_total: f64,
        trajectories: usize,
        seed: u64,
        workers: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub dims: HilbertDims,
    pub estimator: Estimator,
    /// Cutoff increments of the convergence probe, if any.
    pub probe: Option<(usize, usize)>,
    /// Largest tolerated |ΔF| between the two truncations.
    pub probe_tolerance: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            dims: HilbertDims::default(),
            estimator: Estimator::MasterEquation,
            probe: None,
            probe_tolerance: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub fano: f64,
    pub error: f64,
    pub mean_photons: f64,
    /// (F − 1)/n̄
    pub rescaled: f64,
    /// ⟨(N − ⟨N⟩)³⟩/⟨N⟩ in the long-time limit.
    pub third: f64,
    pub third_error: f64,
    pub rate: f64,
    /// F at the probe truncation minus F at the working truncation.
    pub probe_drift: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub n: usize,
    pub axis: SweepAxis,
    pub hamiltonian: HamiltonianKind,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            self.axis.name(),
            "fano",
            "error",
            "mean_photons",
            "rescaled",
            "third",
            "third_error",
            "rate",
            "probe_drift",
            "flag",
        ])?;
        for r in &self.rows {
            w.write_record(&[
                r.value.to_string(),
                r.fano.to_string(),
                r.error.to_string(),
                r.mean_photons.to_string(),
                r.rescaled.to_string(),
                r.third.to_string(),
                r.third_error.to_string(),
                r.rate.to_string(),
                r.probe_drift.map(|d| d.to_string()).unwrap_or_default(),
                r.flag.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows that carry a flag.
    pub fn flagged(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.flag.is_some())
    }
}

struct PointEstimate {
    fano: f64,
    error: f64,
    third: f64,
    third_error: f64,
    rate: f64,
    mean_photons: f64,
}

fn estimate_point(
    p: &SystemParams,
    dims: HilbertDims,
    kind: HamiltonianKind,
    est: &Estimator,
) -> Result<PointEstimate> {
    let h = build_hamiltonian(p, dims, kind)?;
    let l = assemble_liouvillian(p, &h)?;
    match est {
        Estimator::MasterEquation => {
            let c = stationary_counting(&l)?;
            Ok(PointEstimate {
                fano: c.fano,
                error: 0.0,
                third: c.third_normalized,
                third_error: 0.0,
                rate: c.rate,
                mean_photons: c.mean_photons,
            })
        }
        Estimator::Trajectories {
            sampler,
            t_total,
            trajectories,
            seed,
            workers,
        } => {
            let engine = TrajectoryEngine::new(p, &h, *sampler)?;
            let mean_photons = engine.steady_state().rho.expectation(&build_number(dims, Mode::Photon));
            let cfg = TrajectoryConfig {
                seed: *seed,
                t_total: *t_total,
                ..TrajectoryConfig::default()
            };
            let ens = run_ensemble(&engine, &cfg, *trajectories, *workers)?;
            if let Some((stream, e)) = ens.failures.first() {
                return Err(Error::InsufficientStatistics(format!(
                    "trajectory {stream} failed: {e}"
                )));
            }
            let lo = 1.0 / p.kappa();
            let hi = if p.mech_damping > 0.0 {
                10.0 / p.mech_damping
            } else {
                t_total / 10.0
            }
            .min(t_total / 10.0);
            if !(hi > lo) {
                return Err(Error::InsufficientStatistics(
                    "trajectories too short for a Fano plateau".into(),
                ));
            }
            let grid: Vec<f64> = (0..12).map(|i| lo * (hi / lo).powf(i as f64 / 11.0)).collect();
            let curve = fano_curve(&ens.records, &grid, &CountingOptions::default())?;
            let plateau = curve
                .plateau()
                .ok_or_else(|| Error::InsufficientStatistics("no valid Fano points".into()))?;
            let last = curve.points.iter().rev().find(|p| p.flag.is_none()).unwrap();
            Ok(PointEstimate {
                fano: plateau.value,
                error: plateau.error,
                third: last.third_central,
                third_error: last.third_error,
                rate: ens.total_jumps() as f64 / ens.total_time(),
                mean_photons,
            })
        }
    }
}

/// Long-time Fano factor along one parameter axis at the n-photon
/// resonance. Points are independent and run in parallel; a point that
/// fails or drifts under the convergence probe is flagged, not dropped.
pub fn cascade_sweep(
    n: usize,
    base: &SystemParams,
    axis: SweepAxis,
    values: &[f64],
    kind: HamiltonianKind,
    opts: &SweepOptions,
) -> Result<SweepTable> {
    let mut base = *base;
    base.detuning = base.resonant_detuning(n);
    CascadeQuery::new(n, base, Margins::default())?;
    let rows = values
        .par_iter()
        .map(|&value| {
            let mut p = base;
            axis.apply(&mut p, value);
            let failed = |e: Error| SweepRow {
                value,
                fano: f64::NAN,
                error: f64::NAN,
                mean_photons: f64::NAN,
                rescaled: f64::NAN,
                third: f64::NAN,
                third_error: f64::NAN,
                rate: f64::NAN,
                probe_drift: None,
                flag: Some(e.to_string()),
            };
            let est = match estimate_point(&p, opts.dims, kind, &opts.estimator) {
                Ok(e) => e,
                Err(e) => return failed(e),
            };
            let mut flag = None;
            let probe_drift = opts.probe.map(|(dp, dn)| {
                let dims = opts.dims.enlarged(dp, dn);
                match estimate_point(&p, dims, kind, &Estimator::MasterEquation) {
                    Ok(big) => {
                        let reference = if matches!(opts.estimator, Estimator::MasterEquation) {
                            est.fano
                        } else {
                            estimate_point(&p, opts.dims, kind, &Estimator::MasterEquation)
                                .map(|e| e.fano)
                                .unwrap_or(est.fano)
                        };
                        let drift = big.fano - reference;
                        if drift.abs() > opts.probe_tolerance {
                            flag = Some(format!("unconverged: F drifts by {drift:.3e} at cutoffs {dims:?}"));
                        }
                        drift
                    }
                    Err(e) => {
                        flag = Some(format!("probe failed: {e}"));
                        f64::NAN
                    }
                }
            });
            SweepRow {
                value,
                fano: est.fano,
                error: est.error,
                mean_photons: est.mean_photons,
                rescaled: (est.fano - 1.0) / est.mean_photons,
                third: est.third,
                third_error: est.third_error,
                rate: est.rate,
                probe_drift,
                flag,
            }
        })
        .collect();
    Ok(SweepTable {
        n,
        axis,
        hamiltonian: kind,
        rows,
    })
}
