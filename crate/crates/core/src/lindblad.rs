//! Vectorized Lindblad generator, time propagation, steady states and
//! two-time correlations.
//!
//! Density matrices are stored row-major, `vec(ρ)[i·D + j] = ρ_ij`, so the
//! map ρ ↦ AρB becomes A ⊗ Bᵀ.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatMut};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::hermitian_eigenvalues;
use crate::ode::{Dopri5, OdeOptions};
use crate::operators::{build_annihilation, Mode, OperatorMatrix};
use crate::params::{HilbertDims, SystemParams};
use crate::sparse::{CsrMatrix, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// A (possibly conditional) state of the photon ⊗ phonon system.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: HilbertDims,
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn new(dims: HilbertDims, data: Vec<C64>) -> Result<Self> {
        let d = dims.dim();
        if data.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_dense(dims: HilbertDims, m: &Mat<C64>) -> Result<Self> {
        let d = dims.dim();
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.nrows(),
            });
        }
        Ok(Self {
            dims,
            data: (0..d * d).map(|k| m[(k / d, k % d)]).collect(),
        })
    }

    /// Projector onto |n_a, n_b⟩.
    pub fn fock(dims: HilbertDims, n_photon: usize, n_phonon: usize) -> Self {
        let d = dims.dim();
        let i = dims.index(n_photon, n_phonon);
        let mut data = vec![ZERO; d * d];
        data[i * d + i] = ONE;
        Self { dims, data }
    }

    pub fn vacuum(dims: HilbertDims) -> Self {
        Self::fock(dims, 0, 0)
    }

    /// Photon vacuum times a thermal phonon state with occupation `n_th`,
    /// renormalized on the truncated ladder.
    pub fn thermal_phonon(dims: HilbertDims, n_th: f64) -> Self {
        let d = dims.dim();
        let ratio = if n_th > 0.0 { n_th / (1.0 + n_th) } else { 0.0 };
        let weights: Vec<f64> = (0..dims.phonon_levels()).map(|n| ratio.powi(n as i32)).collect();
        let norm: f64 = weights.iter().sum();
        let mut data = vec![ZERO; d * d];
        for (nb, w) in weights.iter().enumerate() {
            let i = dims.index(0, nb);
            data[i * d + i] = C64::new(w / norm, 0.0);
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> HilbertDims {
        self.dims
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dims.dim() + j]
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let d = self.dims.dim();
        Mat::from_fn(d, d, |i, j| self.data[i * d + j])
    }

    pub fn trace(&self) -> C64 {
        let d = self.dims.dim();
        (0..d).map(|i| self.data[i * d + i]).sum()
    }

    /// Tr(Aρ).
    pub fn expectation_complex(&self, op: &OperatorMatrix) -> C64 {
        let d = self.dims.dim();
        op.matrix().iter().map(|(r, c, v)| v * self.data[c * d + r]).sum()
    }

    /// Re Tr(Aρ), the expectation value of a Hermitian observable.
    pub fn expectation(&self, op: &OperatorMatrix) -> f64 {
        self.expectation_complex(op).re
    }

    pub fn normalize(&mut self) -> Result<()> {
        let tr = self.trace();
        if !(tr.norm() > 1e-300) || !tr.re.is_finite() {
            return Err(Error::OutOfValidity(format!("cannot normalize state with trace {tr}")));
        }
        let inv = tr.inv();
        self.data.iter_mut().for_each(|v| *v *= inv);
        Ok(())
    }

    /// Replaces ρ by (ρ + ρ†)/2.
    pub fn hermitize(&mut self) {
        hermitize_in_place(&mut self.data, self.dims.dim());
    }

    /// Frobenius norm of ρ − ρ†.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dims.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += (self.data[i * d + j] - self.data[j * d + i].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut h = self.clone();
        h.hermitize();
        let eig = hermitian_eigenvalues(&h.to_dense())?;
        Ok(eig.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Marginal photon-number distribution P(n_a).
    pub fn photon_distribution(&self) -> Vec<f64> {
        let d = self.dims.dim();
        let mut p = vec![0.0; self.dims.photon_levels()];
        for i in 0..d {
            p[self.dims.occupation(i).0] += self.data[i * d + i].re;
        }
        p
    }

    /// Marginal phonon-number distribution P(n_b).
    pub fn phonon_distribution(&self) -> Vec<f64> {
        let d = self.dims.dim();
        let mut p = vec![0.0; self.dims.phonon_levels()];
        for i in 0..d {
            p[self.dims.occupation(i).1] += self.data[i * d + i].re;
        }
        p
    }
}

pub(crate) fn hermitize_in_place(data: &mut [C64], d: usize) {
    for i in 0..d {
        data[i * d + i].im = 0.0;
        for j in i + 1..d {
            let avg = (data[i * d + j] + data[j * d + i].conj()) * 0.5;
            data[i * d + j] = avg;
            data[j * d + i] = avg.conj();
        }
    }
}

/// Linear functional `o` with `o · vec(ρ) = Tr(Aρ)`.
pub fn observable_functional(op: &OperatorMatrix) -> Vec<C64> {
    let d = op.dims().dim();
    let mut o = vec![ZERO; d * d];
    for (r, c, v) in op.matrix().iter() {
        o[c * d + r] += v;
    }
    o
}

/// Positions of the diagonal entries in a vectorized D×D matrix.
pub fn trace_positions(d: usize) -> impl Iterator<Item = usize> {
    (0..d).map(move |i| i * d + i)
}

pub(crate) fn vec_trace(x: &[C64], d: usize) -> C64 {
    trace_positions(d).map(|k| x[k]).sum()
}

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// A dissipative channel rate · D[c].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub rate: f64,
}

/// The generator L of dρ/dt = Lρ together with the monitored jump
/// superoperator J = ηκ_O a·a†.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    dims: HilbertDims,
    generator: CsrMatrix,
    jump: CsrMatrix,
    monitored_rate: f64,
    channels: Vec<Channel>,
}

/// A ⊗ Bᵀ, the superoperator of ρ ↦ AρB.
fn sandwich(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    a.kron(&b.transpose())
}

fn dissipator(c: &CsrMatrix, rate: f64) -> CsrMatrix {
    let d = c.nrows();
    let id = CsrMatrix::identity(d);
    let cd = c.adjoint();
    let cdc = cd.mul(c);
    sandwich(c, &cd)
        .add(&sandwich(&cdc, &id), ONE, C64::new(-0.5, 0.0))
        .add(&sandwich(&id, &cdc), ONE, C64::new(-0.5, 0.0))
        .scaled(C64::new(rate, 0.0))
}

/// Builds the Lindblad generator for Hamiltonian `h` with photon loss κ D[a]
/// (split into κ_I and κ_O), mechanical damping Γ_M(n_th+1) D[b] and
/// heating Γ_M n_th D[b†].
pub fn assemble_liouvillian(p: &SystemParams, h: &OperatorMatrix) -> Result<Liouvillian> {
    p.validate()?;
    let dims = h.dims();
    let d = dims.dim();
    if h.matrix().nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: h.matrix().nrows(),
        });
    }
    let id = CsrMatrix::identity(d);
    let a = build_annihilation(dims, Mode::Photon);
    let b = build_annihilation(dims, Mode::Phonon);

    let mut generator =
        sandwich(h.matrix(), &id).add(&sandwich(&id, h.matrix()), C64::new(0.0, -1.0), C64::new(0.0, 1.0));
    let mut channels = Vec::new();
    let mut push = |gen: &mut CsrMatrix, name: &str, c: &CsrMatrix, rate: f64| {
        if rate > 0.0 {
            *gen = gen.add(&dissipator(c, rate), ONE, ONE);
        }
        channels.push(Channel {
            name: name.to_string(),
            rate,
        });
    };
    push(&mut generator, "kappa_in", a.matrix(), p.kappa_in);
    push(&mut generator, "kappa_out", a.matrix(), p.kappa_out);
    push(
        &mut generator,
        "phonon_loss",
        b.matrix(),
        p.mech_damping * (p.n_th + 1.0),
    );
    push(
        &mut generator,
        "phonon_gain",
        &b.matrix().adjoint(),
        p.mech_damping * p.n_th,
    );

    let monitored_rate = p.detector_efficiency * p.kappa_out;
    let jump = sandwich(a.matrix(), &a.matrix().adjoint()).scaled(C64::new(monitored_rate, 0.0));
    Ok(Liouvillian {
        dims,
        generator,
        jump,
        monitored_rate,
        channels,
    })
}

impl Liouvillian {
    pub fn dims(&self) -> HilbertDims {
        self.dims
    }

    /// Length of a vectorized density matrix, D².
    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    pub fn generator(&self) -> &CsrMatrix {
        &self.generator
    }

    /// J ρ = ηκ_O aρa†.
    pub fn jump(&self) -> &CsrMatrix {
        &self.jump
    }

    /// ηκ_O.
    pub fn monitored_rate(&self) -> f64 {
        self.monitored_rate
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// L − J, the generator of the unnormalized no-detection evolution.
    pub fn no_jump(&self) -> CsrMatrix {
        self.generator.add(&self.jump, ONE, C64::new(-1.0, 0.0))
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.generator.apply(x)
    }

    /// ‖1ᵀL‖, zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dims.dim();
        let mut row = vec![ZERO; self.dim()];
        for (r, c, v) in self.generator.iter() {
            if r / d == r % d {
                row[c] += v;
            }
        }
        norm2(&row)
    }
}

/// Integrates x' = G x and returns x at each of the ascending `times`.
pub fn evolve_vector(generator: &CsrMatrix, x0: &[C64], times: &[f64], opts: OdeOptions) -> Result<Vec<Vec<C64>>> {
    let mut solver = Dopri5::new(|x: &[C64], dx: &mut [C64]| generator.matvec(x, dx), x0.len(), opts);
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t {
            return Err(Error::InvalidParameter {
                name: "times",
                reason: "output times must be ascending and nonnegative".into(),
            });
        }
        solver.advance(&mut x, t, target)?;
        t = target;
        out.push(x.clone());
    }
    Ok(out)
}

fn trace_guard(x: &[C64], d: usize, t: f64) {
    let tr = vec_trace(x, d);
    if (tr - ONE).norm() > 1e-8 {
        log::warn!("trace drifted to {tr} at t = {t}");
    }
}

/// ρ(t) for each requested time.
pub fn propagate_sampled(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    times: &[f64],
    opts: OdeOptions,
) -> Result<Vec<DensityMatrix>> {
    let d = l.dims.dim();
    let xs = evolve_vector(&l.generator, rho0.as_slice(), times, opts)?;
    Ok(xs
        .into_iter()
        .zip(times)
        .map(|(x, &t)| {
            trace_guard(&x, d, t);
            DensityMatrix { dims: l.dims, data: x }
        })
        .collect())
}

pub fn propagate(l: &Liouvillian, rho0: &DensityMatrix, t: f64, opts: OdeOptions) -> Result<DensityMatrix> {
    Ok(propagate_sampled(l, rho0, &[t], opts)?.pop().unwrap())
}

/// Sparse LU of L with its first row replaced by the trace functional.
///
/// Solving with right-hand side `b` (with `b[0]` overwritten by the
/// requested trace) gives the unique x with Tr x = b[0] and
/// (Lx)_k = b_k for k ≥ 1. For traceless `b` this is L⁻¹b restricted to the
/// traceless subspace.
pub struct BorderedSolver {
    d: usize,
    lu: Lu<usize, C64>,
}

impl BorderedSolver {
    pub fn new(generator: &CsrMatrix, d: usize) -> Result<Self> {
        let k = generator.nrows();
        let mut triplets: Vec<Triplet<usize, usize, C64>> = generator
            .iter()
            .filter(|&(r, _, _)| r != 0)
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        triplets.extend(trace_positions(d).map(|c| Triplet::new(0, c, ONE)));
        let m = SparseColMat::<usize, C64>::try_new_from_triplets(k, k, &triplets)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { .. } => Error::DegenerateSteadyState { gap: 0.0 },
            other => Error::Factorization(format!("{other:?}")),
        })?;
        Ok(Self { d, lu })
    }

    /// Solves in place; `trace` becomes the trace of the solution.
    pub fn solve(&self, rhs: &mut [C64], trace: C64) {
        rhs[0] = trace;
        let n = rhs.len();
        self.lu.solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
    }

    /// Solves L x = b on the traceless subspace; `b` must be traceless.
    pub fn solve_traceless(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve(&mut x, ZERO);
        x
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyOptions {
    pub tolerance: f64,
    /// Inverse-iteration steps used for the gap estimate.
    pub gap_iterations: usize,
    /// Gap estimates below this are treated as a degenerate null space.
    pub degeneracy_threshold: f64,
    pub refinement_steps: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            gap_iterations: 4,
            degeneracy_threshold: 1e-9,
            refinement_steps: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    SparseLu,
    Propagation,
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// ‖Lρ‖₂.
    pub residual: f64,
    /// Magnitude of the slowest decaying mode, from inverse iteration.
    pub gap_estimate: f64,
    pub method: SteadyMethod,
}

pub fn steady_state(l: &Liouvillian) -> Result<SteadyState> {
    steady_state_with(l, SteadyOptions::default())
}

/// Inverse iteration on the traceless subspace; returns an estimate of the
/// smallest nonzero |λ| of L.
pub fn gap_estimate(solver: &BorderedSolver, k: usize, iterations: usize) -> f64 {
    let d = solver.d();
    let mut v: Vec<C64> = (0..k)
        .map(|i| {
            C64::new(
                ((i as f64) * 0.7548776662).fract() - 0.5,
                ((i as f64) * 0.5698402910).fract() - 0.5,
            )
        })
        .collect();
    let shift = vec_trace(&v, d) / d as f64;
    trace_positions(d).for_each(|p| v[p] -= shift);
    let mut growth = 0.0;
    for _ in 0..iterations.max(1) {
        let nv = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let x = solver.solve_traceless(&v);
        growth = norm2(&x);
        if !growth.is_finite() {
            return 0.0;
        }
        v = x;
    }
    1.0 / growth
}

pub fn steady_state_with(l: &Liouvillian, opts: SteadyOptions) -> Result<SteadyState> {
    let d = l.dims.dim();
    let k = l.dim();
    let solver = BorderedSolver::new(&l.generator, d)?;
    let mut x = vec![ZERO; k];
    solver.solve(&mut x, ONE);
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::DegenerateSteadyState { gap: 0.0 });
    }
    let gap = gap_estimate(&solver, k, opts.gap_iterations);
    if gap < opts.degeneracy_threshold {
        return Err(Error::DegenerateSteadyState { gap });
    }

    let residual_of = |x: &[C64]| norm2(&l.generator.apply(x));
    hermitize_in_place(&mut x, d);
    let mut residual = residual_of(&x);
    for _ in 0..opts.refinement_steps {
        if residual <= opts.tolerance * 0.01 {
            break;
        }
        let r = l.generator.apply(&x);
        let mut delta: Vec<C64> = r.iter().map(|v| -v).collect();
        solver.solve(&mut delta, ZERO);
        let trial: Vec<C64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let mut trial = trial;
        hermitize_in_place(&mut trial, d);
        let res = residual_of(&trial);
        if res < residual {
            x = trial;
            residual = res;
        } else {
            break;
        }
    }

    let mut method = SteadyMethod::SparseLu;
    if residual > opts.tolerance {
        log::warn!("sparse steady-state residual {residual:e}; falling back to propagation");
        let horizon = (50.0 / gap).min(1e6);
        let ode = OdeOptions {
            rtol: 1e-12,
            atol: 1e-15,
            ..OdeOptions::default()
        };
        let mut y = evolve_vector(&l.generator, &x, &[horizon], ode)?.pop().unwrap();
        let tr = vec_trace(&y, d);
        y.iter_mut().for_each(|v| *v /= tr);
        hermitize_in_place(&mut y, d);
        let res = residual_of(&y);
        if res < residual {
            x = y;
            residual = res;
            method = SteadyMethod::Propagation;
        }
        if residual > opts.tolerance {
            return Err(Error::SteadyStateResidual {
                residual,
                tolerance: opts.tolerance,
            });
        }
    }
    Ok(SteadyState {
        rho: DensityMatrix { dims: l.dims, data: x },
        residual,
        gap_estimate: gap,
        method,
    })
}

/// g²(τ) on an ordered delay grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Curve {
    pub delays: Vec<f64>,
    pub values: Vec<f64>,
}

impl G2Curve {
    pub fn at_zero(&self) -> Option<f64> {
        (self.delays.first() == Some(&0.0)).then(|| self.values[0])
    }
}

/// τ = 0 followed by `count` log-spaced delays from 10⁻²/Ω to 10/Γ_M.
pub fn default_delays(p: &SystemParams, count: usize) -> Vec<f64> {
    let lo: f64 = 1e-2 / p.mech_frequency;
    let hi: f64 = if p.mech_damping > 0.0 {
        10.0 / p.mech_damping
    } else {
        1e4 / p.mech_frequency
    };
    let mut delays = vec![0.0];
    let n = count.max(2);
    delays.extend((0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)));
    delays
}

/// Normalized post-detection state aρa†/Tr(a†aρ) and the photon number.
pub(crate) fn post_detection_state(rho: &DensityMatrix) -> Result<(Vec<C64>, f64)> {
    let dims = rho.dims();
    let a = build_annihilation(dims, Mode::Photon);
    let n_op = a.dagger().compose(&a);
    let nbar = rho.expectation(&n_op);
    if !(nbar > 1e-300) {
        return Err(Error::ZeroPhotonNumber(nbar));
    }
    let jump = sandwich(a.matrix(), &a.matrix().adjoint());
    let mut sigma = jump.apply(rho.as_slice());
    sigma.iter_mut().for_each(|v| *v /= nbar);
    Ok((sigma, nbar))
}

/// g²(τ) = Tr[a†a e^{Lτ}(aρa†)] / Tr[a†aρ]² by direct integration.
pub fn g2_of_tau(l: &Liouvillian, rho_ss: &DensityMatrix, delays: &[f64], opts: OdeOptions) -> Result<G2Curve> {
    let (sigma, nbar) = post_detection_state(rho_ss)?;
    let a = build_annihilation(l.dims, Mode::Photon);
    let n_fn = observable_functional(&a.dagger().compose(&a));
    let mut order: Vec<usize> = (0..delays.len()).collect();
    order.sort_by(|&i, &j| delays[i].total_cmp(&delays[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| delays[i]).collect();
    if sorted.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter {
            name: "delays",
            reason: "delays must be nonnegative".into(),
        });
    }
    let states = evolve_vector(&l.generator, &sigma, &sorted, opts)?;
    let mut values = vec![0.0; delays.len()];
    for (slot, x) in order.iter().zip(states) {
        values[*slot] = dot(&n_fn, &x).re / nbar;
    }
    Ok(G2Curve {
        delays: delays.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm;
    use crate::operators::{build_hamiltonian, build_number, HamiltonianKind};

    fn dims(a: usize, b: usize) -> HilbertDims {
        HilbertDims::new(a, b).unwrap()
    }

    fn liouvillian(p: &SystemParams, d: HilbertDims) -> Liouvillian {
        let h = build_hamiltonian(p, d, HamiltonianKind::Optomechanical).unwrap();
        assemble_liouvillian(p, &h).unwrap()
    }

    fn driven() -> SystemParams {
        SystemParams {
            detuning: 0.4,
            g0: 0.5,
            drive: 0.1,
            kappa_in: 0.1,
            kappa_out: 0.15,
            mech_damping: 0.05,
            n_th: 0.2,
            ..SystemParams::default()
        }
    }

    #[test]
    fn trace_preserving() {
        let l = liouvillian(&driven(), dims(3, 4));
        assert!(l.trace_defect() < 1e-10);
    }

    #[test]
    fn closed_system_is_commutator() {
        let p = SystemParams {
            detuning: 0.3,
            g0: 0.2,
            drive: 0.1,
            kappa_in: 0.0,
            kappa_out: 1e-300,
            mech_damping: 0.0,
            ..SystemParams::default()
        };
        let d = dims(2, 2);
        let h = build_hamiltonian(&p, d, HamiltonianKind::Optomechanical).unwrap();
        let l = assemble_liouvillian(&p, &h).unwrap();
        // random-ish Hermitian ρ
        let n = d.dim();
        let rho = Mat::from_fn(n, n, |i, j| {
            C64::new((i + 2 * j) as f64 * 0.1, (i as f64 - j as f64) * 0.05)
        });
        let rho_h = &rho + &crate::linalg::adjoint(&rho);
        let x = DensityMatrix::from_dense(d, &rho_h).unwrap();
        let lx = l.apply(x.as_slice());
        let hd = h.to_dense();
        let comm = &(&rho_h * &hd) - &(&hd * &rho_h);
        for i in 0..n {
            for j in 0..n {
                let expected = comm[(i, j)] * C64::new(0.0, 1.0);
                assert!((lx[i * n + j] - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn vacuum_is_dark() {
        let p = SystemParams {
            g0: 0.5,
            ..SystemParams::default()
        };
        let l = liouvillian(&p, dims(2, 3));
        let v = DensityMatrix::vacuum(l.dims());
        assert!(norm2(&l.apply(v.as_slice())) < 1e-15);
    }

    #[test]
    fn steady_state_of_undriven_system() {
        let p = SystemParams {
            g0: 0.5,
            ..SystemParams::default()
        };
        let ss = steady_state(&liouvillian(&p, dims(2, 3))).unwrap();
        assert!((ss.rho.get(0, 0) - ONE).norm() < 1e-10);
        assert!(ss.residual <= 1e-10);

        let hot = SystemParams {
            g0: 0.5,
            n_th: 0.3,
            mech_damping: 0.01,
            ..SystemParams::default()
        };
        let d = dims(1, 30);
        let ss = steady_state(&liouvillian(&hot, d)).unwrap();
        let nb = ss.rho.expectation(&build_number(d, Mode::Phonon));
        assert!((nb - 0.3).abs() < 1e-8, "{nb}");
        assert!(ss.rho.photon_distribution()[0] > 1.0 - 1e-12);
    }

    #[test]
    fn linear_cavity_photon_number() {
        let p = SystemParams {
            detuning: 0.3,
            drive: 0.05,
            kappa_in: 0.1,
            kappa_out: 0.1,
            ..SystemParams::default()
        };
        let d = dims(6, 1);
        let ss = steady_state(&liouvillian(&p, d)).unwrap();
        let n = ss.rho.expectation(&build_number(d, Mode::Photon));
        let exact = 0.05f64.powi(2) / (0.09 + 0.04 / 4.0);
        assert!((n - exact).abs() < 1e-8 * exact.max(1.0), "{n} vs {exact}");
    }

    #[test]
    fn degenerate_null_space_is_reported() {
        let p = SystemParams {
            mech_damping: 0.0,
            ..SystemParams::default()
        };
        let err = steady_state(&liouvillian(&p, dims(1, 2))).unwrap_err();
        assert!(matches!(err, Error::DegenerateSteadyState { .. }), "{err}");
    }

    #[test]
    fn propagation_matches_ring_up() {
        let (delta, alpha, kappa) = (0.2, 0.05, 0.2);
        let p = SystemParams {
            detuning: delta,
            drive: alpha,
            kappa_in: kappa / 2.0,
            kappa_out: kappa / 2.0,
            ..SystemParams::default()
        };
        let d = dims(6, 1);
        let l = liouvillian(&p, d);
        let times = [0.0, 1.0, 5.0, 20.0, 60.0];
        let states = propagate_sampled(&l, &DensityMatrix::vacuum(d), &times, OdeOptions::default()).unwrap();
        let n_op = build_number(d, Mode::Photon);
        let z = C64::new(-kappa / 2.0, delta);
        let beta = C64::new(0.0, alpha) / z;
        for (t, rho) in times.iter().zip(&states) {
            let amp = beta * (ONE - (z * *t).exp());
            assert!((rho.expectation(&n_op) - amp.norm_sqr()).abs() < 1e-6);
            assert!((rho.trace() - ONE).norm() < 1e-8);
        }
        assert_eq!(states[0].as_slice(), DensityMatrix::vacuum(d).as_slice());
    }

    #[test]
    fn propagation_matches_dense_exponential() {
        let d = dims(2, 2);
        let l = liouvillian(&driven(), d);
        let t = 3.7;
        let gen = l.generator().to_dense();
        let scaled = Mat::from_fn(gen.nrows(), gen.ncols(), |i, j| gen[(i, j)] * t);
        let e = expm(&scaled);
        let rho0 = DensityMatrix::fock(d, 1, 1);
        let tight = OdeOptions {
            rtol: 1e-12,
            atol: 1e-14,
            ..OdeOptions::default()
        };
        let rho = propagate(&l, &rho0, t, tight).unwrap();
        let k = l.dim();
        for i in 0..k {
            let exact: C64 = (0..k).map(|j| e[(i, j)] * rho0.as_slice()[j]).sum();
            assert!((rho.as_slice()[i] - exact).norm() < 1e-8);
        }
    }

    #[test]
    fn coherent_light_has_flat_g2() {
        let p = SystemParams {
            detuning: 0.1,
            drive: 0.02,
            kappa_in: 0.1,
            kappa_out: 0.1,
            ..SystemParams::default()
        };
        let d = dims(8, 1);
        let l = liouvillian(&p, d);
        let ss = steady_state(&l).unwrap();
        let delays = [0.0, 0.5, 3.0, 40.0];
        let g2 = g2_of_tau(&l, &ss.rho, &delays, OdeOptions::default()).unwrap();
        for v in g2.values {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn g2_requires_photons() {
        let p = SystemParams::default();
        let d = dims(1, 1);
        let l = liouvillian(&p, d);
        let err = g2_of_tau(&l, &DensityMatrix::vacuum(d), &[0.0], OdeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroPhotonNumber(_)));
    }

    #[test]
    fn default_delay_grid() {
        let p = SystemParams::default();
        let g = default_delays(&p, 20);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1e-2).abs() < 1e-15);
        assert!((g[20] - 1e4).abs() < 1e-8);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
