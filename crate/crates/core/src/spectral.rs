//! Eigendecomposition of a (non-Hermitian) generator, G = V Λ V⁻¹.
//!
//! Once decomposed, e^{Gt}x costs two dense products for any t, and linear
//! functionals of e^{Gt}x become short exponential sums. This is what makes
//! exact waiting-time sampling and long-delay correlation functions cheap for
//! moderate truncations.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::lindblad::{norm2, observable_functional, post_detection_state, DensityMatrix, G2Curve, Liouvillian};
use crate::operators::{build_annihilation, Mode};
use crate::sparse::{CsrMatrix, C64};

pub struct SpectralDecomposition {
    eigenvalues: Vec<C64>,
    right: Mat<C64>,
    left: Mat<C64>,
    reconstruction_error: f64,
}

/// Σ_k c_k e^{λ_k t}, real part taken on evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentialSum {
    pub weights: Vec<C64>,
    pub rates: Vec<C64>,
}

impl ExponentialSum {
    pub fn eval(&self, t: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.rates)
            .map(|(c, l)| (c * (l * t).exp()).re)
            .sum()
    }

    /// Value and first derivative at `t`.
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut dv = 0.0;
        for (c, l) in self.weights.iter().zip(&self.rates) {
            let term = c * (l * t).exp();
            v += term.re;
            dv += (term * l).re;
        }
        (v, dv)
    }
}

fn matvec(m: &Mat<C64>, x: &[C64]) -> Vec<C64> {
    let xr = MatRef::from_column_major_slice(x, x.len(), 1);
    let y = m * xr;
    (0..y.nrows()).map(|i| y[(i, 0)]).collect()
}

impl SpectralDecomposition {
    /// Decomposes `generator`, rejecting the result if V Λ V⁻¹ misses the
    /// generator by more than 1e-8 (relative) on probe vectors.
    pub fn new(generator: &CsrMatrix) -> Result<Self> {
        Self::with_tolerance(generator, 1e-8)
    }

    pub fn with_tolerance(generator: &CsrMatrix, tolerance: f64) -> Result<Self> {
        let dense = generator.to_dense();
        let evd = dense.eigen().map_err(|e| Error::Eigendecomposition(format!("{e:?}")))?;
        let k = dense.nrows();
        let right: Mat<C64> = evd.U().to_owned();
        let s = evd.S();
        let eigenvalues: Vec<C64> = (0..k).map(|i| s[i]).collect();
        let left = right.partial_piv_lu().inverse();
        let mut decomp = Self {
            eigenvalues,
            right,
            left,
            reconstruction_error: 0.0,
        };

        let mut worst: f64 = 0.0;
        for probe in 0..2 {
            let x: Vec<C64> = (0..k)
                .map(|i| {
                    let f = (i * (probe + 3) + 1) as f64;
                    C64::new((f * 0.618034).fract() - 0.5, (f * 0.414214).fract() - 0.5)
                })
                .collect();
            let exact = generator.apply(&x);
            let w = decomp.coefficients(&x);
            let scaled: Vec<C64> = w.iter().zip(&decomp.eigenvalues).map(|(a, l)| a * l).collect();
            let approx = decomp.reconstruct(&scaled);
            let diff: Vec<C64> = exact.iter().zip(&approx).map(|(a, b)| a - b).collect();
            let denom = norm2(&exact).max(norm2(&x) * 1e-300);
            worst = worst.max(norm2(&diff) / denom);
        }
        decomp.reconstruction_error = worst;
        if !(worst <= tolerance) {
            return Err(Error::IllConditioned { error: worst });
        }
        Ok(decomp)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    pub fn reconstruction_error(&self) -> f64 {
        self.reconstruction_error
    }

    /// Modal coefficients w = V⁻¹x.
    pub fn coefficients(&self, x: &[C64]) -> Vec<C64> {
        matvec(&self.left, x)
    }

    /// x = V w.
    pub fn reconstruct(&self, w: &[C64]) -> Vec<C64> {
        matvec(&self.right, w)
    }

    /// Row fᵀV, so that f·e^{Gt}x = Σ_k (fᵀV)_k w_k e^{λ_k t}.
    pub fn functional(&self, f: &[C64]) -> Vec<C64> {
        let k = self.dim();
        (0..k)
            .map(|j| {
                let col = self.right.col(j);
                f.iter().enumerate().map(|(i, fi)| fi * col[i]).sum()
            })
            .collect()
    }

    /// e^{Gt} x.
    pub fn evolve(&self, x: &[C64], t: f64) -> Vec<C64> {
        let w = self.coefficients(x);
        let wt: Vec<C64> = w
            .iter()
            .zip(&self.eigenvalues)
            .map(|(a, l)| a * (l * t).exp())
            .collect();
        self.reconstruct(&wt)
    }

    /// f·e^{Gt}x as an exponential sum in t.
    pub fn series(&self, f: &[C64], x: &[C64]) -> ExponentialSum {
        let row = self.functional(f);
        let w = self.coefficients(x);
        ExponentialSum {
            weights: row.iter().zip(&w).map(|(a, b)| a * b).collect(),
            rates: self.eigenvalues.clone(),
        }
    }
}

/// g²(τ) from the eigendecomposition of the full generator.
///
/// Equivalent to [`crate::lindblad::g2_of_tau`] but exact in τ, so very long
/// delays cost nothing extra.
pub fn spectral_g2(
    l: &Liouvillian,
    decomp: &SpectralDecomposition,
    rho_ss: &DensityMatrix,
    delays: &[f64],
) -> Result<G2Curve> {
    if decomp.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            found: decomp.dim(),
        });
    }
    let series = g2_series(l, decomp, rho_ss)?;
    Ok(G2Curve {
        delays: delays.to_vec(),
        values: delays.iter().map(|&t| series.eval(t)).collect(),
    })
}

/// g²(τ) as an exponential sum.
pub fn g2_series(l: &Liouvillian, decomp: &SpectralDecomposition, rho_ss: &DensityMatrix) -> Result<ExponentialSum> {
    let (sigma, nbar) = post_detection_state(rho_ss)?;
    let a = build_annihilation(l.dims(), Mode::Photon);
    let mut n_fn = observable_functional(&a.dagger().compose(&a));
    n_fn.iter_mut().for_each(|v| *v /= nbar);
    Ok(decomp.series(&n_fn, &sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{assemble_liouvillian, g2_of_tau, steady_state};
    use crate::ode::OdeOptions;
    use crate::operators::{build_hamiltonian, HamiltonianKind};
    use crate::params::{HilbertDims, SystemParams};

    fn setup() -> Liouvillian {
        let p = SystemParams {
            detuning: 0.75,
            g0: 0.5,
            drive: 0.05,
            kappa_in: 0.0625,
            kappa_out: 0.0625,
            mech_damping: 0.01,
            ..SystemParams::default()
        };
        let d = HilbertDims::new(2, 4).unwrap();
        let h = build_hamiltonian(&p, d, HamiltonianKind::Optomechanical).unwrap();
        assemble_liouvillian(&p, &h).unwrap()
    }

    #[test]
    fn evolution_matches_integration() {
        let l = setup();
        let decomp = SpectralDecomposition::new(l.generator()).unwrap();
        assert!(decomp.reconstruction_error() < 1e-10);
        let d = l.dims();
        let rho0 = DensityMatrix::fock(d, 1, 2);
        let tight = OdeOptions {
            rtol: 1e-12,
            atol: 1e-14,
            ..OdeOptions::default()
        };
        let expected = crate::lindblad::propagate(&l, &rho0, 25.0, tight).unwrap();
        let got = decomp.evolve(rho0.as_slice(), 25.0);
        let err: f64 = got
            .iter()
            .zip(expected.as_slice())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err:e}");
    }

    #[test]
    fn g2_matches_regression_integration() {
        let l = setup();
        let decomp = SpectralDecomposition::new(l.generator()).unwrap();
        let ss = steady_state(&l).unwrap();
        let delays = [0.0, 0.3, 4.0, 50.0, 400.0];
        let a = spectral_g2(&l, &decomp, &ss.rho, &delays).unwrap();
        let b = g2_of_tau(&l, &ss.rho, &delays, OdeOptions::default()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
        assert!(a.values[0] < 1.0);
    }

    #[test]
    fn exponential_sum_derivative() {
        let s = ExponentialSum {
            weights: vec![C64::new(0.5, 0.1), C64::new(0.5, -0.1)],
            rates: vec![C64::new(-0.2, 1.0), C64::new(-0.2, -1.0)],
        };
        let (v, dv) = s.eval_with_derivative(1.3);
        let h = 1e-6;
        let fd = (s.eval(1.3 + h) - s.eval(1.3 - h)) / (2.0 * h);
        assert!((v - s.eval(1.3)).abs() < 1e-15);
        assert!((dv - fd).abs() < 1e-8);
    }
}
