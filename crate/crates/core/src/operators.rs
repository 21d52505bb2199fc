//! Truncated Fock-space operators and the system Hamiltonians.
//!
//! The product space is photon ⊗ phonon with the photon factor outermost,
//! matching [`HilbertDims::index`]. All Hamiltonians are written in the frame
//! rotating at the laser frequency with ℏ = 1.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::expm;
use crate::params::{HilbertDims, SystemParams};
use crate::sparse::{CsrMatrix, C64};

/// Which factor of the product space an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Photon,
    Phonon,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    /// −Δ a†a − g0(b† + b)a†a + Ω b†b + α_L(a† + a)
    #[default]
    Optomechanical,
    /// Polaron frame: −Δ a†a + Ω b†b − (g0²/Ω)(a†a)² + α_L(a†D† + D a)
    PolaronTransformed,
    /// Photon-only Kerr cavity: −Δ a†a − (g0²/Ω)(a†a)² + α_L(a† + a)
    KerrCavity,
}

/// A complex operator on the truncated photon ⊗ phonon space.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    dims: HilbertDims,
    matrix: CsrMatrix,
}

impl OperatorMatrix {
    pub fn new(dims: HilbertDims, matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows() != dims.dim() || matrix.ncols() != dims.dim() {
            return Err(crate::Error::DimensionMismatch {
                expected: dims.dim(),
                found: matrix.nrows(),
            });
        }
        Ok(Self { dims, matrix })
    }

    pub fn identity(dims: HilbertDims) -> Self {
        Self {
            dims,
            matrix: CsrMatrix::identity(dims.dim()),
        }
    }

    pub fn dims(&self) -> HilbertDims {
        self.dims
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn to_dense(&self) -> Mat<C64> {
        self.matrix.to_dense()
    }

    pub fn dagger(&self) -> Self {
        Self {
            dims: self.dims,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dims, other.dims);
        Self {
            dims: self.dims,
            matrix: self.matrix.mul(&other.matrix),
        }
    }

    pub fn add_scaled(&self, other: &Self, weight: f64) -> Self {
        debug_assert_eq!(self.dims, other.dims);
        Self {
            dims: self.dims,
            matrix: self
                .matrix
                .add(&other.matrix, C64::new(1.0, 0.0), C64::new(weight, 0.0)),
        }
    }

    pub fn scaled(&self, weight: f64) -> Self {
        Self {
            dims: self.dims,
            matrix: self.matrix.scaled(C64::new(weight, 0.0)),
        }
    }

    /// ‖H − H†‖_F relative to ‖H‖_F (zero for the zero matrix).
    pub fn relative_hermiticity_defect(&self) -> f64 {
        let norm = self.matrix.norm_fro();
        if norm == 0.0 {
            0.0
        } else {
            self.matrix.hermiticity_defect() / norm
        }
    }
}

fn ladder(levels: usize) -> CsrMatrix {
    CsrMatrix::from_triplets(
        levels,
        levels,
        (1..levels).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0))),
    )
}

fn embed(dims: HilbertDims, factor: &CsrMatrix, mode: Mode) -> OperatorMatrix {
    let matrix = match mode {
        Mode::Photon => factor.kron(&CsrMatrix::identity(dims.phonon_levels())),
        Mode::Phonon => CsrMatrix::identity(dims.photon_levels()).kron(factor),
    };
    OperatorMatrix { dims, matrix }
}

/// Annihilation operator with ⟨n−1|a|n⟩ = √n on the chosen factor.
pub fn build_annihilation(dims: HilbertDims, mode: Mode) -> OperatorMatrix {
    let levels = match mode {
        Mode::Photon => dims.photon_levels(),
        Mode::Phonon => dims.phonon_levels(),
    };
    embed(dims, &ladder(levels), mode)
}

/// Number operator on the chosen factor (exactly diagonal).
pub fn build_number(dims: HilbertDims, mode: Mode) -> OperatorMatrix {
    let levels = match mode {
        Mode::Photon => dims.photon_levels(),
        Mode::Phonon => dims.phonon_levels(),
    };
    let diag: Vec<C64> = (0..levels).map(|n| C64::new(n as f64, 0.0)).collect();
    embed(dims, &CsrMatrix::from_diagonal(&diag), mode)
}

/// Position quadrature b + b† of the mechanical mode.
pub fn build_displacement_quadrature(dims: HilbertDims) -> OperatorMatrix {
    let b = build_annihilation(dims, Mode::Phonon);
    b.add_scaled(&b.dagger(), 1.0)
}

/// Dense exp[g0(b† − b)/Ω] on the phonon factor alone.
fn phonon_displacement(p: &SystemParams, levels: usize) -> Mat<C64> {
    let b = ladder(levels);
    let lambda = p.coupling_ratio();
    let generator = b
        .adjoint()
        .add(&b, C64::new(lambda, 0.0), C64::new(-lambda, 0.0))
        .to_dense();
    expm(&generator)
}

/// Mechanical displacement operator D = exp[g0(b† − b)/Ω] acting on the
/// phonon factor, identity on the photon factor.
///
/// The exponential is taken of the truncated generator, so unitarity holds
/// only away from the phonon cutoff.
pub fn displacement_operator(p: &SystemParams, dims: HilbertDims) -> Result<OperatorMatrix> {
    p.validate()?;
    dims.validate()?;
    let d = phonon_displacement(p, dims.phonon_levels());
    let factor = CsrMatrix::from_dense(&d, 1e-300);
    Ok(embed(dims, &factor, Mode::Phonon))
}

/// Builds the requested Hamiltonian on the truncated space.
pub fn build_hamiltonian(p: &SystemParams, dims: HilbertDims, kind: HamiltonianKind) -> Result<OperatorMatrix> {
    p.validate()?;
    dims.validate()?;
    let a = build_annihilation(dims, Mode::Photon);
    let b = build_annihilation(dims, Mode::Phonon);
    let n_a = build_number(dims, Mode::Photon);
    let n_b = build_number(dims, Mode::Phonon);
    let drive = a.add_scaled(&a.dagger(), 1.0);
    let kerr = n_a.compose(&n_a);

    let h = match kind {
        HamiltonianKind::Optomechanical => {
            let x = b.add_scaled(&b.dagger(), 1.0);
            n_a.scaled(-p.detuning)
                .add_scaled(&x.compose(&n_a), -p.g0)
                .add_scaled(&n_b, p.mech_frequency)
                .add_scaled(&drive, p.drive)
        }
        HamiltonianKind::PolaronTransformed => {
            let d = displacement_operator(p, dims)?;
            let a_dag_d_dag = a.dagger().compose(&d.dagger());
            let polaron_drive = a_dag_d_dag.add_scaled(&a_dag_d_dag.dagger(), 1.0);
            n_a.scaled(-p.detuning)
                .add_scaled(&n_b, p.mech_frequency)
                .add_scaled(&kerr, -p.kerr_shift())
                .add_scaled(&polaron_drive, p.drive)
        }
        HamiltonianKind::KerrCavity => n_a
            .scaled(-p.detuning)
            .add_scaled(&kerr, -p.kerr_shift())
            .add_scaled(&drive, p.drive),
    };
    if h.matrix.iter().any(|(_, _, v)| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(invalid("hamiltonian", "non-finite matrix entries"));
    }
    Ok(h)
}

/// Closed-form undriven level −Δ n_a − (g0²/Ω) n_a² + Ω n_b.
pub fn undriven_level(p: &SystemParams, n_photon: usize, n_phonon: usize) -> f64 {
    let na = n_photon as f64;
    -p.detuning * na - p.kerr_shift() * na * na + p.mech_frequency * n_phonon as f64
}

/// The polaron unitary U = exp[g0 a†a (b† − b)/Ω], built block by block.
///
/// Within the photon-number sector n_a it is exp[n_a g0 (b† − b)/Ω].
pub fn polaron_unitary(p: &SystemParams, dims: HilbertDims) -> Result<OperatorMatrix> {
    p.validate()?;
    let levels = dims.phonon_levels();
    let mut triplets = Vec::new();
    for na in 0..dims.photon_levels() {
        let mut sector = *p;
        sector.g0 = p.g0 * na as f64;
        let block = phonon_displacement(&sector, levels);
        for i in 0..levels {
            for j in 0..levels {
                let v = block[(i, j)];
                if v.norm() > 1e-300 {
                    triplets.push((dims.index(na, i), dims.index(na, j), v));
                }
            }
        }
    }
    OperatorMatrix::new(dims, CsrMatrix::from_triplets(dims.dim(), dims.dim(), triplets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, norm_fro};

    fn dims(a: usize, b: usize) -> HilbertDims {
        HilbertDims::new(a, b).unwrap()
    }

    #[test]
    fn single_photon_ladder() {
        let a = build_annihilation(dims(1, 1), Mode::Photon);
        // photon ⊗ phonon with a 2-level phonon factor: a[0,1] lives at (|0,nb⟩, |1,nb⟩)
        let d = dims(1, 1);
        assert_eq!(a.matrix().get(d.index(0, 0), d.index(1, 0)), C64::new(1.0, 0.0));
        assert_eq!(a.matrix().nnz(), 2);
        let bare = ladder(2);
        assert_eq!(bare.nnz(), 1);
        assert_eq!(bare.get(0, 1), C64::new(1.0, 0.0));
    }

    #[test]
    fn number_operator_eigenvalues() {
        let d = dims(5, 2);
        let a = build_annihilation(d, Mode::Photon);
        let n = a.dagger().compose(&a);
        for na in 0..=5 {
            for nb in 0..=2 {
                let i = d.index(na, nb);
                assert!((n.matrix().get(i, i).re - na as f64).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn commutator_is_identity_below_cutoff() {
        let d = dims(6, 1);
        let a = build_annihilation(d, Mode::Photon);
        let comm = a.compose(&a.dagger()).add_scaled(&a.dagger().compose(&a), -1.0);
        for i in 0..d.dim() {
            let (na, _) = d.occupation(i);
            let expected = if na == d.n_photon_max { -(na as f64) } else { 1.0 };
            assert!((comm.matrix().get(i, i).re - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn decoupled_hamiltonian_is_diagonal() {
        let p = SystemParams {
            detuning: 0.3,
            ..SystemParams::default()
        };
        let d = dims(3, 4);
        let h = build_hamiltonian(&p, d, HamiltonianKind::Optomechanical).unwrap();
        for (r, c, v) in h.matrix().iter() {
            assert_eq!(r, c);
            let (na, nb) = d.occupation(r);
            assert!((v.re - (-0.3 * na as f64 + nb as f64)).abs() < 1e-14);
        }
    }

    #[test]
    fn hamiltonians_are_hermitian() {
        let p = SystemParams {
            detuning: 0.7,
            g0: 0.6,
            drive: 0.2,
            ..SystemParams::default()
        };
        for kind in [
            HamiltonianKind::Optomechanical,
            HamiltonianKind::PolaronTransformed,
            HamiltonianKind::KerrCavity,
        ] {
            let h = build_hamiltonian(&p, dims(3, 8), kind).unwrap();
            assert!(h.relative_hermiticity_defect() <= 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn rejects_non_finite_parameters() {
        let p = SystemParams {
            g0: f64::INFINITY,
            ..SystemParams::default()
        };
        assert!(build_hamiltonian(&p, dims(1, 1), HamiltonianKind::Optomechanical).is_err());
    }

    #[test]
    fn displacement_vacuum_overlap() {
        let p = SystemParams {
            g0: 0.7,
            ..SystemParams::default()
        };
        let d = dims(1, 30);
        let disp = displacement_operator(&p, d).unwrap();
        let overlap = disp.matrix().get(d.index(0, 0), d.index(0, 0));
        assert!((overlap.re - (-0.49f64 / 2.0).exp()).abs() < 1e-12);
        assert!(overlap.im.abs() < 1e-14);
    }

    #[test]
    fn displacement_trivial_and_unitary_in_interior() {
        let p0 = SystemParams::default();
        let d = dims(1, 12);
        let id = displacement_operator(&p0, d).unwrap();
        assert!(id.add_scaled(&OperatorMatrix::identity(d), -1.0).matrix().max_abs() < 1e-14);

        let p = SystemParams {
            g0: 0.8,
            ..SystemParams::default()
        };
        let dm = displacement_operator(&p, d).unwrap().to_dense();
        let prod = &crate::linalg::adjoint(&dm) * &dm;
        for i in 0..d.dim() {
            let (_, nb) = d.occupation(i);
            if nb > d.n_phonon_max / 2 {
                continue;
            }
            for j in 0..d.dim() {
                let (_, mb) = d.occupation(j);
                if mb > d.n_phonon_max / 2 {
                    continue;
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - C64::new(expected, 0.0)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn undriven_spectrum_matches_polaron_levels() {
        let p = SystemParams {
            detuning: 0.75,
            g0: 0.5,
            ..SystemParams::default()
        };
        let d = dims(3, 30);
        let h = build_hamiltonian(&p, d, HamiltonianKind::Optomechanical).unwrap();
        let mut eig = hermitian_eigenvalues(&h.to_dense()).unwrap();
        eig.sort_by(f64::total_cmp);
        let mut expected = Vec::new();
        for na in 0..=3 {
            for nb in 0..=6 {
                expected.push(undriven_level(&p, na, nb));
            }
        }
        for e in expected {
            let best = eig.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-10, "level {e} missing (closest {best:e})");
        }
    }

    #[test]
    fn polaron_form_matches_transformed_hamiltonian() {
        let p = SystemParams {
            detuning: 0.4,
            g0: 0.5,
            ..SystemParams::default()
        };
        let d = dims(2, 24);
        let h = build_hamiltonian(&p, d, HamiltonianKind::Optomechanical)
            .unwrap()
            .to_dense();
        let u = polaron_unitary(&p, d).unwrap().to_dense();
        let transformed = &(&crate::linalg::adjoint(&u) * &h) * &u;
        let polaron = build_hamiltonian(&p, d, HamiltonianKind::PolaronTransformed)
            .unwrap()
            .to_dense();
        let mut worst: f64 = 0.0;
        for i in 0..d.dim() {
            for j in 0..d.dim() {
                let (_, nb) = d.occupation(i);
                let (_, mb) = d.occupation(j);
                if nb <= 8 && mb <= 8 {
                    worst = worst.max((transformed[(i, j)] - polaron[(i, j)]).norm());
                }
            }
        }
        assert!(worst < 1e-8, "interior mismatch {worst:e}");
        assert!(norm_fro(&polaron) > 0.0);
    }
}
