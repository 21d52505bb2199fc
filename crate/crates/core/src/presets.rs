//! Built-in parameter sets, in units of Ω.

use serde::{Deserialize, Serialize};

use crate::params::{HilbertDims, SystemParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub params: SystemParams,
    pub dims: HilbertDims,
    /// Resonance order for cascade presets.
    pub resonance: Option<usize>,
    pub description: String,
}

pub const NAMES: [&str; 6] = ["fig2a", "fig2d", "fig5", "fig6", "fig7a", "fig7b"];

fn symmetric(kappa: f64) -> (f64, f64) {
    (kappa / 2.0, kappa / 2.0)
}

/// Weak blue-detuned drive in the sideband-resolved regime:
/// Δ = Ω − g0²/Ω, g0 = Ω/2, κ = Ω/8, α_L = 5·10⁻³ Ω, Γ_M = 10⁻³ Ω, T = 0.
pub fn fig2a() -> Preset {
    let g0 = 0.5;
    let (kappa_in, kappa_out) = symmetric(0.125);
    Preset {
        name: "fig2a".into(),
        params: SystemParams {
            detuning: 1.0 - g0 * g0,
            g0,
            drive: 5e-3,
            kappa_in,
            kappa_out,
            mech_damping: 1e-3,
            ..SystemParams::default()
        },
        dims: HilbertDims {
            n_photon_max: 4,
            n_phonon_max: 16,
        },
        resonance: None,
        description: "weak drive, sideband-resolved, g0/κ = 4".into(),
    }
}

/// Same drive and detuning in the bad-cavity limit κ = 5Ω, g0/κ = 1/10.
pub fn fig2d() -> Preset {
    let mut p = fig2a();
    let (kappa_in, kappa_out) = symmetric(5.0);
    p.name = "fig2d".into();
    p.params.kappa_in = kappa_in;
    p.params.kappa_out = kappa_out;
    p.dims = HilbertDims {
        n_photon_max: 2,
        n_phonon_max: 4,
    };
    p.description = "weak drive, bad cavity, g0/κ = 1/10".into();
    p
}

fn cascade(name: &str, n: usize, g0: f64, alpha: f64, n_th: f64, dims: HilbertDims, description: &str) -> Preset {
    let (kappa_in, kappa_out) = symmetric(g0 / 4.0);
    let mut params = SystemParams {
        g0,
        drive: alpha,
        kappa_in,
        kappa_out,
        mech_damping: 1e-3,
        n_th,
        ..SystemParams::default()
    };
    params.detuning = params.resonant_detuning(n);
    Preset {
        name: name.into(),
        params,
        dims,
        resonance: Some(n),
        description: description.into(),
    }
}

/// Two-photon resonance Δ = −2g0²/Ω, g0 = Ω/√2, κ = g0/4, Γ_M = 10⁻³ Ω, T = 0.
pub fn fig5(alpha: f64) -> Preset {
    cascade(
        "fig5",
        2,
        0.5f64.sqrt(),
        alpha,
        0.0,
        HilbertDims {
            n_photon_max: 5,
            n_phonon_max: 20,
        },
        "two-photon cascade",
    )
}

/// Cascade trajectory: the two-photon preset at α_L = 0.15Ω.
pub fn fig6() -> Preset {
    let mut p = fig5(0.15);
    p.name = "fig6".into();
    p.description = "two-photon cascade at α_L = 0.15".into();
    p
}

/// Three-photon resonance Δ = −3g0²/Ω, g0 = Ω/2, g0/κ = 4, T = 0.
pub fn fig7a(alpha: f64) -> Preset {
    cascade(
        "fig7a",
        3,
        0.5,
        alpha,
        0.0,
        HilbertDims {
            n_photon_max: 6,
            n_phonon_max: 16,
        },
        "three-photon cascade",
    )
}

/// Two-photon preset with a thermal mechanical bath.
pub fn fig7b(alpha: f64, n_th: f64) -> Preset {
    let mut p = fig5(alpha);
    p.name = "fig7b".into();
    p.params.n_th = n_th;
    p.description = "two-photon cascade, thermal bath".into();
    p
}

/// Preset by name with its default drive (α_L = 0.15Ω for the cascade sets).
pub fn by_name(name: &str) -> Option<Preset> {
    match name {
        "fig2a" => Some(fig2a()),
        "fig2d" => Some(fig2d()),
        "fig5" => Some(fig5(0.15)),
        "fig6" => Some(fig6()),
        "fig7a" => Some(fig7a(0.3)),
        "fig7b" => Some(fig7b(0.15, 0.1)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caption_values() {
        let p = fig2a().params;
        assert_eq!(p.detuning, 0.75);
        assert_eq!(p.kappa(), 0.125);
        assert_eq!(p.g0 / p.kappa(), 4.0);
        let p = fig2d().params;
        assert_eq!(p.kappa(), 5.0);
        assert!((p.g0 / p.kappa() - 0.1).abs() < 1e-15);
        let p = fig5(0.15).params;
        assert!((p.detuning + 1.0).abs() < 1e-15);
        assert!((p.kappa() - 1.0 / (4.0 * 2f64.sqrt())).abs() < 1e-15);
        let p = fig7a(0.2).params;
        assert!((p.detuning + 0.75).abs() < 1e-15);
        assert_eq!(p.g0 / p.kappa(), 4.0);
    }

    #[test]
    fn all_names_resolve() {
        for name in NAMES {
            let p = by_name(name).unwrap();
            assert_eq!(p.name, name);
            p.params.validate().unwrap();
        }
        assert!(by_name("fig9").is_none());
    }
}
