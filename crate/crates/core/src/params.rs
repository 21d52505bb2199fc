//! Physical parameters and Fock-space truncation.
//!
//! All frequencies and rates are expressed in units of the mechanical
//! frequency Ω with ℏ = 1. The mechanical frequency itself is kept as a field
//! so the formulas read naturally, but every preset sets it to one.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Fock cutoffs of the photon and phonon factors. States run `0..=max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertDims {
    pub n_photon_max: usize,
    pub n_phonon_max: usize,
}

impl Default for HilbertDims {
    fn default() -> Self {
        Self {
            n_photon_max: 6,
            n_phonon_max: 20,
        }
    }
}

impl HilbertDims {
    pub fn new(n_photon_max: usize, n_phonon_max: usize) -> Result<Self> {
        let dims = Self {
            n_photon_max,
            n_phonon_max,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_photon_max < 1 {
            return Err(invalid("n_photon_max", "must be at least 1"));
        }
        if self.n_phonon_max < 1 {
            return Err(invalid("n_phonon_max", "must be at least 1"));
        }
        Ok(())
    }

    pub fn photon_levels(&self) -> usize {
        self.n_photon_max + 1
    }

    pub fn phonon_levels(&self) -> usize {
        self.n_phonon_max + 1
    }

    /// Total dimension of the product space.
    pub fn dim(&self) -> usize {
        self.photon_levels() * self.phonon_levels()
    }

    /// Flat index of |n_a, n_b⟩ (photon factor outermost).
    #[inline]
    pub fn index(&self, n_photon: usize, n_phonon: usize) -> usize {
        n_photon * self.phonon_levels() + n_phonon
    }

    /// Inverse of [`HilbertDims::index`].
    #[inline]
    pub fn occupation(&self, index: usize) -> (usize, usize) {
        (index / self.phonon_levels(), index % self.phonon_levels())
    }

    /// Cutoffs enlarged by the given steps, as used by convergence probes.
    pub fn enlarged(&self, photon_step: usize, phonon_step: usize) -> Self {
        Self {
            n_photon_max: self.n_photon_max + photon_step,
            n_phonon_max: self.n_phonon_max + phonon_step,
        }
    }
}

/// Rates and detuning that define one simulation instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Laser detuning Δ = ω_L − ω_cav.
    pub detuning: f64,
    /// Single-photon optomechanical coupling g0.
    pub g0: f64,
    /// Mechanical frequency Ω (the unit of frequency).
    pub mech_frequency: f64,
    /// Laser drive amplitude α_L.
    pub drive: f64,
    /// Photon loss through the input mirror κ_I.
    pub kappa_in: f64,
    /// Photon loss through the monitored output mirror κ_O.
    pub kappa_out: f64,
    /// Mechanical damping Γ_M.
    pub mech_damping: f64,
    /// Thermal phonon occupation of the mechanical bath.
    pub n_th: f64,
    /// Detector efficiency η on the output port.
    pub detector_efficiency: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            detuning: 0.0,
            g0: 0.0,
            mech_frequency: 1.0,
            drive: 0.0,
            kappa_in: 0.05,
            kappa_out: 0.05,
            mech_damping: 1e-3,
            n_th: 0.0,
            detector_efficiency: 1.0,
        }
    }
}

impl SystemParams {
    /// Total cavity decay rate κ = κ_I + κ_O.
    pub fn kappa(&self) -> f64 {
        self.kappa_in + self.kappa_out
    }

    /// Lamb–Dicke-like ratio g0/Ω.
    pub fn coupling_ratio(&self) -> f64 {
        self.g0 / self.mech_frequency
    }

    /// Polaron (Kerr) shift g0²/Ω.
    pub fn kerr_shift(&self) -> f64 {
        self.g0 * self.g0 / self.mech_frequency
    }

    /// Monitored detection rate ηκ_O n̄ for a given intracavity photon number.
    pub fn detection_rate(&self, photon_number: f64) -> f64 {
        self.detector_efficiency * self.kappa_out * photon_number
    }

    /// Detuning of the n-photon resonance, Δ = −n g0²/Ω.
    pub fn resonant_detuning(&self, n: usize) -> f64 {
        -(n as f64) * self.kerr_shift()
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("detuning", self.detuning),
            ("g0", self.g0),
            ("mech_frequency", self.mech_frequency),
            ("drive", self.drive),
            ("kappa_in", self.kappa_in),
            ("kappa_out", self.kappa_out),
            ("mech_damping", self.mech_damping),
            ("n_th", self.n_th),
            ("detector_efficiency", self.detector_efficiency),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(invalid(name, format!("{value} is not finite")));
            }
        }
        if self.mech_frequency <= 0.0 {
            return Err(invalid("mech_frequency", "must be positive"));
        }
        for (name, value) in [
            ("kappa_in", self.kappa_in),
            ("kappa_out", self.kappa_out),
            ("mech_damping", self.mech_damping),
            ("n_th", self.n_th),
        ] {
            if value < 0.0 {
                return Err(invalid(name, format!("{value} is negative")));
            }
        }
        if self.kappa() <= 0.0 {
            return Err(invalid("kappa_in", "total cavity decay κ_I + κ_O must be positive"));
        }
        if !(0.0..=1.0).contains(&self.detector_efficiency) {
            return Err(invalid(
                "detector_efficiency",
                format!("{} is outside [0, 1]", self.detector_efficiency),
            ));
        }
        Ok(())
    }
}

/// Thermal occupation 1/(exp(ℏΩ/k_B T) − 1) from the ratio ℏΩ/k_B T.
pub fn thermal_occupation(hbar_omega_over_kt: f64) -> f64 {
    if hbar_omega_over_kt.is_infinite() {
        return 0.0;
    }
    1.0 / hbar_omega_over_kt.exp_m1()
}
