//! Flat run configuration. Every frequency and rate is in units of the
//! mechanical frequency Ω.

use std::path::{Path, PathBuf};

use optofcs::cascade::{Margins, SweepAxis};
use optofcs::presets;
use optofcs::trajectory::Sampler;
use optofcs::{HamiltonianKind, HilbertDims, SystemParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Steady,
    G2,
    Trajectories,
    Counting,
    CascadeMap,
    Sweep,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Steady => "steady",
            Task::G2 => "g2",
            Task::Trajectories => "trajectories",
            Task::Counting => "counting",
            Task::CascadeMap => "cascade-map",
            Task::Sweep => "sweep",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Task::Steady,
            Task::G2,
            Task::Trajectories,
            Task::Counting,
            Task::CascadeMap,
            Task::Sweep,
        ]
        .into_iter()
        .find(|t| t.name() == s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepEstimator {
    #[default]
    MasterEquation,
    Trajectories,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tasks: Vec<Task>,
    /// Name of the preset the physical parameters were taken from, if any.
    pub preset: Option<String>,
    /// Master seed, below 2⁶³ so that it fits a TOML integer.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub out: PathBuf,
    pub allow_unconverged: bool,

    pub detuning: f64,
    pub g0: f64,
    pub mech_frequency: f64,
    pub drive: f64,
    pub kappa_in: f64,
    pub kappa_out: f64,
    pub mech_damping: f64,
    pub n_th: f64,
    pub detector_efficiency: f64,
    pub hamiltonian: HamiltonianKind,

    pub n_photon_max: usize,
    pub n_phonon_max: usize,
    /// Cutoff increments of the convergence probe (0, 0 disables it).
    pub probe_photon: usize,
    pub probe_phonon: usize,
    pub probe_tolerance: f64,

    /// g²(τ) delays; empty means `delay_count` log-spaced delays.
    pub delays: Vec<f64>,
    pub delay_count: usize,

    pub sampler: Sampler,
    pub trajectories: usize,
    pub t_total: f64,
    pub dt: Option<f64>,
    pub sample_stride: usize,
    pub burn_in: Option<f64>,

    /// Counting windows T_S; empty means `window_count` log-spaced windows.
    pub windows: Vec<f64>,
    pub window_count: usize,
    pub bootstrap_samples: usize,
    pub block_length: Option<f64>,
    /// Also evaluate F(T_S) from the g²(τ) integral at every window.
    pub quadrature_check: bool,

    /// Resonance order n of the cascade tasks.
    pub resonance: usize,
    pub margin_first: f64,
    pub margin_second: f64,
    pub margin_third: f64,
    pub map_alphas: Vec<f64>,
    pub map_g0s: Vec<f64>,
    pub map_g0_over_kappa: f64,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub sweep_estimator: SweepEstimator,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = SystemParams::default();
        let dims = HilbertDims::default();
        let m = Margins::default();
        Self {
            tasks: Vec::new(),
            preset: None,
            seed: 0,
            workers: 0,
            out: PathBuf::from("out"),
            allow_unconverged: false,
            detuning: p.detuning,
            g0: p.g0,
            mech_frequency: p.mech_frequency,
            drive: p.drive,
            kappa_in: p.kappa_in,
            kappa_out: p.kappa_out,
            mech_damping: p.mech_damping,
            n_th: p.n_th,
            detector_efficiency: p.detector_efficiency,
            hamiltonian: HamiltonianKind::Optomechanical,
            n_photon_max: dims.n_photon_max,
            n_phonon_max: dims.n_phonon_max,
            probe_photon: 2,
            probe_phonon: 8,
            probe_tolerance: 1e-2,
            delays: Vec::new(),
            delay_count: 60,
            sampler: Sampler::WaitingTime,
            trajectories: 4,
            t_total: 1e5,
            dt: None,
            sample_stride: 0,
            burn_in: None,
            windows: Vec::new(),
            window_count: 25,
            bootstrap_samples: 200,
            block_length: None,
            quadrature_check: false,
            resonance: 2,
            margin_first: m.first,
            margin_second: m.second,
            margin_third: m.third,
            map_alphas: Vec::new(),
            map_g0s: Vec::new(),
            map_g0_over_kappa: 4.0,
            sweep_axis: SweepAxis::Drive,
            sweep_values: Vec::new(),
            sweep_estimator: SweepEstimator::MasterEquation,
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with the physical parameters and cutoffs of a preset.
    pub fn from_preset(name: &str) -> Result<Self, CliError> {
        let preset = presets::by_name(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset `{name}` (known: {})",
                presets::NAMES.join(", ")
            ))
        })?;
        let mut c = Self {
            preset: Some(name.to_string()),
            ..Self::default()
        };
        c.set_params(&preset.params);
        c.n_photon_max = preset.dims.n_photon_max;
        c.n_phonon_max = preset.dims.n_phonon_max;
        if let Some(n) = preset.resonance {
            c.resonance = n;
        }
        Ok(c)
    }

    /// Parses TOML. When the text (or `preset_override`) names a preset, the
    /// preset supplies every key the text leaves out.
    pub fn from_toml(text: &str, preset_override: Option<&str>) -> Result<Self, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let preset = preset_override
            .map(str::to_string)
            .or_else(|| table.get("preset").and_then(|v| v.as_str()).map(str::to_string));
        let mut merged = match &preset {
            Some(name) => {
                toml::Table::try_from(Self::from_preset(name)?).map_err(|e| CliError::Config(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for (k, v) in table {
            merged.insert(k, v);
        }
        if let Some(name) = preset {
            merged.insert("preset".into(), toml::Value::String(name));
        }
        let c: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path, preset_override: Option<&str>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, preset_override)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }

    pub fn params(&self) -> SystemParams {
        SystemParams {
            detuning: self.detuning,
            g0: self.g0,
            mech_frequency: self.mech_frequency,
            drive: self.drive,
            kappa_in: self.kappa_in,
            kappa_out: self.kappa_out,
            mech_damping: self.mech_damping,
            n_th: self.n_th,
            detector_efficiency: self.detector_efficiency,
        }
    }

    pub fn set_params(&mut self, p: &SystemParams) {
        self.detuning = p.detuning;
        self.g0 = p.g0;
        self.mech_frequency = p.mech_frequency;
        self.drive = p.drive;
        self.kappa_in = p.kappa_in;
        self.kappa_out = p.kappa_out;
        self.mech_damping = p.mech_damping;
        self.n_th = p.n_th;
        self.detector_efficiency = p.detector_efficiency;
    }

    pub fn dims(&self) -> Result<HilbertDims, CliError> {
        Ok(HilbertDims::new(self.n_photon_max, self.n_phonon_max)?)
    }

    pub fn margins(&self) -> Margins {
        Margins {
            first: self.margin_first,
            second: self.margin_second,
            third: self.margin_third,
        }
    }

    pub fn probe(&self) -> Option<(usize, usize)> {
        (self.probe_photon > 0 || self.probe_phonon > 0).then_some((self.probe_photon, self.probe_phonon))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params().validate()?;
        self.dims()?;
        if self.mech_frequency != 1.0 {
            return Err(CliError::Config(
                "mech_frequency is the unit of frequency and must be 1".into(),
            ));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.windows) || self.windows.iter().any(|w| !(*w > 0.0)) {
            return Err(CliError::Config(
                "windows must be positive and strictly increasing".into(),
            ));
        }
        if !increasing(&self.delays) || self.delays.iter().any(|t| !(*t >= 0.0)) {
            return Err(CliError::Config(
                "delays must be non-negative and strictly increasing".into(),
            ));
        }
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config("seed must be below 2^63".into()));
        }
        if self.trajectories == 0 {
            return Err(CliError::Config("trajectories must be at least 1".into()));
        }
        if self.resonance < 2 {
            return Err(CliError::Config("resonance must be at least 2".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml(), None).unwrap(), c);
    }

    #[test]
    fn preset_fills_missing_keys() {
        let c = RunConfig::from_toml("preset = \"fig2a\"\ndrive = 0.01\n", None).unwrap();
        assert_eq!(c.detuning, 0.75);
        assert_eq!(c.drive, 0.01);
        assert_eq!((c.n_photon_max, c.n_phonon_max), (4, 16));
        let c = RunConfig::from_toml("", Some("fig5")).unwrap();
        assert_eq!(c.resonance, 2);
        assert_eq!(c.preset.as_deref(), Some("fig5"));
    }

    #[test]
    fn rejects_unknown_keys_and_presets() {
        assert!(matches!(
            RunConfig::from_toml("detunning = 1.0", None),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("", Some("fig9")),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("kappa_in = -1.0", None),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("windows = [2.0, 1.0]", None),
            Err(CliError::Config(_))
        ));
        let big = RunConfig {
            seed: u64::MAX,
            ..RunConfig::default()
        };
        assert!(matches!(big.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn task_names() {
        for t in ["steady", "g2", "trajectories", "counting", "cascade-map", "sweep"] {
            assert_eq!(Task::parse(t).unwrap().name(), t);
        }
        let c = RunConfig::from_toml("tasks = [\"cascade-map\", \"g2\"]", None).unwrap();
        assert_eq!(c.tasks, vec![Task::CascadeMap, Task::G2]);
    }
}
