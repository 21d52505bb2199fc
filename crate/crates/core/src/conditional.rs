//! The intuitive reading of g²(τ) at weak drive: after a detection the
//! conditional photon number, relative to its value just before, traces out
//! g²(τ) for delays shorter than the mean waiting time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{DensityMatrix, G2Curve, Liouvillian};
use crate::operators::{build_number, Mode};
use crate::trajectory::TrajectoryRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPoint {
    pub tau: f64,
    /// Regression value.
    pub g2: f64,
    /// Mean over detections of ⟨a†a⟩_cond(τ) / ⟨a†a⟩(0⁻).
    pub ratio: f64,
    pub ratio_error: f64,
    /// Mean over detections of ⟨a†a⟩_cond(τ), divided by the stationary n̄.
    pub ensemble: f64,
    pub ensemble_error: f64,
    pub within_waiting_time: bool,
}

impl ConditionalPoint {
    /// |ratio − g²| within `sigmas` standard errors.
    pub fn agrees(&self, sigmas: f64) -> bool {
        (self.ratio - self.g2).abs() <= sigmas * self.ratio_error
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalReport {
    pub points: Vec<ConditionalPoint>,
    pub detections: usize,
    pub mean_waiting_time: f64,
}

/// Largest Ṅ/κ for which detections count as rare.
pub const RARE_JUMP_LIMIT: f64 = 1e-2;

fn batch_mean(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let batches = 20.min(n / 2).max(2);
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Compares g²(τ) from the regression formula with the conditional photon
/// number recorded after each detection. `g2` must be sampled at the
/// records' `post_jump_delays`. Detections whose delay runs past the end of
/// their trajectory are skipped at that delay.
pub fn conditional_photon_number_check(
    records: &[TrajectoryRecord],
    l: &Liouvillian,
    rho_ss: &DensityMatrix,
    g2: &G2Curve,
    min_detections: usize,
) -> Result<ConditionalReport> {
    let nbar = rho_ss.expectation(&build_number(l.dims(), Mode::Photon));
    let rate = l.monitored_rate() * nbar;
    let kappa: f64 = l
        .channels()
        .iter()
        .filter(|c| c.name.starts_with("kappa"))
        .map(|c| c.rate)
        .sum();
    if rate / kappa > RARE_JUMP_LIMIT {
        return Err(Error::OutOfValidity(format!(
            "detection rate {rate:.3e} is not small against κ = {kappa:.3e}; detections are not rare"
        )));
    }
    let delays = records.first().map(|r| r.post_jump_delays.clone()).unwrap_or_default();
    if records.iter().any(|r| r.post_jump_delays != delays) || g2.delays != delays {
        return Err(crate::error::invalid(
            "g2",
            "delays must match the records' post-jump delays",
        ));
    }
    let detections: usize = records.iter().map(|r| r.jump_times.len()).sum();
    if detections < min_detections.max(4) {
        return Err(Error::InsufficientStatistics(format!(
            "{detections} detections, {min_detections} requested"
        )));
    }
    let mean_waiting_time = 1.0 / rate;
    let mut points = Vec::with_capacity(delays.len());
    for (k, &tau) in delays.iter().enumerate() {
        let mut ratios = Vec::new();
        let mut levels = Vec::new();
        for r in records {
            for (pre, post) in r.pre_jump_photons.iter().zip(&r.post_jump_photons) {
                let v = post[k];
                if v.is_finite() && *pre > 0.0 {
                    ratios.push(v / pre);
                    levels.push(v / nbar);
                }
            }
        }
        if ratios.len() < min_detections.max(4) {
            return Err(Error::InsufficientStatistics(format!(
                "only {} detections evaluated at τ = {tau}",
                ratios.len()
            )));
        }
        let (ratio, ratio_error) = batch_mean(&ratios);
        let (ensemble, ensemble_error) = batch_mean(&levels);
        points.push(ConditionalPoint {
            tau,
            g2: g2.values[k],
            ratio,
            ratio_error,
            ensemble,
            ensemble_error,
            within_waiting_time: tau < mean_waiting_time,
        });
    }
    Ok(ConditionalReport {
        points,
        detections,
        mean_waiting_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_hamiltonian, HamiltonianKind};
    use crate::params::{HilbertDims, SystemParams};
    use crate::spectral::{spectral_g2, SpectralDecomposition};
    use crate::trajectory::{run_ensemble, Sampler, TrajectoryConfig, TrajectoryEngine};

    fn check(p: &SystemParams, dims: HilbertDims, t_total: f64) -> Result<ConditionalReport> {
        let h = build_hamiltonian(p, dims, HamiltonianKind::Optomechanical).unwrap();
        let engine = TrajectoryEngine::new(p, &h, Sampler::WaitingTime).unwrap();
        let delays = vec![0.0, 2.0, 8.0, 30.0];
        let cfg = TrajectoryConfig {
            seed: 3,
            t_total,
            sample_stride: 0,
            post_jump_delays: delays.clone(),
            ..TrajectoryConfig::default()
        };
        let ens = run_ensemble(&engine, &cfg, 2, 1).unwrap();
        let l = engine.liouvillian();
        let decomp = SpectralDecomposition::new(l.generator()).unwrap();
        let g2 = spectral_g2(l, &decomp, &engine.steady_state().rho, &delays).unwrap();
        conditional_photon_number_check(&ens.records, l, &engine.steady_state().rho, &g2, 200)
    }

    #[test]
    fn coherent_cavity_ratio_is_one() {
        let p = SystemParams {
            detuning: 0.5,
            drive: 0.05,
            kappa_in: 0.1,
            kappa_out: 0.1,
            ..SystemParams::default()
        };
        let report = check(&p, HilbertDims::new(5, 1).unwrap(), 2e5).unwrap();
        assert!(report.detections >= 200);
        for pt in &report.points {
            assert!((pt.g2 - 1.0).abs() < 1e-6, "{pt:?}");
            assert!((pt.ratio - 1.0).abs() < 1e-6, "{pt:?}");
            assert!((pt.ensemble - 1.0).abs() < 1e-6, "{pt:?}");
        }
    }

    #[test]
    fn strong_drive_is_out_of_validity() {
        let p = SystemParams {
            detuning: 0.0,
            drive: 0.2,
            kappa_in: 0.1,
            kappa_out: 0.1,
            ..SystemParams::default()
        };
        assert!(matches!(
            check(&p, HilbertDims::new(4, 1).unwrap(), 100.0),
            Err(Error::OutOfValidity(_))
        ));
    }
}
