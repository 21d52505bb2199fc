//! Full counting statistics of detection records, the Fano-factor relation
//! to g²(τ), the detector-efficiency correction, and exact long-time
//! cumulants from the counting-field expansion of the generator.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lindblad::{steady_state, vec_trace, BorderedSolver, G2Curve, Liouvillian};
use crate::operators::{build_number, Mode};
use crate::params::SystemParams;
use crate::sparse::C64;
use crate::trajectory::TrajectoryRecord;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Windowing {
    /// Non-overlapping windows laid end to end.
    #[default]
    Contiguous,
    /// Windows starting every `stride` (must not exceed T_S).
    Overlapping { stride: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountingOptions {
    pub windowing: Windowing,
    /// Length of the blocks resampled by the bootstrap; `None` picks one
    /// from the total duration and the largest window.
    pub block_length: Option<f64>,
    pub bootstrap_samples: usize,
    pub seed: u64,
}

impl Default for CountingOptions {
    fn default() -> Self {
        Self {
            windowing: Windowing::Contiguous,
            block_length: None,
            bootstrap_samples: 200,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingStatistics {
    pub t_s: f64,
    /// p(N) for N = 0, 1, 2, …
    pub histogram: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub fano: f64,
    pub fano_error: f64,
    /// ⟨(N − ⟨N⟩)³⟩ / ⟨N⟩.
    pub third_central: f64,
    pub third_error: f64,
    pub window_count: u64,
    pub block_count: usize,
}

impl CountingStatistics {
    /// Writes `N,probability` rows.
    pub fn write_histogram_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["N", "probability"])?;
        for (n, p) in self.histogram.iter().enumerate() {
            w.write_record(&[n.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Power sums of window counts within one bootstrap block.
#[derive(Clone, Copy, Debug, Default)]
struct BlockSums {
    windows: f64,
    s1: f64,
    s2: f64,
    s3: f64,
}

impl BlockSums {
    fn add(&mut self, other: &Self) {
        self.windows += other.windows;
        self.s1 += other.s1;
        self.s2 += other.s2;
        self.s3 += other.s3;
    }

    /// (mean, variance, Fano, third central / mean)
    fn moments(&self) -> (f64, f64, f64, f64) {
        let w = self.windows;
        let mu = self.s1 / w;
        let m2 = self.s2 / w;
        let m3 = self.s3 / w;
        let var = m2 - mu * mu;
        let third = m3 - 3.0 * mu * m2 + 2.0 * mu * mu * mu;
        (mu, var, var / mu, third / mu)
    }
}

struct WindowTally {
    blocks: Vec<BlockSums>,
    histogram: BTreeMap<u64, u64>,
    windows: u64,
}

fn stride_of(windowing: Windowing, t_s: f64) -> Result<f64> {
    match windowing {
        Windowing::Contiguous => Ok(t_s),
        Windowing::Overlapping { stride } => {
            if !(stride > 0.0 && stride <= t_s) {
                return Err(invalid("stride", "overlapping stride must lie in (0, T_S]"));
            }
            Ok(stride)
        }
    }
}

/// Counts detections in every window. Only windows with at least one
/// detection are visited; empty windows are added in bulk, so the cost is
/// linear in the number of detections.
fn tally(records: &[TrajectoryRecord], t_s: f64, stride: f64, block_length: f64) -> WindowTally {
    let mut blocks = Vec::new();
    let mut histogram = BTreeMap::new();
    let mut windows = 0u64;
    for rec in records {
        let duration = rec.duration();
        if duration < t_s {
            continue;
        }
        let n_windows = ((duration - t_s) / stride).floor() as u64 + 1;
        let block_of = |w: u64| ((w as f64 * stride) / block_length).floor() as usize;
        let first_block = blocks.len();
        let n_blocks = block_of(n_windows - 1) + 1;
        blocks.resize(first_block + n_blocks, BlockSums::default());
        for w in 0..n_blocks {
            // windows whose start lies in block w
            let lo = ((w as f64 * block_length) / stride).ceil() as u64;
            let hi = ((((w + 1) as f64) * block_length) / stride).ceil() as u64;
            let count = hi.min(n_windows).saturating_sub(lo);
            blocks[first_block + w].windows += count as f64;
        }
        windows += n_windows;

        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for &t in &rec.jump_times {
            let rel = t - rec.t_start;
            if rel < 0.0 || rel > duration {
                continue;
            }
            // windows [k·stride, k·stride + T_S) containing rel
            let hi = ((rel / stride).floor() as u64).min(n_windows - 1);
            let lo_f = ((rel - t_s) / stride).floor() + 1.0;
            let lo = if lo_f <= 0.0 { 0 } else { lo_f as u64 };
            for k in lo..=hi {
                let start = k as f64 * stride;
                if rel >= start && rel < start + t_s {
                    *counts.entry(k).or_default() += 1;
                }
            }
        }
        let mut nonzero = 0u64;
        for (&k, &n) in &counts {
            let b = &mut blocks[first_block + block_of(k)];
            let nf = n as f64;
            b.s1 += nf;
            b.s2 += nf * nf;
            b.s3 += nf * nf * nf;
            *histogram.entry(n).or_default() += 1;
            nonzero += 1;
        }
        *histogram.entry(0).or_default() += n_windows - nonzero;
    }
    blocks.retain(|b| b.windows > 0.0);
    WindowTally {
        blocks,
        histogram,
        windows,
    }
}

fn default_block_length(records: &[TrajectoryRecord], t_s_max: f64) -> f64 {
    let total: f64 = records.iter().map(|r| r.duration().max(0.0)).sum();
    let preferred = (total / 200.0).max(10.0 * t_s_max);
    let blocks: usize = records.iter().map(|r| (r.duration() / preferred).ceil() as usize).sum();
    if blocks >= 20 {
        preferred
    } else {
        (total / 20.0).max(t_s_max)
    }
}

fn bootstrap_indices(n_blocks: usize, samples: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| (0..n_blocks).map(|_| rng.random_range(0..n_blocks)).collect())
        .collect()
}

fn std_dev(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let mean = finite.iter().sum::<f64>() / n;
    (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn statistics_from_tally(
    tally: &WindowTally,
    t_s: f64,
    resamples: &[Vec<usize>],
) -> Result<(CountingStatistics, Vec<f64>, f64)> {
    if tally.windows < 10 {
        return Err(Error::InsufficientStatistics(format!(
            "only {} windows of length {t_s}; at least 10 are required",
            tally.windows
        )));
    }
    if tally.blocks.len() < 2 {
        return Err(Error::InsufficientStatistics(format!(
            "{} bootstrap block(s); at least 2 are required",
            tally.blocks.len()
        )));
    }
    let mut total = BlockSums::default();
    tally.blocks.iter().for_each(|b| total.add(b));
    let (mean, variance, fano, third) = total.moments();
    if !(mean > 0.0) {
        return Err(Error::InsufficientStatistics(format!(
            "no detections in windows of length {t_s}"
        )));
    }

    let mut fanos = Vec::with_capacity(resamples.len());
    let mut thirds = Vec::with_capacity(resamples.len());
    for idx in resamples {
        let mut s = BlockSums::default();
        idx.iter().for_each(|&i| s.add(&tally.blocks[i % tally.blocks.len()]));
        let (_, _, f, t3) = s.moments();
        fanos.push(f);
        thirds.push(t3);
    }
    // F = 1 - mean + 2K/S1 with K the number of detection pairs sharing a
    // window. With few pairs the resampled blocks barely differ, so the
    // bootstrap error is floored by the Poisson uncertainty of K.
    let pairs = (total.s2 - total.s1) / 2.0;
    let floor = 2.0 * (pairs + 1.0).sqrt() / total.s1;
    let fano_error = std_dev(&fanos).max(floor);
    let w = tally.windows as f64;
    let max_n = tally.histogram.keys().next_back().copied().unwrap_or(0) as usize;
    let mut histogram = vec![0.0; max_n + 1];
    for (&n, &c) in &tally.histogram {
        histogram[n as usize] = c as f64 / w;
    }
    Ok((
        CountingStatistics {
            t_s,
            histogram,
            mean,
            variance,
            fano,
            fano_error,
            third_central: third,
            third_error: std_dev(&thirds),
            window_count: tally.windows,
            block_count: tally.blocks.len(),
        },
        fanos,
        floor,
    ))
}

/// Counting statistics for windows of length `t_s` across all records.
/// Records are never concatenated; each contributes its own windows.
pub fn counting_statistics(
    records: &[TrajectoryRecord],
    t_s: f64,
    opts: &CountingOptions,
) -> Result<CountingStatistics> {
    if !(t_s > 0.0) || !t_s.is_finite() {
        return Err(invalid("t_s", "window length must be positive"));
    }
    let stride = stride_of(opts.windowing, t_s)?;
    let block_length = opts.block_length.unwrap_or_else(|| default_block_length(records, t_s));
    let tally = tally(records, t_s, stride, block_length);
    let resamples = bootstrap_indices(tally.blocks.len(), opts.bootstrap_samples, opts.seed);
    Ok(statistics_from_tally(&tally, t_s, &resamples)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FanoPoint {
    pub t_s: f64,
    pub fano: f64,
    pub error: f64,
    pub mean: f64,
    pub third_central: f64,
    pub third_error: f64,
    pub window_count: u64,
    /// Why the point could not be evaluated, if it could not.
    pub flag: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FanoCurve {
    pub points: Vec<FanoPoint>,
    /// Bootstrap replicates: `replicates[b][i]` is the Fano factor of point
    /// `i` in resample `b`. All points share the same resampled blocks, so
    /// derived quantities (slopes, plateau averages) get joint errors.
    #[serde(skip)]
    pub replicates: Vec<Vec<f64>>,
    /// Per-point lower bounds on the error from the number of detection
    /// pairs sharing a window.
    #[serde(skip)]
    pub error_floors: Vec<f64>,
    pub block_length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub value: f64,
    pub error: f64,
    /// F at the largest window minus F at the smallest window of the decade.
    pub drift: f64,
    /// Whether |drift| stays below the combined error of its endpoints.
    pub converged: bool,
    pub points: usize,
}

/// Fano factor for every window length of `grid` (which must be strictly
/// increasing). Points that fail are flagged and kept.
pub fn fano_curve(records: &[TrajectoryRecord], grid: &[f64], opts: &CountingOptions) -> Result<FanoCurve> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) || !(grid[0] > 0.0) {
        return Err(invalid(
            "grid",
            "window lengths must be positive and strictly increasing",
        ));
    }
    let t_max = *grid.last().unwrap();
    let block_length = opts
        .block_length
        .unwrap_or_else(|| default_block_length(records, t_max));
    let mut points = Vec::with_capacity(grid.len());
    let mut per_point: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    let mut floors = Vec::with_capacity(grid.len());
    let mut resamples: Option<Vec<Vec<usize>>> = None;
    for &t_s in grid {
        let outcome = stride_of(opts.windowing, t_s).and_then(|stride| {
            let tally = tally(records, t_s, stride, block_length);
            let idx = resamples
                .get_or_insert_with(|| bootstrap_indices(tally.blocks.len().max(1), opts.bootstrap_samples, opts.seed));
            statistics_from_tally(&tally, t_s, idx)
        });
        match outcome {
            Ok((s, reps, floor)) => {
                let flag = (!(s.fano_error > 0.0)).then(|| "bootstrap error vanished".to_string());
                points.push(FanoPoint {
                    t_s,
                    fano: s.fano,
                    error: s.fano_error,
                    mean: s.mean,
                    third_central: s.third_central,
                    third_error: s.third_error,
                    window_count: s.window_count,
                    flag,
                });
                per_point.push(reps);
                floors.push(floor);
            }
            Err(e) => {
                points.push(FanoPoint {
                    t_s,
                    fano: f64::NAN,
                    error: f64::NAN,
                    mean: f64::NAN,
                    third_central: f64::NAN,
                    third_error: f64::NAN,
                    window_count: 0,
                    flag: Some(e.to_string()),
                });
                per_point.push(vec![f64::NAN; opts.bootstrap_samples]);
                floors.push(0.0);
            }
        }
    }
    let replicates = (0..opts.bootstrap_samples)
        .map(|b| per_point.iter().map(|p| p[b]).collect())
        .collect();
    Ok(FanoCurve {
        points,
        replicates,
        error_floors: floors,
        block_length,
    })
}

impl FanoCurve {
    /// Bootstrap error of a linear statistic Σ_i c_i F_i, floored by
    /// Σ_i |c_i| times the pair-count floor of point i.
    pub fn combination_error(&self, coeffs: &[f64]) -> f64 {
        let values: Vec<f64> = self
            .replicates
            .iter()
            .map(|rep| {
                rep.iter()
                    .zip(coeffs)
                    .map(|(f, c)| if *c == 0.0 { 0.0 } else { f * c })
                    .sum()
            })
            .collect();
        let floor: f64 = self
            .error_floors
            .iter()
            .zip(coeffs)
            .map(|(e, c)| if *c == 0.0 { 0.0 } else { c.abs() * e })
            .sum();
        std_dev(&values).max(floor)
    }

    /// Plateau over the largest decade of window lengths.
    pub fn plateau(&self) -> Option<Plateau> {
        let valid: Vec<usize> = (0..self.points.len())
            .filter(|&i| self.points[i].flag.is_none())
            .collect();
        let &last = valid.last()?;
        let t_max = self.points[last].t_s;
        let idx: Vec<usize> = valid
            .into_iter()
            .filter(|&i| self.points[i].t_s >= t_max / 10.0)
            .collect();
        let n = idx.len() as f64;
        let mut coeffs = vec![0.0; self.points.len()];
        idx.iter().for_each(|&i| coeffs[i] = 1.0 / n);
        let value = idx.iter().map(|&i| self.points[i].fano).sum::<f64>() / n;
        let error = self.combination_error(&coeffs);
        let first = idx[0];
        let drift = self.points[last].fano - self.points[first].fano;
        let mut dc = vec![0.0; self.points.len()];
        dc[last] = 1.0;
        dc[first] -= 1.0;
        let drift_error = if first == last {
            0.0
        } else {
            self.combination_error(&dc)
        };
        Some(Plateau {
            value,
            error,
            drift,
            converged: first == last || drift.abs() <= drift_error.max(self.points[last].error),
            points: idx.len(),
        })
    }

    /// Least-squares slope of F − 1 against T_S through the origin, over
    /// points with T_S ≤ `t_max`, with its joint bootstrap error.
    pub fn initial_slope(&self, t_max: f64) -> Option<(f64, f64)> {
        let idx: Vec<usize> = (0..self.points.len())
            .filter(|&i| self.points[i].t_s <= t_max && self.points[i].flag.is_none())
            .collect();
        if idx.is_empty() {
            return None;
        }
        let denom: f64 = idx.iter().map(|&i| self.points[i].t_s.powi(2)).sum();
        let mut coeffs = vec![0.0; self.points.len()];
        idx.iter().for_each(|&i| coeffs[i] = self.points[i].t_s / denom);
        let slope = idx.iter().map(|&i| coeffs[i] * (self.points[i].fano - 1.0)).sum();
        // the constant −1 shifts every replicate equally, so the error of
        // Σ c_i F_i is the slope error
        Some((slope, self.combination_error(&coeffs)))
    }

    /// Writes `t_s,fano,error,mean,third_central,third_error,windows,flag`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "t_s",
            "fano",
            "error",
            "mean",
            "third_central",
            "third_error",
            "windows",
            "flag",
        ])?;
        for p in &self.points {
            w.write_record(&[
                p.t_s.to_string(),
                p.fano.to_string(),
                p.error.to_string(),
                p.mean.to_string(),
                p.third_central.to_string(),
                p.third_error.to_string(),
                p.window_count.to_string(),
                p.flag.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` log-spaced window lengths from 10⁻¹/κ to 10/Γ_M.
pub fn default_window_grid(p: &SystemParams, count: usize) -> Vec<f64> {
    let lo = 0.1 / p.kappa();
    let hi = if p.mech_damping > 0.0 {
        10.0 / p.mech_damping
    } else {
        1e4 / p.mech_frequency
    };
    let n = count.max(2);
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureEstimate {
    pub value: f64,
    pub error: f64,
}

/// ∫₀^T f(τ)(1 − τ/T) dτ for piecewise-linear f on `nodes` (clipped at T).
fn kernel_integral(nodes: &[(f64, f64)], t_s: f64) -> f64 {
    let mut acc = 0.0;
    for w in nodes.windows(2) {
        let ((a, fa), (b, fb)) = (w[0], w[1]);
        let h = b - a;
        if h <= 0.0 {
            continue;
        }
        let ka = 1.0 - a / t_s;
        let kb = 1.0 - b / t_s;
        acc += h / 6.0 * (2.0 * fa * ka + fa * kb + fb * ka + 2.0 * fb * kb);
    }
    acc
}

/// Fano factor from g²(τ):
/// F(T) = 1 + Ṅ ∫_{−T}^{T} (g²(|τ|) − 1)(1 − |τ|/T) dτ,
/// with g² interpolated linearly between samples. The error estimate is the
/// difference to the same rule on every other sample, divided by three.
pub fn fano_from_g2(g2: &G2Curve, rate: f64, t_s: f64, tolerance: f64) -> Result<QuadratureEstimate> {
    if !(t_s > 0.0) {
        return Err(invalid("t_s", "window length must be positive"));
    }
    let d = &g2.delays;
    if d.is_empty() || d[0] != 0.0 || d.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("g2", "delays must start at 0 and increase strictly"));
    }
    if *d.last().unwrap() < t_s {
        return Err(invalid(
            "g2",
            format!("delays end at {} before T_S = {t_s}", d.last().unwrap()),
        ));
    }
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    for (i, (&t, &v)) in d.iter().zip(&g2.values).enumerate() {
        if t < t_s {
            nodes.push((t, v - 1.0));
        } else {
            let (t0, v0) = (d[i - 1], g2.values[i - 1]);
            let v_end = v0 + (v - v0) * (t_s - t0) / (t - t0);
            nodes.push((t_s, v_end - 1.0));
            break;
        }
    }
    if nodes.last().map(|n| n.0) != Some(t_s) {
        nodes.push((t_s, *g2.values.last().unwrap() - 1.0));
    }
    let fine = kernel_integral(&nodes, t_s);
    let mut coarse_nodes: Vec<(f64, f64)> = nodes.iter().step_by(2).copied().collect();
    if coarse_nodes.last() != nodes.last() {
        coarse_nodes.push(*nodes.last().unwrap());
    }
    let coarse = kernel_integral(&coarse_nodes, t_s);
    let value = 1.0 + 2.0 * rate * fine;
    let error = (2.0 * rate * (fine - coarse) / 3.0).abs();
    if error > tolerance {
        return Err(Error::QuadratureTooCoarse {
            estimate: error,
            tolerance,
        });
    }
    Ok(QuadratureEstimate { value, error })
}

/// Delays for [`fano_from_g2`]: uniform steps of `step` up to `uniform_until`,
/// then `log_points` log-spaced delays up to `t_max`.
pub fn quadrature_delays(step: f64, uniform_until: f64, t_max: f64, log_points: usize) -> Vec<f64> {
    let n = (uniform_until / step).ceil() as usize;
    let mut out: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    let start = *out.last().unwrap();
    if t_max > start && log_points > 0 {
        for i in 1..=log_points {
            out.push(start * (t_max / start).powf(i as f64 / log_points as f64));
        }
    }
    out
}

fn efficiency_ratio(p: &SystemParams) -> Result<f64> {
    let monitored = p.detector_efficiency * p.kappa_out;
    if !(monitored > 0.0) {
        return Err(invalid("detector_efficiency", "ηκ_O = 0 leaves nothing to correct"));
    }
    if monitored > p.kappa() * (1.0 + 1e-12) {
        return Err(invalid("kappa_out", "ηκ_O exceeds κ"));
    }
    Ok(monitored / p.kappa())
}

/// F_all = 1 + (F_measured − 1) κ/(ηκ_O).
pub fn efficiency_correction(f_measured: f64, p: &SystemParams) -> Result<f64> {
    Ok(1.0 + (f_measured - 1.0) / efficiency_ratio(p)?)
}

/// F_measured = 1 + (F_all − 1) ηκ_O/κ.
pub fn measured_fano(f_all: f64, p: &SystemParams) -> Result<f64> {
    Ok(1.0 + (f_all - 1.0) * efficiency_ratio(p)?)
}

/// Factor κ/(ηκ_O) by which errors grow under [`efficiency_correction`].
pub fn efficiency_error_scale(p: &SystemParams) -> Result<f64> {
    Ok(1.0 / efficiency_ratio(p)?)
}

/// S_II(ω = 0) = Ṅ F(∞).
pub fn shot_noise_zero_freq(f_inf: f64, rate: f64) -> f64 {
    rate * f_inf
}

/// Exact long-time counting statistics of the monitored channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryCounting {
    /// Ṅ = Tr Jρ_ss.
    pub rate: f64,
    /// F(∞) = second cumulant rate / Ṅ.
    pub fano: f64,
    /// lim ⟨(N − ⟨N⟩)³⟩ / ⟨N⟩.
    pub third_normalized: f64,
    pub mean_photons: f64,
    pub mean_phonons: f64,
    pub residual: f64,
}

/// Cumulant rates from the counting-field expansion of L(χ) = L − J + e^χ J
/// around χ = 0. With ρ0 the steady state and Q the solve on the traceless
/// subspace:
///   θ1 = Tr Jρ0,
///   ρ1 = −Q(J − θ1)ρ0,            θ2 = θ1 + 2 Tr Jρ1,
///   ρ2 = Q(θ2ρ0 + 2θ1ρ1 − 2Jρ1 − Jρ0),  θ3 = θ1 + 3 Tr Jρ1 + 3 Tr Jρ2.
pub fn stationary_counting(l: &Liouvillian) -> Result<StationaryCounting> {
    let ss = steady_state(l)?;
    let d = l.dims().dim();
    let solver = BorderedSolver::new(l.generator(), d)?;
    let j = l.jump();
    let r0: Vec<C64> = ss.rho.as_slice().to_vec();
    let jr0 = j.apply(&r0);
    let th1 = vec_trace(&jr0, d).re;
    if !(th1 > 0.0) {
        return Err(Error::ZeroPhotonNumber(th1));
    }
    let rhs1: Vec<C64> = jr0.iter().zip(&r0).map(|(a, b)| -(a - b * th1)).collect();
    let r1 = solver.solve_traceless(&rhs1);
    let jr1 = j.apply(&r1);
    let th2 = th1 + 2.0 * vec_trace(&jr1, d).re;
    let rhs2: Vec<C64> = (0..r0.len())
        .map(|k| r0[k] * th2 + r1[k] * (2.0 * th1) - jr1[k] * 2.0 - jr0[k])
        .collect();
    let r2 = solver.solve_traceless(&rhs2);
    let jr2 = j.apply(&r2);
    let th3 = th1 + 3.0 * vec_trace(&jr1, d).re + 3.0 * vec_trace(&jr2, d).re;

    let dims = l.dims();
    Ok(StationaryCounting {
        rate: th1,
        fano: th2 / th1,
        third_normalized: th3 / th1,
        mean_photons: ss.rho.expectation(&build_number(dims, Mode::Photon)),
        mean_phonons: ss.rho.expectation(&build_number(dims, Mode::Phonon)),
        residual: ss.residual,
    })
}
