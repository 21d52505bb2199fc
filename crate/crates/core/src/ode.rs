//! Adaptive Dormand–Prince 5(4) integration of linear complex systems.

use crate::error::{Error, Result};
use crate::sparse::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; `None` picks one from the right-hand side norm.
    pub initial_step: Option<f64>,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            initial_step: None,
            min_step: 1e-12,
            max_step: f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Sum of accepted local error estimates, in the scaled norm.
    pub error_sum: f64,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrator state for an autonomous system `y' = f(y)`.
///
/// The step size carries over between calls to [`Dopri5::advance`], so a
/// sequence of output times costs little more than one long integration.
pub struct Dopri5<F> {
    rhs: F,
    opts: OdeOptions,
    step: Option<f64>,
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    stats: OdeStats,
}

impl<F: Fn(&[C64], &mut [C64])> Dopri5<F> {
    pub fn new(rhs: F, dim: usize, opts: OdeOptions) -> Self {
        let zero = vec![C64::new(0.0, 0.0); dim];
        Self {
            rhs,
            opts,
            step: opts.initial_step,
            k: std::array::from_fn(|_| zero.clone()),
            tmp: zero,
            stats: OdeStats::default(),
        }
    }

    pub fn stats(&self) -> OdeStats {
        self.stats
    }

    fn stage(&mut self, y: &[C64], h: f64, coeffs: &[(usize, f64)], out: usize) {
        for (i, t) in self.tmp.iter_mut().enumerate() {
            let mut acc = y[i];
            for &(j, c) in coeffs {
                acc += self.k[j][i] * (h * c);
            }
            *t = acc;
        }
        let (tmp, k) = (&self.tmp, &mut self.k);
        (self.rhs)(tmp, &mut k[out]);
    }

    /// Integrates `y` from `t` to `t_end` in place.
    pub fn advance(&mut self, y: &mut [C64], t: f64, t_end: f64) -> Result<()> {
        let span = t_end - t;
        if span <= 0.0 {
            return Ok(());
        }
        let mut t = t;
        (self.rhs)(y, &mut self.k[0]);
        let mut h = self.step.unwrap_or_else(|| {
            let fnorm = self.k[0].iter().map(|v| v.norm()).fold(0.0, f64::max);
            let ynorm = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if fnorm > 0.0 {
                (0.01 * ynorm.max(self.opts.atol) / fnorm).max(1e-6)
            } else {
                1e-2
            }
        });
        h = h.min(self.opts.max_step);

        loop {
            let remaining = t_end - t;
            if remaining <= 1e-14 * t_end.abs().max(1.0) {
                return Ok(());
            }
            let last = h >= remaining;
            let hs = if last { remaining } else { h };

            self.stage(y, hs, &[(0, A21)], 1);
            self.stage(y, hs, &[(0, A31), (1, A32)], 2);
            self.stage(y, hs, &[(0, A41), (1, A42), (2, A43)], 3);
            self.stage(y, hs, &[(0, A51), (1, A52), (2, A53), (3, A54)], 4);
            self.stage(y, hs, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], 5);
            // fifth-order solution goes into tmp, its derivative into k[6]
            self.stage(y, hs, &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)], 6);

            let mut err: f64 = 0.0;
            for i in 0..y.len() {
                let e = (self.k[0][i] * E1
                    + self.k[2][i] * E3
                    + self.k[3][i] * E4
                    + self.k[4][i] * E5
                    + self.k[5][i] * E6
                    + self.k[6][i] * E7)
                    * hs;
                let scale = self.opts.atol + self.opts.rtol * y[i].norm().max(self.tmp[i].norm());
                err = err.max(e.norm() / scale);
                if !self.tmp[i].re.is_finite() || !self.tmp[i].im.is_finite() {
                    err = f64::NAN;
                }
            }
            if err.is_nan() || err.is_infinite() {
                return Err(Error::IntegrationFailure { t, step: hs });
            }

            if err <= 1.0 {
                y.copy_from_slice(&self.tmp);
                self.k.swap(0, 6);
                t = if last { t_end } else { t + hs };
                self.stats.accepted += 1;
                self.stats.error_sum += err;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last {
                    h = (hs * factor).min(self.opts.max_step);
                }
                self.step = Some(h);
                if last {
                    return Ok(());
                }
            } else {
                self.stats.rejected += 1;
                h = hs * (0.9 * err.powf(-0.2)).max(0.2);
                if h < self.opts.min_step {
                    return Err(Error::IntegrationFailure { t, step: h });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_phase() {
        // y' = -i ω y
        let omega = 3.0;
        let mut solver = Dopri5::new(
            move |y: &[C64], dy: &mut [C64]| dy[0] = C64::new(0.0, -omega) * y[0],
            1,
            OdeOptions::default(),
        );
        let mut y = vec![C64::new(1.0, 0.0)];
        solver.advance(&mut y, 0.0, 2.0).unwrap();
        solver.advance(&mut y, 2.0, 10.0).unwrap();
        let exact = C64::new(0.0, -omega * 10.0).exp();
        assert!((y[0] - exact).norm() < 1e-7);
        assert!(solver.stats().accepted > 0);
    }

    #[test]
    fn zero_span_is_identity() {
        let mut solver = Dopri5::new(
            |_: &[C64], dy: &mut [C64]| dy[0] = C64::new(1.0, 0.0),
            1,
            OdeOptions::default(),
        );
        let mut y = vec![C64::new(2.0, 0.0)];
        solver.advance(&mut y, 1.0, 1.0).unwrap();
        assert_eq!(y[0], C64::new(2.0, 0.0));
    }

    #[test]
    fn underflow_is_reported() {
        let opts = OdeOptions {
            min_step: 1e-3,
            initial_step: Some(1.0),
            ..OdeOptions::default()
        };
        let mut solver = Dopri5::new(|y: &[C64], dy: &mut [C64]| dy[0] = y[0] * y[0] * 1e6, 1, opts);
        let mut y = vec![C64::new(1.0, 0.0)];
        assert!(matches!(
            solver.advance(&mut y, 0.0, 1.0),
            Err(Error::IntegrationFailure { .. })
        ));
    }
}
