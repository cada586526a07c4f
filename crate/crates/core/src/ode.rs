//! Adaptive embedded Runge-Kutta (Dormand-Prince 5(4)) over complex state.
//!
//! The right-hand sides in this crate are entire functions of the state, so a
//! nonstiff pair with PI-free classic step control is sufficient. Error
//! control acts on the modulus of each complex component.

use crate::error::{Error, Result};
use num_complex::Complex64;

pub trait OdeSystem {
    fn state_len(&self) -> usize;
    fn rhs(&self, t: f64, y: &[Complex64], dydt: &mut [Complex64]);
    /// Inspect an accepted step; return an error to abort (overflow guards).
    fn guard(&self, _t: f64, _y: &[Complex64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub struct AdaptiveRk<'a, S: OdeSystem> {
    system: &'a S,
    opts: IntegratorOptions,
    t: f64,
    y: Vec<Complex64>,
    h: f64,
    k: [Vec<Complex64>; 7],
    steps_taken: usize,
    fsal_valid: bool,
}

impl<'a, S: OdeSystem> AdaptiveRk<'a, S> {
    pub fn new(system: &'a S, t0: f64, y0: Vec<Complex64>, opts: IntegratorOptions) -> Self {
        let n = system.state_len();
        assert_eq!(y0.len(), n);
        let k = std::array::from_fn(|_| vec![Complex64::ZERO; n]);
        Self {
            system,
            opts,
            t: t0,
            y: y0,
            h: 0.0,
            k,
            steps_taken: 0,
            fsal_valid: false,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[Complex64] {
        &self.y
    }

    fn error_norm(&self, y_new: &[Complex64], err: &[Complex64]) -> f64 {
        let n = self.y.len();
        let mut acc = 0.0;
        for i in 0..n {
            let sc = self.opts.atol + self.opts.rtol * self.y[i].norm().max(y_new[i].norm());
            let e = err[i].norm() / sc;
            acc += e * e;
        }
        (acc / n as f64).sqrt()
    }

    /// Advance the state exactly to `t_end`.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        let n = self.y.len();
        if (t_end - self.t).abs() < 1e-300 {
            return Ok(());
        }
        let span = t_end - self.t;
        debug_assert!(span > 0.0, "time must advance forward");
        // underflow thresholds scale with the segment, so very short spans
        // (T -> 0 limits) integrate normally
        let t_scale = t_end.abs().max(span.abs());
        if self.h <= 0.0 {
            self.h = (span / 16.0).min(0.1);
        }
        if !self.fsal_valid {
            let (y, k0) = (&self.y, &mut self.k[0]);
            self.system.rhs(self.t, y, k0);
            self.fsal_valid = true;
        }

        let mut y_stage = vec![Complex64::ZERO; n];
        let mut y_new = vec![Complex64::ZERO; n];
        let mut err = vec![Complex64::ZERO; n];

        while self.t < t_end - 1e-14 * t_scale {
            let h = self.h.min(t_end - self.t);
            if h < 1e-14 * t_scale {
                return Err(Error::IntegrationFailure {
                    t: self.t,
                    reason: "step size underflow",
                });
            }
            self.steps_taken += 1;
            if self.steps_taken > self.opts.max_steps {
                return Err(Error::IntegrationFailure {
                    t: self.t,
                    reason: "step budget exhausted",
                });
            }

            for s in 1..7 {
                #[allow(clippy::needless_range_loop)]
                for i in 0..n {
                    let mut acc = Complex64::ZERO;
                    for (j, a) in A[s - 1][..s].iter().enumerate() {
                        if *a != 0.0 {
                            acc += *a * self.k[j][i];
                        }
                    }
                    y_stage[i] = self.y[i] + h * acc;
                }
                let ts = self.t + C[s - 1] * h;
                if s < 6 {
                    let (ks, _) = self.k.split_at_mut(s + 1);
                    self.system.rhs(ts, &y_stage, &mut ks[s]);
                } else {
                    // stage 7 is evaluated at y_new (FSAL)
                    self.system.rhs(ts, &y_stage, &mut self.k[6]);
                }
                if s == 6 {
                    y_new.copy_from_slice(&y_stage);
                }
            }
            #[allow(clippy::needless_range_loop)]
            for i in 0..n {
                let mut e = Complex64::ZERO;
                for s in 0..7 {
                    let d = B5[s] - B4[s];
                    if d != 0.0 {
                        e += d * self.k[s][i];
                    }
                }
                err[i] = h * e;
            }

            let enorm = self.error_norm(&y_new, &err);
            if enorm <= 1.0 {
                self.t += h;
                self.y.copy_from_slice(&y_new);
                self.k.swap(0, 6); // FSAL
                self.system.guard(self.t, &self.y)?;
                let factor = if enorm == 0.0 {
                    5.0
                } else {
                    (0.9 * enorm.powf(-0.2)).clamp(0.2, 5.0)
                };
                self.h = h * factor;
            } else {
                self.h = h * (0.9 * enorm.powf(-0.2)).clamp(0.1, 1.0);
                // k[0] still holds f(t, y)
            }
        }
        self.t = t_end;
        Ok(())
    }
}

/// Integrate from t=0 and record the state at each of the given sample times
/// (which must be increasing and start at 0).
pub fn integrate_sampled<S: OdeSystem>(
    system: &S,
    y0: Vec<Complex64>,
    times: &[f64],
    opts: IntegratorOptions,
) -> Result<Vec<Vec<Complex64>>> {
    debug_assert!(times[0] == 0.0);
    let mut rk = AdaptiveRk::new(system, 0.0, y0, opts);
    let mut out = Vec::with_capacity(times.len());
    out.push(rk.state().to_vec());
    for &t in &times[1..] {
        rk.advance_to(t)?;
        out.push(rk.state().to_vec());
    }
    Ok(out)
}

/// Uniform sample grid on [0, T] with `n` intervals.
pub fn sample_times(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
}
