//! Semiclassical coherent-state overlap via two-sided complex boundary-value
//! trajectories.
//!
//! The overlap of the evolved initial Gaussian with a final Gaussian is a sum
//! over complex classical paths satisfying velocity conditions at both ends:
//!   m xdot(0) = p_i + i m Omega_i (x(0) - x_i),
//!   m xdot(T) = p_f - i m Omega_f* (x(T) - x_f).
//! Each path contributes
//!   (2 pi i hbar / m)^{d/2} psi_f*(x(T)) e^{iS/hbar} psi_i(x(0)) / sqrt(det M(T)),
//! where M(T) = U1dot + i U2dot Omega_i + i Omega_f* U1 - Omega_f* U2 Omega_i
//! is built from the two Jacobi solutions U1 (U1(0)=I, U1dot(0)=0) and U2
//! (U2(0)=0, U2dot(0)=I). M(T) is also exactly 1/m times the Newton Jacobian
//! of the boundary map, so caustics and singular shooting coincide. The
//! square root follows the continuous branch tracked from t=0 by log-det
//! quadrature.

use crate::error::{Error, Result};
use crate::ode::{integrate_sampled, sample_times, IntegratorOptions, OdeSystem};
use crate::packet::GaussianPacket;
use crate::potential::{eval_derivs, PotentialModel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagatorQuery {
    pub initial: GaussianPacket,
    pub final_packet: GaussianPacket,
    pub t_end: f64,
    pub model: PotentialModel,
}

impl PropagatorQuery {
    pub fn validate(&self) -> Result<()> {
        self.initial.validate()?;
        self.final_packet.validate()?;
        let d = self.initial.dim();
        if self.final_packet.dim() != d || self.model.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.final_packet.dim(),
            });
        }
        if (self.initial.hbar - self.final_packet.hbar).abs() > 0.0 {
            return Err(Error::InvalidParameter(
                "packets must share hbar".into(),
            ));
        }
        if self
            .initial
            .masses
            .iter()
            .zip(&self.final_packet.masses)
            .any(|(a, b)| (a - b).abs() > 0.0)
        {
            return Err(Error::InvalidParameter("packets must share masses".into()));
        }
        let m0 = self.initial.masses[0];
        if self.initial.masses.iter().any(|&m| (m - m0).abs() > 0.0) {
            return Err(Error::InvalidParameter(
                "the coherent-state propagator uses a scalar mass".into(),
            ));
        }
        if self.t_end < 0.0 {
            return Err(Error::InvalidParameter("T must be nonnegative".into()));
        }
        Ok(())
    }

    fn mass(&self) -> f64 {
        self.initial.masses[0]
    }

    fn hbar(&self) -> f64 {
        self.initial.hbar
    }

    fn omega_i(&self) -> DMatrix<Complex64> {
        self.initial.width_matrix()
    }

    /// Conjugated final width (the analytic continuation of psi_f^*).
    fn omega_f_conj(&self) -> DMatrix<Complex64> {
        self.final_packet.width_matrix().map(|w| w.conj())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoSidedBranch {
    pub x_start: Vec<Complex64>,
    pub residual: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Complex64>>,
    pub velocities: Vec<Vec<Complex64>>,
    /// Classical action S[x] at T.
    pub action: Complex64,
    /// Jacobi pair at every sample (row-major d x d each).
    pub u1: Vec<Vec<Complex64>>,
    pub u1dot: Vec<Vec<Complex64>>,
    pub u2: Vec<Vec<Complex64>>,
    pub u2dot: Vec<Vec<Complex64>>,
    /// log det M(t) tracked continuously from t = 0.
    pub log_det_m: Vec<Complex64>,
    /// max_t || U1dot^T U2 - U1^T U2dot + I ||, a conserved-quantity check.
    pub wronskian_drift: f64,
    pub contribution: Complex64,
}

impl TwoSidedBranch {
    pub fn final_position(&self) -> &[Complex64] {
        self.positions.last().unwrap()
    }

    pub fn final_log_det_m(&self) -> Complex64 {
        *self.log_det_m.last().unwrap()
    }
}

// State: x(d) v(d) action(1) U1 U1dot U2 U2dot (d^2 each) logdetM(1)
struct TwoSidedSystem<'a> {
    model: &'a PotentialModel,
    mass: f64,
    dim: usize,
    omega_i: DMatrix<Complex64>,
    omega_f_conj: DMatrix<Complex64>,
}

impl TwoSidedSystem<'_> {
    fn total(&self) -> usize {
        2 * self.dim + 1 + 4 * self.dim * self.dim + 1
    }

    fn mat(&self, y: &[Complex64], off: usize) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &y[off..off + self.dim * self.dim])
    }

    fn offsets(&self) -> (usize, usize, usize, usize, usize) {
        let d2 = self.dim * self.dim;
        let u1 = 2 * self.dim + 1;
        (u1, u1 + d2, u1 + 2 * d2, u1 + 3 * d2, u1 + 4 * d2)
    }

    /// M(t) = U1dot + i U2dot Omega_i + i Omega_f* U1 - Omega_f* U2 Omega_i.
    fn m_matrix(&self, y: &[Complex64]) -> DMatrix<Complex64> {
        let (u1o, u1d, u2o, u2d, _) = self.offsets();
        let i = Complex64::i();
        self.mat(y, u1d)
            + self.mat(y, u2d) * &self.omega_i * i
            + &self.omega_f_conj * self.mat(y, u1o) * i
            - &self.omega_f_conj * self.mat(y, u2o) * &self.omega_i
    }

    fn m_dot(&self, y: &[Complex64], hess: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let (u1o, u1d, u2o, u2d, _) = self.offsets();
        let i = Complex64::i();
        let scale = Complex64::new(-1.0 / self.mass, 0.0);
        let u1dd = hess * self.mat(y, u1o) * scale;
        let u2dd = hess * self.mat(y, u2o) * scale;
        u1dd + u2dd * &self.omega_i * i + &self.omega_f_conj * self.mat(y, u1d) * i
            - &self.omega_f_conj * self.mat(y, u2d) * &self.omega_i
    }
}

impl OdeSystem for TwoSidedSystem<'_> {
    fn state_len(&self) -> usize {
        self.total()
    }

    fn rhs(&self, _t: f64, y: &[Complex64], dydt: &mut [Complex64]) {
        let d = self.dim;
        let m = self.mass;
        let derivs = eval_derivs(self.model, &y[0..d], 2).expect("potential derivatives");
        let hess = DMatrix::from_fn(d, d, |i, j| derivs.hessian(i, j));

        for i in 0..d {
            dydt[i] = y[d + i];
            dydt[d + i] = -derivs.gradient(i) / m;
        }
        let kin: Complex64 = y[d..2 * d].iter().map(|v| 0.5 * m * v * v).sum();
        dydt[2 * d] = kin - derivs.value();

        let (u1o, u1d, u2o, u2d, ld) = self.offsets();
        for (uo, udo) in [(u1o, u1d), (u2o, u2d)] {
            for i in 0..d {
                for j in 0..d {
                    dydt[uo + i * d + j] = y[udo + i * d + j];
                    let mut acc = Complex64::ZERO;
                    for k in 0..d {
                        acc += hess[(i, k)] * y[uo + k * d + j];
                    }
                    dydt[udo + i * d + j] = -acc / m;
                }
            }
        }

        let mm = self.m_matrix(y);
        let mdot = self.m_dot(y, &hess);
        dydt[ld] = match mm.lu().solve(&DMatrix::identity(d, d)) {
            Some(inv) => (mdot * inv).trace(),
            None => Complex64::new(f64::NAN, f64::NAN),
        };
    }
}

fn principal_log_det(m: &DMatrix<Complex64>) -> Complex64 {
    m.clone().determinant().ln()
}

fn initial_two_sided_state(sys: &TwoSidedSystem, query: &PropagatorQuery, x0: &[Complex64]) -> Vec<Complex64> {
    let d = sys.dim;
    let mut y = vec![Complex64::ZERO; sys.total()];
    y[0..d].copy_from_slice(x0);
    // m v(0) = p_i + i m Omega_i (x(0) - x_i)
    let dx = DMatrix::from_fn(d, 1, |i, _| x0[i] - query.initial.x0[i]);
    let wv = &sys.omega_i * &dx;
    for i in 0..d {
        y[d + i] = query.initial.p0[i] / sys.mass + Complex64::i() * wv[(i, 0)];
    }
    let (u1o, _, _, u2d, ld) = sys.offsets();
    for i in 0..d {
        y[u1o + i * d + i] = Complex64::ONE;
        y[u2d + i * d + i] = Complex64::ONE;
    }
    // M(0) = i (Omega_i + Omega_f*)
    let m0 = (&sys.omega_i + &sys.omega_f_conj) * Complex64::i();
    y[ld] = principal_log_det(&m0);
    y
}

fn boundary_residual(
    sys: &TwoSidedSystem,
    query: &PropagatorQuery,
    y_end: &[Complex64],
) -> Vec<Complex64> {
    let d = sys.dim;
    let m = sys.mass;
    let dx = DMatrix::from_fn(d, 1, |i, _| y_end[i] - query.final_packet.x0[i]);
    let wv = &sys.omega_f_conj * &dx;
    (0..d)
        .map(|i| {
            m * y_end[d + i] - query.final_packet.p0[i] + Complex64::i() * m * wv[(i, 0)]
        })
        .collect()
}

/// Newton solve of the two-sided boundary problem from a starting guess for
/// x(0). The Jacobian of the residual with respect to x(0) is m M(T).
pub fn solve_two_sided(
    query: &PropagatorQuery,
    guess: &[Complex64],
    opts: IntegratorOptions,
    shoot_tol: f64,
    max_newton: usize,
) -> Result<TwoSidedBranch> {
    query.validate()?;
    let d = query.initial.dim();
    let sys = TwoSidedSystem {
        model: &query.model,
        mass: query.mass(),
        dim: d,
        omega_i: query.omega_i(),
        omega_f_conj: query.omega_f_conj(),
    };

    let endpoint = |x0: &[Complex64]| -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let y0 = initial_two_sided_state(&sys, query, x0);
        let states = integrate_sampled(&sys, y0, &[0.0, query.t_end], opts)?;
        let y = states.last().unwrap().clone();
        let r = boundary_residual(&sys, query, &y);
        Ok((y, r))
    };

    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    let mut x0 = guess.to_vec();
    let (mut y_end, mut r) = endpoint(&x0)?;
    for _iter in 0..max_newton {
        let rn = norm(&r);
        if rn <= shoot_tol {
            return finalize_branch(&sys, query, &x0, rn, opts);
        }
        let mm = sys.m_matrix(&y_end);
        let det = mm.clone().determinant();
        if det.norm() < 1e-12 {
            return Err(Error::SingularJacobian {
                det_abs: det.norm(),
                threshold: 1e-12,
            });
        }
        let jac = mm * Complex64::new(sys.mass, 0.0);
        let rv = nalgebra::DVector::from_column_slice(&r);
        let delta = jac
            .lu()
            .solve(&rv)
            .ok_or(Error::SingularMatrix { context: "two-sided newton" })?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<Complex64> = (0..d).map(|i| x0[i] - lambda * delta[i]).collect();
            if let Ok((ye, re)) = endpoint(&trial) {
                if norm(&re) < rn {
                    x0 = trial;
                    y_end = ye;
                    r = re;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: max_newton,
                residual: rn,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_newton,
        residual: norm(&r),
    })
}

fn finalize_branch(
    sys: &TwoSidedSystem,
    query: &PropagatorQuery,
    x0: &[Complex64],
    residual: f64,
    opts: IntegratorOptions,
) -> Result<TwoSidedBranch> {
    let d = sys.dim;
    let d2 = d * d;
    let y0 = initial_two_sided_state(sys, query, x0);
    let times = sample_times(query.t_end.max(1e-300), 64);
    let states = integrate_sampled(sys, y0, &times, opts)?;
    let (u1o, u1d, u2o, u2d, ld) = sys.offsets();

    let mut branch = TwoSidedBranch {
        x_start: x0.to_vec(),
        residual,
        times,
        positions: Vec::with_capacity(states.len()),
        velocities: Vec::with_capacity(states.len()),
        action: states.last().unwrap()[2 * d],
        u1: Vec::new(),
        u1dot: Vec::new(),
        u2: Vec::new(),
        u2dot: Vec::new(),
        log_det_m: Vec::new(),
        wronskian_drift: 0.0,
        contribution: Complex64::ZERO,
    };
    for y in &states {
        branch.positions.push(y[0..d].to_vec());
        branch.velocities.push(y[d..2 * d].to_vec());
        branch.u1.push(y[u1o..u1o + d2].to_vec());
        branch.u1dot.push(y[u1d..u1d + d2].to_vec());
        branch.u2.push(y[u2o..u2o + d2].to_vec());
        branch.u2dot.push(y[u2d..u2d + d2].to_vec());
        branch.log_det_m.push(y[ld]);

        let u1m = DMatrix::from_row_slice(d, d, &y[u1o..u1o + d2]);
        let u1dm = DMatrix::from_row_slice(d, d, &y[u1d..u1d + d2]);
        let u2m = DMatrix::from_row_slice(d, d, &y[u2o..u2o + d2]);
        let u2dm = DMatrix::from_row_slice(d, d, &y[u2d..u2d + d2]);
        let w = u1dm.transpose() * u2m - u1m.transpose() * u2dm + DMatrix::identity(d, d);
        branch.wronskian_drift = branch.wronskian_drift.max(w.norm());
    }
    Ok(branch)
}

/// Analytic continuation of psi_i to complex points.
fn psi_i_at(query: &PropagatorQuery, z: &[Complex64]) -> Complex64 {
    let d = query.initial.dim();
    let m = query.mass();
    let hbar = query.hbar();
    let w = query.omega_i();
    let dx = DMatrix::from_fn(d, 1, |i, _| z[i] - query.initial.x0[i]);
    let quad = (dx.transpose() * &w * &dx)[(0, 0)];
    let lin: Complex64 = (0..d).map(|i| query.initial.p0[i] * dx[(i, 0)]).sum();
    (-m * quad / (2.0 * hbar) + Complex64::i() * lin / hbar).exp()
}

/// Analytic continuation of psi_f^* to complex points.
fn psi_f_conj_at(query: &PropagatorQuery, z: &[Complex64]) -> Complex64 {
    let d = query.final_packet.dim();
    let m = query.mass();
    let hbar = query.hbar();
    let w = query.omega_f_conj();
    let dx = DMatrix::from_fn(d, 1, |i, _| z[i] - query.final_packet.x0[i]);
    let quad = (dx.transpose() * &w * &dx)[(0, 0)];
    let lin: Complex64 = (0..d).map(|i| query.final_packet.p0[i] * dx[(i, 0)]).sum();
    (-m * quad / (2.0 * hbar) - Complex64::i() * lin / hbar).exp()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlapResult {
    pub p_raw: Complex64,
    /// P divided by ||psi_i|| ||psi_f||.
    pub p_normalized: Complex64,
    pub branch_count: usize,
    pub contributions: Vec<Complex64>,
}

/// Branch sum of the overlap formula. The square root of det M(T) uses the
/// continuously tracked log-det branch.
pub fn coherent_overlap(
    query: &PropagatorQuery,
    branches: &mut [TwoSidedBranch],
) -> Result<OverlapResult> {
    query.validate()?;
    let d = query.initial.dim();
    let hbar = query.hbar();
    let m = query.mass();
    let prefactor = (Complex64::i() * 2.0 * std::f64::consts::PI * hbar / m)
        .powf(d as f64 / 2.0);

    let mut p = Complex64::ZERO;
    let mut contributions = Vec::with_capacity(branches.len());
    for branch in branches.iter_mut() {
        let log_det = branch.final_log_det_m();
        if log_det.re.exp() < 1e-12 {
            return Err(Error::CausticAtT {
                det_abs: log_det.re.exp(),
                threshold: 1e-12,
            });
        }
        let amp = psi_f_conj_at(query, branch.final_position())
            * (Complex64::i() * branch.action / hbar).exp()
            * psi_i_at(query, &branch.x_start);
        let contrib = prefactor * amp * (-0.5 * log_det).exp();
        branch.contribution = contrib;
        contributions.push(contrib);
        p += contrib;
    }
    let norm_product = query.initial.norm() * query.final_packet.norm();
    Ok(OverlapResult {
        p_raw: p,
        p_normalized: p / norm_product,
        branch_count: branches.len(),
        contributions,
    })
}

/// Printed closed form for the scalar free particle.
pub fn free_particle_overlap_exact(query: &PropagatorQuery) -> Result<Complex64> {
    query.validate()?;
    if query.initial.dim() != 1 || !matches!(query.model, PotentialModel::Free { .. }) {
        return Err(Error::UnsupportedCombination(
            "closed form is for the 1D free particle".into(),
        ));
    }
    let m = query.mass();
    let hbar = query.hbar();
    let t = query.t_end;
    let wi = query.initial.width[0];
    let wfc = query.final_packet.width[0].conj();
    let (xi, pi) = (query.initial.x0[0], query.initial.p0[0]);
    let (xf, pf) = (query.final_packet.x0[0], query.final_packet.p0[0]);

    let den = wi + wfc + Complex64::i() * t * wi * wfc;
    let num = (pi - pf) * (pi - pf) + m * m * wi * wfc * (xi - xf) * (xi - xf)
        + Complex64::i() * t * (pi * pi * wfc + pf * pf * wi)
        + Complex64::i() * 2.0 * m * (xi - xf) * (pi * wfc + pf * wi);
    Ok((2.0 * std::f64::consts::PI * hbar / (m * den)).sqrt()
        * (-num / (2.0 * hbar * m * den)).exp())
}

/// Reasonable Newton starting guess: midpoint of the two packet centers.
pub fn default_guess(query: &PropagatorQuery) -> Vec<Complex64> {
    (0..query.initial.dim())
        .map(|i| Complex64::new(0.5 * (query.initial.x0[i] + query.final_packet.x0[i]), 0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_query_1d(t_end: f64) -> PropagatorQuery {
        PropagatorQuery {
            initial: GaussianPacket {
                x0: vec![0.2],
                p0: vec![0.5],
                width: vec![Complex64::new(0.9, 0.2)],
                hbar: 0.7,
                masses: vec![1.3],
            },
            final_packet: GaussianPacket {
                x0: vec![-0.3],
                p0: vec![0.8],
                width: vec![Complex64::new(1.1, -0.3)],
                hbar: 0.7,
                masses: vec![1.3],
            },
            t_end,
            model: PotentialModel::Free { dim: 1 },
        }
    }

    #[test]
    fn free_particle_newton_converges_in_one_step() {
        let query = free_query_1d(0.9);
        let branch = solve_two_sided(
            &query,
            &default_guess(&query),
            IntegratorOptions::default(),
            1e-11,
            10,
        )
        .unwrap();
        assert!(branch.residual <= 1e-11);
        // affine boundary map: a single Newton step (plus the verify pass)
        assert!(branch.wronskian_drift < 1e-9);
    }

    #[test]
    fn free_particle_matches_closed_form() {
        let query = free_query_1d(0.9);
        let mut branches = vec![solve_two_sided(
            &query,
            &default_guess(&query),
            IntegratorOptions::default(),
            1e-12,
            20,
        )
        .unwrap()];
        let overlap = coherent_overlap(&query, &mut branches).unwrap();
        let exact = free_particle_overlap_exact(&query).unwrap();
        assert!(
            (overlap.p_raw - exact).norm() < 1e-10 * exact.norm(),
            "{} vs {exact}",
            overlap.p_raw
        );
    }

    #[test]
    fn matched_packets_give_pure_phase() {
        let m = 1.3;
        let t = 1.1;
        let p = 0.8;
        let x0 = 0.4;
        let w = Complex64::new(0.7, 0.25);
        let query = PropagatorQuery {
            initial: GaussianPacket {
                x0: vec![x0],
                p0: vec![p],
                width: vec![w],
                hbar: 0.5,
                masses: vec![m],
            },
            final_packet: GaussianPacket {
                x0: vec![x0 + p * t / m],
                p0: vec![p],
                width: vec![w],
                hbar: 0.5,
                masses: vec![m],
            },
            t_end: t,
            model: PotentialModel::Free { dim: 1 },
        };
        let exact = free_particle_overlap_exact(&query).unwrap();
        let den = w + w.conj() + Complex64::i() * t * w * w.conj();
        let prefactor = (2.0 * std::f64::consts::PI * 0.5 / (m * den)).sqrt();
        let phase = exact / prefactor;
        assert!((phase.norm() - 1.0).abs() < 1e-10, "|phase| = {}", phase.norm());
        let expected = (Complex64::i() * t * p * p / (2.0 * m * 0.5)).exp();
        assert!((phase - expected).norm() < 1e-10);
    }

    #[test]
    fn t_zero_identical_packets_real_positive() {
        let w = Complex64::new(0.8, 0.3);
        let query = PropagatorQuery {
            initial: GaussianPacket {
                x0: vec![0.1],
                p0: vec![0.4],
                width: vec![w],
                hbar: 1.0,
                masses: vec![1.0],
            },
            final_packet: GaussianPacket {
                x0: vec![0.1],
                p0: vec![0.4],
                width: vec![w],
                hbar: 1.0,
                masses: vec![1.0],
            },
            t_end: 1e-13,
            model: PotentialModel::Free { dim: 1 },
        };
        let mut branches = vec![solve_two_sided(
            &query,
            &default_guess(&query),
            IntegratorOptions::default(),
            1e-10,
            20,
        )
        .unwrap()];
        let overlap = coherent_overlap(&query, &mut branches).unwrap();
        // Gaussian overlap integral: sqrt(2 pi hbar / (m (w + w*)))
        let exact = (2.0 * std::f64::consts::PI / (w + w.conj())).sqrt();
        assert!(overlap.p_raw.im.abs() < 1e-8);
        assert!(overlap.p_raw.re > 0.0);
        assert!((overlap.p_raw - exact).norm() < 1e-8);
        // brute-force quadrature of the same overlap
        let mut acc = Complex64::ZERO;
        let (lo, hi, n) = (-12.0, 12.0, 48000);
        let h = (hi - lo) / n as f64;
        for k in 0..=n {
            let x = [Complex64::new(lo + k as f64 * h, 0.0)];
            let wgt = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += wgt * psi_f_conj_at(&query, &x) * psi_i_at(&query, &x) * h;
        }
        assert!((overlap.p_raw - acc).norm() < 1e-6);
    }

    #[test]
    fn conjugate_reversed_overlap_symmetry() {
        // P(i -> f, T) equals P(f^c -> i^c, T) where ^c conjugates the width
        // and reverses the momentum (time reversal for a real Hamiltonian)
        let forward = free_query_1d(0.9);
        let reversed = PropagatorQuery {
            initial: GaussianPacket {
                x0: forward.final_packet.x0.clone(),
                p0: vec![-forward.final_packet.p0[0]],
                width: vec![forward.final_packet.width[0].conj()],
                hbar: forward.initial.hbar,
                masses: forward.initial.masses.clone(),
            },
            final_packet: GaussianPacket {
                x0: forward.initial.x0.clone(),
                p0: vec![-forward.initial.p0[0]],
                width: vec![forward.initial.width[0].conj()],
                hbar: forward.initial.hbar,
                masses: forward.initial.masses.clone(),
            },
            t_end: forward.t_end,
            model: forward.model.clone(),
        };
        let run = |q: &PropagatorQuery| {
            let mut b = vec![
                solve_two_sided(q, &default_guess(q), IntegratorOptions::default(), 1e-12, 20)
                    .unwrap(),
            ];
            coherent_overlap(q, &mut b).unwrap().p_raw
        };
        let p_fwd = run(&forward);
        let p_rev = run(&reversed);
        assert!(
            (p_fwd - p_rev).norm() < 1e-8 * p_fwd.norm(),
            "{p_fwd} vs {p_rev}"
        );
    }

    #[test]
    fn maximal_overlap_at_matching_centers() {
        let w = Complex64::new(0.8, 0.0);
        let base = |xf: f64| PropagatorQuery {
            initial: GaussianPacket {
                x0: vec![0.3],
                p0: vec![0.0],
                width: vec![w],
                hbar: 1.0,
                masses: vec![1.0],
            },
            final_packet: GaussianPacket {
                x0: vec![xf],
                p0: vec![0.0],
                width: vec![w],
                hbar: 1.0,
                masses: vec![1.0],
            },
            t_end: 0.0,
            model: PotentialModel::Free { dim: 1 },
        };
        let center = free_particle_overlap_exact(&base(0.3)).unwrap().norm();
        for xf in [-0.5, 0.0, 0.6, 1.2] {
            let v = free_particle_overlap_exact(&base(xf)).unwrap().norm();
            assert!(v <= center + 1e-12, "xf={xf}");
        }
    }
}
