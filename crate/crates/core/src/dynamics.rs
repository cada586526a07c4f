//! Complex classical trajectories, the stability (Jacobi) matrix, the
//! two-point boundary problem, and branch enumeration.
//!
//! A trajectory solves m_i xdd_i = -dV/dx_i in complexified configuration
//! space with the velocity initial condition v(0) = nabla S_init(x(0)) / m.
//! The stability matrix tracked here is U(t) = dx(t)/dx(0) for that
//! constrained family: U(0) = I, Udot(0)_ij = H(S_init)_ij / m_i, and
//! m_i Udd_ij = -sum_k H(V)_ik U_kj. Its determinant equals the det U of the
//! semiclassical prefactor (for diagonal masses the two matrices are related
//! by a similarity transformation), log det U is propagated continuously via
//! d(log det U)/dt = tr(Udot U^-1), and U(T) doubles as the Newton Jacobian
//! of the x(0) -> x(T) map.

use crate::error::{Error, Result};
use crate::ode::{integrate_sampled, sample_times, IntegratorOptions, OdeSystem};
use crate::packet::SInit;
use crate::parallel::par_map;
use crate::potential::{eval_derivs, PotentialModel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_CAUSTIC_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_DEDUP_TOL: f64 = 1e-7;

/// One complex trajectory with its action, stability matrix, and
/// continuously tracked log det U, sampled densely in t.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub dim: usize,
    pub masses: Vec<f64>,
    pub times: Vec<f64>,
    /// Position per sample, `positions[k][i]`.
    pub positions: Vec<Vec<Complex64>>,
    pub velocities: Vec<Vec<Complex64>>,
    /// Classical action of the path accumulated from t = 0 (S_init excluded).
    pub actions: Vec<Complex64>,
    /// Stability matrix per sample, row-major d*d.
    pub stability: Vec<Vec<Complex64>>,
    pub stability_dot: Vec<Vec<Complex64>>,
    pub log_det_stability: Vec<Complex64>,
    /// Set when |det U| dropped below the caustic threshold at any sample.
    pub caustic_flag: bool,
}

impl TrajectoryRecord {
    pub fn samples(&self) -> usize {
        self.times.len()
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn start_position(&self) -> &[Complex64] {
        &self.positions[0]
    }

    pub fn final_position(&self) -> &[Complex64] {
        self.positions.last().unwrap()
    }

    pub fn stability_matrix(&self, sample: usize) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.stability[sample])
    }

    pub fn stability_dot_matrix(&self, sample: usize) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.stability_dot[sample])
    }

    pub fn det_stability(&self, sample: usize) -> Complex64 {
        self.stability_matrix(sample).determinant()
    }

    pub fn final_log_det(&self) -> Complex64 {
        *self.log_det_stability.last().unwrap()
    }

    /// Complex classical energy sum_i m_i v_i^2 / 2 + V(x) at a sample.
    pub fn energy(&self, model: &PotentialModel, sample: usize) -> Result<Complex64> {
        let kin: Complex64 = self.velocities[sample]
            .iter()
            .zip(&self.masses)
            .map(|(v, &m)| 0.5 * m * v * v)
            .sum();
        Ok(kin + eval_derivs(model, &self.positions[sample], 0)?.value())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("trajectory serialization")
    }
}

// State layout: x (d) | v (d) | action (1) | U (d^2) | Udot (d^2) | log det U (1)
struct ClassicalBundle<'a> {
    model: &'a PotentialModel,
    masses: &'a [f64],
    dim: usize,
    track_log_det: bool,
}

impl ClassicalBundle<'_> {
    fn state_len(&self) -> usize {
        2 * self.dim + 1 + 2 * self.dim * self.dim + 1
    }
}

impl OdeSystem for ClassicalBundle<'_> {
    fn state_len(&self) -> usize {
        self.state_len()
    }

    fn rhs(&self, _t: f64, y: &[Complex64], dydt: &mut [Complex64]) {
        let d = self.dim;
        let (x, v) = (&y[0..d], &y[d..2 * d]);
        let u_off = 2 * d + 1;
        let ud_off = u_off + d * d;
        let ld_off = ud_off + d * d;

        let derivs = eval_derivs(self.model, x, 2).expect("potential derivatives");
        for i in 0..d {
            dydt[i] = v[i];
            dydt[d + i] = -derivs.gradient(i) / self.masses[i];
        }
        let kin: Complex64 = v
            .iter()
            .zip(self.masses)
            .map(|(vi, &m)| 0.5 * m * vi * vi)
            .sum();
        dydt[2 * d] = kin - derivs.value();

        // U' = Udot, m_i Udot'_ij = -sum_k H_ik U_kj
        for i in 0..d {
            for j in 0..d {
                dydt[u_off + i * d + j] = y[ud_off + i * d + j];
                let mut acc = Complex64::ZERO;
                for k in 0..d {
                    acc += derivs.hessian(i, k) * y[u_off + k * d + j];
                }
                dydt[ud_off + i * d + j] = -acc / self.masses[i];
            }
        }

        if self.track_log_det {
            dydt[ld_off] = trace_udot_uinv(d, &y[u_off..ud_off], &y[ud_off..ld_off]);
        } else {
            dydt[ld_off] = Complex64::ZERO;
        }
    }
}

fn trace_udot_uinv(d: usize, u: &[Complex64], udot: &[Complex64]) -> Complex64 {
    if d == 1 {
        return udot[0] / u[0];
    }
    let um = DMatrix::from_row_slice(d, d, u);
    let udm = DMatrix::from_row_slice(d, d, udot);
    match um.lu().solve(&DMatrix::identity(d, d)) {
        Some(uinv) => (udm * uinv).trace(),
        None => Complex64::new(f64::NAN, f64::NAN),
    }
}

fn initial_state(sinit: &SInit, x_start: &[Complex64]) -> Vec<Complex64> {
    let d = sinit.dim();
    let mut y = vec![Complex64::ZERO; 2 * d + 1 + 2 * d * d + 1];
    y[0..d].copy_from_slice(x_start);
    let v0 = sinit.initial_velocity(x_start);
    y[d..2 * d].copy_from_slice(&v0);
    let u_off = 2 * d + 1;
    let ud_off = u_off + d * d;
    let hess = sinit.hessian();
    for i in 0..d {
        y[u_off + i * d + i] = Complex64::ONE;
        for j in 0..d {
            y[ud_off + i * d + j] = hess[(i, j)] / sinit.masses()[i];
        }
    }
    y
}

/// Integrate the classical trajectory plus stability matrix from `x_start`,
/// sampling at `n_samples` + 1 uniform times on [0, T].
pub fn integrate_classical(
    x_start: &[Complex64],
    model: &PotentialModel,
    sinit: &SInit,
    t_end: f64,
    opts: IntegratorOptions,
    n_samples: usize,
    caustic_threshold: f64,
) -> Result<TrajectoryRecord> {
    let d = sinit.dim();
    if model.dim() != d || x_start.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: model.dim(),
        });
    }
    let sys = ClassicalBundle {
        model,
        masses: sinit.masses(),
        dim: d,
        track_log_det: true,
    };
    let times = sample_times(t_end, n_samples.max(1));
    let states = integrate_sampled(&sys, initial_state(sinit, x_start), &times, opts)?;

    let u_off = 2 * d + 1;
    let ud_off = u_off + d * d;
    let ld_off = ud_off + d * d;
    let mut rec = TrajectoryRecord {
        dim: d,
        masses: sinit.masses().to_vec(),
        times,
        positions: Vec::with_capacity(states.len()),
        velocities: Vec::with_capacity(states.len()),
        actions: Vec::with_capacity(states.len()),
        stability: Vec::with_capacity(states.len()),
        stability_dot: Vec::with_capacity(states.len()),
        log_det_stability: Vec::with_capacity(states.len()),
        caustic_flag: false,
    };
    for y in &states {
        rec.positions.push(y[0..d].to_vec());
        rec.velocities.push(y[d..2 * d].to_vec());
        rec.actions.push(y[2 * d]);
        rec.stability.push(y[u_off..ud_off].to_vec());
        rec.stability_dot.push(y[ud_off..ld_off].to_vec());
        rec.log_det_stability.push(y[ld_off]);
    }
    rec.caustic_flag = (0..rec.samples())
        .any(|k| rec.det_stability(k).norm() < caustic_threshold);
    Ok(rec)
}

/// Endpoint-only integration used inside Newton iterations.
fn endpoint(
    x_start: &[Complex64],
    model: &PotentialModel,
    sinit: &SInit,
    t_end: f64,
    opts: IntegratorOptions,
) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let d = sinit.dim();
    let sys = ClassicalBundle {
        model,
        masses: sinit.masses(),
        dim: d,
        track_log_det: false,
    };
    let states = integrate_sampled(&sys, initial_state(sinit, x_start), &[0.0, t_end], opts)?;
    let y = states.last().unwrap();
    let u_off = 2 * d + 1;
    Ok((
        y[0..d].to_vec(),
        DMatrix::from_row_slice(d, d, &y[u_off..u_off + d * d]),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchClass {
    Contributing,
    DiscardedLarge,
    CausticAdjacent,
    Duplicate,
}

/// One solution of the boundary-value problem x(T) = X.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub x_start: Vec<Complex64>,
    pub residual: f64,
    pub trajectory: TrajectoryRecord,
    pub classification: BranchClass,
    pub contribution: Option<Complex64>,
    pub newton_iterations: usize,
}

impl Branch {
    pub fn im_start_norm(&self) -> f64 {
        self.x_start.iter().map(|z| z.im * z.im).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Real-part range of starting guesses.
    pub re_range: (f64, f64),
    /// Imaginary-part range of starting guesses.
    pub im_range: (f64, f64),
    /// Lattice is grid_n x grid_n over the complex rectangle.
    pub grid_n: usize,
    pub shoot_tol: f64,
    pub dedup_tol: f64,
    pub caustic_threshold: f64,
    /// Branch magnitude filter: discard |psi| > cutoff * max|psi0|.
    pub cutoff: f64,
    pub max_newton: usize,
    /// Seed for the jittered multi-start used when d > 1.
    pub seed: u64,
    pub trajectory_samples: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            re_range: (-5.0, 5.0),
            im_range: (-3.0, 3.0),
            grid_n: 6,
            shoot_tol: 1e-10,
            dedup_tol: DEFAULT_DEDUP_TOL,
            caustic_threshold: DEFAULT_CAUSTIC_THRESHOLD,
            cutoff: 10.0,
            max_newton: 50,
            seed: 0,
            trajectory_samples: 512,
        }
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Damped Newton iteration on the starting point x(0), using the stability
/// matrix U(T) as the Jacobian of the x(0) -> x(T) map.
pub fn shoot_for_target(
    target: &[Complex64],
    guess: &[Complex64],
    model: &PotentialModel,
    sinit: &SInit,
    t_end: f64,
    opts: IntegratorOptions,
    cfg: &SearchConfig,
) -> Result<Branch> {
    let d = sinit.dim();
    let mut x0 = guess.to_vec();
    let (mut x_end, mut jac) = endpoint(&x0, model, sinit, t_end, opts)?;

    for iter in 0..cfg.max_newton {
        let r: Vec<Complex64> = (0..d).map(|i| x_end[i] - target[i]).collect();
        let rn = norm(&r);
        if rn <= cfg.shoot_tol {
            let trajectory = integrate_classical(
                &x0,
                model,
                sinit,
                t_end,
                opts,
                cfg.trajectory_samples,
                cfg.caustic_threshold,
            )?;
            return Ok(Branch {
                x_start: x0,
                residual: rn,
                trajectory,
                classification: BranchClass::Contributing,
                contribution: None,
                newton_iterations: iter,
            });
        }

        let det = jac.clone().determinant();
        if det.norm() < cfg.caustic_threshold {
            return Err(Error::SingularJacobian {
                det_abs: det.norm(),
                threshold: cfg.caustic_threshold,
            });
        }
        let rv = nalgebra::DVector::from_column_slice(&r);
        let delta = jac
            .clone()
            .lu()
            .solve(&rv)
            .ok_or(Error::SingularMatrix { context: "newton step" })?;

        // halve the step until the residual decreases
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<Complex64> = (0..d).map(|i| x0[i] - lambda * delta[i]).collect();
            // a failed trial means the trajectory escaped; shrink further
            if let Ok((xe, j)) = endpoint(&trial, model, sinit, t_end, opts) {
                let tn = norm(&(0..d).map(|i| xe[i] - target[i]).collect::<Vec<_>>());
                if tn < rn {
                    x0 = trial;
                    x_end = xe;
                    jac = j;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: iter + 1,
                residual: rn,
            });
        }
    }

    let r = norm(&(0..d).map(|i| x_end[i] - target[i]).collect::<Vec<_>>());
    Err(Error::NoConvergence {
        iterations: cfg.max_newton,
        residual: r,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchSearchReport {
    pub branches: Vec<Branch>,
    pub attempts: usize,
    pub converged: usize,
    pub duplicates: usize,
    pub failures: usize,
}

/// Starting guesses for the multi-start search: a grid_n x grid_n lattice over
/// the complex rectangle in 1D, a seeded uniform sample of the same size in
/// higher dimensions. The real target itself is always included.
fn search_guesses(target: &[Complex64], cfg: &SearchConfig, dim: usize) -> Vec<Vec<Complex64>> {
    let mut guesses = vec![target.to_vec()];
    let n = cfg.grid_n.max(1);
    let (re0, re1) = cfg.re_range;
    let (im0, im1) = cfg.im_range;
    if dim == 1 {
        for a in 0..n {
            for b in 0..n {
                let fa = if n == 1 { 0.5 } else { a as f64 / (n - 1) as f64 };
                let fb = if n == 1 { 0.5 } else { b as f64 / (n - 1) as f64 };
                guesses.push(vec![Complex64::new(
                    re0 + fa * (re1 - re0),
                    im0 + fb * (im1 - im0),
                )]);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..n * n {
            guesses.push(
                (0..dim)
                    .map(|_| {
                        Complex64::new(
                            rng.random_range(re0..=re1),
                            rng.random_range(im0..=im1),
                        )
                    })
                    .collect(),
            );
        }
    }
    guesses
}

/// Multi-start shooting over a lattice of complex initial guesses, with
/// deduplication of converged roots. Results are deterministic regardless of
/// scheduling: candidates are sorted before dedup.
pub fn branch_search(
    target: &[Complex64],
    model: &PotentialModel,
    sinit: &SInit,
    t_end: f64,
    opts: IntegratorOptions,
    cfg: &SearchConfig,
) -> BranchSearchReport {
    let guesses = search_guesses(target, cfg, sinit.dim());
    let attempts = guesses.len();
    let results = par_map(guesses, |g| {
        shoot_for_target(target, &g, model, sinit, t_end, opts, cfg)
    });

    let mut candidates: Vec<Branch> = Vec::new();
    let mut failures = 0;
    for r in results {
        match r {
            Ok(b) => candidates.push(b),
            Err(_) => failures += 1,
        }
    }
    let converged = candidates.len();

    candidates.sort_by(|a, b| {
        a.im_start_norm()
            .total_cmp(&b.im_start_norm())
            .then(a.residual.total_cmp(&b.residual))
            .then_with(|| cmp_complex_slices(&a.x_start, &b.x_start))
    });

    let mut kept: Vec<Branch> = Vec::new();
    for cand in candidates {
        let dup = kept.iter().any(|k| {
            k.x_start
                .iter()
                .zip(&cand.x_start)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
                < cfg.dedup_tol
        });
        if !dup {
            kept.push(cand);
        }
    }
    let duplicates = converged - kept.len();

    BranchSearchReport {
        branches: kept,
        attempts,
        converged,
        duplicates,
        failures,
    }
}

fn cmp_complex_slices(a: &[Complex64], b: &[Complex64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}
