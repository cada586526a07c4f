//! The truncated BOMCA hierarchy (Bohmian mechanics with complex action).
//!
//! Unlike the WKB expansion, the action is not expanded in hbar: the
//! derivative hierarchy of the complex quantum Hamilton-Jacobi equation is
//! closed by dropping every derivative of S of order exceeding 2n, which
//! deforms the trajectories themselves by O(hbar) instead of adding
//! correction factors. At n = 1 the equations reduce to classical
//! trajectories carrying S'' (equivalent to lowest-order Complex WKB); at
//! n = 2 the trajectory equation acquires the i hbar S'''/2m^2 term.
//!
//! This module also hosts the two printed first-order-exact variants on the
//! 1D path-integral side: the f-representation consistency check for native
//! BOMCA, and the classical-path variant where the trajectory stays classical
//! and the Jacobi equation is corrected by q(t).

use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::ode::{integrate_sampled, sample_times, IntegratorOptions, OdeSystem};
use crate::packet::SInit;
use crate::potential::{eval_derivs, PotentialModel};
use crate::quad::cumulative_simpson;
use crate::tensor::{canonical_indices, rank_nondecreasing, sym_len, SymTensor};
use crate::wkb::RICCATI_GUARD;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Hierarchy state at one time: position, velocity, action value, and the
/// derivative tensors of orders 2..=2n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BOMCAState {
    pub order: usize,
    pub dim: usize,
    pub x: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub s: Complex64,
    pub derivs: Vec<SymTensor>,
}

impl BOMCAState {
    /// Total scalar count: binomial(d + 2n, d) + d.
    pub fn scalar_count(&self) -> usize {
        let mut count = 2 * self.dim + 1; // x, v (v stands for nabla S / m), S
        for t in &self.derivs {
            count += t.len();
        }
        count
    }
}

/// Dense output of one BOMCA integration. The 1D second/third/fourth
/// derivative samples feed the f-representation check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BomcaRun {
    pub state: BOMCAState,
    pub hbar: f64,
    pub mass: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Complex64>>,
    pub actions: Vec<Complex64>,
    pub d2: Vec<Complex64>,
    pub d3: Vec<Complex64>,
    pub d4: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BomcaBranch {
    pub x_start: Vec<Complex64>,
    pub residual: f64,
    pub run: BomcaRun,
    pub newton_iterations: usize,
}

/// psi = exp(i S(T) / hbar); the semiclassical prefactor is carried inside S
/// by the i hbar S''/2m term of the action evolution.
pub fn bomca_wavefunction_branch(state: &BOMCAState, hbar: f64) -> Complex64 {
    (Complex64::i() * state.s / hbar).exp()
}

pub fn supported(n: usize, d: usize) -> bool {
    matches!((n, d), (1, 1..=3) | (2, 1..=2))
}

// State layout: x (d) | v (d) | S (1) | tensors of order 2..=2n
struct BomcaSystem<'a> {
    model: &'a PotentialModel,
    mass: f64,
    hbar: f64,
    dim: usize,
    n: usize,
    t_off: Vec<usize>,
    total: usize,
    indices: Vec<Vec<Vec<usize>>>,
}

impl<'a> BomcaSystem<'a> {
    fn new(model: &'a PotentialModel, mass: f64, hbar: f64, dim: usize, n: usize) -> Self {
        let mut pos = 2 * dim + 1;
        let mut t_off = Vec::new();
        for r in 2..=2 * n {
            t_off.push(pos);
            pos += sym_len(dim, r);
        }
        let indices = (0..=2 * n).map(|r| canonical_indices(dim, r)).collect();
        Self {
            model,
            mass,
            hbar,
            dim,
            n,
            t_off,
            total: pos,
            indices,
        }
    }

    fn get(&self, y: &[Complex64], idx: &[usize]) -> Complex64 {
        let order = idx.len();
        if order == 1 {
            return self.mass * y[self.dim + idx[0]];
        }
        let off = self.t_off[order - 2];
        let mut sorted = [0usize; 8];
        let s = &mut sorted[..order];
        s.copy_from_slice(idx);
        s.sort_unstable();
        y[off + rank_nondecreasing(self.dim, s)]
    }

    /// Truncated Laplacian contraction sum_p S_{I p p}; zero once the order
    /// exceeds 2n (the BOMCA closure rule).
    fn lap(&self, y: &[Complex64], idx: &[usize]) -> Complex64 {
        if idx.len() + 2 > 2 * self.n {
            return Complex64::ZERO;
        }
        let mut full = [0usize; 8];
        full[..idx.len()].copy_from_slice(idx);
        let base = idx.len();
        let mut acc = Complex64::ZERO;
        for p in 0..self.dim {
            full[base] = p;
            full[base + 1] = p;
            acc += self.get(y, &full[..base + 2]);
        }
        acc
    }
}

impl OdeSystem for BomcaSystem<'_> {
    fn state_len(&self) -> usize {
        self.total
    }

    fn rhs(&self, _t: f64, y: &[Complex64], dydt: &mut [Complex64]) {
        let d = self.dim;
        let m = self.mass;
        let x = &y[0..d];
        let v = &y[d..2 * d];
        let derivs = eval_derivs(self.model, x, 2 * self.n).expect("potential derivatives");
        let ih = Complex64::i() * self.hbar;

        for i in 0..d {
            dydt[i] = v[i];
            dydt[d + i] = -derivs.gradient(i) / m + ih / (2.0 * m * m) * self.lap(y, &[i]);
        }
        let kin: Complex64 = v.iter().map(|vi| 0.5 * m * vi * vi).sum();
        dydt[2 * d] = kin - derivs.value() + ih / (2.0 * m) * self.lap(y, &[]);

        for r in 2..=2 * self.n {
            let off = self.t_off[r - 2];
            for (slot, idx) in self.indices[r].iter().enumerate() {
                // same Leibniz splitting as the classical chain, plus the
                // truncated i hbar Laplacian source
                let mut quad = Complex64::ZERO;
                let full = (1usize << r) - 1;
                for mask in 1..full {
                    let mut ia = [0usize; 8];
                    let mut ib = [0usize; 8];
                    let mut na = 1;
                    let mut nb = 1;
                    for (pos, &i) in idx.iter().enumerate() {
                        if mask & (1 << pos) != 0 {
                            ia[na] = i;
                            na += 1;
                        } else {
                            ib[nb] = i;
                            nb += 1;
                        }
                    }
                    for j in 0..d {
                        ia[0] = j;
                        ib[0] = j;
                        quad += self.get(y, &ia[..na]) * self.get(y, &ib[..nb]);
                    }
                }
                dydt[off + slot] = -derivs.tensors[r].get(idx) - quad / (2.0 * m)
                    + ih / (2.0 * m) * self.lap(y, idx);
            }
        }
    }

    fn guard(&self, t: f64, y: &[Complex64]) -> Result<()> {
        let off = self.t_off[0];
        for c in &y[off..off + sym_len(self.dim, 2)] {
            if c.norm() > RICCATI_GUARD {
                return Err(Error::RiccatiBlowup {
                    t,
                    guard: RICCATI_GUARD,
                });
            }
        }
        Ok(())
    }
}

fn check_supported(n: usize, d: usize, masses: &[f64]) -> Result<f64> {
    if !supported(n, d) {
        return Err(Error::UnsupportedCombination(format!(
            "bomca order n={n} in d={d}; supported: n=1 for d<=3, n=2 for d<=2"
        )));
    }
    let m0 = masses[0];
    if masses.iter().any(|&m| (m - m0).abs() > 0.0) {
        return Err(Error::UnsupportedCombination(
            "bomca requires a uniform mass".into(),
        ));
    }
    Ok(m0)
}

fn initial_state(sys: &BomcaSystem, sinit: &SInit, x_start: &[Complex64]) -> Vec<Complex64> {
    let d = sys.dim;
    let mut y = vec![Complex64::ZERO; sys.total];
    y[0..d].copy_from_slice(x_start);
    y[d..2 * d].copy_from_slice(&sinit.initial_velocity(x_start));
    y[2 * d] = sinit.value(x_start);
    let hess = sinit.hessian();
    let off = sys.t_off[0];
    let mut c2 = SymTensor::zeros(d, 2);
    for i in 0..d {
        for j in i..d {
            c2.set(&[i, j], hess[(i, j)]);
        }
    }
    y[off..off + c2.len()].copy_from_slice(c2.data());
    // Gaussian initial data: derivative tensors beyond order 2 start at zero
    y
}

/// Integrate the truncated system of order n from `x_start`, with dense
/// sampling for the downstream path-integral checks.
pub fn evolve_bomca(
    x_start: &[Complex64],
    model: &PotentialModel,
    sinit: &SInit,
    n: usize,
    t_end: f64,
    opts: IntegratorOptions,
    n_samples: usize,
) -> Result<BomcaRun> {
    let d = sinit.dim();
    if model.dim() != d || x_start.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: model.dim(),
        });
    }
    let mass = check_supported(n, d, sinit.masses())?;
    let sys = BomcaSystem::new(model, mass, sinit.hbar(), d, n);
    let times = sample_times(t_end, n_samples.max(1));
    let states = integrate_sampled(&sys, initial_state(&sys, sinit, x_start), &times, opts)?;

    let y_end = states.last().unwrap();
    let mut derivs = Vec::new();
    for r in 2..=2 * n {
        let off = sys.t_off[r - 2];
        derivs.push(SymTensor::from_data(
            d,
            r,
            y_end[off..off + sym_len(d, r)].to_vec(),
        ));
    }
    let state = BOMCAState {
        order: n,
        dim: d,
        x: y_end[0..d].to_vec(),
        v: y_end[d..2 * d].to_vec(),
        s: y_end[2 * d],
        derivs,
    };

    let mut run = BomcaRun {
        state,
        hbar: sinit.hbar(),
        mass,
        times,
        positions: Vec::with_capacity(states.len()),
        actions: Vec::with_capacity(states.len()),
        d2: Vec::new(),
        d3: Vec::new(),
        d4: Vec::new(),
    };
    for y in &states {
        run.positions.push(y[0..d].to_vec());
        run.actions.push(y[2 * d]);
        if d == 1 {
            run.d2.push(y[sys.t_off[0]]);
            if n >= 2 {
                run.d3.push(y[sys.t_off[1]]);
                run.d4.push(y[sys.t_off[2]]);
            }
        }
    }
    Ok(run)
}

/// Newton shooting on the full coupled system; the Jacobian of the final
/// position with respect to x(0) is built by finite differences (no
/// variational system accompanies the perturbed dynamics).
#[allow(clippy::too_many_arguments)]
pub fn bomca_shoot(
    target: &[Complex64],
    guess: &[Complex64],
    model: &PotentialModel,
    sinit: &SInit,
    n: usize,
    t_end: f64,
    opts: IntegratorOptions,
    shoot_tol: f64,
    max_newton: usize,
    n_samples: usize,
) -> Result<BomcaBranch> {
    let d = sinit.dim();
    let mut x0 = guess.to_vec();

    let endpoint = |x: &[Complex64]| -> Result<Vec<Complex64>> {
        let run = evolve_bomca(x, model, sinit, n, t_end, opts, 1)?;
        Ok(run.state.x)
    };

    let mut x_end = endpoint(&x0)?;
    for iter in 0..max_newton {
        let r: Vec<Complex64> = (0..d).map(|i| x_end[i] - target[i]).collect();
        let rn = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if rn <= shoot_tol {
            let run = evolve_bomca(&x0, model, sinit, n, t_end, opts, n_samples)?;
            return Ok(BomcaBranch {
                x_start: x0,
                residual: rn,
                run,
                newton_iterations: iter,
            });
        }

        let mut jac = nalgebra::DMatrix::<Complex64>::zeros(d, d);
        for j in 0..d {
            let eps = 1e-6 * (1.0 + x0[j].norm());
            let mut xp = x0.clone();
            xp[j] += eps;
            let fe = endpoint(&xp)?;
            for i in 0..d {
                jac[(i, j)] = (fe[i] - x_end[i]) / eps;
            }
        }
        let rv = nalgebra::DVector::from_column_slice(&r);
        let delta = jac
            .lu()
            .solve(&rv)
            .ok_or(Error::SingularMatrix { context: "bomca newton step" })?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<Complex64> = (0..d).map(|i| x0[i] - lambda * delta[i]).collect();
            if let Ok(xe) = endpoint(&trial) {
                let tn = (0..d)
                    .map(|i| (xe[i] - target[i]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                if tn < rn {
                    x0 = trial;
                    x_end = xe;
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
    Err(Error::NoConvergence {
        iterations: max_newton,
        residual: (0..d)
            .map(|i| (x_end[i] - target[i]).norm_sqr())
            .sum::<f64>()
            .sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QVariant {
    BomcaNative,
    ClassicalPathQ,
}

/// The q/N correction data of one run, in the f-representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QCorrectionProfile {
    pub variant: QVariant,
    pub times: Vec<f64>,
    pub n_of_t: Vec<Complex64>,
    pub q_of_t: Vec<Complex64>,
    pub f_of_t: Vec<Complex64>,
    pub k_const: Complex64,
    pub l_const: Complex64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FRepresentationReport {
    pub profile: QCorrectionProfile,
    /// Residual of f^3 S''' + int V''' f^3 - K, relative to its scale.
    pub max_residual_cubic: f64,
    /// Residual of S'''' f^4 + int f^4 (V'''' + 3 S'''^2 / m) - L.
    pub max_residual_quartic: f64,
}

/// Rebuild f(t) = exp(int S''/m dt) from the stored dense output and verify
/// the two integrated identities that tie S''' and S'''' to f.
pub fn verify_f_representation(
    run: &BomcaRun,
    model: &PotentialModel,
    tol: f64,
) -> Result<FRepresentationReport> {
    if run.state.dim != 1 || run.state.order != 2 {
        return Err(Error::UnsupportedCombination(
            "f-representation check needs a 1D order-2 run".into(),
        ));
    }
    let m = run.mass;
    let samples = run.times.len();
    if samples < 64 {
        return Err(Error::QuadratureFailure(
            "dense output required (>= 64 samples)".into(),
        ));
    }
    let h = run.times[1] - run.times[0];

    let integrand: Vec<Complex64> = run.d2.iter().map(|s| s / m).collect();
    let log_f = cumulative_simpson(&integrand, h);
    let f: Vec<Complex64> = log_f.iter().map(|l| l.exp()).collect();

    let k_const = run.d3[0]; // f(0)^3 S'''(0)
    let l_const = run.d4[0];

    let mut v3 = Vec::with_capacity(samples);
    let mut v4 = Vec::with_capacity(samples);
    for x in &run.positions {
        let b = eval_derivs(model, x, 4)?;
        v3.push(b.tensors[3].get(&[0, 0, 0]));
        v4.push(b.tensors[4].get(&[0, 0, 0, 0]));
    }

    // f^3 S''' + int_0^t V''' f^3 du - K = 0
    let int_v3f3 = cumulative_simpson(
        &(0..samples).map(|k| v3[k] * f[k] * f[k] * f[k]).collect::<Vec<_>>(),
        h,
    );
    let mut scale_c: f64 = 1e-300;
    let mut max_c: f64 = 0.0;
    for k in 0..samples {
        let lhs = f[k] * f[k] * f[k] * run.d3[k] + int_v3f3[k] - k_const;
        scale_c = scale_c
            .max((f[k] * f[k] * f[k] * run.d3[k]).norm())
            .max(int_v3f3[k].norm());
        max_c = max_c.max(lhs.norm());
    }
    let max_residual_cubic = max_c / scale_c.max(1.0);

    // S'''' f^4 + int_0^t f^4 (V'''' + 3 S'''^2 / m) du - L = 0
    // (the f-equation with S'' = m f'/f, in integrated form)
    let int_q = cumulative_simpson(
        &(0..samples)
            .map(|k| {
                let f4 = f[k].powu(4);
                f4 * (v4[k] + 3.0 * run.d3[k] * run.d3[k] / m)
            })
            .collect::<Vec<_>>(),
        h,
    );
    let mut scale_q: f64 = 1e-300;
    let mut max_q: f64 = 0.0;
    for k in 0..samples {
        let lhs = run.d4[k] * f[k].powu(4) + int_q[k] - l_const;
        scale_q = scale_q.max((run.d4[k] * f[k].powu(4)).norm()).max(int_q[k].norm());
        max_q = max_q.max(lhs.norm());
    }
    let max_residual_quartic = max_q / scale_q.max(1.0);

    let ih = Complex64::i() * run.hbar;
    let profile = QCorrectionProfile {
        variant: QVariant::BomcaNative,
        times: run.times.clone(),
        n_of_t: run.d3.iter().map(|s3| ih / (2.0 * m * m) * s3).collect(),
        q_of_t: run.d4.iter().map(|s4| -ih / (2.0 * m) * s4).collect(),
        f_of_t: f,
        k_const,
        l_const,
    };

    let report = FRepresentationReport {
        profile,
        max_residual_cubic,
        max_residual_quartic,
    };
    if max_residual_cubic > tol || max_residual_quartic > tol {
        return Err(Error::ToleranceExceeded {
            what: "f-representation residual".into(),
            measured: max_residual_cubic.max(max_residual_quartic),
            tolerance: tol,
        });
    }
    Ok(report)
}

// Classical-path variant: the trajectory stays classical (N = 0) and the
// Jacobi equation m f'' = -(V'' + q) f absorbs the whole first-order
// correction. q comes from the triple-integral formula, reduced here to a
// closed ODE system via running integrals:
//   J  = int V''' f^3,          P  = int J / f^2,
//   Q2 = int V''' f^3 P,        I4 = int V'''' f^4,   R3 = int J^2 / f^2,
//   q  = (i hbar / m f^4) (I4 / 2 + Q2 / m + 5 R3 / (2 m)).
// State: x v S0 f fdot logf J P Q2 I4 R3
struct ClassicalQSystem<'a> {
    model: &'a PotentialModel,
    mass: f64,
    hbar: f64,
}

impl ClassicalQSystem<'_> {
    fn q_of(&self, y: &[Complex64]) -> Complex64 {
        let m = self.mass;
        let f4 = y[3].powu(4);
        Complex64::i() * self.hbar / (m * f4)
            * (0.5 * y[9] + y[8] / m + 2.5 * y[10] / m)
    }
}

impl OdeSystem for ClassicalQSystem<'_> {
    fn state_len(&self) -> usize {
        11
    }

    fn rhs(&self, _t: f64, y: &[Complex64], dydt: &mut [Complex64]) {
        let m = self.mass;
        let derivs = eval_derivs(self.model, &y[0..1], 4).expect("potential derivatives");
        let v1 = derivs.gradient(0);
        let v2 = derivs.hessian(0, 0);
        let v3 = derivs.tensors[3].get(&[0, 0, 0]);
        let v4 = derivs.tensors[4].get(&[0, 0, 0, 0]);
        let (v, f, fdot, j) = (y[1], y[3], y[4], y[6]);
        let q = self.q_of(y);

        dydt[0] = v;
        dydt[1] = -v1 / m;
        dydt[2] = 0.5 * m * v * v - derivs.value();
        dydt[3] = fdot;
        dydt[4] = -(v2 + q) * f / m;
        dydt[5] = fdot / f;
        dydt[6] = v3 * f * f * f;
        dydt[7] = j / (f * f);
        dydt[8] = v3 * f * f * f * y[7];
        dydt[9] = v4 * f.powu(4);
        dydt[10] = j * j / (f * f);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalQResult {
    pub psi: Complex64,
    pub profile: QCorrectionProfile,
}

/// Leading-order wave function on a classical path with the corrected Jacobi
/// equation: exp(i (S[x] + S_init(x(0))) / hbar) / sqrt(f(T)), continuous
/// square-root branch via the tracked log f.
pub fn classical_path_q_variant(
    trajectory: &TrajectoryRecord,
    model: &PotentialModel,
    sinit: &SInit,
) -> Result<ClassicalQResult> {
    if trajectory.dim != 1 {
        return Err(Error::UnsupportedCombination(
            "classical-path q variant is 1D".into(),
        ));
    }
    let m = check_supported(1, 1, sinit.masses())?;
    let sys = ClassicalQSystem {
        model,
        mass: m,
        hbar: sinit.hbar(),
    };
    let x_start = trajectory.start_position().to_vec();
    let mut y0 = vec![Complex64::ZERO; 11];
    y0[0] = x_start[0];
    y0[1] = sinit.initial_velocity(&x_start)[0];
    y0[2] = sinit.value(&x_start);
    y0[3] = Complex64::ONE;
    y0[4] = sinit.hessian()[(0, 0)] / m;

    let times = sample_times(trajectory.duration(), 256);
    let states = integrate_sampled(&sys, y0, &times, IntegratorOptions::default())?;
    let y_end = states.last().unwrap();

    let hbar = sinit.hbar();
    let psi = (Complex64::i() * y_end[2] / hbar - 0.5 * y_end[5]).exp();
    let profile = QCorrectionProfile {
        variant: QVariant::ClassicalPathQ,
        times,
        n_of_t: vec![Complex64::ZERO; states.len()],
        q_of_t: states.iter().map(|y| sys.q_of(y)).collect(),
        f_of_t: states.iter().map(|y| y[3]).collect(),
        k_const: Complex64::ZERO,
        l_const: Complex64::ZERO,
    };
    Ok(ClassicalQResult { psi, profile })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_classical, DEFAULT_CAUSTIC_THRESHOLD};
    use crate::packet::GaussianPacket;
    use crate::wkb::{evolve_wkb_from_start, wkb_wavefunction_branch};

    fn sinit_1d(hbar: f64) -> SInit {
        SInit::new(GaussianPacket::scalar_1d(0.0, 0.3, 0.5, 0.0, hbar, 1.0))
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn quartic() -> PotentialModel {
        PotentialModel::QuarticPerturbedHarmonic {
            dim: 1,
            spring: 1.0,
            quartic: 0.1,
        }
    }

    #[test]
    fn scalar_count_matches_formula() {
        let sinit = sinit_1d(0.05);
        let run = evolve_bomca(
            &[c(0.2, 0.1)],
            &quartic(),
            &sinit,
            2,
            0.5,
            IntegratorOptions::default(),
            8,
        )
        .unwrap();
        // binomial(d + 2n, d) + d = binomial(5, 1) + 1 = 6
        assert_eq!(run.state.scalar_count(), 6);
    }

    #[test]
    fn harmonic_n2_stays_classical() {
        let sinit = sinit_1d(0.1);
        let model = PotentialModel::Harmonic { dim: 1, spring: 1.0 };
        let x0 = [c(0.4, -0.2)];
        let run = evolve_bomca(&x0, &model, &sinit, 2, 1.4, IntegratorOptions::default(), 64)
            .unwrap();
        for k in 0..run.times.len() {
            assert!(run.d3[k].norm() < 1e-12);
            assert!(run.d4[k].norm() < 1e-12);
        }
        let classical = integrate_classical(
            &x0,
            &model,
            &sinit,
            1.4,
            IntegratorOptions::default(),
            64,
            DEFAULT_CAUSTIC_THRESHOLD,
        )
        .unwrap();
        for k in 0..run.times.len() {
            assert!((run.positions[k][0] - classical.positions[k][0]).norm() < 1e-10);
        }
    }

    #[test]
    fn n1_trajectory_is_classical_for_any_model() {
        let sinit = sinit_1d(0.1);
        let model = quartic();
        let x0 = [c(0.3, 0.2)];
        let run = evolve_bomca(&x0, &model, &sinit, 1, 1.0, IntegratorOptions::default(), 32)
            .unwrap();
        let classical = integrate_classical(
            &x0,
            &model,
            &sinit,
            1.0,
            IntegratorOptions::default(),
            32,
            DEFAULT_CAUSTIC_THRESHOLD,
        )
        .unwrap();
        for k in 0..run.times.len() {
            assert!((run.positions[k][0] - classical.positions[k][0]).norm() < 1e-10);
        }
    }

    #[test]
    fn n1_matches_lowest_order_wkb() {
        let sinit = sinit_1d(0.1);
        let model = quartic();
        let x0 = [c(0.25, 0.15)];
        let run = evolve_bomca(&x0, &model, &sinit, 1, 1.1, IntegratorOptions::default(), 4)
            .unwrap();
        let wkb = evolve_wkb_from_start(&x0, &model, &sinit, 1, 1.1, IntegratorOptions::default())
            .unwrap();
        let psi_b = bomca_wavefunction_branch(&run.state, 0.1);
        let psi_w = wkb_wavefunction_branch(&wkb, 0.1);
        assert!(
            (psi_b - psi_w).norm() / psi_w.norm() < 1e-10,
            "bomca {psi_b} vs wkb {psi_w}"
        );
    }

    #[test]
    fn t_zero_wavefunction_is_initial_packet() {
        let sinit = sinit_1d(0.1);
        let model = quartic();
        let x = c(0.8, 0.0);
        let run = evolve_bomca(&[x], &model, &sinit, 2, 1e-13, IntegratorOptions::default(), 1)
            .unwrap();
        let psi = bomca_wavefunction_branch(&run.state, 0.1);
        let psi0 = sinit.packet().psi0(&[x]);
        assert!((psi - psi0).norm() < 1e-10 * psi0.norm());
    }

    #[test]
    fn trajectory_deformation_scales_with_hbar() {
        let model = quartic();
        let x0 = [c(0.4, 0.1)];
        let mut max_dev = Vec::new();
        for hbar in [0.1, 0.05] {
            let sinit = sinit_1d(hbar);
            let run = evolve_bomca(&x0, &model, &sinit, 2, 1.0, IntegratorOptions::default(), 64)
                .unwrap();
            let classical = integrate_classical(
                &x0,
                &model,
                &sinit,
                1.0,
                IntegratorOptions::default(),
                64,
                DEFAULT_CAUSTIC_THRESHOLD,
            )
            .unwrap();
            let dev = (0..run.times.len())
                .map(|k| (run.positions[k][0] - classical.positions[k][0]).norm())
                .fold(0.0f64, f64::max);
            max_dev.push(dev);
        }
        let ratio = max_dev[0] / max_dev[1];
        assert!(
            (1.5..=3.0).contains(&ratio),
            "O(hbar) deformation expected, ratio {ratio}"
        );
    }

    #[test]
    fn free_particle_shoot_matches_classical_branch() {
        let sinit = sinit_1d(0.1);
        let model = PotentialModel::Free { dim: 1 };
        let target = [c(1.0, 0.0)];
        let bb = bomca_shoot(
            &target,
            &[c(0.0, 0.0)],
            &model,
            &sinit,
            2,
            1.0,
            IntegratorOptions::default(),
            1e-10,
            50,
            4,
        )
        .unwrap();
        let cb = crate::dynamics::shoot_for_target(
            &target,
            &[c(0.0, 0.0)],
            &model,
            &sinit,
            1.0,
            IntegratorOptions::default(),
            &crate::dynamics::SearchConfig::default(),
        )
        .unwrap();
        assert!((bb.x_start[0] - cb.x_start[0]).norm() < 1e-8);
    }

    #[test]
    fn f_representation_residuals_small_on_quartic() {
        let sinit = sinit_1d(0.05);
        let model = quartic();
        let run = evolve_bomca(
            &[c(0.3, 0.1)],
            &model,
            &sinit,
            2,
            1.0,
            IntegratorOptions::default(),
            2048,
        )
        .unwrap();
        let report = verify_f_representation(&run, &model, 1e-6).unwrap();
        assert!(report.max_residual_cubic < 1e-6);
        assert!(report.max_residual_quartic < 1e-6);
        assert_eq!(report.profile.k_const, Complex64::ZERO);
        assert_eq!(report.profile.l_const, Complex64::ZERO);
    }

    #[test]
    fn f_representation_trivial_on_harmonic_and_free() {
        let sinit = sinit_1d(0.05);
        for model in [
            PotentialModel::Harmonic { dim: 1, spring: 1.0 },
            PotentialModel::Free { dim: 1 },
        ] {
            let run = evolve_bomca(
                &[c(0.2, 0.0)],
                &model,
                &sinit,
                2,
                1.0,
                IntegratorOptions::default(),
                256,
            )
            .unwrap();
            let report = verify_f_representation(&run, &model, 1e-9).unwrap();
            assert!(report.max_residual_cubic < 1e-9);
        }
    }

    #[test]
    fn classical_q_equals_classical_wavefunction_for_quadratic() {
        for model in [
            PotentialModel::Free { dim: 1 },
            PotentialModel::Harmonic { dim: 1, spring: 1.0 },
        ] {
            let sinit = sinit_1d(0.1);
            let traj = integrate_classical(
                &[c(0.3, -0.1)],
                &model,
                &sinit,
                1.2,
                IntegratorOptions::default(),
                64,
                DEFAULT_CAUSTIC_THRESHOLD,
            )
            .unwrap();
            let res = classical_path_q_variant(&traj, &model, &sinit).unwrap();
            // q vanishes identically, so psi reduces to the classical wave function
            let wkb = evolve_wkb_from_start(
                &[c(0.3, -0.1)],
                &model,
                &sinit,
                1,
                1.2,
                IntegratorOptions::default(),
            )
            .unwrap();
            let psi_w = wkb_wavefunction_branch(&wkb, 0.1);
            assert!(res.profile.q_of_t.iter().all(|q| q.norm() < 1e-12));
            assert!((res.psi - psi_w).norm() / psi_w.norm() < 1e-9);
        }
    }

    #[test]
    fn classical_q_agrees_with_second_order_wkb() {
        // both equal the path integral through first order; difference O(hbar^2)
        let model = quartic();
        let mut diffs = Vec::new();
        for hbar in [0.1, 0.05] {
            let sinit = sinit_1d(hbar);
            let traj = integrate_classical(
                &[c(0.4, 0.05)],
                &model,
                &sinit,
                1.0,
                IntegratorOptions::default(),
                64,
                DEFAULT_CAUSTIC_THRESHOLD,
            )
            .unwrap();
            let res = classical_path_q_variant(&traj, &model, &sinit).unwrap();
            let wkb = evolve_wkb_from_start(
                &[c(0.4, 0.05)],
                &model,
                &sinit,
                2,
                1.0,
                IntegratorOptions::default(),
            )
            .unwrap();
            let psi_w = wkb_wavefunction_branch(&wkb, hbar);
            diffs.push((res.psi - psi_w).norm() / psi_w.norm());
        }
        let ratio = diffs[0] / diffs[1];
        assert!(
            (2.4..=6.4).contains(&ratio),
            "expected O(hbar^2) agreement, ratio {ratio} (diffs {diffs:?})"
        );
    }
}
