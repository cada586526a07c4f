//! Independent grid-based TDSE solver (split-step Fourier), the ground truth
//! for the acceptance tests, plus closed-form references for the free and
//! harmonic 1D evolutions.

use crate::assembly::SemiclassicalField;
use crate::error::{Error, Result};
use crate::packet::GaussianPacket;
use crate::potential::PotentialModel;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridWaveFunction {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Points per axis, each a power of two; the grid is periodic and the
    /// upper bound is excluded.
    pub n_points: Vec<usize>,
    /// Row-major amplitudes.
    pub amplitudes: Vec<Complex64>,
    pub hbar: f64,
    pub masses: Vec<f64>,
    /// Initial packet widths per axis, used for the boundary-zone check.
    pub sigma: Vec<f64>,
    pub t: f64,
}

impl GridWaveFunction {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn dx(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.n_points[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.dx(i)).product()
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        self.lo[axis] + k as f64 * self.dx(axis)
    }

    pub fn norm(&self) -> f64 {
        (self
            .amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            * self.cell_volume())
        .sqrt()
    }

    /// Discrete inner product <self|other>.
    pub fn inner_product(&self, other: &GridWaveFunction) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.cell_volume()
    }

    /// Cubic (Catmull-Rom) interpolation at a real point, per axis.
    pub fn interpolate(&self, x: &[f64]) -> Complex64 {
        match self.dim() {
            1 => self.interp_axis(x[0], 0, |k| self.amplitudes[k]),
            2 => {
                let n1 = self.n_points[1];
                self.interp_axis(x[0], 0, |k0| {
                    self.interp_axis(x[1], 1, |k1| self.amplitudes[k0 * n1 + k1])
                })
            }
            _ => unreachable!("grid oracle is 1D/2D"),
        }
    }

    fn interp_axis<F: Fn(usize) -> Complex64>(&self, x: f64, axis: usize, get: F) -> Complex64 {
        let n = self.n_points[axis] as isize;
        let u = (x - self.lo[axis]) / self.dx(axis);
        let k = u.floor() as isize;
        let f = u - k as f64;
        let clamp = |i: isize| i.clamp(0, n - 1) as usize;
        let (p0, p1, p2, p3) = (
            get(clamp(k - 1)),
            get(clamp(k)),
            get(clamp(k + 1)),
            get(clamp(k + 2)),
        );
        0.5 * (2.0 * p1
            + (-p0 + p2) * f
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * f * f
            + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * f * f * f)
    }
}

const POINTS_PER_SIGMA: f64 = 16.0;
const MARGIN_SIGMA: f64 = 5.0;

/// Sample the nonnormalized packet on a grid, enforcing resolution and
/// margin requirements.
pub fn packet_on_grid(
    packet: &GaussianPacket,
    lo: &[f64],
    hi: &[f64],
    n_points: &[usize],
) -> Result<GridWaveFunction> {
    packet.validate()?;
    let d = packet.dim();
    if lo.len() != d || hi.len() != d || n_points.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: lo.len(),
        });
    }
    if d > 2 {
        return Err(Error::UnsupportedCombination("grid oracle is 1D/2D".into()));
    }
    let mut sigma = Vec::with_capacity(d);
    for i in 0..d {
        if !n_points[i].is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "grid points must be a power of two, got {}",
                n_points[i]
            )));
        }
        let s = packet.sigma(i);
        let dx = (hi[i] - lo[i]) / n_points[i] as f64;
        let pts = s / dx;
        if pts < POINTS_PER_SIGMA {
            return Err(Error::GridTooCoarse {
                points_per_sigma: pts,
                required: POINTS_PER_SIGMA,
            });
        }
        let margin = (packet.x0[i] - lo[i]).min(hi[i] - packet.x0[i]);
        if margin < MARGIN_SIGMA * s {
            return Err(Error::PacketOutOfBounds {
                margin,
                required_margin: MARGIN_SIGMA * s,
            });
        }
        sigma.push(s);
    }

    let total: usize = n_points.iter().product();
    let mut amplitudes = Vec::with_capacity(total);
    match d {
        1 => {
            let dx = (hi[0] - lo[0]) / n_points[0] as f64;
            for k in 0..n_points[0] {
                amplitudes.push(packet.psi0(&[Complex64::new(lo[0] + k as f64 * dx, 0.0)]));
            }
        }
        _ => {
            let dx0 = (hi[0] - lo[0]) / n_points[0] as f64;
            let dx1 = (hi[1] - lo[1]) / n_points[1] as f64;
            for k0 in 0..n_points[0] {
                for k1 in 0..n_points[1] {
                    amplitudes.push(packet.psi0(&[
                        Complex64::new(lo[0] + k0 as f64 * dx0, 0.0),
                        Complex64::new(lo[1] + k1 as f64 * dx1, 0.0),
                    ]));
                }
            }
        }
    }
    Ok(GridWaveFunction {
        lo: lo.to_vec(),
        hi: hi.to_vec(),
        n_points: n_points.to_vec(),
        amplitudes,
        hbar: packet.hbar,
        masses: packet.masses.clone(),
        sigma,
        t: 0.0,
    })
}

fn fft_freqs(n: usize, dx: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / (n as f64 * dx);
    (0..n)
        .map(|j| {
            if j < n / 2 {
                j as f64 * base
            } else {
                (j as f64 - n as f64) * base
            }
        })
        .collect()
}

/// Strang-split kinetic/potential propagation; unitary up to roundoff and
/// second order in T/n_steps.
pub fn split_step_propagate(
    psi: &GridWaveFunction,
    model: &PotentialModel,
    t_span: f64,
    n_steps: usize,
) -> Result<GridWaveFunction> {
    let d = psi.dim();
    if model.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: model.dim(),
        });
    }
    let dt = t_span / n_steps as f64;
    let hbar = psi.hbar;

    // half-step potential phases on the grid
    let total = psi.amplitudes.len();
    let mut v_half = Vec::with_capacity(total);
    match d {
        1 => {
            for k in 0..psi.n_points[0] {
                let v = model.eval_real(&[psi.coord(0, k)]);
                v_half.push((-Complex64::i() * v * dt / (2.0 * hbar)).exp());
            }
        }
        _ => {
            for k0 in 0..psi.n_points[0] {
                for k1 in 0..psi.n_points[1] {
                    let v = model.eval_real(&[psi.coord(0, k0), psi.coord(1, k1)]);
                    v_half.push((-Complex64::i() * v * dt / (2.0 * hbar)).exp());
                }
            }
        }
    }

    // kinetic full-step phases in momentum space
    let freqs: Vec<Vec<f64>> = (0..d).map(|i| fft_freqs(psi.n_points[i], psi.dx(i))).collect();
    let mut kin = Vec::with_capacity(total);
    match d {
        1 => {
            for &k in &freqs[0] {
                kin.push((-Complex64::i() * hbar * k * k * dt / (2.0 * psi.masses[0])).exp());
            }
        }
        _ => {
            for &k0 in &freqs[0] {
                for &k1 in &freqs[1] {
                    let w = k0 * k0 / psi.masses[0] + k1 * k1 / psi.masses[1];
                    kin.push((-Complex64::i() * hbar * w * dt / 2.0).exp());
                }
            }
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    let mut state = psi.amplitudes.clone();
    let boundary_zone = boundary_mask(psi);

    for step in 0..n_steps {
        for (a, p) in state.iter_mut().zip(&v_half) {
            *a *= p;
        }
        fft_all_axes(&mut state, psi, &mut planner, true);
        for (a, p) in state.iter_mut().zip(&kin) {
            *a *= p;
        }
        fft_all_axes(&mut state, psi, &mut planner, false);
        for (a, p) in state.iter_mut().zip(&v_half) {
            *a *= p;
        }

        let total_norm: f64 = state.iter().map(|a| a.norm_sqr()).sum();
        let edge_norm: f64 = boundary_zone
            .iter()
            .map(|&k| state[k].norm_sqr())
            .sum();
        if edge_norm > 1e-8 * total_norm {
            return Err(Error::BoundaryContamination {
                t: psi.t + (step + 1) as f64 * dt,
                fraction: edge_norm / total_norm,
            });
        }
    }

    Ok(GridWaveFunction {
        amplitudes: state,
        t: psi.t + t_span,
        ..psi.clone()
    })
}

fn boundary_mask(psi: &GridWaveFunction) -> Vec<usize> {
    let d = psi.dim();
    let mut idx = Vec::new();
    let in_zone = |axis: usize, k: usize| -> bool {
        let x = psi.coord(axis, k);
        let z = 2.0 * psi.sigma[axis];
        x < psi.lo[axis] + z || x > psi.hi[axis] - z
    };
    match d {
        1 => {
            for k in 0..psi.n_points[0] {
                if in_zone(0, k) {
                    idx.push(k);
                }
            }
        }
        _ => {
            let n1 = psi.n_points[1];
            for k0 in 0..psi.n_points[0] {
                for k1 in 0..n1 {
                    if in_zone(0, k0) || in_zone(1, k1) {
                        idx.push(k0 * n1 + k1);
                    }
                }
            }
        }
    }
    idx
}

fn fft_all_axes(
    state: &mut [Complex64],
    psi: &GridWaveFunction,
    planner: &mut FftPlanner<f64>,
    forward: bool,
) {
    let d = psi.dim();
    match d {
        1 => {
            let n = psi.n_points[0];
            let fft = if forward {
                planner.plan_fft_forward(n)
            } else {
                planner.plan_fft_inverse(n)
            };
            fft.process(state);
            if !forward {
                let scale = 1.0 / n as f64;
                for a in state.iter_mut() {
                    *a *= scale;
                }
            }
        }
        _ => {
            let (n0, n1) = (psi.n_points[0], psi.n_points[1]);
            let fft1 = if forward {
                planner.plan_fft_forward(n1)
            } else {
                planner.plan_fft_inverse(n1)
            };
            for row in state.chunks_mut(n1) {
                fft1.process(row);
            }
            let fft0 = if forward {
                planner.plan_fft_forward(n0)
            } else {
                planner.plan_fft_inverse(n0)
            };
            let mut col = vec![Complex64::ZERO; n0];
            for j in 0..n1 {
                for i in 0..n0 {
                    col[i] = state[i * n1 + j];
                }
                fft0.process(&mut col);
                for i in 0..n0 {
                    state[i * n1 + j] = col[i];
                }
            }
            if !forward {
                let scale = 1.0 / (n0 * n1) as f64;
                for a in state.iter_mut() {
                    *a *= scale;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub relative_l2: f64,
    pub max_pointwise: f64,
    pub excluded_targets: Vec<usize>,
    pub compared_targets: usize,
}

/// Compare a semiclassical field against the grid truth over non-flagged
/// targets (cubic interpolation off the grid).
pub fn compare(field: &SemiclassicalField, psi: &GridWaveFunction) -> CompareReport {
    let excluded: std::collections::BTreeSet<usize> =
        field.excluded_targets().into_iter().collect();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut max_diff: f64 = 0.0;
    let mut max_ref: f64 = 1e-300;
    let mut compared = 0;
    for (k, r) in field.results.iter().enumerate() {
        if excluded.contains(&k) {
            continue;
        }
        let truth = psi.interpolate(&r.target);
        let diff = (r.total - truth).norm_sqr();
        num += diff;
        den += truth.norm_sqr();
        max_diff = max_diff.max(diff.sqrt());
        max_ref = max_ref.max(truth.norm());
        compared += 1;
    }
    CompareReport {
        relative_l2: if den > 0.0 { (num / den).sqrt() } else { 0.0 },
        max_pointwise: max_diff / max_ref,
        excluded_targets: excluded.into_iter().collect(),
        compared_targets: compared,
    }
}

/// Exact evolution of the 1D Gaussian under V = 0:
/// psi(X, T) = exp(-a u^2 / (hbar (1 + 2iaT/m)) + i p0 u / hbar
///             + i p0^2 T / (2 hbar m)) / sqrt(1 + 2iaT/m), u = X - x0 - p0 T/m.
pub fn free_gaussian_evolution(packet: &GaussianPacket, x: f64, t: f64) -> Complex64 {
    let m = packet.masses[0];
    let hbar = packet.hbar;
    let a = packet.width[0] * m / 2.0 * Complex64::i(); // i m Omega / 2 = i a... recovered below
    // width = 2 (a0 + i a1)/m, so a = m width / 2
    let a = a / Complex64::i(); // a0 + i a1
    let x0 = packet.x0[0];
    let p0 = packet.p0[0];
    let g = Complex64::ONE + 2.0 * Complex64::i() * a * t / m;
    let u = x - x0 - p0 * t / m;
    (Complex64::ONE / g).sqrt()
        * (-a * u * u / (hbar * g)
            + Complex64::i() * p0 * u / hbar
            + Complex64::i() * p0 * p0 * t / (2.0 * hbar * m))
            .exp()
}

/// Exact evolution of the 1D Gaussian under V = (k/2) x^2 at a real target,
/// via the unique complex classical branch (valid while Im U(t) keeps the
/// principal square root on its continuous branch, i.e. omega T in (0, pi)
/// for real-width packets; adequate for the reference comparisons here).
pub fn harmonic_gaussian_evolution(
    packet: &GaussianPacket,
    spring: f64,
    x: f64,
    t: f64,
) -> Complex64 {
    let m = packet.masses[0];
    let hbar = packet.hbar;
    let omega = (spring / m).sqrt();
    let a = packet.width[0] * m / 2.0; // a0 + i a1
    let x0 = packet.x0[0];
    let p0 = packet.p0[0];
    let (c, s) = ((omega * t).cos(), (omega * t).sin());
    let two_ia = 2.0 * Complex64::i() * a;

    // solve x(T) = A c + v0 s / omega = X with m v0 = p0 + 2ia (A - x0)
    let denom = c + two_ia * s / (m * omega);
    let big_a = (x - s * (p0 - two_ia * x0) / (m * omega)) / denom;
    let v0 = (p0 + two_ia * (big_a - x0)) / m;
    let u_t = c + two_ia / (m * omega) * s;

    // action via the exponential-mode decomposition of the trajectory
    let p_mode = (big_a - Complex64::i() * v0 / omega) / 2.0;
    let q_mode = (big_a + Complex64::i() * v0 / omega) / 2.0;
    let e2 = (2.0 * Complex64::i() * omega * t).exp();
    let action = Complex64::i() * m * omega / 2.0
        * (p_mode * p_mode * (e2 - 1.0) - q_mode * q_mode * (1.0 / e2 - 1.0));

    let s_init = Complex64::i() * a * (big_a - x0) * (big_a - x0) + p0 * (big_a - x0);
    (Complex64::i() * (action + s_init) / hbar).exp() / u_t.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet() -> GaussianPacket {
        GaussianPacket::scalar_1d(0.0, 0.0, 0.5, 0.0, 1.0, 1.0)
    }

    #[test]
    fn peak_amplitude_and_phase_independence() {
        let p = packet();
        let g = packet_on_grid(&p, &[-10.0], &[10.0], &[1024]).unwrap();
        let max = g.amplitudes.iter().map(|a| a.norm()).fold(0.0f64, f64::max);
        assert!((max - 1.0).abs() < 1e-12);

        let moving = GaussianPacket::scalar_1d(0.0, 2.0, 0.5, 0.0, 1.0, 1.0);
        let gm = packet_on_grid(&moving, &[-10.0], &[10.0], &[1024]).unwrap();
        for k in 0..1024 {
            assert!((gm.amplitudes[k].norm() - g.amplitudes[k].norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_bounds_packet_rejected() {
        let p = GaussianPacket::scalar_1d(9.9, 0.0, 0.5, 0.0, 1.0, 1.0);
        assert!(matches!(
            packet_on_grid(&p, &[-10.0], &[10.0], &[1024]),
            Err(Error::PacketOutOfBounds { .. })
        ));
    }

    #[test]
    fn coarse_grid_rejected() {
        let p = packet();
        assert!(matches!(
            packet_on_grid(&p, &[-50.0], &[50.0], &[128]),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn free_particle_matches_closed_form() {
        let p = GaussianPacket::scalar_1d(0.0, 1.0, 0.5, 0.0, 1.0, 1.0);
        let model = PotentialModel::Free { dim: 1 };
        let g0 = packet_on_grid(&p, &[-14.0], &[14.0], &[1024]).unwrap();
        let g1 = split_step_propagate(&g0, &model, 1.0, 1000).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..g1.n_points[0] {
            let x = g1.coord(0, k);
            let exact = free_gaussian_evolution(&p, x, 1.0);
            num += (g1.amplitudes[k] - exact).norm_sqr();
            den += exact.norm_sqr();
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-8, "relative L2 error {rel}");
    }

    #[test]
    fn norm_conserved_to_unitarity() {
        let p = packet();
        let model = PotentialModel::QuarticPerturbedHarmonic {
            dim: 1,
            spring: 1.0,
            quartic: 0.1,
        };
        let g0 = packet_on_grid(&p, &[-12.0], &[12.0], &[1024]).unwrap();
        let n0 = g0.norm();
        let g1 = split_step_propagate(&g0, &model, 1.0, 1000).unwrap();
        assert!((g1.norm() - n0).abs() / n0 < 1e-10);
    }

    #[test]
    fn harmonic_revival_after_full_period() {
        let p = packet();
        let model = PotentialModel::Harmonic { dim: 1, spring: 1.0 };
        let g0 = packet_on_grid(&p, &[-12.0], &[12.0], &[1024]).unwrap();
        let period = 2.0 * std::f64::consts::PI;
        let g1 = split_step_propagate(&g0, &model, period, 4000).unwrap();
        let fidelity = g0.inner_product(&g1).norm() / (g0.norm() * g0.norm());
        assert!(fidelity > 1.0 - 1e-8, "fidelity {fidelity}");
    }

    #[test]
    fn second_order_in_time_step() {
        let p = packet();
        let model = PotentialModel::QuarticPerturbedHarmonic {
            dim: 1,
            spring: 1.0,
            quartic: 0.2,
        };
        let g0 = packet_on_grid(&p, &[-12.0], &[12.0], &[1024]).unwrap();
        let fine = split_step_propagate(&g0, &model, 1.0, 4096).unwrap();
        let mut errs = Vec::new();
        for steps in [64, 128, 256] {
            let g = split_step_propagate(&g0, &model, 1.0, steps).unwrap();
            let err: f64 = g
                .amplitudes
                .iter()
                .zip(&fine.amplitudes)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            errs.push(err);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..=5.5).contains(&ratio), "ratios {errs:?}");
        }
    }

    #[test]
    fn harmonic_closed_form_against_grid() {
        let p = GaussianPacket::scalar_1d(0.4, 0.3, 0.5, 0.0, 1.0, 1.0);
        let model = PotentialModel::Harmonic { dim: 1, spring: 1.0 };
        let g0 = packet_on_grid(&p, &[-14.0], &[14.0], &[2048]).unwrap();
        let t = 1.3;
        let g1 = split_step_propagate(&g0, &model, t, 2000).unwrap();
        for x in [-1.0, 0.0, 0.7, 1.5] {
            let closed = harmonic_gaussian_evolution(&p, 1.0, x, t);
            let grid = g1.interpolate(&[x]);
            assert!(
                (closed - grid).norm() < 1e-6,
                "x={x}: closed {closed} vs grid {grid}"
            );
        }
    }

    #[test]
    fn escaping_packet_triggers_boundary_contamination() {
        // fast free packet on a short grid reaches the 2-sigma boundary zone
        let p = GaussianPacket::scalar_1d(0.0, 8.0, 0.5, 0.0, 1.0, 1.0);
        let model = PotentialModel::Free { dim: 1 };
        let g0 = packet_on_grid(&p, &[-16.0], &[16.0], &[1024]).unwrap();
        let err = split_step_propagate(&g0, &model, 2.0, 400);
        assert!(
            matches!(err, Err(Error::BoundaryContamination { .. })),
            "expected BoundaryContamination, got {err:?}"
        );
    }

    #[test]
    fn compare_excludes_empty_targets() {
        use crate::assembly::{AssemblyStats, Method, SemiclassicalField, TargetResult};
        let p = packet();
        let g = packet_on_grid(&p, &[-10.0], &[10.0], &[512]).unwrap();
        let make = |x: f64, empty: bool| TargetResult {
            target: vec![x],
            branches: vec![],
            total: if empty {
                Complex64::ZERO
            } else {
                g.interpolate(&[x])
            },
            empty,
            note: None,
        };
        // non-empty targets need a contributing branch to not be excluded
        let mut ok = make(0.2, false);
        ok.branches.push(crate::assembly::BranchContribution {
            branch_id: 0,
            x_start: vec![Complex64::new(0.2, 0.0)],
            contribution: ok.total,
            classification: crate::dynamics::BranchClass::Contributing,
            caustic: false,
            newton_iterations: 1,
        });
        let field = SemiclassicalField {
            method: Method::Wkb,
            order: 1,
            hbar: 1.0,
            t_end: 0.0,
            targets: vec![vec![0.2], vec![0.5]],
            results: vec![ok, make(0.5, true)],
            stats: AssemblyStats::default(),
        };
        let rep = compare(&field, &g);
        assert_eq!(rep.excluded_targets, vec![1]);
        assert_eq!(rep.compared_targets, 1);
        assert!(rep.relative_l2 < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_on_nodes() {
        let p = packet();
        let g = packet_on_grid(&p, &[-10.0], &[10.0], &[512]).unwrap();
        let k = 200;
        let x = g.coord(0, k);
        assert!((g.interpolate(&[x]) - g.amplitudes[k]).norm() < 1e-12);
    }
}
