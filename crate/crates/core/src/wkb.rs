//! The Complex WKB correction hierarchy.
//!
//! The action is expanded as S = sum_k S_k hbar^k. Along complex classical
//! trajectories the chains obey first-order ODEs: the S_0 derivative chain
//! closes on itself (the order-2 equation is a matrix Riccati equation), and
//! each S_k chain is driven by the chains below it. Computing S_0..S_n needs
//! derivatives of S_0 up to order 2n, of S_1 up to 2(n-1), and so on, with
//! potential derivatives up to order 2n.
//!
//! The right-hand sides for arbitrary chain order are generated from the
//! Leibniz expansion over index positions (a bitmask sum), which reproduces
//! the written-out order <= 4 equations and extends them to the 1D n = 3
//! case; a finite-difference consistency test guards the construction.

use crate::dynamics::Branch;
use crate::error::{Error, Result};
use crate::ode::{integrate_sampled, IntegratorOptions, OdeSystem};
use crate::packet::SInit;
use crate::potential::{eval_derivs, PotentialModel};
use crate::tensor::{binomial, canonical_indices, sym_len, SymTensor};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Overflow guard on second-derivative entries; a matrix Riccati pole
/// (caustic) manifests as divergence of S_0'' in finite time.
pub const RICCATI_GUARD: f64 = 1e12;

/// Total number of functions evolved along a trajectory for an order-n
/// computation in d dimensions: D(n, d) = sum over even i <= 2n of
/// binomial(d + i, d).
pub fn state_size(n: usize, d: usize) -> u64 {
    assert!(n >= 1 && d >= 1);
    (0..=2 * n)
        .step_by(2)
        .map(|i| binomial(d + i, d))
        .sum()
}

/// Hierarchy values and derivative tensors at the final time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WKBState {
    pub order: usize,
    pub dim: usize,
    /// S_0..S_n; S_0 includes the initial action S_init(x(0)).
    pub s: Vec<Complex64>,
    /// Derivative tensors of S_0, orders 2..=2n.
    pub s0_derivs: Vec<SymTensor>,
    /// sk_derivs[k-1] holds the tensors of S_k, orders 1..=2(n-k).
    pub sk_derivs: Vec<Vec<SymTensor>>,
    pub log_det_stability: Complex64,
    /// |S_1(T) - (i/2) log det U(T)|, two independent integration routes.
    pub s1_cross_check: f64,
}

impl WKBState {
    pub fn s0_second(&self) -> &SymTensor {
        &self.s0_derivs[0]
    }
}

/// exp(i sum_k S_k hbar^(k-1)). For n = 1 this equals
/// exp(i S_0 / hbar) / sqrt(det U(T)) on the continuous square-root branch.
pub fn wkb_wavefunction_branch(state: &WKBState, hbar: f64) -> Complex64 {
    let mut exponent = Complex64::ZERO;
    let mut pow = 1.0 / hbar;
    for &sk in &state.s {
        exponent += sk * pow;
        pow *= hbar;
    }
    (Complex64::i() * exponent).exp()
}

struct Layout {
    dim: usize,
    n: usize,
    v: usize,
    s0: usize,
    u: usize,
    udot: usize,
    logdet: usize,
    /// c_off[r-2] = offset of the order-r tensor of S_0, r = 2..=2n.
    c_off: Vec<usize>,
    /// sk_off[k-1][j] = offset of the order-j tensor of S_k (j = 0 is the value).
    sk_off: Vec<Vec<usize>>,
    total: usize,
}

impl Layout {
    fn new(dim: usize, n: usize) -> Self {
        let d = dim;
        let v = d;
        let s0 = 2 * d;
        let u = 2 * d + 1;
        let udot = u + d * d;
        let logdet = udot + d * d;
        let mut pos = logdet + 1;
        let mut c_off = Vec::new();
        for r in 2..=2 * n {
            c_off.push(pos);
            pos += sym_len(d, r);
        }
        let mut sk_off = Vec::new();
        for k in 1..=n {
            let mut offs = Vec::new();
            for j in 0..=2 * (n - k) {
                offs.push(pos);
                pos += sym_len(d, j);
            }
            sk_off.push(offs);
        }
        Self {
            dim,
            n,
            v,
            s0,
            u,
            udot,
            logdet,
            c_off,
            sk_off,
            total: pos,
        }
    }

    fn c(&self, r: usize) -> usize {
        self.c_off[r - 2]
    }

    /// Read an entry of the order-(len) tensor of chain k (k = 0 is S_0).
    fn chain_get(&self, y: &[Complex64], k: usize, idx: &[usize]) -> Complex64 {
        let order = idx.len();
        let off = if k == 0 {
            match order {
                0 => return y[self.s0],
                1 => {
                    // nabla S_0 = m v; hierarchy assumes a uniform mass handled by caller
                    unreachable!("order-1 reads of the S_0 chain go through velocity")
                }
                _ => self.c(order),
            }
        } else {
            self.sk_off[k - 1][order]
        };
        if order == 0 {
            return y[off];
        }
        let mut sorted = [0usize; 8];
        let s = &mut sorted[..order];
        s.copy_from_slice(idx);
        s.sort_unstable();
        y[off + crate::tensor::rank_nondecreasing(self.dim, s)]
    }
}

// SymTensor read on a borrowed slice without copying
fn tensor_view(y: &[Complex64], off: usize, dim: usize, order: usize) -> SymTensor {
    SymTensor::from_data(dim, order, y[off..off + sym_len(dim, order)].to_vec())
}

struct WkbSystem<'a> {
    model: &'a PotentialModel,
    mass: f64,
    layout: Layout,
    max_v_order: usize,
    /// indices[r] = canonical multi-indices of order r, cached off the hot path.
    indices: Vec<Vec<Vec<usize>>>,
}

impl WkbSystem<'_> {
    /// Leibniz sum over index positions: sum over j and over splittings of
    /// `idx` into (A, B) of chain_a[{j} + A] * chain_b[{j} + B], with masks
    /// restricted by (skip_empty, skip_full) for the A side.
    #[allow(clippy::too_many_arguments)]
    fn pair_sum(
        &self,
        y: &[Complex64],
        idx: &[usize],
        ka: usize,
        kb: usize,
        skip_empty: bool,
        skip_full: bool,
        v: &[Complex64],
    ) -> Complex64 {
        let d = self.layout.dim;
        let r = idx.len();
        let mut acc = Complex64::ZERO;
        let full = (1usize << r) - 1;
        for mask in 0..=full {
            if (skip_empty && mask == 0) || (skip_full && mask == full) {
                continue;
            }
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
                let fa = self.chain_read(y, ka, &ia[..na], v);
                let fb = self.chain_read(y, kb, &ib[..nb], v);
                acc += fa * fb;
            }
        }
        acc
    }

    fn chain_read(&self, y: &[Complex64], k: usize, idx: &[usize], v: &[Complex64]) -> Complex64 {
        if k == 0 && idx.len() == 1 {
            return self.mass * v[idx[0]];
        }
        self.layout.chain_get(y, k, idx)
    }

    /// Laplacian-style contraction sum_p chain[{p,p} + idx].
    fn lap(&self, y: &[Complex64], k: usize, idx: &[usize], v: &[Complex64]) -> Complex64 {
        let d = self.layout.dim;
        let mut full = [0usize; 8];
        full[..idx.len()].copy_from_slice(idx);
        let n = idx.len();
        let mut acc = Complex64::ZERO;
        for p in 0..d {
            full[n] = p;
            full[n + 1] = p;
            acc += self.chain_read(y, k, &full[..n + 2], v);
        }
        acc
    }
}

impl OdeSystem for WkbSystem<'_> {
    fn state_len(&self) -> usize {
        self.layout.total
    }

    fn rhs(&self, _t: f64, y: &[Complex64], dydt: &mut [Complex64]) {
        let lay = &self.layout;
        let d = lay.dim;
        let n = lay.n;
        let m = self.mass;
        let x = &y[0..d];
        let v = &y[lay.v..lay.v + d];
        let derivs = eval_derivs(self.model, x, self.max_v_order).expect("potential derivatives");

        for i in 0..d {
            dydt[i] = v[i];
            dydt[lay.v + i] = -derivs.gradient(i) / m;
        }
        let kin: Complex64 = v.iter().map(|vi| 0.5 * m * vi * vi).sum();
        dydt[lay.s0] = kin - derivs.value();

        for i in 0..d {
            for j in 0..d {
                dydt[lay.u + i * d + j] = y[lay.udot + i * d + j];
                let mut acc = Complex64::ZERO;
                for k in 0..d {
                    acc += derivs.hessian(i, k) * y[lay.u + k * d + j];
                }
                dydt[lay.udot + i * d + j] = -acc / m;
            }
        }
        dydt[lay.logdet] = {
            let u = &y[lay.u..lay.u + d * d];
            let udot = &y[lay.udot..lay.udot + d * d];
            if d == 1 {
                udot[0] / u[0]
            } else {
                let um = nalgebra::DMatrix::from_row_slice(d, d, u);
                let udm = nalgebra::DMatrix::from_row_slice(d, d, udot);
                um.lu()
                    .solve(&nalgebra::DMatrix::identity(d, d))
                    .map(|inv| (udm * inv).trace())
                    .unwrap_or(Complex64::new(f64::NAN, f64::NAN))
            }
        };

        // S_0 chain, orders 2..=2n:
        // dC_I/dt = -V_I - (1/2m) sum_j sum_{proper splittings} C_{jA} C_{jB}
        for r in 2..=2 * n {
            let off = lay.c(r);
            for (slot, idx) in self.indices[r].iter().enumerate() {
                let vi = derivs.tensors[r].get(idx);
                let quad = self.pair_sum(y, idx, 0, 0, true, true, v);
                dydt[off + slot] = -vi - quad / (2.0 * m);
            }
        }

        // S_k chains: dS_k_I/dt =
        //   -(1/2m) sum_{m'=1}^{k-1} d^I (nabla S_m' . nabla S_{k-m'})
        //   + (i/2m) sum_p S_{k-1, ppI}
        //   - (1/m) sum_j sum_{nonempty A} C_{jA} S_k_{j(I\A)}   (advection remainder)
        let half_i = Complex64::i() / (2.0 * m);
        for k in 1..=n {
            for (j_order, &off) in lay.sk_off[k - 1].iter().enumerate() {
                for (slot, idx) in self.indices[j_order].iter().enumerate() {
                    let mut rhs = half_i * self.lap(y, k - 1, idx, v);
                    for m_lower in 1..k {
                        rhs -= self.pair_sum(y, idx, m_lower, k - m_lower, false, false, v)
                            / (2.0 * m);
                    }
                    if j_order > 0 {
                        rhs -= self.pair_sum_with_c(y, idx, k, v) / m;
                    }
                    dydt[off + slot] = rhs;
                }
            }
        }
    }

    fn guard(&self, t: f64, y: &[Complex64]) -> Result<()> {
        if self.layout.n >= 1 {
            let off = self.layout.c(2);
            for c in &y[off..off + sym_len(self.layout.dim, 2)] {
                if c.norm() > RICCATI_GUARD {
                    return Err(Error::RiccatiBlowup {
                        t,
                        guard: RICCATI_GUARD,
                    });
                }
            }
        }
        Ok(())
    }
}

impl WkbSystem<'_> {
    /// Advection remainder: sum_j sum_{nonempty A subset I} C_{jA} S_k_{j(I\A)}.
    fn pair_sum_with_c(
        &self,
        y: &[Complex64],
        idx: &[usize],
        k: usize,
        v: &[Complex64],
    ) -> Complex64 {
        let d = self.layout.dim;
        let r = idx.len();
        let mut acc = Complex64::ZERO;
        let full = (1usize << r) - 1;
        for mask in 1..=full {
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
                acc += self.chain_read(y, 0, &ia[..na], v) * self.chain_read(y, k, &ib[..nb], v);
            }
        }
        acc
    }
}

pub fn supported(n: usize, d: usize) -> bool {
    d >= 1 && ((d == 1 && n <= 3) || (d <= 3 && n <= 2))
}

fn check_supported(n: usize, d: usize, masses: &[f64]) -> Result<f64> {
    if !supported(n, d) {
        return Err(Error::UnsupportedCombination(format!(
            "wkb order n={n} in d={d}; supported: n<=3 for d=1, n<=2 for d<=3"
        )));
    }
    let m0 = masses[0];
    if n >= 1 && masses.iter().any(|&m| (m - m0).abs() > 0.0) {
        return Err(Error::UnsupportedCombination(
            "the correction hierarchy requires a uniform mass; diagonal masses are supported for the leading order only".into(),
        ));
    }
    Ok(m0)
}

/// Integrate the hierarchy to order n along the branch trajectory (the
/// coupled trajectory + chain system is re-integrated as one ODE system,
/// avoiding interpolation off the stored path).
pub fn evolve_wkb(
    branch: &Branch,
    model: &PotentialModel,
    sinit: &SInit,
    n: usize,
    opts: IntegratorOptions,
) -> Result<WKBState> {
    evolve_wkb_from_start(
        &branch.x_start,
        model,
        sinit,
        n,
        branch.trajectory.duration(),
        opts,
    )
}

pub fn evolve_wkb_from_start(
    x_start: &[Complex64],
    model: &PotentialModel,
    sinit: &SInit,
    n: usize,
    t_end: f64,
    opts: IntegratorOptions,
) -> Result<WKBState> {
    let d = sinit.dim();
    if model.dim() != d || x_start.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: model.dim(),
        });
    }
    let mass = check_supported(n, d, sinit.masses())?;
    let layout = Layout::new(d, n);
    let indices = (0..=2 * n.max(1)).map(|r| canonical_indices(d, r)).collect();
    let system = WkbSystem {
        model,
        mass,
        max_v_order: (2 * n).max(2),
        layout,
        indices,
    };

    let mut y0 = vec![Complex64::ZERO; system.layout.total];
    y0[0..d].copy_from_slice(x_start);
    let v0 = sinit.initial_velocity(x_start);
    y0[system.layout.v..system.layout.v + d].copy_from_slice(&v0);
    y0[system.layout.s0] = sinit.value(x_start);
    let hess = sinit.hessian();
    for i in 0..d {
        y0[system.layout.u + i * d + i] = Complex64::ONE;
        for j in 0..d {
            y0[system.layout.udot + i * d + j] = hess[(i, j)] / mass;
        }
    }
    if n >= 1 {
        let off = system.layout.c(2);
        let mut c2 = SymTensor::zeros(d, 2);
        for i in 0..d {
            for j in i..d {
                c2.set(&[i, j], hess[(i, j)]);
            }
        }
        y0[off..off + c2.len()].copy_from_slice(c2.data());
        // Gaussian initial data: the S_0 chain above order 2 and every S_k
        // chain start at zero.
    }

    let times = if t_end > 0.0 { vec![0.0, t_end] } else { vec![0.0] };
    let states = integrate_sampled(&system, y0, &times, opts)?;
    let y = states.last().unwrap();
    let lay = &system.layout;

    let mut s = Vec::with_capacity(n + 1);
    s.push(y[lay.s0]);
    for k in 1..=n {
        s.push(y[lay.sk_off[k - 1][0]]);
    }
    let mut s0_derivs = Vec::new();
    for r in 2..=2 * n {
        s0_derivs.push(tensor_view(y, lay.c(r), d, r));
    }
    let mut sk_derivs = Vec::new();
    for k in 1..=n {
        let mut ts = Vec::new();
        for j in 1..=2 * (n - k) {
            ts.push(tensor_view(y, lay.sk_off[k - 1][j], d, j));
        }
        sk_derivs.push(ts);
    }
    let log_det = y[lay.logdet];
    let s1_cross_check = if n >= 1 {
        (s[1] - Complex64::i() / 2.0 * log_det).norm()
    } else {
        0.0
    };

    Ok(WKBState {
        order: n,
        dim: d,
        s,
        s0_derivs,
        sk_derivs,
        log_det_stability: log_det,
        s1_cross_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::GaussianPacket;

    fn sinit_1d(a0: f64, a1: f64) -> SInit {
        SInit::new(GaussianPacket::scalar_1d(0.0, 0.5, a0, a1, 1.0, 1.0))
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn table_of_state_sizes() {
        // the twelve tabulated values: nine numeric entries plus the three
        // closed forms for general n at d = 1, 2, 3
        assert_eq!(state_size(1, 1), 4);
        assert_eq!(state_size(2, 1), 9);
        assert_eq!(state_size(3, 1), 16);
        assert_eq!(state_size(1, 2), 7);
        assert_eq!(state_size(2, 2), 22);
        assert_eq!(state_size(3, 2), 50);
        assert_eq!(state_size(1, 3), 11);
        assert_eq!(state_size(2, 3), 46);
        assert_eq!(state_size(3, 3), 130);
        for n in 1..=8u64 {
            assert_eq!(state_size(n as usize, 1), (n + 1) * (n + 1));
            assert_eq!(state_size(n as usize, 2), (n + 1) * (n + 2) * (4 * n + 3) / 6);
            assert_eq!(
                state_size(n as usize, 3),
                (n + 1) * (n + 2) * (2 * n * n + 6 * n + 3) / 6
            );
        }
        // closed forms for general d at fixed n
        for d in 1..=8u64 {
            assert_eq!(state_size(1, d as usize), (d * d + 3 * d + 4) / 2);
            assert_eq!(
                state_size(2, d as usize),
                (d.pow(4) + 10 * d.pow(3) + 47 * d * d + 86 * d + 72) / 24
            );
            assert_eq!(
                state_size(3, d as usize),
                (d.pow(6) + 21 * d.pow(5) + 205 * d.pow(4) + 1035 * d.pow(3)
                    + 3034 * d * d
                    + 4344 * d
                    + 2880)
                    / 720
            );
        }
    }

    #[test]
    fn layout_scalar_count_matches_state_size() {
        for (n, d) in [(1, 1), (2, 1), (3, 1), (1, 2), (2, 2), (1, 3), (2, 3)] {
            let lay = Layout::new(d, n);
            // S-function slots: S0 + v (stands for nabla S0) + C chain + S_k chains
            let mut count = 1 + d;
            for r in 2..=2 * n {
                count += sym_len(d, r);
            }
            for k in 1..=n {
                for j in 0..=2 * (n - k) {
                    count += sym_len(d, j);
                }
            }
            assert_eq!(count as u64, state_size(n, d), "n={n} d={d}");
            assert_eq!(lay.total, count + d + 2 * d * d + 1); // + x, U, Udot, logdet
        }
    }

    #[test]
    fn free_particle_s1_closed_form() {
        // S_1(T) = (i/2) log(1 + 2 i a T / m)
        let sinit = sinit_1d(0.5, 0.2);
        let model = PotentialModel::Free { dim: 1 };
        let t_end = 1.3;
        let st = evolve_wkb_from_start(
            &[c(0.4, -0.3)],
            &model,
            &sinit,
            2,
            t_end,
            IntegratorOptions::default(),
        )
        .unwrap();
        let a = c(0.5, 0.2);
        let expected = Complex64::i() / 2.0 * (Complex64::ONE + 2.0 * Complex64::i() * a * t_end).ln();
        assert!((st.s[1] - expected).norm() < 1e-9, "{} vs {}", st.s[1], expected);
        assert!(st.s1_cross_check < 1e-9);
    }

    #[test]
    fn harmonic_higher_corrections_vanish() {
        let sinit = sinit_1d(0.5, 0.0);
        let model = PotentialModel::Harmonic { dim: 1, spring: 1.0 };
        let st = evolve_wkb_from_start(
            &[c(0.8, 0.1)],
            &model,
            &sinit,
            3,
            2.1,
            IntegratorOptions::default(),
        )
        .unwrap();
        assert!(st.s[2].norm() < 1e-12, "S2 = {}", st.s[2]);
        assert!(st.s[3].norm() < 1e-12, "S3 = {}", st.s[3]);
    }

    #[test]
    fn lower_orders_unaffected_by_longer_chains() {
        let sinit = sinit_1d(0.5, 0.1);
        let model = PotentialModel::QuarticPerturbedHarmonic {
            dim: 1,
            spring: 1.0,
            quartic: 0.1,
        };
        let opts = IntegratorOptions {
            rtol: 1e-12,
            atol: 1e-14,
            ..Default::default()
        };
        let x0 = [c(0.3, -0.2)];
        let st1 = evolve_wkb_from_start(&x0, &model, &sinit, 1, 1.2, opts).unwrap();
        let st2 = evolve_wkb_from_start(&x0, &model, &sinit, 2, 1.2, opts).unwrap();
        let st3 = evolve_wkb_from_start(&x0, &model, &sinit, 3, 1.2, opts).unwrap();
        assert!((st1.s[0] - st2.s[0]).norm() < 1e-9);
        assert!((st1.s[1] - st2.s[1]).norm() < 1e-9);
        assert!((st2.s[2] - st3.s[2]).norm() < 1e-9);
    }

    #[test]
    fn s1_identity_with_sqrt_det() {
        let sinit = sinit_1d(0.6, 0.2);
        let model = PotentialModel::QuarticPerturbedHarmonic {
            dim: 1,
            spring: 1.0,
            quartic: 0.08,
        };
        let st = evolve_wkb_from_start(
            &[c(0.5, 0.4)],
            &model,
            &sinit,
            1,
            1.7,
            IntegratorOptions::default(),
        )
        .unwrap();
        // exp(i S_1) sqrt(det U) = 1 on the continuous branch
        let lhs = (Complex64::i() * st.s[1]).exp() * (st.log_det_stability / 2.0).exp();
        assert!((lhs - Complex64::ONE).norm() < 1e-8);
    }

    #[test]
    fn chain_finite_difference_consistency() {
        // d/dx_start of the order-r chain entry at T equals the order-(r+1)
        // entry times U(T): validates the generated 1D n=3 equations.
        let sinit = sinit_1d(0.5, 0.0);
        let model = PotentialModel::QuarticPerturbedHarmonic {
            dim: 1,
            spring: 1.0,
            quartic: 0.1,
        };
        let opts = IntegratorOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let x0 = c(0.3, 0.1);
        let eps = 1e-6;
        let t_end = 0.9;
        let base = evolve_wkb_from_start(&[x0], &model, &sinit, 3, t_end, opts).unwrap();
        let plus = evolve_wkb_from_start(&[x0 + eps], &model, &sinit, 3, t_end, opts).unwrap();
        let minus = evolve_wkb_from_start(&[x0 - eps], &model, &sinit, 3, t_end, opts).unwrap();

        // recover U(T) from the tracked log det
        let u_t = base.log_det_stability.exp();

        // S_0 chain: orders 2..5 against 3..6
        for r in 2..=5usize {
            let fd = (plus.s0_derivs[r - 2].data()[0] - minus.s0_derivs[r - 2].data()[0])
                / (2.0 * eps);
            let expected = base.s0_derivs[r - 1].data()[0] * u_t;
            assert!(
                (fd - expected).norm() < 1e-4 * expected.norm().max(1.0),
                "order {r}: fd {fd} vs {expected}"
            );
        }
        // S_1 chain: orders 1..3 against 2..4
        for j in 1..=3usize {
            let fd = (plus.sk_derivs[0][j - 1].data()[0] - minus.sk_derivs[0][j - 1].data()[0])
                / (2.0 * eps);
            let expected = base.sk_derivs[0][j].data()[0] * u_t;
            assert!(
                (fd - expected).norm() < 1e-4 * expected.norm().max(1.0),
                "S1 order {j}"
            );
        }
        // S_2 value against S_2'
        let fd = (plus.s[2] - minus.s[2]) / (2.0 * eps);
        let expected = base.sk_derivs[1][0].data()[0] * u_t;
        assert!((fd - expected).norm() < 1e-4 * expected.norm().max(1.0));
    }

    #[test]
    fn tensor_symmetry_spot_check_2d() {
        let packet = GaussianPacket::separable(
            vec![0.0, 0.2],
            vec![0.4, -0.1],
            &[(0.5, 0.1), (0.6, 0.0)],
            1.0,
            1.0,
        );
        let sinit = SInit::new(packet);
        let model = PotentialModel::QuarticPerturbedHarmonic {
            dim: 2,
            spring: 1.0,
            quartic: 0.05,
        };
        let st = evolve_wkb_from_start(
            &[c(0.3, 0.1), c(-0.2, 0.05)],
            &model,
            &sinit,
            2,
            0.8,
            IntegratorOptions::default(),
        )
        .unwrap();
        let c3 = &st.s0_derivs[1];
        assert_eq!(c3.get(&[0, 1, 1]), c3.get(&[1, 0, 1]));
        assert_eq!(c3.get(&[0, 0, 1]), c3.get(&[1, 0, 0]));
        assert!(st.s1_cross_check < 1e-8);
    }

    #[test]
    fn riccati_pole_reported_with_blowup_time() {
        // near-zero a0 pushes S_0'' = m Udot/U past the overflow guard at the
        // harmonic focal time
        let sinit = SInit::new(GaussianPacket::scalar_1d(0.0, 0.0, 1e-13, 0.5, 1.0, 1.0));
        let model = PotentialModel::Harmonic { dim: 1, spring: 1.0 };
        let err = evolve_wkb_from_start(
            &[c(0.2, 0.0)],
            &model,
            &sinit,
            1,
            2.0,
            IntegratorOptions::default(),
        );
        match err {
            Err(Error::RiccatiBlowup { t, .. }) => {
                let t_caustic = (1.0f64 / (2.0 * 0.5)).atan();
                assert!((t - t_caustic).abs() < 0.05, "blowup at {t}, caustic at {t_caustic}");
            }
            other => panic!("expected RiccatiBlowup, got {other:?}"),
        }
    }

    #[test]
    fn three_dimensional_order_two_smoke() {
        let packet = GaussianPacket::separable(
            vec![0.1, -0.2, 0.0],
            vec![0.3, 0.1, -0.2],
            &[(0.5, 0.0), (0.6, 0.1), (0.4, 0.0)],
            1.0,
            1.0,
        );
        let sinit = SInit::new(packet);
        let model = PotentialModel::QuarticPerturbedHarmonic {
            dim: 3,
            spring: 1.0,
            quartic: 0.05,
        };
        let st = evolve_wkb_from_start(
            &[c(0.2, 0.1), c(-0.1, 0.0), c(0.1, -0.1)],
            &model,
            &sinit,
            2,
            0.7,
            IntegratorOptions::default(),
        )
        .unwrap();
        assert!(st.s1_cross_check < 1e-8);
        assert!(st.s[2].norm() > 0.0 && st.s[2].norm() < 1.0);
    }

    #[test]
    fn unsupported_combinations_rejected() {
        let sinit = sinit_1d(0.5, 0.0);
        let model = PotentialModel::Free { dim: 1 };
        let err = evolve_wkb_from_start(
            &[c(0.0, 0.0)],
            &model,
            &sinit,
            4,
            1.0,
            IntegratorOptions::default(),
        );
        assert!(matches!(err, Err(Error::UnsupportedCombination(_))));
    }
}
