//! Gaussian wave packets and the complex initial action S_init = -i hbar log psi_0.
//!
//! The nonnormalized packet is psi_0(x) = exp(i S_init(x) / hbar) with
//! S_init(x) = (x-x0)^T A (x-x0) / 2 + p0 . (x-x0), where A = H(S_init) is a
//! constant complex symmetric matrix with positive-definite imaginary part.
//! For a scalar mass m the width matrix Omega of the packet relates to A by
//! A = i m Omega; in 1D, m Omega = 2 (a0 + i a1) with a0 > 0.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    /// Position expectation.
    pub x0: Vec<f64>,
    /// Momentum expectation.
    pub p0: Vec<f64>,
    /// Complex symmetric width matrix Omega (row-major, d*d entries).
    pub width: Vec<Complex64>,
    pub hbar: f64,
    /// Per-coordinate masses; a single shared mass is the common case.
    pub masses: Vec<f64>,
}

impl GaussianPacket {
    /// 1D packet from the (a0, a1) parameterization: m Omega = 2 (a0 + i a1).
    pub fn scalar_1d(x0: f64, p0: f64, a0: f64, a1: f64, hbar: f64, mass: f64) -> Self {
        Self {
            x0: vec![x0],
            p0: vec![p0],
            width: vec![Complex64::new(2.0 * a0, 2.0 * a1) / mass],
            hbar,
            masses: vec![mass],
        }
    }

    /// Separable packet with per-axis (a0, a1) widths and a shared mass.
    pub fn separable(x0: Vec<f64>, p0: Vec<f64>, a: &[(f64, f64)], hbar: f64, mass: f64) -> Self {
        let d = x0.len();
        let mut width = vec![Complex64::ZERO; d * d];
        for (i, &(a0, a1)) in a.iter().enumerate() {
            width[i * d + i] = Complex64::new(2.0 * a0, 2.0 * a1) / mass;
        }
        Self {
            x0,
            p0,
            width,
            hbar,
            masses: vec![mass; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn width_matrix(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.width)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.p0.len() != d || self.masses.len() != d || self.width.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.p0.len(),
            });
        }
        if self.hbar <= 0.0 {
            return Err(Error::InvalidParameter("hbar must be positive".into()));
        }
        if self.masses.iter().any(|&m| m <= 0.0) {
            return Err(Error::InvalidParameter("masses must be positive".into()));
        }
        let w = self.width_matrix();
        for i in 0..d {
            for j in 0..d {
                if (w[(i, j)] - w[(j, i)]).norm() > 0.0 {
                    return Err(Error::InvalidParameter(
                        "width matrix must be symmetric exactly as stored".into(),
                    ));
                }
            }
        }
        // Re(Omega) positive definite <=> packet is normalizable
        let re = DMatrix::from_fn(d, d, |i, j| w[(i, j)].re);
        let eig = re.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidParameter(
                "Re(width) must be positive definite".into(),
            ));
        }
        Ok(())
    }

    /// Position standard deviation along axis i: <(x_i-x0_i)^2> = hbar / (2 a0_i)
    /// with a0_i = m_i Re(Omega_ii) / 2 for (near-)diagonal widths.
    pub fn sigma(&self, i: usize) -> f64 {
        let d = self.dim();
        let a0 = self.masses[i] * self.width[i * d + i].re / 2.0;
        (self.hbar / (2.0 * a0)).sqrt()
    }

    /// L2 norm of the nonnormalized packet, computed analytically:
    /// ||psi||^2 = (pi hbar)^{d/2} / sqrt(det Im A).
    pub fn norm(&self) -> f64 {
        let d = self.dim();
        let a = self.sinit_hessian();
        let im = DMatrix::from_fn(d, d, |i, j| a[(i, j)].im);
        let det = im.determinant();
        ((std::f64::consts::PI * self.hbar).powi(d as i32) / det)
            .sqrt()
            .sqrt()
    }

    /// Constant Hessian of S_init: A_ij = i sqrt(m_i m_j) Omega_ij.
    pub fn sinit_hessian(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        let w = self.width_matrix();
        DMatrix::from_fn(d, d, |i, j| {
            Complex64::i() * (self.masses[i] * self.masses[j]).sqrt() * w[(i, j)]
        })
    }

    pub fn psi0(&self, z: &[Complex64]) -> Complex64 {
        let s = SInit::new(self.clone());
        (Complex64::i() * s.value(z) / self.hbar).exp()
    }
}

/// S_init(x) and its derivatives at complex points. For Gaussian packets the
/// Hessian is constant and third and higher derivatives vanish identically.
#[derive(Debug, Clone)]
pub struct SInit {
    packet: GaussianPacket,
    hessian: DMatrix<Complex64>,
}

impl SInit {
    pub fn new(packet: GaussianPacket) -> Self {
        let hessian = packet.sinit_hessian();
        Self { packet, hessian }
    }

    pub fn packet(&self) -> &GaussianPacket {
        &self.packet
    }

    pub fn dim(&self) -> usize {
        self.packet.dim()
    }

    pub fn hbar(&self) -> f64 {
        self.packet.hbar
    }

    pub fn masses(&self) -> &[f64] {
        &self.packet.masses
    }

    pub fn value(&self, z: &[Complex64]) -> Complex64 {
        let d = self.dim();
        let dz = DVector::from_fn(d, |i, _| z[i] - self.packet.x0[i]);
        let quad = dz.transpose() * &self.hessian * &dz;
        let lin: Complex64 = (0..d).map(|i| self.packet.p0[i] * dz[i]).sum();
        0.5 * quad[(0, 0)] + lin
    }

    pub fn gradient(&self, z: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim();
        let dz = DVector::from_fn(d, |i, _| z[i] - self.packet.x0[i]);
        let g = &self.hessian * &dz;
        (0..d).map(|i| g[i] + self.packet.p0[i]).collect()
    }

    pub fn hessian(&self) -> &DMatrix<Complex64> {
        &self.hessian
    }

    /// Initial velocity v(0) = nabla S_init(x(0)) / m (per-coordinate masses).
    pub fn initial_velocity(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.gradient(z)
            .iter()
            .zip(&self.packet.masses)
            .map(|(g, &m)| g / m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hessian_matches_1d_parameterization() {
        let p = GaussianPacket::scalar_1d(0.3, 1.2, 0.5, 0.25, 1.0, 2.0);
        p.validate().unwrap();
        let h = p.sinit_hessian();
        // i 2 (a0 + i a1) = -2 a1 + 2 i a0
        assert!((h[(0, 0)] - Complex64::new(-0.5, 1.0)).norm() < 1e-15);
        let s = SInit::new(p);
        assert_eq!(s.value(&[Complex64::new(0.3, 0.0)]), Complex64::ZERO);
    }

    #[test]
    fn gradient_and_value_consistent() {
        let p = GaussianPacket::separable(
            vec![0.0, 1.0],
            vec![0.5, -0.2],
            &[(0.5, 0.1), (0.7, 0.0)],
            1.0,
            1.0,
        );
        p.validate().unwrap();
        let s = SInit::new(p);
        let z = [Complex64::new(0.4, 0.2), Complex64::new(0.9, -0.1)];
        let g = s.gradient(&z);
        let h = 1e-6;
        for i in 0..2 {
            let mut zp = z;
            zp[i] += h;
            let mut zm = z;
            zm[i] -= h;
            let fd = (s.value(&zp) - s.value(&zm)) / (2.0 * h);
            assert!((fd - g[i]).norm() < 1e-8);
        }
    }

    #[test]
    fn peak_amplitude_is_one() {
        let p = GaussianPacket::scalar_1d(0.0, 0.7, 0.5, 0.0, 0.1, 1.0);
        assert!((p.psi0(&[Complex64::ZERO]).norm() - 1.0).abs() < 1e-15);
        // away from the peak the magnitude only decreases on the real axis
        assert!(p.psi0(&[Complex64::new(1.0, 0.0)]).norm() < 1.0);
    }

    #[test]
    fn norm_matches_quadrature() {
        let p = GaussianPacket::scalar_1d(0.2, 0.4, 0.6, 0.3, 0.8, 1.5);
        let analytic = p.norm() * p.norm();
        // brute-force norm on a wide grid
        let n = 20001;
        let (lo, hi) = (-20.0, 20.0);
        let dx = (hi - lo) / (n - 1) as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let x = lo + k as f64 * dx;
            acc += p.psi0(&[Complex64::new(x, 0.0)]).norm_sqr() * dx;
        }
        assert!((analytic - acc).abs() / acc < 1e-8);
    }

    #[test]
    fn invalid_packets_rejected() {
        let mut p = GaussianPacket::scalar_1d(0.0, 0.0, 0.5, 0.0, 1.0, 1.0);
        p.width[0] = Complex64::new(-1.0, 0.0);
        assert!(p.validate().is_err());

        let mut q = GaussianPacket::separable(vec![0.0, 0.0], vec![0.0, 0.0], &[(0.5, 0.0), (0.5, 0.0)], 1.0, 1.0);
        q.width[1] = Complex64::new(0.1, 0.0); // breaks exact symmetry
        assert!(q.validate().is_err());
    }
}
