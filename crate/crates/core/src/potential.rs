//! Analytic potentials on complexified configuration space.
//!
//! Every built-in kind is an entire function of each coordinate, so evaluation
//! at complex points is the analytic continuation of the real-axis formula.
//! Spatial derivatives are served up to order 6 as symmetric tensors.

use crate::error::{Error, Result};
use crate::tensor::{canonical_indices, SymTensor};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const MAX_DERIVATIVE_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialModel {
    /// V = 0.
    Free { dim: usize },
    /// V = (k/2) sum_i x_i^2, with k = m omega^2.
    Harmonic { dim: usize, spring: f64 },
    /// V = (k/2) sum_i x_i^2 + lambda sum_i x_i^4.
    QuarticPerturbedHarmonic { dim: usize, spring: f64, quartic: f64 },
    /// 1D polynomial V = sum_j c_j x^j, degree <= 6.
    Polynomial { coeffs: Vec<f64> },
    /// 1D Morse well D (1 - exp(-a (x - x0)))^2; entire as a sum of exponentials.
    Morse1d { depth: f64, width: f64, center: f64 },
}

/// All partial derivatives of V at one complex point.
///
/// `tensors[r]` holds the order-r derivatives in symmetric multi-index layout;
/// `tensors[0]` is the value itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeBundle {
    pub order: usize,
    pub tensors: Vec<SymTensor>,
    pub query_point: Vec<Complex64>,
}

impl DerivativeBundle {
    pub fn value(&self) -> Complex64 {
        self.tensors[0].data()[0]
    }

    pub fn gradient(&self, i: usize) -> Complex64 {
        self.tensors[1].get(&[i])
    }

    pub fn hessian(&self, i: usize, j: usize) -> Complex64 {
        self.tensors[2].get(&[i, j])
    }
}

impl PotentialModel {
    pub fn dim(&self) -> usize {
        match self {
            Self::Free { dim }
            | Self::Harmonic { dim, .. }
            | Self::QuarticPerturbedHarmonic { dim, .. } => *dim,
            Self::Polynomial { .. } | Self::Morse1d { .. } => 1,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Free { .. } => "free",
            Self::Harmonic { .. } => "harmonic",
            Self::QuarticPerturbedHarmonic { .. } => "quartic_perturbed_harmonic",
            Self::Polynomial { .. } => "polynomial",
            Self::Morse1d { .. } => "morse_1d",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Free { dim } | Self::Harmonic { dim, .. } => {
                if *dim == 0 {
                    return Err(Error::InvalidParameter("dimension must be positive".into()));
                }
            }
            Self::QuarticPerturbedHarmonic { dim, .. } => {
                if *dim == 0 {
                    return Err(Error::InvalidParameter("dimension must be positive".into()));
                }
            }
            Self::Polynomial { coeffs } => {
                if coeffs.len() > 7 {
                    return Err(Error::InvalidParameter(
                        "polynomial degree must be <= 6".into(),
                    ));
                }
            }
            Self::Morse1d { width, .. } => {
                if *width <= 0.0 {
                    return Err(Error::InvalidParameter("morse width must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// True when all derivatives of order >= 3 vanish identically.
    pub fn is_quadratic(&self) -> bool {
        matches!(self, Self::Free { .. } | Self::Harmonic { .. })
            || matches!(self, Self::Polynomial { coeffs } if coeffs.len() <= 3)
    }

    /// Value on the real axis (grid oracle and split-step phases).
    pub fn eval_real(&self, x: &[f64]) -> f64 {
        match self {
            Self::Free { .. } => 0.0,
            Self::Harmonic { spring, .. } => 0.5 * spring * x.iter().map(|v| v * v).sum::<f64>(),
            Self::QuarticPerturbedHarmonic { spring, quartic, .. } => x
                .iter()
                .map(|v| 0.5 * spring * v * v + quartic * v.powi(4))
                .sum(),
            Self::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, &c| acc * x[0] + c)
            }
            Self::Morse1d { depth, width, center } => {
                let e = (-width * (x[0] - center)).exp();
                depth * (1.0 - e) * (1.0 - e)
            }
        }
    }

    /// One-coordinate derivative d^r V / d z_i^r for the separable kinds.
    fn axis_deriv(&self, z: Complex64, r: usize) -> Complex64 {
        match self {
            Self::Free { .. } => Complex64::ZERO,
            Self::Harmonic { spring, .. } => match r {
                0 => 0.5 * spring * z * z,
                1 => spring * z,
                2 => Complex64::new(*spring, 0.0),
                _ => Complex64::ZERO,
            },
            Self::QuarticPerturbedHarmonic { spring, quartic, .. } => {
                let k = *spring;
                let l = *quartic;
                match r {
                    0 => 0.5 * k * z * z + l * z * z * z * z,
                    1 => k * z + 4.0 * l * z * z * z,
                    2 => k + 12.0 * l * z * z,
                    3 => 24.0 * l * z,
                    4 => Complex64::new(24.0 * l, 0.0),
                    _ => Complex64::ZERO,
                }
            }
            Self::Polynomial { coeffs } => {
                let mut acc = Complex64::ZERO;
                for (j, &c) in coeffs.iter().enumerate().skip(r) {
                    // d^r x^j = j!/(j-r)! x^{j-r}
                    let mut f = 1.0;
                    for q in 0..r {
                        f *= (j - q) as f64;
                    }
                    acc += c * f * z.powu((j - r) as u32);
                }
                acc
            }
            Self::Morse1d { depth, width, center } => {
                // V = D (1 - 2 e^{-a u} + e^{-2 a u}), u = z - x0
                let a = *width;
                let u = z - center;
                let e1 = (-a * u).exp();
                let e2 = (-2.0 * a * u).exp();
                if r == 0 {
                    depth * (1.0 - 2.0 * e1 + e2)
                } else {
                    let s1 = (-a).powi(r as i32);
                    let s2 = (-2.0 * a).powi(r as i32);
                    depth * (-2.0 * s1 * e1 + s2 * e2)
                }
            }
        }
    }
}

/// All partial derivatives of V through `max_order` at a complex point.
///
/// The built-in kinds are sums of single-coordinate terms, so mixed partials
/// vanish and only the diagonal entries of each tensor are populated.
pub fn eval_derivs(
    model: &PotentialModel,
    z: &[Complex64],
    max_order: usize,
) -> Result<DerivativeBundle> {
    let d = model.dim();
    if z.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: z.len(),
        });
    }
    if max_order > MAX_DERIVATIVE_ORDER {
        return Err(Error::UnsupportedOrder {
            order: max_order,
            kind: model.kind_name(),
            max: MAX_DERIVATIVE_ORDER,
        });
    }

    let mut tensors = Vec::with_capacity(max_order + 1);
    let mut value = Complex64::ZERO;
    for &zi in z {
        value += model.axis_deriv(zi, 0);
    }
    let mut t0 = SymTensor::zeros(d, 0);
    t0.data_mut()[0] = value;
    tensors.push(t0);

    for r in 1..=max_order {
        let mut t = SymTensor::zeros(d, r);
        #[allow(clippy::needless_range_loop)]
        for i in 0..d {
            let idx = vec![i; r];
            t.set(&idx, model.axis_deriv(z[i], r));
        }
        tensors.push(t);
    }

    Ok(DerivativeBundle {
        order: max_order,
        tensors,
        query_point: z.to_vec(),
    })
}

/// Self-test: compare the order-`order` tensor against central differences of
/// the order-(order-1) tensor. Returns the worst relative discrepancy.
pub fn finite_diff_check(
    model: &PotentialModel,
    z: &[Complex64],
    order: usize,
    h: f64,
) -> Result<f64> {
    if order == 0 || order > MAX_DERIVATIVE_ORDER {
        return Err(Error::UnsupportedOrder {
            order,
            kind: model.kind_name(),
            max: MAX_DERIVATIVE_ORDER,
        });
    }
    let d = model.dim();
    let analytic = eval_derivs(model, z, order)?;
    let mut worst: f64 = 0.0;
    let scale: f64 = analytic.tensors[order]
        .data()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
        .max(1e-300);

    for idx in canonical_indices(d, order) {
        let j = idx[order - 1];
        let lower = &idx[..order - 1];
        let mut zp = z.to_vec();
        zp[j] += h;
        let mut zm = z.to_vec();
        zm[j] -= h;
        let fp = eval_derivs(model, &zp, order - 1)?.tensors[order - 1].get(lower);
        let fm = eval_derivs(model, &zm, order - 1)?.tensors[order - 1].get(lower);
        let numeric = (fp - fm) / (2.0 * h);
        let exact = analytic.tensors[order].get(&idx);
        worst = worst.max((numeric - exact).norm() / scale);
    }
    Ok(worst)
}
