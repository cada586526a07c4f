//! Composite-Simpson quadrature on uniform samples, including the cumulative
//! form used to rebuild iterated integrals from dense trajectory output.

use num_complex::Complex64;

/// Cumulative integral F(t_k) = int_0^{t_k} y dt on a uniform grid of spacing
/// `h`. Even points use composite Simpson pairs; odd points add the
/// half-panel value of the quadratic through the surrounding three samples.
pub fn cumulative_simpson(y: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = y.len();
    let mut f = vec![Complex64::ZERO; n];
    if n < 2 {
        return f;
    }
    if n == 2 {
        f[1] = 0.5 * h * (y[0] + y[1]);
        return f;
    }
    for k in (2..n).step_by(2) {
        f[k] = f[k - 2] + h / 3.0 * (y[k - 2] + 4.0 * y[k - 1] + y[k]);
    }
    for k in (1..n).step_by(2) {
        if k + 1 < n {
            f[k] = f[k - 1] + h / 12.0 * (5.0 * y[k - 1] + 8.0 * y[k] - y[k + 1]);
        } else {
            f[k] = f[k - 1] + h / 12.0 * (-y[k - 2] + 8.0 * y[k - 1] + 5.0 * y[k]);
        }
    }
    f
}

/// Cumulative integral from the right: G(t_k) = int_{t_k}^{t_end} y dt.
pub fn cumulative_simpson_right(y: &[Complex64], h: f64) -> Vec<Complex64> {
    let rev: Vec<Complex64> = y.iter().rev().copied().collect();
    let mut f = cumulative_simpson(&rev, h);
    f.reverse();
    f
}

pub fn simpson(y: &[Complex64], h: f64) -> Complex64 {
    *cumulative_simpson(y, h).last().unwrap_or(&Complex64::ZERO)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let n = 200;
        let h = 0.01;
        let y: Vec<Complex64> = (0..=n).map(|k| c((k as f64 * h).sin())).collect();
        let f = cumulative_simpson(&y, h);
        #[allow(clippy::needless_range_loop)]
        for k in 0..=n {
            let t = k as f64 * h;
            let exact = 1.0 - t.cos();
            assert!((f[k].re - exact).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn right_cumulative_complements_left() {
        let n = 101; // odd sample count exercises the tail formula
        let h = 0.013;
        let y: Vec<Complex64> = (0..n)
            .map(|k| Complex64::new((k as f64 * h).cos(), (k as f64 * h).exp() * 0.1))
            .collect();
        let left = cumulative_simpson(&y, h);
        let right = cumulative_simpson_right(&y, h);
        let total = *left.last().unwrap();
        for k in 0..n {
            assert!((left[k] + right[k] - total).norm() < 1e-10);
        }
    }
}
