//! Linear regressors on z-scored features: OLS, ridge and lasso.

use serde::{Deserialize, Serialize};

use super::{PredictorError, Result};
use crate::scalar::Scalar;

/// Ridge jitter that turns the normal equations into OLS.
pub const OLS_JITTER: f64 = 1e-8;

/// Column z-scoring fitted on training rows. Constant columns get scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut mean = vec![0.0; p];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for row in x {
            for j in 0..p {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    /// Column-major standardized copy.
    pub fn transform_columns(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..self.mean.len())
            .map(|j| x.iter().map(|r| (r[j] - self.mean[j]) / self.scale[j]).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub standardizer: Standardizer,
    /// Intercept in standardized space (the training mean of y).
    pub intercept: f64,
    /// Coefficients on standardized features.
    pub coef: Vec<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let s = &self.standardizer;
        self.intercept
            + (0..self.coef.len()).map(|j| self.coef[j] * (row[j] - s.mean[j]) / s.scale[j]).sum::<f64>()
    }

    /// Coefficients and intercept on the original feature scale.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let s = &self.standardizer;
        let coef: Vec<f64> = self.coef.iter().zip(&s.scale).map(|(c, sc)| c / sc).collect();
        let intercept = self.intercept - coef.iter().zip(&s.mean).map(|(c, m)| c * m).sum::<f64>();
        (coef, intercept)
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, p×p) in
/// place; `b` receives the solution.
pub fn cholesky_solve<T: Scalar>(a: &mut [T], b: &mut [T], p: usize) -> std::result::Result<(), usize> {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d = d - a[j * p + k] * a[j * p + k];
        }
        if !(d > T::zero()) {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s = s - a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s = s - a[i * p + k] * b[k];
        }
        b[i] = s / a[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s = s - a[k * p + i] * b[k];
        }
        b[i] = s / a[i * p + i];
    }
    Ok(())
}

/// Minimizes `‖y − ȳ − Zb‖² + λ‖b‖²` over standardized features `Z`.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearModel> {
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform_columns(x);
    let p = z.len();
    let n = y.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut gram = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            let g: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum();
            gram[i * p + j] = g;
            gram[j * p + i] = g;
        }
        gram[i * p + i] += lambda.max(OLS_JITTER);
    }
    let mut rhs: Vec<f64> = z.iter().map(|c| c.iter().zip(&yc).map(|(a, b)| a * b).sum()).collect();
    cholesky_solve(&mut gram, &mut rhs, p)
        .map_err(|j| PredictorError::DegenerateDesign(format!("normal equations singular at column {j}")))?;
    if rhs.iter().any(|c| !c.is_finite()) {
        return Err(PredictorError::NonFiniteLoss);
    }
    Ok(LinearModel { standardizer, intercept: y_mean, coef: rhs })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on `(1/2n)‖y − ȳ − Zb‖² + λ‖b‖₁`. Stops when
/// the duality gap falls below `tol · ‖y − ȳ‖²/(2n)`. Returns the model and
/// the final gap.
pub fn fit_lasso(x: &[Vec<f64>], y: &[f64], lambda: f64, tol: f64, max_iter: usize) -> Result<(LinearModel, f64)> {
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform_columns(x);
    let p = z.len();
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut r: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let y_norm2: f64 = r.iter().map(|v| v * v).sum();
    let col_sq: Vec<f64> = z.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n).collect();
    let mut b = vec![0.0; p];
    let mut gap = f64::INFINITY;
    let threshold = tol * (y_norm2 / (2.0 * n)).max(f64::MIN_POSITIVE);
    for _ in 0..max_iter.max(1) {
        for j in 0..p {
            if col_sq[j] <= 0.0 {
                continue;
            }
            let zj = &z[j];
            let rho = zj.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n + col_sq[j] * b[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - b[j];
            if delta != 0.0 {
                for (ri, zi) in r.iter_mut().zip(zj) {
                    *ri -= delta * zi;
                }
                b[j] = new;
            }
        }
        gap = duality_gap(&z, &r, &b, lambda);
        if !gap.is_finite() {
            return Err(PredictorError::NonFiniteLoss);
        }
        if gap <= threshold {
            break;
        }
    }
    Ok((LinearModel { standardizer, intercept: y_mean, coef: b }, gap))
}

fn duality_gap(z: &[Vec<f64>], r: &[f64], b: &[f64], lambda: f64) -> f64 {
    let n = r.len() as f64;
    let r2: f64 = r.iter().map(|v| v * v).sum();
    let primal = r2 / (2.0 * n) + lambda * b.iter().map(|v| v.abs()).sum::<f64>();
    // Dual point ν = s·r/n scaled into the feasible set ‖Zᵀν‖∞ ≤ λ.
    let corr = z.iter().map(|c| c.iter().zip(r).map(|(a, b)| a * b).sum::<f64>().abs()).fold(0.0, f64::max) / n;
    let s = if corr > lambda { lambda / corr } else { 1.0 };
    // D(ν) = νᵀy − (n/2)‖ν‖² with y = r + Zb.
    let ry: f64 = r2 + z.iter().zip(b).map(|(c, bj)| bj * c.iter().zip(r).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>();
    let dual = s / n * ry - s * s * r2 / (2.0 * n);
    primal - dual
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let y = x.iter().map(|r| 3.0 * r[0] + 1.0 + rng.random_range(-0.5..0.5)).collect();
        (x, y)
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.5 - 3.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let m = fit_ridge(&x, &y, OLS_JITTER).unwrap();
        let (c, b0) = m.raw_coefficients();
        assert!((c[0] - 2.0).abs() < 1e-8, "{c:?}");
        assert!((b0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ridge_limits() {
        let (x, y) = noisy(200, 3);
        let ols = fit_ridge(&x, &y, OLS_JITTER).unwrap();
        let r0 = fit_ridge(&x, &y, 0.0).unwrap();
        for (a, b) in ols.coef.iter().zip(&r0.coef) {
            assert!((a - b).abs() < 1e-6);
        }
        let big = fit_ridge(&x, &y, 1e14).unwrap();
        assert!(big.coef.iter().all(|c| c.abs() < 1e-9));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((big.predict_row(&[1.5, -1.0]) - mean).abs() < 1e-9);
    }

    #[test]
    fn cholesky_generic_f32() {
        let mut a = vec![4.0f32, 2.0, 2.0, 3.0];
        let mut b = vec![2.0f32, 1.0];
        cholesky_solve(&mut a, &mut b, 2).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-6 && b[1].abs() < 1e-6);
        let mut a = vec![1.0f64, 1.0, 1.0, 1.0];
        assert_eq!(cholesky_solve(&mut a, &mut [0.0, 0.0], 2), Err(1));
    }

    /// Independent optimality check: `|Zᵀr/n| ≤ λ` on zero coefficients and
    /// `Zᵀr/n = λ·sign(b)` on active ones.
    fn kkt_violation(m: &LinearModel, x: &[Vec<f64>], y: &[f64], lambda: f64) -> f64 {
        let n = y.len() as f64;
        let r: Vec<f64> = x.iter().zip(y).map(|(row, yi)| yi - m.predict_row(row)).collect();
        let mut worst: f64 = 0.0;
        for j in 0..m.coef.len() {
            let g: f64 = x
                .iter()
                .zip(&r)
                .map(|(row, ri)| (row[j] - m.standardizer.mean[j]) / m.standardizer.scale[j] * ri)
                .sum::<f64>()
                / n;
            let v = if m.coef[j] == 0.0 { (g.abs() - lambda).max(0.0) } else { (g - lambda * m.coef[j].signum()).abs() };
            worst = worst.max(v);
        }
        worst
    }

    #[test]
    fn lasso_zeroes_noise_and_is_optimal() {
        let (x, y) = noisy(300, 9);
        let lambda = 0.2;
        let (m, gap) = fit_lasso(&x, &y, lambda, 1e-10, 10_000).unwrap();
        assert_eq!(m.coef[1], 0.0);
        assert!(m.coef[0] > 0.0);
        assert!(gap >= -1e-12);
        assert!(kkt_violation(&m, &x, &y, lambda) < 1e-5);
    }

    #[test]
    fn lasso_large_lambda_is_mean() {
        let (x, y) = noisy(50, 1);
        let (m, _) = fit_lasso(&x, &y, 100.0, 1e-6, 100).unwrap();
        assert!(m.coef.iter().all(|&c| c == 0.0));
    }
}
