//! Elastic-net linear regression via cyclic coordinate descent.
//!
//! Minimizes
//!
//! ```text
//! (1/2n) ||y - X b - c||^2 + lambda * (alpha ||b||_1 + (1 - alpha)/2 ||b||_2^2)
//! ```
//!
//! with soft-threshold coordinate updates on centered data. The intercept is
//! never penalized; it is recovered from the column means after the sweep
//! loop converges.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RewtsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetParams {
    /// Regularization strength, >= 0.
    pub lambda: f64,
    /// L1 ratio in [0, 1]; 1 is lasso, 0 is ridge.
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub fit_intercept: bool,
}

impl Default for ElasticNetParams {
    fn default() -> Self {
        Self {
            lambda: 3e-4,
            alpha: 0.5,
            max_iter: 1000,
            tol: 1e-7,
            fit_intercept: true,
        }
    }
}

impl ElasticNetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(RewtsError::Parameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(RewtsError::Parameter(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if self.max_iter == 0 {
            return Err(RewtsError::Parameter("max_iter must be >= 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(RewtsError::Parameter(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetFit {
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    /// False when the sweep loop hit `max_iter` before reaching `tol`.
    /// Kept as a flag rather than an error.
    pub converged: bool,
    pub iterations: usize,
}

pub fn fit_elastic_net(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    params: &ElasticNetParams,
) -> Result<ElasticNetFit> {
    params.validate()?;
    let n = x.nrows();
    let p = x.ncols();
    if n == 0 {
        return Err(RewtsError::Parameter("design matrix has no rows".into()));
    }
    if y.len() != n {
        return Err(RewtsError::Shape(format!(
            "design has {n} rows but target has {} entries",
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(RewtsError::Numeric("non-finite values in regression inputs".into()));
    }

    let nf = n as f64;
    let (x_mean, y_mean) = if params.fit_intercept {
        (x.mean_axis(Axis(0)).expect("n > 0"), y.mean().expect("n > 0"))
    } else {
        (Array1::zeros(p), 0.0)
    };
    let xc = &x - &x_mean.view().insert_axis(Axis(0));
    let yc = &y - y_mean;

    let sq_norms: Vec<f64> = xc.columns().into_iter().map(|c| c.dot(&c) / nf).collect();
    let l1 = params.lambda * params.alpha;
    let l2 = params.lambda * (1.0 - params.alpha);

    let mut beta = Array1::<f64>::zeros(p);
    let mut residual = yc.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let mut max_coef = 0.0f64;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if sq_norms[j] == 0.0 {
                continue;
            }
            let col = xc.column(j);
            let old = beta[j];
            if old != 0.0 {
                residual.scaled_add(old, &col);
            }
            let rho = col.dot(&residual) / nf;
            let new = soft_threshold(rho, l1) / (sq_norms[j] + l2);
            beta[j] = new;
            if new != 0.0 {
                residual.scaled_add(-new, &col);
            }
            max_delta = max_delta.max((new - old).abs());
            max_coef = max_coef.max(new.abs());
        }
        iterations += 1;
        if max_coef == 0.0 || max_delta <= params.tol * max_coef.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "elastic net did not converge within {} iterations (tol {})",
            params.max_iter,
            params.tol
        );
    }

    let intercept = if params.fit_intercept {
        y_mean - x_mean.dot(&beta)
    } else {
        0.0
    };
    Ok(ElasticNetFit {
        coefficients: beta,
        intercept,
        converged,
        iterations,
    })
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    z.signum() * (z.abs() - gamma).max(0.0)
}

/// Mean squared data-fit term of the objective, without the penalty.
pub fn training_mse(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, fit: &ElasticNetFit) -> f64 {
    let pred = x.dot(&fit.coefficients) + fit.intercept;
    (&y - &pred).mapv(|e| e * e).mean().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gaussian elimination with partial pivoting, kept local to the tests
    /// so oracle solves stay independent of the library code.
    fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
        let n = b.len();
        let mut m = a.clone();
        let mut rhs = b.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| m[[i, col]].abs().partial_cmp(&m[[j, col]].abs()).unwrap())
                .unwrap();
            if pivot != col {
                for k in 0..n {
                    m.swap([col, k], [pivot, k]);
                }
                rhs.swap(col, pivot);
            }
            for row in col + 1..n {
                let f = m[[row, col]] / m[[col, col]];
                for k in col..n {
                    m[[row, k]] -= f * m[[col, k]];
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut x = Array1::zeros(n);
        for row in (0..n).rev() {
            let mut s = rhs[row];
            for k in row + 1..n {
                s -= m[[row, k]] * x[k];
            }
            x[row] = s / m[[row, row]];
        }
        x
    }

    fn tight(max_iter: usize) -> ElasticNetParams {
        ElasticNetParams { lambda: 0.0, alpha: 0.5, max_iter, tol: 1e-14, fit_intercept: true }
    }

    #[test]
    fn recovers_ar1_coefficient_exactly() {
        // y_t = 0.5 * y_{t-1} with no noise.
        let series: Vec<f64> = (0..40).scan(8.0f64, |s, _| {
            let out = *s;
            *s *= 0.5;
            Some(out)
        }).collect();
        let x = Array2::from_shape_vec((39, 1), series[..39].to_vec()).unwrap();
        let y = Array1::from(series[1..].to_vec());
        let fit = fit_elastic_net(x.view(), y.view(), &tight(10_000)).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn full_shrinkage_leaves_intercept_mean() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![3.0, 5.0, 7.0, 9.0];
        let params = ElasticNetParams { lambda: 1e6, alpha: 1.0, ..Default::default() };
        let fit = fit_elastic_net(x.view(), y.view(), &params).unwrap();
        assert_eq!(fit.coefficients[0], 0.0);
        assert_abs_diff_eq!(fit.intercept, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn unpenalized_matches_direct_solve_on_square_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = 5;
        let x = Array2::from_shape_fn((p, p), |_| rng.gen_range(-1.0..1.0) + 2.0 * rng.gen::<f64>());
        let y = Array1::from_shape_fn(p, |_| rng.gen_range(-2.0..2.0));
        let params = ElasticNetParams { lambda: 0.0, alpha: 0.3, max_iter: 200_000, tol: 1e-14, fit_intercept: false };
        let fit = fit_elastic_net(x.view(), y.view(), &params).unwrap();
        let direct = solve_dense(&x, &y);
        for j in 0..p {
            assert_abs_diff_eq!(fit.coefficients[j], direct[j], epsilon = 1e-6);
        }
    }

    #[test]
    fn ridge_matches_closed_form_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let (n, p) = (20, 5);
            let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
            let y = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
            let lambda = 0.37;
            let params = ElasticNetParams { lambda, alpha: 0.0, max_iter: 200_000, tol: 1e-14, fit_intercept: true };
            let fit = fit_elastic_net(x.view(), y.view(), &params).unwrap();

            // closed form on centered data: (Xc'Xc/n + lambda I) b = Xc'yc / n
            let x_mean = x.mean_axis(Axis(0)).unwrap();
            let y_mean = y.mean().unwrap();
            let xc = &x - &x_mean.view().insert_axis(Axis(0));
            let yc = &y - y_mean;
            let nf = n as f64;
            let mut gram = xc.t().dot(&xc) / nf;
            for j in 0..p {
                gram[[j, j]] += lambda;
            }
            let rhs = xc.t().dot(&yc) / nf;
            let direct = solve_dense(&gram, &rhs);
            for j in 0..p {
                assert_abs_diff_eq!(fit.coefficients[j], direct[j], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn training_loss_monotone_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, p) = (40, 6);
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let mut last = -1.0;
        for lambda in [0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0] {
            let params = ElasticNetParams { lambda, alpha: 0.5, max_iter: 100_000, tol: 1e-12, fit_intercept: true };
            let fit = fit_elastic_net(x.view(), y.view(), &params).unwrap();
            let loss = training_mse(x.view(), y.view(), &fit);
            assert!(loss + 1e-12 >= last, "loss decreased from {last} to {loss} at lambda {lambda}");
            last = loss;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[1.0], [f64::NAN]];
        let y = array![1.0, 2.0];
        assert!(matches!(
            fit_elastic_net(x.view(), y.view(), &ElasticNetParams::default()),
            Err(RewtsError::Numeric(_))
        ));
        let x = array![[1.0]];
        let y = array![1.0, 2.0];
        assert!(matches!(
            fit_elastic_net(x.view(), y.view(), &ElasticNetParams::default()),
            Err(RewtsError::Shape(_))
        ));
        let params = ElasticNetParams { alpha: 1.5, ..Default::default() };
        assert!(fit_elastic_net(array![[1.0]].view(), array![1.0].view(), &params).is_err());
    }

    #[test]
    fn non_convergence_sets_flag_without_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((30, 8), |_| rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(30, |_| rng.gen_range(-1.0..1.0));
        let params = ElasticNetParams { lambda: 0.0, alpha: 0.5, max_iter: 1, tol: 1e-15, fit_intercept: true };
        let fit = fit_elastic_net(x.view(), y.view(), &params).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn constant_column_is_skipped() {
        let x = array![[1.0, 3.0], [1.0, 4.0], [1.0, 5.0]];
        let y = array![6.0, 8.0, 10.0];
        let fit = fit_elastic_net(x.view(), y.view(), &tight(10_000)).unwrap();
        assert_eq!(fit.coefficients[0], 0.0);
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-8);
    }
}
