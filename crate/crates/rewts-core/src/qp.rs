//! The simplex-constrained convex quadratic program behind the ensemble
//! weights.
//!
//! From per-anchor forecast matrices `M_k` (horizon x models) and target
//! windows `y_k` the program
//!
//! ```text
//! minimize (1/2) w' Q w - c' w,   Q = sum_k M_k' M_k,  c = sum_k M_k' y_k
//! subject to w >= 0, sum w = 1
//! ```
//!
//! is assembled and solved. Minimizing it is equivalent, up to a constant,
//! to the summed squared forecast error of the weighted ensemble over the
//! anchors when the diagonal ridge is zero.
//!
//! The solver runs projected gradient descent with the exact sort-based
//! Euclidean projection onto the simplex and a step of `1/lambda_max(Q)`
//! from power iteration. An active-set refinement pass periodically solves
//! the equality-constrained system on the current support and adopts the
//! result when it lowers the KKT residual, so nondegenerate instances
//! finish with near-exact optima.

use ndarray::{Array1, Array2, ArrayView1};
use serde::Serialize;

use crate::error::{Result, RewtsError};

/// Relative diagonal ridge: `eps = 1e-8 * trace(Q) / m` keeps duplicate
/// models uniquely and symmetrically weighted.
pub const DEFAULT_RIDGE_REL: f64 = 1e-8;

/// Weights below this are clamped to zero on output and the vector is
/// renormalized, keeping downstream active-model lists stable.
const CLAMP_EPS: f64 = 1e-12;

/// Threshold separating active from inactive coordinates in KKT checks.
const ACTIVE_EPS: f64 = 1e-10;

/// One model ensemble's h-step forecasts from a common anchor; column `j`
/// is model `j`'s forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastMatrix {
    pub anchor: usize,
    pub values: Array2<f64>,
}

impl ForecastMatrix {
    pub fn horizon(&self) -> usize {
        self.values.nrows()
    }

    pub fn model_count(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexQp {
    /// Quadratic term including the diagonal ridge.
    q: Array2<f64>,
    c: Array1<f64>,
    ridge_eps: f64,
}

/// Solved weights on the probability simplex plus solve diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl WeightVector {
    pub fn argmax(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite weights"))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200_000 }
    }
}

/// Build the QP from per-anchor forecast matrices and target windows,
/// adding `ridge_eps` to the diagonal.
pub fn assemble_qp(
    matrices: &[ForecastMatrix],
    targets: &[Array1<f64>],
    ridge_eps: f64,
) -> Result<SimplexQp> {
    if matrices.is_empty() {
        return Err(RewtsError::Parameter("assembly needs at least one anchor".into()));
    }
    if matrices.len() != targets.len() {
        return Err(RewtsError::Shape(format!(
            "{} forecast matrices but {} target windows",
            matrices.len(),
            targets.len()
        )));
    }
    if !(ridge_eps.is_finite() && ridge_eps >= 0.0) {
        return Err(RewtsError::Parameter(format!("ridge_eps must be >= 0, got {ridge_eps}")));
    }
    let h = matrices[0].horizon();
    let m = matrices[0].model_count();
    if m == 0 || h == 0 {
        return Err(RewtsError::Shape("forecast matrices must be non-empty".into()));
    }
    let mut q = Array2::<f64>::zeros((m, m));
    let mut c = Array1::<f64>::zeros(m);
    for (mat, y) in matrices.iter().zip(targets) {
        if mat.horizon() != h || mat.model_count() != m {
            return Err(RewtsError::Shape(format!(
                "anchor {} matrix is {}x{}, expected {h}x{m}",
                mat.anchor,
                mat.horizon(),
                mat.model_count()
            )));
        }
        if y.len() != h {
            return Err(RewtsError::Shape(format!(
                "anchor {} target window has {} entries, expected {h}",
                mat.anchor,
                y.len()
            )));
        }
        if mat.values.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(RewtsError::Numeric(format!("non-finite values at anchor {}", mat.anchor)));
        }
        q += &mat.values.t().dot(&mat.values);
        c += &mat.values.t().dot(y);
    }
    // enforce exact symmetry against accumulation order effects
    let qt = q.t().to_owned();
    q = (&q + &qt) * 0.5;
    for j in 0..m {
        q[[j, j]] += ridge_eps;
    }
    Ok(SimplexQp { q, c, ridge_eps })
}

/// Assembly with the default trace-relative ridge.
pub fn assemble_qp_auto_ridge(
    matrices: &[ForecastMatrix],
    targets: &[Array1<f64>],
) -> Result<SimplexQp> {
    let raw = assemble_qp(matrices, targets, 0.0)?;
    let m = raw.model_count();
    let trace: f64 = (0..m).map(|j| raw.q[[j, j]]).sum();
    let eps = DEFAULT_RIDGE_REL * trace / m as f64;
    let mut qp = raw;
    for j in 0..m {
        qp.q[[j, j]] += eps;
    }
    qp.ridge_eps = eps;
    Ok(qp)
}

impl SimplexQp {
    /// Direct construction from an explicit `(Q, c)` pair; `Q` must be
    /// symmetric within 1e-10.
    pub fn from_parts(q: Array2<f64>, c: Array1<f64>, ridge_eps: f64) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() != c.len() || c.is_empty() {
            return Err(RewtsError::Shape("Q must be m x m matching c".into()));
        }
        if q.iter().any(|v| !v.is_finite()) || c.iter().any(|v| !v.is_finite()) {
            return Err(RewtsError::Numeric("non-finite QP coefficients".into()));
        }
        let scale = q.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        for i in 0..q.nrows() {
            for j in 0..i {
                if (q[[i, j]] - q[[j, i]]).abs() > 1e-10 * scale {
                    return Err(RewtsError::Numeric(format!(
                        "Q is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let mut q = q;
        if ridge_eps > 0.0 {
            for j in 0..q.nrows() {
                q[[j, j]] += ridge_eps;
            }
        }
        Ok(Self { q, c, ridge_eps })
    }

    pub fn model_count(&self) -> usize {
        self.c.len()
    }

    pub fn ridge_eps(&self) -> f64 {
        self.ridge_eps
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn c(&self) -> &Array1<f64> {
        &self.c
    }

    /// `(1/2) w' Q w - c' w`.
    pub fn objective(&self, w: ArrayView1<'_, f64>) -> f64 {
        0.5 * w.dot(&self.q.dot(&w)) - self.c.dot(&w)
    }

    /// Offline-inspection dump of the program and a solution.
    pub fn debug_dump(&self, solution: &WeightVector) -> serde_json::Value {
        serde_json::json!({
            "q": self.q.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            "c": self.c.to_vec(),
            "ridge_eps": self.ridge_eps,
            "weights": solution.weights,
            "kkt_residual": solution.kkt_residual,
            "iterations": solution.iterations,
        })
    }
}

/// Exact Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Maximum violation of the first-order optimality conditions at `w`.
///
/// With `g = Qw - c` and the multiplier estimate `mu = w . g`, active
/// coordinates must satisfy `g_j = mu` and inactive ones `g_j >= mu`;
/// the residual is the largest violation of either condition. Zero at an
/// exact optimum.
pub fn kkt_residual(qp: &SimplexQp, w: &[f64]) -> f64 {
    let wv = ArrayView1::from(w);
    let g = qp.q.dot(&wv) - &qp.c;
    kkt_from_gradient(w, g.as_slice().expect("contiguous"))
}

fn kkt_from_gradient(w: &[f64], g: &[f64]) -> f64 {
    let mu: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
    let mut res = 0.0f64;
    for (&wj, &gj) in w.iter().zip(g) {
        if wj > ACTIVE_EPS {
            res = res.max((gj - mu).abs());
        } else {
            res = res.max((mu - gj).max(0.0));
        }
    }
    res
}

pub fn solve_simplex_qp(qp: &SimplexQp, settings: &SolverSettings) -> Result<WeightVector> {
    solve_simplex_qp_from(qp, None, settings)
}

/// Solve starting from an optional initial feasible point.
pub fn solve_simplex_qp_from(
    qp: &SimplexQp,
    init: Option<&[f64]>,
    settings: &SolverSettings,
) -> Result<WeightVector> {
    if !(settings.tol.is_finite() && settings.tol > 0.0) {
        return Err(RewtsError::Parameter(format!("tol must be positive, got {}", settings.tol)));
    }
    let m = qp.model_count();
    if m == 1 {
        return Ok(finalize(vec![1.0], 0, kkt_residual(qp, &[1.0])));
    }
    let mut w: Vec<f64> = match init {
        Some(w0) => {
            if w0.len() != m {
                return Err(RewtsError::Shape(format!(
                    "initial point has {} entries, expected {m}",
                    w0.len()
                )));
            }
            if w0.iter().any(|v| !v.is_finite() || *v < -1e-10)
                || (w0.iter().sum::<f64>() - 1.0).abs() > 1e-8
            {
                return Err(RewtsError::Parameter("initial point is not on the simplex".into()));
            }
            project_to_simplex(w0)
        }
        None => vec![1.0 / m as f64; m],
    };

    let lipschitz = power_iteration(&qp.q, 60).max(1e-12);
    let step = 1.0 / (1.02 * lipschitz);

    let mut residual = f64::INFINITY;
    for iteration in 0..settings.max_iter {
        let wv = ArrayView1::from(&w[..]);
        let g = (qp.q.dot(&wv) - &qp.c).to_vec();
        residual = kkt_from_gradient(&w, &g);
        if residual <= settings.tol {
            return Ok(finalize(w, iteration, residual));
        }
        if iteration % 25 == 0 {
            if let Some(candidate) = polish_support(qp, &w) {
                let cv = ArrayView1::from(&candidate[..]);
                let gc = (qp.q.dot(&cv) - &qp.c).to_vec();
                let rc = kkt_from_gradient(&candidate, &gc);
                if rc < residual {
                    w = candidate;
                    residual = rc;
                    if residual <= settings.tol {
                        return Ok(finalize(w, iteration, residual));
                    }
                }
            }
        }
        let moved: Vec<f64> = w.iter().zip(&g).map(|(wj, gj)| wj - step * gj).collect();
        w = project_to_simplex(&moved);
    }
    Err(RewtsError::Convergence {
        message: format!("simplex QP solver did not reach tol {}", settings.tol),
        iterations: settings.max_iter,
        residual,
    })
}

fn finalize(mut w: Vec<f64>, iterations: usize, kkt: f64) -> WeightVector {
    for v in w.iter_mut() {
        if *v < CLAMP_EPS {
            *v = 0.0;
        }
    }
    let sum: f64 = w.iter().sum();
    if sum > 0.0 {
        for v in w.iter_mut() {
            *v /= sum;
        }
    }
    WeightVector { weights: w, iterations, kkt_residual: kkt }
}

/// Solve the equality-constrained program restricted to the support of `w`,
/// dropping negative coordinates until the solution is feasible. Returns
/// `None` when the restricted system is singular or the support empties.
fn polish_support(qp: &SimplexQp, w: &[f64]) -> Option<Vec<f64>> {
    let mut support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > ACTIVE_EPS).collect();
    if support.is_empty() {
        support = (0..w.len()).collect();
    }
    loop {
        let s = support.len();
        if s == 0 {
            return None;
        }
        // [Q_SS 1; 1' 0] [x; mu] = [c_S; 1]
        let mut a = Array2::<f64>::zeros((s + 1, s + 1));
        let mut b = Array1::<f64>::zeros(s + 1);
        for (ii, &i) in support.iter().enumerate() {
            for (jj, &j) in support.iter().enumerate() {
                a[[ii, jj]] = qp.q[[i, j]];
            }
            a[[ii, s]] = 1.0;
            a[[s, ii]] = 1.0;
            b[ii] = qp.c[i];
        }
        b[s] = 1.0;
        let x = solve_linear(a, b)?;
        if let Some(worst) = support
            .iter()
            .enumerate()
            .filter(|&(ii, _)| x[ii] < -1e-12)
            .min_by(|a, b| x[a.0].partial_cmp(&x[b.0]).expect("finite"))
            .map(|(ii, _)| ii)
        {
            support.remove(worst);
            continue;
        }
        let mut out = vec![0.0; w.len()];
        for (ii, &j) in support.iter().enumerate() {
            out[j] = x[ii].max(0.0);
        }
        let sum: f64 = out.iter().sum();
        if sum <= 0.0 {
            return None;
        }
        for v in out.iter_mut() {
            *v /= sum;
        }
        return Some(out);
    }
}

/// Gaussian elimination with partial pivoting; `None` on a singular pivot.
fn solve_linear(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    let scale = a.iter().fold(1e-30f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[[i, col]].abs().partial_cmp(&a[[j, col]].abs()).expect("finite"))?;
        if a[[pivot, col]].abs() < 1e-13 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap([col, k], [pivot, k]);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[[row, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[[row, k]] * x[k];
        }
        x[row] = s / a[[row, row]];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(x)
}

/// Largest eigenvalue estimate of a symmetric PSD matrix.
fn power_iteration(q: &Array2<f64>, iters: usize) -> f64 {
    let m = q.nrows();
    let mut v = Array1::<f64>::from_elem(m, 1.0 / (m as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let next = q.dot(&v);
        let norm = next.dot(&next).sqrt();
        if norm <= 1e-300 {
            return 0.0;
        }
        v = next / norm;
        let new_lambda = v.dot(&q.dot(&v));
        if (new_lambda - lambda).abs() <= 1e-12 * new_lambda.abs().max(1.0) {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}
