//! Exact brute-force answers and error summaries.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::kernel::Kernel;
use crate::scalar::{KahanSum, Scalar};

/// Distance functions with an exact oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceFn {
    L1,
    L2,
    L2Sq,
    /// `||x - y||_p^p`
    Lpp(f64),
}

impl DistanceFn {
    pub fn eval(self, x: &[f64], y: &[f64]) -> f64 {
        let it = x.iter().zip(y).map(|(a, b)| (a - b).abs());
        match self {
            DistanceFn::L1 => it.sum(),
            DistanceFn::L2 => it.map(|v| v * v).sum::<f64>().sqrt(),
            DistanceFn::L2Sq => it.map(|v| v * v).sum(),
            DistanceFn::Lpp(p) => it.map(|v| v.powf(p)).sum(),
        }
    }
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// `sum_x f(x, y)` in double precision with compensated summation.
pub fn exact_distance_sum<T: Scalar>(dataset: &Dataset<T>, y: &[T], f: DistanceFn) -> Result<f64> {
    check_dim(dataset.dim(), y.len())?;
    let y = to_f64(y);
    let mut row = vec![0.0; dataset.dim()];
    let mut acc = KahanSum::<f64>::new();
    for x in dataset.rows() {
        row.iter_mut().zip(x).for_each(|(r, v)| *r = v.as_f64());
        acc.add(f.eval(&row, &y));
    }
    Ok(acc.value())
}

/// `(1/n) sum_x k(x, y)`; zero for an empty dataset.
pub fn exact_kde<T: Scalar>(dataset: &Dataset<T>, y: &[T], kernel: Kernel) -> Result<f64> {
    check_dim(dataset.dim(), y.len())?;
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let y = to_f64(y);
    let mut row = vec![0.0; dataset.dim()];
    let mut acc = KahanSum::<f64>::new();
    for x in dataset.rows() {
        row.iter_mut().zip(x).for_each(|(r, v)| *r = v.as_f64());
        acc.add(kernel.eval(&row, &y));
    }
    Ok(acc.value() / dataset.len() as f64)
}

/// Error summary in the `E|Z - Z'| <= (M - 1) Z' + A` form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub abs_errors: Vec<f64>,
    pub mean_abs_error: f64,
    /// Mean of `|Z - Z'| / Z'` over queries with `Z' > 0`.
    pub relative_error: f64,
    /// Fitted multiplicative factor `M >= 1`.
    pub multiplicative: f64,
    /// Fitted additive error `A >= 0`.
    pub additive: f64,
}

/// Compares estimates `Z` to truths `Z'` and fits `|Z - Z'| ~ (M-1) Z' + A`
/// by nonnegative least squares.
pub fn error_report(estimates: &[f64], truths: &[f64]) -> Result<ErrorReport> {
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch { expected: truths.len(), got: estimates.len() });
    }
    if estimates.is_empty() {
        return Err(Error::param("error report needs at least one query"));
    }
    let abs_errors: Vec<f64> = estimates.iter().zip(truths).map(|(e, t)| (e - t).abs()).collect();
    let n = abs_errors.len() as f64;
    let mean_abs_error = abs_errors.iter().sum::<f64>() / n;
    let rel: Vec<f64> = abs_errors.iter().zip(truths).filter(|(_, &t)| t > 0.0).map(|(e, t)| e / t).collect();
    let relative_error = if rel.is_empty() { 0.0 } else { rel.iter().sum::<f64>() / rel.len() as f64 };
    let (a, b) = nnls2(truths, &abs_errors);
    Ok(ErrorReport { abs_errors, mean_abs_error, relative_error, multiplicative: 1.0 + a, additive: b })
}

/// Minimises `sum (e_i - a z_i - b)^2` over `a, b >= 0`.
fn nnls2(z: &[f64], e: &[f64]) -> (f64, f64) {
    let n = z.len() as f64;
    let sz: f64 = z.iter().sum();
    let se: f64 = e.iter().sum();
    let szz: f64 = z.iter().map(|v| v * v).sum();
    let sze: f64 = z.iter().zip(e).map(|(a, b)| a * b).sum();
    let rss = |a: f64, b: f64| z.iter().zip(e).map(|(zi, ei)| (ei - a * zi - b).powi(2)).sum::<f64>();

    // Boundary candidates first, so exact ties prefer the simpler fit.
    let mut best = (0.0, (se / n).max(0.0));
    let mut best_rss = rss(best.0, best.1);
    let mut consider = |a: f64, b: f64| {
        let r = rss(a, b);
        if r < best_rss * (1.0 - 1e-12) {
            best = (a, b);
            best_rss = r;
        }
    };
    if szz > 0.0 {
        consider((sze / szz).max(0.0), 0.0);
    }
    let det = n * szz - sz * sz;
    if det.abs() > 1e-12 * n * szz.max(1e-300) {
        let a = (n * sze - sz * se) / det;
        let b = (se - a * sz) / n;
        if a >= 0.0 && b >= 0.0 {
            consider(a, b);
        }
    }
    best
}
