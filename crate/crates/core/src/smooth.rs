//! Kernels of the form `1 / (1 + h(x, y))`, reduced to a handful of
//! exponential-kernel sketches through a sparse exponential sum for `1/x`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::kde::{build_kde, kde_min_points, DpKdeSketch, KdeConfig, DEFAULT_GATE_CONSTANT};
use crate::kernel::Kernel;
use crate::onedim::Noise;
use crate::privacy::RngStream;
use crate::projection::{choose_kde_projection_dim, Projection, ProjectionKind, ProjectionSpec, DEFAULT_DIM_CONSTANT};
use crate::scalar::Scalar;

/// Step sizes tried by [`exp_sum_approx`], largest (fewest terms) first.
const STEPS: [f64; 6] = [2.0, 1.5, 1.0, 0.75, 0.5, 0.25];
const CHECK_POINTS: usize = 10_000;

/// `g(x) = sum_j w_j exp(-t_j x)`, a uniform approximation of `1/x` on `x >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpSumApprox {
    pub alpha: f64,
    pub step: f64,
    /// `(w_j, t_j)` pairs, both positive.
    pub terms: Vec<(f64, f64)>,
}

impl ExpSumApprox {
    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(w, t)| w * (-t * x).exp()).sum()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest `w_j exp(-t_j)`: how much one sub-sketch's error can be amplified.
    pub fn max_weight(&self) -> f64 {
        self.terms.iter().map(|&(w, t)| w * (-t).exp()).fold(0.0, f64::max)
    }

    /// `(x, |g(x) - 1/x|)` at the worst of `points` geometrically spaced
    /// abscissae in `[lo, hi]`.
    pub fn sup_error(&self, lo: f64, hi: f64, points: usize) -> (f64, f64) {
        let ratio = (hi / lo).ln() / (points.max(2) - 1) as f64;
        (0..points.max(2))
            .map(|i| {
                let x = lo * (ratio * i as f64).exp();
                (x, (self.eval(x) - 1.0 / x).abs())
            })
            .fold((lo, 0.0), |a, b| if b.1 > a.1 { b } else { a })
    }
}

/// Trapezoid rule on `1/x = int exp(-x e^s + s) ds` with nodes `t = e^s`
/// and weights `w = step * e^s`.
///
/// Nodes step down from the top of the range. The range keeps each
/// truncated tail below `alpha / 8` for
/// all `x >= 1`. The coarsest step whose sup error on `[1, 10/alpha^2]`
/// stays within `alpha / 2` is used.
pub fn exp_sum_approx(alpha: f64) -> Result<ExpSumApprox> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let s_min = (alpha / 8.0).ln();
    let s_max = (8.0 / alpha).ln().ln();
    let hi = 10.0 / (alpha * alpha);
    let mut worst = (1.0, f64::INFINITY);
    for step in STEPS {
        let count = ((s_max - s_min) / step).ceil() as usize + 1;
        let terms = (0..count)
            .map(|j| {
                let t = (s_max - j as f64 * step).exp();
                (step * t, t)
            })
            .collect();
        let approx = ExpSumApprox { alpha, step, terms };
        let (x, err) = approx.sup_error(1.0, hi, CHECK_POINTS);
        if err <= alpha / 2.0 {
            return Ok(approx);
        }
        if err < worst.1 {
            worst = (x, err);
        }
    }
    Err(Error::Internal(format!(
        "exponential sum for alpha = {alpha} failed its sup check: error {} at x = {}",
        worst.1, worst.0
    )))
}

/// Build options for [`build_smooth_kde`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothConfig {
    pub alpha: f64,
    /// JL map for the l2 kernels; ignored for `inv1p-l1`.
    pub projection: Option<ProjectionKind>,
    pub projection_dim: Option<usize>,
    /// Feature count of every sub-sketch; defaults to `ceil(8 / alpha^2)`.
    pub features: Option<usize>,
    pub gate_constant: f64,
    pub noise: Noise,
}

impl SmoothConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            projection: Some(ProjectionKind::GaussianJl),
            projection_dim: None,
            features: None,
            gate_constant: DEFAULT_GATE_CONSTANT,
            noise: Noise::On,
        }
    }

    pub fn with_projection(mut self, kind: Option<ProjectionKind>) -> Self {
        self.projection = kind;
        self
    }

    pub fn with_projection_dim(mut self, k: usize) -> Self {
        self.projection_dim = Some(k);
        self
    }

    pub fn with_features(mut self, d: usize) -> Self {
        self.features = Some(d);
        self
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }
}

/// Smallest dataset a smooth sketch accepts: the KDE requirement with
/// `alpha` replaced by `alpha / ln(1/alpha)`.
pub fn smooth_min_points(alpha: f64, epsilon: f64, gate_constant: f64) -> usize {
    kde_min_points(alpha / (1.0 / alpha).ln().max(1.0), epsilon, gate_constant)
}

/// Public parameters of a [`SmoothKdeSketch`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothHeader {
    pub kernel: Kernel,
    pub n: usize,
    pub input_dim: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub projection: Option<ProjectionSpec>,
    pub stream: RngStream,
    pub noise_off: bool,
}

/// One exponential-kernel sketch per term of the exponential sum.
#[derive(Debug, Clone)]
pub struct SmoothKdeSketch<T> {
    header: SmoothHeader,
    approx: ExpSumApprox,
    subs: Vec<DpKdeSketch<T>>,
    projection: Option<Projection<T>>,
}

impl<T: Scalar> PartialEq for SmoothKdeSketch<T> {
    fn eq(&self, other: &Self) -> bool {
        self.header == other.header && self.approx == other.approx && self.subs == other.subs
    }
}

/// Factor applied to points for term `t`: `e^{-t h(x, y)}` equals the base
/// kernel at `(c x, c y)`.
fn term_scale(kernel: Kernel, t: f64) -> f64 {
    match kernel {
        Kernel::Inv1pL2Sq => t.sqrt(),
        _ => t,
    }
}

/// Builds an `epsilon`-DP sketch of `(1/n) sum_x 1 / (1 + h(x, y))`.
///
/// Each of the `J` sub-sketches spends `epsilon / J`.
pub fn build_smooth_kde<T: Scalar>(
    dataset: &Dataset<T>,
    kernel: Kernel,
    epsilon: f64,
    config: &SmoothConfig,
    stream: RngStream,
) -> Result<SmoothKdeSketch<T>> {
    if !kernel.is_smooth() {
        return Err(Error::param(format!("kernel {} is not of the form 1 / (1 + h)", kernel.name())));
    }
    let alpha = config.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    let n = dataset.len();
    let required = smooth_min_points(alpha, epsilon, config.gate_constant);
    if n < required {
        return Err(Error::DatasetTooSmall {
            n,
            required,
            bound: format!("n >= {} ln(1/alpha) / (alpha eps^2)", config.gate_constant),
        });
    }
    let approx = exp_sum_approx(alpha)?;
    let d = dataset.dim();

    let projection = match config.projection {
        Some(kind) if !kernel.is_l1() => {
            let k = match config.projection_dim {
                Some(k) => k,
                None => choose_kde_projection_dim(kernel, kind, alpha, DEFAULT_DIM_CONSTANT)?,
            };
            if k >= d {
                None
            } else {
                Some(Projection::new(ProjectionSpec::new(kind, d, k, stream.child(0).seed)?))
            }
        }
        _ => None,
    };
    let projected = match &projection {
        Some(p) => p.apply_dataset(dataset)?,
        None => dataset.clone(),
    };

    let base = kernel.exponential_counterpart();
    let sub_eps = epsilon / approx.len() as f64;
    let mut sub_config = KdeConfig::new(alpha).without_gate().with_noise(config.noise);
    sub_config.features = config.features;
    let subs = approx
        .terms
        .par_iter()
        .enumerate()
        .map(|(j, &(_, t))| {
            let scaled = projected.scaled(T::lit(term_scale(kernel, t)));
            build_kde(&scaled, base, sub_eps, &sub_config, stream.child(j as u64 + 1))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SmoothKdeSketch {
        header: SmoothHeader {
            kernel,
            n,
            input_dim: d,
            epsilon,
            alpha,
            projection: projection.as_ref().map(|p| *p.spec()),
            stream,
            noise_off: config.noise.is_off(),
        },
        approx,
        subs,
        projection,
    })
}

impl<T: Scalar> SmoothKdeSketch<T> {
    pub(crate) fn from_parts(header: SmoothHeader, approx: ExpSumApprox, subs: Vec<DpKdeSketch<T>>) -> Result<Self> {
        if subs.len() != approx.len() {
            return Err(Error::Format("sub-sketch count does not match the exponential sum".into()));
        }
        let projection = header.projection.map(Projection::new);
        Ok(Self { header, approx, subs, projection })
    }

    pub fn header(&self) -> &SmoothHeader {
        &self.header
    }

    pub fn approx(&self) -> &ExpSumApprox {
        &self.approx
    }

    pub fn sub_sketches(&self) -> &[DpKdeSketch<T>] {
        &self.subs
    }

    /// Private estimate of `(1/n) sum_x 1 / (1 + h(x, y))`.
    pub fn query_smooth_kde(&self, y: &[T]) -> Result<T> {
        check_dim(self.header.input_dim, y.len())?;
        let y = match &self.projection {
            Some(p) => p.apply(y)?,
            None => y.to_vec(),
        };
        let mut total = 0.0;
        for (sub, &(w, t)) in self.subs.iter().zip(&self.approx.terms) {
            let c = T::lit(term_scale(self.header.kernel, t));
            let yj: Vec<T> = y.iter().map(|&v| v * c).collect();
            total += w * (-t).exp() * sub.query_kde(&yj)?.as_f64();
        }
        Ok(T::lit(total))
    }
}
