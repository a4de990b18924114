//! Private kernel density sketches: the mean random Fourier feature
//! vector of the dataset, released with Laplace noise.

use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::kernel::Kernel;
use crate::onedim::Noise;
use crate::privacy::{draw_laplace, RngStream};
use crate::projection::{choose_kde_projection_dim, Projection, ProjectionKind, ProjectionSpec, DEFAULT_DIM_CONSTANT};
use crate::scalar::Scalar;

/// Default constant `c'` in the size requirement `n >= c' / (alpha eps^2)`.
pub const DEFAULT_GATE_CONSTANT: f64 = 100.0;

/// Default feature count `ceil(8 / alpha^2)`.
pub fn default_feature_count(alpha: f64) -> usize {
    (8.0 / (alpha * alpha)).ceil() as usize
}

/// Smallest dataset a KDE sketch accepts at `(alpha, epsilon)`.
pub fn kde_min_points(alpha: f64, epsilon: f64, gate_constant: f64) -> usize {
    (gate_constant / (alpha * epsilon * epsilon)).ceil() as usize
}

/// Replace-one L1 sensitivity of the mean feature vector.
pub fn feature_mean_sensitivity(features: usize, n: usize) -> f64 {
    2.0 * (2.0 * features as f64).sqrt() / n as f64
}

/// Public description of a random Fourier feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMapSpec {
    pub kernel: Kernel,
    pub dim: usize,
    pub features: usize,
    pub seed: u64,
}

impl FeatureMapSpec {
    /// Only the exponential-type kernels have a direct feature map.
    pub fn new(kernel: Kernel, dim: usize, features: usize, seed: u64) -> Result<Self> {
        if kernel.is_smooth() {
            return Err(Error::param(format!("kernel {} has no random feature map; use the smooth sketch", kernel.name())));
        }
        if dim == 0 || features == 0 {
            return Err(Error::param("feature maps need positive input dimension and feature count"));
        }
        Ok(Self { kernel, dim, features, seed })
    }
}

/// `phi(x)_i = sqrt(2/D) cos(<w_i, x> + b_i)`, with `E <phi(x), phi(y)> = k(x, y)`.
///
/// Frequencies are Gaussian `N(0, 2I)` for the Gaussian kernel, multivariate
/// Cauchy (`z / |u|` with Gaussian `z`, `u`) for `exp(-||.||_2)` and
/// independent standard Cauchy coordinates for `exp(-||.||_1)`.
#[derive(Debug, Clone)]
pub struct FeatureMap<T> {
    spec: FeatureMapSpec,
    /// Row-major `features x dim`.
    omega: Vec<T>,
    phase: Vec<T>,
    amp: T,
}

const FEATURE_STREAM: u64 = 0x0072_6666;

impl<T: Scalar> FeatureMap<T> {
    pub fn new(spec: FeatureMapSpec) -> Self {
        let mut rng = RngStream::new(spec.seed, FEATURE_STREAM).rng();
        let (dd, d) = (spec.features, spec.dim);
        let mut omega = Vec::with_capacity(dd * d);
        let mut phase = Vec::with_capacity(dd);
        let cauchy = Cauchy::new(0.0, 1.0).expect("valid Cauchy parameters");
        for _ in 0..dd {
            match spec.kernel {
                Kernel::Gaussian => {
                    for _ in 0..d {
                        let z: f64 = rng.sample(StandardNormal);
                        omega.push(T::lit(z * std::f64::consts::SQRT_2));
                    }
                }
                Kernel::Exponential => {
                    let u: f64 = rng.sample(StandardNormal);
                    let inv = 1.0 / u.abs().max(f64::MIN_POSITIVE);
                    for _ in 0..d {
                        let z: f64 = rng.sample(StandardNormal);
                        omega.push(T::lit(z * inv));
                    }
                }
                _ => {
                    for _ in 0..d {
                        omega.push(T::lit(cauchy.sample(&mut rng)));
                    }
                }
            }
            phase.push(T::lit(rng.random::<f64>() * std::f64::consts::TAU));
        }
        Self { spec, omega, phase, amp: T::lit((2.0 / dd as f64).sqrt()) }
    }

    pub fn spec(&self) -> &FeatureMapSpec {
        &self.spec
    }

    pub fn features(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.spec.dim, x.len())?;
        Ok(self.features_unchecked(x))
    }

    fn features_unchecked(&self, x: &[T]) -> Vec<T> {
        self.omega
            .chunks_exact(self.spec.dim)
            .zip(&self.phase)
            .map(|(w, &b)| self.amp * (crate::scalar::dot(w, x) + b).cos())
            .collect()
    }
}

/// Features of one point under `spec`.
pub fn rff_features<T: Scalar>(spec: &FeatureMapSpec, x: &[T]) -> Result<Vec<T>> {
    FeatureMap::new(*spec).features(x)
}

/// Build options for [`build_kde`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeConfig {
    pub alpha: f64,
    /// Optional JL map applied to data and queries before the features.
    pub projection: Option<ProjectionKind>,
    /// Overrides the projection dimension rule.
    pub projection_dim: Option<usize>,
    /// Overrides `ceil(8 / alpha^2)`.
    pub features: Option<usize>,
    pub gate_constant: f64,
    /// Whether to enforce the minimum dataset size.
    pub enforce_gate: bool,
    pub noise: Noise,
}

impl KdeConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            projection: None,
            projection_dim: None,
            features: None,
            gate_constant: DEFAULT_GATE_CONSTANT,
            enforce_gate: true,
            noise: Noise::On,
        }
    }

    pub fn with_projection(mut self, kind: ProjectionKind) -> Self {
        self.projection = Some(kind);
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

    pub fn without_gate(mut self) -> Self {
        self.enforce_gate = false;
        self
    }
}

/// Public parameters of a [`DpKdeSketch`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeHeader {
    pub kernel: Kernel,
    pub n: usize,
    pub input_dim: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub feature_map: FeatureMapSpec,
    pub projection: Option<ProjectionSpec>,
    pub noise_scale: f64,
    pub stream: RngStream,
    pub noise_off: bool,
}

/// Noisy mean feature vector plus everything needed to replay queries.
#[derive(Debug, Clone)]
pub struct DpKdeSketch<T> {
    header: KdeHeader,
    noisy_mean: Vec<T>,
    projection: Option<Projection<T>>,
    map: FeatureMap<T>,
}

impl<T: Scalar> PartialEq for DpKdeSketch<T> {
    fn eq(&self, other: &Self) -> bool {
        self.header == other.header && self.noisy_mean == other.noisy_mean
    }
}

/// Builds an `epsilon`-DP sketch of `(1/n) sum_x k(x, y)`.
///
/// The projection seed, frequency seed and noise stream are all derived
/// from `stream` before the data is read.
pub fn build_kde<T: Scalar>(
    dataset: &Dataset<T>,
    kernel: Kernel,
    epsilon: f64,
    config: &KdeConfig,
    stream: RngStream,
) -> Result<DpKdeSketch<T>> {
    if kernel.is_smooth() {
        return Err(Error::param(format!("kernel {} needs the smooth sketch", kernel.name())));
    }
    let alpha = config.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    let n = dataset.len();
    if config.enforce_gate {
        let required = kde_min_points(alpha, epsilon, config.gate_constant);
        if n < required {
            return Err(Error::DatasetTooSmall {
                n,
                required,
                bound: format!("n >= {} / (alpha eps^2)", config.gate_constant),
            });
        }
    } else if n == 0 {
        return Err(Error::DatasetTooSmall { n, required: 1, bound: "non-empty dataset".into() });
    }

    let d = dataset.dim();
    let proj_seed = stream.child(0).seed;
    let freq_seed = stream.child(1).seed;
    let mut noise_rng = stream.child(2).rng();

    let projection = match config.projection {
        None => None,
        Some(kind) => {
            let k = match config.projection_dim {
                Some(k) => k,
                None => choose_kde_projection_dim(kernel, kind, alpha, DEFAULT_DIM_CONSTANT)?,
            };
            if kernel.is_l1() {
                return Err(Error::param(format!("kernel {} has no l2 dimensionality reduction", kernel.name())));
            }
            // A map that does not reduce the dimension only adds distortion.
            if k >= d {
                None
            } else {
                Some(Projection::new(ProjectionSpec::new(kind, d, k, proj_seed)?))
            }
        }
    };
    let feat_dim = projection.as_ref().map_or(d, |p| p.spec().out_dim);
    let features = config.features.unwrap_or_else(|| default_feature_count(alpha));
    let map = FeatureMap::new(FeatureMapSpec::new(kernel, feat_dim, features, freq_seed)?);

    let sums = dataset
        .as_slice()
        .par_chunks(d * 64)
        .map(|chunk| {
            let mut acc = vec![0.0f64; features];
            for x in chunk.chunks_exact(d) {
                let phi = match &projection {
                    Some(p) => map.features_unchecked(&p.apply(x).expect("dimension checked")),
                    None => map.features_unchecked(x),
                };
                for (a, v) in acc.iter_mut().zip(phi) {
                    *a += v.as_f64();
                }
            }
            acc
        })
        .reduce(
            || vec![0.0f64; features],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let noise_scale = feature_mean_sensitivity(features, n) / epsilon;
    let noisy_mean = sums
        .into_iter()
        .map(|s| {
            let mut m = s / n as f64;
            if !config.noise.is_off() {
                m += draw_laplace(noise_scale, &mut noise_rng);
            }
            T::lit(m)
        })
        .collect();

    Ok(DpKdeSketch {
        header: KdeHeader {
            kernel,
            n,
            input_dim: d,
            epsilon,
            alpha,
            feature_map: *map.spec(),
            projection: projection.as_ref().map(|p| *p.spec()),
            noise_scale,
            stream,
            noise_off: config.noise.is_off(),
        },
        noisy_mean,
        projection,
        map,
    })
}

impl<T: Scalar> DpKdeSketch<T> {
    pub(crate) fn from_parts(header: KdeHeader, noisy_mean: Vec<T>) -> Result<Self> {
        if noisy_mean.len() != header.feature_map.features {
            return Err(Error::Format("feature vector length does not match the header".into()));
        }
        let projection = header.projection.map(Projection::new);
        let map = FeatureMap::new(header.feature_map);
        Ok(Self { header, noisy_mean, projection, map })
    }

    pub fn header(&self) -> &KdeHeader {
        &self.header
    }

    pub fn noisy_mean(&self) -> &[T] {
        &self.noisy_mean
    }

    /// Dimension the features are computed in (after any projection).
    pub fn internal_dim(&self) -> usize {
        self.header.feature_map.dim
    }

    /// Private estimate of `(1/n) sum_x k(x, y)`, clamped to `[-0.1, 1.1]`.
    pub fn query_kde(&self, y: &[T]) -> Result<T> {
        check_dim(self.header.input_dim, y.len())?;
        let phi = match &self.projection {
            Some(p) => self.map.features_unchecked(&p.apply(y)?),
            None => self.map.features_unchecked(y),
        };
        let v = crate::scalar::dot(&phi, &self.noisy_mean);
        Ok(v.max(T::lit(-0.1)).min(T::lit(1.1)))
    }
}
