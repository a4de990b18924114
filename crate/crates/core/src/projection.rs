//! Oblivious linear maps: dense Gaussian JL, the subsampled randomized
//! Hadamard transform, and the Gaussian l2 -> l1 embedding.
//!
//! Every map is a function of its [`ProjectionSpec`] alone, so publishing
//! the spec next to a private sketch costs no privacy.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::kernel::Kernel;
use crate::privacy::{DomainKind, DomainPromise, RngStream};
use crate::scalar::Scalar;

/// Default leading constant for projection dimensions.
pub const DEFAULT_DIM_CONSTANT: f64 = 8.0;
/// Default constant in the l2 -> l1 clipping bound.
pub const DEFAULT_CLIP_CONSTANT: f64 = 4.0;
/// Smallest projection dimension ever returned by the dimension rules.
pub const MIN_PROJECTION_DIM: usize = 8;

const BETA: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const PROJECTION_STREAM: u64 = 0x7072_6f6a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionKind {
    GaussianJl,
    FastJl,
    L2ToL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub kind: ProjectionKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub seed: u64,
}

impl ProjectionSpec {
    pub fn new(kind: ProjectionKind, in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::param("projection dimensions must be positive"));
        }
        Ok(Self { kind, in_dim, out_dim, seed })
    }

    /// Input dimension after zero padding (only differs for fast JL).
    pub fn padded_dim(&self) -> usize {
        match self.kind {
            ProjectionKind::FastJl => self.in_dim.next_power_of_two(),
            _ => self.in_dim,
        }
    }

    pub fn materialize<T: Scalar>(&self) -> Projection<T> {
        Projection::new(*self)
    }
}

#[derive(Debug, Clone)]
enum Map<T> {
    /// Row-major `out_dim x in_dim`.
    Dense(Vec<T>),
    Srht { signs: Vec<T>, rows: Vec<usize> },
}

/// A materialized projection, ready to apply.
#[derive(Debug, Clone)]
pub struct Projection<T> {
    spec: ProjectionSpec,
    map: Map<T>,
}

impl<T: Scalar> Projection<T> {
    pub fn new(spec: ProjectionSpec) -> Self {
        let mut rng = RngStream::new(spec.seed, PROJECTION_STREAM).rng();
        let (k, d) = (spec.out_dim, spec.in_dim);
        let map = match spec.kind {
            ProjectionKind::GaussianJl | ProjectionKind::L2ToL1 => {
                let scale = match spec.kind {
                    ProjectionKind::GaussianJl => 1.0 / (k as f64).sqrt(),
                    _ => 1.0 / (BETA * k as f64),
                };
                let m = (0..k * d)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        T::lit(z * scale)
                    })
                    .collect();
                Map::Dense(m)
            }
            ProjectionKind::FastJl => {
                let padded = spec.padded_dim();
                let signs = (0..padded).map(|_| if rng.random::<bool>() { T::one() } else { -T::one() }).collect();
                let rows = if k <= padded {
                    index::sample(&mut rng, padded, k).into_vec()
                } else {
                    (0..k).map(|_| rng.random_range(0..padded)).collect()
                };
                Map::Srht { signs, rows }
            }
        };
        Self { spec, map }
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.spec.in_dim, x.len())?;
        let k = self.spec.out_dim;
        Ok(match &self.map {
            Map::Dense(m) => m.chunks_exact(self.spec.in_dim).map(|row| crate::scalar::dot(row, x)).collect(),
            Map::Srht { signs, rows } => {
                let mut buf = vec![T::zero(); signs.len()];
                for ((b, &v), &s) in buf.iter_mut().zip(x).zip(signs) {
                    *b = v * s;
                }
                fwht(&mut buf);
                let scale = T::one() / T::lit(k as f64).sqrt();
                rows.iter().map(|&r| buf[r] * scale).collect()
            }
        })
    }

    pub fn apply_dataset(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        check_dim(self.spec.in_dim, data.dim())?;
        data.map_rows(self.spec.out_dim, |r| self.apply(r).expect("dimension checked"))
    }

    /// The map as an explicit `out_dim x in_dim` matrix.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let (k, d) = (self.spec.out_dim, self.spec.in_dim);
        match &self.map {
            Map::Dense(m) => m.chunks_exact(d).map(|r| r.to_vec()).collect(),
            Map::Srht { signs, rows } => {
                let scale = T::one() / T::lit(k as f64).sqrt();
                rows.iter()
                    .map(|&r| {
                        (0..d)
                            .map(|j| {
                                let h = if (r & j).count_ones() % 2 == 0 { T::one() } else { -T::one() };
                                h * signs[j] * scale
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

/// In-place unnormalized Walsh-Hadamard transform; `buf.len()` is a power of two.
pub fn fwht<T: Scalar>(buf: &mut [T]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in buf.chunks_exact_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

/// Applies `spec` to one vector.
pub fn apply_projection<T: Scalar>(spec: &ProjectionSpec, x: &[T]) -> Result<Vec<T>> {
    Projection::new(*spec).apply(x)
}

/// Projection dimension that preserves KDE values of `kernel` to
/// additive error about `alpha`:
///
/// * `c ln(1/alpha) / alpha^2` for exponential / Gaussian kernels (dense map),
/// * `c ln(1/alpha)^2 / alpha^2` for the same kernels under fast JL,
/// * `c / alpha^2` for the `1 / (1 + h)` kernels (relative error).
///
/// l1 kernels have no dimensionality reduction.
pub fn choose_kde_projection_dim(kernel: Kernel, kind: ProjectionKind, alpha: f64, c: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if kernel.is_l1() {
        return Err(Error::param(format!("kernel {} has no l2 dimensionality reduction", kernel.name())));
    }
    let log = (1.0 / alpha).ln();
    let raw = if kernel.is_smooth() {
        c / (alpha * alpha)
    } else {
        match kind {
            ProjectionKind::FastJl => c * log * log / (alpha * alpha),
            _ => c * log / (alpha * alpha),
        }
    };
    Ok((raw.ceil() as usize).max(MIN_PROJECTION_DIM))
}

/// Embedding dimension for the l2 -> l1 map on `n` points at accuracy `alpha`.
pub fn l2_embedding_dim(n: usize, alpha: f64, c: f64) -> usize {
    let raw = c * (n.max(1) as f64).ln() * (1.0 / alpha).ln() / (alpha * alpha);
    (raw.ceil() as usize).max(MIN_PROJECTION_DIM)
}

/// Per-coordinate clipping bound for embedded points of a ball of diameter `r`.
pub fn l2_embedding_clip(r: f64, n: usize, k: usize, c_clip: f64) -> f64 {
    c_clip * r * ((n.max(1) * k) as f64).ln().max(1.0).sqrt() / k as f64
}

/// A dataset mapped into l1 space and shifted into a public box.
#[derive(Debug, Clone)]
pub struct L2Embedding<T> {
    pub data: Dataset<T>,
    /// `[0, 2C]^k` box the embedded points live in.
    pub promise: DomainPromise,
    pub spec: ProjectionSpec,
    pub clip: f64,
    /// Input points that had to be pulled back into the ball.
    pub clipped_points: usize,
    /// Embedded coordinates that exceeded `[-C, C]`.
    pub clipped_coords: usize,
}

/// Embeds a dataset from an l2 ball into a box where l1 distances
/// approximate the original l2 distances.
pub fn embed_l2_dataset<T: Scalar>(
    dataset: &Dataset<T>,
    alpha: f64,
    promise: &DomainPromise,
    seed: u64,
    out_dim: Option<usize>,
) -> Result<L2Embedding<T>> {
    if promise.kind != DomainKind::L2Ball {
        return Err(Error::param("l2 embedding needs an l2-ball promise"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    check_dim(promise.dim, dataset.dim())?;
    let n = dataset.len();
    let k = out_dim.unwrap_or_else(|| l2_embedding_dim(n, alpha, DEFAULT_DIM_CONSTANT));
    let spec = ProjectionSpec::new(ProjectionKind::L2ToL1, dataset.dim(), k, seed)?;
    let proj = Projection::new(spec);
    let clip = l2_embedding_clip(promise.radius, n, k, DEFAULT_CLIP_CONSTANT);
    let mut clipped_points = 0;
    let mut clipped_coords = 0;
    let data = dataset.map_rows(k, |row| {
        let mut v = row.to_vec();
        clipped_points += promise.clip(&mut v);
        let (e, c) = embed_point(&proj, clip, &v).expect("dimension checked");
        clipped_coords += c;
        e
    })?;
    Ok(L2Embedding {
        data,
        promise: DomainPromise::boxed(2.0 * clip, k)?,
        spec,
        clip,
        clipped_points,
        clipped_coords,
    })
}

/// Maps one point (or query) with the shared embedding: project, clip
/// each coordinate to `[-C, C]`, shift by `C`. Returns the number of
/// clipped coordinates alongside.
pub fn embed_point<T: Scalar>(proj: &Projection<T>, clip: f64, x: &[T]) -> Result<(Vec<T>, usize)> {
    let c = T::lit(clip);
    let mut clipped = 0;
    let out = proj
        .apply(x)?
        .into_iter()
        .map(|v| {
            let w = v.max(-c).min(c);
            if w != v {
                clipped += 1;
            }
            w + c
        })
        .collect();
    Ok((out, clipped))
}
