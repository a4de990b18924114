//! d-dimensional l1 and l_p^p distance queries as sums of independent
//! one-dimensional trees, and l2 queries through the l2 -> l1 embedding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::onedim::{build_tree_with, Noise, NoisyTree};
use crate::privacy::{normalize_domain, DomainPromise, PrivacyBudget, RngStream};
use crate::projection::{embed_l2_dataset, embed_point, Projection, ProjectionSpec};
use crate::scalar::Scalar;

/// Public parameters of an [`L1Structure`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Header {
    pub budget: PrivacyBudget,
    pub per_tree_epsilon: f64,
    pub promise: DomainPromise,
    pub alpha: f64,
    pub p: f64,
    pub stream: RngStream,
    pub clipped: usize,
    pub noise_off: bool,
}

/// One noisy tree per coordinate, each on its own share of the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Structure<T> {
    header: L1Header,
    trees: Vec<NoisyTree<T>>,
}

/// Builds the per-coordinate trees. Coordinate `i` draws its noise from
/// `stream.child(i)`.
pub fn build_l1<T: Scalar>(
    dataset: &Dataset<T>,
    budget: PrivacyBudget,
    alpha: f64,
    promise: &DomainPromise,
    p: f64,
    stream: RngStream,
    noise: Noise,
) -> Result<L1Structure<T>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::param(format!("p must be at least 1, got {p}")));
    }
    check_dim(promise.dim, dataset.dim())?;
    let d = dataset.dim();
    let per_tree_epsilon = budget.split(d)?;
    let normalized = normalize_domain(dataset, promise)?;
    let resolution = dataset.len().max(1);
    let trees = (0..d)
        .into_par_iter()
        .map(|i| {
            let column = normalized.data.column(i);
            let mut rng = stream.child(i as u64).rng();
            build_tree_with(&column, resolution, promise.radius, per_tree_epsilon, &mut rng, noise)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(L1Structure {
        header: L1Header {
            budget,
            per_tree_epsilon,
            promise: *promise,
            alpha,
            p,
            stream,
            clipped: normalized.clipped,
            noise_off: noise.is_off(),
        },
        trees,
    })
}

impl<T: Scalar> L1Structure<T> {
    pub(crate) fn from_parts(header: L1Header, trees: Vec<NoisyTree<T>>) -> Result<Self> {
        if trees.len() != header.promise.dim {
            return Err(Error::Format(format!("expected {} trees, found {}", header.promise.dim, trees.len())));
        }
        Ok(Self { header, trees })
    }

    pub fn header(&self) -> &L1Header {
        &self.header
    }

    pub fn trees(&self) -> &[NoisyTree<T>] {
        &self.trees
    }

    pub fn dim(&self) -> usize {
        self.trees.len()
    }

    pub fn per_tree_epsilon(&self) -> f64 {
        self.header.per_tree_epsilon
    }

    pub fn p(&self) -> f64 {
        self.header.p
    }

    /// Private estimate of `sum_x ||x - y||_1`.
    pub fn query_l1(&self, y: &[T]) -> Result<T> {
        self.query_with_p(y, 1.0)
    }

    /// Private estimate of `sum_x ||x - y||_p^p`. `p` must match the build.
    pub fn query_lpp(&self, y: &[T], p: f64) -> Result<T> {
        if p != self.header.p {
            return Err(Error::param(format!("structure was built for p = {}, queried with p = {p}", self.header.p)));
        }
        self.query_with_p(y, p)
    }

    /// Answers with this structure's own `p`.
    pub fn query(&self, y: &[T]) -> Result<T> {
        self.query_with_p(y, self.header.p)
    }

    fn query_with_p(&self, y: &[T], p: f64) -> Result<T> {
        check_dim(self.dim(), y.len())?;
        let r = T::lit(self.header.promise.radius);
        let mut total = T::zero();
        for (tree, &yi) in self.trees.iter().zip(y) {
            total += tree.lp_distance_query(yi / r, self.header.alpha, p)?;
        }
        Ok(total)
    }
}

/// Public parameters of an [`L2Structure`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2Header {
    pub input_promise: DomainPromise,
    pub spec: ProjectionSpec,
    pub clip: f64,
    pub clipped_points: usize,
    pub clipped_coords: usize,
}

/// l2 distance queries: an l1 structure over the embedded dataset.
#[derive(Debug, Clone)]
pub struct L2Structure<T> {
    header: L2Header,
    projection: Projection<T>,
    inner: L1Structure<T>,
}

/// Embeds the dataset with a public l2 -> l1 map and builds an
/// [`L1Structure`] on the result. `out_dim` overrides the default
/// embedding dimension.
pub fn build_l2<T: Scalar>(
    dataset: &Dataset<T>,
    budget: PrivacyBudget,
    alpha: f64,
    promise: &DomainPromise,
    stream: RngStream,
    noise: Noise,
    out_dim: Option<usize>,
) -> Result<L2Structure<T>> {
    // The projection seed is fixed before any data is touched.
    let proj_seed = stream.child(u64::MAX).seed;
    let emb = embed_l2_dataset(dataset, alpha, promise, proj_seed, out_dim)?;
    let inner = build_l1(&emb.data, budget, alpha, &emb.promise, 1.0, stream, noise)?;
    Ok(L2Structure {
        header: L2Header {
            input_promise: *promise,
            spec: emb.spec,
            clip: emb.clip,
            clipped_points: emb.clipped_points,
            clipped_coords: emb.clipped_coords,
        },
        projection: Projection::new(emb.spec),
        inner,
    })
}

impl<T: Scalar> PartialEq for L2Structure<T> {
    fn eq(&self, other: &Self) -> bool {
        self.header == other.header && self.inner == other.inner
    }
}

impl<T: Scalar> L2Structure<T> {
    pub(crate) fn from_parts(header: L2Header, inner: L1Structure<T>) -> Result<Self> {
        if inner.dim() != header.spec.out_dim {
            return Err(Error::Format("embedding dimension does not match the l1 structure".into()));
        }
        Ok(Self { projection: Projection::new(header.spec), header, inner })
    }

    pub fn header(&self) -> &L2Header {
        &self.header
    }

    pub fn inner(&self) -> &L1Structure<T> {
        &self.inner
    }

    /// Private estimate of `sum_x ||x - y||_2`.
    pub fn query_l2(&self, y: &[T]) -> Result<T> {
        let (e, _) = embed_point(&self.projection, self.header.clip, y)?;
        self.inner.query_l1(&e)
    }
}
