//! Private nearest-centroid classification: one noisy-moments release per
//! class, predicting the class whose noisy mean is closest to the query.
//!
//! Classes partition the training set, so every class spends the whole
//! budget and the classifier as a whole is still `(epsilon, delta)`-DP.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::l2sq::{build_l2sq, NoisyMoments};
use crate::onedim::Noise;
use crate::privacy::{DomainPromise, PrivacyBudget, RngStream};
use crate::projection::{Projection, ProjectionKind, ProjectionSpec};
use crate::scalar::{sq_dist, Scalar};

/// Training options for [`fit_classifier`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// Output dimension of a dense JL map applied before everything else.
    pub projection_dim: Option<usize>,
    /// Coordinates are clipped to `[-clip, clip]`.
    pub clip: f64,
    pub noise: Noise,
}

impl ClassifierConfig {
    pub fn new(clip: f64) -> Self {
        Self { projection_dim: None, clip, noise: Noise::On }
    }

    /// Clip threshold covering a box or ball promise centred at the origin.
    pub fn from_promise(promise: &DomainPromise) -> Self {
        Self::new(promise.radius)
    }

    pub fn with_projection_dim(mut self, k: usize) -> Self {
        self.projection_dim = Some(k);
        self
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }
}

/// Public parameters of a [`DpClassifier`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHeader {
    pub budget: PrivacyBudget,
    pub input_dim: usize,
    pub projection: Option<ProjectionSpec>,
    pub clip: f64,
    /// Class labels in increasing order, aligned with the stored moments.
    pub labels: Vec<i64>,
    pub stream: RngStream,
    pub noise_off: bool,
}

#[derive(Debug, Clone)]
pub struct DpClassifier<T> {
    header: ClassifierHeader,
    classes: Vec<NoisyMoments<T>>,
    projection: Option<Projection<T>>,
}

impl<T: Scalar> PartialEq for DpClassifier<T> {
    fn eq(&self, other: &Self) -> bool {
        self.header == other.header && self.classes == other.classes
    }
}

fn transform<T: Scalar>(projection: Option<&Projection<T>>, clip: f64, x: &[T]) -> Result<Vec<T>> {
    let c = T::lit(clip);
    let mut v = match projection {
        Some(p) => p.apply(x)?,
        None => x.to_vec(),
    };
    v.iter_mut().for_each(|e| *e = e.max(-c).min(c) + c);
    Ok(v)
}

/// Fits one noisy-moments release per class.
pub fn fit_classifier<T: Scalar>(
    points: &Dataset<T>,
    labels: &[i64],
    budget: PrivacyBudget,
    config: &ClassifierConfig,
    stream: RngStream,
) -> Result<DpClassifier<T>> {
    if labels.len() != points.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: labels.len() });
    }
    if !(config.clip > 0.0 && config.clip.is_finite()) {
        return Err(Error::param(format!("clip threshold must be positive, got {}", config.clip)));
    }
    let d = points.dim();
    let projection = match config.projection_dim {
        Some(k) => Some(Projection::new(ProjectionSpec::new(ProjectionKind::GaussianJl, d, k, stream.child(0).seed)?)),
        None => None,
    };
    let out_dim = projection.as_ref().map_or(d, |p| p.spec().out_dim);

    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    if groups.is_empty() {
        return Err(Error::param("no training points"));
    }
    if let Some((l, idx)) = groups.iter().find(|(_, idx)| idx.len() < 2) {
        return Err(Error::DatasetTooSmall { n: idx.len(), required: 2, bound: format!("points in class {l}") });
    }

    let promise = DomainPromise::boxed(2.0 * config.clip, out_dim)?;
    let groups: Vec<(i64, Vec<usize>)> = groups.into_iter().collect();
    let classes = groups
        .par_iter()
        .enumerate()
        .map(|(c, (_, idx))| {
            let part = points.select(idx);
            let moved = part.map_rows(out_dim, |r| transform(projection.as_ref(), config.clip, r).expect("dimension checked"))?;
            build_l2sq(&moved, budget, &promise, stream.child(c as u64 + 1), config.noise)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DpClassifier {
        header: ClassifierHeader {
            budget,
            input_dim: d,
            projection: projection.as_ref().map(|p| *p.spec()),
            clip: config.clip,
            labels: groups.iter().map(|(l, _)| *l).collect(),
            stream,
            noise_off: config.noise.is_off(),
        },
        classes,
        projection,
    })
}

impl<T: Scalar> DpClassifier<T> {
    pub(crate) fn from_parts(header: ClassifierHeader, classes: Vec<NoisyMoments<T>>) -> Result<Self> {
        if classes.len() != header.labels.len() || classes.is_empty() {
            return Err(Error::Format("class count does not match the label list".into()));
        }
        let projection = header.projection.map(Projection::new);
        Ok(Self { header, classes, projection })
    }

    pub fn header(&self) -> &ClassifierHeader {
        &self.header
    }

    pub fn labels(&self) -> &[i64] {
        &self.header.labels
    }

    pub fn classes(&self) -> &[NoisyMoments<T>] {
        &self.classes
    }

    /// Noisy class means in the transformed (projected, clipped, shifted) space.
    pub fn noisy_means(&self) -> impl Iterator<Item = &[T]> {
        self.classes.iter().map(|c| c.noisy_mean())
    }

    /// Maps a query into the space the class means live in.
    pub fn transform(&self, y: &[T]) -> Result<Vec<T>> {
        check_dim(self.header.input_dim, y.len())?;
        transform(self.projection.as_ref(), self.header.clip, y)
    }

    /// Label of the nearest noisy mean; ties go to the smallest label.
    pub fn predict(&self, y: &[T]) -> Result<i64> {
        let y = self.transform(y)?;
        let mut best = (T::infinity(), 0);
        for (i, c) in self.classes.iter().enumerate() {
            let d = sq_dist(&y, c.noisy_mean());
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(self.header.labels[best.1])
    }

    pub fn predict_all(&self, queries: &Dataset<T>) -> Result<Vec<i64>> {
        queries.rows().map(|q| self.predict(q)).collect()
    }

    /// Fraction of `queries` predicted as `labels`.
    pub fn accuracy(&self, queries: &Dataset<T>, labels: &[i64]) -> Result<f64> {
        if labels.len() != queries.len() || labels.is_empty() {
            return Err(Error::param("accuracy needs one label per query"));
        }
        let hits = self.predict_all(queries)?.iter().zip(labels).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

/// Picks the clip threshold with the best validation accuracy.
///
/// Warning: the privacy cost of this search is not accounted for. Every
/// candidate is fitted on the same training data, so the chosen threshold
/// leaks information beyond the stated budget.
pub fn tune_clip<T: Scalar>(
    train: (&Dataset<T>, &[i64]),
    validation: (&Dataset<T>, &[i64]),
    candidates: &[f64],
    budget: PrivacyBudget,
    base: &ClassifierConfig,
    stream: RngStream,
) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &clip in candidates {
        let cfg = ClassifierConfig { clip, ..*base };
        let model = fit_classifier(train.0, train.1, budget, &cfg, stream)?;
        let acc = model.accuracy(validation.0, validation.1)?;
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((clip, acc));
        }
    }
    best.ok_or_else(|| Error::param("no clip candidates given"))
}
