//! Shared privacy primitives: budgets, public domain promises, seeded
//! randomness streams, Laplace sampling and composition rules.
//!
//! Neighbouring datasets differ by replacing a single point. Every
//! sensitivity constant in this crate is stated for that convention.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An `(epsilon, delta)` pair. `delta == 0` is pure differential privacy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::param(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    /// Per-part epsilon when the budget is spread over `k` mechanisms:
    /// basic composition for pure budgets, advanced composition otherwise.
    pub fn split(&self, k: usize) -> Result<f64> {
        if self.is_pure() {
            budget_split_pure(self, k)
        } else {
            budget_split_advanced(self, k)
        }
    }
}

/// Shape of the public domain every accepted point is promised to lie in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    /// `[0, R]^d`.
    Box,
    /// Euclidean ball of diameter `R` centred at the origin.
    L2Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainPromise {
    pub kind: DomainKind,
    pub radius: f64,
    pub dim: usize,
}

impl DomainPromise {
    pub fn new(kind: DomainKind, radius: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param(format!("domain radius must be positive, got {radius}")));
        }
        if dim == 0 {
            return Err(Error::param("domain dimension must be positive"));
        }
        Ok(Self { kind, radius, dim })
    }

    pub fn unit_box(dim: usize) -> Self {
        Self { kind: DomainKind::Box, radius: 1.0, dim }
    }

    pub fn boxed(radius: f64, dim: usize) -> Result<Self> {
        Self::new(DomainKind::Box, radius, dim)
    }

    pub fn l2_ball(diameter: f64, dim: usize) -> Result<Self> {
        Self::new(DomainKind::L2Ball, diameter, dim)
    }

    /// Projects `x` onto the promised domain in place. Returns the number
    /// of coordinates (box) or points (ball) that had to move.
    pub fn clip<T: Scalar>(&self, x: &mut [T]) -> usize {
        let r = T::lit(self.radius);
        match self.kind {
            DomainKind::Box => {
                let mut moved = 0;
                for v in x.iter_mut() {
                    let c = v.max(T::zero()).min(r);
                    if c != *v {
                        moved += 1;
                        *v = c;
                    }
                }
                moved
            }
            DomainKind::L2Ball => {
                let half = r / T::lit(2.0);
                let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
                if norm > half {
                    let f = half / norm;
                    x.iter_mut().for_each(|v| *v *= f);
                    1
                } else {
                    0
                }
            }
        }
    }
}

/// Descriptor of a reproducible random stream: a master seed plus a stream id.
///
/// Streams are realised with ChaCha20's native 64-bit stream selector, so
/// distinct ids under one seed never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// A stream for a sub-structure. Children of distinct parents get
    /// distinct seeds, children of one parent differ in their stream id.
    pub fn child(&self, id: u64) -> Self {
        Self { seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x9e37_79b9))), stream: id }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Inverse CDF of `Laplace(0, b)` at `u` in `(0, 1)`.
pub fn laplace_from_uniform(b: f64, u: f64) -> f64 {
    let c = u - 0.5;
    if c == 0.0 {
        return 0.0;
    }
    -b * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

/// One draw from `Laplace(0, scale)`.
pub fn sample_laplace<T: Scalar, R: Rng + ?Sized>(scale: T, rng: &mut R) -> Result<T> {
    if !(scale > T::zero() && scale.is_finite()) {
        return Err(Error::param(format!("Laplace scale must be positive, got {scale}")));
    }
    Ok(T::lit(draw_laplace(scale.as_f64(), rng)))
}

pub(crate) fn draw_laplace<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    laplace_from_uniform(b, u)
}

/// Epsilon for each of `k` pure mechanisms composing to `total`.
pub fn budget_split_pure(total: &PrivacyBudget, k: usize) -> Result<f64> {
    if total.delta != 0.0 {
        return Err(Error::param("budget has delta > 0; use advanced composition"));
    }
    if k == 0 {
        return Err(Error::param("cannot split a budget into zero parts"));
    }
    Ok(total.epsilon / k as f64)
}

/// Total epsilon of `k` independent `eps0`-DP mechanisms under advanced
/// composition with slack `delta`.
pub fn advanced_composition_epsilon(eps0: f64, k: usize, delta: f64) -> f64 {
    let k = k as f64;
    k * eps0 * eps0 / 2.0 + eps0 * (2.0 * k * (1.0 / delta).ln()).sqrt()
}

/// Largest per-part epsilon whose `k`-fold advanced composition stays
/// within `total`: the positive root of `k e^2 / 2 + e s = eps` with
/// `s = sqrt(2 k ln(1/delta))`.
pub fn budget_split_advanced(total: &PrivacyBudget, k: usize) -> Result<f64> {
    let delta = total.delta;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("advanced composition needs delta in (0, 1), got {delta}")));
    }
    if k == 0 {
        return Err(Error::param("cannot split a budget into zero parts"));
    }
    let kf = k as f64;
    let s = (2.0 * kf * (1.0 / delta).ln()).sqrt();
    // Rationalised root; avoids cancellation when 2k eps << s^2.
    let mut eps0 = 2.0 * total.epsilon / (s + (s * s + 2.0 * kf * total.epsilon).sqrt());
    // Rounding must never overspend.
    while advanced_composition_epsilon(eps0, k, delta) > total.epsilon {
        eps0 = f64::from_bits(eps0.to_bits() - 1);
    }
    Ok(eps0)
}

/// Noise standard deviation of the analytic Gaussian mechanism: the
/// smallest `sigma` for which adding `N(0, sigma^2)` to a query of L2
/// sensitivity `sensitivity` is `(epsilon, delta)`-DP.
pub fn gaussian_sigma(sensitivity: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(sensitivity > 0.0 && epsilon > 0.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::param("Gaussian mechanism needs positive sensitivity, epsilon and delta in (0, 1)"));
    }
    let phi = |x: f64| 0.5 * erfc(-x / std::f64::consts::SQRT_2);
    let delta_at = |sigma: f64| {
        let a = sensitivity / (2.0 * sigma);
        let b = epsilon * sigma / sensitivity;
        phi(a - b) - epsilon.exp() * phi(-a - b)
    };
    let mut hi = sensitivity;
    while delta_at(hi) > delta {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if delta_at(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// A box dataset rescaled to `[0, 1]^d`.
#[derive(Debug, Clone)]
pub struct Normalized<T> {
    pub data: Dataset<T>,
    /// Multiply normalised distances by this (or its `p`-th power) to undo.
    pub scale: f64,
    /// Number of coordinates that were outside the promise and got clipped.
    pub clipped: usize,
}

/// Clips every coordinate into `[0, R]` and divides by `R`.
pub fn normalize_domain<T: Scalar>(dataset: &Dataset<T>, promise: &DomainPromise) -> Result<Normalized<T>> {
    if promise.kind != DomainKind::Box {
        return Err(Error::param("normalize_domain expects a box promise"));
    }
    crate::error::check_dim(promise.dim, dataset.dim())?;
    let r = T::lit(promise.radius);
    let mut clipped = 0;
    let data = dataset.map_rows(dataset.dim(), |row| {
        let mut v = row.to_vec();
        clipped += promise.clip(&mut v);
        v.iter_mut().for_each(|c| *c = *c / r);
        v
    })?;
    Ok(Normalized { data, scale: promise.radius, clipped })
}

impl<T: Scalar> Normalized<T> {
    /// Maps normalised coordinates back to the original domain.
    pub fn denormalize(&self) -> Dataset<T> {
        self.data.scaled(T::lit(self.scale))
    }
}
