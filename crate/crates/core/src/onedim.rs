//! One-dimensional private distance queries backed by a noisy dyadic
//! histogram.
//!
//! Points in `[0, 1]` are snapped to the grid `{0, 1/m, ..., 1}` (with
//! `m = n` by default), counted at the leaves of a complete binary tree,
//! and every node count is perturbed with independent Laplace noise. Any
//! half-open range of grid positions is the disjoint union of at most two
//! nodes per level, so interval counts, and from them geometrically
//! bucketed distance sums, can be answered an unlimited number of times.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::draw_laplace;
use crate::scalar::Scalar;

/// Whether a builder adds privacy noise.
///
/// `Off` yields a non-private structure and exists for oracle testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Noise {
    #[default]
    On,
    Off,
}

impl Noise {
    pub fn is_off(self) -> bool {
        self == Noise::Off
    }
}

/// Half-open interval `[lo, hi)` of the unit domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::param(format!("interval needs lo <= hi, got [{lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }
}

/// Public description of a tree; everything except the node values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeHeader {
    pub n: usize,
    pub resolution: usize,
    pub depth: u32,
    pub eta: f64,
    pub epsilon: f64,
    pub scale: f64,
    pub noise_off: bool,
}

/// Noisy hierarchical histogram over the grid `{0, 1/m, ..., 1}`.
///
/// Nodes are stored in heap order: the root is `0`, children of `i` are
/// `2i + 1` and `2i + 2`, and leaf `g` lives at `grid_size - 1 + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyTree<T> {
    header: TreeHeader,
    node_values: Vec<T>,
}

/// One weighted interval of a distance query, resolved to tree nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRange {
    pub weight: f64,
    /// Half-open range of leaf (grid) indices.
    pub leaves: (usize, usize),
    pub nodes: Vec<usize>,
}

#[inline]
fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Grid index of a value in `[0, 1]` at resolution `m`; ties round up.
pub fn grid_index(v: f64, m: usize) -> usize {
    round_half_up(v.clamp(0.0, 1.0) * m as f64) as usize
}

fn tree_shape(resolution: usize) -> (usize, u32) {
    let grid_size = (resolution + 1).next_power_of_two();
    (grid_size, grid_size.trailing_zeros())
}

/// Exact (pre-noise) node counts for `values` at grid resolution `m`.
pub fn exact_node_counts<T: Scalar>(values: &[T], resolution: usize) -> Vec<u64> {
    let (grid_size, _) = tree_shape(resolution);
    let mut nodes = vec![0u64; 2 * grid_size - 1];
    for v in values {
        let g = grid_index(v.as_f64(), resolution);
        let mut node = grid_size - 1 + g;
        loop {
            nodes[node] += 1;
            if node == 0 {
                break;
            }
            node = (node - 1) / 2;
        }
    }
    nodes
}

/// Builds the tree at the default resolution `m = n` and unit scale.
pub fn build_tree<T: Scalar, R: Rng + ?Sized>(
    values: &[T],
    epsilon: f64,
    rng: &mut R,
    noise: Noise,
) -> Result<NoisyTree<T>> {
    build_tree_with(values, values.len().max(1), 1.0, epsilon, rng, noise)
}

/// Builds the tree on the grid `{0, 1/resolution, ..., 1}`. `scale` is the
/// public domain size `R` the values were divided by; answers are
/// multiplied back by it.
pub fn build_tree_with<T: Scalar, R: Rng + ?Sized>(
    values: &[T],
    resolution: usize,
    scale: f64,
    epsilon: f64,
    rng: &mut R,
    noise: Noise,
) -> Result<NoisyTree<T>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    if resolution == 0 {
        return Err(Error::param("grid resolution must be positive"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param(format!("domain scale must be positive, got {scale}")));
    }
    let (_, depth) = tree_shape(resolution);
    // Replacing one point moves one unit of count along two root-to-leaf paths.
    let eta = 2.0 * (depth as f64 + 1.0) / epsilon;
    let counts = exact_node_counts(values, resolution);
    let node_values = counts
        .into_iter()
        .map(|c| {
            let noisy = match noise {
                Noise::On => c as f64 + draw_laplace(eta, rng),
                Noise::Off => c as f64,
            };
            T::lit(noisy)
        })
        .collect();
    Ok(NoisyTree {
        header: TreeHeader {
            n: values.len(),
            resolution,
            depth,
            eta,
            epsilon,
            scale,
            noise_off: noise.is_off(),
        },
        node_values,
    })
}

impl<T: Scalar> NoisyTree<T> {
    pub(crate) fn from_parts(header: TreeHeader, node_values: Vec<T>) -> Result<Self> {
        let (grid_size, depth) = tree_shape(header.resolution.max(1));
        if header.resolution == 0 || depth != header.depth || node_values.len() != 2 * grid_size - 1 {
            return Err(Error::Format(format!(
                "tree header (resolution {}, depth {}) does not match {} node values",
                header.resolution,
                header.depth,
                node_values.len()
            )));
        }
        Ok(Self { header, node_values })
    }

    pub fn header(&self) -> &TreeHeader {
        &self.header
    }

    pub fn n(&self) -> usize {
        self.header.n
    }

    pub fn depth(&self) -> u32 {
        self.header.depth
    }

    pub fn resolution(&self) -> usize {
        self.header.resolution
    }

    pub fn grid_size(&self) -> usize {
        1 << self.header.depth
    }

    pub fn noise_scale(&self) -> f64 {
        self.header.eta
    }

    pub fn epsilon(&self) -> f64 {
        self.header.epsilon
    }

    pub fn scale(&self) -> f64 {
        self.header.scale
    }

    pub fn is_noise_off(&self) -> bool {
        self.header.noise_off
    }

    pub fn node_values(&self) -> &[T] {
        &self.node_values
    }

    /// Heap ids of the canonical dyadic cover of leaves `[lo, hi)`.
    pub fn decompose(&self, lo: usize, hi: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let hi = hi.min(self.grid_size());
        if lo < hi {
            self.cover(0, 0, self.grid_size(), lo, hi, &mut out);
        }
        out
    }

    fn cover(&self, node: usize, node_lo: usize, node_hi: usize, lo: usize, hi: usize, out: &mut Vec<usize>) {
        if hi <= node_lo || node_hi <= lo {
            return;
        }
        if lo <= node_lo && node_hi <= hi {
            out.push(node);
            return;
        }
        let mid = (node_lo + node_hi) / 2;
        self.cover(2 * node + 1, node_lo, mid, lo, hi, out);
        self.cover(2 * node + 2, mid, node_hi, lo, hi, out);
    }

    /// Noisy number of points on grid positions `[lo, hi)`.
    pub fn count_leaves(&self, lo: usize, hi: usize) -> T {
        self.decompose(lo, hi).into_iter().map(|id| self.node_values[id]).sum()
    }

    /// Noisy number of points in `q`. Endpoints snap to the nearest grid
    /// position; the point `1` is covered only if `hi` snaps past it.
    pub fn noisy_count(&self, q: Interval<T>) -> T {
        let m = self.resolution() as f64;
        let idx = |v: T| round_half_up(v.as_f64() * m).clamp(0.0, m + 1.0) as usize;
        self.count_leaves(idx(q.lo), idx(q.hi))
    }

    /// Resolves a distance query at normalised position `y` into weighted
    /// leaf ranges. Buckets `Q_j` hold points at grid offsets in
    /// `[round(m a_{j+1}), round(m a_j))` with `a_j = (1 + alpha/p)^-j`;
    /// bucket 0 extends to the domain edge and offset 0 is never counted.
    pub fn query_plan(&self, y: f64, alpha: f64, p: f64) -> Result<Vec<PlannedRange>> {
        validate_query_params(alpha, p)?;
        let m = self.resolution();
        let yi = grid_index(y, m);
        let ratio = 1.0 + alpha / p;
        let last = if m <= 1 { 0 } else { ((m as f64).ln() / ratio.ln()).ceil() as usize };
        let leaf_end = m + 1;
        let mut plan = Vec::new();
        let mut a_j = 1.0f64;
        for j in 0..=last {
            let a_next = a_j / ratio;
            let k_hi = if j == 0 { leaf_end } else { round_half_up(a_j * m as f64) as usize };
            let k_lo = (round_half_up(a_next * m as f64) as usize).max(1);
            if k_lo < k_hi {
                let weight = if p == 1.0 { a_j } else { a_j.powf(p) };
                // Right of y: leaves yi + k for k in [k_lo, k_hi).
                let r_lo = yi + k_lo;
                let r_hi = (yi.saturating_add(k_hi)).min(leaf_end);
                if r_lo < r_hi {
                    plan.push(PlannedRange { weight, leaves: (r_lo, r_hi), nodes: self.decompose(r_lo, r_hi) });
                }
                // Left of y: leaves yi - k for k in [k_lo, k_hi).
                if yi >= k_lo {
                    let l_hi = yi - k_lo + 1;
                    let l_lo = (yi + 1).saturating_sub(k_hi);
                    plan.push(PlannedRange { weight, leaves: (l_lo, l_hi), nodes: self.decompose(l_lo, l_hi) });
                }
            }
            a_j = a_next;
        }
        Ok(plan)
    }

    /// Private estimate of `sum_x |x - y|` in original units, for `y` in
    /// normalised coordinates. Queries outside `[0, 1]` are answered at
    /// the nearest boundary plus `n` times the distance to it.
    pub fn distance_query(&self, y: T, alpha: f64) -> Result<T> {
        self.lp_distance_query(y, alpha, 1.0)
    }

    /// Private estimate of `sum_x |x - y|^p` in original units.
    ///
    /// For `p > 1` and `y` outside the domain the boundary correction
    /// `n * dist^p` is a lower bound on the true excess.
    pub fn lp_distance_query(&self, y: T, alpha: f64, p: f64) -> Result<T> {
        validate_query_params(alpha, p)?;
        if !y.is_finite() {
            return Err(Error::param("query must be finite"));
        }
        let yf = y.as_f64();
        let inside = yf.clamp(0.0, 1.0);
        let outside = (yf - inside).abs();
        let plan = self.query_plan(inside, alpha, p)?;
        let mut value = T::zero();
        for range in &plan {
            let count: T = range.nodes.iter().map(|&id| self.node_values[id]).sum();
            value += T::lit(range.weight) * count;
        }
        if outside > 0.0 {
            let excess = if p == 1.0 { outside } else { outside.powf(p) };
            value += T::lit(self.n() as f64 * excess);
        }
        let scale = if p == 1.0 { self.scale() } else { self.scale().powf(p) };
        Ok(value * T::lit(scale))
    }
}

fn validate_query_params(alpha: f64, p: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::param(format!("p must be at least 1, got {p}")));
    }
    Ok(())
}
