//! Squared Euclidean distance queries from a noisy mean and a noisy
//! centred second moment, using
//! `sum_x ||x - y||^2 = sum_x ||x - mean||^2 + n ||y - mean||^2`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::onedim::Noise;
use crate::privacy::{draw_laplace, gaussian_sigma, DomainKind, DomainPromise, PrivacyBudget, RngStream};
use crate::scalar::{KahanSum, Scalar};

/// How the mean vector was privatised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMechanism {
    /// Per-coordinate Laplace noise, pure DP.
    Laplace,
    /// Analytic Gaussian mechanism, used when the budget has `delta > 0`.
    Gaussian,
}

/// Public parameters of a [`NoisyMoments`] release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentsHeader {
    pub n: usize,
    pub budget: PrivacyBudget,
    pub promise: DomainPromise,
    pub mechanism: MeanMechanism,
    /// Laplace scale of the second-moment scalar.
    pub s_scale: f64,
    /// Laplace scale or Gaussian standard deviation of each mean coordinate.
    pub mean_scale: f64,
    pub stream: RngStream,
    pub clipped: usize,
    pub noise_off: bool,
}

/// Noisy mean and noisy `sum_x ||x - mean||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyMoments<T> {
    header: MomentsHeader,
    noisy_mean: Vec<T>,
    noisy_s: T,
}

/// Replace-one sensitivity of `sum_x ||x - mean||^2` on `[0, R]^d`.
///
/// Removing one point `a` leaves `S = S' + (n-1)/n ||a - m'||^2` where `m'`
/// is the mean of the rest, so a replacement moves `S` by at most
/// `(n-1)/n R^2` per coordinate.
pub fn second_moment_sensitivity(radius: f64, dim: usize, n: usize) -> f64 {
    let n = n as f64;
    radius * radius * dim as f64 * (1.0 - 1.0 / n)
}

/// Replace-one L1 sensitivity of the mean on `[0, R]^d`.
pub fn mean_l1_sensitivity(radius: f64, dim: usize, n: usize) -> f64 {
    radius * dim as f64 / n as f64
}

/// Replace-one L2 sensitivity of the mean on `[0, R]^d`.
pub fn mean_l2_sensitivity(radius: f64, dim: usize, n: usize) -> f64 {
    radius * (dim as f64).sqrt() / n as f64
}

/// Exact mean and centred second moment, accumulated in double precision.
pub fn exact_moments<T: Scalar>(dataset: &Dataset<T>) -> (Vec<f64>, f64) {
    let d = dataset.dim();
    let n = dataset.len() as f64;
    let mut sums = vec![KahanSum::<f64>::new(); d];
    for row in dataset.rows() {
        for (s, v) in sums.iter_mut().zip(row) {
            s.add(v.as_f64());
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s.value() / n).collect();
    let mut s = KahanSum::<f64>::new();
    for row in dataset.rows() {
        for (v, m) in row.iter().zip(&mean) {
            let c = v.as_f64() - m;
            s.add(c * c);
        }
    }
    (mean, s.value())
}

/// Releases the noisy moments with half the epsilon on each part.
///
/// Points are clipped into the box promise first. With `delta > 0` the
/// mean uses the analytic Gaussian mechanism at `(epsilon/2, delta)`.
pub fn build_l2sq<T: Scalar>(
    dataset: &Dataset<T>,
    budget: PrivacyBudget,
    promise: &DomainPromise,
    stream: RngStream,
    noise: Noise,
) -> Result<NoisyMoments<T>> {
    if promise.kind != DomainKind::Box {
        return Err(Error::param("the l2sq structure needs a box promise [0, R]^d"));
    }
    check_dim(promise.dim, dataset.dim())?;
    let n = dataset.len();
    if n < 2 {
        return Err(Error::DatasetTooSmall { n, required: 2, bound: "mean sensitivity R d / n".into() });
    }
    let d = dataset.dim();
    let mut clipped = 0;
    let data = dataset.map_rows(d, |row| {
        let mut v = row.to_vec();
        clipped += promise.clip(&mut v);
        v
    })?;
    let (mean, s) = exact_moments(&data);

    let half = budget.epsilon() / 2.0;
    let r = promise.radius;
    let s_scale = second_moment_sensitivity(r, d, n) / half;
    let (mechanism, mean_scale) = if budget.is_pure() {
        (MeanMechanism::Laplace, mean_l1_sensitivity(r, d, n) / half)
    } else {
        (MeanMechanism::Gaussian, gaussian_sigma(mean_l2_sensitivity(r, d, n), half, budget.delta())?)
    };

    let mut rng = stream.rng();
    let mut noisy_s = s;
    let mut noisy_mean = mean;
    if !noise.is_off() {
        noisy_s += draw_laplace(s_scale, &mut rng);
        for m in noisy_mean.iter_mut() {
            *m += match mechanism {
                MeanMechanism::Laplace => draw_laplace(mean_scale, &mut rng),
                MeanMechanism::Gaussian => mean_scale * rng.sample::<f64, _>(StandardNormal),
            };
        }
    }
    Ok(NoisyMoments {
        header: MomentsHeader {
            n,
            budget,
            promise: *promise,
            mechanism,
            s_scale,
            mean_scale,
            stream,
            clipped,
            noise_off: noise.is_off(),
        },
        noisy_mean: noisy_mean.into_iter().map(T::lit).collect(),
        noisy_s: T::lit(noisy_s),
    })
}

impl<T: Scalar> NoisyMoments<T> {
    pub(crate) fn from_parts(header: MomentsHeader, noisy_mean: Vec<T>, noisy_s: T) -> Result<Self> {
        if noisy_mean.len() != header.promise.dim {
            return Err(Error::Format("mean length does not match the promise dimension".into()));
        }
        Ok(Self { header, noisy_mean, noisy_s })
    }

    pub fn header(&self) -> &MomentsHeader {
        &self.header
    }

    pub fn n(&self) -> usize {
        self.header.n
    }

    pub fn dim(&self) -> usize {
        self.noisy_mean.len()
    }

    pub fn noisy_mean(&self) -> &[T] {
        &self.noisy_mean
    }

    pub fn noisy_s(&self) -> T {
        self.noisy_s
    }

    /// Private estimate of `sum_x ||x - y||_2^2`.
    pub fn query_l2sq(&self, y: &[T]) -> Result<T> {
        check_dim(self.dim(), y.len())?;
        let dist: f64 = self
            .noisy_mean
            .iter()
            .zip(y)
            .map(|(m, v)| {
                let c = v.as_f64() - m.as_f64();
                c * c
            })
            .sum();
        Ok(T::lit(self.noisy_s.as_f64() + self.header.n as f64 * dist))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure(e: f64) -> PrivacyBudget {
        PrivacyBudget::pure(e).unwrap()
    }

    #[test]
    fn two_point_example() {
        let ds = Dataset::from_rows(&[[0.0, 0.0], [2.0, 2.0]]).unwrap();
        let p = DomainPromise::boxed(2.0, 2).unwrap();
        let m = build_l2sq(&ds, pure(1.0), &p, RngStream::new(0, 0), Noise::Off).unwrap();
        assert_eq!(m.noisy_mean(), &[1.0, 1.0]);
        assert_eq!(m.noisy_s(), 4.0);
        assert_eq!(m.query_l2sq(&[1.0, 1.0]).unwrap(), 4.0);
        assert_eq!(m.query_l2sq(&[0.0, 0.0]).unwrap(), 8.0);
    }

    #[test]
    fn copies_have_zero_moment() {
        let ds = Dataset::from_rows(&[[0.25, 0.75]; 7]).unwrap();
        let m = build_l2sq(&ds, pure(1.0), &DomainPromise::unit_box(2), RngStream::new(0, 0), Noise::Off).unwrap();
        assert_eq!(m.noisy_mean(), &[0.25, 0.75]);
        assert_eq!(m.noisy_s(), 0.0);
    }

    #[test]
    fn query_at_noisy_mean_is_noisy_s() {
        let ds = Dataset::from_rows(&[[0.1, 0.9], [0.4, 0.2], [0.3, 0.3]]).unwrap();
        let m = build_l2sq(&ds, pure(1.0), &DomainPromise::unit_box(2), RngStream::new(4, 0), Noise::On).unwrap();
        let y = m.noisy_mean().to_vec();
        assert_eq!(m.query_l2sq(&y).unwrap(), m.noisy_s());
    }

    #[test]
    fn refuses_tiny_datasets_and_balls() {
        let ds = Dataset::from_rows(&[[0.5]]).unwrap();
        let err = build_l2sq(&ds, pure(1.0), &DomainPromise::unit_box(1), RngStream::new(0, 0), Noise::On).unwrap_err();
        assert!(matches!(err, Error::DatasetTooSmall { .. }));
        let ds = Dataset::from_rows(&[[0.5], [0.1]]).unwrap();
        let ball = DomainPromise::l2_ball(1.0, 1).unwrap();
        assert!(build_l2sq(&ds, pure(1.0), &ball, RngStream::new(0, 0), Noise::On).is_err());
    }

    #[test]
    fn noise_scales() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0; 3]).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let m = build_l2sq(&ds, pure(1.0), &DomainPromise::unit_box(3), RngStream::new(0, 0), Noise::On).unwrap();
        assert!((m.header().s_scale - 2.0 * 3.0 * 0.9).abs() < 1e-12);
        assert!((m.header().mean_scale - 2.0 * 3.0 / 10.0).abs() < 1e-12);
        let g = build_l2sq(&ds, PrivacyBudget::new(1.0, 1e-5).unwrap(), &DomainPromise::unit_box(3), RngStream::new(0, 0), Noise::On)
            .unwrap();
        assert_eq!(g.header().mechanism, MeanMechanism::Gaussian);
    }

    #[test]
    fn exhaustive_second_moment_sensitivity() {
        // All datasets of n <= 5 points from a 3x3 grid in [0, 1]^2.
        let grid: Vec<[f64; 2]> = (0..3).flat_map(|i| (0..3).map(move |j| [i as f64 / 2.0, j as f64 / 2.0])).collect();
        for n in 2..=5 {
            let bound = second_moment_sensitivity(1.0, 2, n);
            let mut worst: f64 = 0.0;
            let mut idx = vec![0usize; n - 1];
            loop {
                let base: Vec<[f64; 2]> = idx.iter().map(|&i| grid[i]).collect();
                let s_of = |extra: [f64; 2]| {
                    let mut rows = base.clone();
                    rows.push(extra);
                    exact_moments(&Dataset::from_rows(&rows).unwrap()).1
                };
                let vals: Vec<f64> = grid.iter().map(|&g| s_of(g)).collect();
                let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
                let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
                worst = worst.max(hi - lo);
                // Next non-decreasing index tuple.
                let mut k = n - 1;
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    if idx[k] + 1 < grid.len() {
                        idx[k] += 1;
                        for j in k + 1..n - 1 {
                            idx[j] = idx[k];
                        }
                        k = usize::MAX;
                        break;
                    }
                }
                if k != usize::MAX {
                    break;
                }
            }
            assert!(worst <= bound + 1e-12, "n={n}: {worst} > {bound}");
            // The bound is attained at the box corners.
            assert!(worst >= bound - 1e-12, "n={n}: {worst} < {bound}");
        }
    }

    #[test]
    fn identity_matches_brute_force() {
        let mut rng = RngStream::new(77, 0).rng();
        for _ in 0..20 {
            let d = rng.random_range(1..=32);
            let n = rng.random_range(2..=500);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
            let ds = Dataset::from_rows(&rows).unwrap();
            let m = build_l2sq(&ds, pure(1.0), &DomainPromise::unit_box(d), RngStream::new(0, 0), Noise::Off).unwrap();
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..2.0)).collect();
            let truth: f64 = rows.iter().map(|r| r.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum();
            let est = m.query_l2sq(&y).unwrap();
            assert!((est - truth).abs() <= 1e-9 * truth, "{est} vs {truth}");
        }
    }
}
