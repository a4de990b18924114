//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use dpsim::classify::{fit_classifier, ClassifierConfig};
use dpsim::highdim::{build_l1, build_l2};
use dpsim::kde::{build_kde, feature_mean_sensitivity, rff_features, FeatureMapSpec, KdeConfig};
use dpsim::kernel::Kernel;
use dpsim::l2sq::{build_l2sq, exact_moments, second_moment_sensitivity};
use dpsim::onedim::{exact_node_counts, Noise};
use dpsim::oracle::{error_report, exact_distance_sum, exact_kde, DistanceFn};
use dpsim::privacy::{DomainPromise, PrivacyBudget, RngStream};
use dpsim::projection::{choose_kde_projection_dim, Projection, ProjectionKind, ProjectionSpec, DEFAULT_DIM_CONSTANT};
use dpsim::smooth::{build_smooth_kde, exp_sum_approx, SmoothConfig};
use dpsim::{Dataset, Sketch};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn pure(eps: f64) -> PrivacyBudget {
    PrivacyBudget::pure(eps).unwrap()
}

fn rng(seed: u64) -> ChaCha20Rng {
    RngStream::new(seed, 0xacce).rng()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Values in `[0, r]` drawn from one of several shapes.
fn random_values(rng: &mut ChaCha20Rng, n: usize, r: f64) -> Vec<f64> {
    let shape = rng.random_range(0..4);
    (0..n)
        .map(|_| {
            let u: f64 = match shape {
                0 => rng.random(),
                1 => rng.random::<f64>().powi(4),
                2 => (0.3 + 0.05 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0),
                _ => [0.0, 0.25, 1.0][rng.random_range(0..3)],
            };
            u * r
        })
        .collect()
}

fn ac1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut checks = 0usize;
    let mut worst: f64 = 0.0;
    for inst in 0..100 {
        let n = r.random_range(1..=10_000);
        let radius = [1.0, 3.5][inst % 2];
        let ds = Dataset::from_values(&random_values(&mut r, n, radius)).unwrap();
        let promise = DomainPromise::boxed(radius, 1).unwrap();
        for alpha in [0.05, 0.1, 0.3] {
            let s = build_l1(&ds, pure(1.0), alpha, &promise, 1.0, RngStream::new(inst as u64, 0), Noise::Off).unwrap();
            for _ in 0..5 {
                let y = [r.random_range(-0.2..1.2) * radius];
                let truth = exact_distance_sum(&ds, &y, DistanceFn::L1).unwrap();
                let est = s.trees()[0].distance_query(y[0] / radius, alpha).unwrap();
                let slack = alpha * truth + 2.0 * radius;
                worst = worst.max((est - truth).abs() / slack);
                ensure((est - truth).abs() <= slack, || format!("1-d n={n} alpha={alpha} y={}: {est} vs {truth}", y[0]))?;
                checks += 1;
            }
        }
    }
    for inst in 0..100 {
        let n = r.random_range(1..=2_000);
        let d = r.random_range(1..=64);
        let radius = [1.0, 2.0][inst % 2];
        let cols: Vec<Vec<f64>> = (0..d).map(|_| random_values(&mut r, n, radius)).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let promise = DomainPromise::boxed(radius, d).unwrap();
        for alpha in [0.05, 0.1, 0.3] {
            for p in [1.0, 2.0, 3.0] {
                let s = build_l1(&ds, pure(1.0), alpha, &promise, p, RngStream::new(inst as u64, 1), Noise::Off).unwrap();
                let y: Vec<f64> = (0..d).map(|_| r.random::<f64>() * radius).collect();
                let f = if p == 1.0 { DistanceFn::L1 } else { DistanceFn::Lpp(p) };
                let truth = exact_distance_sum(&ds, &y, f).unwrap();
                let est = if p == 1.0 { s.query_l1(&y).unwrap() } else { s.query_lpp(&y, p).unwrap() };
                let slack = alpha * truth + 2.0 * radius.powf(p) * d as f64;
                worst = worst.max((est - truth).abs() / slack);
                ensure((est - truth).abs() <= slack, || format!("d={d} n={n} alpha={alpha} p={p}: {est} vs {truth}"))?;
                checks += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{checks} checks, worst error/slack {worst:.3}, {:.1}s", elapsed.as_secs_f64()))
}

fn ac2_sensitivity_audits() -> Outcome {
    let mut r = rng(2);
    let mut pairs = 0usize;
    // Tree counts: only the replaced point matters, so every pair of grid
    // positions (plus off-grid values) is tried on random remainders.
    for n in 1..=16usize {
        let depth = (n + 1).next_power_of_two().trailing_zeros() as u64;
        let mut candidates: Vec<f64> = (0..=n).map(|g| g as f64 / n as f64).collect();
        candidates.extend((0..8).map(|_| r.random::<f64>()));
        for _ in 0..4 {
            let rest: Vec<f64> = (0..n - 1).map(|_| r.random()).collect();
            for &a in &candidates {
                for &b in &candidates {
                    let mut xa = rest.clone();
                    xa.push(a);
                    let mut xb = rest.clone();
                    xb.push(b);
                    let ca = exact_node_counts(&xa, n);
                    let cb = exact_node_counts(&xb, n);
                    let l1: u64 = ca.iter().zip(&cb).map(|(u, v)| u.abs_diff(*v)).sum();
                    ensure(l1 <= 2 * (depth + 1), || format!("tree n={n}: change {l1} > {}", 2 * (depth + 1)))?;
                    pairs += 1;
                }
            }
        }
    }
    // Feature means.
    for kernel in [Kernel::Gaussian, Kernel::Exponential, Kernel::Laplacian] {
        for features in [1usize, 2, 4, 8, 16, 32, 64] {
            let spec = FeatureMapSpec::new(kernel, 3, features, r.random()).unwrap();
            let pts: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
            let phis: Vec<Vec<f64>> = pts.iter().map(|p| rff_features(&spec, p).unwrap()).collect();
            for n in 1..=16usize {
                let rest: Vec<usize> = (0..n - 1).map(|_| r.random_range(0..pts.len())).collect();
                let mean_with = |extra: usize| {
                    let mut m = vec![0.0; features];
                    for &i in rest.iter().chain(std::iter::once(&extra)) {
                        m.iter_mut().zip(&phis[i]).for_each(|(a, b)| *a += b / n as f64);
                    }
                    m
                };
                let means: Vec<Vec<f64>> = (0..pts.len()).map(mean_with).collect();
                let bound = feature_mean_sensitivity(features, n);
                for a in &means {
                    for b in &means {
                        let l1: f64 = a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum();
                        ensure(l1 <= bound + 1e-12, || format!("features D={features} n={n}: {l1} > {bound}"))?;
                        pairs += 1;
                    }
                }
            }
        }
    }
    // Second moment: every multiset of n - 1 grid points and every pair of replacements.
    let grid: Vec<[f64; 2]> = (0..3).flat_map(|i| (0..3).map(move |j| [i as f64 / 2.0, j as f64 / 2.0])).collect();
    for n in 2..=8usize {
        let bound = second_moment_sensitivity(1.0, 2, n);
        let mut idx = vec![0usize; n - 1];
        loop {
            let mut rows: Vec<[f64; 2]> = idx.iter().map(|&i| grid[i]).collect();
            rows.push([0.0, 0.0]);
            let vals: Vec<f64> = grid
                .iter()
                .map(|&g| {
                    *rows.last_mut().unwrap() = g;
                    exact_moments(&Dataset::from_rows(&rows).unwrap()).1
                })
                .collect();
            let spread = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
            ensure(spread <= bound + 1e-12, || format!("second moment n={n}: {spread} > {bound}"))?;
            pairs += vals.len() * vals.len();
            // Advance to the next non-decreasing tuple.
            let Some(k) = (0..n - 1).rev().find(|&k| idx[k] + 1 < grid.len()) else { break };
            idx[k] += 1;
            for j in k + 1..n - 1 {
                idx[j] = idx[k];
            }
        }
    }
    Ok(format!("{pairs} neighbouring pairs, zero violations"))
}

fn ac3_epsilon_scaling() -> Outcome {
    let mut r = rng(3);
    let xs: Vec<f64> = (0..1000).map(|_| r.random()).collect();
    let ds = Dataset::from_values(&xs).unwrap();
    let promise = DomainPromise::unit_box(1);
    let alpha = 0.1;
    let queries: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    // The additive part of the error is what the noise contributes on top
    // of the deterministic bucketing, i.e. the distance to the noise-free answer.
    let clean = build_l1(&ds, pure(1.0), alpha, &promise, 1.0, RngStream::new(0, 0), Noise::Off).unwrap();
    let base: Vec<f64> = queries.iter().map(|&y| clean.query_l1(&[y]).unwrap()).collect();
    let mean_err = |eps: f64| {
        let mut total = 0.0;
        for t in 0..200u64 {
            let s = build_l1(&ds, pure(eps), alpha, &promise, 1.0, RngStream::new(t, eps.to_bits()), Noise::On).unwrap();
            for (y, b) in queries.iter().zip(&base) {
                total += (s.query_l1(&[*y]).unwrap() - b).abs();
            }
        }
        total / (200 * queries.len()) as f64
    };
    let e1 = mean_err(1.0);
    let e2 = mean_err(2.0);
    let ratio = e2 / e1;
    ensure((0.35..=0.65).contains(&ratio), || format!("ratio {ratio:.3} (eps=1: {e1:.2}, eps=2: {e2:.2})"))?;
    Ok(format!("err(eps=2)/err(eps=1) = {ratio:.3} ({e2:.2} / {e1:.2})"))
}

fn ac4_figure_shape() -> Outcome {
    let mut r = rng(4);
    let xs: Vec<f64> = (0..1000).map(|_| r.random()).collect();
    let ds = Dataset::from_values(&xs).unwrap();
    let promise = DomainPromise::unit_box(1);
    let queries: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let truths: Vec<f64> = queries.iter().map(|&y| exact_distance_sum(&ds, &[y], DistanceFn::L1).unwrap()).collect();
    // A fine bucket ratio keeps the deterministic bucketing bias well below
    // the noise, so the curve reflects the privacy noise at every epsilon.
    let alpha = 0.02;
    let mut rows = Vec::new();
    for (i, eps) in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0].into_iter().enumerate() {
        let mut rel = 0.0;
        for t in 0..20u64 {
            let s = build_l1(&ds, pure(eps), alpha, &promise, 1.0, RngStream::new(t, i as u64), Noise::On).unwrap();
            let est: Vec<f64> = queries.iter().map(|&y| s.query_l1(&[y]).unwrap()).collect();
            rel += error_report(&est, &truths).unwrap().relative_error;
        }
        rows.push((eps, rel / 20.0));
    }
    let zero = error_report(&vec![0.0; truths.len()], &truths).unwrap().relative_error;
    let table: Vec<String> = rows.iter().map(|(e, v)| format!("{e}:{v:.4}")).collect();
    ensure(rows.windows(2).all(|w| w[1].1 < w[0].1), || format!("not decreasing: {table:?}"))?;
    ensure(rows[5].1 < 0.5, || format!("eps=16 relative error {:.3}", rows[5].1))?;
    ensure(zero == 1.0, || format!("zero baseline {zero}"))?;
    Ok(format!("relative error {}; constant-0 baseline {zero}", table.join(" ")))
}

/// Points around a few centres so that kernel values are spread over `(0, 1)`.
fn clustered(r: &mut ChaCha20Rng, n: usize, centres: &[Vec<f64>], spread: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let c = &centres[r.random_range(0..centres.len())];
            c.iter().map(|v| v + spread * r.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect()
}

fn centres(r: &mut ChaCha20Rng, k: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..k).map(|_| (0..d).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect()).collect()
}

fn ac5_kde_utility() -> Outcome {
    let start = Instant::now();
    let mut r = rng(5);
    let cs = centres(&mut r, 4, 32, 0.15);
    let ds = Dataset::from_rows(&clustered(&mut r, 10_000, &cs, 0.12)).unwrap();
    let qs = clustered(&mut r, 100, &cs, 0.12);
    let cfg = KdeConfig::new(0.1);
    let s = build_kde(&ds, Kernel::Gaussian, 1.0, &cfg, RngStream::new(5, 0)).map_err(|e| e.to_string())?;
    ensure(s.header().feature_map.features == 800, || "feature count is not ceil(8/alpha^2)".into())?;
    let mut err = 0.0;
    let mut mean_truth = 0.0;
    for q in &qs {
        let truth = exact_kde(&ds, q, Kernel::Gaussian).unwrap();
        err += (s.query_kde(q).unwrap() - truth).abs();
        mean_truth += truth;
    }
    err /= qs.len() as f64;
    mean_truth /= qs.len() as f64;
    let elapsed = start.elapsed();
    ensure(err <= 0.1, || format!("mean error {err:.4}"))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("mean |error| {err:.4} (mean KDE {mean_truth:.3}), {:.1}s", elapsed.as_secs_f64()))
}

fn ac6_projection_error() -> Outcome {
    let alpha = 0.1;
    let d = 16;
    let k_exp = choose_kde_projection_dim(Kernel::Exponential, ProjectionKind::GaussianJl, alpha, DEFAULT_DIM_CONSTANT).unwrap();
    let k_gauss = choose_kde_projection_dim(Kernel::Gaussian, ProjectionKind::GaussianJl, alpha, DEFAULT_DIM_CONSTANT).unwrap();
    let k_smooth = choose_kde_projection_dim(Kernel::Inv1pL2Sq, ProjectionKind::GaussianJl, alpha, DEFAULT_DIM_CONSTANT).unwrap();
    let mut r = rng(6);
    let mut pairs = Vec::new();
    for _ in 0..1000 {
        let dist = (0.01f64.ln() + r.random::<f64>() * (20.0f64 / 0.01).ln()).exp();
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + dist * b / nu).collect();
        pairs.push((x, y, dist));
    }
    let projected_dist = |k: usize, seed: u64, x: &[f64], y: &[f64]| {
        let p = Projection::<f64>::new(ProjectionSpec::new(ProjectionKind::GaussianJl, d, k, seed).unwrap());
        let (a, b) = (p.apply(x).unwrap(), p.apply(y).unwrap());
        a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
    };
    let (mut e_exp, mut e_gauss, mut e_rel) = (0.0, 0.0, 0.0);
    for (seed, (x, y, dist)) in pairs.iter().enumerate() {
        let g = projected_dist(k_exp, seed as u64, x, y);
        e_exp += ((-g).exp() - (-dist).exp()).abs();
        let g = projected_dist(k_gauss, seed as u64 + 5000, x, y);
        e_gauss += ((-g * g).exp() - (-dist * dist).exp()).abs();
        let g = projected_dist(k_smooth, seed as u64 + 10_000, x, y);
        let z = 1.0 / (1.0 + dist * dist);
        e_rel += (1.0 / (1.0 + g * g) - z).abs() / z;
    }
    let m = pairs.len() as f64;
    let (e_exp, e_gauss, e_rel) = (e_exp / m, e_gauss / m, e_rel / m);
    ensure(e_exp <= alpha, || format!("exp kernel deviation {e_exp:.4}"))?;
    ensure(e_gauss <= alpha, || format!("gaussian kernel deviation {e_gauss:.4}"))?;
    // Relative deviation with leading constant 1, tighter than the c = 8 used for k.
    ensure(e_rel <= alpha, || format!("1/(1+r^2) relative deviation {e_rel:.4}"))?;
    Ok(format!(
        "k={k_exp}: exp {e_exp:.4}, gauss {e_gauss:.4}; k={k_smooth}: 1/(1+r^2) relative {e_rel:.4}"
    ))
}

fn ac7_projection_benefit() -> Outcome {
    let mut r = rng(7);
    let d = 2048;
    let spread = 1.0 / (2.0 * d as f64).sqrt();
    let cs = centres(&mut r, 4, d, 0.6 / (d as f64).sqrt());
    let ds = Dataset::from_rows(&clustered(&mut r, 2000, &cs, spread)).unwrap();
    let qs = clustered(&mut r, 1000, &cs, spread);
    let truths: Vec<f64> = qs.iter().map(|q| exact_kde(&ds, q, Kernel::Gaussian).unwrap()).collect();
    let run = |cfg: KdeConfig| {
        let t0 = Instant::now();
        let s = build_kde(&ds, Kernel::Gaussian, 1.0, &cfg, RngStream::new(7, 0)).unwrap();
        let build = t0.elapsed();
        let t1 = Instant::now();
        let est: Vec<f64> = qs.iter().map(|q| s.query_kde(q).unwrap()).collect();
        let query = t1.elapsed();
        let err = error_report(&est, &truths).unwrap().mean_abs_error;
        (build, query, err, s.internal_dim())
    };
    let (b_full, q_full, e_full, _) = run(KdeConfig::new(0.1));
    let (b_proj, q_proj, e_proj, k) = run(KdeConfig::new(0.1).with_projection(ProjectionKind::FastJl).with_projection_dim(1000));
    let gap = (e_proj - e_full).abs();
    let summary = format!(
        "d={d}: build {:.2}s query {:.2}s err {e_full:.4}; k={k}: build {:.2}s query {:.2}s err {e_proj:.4}; gap {gap:.4}",
        b_full.as_secs_f64(),
        q_full.as_secs_f64(),
        b_proj.as_secs_f64(),
        q_proj.as_secs_f64()
    );
    ensure(k == 1000, || format!("internal dimension {k}"))?;
    ensure(b_proj < b_full && q_proj < q_full, || format!("projection not faster: {summary}"))?;
    ensure(gap <= 0.05, || summary.clone())?;
    Ok(summary)
}

fn ac8_exp_sum_certificate() -> Outcome {
    let mut parts = Vec::new();
    for alpha in [0.1, 0.01, 0.001] {
        let g = exp_sum_approx(alpha).map_err(|e| e.to_string())?;
        let (x, err) = g.sup_error(1.0, 1e6, 10_000);
        let cap = 25.0 * (1.0 / alpha).ln();
        ensure(err <= alpha, || format!("alpha={alpha}: error {err:.3e} at x={x:.3}"))?;
        ensure((g.len() as f64) <= cap, || format!("alpha={alpha}: {} terms > {cap:.1}", g.len()))?;
        parts.push(format!("alpha={alpha}: {} terms, sup {err:.2e}", g.len()));
    }
    Ok(parts.join("; "))
}

fn ac9_smooth_kde() -> Outcome {
    let start = Instant::now();
    let mut r = rng(9);
    let cs = centres(&mut r, 4, 32, 0.15);
    let ds = Dataset::from_rows(&clustered(&mut r, 10_000, &cs, 0.12)).unwrap();
    let qs = clustered(&mut r, 100, &cs, 0.12);
    let s = build_smooth_kde(&ds, Kernel::Inv1pL2Sq, 1.0, &SmoothConfig::new(0.1), RngStream::new(9, 0))
        .map_err(|e| e.to_string())?;
    let mut err = 0.0;
    let mut mean_truth = 0.0;
    for q in &qs {
        let truth = exact_kde(&ds, q, Kernel::Inv1pL2Sq).unwrap();
        err += (s.query_smooth_kde(q).unwrap() - truth).abs();
        mean_truth += truth;
    }
    err /= qs.len() as f64;
    mean_truth /= qs.len() as f64;
    ensure(err <= 0.1, || format!("mean error {err:.4}"))?;
    Ok(format!(
        "{} sub-sketches, mean |error| {err:.4} (mean KDE {mean_truth:.3}), {:.1}s",
        s.sub_sketches().len(),
        start.elapsed().as_secs_f64()
    ))
}

fn mixture(r: &mut ChaCha20Rng, n: usize, d: usize, classes: usize) -> (Dataset<f64>, Vec<i64>) {
    // Means (10 / sqrt 2) e_c are pairwise 10 apart with unit noise.
    let shift = 10.0 / std::f64::consts::SQRT_2;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        let mut x: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        x[c] += shift;
        rows.push(x);
        labels.push(c as i64);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(r);
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    (Dataset::from_rows(&rows).unwrap(), labels)
}

fn ac10_classifier() -> Outcome {
    let mut r = rng(10);
    let (train, train_labels) = mixture(&mut r, 10_000, 64, 10);
    let (test, test_labels) = mixture(&mut r, 10_000, 64, 10);
    let cfg = ClassifierConfig::new(9.0);
    let budget = PrivacyBudget::new(1.0, 1e-5).unwrap();
    let clean = fit_classifier(&train, &train_labels, budget, &cfg.with_noise(Noise::Off), RngStream::new(10, 0)).unwrap();
    let acc_clean = clean.accuracy(&test, &test_labels).unwrap();
    let t0 = Instant::now();
    let private = fit_classifier(&train, &train_labels, budget, &cfg, RngStream::new(10, 1)).unwrap();
    let acc_private = private.accuracy(&test, &test_labels).unwrap();
    let elapsed = t0.elapsed();
    ensure(acc_clean >= 0.99, || format!("noise-off accuracy {acc_clean:.4}"))?;
    ensure(acc_clean - acc_private <= 0.05, || format!("private accuracy {acc_private:.4} vs {acc_clean:.4}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("fit + predict took {elapsed:?}"))?;
    Ok(format!(
        "accuracy noise-off {acc_clean:.4}, (1, 1e-5)-DP {acc_private:.4}; fit + 10^4 predictions {:.0} ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

fn random_sketch(r: &mut ChaCha20Rng, i: usize) -> (Sketch<f64>, usize) {
    let d = r.random_range(1..=5);
    let n = r.random_range(4..=40);
    let seed = RngStream::new(r.random(), r.random());
    let noise = if r.random_bool(0.2) { Noise::Off } else { Noise::On };
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect();
    let ds = Dataset::from_rows(&rows).unwrap();
    let budget = if r.random_bool(0.5) { pure(10.0) } else { PrivacyBudget::new(10.0, 1e-6).unwrap() };
    let sketch = match i % 11 {
        0 => Sketch::Distance(build_l1(&ds, budget, 0.3, &DomainPromise::unit_box(d), 1.0, seed, noise).unwrap()),
        1 => {
            let ball = DomainPromise::l2_ball(2.0 * (d as f64).sqrt(), d).unwrap();
            Sketch::L2(build_l2(&ds, budget, 0.3, &ball, seed, noise, Some(r.random_range(8..40))).unwrap())
        }
        2 => Sketch::L2Sq(build_l2sq(&ds, budget, &DomainPromise::unit_box(d), seed, noise).unwrap()),
        3 => Sketch::Distance(build_l1(&ds, budget, 0.3, &DomainPromise::unit_box(d), r.random_range(1.5..4.0), seed, noise).unwrap()),
        4..=6 => {
            let kernel = [Kernel::Gaussian, Kernel::Exponential, Kernel::Laplacian][i % 11 - 4];
            let mut cfg = KdeConfig::new(0.5).with_noise(noise);
            if kernel != Kernel::Laplacian && r.random_bool(0.5) {
                cfg = cfg.with_projection(ProjectionKind::GaussianJl).with_projection_dim(1);
            }
            Sketch::Kde(build_kde(&ds, kernel, 10.0, &cfg, seed).unwrap())
        }
        7..=9 => {
            let kernel = [Kernel::Inv1pL2, Kernel::Inv1pL2Sq, Kernel::Inv1pL1][i % 11 - 7];
            let cfg = SmoothConfig::new(0.5).with_noise(noise).with_projection_dim(1);
            Sketch::Smooth(build_smooth_kde(&ds, kernel, 10.0, &cfg, seed).unwrap())
        }
        _ => {
            let labels: Vec<i64> = (0..n).map(|j| (j % 2) as i64 * 3 - 1).collect();
            let mut cfg = ClassifierConfig::new(1.0).with_noise(noise);
            if r.random_bool(0.5) {
                cfg = cfg.with_projection_dim(2);
            }
            Sketch::Classifier(fit_classifier(&ds, &labels, budget, &cfg, seed).unwrap())
        }
    };
    (sketch, d)
}

fn ac11_serialization() -> Outcome {
    let mut r = rng(11);
    let mut bytes_total = 0usize;
    for i in 0..1000 {
        let (sketch, d) = random_sketch(&mut r, i);
        let bytes = sketch.to_bytes().map_err(|e| e.to_string())?;
        let back = Sketch::<f64>::from_bytes(&bytes).map_err(|e| format!("sketch {i}: {e}"))?;
        ensure(back == sketch, || format!("sketch {i} ({}) changed on reload", sketch.function().name()))?;
        let again = back.to_bytes().unwrap();
        ensure(again == bytes, || format!("sketch {i} ({}) is not byte-identical", sketch.function().name()))?;
        for _ in 0..3 {
            let y: Vec<f64> = (0..d).map(|_| r.random_range(-0.5..1.5)).collect();
            let a = sketch.evaluate(&y).unwrap();
            let b = back.evaluate(&y).unwrap();
            ensure(a.to_bits() == b.to_bits(), || format!("sketch {i} ({}): {a} vs {b}", sketch.function().name()))?;
        }
        bytes_total += bytes.len();
    }
    Ok(format!("1000 round trips over all 11 functions, {bytes_total} bytes"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("AC1 oracle equivalence (noise off)", ac1_oracle_equivalence),
        ("AC2 sensitivity audits", ac2_sensitivity_audits),
        ("AC3 epsilon scaling law", ac3_epsilon_scaling),
        ("AC4 error vs epsilon shape", ac4_figure_shape),
        ("AC5 private Gaussian KDE utility", ac5_kde_utility),
        ("AC6 dimensionality reduction", ac6_projection_error),
        ("AC7 projection speed-up", ac7_projection_benefit),
        ("AC8 exponential-sum certificate", ac8_exp_sum_certificate),
        ("AC9 smooth-kernel KDE", ac9_smooth_kde),
        ("AC10 private classifier", ac10_classifier),
        ("AC11 serialization round trips", ac11_serialization),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{:.1}s]", t.elapsed().as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{:.1}s]", t.elapsed().as_secs_f64());
            }
        }
    }
    println!("{} of 11 acceptance criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
