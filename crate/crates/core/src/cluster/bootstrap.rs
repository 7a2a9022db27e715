use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::ward::{merge_leaf_sets, ward_merges, Dendrogram, LeafSet};
use super::{ClusterError, PhoneProfileMatrix};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    /// Replicates per scale. Zero disables resampling.
    pub n_boot: usize,
    /// Relative resample sizes n'/p.
    pub scales: Vec<f64>,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_boot: 1000,
            scales: (5..=14).map(|i| i as f64 / 10.0).collect(),
            seed: 0,
        }
    }
}

/// Weighted least-squares fit of `Φ⁻¹(1 − BP_r) = v·√r + c/√r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiscaleFit {
    pub v: f64,
    pub c: f64,
    pub au: f64,
    /// Model-implied bootstrap probability at r = 1.
    pub bp: f64,
    pub usable_scales: usize,
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Fits the multiscale model to raw bootstrap frequencies `bp` observed at
/// relative sizes `r`. Scales where the frequency is exactly 0 or 1 carry no
/// curvature information and are left out. Returns `None` when fewer than
/// two usable scales remain and the node is not uniformly saturated.
pub fn fit_multiscale(bp: &[f64], r: &[f64], n_boot: usize) -> Option<MultiscaleFit> {
    assert_eq!(bp.len(), r.len());
    let norm = standard_normal();
    if !bp.is_empty() && bp.iter().all(|&b| b >= 1.0) {
        return Some(MultiscaleFit {
            v: f64::NEG_INFINITY,
            c: 0.0,
            au: 1.0,
            bp: 1.0,
            usable_scales: 0,
        });
    }
    if !bp.is_empty() && bp.iter().all(|&b| b <= 0.0) {
        return Some(MultiscaleFit {
            v: f64::INFINITY,
            c: 0.0,
            au: 0.0,
            bp: 0.0,
            usable_scales: 0,
        });
    }
    let n = n_boot.max(1) as f64;
    let (lo, hi) = (1.0 / (2.0 * n), 1.0 - 1.0 / (2.0 * n));
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut usable = 0;
    for (&p, &scale) in bp.iter().zip(r) {
        if p <= 0.0 || p >= 1.0 || scale <= 0.0 {
            continue;
        }
        let p = p.clamp(lo, hi);
        let y = norm.inverse_cdf(1.0 - p);
        let density = norm.pdf(y);
        let weight = density * density * n / (p * (1.0 - p));
        let (x1, x2) = (scale.sqrt(), 1.0 / scale.sqrt());
        a11 += weight * x1 * x1;
        a12 += weight * x1 * x2;
        a22 += weight * x2 * x2;
        b1 += weight * x1 * y;
        b2 += weight * x2 * y;
        usable += 1;
    }
    if usable < 2 {
        return None;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() <= 1e-12 * (a11 * a22).abs() {
        return None;
    }
    let v = (a22 * b1 - a12 * b2) / det;
    let c = (a11 * b2 - a12 * b1) / det;
    Some(MultiscaleFit {
        v,
        c,
        au: 1.0 - norm.cdf(v - c),
        bp: 1.0 - norm.cdf(v + c),
        usable_scales: usable,
    })
}

/// Resample sizes for `p` features: `round(r·p)`, at least 1.
fn resample_sizes(scales: &[f64], p: usize) -> Vec<usize> {
    scales
        .iter()
        .map(|r| ((r * p as f64).round() as usize).max(1))
        .collect()
}

/// Annotates every node of `dendrogram` with AU and BP values from a
/// multiscale bootstrap over the feature columns of `profiles`.
pub fn bootstrap_pvalues(
    profiles: &PhoneProfileMatrix,
    dendrogram: &Dendrogram,
    config: &BootstrapConfig,
) -> Result<Dendrogram, ClusterError> {
    let n = profiles.n_items();
    if dendrogram.labels != profiles.labels || dendrogram.nodes.len() + 1 != n {
        return Err(ClusterError::Mismatch);
    }
    let mut out = dendrogram.clone();
    for node in &mut out.nodes {
        node.au = None;
        node.bp = None;
        node.bp_by_scale.clear();
    }
    if config.n_boot == 0 {
        return Ok(out);
    }
    if config.scales.is_empty() || config.scales.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Err(ClusterError::Config("scales must be positive and finite".into()));
    }

    let p = profiles.n_features();
    let sizes = resample_sizes(&config.scales, p);
    let targets: Vec<LeafSet> = (0..dendrogram.nodes.len())
        .map(|k| dendrogram.leaf_set(k))
        .collect();

    let mut counts = vec![vec![0u32; targets.len()]; sizes.len()];
    for (si, &size) in sizes.iter().enumerate() {
        counts[si] = (0..config.n_boot)
            .into_par_iter()
            .map(|b| {
                let index = (si * config.n_boot + b) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "bootstrap", index));
                let columns: Vec<usize> = (0..size).map(|_| rng.random_range(0..p)).collect();
                let rows: Vec<Vec<f64>> = profiles
                    .rows
                    .iter()
                    .map(|row| columns.iter().map(|&c| row[c]).collect())
                    .collect();
                let found: HashSet<LeafSet> =
                    merge_leaf_sets(n, &ward_merges(&rows)).into_iter().collect();
                targets.iter().map(|t| found.contains(t) as u32).collect::<Vec<u32>>()
            })
            .reduce(
                || vec![0u32; targets.len()],
                |mut acc, hit| {
                    for (a, h) in acc.iter_mut().zip(hit) {
                        *a += h;
                    }
                    acc
                },
            );
    }

    let actual_r: Vec<f64> = sizes.iter().map(|&s| s as f64 / p as f64).collect();
    let unit = sizes.iter().position(|&s| s == p);
    for (k, node) in out.nodes.iter_mut().enumerate() {
        let bp: Vec<f64> = counts
            .iter()
            .map(|c| c[k] as f64 / config.n_boot as f64)
            .collect();
        let fit = fit_multiscale(&bp, &actual_r, config.n_boot);
        node.au = fit.map(|f| f.au);
        node.bp = match unit {
            Some(i) => Some(bp[i]),
            None => fit.map(|f| f.bp),
        };
        node.bp_by_scale = bp;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ward_cluster;
    use crate::eval::Learner;

    fn profiles(rows: Vec<Vec<f64>>) -> PhoneProfileMatrix {
        let labels = (0..rows.len()).map(|i| format!("p{i}")).collect();
        PhoneProfileMatrix::new(labels, rows, Learner::Wh).unwrap()
    }

    fn small_config(n_boot: usize) -> BootstrapConfig {
        BootstrapConfig {
            n_boot,
            seed: 3,
            ..BootstrapConfig::default()
        }
    }

    #[test]
    fn certain_cluster_gets_full_support() {
        // Items 0 and 1 coincide on every feature, so every resample joins them first.
        let rows = vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![5.0, 5.0, 5.0, 5.0],
            vec![9.0, 1.0, 9.0, 1.0],
        ];
        let p = profiles(rows);
        let d = ward_cluster(&p).unwrap();
        let d = bootstrap_pvalues(&p, &d, &small_config(200)).unwrap();
        assert_eq!(d.nodes[0].leaves, vec![0, 1]);
        assert_eq!(d.nodes[0].bp, Some(1.0));
        assert_eq!(d.nodes[0].au, Some(1.0));
        let root = d.root();
        assert_eq!(root.bp, Some(1.0));
        for node in &d.nodes {
            for v in [node.au, node.bp].into_iter().flatten() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn absent_cluster_gets_no_support() {
        let fit = fit_multiscale(&[0.0; 10], &[0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4], 1000)
            .unwrap();
        assert_eq!(fit.au, 0.0);
        assert_eq!(fit.bp, 0.0);
    }

    #[test]
    fn symmetric_model_gives_au_equal_bp() {
        let norm = standard_normal();
        let r: Vec<f64> = (5..=14).map(|i| i as f64 / 10.0).collect();
        for v in [-1.0, -0.3, 0.2, 0.8, 1.5] {
            let bp: Vec<f64> = r.iter().map(|r| 1.0 - norm.cdf(v * r.sqrt())).collect();
            let fit = fit_multiscale(&bp, &r, 1000).unwrap();
            assert!(fit.c.abs() < 1e-9, "c = {}", fit.c);
            assert!((fit.au - (1.0 - norm.cdf(v))).abs() < 1e-9);
            assert!((fit.au - fit.bp).abs() < 1e-9);
        }
    }

    #[test]
    fn recovers_model_parameters() {
        let norm = standard_normal();
        let r: Vec<f64> = (5..=14).map(|i| i as f64 / 10.0).collect();
        let (v, c) = (0.4, 0.7);
        let bp: Vec<f64> = r
            .iter()
            .map(|r| 1.0 - norm.cdf(v * r.sqrt() + c / r.sqrt()))
            .collect();
        let fit = fit_multiscale(&bp, &r, 1000).unwrap();
        assert!((fit.v - v).abs() < 1e-9);
        assert!((fit.c - c).abs() < 1e-9);
        // Positive curvature puts AU above BP.
        assert!(fit.au > fit.bp);
    }

    #[test]
    fn one_usable_scale_is_unavailable() {
        assert!(fit_multiscale(&[1.0, 0.5, 1.0], &[0.5, 1.0, 1.4], 100).is_none());
    }

    #[test]
    fn zero_replicates_leave_values_unset() {
        let p = profiles(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![3.0, 3.0]]);
        let d = ward_cluster(&p).unwrap();
        let out = bootstrap_pvalues(&p, &d, &small_config(0)).unwrap();
        assert!(out.nodes.iter().all(|n| n.au.is_none() && n.bp.is_none()));
    }

    #[test]
    fn deterministic_given_seed() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..8).map(|f| ((i * 13 + f * 7) % 10) as f64).collect())
            .collect();
        let p = profiles(rows);
        let d = ward_cluster(&p).unwrap();
        let a = bootstrap_pvalues(&p, &d, &small_config(50)).unwrap();
        let b = bootstrap_pvalues(&p, &d, &small_config(50)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_foreign_dendrogram() {
        let p = profiles(vec![vec![0.0], vec![1.0], vec![3.0]]);
        let q = profiles(vec![vec![0.0], vec![1.0]]);
        let d = ward_cluster(&q).unwrap();
        assert!(matches!(
            bootstrap_pvalues(&p, &d, &small_config(10)),
            Err(ClusterError::Mismatch)
        ));
    }
}
