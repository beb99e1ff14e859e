//! Geometry of the evasion: pairwise L2 distance distributions between
//! sample groups, PCA projections for plotting, and the blind-spot
//! verdict contrasting raw-space and latent-space neighborhoods.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::FeatureSpace;

pub const HIST_BINS: usize = 50;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("rank {k} exceeds dimension {dim}")]
    BadRank { k: usize, dim: usize },
    #[error("need at least {need} vectors, have {have}")]
    TooFew { have: usize, need: usize },
    #[error("empty group")]
    Empty,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    /// `HIST_BINS + 1` edges spanning [0, max].
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn build(values: &[f64]) -> Self {
        let max = values.iter().copied().fold(0.0_f64, f64::max);
        let width = max / HIST_BINS as f64;
        let edges = (0..=HIST_BINS).map(|i| i as f64 * width).collect();
        let mut counts = vec![0usize; HIST_BINS];
        for &v in values {
            let bin = if width == 0.0 {
                0
            } else {
                ((v / width) as usize).min(HIST_BINS - 1)
            };
            counts[bin] += 1;
        }
        Self { edges, counts }
    }
}

/// All |A|x|B| Euclidean distances between two sample groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceStudy {
    pub space: FeatureSpace,
    pub pair: String,
    pub distances: Vec<f64>,
    pub mean: f64,
    pub histogram: Histogram,
}

pub fn cross_distances(
    space: FeatureSpace,
    pair: &str,
    a: &[Vec<f64>],
    b: &[Vec<f64>],
) -> Result<DistanceStudy, LatentError> {
    if a.is_empty() || b.is_empty() {
        return Err(LatentError::Empty);
    }
    let dim = a[0].len();
    for v in a.iter().chain(b) {
        if v.len() != dim {
            return Err(LatentError::Shape { expected: dim, got: v.len() });
        }
    }
    let mut distances = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            distances.push(d2.sqrt());
        }
    }
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    let histogram = Histogram::build(&distances);
    Ok(DistanceStudy { space, pair: pair.to_string(), distances, mean, histogram })
}

/// Top-k principal axes with a deterministic sign convention: the
/// largest-magnitude coordinate of each axis is positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Projection {
    pub components: Vec<Vec<f64>>,
    pub coords: Vec<Vec<f64>>,
    pub explained: Vec<f64>,
}

pub fn pca_project(vectors: &[Vec<f64>], k: usize) -> Result<Projection, LatentError> {
    if vectors.is_empty() {
        return Err(LatentError::Empty);
    }
    let dim = vectors[0].len();
    if k > dim {
        return Err(LatentError::BadRank { k, dim });
    }
    if vectors.len() < k + 1 {
        return Err(LatentError::TooFew { have: vectors.len(), need: k + 1 });
    }
    for v in vectors {
        if v.len() != dim {
            return Err(LatentError::Shape { expected: dim, got: v.len() });
        }
    }
    let n = vectors.len();
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for v in vectors {
        let d = DVector::from_iterator(dim, v.iter().zip(&mean).map(|(&x, &m)| x - m));
        cov.syger(1.0 / (n - 1) as f64, &d, &d, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).expect("finite eigenvalues")
    });
    let total: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    let mut components = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let col = eig.eigenvectors.column(idx);
        let mut axis: Vec<f64> = col.iter().copied().collect();
        let dominant = axis
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).expect("finite"))
            .map(|(i, _)| i)
            .expect("nonempty axis");
        if axis[dominant] < 0.0 {
            for x in &mut axis {
                *x = -*x;
            }
        }
        components.push(axis);
        explained.push(if total > 0.0 { eig.eigenvalues[idx].max(0.0) / total } else { 0.0 });
    }
    let coords = vectors
        .iter()
        .map(|v| {
            components
                .iter()
                .map(|axis| {
                    v.iter().zip(&mean).zip(axis).map(|((&x, &m), &a)| (x - m) * a).sum()
                })
                .collect()
        })
        .collect();
    Ok(Projection { components, coords, explained })
}

/// The four means the verdict is built from, kept for reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlindSpotVerdict {
    pub raw_generated_to_train_malicious: f64,
    pub raw_generated_to_train_benign: f64,
    pub latent_generated_to_train_malicious: f64,
    pub latent_generated_to_train_benign: f64,
    /// Generated samples sit closer to malicious in raw space but closer
    /// to benign in latent space.
    pub verdict: bool,
}

pub fn blind_spot_diagnostic(
    raw_gen_malicious: &DistanceStudy,
    raw_gen_benign: &DistanceStudy,
    latent_gen_malicious: &DistanceStudy,
    latent_gen_benign: &DistanceStudy,
) -> BlindSpotVerdict {
    let verdict = raw_gen_malicious.mean < raw_gen_benign.mean
        && latent_gen_benign.mean < latent_gen_malicious.mean;
    BlindSpotVerdict {
        raw_generated_to_train_malicious: raw_gen_malicious.mean,
        raw_generated_to_train_benign: raw_gen_benign.mean,
        latent_generated_to_train_malicious: latent_gen_malicious.mean,
        latent_generated_to_train_benign: latent_gen_benign.mean,
        verdict,
    }
}

/// Histogram rows: `bin_lo,bin_hi,count`.
pub fn distance_csv(study: &DistanceStudy) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, &c) in study.histogram.counts.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            study.histogram.edges[i],
            study.histogram.edges[i + 1],
            c
        ));
    }
    out
}

/// Scatter rows: `sample,group,pc1,...,pck`.
pub fn pca_csv(projection: &Projection, groups: &[&str]) -> String {
    let k = projection.components.len();
    let mut out = String::from("sample,group");
    for i in 1..=k {
        out.push_str(&format!(",pc{i}"));
    }
    out.push('\n');
    for (i, (coords, group)) in projection.coords.iter().zip(groups).enumerate() {
        out.push_str(&format!("{i},{group}"));
        for c in coords {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn singleton_identical_groups_have_zero_distance() {
        let p = vec![vec![1.0, 2.0]];
        let s = cross_distances(FeatureSpace::Raw, "p", &p, &p).unwrap();
        assert_eq!(s.distances, vec![0.0]);
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn three_four_five() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![3.0, 4.0]];
        let s = cross_distances(FeatureSpace::Raw, "p", &a, &b).unwrap();
        assert_eq!(s.distances, vec![5.0]);
    }

    #[test]
    fn mean_matches_two_loop_oracle() {
        let mut rng = crate::rng::substream(3, crate::rng::stream::MODEL_INIT);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect()
        };
        let a = mk(&mut rng, 13);
        let b = mk(&mut rng, 9);
        let s = cross_distances(FeatureSpace::Latent, "p", &a, &b).unwrap();
        let mut oracle = Vec::new();
        for x in &a {
            for y in &b {
                let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
                oracle.push(d2.sqrt());
            }
        }
        assert_eq!(s.distances.len(), 13 * 9);
        let oracle_mean = oracle.iter().sum::<f64>() / oracle.len() as f64;
        assert_eq!(s.mean, oracle_mean);
        assert_eq!(s.distances, oracle);
    }

    #[test]
    fn study_is_symmetric_as_a_multiset() {
        let mut rng = crate::rng::substream(4, crate::rng::stream::MODEL_INIT);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect()
        };
        let a = mk(&mut rng, 7);
        let b = mk(&mut rng, 5);
        let mut ab = cross_distances(FeatureSpace::Raw, "p", &a, &b).unwrap().distances;
        let mut ba = cross_distances(FeatureSpace::Raw, "p", &b, &a).unwrap().distances;
        ab.sort_by(f64::total_cmp);
        ba.sort_by(f64::total_cmp);
        assert_eq!(ab, ba);
    }

    #[test]
    fn scaling_vectors_scales_distances_linearly() {
        let mut rng = crate::rng::substream(5, crate::rng::stream::MODEL_INIT);
        let a: Vec<Vec<f64>> =
            (0..4).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let b: Vec<Vec<f64>> =
            (0..6).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let scale = |v: &[Vec<f64>], c: f64| -> Vec<Vec<f64>> {
            v.iter().map(|x| x.iter().map(|&p| p * c).collect()).collect()
        };
        let base = cross_distances(FeatureSpace::Raw, "p", &a, &b).unwrap();
        let scaled =
            cross_distances(FeatureSpace::Raw, "p", &scale(&a, 2.5), &scale(&b, 2.5)).unwrap();
        for (d, s) in base.distances.iter().zip(&scaled.distances) {
            assert!((s - d * 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_counts_cover_every_distance() {
        let mut rng = crate::rng::substream(6, crate::rng::stream::MODEL_INIT);
        let a: Vec<Vec<f64>> =
            (0..10).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let s = cross_distances(FeatureSpace::Raw, "p", &a, &a).unwrap();
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), s.distances.len());
        assert_eq!(s.histogram.edges.len(), HIST_BINS + 1);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![1.0]];
        assert!(matches!(
            cross_distances(FeatureSpace::Raw, "p", &a, &b),
            Err(LatentError::Shape { expected: 2, got: 1 })
        ));
    }

    fn planted_plane(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = crate::rng::substream(seed, crate::rng::stream::MODEL_INIT);
        // Orthogonal directions e0+e1 and e2-e3, normalized.
        let mut basis = vec![vec![0.0; dim]; 2];
        let r = std::f64::consts::FRAC_1_SQRT_2;
        basis[0][0] = r;
        basis[0][1] = r;
        basis[1][2] = r;
        basis[1][3] = -r;
        (0..n)
            .map(|_| {
                let (u, v) = (rng.random::<f64>() * 4.0, rng.random::<f64>());
                (0..dim).map(|i| u * basis[0][i] + v * basis[1][i]).collect()
            })
            .collect()
    }

    #[test]
    fn plane_bound_points_are_fully_explained_by_two_axes() {
        let pts = planted_plane(40, 8, 7);
        let proj = pca_project(&pts, 2).unwrap();
        let sum: f64 = proj.explained.iter().sum();
        assert!((sum - 1.0).abs() < 1e-8, "explained {sum}");
        // Reconstruction from two axes recovers each point.
        let n = pts.len();
        let mut mean = vec![0.0; 8];
        for p in &pts {
            for (m, &x) in mean.iter_mut().zip(p) {
                *m += x / n as f64;
            }
        }
        for (p, c) in pts.iter().zip(&proj.coords) {
            for i in 0..8 {
                let rec = mean[i]
                    + c[0] * proj.components[0][i]
                    + c[1] * proj.components[1][i];
                assert!((rec - p[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn axes_are_orthonormal_and_ratios_non_increasing() {
        let mut rng = crate::rng::substream(8, crate::rng::stream::MODEL_INIT);
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..5).map(|i| rng.random::<f64>() * (i + 1) as f64).collect())
            .collect();
        let proj = pca_project(&pts, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 =
                    proj.components[i].iter().zip(&proj.components[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "axes {i},{j} dot {dot}");
            }
        }
        for w in proj.explained.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn isotropic_cloud_spreads_variance_evenly() {
        let mut rng = crate::rng::substream(9, crate::rng::stream::MODEL_INIT);
        let pts: Vec<Vec<f64>> = (0..4000)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
                    })
                    .collect()
            })
            .collect();
        let proj = pca_project(&pts, 3).unwrap();
        for &r in &proj.explained {
            assert!((r - 1.0 / 3.0).abs() < 0.03, "ratio {r}");
        }
    }

    #[test]
    fn sign_convention_makes_projection_permutation_invariant() {
        let pts = planted_plane(25, 6, 10);
        let mut shuffled = pts.clone();
        shuffled.rotate_left(11);
        let a = pca_project(&pts, 2).unwrap();
        let b = pca_project(&shuffled, 2).unwrap();
        for (x, y) in a.components.iter().zip(&b.components) {
            for (p, q) in x.iter().zip(y) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_and_size_preconditions_hold() {
        let pts = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(pca_project(&pts, 3), Err(LatentError::BadRank { k: 3, dim: 2 })));
        assert!(matches!(pca_project(&pts, 2), Err(LatentError::TooFew { have: 2, need: 3 })));
    }

    #[test]
    fn blind_spot_verdict_matches_constructed_geometry() {
        let study = |mean: f64| DistanceStudy {
            space: FeatureSpace::Raw,
            pair: "p".into(),
            distances: vec![mean],
            mean,
            histogram: Histogram::build(&[mean]),
        };
        let v = blind_spot_diagnostic(&study(1.0), &study(2.0), &study(5.0), &study(3.0));
        assert!(v.verdict);
        // Swapping the group roles flips the verdict.
        let v = blind_spot_diagnostic(&study(2.0), &study(1.0), &study(3.0), &study(5.0));
        assert!(!v.verdict);
    }

    #[test]
    fn csv_shapes_match_contents() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let s = cross_distances(FeatureSpace::Raw, "p", &a, &a).unwrap();
        let csv = distance_csv(&s);
        assert_eq!(csv.lines().count(), HIST_BINS + 1);
        let proj = pca_project(&planted_plane(10, 4, 3), 2).unwrap();
        let groups: Vec<&str> = (0..10).map(|i| if i < 5 { "m" } else { "b" }).collect();
        let csv = pca_csv(&proj, &groups);
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.starts_with("sample,group,pc1,pc2\n"));
    }
}
