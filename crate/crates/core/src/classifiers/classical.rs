//! Gaussian naive Bayes, linear discriminant analysis, and logistic
//! regression over dense feature vectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::logmodel::Label;

use super::ClfError;

pub(super) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(super) fn split_by_class<'a>(
    features: &'a [Vec<f64>],
    labels: &[Label],
) -> Result<(Vec<&'a [f64]>, Vec<&'a [f64]>), ClfError> {
    if features.is_empty() {
        return Err(ClfError::EmptySet);
    }
    let mut benign = Vec::new();
    let mut malicious = Vec::new();
    for (x, &y) in features.iter().zip(labels) {
        match y {
            Label::Benign => benign.push(x.as_slice()),
            Label::Malicious => malicious.push(x.as_slice()),
        }
    }
    if benign.is_empty() || malicious.is_empty() {
        return Err(ClfError::DegenerateLabels);
    }
    Ok((benign, malicious))
}

fn mean_of(rows: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut mu = vec![0.0; dim];
    for row in rows {
        for (m, &v) in mu.iter_mut().zip(*row) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= rows.len() as f64;
    }
    mu
}

/// Per-class, per-dimension Gaussians with a variance floor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianNb {
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

const VAR_FLOOR: f64 = 1e-9;

pub fn train_naive_bayes(features: &[Vec<f64>], labels: &[Label]) -> Result<GaussianNb, ClfError> {
    let (benign, malicious) = split_by_class(features, labels)?;
    let dim = features[0].len();
    let n = features.len() as f64;
    let stats = |rows: &[&[f64]]| {
        let mu = mean_of(rows, dim);
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((v, &x), m) in var.iter_mut().zip(*row).zip(&mu) {
                *v += (x - m) * (x - m);
            }
        }
        for v in &mut var {
            *v = *v / rows.len() as f64 + VAR_FLOOR;
        }
        (mu, var)
    };
    let (mu_b, var_b) = stats(&benign);
    let (mu_m, var_m) = stats(&malicious);
    Ok(GaussianNb {
        log_prior: [(benign.len() as f64 / n).ln(), (malicious.len() as f64 / n).ln()],
        mean: [mu_b, mu_m],
        var: [var_b, var_m],
    })
}

impl GaussianNb {
    pub fn score(&self, x: &[f64]) -> f64 {
        let log_joint = |c: usize| {
            let mut lp = self.log_prior[c];
            for ((&v, &m), &s2) in x.iter().zip(&self.mean[c]).zip(&self.var[c]) {
                lp -= 0.5 * ((v - m) * (v - m) / s2 + s2.ln() + (2.0 * std::f64::consts::PI).ln());
            }
            lp
        };
        // P(malicious | x) via the log-sum-exp of the two joints.
        sigmoid(log_joint(1) - log_joint(0))
    }
}

/// Fisher discriminant with pooled covariance; the score squashes the
/// discriminant through a sigmoid so it lives on the common [0, 1] scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lda {
    pub w: Vec<f64>,
    pub b: f64,
}

pub fn train_lda(features: &[Vec<f64>], labels: &[Label]) -> Result<Lda, ClfError> {
    let (benign, malicious) = split_by_class(features, labels)?;
    let dim = features[0].len();
    let n = features.len();
    if n <= 2 {
        return Err(ClfError::DegenerateLabels);
    }
    let mu_b = mean_of(&benign, dim);
    let mu_m = mean_of(&malicious, dim);
    let mut pooled = DMatrix::<f64>::zeros(dim, dim);
    let mut accumulate = |rows: &[&[f64]], mu: &[f64]| {
        for row in rows {
            let d = DVector::from_iterator(dim, row.iter().zip(mu).map(|(&x, &m)| x - m));
            pooled.syger(1.0, &d, &d, 1.0);
        }
    };
    accumulate(&benign, &mu_b);
    accumulate(&malicious, &mu_m);
    pooled /= (n - 2) as f64;
    // The upper triangle is left stale by syger; mirror before factoring.
    pooled.fill_upper_triangle_with_lower_triangle();
    let diff = DVector::from_iterator(dim, mu_m.iter().zip(&mu_b).map(|(&a, &b)| a - b));
    let ridge = 1e-9 + 1e-6 * pooled.trace() / dim as f64;
    let mut chol = pooled.clone().cholesky();
    if chol.is_none() {
        for i in 0..dim {
            pooled[(i, i)] += ridge;
        }
        chol = pooled.cholesky();
    }
    let chol = chol.ok_or_else(|| ClfError::Numeric("covariance not positive definite".into()))?;
    let w = chol.solve(&diff);
    let mid = DVector::from_iterator(dim, mu_m.iter().zip(&mu_b).map(|(&a, &b)| (a + b) / 2.0));
    let prior_shift = (malicious.len() as f64 / benign.len() as f64).ln();
    let b = -w.dot(&mid) + prior_shift;
    Ok(Lda { w: w.iter().copied().collect(), b })
}

impl Lda {
    pub fn score(&self, x: &[f64]) -> f64 {
        let z: f64 = self.w.iter().zip(x).map(|(w, v)| w * v).sum();
        sigmoid(z + self.b)
    }
}

/// L2-regularised logistic regression trained by full-batch gradient
/// descent on standardised features. Deterministic: zero init, no sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Logistic {
    pub w: Vec<f64>,
    pub b: f64,
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
}

const LR_STEPS: usize = 400;
const LR_RATE: f64 = 0.5;
const LR_L2: f64 = 1e-4;

pub fn train_logistic(features: &[Vec<f64>], labels: &[Label]) -> Result<Logistic, ClfError> {
    split_by_class(features, labels)?;
    let dim = features[0].len();
    let n = features.len();
    let all: Vec<&[f64]> = features.iter().map(|v| v.as_slice()).collect();
    let feat_mean = mean_of(&all, dim);
    let mut feat_std = vec![0.0; dim];
    for row in features {
        for ((s, &x), m) in feat_std.iter_mut().zip(row).zip(&feat_mean) {
            *s += (x - m) * (x - m);
        }
    }
    for s in &mut feat_std {
        *s = (*s / n as f64).sqrt().max(1e-9);
    }
    let std_rows: Vec<Vec<f64>> = features
        .iter()
        .map(|row| {
            row.iter()
                .zip(&feat_mean)
                .zip(&feat_std)
                .map(|((&x, &m), &s)| (x - m) / s)
                .collect()
        })
        .collect();
    let targets: Vec<f64> = labels.iter().map(|&l| (l == Label::Malicious) as u8 as f64).collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for _ in 0..LR_STEPS {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (row, &t) in std_rows.iter().zip(&targets) {
            let z: f64 = w.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + b;
            let err = sigmoid(z) - t;
            for (g, &x) in gw.iter_mut().zip(row) {
                *g += err * x;
            }
            gb += err;
        }
        for (w, g) in w.iter_mut().zip(&gw) {
            *w -= LR_RATE * (g / n as f64 + LR_L2 * *w);
        }
        b -= LR_RATE * gb / n as f64;
    }
    Ok(Logistic { w, b, feat_mean, feat_std })
}

impl Logistic {
    pub fn score(&self, x: &[f64]) -> f64 {
        let z: f64 = self
            .w
            .iter()
            .zip(x)
            .zip(&self.feat_mean)
            .zip(&self.feat_std)
            .map(|(((w, &v), m), s)| w * (v - m) / s)
            .sum();
        sigmoid(z + self.b)
    }
}
