//! Soft-margin SVM trained by sequential minimal optimization with a
//! dense kernel cache. Linear and Gaussian kernels share the solver.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::logmodel::Label;
use crate::rng;

use super::classical::{sigmoid, split_by_class};
use super::ClfError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Matches the common "scale" heuristic: 1 / (d * Var(X)).
pub fn gamma_scale(features: &[Vec<f64>]) -> f64 {
    let dim = features[0].len();
    let n = (features.len() * dim) as f64;
    let mean: f64 = features.iter().flatten().sum::<f64>() / n;
    let var: f64 = features.iter().flatten().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    1.0 / (dim as f64 * var.max(1e-12))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub max_sweeps: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, tol: 1e-3, max_passes: 5, max_sweeps: 400 }
    }
}

/// Only support vectors are retained; `coef` folds alpha and the sign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Svm {
    pub kernel: Kernel,
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub bias: f64,
}

pub fn train_svm(
    features: &[Vec<f64>],
    labels: &[Label],
    kernel: Kernel,
    config: SvmConfig,
    seed: u64,
) -> Result<Svm, ClfError> {
    split_by_class(features, labels)?;
    let n = features.len();
    let y: Vec<f64> = labels
        .iter()
        .map(|&l| if l == Label::Malicious { 1.0 } else { -1.0 })
        .collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&features[i], &features[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let mut alpha = vec![0.0; n];
    let mut b = 0.0;
    let mut rng = rng::substream(seed, rng::stream::MODEL_INIT);
    let margin = |alpha: &[f64], b: f64, i: usize| -> f64 {
        let mut s = b;
        for j in 0..n {
            if alpha[j] != 0.0 {
                s += alpha[j] * y[j] * k[i * n + j];
            }
        }
        s
    };
    let mut quiet_passes = 0;
    let mut sweeps = 0;
    while quiet_passes < config.max_passes && sweeps < config.max_sweeps {
        sweeps += 1;
        let mut changed = 0;
        for i in 0..n {
            let e_i = margin(&alpha, b, i) - y[i];
            let violates = (y[i] * e_i < -config.tol && alpha[i] < config.c)
                || (y[i] * e_i > config.tol && alpha[i] > 0.0);
            if !violates {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let e_j = margin(&alpha, b, j) - y[j];
            let (a_i_old, a_j_old) = (alpha[i], alpha[j]);
            let (lo, hi) = if y[i] != y[j] {
                ((a_j_old - a_i_old).max(0.0), (config.c + a_j_old - a_i_old).min(config.c))
            } else {
                ((a_i_old + a_j_old - config.c).max(0.0), (a_i_old + a_j_old).min(config.c))
            };
            // Arithmetic drift can push the box a hair inside out.
            if hi <= lo + 1e-12 {
                continue;
            }
            let eta = 2.0 * k[i * n + j] - k[i * n + i] - k[j * n + j];
            if eta >= 0.0 {
                continue;
            }
            let mut a_j = a_j_old - y[j] * (e_i - e_j) / eta;
            a_j = a_j.clamp(lo, hi);
            if (a_j - a_j_old).abs() < 1e-5 {
                continue;
            }
            let a_i = (a_i_old + y[i] * y[j] * (a_j_old - a_j)).clamp(0.0, config.c);
            alpha[i] = a_i;
            alpha[j] = a_j;
            let b1 = b - e_i
                - y[i] * (a_i - a_i_old) * k[i * n + i]
                - y[j] * (a_j - a_j_old) * k[i * n + j];
            let b2 = b - e_j
                - y[i] * (a_i - a_i_old) * k[i * n + j]
                - y[j] * (a_j - a_j_old) * k[j * n + j];
            b = if 0.0 < a_i && a_i < config.c {
                b1
            } else if 0.0 < a_j && a_j < config.c {
                b2
            } else {
                (b1 + b2) / 2.0
            };
            changed += 1;
        }
        quiet_passes = if changed == 0 { quiet_passes + 1 } else { 0 };
    }
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for i in 0..n {
        if alpha[i] > 1e-12 {
            support.push(features[i].clone());
            coef.push(alpha[i] * y[i]);
        }
    }
    Ok(Svm { kernel, support, coef, bias: b })
}

impl Svm {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Margin squashed onto [0, 1] so SVM scores rank like probabilities.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor(n_per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut rng = crate::rng::substream(seed, crate::rng::stream::CORPUS);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n_per {
            for (sx, sy) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
                xs.push(vec![
                    sx + (rng.random::<f64>() - 0.5) * 0.6,
                    sy + (rng.random::<f64>() - 0.5) * 0.6,
                ]);
                ys.push(if sx == sy { Label::Malicious } else { Label::Benign });
            }
        }
        (xs, ys)
    }

    fn accuracy(svm: &Svm, xs: &[Vec<f64>], ys: &[Label]) -> f64 {
        let hits = xs
            .iter()
            .zip(ys)
            .filter(|(x, &y)| super::super::metrics::label_from_score(svm.score(x)) == y)
            .count();
        hits as f64 / xs.len() as f64
    }

    #[test]
    fn rbf_solves_xor_while_linear_cannot() {
        let (xs, ys) = xor(60, 13);
        let gamma = gamma_scale(&xs);
        let rbf =
            train_svm(&xs, &ys, Kernel::Rbf { gamma }, SvmConfig::default(), 1).unwrap();
        let linear = train_svm(&xs, &ys, Kernel::Linear, SvmConfig::default(), 1).unwrap();
        // A linear boundary can carve off at most three of the four
        // clusters, capping it at 0.75 plus noise.
        let (acc_rbf, acc_lin) = (accuracy(&rbf, &xs, &ys), accuracy(&linear, &xs, &ys));
        assert!(acc_rbf >= 0.95, "rbf accuracy {acc_rbf}");
        assert!(acc_lin <= 0.8, "linear accuracy {acc_lin}");
        assert!(acc_rbf - acc_lin >= 0.2, "gap {}", acc_rbf - acc_lin);
    }

    #[test]
    fn wide_margin_data_keeps_few_support_vectors() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut rng = crate::rng::substream(2, crate::rng::stream::CORPUS);
        for _ in 0..80 {
            xs.push(vec![rng.random::<f64>() - 3.0, rng.random::<f64>()]);
            ys.push(Label::Benign);
            xs.push(vec![rng.random::<f64>() + 3.0, rng.random::<f64>()]);
            ys.push(Label::Malicious);
        }
        let svm = train_svm(&xs, &ys, Kernel::Linear, SvmConfig::default(), 1).unwrap();
        assert!(accuracy(&svm, &xs, &ys) == 1.0);
        assert!(svm.support.len() < xs.len() / 4, "{} support vectors", svm.support.len());
    }

    #[test]
    fn margin_sign_matches_score_side() {
        let (xs, ys) = xor(30, 17);
        let svm = train_svm(
            &xs,
            &ys,
            Kernel::Rbf { gamma: gamma_scale(&xs) },
            SvmConfig::default(),
            1,
        )
        .unwrap();
        for x in &xs {
            let m = svm.margin(x);
            let s = svm.score(x);
            assert_eq!(m > 0.0, s > 0.5);
        }
    }

    #[test]
    fn same_seed_reproduces_the_model() {
        let (xs, ys) = xor(20, 19);
        let cfg = SvmConfig::default();
        let gamma = gamma_scale(&xs);
        let a = train_svm(&xs, &ys, Kernel::Rbf { gamma }, cfg, 7).unwrap();
        let b = train_svm(&xs, &ys, Kernel::Rbf { gamma }, cfg, 7).unwrap();
        assert_eq!(a.coef, b.coef);
        assert_eq!(a.bias, b.bias);
    }
}
