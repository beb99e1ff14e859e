//! Loss functions with closed-form gradients.

use super::tensor::Tensor;

/// Probability clamp applied inside logs so a saturated sigmoid or
/// softmax cannot produce an infinite loss or gradient.
pub const LOG_EPS: f64 = 1e-7;

/// Mean cross-entropy of logits [B,C] against class indices, with the
/// fused softmax gradient (probabilities - one-hot) / B.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &[usize]) -> (f64, Tensor) {
    let (b, c) = (logits.shape[0], logits.shape[1]);
    assert_eq!(b, targets.len(), "one target per row");
    let mut grad = Tensor::zeros(&logits.shape);
    let mut loss = 0.0;
    for bi in 0..b {
        let row = &logits.data[bi * c..(bi + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let target = targets[bi];
        assert!(target < c, "target class out of range");
        loss -= (exps[target] / sum + LOG_EPS).ln();
        for ci in 0..c {
            let p = exps[ci] / sum;
            grad.data[bi * c + ci] = (p - if ci == target { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    (loss / b as f64, grad)
}

/// Mean binary cross-entropy of probabilities (any shape, one target
/// per element) and its gradient w.r.t. the probabilities.
pub fn bce_from_probs(probs: &Tensor, targets: &[f64]) -> (f64, Tensor) {
    assert_eq!(probs.len(), targets.len(), "one target per probability");
    let n = probs.len() as f64;
    let mut grad = Tensor::zeros(&probs.shape);
    let mut loss = 0.0;
    for (i, (&p, &t)) in probs.data.iter().zip(targets).enumerate() {
        loss -= t * (p + LOG_EPS).ln() + (1.0 - t) * (1.0 - p + LOG_EPS).ln();
        grad.data[i] = -(t / (p + LOG_EPS) - (1.0 - t) / (1.0 - p + LOG_EPS)) / n;
    }
    (loss / n, grad)
}

/// Mean log-probability the rows of `probs` [B,C] assign to the given
/// classes, and its gradient. This is the building block of the GAN
/// objectives, which are sums of such expectations.
pub fn mean_log_prob(probs: &Tensor, classes: &[usize]) -> (f64, Tensor) {
    let (b, c) = (probs.shape[0], probs.shape[1]);
    assert_eq!(b, classes.len(), "one class per row");
    let mut grad = Tensor::zeros(&probs.shape);
    let mut total = 0.0;
    for bi in 0..b {
        let class = classes[bi];
        assert!(class < c, "class out of range");
        let p = probs.data[bi * c + class];
        total += (p + LOG_EPS).ln();
        grad.data[bi * c + class] = 1.0 / ((p + LOG_EPS) * b as f64);
    }
    (total / b as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_of_confident_correct_logits_is_small() {
        let logits = Tensor::new(vec![2, 2], vec![10.0, -10.0, -10.0, 10.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 1]);
        assert!(loss < 1e-6);
    }

    #[test]
    fn fused_gradient_is_probabilities_minus_one_hot() {
        let logits = Tensor::new(vec![1, 3], vec![0.3, -0.2, 0.9]).unwrap();
        let (_, grad) = softmax_cross_entropy(&logits, &[2]);
        let max = 0.9f64;
        let exps: Vec<f64> = [0.3f64, -0.2, 0.9].iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for ci in 0..3 {
            let p = exps[ci] / sum;
            let expect = p - if ci == 2 { 1.0 } else { 0.0 };
            assert!((grad.data[ci] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_is_symmetric_in_its_targets() {
        let p = Tensor::new(vec![2], vec![0.8, 0.2]).unwrap();
        let (l1, _) = bce_from_probs(&p, &[1.0, 0.0]);
        let q = Tensor::new(vec![2], vec![0.2, 0.8]).unwrap();
        let (l2, _) = bce_from_probs(&q, &[0.0, 1.0]);
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn saturated_probabilities_stay_finite() {
        let p = Tensor::new(vec![2], vec![0.0, 1.0]).unwrap();
        let (loss, grad) = bce_from_probs(&p, &[1.0, 0.0]);
        assert!(loss.is_finite());
        assert!(grad.data.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn mean_log_prob_gradient_hits_only_selected_entries() {
        let p = Tensor::new(vec![2, 2], vec![0.7, 0.3, 0.4, 0.6]).unwrap();
        let (v, g) = mean_log_prob(&p, &[0, 1]);
        let expect = ((0.7f64 + LOG_EPS).ln() + (0.6f64 + LOG_EPS).ln()) / 2.0;
        assert!((v - expect).abs() < 1e-12);
        assert!(g.data[1] == 0.0 && g.data[2] == 0.0);
        assert!(g.data[0] > 0.0 && g.data[3] > 0.0);
    }
}
