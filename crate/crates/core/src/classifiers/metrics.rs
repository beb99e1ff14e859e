//! Binary classification metrics over (score, truth) pairs.
//!
//! Malicious is the positive class. The decision rule is score > 0.5;
//! an exact 0.5 resolves to benign, keeping ties conservative for the
//! false-positive rate.

use serde::{Deserialize, Serialize};

use crate::logmodel::Label;

use super::ClfError;

/// Decision rule shared by every detector.
pub fn label_from_score(score: f64) -> Label {
    if score > 0.5 {
        Label::Malicious
    } else {
        Label::Benign
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub f1: f64,
    pub auc: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Area under the ROC curve by threshold sweep with trapezoids;
/// tied scores advance together so the result is tie-correct.
pub fn roc_auc(pairs: &[(f64, Label)]) -> f64 {
    let pos = pairs.iter().filter(|(_, l)| *l == Label::Malicious).count();
    let neg = pairs.len() - pos;
    debug_assert!(pos > 0 && neg > 0);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[b].0.partial_cmp(&pairs[a].0).expect("finite scores"));
    let trapezoid =
        |x1: f64, x0: f64, y1: f64, y0: f64| (x1 - x0) * (y1 + y0) / 2.0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut tp_prev, mut fp_prev) = (0u64, 0u64);
    let mut area = 0.0;
    let mut prev_score = f64::INFINITY;
    for &i in &order {
        let (score, label) = pairs[i];
        if score != prev_score {
            area += trapezoid(fp as f64, fp_prev as f64, tp as f64, tp_prev as f64);
            prev_score = score;
            tp_prev = tp;
            fp_prev = fp;
        }
        match label {
            Label::Malicious => tp += 1,
            Label::Benign => fp += 1,
        }
    }
    area += trapezoid(fp as f64, fp_prev as f64, tp as f64, tp_prev as f64);
    area / (pos as f64 * neg as f64)
}

/// Full report from scored test pairs. Requires both classes.
pub fn evaluate_scores(pairs: &[(f64, Label)]) -> Result<MetricsReport, ClfError> {
    if pairs.is_empty() {
        return Err(ClfError::EmptySet);
    }
    let pos = pairs.iter().filter(|(_, l)| *l == Label::Malicious).count();
    if pos == 0 || pos == pairs.len() {
        return Err(ClfError::DegenerateLabels);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for &(score, truth) in pairs {
        match (label_from_score(score), truth) {
            (Label::Malicious, Label::Malicious) => tp += 1,
            (Label::Malicious, Label::Benign) => fp += 1,
            (Label::Benign, Label::Benign) => tn += 1,
            (Label::Benign, Label::Malicious) => fn_ += 1,
        }
    }
    let total = pairs.len() as f64;
    let f1_den = 2 * tp + fp + fn_;
    Ok(MetricsReport {
        accuracy: (tp + tn) as f64 / total,
        fpr: fp as f64 / (fp + tn) as f64,
        tpr: tp as f64 / (tp + fn_) as f64,
        f1: if f1_den == 0 { 0.0 } else { 2.0 * tp as f64 / f1_den as f64 },
        auc: roc_auc(pairs),
        tp,
        fp,
        tn,
        fn_,
    })
}
