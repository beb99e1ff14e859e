//! Detector zoo: the convolutional sequence classifier plus six classical
//! models, each trainable on raw code sequences or on the 32-value latent
//! vectors pooled out of the network.

mod classical;
mod forest;
mod metrics;
mod svm;
mod textcnn;

pub use classical::{
    train_lda, train_logistic, train_naive_bayes, GaussianNb, Lda, Logistic,
};
pub use forest::{train_forest, Forest, ForestConfig};
pub use metrics::{evaluate_scores, label_from_score, roc_auc, MetricsReport};
pub use svm::{gamma_scale, train_svm, Kernel, Svm, SvmConfig};
pub use textcnn::{
    extract_latents, train_textcnn, LossTrace, TextCnn, TextCnnCheckpoint, TextCnnConfig,
    LATENT_DIM,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logmodel::{ExecutionLog, Label};
use crate::nncore::NnError;
use crate::par;

#[derive(Debug, Error)]
pub enum ClfError {
    /// Training or evaluation set contains a single class.
    #[error("labels are degenerate: only one class present")]
    DegenerateLabels,
    #[error("empty input set")]
    EmptySet,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalKind {
    NaiveBayes,
    Lda,
    LogisticRegression,
    RandomForest,
    SvmLinear,
    SvmRbf,
}

impl ClassicalKind {
    pub const ALL: [ClassicalKind; 6] = [
        ClassicalKind::NaiveBayes,
        ClassicalKind::Lda,
        ClassicalKind::LogisticRegression,
        ClassicalKind::RandomForest,
        ClassicalKind::SvmLinear,
        ClassicalKind::SvmRbf,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            ClassicalKind::NaiveBayes => "nb",
            ClassicalKind::Lda => "lda",
            ClassicalKind::LogisticRegression => "logreg",
            ClassicalKind::RandomForest => "rf",
            ClassicalKind::SvmLinear => "svm_linear",
            ClassicalKind::SvmRbf => "svm_rbf",
        }
    }

    /// Decision boundary is an affine function of the features.
    pub fn is_linear(self) -> bool {
        matches!(
            self,
            ClassicalKind::Lda | ClassicalKind::LogisticRegression | ClassicalKind::SvmLinear
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ClassicalModel {
    NaiveBayes(GaussianNb),
    Lda(Lda),
    LogisticRegression(Logistic),
    RandomForest(Forest),
    Svm(Svm),
}

impl ClassicalModel {
    pub fn kind(&self) -> ClassicalKind {
        match self {
            ClassicalModel::NaiveBayes(_) => ClassicalKind::NaiveBayes,
            ClassicalModel::Lda(_) => ClassicalKind::Lda,
            ClassicalModel::LogisticRegression(_) => ClassicalKind::LogisticRegression,
            ClassicalModel::RandomForest(_) => ClassicalKind::RandomForest,
            ClassicalModel::Svm(m) => match m.kernel {
                Kernel::Linear => ClassicalKind::SvmLinear,
                Kernel::Rbf { .. } => ClassicalKind::SvmRbf,
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ClassicalModel::NaiveBayes(m) => m.mean[0].len(),
            ClassicalModel::Lda(m) => m.w.len(),
            ClassicalModel::LogisticRegression(m) => m.w.len(),
            ClassicalModel::RandomForest(_) => 0,
            ClassicalModel::Svm(m) => m.support.first().map_or(0, Vec::len),
        }
    }

    /// Malicious score in [0, 1].
    pub fn score(&self, x: &[f64]) -> Result<f64, ClfError> {
        let want = self.dim();
        if want != 0 && x.len() != want {
            return Err(ClfError::Dimension { expected: want, got: x.len() });
        }
        Ok(match self {
            ClassicalModel::NaiveBayes(m) => m.score(x),
            ClassicalModel::Lda(m) => m.score(x),
            ClassicalModel::LogisticRegression(m) => m.score(x),
            ClassicalModel::RandomForest(m) => m.score(x),
            ClassicalModel::Svm(m) => m.score(x),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<(Label, f64), ClfError> {
        let s = self.score(x)?;
        Ok((label_from_score(s), s))
    }
}

pub fn train_classical(
    kind: ClassicalKind,
    features: &[Vec<f64>],
    labels: &[Label],
    seed: u64,
) -> Result<ClassicalModel, ClfError> {
    if features.is_empty() {
        return Err(ClfError::EmptySet);
    }
    Ok(match kind {
        ClassicalKind::NaiveBayes => {
            ClassicalModel::NaiveBayes(train_naive_bayes(features, labels)?)
        }
        ClassicalKind::Lda => ClassicalModel::Lda(train_lda(features, labels)?),
        ClassicalKind::LogisticRegression => {
            ClassicalModel::LogisticRegression(train_logistic(features, labels)?)
        }
        ClassicalKind::RandomForest => ClassicalModel::RandomForest(train_forest(
            features,
            labels,
            ForestConfig::default(),
            seed,
        )?),
        ClassicalKind::SvmLinear => ClassicalModel::Svm(train_svm(
            features,
            labels,
            Kernel::Linear,
            SvmConfig::default(),
            seed,
        )?),
        ClassicalKind::SvmRbf => ClassicalModel::Svm(train_svm(
            features,
            labels,
            Kernel::Rbf { gamma: gamma_scale(features) },
            SvmConfig::default(),
            seed,
        )?),
    })
}

/// Raw feature view: the integer codes, cast to floats, no embedding.
pub fn raw_features(logs: &[ExecutionLog]) -> Vec<Vec<f64>> {
    logs.iter()
        .map(|l| l.codes.iter().map(|c| c.0 as f64).collect())
        .collect()
}

pub fn labels_of(logs: &[ExecutionLog]) -> Vec<Label> {
    logs.iter().map(|l| l.label).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// Codes consumed directly.
    Raw,
    /// Pooled network features.
    Latent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Detector {
    pub name: String,
    pub space: FeatureSpace,
    pub kind: ClassicalKind,
    pub model: ClassicalModel,
}

/// The frozen network plus every classical detector trained beside it.
/// `score_log` routes a raw code sequence through the right feature view.
pub struct DetectorSuite {
    pub extractor: TextCnn,
    pub detectors: Vec<Detector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorId {
    TextCnn,
    Classical { kind: ClassicalKind, space: FeatureSpace },
}

impl DetectorSuite {
    pub fn detector(&self, name: &str) -> Option<&Detector> {
        self.detectors.iter().find(|d| d.name == name)
    }

    pub fn score_log(&self, detector: &Detector, log: &ExecutionLog) -> Result<f64, ClfError> {
        let features = match detector.space {
            FeatureSpace::Raw => log.codes.iter().map(|c| c.0 as f64).collect(),
            FeatureSpace::Latent => self.extractor.latent(&log.codes)?,
        };
        detector.model.score(&features)
    }

    /// Scores for every suite member, network first, in suite order.
    /// Latents are extracted once per log.
    pub fn score_all(&self, log: &ExecutionLog) -> Result<Vec<(String, f64)>, ClfError> {
        let latent = self.extractor.latent(&log.codes)?;
        let raw: Vec<f64> = log.codes.iter().map(|c| c.0 as f64).collect();
        let mut out = vec![("textcnn".to_string(), self.extractor.score(&log.codes)?)];
        for d in &self.detectors {
            let features = match d.space {
                FeatureSpace::Raw => &raw,
                FeatureSpace::Latent => &latent,
            };
            out.push((d.name.clone(), d.model.score(features)?));
        }
        Ok(out)
    }
}

pub fn detector_name(kind: ClassicalKind, space: FeatureSpace) -> String {
    match space {
        FeatureSpace::Raw => format!("{}_raw", kind.slug()),
        FeatureSpace::Latent => format!("{}_latent", kind.slug()),
    }
}

/// Everything needed to rebuild a suite: the network header and weight
/// blob plus the classical models, which serialize whole.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteCheckpoint {
    pub textcnn: TextCnnCheckpoint,
    pub textcnn_blob: Vec<f64>,
    pub detectors: Vec<Detector>,
}

impl DetectorSuite {
    pub fn checkpoint(&self) -> SuiteCheckpoint {
        let (textcnn, textcnn_blob) = self.extractor.checkpoint();
        SuiteCheckpoint { textcnn, textcnn_blob, detectors: self.detectors.clone() }
    }

    pub fn restore(ckpt: SuiteCheckpoint) -> Result<Self, ClfError> {
        let extractor = TextCnn::restore(ckpt.textcnn, &ckpt.textcnn_blob)?;
        Ok(Self { extractor, detectors: ckpt.detectors })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub textcnn: TextCnnConfig,
    pub kinds: Vec<ClassicalKind>,
    pub include_raw: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            textcnn: TextCnnConfig::default(),
            kinds: ClassicalKind::ALL.to_vec(),
            include_raw: false,
        }
    }
}

/// Trains the network, freezes it, extracts training latents once, then
/// fits every classical detector. Classical fits are independent and run
/// on the worker pool.
pub fn train_suite(
    train: &[ExecutionLog],
    config: &SuiteConfig,
    seed: u64,
) -> Result<(DetectorSuite, LossTrace), ClfError> {
    let (extractor, trace) = train_textcnn(train, config.textcnn.clone(), seed)?;
    let latents = extract_latents(&extractor, train)?;
    let labels = labels_of(train);
    let mut jobs: Vec<(ClassicalKind, FeatureSpace)> =
        config.kinds.iter().map(|&k| (k, FeatureSpace::Latent)).collect();
    if config.include_raw {
        jobs.extend(config.kinds.iter().map(|&k| (k, FeatureSpace::Raw)));
    }
    let raw = if config.include_raw { raw_features(train) } else { Vec::new() };
    let detectors: Vec<Result<Detector, ClfError>> = par::map_vec(&jobs, |&(kind, space)| {
        let features = match space {
            FeatureSpace::Latent => &latents,
            FeatureSpace::Raw => &raw,
        };
        let model = train_classical(kind, features, &labels, seed)?;
        Ok(Detector { name: detector_name(kind, space), space, kind, model })
    });
    let detectors = detectors.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((DetectorSuite { extractor, detectors }, trace))
}

/// Metrics for one detector over a labelled test set.
pub fn evaluate_detector(
    suite: &DetectorSuite,
    name: &str,
    logs: &[ExecutionLog],
) -> Result<MetricsReport, ClfError> {
    let pairs = score_pairs(suite, name, logs)?;
    evaluate_scores(&pairs)
}

fn score_pairs(
    suite: &DetectorSuite,
    name: &str,
    logs: &[ExecutionLog],
) -> Result<Vec<(f64, Label)>, ClfError> {
    if logs.is_empty() {
        return Err(ClfError::EmptySet);
    }
    if name == "textcnn" {
        let chunks: Vec<&[ExecutionLog]> = logs.chunks(128).collect();
        let scored = par::map_vec(&chunks, |chunk| {
            let rows: Vec<&[crate::logmodel::EventCode]> =
                chunk.iter().map(|l| l.codes.as_slice()).collect();
            suite.extractor.score_batch(&rows)
        });
        let mut pairs = Vec::with_capacity(logs.len());
        let mut it = logs.iter();
        for chunk in scored {
            for s in chunk? {
                pairs.push((s, it.next().expect("score per log").label));
            }
        }
        return Ok(pairs);
    }
    let detector = suite
        .detector(name)
        .ok_or_else(|| ClfError::Numeric(format!("unknown detector {name}")))?;
    match detector.space {
        FeatureSpace::Latent => {
            let latents = extract_latents(&suite.extractor, logs)?;
            latents
                .iter()
                .zip(logs)
                .map(|(x, l)| Ok((detector.model.score(x)?, l.label)))
                .collect()
        }
        FeatureSpace::Raw => logs
            .iter()
            .map(|l| {
                let x: Vec<f64> = l.codes.iter().map(|c| c.0 as f64).collect();
                Ok((detector.model.score(&x)?, l.label))
            })
            .collect(),
    }
}

/// Fraction of the given logs a detector flags as malicious. The inputs
/// are adversarial candidates, so labels are ignored; empty input is an
/// error rather than a vacuous zero.
pub fn adversarial_detection_rate(
    suite: &DetectorSuite,
    name: &str,
    logs: &[ExecutionLog],
) -> Result<f64, ClfError> {
    let pairs = score_pairs(suite, name, logs)?;
    let flagged = pairs.iter().filter(|(s, _)| label_from_score(*s) == Label::Malicious).count();
    Ok(flagged as f64 / pairs.len() as f64)
}
