//! The attack, end to end: train the generator on the training split,
//! draw candidate segments, keep only the ones the n-gram rule accepts
//! (regenerating the shortfall), concatenate survivors into full-length
//! logs, and score every frozen detector against them.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acgan::{segments_with_labels, train_gan, Acgan, GanConfig, GanError, TrainTrace};
use crate::classifiers::{ClfError, DetectorSuite};
use crate::logmodel::{
    concat_segments, Corpus, ExecutionLog, Label, LogError, Origin, Segment, SEGMENTS_PER_LOG,
};
use crate::ngram::{
    batch_quality, filter_quality, NgramError, QualityReport, QualityScorer, DEFAULT_N_RULE,
};
use crate::rng::{self, stream};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    BadConfig(&'static str),
    #[error(
        "quality starvation after {} rounds with {}/{} passing segments",
        partial.rounds.len(),
        partial.passed(),
        partial.target
    )]
    QualityStarvation { partial: Box<AttackReport> },
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Ngram(#[from] NgramError),
    #[error(transparent)]
    Clf(#[from] ClfError),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Target number of quality-passing generated segments.
    pub k: usize,
    pub tau: f64,
    pub n_rule: Vec<usize>,
    pub concat_count: usize,
    pub max_rounds: usize,
    pub seed: u64,
    pub gan: GanConfig,
    /// Segments with fewer non-padding codes than this fraction are
    /// left out of generator training.
    pub min_content_ratio: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            k: 512,
            tau: 1.5,
            n_rule: DEFAULT_N_RULE.to_vec(),
            concat_count: SEGMENTS_PER_LOG,
            max_rounds: 20,
            seed: 1,
            gan: GanConfig::default(),
            min_content_ratio: 0.25,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::BadConfig("k must be positive"));
        }
        if self.max_rounds == 0 {
            return Err(PipelineError::BadConfig("max_rounds must be at least 1"));
        }
        if self.concat_count == 0 {
            return Err(PipelineError::BadConfig("concat_count must be positive"));
        }
        if self.n_rule.is_empty() {
            return Err(PipelineError::BadConfig("n_rule must name at least one window"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RoundStats {
    pub requested: usize,
    pub passed: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionRate {
    pub detected: usize,
    pub total: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackReport {
    pub target: usize,
    pub rounds: Vec<RoundStats>,
    pub log_count: usize,
    /// Per-detector, per-log malicious verdicts, in log order.
    pub flags: BTreeMap<String, Vec<bool>>,
    pub detection: BTreeMap<String, DetectionRate>,
    pub quality: QualityReport,
}

impl AttackReport {
    pub fn passed(&self) -> usize {
        self.rounds.iter().map(|r| r.passed).sum()
    }
}

/// Anything that can produce candidate segments on demand.
pub trait SegmentSource {
    fn request(&mut self, count: usize) -> Result<Vec<Segment>, GanError>;
}

/// Draws from a trained generator with fresh noise every round.
pub struct GanSource<'a> {
    gan: &'a Acgan,
    label: Label,
    seed: u64,
    round: u64,
}

impl<'a> GanSource<'a> {
    pub fn new(gan: &'a Acgan, label: Label, seed: u64) -> Self {
        Self { gan, label, seed, round: 0 }
    }
}

impl SegmentSource for GanSource<'_> {
    fn request(&mut self, count: usize) -> Result<Vec<Segment>, GanError> {
        self.round += 1;
        let round_seed = self.seed ^ self.round.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        self.gan.generate(self.label, count, round_seed)
    }
}

/// Keep requesting the deficit until `k` segments pass the rule or the
/// round budget runs out.
pub fn regeneration_loop<S: SegmentSource>(
    source: &mut S,
    scorer: &QualityScorer,
    k: usize,
    tau: f64,
    n_rule: &[usize],
    max_rounds: usize,
) -> Result<(Vec<Segment>, Vec<RoundStats>), PipelineError> {
    let mut kept: Vec<Segment> = Vec::with_capacity(k);
    let mut rounds = Vec::new();
    for _ in 0..max_rounds {
        let deficit = k - kept.len();
        if deficit == 0 {
            break;
        }
        let batch = source.request(deficit)?;
        let rounded: Vec<Vec<_>> = batch.iter().map(|s| s.rounded_codes()).collect();
        let (ok, _) = filter_quality(&rounded, scorer, tau, n_rule);
        rounds.push(RoundStats { requested: deficit, passed: ok.len() });
        for i in ok {
            kept.push(batch[i].clone());
        }
    }
    if kept.len() < k {
        let quality =
            batch_quality(&kept.iter().map(|s| s.rounded_codes()).collect::<Vec<_>>(), scorer, tau);
        let partial = AttackReport {
            target: k,
            rounds,
            log_count: 0,
            flags: BTreeMap::new(),
            detection: BTreeMap::new(),
            quality,
        };
        return Err(PipelineError::QualityStarvation { partial: Box::new(partial) });
    }
    Ok((kept, rounds))
}

/// Shuffle the passing segments once, then consume disjoint runs of
/// `concat_count` per log; a short tail is dropped.
pub fn assemble_logs(
    segments: &[Segment],
    concat_count: usize,
    seed: u64,
) -> Result<Vec<ExecutionLog>, PipelineError> {
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.shuffle(&mut rng::substream(seed, stream::ATTACK));
    let mut logs = Vec::with_capacity(segments.len() / concat_count);
    for chunk in order.chunks_exact(concat_count) {
        let picked: Vec<Segment> = chunk.iter().map(|&i| segments[i].clone()).collect();
        let codes = concat_segments(&picked, concat_count)?;
        logs.push(ExecutionLog::new(codes, Label::Malicious, Origin::Generated)?);
    }
    Ok(logs)
}

/// Fraction of logs a predicate flags.
pub fn rate_logs<F: Fn(&ExecutionLog) -> bool>(logs: &[ExecutionLog], flag: F) -> DetectionRate {
    let flags: Vec<bool> = logs.iter().map(flag).collect();
    rate_from_flags(&flags)
}

pub fn rate_from_flags(flags: &[bool]) -> DetectionRate {
    let detected = flags.iter().filter(|&&f| f).count();
    let total = flags.len();
    let rate = if total == 0 { 0.0 } else { detected as f64 / total as f64 };
    DetectionRate { detected, total, rate }
}

/// Reference n-gram sets come from the held-out test split.
pub fn scorer_from_corpus(corpus: &Corpus, ns: &[usize]) -> Result<QualityScorer, NgramError> {
    let mal: Vec<Vec<_>> = corpus
        .test
        .iter()
        .filter(|l| l.label == Label::Malicious)
        .map(|l| l.codes.clone())
        .collect();
    let ben: Vec<Vec<_>> = corpus
        .test
        .iter()
        .filter(|l| l.label == Label::Benign)
        .map(|l| l.codes.clone())
        .collect();
    QualityScorer::new(&mal, &ben, ns)
}

/// Segments used to fit the generator: every segment of every training
/// log that carries enough non-padding content.
pub fn gan_training_segments(corpus: &Corpus, min_content_ratio: f64) -> Vec<(Segment, Label)> {
    segments_with_labels(&corpus.train)
        .into_iter()
        .filter(|(s, _)| s.content_ratio() >= min_content_ratio)
        .collect()
}

pub struct AttackOutcome {
    pub report: AttackReport,
    pub logs: Vec<ExecutionLog>,
    pub gan: Acgan,
    pub gan_trace: TrainTrace,
}

/// The whole attack against a frozen detector suite.
pub fn run_attack(
    corpus: &Corpus,
    suite: &DetectorSuite,
    config: &AttackConfig,
) -> Result<AttackOutcome, PipelineError> {
    config.validate()?;
    let training = gan_training_segments(corpus, config.min_content_ratio);
    let (gan, gan_trace) = train_gan(&training, &config.gan, config.seed)?;
    let scorer = scorer_from_corpus(corpus, &config.n_rule)?;
    let mut source = GanSource::new(&gan, Label::Malicious, config.seed);
    let (segments, rounds) = regeneration_loop(
        &mut source,
        &scorer,
        config.k,
        config.tau,
        &config.n_rule,
        config.max_rounds,
    )?;
    let logs = assemble_logs(&segments, config.concat_count, config.seed)?;
    let quality = batch_quality(
        &segments.iter().map(|s| s.rounded_codes()).collect::<Vec<_>>(),
        &scorer,
        config.tau,
    );
    let mut flags: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    for log in &logs {
        for (name, score) in suite.score_all(log)? {
            flags.entry(name).or_default().push(score > 0.5);
        }
    }
    let detection: BTreeMap<String, DetectionRate> =
        flags.iter().map(|(name, f)| (name.clone(), rate_from_flags(f))).collect();
    let report = AttackReport {
        target: config.k,
        rounds,
        log_count: logs.len(),
        flags,
        detection,
        quality,
    };
    Ok(AttackOutcome { report, logs, gan, gan_trace })
}

/// Table rows `classifier,detected,total,rate`, suite order not
/// guaranteed; callers sort by name via the BTreeMap already.
pub fn detection_csv(report: &AttackReport) -> String {
    let mut out = String::from("classifier,detected,total,rate\n");
    for (name, d) in &report.detection {
        out.push_str(&format!("{name},{},{},{}\n", d.detected, d.total, d.rate));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logmodel::{EventCode, SEGMENT_LEN};

    fn seg_from(codes: &[u8]) -> Segment {
        let mut vals: Vec<f64> = codes.iter().map(|&c| c as f64).collect();
        vals.resize(SEGMENT_LEN, 0.0);
        Segment { codes: vals, provenance: crate::logmodel::Provenance::Generated }
    }

    /// Scorer whose malicious references contain [5,2,7,1,9...] patterns
    /// and whose benign references hold a disjoint alphabet region.
    fn toy_scorer() -> QualityScorer {
        let mal: Vec<Vec<EventCode>> = vec![
            [5u8, 2, 7, 1, 9, 5, 2, 7, 1, 9, 5, 2, 7, 1, 9].iter().map(|&c| EventCode(c)).collect(),
        ];
        let ben: Vec<Vec<EventCode>> =
            vec![[3u8, 8, 6, 3, 8, 6, 3, 8, 6, 3, 8, 6].iter().map(|&c| EventCode(c)).collect()];
        QualityScorer::new(&mal, &ben, &[3, 4]).unwrap()
    }

    struct Stub {
        pass: Segment,
        fail: Segment,
        pass_every: usize,
        calls: usize,
    }

    impl SegmentSource for Stub {
        fn request(&mut self, count: usize) -> Result<Vec<Segment>, GanError> {
            let out = (0..count)
                .map(|_| {
                    self.calls += 1;
                    if self.pass_every > 0 && self.calls % self.pass_every == 0 {
                        self.pass.clone()
                    } else {
                        self.fail.clone()
                    }
                })
                .collect();
            Ok(out)
        }
    }

    fn stub(pass_every: usize) -> Stub {
        Stub {
            pass: seg_from(&[5, 2, 7, 1, 9, 5, 2, 7, 1, 9]),
            fail: seg_from(&[3, 8, 6, 3, 8, 6, 3, 8, 6]),
            pass_every,
            calls: 0,
        }
    }

    #[test]
    fn always_passing_source_finishes_in_one_round() {
        let scorer = toy_scorer();
        let (segments, rounds) =
            regeneration_loop(&mut stub(1), &scorer, 12, 1.5, &[3, 4], 20).unwrap();
        assert_eq!(segments.len(), 12);
        assert_eq!(rounds.len(), 1);
        assert_eq!(rounds[0].passed, 12);
    }

    #[test]
    fn half_passing_source_converges_within_budget() {
        let scorer = toy_scorer();
        let (segments, rounds) =
            regeneration_loop(&mut stub(2), &scorer, 100, 1.5, &[3, 4], 20).unwrap();
        assert_eq!(segments.len(), 100);
        assert!(rounds.len() > 1 && rounds.len() <= 20, "rounds {}", rounds.len());
        // Each round requests only the shortfall.
        let mut remaining = 100;
        for r in &rounds {
            assert_eq!(r.requested, remaining);
            remaining -= r.passed;
        }
        assert_eq!(remaining, 0);
    }

    #[test]
    fn never_passing_source_starves_with_partial_report() {
        let scorer = toy_scorer();
        let err = regeneration_loop(&mut stub(0), &scorer, 10, 1.5, &[3, 4], 3).unwrap_err();
        match err {
            PipelineError::QualityStarvation { partial } => {
                assert_eq!(partial.rounds.len(), 3);
                assert_eq!(partial.passed(), 0);
                assert_eq!(partial.target, 10);
                assert_eq!(partial.log_count, 0);
            }
            other => panic!("expected starvation, got {other}"),
        }
    }

    #[test]
    fn assembled_logs_use_disjoint_runs_and_drop_the_tail() {
        let segments: Vec<Segment> = (0..11)
            .map(|i| seg_from(&[5, 2, 7, (i % 9) + 1]))
            .collect();
        let logs = assemble_logs(&segments, 4, 7).unwrap();
        assert_eq!(logs.len(), 2);
        for log in &logs {
            assert_eq!(log.codes.len(), crate::logmodel::LOG_LEN);
            assert_eq!(log.label, Label::Malicious);
            assert_eq!(log.origin, Origin::Generated);
        }
    }

    #[test]
    fn assembly_is_deterministic_per_seed() {
        let segments: Vec<Segment> = (0..16).map(|i| seg_from(&[5, 2, 7, (i % 9) + 1])).collect();
        let a = assemble_logs(&segments, 4, 3).unwrap();
        let b = assemble_logs(&segments, 4, 3).unwrap();
        let c = assemble_logs(&segments, 4, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn oracle_detector_flags_every_log_containing_its_code() {
        let segments: Vec<Segment> = (0..8).map(|_| seg_from(&[5, 2, 7, 1, 9])).collect();
        let logs = assemble_logs(&segments, 4, 1).unwrap();
        let rate = rate_logs(&logs, |log| log.codes.contains(&EventCode(7)));
        assert_eq!(rate.rate, 1.0);
        assert_eq!(rate.detected, rate.total);
    }

    #[test]
    fn config_validation_rejects_degenerate_values() {
        let mut config = AttackConfig { k: 0, ..AttackConfig::default() };
        assert!(matches!(config.validate(), Err(PipelineError::BadConfig(_))));
        config.k = 4;
        config.max_rounds = 0;
        assert!(matches!(config.validate(), Err(PipelineError::BadConfig(_))));
        config.max_rounds = 1;
        config.validate().unwrap();
    }

    #[test]
    fn detection_csv_lists_every_detector() {
        let mut flags = BTreeMap::new();
        flags.insert("a".to_string(), vec![true, false]);
        flags.insert("b".to_string(), vec![false, false]);
        let detection: BTreeMap<String, DetectionRate> =
            flags.iter().map(|(n, f)| (n.clone(), rate_from_flags(f))).collect();
        let report = AttackReport {
            target: 8,
            rounds: vec![RoundStats { requested: 8, passed: 8 }],
            log_count: 2,
            flags,
            detection,
            quality: batch_quality(&[], &toy_scorer(), 1.5),
        };
        let csv = detection_csv(&report);
        assert_eq!(csv, "classifier,detected,total,rate\na,1,2,0.5\nb,0,2,0\n");
        // Rates recompute exactly from the stored flags.
        for (name, d) in &report.detection {
            let again = rate_from_flags(&report.flags[name]);
            assert_eq!(again.rate, d.rate);
        }
    }
}
