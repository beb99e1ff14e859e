//! Synthetic corpus generation.
//!
//! Real ransomware telemetry is not redistributable, so experiments
//! run on a synthetic stand-in: behavior templates that emit event
//! streams with the texture described for crypto-ransomware (bursts of
//! rename, create, delete, and high-entropy content changes) and for
//! benign software (installs, backups, compression with high-entropy
//! writes but few renames, idle chatter). Generation is a pure
//! function of the config: every log draws its own RNG substream from
//! (seed, log index), so corpora are reproducible byte for byte and
//! logs may be generated in parallel.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logmodel::{
    to_feature_sequence, Corpus, EventRecord, ExecutionLog, Label, Origin,
};
use crate::par;
use crate::rng::{self, stream};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("template {0}: distribution weights must be positive and sum to 1")]
    BadDistribution(String),
    #[error("template {0}: length and repeat ranges must be positive and ordered")]
    BadRange(String),
    #[error("template {0}: distribution codes must be in 1..=9")]
    BadCode(String),
    #[error("config: {0}")]
    BadConfig(String),
}

/// One phase of a behavior: codes drawn iid from `dist`, block length
/// drawn uniformly from the inclusive `len` range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseBlock {
    pub dist: Vec<(u8, f64)>,
    pub len: (usize, usize),
}

/// A process behavior: the phase blocks run in order, and the whole
/// cycle repeats a random number of times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BehaviorTemplate {
    pub name: String,
    pub phase_blocks: Vec<PhaseBlock>,
    pub repeat: (usize, usize),
}

impl BehaviorTemplate {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.phase_blocks.is_empty() || self.repeat.0 < 1 || self.repeat.0 > self.repeat.1 {
            return Err(SynthError::BadRange(self.name.clone()));
        }
        for block in &self.phase_blocks {
            if block.len.0 < 1 || block.len.0 > block.len.1 {
                return Err(SynthError::BadRange(self.name.clone()));
            }
            let sum: f64 = block.dist.iter().map(|&(_, w)| w).sum();
            if block.dist.is_empty()
                || block.dist.iter().any(|&(_, w)| w <= 0.0)
                || (sum - 1.0).abs() > 1e-9
            {
                return Err(SynthError::BadDistribution(self.name.clone()));
            }
            if block.dist.iter().any(|&(c, _)| c == 0 || c > 9) {
                return Err(SynthError::BadCode(self.name.clone()));
            }
        }
        Ok(())
    }
}

/// The malicious and benign template pools a corpus draws from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateSet {
    pub malicious: Vec<BehaviorTemplate>,
    pub benign: Vec<BehaviorTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self { malicious: default_malicious_templates(), benign: default_benign_templates() }
    }
}

/// Corpus shape: split sizes, seed, and the malicious family mix
/// (empty means uniform over the malicious templates).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_benign_train: usize,
    pub n_malicious_train: usize,
    pub n_benign_test: usize,
    pub n_malicious_test: usize,
    pub seed: u64,
    #[serde(default)]
    pub family_mix: Vec<f64>,
    #[serde(default)]
    pub templates: TemplateSet,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_benign_train: 258,
            n_malicious_train: 747,
            n_benign_test: 65,
            n_malicious_test: 187,
            seed: 1,
            family_mix: Vec::new(),
            templates: TemplateSet::default(),
        }
    }
}

fn block(dist: &[(u8, f64)], len: (usize, usize)) -> PhaseBlock {
    PhaseBlock { dist: dist.to_vec(), len }
}

fn template(name: &str, repeat: (usize, usize), blocks: Vec<PhaseBlock>) -> BehaviorTemplate {
    BehaviorTemplate { name: name.into(), phase_blocks: blocks, repeat }
}

/// Ransomware-like behaviors. `locky_like` renames, recreates, then
/// writes near-maximal-entropy content every cycle, so its encoding
/// always contains the contiguous motif (7,5,2). Ransomware churns
/// through the whole corpus, so these run long enough to fill most of
/// the 3000-event window, and each cycle interleaves ordinary-looking
/// reads and writes the way a payload hiding among system activity
/// would.
pub fn default_malicious_templates() -> Vec<BehaviorTemplate> {
    vec![
        template(
            "locky_like",
            (135, 158),
            vec![
                block(&[(7, 1.0)], (1, 1)),
                block(&[(5, 1.0)], (1, 1)),
                block(&[(2, 1.0)], (1, 1)),
                block(&[(2, 0.9), (6, 0.1)], (6, 18)),
                block(&[(3, 0.6), (8, 0.4)], (2, 6)),
            ],
        ),
        template(
            "burst_encryptor",
            (105, 118),
            vec![
                block(&[(7, 1.0)], (1, 2)),
                block(&[(2, 0.85), (6, 0.15)], (10, 26)),
                block(&[(1, 1.0)], (1, 2)),
                block(&[(3, 0.6), (9, 0.4)], (2, 5)),
            ],
        ),
        template(
            "delete_then_create",
            (125, 140),
            vec![
                block(&[(1, 1.0)], (2, 5)),
                block(&[(5, 1.0)], (2, 5)),
                block(&[(2, 0.8), (9, 0.2)], (6, 16)),
                block(&[(4, 0.6), (8, 0.4)], (1, 4)),
            ],
        ),
        template(
            "slow_interleaved",
            (140, 156),
            vec![
                block(&[(7, 0.6), (1, 0.4)], (1, 2)),
                block(&[(3, 0.4), (4, 0.3), (8, 0.3)], (4, 10)),
                block(&[(2, 0.7), (6, 0.3)], (4, 12)),
                block(&[(5, 0.8), (9, 0.2)], (1, 3)),
            ],
        ),
    ]
}

/// Benign behaviors. The compressor writes high-entropy archives, so
/// entropy alone cannot separate the classes; what it lacks is the
/// rename/delete volume of ransomware.
pub fn default_benign_templates() -> Vec<BehaviorTemplate> {
    vec![
        template(
            "installer",
            (125, 140),
            vec![
                block(&[(5, 1.0)], (3, 8)),
                block(&[(3, 0.5), (4, 0.3), (8, 0.2)], (6, 16)),
                block(&[(8, 0.6), (9, 0.4)], (2, 6)),
            ],
        ),
        template(
            "compressor",
            (120, 135),
            vec![
                block(&[(5, 1.0)], (1, 2)),
                block(&[(2, 0.6), (6, 0.4)], (8, 22)),
                block(&[(8, 0.92), (7, 0.08)], (3, 6)),
            ],
        ),
        template(
            "backup",
            (160, 180),
            vec![
                block(&[(5, 1.0)], (1, 4)),
                block(&[(8, 0.55), (9, 0.45)], (6, 18)),
                block(&[(3, 0.9), (1, 0.1)], (1, 2)),
            ],
        ),
        template(
            "idle_chatter",
            (340, 385),
            vec![
                block(&[(3, 0.5), (4, 0.5)], (2, 8)),
                block(&[(5, 0.4), (8, 0.6)], (1, 4)),
            ],
        ),
    ]
}

/// Entropy interval that encodes to the given changed-content code.
fn entropy_range(code: u8) -> (f64, f64) {
    match code {
        4 => (0.0, 0.2),
        3 => (0.2, 0.4),
        8 => (0.4, 0.6),
        9 => (0.6, 0.8),
        6 => (0.8, 0.9),
        2 => (0.9, 1.0),
        _ => unreachable!("not an entropy code: {code}"),
    }
}

fn emit_event(code: u8, ts: &mut u64, rng: &mut ChaCha8Rng) -> EventRecord {
    *ts += rng.random_range(1..=25);
    let path = format!("data/f{:03}.bin", rng.random_range(0..64));
    match code {
        1 => EventRecord::deleted(*ts, path),
        5 => EventRecord::created(*ts, path),
        7 => EventRecord::renamed(*ts, path),
        c => {
            let (lo, hi) = entropy_range(c);
            EventRecord::changed(*ts, path, rng.random_range(lo..hi))
        }
    }
}

/// Sample one event stream from a template.
pub fn gen_log(tpl: &BehaviorTemplate, rng: &mut ChaCha8Rng) -> Vec<EventRecord> {
    let repeats = rng.random_range(tpl.repeat.0..=tpl.repeat.1);
    let samplers: Vec<WeightedIndex<f64>> = tpl
        .phase_blocks
        .iter()
        .map(|b| WeightedIndex::new(b.dist.iter().map(|&(_, w)| w)).expect("validated weights"))
        .collect();
    let mut records = Vec::new();
    let mut ts = 0u64;
    for _ in 0..repeats {
        for (b, sampler) in tpl.phase_blocks.iter().zip(&samplers) {
            let len = rng.random_range(b.len.0..=b.len.1);
            for _ in 0..len {
                let code = b.dist[sampler.sample(rng)].0;
                records.push(emit_event(code, &mut ts, rng));
            }
        }
    }
    records
}

/// Trailing chatter from unrelated benign processes.
fn append_noise_tail(records: &mut Vec<EventRecord>, rng: &mut ChaCha8Rng) {
    let dist = [(3u8, 0.3), (4, 0.2), (5, 0.2), (8, 0.3)];
    let sampler = WeightedIndex::new(dist.iter().map(|&(_, w)| w)).unwrap();
    let mut ts = records.last().map(|r| r.timestamp_ms).unwrap_or(0);
    for _ in 0..rng.random_range(8..=32) {
        let code = dist[sampler.sample(rng)].0;
        records.push(emit_event(code, &mut ts, rng));
    }
}

fn validate_config(config: &CorpusConfig) -> Result<Vec<f64>, SynthError> {
    for count in [
        config.n_benign_train,
        config.n_malicious_train,
        config.n_benign_test,
        config.n_malicious_test,
    ] {
        if count == 0 {
            return Err(SynthError::BadConfig("split counts must be positive".into()));
        }
    }
    if config.templates.malicious.is_empty() || config.templates.benign.is_empty() {
        return Err(SynthError::BadConfig("both template pools must be non-empty".into()));
    }
    for tpl in config.templates.malicious.iter().chain(&config.templates.benign) {
        tpl.validate()?;
    }
    let mix = if config.family_mix.is_empty() {
        vec![1.0 / config.templates.malicious.len() as f64; config.templates.malicious.len()]
    } else {
        if config.family_mix.len() != config.templates.malicious.len() {
            return Err(SynthError::BadConfig(
                "family_mix length must match the malicious template count".into(),
            ));
        }
        if config.family_mix.iter().any(|&w| w < 0.0)
            || config.family_mix.iter().sum::<f64>() <= 0.0
        {
            return Err(SynthError::BadConfig("family_mix weights must be non-negative".into()));
        }
        config.family_mix.clone()
    };
    Ok(mix)
}

fn gen_one(
    config: &CorpusConfig,
    mix: &WeightedIndex<f64>,
    label: Label,
    log_index: u64,
) -> ExecutionLog {
    let mut r = rng::indexed(config.seed, stream::CORPUS, log_index);
    let mut records = match label {
        Label::Malicious => {
            let tpl = &config.templates.malicious[mix.sample(&mut r)];
            gen_log(tpl, &mut r)
        }
        Label::Benign => {
            let tpl = &config.templates.benign[r.random_range(0..config.templates.benign.len())];
            let mut recs = gen_log(tpl, &mut r);
            append_noise_tail(&mut recs, &mut r);
            recs
        }
    };
    records.sort_by_key(|rec| rec.timestamp_ms);
    let codes = to_feature_sequence(&records).expect("templates emit valid events");
    ExecutionLog { codes, label, origin: Origin::Real }
}

/// Build the train and test splits. Every log is a pure function of
/// (config.seed, its global index), so two builds of the same config
/// are byte-identical.
pub fn build_corpus(config: &CorpusConfig) -> Result<Corpus, SynthError> {
    let mix_weights = validate_config(config)?;
    let mix = WeightedIndex::new(&mix_weights)
        .map_err(|e| SynthError::BadConfig(format!("family_mix: {e}")))?;

    let groups = [
        (Label::Benign, config.n_benign_train),
        (Label::Malicious, config.n_malicious_train),
        (Label::Benign, config.n_benign_test),
        (Label::Malicious, config.n_malicious_test),
    ];
    let mut offsets = [0u64; 4];
    let mut acc = 0u64;
    for (i, &(_, count)) in groups.iter().enumerate() {
        offsets[i] = acc;
        acc += count as u64;
    }

    let mut parts: Vec<Vec<ExecutionLog>> = Vec::with_capacity(4);
    for (i, &(label, count)) in groups.iter().enumerate() {
        parts.push(par::map_range(count, |j| {
            gen_one(config, &mix, label, offsets[i] + j as u64)
        }));
    }
    let test_m = parts.pop().unwrap();
    let test_b = parts.pop().unwrap();
    let train_m = parts.pop().unwrap();
    let train_b = parts.pop().unwrap();

    let mut train = train_b;
    train.extend(train_m);
    let mut test = test_b;
    test.extend(test_m);
    Ok(Corpus { train, test, seed: config.seed })
}
