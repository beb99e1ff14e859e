//! n-gram extraction and adversarial quality metrics.
//!
//! A generated sample is useful only if it still behaves maliciously.
//! The proxy used here: collect the distinct n-grams of the sample and
//! of malicious/benign reference logs, discard grams shared by both
//! references, and compare how many of the remaining malicious-only
//! grams the sample matches against how many benign-only grams it
//! matches. The ratio q is the per-sample quality; a batch report
//! summarizes q over a generation round.
//!
//! Padding zeros are artifacts of the fixed log length, not behavior,
//! so any window containing code 0 is skipped: sequences are split at
//! zeros and windows are taken inside the nonzero runs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::logmodel::EventCode;
use crate::par;

/// Valid window lengths.
pub const N_MIN: usize = 3;
pub const N_MAX: usize = 7;
/// Window lengths a sample must pass by default.
pub const DEFAULT_N_RULE: [usize; 3] = [4, 5, 6];

#[derive(Debug, Error, PartialEq)]
pub enum NgramError {
    #[error("{0} reference set is empty")]
    EmptyReference(&'static str),
}

/// A quality value: a non-negative ratio or +infinity.
///
/// Serialized as a JSON number, except +infinity which becomes the
/// string `"inf"` (JSON has no infinity literal).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Q(pub f64);

impl Q {
    pub const INF: Q = Q(f64::INFINITY);

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Q {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

struct QVisitor;

impl Visitor<'_> for QVisitor {
    type Value = Q;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or the string \"inf\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Q, E> {
        Ok(Q(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Q, E> {
        Ok(Q(v as f64))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Q, E> {
        Ok(Q(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Q, E> {
        if v == "inf" {
            Ok(Q::INF)
        } else {
            Err(E::custom(format!("unexpected quality string {v:?}")))
        }
    }
}

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        d.deserialize_any(QVisitor)
    }
}

/// Distinct contiguous n-tuples of one or more code sequences.
///
/// Codes are digits 0..9, so a gram packs into a u32 in base 10; that
/// keeps the sets cheap even at n = 7.
#[derive(Debug, Clone)]
pub struct NGramSet {
    pub n: usize,
    grams: HashSet<u32>,
}

fn pack(window: &[EventCode]) -> u32 {
    window.iter().fold(0u32, |acc, c| acc * 10 + c.0 as u32)
}

impl NGramSet {
    pub fn empty(n: usize) -> Self {
        assert!((N_MIN..=N_MAX).contains(&n), "n must be in {N_MIN}..={N_MAX}");
        Self { n, grams: HashSet::new() }
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn contains_packed(&self, gram: u32) -> bool {
        self.grams.contains(&gram)
    }

    /// Add every gram of `codes`, skipping windows that touch padding.
    pub fn absorb(&mut self, codes: &[EventCode]) {
        let n = self.n;
        for run in codes.split(|c| c.is_pad()) {
            if run.len() < n {
                continue;
            }
            for window in run.windows(n) {
                self.grams.insert(pack(window));
            }
        }
    }

    /// Number of grams present in both sets.
    pub fn intersection_size(&self, other: &NGramSet) -> usize {
        assert_eq!(self.n, other.n);
        let (small, large) =
            if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.grams.iter().filter(|g| large.grams.contains(g)).count()
    }
}

/// All distinct contiguous n-tuples of `codes` that avoid padding.
pub fn extract_ngrams(codes: &[EventCode], n: usize) -> NGramSet {
    let mut set = NGramSet::empty(n);
    set.absorb(codes);
    set
}

fn union_ngrams(refs: &[Vec<EventCode>], n: usize) -> NGramSet {
    let mut set = NGramSet::empty(n);
    for codes in refs {
        set.absorb(codes);
    }
    set
}

/// Eq-4 ratio from the three intersection sizes.
fn ratio(i_m: usize, i_b: usize, i_mb: usize) -> Q {
    let n1 = (i_m - i_mb) as f64;
    let n2 = (i_b - i_mb) as f64;
    if n2 == 0.0 {
        if n1 > 0.0 {
            Q::INF
        } else {
            Q(0.0)
        }
    } else {
        Q(n1 / n2)
    }
}

/// Prebuilt reference gram sets for scoring many samples.
pub struct QualityScorer {
    ns: Vec<usize>,
    mal: BTreeMap<usize, NGramSet>,
    ben: BTreeMap<usize, NGramSet>,
}

impl QualityScorer {
    pub fn new(
        mal_refs: &[Vec<EventCode>],
        ben_refs: &[Vec<EventCode>],
        ns: &[usize],
    ) -> Result<Self, NgramError> {
        if mal_refs.is_empty() {
            return Err(NgramError::EmptyReference("malicious"));
        }
        if ben_refs.is_empty() {
            return Err(NgramError::EmptyReference("benign"));
        }
        let mut mal = BTreeMap::new();
        let mut ben = BTreeMap::new();
        for &n in ns {
            mal.insert(n, union_ngrams(mal_refs, n));
            ben.insert(n, union_ngrams(ben_refs, n));
        }
        Ok(Self { ns: ns.to_vec(), mal, ben })
    }

    pub fn ns(&self) -> &[usize] {
        &self.ns
    }

    /// q for one sample at one window length.
    pub fn score(&self, sample: &[EventCode], n: usize) -> Q {
        let grams = extract_ngrams(sample, n);
        let mal = &self.mal[&n];
        let ben = &self.ben[&n];
        let mut i_m = 0;
        let mut i_b = 0;
        let mut i_mb = 0;
        for g in &grams.grams {
            let in_m = mal.contains_packed(*g);
            let in_b = ben.contains_packed(*g);
            if in_m {
                i_m += 1;
            }
            if in_b {
                i_b += 1;
            }
            if in_m && in_b {
                i_mb += 1;
            }
        }
        ratio(i_m, i_b, i_mb)
    }

    /// q for one sample at every configured window length.
    pub fn score_all(&self, sample: &[EventCode]) -> BTreeMap<usize, Q> {
        self.ns.iter().map(|&n| (n, self.score(sample, n))).collect()
    }

    /// A sample passes when q >= tau for every n in the rule.
    pub fn passes(&self, sample: &[EventCode], tau: f64, n_rule: &[usize]) -> bool {
        n_rule.iter().all(|&n| self.score(sample, n).0 >= tau)
    }
}

/// Eq-4 quality of a single sample against reference log lists.
pub fn sample_quality(
    sample: &[EventCode],
    mal_refs: &[Vec<EventCode>],
    ben_refs: &[Vec<EventCode>],
    n: usize,
) -> Result<Q, NgramError> {
    let scorer = QualityScorer::new(mal_refs, ben_refs, &[n])?;
    Ok(scorer.score(sample, n))
}

/// Five-number summary plus Tukey outliers for one window length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSummary {
    pub min: Q,
    pub q1: Q,
    pub median: Q,
    pub q3: Q,
    pub max: Q,
    pub outliers: Vec<usize>,
}

/// Per-sample and per-batch quality for one generation round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityReport {
    pub threshold: f64,
    pub per_sample: BTreeMap<usize, BTreeMap<usize, Q>>,
    pub batch_summary: BTreeMap<usize, BatchSummary>,
}

/// Linear-interpolation quantile over sorted values. Infinite
/// neighbors collapse to the shared value instead of interpolating.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || sorted[lo] == sorted[lo + 1] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

fn summarize(values: &[(usize, f64)]) -> BatchSummary {
    let mut sorted: Vec<f64> = values.iter().map(|&(_, q)| q).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("q is never NaN"));
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let outliers = values
        .iter()
        .filter(|&&(_, q)| q < lo || q > hi)
        .map(|&(id, _)| id)
        .collect();
    BatchSummary {
        min: Q(sorted[0]),
        q1: Q(q1),
        median: Q(quantile(&sorted, 0.5)),
        q3: Q(q3),
        max: Q(*sorted.last().unwrap()),
        outliers,
    }
}

/// Score every sample at every configured n and summarize per n.
pub fn batch_quality(
    samples: &[Vec<EventCode>],
    scorer: &QualityScorer,
    tau: f64,
) -> QualityReport {
    let scores = par::map_vec(samples, |s| scorer.score_all(s));
    let per_sample: BTreeMap<usize, BTreeMap<usize, Q>> =
        scores.iter().cloned().enumerate().collect();
    let mut batch_summary = BTreeMap::new();
    for &n in scorer.ns() {
        let values: Vec<(usize, f64)> =
            scores.iter().enumerate().map(|(id, m)| (id, m[&n].0)).collect();
        if !values.is_empty() {
            batch_summary.insert(n, summarize(&values));
        }
    }
    QualityReport { threshold: tau, per_sample, batch_summary }
}

/// Split sample indices into (passed, failed) under the n rule:
/// a sample passes iff q >= tau at every n in `n_rule`.
pub fn filter_quality(
    samples: &[Vec<EventCode>],
    scorer: &QualityScorer,
    tau: f64,
    n_rule: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let verdicts = par::map_vec(samples, |s| scorer.passes(s, tau, n_rule));
    let mut passed = Vec::new();
    let mut failed = Vec::new();
    for (i, ok) in verdicts.into_iter().enumerate() {
        if ok {
            passed.push(i);
        } else {
            failed.push(i);
        }
    }
    (passed, failed)
}

/// `sample_id,n,q` lines for the per-sample table.
pub fn report_to_csv(report: &QualityReport) -> String {
    let mut out = String::from("sample_id,n,q\n");
    for (id, by_n) in &report.per_sample {
        for (n, q) in by_n {
            out.push_str(&format!("{id},{n},{q}\n"));
        }
    }
    out
}
