//! Drives a code sequence as real file operations inside a throwaway
//! sandbox, watches the directory while doing so, and scores how
//! faithfully the recollected events encode back to the intended codes.
//!
//! The replayer only ever touches files it created under its own root.
//! It carries no propagation, persistence, or real-encryption ability.

use std::collections::VecDeque;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use notify::event::{ModifyKind, RenameMode};
use notify::{EventKind as NotifyKind, RecommendedWatcher, RecursiveMode, Watcher};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logmodel::{
    self, encode_event, normalized_entropy, EventCode, EventRecord, ALPHABET,
};
use crate::rng::{self, stream};

pub const DEBOUNCE_MS: u64 = 50;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("sandbox root {0} is not empty")]
    RootNotEmpty(PathBuf),
    #[error("path {0} escapes the sandbox root")]
    SandboxViolation(PathBuf),
    #[error("code {0} is outside the event alphabet")]
    BadCode(u8),
    #[error("could not synthesize a payload for entropy code {0}")]
    PayloadSynthesis(u8),
    #[error("watcher: {0}")]
    Watch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Log(#[from] logmodel::LogError),
}

/// Where overwrite payload randomness comes from. Seeded keeps a replay
/// reproducible end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyPolicy {
    Seeded { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandboxConfig {
    /// Created by the replayer; must be empty if it already exists.
    pub root: PathBuf,
    pub decoy_count: usize,
    pub decoy_size: usize,
    pub delay_ms: u64,
    pub entropy: EntropyPolicy,
}

impl SandboxConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            decoy_count: 64,
            decoy_size: 4096,
            delay_ms: 2,
            entropy: EntropyPolicy::Seeded { seed: 1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Create { path: PathBuf },
    Delete { path: PathBuf },
    Rename { from: PathBuf, to: PathBuf },
    Overwrite { path: PathBuf, code: u8 },
}

impl Op {
    pub fn paths(&self) -> Vec<&Path> {
        match self {
            Op::Create { path } | Op::Delete { path } | Op::Overwrite { path, .. } => vec![path],
            Op::Rename { from, to } => vec![from, to],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayResult {
    pub intended: Vec<EventCode>,
    pub ledger: Vec<Op>,
    pub recollected: Vec<EventCode>,
    pub alignment: f64,
}

/// A watched replay also keeps the raw records for FSW re-ingestion.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub report: ReplayResult,
    pub events: Vec<EventRecord>,
}

/// Lexical confinement: `path` must sit under `root` and never hop
/// above it through parent components.
pub fn confined(root: &Path, path: &Path) -> Result<(), ReplayError> {
    let violation = || ReplayError::SandboxViolation(path.to_path_buf());
    let rel = path.strip_prefix(root).map_err(|_| violation())?;
    let mut depth: isize = 0;
    for c in rel.components() {
        match c {
            Component::Normal(_) => depth += 1,
            Component::CurDir => {}
            Component::ParentDir => {
                depth -= 1;
                if depth < 0 {
                    return Err(violation());
                }
            }
            _ => return Err(violation()),
        }
    }
    Ok(())
}

/// Normalized-entropy interval a Changed code promises, `None` for
/// non-entropy codes. Code 2's upper edge is unbounded because the
/// encoder bins entropy 1.0 there.
pub fn entropy_bin(code: u8) -> Option<(f64, f64)> {
    match code {
        2 => Some((0.9, f64::INFINITY)),
        3 => Some((0.2, 0.4)),
        4 => Some((0.0, 0.2)),
        6 => Some((0.8, 0.9)),
        8 => Some((0.4, 0.6)),
        9 => Some((0.6, 0.8)),
        _ => None,
    }
}

/// A prefix of seeded random bytes over a repetitive base; entropy grows
/// with the prefix length, so bisection lands inside the requested bin.
pub fn payload_for(code: u8, size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<u8>, ReplayError> {
    let (lo, hi) = entropy_bin(code).ok_or(ReplayError::BadCode(code))?;
    let noise: Vec<u8> = (0..size).map(|_| rng.random::<u8>()).collect();
    let make = |k: usize| {
        let mut v = noise[..k].to_vec();
        v.resize(size, b'a');
        v
    };
    let in_bin = |v: &[u8]| {
        let e = normalized_entropy(v).expect("nonempty payload");
        e >= lo && e < hi
    };
    let mut lo_k = 0usize;
    let mut hi_k = size;
    while lo_k < hi_k {
        let k = lo_k + (hi_k - lo_k) / 2;
        let v = make(k);
        if in_bin(&v) {
            return Ok(v);
        }
        if normalized_entropy(&v).expect("nonempty payload") < lo {
            lo_k = k + 1;
        } else {
            hi_k = k;
        }
    }
    // Entropy is not perfectly monotone in the prefix length; sweep the
    // neighborhood of the bisection endpoint before giving up.
    for k in lo_k.saturating_sub(64)..=(lo_k + 64).min(size) {
        let v = make(k);
        if in_bin(&v) {
            return Ok(v);
        }
    }
    Err(ReplayError::PayloadSynthesis(code))
}

struct Driver {
    root: PathBuf,
    decoy_size: usize,
    pool: VecDeque<PathBuf>,
    rng: ChaCha8Rng,
    made: usize,
    renamed: usize,
    replenished: usize,
}

impl Driver {
    fn target_index(&mut self) -> usize {
        if self.pool.len() == 1 {
            0
        } else {
            self.rng.random_range(0..self.pool.len())
        }
    }

    fn fresh_path(&self, name: String) -> Result<PathBuf, ReplayError> {
        let path = self.root.join(name);
        confined(&self.root, &path)?;
        Ok(path)
    }

    /// Keeps at least one target available, creating an empty spare if
    /// the pool ran dry mid-replay.
    fn ensure_target(&mut self) -> Result<(), ReplayError> {
        if self.pool.is_empty() {
            let path = self.fresh_path(format!("spare_{:04}.bin", self.replenished))?;
            self.replenished += 1;
            fs::File::create(&path)?;
            self.pool.push_back(path);
        }
        Ok(())
    }

    fn step(&mut self, code: EventCode) -> Result<Option<Op>, ReplayError> {
        match code.0 {
            0 => Ok(None),
            1 => {
                self.ensure_target()?;
                let idx = self.target_index();
                let path = self.pool.remove(idx).expect("index in range");
                confined(&self.root, &path)?;
                fs::remove_file(&path)?;
                Ok(Some(Op::Delete { path }))
            }
            5 => {
                let path = self.fresh_path(format!("made_{:04}.bin", self.made))?;
                self.made += 1;
                fs::File::create(&path)?;
                self.pool.push_back(path.clone());
                Ok(Some(Op::Create { path }))
            }
            7 => {
                self.ensure_target()?;
                let idx = self.target_index();
                let from = self.pool[idx].clone();
                confined(&self.root, &from)?;
                let to = self.fresh_path(format!("renamed_{:04}.bin", self.renamed))?;
                self.renamed += 1;
                fs::rename(&from, &to)?;
                self.pool[idx] = to.clone();
                Ok(Some(Op::Rename { from, to }))
            }
            c if entropy_bin(c).is_some() => {
                self.ensure_target()?;
                let idx = self.target_index();
                let path = self.pool[idx].clone();
                confined(&self.root, &path)?;
                let payload = payload_for(c, self.decoy_size, &mut self.rng)?;
                fs::write(&path, payload)?;
                Ok(Some(Op::Overwrite { path, code: c }))
            }
            c => Err(ReplayError::BadCode(c)),
        }
    }
}

fn seed_of(config: &SandboxConfig) -> u64 {
    match config.entropy {
        EntropyPolicy::Seeded { seed } => seed,
    }
}

/// Smallest starting pool that keeps a target available at every
/// consuming step, so no spare files need creating mid-replay.
fn provision_for(codes: &[EventCode], configured: usize) -> usize {
    let mut running: isize = 0;
    let mut needed: isize = 0;
    for code in codes {
        match code.0 {
            1 => {
                needed = needed.max(1 - running);
                running -= 1;
            }
            5 => running += 1,
            7 => needed = needed.max(1 - running),
            c if entropy_bin(c).is_some() => needed = needed.max(1 - running),
            _ => {}
        }
    }
    configured.max(needed.max(0) as usize)
}

fn prepare_sandbox(codes: &[EventCode], config: &SandboxConfig) -> Result<Driver, ReplayError> {
    for code in codes {
        if code.0 as usize >= ALPHABET {
            return Err(ReplayError::BadCode(code.0));
        }
    }
    fs::create_dir_all(&config.root)?;
    if fs::read_dir(&config.root)?.next().is_some() {
        return Err(ReplayError::RootNotEmpty(config.root.clone()));
    }
    let root = config.root.clone();
    let mut pool = VecDeque::new();
    for i in 0..provision_for(codes, config.decoy_count) {
        let path = root.join(format!("decoy_{i:04}.bin"));
        confined(&root, &path)?;
        fs::write(&path, vec![(i % 251) as u8; config.decoy_size.max(1)])?;
        pool.push_back(path);
    }
    Ok(Driver {
        root,
        decoy_size: config.decoy_size.max(1),
        pool,
        rng: rng::substream(seed_of(config), stream::REPLAY),
        made: 0,
        renamed: 0,
        replenished: 0,
    })
}

/// Perform the file operations without watching; returns the op ledger.
pub fn replay(codes: &[EventCode], config: &SandboxConfig) -> Result<Vec<Op>, ReplayError> {
    let mut driver = prepare_sandbox(codes, config)?;
    let mut ledger = Vec::new();
    for &code in codes {
        if let Some(op) = driver.step(code)? {
            ledger.push(op);
        }
    }
    Ok(ledger)
}

struct Recollector {
    rx: mpsc::Receiver<notify::Result<notify::Event>>,
    _watcher: RecommendedWatcher,
    started: Instant,
    records: Vec<EventRecord>,
}

impl Recollector {
    fn start(root: &Path) -> Result<Self, ReplayError> {
        let (tx, rx) = mpsc::channel();
        let mut watcher =
            notify::recommended_watcher(tx).map_err(|e| ReplayError::Watch(e.to_string()))?;
        watcher
            .watch(root, RecursiveMode::Recursive)
            .map_err(|e| ReplayError::Watch(e.to_string()))?;
        Ok(Self { rx, _watcher: watcher, started: Instant::now(), records: Vec::new() })
    }

    fn push(&mut self, record: EventRecord) {
        // Duplicate notifications for the same path and kind inside the
        // debounce window collapse to one record.
        if let Some(last) = self.records.last_mut() {
            if last.kind == record.kind
                && last.path == record.path
                && record.timestamp_ms.saturating_sub(last.timestamp_ms) <= DEBOUNCE_MS
            {
                *last = record;
                return;
            }
        }
        self.records.push(record);
    }

    fn drain(&mut self) -> Result<(), ReplayError> {
        while let Ok(msg) = self.rx.try_recv() {
            let event = msg.map_err(|e| ReplayError::Watch(e.to_string()))?;
            let ts = self.started.elapsed().as_millis() as u64;
            let path = match event.paths.last() {
                Some(p) => p.to_string_lossy().into_owned(),
                None => continue,
            };
            match event.kind {
                NotifyKind::Create(_) => self.push(EventRecord::created(ts, path)),
                NotifyKind::Remove(_) => self.push(EventRecord::deleted(ts, path)),
                NotifyKind::Modify(ModifyKind::Name(mode)) => match mode {
                    // The moved-from half carries no new name; the
                    // moved-to or paired event stands for the rename.
                    RenameMode::From => {}
                    _ => self.push(EventRecord::renamed(ts, path)),
                },
                NotifyKind::Modify(ModifyKind::Data(_) | ModifyKind::Any) => {
                    // Zero-length modifications carry no payload.
                    match fs::read(&path) {
                        Ok(bytes) if !bytes.is_empty() => {
                            let e = normalized_entropy(&bytes)?;
                            self.push(EventRecord::changed(ts, path, e));
                        }
                        _ => {}
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Normalized longest-common-subsequence ratio between the non-padding
/// intended codes and the recollected codes.
pub fn alignment(intended: &[EventCode], recollected: &[EventCode]) -> f64 {
    let a: Vec<u8> = intended.iter().filter(|c| !c.is_pad()).map(|c| c.0).collect();
    let b: Vec<u8> = recollected.iter().map(|c| c.0).collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            cur[j] = if a[i - 1] == b[j - 1] {
                prev[j - 1] + 1
            } else {
                prev[j].max(cur[j - 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
        cur.fill(0);
    }
    prev[b.len()] as f64 / a.len().max(b.len()) as f64
}

/// Full deployment round trip: watch the sandbox, drive the codes, then
/// encode what the watcher saw and score the alignment.
pub fn replay_watched(
    codes: &[EventCode],
    config: &SandboxConfig,
) -> Result<ReplayOutcome, ReplayError> {
    let mut driver = prepare_sandbox(codes, config)?;
    let mut recollector = Recollector::start(&config.root)?;
    // Give the watcher thread a moment to arm before the first op.
    std::thread::sleep(Duration::from_millis(20));
    let mut ledger = Vec::new();
    for &code in codes {
        if let Some(op) = driver.step(code)? {
            ledger.push(op);
        }
        if config.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(config.delay_ms));
        }
        recollector.drain()?;
    }
    std::thread::sleep(Duration::from_millis(DEBOUNCE_MS.max(150)));
    recollector.drain()?;
    let events = recollector.records;
    let recollected = events.iter().map(encode_event).collect::<Result<Vec<_>, _>>()?;
    let alignment = alignment(codes, &recollected);
    Ok(ReplayOutcome {
        report: ReplayResult { intended: codes.to_vec(), ledger, recollected, alignment },
        events,
    })
}
