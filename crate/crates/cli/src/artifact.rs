//! Artifact plumbing shared by every subcommand: path resolution under
//! the data root, line-oriented loaders, content digests, and the run
//! manifest written beside each command's first output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lab_core::acgan::{Acgan, GanCheckpoint, GanError};
use lab_core::classifiers::{DetectorSuite, SuiteCheckpoint};
use lab_core::logmodel::{self, Corpus, EventCode, ExecutionLog, Segment};

use crate::CliError;

/// Relative artifact paths live under `LAB_DATA_DIR` when it is set.
pub fn resolve(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("LAB_DATA_DIR") {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// The held-out split sits beside the training file: `x.jsonl` pairs
/// with `x.test.jsonl`.
pub fn test_split_path(train: &Path) -> PathBuf {
    let stem = train.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    train.with_file_name(format!("{stem}.test.jsonl"))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(path.to_path_buf(), e.to_string()))
}

pub fn load_logs(path: &Path) -> Result<Vec<ExecutionLog>, CliError> {
    Ok(logmodel::read_corpus_jsonl(&read_text(path)?)?)
}

/// Train file plus its sibling test file. The stored seed is not part
/// of the on-disk format; stages that need seeds take them explicitly.
pub fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    let train = load_logs(path)?;
    let test = load_logs(&test_split_path(path))?;
    Ok(Corpus { train, test, seed: 0 })
}

pub fn load_suite(path: &Path) -> Result<DetectorSuite, CliError> {
    let ckpt: SuiteCheckpoint = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Input(path.to_path_buf(), e.to_string()))?;
    Ok(DetectorSuite::restore(ckpt)?)
}

/// A generator checkpoint file: header plus flattened weights.
#[derive(Serialize, Deserialize)]
pub struct GanSnapshot {
    pub header: GanCheckpoint,
    pub blob: Vec<f64>,
}

pub fn load_gan(path: &Path) -> Result<Acgan, CliError> {
    let snap: GanSnapshot = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Input(path.to_path_buf(), e.to_string()))?;
    Ok(Acgan::restore(snap.header, &snap.blob).map_err(GanError::from)?)
}

pub fn write_segments_jsonl(segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        out.push_str(&serde_json::to_string(s).expect("segment serializes"));
        out.push('\n');
    }
    out
}

/// Code sequences to score: generated segments or whole logs, one JSON
/// object per line, distinguished by shape.
pub fn load_code_rows(path: &Path) -> Result<Vec<Vec<EventCode>>, CliError> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(seg) = serde_json::from_str::<Segment>(line) {
            rows.push(seg.rounded_codes());
        } else if let Ok(log) = serde_json::from_str::<ExecutionLog>(line) {
            rows.push(log.codes);
        } else {
            return Err(CliError::Input(
                path.to_path_buf(),
                format!("line {} is neither a segment nor a log", idx + 1),
            ));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactRef {
    pub path: String,
    pub sha256: String,
}

/// What a command ran with and what it produced, written beside the
/// first output as `<name>.manifest.json` (or `manifest.json` inside an
/// output directory).
#[derive(Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
    pub timings_ms: BTreeMap<String, u128>,
    pub total_ms: u128,
}

fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes =
        fs::read(path).map_err(|e| CliError::Input(path.to_path_buf(), e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let out = hasher.finalize();
    Ok(out.iter().map(|b| format!("{b:02x}")).collect())
}

/// Collects inputs, outputs, and stage timings while a command runs.
pub struct ManifestBuilder {
    subcommand: String,
    seed: u64,
    threads: usize,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    timings_ms: BTreeMap<String, u128>,
    started: Instant,
    mark: Instant,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, seed: u64, threads: usize) -> Self {
        let now = Instant::now();
        Self {
            subcommand: subcommand.to_string(),
            seed,
            threads,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
            started: now,
            mark: now,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Close the stage that just ran; stages are timed back to back.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        *self.timings_ms.entry(name.to_string()).or_insert(0) +=
            now.duration_since(self.mark).as_millis();
        self.mark = now;
    }

    pub fn emit(&mut self, path: &Path, content: &str) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)
                    .map_err(|e| CliError::Output(path.to_path_buf(), e.to_string()))?;
            }
        }
        fs::write(path, content).map_err(|e| CliError::Output(path.to_path_buf(), e.to_string()))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    pub fn emit_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Output(path.to_path_buf(), e.to_string()))?;
        text.push('\n');
        self.emit(path, &text)
    }

    pub fn finish<T: Serialize>(mut self, config: &T) -> Result<PathBuf, CliError> {
        self.stage("finish");
        let manifest_path = match self.outputs.first() {
            Some(first) if first.is_dir() => first.join("manifest.json"),
            Some(first) => {
                let name = first.file_name().map(|s| s.to_string_lossy()).unwrap_or_default();
                first.with_file_name(format!("{name}.manifest.json"))
            }
            None => PathBuf::from("manifest.json"),
        };
        let digest_all = |paths: &[PathBuf]| -> Result<Vec<ArtifactRef>, CliError> {
            paths
                .iter()
                .filter(|p| p.is_file())
                .map(|p| {
                    Ok(ArtifactRef { path: p.display().to_string(), sha256: digest_file(p)? })
                })
                .collect()
        };
        let manifest = RunManifest {
            subcommand: self.subcommand.clone(),
            config: serde_json::to_value(config)
                .map_err(|e| CliError::Output(manifest_path.clone(), e.to_string()))?,
            seed: self.seed,
            threads: self.threads,
            inputs: digest_all(&self.inputs)?,
            outputs: digest_all(&self.outputs)?,
            timings_ms: self.timings_ms.clone(),
            total_ms: self.started.elapsed().as_millis(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Output(manifest_path.clone(), e.to_string()))?;
        text.push('\n');
        fs::write(&manifest_path, text)
            .map_err(|e| CliError::Output(manifest_path.clone(), e.to_string()))?;
        Ok(manifest_path)
    }
}
