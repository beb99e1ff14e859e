//! `lab`: one binary wiring corpus synthesis, detector training, the
//! generative attack, quality assessment, latent-space analysis, and
//! sandbox replay. Every subcommand takes JSON config files, honors
//! `--seed`, and writes a manifest with digests beside its outputs.

mod artifact;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use lab_core::acgan::{train_gan, GanConfig, GanError};
use lab_core::classifiers::{
    evaluate_detector, train_suite, ClassicalKind, ClfError, DetectorSuite, MetricsReport,
    SuiteConfig,
};
use lab_core::latent::{
    blind_spot_diagnostic, cross_distances, distance_csv, pca_csv, pca_project, DistanceStudy,
    LatentError,
};
use lab_core::classifiers::FeatureSpace;
use lab_core::logmodel::{
    serialize_fsw_log, write_corpus_jsonl, Corpus, ExecutionLog, Label, LogError,
};
use lab_core::ngram::{batch_quality, report_to_csv, NgramError, QualityScorer};
use lab_core::pipeline::{
    detection_csv, gan_training_segments, run_attack, AttackConfig, PipelineError,
};
use lab_core::replayer::{replay_watched, EntropyPolicy, ReplayError, SandboxConfig};
use lab_core::synthgen::{build_corpus, CorpusConfig, SynthError};

use artifact::{
    load_code_rows, load_corpus, load_gan, load_logs, load_suite, read_text, resolve,
    test_split_path, write_segments_jsonl, GanSnapshot, ManifestBuilder,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error("reading {0}: {1}")]
    Input(PathBuf, String),
    #[error("writing {0}: {1}")]
    Output(PathBuf, String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Clf(#[from] ClfError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Ngram(#[from] NgramError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Domain(_) => "domain",
            CliError::Input(..) => "input",
            CliError::Output(..) => "output",
            CliError::Log(_) => "logmodel",
            CliError::Synth(_) => "synthgen",
            CliError::Clf(_) => "classifiers",
            CliError::Gan(_) => "acgan",
            CliError::Ngram(_) => "ngram",
            CliError::Pipeline(_) => "pipeline",
            CliError::Latent(_) => "latent",
            CliError::Replay(_) => "replayer",
        }
    }
}

#[derive(Parser)]
#[command(
    name = "lab",
    version,
    about = "Ransomware detector evasion lab",
    after_help = "Relative artifact paths resolve under LAB_DATA_DIR when it is set."
)]
struct Cli {
    /// Base seed; overrides any seed found in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labelled corpus: train split at --out, test split beside it.
    GenData {
        /// JSON corpus config; defaults mirror the study scale.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the network detector and the classical detectors beside it.
    TrainClf {
        /// Training-split logs (JSONL).
        #[arg(long)]
        corpus: PathBuf,
        /// JSON suite config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the generator on the training split's segments.
    TrainGan {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON generator config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Segments with less non-padding content are skipped.
        #[arg(long, default_value_t = 0.25)]
        min_content_ratio: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw synthetic segments from a trained generator.
    GenAdv {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 512)]
        count: usize,
        /// malicious or benign
        #[arg(long, default_value = "malicious")]
        label: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated samples against reference n-gram sets.
    AssessQuality {
        /// Generated segments or logs (JSONL).
        #[arg(long)]
        generated: PathBuf,
        /// Labelled reference logs (JSONL), typically the test split.
        #[arg(long)]
        refs: PathBuf,
        /// Window lengths: "3..7", "4,5,6", or a single number.
        #[arg(long, default_value = "3..7")]
        n: String,
        #[arg(long, default_value_t = 1.5)]
        tau: f64,
        /// Per-sample CSV; a .summary.json lands beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// The full attack: train generator, filter, assemble, evaluate.
    RunAttack {
        /// Training-split logs; the sibling test split provides references.
        #[arg(long)]
        corpus: PathBuf,
        /// Trained detector checkpoint.
        #[arg(long)]
        suite: PathBuf,
        /// Comma list restricting the reported detectors
        /// (textcnn, <kind>_latent, <kind>_raw).
        #[arg(long)]
        detectors: Option<String>,
        /// JSON attack config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        max_rounds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics for suite detectors over a labelled log file.
    Evaluate {
        #[arg(long)]
        suite: PathBuf,
        /// Labelled logs (JSONL), e.g. the test split file.
        #[arg(long)]
        corpus: PathBuf,
        /// One detector name; default evaluates the whole suite.
        #[arg(long)]
        detector: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distance distributions, PCA scatter data, and the blind-spot verdict.
    AnalyzeLatent {
        /// Trained detector checkpoint (provides the latent extractor).
        #[arg(long)]
        model: PathBuf,
        /// Training-split logs (JSONL).
        #[arg(long)]
        corpus: PathBuf,
        /// Generated adversarial logs (JSONL).
        #[arg(long)]
        generated: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Drive logs as sandboxed file I/O and measure round-trip fidelity.
    Replay {
        /// Logs to replay (JSONL).
        #[arg(long)]
        codes: PathBuf,
        /// Root directory for per-log sandboxes.
        #[arg(long)]
        sandbox: PathBuf,
        /// JSON report path; FSW event CSVs land beside it.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 2)]
        delay_ms: u64,
        #[arg(long, default_value_t = 64)]
        decoys: usize,
        /// Replay at most this many logs.
        #[arg(long)]
        max_logs: Option<usize>,
        /// Truncate each log to this many non-padding codes.
        #[arg(long)]
        max_codes: Option<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    init_threads(cli.threads);
    if let Err(e) = dispatch(cli) {
        let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
        eprintln!("{msg}");
        std::process::exit(e.exit_code());
    }
}

#[cfg(feature = "parallel")]
fn init_threads(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
}

#[cfg(not(feature = "parallel"))]
fn init_threads(_: usize) {}

fn load_config<T: serde::de::DeserializeOwned + Default>(
    path: &Option<PathBuf>,
) -> Result<T, CliError> {
    match path {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| CliError::Input(p.clone(), e.to_string())),
        None => Ok(T::default()),
    }
}

fn parse_label(s: &str) -> Result<Label, CliError> {
    match s {
        "malicious" => Ok(Label::Malicious),
        "benign" => Ok(Label::Benign),
        other => Err(CliError::Usage(format!("label must be malicious or benign, got {other}"))),
    }
}

/// "3..7" (inclusive), "4,5,6", or "5"; windows must fit the packed
/// n-gram representation.
fn parse_ns(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("--n {text}: {why}"));
    let mut ns: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let lo: usize = a.trim().parse().map_err(|_| bad("range start is not a number"))?;
        let hi: usize = b.trim().parse().map_err(|_| bad("range end is not a number"))?;
        if lo > hi {
            return Err(bad("empty range"));
        }
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|part| part.trim().parse::<usize>().map_err(|_| bad("not a number")))
            .collect::<Result<_, _>>()?
    };
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() {
        return Err(bad("no window lengths"));
    }
    if ns.iter().any(|&n| !(1..=7).contains(&n)) {
        return Err(bad("window lengths must lie in 1..=7"));
    }
    Ok(ns)
}

/// textcnn, <kind>_latent, or <kind>_raw.
fn validate_detector_name(name: &str) -> Result<(), CliError> {
    if name == "textcnn" {
        return Ok(());
    }
    for kind in ClassicalKind::ALL {
        let slug = kind.slug();
        if name == format!("{slug}_latent") || name == format!("{slug}_raw") {
            return Ok(());
        }
    }
    Err(CliError::Usage(format!(
        "unknown detector {name}; expected textcnn, <kind>_latent, or <kind>_raw"
    )))
}

fn suite_names(suite: &DetectorSuite) -> Vec<String> {
    let mut names = vec!["textcnn".to_string()];
    names.extend(suite.detectors.iter().map(|d| d.name.clone()));
    names
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let seed_flag = cli.seed;
    let threads = cli.threads;
    let seed = seed_flag.unwrap_or(1);
    match cli.command {
        Command::GenData { config, out } => {
            let mut config: CorpusConfig = load_config(&config)?;
            if let Some(s) = seed_flag {
                config.seed = s;
            }
            let out = resolve(&out);
            let mut m = ManifestBuilder::new("gen-data", config.seed, threads);
            let corpus = build_corpus(&config)?;
            m.stage("build");
            m.emit(&out, &write_corpus_jsonl(&corpus.train))?;
            m.emit(&test_split_path(&out), &write_corpus_jsonl(&corpus.test))?;
            m.stage("write");
            m.finish(&config)?;
            Ok(())
        }
        Command::TrainClf { corpus, config, out } => {
            let config: SuiteConfig = load_config(&config)?;
            let corpus = resolve(&corpus);
            let out = resolve(&out);
            let mut m = ManifestBuilder::new("train-clf", seed, threads);
            m.input(&corpus);
            let logs = load_logs(&corpus)?;
            m.stage("load");
            let (suite, _trace) = train_suite(&logs, &config, seed)?;
            m.stage("train");
            m.emit_json(&out, &suite.checkpoint())?;
            m.finish(&config)?;
            Ok(())
        }
        Command::TrainGan { corpus, config, min_content_ratio, out } => {
            let config: GanConfig = load_config(&config)?;
            let corpus_path = resolve(&corpus);
            let out = resolve(&out);
            let mut m = ManifestBuilder::new("train-gan", seed, threads);
            m.input(&corpus_path);
            let train = load_logs(&corpus_path)?;
            let corpus = Corpus { train, test: Vec::new(), seed };
            let segments = gan_training_segments(&corpus, min_content_ratio);
            m.stage("load");
            let (gan, trace) = train_gan(&segments, &config, seed)?;
            m.stage("train");
            let (header, blob) = gan.checkpoint();
            m.emit_json(&out, &GanSnapshot { header, blob })?;
            let stem = out.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
            m.emit_json(&out.with_file_name(format!("{stem}.trace.json")), &trace)?;
            m.finish(&config)?;
            Ok(())
        }
        Command::GenAdv { model, count, label, out } => {
            let label = parse_label(&label)?;
            let model = resolve(&model);
            let out = resolve(&out);
            let mut m = ManifestBuilder::new("gen-adv", seed, threads);
            m.input(&model);
            let gan = load_gan(&model)?;
            m.stage("load");
            let segments = gan.generate(label, count, seed)?;
            m.stage("generate");
            m.emit(&out, &write_segments_jsonl(&segments))?;
            m.finish(&serde_json::json!({ "count": count, "label": label }))?;
            Ok(())
        }
        Command::AssessQuality { generated, refs, n, tau, out } => {
            let ns = parse_ns(&n)?;
            let generated = resolve(&generated);
            let refs_path = resolve(&refs);
            let out = resolve(&out);
            let mut m = ManifestBuilder::new("assess-quality", seed, threads);
            m.input(&generated);
            m.input(&refs_path);
            let refs = load_logs(&refs_path)?;
            let mal: Vec<Vec<_>> = refs
                .iter()
                .filter(|l| l.label == Label::Malicious)
                .map(|l| l.codes.clone())
                .collect();
            let ben: Vec<Vec<_>> = refs
                .iter()
                .filter(|l| l.label == Label::Benign)
                .map(|l| l.codes.clone())
                .collect();
            let rows = load_code_rows(&generated)?;
            m.stage("load");
            let scorer = QualityScorer::new(&mal, &ben, &ns)?;
            let report = batch_quality(&rows, &scorer, tau);
            m.stage("score");
            m.emit(&out, &report_to_csv(&report))?;
            let stem = out.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
            m.emit_json(
                &out.with_file_name(format!("{stem}.summary.json")),
                &report.batch_summary,
            )?;
            m.finish(&serde_json::json!({ "n": ns, "tau": tau }))?;
            Ok(())
        }
        Command::RunAttack { corpus, suite, detectors, config, k, tau, max_rounds, out } => {
            let mut config: AttackConfig = load_config(&config)?;
            if let Some(k) = k {
                config.k = k;
            }
            if let Some(tau) = tau {
                config.tau = tau;
            }
            if let Some(r) = max_rounds {
                config.max_rounds = r;
            }
            if let Some(s) = seed_flag {
                config.seed = s;
            }
            let filter: Option<Vec<String>> = match detectors {
                Some(list) => {
                    let names: Vec<String> =
                        list.split(',').map(|s| s.trim().to_string()).collect();
                    for name in &names {
                        validate_detector_name(name)?;
                    }
                    Some(names)
                }
                None => None,
            };
            let corpus_path = resolve(&corpus);
            let suite_path = resolve(&suite);
            let out = resolve(&out);
            let mut m = ManifestBuilder::new("run-attack", config.seed, threads);
            m.input(&corpus_path);
            m.input(&suite_path);
            let corpus = load_corpus(&corpus_path)?;
            let suite = load_suite(&suite_path)?;
            if let Some(names) = &filter {
                let known = suite_names(&suite);
                for name in names {
                    if !known.contains(name) {
                        return Err(CliError::Domain(format!(
                            "detector {name} is not in the suite; it holds {known:?}"
                        )));
                    }
                }
            }
            m.stage("load");
            let outcome = match run_attack(&corpus, &suite, &config) {
                Ok(outcome) => outcome,
                Err(PipelineError::QualityStarvation { partial }) => {
                    m.stage("attack");
                    m.emit_json(&out, partial.as_ref())?;
                    m.finish(&config)?;
                    return Err(CliError::Domain(format!(
                        "quality starvation: {}/{} segments passed after {} rounds; \
                         partial report written to {}",
                        partial.passed(),
                        partial.target,
                        partial.rounds.len(),
                        out.display()
                    )));
                }
                Err(e) => return Err(e.into()),
            };
            m.stage("attack");
            let mut report = outcome.report;
            if let Some(names) = &filter {
                report.flags.retain(|name, _| names.contains(name));
                report.detection.retain(|name, _| names.contains(name));
            }
            m.emit_json(&out, &report)?;
            let stem = out.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
            m.emit(&out.with_file_name(format!("{stem}.csv")), &detection_csv(&report))?;
            m.emit(
                &out.with_file_name(format!("{stem}.logs.jsonl")),
                &write_corpus_jsonl(&outcome.logs),
            )?;
            m.finish(&config)?;
            Ok(())
        }
        Command::Evaluate { suite, corpus, detector, out } => {
            let suite_path = resolve(&suite);
            let corpus_path = resolve(&corpus);
            let out = resolve(&out);
            let mut m = ManifestBuilder::new("evaluate", seed, threads);
            m.input(&suite_path);
            m.input(&corpus_path);
            let suite = load_suite(&suite_path)?;
            let logs = load_logs(&corpus_path)?;
            m.stage("load");
            let names = match &detector {
                Some(name) => {
                    validate_detector_name(name)?;
                    vec![name.clone()]
                }
                None => suite_names(&suite),
            };
            let mut metrics: BTreeMap<String, MetricsReport> = BTreeMap::new();
            for name in &names {
                metrics.insert(name.clone(), evaluate_detector(&suite, name, &logs)?);
            }
            m.stage("evaluate");
            m.emit_json(&out, &metrics)?;
            m.finish(&serde_json::json!({ "detectors": names }))?;
            Ok(())
        }
        Command::AnalyzeLatent { model, corpus, generated, out } => {
            analyze_latent(&resolve(&model), &resolve(&corpus), &resolve(&generated), &resolve(&out), seed, threads)
        }
        Command::Replay { codes, sandbox, report, delay_ms, decoys, max_logs, max_codes } => {
            let codes_path = resolve(&codes);
            let sandbox = resolve(&sandbox);
            let report_path = resolve(&report);
            let mut m = ManifestBuilder::new("replay", seed, threads);
            m.input(&codes_path);
            let mut logs = load_logs(&codes_path)?;
            if let Some(cap) = max_logs {
                logs.truncate(cap);
            }
            m.stage("load");
            let mut results = Vec::new();
            let mut event_files = Vec::new();
            for (i, log) in logs.iter().enumerate() {
                let mut intended: Vec<_> = log.non_padding().to_vec();
                if let Some(cap) = max_codes {
                    intended.truncate(cap);
                }
                let config = SandboxConfig {
                    root: sandbox.join(format!("log_{i:04}")),
                    decoy_count: decoys,
                    decoy_size: 4096,
                    delay_ms,
                    entropy: EntropyPolicy::Seeded { seed: seed.wrapping_add(i as u64) },
                };
                let outcome = replay_watched(&intended, &config)?;
                event_files.push(serialize_fsw_log(&outcome.events));
                results.push(outcome.report);
            }
            m.stage("replay");
            m.emit_json(&report_path, &results)?;
            let stem = report_path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
            for (i, text) in event_files.iter().enumerate() {
                m.emit(&report_path.with_file_name(format!("{stem}.events_{i:04}.csv")), text)?;
            }
            m.finish(&serde_json::json!({
                "delay_ms": delay_ms,
                "decoys": decoys,
                "logs": results.len(),
            }))?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct LatentRun {
    pairs: Vec<String>,
    pca_rank: usize,
}

fn analyze_latent(
    model: &Path,
    corpus: &Path,
    generated: &Path,
    out_dir: &Path,
    seed: u64,
    threads: usize,
) -> Result<(), CliError> {
    let mut m = ManifestBuilder::new("analyze-latent", seed, threads);
    m.input(model);
    m.input(corpus);
    m.input(generated);
    let suite = load_suite(model)?;
    let train = load_logs(corpus)?;
    let gen_logs = load_logs(generated)?;
    m.stage("load");

    let tr_m: Vec<&ExecutionLog> = train.iter().filter(|l| l.label == Label::Malicious).collect();
    let tr_b: Vec<&ExecutionLog> = train.iter().filter(|l| l.label == Label::Benign).collect();
    if tr_m.is_empty() || tr_b.is_empty() {
        return Err(CliError::Domain("training corpus must contain both labels".into()));
    }
    if gen_logs.is_empty() {
        return Err(CliError::Domain("no generated logs to analyze".into()));
    }

    let raw_of = |logs: &[&ExecutionLog]| -> Vec<Vec<f64>> {
        logs.iter().map(|l| l.codes.iter().map(|c| c.0 as f64).collect()).collect()
    };
    let latent_of = |logs: &[&ExecutionLog]| -> Result<Vec<Vec<f64>>, CliError> {
        let owned: Vec<ExecutionLog> = logs.iter().map(|&l| l.clone()).collect();
        Ok(lab_core::classifiers::extract_latents(&suite.extractor, &owned)?)
    };
    let gen_refs: Vec<&ExecutionLog> = gen_logs.iter().collect();
    let raw = [raw_of(&gen_refs), raw_of(&tr_m), raw_of(&tr_b)];
    let latent = [latent_of(&gen_refs)?, latent_of(&tr_m)?, latent_of(&tr_b)?];
    m.stage("features");

    // All group pairs against the generated set plus the real-real pair,
    // in both spaces; pair order is (A, B) with A listed first in the id.
    let pair_ids = [("g", 0usize, "tr_m", 1usize), ("g", 0, "tr_b", 2), ("tr_m", 1, "tr_b", 2)];
    let jobs: Vec<(FeatureSpace, &str, usize, &str, usize)> = [FeatureSpace::Raw, FeatureSpace::Latent]
        .into_iter()
        .flat_map(|space| pair_ids.iter().map(move |&(a, ai, b, bi)| (space, a, ai, b, bi)))
        .collect();
    let studies: Vec<Result<DistanceStudy, LatentError>> = lab_core::par::map_vec(&jobs, |&(space, a, ai, b, bi)| {
        let bank = match space {
            FeatureSpace::Raw => &raw,
            FeatureSpace::Latent => &latent,
        };
        cross_distances(space, &format!("{a}__{b}"), &bank[ai], &bank[bi])
    });
    let studies = studies.into_iter().collect::<Result<Vec<_>, _>>()?;
    m.stage("distances");

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Output(out_dir.to_path_buf(), e.to_string()))?;
    let space_tag = |s: FeatureSpace| match s {
        FeatureSpace::Raw => "raw",
        FeatureSpace::Latent => "latent",
    };
    let find = |space: FeatureSpace, pair: &str| -> DistanceStudy {
        studies
            .iter()
            .find(|s| s.space == space && s.pair == pair)
            .expect("study exists for every job")
            .clone()
    };
    let verdict = blind_spot_diagnostic(
        &find(FeatureSpace::Raw, "g__tr_m"),
        &find(FeatureSpace::Raw, "g__tr_b"),
        &find(FeatureSpace::Latent, "g__tr_m"),
        &find(FeatureSpace::Latent, "g__tr_b"),
    );
    m.emit_json(&out_dir.join("verdict.json"), &verdict)?;
    for study in &studies {
        let name = format!("distances_{}_{}.csv", space_tag(study.space), study.pair);
        m.emit(&out_dir.join(name), &distance_csv(study))?;
    }

    // PCA over the pooled latents, colored by group.
    let mut pooled: Vec<Vec<f64>> = Vec::new();
    let mut groups: Vec<&str> = Vec::new();
    for (vectors, tag) in latent.iter().zip(["g", "tr_m", "tr_b"]) {
        for v in vectors {
            pooled.push(v.clone());
            groups.push(tag);
        }
    }
    let projection = pca_project(&pooled, 2)?;
    m.emit(&out_dir.join("pca.csv"), &pca_csv(&projection, &groups))?;
    m.stage("project");
    m.finish(&LatentRun {
        pairs: pair_ids.iter().map(|&(a, _, b, _)| format!("{a}__{b}")).collect(),
        pca_rank: 2,
    })?;
    Ok(())
}
