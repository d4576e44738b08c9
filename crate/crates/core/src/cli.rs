//! Command-line driver: each subcommand reads and writes files so the
//! pipeline can be run stage by stage.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use crate::applications::{completeness_report, dependence_report, group_by_prerequisite};
use crate::baselines::wholetext_detect;
use crate::compare::{
    detect_with_tuples, fit_slot_sif, ComparisonConfig, Detection, IndicativeLexicon, RedundancyVerdict, Scope,
    DEFAULT_THRESHOLD,
};
use crate::corpus::{
    generate_synthetic_corpus, load_annotations, load_corpus, load_labels, read_extractions, read_jsonl,
    tokenize_corpus, write_corpus, write_extractions, write_jsonl, write_labels, AnnotatedCorpus, Corpus,
    EntityCategory, Provenance, RedundancyLabel, SynthSpec, MAX_SPAN_LEN,
};
use crate::embeddings::{load_word_vectors, train_embeddings, write_word_vectors, EmbeddingStore, Word2VecConfig, DEFAULT_SIF_A};
use crate::error::{Error, Result};
use crate::evaluate::{ablation_table, cohen_kappa, detection_metrics, extraction_metrics, mann_whitney_u, AblationRow, ExtractionReport, MannWhitney, MetricReport};
use crate::extraction::{extract_corpus, train_joint, ExtractionConfig, ExtractionModel};
use crate::tuples::{dissect, TestTuple};

/// Contents of the TOML config file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub threshold: Option<f64>,
    pub span_max_len: Option<usize>,
    pub sif_a: Option<f64>,
    pub lexicon_path: Option<PathBuf>,
    pub c0_window: Option<usize>,
    pub c1_cap: Option<usize>,
    pub identity_dim: Option<usize>,
    pub embed_dim: Option<usize>,
    pub embed_window: Option<usize>,
    pub embed_epochs: Option<usize>,
    pub neg_ratio: Option<usize>,
    pub learning_rate: Option<f64>,
    pub model_epochs: Option<usize>,
    pub seed: Option<u64>,
    pub scope: Option<Scope>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Settings shared by all subcommands; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Settings")]
pub struct Overrides {
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub span_max_len: Option<usize>,
    #[arg(long, global = true)]
    pub sif_a: Option<f64>,
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    pub c0_window: Option<usize>,
    #[arg(long, global = true)]
    pub c1_cap: Option<usize>,
    #[arg(long, global = true)]
    pub identity_dim: Option<usize>,
    #[arg(long, global = true)]
    pub embed_dim: Option<usize>,
    #[arg(long, global = true)]
    pub embed_window: Option<usize>,
    #[arg(long, global = true)]
    pub embed_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub neg_ratio: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub model_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_scope)]
    pub scope: Option<Scope>,
}

fn parse_scope(s: &str) -> std::result::Result<Scope, String> {
    match s {
        "per_project" | "per-project" => Ok(Scope::PerProject),
        "global" => Ok(Scope::Global),
        _ => Err(format!("expected per_project or global, got {s:?}")),
    }
}

fn parse_category(s: &str) -> std::result::Result<EntityCategory, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub threshold: f64,
    pub sif_a: f64,
    pub lexicon_path: Option<PathBuf>,
    pub scope: Scope,
    pub seed: u64,
    pub word2vec: Word2VecConfig,
    pub extraction: ExtractionConfig,
}

impl Settings {
    pub fn resolve(file: &ConfigFile, flags: &Overrides) -> Result<Self> {
        let seed = flags.seed.or(file.seed).unwrap_or(1);
        let w2v = Word2VecConfig::default();
        let ex = ExtractionConfig::default();
        let settings = Settings {
            threshold: flags.threshold.or(file.threshold).unwrap_or(DEFAULT_THRESHOLD),
            sif_a: flags.sif_a.or(file.sif_a).unwrap_or(DEFAULT_SIF_A),
            lexicon_path: flags.lexicon.clone().or_else(|| file.lexicon_path.clone()),
            scope: flags.scope.or(file.scope).unwrap_or_default(),
            seed,
            word2vec: Word2VecConfig {
                dim: flags.embed_dim.or(file.embed_dim).unwrap_or(w2v.dim),
                window: flags.embed_window.or(file.embed_window).unwrap_or(w2v.window),
                epochs: flags.embed_epochs.or(file.embed_epochs).unwrap_or(w2v.epochs),
                seed,
                learning_rate: w2v.learning_rate,
            },
            extraction: ExtractionConfig {
                span_max_len: flags.span_max_len.or(file.span_max_len).unwrap_or(MAX_SPAN_LEN),
                c0_window: flags.c0_window.or(file.c0_window).unwrap_or(ex.c0_window),
                c1_cap: flags.c1_cap.or(file.c1_cap).unwrap_or(ex.c1_cap),
                identity_dim: flags.identity_dim.or(file.identity_dim).unwrap_or(ex.identity_dim),
                learning_rate: flags.learning_rate.or(file.learning_rate).unwrap_or(ex.learning_rate),
                epochs: flags.model_epochs.or(file.model_epochs).unwrap_or(ex.epochs),
                neg_ratio: flags.neg_ratio.or(file.neg_ratio).unwrap_or(ex.neg_ratio),
                seed,
            },
        };
        settings.extraction.validate()?;
        if !(settings.sif_a > 0.0) {
            return Err(Error::Config(format!("sif_a must be positive, got {}", settings.sif_a)));
        }
        Ok(settings)
    }

    fn lexicon(&self) -> Result<IndicativeLexicon> {
        match &self.lexicon_path {
            Some(p) => IndicativeLexicon::load(p),
            None => Ok(IndicativeLexicon::default()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tcdedup", version, about = "Fine-grained redundancy detection for test case summaries")]
pub struct Cli {
    /// TOML file with default settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic corpus.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 400)]
        cases: usize,
        #[arg(long, default_value_t = 4)]
        projects: usize,
    },
    /// Tokenize a corpus into sentences and the separator sequence.
    Preprocess {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train word vectors on a corpus.
    TrainEmbeddings {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the entity and relation classifiers.
    TrainModel {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract entities, relations and tuples with a trained model.
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare every pair of cases and write verdicts.
    Detect {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        extractions: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to list cases without a Component (default: OUT.skipped).
        #[arg(long)]
        skipped: Option<PathBuf>,
    },
    /// Score verdicts against labels, and predicted against gold extractions.
    Evaluate {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        verdicts: PathBuf,
        /// Skipped-case list written by detect (default: VERDICTS.skipped if present).
        #[arg(long)]
        skipped: Option<PathBuf>,
        /// Corpus, for a per-project breakdown.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, requires_all = ["gold", "corpus"])]
        predicted: Option<PathBuf>,
        #[arg(long, requires_all = ["predicted", "corpus"])]
        gold: Option<PathBuf>,
        /// Second verdict file; per-project F1s of both are compared with Mann-Whitney U.
        #[arg(long, requires = "corpus")]
        against: Option<PathBuf>,
        /// Second annotator's labels, for Cohen's kappa on shared pairs.
        #[arg(long)]
        second_labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detection with one category left out at a time.
    Ablate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        extractions: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Category to drop; repeat for several, omit for all five.
        #[arg(long, value_parser = parse_category)]
        drop: Vec<EntityCategory>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Whole-summary cosine baseline.
    Baseline {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        skipped: Option<PathBuf>,
    },
    /// Dependence, prerequisite grouping and completeness reports.
    Apps {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        extractions: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Human-readable report of verdicts and, optionally, metrics.
    Report {
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Everything `evaluate` computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub detection: MetricReport,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_project: BTreeMap<String, MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction: Option<ExtractionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub against: Option<MannWhitney>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TokenRecord {
    id: String,
    sentences: Vec<Vec<String>>,
    sep_sequence: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupRecord {
    group: Vec<String>,
}

fn default_skipped(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".skipped");
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_skipped(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn write_detection(out: &Path, skipped: Option<&Path>, detection: &Detection) -> Result<()> {
    write_jsonl(out, &detection.verdicts)?;
    let skipped = skipped.map_or_else(|| default_skipped(out), Path::to_path_buf);
    let mut text = detection.skipped.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    write_text(&skipped, &text)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<RedundancyVerdict>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, v)| v).collect())
}

/// Word vectors with frequencies counted over `corpus`.
fn load_store(path: &Path, corpus: &Corpus) -> Result<EmbeddingStore> {
    let store = load_word_vectors(path)?;
    let tokens = tokenize_corpus(corpus)?;
    Ok(store.with_frequencies(tokens.iter().flat_map(|t| t.tokens())))
}

fn dissect_all(data: &AnnotatedCorpus) -> Vec<Vec<TestTuple>> {
    data.tokenized
        .iter()
        .zip(&data.extractions)
        .map(|(t, e)| dissect(t, e).tuples)
        .collect()
}

/// Comparison settings with SIF fitted over the corpus's tuple phrases.
fn comparison_config(settings: &Settings, tuples: &[Vec<TestTuple>], store: &EmbeddingStore) -> Result<ComparisonConfig> {
    let sif = fit_slot_sif(tuples, store, settings.sif_a)?;
    let mut config = ComparisonConfig::new(settings.threshold, sif)?;
    config.lexicon = settings.lexicon()?;
    config.scope = settings.scope;
    Ok(config)
}

fn load_annotated(corpus: &Path, extractions: &Path) -> Result<AnnotatedCorpus> {
    let corpus = load_corpus(corpus)?;
    read_extractions(extractions, &corpus, Provenance::Imported)
}

fn fmt_rate(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:.3}", v))
}

fn fmt_delta(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:+.3}", v))
}

pub fn render_metrics(name: &str, r: &MetricReport) -> String {
    format!(
        "{name:<14} P {:>6}  R {:>6}  F1 {:>6}  Acc {:>6}  (tp {} fp {} fn {} tn {})\n",
        fmt_rate(r.precision),
        fmt_rate(r.recall),
        fmt_rate(r.f1),
        fmt_rate(r.accuracy),
        r.tp,
        r.fp,
        r.fn_,
        r.tn
    )
}

pub fn render_ablation(rows: &[AblationRow]) -> String {
    let mut s = String::from("dropped        P       R       F1      dP      dR      dF1     redundant\n");
    for row in rows {
        let name = row.dropped.map_or("none", EntityCategory::name);
        let _ = writeln!(
            s,
            "{name:<14} {:<7} {:<7} {:<7} {:<7} {:<7} {:<7} {}",
            fmt_rate(row.report.precision),
            fmt_rate(row.report.recall),
            fmt_rate(row.report.f1),
            fmt_delta(row.delta_precision),
            fmt_delta(row.delta_recall),
            fmt_delta(row.delta_f1),
            row.redundant_pairs
        );
    }
    s
}

/// Per-pair verdict summary with a reason table for every failed coverage.
pub fn render_verdicts(verdicts: &[RedundancyVerdict]) -> String {
    let redundant = verdicts.iter().filter(|v| v.redundant).count();
    let mut s = format!("{} pairs compared, {} redundant\n", verdicts.len(), redundant);
    for v in verdicts {
        let _ = writeln!(
            s,
            "\n{} / {}: {}{}",
            v.id_a,
            v.id_b,
            if v.redundant { "redundant" } else { "not redundant" },
            match (v.redundant, v.totally_equivalent) {
                (true, true) => " (totally equivalent)".to_string(),
                (true, false) => format!(" ({:?})", v.direction),
                _ => String::new(),
            }
        );
        for r in &v.reasons {
            let _ = writeln!(s, "  {:?} fails: {} has no match; closest {}", r.direction, r.uncovered, r.closest);
            for m in &r.mismatches {
                let _ = writeln!(
                    s,
                    "    {:<12} {:<10} a={:<30} b={:<30} sim={}",
                    m.slot.name(),
                    format!("{:?}", m.kind),
                    m.value_a.as_deref().unwrap_or("NULL"),
                    m.value_b.as_deref().unwrap_or("NULL"),
                    fmt_rate(m.similarity)
                );
            }
        }
    }
    s
}

fn render_evaluation(report: &EvaluationReport) -> String {
    let mut s = render_metrics("detection", &report.detection);
    for (project, r) in &report.per_project {
        s += &render_metrics(&format!("  {project}"), r);
    }
    if let Some(ex) = &report.extraction {
        s += &render_metrics("entities", &ex.entity_micro);
        for (c, r) in &ex.entities {
            s += &render_metrics(&format!("  {}", c.name()), r);
        }
        s += &render_metrics("relations", &ex.relation_micro);
        for (c, r) in &ex.relations {
            s += &render_metrics(&format!("  {c}"), r);
        }
    }
    if let Some(m) = &report.against {
        let _ = writeln!(s, "mann-whitney   U {} z {:.4} p {:.4}", m.u, m.z, m.p_value);
    }
    if let Some(k) = report.kappa {
        let _ = writeln!(s, "kappa          {k:.4}");
    }
    s
}

fn per_project(
    corpus: &Corpus,
    detection: &Detection,
    labels: &[RedundancyLabel],
) -> Result<BTreeMap<String, MetricReport>> {
    let mut grouped: BTreeMap<String, Vec<RedundancyLabel>> = BTreeMap::new();
    for l in labels {
        let project = corpus
            .get(&l.id_a)
            .ok_or_else(|| Error::Evaluation(format!("label names unknown case {:?}", l.id_a)))?
            .project
            .clone();
        grouped.entry(project).or_default().push(l.clone());
    }
    grouped
        .into_iter()
        .map(|(p, ls)| Ok((p, detection_metrics(detection, &ls)?)))
        .collect()
}

fn kappa_on_shared(a: &[RedundancyLabel], b: &[RedundancyLabel]) -> Result<f64> {
    let key = |l: &RedundancyLabel| {
        let c = l.canonical();
        (c.id_a, c.id_b)
    };
    let second: BTreeMap<_, bool> = b.iter().map(|l| (key(l), l.redundant)).collect();
    let (x, y): (Vec<bool>, Vec<bool>) = a
        .iter()
        .filter_map(|l| second.get(&key(l)).map(|&r| (l.redundant, r)))
        .unzip();
    cohen_kappa(&x, &y)
}

/// Runs one parsed command.
pub fn run(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let settings = Settings::resolve(&file, &cli.overrides)?;
    match &cli.command {
        Command::Synth { out_dir, cases, projects } => {
            let spec = SynthSpec {
                cases: *cases,
                projects: *projects,
                ..SynthSpec::default()
            };
            let synth = generate_synthetic_corpus(settings.seed, &spec)?;
            fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
            write_corpus(out_dir.join("corpus.jsonl"), &synth.corpus)?;
            write_extractions(out_dir.join("annotations.jsonl"), &synth.annotated()?, None)?;
            write_labels(out_dir.join("labels.jsonl"), &synth.labels)?;
            write_jsonl(&out_dir.join("pairs.jsonl"), &synth.pairs)?;
            info!("{} cases, {} labeled pairs", synth.corpus.len(), synth.labels.len());
        }
        Command::Preprocess { corpus, out } => {
            let corpus = load_corpus(corpus)?;
            let tokens = tokenize_corpus(&corpus)?;
            let records: Vec<TokenRecord> = corpus
                .cases()
                .iter()
                .zip(tokens)
                .map(|(c, t)| TokenRecord {
                    id: c.id.clone(),
                    sentences: t.sentences,
                    sep_sequence: t.sep_sequence,
                })
                .collect();
            write_jsonl(out, &records)?;
        }
        Command::TrainEmbeddings { corpus, out } => {
            let corpus = load_corpus(corpus)?;
            let sentences: Vec<Vec<String>> = tokenize_corpus(&corpus)?.into_iter().flat_map(|t| t.sentences).collect();
            let store = train_embeddings(&sentences, &settings.word2vec)?;
            write_word_vectors(out, &store)?;
            info!("{} words, dimension {}", store.len(), store.dim());
        }
        Command::TrainModel {
            corpus,
            annotations,
            embeddings,
            out,
        } => {
            let corpus = load_corpus(corpus)?;
            let store = load_store(embeddings, &corpus)?;
            let data = load_annotations(annotations, &corpus)?;
            let (model, trace) = train_joint(&data, &store, &settings.extraction)?;
            info!("final epoch loss {:.4}", trace.last().copied().unwrap_or(f64::NAN));
            model.save(out)?;
        }
        Command::Extract {
            corpus,
            model,
            embeddings,
            out,
        } => {
            let corpus = load_corpus(corpus)?;
            let store = load_store(embeddings, &corpus)?;
            let model = ExtractionModel::load(model)?;
            let tokens = tokenize_corpus(&corpus)?;
            let data = extract_corpus(&corpus, &tokens, &model, &store)?;
            write_extractions(out, &data, Some(&dissect_all(&data)))?;
        }
        Command::Detect {
            corpus,
            extractions,
            embeddings,
            out,
            skipped,
        } => {
            let data = load_annotated(corpus, extractions)?;
            let store = load_store(embeddings, &data.corpus)?;
            let tuples = dissect_all(&data);
            let config = comparison_config(&settings, &tuples, &store)?;
            let detection = detect_with_tuples(&data, &tuples, &store, &config)?;
            info!(
                "{} pairs, {} redundant",
                detection.verdicts.len(),
                detection.verdicts.iter().filter(|v| v.redundant).count()
            );
            write_detection(out, skipped.as_deref(), &detection)?;
        }
        Command::Evaluate {
            labels,
            verdicts,
            skipped,
            corpus,
            predicted,
            gold,
            against,
            second_labels,
            out,
        } => {
            let labels = load_labels(labels)?;
            let read_detection = |path: &Path, skipped: Option<&Path>| -> Result<Detection> {
                let skipped_path = skipped.map_or_else(|| default_skipped(path), Path::to_path_buf);
                let skipped = if skipped.is_some() || skipped_path.exists() {
                    read_skipped(&skipped_path)?
                } else {
                    Vec::new()
                };
                Ok(Detection {
                    verdicts: read_verdicts(path)?,
                    skipped,
                })
            };
            let detection = read_detection(verdicts, skipped.as_deref())?;
            let corpus = corpus.as_deref().map(load_corpus).transpose()?;
            let mut report = EvaluationReport {
                detection: detection_metrics(&detection, &labels)?,
                per_project: BTreeMap::new(),
                extraction: None,
                against: None,
                kappa: None,
            };
            if let Some(corpus) = &corpus {
                report.per_project = per_project(corpus, &detection, &labels)?;
                if let (Some(p), Some(g)) = (predicted, gold) {
                    let p = read_extractions(p, corpus, Provenance::Imported)?;
                    let g = load_annotations(g, corpus)?;
                    report.extraction = Some(extraction_metrics(&p.extractions, &g.extractions)?);
                }
                if let Some(other) = against {
                    let other = per_project(corpus, &read_detection(other, None)?, &labels)?;
                    let f1s = |m: &BTreeMap<String, MetricReport>| -> Vec<f64> { m.values().filter_map(|r| r.f1).collect() };
                    report.against = Some(mann_whitney_u(&f1s(&report.per_project), &f1s(&other))?);
                }
            }
            if let Some(second) = second_labels {
                report.kappa = Some(kappa_on_shared(&labels, &load_labels(second)?)?);
            }
            write_json(out, &report)?;
            print!("{}", render_evaluation(&report));
        }
        Command::Ablate {
            corpus,
            extractions,
            embeddings,
            labels,
            drop,
            out,
        } => {
            let data = load_annotated(corpus, extractions)?;
            let store = load_store(embeddings, &data.corpus)?;
            let labels = load_labels(labels)?;
            let tuples = dissect_all(&data);
            let config = comparison_config(&settings, &tuples, &store)?;
            let drops: Vec<EntityCategory> = if drop.is_empty() {
                EntityCategory::ALL.to_vec()
            } else {
                drop.clone()
            };
            let rows = ablation_table(&data, &tuples, &store, &config, &labels, &drops)?;
            write_jsonl(out, &rows)?;
            print!("{}", render_ablation(&rows));
        }
        Command::Baseline {
            corpus,
            embeddings,
            out,
            skipped,
        } => {
            let corpus = load_corpus(corpus)?;
            let store = load_store(embeddings, &corpus)?;
            let detection = wholetext_detect(&corpus, &store, settings.threshold, settings.scope)?;
            write_detection(out, skipped.as_deref(), &detection)?;
        }
        Command::Apps {
            corpus,
            extractions,
            embeddings,
            out_dir,
        } => {
            let data = load_annotated(corpus, extractions)?;
            let store = load_store(embeddings, &data.corpus)?;
            let config = comparison_config(&settings, &dissect_all(&data), &store)?;
            fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
            write_jsonl(&out_dir.join("dependence.jsonl"), &dependence_report(&data, &store, &config))?;
            let groups: Vec<GroupRecord> = group_by_prerequisite(&data, &store, &config)
                .into_iter()
                .map(|group| GroupRecord { group })
                .collect();
            write_jsonl(&out_dir.join("groups.jsonl"), &groups)?;
            write_jsonl(&out_dir.join("completeness.jsonl"), &completeness_report(&data))?;
        }
        Command::Report { verdicts, metrics, out } => {
            let mut text = String::new();
            if let Some(m) = metrics {
                let raw = fs::read_to_string(m).map_err(|e| Error::io(m, e))?;
                let report: EvaluationReport = serde_json::from_str(&raw)?;
                text += &render_evaluation(&report);
                text.push('\n');
            }
            text += &render_verdicts(&read_verdicts(verdicts)?);
            write_text(out, &text)?;
        }
    }
    Ok(())
}

/// Parses the process arguments, runs the command and returns the exit code:
/// 0 on success, 1 for usage and input errors, 2 for internal failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}
