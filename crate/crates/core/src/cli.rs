//! The `kgtype` command line.
//!
//! Settings come from flags and, optionally, a `key = value` config file
//! given with `--config`; flags win. Exit codes: 0 success, 1 usage or I/O
//! error, 2 empty result, 3 numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::answerprep::{self, load_qa_tsv, prepare_dataset, write_dataset, PrepConfig, PrepError};
use crate::embedstore::load_embeddings;
use crate::neuralnet::gradcheck::{gradient_check, random_case, TOLERANCE};
use crate::neuralnet::{
    load_checkpoint, save_checkpoint, train, NnError, OptimizerKind, TrainConfig,
};
use crate::typestore::load_type_system;
use crate::typesuggest::{SeedQuery, TypeSuggester};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_EMPTY: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Empty(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Empty(_) => EXIT_EMPTY,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            NnError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Io(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "kgtype",
    version,
    about = "Knowledge-graph type suggestion and answer type prediction"
)]
struct Cli {
    /// `key = value` settings file; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and validate a type system (and optionally word vectors)
    IngestCheck(IngestArgs),
    /// Rank types for a list of seed terms
    Suggest(SuggestArgs),
    /// Build a typed training set from question/answer pairs
    Prepare(PrepareArgs),
    /// Train an answer type model
    Train(TrainArgs),
    /// Rank answer types for a question
    Predict(PredictArgs),
    /// Compare analytic and finite-difference gradients on random models
    Gradcheck(GradcheckArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SuggestArgs {
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Comma-separated seed terms
    #[arg(long)]
    seeds: Option<String>,
    /// Minimum number of seeds after expansion
    #[arg(long = "k")]
    seed_k: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Question/answer TSV
    #[arg(long)]
    qa: Option<PathBuf>,
    /// Output dataset (JSON lines)
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output vocabulary sidecar
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    restriction_k: Option<usize>,
    #[arg(long)]
    threshold_c: Option<usize>,
    #[arg(long)]
    ner_score: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output checkpoint
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Also write the `epoch<TAB>mean_loss` lines to this file
    #[arg(long)]
    loss_log: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    question: String,
    /// Number of ranked types to print
    #[arg(long)]
    top: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Number of random models to check
    #[arg(long)]
    seeds: Option<u64>,
    /// First seed
    #[arg(long)]
    start: Option<u64>,
}

/// Parsed `key = value` settings.
#[derive(Debug, Default)]
struct ConfigFile {
    values: BTreeMap<String, String>,
}

const CONFIG_KEYS: &[&str] = &[
    "kb",
    "embeddings",
    "qa",
    "dataset",
    "vocab",
    "checkpoint",
    "loss_log",
    "seeds",
    "seed_k",
    "restriction_k",
    "threshold_c",
    "ner_score",
    "hidden",
    "learning_rate",
    "epochs",
    "batch_size",
    "negatives",
    "seed",
    "optimizer",
    "format",
    "top",
];

impl ConfigFile {
    fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key = value", i + 1))
            })?;
            let key = k.trim().replace('-', "_");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key `{key}`",
                    i + 1
                )));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }
}

struct Resolver {
    config: ConfigFile,
}

impl Resolver {
    fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.config.get(key),
        }
    }

    fn required<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(flag, key)?.ok_or_else(|| {
            CliError::Usage(format!(
                "missing required setting `--{}`",
                key.replace('_', "-")
            ))
        })
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    fn positive<T: FromStr + PartialOrd + Default>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.or(flag, key, default)?;
        if v <= T::default() {
            return Err(CliError::Usage(format!("`{key}` must be positive")));
        }
        Ok(v)
    }
}

/// Runs the CLI with explicit argument list and output streams; returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let r = Resolver { config };
    match cli.command {
        Command::IngestCheck(a) => cmd_ingest_check(&r, a, out),
        Command::Suggest(a) => cmd_suggest(&r, a, out),
        Command::Prepare(a) => cmd_prepare(&r, a, out),
        Command::Train(a) => cmd_train(&r, a, out),
        Command::Predict(a) => cmd_predict(&r, a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&r, a, out, err),
    }
}

fn cmd_ingest_check(r: &Resolver, a: IngestArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let kb: PathBuf = r.required(a.kb, "kb")?;
    let g = load_type_system(&kb).map_err(io_err)?;
    writeln!(
        out,
        "entities={} types={} labels={} subclass_edges={}",
        g.total_entity_count(),
        g.type_count(),
        g.all_labels().count(),
        g.subclass_edges().count()
    )
    .map_err(io_err)?;
    if let Some(path) = r.opt::<PathBuf>(a.embeddings, "embeddings")? {
        let store = load_embeddings(&path).map_err(io_err)?;
        writeln!(out, "terms={} dim={}", store.len(), store.dim()).map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

fn cmd_suggest(r: &Resolver, a: SuggestArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let kb: PathBuf = r.required(a.kb, "kb")?;
    let emb: PathBuf = r.required(a.embeddings, "embeddings")?;
    let seeds: String = r.required(a.seeds, "seeds")?;
    let k = r.positive(a.seed_k, "seed_k", 3)?;
    let format = r.or(a.format, "format", Format::Tsv)?;
    let query = SeedQuery::parse(&seeds, k)
        .ok_or_else(|| CliError::Usage("`--seeds` must name at least one term".into()))?;

    let g = load_type_system(&kb).map_err(io_err)?;
    let store = load_embeddings(&emb).map_err(io_err)?;
    let ranked = TypeSuggester::new(&g, &store).suggest(&query);
    if ranked.is_empty() {
        return Err(CliError::Empty(
            "no seed term could be linked to an entity".into(),
        ));
    }
    for (i, (t, score)) in ranked.entries().iter().enumerate() {
        match format {
            Format::Tsv => writeln!(out, "{}\t{t}\t{score:.6}", i + 1),
            Format::Json => writeln!(out, "{}", json!({"rank": i + 1, "type": t, "score": score})),
        }
        .map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

fn cmd_prepare(r: &Resolver, a: PrepareArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let kb: PathBuf = r.required(a.kb, "kb")?;
    let emb: PathBuf = r.required(a.embeddings, "embeddings")?;
    let qa: PathBuf = r.required(a.qa, "qa")?;
    let dataset_path: PathBuf = r.required(a.dataset, "dataset")?;
    let vocab_path: PathBuf = r.required(a.vocab, "vocab")?;
    let defaults = PrepConfig::default();
    let cfg = PrepConfig {
        restriction_k: r.positive(a.restriction_k, "restriction_k", defaults.restriction_k)?,
        threshold_c: r.positive(a.threshold_c, "threshold_c", defaults.threshold_c)?,
        ner_score: r.positive(a.ner_score, "ner_score", defaults.ner_score)?,
    };

    let g = load_type_system(&kb).map_err(io_err)?;
    let store = load_embeddings(&emb).map_err(io_err)?;
    let pairs = load_qa_tsv(&qa).map_err(io_err)?;
    let suggester = TypeSuggester::new(&g, &store);
    let prepared = match prepare_dataset(&suggester, &pairs, &cfg) {
        Ok(p) => p,
        Err(e @ (PrepError::EmptyDataset | PrepError::EmptyVocabulary)) => {
            return Err(CliError::Io(e.to_string()))
        }
        Err(PrepError::Config(m)) => return Err(CliError::Usage(m)),
        Err(e) => return Err(io_err(e)),
    };

    let mut data = Vec::new();
    write_dataset(&prepared.examples, &mut data).map_err(io_err)?;
    fs::write(&dataset_path, data).map_err(io_err)?;
    let mut vocab = Vec::new();
    prepared
        .vocabulary
        .write_sidecar(&mut vocab)
        .map_err(io_err)?;
    fs::write(&vocab_path, vocab).map_err(io_err)?;

    let s = &prepared.summary;
    writeln!(
        out,
        "kept={} dropped={} remapped={} vocabulary={}",
        s.kept,
        s.dropped,
        s.remapped,
        prepared.vocabulary.len()
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}

fn cmd_train(r: &Resolver, a: TrainArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let dataset: PathBuf = r.required(a.dataset, "dataset")?;
    let vocab: PathBuf = r.required(a.vocab, "vocab")?;
    let emb: PathBuf = r.required(a.embeddings, "embeddings")?;
    let ckpt: PathBuf = r.required(a.checkpoint, "checkpoint")?;
    let loss_log: Option<PathBuf> = r.opt(a.loss_log, "loss_log")?;

    let store = load_embeddings(&emb).map_err(io_err)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        hidden: r.positive(a.hidden, "hidden", store.dim() / 2)?,
        learning_rate: r.positive(a.learning_rate, "learning_rate", defaults.learning_rate)?,
        epochs: r.positive(a.epochs, "epochs", defaults.epochs)?,
        batch_size: r.positive(a.batch_size, "batch_size", defaults.batch_size)?,
        negatives: r.or(a.negatives, "negatives", defaults.negatives)?,
        seed: r.or(a.seed, "seed", defaults.seed)?,
        optimizer: r.or(a.optimizer, "optimizer", defaults.optimizer)?,
    };
    cfg.validate(store.dim())?;
    let examples = answerprep::load_dataset(&dataset).map_err(io_err)?;
    let types = answerprep::load_vocabulary_labels(&vocab).map_err(io_err)?;

    let mut log_lines = String::new();
    let mut write_err = None;
    let outcome = train(&examples, &types, &store, &cfg, |epoch, loss| {
        let line = format!("{epoch}\t{loss:.6}\n");
        if let Err(e) = out.write_all(line.as_bytes()) {
            write_err.get_or_insert(e);
        }
        log_lines.push_str(&line);
    })?;
    if let Some(e) = write_err {
        return Err(io_err(e));
    }
    if let Some(path) = loss_log {
        fs::write(path, log_lines).map_err(io_err)?;
    }
    save_checkpoint(&outcome.model, &ckpt)?;
    Ok(EXIT_OK)
}

fn cmd_predict(r: &Resolver, a: PredictArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let ckpt: PathBuf = r.required(a.checkpoint, "checkpoint")?;
    let top = r.positive(a.top, "top", 10)?;
    let format = r.or(a.format, "format", Format::Tsv)?;
    let model = load_checkpoint(&ckpt)?;
    let pred = model.predict(&a.question).map_err(|e| match e {
        NnError::EmptyQuestion => CliError::Usage(e.to_string()),
        other => other.into(),
    })?;
    for (rank, &idx) in pred.ranking.iter().take(top).enumerate() {
        let t = &model.types[idx];
        let p = pred.scores[idx];
        match format {
            Format::Tsv => writeln!(out, "{}\t{t}\t{p:.6}", rank + 1),
            Format::Json => writeln!(
                out,
                "{}",
                json!({"rank": rank + 1, "type": t.to_string(), "prob": p})
            ),
        }
        .map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(
    r: &Resolver,
    a: GradcheckArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let n = r.positive(a.seeds, "seeds", 100)?;
    let start = r.or(a.start, "seed", 0)?;
    let mut worst = 0.0f64;
    for seed in start..start + n {
        let (model, sample) = random_case(seed);
        let report = gradient_check(&model, &sample, false)?;
        if !report.passed() {
            writeln!(err, "seed {seed}: {:?}", report.per_tensor).map_err(io_err)?;
        }
        worst = worst.max(report.max_relative_error);
    }
    writeln!(out, "models={n} max_relative_error={worst:.3e}").map_err(io_err)?;
    if worst < TOLERANCE {
        Ok(EXIT_OK)
    } else {
        Err(CliError::Numeric(format!(
            "max relative error {worst:.3e} exceeds {TOLERANCE:e}"
        )))
    }
}
