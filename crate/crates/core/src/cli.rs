//! Command-line entry points. Each subcommand is a thin wrapper over the
//! library; all output goes to the supplied writer so commands can be run
//! in-process.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{disagreement_report, inspect_transitions, DEFAULT_THRESHOLD};
use crate::corpus::{
    load_canonical, load_embeddings, parse_raw, vocabulary, write_canonical, ColumnMap, CorpusStats, EmbeddingTable,
    Span,
};
use crate::error::{Error, Result};
use crate::evaluation::assemble_tables;
use crate::model::{init_params, load_checkpoint, predict, save_checkpoint, HyperParams, OutputLayer, QueryInput};
use crate::querygen::{Query, Setup};
use crate::training::{self, grad_check, predict_all, train_loop, Dataset, GradCheckConfig, TrainConfig};
use crate::{corpus::EcLabel, corpus::ReLabel, synth};

pub const CONFIG_ENV: &str = "JOINTCRF_CONFIG";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const FINAL_DIR: &str = "final";

#[derive(Debug, Parser)]
#[command(name = "jointcrf", version, about = "Joint entity and relation classification with a CRF output layer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Convert a raw column-format corpus into the canonical JSON-lines format.
    Convert(ConvertArgs),
    /// Train a model and write the best-on-dev checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a canonical corpus.
    Eval(EvalArgs),
    /// Classify one entity pair in a sentence.
    Predict(PredictArgs),
    /// Compare analytic and finite-difference gradients on a fresh model.
    Gradcheck(GradcheckArgs),
    /// List strong transitions of a trained CRF.
    InspectTransitions(InspectArgs),
    /// Entity vote disagreement of a checkpoint on a corpus.
    Disagreement(DisagreementArgs),
    /// Generate a synthetic corpus (and optionally matching embeddings).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Column map, e.g. `sentence=0,tag=1,index=2,word=5`.
    #[arg(long, default_value = "sentence=0,tag=1,index=2,word=5")]
    pub columns: String,
}

/// Every tunable of a training run. Values come from the config file (if
/// any) and are overridden by flags.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub setup: Option<u8>,
    #[arg(long)]
    pub output_layer: Option<OutputLayer>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub keep_prob: Option<f64>,
    #[arg(long)]
    pub nk_c: Option<usize>,
    #[arg(long)]
    pub nk_e: Option<usize>,
    #[arg(long)]
    pub h_c: Option<usize>,
    #[arg(long)]
    pub h_e: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Embedding size when no embedding file is given.
    #[arg(long)]
    pub emb_dim: Option<usize>,
    #[arg(long)]
    pub context_width: Option<usize>,
    #[arg(long)]
    pub entity_width: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub freeze_embeddings: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub masked_decode: Option<bool>,
}

impl RunConfig {
    /// `self` with every unset field taken from `base`.
    pub fn over(&self, base: &RunConfig) -> Result<RunConfig> {
        let mut merged = serde_json::to_value(base)?;
        if let (Value::Object(m), Value::Object(top)) = (&mut merged, serde_json::to_value(self)?) {
            for (k, v) in top {
                if !v.is_null() {
                    m.insert(k, v);
                }
            }
        }
        Ok(serde_json::from_value(merged)?)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    pub fn setup(&self) -> Result<Setup> {
        Setup::try_from(self.setup.unwrap_or(1))
    }

    pub fn output(&self) -> OutputLayer {
        self.output_layer.unwrap_or(OutputLayer::Crf)
    }

    /// Tuned defaults for the setup and output layer, then overrides.
    pub fn hyper(&self, emb_dim: usize) -> Result<HyperParams> {
        let mut h = HyperParams::tuned(self.setup()?, self.output());
        h.emb_dim = emb_dim;
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut h.nk_c, self.nk_c);
        set(&mut h.nk_e, self.nk_e);
        set(&mut h.h_c, self.h_c);
        set(&mut h.h_e, self.h_e);
        set(&mut h.k, self.k);
        set(&mut h.context_width, self.context_width);
        set(&mut h.entity_width, self.entity_width);
        h.validate()?;
        Ok(h)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let c = TrainConfig {
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            l2: self.l2.unwrap_or(d.l2),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            seed: self.seed.unwrap_or(d.seed),
            keep_prob: self.keep_prob.unwrap_or(d.keep_prob),
            masked_decode: self.masked_decode.unwrap_or(d.masked_decode),
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = Setup::EntityPairs)]
    pub setup: Setup,
    /// Restrict entity positions to entity classes when decoding.
    #[arg(long)]
    pub masked_decode: bool,
    /// Leave `Other` out of Avg EC.
    #[arg(long)]
    pub omit_other: bool,
    /// Directory for `report.json` and `report.txt`.
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Whitespace-separated tokens.
    #[arg(long)]
    pub sentence: String,
    /// First entity as `start:end` token offsets (end exclusive).
    #[arg(long)]
    pub e1: String,
    #[arg(long)]
    pub e2: String,
    #[arg(long)]
    pub masked_decode: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = OutputLayer::Crf)]
    pub output_layer: OutputLayer,
    #[arg(long, default_value_t = 5)]
    pub queries: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, allow_negative_numbers = true)]
    pub threshold: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DisagreementArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = Setup::TableFilling)]
    pub setup: Setup,
    #[arg(long)]
    pub masked_decode: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub sentences: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Share of swapped triggers; any value above 0 selects the coupled grammar.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Also write word2vec-format vectors for the grammar vocabulary.
    #[arg(long)]
    pub embeddings_out: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub emb_dim: usize,
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} `{}` does not exist", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} `{}` is not a directory", path.display())))
    }
}

pub fn cmd_convert(args: &ConvertArgs, out: &mut dyn Write) -> Result<()> {
    let map: ColumnMap = args.columns.parse()?;
    require_file(&args.input, "input")?;
    let sentences = parse_raw(&args.input, &map)?;
    write_canonical(&args.output, &sentences)?;
    let stats = CorpusStats::of(&sentences);
    writeln!(out, "{stats}")?;
    for setup in [Setup::EntityPairs, Setup::TableFilling, Setup::TokenTable] {
        let set = crate::querygen::generate(setup, &sentences);
        writeln!(
            out,
            "setup {setup}: {} queries, {} negative",
            set.queries.len(),
            set.negatives()
        )?;
    }
    Ok(())
}

/// Trains as configured; writes the best checkpoint to `checkpoint`, the
/// last epoch's parameters to `checkpoint/final`, and the log.
pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let train_path = cfg.train.as_deref().ok_or_else(|| Error::Config("--train is required".into()))?;
    let dev_path = cfg.dev.as_deref().ok_or_else(|| Error::Config("--dev is required".into()))?;
    let ckpt = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config("--checkpoint is required".into()))?;
    require_file(train_path, "train corpus")?;
    require_file(dev_path, "dev corpus")?;
    if let Some(e) = &cfg.embeddings {
        require_file(e, "embeddings")?;
    }
    let setup = cfg.setup()?;
    let tc = cfg.train_config()?;
    if setup == Setup::EntityPairs && cfg.keep_prob.is_some() {
        writeln!(out, "warning: keep_prob has no effect in setup 1; ignored")?;
    }

    let train = load_canonical(train_path)?;
    let dev = load_canonical(dev_path)?;
    let vocab = vocabulary([train.as_slice(), dev.as_slice()]);
    let mut table = match &cfg.embeddings {
        Some(path) => {
            let (t, stats) = load_embeddings(path, &vocab, tc.seed)?;
            writeln!(
                out,
                "embeddings: {} words, {} exact, {} lowercased, {} unknown",
                stats.requested, stats.exact, stats.lowercase, stats.unk
            )?;
            t
        }
        None => {
            let dim = cfg.emb_dim.unwrap_or(50);
            EmbeddingTable::random(&vocab, dim, (6.0 / (1.0 + dim as f64)).sqrt(), tc.seed)
        }
    };
    table.trainable = !cfg.freeze_embeddings.unwrap_or(false);
    let hyper = cfg.hyper(table.dim())?;
    let params = init_params(hyper, table, tc.seed)?;
    writeln!(
        out,
        "setup {setup}, {} output, {} parameters",
        hyper.output,
        params.parameter_count()
    )?;

    let train_set = Dataset::build(&params, &train, setup, tc.keep_prob, tc.seed)?;
    let dev_set = Dataset::build(&params, &dev, setup, tc.keep_prob, tc.seed.wrapping_add(1))?;
    writeln!(out, "{} train queries, {} dev queries", train_set.len(), dev_set.len())?;

    let outcome = train_loop(params, &train_set, &dev_set, &tc)?;
    for r in &outcome.log {
        writeln!(
            out,
            "epoch {:>2} lr {:.6} loss {:.6} dev Avg EC {:.4} Avg RE {:.4} Avg EC+RE {:.4}{}",
            r.epoch,
            r.lr,
            r.train_loss,
            r.dev_avg_ec,
            r.dev_avg_re,
            r.dev_avg_ec_re,
            if r.halved { " (lr halved)" } else { "" }
        )?;
    }

    // the output location is not part of the run, so it stays out of the
    // stored config and relocated runs produce identical bytes
    let stored = RunConfig {
        checkpoint: None,
        ..cfg.clone()
    };
    let mut meta = BTreeMap::new();
    meta.insert("config".to_string(), serde_json::to_value(&stored)?);
    meta.insert("best_epoch".to_string(), Value::from(outcome.state.best_epoch));
    meta.insert("epochs".to_string(), Value::from(outcome.state.epoch));
    save_checkpoint(ckpt, &outcome.best, tc.seed, meta.clone())?;
    save_checkpoint(ckpt.join(FINAL_DIR), &outcome.last, tc.seed, meta)?;
    fs::write(ckpt.join(LOG_FILE), training::log_to_string(&outcome.log)?)?;
    writeln!(out, "checkpoint written to {}", ckpt.display())?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    require_dir(&args.checkpoint, "checkpoint")?;
    require_file(&args.corpus, "corpus")?;
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let sentences = load_canonical(&args.corpus)?;
    let data = Dataset::build(&params, &sentences, args.setup, 1.0, 0)?;
    let report = training::evaluate(&params, &data, args.masked_decode, args.omit_other)?;
    write!(out, "{report}")?;
    if let Some(dir) = &args.report_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), report.to_json()?)?;
        fs::write(dir.join("report.txt"), report.to_string())?;
    }
    Ok(())
}

fn parse_span(s: &str, len: usize) -> Result<Span> {
    let bad = || Error::Query(format!("span `{s}` is not `start:end`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let (start, end): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if start >= end || end > len {
        return Err(Error::Query(format!("span {start}:{end} invalid for {len} tokens")));
    }
    Ok(Span::new(start, end))
}

pub fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    require_dir(&args.checkpoint, "checkpoint")?;
    let tokens: Vec<String> = args.sentence.split_whitespace().map(str::to_string).collect();
    let (e1, e2) = (parse_span(&args.e1, tokens.len())?, parse_span(&args.e2, tokens.len())?);
    if e1 == e2 {
        return Err(Error::Query("the two spans are identical".into()));
    }
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let ids = params.vocab.encode(&tokens);
    let query = Query {
        sentence: 0,
        row_i: 0,
        row_j: 1,
        span_i: e1,
        span_j: e2,
        gold_t1: EcLabel::O,
        gold_rel: ReLabel::N,
        gold_t2: EcLabel::O,
        inverse: false,
        setup: Setup::EntityPairs,
    };
    let p = predict(&params, &QueryInput::new(&ids, &query)?, args.masked_decode)?;
    let name = crate::corpus::LabelSpace::tag_name;
    writeln!(
        out,
        "{}\t{}\t{}\tscore {:.4}",
        name(p.labels[0]),
        name(p.labels[1]),
        name(p.labels[2]),
        p.score
    )?;
    for (pos, &l) in p.labels.iter().enumerate() {
        writeln!(out, "  position {pos}: {} ({:.4})", name(l), p.scores[(pos, l)])?;
    }
    Ok(())
}

/// Returns whether the check passed.
pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<bool> {
    let mut cfg = GradCheckConfig::tiny(args.output_layer);
    cfg.n_queries = args.queries;
    cfg.seed = args.seed;
    cfg.tolerance = args.tolerance;
    let report = grad_check(&cfg)?;
    writeln!(out, "{report}")?;
    Ok(report.passed)
}

pub fn cmd_inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    require_dir(&args.checkpoint, "checkpoint")?;
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let report = inspect_transitions(params.transitions(), args.threshold)?;
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        write!(out, "{report}")?;
    }
    Ok(())
}

pub fn cmd_disagreement(args: &DisagreementArgs, out: &mut dyn Write) -> Result<()> {
    require_dir(&args.checkpoint, "checkpoint")?;
    require_file(&args.corpus, "corpus")?;
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let sentences = load_canonical(&args.corpus)?;
    let data = Dataset::build(&params, &sentences, args.setup, 1.0, 0)?;
    let preds = predict_all(&params, &data, args.masked_decode)?;
    let tables = assemble_tables(&data.set, &preds)?;
    let groups: Vec<Vec<usize>> = tables.into_iter().flat_map(|t| t.row_votes).collect();
    writeln!(out, "{}", disagreement_report(&groups))?;
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let grammar = if args.noise > 0.0 {
        synth::RuleGrammar::coupled(args.seed, args.noise)
    } else {
        synth::RuleGrammar::standard(args.seed)
    };
    let corpus = synth::generate(&grammar, args.sentences)?;
    write_canonical(&args.output, &corpus)?;
    writeln!(out, "{}", CorpusStats::of(&corpus))?;
    if let Some(path) = &args.embeddings_out {
        synth::embeddings(&grammar, args.emb_dim, args.seed).write_word2vec(path)?;
    }
    Ok(())
}

/// Runs a parsed command. `Ok(false)` signals a failed check.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<bool> {
    match &cli.command {
        Command::Convert(a) => cmd_convert(a, out)?,
        Command::Train(a) => {
            let cfg = match &a.config {
                Some(path) => a.run.over(&RunConfig::load(path)?)?,
                None => a.run.clone(),
            };
            cmd_train(&cfg, out)?
        }
        Command::Eval(a) => cmd_eval(a, out)?,
        Command::Predict(a) => cmd_predict(a, out)?,
        Command::Gradcheck(a) => return cmd_gradcheck(a, out),
        Command::InspectTransitions(a) => cmd_inspect(a, out)?,
        Command::Disagreement(a) => cmd_disagreement(a, out)?,
        Command::Synth(a) => cmd_synth(a, out)?,
    }
    Ok(true)
}

/// Parses the process arguments, runs, and maps the outcome to an exit
/// code: 0 success, 1 runtime failure, 2 usage or configuration error.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
