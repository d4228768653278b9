//! Command-line interface: validation, sampling, scoring, training,
//! classification, neighbor listing and shell-log ingestion.
//!
//! Exit codes: 0 success, 1 invalid model or data, 2 usage or I/O error.

mod ingest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::learn::{gem_inner_loop, LearnError, OptimizerConfig, ParamVector};
use crate::model::{clause_text, load_model, parse_model, save_model, Lohmm, ModelError};
use crate::semantics::{
    check_sequence, classify, format_sequence, log_likelihood, parse_corpus_lines, sample, ClassModel, SemanticsError, Sequence,
};
use crate::structure::{initial_hypothesis, naive_greedy, refine, sagem, Score, SearchConfig, SearchResult, TraceRecord};

pub use ingest::{ingest_shell, sanitize, Ingested};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Model(ModelError::Io { .. }) => 2,
            CliError::Semantics(SemanticsError::BadPriors(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "lohmm", version, about = "Logical hidden Markov models")]
pub struct Cli {
    /// Worker threads for likelihood and neighbor evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a model file; prints one violation per line.
    Validate { model: PathBuf },
    /// Sample observation sequences from a model.
    Sample {
        model: PathBuf,
        #[arg(long)]
        num: usize,
        #[arg(long)]
        len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corpus output; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the hidden state sequences here.
        #[arg(long)]
        hidden: Option<PathBuf>,
    },
    /// Log-likelihood of each corpus line and of the whole corpus.
    Loglik { model: PathBuf, corpus: PathBuf },
    /// Estimate parameters, optionally learning structure. A model file
    /// without transitions starts from the fully general hypothesis.
    Train(TrainArgs),
    /// Assign each corpus line to the most probable class.
    Classify {
        /// `class=path`, repeated once per class.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        /// `class=p`; uniform if no priors are given.
        #[arg(long = "prior")]
        priors: Vec<String>,
        /// One true class per corpus sequence, for a precision/recall summary.
        #[arg(long)]
        labels: Option<PathBuf>,
        corpus: PathBuf,
    },
    /// List the refinement neighbors of a model.
    Neighbors { model: PathBuf },
    /// Turn a shell log into a corpus and a signature.
    IngestShell {
        log: PathBuf,
        #[arg(long, default_value_t = 1)]
        max_args: usize,
        #[arg(long)]
        sig_out: PathBuf,
        /// Corpus output; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the fully general initial hypothesis of a signature.
    Init {
        signature: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sagem,
    Naive,
    ParamsOnly,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    pub corpus: PathBuf,
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Sagem)]
    pub mode: Mode,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.trace`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Defaults to `<out>.manifest`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub l_max: usize,
    #[arg(long, default_value_t = 10)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1)]
    pub beam_width: usize,
    #[arg(long, default_value_t = 50)]
    pub max_outer: usize,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|source| CliError::Io { path: "<stdout>".into(), source })
}

fn model_file(path: &Path) -> Result<Lohmm, CliError> {
    Ok(load_model(&read(path)?)?)
}

/// Reads a corpus and checks every atom against `m`'s signature.
fn corpus_file(path: &Path, m: &Lohmm) -> Result<(Vec<usize>, Vec<Sequence>), CliError> {
    let lines = parse_corpus_lines(&read(path)?)?;
    for (line, seq) in &lines {
        check_sequence(m.signature(), seq).map_err(|e| SemanticsError::Corpus { line: *line, message: e.to_string() })?;
    }
    Ok(lines.into_iter().unzip())
}

/// Runs a parsed command line, writing results to `out`. Returns the exit
/// code for outcomes that are not errors (a failed validation is 1).
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<u8, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match &cli.command {
        Command::Validate { model } => cmd_validate(model, out),
        Command::Sample { model, num, len, seed, out: path, hidden } => {
            cmd_sample(model, *num, *len, *seed, path.as_deref(), hidden.as_deref(), out)
        }
        Command::Loglik { model, corpus } => cmd_loglik(model, corpus, out),
        Command::Train(args) => cmd_train(args, cli.threads, out),
        Command::Classify { models, priors, labels, corpus } => cmd_classify(models, priors, labels.as_deref(), corpus, out),
        Command::Neighbors { model } => cmd_neighbors(model, out),
        Command::IngestShell { log, max_args, sig_out, out: path } => cmd_ingest(log, *max_args, sig_out, path.as_deref(), out),
        Command::Init { signature, out: path } => {
            let sig = parse_model(&read(signature)?)?;
            let text = save_model(&initial_hypothesis(sig.shared_signature()));
            match path {
                Some(p) => write(p, &text)?,
                None => emit(out, &text)?,
            }
            Ok(0)
        }
    }
}

fn cmd_validate(path: &Path, out: &mut dyn Write) -> Result<u8, CliError> {
    let m = parse_model(&read(path)?)?;
    let violations = m.validate();
    if violations.is_empty() {
        emit(out, &format!("ok: {} transitions, {} bodies\n", m.num_transitions(), m.groups().len()))?;
        return Ok(0);
    }
    for v in &violations {
        emit(out, &format!("{v}\n"))?;
    }
    Ok(1)
}

fn cmd_sample(
    model: &Path,
    num: usize,
    len: usize,
    seed: u64,
    path: Option<&Path>,
    hidden: Option<&Path>,
    out: &mut dyn Write,
) -> Result<u8, CliError> {
    let m = model_file(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = String::new();
    let mut states = String::new();
    for _ in 0..num {
        let (h, o) = sample(&m, len, &mut rng)?;
        corpus.push_str(&format_sequence(&o));
        corpus.push('\n');
        states.push_str(&format_sequence(&h));
        states.push('\n');
    }
    match path {
        Some(p) => write(p, &corpus)?,
        None => emit(out, &corpus)?,
    }
    if let Some(p) = hidden {
        write(p, &states)?;
    }
    Ok(0)
}

fn cmd_loglik(model: &Path, corpus: &Path, out: &mut dyn Write) -> Result<u8, CliError> {
    let m = model_file(model)?;
    let (lines, data) = corpus_file(corpus, &m)?;
    let mut text = String::new();
    let mut total = 0.0;
    for (line, seq) in lines.iter().zip(&data) {
        let ll = log_likelihood(&m, seq)?;
        total += ll;
        let _ = writeln!(text, "{line}\t{ll}");
    }
    let _ = writeln!(text, "total\t{total}");
    emit(out, &text)?;
    Ok(0)
}

/// Key=value lines sufficient to repeat a training run.
fn manifest(args: &TrainArgs, threads: Option<usize>, trace: &Path, manifest: &Path, result: &Score, sequences: usize, wall_ms: u128) -> String {
    let mode = match args.mode {
        Mode::Sagem => "sagem",
        Mode::Naive => "naive",
        Mode::ParamsOnly => "params-only",
    };
    let fields: Vec<(&str, String)> = vec![
        ("command", "train".into()),
        ("version", env!("CARGO_PKG_VERSION").into()),
        ("corpus", args.corpus.display().to_string()),
        ("model", args.model.display().to_string()),
        ("mode", mode.into()),
        ("seed", args.seed.to_string()),
        ("l_max", args.l_max.to_string()),
        ("max_iterations", args.max_iterations.to_string()),
        ("restarts", args.restarts.to_string()),
        ("tolerance", args.tolerance.to_string()),
        ("beam_width", args.beam_width.to_string()),
        ("max_outer", args.max_outer.to_string()),
        ("threads", threads.map_or("default".into(), |t| t.to_string())),
        ("sequences", sequences.to_string()),
        ("loglik", result.loglik.to_string()),
        ("penalty", result.penalty.to_string()),
        ("total", result.total.to_string()),
        ("wall_ms", wall_ms.to_string()),
        ("out", args.out.display().to_string()),
        ("trace", trace.display().to_string()),
        ("manifest", manifest.display().to_string()),
    ];
    fields.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_train(args: &TrainArgs, threads: Option<usize>, out: &mut dyn Write) -> Result<u8, CliError> {
    let started = Instant::now();
    let parsed = parse_model(&read(&args.model)?)?;
    let m0 = if parsed.num_transitions() == 0 {
        initial_hypothesis(parsed.shared_signature())
    } else {
        let violations = parsed.validate();
        if !violations.is_empty() {
            return Err(ModelError::Validation(violations).into());
        }
        parsed
    };
    let (lines, data) = corpus_file(&args.corpus, &m0)?;
    for (line, seq) in lines.iter().zip(&data) {
        if log_likelihood(&m0, seq)? == f64::NEG_INFINITY {
            return Err(SemanticsError::Corpus { line: *line, message: "sequence has zero probability under the initial model".into() }.into());
        }
    }
    let optimizer = OptimizerConfig {
        max_iterations: args.max_iterations,
        restarts: args.restarts,
        tolerance: args.tolerance,
        seed: args.seed,
        ..OptimizerConfig::default()
    };
    let cfg = SearchConfig {
        beam_width: args.beam_width,
        l_max: args.l_max,
        optimizer,
        max_outer_iterations: args.max_outer,
        seed: args.seed,
    };
    if cfg.beam_width == 0 {
        return Err(CliError::Usage("--beam-width must be positive".into()));
    }
    let result = match args.mode {
        Mode::Sagem => sagem(&data, &m0, &cfg)?,
        Mode::Naive => naive_greedy(&data, &m0, &cfg)?,
        Mode::ParamsOnly => params_only(&data, &m0, &cfg, started)?,
    };
    let trace_path = args.trace.clone().unwrap_or_else(|| with_suffix(&args.out, ".trace"));
    let manifest_path = args.manifest.clone().unwrap_or_else(|| with_suffix(&args.out, ".manifest"));
    write(&args.out, &save_model(&result.model))?;
    let trace: String = result.trace.iter().map(|r| format!("{r}\n")).collect();
    write(&trace_path, &trace)?;
    let wall = started.elapsed().as_millis();
    write(&manifest_path, &manifest(args, threads, &trace_path, &manifest_path, &result.score, data.len(), wall))?;
    emit(
        out,
        &format!(
            "loglik={} penalty={} total={} transitions={}\n",
            result.score.loglik,
            result.score.penalty,
            result.score.total,
            result.model.num_transitions()
        ),
    )?;
    Ok(0)
}

fn params_only(data: &[Sequence], m0: &Lohmm, cfg: &SearchConfig, started: Instant) -> Result<SearchResult, CliError> {
    let r = gem_inner_loop(m0, &ParamVector::from_model(m0), data, cfg.l_max, &cfg.optimizer)?;
    let model = if cfg.l_max == 0 { m0.clone() } else { r.params.apply(m0) };
    let n = model.num_transitions();
    let trace = r
        .history
        .iter()
        .enumerate()
        .map(|(i, &ll)| {
            let s = Score::new(ll, n, data.len());
            TraceRecord {
                iteration: i,
                transitions: n,
                bodies: model.groups().len(),
                loglik: s.loglik,
                penalty: s.penalty,
                total: s.total,
                wall_ms: started.elapsed().as_millis(),
                neighbors_evaluated: 0,
                neighbors_discarded: 0,
            }
        })
        .collect();
    let score = Score::new(r.loglik, n, data.len());
    Ok(SearchResult { model, params: r.params, score, trace })
}

fn parse_pair<'a>(s: &'a str, flag: &str) -> Result<(&'a str, &'a str), CliError> {
    s.split_once('=')
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| CliError::Usage(format!("--{flag} expects class=value, got `{s}`")))
}

fn cmd_classify(models: &[String], priors: &[String], labels: Option<&Path>, corpus: &Path, out: &mut dyn Write) -> Result<u8, CliError> {
    let mut classes = Vec::new();
    for spec in models {
        let (name, path) = parse_pair(spec, "model")?;
        if classes.iter().any(|c: &ClassModel| c.name == name) {
            return Err(CliError::Usage(format!("class {name} given twice")));
        }
        classes.push(ClassModel { name: name.into(), model: model_file(Path::new(path))?, prior: 1.0 / models.len() as f64 });
    }
    if !priors.is_empty() {
        let mut given = BTreeMap::new();
        for spec in priors {
            let (name, p) = parse_pair(spec, "prior")?;
            let p: f64 = p.parse().map_err(|_| CliError::Usage(format!("bad prior `{spec}`")))?;
            given.insert(name.to_string(), p);
        }
        for c in &mut classes {
            c.prior = *given
                .get(&c.name)
                .ok_or_else(|| CliError::Usage(format!("no prior for class {}", c.name)))?;
        }
        if given.len() != classes.len() {
            return Err(CliError::Usage("prior given for an unknown class".into()));
        }
    }
    crate::semantics::check_priors(&classes)?;
    let text = read(corpus)?;
    let lines = parse_corpus_lines(&text)?;
    let truth: Option<Vec<String>> = match labels {
        Some(p) => {
            let l: Vec<String> = read(p)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
            if l.len() != lines.len() {
                return Err(CliError::Usage(format!("{} labels for {} sequences", l.len(), lines.len())));
            }
            Some(l)
        }
        None => None,
    };
    let mut report = String::new();
    let mut predicted = Vec::with_capacity(lines.len());
    for (line, seq) in &lines {
        let name = match classify(&classes, seq) {
            Ok(i) => classes[i].name.clone(),
            Err(SemanticsError::AllZeroLikelihood) => "REJECT".to_string(),
            Err(e) => return Err(e.into()),
        };
        let _ = writeln!(report, "{line}\t{name}");
        predicted.push(name);
    }
    let _ = writeln!(report, "# sequences={}", lines.len());
    for c in &classes {
        let n = predicted.iter().filter(|p| **p == c.name).count();
        let _ = write!(report, "# class={} predicted={n}", c.name);
        if let Some(truth) = &truth {
            let actual = truth.iter().filter(|t| **t == c.name).count();
            let hit = predicted.iter().zip(truth).filter(|(p, t)| **p == c.name && **t == c.name).count();
            let _ = write!(report, " actual={actual} precision={} recall={}", ratio(hit, n), ratio(hit, actual));
        }
        report.push('\n');
    }
    let rejected = predicted.iter().filter(|p| *p == "REJECT").count();
    let _ = writeln!(report, "# rejected={rejected}");
    if let Some(truth) = &truth {
        let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
        let _ = writeln!(report, "# accuracy={}", ratio(correct, truth.len()));
    }
    emit(out, &report)?;
    Ok(0)
}

fn ratio(a: usize, b: usize) -> String {
    if b == 0 {
        "nan".into()
    } else {
        format!("{:.4}", a as f64 / b as f64)
    }
}

fn cmd_neighbors(model: &Path, out: &mut dyn Write) -> Result<u8, CliError> {
    let m = model_file(model)?;
    let mut text = String::new();
    for (i, nb) in refine(&m).iter().enumerate() {
        let added: Vec<String> = nb
            .transitions()
            .iter()
            .filter(|t| !m.transitions().iter().any(|p| p.same_shape(t)))
            .map(clause_text)
            .collect();
        let _ = writeln!(text, "{i}\ttransitions={}\tbodies={}\t{}", nb.num_transitions(), nb.groups().len(), added.join(" ; "));
    }
    emit(out, &text)?;
    Ok(0)
}

fn cmd_ingest(log: &Path, max_args: usize, sig_out: &Path, path: Option<&Path>, out: &mut dyn Write) -> Result<u8, CliError> {
    let r = ingest_shell(&read(log)?, max_args);
    if r.empty_sessions > 0 {
        log::warn!("skipped {} empty sessions", r.empty_sessions);
    }
    let corpus: String = r.corpus.iter().map(|s| format!("{}\n", format_sequence(s))).collect();
    write(sig_out, &r.signature)?;
    match path {
        Some(p) => write(p, &corpus)?,
        None => emit(out, &corpus)?,
    }
    Ok(0)
}
