use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use cok::config::{BackendSpec, EncoderSpec, RunConfig};
use cok::encoders::open_encoder;
use cok::error::{exit, Error, Result};
use cok::exemplars::{load_exemplars, save_exemplars};
use cok::kb_io::{load_kb_any, load_model, save_kb, save_model};
use cok::llm::open_backend;
use cok::report::{emit_report, write_trace};
use cok::run::execute;
use cok_core::embed::{train, TrainConfig};
use cok_core::prompt::{assist_exemplar_construction, perturb_exemplars, PromptVariant};
use cok_core::verify::{FaithfulnessMetric, ScoreMode, Verifier, VerifyConfig};
use cok_core::TaskType;

#[derive(Parser)]
#[command(name = "cok", version, about = "Chain-of-knowledge prompting with verification and rethinking")]
struct Cli {
    /// Seed for every random choice (training, perturbation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge-base maintenance.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Run a dataset and write a report.
    Run(Box<RunArgs>),
    /// Score one completion against a KB.
    Verify(VerifyArgs),
    /// Exemplar authoring.
    Exemplar {
        #[command(subcommand)]
        command: ExemplarCommand,
    },
    /// Replace a share of exemplar triples with random KB triples.
    Perturb(PerturbArgs),
}

#[derive(Args)]
struct KbArgs {
    /// KB TSV files or KB manifests (.toml).
    #[arg(required = true)]
    kb: Vec<PathBuf>,
    /// Relation alias TSV (`alias<TAB>canonical`).
    #[arg(long)]
    aliases: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KbCommand {
    /// Validate and merge KB files; print statistics.
    Build {
        #[command(flatten)]
        kb: KbArgs,
        /// Write the merged KB as TSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an embedding model and write a checkpoint.
    Train {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        negatives_per_positive: Option<usize>,
        #[arg(long)]
        clusters_per_relation: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Http,
    Script,
    Replay,
    Record,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Endpoint TOML for the http and record backends.
    #[arg(long)]
    llm_config: Option<PathBuf>,
    /// Script (script), log to read (replay) or log to append to (record).
    #[arg(long)]
    llm_log: Option<PathBuf>,
}

impl BackendArgs {
    fn spec(&self) -> Result<Option<BackendSpec>> {
        let need = |p: &Option<PathBuf>, flag: &str| {
            p.clone()
                .ok_or_else(|| Error::Invalid(format!("this backend needs --{flag}")))
        };
        Ok(match self.backend {
            None => None,
            Some(BackendKind::Http) => Some(BackendSpec::Http {
                config: need(&self.llm_config, "llm-config")?,
            }),
            Some(BackendKind::Script) => Some(BackendSpec::Script {
                path: need(&self.llm_log, "llm-log")?,
            }),
            Some(BackendKind::Replay) => Some(BackendSpec::Replay {
                path: need(&self.llm_log, "llm-log")?,
            }),
            Some(BackendKind::Record) => Some(BackendSpec::Record {
                config: need(&self.llm_config, "llm-config")?,
                path: need(&self.llm_log, "llm-log")?,
            }),
        })
    }
}

#[derive(Args)]
struct EncoderArgs {
    /// Precomputed vector file.
    #[arg(long, conflicts_with = "encoder_url")]
    encoder_vectors: Option<PathBuf>,
    /// Embedding service URL.
    #[arg(long, requires = "encoder_dim")]
    encoder_url: Option<String>,
    #[arg(long)]
    encoder_dim: Option<usize>,
}

impl EncoderArgs {
    fn spec(&self) -> Option<EncoderSpec> {
        if let Some(path) = &self.encoder_vectors {
            return Some(EncoderSpec::Precomputed { path: path.clone() });
        }
        self.encoder_url.as_ref().map(|url| EncoderSpec::Http {
            url: url.clone(),
            dim: self.encoder_dim.unwrap_or_default(),
            timeout_s: 30,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    FullCok,
    WithoutEvidenceTriples,
    WithoutExplanationHints,
}

impl From<Variant> for PromptVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::FullCok => PromptVariant::FullCok,
            Variant::WithoutEvidenceTriples => PromptVariant::WithoutEvidenceTriples,
            Variant::WithoutExplanationHints => PromptVariant::WithoutExplanationHints,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Both,
    FactualityOnly,
    FaithfulnessOnly,
}

impl From<Mode> for ScoreMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Both => ScoreMode::Both,
            Mode::FactualityOnly => ScoreMode::FactualityOnly,
            Mode::FaithfulnessOnly => ScoreMode::FaithfulnessOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Faithfulness {
    Encoder,
    KnowledgeF1,
}

impl From<Faithfulness> for FaithfulnessMetric {
    fn from(f: Faithfulness) -> Self {
        match f {
            Faithfulness::Encoder => FaithfulnessMetric::Encoder,
            Faithfulness::KnowledgeF1 => FaithfulnessMetric::KnowledgeF1,
        }
    }
}

#[derive(Args)]
struct ScoringArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    link_threshold: Option<f64>,
    #[arg(long, value_enum)]
    score_mode: Option<Mode>,
    #[arg(long, value_enum)]
    faithfulness: Option<Faithfulness>,
}

impl ScoringArgs {
    fn apply(&self, v: &mut VerifyConfig) {
        if let Some(g) = self.gamma {
            v.gamma = g;
        }
        if let Some(t) = self.link_threshold {
            v.link_threshold = t;
        }
        if let Some(m) = self.score_mode {
            v.mode = m.into();
        }
        if let Some(f) = self.faithfulness {
            v.faithfulness = f.into();
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Run manifest (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    exemplars: Vec<PathBuf>,
    /// Shipped exemplar set (letters, coin, sports, arc_c, aqua, boolq, csqa,
    /// svamp, openbookqa, strategyqa, gsm8k, multiarith).
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    kb: Vec<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Embedding checkpoint for implicit verification.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    corrections_per_triple: Option<usize>,
    #[arg(long)]
    max_injected: Option<usize>,
    /// Sample this many paths per iteration and vote.
    #[arg(long)]
    self_consistency: Option<u32>,
    #[arg(long)]
    sc_temperature: Option<f64>,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Model name sent to the backend.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Percentage of exemplar triples to replace before running.
    #[arg(long)]
    perturb_beta: Option<f64>,
    /// JSON report; a text table is written beside it.
    #[arg(long)]
    report: PathBuf,
    /// Per-iteration trace (JSONL).
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl RunArgs {
    fn manifest(&self, seed: Option<u64>) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.dataset {
            c.dataset = Some(d.clone());
        }
        if !self.exemplars.is_empty() {
            c.exemplars = self.exemplars.clone();
        }
        if let Some(t) = &self.task {
            c.task = Some(t.clone());
        }
        if !self.kb.is_empty() {
            c.kb = self.kb.clone();
        }
        if let Some(a) = &self.aliases {
            c.aliases = Some(a.clone());
        }
        if let Some(m) = &self.checkpoint {
            c.checkpoint = Some(m.clone());
        }
        if let Some(e) = self.encoder.spec() {
            c.encoder = e;
        }
        if let Some(b) = self.backend.spec()? {
            c.backend = Some(b);
        }
        if let Some(s) = seed {
            c.seed = s;
        }
        if let Some(p) = self.parallelism {
            c.parallelism = p;
        }
        if let Some(b) = self.perturb_beta {
            c.perturb_beta = Some(b);
        }
        self.scoring.apply(&mut c.verify);
        let r = &mut c.rethink;
        if let Some(n) = self.max_iterations {
            r.max_iterations = n;
        }
        if let Some(t) = self.threshold {
            r.threshold = t;
        }
        if let Some(k) = self.corrections_per_triple {
            r.corrections_per_triple = k;
        }
        if let Some(m) = self.max_injected {
            r.max_injected = m;
        }
        if let Some(n) = self.self_consistency {
            let sc = r.self_consistency.get_or_insert_with(Default::default);
            sc.samples = n;
        }
        if let Some(t) = self.sc_temperature {
            r.self_consistency.get_or_insert_with(Default::default).temperature = t;
        }
        if let Some(v) = self.variant {
            r.variant = v.into();
        }
        if let Some(t) = self.temperature {
            r.decoding.temperature = t;
        }
        if let Some(m) = self.max_tokens {
            r.decoding.max_tokens = m;
        }
        if let Some(m) = &self.model {
            r.model = m.clone();
        }
        Ok(c)
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long = "kb", required = true)]
    kb: Vec<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// File holding one model completion.
    #[arg(long)]
    response: PathBuf,
    /// multi_choice, yes_no, numeric or string_concat.
    #[arg(long)]
    task_type: TaskType,
    /// The question the completion answers (feeds faithfulness).
    #[arg(long, default_value = "")]
    question: String,
}

#[derive(Subcommand)]
enum ExemplarCommand {
    /// Generate a rationale for a question and retrieve candidate triples.
    Draft {
        #[arg(long)]
        question: String,
        #[arg(long = "kb", required = true)]
        kb: Vec<PathBuf>,
        #[arg(long)]
        aliases: Option<PathBuf>,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value = "")]
        model: String,
        /// Candidate triples to retrieve.
        #[arg(short, long, default_value_t = 5)]
        k: usize,
    },
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    exemplars: PathBuf,
    #[arg(long = "kb", required = true)]
    kb: Vec<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Percentage of triples to replace, 0–100.
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    out: PathBuf,
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).expect("serializable"));
    Ok(())
}

fn kb_stats(kb: &cok_core::KnowledgeBase) {
    println!("triples\t{}", kb.len());
    println!("entities\t{}", kb.entities().len());
    for (d, n) in kb.domain_counts() {
        println!("domain {}\t{n}", d.as_str());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Kb {
            command: KbCommand::Build { kb, out },
        } => {
            let base = load_kb_any(&kb.kb, kb.aliases.as_deref())?;
            kb_stats(&base);
            if let Some(out) = out {
                save_kb(&base, &out)?;
            }
        }
        Command::Kb {
            command:
                KbCommand::Train {
                    kb,
                    out,
                    dim,
                    margin,
                    learning_rate,
                    epochs,
                    negatives_per_positive,
                    clusters_per_relation,
                    alpha,
                },
        } => {
            let base = load_kb_any(&kb.kb, kb.aliases.as_deref())?;
            let d = TrainConfig::default();
            let cfg = TrainConfig {
                dim: dim.unwrap_or(d.dim),
                margin: margin.unwrap_or(d.margin),
                learning_rate: learning_rate.unwrap_or(d.learning_rate),
                epochs: epochs.unwrap_or(d.epochs),
                negatives_per_positive: negatives_per_positive.unwrap_or(d.negatives_per_positive),
                clusters_per_relation: clusters_per_relation.unwrap_or(d.clusters_per_relation),
                alpha: alpha.unwrap_or(d.alpha),
                seed: cli.seed.unwrap_or(d.seed),
            };
            let model = train(&base, &cfg)?;
            save_model(&model, &out)?;
            println!("trained {} triples for {} epochs -> {}", base.len(), cfg.epochs, out.display());
        }
        Command::Run(args) => {
            let manifest = args.manifest(cli.seed)?;
            let art = execute(&manifest)?;
            emit_report(&art.report, &args.report)?;
            if let Some(t) = &args.trace {
                write_trace(&art.results, t)?;
            }
            print!("{}", art.report.to_table());
        }
        Command::Verify(args) => {
            let kb = load_kb_any(&args.kb, args.aliases.as_deref())?;
            let model = args.checkpoint.as_deref().map(load_model).transpose()?;
            let encoder = open_encoder(&args.encoder.spec().unwrap_or_default())?;
            let mut vc = VerifyConfig::default();
            args.scoring.apply(&mut vc);
            let verifier = Verifier::new(&kb, model.as_ref(), &encoder, vc)?;
            let bytes = std::fs::read(&args.response).map_err(|e| Error::io(&args.response, e))?;
            let chain = cok_core::parse::parse_response_bytes(&bytes, args.task_type);
            let report = verifier.score(&args.question, &chain);
            print_json(&serde_json::json!({ "chain": chain, "report": report }))?;
        }
        Command::Exemplar {
            command:
                ExemplarCommand::Draft {
                    question,
                    kb,
                    aliases,
                    encoder,
                    backend,
                    model,
                    k,
                },
        } => {
            let base = load_kb_any(&kb, aliases.as_deref())?;
            let enc = open_encoder(&encoder.spec().unwrap_or_default())?;
            let spec = backend
                .spec()?
                .ok_or_else(|| Error::Invalid("exemplar draft needs --backend".into()))?;
            let llm = open_backend(&spec)?;
            let draft = assist_exemplar_construction(&question, &llm, &model, &base, &enc, k)?;
            print_json(&draft)?;
        }
        Command::Perturb(args) => {
            let kb = load_kb_any(&args.kb, args.aliases.as_deref())?;
            let ex = load_exemplars(&args.exemplars)?;
            let p = perturb_exemplars(&ex, args.beta, &kb, cli.seed.unwrap_or(0))?;
            save_exemplars(&args.out, &p.exemplars)?;
            println!("replaced {} triples", p.replaced.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::from(exit::OK as u8),
                _ => ExitCode::from(exit::USAGE as u8),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
