use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use greedy_dep::analysis::{aggregate, analyze_corpus, write_records};
use greedy_dep::config::ConfigFile;
use greedy_dep::decode::{evaluate, evaluate_model, parse_corpus};
use greedy_dep::dynamic_oracle::LossMode;
use greedy_dep::model::{load_embeddings, Hyper, Init, Model, Vocab};
use greedy_dep::training::{train_rl, train_supervised, RlConfig, Strategy, SupervisedConfig, Weighting};
use greedy_dep::treebank::{load_conll, read_conll, write_conll_to, Format, PunctConvention, Sentence};
use greedy_dep::SystemKind;

#[derive(Parser)]
#[command(name = "greedy-dep", version, about = "Greedy neural dependency parser")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, env = "GREEDYDEP_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, supervised or by policy gradient.
    Train(Box<TrainArgs>),
    /// Parse a treebank with a trained model.
    Parse(ParseArgs),
    /// Score system trees against gold trees.
    Eval(EvalArgs),
    /// Decision-error and error-propagation analysis.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat `key = value` file; flags and environment variables take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// sl, reinforce, rl-oracle, rl-random or rl-memory.
    #[arg(long, env = "GREEDYDEP_STRATEGY")]
    mode: Option<String>,
    #[arg(long, env = "GREEDYDEP_SYSTEM")]
    system: Option<SystemKind>,
    #[arg(long, env = "GREEDYDEP_TREEBANK")]
    treebank: Option<PathBuf>,
    /// Development set for model selection.
    #[arg(long, env = "GREEDYDEP_DEV")]
    dev: Option<PathBuf>,
    #[arg(long, env = "GREEDYDEP_OUT")]
    out: Option<PathBuf>,
    /// Supervised model to start policy-gradient training from.
    #[arg(long, env = "GREEDYDEP_PRETRAINED")]
    pretrained: Option<PathBuf>,
    /// Training log (TSV); defaults to the model path with `.log` appended.
    #[arg(long, env = "GREEDYDEP_LOG")]
    log: Option<PathBuf>,
    #[arg(long, env = "GREEDYDEP_K")]
    k: Option<usize>,
    #[arg(long, env = "GREEDYDEP_RHO")]
    rho: Option<f64>,
    /// Sentences per update (policy gradient) or oracle decisions per batch (supervised).
    #[arg(long, env = "GREEDYDEP_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long, env = "GREEDYDEP_UPDATES")]
    updates: Option<usize>,
    #[arg(long, env = "GREEDYDEP_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "GREEDYDEP_LEARNING_RATE")]
    learning_rate: Option<f64>,
    #[arg(long, env = "GREEDYDEP_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "GREEDYDEP_PUNCT_CONVENTION")]
    punct: Option<PunctConvention>,
    /// normalized or raw trajectory weights.
    #[arg(long, env = "GREEDYDEP_WEIGHTING")]
    weighting: Option<String>,
    #[arg(long, env = "GREEDYDEP_EVAL_EVERY")]
    eval_every: Option<usize>,
    #[arg(long, env = "GREEDYDEP_DIM")]
    dim: Option<usize>,
    #[arg(long, env = "GREEDYDEP_HIDDEN")]
    hidden: Option<usize>,
    #[arg(long, env = "GREEDYDEP_DROPOUT")]
    dropout: Option<f64>,
    #[arg(long, env = "GREEDYDEP_MIN_COUNT")]
    min_count: Option<usize>,
    /// Text file of pretrained word vectors.
    #[arg(long, env = "GREEDYDEP_EMBEDDINGS")]
    embeddings: Option<PathBuf>,
    /// conllx or conllu; guessed from the extension otherwise.
    #[arg(long, env = "GREEDYDEP_FORMAT")]
    format: Option<Format>,
}

const TRAIN_KEYS: &[&str] = &[
    "strategy",
    "system",
    "treebank",
    "dev",
    "out",
    "pretrained",
    "log",
    "k",
    "rho",
    "batch_size",
    "updates",
    "epochs",
    "learning_rate",
    "seed",
    "punct_convention",
    "weighting",
    "eval_every",
    "dim",
    "hidden",
    "dropout",
    "min_count",
    "embeddings",
    "format",
];

#[derive(Args)]
struct ParseArgs {
    #[arg(long, env = "GREEDYDEP_MODEL")]
    model: PathBuf,
    /// Input treebank; `-` reads standard input.
    #[arg(long, env = "GREEDYDEP_INPUT")]
    input: PathBuf,
    /// Output file; standard output by default.
    #[arg(long, env = "GREEDYDEP_OUTPUT")]
    output: Option<PathBuf>,
    /// Refuse models trained for a different system.
    #[arg(long, env = "GREEDYDEP_SYSTEM")]
    system: Option<SystemKind>,
    #[arg(long, env = "GREEDYDEP_FORMAT")]
    format: Option<Format>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, env = "GREEDYDEP_GOLD")]
    gold: PathBuf,
    /// System output aligned with the gold file.
    #[arg(long, env = "GREEDYDEP_PRED")]
    pred: PathBuf,
    #[arg(long, env = "GREEDYDEP_PUNCT_CONVENTION", default_value = "ptb")]
    punct: PunctConvention,
    /// Also write per-sentence scores as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
    #[arg(long, env = "GREEDYDEP_FORMAT")]
    format: Option<Format>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, env = "GREEDYDEP_MODEL")]
    model: PathBuf,
    #[arg(long, env = "GREEDYDEP_TREEBANK")]
    treebank: PathBuf,
    /// Per-sentence records go here instead of standard output.
    #[arg(long)]
    tsv: Option<PathBuf>,
    /// Report corrections that removed more than one decision error.
    #[arg(long)]
    alternative: bool,
    /// Count unlabeled instead of labeled arc errors.
    #[arg(long)]
    unlabeled: bool,
    /// Give up on a sentence after this many corrections (default 2·length).
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, env = "GREEDYDEP_FORMAT")]
    format: Option<Format>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("cannot set up worker threads")?;
    }
    match cli.command {
        Command::Train(a) => cmd_train(*a),
        Command::Parse(a) => cmd_parse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Analyze(a) => cmd_analyze(a),
    }
}

fn read_treebank(path: &Path, format: Option<Format>) -> Result<Vec<Sentence>> {
    let format = format.unwrap_or_else(|| Format::from_path(path));
    if path == Path::new("-") {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text)?;
        return Ok(read_conll(text.as_bytes(), format)?);
    }
    load_conll(path, format).with_context(|| format!("reading {}", path.display()))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p, TRAIN_KEYS).with_context(|| format!("config {}", p.display()))?,
        None => ConfigFile::default(),
    };
    let path = |flag: Option<PathBuf>, key: &str| flag.or_else(|| file.get(key).map(PathBuf::from));
    let mode = file.resolve(a.mode, "strategy", "sl".to_owned())?;
    let treebank = path(a.treebank, "treebank").context("--treebank is required")?;
    let out = path(a.out, "out").context("--out is required")?;
    let dev_path = path(a.dev, "dev");
    let format = a.format.or(file.get_parsed("format")?);
    let punct = file.resolve(a.punct, "punct_convention", PunctConvention::Ptb)?;
    let seed = file.resolve(a.seed, "seed", 1)?;
    let batch_size = file.resolve(a.batch_size, "batch_size", 512)?;
    let learning_rate: Option<f64> = a.learning_rate.or(file.get_parsed("learning_rate")?);
    let system_flag: Option<SystemKind> = a.system.or(file.get_parsed("system")?);

    let train = read_treebank(&treebank, format)?;
    let dev = match &dev_path {
        Some(p) => read_treebank(p, format)?,
        None => Vec::new(),
    };
    let log_path = path(a.log, "log").unwrap_or_else(|| {
        let mut p = out.clone().into_os_string();
        p.push(".log");
        p.into()
    });

    let model = if mode == "sl" {
        let system = system_flag.unwrap_or(SystemKind::ArcStandard);
        let hyper = Hyper {
            dim: file.resolve(a.dim, "dim", 50)?,
            hidden: file.resolve(a.hidden, "hidden", 200)?,
            learning_rate: learning_rate.unwrap_or(0.01),
            ..Hyper::default()
        };
        let vocab = Vocab::build(&train, file.resolve(a.min_count, "min_count", 1)?);
        let mut model = Model::new(
            system,
            vocab,
            hyper,
            Init {
                seed,
                ..Init::default()
            },
        );
        if let Some(p) = path(a.embeddings, "embeddings") {
            let vectors = load_embeddings(&p).with_context(|| format!("embeddings {}", p.display()))?;
            let n = model.load_pretrained(&vectors)?;
            log::info!("initialized {n} word vectors from {}", p.display());
        }
        let cfg = SupervisedConfig {
            epochs: file.resolve(a.epochs, "epochs", 20)?,
            batch_size,
            dropout: file.resolve(a.dropout, "dropout", 0.5)?,
            seed,
            punct,
        };
        let losses = train_supervised(&mut model, &train, &cfg)?;
        let mut log = BufWriter::new(File::create(&log_path)?);
        writeln!(log, "epoch\tloss\tdev_uas\tdev_las")?;
        let last = losses.len();
        for (i, l) in losses.iter().enumerate() {
            let dev_cols = if i + 1 == last && !dev.is_empty() {
                let r = evaluate_model(&model, &dev, punct)?;
                eprintln!("dev UAS {:.2} LAS {:.2}", r.uas, r.las);
                format!("{:.2}\t{:.2}", r.uas, r.las)
            } else {
                "\t".to_owned()
            };
            writeln!(log, "{}\t{l:.6}\t{dev_cols}", i + 1)?;
        }
        model
    } else {
        let strategy: Strategy = mode.parse()?;
        let pretrained =
            path(a.pretrained, "pretrained").context("--pretrained is required for policy-gradient training")?;
        let mut model =
            Model::load(&pretrained, system_flag).with_context(|| format!("loading {}", pretrained.display()))?;
        if let Some(lr) = learning_rate {
            model.hyper.learning_rate = lr;
        }
        let weighting: Weighting = file
            .resolve(a.weighting, "weighting", "normalized".to_owned())?
            .parse()?;
        let cfg = RlConfig {
            strategy,
            k: file.resolve(a.k, "k", 8)?,
            rho: file.resolve(a.rho, "rho", 0.01)?,
            batch_size,
            updates: file.resolve(a.updates, "updates", 1000)?,
            seed,
            weighting,
            eval_every: file.resolve(a.eval_every, "eval_every", 50)?,
            punct,
        };
        cfg.validate()?;
        let mut log = BufWriter::new(File::create(&log_path)?);
        let outcome = train_rl(model, &train, &dev, &cfg, Some(&mut log))?;
        log.flush()?;
        if let Some(las) = outcome.best_dev_las {
            eprintln!("best dev LAS {las:.2} at update {}", outcome.best_update);
        }
        outcome.model
    };
    model.save(&out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("model written to {}", out.display());
    Ok(())
}

fn cmd_parse(a: ParseArgs) -> Result<()> {
    let model = Model::load(&a.model, a.system).with_context(|| format!("loading {}", a.model.display()))?;
    let sentences = read_treebank(&a.input, a.format)?;
    let trees = parse_corpus(&model, &sentences)?;
    let format = a.format.unwrap_or_else(|| match &a.output {
        Some(p) => Format::from_path(p),
        None => Format::from_path(&a.input),
    });
    match &a.output {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            write_conll_to(&mut w, &sentences, &trees, format)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_conll_to(&mut w, &sentences, &trees, format)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let gold = read_treebank(&a.gold, a.format)?;
    let pred = read_treebank(&a.pred, a.format)?;
    for (g, p) in gold.iter().zip(&pred) {
        if g.tokens.iter().map(|t| &t.form).ne(p.tokens.iter().map(|t| &t.form)) {
            bail!("sentence {} differs between gold and system files", g.id);
        }
    }
    let trees: Vec<_> = pred.iter().map(Sentence::gold_tree).collect();
    let report = evaluate(&gold, &trees, a.punct)?;
    println!("{report}");
    if let Some(p) = &a.tsv {
        report.write_tsv(BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let model = Model::load(&a.model, None).with_context(|| format!("loading {}", a.model.display()))?;
    if model.system != SystemKind::ArcStandard {
        bail!(
            "error analysis needs an arc-standard model, {} was trained for {}",
            a.model.display(),
            model.system
        );
    }
    let sentences = read_treebank(&a.treebank, a.format)?;
    let mode = if a.unlabeled {
        LossMode::Unlabeled
    } else {
        LossMode::Labeled
    };
    let (records, skipped) = analyze_corpus(&model, &sentences, a.max_depth, mode)?;
    if skipped > 0 {
        log::warn!("skipped {skipped} non-projective sentences");
    }
    let report = aggregate(&records);
    if report.flagged > 0 {
        log::warn!(
            "{} sentences did not reach gold within the correction limit",
            report.flagged
        );
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &a.tsv {
        Some(p) => write_records(BufWriter::new(File::create(p)?), &records)?,
        None => {
            write_records(&mut out, &records)?;
            writeln!(out)?;
        }
    }
    report.write_summary(&mut out, a.alternative)?;
    Ok(())
}
