//! Command-line entry points and the HTTP suggestion service.

pub mod service;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gwlan_core::benchmark::{build_dataset, load_jsonl, save_jsonl, ContextType, GwlanExample, Romanizer, SamplerConfig};
use gwlan_core::bundle::ModelBundle;
use gwlan_core::completer::ModelSet;
use gwlan_core::corpus::{load_parallel, Sentence};
use gwlan_core::evaluator::{evaluate, robustness_curve, EvalReport, Predictor, TableBaseline};
use gwlan_core::synthetic::{self, SyntheticConfig};
use gwlan_core::trainer::{train_joint, train_separate, Split, Strategy, TaskVocab, TrainConfig};
use gwlan_core::transtable::{build_table, train_alignment, FreqMode, TranslationTable};

#[derive(Debug, Parser)]
#[command(name = "gwlan", version, about = "Word-level autocompletion for computer-aided translation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut autocompletion examples from a parallel corpus.
    BuildBenchmark(BuildBenchmark),
    /// Train word prediction models and write a model bundle.
    Train(Train),
    /// Score a model bundle (or an alignment table) on a dataset.
    Eval(Eval),
    /// Score a model bundle on increasingly noisy contexts.
    Robustness(Robustness),
    /// Train a word alignment model and write a translation table.
    Align(Align),
    /// Suggest words for one input.
    Complete(Complete),
    /// Run the HTTP suggestion service.
    Serve(Serve),
    /// Write a generated dictionary-translation corpus.
    GenSynthetic(GenSynthetic),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CtypeArg {
    All,
    Zero,
    Prefix,
    Suffix,
    Bi,
}

impl CtypeArg {
    fn types(self) -> Vec<ContextType> {
        match self {
            CtypeArg::All => ContextType::ALL.to_vec(),
            CtypeArg::Zero => vec![ContextType::Zero],
            CtypeArg::Prefix => vec![ContextType::Prefix],
            CtypeArg::Suffix => vec![ContextType::Suffix],
            CtypeArg::Bi => vec![ContextType::Bi],
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildBenchmark {
    /// Source side, one sentence per line.
    #[arg(long)]
    pub src: PathBuf,
    /// Target side, line-aligned with the source.
    #[arg(long)]
    pub tgt: PathBuf,
    /// Receives one `<ctype>.jsonl` per context type.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = CtypeArg::All)]
    pub ctype: CtypeArg,
    /// Tab-separated `word<TAB>typing form` table for logographic targets.
    #[arg(long)]
    pub romanizer: Option<PathBuf>,
    #[arg(long)]
    pub max_context_len: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Sep,
    Joint,
}

#[derive(Debug, Args)]
pub struct Train {
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// TOML training configuration; unset fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory with `<ctype>.jsonl` training sets.
    #[arg(long)]
    pub train_dir: PathBuf,
    /// Directory with `<ctype>.jsonl` validation sets.
    #[arg(long)]
    pub valid_dir: PathBuf,
    /// Output model bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub romanizer: Option<PathBuf>,
    #[arg(long)]
    pub case_fold: bool,
    /// Largest vocabulary size, specials included.
    #[arg(long, default_value_t = 50_000)]
    pub max_vocab: usize,
    /// Training log (JSON Lines).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Eval {
    /// Model bundle directory.
    #[arg(long, required_unless_present = "table")]
    pub checkpoint: Option<PathBuf>,
    /// Score the alignment-table baseline instead of a model.
    #[arg(long, conflicts_with = "checkpoint")]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub romanizer: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Vec<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Robustness {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: Vec<PathBuf>,
    /// Translation table supplying noise words.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FreqArg {
    Links,
    Unigram,
}

#[derive(Debug, Args)]
pub struct Align {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub em_iters: usize,
    /// Links below this probability are not counted.
    #[arg(long, default_value_t = 0.01)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = FreqArg::Links)]
    pub freq_mode: FreqArg,
}

#[derive(Debug, Args)]
pub struct Complete {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub src: String,
    #[arg(long, default_value = "")]
    pub cl: String,
    #[arg(long, default_value = "")]
    pub cr: String,
    #[arg(long)]
    pub typed: String,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct Serve {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug, Args)]
pub struct GenSynthetic {
    /// Receives `{train,valid,test}.{src,tgt}`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub valid: usize,
    #[arg(long, default_value_t = 200)]
    pub test: usize,
    /// One-to-one dictionary without homographs.
    #[arg(long)]
    pub bijective: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildBenchmark(a) => build_benchmark(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Robustness(a) => robustness(a),
        Command::Align(a) => align(a),
        Command::Complete(a) => complete(a),
        Command::Serve(a) => serve(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
    }
}

fn load_romanizer(path: Option<&Path>) -> Result<Romanizer> {
    match path {
        None => Ok(Romanizer::Identity),
        Some(p) => Romanizer::load_table(p).with_context(|| format!("loading romanizer {}", p.display())),
    }
}

fn build_benchmark(a: BuildBenchmark) -> Result<()> {
    let corpus = load_parallel(&a.src, &a.tgt).context("loading corpus")?;
    let rom = load_romanizer(a.romanizer.as_deref())?;
    let mut cfg = SamplerConfig::for_romanizer(a.seed, &rom);
    if let Some(m) = a.max_context_len {
        if m == 0 {
            bail!("--max-context-len must be positive");
        }
        cfg.max_context_len = m;
    }
    fs::create_dir_all(&a.out_dir)?;
    for t in a.ctype.types() {
        let examples = build_dataset(&corpus, t, &cfg, &rom);
        let path = a.out_dir.join(format!("{t}.jsonl"));
        save_jsonl(&examples, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("{t}\t{}\t{}", examples.len(), path.display());
    }
    Ok(())
}

fn read_split_dir(dir: &Path) -> Result<BTreeMap<ContextType, Vec<GwlanExample>>> {
    let mut out = BTreeMap::new();
    for t in ContextType::ALL {
        let path = dir.join(format!("{t}.jsonl"));
        let ex = load_jsonl(&path).with_context(|| format!("reading {}", path.display()))?;
        out.insert(t, ex);
    }
    Ok(out)
}

pub fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn train(a: Train) -> Result<()> {
    let mut cfg = load_train_config(a.config.as_deref())?;
    match a.strategy {
        Some(StrategyArg::Sep) => cfg.strategy = Strategy::Separate,
        Some(StrategyArg::Joint) => cfg.strategy = Strategy::Joint,
        None => {}
    }
    let rom = load_romanizer(a.romanizer.as_deref())?;
    let mut train_sets = read_split_dir(&a.train_dir)?;
    let mut valid_sets = read_split_dir(&a.valid_dir)?;
    let vocab = TaskVocab::from_examples(train_sets.values().flatten(), &rom, a.case_fold, a.max_vocab);
    let splits: BTreeMap<ContextType, Split> = ContextType::ALL
        .into_iter()
        .map(|t| {
            let s = Split {
                train: train_sets.remove(&t).unwrap_or_default(),
                valid: valid_sets.remove(&t).unwrap_or_default(),
            };
            (t, s)
        })
        .collect();
    let (models, reports) = match cfg.strategy {
        Strategy::Joint => {
            let (m, r) = train_joint(&splits, &vocab, &cfg)?;
            (ModelSet::Joint(m), BTreeMap::from([("joint".to_owned(), r)]))
        }
        Strategy::Separate => {
            let (m, r) = train_separate(&splits, &vocab, &cfg)?;
            (ModelSet::Separate(m), r.into_iter().map(|(t, r)| (t.to_string(), r)).collect())
        }
    };
    let bundle = ModelBundle::new(models, vocab.src, vocab.tgt, rom, a.case_fold);
    bundle.save(&a.out).with_context(|| format!("writing bundle {}", a.out.display()))?;
    if let Some(log_path) = &a.log {
        let mut w = std::io::BufWriter::new(fs::File::create(log_path)?);
        for r in reports.values() {
            r.write_log(&mut w)?;
        }
        w.flush()?;
    }
    for (name, r) in &reports {
        let best: Vec<String> = r.best_accuracy.iter().map(|(t, a)| format!("{t}={a:.4}")).collect();
        println!("{name}\tstep {}\t{}", r.best_step, best.join(" "));
    }
    Ok(())
}

fn read_datasets(paths: &[PathBuf]) -> Result<Vec<GwlanExample>> {
    if paths.is_empty() {
        bail!("at least one --dataset is required");
    }
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_jsonl(p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(out)
}

fn write_report(text: &str, path: Option<&Path>) -> Result<()> {
    println!("{text}");
    if let Some(p) = path {
        fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn load_bundle(path: &Path) -> Result<ModelBundle> {
    ModelBundle::load(path).with_context(|| format!("loading model bundle {}", path.display()))
}

fn eval(a: Eval) -> Result<()> {
    let data = read_datasets(&a.dataset)?;
    let report: EvalReport = match (&a.checkpoint, &a.table) {
        (Some(dir), _) => evaluate(&load_bundle(dir)?.completer, &data)?,
        (None, Some(t)) => {
            let table = TranslationTable::load(t)?;
            let rom = load_romanizer(a.romanizer.as_deref())?;
            let baseline = TableBaseline {
                table: &table,
                romanizer: &rom,
            };
            evaluate(&baseline as &dyn Predictor, &data)?
        }
        (None, None) => bail!("either --checkpoint or --table is required"),
    };
    write_report(&report.to_json(), a.report.as_deref())
}

fn robustness(a: Robustness) -> Result<()> {
    let data = read_datasets(&a.dataset)?;
    let bundle = load_bundle(&a.checkpoint)?;
    let table = TranslationTable::load(&a.table)?;
    let curve = robustness_curve(&bundle.completer, &data, &a.ratios, &table, &bundle.completer.tgt_vocab, a.seed)?;
    let text = serde_json::to_string_pretty(&curve)?;
    write_report(&text, a.report.as_deref())
}

fn align(a: Align) -> Result<()> {
    let corpus = load_parallel(&a.src, &a.tgt).context("loading corpus")?;
    let model = train_alignment(&corpus, a.em_iters)?;
    let mode = match a.freq_mode {
        FreqArg::Links => FreqMode::Links,
        FreqArg::Unigram => FreqMode::Unigram,
    };
    let table = build_table(&corpus, &model, a.threshold, mode)?;
    table.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{} source words\t{}", table.len(), a.out.display());
    Ok(())
}

fn complete(a: Complete) -> Result<()> {
    let bundle = load_bundle(&a.checkpoint)?;
    let req = service::CompletionRequest {
        source: a.src,
        left_context: a.cl,
        right_context: a.cr,
        typed: a.typed,
        top_k: a.top_k,
    };
    let suggestions = service::answer(&bundle.completer, &req).map_err(|(_, m)| anyhow::anyhow!(m))?;
    let mut out = std::io::stdout().lock();
    for s in suggestions {
        writeln!(out, "{}\t{:.6}", s.word, s.score)?;
    }
    Ok(())
}

fn serve(a: Serve) -> Result<()> {
    let bundle = load_bundle(&a.checkpoint)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("invalid --host/--port")?;
    let state = Arc::new(service::AppState::new(bundle.completer));
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        log::info!("listening on http://{}", listener.local_addr()?);
        #[cfg(unix)]
        {
            let state = state.clone();
            let dir = a.checkpoint.clone();
            tokio::spawn(reload_on_hangup(state, dir));
        }
        axum::serve(listener, service::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

/// Reloads the bundle on SIGHUP; a failed load keeps the current model.
#[cfg(unix)]
async fn reload_on_hangup(state: Arc<service::AppState>, dir: PathBuf) {
    use tokio::signal::unix::{signal, SignalKind};
    let Ok(mut hup) = signal(SignalKind::hangup()) else {
        return;
    };
    while hup.recv().await.is_some() {
        let dir = dir.clone();
        match tokio::task::spawn_blocking(move || ModelBundle::load(&dir)).await {
            Ok(Ok(b)) => {
                state.swap(b.completer);
                log::info!("model reloaded");
            }
            Ok(Err(e)) => log::error!("reload failed: {e}"),
            Err(e) => log::error!("reload failed: {e}"),
        }
    }
}

fn gen_synthetic(a: GenSynthetic) -> Result<()> {
    if a.valid + a.test > a.pairs {
        bail!("--valid plus --test exceeds --pairs");
    }
    let cfg = if a.bijective {
        SyntheticConfig::bijective(a.pairs, a.seed)
    } else {
        SyntheticConfig {
            pairs: a.pairs,
            seed: a.seed,
            ..SyntheticConfig::default()
        }
    };
    let corpus = synthetic::generate(&cfg);
    let (train, valid, test) = synthetic::split(&corpus, a.valid, a.test);
    fs::create_dir_all(&a.out_dir)?;
    for (name, part) in [("train", train), ("valid", valid), ("test", test)] {
        part.write(&a.out_dir.join(format!("{name}.src")), &a.out_dir.join(format!("{name}.tgt")))?;
        println!("{name}\t{}", part.len());
    }
    Ok(())
}

/// Splits a context string the way the service does.
pub fn tokenize(text: &str) -> Sentence {
    Sentence::parse(text)
}
