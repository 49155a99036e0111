//! Command-line front end.
//!
//! Each command resolves a [`RunConfig`] from an optional TOML file plus flag
//! overrides, writes it as `config.toml` next to its outputs, and reports
//! failures as a single `error kind=<kind> msg=<message>` line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{RunConfig, CONFIG_FILE};
use crate::data::{
    binarize, csv_err, leave_one_out_split, load_ratings, mix_mar, read_split, write_split, IdMap,
    ImplicitDataset, InputFormat, Manifest, SplitDataset, IDMAP_FILE,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_held_out, EvalConfig, EvalReport, HeldOut, Protocol};
use crate::exposure::{exposure_distribution, popularity, GammaMode};
use crate::loopsim::{run_simulation, summarize, write_curve, LoopState, SimConfig};
use crate::model::{Hyperparams, LossKind, MFParams};
use crate::sampler::NegStrategy;
use crate::train::{fit, Checkpoint};

pub const OUT_ENV: &str = "DEBIASRANK_OUT";
const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "debiasrank", version, about = "Exposure-debiased ranking for implicit feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load raw ratings, binarize and write a leave-one-out split.
    Ingest(IngestArgs),
    /// Train a model on an ingested split.
    Train(TrainArgs),
    /// Score a checkpoint on the test or validation items.
    Evaluate(EvaluateArgs),
    /// Run the closed feedback-loop simulation for one or more losses.
    Simulate(SimulateArgs),
    /// Item popularity table and exposure shares of a split's training data.
    AnalyzeExposure(AnalyzeArgs),
    /// Add a fraction of MAR positives to a split's training data.
    Mix(MixArgs),
    /// Train and evaluate over a grid of alpha and/or beta values.
    Sweep(SweepArgs),
    /// Write a checkpoint's factor matrices as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output root (default: $DEBIASRANK_OUT, then ./runs).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Loss; `simulate` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub loss: Vec<LossKind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Use DPR without the UFN weighting.
    #[arg(long)]
    pub no_ufn: bool,
    #[arg(long)]
    pub gamma_mode: Option<GammaMode>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Negatives per positive.
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub neg_strategy: Option<NegStrategy>,
    /// Keep one fixed set of negatives for all epochs.
    #[arg(long)]
    pub no_resample: bool,
    #[arg(long)]
    pub patience: Option<usize>,
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let hp = &mut cfg.model;
        if let [loss] = self.loss.as_slice() {
            hp.loss = *loss;
        }
        if self.no_ufn {
            hp.loss = ufn_off(hp.loss)?;
        }
        set(&mut hp.alpha, self.alpha);
        set(&mut hp.beta, self.beta);
        set(&mut hp.gamma_mode, self.gamma_mode);
        set(&mut hp.dim, self.dim);
        set(&mut hp.lr, self.lr);
        set(&mut hp.l2, self.l2);
        set(&mut hp.batch_size, self.batch_size);
        set(&mut hp.epochs, self.epochs);
        set(&mut hp.seed, self.seed);
        set(&mut hp.num_negatives, self.negatives);
        set(&mut cfg.sampler.strategy, self.neg_strategy);
        if self.no_resample {
            cfg.sampler.resample_each_epoch = false;
        }
        set(&mut cfg.patience, self.patience);
        Ok(())
    }

    fn single_loss(&self) -> Result<()> {
        if self.loss.len() > 1 {
            return Err(Error::invalid("this command takes a single --loss"));
        }
        Ok(())
    }
}

fn ufn_off(loss: LossKind) -> Result<LossKind> {
    match loss {
        LossKind::Dpr | LossKind::DprMinus => Ok(LossKind::DprMinus),
        other => Err(Error::invalid(format!("--no-ufn applies to dpr, not {other}"))),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub format: Option<InputFormat>,
    #[arg(long)]
    pub user_col: Option<usize>,
    #[arg(long)]
    pub item_col: Option<usize>,
    #[arg(long)]
    pub value_col: Option<usize>,
    #[arg(long)]
    pub skip_header: bool,
    /// Ratings at or above this value are positives.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl InputArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.data;
        set(&mut d.format, self.format);
        set(&mut d.columns.user, self.user_col);
        set(&mut d.columns.item, self.item_col);
        set(&mut d.columns.value, self.value_col);
        d.skip_header |= self.skip_header;
        set(&mut d.threshold, self.threshold);
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub input_opts: InputArgs,
    /// Raw ratings file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Split seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reuse an existing id map; records with unknown ids are dropped.
    #[arg(long)]
    pub idmap: Option<PathBuf>,
    /// Split directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Ingested split directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub protocol: Option<Protocol>,
    /// Seed for sampled negatives.
    #[arg(long)]
    pub eval_seed: Option<u64>,
}

impl EvalArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.eval.k, self.k);
        set(&mut cfg.eval.protocol, self.protocol);
        set(&mut cfg.eval.seed, self.eval_seed);
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Score the validation items instead of the test items.
    #[arg(long)]
    pub validation: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub loops: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub epochs_per_loop: Option<usize>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    /// Let already-interacted items be recommended.
    #[arg(long)]
    pub allow_seen: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of equal-size popularity groups.
    #[arg(long, default_value_t = 10)]
    pub groups: usize,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub input_opts: InputArgs,
    /// MNAR split directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Raw MAR ratings file.
    #[arg(long)]
    pub mar: PathBuf,
    /// Fraction of fresh MAR positives to add, in [0, 1].
    #[arg(long)]
    pub pct: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Split directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub betas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Write raw ids from this id map instead of dense indices.
    #[arg(long)]
    pub idmap: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage msg={first}");
            return 2;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", error_line(&e));
            1
        }
    }
}

pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("error kind={} msg={msg}", e.kind())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::AnalyzeExposure(a) => analyze(a),
        Command::Mix(a) => mix(a),
        Command::Sweep(a) => sweep(a),
        Command::ExportEmbeddings(a) => export(a),
    }
}

fn base_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.out_dir, common.out_dir.clone().map(Some));
    set(&mut cfg.run_id, common.run_id.clone().map(Some));
    Ok(cfg)
}

/// Creates `<out>/<run-id>`, stores the resolved id and starts logging to `train.log` there.
fn open_run(cfg: &mut RunConfig, command: &str) -> Result<PathBuf> {
    let root = cfg
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let id = match &cfg.run_id {
        Some(id) => id.clone(),
        None => {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let mut id = format!("{command}-{secs}");
            let mut n = 1;
            while root.join(&id).exists() {
                n += 1;
                id = format!("{command}-{secs}-{n}");
            }
            id
        }
    };
    let dir = root.join(&id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    cfg.out_dir = Some(root);
    cfg.run_id = Some(id);
    init_logging(Some(&dir.join("train.log")))?;
    Ok(dir)
}

fn snapshot(cfg: &RunConfig, dir: &Path) -> Result<()> {
    cfg.save(dir.join(CONFIG_FILE))
}

/// Writes log lines to stderr and to the current run's log file.
#[derive(Clone, Default)]
struct LogSink {
    file: Arc<Mutex<Option<fs::File>>>,
}

impl Write for LogSink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        std::io::stderr().write_all(buf)?;
        if let Some(f) = self.file.lock().expect("log lock").as_mut() {
            f.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        if let Some(f) = self.file.lock().expect("log lock").as_mut() {
            f.flush()?;
        }
        std::io::stderr().flush()
    }
}

static SINK: std::sync::OnceLock<LogSink> = std::sync::OnceLock::new();

fn init_logging(file: Option<&Path>) -> Result<()> {
    let sink = SINK.get_or_init(|| {
        let sink = LogSink::default();
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
            .target(env_logger::Target::Pipe(Box::new(sink.clone())))
            .try_init();
        sink
    });
    let handle = match file {
        Some(path) => Some(fs::File::create(path).map_err(|e| Error::io(path, e))?),
        None => None,
    };
    *sink.file.lock().expect("log lock") = handle;
    Ok(())
}

fn split_dir(cfg: &mut RunConfig, flag: &Option<PathBuf>) -> Result<PathBuf> {
    set(&mut cfg.data.split_dir, flag.clone().map(Some));
    cfg.data
        .split_dir
        .clone()
        .ok_or_else(|| Error::invalid("no split directory given (use --data or data.split_dir)"))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    a.input_opts.apply(&mut cfg);
    set(&mut cfg.data.input, a.input.clone().map(Some));
    set(&mut cfg.data.split_seed, a.seed);
    init_logging(None)?;
    let input = cfg
        .data
        .input
        .clone()
        .ok_or_else(|| Error::invalid("no input file given (use --input or data.input)"))?;
    let raw = load_ratings(&input, &cfg.data.load_options())?;
    let map = match &a.idmap {
        Some(p) => IdMap::load(p)?,
        None => IdMap::from_raw(&raw),
    };
    let (indexed, dropped) = raw.reindex(&map);
    if dropped > 0 {
        log::warn!("dropped {dropped} records with ids outside the id map");
    }
    let ds = binarize(&indexed, cfg.data.threshold, map.num_users(), map.num_items())?;
    let split = leave_one_out_split(&ds, cfg.data.split_seed)?;
    let manifest = Manifest {
        threshold: Some(cfg.data.threshold),
        malformed_lines: raw.malformed,
        source: Some(input.display().to_string()),
        ..Manifest::for_split(&split)
    };
    write_split(&a.out, &split, &manifest)?;
    map.save(a.out.join(IDMAP_FILE))?;
    cfg.data.split_dir = Some(a.out.clone());
    snapshot(&cfg, &a.out)?;
    log::info!(
        "{} users, {} items, {} train positives, {} skipped users -> {}",
        manifest.num_users,
        manifest.num_items,
        manifest.train_positives,
        manifest.skipped_users,
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub loss: String,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub protocol: String,
    pub recall: f64,
    pub ndcg: f64,
    pub arp: f64,
    pub tap: f64,
    pub seed: u64,
}

impl ReportRow {
    fn new(hp: &Hyperparams, eval: &EvalConfig, r: &EvalReport) -> Self {
        ReportRow {
            loss: hp.loss.name().to_string(),
            alpha: hp.alpha,
            beta: hp.beta,
            k: eval.k,
            protocol: eval.protocol.name().to_string(),
            recall: r.recall,
            ndcg: r.ndcg,
            arp: r.arp,
            tap: r.tap,
            seed: hp.seed,
        }
    }
}

pub fn write_rows<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    loss: f64,
    val_recall: Option<f64>,
    val_ndcg: Option<f64>,
}

fn train(a: TrainArgs) -> Result<()> {
    a.model.single_loss()?;
    let mut cfg = base_config(&a.common)?;
    a.model.apply(&mut cfg)?;
    let data = split_dir(&mut cfg, &a.data)?;
    let dir = open_run(&mut cfg, "train")?;
    snapshot(&cfg, &dir)?;
    let (split, _) = read_split(&data)?;
    let out = fit(&split, &cfg.train_config())?;
    let rows: Vec<EpochRow> = out
        .history
        .iter()
        .map(|h| EpochRow { epoch: h.epoch, loss: h.loss, val_recall: h.val_recall, val_ndcg: h.val_ndcg })
        .collect();
    write_rows(&dir.join("metrics.csv"), &rows)?;
    let ck = Checkpoint { hp: cfg.model.clone(), best_epoch: out.best_epoch, params: out.params };
    ck.save(dir.join("checkpoint.json"))?;
    let pop = popularity(&split.train);
    let report = evaluate_held_out(&ck.params, &split, HeldOut::Test, &cfg.eval, &pop)?;
    let row = ReportRow::new(&cfg.model, &cfg.eval, &report);
    write_rows(&dir.join("report.csv"), std::slice::from_ref(&row))?;
    log::info!(
        "best epoch {} test recall@{} {:.5} ndcg {:.5} -> {}",
        out.best_epoch,
        cfg.eval.k,
        report.recall,
        report.ndcg,
        dir.display()
    );
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    a.eval.apply(&mut cfg);
    let data = split_dir(&mut cfg, &a.data)?;
    let dir = open_run(&mut cfg, "evaluate")?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    cfg.model = ck.hp.clone();
    snapshot(&cfg, &dir)?;
    let (split, _) = read_split(&data)?;
    if ck.params.num_users != split.num_users() || ck.params.num_items != split.num_items() {
        return Err(Error::DimensionMismatch {
            what: "checkpoint users x items",
            expected: split.num_users() * split.num_items(),
            found: ck.params.num_users * ck.params.num_items,
        });
    }
    let which = if a.validation { HeldOut::Validation } else { HeldOut::Test };
    let pop = popularity(&split.train);
    let report = evaluate_held_out(&ck.params, &split, which, &cfg.eval, &pop)?;
    let row = ReportRow::new(&ck.hp, &cfg.eval, &report);
    write_rows(&dir.join("metrics.csv"), std::slice::from_ref(&row))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::stdout());
    let stdout = Path::new("<stdout>");
    w.serialize(&row).map_err(|e| csv_err(stdout, e))?;
    w.flush().map_err(|e| Error::io(stdout, e))?;
    Ok(())
}

#[derive(Serialize)]
struct LoopRow {
    #[serde(rename = "loop")]
    generation: usize,
    new: usize,
    cumulative: usize,
    tap: f64,
    arp: f64,
}

fn write_loop_rows(path: &Path, state: &LoopState) -> Result<()> {
    let rows: Vec<LoopRow> = state
        .per_loop
        .iter()
        .map(|r| LoopRow {
            generation: r.generation,
            new: r.new_interactions,
            cumulative: r.cumulative,
            tap: r.tap,
            arp: r.arp,
        })
        .collect();
    write_rows(path, &rows)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    a.model.apply(&mut cfg)?;
    if !a.model.loss.is_empty() {
        cfg.sim_losses = a.model.loss.clone();
    }
    if a.model.no_ufn {
        cfg.sim_losses = cfg.sim_losses.iter().map(|&l| ufn_off(l)).collect::<Result<_>>()?;
    }
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds.clone();
    }
    set(&mut cfg.sim.loops, a.loops);
    set(&mut cfg.sim.epochs_per_loop, a.epochs_per_loop);
    set(&mut cfg.sim.num_users, a.users);
    set(&mut cfg.sim.num_items, a.items);
    cfg.sim.allow_seen |= a.allow_seen;
    if cfg.seeds.is_empty() || cfg.sim_losses.is_empty() {
        return Err(Error::invalid("simulate needs at least one seed and one loss"));
    }
    let dir = open_run(&mut cfg, "simulate")?;
    snapshot(&cfg, &dir)?;
    for &loss in &cfg.sim_losses {
        let mut runs = Vec::new();
        for &seed in &cfg.seeds {
            let sim = SimConfig {
                seed,
                hp: Hyperparams { loss, ..cfg.model.clone() },
                ..cfg.sim_config()
            };
            let path = dir.join(format!("{}_seed{seed}.csv", loss.name()));
            match run_simulation(&sim) {
                Ok(state) => {
                    write_loop_rows(&path, &state)?;
                    runs.push(state);
                }
                Err(abort) => {
                    if let Some(partial) = &abort.partial {
                        write_loop_rows(&path, partial)?;
                    }
                    return Err(abort.into());
                }
            }
        }
        let curve = summarize(loss.name(), runs);
        write_curve(&dir.join(format!("{}.csv", loss.name())), &curve)?;
        if let Some(last) = curve.points.last() {
            log::info!(
                "{loss}: loop {} cumulative {:.1} tap {:.4} arp {:.2}",
                last.generation,
                last.cumulative_mean,
                last.tap_mean,
                last.arp_mean
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ItemRow {
    item_id: u64,
    count: usize,
    normalized: f64,
    rank: usize,
    tail_flag: u8,
}

#[derive(Serialize)]
struct GroupRow {
    group: usize,
    share: f64,
}

fn load_idmap(path: &Path) -> Result<Option<IdMap>> {
    if path.exists() {
        IdMap::load(path).map(Some)
    } else {
        Ok(None)
    }
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    let data = split_dir(&mut cfg, &a.data)?;
    let dir = open_run(&mut cfg, "analyze-exposure")?;
    snapshot(&cfg, &dir)?;
    let (split, _) = read_split(&data)?;
    let map = load_idmap(&data.join(IDMAP_FILE))?;
    let pop = popularity(&split.train);
    let rows: Vec<ItemRow> = (0..pop.num_items())
        .map(|i| ItemRow {
            item_id: map.as_ref().map_or(i as u64, |m| m.items[i]),
            count: pop.counts[i],
            normalized: pop.normalized[i],
            rank: pop.rank[i],
            tail_flag: pop.tail[i] as u8,
        })
        .collect();
    write_rows(&dir.join("items.csv"), &rows)?;
    let groups: Vec<GroupRow> = exposure_distribution(&split.train, a.groups)?
        .into_iter()
        .enumerate()
        .map(|(g, share)| GroupRow { group: g + 1, share })
        .collect();
    write_rows(&dir.join("groups.csv"), &groups)?;
    log::info!("{} items, {} groups -> {}", rows.len(), groups.len(), dir.display());
    Ok(())
}

fn mix(a: MixArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    a.input_opts.apply(&mut cfg);
    let data = split_dir(&mut cfg, &a.data)?;
    init_logging(None)?;
    let (split, manifest) = read_split(&data)?;
    let raw = load_ratings(&a.mar, &cfg.data.load_options())?;
    let map = load_idmap(&data.join(IDMAP_FILE))?;
    let indexed = match &map {
        Some(m) => {
            let (r, dropped) = raw.reindex(m);
            if dropped > 0 {
                log::warn!("dropped {dropped} MAR records with ids unknown to the split");
            }
            r
        }
        None => raw,
    };
    let mar = binarize(&indexed, cfg.data.threshold, split.num_users(), split.num_items())?;
    // held-out items must stay out of training
    let mar = ImplicitDataset::new(
        mar.num_users(),
        mar.num_items(),
        mar.pairs().filter(|&(u, i)| split.validation[u] != Some(i) && split.test[u] != Some(i)),
    )?;
    let train = mix_mar(&split.train, &mar, a.pct, a.seed)?;
    log::info!(
        "added {} MAR positives ({:.1}%)",
        train.num_positives() - split.train.num_positives(),
        a.pct * 100.0
    );
    let mixed = SplitDataset { train, ..split };
    let manifest = Manifest {
        train_positives: mixed.train.num_positives(),
        source: Some(a.mar.display().to_string()),
        ..manifest
    };
    write_split(&a.out, &mixed, &manifest)?;
    if let Some(m) = map {
        m.save(a.out.join(IDMAP_FILE))?;
    }
    cfg.data.input = Some(a.mar.clone());
    cfg.data.split_dir = Some(a.out.clone());
    snapshot(&cfg, &a.out)
}

fn sweep(a: SweepArgs) -> Result<()> {
    a.model.single_loss()?;
    let mut cfg = base_config(&a.common)?;
    a.model.apply(&mut cfg)?;
    cfg.eval.protocol = Protocol::Sampled99;
    a.eval.apply(&mut cfg);
    if !a.alphas.is_empty() {
        cfg.sweep.alphas = a.alphas.clone();
    }
    if !a.betas.is_empty() {
        cfg.sweep.betas = a.betas.clone();
    }
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds.clone();
    }
    let grid = sweep_grid(&cfg)?;
    let data = split_dir(&mut cfg, &a.data)?;
    let dir = open_run(&mut cfg, "sweep")?;
    snapshot(&cfg, &dir)?;
    let (split, _) = read_split(&data)?;
    let pop = popularity(&split.train);
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        for &(alpha, beta) in &grid {
            let mut tc = cfg.train_config();
            tc.hp = Hyperparams { alpha, beta, seed, ..tc.hp };
            let out = fit(&split, &tc)?;
            let eval = EvalConfig { seed, ..cfg.eval.clone() };
            let report = evaluate_held_out(&out.params, &split, HeldOut::Test, &eval, &pop)?;
            log::info!("alpha {alpha} beta {beta} seed {seed}: recall@{} {:.5}", eval.k, report.recall);
            rows.push(ReportRow::new(&tc.hp, &eval, &report));
        }
    }
    write_rows(&dir.join("sweep.csv"), &rows)
}

/// Grid points: the cartesian product of the given alphas and betas, with the
/// configured value standing in for an empty axis.
pub fn sweep_grid(cfg: &RunConfig) -> Result<Vec<(f64, f64)>> {
    let s = &cfg.sweep;
    if s.alphas.is_empty() && s.betas.is_empty() {
        return Err(Error::invalid("empty sweep grid (give --alphas and/or --betas)"));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one seed"));
    }
    let alphas = if s.alphas.is_empty() { vec![cfg.model.alpha] } else { s.alphas.clone() };
    let betas = if s.betas.is_empty() { vec![cfg.model.beta] } else { s.betas.clone() };
    Ok(alphas.iter().flat_map(|&a| betas.iter().map(move |&b| (a, b))).collect())
}

fn write_factors(path: &Path, id_col: &str, ids: &[u64], params: &MFParams, rows: impl Fn(usize) -> Vec<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = std::iter::once(id_col.to_string())
        .chain((0..params.dim).map(|k| format!("f{k}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (r, id) in ids.iter().enumerate() {
        let rec: Vec<String> = std::iter::once(id.to_string())
            .chain(rows(r).iter().map(|x| x.to_string()))
            .collect();
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn export(a: ExportArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    let dir = open_run(&mut cfg, "export-embeddings")?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    cfg.model = ck.hp.clone();
    snapshot(&cfg, &dir)?;
    let p = &ck.params;
    let (users, items): (Vec<u64>, Vec<u64>) = match &a.idmap {
        Some(path) => {
            let m = IdMap::load(path)?;
            if m.num_users() != p.num_users || m.num_items() != p.num_items {
                return Err(Error::DimensionMismatch {
                    what: "id map users x items",
                    expected: p.num_users * p.num_items,
                    found: m.num_users() * m.num_items(),
                });
            }
            (m.users.clone(), m.items.clone())
        }
        None => ((0..p.num_users as u64).collect(), (0..p.num_items as u64).collect()),
    };
    write_factors(&dir.join("users.csv"), "user_id", &users, p, |u| p.user(u).to_vec())?;
    write_factors(&dir.join("items.csv"), "item_id", &items, p, |i| p.item(i).to_vec())?;
    log::info!("{} users, {} items, dim {} -> {}", p.num_users, p.num_items, p.dim, dir.display());
    Ok(())
}
