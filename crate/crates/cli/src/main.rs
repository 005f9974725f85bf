//! `taxembed`: synth → mine → train → eval → ablate → export.
//!
//! Every command layers built-in defaults, an optional `--config` file (TOML,
//! or JSON by extension) and flags, writes its outputs plus a
//! `manifest-<command>.json` into `--out`, and on failure prints exactly one
//! `error[<kind>]: <message>` line to stderr with a nonzero exit code.

mod artifacts;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use taxembed::encoder::load_precomputed;
use taxembed::eval::{export_projection, save_embeddings, save_projection};
use taxembed::model::{load_checkpoint, save_checkpoint};
use taxembed::pipeline::{mine_all, Experiment, RunConfig, Split};
use taxembed::synth::{generate, stratified_split};
use taxembed::triplet::{load_triplets, save_triplets, MineMode, PerRelation, Relation, TripletContext};
use taxembed::{Dataset, HashedTfEncoder};

use artifacts::{write_json, OutDirLock, Recorder};

const TAXONOMY_FILE: &str = "taxonomy.json";
const JOBS_FILE: &str = "jobs.jsonl";
const GRAPH_FILE: &str = "graph.csv";
const CONFIG_FILE: &str = "config.json";

#[derive(Debug)]
pub enum CliError {
    Core(taxembed::Error),
    Io { path: PathBuf, source: std::io::Error },
    Usage(String),
    Locked(PathBuf),
    Internal(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
            CliError::Locked(_) => "locked",
            CliError::Internal(_) => "internal",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Usage(msg) | CliError::Internal(msg) => f.write_str(msg),
            CliError::Locked(path) => write!(
                f,
                "{} exists; another run is writing here (remove it if stale)",
                path.display()
            ),
        }
    }
}

impl From<taxembed::Error> for CliError {
    fn from(e: taxembed::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "taxembed", version, about = "Joint job / SOC / Carotene embedding pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML (or .json) run config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; every stage seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Directory with taxonomy.json, jobs.jsonl and graph.csv. Without it the
    /// synthetic corpus described by the config is generated in memory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory of triplets-<relation>.tsv files from `mine`; mined on the fly otherwise.
    #[arg(long)]
    triplets: Option<PathBuf>,
    /// Precomputed job vectors (`id<TAB>v1 .. vq`) instead of the built-in encoder.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Overrides the miner mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus.
    Synth,
    /// Mine triplet files.
    Mine {
        #[command(flatten)]
        data: DataArgs,
        /// Relations to mine (repeatable or comma-separated); all by default.
        #[arg(long, value_delimiter = ',')]
        relation: Vec<Relation>,
    },
    /// Train and write a checkpoint, the epoch history and validation metrics.
    Train {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Retrain with individual loss weights zeroed.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Weights to zero, e.g. `λ3,λ4`, `lambda3` or `3`; all six by default.
        #[arg(long, value_delimiter = ',', value_parser = parse_lambda)]
        zero: Vec<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Write embedding rows or their 2-D PCA projection.
    Export {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        kind: ExportKind,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Soft,
    Hard,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl SplitArg {
    fn split(self) -> Split {
        match self {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Val => "val",
            SplitArg::Test => "test",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ExportKind {
    Embeddings,
    Projection,
}

fn parse_lambda(s: &str) -> Result<usize, String> {
    let digits = s
        .trim()
        .trim_start_matches('λ')
        .trim_start_matches("lambda");
    match digits.parse::<usize>() {
        Ok(k) if (1..=6).contains(&k) => Ok(k),
        _ => Err(format!("expected one of λ1..λ6, got '{s}'")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail(&CliError::Usage(line.to_string()));
        }
    };
    match run(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    eprintln!("error[{}]: {msg}", e.kind());
    ExitCode::from(e.exit_code())
}

fn run(command: Command, common: &Common) -> CliResult<()> {
    match command {
        Command::Synth => cmd_synth(common),
        Command::Mine { data, relation } => cmd_mine(common, &data, &relation),
        Command::Train { data } => cmd_train(common, &data),
        Command::Eval { data, checkpoint, split } => cmd_eval(common, &data, &checkpoint, split),
        Command::Ablate { data, zero, split } => cmd_ablate(common, &data, &zero, split),
        Command::Export { data, checkpoint, kind } => cmd_export(common, &data, &checkpoint, kind),
    }
}

/// Defaults, then the config file, then flags.
fn load_config(common: &Common, data: Option<&DataArgs>, fallback: Option<&Path>) -> CliResult<RunConfig> {
    let file = common
        .config
        .clone()
        .or_else(|| fallback.map(Path::to_path_buf).filter(|p| p.exists()));
    let mut config = match &file {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(mode) = data.and_then(|d| d.mode) {
        config.miner.mode = match mode {
            ModeArg::Soft => MineMode::Soft,
            ModeArg::Hard => MineMode::Hard,
        };
    }
    config.validate()?;
    Ok(config)
}

fn config_json(config: &RunConfig) -> CliResult<serde_json::Value> {
    serde_json::to_value(config).map_err(|e| CliError::Internal(e.to_string()))
}

fn load_dataset(config: &RunConfig, data: &DataArgs, rec: &mut Recorder) -> CliResult<Dataset> {
    match &data.data {
        Some(dir) => {
            let paths = [dir.join(JOBS_FILE), dir.join(TAXONOMY_FILE), dir.join(GRAPH_FILE)];
            for p in &paths {
                rec.input(p);
            }
            Ok(Dataset::load(&paths[0], &paths[1], &paths[2])?)
        }
        None => Ok(generate(&config.resolved().synth)?),
    }
}

fn triplet_file(relation: Relation) -> String {
    format!("triplets-{relation}.tsv")
}

fn prepare(config: &RunConfig, data: &DataArgs, rec: &mut Recorder) -> CliResult<Experiment> {
    let dataset = load_dataset(config, data, rec)?;
    let vectors = match &data.vectors {
        Some(path) => {
            rec.input(path);
            Some(load_precomputed(path, Some(config.encoder.q))?)
        }
        None => None,
    };
    let triplets = match &data.triplets {
        Some(dir) => {
            let ctx = TripletContext::new(&dataset.taxonomy, &dataset.graph, &dataset.jobs);
            let mut loaded = PerRelation::<Vec<_>>::default();
            for r in Relation::ALL {
                let path = dir.join(triplet_file(r));
                if path.exists() {
                    rec.input(&path);
                    loaded[r] = load_triplets(&path, &ctx)?;
                } else if config.train.weights.relation(r) > 0.0 {
                    return Err(CliError::Usage(format!(
                        "{} is missing but the {r} loss weight is nonzero",
                        path.display()
                    )));
                }
            }
            Some(loaded)
        }
        None => None,
    };
    Ok(Experiment::prepare_with(config, dataset, vectors.as_deref(), triplets)?)
}

fn cmd_synth(common: &Common) -> CliResult<()> {
    let config = load_config(common, None, None)?;
    let _lock = OutDirLock::acquire(&common.out)?;
    let mut rec = Recorder::new("synth", &common.out);
    let resolved = config.resolved();
    let dataset = generate(&resolved.synth)?;
    dataset.save(rec.output(JOBS_FILE), rec.output(TAXONOMY_FILE), rec.output(GRAPH_FILE))?;
    let splits = stratified_split(&dataset, config.synth.split, taxembed::pipeline::derive_seed(config.seed, "split"));
    let ids = |rows: &[usize]| rows.iter().map(|&i| dataset.jobs[i].id.clone()).collect::<Vec<_>>();
    #[derive(Serialize)]
    struct SplitIds {
        train: Vec<String>,
        val: Vec<String>,
        test: Vec<String>,
    }
    write_json(
        &rec.output("splits.json"),
        &SplitIds {
            train: ids(&splits.train),
            val: ids(&splits.val),
            test: ids(&splits.test),
        },
    )?;
    write_json(&rec.output(CONFIG_FILE), &config)?;
    rec.finish(config.seed, config_json(&config)?)?;
    Ok(())
}

fn cmd_mine(common: &Common, data: &DataArgs, relations: &[Relation]) -> CliResult<()> {
    let config = load_config(common, Some(data), None)?;
    let _lock = OutDirLock::acquire(&common.out)?;
    let mut rec = Recorder::new("mine", &common.out);
    let dataset = load_dataset(&config, data, &mut rec)?;
    let resolved = config.resolved();
    let encoder = HashedTfEncoder::new(resolved.encoder.clone())?;
    let mined = mine_all(&dataset, &resolved.miner, Some(&encoder))?;
    let wanted: Vec<Relation> = if relations.is_empty() {
        Relation::ALL.to_vec()
    } else {
        relations.to_vec()
    };
    let mut warnings = serde_json::Map::new();
    for r in Relation::ALL.into_iter().filter(|r| wanted.contains(r)) {
        save_triplets(rec.output(&triplet_file(r)), &mined[r].triplets)?;
        warnings.insert(r.to_string(), mined[r].warnings.into());
    }
    write_json(&rec.output("mine-warnings.json"), &warnings)?;
    rec.finish(config.seed, config_json(&config)?)?;
    Ok(())
}

fn cmd_train(common: &Common, data: &DataArgs) -> CliResult<()> {
    let config = load_config(common, Some(data), None)?;
    let _lock = OutDirLock::acquire(&common.out)?;
    let mut rec = Recorder::new("train", &common.out);
    let ex = prepare(&config, data, &mut rec)?;
    let outcome = ex.train()?;
    save_checkpoint(rec.output("checkpoint.bin"), &outcome.state.params, &ex.dataset.taxonomy)?;
    let history = rec.output("history.jsonl");
    let mut lines = String::new();
    for record in &outcome.history {
        lines.push_str(&serde_json::to_string(record).map_err(|e| CliError::Internal(e.to_string()))?);
        lines.push('\n');
    }
    std::fs::write(&history, lines).map_err(|e| CliError::io(&history, e))?;
    let metrics = ex.evaluate(&outcome.state.params, Split::Val)?;
    write_json(&rec.output("metrics-val.json"), &metrics)?;
    write_json(&rec.output(CONFIG_FILE), &config)?;
    rec.finish(config.seed, config_json(&config)?)?;
    Ok(())
}

fn cmd_eval(common: &Common, data: &DataArgs, checkpoint: &Path, split: SplitArg) -> CliResult<()> {
    let config = load_config(common, Some(data), checkpoint.parent().map(|d| d.join(CONFIG_FILE)).as_deref())?;
    let _lock = OutDirLock::acquire(&common.out)?;
    let mut rec = Recorder::new("eval", &common.out);
    let ex = prepare(&config, data, &mut rec)?;
    rec.input(checkpoint);
    let params = load_checkpoint(checkpoint, &ex.dataset.taxonomy)?;
    let metrics = ex.evaluate(&params, split.split())?;
    write_json(&rec.output(&format!("metrics-{}.json", split.name())), &metrics)?;
    rec.finish(config.seed, config_json(&config)?)?;
    Ok(())
}

fn cmd_ablate(common: &Common, data: &DataArgs, zero: &[usize], split: SplitArg) -> CliResult<()> {
    let config = load_config(common, Some(data), None)?;
    let _lock = OutDirLock::acquire(&common.out)?;
    let mut rec = Recorder::new("ablate", &common.out);
    let ex = prepare(&config, data, &mut rec)?;
    let zero: Vec<usize> = if zero.is_empty() { (1..=6).collect() } else { zero.to_vec() };
    let rows = ex.ablate(&zero, split.split())?;
    write_json(&rec.output("ablation.json"), &rows)?;

    let mut table = String::from("config\tsoc_acc\tcarotene_acc\ttra_soc_car\ttra_car_car\tepochs\n");
    for row in &rows {
        let tra = |r| row.metrics.tra.get(&r).map_or("-".to_string(), |v| format!("{v:.4}"));
        table.push_str(&format!(
            "{}\t{:.4}\t{:.4}\t{}\t{}\t{}\n",
            row.label,
            row.metrics.soc_accuracy,
            row.metrics.carotene_accuracy,
            tra(Relation::SocCar),
            tra(Relation::CarCar),
            row.epochs
        ));
    }
    let path = rec.output("ablation.tsv");
    std::fs::write(&path, table).map_err(|e| CliError::io(&path, e))?;
    rec.finish(config.seed, config_json(&config)?)?;
    Ok(())
}

fn cmd_export(common: &Common, data: &DataArgs, checkpoint: &Path, kind: ExportKind) -> CliResult<()> {
    let config = load_config(common, Some(data), checkpoint.parent().map(|d| d.join(CONFIG_FILE)).as_deref())?;
    let _lock = OutDirLock::acquire(&common.out)?;
    let mut rec = Recorder::new("export", &common.out);
    let dataset = load_dataset(&config, data, &mut rec)?;
    rec.input(checkpoint);
    let params = load_checkpoint(checkpoint, &dataset.taxonomy)?;
    match kind {
        ExportKind::Embeddings => save_embeddings(rec.output("embeddings.tsv"), &params, &dataset.taxonomy)?,
        ExportKind::Projection => {
            let points = export_projection(&params, &dataset.taxonomy)?;
            save_projection(rec.output("projection.tsv"), &points)?;
        }
    }
    rec.finish(config.seed, config_json(&config)?)?;
    Ok(())
}
