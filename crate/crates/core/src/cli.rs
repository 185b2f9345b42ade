//! The `atsdln` command line. Every command reads an optional JSON run config,
//! applies flag overrides, and writes a manifest next to its output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::baseline::VotePool;
use crate::bench::{combo_sweep, window_size_study, SourceConfig};
use crate::data::{self, anomaly_corpus, read_dataset, read_s5, read_ucr, write_dataset, write_s5, write_ucr, CorpusConfig};
use crate::detectors::{run_detector, DetectorConfig, DetectorContext, GridSet};
use crate::error::Error;
use crate::eval::{evaluate_series_with, Scorer};
use crate::net::{train_model, ArchitectureSpec, EpochLog, FreezeSchedule, Model, ModelBundle, TrainConfig, Variant};
use crate::oracle::build_dataset;
use crate::report::{metric_table_csv, write_sweep_report, write_table_report, MetricRow, METRIC_TABLE_HEADER};
use crate::series::{TimeSeries, Window};
use crate::transfer::{pretrain_backbone, shape_source, transplant, BackboneWeights, SourceShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 32/64/32 filters.
    Desk,
    /// 128/256/128 filters.
    Standard,
}

/// Everything a command may need. Unset keys take these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// `default`, `full`, or a path to a grid JSON file.
    pub grid: String,
    pub window_size: usize,
    pub stride: usize,
    pub variant: Variant,
    pub profile: Profile,
    /// Preceding windows offered to shape detectors.
    pub history: usize,
    /// Backbone schedule for `train --backbone`; `train.freeze` applies otherwise.
    pub transfer_freeze: FreezeSchedule,
    pub train: TrainConfig,
    pub corpus: CorpusConfig,
    pub source: SourceConfig,
    pub vote: VotePool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            grid: "default".into(),
            window_size: 200,
            stride: 100,
            variant: Variant::Atsdln,
            profile: Profile::Desk,
            history: crate::eval::DEFAULT_HISTORY,
            transfer_freeze: FreezeSchedule::Epochs(10),
            train: TrainConfig::default(),
            corpus: CorpusConfig::default(),
            source: SourceConfig::default(),
            vote: VotePool::standard(),
        }
    }
}

/// Walks `given` against the shape of `default`, collecting unknown keys and
/// every leaf that fails to deserialize on its own.
fn check_keys(default_root: &Value, given: &Value, path: &mut Vec<String>, problems: &mut Vec<String>) {
    let Some(obj) = given.as_object() else {
        problems.push(format!("{}: expected an object", display_path(path)));
        return;
    };
    let default_here = lookup(default_root, path).clone();
    for (key, value) in obj {
        path.push(key.clone());
        match default_here.get(key) {
            None => problems.push(format!("{}: unknown key", display_path(path))),
            Some(d) if d.is_object() && value.is_object() && !is_leaf(path) => check_keys(default_root, value, path, problems),
            Some(_) => {
                let mut probe = default_root.clone();
                *lookup_mut(&mut probe, path) = value.clone();
                if let Err(e) = serde_json::from_value::<RunConfig>(probe) {
                    problems.push(format!("{}: {e}", display_path(path)));
                }
            }
        }
        path.pop();
    }
}

// values that are objects but should be judged whole
fn is_leaf(path: &[String]) -> bool {
    path.last().is_some_and(|k| k == "freeze" || k == "transfer_freeze")
}

fn display_path(path: &[String]) -> String {
    if path.is_empty() {
        "<root>".into()
    } else {
        path.join(".")
    }
}

fn lookup<'a>(v: &'a Value, path: &[String]) -> &'a Value {
    path.iter().fold(v, |v, k| &v[k.as_str()])
}

fn lookup_mut<'a>(v: &'a mut Value, path: &[String]) -> &'a mut Value {
    path.iter().fold(v, |v, k| &mut v[k.as_str()])
}

impl RunConfig {
    /// Parses a config, reporting every offending key at once.
    pub fn from_json(text: &str) -> crate::Result<Self> {
        let given: Value = serde_json::from_str(text)?;
        let default = serde_json::to_value(RunConfig::default())?;
        let mut problems = Vec::new();
        check_keys(&default, &given, &mut Vec::new(), &mut problems);
        if !problems.is_empty() {
            return Err(Error::Config { problems });
        }
        let config: RunConfig = serde_json::from_value(given)?;
        config.validate()?;
        Ok(config)
    }

    /// Value checks across fields; all problems are reported together.
    pub fn validate(&self) -> crate::Result<()> {
        let mut problems = Vec::new();
        if self.stride == 0 {
            problems.push("stride: must be positive".to_string());
        }
        if self.history == 0 {
            problems.push("history: must be positive".into());
        }
        match self.grids() {
            Ok(g) if self.window_size < g.min_window() => problems.push(format!(
                "window_size: {} is below the grid minimum {}",
                self.window_size,
                g.min_window()
            )),
            Ok(_) => {}
            Err(e) => problems.push(format!("grid: {e}")),
        }
        if let Err(Error::Config { problems: p }) = self.train.validate() {
            problems.extend(p.into_iter().map(|p| format!("train.{p}")));
        }
        if let Err(Error::Config { problems: p }) = self.source.train.validate() {
            problems.extend(p.into_iter().map(|p| format!("source.train.{p}")));
        }
        if self.corpus.series_per_type == 0 || self.corpus.windows_per_series < 2 || self.corpus.types.is_empty() {
            problems.push("corpus: needs series_per_type >= 1, windows_per_series >= 2 and at least one type".into());
        }
        if self.vote.configs.is_empty() {
            problems.push("vote.configs: must not be empty".into());
        }
        for (i, c) in self.vote.configs.iter().enumerate() {
            if let Err(e) = c.validate() {
                problems.push(format!("vote.configs[{i}]: {e}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }

    pub fn grids(&self) -> crate::Result<GridSet> {
        match self.grid.as_str() {
            "default" => Ok(GridSet::default()),
            "full" => Ok(GridSet::full()),
            path => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                GridSet::from_json(&text)
            }
        }
    }

    pub fn spec(&self, grids: &GridSet, window_size: usize) -> ArchitectureSpec {
        match self.profile {
            Profile::Desk => ArchitectureSpec::desk(grids, window_size, self.variant),
            Profile::Standard => ArchitectureSpec::standard(grids, window_size, self.variant),
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(canonical.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `never`, `always`, or a number of frozen epochs.
pub fn parse_freeze(text: &str) -> Result<FreezeSchedule, String> {
    match text {
        "never" => Ok(FreezeSchedule::Never),
        "always" => Ok(FreezeSchedule::Always),
        n => n
            .parse::<usize>()
            .map(FreezeSchedule::Epochs)
            .map_err(|_| format!("expected never, always or an epoch count, got `{n}`")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "atsdln", version, about = "Adaptive per-window anomaly detector selection")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run config; flags below override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `default`, `full`, or a grid JSON path.
    #[arg(long, global = true)]
    pub grid: Option<String>,
    /// ns, ssr or atsdln.
    #[arg(long, global = true)]
    pub variant: Option<String>,
    #[arg(long, global = true)]
    pub window_size: Option<usize>,
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// never, always, or a number of epochs.
    #[arg(long, global = true, value_parser = parse_freeze)]
    pub freeze: Option<FreezeSchedule>,
}

impl Overrides {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_json(&text).with_context(|| format!("config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            config.seed = s;
            config.train.seed = s;
            config.source.train.seed = s;
        }
        if let Some(g) = &self.grid {
            config.grid = g.clone();
        }
        if let Some(v) = &self.variant {
            config.variant = Variant::from_name(v).with_context(|| format!("unknown variant `{v}` (ns, ssr, atsdln)"))?;
        }
        if let Some(w) = self.window_size {
            config.window_size = w;
            config.corpus.window_size = w;
        }
        if let Some(s) = self.stride {
            config.stride = s;
        }
        if let Some(f) = self.freeze {
            config.train.freeze = f;
            config.transfer_freeze = f;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the labeled synthetic corpus as S5-style CSV files.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate S5 or UCR files and rewrite them in canonical form.
    Ingest {
        #[arg(long, default_value = "s5")]
        format: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Label windows with the best grid combo (oracle sweep).
    Label {
        /// Directory of S5-style CSV files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain a backbone on a UCR-style file, or on synthetic waveforms.
    Pretrain {
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a selection network on a labeled dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Backbone file from `pretrain`.
        #[arg(long)]
        backbone: Option<PathBuf>,
    },
    /// Score a model, one detector config, or the voting pool on labeled series.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with_all = ["detector", "vote"])]
        model: Option<PathBuf>,
        /// Detector config as JSON, e.g. {"kind":"ksigma","params":{"k":3}}.
        #[arg(long, conflicts_with = "vote")]
        detector: Option<String>,
        #[arg(long)]
        vote: bool,
    },
    /// Run a trained model over one series and write per-point flags.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the voting pool across window sizes.
    BenchWindow {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "50,100,150,200")]
        sizes: Vec<usize>,
    },
    /// Per-combo sweep charts, or charts for an existing metric table.
    Report {
        #[arg(long, required_unless_present = "table")]
        input: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest { .. } => "ingest",
            Command::Label { .. } => "label",
            Command::Pretrain { .. } => "pretrain",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Detect { .. } => "detect",
            Command::BenchWindow { .. } => "bench-window",
            Command::Report { .. } => "report",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub notes: BTreeMap<String, Value>,
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("atsdln".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("model_format".to_string(), crate::net::MODEL_FORMAT_VERSION.to_string()),
        ("dataset_format".to_string(), data::DATASET_FORMAT_VERSION.to_string()),
    ])
}

/// Where the manifest of an output goes: inside it for a directory, beside it
/// for a file.
fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

struct Run {
    config: RunConfig,
    inputs: Vec<String>,
    outputs: Vec<String>,
    notes: BTreeMap<String, Value>,
}

impl Run {
    fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        self.notes.insert(key.into(), serde_json::to_value(value).expect("note serializes"));
    }
}

fn create_dir(p: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn write_text(p: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
}

/// Every `*.csv` in `dir`, sorted by file name, read as S5 series.
pub fn read_series_dir(dir: &Path) -> anyhow::Result<Vec<TimeSeries>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .csv series in {}", dir.display());
    }
    paths.iter().map(|p| Ok(read_s5(p)?)).collect()
}

/// Parses arguments from the process and runs; the exit code is nonzero on
/// any error.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli, std::env::args().collect()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli, args: Vec<String>) -> anyhow::Result<()> {
    let config = cli.overrides.resolve()?;
    let mut run = Run {
        config,
        inputs: Vec::new(),
        outputs: Vec::new(),
        notes: BTreeMap::new(),
    };
    let manifest_at = match &cli.command {
        Command::Synth { out } => cmd_synth(&mut run, out)?,
        Command::Ingest { format, out, inputs } => cmd_ingest(&mut run, format, out, inputs)?,
        Command::Label { input, out } => cmd_label(&mut run, input, out)?,
        Command::Pretrain { source, out } => cmd_pretrain(&mut run, source.as_deref(), out)?,
        Command::Train { dataset, out, backbone } => cmd_train(&mut run, dataset, out, backbone.as_deref())?,
        Command::Evaluate {
            input,
            out,
            model,
            detector,
            vote,
        } => cmd_evaluate(&mut run, input, out, model.as_deref(), detector.as_deref(), *vote)?,
        Command::Detect { model, input, out } => cmd_detect(&mut run, model, input, out)?,
        Command::BenchWindow { input, out, sizes } => cmd_bench_window(&mut run, input, out, sizes)?,
        Command::Report { input, table, out } => cmd_report(&mut run, input.as_deref(), table.as_deref(), out)?,
    };
    let manifest = Manifest {
        command: cli.command.name().into(),
        args,
        seed: run.config.seed,
        config_hash: run.config.hash(),
        config: run.config,
        versions: versions(),
        inputs: run.inputs,
        outputs: run.outputs,
        notes: run.notes,
    };
    let path = manifest_path(&manifest_at);
    write_text(&path, &serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn cmd_synth(run: &mut Run, out: &Path) -> anyhow::Result<PathBuf> {
    create_dir(out)?;
    let mut corpus_cfg = run.config.corpus.clone();
    corpus_cfg.window_size = run.config.window_size;
    let corpus = anomaly_corpus(&corpus_cfg, run.config.seed)?;
    let mut index = Vec::new();
    for c in &corpus {
        let path = out.join(format!("{}.csv", c.series.id));
        write_s5(&c.series, &path)?;
        run.output(&path);
        index.push(serde_json::json!({"id": c.series.id, "type": c.kind, "anomaly_window": c.anomaly_window}));
    }
    let index_path = out.join("corpus.json");
    write_text(&index_path, &serde_json::to_string_pretty(&index)?)?;
    run.output(&index_path);
    println!("wrote {} series to {}", corpus.len(), out.display());
    Ok(out.to_path_buf())
}

fn cmd_ingest(run: &mut Run, format: &str, out: &Path, inputs: &[PathBuf]) -> anyhow::Result<PathBuf> {
    create_dir(out)?;
    for p in inputs {
        run.input(p);
        let name = p.file_name().context("input path has no file name")?;
        let dest = out.join(name);
        match format {
            "s5" => {
                let s = read_s5(p)?;
                let anomalies = s.labels.as_ref().map_or(0, |l| l.iter().filter(|&&x| x).count());
                println!("{}: {} points, {} labeled anomalous", s.id, s.len(), anomalies);
                write_s5(&s, &dest)?;
            }
            "ucr" => {
                let ex = read_ucr(p)?;
                println!("{}: {} series, {} classes", p.display(), ex.len(), data::class_count(&ex));
                write_ucr(&ex, &dest)?;
            }
            other => bail!("unknown format `{other}` (s5, ucr)"),
        }
        run.output(&dest);
    }
    Ok(out.to_path_buf())
}

fn cmd_label(run: &mut Run, input: &Path, out: &Path) -> anyhow::Result<PathBuf> {
    run.input(input);
    let series = read_series_dir(input)?;
    let grids = run.config.grids()?;
    let data = build_dataset(&series, run.config.window_size, run.config.stride, &grids)?;
    write_dataset(&data, out)?;
    run.output(out);
    run.note("class_counts", &data.class_counts);
    println!("labeled {} windows; detector class counts {:?}", data.len(), data.class_counts);
    Ok(out.to_path_buf())
}

fn cmd_pretrain(run: &mut Run, source: Option<&Path>, out: &Path) -> anyhow::Result<PathBuf> {
    let examples = match source {
        Some(p) => {
            run.input(p);
            read_ucr(p)?
        }
        None => shape_source(&SourceShape::ALL, run.config.source.per_class, run.config.source.length, run.config.seed),
    };
    let grids = run.config.grids()?;
    let spec = run.config.spec(&grids, run.config.window_size);
    let train_cfg = TrainConfig {
        seed: run.config.seed,
        ..run.config.source.train.clone()
    };
    let outcome = pretrain_backbone(&examples, &spec, &train_cfg)?;
    outcome.backbone.save(out)?;
    run.output(out);
    run.note("source_accuracy", outcome.final_accuracy());
    run.note("epochs", outcome.accuracy_log.len());
    println!(
        "pretrained on {} series, {} classes: accuracy {:.4} after {} epochs",
        examples.len(),
        outcome.backbone.source_classes.len(),
        outcome.final_accuracy(),
        outcome.accuracy_log.len()
    );
    Ok(out.to_path_buf())
}

fn cmd_train(run: &mut Run, dataset: &Path, out: &Path, backbone: Option<&Path>) -> anyhow::Result<PathBuf> {
    run.input(dataset);
    let data = read_dataset(dataset)?;
    let spec = run.config.spec(&data.grids, data.window_size);
    let mut model = Model::new(spec, run.config.seed)?;
    if let Some(b) = backbone {
        run.input(b);
        model = transplant(&BackboneWeights::load(b)?, model)?;
    }
    let mut train_cfg = TrainConfig {
        seed: run.config.seed,
        ..run.config.train.clone()
    };
    if backbone.is_some() {
        train_cfg.freeze = run.config.transfer_freeze;
    }
    let outcome = train_model(model, &data, &train_cfg)?;
    let bundle = ModelBundle::new(outcome.model.clone(), data.grids.clone())?;
    bundle.save(out)?;
    run.output(out);
    let mut log = String::from(EpochLog::CSV_HEADER);
    log.push('\n');
    for e in &outcome.log {
        log.push_str(&e.csv_row());
        log.push('\n');
    }
    let log_path = out.with_extension("log.csv");
    write_text(&log_path, &log)?;
    run.output(&log_path);
    run.note("best_epoch", outcome.best_epoch);
    run.note("epochs", outcome.log.len());
    println!(
        "trained {} for {} epochs, best epoch {}",
        run.config.variant.name(),
        outcome.log.len(),
        outcome.best_epoch
    );
    Ok(out.to_path_buf())
}

fn cmd_evaluate(
    run: &mut Run,
    input: &Path,
    out: &Path,
    model: Option<&Path>,
    detector: Option<&str>,
    vote: bool,
) -> anyhow::Result<PathBuf> {
    run.input(input);
    let series = read_series_dir(input)?;
    let history = run.config.history;
    let (name, result) = match (model, detector, vote) {
        (Some(m), _, _) => {
            run.input(m);
            let bundle = ModelBundle::load(m)?;
            let w = bundle.model.spec().input_length;
            let name = bundle.model.spec().variant.name().to_string();
            (name, evaluate_series_with(Scorer::Adaptive(&bundle), &series, w, history)?)
        }
        (None, Some(json), _) => {
            let cfg: DetectorConfig = serde_json::from_str(json).context("parsing --detector")?;
            cfg.validate()?;
            run.note("detector", &cfg);
            (cfg.to_string(), evaluate_series_with(Scorer::Fixed(&cfg), &series, run.config.window_size, history)?)
        }
        (None, None, true) => {
            let pool = run.config.vote.clone();
            run.note("vote", &pool);
            let r = evaluate_series_with(Scorer::Vote(&pool), &series, run.config.window_size, history)?;
            ("vote".to_string(), r)
        }
        (None, None, false) => bail!("choose one of --model, --detector or --vote"),
    };
    let csv = metric_table_csv(&[MetricRow::new(name, result.counts)])?;
    write_text(out, &csv)?;
    run.output(out);
    print!("{csv}");
    Ok(out.to_path_buf())
}

fn cmd_detect(run: &mut Run, model: &Path, input: &Path, out: &Path) -> anyhow::Result<PathBuf> {
    run.input(model);
    run.input(input);
    let bundle = ModelBundle::load(model)?;
    let series = read_s5(input)?;
    let w = bundle.model.spec().input_length;
    if series.len() < w {
        bail!(Error::SeriesTooShort {
            id: series.id.clone(),
            len: series.len(),
            window: w,
        });
    }
    // consecutive windows; a final window aligned to the end covers any tail
    let mut starts: Vec<usize> = (0..=series.len() - w).step_by(w).collect();
    if starts.last().map(|s| s + w) != Some(series.len()) {
        starts.push(series.len() - w);
    }
    let mut flags = vec![false; series.len()];
    let mut combo = vec![String::new(); series.len()];
    let mut covered = 0;
    for &s in &starts {
        let window = Window {
            parent_id: series.id.clone(),
            start_index: s,
            ..Window::from_values(series.values[s..s + w].to_vec())
        };
        let ctx = DetectorContext::preceding(&series.values, s, w, run.config.history);
        let pred = bundle.predict(&window)?;
        let r = run_detector(&pred.config, &window, &ctx)?;
        for i in covered.max(s)..s + w {
            flags[i] = r.mask.flags()[i - s];
            combo[i] = pred.config.to_string();
        }
        covered = s + w;
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["timestamp", "value", "is_anomaly", "config"])?;
    for i in 0..series.len() {
        wtr.write_record([
            series.timestamps[i].to_string(),
            series.values[i].to_string(),
            u8::from(flags[i]).to_string(),
            combo[i].clone(),
        ])?;
    }
    write_text(out, &String::from_utf8(wtr.into_inner()?)?)?;
    run.output(out);
    println!("{} of {} points flagged", flags.iter().filter(|&&f| f).count(), series.len());
    Ok(out.to_path_buf())
}

fn cmd_bench_window(run: &mut Run, input: &Path, out: &Path, sizes: &[usize]) -> anyhow::Result<PathBuf> {
    run.input(input);
    let series = read_series_dir(input)?;
    let pool = run.config.vote.clone();
    let results = window_size_study(&pool, &series, sizes)?;
    let rows: Vec<MetricRow> = results.iter().map(|(w, r)| MetricRow::new(format!("w={w}"), r.counts)).collect();
    for p in write_table_report(&rows, out, "window_size", "voting baseline by window size")? {
        run.output(&p);
    }
    run.note("vote", &pool);
    print!("{}", metric_table_csv(&rows)?);
    Ok(out.to_path_buf())
}

fn cmd_report(run: &mut Run, input: Option<&Path>, table: Option<&Path>, out: &Path) -> anyhow::Result<PathBuf> {
    let written = match (table, input) {
        (Some(t), _) => {
            run.input(t);
            let rows = read_metric_table(t)?;
            let stem = t.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "table".into());
            write_table_report(&rows, out, &stem, &stem)?
        }
        (None, Some(dir)) => {
            run.input(dir);
            let series = read_series_dir(dir)?;
            let grids = run.config.grids()?;
            let rows = combo_sweep(&grids, &series, run.config.window_size)?;
            write_sweep_report(&rows, out)?
        }
        (None, None) => bail!("report needs --input or --table"),
    };
    for p in &written {
        run.output(p);
    }
    println!("wrote {} files to {}", written.len(), out.display());
    Ok(out.to_path_buf())
}

/// Reads a table written by `metric_table_csv` (metrics are recomputed from
/// the counts).
pub fn read_metric_table(path: &Path) -> anyhow::Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers != METRIC_TABLE_HEADER {
        bail!("{}: header is not {}", path.display(), METRIC_TABLE_HEADER.join(","));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let n = |c: usize| -> anyhow::Result<u64> {
            rec[c].parse().with_context(|| format!("{} row {}: bad count `{}`", path.display(), i + 2, &rec[c]))
        };
        rows.push(MetricRow::new(&rec[0], crate::metrics::ConfusionCounts::new(n(1)?, n(2)?, n(3)?, n(4)?)));
    }
    Ok(rows)
}
