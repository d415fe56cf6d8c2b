//! Command-line front end: `train`, `tap`, `tree`, `sed-gen` and `spectrum`.
//!
//! Every output file is written atomically. Exit codes: 0 on success, 1 on runtime
//! failures, 2 on usage errors (including invalid parameter values).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::OneHotDataset;
use crate::datasets::{generate_sed, load_fasta_msa, load_matrix, SedConfig};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::meanfield::{init_from_data, solve_all, Origin, TapConfig, Variant};
use crate::model::{project_dataset, read_checkpoint, weight_spectrum, CheckpointDir, CheckpointStore, PottsRBM};
use crate::training::{compute_sequence_weights, initial_model, train_into, LogRow, TrainingConfig};
use crate::treebuild::{build_tree, export_newick, export_tree_json, layers_csv, TreeConfig};

#[derive(Debug, Parser)]
#[command(name = "rbmtree", version, about = "Potts RBM training, TAP fixed points and merge trees")]
pub struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a Potts RBM with PCD-k and write a checkpoint series.
    Train(TrainArgs),
    /// Iterate the mean-field equations from every data point at one checkpoint.
    Tap(TapArgs),
    /// Build the merge tree backward through a checkpoint series.
    Tree(TreeArgs),
    /// Generate a synthetic evolutionary dataset.
    SedGen(SedArgs),
    /// Singular values of the weight matrix per checkpoint, and data projections.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataFormat {
    /// Whitespace-separated integer states, one sample per line.
    Matrix,
    /// Aligned FASTA, 21 states.
    Fasta,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Tap,
    Nmf,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Tap => Variant::Tap,
            VariantArg::Nmf => Variant::Nmf,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::Matrix)]
    pub format: DataFormat,
    /// Number of states for matrix input (default: largest state + 1).
    #[arg(long)]
    pub states: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> Result<OneHotDataset> {
        match self.format {
            DataFormat::Matrix => load_matrix(&self.data, self.states),
            DataFormat::Fasta => load_fasta_msa(&self.data),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10_000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 512)]
    pub minibatch: usize,
    #[arg(long, default_value_t = 100)]
    pub gibbs_steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 512)]
    pub hidden: usize,
    /// Persistent chains (default: minibatch size).
    #[arg(long)]
    pub chains: Option<usize>,
    /// Number of checkpoints, equally spaced in updates.
    #[arg(long, default_value_t = 500)]
    pub checkpoints: usize,
    /// Reweight sequences by identity clusters above this threshold, or `off`.
    #[arg(long, default_value = "off")]
    pub reweight_identity: String,
    /// Output directory for checkpoints, manifest and training log.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = VariantArg::Tap)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0.3)]
    pub damping: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

impl SolverArgs {
    fn config(&self) -> TapConfig {
        TapConfig {
            max_iters: self.max_iters,
            tolerance: self.tol,
            damping: self.damping,
            beta: self.beta,
            variant: self.variant.into(),
            ..TapConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TapArgs {
    /// Checkpoint file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Leave visible magnetizations out of the output.
    #[arg(long)]
    pub no_visible: bool,
    #[arg(long, default_value = "fixedpoints.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoints: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    /// CSV with a header; leaf names come from its `label` column (or its last one).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "tree.nwk")]
    pub out_newick: PathBuf,
    #[arg(long, default_value = "tree.json")]
    pub out_json: PathBuf,
    /// Fixed-point counts per age (default: `layers.csv` next to the Newick file).
    #[arg(long)]
    pub out_layers: Option<PathBuf>,
    /// Also run the other mean-field variant and report its counts in the layers file.
    #[arg(long)]
    pub compare_variants: bool,
    #[arg(long)]
    pub min_age: Option<u64>,
    #[arg(long)]
    pub max_age: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SedArgs {
    #[arg(long, default_value_t = 805)]
    pub seq_length: usize,
    #[arg(long, default_value_t = 5)]
    pub root_children: usize,
    /// Per-site flip probability (default: 1 / seq-length).
    #[arg(long)]
    pub mutation_prob: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub max_children: usize,
    #[arg(long, default_value_t = 4508)]
    pub target_size: usize,
    #[arg(long, default_value_t = 2)]
    pub label_depth: usize,
    /// Sequence matrix output.
    #[arg(long)]
    pub out: PathBuf,
    /// Genealogy table (default: `genealogy.csv` next to the matrix).
    #[arg(long)]
    pub genealogy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Checkpoint directory or a single checkpoint file.
    #[arg(long)]
    pub checkpoints: PathBuf,
    #[arg(long, default_value = "spectrum.csv")]
    pub out: PathBuf,
    /// Dataset to project on the leading singular directions.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DataFormat::Matrix)]
    pub format: DataFormat,
    #[arg(long)]
    pub states: Option<usize>,
    /// Number of directions to project on.
    #[arg(long, default_value_t = 2)]
    pub project: usize,
    /// Checkpoint used for projections (default: the oldest).
    #[arg(long)]
    pub project_age: Option<u64>,
    #[arg(long, default_value = "projections.csv")]
    pub out_projections: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, cli.seed),
        Command::Tap(a) => cmd_tap(a),
        Command::Tree(a) => cmd_tree(a),
        Command::SedGen(a) => cmd_sed_gen(a, cli.seed),
        Command::Spectrum(a) => cmd_spectrum(a),
    }
}

fn parse_reweight(text: &str) -> Result<Option<f64>> {
    if text == "off" {
        return Ok(None);
    }
    text.parse()
        .map(Some)
        .map_err(|_| Error::config(format!("--reweight-identity expects a number or `off`, got {text:?}")))
}

fn cmd_train(a: &TrainArgs, seed: u64) -> Result<()> {
    let config = TrainingConfig {
        epochs: a.epochs,
        minibatch_size: a.minibatch,
        gibbs_steps: a.gibbs_steps,
        learning_rate: a.lr,
        n_chains: a.chains,
        n_checkpoints: a.checkpoints,
        seed,
    };
    config.validate()?;
    let threshold = parse_reweight(&a.reweight_identity)?;
    let mut data = a.data.load()?;
    if let Some(t) = threshold {
        let weights = compute_sequence_weights(&data, t)?;
        data = data.with_weights(weights)?;
        log::info!("effective number of sequences: {:.1}", data.effective_size());
    }
    let model = initial_model(&data, a.hidden, seed)?;
    let mut store = CheckpointDir::create(&a.out, Some(config.clone()))?;
    let log_path = a.out.join("training_log.csv");
    let mut log_text = format!("{}\n", LogRow::CSV_HEADER);
    let mut write_error = None;
    train_into(model, &data, &config, &mut store, |row| {
        log_text.push_str(&row.to_csv_line());
        log_text.push('\n');
        if let Err(e) = write_atomic(&log_path, log_text.as_bytes()) {
            write_error.get_or_insert(e);
        }
    })?;
    match write_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct FixedPointRecord {
    origin: Origin,
    converged: bool,
    iters: usize,
    m: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<Vec<f64>>,
}

fn cmd_tap(a: &TapArgs) -> Result<()> {
    let config = a.solver.config();
    config.validate()?;
    let (age, model) = read_checkpoint(&a.model)?;
    let data = a.data.load()?;
    let starts = (0..data.n_samples())
        .map(|m| {
            let mut s = init_from_data(&model, data.sample(m))?;
            s.origin = Origin::Data(m);
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let results = solve_all(&model, &starts, &config)?;
    let n_converged = results.iter().filter(|r| r.converged).count();
    log::info!("age {age}: {n_converged} of {} trajectories converged", results.len());
    let records: Vec<FixedPointRecord> = results
        .into_iter()
        .map(|r| FixedPointRecord {
            origin: r.state.origin,
            converged: r.converged,
            iters: r.iters,
            m: r.state.m,
            f: (!a.no_visible).then_some(r.state.f),
        })
        .collect();
    write_atomic(&a.out, serde_json::to_string_pretty(&records)?.as_bytes())
}

/// Reads leaf names from a CSV with a header row: the `label` column if present,
/// otherwise the last column.
pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = headers.iter().position(|h| h == "label").unwrap_or(headers.len().saturating_sub(1));
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        labels.push(record.get(column).unwrap_or("").to_string());
    }
    Ok(labels)
}

fn cmd_tree(a: &TreeArgs) -> Result<()> {
    let data = a.data.load()?;
    let store = CheckpointDir::open(&a.checkpoints)?;
    let config = TreeConfig {
        tap: a.solver.config(),
        eps: a.eps,
        min_age: a.min_age,
        max_age: a.max_age,
    };
    let mut tree = build_tree(&store, &data, &config)?;
    if let Some(path) = &a.labels {
        tree = tree.with_leaf_names(read_labels(path)?)?;
    }
    let other = if a.compare_variants {
        let variant = match config.tap.variant {
            Variant::Tap => Variant::Nmf,
            Variant::Nmf => Variant::Tap,
        };
        let mut other_config = config.clone();
        other_config.tap.variant = variant;
        Some(build_tree(&store, &data, &other_config)?)
    } else {
        None
    };
    write_atomic(&a.out_newick, export_newick(&tree).as_bytes())?;
    write_atomic(&a.out_json, export_tree_json(&tree)?.as_bytes())?;
    let layers_path = a.out_layers.clone().unwrap_or_else(|| sibling(&a.out_newick, "layers.csv"));
    write_atomic(&layers_path, layers_csv(&tree, other.as_ref()).as_bytes())?;
    log::info!("tree with {} layers over {} samples", tree.layers.len(), tree.n_samples());
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    match path.parent() {
        Some(p) => p.join(name),
        None => PathBuf::from(name),
    }
}

fn cmd_sed_gen(a: &SedArgs, seed: u64) -> Result<()> {
    let config = SedConfig {
        seq_length: a.seq_length,
        n_root_children: a.root_children,
        mutation_prob: a.mutation_prob,
        max_children: a.max_children,
        target_size: a.target_size,
        seed,
        label_depth: a.label_depth,
        ..SedConfig::default()
    };
    let out = generate_sed(&config)?;
    let genealogy = a.genealogy.clone().unwrap_or_else(|| sibling(&a.out, "genealogy.csv"));
    out.write(&a.out, &genealogy)
}

fn load_models(path: &Path) -> Result<Vec<(u64, PottsRBM)>> {
    if path.is_dir() {
        let store = CheckpointDir::open(path)?;
        store.ages().into_iter().map(|age| Ok((age, store.load(age)?))).collect()
    } else {
        Ok(vec![read_checkpoint(path)?])
    }
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<()> {
    let models = load_models(&a.checkpoints)?;
    let Some((_, first)) = models.first() else {
        return Err(Error::data("no checkpoints found"));
    };
    let rank = (first.n_visible() * first.n_states()).min(first.n_hidden());
    let mut out = String::from("age");
    for k in 1..=rank {
        write!(out, ",sv_{k}").unwrap();
    }
    out.push('\n');
    for (age, model) in &models {
        write!(out, "{age}").unwrap();
        for s in weight_spectrum(model) {
            write!(out, ",{s:.10e}").unwrap();
        }
        out.push('\n');
    }
    write_atomic(&a.out, out.as_bytes())?;

    if let Some(path) = &a.data {
        let data = match a.format {
            DataFormat::Matrix => load_matrix(path, a.states)?,
            DataFormat::Fasta => load_fasta_msa(path)?,
        };
        let (age, model) = match a.project_age {
            Some(age) => models
                .iter()
                .find(|(x, _)| *x == age)
                .ok_or_else(|| Error::data(format!("no checkpoint at age {age}")))?,
            None => models.last().unwrap(),
        };
        let proj = project_dataset(model, &data, a.project)?;
        let mut text = String::from("age,sample");
        for k in 1..=a.project {
            write!(text, ",p{k}").unwrap();
        }
        text.push('\n');
        for m in 0..data.n_samples() {
            write!(text, "{age},{}", data.sample_name(m)).unwrap();
            for k in 0..a.project {
                write!(text, ",{:.10e}", proj[(m, k)]).unwrap();
            }
            text.push('\n');
        }
        write_atomic(&a.out_projections, text.as_bytes())?;
    }
    Ok(())
}
