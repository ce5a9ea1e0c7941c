//! Command-line front end.
//!
//! Every command reads the same settings: an optional config file of dotted
//! `key = value` lines, then `--set key=value` overrides, then the dedicated
//! flags (`--seed`, `--data`, `--model`). Later sources win. Unknown keys are
//! rejected. All artifacts go under `--out DIR` together with a
//! `manifest.json` naming the inputs, the seed, the code version and the
//! files written; a failing command still writes its manifest.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::attacks::{attacked_accuracy, AttackKind, AttackSpec};
use crate::bounds::{bound_for, gcn_feature_bound, BoundQuery, BoundReport, DistanceKind, NormKind};
use crate::error::{Error, Result};
use crate::estimator::{estimate_model_adv, required_samples, NormOrder, RobustnessEstimate, SampleConfig};
use crate::graph::{
    generate_sbm, load_dataset, save_dataset, Dataset, DatasetPaths, FeatureModel, FeatureScaling, SbmConfig,
};
use crate::nn::{accuracy, load_model, save_model, train, Model, ModelKind, TrainConfig};
use crate::ortho::{bjorck_trace, exact_spectral_norm, ortho_defect};

#[derive(Parser, Debug)]
#[command(name = "gcorn", version, about = "Robustness toolkit for graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a GCN, GIN or GCORN model and write it with its training curve.
    Train(Common),
    /// Apply Björck projection to every layer of a saved model.
    Project(Common),
    /// Evaluate a closed-form vulnerability bound for a saved model.
    Bound(Common),
    /// Accuracy of a saved model under repeated attacks.
    Attack(Common),
    /// Monte-Carlo estimate of expected vulnerability, with an ε sweep.
    Estimate(Common),
    /// Train GCN and GCORN side by side, then attack, bound and estimate both.
    Experiment(Common),
    /// Generate a stochastic block model dataset.
    GenSbm(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set ortho.order=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Dataset directory (same as `--set data.dir=...`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model file (same as `--set model.path=...`).
    #[arg(long)]
    model: Option<PathBuf>,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (name, common) = match &cli.command {
        Command::Train(c) => ("train", c),
        Command::Project(c) => ("project", c),
        Command::Bound(c) => ("bound", c),
        Command::Attack(c) => ("attack", c),
        Command::Estimate(c) => ("estimate", c),
        Command::Experiment(c) => ("experiment", c),
        Command::GenSbm(c) => ("gen-sbm", c),
    };
    match dispatch(name, common) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(name: &str, common: &Common) -> Result<()> {
    let cfg = RunConfig::from_sources(common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let out = common.out.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut written = Vec::new();
    let result = pool.install(|| execute(name, &cfg, &out, &mut written));
    let manifest = Manifest {
        command: name.to_string(),
        status: if result.is_ok() { "ok" } else { "failed" }.into(),
        error: result.as_ref().err().map(|e| e.to_string()),
        code_version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config_file: common.config.clone(),
        settings: cfg.explicit.clone(),
        outputs: written.iter().map(|p| relative(p, &out)).collect(),
    };
    write_text(&out.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    result
}

/// Runs one command against already-resolved settings, recording every
/// file it writes in `written`.
pub fn execute(name: &str, cfg: &RunConfig, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    match name {
        "train" => cmd_train(cfg, out, written),
        "project" => cmd_project(cfg, out, written),
        "bound" => cmd_bound(cfg, out, written).map(|_| ()),
        "attack" => cmd_attack(cfg, out, written),
        "estimate" => cmd_estimate(cfg, out, written),
        "experiment" => cmd_experiment(cfg, out, written),
        "gen-sbm" => cmd_gen_sbm(cfg, out, written),
        other => Err(Error::Config(format!("unknown command {other:?}"))),
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    status: String,
    error: Option<String>,
    code_version: String,
    seed: u64,
    config_file: Option<PathBuf>,
    settings: BTreeMap<String, String>,
    outputs: Vec<String>,
}

fn relative(p: &Path, base: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

/// Where the dataset comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Dir { path: PathBuf, scaling: FeatureScaling },
    Sbm(SbmConfig),
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSource,
    pub data_name: Option<String>,
    pub model_path: Option<PathBuf>,
    pub model_kind: ModelKind,
    pub gcorn: bool,
    pub train: TrainConfig,
    pub attack: AttackSpec,
    pub attack_trials: usize,
    pub bound: BoundQuery,
    /// Explicit bound norm; otherwise chosen from the distance kind.
    pub bound_norm: Option<NormKind>,
    pub estimate: SampleConfig,
    pub sweep: Vec<f64>,
    pub experiment_seeds: usize,
    /// The key/value pairs that were set explicitly, for the manifest.
    pub explicit: BTreeMap<String, String>,
    sbm_seed: Option<u64>,
    data_dir: Option<PathBuf>,
    data_scaling: FeatureScaling,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSource::Sbm(SbmConfig::default()),
            data_name: None,
            model_path: None,
            model_kind: ModelKind::Gcn,
            gcorn: false,
            train: TrainConfig::default(),
            attack: AttackSpec::default(),
            attack_trials: 10,
            bound: BoundQuery::feature(0.1, 0.5, NormKind::Infinity),
            bound_norm: None,
            estimate: SampleConfig::default(),
            sweep: Vec::new(),
            experiment_seeds: 1,
            explicit: BTreeMap::new(),
            sbm_seed: None,
            data_dir: None,
            data_scaling: FeatureScaling::None,
        }
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed"),
    ("data.dir", "dataset directory with edges.txt, features.csv, labels.csv, split.txt"),
    ("data.scaling", "feature preprocessing: none | rows | standardize"),
    ("data.name", "dataset label used in reports"),
    ("sbm.blocks", "comma-separated block sizes"),
    ("sbm.p_in", "edge probability inside a block"),
    ("sbm.p_out", "edge probability across blocks"),
    ("sbm.features", "gaussian | sparse"),
    ("sbm.dim", "feature dimension"),
    ("sbm.separation", "Gaussian mean offset in standard deviations"),
    ("sbm.std", "Gaussian standard deviation"),
    ("sbm.p_signal", "sparse features: firing probability inside the block band"),
    ("sbm.p_noise", "sparse features: firing probability elsewhere"),
    ("sbm.scaling", "feature preprocessing: none | rows | standardize"),
    ("sbm.train_per_class", "training nodes per class"),
    ("sbm.val_per_class", "validation nodes per class"),
    ("sbm.seed", "generator seed (defaults to seed)"),
    ("model.path", "saved model file"),
    ("model.kind", "gcn | gin"),
    ("model.gcorn", "apply Björck projection in every forward pass"),
    ("model.hidden", "hidden width"),
    ("train.epochs", "training epochs"),
    ("train.lr", "Adam learning rate"),
    ("train.weight_decay", "L2 weight decay"),
    ("ortho.order", "Taylor order of the Björck step"),
    ("ortho.iterations", "Björck iterations"),
    ("ortho.prescale", "divide by a spectral-norm estimate first"),
    ("ortho.power_iters", "power-iteration steps for the spectral norm"),
    ("ortho.power_tol", "power-iteration tolerance"),
    ("attack.kind", "random_feature | pgd_feature | random_structural"),
    ("attack.scale", "Gaussian noise scale ψ"),
    ("attack.epsilon", "PGD per-row budget"),
    ("attack.rate", "PGD fraction of rows"),
    ("attack.flip_budget", "edge flips as a fraction of |E|"),
    ("attack.steps", "PGD steps"),
    ("attack.step_size", "PGD step length"),
    ("attack.norm", "PGD ball norm: one | two | infinity"),
    ("attack.trials", "independent attack trials"),
    ("bound.epsilon", "attack budget ε"),
    ("bound.sigma", "threshold σ"),
    ("bound.norm", "one | two | infinity"),
    ("bound.feature_bound", "B with ‖X‖ ≤ B"),
    ("bound.distance", "feature | structural | combined"),
    ("estimate.epsilon", "ball radius ε"),
    ("estimate.l_max", "samples per graph"),
    ("estimate.p", "row norm order, a number or inf"),
    ("estimate.sigma", "output-distance threshold σ"),
    ("estimate.sweep", "comma-separated radii for the sweep CSV"),
    ("estimate.alpha", "confidence α for the sample-size check"),
    ("estimate.r_ratio", "relative sub-ball radius for the sample-size check"),
    ("experiment.seeds", "number of consecutive seeds"),
];

impl RunConfig {
    fn from_sources(common: &Common) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = &common.config {
            if !path.is_file() {
                return Err(Error::Config(format!("config file {} not found", path.display())));
            }
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (key, value) in parse_config_text(&text, path)? {
                cfg.set(&key, &value)?;
            }
        }
        for item in &common.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = common.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        if let Some(d) = &common.data {
            cfg.set("data.dir", &d.display().to_string())?;
        }
        if let Some(m) = &common.model {
            cfg.set("model.path", &m.display().to_string())?;
        }
        cfg.finish()?;
        Ok(cfg)
    }

    /// Settings built from `key = value` pairs alone, as the CLI would.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.finish()?;
        Ok(cfg)
    }

    fn sbm_mut(&mut self) -> &mut SbmConfig {
        if !matches!(self.data, DataSource::Sbm(_)) {
            self.data = DataSource::Sbm(SbmConfig::default());
        }
        match &mut self.data {
            DataSource::Sbm(s) => s,
            DataSource::Dir { .. } => unreachable!(),
        }
    }

    /// Applies one setting. Unknown keys and unparsable values are
    /// configuration errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim().trim_matches('"');
        let f = || parse_num::<f64>(key, value);
        let u = || parse_num::<usize>(key, value);
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "data.dir" => self.data_dir = Some(PathBuf::from(value)),
            "data.scaling" => self.data_scaling = value.parse()?,
            "data.name" => self.data_name = Some(value.to_string()),
            "sbm.blocks" => {
                self.sbm_mut().block_sizes = parse_list(key, value)?;
            }
            "sbm.p_in" => self.sbm_mut().p_in = f()?,
            "sbm.p_out" => self.sbm_mut().p_out = f()?,
            "sbm.features" => {
                let dim = sbm_dim(&self.sbm_mut().features);
                self.sbm_mut().features = match value {
                    "gaussian" => FeatureModel::Gaussian {
                        dim,
                        separation: 3.0,
                        std: 1.0,
                    },
                    "sparse" | "sparse_binary" => FeatureModel::SparseBinary {
                        dim,
                        p_signal: 0.2,
                        p_noise: 0.01,
                    },
                    other => return Err(Error::Config(format!("{key}: unknown feature model {other:?}"))),
                };
            }
            "sbm.dim" => {
                let d = u()?;
                match &mut self.sbm_mut().features {
                    FeatureModel::Gaussian { dim, .. } | FeatureModel::SparseBinary { dim, .. } => *dim = d,
                }
            }
            "sbm.separation" | "sbm.std" => {
                let v = f()?;
                match &mut self.sbm_mut().features {
                    FeatureModel::Gaussian { separation, std, .. } => {
                        *(if key == "sbm.std" { std } else { separation }) = v
                    }
                    _ => return Err(Error::Config(format!("{key} applies to gaussian features only"))),
                }
            }
            "sbm.p_signal" | "sbm.p_noise" => {
                let v = f()?;
                match &mut self.sbm_mut().features {
                    FeatureModel::SparseBinary { p_signal, p_noise, .. } => {
                        *(if key == "sbm.p_signal" { p_signal } else { p_noise }) = v
                    }
                    _ => return Err(Error::Config(format!("{key} applies to sparse features only"))),
                }
            }
            "sbm.scaling" => self.sbm_mut().scaling = value.parse()?,
            "sbm.train_per_class" => self.sbm_mut().train_per_class = u()?,
            "sbm.val_per_class" => self.sbm_mut().val_per_class = u()?,
            "sbm.seed" => self.sbm_seed = Some(parse_num(key, value)?),
            "model.path" => self.model_path = Some(PathBuf::from(value)),
            "model.kind" => {
                self.model_kind = value.parse().map_err(|_| Error::Config(format!("{key}: unknown model kind {value:?}")))?
            }
            "model.gcorn" => self.gcorn = parse_bool(key, value)?,
            "model.hidden" => self.train.hidden = u()?,
            "train.epochs" => self.train.epochs = u()?,
            "train.lr" => self.train.learning_rate = f()?,
            "train.weight_decay" => self.train.weight_decay = f()?,
            "ortho.order" => self.train.ortho.order = u()?,
            "ortho.iterations" => self.train.ortho.iterations = u()?,
            "ortho.prescale" => self.train.ortho.prescale = parse_bool(key, value)?,
            "ortho.power_iters" => self.train.ortho.power_iters = u()?,
            "ortho.power_tol" => self.train.ortho.power_tol = f()?,
            "attack.kind" => self.attack.kind = value.parse::<AttackKind>()?,
            "attack.scale" => self.attack.scale = f()?,
            "attack.epsilon" => self.attack.epsilon = f()?,
            "attack.rate" => self.attack.rate = f()?,
            "attack.flip_budget" => self.attack.flip_budget = f()?,
            "attack.steps" => self.attack.steps = u()?,
            "attack.step_size" => self.attack.step_size = Some(f()?),
            "attack.norm" => self.attack.norm = value.parse()?,
            "attack.trials" => self.attack_trials = u()?,
            "bound.epsilon" => self.bound.epsilon = f()?,
            "bound.sigma" => self.bound.sigma = f()?,
            "bound.norm" => self.bound_norm = Some(value.parse()?),
            "bound.feature_bound" => self.bound.feature_bound = Some(f()?),
            "bound.distance" => self.bound.distance = value.parse()?,
            "estimate.epsilon" => self.estimate.epsilon = f()?,
            "estimate.l_max" => self.estimate.l_max = u()?,
            "estimate.p" => self.estimate.p = value.parse::<NormOrder>()?,
            "estimate.sigma" => self.estimate.sigma = f()?,
            "estimate.sweep" => self.sweep = parse_list(key, value)?,
            "estimate.alpha" => self.estimate.alpha = f()?,
            "estimate.r_ratio" => self.estimate.r_ratio = Some(f()?),
            "experiment.seeds" => self.experiment_seeds = u()?,
            other => {
                return Err(Error::Config(format!(
                    "unknown key {other:?}; known keys: {}",
                    KEYS.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
                )))
            }
        }
        self.explicit.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Propagates the seed, resolves the data source and checks that
    /// referenced files exist.
    fn finish(&mut self) -> Result<()> {
        if let Some(dir) = &self.data_dir {
            self.data = DataSource::Dir {
                path: dir.clone(),
                scaling: self.data_scaling,
            };
        }
        let seed = self.seed;
        let sbm_seed = self.sbm_seed.unwrap_or(seed);
        if let DataSource::Sbm(s) = &mut self.data {
            s.seed = sbm_seed;
        }
        self.train.seed = seed;
        self.attack.seed = seed;
        self.estimate.seed = seed;
        self.bound.norm = self.bound_norm.unwrap_or(match self.bound.distance {
            DistanceKind::Feature => NormKind::Infinity,
            _ => NormKind::Two,
        });
        self.train.validate().map_err(config_error)?;
        self.attack.validate().map_err(config_error)?;
        self.estimate.validate().map_err(config_error)?;
        if self.attack_trials == 0 {
            return Err(Error::Config("attack.trials must be at least 1".into()));
        }
        if self.experiment_seeds == 0 {
            return Err(Error::Config("experiment.seeds must be at least 1".into()));
        }
        if let DataSource::Dir { path, .. } = &self.data {
            let paths = DatasetPaths::in_dir(path);
            for p in [&paths.edges, &paths.features, &paths.labels, &paths.split] {
                if !p.is_file() {
                    return Err(Error::Config(format!("dataset file {} not found", p.display())));
                }
            }
        }
        if let Some(p) = &self.model_path {
            if !p.is_file() {
                return Err(Error::Config(format!("model file {} not found", p.display())));
            }
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Dir { path, scaling } => load_dataset(&DatasetPaths::in_dir(path), *scaling),
            DataSource::Sbm(s) => generate_sbm(s),
        }
    }

    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.data_name {
            return n.clone();
        }
        match &self.data {
            DataSource::Dir { path, .. } => path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "data".into()),
            DataSource::Sbm(_) => "sbm".into(),
        }
    }

    fn require_model(&self) -> Result<Model> {
        let path = self
            .model_path
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs model.path (or --model)".into()))?;
        load_model(path)
    }

    fn sweep_points(&self) -> Vec<f64> {
        if self.sweep.is_empty() {
            vec![self.estimate.epsilon]
        } else {
            self.sweep.clone()
        }
    }
}

fn sbm_dim(f: &FeatureModel) -> usize {
    match f {
        FeatureModel::Gaussian { dim, .. } | FeatureModel::SparseBinary { dim, .. } => *dim,
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Validation(m) => Error::Config(m),
        other => other,
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_config_text(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `key = value`".into(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    write_text(&path, text)?;
    written.push(path);
    Ok(())
}

fn model_label(model: &Model) -> String {
    if model.gcorn {
        "gcorn".into()
    } else {
        match model.kind {
            ModelKind::Gcn => "gcn".into(),
            ModelKind::Gin => "gin".into(),
        }
    }
}

fn fresh_model(cfg: &RunConfig, data: &Dataset, gcorn: bool, seed: u64) -> Result<Model> {
    let mut m = Model::standard(
        cfg.model_kind,
        data.features.dim(),
        cfg.train.hidden,
        data.num_classes,
        gcorn,
        seed,
    )?;
    m.ortho = cfg.train.ortho;
    Ok(m)
}

fn split_accuracy(model: &Model, data: &Dataset, mask: &[usize]) -> Result<Option<f64>> {
    if mask.is_empty() {
        Ok(None)
    } else {
        accuracy(model, data, mask).map(Some)
    }
}

fn cmd_train(cfg: &RunConfig, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let data = cfg.load_data()?;
    let init = fresh_model(cfg, &data, cfg.gcorn, cfg.seed)?;
    let trained = train(&init, &data, &cfg.train)?;
    let path = out.join("model.json");
    save_model(&trained.model, &path)?;
    written.push(path);

    let mut csv = String::from("epoch,loss,val_accuracy\n");
    for r in &trained.history {
        let val = r.val_accuracy.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{}", r.epoch, r.loss, val);
    }
    emit(out.join("training_curve.csv"), &csv, written)?;

    let metrics = json!({
        "model": model_label(&trained.model),
        "dataset": cfg.dataset_name(),
        "train_accuracy": split_accuracy(&trained.model, &data, &data.split.train)?,
        "val_accuracy": split_accuracy(&trained.model, &data, &data.split.val)?,
        "test_accuracy": split_accuracy(&trained.model, &data, &data.split.test)?,
        "final_loss": trained.history.last().map(|r| r.loss),
    });
    emit(out.join("metrics.json"), &serde_json::to_string_pretty(&metrics)?, written)
}

fn cmd_project(cfg: &RunConfig, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let model = cfg.require_model()?;
    let ortho = cfg.train.ortho;
    let mut layers = Vec::new();
    let mut report = Vec::new();
    for (i, w) in model.layers.iter().enumerate() {
        let trace = bjorck_trace(w, &ortho).map_err(|e| match e {
            Error::Convergence { iteration, defect, .. } => Error::Convergence {
                layer: i,
                iteration,
                defect,
            },
            other => other,
        })?;
        report.push(json!({
            "layer": i,
            "rows": w.rows(),
            "cols": w.cols(),
            "spectral_norm_before": exact_spectral_norm(w),
            "defect_before": ortho_defect(w),
            "defect_after": ortho_defect(&trace.output),
            "defects": trace.defects,
        }));
        layers.push(trace.output);
    }
    let projected = Model {
        layers,
        gcorn: false,
        ..model
    };
    let path = out.join("projected_model.json");
    save_model(&projected, &path)?;
    written.push(path);
    let doc = json!({ "ortho": ortho, "layers": report });
    emit(out.join("projection.json"), &serde_json::to_string_pretty(&doc)?, written)
}

/// Writes `bound.json` and returns the report.
pub fn cmd_bound(cfg: &RunConfig, out: &Path, written: &mut Vec<PathBuf>) -> Result<BoundReport> {
    let model = cfg.require_model()?;
    let data = cfg.load_data()?;
    let report = bound_for(&model, &data.graph, Some(&data.features), &cfg.bound)?;
    let text = report.to_json()?;
    println!("{text}");
    emit(out.join("bound.json"), &text, written)?;
    Ok(report)
}

fn cmd_attack(cfg: &RunConfig, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let model = cfg.require_model()?;
    let data = cfg.load_data()?;
    let summary = attacked_accuracy(&model, &data, &cfg.attack, cfg.attack_trials)?;
    let mut csv = String::from("attack,dataset,model,mean,std,trials\n");
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{}",
        cfg.attack.kind.name(),
        cfg.dataset_name(),
        model_label(&model),
        summary.mean,
        summary.std,
        summary.trials
    );
    print!("{csv}");
    emit(out.join("attack.csv"), &csv, written)
}

#[derive(Serialize)]
struct EstimateRecord {
    adv: f64,
    stderr: f64,
    l_max: usize,
    epsilon: f64,
    sigma: f64,
    p: NormOrder,
    seed: u64,
    required_samples: Option<u64>,
}

fn sweep(model: &Model, data: &Dataset, cfg: &SampleConfig, points: &[f64]) -> Result<Vec<RobustnessEstimate>> {
    points
        .iter()
        .map(|&epsilon| estimate_model_adv(model, data, &SampleConfig { epsilon, ..*cfg }))
        .collect()
}

fn cmd_estimate(cfg: &RunConfig, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let model = cfg.require_model()?;
    let data = cfg.load_data()?;
    let est = estimate_model_adv(&model, &data, &cfg.estimate)?;
    let needed = match cfg.estimate.r_ratio {
        Some(r) => Some(required_samples(cfg.estimate.alpha, r, data.features.dim())?),
        None => None,
    };
    let rec = EstimateRecord {
        adv: est.adv,
        stderr: est.stderr,
        l_max: cfg.estimate.l_max,
        epsilon: cfg.estimate.epsilon,
        sigma: cfg.estimate.sigma,
        p: cfg.estimate.p,
        seed: cfg.estimate.seed,
        required_samples: needed,
    };
    let text = serde_json::to_string_pretty(&rec)?;
    println!("{text}");
    emit(out.join("estimate.json"), &text, written)?;

    let mut csv = String::from("epsilon,adv,stderr,l_max\n");
    for e in sweep(&model, &data, &cfg.estimate, &cfg.sweep_points())? {
        let _ = writeln!(csv, "{},{},{},{}", e.config.epsilon, e.adv, e.stderr, e.config.l_max);
    }
    emit(out.join("sweep.csv"), &csv, written)
}

#[derive(Serialize)]
struct ExperimentRun {
    seed: u64,
    model: String,
    clean_accuracy: f64,
    attacked_mean: f64,
    attacked_std: f64,
    trials: usize,
    bound: BoundReport,
    estimates: Vec<SweepPoint>,
}

#[derive(Serialize)]
struct SweepPoint {
    epsilon: f64,
    adv: f64,
    stderr: f64,
}

fn cmd_experiment(cfg: &RunConfig, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let data = cfg.load_data()?;
    if data.split.test.is_empty() {
        return Err(Error::Config("the experiment needs a non-empty test split".into()));
    }
    let bound_query = BoundQuery {
        norm: NormKind::Infinity,
        distance: DistanceKind::Feature,
        ..cfg.bound
    };
    let points = cfg.sweep_points();
    let mut runs = Vec::new();
    let mut results = String::from("seed,model,clean_accuracy,attacked_mean,attacked_std,trials,gamma\n");
    let mut estimates = String::from("seed,model,epsilon,adv,stderr,l_max\n");
    let model_dir = out.join("models");
    fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
    for i in 0..cfg.experiment_seeds {
        let seed = cfg.seed + i as u64;
        for gcorn in [false, true] {
            let init = fresh_model(cfg, &data, gcorn, seed)?;
            let trained = train(&init, &data, &TrainConfig { seed, ..cfg.train })?.model;
            let label = model_label(&trained);
            let path = model_dir.join(format!("{label}_seed{seed}.json"));
            save_model(&trained, &path)?;
            written.push(path);

            let clean = accuracy(&trained, &data, &data.split.test)?;
            let attacked = attacked_accuracy(&trained, &data, &cfg.attack.with_seed(seed), cfg.attack_trials)?;
            let bound = gcn_feature_bound(&trained, &data.graph, &bound_query)?;
            let est_cfg = SampleConfig { seed, ..cfg.estimate };
            let est = sweep(&trained, &data, &est_cfg, &points)?;
            let _ = writeln!(
                results,
                "{seed},{label},{clean},{},{},{},{}",
                attacked.mean, attacked.std, attacked.trials, bound.gamma
            );
            for e in &est {
                let _ = writeln!(estimates, "{seed},{label},{},{},{},{}", e.config.epsilon, e.adv, e.stderr, e.config.l_max);
            }
            runs.push(ExperimentRun {
                seed,
                model: label,
                clean_accuracy: clean,
                attacked_mean: attacked.mean,
                attacked_std: attacked.std,
                trials: attacked.trials,
                bound,
                estimates: est
                    .iter()
                    .map(|e| SweepPoint {
                        epsilon: e.config.epsilon,
                        adv: e.adv,
                        stderr: e.stderr,
                    })
                    .collect(),
            });
        }
    }
    emit(out.join("results.csv"), &results, written)?;
    emit(out.join("estimates.csv"), &estimates, written)?;

    let mean_of = |label: &str, f: fn(&ExperimentRun) -> f64| {
        let v: Vec<f64> = runs.iter().filter(|r| r.model == label).map(f).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let summary = json!({
        "gcn_clean": mean_of("gcn", |r| r.clean_accuracy),
        "gcorn_clean": mean_of("gcorn", |r| r.clean_accuracy),
        "gcn_attacked": mean_of("gcn", |r| r.attacked_mean),
        "gcorn_attacked": mean_of("gcorn", |r| r.attacked_mean),
    });
    let report = json!({
        "dataset": cfg.dataset_name(),
        "attack": cfg.attack,
        "estimate": cfg.estimate,
        "sweep": points,
        "summary": summary,
        "runs": runs,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    emit(out.join("report.json"), &serde_json::to_string_pretty(&report)?, written)
}

fn cmd_gen_sbm(cfg: &RunConfig, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let sbm = match &cfg.data {
        DataSource::Sbm(s) => s,
        DataSource::Dir { .. } => return Err(Error::Config("gen-sbm does not read data.dir".into())),
    };
    let data = generate_sbm(sbm)?;
    let paths = save_dataset(&data, out)?;
    written.extend([paths.edges, paths.features, paths.labels, paths.split]);
    Ok(())
}
