//! Flag definitions and resolution into command options.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use secn_core::data::{DatasetSchema, DEFAULT_BUCKETS};
use secn_core::models::{ModelConfig, ModelKind};
use secn_core::training::{GradCheckInstance, Optimizer, TrainConfig};

use crate::commands::{
    cmd_eval, cmd_gradcheck, cmd_inspect, cmd_synth, cmd_train, parse_activation, EvalOptions, GradcheckOptions,
    SynthOptions, SynthPattern, TrainOptions, ValidSource,
};
use crate::config::{parse_buckets, ConfigFile};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "secn", version, about = "Train and evaluate CTR models with separated cross layers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Train a model on a Criteo-format file and write a checkpoint.
    Train(TrainArgs),
    /// Score a Criteo-format file with a checkpoint.
    Eval(EvalArgs),
    /// Compare analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic dataset with planted interactions.
    Synth(SynthArgs),
    /// Print a checkpoint's structure.
    Inspect(InspectArgs),
}

/// Keys accepted in a `train --config` file; same names as the flags.
pub const TRAIN_CONFIG_KEYS: &[&str] = &[
    "train",
    "valid",
    "valid-frac",
    "schema-dense",
    "schema-cats",
    "buckets",
    "model",
    "dim",
    "layers",
    "separated",
    "activation",
    "include-dense",
    "fm-k",
    "lr",
    "epochs",
    "batch",
    "l2",
    "seed",
    "optimizer",
    "patience",
    "out",
    "metrics-out",
];

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    /// `key = value` file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Separate validation file. Without it, a fraction of --train is held out.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Held-out fraction when --valid is absent [default: 0.2].
    #[arg(long)]
    pub valid_frac: Option<f64>,
    /// Number of integer columns [default: 13].
    #[arg(long)]
    pub schema_dense: Option<usize>,
    /// Number of categorical columns [default: 26].
    #[arg(long)]
    pub schema_cats: Option<usize>,
    /// Hash buckets per field: one value, or a comma list with one per field [default: 100000].
    #[arg(long)]
    pub buckets: Option<String>,
    /// sepcross, fm or attn [default: sepcross].
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Embedding dimension [default: 8].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Cross layers [default: 2].
    #[arg(long)]
    pub layers: Option<usize>,
    /// Give each embedding column its own cross weights [default: true].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub separated: Option<bool>,
    /// Cross-layer activation: identity or relu [default: identity].
    #[arg(long)]
    pub activation: Option<String>,
    /// Feed dense features as an extra field row [default: true].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub include_dense: Option<bool>,
    /// FM latent size [default: --dim].
    #[arg(long)]
    pub fm_k: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// adam or sgd [default: adam].
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Epochs without validation improvement before stopping [default: 2].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch metrics CSV to write.
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Criteo-format file to score.
    #[arg(long, alias = "valid")]
    pub data: PathBuf,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check only this kind; all kinds when absent.
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = true)]
    pub separated: bool,
    #[arg(long, default_value = "identity")]
    pub activation: String,
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Criteo-format file to write; the sidecar goes to `<out>.meta`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub schema_dense: usize,
    #[arg(long, default_value_t = 6)]
    pub schema_cats: usize,
    /// One value, or a comma list with one per field. Bucket 0 is never drawn.
    #[arg(long, default_value = "20")]
    pub buckets: String,
    #[arg(long, default_value_t = 4)]
    pub k_true: usize,
    #[arg(long, default_value_t = 0.5)]
    pub latent_scale: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub bias: f64,
    /// Seeds label and bucket sampling.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Seeds the latent tables [default: --seed].
    #[arg(long)]
    pub latent_seed: Option<u64>,
    /// planted, zero or xor.
    #[arg(long, default_value = "planted")]
    pub pattern: SynthPattern,
    /// Fraction of field pairs that interact.
    #[arg(long, default_value_t = 1.0)]
    pub pair_density: f64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
}

fn parse_optimizer(s: &str) -> CliResult<Optimizer> {
    match s {
        "adam" => Ok(Optimizer::adam_default()),
        "sgd" => Ok(Optimizer::Sgd),
        other => Err(CliError::Usage(format!("unknown optimizer `{other}` (expected adam or sgd)"))),
    }
}

impl TrainArgs {
    /// Merges flags over the optional config file and applies defaults.
    pub fn resolve(self) -> CliResult<TrainOptions> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        file.check_keys(TRAIN_CONFIG_KEYS)?;

        let train = file
            .resolve(self.train, "train")?
            .ok_or_else(|| CliError::Usage("--train is required".into()))?;
        let out = file
            .resolve(self.out, "out")?
            .ok_or_else(|| CliError::Usage("--out is required".into()))?;
        let valid_path: Option<PathBuf> = file.resolve(self.valid, "valid")?;
        let valid_frac: Option<f64> = file.resolve(self.valid_frac, "valid-frac")?;
        let valid = match (valid_path, valid_frac) {
            (Some(_), Some(_)) => return Err(CliError::Usage("give either --valid or --valid-frac, not both".into())),
            (Some(p), None) => ValidSource::File(p),
            (None, frac) => ValidSource::Split(frac.unwrap_or(0.2)),
        };

        let num_dense = file.resolve_or(self.schema_dense, "schema-dense", 13)?;
        let num_cats = file.resolve_or(self.schema_cats, "schema-cats", 26)?;
        let buckets = file
            .resolve(self.buckets, "buckets")?
            .unwrap_or_else(|| DEFAULT_BUCKETS.to_string());
        let schema = DatasetSchema::new(num_dense, parse_buckets(&buckets, num_cats)?)?;

        let model = file.resolve_or(self.model, "model", ModelKind::SepCross)?;
        let mut model_config = ModelConfig::new(schema.clone());
        model_config.embed_dim = file.resolve_or(self.dim, "dim", model_config.embed_dim)?;
        model_config.cross_layers = file.resolve_or(self.layers, "layers", model_config.cross_layers)?;
        model_config.separated = file.resolve_or(self.separated, "separated", model_config.separated)?;
        model_config.include_dense_as_field =
            file.resolve_or(self.include_dense, "include-dense", model_config.include_dense_as_field)?;
        if let Some(a) = file.resolve::<String>(self.activation, "activation")? {
            model_config.cross_activation = parse_activation(&a)?;
        }
        let fm_k = file.resolve_or(self.fm_k, "fm-k", model_config.embed_dim)?;

        let defaults = TrainConfig::default();
        let optimizer = match file.resolve::<String>(self.optimizer, "optimizer")? {
            Some(name) => parse_optimizer(&name)?,
            None => defaults.optimizer,
        };
        let train_config = TrainConfig {
            learning_rate: file.resolve_or(self.lr, "lr", defaults.learning_rate)?,
            epochs: file.resolve_or(self.epochs, "epochs", defaults.epochs)?,
            batch_size: file.resolve_or(self.batch, "batch", defaults.batch_size)?,
            optimizer,
            l2: file.resolve_or(self.l2, "l2", defaults.l2)?,
            seed: file.resolve_or(self.seed, "seed", defaults.seed)?,
            early_stop_patience: file.resolve_or(self.patience, "patience", defaults.early_stop_patience)?,
        };
        train_config.validate()?;
        if model != ModelKind::Fm {
            model_config.validate()?;
        }
        Ok(TrainOptions {
            train,
            valid,
            schema,
            model,
            model_config,
            fm_k,
            train_config,
            out,
            metrics_out: file.resolve(self.metrics_out, "metrics-out")?,
        })
    }
}

impl GradcheckArgs {
    pub fn resolve(self) -> CliResult<GradcheckOptions> {
        let instance = GradCheckInstance {
            embed_dim: self.dim,
            cross_layers: self.layers,
            separated: self.separated,
            activation: parse_activation(&self.activation)?,
            ..GradCheckInstance::default()
        };
        Ok(GradcheckOptions {
            kinds: self.model.map_or_else(|| ModelKind::ALL.to_vec(), |k| vec![k]),
            instance,
            seed: self.seed,
        })
    }
}

impl SynthArgs {
    pub fn resolve(self) -> CliResult<SynthOptions> {
        let schema = DatasetSchema::new(self.schema_dense, parse_buckets(&self.buckets, self.schema_cats)?)?;
        Ok(SynthOptions {
            out: self.out,
            n: self.n,
            schema,
            k_true: self.k_true,
            latent_scale: self.latent_scale,
            bias: self.bias,
            seed: self.seed,
            latent_seed: self.latent_seed.unwrap_or(self.seed),
            pattern: self.pattern,
            pair_density: self.pair_density,
        })
    }
}

/// Executes a parsed command line.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args.resolve()?, out).map(drop),
        Command::Eval(args) => cmd_eval(
            &EvalOptions { checkpoint: args.checkpoint, data: args.data, metrics_out: args.metrics_out },
            out,
        )
        .map(drop),
        Command::Gradcheck(args) => cmd_gradcheck(&args.resolve()?, out).map(drop),
        Command::Synth(args) => cmd_synth(&args.resolve()?, out).map(drop),
        Command::Inspect(args) => cmd_inspect(&args.checkpoint, out).map(drop),
    }
}

/// Parses `args`, runs the command against stdout and returns the process exit status.
pub fn run_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
