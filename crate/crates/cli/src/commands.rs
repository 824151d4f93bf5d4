//! The five user-facing commands. Each takes fully resolved options and
//! writes its human-readable report to `out`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use secn_core::data::{
    encode_all, generate_synthetic, parse_criteo, prepare, split_train_valid, write_criteo, DatasetSchema, RawRecord,
    SyntheticSpec,
};
use secn_core::metrics::{auc, EvalMetrics, ScoredLabel};
use secn_core::models::{AttentionModel, FmConfig, FmModel, ModelConfig, ModelKind, SepCrossModel};
use secn_core::numeric::{Activation, SeededRng};
use secn_core::training::{grad_check, GradCheckInstance, GradCheckOptions, GradCheckReport, TrainConfig, TrainReport};

use crate::checkpoint::{self, Checkpoint, CheckpointSummary};
use crate::error::{CliError, CliResult};
use crate::model::AnyModel;

/// Header row of the per-epoch metrics table.
pub const METRICS_HEADER: &str = "epoch,train_logloss,valid_logloss,valid_auc";

/// Where a run's validation data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidSource {
    File(PathBuf),
    /// Hold out this fraction of the training file.
    Split(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub train: PathBuf,
    pub valid: ValidSource,
    pub schema: DatasetSchema,
    pub model: ModelKind,
    /// Cross-network and attention settings; `schema` here is ignored in favor of the field above.
    pub model_config: ModelConfig,
    pub fm_k: usize,
    pub train_config: TrainConfig,
    pub out: PathBuf,
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub checkpoint: Checkpoint,
    pub rejected_lines: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub kinds: Vec<ModelKind>,
    pub instance: GradCheckInstance,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthPattern {
    /// Gaussian pairwise latents.
    Planted,
    /// All latents zero; labels depend only on the bias.
    Zero,
    /// Two-field parity; schema flags are ignored.
    Xor,
}

impl SynthPattern {
    pub fn name(self) -> &'static str {
        match self {
            SynthPattern::Planted => "planted",
            SynthPattern::Zero => "zero",
            SynthPattern::Xor => "xor",
        }
    }
}

impl FromStr for SynthPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "planted" => Ok(SynthPattern::Planted),
            "zero" => Ok(SynthPattern::Zero),
            "xor" => Ok(SynthPattern::Xor),
            other => Err(format!("unknown pattern `{other}` (expected planted, zero or xor)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub out: PathBuf,
    pub n: usize,
    pub schema: DatasetSchema,
    pub k_true: usize,
    pub latent_scale: f64,
    pub bias: f64,
    pub seed: u64,
    pub latent_seed: u64,
    pub pattern: SynthPattern,
    /// Fraction of field pairs that interact.
    pub pair_density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutcome {
    pub meta_path: PathBuf,
    pub n: usize,
    pub positives: usize,
    pub bayes_auc: Option<f64>,
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn check_readable(path: &Path) -> CliResult<()> {
    let meta = std::fs::metadata(path).map_err(|e| data_err(path, e))?;
    if !meta.is_file() {
        return Err(data_err(path, "not a regular file"));
    }
    File::open(path).map(drop).map_err(|e| data_err(path, e))
}

fn check_writable_dir(path: &Path) -> CliResult<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(CliError::Usage(format!(
            "{}: parent directory {} does not exist",
            path.display(),
            parent.display()
        )));
    }
    if path.is_dir() {
        return Err(CliError::Usage(format!("{}: is a directory", path.display())));
    }
    Ok(())
}

fn describe_width(width: usize) -> String {
    format!("{width} columns: label + {} features", width.saturating_sub(1))
}

/// Compares the column count of the first non-empty line against `schema`.
fn check_file_schema(path: &Path, schema: &DatasetSchema, expected_from: &str) -> CliResult<()> {
    let reader = BufReader::new(File::open(path).map_err(|e| data_err(path, e))?);
    for line in reader.lines() {
        let line = line.map_err(|e| data_err(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let width = line.split('\t').count();
        if width != schema.line_width() {
            return Err(CliError::Data(format!(
                "{}: data schema ({}) does not match {expected_from} schema {schema} ({})",
                path.display(),
                describe_width(width),
                describe_width(schema.line_width())
            )));
        }
        return Ok(());
    }
    Err(data_err(path, "no records"))
}

/// Parses a Criteo TSV file, reporting rejected lines on stderr.
pub fn read_records(path: &Path, schema: &DatasetSchema) -> CliResult<(Vec<RawRecord>, usize)> {
    let file = File::open(path).map_err(|e| data_err(path, e))?;
    let parsed = parse_criteo(BufReader::new(file), schema).map_err(|e| data_err(path, e))?;
    let rejected = parsed.rejects.len();
    if rejected > 0 {
        eprintln!(
            "warning: {}: skipped {rejected} malformed line(s); first: {}",
            path.display(),
            parsed.rejects[0]
        );
    }
    if parsed.records.is_empty() {
        return Err(data_err(path, "no valid records"));
    }
    Ok((parsed.records, rejected))
}

fn build_model(opts: &TrainOptions) -> CliResult<AnyModel> {
    let mut rng = SeededRng::new(opts.train_config.seed);
    let config = ModelConfig { schema: opts.schema.clone(), ..opts.model_config.clone() };
    Ok(match opts.model {
        ModelKind::SepCross => AnyModel::SepCross(SepCrossModel::new(config, &mut rng)?),
        ModelKind::Attention => AnyModel::Attention(AttentionModel::new(config, &mut rng)?),
        ModelKind::Fm => AnyModel::Fm(FmModel::new(FmConfig { schema: opts.schema.clone(), k: opts.fm_k }, &mut rng)?),
    })
}

fn fmt_auc(auc: Option<f64>) -> String {
    auc.map_or_else(|| "undefined".to_string(), |a| a.to_string())
}

/// Renders the per-epoch metrics table as CSV.
pub fn metrics_csv(report: &TrainReport) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for e in &report.epochs {
        s.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch,
            e.train_logloss,
            e.valid_logloss,
            fmt_auc(e.valid_auc)
        ));
    }
    s
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| data_err(path, e))
}

fn report_io(e: std::io::Error) -> CliError {
    CliError::Data(format!("cannot write report: {e}"))
}

/// Runs the full parse → prepare → fit pipeline and writes the checkpoint.
pub fn cmd_train(opts: &TrainOptions, out: &mut dyn Write) -> CliResult<TrainOutcome> {
    opts.schema.validate()?;
    opts.train_config.validate()?;
    check_readable(&opts.train)?;
    if let ValidSource::File(v) = &opts.valid {
        check_readable(v)?;
    }
    if let ValidSource::Split(frac) = opts.valid {
        if !(frac > 0.0 && frac < 1.0) {
            return Err(CliError::Usage(format!("--valid-frac must lie in (0, 1), got {frac}")));
        }
    }
    check_writable_dir(&opts.out)?;
    if let Some(m) = &opts.metrics_out {
        check_writable_dir(m)?;
    }
    let mut model = build_model(opts)?;
    check_file_schema(&opts.train, &opts.schema, "configured")?;

    let (records, mut rejected) = read_records(&opts.train, &opts.schema)?;
    let (train_raw, valid_raw) = match &opts.valid {
        ValidSource::File(path) => {
            check_file_schema(path, &opts.schema, "configured")?;
            let (valid, r) = read_records(path, &opts.schema)?;
            rejected += r;
            (records, valid)
        }
        ValidSource::Split(frac) => {
            let mut rng = SeededRng::new(opts.train_config.seed);
            split_train_valid(&records, *frac, &mut rng)?
        }
    };
    let data = prepare(&train_raw, &valid_raw, &opts.schema);
    writeln!(
        out,
        "training {} on {} rows, validating on {} rows ({})",
        opts.model,
        data.train.len(),
        data.valid.len(),
        opts.schema
    )
    .map_err(report_io)?;

    let report = model.fit(&data.train, &data.valid, &opts.train_config)?;
    for e in &report.epochs {
        writeln!(
            out,
            "epoch {:>3}  train_logloss {:.6}  valid_logloss {:.6}  valid_auc {}",
            e.epoch,
            e.train_logloss,
            e.valid_logloss,
            e.valid_auc.map_or_else(|| "undefined".into(), |a| format!("{a:.6}"))
        )
        .map_err(report_io)?;
    }
    let best = report.best();
    writeln!(
        out,
        "best epoch {}: valid_logloss {:.6}; checkpoint {}",
        best.epoch,
        best.valid_logloss,
        opts.out.display()
    )
    .map_err(report_io)?;

    let ckpt = Checkpoint { model, stats: data.stats, seed: opts.train_config.seed };
    checkpoint::save(&opts.out, &ckpt)?;
    if let Some(path) = &opts.metrics_out {
        write_file(path, metrics_csv(&report).as_bytes())?;
    }
    Ok(TrainOutcome { report, checkpoint: ckpt, rejected_lines: rejected })
}

fn eval_text(m: &EvalMetrics) -> String {
    format!(
        "logloss = {}\nauc = {}\nn = {}\nn_pos = {}\n",
        m.logloss,
        fmt_auc(m.auc),
        m.n,
        m.n_pos
    )
}

/// Scores a data file with a saved checkpoint.
pub fn cmd_eval(opts: &EvalOptions, out: &mut dyn Write) -> CliResult<EvalMetrics> {
    check_readable(&opts.checkpoint)?;
    check_readable(&opts.data)?;
    if let Some(m) = &opts.metrics_out {
        check_writable_dir(m)?;
    }
    let ckpt = checkpoint::load(&opts.checkpoint)?;
    let schema = ckpt.model.schema().clone();
    check_file_schema(&opts.data, &schema, "checkpoint")?;
    let (records, _) = read_records(&opts.data, &schema)?;
    let examples = encode_all(&records, &schema, &ckpt.stats);
    let metrics = ckpt.model.evaluate(&examples)?;
    let text = eval_text(&metrics);
    out.write_all(text.as_bytes()).map_err(report_io)?;
    if let Some(path) = &opts.metrics_out {
        write_file(path, text.as_bytes())?;
    }
    Ok(metrics)
}

/// Finite-difference gradient check; fails with a numeric error if any group exceeds tolerance.
pub fn cmd_gradcheck(opts: &GradcheckOptions, out: &mut dyn Write) -> CliResult<Vec<GradCheckReport>> {
    let options = GradCheckOptions::default();
    let mut reports = Vec::new();
    for &kind in &opts.kinds {
        let report = grad_check(kind, &opts.instance, opts.seed, &options)?;
        writeln!(out, "{kind}: {}", if report.passed { "pass" } else { "FAIL" }).map_err(report_io)?;
        for g in &report.groups {
            writeln!(out, "  {:<14} {:>6} coords  max_rel_error {:.3e}", g.group, g.checked, g.max_rel_error)
                .map_err(report_io)?;
        }
        reports.push(report);
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.kind.to_string()).collect();
    if !failed.is_empty() {
        return Err(CliError::Numeric(format!(
            "gradient check failed for {} (tolerance {:e})",
            failed.join(", "),
            options.tolerance
        )));
    }
    Ok(reports)
}

fn synth_spec(opts: &SynthOptions) -> CliResult<SyntheticSpec> {
    let spec = match opts.pattern {
        SynthPattern::Xor => SyntheticSpec::xor_parity(opts.seed, opts.n),
        SynthPattern::Planted | SynthPattern::Zero => {
            let scale = if opts.pattern == SynthPattern::Zero { 0.0 } else { opts.latent_scale };
            SyntheticSpec::planted(
                opts.schema.clone(),
                opts.k_true,
                scale,
                opts.bias,
                opts.latent_seed,
                opts.seed,
                opts.n,
            )?
            .with_sparse_pairs(opts.pair_density, opts.latent_seed.wrapping_add(1))?
        }
    };
    Ok(spec)
}

/// Path of the metadata file written next to a synthetic dataset.
pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut name = data.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

/// Generates a planted dataset in Criteo format plus a `key = value` sidecar.
pub fn cmd_synth(opts: &SynthOptions, out: &mut dyn Write) -> CliResult<SynthOutcome> {
    if opts.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    check_writable_dir(&opts.out)?;
    let spec = synth_spec(opts)?;
    let data = generate_synthetic(&spec)?;
    let pairs: Vec<ScoredLabel> = data
        .true_logits
        .iter()
        .zip(&data.examples)
        .map(|(&l, e)| ScoredLabel::new(l, e.label))
        .collect();
    let positives = data.examples.iter().filter(|e| e.label == 1).count();
    let bayes_auc = auc(&pairs).ok();

    let file = File::create(&opts.out).map_err(|e| data_err(&opts.out, e))?;
    let mut w = BufWriter::new(file);
    write_criteo(&mut w, &data.records).map_err(|e| data_err(&opts.out, e))?;
    w.flush().map_err(|e| data_err(&opts.out, e))?;

    let buckets: Vec<String> = spec.schema.buckets_per_field.iter().map(usize::to_string).collect();
    let meta = format!(
        "pattern = {}\nseed = {}\nlatent_seed = {}\nn = {}\npositives = {}\nbayes_auc = {}\n\
         schema_dense = {}\nschema_cats = {}\nbuckets = {}\nk_true = {}\nlatent_scale = {}\nbias = {}\n\
         pair_density = {}\nactive_pairs = {}\n",
        opts.pattern.name(),
        opts.seed,
        opts.latent_seed,
        opts.n,
        positives,
        fmt_auc(bayes_auc),
        spec.schema.num_dense,
        spec.schema.num_categorical,
        buckets.join(","),
        spec.k_true(),
        opts.latent_scale,
        spec.bias,
        opts.pair_density,
        spec.active_pairs(),
    );
    let meta_path = sidecar_path(&opts.out);
    write_file(&meta_path, meta.as_bytes())?;
    writeln!(
        out,
        "wrote {} rows ({positives} positive) to {}; bayes_auc {}",
        opts.n,
        opts.out.display(),
        fmt_auc(bayes_auc)
    )
    .map_err(report_io)?;
    Ok(SynthOutcome { meta_path, n: opts.n, positives, bayes_auc })
}

/// Reads a synthetic-data sidecar back as a key-value map.
pub fn read_sidecar(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

/// Prints a checkpoint's structure. Parameter values are never shown.
pub fn cmd_inspect(path: &Path, out: &mut dyn Write) -> CliResult<CheckpointSummary> {
    check_readable(path)?;
    let bytes = checkpoint::read_bytes(path)?;
    let summary = checkpoint::summarize(&bytes)?;
    let ckpt = checkpoint::decode(&bytes)?;
    let mut text = format!(
        "kind: {}\nformat_version: {}\nschema: {}\n",
        summary.kind, summary.version, summary.schema
    );
    match &ckpt.model {
        AnyModel::Fm(m) => text.push_str(&format!("k: {}\n", m.config.k)),
        AnyModel::SepCross(m) => text.push_str(&format!(
            "embed_dim: {}\ncross_layers: {}\nseparated: {}\ncross_activation: {}\ninclude_dense_as_field: {}\n",
            m.config.embed_dim,
            m.config.cross_layers,
            m.config.separated,
            m.config.cross_activation.name(),
            m.config.include_dense_as_field
        )),
        AnyModel::Attention(m) => text.push_str(&format!(
            "embed_dim: {}\ninclude_dense_as_field: {}\n",
            m.config.embed_dim, m.config.include_dense_as_field
        )),
    }
    text.push_str(&format!(
        "parameter_count: {}\nseed: {}\nchecksum: {:016x}\nslots:\n",
        summary.parameter_count, summary.seed, summary.checksum
    ));
    for (name, dims) in &summary.slots {
        let dims: Vec<String> = dims.iter().map(usize::to_string).collect();
        text.push_str(&format!("  {name}: [{}]\n", dims.join(" x ")));
    }
    out.write_all(text.as_bytes()).map_err(report_io)?;
    Ok(summary)
}

/// Activation names accepted on the command line.
pub fn parse_activation(s: &str) -> CliResult<Activation> {
    s.parse().map_err(|e: secn_core::Error| CliError::Usage(e.to_string()))
}
