//! Criteo-format ingestion, dense preprocessing, categorical hashing,
//! batching and planted-interaction synthetic datasets.
//!
//! A Criteo record is one tab-separated line: a `0`/`1` label, then
//! `num_dense` integer fields, then `num_categorical` token fields. Any
//! field except the label may be empty, meaning missing.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::numeric::{dot, sigmoid, DenseMatrix, SeededRng};

/// Default hash space per categorical field.
pub const DEFAULT_BUCKETS: usize = 100_000;

/// Bucket reserved for missing or unknown tokens.
pub const MISSING_BUCKET: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSchema {
    pub num_dense: usize,
    pub num_categorical: usize,
    pub buckets_per_field: Vec<usize>,
}

impl DatasetSchema {
    pub fn new(num_dense: usize, buckets_per_field: Vec<usize>) -> Result<Self> {
        let schema = Self {
            num_dense,
            num_categorical: buckets_per_field.len(),
            buckets_per_field,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// `num_categorical` fields that all share one bucket count.
    pub fn uniform(num_dense: usize, num_categorical: usize, buckets: usize) -> Result<Self> {
        Self::new(num_dense, vec![buckets; num_categorical])
    }

    /// The public Criteo layout: 13 integer and 26 categorical fields.
    pub fn criteo() -> Self {
        Self::uniform(13, 26, DEFAULT_BUCKETS).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_dense + self.num_categorical == 0 {
            return Err(Error::InvalidConfig(
                "schema needs at least one dense or categorical field".into(),
            ));
        }
        if self.buckets_per_field.len() != self.num_categorical {
            return Err(Error::InvalidConfig(format!(
                "{} bucket counts given for {} categorical fields",
                self.buckets_per_field.len(),
                self.num_categorical
            )));
        }
        if let Some(j) = self.buckets_per_field.iter().position(|&b| b < 2) {
            return Err(Error::InvalidConfig(format!(
                "field {j} needs at least 2 buckets (bucket 0 is reserved)"
            )));
        }
        if self.buckets_per_field.iter().any(|&b| b > u32::MAX as usize) {
            return Err(Error::InvalidConfig("bucket count exceeds u32".into()));
        }
        Ok(())
    }

    /// Columns in one TSV line, label included.
    pub fn line_width(&self) -> usize {
        1 + self.num_dense + self.num_categorical
    }
}

impl std::fmt::Display for DatasetSchema {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} dense + {} categorical",
            self.num_dense, self.num_categorical
        )?;
        let first = self.buckets_per_field.first();
        if let Some(&b) = first {
            if self.buckets_per_field.iter().all(|&x| x == b) {
                write!(f, " ({b} buckets each)")?;
            } else {
                write!(f, " (buckets {:?})", self.buckets_per_field)?;
            }
        }
        Ok(())
    }
}

/// One parsed line before any transform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub label: u8,
    pub dense: Vec<Option<i64>>,
    pub cats: Vec<Option<String>>,
}

/// A model-ready record.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub label: u8,
    /// Transformed dense features, `num_dense` long.
    pub dense: Vec<f64>,
    /// One bucket per categorical field.
    pub cats: Vec<u32>,
}

impl Example {
    pub fn check_schema(&self, schema: &DatasetSchema) -> Result<()> {
        if self.dense.len() != schema.num_dense || self.cats.len() != schema.num_categorical {
            return Err(Error::SchemaMismatch(format!(
                "example has {} dense / {} categorical, schema is {schema}",
                self.dense.len(),
                self.cats.len()
            )));
        }
        for (field, (&bucket, &rows)) in self.cats.iter().zip(&schema.buckets_per_field).enumerate() {
            if bucket as usize >= rows {
                return Err(Error::BucketOutOfRange {
                    field,
                    bucket: bucket as usize,
                    rows,
                });
            }
        }
        Ok(())
    }
}

/// Parses one TSV line. `line_no` is 1-based and only used for errors.
pub fn parse_criteo_line(line: &str, line_no: usize, schema: &DatasetSchema) -> Result<RawRecord> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != schema.line_width() {
        return Err(Error::Parse {
            line: line_no,
            reason: format!(
                "expected {} tab-separated fields, found {}",
                schema.line_width(),
                fields.len()
            ),
        });
    }
    let label = match fields[0] {
        "0" => 0,
        "1" => 1,
        other => {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("label must be 0 or 1, found `{other}`"),
            })
        }
    };
    let mut dense = Vec::with_capacity(schema.num_dense);
    for (i, raw) in fields[1..=schema.num_dense].iter().enumerate() {
        if raw.is_empty() {
            dense.push(None);
        } else {
            let v = raw.trim().parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                reason: format!("dense field {i}: `{raw}` is not an integer"),
            })?;
            dense.push(Some(v));
        }
    }
    let cats = fields[1 + schema.num_dense..]
        .iter()
        .map(|t| (!t.is_empty()).then(|| t.to_string()))
        .collect();
    Ok(RawRecord { label, dense, cats })
}

/// Records parsed from a file plus the lines that were rejected.
#[derive(Debug, Default)]
pub struct ParsedData {
    pub records: Vec<RawRecord>,
    pub rejects: Vec<Error>,
}

/// Parses every non-empty line; malformed lines are collected rather than fatal.
pub fn parse_criteo<R: BufRead>(reader: R, schema: &DatasetSchema) -> std::io::Result<ParsedData> {
    let mut out = ParsedData::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        match parse_criteo_line(&line, i + 1, schema) {
            Ok(r) => out.records.push(r),
            Err(e) => out.rejects.push(e),
        }
    }
    Ok(out)
}

/// Writes records back out as Criteo TSV.
pub fn write_criteo<W: Write>(mut w: W, records: &[RawRecord]) -> std::io::Result<()> {
    let mut line = String::new();
    for r in records {
        line.clear();
        line.push(if r.label == 1 { '1' } else { '0' });
        for v in &r.dense {
            line.push('\t');
            if let Some(v) = v {
                line.push_str(&v.to_string());
            }
        }
        for t in &r.cats {
            line.push('\t');
            if let Some(t) = t {
                line.push_str(t);
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

/// Log-compression applied before standardization: missing is 0, negatives clamp to 0.
#[inline]
pub fn transform_dense(raw: Option<i64>) -> f64 {
    match raw {
        None => 0.0,
        Some(v) => (v.max(0) as f64).ln_1p(),
    }
}

/// Per-feature mean and population standard deviation of the log-compressed values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DenseStats {
    /// Identity standardization for `n` features.
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn fit(records: &[RawRecord], num_dense: usize) -> Self {
        let mut mean = vec![0.0; num_dense];
        let mut m2 = vec![0.0; num_dense];
        // Welford, one pass.
        for (n, r) in records.iter().enumerate() {
            let count = (n + 1) as f64;
            for (j, &raw) in r.dense.iter().enumerate() {
                let x = transform_dense(raw);
                let delta = x - mean[j];
                mean[j] += delta / count;
                m2[j] += delta * (x - mean[j]);
            }
        }
        let n = records.len().max(1) as f64;
        let std = m2.iter().map(|s| (s / n).max(0.0).sqrt()).collect();
        Self { mean, std }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `(x - mean) / std`, with zero-variance features mapped to 0.
    #[inline]
    pub fn standardize(&self, j: usize, x: f64) -> f64 {
        if self.std[j] > 0.0 {
            (x - self.mean[j]) / self.std[j]
        } else {
            0.0
        }
    }
}

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Streaming FNV-1a 64-bit hasher.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a64(u64);

impl Default for Fnv1a64 {
    fn default() -> Self {
        Self(FNV_OFFSET_BASIS)
    }
}

impl Fnv1a64 {
    #[inline]
    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a64::default();
    h.update(bytes);
    h.finish()
}

/// Maps a token of field `field` into `[1, buckets)`. `None` maps to bucket 0.
pub fn hash_categorical(field: usize, token: Option<&[u8]>, buckets: usize) -> u32 {
    debug_assert!(buckets >= 2);
    let Some(token) = token.filter(|t| !t.is_empty()) else {
        return MISSING_BUCKET;
    };
    let mut h = Fnv1a64::default();
    h.update(&(field as u32).to_le_bytes());
    h.update(token);
    1 + (h.finish() % (buckets as u64 - 1)) as u32
}

/// Turns a raw record into an `Example` using train-split statistics.
pub fn encode(record: &RawRecord, schema: &DatasetSchema, stats: &DenseStats) -> Example {
    let dense = record
        .dense
        .iter()
        .enumerate()
        .map(|(j, &raw)| stats.standardize(j, transform_dense(raw)))
        .collect();
    let cats = record
        .cats
        .iter()
        .zip(&schema.buckets_per_field)
        .enumerate()
        .map(|(field, (tok, &buckets))| {
            hash_categorical(field, tok.as_deref().map(str::as_bytes), buckets)
        })
        .collect();
    Example {
        label: record.label,
        dense,
        cats,
    }
}

pub fn encode_all(records: &[RawRecord], schema: &DatasetSchema, stats: &DenseStats) -> Vec<Example> {
    records.iter().map(|r| encode(r, schema, stats)).collect()
}

/// Indices of one mini-batch into an example slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Splits `0..n` into batches; the last one may be short.
pub fn make_batches(
    n: usize,
    batch_size: usize,
    rng: &mut SeededRng,
    shuffle: bool,
) -> Result<Vec<Batch>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    let order: Vec<usize> = if shuffle {
        rng.permutation(n)
    } else {
        (0..n).collect()
    };
    Ok(order
        .chunks(batch_size)
        .map(|c| Batch {
            indices: c.to_vec(),
        })
        .collect())
}

/// Random disjoint split; both sides keep the input's relative order.
pub fn split_train_valid<T: Clone>(
    items: &[T],
    valid_fraction: f64,
    rng: &mut SeededRng,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "validation fraction must be in (0, 1), got {valid_fraction}"
        )));
    }
    let n = items.len();
    let n_valid = (n as f64 * valid_fraction).round() as usize;
    if n_valid == 0 || n_valid == n {
        return Err(Error::InvalidConfig(format!(
            "splitting {n} records at {valid_fraction} leaves one side empty"
        )));
    }
    let perm = rng.permutation(n);
    let mut in_valid = vec![false; n];
    for &i in &perm[..n_valid] {
        in_valid[i] = true;
    }
    let mut train = Vec::with_capacity(n - n_valid);
    let mut valid = Vec::with_capacity(n_valid);
    for (item, v) in items.iter().zip(in_valid) {
        if v {
            valid.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    Ok((train, valid))
}

/// Train and validation examples encoded with statistics fitted on the train side.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub stats: DenseStats,
}

/// Fits dense statistics on `train` and encodes both sides with them.
pub fn prepare(train: &[RawRecord], valid: &[RawRecord], schema: &DatasetSchema) -> PreparedData {
    let stats = DenseStats::fit(train, schema.num_dense);
    PreparedData {
        train: encode_all(train, schema, &stats),
        valid: encode_all(valid, schema, &stats),
        stats,
    }
}

/// Ground truth for a planted pairwise-interaction dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub schema: DatasetSchema,
    /// Per categorical field, a `buckets x k_true` latent table.
    pub latents: Vec<DenseMatrix>,
    /// Field-by-field interaction strength; only the upper triangle is read.
    pub pair_weights: DenseMatrix,
    pub bias: f64,
    pub seed: u64,
    pub n: usize,
}

impl SyntheticSpec {
    /// Latents drawn i.i.d. `Normal(0, scale^2)` from `latent_seed`.
    pub fn planted(
        schema: DatasetSchema,
        k_true: usize,
        scale: f64,
        bias: f64,
        latent_seed: u64,
        seed: u64,
        n: usize,
    ) -> Result<Self> {
        schema.validate()?;
        if k_true == 0 {
            return Err(Error::InvalidConfig("k_true must be at least 1".into()));
        }
        let mut rng = SeededRng::new(latent_seed);
        let latents = schema
            .buckets_per_field
            .iter()
            .map(|&b| DenseMatrix::gaussian(b, k_true, scale, &mut rng))
            .collect();
        let f = schema.num_categorical;
        Ok(Self {
            schema,
            latents,
            pair_weights: DenseMatrix::filled(f, f, 1.0),
            bias,
            seed,
            n,
        })
    }

    /// Two fields with two live buckets each; the interaction is `+4` when
    /// the buckets share parity and `-4` otherwise.
    pub fn xor_parity(seed: u64, n: usize) -> Self {
        let schema = DatasetSchema::uniform(0, 2, 3).expect("valid");
        let table = DenseMatrix::from_rows(&[vec![0.0], vec![2.0], vec![-2.0]]);
        Self {
            schema,
            latents: vec![table.clone(), table],
            pair_weights: DenseMatrix::filled(2, 2, 1.0),
            bias: 0.0,
            seed,
            n,
        }
    }

    /// Keeps each field pair active with probability `density`, silencing the rest.
    pub fn with_sparse_pairs(mut self, density: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::InvalidConfig(format!("pair density {density} outside [0, 1]")));
        }
        let f = self.schema.num_categorical;
        let mut rng = SeededRng::new(seed);
        let mut weights = DenseMatrix::zeros(f, f);
        for i in 0..f {
            for j in i + 1..f {
                if rng.next_uniform() < density {
                    weights.row_mut(i)[j] = 1.0;
                }
            }
        }
        self.pair_weights = weights;
        Ok(self)
    }

    /// Number of field pairs with a non-zero interaction weight.
    pub fn active_pairs(&self) -> usize {
        let f = self.schema.num_categorical;
        (0..f)
            .flat_map(|i| (i + 1..f).map(move |j| (i, j)))
            .filter(|&(i, j)| self.pair_weights[(i, j)] != 0.0)
            .count()
    }

    pub fn k_true(&self) -> usize {
        self.latents.first().map_or(1, DenseMatrix::cols)
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.latents.len() != self.schema.num_categorical {
            return Err(Error::InvalidConfig("one latent table per field required".into()));
        }
        let k = self.k_true();
        for (t, &b) in self.latents.iter().zip(&self.schema.buckets_per_field) {
            if t.rows() != b || t.cols() != k || !t.is_finite() {
                return Err(Error::InvalidConfig(
                    "latent tables must be buckets x k_true and finite".into(),
                ));
            }
        }
        let f = self.schema.num_categorical;
        if self.pair_weights.shape() != (f, f) || !self.pair_weights.is_finite() {
            return Err(Error::InvalidConfig("pair weights must be fields x fields and finite".into()));
        }
        if !self.bias.is_finite() {
            return Err(Error::InvalidConfig("bias must be finite".into()));
        }
        Ok(())
    }

    /// Ground-truth logit for a bucket assignment.
    pub fn true_logit(&self, cats: &[u32]) -> f64 {
        let mut logit = self.bias;
        for (i, &ci) in cats.iter().enumerate() {
            let ui = self.latents[i].row(ci as usize);
            for (j, &cj) in cats.iter().enumerate().skip(i + 1) {
                let w = self.pair_weights[(i, j)];
                if w != 0.0 {
                    logit += w * dot(ui, self.latents[j].row(cj as usize));
                }
            }
        }
        logit
    }
}

/// Generated records with the logits that produced their labels.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Criteo-format view; tokens are the decimal bucket ids.
    pub records: Vec<RawRecord>,
    /// Direct view with exact buckets and log-compressed (unstandardized) dense values.
    pub examples: Vec<Example>,
    pub true_logits: Vec<f64>,
}

/// Samples `spec.n` records. Dense fields, if any, are uniform noise in `[0, 100)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let schema = &spec.schema;
    let mut out = SyntheticData {
        records: Vec::with_capacity(spec.n),
        examples: Vec::with_capacity(spec.n),
        true_logits: Vec::with_capacity(spec.n),
    };
    for _ in 0..spec.n {
        let raw_dense: Vec<i64> = (0..schema.num_dense)
            .map(|_| rng.next_range(0, 100) as i64)
            .collect();
        let cats: Vec<u32> = schema
            .buckets_per_field
            .iter()
            .map(|&b| rng.next_range(1, b) as u32)
            .collect();
        let logit = spec.true_logit(&cats);
        let label = u8::from(rng.next_uniform() < sigmoid(logit));
        out.records.push(RawRecord {
            label,
            dense: raw_dense.iter().map(|&v| Some(v)).collect(),
            cats: cats.iter().map(|c| Some(c.to_string())).collect(),
        });
        out.examples.push(Example {
            label,
            dense: raw_dense.iter().map(|&v| transform_dense(Some(v))).collect(),
            cats,
        });
        out.true_logits.push(logit);
    }
    Ok(out)
}
