//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SECN"            4-byte magic
//! version           u32
//! header_len        u32
//! header            kind tag, schema, model scalars, training seed, slot count
//! dense stats       num_dense means then num_dense stds, f64
//! slots             per slot: u64 length, then that many f64
//! checksum          u64 FNV-1a of every preceding byte
//! ```
//!
//! Any single-byte change anywhere in the file alters the checksum, so
//! corruption is always reported rather than silently loaded.

use std::path::Path;

use secn_core::data::{DatasetSchema, DenseStats, fnv1a64};
use secn_core::models::{AttentionModel, FmConfig, FmModel, ModelConfig, ModelKind, SepCrossModel};
use secn_core::numeric::Activation;
use thiserror::Error;

use crate::model::AnyModel;

pub const MAGIC: &[u8; 4] = b"SECN";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 8;
const PREFIX_LEN: usize = 4 + 4 + 4;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("file is {len} bytes, too short to be a checkpoint")]
    Truncated { len: usize },
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

/// A trained model together with everything needed to score new data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: AnyModel,
    pub stats: DenseStats,
    pub seed: u64,
}

/// Header-level facts about a checkpoint, without parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSummary {
    pub kind: ModelKind,
    pub schema: DatasetSchema,
    pub seed: u64,
    pub version: u32,
    pub checksum: u64,
    pub parameter_count: usize,
    pub slots: Vec<(String, Vec<usize>)>,
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Relu => 1,
        Activation::Sigmoid => 2,
    }
}

fn activation_from_code(code: u8) -> Result<Activation, CheckpointError> {
    match code {
        0 => Ok(Activation::Identity),
        1 => Ok(Activation::Relu),
        2 => Ok(Activation::Sigmoid),
        other => Err(CheckpointError::Malformed(format!("unknown activation code {other}"))),
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn model_config_scalars(out: &mut Vec<u8>, c: &ModelConfig) {
    put_u32(out, c.embed_dim as u32);
    put_u32(out, c.cross_layers as u32);
    out.push(u8::from(c.separated));
    out.push(activation_code(c.cross_activation));
    out.push(u8::from(c.include_dense_as_field));
}

fn encode_header(ckpt: &Checkpoint) -> Vec<u8> {
    let mut h = Vec::new();
    let tag = ckpt.model.kind().tag().as_bytes();
    h.push(tag.len() as u8);
    h.extend_from_slice(tag);
    let schema = ckpt.model.schema();
    put_u32(&mut h, schema.num_dense as u32);
    put_u32(&mut h, schema.num_categorical as u32);
    for &b in &schema.buckets_per_field {
        put_u64(&mut h, b as u64);
    }
    match &ckpt.model {
        AnyModel::SepCross(m) => model_config_scalars(&mut h, &m.config),
        AnyModel::Attention(m) => model_config_scalars(&mut h, &m.config),
        AnyModel::Fm(m) => put_u32(&mut h, m.config.k as u32),
    }
    put_u64(&mut h, ckpt.seed);
    put_u32(&mut h, ckpt.model.layout().len() as u32);
    h
}

/// Serializes a checkpoint. The output depends only on the checkpoint's contents.
pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let header = encode_header(ckpt);
    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + 8 * ckpt.model.parameter_count() + 64);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, header.len() as u32);
    out.extend_from_slice(&header);
    put_f64s(&mut out, &ckpt.stats.mean);
    put_f64s(&mut out, &ckpt.stats.std);
    for slot in ckpt.model.slots() {
        put_u64(&mut out, slot.len() as u64);
        put_f64s(&mut out, slot);
    }
    let checksum = fnv1a64(&out);
    put_u64(&mut out, checksum);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Malformed(format!("{} ends early at byte {}", self.what, self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn flag(&mut self) -> Result<bool, CheckpointError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(CheckpointError::Malformed(format!("flag byte {other} is not 0 or 1"))),
        }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn finished(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn read_f64s(r: &mut Reader<'_>, dst: &mut [f64]) -> Result<(), CheckpointError> {
    let raw = r.take(dst.len() * 8)?;
    for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(8)) {
        *d = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Ok(())
}

fn read_model_config(r: &mut Reader<'_>, schema: DatasetSchema) -> Result<ModelConfig, CheckpointError> {
    Ok(ModelConfig {
        schema,
        embed_dim: r.u32()? as usize,
        cross_layers: r.u32()? as usize,
        separated: r.flag()?,
        cross_activation: activation_from_code(r.u8()?)?,
        include_dense_as_field: r.flag()?,
    })
}

fn malformed(e: secn_core::Error) -> CheckpointError {
    CheckpointError::Malformed(e.to_string())
}

/// Checks magic, version and checksum, returning the verified body and stored checksum.
fn verify(bytes: &[u8]) -> Result<(&[u8], u64), CheckpointError> {
    if bytes.len() < PREFIX_LEN + CHECKSUM_LEN {
        return Err(CheckpointError::Truncated { len: bytes.len() });
    }
    let (body, tail) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let computed = fnv1a64(body);
    let magic: [u8; 4] = body[..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    if stored != computed {
        return Err(CheckpointError::ChecksumMismatch { stored, computed });
    }
    let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    Ok((body, stored))
}

/// Parses and fully validates a checkpoint.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let (body, _) = verify(bytes)?;
    let mut outer = Reader::new(body, "checkpoint");
    outer.take(8)?;
    let header_len = outer.u32()? as usize;
    let mut h = Reader::new(outer.take(header_len)?, "header");

    let tag_len = h.u8()? as usize;
    let tag = std::str::from_utf8(h.take(tag_len)?)
        .map_err(|_| CheckpointError::Malformed("model tag is not UTF-8".into()))?;
    let kind: ModelKind = tag.parse().map_err(malformed)?;
    let num_dense = h.u32()? as usize;
    let num_cat = h.u32()? as usize;
    let mut buckets = Vec::with_capacity(num_cat.min(h.remaining() / 8));
    for _ in 0..num_cat {
        buckets.push(h.u64()? as usize);
    }
    let schema = DatasetSchema::new(num_dense, buckets).map_err(malformed)?;

    // Refuse to allocate tables larger than the bytes actually present.
    let table_rows: usize = schema.buckets_per_field.iter().sum();
    if table_rows > outer.remaining() / 8 {
        return Err(CheckpointError::Malformed(format!(
            "schema declares {table_rows} table rows but only {} bytes follow",
            outer.remaining()
        )));
    }

    let mut model = match kind {
        ModelKind::SepCross => AnyModel::SepCross(SepCrossModel::zeros(read_model_config(&mut h, schema)?).map_err(malformed)?),
        ModelKind::Attention => {
            AnyModel::Attention(AttentionModel::zeros(read_model_config(&mut h, schema)?).map_err(malformed)?)
        }
        ModelKind::Fm => {
            let k = h.u32()? as usize;
            AnyModel::Fm(FmModel::zeros(FmConfig { schema, k }).map_err(malformed)?)
        }
    };
    let seed = h.u64()?;
    let num_slots = h.u32()? as usize;
    if !h.finished() {
        return Err(CheckpointError::Malformed("trailing bytes in header".into()));
    }
    let layout = model.layout();
    if num_slots != layout.len() {
        return Err(CheckpointError::Malformed(format!(
            "header lists {num_slots} slots, model has {}",
            layout.len()
        )));
    }

    let mut stats = DenseStats { mean: vec![0.0; num_dense], std: vec![0.0; num_dense] };
    read_f64s(&mut outer, &mut stats.mean)?;
    read_f64s(&mut outer, &mut stats.std)?;

    for (shape, slot) in layout.iter().zip(model.slots_mut()) {
        let len = outer.u64()? as usize;
        if len != slot.len() {
            return Err(CheckpointError::Malformed(format!(
                "slot {} has {len} values, expected {}",
                shape.name,
                slot.len()
            )));
        }
        read_f64s(&mut outer, slot)?;
    }
    if !outer.finished() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", outer.remaining())));
    }
    Ok(Checkpoint { model, stats, seed })
}

/// Loads a checkpoint and reports its header facts and stored checksum.
pub fn summarize(bytes: &[u8]) -> Result<CheckpointSummary, CheckpointError> {
    let (_, checksum) = verify(bytes)?;
    let ckpt = decode(bytes)?;
    let slots = ckpt
        .model
        .layout()
        .into_iter()
        .map(|s| {
            let dims = match s.kind {
                secn_core::models::SlotKind::Dense { len } => vec![len],
                secn_core::models::SlotKind::Table { rows, cols } => vec![rows, cols],
            };
            (s.name, dims)
        })
        .collect();
    Ok(CheckpointSummary {
        kind: ckpt.model.kind(),
        schema: ckpt.model.schema().clone(),
        seed: ckpt.seed,
        version: FORMAT_VERSION,
        checksum,
        parameter_count: ckpt.model.parameter_count(),
        slots,
    })
}

fn io_error(path: &Path, e: std::io::Error) -> CheckpointError {
    CheckpointError::Io { path: path.display().to_string(), reason: e.to_string() }
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(ckpt)).map_err(|e| io_error(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&read_bytes(path)?)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CheckpointError> {
    std::fs::read(path).map_err(|e| io_error(path, e))
}
