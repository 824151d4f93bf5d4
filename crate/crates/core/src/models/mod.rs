//! CTR models with hand-written forward and backward passes.
//!
//! Every model exposes its parameters as an ordered list of flat slots.
//! A slot is either dense (always fully updated) or an embedding table whose
//! gradient is row-sparse. [`Gradients`] mirrors that list, which lets the
//! optimizer, the gradient checker and the checkpoint writer treat all models
//! uniformly.

mod attention;
mod embedding;
mod fm;
mod sepcross;

use std::collections::BTreeMap;

pub use attention::{attention_forward, AttentionModel, AttentionOutput, AttentionTrace, AttentionWeights};
pub use embedding::EmbeddingStack;
pub use fm::{fm_forward, FmConfig, FmModel, FmParams, FmTrace};
pub use sepcross::{
    cross_layer_forward, embed_forward, init_params, model_backward, model_forward, predict_head,
    sum_pool, CrossLayer, CrossWeights, ForwardTrace, ModelConfig, ModelParams, SepCrossModel,
};

use crate::data::{DatasetSchema, Example};
use crate::error::{Error, Result};
use crate::numeric::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    SepCross,
    Fm,
    Attention,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::SepCross => "sepcross",
            ModelKind::Fm => "fm",
            ModelKind::Attention => "attn",
        }
    }

    pub const ALL: [ModelKind; 3] = [ModelKind::SepCross, ModelKind::Fm, ModelKind::Attention];
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sepcross" => Ok(ModelKind::SepCross),
            "fm" => Ok(ModelKind::Fm),
            "attn" | "attention" => Ok(ModelKind::Attention),
            other => Err(Error::InvalidConfig(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Dense { len: usize },
    /// Row-major `rows x cols` table updated only on rows that appear in a batch.
    Table { rows: usize, cols: usize },
}

impl SlotKind {
    pub fn len(self) -> usize {
        match self {
            SlotKind::Dense { len } => len,
            SlotKind::Table { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

/// Name, reporting group and shape of one parameter slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotShape {
    pub name: String,
    pub group: &'static str,
    pub kind: SlotKind,
}

impl SlotShape {
    pub fn dense(name: impl Into<String>, group: &'static str, len: usize) -> Self {
        Self {
            name: name.into(),
            group,
            kind: SlotKind::Dense { len },
        }
    }

    pub fn table(name: impl Into<String>, group: &'static str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            group,
            kind: SlotKind::Table { rows, cols },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SlotGrad {
    Dense(Vec<f64>),
    Table {
        cols: usize,
        rows: BTreeMap<u32, Vec<f64>>,
    },
}

/// Gradient buffers congruent with a model's slot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    slots: Vec<SlotGrad>,
}

impl Gradients {
    pub fn zeros(layout: &[SlotShape]) -> Self {
        let slots = layout
            .iter()
            .map(|s| match s.kind {
                SlotKind::Dense { len } => SlotGrad::Dense(vec![0.0; len]),
                SlotKind::Table { cols, .. } => SlotGrad::Table {
                    cols,
                    rows: BTreeMap::new(),
                },
            })
            .collect();
        Self { slots }
    }

    pub fn slots(&self) -> &[SlotGrad] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [SlotGrad] {
        &mut self.slots
    }

    /// Panics if `slot` is not dense; slot indices are fixed by the model.
    #[inline]
    pub fn dense_mut(&mut self, slot: usize) -> &mut [f64] {
        match &mut self.slots[slot] {
            SlotGrad::Dense(v) => v,
            SlotGrad::Table { .. } => panic!("slot {slot} is a table"),
        }
    }

    pub fn dense(&self, slot: usize) -> &[f64] {
        match &self.slots[slot] {
            SlotGrad::Dense(v) => v,
            SlotGrad::Table { .. } => panic!("slot {slot} is a table"),
        }
    }

    /// Gradient row for a table slot, created zeroed on first touch.
    #[inline]
    pub fn row_mut(&mut self, slot: usize, row: u32) -> &mut [f64] {
        match &mut self.slots[slot] {
            SlotGrad::Table { cols, rows } => {
                let cols = *cols;
                rows.entry(row).or_insert_with(|| vec![0.0; cols])
            }
            SlotGrad::Dense(_) => panic!("slot {slot} is dense"),
        }
    }

    pub fn table_rows(&self, slot: usize) -> &BTreeMap<u32, Vec<f64>> {
        match &self.slots[slot] {
            SlotGrad::Table { rows, .. } => rows,
            SlotGrad::Dense(_) => panic!("slot {slot} is dense"),
        }
    }

    /// Zeroes dense buffers and forgets touched rows.
    pub fn clear(&mut self) {
        for s in &mut self.slots {
            match s {
                SlotGrad::Dense(v) => v.fill(0.0),
                SlotGrad::Table { rows, .. } => rows.clear(),
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in &mut self.slots {
            match s {
                SlotGrad::Dense(v) => v.iter_mut().for_each(|x| *x *= factor),
                SlotGrad::Table { rows, .. } => rows
                    .values_mut()
                    .flat_map(|r| r.iter_mut())
                    .for_each(|x| *x *= factor),
            }
        }
    }

    /// Adds `other` into `self` after checking the two are congruent.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        self.check_congruent(other)?;
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            match (a, b) {
                (SlotGrad::Dense(a), SlotGrad::Dense(b)) => {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y)
                }
                (SlotGrad::Table { cols, rows: a }, SlotGrad::Table { rows: b, .. }) => {
                    for (&r, g) in b {
                        let dst = a.entry(r).or_insert_with(|| vec![0.0; *cols]);
                        dst.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    }
                }
                _ => unreachable!("checked above"),
            }
        }
        Ok(())
    }

    fn check_congruent(&self, other: &Gradients) -> Result<()> {
        let ok = self.slots.len() == other.slots.len()
            && self.slots.iter().zip(&other.slots).all(|(a, b)| match (a, b) {
                (SlotGrad::Dense(a), SlotGrad::Dense(b)) => a.len() == b.len(),
                (SlotGrad::Table { cols: a, .. }, SlotGrad::Table { cols: b, .. }) => a == b,
                _ => false,
            });
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "gradient buffers do not share a layout".into(),
            ))
        }
    }

    /// Checks congruence against a layout (table row bounds included).
    pub fn check_layout(&self, layout: &[SlotShape]) -> Result<()> {
        let bad = |name: &str| {
            Err(Error::InvalidConfig(format!(
                "gradient for `{name}` does not match the parameter shape"
            )))
        };
        if layout.len() != self.slots.len() {
            return bad("<layout>");
        }
        for (shape, g) in layout.iter().zip(&self.slots) {
            match (shape.kind, g) {
                (SlotKind::Dense { len }, SlotGrad::Dense(v)) if v.len() == len => {}
                (SlotKind::Table { rows, cols }, SlotGrad::Table { cols: c, rows: r })
                    if *c == cols && r.keys().all(|&k| (k as usize) < rows) => {}
                _ => return bad(&shape.name),
            }
        }
        Ok(())
    }

    /// Fails on the first slot holding NaN or infinity.
    pub fn check_finite(&self, layout: &[SlotShape]) -> Result<()> {
        for (shape, g) in layout.iter().zip(&self.slots) {
            let finite = match g {
                SlotGrad::Dense(v) => v.iter().all(|x| x.is_finite()),
                SlotGrad::Table { rows, .. } => rows.values().flatten().all(|x| x.is_finite()),
            };
            if !finite {
                return Err(Error::NonFiniteGradient {
                    group: shape.name.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Behaviour shared by every trainable CTR model.
pub trait CtrModel: Clone + Send + Sync {
    /// Intermediates retained by `forward` for `backward`.
    type Trace;

    fn kind(&self) -> ModelKind;

    fn schema(&self) -> &DatasetSchema;

    fn forward(&self, example: &Example) -> Result<Self::Trace>;

    fn trace_logit(trace: &Self::Trace) -> f64;

    /// Adds `d_logit * dlogit/dθ` for every parameter into `grads`.
    fn backward(
        &self,
        example: &Example,
        trace: &Self::Trace,
        d_logit: f64,
        grads: &mut Gradients,
    ) -> Result<()>;

    fn layout(&self) -> Vec<SlotShape>;

    /// Flat parameter storage, in layout order.
    fn slots(&self) -> Vec<&[f64]>;

    fn slots_mut(&mut self) -> Vec<&mut [f64]>;

    fn logit(&self, example: &Example) -> Result<f64> {
        Ok(Self::trace_logit(&self.forward(example)?))
    }

    fn probability(&self, example: &Example) -> Result<f64> {
        Ok(sigmoid(self.logit(example)?))
    }

    fn parameter_count(&self) -> usize {
        self.layout().iter().map(|s| s.kind.len()).sum()
    }

    fn new_gradients(&self) -> Gradients {
        Gradients::zeros(&self.layout())
    }
}
