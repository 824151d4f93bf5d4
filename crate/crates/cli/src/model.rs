use secn_core::data::{DatasetSchema, Example};
use secn_core::metrics::EvalMetrics;
use secn_core::models::{AttentionModel, CtrModel, FmModel, ModelKind, SepCrossModel, SlotShape};
use secn_core::training::{evaluate, fit, TrainConfig, TrainReport};
use secn_core::Result;

/// Any of the shipped model kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    SepCross(SepCrossModel),
    Fm(FmModel),
    Attention(AttentionModel),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::SepCross($m) => $body,
            AnyModel::Fm($m) => $body,
            AnyModel::Attention($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        dispatch!(self, m => m.kind())
    }

    pub fn schema(&self) -> &DatasetSchema {
        dispatch!(self, m => m.schema())
    }

    pub fn layout(&self) -> Vec<SlotShape> {
        dispatch!(self, m => m.layout())
    }

    pub fn slots(&self) -> Vec<&[f64]> {
        dispatch!(self, m => m.slots())
    }

    pub fn slots_mut(&mut self) -> Vec<&mut [f64]> {
        dispatch!(self, m => m.slots_mut())
    }

    pub fn parameter_count(&self) -> usize {
        dispatch!(self, m => m.parameter_count())
    }

    pub fn probability(&self, example: &Example) -> Result<f64> {
        dispatch!(self, m => m.probability(example))
    }

    pub fn evaluate(&self, examples: &[Example]) -> Result<EvalMetrics> {
        dispatch!(self, m => evaluate(m, examples))
    }

    pub fn fit(&mut self, train: &[Example], valid: &[Example], config: &TrainConfig) -> Result<TrainReport> {
        dispatch!(self, m => fit(m, train, valid, config))
    }
}
