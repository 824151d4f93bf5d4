//! Second-order factorization machine baseline.
//!
//! Active features are one bucket per categorical field (value 1) and every
//! transformed dense feature (its value). Each feature carries a linear
//! weight and a `k`-dimensional latent vector, stored together as a
//! `1 + k` row: column 0 is the linear weight.

use crate::data::{DatasetSchema, Example};
use crate::error::{Error, Result};
use crate::numeric::{sigmoid, DenseMatrix, SeededRng};

use super::{CtrModel, Gradients, ModelKind, SlotShape};

/// Standard deviation of the initial latent vectors.
pub const FM_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct FmConfig {
    pub schema: DatasetSchema,
    pub k: usize,
}

impl FmConfig {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidConfig("FM latent dimension must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmParams {
    pub bias: f64,
    /// `num_dense x (1 + k)`; absent without dense features.
    pub dense: Option<DenseMatrix>,
    /// Per field, `buckets x (1 + k)`.
    pub tables: Vec<DenseMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmTrace {
    pub logit: f64,
    pub probability: f64,
    /// `Σ_i v_{i,f} x_i` for each latent factor `f`.
    pub factor_sums: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmModel {
    pub config: FmConfig,
    pub params: FmParams,
}

impl FmModel {
    pub fn zeros(config: FmConfig) -> Result<Self> {
        config.validate()?;
        let w = 1 + config.k;
        let params = FmParams {
            bias: 0.0,
            dense: (config.schema.num_dense > 0).then(|| DenseMatrix::zeros(config.schema.num_dense, w)),
            tables: config
                .schema
                .buckets_per_field
                .iter()
                .map(|&b| DenseMatrix::zeros(b, w))
                .collect(),
        };
        Ok(Self { config, params })
    }

    /// Zero bias and linear weights, latents `Normal(0, FM_INIT_STD^2)`.
    pub fn new(config: FmConfig, rng: &mut SeededRng) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let FmParams { dense, tables, .. } = &mut m.params;
        for t in tables.iter_mut().chain(dense.as_mut()) {
            for r in 0..t.rows() {
                for v in &mut t.row_mut(r)[1..] {
                    *v = FM_INIT_STD * rng.next_gaussian();
                }
            }
        }
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    fn dense_slot(&self) -> Option<usize> {
        self.params.dense.as_ref().map(|_| 1)
    }

    fn first_table_slot(&self) -> usize {
        1 + usize::from(self.params.dense.is_some())
    }

    /// Calls `f(x, row, slot, row_index)` for every active feature.
    fn for_each_active(
        &self,
        example: &Example,
        mut f: impl FnMut(f64, &[f64], usize, u32),
    ) -> Result<()> {
        if example.cats.len() != self.params.tables.len() || example.dense.len() != self.config.schema.num_dense {
            return Err(Error::SchemaMismatch(format!(
                "example has {} dense / {} categorical, FM expects {}",
                example.dense.len(),
                example.cats.len(),
                self.config.schema
            )));
        }
        let first = self.first_table_slot();
        for (field, (table, &bucket)) in self.params.tables.iter().zip(&example.cats).enumerate() {
            if bucket as usize >= table.rows() {
                return Err(Error::BucketOutOfRange {
                    field,
                    bucket: bucket as usize,
                    rows: table.rows(),
                });
            }
            f(1.0, table.row(bucket as usize), first + field, bucket);
        }
        if let (Some(dense), Some(slot)) = (&self.params.dense, self.dense_slot()) {
            for (j, &x) in example.dense.iter().enumerate() {
                f(x, dense.row(j), slot, j as u32);
            }
        }
        Ok(())
    }
}

/// `(logit, probability)` via the `O(nk)` pairwise identity.
pub fn fm_forward(example: &Example, fm: &FmModel) -> Result<(f64, f64)> {
    let t = fm.forward(example)?;
    Ok((t.logit, t.probability))
}

impl CtrModel for FmModel {
    type Trace = FmTrace;

    fn kind(&self) -> ModelKind {
        ModelKind::Fm
    }

    fn schema(&self) -> &DatasetSchema {
        &self.config.schema
    }

    fn forward(&self, example: &Example) -> Result<FmTrace> {
        let k = self.k();
        let mut linear = 0.0;
        let mut sums = vec![0.0; k];
        let mut sq_sums = 0.0;
        self.for_each_active(example, |x, row, _, _| {
            linear += row[0] * x;
            for (s, &v) in sums.iter_mut().zip(&row[1..]) {
                let vx = v * x;
                *s += vx;
                sq_sums += vx * vx;
            }
        })?;
        let pairwise = 0.5 * (sums.iter().map(|s| s * s).sum::<f64>() - sq_sums);
        let logit = self.params.bias + linear + pairwise;
        Ok(FmTrace {
            logit,
            probability: sigmoid(logit),
            factor_sums: sums,
        })
    }

    fn trace_logit(trace: &FmTrace) -> f64 {
        trace.logit
    }

    fn backward(&self, example: &Example, trace: &FmTrace, d_logit: f64, grads: &mut Gradients) -> Result<()> {
        if trace.factor_sums.len() != self.k() {
            return Err(Error::InvalidConfig("FM trace does not match the model".into()));
        }
        grads.dense_mut(0)[0] += d_logit;
        let k = self.k();
        let width = 1 + k;
        // Collect first so the gradient buffers are not borrowed inside the closure.
        let mut touched: Vec<(f64, usize, u32, Vec<f64>)> = Vec::with_capacity(example.cats.len() + example.dense.len());
        self.for_each_active(example, |x, row, slot, r| touched.push((x, slot, r, row[1..].to_vec())))?;
        for (x, slot, r, latent) in touched {
            let mut g = vec![0.0; width];
            g[0] = d_logit * x;
            for f in 0..k {
                g[1 + f] = d_logit * x * (trace.factor_sums[f] - latent[f] * x);
            }
            let dst = if Some(slot) == self.dense_slot() {
                let row_start = r as usize * width;
                &mut grads.dense_mut(slot)[row_start..row_start + width]
            } else {
                grads.row_mut(slot, r)
            };
            dst.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok(())
    }

    fn layout(&self) -> Vec<SlotShape> {
        let w = 1 + self.k();
        let mut out = vec![SlotShape::dense("fm.bias", "fm.bias", 1)];
        if let Some(d) = &self.params.dense {
            out.push(SlotShape::dense("fm.dense", "fm.dense", d.rows() * w));
        }
        for (f, t) in self.params.tables.iter().enumerate() {
            out.push(SlotShape::table(format!("fm.table[{f}]"), "fm.table", t.rows(), w));
        }
        out
    }

    fn slots(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![std::slice::from_ref(&self.params.bias)];
        out.extend(self.params.dense.as_ref().map(DenseMatrix::values));
        out.extend(self.params.tables.iter().map(DenseMatrix::values));
        out
    }

    fn slots_mut(&mut self) -> Vec<&mut [f64]> {
        let FmParams { bias, dense, tables } = &mut self.params;
        let mut out: Vec<&mut [f64]> = vec![std::slice::from_mut(bias)];
        out.extend(dense.as_mut().map(DenseMatrix::values_mut));
        out.extend(tables.iter_mut().map(DenseMatrix::values_mut));
        out
    }
}
