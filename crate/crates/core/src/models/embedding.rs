use crate::data::{DatasetSchema, Example};
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, SeededRng};

use super::{Gradients, SlotShape};

/// Per-field lookup tables plus an optional projection of the dense features
/// into one extra field row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStack {
    pub tables: Vec<DenseMatrix>,
    /// `num_dense x dim`, present when dense features enter as a field.
    pub dense_proj: Option<DenseMatrix>,
}

impl EmbeddingStack {
    /// All entries `Normal(0, 1/d)`, i.e. standard deviation `1/sqrt(d)`.
    pub fn init(schema: &DatasetSchema, dim: usize, with_dense: bool, rng: &mut SeededRng) -> Self {
        let std = 1.0 / (dim as f64).sqrt();
        let tables = schema
            .buckets_per_field
            .iter()
            .map(|&b| DenseMatrix::gaussian(b, dim, std, rng))
            .collect();
        let dense_proj =
            (with_dense && schema.num_dense > 0).then(|| DenseMatrix::gaussian(schema.num_dense, dim, std, rng));
        Self { tables, dense_proj }
    }

    pub fn zeros(schema: &DatasetSchema, dim: usize, with_dense: bool) -> Self {
        Self {
            tables: schema
                .buckets_per_field
                .iter()
                .map(|&b| DenseMatrix::zeros(b, dim))
                .collect(),
            dense_proj: (with_dense && schema.num_dense > 0)
                .then(|| DenseMatrix::zeros(schema.num_dense, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.tables
            .first()
            .or(self.dense_proj.as_ref())
            .map_or(0, DenseMatrix::cols)
    }

    /// Rows of the embedded field matrix.
    pub fn num_rows(&self) -> usize {
        self.tables.len() + usize::from(self.dense_proj.is_some())
    }

    pub fn num_slots(&self) -> usize {
        self.num_rows()
    }

    /// Stacks the looked-up rows, then the dense projection row if configured.
    pub fn forward(&self, example: &Example) -> Result<DenseMatrix> {
        if example.cats.len() != self.tables.len() {
            return Err(Error::SchemaMismatch(format!(
                "example has {} categorical fields, model has {}",
                example.cats.len(),
                self.tables.len()
            )));
        }
        let d = self.dim();
        let mut h = DenseMatrix::zeros(self.num_rows(), d);
        for (field, (table, &bucket)) in self.tables.iter().zip(&example.cats).enumerate() {
            let bucket = bucket as usize;
            if bucket >= table.rows() {
                return Err(Error::BucketOutOfRange {
                    field,
                    bucket,
                    rows: table.rows(),
                });
            }
            h.row_mut(field).copy_from_slice(table.row(bucket));
        }
        if let Some(proj) = &self.dense_proj {
            if example.dense.len() != proj.rows() {
                return Err(Error::SchemaMismatch(format!(
                    "example has {} dense features, model has {}",
                    example.dense.len(),
                    proj.rows()
                )));
            }
            let out = h.row_mut(self.tables.len());
            for (k, &x) in example.dense.iter().enumerate() {
                for (o, &w) in out.iter_mut().zip(proj.row(k)) {
                    *o += x * w;
                }
            }
        }
        Ok(h)
    }

    /// Scatters `d_h0` (gradient w.r.t. the embedded matrix) into the touched
    /// rows. Slots start at `first_slot`: one per table, then the projection.
    pub fn backward(
        &self,
        example: &Example,
        d_h0: &DenseMatrix,
        grads: &mut Gradients,
        first_slot: usize,
    ) {
        for (field, &bucket) in example.cats.iter().enumerate() {
            let row = grads.row_mut(first_slot + field, bucket);
            for (g, &d) in row.iter_mut().zip(d_h0.row(field)) {
                *g += d;
            }
        }
        if let Some(proj) = &self.dense_proj {
            let d_row = d_h0.row(self.tables.len());
            let g = grads.dense_mut(first_slot + self.tables.len());
            let d = proj.cols();
            for (k, &x) in example.dense.iter().enumerate() {
                for (g, &dr) in g[k * d..(k + 1) * d].iter_mut().zip(d_row) {
                    *g += x * dr;
                }
            }
        }
    }

    pub fn layout(&self) -> Vec<SlotShape> {
        let mut out: Vec<SlotShape> = self
            .tables
            .iter()
            .enumerate()
            .map(|(f, t)| SlotShape::table(format!("embedding[{f}]"), "embedding", t.rows(), t.cols()))
            .collect();
        if let Some(p) = &self.dense_proj {
            out.push(SlotShape::dense("dense_proj", "dense_proj", p.rows() * p.cols()));
        }
        out
    }

    pub fn slots(&self) -> Vec<&[f64]> {
        self.tables
            .iter()
            .chain(self.dense_proj.as_ref())
            .map(DenseMatrix::values)
            .collect()
    }

    pub fn slots_mut(&mut self) -> Vec<&mut [f64]> {
        self.tables
            .iter_mut()
            .chain(self.dense_proj.as_mut())
            .map(DenseMatrix::values_mut)
            .collect()
    }
}
