//! Single-head scaled dot-product self-attention over the field rows,
//! followed by the same sum pooling and logistic head as the cross network.

use crate::data::{DatasetSchema, Example};
use crate::error::{Error, Result};
use crate::numeric::{matmul, DenseMatrix, RealVector, SeededRng};

use super::embedding::EmbeddingStack;
use super::sepcross::{predict_head, sum_pool, ModelConfig};
use super::{CtrModel, Gradients, ModelKind, SlotShape};

/// Query, key and value projections, each `d x d_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub w_q: DenseMatrix,
    pub w_k: DenseMatrix,
    pub w_v: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub h0: DenseMatrix,
    pub queries: DenseMatrix,
    pub keys: DenseMatrix,
    pub values: DenseMatrix,
    /// Row-stochastic `N x N` attention weights.
    pub weights: DenseMatrix,
    pub output: DenseMatrix,
    pub pooled: RealVector,
    pub logit: f64,
    pub probability: f64,
}

fn softmax_rows(m: &mut DenseMatrix) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

/// Intermediates of one attention pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub queries: DenseMatrix,
    pub keys: DenseMatrix,
    pub values: DenseMatrix,
    pub weights: DenseMatrix,
    pub output: DenseMatrix,
}

/// `softmax((H W_q)(H W_k)ᵀ / sqrt(d_a)) · (H W_v)`.
pub fn attention_forward(h: &DenseMatrix, w: &AttentionWeights) -> Result<AttentionOutput> {
    if w.w_q.shape() != w.w_k.shape() || w.w_v.rows() != w.w_q.rows() {
        return Err(Error::ShapeMismatch {
            op: "attention projections",
            left_rows: w.w_q.rows(),
            left_cols: w.w_q.cols(),
            right_rows: w.w_k.rows(),
            right_cols: w.w_k.cols(),
        });
    }
    let q = matmul(h, &w.w_q)?;
    let k = matmul(h, &w.w_k)?;
    let v = matmul(h, &w.w_v)?;
    let scale = 1.0 / (w.w_q.cols() as f64).sqrt();
    let mut a = matmul(&q, &k.transpose())?.map(|x| x * scale);
    softmax_rows(&mut a);
    let output = matmul(&a, &v)?;
    Ok(AttentionOutput {
        queries: q,
        keys: k,
        values: v,
        weights: a,
        output,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionModel {
    /// Only the schema, embedding dimension and dense-row flag are used.
    pub config: ModelConfig,
    pub embedding: EmbeddingStack,
    pub attention: AttentionWeights,
    pub head_v: Vec<f64>,
    pub head_b: f64,
}

impl AttentionModel {
    /// Embeddings and projections `Normal(0, 1/d)`; head zero.
    pub fn new(config: ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let embedding = EmbeddingStack::init(&config.schema, d, config.has_dense_row(), rng);
        let std = 1.0 / (d as f64).sqrt();
        let attention = AttentionWeights {
            w_q: DenseMatrix::gaussian(d, d, std, rng),
            w_k: DenseMatrix::gaussian(d, d, std, rng),
            w_v: DenseMatrix::gaussian(d, d, std, rng),
        };
        Ok(Self {
            embedding,
            attention,
            head_v: vec![0.0; d],
            head_b: 0.0,
            config,
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        Ok(Self {
            embedding: EmbeddingStack::zeros(&config.schema, d, config.has_dense_row()),
            attention: AttentionWeights {
                w_q: DenseMatrix::zeros(d, d),
                w_k: DenseMatrix::zeros(d, d),
                w_v: DenseMatrix::zeros(d, d),
            },
            head_v: vec![0.0; d],
            head_b: 0.0,
            config,
        })
    }
}

impl CtrModel for AttentionModel {
    type Trace = AttentionTrace;

    fn kind(&self) -> ModelKind {
        ModelKind::Attention
    }

    fn schema(&self) -> &DatasetSchema {
        &self.config.schema
    }

    fn forward(&self, example: &Example) -> Result<AttentionTrace> {
        let h0 = self.embedding.forward(example)?;
        let AttentionOutput {
            queries,
            keys,
            values,
            weights,
            output,
        } = attention_forward(&h0, &self.attention)?;
        let pooled = sum_pool(&output);
        let (logit, probability) = predict_head(&pooled, &self.head_v, self.head_b)?;
        Ok(AttentionTrace {
            h0,
            queries,
            keys,
            values,
            weights,
            output,
            pooled,
            logit,
            probability,
        })
    }

    fn trace_logit(trace: &AttentionTrace) -> f64 {
        trace.logit
    }

    fn backward(&self, example: &Example, t: &AttentionTrace, d_logit: f64, grads: &mut Gradients) -> Result<()> {
        let n = t.h0.rows();
        let d_a = self.attention.w_q.cols();
        let base = self.embedding.num_slots();

        for (g, &p) in grads.dense_mut(base + 3).iter_mut().zip(t.pooled.iter()) {
            *g += d_logit * p;
        }
        grads.dense_mut(base + 4)[0] += d_logit;

        let mut d_out = DenseMatrix::zeros(n, d_a);
        for r in 0..n {
            for (g, &v) in d_out.row_mut(r).iter_mut().zip(&self.head_v) {
                *g = d_logit * v;
            }
        }
        let d_weights = matmul(&d_out, &t.values.transpose())?;
        let d_values = matmul(&t.weights.transpose(), &d_out)?;

        // Softmax Jacobian, row by row.
        let scale = 1.0 / (d_a as f64).sqrt();
        let mut d_scores = DenseMatrix::zeros(n, n);
        for r in 0..n {
            let a = t.weights.row(r);
            let da = d_weights.row(r);
            let inner: f64 = a.iter().zip(da).map(|(x, y)| x * y).sum();
            for c in 0..n {
                d_scores[(r, c)] = a[c] * (da[c] - inner) * scale;
            }
        }
        let d_q = matmul(&d_scores, &t.keys)?;
        let d_k = matmul(&d_scores.transpose(), &t.queries)?;

        let h0_t = t.h0.transpose();
        for (slot, d) in [(base, &d_q), (base + 1, &d_k), (base + 2, &d_values)] {
            let gw = matmul(&h0_t, d)?;
            grads
                .dense_mut(slot)
                .iter_mut()
                .zip(gw.values())
                .for_each(|(g, v)| *g += v);
        }

        let d_h0 = matmul(&d_q, &self.attention.w_q.transpose())?
            .add(&matmul(&d_k, &self.attention.w_k.transpose())?)?
            .add(&matmul(&d_values, &self.attention.w_v.transpose())?)?;
        self.embedding.backward(example, &d_h0, grads, 0);
        Ok(())
    }

    fn layout(&self) -> Vec<SlotShape> {
        let mut out = self.embedding.layout();
        for (name, m) in [
            ("attn.w_q", &self.attention.w_q),
            ("attn.w_k", &self.attention.w_k),
            ("attn.w_v", &self.attention.w_v),
        ] {
            out.push(SlotShape::dense(name, name, m.rows() * m.cols()));
        }
        out.push(SlotShape::dense("head.v", "head.v", self.head_v.len()));
        out.push(SlotShape::dense("head.b", "head.b", 1));
        out
    }

    fn slots(&self) -> Vec<&[f64]> {
        let mut out = self.embedding.slots();
        out.push(self.attention.w_q.values());
        out.push(self.attention.w_k.values());
        out.push(self.attention.w_v.values());
        out.push(&self.head_v);
        out.push(std::slice::from_ref(&self.head_b));
        out
    }

    fn slots_mut(&mut self) -> Vec<&mut [f64]> {
        let Self {
            embedding,
            attention,
            head_v,
            head_b,
            ..
        } = self;
        let mut out = embedding.slots_mut();
        out.push(attention.w_q.values_mut());
        out.push(attention.w_k.values_mut());
        out.push(attention.w_v.values_mut());
        out.push(head_v);
        out.push(std::slice::from_mut(head_b));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(d: usize, rng: &mut SeededRng) -> AttentionWeights {
        AttentionWeights {
            w_q: DenseMatrix::gaussian(d, d, 1.0, rng),
            w_k: DenseMatrix::gaussian(d, d, 1.0, rng),
            w_v: DenseMatrix::gaussian(d, d, 1.0, rng),
        }
    }

    #[test]
    fn single_row_returns_value_projection() {
        let mut rng = SeededRng::new(1);
        let w = weights(3, &mut rng);
        let h = DenseMatrix::gaussian(1, 3, 1.0, &mut rng);
        let o = attention_forward(&h, &w).unwrap();
        let (v, a, out) = (o.values, o.weights, o.output);
        assert_eq!(a.values(), &[1.0]);
        for (x, y) in out.values().iter().zip(v.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_queries_attend_uniformly() {
        let mut rng = SeededRng::new(2);
        let mut w = weights(3, &mut rng);
        w.w_q = DenseMatrix::zeros(3, 3);
        let h = DenseMatrix::gaussian(4, 3, 1.0, &mut rng);
        let o = attention_forward(&h, &w).unwrap();
        let (v, a, out) = (o.values, o.weights, o.output);
        assert!(a.values().iter().all(|&x| (x - 0.25).abs() < 1e-15));
        for c in 0..3 {
            let mean = v.column(c).iter().sum::<f64>() / 4.0;
            for r in 0..4 {
                assert!((out[(r, c)] - mean).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let mut rng = SeededRng::new(3);
        for _ in 0..50 {
            let w = weights(4, &mut rng);
            let h = DenseMatrix::gaussian(6, 4, 2.0, &mut rng);
            let a = attention_forward(&h, &w).unwrap().weights;
            for r in 0..6 {
                let row = a.row(r);
                assert!(row.iter().all(|&x| x >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_mismatched_projections() {
        let mut rng = SeededRng::new(4);
        let mut w = weights(3, &mut rng);
        w.w_k = DenseMatrix::zeros(3, 2);
        let h = DenseMatrix::gaussian(2, 3, 1.0, &mut rng);
        assert!(attention_forward(&h, &w).is_err());
        let w = weights(2, &mut rng);
        assert!(attention_forward(&h, &w).is_err());
    }
}
