//! Separated cross network.
//!
//! Fields are embedded into an `N x d` matrix `H0`. Each cross layer computes
//!
//! ```text
//! H' = f(W_C · (H ∘ H) + W_R · H + b_C 1ᵀ)
//! ```
//!
//! with `W_C`, `W_R` (`N x N`) mixing the field axis. In shared mode one
//! block serves every embedding column; in separated mode column `j` has its
//! own `W_C^(j)`, `W_R^(j)`, `b_C^(j)`. The final matrix is summed over the
//! field axis and fed to a logistic head `sigmoid(V·P + b)`.

use crate::data::{DatasetSchema, Example};
use crate::error::{Error, Result};
use crate::numeric::{dot, hadamard, matmul, sigmoid, Activation, DenseMatrix, RealVector, SeededRng};

use super::embedding::EmbeddingStack;
use super::{CtrModel, Gradients, ModelKind, SlotShape};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub schema: DatasetSchema,
    pub embed_dim: usize,
    pub cross_layers: usize,
    pub separated: bool,
    pub cross_activation: Activation,
    pub include_dense_as_field: bool,
}

impl ModelConfig {
    pub fn new(schema: DatasetSchema) -> Self {
        Self {
            schema,
            embed_dim: 8,
            cross_layers: 2,
            separated: true,
            cross_activation: Activation::Identity,
            include_dense_as_field: true,
        }
    }

    pub fn has_dense_row(&self) -> bool {
        self.include_dense_as_field && self.schema.num_dense > 0
    }

    /// Rows entering the cross stack.
    pub fn num_fields(&self) -> usize {
        self.schema.num_categorical + usize::from(self.has_dense_row())
    }

    /// Weight blocks per layer: one shared, or one per embedding column.
    pub fn blocks_per_layer(&self) -> usize {
        if self.separated {
            self.embed_dim
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.embed_dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
        }
        if self.num_fields() == 0 {
            return Err(Error::InvalidConfig(
                "no fields enter the model: add categorical fields or include the dense row".into(),
            ));
        }
        if self.cross_activation == Activation::Sigmoid {
            return Err(Error::InvalidConfig(
                "cross activation must be identity or relu".into(),
            ));
        }
        Ok(())
    }
}

/// One weight block of a cross layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossWeights {
    pub w_c: DenseMatrix,
    pub w_r: DenseMatrix,
    pub b_c: Vec<f64>,
}

impl CrossWeights {
    /// The passthrough block: `W_C = 0`, `W_R = I`, `b_C = 0`.
    pub fn passthrough(n: usize) -> Self {
        Self {
            w_c: DenseMatrix::zeros(n, n),
            w_r: DenseMatrix::identity(n),
            b_c: vec![0.0; n],
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        for m in [&self.w_c, &self.w_r] {
            if m.shape() != (n, n) {
                return Err(Error::ShapeMismatch {
                    op: "cross layer",
                    left_rows: m.rows(),
                    left_cols: m.cols(),
                    right_rows: n,
                    right_cols: n,
                });
            }
        }
        if self.b_c.len() != n {
            return Err(Error::ShapeMismatch {
                op: "cross bias",
                left_rows: self.b_c.len(),
                left_cols: 1,
                right_rows: n,
                right_cols: 1,
            });
        }
        Ok(())
    }
}

/// A cross layer: one block (shared) or one block per embedding column (separated).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossLayer {
    pub blocks: Vec<CrossWeights>,
}

impl CrossLayer {
    pub fn is_separated(&self) -> bool {
        self.blocks.len() > 1
    }

    #[inline]
    fn block_for(&self, column: usize) -> &CrossWeights {
        if self.blocks.len() == 1 {
            &self.blocks[0]
        } else {
            &self.blocks[column]
        }
    }

    fn check(&self, h: &DenseMatrix) -> Result<()> {
        let (n, d) = h.shape();
        if self.blocks.len() != 1 && self.blocks.len() != d {
            return Err(Error::ShapeMismatch {
                op: "cross layer blocks",
                left_rows: self.blocks.len(),
                left_cols: 1,
                right_rows: d,
                right_cols: 1,
            });
        }
        self.blocks.iter().try_for_each(|b| b.check(n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: EmbeddingStack,
    pub cross: Vec<CrossLayer>,
    pub head_v: Vec<f64>,
    pub head_b: f64,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `H0 ..= HL`.
    pub hidden: Vec<DenseMatrix>,
    /// Pre-activation of each cross layer.
    pub pre_activation: Vec<DenseMatrix>,
    pub pooled: RealVector,
    pub logit: f64,
    pub probability: f64,
}

/// Embedded field matrix for one example.
pub fn embed_forward(example: &Example, params: &ModelParams) -> Result<DenseMatrix> {
    params.embedding.forward(example)
}

fn cross_pre_activation(h: &DenseMatrix, layer: &CrossLayer) -> Result<DenseMatrix> {
    layer.check(h)?;
    let (n, d) = h.shape();
    if !layer.is_separated() {
        let block = &layer.blocks[0];
        let squared = hadamard(h, h)?;
        let mut z = matmul(&block.w_c, &squared)?.add(&matmul(&block.w_r, h)?)?;
        for r in 0..n {
            let b = block.b_c[r];
            z.row_mut(r).iter_mut().for_each(|v| *v += b);
        }
        return Ok(z);
    }
    let mut z = DenseMatrix::zeros(n, d);
    let mut col = vec![0.0; n];
    let mut col_sq = vec![0.0; n];
    for j in 0..d {
        let block = &layer.blocks[j];
        for i in 0..n {
            col[i] = h[(i, j)];
            col_sq[i] = col[i] * col[i];
        }
        for r in 0..n {
            z[(r, j)] = dot(block.w_c.row(r), &col_sq) + dot(block.w_r.row(r), &col) + block.b_c[r];
        }
    }
    Ok(z)
}

/// One cross layer applied to an `N x d` matrix.
pub fn cross_layer_forward(h: &DenseMatrix, layer: &CrossLayer, activation: Activation) -> Result<DenseMatrix> {
    Ok(cross_pre_activation(h, layer)?.map(|v| activation.apply(v)))
}

/// Column sums over the field axis.
pub fn sum_pool(h: &DenseMatrix) -> RealVector {
    let mut p = vec![0.0; h.cols()];
    for r in 0..h.rows() {
        for (acc, &v) in p.iter_mut().zip(h.row(r)) {
            *acc += v;
        }
    }
    RealVector::new(p).expect("matrix has at least one column")
}

/// `(logit, sigmoid(logit))` with `logit = V·P + b`.
pub fn predict_head(pooled: &[f64], v: &[f64], b: f64) -> Result<(f64, f64)> {
    if pooled.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "predict head",
            left_rows: pooled.len(),
            left_cols: 1,
            right_rows: v.len(),
            right_cols: 1,
        });
    }
    let logit = dot(v, pooled) + b;
    Ok((logit, sigmoid(logit)))
}

pub fn model_forward(example: &Example, params: &ModelParams, config: &ModelConfig) -> Result<ForwardTrace> {
    let mut hidden = Vec::with_capacity(params.cross.len() + 1);
    let mut pre_activation = Vec::with_capacity(params.cross.len());
    hidden.push(embed_forward(example, params)?);
    for layer in &params.cross {
        let h = hidden.last().expect("non-empty");
        let z = cross_pre_activation(h, layer)?;
        hidden.push(z.map(|v| config.cross_activation.apply(v)));
        pre_activation.push(z);
    }
    let pooled = sum_pool(hidden.last().expect("non-empty"));
    let (logit, probability) = predict_head(&pooled, &params.head_v, params.head_b)?;
    Ok(ForwardTrace {
        hidden,
        pre_activation,
        pooled,
        logit,
        probability,
    })
}

/// Exact per-example logloss gradient, `dL/dlogit = p - y`.
pub fn model_backward(
    trace: &ForwardTrace,
    label: u8,
    example: &Example,
    model: &SepCrossModel,
) -> Result<Gradients> {
    let mut grads = model.new_gradients();
    model.backward(example, trace, trace.probability - f64::from(label), &mut grads)?;
    Ok(grads)
}

/// Embeddings and `W_C`, `W_R` drawn from `Normal(0, 1/d)` and `Normal(0, 1/N)`
/// (standard deviations `1/sqrt(d)`, `1/sqrt(N)`); every bias and the head start at 0.
pub fn init_params(config: &ModelConfig, rng: &mut SeededRng) -> Result<ModelParams> {
    config.validate()?;
    let n = config.num_fields();
    let embedding = EmbeddingStack::init(&config.schema, config.embed_dim, config.has_dense_row(), rng);
    let w_std = 1.0 / (n as f64).sqrt();
    let cross = (0..config.cross_layers)
        .map(|_| CrossLayer {
            blocks: (0..config.blocks_per_layer())
                .map(|_| CrossWeights {
                    w_c: DenseMatrix::gaussian(n, n, w_std, rng),
                    w_r: DenseMatrix::gaussian(n, n, w_std, rng),
                    b_c: vec![0.0; n],
                })
                .collect(),
        })
        .collect();
    Ok(ModelParams {
        embedding,
        cross,
        head_v: vec![0.0; config.embed_dim],
        head_b: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SepCrossModel {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl SepCrossModel {
    pub fn new(config: ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        let params = init_params(&config, rng)?;
        Ok(Self { config, params })
    }

    /// All-zero parameters with the configured shapes.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = config.num_fields();
        let blank = CrossWeights {
            w_c: DenseMatrix::zeros(n, n),
            w_r: DenseMatrix::zeros(n, n),
            b_c: vec![0.0; n],
        };
        let params = ModelParams {
            embedding: EmbeddingStack::zeros(&config.schema, config.embed_dim, config.has_dense_row()),
            cross: (0..config.cross_layers)
                .map(|_| CrossLayer {
                    blocks: vec![blank.clone(); config.blocks_per_layer()],
                })
                .collect(),
            head_v: vec![0.0; config.embed_dim],
            head_b: 0.0,
        };
        Ok(Self { config, params })
    }

    fn cross_slot(&self, layer: usize, block: usize) -> usize {
        let before: usize = self.params.cross[..layer].iter().map(|l| l.blocks.len()).sum();
        self.params.embedding.num_slots() + 3 * (before + block)
    }

    fn head_slot(&self) -> usize {
        let blocks: usize = self.params.cross.iter().map(|l| l.blocks.len()).sum();
        self.params.embedding.num_slots() + 3 * blocks
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        let n = self.config.num_fields();
        let d = self.config.embed_dim;
        let ok = trace.hidden.len() == self.params.cross.len() + 1
            && trace.pre_activation.len() == self.params.cross.len()
            && trace.hidden.iter().chain(&trace.pre_activation).all(|m| m.shape() == (n, d))
            && trace.pooled.len() == d;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "forward trace does not match the model parameters".into(),
            ))
        }
    }
}

impl CtrModel for SepCrossModel {
    type Trace = ForwardTrace;

    fn kind(&self) -> ModelKind {
        ModelKind::SepCross
    }

    fn schema(&self) -> &DatasetSchema {
        &self.config.schema
    }

    fn forward(&self, example: &Example) -> Result<ForwardTrace> {
        model_forward(example, &self.params, &self.config)
    }

    fn trace_logit(trace: &ForwardTrace) -> f64 {
        trace.logit
    }

    fn backward(&self, example: &Example, trace: &ForwardTrace, d_logit: f64, grads: &mut Gradients) -> Result<()> {
        self.check_trace(trace)?;
        let (n, d) = (self.config.num_fields(), self.config.embed_dim);
        let head = self.head_slot();

        let dv = grads.dense_mut(head);
        for (g, &p) in dv.iter_mut().zip(trace.pooled.iter()) {
            *g += d_logit * p;
        }
        grads.dense_mut(head + 1)[0] += d_logit;

        // Pooling broadcasts dP back to every field row.
        let mut d_h = DenseMatrix::zeros(n, d);
        for r in 0..n {
            for (g, &v) in d_h.row_mut(r).iter_mut().zip(&self.params.head_v) {
                *g = d_logit * v;
            }
        }

        let act = self.config.cross_activation;
        for (l, layer) in self.params.cross.iter().enumerate().rev() {
            let h_in = &trace.hidden[l];
            let z = &trace.pre_activation[l];
            let mut d_z = d_h;
            for (g, &zv) in d_z.values_mut().iter_mut().zip(z.values()) {
                *g *= act.derivative(zv);
            }
            let mut d_in = DenseMatrix::zeros(n, d);
            for j in 0..d {
                let b = if layer.blocks.len() == 1 { 0 } else { j };
                let block = layer.block_for(j);
                let slot = self.cross_slot(l, b);
                {
                    let gwc = grads.dense_mut(slot);
                    for r in 0..n {
                        let dz = d_z[(r, j)];
                        if dz == 0.0 {
                            continue;
                        }
                        for i in 0..n {
                            let x = h_in[(i, j)];
                            gwc[r * n + i] += dz * x * x;
                        }
                    }
                }
                {
                    let gwr = grads.dense_mut(slot + 1);
                    for r in 0..n {
                        let dz = d_z[(r, j)];
                        if dz == 0.0 {
                            continue;
                        }
                        for i in 0..n {
                            gwr[r * n + i] += dz * h_in[(i, j)];
                        }
                    }
                }
                {
                    let gbc = grads.dense_mut(slot + 2);
                    for r in 0..n {
                        gbc[r] += d_z[(r, j)];
                    }
                }
                for i in 0..n {
                    let mut through_square = 0.0;
                    let mut through_residual = 0.0;
                    for r in 0..n {
                        let dz = d_z[(r, j)];
                        through_square += block.w_c[(r, i)] * dz;
                        through_residual += block.w_r[(r, i)] * dz;
                    }
                    d_in[(i, j)] = through_residual + 2.0 * h_in[(i, j)] * through_square;
                }
            }
            d_h = d_in;
        }

        self.params.embedding.backward(example, &d_h, grads, 0);
        Ok(())
    }

    fn layout(&self) -> Vec<SlotShape> {
        let n = self.config.num_fields();
        let mut out = self.params.embedding.layout();
        for (l, layer) in self.params.cross.iter().enumerate() {
            for b in 0..layer.blocks.len() {
                out.push(SlotShape::dense(format!("cross[{l}][{b}].w_c"), "cross.w_c", n * n));
                out.push(SlotShape::dense(format!("cross[{l}][{b}].w_r"), "cross.w_r", n * n));
                out.push(SlotShape::dense(format!("cross[{l}][{b}].b_c"), "cross.b_c", n));
            }
        }
        out.push(SlotShape::dense("head.v", "head.v", self.config.embed_dim));
        out.push(SlotShape::dense("head.b", "head.b", 1));
        out
    }

    fn slots(&self) -> Vec<&[f64]> {
        let mut out = self.params.embedding.slots();
        for layer in &self.params.cross {
            for b in &layer.blocks {
                out.push(b.w_c.values());
                out.push(b.w_r.values());
                out.push(&b.b_c);
            }
        }
        out.push(&self.params.head_v);
        out.push(std::slice::from_ref(&self.params.head_b));
        out
    }

    fn slots_mut(&mut self) -> Vec<&mut [f64]> {
        let ModelParams {
            embedding,
            cross,
            head_v,
            head_b,
        } = &mut self.params;
        let mut out = embedding.slots_mut();
        for layer in cross {
            for b in &mut layer.blocks {
                out.push(b.w_c.values_mut());
                out.push(b.w_r.values_mut());
                out.push(&mut b.b_c);
            }
        }
        out.push(head_v);
        out.push(std::slice::from_mut(head_b));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(fields: usize, buckets: usize, dense: usize) -> DatasetSchema {
        DatasetSchema::uniform(dense, fields, buckets).unwrap()
    }

    fn config(fields: usize, d: usize, layers: usize, separated: bool) -> ModelConfig {
        ModelConfig {
            schema: schema(fields, 6, 0),
            embed_dim: d,
            cross_layers: layers,
            separated,
            cross_activation: Activation::Identity,
            include_dense_as_field: false,
        }
    }

    fn example(cats: Vec<u32>, dense: Vec<f64>) -> Example {
        Example { label: 1, dense, cats }
    }

    #[test]
    fn embeds_rows_and_dense_projection() {
        let mut cfg = config(2, 2, 0, false);
        cfg.schema = schema(2, 4, 3);
        cfg.include_dense_as_field = true;
        let mut m = SepCrossModel::zeros(cfg).unwrap();
        let ex = example(vec![0, 0], vec![0.0; 3]);
        assert_eq!(embed_forward(&ex, &m.params).unwrap(), DenseMatrix::zeros(3, 2));

        m.params.embedding.tables[0].row_mut(2).copy_from_slice(&[1.0, 2.0]);
        m.params.embedding.tables[1].row_mut(3).copy_from_slice(&[3.0, 4.0]);
        let proj = m.params.embedding.dense_proj.as_mut().unwrap();
        proj.row_mut(0).copy_from_slice(&[5.0, 6.0]);
        proj.row_mut(1).copy_from_slice(&[7.0, 8.0]);
        let ex = example(vec![2, 3], vec![1.0, 0.0, 0.0]);
        let h = embed_forward(&ex, &m.params).unwrap();
        assert_eq!(h.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

        let bad = example(vec![4, 0], vec![0.0; 3]);
        assert!(matches!(
            embed_forward(&bad, &m.params),
            Err(Error::BucketOutOfRange { field: 0, bucket: 4, .. })
        ));
    }

    #[test]
    fn passthrough_and_scalar_cross() {
        let mut rng = SeededRng::new(4);
        let h = DenseMatrix::gaussian(3, 2, 1.0, &mut rng);
        let pass = CrossLayer {
            blocks: vec![CrossWeights::passthrough(3)],
        };
        assert_eq!(cross_layer_forward(&h, &pass, Activation::Identity).unwrap(), h);

        let scalar = CrossLayer {
            blocks: vec![CrossWeights {
                w_c: DenseMatrix::filled(1, 1, 1.0),
                w_r: DenseMatrix::filled(1, 1, 1.0),
                b_c: vec![0.0],
            }],
        };
        let out = cross_layer_forward(&DenseMatrix::filled(1, 1, 2.0), &scalar, Activation::Identity).unwrap();
        assert_eq!(out.values(), &[6.0]);

        let bad = CrossLayer {
            blocks: vec![CrossWeights::passthrough(2)],
        };
        assert!(cross_layer_forward(&h, &bad, Activation::Identity).is_err());
    }

    #[test]
    fn separated_layer_matches_scalar_loop() {
        let mut rng = SeededRng::new(12);
        let h = DenseMatrix::gaussian(3, 2, 1.0, &mut rng);
        let blocks: Vec<CrossWeights> = (0..2)
            .map(|_| CrossWeights {
                w_c: DenseMatrix::gaussian(3, 3, 1.0, &mut rng),
                w_r: DenseMatrix::gaussian(3, 3, 1.0, &mut rng),
                b_c: (0..3).map(|_| rng.next_gaussian()).collect(),
            })
            .collect();
        let layer = CrossLayer { blocks: blocks.clone() };
        let out = cross_layer_forward(&h, &layer, Activation::Relu).unwrap();
        for j in 0..2 {
            let b = &blocks[j];
            for r in 0..3 {
                let mut z = b.b_c[r];
                for i in 0..3 {
                    z += b.w_c[(r, i)] * h[(i, j)] * h[(i, j)] + b.w_r[(r, i)] * h[(i, j)];
                }
                assert!((out[(r, j)] - z.max(0.0)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn pooling_and_head() {
        assert_eq!(sum_pool(&DenseMatrix::filled(3, 4, 1.0)).as_slice(), &[3.0; 4]);
        let row = DenseMatrix::from_rows(&[vec![1.5, -2.0]]);
        assert_eq!(sum_pool(&row).as_slice(), row.values());

        let mut rng = SeededRng::new(8);
        let m = DenseMatrix::gaussian(5, 3, 1.0, &mut rng);
        let p = sum_pool(&m);
        for j in 0..3 {
            let mut s = 0.0;
            for r in 0..5 {
                s += m[(r, j)];
            }
            assert!((p[j] - s).abs() < 1e-14);
        }

        assert_eq!(predict_head(&[0.0, 0.0], &[0.3, 0.1], 0.0).unwrap().1, 0.5);
        assert_eq!(predict_head(&[2.0, -2.0], &[1.0, 1.0], 0.0).unwrap(), (0.0, 0.5));
        assert_eq!(predict_head(&[1.0], &[3.0], -3.0).unwrap(), (0.0, 0.5));
        assert!(predict_head(&[1.0], &[3.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = SepCrossModel::zeros(config(3, 2, 0, false)).unwrap();
        let t = m.forward(&example(vec![1, 2, 3], vec![])).unwrap();
        assert_eq!(t.probability, 0.5);
    }

    #[test]
    fn hand_traced_two_field_instance() {
        // N=2, d=1, L=1. e0 = 1, e1 = -2.
        // W_C = [[0.5, 0], [1, -1]], W_R = [[1, 2], [0, 1]], b_C = [0.1, -0.2]
        // squares: [1, 4]
        // z0 = 0.5*1 + 0*4 + 1*1 + 2*(-2) + 0.1 = -2.4
        // z1 = 1*1 - 1*4 + 0*1 + 1*(-2) - 0.2 = -5.2
        // P = -7.6, V = 0.25, b = 1 -> logit = -0.9
        let mut m = SepCrossModel::zeros(config(2, 1, 1, false)).unwrap();
        m.params.embedding.tables[0][(1, 0)] = 1.0;
        m.params.embedding.tables[1][(4, 0)] = -2.0;
        m.params.cross[0].blocks[0] = CrossWeights {
            w_c: DenseMatrix::from_rows(&[vec![0.5, 0.0], vec![1.0, -1.0]]),
            w_r: DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]),
            b_c: vec![0.1, -0.2],
        };
        m.params.head_v = vec![0.25];
        m.params.head_b = 1.0;
        let t = m.forward(&example(vec![1, 4], vec![])).unwrap();
        assert!((t.hidden[1][(0, 0)] + 2.4).abs() < 1e-12);
        assert!((t.hidden[1][(1, 0)] + 5.2).abs() < 1e-12);
        assert!((t.logit + 0.9).abs() < 1e-12);
        assert!((t.probability - sigmoid(-0.9)).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let mut rng = SeededRng::new(3);
        let m = SepCrossModel::new(config(3, 2, 2, true), &mut rng).unwrap();
        let ex = example(vec![1, 2, 3], vec![]);
        let mut t = m.forward(&ex).unwrap();
        t.probability = 1.0;
        let g = model_backward(&t, 1, &ex, &m).unwrap();
        for s in g.slots() {
            match s {
                super::super::SlotGrad::Dense(v) => assert!(v.iter().all(|&x| x == 0.0)),
                super::super::SlotGrad::Table { rows, .. } => {
                    assert!(rows.values().flatten().all(|&x| x == 0.0))
                }
            }
        }
    }

    #[test]
    fn only_touched_rows_receive_gradient() {
        let mut rng = SeededRng::new(5);
        let mut m = SepCrossModel::new(config(3, 2, 1, true), &mut rng).unwrap();
        m.params.head_v = vec![0.4, -0.3];
        let ex = example(vec![1, 0, 5], vec![]);
        let t = m.forward(&ex).unwrap();
        let g = model_backward(&t, 0, &ex, &m).unwrap();
        for (f, &bucket) in ex.cats.iter().enumerate() {
            let rows = g.table_rows(f);
            assert_eq!(rows.keys().copied().collect::<Vec<_>>(), vec![bucket]);
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = config(4, 3, 2, true);
        let a = init_params(&cfg, &mut SeededRng::new(77)).unwrap();
        let b = init_params(&cfg, &mut SeededRng::new(77)).unwrap();
        assert_eq!(a, b);
        assert!(a.head_v.iter().all(|&v| v == 0.0) && a.head_b == 0.0);
        assert!(a.cross.iter().flat_map(|l| &l.blocks).all(|b| b.b_c.iter().all(|&v| v == 0.0)));
        assert_eq!(a.cross[0].blocks.len(), 3);
    }

    #[test]
    fn embedding_init_scale() {
        let d = 4;
        let cfg = ModelConfig {
            schema: schema(1, 25_000, 0),
            embed_dim: d,
            cross_layers: 0,
            separated: false,
            cross_activation: Activation::Identity,
            include_dense_as_field: false,
        };
        let p = init_params(&cfg, &mut SeededRng::new(1)).unwrap();
        let v = p.embedding.tables[0].values();
        assert_eq!(v.len(), 100_000);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        let target = 1.0 / (d as f64).sqrt();
        assert!((std - target).abs() < 0.05 * target, "{std}");
    }

    #[test]
    fn sigmoid_cross_activation_rejected() {
        let mut cfg = config(2, 2, 1, false);
        cfg.cross_activation = Activation::Sigmoid;
        assert!(cfg.validate().is_err());
    }
}
