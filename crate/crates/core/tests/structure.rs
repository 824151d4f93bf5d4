use secn_core::data::{DatasetSchema, Example};
use secn_core::models::{
    cross_layer_forward, CrossLayer, CrossWeights, CtrModel, ModelConfig, SepCrossModel,
};
use secn_core::numeric::{Activation, DenseMatrix, SeededRng};

fn config(layers: usize, separated: bool) -> ModelConfig {
    ModelConfig {
        schema: DatasetSchema::uniform(3, 5, 12).unwrap(),
        embed_dim: 4,
        cross_layers: layers,
        separated,
        cross_activation: Activation::Identity,
        include_dense_as_field: true,
    }
}

fn examples(rng: &mut SeededRng, n: usize) -> Vec<Example> {
    (0..n)
        .map(|_| Example {
            label: 0,
            dense: (0..3).map(|_| rng.next_gaussian()).collect(),
            cats: (0..5).map(|_| rng.next_range(0, 12) as u32).collect(),
        })
        .collect()
}

fn with_random_head(mut m: SepCrossModel, rng: &mut SeededRng) -> SepCrossModel {
    m.params.head_v = (0..m.config.embed_dim).map(|_| rng.next_gaussian()).collect();
    m.params.head_b = rng.next_gaussian();
    m
}

#[test]
fn passthrough_layer_matches_zero_depth() {
    let mut rng = SeededRng::new(1);
    let base = with_random_head(SepCrossModel::new(config(0, false), &mut rng).unwrap(), &mut rng);
    for separated in [false, true] {
        let mut deep = base.clone();
        deep.config.cross_layers = 1;
        deep.config.separated = separated;
        let n = deep.config.num_fields();
        let blocks = if separated { 4 } else { 1 };
        deep.params.cross = vec![CrossLayer {
            blocks: vec![CrossWeights::passthrough(n); blocks],
        }];
        for ex in examples(&mut rng, 50) {
            let a = base.logit(&ex).unwrap();
            let b = deep.logit(&ex).unwrap();
            assert!((a - b).abs() <= 1e-12, "{a} {b}");
        }
    }
}

#[test]
fn replicated_separated_blocks_match_shared() {
    let mut rng = SeededRng::new(2);
    let shared = with_random_head(SepCrossModel::new(config(2, false), &mut rng).unwrap(), &mut rng);
    let mut separated = shared.clone();
    separated.config.separated = true;
    for layer in &mut separated.params.cross {
        let block = layer.blocks[0].clone();
        layer.blocks = vec![block; 4];
    }
    for ex in examples(&mut rng, 50) {
        let a = shared.logit(&ex).unwrap();
        let b = separated.logit(&ex).unwrap();
        assert!((a - b).abs() <= 1e-12, "{a} {b}");
    }
}

fn permute_rows(m: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    let mut out = m.clone();
    for (i, &p) in perm.iter().enumerate() {
        out.row_mut(i).copy_from_slice(m.row(p));
    }
    out
}

/// `P W Pᵀ` for the row permutation `perm`.
fn conjugate(w: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    let n = perm.len();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = w[(perm[i], perm[j])];
        }
    }
    out
}

#[test]
fn cross_layer_commutes_with_field_permutation() {
    let mut rng = SeededRng::new(3);
    let (n, d) = (5, 3);
    for separated in [false, true] {
        let blocks: Vec<CrossWeights> = (0..if separated { d } else { 1 })
            .map(|_| CrossWeights {
                w_c: DenseMatrix::gaussian(n, n, 1.0, &mut rng),
                w_r: DenseMatrix::gaussian(n, n, 1.0, &mut rng),
                b_c: (0..n).map(|_| rng.next_gaussian()).collect(),
            })
            .collect();
        let layer = CrossLayer { blocks };
        let h = DenseMatrix::gaussian(n, d, 1.0, &mut rng);
        let perm = rng.permutation(n);
        let permuted_layer = CrossLayer {
            blocks: layer
                .blocks
                .iter()
                .map(|b| CrossWeights {
                    w_c: conjugate(&b.w_c, &perm),
                    w_r: conjugate(&b.w_r, &perm),
                    b_c: perm.iter().map(|&p| b.b_c[p]).collect(),
                })
                .collect(),
        };
        for act in [Activation::Identity, Activation::Relu] {
            let out = cross_layer_forward(&h, &layer, act).unwrap();
            let out_perm = cross_layer_forward(&permute_rows(&h, &perm), &permuted_layer, act).unwrap();
            let expected = permute_rows(&out, &perm);
            for (a, b) in out_perm.values().iter().zip(expected.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn parameter_count_matches_closed_form() {
    let schema = DatasetSchema::uniform(13, 26, 100_000).unwrap();
    for separated in [true, false] {
        let cfg = ModelConfig {
            schema: schema.clone(),
            embed_dim: 8,
            cross_layers: 2,
            separated,
            cross_activation: Activation::Identity,
            include_dense_as_field: false,
        };
        let m = SepCrossModel::zeros(cfg).unwrap();
        let n = 26;
        let blocks = if separated { 8 } else { 1 };
        let cross = 2 * blocks * (2 * n * n + n);
        assert_eq!(m.parameter_count(), 26 * 100_000 * 8 + cross + 8 + 1);
    }
}
