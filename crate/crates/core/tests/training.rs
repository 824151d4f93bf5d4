use secn_core::data::{DatasetSchema, Example};
use secn_core::models::{CtrModel, FmConfig, FmModel, Gradients, ModelConfig, SepCrossModel, SlotGrad};
use secn_core::numeric::{Activation, SeededRng};
use secn_core::training::{batch_gradient, fit, optimizer_step, Optimizer, OptimizerState, TrainConfig};
use secn_core::data::Batch;

fn schema() -> DatasetSchema {
    DatasetSchema::uniform(0, 3, 8).unwrap()
}

fn model(seed: u64) -> SepCrossModel {
    let cfg = ModelConfig {
        schema: schema(),
        embed_dim: 4,
        cross_layers: 2,
        separated: true,
        cross_activation: Activation::Identity,
        include_dense_as_field: false,
    };
    SepCrossModel::new(cfg, &mut SeededRng::new(seed)).unwrap()
}

/// Label is 1 exactly when field 0 holds bucket 3.
fn separable(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|_| {
            let cats: Vec<u32> = (0..3).map(|_| rng.next_range(1, 8) as u32).collect();
            Example {
                label: u8::from(cats[0] == 3),
                dense: vec![],
                cats,
            }
        })
        .collect()
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = separable(200, 1);
    let mut m = model(1);
    let before = m.clone();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 1,
        batch_size: 32,
        ..Default::default()
    };
    let report = fit(&mut m, &data[..150], &data[150..], &cfg).unwrap();
    assert_eq!(m, before);
    assert_eq!(report.epochs.len(), 1);
}

#[test]
fn separable_task_descends() {
    let data = separable(2000, 2);
    let mut m = model(2);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 64,
        learning_rate: 1e-3,
        early_stop_patience: 0,
        ..Default::default()
    };
    let report = fit(&mut m, &data[..1600], &data[1600..], &cfg).unwrap();
    let losses: Vec<f64> = report.epochs.iter().map(|e| e.train_logloss).collect();
    assert_eq!(losses.len(), 20);
    for w in losses[..5].windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
    assert!(report.best().valid_auc.unwrap() > 0.95);
}

#[test]
fn training_is_bit_reproducible() {
    let data = separable(600, 3);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 50,
        ..Default::default()
    };
    let mut a = model(9);
    let mut b = model(9);
    let ra = fit(&mut a, &data[..500], &data[500..], &cfg).unwrap();
    let rb = fit(&mut b, &data[..500], &data[500..], &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.epochs, rb.epochs);

    let mut fa = FmModel::new(FmConfig { schema: schema(), k: 3 }, &mut SeededRng::new(1)).unwrap();
    let mut fb = fa.clone();
    fit(&mut fa, &data[..500], &data[500..], &cfg).unwrap();
    fit(&mut fb, &data[..500], &data[500..], &cfg).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn early_stopping_returns_best_epoch() {
    // Large learning rate to make validation loss bounce around.
    let data = separable(400, 4);
    let mut m = model(4);
    let cfg = TrainConfig {
        epochs: 12,
        batch_size: 16,
        learning_rate: 0.05,
        early_stop_patience: 2,
        ..Default::default()
    };
    let report = fit(&mut m, &data[..300], &data[300..], &cfg).unwrap();
    let best = report.best().valid_logloss;
    assert!(report.epochs.iter().all(|e| e.valid_logloss >= best));
    let returned = secn_core::training::evaluate(&m, &data[300..]).unwrap().logloss;
    assert_eq!(returned, best);
    if report.epochs.len() < 12 {
        assert_eq!(report.epochs.len() - 1 - report.best_epoch, 2);
    }
}

#[test]
fn updates_move_against_the_gradient() {
    let data = separable(64, 5);
    for opt in [Optimizer::Sgd, Optimizer::adam_default()] {
        let mut m = model(5);
        m.params.head_v = vec![0.3, -0.2, 0.1, 0.4];
        let layout = m.layout();
        let mut grads = Gradients::zeros(&layout);
        let batch = Batch {
            indices: (0..64).collect(),
        };
        batch_gradient(&m, &data, &batch, &mut grads).unwrap();
        let before = m.clone();
        let mut state = OptimizerState::new(&opt, &layout);
        optimizer_step(&mut m.slots_mut(), &layout, &grads, &mut state, &opt, 1e-3, 0.0).unwrap();
        let old = before.slots();
        let new = m.slots();
        let mut moved = 0;
        for (s, shape) in layout.iter().enumerate() {
            let coords: Vec<(usize, f64)> = match &grads.slots()[s] {
                SlotGrad::Dense(g) => g.iter().copied().enumerate().collect(),
                SlotGrad::Table { rows, cols } => rows
                    .iter()
                    .flat_map(|(&r, g)| g.iter().enumerate().map(move |(c, &v)| (r as usize * cols + c, v)))
                    .collect(),
            };
            for (j, g) in coords {
                let delta = new[s][j] - old[s][j];
                if g != 0.0 {
                    assert!(delta * g < 0.0, "{} coord {j}: g={g} delta={delta}", shape.name);
                    moved += 1;
                }
            }
        }
        assert!(moved > 50);
    }
}

#[test]
fn fit_rejects_empty_and_bad_config() {
    let data = separable(10, 6);
    let mut m = model(6);
    assert!(fit(&mut m, &[], &data, &TrainConfig::default()).is_err());
    let bad = TrainConfig {
        batch_size: 0,
        ..Default::default()
    };
    assert!(fit(&mut m, &data, &data, &bad).is_err());
}

#[test]
fn divergence_is_reported_with_position() {
    let data = separable(100, 7);
    let mut m = model(7);
    m.params.head_v = vec![1e200; 4];
    let cfg = TrainConfig {
        optimizer: Optimizer::Sgd,
        learning_rate: 1e10,
        ..Default::default()
    };
    match fit(&mut m, &data[..80], &data[80..], &cfg) {
        Err(secn_core::Error::Diverged { epoch: 0, .. }) => {}
        other => panic!("{other:?}"),
    }
}
