use std::time::Instant;

use secn_core::models::ModelKind;
use secn_core::numeric::Activation;
use secn_core::training::{grad_check, GradCheckInstance, GradCheckOptions, GRAD_CHECK_TOLERANCE};

fn check(kind: ModelKind, instance: &GradCheckInstance, seed: u64) -> secn_core::training::GradCheckReport {
    let report = grad_check(kind, instance, seed, &GradCheckOptions::default()).unwrap();
    for g in &report.groups {
        println!("{kind} {:<12} {:>5} coords  max rel err {:.3e}", g.group, g.checked, g.max_rel_error);
    }
    report
}

#[test]
fn sepcross_separated_passes() {
    let r = check(ModelKind::SepCross, &GradCheckInstance::default(), 1);
    assert!(r.passed, "{r:?}");
    for group in ["embedding", "dense_proj", "cross.w_c", "cross.w_r", "cross.b_c", "head.v", "head.b"] {
        let g = r.group(group).unwrap_or_else(|| panic!("missing {group}"));
        assert!(g.checked > 0);
        assert!(g.max_rel_error < GRAD_CHECK_TOLERANCE);
    }
}

#[test]
fn sepcross_shared_passes() {
    let instance = GradCheckInstance {
        separated: false,
        ..Default::default()
    };
    assert!(check(ModelKind::SepCross, &instance, 2).passed);
}

#[test]
fn sepcross_relu_passes_across_seeds() {
    let instance = GradCheckInstance {
        activation: Activation::Relu,
        ..Default::default()
    };
    for seed in 10..15 {
        assert!(check(ModelKind::SepCross, &instance, seed).passed, "seed {seed}");
    }
}

#[test]
fn deeper_and_wider_instances_pass() {
    let instance = GradCheckInstance {
        num_fields: 5,
        embed_dim: 4,
        cross_layers: 3,
        param_std: 0.3,
        ..Default::default()
    };
    assert!(check(ModelKind::SepCross, &instance, 3).passed);
    let zero_depth = GradCheckInstance {
        cross_layers: 0,
        ..Default::default()
    };
    assert!(check(ModelKind::SepCross, &zero_depth, 4).passed);
}

#[test]
fn fm_passes() {
    let r = check(ModelKind::Fm, &GradCheckInstance::default(), 5);
    assert!(r.passed);
    assert!(r.max_error() < 1e-4);
    assert!(r.group("fm.table").is_some() && r.group("fm.dense").is_some());
}

#[test]
fn attention_passes() {
    let r = check(ModelKind::Attention, &GradCheckInstance::default(), 6);
    assert!(r.passed);
    assert!(r.group("attn.w_q").unwrap().checked == 9);
}

#[test]
fn corrupted_cross_gradient_is_caught() {
    let options = GradCheckOptions {
        corrupt: Some(("cross.w_c".into(), 2.0)),
        ..Default::default()
    };
    let r = grad_check(ModelKind::SepCross, &GradCheckInstance::default(), 1, &options).unwrap();
    assert!(!r.passed);
    let err = r.group("cross.w_c").unwrap().max_rel_error;
    assert!(err > 0.3, "{err}");
    assert!(r.group("cross.w_r").unwrap().max_rel_error < GRAD_CHECK_TOLERANCE);
}

#[test]
fn all_shipped_combinations_pass_quickly() {
    let start = Instant::now();
    for seed in 0..3 {
        for separated in [true, false] {
            let instance = GradCheckInstance {
                separated,
                ..Default::default()
            };
            assert!(check(ModelKind::SepCross, &instance, seed).passed);
        }
        assert!(check(ModelKind::Fm, &GradCheckInstance::default(), seed).passed);
        assert!(check(ModelKind::Attention, &GradCheckInstance::default(), seed).passed);
    }
    assert!(start.elapsed().as_secs_f64() < 15.0);
}
