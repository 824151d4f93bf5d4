use crate::error::{Error, Result};
use crate::models::{Gradients, SlotGrad, SlotKind, SlotShape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const fn adam_default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        }
    }
}

/// Moment estimates for Adam; empty for SGD.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(optimizer: &Optimizer, layout: &[SlotShape]) -> Self {
        let mirror = || -> Vec<Vec<f64>> {
            match optimizer {
                Optimizer::Sgd => Vec::new(),
                Optimizer::Adam { .. } => layout.iter().map(|s| vec![0.0; s.kind.len()]).collect(),
            }
        };
        Self {
            first: mirror(),
            second: mirror(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Applies one update in place.
///
/// `l2` is decoupled weight decay, applied only to coordinates that receive a
/// gradient this step (every dense slot, touched rows of tables). Adam on
/// tables is lazy: untouched rows keep their moments unchanged.
pub fn optimizer_step(
    params: &mut [&mut [f64]],
    layout: &[SlotShape],
    grads: &Gradients,
    state: &mut OptimizerState,
    optimizer: &Optimizer,
    learning_rate: f64,
    l2: f64,
) -> Result<()> {
    if params.len() != layout.len() || grads.slots().len() != layout.len() {
        return Err(Error::InvalidConfig(
            "parameters, layout and gradients disagree on slot count".into(),
        ));
    }
    grads.check_layout(layout)?;
    grads.check_finite(layout)?;
    for (p, s) in params.iter().zip(layout) {
        if p.len() != s.kind.len() {
            return Err(Error::InvalidConfig(format!("parameter `{}` has the wrong length", s.name)));
        }
    }

    state.step += 1;
    let bias_correction = match *optimizer {
        Optimizer::Sgd => None,
        Optimizer::Adam { beta1, beta2, .. } => {
            if state.first.len() != layout.len() {
                return Err(Error::InvalidConfig("optimizer state does not match parameters".into()));
            }
            let t = state.step as i32;
            Some((1.0 - beta1.powi(t), 1.0 - beta2.powi(t)))
        }
    };

    // Updates coordinates `offset..offset + g.len()` of slot `i`.
    let mut update = |i: usize, offset: usize, g: &[f64], param: &mut [f64]| {
        let param = &mut param[offset..offset + g.len()];
        match (*optimizer, bias_correction) {
            (Optimizer::Sgd, _) => {
                for (p, &gv) in param.iter_mut().zip(g) {
                    *p -= learning_rate * (gv + l2 * *p);
                }
            }
            (Optimizer::Adam { beta1, beta2, eps }, Some((c1, c2))) => {
                let m = &mut state.first[i][offset..offset + g.len()];
                let v = &mut state.second[i][offset..offset + g.len()];
                for (((p, &gv), m), v) in param.iter_mut().zip(g).zip(m).zip(v) {
                    *m = beta1 * *m + (1.0 - beta1) * gv;
                    *v = beta2 * *v + (1.0 - beta2) * gv * gv;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= learning_rate * (m_hat / (v_hat.sqrt() + eps) + l2 * *p);
                }
            }
            (Optimizer::Adam { .. }, None) => unreachable!(),
        }
    };

    for (i, ((param, shape), g)) in params.iter_mut().zip(layout).zip(grads.slots()).enumerate() {
        match (shape.kind, g) {
            (SlotKind::Dense { .. }, SlotGrad::Dense(g)) => update(i, 0, g, param),
            (SlotKind::Table { cols, .. }, SlotGrad::Table { rows, .. }) => {
                for (&r, g) in rows {
                    update(i, r as usize * cols, g, param);
                }
            }
            _ => unreachable!("layout checked"),
        }
    }
    Ok(())
}
