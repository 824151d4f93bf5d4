use crate::data::{DatasetSchema, Example};
use crate::error::Result;
use crate::models::{AttentionModel, CtrModel, FmConfig, FmModel, ModelConfig, ModelKind, SepCrossModel, SlotKind};
use crate::numeric::{sigmoid, softplus, Activation, SeededRng};

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

/// Size of the randomly generated probe problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckInstance {
    pub num_fields: usize,
    pub buckets: usize,
    pub num_dense: usize,
    pub embed_dim: usize,
    pub cross_layers: usize,
    pub batch: usize,
    pub separated: bool,
    pub activation: Activation,
    /// Every parameter is redrawn from `Normal(0, param_std^2)` so no gradient is trivially zero.
    pub param_std: f64,
}

impl Default for GradCheckInstance {
    fn default() -> Self {
        Self {
            num_fields: 4,
            buckets: 16,
            num_dense: 2,
            embed_dim: 3,
            cross_layers: 2,
            batch: 8,
            separated: true,
            activation: Activation::Identity,
            param_std: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Multiplies the analytic gradient of one group before comparing. Test hook.
    pub corrupt: Option<(String, f64)>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: GRAD_CHECK_STEP,
            tolerance: GRAD_CHECK_TOLERANCE,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub group: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub kind: ModelKind,
    pub groups: Vec<GroupError>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn group(&self, name: &str) -> Option<&GroupError> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn max_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

/// Unclipped mean logloss, computed from logits.
fn batch_loss<M: CtrModel>(model: &M, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let z = model.logit(ex)?;
        total += softplus(z) - f64::from(ex.label) * z;
    }
    Ok(total / examples.len() as f64)
}

/// Compares the analytic batch gradient against central differences for
/// every dense coordinate and every touched table row.
pub fn grad_check_model<M: CtrModel>(model: &M, examples: &[Example], options: &GradCheckOptions) -> Result<GradCheckReport> {
    let layout = model.layout();
    let mut grads = model.new_gradients();
    let scale = 1.0 / examples.len() as f64;
    for ex in examples {
        let trace = model.forward(ex)?;
        let p = sigmoid(M::trace_logit(&trace));
        model.backward(ex, &trace, (p - f64::from(ex.label)) * scale, &mut grads)?;
    }
    if let Some((group, factor)) = &options.corrupt {
        let idx: Vec<usize> = layout
            .iter()
            .enumerate()
            .filter(|(_, s)| s.group == group.as_str())
            .map(|(i, _)| i)
            .collect();
        let mut scaled = grads.clone();
        scaled.scale(*factor);
        for i in idx {
            grads.slots_mut()[i] = scaled.slots()[i].clone();
        }
    }

    let mut groups: Vec<GroupError> = Vec::new();
    let mut probe = model.clone();
    let h = options.step;
    for (s, shape) in layout.iter().enumerate() {
        let coords: Vec<(usize, f64)> = match shape.kind {
            SlotKind::Dense { .. } => grads.dense(s).iter().copied().enumerate().collect(),
            SlotKind::Table { cols, .. } => grads
                .table_rows(s)
                .iter()
                .flat_map(|(&r, g)| g.iter().enumerate().map(move |(c, &v)| (r as usize * cols + c, v)))
                .collect(),
        };
        let mut worst: f64 = 0.0;
        for &(j, analytic) in &coords {
            let original = probe.slots()[s][j];
            probe.slots_mut()[s][j] = original + h;
            let up = batch_loss(&probe, examples)?;
            probe.slots_mut()[s][j] = original - h;
            let down = batch_loss(&probe, examples)?;
            probe.slots_mut()[s][j] = original;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1.0);
            worst = worst.max(rel);
        }
        match groups.iter_mut().find(|g| g.group == shape.group) {
            Some(g) => {
                g.max_rel_error = g.max_rel_error.max(worst);
                g.checked += coords.len();
            }
            None => groups.push(GroupError {
                group: shape.group.to_string(),
                max_rel_error: worst,
                checked: coords.len(),
            }),
        }
    }
    let passed = groups.iter().all(|g| g.max_rel_error < options.tolerance);
    Ok(GradCheckReport {
        kind: model.kind(),
        groups,
        tolerance: options.tolerance,
        passed,
    })
}

fn randomize<M: CtrModel>(model: &mut M, std: f64, rng: &mut SeededRng) {
    for slot in model.slots_mut() {
        for v in slot.iter_mut() {
            *v = std * rng.next_gaussian();
        }
    }
}

/// Builds a random instance of `kind` and checks its gradients.
pub fn grad_check(
    kind: ModelKind,
    instance: &GradCheckInstance,
    seed: u64,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut rng = SeededRng::new(seed);
    let schema = DatasetSchema::uniform(instance.num_dense, instance.num_fields, instance.buckets)?;
    let examples: Vec<Example> = (0..instance.batch)
        .map(|_| Example {
            label: u8::from(rng.next_uniform() < 0.5),
            dense: (0..instance.num_dense).map(|_| rng.next_gaussian()).collect(),
            cats: (0..instance.num_fields)
                .map(|_| rng.next_range(0, instance.buckets) as u32)
                .collect(),
        })
        .collect();
    let config = ModelConfig {
        schema: schema.clone(),
        embed_dim: instance.embed_dim,
        cross_layers: instance.cross_layers,
        separated: instance.separated,
        cross_activation: instance.activation,
        include_dense_as_field: true,
    };
    match kind {
        ModelKind::SepCross => {
            let mut m = SepCrossModel::new(config, &mut rng)?;
            randomize(&mut m, instance.param_std, &mut rng);
            grad_check_model(&m, &examples, options)
        }
        ModelKind::Attention => {
            let mut m = AttentionModel::new(config, &mut rng)?;
            randomize(&mut m, instance.param_std, &mut rng);
            grad_check_model(&m, &examples, options)
        }
        ModelKind::Fm => {
            let mut m = FmModel::new(
                FmConfig {
                    schema,
                    k: instance.embed_dim,
                },
                &mut rng,
            )?;
            randomize(&mut m, instance.param_std, &mut rng);
            grad_check_model(&m, &examples, options)
        }
    }
}
