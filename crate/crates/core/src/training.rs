//! Loss construction, the optimization loop and validation-based selection.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use builder_autodiff::{adam_step, clip_global_norm, AdamConfig, AdamState, Graph, Mode, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{decode_action, rollout_with_first, Predictor, DEFAULT_MAX_STEPS};
use crate::corpus::{balanced_batches, load_embeddings, shuffled_batches, CorpusError, Sample, Split, Vocabulary};
use crate::evaluation::{building_f1, joint_metrics, ConfusionMatrix, EvalError, F1Report, PredictionRecord};
use crate::model::{forward, Model, ModelConfig, ModelError, SlotPrediction, SlotVars};
use crate::task::{TaskKind, TypeClass};
use crate::world::{ActionTypeLabel, BuildAction, WorldState};

/// Cross-entropy floor shared with the graph op.
const CE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("sample {id}: {message}")]
    Data { id: String, message: String },
    #[error("loss diverged (non-finite) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("training configuration: {0}")]
    Config(String),
    #[error("no {0} samples")]
    EmptySplit(&'static str),
}

/// Weights of the location, color and type cross-entropies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub location: f64,
    pub color: f64,
    pub action_type: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: TaskKind,
    pub weights: LossWeights,
}

impl TaskSpec {
    /// Building sums the three losses; ask supervises only the type slot;
    /// joint weights them 0.1 / 0.1 / 0.8.
    pub fn new(task: TaskKind) -> Self {
        let (location, color, action_type) = match task {
            TaskKind::Building => (1.0, 1.0, 1.0),
            TaskKind::Ask => (0.0, 0.0, 1.0),
            TaskKind::Joint => (0.1, 0.1, 0.8),
        };
        Self {
            task,
            weights: LossWeights {
                location,
                color,
                action_type,
            },
        }
    }

    pub fn with_weights(task: TaskKind, weights: LossWeights) -> Result<Self, TrainError> {
        let w = [weights.location, weights.color, weights.action_type];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(TrainError::Config(format!("loss weights must be non-negative, got {w:?}")));
        }
        Ok(Self { task, weights })
    }
}

/// Gold labels for one supervised step. Location is present iff the type is
/// placement or removal, color iff it is placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTarget {
    pub type_index: usize,
    pub location: Option<usize>,
    pub color: Option<usize>,
}

impl StepTarget {
    pub fn for_class(task: TaskKind, class: TypeClass, action: Option<&BuildAction>) -> Option<Self> {
        let type_index = task.index_of(class)?;
        let location = match class {
            TypeClass::Placement | TypeClass::Removal => Some(action?.location()?.index()),
            _ => None,
        };
        let color = match class {
            TypeClass::Placement => Some(action?.color()?.code()),
            _ => None,
        };
        Some(Self {
            type_index,
            location,
            color,
        })
    }
}

/// Unweighted per-slot cross-entropies plus the weighted total. Masked
/// slots are exactly zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub location: f64,
    pub color: f64,
    pub action_type: f64,
    pub total: f64,
}

fn ce(p: f64) -> f64 {
    -p.max(CE_FLOOR).ln()
}

/// Loss of one prediction, computed directly on probabilities.
pub fn step_loss(pred: &SlotPrediction, target: &StepTarget, spec: &TaskSpec) -> LossComponents {
    let w = spec.weights;
    let location = target.location.map_or(0.0, |l| ce(pred.location_probs[l]));
    let color = target.color.map_or(0.0, |c| ce(pred.color_probs[c]));
    let action_type = ce(pred.type_probs[target.type_index]);
    LossComponents {
        location,
        color,
        action_type,
        total: w.location * location + w.color * color + w.action_type * action_type,
    }
}

/// Adds the weighted loss to `g`. Masked or zero-weight slots add no nodes,
/// so they contribute no gradient.
pub fn step_loss_graph(g: &mut Graph, slots: &SlotVars, target: &StepTarget, spec: &TaskSpec) -> Result<(Var, LossComponents), ModelError> {
    let w = spec.weights;
    let mut parts = LossComponents::default();
    let t = g.cross_entropy(slots.action_type, target.type_index)?;
    parts.action_type = g.value(t).data()[0];
    let mut total = g.scale(t, w.action_type);
    if let Some(l) = target.location {
        let v = g.cross_entropy(slots.location, l)?;
        parts.location = g.value(v).data()[0];
        if w.location > 0.0 {
            let v = g.scale(v, w.location);
            total = g.add(total, v)?;
        }
    }
    if let Some(c) = target.color {
        let v = g.cross_entropy(slots.color, c)?;
        parts.color = g.value(v).data()[0];
        if w.color > 0.0 {
            let v = g.scale(v, w.color);
            total = g.add(total, v)?;
        }
    }
    parts.total = g.value(total).data()[0];
    Ok((total, parts))
}

/// What to do with gold actions that are illegal when replayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayPolicy {
    #[default]
    Skip,
    Fail,
}

/// One teacher-forced step: the world before the gold action and its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainStep {
    pub sample: usize,
    pub world: WorldState,
    pub target: StepTarget,
    /// Gold build action, for build-class steps.
    pub gold: Option<BuildAction>,
}

/// Supervised steps of one sample. Execution samples give one step per gold
/// action with the world replayed through the preceding gold actions; ask
/// and others samples give one type-only step. Building ignores non-execution
/// samples; the ask task collapses execution to a single step.
pub fn sample_steps(sample: &Sample, index: usize, task: TaskKind, policy: ReplayPolicy) -> Result<Vec<TrainStep>, TrainError> {
    let data_err = |message: String| TrainError::Data {
        id: sample.id.clone(),
        message,
    };
    let single = |class| {
        let target = StepTarget::for_class(task, class, None).ok_or_else(|| data_err(format!("{class:?} is not a class of {task}")))?;
        Ok(vec![TrainStep {
            sample: index,
            world: sample.world.clone(),
            target,
            gold: None,
        }])
    };
    match (task, sample.label) {
        (TaskKind::Ask, label) => single(match label {
            ActionTypeLabel::Execution => TypeClass::Execution,
            ActionTypeLabel::Ask => TypeClass::Ask,
            ActionTypeLabel::Others => TypeClass::Others,
        }),
        (TaskKind::Building, ActionTypeLabel::Ask | ActionTypeLabel::Others) => Ok(Vec::new()),
        (TaskKind::Joint, ActionTypeLabel::Ask) => single(TypeClass::Ask),
        (TaskKind::Joint, ActionTypeLabel::Others) => single(TypeClass::Others),
        (_, ActionTypeLabel::Execution) => {
            if sample.gold_actions.last() != Some(&BuildAction::Stop) {
                return Err(data_err("gold actions must end with stop".into()));
            }
            let mut world = sample.world.clone();
            let mut steps = Vec::with_capacity(sample.gold_actions.len());
            for (i, a) in sample.gold_actions.iter().enumerate() {
                if let Err(e) = world.check(a) {
                    match policy {
                        ReplayPolicy::Fail => return Err(data_err(format!("gold_actions[{i}]: {e}"))),
                        ReplayPolicy::Skip => {
                            tracing::warn!(sample = %sample.id, step = i, error = %e, "skipping illegal gold action");
                            continue;
                        }
                    }
                }
                let class = TypeClass::of_action(a);
                let target = StepTarget::for_class(task, class, Some(a)).ok_or_else(|| data_err(format!("gold_actions[{i}]: missing location or color")))?;
                steps.push(TrainStep {
                    sample: index,
                    world: world.clone(),
                    target,
                    gold: Some(*a),
                });
                if *a != BuildAction::Stop {
                    world = world.apply(a).expect("checked above");
                }
            }
            Ok(steps)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Class-balanced resampling; only meaningful for ask and joint.
    pub balance_classes: bool,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Stop once the validation metric reaches this value.
    pub target_metric: Option<f64>,
    pub replay_policy: ReplayPolicy,
    pub vocab_min_count: usize,
    pub max_rollout_steps: usize,
    /// Word vectors (`token v1 … v_dw` per line) to initialize the embedding table.
    pub embeddings: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainConfig {
    /// Full-corpus settings.
    pub fn paper() -> Self {
        Self {
            lr: 1e-6,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            batch_size: 50,
            epochs: 50,
            seed: 0,
            balance_classes: true,
            clip_norm: Some(5.0),
            target_metric: None,
            replay_policy: ReplayPolicy::Skip,
            vocab_min_count: 1,
            max_rollout_steps: DEFAULT_MAX_STEPS,
            embeddings: None,
        }
    }

    /// Small synthetic corpora: same as [`TrainConfig::paper`] with a larger step size.
    pub fn desk() -> Self {
        Self { lr: 1e-3, ..Self::paper() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [self.lr, self.eps, 1.0 - self.beta1, 1.0 - self.beta2];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) || self.beta1 < 0.0 || self.beta2 < 0.0 {
            return Err(TrainError::Config("lr, eps must be positive and betas in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.max_rollout_steps == 0 {
            return Err(TrainError::Config("batch_size, epochs and max_rollout_steps must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(TrainError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// One line of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean weighted loss per step.
    pub train_loss: f64,
    /// Mean unweighted slot losses per step.
    pub components: LossComponents,
    pub val_metric: f64,
    pub steps: usize,
    pub batches: usize,
    /// Per-class sample draws this epoch, in label order.
    pub class_draws: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// 1-based epoch of the returned model.
    pub best_epoch: usize,
    pub best_metric: f64,
    pub log: Vec<EpochLog>,
}

/// Metric bundle for one evaluated split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricBundle {
    pub task: TaskKind,
    pub samples: usize,
    /// Micro net-change F1 (building: all execution samples; joint: execution-labelled samples).
    pub f1: Option<F1Report>,
    pub confusion: Option<ConfusionMatrix>,
    /// The selection metric: F1 for building and joint, overall accuracy for ask.
    pub metric: f64,
}

fn label_of(sample: &Sample) -> usize {
    sample.label.index()
}

/// Prediction for one sample: first decision, then a rollout when it is a build class.
pub fn predict_sample<P: Predictor + ?Sized>(model: &P, sample: &Sample, max_steps: usize) -> Result<PredictionRecord, ModelError> {
    let pred = model.predict_slots(&sample.world, &sample.dialogue)?;
    let first = decode_action(&pred, &sample.world, model.task());
    let actions = if first.class.is_build() {
        rollout_with_first(model, &sample.world, &sample.dialogue, max_steps, pred)?.actions
    } else {
        Vec::new()
    };
    Ok(PredictionRecord {
        sample_id: sample.id.clone(),
        predicted_type: first.class,
        predicted_group: first.class.group(),
        actions,
        gold_label: sample.label,
        gold_actions: sample.gold_actions.clone(),
        world: sample.world.snapshot(),
        confidence: first.confidence,
    })
}

/// Samples a task is scored on: building only sees execution samples.
pub fn task_samples(task: TaskKind, samples: &[Sample]) -> Vec<&Sample> {
    samples
        .iter()
        .filter(|s| task != TaskKind::Building || s.label == ActionTypeLabel::Execution)
        .collect()
}

pub fn predict_all<P: Predictor + ?Sized>(model: &P, samples: &[Sample], max_steps: usize) -> Result<Vec<PredictionRecord>, ModelError> {
    task_samples(model.task(), samples)
        .into_iter()
        .map(|s| predict_sample(model, s, max_steps))
        .collect()
}

/// Scores a prediction log; the same function backs validation and offline re-scoring.
pub fn score_records(task: TaskKind, records: &[PredictionRecord]) -> Result<MetricBundle, EvalError> {
    let (f1, confusion, metric) = match task {
        TaskKind::Building => {
            let f1 = building_f1(records);
            (Some(f1), None, f1.f1)
        }
        TaskKind::Ask => {
            let c = joint_metrics(records)?.confusion;
            let acc = c.overall_accuracy();
            (None, Some(c), acc)
        }
        TaskKind::Joint => {
            let r = joint_metrics(records)?;
            (Some(r.execution_f1), Some(r.confusion), r.execution_f1.f1)
        }
    };
    Ok(MetricBundle {
        task,
        samples: records.len(),
        f1,
        confusion,
        metric,
    })
}

/// Predicts and scores `samples`; returns the bundle and the prediction log.
pub fn evaluate_checkpoint(model: &Model, samples: &[Sample], spec: &TaskSpec, max_steps: usize) -> Result<(MetricBundle, Vec<PredictionRecord>), TrainError> {
    if model.task != spec.task {
        return Err(TrainError::Config(format!("checkpoint is for task {} but {} was requested", model.task, spec.task)));
    }
    let records = predict_all(model, samples, max_steps)?;
    Ok((score_records(spec.task, &records)?, records))
}

/// Fraction of teacher-forced steps whose decoded prediction matches gold:
/// the full action for build classes, the class otherwise.
pub fn step_accuracy(model: &Model, samples: &[Sample], policy: ReplayPolicy) -> Result<f64, TrainError> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for (i, s) in samples.iter().enumerate() {
        for step in sample_steps(s, i, model.task, policy)? {
            let pred = model.predict_slots(&step.world, &s.dialogue)?;
            let d = decode_action(&pred, &step.world, model.task);
            let ok = match step.gold {
                Some(gold) => d.action == Some(gold),
                None => model.task.index_of(d.class) == Some(step.target.type_index),
            };
            total += 1;
            correct += usize::from(ok);
        }
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

/// Mean batch gradient of the weighted step losses; also returns the loss sum and component sums.
fn batch_gradients(model: &Model, spec: &TaskSpec, samples: &[Sample], steps: &[&TrainStep], rng: &mut ChaCha8Rng) -> Result<(Vec<Tensor>, f64, LossComponents), TrainError> {
    let mut grads: Vec<Tensor> = model.params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut loss_sum = 0.0;
    let mut parts = LossComponents::default();
    for step in steps {
        let sample = &samples[step.sample];
        let input = model.input(&step.world, &sample.dialogue);
        let mut g = Graph::new(Mode::Train);
        let b = g.bind(&model.params);
        let out = forward(&mut g, &b, &model.config, &input, rng)?;
        let (loss, p) = step_loss_graph(&mut g, &out.slots, &step.target, spec)?;
        loss_sum += p.total;
        parts.location += p.location;
        parts.color += p.color;
        parts.action_type += p.action_type;
        parts.total += p.total;
        if !p.total.is_finite() {
            // Reported by the caller with coordinates.
            return Ok((grads, f64::NAN, parts));
        }
        let step_grads = g.backward(loss).map_err(ModelError::from)?.collect(&b);
        for (acc, sg) in grads.iter_mut().zip(&step_grads) {
            acc.data_mut().iter_mut().zip(sg.data()).for_each(|(a, x)| *a += x);
        }
    }
    let n = steps.len().max(1) as f64;
    for t in &mut grads {
        t.data_mut().iter_mut().for_each(|x| *x /= n);
    }
    Ok((grads, loss_sum, parts))
}

/// Trains from scratch on `train`, selecting by the validation metric on `valid`.
pub fn train(
    train: &[Sample],
    valid: &[Sample],
    spec: &TaskSpec,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if valid.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let mut model_cfg = model_cfg.clone();
    model_cfg.d_a = spec.task.num_types();
    let vocab = Vocabulary::build(train, cfg.vocab_min_count);
    let mut model = Model::new(model_cfg, spec.task, vocab, cfg.seed)?;
    if let Some(path) = &cfg.embeddings {
        let file = File::open(path).map_err(CorpusError::from)?;
        let table = model.params.get_mut("text.embedding").expect("embedding parameter");
        let found = load_embeddings(BufReader::new(file), &model.vocab, table)?;
        tracing::info!(found, vocab = model.vocab.len(), "loaded pre-trained embeddings");
    }

    let per_sample: Vec<Vec<TrainStep>> = train
        .iter()
        .enumerate()
        .map(|(i, s)| sample_steps(s, i, spec.task, cfg.replay_policy))
        .collect::<Result<_, _>>()?;
    let usable: Vec<usize> = (0..train.len()).filter(|&i| !per_sample[i].is_empty()).collect();
    if usable.is_empty() {
        return Err(TrainError::EmptySplit("trainable"));
    }
    let classes: Vec<usize> = usable.iter().map(|&i| label_of(&train[i])).collect();
    let balance = cfg.balance_classes && spec.task != TaskKind::Building;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let adam = cfg.adam();
    let mut state = AdamState::new(model.params.tensors());
    let mut best: Option<(usize, f64, Model)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let batches = if balance {
            balanced_batches(&classes, 3, cfg.batch_size, &mut rng)?
        } else {
            shuffled_batches(usable.len(), cfg.batch_size, &mut rng)?
        };
        let mut class_draws = [0usize; 3];
        let mut loss_sum = 0.0;
        let mut parts = LossComponents::default();
        let mut n_steps = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let steps: Vec<&TrainStep> = batch
                .iter()
                .flat_map(|&k| {
                    class_draws[classes[k]] += 1;
                    per_sample[usable[k]].iter()
                })
                .collect();
            let (mut grads, batch_loss, p) = batch_gradients(&model, spec, train, &steps, &mut rng)?;
            if !batch_loss.is_finite() || grads.iter().any(|t| !t.all_finite()) {
                return Err(TrainError::Divergence { epoch, batch: bi + 1 });
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam_step(model.params.tensors_mut(), &grads, &mut state, &adam).map_err(ModelError::from)?;
            loss_sum += batch_loss;
            parts.location += p.location;
            parts.color += p.color;
            parts.action_type += p.action_type;
            parts.total += p.total;
            n_steps += steps.len();
        }
        let n = n_steps.max(1) as f64;
        let records = predict_all(&model, valid, cfg.max_rollout_steps)?;
        let val_metric = score_records(spec.task, &records)?.metric;
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / n,
            components: LossComponents {
                location: parts.location / n,
                color: parts.color / n,
                action_type: parts.action_type / n,
                total: parts.total / n,
            },
            val_metric,
            steps: n_steps,
            batches: batches.len(),
            class_draws,
        };
        tracing::info!(epoch, loss = entry.train_loss, val_metric, "epoch done");
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|(_, m, _)| val_metric > *m) {
            best = Some((epoch, val_metric, model.clone()));
        }
        if cfg.target_metric.is_some_and(|t| val_metric >= t) {
            break;
        }
    }
    let (best_epoch, best_metric, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_metric,
        log,
    })
}

/// Splits a corpus by its split tags and trains.
pub fn train_corpus(
    samples: &[Sample],
    spec: &TaskSpec,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    let pick = |split| samples.iter().filter(|s| s.split == split).cloned().collect::<Vec<_>>();
    train(&pick(Split::Train), &pick(Split::Valid), spec, cfg, model_cfg, on_epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Color, Coord};

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn masking_rules() {
        let spec = TaskSpec::new(TaskKind::Building);
        let pred = SlotPrediction {
            location_probs: uniform(1089),
            color_probs: uniform(6),
            type_probs: vec![0.5, 0.25, 0.25],
        };
        let stop = StepTarget::for_class(TaskKind::Building, TypeClass::Stop, Some(&BuildAction::Stop)).unwrap();
        let l = step_loss(&pred, &stop, &spec);
        assert_eq!((l.location, l.color), (0.0, 0.0));
        assert_eq!(l.total, -(0.25f64).ln());
        let rm = BuildAction::Remove { at: Coord::from_index(5) };
        let t = StepTarget::for_class(TaskKind::Building, TypeClass::Removal, Some(&rm)).unwrap();
        let l = step_loss(&pred, &t, &spec);
        assert_eq!(l.color, 0.0);
        assert!(l.location > 0.0);
        let place = BuildAction::Place {
            at: Coord::from_index(5),
            color: Color::Green,
        };
        assert_eq!(
            StepTarget::for_class(TaskKind::Building, TypeClass::Placement, Some(&place)),
            Some(StepTarget {
                type_index: 0,
                location: Some(5),
                color: Some(Color::Green.code()),
            })
        );
        assert_eq!(StepTarget::for_class(TaskKind::Building, TypeClass::Placement, None), None);
    }

    #[test]
    fn config_presets() {
        assert_eq!(TrainConfig::paper().lr, 1e-6);
        assert_eq!(TrainConfig::desk().lr, 1e-3);
        assert_eq!(TrainConfig::paper().batch_size, 50);
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::desk() }.validate().is_err());
        assert!(TaskSpec::with_weights(
            TaskKind::Joint,
            LossWeights {
                location: -1.0,
                color: 0.0,
                action_type: 1.0
            }
        )
        .is_err());
    }
}
