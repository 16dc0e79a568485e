//! Turning slot predictions into legal actions and multi-step builds.

use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::model::{Model, ModelError, SlotPrediction};
use crate::task::{TaskKind, TypeClass};
use crate::world::{BuildAction, Color, Coord, WorldState, NUM_CELLS};

pub const DEFAULT_MAX_STEPS: usize = 40;

/// Anything that maps (world, dialogue) to slot distributions.
pub trait Predictor {
    fn task(&self) -> TaskKind;
    fn predict_slots(&self, world: &WorldState, dialogue: &[Utterance]) -> Result<SlotPrediction, ModelError>;
}

impl Predictor for Model {
    fn task(&self) -> TaskKind {
        self.task
    }

    fn predict_slots(&self, world: &WorldState, dialogue: &[Utterance]) -> Result<SlotPrediction, ModelError> {
        self.predict(&self.input(world, dialogue))
    }
}

/// Result of decoding one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub class: TypeClass,
    /// Present for build classes.
    pub action: Option<BuildAction>,
    /// Type-slot probability of the chosen class.
    pub confidence: f64,
}

/// Index of the largest value among `candidates`; ties go to the earliest.
fn argmax_over(probs: &[f64], candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in candidates {
        if best.is_none_or(|b| probs[i] > probs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Type classes by descending probability, lowest index first on ties.
fn ranked_types(probs: &[f64], allowed: impl Fn(TypeClass) -> bool, task: TaskKind) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).filter(|&i| allowed(task.class(i))).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx
}

fn decode_with(pred: &SlotPrediction, w: &WorldState, task: TaskKind, allowed: impl Fn(TypeClass) -> bool) -> Decoded {
    debug_assert_eq!(pred.location_probs.len(), NUM_CELLS);
    for t in ranked_types(&pred.type_probs, allowed, task) {
        let class = task.class(t);
        let confidence = pred.type_probs[t];
        let action = match class {
            TypeClass::Placement => {
                let cells = w.feasible_placements();
                let Some(at) = argmax_over(&pred.location_probs, cells.iter().map(|c| c.index())) else {
                    tracing::debug!("no feasible placement; trying next type");
                    continue;
                };
                let color = argmax_over(&pred.color_probs, 0..pred.color_probs.len()).and_then(Color::from_code).unwrap_or(Color::Red);
                Some(BuildAction::Place {
                    at: Coord::from_index(at),
                    color,
                })
            }
            TypeClass::Removal => {
                let cells = w.feasible_removals();
                let Some(at) = argmax_over(&pred.location_probs, cells.iter().map(|c| c.index())) else {
                    tracing::debug!("nothing to remove; trying next type");
                    continue;
                };
                Some(BuildAction::Remove { at: Coord::from_index(at) })
            }
            TypeClass::Stop => Some(BuildAction::Stop),
            TypeClass::Execution | TypeClass::Ask | TypeClass::Others => None,
        };
        return Decoded { class, action, confidence };
    }
    // Only reachable when every allowed class is an empty build class, which
    // cannot happen while stop is allowed.
    Decoded {
        class: TypeClass::Stop,
        action: Some(BuildAction::Stop),
        confidence: 0.0,
    }
}

/// Type first, then location within that type's feasible set, then color.
pub fn decode_action(pred: &SlotPrediction, w: &WorldState, task: TaskKind) -> Decoded {
    decode_with(pred, w, task, |_| true)
}

/// As [`decode_action`] but restricted to placement / removal / stop; used
/// once a turn has committed to building.
pub fn decode_build_action(pred: &SlotPrediction, w: &WorldState, task: TaskKind) -> Decoded {
    decode_with(pred, w, task, TypeClass::is_build)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Stop-terminated.
    pub actions: Vec<BuildAction>,
    pub world: WorldState,
    /// Whether the cap was hit and a stop appended.
    pub truncated: bool,
}

/// As [`rollout`], reusing an already computed prediction for the first step.
pub fn rollout_with_first<P: Predictor + ?Sized>(
    model: &P,
    w0: &WorldState,
    dialogue: &[Utterance],
    max_steps: usize,
    first: SlotPrediction,
) -> Result<Rollout, ModelError> {
    rollout_streaming(model, w0, dialogue, max_steps, first, &mut |_| {})
}

fn rollout_streaming<P: Predictor + ?Sized>(
    model: &P,
    w0: &WorldState,
    dialogue: &[Utterance],
    max_steps: usize,
    first: SlotPrediction,
    on_action: &mut dyn FnMut(&BuildAction),
) -> Result<Rollout, ModelError> {
    let mut first = Some(first);
    let max_steps = max_steps.max(1);
    let mut world = w0.clone();
    let mut actions = Vec::new();
    while actions.len() < max_steps {
        let pred = match first.take() {
            Some(p) => p,
            None => model.predict_slots(&world, dialogue)?,
        };
        let d = decode_build_action(&pred, &world, model.task());
        let action = d.action.unwrap_or(BuildAction::Stop);
        on_action(&action);
        actions.push(action);
        if action == BuildAction::Stop {
            return Ok(Rollout {
                actions,
                world,
                truncated: false,
            });
        }
        world = world.apply(&action).expect("decoded actions are feasible");
    }
    on_action(&BuildAction::Stop);
    actions.push(BuildAction::Stop);
    Ok(Rollout {
        actions,
        world,
        truncated: true,
    })
}

/// Greedy build: predict, decode, apply, re-encode, until stop or `max_steps`
/// build actions (then a stop is appended).
pub fn rollout<P: Predictor + ?Sized>(model: &P, w0: &WorldState, dialogue: &[Utterance], max_steps: usize) -> Result<Rollout, ModelError> {
    let first = model.predict_slots(w0, dialogue)?;
    rollout_with_first(model, w0, dialogue, max_steps, first)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DecisionKind {
    Execute { actions: Vec<BuildAction> },
    Ask,
    Others,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDecision {
    #[serde(flatten)]
    pub kind: DecisionKind,
    pub confidence: f64,
}

/// Per-session dialogue and world.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionState {
    pub world: WorldState,
    pub dialogue: Vec<Utterance>,
}

/// Handles one architect utterance: a single type decision, then a rollout
/// when it falls in the execution group. The session world is updated with
/// the built result.
pub fn turn<P: Predictor + ?Sized>(model: &P, session: &mut SessionState, utterance: &str, max_steps: usize) -> Result<AgentDecision, ModelError> {
    turn_streaming(model, session, utterance, max_steps, &mut |_| {})
}

/// As [`turn`], reporting each build action to `on_action` as soon as it is decided.
pub fn turn_streaming<P: Predictor + ?Sized>(
    model: &P,
    session: &mut SessionState,
    utterance: &str,
    max_steps: usize,
    on_action: &mut dyn FnMut(&BuildAction),
) -> Result<AgentDecision, ModelError> {
    session.dialogue.push(Utterance::architect(utterance));
    let pred = model.predict_slots(&session.world, &session.dialogue)?;
    let first = decode_action(&pred, &session.world, model.task());
    let kind = match first.class {
        TypeClass::Ask => DecisionKind::Ask,
        TypeClass::Others => DecisionKind::Others,
        // Without an action head there is nothing to build.
        TypeClass::Execution => {
            on_action(&BuildAction::Stop);
            DecisionKind::Execute {
                actions: vec![BuildAction::Stop],
            }
        }
        TypeClass::Placement | TypeClass::Removal | TypeClass::Stop => {
            let r = rollout_streaming(model, &session.world, &session.dialogue, max_steps, pred, on_action)?;
            session.world = r.world;
            DecisionKind::Execute { actions: r.actions }
        }
    };
    Ok(AgentDecision {
        kind,
        confidence: first.confidence,
    })
}
