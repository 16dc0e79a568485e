//! Decoding against an exhaustive scan, and rollout legality for arbitrary models.

use builder_core::agent::{decode_action, rollout, turn, AgentDecision, DecisionKind, Predictor, SessionState};
use builder_core::corpus::{synth_generate, GrammarConfig, Utterance, Vocabulary};
use builder_core::model::{Model, ModelConfig, ModelError, SlotPrediction};
use builder_core::task::{TaskKind, TypeClass};
use builder_core::world::{BuildAction, Color, Coord, WorldState, NUM_CELLS};
use proptest::prelude::*;

fn arb_world(max: usize) -> impl Strategy<Value = WorldState> {
    prop::collection::vec((0usize..NUM_CELLS, 0usize..6), 0..=max).prop_map(|picks| {
        let mut w = WorldState::empty();
        for (seed, c) in picks {
            let options = w.feasible_placements();
            let at = options[seed % options.len()];
            w = w
                .apply(&BuildAction::Place {
                    at,
                    color: Color::from_code(c).unwrap(),
                })
                .unwrap();
        }
        w
    })
}

fn arb_probs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    // Coarse values so ties actually occur.
    prop::collection::vec(0u8..8, n).prop_map(|v| {
        let s: f64 = v.iter().map(|&x| x as f64 + 1.0).sum();
        v.iter().map(|&x| (x as f64 + 1.0) / s).collect()
    })
}

fn occupied(w: &WorldState, x: i64, y: i64, z: i64) -> bool {
    Coord::new(x, y, z).map(|c| w.get(c).is_some()).unwrap_or(false)
}

/// Scans every cell: empty and either on the ground or face-touching a block.
fn placeable(w: &WorldState, i: usize) -> bool {
    let c = Coord::from_index(i);
    let (x, y, z) = (c.x() as i64, c.y() as i64, c.z() as i64);
    w.get(c).is_none()
        && (y == 0 || [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)].iter().any(|(dx, dy, dz)| occupied(w, x + dx, y + dy, z + dz)))
}

fn first_max(probs: &[f64], ok: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best = None;
    for i in 0..probs.len() {
        if ok(i) && best.is_none_or(|b: usize| probs[i] > probs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Independent decoder: repeatedly take the best remaining type until one has a candidate.
fn oracle(p: &SlotPrediction, w: &WorldState) -> BuildAction {
    let mut tried = [false; 3];
    loop {
        let t = first_max(&p.type_probs, |i| !tried[i]).unwrap();
        tried[t] = true;
        match t {
            0 => {
                if let Some(l) = first_max(&p.location_probs, |i| placeable(w, i)) {
                    let c = first_max(&p.color_probs, |_| true).unwrap();
                    return BuildAction::Place {
                        at: Coord::from_index(l),
                        color: Color::from_code(c).unwrap(),
                    };
                }
            }
            1 => {
                if let Some(l) = first_max(&p.location_probs, |i| w.get(Coord::from_index(i)).is_some()) {
                    return BuildAction::Remove { at: Coord::from_index(l) };
                }
            }
            _ => return BuildAction::Stop,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decoding_matches_exhaustive_scan(
        w in arb_world(15),
        location in arb_probs(NUM_CELLS),
        color in arb_probs(6),
        types in arb_probs(3),
    ) {
        let p = SlotPrediction { location_probs: location, color_probs: color, type_probs: types };
        let d = decode_action(&p, &w, TaskKind::Building);
        prop_assert_eq!(d.action, Some(oracle(&p, &w)));
        prop_assert_eq!(d.confidence, p.type_probs[TaskKind::Building.index_of(d.class).unwrap()]);
        prop_assert_eq!(decode_action(&p, &w, TaskKind::Building), d);
        prop_assert!(w.check(&d.action.unwrap()).is_ok());
    }
}

fn random_model(seed: u64, task: TaskKind) -> Model {
    let samples = synth_generate(20, seed, &GrammarConfig::default());
    let cfg = ModelConfig {
        d_a: task.num_types(),
        ..ModelConfig::tiny()
    };
    Model::new(cfg, task, Vocabulary::build(&samples, 1), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rollouts_are_legal_and_bounded(seed in 0u64..1000, w in arb_world(12), max_steps in 1usize..8, joint in any::<bool>()) {
        let task = if joint { TaskKind::Joint } else { TaskKind::Building };
        let m = random_model(seed, task);
        let dialogue = [Utterance::architect("build a tower of 3 red blocks at 4 4")];
        let r = rollout(&m, &w, &dialogue, max_steps).unwrap();
        prop_assert!(r.actions.len() <= max_steps + 1);
        prop_assert_eq!(r.actions.last(), Some(&BuildAction::Stop));
        prop_assert_eq!(r.actions.iter().filter(|a| **a == BuildAction::Stop).count(), 1);
        let replayed = w.apply_all(&r.actions).unwrap();
        prop_assert_eq!(replayed.cells(), r.world.cells());
    }
}

struct Scripted {
    task: TaskKind,
    types: Vec<f64>,
    stop_after: Option<usize>,
}

impl Predictor for Scripted {
    fn task(&self) -> TaskKind {
        self.task
    }

    fn predict_slots(&self, world: &WorldState, _: &[Utterance]) -> Result<SlotPrediction, ModelError> {
        // Build on the ground at flat index 0, then on top of it.
        let mut location = vec![0.0; NUM_CELLS];
        location[0] = 0.5;
        location[Coord::new(0, 1, 0).unwrap().index()] = 0.4;
        let mut types = self.types.clone();
        if self.stop_after.is_some_and(|n| world.block_count() >= n) {
            types = vec![0.0; types.len()];
            types[TaskKind::Joint.index_of(TypeClass::Stop).unwrap()] = 1.0;
        }
        Ok(SlotPrediction {
            location_probs: location,
            color_probs: vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            type_probs: types,
        })
    }
}

#[test]
fn turns_update_the_session() {
    let asker = Scripted {
        task: TaskKind::Joint,
        types: vec![0.1, 0.0, 0.0, 0.8, 0.1],
        stop_after: None,
    };
    let mut s = SessionState::default();
    let d = turn(&asker, &mut s, "place a block", 40).unwrap();
    assert_eq!(d, AgentDecision { kind: DecisionKind::Ask, confidence: 0.8 });
    assert_eq!(s.world, WorldState::empty());
    assert_eq!(s.dialogue, vec![Utterance::architect("place a block")]);

    let builder = Scripted {
        task: TaskKind::Joint,
        types: vec![0.9, 0.0, 0.0, 0.05, 0.05],
        stop_after: Some(2),
    };
    let d = turn(&builder, &mut s, "two orange blocks at 0 0", 40).unwrap();
    let orange = Color::from_code(1).unwrap();
    let expected = vec![
        BuildAction::Place { at: Coord::from_index(0), color: orange },
        BuildAction::Place {
            at: Coord::new(0, 1, 0).unwrap(),
            color: orange,
        },
        BuildAction::Stop,
    ];
    assert_eq!(d.kind, DecisionKind::Execute { actions: expected.clone() });
    assert_eq!(s.world, WorldState::empty().apply_all(&expected).unwrap());
    assert_eq!(s.dialogue.len(), 2);

    let chatter = Scripted {
        task: TaskKind::Joint,
        types: vec![0.0, 0.0, 0.1, 0.2, 0.7],
        stop_after: None,
    };
    let before = s.world.clone();
    assert_eq!(turn(&chatter, &mut s, "thanks", 40).unwrap().kind, DecisionKind::Others);
    assert_eq!(s.world, before);
}

#[test]
fn decision_json_shape() {
    let d = AgentDecision {
        kind: DecisionKind::Execute {
            actions: vec![BuildAction::Stop],
        },
        confidence: 0.5,
    };
    let v: serde_json::Value = serde_json::to_value(&d).unwrap();
    assert_eq!(v["kind"], "execute");
    assert_eq!(v["actions"][0]["kind"], "stop");
    assert_eq!(v["confidence"], 0.5);
}
