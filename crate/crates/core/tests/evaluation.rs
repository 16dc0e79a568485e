#[path = "support/oracles.rs"]
mod oracles;

use builder_core::corpus::{synth_generate, GrammarConfig, Vocabulary};
use builder_core::evaluation::net_change_f1;
use builder_core::model::{Model, ModelConfig};
use builder_core::task::TaskKind;
use builder_core::training::{predict_all, score_records};
use builder_core::world::{BuildAction, Color, Coord, WorldState, NUM_CELLS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_world(rng: &mut ChaCha8Rng, max: usize) -> WorldState {
    let mut w = WorldState::empty();
    for _ in 0..rng.gen_range(0..=max) {
        let opts = w.feasible_placements();
        let at = opts[rng.gen_range(0..opts.len())];
        w = w.apply(&BuildAction::Place { at, color: Color::ALL[rng.gen_range(0..6)] }).unwrap();
    }
    w
}

fn legal_sequence(rng: &mut ChaCha8Rng, w: &WorldState, len: usize) -> Vec<BuildAction> {
    let mut cur = w.clone();
    let mut out = Vec::new();
    for _ in 0..len {
        let a = if cur.block_count() == 0 || rng.gen_bool(0.7) {
            let opts = cur.feasible_placements();
            BuildAction::Place {
                at: opts[rng.gen_range(0..opts.len())],
                color: Color::ALL[rng.gen_range(0..6)],
            }
        } else {
            let opts = cur.feasible_removals();
            BuildAction::Remove { at: opts[rng.gen_range(0..opts.len())] }
        };
        cur = cur.apply(&a).unwrap();
        out.push(a);
    }
    out.push(BuildAction::Stop);
    out
}

/// Gold with edits: dropped steps, recolors, and arbitrary (possibly illegal) actions.
fn perturb(rng: &mut ChaCha8Rng, gold: &[BuildAction]) -> Vec<BuildAction> {
    let mut out = Vec::new();
    for a in gold {
        match rng.gen_range(0..6) {
            0 => {}
            1 => out.push(match *a {
                BuildAction::Place { at, .. } => BuildAction::Place {
                    at,
                    color: Color::ALL[rng.gen_range(0..6)],
                },
                other => other,
            }),
            2 => {
                let at = Coord::from_index(rng.gen_range(0..NUM_CELLS));
                out.push(if rng.gen_bool(0.5) {
                    BuildAction::Remove { at }
                } else {
                    BuildAction::Place { at, color: Color::ALL[rng.gen_range(0..6)] }
                });
                out.push(*a);
            }
            _ => out.push(*a),
        }
    }
    out
}

#[test]
fn net_change_f1_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut nontrivial = 0;
    for _ in 0..600 {
        let w = random_world(&mut rng, 15);
        let len = rng.gen_range(0..8);
        let gold = legal_sequence(&mut rng, &w, len);
        let pred = if rng.gen_bool(0.2) {
            let len = rng.gen_range(0..8);
            legal_sequence(&mut rng, &w, len)
        } else {
            perturb(&mut rng, &gold)
        };
        let r = net_change_f1(&gold, &pred, &w);
        let ow = oracles::world_of(&w);
        let ga: Vec<_> = gold.iter().map(oracles::act_of).collect();
        let pa: Vec<_> = pred.iter().map(oracles::act_of).collect();
        let (m, p, g) = oracles::counts(&ow, &ga, &pa);
        assert_eq!((r.matched, r.predicted, r.gold), (m, p, g), "{gold:?} vs {pred:?}");
        assert!((r.f1 - oracles::f1(m, p, g)).abs() < 1e-15);
        nontrivial += usize::from(m > 0 && m < g.max(p));
    }
    assert!(nontrivial > 100, "only {nontrivial} partial matches");
}

#[test]
fn prediction_log_rescoring_matches() {
    let samples = synth_generate(45, 31, &GrammarConfig::default());
    for (task, seed) in [(TaskKind::Joint, 1), (TaskKind::Joint, 2), (TaskKind::Building, 3)] {
        let cfg = ModelConfig {
            d_a: task.num_types(),
            ..ModelConfig::tiny()
        };
        let model = Model::new(cfg, task, Vocabulary::build(&samples, 1), seed).unwrap();
        let records = predict_all(&model, &samples, 10).unwrap();
        let bundle = score_records(task, &records).unwrap();
        let log: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        let (f1, confusion, counts) = oracles::rescore_log(&log);
        let ours = bundle.f1.unwrap();
        assert_eq!((ours.matched, ours.predicted, ours.gold), counts);
        assert!((ours.f1 - f1).abs() < 1e-15);
        if task == TaskKind::Joint {
            assert_eq!(bundle.confusion.unwrap().counts, confusion);
        }
    }
}
