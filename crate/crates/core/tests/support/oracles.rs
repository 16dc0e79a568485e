//! Brute-force scorers that share no code with the library: worlds are plain
//! hash maps, actions come from JSON or are converted field by field.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use builder_core::world::{BuildAction, WorldState};
use serde_json::Value;

pub type Cell = (i64, i64, i64);
pub type World = HashMap<Cell, String>;

#[derive(Debug, Clone, PartialEq)]
pub enum Act {
    Place(Cell, String),
    Remove(Cell),
    Stop,
}

pub fn act_of(a: &BuildAction) -> Act {
    match a {
        BuildAction::Place { at, color } => Act::Place((at.x() as i64, at.y() as i64, at.z() as i64), color.name().to_string()),
        BuildAction::Remove { at } => Act::Remove((at.x() as i64, at.y() as i64, at.z() as i64)),
        BuildAction::Stop => Act::Stop,
    }
}

pub fn act_of_json(v: &Value) -> Act {
    let cell = || (v["x"].as_i64().unwrap(), v["y"].as_i64().unwrap(), v["z"].as_i64().unwrap());
    match v["kind"].as_str().unwrap() {
        "placement" => Act::Place(cell(), v["color"].as_str().unwrap().to_string()),
        "removal" => Act::Remove(cell()),
        "stop" => Act::Stop,
        k => panic!("unknown kind {k}"),
    }
}

pub fn world_of(w: &WorldState) -> World {
    w.occupied()
        .map(|(c, col)| ((c.x() as i64, c.y() as i64, c.z() as i64), col.name().to_string()))
        .collect()
}

pub fn world_of_json(v: &Value) -> World {
    v["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| ((b["x"].as_i64().unwrap(), b["y"].as_i64().unwrap(), b["z"].as_i64().unwrap()), b["color"].as_str().unwrap().to_string()))
        .collect()
}

fn in_region(&(x, y, z): &Cell) -> bool {
    (0..11).contains(&x) && (0..9).contains(&y) && (0..11).contains(&z)
}

/// Applies `a` if legal; returns whether it was.
pub fn step(w: &mut World, a: &Act) -> bool {
    match a {
        Act::Stop => true,
        Act::Place(c, color) => {
            let (x, y, z) = *c;
            let touching = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
                .iter()
                .any(|(dx, dy, dz)| w.contains_key(&(x + dx, y + dy, z + dz)));
            if !in_region(c) || w.contains_key(c) || !(y == 0 || touching) {
                return false;
            }
            w.insert(*c, color.clone());
            true
        }
        Act::Remove(c) => w.remove(c).is_some(),
    }
}

/// Net changes as (cell, "-") for removals and (cell, "+color") for additions.
pub fn net(before: &World, actions: &[Act]) -> (BTreeSet<(Cell, String)>, usize) {
    let mut w = before.clone();
    let illegal = actions.iter().filter(|a| !step(&mut w, a)).count();
    let mut out = BTreeSet::new();
    let cells: BTreeSet<&Cell> = before.keys().chain(w.keys()).collect();
    for c in cells {
        let (a, b) = (before.get(c), w.get(c));
        if a == b {
            continue;
        }
        if a.is_some() {
            out.insert((*c, "-".to_string()));
        }
        if let Some(col) = b {
            out.insert((*c, format!("+{col}")));
        }
    }
    (out, illegal)
}

/// (matched, predicted, gold) with illegal predicted steps as extra unmatched predictions.
pub fn counts(initial: &World, gold: &[Act], pred: &[Act]) -> (usize, usize, usize) {
    let (g, _) = net(initial, gold);
    let (p, illegal) = net(initial, pred);
    (g.intersection(&p).count(), p.len() + illegal, g.len())
}

pub fn f1(m: usize, p: usize, g: usize) -> f64 {
    let prec = if p == 0 { 0.0 } else { m as f64 / p as f64 };
    let rec = if g == 0 { 0.0 } else { m as f64 / g as f64 };
    if prec + rec == 0.0 {
        0.0
    } else {
        2.0 * prec * rec / (prec + rec)
    }
}

/// Re-scores a JSONL prediction log: (micro F1 over execution-gold records, 3×3 confusion).
/// Non-execution predictions count as producing no changes.
pub fn rescore_log(jsonl: &str) -> (f64, [[usize; 3]; 3], (usize, usize, usize)) {
    let idx = |s: &str| match s {
        "execution" => 0,
        "ask" => 1,
        "others" => 2,
        other => panic!("label {other}"),
    };
    let mut confusion = [[0usize; 3]; 3];
    let (mut m, mut p, mut g) = (0, 0, 0);
    for line in jsonl.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).unwrap();
        let gold = idx(v["gold_label"].as_str().unwrap());
        let pred = idx(v["predicted_group"].as_str().unwrap());
        confusion[gold][pred] += 1;
        if gold == 0 {
            let w = world_of_json(&v["world"]);
            let ga: Vec<Act> = v["gold_actions"].as_array().unwrap().iter().map(act_of_json).collect();
            let pa: Vec<Act> = if pred == 0 {
                v["actions"].as_array().unwrap().iter().map(act_of_json).collect()
            } else {
                Vec::new()
            };
            let (a, b, c) = counts(&w, &ga, &pa);
            m += a;
            p += b;
            g += c;
        }
    }
    (f1(m, p, g), confusion, (m, p, g))
}
