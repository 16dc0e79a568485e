//! Net-change F1, confusion matrices, and the prediction log.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::TypeClass;
use crate::world::{net_diff, ActionTypeLabel, BuildAction, CellChange, Coord, WorldSnapshot, WorldState};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("{gold} gold labels but {predicted} predictions")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("record {id}: invalid world: {message}")]
    BadWorld { id: String, message: String },
}

/// Micro-averaged counts; precision and recall of 0/0 are 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl F1Report {
    pub fn from_counts(matched: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            matched,
            predicted,
            gold,
        }
    }

    /// Pools the counts of two reports.
    pub fn merge(&self, other: &F1Report) -> F1Report {
        F1Report::from_counts(self.matched + other.matched, self.predicted + other.predicted, self.gold + other.gold)
    }
}

/// Replays `actions` skipping illegal steps; returns the final world and the number skipped.
pub fn replay_lenient(w: &WorldState, actions: &[BuildAction]) -> (WorldState, usize) {
    let mut cur = w.clone();
    let mut skipped = 0;
    for a in actions {
        match cur.apply(a) {
            Ok(next) => cur = next,
            Err(_) => skipped += 1,
        }
    }
    (cur, skipped)
}

/// Net cell changes of an action sequence from `w`.
pub fn net_changes(w: &WorldState, actions: &[BuildAction]) -> (BTreeSet<(Coord, CellChange)>, usize) {
    let (end, skipped) = replay_lenient(w, actions);
    (net_diff(w, &end), skipped)
}

/// Precision and recall over net cell changes. Illegal predicted steps are
/// skipped in replay and each counts as one unmatched prediction.
pub fn net_change_f1(gold: &[BuildAction], predicted: &[BuildAction], initial: &WorldState) -> F1Report {
    let (g, _) = net_changes(initial, gold);
    let (p, illegal) = net_changes(initial, predicted);
    let matched = g.intersection(&p).count();
    F1Report::from_counts(matched, p.len() + illegal, g.len())
}

/// Gold × predicted counts over execution / ask / others.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn add(&mut self, gold: ActionTypeLabel, predicted: ActionTypeLabel) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, gold: ActionTypeLabel) -> usize {
        self.counts[gold.index()].iter().sum()
    }

    pub fn class_accuracy(&self, gold: ActionTypeLabel) -> f64 {
        let n = self.row_total(gold);
        if n == 0 {
            0.0
        } else {
            self.counts[gold.index()][gold.index()] as f64 / n as f64
        }
    }

    pub fn overall_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            (0..3).map(|i| self.counts[i][i]).sum::<usize>() as f64 / total as f64
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>10} {:>10} {:>10} {:>9}", "gold\\pred", "execution", "ask", "others", "acc %");
        for g in ActionTypeLabel::ALL {
            let row = &self.counts[g.index()];
            let _ = writeln!(
                out,
                "{:<12} {:>10} {:>10} {:>10} {:>9.2}",
                g.name(),
                row[0],
                row[1],
                row[2],
                100.0 * self.class_accuracy(g)
            );
        }
        let _ = writeln!(out, "{:<12} {:>43.2}", "overall", 100.0 * self.overall_accuracy());
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: ActionTypeLabel,
    pub count: usize,
    pub accuracy: f64,
}

impl ConfusionMatrix {
    pub fn class_reports(&self) -> Vec<ClassReport> {
        ActionTypeLabel::ALL
            .iter()
            .map(|&label| ClassReport {
                label,
                count: self.row_total(label),
                accuracy: self.class_accuracy(label),
            })
            .collect()
    }
}

pub fn ask_metrics(gold: &[ActionTypeLabel], predicted: &[ActionTypeLabel]) -> Result<ConfusionMatrix, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(predicted) {
        m.add(g, p);
    }
    Ok(m)
}

/// One sample's model output: the first type decision and, for
/// execution-group decisions, the rolled-out actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub predicted_type: TypeClass,
    pub predicted_group: ActionTypeLabel,
    pub actions: Vec<BuildAction>,
    pub gold_label: ActionTypeLabel,
    pub gold_actions: Vec<BuildAction>,
    pub world: WorldSnapshot,
    pub confidence: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointReport {
    pub confusion: ConfusionMatrix,
    /// Micro F1 over samples whose gold label is execution.
    pub execution_f1: F1Report,
}

/// Scores a prediction log. Actions are replayed from each record's world.
pub fn joint_metrics(records: &[PredictionRecord]) -> Result<JointReport, EvalError> {
    let mut confusion = ConfusionMatrix::default();
    let mut f1 = F1Report::default();
    for r in records {
        confusion.add(r.gold_label, r.predicted_group);
        if r.gold_label == ActionTypeLabel::Execution {
            let w = WorldState::from_snapshot(&r.world).map_err(|e| EvalError::BadWorld {
                id: r.sample_id.clone(),
                message: e.to_string(),
            })?;
            let actions: &[BuildAction] = if r.predicted_group == ActionTypeLabel::Execution { &r.actions } else { &[] };
            f1 = f1.merge(&net_change_f1(&r.gold_actions, actions, &w));
        }
    }
    Ok(JointReport {
        confusion,
        execution_f1: f1,
    })
}

/// Micro F1 over every record's actions against gold (building task).
pub fn building_f1(records: &[PredictionRecord]) -> F1Report {
    records.iter().fold(F1Report::default(), |acc, r| {
        let w = WorldState::from_snapshot(&r.world).unwrap_or_default();
        acc.merge(&net_change_f1(&r.gold_actions, &r.actions, &w))
    })
}
