//! The three prediction tasks and their action-type class lists.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::world::{ActionKind, ActionTypeLabel, BuildAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Next build action: placement / removal / stop.
    Building,
    /// Next move: execution / ask / others.
    Ask,
    /// Both at once: placement / removal / stop / ask / others.
    Joint,
}

/// A decoded action-type class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeClass {
    Placement,
    Removal,
    Stop,
    Execution,
    Ask,
    Others,
}

impl TypeClass {
    /// Three-way group used by the ask and joint metrics.
    pub fn group(self) -> ActionTypeLabel {
        match self {
            TypeClass::Placement | TypeClass::Removal | TypeClass::Stop | TypeClass::Execution => ActionTypeLabel::Execution,
            TypeClass::Ask => ActionTypeLabel::Ask,
            TypeClass::Others => ActionTypeLabel::Others,
        }
    }

    pub fn is_build(self) -> bool {
        matches!(self, TypeClass::Placement | TypeClass::Removal | TypeClass::Stop)
    }

    pub fn of_action(a: &BuildAction) -> Self {
        match a.kind() {
            ActionKind::Placement => TypeClass::Placement,
            ActionKind::Removal => TypeClass::Removal,
            ActionKind::Stop => TypeClass::Stop,
        }
    }
}

impl TaskKind {
    pub fn classes(self) -> &'static [TypeClass] {
        use TypeClass::*;
        match self {
            TaskKind::Building => &[Placement, Removal, Stop],
            TaskKind::Ask => &[Execution, Ask, Others],
            TaskKind::Joint => &[Placement, Removal, Stop, Ask, Others],
        }
    }

    /// Number of action-type classes, `d_a`.
    pub fn num_types(self) -> usize {
        self.classes().len()
    }

    pub fn class(self, index: usize) -> TypeClass {
        self.classes()[index]
    }

    pub fn index_of(self, class: TypeClass) -> Option<usize> {
        self.classes().iter().position(|&c| c == class)
    }

    /// Whether location and color slots are supervised at all.
    pub fn predicts_actions(self) -> bool {
        self != TaskKind::Ask
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Building => "building",
            TaskKind::Ask => "ask",
            TaskKind::Joint => "joint",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "building" => Ok(TaskKind::Building),
            "ask" => Ok(TaskKind::Ask),
            "joint" => Ok(TaskKind::Joint),
            other => Err(format!("unknown task {other:?} (expected building, ask or joint)")),
        }
    }
}
