//! JSON messages exchanged with the architect console.

use builder_core::world::{ActionRecord, BlockRecord, BuildAction, Coord, WorldSnapshot, WorldState};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Utterance { text: String },
    Reset,
    SetWorld { blocks: Vec<BlockRecord> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtteranceCategory {
    Ask,
    Others,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    World { blocks: Vec<BlockRecord> },
    AgentAction { action: ActionRecord },
    AgentUtterance { category: UtteranceCategory, detail: String },
    Error { message: String },
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        serde_json::from_str(text).map_err(|e| ServiceError::Protocol(e.to_string()))
    }
}

impl ServerMessage {
    pub fn world(w: &WorldState) -> Self {
        ServerMessage::World { blocks: w.snapshot().blocks }
    }

    pub fn action(a: &BuildAction) -> Self {
        ServerMessage::AgentAction { action: a.into() }
    }

    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error { message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Builds a world from client-supplied blocks. Coordinates must be in the
/// region and unique; support is not required (worlds are arbitrary snapshots).
pub fn world_from_blocks(blocks: &[BlockRecord]) -> Result<WorldState, ServiceError> {
    let mut seen = std::collections::HashSet::new();
    for (i, b) in blocks.iter().enumerate() {
        let c = Coord::new(b.x, b.y, b.z).map_err(|e| ServiceError::Protocol(format!("blocks[{i}]: {e}")))?;
        if !seen.insert(c) {
            return Err(ServiceError::Protocol(format!("blocks[{i}]: duplicate cell {c}")));
        }
    }
    WorldState::from_snapshot(&WorldSnapshot { blocks: blocks.to_vec() }).map_err(|e| ServiceError::Protocol(e.to_string()))
}

/// Display name of an ask/others decision.
pub fn detail_for(category: UtteranceCategory) -> &'static str {
    match category {
        UtteranceCategory::Ask => "Ask for clarifications",
        UtteranceCategory::Others => "Others",
    }
}
