//! Dialogue samples: the JSONL schema, validation, and replay auditing.

mod batching;
mod embeddings;
mod stats;
mod synth;
mod vocab;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{ActionRecord, ActionTypeLabel, BuildAction, Coord, WorldError, WorldSnapshot, WorldState};

pub use batching::{balanced_batches, class_draw_counts, shuffled_batches};
pub use embeddings::load_embeddings;
pub use stats::{dataset_stats, taxonomy_stats, DatasetStats, SplitCounts, TaxonomyStats};
pub use synth::{synth_generate, GrammarConfig};
pub use vocab::{flatten_dialogue, tokenize, TokenContext, Vocabulary, ARCHITECT, BUILDER, PAD, UNK};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid JSON: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}, record {id:?}, field `{field}`: {message}")]
    Record {
        line: usize,
        id: String,
        field: String,
        message: String,
    },
    #[error("class {0} has no samples; cannot balance")]
    EmptyClass(String),
    #[error("batch size must be positive")]
    BatchSize,
    #[error("embedding file line {line}: {message}")]
    Embedding { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Architect,
    Builder,
}

/// The eight builder-utterance types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuilderCategory {
    InstructionLevelQuestion,
    TaskLevelQuestion,
    VerificationQuestion,
    Greeting,
    Suggestion,
    DisplayUnderstanding,
    StatusUpdate,
    Others,
}

impl BuilderCategory {
    pub const ALL: [BuilderCategory; 8] = [
        BuilderCategory::InstructionLevelQuestion,
        BuilderCategory::TaskLevelQuestion,
        BuilderCategory::VerificationQuestion,
        BuilderCategory::Greeting,
        BuilderCategory::Suggestion,
        BuilderCategory::DisplayUnderstanding,
        BuilderCategory::StatusUpdate,
        BuilderCategory::Others,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn display_name(self) -> &'static str {
        match self {
            BuilderCategory::InstructionLevelQuestion => "Instruction-level Questions",
            BuilderCategory::TaskLevelQuestion => "Task-level Questions",
            BuilderCategory::VerificationQuestion => "Verification Questions",
            BuilderCategory::Greeting => "Greeting",
            BuilderCategory::Suggestion => "Suggestions",
            BuilderCategory::DisplayUnderstanding => "Display Understanding",
            BuilderCategory::StatusUpdate => "Status Update",
            BuilderCategory::Others => "Others",
        }
    }

    /// Clarification questions are the two "ask" sub-types.
    pub fn is_clarification(self) -> bool {
        matches!(self, BuilderCategory::InstructionLevelQuestion | BuilderCategory::TaskLevelQuestion)
    }

    pub fn wire_name(self) -> &'static str {
        match self {
            BuilderCategory::InstructionLevelQuestion => "instruction_level_question",
            BuilderCategory::TaskLevelQuestion => "task_level_question",
            BuilderCategory::VerificationQuestion => "verification_question",
            BuilderCategory::Greeting => "greeting",
            BuilderCategory::Suggestion => "suggestion",
            BuilderCategory::DisplayUnderstanding => "display_understanding",
            BuilderCategory::StatusUpdate => "status_update",
            BuilderCategory::Others => "others",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builder_category: Option<BuilderCategory>,
}

impl Utterance {
    pub fn architect(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Architect,
            text: text.into(),
            builder_category: None,
        }
    }

    pub fn builder(text: impl Into<String>, category: Option<BuilderCategory>) -> Self {
        Self {
            speaker: Speaker::Builder,
            text: text.into(),
            builder_category: category,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// One supervised next-move example.
///
/// `dialogue_id` and `response` are optional: the former groups samples cut
/// from the same game, the latter is the builder utterance that followed the
/// context (present for ask/others samples in annotated data).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    pub dialogue: Vec<Utterance>,
    pub world: WorldState,
    pub label: ActionTypeLabel,
    pub gold_actions: Vec<BuildAction>,
    pub dialogue_id: Option<String>,
    pub response: Option<Utterance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSample {
    id: String,
    split: Split,
    dialogue: Vec<Utterance>,
    world: WorldSnapshot,
    #[serde(default)]
    action_history: Vec<ActionRecord>,
    label: ActionTypeLabel,
    #[serde(default)]
    gold_actions: Vec<ActionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dialogue_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    response: Option<Utterance>,
}

fn record_err(line: usize, id: &str, field: impl Into<String>, message: impl ToString) -> CorpusError {
    CorpusError::Record {
        line,
        id: id.to_string(),
        field: field.into(),
        message: message.to_string(),
    }
}

fn convert_actions(line: usize, id: &str, field: &str, records: &[ActionRecord]) -> Result<Vec<BuildAction>, CorpusError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| BuildAction::try_from(r).map_err(|e| record_err(line, id, format!("{field}[{i}]"), e)))
        .collect()
}

fn check_utterance(line: usize, id: &str, field: &str, u: &Utterance) -> Result<(), CorpusError> {
    if u.speaker == Speaker::Architect && u.builder_category.is_some() {
        return Err(record_err(line, id, field, "builder_category on an architect utterance"));
    }
    Ok(())
}

impl RawSample {
    fn validate(self, line: usize) -> Result<Sample, CorpusError> {
        let id = self.id.as_str();
        for (i, u) in self.dialogue.iter().enumerate() {
            check_utterance(line, id, &format!("dialogue[{i}]"), u)?;
        }
        if let Some(r) = &self.response {
            check_utterance(line, id, "response", r)?;
            if r.speaker != Speaker::Builder {
                return Err(record_err(line, id, "response", "response must be a builder utterance"));
            }
        }
        let mut blocks = Vec::with_capacity(self.world.blocks.len());
        for (i, b) in self.world.blocks.iter().enumerate() {
            let at = Coord::new(b.x, b.y, b.z).map_err(|e| record_err(line, id, format!("world.blocks[{i}]"), e))?;
            blocks.push((at, b.color));
        }
        let world = WorldState::from_blocks(blocks);
        let history = convert_actions(line, id, "action_history", &self.action_history)?;
        if history.iter().any(|a| matches!(a, BuildAction::Stop)) {
            return Err(record_err(line, id, "action_history", "history cannot contain stop"));
        }
        let world = world.with_history(history);
        let gold = convert_actions(line, id, "gold_actions", &self.gold_actions)?;
        match self.label {
            ActionTypeLabel::Execution => {
                if gold.last() != Some(&BuildAction::Stop) {
                    return Err(record_err(line, id, "gold_actions", "execution samples need a stop-terminated sequence"));
                }
                if gold[..gold.len() - 1].contains(&BuildAction::Stop) {
                    return Err(record_err(line, id, "gold_actions", "stop may only appear last"));
                }
            }
            _ if !gold.is_empty() => {
                return Err(record_err(line, id, "gold_actions", "only execution samples carry gold actions"));
            }
            _ => {}
        }
        Ok(Sample {
            id: self.id,
            split: self.split,
            dialogue: self.dialogue,
            world,
            label: self.label,
            gold_actions: gold,
            dialogue_id: self.dialogue_id,
            response: self.response,
        })
    }
}

impl Sample {
    fn to_raw(&self) -> RawSample {
        RawSample {
            id: self.id.clone(),
            split: self.split,
            dialogue: self.dialogue.clone(),
            world: self.world.snapshot(),
            action_history: self.world.history().map(ActionRecord::from).collect(),
            label: self.label,
            gold_actions: self.gold_actions.iter().map(ActionRecord::from).collect(),
            dialogue_id: self.dialogue_id.clone(),
            response: self.response.clone(),
        }
    }

    /// Canonical single-line JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_raw()).expect("sample serializes")
    }
}

/// Parses one JSONL line; `line` is 1-based and used only for diagnostics.
pub fn parse_sample(text: &str, line: usize) -> Result<Sample, CorpusError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CorpusError::Json {
        line,
        message: e.to_string(),
    })?;
    let id = value
        .get("id")
        .and_then(|v| v.as_str())
        .unwrap_or("<missing id>")
        .to_string();
    let raw: RawSample = serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .unwrap_or("record")
            .to_string();
        record_err(line, &id, field, msg)
    })?;
    raw.validate(line)
}

pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<Sample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_sample(&line, i + 1)?);
    }
    Ok(out)
}

/// Reads a JSONL file, or every `*.jsonl` file of a directory in name order.
pub fn parse_corpus(path: &Path) -> Result<Vec<Sample>, CorpusError> {
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(parse_jsonl(BufReader::new(fs::File::open(f)?))?);
        }
        Ok(out)
    } else {
        parse_jsonl(BufReader::new(fs::File::open(path)?))
    }
}

pub fn write_jsonl(mut w: impl Write, samples: &[Sample]) -> std::io::Result<()> {
    for s in samples {
        writeln!(w, "{}", s.to_json())?;
    }
    Ok(())
}

/// A gold sequence step that cannot be replayed from its sample's world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayViolation {
    pub sample_id: String,
    pub step: usize,
    pub action: BuildAction,
    pub error: WorldError,
}

/// Replays every execution sample's gold actions; illegal steps are reported
/// and skipped so the remainder of the sequence is still checked.
pub fn audit_replay(samples: &[Sample]) -> Vec<ReplayViolation> {
    let mut out = Vec::new();
    for s in samples {
        let mut w = s.world.clone();
        for (step, a) in s.gold_actions.iter().enumerate() {
            match w.apply(a) {
                Ok(next) => w = next,
                Err(error) => out.push(ReplayViolation {
                    sample_id: s.id.clone(),
                    step,
                    action: *a,
                    error,
                }),
            }
        }
    }
    out
}
