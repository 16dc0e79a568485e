//! The neural builder: dialogue and world encoders, cross-modal fusion, slot decoder.

mod config;
mod decoder;
mod encoder;
mod fusion;
mod params;

use std::path::Path;

use builder_autodiff::graph::BoundParams;
use builder_autodiff::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, Graph, Mode, ParamStore, Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{flatten_dialogue, TokenContext, Utterance, Vocabulary};
use crate::task::TaskKind;
use crate::world::{WorldState, NUM_CELLS};

pub use config::ModelConfig;
pub use decoder::{decode_slots, SlotVars};
pub use encoder::{encode_dialogue, encode_world};
pub use fusion::{fuse, FusionTrace};
pub use params::{check_params, init_params, param_shapes};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("model configuration: {0}")]
    Config(String),
    #[error("checkpoint header: {0}")]
    Header(String),
}

/// Everything the network consumes for one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub tokens: TokenContext,
    /// `[8 × 11 × 9 × 11]`.
    pub world: Tensor,
    /// `[11]`.
    pub last_action: Tensor,
    /// Feasible placements ∪ occupied cells, by flat index.
    pub feasible: Vec<bool>,
}

impl ModelInput {
    pub fn new(world: &WorldState, dialogue: &[Utterance], vocab: &Vocabulary, context_len: usize) -> Self {
        Self {
            tokens: flatten_dialogue(dialogue, vocab, context_len),
            world: world.encode(),
            last_action: world.encode_last_action(),
            feasible: world.feasibility_mask(),
        }
    }

    /// Key mask for the text stream; all-padding contexts attend everywhere.
    pub fn text_mask(&self) -> Option<&[bool]> {
        self.tokens.mask.iter().any(|&m| m).then_some(self.tokens.mask.as_slice())
    }
}

/// Slot distributions of one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotPrediction {
    pub location_probs: Vec<f64>,
    pub color_probs: Vec<f64>,
    pub type_probs: Vec<f64>,
}

/// Graph nodes produced by [`forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub slots: SlotVars,
    pub text_encoding: builder_autodiff::Var,
    pub grid_encoding: builder_autodiff::Var,
    pub trace: FusionTrace,
}

/// Full forward pass on `g` with parameters bound as `b`.
pub fn forward<R: Rng>(
    g: &mut Graph,
    b: &BoundParams,
    cfg: &ModelConfig,
    input: &ModelInput,
    rng: &mut R,
) -> Result<ForwardOutput, ModelError> {
    let text_mask = if cfg.mask_aware_mean { input.text_mask() } else { None };
    let attn_mask = input.text_mask();
    let u0 = encode_dialogue(g, b, cfg, &input.tokens.ids)?;
    let mut w0 = encode_world(g, b, cfg, &input.world, &input.last_action)?;
    if cfg.grid_positional {
        w0 = g.add(w0, b.get("grid.position"))?;
    }
    let (u, w, trace) = fuse(g, b, cfg, u0, w0, attn_mask, &input.feasible, rng)?;
    let slots = decode_slots(g, b, u, w, text_mask)?;
    Ok(ForwardOutput {
        slots,
        text_encoding: u0,
        grid_encoding: w0,
        trace,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    task: TaskKind,
    vocab: Vocabulary,
}

/// A configured network with its vocabulary and task.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub task: TaskKind,
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, task: TaskKind, vocab: Vocabulary, seed: u64) -> Result<Self, ModelError> {
        if config.d_a != task.num_types() {
            return Err(ModelError::Config(format!(
                "d_a = {} but task {task} has {} action types",
                config.d_a,
                task.num_types()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(&config, vocab.len(), &mut rng)?;
        Ok(Self {
            config,
            task,
            vocab,
            params,
        })
    }

    pub fn input(&self, world: &WorldState, dialogue: &[Utterance]) -> ModelInput {
        ModelInput::new(world, dialogue, &self.vocab, self.config.s)
    }

    /// Eval-mode prediction; deterministic.
    pub fn predict(&self, input: &ModelInput) -> Result<SlotPrediction, ModelError> {
        let mut g = Graph::new(Mode::Eval);
        let b = g.bind(&self.params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(&mut g, &b, &self.config, input, &mut rng)?;
        let take = |v| g.value(v).data().to_vec();
        let p = SlotPrediction {
            location_probs: take(out.slots.location),
            color_probs: take(out.slots.color),
            type_probs: take(out.slots.action_type),
        };
        debug_assert_eq!(p.location_probs.len(), NUM_CELLS);
        Ok(p)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let header = Header {
            model: self.config.clone(),
            task: self.task,
            vocab: self.vocab.clone(),
        };
        Checkpoint {
            hyperparameters: serde_json::to_value(header).expect("header serializes"),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, ModelError> {
        let header: Header = serde_json::from_value(ckpt.hyperparameters).map_err(|e| ModelError::Header(e.to_string()))?;
        header.model.validate()?;
        if header.model.d_a != header.task.num_types() {
            return Err(ModelError::Header(format!("d_a {} does not fit task {}", header.model.d_a, header.task)));
        }
        check_params(&header.model, header.vocab.len(), &ckpt.params)?;
        Ok(Self {
            config: header.model,
            task: header.task,
            vocab: header.vocab,
            params: ckpt.params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        Ok(save_checkpoint(path, &self.to_checkpoint())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_checkpoint(load_checkpoint(path)?)
    }
}
