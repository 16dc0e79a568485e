use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::world::LAST_ACTION_DIM;

/// Architecture hyperparameters. The JSON form mirrors the fields one to one;
/// missing fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Word-embedding and text-stream width.
    pub d_w: usize,
    /// Grid-feature width before the last-action vector is appended.
    pub d_c: usize,
    /// Number of 3×3×3 convolutions in the world encoder.
    pub k: usize,
    /// Text cross-modality layers.
    pub n_t: usize,
    /// Grid cross-modality layers.
    pub n_g: usize,
    /// Dialogue context length in tokens.
    pub s: usize,
    pub heads_text: usize,
    pub heads_grid: usize,
    /// Applied in feed-forward sub-layers only.
    pub dropout: f64,
    /// Number of action-type classes.
    pub d_a: usize,
    /// Learned per-cell embedding added to the grid stream before fusion.
    pub grid_positional: bool,
    /// Average the text stream over non-padding positions only.
    pub mask_aware_mean: bool,
    /// Add each attention sub-layer's query input to its output.
    pub attention_residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_w: 300,
            d_c: 300,
            k: 3,
            n_t: 2,
            n_g: 4,
            s: 100,
            heads_text: 2,
            heads_grid: 1,
            dropout: 0.2,
            d_a: 3,
            grid_positional: true,
            mask_aware_mean: true,
            attention_residual: true,
        }
    }
}

impl ModelConfig {
    /// A few-thousand-parameter network for overfitting and smoke tests.
    pub fn tiny() -> Self {
        Self {
            d_w: 16,
            d_c: 8,
            k: 2,
            n_t: 1,
            n_g: 1,
            s: 24,
            heads_text: 2,
            heads_grid: 1,
            dropout: 0.0,
            d_a: 3,
            grid_positional: true,
            mask_aware_mean: true,
            attention_residual: true,
        }
    }

    /// Grid-stream width `d_c + 11`.
    pub fn d_c_prime(&self) -> usize {
        self.d_c + LAST_ACTION_DIM
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.d_w == 0 || self.d_c == 0 || self.s == 0 || self.d_a == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.n_g >= self.n_t && self.n_t >= 1) {
            return bad(format!("need n_g >= n_t >= 1, got n_g={} n_t={}", self.n_g, self.n_t));
        }
        if self.heads_text == 0 || !self.d_w.is_multiple_of(self.heads_text) {
            return bad(format!("d_w={} not divisible by heads_text={}", self.d_w, self.heads_text));
        }
        if self.heads_grid == 0 || !self.d_c_prime().is_multiple_of(self.heads_grid) {
            return bad(format!("d_c'={} not divisible by heads_grid={}", self.d_c_prime(), self.heads_grid));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = ModelConfig::default();
        assert_eq!(c.d_c_prime(), 311);
        c.validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
        let bad = ModelConfig { n_t: 3, n_g: 2, ..ModelConfig::tiny() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { heads_text: 3, ..ModelConfig::tiny() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn json_mirrors_fields() {
        let c: ModelConfig = serde_json::from_str(r#"{"d_w": 8, "n_g": 2}"#).unwrap();
        assert_eq!(c.d_w, 8);
        assert_eq!(c.n_g, 2);
        assert_eq!(c.d_c, 300);
        let back: ModelConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
