//! Diffusion policy with visual-textual co-injection.
//!
//! Patch tokens of the (overlaid) observation, one pooled text token and one
//! proprioception token pass through two transformer blocks; the pooled
//! result is projected to per-layer FiLM parameters of an MLP denoiser that
//! predicts the noise on a normalized action chunk.

pub mod checkpoint;
pub mod diffusion;
pub mod model;
pub mod tokenizer;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::AffordanceMask;
use crate::nn::Mat;
use crate::select::{select_affordances, Phase};

pub use model::{denormalize_action, normalize_action, patchify, ConditionEmbedding, Encoded, Policy};
pub use tokenizer::{tokenize, Symbol, TextBag};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("image is {width}x{height}, expected {expected}x{expected}")]
    ResolutionMismatch { expected: usize, width: usize, height: usize },
    #[error("text has {len} symbols, more than the limit of {max}")]
    TextTooLong { len: usize, max: usize },
    #[error("token widths disagree: {0}")]
    WidthMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("policy has no trained weights")]
    UntrainedModel,
    #[error("text input given to a policy without a text token, or missing for one with it")]
    TextPresence,
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("checkpoint config hash {found} does not match expected {expected}")]
    CheckpointMismatch { expected: String, found: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which parts of the affordance chain reach the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Overlay and text of the phase-selected chain.
    #[default]
    Full,
    /// Raw observation instead of the overlay; text kept.
    NoVisual,
    /// Overlay only; no text token.
    NoTextual,
    /// All four components every step.
    NoDynamicSelection,
    /// Object, grasp and spatial components every step, never movement.
    NoDynamicNoMovement,
}

impl Mode {
    pub const ALL: [Mode; 5] =
        [Mode::Full, Mode::NoVisual, Mode::NoTextual, Mode::NoDynamicSelection, Mode::NoDynamicNoMovement];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoVisual => "no_visual",
            Mode::NoTextual => "no_textual",
            Mode::NoDynamicSelection => "no_dynamic_selection",
            Mode::NoDynamicNoMovement => "no_dynamic_no_movement",
        }
    }

    pub fn from_name(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn uses_overlay(self) -> bool {
        self != Mode::NoVisual
    }

    pub fn uses_text(self) -> bool {
        self != Mode::NoTextual
    }

    /// Components conditioned on in `phase`.
    pub fn mask(self, phase: Phase) -> AffordanceMask {
        match self {
            Mode::Full | Mode::NoVisual | Mode::NoTextual => select_affordances(phase),
            Mode::NoDynamicSelection => AffordanceMask::ALL,
            Mode::NoDynamicNoMovement => AffordanceMask { movement: false, ..AffordanceMask::ALL },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Token width d.
    pub width: usize,
    pub patch: usize,
    pub resolution: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    /// Self-attention blocks in the patch encoder.
    pub visual_blocks: usize,
    /// Fusion blocks over the concatenated token sequence.
    pub fusion_blocks: usize,
    pub vocab_buckets: usize,
    pub text_dim: usize,
    pub text_hidden: usize,
    /// Padded length used for mean pooling; longer texts are rejected.
    pub max_text_len: usize,
    /// Number slots per component kind.
    pub number_slots: usize,
    /// Standard deviation of the per-slot number scales at init. Coordinates
    /// vary over a few hundredths, so a large scale keeps them visible next to
    /// the word embeddings.
    pub number_init: f64,
    /// Conditioning variant the policy is trained and run with.
    pub mode: Mode,
    pub denoiser_hidden: usize,
    pub denoiser_layers: usize,
    pub time_dim: usize,
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Action chunk length H.
    pub horizon: usize,
    /// Action normalization scale; matches the simulator's step bound.
    pub max_step: f64,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr` after cosine decay.
    pub lr_floor: f64,
    pub momentum: f64,
    pub grad_clip: f64,
    pub batch: usize,
    /// Noise draws per observation in each batch.
    pub noise_draws: usize,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            width: 32,
            patch: 16,
            resolution: 96,
            heads: 2,
            ff_hidden: 64,
            visual_blocks: 2,
            fusion_blocks: 2,
            vocab_buckets: 128,
            text_dim: 64,
            text_hidden: 64,
            max_text_len: 256,
            number_slots: 32,
            number_init: 16.0,
            mode: Mode::Full,
            denoiser_hidden: 128,
            denoiser_layers: 3,
            time_dim: 16,
            diffusion_steps: 50,
            beta_start: 0.002,
            beta_end: 0.4,
            horizon: 4,
            max_step: 0.05,
            lr: 0.05,
            lr_floor: 0.1,
            momentum: 0.9,
            grad_clip: 1.0,
            batch: 8,
            noise_draws: 8,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: String| Err(PolicyError::InvalidConfig(m));
        if self.patch == 0 || self.resolution % self.patch != 0 {
            return bad(format!("resolution {} not divisible by patch {}", self.resolution, self.patch));
        }
        if self.diffusion_steps < 2 {
            return bad("need at least two diffusion steps".into());
        }
        if self.fusion_blocks != 2 {
            return bad("the fusion stage has exactly two blocks".into());
        }
        let dims = [
            self.width,
            self.heads,
            self.ff_hidden,
            self.vocab_buckets,
            self.text_dim,
            self.text_hidden,
            self.max_text_len,
            self.number_slots,
            self.denoiser_hidden,
            self.denoiser_layers,
            self.time_dim,
            self.horizon,
            self.batch,
            self.noise_draws,
        ];
        if dims.iter().any(|d| *d == 0) {
            return bad("all dimensions must be positive".into());
        }
        if self.width % self.heads != 0 {
            return bad(format!("width {} not divisible by {} heads", self.width, self.heads));
        }
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0) {
            return bad("noise schedule needs 0 < beta_start <= beta_end < 1".into());
        }
        if !(self.max_step > 0.0 && self.lr > 0.0 && self.number_init > 0.0) {
            return bad("max_step, lr and number_init must be positive".into());
        }
        Ok(())
    }

    pub fn patches(&self) -> usize {
        (self.resolution / self.patch).pow(2)
    }

    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * 3
    }

    pub fn action_dim(&self) -> usize {
        3 * self.horizon
    }

    pub fn film_width(&self) -> usize {
        2 * self.denoiser_layers * self.denoiser_hidden
    }
}

/// Feature-wise modulation `γ ⊙ h + β` applied to every row of `h`.
pub fn film(h: &Mat, gamma: &[f64], beta: &[f64]) -> Result<Mat, PolicyError> {
    if gamma.len() != h.ncols() || beta.len() != h.ncols() {
        return Err(PolicyError::DimMismatch(format!(
            "activations have {} channels, γ {} and β {}",
            h.ncols(),
            gamma.len(),
            beta.len()
        )));
    }
    let mut out = h.clone();
    for mut row in out.outer_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = gamma[j] * *v + beta[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn film_identity_and_zero_gain() {
        let h = Mat::from_shape_fn((3, 4), |(i, j)| i as f64 - 0.7 * j as f64);
        assert_eq!(film(&h, &[1.0; 4], &[0.0; 4]).unwrap(), h);
        let beta = [0.1, -0.2, 0.3, 0.4];
        let out = film(&h, &[0.0; 4], &beta).unwrap();
        for row in out.outer_iter() {
            assert_eq!(row.to_vec(), beta.to_vec());
        }
        assert!(film(&h, &[1.0; 3], &[0.0; 4]).is_err());
    }

    #[test]
    fn mode_names_roundtrip_and_masks() {
        for m in Mode::ALL {
            assert_eq!(Mode::from_name(m.name()), Some(m));
        }
        assert_eq!(Mode::NoDynamicSelection.mask(Phase::Transport).count(), 4);
        assert!(!Mode::NoDynamicNoMovement.mask(Phase::Approach).movement);
        assert_eq!(Mode::Full.mask(Phase::Transport), select_affordances(Phase::Transport));
    }

    #[test]
    fn default_config_is_valid() {
        let c = PolicyConfig::default();
        c.validate().unwrap();
        assert_eq!(c.patches(), 36);
    }
}
