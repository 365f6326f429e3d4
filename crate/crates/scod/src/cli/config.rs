use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::geometry::SqueezeRatio;
use crate::scale_plan::{validate_specs, AnchorSpec};
use crate::toy::{LossWeights, SceneConfig, TrainConfig};
use crate::weakseg::LayerReduction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub stride: f64,
    pub a_min: f64,
    pub a_max: f64,
    #[serde(default = "default_aspects")]
    pub aspect_ratios: Vec<f64>,
}

fn default_aspects() -> Vec<f64> {
    vec![1.0]
}

/// Settings of the toy detector and the regression trials. Every field has a
/// desk-scale default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySettings {
    pub image_width: f64,
    pub image_height: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub feature_dim: usize,
    pub signal: f64,
    pub noise: f64,
    pub lr: f64,
    pub steps: usize,
    pub use_aiou: bool,
    pub weights: LossWeights,
    pub scws_reduction: LayerReduction,
    pub hard_negative_ratio: Option<f64>,
    /// Single-box regression trials per ratio in `beta-sweep`.
    pub trials: usize,
    pub fit_lr: f64,
    pub fit_steps: usize,
}

impl Default for ToySettings {
    fn default() -> Self {
        Self {
            image_width: 320.0,
            image_height: 320.0,
            min_objects: 3,
            max_objects: 6,
            feature_dim: 32,
            signal: 3.0,
            noise: 0.5,
            lr: 0.5,
            steps: 100,
            use_aiou: true,
            weights: LossWeights::default(),
            scws_reduction: LayerReduction::Sum,
            hard_negative_ratio: None,
            trials: 100,
            fit_lr: 0.01,
            fit_steps: 1000,
        }
    }
}

/// Side length of the square canvas the distribution-analysis pairs live on.
pub const DEFAULT_CANVAS: f64 = 100.0;

/// Top-level run configuration read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub beta: f64,
    pub num_classes: usize,
    pub layers: Vec<LayerConfig>,
    #[serde(default = "default_threshold")]
    pub match_threshold: f64,
    #[serde(default)]
    pub toy: ToySettings,
}

fn default_threshold() -> f64 {
    0.5
}

impl Default for RunConfig {
    /// SSD-style doubling over three layers.
    fn default() -> Self {
        Self {
            seed: 0,
            beta: 0.8,
            num_classes: 20,
            layers: vec![
                LayerConfig {
                    stride: 8.0,
                    a_min: 32.0,
                    a_max: 64.0,
                    aspect_ratios: vec![1.0, 2.0, 0.5],
                },
                LayerConfig {
                    stride: 16.0,
                    a_min: 64.0,
                    a_max: 128.0,
                    aspect_ratios: vec![1.0, 2.0, 0.5],
                },
                LayerConfig {
                    stride: 32.0,
                    a_min: 128.0,
                    a_max: 256.0,
                    aspect_ratios: vec![1.0, 2.0, 0.5],
                },
            ],
            match_threshold: 0.5,
            toy: ToySettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let parse = |m: String| CliError::Parse(format!("config: {m}"));
        SqueezeRatio::new(self.beta).map_err(|e| parse(e.to_string()))?;
        if self.num_classes == 0 {
            return Err(parse("num_classes must be >= 1".into()));
        }
        if !(self.match_threshold > 0.0 && self.match_threshold < 1.0) {
            return Err(parse(format!(
                "match_threshold must lie in (0, 1), got {}",
                self.match_threshold
            )));
        }
        validate_specs(&self.anchor_specs()).map_err(|e| parse(e.to_string()))
    }

    /// Checks the `toy` block; only the toy commands need it to be consistent
    /// with the rest of the config.
    pub fn validate_toy(&self) -> Result<(), CliError> {
        let parse = |m: String| CliError::Parse(format!("config: {m}"));
        self.scene_config().validate().map_err(|e| parse(format!("toy: {e}")))?;
        self.train_config().validate().map_err(|e| parse(format!("toy: {e}")))?;
        if self.toy.trials == 0 {
            return Err(parse("toy: trials must be >= 1".into()));
        }
        if !(self.toy.fit_lr >= 0.0 && self.toy.fit_lr.is_finite()) {
            return Err(parse(format!("toy: fit_lr must be >= 0, got {}", self.toy.fit_lr)));
        }
        Ok(())
    }

    pub fn beta(&self) -> SqueezeRatio {
        SqueezeRatio::new(self.beta).expect("validated on load")
    }

    pub fn anchor_specs(&self) -> Vec<AnchorSpec> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| AnchorSpec {
                layer_index: i + 1,
                a_min: l.a_min,
                a_max: l.a_max,
                stride: l.stride,
                aspect_ratios: l.aspect_ratios.clone(),
            })
            .collect()
    }

    pub fn scene_config(&self) -> SceneConfig {
        let t = &self.toy;
        SceneConfig {
            image_width: t.image_width,
            image_height: t.image_height,
            num_classes: self.num_classes,
            min_objects: t.min_objects,
            max_objects: t.max_objects,
            feature_dim: t.feature_dim,
            signal: t.signal,
            noise: t.noise,
            layers: self.anchor_specs(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.toy;
        TrainConfig {
            lr: t.lr,
            steps: t.steps,
            beta: self.beta(),
            use_aiou: t.use_aiou,
            seed: self.seed,
            match_threshold: self.match_threshold,
            weights: t.weights,
            layer_reduction: t.scws_reduction,
            hard_negative_ratio: t.hard_negative_ratio,
        }
    }
}
