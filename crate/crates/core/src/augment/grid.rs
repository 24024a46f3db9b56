use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameter choices for external training runs.
///
/// Rotation choices are degree ranges, zoom choices percent ranges
/// (`[75, 125]` means a factor in `[0.75, 1.25]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub rotation_choices: Vec<[f64; 2]>,
    pub zoom_choices: Vec<[f64; 2]>,
    pub lr_choices: Vec<f64>,
    pub freeze_choices: Vec<String>,
    /// Values held fixed while other axes vary; defaults to the first choice
    /// of each list.
    #[serde(default)]
    pub baseline: Baseline,
    #[serde(default = "default_rotation_prob")]
    pub rotation_prob: f64,
    #[serde(default = "default_zoom_prob")]
    pub zoom_prob: f64,
    #[serde(default)]
    pub grayscale_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Baseline {
    pub rotation: Option<[f64; 2]>,
    pub zoom: Option<[f64; 2]>,
    pub learning_rate: Option<f64>,
    pub freeze_layer: Option<String>,
}

fn default_rotation_prob() -> f64 {
    0.6
}

fn default_zoom_prob() -> f64 {
    1.0
}

impl GridSpace {
    /// Choice lists searched during validation of the infant models, with
    /// the selected configuration (±90°, 100% ± 25%, lr 1e-7, frozen before
    /// stage 2) as the baseline.
    pub fn published_defaults() -> Self {
        let sym = |v: f64| [-v, v];
        let pct = |v: f64| [100.0 - v, 100.0 + v];
        Self {
            rotation_choices: [30.0, 60.0, 90.0, 120.0, 150.0].map(sym).to_vec(),
            zoom_choices: [5.0, 10.0, 15.0, 20.0, 30.0, 50.0].map(pct).to_vec(),
            lr_choices: vec![1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            freeze_choices: ["stage2", "stage3", "stage4", "none"]
                .map(String::from)
                .to_vec(),
            baseline: Baseline {
                rotation: Some(sym(90.0)),
                zoom: Some(pct(25.0)),
                learning_rate: Some(1e-7),
                freeze_layer: Some("stage2".to_string()),
            },
            rotation_prob: default_rotation_prob(),
            zoom_prob: default_zoom_prob(),
            grayscale_prob: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rotation_choices.is_empty()
            || self.zoom_choices.is_empty()
            || self.lr_choices.is_empty()
            || self.freeze_choices.is_empty()
        {
            return Err(Error::InvalidArgument(
                "every grid axis needs at least one choice".into(),
            ));
        }
        for p in [self.rotation_prob, self.zoom_prob, self.grayscale_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// One training-configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub rotation_range_deg: [f64; 2],
    pub rotation_prob: f64,
    pub zoom_range: [f64; 2],
    pub zoom_prob: f64,
    pub grayscale_prob: f64,
    pub learning_rate: f64,
    pub freeze_layer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigGrid {
    /// Every learning rate crossed with every freeze option.
    pub lr_freeze: Vec<TrainingConfig>,
    /// Each rotation choice with all other axes at baseline.
    pub rotation_sweep: Vec<TrainingConfig>,
    /// Each zoom choice with all other axes at baseline.
    pub zoom_sweep: Vec<TrainingConfig>,
}

impl ConfigGrid {
    /// All documents in grid order with duplicates removed.
    pub fn documents(&self) -> Vec<TrainingConfig> {
        let mut out: Vec<TrainingConfig> = Vec::new();
        for c in self
            .lr_freeze
            .iter()
            .chain(&self.rotation_sweep)
            .chain(&self.zoom_sweep)
        {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }
}

pub fn gen_config_grid(space: &GridSpace) -> Result<ConfigGrid> {
    space.validate()?;
    let base_rot = space.baseline.rotation.unwrap_or(space.rotation_choices[0]);
    let base_zoom = space.baseline.zoom.unwrap_or(space.zoom_choices[0]);
    let base_lr = space.baseline.learning_rate.unwrap_or(space.lr_choices[0]);
    let base_freeze = space
        .baseline
        .freeze_layer
        .clone()
        .unwrap_or_else(|| space.freeze_choices[0].clone());

    let doc = |rot: [f64; 2], zoom_pct: [f64; 2], lr: f64, freeze: &str| TrainingConfig {
        rotation_range_deg: rot,
        rotation_prob: space.rotation_prob,
        zoom_range: [zoom_pct[0] / 100.0, zoom_pct[1] / 100.0],
        zoom_prob: space.zoom_prob,
        grayscale_prob: space.grayscale_prob,
        learning_rate: lr,
        freeze_layer: freeze.to_string(),
    };

    let lr_freeze = space
        .lr_choices
        .iter()
        .flat_map(|&lr| space.freeze_choices.iter().map(move |f| (lr, f.as_str())))
        .map(|(lr, f)| doc(base_rot, base_zoom, lr, f))
        .collect();
    let rotation_sweep = space
        .rotation_choices
        .iter()
        .map(|&r| doc(r, base_zoom, base_lr, &base_freeze))
        .collect();
    let zoom_sweep = space
        .zoom_choices
        .iter()
        .map(|&z| doc(base_rot, z, base_lr, &base_freeze))
        .collect();
    Ok(ConfigGrid {
        lr_freeze,
        rotation_sweep,
        zoom_sweep,
    })
}
