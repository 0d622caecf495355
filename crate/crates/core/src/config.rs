//! Experiment configuration.
//!
//! One TOML document covers every knob. Missing keys take the defaults
//! below; unknown keys are rejected. Overrides use dotted paths, e.g.
//! `train.lr=1e-3` or `model.preset="desk"`; the value is parsed as a TOML
//! value and falls back to a plain string.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::NoisePairing;
use crate::nn::{ModelConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Base seed for sampling and data preparation.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub units: UnitsConfig,
    pub projection: ProjectionConfig,
    pub labels: LabelConfig,
    pub metrics: MetricsConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub crossval: CrossvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitsConfig {
    /// Millimetres per raw depth-PNG unit.
    pub depth_scale_mm: f64,
    /// Millimetres per mesh coordinate unit.
    pub mesh_scale_mm: f64,
}

impl Default for UnitsConfig {
    fn default() -> Self {
        Self {
            depth_scale_mm: 1.0,
            mesh_scale_mm: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Downsample {
    /// Voxel grid, then a random subset or padding to the exact count.
    VoxelRandom,
    Random,
    Fps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    /// Points kept per spine cloud.
    pub spine_points: usize,
    pub method: Downsample,
    pub voxel_mm: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            spine_points: 10_000,
            method: Downsample::VoxelRandom,
            voxel_mm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    /// Points farther than this from every mesh are background.
    pub tau_bg_mm: f64,
    /// Vertebrae with fewer extracted points are skipped.
    pub min_points: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            tau_bg_mm: 3.0,
            min_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Points sampled from each ground-truth mesh.
    pub gt_points: usize,
    /// F-score threshold as a fraction of the longest GT bounding-box side.
    pub fscore_fraction: f64,
    /// Visibility threshold for the top/bottom Chamfer split; defaults to
    /// twice the median nearest-neighbour spacing of the input.
    pub tau_vis_mm: Option<f64>,
    pub snr_pairing: NoisePairing,
    /// Both clouds are resampled to this many points before EMD.
    pub emd_points: usize,
    /// Largest size solved exactly; larger inputs use the auction solver.
    pub emd_exact_cap: usize,
    /// Auction tolerance in normalized units.
    pub emd_epsilon: f64,
    /// Voxel edge for IoU_input.
    pub iou_voxel_mm: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            gt_points: 4096,
            fscore_fraction: 0.01,
            tau_vis_mm: None,
            snr_pairing: NoisePairing::Nn,
            emd_points: 1024,
            emd_exact_cap: crate::metrics::DEFAULT_EXACT_CAP,
            emd_epsilon: 1e-3,
            iou_voxel_mm: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Full,
    Desk,
}

/// A preset plus optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: Preset,
    pub seed: u64,
    pub encoder_depth: Option<usize>,
    pub decoder_depth: Option<usize>,
    pub num_heads: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub knn_feature: Option<usize>,
    pub knn_geom: Option<usize>,
    pub n_input: Option<usize>,
    pub n_tokens: Option<usize>,
    pub n_coarse: Option<usize>,
    pub fold_factor: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: Preset::Full,
            seed: 0,
            encoder_depth: None,
            decoder_depth: None,
            num_heads: None,
            hidden_dim: None,
            knn_feature: None,
            knn_geom: None,
            n_input: None,
            n_tokens: None,
            n_coarse: None,
            fold_factor: None,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self) -> Result<ModelConfig> {
        let base = match self.preset {
            Preset::Full => ModelConfig::full(),
            Preset::Desk => ModelConfig::desk(),
        };
        let c = ModelConfig {
            encoder_depth: self.encoder_depth.unwrap_or(base.encoder_depth),
            decoder_depth: self.decoder_depth.unwrap_or(base.decoder_depth),
            num_heads: self.num_heads.unwrap_or(base.num_heads),
            hidden_dim: self.hidden_dim.unwrap_or(base.hidden_dim),
            knn_feature: self.knn_feature.unwrap_or(base.knn_feature),
            knn_geom: self.knn_geom.unwrap_or(base.knn_geom),
            n_input: self.n_input.unwrap_or(base.n_input),
            n_tokens: self.n_tokens.unwrap_or(base.n_tokens),
            n_coarse: self.n_coarse.unwrap_or(base.n_coarse),
            fold_factor: self.fold_factor.unwrap_or(base.fold_factor),
        };
        c.validate()?;
        Ok(c)
    }

    fn filled(&self) -> Result<Self> {
        let c = self.resolve()?;
        Ok(Self {
            preset: self.preset,
            seed: self.seed,
            encoder_depth: Some(c.encoder_depth),
            decoder_depth: Some(c.decoder_depth),
            num_heads: Some(c.num_heads),
            hidden_dim: Some(c.hidden_dim),
            knn_feature: Some(c.knn_feature),
            knn_geom: Some(c.knn_geom),
            n_input: Some(c.n_input),
            n_tokens: Some(c.n_tokens),
            n_coarse: Some(c.n_coarse),
            fold_factor: Some(c.fold_factor),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompleterKind {
    /// Train the completion network on the fold's training specimens.
    Model,
    /// Return the resampled ground truth (sanity baseline).
    Oracle,
    /// Return the resampled partial input (lower baseline).
    CopyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossvalConfig {
    pub completer: CompleterKind,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        Self {
            completer: CompleterKind::Model,
        }
    }
}

fn config_err(msg: impl std::fmt::Display) -> Error {
    Error::Config(msg.to_string())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `dotted.key=value` override to a TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override '{assignment}' is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("'{p}' in '{key}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text and applies overrides in order.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(format!("{name} must be positive, got {v}")))
            }
        };
        positive("units.depth_scale_mm", self.units.depth_scale_mm)?;
        positive("units.mesh_scale_mm", self.units.mesh_scale_mm)?;
        positive("projection.voxel_mm", self.projection.voxel_mm)?;
        positive("labels.tau_bg_mm", self.labels.tau_bg_mm)?;
        positive("metrics.fscore_fraction", self.metrics.fscore_fraction)?;
        positive("metrics.emd_epsilon", self.metrics.emd_epsilon)?;
        positive("metrics.iou_voxel_mm", self.metrics.iou_voxel_mm)?;
        if let Some(t) = self.metrics.tau_vis_mm {
            positive("metrics.tau_vis_mm", t)?;
        }
        if self.projection.spine_points == 0 || self.metrics.gt_points == 0 || self.metrics.emd_points == 0 {
            return Err(config_err("point counts must be positive"));
        }
        self.model.resolve()?;
        self.train.validate()
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        self.model.resolve()
    }

    /// Fully resolved TOML; loading it reproduces this configuration.
    pub fn snapshot(&self) -> Result<String> {
        let mut c = self.clone();
        c.model = self.model.filled()?;
        toml::to_string(&c).map_err(config_err)
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        crate::io::atomic_write_str(&dir.join("resolved_config.toml"), &self.snapshot()?)
    }
}
