//! JSON run configuration with `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::TestOptions;
use crate::collapse::CollapseModel;
use crate::optics::{GratingSpec, ScreenGeometry};
use crate::simkit::{
    ChannelOffsets, DetectorSpec, ExperimentSpec, SourceSpec, TagFormat, FIRST_SCREEN_CHANNEL,
    HERALD_CHANNEL,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("bad override `{0}`: expected section.key=value")]
    BadOverride(String),
    #[error("override path `{0}` does not exist")]
    UnknownPath(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CollapseSection {
    pub model: CollapseModel,
}

/// A screen detector; `order` places it on that diffraction order's peak and
/// takes precedence over `position_m`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<i32>,
    #[serde(flatten)]
    pub spec: DetectorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub duration_s: f64,
    pub seed: u64,
    pub format: TagFormat,
    /// Output directory; `--out` takes precedence.
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            seed: 1927,
            format: TagFormat::Bin,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSection {
    pub bin_width_ns: f64,
    /// Histogram bin centres span `±half_range_ns`.
    pub half_range_ns: f64,
    /// Coincidence window used for the anticorrelation parameter.
    pub window_ns: f64,
    pub reference_channel: u8,
    pub signal_channel: u8,
    #[serde(flatten)]
    pub test: TestOptions,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            bin_width_ns: 2.0,
            half_range_ns: 50.0,
            window_ns: 2.0,
            reference_channel: HERALD_CHANNEL,
            signal_channel: FIRST_SCREEN_CHANNEL,
            test: TestOptions::default(),
        }
    }
}

impl AnalysisSection {
    pub fn bin_width_ps(&self) -> u64 {
        (self.bin_width_ns * 1e3).round() as u64
    }

    pub fn half_range_ps(&self) -> i64 {
        (self.half_range_ns * 1e3).round() as i64
    }

    pub fn window_ps(&self) -> u64 {
        (self.window_ns * 1e3).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSection {
    /// Width over which a single aperture spreads the light on the screen.
    pub slit_spread_extent_m: f64,
    /// Replaces the integrated first-order power fraction when set.
    pub peak_fraction_override: Option<f64>,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            slit_spread_extent_m: 3.0,
            peak_fraction_override: None,
        }
    }
}

fn default_detectors() -> Vec<DetectorConfig> {
    [1, -1]
        .into_iter()
        .map(|order| DetectorConfig {
            order: Some(order),
            spec: DetectorSpec::default(),
        })
        .collect()
}

fn default_offsets() -> ChannelOffsets {
    ChannelOffsets::default()
        .with(HERALD_CHANNEL, 0.0)
        .with(FIRST_SCREEN_CHANNEL, 20e-9)
        .with(FIRST_SCREEN_CHANNEL + 1, 20e-9)
}

/// Complete description of a run. Missing sections take their defaults,
/// except `grating`, whose absence means the grating is removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub grating: Option<GratingSpec>,
    #[serde(default)]
    pub screen: ScreenGeometry,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorConfig>,
    #[serde(default)]
    pub collapse: CollapseSection,
    #[serde(default = "default_offsets")]
    pub offsets: ChannelOffsets,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub planner: PlannerSection,
}

impl Default for RunConfig {
    /// The reference layout: 800 lines/mm grating, f = 4 m, detectors on both
    /// first orders, covariant-reduction model.
    fn default() -> Self {
        Self {
            source: SourceSpec::default(),
            grating: Some(GratingSpec::default()),
            screen: ScreenGeometry::default(),
            detectors: default_detectors(),
            collapse: CollapseSection {
                model: CollapseModel::HellwigKraus,
            },
            offsets: default_offsets(),
            run: RunSection::default(),
            analysis: AnalysisSection::default(),
            planner: PlannerSection::default(),
        }
    }
}

/// Sets `path` (dot separated, array indices allowed) to `raw`, parsed as JSON
/// when possible and as a plain string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(assignment.into()))?;
    if path.is_empty() {
        return Err(ConfigError::BadOverride(assignment.into()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = doc;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| ConfigError::UnknownPath(path.into()))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| ConfigError::UnknownPath(path.into()))?
            }
            Value::Object(map) => {
                if last {
                    map.insert((*key).to_string(), value);
                    return Ok(());
                }
                map.entry((*key).to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Null if !last => {
                *node = Value::Object(Default::default());
                let Value::Object(map) = node else { unreachable!() };
                map.entry((*key).to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            _ => return Err(ConfigError::UnknownPath(path.into())),
        };
        if last {
            *node = value;
            return Ok(());
        }
    }
    Ok(())
}

impl RunConfig {
    /// Loads `path` (or the defaults when `None`) and applies overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                serde_json::from_str(&text)?
            }
            None => serde_json::to_value(RunConfig::default())?,
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Ok(serde_json::from_value(doc)?)
    }

    /// Short SHA-256 digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    /// Detectors with order placements turned into screen positions.
    pub fn resolved_detectors(&self) -> Result<Vec<DetectorSpec>, ConfigError> {
        self.detectors
            .iter()
            .map(|d| match d.order {
                None => Ok(d.spec),
                Some(m) => {
                    let g = self.grating.as_ref().ok_or_else(|| {
                        ConfigError::Invalid(format!("detector placed on order {m} without a grating"))
                    })?;
                    let s = m as f64 * g.wavelength_m / g.period_m;
                    if s.abs() > 1.0 {
                        return Err(ConfigError::Invalid(format!("order {m} does not propagate")));
                    }
                    Ok(DetectorSpec {
                        position_m: self.screen.to_screen(s.asin()),
                        ..d.spec
                    })
                }
            })
            .collect()
    }

    pub fn experiment(&self) -> Result<ExperimentSpec, ConfigError> {
        Ok(ExperimentSpec {
            source: self.source,
            grating: self.grating,
            screen: self.screen,
            detectors: self.resolved_detectors()?,
            model: self.collapse.model,
            offsets: self.offsets.clone(),
            duration_s: self.run.duration_s,
            config_hash: self.hash(),
        })
    }
}
