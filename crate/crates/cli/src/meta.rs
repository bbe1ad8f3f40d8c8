//! On-disk inputs: frame metadata, frame lists and run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use roadcheck_core::config::SCHEMA_VERSION;
use roadcheck_core::{CameraModel, GeoPose, PipelineConfig};
use serde::{Deserialize, Serialize};

fn schema_version() -> String {
    SCHEMA_VERSION.to_owned()
}

/// Per-frame metadata. Relative paths are resolved against the directory
/// holding the metadata file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMeta {
    #[serde(default = "schema_version")]
    pub schema_version: String,
    pub frame_id: String,
    pub lat: f64,
    pub lon: f64,
    pub heading_deg: f64,
    #[serde(default)]
    pub correction_east_m: f64,
    #[serde(default)]
    pub correction_north_m: f64,
    #[serde(default)]
    pub correction_heading_deg: f64,
    pub camera: CameraModel,
    pub mask_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_path: Option<PathBuf>,
}

impl FrameMeta {
    pub fn pose(&self) -> GeoPose {
        GeoPose {
            lat: self.lat,
            lon: self.lon,
            heading: self.heading_deg,
            correction_east: self.correction_east_m,
            correction_north: self.correction_north_m,
            correction_heading: self.correction_heading_deg,
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read frame metadata `{}`: {e}", path.display()))?;
        let meta: Self = serde_json::from_str(&text)
            .map_err(|e| format!("invalid frame metadata `{}`: {e}", path.display()))?;
        meta.check()
            .map_err(|e| format!("invalid frame metadata `{}`: {e}", path.display()))?;
        Ok(meta)
    }

    fn check(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version `{}`",
                self.schema_version
            ));
        }
        // the id names output files
        let bad = self.frame_id.is_empty()
            || self.frame_id.starts_with('.')
            || self
                .frame_id
                .chars()
                .any(|c| c == '/' || c == '\\' || c.is_control());
        if bad {
            return Err(format!(
                "frame_id `{}` is not usable as a file name",
                self.frame_id
            ));
        }
        Ok(())
    }
}

/// `{"schema_version": "1", "frames": ["a.meta.json", ...]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameList {
    #[serde(default = "schema_version")]
    pub schema_version: String,
    pub frames: Vec<PathBuf>,
}

impl FrameList {
    /// Loads the list and resolves entries against its directory.
    pub fn load(path: &Path) -> Result<Vec<PathBuf>, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read frame list `{}`: {e}", path.display()))?;
        let list: Self = serde_json::from_str(&text)
            .map_err(|e| format!("invalid frame list `{}`: {e}", path.display()))?;
        if list.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "frame list `{}`: unsupported schema_version `{}`",
                path.display(),
                list.schema_version
            ));
        }
        Ok(list.frames.iter().map(|f| resolve(path, f)).collect())
    }
}

/// Resolves `target` relative to the directory of `anchor_file`.
pub fn resolve(anchor_file: &Path, target: &Path) -> PathBuf {
    if target.is_absolute() {
        target.to_owned()
    } else {
        anchor_file.parent().unwrap_or(Path::new("")).join(target)
    }
}

/// Pipeline configuration plus run-level settings.
///
/// On disk this is a single JSON object: the pipeline configuration fields
/// plus optional `parallelism` and `map_path` (a map used by frames that do
/// not name their own).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub parallelism: usize,
    pub map_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            parallelism: 1,
            map_path: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config `{}`: {e}", path.display()))?;
        Self::from_json(&text, path)
            .map_err(|e| format!("invalid config `{}`: {e}", path.display()))
    }

    fn from_json(text: &str, path: &Path) -> Result<Self, String> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let obj = value.as_object_mut().ok_or("expected a JSON object")?;
        let parallelism = match obj.remove("parallelism") {
            None => 1,
            Some(v) => v
                .as_u64()
                .filter(|&n| n >= 1)
                .ok_or("parallelism must be a positive integer")? as usize,
        };
        let map_path = match obj.remove("map_path") {
            None => None,
            Some(v) => Some(resolve(
                path,
                Path::new(v.as_str().ok_or("map_path must be a string")?),
            )),
        };
        let pipeline: PipelineConfig = serde_json::from_value(value).map_err(|e| e.to_string())?;
        pipeline.validate()?;
        Ok(Self {
            pipeline,
            parallelism,
            map_path,
        })
    }
}
