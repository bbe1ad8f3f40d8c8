//! Effective pipeline configuration. Every report embeds a copy of it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bev::LabelMap;
use crate::osm::{default_whitelist, WidthDefaults};
use crate::raster::GridSpec;
use crate::validate::{Palette, ValidationPolicy};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: String,
    pub grid: GridSpec,
    pub policy: ValidationPolicy,
    /// Highway classes treated as drivable.
    pub whitelist: BTreeSet<String>,
    pub widths: WidthDefaults,
    /// Ways farther than this from the vehicle are not considered.
    pub map_radius_m: f64,
    pub label_map: LabelMap,
    pub palette: Palette,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_owned(),
            grid: GridSpec::default(),
            policy: ValidationPolicy::default(),
            whitelist: default_whitelist(),
            widths: WidthDefaults::default(),
            map_radius_m: 100.0,
            label_map: LabelMap::default(),
            palette: Palette::default(),
        }
    }
}

impl PipelineConfig {
    /// Checks cross-field invariants that serde cannot express.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version `{}` (expected `{SCHEMA_VERSION}`)",
                self.schema_version
            ));
        }
        self.policy.validate().map_err(|e| e.to_string())?;
        self.widths.validate()?;
        self.palette.validate()?;
        if !(self.map_radius_m.is_finite() && self.map_radius_m > 0.0) {
            return Err(format!(
                "map_radius_m {} must be positive",
                self.map_radius_m
            ));
        }
        for name in self
            .policy
            .road_classes
            .iter()
            .chain(&self.policy.occluder_classes)
        {
            self.label_map.require(name).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}
