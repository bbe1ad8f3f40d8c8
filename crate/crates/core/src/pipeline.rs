//! End-to-end validation of one frame: geodesy, map ingest, map raster,
//! BEV warp and classification.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bev::{warp_to_bev, BevLabelGrid, LabelMask};
use crate::camera::CameraModel;
use crate::config::{PipelineConfig, SCHEMA_VERSION};
use crate::geodesy::{apply_corrections, GeoPose};
use crate::osm::{build_roadset, MapGraph, RoadSet};
use crate::raster::{fov_footprint, rasterize_roads, BinaryGrid};
use crate::validate::{
    classify, extract_regions, metrics, Metrics, Region, ValidationGrid, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Config,
    Geodesy,
    OsmIngest,
    MapRaster,
    Bev,
    Validate,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Config => "config",
            Stage::Geodesy => "geodesy",
            Stage::OsmIngest => "osm-ingest",
            Stage::MapRaster => "map-raster",
            Stage::Bev => "bev",
            Stage::Validate => "validate",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("frame `{frame_id}`, stage {stage}: {message}")]
pub struct StageError {
    pub frame_id: String,
    pub stage: Stage,
    pub message: String,
}

impl StageError {
    pub fn new(frame_id: &str, stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            frame_id: frame_id.to_owned(),
            stage,
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEcho {
    /// Pose as supplied, including any manual corrections.
    pub reported: GeoPose,
    /// Pose after folding in the corrections; the map is anchored here.
    pub effective: GeoPose,
}

/// Per-frame result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: String,
    pub frame_id: String,
    pub pose: PoseEcho,
    pub camera: CameraModel,
    pub roads_in_range: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub fp_regions: Vec<Region>,
    pub fn_regions: Vec<Region>,
    pub config: PipelineConfig,
}

impl ValidationReport {
    /// True when any FP or FN region survived the size filter.
    pub fn has_findings(&self) -> bool {
        !self.fp_regions.is_empty() || !self.fn_regions.is_empty()
    }

    /// 0 when clean, 2 when error regions were found.
    pub fn exit_code(&self) -> u8 {
        if self.has_findings() {
            2
        } else {
            0
        }
    }
}

/// Everything produced for one frame.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub report: ValidationReport,
    pub roads: RoadSet,
    pub bev: BevLabelGrid,
    pub map_road: BinaryGrid,
    pub fov: BinaryGrid,
    pub grid: ValidationGrid,
}

impl FrameResult {
    pub fn overlay(&self, config: &PipelineConfig) -> image::RgbaImage {
        crate::validate::render_overlay(&self.bev, &self.map_road, &self.grid, &config.palette)
            .expect("grids produced by run_frame share one spec")
    }
}

pub struct FrameInput<'a> {
    pub frame_id: &'a str,
    pub pose: GeoPose,
    pub camera: CameraModel,
    pub mask: &'a LabelMask,
    pub map: &'a MapGraph,
}

pub fn run_frame(
    input: &FrameInput<'_>,
    config: &PipelineConfig,
) -> Result<FrameResult, StageError> {
    let id = input.frame_id;
    config
        .validate()
        .map_err(|e| StageError::new(id, Stage::Config, e))?;
    let reported = input
        .pose
        .validated()
        .map_err(|e| StageError::new(id, Stage::Geodesy, e))?;
    let pose = apply_corrections(&reported);
    input
        .camera
        .validate()
        .map_err(|e| StageError::new(id, Stage::Bev, e))?;

    let roads = build_roadset(
        input.map,
        &config.whitelist,
        &config.widths,
        &pose,
        config.map_radius_m,
    )
    .map_err(|e| StageError::new(id, Stage::OsmIngest, e))?;
    let map_road = rasterize_roads(&roads, &config.grid, &pose);
    let fov = fov_footprint(&input.camera, &config.grid);

    let bev = warp_to_bev(input.mask, &input.camera, &config.grid)
        .map_err(|e| StageError::new(id, Stage::Bev, e))?;
    if bev.label_map() != &config.label_map {
        return Err(StageError::new(
            id,
            Stage::Bev,
            "mask label map differs from the configured one",
        ));
    }
    let grid = classify(&bev, &map_road, &fov, &config.policy)
        .map_err(|e| StageError::new(id, Stage::Validate, e))?;

    let report = ValidationReport {
        schema_version: SCHEMA_VERSION.to_owned(),
        frame_id: id.to_owned(),
        pose: PoseEcho {
            reported,
            effective: pose,
        },
        camera: input.camera,
        roads_in_range: roads.len(),
        metrics: metrics(&grid),
        fp_regions: extract_regions(&grid, Verdict::Fp, &config.policy),
        fn_regions: extract_regions(&grid, Verdict::Fn, &config.policy),
        config: config.clone(),
    };
    Ok(FrameResult {
        report,
        roads,
        bev,
        map_road,
        fov,
        grid,
    })
}
