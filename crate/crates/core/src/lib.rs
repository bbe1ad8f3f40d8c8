//! Map-based validation of semantic segmentation masks.
//!
//! A segmentation mask is warped onto a vehicle-centric bird's-eye-view grid
//! with a flat-ground pinhole model, street-map roads are rasterized into the
//! same grid as constant-width corridors, and every cell gets a verdict:
//! true/false positive road, true/false negative road, occluded, or outside
//! the camera footprint.
//!
//! Modules, in pipeline order:
//!
//! - [`geodesy`]: WGS84 poses, tangent-plane and vehicle frames.
//! - [`osm`]: OSM XML subset parser, drivable-way filter, width inference.
//! - [`raster`]: BEV grid, corridor rasterizer, camera footprint, edge bands.
//! - [`camera`] and [`bev`]: pinhole projection and inverse warp of masks.
//! - [`validate`]: verdicts, error regions, metrics, overlays.
//! - [`synth`]: synthetic scenes with known ground truth.
//! - [`pipeline`]: one-frame composition with stage-tagged errors.

pub mod bev;
pub mod camera;
pub mod config;
pub mod geodesy;
mod geometry;
pub mod osm;
pub mod pipeline;
pub mod raster;
pub mod synth;
pub mod validate;

pub use bev::{warp_to_bev, BevLabelGrid, LabelMap, LabelMask};
pub use camera::{ground_to_pixel, CameraGeometry, CameraModel};
pub use config::PipelineConfig;
pub use geodesy::{GeoPose, LocalPoint, VehiclePoint};
pub use osm::{parse_osm_xml, MapGraph, RoadSet};
pub use pipeline::{run_frame, FrameInput, FrameResult, Stage, StageError, ValidationReport};
pub use raster::{BinaryGrid, GridSpec};
pub use validate::{ValidationGrid, ValidationPolicy, Verdict};
