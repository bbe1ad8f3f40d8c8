//! The four subcommands as library functions. Each returns the process exit
//! code alongside its result so the binary stays a thin shell.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::ImageFormat;
use rayon::prelude::*;
use roadcheck_core::config::SCHEMA_VERSION;
use roadcheck_core::geodesy::apply_corrections;
use roadcheck_core::synth::{scenario_scene, Scenario};
use roadcheck_core::validate::VerdictCounts;
use roadcheck_core::{
    parse_osm_xml, run_frame, FrameInput, LabelMask, MapGraph, PipelineConfig, Stage, StageError,
    ValidationReport,
};
use serde::{Deserialize, Serialize};

use crate::meta::{resolve, FrameMeta, RunConfig};

pub const SUMMARY_FILE: &str = "summary.json";
const REPORT_SUFFIX: &str = ".report.json";

pub fn report_file(frame_id: &str) -> String {
    format!("{frame_id}{REPORT_SUFFIX}")
}

pub fn overlay_file(frame_id: &str) -> String {
    format!("{frame_id}.overlay.png")
}

pub fn verdicts_file(frame_id: &str) -> String {
    format!("{frame_id}.verdicts.png")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| format!("cannot encode `{}`: {e}", path.display()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| format!("cannot write `{}`: {e}", path.display()))
}

fn write_png<P, C>(path: &Path, img: &image::ImageBuffer<P, C>) -> Result<(), String>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| format!("cannot write `{}`: {e}", path.display()))
}

fn load_map(path: &Path) -> Result<MapGraph, (Stage, String)> {
    let bytes = fs::read(path).map_err(|e| {
        (
            Stage::Ingest,
            format!("cannot read map `{}`: {e}", path.display()),
        )
    })?;
    parse_osm_xml(&bytes).map_err(|e| (Stage::OsmIngest, format!("map `{}`: {e}", path.display())))
}

fn map_path_for(
    meta: &FrameMeta,
    meta_path: &Path,
    config: &RunConfig,
) -> Result<PathBuf, StageError> {
    match (&meta.map_path, &config.map_path) {
        (Some(p), _) => Ok(resolve(meta_path, p)),
        (None, Some(global)) => Ok(global.clone()),
        (None, None) => Err(StageError::new(
            &meta.frame_id,
            Stage::Ingest,
            "frame has no map_path and the config names no global map",
        )),
    }
}

fn source_id(path: &Path) -> String {
    path.display().to_string()
}

/// Validates a frame whose metadata and map are already loaded, writing
/// the report, overlay and verdict image into `out`.
fn validate_loaded(
    meta: &FrameMeta,
    meta_path: &Path,
    map: &MapGraph,
    config: &PipelineConfig,
    out: &Path,
) -> Result<ValidationReport, StageError> {
    let id = meta.frame_id.as_str();
    let mask_path = resolve(meta_path, &meta.mask_path);
    let bytes = fs::read(&mask_path).map_err(|e| {
        StageError::new(
            id,
            Stage::Ingest,
            format!("cannot read mask `{}`: {e}", mask_path.display()),
        )
    })?;
    let mask = LabelMask::decode(&bytes, config.label_map.clone()).map_err(|e| {
        StageError::new(
            id,
            Stage::Ingest,
            format!("mask `{}`: {e}", mask_path.display()),
        )
    })?;

    let input = FrameInput {
        frame_id: id,
        pose: meta.pose(),
        camera: meta.camera,
        mask: &mask,
        map,
    };
    let result = run_frame(&input, config)?;

    let output = |e: String| StageError::new(id, Stage::Output, e);
    fs::create_dir_all(out)
        .map_err(|e| output(format!("cannot create `{}`: {e}", out.display())))?;
    write_json(&out.join(report_file(id)), &result.report).map_err(output)?;
    write_png(&out.join(overlay_file(id)), &result.overlay(config)).map_err(output)?;
    write_png(&out.join(verdicts_file(id)), &result.grid.to_id_image()).map_err(output)?;
    Ok(result.report)
}

/// Runs one frame end to end. Exit code is 0 (clean) or 2 (findings);
/// errors map to 1.
pub fn cmd_validate(
    meta_path: &Path,
    config: &RunConfig,
    out: &Path,
) -> Result<ValidationReport, StageError> {
    let meta = FrameMeta::load(meta_path)
        .map_err(|e| StageError::new(&source_id(meta_path), Stage::Ingest, e))?;
    let map_path = map_path_for(&meta, meta_path, config)?;
    let map =
        load_map(&map_path).map_err(|(stage, e)| StageError::new(&meta.frame_id, stage, e))?;
    validate_loaded(&meta, meta_path, &map, &config.pipeline, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub frame_id: String,
    pub fp_cells: usize,
    pub fn_cells: usize,
    pub fp_regions: usize,
    pub fn_regions: usize,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub road_iou_vs_map: f64,
    pub exit_code: u8,
    pub report: String,
}

impl FrameSummary {
    fn of(r: &ValidationReport) -> Self {
        Self {
            frame_id: r.frame_id.clone(),
            fp_cells: r.metrics.counts.fp,
            fn_cells: r.metrics.counts.fn_,
            fp_regions: r.fp_regions.len(),
            fn_regions: r.fn_regions.len(),
            fp_rate: r.metrics.fp_rate,
            fn_rate: r.metrics.fn_rate,
            road_iou_vs_map: r.metrics.road_iou_vs_map,
            exit_code: r.exit_code(),
            report: report_file(&r.frame_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameFailure {
    /// Frame metadata file as listed.
    pub source: String,
    pub frame_id: String,
    pub stage: Stage,
    pub message: String,
}

/// Batch summary. Frames are ordered by descending FP + FN cells, then id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: String,
    pub frames_total: usize,
    pub frames_succeeded: usize,
    pub frames_failed: usize,
    pub frames_with_findings: usize,
    pub totals: VerdictCounts,
    pub frames: Vec<FrameSummary>,
    pub failures: Vec<FrameFailure>,
}

impl Summary {
    pub fn new(reports: &[ValidationReport], mut failures: Vec<FrameFailure>) -> Self {
        let mut frames: Vec<FrameSummary> = reports.iter().map(FrameSummary::of).collect();
        frames.sort_by(|a, b| {
            (b.fp_cells + b.fn_cells)
                .cmp(&(a.fp_cells + a.fn_cells))
                .then_with(|| a.frame_id.cmp(&b.frame_id))
        });
        failures.sort();
        let mut totals = VerdictCounts::default();
        for r in reports {
            totals += r.metrics.counts;
        }
        Self {
            schema_version: SCHEMA_VERSION.to_owned(),
            frames_total: frames.len() + failures.len(),
            frames_succeeded: frames.len(),
            frames_failed: failures.len(),
            frames_with_findings: reports.iter().filter(|r| r.has_findings()).count(),
            totals,
            frames,
            failures,
        }
    }

    /// 1 when every frame failed, else 2 when any frame has findings, else 0.
    pub fn exit_code(&self) -> u8 {
        if self.frames_total > 0 && self.frames_succeeded == 0 {
            1
        } else if self.frames_with_findings > 0 {
            2
        } else {
            0
        }
    }
}

/// Validates many frames with `config.parallelism` workers. Per-frame
/// failures are recorded in the summary; only an unusable output directory
/// aborts the batch.
pub fn cmd_batch(
    meta_paths: &[PathBuf],
    config: &RunConfig,
    out: &Path,
) -> Result<Summary, String> {
    fs::create_dir_all(out).map_err(|e| format!("cannot create `{}`: {e}", out.display()))?;
    let mut failures = Vec::new();
    let fail = |source: &Path, e: StageError| FrameFailure {
        source: source_id(source),
        frame_id: e.frame_id,
        stage: e.stage,
        message: e.message,
    };

    // metadata and maps are loaded once, up front
    let mut jobs = Vec::new();
    let mut ids = BTreeSet::new();
    for path in meta_paths {
        let loaded = FrameMeta::load(path)
            .map_err(|e| StageError::new(&source_id(path), Stage::Ingest, e))
            .and_then(|meta| {
                if !ids.insert(meta.frame_id.clone()) {
                    return Err(StageError::new(
                        &meta.frame_id,
                        Stage::Ingest,
                        "duplicate frame_id in batch",
                    ));
                }
                let map = map_path_for(&meta, path, config)?;
                Ok((meta, map))
            });
        match loaded {
            Ok((meta, map)) => jobs.push((path, meta, map)),
            Err(e) => failures.push(fail(path, e)),
        }
    }
    let maps: BTreeMap<&Path, Result<MapGraph, (Stage, String)>> = jobs
        .iter()
        .map(|(_, _, m)| m.as_path())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|p| (p, load_map(p)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| format!("cannot start worker pool: {e}"))?;
    let results: Vec<Result<ValidationReport, StageError>> = pool.install(|| {
        jobs.par_iter()
            .map(|(path, meta, map_path)| match &maps[map_path.as_path()] {
                Ok(map) => validate_loaded(meta, path, map, &config.pipeline, out),
                Err((stage, e)) => Err(StageError::new(&meta.frame_id, *stage, e)),
            })
            .collect()
    });

    let mut reports = Vec::new();
    for ((path, _, _), result) in jobs.iter().zip(results) {
        match result {
            Ok(report) => reports.push(report),
            Err(e) => failures.push(fail(path, e)),
        }
    }
    let summary = Summary::new(&reports, failures);
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Rebuilds `summary.json` from the per-frame reports in `dir`. Failures
/// recorded by an earlier summary are carried over.
pub fn cmd_report(dir: &Path) -> Result<Summary, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("cannot read `{}`: {e}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(REPORT_SUFFIX))
        })
        .collect();
    paths.sort();
    let mut reports = Vec::with_capacity(paths.len());
    for p in &paths {
        let text =
            fs::read_to_string(p).map_err(|e| format!("cannot read `{}`: {e}", p.display()))?;
        let report: ValidationReport = serde_json::from_str(&text)
            .map_err(|e| format!("invalid report `{}`: {e}", p.display()))?;
        reports.push(report);
    }
    let summary_path = dir.join(SUMMARY_FILE);
    let failures = fs::read_to_string(&summary_path)
        .ok()
        .and_then(|t| serde_json::from_str::<Summary>(&t).ok())
        .map(|s| s.failures)
        .unwrap_or_default();
    let summary = Summary::new(&reports, failures);
    write_json(&summary_path, &summary)?;
    Ok(summary)
}

/// Files written by [`cmd_synth`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub meta: PathBuf,
    pub mask: PathBuf,
    pub map: PathBuf,
}

/// Writes `<name>.mask.png`, `<name>.osm` and `<name>.meta.json` for a
/// built-in scenario. The metadata carries the (possibly wrong) reported
/// pose with any injected offset already folded in.
pub fn cmd_synth(name: &str, config: &PipelineConfig, out: &Path) -> Result<SynthFiles, String> {
    let scenario: Scenario = name.parse().map_err(|e| format!("{e}"))?;
    let scene = scenario_scene(scenario, config).map_err(|e| format!("scenario `{name}`: {e}"))?;
    fs::create_dir_all(out).map_err(|e| format!("cannot create `{}`: {e}", out.display()))?;

    let files = SynthFiles {
        meta: out.join(format!("{name}.meta.json")),
        mask: out.join(format!("{name}.mask.png")),
        map: out.join(format!("{name}.osm")),
    };
    write_png(&files.mask, &scene.mask.to_gray_image())?;
    fs::write(&files.map, scene.map.to_osm_xml())
        .map_err(|e| format!("cannot write `{}`: {e}", files.map.display()))?;
    let pose = apply_corrections(&scene.pose);
    let meta = FrameMeta {
        schema_version: SCHEMA_VERSION.to_owned(),
        frame_id: scene.frame_id.clone(),
        lat: pose.lat,
        lon: pose.lon,
        heading_deg: pose.heading,
        correction_east_m: 0.0,
        correction_north_m: 0.0,
        correction_heading_deg: 0.0,
        camera: scene.camera,
        mask_path: PathBuf::from(format!("{name}.mask.png")),
        map_path: Some(PathBuf::from(format!("{name}.osm"))),
    };
    write_json(&files.meta, &meta)?;
    Ok(files)
}
