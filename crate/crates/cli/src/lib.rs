//! Command-line front end: frame metadata, batch orchestration and report
//! files.
//!
//! Outputs per frame, named after `frame_id`:
//!
//! * `<id>.report.json` – metrics, error regions and the effective config;
//! * `<id>.overlay.png` – RGBA bird's-eye overlay;
//! * `<id>.verdicts.png` – 8-bit verdict ids
//!   (OUT_OF_FOV 0, TP 1, FP 2, FN 3, TN 4, OCCLUDED 5, UNOBSERVED 6).

pub mod commands;
pub mod meta;

pub use commands::{
    cmd_batch, cmd_report, cmd_synth, cmd_validate, FrameFailure, FrameSummary, Summary, SynthFiles,
};
pub use meta::{FrameList, FrameMeta, RunConfig};
