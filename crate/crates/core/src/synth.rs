//! Synthetic frames rendered from a known map through a known camera, with
//! controlled perturbations. The road/terrain/sky world is enough to drive
//! every verdict except OCCLUDED, which tests produce by stamping occluder
//! classes onto rendered masks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bev::{BevError, LabelMap, LabelMask};
use crate::camera::{CameraGeometry, CameraModel};
use crate::config::PipelineConfig;
use crate::geodesy::{local_to_wgs84, vehicle_to_local, GeoPose, VehiclePoint};
use crate::osm::{build_roadset, MapGraph, NodeCoord, OsmError, RoadSet, Way};
use crate::raster::Corridors;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("unknown scenario `{0}` (expected one of straight, curve, intersection, widen, drop_branch, gps_offset)")]
    UnknownScenario(String),
    #[error("no road with way id {0}")]
    UnknownWay(i64),
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error(transparent)]
    Labels(#[from] BevError),
    #[error(transparent)]
    Map(#[from] OsmError),
}

/// Labels every pixel by casting its center onto the ground plane: `sky`
/// above the horizon, `road` inside any corridor, `terrain` elsewhere.
pub fn render_mask(
    roads: &RoadSet,
    pose: &GeoPose,
    camera: &CameraModel,
    labels: &LabelMap,
) -> Result<LabelMask, SynthError> {
    let sky = labels.require("sky")?;
    let road = labels.require("road")?;
    let terrain = labels.require("terrain")?;
    let corridors = Corridors::new(roads, pose);
    let geom = CameraGeometry::new(camera);
    let mut mask = LabelMask::filled(camera.image_width, camera.image_height, sky, labels.clone());
    for y in 0..camera.image_height {
        for x in 0..camera.image_width {
            if let Some(p) = geom.pixel_to_ground(f64::from(x) + 0.5, f64::from(y) + 0.5) {
                mask.set(x, y, if corridors.contains(p) { road } else { terrain });
            }
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    None,
    /// Reported position is off by this many meters.
    GpsOffset {
        east: f64,
        north: f64,
    },
    /// Reported heading is off by this many degrees.
    HeadingOffset {
        degrees: f64,
    },
    WidenRoad {
        way_id: i64,
        extra: f64,
    },
    ShrinkRoad {
        way_id: i64,
        less: f64,
    },
    DropWay {
        way_id: i64,
    },
}

/// Applies a perturbation to a road set and pose.
///
/// Pose perturbations are written into the correction fields, so the
/// corrected pose is wrong by exactly the given amount.
pub fn apply_perturbation(
    roads: &RoadSet,
    pose: &GeoPose,
    p: &Perturbation,
) -> Result<(RoadSet, GeoPose), SynthError> {
    let mut roads = roads.clone();
    let mut pose = *pose;
    let index_of = |roads: &RoadSet, id: i64| {
        roads
            .roads
            .iter()
            .position(|r| r.way_id == id)
            .ok_or(SynthError::UnknownWay(id))
    };
    let finite = |v: f64, what: &str| {
        if v.is_finite() {
            Ok(())
        } else {
            Err(SynthError::InvalidPerturbation(format!(
                "{what} must be finite"
            )))
        }
    };
    match *p {
        Perturbation::None => {}
        Perturbation::GpsOffset { east, north } => {
            finite(east, "east offset")?;
            finite(north, "north offset")?;
            pose.correction_east += east;
            pose.correction_north += north;
        }
        Perturbation::HeadingOffset { degrees } => {
            finite(degrees, "heading offset")?;
            pose.correction_heading += degrees;
        }
        Perturbation::WidenRoad { way_id, extra } => {
            if !(extra.is_finite() && extra > 0.0) {
                return Err(SynthError::InvalidPerturbation(format!(
                    "widen amount {extra} must be > 0"
                )));
            }
            let i = index_of(&roads, way_id)?;
            roads.roads[i].width += extra;
        }
        Perturbation::ShrinkRoad { way_id, less } => {
            let i = index_of(&roads, way_id)?;
            let width = roads.roads[i].width;
            if !(less.is_finite() && less > 0.0 && less < width) {
                return Err(SynthError::InvalidPerturbation(format!(
                    "shrink amount {less} must be in (0, {width})"
                )));
            }
            roads.roads[i].width -= less;
        }
        Perturbation::DropWay { way_id } => {
            let i = index_of(&roads, way_id)?;
            roads.roads.remove(i);
        }
    }
    Ok((roads, pose))
}

/// Built-in scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Straight,
    Curve,
    Intersection,
    Widen,
    DropBranch,
    GpsOffset,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Straight,
        Scenario::Curve,
        Scenario::Intersection,
        Scenario::Widen,
        Scenario::DropBranch,
        Scenario::GpsOffset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Straight => "straight",
            Scenario::Curve => "curve",
            Scenario::Intersection => "intersection",
            Scenario::Widen => "widen",
            Scenario::DropBranch => "drop_branch",
            Scenario::GpsOffset => "gps_offset",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| SynthError::UnknownScenario(s.to_owned()))
    }
}

pub const MAIN_WAY: i64 = 100;
pub const CROSS_WAY: i64 = 200;
pub const BRANCH_WAY: i64 = 300;

/// Forward distance (m) of the side roads in the intersection scenarios.
/// Kept near so the camera resolves their edges to well under the default
/// edge band.
pub const JUNCTION_FORWARD: f64 = 22.0;

/// A road drawn in the vehicle frame of the true pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchRoad {
    pub way_id: i64,
    pub points: Vec<VehiclePoint>,
    pub tags: Vec<(&'static str, &'static str)>,
}

fn straight_main() -> SketchRoad {
    SketchRoad {
        way_id: MAIN_WAY,
        points: (0..=18)
            .map(|i| VehiclePoint::new(-30.0 + 10.0 * f64::from(i), 0.0))
            .collect(),
        tags: vec![
            ("highway", "residential"),
            ("lanes", "2"),
            ("name", "Main Street"),
        ],
    }
}

fn curved_main() -> SketchRoad {
    // straight to 15 m ahead, then a left arc of radius 200 m
    const RADIUS: f64 = 200.0;
    const START: f64 = 15.0;
    let mut points: Vec<VehiclePoint> = (0..=9)
        .map(|i| VehiclePoint::new(-30.0 + 5.0 * f64::from(i), 0.0))
        .collect();
    for i in 1..=60 {
        let theta = 2.0 * f64::from(i) / RADIUS;
        points.push(VehiclePoint::new(
            START + RADIUS * theta.sin(),
            RADIUS * (1.0 - theta.cos()),
        ));
    }
    SketchRoad {
        way_id: MAIN_WAY,
        points,
        tags: vec![
            ("highway", "residential"),
            ("lanes", "2"),
            ("name", "Ring Road"),
        ],
    }
}

fn crossing() -> SketchRoad {
    SketchRoad {
        way_id: CROSS_WAY,
        points: (0..=12)
            .map(|i| VehiclePoint::new(JUNCTION_FORWARD, 60.0 - 10.0 * f64::from(i)))
            .collect(),
        tags: vec![("highway", "residential"), ("name", "Cross Street")],
    }
}

fn branch_right() -> SketchRoad {
    SketchRoad {
        way_id: BRANCH_WAY,
        points: (0..=8)
            .map(|i| VehiclePoint::new(JUNCTION_FORWARD, -10.0 * f64::from(i)))
            .collect(),
        tags: vec![("highway", "secondary"), ("name", "Branch Road")],
    }
}

/// Scene layout and perturbation of a built-in scenario.
pub fn scenario_layout(scenario: Scenario) -> (Vec<SketchRoad>, Perturbation) {
    match scenario {
        Scenario::Straight => (vec![straight_main()], Perturbation::None),
        Scenario::Curve => (vec![curved_main()], Perturbation::None),
        Scenario::Intersection => (vec![straight_main(), crossing()], Perturbation::None),
        Scenario::Widen => (
            vec![straight_main()],
            Perturbation::WidenRoad {
                way_id: MAIN_WAY,
                extra: 2.0,
            },
        ),
        Scenario::DropBranch => (
            vec![straight_main(), branch_right()],
            Perturbation::DropWay { way_id: BRANCH_WAY },
        ),
        Scenario::GpsOffset => {
            // 5 m toward the vehicle's left
            let left = vehicle_to_local(VehiclePoint::new(0.0, 5.0), &true_pose());
            (
                vec![straight_main()],
                Perturbation::GpsOffset {
                    east: left.east,
                    north: left.north,
                },
            )
        }
    }
}

/// Where every built-in scenario takes place.
pub fn true_pose() -> GeoPose {
    GeoPose::new(49.0069, 8.4037, 30.0).expect("constant pose is valid")
}

/// Converts vehicle-frame sketches into a map graph anchored at `pose`.
pub fn sketch_to_graph(roads: &[SketchRoad], pose: &GeoPose) -> Result<MapGraph, SynthError> {
    let mut nodes = BTreeMap::new();
    let mut ways = Vec::new();
    let mut next_id = 1i64;
    for road in roads {
        let mut refs = Vec::with_capacity(road.points.len());
        for p in &road.points {
            let (lat, lon) = local_to_wgs84(vehicle_to_local(*p, pose), pose);
            nodes.insert(next_id, NodeCoord { lat, lon });
            refs.push(next_id);
            next_id += 1;
        }
        ways.push(Way {
            id: road.way_id,
            node_refs: refs,
            tags: road
                .tags
                .iter()
                .map(|(k, v)| ((*k).to_owned(), (*v).to_owned()))
                .collect(),
        });
    }
    Ok(MapGraph::new(nodes, ways)?)
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub frame_id: String,
    pub map: MapGraph,
    pub mask: LabelMask,
    /// Pose as the frame metadata reports it (may carry the injected error).
    pub pose: GeoPose,
    /// Pose the mask was rendered from.
    pub true_pose: GeoPose,
    pub camera: CameraModel,
    pub truth_roadset: RoadSet,
    pub perturbed_roadset: RoadSet,
    pub perturbation: Perturbation,
}

/// Renders a scene: the map holds the true roads, the mask shows the
/// perturbed roads from the true pose, and the reported pose carries any
/// pose perturbation.
pub fn build_scene(
    frame_id: &str,
    roads: &[SketchRoad],
    perturbation: &Perturbation,
    camera: &CameraModel,
    config: &PipelineConfig,
) -> Result<SyntheticScene, SynthError> {
    let true_pose = true_pose();
    let map = sketch_to_graph(roads, &true_pose)?;
    let truth = build_roadset(
        &map,
        &config.whitelist,
        &config.widths,
        &true_pose,
        config.map_radius_m,
    )?;
    let (perturbed, pose) = apply_perturbation(&truth, &true_pose, perturbation)?;
    let mask = render_mask(&perturbed, &true_pose, camera, &config.label_map)?;
    Ok(SyntheticScene {
        frame_id: frame_id.to_owned(),
        map,
        mask,
        pose,
        true_pose,
        camera: *camera,
        truth_roadset: truth,
        perturbed_roadset: perturbed,
        perturbation: perturbation.clone(),
    })
}

/// Builds a built-in scenario with the default camera.
pub fn scenario_scene(
    scenario: Scenario,
    config: &PipelineConfig,
) -> Result<SyntheticScene, SynthError> {
    let (roads, perturbation) = scenario_layout(scenario);
    build_scene(
        scenario.name(),
        &roads,
        &perturbation,
        &CameraModel::default(),
        config,
    )
}
