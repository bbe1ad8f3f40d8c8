//! Overlay of segmentation and map road: per-cell verdicts, error regions,
//! metrics and rendered overlays.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bev::{BevError, BevLabelGrid, LabelMap};
use crate::raster::{band_dilate, band_erode, BinaryGrid, GridSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidateError {
    #[error("grid geometry mismatch: {0}")]
    GridMismatch(&'static str),
    #[error(transparent)]
    Class(#[from] BevError),
    #[error("invalid policy: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationPolicy {
    pub road_classes: BTreeSet<String>,
    pub occluder_classes: BTreeSet<String>,
    /// Meters of map-boundary tolerance.
    pub edge_band: f64,
    pub min_region_cells: usize,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        let set = |names: &[&str]| names.iter().map(|s| (*s).to_owned()).collect();
        Self {
            road_classes: set(&["road"]),
            occluder_classes: set(&[
                "car",
                "truck",
                "bus",
                "person",
                "rider",
                "vegetation",
                "building",
                "wall",
                "fence",
                "pole",
                "traffic sign",
                "traffic light",
            ]),
            edge_band: 0.5,
            min_region_cells: 25,
        }
    }
}

impl ValidationPolicy {
    pub fn validate(&self) -> Result<(), ValidateError> {
        if let Some(both) = self
            .road_classes
            .intersection(&self.occluder_classes)
            .next()
        {
            return Err(ValidateError::Policy(format!(
                "`{both}` is both a road and an occluder class"
            )));
        }
        if !(self.edge_band.is_finite() && self.edge_band >= 0.0) {
            return Err(ValidateError::Policy(format!(
                "edge band {} must be >= 0",
                self.edge_band
            )));
        }
        if self.min_region_cells == 0 {
            return Err(ValidateError::Policy(
                "min_region_cells must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-cell outcome. The discriminant is the id written to verdict images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum Verdict {
    OutOfFov = 0,
    Tp = 1,
    Fp = 2,
    Fn = 3,
    Tn = 4,
    Occluded = 5,
    Unobserved = 6,
}

impl Verdict {
    pub const ALL: [Verdict; 7] = [
        Verdict::OutOfFov,
        Verdict::Tp,
        Verdict::Fp,
        Verdict::Fn,
        Verdict::Tn,
        Verdict::Occluded,
        Verdict::Unobserved,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.id() == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationGrid {
    spec: GridSpec,
    verdicts: Vec<Verdict>,
}

impl ValidationGrid {
    /// Panics if the verdict count does not match the spec.
    pub fn from_verdicts(spec: GridSpec, verdicts: Vec<Verdict>) -> Self {
        assert_eq!(
            verdicts.len(),
            spec.len(),
            "verdict count does not match grid spec"
        );
        Self { spec, verdicts }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Verdict {
        self.verdicts[self.spec.index(row, col)]
    }

    pub fn mask_of(&self, verdict: Verdict) -> BinaryGrid {
        BinaryGrid::from_cells(
            self.spec,
            self.verdicts.iter().map(|v| *v == verdict).collect(),
        )
    }

    /// Single-channel image of verdict ids (see [`Verdict`]).
    pub fn to_id_image(&self) -> image::GrayImage {
        let data = self.verdicts.iter().map(|v| v.id()).collect();
        image::GrayImage::from_raw(self.spec.cols as u32, self.spec.rows as u32, data)
            .expect("buffer matches dimensions")
    }
}

fn same_spec(a: &GridSpec, b: &GridSpec, what: &'static str) -> Result<(), ValidateError> {
    if a == b {
        Ok(())
    } else {
        Err(ValidateError::GridMismatch(what))
    }
}

/// Assigns a verdict to every cell.
///
/// Priority: out of FOV, unobserved, occluded, then the road comparison. FP
/// is tested against the map road dilated by the edge band and FN against
/// the map road eroded by it, so disagreement near corridor boundaries is
/// forgiven in both directions.
pub fn classify(
    bev: &BevLabelGrid,
    map_road: &BinaryGrid,
    fov: &BinaryGrid,
    policy: &ValidationPolicy,
) -> Result<ValidationGrid, ValidateError> {
    policy.validate()?;
    let spec = *bev.spec();
    same_spec(
        &spec,
        map_road.spec(),
        "map road grid differs from BEV grid",
    )?;
    same_spec(&spec, fov.spec(), "FOV grid differs from BEV grid")?;

    let is_road = bev.label_map().lookup_table(&policy.road_classes)?;
    let is_occluder = bev.label_map().lookup_table(&policy.occluder_classes)?;
    let dilated = band_dilate(map_road, policy.edge_band);
    let eroded = band_erode(map_road, policy.edge_band);

    let verdicts = (0..spec.len())
        .map(|i| {
            let label = usize::from(bev.labels()[i]);
            if !fov.cells()[i] {
                Verdict::OutOfFov
            } else if !bev.observed()[i] {
                Verdict::Unobserved
            } else if is_occluder[label] {
                Verdict::Occluded
            } else {
                let seg_road = is_road[label];
                if seg_road && !dilated.cells()[i] {
                    Verdict::Fp
                } else if !seg_road && eroded.cells()[i] {
                    Verdict::Fn
                } else if seg_road && map_road.cells()[i] {
                    Verdict::Tp
                } else {
                    Verdict::Tn
                }
            }
        })
        .collect();
    Ok(ValidationGrid { spec, verdicts })
}

/// Axis-aligned extent of a region in vehicle meters (cell edges).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub forward_min: f64,
    pub forward_max: f64,
    pub left_min: f64,
    pub left_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub cells: usize,
    pub centroid_forward: f64,
    pub centroid_left: f64,
    pub extent: Extent,
    /// (row, col) of the first cell in raster order.
    pub top_left: [usize; 2],
    /// Row-major indices of member cells.
    #[serde(skip)]
    pub members: Vec<usize>,
}

/// 4-connected components of `verdict` with at least `min_cells` cells, in
/// descending size, ties broken by top-left cell.
pub fn extract_regions_min(
    grid: &ValidationGrid,
    verdict: Verdict,
    min_cells: usize,
) -> Vec<Region> {
    let spec = grid.spec;
    let mut seen = vec![false; spec.len()];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..spec.len() {
        if seen[seed] || grid.verdicts[seed] != verdict {
            continue;
        }
        seen[seed] = true;
        queue.push_back(seed);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (r, c) = (i / spec.cols, i % spec.cols);
            let mut visit = |j: usize| {
                if !seen[j] && grid.verdicts[j] == verdict {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - spec.cols);
            }
            if r + 1 < spec.rows {
                visit(i + spec.cols);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < spec.cols {
                visit(i + 1);
            }
        }
        if members.len() >= min_cells {
            members.sort_unstable();
            regions.push(describe_region(&spec, members));
        }
    }
    // seeds are visited in raster order, so a stable sort keeps the tie order
    regions.sort_by_key(|r| std::cmp::Reverse(r.cells));
    regions
}

fn describe_region(spec: &GridSpec, members: Vec<usize>) -> Region {
    let (mut rmin, mut rmax, mut cmin, mut cmax) = (usize::MAX, 0, usize::MAX, 0);
    let (mut sf, mut sl) = (0.0, 0.0);
    for &i in &members {
        let (r, c) = (i / spec.cols, i % spec.cols);
        rmin = rmin.min(r);
        rmax = rmax.max(r);
        cmin = cmin.min(c);
        cmax = cmax.max(c);
        sf += spec.row_forward(r);
        sl += spec.col_left(c);
    }
    let n = members.len() as f64;
    let half = spec.cell_size / 2.0;
    let first = members[0];
    Region {
        cells: members.len(),
        centroid_forward: sf / n,
        centroid_left: sl / n,
        extent: Extent {
            forward_min: spec.row_forward(rmax) - half,
            forward_max: spec.row_forward(rmin) + half,
            left_min: spec.col_left(cmax) - half,
            left_max: spec.col_left(cmin) + half,
        },
        top_left: [first / spec.cols, first % spec.cols],
        members,
    }
}

/// Error regions of one kind, filtered by the policy's minimum size.
pub fn extract_regions(
    grid: &ValidationGrid,
    verdict: Verdict,
    policy: &ValidationPolicy,
) -> Vec<Region> {
    extract_regions_min(grid, verdict, policy.min_region_cells)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub occluded: usize,
    pub out_of_fov: usize,
    pub unobserved: usize,
}

impl VerdictCounts {
    pub fn of(verdicts: &[Verdict]) -> Self {
        let mut c = Self::default();
        for v in verdicts {
            match v {
                Verdict::Tp => c.tp += 1,
                Verdict::Fp => c.fp += 1,
                Verdict::Fn => c.fn_ += 1,
                Verdict::Tn => c.tn += 1,
                Verdict::Occluded => c.occluded += 1,
                Verdict::OutOfFov => c.out_of_fov += 1,
                Verdict::Unobserved => c.unobserved += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn + self.occluded + self.out_of_fov + self.unobserved
    }

    pub fn evaluable(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn get(&self, v: Verdict) -> usize {
        match v {
            Verdict::Tp => self.tp,
            Verdict::Fp => self.fp,
            Verdict::Fn => self.fn_,
            Verdict::Tn => self.tn,
            Verdict::Occluded => self.occluded,
            Verdict::OutOfFov => self.out_of_fov,
            Verdict::Unobserved => self.unobserved,
        }
    }
}

impl std::ops::AddAssign for VerdictCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
        self.occluded += o.occluded;
        self.out_of_fov += o.out_of_fov;
        self.unobserved += o.unobserved;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub counts: VerdictCounts,
    /// FP / (TP + FP + FN + TN)
    pub fp_rate: f64,
    /// FN / (TP + FP + FN + TN)
    pub fn_rate: f64,
    /// TP / (TP + FP + FN)
    pub road_iou_vs_map: f64,
    /// No evaluable cells: both rates are reported as 0.
    pub rates_empty_denominator: bool,
    /// Neither segmentation nor map has road in evaluable cells: IoU is reported as 0.
    pub iou_empty_denominator: bool,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(grid: &ValidationGrid) -> Metrics {
    let counts = VerdictCounts::of(&grid.verdicts);
    let eval = counts.evaluable();
    let iou_den = counts.tp + counts.fp + counts.fn_;
    Metrics {
        counts,
        fp_rate: ratio(counts.fp, eval),
        fn_rate: ratio(counts.fn_, eval),
        road_iou_vs_map: ratio(counts.tp, iou_den),
        rates_empty_denominator: eval == 0,
        iou_empty_denominator: iou_den == 0,
    }
}

pub type Rgba = [u8; 4];

/// Colors for overlay rendering. Class colors are keyed by class name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Palette {
    pub classes: BTreeMap<String, Rgba>,
    /// Color for classes without an entry.
    pub unknown_class: Rgba,
    pub fp: Rgba,
    #[serde(rename = "fn")]
    pub fn_: Rgba,
    /// Opacity of the black map-road layer.
    pub map_alpha: f64,
    /// Alternating stripe colors for occluded cells.
    pub occluded: [Rgba; 2],
    pub unobserved: Rgba,
    pub out_of_fov: Rgba,
}

impl Default for Palette {
    fn default() -> Self {
        let classes = [
            ("road", [128, 64, 128, 255]),
            ("sidewalk", [244, 35, 232, 255]),
            ("building", [70, 70, 70, 255]),
            ("wall", [102, 102, 156, 255]),
            ("fence", [190, 153, 153, 255]),
            ("pole", [153, 153, 153, 255]),
            ("traffic light", [250, 170, 30, 255]),
            ("traffic sign", [220, 220, 0, 255]),
            ("vegetation", [107, 142, 35, 255]),
            ("terrain", [152, 251, 152, 255]),
            ("sky", [70, 130, 180, 255]),
            ("person", [220, 20, 60, 255]),
            ("rider", [255, 0, 0, 255]),
            ("car", [0, 0, 142, 255]),
            ("truck", [0, 0, 70, 255]),
            ("bus", [0, 60, 100, 255]),
            ("train", [0, 80, 100, 255]),
            ("motorcycle", [0, 0, 230, 255]),
            ("bicycle", [119, 11, 32, 255]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        Self {
            classes,
            unknown_class: [0, 0, 0, 255],
            fp: [255, 69, 0, 255],
            fn_: [255, 20, 102, 255],
            map_alpha: 0.4,
            occluded: [[96, 96, 96, 255], [160, 160, 160, 255]],
            unobserved: [0, 0, 0, 0],
            out_of_fov: [0, 0, 0, 0],
        }
    }
}

impl Palette {
    pub fn validate(&self) -> Result<(), String> {
        if (0.0..=1.0).contains(&self.map_alpha) {
            Ok(())
        } else {
            Err(format!("map_alpha {} outside [0, 1]", self.map_alpha))
        }
    }

    fn class_table(&self, labels: &LabelMap) -> [Rgba; 256] {
        let mut table = [self.unknown_class; 256];
        for (id, name) in labels.iter() {
            if let Some(color) = self.classes.get(name) {
                table[usize::from(id)] = *color;
            }
        }
        table
    }
}

/// Source-over composite of black at opacity `alpha` onto `base`.
pub fn darken(base: Rgba, alpha: f64) -> Rgba {
    let keep = 1.0 - alpha;
    let ch = |c: u8| (f64::from(c) * keep).round() as u8;
    let a = (alpha * 255.0 + f64::from(base[3]) * keep).round() as u8;
    [ch(base[0]), ch(base[1]), ch(base[2]), a]
}

/// One RGBA pixel per cell: class colors, map road darkened, FP/FN in the
/// palette's error colors, occluded cells hatched, out-of-FOV transparent.
pub fn render_overlay(
    bev: &BevLabelGrid,
    map_road: &BinaryGrid,
    grid: &ValidationGrid,
    palette: &Palette,
) -> Result<image::RgbaImage, ValidateError> {
    let spec = *grid.spec();
    same_spec(&spec, bev.spec(), "BEV grid differs from verdict grid")?;
    same_spec(
        &spec,
        map_road.spec(),
        "map road grid differs from verdict grid",
    )?;
    let table = palette.class_table(bev.label_map());
    let mut img = image::RgbaImage::new(spec.cols as u32, spec.rows as u32);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let color = match grid.get(r, c) {
                Verdict::OutOfFov => palette.out_of_fov,
                Verdict::Unobserved => palette.unobserved,
                Verdict::Fp => palette.fp,
                Verdict::Fn => palette.fn_,
                Verdict::Occluded => palette.occluded[((r + c) / 2) % 2],
                Verdict::Tp | Verdict::Tn => {
                    let base = table[usize::from(bev.label(r, c))];
                    if map_road.get(r, c) {
                        darken(base, palette.map_alpha)
                    } else {
                        base
                    }
                }
            };
            img.put_pixel(c as u32, r as u32, image::Rgba(color));
        }
    }
    Ok(img)
}
