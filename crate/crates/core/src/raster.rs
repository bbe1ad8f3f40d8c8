//! The vehicle-centric bird's-eye-view grid and the map-side rasters drawn
//! into it: road corridors, the camera footprint and edge-tolerance bands.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraGeometry, CameraModel};
use crate::geodesy::{local_to_vehicle, GeoPose, VehiclePoint};
use crate::geometry::point_segment_dist_sq;
use crate::osm::RoadSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("cell size {0} must be positive and finite")]
    CellSize(f64),
    #[error("forward range [{min}, {max}] must satisfy max > min >= 0")]
    ForwardRange { min: f64, max: f64 },
    #[error("lateral half width {0} must be positive")]
    LateralHalfWidth(f64),
    #[error("{what} extent {extent} m is not a whole number of {cell_size} m cells")]
    NotWholeCells {
        what: &'static str,
        extent: f64,
        cell_size: f64,
    },
    #[error("declared {what} {declared} does not match derived {derived}")]
    Inconsistent {
        what: &'static str,
        declared: usize,
        derived: usize,
    },
}

/// Geometry of the BEV raster.
///
/// Row 0 is the farthest row ahead and column 0 the leftmost, so the grid
/// reads like an image with "up" pointing forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec")]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub forward_min: f64,
    pub forward_max: f64,
    pub lateral_half_width: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGridSpec {
    #[serde(default)]
    rows: Option<usize>,
    #[serde(default)]
    cols: Option<usize>,
    cell_size: f64,
    forward_min: f64,
    forward_max: f64,
    lateral_half_width: f64,
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = GridError;

    fn try_from(raw: RawGridSpec) -> Result<Self, Self::Error> {
        let spec = GridSpec::new(
            raw.cell_size,
            raw.forward_min,
            raw.forward_max,
            raw.lateral_half_width,
        )?;
        for (what, declared, derived) in
            [("rows", raw.rows, spec.rows), ("cols", raw.cols, spec.cols)]
        {
            if let Some(declared) = declared.filter(|d| *d != derived) {
                return Err(GridError::Inconsistent {
                    what,
                    declared,
                    derived,
                });
            }
        }
        Ok(spec)
    }
}

fn whole_cells(what: &'static str, extent: f64, cell_size: f64) -> Result<usize, GridError> {
    let n = extent / cell_size;
    let rounded = n.round();
    if rounded < 1.0 || (n - rounded).abs() > 1e-6 {
        return Err(GridError::NotWholeCells {
            what,
            extent,
            cell_size,
        });
    }
    Ok(rounded as usize)
}

impl GridSpec {
    pub fn new(
        cell_size: f64,
        forward_min: f64,
        forward_max: f64,
        lateral_half_width: f64,
    ) -> Result<Self, GridError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(GridError::CellSize(cell_size));
        }
        if !(forward_min.is_finite()
            && forward_max.is_finite()
            && forward_min >= 0.0
            && forward_max > forward_min)
        {
            return Err(GridError::ForwardRange {
                min: forward_min,
                max: forward_max,
            });
        }
        if !(lateral_half_width.is_finite() && lateral_half_width > 0.0) {
            return Err(GridError::LateralHalfWidth(lateral_half_width));
        }
        Ok(Self {
            rows: whole_cells("forward", forward_max - forward_min, cell_size)?,
            cols: whole_cells("lateral", 2.0 * lateral_half_width, cell_size)?,
            cell_size,
            forward_min,
            forward_max,
            lateral_half_width,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    #[inline]
    pub fn row_forward(&self, row: usize) -> f64 {
        self.forward_max - (row as f64 + 0.5) * self.cell_size
    }

    #[inline]
    pub fn col_left(&self, col: usize) -> f64 {
        self.lateral_half_width - (col as f64 + 0.5) * self.cell_size
    }

    #[inline]
    pub fn cell_center(&self, row: usize, col: usize) -> VehiclePoint {
        VehiclePoint::new(self.row_forward(row), self.col_left(col))
    }
}

impl Default for GridSpec {
    /// 0.2 m cells covering 10–60 m ahead and ±20 m to the sides.
    fn default() -> Self {
        Self::new(0.2, 10.0, 60.0, 20.0).expect("default grid is valid")
    }
}

/// Boolean raster over a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryGrid {
    spec: GridSpec,
    cells: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            spec,
            cells: vec![false; spec.len()],
        }
    }

    pub fn filled(spec: GridSpec, value: bool) -> Self {
        Self {
            spec,
            cells: vec![value; spec.len()],
        }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(spec.len());
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                cells.push(f(r, c));
            }
        }
        Self { spec, cells }
    }

    /// Panics if `cells.len()` does not match the spec.
    pub fn from_cells(spec: GridSpec, cells: Vec<bool>) -> Self {
        assert_eq!(
            cells.len(),
            spec.len(),
            "cell count does not match grid spec"
        );
        Self { spec, cells }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[self.spec.index(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let i = self.spec.index(row, col);
        self.cells[i] = value;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    /// 8-bit debug image: 255 for true, 0 for false.
    pub fn to_gray_image(&self) -> image::GrayImage {
        let data = self
            .cells
            .iter()
            .map(|&b| if b { 255 } else { 0 })
            .collect();
        image::GrayImage::from_raw(self.spec.cols as u32, self.spec.rows as u32, data)
            .expect("buffer matches dimensions")
    }
}

struct Segment {
    a: [f64; 2],
    b: [f64; 2],
    radius_sq: f64,
    // forward min/max, left min/max, padded by the radius
    bounds: [f64; 4],
}

/// Road corridors expressed in a vehicle frame, ready for point queries.
///
/// Each road is the union of capsules of radius width/2 around its
/// centerline segments. Membership is tested against the vehicle-frame
/// vertices, so every caller that needs "is this ground point on a road"
/// (map rasterization and synthetic rendering) shares one predicate.
pub struct Corridors {
    segments: Vec<Segment>,
}

impl Corridors {
    pub fn new(roads: &RoadSet, pose: &GeoPose) -> Self {
        let mut segments = Vec::new();
        for road in &roads.roads {
            let radius = road.width / 2.0;
            let pad = radius + 1e-6 * (1.0 + radius);
            let verts: Vec<[f64; 2]> = road
                .polyline
                .iter()
                .map(|p| {
                    let v = local_to_vehicle(*p, pose);
                    [v.forward, v.left]
                })
                .collect();
            for w in verts.windows(2) {
                let (a, b) = (w[0], w[1]);
                segments.push(Segment {
                    a,
                    b,
                    radius_sq: radius * radius,
                    bounds: [
                        a[0].min(b[0]) - pad,
                        a[0].max(b[0]) + pad,
                        a[1].min(b[1]) - pad,
                        a[1].max(b[1]) + pad,
                    ],
                });
            }
        }
        Self { segments }
    }

    #[inline]
    fn segment_contains(s: &Segment, p: [f64; 2]) -> bool {
        p[1] >= s.bounds[2]
            && p[1] <= s.bounds[3]
            && point_segment_dist_sq(p, s.a, s.b) <= s.radius_sq
    }

    pub fn contains(&self, p: VehiclePoint) -> bool {
        let q = [p.forward, p.left];
        self.segments
            .iter()
            .any(|s| q[0] >= s.bounds[0] && q[0] <= s.bounds[1] && Self::segment_contains(s, q))
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Rasterizes road corridors: a cell is true iff its center lies within
/// width/2 of some road centerline.
pub fn rasterize_roads(roads: &RoadSet, spec: &GridSpec, pose: &GeoPose) -> BinaryGrid {
    let corridors = Corridors::new(roads, pose);
    let mut grid = BinaryGrid::new(*spec);
    let mut active: Vec<&Segment> = Vec::new();
    for r in 0..spec.rows {
        let forward = spec.row_forward(r);
        active.clear();
        active.extend(
            corridors
                .segments
                .iter()
                .filter(|s| forward >= s.bounds[0] && forward <= s.bounds[1]),
        );
        if active.is_empty() {
            continue;
        }
        for c in 0..spec.cols {
            let q = [forward, spec.col_left(c)];
            if active.iter().any(|s| Corridors::segment_contains(s, q)) {
                grid.set(r, c, true);
            }
        }
    }
    grid
}

/// Cells whose ground point is imaged by the camera.
pub fn fov_footprint(camera: &CameraModel, spec: &GridSpec) -> BinaryGrid {
    let geom = CameraGeometry::new(camera);
    BinaryGrid::from_fn(*spec, |r, c| {
        geom.visible_pixel(spec.cell_center(r, c)).is_some()
    })
}

/// Cell offsets (row, col) within `band` meters, center to center.
fn disk_offsets(band: f64, cell_size: f64) -> Vec<(isize, isize)> {
    let radius = band / cell_size;
    // tolerate representation error so exact lattice distances are included
    let limit = radius * radius + 1e-9;
    let reach = radius.floor() as isize;
    let mut out = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if ((dr * dr + dc * dc) as f64) <= limit {
                out.push((dr, dc));
            }
        }
    }
    out
}

fn morph(grid: &BinaryGrid, band: f64, erode: bool) -> BinaryGrid {
    assert!(
        band >= 0.0 && band.is_finite(),
        "band must be a finite non-negative distance"
    );
    let spec = *grid.spec();
    let offsets = disk_offsets(band, spec.cell_size);
    if offsets.len() <= 1 {
        return grid.clone();
    }
    let (rows, cols) = (spec.rows as isize, spec.cols as isize);
    BinaryGrid::from_fn(spec, |r, c| {
        let here = grid.get(r, c);
        // the center offset decides the result unless a neighbor overrides it
        if here != erode {
            return here;
        }
        let hit = offsets.iter().any(|&(dr, dc)| {
            let (rr, cc) = (r as isize + dr, c as isize + dc);
            rr >= 0
                && rr < rows
                && cc >= 0
                && cc < cols
                && grid.get(rr as usize, cc as usize) != erode
        });
        if hit {
            !erode
        } else {
            erode
        }
    })
}

/// A cell stays true iff every in-grid cell within `band` meters is true.
/// Out-of-grid neighbors are ignored, so the grid border does not erode.
pub fn band_erode(grid: &BinaryGrid, band: f64) -> BinaryGrid {
    morph(grid, band, true)
}

/// A cell becomes true iff some in-grid cell within `band` meters is true.
pub fn band_dilate(grid: &BinaryGrid, band: f64) -> BinaryGrid {
    morph(grid, band, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::LocalPoint;
    use crate::osm::Road;

    fn small_spec() -> GridSpec {
        GridSpec::new(0.5, 0.0, 10.0, 5.0).unwrap()
    }

    fn road(points: &[(f64, f64)], width: f64) -> Road {
        Road {
            way_id: 1,
            polyline: points.iter().map(|&(e, n)| LocalPoint::new(e, n)).collect(),
            width,
            highway_class: "residential".into(),
        }
    }

    #[test]
    fn grid_geometry() {
        let s = GridSpec::default();
        assert_eq!((s.rows, s.cols), (250, 200));
        let c = s.cell_center(0, 0);
        assert!((c.forward - 59.9).abs() < 1e-12 && (c.left - 19.9).abs() < 1e-12);
        let c = s.cell_center(249, 199);
        assert!((c.forward - 10.1).abs() < 1e-9 && (c.left + 19.9).abs() < 1e-9);
    }

    #[test]
    fn grid_spec_rejects_fractional_cells() {
        assert!(matches!(
            GridSpec::new(0.3, 0.0, 1.0, 1.0),
            Err(GridError::NotWholeCells { .. })
        ));
        assert!(matches!(
            GridSpec::new(0.0, 0.0, 1.0, 1.0),
            Err(GridError::CellSize(_))
        ));
        assert!(matches!(
            GridSpec::new(0.5, 5.0, 5.0, 1.0),
            Err(GridError::ForwardRange { .. })
        ));
        assert!(matches!(
            GridSpec::new(0.5, -1.0, 5.0, 1.0),
            Err(GridError::ForwardRange { .. })
        ));
    }

    #[test]
    fn empty_roadset_rasterizes_false() {
        let pose = GeoPose::new(49.0, 7.0, 0.0).unwrap();
        let g = rasterize_roads(&RoadSet::default(), &small_spec(), &pose);
        assert_eq!(g.count(), 0);
    }

    #[test]
    fn straight_road_along_forward_axis() {
        // heading 0: north is forward
        let pose = GeoPose::new(49.0, 7.0, 0.0).unwrap();
        let spec = GridSpec::default();
        let rs = RoadSet {
            roads: vec![road(&[(0.0, -50.0), (0.0, 200.0)], 6.0)],
        };
        let g = rasterize_roads(&rs, &spec, &pose);
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                assert_eq!(g.get(r, c), spec.col_left(c).abs() <= 3.0, "cell {r},{c}");
            }
        }
    }

    #[test]
    fn morphology_identity_and_full_grid() {
        let spec = small_spec();
        let g = BinaryGrid::from_fn(spec, |r, c| (r * 7 + c * 3) % 5 == 0);
        assert_eq!(band_erode(&g, 0.0), g);
        assert_eq!(band_dilate(&g, 0.0), g);
        let full = BinaryGrid::filled(spec, true);
        assert_eq!(band_erode(&full, 2.0), full);
        let empty = BinaryGrid::new(spec);
        assert_eq!(band_dilate(&empty, 2.0), empty);
    }

    #[test]
    fn disk_includes_exact_lattice_distances() {
        // (3, 4) cells at 0.2 m is exactly 1 m
        let offs = disk_offsets(1.0, 0.2);
        assert!(offs.contains(&(3, 4)));
        assert!(!offs.contains(&(5, 1)));
        assert_eq!(disk_offsets(0.1, 0.2), vec![(0, 0)]);
    }

    #[test]
    fn corridor_contains_matches_raster() {
        let pose = GeoPose::new(49.0, 7.0, 33.0).unwrap();
        let spec = small_spec();
        let rs = RoadSet {
            roads: vec![road(&[(-3.0, 1.0), (4.0, 6.0), (9.0, 2.0)], 2.5)],
        };
        let g = rasterize_roads(&rs, &spec, &pose);
        let corr = Corridors::new(&rs, &pose);
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                assert_eq!(g.get(r, c), corr.contains(spec.cell_center(r, c)));
            }
        }
        assert!(g.count() > 0);
    }
}
