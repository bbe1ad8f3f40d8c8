//! Corridor rasterization and edge-band morphology against brute-force oracles.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadcheck_core::geodesy::{local_to_vehicle, GeoPose, LocalPoint};
use roadcheck_core::osm::{Road, RoadSet};
use roadcheck_core::raster::{band_dilate, band_erode, rasterize_roads, BinaryGrid, GridSpec};

/// Distance from a point to a segment by projection onto the segment line.
fn oracle_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let ap = (p.0 - a.0, p.1 - a.1);
    let denom = ab.0 * ab.0 + ab.1 * ab.1;
    let t = if denom == 0.0 {
        0.0
    } else {
        ((ap.0 * ab.0 + ap.1 * ab.1) / denom).clamp(0.0, 1.0)
    };
    let closest = (a.0 + t * ab.0, a.1 + t * ab.1);
    ((p.0 - closest.0).powi(2) + (p.1 - closest.1).powi(2)).sqrt()
}

/// Every cell × every segment, in the local (east/north) frame.
fn oracle_rasterize(roads: &RoadSet, spec: &GridSpec, heading_deg: f64) -> Vec<bool> {
    let h = heading_deg.to_radians();
    let mut out = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let f = spec.forward_max - (r as f64 + 0.5) * spec.cell_size;
            let l = spec.lateral_half_width - (c as f64 + 0.5) * spec.cell_size;
            let east = f * h.sin() - l * h.cos();
            let north = f * h.cos() + l * h.sin();
            let hit = roads.roads.iter().any(|road| {
                road.polyline.windows(2).any(|w| {
                    oracle_segment_distance(
                        (east, north),
                        (w[0].east, w[0].north),
                        (w[1].east, w[1].north),
                    ) <= road.width / 2.0
                })
            });
            out.push(hit);
        }
    }
    out
}

fn random_roadset(rng: &mut ChaCha8Rng, extent: f64) -> RoadSet {
    let n = rng.gen_range(1..=5);
    RoadSet {
        roads: (0..n)
            .map(|i| Road {
                way_id: i,
                polyline: (0..rng.gen_range(2..=6))
                    .map(|_| {
                        LocalPoint::new(
                            rng.gen_range(-extent..extent),
                            rng.gen_range(-extent..extent),
                        )
                    })
                    .collect(),
                width: rng.gen_range(1.0..9.0),
                highway_class: "residential".into(),
            })
            .collect(),
    }
}

fn pose(heading: f64) -> GeoPose {
    GeoPose::new(49.0, 7.0, heading).unwrap()
}

#[test]
fn rasterizer_matches_brute_force_on_random_roadsets() {
    let spec = GridSpec::new(0.5, 0.0, 32.0, 16.0).unwrap();
    assert_eq!((spec.rows, spec.cols), (64, 64));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..50 {
        let roads = random_roadset(&mut rng, 40.0);
        let heading = rng.gen_range(0.0..360.0);
        let fast = rasterize_roads(&roads, &spec, &pose(heading));
        let slow = oracle_rasterize(&roads, &spec, heading);
        assert_eq!(fast.cells(), slow.as_slice(), "case {case}");
    }
}

#[test]
fn rotation_consistency_is_exact() {
    let spec = GridSpec::new(0.5, 0.0, 32.0, 16.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let roads = random_roadset(&mut rng, 40.0);
        let heading = rng.gen_range(0.0..360.0);
        let p = pose(heading);
        // pre-rotate so that a heading-0 vehicle sees the same vehicle-frame points
        let rotated = RoadSet {
            roads: roads
                .roads
                .iter()
                .map(|r| Road {
                    polyline: r
                        .polyline
                        .iter()
                        .map(|q| {
                            let v = local_to_vehicle(*q, &p);
                            LocalPoint::new(-v.left, v.forward)
                        })
                        .collect(),
                    ..r.clone()
                })
                .collect(),
        };
        assert_eq!(
            rasterize_roads(&roads, &spec, &p),
            rasterize_roads(&rotated, &spec, &pose(0.0))
        );
    }
}

fn oracle_morph(grid: &BinaryGrid, band: f64, erode: bool) -> Vec<bool> {
    let spec = grid.spec();
    let mut out = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let mut acc = erode;
            for rr in 0..spec.rows {
                for cc in 0..spec.cols {
                    let d = ((rr as f64 - r as f64).powi(2) + (cc as f64 - c as f64).powi(2))
                        .sqrt()
                        * spec.cell_size;
                    if d <= band {
                        if erode {
                            acc &= grid.get(rr, cc);
                        } else {
                            acc |= grid.get(rr, cc);
                        }
                    }
                }
            }
            out.push(acc);
        }
    }
    out
}

#[test]
fn band_morphology_matches_brute_force_disk_filter() {
    let spec = GridSpec::new(0.2, 0.0, 6.4, 3.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for density in [0.3, 0.7, 0.95] {
        let grid = BinaryGrid::from_fn(spec, |_, _| rng.gen_bool(density));
        for band in [0.3, 1.5 * spec.cell_size, 0.5] {
            assert_eq!(
                band_erode(&grid, band).cells(),
                oracle_morph(&grid, band, true).as_slice()
            );
            assert_eq!(
                band_dilate(&grid, band).cells(),
                oracle_morph(&grid, band, false).as_slice()
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adding_a_road_only_adds_cells(seed in any::<u64>(), heading in 0.0f64..360.0) {
        let spec = GridSpec::new(0.5, 0.0, 20.0, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_roadset(&mut rng, 25.0);
        let extra = random_roadset(&mut rng, 25.0);
        let mut more = base.clone();
        more.roads.extend(extra.roads);
        let a = rasterize_roads(&base, &spec, &pose(heading));
        let b = rasterize_roads(&more, &spec, &pose(heading));
        prop_assert!(a.cells().iter().zip(b.cells()).all(|(x, y)| !x || *y));
    }

    #[test]
    fn erosion_and_dilation_bracket_the_grid(seed in any::<u64>(), band in 0.0f64..1.2) {
        let spec = GridSpec::new(0.2, 0.0, 4.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = BinaryGrid::from_fn(spec, |_, _| rng.gen_bool(0.6));
        let e = band_erode(&g, band);
        let d = band_dilate(&g, band);
        for i in 0..spec.len() {
            prop_assert!(!e.cells()[i] || g.cells()[i]);
            prop_assert!(!g.cells()[i] || d.cells()[i]);
        }
    }
}
