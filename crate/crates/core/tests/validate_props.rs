//! Classification and region properties over rendered scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadcheck_core::bev::{warp_to_bev, LabelMask};
use roadcheck_core::camera::CameraModel;
use roadcheck_core::config::PipelineConfig;
use roadcheck_core::geodesy::{apply_corrections, VehiclePoint};
use roadcheck_core::osm::{Road, RoadSet};
use roadcheck_core::raster::{fov_footprint, rasterize_roads, GridSpec};
use roadcheck_core::synth::{
    apply_perturbation, render_mask, scenario_scene, true_pose, Perturbation, Scenario,
};
use roadcheck_core::validate::{
    classify, extract_regions_min, ValidationGrid, ValidationPolicy, Verdict, VerdictCounts,
};

fn small_camera() -> CameraModel {
    CameraModel {
        fx: 320.0,
        fy: 320.0,
        cx: 320.0,
        cy: 180.0,
        image_width: 640,
        image_height: 360,
        ..CameraModel::default()
    }
}

fn small_spec() -> GridSpec {
    GridSpec::new(0.25, 5.0, 35.0, 15.0).unwrap()
}

fn random_truth(rng: &mut ChaCha8Rng) -> RoadSet {
    let pose = true_pose();
    let roads = (0..rng.gen_range(1..=3))
        .map(|i| {
            let f0 = rng.gen_range(-10.0..10.0);
            let l0 = rng.gen_range(-8.0..8.0);
            let angle: f64 = rng.gen_range(-0.6..0.6);
            let polyline = (0..4)
                .map(|k| {
                    let s = 20.0 * f64::from(k);
                    let p = VehiclePoint::new(f0 + s * angle.cos(), l0 + s * angle.sin());
                    roadcheck_core::geodesy::vehicle_to_local(p, &pose)
                })
                .collect();
            Road {
                way_id: i,
                polyline,
                width: rng.gen_range(3.0..9.0),
                highway_class: "residential".into(),
            }
        })
        .collect();
    RoadSet { roads }
}

fn random_perturbation(rng: &mut ChaCha8Rng, truth: &RoadSet) -> Perturbation {
    let way_id = truth.roads[rng.gen_range(0..truth.len())].way_id;
    match rng.gen_range(0..4) {
        0 => Perturbation::GpsOffset {
            east: rng.gen_range(-3.0..3.0),
            north: rng.gen_range(-3.0..3.0),
        },
        1 => Perturbation::HeadingOffset {
            degrees: rng.gen_range(-4.0..4.0),
        },
        2 => Perturbation::WidenRoad {
            way_id,
            extra: rng.gen_range(0.5..3.0),
        },
        _ => Perturbation::DropWay { way_id },
    }
}

struct Scene {
    mask: LabelMask,
    truth: RoadSet,
    reported: roadcheck_core::geodesy::GeoPose,
}

fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    let labels = PipelineConfig::default().label_map;
    let truth = random_truth(rng);
    let p = random_perturbation(rng, &truth);
    let (perturbed, reported) = apply_perturbation(&truth, &true_pose(), &p).unwrap();
    let mask = render_mask(&perturbed, &true_pose(), &small_camera(), &labels).unwrap();
    Scene {
        mask,
        truth,
        reported,
    }
}

fn classify_scene(scene: &Scene, policy: &ValidationPolicy) -> ValidationGrid {
    let spec = small_spec();
    let pose = apply_corrections(&scene.reported);
    let map = rasterize_roads(&scene.truth, &spec, &pose);
    let fov = fov_footprint(&small_camera(), &spec);
    let bev = warp_to_bev(&scene.mask, &small_camera(), &spec).unwrap();
    classify(&bev, &map, &fov, policy).unwrap()
}

#[test]
fn error_counts_never_grow_with_edge_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..10 {
        let scene = random_scene(&mut rng);
        let mut last = (usize::MAX, usize::MAX);
        for band in [0.0, 0.25, 0.5, 1.0] {
            let policy = ValidationPolicy {
                edge_band: band,
                ..ValidationPolicy::default()
            };
            let counts = VerdictCounts::of(classify_scene(&scene, &policy).verdicts());
            assert!(
                counts.fp <= last.0 && counts.fn_ <= last.1,
                "case {case} band {band}"
            );
            last = (counts.fp, counts.fn_);
        }
    }
}

#[test]
fn stamping_occluders_only_turns_cells_occluded() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let policy = ValidationPolicy::default();
    for _ in 0..5 {
        let mut scene = random_scene(&mut rng);
        let before = classify_scene(&scene, &policy);
        let car = scene.mask.label_map().id("car").unwrap();
        let (x0, y0) = (rng.gen_range(0..500), rng.gen_range(140..190));
        for y in y0..(y0 + 30).min(360) {
            for x in x0..x0 + 120 {
                scene.mask.set(x, y, car);
            }
        }
        let after = classify_scene(&scene, &policy);
        let mut changed = 0;
        for (a, b) in before.verdicts().iter().zip(after.verdicts()) {
            if a != b {
                assert_eq!(*b, Verdict::Occluded);
                changed += 1;
            }
        }
        assert!(changed > 0);
    }
}

#[test]
fn unfiltered_regions_partition_their_verdict() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let grid = classify_scene(&random_scene(&mut rng), &ValidationPolicy::default());
        let counts = VerdictCounts::of(grid.verdicts());
        for v in Verdict::ALL {
            let regions = extract_regions_min(&grid, v, 1);
            assert_eq!(
                regions.iter().map(|r| r.cells).sum::<usize>(),
                counts.get(v)
            );
            assert!(regions.windows(2).all(|w| w[0].cells >= w[1].cells));
        }
    }
}

/// Union-find labelling of 4-connected components.
fn oracle_components(grid: &ValidationGrid, v: Verdict) -> Vec<usize> {
    let spec = grid.spec();
    let mut parent: Vec<usize> = (0..spec.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            if grid.get(r, c) != v {
                continue;
            }
            let i = spec.index(r, c);
            if c + 1 < spec.cols && grid.get(r, c + 1) == v {
                let (a, b) = (find(&mut parent, i), find(&mut parent, i + 1));
                parent[a] = b;
            }
            if r + 1 < spec.rows && grid.get(r + 1, c) == v {
                let (a, b) = (find(&mut parent, i), find(&mut parent, i + spec.cols));
                parent[a] = b;
            }
        }
    }
    let mut sizes = std::collections::BTreeMap::new();
    for i in 0..spec.len() {
        if grid.verdicts()[i] == v {
            *sizes.entry(find(&mut parent, i)).or_insert(0) += 1;
        }
    }
    let mut out: Vec<usize> = sizes.into_values().collect();
    out.sort_unstable_by(|a, b| b.cmp(a));
    out
}

#[test]
fn regions_match_union_find_and_diagonals_stay_separate() {
    let spec = GridSpec::new(1.0, 0.0, 12.0, 6.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let verdicts = (0..spec.len())
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Verdict::Fp
                } else {
                    Verdict::Tn
                }
            })
            .collect();
        let grid = ValidationGrid::from_verdicts(spec, verdicts);
        let sizes: Vec<usize> = extract_regions_min(&grid, Verdict::Fp, 1)
            .iter()
            .map(|r| r.cells)
            .collect();
        assert_eq!(sizes, oracle_components(&grid, Verdict::Fp));
    }
    // a checkerboard of 2x2 blocks touching only at corners
    let verdicts = (0..spec.len())
        .map(|i| {
            let (r, c) = (i / spec.cols, i % spec.cols);
            if (r / 2 + c / 2) % 2 == 0 {
                Verdict::Fn
            } else {
                Verdict::Tp
            }
        })
        .collect();
    let grid = ValidationGrid::from_verdicts(spec, verdicts);
    let regions = extract_regions_min(&grid, Verdict::Fn, 1);
    assert_eq!(regions.len(), 18);
    assert!(regions.iter().all(|r| r.cells == 4));
    let seeds: Vec<[usize; 2]> = regions.iter().map(|r| r.top_left).collect();
    let mut sorted = seeds.clone();
    sorted.sort();
    assert_eq!(seeds, sorted);
}

#[test]
fn warped_render_agrees_with_map_raster() {
    let config = PipelineConfig::default();
    for scenario in [Scenario::Straight, Scenario::Curve, Scenario::Intersection] {
        let scene = scenario_scene(scenario, &config).unwrap();
        let bev = warp_to_bev(&scene.mask, &scene.camera, &config.grid).unwrap();
        let map = rasterize_roads(&scene.truth_roadset, &config.grid, &scene.true_pose);
        let road = config.label_map.id("road").unwrap();
        let (mut agree, mut total) = (0usize, 0usize);
        for r in 0..config.grid.rows {
            for c in 0..config.grid.cols {
                if bev.is_observed(r, c) {
                    total += 1;
                    agree += usize::from((bev.label(r, c) == road) == map.get(r, c));
                }
            }
        }
        assert!(total > 0);
        assert!(
            agree as f64 >= 0.99 * total as f64,
            "{scenario}: {agree}/{total}"
        );
    }
}
