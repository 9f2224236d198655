use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use carrybar::config::Config;
use carrybar::elevation::{sense, PerceptionConfig};
use carrybar::env::{CarryEnv, PROPRIO_LEN};
use carrybar::geometry::{BoxObstacle, Pose2, Vec2};
use carrybar::terrain::{scenario, ScenarioKind, Terrain};

/// Open parameter interval where `p + s·d` is strictly inside the box,
/// by clipping against each of the four edge half-planes.
fn clip(p: Vec2, d: Vec2, lo: Vec2, hi: Vec2) -> Option<(f64, f64)> {
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::INFINITY);
    // Inside iff n·x < k for each edge (outward normal n).
    let edges = [
        (Vec2::new(-1.0, 0.0), -lo.x),
        (Vec2::new(1.0, 0.0), hi.x),
        (Vec2::new(0.0, -1.0), -lo.y),
        (Vec2::new(0.0, 1.0), hi.y),
    ];
    for (n, k) in edges {
        let num = k - n.dot(p);
        let den = n.dot(d);
        if den == 0.0 {
            if num <= 0.0 {
                return None;
            }
        } else if den > 0.0 {
            b = b.min(num / den);
        } else {
            a = a.max(num / den);
        }
    }
    (a < b).then_some((a, b))
}

fn true_height(boxes: &[BoxObstacle], q: Vec2) -> f64 {
    boxes
        .iter()
        .filter(|b| (q - b.center).abs().x <= b.half_extents.x && (q - b.center).abs().y <= b.half_extents.y)
        .map(|b| b.height)
        .fold(0.0, f64::max)
}

/// Ray from the sensor to the cell top, blocked if it passes below the top
/// of a box before reaching the cell.
fn ray_blocked(sensor: Vec2, h_s: f64, q: Vec2, half: f64, boxes: &[BoxObstacle]) -> bool {
    let q_h = true_height(boxes, q);
    let d = q - sensor;
    let cell = Vec2::new(half, half);
    let Some((enter, _)) = clip(sensor, d, q - cell, q + cell) else {
        return false;
    };
    let enter = enter.max(0.0);
    boxes.iter().any(|b| {
        let Some((s0, s1)) = clip(sensor, d, b.center - b.half_extents, b.center + b.half_extents) else {
            return false;
        };
        let (a, e) = (s0.max(0.0), s1.min(enter));
        let z = |s: f64| h_s + s * (q_h - h_s);
        a < e && z(a).min(z(e)) < b.height
    })
}

/// Same question answered by marching along the ray in 1 mm steps.
fn ray_blocked_marching(sensor: Vec2, h_s: f64, q: Vec2, half: f64, boxes: &[BoxObstacle]) -> bool {
    let q_h = true_height(boxes, q);
    let d = q - sensor;
    let n = (d.norm() / 1e-3).ceil() as usize;
    for i in 1..n {
        let s = i as f64 / n as f64;
        let p = sensor + d * s;
        if (p - q).abs().x <= half && (p - q).abs().y <= half {
            return false;
        }
        let z = h_s + s * (q_h - h_s);
        let inside = boxes.iter().any(|b| {
            let r = (p - b.center).abs();
            r.x < b.half_extents.x && r.y < b.half_extents.y && z < b.height
        });
        if inside {
            return true;
        }
    }
    false
}

fn ten_box_terrain(seed: u64) -> Terrain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxes = (0..10)
        .map(|_| {
            BoxObstacle::fixed(
                Vec2::new(rng.gen_range(-3.5..3.5), rng.gen_range(-3.5..3.5)),
                Vec2::new(rng.gen_range(0.1..0.6), rng.gen_range(0.1..0.6)),
                rng.gen_range(0.2..1.2),
            )
        })
        .collect();
    Terrain::single(Vec2::new(-5.0, -5.0), Vec2::new(5.0, 5.0), boxes)
}

#[test]
fn invalid_cells_equal_ray_cast_occlusion() {
    let cfg = PerceptionConfig {
        sense_resolution: 0.05,
        ..PerceptionConfig::default()
    };
    let mut marching_disagreements = 0;
    let mut total = 0;
    for seed in 0..4 {
        let terrain = ten_box_terrain(seed);
        let boxes: Vec<BoxObstacle> = terrain.obstacles().copied().collect();
        assert_eq!(boxes.len(), 10);
        let mut sensor = Vec2::new(0.0, 0.0);
        let mut k = 0;
        while true_height(&boxes, sensor) > 0.0 || boxes.iter().any(|b| carrybar::geometry::point_box_distance(sensor, b, 0.0) < 0.2) {
            k += 1;
            sensor = Vec2::new((k as f64 * 0.37) % 3.0 - 1.5, (k as f64 * 0.61) % 3.0 - 1.5);
        }
        let m = sense(&terrain, &Pose2::new(sensor, 0.4), 0.0, &cfg);
        let (mut occluded, mut mismatches) = (0, Vec::new());
        for r in 0..m.rows {
            for c in 0..m.cols {
                let q = m.cell_center_world(r, c);
                if !terrain.in_bounds(q) {
                    assert!(!m.is_valid(r, c));
                    continue;
                }
                total += 1;
                let blocked = ray_blocked(sensor, cfg.sensor_height, q, cfg.sense_resolution / 2.0, &boxes);
                occluded += blocked as usize;
                if blocked == m.is_valid(r, c) {
                    mismatches.push((r, c));
                }
                if r % 4 == 0 && c % 4 == 0 {
                    let marched = ray_blocked_marching(sensor, cfg.sensor_height, q, cfg.sense_resolution / 2.0, &boxes);
                    marching_disagreements += (marched != blocked) as usize;
                }
            }
        }
        assert!(occluded > 100, "seed {seed}: only {occluded} occluded cells");
        assert!(mismatches.is_empty(), "seed {seed}: {} mismatches, first {:?}", mismatches.len(), &mismatches[..mismatches.len().min(5)]);
    }
    // The coarse march only disagrees on grazing rays.
    assert!(marching_disagreements * 1000 < total / 16, "{marching_disagreements} marching disagreements");
}

#[test]
fn valid_cells_report_true_heights() {
    let terrain = ten_box_terrain(9);
    let boxes: Vec<BoxObstacle> = terrain.obstacles().copied().collect();
    let cfg = PerceptionConfig::default();
    let m = sense(&terrain, &Pose2::new(Vec2::new(4.0, 4.0), 0.0), 0.0, &cfg);
    let mut valid = 0;
    for r in 0..m.rows {
        for c in 0..m.cols {
            if m.is_valid(r, c) {
                valid += 1;
                assert_eq!(m.get(r, c), true_height(&boxes, m.cell_center_world(r, c)));
            } else {
                assert_eq!(m.get(r, c), 0.0);
            }
        }
    }
    assert!(valid > 0);
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_observations.txt")
}

/// Observations of a fixed Boxes rollout, one line per step.
fn golden_run() -> Vec<Vec<f64>> {
    let cfg = Config::default();
    let sc = scenario(ScenarioKind::Boxes, false);
    // Start in view of the box pair so the map is not flat.
    let start = Pose2::new(Vec2::new(1.2, 0.3), 0.2);
    let path = carrybar::waypoints::PathAssignment::new(sc.waypoints.clone(), 0);
    let mut env = CarryEnv::new(cfg.env_config(), sc.terrain.clone(), start, path, 0).unwrap();
    let mut out = vec![env.reset().unwrap().to_vec()];
    let actions = [
        [0.5, 0.0, 0.0, 0.5, 0.0, 0.0],
        [0.6, 0.1, 0.2, 0.6, -0.1, 0.2],
        [0.3, -0.4, -0.3, 0.7, 0.2, 0.1],
    ];
    for a in actions {
        out.push(env.step(&a).unwrap().observation.to_vec());
    }
    out
}

#[test]
fn observation_layout_matches_golden_vectors() {
    let run = golden_run();
    let text: String = run
        .iter()
        .map(|v| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    if std::env::var_os("CARRYBAR_BLESS").is_some() {
        std::fs::create_dir_all(fixture().parent().unwrap()).unwrap();
        std::fs::write(fixture(), &text).unwrap();
    }
    let golden = std::fs::read_to_string(fixture()).expect("golden fixture missing; run with CARRYBAR_BLESS=1");
    let expected: Vec<Vec<f64>> = golden
        .lines()
        .map(|l| l.split(' ').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(expected.len(), run.len());
    for (step, (want, got)) in expected.iter().zip(&run).enumerate() {
        assert_eq!(want.len(), PROPRIO_LEN + 13 * 20);
        for (i, (w, g)) in want.iter().zip(got).enumerate() {
            assert!(w == g, "step {step}, index {i}: expected {w}, got {g}");
        }
    }

    // Spot checks of the layout at reset: at rest, command toward the first
    // waypoint ahead, zero last action, aligned bases and boxes in the map.
    let first = &run[0];
    assert_eq!(&first[0..3], &[0.0, 0.0, 0.0]);
    assert!(first[3] > 0.9);
    assert!(first[PROPRIO_LEN..].iter().filter(|&&h| h > 0.5).count() > 10);
    assert!(first[5..11].iter().all(|&x| x == 0.0));
    assert!(first[17..19].iter().all(|y| y.abs() < 1e-12));
    // The step-1 last action is the bounded first action.
    let bounded = carrybar::env::bound_action(&[0.5, 0.0, 0.0, 0.5, 0.0, 0.0], 0.8);
    assert_eq!(&run[1][5..11], &bounded);
}
