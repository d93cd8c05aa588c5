use geoscene::fixtures;
use geoscene::knowledge::{KnowledgeBase, KnowledgeFile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn kb(doc: serde_json::Value) -> KnowledgeBase {
    KnowledgeBase::try_from(serde_json::from_value::<KnowledgeFile>(doc).unwrap()).unwrap()
}

#[test]
fn keypose_selection_frequencies() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let kb = kb(json!({
        "categories": {"x": {"keyposes": [
            {"quat": [1, 0, 0, 0], "prob": 0.9},
            {"quat": [s, s, 0, 0], "prob": 0.1}
        ]}}
    }));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let first = (0..n)
        .filter(|_| kb.sample_pose_indexed("x", &mut rng).unwrap().1 == 0)
        .count();
    let f = first as f64 / n as f64;
    assert!((f - 0.9).abs() < 0.01, "keypose 0 drawn with frequency {f}");
}

#[test]
fn anchor_selection_frequencies() {
    let scene = fixtures::floor_scene(2.0);
    let kb = kb(json!({
        "location_bandwidth_m": 0.05,
        "categories": {"x": {
            "keyposes": [{"quat": [1, 0, 0, 0], "prob": 1.0}],
            "anchors": [
                {"xyz": [-1.0, 0.0, 0.0], "surface": "floor", "prob": 0.5},
                {"xyz": [1.0, 0.0, 0.0], "surface": "floor", "prob": 0.5}
            ]
        }}
    }));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 10_000;
    let left = (0..n)
        .filter(|_| kb.sample_location("x", &scene, &mut rng).unwrap().0.x < 0.0)
        .count();
    let f = left as f64 / n as f64;
    assert!((f - 0.5).abs() < 0.02, "left anchor frequency {f}");
}

#[test]
fn pose_density_tail_bound() {
    let kb = kb(json!({
        "pose_bandwidth_rad": 0.2,
        "categories": {"x": {"keyposes": [{"quat": [1, 0, 0, 0], "prob": 0.7}]}}
    }));
    for k in [4.0, 5.0, 8.0] {
        let q = nalgebra::UnitQuaternion::from_axis_angle(&nalgebra::Vector3::x_axis(), k * 0.2);
        let d = kb.pose_density("x", &q).unwrap();
        // Gaussian tail at 4 bandwidths: exp(-8).
        assert!(d < 0.00034 * 0.7, "density {d} at {k} bandwidths");
    }
}
