mod common;

use common::{arb_points, bare_frame, max_abs_diff};
use loopcal::perturb::{apply_miscalibration, sample_miscalibration};
use loopcal::{MiscalBounds, RigidTransform};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn samples_cover_the_box_uniformly() {
    let bounds = MiscalBounds::from_degrees(1.0, 20.0);
    let half = bounds.half_widths();
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let samples: Vec<[f64; 6]> = (0..n).map(|_| sample_miscalibration(&bounds, &mut rng).to_euler().to_array()).collect();
    for (axis, &h) in half.iter().enumerate() {
        let vals: Vec<f64> = samples.iter().map(|s| s[axis]).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sigma = h / 3f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "axis {axis} mean {mean}");
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= -h * (1.0 + 1e-9) && lo <= -0.99 * h, "axis {axis} min {lo}");
        assert!(hi <= h * (1.0 + 1e-9) && hi >= 0.99 * h, "axis {axis} max {hi}");
    }
}

proptest! {
    #[test]
    fn inverse_restores_the_clouds(seed in any::<u64>(), lidar in arb_points(40.0, 1..60), radar in arb_points(40.0, 1..30)) {
        let bounds = MiscalBounds::from_degrees(2.0, 180.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ml = sample_miscalibration(&bounds, &mut rng);
        let mr = sample_miscalibration(&bounds, &mut rng);
        let frame = bare_frame(&lidar, &radar);
        let moved = apply_miscalibration(&frame, &ml, &mr);
        prop_assert!(max_abs_diff(&moved.mis_lidar.components(), &ml.components()) < 1e-12);
        prop_assert!(max_abs_diff(&moved.mis_radar.components(), &mr.components()) < 1e-12);
        let back = apply_miscalibration(&moved, &ml.inverse(), &mr.inverse());
        for (a, b) in back.lidar.points().iter().zip(frame.lidar.points()) {
            prop_assert!(max_abs_diff(a, b) < 1e-9);
        }
        for (a, b) in back.radar.points().iter().zip(frame.radar.points()) {
            prop_assert!(max_abs_diff(a, b) < 1e-9);
        }
        for i in 0..frame.radar.len() {
            prop_assert_eq!(back.radar.channels(i), frame.radar.channels(i));
        }
        let id = RigidTransform::IDENTITY.components();
        prop_assert!(max_abs_diff(&back.mis_lidar.components(), &id) < 1e-9);
        prop_assert!(max_abs_diff(&back.mis_radar.components(), &id) < 1e-9);
        prop_assert_eq!(&back.camera, &frame.camera);
    }

    #[test]
    fn ground_truth_closes_the_loop(seed in any::<u64>()) {
        let bounds = MiscalBounds::from_degrees(1.0, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = bare_frame(&[[1.0, 0.0, 0.0]], &[[2.0, 0.0, 0.0]]);
        let f = apply_miscalibration(&frame, &sample_miscalibration(&bounds, &mut rng), &sample_miscalibration(&bounds, &mut rng));
        let lp = loopcal::loss::loop_transform(&f.ground_truth()).unwrap();
        prop_assert!(max_abs_diff(&lp.components(), &RigidTransform::IDENTITY.components()) < 1e-9);
    }
}
