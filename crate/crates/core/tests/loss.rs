mod common;

use common::{arb_pose, arb_points, arb_transform, lidar_cloud};
use loopcal::loss::{loop_loss, loop_transform, pairwise_loss, param_loss, point_loss, smooth_l1, total_loss};
use loopcal::transform::{EulerPose, RigidTransform};
use loopcal::{LossWeights, PointCloud, PredictionSet};
use proptest::prelude::*;

fn gradient(f: &dyn Fn(&EulerPose) -> f64, at: &EulerPose, h: f64) -> [f64; 6] {
    let x = at.to_array();
    let mut g = [0.0; 6];
    for i in 0..6 {
        let (mut lo, mut hi) = (x, x);
        lo[i] -= h;
        hi[i] += h;
        g[i] = (f(&EulerPose::from_array(hi)) - f(&EulerPose::from_array(lo))) / (2.0 * h);
    }
    g
}

fn relative_gap(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / n
}

fn small_offset() -> impl Strategy<Value = EulerPose> {
    (-0.8..0.8f64, -0.8..0.8f64, -0.8..0.8f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64)
        .prop_map(|(roll, pitch, yaw, tx, ty, tz)| EulerPose { roll, pitch, yaw, tx, ty, tz })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn param_loss_is_smooth(gt in arb_transform(), off in small_offset()) {
        prop_assume!(off.to_array()[..3].iter().map(|a| a.abs()).sum::<f64>() > 0.05);
        prop_assume!(off.to_array()[3..].iter().map(|a| a.abs()).sum::<f64>() > 0.05);
        let w = LossWeights::default();
        let pred = (RigidTransform::from_euler(&off) * gt).to_euler();
        let f = |e: &EulerPose| param_loss(&RigidTransform::from_euler(e), &gt, &w);
        prop_assert!(relative_gap(&gradient(&f, &pred, 1e-5), &gradient(&f, &pred, 1e-6)) < 0.01);
    }

    #[test]
    fn point_loss_is_smooth(gt in arb_transform(), off in small_offset(), pts in arb_points(10.0, 5..40)) {
        prop_assume!(off.to_array().iter().map(|a| a.abs()).sum::<f64>() > 0.1);
        let cloud = PointCloud::from_points(pts);
        let pred = (RigidTransform::from_euler(&off) * gt).to_euler();
        let f = |e: &EulerPose| point_loss(&RigidTransform::from_euler(e), &gt, &cloud).unwrap();
        prop_assert!(relative_gap(&gradient(&f, &pred, 1e-5), &gradient(&f, &pred, 1e-6)) < 0.01);
    }
}

proptest! {
    #[test]
    fn losses_are_non_negative(a in arb_transform(), b in arb_transform(), pts in arb_points(10.0, 1..30)) {
        let w = LossWeights::default();
        let cloud = PointCloud::from_points(pts);
        prop_assert!(param_loss(&a, &b, &w) >= 0.0);
        prop_assert!(point_loss(&a, &b, &cloud).unwrap() >= 0.0);
        let p = PredictionSet::full(a, b, a);
        prop_assert!(loop_loss(&p, &cloud, &w).unwrap() >= 0.0);
        let gts = PredictionSet::full(b, a, b);
        prop_assert!(pairwise_loss(&p, &gts, [Some(&cloud); 3], &w).unwrap() >= 0.0);
    }

    #[test]
    fn pure_translation_point_loss_is_the_offset(gt in arb_transform(), t in common::arb_point(3.0), pts in arb_points(50.0, 1..50)) {
        let cloud = PointCloud::from_points(pts);
        let pred = RigidTransform::from_translation(t) * gt;
        let d = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
        prop_assert!((point_loss(&pred, &gt, &cloud).unwrap() - d).abs() < 1e-9);
    }

    #[test]
    fn smooth_l1_is_continuous_at_beta(beta in 0.01..10.0f64) {
        let below = smooth_l1(beta * (1.0 - 1e-12), beta);
        let above = smooth_l1(beta * (1.0 + 1e-12), beta);
        prop_assert!((below - above).abs() < 1e-9 * beta.max(1.0));
        prop_assert!((smooth_l1(beta, beta) - 0.5 * beta).abs() < 1e-12);
    }

    #[test]
    fn losses_vanish_at_their_fixed_points(a in arb_transform(), b in arb_transform(), pts in arb_points(10.0, 1..30)) {
        let w = LossWeights::default();
        let cloud = lidar_cloud(&pts);
        prop_assert_eq!(param_loss(&a, &a, &w), 0.0);
        prop_assert_eq!(point_loss(&a, &a, &cloud).unwrap(), 0.0);
        let p = PredictionSet::full(a, b, (a * b).inverse());
        prop_assert!(pairwise_loss(&p, &p, [Some(&cloud); 3], &w).unwrap().abs() < 1e-9);
        prop_assert!(loop_loss(&p, &cloud, &w).unwrap().abs() < 1e-9);
        prop_assert!(total_loss(&p, &p, [Some(&cloud); 3], &cloud, &w).unwrap().abs() < 1e-9);
    }

    #[test]
    fn loop_loss_ignores_quaternion_sign(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
        let w = LossWeights::default();
        let cloud = PointCloud::from_points(vec![[1.0, 2.0, 3.0], [-4.0, 0.5, 1.0]]);
        let flipped = RigidTransform::new(b.rotation().neg(), b.translation());
        let l1 = loop_loss(&PredictionSet::full(a, b, c), &cloud, &w).unwrap();
        let l2 = loop_loss(&PredictionSet::full(a, flipped, c), &cloud, &w).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_total_is_pairwise(a in arb_transform(), b in arb_transform(), pose in arb_pose(1.0)) {
        let w = LossWeights { lambda: 0.0, ..Default::default() };
        let cloud = PointCloud::from_points(vec![[1.0, 0.0, 0.0], [0.0, 3.0, -1.0]]);
        let err = RigidTransform::from_euler(&pose);
        let preds = PredictionSet::full(err * a, b, a);
        let gts = PredictionSet::full(a, b * err, a);
        let clouds = [Some(&cloud); 3];
        prop_assert_eq!(
            total_loss(&preds, &gts, clouds, &cloud, &w).unwrap().to_bits(),
            pairwise_loss(&preds, &gts, clouds, &w).unwrap().to_bits()
        );
    }

    #[test]
    fn conjugated_errors_keep_the_loop_closed(gt_cl in arb_transform(), gt_lr in arb_transform(), err in arb_transform()) {
        // Each prediction is off, but the errors cancel around the loop.
        let gt_rc = (gt_cl * gt_lr).inverse();
        let p = PredictionSet::full(err * gt_cl, gt_lr, gt_rc * err.inverse());
        let lp = loop_transform(&p).unwrap();
        prop_assert!(common::max_abs_diff(&lp.components(), &RigidTransform::IDENTITY.components()) < 1e-9);
        let w = LossWeights { lambda: 1.0, ..Default::default() };
        let cloud = PointCloud::from_points(vec![[1.0, 0.0, 0.0]]);
        let gts = PredictionSet::full(gt_cl, gt_lr, gt_rc);
        prop_assert!(total_loss(&p, &gts, [Some(&cloud); 3], &cloud, &w).unwrap() < 1e-9);
    }
}
