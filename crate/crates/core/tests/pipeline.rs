mod common;

use common::{bare_frame, max_abs_diff};
use loopcal::perturb::{apply_miscalibration, sample_miscalibration};
use loopcal::pipeline::{aggregate_sequence, correct_frame, estimate_multiframe, refine_iterative, Aggregation};
use loopcal::regress::{IdentityEstimator, OracleEstimator};
use loopcal::transform::{EulerPose, Quaternion};
use loopcal::{
    Estimator, EstimatorStage, FrameSet, MiscalBounds, PredictionSet, Result, RigidTransform, ScenarioPreset,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Returns arbitrary transforms keyed by the stage budget, ignoring data.
struct Scripted;

impl Estimator for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn estimate_frames(&self, _frames: &[FrameSet], stage: &EstimatorStage) -> Result<PredictionSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(stage.budget as u64);
        let b = MiscalBounds::from_degrees(0.5, 10.0);
        Ok(PredictionSet::full(
            sample_miscalibration(&b, &mut rng),
            sample_miscalibration(&b, &mut rng),
            sample_miscalibration(&b, &mut rng),
        ))
    }
}

fn stages(budgets: &[usize]) -> Vec<EstimatorStage> {
    budgets.iter().map(|&b| EstimatorStage { budget: b, ..EstimatorStage::with_bounds(MiscalBounds::from_degrees(0.2, 1.0)) }).collect()
}

fn close(a: &RigidTransform, b: &RigidTransform) -> bool {
    max_abs_diff(&a.components(), &b.components()) < 1e-9
}

fn miscalibrated(seed: u64) -> FrameSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = ScenarioPreset::iterative().injection_bounds();
    let frame = bare_frame(&[[5.0, 1.0, 0.0], [-3.0, 2.0, 1.0]], &[[10.0, 0.0, 0.5]]);
    apply_miscalibration(&frame, &sample_miscalibration(&b, &mut rng), &sample_miscalibration(&b, &mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn refinement_total_matches_stagewise_recomputation(seed in any::<u64>(), n in 1usize..6) {
        let frame = miscalibrated(seed);
        let budgets: Vec<usize> = (0..n).map(|i| 100 + i).collect();
        let r = refine_iterative(std::slice::from_ref(&frame), &Scripted, &stages(&budgets)).unwrap();
        prop_assert_eq!(r.stages.len(), n);

        // Lidar and radar corrections accumulate in application order; the
        // lidar-radar estimate of the last stage is mapped back through the
        // corrections that preceded it.
        let (mut cl, mut rc) = (RigidTransform::IDENTITY, RigidTransform::IDENTITY);
        let mut lr = RigidTransform::IDENTITY;
        for s in &r.stages {
            lr = cl.inverse() * s.lr.unwrap() * rc.inverse();
            cl = s.cl.unwrap() * cl;
            rc = rc * s.rc.unwrap();
        }
        prop_assert!(close(&r.total.cl.unwrap(), &cl));
        prop_assert!(close(&r.total.rc.unwrap(), &rc));
        prop_assert!(close(&r.total.lr.unwrap(), &lr));

        // Correcting once by the total equals correcting stage by stage.
        let mut seq = frame.clone();
        for s in &r.stages {
            seq = correct_frame(&seq, s);
        }
        let once = correct_frame(&frame, &r.total);
        prop_assert!(close(&seq.mis_lidar, &once.mis_lidar));
        prop_assert!(close(&seq.mis_radar, &once.mis_radar));
    }

    #[test]
    fn oracle_refinement_recovers_the_ground_truth(seed in any::<u64>(), n in 1usize..5) {
        let frame = miscalibrated(seed);
        let budgets: Vec<usize> = (0..n).map(|i| 10 + i).collect();
        let r = refine_iterative(std::slice::from_ref(&frame), &OracleEstimator, &stages(&budgets)).unwrap();
        let gt = frame.ground_truth();
        for pair in loopcal::Pair::ALL {
            prop_assert!(close(&r.total.get(pair).unwrap(), &gt.get(pair).unwrap()));
        }
        let fixed = correct_frame(&frame, &r.total);
        prop_assert!(close(&fixed.mis_lidar, &RigidTransform::IDENTITY));
        prop_assert!(close(&fixed.mis_radar, &RigidTransform::IDENTITY));
    }

    #[test]
    fn aggregation_survives_the_sign_boundary(
        axis in common::arb_point(1.0),
        jitter in prop::collection::vec((common::arb_point(1.0), -0.02..0.02f64), 1..12),
    ) {
        // Half-turns jittered around a common axis: canonical signs split
        // across w = 0, so only sign alignment keeps the cluster together.
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        prop_assume!(n > 0.1);
        let center = Quaternion::from_axis_angle(axis, std::f64::consts::PI);
        let preds: Vec<PredictionSet> = jitter
            .iter()
            .map(|&(a, angle)| {
                let tf = RigidTransform::from_rotation(Quaternion::from_axis_angle(a, angle).product(&center));
                PredictionSet { cl: Some(tf), ..Default::default() }
            })
            .collect();
        for mode in [Aggregation::Median, Aggregation::Mean] {
            let q = aggregate_sequence(&preds, mode).unwrap().cl.unwrap().rotation();
            prop_assert!(loopcal::transform::quat_angular_distance(&q, &center) < 0.05);
        }
    }

    #[test]
    fn odd_median_of_collinear_predictions_is_an_element(
        base in common::arb_point(2.0),
        dir in common::arb_point(1.0),
        steps in prop::collection::vec(-3.0..3.0f64, 1..6),
        angle in 0.0..1.0f64,
    ) {
        let steps: Vec<f64> = if steps.len() % 2 == 0 { steps[1..].to_vec() } else { steps };
        let preds: Vec<PredictionSet> = steps
            .iter()
            .map(|&s| {
                let t = [base[0] + s * dir[0], base[1] + s * dir[1], base[2] + s * dir[2]];
                let q = Quaternion::from_axis_angle([0.0, 0.0, 1.0], angle * (1.0 + s.abs()));
                let tf = RigidTransform::new(q, t);
                PredictionSet { rc: Some(tf), ..Default::default() }
            })
            .collect();
        let m = aggregate_sequence(&preds, Aggregation::Median).unwrap().rc.unwrap();
        prop_assert!(preds.iter().any(|p| p.rc.unwrap().translation() == m.translation()));
        prop_assert!(m.rotation().norm() - 1.0 < 1e-12);
    }
}

#[test]
fn identity_estimator_leaves_everything_in_place() {
    let frame = miscalibrated(3);
    let r = refine_iterative(std::slice::from_ref(&frame), &IdentityEstimator, &stages(&[1, 2, 3])).unwrap();
    assert_eq!(r.total, PredictionSet::identity());
}

#[test]
fn single_frame_multiframe_is_the_plain_estimate() {
    let frame = miscalibrated(11);
    let stage = stages(&[7])[0];
    let a = estimate_multiframe(std::slice::from_ref(&frame), &Scripted, &stage).unwrap();
    assert_eq!(a, Scripted.estimate(&frame, &stage).unwrap());
    assert!(estimate_multiframe(&[], &Scripted, &stage).is_err());
}

#[test]
fn refinement_needs_stages_and_frames() {
    let frame = miscalibrated(1);
    assert!(refine_iterative(&[], &OracleEstimator, &stages(&[1])).is_err());
    assert!(refine_iterative(std::slice::from_ref(&frame), &OracleEstimator, &[]).is_err());
}

#[test]
fn median_of_a_single_prediction_is_itself() {
    let t = RigidTransform::from_euler(&EulerPose { yaw: 0.3, tx: 1.0, ..Default::default() });
    let p = PredictionSet::full(t, t, t);
    let m = aggregate_sequence(&[p], Aggregation::Median).unwrap();
    assert!(close(&m.cl.unwrap(), &t));
}
