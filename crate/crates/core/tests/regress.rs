mod common;

use std::sync::OnceLock;

use loopcal::dataio::scene::NoiseModel;
use loopcal::dataio::{generate_scene, SceneSpec, SensorRig};
use loopcal::loss::loop_loss;
use loopcal::perturb::{apply_miscalibration, sample_miscalibration};
use loopcal::regress::{
    alignment_cost, estimate_pairwise, search_pairwise, AlignmentCostConfig, AlignmentProblem, JointEstimator,
    PairwiseEstimator, SearchOptions, SearchSettings,
};
use loopcal::transform::quat_angular_distance;
use loopcal::{ChannelSchema, Error, Estimator, EstimatorStage, FrameSet, LossWeights, MiscalBounds, Pair, RigidTransform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scene() -> &'static FrameSet {
    static FRAME: OnceLock<FrameSet> = OnceLock::new();
    FRAME.get_or_init(|| generate_scene(&SceneSpec::random(3), &SensorRig::default()).unwrap())
}

fn stage() -> EstimatorStage {
    EstimatorStage { budget: 120, ..EstimatorStage::with_bounds(MiscalBounds::from_degrees(0.2, 1.0)) }
}

fn lidar_problem(frame: &FrameSet, stage: &EstimatorStage) -> AlignmentProblem {
    SearchSettings { max_source_points: 4000, ..Default::default() }.problem(frame, Pair::CameraLidar, stage).unwrap()
}

fn perturbed(seed: u64) -> FrameSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = MiscalBounds::from_degrees(0.2, 1.0);
    apply_miscalibration(scene(), &sample_miscalibration(&b, &mut rng), &sample_miscalibration(&b, &mut rng))
}

#[test]
fn fast_cost_matches_reference_cost() {
    let frame = perturbed(1);
    let (h, w) = (128, 256);
    let target = frame.camera_raster(h, w).unwrap();
    let source = frame.lidar.thinned(5000);
    let problem = AlignmentProblem::new(&source, &target);
    let mut scratch = problem.scratch();
    let cfg = AlignmentCostConfig { max_residual: 0.5, ..AlignmentCostConfig::default().with_raster((h, w)) };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let tf = sample_miscalibration(&MiscalBounds::from_degrees(0.5, 5.0), &mut rng);
        let slow = alignment_cost(&source, &tf, &target, &cfg).unwrap();
        let fast = problem.cost(&tf, &cfg, &mut scratch);
        assert!((slow - fast).abs() <= 1e-9 * slow.max(1.0), "{slow} vs {fast}");
    }
}

#[test]
fn tiny_budget_never_loses_to_identity() {
    for budget in [1, 2, 7] {
        let stage = EstimatorStage { budget, ..stage() };
        let frame = perturbed(budget as u64);
        let p = lidar_problem(&frame, &stage);
        let t = search_pairwise(&[p], &stage, &AlignmentCostConfig::default(), &SearchOptions::default()).unwrap();
        assert!(t.cost <= t.identity_cost);
    }
}

#[test]
fn search_is_deterministic_and_monotone() {
    let frame = perturbed(7);
    let stage = stage();
    let p = lidar_problem(&frame, &stage);
    let cfg = AlignmentCostConfig::default();
    let opts = SearchOptions::default();
    let a = search_pairwise(std::slice::from_ref(&p), &stage, &cfg, &opts).unwrap();
    let b = search_pairwise(&[p], &stage, &cfg, &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*a.history.last().unwrap(), a.cost);
    assert!(a.cost <= a.identity_cost);
}

#[test]
fn estimator_reduces_the_error() {
    let frame = perturbed(11);
    let est = PairwiseEstimator::new(&[Pair::CameraLidar], SearchSettings { max_source_points: 8000, ..Default::default() });
    let stage = EstimatorStage { budget: 300, ..stage() };
    let got = est.estimate(&frame, &stage).unwrap().cl.unwrap();
    let gt = frame.ground_truth().cl.unwrap();
    let before = loopcal::metrics::error_record(Pair::CameraLidar, &RigidTransform::IDENTITY, &gt);
    let after = loopcal::metrics::error_record(Pair::CameraLidar, &got, &gt);
    assert!(after.translation_cm < before.translation_cm && after.rotation_deg < before.rotation_deg, "{before:?} -> {after:?}");
}

fn noiseless_frame() -> FrameSet {
    let spec = SceneSpec { noise: NoiseModel { camera: 0.0, lidar: 0.0, radar: 0.0 }, ..SceneSpec::random(21) };
    generate_scene(&spec, &SensorRig::default()).unwrap()
}

fn distance_from_identity(tf: &RigidTransform) -> (f64, f64) {
    let t = tf.translation();
    let dt = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
    (dt, quat_angular_distance(&tf.rotation(), &RigidTransform::IDENTITY.rotation()))
}

#[test]
fn noiseless_scene_recovers_identity() {
    let frame = noiseless_frame();
    let stage = EstimatorStage::with_bounds(MiscalBounds::from_degrees(0.2, 1.0));
    let (h, w) = stage.raster;
    let cfg = AlignmentCostConfig::default();
    for (cloud, target) in [(&frame.lidar, frame.lidar_raster(h, w).unwrap()), (&frame.radar, frame.radar_raster(h, w).unwrap())] {
        let source = cloud.thinned(30_000);
        let tf = estimate_pairwise(&source, &target, &stage, &cfg, &SearchOptions::default()).unwrap();
        let (dt, dr) = distance_from_identity(&tf);
        assert!(dt < 1e-3 && dr < 1e-3, "translation {dt} m, rotation {dr} rad");
    }
}

#[test]
fn disjoint_clouds_report_no_overlap() {
    let mut source = loopcal::PointCloud::new(ChannelSchema::Lidar);
    for i in 0..100 {
        source.push([-10.0, 0.01 * i as f64, 0.0], &[0.0]);
    }
    let mut target_cloud = loopcal::PointCloud::new(ChannelSchema::Range);
    for i in 0..100 {
        target_cloud.push([10.0, 0.01 * i as f64, 0.0], &[]);
    }
    let stage = EstimatorStage { budget: 30, ..stage() };
    let cfg = AlignmentCostConfig::default();
    let target = loopcal::projection::project_equirect(
        &target_cloud,
        &loopcal::ProjectionConfig::equirect(stage.raster.0, stage.raster.1, ChannelSchema::Range),
    )
    .unwrap();
    let err = estimate_pairwise(&source, &target, &stage, &cfg, &SearchOptions::default()).unwrap_err();
    assert!(matches!(err, Error::NoOverlap { .. }));
}

#[test]
fn joint_refinement_keeps_the_loop_no_worse() {
    let mut frame = perturbed(13);
    frame.radar = frame.radar.thinned(50);
    let settings = SearchSettings { max_source_points: 4000, ..Default::default() };
    let stage = EstimatorStage { budget: 100, ..stage() };
    let init = PairwiseEstimator::all(settings).estimate(&frame, &stage).unwrap();
    let mut joint = JointEstimator::new(settings, LossWeights::default());
    joint.budget = 300;
    let refined = joint.refine(std::slice::from_ref(&frame), &stage, &init).unwrap();
    let cloud = frame.lidar.thinned(joint.loop_points);
    let w = LossWeights::default();
    assert!(loop_loss(&refined, &cloud, &w).unwrap() <= loop_loss(&init, &cloud, &w).unwrap());

    let off = JointEstimator::new(settings, LossWeights { lambda: 0.0, ..Default::default() });
    assert_eq!(off.refine(std::slice::from_ref(&frame), &stage, &init).unwrap(), init);
}
