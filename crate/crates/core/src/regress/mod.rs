//! Calibration estimators: a depth-image alignment cost, multi-start
//! Nelder-Mead search over Euler-pose boxes, pairwise and loop-regularized
//! joint estimation, and trivial oracle/identity estimators.
//!
//! Pair semantics: estimating `T` for a (source, target) pair means finding
//! the transform that, applied to the source cloud, best aligns it with the
//! target raster. With frame clouds stored in camera body coordinates this
//! gives `T_CL` from lidar onto camera, `T_LR` from radar onto lidar and
//! `T_RC^-1` from radar onto camera.

pub mod simplex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{ChannelSchema, PointCloud};
use crate::error::{Error, Result};
use crate::frame::FrameSet;
use crate::loss::{loop_loss, LossWeights, Pair, PredictionSet};
use crate::perturb::{MiscalBounds, ScenarioPreset};
use crate::projection::{
    cart_to_spherical, equirect_pixel, project_equirect, DepthImage, ProjectionConfig, RangeScratch, RESIZED_RASTER,
};
use crate::transform::{EulerPose, RigidTransform, Vec3};

use simplex::{minimize, SimplexOptions, SimplexResult};

/// Simplex size, in box-normalized units, below which a search may stop.
const X_TOLERANCE: f64 = 1e-3;

/// Truncation floor per meter of the stage translation bound.
const STAGE_TRUNCATION_SCALE: f64 = 6.0;

/// Reduced raster for early, coarse stages.
pub const COARSE_RASTER: (usize, usize) = (256, 512);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStage {
    pub bounds: MiscalBounds,
    /// Cost evaluations for the best start; the other starts stop at the
    /// exploration share of it (see [`SearchOptions::explore_fraction`]).
    pub budget: usize,
    pub tolerance: f64,
    /// Raster (height, width) the cost is evaluated on.
    pub raster: (usize, usize),
}

impl EstimatorStage {
    pub fn new(bounds: MiscalBounds, budget: usize, tolerance: f64, raster: (usize, usize)) -> Result<Self> {
        let s = EstimatorStage { bounds, budget, tolerance, raster };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.budget == 0 || self.tolerance.is_nan() || self.tolerance <= 0.0 || self.raster.0 == 0 || self.raster.1 == 0 {
            return Err(Error::InvalidConfig(format!("invalid estimator stage {self:?}")));
        }
        Ok(())
    }

    /// Default stage for `bounds` on the full raster.
    pub fn with_bounds(bounds: MiscalBounds) -> Self {
        EstimatorStage { bounds, budget: 600, tolerance: 1e-6, raster: RESIZED_RASTER }
    }

    /// One stage per preset entry: coarse raster for all but the last.
    pub fn cascade(preset: &ScenarioPreset) -> Vec<EstimatorStage> {
        let n = preset.stages.len();
        preset
            .stages
            .iter()
            .enumerate()
            .map(|(i, &b)| EstimatorStage { raster: if i + 1 == n { RESIZED_RASTER } else { COARSE_RASTER }, ..Self::with_bounds(b) })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentCostConfig {
    /// Weight of the fraction of source pixels landing on empty target pixels.
    pub occupancy_penalty: f64,
    /// Fewer shared pixels than this yields an infinite cost.
    pub min_overlap: usize,
    /// Per-pixel range differences are truncated here, meters.
    pub max_residual: f64,
    pub projection: ProjectionConfig,
}

impl AlignmentCostConfig {
    /// Untruncated residuals.
    pub fn new(occupancy_penalty: f64, min_overlap: usize, raster: (usize, usize)) -> Self {
        AlignmentCostConfig {
            occupancy_penalty,
            min_overlap,
            max_residual: f64::INFINITY,
            projection: ProjectionConfig::equirect(raster.0, raster.1, ChannelSchema::Range),
        }
    }

    pub fn with_raster(&self, raster: (usize, usize)) -> Self {
        AlignmentCostConfig { projection: ProjectionConfig::equirect(raster.0, raster.1, ChannelSchema::Range), ..*self }
    }

    /// Stage raster, with the truncation widened to the stage's
    /// translation bound so coarse stages keep a wide basin.
    pub fn for_stage(&self, stage: &EstimatorStage) -> Self {
        AlignmentCostConfig {
            max_residual: self.max_residual.max(STAGE_TRUNCATION_SCALE * stage.bounds.max_translation),
            ..self.with_raster(stage.raster)
        }
    }

    pub fn raster(&self) -> (usize, usize) {
        (self.projection.height, self.projection.width)
    }

    pub fn validate(&self) -> Result<()> {
        let penalty_ok = self.occupancy_penalty >= 0.0;
        let residual_ok = self.max_residual > 0.0;
        if !penalty_ok || !residual_ok || self.min_overlap == 0 {
            return Err(Error::InvalidConfig(format!("invalid alignment cost config {self:?}")));
        }
        Ok(())
    }
}

/// Estimator default: residuals truncated at 30 cm so occlusion and
/// grazing-angle pixels do not dominate the mean.
impl Default for AlignmentCostConfig {
    fn default() -> Self {
        AlignmentCostConfig { max_residual: 0.3, ..Self::new(1.0, 20, RESIZED_RASTER) }
    }
}

/// Projects `candidate * source` and compares ranges with `target`: mean
/// absolute range difference over pixels occupied in both, plus the
/// occupancy penalty times the fraction of source pixels with no target
/// return. Infinite when fewer than `min_overlap` pixels are shared.
pub fn alignment_cost(
    source: &PointCloud,
    candidate: &RigidTransform,
    target: &DepthImage,
    cfg: &AlignmentCostConfig,
) -> Result<f64> {
    let (h, w) = cfg.raster();
    if (target.height(), target.width()) != (h, w) {
        return Err(Error::InvalidConfig(format!(
            "target raster {}x{} does not match cost raster {h}x{w}",
            target.height(),
            target.width()
        )));
    }
    let moved = PointCloud::from_points(source.points().iter().map(|&p| candidate.apply(p)).collect());
    let img = project_equirect(&moved, &cfg.projection)?;
    let mut acc = CostAccumulator::new(cfg);
    for i in 0..h * w {
        let r = img.range_at(i);
        if r > 0.0 {
            acc.add(r, target.range_at(i));
        }
    }
    Ok(acc.finish(cfg))
}

struct CostAccumulator {
    max_residual: f64,
    sum: f64,
    overlap: usize,
    missed: usize,
}

impl CostAccumulator {
    fn new(cfg: &AlignmentCostConfig) -> Self {
        CostAccumulator { max_residual: cfg.max_residual, sum: 0.0, overlap: 0, missed: 0 }
    }

    #[inline]
    fn add(&mut self, source: f32, target: f32) {
        if target > 0.0 {
            self.sum += (source as f64 - target as f64).abs().min(self.max_residual);
            self.overlap += 1;
        } else {
            self.missed += 1;
        }
    }

    fn finish(&self, cfg: &AlignmentCostConfig) -> f64 {
        if self.overlap < cfg.min_overlap {
            return f64::INFINITY;
        }
        let total = (self.overlap + self.missed) as f64;
        self.sum / self.overlap as f64 + cfg.occupancy_penalty * self.missed as f64 / total
    }
}

/// A source cloud and a target range raster prepared for repeated cost
/// evaluation. Agrees with [`alignment_cost`] up to summation order.
#[derive(Debug, Clone)]
pub struct AlignmentProblem {
    points: Vec<Vec3>,
    target: Vec<f32>,
    raster: (usize, usize),
}

impl AlignmentProblem {
    pub fn new(source: &PointCloud, target: &DepthImage) -> Self {
        let target_range = (0..target.height() * target.width()).map(|i| target.range_at(i)).collect();
        AlignmentProblem { points: source.points().to_vec(), target: target_range, raster: (target.height(), target.width()) }
    }

    /// Keeps only source points whose identity projection lies at least
    /// `margin` radians inside the angular extent covered by the target,
    /// so candidates within the search box cannot push them off its edge.
    /// Left unchanged when fewer than `min_points` would survive.
    pub fn cropped_to_coverage(mut self, margin: f64, min_points: usize) -> Self {
        let (h, w) = self.raster;
        let mut cols = vec![false; w];
        let mut rows = vec![false; h];
        for (i, &r) in self.target.iter().enumerate() {
            if r > 0.0 {
                cols[i % w] = true;
                rows[i / w] = true;
            }
        }
        let mc = (margin / (2.0 * std::f64::consts::PI) * w as f64).ceil() as usize;
        let mr = (margin / std::f64::consts::PI * h as f64).ceil() as usize;
        let col_ok = eroded(&cols, mc, true);
        let row_ok = eroded(&rows, mr, false);
        let kept: Vec<Vec3> = self
            .points
            .iter()
            .copied()
            .filter(|&p| {
                let s = cart_to_spherical(p);
                if s.range <= 0.0 {
                    return false;
                }
                let (u, v) = equirect_pixel(&s, w, h);
                col_ok[u] && row_ok[v]
            })
            .collect();
        if kept.len() >= min_points {
            self.points = kept;
        }
        self
    }

    /// Keeps at most `max_points` source points with a uniform stride.
    pub fn thinned(mut self, max_points: usize) -> Self {
        if max_points > 0 && self.points.len() > max_points {
            let stride = self.points.len().div_ceil(max_points);
            self.points = self.points.iter().step_by(stride).copied().collect();
        }
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn raster(&self) -> (usize, usize) {
        self.raster
    }

    pub fn scratch(&self) -> RangeScratch {
        RangeScratch::new(self.raster.0, self.raster.1)
    }

    pub fn cost(&self, candidate: &RigidTransform, cfg: &AlignmentCostConfig, scratch: &mut RangeScratch) -> f64 {
        let mut acc = CostAccumulator::new(cfg);
        let target = &self.target;
        scratch.rasterize(&self.points, candidate, |idx, r| acc.add(r as f32, target[idx]));
        acc.finish(cfg)
    }
}

/// Marks cells whose whole `+-m` neighborhood is set; `wrap` treats the
/// slice as circular.
fn eroded(set: &[bool], m: usize, wrap: bool) -> Vec<bool> {
    let n = set.len() as i64;
    (0..n)
        .map(|i| {
            (-(m as i64)..=m as i64).all(|d| {
                let j = i + d;
                if wrap {
                    set[j.rem_euclid(n) as usize]
                } else {
                    (0..n).contains(&j) && set[j as usize]
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Identity plus `starts - 1` uniform samples from the box.
    pub starts: usize,
    pub seed: u64,
    /// The search box is the stage bounds scaled by this factor.
    pub margin: f64,
    /// Initial simplex edge, as a fraction of the box half-width.
    pub initial_step: f64,
    /// Share of the stage budget every start may spend before only the
    /// best one is continued, from a fresh simplex a quarter the size.
    pub explore_fraction: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { starts: 8, seed: 0, margin: 1.25, initial_step: 0.25, explore_fraction: 0.25 }
    }
}

/// Box-normalized coordinates to a transform.
fn decode(x: &[f64], half: &[f64; 6]) -> RigidTransform {
    let mut c = [0.0; 6];
    for i in 0..6 {
        c[i] = x[i] * half[i];
    }
    RigidTransform::from_euler(&EulerPose::from_array(c))
}

fn search_half_widths(bounds: &MiscalBounds, margin: f64) -> [f64; 6] {
    bounds.half_widths().map(|h| h * margin)
}

/// Outcome of one search, kept for diagnostics and contract tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub transform: RigidTransform,
    pub cost: f64,
    pub identity_cost: f64,
    pub start: usize,
    /// Best-so-far cost history of the winning start.
    pub history: Vec<f64>,
}

/// Multi-start Nelder-Mead minimizing the summed cost of `problems` (one
/// per frame) over a shared transform.
pub fn search_pairwise(
    problems: &[AlignmentProblem],
    stage: &EstimatorStage,
    cfg: &AlignmentCostConfig,
    opts: &SearchOptions,
) -> Result<SearchTrace> {
    stage.validate()?;
    cfg.validate()?;
    if problems.is_empty() {
        return Err(Error::EmptyList);
    }
    let cfg = cfg.for_stage(stage);
    if let Some(p) = problems.iter().find(|p| p.raster() != stage.raster) {
        return Err(Error::InvalidConfig(format!("problem raster {:?} does not match stage {:?}", p.raster(), stage.raster)));
    }
    let half = search_half_widths(&stage.bounds, opts.margin);
    let dims: Vec<usize> = (0..6).filter(|&i| half[i] > 0.0).collect();
    let starts = start_points(opts, dims.len());
    let explore = ((stage.budget as f64 * opts.explore_fraction).ceil() as usize).clamp(1, stage.budget);
    let simplex = SimplexOptions {
        budget: explore,
        f_tolerance: stage.tolerance,
        x_tolerance: X_TOLERANCE,
        initial_step: opts.initial_step,
        lower: -1.0,
        upper: 1.0,
    };
    let expand = |x: &[f64]| {
        let mut full = [0.0; 6];
        for (k, &i) in dims.iter().enumerate() {
            full[i] = x[k];
        }
        full
    };
    let run = |x0: &[f64], simplex: &SimplexOptions| {
        let mut scratch: Vec<RangeScratch> = problems.iter().map(|p| p.scratch()).collect();
        minimize(
            |x| {
                let tf = decode(&expand(x), &half);
                problems.iter().zip(scratch.iter_mut()).map(|(p, s)| p.cost(&tf, &cfg, s)).sum()
            },
            x0,
            simplex,
        )
    };

    let runs: Vec<SimplexResult> = starts.par_iter().map(|x0| run(x0, &simplex)).collect();
    let (start, mut best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.value < a.1.value { b } else { a })
        .expect("at least one start");
    if best.value.is_finite() && best.evaluations < stage.budget {
        let polish = SimplexOptions {
            budget: stage.budget - best.evaluations,
            initial_step: opts.initial_step * 0.25,
            ..simplex
        };
        let more = run(&best.x, &polish);
        let floor = best.value;
        best.history.extend(more.history.iter().map(|v| v.min(floor)));
        if more.value < best.value {
            best.value = more.value;
            best.x = more.x;
        }
    }

    let mut scratch: Vec<RangeScratch> = problems.iter().map(|p| p.scratch()).collect();
    let identity_cost: f64 =
        problems.iter().zip(scratch.iter_mut()).map(|(p, s)| p.cost(&RigidTransform::IDENTITY, &cfg, s)).sum();
    if !best.value.is_finite() {
        return Err(Error::NoOverlap { stage: None });
    }
    Ok(SearchTrace {
        transform: decode(&expand(&best.x), &half),
        cost: best.value,
        identity_cost,
        start,
        history: best.history,
    })
}

fn start_points(opts: &SearchOptions, dims: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![vec![0.0; dims]];
    for _ in 1..opts.starts.max(1) {
        starts.push((0..dims).map(|_| rng.gen_range(-1.0..=1.0)).collect());
    }
    starts
}

/// Transform best aligning `source` with `target`, searched within the
/// stage box; never worse than the identity candidate.
pub fn estimate_pairwise(
    source: &PointCloud,
    target: &DepthImage,
    stage: &EstimatorStage,
    cfg: &AlignmentCostConfig,
    opts: &SearchOptions,
) -> Result<RigidTransform> {
    let problem = AlignmentProblem::new(source, target);
    Ok(search_pairwise(&[problem], stage, cfg, opts)?.transform)
}

/// Which sensor data each pair aligns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Lidar,
    Radar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Camera,
    Lidar,
}

fn pair_roles(pair: Pair) -> (Source, Target) {
    match pair {
        Pair::CameraLidar => (Source::Lidar, Target::Camera),
        Pair::LidarRadar => (Source::Radar, Target::Lidar),
        Pair::RadarCamera => (Source::Radar, Target::Camera),
    }
}

/// Converts the source-onto-target alignment into the pair's `T_ab`.
fn to_pair_transform(pair: Pair, aligned: RigidTransform) -> RigidTransform {
    match pair {
        Pair::RadarCamera => aligned.inverse(),
        _ => aligned,
    }
}

fn from_pair_transform(pair: Pair, tf: RigidTransform) -> RigidTransform {
    to_pair_transform(pair, tf)
}

/// Stage bounds describe one sensor's miscalibration; the lidar-radar
/// transform compounds two of them, so its box is twice as wide.
pub fn pair_stage(pair: Pair, stage: &EstimatorStage) -> EstimatorStage {
    match pair {
        Pair::LidarRadar => EstimatorStage {
            bounds: MiscalBounds::new(2.0 * stage.bounds.max_translation, 2.0 * stage.bounds.max_rotation),
            ..*stage
        },
        _ => *stage,
    }
}

/// Settings shared by the search-based estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    pub cost: AlignmentCostConfig,
    pub search: SearchOptions,
    /// Source clouds are thinned to at most this many points (0: keep all).
    pub max_source_points: usize,
    /// Crop sources to the target's angular coverage.
    pub crop_to_coverage: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            cost: AlignmentCostConfig::default(),
            search: SearchOptions::default(),
            max_source_points: 30_000,
            crop_to_coverage: true,
        }
    }
}

impl SearchSettings {
    /// Alignment problem for `pair` on `frame`; `stage` should already be
    /// adjusted with [`pair_stage`].
    pub fn problem(&self, frame: &FrameSet, pair: Pair, stage: &EstimatorStage) -> Result<AlignmentProblem> {
        let (h, w) = stage.raster;
        let (source, target) = pair_roles(pair);
        let source = match source {
            Source::Lidar => &frame.lidar,
            Source::Radar => &frame.radar,
        };
        let target = match target {
            Target::Camera => frame.camera_raster(h, w)?,
            Target::Lidar => frame.lidar_raster(h, w)?,
        };
        let mut problem = AlignmentProblem::new(source, &target);
        if self.crop_to_coverage {
            problem = problem.cropped_to_coverage(coverage_margin(&stage.bounds, self.search.margin), self.cost.min_overlap);
        }
        Ok(problem.thinned(self.max_source_points))
    }
}

/// Angular margin that keeps points inside the target under any candidate
/// in the box: the rotation bound plus the bearing change a translation
/// bound causes at 5 m.
fn coverage_margin(bounds: &MiscalBounds, margin: f64) -> f64 {
    let m = margin * (bounds.max_rotation + (bounds.max_translation / 5.0).atan());
    m.min(std::f64::consts::PI)
}

/// Pluggable calibration estimator. Pipelines interact with estimators
/// only through this trait.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;

    /// Shared estimate over frames assumed to carry the same
    /// miscalibration.
    fn estimate_frames(&self, frames: &[FrameSet], stage: &EstimatorStage) -> Result<PredictionSet>;

    fn estimate(&self, frame: &FrameSet, stage: &EstimatorStage) -> Result<PredictionSet> {
        self.estimate_frames(std::slice::from_ref(frame), stage)
    }
}

/// Returns the recorded ground truth of the first frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleEstimator;

impl Estimator for OracleEstimator {
    fn name(&self) -> &str {
        "oracle"
    }

    fn estimate_frames(&self, frames: &[FrameSet], _stage: &EstimatorStage) -> Result<PredictionSet> {
        frames.first().map(FrameSet::ground_truth).ok_or(Error::EmptyList)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityEstimator;

impl Estimator for IdentityEstimator {
    fn name(&self) -> &str {
        "identity"
    }

    fn estimate_frames(&self, frames: &[FrameSet], _stage: &EstimatorStage) -> Result<PredictionSet> {
        if frames.is_empty() {
            return Err(Error::EmptyList);
        }
        Ok(PredictionSet::identity())
    }
}

/// Independent per-pair searches for a subset of pairs.
#[derive(Debug, Clone)]
pub struct PairwiseEstimator {
    pub pairs: Vec<Pair>,
    pub settings: SearchSettings,
}

impl PairwiseEstimator {
    pub fn new(pairs: &[Pair], settings: SearchSettings) -> Self {
        PairwiseEstimator { pairs: pairs.to_vec(), settings }
    }

    pub fn all(settings: SearchSettings) -> Self {
        Self::new(&Pair::ALL, settings)
    }

    pub fn estimate_pair(&self, frames: &[FrameSet], pair: Pair, stage: &EstimatorStage) -> Result<RigidTransform> {
        let stage = &pair_stage(pair, stage);
        let problems = frames.iter().map(|f| self.settings.problem(f, pair, stage)).collect::<Result<Vec<_>>>()?;
        let trace = search_pairwise(&problems, stage, &self.settings.cost, &self.settings.search)?;
        Ok(to_pair_transform(pair, trace.transform))
    }
}

impl Estimator for PairwiseEstimator {
    fn name(&self) -> &str {
        "pairwise"
    }

    fn estimate_frames(&self, frames: &[FrameSet], stage: &EstimatorStage) -> Result<PredictionSet> {
        if frames.is_empty() {
            return Err(Error::EmptyList);
        }
        let mut out = PredictionSet::default();
        for &pair in &self.pairs {
            out.set(pair, Some(self.estimate_pair(frames, pair, stage)?));
        }
        Ok(out)
    }
}

/// Loop-regularized estimate of all three pairs, initialized from the
/// pairwise solutions.
#[derive(Debug, Clone)]
pub struct JointEstimator {
    pub settings: SearchSettings,
    pub weights: LossWeights,
    /// Total evaluation budget of the 18-coordinate refinement.
    pub budget: usize,
    /// Initial simplex edge, as a fraction of the stage box.
    pub initial_step: f64,
    /// Size of the lidar subset used as the loop point cloud.
    pub loop_points: usize,
    /// Passes over the three per-pair coordinate blocks.
    pub cycles: usize,
}

impl JointEstimator {
    pub fn new(settings: SearchSettings, weights: LossWeights) -> Self {
        JointEstimator { settings, weights, budget: 3000, initial_step: 0.1, loop_points: 1000, cycles: 2 }
    }
}

impl Estimator for JointEstimator {
    fn name(&self) -> &str {
        "joint"
    }

    fn estimate_frames(&self, frames: &[FrameSet], stage: &EstimatorStage) -> Result<PredictionSet> {
        self.weights.validate()?;
        let init = PairwiseEstimator::all(self.settings).estimate_frames(frames, stage)?;
        self.refine(frames, stage, &init)
    }
}

impl JointEstimator {
    /// Loop-regularized refinement of a full pairwise estimate `init`. The
    /// returned loop residual is never larger than that of `init`.
    pub fn refine(&self, frames: &[FrameSet], stage: &EstimatorStage, init: &PredictionSet) -> Result<PredictionSet> {
        self.weights.validate()?;
        if frames.is_empty() {
            return Err(Error::EmptyList);
        }
        if self.weights.lambda == 0.0 {
            return Ok(*init);
        }
        let problems: Vec<Vec<AlignmentProblem>> = Pair::ALL
            .iter()
            .map(|&pair| frames.iter().map(|f| self.settings.problem(f, pair, &pair_stage(pair, stage))).collect())
            .collect::<Result<_>>()?;
        let cfg = self.settings.cost.for_stage(stage);
        let half = search_half_widths(&stage.bounds, self.settings.search.margin);
        let loop_cloud = frames[0].lidar.thinned(self.loop_points);
        let residual = |p: &PredictionSet| loop_loss(p, &loop_cloud, &self.weights);
        let init_tf: Vec<RigidTransform> = Pair::ALL.iter().map(|&p| init.require(p)).collect::<Result<_>>()?;
        let dims: Vec<usize> = (0..18).filter(|&i| half[i % 6] > 0.0).collect();
        let lambda = self.weights.lambda;

        let candidate = |x: &[f64]| -> PredictionSet {
            let mut full = [0.0; 18];
            for (k, &i) in dims.iter().enumerate() {
                full[i] = x[k];
            }
            let mut p = PredictionSet::default();
            for (k, &pair) in Pair::ALL.iter().enumerate() {
                p.set(pair, Some(decode(&full[6 * k..6 * k + 6], &half) * init_tf[k]));
            }
            p
        };
        let mut scratch: Vec<Vec<RangeScratch>> =
            problems.iter().map(|ps| ps.iter().map(AlignmentProblem::scratch).collect()).collect();
        let mut objective = |p: &PredictionSet| -> f64 {
            let mut pair_sum = 0.0;
            for (k, &pair) in Pair::ALL.iter().enumerate() {
                let tf = from_pair_transform(pair, p.get(pair).expect("full set"));
                for (prob, s) in problems[k].iter().zip(scratch[k].iter_mut()) {
                    pair_sum += prob.cost(&tf, &cfg, s);
                }
            }
            let lp = residual(p).unwrap_or(f64::INFINITY);
            (1.0 - lambda) * pair_sum + lambda * lp * frames.len() as f64
        };

        // Block-coordinate descent: each pair's six coordinates in turn,
        // every block minimizing the full joint objective. The radar pairs go
        // first so the loop is closed around the dense camera-lidar estimate.
        let blocks: Vec<Vec<usize>> =
            [2, 1, 0].iter().map(|&k| (0..dims.len()).filter(|&j| dims[j] / 6 == k).collect()).collect();
        let per_block = (self.budget / (3 * self.cycles.max(1))).max(1);
        let mut x = vec![0.0; dims.len()];
        let mut value = f64::INFINITY;
        for cycle in 0..self.cycles.max(1) {
            for block in blocks.iter().filter(|b| !b.is_empty()) {
                let opts = SimplexOptions {
                    budget: per_block,
                    f_tolerance: stage.tolerance,
                    x_tolerance: X_TOLERANCE,
                    initial_step: self.initial_step * 0.5f64.powi(cycle as i32),
                    lower: -1.0,
                    upper: 1.0,
                };
                let x0: Vec<f64> = block.iter().map(|&j| x[j]).collect();
                let mut trial = x.clone();
                let result = minimize(
                    |sub| {
                        for (&j, &v) in block.iter().zip(sub) {
                            trial[j] = v;
                        }
                        objective(&candidate(&trial))
                    },
                    &x0,
                    &opts,
                );
                for (&j, &v) in block.iter().zip(&result.x) {
                    x[j] = v;
                }
                value = result.value;
            }
        }
        if !value.is_finite() {
            return Err(Error::NoOverlap { stage: None });
        }
        let refined = candidate(&x);
        if residual(&refined)? > residual(init)? {
            return Ok(*init);
        }
        Ok(refined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::project_equirect;

    fn cloud(points: &[Vec3]) -> PointCloud {
        PointCloud::from_points(points.to_vec())
    }

    #[test]
    fn identity_on_generating_cloud_is_zero() {
        let src = cloud(&[[5.0, 0.0, 0.0], [3.0, 1.0, 0.2], [4.0, -2.0, 1.0]]);
        let cfg = AlignmentCostConfig::new(1.0, 1, (64, 128));
        let target = project_equirect(&src, &cfg.projection).unwrap();
        assert_eq!(alignment_cost(&src, &RigidTransform::IDENTITY, &target, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_is_infinite() {
        let cfg = AlignmentCostConfig::new(1.0, 1, (64, 128));
        let target = project_equirect(&cloud(&[[5.0, 0.0, 0.0]]), &cfg.projection).unwrap();
        let c = alignment_cost(&cloud(&[[-5.0, 0.0, 0.0]]), &RigidTransform::IDENTITY, &target, &cfg).unwrap();
        assert!(c.is_infinite());
    }

    #[test]
    fn single_shared_pixel() {
        let cfg = AlignmentCostConfig::new(0.0, 1, (64, 128));
        let target = project_equirect(&cloud(&[[5.0, 0.0, 0.0]]), &cfg.projection).unwrap();
        let c = alignment_cost(&cloud(&[[2.0, 0.0, 0.0]]), &RigidTransform::IDENTITY, &target, &cfg).unwrap();
        assert_eq!(c, 3.0);
    }

    #[test]
    fn penalty_counts_missed_fraction() {
        let cfg = AlignmentCostConfig::new(2.0, 1, (64, 128));
        let target = project_equirect(&cloud(&[[5.0, 0.0, 0.0]]), &cfg.projection).unwrap();
        let c = alignment_cost(&cloud(&[[5.0, 0.0, 0.0], [0.0, 5.0, 0.0]]), &RigidTransform::IDENTITY, &target, &cfg)
            .unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn raster_mismatch_rejected() {
        let cfg = AlignmentCostConfig::new(1.0, 1, (64, 128));
        let target = DepthImage::zeros(32, 64, 1);
        assert!(alignment_cost(&cloud(&[[1.0, 0.0, 0.0]]), &RigidTransform::IDENTITY, &target, &cfg).is_err());
    }

    #[test]
    fn erosion() {
        let set = [true, true, true, false, true];
        assert_eq!(eroded(&set, 1, false), vec![false, true, false, false, false]);
        assert_eq!(eroded(&set, 1, true), vec![true, true, false, false, false]);
    }

    #[test]
    fn cascade_rasters() {
        let stages = EstimatorStage::cascade(&ScenarioPreset::iterative());
        assert_eq!(stages.len(), 4);
        assert_eq!(stages[0].raster, COARSE_RASTER);
        assert_eq!(stages[3].raster, RESIZED_RASTER);
    }

    #[test]
    fn stage_validation() {
        assert!(EstimatorStage::new(MiscalBounds::new(0.1, 0.1), 0, 1e-6, (8, 8)).is_err());
        assert!(EstimatorStage::new(MiscalBounds::new(0.1, 0.1), 1, 0.0, (8, 8)).is_err());
        assert!(EstimatorStage::new(MiscalBounds::new(0.1, 0.1), 1, 1e-6, (8, 8)).is_ok());
    }
}
