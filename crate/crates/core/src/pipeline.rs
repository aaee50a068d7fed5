//! Iterative refinement, multi-frame estimation, sequence aggregation and
//! radar accumulation.

use serde::{Deserialize, Serialize};

use crate::cloud::{ChannelSchema, PointCloud, RADAR_TIME_CHANNEL};
use crate::error::{Error, Result};
use crate::loss::{Pair, PredictionSet};
pub use crate::frame::FrameSet;
use crate::perturb::apply_miscalibration;
use crate::regress::{Estimator, EstimatorStage};
use crate::transform::{Quaternion, RigidTransform};

/// Default number of frames in a multi-frame estimate.
pub const MULTIFRAME_K: usize = 4;
/// Default number of accumulated radar sweeps.
pub const RADAR_SWEEPS: usize = 5;

/// Moves every sweep into the newest sweep's frame (index 0) using the
/// relative ego pose `ego[0]^-1 * ego[f]` and concatenates them, stamping
/// the time channel with `f`. Poses map vehicle coordinates to world.
pub fn accumulate_radar(clouds: &[PointCloud], ego_poses: &[RigidTransform]) -> Result<PointCloud> {
    if clouds.len() != ego_poses.len() {
        return Err(Error::LengthMismatch { left: clouds.len(), right: ego_poses.len() });
    }
    let total = clouds.iter().map(PointCloud::len).sum();
    let mut out = PointCloud::with_capacity(ChannelSchema::Radar, total);
    let Some(newest) = ego_poses.first() else {
        return Ok(out);
    };
    let to_newest = newest.inverse();
    for (f, (cloud, pose)) in clouds.iter().zip(ego_poses).enumerate() {
        if cloud.schema() != ChannelSchema::Radar {
            return Err(Error::SchemaMismatch { expected: ChannelSchema::Radar, found: cloud.schema() });
        }
        let rel = to_newest * *pose;
        let mut ch = [0.0; 3];
        for i in 0..cloud.len() {
            ch.copy_from_slice(cloud.channels(i));
            ch[RADAR_TIME_CHANNEL] = f as f64;
            out.push(rel.apply(cloud.point(i)), &ch);
        }
    }
    Ok(out)
}

/// Combines per-stage estimates into the overall correction. Stage `s + 1`
/// sees data already corrected by stages `0..=s`.
pub fn compose_stages(stages: &[PredictionSet]) -> PredictionSet {
    let mut total = PredictionSet::default();
    for s in stages {
        total = compose_two(&total, s);
    }
    total
}

fn compose_two(first: &PredictionSet, next: &PredictionSet) -> PredictionSet {
    let id = RigidTransform::IDENTITY;
    let or_id = |t: Option<RigidTransform>| t.unwrap_or(id);
    let (cl1, rc1) = (or_id(first.cl), or_id(first.rc));
    let merge = |a: Option<RigidTransform>, b: Option<RigidTransform>, f: &dyn Fn(RigidTransform, RigidTransform) -> RigidTransform| {
        match (a, b) {
            (None, None) => None,
            (a, b) => Some(f(or_id(a), or_id(b))),
        }
    };
    PredictionSet {
        cl: merge(first.cl, next.cl, &|a, b| b * a),
        rc: merge(first.rc, next.rc, &|a, b| a * b),
        lr: merge(first.lr, next.lr, &|a, b| {
            if next.lr.is_some() {
                cl1.inverse() * b * rc1.inverse()
            } else {
                a
            }
        }),
    }
}

/// Removes an estimate from a frame: lidar moved by `T_CL`, radar by
/// `T_RC^-1`. Missing entries leave that sensor alone.
pub fn correct_frame(frame: &FrameSet, est: &PredictionSet) -> FrameSet {
    let lidar = est.cl.unwrap_or(RigidTransform::IDENTITY);
    let radar = est.rc.map(|t| t.inverse()).unwrap_or(RigidTransform::IDENTITY);
    apply_miscalibration(frame, &lidar, &radar)
}

/// Per-stage estimates and their composition.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub stages: Vec<PredictionSet>,
    pub total: PredictionSet,
}

impl Refinement {
    /// Composition of the first `n` stages.
    pub fn after(&self, n: usize) -> PredictionSet {
        compose_stages(&self.stages[..n.min(self.stages.len())])
    }
}

/// Runs one estimator per stage, re-transforming the clouds by each
/// stage's estimate before the next. Frames share one estimate per stage.
pub fn refine_iterative(frames: &[FrameSet], estimator: &dyn Estimator, stages: &[EstimatorStage]) -> Result<Refinement> {
    if stages.is_empty() || frames.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut current = frames.to_vec();
    let mut per_stage = Vec::with_capacity(stages.len());
    for (s, stage) in stages.iter().enumerate() {
        let est = estimator.estimate_frames(&current, stage).map_err(|e| match e {
            Error::NoOverlap { .. } => Error::NoOverlap { stage: Some(s) },
            e => e,
        })?;
        if s + 1 < stages.len() {
            current = current.iter().map(|f| correct_frame(f, &est)).collect();
        }
        per_stage.push(est);
    }
    let total = compose_stages(&per_stage);
    Ok(Refinement { stages: per_stage, total })
}

/// One shared estimate over several frames with the same miscalibration.
pub fn estimate_multiframe(frames: &[FrameSet], estimator: &dyn Estimator, stage: &EstimatorStage) -> Result<PredictionSet> {
    if frames.is_empty() {
        return Err(Error::EmptyList);
    }
    estimator.estimate_frames(frames, stage)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

/// Component-wise median or mean of each pair's translation and
/// sign-aligned quaternion (renormalized). Pairs must be present either in
/// all predictions or in none.
pub fn aggregate_sequence(preds: &[PredictionSet], mode: Aggregation) -> Result<PredictionSet> {
    let Some(first) = preds.first() else {
        return Err(Error::EmptyList);
    };
    let mut out = PredictionSet::default();
    for pair in Pair::ALL {
        if first.get(pair).is_none() {
            continue;
        }
        let tfs = preds.iter().map(|p| p.require(pair)).collect::<Result<Vec<_>>>()?;
        out.set(pair, Some(aggregate_transforms(&tfs, mode)));
    }
    Ok(out)
}

fn aggregate_transforms(tfs: &[RigidTransform], mode: Aggregation) -> RigidTransform {
    let reference = tfs[0].rotation();
    let quats: Vec<[f64; 4]> = tfs
        .iter()
        .map(|t| {
            let q = t.rotation();
            if q.dot(&reference) < 0.0 { q.neg() } else { q }.as_array()
        })
        .collect();
    let pick = |vals: Vec<f64>| match mode {
        Aggregation::Median => median(vals),
        Aggregation::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
    };
    let q: [f64; 4] = std::array::from_fn(|c| pick(quats.iter().map(|q| q[c]).collect()));
    let t: [f64; 3] = std::array::from_fn(|c| pick(tfs.iter().map(|tf| tf.translation()[c]).collect()));
    RigidTransform::new(Quaternion::new(q[0], q[1], q[2], q[3]), t)
}

pub(crate) fn median(mut vals: Vec<f64>) -> f64 {
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radar(points: &[[f64; 3]]) -> PointCloud {
        let mut c = PointCloud::new(ChannelSchema::Radar);
        for &p in points {
            c.push(p, &[1.0, 0.0, 9.0]);
        }
        c
    }

    #[test]
    fn single_sweep_unchanged() {
        let c = radar(&[[1.0, 2.0, 3.0]]);
        let out = accumulate_radar(std::slice::from_ref(&c), &[RigidTransform::from_translation([4.0, 0.0, 0.0])]).unwrap();
        assert_eq!(out.points(), c.points());
        assert_eq!(out.channels(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn duplicated_sweeps() {
        let c = radar(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let id = RigidTransform::IDENTITY;
        let out = accumulate_radar(&[c.clone(), c], &[id, id]).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out.point(2), [1.0, 0.0, 0.0]);
        assert_eq!(out.channels(3)[RADAR_TIME_CHANNEL], 1.0);
    }

    #[test]
    fn ego_motion_compensated() {
        let newest = RigidTransform::from_translation([1.0, 0.0, 0.0]);
        let older = RigidTransform::IDENTITY;
        let out = accumulate_radar(&[radar(&[]), radar(&[[5.0, 1.0, 0.0]])], &[newest, older]).unwrap();
        assert_eq!(out.point(0), [4.0, 1.0, 0.0]);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            accumulate_radar(&[radar(&[])], &[]),
            Err(Error::LengthMismatch { left: 1, right: 0 })
        ));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn aggregate_translation_median() {
        let p = |v: f64| PredictionSet { cl: Some(RigidTransform::from_translation([v; 3])), ..Default::default() };
        let agg = aggregate_sequence(&[p(1.0), p(3.0), p(2.0)], Aggregation::Median).unwrap();
        assert_eq!(agg.cl.unwrap().translation(), [2.0; 3]);
        assert!(agg.lr.is_none());
        assert!(matches!(aggregate_sequence(&[], Aggregation::Mean), Err(Error::EmptyList)));
    }
}
