//! Calibration losses: smooth-L1 parameter distance, point-cloud distance,
//! their per-pair blend, the loop-closure term over the camera -> lidar ->
//! radar -> camera cycle, and the weighted total.
//!
//! Pair transforms follow the `T_ab` convention: `T_ab` maps coordinates of
//! frame `b` into frame `a`, so `T_CL * T_LR * T_RC` is the identity for a
//! consistent triplet.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::transform::{norm, quat_angular_distance, sub, translation_distance, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pair {
    CameraLidar,
    LidarRadar,
    RadarCamera,
}

impl Pair {
    pub const ALL: [Pair; 3] = [Pair::CameraLidar, Pair::LidarRadar, Pair::RadarCamera];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Pair::CameraLidar => "camera-lidar",
            Pair::LidarRadar => "lidar-radar",
            Pair::RadarCamera => "camera-radar",
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Balance between the pairwise and loop-closure terms.
    pub lambda: f64,
    /// Balance between parameter and point-cloud distance within a pair.
    pub lambda_pairwise: f64,
    pub lambda_rotation: f64,
    pub lambda_translation: f64,
    /// Smooth-L1 transition point.
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda: 0.25,
            lambda_pairwise: 0.5,
            lambda_rotation: 1.0,
            lambda_translation: 2.0,
            beta: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.lambda) || !unit(self.lambda_pairwise) {
            return Err(Error::InvalidConfig("lambda weights must lie in [0, 1]".into()));
        }
        if !(self.lambda_rotation > 0.0 && self.lambda_translation > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidConfig("rotation/translation weights and beta must be positive".into()));
        }
        Ok(())
    }
}

/// Camera-lidar, lidar-radar and radar-camera transforms. Pairwise-only
/// runs may leave entries empty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    pub cl: Option<RigidTransform>,
    pub lr: Option<RigidTransform>,
    pub rc: Option<RigidTransform>,
}

impl PredictionSet {
    pub fn full(cl: RigidTransform, lr: RigidTransform, rc: RigidTransform) -> Self {
        PredictionSet { cl: Some(cl), lr: Some(lr), rc: Some(rc) }
    }

    pub fn identity() -> Self {
        Self::full(RigidTransform::IDENTITY, RigidTransform::IDENTITY, RigidTransform::IDENTITY)
    }

    pub fn get(&self, pair: Pair) -> Option<RigidTransform> {
        match pair {
            Pair::CameraLidar => self.cl,
            Pair::LidarRadar => self.lr,
            Pair::RadarCamera => self.rc,
        }
    }

    pub fn set(&mut self, pair: Pair, tf: Option<RigidTransform>) {
        match pair {
            Pair::CameraLidar => self.cl = tf,
            Pair::LidarRadar => self.lr = tf,
            Pair::RadarCamera => self.rc = tf,
        }
    }

    pub fn require(&self, pair: Pair) -> Result<RigidTransform> {
        self.get(pair).ok_or(Error::MissingPair(pair))
    }

    pub fn present(&self) -> impl Iterator<Item = (Pair, RigidTransform)> + '_ {
        Pair::ALL.into_iter().filter_map(|p| self.get(p).map(|t| (p, t)))
    }
}

pub fn smooth_l1(x: f64, beta: f64) -> f64 {
    let a = x.abs();
    if a < beta {
        0.5 * x * x / beta
    } else {
        a - 0.5 * beta
    }
}

pub fn param_loss(pred: &RigidTransform, gt: &RigidTransform, w: &LossWeights) -> f64 {
    let angle = quat_angular_distance(&pred.rotation(), &gt.rotation());
    let dist = translation_distance(pred.translation(), gt.translation());
    w.lambda_rotation * smooth_l1(angle, w.beta) + w.lambda_translation * smooth_l1(dist, w.beta)
}

/// Mean Euclidean distance between the cloud moved by `pred` and by `gt`.
pub fn point_loss(pred: &RigidTransform, gt: &RigidTransform, cloud: &PointCloud) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let sum: f64 = cloud.points().iter().map(|&p| norm(sub(pred.apply(p), gt.apply(p)))).sum();
    Ok(sum / cloud.len() as f64)
}

fn blended(pred: &RigidTransform, gt: &RigidTransform, cloud: &PointCloud, w: &LossWeights) -> Result<f64> {
    let point = point_loss(pred, gt, cloud)?;
    Ok((1.0 - w.lambda_pairwise) * param_loss(pred, gt, w) + w.lambda_pairwise * point)
}

/// Sum of the blended per-pair losses over every pair present in `preds`.
/// `clouds` is indexed by [`Pair::index`].
pub fn pairwise_loss(
    preds: &PredictionSet,
    gts: &PredictionSet,
    clouds: [Option<&PointCloud>; 3],
    w: &LossWeights,
) -> Result<f64> {
    let mut total = 0.0;
    for (pair, pred) in preds.present() {
        let gt = gts.require(pair)?;
        let cloud = clouds[pair.index()].ok_or(Error::EmptyCloud)?;
        total += blended(&pred, &gt, cloud, w)?;
    }
    Ok(total)
}

/// `T_CL * T_LR * T_RC`.
pub fn loop_transform(p: &PredictionSet) -> Result<RigidTransform> {
    let cl = p.require(Pair::CameraLidar)?;
    let lr = p.require(Pair::LidarRadar)?;
    let rc = p.require(Pair::RadarCamera)?;
    Ok(cl * lr * rc)
}

/// Blended loss of the loop transform against the identity.
pub fn loop_loss(p: &PredictionSet, loop_cloud: &PointCloud, w: &LossWeights) -> Result<f64> {
    let lp = loop_transform(p)?;
    blended(&lp, &RigidTransform::IDENTITY, loop_cloud, w)
}

/// `(1 - lambda) * pairwise + lambda * loop`. With `lambda == 0` the loop
/// term is not evaluated, so partial prediction sets are accepted.
pub fn total_loss(
    preds: &PredictionSet,
    gts: &PredictionSet,
    clouds: [Option<&PointCloud>; 3],
    loop_cloud: &PointCloud,
    w: &LossWeights,
) -> Result<f64> {
    let pairwise = pairwise_loss(preds, gts, clouds, w)?;
    if w.lambda == 0.0 {
        return Ok(pairwise);
    }
    Ok((1.0 - w.lambda) * pairwise + w.lambda * loop_loss(preds, loop_cloud, w)?)
}
