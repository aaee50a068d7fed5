//! One synchronized camera/lidar/radar frame.
//!
//! Lidar and radar clouds are stored in the camera body frame (x forward,
//! y left, z up, origin at the camera center), i.e. already mapped through
//! the fixed extrinsics. A miscalibration `M` displaces a sensor's data to
//! `M * p`, so the frame's effective extrinsic becomes `M * T_fixed`.

use serde::{Deserialize, Serialize};

use crate::cloud::{ChannelSchema, PointCloud};
use crate::error::Result;
use crate::loss::PredictionSet;
use crate::projection::{project_equirect, DepthImage, PinholeIntrinsics, ProjectionConfig};
use crate::transform::{Quaternion, RigidTransform};

/// Rotation taking optical coordinates (x right, y down, z forward) into the
/// camera body frame (x forward, y left, z up).
pub fn body_from_optical() -> RigidTransform {
    let m = [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]];
    RigidTransform::from_rotation(Quaternion::from_matrix(&m))
}

/// Pinhole range image (channel 0 = Euclidean range) plus its intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraDepth {
    pub image: DepthImage,
    pub intrinsics: PinholeIntrinsics,
}

impl CameraDepth {
    pub fn projection(&self) -> ProjectionConfig {
        ProjectionConfig::pinhole(self.image.height(), self.image.width(), ChannelSchema::Range, self.intrinsics)
    }

    /// Lifts every occupied pixel center back to 3D in the body frame.
    pub fn back_project(&self) -> PointCloud {
        let k = &self.intrinsics;
        let to_body = body_from_optical();
        let mut pts = Vec::new();
        for v in 0..self.image.height() {
            for u in 0..self.image.width() {
                let r = self.image.get(v, u, 0) as f64;
                if r <= 0.0 {
                    continue;
                }
                let d = [(u as f64 + 0.5 - k.cx) / k.fx, (v as f64 + 0.5 - k.cy) / k.fy, 1.0];
                let n = (d[0] * d[0] + d[1] * d[1] + 1.0).sqrt();
                pts.push(to_body.apply([d[0] * r / n, d[1] * r / n, r / n]));
            }
        }
        PointCloud::from_points(pts)
    }
}

/// Ground-truth camera-from-sensor extrinsics of the rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub camera_lidar: RigidTransform,
    pub camera_radar: RigidTransform,
}

impl Default for Extrinsics {
    fn default() -> Self {
        Extrinsics { camera_lidar: RigidTransform::IDENTITY, camera_radar: RigidTransform::IDENTITY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub index: usize,
    pub camera: CameraDepth,
    /// Back-projected camera depth, body frame.
    pub camera_cloud: PointCloud,
    pub lidar: PointCloud,
    pub radar: PointCloud,
    /// Number of radar sweeps accumulated into `radar`.
    pub radar_frames: usize,
    pub extrinsics: Extrinsics,
    pub mis_lidar: RigidTransform,
    pub mis_radar: RigidTransform,
}

impl FrameSet {
    pub fn new(
        index: usize,
        camera: CameraDepth,
        lidar: PointCloud,
        radar: PointCloud,
        radar_frames: usize,
        extrinsics: Extrinsics,
    ) -> Self {
        let camera_cloud = camera.back_project();
        FrameSet {
            index,
            camera,
            camera_cloud,
            lidar,
            radar,
            radar_frames,
            extrinsics,
            mis_lidar: RigidTransform::IDENTITY,
            mis_radar: RigidTransform::IDENTITY,
        }
    }

    /// Pairwise regression targets implied by the applied miscalibrations:
    /// `T_CL = M_L^-1`, `T_LR = M_L M_R^-1`, `T_RC = M_R`.
    pub fn ground_truth(&self) -> PredictionSet {
        PredictionSet::full(
            self.mis_lidar.inverse(),
            self.mis_lidar * self.mis_radar.inverse(),
            self.mis_radar,
        )
    }

    /// Camera-from-sensor extrinsics the stored data currently corresponds
    /// to: `T_mis * T_fixed`.
    pub fn effective_extrinsics(&self) -> Extrinsics {
        Extrinsics {
            camera_lidar: self.mis_lidar * self.extrinsics.camera_lidar,
            camera_radar: self.mis_radar * self.extrinsics.camera_radar,
        }
    }

    pub fn camera_raster(&self, height: usize, width: usize) -> Result<DepthImage> {
        project_equirect(&self.camera_cloud, &ProjectionConfig::equirect(height, width, ChannelSchema::Range))
    }

    pub fn lidar_raster(&self, height: usize, width: usize) -> Result<DepthImage> {
        project_equirect(&self.lidar, &ProjectionConfig::equirect(height, width, ChannelSchema::Lidar))
    }

    pub fn radar_raster(&self, height: usize, width: usize) -> Result<DepthImage> {
        project_equirect(&self.radar, &ProjectionConfig::equirect(height, width, ChannelSchema::Radar))
    }
}
