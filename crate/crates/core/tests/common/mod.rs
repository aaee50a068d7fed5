#![allow(dead_code)]

use loopcal::cloud::{ChannelSchema, PointCloud};
use loopcal::transform::{EulerPose, RigidTransform, Vec3};
use proptest::prelude::*;
use std::f64::consts::PI;

pub fn arb_pose(max_t: f64) -> impl Strategy<Value = EulerPose> {
    (-PI..PI, -PI / 2.0..PI / 2.0, -PI..PI, -max_t..max_t, -max_t..max_t, -max_t..max_t)
        .prop_map(|(roll, pitch, yaw, tx, ty, tz)| EulerPose { roll, pitch, yaw, tx, ty, tz })
}

pub fn arb_transform() -> impl Strategy<Value = RigidTransform> {
    arb_pose(10.0).prop_map(|e| RigidTransform::from_euler(&e))
}

pub fn arb_point(max: f64) -> impl Strategy<Value = Vec3> {
    (-max..max, -max..max, -max..max).prop_map(|(x, y, z)| [x, y, z])
}

pub fn arb_points(max: f64, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(arb_point(max), n)
}

pub fn lidar_cloud(points: &[Vec3]) -> PointCloud {
    let mut c = PointCloud::new(ChannelSchema::Lidar);
    for (i, &p) in points.iter().enumerate() {
        c.push(p, &[(i % 7) as f64 * 0.1]);
    }
    c
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn radar_cloud(points: &[Vec3]) -> PointCloud {
    let mut c = PointCloud::new(ChannelSchema::Radar);
    for (i, &p) in points.iter().enumerate() {
        c.push(p, &[i as f64, 0.5, 0.0]);
    }
    c
}

/// A frame with an empty camera image and the given lidar/radar points.
pub fn bare_frame(lidar: &[Vec3], radar: &[Vec3]) -> loopcal::FrameSet {
    use loopcal::{CameraDepth, DepthImage, Extrinsics, FrameSet, PinholeIntrinsics};
    let camera = CameraDepth {
        image: DepthImage::zeros(4, 4, 1),
        intrinsics: PinholeIntrinsics::from_hfov(4, 4, std::f64::consts::FRAC_PI_2),
    };
    FrameSet::new(0, camera, lidar_cloud(lidar), radar_cloud(radar), 1, Extrinsics::default())
}
