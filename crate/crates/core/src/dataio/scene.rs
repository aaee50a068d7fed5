//! Ray-cast synthetic scenes: a ground plane plus boxes and vertical
//! cylinders, observed by a pinhole depth camera, a spinning lidar and a
//! sparse front radar.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{ChannelSchema, PointCloud};
use crate::error::{Error, Result};
use crate::frame::{body_from_optical, CameraDepth, Extrinsics, FrameSet};
use crate::pipeline::accumulate_radar;
use crate::projection::{project_pinhole, PinholeIntrinsics, ProjectionConfig};
use crate::transform::{EulerPose, RigidTransform, Vec3};

const HIT_EPS: f64 = 1e-6;
const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub intensity: f64,
    /// Radar cross-section, dB.
    pub rcs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    /// Horizontal plane `z = height`.
    Plane { height: f64, surface: Surface },
    /// Box standing upright, rotated by `yaw` about its vertical axis.
    Box { center: Vec3, half_extents: Vec3, yaw: f64, surface: Surface },
    /// Vertical cylinder with flat caps.
    Cylinder { center: [f64; 2], radius: f64, z_min: f64, z_max: f64, surface: Surface },
}

impl Primitive {
    pub fn surface(&self) -> Surface {
        match *self {
            Primitive::Plane { surface, .. }
            | Primitive::Box { surface, .. }
            | Primitive::Cylinder { surface, .. } => surface,
        }
    }

    /// Smallest positive ray parameter at which `o + t d` hits the surface.
    pub fn intersect(&self, o: Vec3, d: Vec3) -> Option<f64> {
        match *self {
            Primitive::Plane { height, .. } => {
                if d[2] == 0.0 {
                    return None;
                }
                let t = (height - o[2]) / d[2];
                (t > HIT_EPS).then_some(t)
            }
            Primitive::Box { center, half_extents, yaw, .. } => {
                let (s, c) = (-yaw).sin_cos();
                let rot = |v: Vec3| [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
                let lo = rot([o[0] - center[0], o[1] - center[1], o[2] - center[2]]);
                let ld = rot(d);
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..3 {
                    if ld[i].abs() < 1e-15 {
                        if lo[i].abs() > half_extents[i] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-half_extents[i] - lo[i]) / ld[i];
                    let b = (half_extents[i] - lo[i]) / ld[i];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                if t0 > t1 {
                    return None;
                }
                if t0 > HIT_EPS {
                    Some(t0)
                } else if t1 > HIT_EPS {
                    Some(t1)
                } else {
                    None
                }
            }
            Primitive::Cylinder { center, radius, z_min, z_max, .. } => {
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > HIT_EPS && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let (px, py) = (o[0] - center[0], o[1] - center[1]);
                let a = d[0] * d[0] + d[1] * d[1];
                if a > 0.0 {
                    let b = 2.0 * (px * d[0] + py * d[1]);
                    let c = px * px + py * py - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                            let z = o[2] + t * d[2];
                            if z >= z_min && z <= z_max {
                                consider(t);
                            }
                        }
                    }
                }
                if d[2] != 0.0 {
                    for zc in [z_min, z_max] {
                        let t = (zc - o[2]) / d[2];
                        let (x, y) = (px + t * d[0], py + t * d[1]);
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarModel {
    pub beams: usize,
    pub columns: usize,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    pub max_range: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        LidarModel { beams: 128, columns: 2048, min_elevation_deg: -25.0, max_elevation_deg: 10.0, max_range: 120.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarModel {
    /// Returns per sweep before dropout.
    pub density: usize,
    /// Sweeps accumulated into one frame.
    pub frames: usize,
    pub half_azimuth_fov_deg: f64,
    pub half_elevation_fov_deg: f64,
    pub max_range: f64,
    pub rcs_sigma_db: f64,
}

impl Default for RadarModel {
    fn default() -> Self {
        RadarModel {
            density: 400,
            frames: 5,
            half_azimuth_fov_deg: 50.0,
            half_elevation_fov_deg: 10.0,
            max_range: 100.0,
            rcs_sigma_db: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub max_range: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel { width: 640, height: 480, hfov_deg: 90.0, max_range: 120.0 }
    }
}

impl CameraModel {
    pub fn intrinsics(&self) -> PinholeIntrinsics {
        PinholeIntrinsics::from_hfov(self.width, self.height, self.hfov_deg.to_radians())
    }
}

/// Range noise standard deviations, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub camera: f64,
    pub lidar: f64,
    pub radar: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { camera: 0.0, lidar: 0.01, radar: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub lidar: LidarModel,
    #[serde(default)]
    pub radar: RadarModel,
    #[serde(default)]
    pub camera: CameraModel,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub radar_dropout: f64,
    /// Forward ego displacement between radar sweeps, meters.
    #[serde(default = "default_ego_step")]
    pub ego_step: f64,
}

fn default_ego_step() -> f64 {
    0.5
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl SceneSpec {
    /// Ground plane only.
    pub fn ground_only(seed: u64) -> Self {
        SceneSpec {
            seed,
            primitives: vec![Primitive::Plane { height: 0.0, surface: Surface { intensity: 0.2, rcs: -5.0 } }],
            lidar: LidarModel::default(),
            radar: RadarModel::default(),
            camera: CameraModel::default(),
            noise: NoiseModel::default(),
            radar_dropout: 0.0,
            ego_step: default_ego_step(),
        }
    }

    /// Ground plane with randomly placed boxes and poles all around the
    /// vehicle, with a guaranteed share of them in front of it.
    pub fn random(seed: u64) -> Self {
        let mut spec = Self::ground_only(seed);
        let mut rng = stream_rng(seed, 0);
        let place = |rng: &mut ChaCha8Rng, front: bool| {
            let az = if front { rng.gen_range(-0.7..0.7) } else { rng.gen_range(-PI..PI) };
            let dist = rng.gen_range(7.0..32.0);
            [3.0 + dist * f64::cos(az), dist * f64::sin(az)]
        };
        for i in 0..16 {
            let [x, y] = place(&mut rng, i < 6);
            let half = [rng.gen_range(0.8..3.0), rng.gen_range(0.8..3.0), rng.gen_range(0.7..3.5)];
            spec.primitives.push(Primitive::Box {
                center: [x, y, half[2]],
                half_extents: half,
                yaw: rng.gen_range(-PI..PI),
                surface: Surface { intensity: rng.gen_range(0.3..0.9), rcs: rng.gen_range(0.0..20.0) },
            });
        }
        for i in 0..12 {
            let [x, y] = place(&mut rng, i < 4);
            spec.primitives.push(Primitive::Cylinder {
                center: [x, y],
                radius: rng.gen_range(0.15..0.6),
                z_min: 0.0,
                z_max: rng.gen_range(2.0..7.0),
                surface: Surface { intensity: rng.gen_range(0.3..0.9), rcs: rng.gen_range(5.0..25.0) },
            });
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        if !(n.camera >= 0.0 && n.lidar >= 0.0 && n.radar >= 0.0) {
            return Err(Error::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.radar_dropout) {
            return Err(Error::InvalidConfig("radar dropout must lie in [0, 1)".into()));
        }
        if self.radar.frames == 0 {
            return Err(Error::InvalidConfig("radar must accumulate at least one sweep".into()));
        }
        Ok(())
    }

    fn cast(&self, o: Vec3, d: Vec3, max_range: f64) -> Option<(f64, Surface)> {
        let mut best: Option<(f64, Surface)> = None;
        for p in &self.primitives {
            if let Some(t) = p.intersect(o, d) {
                if t <= max_range && best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, p.surface()));
                }
            }
        }
        best
    }
}

/// Sensor poses in the vehicle frame (x forward, y left, z up, origin on
/// the ground).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRig {
    pub camera: RigidTransform,
    pub lidar: RigidTransform,
    pub radar: RigidTransform,
}

impl Default for SensorRig {
    fn default() -> Self {
        let pose = |r: f64, p: f64, y: f64, t: Vec3| {
            RigidTransform::from_euler(&EulerPose {
                roll: r.to_radians(),
                pitch: p.to_radians(),
                yaw: y.to_radians(),
                tx: t[0],
                ty: t[1],
                tz: t[2],
            })
        };
        SensorRig {
            camera: pose(0.0, 2.0, 0.0, [1.6, 0.0, 1.5]),
            lidar: pose(0.5, -1.0, 3.0, [1.2, 0.1, 1.9]),
            radar: pose(0.0, 1.0, -1.5, [3.6, -0.2, 0.6]),
        }
    }
}

impl SensorRig {
    /// All three sensors at the same pose.
    pub fn colocated(pose: RigidTransform) -> Self {
        SensorRig { camera: pose, lidar: pose, radar: pose }
    }

    pub fn extrinsics(&self) -> Extrinsics {
        let cam_inv = self.camera.inverse();
        Extrinsics { camera_lidar: cam_inv * self.lidar, camera_radar: cam_inv * self.radar }
    }

    fn moved(&self, ego: &RigidTransform) -> SensorRig {
        SensorRig { camera: *ego * self.camera, lidar: *ego * self.lidar, radar: *ego * self.radar }
    }
}

fn dir_from_angles(az: f64, el: f64) -> Vec3 {
    [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
}

fn noisy(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

fn render_camera(spec: &SceneSpec, pose: &RigidTransform, rng: &mut ChaCha8Rng) -> Result<CameraDepth> {
    let cam = &spec.camera;
    let k = cam.intrinsics();
    let to_body = body_from_optical();
    let rays: Vec<Vec3> = (0..cam.height)
        .flat_map(|v| (0..cam.width).map(move |u| (u, v)))
        .map(|(u, v)| {
            let d = [(u as f64 + 0.5 - k.cx) / k.fx, (v as f64 + 0.5 - k.cy) / k.fy, 1.0];
            let n = (d[0] * d[0] + d[1] * d[1] + 1.0).sqrt();
            [d[0] / n, d[1] / n, 1.0 / n]
        })
        .collect();
    let origin = pose.translation();
    let hits: Vec<Option<f64>> = rays
        .par_iter()
        .map(|&d| {
            let world = pose.rotation().rotate(to_body.apply(d));
            spec.cast(origin, world, cam.max_range).map(|(t, _)| t)
        })
        .collect();
    let mut cloud = PointCloud::with_capacity(ChannelSchema::Range, rays.len());
    for (d, hit) in rays.iter().zip(hits) {
        if let Some(t) = hit {
            let r = (t + noisy(rng, spec.noise.camera)).max(1e-3);
            cloud.push([d[0] * r, d[1] * r, d[2] * r], &[]);
        }
    }
    let cfg = ProjectionConfig::pinhole(cam.height, cam.width, ChannelSchema::Range, k);
    Ok(CameraDepth { image: project_pinhole(&cloud, &cfg)?, intrinsics: k })
}

/// Lidar sweep in the lidar frame.
fn render_lidar(spec: &SceneSpec, pose: &RigidTransform, rng: &mut ChaCha8Rng) -> PointCloud {
    let m = &spec.lidar;
    let (lo, hi) = (m.min_elevation_deg.to_radians(), m.max_elevation_deg.to_radians());
    let rays: Vec<Vec3> = (0..m.beams)
        .flat_map(|b| (0..m.columns).map(move |c| (b, c)))
        .map(|(b, c)| {
            let az = -PI + (c as f64 + 0.5) * 2.0 * PI / m.columns as f64;
            let el = lo + (b as f64 + 0.5) * (hi - lo) / m.beams as f64;
            dir_from_angles(az, el)
        })
        .collect();
    let origin = pose.translation();
    let hits: Vec<Option<(f64, Surface)>> =
        rays.par_iter().map(|&d| spec.cast(origin, pose.rotation().rotate(d), m.max_range)).collect();
    let mut cloud = PointCloud::with_capacity(ChannelSchema::Lidar, rays.len());
    for (d, hit) in rays.iter().zip(hits) {
        if let Some((t, s)) = hit {
            let r = (t + noisy(rng, spec.noise.lidar)).max(1e-3);
            cloud.push([d[0] * r, d[1] * r, d[2] * r], &[s.intensity]);
        }
    }
    cloud
}

/// One radar sweep in the radar frame; time channel left at zero.
fn render_radar_sweep(spec: &SceneSpec, pose: &RigidTransform, rng: &mut ChaCha8Rng) -> PointCloud {
    let m = &spec.radar;
    let (ha, he) = (m.half_azimuth_fov_deg.to_radians(), m.half_elevation_fov_deg.to_radians());
    let origin = pose.translation();
    let mut cloud = PointCloud::with_capacity(ChannelSchema::Radar, m.density);
    let mut hits = 0;
    let mut attempts = 0;
    while hits < m.density && attempts < 20 * m.density.max(1) {
        attempts += 1;
        let az = if ha > 0.0 { rng.gen_range(-ha..=ha) } else { 0.0 };
        let el = if he > 0.0 { rng.gen_range(-he..=he) } else { 0.0 };
        let d = dir_from_angles(az, el);
        let Some((t, s)) = spec.cast(origin, pose.rotation().rotate(d), m.max_range) else { continue };
        hits += 1;
        let r = (t + noisy(rng, spec.noise.radar)).max(1e-3);
        let rcs = s.rcs + noisy(rng, m.rcs_sigma_db);
        if rng.gen::<f64>() < spec.radar_dropout {
            continue;
        }
        cloud.push([d[0] * r, d[1] * r, d[2] * r], &[rcs, 0.0, 0.0]);
    }
    cloud
}

/// Renders one frame with the vehicle at `ego` in the scene.
pub fn render_frame(spec: &SceneSpec, rig: &SensorRig, ego: &RigidTransform, index: usize) -> Result<FrameSet> {
    spec.validate()?;
    let stream = 1 + 8 * index as u64;
    let sensors = rig.moved(ego);
    let extrinsics = rig.extrinsics();

    let camera = render_camera(spec, &sensors.camera, &mut stream_rng(spec.seed, stream))?;
    let lidar = render_lidar(spec, &sensors.lidar, &mut stream_rng(spec.seed, stream + 1))
        .transformed(&extrinsics.camera_lidar);

    let mut radar_rng = stream_rng(spec.seed, stream + 2);
    let mut sweeps = Vec::with_capacity(spec.radar.frames);
    let mut poses = Vec::with_capacity(spec.radar.frames);
    for f in 0..spec.radar.frames {
        let back = RigidTransform::from_translation([-spec.ego_step * f as f64, 0.0, 0.0]);
        let radar_pose = *ego * back * rig.radar;
        sweeps.push(render_radar_sweep(spec, &radar_pose, &mut radar_rng));
        poses.push(radar_pose);
    }
    let radar = accumulate_radar(&sweeps, &poses)?.transformed(&extrinsics.camera_radar);

    let frame = FrameSet::new(index, camera, lidar, radar, spec.radar.frames, extrinsics);
    for (sensor, count) in
        [("camera", frame.camera_cloud.len()), ("lidar", frame.lidar.len()), ("radar", frame.radar.len())]
    {
        if count < MIN_POINTS {
            return Err(Error::DegenerateScene { sensor, count });
        }
    }
    Ok(frame)
}

pub fn generate_scene(spec: &SceneSpec, rig: &SensorRig) -> Result<FrameSet> {
    render_frame(spec, rig, &RigidTransform::IDENTITY, 0)
}

/// Frames of a vehicle driving forward `step` meters per frame through the
/// same static scene.
pub fn generate_sequence(spec: &SceneSpec, rig: &SensorRig, frames: usize, step: f64) -> Result<Vec<FrameSet>> {
    (0..frames)
        .map(|k| render_frame(spec, rig, &RigidTransform::from_translation([step * k as f64, 0.0, 0.0]), k))
        .collect()
}
