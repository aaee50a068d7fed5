//! Rasterizing point clouds into multi-channel depth images.
//!
//! Equirectangular projection covers the whole sphere around the sensor
//! origin; pinhole projection keeps only the frustum in front of a camera
//! looking along `+z`. Both store the range `r` in channel 0 followed by
//! the cloud's auxiliary channels, and resolve pixel collisions by keeping
//! the nearest point (ties go to the lower point index).

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::cloud::{ChannelSchema, PointCloud};
use crate::error::{Error, Result};
use crate::transform::{RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    /// Azimuth in `(-pi, pi]`.
    pub azimuth: f64,
    /// Elevation in `[-pi/2, pi/2]`.
    pub elevation: f64,
    pub range: f64,
}

pub fn cart_to_spherical(p: Vec3) -> SphericalCoord {
    let range = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let mut azimuth = p[1].atan2(p[0]);
    if azimuth == -PI {
        azimuth = PI;
    }
    let elevation = if range > 0.0 { (p[2] / range).clamp(-1.0, 1.0).asin() } else { 0.0 };
    SphericalCoord { azimuth, elevation, range }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl PinholeIntrinsics {
    /// Square pixels with the principal point at the image center and the
    /// given horizontal field of view.
    pub fn from_hfov(width: usize, height: usize, hfov: f64) -> Self {
        let f = 0.5 * width as f64 / (0.5 * hfov).tan();
        PinholeIntrinsics { fx: f, fy: f, cx: 0.5 * width as f64, cy: 0.5 * height as f64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProjectionMode {
    Equirectangular,
    Pinhole(PinholeIntrinsics),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub width: usize,
    pub height: usize,
    pub schema: ChannelSchema,
    pub mode: ProjectionMode,
}

impl ProjectionConfig {
    pub fn equirect(height: usize, width: usize, schema: ChannelSchema) -> Self {
        ProjectionConfig {
            width: width.max(1),
            height: height.max(1),
            schema,
            mode: ProjectionMode::Equirectangular,
        }
    }

    pub fn pinhole(height: usize, width: usize, schema: ChannelSchema, k: PinholeIntrinsics) -> Self {
        ProjectionConfig {
            width: width.max(1),
            height: height.max(1),
            schema,
            mode: ProjectionMode::Pinhole(k),
        }
    }

    pub fn channels(&self) -> usize {
        self.schema.raster_channels()
    }

    fn check(&self, cloud: &PointCloud) -> Result<()> {
        if cloud.schema() != self.schema {
            return Err(Error::SchemaMismatch { expected: self.schema, found: cloud.schema() });
        }
        Ok(())
    }
}

/// Rasterization size used by the final pipeline stage (rows, columns).
pub const FULL_RASTER: (usize, usize) = (1024, 2048);
/// Size the full raster is resampled to for downstream consumers.
pub const RESIZED_RASTER: (usize, usize) = (512, 1024);

/// `u = floor(theta_norm * W) mod W`, `v = clamp(floor((1 - phi_norm) * H))`.
pub fn equirect_pixel(s: &SphericalCoord, width: usize, height: usize) -> (usize, usize) {
    let theta_norm = (s.azimuth + PI) / (2.0 * PI);
    let phi_norm = (s.elevation + FRAC_PI_2) / PI;
    let u = ((theta_norm * width as f64).floor() as i64).rem_euclid(width as i64) as usize;
    let v = ((1.0 - phi_norm) * height as f64).floor().clamp(0.0, (height - 1) as f64) as usize;
    (u, v)
}

fn pinhole_pixel(p: Vec3, k: &PinholeIntrinsics, width: usize, height: usize) -> Option<(usize, usize)> {
    if p[2] <= 0.0 {
        return None;
    }
    let u = (k.fx * p[0] / p[2] + k.cx).floor();
    let v = (k.fy * p[1] / p[2] + k.cy).floor();
    if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
        return None;
    }
    Some((u as usize, v as usize))
}

/// `H x W x C` raster of `f32`, row-major with interleaved channels.
/// Unoccupied pixels are zero in every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(channels >= 1);
        DepthImage { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width * channels, "raster size");
        DepthImage { height, width, channels, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, v: usize, u: usize, c: usize) -> f32 {
        self.data[(v * self.width + u) * self.channels + c]
    }

    pub fn set(&mut self, v: usize, u: usize, c: usize, value: f32) {
        self.data[(v * self.width + u) * self.channels + c] = value;
    }

    pub fn pixel(&self, v: usize, u: usize) -> &[f32] {
        let i = (v * self.width + u) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn range_at(&self, index: usize) -> f32 {
        self.data[index * self.channels]
    }

    pub fn occupied(&self) -> usize {
        (0..self.height * self.width).filter(|&i| self.range_at(i) > 0.0).count()
    }

    /// Range channel only.
    pub fn range_image(&self) -> DepthImage {
        let data = (0..self.height * self.width).map(|i| self.range_at(i)).collect();
        DepthImage::from_vec(self.height, self.width, 1, data)
    }
}

fn rasterize(
    cloud: &PointCloud,
    cfg: &ProjectionConfig,
    pixel_of: impl Fn(Vec3) -> Option<(usize, usize)>,
) -> DepthImage {
    let (h, w, c) = (cfg.height, cfg.width, cfg.channels());
    let mut best = vec![f64::INFINITY; h * w];
    let mut img = DepthImage::zeros(h, w, c);
    for (i, &p) in cloud.points().iter().enumerate() {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if r <= 0.0 || !r.is_finite() {
            continue;
        }
        let Some((u, v)) = pixel_of(p) else { continue };
        let idx = v * w + u;
        if r < best[idx] {
            best[idx] = r;
            let px = &mut img.data[idx * c..(idx + 1) * c];
            px[0] = r as f32;
            for (dst, &src) in px[1..].iter_mut().zip(cloud.channels(i)) {
                *dst = src as f32;
            }
        }
    }
    img
}

pub fn project_equirect(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<DepthImage> {
    cfg.check(cloud)?;
    Ok(rasterize(cloud, cfg, |p| Some(equirect_pixel(&cart_to_spherical(p), cfg.width, cfg.height))))
}

/// Pinhole projection; points behind the camera or outside the image are
/// dropped.
pub fn project_pinhole(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<DepthImage> {
    cfg.check(cloud)?;
    let ProjectionMode::Pinhole(k) = cfg.mode else {
        return Err(Error::InvalidConfig("pinhole projection needs intrinsics".into()));
    };
    Ok(rasterize(cloud, cfg, |p| pinhole_pixel(p, &k, cfg.width, cfg.height)))
}

/// Projects with whichever mode `cfg` selects.
pub fn project(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<DepthImage> {
    match cfg.mode {
        ProjectionMode::Equirectangular => project_equirect(cloud, cfg),
        ProjectionMode::Pinhole(_) => project_pinhole(cloud, cfg),
    }
}

/// Number of points with `r > 0` that the projection could not place.
pub fn count_dropped(cloud: &PointCloud, cfg: &ProjectionConfig) -> usize {
    cloud
        .points()
        .iter()
        .filter(|&&p| {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            r > 0.0
                && match cfg.mode {
                    ProjectionMode::Equirectangular => false,
                    ProjectionMode::Pinhole(k) => pinhole_pixel(p, &k, cfg.width, cfg.height).is_none(),
                }
        })
        .count()
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_bilinear(img: &DepthImage, new_width: usize, new_height: usize) -> DepthImage {
    let (nw, nh) = (new_width.max(1), new_height.max(1));
    let c = img.channels;
    let sx = img.width as f64 / nw as f64;
    let sy = img.height as f64 / nh as f64;
    let sample = |pos: f64, len: usize| {
        let p = pos.clamp(0.0, (len - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, p - i0 as f64)
    };
    let mut out = DepthImage::zeros(nh, nw, c);
    for v in 0..nh {
        let (y0, y1, fy) = sample((v as f64 + 0.5) * sy - 0.5, img.height);
        for u in 0..nw {
            let (x0, x1, fx) = sample((u as f64 + 0.5) * sx - 0.5, img.width);
            for ch in 0..c {
                let a = img.get(y0, x0, ch) as f64;
                let b = img.get(y0, x1, ch) as f64;
                let d = img.get(y1, x0, ch) as f64;
                let e = img.get(y1, x1, ch) as f64;
                let top = a + (b - a) * fx;
                let bot = d + (e - d) * fx;
                out.set(v, u, ch, (top + (bot - top) * fy) as f32);
            }
        }
    }
    out
}

/// Reusable per-pixel z-buffer for range-only equirectangular
/// rasterization of transformed points. Used in the estimator's inner loop
/// where allocating a full [`DepthImage`] per evaluation would dominate.
#[derive(Debug, Clone)]
pub struct RangeScratch {
    width: usize,
    height: usize,
    generation: u32,
    stamp: Vec<u32>,
    best: Vec<f64>,
    touched: Vec<u32>,
}

impl RangeScratch {
    pub fn new(height: usize, width: usize) -> Self {
        RangeScratch {
            width,
            height,
            generation: 0,
            stamp: vec![0; width * height],
            best: vec![0.0; width * height],
            touched: Vec::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Rasterizes `tf` applied to `points` and calls `visit(pixel, range)`
    /// once per occupied pixel with the nearest range, in first-touch order.
    pub fn rasterize(&mut self, points: &[Vec3], tf: &RigidTransform, mut visit: impl FnMut(usize, f64)) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        self.touched.clear();
        let g = self.generation;
        for &p in points {
            let q = tf.apply(p);
            let s = cart_to_spherical(q);
            if s.range <= 0.0 || !s.range.is_finite() {
                continue;
            }
            let (u, v) = equirect_pixel(&s, self.width, self.height);
            let idx = v * self.width + u;
            if self.stamp[idx] != g {
                self.stamp[idx] = g;
                self.best[idx] = s.range;
                self.touched.push(idx as u32);
            } else if s.range < self.best[idx] {
                self.best[idx] = s.range;
            }
        }
        for &idx in &self.touched {
            visit(idx as usize, self.best[idx as usize]);
        }
    }
}
