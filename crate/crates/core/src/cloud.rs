//! Point clouds with per-sensor auxiliary channels.

use serde::{Deserialize, Serialize};

use crate::transform::{RigidTransform, Vec3};

/// Which auxiliary channels ride along with each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSchema {
    /// Geometry only, e.g. a back-projected camera depth image.
    Range,
    /// Reflection intensity.
    Lidar,
    /// Radar cross-section (dB), compensated radial velocity (m/s) and
    /// time (frame offset within an accumulated scan).
    Radar,
}

impl ChannelSchema {
    pub fn extra_channels(self) -> usize {
        match self {
            ChannelSchema::Range => 0,
            ChannelSchema::Lidar => 1,
            ChannelSchema::Radar => 3,
        }
    }

    /// Values stored per point on disk: x, y, z followed by the channels.
    pub fn record_width(self) -> usize {
        3 + self.extra_channels()
    }

    /// Depth-image channels: range followed by the auxiliary channels.
    pub fn raster_channels(self) -> usize {
        1 + self.extra_channels()
    }

    pub fn channel_names(self) -> &'static [&'static str] {
        match self {
            ChannelSchema::Range => &["range"],
            ChannelSchema::Lidar => &["range", "intensity"],
            ChannelSchema::Radar => &["range", "rcs", "velocity", "time"],
        }
    }
}

/// Index of the time channel inside a radar point's auxiliary channels.
pub const RADAR_TIME_CHANNEL: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    schema: ChannelSchema,
    points: Vec<Vec3>,
    channels: Vec<f64>,
}

impl PointCloud {
    pub fn new(schema: ChannelSchema) -> Self {
        PointCloud { schema, points: Vec::new(), channels: Vec::new() }
    }

    pub fn with_capacity(schema: ChannelSchema, n: usize) -> Self {
        PointCloud {
            schema,
            points: Vec::with_capacity(n),
            channels: Vec::with_capacity(n * schema.extra_channels()),
        }
    }

    /// Geometry-only cloud.
    pub fn from_points(points: Vec<Vec3>) -> Self {
        PointCloud { schema: ChannelSchema::Range, points, channels: Vec::new() }
    }

    /// # Panics
    /// If `channels` does not match the schema width.
    pub fn push(&mut self, p: Vec3, channels: &[f64]) {
        assert_eq!(channels.len(), self.schema.extra_channels(), "channel count");
        self.points.push(p);
        self.channels.extend_from_slice(channels);
    }

    pub fn schema(&self) -> ChannelSchema {
        self.schema
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec3 {
        self.points[i]
    }

    pub fn channels(&self, i: usize) -> &[f64] {
        let c = self.schema.extra_channels();
        &self.channels[i * c..(i + 1) * c]
    }


    /// Applies `tf` to every point; channels are copied unchanged.
    pub fn transformed(&self, tf: &RigidTransform) -> PointCloud {
        PointCloud {
            schema: self.schema,
            points: self.points.iter().map(|&p| tf.apply(p)).collect(),
            channels: self.channels.clone(),
        }
    }

    /// Points at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let mut out = PointCloud::with_capacity(self.schema, indices.len());
        for &i in indices {
            out.push(self.points[i], self.channels(i));
        }
        out
    }

    /// Every `stride`-th point, starting at the first.
    pub fn strided(&self, stride: usize) -> PointCloud {
        let idx: Vec<usize> = (0..self.len()).step_by(stride.max(1)).collect();
        self.select(&idx)
    }

    /// Thins the cloud to at most `max_points` with a uniform stride.
    pub fn thinned(&self, max_points: usize) -> PointCloud {
        if max_points == 0 || self.len() <= max_points {
            return self.clone();
        }
        self.strided(self.len().div_ceil(max_points))
    }

    pub fn extend(&mut self, other: &PointCloud) {
        assert_eq!(self.schema, other.schema, "schema");
        self.points.extend_from_slice(&other.points);
        self.channels.extend_from_slice(&other.channels);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_keeps_channels() {
        let mut c = PointCloud::new(ChannelSchema::Radar);
        c.push([1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        let t = c.transformed(&RigidTransform::from_translation([1.0, 0.0, 0.0]));
        assert_eq!(t.point(0), [2.0, 2.0, 3.0]);
        assert_eq!(t.channels(0), &[4.0, 5.0, 6.0]);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn thinning() {
        let c = PointCloud::from_points((0..10).map(|i| [i as f64, 0.0, 0.0]).collect());
        assert_eq!(c.thinned(5).len(), 5);
        assert_eq!(c.thinned(3).len(), 3);
        assert_eq!(c.thinned(0).len(), 10);
        assert_eq!(c.thinned(100).len(), 10);
    }

    #[test]
    #[should_panic(expected = "channel count")]
    fn push_checks_width() {
        PointCloud::new(ChannelSchema::Lidar).push([0.0; 3], &[]);
    }
}
