//! Synthetic miscalibrations and the staged bounds used for iterative
//! refinement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameSet;
use crate::transform::{EulerPose, RigidTransform};

/// Per-axis box: translations in meters, rotations in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiscalBounds {
    pub max_translation: f64,
    pub max_rotation: f64,
}

impl MiscalBounds {
    pub fn new(max_translation: f64, max_rotation: f64) -> Self {
        MiscalBounds { max_translation, max_rotation }
    }

    pub fn from_degrees(max_translation: f64, max_rotation_deg: f64) -> Self {
        Self::new(max_translation, max_rotation_deg.to_radians())
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_translation >= 0.0 && self.max_rotation >= 0.0) {
            return Err(Error::InvalidConfig(format!("negative miscalibration bounds {self:?}")));
        }
        Ok(())
    }

    /// Half-widths of the box in Euler-pose coordinate order.
    pub fn half_widths(&self) -> [f64; 6] {
        let (r, t) = (self.max_rotation, self.max_translation);
        [r, r, r, t, t, t]
    }

    /// Whether the Euler coordinates of `tf` fall inside the box.
    pub fn contains(&self, tf: &RigidTransform) -> bool {
        let e = tf.to_euler().to_array();
        e.iter().zip(self.half_widths()).all(|(x, h)| x.abs() <= h + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPreset {
    pub name: String,
    pub stages: Vec<MiscalBounds>,
    /// Rigid platforms aggregate predictions over the sequence.
    pub rigid: bool,
}

const REFINEMENT_STAGES: [(f64, f64); 4] = [(1.0, 20.0), (0.5, 5.0), (0.2, 1.0), (0.05, 0.5)];

impl ScenarioPreset {
    pub fn new(name: &str, stages: Vec<MiscalBounds>, rigid: bool) -> Result<Self> {
        let p = ScenarioPreset { name: name.to_string(), stages, rigid };
        p.validate()?;
        Ok(p)
    }

    /// Single stage at +-20 cm / +-1 deg.
    pub fn single() -> Self {
        ScenarioPreset {
            name: "single".into(),
            stages: vec![MiscalBounds::from_degrees(0.2, 1.0)],
            rigid: false,
        }
    }

    /// Four stages from +-1 m / +-20 deg down to +-5 cm / +-0.5 deg.
    pub fn iterative() -> Self {
        ScenarioPreset {
            name: "iterative".into(),
            stages: REFINEMENT_STAGES.iter().map(|&(t, r)| MiscalBounds::from_degrees(t, r)).collect(),
            rigid: false,
        }
    }

    pub fn rigid_iterative() -> Self {
        ScenarioPreset { name: "rigid-iterative".into(), rigid: true, ..Self::iterative() }
    }

    /// The refinement cascade preceded by a +-2 m / +-180 deg stage.
    pub fn rigid_full() -> Self {
        let mut stages = vec![MiscalBounds::from_degrees(2.0, 180.0)];
        stages.extend(Self::iterative().stages);
        ScenarioPreset { name: "rigid-full".into(), stages, rigid: true }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "single" => Ok(Self::single()),
            "iterative" => Ok(Self::iterative()),
            "rigid-iterative" => Ok(Self::rigid_iterative()),
            "rigid-full" => Ok(Self::rigid_full()),
            other => Err(Error::InvalidConfig(format!("unknown scenario '{other}'"))),
        }
    }

    pub const NAMES: [&'static str; 4] = ["single", "iterative", "rigid-iterative", "rigid-full"];

    /// Bounds the injected miscalibration is drawn from: the first stage.
    pub fn injection_bounds(&self) -> MiscalBounds {
        self.stages[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidConfig(format!("scenario '{}' has no stages", self.name)));
        }
        for b in &self.stages {
            b.validate()?;
        }
        for w in self.stages.windows(2) {
            if !(w[1].max_translation < w[0].max_translation && w[1].max_rotation < w[0].max_rotation) {
                return Err(Error::InvalidConfig(format!(
                    "scenario '{}': stage bounds must strictly decrease",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Draws every Euler coordinate independently and uniformly from the box.
pub fn sample_miscalibration<R: Rng + ?Sized>(bounds: &MiscalBounds, rng: &mut R) -> RigidTransform {
    let h = bounds.half_widths();
    let mut c = [0.0; 6];
    for (x, h) in c.iter_mut().zip(h) {
        *x = if h > 0.0 { rng.gen_range(-h..=h) } else { 0.0 };
    }
    RigidTransform::from_euler(&EulerPose::from_array(c))
}

/// Displaces the lidar and radar data by the given miscalibrations and
/// records them (composed with anything applied earlier). The camera is
/// the reference and is left untouched.
pub fn apply_miscalibration(frame: &FrameSet, lidar: &RigidTransform, radar: &RigidTransform) -> FrameSet {
    FrameSet {
        lidar: frame.lidar.transformed(lidar),
        radar: frame.radar.transformed(radar),
        mis_lidar: *lidar * frame.mis_lidar,
        mis_radar: *radar * frame.mis_radar,
        ..frame.clone()
    }
}
