//! Run configuration: built-in defaults, then command-line flags, then an
//! optional config file (TOML, JSON, or a previous run's manifest).

use std::path::Path;

use anyhow::{bail, Context, Result};
use loopcal::dataio::scene::{CameraModel, LidarModel, NoiseModel, RadarModel};
use loopcal::dataio::SceneSpec;
use loopcal::pipeline::Aggregation;
use loopcal::{LossWeights, Pair};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Pairwise,
    Joint,
    Oracle,
    Identity,
}

/// Scene generator knobs; primitives are drawn from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub lidar: LidarModel,
    pub radar: RadarModel,
    pub camera: CameraModel,
    pub noise: NoiseModel,
    pub radar_dropout: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let s = SceneSpec::ground_only(0);
        SceneConfig { lidar: s.lidar, radar: s.radar, camera: s.camera, noise: s.noise, radar_dropout: s.radar_dropout }
    }
}

impl SceneConfig {
    pub fn spec(&self, seed: u64) -> SceneSpec {
        SceneSpec {
            lidar: self.lidar,
            radar: self.radar,
            camera: self.camera,
            noise: self.noise,
            radar_dropout: self.radar_dropout,
            ..SceneSpec::random(seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds scene generation and miscalibration sampling.
    pub seed: u64,
    /// single | iterative | rigid-iterative | rigid-full
    pub scenario: String,
    pub estimator: EstimatorKind,
    /// Pairs estimated by the pairwise estimator.
    pub pairs: Vec<Pair>,
    pub weights: LossWeights,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Frames written by gen-scene.
    pub frames: usize,
    /// Forward motion between generated frames, meters.
    pub step: f64,
    /// Random miscalibrations evaluated by calibrate; 0 picks 50 for rigid
    /// scenarios and 1 otherwise.
    pub runs: usize,
    pub aggregation: Aggregation,
    /// Rigid scenarios: one shared estimate over all frames instead of
    /// per-frame estimates aggregated afterwards.
    pub multiframe: bool,
    /// Per-stage evaluation budget; 0 keeps the stage defaults.
    pub budget: usize,
    pub starts: usize,
    pub max_source_points: usize,
    /// Radar clouds are thinned to this many points before estimation (0:
    /// keep all).
    pub radar_points: usize,
    pub scene: SceneConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scenario: "single".into(),
            estimator: EstimatorKind::Pairwise,
            pairs: Pair::ALL.to_vec(),
            weights: LossWeights::default(),
            jobs: 0,
            frames: 1,
            step: 1.5,
            runs: 0,
            aggregation: Aggregation::Median,
            multiframe: false,
            budget: 0,
            starts: 8,
            max_source_points: 30_000,
            radar_points: 0,
            scene: SceneConfig::default(),
        }
    }
}

impl RunConfig {
    /// Overlays every key present in `path` onto `self`. A manifest written
    /// by a previous run contributes its `config` section.
    pub fn overlay_file(&self, path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut file: Value = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            let t: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            serde_json::to_value(t)?
        };
        if let Some(inner) = file.get("config").filter(|_| file.get("command").is_some()) {
            file = inner.clone();
        }
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, file);
        serde_json::from_value(base).with_context(|| format!("invalid configuration in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        loopcal::ScenarioPreset::by_name(&self.scenario)?;
        self.weights.validate()?;
        if self.pairs.is_empty() {
            bail!("at least one pair must be selected");
        }
        if self.frames == 0 {
            bail!("frames must be at least 1");
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
