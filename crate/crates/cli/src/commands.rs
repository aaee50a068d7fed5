use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use loopcal::dataio::{generate_sequence, write_pgm8, SensorRig};
use loopcal::frame::body_from_optical;
use loopcal::metrics::{error_record, summarize, summary_csv, summary_table, ErrorRecord};
use loopcal::perturb::{apply_miscalibration, sample_miscalibration};
use loopcal::pipeline::{aggregate_sequence, correct_frame, refine_iterative, Refinement};
use loopcal::projection::project_pinhole;
use loopcal::regress::{
    IdentityEstimator, JointEstimator, OracleEstimator, PairwiseEstimator, SearchOptions, SearchSettings,
};
use loopcal::{
    Estimator, EstimatorStage, FrameSet, Pair, PointCloud, PredictionSet, ProjectionConfig, RigidTransform,
    ScenarioPreset,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EstimatorKind, RunConfig};
use crate::frames::{create_dir, frame_dir, is_perturbed, load_frames, save_frame, Manifest};

pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const ERRORS_FILE: &str = "errors.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn gen_scene(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let spec = cfg.scene.spec(cfg.seed);
    let frames = generate_sequence(&spec, &SensorRig::default(), cfg.frames, cfg.step)?;
    write_frames(&frames, "gen-scene", None, cfg, out)
}

fn write_frames(frames: &[FrameSet], command: &str, input: Option<&Path>, cfg: &RunConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    let mut manifest = Manifest::new(command, input, cfg, frames);
    for f in frames {
        let dir = frame_dir(out, f.index);
        let name = dir.file_name().expect("frame dir").to_string_lossy().into_owned();
        manifest.files.extend(save_frame(f, &dir)?.into_iter().map(|file| format!("{name}/{file}")));
    }
    manifest.write(out)
}

/// Which sensors a scenario perturbs: only the second sensor of the
/// selected pairs for the pairwise estimator, both otherwise.
fn perturbed_sensors(cfg: &RunConfig) -> (bool, bool) {
    if cfg.estimator != EstimatorKind::Pairwise {
        return (true, true);
    }
    let lidar = cfg.pairs.contains(&Pair::CameraLidar);
    let radar = cfg.pairs.iter().any(|p| matches!(p, Pair::LidarRadar | Pair::RadarCamera));
    (lidar, radar)
}

/// Applies the `run`-th random miscalibration of the configured scenario.
/// Rigid scenarios share one draw across all frames.
pub fn inject(frames: &[FrameSet], cfg: &RunConfig, run: usize) -> Result<Vec<FrameSet>> {
    let preset = ScenarioPreset::by_name(&cfg.scenario)?;
    let bounds = preset.injection_bounds();
    let (lidar, radar) = perturbed_sensors(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(run as u64 + 1);
    let mut draw = |on: bool| if on { sample_miscalibration(&bounds, &mut rng) } else { RigidTransform::IDENTITY };
    let mut shared = None;
    Ok(frames
        .iter()
        .map(|f| {
            let (ml, mr) = match shared {
                Some(m) => m,
                None => {
                    let m = (draw(lidar), draw(radar));
                    if preset.rigid {
                        shared = Some(m);
                    }
                    m
                }
            };
            apply_miscalibration(f, &ml, &mr)
        })
        .collect())
}

pub fn perturb(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    cfg.validate()?;
    let (_, frames) = load_frames(input)?;
    if frames.iter().any(is_perturbed) {
        bail!("{} is already perturbed", input.display());
    }
    write_frames(&inject(&frames, cfg, 0)?, "perturb", Some(input), cfg, out)
}

pub fn estimator(cfg: &RunConfig) -> Box<dyn Estimator> {
    let settings = SearchSettings {
        search: SearchOptions { starts: cfg.starts, seed: cfg.seed, ..Default::default() },
        max_source_points: cfg.max_source_points,
        ..Default::default()
    };
    match cfg.estimator {
        EstimatorKind::Pairwise => Box::new(PairwiseEstimator::new(&cfg.pairs, settings)),
        EstimatorKind::Joint => Box::new(JointEstimator::new(settings, cfg.weights)),
        EstimatorKind::Oracle => Box::new(OracleEstimator),
        EstimatorKind::Identity => Box::new(IdentityEstimator),
    }
}

pub fn stages(cfg: &RunConfig) -> Result<Vec<EstimatorStage>> {
    let preset = ScenarioPreset::by_name(&cfg.scenario)?;
    Ok(EstimatorStage::cascade(&preset)
        .into_iter()
        .map(|s| if cfg.budget > 0 { EstimatorStage { budget: cfg.budget, ..s } } else { s })
        .collect())
}

/// One estimate and its ground truth. `frame` is `None` for estimates
/// shared by the whole sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub run: usize,
    pub frame: Option<usize>,
    pub pair: Pair,
    pub predicted: RigidTransform,
    pub truth: RigidTransform,
}

impl PredictionRow {
    pub fn error(&self) -> ErrorRecord {
        error_record(self.pair, &self.predicted, &self.truth)
    }
}

fn rows(run: usize, frame: Option<usize>, pred: &PredictionSet, truth: &PredictionSet) -> Vec<PredictionRow> {
    pred.present()
        .filter_map(|(pair, p)| truth.get(pair).map(|t| PredictionRow { run, frame, pair, predicted: p, truth: t }))
        .collect()
}

pub fn effective_runs(cfg: &RunConfig, frames: &[FrameSet]) -> Result<usize> {
    if frames.iter().any(is_perturbed) {
        return Ok(1);
    }
    let rigid = ScenarioPreset::by_name(&cfg.scenario)?.rigid;
    Ok(if cfg.runs > 0 { cfg.runs } else if rigid { 50 } else { 1 })
}

/// Every prediction of a calibration experiment over `frames`.
pub fn run_calibration(cfg: &RunConfig, frames: &[FrameSet]) -> Result<Vec<PredictionRow>> {
    cfg.validate()?;
    let preset = ScenarioPreset::by_name(&cfg.scenario)?;
    let stages = stages(cfg)?;
    let est = estimator(cfg);
    let given = frames.iter().any(is_perturbed);
    let mut out = Vec::new();
    for run in 0..effective_runs(cfg, frames)? {
        let mut current = if given { frames.to_vec() } else { inject(frames, cfg, run)? };
        if cfg.radar_points > 0 {
            for f in &mut current {
                f.radar = f.radar.thinned(cfg.radar_points);
            }
        }
        let truth = current[0].ground_truth();
        if preset.rigid && cfg.multiframe {
            let r = refine_iterative(&current, est.as_ref(), &stages)?;
            out.extend(rows(run, None, &r.total, &truth));
            continue;
        }
        let per_frame: Vec<Refinement> = current
            .par_iter()
            .map(|f| refine_iterative(std::slice::from_ref(f), est.as_ref(), &stages))
            .collect::<loopcal::Result<_>>()?;
        for (f, r) in current.iter().zip(&per_frame) {
            out.extend(rows(run, Some(f.index), &r.total, &f.ground_truth()));
        }
        if preset.rigid {
            let totals: Vec<PredictionSet> = per_frame.iter().map(|r| r.total).collect();
            out.extend(rows(run, None, &aggregate_sequence(&totals, cfg.aggregation)?, &truth));
        }
    }
    Ok(out)
}

fn errors_csv(rows: &[PredictionRow]) -> String {
    let mut out = String::from("run,frame,pair,rotation_deg,translation_cm\n");
    for r in rows {
        let e = r.error();
        let frame = r.frame.map_or("all".to_string(), |f| f.to_string());
        let _ = writeln!(out, "{},{frame},{},{},{}", r.run, r.pair, e.rotation_deg, e.translation_cm);
    }
    out
}

/// Summary rows per pair: sequence-level estimates (one per run) and
/// per-frame estimates are reported separately.
fn summary_rows(scenario: &str, rows: &[PredictionRow]) -> Result<Vec<(String, Pair, loopcal::metrics::SummaryStats)>> {
    let mut out = Vec::new();
    for (label, shared) in [(format!("{scenario} (per run)"), true), (format!("{scenario} (per frame)"), false)] {
        for pair in Pair::ALL {
            let recs: Vec<ErrorRecord> =
                rows.iter().filter(|r| r.pair == pair && r.frame.is_none() == shared).map(PredictionRow::error).collect();
            if !recs.is_empty() {
                out.push((label.clone(), pair, summarize(&recs)?));
            }
        }
    }
    Ok(out)
}

/// Writes predictions, per-estimate errors and the summary tables.
pub fn write_report(scenario: &str, rows: &[PredictionRow], out: &Path) -> Result<Vec<String>> {
    if rows.is_empty() {
        bail!("no predictions to report");
    }
    create_dir(out)?;
    let summary = summary_rows(scenario, rows)?;
    let mut text = summary_table(&summary);
    text.push_str("\n± is the normal-approximation 95% interval of the mean, from the population standard deviation.\n");
    let mut json = serde_json::to_string_pretty(rows)?;
    json.push('\n');
    write(&out.join(PREDICTIONS_FILE), json)?;
    write(&out.join(ERRORS_FILE), errors_csv(rows))?;
    write(&out.join(SUMMARY_CSV), summary_csv(&summary))?;
    write(&out.join(SUMMARY_TXT), text)?;
    Ok([PREDICTIONS_FILE, ERRORS_FILE, SUMMARY_CSV, SUMMARY_TXT].map(String::from).to_vec())
}

pub fn calibrate(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let (_, frames) = load_frames(input)?;
    let rows = run_calibration(cfg, &frames)?;
    let mut manifest = Manifest::new("calibrate", Some(input), cfg, &frames);
    manifest.files = write_report(&cfg.scenario, &rows, out)?;
    manifest.write(out)
}

pub fn read_predictions(dir: &Path) -> Result<Vec<PredictionRow>> {
    let path = dir.join(PREDICTIONS_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Recomputes errors and summaries from a calibrate output directory.
pub fn evaluate(input: &Path, out: &Path) -> Result<()> {
    let source = Manifest::read(input)?;
    if source.command != "calibrate" {
        bail!("{} was not written by calibrate", input.display());
    }
    let rows = read_predictions(input)?;
    let mut manifest = Manifest { command: "evaluate".into(), input: Some(input.display().to_string()), ..source.clone() };
    manifest.files = write_report(&source.config.scenario, &rows, out)?;
    manifest.write(out)
}

const LIDAR_LEVEL: u8 = 255;
const RADAR_LEVEL: u8 = 200;

/// Camera depth as gray levels 1..=150 (0 where empty) with projected
/// lidar and radar points drawn on top.
pub fn overlay(frame: &FrameSet, lidar: &PointCloud, radar: &PointCloud) -> Result<Vec<u8>> {
    let img = &frame.camera.image;
    let (h, w) = (img.height(), img.width());
    let mut pixels: Vec<u8> = (0..h * w)
        .map(|i| {
            let r = img.range_at(i) as f64;
            if r > 0.0 { 1 + (r.min(60.0) / 60.0 * 149.0).round() as u8 } else { 0 }
        })
        .collect();
    let to_optical = body_from_optical().inverse();
    for (cloud, level) in [(lidar, LIDAR_LEVEL), (radar, RADAR_LEVEL)] {
        let cfg = ProjectionConfig::pinhole(h, w, cloud.schema(), frame.camera.intrinsics);
        let hits = project_pinhole(&cloud.transformed(&to_optical), &cfg)?;
        for (i, p) in pixels.iter_mut().enumerate() {
            if hits.range_at(i) > 0.0 {
                *p = level;
            }
        }
    }
    Ok(pixels)
}

/// Overlays for ground truth, the scenario's first miscalibration and,
/// when given, the run-0 predictions of a calibrate output directory.
pub fn render(cfg: &RunConfig, input: &Path, predictions: Option<&Path>, out: &Path) -> Result<()> {
    cfg.validate()?;
    let (_, frames) = load_frames(input)?;
    let current = if frames.iter().any(is_perturbed) { frames.clone() } else { inject(&frames, cfg, 0)? };
    let preds = predictions.map(read_predictions).transpose()?;
    create_dir(out)?;
    let mut manifest = Manifest::new("render", Some(input), cfg, &frames);
    for f in &current {
        let mut sources = vec![
            ("gt", f.lidar.transformed(&f.mis_lidar.inverse()), f.radar.transformed(&f.mis_radar.inverse())),
            ("miscalibrated", f.lidar.clone(), f.radar.clone()),
        ];
        if let Some(rows) = &preds {
            let mut est = PredictionSet::default();
            for r in rows.iter().filter(|r| r.run == 0 && r.frame.is_none_or(|i| i == f.index)) {
                if r.frame.is_some() || est.get(r.pair).is_none() {
                    est.set(r.pair, Some(r.predicted));
                }
            }
            let fixed = correct_frame(f, &est);
            sources.push(("predicted", fixed.lidar, fixed.radar));
        }
        for (name, lidar, radar) in sources {
            let file = format!("frame_{:03}_{name}.pgm", f.index);
            let img = &f.camera.image;
            write_pgm8(img.width(), img.height(), &overlay(f, &lidar, &radar)?, &out.join(&file))?;
            manifest.files.push(file);
        }
    }
    manifest.write(out)
}
