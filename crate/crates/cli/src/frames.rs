//! Frame directories: `frame_NNN/` with sensor-frame clouds, the 16-bit
//! camera depth image and the calibration, plus a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use loopcal::dataio::{load_calib, load_cloud, read_pgm16, save_calib, save_cloud, write_pgm16, CalibSet};
use loopcal::{CameraDepth, ChannelSchema, Extrinsics, FrameSet, PinholeIntrinsics, RigidTransform};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";
pub const LIDAR_FILE: &str = "lidar.bin";
pub const RADAR_FILE: &str = "radar.bin";
pub const DEPTH_FILE: &str = "camera_depth.pgm";
pub const CALIB_FILE: &str = "calib.txt";
/// Written next to `calib.txt` when the calibration is perturbed.
pub const CALIB_GT_FILE: &str = "calib_gt.txt";
/// Depth image units per meter: 2 mm steps keep 120 m inside 16 bits.
pub const DEPTH_SCALE: f64 = 500.0;
const KEY_LIDAR: &str = "Tr_cam_lidar";
const KEY_RADAR: &str = "Tr_cam_radar";

/// Everything needed to repeat a run, minus the output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: Option<String>,
    pub config: RunConfig,
    pub frames: usize,
    pub radar_frames: usize,
    pub intrinsics: PinholeIntrinsics,
    /// Depth image units per meter.
    pub depth_scale: f64,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, input: Option<&Path>, config: &RunConfig, frames: &[FrameSet]) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            input: input.map(|p| p.display().to_string()),
            config: config.clone(),
            frames: frames.len(),
            radar_frames: frames.first().map_or(0, |f| f.radar_frames),
            intrinsics: frames.first().map_or(PinholeIntrinsics { fx: 0.0, fy: 0.0, cx: 0.0, cy: 0.0 }, |f| f.camera.intrinsics),
            depth_scale: DEPTH_SCALE,
            files: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn frame_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("frame_{index:03}"))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes one frame. Clouds go back to their sensor frames under the
/// frame's current (possibly perturbed) calibration; the ground truth is
/// stored separately when the two differ.
pub fn save_frame(frame: &FrameSet, dir: &Path) -> Result<Vec<String>> {
    create_dir(dir)?;
    let eff = frame.effective_extrinsics();
    save_cloud(&frame.lidar.transformed(&eff.camera_lidar.inverse()), &dir.join(LIDAR_FILE))?;
    save_cloud(&frame.radar.transformed(&eff.camera_radar.inverse()), &dir.join(RADAR_FILE))?;
    write_pgm16(&frame.camera.image, DEPTH_SCALE, &dir.join(DEPTH_FILE))?;
    let calib = |e: &Extrinsics| {
        let mut set = CalibSet::new();
        set.insert(KEY_LIDAR, e.camera_lidar);
        set.insert(KEY_RADAR, e.camera_radar);
        set
    };
    save_calib(&calib(&eff), &dir.join(CALIB_FILE))?;
    let mut files = vec![LIDAR_FILE, RADAR_FILE, DEPTH_FILE, CALIB_FILE];
    let gt_path = dir.join(CALIB_GT_FILE);
    if is_perturbed(frame) {
        save_calib(&calib(&frame.extrinsics), &gt_path)?;
        files.push(CALIB_GT_FILE);
    } else if gt_path.exists() {
        fs::remove_file(&gt_path).with_context(|| format!("removing {}", gt_path.display()))?;
    }
    Ok(files.into_iter().map(String::from).collect())
}

pub fn is_perturbed(frame: &FrameSet) -> bool {
    frame.mis_lidar != RigidTransform::IDENTITY || frame.mis_radar != RigidTransform::IDENTITY
}

pub fn load_frame(dir: &Path, index: usize, m: &Manifest) -> Result<FrameSet> {
    let calib = load_calib(&dir.join(CALIB_FILE))?;
    let cl = calib.require(KEY_LIDAR)?;
    let cr = calib.require(KEY_RADAR)?;
    let gt_path = dir.join(CALIB_GT_FILE);
    let gt = if gt_path.exists() {
        let g = load_calib(&gt_path)?;
        Extrinsics { camera_lidar: g.require(KEY_LIDAR)?, camera_radar: g.require(KEY_RADAR)? }
    } else {
        Extrinsics { camera_lidar: cl, camera_radar: cr }
    };
    let lidar = load_cloud(&dir.join(LIDAR_FILE), ChannelSchema::Lidar)?.transformed(&cl);
    let radar = load_cloud(&dir.join(RADAR_FILE), ChannelSchema::Radar)?.transformed(&cr);
    let image = read_pgm16(&dir.join(DEPTH_FILE))?.to_depth(m.depth_scale);
    let mut frame = FrameSet::new(index, CameraDepth { image, intrinsics: m.intrinsics }, lidar, radar, m.radar_frames, gt);
    if gt_path.exists() {
        frame.mis_lidar = cl * gt.camera_lidar.inverse();
        frame.mis_radar = cr * gt.camera_radar.inverse();
    }
    Ok(frame)
}

/// Loads every frame listed in the directory's manifest.
pub fn load_frames(root: &Path) -> Result<(Manifest, Vec<FrameSet>)> {
    let m = Manifest::read(root)?;
    if m.frames == 0 {
        bail!("{} lists no frames", root.join(MANIFEST).display());
    }
    let frames = (0..m.frames)
        .map(|i| {
            let dir = frame_dir(root, i);
            load_frame(&dir, i, &m).with_context(|| format!("loading {}", dir.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((m, frames))
}
