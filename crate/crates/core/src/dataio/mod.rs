//! File formats and the synthetic scene generator.

mod binary;
mod calib;
mod pgm;
pub mod scene;

pub use binary::{load_cloud, save_cloud};
pub use calib::{format_calib, load_calib, parse_calib, save_calib, CalibRows, CalibSet};
pub use pgm::{read_pgm16, write_pgm16, write_pgm8, Gray16};
pub use scene::{generate_scene, generate_sequence, render_frame, Primitive, SceneSpec, SensorRig, Surface};
