//! Extrinsic calibration of camera, lidar and radar from depth-image
//! alignment with a loop-closure constraint over the three sensor pairs.

pub mod cloud;
pub mod dataio;
pub mod error;
pub mod frame;
pub mod loss;
pub mod metrics;
pub mod perturb;
pub mod pipeline;
pub mod projection;
pub mod regress;
pub mod transform;

pub use cloud::{ChannelSchema, PointCloud};
pub use error::{Error, Result};
pub use frame::{CameraDepth, Extrinsics, FrameSet};
pub use loss::{LossWeights, Pair, PredictionSet};
pub use perturb::{MiscalBounds, ScenarioPreset};
pub use projection::{DepthImage, PinholeIntrinsics, ProjectionConfig};
pub use regress::{Estimator, EstimatorStage};
pub use transform::{EulerPose, Quaternion, RigidTransform};
