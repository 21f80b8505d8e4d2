//! Self-supervised optical flow: pretrain an hourglass network on frame
//! interpolation from raw video, then swap its output head and fine-tune it
//! on a small amount of ground-truth flow.
//!
//! Modules mirror the pipeline stages:
//!
//! * [`model`]: network description, construction, forward/backward, head swap
//! * [`data`]: sample indexing, splits, normalization, augmentation, synthetic corpora
//! * [`metrics`]: SSIM, L1, PSNR, endpoint error, Fl-all, with analytic gradients
//! * [`training`]: ADAM, learning-rate policies, the pretraining and fine-tuning loops, checkpoints
//! * [`evaluation`]: interpolation and flow reports, boundary handling, comparison experiments
//! * [`flowio`]: `.flo` and KITTI PNG flow files, color-wheel visualization, frame images

pub mod data;
pub mod error;
pub mod evaluation;
pub mod flow;
pub mod flowio;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod training;

pub use error::{Error, Result};
pub use flow::FlowField;
pub use model::{Head, Mode, Network, NetworkSpec, Tensor};
pub use raster::{ColorFrame, Plane};
