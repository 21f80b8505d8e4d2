//! Flow and image files: Middlebury `.flo`, KITTI 16-bit PNG flow,
//! color-wheel visualization and 8-bit frame images.

mod color;
mod flo;
mod frames;
mod kitti;

pub use color::{flow_to_color, RgbImage};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC};
pub use frames::{color_frame_to_rgb, read_color_frame, read_gray_frame, write_color_png, write_gray_png, write_rgb_png};
pub use kitti::{decode_kitti_flow, encode_kitti_flow, read_kitti_flow, write_kitti_flow, KITTI_OFFSET, KITTI_SCALE};
