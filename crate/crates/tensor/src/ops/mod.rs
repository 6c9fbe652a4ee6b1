//! Forward kernels and their adjoints. All of them are pure functions of their
//! inputs; [`crate::Tape`] records them for reverse-mode differentiation.

pub mod align;
pub mod conv;
pub mod elementwise;
pub mod rearrange;
pub mod resample;
pub mod stencil;

pub use align::{offset_index, offset_of, pwpac, shift_min_abs, window_len, ShiftMin, ShiftMinMode};
pub use conv::{conv2d, Padding};
pub use elementwise::{add, channel_mean, concat_channels, mean, relu, softmax_channels, sub};
pub use rearrange::{pixel_shuffle, space_to_channel};
pub use resample::{box_downsample, resize_bilinear};
pub use stencil::spatial_gradient;
