//! Lossless space/depth rearrangements.
//!
//! Channel order follows depth-to-space on NHWC data: within a `f x f` block
//! the sub-pixel at `(dy, dx)` of source channel `ch` lives in channel
//! `(dy * f + dx) * c + ch`.

use crate::error::{Result, TensorError};
use crate::tensor::{Shape, Tensor};

/// `[b, f*H, f*W, c] -> [b, H, W, f*f*c]`.
pub fn space_to_channel(x: &Tensor, factor: usize) -> Result<Tensor> {
    let [nb, h, w, c] = x.shape().dims();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(TensorError::dim(
            "space_to_channel",
            format!("{} not divisible by factor {factor}", x.shape()),
        ));
    }
    let (oh, ow) = (h / factor, w / factor);
    let out_shape = Shape::new(nb, oh, ow, factor * factor * c);
    let mut out = Tensor::zeros(out_shape);
    for b in 0..nb {
        for y in 0..oh {
            for xx in 0..ow {
                let dst = out.pixel_mut(b, y, xx);
                for dy in 0..factor {
                    for dx in 0..factor {
                        let k = (dy * factor + dx) * c;
                        dst[k..k + c].copy_from_slice(x.pixel(b, y * factor + dy, xx * factor + dx));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `[b, H, W, f*f*c] -> [b, f*H, f*W, c]`; exact inverse of [`space_to_channel`].
pub fn pixel_shuffle(x: &Tensor, factor: usize) -> Result<Tensor> {
    let [nb, h, w, cc] = x.shape().dims();
    let ff = factor * factor;
    if factor == 0 || cc % ff != 0 {
        return Err(TensorError::dim(
            "pixel_shuffle",
            format!("{cc} channels not divisible by {ff}"),
        ));
    }
    let c = cc / ff;
    let mut out = Tensor::zeros(Shape::new(nb, h * factor, w * factor, c));
    for b in 0..nb {
        for y in 0..h {
            for xx in 0..w {
                let src = x.pixel(b, y, xx);
                for dy in 0..factor {
                    for dx in 0..factor {
                        let k = (dy * factor + dx) * c;
                        out.pixel_mut(b, y * factor + dy, xx * factor + dx)
                            .copy_from_slice(&src[k..k + c]);
                    }
                }
            }
        }
    }
    Ok(out)
}
