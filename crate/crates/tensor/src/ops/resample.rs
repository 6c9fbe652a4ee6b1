//! Bilinear resizing (half-pixel centers, no corner alignment) and box averaging.

use crate::error::{Result, TensorError};
use crate::tensor::{Shape, Tensor};

/// Interpolation taps `(lo, hi, weight_of_hi)` for each output coordinate.
fn axis_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let ratio = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * ratio - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

fn check_resize(x: &Tensor, out_h: usize, out_w: usize) -> Result<()> {
    if x.shape().height() == 0 || x.shape().width() == 0 || out_h == 0 || out_w == 0 {
        return Err(TensorError::invalid(
            "resize_bilinear",
            format!("cannot resize {} to {out_h}x{out_w}", x.shape()),
        ));
    }
    Ok(())
}

pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    check_resize(x, out_h, out_w)?;
    let [nb, h, w, c] = x.shape().dims();
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    let mut out = Tensor::zeros(Shape::new(nb, out_h, out_w, c));
    for b in 0..nb {
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let (p00, p01) = (x.pixel(b, y0, x0), x.pixel(b, y0, x1));
                let (p10, p11) = (x.pixel(b, y1, x0), x.pixel(b, y1, x1));
                let dst = out.pixel_mut(b, oy, ox);
                for ch in 0..c {
                    let top = p00[ch] + (p01[ch] - p00[ch]) * fx;
                    let bottom = p10[ch] + (p11[ch] - p10[ch]) * fx;
                    dst[ch] = top + (bottom - top) * fy;
                }
            }
        }
    }
    Ok(out)
}

pub fn resize_bilinear_backward(in_shape: Shape, grad: &Tensor) -> Tensor {
    let [nb, h, w, c] = in_shape.dims();
    let [_, out_h, out_w, _] = grad.shape().dims();
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    let mut d = Tensor::zeros(in_shape);
    for b in 0..nb {
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let g = grad.pixel(b, oy, ox).to_vec();
                let taps = [
                    (y0, x0, (1.0 - fy) * (1.0 - fx)),
                    (y0, x1, (1.0 - fy) * fx),
                    (y1, x0, fy * (1.0 - fx)),
                    (y1, x1, fy * fx),
                ];
                for (yy, xx, wgt) in taps {
                    for (dv, gv) in d.pixel_mut(b, yy, xx).iter_mut().zip(&g) {
                        *dv += wgt * gv;
                    }
                }
                debug_assert_eq!(g.len(), c);
            }
        }
    }
    d
}

/// Average over non-overlapping `factor x factor` blocks.
pub fn box_downsample(x: &Tensor, factor: usize) -> Result<Tensor> {
    let [nb, h, w, c] = x.shape().dims();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(TensorError::dim(
            "box_downsample",
            format!("{} not divisible by {factor}", x.shape()),
        ));
    }
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Tensor::zeros(Shape::new(nb, h / factor, w / factor, c));
    for b in 0..nb {
        for oy in 0..h / factor {
            for ox in 0..w / factor {
                let mut acc = vec![0.0; c];
                for y in oy * factor..(oy + 1) * factor {
                    for xx in ox * factor..(ox + 1) * factor {
                        for (a, v) in acc.iter_mut().zip(x.pixel(b, y, xx)) {
                            *a += v;
                        }
                    }
                }
                for (dst, a) in out.pixel_mut(b, oy, ox).iter_mut().zip(acc) {
                    *dst = a * norm;
                }
            }
        }
    }
    Ok(out)
}

pub fn box_downsample_backward(in_shape: Shape, factor: usize, grad: &Tensor) -> Tensor {
    let norm = 1.0 / (factor * factor) as f64;
    Tensor::from_fn(in_shape, |b, y, x, c| grad.at(b, y / factor, x / factor, c) * norm)
}
