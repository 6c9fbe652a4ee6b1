use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Forward differences of a single-channel image.
///
/// Channel 0 holds `x(y, x+1) - x(y, x)`, channel 1 holds `x(y+1, x) - x(y, x)`.
/// The last column (resp. row) is zero, i.e. a replicate boundary.
pub fn spatial_gradient(x: &Tensor) -> Result<Tensor> {
    let [nb, h, w, c] = x.shape().dims();
    if c != 1 {
        return Err(TensorError::dim(
            "spatial_gradient",
            format!("expected one channel, got {}", x.shape()),
        ));
    }
    let mut out = Tensor::zeros(x.shape().with_channels(2));
    for b in 0..nb {
        for y in 0..h {
            for xx in 0..w {
                let v = x.at(b, y, xx, 0);
                let gx = if xx + 1 < w { x.at(b, y, xx + 1, 0) - v } else { 0.0 };
                let gy = if y + 1 < h { x.at(b, y + 1, xx, 0) - v } else { 0.0 };
                let px = out.pixel_mut(b, y, xx);
                px[0] = gx;
                px[1] = gy;
            }
        }
    }
    Ok(out)
}

pub fn spatial_gradient_backward(grad: &Tensor) -> Tensor {
    let [nb, h, w, _] = grad.shape().dims();
    let mut d = Tensor::zeros(grad.shape().with_channels(1));
    for b in 0..nb {
        for y in 0..h {
            for xx in 0..w {
                let g = grad.pixel(b, y, xx);
                let (gx, gy) = (g[0], g[1]);
                if xx + 1 < w {
                    let i = d.index(b, y, xx + 1, 0);
                    d.data_mut()[i] += gx;
                    let j = d.index(b, y, xx, 0);
                    d.data_mut()[j] -= gx;
                }
                if y + 1 < h {
                    let i = d.index(b, y + 1, xx, 0);
                    d.data_mut()[i] += gy;
                    let j = d.index(b, y, xx, 0);
                    d.data_mut()[j] -= gy;
                }
            }
        }
    }
    d
}
