//! Neighbourhood operators over a square window of integer offsets.
//!
//! Offsets `(dy, dx)` with `|dy|, |dx| <= radius` are enumerated in scan order
//! (`dy` outer, `dx` inner), so offset `(dy, dx)` has index
//! `(dy + radius) * (2 * radius + 1) + (dx + radius)`. Reads outside the image
//! use the replicate boundary.

use crate::error::{Result, TensorError};
use crate::tensor::{clamp_index, Shape, Tensor};

/// Number of offsets in a window of the given radius.
pub fn window_len(radius: usize) -> usize {
    (2 * radius + 1) * (2 * radius + 1)
}

/// Index of offset `(dy, dx)` in scan order.
pub fn offset_index(dy: isize, dx: isize, radius: usize) -> usize {
    let side = 2 * radius as isize + 1;
    ((dy + radius as isize) * side + (dx + radius as isize)) as usize
}

/// Inverse of [`offset_index`].
pub fn offset_of(index: usize, radius: usize) -> (isize, isize) {
    let side = 2 * radius + 1;
    (
        (index / side) as isize - radius as isize,
        (index % side) as isize - radius as isize,
    )
}

fn offsets(radius: usize) -> impl Iterator<Item = (isize, isize)> {
    let r = radius as isize;
    (-r..=r).flat_map(move |dy| (-r..=r).map(move |dx| (dy, dx)))
}

/// Probability-weighted gather:
/// `out(y, x, c) = sum_{dy,dx} f(y + dy, x + dx, c) * m(y, x, idx(dy, dx))`.
///
/// Every feature channel shares the same per-pixel offset distribution.
pub fn pwpac(features: &Tensor, weights: &Tensor, radius: usize) -> Result<Tensor> {
    let fs = features.shape();
    let ws = weights.shape();
    if fs.with_channels(1) != ws.with_channels(1) {
        return Err(TensorError::dim("pwpac", format!("features {fs} vs map {ws}")));
    }
    if ws.channels() != window_len(radius) {
        return Err(TensorError::dim(
            "pwpac",
            format!("map has {} channels, radius {radius} needs {}", ws.channels(), window_len(radius)),
        ));
    }
    let [nb, h, w, c] = fs.dims();
    let mut out = Tensor::zeros(fs);
    let mut acc = vec![0.0; c];
    for b in 0..nb {
        for y in 0..h {
            for x in 0..w {
                acc.fill(0.0);
                let m = weights.pixel(b, y, x);
                for (k, (dy, dx)) in offsets(radius).enumerate() {
                    let src = features.pixel(b, clamp_index(y as isize + dy, h), clamp_index(x as isize + dx, w));
                    let p = m[k];
                    for (a, v) in acc.iter_mut().zip(src) {
                        *a += p * v;
                    }
                }
                out.pixel_mut(b, y, x).copy_from_slice(&acc);
            }
        }
    }
    out.ensure_finite("pwpac")
}

pub fn pwpac_backward(
    features: &Tensor,
    weights: &Tensor,
    radius: usize,
    grad: &Tensor,
    needs: [bool; 2],
) -> (Option<Tensor>, Option<Tensor>) {
    let [nb, h, w, _] = features.shape().dims();
    let mut d_feat = needs[0].then(|| Tensor::zeros(features.shape()));
    let mut d_map = needs[1].then(|| Tensor::zeros(weights.shape()));
    for b in 0..nb {
        for y in 0..h {
            for x in 0..w {
                let g = grad.pixel(b, y, x);
                for (k, (dy, dx)) in offsets(radius).enumerate() {
                    let sy = clamp_index(y as isize + dy, h);
                    let sx = clamp_index(x as isize + dx, w);
                    if let Some(df) = d_feat.as_mut() {
                        let p = weights.pixel(b, y, x)[k];
                        for (d, gv) in df.pixel_mut(b, sy, sx).iter_mut().zip(g) {
                            *d += p * gv;
                        }
                    }
                    if let Some(dm) = d_map.as_mut() {
                        let src = features.pixel(b, sy, sx);
                        dm.pixel_mut(b, y, x)[k] = src.iter().zip(g).map(|(a, b)| a * b).sum();
                    }
                }
            }
        }
    }
    (d_feat, d_map)
}

/// How the minimum over shifted references is taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMinMode {
    /// Independent minimum for every channel.
    #[default]
    PerChannel,
    /// One shift per pixel, minimising the summed absolute difference over channels.
    Joint,
}

/// Result of [`shift_min_abs`]: the per-element minimum and the winning offset index.
#[derive(Clone, Debug)]
pub struct ShiftMin {
    pub values: Tensor,
    pub argmin: Vec<u16>,
}

/// `out(y, x, c) = min_{dy,dx} |pred(y, x, c) - reference(y + s*dy, x + s*dx, c)|`
/// for `|dy|, |dx| <= radius` and stride `s`. Ties keep the first offset in scan order.
pub fn shift_min_abs(
    pred: &Tensor,
    reference: &Tensor,
    radius: usize,
    stride: usize,
    mode: ShiftMinMode,
) -> Result<ShiftMin> {
    if pred.shape() != reference.shape() {
        return Err(TensorError::dim(
            "shift_min_abs",
            format!("{} vs {}", pred.shape(), reference.shape()),
        ));
    }
    if stride == 0 {
        return Err(TensorError::invalid("shift_min_abs", "stride must be positive"));
    }
    let [nb, h, w, c] = pred.shape().dims();
    let s = stride as isize;
    let mut values = Tensor::zeros(pred.shape());
    let mut argmin = vec![0u16; pred.len()];
    let mut best = vec![f64::INFINITY; c];
    let mut best_k = vec![0u16; c];
    for b in 0..nb {
        for y in 0..h {
            for x in 0..w {
                let p = pred.pixel(b, y, x);
                best.fill(f64::INFINITY);
                best_k.fill(0);
                let mut best_joint = f64::INFINITY;
                for (k, (dy, dx)) in offsets(radius).enumerate() {
                    let r = reference.pixel(b, clamp_index(y as isize + s * dy, h), clamp_index(x as isize + s * dx, w));
                    match mode {
                        ShiftMinMode::PerChannel => {
                            for ch in 0..c {
                                let d = (p[ch] - r[ch]).abs();
                                if d < best[ch] {
                                    best[ch] = d;
                                    best_k[ch] = k as u16;
                                }
                            }
                        }
                        ShiftMinMode::Joint => {
                            let total: f64 = p.iter().zip(r).map(|(a, b)| (a - b).abs()).sum();
                            if total < best_joint {
                                best_joint = total;
                                for ch in 0..c {
                                    best[ch] = (p[ch] - r[ch]).abs();
                                    best_k[ch] = k as u16;
                                }
                            }
                        }
                    }
                }
                let i = values.index(b, y, x, 0);
                values.data_mut()[i..i + c].copy_from_slice(&best);
                argmin[i..i + c].copy_from_slice(&best_k);
            }
        }
    }
    Ok(ShiftMin {
        values: values.ensure_finite("shift_min_abs")?,
        argmin,
    })
}

/// Sign of `pred - reference` at each element's winning shift.
pub fn shift_min_signs(pred: &Tensor, reference: &Tensor, argmin: &[u16], radius: usize, stride: usize) -> Vec<i8> {
    let mut out = Vec::with_capacity(pred.len());
    for_each_winner(pred, reference, argmin, radius, stride, |i, j| {
        let diff = pred.data()[i] - reference.data()[j];
        out.push(if diff > 0.0 { 1 } else if diff < 0.0 { -1 } else { 0 });
    });
    out
}

/// Visit `(pred index, winning reference index)` for every element.
fn for_each_winner(
    pred: &Tensor,
    reference: &Tensor,
    argmin: &[u16],
    radius: usize,
    stride: usize,
    mut f: impl FnMut(usize, usize),
) {
    let [nb, h, w, c] = pred.shape().dims();
    let s = stride as isize;
    for b in 0..nb {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let i = pred.index(b, y, x, ch);
                    let (dy, dx) = offset_of(argmin[i] as usize, radius);
                    let j = reference.index(
                        b,
                        clamp_index(y as isize + s * dy, h),
                        clamp_index(x as isize + s * dx, w),
                        ch,
                    );
                    f(i, j);
                }
            }
        }
    }
}

pub fn shift_min_abs_backward(
    pred: &Tensor,
    reference: &Tensor,
    argmin: &[u16],
    radius: usize,
    stride: usize,
    grad: &Tensor,
    needs: [bool; 2],
) -> (Option<Tensor>, Option<Tensor>) {
    let mut d_pred = needs[0].then(|| Tensor::zeros(pred.shape()));
    let mut d_ref = needs[1].then(|| Tensor::zeros(reference.shape()));
    let signs = shift_min_signs(pred, reference, argmin, radius, stride);
    for_each_winner(pred, reference, argmin, radius, stride, |i, j| {
        let g = grad.data()[i] * f64::from(signs[i]);
        if let Some(dp) = d_pred.as_mut() {
            dp.data_mut()[i] += g;
        }
        if let Some(dr) = d_ref.as_mut() {
            dr.data_mut()[j] -= g;
        }
    });
    (d_pred, d_ref)
}

/// Shape of the map consumed by [`pwpac`] for a feature tensor of `shape`.
pub fn pwpac_map_shape(shape: Shape, radius: usize) -> Shape {
    shape.with_channels(window_len(radius))
}
