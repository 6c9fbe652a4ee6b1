//! Pointwise arithmetic, reductions and channel plumbing.

use crate::error::{Result, TensorError};
use crate::tensor::{Shape, Tensor};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::dim(op, format!("{} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

fn zip(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    same_shape(op, a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data)?.ensure_finite(op)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip("sub", a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip("mul", a, b, |x, y| x * y)
}

pub fn scale(x: &Tensor, factor: f64) -> Result<Tensor> {
    x.map(|v| v * factor).ensure_finite("scale")
}

pub fn abs(x: &Tensor) -> Tensor {
    x.map(f64::abs)
}

/// Derivative of `|x|`, with the subgradient at zero taken as zero.
pub fn abs_backward(x: &Tensor, grad: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v > 0.0 { g } else if v < 0.0 { -g } else { 0.0 })
        .collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, grad: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

/// Mean of all elements as a scalar tensor, accumulated in storage order.
pub fn mean(x: &Tensor) -> Result<Tensor> {
    if x.is_empty() {
        return Err(TensorError::invalid("mean", "empty tensor"));
    }
    Tensor::scalar(x.sum() / x.len() as f64).ensure_finite("mean")
}

pub fn mean_backward(shape: Shape, grad: f64) -> Tensor {
    Tensor::full(shape, grad / shape.len() as f64)
}

/// `sum(x * weights)` for a constant weight tensor of the same shape.
pub fn dot_const(x: &Tensor, weights: &Tensor) -> Result<Tensor> {
    same_shape("dot_const", x, weights)?;
    let s: f64 = x.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
    Tensor::scalar(s).ensure_finite("dot_const")
}

/// Per-pixel mean over channels, giving a single-channel tensor.
pub fn channel_mean(x: &Tensor) -> Tensor {
    let c = x.shape().channels();
    let data = x
        .data()
        .chunks_exact(c)
        .map(|px| px.iter().sum::<f64>() / c as f64)
        .collect();
    Tensor::new(x.shape().with_channels(1), data).expect("channel_mean shape")
}

pub fn channel_mean_backward(shape: Shape, grad: &Tensor) -> Tensor {
    let c = shape.channels();
    let mut data = Vec::with_capacity(shape.len());
    for &g in grad.data() {
        data.extend(std::iter::repeat_n(g / c as f64, c));
    }
    Tensor::new(shape, data).expect("channel_mean_backward shape")
}

pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| TensorError::invalid("concat_channels", "no inputs"))?;
    let base = first.shape();
    for p in parts {
        if p.shape().with_channels(1) != base.with_channels(1) {
            return Err(TensorError::dim(
                "concat_channels",
                format!("{} vs {}", p.shape(), base),
            ));
        }
    }
    let total: usize = parts.iter().map(|p| p.shape().channels()).sum();
    let mut data = Vec::with_capacity(base.pixels() * total);
    for px in 0..base.pixels() {
        for p in parts {
            let c = p.shape().channels();
            data.extend_from_slice(&p.data()[px * c..(px + 1) * c]);
        }
    }
    Tensor::new(base.with_channels(total), data)
}

/// Split a channel-concatenated gradient back into per-input pieces.
pub fn concat_channels_backward(widths: &[usize], grad: &Tensor) -> Vec<Tensor> {
    let total: usize = widths.iter().sum();
    let shape = grad.shape();
    let mut outs: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(shape.pixels() * w)).collect();
    for px in grad.data().chunks_exact(total) {
        let mut off = 0;
        for (out, &w) in outs.iter_mut().zip(widths) {
            out.extend_from_slice(&px[off..off + w]);
            off += w;
        }
    }
    outs.into_iter()
        .zip(widths)
        .map(|(d, &w)| Tensor::new(shape.with_channels(w), d).expect("split shape"))
        .collect()
}

/// Numerically stable softmax over the channel axis of every pixel.
pub fn softmax_channels(x: &Tensor) -> Result<Tensor> {
    let c = x.shape().channels();
    if c == 0 {
        return Err(TensorError::invalid("softmax_channels", "zero channels"));
    }
    let mut data = Vec::with_capacity(x.len());
    for px in x.data().chunks_exact(c) {
        let max = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = data.len();
        let mut total = 0.0;
        for &v in px {
            let e = (v - max).exp();
            total += e;
            data.push(e);
        }
        for v in &mut data[start..] {
            *v /= total;
        }
    }
    Tensor::new(x.shape(), data)?.ensure_finite("softmax_channels")
}

/// Softmax adjoint from the saved output `y`: `y * (g - <y, g>)` per pixel.
pub fn softmax_channels_backward(y: &Tensor, grad: &Tensor) -> Tensor {
    let c = y.shape().channels();
    let mut data = Vec::with_capacity(y.len());
    for (yp, gp) in y.data().chunks_exact(c).zip(grad.data().chunks_exact(c)) {
        let dot: f64 = yp.iter().zip(gp).map(|(a, b)| a * b).sum();
        data.extend(yp.iter().zip(gp).map(|(a, b)| a * (b - dot)));
    }
    Tensor::new(y.shape(), data).expect("softmax_backward shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_examples() {
        let x = Tensor::new(Shape::vector(3), vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = Tensor::full(Shape::vector(3), 1.0);
        assert_eq!(relu_backward(&x, &g).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_is_identity_on_positive_input() {
        let x = Tensor::from_fn(Shape::new(1, 3, 3, 2), |_, y, x, c| 0.5 + (y + x + c) as f64);
        assert_eq!(relu(&x), x);
    }

    #[test]
    fn softmax_uniform_and_saturated() {
        let u = softmax_channels(&Tensor::full(Shape::new(1, 1, 1, 81), 3.0)).unwrap();
        assert!(u.data().iter().all(|&v| (v - 1.0 / 81.0).abs() < 1e-15));

        let mut logits = Tensor::zeros(Shape::new(1, 1, 1, 81));
        logits.set(0, 0, 0, 17, 50.0);
        let s = softmax_channels(&logits).unwrap();
        assert!((s.at(0, 0, 0, 17) - 1.0).abs() <= 1e-15);
        assert!(s.data().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor::from_fn(Shape::new(1, 2, 2, 1), |_, y, x, _| (y * 2 + x) as f64);
        let b = Tensor::from_fn(Shape::new(1, 2, 2, 2), |_, y, x, c| (10 * c + y * 2 + x) as f64);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape().channels(), 3);
        assert_eq!(cat.at(0, 1, 0, 2), b.at(0, 1, 0, 1));
        let parts = concat_channels_backward(&[1, 2], &cat);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn abs_subgradient_at_zero_is_zero() {
        let x = Tensor::new(Shape::vector(3), vec![-2.0, 0.0, 3.0]).unwrap();
        let g = Tensor::full(Shape::vector(3), 2.0);
        assert_eq!(abs_backward(&x, &g).data(), &[-2.0, 0.0, 2.0]);
    }
}
