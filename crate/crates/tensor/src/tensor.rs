use std::fmt;

use crate::error::{Result, TensorError};

/// Dimensions of a rank-4 tensor.
///
/// Images and feature maps use `(batch, height, width, channels)`. Convolution
/// kernels reuse the same container as `(kh, kw, cin, cout)` and biases are
/// `(1, 1, 1, cout)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub const fn new(batch: usize, height: usize, width: usize, channels: usize) -> Self {
        Shape([batch, height, width, channels])
    }

    pub const fn scalar() -> Self {
        Shape([1, 1, 1, 1])
    }

    pub const fn vector(len: usize) -> Self {
        Shape([1, 1, 1, len])
    }

    pub fn batch(&self) -> usize {
        self.0[0]
    }

    pub fn height(&self) -> usize {
        self.0[1]
    }

    pub fn width(&self) -> usize {
        self.0[2]
    }

    pub fn channels(&self) -> usize {
        self.0[3]
    }

    pub fn dims(&self) -> [usize; 4] {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.len() == 1
    }

    pub fn pixels(&self) -> usize {
        self.0[0] * self.0[1] * self.0[2]
    }

    pub fn with_channels(&self, channels: usize) -> Self {
        Shape([self.0[0], self.0[1], self.0[2], channels])
    }

    pub fn with_spatial(&self, height: usize, width: usize) -> Self {
        Shape([self.0[0], height, width, self.0[3]])
    }

    pub fn with_batch(&self, batch: usize) -> Self {
        Shape([batch, self.0[1], self.0[2], self.0[3]])
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [b, h, w, c] = self.0;
        write!(f, "[{b}, {h}, {w}, {c}]")
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Dense rank-4 `f64` array stored row-major in `(b, y, x, c)` order.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(TensorError::dim(
                "tensor",
                format!("shape {shape} needs {} values, got {}", shape.len(), data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let [nb, nh, nw, nc] = shape.dims();
        let mut data = Vec::with_capacity(shape.len());
        for b in 0..nb {
            for y in 0..nh {
                for x in 0..nw {
                    for c in 0..nc {
                        data.push(f(b, y, x, c));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, b: usize, y: usize, x: usize, c: usize) -> usize {
        let [_, h, w, ch] = self.shape.0;
        ((b * h + y) * w + x) * ch + c
    }

    #[inline]
    pub fn at(&self, b: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(b, y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, y: usize, x: usize, c: usize, value: f64) {
        let i = self.index(b, y, x, c);
        self.data[i] = value;
    }

    /// Channel vector of one pixel.
    #[inline]
    pub fn pixel(&self, b: usize, y: usize, x: usize) -> &[f64] {
        let c = self.shape.channels();
        let i = self.index(b, y, x, 0);
        &self.data[i..i + c]
    }

    #[inline]
    pub fn pixel_mut(&mut self, b: usize, y: usize, x: usize) -> &mut [f64] {
        let c = self.shape.channels();
        let i = self.index(b, y, x, 0);
        &mut self.data[i..i + c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(self, op: &'static str) -> Result<Self> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(TensorError::NonFinite { op })
        }
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.shape.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(TensorError::NotScalar(self.shape))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Compensated sum of all elements.
    pub fn sum(&self) -> f64 {
        compensated_sum(self.data.iter().copied())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy of one batch item as a batch-1 tensor.
    pub fn batch_item(&self, b: usize) -> Tensor {
        let per = self.shape.len() / self.shape.batch();
        Tensor {
            shape: self.shape.with_batch(1),
            data: self.data[b * per..(b + 1) * per].to_vec(),
        }
    }

    /// Concatenate tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| TensorError::invalid("stack", "no tensors given"))?;
        let mut data = Vec::new();
        let mut batch = 0;
        for t in items {
            if t.shape.with_batch(1) != first.shape.with_batch(1) {
                return Err(TensorError::dim(
                    "stack",
                    format!("{} vs {}", t.shape, first.shape),
                ));
            }
            batch += t.shape.batch();
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: first.shape.with_batch(batch),
            data,
        })
    }

    /// Spatial window `[y, y+h) x [x, x+w)` of every batch item.
    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Result<Tensor> {
        let [nb, nh, nw, nc] = self.shape.dims();
        if y + h > nh || x + w > nw {
            return Err(TensorError::dim(
                "crop",
                format!("window {h}x{w} at ({y},{x}) exceeds {}", self.shape),
            ));
        }
        let mut data = Vec::with_capacity(nb * h * w * nc);
        for b in 0..nb {
            for yy in y..y + h {
                let start = self.index(b, yy, x, 0);
                data.extend_from_slice(&self.data[start..start + w * nc]);
            }
        }
        Ok(Tensor {
            shape: Shape::new(nb, h, w, nc),
            data,
        })
    }

    /// Integer translation with replicate boundary: `out(y, x) = self(y - dy, x - dx)`.
    pub fn translate(&self, dy: isize, dx: isize) -> Tensor {
        let [_, h, w, _] = self.shape.dims();
        let mut out = Tensor::zeros(self.shape);
        for b in 0..self.shape.batch() {
            for y in 0..h {
                let sy = clamp_index(y as isize - dy, h);
                for x in 0..w {
                    let sx = clamp_index(x as isize - dx, w);
                    out.pixel_mut(b, y, x).copy_from_slice(self.pixel(b, sy, sx));
                }
            }
        }
        out
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{} ", self.shape)?;
        let shown = &self.data[..self.data.len().min(PREVIEW)];
        write!(f, "{shown:?}")?;
        if self.data.len() > PREVIEW {
            write!(f, " ..")?;
        }
        Ok(())
    }
}

/// Clamp a signed coordinate into `[0, len)`.
#[inline]
pub fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Neumaier summation: the running error term keeps the result within a
/// few ulps regardless of length or ordering of magnitudes.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut total = 0.0f64;
    let mut carry = 0.0;
    for v in values {
        let t = total + v;
        if total.abs() >= v.abs() {
            carry += (total - t) + v;
        } else {
            carry += (v - t) + total;
        }
        total = t;
    }
    total + carry
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1.0, 1e-16, 1e-16, -1.0];
        assert_eq!(compensated_sum(v), 2e-16);
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(Shape::new(1, 2, 2, 1), vec![0.0; 3]).is_err());
    }

    #[test]
    fn index_is_row_major_bhwc() {
        let t = Tensor::from_fn(Shape::new(2, 3, 4, 5), |b, y, x, c| {
            (b * 1000 + y * 100 + x * 10 + c) as f64
        });
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data()[t.index(1, 2, 3, 4)], 1234.0);
    }

    #[test]
    fn translate_moves_content() {
        let t = Tensor::from_fn(Shape::new(1, 6, 6, 1), |_, y, x, _| (y * 6 + x) as f64);
        let s = t.translate(1, -2);
        assert_eq!(s.at(0, 3, 2, 0), t.at(0, 2, 4, 0));
    }

    #[test]
    fn stack_and_split_round_trip() {
        let a = Tensor::full(Shape::new(1, 2, 2, 3), 1.0);
        let b = Tensor::full(Shape::new(1, 2, 2, 3), 2.0);
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), Shape::new(2, 2, 2, 3));
        assert_eq!(s.batch_item(1), b);
        assert_eq!(s.batch_item(0), a);
    }

    #[test]
    fn item_requires_scalar() {
        assert_eq!(Tensor::scalar(3.5).item().unwrap(), 3.5);
        assert!(Tensor::zeros(Shape::new(1, 1, 1, 2)).item().is_err());
    }
}
