//! Stride-1 "same" convolution via im2col and a GEMM.
//!
//! Kernels are `[kh, kw, cin, cout]`, so for a fixed batch item the kernel is
//! already the `(kh*kw*cin) x cout` right-hand matrix of the product.

use crate::error::{Result, TensorError};
use crate::tensor::{Shape, Tensor};

/// Boundary handling for convolution taps that fall outside the image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Padding {
    #[default]
    Replicate,
    Zero,
}

fn check(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<()> {
    let [kh, kw, cin, cout] = kernel.shape().dims();
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(TensorError::invalid(
            "conv2d",
            format!("kernel spatial dims must be odd, got {kh}x{kw}"),
        ));
    }
    if input.shape().channels() != cin {
        return Err(TensorError::dim(
            "conv2d",
            format!("input {} vs kernel {}", input.shape(), kernel.shape()),
        ));
    }
    if bias.shape() != Shape::vector(cout) {
        return Err(TensorError::dim(
            "conv2d",
            format!("bias {} vs {cout} output channels", bias.shape()),
        ));
    }
    Ok(())
}

/// Source coordinate for every (tap, output coordinate) pair; `None` reads zero.
fn tap_table(len: usize, taps: usize, padding: Padding) -> Vec<Option<usize>> {
    let half = (taps / 2) as isize;
    let mut table = Vec::with_capacity(len * taps);
    for t in 0..taps as isize {
        for o in 0..len as isize {
            let s = o + t - half;
            table.push(if (0..len as isize).contains(&s) {
                Some(s as usize)
            } else {
                match padding {
                    Padding::Replicate => Some(s.clamp(0, len as isize - 1) as usize),
                    Padding::Zero => None,
                }
            });
        }
    }
    table
}

struct Geometry {
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    cin: usize,
    rows: Vec<Option<usize>>,
    cols: Vec<Option<usize>>,
}

impl Geometry {
    fn new(input: Shape, kernel: Shape, padding: Padding) -> Self {
        let [_, h, w, cin] = input.dims();
        let [kh, kw, _, _] = kernel.dims();
        Geometry {
            h,
            w,
            kh,
            kw,
            cin,
            rows: tap_table(h, kh, padding),
            cols: tap_table(w, kw, padding),
        }
    }

    fn k(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }

    /// Unfold batch item `b` into a `(h*w) x (kh*kw*cin)` row-major matrix.
    fn im2col(&self, input: &Tensor, b: usize, cols: &mut [f64]) {
        let k = self.k();
        let cin = self.cin;
        for y in 0..self.h {
            for x in 0..self.w {
                let row = &mut cols[(y * self.w + x) * k..(y * self.w + x + 1) * k];
                for ky in 0..self.kh {
                    let sy = self.rows[ky * self.h + y];
                    for kx in 0..self.kw {
                        let dst = &mut row[(ky * self.kw + kx) * cin..(ky * self.kw + kx + 1) * cin];
                        match (sy, self.cols[kx * self.w + x]) {
                            (Some(sy), Some(sx)) => dst.copy_from_slice(input.pixel(b, sy, sx)),
                            _ => dst.fill(0.0),
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add the rows of an unfolded gradient back onto the image grid.
    fn col2im(&self, dcols: &[f64], b: usize, grad: &mut Tensor) {
        let k = self.k();
        let cin = self.cin;
        for y in 0..self.h {
            for x in 0..self.w {
                let row = &dcols[(y * self.w + x) * k..(y * self.w + x + 1) * k];
                for ky in 0..self.kh {
                    let Some(sy) = self.rows[ky * self.h + y] else {
                        continue;
                    };
                    for kx in 0..self.kw {
                        let Some(sx) = self.cols[kx * self.w + x] else {
                            continue;
                        };
                        let src = &row[(ky * self.kw + kx) * cin..(ky * self.kw + kx + 1) * cin];
                        for (g, s) in grad.pixel_mut(b, sy, sx).iter_mut().zip(src) {
                            *g += s;
                        }
                    }
                }
            }
        }
    }
}

/// `C (m x n) = alpha * A (m x k) * B (k x n) + beta * C` on row-major slices.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the slices cover every element addressed by the given strides;
    // callers pass dense row-major (or transposed-view) buffers of exactly
    // m*k, k*n and m*n elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor, padding: Padding) -> Result<Tensor> {
    check(input, kernel, bias)?;
    let geo = Geometry::new(input.shape(), kernel.shape(), padding);
    let cout = kernel.shape().channels();
    let pixels = geo.h * geo.w;
    let k = geo.k();
    let out_shape = input.shape().with_channels(cout);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut cols = if geo.is_pointwise() { Vec::new() } else { vec![0.0; pixels * k] };
    for b in 0..input.shape().batch() {
        let mut block = Vec::with_capacity(pixels * cout);
        for _ in 0..pixels {
            block.extend_from_slice(bias.data());
        }
        let a = if geo.is_pointwise() {
            &input.data()[b * pixels * k..(b + 1) * pixels * k]
        } else {
            geo.im2col(input, b, &mut cols);
            &cols[..]
        };
        gemm(pixels, k, cout, a, (k as isize, 1), kernel.data(), (cout as isize, 1), 1.0, &mut block);
        out.extend_from_slice(&block);
    }
    Tensor::new(out_shape, out)?.ensure_finite("conv2d")
}

/// Gradients of `conv2d` w.r.t. input, kernel and bias; each is computed only
/// when its flag in `needs` is set.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    padding: Padding,
    grad_out: &Tensor,
    needs: [bool; 3],
) -> (Option<Tensor>, Option<Tensor>, Option<Tensor>) {
    let geo = Geometry::new(input.shape(), kernel.shape(), padding);
    let cout = kernel.shape().channels();
    let pixels = geo.h * geo.w;
    let k = geo.k();

    let mut d_input = needs[0].then(|| Tensor::zeros(input.shape()));
    let mut d_kernel = needs[1].then(|| Tensor::zeros(kernel.shape()));
    let d_bias = needs[2].then(|| {
        let mut acc = vec![0.0; cout];
        for px in grad_out.data().chunks_exact(cout) {
            for (a, g) in acc.iter_mut().zip(px) {
                *a += g;
            }
        }
        Tensor::new(Shape::vector(cout), acc).expect("bias shape")
    });

    let mut cols = vec![0.0; if geo.is_pointwise() { 0 } else { pixels * k }];
    let mut dcols = vec![0.0; if d_input.is_some() { pixels * k } else { 0 }];
    for b in 0..input.shape().batch() {
        let g = &grad_out.data()[b * pixels * cout..(b + 1) * pixels * cout];
        if let Some(dk) = d_kernel.as_mut() {
            let a = if geo.is_pointwise() {
                &input.data()[b * pixels * k..(b + 1) * pixels * k]
            } else {
                geo.im2col(input, b, &mut cols);
                &cols[..]
            };
            // dK (k x cout) += cols^T (k x pixels) * g (pixels x cout)
            gemm(k, pixels, cout, a, (1, k as isize), g, (cout as isize, 1), 1.0, dk.data_mut());
        }
        if let Some(di) = d_input.as_mut() {
            // dcols (pixels x k) = g (pixels x cout) * K^T (cout x k)
            gemm(pixels, cout, k, g, (cout as isize, 1), kernel.data(), (1, cout as isize), 0.0, &mut dcols);
            if geo.is_pointwise() {
                di.data_mut()[b * pixels * k..(b + 1) * pixels * k].copy_from_slice(&dcols);
            } else {
                geo.col2im(&dcols, b, di);
            }
        }
    }
    (d_input, d_kernel, d_bias)
}
