//! Fixtures and brute-force oracles shared by the integration tests and the
//! acceptance runner.

#![allow(dead_code)]

use pansharp_core::losses::{sis_loss_fam, sis_loss_psm};
use pansharp_tensor::{Shape, ShiftMinMode, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// Printed by `python3 tests/oracles/metrics.py`.
pub const PSNR: f64 = 30.578793488110918;
pub const SCC: f64 = 0.20843911084605427;
pub const ERGAS: f64 = 1.4764838432310694;
pub const Q_BAND0: f64 = 0.9906672928496756;
pub const D_LAMBDA: f64 = 0.009501482070544779;
pub const D_S: f64 = 0.0118555611728317;
pub const QNR: f64 = 0.9787556021585434;
pub const JQM: f64 = 0.8000238043199019;

/// Agreement required with the scripted metric oracle.
pub const TOL: f64 = 1e-8;

pub fn reference_at(y: f64, x: f64, c: usize) -> f64 {
    let c = c as f64;
    0.5 + 0.25 * (0.19 * x + 0.11 * y + 1.3 * c).sin() + 0.15 * (0.07 * x * y / 8.0 + 0.4 * c).cos()
}

pub fn reference(h: usize, w: usize) -> Tensor {
    Tensor::from_fn(Shape::new(1, h, w, 3), |_, y, x, c| reference_at(y as f64, x as f64, c))
}

pub fn candidate(h: usize, w: usize) -> Tensor {
    Tensor::from_fn(Shape::new(1, h, w, 3), |_, y, x, c| {
        let wobble = 0.04 * (2.1 * x as f64 - 1.3 * y as f64 + 0.7 * c as f64).sin();
        let hashed = 0.03 * ((x * 7 + y * 13 + c * 5) % 11) as f64 / 11.0 - 0.015;
        reference_at(y as f64, x as f64, c) + wobble + hashed
    })
}

pub fn pan(h: usize, w: usize) -> Tensor {
    let r = reference(h, w);
    Tensor::from_fn(Shape::new(1, h, w, 1), |_, y, x, _| {
        0.35 * r.at(0, y, x, 0) + 0.45 * r.at(0, y, x, 1) + 0.2 * r.at(0, y, x, 2) + 0.02 * (0.9 * x as f64).sin()
    })
}

pub fn ms(h: usize, w: usize) -> Tensor {
    Tensor::from_fn(Shape::new(1, h, w, 3), |_, y, x, c| reference_at(y as f64 * 4.0 + 1.5, x as f64 * 4.0 + 1.5, c))
}

pub fn plane(x: &Tensor, c: usize) -> Tensor {
    let [_, h, w, _] = x.shape().dims();
    Tensor::from_fn(Shape::new(1, h, w, 1), |_, y, xx, _| x.at(0, y, xx, c))
}

/// Nearest-neighbour ×4 upscaling, so box-downsampling recovers the source exactly.
pub fn upscale(ms: &Tensor) -> Tensor {
    let [_, h, w, c] = ms.shape().dims();
    Tensor::from_fn(Shape::new(1, 4 * h, 4 * w, c), |_, y, x, ch| ms.at(0, y / 4, x / 4, ch))
}

pub fn clampi(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

pub fn random_image(seed: u64, h: usize, w: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(Shape::new(1, h, w, 3), |_, _, _, _| rng.gen::<f64>())
}

/// `out(y, x) = img(y - dy, x - dx)` with replicate boundary.
pub fn translate(img: &Tensor, dy: isize, dx: isize) -> Tensor {
    let [_, h, w, _] = img.shape().dims();
    Tensor::from_fn(img.shape(), |b, y, x, c| img.at(b, clampi(y as isize - dy, h), clampi(x as isize - dx, w), c))
}

pub fn scalar(f: impl FnOnce(&mut Tape) -> pansharp_tensor::Result<pansharp_tensor::Var>) -> f64 {
    let mut tape = Tape::new();
    let v = f(&mut tape).unwrap();
    tape.value(v).item().unwrap()
}

pub fn sis_fam(pred: &Tensor, reference: &Tensor) -> f64 {
    scalar(|t| {
        let (p, r) = (t.constant(pred.clone()), t.constant(reference.clone()));
        sis_loss_fam(t, p, r, ShiftMinMode::PerChannel)
    })
}

pub fn sis_psm(pred: &Tensor, reference: &Tensor) -> f64 {
    scalar(|t| {
        let (p, r) = (t.constant(pred.clone()), t.constant(reference.clone()));
        sis_loss_psm(t, p, r, ShiftMinMode::PerChannel)
    })
}

/// Mean of the per-pixel minimum over the 81 shifts, written out directly.
pub fn brute_force(pred: &Tensor, reference: &Tensor, stride: isize) -> f64 {
    let [_, h, w, c] = pred.shape().dims();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut best = f64::INFINITY;
                for i in -4..=4 {
                    for j in -4..=4 {
                        let r = reference.at(0, clampi(y as isize + stride * i, h), clampi(x as isize + stride * j, w), ch);
                        best = best.min((pred.at(0, y, x, ch) - r).abs());
                    }
                }
                total += best;
            }
        }
    }
    total / (h * w * c) as f64
}

pub fn interior_max(map: &Tensor, band: usize) -> f64 {
    let [_, h, w, c] = map.shape().dims();
    let mut m: f64 = 0.0;
    for y in band..h - band {
        for x in band..w - band {
            for ch in 0..c {
                m = m.max(map.at(0, y, x, ch));
            }
        }
    }
    m
}

/// Random feature map and a row-normalized 81-way distribution per pixel.
pub fn random_instance(seed: u64, h: usize, w: usize, c: usize) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = Tensor::from_fn(Shape::new(1, h, w, c), |_, _, _, _| rng.sample(StandardNormal));
    let mut m = Tensor::from_fn(Shape::new(1, h, w, 81), |_, _, _, _| rng.gen::<f64>().powi(3));
    for px in m.data_mut().chunks_exact_mut(81) {
        let s: f64 = px.iter().sum();
        px.iter_mut().for_each(|v| *v /= s);
    }
    (f, m)
}

/// `out(y, x) = Σ f(y + i, x + j) · M[(i + 4) * 9 + (j + 4)](y, x)`, written as loops.
pub fn gather_loop_oracle(f: &Tensor, m: &Tensor) -> Tensor {
    let [_, h, w, _] = f.shape().dims();
    Tensor::from_fn(f.shape(), |b, y, x, c| {
        let mut acc = 0.0;
        for i in -4..=4isize {
            for j in -4..=4isize {
                let k = ((i + 4) * 9 + (j + 4)) as usize;
                acc += f.at(b, clampi(y as isize + i, h), clampi(x as isize + j, w), c) * m.at(b, y, x, k);
            }
        }
        acc
    })
}

/// All 81 shifted copies of `f`, blended per pixel by `m`.
pub fn gather_stack_oracle(f: &Tensor, m: &Tensor) -> Tensor {
    let [_, h, w, _] = f.shape().dims();
    let mut out = Tensor::zeros(f.shape());
    for i in -4..=4isize {
        for j in -4..=4isize {
            let k = ((i + 4) * 9 + (j + 4)) as usize;
            let shifted = Tensor::from_fn(f.shape(), |b, y, x, c| f.at(b, clampi(y as isize + i, h), clampi(x as isize + j, w), c));
            out = Tensor::from_fn(f.shape(), |b, y, x, c| out.at(b, y, x, c) + shifted.at(b, y, x, c) * m.at(b, y, x, k));
        }
    }
    out
}

pub fn one_hot(h: usize, w: usize, dy: isize, dx: isize) -> Tensor {
    let k = ((dy + 4) * 9 + (dx + 4)) as usize;
    Tensor::from_fn(Shape::new(1, h, w, 81), |_, _, _, c| if c == k { 1.0 } else { 0.0 })
}
