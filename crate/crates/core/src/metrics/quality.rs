use pansharp_tensor::ops::{box_downsample, channel_mean};
use pansharp_tensor::{clamp_index, Shape, Tensor};

use super::{MetricError, MetricResult};
use crate::fam::SCALE;

/// Text-output stand-in for the infinite PSNR of identical images.
pub const PSNR_CAP: f64 = 99.0;
/// Side of the square, non-overlapping Q-index windows at PAN resolution.
pub const Q_WINDOW: usize = 32;
/// Window side for planes at MS resolution: the same ground footprint.
pub const Q_WINDOW_LOW: usize = Q_WINDOW / SCALE;

fn single(metric: &'static str, x: &Tensor) -> MetricResult<()> {
    if x.shape().batch() != 1 || x.is_empty() {
        return Err(MetricError::Invalid {
            metric,
            detail: format!("expected one non-empty image, got {}", x.shape()),
        });
    }
    Ok(())
}

fn same_shape(metric: &'static str, a: &Tensor, b: &Tensor) -> MetricResult<()> {
    single(metric, a)?;
    if a.shape() != b.shape() {
        return Err(MetricError::Shape {
            metric,
            a: a.shape(),
            b: b.shape(),
        });
    }
    Ok(())
}

fn band(x: &Tensor, c: usize) -> Vec<f64> {
    let n = x.shape().channels();
    x.data().iter().skip(c).step_by(n).copied().collect()
}

/// `10 log10(peak² / MSE)`; `+∞` for identical images.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> MetricResult<f64> {
    same_shape("psnr", a, b)?;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn psnr_capped(value: f64) -> f64 {
    value.min(PSNR_CAP)
}

/// 3×3 Laplacian `[0,-1,0; -1,4,-1; 0,-1,0]` with replicate padding, per channel.
pub fn laplacian(x: &Tensor) -> Tensor {
    let [_, h, w, _] = x.shape().dims();
    Tensor::from_fn(x.shape(), |b, y, xx, c| {
        let at = |dy: isize, dx: isize| {
            x.at(b, clamp_index(y as isize + dy, h), clamp_index(xx as isize + dx, w), c)
        };
        4.0 * at(0, 0) - at(-1, 0) - at(1, 0) - at(0, -1) - at(0, 1)
    })
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spatial correlation coefficient: mean over bands of the Pearson
/// correlation between Laplacian-filtered images.
pub fn scc(a: &Tensor, b: &Tensor) -> MetricResult<f64> {
    same_shape("scc", a, b)?;
    let (la, lb) = (laplacian(a), laplacian(b));
    let bands = a.shape().channels();
    let mut total = 0.0;
    for c in 0..bands {
        total += pearson(&band(&la, c), &band(&lb, c)).ok_or(MetricError::Flat { metric: "scc" })?;
    }
    Ok(total / bands as f64)
}

/// `100 · ratio · sqrt(mean_l (RMSE_l / μ_l)²)` with `μ_l` the reference band mean.
pub fn ergas(candidate: &Tensor, reference: &Tensor, ratio: f64) -> MetricResult<f64> {
    same_shape("ergas", candidate, reference)?;
    let bands = reference.shape().channels();
    let mut acc = 0.0;
    for c in 0..bands {
        let (p, r) = (band(candidate, c), band(reference, c));
        let n = r.len() as f64;
        let mu = r.iter().sum::<f64>() / n;
        if mu == 0.0 {
            return Err(MetricError::ZeroMean { metric: "ergas", band: c });
        }
        let mse = p.iter().zip(&r).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
        acc += mse / (mu * mu);
    }
    Ok(100.0 * ratio * (acc / bands as f64).sqrt())
}

fn q_window(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let den = (saa + sbb) * (ma * ma + mb * mb);
    if den == 0.0 {
        return None;
    }
    Some(4.0 * sab * ma * mb / den)
}

/// Universal image quality index of two single-band `[1,H,W,1]` planes with
/// the full-resolution window [`Q_WINDOW`].
pub fn q_index(a: &Tensor, b: &Tensor) -> MetricResult<f64> {
    q_index_windowed(a, b, Q_WINDOW)
}

/// Q index averaged over non-overlapping square windows of side
/// `min(window, H, W)`. Windows with a zero denominator are skipped.
pub fn q_index_windowed(a: &Tensor, b: &Tensor, window: usize) -> MetricResult<f64> {
    same_shape("q_index", a, b)?;
    if a.shape().channels() != 1 {
        return Err(MetricError::Invalid {
            metric: "q_index",
            detail: "expects single-band planes".into(),
        });
    }
    let [_, h, w, _] = a.shape().dims();
    let side = window.max(1).min(h).min(w);
    let (mut total, mut count) = (0.0, 0usize);
    let mut wa = Vec::with_capacity(side * side);
    let mut wb = Vec::with_capacity(side * side);
    for y0 in (0..=h - side).step_by(side) {
        for x0 in (0..=w - side).step_by(side) {
            wa.clear();
            wb.clear();
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    wa.push(a.at(0, y, x, 0));
                    wb.push(b.at(0, y, x, 0));
                }
            }
            if let Some(q) = q_window(&wa, &wb) {
                total += q;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricError::Flat { metric: "q_index" });
    }
    Ok(total / count as f64)
}

fn plane(x: &Tensor, c: usize) -> Tensor {
    let s = x.shape();
    Tensor::new(Shape::new(1, s.height(), s.width(), 1), band(x, c)).expect("plane shape")
}

fn check_triple(metric: &'static str, ps: &Tensor, ms: &Tensor, pan: &Tensor) -> MetricResult<()> {
    single(metric, ps)?;
    single(metric, ms)?;
    let (p, m, q) = (ps.shape(), ms.shape(), pan.shape());
    let ok = p.channels() == m.channels()
        && p.height() == SCALE * m.height()
        && p.width() == SCALE * m.width()
        && q == p.with_channels(1);
    if !ok {
        return Err(MetricError::Invalid {
            metric,
            detail: format!("inconsistent ps {p}, ms {m}, pan {q}"),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Qnr {
    pub d_lambda: f64,
    pub d_s: f64,
    pub qnr: f64,
}

impl Qnr {
    pub fn from_distortions(d_lambda: f64, d_s: f64) -> Self {
        Qnr {
            d_lambda,
            d_s,
            qnr: ((1.0 - d_lambda) * (1.0 - d_s)).clamp(0.0, 1.0),
        }
    }
}

/// Quality with no reference, exponents 1. The degraded PAN is its 4×4 box
/// average; the result is clamped to `[0, 1]`.
pub fn qnr(ps: &Tensor, ms: &Tensor, pan: &Tensor) -> MetricResult<Qnr> {
    check_triple("qnr", ps, ms, pan)?;
    let bands = ps.shape().channels();
    let ps_planes: Vec<Tensor> = (0..bands).map(|c| plane(ps, c)).collect();
    let ms_planes: Vec<Tensor> = (0..bands).map(|c| plane(ms, c)).collect();

    let mut d_lambda = 0.0;
    if bands > 1 {
        for l in 0..bands {
            for r in 0..bands {
                if l != r {
                    let hi = q_index(&ps_planes[l], &ps_planes[r])?;
                    let lo = q_index_windowed(&ms_planes[l], &ms_planes[r], Q_WINDOW_LOW)?;
                    d_lambda += (hi - lo).abs();
                }
            }
        }
        d_lambda /= (bands * (bands - 1)) as f64;
    }

    let pan_down = box_downsample(pan, SCALE).map_err(|e| MetricError::Invalid {
        metric: "qnr",
        detail: e.to_string(),
    })?;
    let mut d_s = 0.0;
    for l in 0..bands {
        let hi = q_index(&ps_planes[l], pan)?;
        let lo = q_index_windowed(&ms_planes[l], &pan_down, Q_WINDOW_LOW)?;
        d_s += (hi - lo).abs();
    }
    d_s /= bands as f64;

    Ok(Qnr::from_distortions(d_lambda, d_s))
}

/// Mean per-band Q-index between two images at MS resolution.
pub fn spectral_q(reference: &Tensor, candidate: &Tensor) -> MetricResult<f64> {
    same_shape("spectral_q", reference, candidate)?;
    let bands = reference.shape().channels();
    let mut total = 0.0;
    for c in 0..bands {
        total += q_index_windowed(&plane(reference, c), &plane(candidate, c), Q_WINDOW_LOW)?;
    }
    Ok(total / bands as f64)
}

/// Joint quality, this project's variant:
/// `½·max(0, Q(ms, box_down(ps))) + ½·(1 + scc(pan, lum(ps)))/2`.
pub fn jqm(ps: &Tensor, ms: &Tensor, pan: &Tensor) -> MetricResult<f64> {
    check_triple("jqm", ps, ms, pan)?;
    let down = box_downsample(ps, SCALE).map_err(|e| MetricError::Invalid {
        metric: "jqm",
        detail: e.to_string(),
    })?;
    let spectral = spectral_q(ms, &down)?.max(0.0);
    let spatial = scc(pan, &channel_mean(ps))?;
    Ok(0.5 * spectral + 0.5 * (1.0 + spatial) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, c: usize, f: impl Fn(usize, usize, usize) -> f64) -> Tensor {
        Tensor::from_fn(Shape::new(1, h, w, c), |_, y, x, ch| f(y, x, ch))
    }

    #[test]
    fn psnr_closed_forms() {
        let a = img(4, 4, 1, |_, _, _| 0.5);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(psnr_capped(f64::INFINITY), PSNR_CAP);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn ergas_closed_forms() {
        let r = img(4, 4, 1, |y, x, _| if (y + x) % 2 == 0 { 0.2 } else { 0.6 });
        assert_eq!(ergas(&r, &r, 0.25).unwrap(), 0.0);
        // mean 0.4, RMSE 0.4.
        let p = r.map(|v| v + 0.4);
        assert!((ergas(&p, &r, 0.25).unwrap() - 25.0).abs() < 1e-12);
        let zero = img(2, 2, 1, |_, _, _| 0.0);
        assert!(matches!(ergas(&zero, &zero, 0.25), Err(MetricError::ZeroMean { .. })));
    }

    #[test]
    fn scc_self_and_flat() {
        let x = img(8, 8, 2, |y, x, c| ((y * 3 + x * 5 + c) % 7) as f64);
        assert_eq!(scc(&x, &x).unwrap(), 1.0);
        let flat = img(8, 8, 2, |_, _, _| 1.0);
        assert!(matches!(scc(&x, &flat), Err(MetricError::Flat { .. })));
    }

    #[test]
    fn q_index_of_identical_planes_is_one() {
        let x = img(40, 40, 1, |y, x, _| ((y * 7 + x * 3) % 11) as f64 / 10.0 + 0.1);
        assert!((q_index(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qnr_closed_form() {
        assert!((Qnr::from_distortions(0.1, 0.1).qnr - 0.81).abs() < 1e-15);
        assert_eq!(Qnr::from_distortions(1.5, 0.0).qnr, 0.0);
    }
}
