//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Maximum admissible relative error.
    pub tolerance: f64,
    /// Elements with `|analytic| + |numeric|` below this are skipped.
    pub skip_below: f64,
    /// Upper bound on perturbed elements per input; larger inputs are sampled.
    pub max_elements: usize,
    /// Skip elements whose ±step evaluations change a ReLU, `abs` or
    /// shift-minimum branch; the gradient is not defined by a difference
    /// quotient across a kink.
    pub skip_branch_changes: bool,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            skip_below: 1e-8,
            max_elements: 64,
            skip_branch_changes: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    /// Elements skipped because a perturbation crossed a branch point.
    pub branch_skips: usize,
    pub tolerance: f64,
    /// `(input, element, analytic, numeric)` of the largest relative error.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance && self.checked > 0 && self.branch_skips <= self.checked
    }
}

/// Relative error used throughout: `|a - n| / max(|a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Compare the tape gradient of `f` against central differences.
///
/// `f` builds a scalar on a fresh tape from the given input handles. Inputs
/// flagged in `wrt` are differentiable leaves and get checked; the others are
/// constants.
pub fn check<F>(name: &str, inputs: &[Tensor], wrt: &[bool], cfg: &GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    assert_eq!(inputs.len(), wrt.len(), "one wrt flag per input");
    let eval = |values: &[Tensor]| -> Result<(Tape, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values
            .iter()
            .zip(wrt)
            .map(|(t, &d)| if d { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()?;
        Ok((tape, out))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .zip(wrt)
        .map(|(t, &d)| if d { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
        .collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let base_signature = tape.branch_signature();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        name: name.to_string(),
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        branch_skips: 0,
        tolerance: cfg.tolerance,
        worst: None,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, (&var, &d)) in vars.iter().zip(wrt).enumerate() {
        if !d {
            continue;
        }
        let analytic = grads.get(var).expect("leaf gradient").clone();
        let n = inputs[i].len();
        let picks: Vec<usize> = if n <= cfg.max_elements {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, cfg.max_elements).into_vec();
            v.sort_unstable();
            v
        };
        for e in picks {
            let orig = inputs[i].data()[e];
            work[i].data_mut()[e] = orig + cfg.step;
            let (plus, out) = eval(&work)?;
            work[i].data_mut()[e] = orig - cfg.step;
            let (minus, _) = eval(&work)?;
            work[i].data_mut()[e] = orig;
            if cfg.skip_branch_changes
                && (plus.branch_signature() != base_signature || minus.branch_signature() != base_signature)
            {
                report.branch_skips += 1;
                continue;
            }
            let numeric = plus.difference(&minus, out) / (2.0 * cfg.step);
            let a = analytic.data()[e];
            if a.abs() + numeric.abs() < cfg.skip_below {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            let rel = relative_error(a, numeric);
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((i, e, a, numeric));
            }
        }
    }
    Ok(report)
}

type UnaryOp = fn(&mut Tape, Var) -> Result<Var>;
type BinaryOp = fn(&mut Tape, Var, Var) -> Result<Var>;

/// Finite-difference checks for every differentiable tape op on small random
/// shapes. Each op output is projected to a scalar with fixed random weights.
pub fn op_suite(seed: u64, cfg: &GradCheckConfig) -> Result<Vec<GradCheckReport>> {
    use crate::ops::{Padding, ShiftMinMode};
    use crate::Shape;
    use rand::Rng;
    use rand_distr::StandardNormal;

    let rng = std::cell::RefCell::new(ChaCha8Rng::seed_from_u64(seed));
    let rand_t = |shape: Shape| {
        let mut r = rng.borrow_mut();
        Tensor::from_fn(shape, |_, _, _, _| r.sample(StandardNormal))
    };
    let cfg = GradCheckConfig { seed, ..*cfg };

    // Project a non-scalar output through fixed weights.
    fn project(t: &mut Tape, v: Var, w: &Tensor) -> Result<Var> {
        t.dot_const(v, w.clone())
    }

    let mut reports = Vec::new();
    let s = Shape::new(2, 4, 5, 3);

    for (name, padding, kh, kw) in [
        ("conv2d/replicate3x3", Padding::Replicate, 3, 3),
        ("conv2d/zero3x3", Padding::Zero, 3, 3),
        ("conv2d/1x1", Padding::Replicate, 1, 1),
        ("conv2d/replicate5x3", Padding::Replicate, 5, 3),
    ] {
        let x = rand_t(s);
        let k = rand_t(Shape::new(kh, kw, 3, 2));
        let b = rand_t(Shape::vector(2));
        let w = rand_t(s.with_channels(2));
        reports.push(check(name, &[x, k, b], &[true; 3], &cfg, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], padding)?;
            project(t, y, &w)
        })?);
    }

    let unary: [(&str, UnaryOp); 5] = [
        ("relu", |t, v| t.relu(v)),
        ("abs", |t, v| t.abs(v)),
        ("scale", |t, v| t.scale(v, -1.7)),
        ("channel_mean", |t, v| t.channel_mean(v)),
        ("softmax_channels", |t, v| t.softmax_channels(v)),
    ];
    for (name, op) in unary {
        let x = rand_t(s);
        let out_shape = if name == "channel_mean" { s.with_channels(1) } else { s };
        let w = rand_t(out_shape);
        reports.push(check(name, &[x], &[true], &cfg, |t, v| {
            let y = op(t, v[0])?;
            project(t, y, &w)
        })?);
    }

    let binary: [(&str, BinaryOp); 3] = [
        ("add", |t, a, b| t.add(a, b)),
        ("sub", |t, a, b| t.sub(a, b)),
        ("mul", |t, a, b| t.mul(a, b)),
    ];
    for (name, op) in binary {
        let (a, b, w) = (rand_t(s), rand_t(s), rand_t(s));
        reports.push(check(name, &[a, b], &[true, true], &cfg, |t, v| {
            let y = op(t, v[0], v[1])?;
            project(t, y, &w)
        })?);
    }

    reports.push(check("mean", &[rand_t(s)], &[true], &cfg, |t, v| {
        let m = t.mean(v[0])?;
        t.mul(m, m)
    })?);
    reports.push(check("sum", &[rand_t(s)], &[true], &cfg, |t, v| {
        let m = t.sum(v[0])?;
        t.mul(m, m)
    })?);

    {
        let (a, b) = (rand_t(s), rand_t(s.with_channels(2)));
        let w = rand_t(s.with_channels(5));
        reports.push(check("concat_channels", &[a, b], &[true, true], &cfg, |t, v| {
            let y = t.concat_channels(&[v[0], v[1]])?;
            project(t, y, &w)
        })?);
    }
    {
        let x = rand_t(Shape::new(1, 3, 2, 81));
        let w = rand_t(Shape::new(1, 3, 2, 81));
        reports.push(check("softmax_channels/81", &[x], &[true], &cfg, |t, v| {
            let y = t.softmax_channels(v[0])?;
            project(t, y, &w)
        })?);
    }
    {
        let x = rand_t(Shape::new(2, 8, 4, 1));
        let w = rand_t(Shape::new(2, 2, 1, 16));
        reports.push(check("space_to_channel", &[x], &[true], &cfg, |t, v| {
            let y = t.space_to_channel(v[0], 4)?;
            project(t, y, &w)
        })?);
        let x = rand_t(Shape::new(1, 2, 3, 32));
        let w = rand_t(Shape::new(1, 8, 12, 2));
        reports.push(check("pixel_shuffle", &[x], &[true], &cfg, |t, v| {
            let y = t.pixel_shuffle(v[0], 4)?;
            project(t, y, &w)
        })?);
    }
    {
        let x = rand_t(Shape::new(2, 5, 6, 1));
        let w = rand_t(Shape::new(2, 5, 6, 2));
        reports.push(check("spatial_gradient", &[x], &[true], &cfg, |t, v| {
            let y = t.spatial_gradient(v[0])?;
            project(t, y, &w)
        })?);
    }
    {
        let x = rand_t(Shape::new(1, 3, 4, 2));
        let w = rand_t(Shape::new(1, 12, 16, 2));
        reports.push(check("resize_bilinear/x4", &[x], &[true], &cfg, |t, v| {
            let y = t.resize_bilinear(v[0], 12, 16)?;
            project(t, y, &w)
        })?);
        let x = rand_t(Shape::new(1, 8, 12, 2));
        let w = rand_t(Shape::new(1, 2, 3, 2));
        reports.push(check("resize_bilinear/x0.25", std::slice::from_ref(&x), &[true], &cfg, |t, v| {
            let y = t.resize_bilinear(v[0], 2, 3)?;
            project(t, y, &w)
        })?);
        reports.push(check("box_downsample", &[x], &[true], &cfg, |t, v| {
            let y = t.box_downsample(v[0], 4)?;
            project(t, y, &w)
        })?);
    }
    {
        let fs = Shape::new(2, 6, 7, 3);
        let f = rand_t(fs);
        let m = rand_t(fs.with_channels(81));
        let w = rand_t(fs);
        reports.push(check("pwpac", &[f, m], &[true, true], &cfg, |t, v| {
            let y = t.pwpac(v[0], v[1], 4)?;
            project(t, y, &w)
        })?);
    }
    for (name, stride, mode) in [
        ("shift_min_abs/stride1", 1, ShiftMinMode::PerChannel),
        ("shift_min_abs/stride4", 4, ShiftMinMode::PerChannel),
        ("shift_min_abs/joint", 1, ShiftMinMode::Joint),
    ] {
        // Quantised reference levels with a guaranteed in-window match keep
        // every minimum away from a sign-changing tie.
        let shape = Shape::new(1, 10, 12, 3);
        let (reference, dy, dx) = {
            let mut r = rng.borrow_mut();
            let reference = Tensor::from_fn(shape, |_, _, _, _| {
                f64::from(r.gen_range(0u8..=10)) * 0.1 + 1e-3 * r.gen::<f64>()
            });
            (reference, r.gen_range(-2isize..=2), r.gen_range(-2isize..=2))
        };
        let shifted = reference.translate(dy * stride as isize, dx * stride as isize);
        let pred = shifted.map(|v| v + 0.02);
        let w = rand_t(shape);
        reports.push(check(name, &[pred, reference], &[true, false], &cfg, |t, v| {
            let y = t.shift_min_abs(v[0], v[1], 4, stride, mode)?;
            project(t, y, &w)
        })?);
    }
    Ok(reports)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::Shape;

    #[test]
    fn quadratic_passes() {
        let x = Tensor::from_fn(Shape::new(1, 2, 2, 1), |_, y, x, _| 0.3 + (y * 2 + x) as f64);
        let r = check("square", &[x], &[true], &GradCheckConfig::default(), |t, v| {
            let sq = t.mul(v[0], v[0])?;
            t.sum(sq)
        })
        .unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checked, 4);
    }

    #[test]
    fn relative_error_is_symmetric() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }
}
