//! Finite-difference suites for the network blocks, the losses and the
//! composite training graph, on 8×8 MS / 32×32 PAN tiles.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;

use pansharp_tensor::gradcheck::{check, op_suite, GradCheckConfig, GradCheckReport};
use pansharp_tensor::{Shape, ShiftMinMode, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::fam::AlignmentTarget;
use crate::layers::ResBlock;
use crate::losses::{edge_loss, luminance, sis_loss_fam, sis_loss_psm, total_loss, LossConfig};
use crate::model::{ModelConfig, Network, Variant};
use crate::params::{Bound, ParamStore};

/// MS tile side used by the network suites.
pub const TILE: usize = 8;
/// Elements perturbed per parameter tensor in whole-network checks.
const NETWORK_ELEMENTS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Module {
    Tensor,
    Fam,
    Psm,
    Losses,
    All,
}

impl FromStr for Module {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tensor" => Ok(Module::Tensor),
            "fam" => Ok(Module::Fam),
            "psm" => Ok(Module::Psm),
            "losses" => Ok(Module::Losses),
            "all" => Ok(Module::All),
            _ => Err(Error::Config(format!("unknown module {s:?}"))),
        }
    }
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Module::Tensor => "tensor",
            Module::Fam => "fam",
            Module::Psm => "psm",
            Module::Losses => "losses",
            Module::All => "all",
        };
        f.write_str(s)
    }
}

/// Replace every parameter with a random draw so that no layer sits at its
/// structured initial value (zero logits, zero biases).
pub fn randomize(params: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let is_bias = params.name(id).ends_with(".bias");
        let t = params.get_mut(id);
        let [kh, kw, cin, _] = t.shape().dims();
        let std = if is_bias { 0.1 } else { (1.0 / (kh * kw * cin) as f64).sqrt() };
        let normal = Normal::new(0.0, std).expect("positive std");
        for v in t.data_mut() {
            *v = rng.sample(normal);
        }
    }
}

struct Fixture {
    net: Network,
    ms: Tensor,
    pan: Tensor,
}

fn fixture(variant: Variant, seed: u64) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new(ModelConfig { variant, ..ModelConfig::default() }, seed)?;
    randomize(net.params_mut(), &mut rng);
    let ms = Tensor::from_fn(Shape::new(1, TILE, TILE, 3), |_, _, _, _| rng.gen::<f64>());
    let pan = Tensor::from_fn(Shape::new(1, 4 * TILE, 4 * TILE, 1), |_, _, _, _| rng.gen::<f64>());
    Ok(Fixture { net, ms, pan })
}

/// Check a network-level scalar with respect to the parameters picked by
/// `select` and to the MS input.
fn check_network<F>(name: &str, fx: &Fixture, select: impl Fn(&str) -> bool, cfg: &GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: Fn(&Network, &mut Tape, &Bound, Var, Var) -> Result<Var>,
{
    let params = fx.net.params();
    let mut inputs: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut wrt: Vec<bool> = params.iter().map(|(n, _)| select(n)).collect();
    inputs.push(fx.ms.clone());
    wrt.push(true);
    inputs.push(fx.pan.clone());
    wrt.push(false);
    let n = params.len();
    let cfg = GradCheckConfig {
        max_elements: NETWORK_ELEMENTS,
        ..*cfg
    };
    let report = check(name, &inputs, &wrt, &cfg, |tape, vars| {
        let bound = Bound::from_vars(vars[..n].to_vec());
        f(&fx.net, tape, &bound, vars[n], vars[n + 1]).map_err(|e| match e {
            Error::Tensor(t) => t,
            other => pansharp_tensor::TensorError::Invalid {
                op: "gradcheck",
                detail: other.to_string(),
            },
        })
    })?;
    Ok(report)
}

fn weights(rng: &RefCell<ChaCha8Rng>, shape: Shape) -> Tensor {
    let mut r = rng.borrow_mut();
    Tensor::from_fn(shape, |_, _, _, _| r.sample(StandardNormal))
}

fn fam_suite(seed: u64, cfg: &GradCheckConfig) -> Result<Vec<GradCheckReport>> {
    let rng = RefCell::new(ChaCha8Rng::seed_from_u64(seed ^ 0xfa));
    let mut out = Vec::new();
    let fx = fixture(Variant::Full, seed)?;
    let ms_shape = fx.ms.shape();
    let fam = fx.net.fam().expect("full variant has a FAM");

    let w = weights(&rng, ms_shape.with_channels(81));
    out.push(check_network("fam/alignment_extractor", &fx, |n| n.starts_with("fam.align."), cfg, |net, t, p, ms, pan| {
        let fam = net.fam().expect("fam");
        let s2c = t.space_to_channel(pan, 4)?;
        let m = fam.align.forward(t, p, ms, s2c)?;
        Ok(t.dot_const(m, w.clone())?)
    })?);

    if let AlignmentTarget::Features { .. } = fam.target {
        let width = fx.net.config().ms_features;
        let w = weights(&rng, ms_shape.with_channels(width));
        out.push(check_network("fam/ms_feature_extractor", &fx, |n| n.starts_with("fam.features."), cfg, |net, t, p, ms, _| {
            let AlignmentTarget::Features { extractor, .. } = &net.fam().expect("fam").target else {
                unreachable!()
            };
            let f = extractor.forward(t, p, ms)?;
            Ok(t.dot_const(f, w.clone())?)
        })?);
        let w = weights(&rng, ms_shape);
        out.push(check_network("fam/aligned_ms_head", &fx, |n| n.starts_with("fam.head."), cfg, |net, t, p, ms, _| {
            let AlignmentTarget::Features { extractor, head } = &net.fam().expect("fam").target else {
                unreachable!()
            };
            let f = extractor.forward(t, p, ms)?;
            let a = head.forward(t, p, f)?;
            Ok(t.dot_const(a, w.clone())?)
        })?);
    }

    for (name, fx) in [("fam/forward", fx), ("fam/forward_pam", fixture(Variant::Pam, seed)?)] {
        let w = weights(&rng, ms_shape);
        out.push(check_network(name, &fx, |n| n.starts_with("fam."), cfg, |net, t, p, ms, pan| {
            let o = net.fam().expect("fam").forward(t, p, ms, pan)?;
            Ok(t.dot_const(o.aligned_ms, w.clone())?)
        })?);
    }
    Ok(out)
}

fn psm_suite(seed: u64, cfg: &GradCheckConfig) -> Result<Vec<GradCheckReport>> {
    let rng = RefCell::new(ChaCha8Rng::seed_from_u64(seed ^ 0x95));
    let mut out = Vec::new();

    {
        let mut store = ParamStore::new();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let block = ResBlock::new(&mut store, "rb", 4, &mut r)?;
        randomize(&mut store, &mut r);
        let x = weights(&rng, Shape::new(1, 5, 6, 4));
        let w = weights(&rng, Shape::new(1, 5, 6, 4));
        let mut inputs: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
        inputs.push(x);
        let n = store.len();
        out.push(check("psm/resblock", &inputs, &vec![true; n + 1], cfg, |t, v| {
            let p = Bound::from_vars(v[..n].to_vec());
            let y = block.forward(t, &p, v[n])?;
            t.dot_const(y, w.clone())
        })?);
    }

    let fx = fixture(Variant::Full, seed)?;
    let w = weights(&rng, fx.pan.shape().with_channels(3));
    out.push(check_network("psm/forward", &fx, |n| n.starts_with("psm."), cfg, |net, t, p, ms, pan| {
        let s2c = t.space_to_channel(pan, 4)?;
        let ps = net.psm().forward(t, p, ms, s2c, pan)?;
        Ok(t.dot_const(ps, w.clone())?)
    })?);
    Ok(out)
}

/// Quantised reference levels plus a shifted, offset prediction: every
/// minimum has a clear winner.
fn sis_pair(rng: &RefCell<ChaCha8Rng>, shape: Shape, stride: isize) -> (Tensor, Tensor) {
    let mut r = rng.borrow_mut();
    let reference = Tensor::from_fn(shape, |_, _, _, _| f64::from(r.gen_range(0u8..=10)) * 0.1 + 1e-3 * r.gen::<f64>());
    let (dy, dx) = (r.gen_range(-3isize..=3), r.gen_range(-3isize..=3));
    let pred = reference.translate(dy * stride, dx * stride).map(|v| v + 0.02);
    (pred, reference)
}

fn losses_suite(seed: u64, cfg: &GradCheckConfig) -> Result<Vec<GradCheckReport>> {
    let rng = RefCell::new(ChaCha8Rng::seed_from_u64(seed ^ 0x10));
    let mut out = Vec::new();
    let ms = Shape::new(2, TILE, TILE, 3);
    let pan = Shape::new(2, 4 * TILE, 4 * TILE, 1);

    let x = weights(&rng, ms);
    let w = weights(&rng, ms.with_channels(1));
    out.push(check("losses/luminance", &[x], &[true], cfg, |t, v| {
        let l = luminance(t, v[0])?;
        t.dot_const(l, w.clone())
    })?);

    for (name, shape) in [("losses/edge_fam", ms), ("losses/edge_psm", pan.with_channels(3))] {
        let pred = weights(&rng, shape);
        let reference = weights(&rng, shape.with_channels(1));
        out.push(check(name, &[pred, reference], &[true, false], cfg, |t, v| edge_loss(t, v[0], v[1]))?);
    }

    for mode in [ShiftMinMode::PerChannel, ShiftMinMode::Joint] {
        let suffix = if mode == ShiftMinMode::Joint { "/joint" } else { "" };
        let (pred, reference) = sis_pair(&rng, ms, 1);
        out.push(check(&format!("losses/sis_fam{suffix}"), &[pred, reference], &[true, false], cfg, |t, v| {
            sis_loss_fam(t, v[0], v[1], mode)
        })?);
        let (pred, reference) = sis_pair(&rng, pan.with_channels(3), 4);
        out.push(check(&format!("losses/sis_psm{suffix}"), &[pred, reference], &[true, false], cfg, |t, v| {
            sis_loss_psm(t, v[0], v[1], mode)
        })?);
    }
    Ok(out)
}

/// The training graph: network forward plus the weighted total loss.
pub fn composite_check(variant: Variant, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let fx = fixture(variant, seed)?;
    let loss_cfg = LossConfig::default();
    check_network(&format!("composite/{variant}"), &fx, |_| true, cfg, |net, t, p, ms, pan| {
        let out = net.forward(t, p, ms, pan)?;
        Ok(total_loss(t, &out, ms, pan, variant.uses_sis(), &loss_cfg)?.total)
    })
}

/// Run the suites of `module` for one seed.
pub fn run(module: Module, seed: u64, cfg: &GradCheckConfig) -> Result<Vec<GradCheckReport>> {
    let cfg = GradCheckConfig { seed, ..*cfg };
    let mut out = Vec::new();
    if matches!(module, Module::Tensor | Module::All) {
        out.extend(op_suite(seed, &cfg)?.into_iter().map(|mut r| {
            r.name = format!("tensor/{}", r.name);
            r
        }));
    }
    if matches!(module, Module::Fam | Module::All) {
        out.extend(fam_suite(seed, &cfg)?);
    }
    if matches!(module, Module::Psm | Module::All) {
        out.extend(psm_suite(seed, &cfg)?);
    }
    if matches!(module, Module::Losses | Module::All) {
        out.extend(losses_suite(seed, &cfg)?);
    }
    if module == Module::All {
        out.push(composite_check(Variant::Full, seed, &cfg)?);
    }
    Ok(out)
}
