//! Evaluation protocols over scenes: lower-scale metrics against the MS
//! reference (raw or block-matched to the PAN), full-scale no-reference
//! metrics, and block-matching misalignment.

use pansharp_tensor::ops::{box_downsample, channel_mean};
use pansharp_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::ScenePair;
use crate::error::{Error, Result};
use crate::fam::SCALE;
use crate::metrics::{self, block_match_align, ImageMetrics, MetricResult, BLOCK, SEARCH};
use crate::model::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Lower-scale reference is the MS input as delivered.
    Misaligned,
    /// Lower-scale reference is the MS block-matched to the downscaled PAN.
    Aligned,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Misaligned => "misaligned",
            Protocol::Aligned => "aligned",
        }
    }
}

fn keep(errors: &mut Vec<String>, r: MetricResult<f64>) -> Option<f64> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(e.to_string());
            None
        }
    }
}

/// Lower-scale comparison of a candidate against a reference of equal shape.
pub fn compare(name: &str, protocol: &str, candidate: &Tensor, reference: &Tensor) -> ImageMetrics {
    let mut errors = Vec::new();
    ImageMetrics {
        name: name.to_string(),
        protocol: protocol.to_string(),
        scc: keep(&mut errors, metrics::scc(candidate, reference)),
        ergas: keep(&mut errors, metrics::ergas(candidate, reference, 1.0 / SCALE as f64)),
        psnr: keep(&mut errors, metrics::psnr(candidate, reference, 1.0)),
        errors,
        ..ImageMetrics::default()
    }
}

/// Mean block-matching offset magnitude of `ms` against the box-downscaled `pan`.
pub fn misalignment(ms: &Tensor, pan: &Tensor) -> Result<f64> {
    let pan_down = box_downsample(pan, SCALE)?;
    Ok(block_match_align(ms, &pan_down, SEARCH, BLOCK)?.residual_misalignment())
}

/// All metrics for one scene under each requested protocol.
pub fn evaluate_scene(net: &Network, scene: &ScenePair, name: &str, protocols: &[Protocol]) -> Result<Vec<ImageMetrics>> {
    let (h, w) = scene.ms_size();
    if h % SCALE != 0 || w % SCALE != 0 {
        return Err(Error::Config(format!("{name}: MS size {h}x{w} is not divisible by {SCALE}")));
    }
    let full = net.sharpen(&scene.ms, &scene.pan)?;
    let pan_down = box_downsample(&scene.pan, SCALE)?;
    let raw_match = block_match_align(&scene.ms, &pan_down, SEARCH, BLOCK)?;
    let fed = full.aligned_ms.as_ref().unwrap_or(&scene.ms);
    let residual = block_match_align(fed, &pan_down, SEARCH, BLOCK)?.residual_misalignment();

    let low_ms = box_downsample(&scene.ms, SCALE)?;
    let low = net.sharpen(&low_ms, &pan_down)?;

    let mut out = Vec::with_capacity(protocols.len());
    for &protocol in protocols {
        let reference = match protocol {
            Protocol::Misaligned => &scene.ms,
            Protocol::Aligned => &raw_match.aligned,
        };
        let mut m = compare(name, protocol.as_str(), &low.ps, reference);
        m.scc_f = keep(&mut m.errors, metrics::scc(&scene.pan, &channel_mean(&full.ps)));
        m.qnr = keep(&mut m.errors, metrics::qnr(&full.ps, &scene.ms, &scene.pan).map(|q| q.qnr));
        m.jqm = keep(&mut m.errors, metrics::jqm(&full.ps, &scene.ms, &scene.pan));
        m.input_misalignment_px = Some(raw_match.residual_misalignment());
        m.residual_misalignment_px = Some(residual);
        out.push(m);
    }
    Ok(out)
}
