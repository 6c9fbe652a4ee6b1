//! Training objective: edge-detail and shift-invariant spectral terms for
//! both stages and their weighted total.

use pansharp_tensor::{Result as TensorResult, Shape, ShiftMinMode, Tape, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fam::{OFFSET_RADIUS, SCALE};
use crate::model::ForwardOutput;

/// Weight of the alignment-stage terms relative to the sharpening-stage ones.
pub const FAM_WEIGHT: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the edge terms.
    pub alpha: f64,
    pub sis_mode: ShiftMinMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 2.0,
            sis_mode: ShiftMinMode::PerChannel,
        }
    }
}

/// Per-batch values of every term. Absent terms are exactly zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_edge_fam: f64,
    pub l_edge_psm: f64,
    pub l_sis_fam: f64,
    pub l_sis_psm: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    /// The weighted total, evaluated in the same order as on the tape.
    pub fn combine(alpha: f64, edge_fam: f64, edge_psm: f64, sis_fam: f64, sis_psm: f64) -> f64 {
        (FAM_WEIGHT * sis_fam + sis_psm) + alpha * (FAM_WEIGHT * edge_fam + edge_psm)
    }

    /// `|l_total - combine(components)|`.
    pub fn identity_residual(&self, alpha: f64) -> f64 {
        (self.l_total - Self::combine(alpha, self.l_edge_fam, self.l_edge_psm, self.l_sis_fam, self.l_sis_psm)).abs()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

fn require_bands(tape: &Tape, x: Var, op: &'static str) -> TensorResult<()> {
    let c = tape.shape(x).channels();
    if c != 3 {
        return Err(TensorError::Dimension {
            op,
            detail: format!("expected 3 bands, got {c}"),
        });
    }
    Ok(())
}

/// Per-pixel mean of the three bands.
pub fn luminance(tape: &mut Tape, x: Var) -> TensorResult<Var> {
    require_bands(tape, x, "luminance")?;
    tape.channel_mean(x)
}

/// Mean of `| |∇lum(pred)| - |∇reference| |` over pixels and both gradient
/// components, with the absolute value taken per component.
pub fn edge_loss(tape: &mut Tape, pred: Var, reference: Var) -> TensorResult<Var> {
    let lum = luminance(tape, pred)?;
    let gp = tape.spatial_gradient(lum)?;
    let gp = tape.abs(gp)?;
    let gr = tape.spatial_gradient(reference)?;
    let gr = tape.abs(gr)?;
    let d = tape.sub(gp, gr)?;
    let d = tape.abs(d)?;
    tape.mean(d)
}

fn sis(tape: &mut Tape, pred: Var, reference: Var, stride: usize, mode: ShiftMinMode) -> TensorResult<Var> {
    let m = tape.shift_min_abs(pred, reference, OFFSET_RADIUS, stride, mode)?;
    tape.mean(m)
}

/// Shift-invariant spectral loss on the MS grid: 9×9 shifts, stride 1.
pub fn sis_loss_fam(tape: &mut Tape, aligned_ms: Var, ms: Var, mode: ShiftMinMode) -> TensorResult<Var> {
    sis(tape, aligned_ms, ms, 1, mode)
}

/// Shift-invariant spectral loss on the PAN grid against the bilinearly
/// upscaled MS: 9×9 shifts, stride 4.
pub fn sis_loss_psm(tape: &mut Tape, ps: Var, ms_up: Var, mode: ShiftMinMode) -> TensorResult<Var> {
    sis(tape, ps, ms_up, SCALE, mode)
}

/// Build every term for one forward pass. The SiS terms are left at zero
/// when `use_sis` is false; FAM terms are zero when the network has no FAM.
pub fn total_loss(
    tape: &mut Tape,
    out: &ForwardOutput,
    ms: Var,
    pan: Var,
    use_sis: bool,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    let zero = tape.constant(Tensor::zeros(Shape::scalar()));
    let mut edge_fam = zero;
    let mut sis_fam = zero;
    let mut sis_psm = zero;

    let edge_psm = edge_loss(tape, out.ps, pan)?;
    if let Some(fam) = &out.fam {
        let pan_down = tape.box_downsample(pan, SCALE)?;
        edge_fam = edge_loss(tape, fam.aligned_ms, pan_down)?;
        if use_sis {
            sis_fam = sis_loss_fam(tape, fam.aligned_ms, ms, cfg.sis_mode)?;
        }
    }
    if use_sis {
        let s = tape.shape(ms);
        let ms_up = tape.resize_bilinear(ms, SCALE * s.height(), SCALE * s.width())?;
        sis_psm = sis_loss_psm(tape, out.ps, ms_up, cfg.sis_mode)?;
    }

    let a = tape.scale(sis_fam, FAM_WEIGHT)?;
    let sis_part = tape.add(a, sis_psm)?;
    let b = tape.scale(edge_fam, FAM_WEIGHT)?;
    let b = tape.add(b, edge_psm)?;
    let edge_part = tape.scale(b, cfg.alpha)?;
    let total = tape.add(sis_part, edge_part)?;

    let item = |v: Var| tape.value(v).item();
    let breakdown = LossBreakdown {
        l_edge_fam: item(edge_fam)?,
        l_edge_psm: item(edge_psm)?,
        l_sis_fam: item(sis_fam)?,
        l_sis_psm: item(sis_psm)?,
        l_total: item(total)?,
    };
    Ok(LossTerms { total, breakdown })
}
