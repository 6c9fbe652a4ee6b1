//! Feature alignment: a per-pixel distribution over 9×9 integer offsets,
//! applied to MS features (or pixels) by probabilistic gathering.
//!
//! Offset `(i, j)` lives in channel `(i + 4) * 9 + (j + 4)`, with `i` the
//! vertical and `j` the horizontal displacement of the source pixel:
//! `aligned(y, x) = Σ f(y + i, x + j) · M[(i, j)](y, x)`, replicate boundary.

use pansharp_tensor::ops::align::offset_of;
use pansharp_tensor::{Result as TensorResult, Tape, Tensor, TensorError, Var};
use rand::Rng;

use crate::data::OffsetField;
use crate::error::{Error, Result};
use crate::layers::{conv_stack, Conv, Init};
use crate::params::{Bound, ParamStore};

/// Largest offset magnitude per axis, in MS pixels.
pub const OFFSET_RADIUS: usize = 4;
/// Number of offsets in the PWOPM, `(2 * OFFSET_RADIUS + 1)²`.
pub const OFFSET_CHANNELS: usize = 81;
/// PAN-to-MS resolution ratio.
pub const SCALE: usize = 4;

const MS_BANDS: usize = 3;
const PAN_S2C: usize = SCALE * SCALE;

/// Predicts the PWOPM from MS and rearranged PAN.
#[derive(Clone, Debug)]
pub struct AlignmentExtractor {
    body: Vec<Conv>,
    logits: Conv,
}

impl AlignmentExtractor {
    pub fn new<R: Rng>(store: &mut ParamStore, width: usize, rng: &mut R) -> Result<Self> {
        let mut body = Vec::new();
        let mut cin = MS_BANDS + PAN_S2C;
        for i in 0..3 {
            body.push(Conv::new(store, &format!("fam.align.conv{i}"), 3, cin, width, Init::KaimingFanIn, rng)?);
            cin = width;
        }
        let logits = Conv::new(store, "fam.align.logits", 3, width, OFFSET_CHANNELS, Init::Zero, rng)?;
        Ok(AlignmentExtractor { body, logits })
    }

    pub fn logits_layer(&self) -> &Conv {
        &self.logits
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, ms: Var, pan_s2c: Var) -> TensorResult<Var> {
        let mut h = tape.concat_channels(&[ms, pan_s2c])?;
        for conv in &self.body {
            h = conv.forward(tape, p, h)?;
            h = tape.relu(h)?;
        }
        let logits = self.logits.forward(tape, p, h)?;
        tape.softmax_channels(logits)
    }
}

/// Three 3×3 convolutions from the MS bands to `width` feature channels.
#[derive(Clone, Debug)]
pub struct MsFeatureExtractor {
    convs: Vec<Conv>,
}

impl MsFeatureExtractor {
    pub fn new<R: Rng>(store: &mut ParamStore, width: usize, rng: &mut R) -> Result<Self> {
        let mut convs = Vec::new();
        let mut cin = MS_BANDS;
        for i in 0..3 {
            convs.push(Conv::new(store, &format!("fam.features.conv{i}"), 3, cin, width, Init::KaimingFanIn, rng)?);
            cin = width;
        }
        Ok(MsFeatureExtractor { convs })
    }

    pub fn convs(&self) -> &[Conv] {
        &self.convs
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, ms: Var) -> TensorResult<Var> {
        conv_stack(&self.convs, tape, p, ms)
    }
}

/// 1×1 projection from aligned features back to MS bands.
#[derive(Clone, Debug)]
pub struct AlignedMsHead {
    conv: Conv,
}

impl AlignedMsHead {
    pub fn new<R: Rng>(store: &mut ParamStore, width: usize, rng: &mut R) -> Result<Self> {
        Ok(AlignedMsHead {
            conv: Conv::new(store, "fam.head", 1, width, MS_BANDS, Init::KaimingFanIn, rng)?,
        })
    }

    pub fn conv(&self) -> &Conv {
        &self.conv
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, features: Var) -> TensorResult<Var> {
        self.conv.forward(tape, p, features)
    }
}

/// What the PWOPM is applied to.
#[derive(Clone, Debug)]
pub enum AlignmentTarget {
    /// Learned MS features followed by a 1×1 head.
    Features {
        extractor: MsFeatureExtractor,
        head: AlignedMsHead,
    },
    /// The MS pixels themselves.
    Pixels,
}

#[derive(Clone, Debug)]
pub struct Fam {
    pub align: AlignmentExtractor,
    pub target: AlignmentTarget,
}

#[derive(Clone, Copy, Debug)]
pub struct FamOutput {
    pub aligned_features: Var,
    pub aligned_ms: Var,
    pub pwopm: Var,
    pub pan_s2c: Var,
}

impl Fam {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        align_width: usize,
        features: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let align = AlignmentExtractor::new(store, align_width, rng)?;
        let target = match features {
            Some(width) => AlignmentTarget::Features {
                extractor: MsFeatureExtractor::new(store, width, rng)?,
                head: AlignedMsHead::new(store, width, rng)?,
            },
            None => AlignmentTarget::Pixels,
        };
        Ok(Fam { align, target })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, ms: Var, pan: Var) -> TensorResult<FamOutput> {
        check_pan_scale(tape, ms, pan)?;
        let pan_s2c = tape.space_to_channel(pan, SCALE)?;
        let pwopm = self.align.forward(tape, p, ms, pan_s2c)?;
        let (aligned_features, aligned_ms) = match &self.target {
            AlignmentTarget::Features { extractor, head } => {
                let f = extractor.forward(tape, p, ms)?;
                let f = tape.pwpac(f, pwopm, OFFSET_RADIUS)?;
                (f, head.forward(tape, p, f)?)
            }
            AlignmentTarget::Pixels => {
                let a = tape.pwpac(ms, pwopm, OFFSET_RADIUS)?;
                (a, a)
            }
        };
        Ok(FamOutput {
            aligned_features,
            aligned_ms,
            pwopm,
            pan_s2c,
        })
    }
}

pub(crate) fn check_pan_scale(tape: &Tape, ms: Var, pan: Var) -> TensorResult<()> {
    let (m, p) = (tape.shape(ms), tape.shape(pan));
    let ok = m.channels() == MS_BANDS
        && p.channels() == 1
        && p.batch() == m.batch()
        && p.height() == SCALE * m.height()
        && p.width() == SCALE * m.width();
    if ok {
        Ok(())
    } else {
        Err(TensorError::Dimension {
            op: "pan/ms pair",
            detail: format!("pan {p} is not a 4x single-band match for ms {m}"),
        })
    }
}

/// Most probable offset at each pixel of a `[1, H, W, 81]` PWOPM. Ties go to
/// the lower channel index.
pub fn argmax_offsets(pwopm: &Tensor) -> Result<OffsetField> {
    let [b, h, w, c] = pwopm.shape().dims();
    if b != 1 || c != OFFSET_CHANNELS {
        return Err(Error::Config(format!("expected a [1, H, W, {OFFSET_CHANNELS}] PWOPM, got {}", pwopm.shape())));
    }
    let mut field = OffsetField::constant(h, w, [0, 0]);
    for y in 0..h {
        for x in 0..w {
            let p = pwopm.pixel(0, y, x);
            let best = (1..c).fold(0, |k, i| if p[i] > p[k] { i } else { k });
            let (dy, dx) = offset_of(best, OFFSET_RADIUS);
            field.set(y, x, [dy, dx]);
        }
    }
    Ok(field)
}
