//! Pan-sharpening network: fuses aligned MS with rearranged PAN on the MS
//! grid, upsamples by pixel shuffle and refines with the PAN gradient.

use pansharp_tensor::{Result as TensorResult, Tape, Var};
use rand::Rng;

use crate::error::Result;
use crate::fam::SCALE;
use crate::layers::{Conv, Init, ResBlock};
use crate::params::{Bound, ParamStore};

#[derive(Clone, Debug)]
pub struct Psm {
    pub head: Conv,
    pub pre: Vec<ResBlock>,
    pub expand: Conv,
    pub post: Vec<ResBlock>,
    pub tail: Conv,
}

impl Psm {
    pub fn new<R: Rng>(store: &mut ParamStore, width: usize, post_width: usize, rng: &mut R) -> Result<Self> {
        let head = Conv::new(store, "psm.head", 3, 3 + SCALE * SCALE, width, Init::KaimingFanIn, rng)?;
        let pre = (0..5)
            .map(|i| ResBlock::new(store, &format!("psm.pre{i}"), width, rng))
            .collect::<Result<Vec<_>>>()?;
        let expand = Conv::new(store, "psm.expand", 3, width, SCALE * SCALE * post_width, Init::KaimingFanIn, rng)?;
        let post = (0..2)
            .map(|i| ResBlock::new(store, &format!("psm.post{i}"), post_width, rng))
            .collect::<Result<Vec<_>>>()?;
        let tail = Conv::new(store, "psm.tail", 3, post_width + 2, 3, Init::KaimingFanIn, rng)?;
        Ok(Psm {
            head,
            pre,
            expand,
            post,
            tail,
        })
    }

    /// `ms` is the (aligned or raw) MS image; output is on the PAN grid.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, ms: Var, pan_s2c: Var, pan: Var) -> TensorResult<Var> {
        let mut h = tape.concat_channels(&[ms, pan_s2c])?;
        h = self.head.forward(tape, p, h)?;
        for block in &self.pre {
            h = block.forward(tape, p, h)?;
        }
        h = self.expand.forward(tape, p, h)?;
        h = tape.pixel_shuffle(h, SCALE)?;
        for block in &self.post {
            h = block.forward(tape, p, h)?;
        }
        let grad = tape.spatial_gradient(pan)?;
        let h = tape.concat_channels(&[h, grad])?;
        self.tail.forward(tape, p, h)
    }
}
