use rand::Rng;

use crate::data::synth::ScenePair;
use crate::error::{Error, Result};
use crate::fam::SCALE;

/// Crop `size`×`size` MS pixels at `(y, x)` and the matching PAN window at `(4y, 4x)`.
pub fn crop_pair(pair: &ScenePair, y: usize, x: usize, size: usize) -> Result<ScenePair> {
    let (h, w) = pair.ms_size();
    if size == 0 || y + size > h || x + size > w {
        return Err(Error::Config(format!("crop {size} at ({y}, {x}) exceeds {h}x{w} MS scene")));
    }
    Ok(ScenePair {
        pan: pair.pan.crop(SCALE * y, SCALE * x, SCALE * size, SCALE * size)?,
        ms: pair.ms.crop(y, x, size, size)?,
        gt_offsets: pair.gt_offsets.crop(y, x, size, size),
        meta: pair.meta.clone(),
    })
}

/// Crop at a uniformly drawn MS position; returns the pair and its corner.
pub fn random_crop_pair<R: Rng>(pair: &ScenePair, size: usize, rng: &mut R) -> Result<(ScenePair, (usize, usize))> {
    let (h, w) = pair.ms_size();
    if size == 0 || size > h || size > w {
        return Err(Error::Config(format!("crop {size} exceeds {h}x{w} MS scene")));
    }
    let y = rng.gen_range(0..=h - size);
    let x = rng.gen_range(0..=w - size);
    Ok((crop_pair(pair, y, x, size)?, (y, x)))
}
