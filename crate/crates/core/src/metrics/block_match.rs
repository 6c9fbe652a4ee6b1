//! Per-block integer registration of an MS-like image to the downscaled PAN
//! by zero-normalized cross-correlation.
//!
//! An offset `d` means the MS content belonging at `p` sits at `p + d`, so
//! the aligned image is `aligned(p) = ms(p + d)`.

use pansharp_tensor::ops::channel_mean;
use pansharp_tensor::{clamp_index, Tensor};
use serde::{Deserialize, Serialize};

use super::{MetricError, MetricResult};

/// Default block side in MS pixels.
pub const BLOCK: usize = 16;
/// Default search radius in MS pixels.
pub const SEARCH: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockOffset {
    pub y0: usize,
    pub x0: usize,
    pub height: usize,
    pub width: usize,
    pub dy: isize,
    pub dx: isize,
    /// Best correlation, or `None` for a flat block.
    pub score: Option<f64>,
}

impl BlockOffset {
    pub fn magnitude(&self) -> f64 {
        ((self.dy * self.dy + self.dx * self.dx) as f64).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct BlockMatch {
    pub aligned: Tensor,
    pub blocks: Vec<BlockOffset>,
}

impl BlockMatch {
    /// Mean Euclidean offset over blocks, in MS pixels.
    pub fn residual_misalignment(&self) -> f64 {
        self.blocks.iter().map(BlockOffset::magnitude).sum::<f64>() / self.blocks.len() as f64
    }

    /// Offset of the block containing MS pixel `(y, x)`.
    pub fn offset_at(&self, y: usize, x: usize) -> (isize, isize) {
        self.blocks
            .iter()
            .find(|b| (b.y0..b.y0 + b.height).contains(&y) && (b.x0..b.x0 + b.width).contains(&x))
            .map(|b| (b.dy, b.dx))
            .unwrap_or((0, 0))
    }
}

fn zncc(a: &[f64], b: &[f64]) -> Option<f64> {
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
    // Relative guard: blocks whose variance is pure rounding noise count as flat.
    if saa <= 1e-24 * n || sbb <= 1e-24 * n {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Match each `block`×`block` tile (edge tiles may be smaller) of the MS
/// luminance against `pan_down` over offsets in `[-search, search]²`.
///
/// Ties go to the smaller offset magnitude, then to scan order. Flat blocks
/// get `(0, 0)`.
pub fn block_match_align(ms: &Tensor, pan_down: &Tensor, search: usize, block: usize) -> MetricResult<BlockMatch> {
    let (m, p) = (ms.shape(), pan_down.shape());
    if m.batch() != 1 || p.channels() != 1 || m.with_channels(1) != p || block == 0 {
        return Err(MetricError::Shape {
            metric: "block_match_align",
            a: m,
            b: p,
        });
    }
    let [_, h, w, _] = m.dims();
    let lum = channel_mean(ms);
    let r = search as isize;

    let mut blocks = Vec::new();
    let mut target = Vec::new();
    let mut cand = Vec::new();
    for y0 in (0..h).step_by(block) {
        for x0 in (0..w).step_by(block) {
            let (bh, bw) = (block.min(h - y0), block.min(w - x0));
            target.clear();
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    target.push(pan_down.at(0, y, x, 0));
                }
            }
            let mut best: Option<(f64, isize, isize)> = None;
            for dy in -r..=r {
                for dx in -r..=r {
                    cand.clear();
                    for y in y0..y0 + bh {
                        for x in x0..x0 + bw {
                            let sy = clamp_index(y as isize + dy, h);
                            let sx = clamp_index(x as isize + dx, w);
                            cand.push(lum.at(0, sy, sx, 0));
                        }
                    }
                    let Some(score) = zncc(&cand, &target) else { continue };
                    let better = match best {
                        None => true,
                        Some((s, by, bx)) => {
                            score > s || (score == s && dy * dy + dx * dx < by * by + bx * bx)
                        }
                    };
                    if better {
                        best = Some((score, dy, dx));
                    }
                }
            }
            let (score, dy, dx) = match best {
                Some((s, dy, dx)) => (Some(s), dy, dx),
                None => (None, 0, 0),
            };
            blocks.push(BlockOffset {
                y0,
                x0,
                height: bh,
                width: bw,
                dy,
                dx,
                score,
            });
        }
    }

    let mut aligned = ms.clone();
    for b in &blocks {
        for y in b.y0..b.y0 + b.height {
            for x in b.x0..b.x0 + b.width {
                let sy = clamp_index(y as isize + b.dy, h);
                let sx = clamp_index(x as isize + b.dx, w);
                aligned.pixel_mut(0, y, x).copy_from_slice(ms.pixel(0, sy, sx));
            }
        }
    }
    Ok(BlockMatch { aligned, blocks })
}
