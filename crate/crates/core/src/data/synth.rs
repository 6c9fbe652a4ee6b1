//! Synthetic misaligned PAN/MS scenes with exact ground-truth offsets.
//!
//! A background canvas larger than the frame is rendered at PAN resolution.
//! The PAN frame is its central crop with every object at its nominal
//! position. The MS latent views the same canvas displaced by the global
//! shift and draws each object displaced by its own total shift; the MS image
//! is its 4×4 box average. Offsets follow the block-matching convention: MS
//! content that belongs at `p` sits at `p + d`.

use pansharp_tensor::ops::box_downsample;
use pansharp_tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::sipr::{quantize_11bit, BitDepth, SiprRaster};
use crate::error::{Error, Result};
use crate::fam::SCALE;

/// PAN luminance weights for the R, G and B latent bands.
pub const PAN_WEIGHTS: [f64; 3] = [0.35, 0.45, 0.20];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub ms_height: usize,
    pub ms_width: usize,
    pub objects: usize,
    /// Largest global shift per axis, in MS pixels.
    pub max_global_shift: usize,
    /// Largest total (global plus own) object shift per axis, in MS pixels.
    pub max_object_shift: usize,
    /// Plant this global shift instead of sampling one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_shift: Option<[isize; 2]>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            ms_height: 64,
            ms_width: 64,
            objects: 4,
            max_global_shift: 3,
            max_object_shift: 4,
            global_shift: None,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ms_height < 4 || self.ms_width < 4 {
            return Err(Error::Config("scene must be at least 4x4 MS pixels".into()));
        }
        if self.max_global_shift > self.max_object_shift {
            return Err(Error::Config("max_global_shift exceeds max_object_shift".into()));
        }
        if self.max_object_shift > 4 {
            return Err(Error::Config("shifts beyond 4 MS pixels are outside the alignment range".into()));
        }
        if let Some(g) = self.global_shift {
            if g.iter().any(|d| d.unsigned_abs() > self.max_object_shift) {
                return Err(Error::Config("planted global shift exceeds max_object_shift".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectShape {
    Rectangle,
    Ellipse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: ObjectShape,
    /// Top-left corner in PAN pixels of the frame, at its PAN position.
    pub y: usize,
    pub x: usize,
    pub height: usize,
    pub width: usize,
    pub color: [f64; 3],
    /// Total displacement in the MS image, `[dy, dx]` MS pixels.
    pub shift: [isize; 2],
}

impl SceneObject {
    fn covers(&self, y: f64, x: f64) -> bool {
        let (top, left) = (self.y as f64, self.x as f64);
        let (h, w) = (self.height as f64, self.width as f64);
        match self.shape {
            ObjectShape::Rectangle => y >= top && y < top + h && x >= left && x < left + w,
            ObjectShape::Ellipse => {
                let ny = (y - (top + h / 2.0)) / (h / 2.0);
                let nx = (x - (left + w / 2.0)) / (w / 2.0);
                ny * ny + nx * nx <= 1.0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub seed: u64,
    /// `[dy, dx]` in MS pixels.
    pub global_shift: [isize; 2],
    pub objects: Vec<SceneObject>,
}

/// Per-MS-pixel integer offsets `(dy, dx)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetField {
    pub height: usize,
    pub width: usize,
    pub dy: Vec<i8>,
    pub dx: Vec<i8>,
}

impl OffsetField {
    pub fn constant(height: usize, width: usize, d: [isize; 2]) -> Self {
        OffsetField {
            height,
            width,
            dy: vec![d[0] as i8; height * width],
            dx: vec![d[1] as i8; height * width],
        }
    }

    pub fn at(&self, y: usize, x: usize) -> (isize, isize) {
        let i = y * self.width + x;
        (self.dy[i] as isize, self.dx[i] as isize)
    }

    pub fn set(&mut self, y: usize, x: usize, d: [isize; 2]) {
        let i = y * self.width + x;
        self.dy[i] = d[0] as i8;
        self.dx[i] = d[1] as i8;
    }

    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> OffsetField {
        let mut out = OffsetField::constant(h, w, [0, 0]);
        for yy in 0..h {
            for xx in 0..w {
                let (dy, dx) = self.at(y + yy, x + xx);
                out.set(yy, xx, [dy, dx]);
            }
        }
        out
    }

    /// Two-channel tensor `[1, H, W, 2]` holding `(dy, dx)`.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn(Shape::new(1, self.height, self.width, 2), |_, y, x, c| {
            let (dy, dx) = self.at(y, x);
            if c == 0 {
                dy as f64
            } else {
                dx as f64
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenePair {
    /// `[1, 4H, 4W, 1]`.
    pub pan: Tensor,
    /// `[1, H, W, 3]`.
    pub ms: Tensor,
    pub gt_offsets: OffsetField,
    pub meta: SceneMeta,
}

impl ScenePair {
    pub fn ms_size(&self) -> (usize, usize) {
        (self.ms.shape().height(), self.ms.shape().width())
    }
}

/// Smooth random field: bilinear interpolation of a random grid with the given cell size.
fn value_noise<R: Rng>(rng: &mut R, h: usize, w: usize, cell: usize) -> Vec<f64> {
    let (gh, gw) = (h / cell + 2, w / cell + 2);
    let grid: Vec<f64> = (0..gh * gw).map(|_| rng.gen::<f64>()).collect();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = y as f64 / cell as f64;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / cell as f64;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let g = |yy: usize, xx: usize| grid[yy * gw + xx];
            let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let bottom = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn render_background<R: Rng>(rng: &mut R, h: usize, w: usize) -> Tensor {
    let mut lum = vec![0.0; h * w];
    let mut amp = 0.5;
    for cell in [32, 16, 8, 4] {
        for (l, n) in lum.iter_mut().zip(value_noise(rng, h, w, cell)) {
            *l += amp * (n - 0.5);
        }
        amp *= 0.6;
    }
    let tints: Vec<Vec<f64>> = (0..3).map(|_| value_noise(rng, h, w, 24)).collect();
    let mut img = Tensor::from_fn(Shape::new(1, h, w, 3), |_, y, x, c| {
        let i = y * w + x;
        0.5 + lum[i] + 0.2 * (tints[c][i] - 0.5)
    });

    let roads = rng.gen_range(1..=3);
    for _ in 0..roads {
        let vertical = rng.gen_bool(0.5);
        let span = if vertical { w } else { h };
        let width = rng.gen_range(8..=16).min(span);
        let start = rng.gen_range(0..=span - width);
        let gray = rng.gen_range(0.25..0.45);
        for y in 0..h {
            for x in 0..w {
                let along = if vertical { x } else { y };
                if (start..start + width).contains(&along) {
                    let cross = if vertical { y } else { x };
                    let centre = along == start + width / 2 && (cross / 8) % 2 == 0;
                    let v = if centre { 0.85 } else { gray };
                    for c in 0..3 {
                        img.set(0, y, x, c, v + 0.05 * (img.at(0, y, x, c) - 0.5));
                    }
                }
            }
        }
    }
    img.clamp(0.02, 0.98)
}

fn crop_shifted(canvas: &Tensor, margin: usize, h: usize, w: usize, dy: isize, dx: isize) -> Tensor {
    // Frame pixel p shows canvas content from p - d.
    let y0 = (margin as isize - dy) as usize;
    let x0 = (margin as isize - dx) as usize;
    canvas.crop(y0, x0, h, w).expect("margin covers every shift")
}

fn paint(img: &mut Tensor, obj: &SceneObject, oy: isize, ox: isize) {
    let [_, h, w, _] = img.shape().dims();
    for y in 0..obj.height {
        for x in 0..obj.width {
            let (fy, fx) = ((obj.y + y) as f64 + 0.5, (obj.x + x) as f64 + 0.5);
            if !obj.covers(fy, fx) {
                continue;
            }
            let (py, px) = (obj.y as isize + y as isize + oy, obj.x as isize + x as isize + ox);
            if py >= 0 && px >= 0 && (py as usize) < h && (px as usize) < w {
                img.pixel_mut(0, py as usize, px as usize).copy_from_slice(&obj.color);
            }
        }
    }
}

fn symmetric<R: Rng>(rng: &mut R, limit: usize) -> isize {
    rng.gen_range(-(limit as isize)..=limit as isize)
}

/// A scene together with the full-resolution latents it was rendered from.
#[derive(Clone, Debug)]
pub struct RenderedScene {
    pub pair: ScenePair,
    pub pan_latent: Tensor,
    pub ms_latent: Tensor,
}

/// Render one scene. A pure function of `(seed, config)`; values are snapped
/// to the 11-bit grid.
pub fn generate_scene(seed: u64, config: &SceneConfig) -> Result<ScenePair> {
    render_scene(seed, config).map(|r| r.pair)
}

pub fn render_scene(seed: u64, config: &SceneConfig) -> Result<RenderedScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (config.ms_height, config.ms_width);
    let (ph, pw) = (SCALE * h, SCALE * w);
    let margin = SCALE * config.max_object_shift;

    let canvas = render_background(&mut rng, ph + 2 * margin, pw + 2 * margin);
    let sampled = [symmetric(&mut rng, config.max_global_shift), symmetric(&mut rng, config.max_global_shift)];
    let global = config.global_shift.unwrap_or(sampled);

    let mut objects = Vec::with_capacity(config.objects);
    let mut tries = 0usize;
    while objects.len() < config.objects {
        tries += 1;
        if tries > 1000 * (config.objects + 1) {
            return Err(Error::Config("objects do not fit in the frame".into()));
        }
        let oh = rng.gen_range(8..=24usize);
        let ow = rng.gen_range(8..=24usize);
        let shift = [symmetric(&mut rng, config.max_object_shift), symmetric(&mut rng, config.max_object_shift)];
        let shape = if rng.gen_bool(0.5) { ObjectShape::Rectangle } else { ObjectShape::Ellipse };
        let mut color = [0.0; 3];
        let bright = rng.gen_range(0..3);
        for (c, v) in color.iter_mut().enumerate() {
            *v = if c == bright { rng.gen_range(0.75..0.95) } else { rng.gen_range(0.05..0.4) };
        }
        if oh > ph || ow > pw {
            continue;
        }
        let y = rng.gen_range(0..=ph - oh);
        let x = rng.gen_range(0..=pw - ow);
        // Both the PAN footprint and the displaced MS footprint must stay in frame.
        let fits = |pos: usize, size: usize, d: isize, limit: usize| {
            let moved = pos as isize + SCALE as isize * d;
            moved >= 0 && moved as usize + size <= limit
        };
        if !fits(y, oh, shift[0], ph) || !fits(x, ow, shift[1], pw) {
            continue;
        }
        objects.push(SceneObject {
            shape,
            y,
            x,
            height: oh,
            width: ow,
            color,
            shift,
        });
    }

    let mut pan_latent = crop_shifted(&canvas, margin, ph, pw, 0, 0);
    let mut ms_latent = crop_shifted(&canvas, margin, ph, pw, SCALE as isize * global[0], SCALE as isize * global[1]);
    for obj in &objects {
        paint(&mut pan_latent, obj, 0, 0);
        let s = SCALE as isize;
        paint(&mut ms_latent, obj, s * obj.shift[0], s * obj.shift[1]);
    }

    let pan = Tensor::from_fn(Shape::new(1, ph, pw, 1), |_, y, x, _| {
        let p = pan_latent.pixel(0, y, x);
        PAN_WEIGHTS[0] * p[0] + PAN_WEIGHTS[1] * p[1] + PAN_WEIGHTS[2] * p[2]
    });
    let ms = box_downsample(&ms_latent, SCALE)?;

    let mut gt = OffsetField::constant(h, w, global);
    for obj in &objects {
        for y in 0..h {
            for x in 0..w {
                let mut covered = 0;
                for i in 0..SCALE * SCALE {
                    let fy = (SCALE * y + i / SCALE) as f64 + 0.5;
                    let fx = (SCALE * x + i % SCALE) as f64 + 0.5;
                    covered += usize::from(obj.covers(fy, fx));
                }
                if 2 * covered >= SCALE * SCALE {
                    gt.set(y, x, obj.shift);
                }
            }
        }
    }

    let pair = ScenePair {
        pan: quantize_11bit(&pan),
        ms: quantize_11bit(&ms),
        gt_offsets: gt,
        meta: SceneMeta {
            seed,
            global_shift: global,
            objects,
        },
    };
    Ok(RenderedScene {
        pair,
        pan_latent,
        ms_latent,
    })
}

/// Sample step used when an offset field is stored as an 11-bit raster:
/// `sample = (offset + 4) * 255`.
pub const OFFSET_SAMPLE_STEP: u16 = 255;

impl OffsetField {
    /// Two-channel 11-bit raster, channel 0 vertical, channel 1 horizontal.
    pub fn to_raster(&self) -> SiprRaster {
        let mut samples = Vec::with_capacity(2 * self.dy.len());
        for (&dy, &dx) in self.dy.iter().zip(&self.dx) {
            samples.push((dy as i16 + 4) as u16 * OFFSET_SAMPLE_STEP);
            samples.push((dx as i16 + 4) as u16 * OFFSET_SAMPLE_STEP);
        }
        SiprRaster::new(self.width as u32, self.height as u32, 2, BitDepth::Eleven, samples)
            .expect("offsets within ±4 fit in 11 bits")
    }

    pub fn from_raster(r: &SiprRaster) -> std::result::Result<Self, String> {
        if r.channels() != 2 {
            return Err(format!("offset raster needs 2 channels, has {}", r.channels()));
        }
        let decode = |s: u16| -> std::result::Result<i8, String> {
            if !s.is_multiple_of(OFFSET_SAMPLE_STEP) || s > 8 * OFFSET_SAMPLE_STEP {
                return Err(format!("sample {s} is not an encoded offset"));
            }
            Ok((s / OFFSET_SAMPLE_STEP) as i8 - 4)
        };
        let mut field = OffsetField::constant(r.height() as usize, r.width() as usize, [0, 0]);
        for (i, px) in r.samples().chunks_exact(2).enumerate() {
            field.dy[i] = decode(px[0])?;
            field.dx[i] = decode(px[1])?;
        }
        Ok(field)
    }
}
