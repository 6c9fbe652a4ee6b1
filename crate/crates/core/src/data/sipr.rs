//! SIPR rasters: a fixed 18-byte header followed by 16-bit samples.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SIPR"
//!      4     4  width, u32 LE
//!      8     4  height, u32 LE
//!     12     4  channels, u32 LE
//!     16     2  bit depth, u16 LE: 11 or 16
//!     18   2·n  samples, u16 LE, row-major, channel-interleaved
//! ```
//!
//! 11-bit rasters may only hold values up to 2047 and load as `value / 2047`.

use std::fs;
use std::path::Path;

use pansharp_tensor::{Shape, Tensor};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SIPR";
pub const HEADER_LEN: usize = 18;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eleven,
    Sixteen,
}

impl BitDepth {
    pub fn bits(self) -> u16 {
        match self {
            BitDepth::Eleven => 11,
            BitDepth::Sixteen => 16,
        }
    }

    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eleven => 2047,
            BitDepth::Sixteen => u16::MAX,
        }
    }

    fn from_bits(bits: u16) -> Option<Self> {
        match bits {
            11 => Some(BitDepth::Eleven),
            16 => Some(BitDepth::Sixteen),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SiprError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("truncated: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("unsupported bit depth {0}")]
    BitDepth(u16),
    #[error("sample {index} is {value}, above the {bits}-bit maximum")]
    OutOfRange { index: usize, value: u16, bits: u16 },
    #[error("zero or oversized dimensions {width}x{height}x{channels}")]
    Dimensions { width: u32, height: u32, channels: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiprRaster {
    width: u32,
    height: u32,
    channels: u32,
    depth: BitDepth,
    samples: Vec<u16>,
}

fn sample_count(width: u32, height: u32, channels: u32) -> std::result::Result<usize, SiprError> {
    let bad = SiprError::Dimensions { width, height, channels };
    if width == 0 || height == 0 || channels == 0 {
        return Err(bad);
    }
    (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels as usize))
        .filter(|n| n.checked_mul(2).is_some())
        .ok_or(bad)
}

impl SiprRaster {
    pub fn new(
        width: u32,
        height: u32,
        channels: u32,
        depth: BitDepth,
        samples: Vec<u16>,
    ) -> std::result::Result<Self, SiprError> {
        let n = sample_count(width, height, channels)?;
        if samples.len() != n {
            return Err(SiprError::Truncated {
                expected: n,
                actual: samples.len(),
            });
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, &v)| v > depth.max_value()) {
            return Err(SiprError::OutOfRange {
                index,
                value,
                bits: depth.bits(),
            });
        }
        Ok(SiprRaster {
            width,
            height,
            channels,
            depth,
            samples,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn depth(&self) -> BitDepth {
        self.depth
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * self.samples.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.extend_from_slice(&self.depth.bits().to_le_bytes());
        for s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, SiprError> {
        if bytes.len() < HEADER_LEN {
            return Err(SiprError::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(SiprError::BadMagic(magic));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let (width, height, channels) = (u32_at(4), u32_at(8), u32_at(12));
        let bits = u16::from_le_bytes([bytes[16], bytes[17]]);
        let depth = BitDepth::from_bits(bits).ok_or(SiprError::BitDepth(bits))?;
        let n = sample_count(width, height, channels)?;
        let expected = HEADER_LEN + 2 * n;
        if bytes.len() < expected {
            return Err(SiprError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(SiprError::TrailingBytes(bytes.len() - expected));
        }
        let samples = bytes[HEADER_LEN..]
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        SiprRaster::new(width, height, channels, depth, samples)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        SiprRaster::decode(&bytes).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    /// `[1, height, width, channels]` with every sample divided by the depth maximum.
    pub fn to_tensor(&self) -> Tensor {
        let max = f64::from(self.depth.max_value());
        let data = self.samples.iter().map(|&s| f64::from(s) / max).collect();
        let shape = Shape::new(1, self.height as usize, self.width as usize, self.channels as usize);
        Tensor::new(shape, data).expect("sample count checked at construction")
    }

    /// Quantize a single image with values in `[0, 1]` (clamped) to the nearest level.
    pub fn from_tensor(t: &Tensor, depth: BitDepth) -> std::result::Result<Self, SiprError> {
        let [b, h, w, c] = t.shape().dims();
        if b != 1 || u32::try_from(h.max(w).max(c)).is_err() {
            return Err(SiprError::Dimensions {
                width: w as u32,
                height: h as u32,
                channels: c as u32,
            });
        }
        let max = f64::from(depth.max_value());
        let samples = t.data().iter().map(|&v| (v.clamp(0.0, 1.0) * max).round() as u16).collect();
        SiprRaster::new(w as u32, h as u32, c as u32, depth, samples)
    }
}

/// Snap values to the 11-bit grid used on disk, so that a tensor survives a
/// write/read cycle unchanged.
pub fn quantize_11bit(t: &Tensor) -> Tensor {
    t.map(|v| (v.clamp(0.0, 1.0) * 2047.0).round() / 2047.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster() -> SiprRaster {
        SiprRaster::new(3, 2, 2, BitDepth::Eleven, (0..12).map(|i| i * 170).collect()).unwrap()
    }

    #[test]
    fn encode_decode_round_trip() {
        let r = raster();
        let bytes = r.encode();
        assert_eq!(bytes.len(), HEADER_LEN + 24);
        assert_eq!(&bytes[..4], b"SIPR");
        assert_eq!(SiprRaster::decode(&bytes).unwrap(), r);
    }

    #[test]
    fn header_layout() {
        let bytes = raster().encode();
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..18], &11u16.to_le_bytes());
        assert_eq!(&bytes[20..22], &170u16.to_le_bytes());
    }

    #[test]
    fn parse_errors() {
        let good = raster().encode();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(SiprRaster::decode(&bad), Err(SiprError::BadMagic(_))));
        assert!(matches!(
            SiprRaster::decode(&good[..good.len() - 1]),
            Err(SiprError::Truncated { .. })
        ));
        assert!(matches!(SiprRaster::decode(&good[..10]), Err(SiprError::Truncated { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(SiprRaster::decode(&long), Err(SiprError::TrailingBytes(1))));
        let mut depth = good.clone();
        depth[16] = 12;
        assert!(matches!(SiprRaster::decode(&depth), Err(SiprError::BitDepth(12))));
        let mut over = good;
        over[18..20].copy_from_slice(&2048u16.to_le_bytes());
        assert!(matches!(SiprRaster::decode(&over), Err(SiprError::OutOfRange { index: 0, .. })));
    }

    #[test]
    fn normalization_endpoint() {
        let r = SiprRaster::new(1, 1, 1, BitDepth::Eleven, vec![2047]).unwrap();
        assert_eq!(r.to_tensor().data(), &[1.0]);
        let r = SiprRaster::new(1, 1, 1, BitDepth::Sixteen, vec![u16::MAX]).unwrap();
        assert_eq!(r.to_tensor().data(), &[1.0]);
    }

    #[test]
    fn quantized_tensor_survives_round_trip() {
        let t = Tensor::from_fn(Shape::new(1, 5, 4, 3), |_, y, x, c| ((y * 13 + x * 7 + c) % 17) as f64 / 16.0);
        let q = quantize_11bit(&t);
        let r = SiprRaster::from_tensor(&q, BitDepth::Eleven).unwrap();
        assert_eq!(r.to_tensor(), q);
    }
}
