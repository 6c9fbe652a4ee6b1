//! 8-bit binary PPM/PGM previews of SIPR rasters, linear with clamping.

use pansharp_core::data::SiprRaster;

/// One band becomes a PGM (`P5`), two or three bands a PPM (`P6`); a missing
/// third band is written as zero.
pub fn encode(r: &SiprRaster) -> Result<Vec<u8>, String> {
    let c = r.channels() as usize;
    if !(1..=3).contains(&c) {
        return Err(format!("cannot preview a {c}-band raster"));
    }
    let max = f64::from(r.depth().max_value());
    let to8 = |s: u16| ((f64::from(s) / max).clamp(0.0, 1.0) * 255.0).round() as u8;
    let (magic, out_c) = if c == 1 { ("P5", 1) } else { ("P6", 3) };
    let mut bytes = format!("{magic}\n{} {}\n255\n", r.width(), r.height()).into_bytes();
    for px in r.samples().chunks_exact(c) {
        for k in 0..out_c {
            bytes.push(px.get(k).map_or(0, |&s| to8(s)));
        }
    }
    Ok(bytes)
}
