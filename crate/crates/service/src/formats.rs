//! Image, depth and guidance file formats.

use std::path::Path;

use regiongrasp::guidance::{parse_keypoints, Mask};
use regiongrasp::scene::{RgbdImage, NO_OBJECT};
use regiongrasp::{Error, Result};

use crate::pipeline::Guide;

fn png_error(e: impl std::fmt::Display) -> Error {
    Error::Format(format!("PNG: {e}"))
}

fn encode_png(width: u32, height: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width, height);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut w = enc.write_header().map_err(png_error)?;
    w.write_image_data(data).map_err(png_error)?;
    w.finish().map_err(png_error)?;
    Ok(out)
}

/// 8-bit RGB PNG of the color render.
pub fn rgb_png(img: &RgbdImage) -> Result<Vec<u8>> {
    let data: Vec<u8> = img.rgb.iter().map(|&c| (c.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    encode_png(img.width, img.height, png::ColorType::Rgb, png::BitDepth::Eight, &data)
}

/// 16-bit grayscale PNG of object ids; background is 65535.
pub fn ids_png(img: &RgbdImage) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(img.ids.len() * 2);
    for &id in &img.ids {
        let v = if id == NO_OBJECT { u16::MAX } else { u16::try_from(id).map_err(|_| Error::Range(format!("object id {id} exceeds 16 bits")))? };
        data.extend(v.to_be_bytes());
    }
    encode_png(img.width, img.height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &data)
}

/// Width and height as u32 LE, then row-major f32 LE depth in meters
/// (0 where there is no return).
pub fn depth_bytes(img: &RgbdImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * img.depth.len());
    out.extend(img.width.to_le_bytes());
    out.extend(img.height.to_le_bytes());
    for &d in &img.depth {
        out.extend((d as f32).to_le_bytes());
    }
    out
}

pub fn parse_depth(bytes: &[u8]) -> Result<(u32, u32, Vec<f32>)> {
    let bad = || Error::Format("depth buffer shorter than its header says".into());
    let word = |i: usize| bytes.get(i..i + 4).map(|b| [b[0], b[1], b[2], b[3]]).ok_or_else(bad);
    let (w, h) = (u32::from_le_bytes(word(0)?), u32::from_le_bytes(word(4)?));
    let n = w as usize * h as usize;
    if bytes.len() != 8 + 4 * n {
        return Err(bad());
    }
    Ok((w, h, bytes[8..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()))
}

/// `click:u,v`, `mask:FILE` (PGM or RLE JSON) or `ray:FILE` (keypoints).
pub fn parse_guide(spec: &str) -> Result<Guide> {
    let bad = || Error::Format(format!("guide must be click:u,v, mask:FILE or ray:FILE, got {spec:?}"));
    let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
    match kind {
        "click" => {
            let (u, v) = arg.split_once(',').ok_or_else(bad)?;
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
            Ok(Guide::Click { u: num(u)?, v: num(v)? })
        }
        "mask" => Ok(Guide::Mask(Mask::parse(&std::fs::read(arg)?)?)),
        "ray" => Ok(Guide::Pointing(parse_keypoints(&std::fs::read_to_string(arg)?)?)),
        _ => Err(bad()),
    }
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::fs::write(path, bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_roundtrip() {
        let mut img = RgbdImage::empty(3, 2);
        img.depth = vec![0.5, 0.0, 0.25, 1.0, 0.125, 2.0];
        let (w, h, d) = parse_depth(&depth_bytes(&img)).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(d, vec![0.5, 0.0, 0.25, 1.0, 0.125, 2.0]);
        assert_eq!(parse_depth(&depth_bytes(&img)[..20]).unwrap_err().kind(), "format");
    }

    #[test]
    fn guide_specs() {
        assert_eq!(parse_guide("click:320, 240.5").unwrap(), Guide::Click { u: 320.0, v: 240.5 });
        for bad in ["click:1", "tap:1,2", "click:a,b", "nothing"] {
            assert_eq!(parse_guide(bad).unwrap_err().kind(), "format");
        }
        assert_eq!(parse_guide("mask:/nonexistent/mask.pgm").unwrap_err().kind(), "io");
    }
}
