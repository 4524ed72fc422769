//! PNG encoding and decoding for color images, label maps and masks.
//!
//! Encoder settings are fixed so identical pixels always produce identical
//! bytes.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use png::{BitDepth, ColorType, Compression, Decoder, Encoder, Transformations};

use crate::error::{Error, Result};
use crate::math::Real;

fn image_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn encode(width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        enc.set_compression(Compression::Balanced);
        enc.set_filter(png::Filter::NoFilter);
        let mut w = enc.write_header().expect("writing PNG header to memory");
        w.write_image_data(data).expect("writing PNG data to memory");
    }
    out
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes an interleaved RGB image with values in `[0,1]` as 8-bit PNG.
pub fn encode_rgb_png<F: Real>(width: usize, height: usize, rgb: &[F]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3, "RGB buffer size");
    let bytes: Vec<u8> = rgb.iter().map(|v| to_u8(v.as_f64())).collect();
    encode(width, height, ColorType::Rgb, BitDepth::Eight, &bytes)
}

/// Encodes a boolean mask as an 8-bit grayscale PNG (0 or 255).
pub fn encode_mask_png(width: usize, height: usize, mask: &[bool]) -> Vec<u8> {
    assert_eq!(mask.len(), width * height, "mask size");
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    encode(width, height, ColorType::Grayscale, BitDepth::Eight, &bytes)
}

/// Encodes a label map as a 16-bit grayscale PNG (big-endian samples).
pub fn encode_label_png(width: usize, height: usize, labels: &[u16]) -> Vec<u8> {
    assert_eq!(labels.len(), width * height, "label map size");
    let bytes: Vec<u8> = labels.iter().flat_map(|v| v.to_be_bytes()).collect();
    encode(width, height, ColorType::Grayscale, BitDepth::Sixteen, &bytes)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn write_rgb_png<F: Real>(path: &Path, width: usize, height: usize, rgb: &[F]) -> Result<()> {
    write_file(path, &encode_rgb_png(width, height, rgb))
}

pub fn write_label_png(path: &Path, width: usize, height: usize, labels: &[u16]) -> Result<()> {
    write_file(path, &encode_label_png(width, height, labels))
}

struct Raw {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    data: Vec<u8>,
}

fn decode(path: &Path) -> Result<Raw> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = Decoder::new(BufReader::new(file));
    dec.set_transformations(Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| image_err(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut data = vec![0; size];
    let info = reader
        .next_frame(&mut data)
        .map_err(|e| image_err(path, e.to_string()))?;
    data.truncate(info.buffer_size());
    Ok(Raw {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

/// Decodes an 8-bit RGB or RGBA PNG into interleaved RGB in `[0,1]`.
/// Alpha, if present, is discarded.
pub fn read_rgb_png(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let raw = decode(path)?;
    if raw.depth != BitDepth::Eight {
        return Err(image_err(path, format!("expected 8-bit color, found {:?}", raw.depth)));
    }
    let stride = match raw.color {
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        other => return Err(image_err(path, format!("expected RGB image, found {other:?}"))),
    };
    let rgb = raw
        .data
        .chunks_exact(stride)
        .flat_map(|p| p[..3].iter().map(|&v| v as f32 / 255.0))
        .collect();
    Ok((raw.width, raw.height, rgb))
}

/// Decodes a 16-bit single-channel PNG label map.
pub fn read_label_png(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let raw = decode(path)?;
    if raw.color != ColorType::Grayscale || raw.depth != BitDepth::Sixteen {
        return Err(image_err(
            path,
            format!("expected 16-bit grayscale label map, found {:?} {:?}", raw.color, raw.depth),
        ));
    }
    let labels = raw
        .data
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok((raw.width, raw.height, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trip_keeps_full_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        let labels: Vec<u16> = vec![0, 1, 2, 65535, 300, 7];
        write_label_png(&p, 3, 2, &labels).unwrap();
        assert_eq!(read_label_png(&p).unwrap(), (3, 2, labels));
    }

    #[test]
    fn rgb_round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let rgb = [0.0f32, 0.5, 1.0, 0.2, 0.4, 2.0];
        write_rgb_png(&p, 2, 1, &rgb).unwrap();
        let (w, h, back) = read_rgb_png(&p).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(back[0], 0.0);
        assert_eq!(back[2], 1.0);
        assert_eq!(back[5], 1.0);
        assert!((back[1] - 128.0 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn encoding_is_deterministic() {
        let rgb: Vec<f32> = (0..48).map(|i| i as f32 / 48.0).collect();
        assert_eq!(encode_rgb_png(4, 4, &rgb), encode_rgb_png(4, 4, &rgb));
    }

    #[test]
    fn color_png_is_not_a_label_map() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        write_rgb_png(&p, 1, 1, &[0.1f32, 0.2, 0.3]).unwrap();
        assert!(matches!(read_label_png(&p), Err(Error::Image { .. })));
    }
}
