//! Grayscale image files: binary PGM (P5, 8 or 16 bit) and grayscale PNG.
//!
//! Loaded samples are scaled to `[0, 1]` by the file's maximum value.
//! Saving quantizes to the requested bit depth, so a load after a save
//! returns the quantized values exactly.

use std::fs;
use std::io::{BufReader, Cursor};
use std::path::Path;

use scorefp_core::ImageField;

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Reads a PGM or PNG file, chosen by its magic bytes.
pub fn load_image(path: &Path) -> AppResult<ImageField> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode_image(&bytes).map_err(|e| e.with_path(path))
}

pub fn decode_image(bytes: &[u8]) -> AppResult<ImageField> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else {
        Err(AppError::Format("unrecognised image format (expected P5 PGM or PNG)".into()))
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> AppResult<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.bytes.len() {
                AppError::Truncated(format!("PGM header ends before {what}"))
            } else {
                AppError::Format(format!("PGM header: expected {what}"))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| AppError::Format(format!("PGM header: {what} out of range")))
    }
}

fn decode_pgm(bytes: &[u8]) -> AppResult<ImageField> {
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(AppError::Format(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return Err(AppError::Format("PGM header not terminated by whitespace".into())),
        None => return Err(AppError::Truncated("PGM raster missing".into())),
    }
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let raster = &bytes[cur.pos..];
    let needed = width * height * sample_bytes;
    if raster.len() < needed {
        return Err(AppError::Truncated(format!(
            "PGM raster holds {} of {needed} bytes",
            raster.len()
        )));
    }
    let scale = f64::from(maxval);
    let values = if sample_bytes == 1 {
        raster[..needed].iter().map(|&b| f64::from(b) / scale).collect()
    } else {
        raster[..needed]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / scale)
            .collect()
    };
    Ok(ImageField::new(height, width, values)?)
}

fn decode_png(bytes: &[u8]) -> AppResult<ImageField> {
    let png_err = |e: png::DecodingError| match e {
        png::DecodingError::IoError(io) => AppError::Truncated(io.to_string()),
        other => AppError::Format(other.to_string()),
    };
    let mut decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale {
        return Err(AppError::Format(format!("PNG colour type {color:?} is not grayscale")));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| AppError::Format("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let values: Vec<f64> = match depth {
        png::BitDepth::Sixteen => buf
            .chunks_exact(info.line_size)
            .flat_map(|row| row[..2 * w].chunks_exact(2).map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / 65535.0))
            .collect(),
        _ => buf
            .chunks_exact(info.line_size)
            .flat_map(|row| row[..w].iter().map(|&b| f64::from(b) / 255.0))
            .collect(),
    };
    Ok(ImageField::new(h, w, values)?)
}

/// Quantizes `v` clamped to `[0, 1]` to `0..=max`.
pub fn quantize(v: f64, depth: BitDepth) -> u32 {
    let max = f64::from(depth.max_value());
    (v.clamp(0.0, 1.0) * max).round() as u32
}

pub fn encode_pgm(height: usize, width: usize, values: &[f64], depth: BitDepth) -> Vec<u8> {
    assert_eq!(values.len(), height * width);
    let mut out = format!("P5\n{width} {height}\n{}\n", depth.max_value()).into_bytes();
    for &v in values {
        let q = quantize(v, depth);
        match depth {
            BitDepth::Eight => out.push(q as u8),
            BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    out
}

pub fn save_image(field: &ImageField, path: &Path, depth: BitDepth) -> AppResult<()> {
    let bytes = encode_pgm(field.height(), field.width(), field.values(), depth);
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

/// Lays images of equal shape side by side in one PGM.
pub fn save_strip(frames: &[ImageField], path: &Path, depth: BitDepth) -> AppResult<()> {
    let first = frames
        .first()
        .ok_or_else(|| AppError::Input("snapshot strip needs at least one frame".into()))?;
    let (h, w) = (first.height(), first.width());
    if frames.iter().any(|f| f.height() != h || f.width() != w) {
        return Err(AppError::Input("strip frames differ in shape".into()));
    }
    let total = w * frames.len();
    let mut values = Vec::with_capacity(h * total);
    for i in 0..h {
        for f in frames {
            values.extend_from_slice(&f.values()[i * w..(i + 1) * w]);
        }
    }
    fs::write(path, encode_pgm(h, total, &values, depth)).map_err(|e| AppError::io(path, e))
}
