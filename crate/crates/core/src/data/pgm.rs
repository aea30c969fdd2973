//! Minimal binary PGM (P5, maxval 255) reader and writer.

use std::io::Write;

use super::{DataError, GrayImage};

/// Parses a binary P5 PGM with maxval 255.
pub fn decode(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ASCII PGM header")?);
    }
    if fields[0] != "P5" {
        return Err(format!("unsupported PGM magic {:?}", fields[0]));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PGM header field {s:?}"));
    let width = parse(fields[1])?;
    let height = parse(fields[2])?;
    let maxval = parse(fields[3])?;
    if maxval != 255 {
        return Err(format!("unsupported PGM maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let len = width * height;
    if bytes.len() < pos + len {
        return Err("truncated PGM raster".into());
    }
    GrayImage::new(width, height, bytes[pos..pos + len].to_vec()).map_err(|e| e.to_string())
}

pub fn encode(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn write(path: &std::path::Path, image: &GrayImage) -> Result<(), DataError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(image))?;
    Ok(())
}
