//! Binary PPM (P6, maxval 255) reader/writer and the RGB raster type.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    /// `width * height * 3` samples, row-major, RGB interleaved.
    pub data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Format {
                what: "raster image",
                message: format!(
                    "{}x{} needs {} bytes, got {}",
                    width,
                    height,
                    width * height * 3,
                    data.len()
                ),
            });
        }
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    /// Solid-color image.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        RasterImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Parses a binary P6 PPM with maxval 255. Comments (`#` to end of line)
/// are allowed anywhere in the header.
pub fn read_ppm(bytes: &[u8]) -> Result<RasterImage> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(Error::Format {
            what: "PPM",
            message: format!("expected P6 magic, got {:?}", String::from_utf8_lossy(&magic)),
        });
    }
    let width = parse_number(&next_token(bytes, &mut pos)?)?;
    let height = parse_number(&next_token(bytes, &mut pos)?)?;
    let maxval = parse_number(&next_token(bytes, &mut pos)?)?;
    if maxval != 255 {
        return Err(Error::Format {
            what: "PPM",
            message: format!("only maxval 255 supported, got {}", maxval),
        });
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err(Error::Format {
            what: "PPM",
            message: format!("truncated pixel data: need {} bytes, have {}", need, bytes.len().saturating_sub(pos)),
        });
    }
    RasterImage::new(width, height, bytes[pos..pos + need].to_vec())
}

pub fn read_ppm_file(path: &Path) -> Result<RasterImage> {
    read_ppm(&fs::read(path)?)
}

pub fn write_ppm(img: &RasterImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.data.len() + 32);
    let _ = write!(out, "P6\n{} {}\n255\n", img.width, img.height);
    out.extend_from_slice(&img.data);
    out
}

pub fn write_ppm_file(img: &RasterImage, path: &Path) -> Result<()> {
    Ok(fs::write(path, write_ppm(img))?)
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<Vec<u8>> {
    // Skip whitespace and comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format {
            what: "PPM",
            message: "unexpected end of header".into(),
        });
    }
    Ok(bytes[start..*pos].to_vec())
}

fn parse_number(token: &[u8]) -> Result<usize> {
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format {
            what: "PPM",
            message: format!("bad header number {:?}", String::from_utf8_lossy(token)),
        })
}
