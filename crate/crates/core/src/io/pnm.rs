//! Binary netpbm: PGM (`P5`) and PPM (`P6`), 8-bit, maxval 255.

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbaImage};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    data_start: usize,
}

fn skip_space_and_comments(b: &[u8], mut i: usize) -> usize {
    loop {
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < b.len() && b[i] == b'#' {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
        } else {
            return i;
        }
    }
}

fn header_number(b: &[u8], i: &mut usize, what: &str) -> Result<usize> {
    *i = skip_space_and_comments(b, *i);
    let start = *i;
    while *i < b.len() && b[*i].is_ascii_digit() {
        *i += 1;
    }
    if start == *i {
        return Err(if *i >= b.len() {
            Error::TruncatedFile(format!("header ends before {what}"))
        } else {
            Error::MalformedHeader(format!("{what} is not a decimal number"))
        });
    }
    std::str::from_utf8(&b[start..*i])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader(format!("{what} is too large")))
}

fn parse_header(b: &[u8]) -> Result<Header> {
    if b.len() < 2 {
        return Err(Error::TruncatedFile("missing magic number".into()));
    }
    let magic = [b[0], b[1]];
    if magic != *b"P5" && magic != *b"P6" {
        return Err(Error::BadMagic(format!("{:?}", String::from_utf8_lossy(&magic))));
    }
    let mut i = 2;
    let width = header_number(b, &mut i, "width")?;
    let height = header_number(b, &mut i, "height")?;
    let maxval = header_number(b, &mut i, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("empty image {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::OutOfRangeSample(format!("maxval {maxval}, only 255 is supported")));
    }
    match b.get(i) {
        Some(c) if c.is_ascii_whitespace() => {}
        Some(_) => return Err(Error::MalformedHeader("no whitespace after maxval".into())),
        None => return Err(Error::TruncatedFile("no raster data".into())),
    }
    Ok(Header {
        magic,
        width,
        height,
        data_start: i + 1,
    })
}

fn raster<'a>(b: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8]> {
    let need = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::MalformedHeader(format!("dimensions {}x{} overflow", h.width, h.height)))?;
    let have = b.len() - h.data_start;
    if have < need {
        return Err(Error::TruncatedFile(format!("{have} raster bytes, expected {need}")));
    }
    Ok(&b[h.data_start..h.data_start + need])
}

/// Intensities are scaled to `[0, 1]` by dividing by 255.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let h = parse_header(bytes)?;
    if h.magic != *b"P5" {
        return Err(Error::BadMagic("expected P5".into()));
    }
    let data = raster(bytes, &h, 1)?;
    GrayImage::new(h.width, h.height, data.iter().map(|&v| v as f64 / 255.0).collect())
}

/// Color image with alpha 255.
pub fn read_ppm(bytes: &[u8]) -> Result<RgbaImage> {
    let h = parse_header(bytes)?;
    if h.magic != *b"P6" {
        return Err(Error::BadMagic("expected P6".into()));
    }
    let data = raster(bytes, &h, 3)?;
    RgbaImage::new(h.width, h.height, data.chunks_exact(3).map(|c| [c[0], c[1], c[2], 255]).collect())
}

/// Reads either flavor; gray samples are replicated into RGB.
pub fn read_image(bytes: &[u8]) -> Result<RgbaImage> {
    let h = parse_header(bytes)?;
    if h.magic == *b"P6" {
        return read_ppm(bytes);
    }
    let data = raster(bytes, &h, 1)?;
    RgbaImage::new(h.width, h.height, data.iter().map(|&v| [v, v, v, 255]).collect())
}

pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

/// Alpha is dropped.
pub fn write_ppm(img: &RgbaImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for p in img.pixels() {
        out.extend_from_slice(&p[..3]);
    }
    out
}
