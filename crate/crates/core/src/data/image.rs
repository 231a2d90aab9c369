//! RGB images (PNG, binary PPM/PGM) and 16-bit PNG disparity maps.

use std::io::Cursor;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::loss::ValidityMask;
use crate::tensor::{Shape, Tensor};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Fixed-point scale of 16-bit disparity PNGs.
pub const DISPARITY_PNG_SCALE: f32 = 256.0;

fn png_err(e: png::DecodingError) -> Error {
    Error::format(0, format!("png: {e}"))
}

fn enc_err(e: png::EncodingError) -> Error {
    Error::format(0, format!("png: {e}"))
}

/// Decodes a PNG or binary PPM/PGM into a `1×3×H×W` tensor in `[0, 1]`.
/// Grayscale inputs are replicated to three channels; alpha is dropped.
pub fn read_image(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.starts_with(PNG_MAGIC) {
        read_png_rgb(bytes)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        read_pnm(bytes)
    } else {
        Err(Error::format(0, "unrecognised image format (expected PNG or binary PPM/PGM)"))
    }
}

fn read_png_rgb(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::format(0, "png too large"))?];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(Error::format(0, "unexpanded palette image")),
    };
    let wide = info.bit_depth == BitDepth::Sixteen;
    let max = if wide { 65535.0 } else { 255.0 };
    let sample = |i: usize| -> f32 {
        if wide {
            u16::from_be_bytes([buf[2 * i], buf[2 * i + 1]]) as f32 / max
        } else {
            buf[i] as f32 / max
        }
    };
    let per_row = info.line_size;
    let bpp = if wide { 2 } else { 1 };
    Ok(Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
        let src_c = if channels < 3 { 0 } else { c };
        sample((y * per_row) / bpp + x * channels + src_c)
    }))
}

fn read_pnm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            while bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
                pos += 1;
            }
            if bytes.get(pos) == Some(&b'#') {
                while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start, "invalid PNM header field"))?;
    }
    let [w, h, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(pos, format!("invalid maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::format(pos, "missing whitespace after header"));
    }
    pos += 1;
    let bpp = if maxval > 255 { 2 } else { 1 };
    let need = w * h * channels * bpp;
    let data = &bytes[pos..];
    if data.len() < need {
        return Err(Error::format(bytes.len(), format!("truncated payload: expected {need} bytes, found {}", data.len())));
    }
    let max = maxval as f32;
    Ok(Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
        let i = (y * w + x) * channels + if channels == 1 { 0 } else { c };
        let v = if bpp == 2 {
            u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as u32
        } else {
            data[i] as u32
        };
        v as f32 / max
    }))
}

fn check_rgb(op: &'static str, img: &Tensor<f32>) -> Result<Shape> {
    let s = img.shape();
    if s.n != 1 {
        return Err(Error::dim(op, "batch", 1, s.n));
    }
    if s.c != 3 {
        return Err(Error::dim(op, "channels", 3, s.c));
    }
    Ok(s)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn interleave(img: &Tensor<f32>) -> Vec<u8> {
    let s = img.shape();
    let mut out = Vec::with_capacity(s.numel());
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..3 {
                out.push(to_u8(img.at(0, c, y, x)));
            }
        }
    }
    out
}

/// Encodes a `1×3×H×W` tensor in `[0, 1]` as an 8-bit RGB PNG.
pub fn write_png_rgb(img: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = check_rgb("write_png_rgb", img)?;
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, s.w as u32, s.h as u32);
    enc.set_color(ColorType::Rgb);
    enc.set_depth(BitDepth::Eight);
    let mut w = enc.write_header().map_err(enc_err)?;
    w.write_image_data(&interleave(img)).map_err(enc_err)?;
    w.finish().map_err(enc_err)?;
    Ok(out)
}

/// Encodes a `1×3×H×W` tensor in `[0, 1]` as a binary 8-bit PPM.
pub fn write_ppm(img: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = check_rgb("write_ppm", img)?;
    let mut out = format!("P6\n{} {}\n255\n", s.w, s.h).into_bytes();
    out.extend(interleave(img));
    Ok(out)
}

/// Decodes a 16-bit grayscale disparity PNG: `d = raw / 256`, raw 0 invalid.
pub fn read_disparity_png16(bytes: &[u8]) -> Result<(Tensor<f32>, ValidityMask)> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(png_err)?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if depth != BitDepth::Sixteen {
        return Err(Error::format(24, format!("disparity PNG must be 16-bit, found {} bits", depth as u8)));
    }
    if color != ColorType::Grayscale {
        return Err(Error::format(25, format!("disparity PNG must be single-channel, found {color:?}")));
    }
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::format(0, "png too large"))?];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut valid = Vec::with_capacity(w * h);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &buf[y * info.line_size..];
        for x in 0..w {
            let raw = u16::from_be_bytes([row[2 * x], row[2 * x + 1]]);
            valid.push(raw > 0);
            data.push(raw as f32 / DISPARITY_PNG_SCALE);
        }
    }
    let shape = Shape::new(1, 1, h, w);
    Ok((Tensor::from_vec(shape, data)?, ValidityMask::from_vec(shape, valid)?))
}

/// Encodes a `1×1×H×W` disparity map. Non-finite or non-positive values are
/// written as 0 (invalid); positive values round to the nearest 1/256 but
/// never to 0.
pub fn write_disparity_png16(disp: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = disp.shape();
    if s.n != 1 {
        return Err(Error::dim("write_disparity_png16", "batch", 1, s.n));
    }
    if s.c != 1 {
        return Err(Error::dim("write_disparity_png16", "channels", 1, s.c));
    }
    let mut raw = Vec::with_capacity(s.numel() * 2);
    for &d in disp.data() {
        let v = if d.is_finite() && d > 0.0 {
            (d * DISPARITY_PNG_SCALE).round().clamp(1.0, 65535.0) as u16
        } else {
            0
        };
        raw.extend_from_slice(&v.to_be_bytes());
    }
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, s.w as u32, s.h as u32);
    enc.set_color(ColorType::Grayscale);
    enc.set_depth(BitDepth::Sixteen);
    let mut w = enc.write_header().map_err(enc_err)?;
    w.write_image_data(&raw).map_err(enc_err)?;
    w.finish().map_err(enc_err)?;
    Ok(out)
}
