//! Portable float map. Rows are stored bottom-up; a negative scale marks a
//! little-endian payload.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Decodes a PFM file into a `1×C×H×W` tensor (rows top-down) and its scale.
pub fn read_pfm(bytes: &[u8]) -> Result<(Tensor<f32>, f32)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token()?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(Error::format(0, format!("bad magic {magic:?}, expected \"Pf\" or \"PF\""))),
    };
    let width = cur.number::<usize>("width")?;
    let height = cur.number::<usize>("height")?;
    let scale_at = cur.pos;
    let scale = cur.number::<f32>("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(scale_at, format!("invalid scale {scale}")));
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format(cur.pos, "missing whitespace after scale")),
    }
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format(0, "dimensions overflow"))?;
    let need = count * 4;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        return Err(Error::format(
            cur.pos + payload.len(),
            format!("truncated payload: expected {need} bytes, found {}", payload.len()),
        ));
    }
    let little = scale < 0.0;
    let mut t = Tensor::zeros(Shape::new(1, channels, height, width));
    for (i, chunk) in payload[..need].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let c = i % channels;
        let x = (i / channels) % width;
        let row = i / (channels * width);
        *t.at_mut(0, c, height - 1 - row, x) = v;
    }
    Ok((t, scale))
}

/// As [`read_pfm`] but requires a specific channel count.
pub fn read_pfm_channels(bytes: &[u8], channels: usize) -> Result<(Tensor<f32>, f32)> {
    let (t, scale) = read_pfm(bytes)?;
    if t.shape().c != channels {
        return Err(Error::format(
            0,
            format!("expected {channels}-channel PFM, file has {} channels", t.shape().c),
        ));
    }
    Ok((t, scale))
}

/// Encodes a `1×C×H×W` tensor (C = 1 or 3). The sign of `scale` selects
/// the byte order.
pub fn write_pfm(t: &Tensor<f32>, scale: f32) -> Result<Vec<u8>> {
    let s = t.shape();
    if s.n != 1 {
        return Err(Error::dim("write_pfm", "batch", 1, s.n));
    }
    let magic = match s.c {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::dim("write_pfm", "channels", 3, c)),
    };
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Contract(format!("PFM scale must be finite and nonzero, got {scale}")));
    }
    let mut out = format!("{magic}\n{} {}\n{}\n", s.w, s.h, scale).into_bytes();
    out.reserve(s.numel() * 4);
    let little = scale < 0.0;
    for y in (0..s.h).rev() {
        for x in 0..s.w {
            for c in 0..s.c {
                let v = t.at(0, c, y, x);
                out.extend_from_slice(&if little { v.to_le_bytes() } else { v.to_be_bytes() });
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn token(&mut self) -> Result<String> {
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
            if self.pos - start > 64 {
                return Err(Error::format(start, "header token too long"));
            }
        }
        if start == self.pos {
            return Err(Error::format(start, "unexpected end of header"));
        }
        String::from_utf8(self.bytes[start..self.pos].to_vec()).map_err(|_| Error::format(start, "non-ASCII header"))
    }

    fn number<V: std::str::FromStr>(&mut self, what: &str) -> Result<V> {
        let tok = self.token()?;
        let at = self.pos - tok.len();
        tok.parse()
            .map_err(|_| Error::format(at, format!("invalid {what} {tok:?}")))
    }
}
