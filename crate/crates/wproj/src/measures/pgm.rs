//! Minimal PGM (portable graymap) codec: `P2` (ASCII) and `P5` (binary),
//! 8- or 16-bit, with `#` comments in the header. Values are scaled to
//! `[0, 1]` by the declared maxval.
//!
//! The parser is written against untrusted input: it never panics, bounds
//! allocation by [`MAX_PIXELS`], and reports malformed headers and truncated
//! payloads as [`Error::ImageFormat`].

use ndarray::Array2;

use crate::{Error, Result};

/// Upper bound on `width * height` accepted from a header.
pub const MAX_PIXELS: u64 = 100_000_000;

struct Tokens<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    /// Next whitespace-delimited token, skipping `#` comments.
    fn next_token(&mut self) -> Result<&'a [u8]> {
        loop {
            while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos >= self.data.len() {
                return Err(Error::ImageFormat("unexpected end of header".into()));
            }
            if self.data[self.pos] == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            let start = self.pos;
            while self.pos < self.data.len()
                && !self.data[self.pos].is_ascii_whitespace()
                && self.data[self.pos] != b'#'
            {
                self.pos += 1;
            }
            return Ok(&self.data[start..self.pos]);
        }
    }

    fn next_u64(&mut self, what: &str) -> Result<u64> {
        let tok = self.next_token()?;
        let s = std::str::from_utf8(tok)
            .map_err(|_| Error::ImageFormat(format!("non-ASCII {what}")))?;
        s.parse::<u64>()
            .map_err(|_| Error::ImageFormat(format!("bad {what}: {s:?}")))
    }
}

/// Parses PGM bytes into a grid of intensities in `[0, 1]`.
pub fn parse_pgm(data: &[u8]) -> Result<Array2<f64>> {
    let mut t = Tokens::new(data);
    let magic = t.next_token()?;
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(Error::ImageFormat(format!(
                "bad magic {:?}, expected P2 or P5",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = t.next_u64("width")?;
    let height = t.next_u64("height")?;
    let maxval = t.next_u64("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::ImageFormat("zero image dimension".into()));
    }
    let pixels = width
        .checked_mul(height)
        .ok_or_else(|| Error::ImageFormat("dimension overflow".into()))?;
    if pixels > MAX_PIXELS {
        return Err(Error::ImageTooLarge {
            pixels,
            limit: MAX_PIXELS,
        });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::ImageFormat(format!(
            "maxval {maxval} outside 1..=65535"
        )));
    }
    let (w, h) = (width as usize, height as usize);
    let n = w * h;
    let scale = 1.0 / maxval as f64;
    let mut values = Vec::with_capacity(n);

    if binary {
        // Exactly one whitespace byte separates the header from the payload.
        if t.pos >= data.len() || !data[t.pos].is_ascii_whitespace() {
            return Err(Error::ImageFormat("missing header terminator".into()));
        }
        let body = &data[t.pos + 1..];
        if maxval < 256 {
            if body.len() < n {
                return Err(Error::ImageFormat(format!(
                    "truncated payload: {} bytes for {} pixels",
                    body.len(),
                    n
                )));
            }
            for &b in &body[..n] {
                if u64::from(b) > maxval {
                    return Err(Error::ImageFormat(format!(
                        "sample {b} exceeds maxval {maxval}"
                    )));
                }
                values.push(f64::from(b) * scale);
            }
        } else {
            // 16-bit samples, most significant byte first.
            if body.len() < 2 * n {
                return Err(Error::ImageFormat(format!(
                    "truncated payload: {} bytes for {} 16-bit pixels",
                    body.len(),
                    n
                )));
            }
            for chunk in body[..2 * n].chunks_exact(2) {
                let v = u16::from_be_bytes([chunk[0], chunk[1]]);
                if u64::from(v) > maxval {
                    return Err(Error::ImageFormat(format!(
                        "sample {v} exceeds maxval {maxval}"
                    )));
                }
                values.push(f64::from(v) * scale);
            }
        }
    } else {
        for _ in 0..n {
            let v = t.next_u64("sample")?;
            if v > maxval {
                return Err(Error::ImageFormat(format!(
                    "sample {v} exceeds maxval {maxval}"
                )));
            }
            values.push(v as f64 * scale);
        }
    }

    Ok(Array2::from_shape_vec((h, w), values).expect("length checked above"))
}

/// Encodes a grid of `[0, 1]` intensities as an 8-bit binary (`P5`) PGM.
/// Values are clamped to `[0, 1]` before quantization.
pub fn encode_pgm(grid: &Array2<f64>) -> Vec<u8> {
    let (h, w) = grid.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w);
    for &v in grid.iter() {
        let q = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        out.push(q);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_roundtrip() {
        let g = parse_pgm(b"P2\n# comment\n2 2\n255\n0 255\n128 0\n").unwrap();
        assert_eq!(g.dim(), (2, 2));
        assert_eq!(g[[0, 1]], 1.0);
        assert!((g[[1, 0]] - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn binary_8bit_and_16bit() {
        let g = parse_pgm(b"P5\n2 1\n255\n\x00\xFF").unwrap();
        assert_eq!(g[[0, 0]], 0.0);
        assert_eq!(g[[0, 1]], 1.0);

        let mut data = b"P5\n1 1\n65535\n".to_vec();
        data.extend_from_slice(&0x8000u16.to_be_bytes());
        let g = parse_pgm(&data).unwrap();
        assert!((g[[0, 0]] - 32768.0 / 65535.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_pgm(b"").is_err());
        assert!(parse_pgm(b"P6\n1 1\n255\nx").is_err());
        assert!(parse_pgm(b"P5\n0 5\n255\n").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\nab").is_err()); // truncated
        assert!(parse_pgm(b"P2\n1 1\n255\n300\n").is_err()); // over maxval
        assert!(parse_pgm(b"P2\n1 1\n0\n0\n").is_err()); // bad maxval
        assert!(matches!(
            parse_pgm(b"P5\n100000 100000\n255\n"),
            Err(Error::ImageTooLarge { .. })
        ));
    }

    #[test]
    fn encode_parse_roundtrip() {
        let grid =
            Array2::from_shape_fn((3, 4), |(i, j)| ((i * 4 + j) as f64 / 11.0).clamp(0.0, 1.0));
        let bytes = encode_pgm(&grid);
        let back = parse_pgm(&bytes).unwrap();
        assert_eq!(back.dim(), (3, 4));
        for (a, b) in grid.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
