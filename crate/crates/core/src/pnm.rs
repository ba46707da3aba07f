//! Binary PGM (P5) masks and grayscale PFM (Pf) float images.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{FloatImage, Mask};

/// Encodes a mask as P5 with maxval 255 (0 = background, 255 = foreground).
pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|&v| if v != 0 { 255u8 } else { 0 }));
    out
}

/// Decodes an 8-bit P5 image; pixels above half of maxval are foreground.
pub fn decode_pgm(bytes: &[u8]) -> Result<Mask> {
    let mut cur = HeaderCursor::new(bytes);
    if cur.token()? != "P5" {
        return Err(Error::BadImage("not a binary PGM (P5)".into()));
    }
    let width: usize = cur.number()?;
    let height: usize = cur.number()?;
    let maxval: u32 = cur.number()?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::BadImage(format!("unsupported PGM maxval {maxval}")));
    }
    let body = cur.body()?;
    let n = width * height;
    if body.len() < n {
        return Err(Error::BadImage(format!(
            "PGM payload has {} bytes, expected {n}",
            body.len()
        )));
    }
    let data = body[..n]
        .iter()
        .map(|&v| u8::from(u32::from(v) * 2 > maxval))
        .collect();
    Mask::from_vec(width, height, data)
}

/// Encodes a little-endian PFM (scale -1.0). Rows are stored bottom-up as
/// the format requires.
pub fn encode_pfm(img: &FloatImage) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(4 * img.data.len());
    for y in (0..img.height).rev() {
        for v in &img.data[y * img.width..(y + 1) * img.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<FloatImage> {
    let mut cur = HeaderCursor::new(bytes);
    match cur.token()? {
        "Pf" => {}
        "PF" => return Err(Error::BadImage("colour PFM is not supported".into())),
        other => return Err(Error::BadImage(format!("not a PFM file (magic {other:?})"))),
    }
    let width: usize = cur.number()?;
    let height: usize = cur.number()?;
    let scale: f64 = cur.number()?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::BadImage(format!("bad PFM scale {scale}")));
    }
    let little_endian = scale < 0.0;
    let body = cur.body()?;
    let n = width * height;
    if body.len() < 4 * n {
        return Err(Error::BadImage(format!(
            "PFM payload has {} bytes, expected {}",
            body.len(),
            4 * n
        )));
    }
    let mut data = vec![0f32; n];
    for (i, chunk) in body[..4 * n].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row_from_bottom, x) = (i / width, i % width);
        data[(height - 1 - row_from_bottom) * width + x] = v;
    }
    FloatImage::new(width, height, data)
}

pub fn write_pgm(mask: &Mask, path: &Path) -> Result<()> {
    write_file(path, &encode_pgm(mask))
}

pub fn read_pgm(path: &Path) -> Result<Mask> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pfm(img: &FloatImage, path: &Path) -> Result<()> {
    write_file(path, &encode_pfm(img))
}

pub fn read_pfm(path: &Path) -> Result<FloatImage> {
    decode_pfm(&fs::read(path)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

/// Whitespace-separated ASCII header tokens with `#` comments, followed by
/// exactly one whitespace byte before the binary payload.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::BadImage("truncated header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::BadImage("non-ascii header".into()))
    }

    fn number<T: std::str::FromStr>(&mut self) -> Result<T> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::BadImage(format!("bad header field {tok:?}")))
    }

    fn body(self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(c) if c.is_ascii_whitespace() => Ok(&self.bytes[self.pos + 1..]),
            _ => Err(Error::BadImage("missing payload".into())),
        }
    }
}
