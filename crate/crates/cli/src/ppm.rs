//! Binary PPM (P6, maxval 255) frames.

use std::path::Path;

use mfst_core::Tensor3;

#[derive(Debug, thiserror::Error)]
pub enum PpmError {
    #[error("malformed PPM header: {0}")]
    MalformedHeader(String),
    #[error("unsupported PPM format {0} (only binary P6 is read)")]
    UnsupportedFormat(String),
    #[error("unsupported PPM depth: maxval {0}, expected 255")]
    UnsupportedDepth(usize),
    #[error("truncated PPM payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&[u8], PpmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PpmError::MalformedHeader(format!("missing {what}")));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize, PpmError> {
        let tok = self.token(what)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PpmError::MalformedHeader(format!("bad {what} {:?}", String::from_utf8_lossy(tok))))
    }
}

/// Decodes a P6 image into an `H x W x 3` tensor with values in `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor3, PpmError> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h.token("magic number")?;
    match magic {
        b"P6" => {}
        b"P1" | b"P2" | b"P3" | b"P4" | b"P5" | b"P7" => {
            return Err(PpmError::UnsupportedFormat(String::from_utf8_lossy(magic).into_owned()))
        }
        _ => {
            return Err(PpmError::MalformedHeader(format!(
                "bad magic number {:?}",
                String::from_utf8_lossy(magic)
            )))
        }
    }
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PpmError::MalformedHeader(format!("empty image {width}x{height}")));
    }
    if maxval != 255 {
        return Err(PpmError::UnsupportedDepth(maxval));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
        return Err(PpmError::MalformedHeader("no separator after maxval".into()));
    }
    let payload = &bytes[h.pos + 1..];
    let expected = width * height * 3;
    if payload.len() < expected {
        return Err(PpmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let data = payload[..expected].iter().map(|&b| b as f32 / 255.0).collect();
    Ok(Tensor3::new(height, width, 3, data).expect("sized buffer"))
}

pub fn read_frame(path: impl AsRef<Path>) -> Result<Tensor3, PpmError> {
    decode_ppm(&std::fs::read(path)?)
}

/// Encodes a 3-channel tensor, clamping to `[0, 1]` and rounding to 8 bits.
pub fn encode_ppm(image: &Tensor3) -> Vec<u8> {
    assert_eq!(image.channels(), 3, "PPM needs 3 channels");
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn write_frame(path: impl AsRef<Path>, image: &Tensor3) -> std::io::Result<()> {
    std::fs::write(path, encode_ppm(image))
}
