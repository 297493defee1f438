//! Minimal PNM (PGM/PPM) image I/O.
//!
//! The bundle format stores depth as binary 16-bit PGM (`P5`, maxval 65535,
//! big-endian samples, millimeters, `0` = invalid), masks as 8-bit PGM
//! (`P5`, maxval 255), and color as binary 8-bit PPM (`P6`). Readers accept
//! `#` comments in headers; writers never emit them. Parse failures report
//! the byte offset at which reading gave up, so a truncated or corrupt file
//! can be pinpointed exactly.

use thiserror::Error;

/// A PNM parse failure with the byte offset where it was detected.
#[derive(Debug, Error)]
#[error("{message} at byte offset {offset}")]
pub struct PnmError {
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, PnmError> {
    Err(PnmError {
        offset,
        message: message.into(),
    })
}

/// A decoded PNM image: `samples` holds one `u16` per channel per pixel
/// (row-major, channels interleaved), even for 8-bit files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub channels: usize,
    pub samples: Vec<u16>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Skips whitespace and `#`-to-end-of-line comments.
    fn skip_space(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_uint(&mut self, what: &str) -> Result<u64, PnmError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return err(start, format!("expected {what}"));
        }
        let text = std::str::from_utf8(&self.data[start..self.pos]).unwrap();
        text.parse::<u64>()
            .map_err(|_| PnmError {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

/// Parses a binary PGM (`P5`) or PPM (`P6`) from bytes.
pub fn parse(data: &[u8]) -> Result<PnmImage, PnmError> {
    let mut cur = Cursor { data, pos: 0 };
    if data.len() < 2 {
        return err(0, "missing magic number".to_string());
    }
    let channels = match &data[0..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return err(0, "expected magic number P5 or P6"),
    };
    cur.pos = 2;
    let width = cur.read_uint("width")? as usize;
    let height = cur.read_uint("height")? as usize;
    let maxval64 = cur.read_uint("maxval")?;
    if width == 0 || height == 0 {
        return err(2, "image dimensions must be positive");
    }
    if maxval64 == 0 || maxval64 > 65535 {
        return err(cur.pos, format!("maxval must be in 1..=65535, got {maxval64}"));
    }
    let maxval = maxval64 as u16;
    // Exactly one whitespace byte separates the header from the raster.
    if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
        return err(cur.pos, "expected single whitespace before raster");
    }
    cur.pos += 1;
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let n_samples = width * height * channels;
    let need = n_samples * bytes_per_sample;
    let raster = &data[cur.pos..];
    if raster.len() < need {
        return err(
            data.len(),
            format!(
                "truncated raster: need {need} bytes, found {}",
                raster.len()
            ),
        );
    }
    let samples = if bytes_per_sample == 2 {
        raster[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster[..need].iter().map(|&b| u16::from(b)).collect()
    };
    Ok(PnmImage {
        width,
        height,
        maxval,
        channels,
        samples,
    })
}

fn header(magic: &str, width: usize, height: usize, maxval: u16) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes()
}

/// Encodes a 16-bit grayscale PGM (big-endian samples).
pub fn encode_pgm16(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height, "sample count mismatch");
    let mut out = header("P5", width, height, 65535);
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

/// Encodes an 8-bit grayscale PGM.
pub fn encode_pgm8(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height, "sample count mismatch");
    let mut out = header("P5", width, height, 255);
    out.extend_from_slice(samples);
    out
}

/// Encodes an 8-bit RGB PPM (interleaved samples).
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), 3 * width * height, "sample count mismatch");
    let mut out = header("P6", width, height, 255);
    out.extend_from_slice(rgb);
    out
}
