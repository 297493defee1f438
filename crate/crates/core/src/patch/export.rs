//! Binary serialization of encoded scene features.
//!
//! # `GSR1` file format
//!
//! Little-endian throughout:
//!
//! ```text
//! magic  b"GSR1"
//! u32    version (currently 1)
//! u32    token count n
//! u32    patch rows per frame
//! u32    patch columns per frame
//! u32    feature width d
//! [f32]  n·d feature values, token-major
//! [f32]  n·3 token centers (x, y, z)
//! [u8]   n validity flags (0 or 1)
//! ```
//!
//! The token count is `frames · rows · cols`; the frame count is implied.

use std::io::{Read, Write};
use std::path::Path;

use super::{HybridPatchFeature, PatchError, SceneFeatures};

const MAGIC: &[u8; 4] = b"GSR1";
const VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32, PatchError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32(r: &mut impl Read) -> Result<f32, PatchError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}

impl SceneFeatures {
    /// Serializes in the `GSR1` format.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), PatchError> {
        self.check_consistent()?;
        w.write_all(MAGIC)?;
        for value in [
            VERSION,
            u32::try_from(self.tokens.len()).unwrap(),
            u32::try_from(self.patch_rows).unwrap(),
            u32::try_from(self.patch_cols).unwrap(),
            u32::try_from(self.dim).unwrap(),
        ] {
            w.write_all(&value.to_le_bytes())?;
        }
        for t in &self.tokens {
            for &v in &t.feature {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for t in &self.tokens {
            for &c in &t.center {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        for t in &self.tokens {
            w.write_all(&[u8::from(t.valid)])?;
        }
        Ok(())
    }

    /// Parses a `GSR1` stream.
    pub fn read_from(mut r: impl Read) -> Result<Self, PatchError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(PatchError::BadMagic {
                expected: "GSR1",
                got: magic,
            });
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(PatchError::BadHeader(format!(
                "unsupported version {version}"
            )));
        }
        let n = read_u32(&mut r)? as usize;
        let patch_rows = read_u32(&mut r)? as usize;
        let patch_cols = read_u32(&mut r)? as usize;
        let dim = read_u32(&mut r)? as usize;
        let per_frame = patch_rows
            .checked_mul(patch_cols)
            .filter(|&p| p > 0)
            .ok_or_else(|| {
                PatchError::BadHeader(format!(
                    "empty patch grid {patch_rows}x{patch_cols}"
                ))
            })?;
        if n == 0 || n % per_frame != 0 {
            return Err(PatchError::BadHeader(format!(
                "token count {n} is not a positive multiple of {per_frame}"
            )));
        }
        if dim == 0 || n.saturating_mul(dim) > (1 << 30) {
            return Err(PatchError::BadHeader(format!(
                "implausible feature width {dim} for {n} tokens"
            )));
        }
        let mut features = Vec::with_capacity(n);
        for _ in 0..n {
            let mut f = Vec::with_capacity(dim);
            for _ in 0..dim {
                f.push(read_f32(&mut r)?);
            }
            features.push(f);
        }
        let mut centers = Vec::with_capacity(n);
        for _ in 0..n {
            centers.push([read_f32(&mut r)?, read_f32(&mut r)?, read_f32(&mut r)?]);
        }
        let mut tokens = Vec::with_capacity(n);
        for (feature, center) in features.into_iter().zip(centers) {
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag)?;
            let valid = match flag[0] {
                0 => false,
                1 => true,
                other => {
                    return Err(PatchError::BadHeader(format!(
                        "validity flag must be 0 or 1, got {other}"
                    )))
                }
            };
            tokens.push(HybridPatchFeature {
                feature,
                center,
                valid,
            });
        }
        let out = SceneFeatures {
            patch_rows,
            patch_cols,
            dim,
            tokens,
        };
        out.check_consistent()?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), PatchError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PatchError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}
