//! Named weight tensors for the patch encoder, with a seeded initializer
//! and a small binary file format.
//!
//! Tensors are stored as `f32` row-major, matching the on-disk format
//! exactly, and widened to `f64` during arithmetic. Matrices follow the
//! row-vector convention: a shape `[n_in, n_out]` matrix maps `n_in`-
//! dimensional inputs to `n_out`-dimensional outputs via `y = x · W`.
//!
//! # `GSW1` file format
//!
//! Little-endian throughout:
//!
//! ```text
//! magic  b"GSW1"
//! u32    tensor count
//! then per tensor, in ascending name order:
//! u32    name length in bytes
//! [u8]   UTF-8 name
//! u32    rank
//! [u32]  dimensions (rank entries)
//! [f32]  row-major data (product of dimensions entries)
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gcot::fnv1a;

use super::{EncoderConfig, PatchError};

const MAGIC: &[u8; 4] = b"GSW1";

/// One named tensor: shape plus row-major `f32` data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, PatchError> {
        let expect: usize = dims.iter().product();
        if dims.is_empty() || expect == 0 {
            return Err(PatchError::BadConfig(format!(
                "tensor shape {dims:?} has no elements"
            )));
        }
        if data.len() != expect {
            return Err(PatchError::BadConfig(format!(
                "shape {dims:?} needs {expect} values, got {}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(PatchError::BadConfig(format!(
                "non-finite tensor value {v}"
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Row-vector times matrix: `y[o] = Σ_i x[i] · w[i][o]` for a rank-2
    /// tensor of shape `[n_in, n_out]`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, PatchError> {
        let [n_in, n_out] = self.dims[..] else {
            return Err(PatchError::BadConfig(format!(
                "matvec needs a rank-2 tensor, got shape {:?}",
                self.dims
            )));
        };
        if x.len() != n_in {
            return Err(PatchError::DimensionMismatch {
                expected: n_in,
                got: x.len(),
            });
        }
        let mut y = vec![0.0f64; n_out];
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.data[i * n_out..(i + 1) * n_out];
            for (o, &w) in row.iter().enumerate() {
                y[o] += xi * f64::from(w);
            }
        }
        Ok(y)
    }
}

/// Named tensors keyed by dotted path, e.g. `stage0.attn.wq`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        self.tensors.insert(name.to_string(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, PatchError> {
        self.tensors
            .get(name)
            .ok_or_else(|| PatchError::MissingTensor(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// The tensor names and shapes required by `cfg`.
    ///
    /// Widths: `w0`/`w1` are the two stage widths, the serialized geometric
    /// feature is their concatenation (`w0 + w1` wide), `d_sem` is the
    /// semantic embedding width, `c_out` the cross-attention value width,
    /// and `d_out` the fused output width.
    pub fn expected_shapes(cfg: &EncoderConfig) -> BTreeMap<String, Vec<usize>> {
        let [w0, w1] = cfg.widths;
        let geo = w0 + w1;
        let mut m = BTreeMap::new();
        m.insert("embed.w".into(), vec![6, w0]);
        m.insert("stage0.attn.wq".into(), vec![w0, cfg.head_dim]);
        m.insert("stage0.attn.wk".into(), vec![w0, cfg.head_dim]);
        m.insert("stage0.attn.wv".into(), vec![w0, w0]);
        m.insert("pool0.u".into(), vec![w0, w1]);
        m.insert("stage1.attn.wq".into(), vec![w1, cfg.head_dim]);
        m.insert("stage1.attn.wk".into(), vec![w1, cfg.head_dim]);
        m.insert("stage1.attn.wv".into(), vec![w1, w1]);
        m.insert("semantic.proj".into(), vec![20, cfg.d_sem]);
        m.insert("dual.wq".into(), vec![cfg.d_sem, cfg.cross_dim]);
        m.insert("dual.wk".into(), vec![geo, cfg.cross_dim]);
        m.insert("dual.wv".into(), vec![geo, cfg.c_out]);
        m.insert("fuse.p_sem".into(), vec![cfg.d_sem, cfg.d_out]);
        m.insert("fuse.p_geo".into(), vec![cfg.c_out + geo, cfg.d_out]);
        m
    }

    /// Seeds every tensor required by `cfg` with values drawn uniformly
    /// from `±sqrt(1 / fan_in)` (`fan_in` = first dimension).
    ///
    /// Each tensor uses its own RNG stream, seeded from
    /// `cfg.seed ^ fnv1a(name)`, so adding or removing a tensor never
    /// shifts the values of the others.
    pub fn seeded(cfg: &EncoderConfig) -> Result<Self, PatchError> {
        cfg.validate()?;
        let mut store = Self::new();
        for (name, dims) in Self::expected_shapes(cfg) {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ fnv1a(name.as_bytes()));
            let bound = (1.0 / dims[0] as f64).sqrt();
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|_| rng.random_range(-bound..=bound) as f32)
                .collect();
            store.insert(&name, Tensor::new(dims, data)?);
        }
        Ok(store)
    }

    /// Checks that the store holds exactly the tensors `cfg` requires,
    /// with the required shapes.
    pub fn validate_for(&self, cfg: &EncoderConfig) -> Result<(), PatchError> {
        let expected = Self::expected_shapes(cfg);
        for (name, dims) in &expected {
            let t = self.get(name)?;
            if t.dims() != dims.as_slice() {
                return Err(PatchError::ShapeMismatch {
                    name: name.clone(),
                    expected: dims.clone(),
                    got: t.dims().to_vec(),
                });
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !expected.contains_key(*k)) {
            return Err(PatchError::BadConfig(format!(
                "unexpected tensor {extra:?} in store"
            )));
        }
        Ok(())
    }

    /// Serializes the store in the `GSW1` format.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), PatchError> {
        w.write_all(MAGIC)?;
        w.write_all(&u32::try_from(self.tensors.len()).unwrap().to_le_bytes())?;
        for (name, tensor) in &self.tensors {
            w.write_all(&u32::try_from(name.len()).unwrap().to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&u32::try_from(tensor.dims.len()).unwrap().to_le_bytes())?;
            for &d in &tensor.dims {
                w.write_all(&u32::try_from(d).unwrap().to_le_bytes())?;
            }
            for &v in &tensor.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Parses a `GSW1` stream.
    pub fn read_from(mut r: impl Read) -> Result<Self, PatchError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(PatchError::BadMagic {
                expected: "GSW1",
                got: magic,
            });
        }
        let count = read_u32(&mut r)? as usize;
        let mut store = Self::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|e| PatchError::BadHeader(format!("tensor name not UTF-8: {e}")))?;
            let rank = read_u32(&mut r)? as usize;
            if rank == 0 || rank > 8 {
                return Err(PatchError::BadHeader(format!(
                    "tensor {name:?} has implausible rank {rank}"
                )));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(read_u32(&mut r)? as usize);
            }
            let n: usize = dims.iter().product();
            if n == 0 || n > (1 << 28) {
                return Err(PatchError::BadHeader(format!(
                    "tensor {name:?} has implausible shape {dims:?}"
                )));
            }
            let mut data = Vec::with_capacity(n);
            let mut buf = [0u8; 4];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                data.push(f32::from_le_bytes(buf));
            }
            if store.tensors.contains_key(&name) {
                return Err(PatchError::BadHeader(format!(
                    "duplicate tensor {name:?}"
                )));
            }
            store.insert(&name, Tensor::new(dims, data)?);
        }
        Ok(store)
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

fn read_u32(r: &mut impl Read) -> Result<u32, PatchError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
