//! Named-tensor store backing both backbones and all six SE blocks.
//!
//! File layout (little-endian):
//!
//! ```text
//! magic      8 bytes  "MFSTW001"
//! count      u32
//! per tensor:
//!   name_len u16
//!   name     name_len bytes, UTF-8
//!   dtype    u8 (0 = float32)
//!   rank     u8
//!   dims     rank x u32
//!   payload  product(dims) x f32, row-major
//! crc32      u32 over every preceding byte
//! ```
//!
//! Tensors are written in lexicographic name order, so saving the same
//! store twice gives identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{BackboneSpec, Layer, Model};
use crate::error::{Error, Result};
use crate::recal::REDUCTION;

pub const MAGIC: &[u8; 8] = b"MFSTW001";
const MAGIC_PREFIX: &[u8; 5] = b"MFSTW";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || n != data.len() {
            return Err(Error::Shape(format!(
                "tensor dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }
}

/// Map from tensor name to shaped `f32` data.
///
/// Names follow `"{S|A}.conv{1..5}.{weight|bias}"` and
/// `"{S|A}.se.{c3|c4|c5}.{w1|w2}"`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, NamedTensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let tensor = NamedTensor::new(dims, data)?;
        self.tensors.insert(name.into(), tensor);
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<NamedTensor> {
        self.tensors.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.get(name)
    }

    /// Looks up a tensor and checks its shape.
    pub fn expect(&self, name: &str, dims: &[usize]) -> Result<&NamedTensor> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if t.dims != dims {
            return Err(Error::TensorShape {
                name: name.to_string(),
                expected: dims.to_vec(),
                found: t.dims.clone(),
            });
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NamedTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn format_version(&self) -> u32 {
        FORMAT_VERSION
    }

    /// Model identifiers present in the store, in canonical order.
    pub fn models(&self) -> Vec<Model> {
        Model::ALL
            .into_iter()
            .filter(|m| {
                let prefix = format!("{}.", m.name());
                self.tensors.keys().any(|k| k.starts_with(&prefix))
            })
            .collect()
    }

    /// Checks that exactly the expected tensors are present with their
    /// expected shapes.
    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyStore);
        }
        let expected = expected_tensors();
        for (name, dims) in &expected {
            self.expect(name, dims)?;
        }
        if let Some(unknown) = self
            .tensors
            .keys()
            .find(|k| !expected.iter().any(|(n, _)| n == *k))
        {
            return Err(Error::UnknownTensor(unknown.clone()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let name_bytes = name.as_bytes();
            let name_len = u16::try_from(name_bytes.len())
                .map_err(|_| Error::InvalidArgument(format!("tensor name too long: {name}")))?;
            let rank = u8::try_from(t.dims.len())
                .map_err(|_| Error::InvalidArgument(format!("tensor {name} has too many dims")))?;
            buf.extend_from_slice(&name_len.to_le_bytes());
            buf.extend_from_slice(name_bytes);
            buf.push(DTYPE_F32);
            buf.push(rank);
            for &d in &t.dims {
                let d = u32::try_from(d)
                    .map_err(|_| Error::InvalidArgument(format!("tensor {name} dim too large")))?;
                buf.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    /// Decodes a file image without checking it against the expected
    /// tensor list.
    pub fn from_bytes_unvalidated(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC_PREFIX.len()] != MAGIC_PREFIX {
            return Err(Error::BadMagic);
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::UnsupportedVersion(
                String::from_utf8_lossy(&bytes[MAGIC_PREFIX.len()..MAGIC.len()]).into_owned(),
            ));
        }
        if bytes.len() < MAGIC.len() + 4 {
            return Err(Error::Malformed("file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Malformed("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(Error::UnsupportedDtype { name, code: dtype });
            }
            let rank = r.u8()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Malformed(format!("tensor {name} is too large")))?;
            let payload = r.take(n.checked_mul(4).ok_or_else(|| Error::Malformed("payload too large".into()))?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = NamedTensor::new(dims, data)
                .map_err(|_| Error::Malformed(format!("tensor {name} has rank 0")))?;
            if tensors.insert(name.clone(), tensor).is_some() {
                return Err(Error::Malformed(format!("duplicate tensor {name}")));
            }
        }
        if r.pos != body.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after last tensor",
                body.len() - r.pos
            )));
        }
        Ok(Self { tensors })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let store = Self::from_bytes_unvalidated(bytes)?;
        store.validate()?;
        Ok(store)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Malformed("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn conv_weight_name(model: Model, index: usize) -> String {
    format!("{}.conv{}.weight", model.name(), index)
}

pub fn conv_bias_name(model: Model, index: usize) -> String {
    format!("{}.conv{}.bias", model.name(), index)
}

pub fn se_name(model: Model, layer: Layer, which: &str) -> String {
    format!("{}.se.{}.{}", model.name(), layer.name(), which)
}

/// Every tensor a complete store must hold, with its shape, in canonical
/// order: per model, conv weights and biases, then SE matrices.
pub fn expected_tensors() -> Vec<(String, Vec<usize>)> {
    let spec = BackboneSpec::canonical();
    let mut out = Vec::new();
    for model in Model::ALL {
        for (i, stage) in spec.stages().iter().enumerate() {
            out.push((
                conv_weight_name(model, i + 1),
                vec![stage.kernel, stage.kernel, stage.in_channels, stage.out_channels],
            ));
            out.push((conv_bias_name(model, i + 1), vec![stage.out_channels]));
        }
        for layer in Layer::ALL {
            let c = spec.layer_channels(layer);
            out.push((se_name(model, layer, "w1"), vec![c / REDUCTION, c]));
            out.push((se_name(model, layer, "w2"), vec![c, c / REDUCTION]));
        }
    }
    out
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let bytes = fs::read(path)?;
    WeightStore::from_bytes(&bytes)
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    store.validate()?;
    fs::write(path, store.to_bytes()?)?;
    Ok(())
}

/// Complete store with weights drawn uniformly from
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` and zero biases.
pub fn seeded_random_weights(seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for (name, dims) in expected_tensors() {
        let n: usize = dims.iter().product();
        let data = if name.ends_with(".bias") {
            vec![0.0; n]
        } else {
            let fan_in: usize = if name.contains(".se.") {
                dims[1]
            } else {
                dims[..3].iter().product()
            };
            let bound = 1.0 / (fan_in as f32).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        };
        store.insert(name, dims, data).expect("dims match data");
    }
    store
}
