//! Named-tensor container holding every learned parameter.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CASW" | version u32 | config_len u32 | config JSON
//!        | count u32 | count * (name_len u16 | name | ndim u8 | dims u32* | f32 payload)
//!        | SHA-256 of everything above (32 bytes)
//! ```
//!
//! Tensors are written in name order, payloads row-major.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::ModelConfig;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CASW";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Manifest(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Uniform(f64),
    Const(f64),
}

/// A parameter the network expects, with its initializer for random
/// manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl TensorSpec {
    fn new(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        Self {
            name: name.into(),
            shape,
            init,
        }
    }
}

fn fan_in_bound(fan_in: usize) -> Init {
    Init::Uniform(1.0 / (fan_in as f64).sqrt())
}

fn linear_specs(out: &mut Vec<TensorSpec>, prefix: &str, n_out: usize, n_in: usize) {
    out.push(TensorSpec::new(
        format!("{prefix}.weight"),
        vec![n_out, n_in],
        fan_in_bound(n_in),
    ));
    out.push(TensorSpec::new(
        format!("{prefix}.bias"),
        vec![n_out],
        fan_in_bound(n_in),
    ));
}

fn norm_specs(out: &mut Vec<TensorSpec>, prefix: &str, n: usize) {
    out.push(TensorSpec::new(format!("{prefix}.gamma"), vec![n], Init::Const(1.0)));
    out.push(TensorSpec::new(format!("{prefix}.beta"), vec![n], Init::Const(0.0)));
}

fn gru_specs(out: &mut Vec<TensorSpec>, prefix: &str, input: usize, hidden: usize) {
    let b = fan_in_bound(hidden);
    out.push(TensorSpec::new(format!("{prefix}.w_ih"), vec![3 * hidden, input], b));
    out.push(TensorSpec::new(format!("{prefix}.w_hh"), vec![3 * hidden, hidden], b));
    out.push(TensorSpec::new(format!("{prefix}.b_ih"), vec![3 * hidden], b));
    out.push(TensorSpec::new(format!("{prefix}.b_hh"), vec![3 * hidden], b));
}

pub(crate) fn dpr_specs(out: &mut Vec<TensorSpec>, prefix: &str, cfg: &ModelConfig) {
    let (d, h) = (cfg.d, cfg.dpr_hidden);
    gru_specs(out, &format!("{prefix}.intra.fwd"), d, h);
    gru_specs(out, &format!("{prefix}.intra.bwd"), d, h);
    linear_specs(out, &format!("{prefix}.intra.proj"), d, 2 * h);
    norm_specs(out, &format!("{prefix}.intra.norm"), d);
    gru_specs(out, &format!("{prefix}.inter.rnn"), d, h);
    linear_specs(out, &format!("{prefix}.inter.proj"), d, h);
    norm_specs(out, &format!("{prefix}.inter.norm"), d);
}

pub(crate) fn cwq_specs(out: &mut Vec<TensorSpec>, prefix: &str, cfg: &ModelConfig) {
    let e = cfg.embed_dim();
    norm_specs(out, &format!("{prefix}.kv_norm"), e);
    for proj in ["query", "key", "value", "out"] {
        linear_specs(out, &format!("{prefix}.{proj}"), e, e);
    }
    out.push(TensorSpec::new(
        format!("{prefix}.pad"),
        vec![e],
        Init::Uniform(0.1),
    ));
}

/// Every tensor the network reads, in construction order.
pub fn required_tensors(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let mut out = Vec::new();
    let ch = cfg.stage_channels();
    let (kt, kf) = (cfg.kernel_time, cfg.kernel_freq);
    for i in 0..ModelConfig::ENCODER_STAGES {
        let p = format!("enc.{i}");
        let fan = ch[i] * kt * kf;
        out.push(TensorSpec::new(
            format!("{p}.conv.weight"),
            vec![ch[i + 1], ch[i], kt, kf],
            fan_in_bound(fan),
        ));
        out.push(TensorSpec::new(format!("{p}.conv.bias"), vec![ch[i + 1]], fan_in_bound(fan)));
        norm_specs(&mut out, &format!("{p}.norm"), ch[i + 1]);
        out.push(TensorSpec::new(format!("{p}.prelu"), vec![ch[i + 1]], Init::Const(0.25)));
    }
    dpr_specs(&mut out, "node_dpr", cfg);
    cwq_specs(&mut out, "cwq1", cfg);
    linear_specs(&mut out, "align.proj", cfg.d, 2 * cfg.d);
    dpr_specs(&mut out, "align_dpr", cfg);
    cwq_specs(&mut out, "cwq2", cfg);
    dpr_specs(&mut out, "fuse_dpr", cfg);
    // Decoder stage i maps stage i+1 back to stage i; input is the
    // concatenation with the matching encoder skip.
    for i in (0..ModelConfig::ENCODER_STAGES).rev() {
        let p = format!("dec.{i}");
        let c_in = 2 * ch[i + 1];
        let c_out = if i == 0 { 1 } else { ch[i] };
        let fan = c_in * kt * kf;
        out.push(TensorSpec::new(
            format!("{p}.conv.weight"),
            vec![c_in, c_out, kt, kf],
            fan_in_bound(fan),
        ));
        out.push(TensorSpec::new(format!("{p}.conv.bias"), vec![c_out], fan_in_bound(fan)));
        if i > 0 {
            norm_specs(&mut out, &format!("{p}.norm"), c_out);
            out.push(TensorSpec::new(format!("{p}.prelu"), vec![c_out], Init::Const(0.25)));
        }
    }
    out
}

/// Immutable-after-load set of named parameters plus the config they were
/// built for.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightManifest {
    pub config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl WeightManifest {
    pub fn empty(config: ModelConfig) -> Self {
        Self {
            config,
            tensors: BTreeMap::new(),
        }
    }

    /// Seeded initialization of every required tensor.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::empty(config);
        for spec in required_tensors(&m.config) {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::Const(v) => vec![v as f32; n],
                Init::Uniform(b) => (0..n).map(|_| rng.random_range(-b..b) as f32).collect(),
            };
            m.tensors.insert(spec.name, Tensor { shape: spec.shape, data });
        }
        Ok(m)
    }

    /// Random weights with every bias and normalization shift zeroed.
    pub fn random_without_biases(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::random(config, seed)?;
        for (name, t) in m.tensors.iter_mut() {
            if name.ends_with("bias")
                || name.ends_with(".beta")
                || name.ends_with(".b_ih")
                || name.ends_with(".b_hh")
            {
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(m)
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }

    /// Looks up a tensor and checks its shape.
    pub fn get(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if t.shape != shape {
            return Err(Error::Shape {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape.clone(),
            });
        }
        Ok(t)
    }

    /// Checks that every tensor the config requires is present with the
    /// right shape.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        for spec in required_tensors(&self.config) {
            self.get(&spec.name, &spec.shape)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = serde_json::to_vec(&self.config)
            .map_err(|e| Error::Manifest(format!("config encoding: {e}")))?;
        let mut buf = Vec::with_capacity(16 + config.len() + 4 * self.parameter_count());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&MANIFEST_VERSION.to_le_bytes());
        buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
        buf.extend_from_slice(&config);
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(t.shape.len() as u8);
            for &d in &t.shape {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(digest.as_slice());
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 + DIGEST_LEN {
            return Err(Error::Manifest("truncated file".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Manifest("content digest mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Manifest("bad magic".into()));
        }
        let version = r.u32()?;
        if version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!("unsupported version {version}")));
        }
        let config_len = r.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(config_len)?)
            .map_err(|e| Error::Manifest(format!("config: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Manifest("tensor name is not UTF-8".into()))?
                .to_string();
            let ndim = r.take(1)?[0] as usize;
            let shape = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r
                .take(4 * n)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.insert(name, Tensor { shape, data });
        }
        if r.pos != body.len() {
            return Err(Error::Manifest("trailing bytes".into()));
        }
        Ok(Self { config, tensors })
    }

    /// Hex SHA-256 of the serialized body.
    pub fn digest_hex(&self) -> Result<String> {
        let bytes = self.to_bytes()?;
        Ok(bytes[bytes.len() - DIGEST_LEN..]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
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
            .ok_or_else(|| Error::Manifest("truncated file".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
