//! The `DTW1` checkpoint format.
//!
//! All integers little-endian:
//!
//! ```text
//! "DTW1" | version u32 | seed u64 | step u64 | layer count u32
//! per layer:
//!   name length u16 | name (UTF-8) | kind tag u8 | rank u8 | extents u64 x rank
//!   weights f32 x weight_len | biases f32 x bias_len
//! ```
//!
//! | tag | kind          | extents                                   |
//! |-----|---------------|-------------------------------------------|
//! | 0   | conv2d        | d, d, S, T, stride, padding, has_bias     |
//! | 1   | relu          | (none)                                    |
//! | 2   | maxpool       | k                                         |
//! | 3   | global avg    | (none)                                    |
//! | 4   | dense         | outputs, inputs, has_bias                 |
//! | 5   | softmax xent  | (none)                                    |
//!
//! Conv weights are in kernel order `(i, j, s, t)`, dense weights are the
//! row-major `outputs x inputs` matrix.

use std::path::Path;

use deeptwist_core::nn::{Layer, LayerKind, LayerSpec, ModelState};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 4] = b"DTW1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

fn descriptor(kind: LayerKind) -> (u8, Vec<u64>) {
    let u = |v: usize| v as u64;
    match kind {
        LayerKind::Conv2d {
            d,
            in_ch,
            out_ch,
            stride,
            padding,
            bias,
        } => (0, vec![u(d), u(d), u(in_ch), u(out_ch), u(stride), u(padding), u64::from(bias)]),
        LayerKind::Relu => (1, vec![]),
        LayerKind::MaxPool { k } => (2, vec![u(k)]),
        LayerKind::GlobalAvgPool => (3, vec![]),
        LayerKind::Dense { inputs, outputs, bias } => (4, vec![u(outputs), u(inputs), u64::from(bias)]),
        LayerKind::SoftmaxXent => (5, vec![]),
    }
}

pub fn encode(model: &ModelState) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&model.seed.to_le_bytes());
    out.extend_from_slice(&model.step.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        let name = layer.name().as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        let (tag, extents) = descriptor(layer.kind());
        out.push(tag);
        out.push(extents.len() as u8);
        for e in extents {
            out.extend_from_slice(&e.to_le_bytes());
        }
        for &v in layer.weight().iter().chain(layer.bias()) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format(self.pos as u64, format!("truncated while reading {what}")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let at = self.pos as u64;
        usize::try_from(self.u64(what)?).map_err(|_| Error::format(at, format!("{what} overflows")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n.checked_mul(4).ok_or_else(|| Error::format(self.pos as u64, "weight count overflows"))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

fn flag(v: usize, at: u64) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::format(at, format!("bias flag must be 0 or 1, got {v}"))),
    }
}

fn read_kind(r: &mut Reader) -> Result<LayerKind> {
    let at = r.pos as u64;
    let tag = r.u8("kind tag")?;
    let rank = r.u8("shape rank")? as usize;
    let want = match tag {
        0 => 7,
        2 => 1,
        4 => 3,
        1 | 3 | 5 => 0,
        _ => return Err(Error::format(at, format!("unknown layer kind tag {tag}"))),
    };
    if rank != want {
        return Err(Error::format(at + 1, format!("kind {tag} needs {want} extents, got {rank}")));
    }
    let ext_at = r.pos as u64;
    let mut e = Vec::with_capacity(rank);
    for _ in 0..rank {
        e.push(r.usize("extent")?);
    }
    Ok(match tag {
        0 => {
            if e[0] != e[1] {
                return Err(Error::format(ext_at, "conv kernels must be square"));
            }
            LayerKind::conv(e[0], e[2], e[3], e[4], e[5], flag(e[6], ext_at)?)
        }
        1 => LayerKind::Relu,
        2 => LayerKind::MaxPool { k: e[0] },
        3 => LayerKind::GlobalAvgPool,
        4 => LayerKind::Dense {
            outputs: e[0],
            inputs: e[1],
            bias: flag(e[2], ext_at)?,
        },
        _ => LayerKind::SoftmaxXent,
    })
}

pub fn decode(bytes: &[u8]) -> Result<ModelState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected DTW1"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let seed = r.u64("seed")?;
    let step = r.u64("step")?;
    let count = r.u32("layer count")?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let at = r.pos as u64;
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "layer name")?)
            .map_err(|_| Error::format(at + 2, "layer name is not UTF-8"))?
            .to_owned();
        let kind = read_kind(&mut r)?;
        let weight = r.f32s(kind.weight_len(), "weights")?;
        let bias = r.f32s(kind.bias_len(), "biases")?;
        let layer = Layer::new(LayerSpec::new(name, kind), weight, bias)
            .map_err(|e| Error::format(at, e.to_string()))?;
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after last layer"));
    }
    ModelState::new(layers, seed, step).map_err(|e| Error::format(HEADER_LEN as u64, e.to_string()))
}

pub fn save_checkpoint(model: &ModelState, path: &Path) -> Result<()> {
    write_atomic(path, &encode(model))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    decode(&std::fs::read(path)?)
}
