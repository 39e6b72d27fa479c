//! Binary parameter checkpoints.
//!
//! ```text
//! magic     8 bytes  "RSQPARAM"
//! version   u32 LE
//! config    4 x u32 LE  (input_h, input_w, block1_filters, block2_filters)
//! layers    u32 LE count, then per layer:
//!             u32 LE name length, UTF-8 name, u32 LE rank, rank x u32 LE dims
//! values    f64 LE, every layer in manifest order
//! ```

use std::path::Path;

use super::model::{ConvNetConfig, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RSQPARAM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_params(params: &ModelParams) -> Vec<u8> {
    let c = params.config();
    let mut out = Vec::with_capacity(64 + 8 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [CHECKPOINT_VERSION, c.input_h as u32, c.input_w as u32, c.block1_filters as u32, c.block2_filters as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let manifest = c.layer_manifest();
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    for (name, shape) in &manifest {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for t in params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.context, self.bytes.len() as u64, format!("truncated while reading {what}"))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decodes a checkpoint, checking it is internally consistent.
pub fn decode_params(bytes: &[u8], context: &str) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0, context };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format(context, 0, "not a parameter checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            context,
            8,
            format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let config = ConvNetConfig {
        input_h: r.u32("config")? as usize,
        input_w: r.u32("config")? as usize,
        block1_filters: r.u32("config")? as usize,
        block2_filters: r.u32("config")? as usize,
    };
    config
        .validate()
        .map_err(|e| Error::format(context, 12, format!("invalid stored configuration: {e}")))?;
    let expected = config.layer_manifest();
    let count_at = r.pos as u64;
    let count = r.u32("layer count")? as usize;
    if count != expected.len() {
        return Err(Error::format(
            context,
            count_at,
            format!("{count} layers stored, configuration has {}", expected.len()),
        ));
    }
    for (name, shape) in &expected {
        let at = r.pos as u64;
        let len = r.u32("layer name")? as usize;
        let stored = r.take(len, "layer name")?;
        if stored != name.as_bytes() {
            return Err(Error::format(
                context,
                at,
                format!("expected layer `{name}`, found `{}`", String::from_utf8_lossy(stored)),
            ));
        }
        let rank = r.u32("layer rank")? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u32("layer dims")? as usize);
        }
        if &dims != shape {
            return Err(Error::format(
                context,
                at,
                format!("layer `{name}` stored with shape {dims:?}, configuration implies {shape:?}"),
            ));
        }
    }
    let total = config.param_count();
    let payload = r.take(total * 8, "parameter values")?;
    if r.pos != bytes.len() {
        return Err(Error::format(
            context,
            r.pos as u64,
            format!("{} trailing bytes after parameter values", bytes.len() - r.pos),
        ));
    }
    let flat: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ModelParams::unflatten(config, &flat)
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode_params(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes, &path.display().to_string())
}

/// Loads a checkpoint that must match `expected`; a mismatch names the first
/// layer whose shape differs.
pub fn load_params_for(path: &Path, expected: &ConvNetConfig) -> Result<ModelParams> {
    let params = load_params(path)?;
    check_compatible(&params, expected)?;
    Ok(params)
}

pub fn check_compatible(params: &ModelParams, expected: &ConvNetConfig) -> Result<()> {
    let found = params.config();
    if found == expected {
        return Ok(());
    }
    if (found.input_h, found.input_w) != (expected.input_h, expected.input_w) {
        return Err(Error::ShapeMismatch {
            layer: "input".into(),
            expected: vec![expected.input_h, expected.input_w],
            found: vec![found.input_h, found.input_w],
        });
    }
    let want = expected.layer_manifest();
    let have = found.layer_manifest();
    for (i, (name, shape)) in want.iter().enumerate() {
        match have.get(i) {
            Some((n, s)) if n == name && s == shape => continue,
            Some((_, s)) => {
                return Err(Error::ShapeMismatch {
                    layer: (*name).into(),
                    expected: shape.clone(),
                    found: s.clone(),
                })
            }
            None => {
                return Err(Error::ShapeMismatch {
                    layer: (*name).into(),
                    expected: shape.clone(),
                    found: vec![],
                })
            }
        }
    }
    Err(Error::ShapeMismatch {
        layer: have[want.len()].0.into(),
        expected: vec![],
        found: have[want.len()].1.clone(),
    })
}
