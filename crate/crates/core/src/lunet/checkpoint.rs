//! `.lunw` checkpoints.
//!
//! ```text
//! magic "LUNW" | version u16
//! config: in_channels u32 | base_channels u32 | depth u32 | kernel_size u32 | seed u64
//! per tensor, declaration order: ndim u32 | dims u32 × ndim | values f32 × prod(dims)
//! ```
//!
//! Everything little-endian. Conv weights are 4-D `[out, in, k, k]`, biases
//! 1-D `[out]`.

use std::fs;
use std::path::Path;

use super::model::{LUnet, LUnetConfig, LUnetModel};
use super::ops::Conv;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LUNW";
pub const VERSION: u16 = 1;

pub fn encode(model: &LUnetModel) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::with_capacity(32 + 4 * model.param_count() + 64 * model.layers().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.in_channels, c.base_channels, c.depth, c.kernel_size] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    for conv in model.layers() {
        let k = conv.kernel as u32;
        write_tensor(
            &mut out,
            &[conv.out_channels as u32, conv.in_channels as u32, k, k],
            &conv.weight,
        );
        write_tensor(&mut out, &[conv.out_channels as u32], &conv.bias);
    }
    out
}

fn write_tensor(out: &mut Vec<u8>, dims: &[u32], values: &[f32]) {
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn decode(bytes: &[u8]) -> Result<LUnetModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::BadCheckpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let config = LUnetConfig {
        in_channels: r.u32()? as usize,
        base_channels: r.u32()? as usize,
        depth: r.u32()? as usize,
        kernel_size: r.u32()? as usize,
        seed: u64::from_le_bytes(r.take(8)?.try_into().unwrap()),
    };
    config
        .validate()
        .map_err(|e| Error::BadCheckpoint(e.to_string()))?;

    let mut layers = Vec::new();
    for (cin, cout, k) in config.layer_table() {
        let weight = r.tensor(&[cout, cin, k, k])?;
        let bias = r.tensor(&[cout])?;
        layers.push(Conv {
            in_channels: cin,
            out_channels: cout,
            kernel: k,
            weight,
            bias,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::BadCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    LUnet::from_layers(config, layers)
}

pub fn save(model: &LUnetModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<LUnetModel> {
    decode(&fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::BadCheckpoint(format!(
                "truncated at byte {}",
                self.pos
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self, expected: &[usize]) -> Result<Vec<f32>> {
        let ndim = self.u32()? as usize;
        if ndim != expected.len() {
            return Err(Error::BadCheckpoint(format!(
                "tensor rank {ndim}, expected {}",
                expected.len()
            )));
        }
        for &want in expected {
            let got = self.u32()? as usize;
            if got != want {
                return Err(Error::BadCheckpoint(format!(
                    "tensor dims mismatch: got {got}, expected {want}"
                )));
            }
        }
        let n: usize = expected.iter().product();
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_errors() {
        let model = LUnetModel::init(LUnetConfig::default()).unwrap();
        let bytes = encode(&model);
        assert_eq!(&bytes[..4], b"LUNW");
        let tensors = model.layers().len() * 2;
        let dims: usize = model.layers().len() * (1 + 4) + model.layers().len() * (1 + 1);
        assert_eq!(
            bytes.len(),
            4 + 2 + 16 + 8 + 4 * dims + 4 * model.param_count()
        );
        assert_eq!(tensors, 14);
        assert_eq!(decode(&bytes).unwrap(), model);

        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad_dims = bytes.clone();
        // first tensor's first dim
        bad_dims[30 + 4] = 9;
        assert!(decode(&bad_dims).is_err());
    }
}
