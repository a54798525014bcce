//! Versioned binary checkpoint format.
//!
//! Layout: magic, format version, architecture hash, then per-stack
//! layer records with little-endian f64 parameter blocks. Loading
//! validates the architecture hash against the model being restored.

use std::io::{self, Read, Write};

use super::layers::{BatchNormParams, LayerParams};
use super::tensor::Tensor2;

pub const MAGIC: &[u8; 8] = b"RMAECKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CheckpointError {
    Io(io::Error),
    BadMagic,
    UnsupportedVersion(u32),
    ArchitectureMismatch { expected: u64, got: u64 },
}

impl std::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "checkpoint i/o error: {e}"),
            CheckpointError::BadMagic => write!(f, "not a model checkpoint (bad magic)"),
            CheckpointError::UnsupportedVersion(v) => {
                write!(f, "unsupported checkpoint format version {v}")
            }
            CheckpointError::ArchitectureMismatch { expected, got } => write!(
                f,
                "architecture hash mismatch: model {expected:016x}, checkpoint {got:016x}"
            ),
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<io::Error> for CheckpointError {
    fn from(e: io::Error) -> Self {
        CheckpointError::Io(e)
    }
}

/// FNV-1a over a canonical architecture description string.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn write_header<W: Write>(w: &mut W, arch_hash: u64) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&arch_hash.to_le_bytes())?;
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R, expected_arch: u64) -> Result<(), CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let got = u64::from_le_bytes(buf8);
    if got != expected_arch {
        return Err(CheckpointError::ArchitectureMismatch {
            expected: expected_arch,
            got,
        });
    }
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn write_stack<W: Write>(w: &mut W, stack: &[LayerParams]) -> io::Result<()> {
    write_u64(w, stack.len() as u64)?;
    for layer in stack {
        write_u64(w, layer.out_channels() as u64)?;
        write_u64(w, layer.in_channels() as u64)?;
        write_u64(w, layer.bn.is_some() as u64)?;
        write_u64(w, layer.relu as u64)?;
        write_f64s(w, layer.weight.data())?;
        write_f64s(w, layer.bias.data())?;
        if let Some(bn) = &layer.bn {
            write_f64s(w, bn.gamma.data())?;
            write_f64s(w, bn.beta.data())?;
            write_f64s(w, &bn.running_mean)?;
            write_f64s(w, &bn.running_var)?;
        }
    }
    Ok(())
}

pub fn read_stack<R: Read>(r: &mut R) -> io::Result<Vec<LayerParams>> {
    let n = read_u64(r)? as usize;
    let mut stack = Vec::with_capacity(n);
    for _ in 0..n {
        let out_ch = read_u64(r)? as usize;
        let in_ch = read_u64(r)? as usize;
        let has_bn = read_u64(r)? != 0;
        let relu = read_u64(r)? != 0;
        let weight = Tensor2::from_vec(out_ch, in_ch, read_f64s(r, out_ch * in_ch)?);
        let bias = Tensor2::from_vec(out_ch, 1, read_f64s(r, out_ch)?);
        let bn = if has_bn {
            Some(BatchNormParams {
                gamma: Tensor2::from_vec(out_ch, 1, read_f64s(r, out_ch)?),
                beta: Tensor2::from_vec(out_ch, 1, read_f64s(r, out_ch)?),
                running_mean: read_f64s(r, out_ch)?,
                running_var: read_f64s(r, out_ch)?,
            })
        } else {
            None
        };
        stack.push(LayerParams {
            weight,
            bias,
            bn,
            relu,
        });
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngStream;

    #[test]
    fn stack_roundtrip_is_exact() {
        let mut rng = RngStream::new(3, 0);
        let stack = vec![
            LayerParams::init(4, 3, true, true, &mut rng),
            LayerParams::init(2, 4, false, false, &mut rng),
        ];
        let mut buf = Vec::new();
        write_header(&mut buf, 0xdead_beef).unwrap();
        write_stack(&mut buf, &stack).unwrap();
        let mut cur = std::io::Cursor::new(buf);
        read_header(&mut cur, 0xdead_beef).unwrap();
        let back = read_stack(&mut cur).unwrap();
        assert_eq!(stack, back);
    }

    #[test]
    fn wrong_arch_hash_is_rejected() {
        let mut buf = Vec::new();
        write_header(&mut buf, 1).unwrap();
        let mut cur = std::io::Cursor::new(buf);
        match read_header(&mut cur, 2) {
            Err(CheckpointError::ArchitectureMismatch { expected: 2, got: 1 }) => {}
            other => panic!("expected mismatch, got {other:?}"),
        }
    }
}
