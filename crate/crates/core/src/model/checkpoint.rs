//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `CNNT`, `u16` format version, `u32` tensor
//! count, then per tensor a `u32` rank, `rank` `u32` extents and the values
//! as `f32`.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"CNNT";
pub const FORMAT_VERSION: u16 = 1;

pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> Vec<u8> {
    let tensors: Vec<&Tensor> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("checkpoint", format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic bytes"));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported format version {version}"),
        ));
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format("checkpoint", "tensor extent overflow"))?;
        let raw = r.take(len.checked_mul(4).ok_or_else(|| {
            Error::format("checkpoint", "tensor extent overflow")
        })?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format("checkpoint", "trailing bytes"));
    }
    Ok(tensors)
}

/// Copies decoded tensors into `targets`, requiring matching shapes.
pub fn assign_tensors<'a>(
    targets: impl IntoIterator<Item = &'a mut Tensor>,
    tensors: Vec<Tensor>,
) -> Result<()> {
    let targets: Vec<&mut Tensor> = targets.into_iter().collect();
    if targets.len() != tensors.len() {
        return Err(Error::format(
            "checkpoint",
            format!("expected {} tensors, found {}", targets.len(), tensors.len()),
        ));
    }
    for (i, (dst, src)) in targets.into_iter().zip(tensors).enumerate() {
        if dst.shape() != src.shape() {
            return Err(Error::format(
                "checkpoint",
                format!("tensor {i} has shape {:?}, expected {:?}", src.shape(), dst.shape()),
            ));
        }
        *dst = src;
    }
    Ok(())
}
