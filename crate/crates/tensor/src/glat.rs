//! `GLAT1` tensor files: magic `GLAT1`, `u32` rank, `u32` extents, then `f32`
//! payload in row-major order. All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"GLAT1";

pub fn encode<T: Real>(tensor: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 4 * tensor.rank() + 4 * tensor.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn write<T: Real, W: Write>(tensor: &Tensor<T>, mut writer: W) -> Result<()> {
    writer.write_all(&encode(tensor))?;
    Ok(())
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|e| TensorError::Format(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read<T: Real, R: Read>(mut reader: R) -> Result<Tensor<T>> {
    let mut magic = [0u8; 5];
    reader
        .read_exact(&mut magic)
        .map_err(|e| TensorError::Format(format!("missing magic: {e}")))?;
    if &magic != MAGIC {
        return Err(TensorError::Format(format!("bad magic {magic:?}")));
    }
    let rank = read_u32(&mut reader)? as usize;
    if rank > 8 {
        return Err(TensorError::Format(format!("implausible rank {rank}")));
    }
    let shape = (0..rank)
        .map(|_| read_u32(&mut reader).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let len: usize = shape.iter().product();
    let mut payload = vec![0u8; len * 4];
    reader
        .read_exact(&mut payload)
        .map_err(|e| TensorError::Format(format!("truncated payload: {e}")))?;
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(TensorError::Format("trailing bytes after payload".into()));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Tensor::new(shape, data)
}

pub fn save<T: Real>(tensor: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write(tensor, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    read(BufReader::new(File::open(path)?))
}
