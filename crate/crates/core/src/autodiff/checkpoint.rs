//! Binary parameter files.
//!
//! Layout (all integers little-endian `u32`): the 8-byte magic `MARLCKPT`,
//! a format version, the tensor count, then per tensor its rows, columns and
//! `rows * cols` little-endian `f32` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::nn::ParamStore;
use super::tensor::Tensor;
use super::TensorError;

const MAGIC: &[u8; 8] = b"MARLCKPT";
const FORMAT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, tensors: &[Tensor]) -> Result<(), TensorError> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.rows() as u32).to_le_bytes())?;
        w.write_all(&(t.cols() as u32).to_le_bytes())?;
        for &x in t.data() {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TensorError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<Tensor>, TensorError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("not a checkpoint file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| TensorError::Checkpoint("tensor too large".into()))?;
        let mut data = Vec::with_capacity(n.min(1 << 24));
        let mut b = [0u8; 4];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f32::from_le_bytes(b) as f64);
        }
        out.push(Tensor::new(rows, cols, data));
    }
    Ok(out)
}

pub fn save_checkpoint(path: impl AsRef<Path>, store: &ParamStore) -> Result<(), TensorError> {
    write_checkpoint(BufWriter::new(File::create(path)?), store.params())
}

/// Load values into `store`; shapes must match exactly.
pub fn load_checkpoint(path: impl AsRef<Path>, store: &mut ParamStore) -> Result<(), TensorError> {
    let tensors = read_checkpoint(BufReader::new(File::open(path)?))?;
    if tensors.len() != store.len() {
        return Err(TensorError::Checkpoint(format!(
            "expected {} tensors, file has {}",
            store.len(),
            tensors.len()
        )));
    }
    for (i, (t, p)) in tensors.iter().zip(store.params()).enumerate() {
        if t.shape() != p.shape() {
            return Err(TensorError::Checkpoint(format!(
                "tensor {i}: expected {:?}, file has {:?}",
                p.shape(),
                t.shape()
            )));
        }
    }
    for (p, t) in store.params_mut().iter_mut().zip(tensors) {
        *p = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_f32() {
        let tensors = vec![Tensor::new(2, 2, vec![0.5, -1.25, 3.0, 1e-3]), Tensor::row(&[7.0])];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &tensors).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 4 + (8 + 16) + (8 + 4));
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back[0].shape(), (2, 2));
        assert_eq!(back[0].data()[3], 1e-3f32 as f64);
        assert_eq!(back[1].data(), &[7.0]);
    }

    #[test]
    fn bad_magic_is_rejected() {
        assert!(matches!(
            read_checkpoint(&b"NOTACKPT\x01\0\0\0\0\0\0\0"[..]),
            Err(TensorError::Checkpoint(_))
        ));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let mut a = ParamStore::new();
        a.add(Tensor::zeros(2, 3));
        save_checkpoint(&path, &a).unwrap();
        let mut b = ParamStore::new();
        b.add(Tensor::zeros(3, 2));
        assert!(load_checkpoint(&path, &mut b).is_err());
        let mut c = ParamStore::new();
        c.add(Tensor::full(2, 3, 9.0));
        load_checkpoint(&path, &mut c).unwrap();
        assert_eq!(c.flat(), vec![0.0; 6]);
    }
}
