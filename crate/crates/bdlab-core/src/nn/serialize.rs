//! Self-describing binary checkpoint container.
//!
//! Layout: magic bytes, format version, a JSON header (architecture id,
//! input shape, provenance — whatever the caller wants recorded), then the
//! named tensors as little-endian blobs. Loading verifies the magic, the
//! format version and the element type, so checkpoints from a different
//! format or precision fail loudly instead of producing garbage weights.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{ArrayD, IxDyn};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"BDNN";
pub const FORMAT_VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Save named tensors plus a JSON header.
pub fn save_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    header: &serde_json::Value,
    tensors: &[(String, &ArrayD<T>)],
) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&tmp, e);

        w.write_all(&MAGIC).map_err(io)?;
        write_u32(&mut w, FORMAT_VERSION).map_err(io)?;
        let header_bytes = serde_json::to_vec(header).expect("header serializes");
        write_u64(&mut w, header_bytes.len() as u64).map_err(io)?;
        w.write_all(&header_bytes).map_err(io)?;

        write_u32(&mut w, tensors.len() as u32).map_err(io)?;
        let elem_size = std::mem::size_of::<T>() as u8;
        for (name, tensor) in tensors {
            let name_bytes = name.as_bytes();
            write_u32(&mut w, name_bytes.len() as u32).map_err(io)?;
            w.write_all(name_bytes).map_err(io)?;
            w.write_all(&[elem_size]).map_err(io)?;
            write_u32(&mut w, tensor.ndim() as u32).map_err(io)?;
            for &d in tensor.shape() {
                write_u64(&mut w, d as u64).map_err(io)?;
            }
            match elem_size {
                4 => {
                    for v in tensor.iter() {
                        w.write_all(&(v.to_f() as f32).to_le_bytes()).map_err(io)?;
                    }
                }
                8 => {
                    for v in tensor.iter() {
                        w.write_all(&v.to_f().to_le_bytes()).map_err(io)?;
                    }
                }
                _ => unreachable!("scalars are f32 or f64"),
            }
        }
        w.flush().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Load a checkpoint saved with [`save_checkpoint`] at the same precision.
#[allow(clippy::type_complexity)]
pub fn load_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<(serde_json::Value, Vec<(String, ArrayD<T>)>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if magic != MAGIC {
        return Err(Error::Version(format!(
            "`{}` is not a model checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r).map_err(io)?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "checkpoint format {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let header_len = read_u64(&mut r).map_err(io)? as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(io)?;
    let header: serde_json::Value = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Version(format!("unreadable checkpoint header: {e}")))?;

    let count = read_u32(&mut r).map_err(io)? as usize;
    let expect_size = std::mem::size_of::<T>() as u8;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r).map_err(io)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(io)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::Version(format!("bad tensor name: {e}")))?;
        let mut size_byte = [0u8; 1];
        r.read_exact(&mut size_byte).map_err(io)?;
        if size_byte[0] != expect_size {
            return Err(Error::Version(format!(
                "tensor `{name}` stored with {}-byte elements, this model uses {}-byte",
                size_byte[0], expect_size
            )));
        }
        let ndim = read_u32(&mut r).map_err(io)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r).map_err(io)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        match expect_size {
            4 => {
                let mut buf = [0u8; 4];
                for _ in 0..len {
                    r.read_exact(&mut buf).map_err(io)?;
                    data.push(T::from_f(f32::from_le_bytes(buf) as f64));
                }
            }
            8 => {
                let mut buf = [0u8; 8];
                for _ in 0..len {
                    r.read_exact(&mut buf).map_err(io)?;
                    data.push(T::from_f(f64::from_le_bytes(buf)));
                }
            }
            _ => unreachable!(),
        }
        let tensor = ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|e| Error::Version(format!("tensor `{name}` shape mismatch: {e}")))?;
        tensors.push((name, tensor));
    }
    Ok((header, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    fn sample_tensors() -> Vec<(String, ArrayD<f32>)> {
        let a = ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![1.0f32, -2.5, 3.25, 0.0, 7.5, -0.125])
            .unwrap();
        let b = ArrayD::from_elem(IxDyn(&[4]), 0.5f32);
        vec![("l0.w".into(), a), ("l0.b".into(), b)]
    }

    #[test]
    fn round_trip_preserves_header_and_tensors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bdnn");
        let header = serde_json::json!({"arch": "test", "input_shape": [8, 8, 3]});
        let tensors = sample_tensors();
        let refs: Vec<(String, &ArrayD<f32>)> =
            tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        save_checkpoint(&path, &header, &refs).unwrap();
        let (h, loaded) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(h["arch"], "test");
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "l0.w");
        assert_eq!(loaded[0].1, tensors[0].1);
        assert_eq!(loaded[1].1, tensors[1].1);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not_a_model.bin");
        std::fs::write(&path, b"JUNKJUNKJUNKJUNK").unwrap();
        let err = load_checkpoint::<f32>(&path).unwrap_err();
        assert!(matches!(err, Error::Version(_)), "{err}");
    }

    #[test]
    fn rejects_mismatched_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bdnn");
        let tensors = sample_tensors();
        let refs: Vec<(String, &ArrayD<f32>)> =
            tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        save_checkpoint(&path, &serde_json::json!({}), &refs).unwrap();
        let err = load_checkpoint::<f64>(&path).unwrap_err();
        assert!(matches!(err, Error::Version(_)), "{err}");
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bdnn");
        let tensors = sample_tensors();
        let refs: Vec<(String, &ArrayD<f32>)> =
            tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        save_checkpoint(&path, &serde_json::json!({}), &refs).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint::<f32>(&path).is_err());
    }
}
