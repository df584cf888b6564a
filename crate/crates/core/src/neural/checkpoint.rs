//! Named-tensor checkpoint file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "ADSCKPT\0"
//! version  u32      1
//! meta     u32 length + UTF-8 key=value text
//! count    u32      number of tensors
//! tensor*  u32 name length, UTF-8 name, u32 ndim, u64 dims..., f64 values...
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::Parameters;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ADSCKPT\0";
const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: Default::default(),
        msg: msg.into(),
    }
}

pub fn write_tensors<W: Write>(mut out: W, meta: &str, tensors: &[(String, &Tensor)]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(meta.len() as u32).to_le_bytes())?;
    out.write_all(meta.as_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for d in &t.shape {
            out.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in &t.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| bad("invalid UTF-8"))
}

pub fn read_tensors<R: Read>(mut input: R) -> Result<(String, Vec<(String, Tensor)>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut input)? as usize;
    let meta = read_string(&mut input, meta_len)?;
    let count = read_u32(&mut input)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut input)? as usize;
        let name = read_string(&mut input, name_len)?;
        let ndim = read_u32(&mut input)? as usize;
        let shape = (0..ndim)
            .map(|_| read_u64(&mut input).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        tensors.push((name, Tensor { shape, data }));
    }
    Ok((meta, tensors))
}

/// Overwrite `model`'s tensors from a checkpoint with identical names and
/// shapes; returns the metadata text.
pub fn load_into<P: Parameters, R: Read>(model: &mut P, input: R) -> Result<String> {
    let (meta, tensors) = read_tensors(input)?;
    let names: Vec<(String, Vec<usize>)> = model
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.shape.clone()))
        .collect();
    if names.len() != tensors.len() {
        return Err(bad(format!(
            "checkpoint has {} tensors, model has {}",
            tensors.len(),
            names.len()
        )));
    }
    for ((name, shape), (cname, t)) in names.iter().zip(&tensors) {
        if name != cname || shape != &t.shape {
            return Err(bad(format!(
                "tensor mismatch: model {name} {shape:?} vs checkpoint {cname} {:?}",
                t.shape
            )));
        }
    }
    for (dst, (_, src)) in model.params_mut().into_iter().zip(tensors) {
        dst.data = src.data;
    }
    Ok(meta)
}

pub fn save_file<P: Parameters>(model: &P, meta: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path)?;
    write_tensors(std::io::BufWriter::new(file), meta, &model.named_params()).map_err(|e| match e {
        Error::Checkpoint { msg, .. } => Error::Checkpoint { path: path.into(), msg },
        other => other,
    })
}

pub fn load_file<P: Parameters>(model: &mut P, path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    load_into(model, std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Checkpoint { msg, .. } => Error::Checkpoint { path: path.into(), msg },
        other => other,
    })
}
