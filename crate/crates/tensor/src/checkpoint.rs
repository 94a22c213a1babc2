//! Byte-stable checkpoint format: a flat, ordered, named list of parameter
//! arrays with shapes, in a little-endian binary file.
//!
//! Layout:
//!   magic "NRNFCKPT" | version u32 | dtype u8 (4=f32, 8=f64) | count u32
//!   then per parameter, in registration order:
//!   name_len u16 | name utf8 | ndim u8 | dims u32 per axis | raw LE data
//!
//! The same parameters always serialize to the same bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::scalar::Scalar;
use crate::tensor::ParamSet;
use crate::{Result, TensorError};

const MAGIC: &[u8; 8] = b"NRNFCKPT";
const VERSION: u32 = 1;

pub fn save<S: Scalar, P: AsRef<Path>>(params: &ParamSet<S>, path: P) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[S::BYTE_WIDTH])?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params.iter() {
        let name = p.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(TensorError::Checkpoint(format!("name too long: {}", p.name)));
        }
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[p.tensor.shape.len() as u8])?;
        for &d in &p.tensor.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &p.tensor.data {
            w.write_all(&v.to_le_bytes_vec())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads checkpoint values into an existing parameter set. Names, order,
/// shapes, and element type must all match.
pub fn load_into<S: Scalar, P: AsRef<Path>>(params: &mut ParamSet<S>, path: P) -> Result<()> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| {
        TensorError::Checkpoint(format!("cannot open {}: {e}", path.display()))
    })?);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)?;
    if dtype[0] != S::BYTE_WIDTH {
        return Err(TensorError::Checkpoint(format!(
            "element width {} does not match expected {}",
            dtype[0],
            S::BYTE_WIDTH
        )));
    }
    let count = read_u32(&mut r)? as usize;
    if count != params.len() {
        return Err(TensorError::Checkpoint(format!(
            "parameter count {count} does not match model ({})",
            params.len()
        )));
    }

    for idx in 0..count {
        let name_len = read_u16(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| TensorError::Checkpoint("non-utf8 name".into()))?;
        let p = params.get_mut(idx);
        if p.name != name {
            return Err(TensorError::Checkpoint(format!(
                "parameter {idx} is {name} in file but {} in model",
                p.name
            )));
        }
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            shape.push(read_u32(&mut r)? as usize);
        }
        if shape != p.tensor.shape {
            return Err(TensorError::Checkpoint(format!(
                "shape mismatch for {name}: file {shape:?} vs model {:?}",
                p.tensor.shape
            )));
        }
        let width = S::BYTE_WIDTH as usize;
        let mut buf = vec![0u8; p.tensor.numel() * width];
        r.read_exact(&mut buf)?;
        for (i, v) in p.tensor.data.iter_mut().enumerate() {
            *v = S::from_le_slice(&buf[i * width..(i + 1) * width]);
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}
