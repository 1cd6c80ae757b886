//! Flat parameter checkpoint container.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic    8 bytes   "ASEGCKPT"
//! version  u8        1
//! count    u32       number of records
//! record   repeated `count` times:
//!   name_len  u32
//!   name      name_len bytes, UTF-8
//!   ndim      u32
//!   dims      ndim × u64
//!   payload   product(dims) × f64 (IEEE-754 binary64)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::params::ParamStore;

pub const MAGIC: &[u8; 8] = b"ASEGCKPT";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn write_records<W: Write>(mut w: W, records: &[Record]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for r in records {
        w.write_all(&(r.name.len() as u32).to_le_bytes())?;
        w.write_all(r.name.as_bytes())?;
        w.write_all(&(r.shape.len() as u32).to_le_bytes())?;
        for &d in &r.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &r.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<Record>> {
    let bad = |e: std::io::Error| TensorError::Checkpoint(format!("truncated or unreadable: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(bad)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic header".into()));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version).map_err(bad)?;
    if version[0] != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {}", version[0])));
    }
    let count = read_u32(&mut r).map_err(bad)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u32(&mut r).map_err(bad)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(bad)?;
        let name = String::from_utf8(name)
            .map_err(|_| TensorError::Checkpoint("record name is not UTF-8".into()))?;
        let ndim = read_u32(&mut r).map_err(bad)?;
        let shape = (0..ndim)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(bad)?;
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_bits(read_u64(&mut r).map_err(bad)?));
        }
        out.push(Record { name, shape, data });
    }
    Ok(out)
}

impl ParamStore {
    pub fn to_records(&self) -> Vec<Record> {
        self.iter()
            .map(|p| Record {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                data: p.tensor.to_vec(),
            })
            .collect()
    }

    /// Overwrites every parameter from `records`. The record set must match
    /// the store exactly by name and shape.
    pub fn load_records(&self, records: &[Record]) -> Result<()> {
        if records.len() != self.len() {
            return Err(TensorError::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                records.len(),
                self.len()
            )));
        }
        for r in records {
            let p = self.get(&r.name).ok_or_else(|| {
                TensorError::Checkpoint(format!("checkpoint parameter `{}` not in model", r.name))
            })?;
            if p.tensor.shape() != r.shape.as_slice() {
                return Err(TensorError::Checkpoint(format!(
                    "`{}`: checkpoint shape {:?}, model shape {:?}",
                    r.name,
                    r.shape,
                    p.tensor.shape()
                )));
            }
        }
        for r in records {
            let p = self.get(&r.name).expect("checked above");
            p.tensor.data_mut().copy_from_slice(&r.data);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| TensorError::io(path, e))?;
        write_records(BufWriter::new(f), &self.to_records()).map_err(|e| TensorError::io(path, e))
    }

    pub fn load(&self, path: &Path) -> Result<()> {
        let f = File::open(path).map_err(|e| TensorError::io(path, e))?;
        self.load_records(&read_records(BufReader::new(f))?)
    }
}
