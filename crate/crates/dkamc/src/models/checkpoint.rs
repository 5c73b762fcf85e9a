//! "DKW1" model checkpoints (little-endian): magic, version u8,
//! parameter_count u32, then per entry: name (len u16 + UTF-8),
//! rank u8, extents u32 x rank, f32 data. Batchnorm running stats are
//! stored as ordinary entries, so checkpoints are load-compatible
//! across all three models.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::Model;
use crate::nn::{Scalar, Tensor};

pub const MAGIC: [u8; 4] = *b"DKW1";
pub const VERSION: u8 = 1;

pub fn save<F: Scalar>(path: &Path, state: &[(String, Tensor<F>)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(state.len() as u32).to_le_bytes())?;
    for (name, t) in state {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[t.shape().len() as u8])?;
        for &e in t.shape() {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            let f: f32 = num_traits::cast(v).unwrap();
            w.write_all(&f.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_model<F: Scalar>(path: &Path, model: &dyn Model<F>) -> Result<()> {
    save(path, &model.state())
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != VERSION {
        return Err(Error::UnknownVersion(version[0]));
    }
    let mut cnt = [0u8; 4];
    r.read_exact(&mut cnt)?;
    let count = u32::from_le_bytes(cnt) as usize;
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let entry = read_entry(&mut r).map_err(|e| match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Truncated { frame_index: idx }
            }
            other => other,
        })?;
        out.push(entry);
    }
    Ok(out)
}

fn read_entry(r: &mut impl Read) -> Result<(String, Tensor<f32>)> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)?;
    let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| Error::Invalid("non-UTF-8 name".into()))?;
    let mut rank = [0u8; 1];
    r.read_exact(&mut rank)?;
    let mut shape = Vec::with_capacity(rank[0] as usize);
    for _ in 0..rank[0] {
        let mut e = [0u8; 4];
        r.read_exact(&mut e)?;
        shape.push(u32::from_le_bytes(e) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut buf = [0u8; 4];
    for _ in 0..numel {
        r.read_exact(&mut buf)?;
        data.push(f32::from_le_bytes(buf));
    }
    Ok((name, Tensor::new(shape, data)?))
}

pub fn load_into<F: Scalar>(path: &Path, model: &mut dyn Model<F>) -> Result<()> {
    let entries: HashMap<String, Tensor<F>> = load(path)?
        .into_iter()
        .map(|(n, t)| (n, t.cast()))
        .collect();
    model.load_state(&entries)
}
