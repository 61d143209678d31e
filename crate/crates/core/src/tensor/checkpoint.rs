use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"DASLCKPT";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("parameter `{0}` is missing from the checkpoint")]
    Missing(String),
    #[error("parameter `{name}` has shape {found:?} in the checkpoint, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("malformed record: {0}")]
    Malformed(String),
}

/// Serialize every parameter value, in store order.
pub fn write_checkpoint(store: &ParamStore, mut w: impl Write) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(p.value.rank() as u32).to_le_bytes())?;
        for &d in p.value.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Parse a checkpoint into `(name, tensor)` records.
pub fn read_checkpoint(mut r: impl Read) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut out = Vec::new();
    while cur.pos < buf.len() {
        let len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| CheckpointError::Malformed("parameter name is not UTF-8".into()))?;
        let rank = cur.u32()? as usize;
        let shape = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let data = cur
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(store, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Overwrite the values of `store` from a checkpoint, matching by name.
pub fn load_checkpoint(store: &mut ParamStore, path: &Path) -> Result<(), CheckpointError> {
    let records = read_checkpoint(BufReader::new(File::open(path)?))?;
    for p in store.iter_mut() {
        let (_, t) = records
            .iter()
            .find(|(n, _)| *n == p.name)
            .ok_or_else(|| CheckpointError::Missing(p.name.clone()))?;
        if t.shape() != p.value.shape() {
            return Err(CheckpointError::Shape {
                name: p.name.clone(),
                expected: p.value.shape().to_vec(),
                found: t.shape().to_vec(),
            });
        }
        p.value = t.clone();
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        if end > self.buf.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_in_memory() {
        let mut store = ParamStore::new();
        store.add(
            "w",
            Tensor::new(vec![2, 3], vec![1., -2., 3.5, 0., 1e-300, -7.]).unwrap(),
        );
        store.add("b", Tensor::scalar(0.25));
        let mut bytes = Vec::new();
        write_checkpoint(&store, &mut bytes).unwrap();
        assert_eq!(&bytes[..8], b"DASLCKPT");
        let recs = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].0, "w");
        assert_eq!(&recs[0].1, &store.iter().next().unwrap().value);
        assert_eq!(recs[1].1.shape(), &[] as &[usize]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            read_checkpoint(&b"NOTACKPT\x01\0\0\0"[..]),
            Err(CheckpointError::BadMagic)
        ));
        assert!(matches!(
            read_checkpoint(&b"DASLCKPT\x01\0\0\0\x05\0"[..]),
            Err(CheckpointError::Truncated)
        ));
        assert!(matches!(
            read_checkpoint(&b"DASLCKPT\x09\0\0\0"[..]),
            Err(CheckpointError::Version(9))
        ));
    }
}
