//! Versioned binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "DRIPCKPT"
//! version    u32
//! n_meta     u32      then n_meta × (key: str, value: str)
//! n_records  u32      then n_records × record
//! record     name: str, ndim: u32, dims: ndim × u64, values: prod(dims) × f64
//! str        len: u32, utf-8 bytes
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NumericsError, ParamStore};

pub const MAGIC: &[u8; 8] = b"DRIPCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// String metadata stored in the checkpoint header.
pub type Metadata = BTreeMap<String, String>;

pub fn write_checkpoint<W: Write>(
    mut w: W,
    store: &ParamStore,
    meta: &Metadata,
) -> Result<(), NumericsError> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    for (k, v) in meta {
        write_str(&mut w, k)?;
        write_str(&mut w, v)?;
    }
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (pm, values) in store.entries() {
        write_str(&mut w, &pm.name)?;
        w.write_all(&(pm.shape.len() as u32).to_le_bytes())?;
        for &d in &pm.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ParamStore, Metadata), NumericsError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NumericsError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(NumericsError::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let n_meta = read_u32(&mut r)?;
    let mut meta = Metadata::new();
    for _ in 0..n_meta {
        let k = read_str(&mut r)?;
        let v = read_str(&mut r)?;
        meta.insert(k, v);
    }
    let n_records = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..n_records {
        let name = read_str(&mut r)?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let len: usize = shape.iter().product();
        let mut values = Vec::with_capacity(len);
        let mut b = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut b)?;
            values.push(f64::from_le_bytes(b));
        }
        store.insert(name, &shape, values)?;
    }
    Ok((store, meta))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    store: &ParamStore,
    meta: &Metadata,
) -> Result<(), NumericsError> {
    let f = File::create(path)?;
    write_checkpoint(BufWriter::new(f), store, meta)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParamStore, Metadata), NumericsError> {
    let f = File::open(path)?;
    read_checkpoint(BufReader::new(f))
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, NumericsError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| NumericsError::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn checkpoint_round_trips(values in proptest::collection::vec(proptest::num::f64::ANY, 1..20), rows in 1usize..4) {
            let mut store = ParamStore::new();
            let mut v = values.clone();
            v.truncate((values.len() / rows) * rows);
            prop_assume!(!v.is_empty());
            let cols = v.len() / rows;
            store.insert("layer.w", &[rows, cols], v).unwrap();
            store.insert("layer.b", &[1], vec![-0.0]).unwrap();
            let mut meta = Metadata::new();
            meta.insert("domain".into(), "3".into());

            let mut bytes = Vec::new();
            write_checkpoint(&mut bytes, &store, &meta).unwrap();
            let (back, back_meta) = read_checkpoint(bytes.as_slice()).unwrap();
            prop_assert!(back.same_values(&store));
            prop_assert_eq!(back_meta, meta);
        }
    }

    #[test]
    fn rejects_foreign_files() {
        let err = read_checkpoint(&b"NOTACKPT\x01\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, NumericsError::Checkpoint(_)));
    }
}
