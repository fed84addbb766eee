//! Tensor serialization.
//!
//! Single tensor ("DVT1" record): magic `DVT1`, u32 rank, u64 dims, then the
//! payload as little-endian f64. Checkpoints and other named collections use
//! the map container: magic `DVTM`, u64 JSON-index length, a JSON object
//! mapping tensor name to byte offset (relative to the start of the record
//! region), then the DVT1 records themselves.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"DVT1";
pub const MAP_MAGIC: &[u8; 4] = b"DVTM";

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 8);
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(TensorError::Corrupt(format!(
            "bad tensor magic {magic:?}, expected {TENSOR_MAGIC:?}"
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let rank = u32::from_le_bytes(b4) as usize;
    if rank > 8 {
        return Err(TensorError::Corrupt(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut b8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut b8)?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut payload = vec![0u8; numel * 8];
    r.read_exact(&mut payload)?;
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::from_vec(data, &shape))
}

pub fn save_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    read_tensor(&mut r)
}

/// Ordered name -> tensor collection with a stable on-disk byte layout
/// (sorted names, deterministic JSON index).
#[derive(Default)]
pub struct TensorMap {
    map: BTreeMap<String, Tensor>,
}

impl TensorMap {
    pub fn new() -> TensorMap {
        TensorMap::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.map.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut records: Vec<u8> = Vec::new();
        let mut index: BTreeMap<String, u64> = BTreeMap::new();
        for (name, t) in &self.map {
            index.insert(name.clone(), records.len() as u64);
            write_tensor(&mut records, t)?;
        }
        let index_json = serde_json::to_vec(&index)
            .map_err(|e| TensorError::Corrupt(format!("index encode: {e}")))?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAP_MAGIC)?;
        w.write_all(&(index_json.len() as u64).to_le_bytes())?;
        w.write_all(&index_json)?;
        w.write_all(&records)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TensorMap> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAP_MAGIC {
            return Err(TensorError::Corrupt(format!(
                "bad container magic {magic:?}, expected {MAP_MAGIC:?}"
            )));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let index_len = u64::from_le_bytes(b8) as usize;
        let mut index_json = vec![0u8; index_len];
        r.read_exact(&mut index_json)?;
        let index: BTreeMap<String, u64> = serde_json::from_slice(&index_json)
            .map_err(|e| TensorError::Corrupt(format!("index decode: {e}")))?;
        let mut records = Vec::new();
        r.read_to_end(&mut records)?;
        let mut map = BTreeMap::new();
        for (name, offset) in index {
            let offset = offset as usize;
            if offset >= records.len() {
                return Err(TensorError::Corrupt(format!(
                    "offset {offset} for {name} out of bounds"
                )));
            }
            let mut slice = &records[offset..];
            map.insert(name, read_tensor(&mut slice)?);
        }
        Ok(TensorMap { map })
    }
}
