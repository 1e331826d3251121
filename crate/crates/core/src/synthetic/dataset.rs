//! Dataset container: the 6-byte magic `KAEDS1`, a little-endian `u64`
//! header length, a JSON header, then `count` records of `n` little-endian
//! `f64` values each (one state per record).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"KAEDS1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    /// Time between consecutive records.
    pub sample_interval: f64,
    /// Generator configuration that produced the data.
    pub config: serde_json::Value,
}

/// Columns of `data` are records.
pub fn write_dataset(path: &Path, header: &DatasetHeader, data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() != header.n || data.ncols() != header.count {
        return Err(Error::Config(format!(
            "header says {}x{}, data is {}x{}",
            header.n,
            header.count,
            data.nrows(),
            data.ncols()
        )));
    }
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let json = serde_json::to_vec(header).expect("header serialises");
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes())
        .map_err(io)?;
    w.write_all(&json).map_err(io)?;
    // Column-major storage means each record is already contiguous.
    for v in data.as_slice() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, DMatrix<f64>)> {
    let io = |e| Error::io(path, e);
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = std::io::BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| bad("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| bad("missing header length".into()))?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 26 {
        return Err(bad(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| bad("truncated header".into()))?;
    let header: DatasetHeader = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
    let total = header
        .n
        .checked_mul(header.count)
        .ok_or_else(|| bad("record count overflows".into()))?;
    let mut bytes = Vec::with_capacity(total * 8);
    r.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() != total * 8 {
        return Err(bad(format!(
            "expected {} payload bytes, found {}",
            total * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((
        header.clone(),
        DMatrix::from_vec(header.n, header.count, values),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(n: usize, count: usize) -> DatasetHeader {
        DatasetHeader {
            n,
            count,
            seed: 7,
            sample_interval: 1.0,
            config: serde_json::json!({"kind": "test"}),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.kaeds");
        let data = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1) / (j as f64 + 0.7));
        write_dataset(&p, &header(3, 4), &data).unwrap();
        let (h, back) = read_dataset(&p).unwrap();
        assert_eq!(h, header(3, 4));
        assert_eq!(back, data);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.kaeds");
        write_dataset(&p, &header(2, 2), &DMatrix::zeros(2, 2)).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn header_shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.kaeds");
        assert!(write_dataset(&p, &header(2, 3), &DMatrix::zeros(2, 2)).is_err());
    }
}
