//! Dense embedding matrix with a sidecar id list.
//!
//! Matrix layout (little-endian): magic `FLEB`, u16 version (1), u32 dim,
//! u64 count, then `count * dim` f32 values row-major. The sidecar holds one
//! image id per line in row order.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FLEB";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8;

#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    rows: Vec<f32>,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    normalized: bool,
}

impl EmbeddingStore {
    /// Builds a store from a flat row-major buffer. With `normalize`, every row
    /// is scaled to unit L2 norm.
    pub fn from_rows(dim: usize, mut rows: Vec<f32>, ids: Vec<String>, normalize: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Embeddings("dim must be positive".into()));
        }
        if rows.len() != dim * ids.len() {
            return Err(Error::Embeddings(format!(
                "{} ids but {} values for dim {dim}",
                ids.len(),
                rows.len()
            )));
        }
        for (r, row) in rows.chunks_exact(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteRow { row: r });
            }
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Embeddings(format!("duplicate id `{id}` in sidecar")));
            }
        }
        if normalize {
            for (r, row) in rows.chunks_exact_mut(dim).enumerate() {
                let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::Embeddings(format!(
                        "row {r} has zero norm and cannot be normalized"
                    )));
                }
                for v in row.iter_mut() {
                    *v = (f64::from(*v) / norm) as f32;
                }
            }
        }
        Ok(Self {
            dim,
            rows,
            ids,
            index,
            normalized: normalize,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> &[f32] {
        &self.rows
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }
}

pub fn load_embeddings(
    matrix_path: impl AsRef<Path>,
    ids_path: impl AsRef<Path>,
    normalize: bool,
) -> Result<EmbeddingStore> {
    let matrix_path = matrix_path.as_ref();
    let ids_path = ids_path.as_ref();
    let bytes = fs::read(matrix_path).map_err(|e| Error::io(matrix_path, e))?;
    let (dim, rows) = decode_matrix(&bytes)?;
    let ids_text = fs::read_to_string(ids_path).map_err(|e| Error::io(ids_path, e))?;
    let ids: Vec<String> = ids_text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    let count = rows.len() / dim;
    if ids.len() != count {
        return Err(Error::Embeddings(format!(
            "matrix has {count} rows but {} lists {} ids",
            ids_path.display(),
            ids.len()
        )));
    }
    EmbeddingStore::from_rows(dim, rows, ids, normalize)
}

/// Decodes the binary matrix, returning `(dim, values)`.
pub fn decode_matrix(bytes: &[u8]) -> Result<(usize, Vec<f32>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Embeddings("file shorter than header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Embeddings(format!(
            "bad magic {:?}, expected `FLEB`",
            &bytes[0..4]
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Embeddings(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    if dim == 0 {
        return Err(Error::Embeddings("dim must be positive".into()));
    }
    let body = &bytes[HEADER_LEN..];
    let expected = (count as u128) * (dim as u128) * 4;
    if body.len() as u128 != expected {
        return Err(Error::Embeddings(format!(
            "header declares {count} x {dim} floats ({expected} bytes) but body has {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dim, values))
}

pub fn encode_matrix(dim: usize, rows: &[f32], out: &mut impl Write) -> std::io::Result<()> {
    let count = (rows.len() / dim) as u64;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(dim as u32).to_le_bytes())?;
    out.write_all(&count.to_le_bytes())?;
    for v in rows {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Writes the matrix and its id sidecar.
pub fn write_embeddings(
    store: &EmbeddingStore,
    matrix_path: impl AsRef<Path>,
    ids_path: impl AsRef<Path>,
) -> Result<()> {
    let matrix_path = matrix_path.as_ref();
    let ids_path = ids_path.as_ref();
    let file = fs::File::create(matrix_path).map_err(|e| Error::io(matrix_path, e))?;
    let mut w = BufWriter::new(file);
    encode_matrix(store.dim, &store.rows, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(matrix_path, e))?;
    let mut ids = String::new();
    for id in &store.ids {
        ids.push_str(id);
        ids.push('\n');
    }
    fs::write(ids_path, ids).map_err(|e| Error::io(ids_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img{i}")).collect()
    }

    #[test]
    fn normalizes_three_four_five() {
        let s = EmbeddingStore::from_rows(2, vec![3.0, 4.0], ids(1), true).unwrap();
        assert!((s.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((s.row(0)[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn identity_without_normalization() {
        let s = EmbeddingStore::from_rows(2, vec![1.0, 0.0], ids(1), false).unwrap();
        assert_eq!(s.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn nan_row_named() {
        let err = EmbeddingStore::from_rows(2, vec![1.0, 0.0, f32::NAN, 1.0], ids(2), true).unwrap_err();
        assert!(matches!(err, Error::NonFiniteRow { row: 1 }));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut buf = Vec::new();
        encode_matrix(2, &[1.0, 2.0], &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(decode_matrix(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(decode_matrix(&bad).unwrap_err().to_string().contains("version"));
        assert!(decode_matrix(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn count_disagreement() {
        let dir = tempfile::tempdir().unwrap();
        let store = EmbeddingStore::from_rows(2, vec![1.0, 0.0, 0.0, 1.0], ids(2), false).unwrap();
        let (m, i) = (dir.path().join("e.bin"), dir.path().join("e.ids"));
        write_embeddings(&store, &m, &i).unwrap();
        fs::write(&i, "img0\n").unwrap();
        let err = load_embeddings(&m, &i, false).unwrap_err();
        assert!(err.to_string().contains("2 rows"), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_identical(dim in 1usize..9, vals in prop::collection::vec(-1e6f32..1e6, 0..64)) {
            let count = vals.len() / dim;
            let rows = vals[..count * dim].to_vec();
            let store = EmbeddingStore::from_rows(dim, rows.clone(), ids(count), false).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let (m, i) = (dir.path().join("e.bin"), dir.path().join("e.ids"));
            write_embeddings(&store, &m, &i).unwrap();
            let back = load_embeddings(&m, &i, false).unwrap();
            prop_assert_eq!(back.ids(), store.ids());
            let a: Vec<u32> = back.rows().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = rows.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
