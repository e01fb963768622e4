//! Nearest-neighbor interpolation generator.
//!
//! Each synthetic row picks a base training row uniformly, one of its `k`
//! nearest neighbors uniformly, and a single gap `λ ~ U(0, 1)`, and emits
//! `base + λ (neighbor - base)` across every encoded column, one-hot blocks
//! included.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neighbors::KdTree;
use crate::par;
use crate::preprocess::{EncodedMatrix, Layout};

pub const DEFAULT_K: usize = 5;
/// Rows drawn from one seed substream.
const SHARD_ROWS: usize = 1024;

#[derive(Debug, Clone)]
pub struct SmoteModel {
    data: Array2<f64>,
    layout: Layout,
    k: usize,
    tree: KdTree,
}

impl SmoteModel {
    pub fn fit(encoded: &EncodedMatrix, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if encoded.nrows() < k + 1 {
            return Err(Error::InvalidArgument(format!(
                "need at least {} training rows for k = {k}, got {}",
                k + 1,
                encoded.nrows()
            )));
        }
        let data = encoded.data.as_standard_layout().into_owned();
        let tree = KdTree::build(&data);
        Ok(Self { data, layout: encoded.layout.clone(), k, tree })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn training_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn training_matrix(&self) -> &Array2<f64> {
        &self.data
    }

    /// Nearest training rows to row `row_index`, excluding itself, ordered
    /// by (distance, index).
    pub fn knn(&self, row_index: usize, k: usize) -> Result<Vec<usize>> {
        if row_index >= self.data.nrows() {
            return Err(Error::InvalidArgument(format!(
                "row {row_index} out of range for {} rows",
                self.data.nrows()
            )));
        }
        let q = self.data.row(row_index);
        let q = q.as_slice().expect("standard layout");
        Ok(self.tree.knn(&self.data, q, k, Some(row_index)).into_iter().map(|n| n.index).collect())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<EncodedMatrix> {
        let d = self.data.ncols();
        let shards = n.div_ceil(SHARD_ROWS);
        let parts: Vec<Result<Vec<f64>>> = par::map_indexed(shards, |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let rows = SHARD_ROWS.min(n - s * SHARD_ROWS);
            let mut out = Vec::with_capacity(rows * d);
            for _ in 0..rows {
                let base = rng.random_range(0..self.data.nrows());
                let neighbors = self.knn(base, self.k)?;
                let pick = neighbors[rng.random_range(0..neighbors.len())];
                let gap: f64 = rng.random();
                let (b, x) = (self.data.row(base), self.data.row(pick));
                out.extend(b.iter().zip(x.iter()).map(|(&b, &x)| (b + gap * (x - b)).clamp(b.min(x), b.max(x))));
            }
            Ok(out)
        });
        let mut flat = Vec::with_capacity(n * d);
        for p in parts {
            flat.extend(p?);
        }
        let data = Array2::from_shape_vec((n, d), flat).expect("shape");
        EncodedMatrix::new(data, self.layout.clone())
    }
}

pub const MATRIX_MAGIC: &[u8; 4] = b"SMTE";

/// Row-major little-endian f64 matrix behind a 16-byte header:
/// magic `SMTE`, row count (u64 LE), column count (u32 LE).
pub fn write_matrix<W: Write>(m: &Array2<f64>, mut out: W) -> Result<()> {
    let cols = u32::try_from(m.ncols()).map_err(|_| Error::InvalidArgument("too many columns".into()))?;
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&cols.to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for v in m.as_standard_layout().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix<R: Read>(mut input: R) -> Result<Array2<f64>> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..4] != MATRIX_MAGIC {
        return Err(Error::Checkpoint("matrix file does not start with SMTE".into()));
    }
    let rows = u64::from_le_bytes(header[4..12].try_into().expect("8 bytes")) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Checkpoint(format!(
            "matrix body has {} bytes, header says {rows}x{cols}",
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("checked length"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn matrix(data: Array2<f64>) -> EncodedMatrix {
        let names: Vec<String> = (0..data.ncols()).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        EncodedMatrix::new(data, Layout::from_parts(&refs, &[])).unwrap()
    }

    #[test]
    fn row_count_boundary() {
        let m = matrix(Array2::from_shape_fn((6, 2), |(i, j)| (i * 2 + j) as f64));
        assert!(SmoteModel::fit(&m, 5).is_ok());
        let m = matrix(Array2::from_shape_fn((5, 2), |(i, j)| (i * 2 + j) as f64));
        assert!(SmoteModel::fit(&m, 5).is_err());
    }

    #[test]
    fn knn_example_and_bounds() {
        let model = SmoteModel::fit(&matrix(array![[0.0], [1.0], [3.0]]), 2).unwrap();
        assert_eq!(model.knn(0, 2).unwrap(), vec![1, 2]);
        assert!(model.knn(3, 1).is_err());
    }

    #[test]
    fn identical_rows_reproduce_themselves() {
        let model = SmoteModel::fit(&matrix(array![[0.3, -1.0], [0.3, -1.0]]), 1).unwrap();
        let s = model.sample(100, 1).unwrap();
        assert!(s.data.rows().into_iter().all(|r| r[0] == 0.3 && r[1] == -1.0));
    }

    #[test]
    fn samples_stay_on_the_segment() {
        let (a, b) = ([1.0, 2.0, -1.0], [3.0, -2.0, 0.5]);
        let model = SmoteModel::fit(&matrix(array![[a[0], a[1], a[2]], [b[0], b[1], b[2]]]), 1).unwrap();
        let s = model.sample(1000, 9).unwrap();
        let dir: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
        let len2: f64 = dir.iter().map(|d| d * d).sum();
        for r in s.data.rows() {
            let rel: Vec<f64> = r.iter().zip(&a).map(|(x, y)| x - y).collect();
            let t = rel.iter().zip(&dir).map(|(x, y)| x * y).sum::<f64>() / len2;
            assert!((-1e-12..=1.0 + 1e-12).contains(&t));
            let off: f64 = rel.iter().zip(&dir).map(|(x, d)| (x - t * d).powi(2)).sum::<f64>().sqrt();
            assert!(off < 1e-12);
        }
    }

    #[test]
    fn one_hot_blocks_stay_on_the_simplex() {
        let layout = Layout::from_parts(&["x"], &[("c", 3)]);
        let data = array![[0.1, 1.0, 0.0, 0.0], [0.5, 0.0, 1.0, 0.0], [0.9, 0.0, 0.0, 1.0], [0.2, 1.0, 0.0, 0.0]];
        let model = SmoteModel::fit(&EncodedMatrix::new(data, layout).unwrap(), 2).unwrap();
        let s = model.sample(500, 3).unwrap();
        for r in s.data.rows() {
            assert!((r[1] + r[2] + r[3] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = matrix(Array2::from_shape_fn((300, 4), |_| rng.random::<f64>()));
        let model = SmoteModel::fit(&m, 5).unwrap();
        let a = model.sample(2500, 42).unwrap();
        assert_eq!(a, model.sample(2500, 42).unwrap());
        assert_ne!(a, model.sample(2500, 43).unwrap());
        // column ranges never leave the training ranges
        for j in 0..4 {
            let col = m.data.column(j);
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            assert!(a.data.column(j).iter().all(|&v| v >= lo && v <= hi));
        }
    }

    #[test]
    fn matrix_file_round_trip() {
        let m = array![[1.0, 2.5], [-3.0, f64::MAX], [0.0, 1e-300]];
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 8);
        assert_eq!(&buf[..4], b"SMTE");
        assert_eq!(read_matrix(&buf[..]).unwrap(), m);
        assert!(read_matrix(&buf[..20]).is_err());
        buf[0] = b'X';
        assert!(read_matrix(&buf[..]).is_err());
    }
}
