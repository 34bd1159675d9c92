//! Sparse and dense row storage for the hashing front end.
//!
//! The encoder touches its input one row at a time through [`RowSource`],
//! so the same code path serves an in-memory CSR adjacency matrix, a dense
//! embedding matrix, and a dense matrix file streamed from disk without
//! materializing anything beyond the current row.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Borrowed view of one matrix row in coordinate form.
///
/// `cols` are strictly increasing and `vals[k]` sits at column `cols[k]`.
#[derive(Clone, Copy, Debug)]
pub struct SparseRow<'a> {
    pub cols: &'a [u32],
    pub vals: &'a [f64],
}

/// Dot product of a sparse row with a dense vector.
pub fn row_dot(row: SparseRow<'_>, v: &[f64]) -> Result<f64> {
    if row.cols.len() != row.vals.len() {
        return Err(Error::Shape(format!(
            "sparse row has {} columns but {} values",
            row.cols.len(),
            row.vals.len()
        )));
    }
    let mut acc = 0.0;
    for (&c, &x) in row.cols.iter().zip(row.vals) {
        match v.get(c as usize) {
            Some(&vc) => acc += x * vc,
            None => {
                return Err(Error::Range(format!(
                    "column {c} out of range for a vector of length {}",
                    v.len()
                )))
            }
        }
    }
    Ok(acc)
}

/// Read-only, re-iterable row access.
///
/// `scan` visits rows `0..n_rows()` in ascending order exactly once per
/// call, and two scans of the same source yield identical rows. Callers
/// that encode concurrently issue one scan per pass.
pub trait RowSource: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn scan(&self, visit: &mut dyn FnMut(usize, SparseRow<'_>) -> Result<()>) -> Result<()>;
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n_cols: usize,
    /// `row_ptr[i]..row_ptr[i+1]` spans row `i` in `col_idx`/`values`.
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from raw parts, checking every structural invariant.
    pub fn new(n_cols: usize, row_ptr: Vec<usize>, col_idx: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if row_ptr.is_empty() || row_ptr[0] != 0 {
            return Err(Error::Shape("row_ptr must start with 0".into()));
        }
        if col_idx.len() != values.len() {
            return Err(Error::Shape(format!(
                "col_idx has {} entries but values has {}",
                col_idx.len(),
                values.len()
            )));
        }
        if *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::Shape("row_ptr must end at the entry count".into()));
        }
        for w in row_ptr.windows(2) {
            if w[0] > w[1] {
                return Err(Error::Shape("row_ptr must be non-decreasing".into()));
            }
        }
        let m = Self { n_cols, row_ptr, col_idx, values };
        for i in 0..m.n_rows() {
            let row = m.row(i);
            for w in row.cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Shape(format!(
                        "row {i} columns must be strictly increasing"
                    )));
                }
            }
            if let Some(&last) = row.cols.last() {
                if last as usize >= n_cols {
                    return Err(Error::Range(format!(
                        "row {i} column {last} out of range for {n_cols} columns"
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Build from unordered `(row, col, value)` entries. Duplicate
    /// coordinates are rejected.
    pub fn from_entries(n_rows: usize, n_cols: usize, entries: &[(u32, u32, f64)]) -> Result<Self> {
        let mut sorted = entries.to_vec();
        sorted.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::Domain(format!(
                    "duplicate entry at ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            if r as usize >= n_rows {
                return Err(Error::Range(format!("row {r} out of range for {n_rows} rows")));
            }
            row_ptr[r as usize + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(n_cols, row_ptr, col_idx, values)
    }

    /// Adjacency matrix of an undirected graph: every pair is stored in
    /// both directions, duplicates collapse, all values are 1.0.
    /// Self-loops are kept as single entries.
    pub fn from_undirected_pairs(n_nodes: usize, pairs: &[(u32, u32)]) -> Result<Self> {
        let mut both = Vec::with_capacity(pairs.len() * 2);
        for &(a, b) in pairs {
            if a as usize >= n_nodes || b as usize >= n_nodes {
                return Err(Error::Range(format!(
                    "edge ({a}, {b}) out of range for {n_nodes} nodes"
                )));
            }
            both.push((a, b));
            if a != b {
                both.push((b, a));
            }
        }
        both.sort_unstable();
        both.dedup();
        let entries: Vec<(u32, u32, f64)> = both.into_iter().map(|(a, b)| (a, b, 1.0)).collect();
        Self::from_entries(n_nodes, n_nodes, &entries)
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        SparseRow { cols: &self.col_idx[span.clone()], vals: &self.values[span] }
    }
}

impl RowSource for CsrMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows()
    }

    fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn scan(&self, visit: &mut dyn FnMut(usize, SparseRow<'_>) -> Result<()>) -> Result<()> {
        for i in 0..self.n_rows() {
            visit(i, self.row(i))?;
        }
        Ok(())
    }
}

/// Parse a whitespace-separated edge list: two node ids per line, blank
/// lines and lines starting with `#` ignored.
pub fn load_edge_pairs(path: &Path) -> Result<Vec<(u32, u32)>> {
    let file = File::open(path)?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let a = it
            .next()
            .unwrap()
            .parse::<u32>()
            .map_err(|e| Error::parse(lineno, format!("bad node id: {e}")))?;
        let b = it
            .next()
            .ok_or_else(|| Error::parse(lineno, "expected two node ids"))?
            .parse::<u32>()
            .map_err(|e| Error::parse(lineno, format!("bad node id: {e}")))?;
        if it.next().is_some() {
            return Err(Error::parse(lineno, "expected exactly two node ids"));
        }
        pairs.push((a, b));
    }
    Ok(pairs)
}

/// Load an edge list as the adjacency matrix of an undirected graph.
/// The node count is the largest id seen plus one.
pub fn load_edge_list(path: &Path) -> Result<CsrMatrix> {
    let pairs = load_edge_pairs(path)?;
    let n = pairs
        .iter()
        .map(|&(a, b)| a.max(b) as usize + 1)
        .max()
        .unwrap_or(0);
    CsrMatrix::from_undirected_pairs(n, &pairs)
}

const GEF32_MAGIC: &[u8; 5] = b"GEF32";
const GEF32_HEADER_LEN: u64 = 5 + 8 + 4;

/// Dense row-major matrix stored as IEEE-754 binary32.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Serialize: magic `GEF32`, rows `u64`, cols `u32`, then row-major
    /// little-endian floats.
    pub fn write_gef32<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(GEF32_MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        for &x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_gef32<R: Read>(r: &mut R) -> Result<Self> {
        let (rows, cols) = read_gef32_header(r, 0)?;
        let mut data = vec![0.0f32; rows * cols];
        let mut buf = [0u8; 4];
        for (i, slot) in data.iter_mut().enumerate() {
            r.read_exact(&mut buf).map_err(|_| {
                Error::format(
                    GEF32_HEADER_LEN + 4 * i as u64,
                    "truncated float payload",
                )
            })?;
            *slot = f32::from_le_bytes(buf);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(File::create(path)?);
        self.write_gef32(&mut w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_gef32(&mut BufReader::new(File::open(path)?))
    }
}

fn read_gef32_header<R: Read>(r: &mut R, base: u64) -> Result<(usize, usize)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(base, "file too short for GEF32 magic"))?;
    if &magic != GEF32_MAGIC {
        return Err(Error::format(base, format!("bad magic {magic:?}, expected \"GEF32\"")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)
        .map_err(|_| Error::format(base + 5, "truncated row count"))?;
    let rows = u64::from_le_bytes(b8);
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)
        .map_err(|_| Error::format(base + 13, "truncated column count"))?;
    let cols = u32::from_le_bytes(b4);
    let rows = usize::try_from(rows)
        .map_err(|_| Error::format(base + 5, "row count exceeds address space"))?;
    rows.checked_mul(cols as usize)
        .ok_or_else(|| Error::format(base + 5, "matrix size overflows"))?;
    Ok((rows, cols as usize))
}

impl RowSource for DenseMatrix {
    fn n_rows(&self) -> usize {
        self.rows
    }

    fn n_cols(&self) -> usize {
        self.cols
    }

    fn scan(&self, visit: &mut dyn FnMut(usize, SparseRow<'_>) -> Result<()>) -> Result<()> {
        let cols: Vec<u32> = (0..self.cols as u32).collect();
        let mut vals = vec![0.0f64; self.cols];
        for i in 0..self.rows {
            for (slot, &x) in vals.iter_mut().zip(self.row(i)) {
                *slot = x as f64;
            }
            visit(i, SparseRow { cols: &cols, vals: &vals })?;
        }
        Ok(())
    }
}

/// Row access to a GEF32 file without loading it; every scan re-opens the
/// file, so the peak footprint is one row.
pub struct DenseFileSource {
    path: PathBuf,
    rows: usize,
    cols: usize,
}

impl DenseFileSource {
    pub fn open(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let (rows, cols) = read_gef32_header(&mut r, 0)?;
        Ok(Self { path: path.to_path_buf(), rows, cols })
    }
}

impl RowSource for DenseFileSource {
    fn n_rows(&self) -> usize {
        self.rows
    }

    fn n_cols(&self) -> usize {
        self.cols
    }

    fn scan(&self, visit: &mut dyn FnMut(usize, SparseRow<'_>) -> Result<()>) -> Result<()> {
        let mut r = BufReader::new(File::open(&self.path)?);
        read_gef32_header(&mut r, 0)?;
        let cols: Vec<u32> = (0..self.cols as u32).collect();
        let mut raw = vec![0u8; self.cols * 4];
        let mut vals = vec![0.0f64; self.cols];
        for i in 0..self.rows {
            r.read_exact(&mut raw).map_err(|_| {
                Error::format(
                    GEF32_HEADER_LEN + (i * self.cols * 4) as u64,
                    "truncated float payload",
                )
            })?;
            for (k, slot) in vals.iter_mut().enumerate() {
                let b: [u8; 4] = raw[k * 4..k * 4 + 4].try_into().unwrap();
                *slot = f32::from_le_bytes(b) as f64;
            }
            visit(i, SparseRow { cols: &cols, vals: &vals })?;
        }
        Ok(())
    }
}
