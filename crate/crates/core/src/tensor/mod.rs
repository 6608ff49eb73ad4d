//! Dense matrix primitives shared by the re-ranking stages: feature and
//! distance matrices, row normalization, blocked pairwise distances and
//! deterministic top-k selection.

mod kernel;

use std::cmp::Ordering;
use std::ops::Range;

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Block size used when callers have no preference.
pub const DEFAULT_BLOCK: usize = 256;

/// An `N x d` embedding matrix, one sample per row. Always finite and non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::Empty { rows, cols });
        }
        check_finite(data.view())?;
        Ok(Self(data.as_standard_layout().into_owned()))
    }

    pub fn from_shape_vec(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * dim {
            return Err(Error::ShapeMismatch {
                context: "feature buffer length",
                expected: rows * dim,
                found: values.len(),
            });
        }
        // Length checked above.
        Self::new(Array2::from_shape_vec((rows, dim), values).expect("length checked"))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Row-major backing slice.
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("standard layout")
    }

    /// Copies a contiguous range of rows. Panics on an empty or out-of-range slice.
    pub fn slice_rows(&self, range: Range<usize>) -> FeatureMatrix {
        assert!(range.start < range.end && range.end <= self.rows());
        FeatureMatrix(self.0.slice(s![range, ..]).to_owned())
    }

    /// Stacks `self` on top of `other`.
    pub fn concat(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch {
                context: "feature concatenation",
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let data = ndarray::concatenate(Axis(0), &[self.view(), other.view()])
            .expect("dims checked");
        Ok(FeatureMatrix(data))
    }

    /// Stacks a non-empty sequence of matrices with a common dimension.
    pub fn vstack(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts.first().ok_or(Error::Empty { rows: 0, cols: 0 })?;
        if let Some(bad) = parts.iter().find(|p| p.dim() != first.dim()) {
            return Err(Error::ShapeMismatch {
                context: "feature concatenation",
                expected: first.dim(),
                found: bad.dim(),
            });
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        Ok(FeatureMatrix(
            ndarray::concatenate(Axis(0), &views).expect("dims checked"),
        ))
    }
}

/// A dense `rows x cols` matrix of pairwise quantities.
///
/// The same container holds raw distances, filtered distances, similarities
/// and adjusted match scores; `squared` records whether distance entries are
/// squared Euclidean.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    data: Array2<f64>,
    squared: bool,
}

impl DistanceMatrix {
    pub fn new(data: Array2<f64>, squared: bool) -> Result<Self> {
        check_finite(data.view())?;
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
            squared,
        })
    }

    pub(crate) fn from_trusted(data: Array2<f64>, squared: bool) -> Self {
        debug_assert!(data.is_standard_layout());
        Self { data, squared }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_squared(&self) -> bool {
        self.squared
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[[row, col]]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.cols();
        &self.as_slice()[i * cols..(i + 1) * cols]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Element-wise square root of a squared-distance matrix; a no-op otherwise.
    pub fn into_unsquared(mut self) -> Self {
        if self.squared {
            self.data.mapv_inplace(f64::sqrt);
            self.squared = false;
        }
        self
    }
}

/// One selected neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Per-row nearest neighbors, each row ordered by `(distance, index)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopK {
    rows: Vec<Vec<Neighbor>>,
}

impl TopK {
    pub fn from_rows(rows: Vec<Vec<Neighbor>>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Neighbor] {
        &self.rows[i]
    }

    pub fn indices(&self, i: usize) -> Vec<usize> {
        self.rows[i].iter().map(|n| n.index).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Neighbor]> {
        self.rows.iter().map(Vec::as_slice)
    }
}

fn check_finite(m: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Scales every row to unit Euclidean norm. Zero rows are returned unchanged.
pub fn l2_normalize_rows(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut out = m.0.clone();
    normalize_rows_in_place(out.view_mut())?;
    Ok(FeatureMatrix(out))
}

/// Row-wise L2 normalization of an arbitrary dense matrix.
pub(crate) fn normalize_rows_in_place(mut m: ArrayViewMut2<'_, f64>) -> Result<()> {
    for (i, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            let col = row.iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::NonFinite { row: i, col });
        }
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    Ok(())
}

/// Squared Euclidean distances between every row of `a` and every row of `b`.
///
/// Work is split into `block x block` tiles. Each entry is computed by the
/// same reduction wherever it lands, so the output is bitwise identical for
/// any block size; row blocks are processed in parallel.
pub fn pairwise_sq_euclidean(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    block: usize,
) -> Result<DistanceMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            context: "pairwise distance dimension",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if block == 0 {
        return Err(Error::InvalidConfig("block size must be at least 1".into()));
    }
    let mut out = Array2::<f64>::zeros((a.rows(), b.rows()));
    sq_dist_into(a.as_slice(), b.as_slice(), a.dim(), block, out.view_mut());
    Ok(DistanceMatrix::from_trusted(out, true))
}

/// Writes the squared distances of the row-major `a` against `b` into `out`,
/// which must be `a_rows x b_rows` in standard layout.
pub(crate) fn sq_dist_into(
    a: &[f64],
    b: &[f64],
    dim: usize,
    block: usize,
    mut out: ArrayViewMut2<'_, f64>,
) {
    let cols = out.ncols();
    if cols == 0 || out.nrows() == 0 {
        return;
    }
    let buf = out.as_slice_mut().expect("standard layout");
    buf.par_chunks_mut(block * cols)
        .enumerate()
        .for_each(|(bi, chunk)| {
            let r0 = bi * block;
            let nr = chunk.len() / cols;
            let a_blk = &a[r0 * dim..(r0 + nr) * dim];
            for c0 in (0..cols).step_by(block) {
                let c1 = (c0 + block).min(cols);
                kernel::sq_dist_tile(a_blk, &b[c0 * dim..c1 * dim], dim, &mut chunk[c0..], cols);
            }
        });
}

#[inline]
fn by_value_then_index(row: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&x, &y| row[x].total_cmp(&row[y]).then(x.cmp(&y))
}

/// The `k` smallest entries of `row` ordered by `(value, index)`, optionally
/// skipping one column.
pub(crate) fn topk_row(row: &[f64], k: usize, skip: Option<usize>) -> Vec<Neighbor> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| Some(j) != skip).collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = by_value_then_index(row);
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, &cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(&cmp);
    idx.into_iter()
        .map(|j| Neighbor {
            index: j,
            distance: row[j],
        })
        .collect()
}

/// Per-row `k` smallest entries of `d`, ties broken by ascending column.
///
/// With `exclude_self` on a square matrix, column `i` is never selected for
/// row `i`. Rows with fewer than `k` candidates return all of them.
pub fn topk_smallest(d: &DistanceMatrix, k: usize, exclude_self: bool) -> TopK {
    let skip_diag = exclude_self && d.is_square();
    let rows = (0..d.rows())
        .into_par_iter()
        .map(|i| topk_row(d.row(i), k, skip_diag.then_some(i)))
        .collect();
    TopK { rows }
}

/// Top-`k` smallest squared distances of each row of `a` against `b`
/// without materializing the full distance matrix: rows are processed in
/// blocks whose scratch buffer holds about `budget` entries.
///
/// Produces exactly `topk_smallest(&pairwise_sq_euclidean(a, b, _)?, k, exclude_self)`.
pub fn topk_pairwise_sq(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    k: usize,
    exclude_self: bool,
    budget: usize,
) -> Result<TopK> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            context: "pairwise distance dimension",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let n = b.rows();
    let skip_diag = exclude_self && a.rows() == b.rows();
    let step = (budget / n.max(1)).clamp(1, a.rows());
    let dim = a.dim();
    let mut rows = Vec::with_capacity(a.rows());
    let mut scratch = Array2::<f64>::zeros((step, n));
    for r0 in (0..a.rows()).step_by(step) {
        let r1 = (r0 + step).min(a.rows());
        let mut view = scratch.slice_mut(s![..r1 - r0, ..]);
        sq_dist_into(
            &a.as_slice()[r0 * dim..r1 * dim],
            b.as_slice(),
            dim,
            DEFAULT_BLOCK,
            view.view_mut(),
        );
        let filled = scratch.as_slice().expect("standard layout");
        let block_rows: Vec<Vec<Neighbor>> = (r0..r1)
            .into_par_iter()
            .map(|i| {
                let off = (i - r0) * n;
                topk_row(&filled[off..off + n], k, skip_diag.then_some(i))
            })
            .collect();
        rows.extend(block_rows);
    }
    Ok(TopK { rows })
}
