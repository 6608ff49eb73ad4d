//! Asymmetric query/gallery distance refinement.
//!
//! Both the query-gallery and gallery-gallery squared-distance matrices are
//! reduced to their per-row top-`k2` entries (everything else replaced by a
//! fill value). Row-normalizing the two filtered matrices and multiplying
//! gives a query-by-gallery similarity `A` that says how closely the query's
//! neighborhood profile resembles each gallery item's own profile; the final
//! match score is the raw query-gallery distance minus `A`.
//!
//! The gallery-gallery matrix is never materialized by [`optimize`]: each of
//! its filtered rows is a constant fill plus `k2` kept entries, so similarities
//! are assembled from streamed top-`k2` lists.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    normalize_rows_in_place, pairwise_sq_euclidean, topk_pairwise_sq, topk_smallest,
    DistanceMatrix, FeatureMatrix, Neighbor, TopK, DEFAULT_BLOCK,
};

/// Scratch entries per streamed block of gallery-gallery distances.
const STREAM_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AroConfig {
    /// Neighborhood size kept per row.
    pub k2: usize,
    /// Value written over entries outside the kept neighborhood (0 or 1).
    pub fill_value: f64,
    pub enabled: bool,
}

impl Default for AroConfig {
    fn default() -> Self {
        Self {
            k2: 20,
            fill_value: 1.0,
            enabled: true,
        }
    }
}

impl AroConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k2 == 0 {
            return Err(Error::InvalidConfig("k2 must be at least 1".into()));
        }
        if self.fill_value != 0.0 && self.fill_value != 1.0 {
            return Err(Error::InvalidConfig(format!(
                "fill value must be 0 or 1, got {}",
                self.fill_value
            )));
        }
        Ok(())
    }
}

/// Squared query-gallery and gallery-gallery distances.
pub fn build_distance_pair(
    query: &FeatureMatrix,
    gallery: &FeatureMatrix,
) -> Result<(DistanceMatrix, DistanceMatrix)> {
    let qg = pairwise_sq_euclidean(query, gallery, DEFAULT_BLOCK)?;
    let gg = pairwise_sq_euclidean(gallery, gallery, DEFAULT_BLOCK)?;
    Ok((qg, gg))
}

/// Keeps each row's `k2` smallest entries (ties by column) and sets the rest
/// to `fill`. The diagonal of a square matrix is not treated specially.
pub fn neighborhood_filter(d: &DistanceMatrix, k2: usize, fill: f64) -> DistanceMatrix {
    let top = topk_smallest(d, k2, false);
    let mut out = Array2::from_elem((d.rows(), d.cols()), fill);
    for (i, row) in top.iter().enumerate() {
        for n in row {
            out[[i, n.index]] = n.distance;
        }
    }
    DistanceMatrix::from_trusted(out, d.is_squared())
}

/// `rownorm(qg) . rownorm(gg)^T`, clamped to `[0, 1]`. Zero rows give zero
/// similarity.
pub fn asymmetric_similarity(qg: &DistanceMatrix, gg: &DistanceMatrix) -> Result<DistanceMatrix> {
    if !gg.is_square() {
        return Err(Error::ShapeMismatch {
            context: "gallery-gallery matrix must be square",
            expected: gg.rows(),
            found: gg.cols(),
        });
    }
    if qg.cols() != gg.cols() {
        return Err(Error::ShapeMismatch {
            context: "query-gallery columns vs gallery size",
            expected: gg.cols(),
            found: qg.cols(),
        });
    }
    let mut q = qg.as_array().clone();
    let mut g = gg.as_array().clone();
    normalize_rows_in_place(q.view_mut())?;
    normalize_rows_in_place(g.view_mut())?;
    let mut a = q.dot(&g.t());
    a.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Ok(DistanceMatrix::from_trusted(a.as_standard_layout().into_owned(), false))
}

/// Similarity `A` for the given features without materializing the
/// gallery-gallery distances. `qg` must be the squared query-gallery matrix.
pub fn similarity_from_features(
    qg: &DistanceMatrix,
    gallery: &FeatureMatrix,
    cfg: &AroConfig,
) -> Result<DistanceMatrix> {
    cfg.validate()?;
    if qg.cols() != gallery.rows() {
        return Err(Error::ShapeMismatch {
            context: "query-gallery columns vs gallery size",
            expected: gallery.rows(),
            found: qg.cols(),
        });
    }
    let gg_top = topk_pairwise_sq(gallery, gallery, cfg.k2, false, STREAM_BUDGET)?;
    Ok(sparse_similarity(qg, &gg_top, cfg.k2, cfg.fill_value))
}

fn filtered_norm(kept: &[Neighbor], cols: usize, fill: f64) -> f64 {
    let filled = (cols - kept.len()) as f64;
    (fill * fill * filled + kept.iter().map(|n| n.distance * n.distance).sum::<f64>()).sqrt()
}

fn sparse_similarity(qg: &DistanceMatrix, gg_top: &TopK, k2: usize, fill: f64) -> DistanceMatrix {
    let ng = qg.cols();
    let g_norms: Vec<f64> = gg_top.iter().map(|row| filtered_norm(row, ng, fill)).collect();
    let q_top = topk_smallest(qg, k2, false);
    let mut a = Array2::<f64>::zeros((qg.rows(), ng));
    a.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(ng.max(1))
        .enumerate()
        .for_each(|(i, out)| {
            let kept = q_top.row(i);
            let q_norm = filtered_norm(kept, ng, fill);
            if q_norm == 0.0 {
                return;
            }
            let mut profile = vec![fill; ng];
            for n in kept {
                profile[n.index] = n.distance;
            }
            let total: f64 = profile.iter().sum();
            for (g, (o, g_row)) in out.iter_mut().zip(gg_top.iter()).enumerate() {
                if g_norms[g] == 0.0 {
                    continue;
                }
                let mut on_kept = 0.0;
                let mut profile_on_kept = 0.0;
                for n in g_row {
                    on_kept += profile[n.index] * n.distance;
                    profile_on_kept += profile[n.index];
                }
                let dot = on_kept + fill * (total - profile_on_kept);
                *o = (dot / (q_norm * g_norms[g])).clamp(0.0, 1.0);
            }
        });
    DistanceMatrix::from_trusted(a, false)
}

/// `qg - a`, element-wise. Entries may become negative.
pub fn adjust(qg: &DistanceMatrix, a: &DistanceMatrix) -> Result<DistanceMatrix> {
    if qg.rows() != a.rows() || qg.cols() != a.cols() {
        return Err(Error::ShapeMismatch {
            context: "similarity shape vs distance shape",
            expected: qg.rows() * qg.cols(),
            found: a.rows() * a.cols(),
        });
    }
    Ok(DistanceMatrix::from_trusted(qg.as_array() - a.as_array(), qg.is_squared()))
}

/// Refined query-gallery match scores. With `cfg.enabled == false` the raw
/// squared distances are returned untouched.
pub fn optimize(
    query: &FeatureMatrix,
    gallery: &FeatureMatrix,
    cfg: &AroConfig,
) -> Result<DistanceMatrix> {
    cfg.validate()?;
    let qg = pairwise_sq_euclidean(query, gallery, DEFAULT_BLOCK)?;
    if !cfg.enabled {
        return Ok(qg);
    }
    let a = similarity_from_features(&qg, gallery, cfg)?;
    adjust(&qg, &a)
}

/// Dense composition of [`build_distance_pair`], [`neighborhood_filter`] and
/// [`asymmetric_similarity`]. Quadratic in gallery size; meant for small
/// inputs and cross-checking.
pub fn optimize_dense(
    query: &FeatureMatrix,
    gallery: &FeatureMatrix,
    cfg: &AroConfig,
) -> Result<DistanceMatrix> {
    cfg.validate()?;
    let (qg, gg) = build_distance_pair(query, gallery)?;
    if !cfg.enabled {
        return Ok(qg);
    }
    let a = asymmetric_similarity(
        &neighborhood_filter(&qg, cfg.k2, cfg.fill_value),
        &neighborhood_filter(&gg, cfg.k2, cfg.fill_value),
    )?;
    adjust(&qg, &a)
}
