//! Retrieval evaluation: CMC and mAP with the usual re-identification junk
//! rule (gallery items sharing both identity and camera with the query are
//! ignored for that query).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DistanceMatrix;

/// Identity and camera label of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    pub pid: u32,
    pub camid: u32,
}

/// Labels of a query or gallery set, in sample order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SampleLabels(Vec<Label>);

impl SampleLabels {
    pub fn new(labels: Vec<Label>) -> Self {
        Self(labels)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        Self(
            pairs
                .into_iter()
                .map(|(pid, camid)| Label { pid, camid })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Label {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Label> {
        self.0.iter()
    }

    /// Labels of a contiguous sub-range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self(self.0[range].to_vec())
    }
}

/// Cumulative match curve and mean average precision of a ranked run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `cmc[r]` is the fraction of valid queries matched within rank `r + 1`.
    pub cmc: Vec<f64>,
    #[serde(rename = "mAP")]
    pub map: f64,
    #[serde(rename = "valid_queries")]
    pub num_valid_queries: usize,
    #[serde(rename = "invalid_queries", default)]
    pub num_invalid_queries: usize,
}

impl EvalReport {
    pub fn rank1(&self) -> f64 {
        self.cmc.first().copied().unwrap_or(0.0)
    }

    /// CMC at 1-based rank `r`, saturating at the last computed rank.
    pub fn rank(&self, r: usize) -> f64 {
        match self.cmc.len() {
            0 => 0.0,
            n => self.cmc[r.clamp(1, n) - 1],
        }
    }
}

/// Gallery indices by ascending distance, ties by ascending index.
pub fn rank_gallery(row: &[f64]) -> Result<Vec<usize>> {
    if let Some(col) = row.iter().position(|v| v.is_nan()) {
        return Err(Error::NanDistance { col });
    }
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Average precision of a ranked relevance list, or `None` when it holds no
/// positive.
pub fn average_precision(matches: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (t, _) in matches.iter().enumerate().filter(|(_, m)| **m) {
        hits += 1;
        sum += hits as f64 / (t + 1) as f64;
    }
    (hits > 0).then(|| sum / hits as f64)
}

struct QueryOutcome {
    first_hit: usize,
    ap: f64,
}

fn evaluate_query(row: &[f64], query: Label, gallery: &SampleLabels) -> Result<Option<QueryOutcome>> {
    let order = rank_gallery(row)?;
    let matches: Vec<bool> = order
        .into_iter()
        .map(|j| gallery.get(j))
        .filter(|g| !(g.pid == query.pid && g.camid == query.camid))
        .map(|g| g.pid == query.pid)
        .collect();
    Ok(average_precision(&matches).map(|ap| QueryOutcome {
        first_hit: matches.iter().position(|&m| m).expect("has a positive"),
        ap,
    }))
}

/// CMC up to `max_rank` (capped at the gallery size) and mAP over the queries
/// that keep at least one positive after junk removal.
pub fn evaluate(
    d: &DistanceMatrix,
    query: &SampleLabels,
    gallery: &SampleLabels,
    max_rank: usize,
) -> Result<EvalReport> {
    if query.len() != d.rows() {
        return Err(Error::ShapeMismatch {
            context: "query labels vs distance rows",
            expected: d.rows(),
            found: query.len(),
        });
    }
    if gallery.len() != d.cols() {
        return Err(Error::ShapeMismatch {
            context: "gallery labels vs distance columns",
            expected: d.cols(),
            found: gallery.len(),
        });
    }
    let max_rank = max_rank.min(d.cols()).max(1);
    let outcomes = (0..d.rows())
        .into_par_iter()
        .map(|i| evaluate_query(d.row(i), query.get(i), gallery))
        .collect::<Result<Vec<_>>>()?;

    let mut cmc = vec![0.0; max_rank];
    let mut ap_sum = 0.0;
    let mut valid = 0usize;
    for o in outcomes.iter().flatten() {
        valid += 1;
        ap_sum += o.ap;
        for c in cmc.iter_mut().skip(o.first_hit) {
            *c += 1.0;
        }
    }
    if valid == 0 {
        return Err(Error::NoValidQueries { total: d.rows() });
    }
    cmc.iter_mut().for_each(|c| *c /= valid as f64);
    Ok(EvalReport {
        cmc,
        map: ap_sum / valid as f64,
        num_valid_queries: valid,
        num_invalid_queries: d.rows() - valid,
    })
}
