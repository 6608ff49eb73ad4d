//! In-memory orchestration shared by the subcommands.

use std::borrow::Cow;

use nrerank_core::aro::{adjust, similarity_from_features};
use nrerank_core::datagen::SyntheticSet;
use nrerank_core::dmon::enhance_pair;
use nrerank_core::eval::evaluate;
use nrerank_core::tensor::{pairwise_sq_euclidean, DEFAULT_BLOCK};
use nrerank_core::{DistanceMatrix, EvalReport, FeatureMatrix, Result, SampleLabels};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

/// Query-gallery match scores for `cfg`: optional feature enhancement
/// followed by optional asymmetric refinement. With both stages off this is
/// the raw squared distance matrix.
pub fn rerank(
    query: &FeatureMatrix,
    gallery: &FeatureMatrix,
    cfg: &PipelineConfig,
) -> Result<DistanceMatrix> {
    cfg.validate()?;
    let (eq, eg) = if cfg.dmon_on {
        let (q, g) = enhance_pair(query, gallery, &cfg.dmon, cfg.joint)?;
        (Cow::Owned(q), Cow::Owned(g))
    } else {
        (Cow::Borrowed(query), Cow::Borrowed(gallery))
    };
    let qg = pairwise_sq_euclidean(&eq, &eg, DEFAULT_BLOCK)?;
    if !cfg.aro_on {
        return Ok(qg);
    }
    let a = if cfg.aro_uses_enhanced || !cfg.dmon_on {
        similarity_from_features(&qg, &eg, &cfg.aro)?
    } else {
        let raw = pairwise_sq_euclidean(query, gallery, DEFAULT_BLOCK)?;
        similarity_from_features(&raw, gallery, &cfg.aro)?
    };
    adjust(&qg, &a)
}

/// A labelled query/gallery split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub query: FeatureMatrix,
    pub query_labels: SampleLabels,
    pub gallery: FeatureMatrix,
    pub gallery_labels: SampleLabels,
}

impl From<SyntheticSet> for Dataset {
    fn from(s: SyntheticSet) -> Self {
        Self {
            query: s.query,
            query_labels: s.query_labels,
            gallery: s.gallery,
            gallery_labels: s.gallery_labels,
        }
    }
}

pub fn rerank_and_evaluate(data: &Dataset, cfg: &PipelineConfig) -> Result<EvalReport> {
    let d = rerank(&data.query, &data.gallery, cfg)?;
    evaluate(&d, &data.query_labels, &data.gallery_labels, cfg.max_rank)
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub rank1: f64,
}

pub const ABLATION_ROWS: [(&str, bool, bool); 4] = [
    ("baseline", false, false),
    ("+ARO", false, true),
    ("+DMON", true, false),
    ("+DMON+ARO", true, true),
];

/// Baseline, +ARO, +DMON and +DMON+ARO under the shared settings of `cfg`.
pub fn ablation(data: &Dataset, cfg: &PipelineConfig) -> Result<Vec<AblationRow>> {
    ABLATION_ROWS
        .iter()
        .map(|&(name, dmon_on, aro_on)| {
            let r = rerank_and_evaluate(data, &cfg.with_stages(dmon_on, aro_on))?;
            Ok(AblationRow {
                model: name.to_string(),
                map: r.map,
                rank1: r.rank1(),
            })
        })
        .collect()
}

/// Values swept along each axis; the cartesian product is visited with
/// `k1` outermost and `orders` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub k1: Vec<usize>,
    pub k2: Vec<usize>,
    pub gamma: Vec<f64>,
    pub orders: Vec<usize>,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<(usize, usize, f64, usize)> {
        let mut out = Vec::new();
        for &k1 in &self.k1 {
            for &k2 in &self.k2 {
                for &gamma in &self.gamma {
                    for &orders in &self.orders {
                        out.push((k1, k2, gamma, orders));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `baseline` for the reference row, `grid` otherwise.
    pub kind: String,
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub gamma: Option<f64>,
    pub orders: Option<usize>,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub rank1: f64,
    #[serde(rename = "delta_mAP")]
    pub delta_map: f64,
    pub delta_rank1: f64,
}

/// Baseline reference row followed by one row per grid cell, in grid order.
/// Cells run in parallel.
pub fn sweep(data: &Dataset, base: &PipelineConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(nrerank_core::Error::InvalidConfig("sweep grid is empty".into()));
    }
    let reference = rerank_and_evaluate(data, &base.with_stages(false, false))?;
    let results = cells
        .par_iter()
        .map(|&(k1, k2, gamma, orders)| {
            let mut cfg = base.clone();
            cfg.dmon.k1 = k1;
            cfg.dmon.orders = orders;
            cfg.dmon.gamma = gamma;
            cfg.aro.k2 = k2;
            rerank_and_evaluate(data, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = vec![SweepRow {
        kind: "baseline".into(),
        k1: None,
        k2: None,
        gamma: None,
        orders: None,
        map: reference.map,
        rank1: reference.rank1(),
        delta_map: 0.0,
        delta_rank1: 0.0,
    }];
    rows.extend(cells.iter().zip(results).map(|(&(k1, k2, gamma, orders), r)| SweepRow {
        kind: "grid".into(),
        k1: Some(k1),
        k2: Some(k2),
        gamma: Some(gamma),
        orders: Some(orders),
        map: r.map,
        rank1: r.rank1(),
        delta_map: r.map - reference.map,
        delta_rank1: r.rank1() - reference.rank1(),
    }));
    Ok(rows)
}
