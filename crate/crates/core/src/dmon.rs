//! Dynamic multi-order neighbor feature enhancement.
//!
//! Each sample's feature is fused with a latent feature aggregated from its
//! neighbors at hop distances `1..=H` on the top-`k1` nearest-neighbor graph:
//!
//! ```text
//! W_h[x][y]  = exp(-D[x][y]^2 / (2 * (sigma * 1.5^h)^2))   for y in N_h(x), else 0
//! F_latent   = sum_h alpha_h * (W_h . F)
//! F'         = rownorm(gamma * F + (1 - gamma) * F_latent)
//! ```
//!
//! `N_1(x)` is the `k1` nearest other samples and `N_h(x)` is the union of
//! `N_1(y)` over `y` in `N_{h-1}(x)`, minus `x` itself.

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    l2_normalize_rows, normalize_rows_in_place, pairwise_sq_euclidean, topk_smallest,
    DistanceMatrix, FeatureMatrix, DEFAULT_BLOCK,
};

/// Growth factor of the kernel bandwidth per neighbor order.
pub const BANDWIDTH_GROWTH: f64 = 1.5;

/// How the base kernel bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// Use [`DmonConfig::sigma`] as given.
    Fixed,
    /// Mean first-order neighbor distance of the batch being enhanced.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmonConfig {
    /// First-order neighborhood size.
    pub k1: usize,
    /// Number of neighbor orders `H`.
    pub orders: usize,
    /// Weight of the original feature in the fusion.
    pub gamma: f64,
    pub sigma_mode: SigmaMode,
    /// Base bandwidth, used with [`SigmaMode::Fixed`].
    pub sigma: f64,
    /// Per-order decay; `None` means `0.5^(h-1)`.
    pub alphas: Option<Vec<f64>>,
    /// Rescale each non-empty weight row to sum to one.
    pub normalize_weight_rows: bool,
    /// Drop members of lower orders from each expanded order.
    pub disjoint_orders: bool,
    /// Enhance in contiguous chunks of at most this many rows.
    pub batch_size: Option<usize>,
    /// L2-normalize rows before computing neighbor distances.
    pub prenormalize: bool,
}

impl Default for DmonConfig {
    fn default() -> Self {
        Self {
            k1: 2,
            orders: 3,
            gamma: 0.75,
            sigma_mode: SigmaMode::Adaptive,
            sigma: 1.0,
            alphas: None,
            normalize_weight_rows: true,
            disjoint_orders: false,
            batch_size: None,
            prenormalize: true,
        }
    }
}

impl DmonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k1 == 0 {
            return bad("k1 must be at least 1".into());
        }
        if self.orders == 0 {
            return bad("number of neighbor orders must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if let Some(alphas) = &self.alphas {
            if alphas.len() < self.orders {
                return bad(format!(
                    "{} decay coefficients given for {} orders",
                    alphas.len(),
                    self.orders
                ));
            }
            if alphas.iter().any(|a| !a.is_finite()) {
                return bad("decay coefficients must be finite".into());
            }
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be at least 1".into());
        }
        Ok(())
    }

    /// Decay coefficients for orders `1..=H`.
    pub fn decay(&self) -> Vec<f64> {
        match &self.alphas {
            Some(a) => a[..self.orders].to_vec(),
            None => default_alphas(self.orders),
        }
    }
}

/// `[1, 0.5, 0.25, ...]` of length `orders`.
pub fn default_alphas(orders: usize) -> Vec<f64> {
    (0..orders).map(|h| 0.5f64.powi(h as i32)).collect()
}

/// Neighbor lists per order and sample. Order `h` is stored at level `h - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborOrders {
    levels: Vec<Vec<Vec<usize>>>,
}

impl NeighborOrders {
    pub fn order_count(&self) -> usize {
        self.levels.len()
    }

    pub fn samples(&self) -> usize {
        self.levels.first().map_or(0, Vec::len)
    }

    /// Lists of order `h` (1-based).
    pub fn level(&self, h: usize) -> &[Vec<usize>] {
        &self.levels[h - 1]
    }

    pub fn neighbors(&self, h: usize, x: usize) -> &[usize] {
        &self.levels[h - 1][x]
    }

    /// Appends order `H + 1`.
    pub fn expand(&mut self, disjoint: bool) {
        let n = self.samples();
        let first = &self.levels[0];
        let prev = self.levels.last().expect("level 1 present");
        // stamp[y] == x + 1 marks y as taken for sample x
        let mut in_level = vec![0usize; n];
        let mut in_lower = vec![0usize; n];
        let mut next = Vec::with_capacity(n);
        for x in 0..n {
            let tag = x + 1;
            if disjoint {
                for level in &self.levels {
                    for &y in &level[x] {
                        in_lower[y] = tag;
                    }
                }
            }
            let mut list = Vec::new();
            for &y in &prev[x] {
                for &z in &first[y] {
                    if z == x || in_level[z] == tag || (disjoint && in_lower[z] == tag) {
                        continue;
                    }
                    in_level[z] = tag;
                    list.push(z);
                }
            }
            next.push(list);
        }
        self.levels.push(next);
    }
}

/// First-order neighbors: the `k1` nearest other samples of each row of the
/// square matrix `d`. A `k1` of at least `N` is clamped to `N - 1`.
pub fn build_first_order(d: &DistanceMatrix, k1: usize) -> Result<NeighborOrders> {
    if !d.is_square() {
        return Err(Error::ShapeMismatch {
            context: "first-order neighbors need a square distance matrix",
            expected: d.rows(),
            found: d.cols(),
        });
    }
    let n = d.rows();
    let k = if k1 >= n {
        let clamped = n.saturating_sub(1);
        warn!("k1 = {k1} exceeds the {n} available samples; clamped to {clamped}");
        clamped
    } else {
        k1
    };
    let top = topk_smallest(d, k, true);
    let level = (0..n).map(|i| top.indices(i)).collect();
    Ok(NeighborOrders {
        levels: vec![level],
    })
}

/// Extends `orders` by one expansion step.
pub fn expand_order(mut orders: NeighborOrders, disjoint: bool) -> NeighborOrders {
    orders.expand(disjoint);
    orders
}

/// Builds orders `1..=h_max`.
pub fn build_orders(d: &DistanceMatrix, k1: usize, h_max: usize, disjoint: bool) -> Result<NeighborOrders> {
    let mut orders = build_first_order(d, k1)?;
    for _ in 1..h_max {
        orders.expand(disjoint);
    }
    Ok(orders)
}

fn unsquared(d: &DistanceMatrix, x: usize, y: usize) -> f64 {
    let v = d.get(x, y);
    if d.is_squared() {
        v.sqrt()
    } else {
        v
    }
}

fn squared(d: &DistanceMatrix, x: usize, y: usize) -> f64 {
    let v = d.get(x, y);
    if d.is_squared() {
        v
    } else {
        v * v
    }
}

/// Mean unsquared distance over all first-order neighbor pairs, or `1.0`
/// when every first-order list is empty.
pub fn adaptive_sigma(d: &DistanceMatrix, orders: &NeighborOrders) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, list) in orders.level(1).iter().enumerate() {
        for &y in list {
            sum += unsquared(d, x, y);
            count += 1;
        }
    }
    if count == 0 {
        1.0
    } else {
        sum / count as f64
    }
}

/// Sparse Gaussian weights per order; the support of each row is exactly the
/// neighbor list of that order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderWeights {
    samples: usize,
    levels: Vec<Vec<Vec<(usize, f64)>>>,
}

impl OrderWeights {
    pub fn order_count(&self) -> usize {
        self.levels.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Non-zero entries `(column, weight)` of row `x` at order `h` (1-based).
    pub fn row(&self, h: usize, x: usize) -> &[(usize, f64)] {
        &self.levels[h - 1][x]
    }

    pub fn weight(&self, h: usize, x: usize, y: usize) -> f64 {
        self.row(h, x)
            .iter()
            .find(|(c, _)| *c == y)
            .map_or(0.0, |&(_, w)| w)
    }

    /// Dense `N x N` form of order `h`.
    pub fn to_dense(&self, h: usize) -> Array2<f64> {
        let mut out = Array2::zeros((self.samples, self.samples));
        for (x, row) in self.levels[h - 1].iter().enumerate() {
            for &(y, w) in row {
                out[[x, y]] = w;
            }
        }
        out
    }
}

/// Kernel bandwidth of order `h` (1-based).
pub fn order_bandwidth(sigma: f64, h: usize) -> f64 {
    sigma * BANDWIDTH_GROWTH.powi(h as i32)
}

/// Gaussian weights `exp(-D^2 / (2 sigma_h^2))` on each order's neighbor
/// lists, optionally rescaled so every non-empty row sums to one.
pub fn gaussian_weights(
    d: &DistanceMatrix,
    orders: &NeighborOrders,
    sigma: f64,
    normalize_rows: bool,
) -> Result<OrderWeights> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let levels = (1..=orders.order_count())
        .map(|h| {
            let s = order_bandwidth(sigma, h);
            let denom = 2.0 * s * s;
            orders
                .level(h)
                .iter()
                .enumerate()
                .map(|(x, list)| {
                    let mut row: Vec<(usize, f64)> = list
                        .iter()
                        .map(|&y| (y, (-squared(d, x, y) / denom).exp()))
                        .collect();
                    if normalize_rows {
                        let total: f64 = row.iter().map(|e| e.1).sum();
                        if total > 0.0 {
                            row.iter_mut().for_each(|e| e.1 /= total);
                        }
                    }
                    row
                })
                .collect()
        })
        .collect();
    Ok(OrderWeights {
        samples: orders.samples(),
        levels,
    })
}

/// `sum_h alphas[h-1] * (W_h . F)`.
pub fn latent_features(w: &OrderWeights, f: &FeatureMatrix, alphas: &[f64]) -> Result<FeatureMatrix> {
    if w.samples() != f.rows() {
        return Err(Error::ShapeMismatch {
            context: "weight rows vs feature rows",
            expected: f.rows(),
            found: w.samples(),
        });
    }
    if alphas.len() < w.order_count() {
        return Err(Error::InvalidConfig(format!(
            "{} decay coefficients given for {} orders",
            alphas.len(),
            w.order_count()
        )));
    }
    let dim = f.dim();
    let mut out = Array2::<f64>::zeros((f.rows(), dim));
    let mut order_row = vec![0.0; dim];
    for (h, &alpha) in (1..=w.order_count()).zip(alphas) {
        for x in 0..f.rows() {
            let entries = w.row(h, x);
            if entries.is_empty() {
                continue;
            }
            order_row.fill(0.0);
            for &(y, wt) in entries {
                for (acc, v) in order_row.iter_mut().zip(f.row(y)) {
                    *acc += wt * v;
                }
            }
            for (o, v) in out.row_mut(x).iter_mut().zip(&order_row) {
                *o += alpha * v;
            }
        }
    }
    FeatureMatrix::new(out)
}

/// Enhances `f` according to `cfg`, batching contiguous row chunks when
/// `cfg.batch_size` is smaller than the sample count.
pub fn enhance(f: &FeatureMatrix, cfg: &DmonConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    match cfg.batch_size {
        Some(b) if b < f.rows() => {
            let parts = (0..f.rows())
                .step_by(b)
                .map(|r0| enhance_batch(&f.slice_rows(r0..(r0 + b).min(f.rows())), cfg))
                .collect::<Result<Vec<_>>>()?;
            FeatureMatrix::vstack(&parts)
        }
        _ => enhance_batch(f, cfg),
    }
}

fn enhance_batch(f: &FeatureMatrix, cfg: &DmonConfig) -> Result<FeatureMatrix> {
    if cfg.gamma == 1.0 {
        return l2_normalize_rows(f);
    }
    let base = if cfg.prenormalize {
        l2_normalize_rows(f)?
    } else {
        f.clone()
    };
    let d = pairwise_sq_euclidean(&base, &base, DEFAULT_BLOCK)?.into_unsquared();
    let orders = build_orders(&d, cfg.k1, cfg.orders, cfg.disjoint_orders)?;
    let sigma = match cfg.sigma_mode {
        SigmaMode::Fixed => cfg.sigma,
        SigmaMode::Adaptive => adaptive_sigma(&d, &orders),
    };
    // Degenerate batches (all first-order neighbors coincide) give sigma 0.
    let sigma = if sigma > 0.0 { sigma } else { 1.0 };
    let w = gaussian_weights(&d, &orders, sigma, cfg.normalize_weight_rows)?;
    drop(d);
    let latent = latent_features(&w, &base, &cfg.decay())?;
    let mut fused = base.into_inner();
    fused.zip_mut_with(latent.as_array(), |o, l| {
        *o = cfg.gamma * *o + (1.0 - cfg.gamma) * l;
    });
    normalize_rows_in_place(fused.view_mut())?;
    FeatureMatrix::new(fused)
}

/// Enhances query and gallery features, separately or as one joint set.
pub fn enhance_pair(
    query: &FeatureMatrix,
    gallery: &FeatureMatrix,
    cfg: &DmonConfig,
    joint: bool,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    if !joint {
        return Ok((enhance(query, cfg)?, enhance(gallery, cfg)?));
    }
    let both = enhance(&query.concat(gallery)?, cfg)?;
    let nq = query.rows();
    Ok((
        both.slice_rows(0..nq),
        both.slice_rows(nq..both.rows()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::collections::BTreeSet;

    fn line() -> DistanceMatrix {
        DistanceMatrix::new(
            array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]],
            false,
        )
        .unwrap()
    }

    #[test]
    fn first_order_on_a_line_breaks_ties_by_index() {
        let o = build_first_order(&line(), 1).unwrap();
        assert_eq!(o.level(1), &[vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn second_order_on_a_line() {
        let o = expand_order(build_first_order(&line(), 1).unwrap(), false);
        assert_eq!(o.neighbors(2, 2), &[0]);
        assert_eq!(o.neighbors(2, 0), &[] as &[usize]);
        assert_eq!(o.neighbors(2, 1), &[1usize; 0]);
    }

    #[test]
    fn clamped_k1_and_single_sample() {
        let d = DistanceMatrix::new(array![[0.0]], false).unwrap();
        let o = build_orders(&d, 3, 3, false).unwrap();
        assert!(o.neighbors(1, 0).is_empty());
        assert!(o.neighbors(2, 0).is_empty());
        assert_eq!(adaptive_sigma(&d, &o), 1.0);

        let o = build_first_order(&line(), 7).unwrap();
        assert_eq!(o.neighbors(1, 1), &[0, 2]);
    }

    #[test]
    fn disjoint_orders_drop_lower_members() {
        let o = build_orders(&line(), 2, 2, true).unwrap();
        // Every sample already reaches all others at order 1.
        for x in 0..3 {
            assert!(o.neighbors(2, x).is_empty());
        }
        let o = build_orders(&line(), 2, 2, false).unwrap();
        let got: BTreeSet<_> = o.neighbors(2, 0).iter().copied().collect();
        assert_eq!(got, BTreeSet::from([1, 2]));
    }

    #[test]
    fn constant_sigma() {
        let d = DistanceMatrix::new(array![[0.0, 0.5], [0.5, 0.0]], false).unwrap();
        let o = build_first_order(&d, 1).unwrap();
        assert_eq!(adaptive_sigma(&d, &o), 0.5);
    }

    #[test]
    fn kernel_values() {
        let d = DistanceMatrix::new(array![[0.0, 1.0, 0.0], [1.0, 0.0, 3.0], [0.0, 3.0, 0.0]], false)
            .unwrap();
        let o = build_orders(&d, 1, 2, false).unwrap();
        let w = gaussian_weights(&d, &o, 1.0, false).unwrap();
        // x0's nearest is x2 at distance 0
        assert_eq!(w.row(1, 0), &[(2, 1.0)]);
        // x2 -> x0 -> x2 is excluded, order-2 of x1 is N1(x0) = [x2]
        assert_eq!(o.neighbors(2, 1), &[2]);
        let expected = (-9.0f64 / (2.0 * 2.25 * 2.25)).exp();
        assert_eq!(w.weight(2, 1, 2), expected);
        assert_eq!(w.weight(1, 1, 2), 0.0);
    }

    #[test]
    fn order_two_bandwidth_example() {
        assert_eq!(order_bandwidth(1.0, 2), 2.25);
        let d = DistanceMatrix::new(
            array![[0.0, 0.5, 1.0], [0.5, 0.0, 0.6], [1.0, 0.6, 0.0]],
            false,
        )
        .unwrap();
        let o = build_orders(&d, 1, 2, false).unwrap();
        assert_eq!(o.neighbors(2, 2), &[0]);
        let w = gaussian_weights(&d, &o, 1.0, false).unwrap();
        assert!((w.weight(2, 2, 0) - 0.905_95).abs() < 1e-5);
    }

    #[test]
    fn one_hot_latent_row() {
        let d = DistanceMatrix::new(array![[0.0, 1.0], [1.0, 0.0]], false).unwrap();
        let o = build_first_order(&d, 1).unwrap();
        let w = gaussian_weights(&d, &o, 1.0, true).unwrap();
        let f = FeatureMatrix::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let l = latent_features(&w, &f, &[0.8]).unwrap();
        assert_eq!(l.as_array(), &array![[0.8 * 3.0, 0.8 * 4.0], [0.8 * 1.0, 0.8 * 2.0]]);
    }

    #[test]
    fn empty_support_gives_zero_latent() {
        let d = DistanceMatrix::new(array![[0.0]], false).unwrap();
        let o = build_orders(&d, 1, 2, false).unwrap();
        let w = gaussian_weights(&d, &o, 1.0, true).unwrap();
        let f = FeatureMatrix::new(array![[1.0, 2.0]]).unwrap();
        assert_eq!(latent_features(&w, &f, &[1.0, 0.5]).unwrap().as_array(), &array![[0.0, 0.0]]);
    }

    #[test]
    fn gamma_one_is_plain_normalization() {
        let f = FeatureMatrix::new(array![[3.0, 4.0], [1.0, 1.0], [0.0, 2.0]]).unwrap();
        let cfg = DmonConfig {
            gamma: 1.0,
            ..DmonConfig::default()
        };
        assert_eq!(enhance(&f, &cfg).unwrap(), l2_normalize_rows(&f).unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let f = FeatureMatrix::new(array![[1.0]]).unwrap();
        for cfg in [
            DmonConfig { k1: 0, ..Default::default() },
            DmonConfig { orders: 0, ..Default::default() },
            DmonConfig { gamma: 1.5, ..Default::default() },
            DmonConfig { sigma: 0.0, ..Default::default() },
            DmonConfig { alphas: Some(vec![1.0]), ..Default::default() },
            DmonConfig { batch_size: Some(0), ..Default::default() },
        ] {
            assert!(matches!(enhance(&f, &cfg), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn default_decay_is_geometric() {
        assert_eq!(default_alphas(4), vec![1.0, 0.5, 0.25, 0.125]);
        assert_eq!(DmonConfig::default().decay(), vec![1.0, 0.5, 0.25]);
    }
}
