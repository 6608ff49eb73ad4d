//! Seeded synthetic identity clusters.
//!
//! Each identity gets a center drawn uniformly on the unit sphere, each camera
//! a fixed offset of norm `cam_offset_scale`, and each sample is
//! `normalize(center + offset[cam] + N(0, intra_noise^2) per coordinate)`.
//!
//! All randomness comes from one ChaCha8 stream (`rand_chacha::ChaCha8Rng`)
//! seeded with [`SynthSpec::seed`], which is reproducible across platforms.
//! Draw order: identity centers, camera offsets, then per identity the
//! sample cameras, the query selection and the per-sample noise.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Label, SampleLabels};
use crate::tensor::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_ids: usize,
    pub imgs_per_id: usize,
    pub dim: usize,
    pub num_cams: usize,
    /// Standard deviation of the per-coordinate Gaussian noise.
    pub intra_noise: f64,
    /// Norm of each camera's offset vector.
    pub cam_offset_scale: f64,
    /// Share of each identity's samples used as queries.
    pub query_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_ids: 50,
            imgs_per_id: 10,
            dim: 64,
            num_cams: 4,
            intra_noise: 0.35,
            cam_offset_scale: 0.25,
            query_fraction: 0.2,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_ids < 2 {
            return bad(format!("need at least 2 identities, got {}", self.num_ids));
        }
        if self.imgs_per_id < 2 {
            return bad(format!("need at least 2 samples per identity, got {}", self.imgs_per_id));
        }
        if self.num_cams < 2 {
            return bad(format!(
                "need at least 2 cameras for cross-camera queries, got {}",
                self.num_cams
            ));
        }
        if self.dim == 0 {
            return bad("dimension must be at least 1".into());
        }
        if !(self.intra_noise.is_finite() && self.intra_noise >= 0.0) {
            return bad(format!("intra noise must be >= 0, got {}", self.intra_noise));
        }
        if !(self.cam_offset_scale.is_finite() && self.cam_offset_scale >= 0.0) {
            return bad(format!("camera offset must be >= 0, got {}", self.cam_offset_scale));
        }
        if !(self.query_fraction > 0.0 && self.query_fraction < 1.0) {
            return bad(format!("query fraction must lie in (0, 1), got {}", self.query_fraction));
        }
        Ok(())
    }

    /// Queries drawn per identity; at least one sample always stays in the gallery.
    pub fn queries_per_id(&self) -> usize {
        ((self.query_fraction * self.imgs_per_id as f64).ceil() as usize).clamp(1, self.imgs_per_id - 1)
    }
}

/// Generated query and gallery sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub query: FeatureMatrix,
    pub query_labels: SampleLabels,
    pub gallery: FeatureMatrix,
    pub gallery_labels: SampleLabels,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SyntheticSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;
    let centers: Vec<Vec<f64>> = (0..spec.num_ids).map(|_| random_unit(&mut rng, dim)).collect();
    let offsets: Vec<Vec<f64>> = (0..spec.num_cams)
        .map(|_| {
            random_unit(&mut rng, dim)
                .into_iter()
                .map(|x| x * spec.cam_offset_scale)
                .collect()
        })
        .collect();

    let nq = spec.queries_per_id();
    let mut q_rows = Vec::new();
    let mut q_labels = Vec::new();
    let mut g_rows = Vec::new();
    let mut g_labels = Vec::new();
    for (pid, center) in centers.iter().enumerate() {
        let mut cams: Vec<usize> = (0..spec.imgs_per_id)
            .map(|_| rng.gen_range(0..spec.num_cams))
            .collect();
        let mut order: Vec<usize> = (0..spec.imgs_per_id).collect();
        order.shuffle(&mut rng);
        let mut is_query = vec![false; spec.imgs_per_id];
        for &s in &order[..nq] {
            is_query[s] = true;
        }
        // A gallery on a single camera cannot match queries from that camera.
        let gallery_cams: Vec<usize> = (0..spec.imgs_per_id)
            .filter(|&s| !is_query[s])
            .map(|s| cams[s])
            .collect();
        if gallery_cams.iter().all(|&c| c == gallery_cams[0]) {
            let only = gallery_cams[0];
            for s in 0..spec.imgs_per_id {
                if is_query[s] && cams[s] == only {
                    cams[s] = (only + 1) % spec.num_cams;
                }
            }
        }
        for s in 0..spec.imgs_per_id {
            let offset = &offsets[cams[s]];
            let mut v: Vec<f64> = center
                .iter()
                .zip(offset)
                .map(|(c, o)| {
                    let noise: f64 = rng.sample(StandardNormal);
                    c + o + spec.intra_noise * noise
                })
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            let label = Label {
                pid: pid as u32,
                camid: cams[s] as u32,
            };
            if is_query[s] {
                q_rows.extend(v);
                q_labels.push(label);
            } else {
                g_rows.extend(v);
                g_labels.push(label);
            }
        }
    }
    let nq_total = q_labels.len();
    let ng_total = g_labels.len();
    Ok(SyntheticSet {
        query: FeatureMatrix::new(Array2::from_shape_vec((nq_total, dim), q_rows).expect("sized"))?,
        query_labels: SampleLabels::new(q_labels),
        gallery: FeatureMatrix::new(Array2::from_shape_vec((ng_total, dim), g_rows).expect("sized"))?,
        gallery_labels: SampleLabels::new(g_labels),
    })
}
