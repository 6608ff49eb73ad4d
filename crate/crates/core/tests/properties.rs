use ndarray::Array2;
use nrerank_core::aro::{neighborhood_filter, optimize, similarity_from_features, AroConfig};
use nrerank_core::datagen::{generate, SynthSpec};
use nrerank_core::dmon::{build_orders, enhance, gaussian_weights, DmonConfig, SigmaMode};
use nrerank_core::eval::evaluate;
use nrerank_core::io::labels::labels_to_string;
use nrerank_core::io::{read_labels, read_npy, to_npy_bytes, Precision};
use nrerank_core::tensor::{pairwise_sq_euclidean, topk_smallest};
use nrerank_core::{DistanceMatrix, FeatureMatrix, SampleLabels};
use proptest::prelude::*;

fn features(max_rows: usize, max_dim: usize) -> impl Strategy<Value = FeatureMatrix> {
    (2..=max_rows, 1..=max_dim).prop_flat_map(|(r, d)| {
        proptest::collection::vec(-1.0f64..1.0, r * d).prop_map(move |v| {
            let mut a = Array2::from_shape_vec((r, d), v).unwrap();
            // keep rows away from the origin so normalization is well defined
            for mut row in a.rows_mut() {
                row[0] += 3.0;
            }
            FeatureMatrix::new(a).unwrap()
        })
    })
}

fn permute(f: &FeatureMatrix, perm: &[usize]) -> FeatureMatrix {
    let a = f.as_array();
    FeatureMatrix::new(Array2::from_shape_fn(a.dim(), |(i, j)| a[[perm[i], j]])).unwrap()
}

fn rotation(n: usize, shift: usize) -> Vec<usize> {
    (0..n).map(|i| (i + shift) % n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairwise_is_block_invariant(a in features(20, 6), b in features(20, 6), block in 1usize..25) {
        prop_assume!(a.dim() == b.dim());
        let whole = pairwise_sq_euclidean(&a, &b, 1 << 20).unwrap();
        let blocked = pairwise_sq_euclidean(&a, &b, block).unwrap();
        prop_assert_eq!(whole.as_slice(), blocked.as_slice());
    }

    #[test]
    fn self_distances_are_symmetric_with_zero_diagonal(a in features(20, 6)) {
        let d = pairwise_sq_euclidean(&a, &a, 7).unwrap();
        for i in 0..a.rows() {
            prop_assert_eq!(d.get(i, i), 0.0);
            for j in 0..a.rows() {
                prop_assert_eq!(d.get(i, j), d.get(j, i));
                prop_assert!(d.get(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn pairwise_is_permutation_equivariant(a in features(15, 5), shift in 0usize..15) {
        let perm = rotation(a.rows(), shift);
        let d = pairwise_sq_euclidean(&a, &a, 4).unwrap();
        let p = permute(&a, &perm);
        let dp = pairwise_sq_euclidean(&p, &p, 4).unwrap();
        for i in 0..a.rows() {
            for j in 0..a.rows() {
                prop_assert_eq!(dp.get(i, j), d.get(perm[i], perm[j]));
            }
        }
    }

    #[test]
    fn topk_rows_are_sorted_and_exclude_self(a in features(20, 4), k in 1usize..8) {
        let d = pairwise_sq_euclidean(&a, &a, 8).unwrap();
        let t = topk_smallest(&d, k, true);
        for (i, row) in t.iter().enumerate() {
            prop_assert_eq!(row.len(), k.min(a.rows() - 1));
            prop_assert!(row.iter().all(|n| n.index != i));
            for w in row.windows(2) {
                prop_assert!((w[0].distance, w[0].index) < (w[1].distance, w[1].index));
            }
        }
    }

    #[test]
    fn enhanced_rows_are_unit_norm(f in features(25, 6), k1 in 1usize..4, orders in 1usize..4, gamma in 0.0f64..1.0) {
        let cfg = DmonConfig { k1, orders, gamma, ..DmonConfig::default() };
        let out = enhance(&f, &cfg).unwrap();
        for row in out.as_array().rows() {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_skip_diagonal_and_are_bounded(f in features(20, 4), k1 in 1usize..4, normalize in any::<bool>()) {
        let d = pairwise_sq_euclidean(&f, &f, 8).unwrap().into_unsquared();
        let o = build_orders(&d, k1, 3, false).unwrap();
        let w = gaussian_weights(&d, &o, 0.5, normalize).unwrap();
        for h in 1..=3 {
            let dense = w.to_dense(h);
            for x in 0..f.rows() {
                prop_assert_eq!(dense[[x, x]], 0.0);
                let s: f64 = dense.row(x).sum();
                prop_assert!(dense.row(x).iter().all(|&v| (0.0..=1.0).contains(&v)));
                if normalize && !o.neighbors(h, x).is_empty() {
                    prop_assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn enhancement_is_permutation_equivariant(f in features(18, 4), shift in 0usize..18) {
        // A rotation keeps relative order for ties only when none occur, which
        // holds almost surely for continuous draws.
        let perm = rotation(f.rows(), shift);
        let cfg = DmonConfig::default();
        let out = enhance(&f, &cfg).unwrap();
        let outp = enhance(&permute(&f, &perm), &cfg).unwrap();
        for i in 0..f.rows() {
            for j in 0..f.dim() {
                prop_assert!((outp.row(i)[j] - out.row(perm[i])[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn batched_enhancement_is_deterministic(f in features(30, 4), batch in 2usize..12) {
        let cfg = DmonConfig { batch_size: Some(batch), ..DmonConfig::default() };
        let a = enhance(&f, &cfg).unwrap();
        let b = enhance(&f, &cfg).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn similarity_is_bounded(q in features(10, 4), g in features(15, 4), k2 in 1usize..20, fill in prop_oneof![Just(0.0), Just(1.0)]) {
        prop_assume!(q.dim() == g.dim());
        let qg = pairwise_sq_euclidean(&q, &g, 8).unwrap();
        let a = similarity_from_features(&qg, &g, &AroConfig { k2, fill_value: fill, enabled: true }).unwrap();
        prop_assert!(a.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn filter_keeps_exactly_k2(q in features(10, 3), g in features(15, 3), k2 in 1usize..20) {
        prop_assume!(q.dim() == g.dim());
        let d = pairwise_sq_euclidean(&q, &g, 8).unwrap();
        let f = neighborhood_filter(&d, k2, f64::NAN);
        for i in 0..q.rows() {
            let kept = f.row(i).iter().filter(|v| !v.is_nan()).count();
            prop_assert_eq!(kept, k2.min(g.rows()));
        }
    }

    #[test]
    fn refined_row_depends_only_on_its_query(q in features(8, 3), g in features(12, 3), k2 in 1usize..12) {
        prop_assume!(q.dim() == g.dim());
        let cfg = AroConfig { k2, ..AroConfig::default() };
        let full = optimize(&q, &g, &cfg).unwrap();
        for i in 0..q.rows() {
            let single = optimize(&q.slice_rows(i..i + 1), &g, &cfg).unwrap();
            prop_assert_eq!(single.row(0), full.row(i));
        }
    }

    #[test]
    fn refinement_is_gallery_permutation_equivariant(q in features(6, 3), g in features(12, 3), shift in 0usize..12) {
        prop_assume!(q.dim() == g.dim());
        let perm = rotation(g.rows(), shift);
        let cfg = AroConfig { k2: 4, ..AroConfig::default() };
        let d = optimize(&q, &g, &cfg).unwrap();
        let dp = optimize(&q, &permute(&g, &perm), &cfg).unwrap();
        for i in 0..q.rows() {
            for j in 0..g.rows() {
                prop_assert!((dp.get(i, j) - d.get(i, perm[j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cmc_is_monotone_and_map_ignores_monotone_maps(
        vals in proptest::collection::vec(0.0f64..10.0, 6 * 20),
        pids in proptest::collection::vec(0u32..4, 20),
        cams in proptest::collection::vec(0u32..3, 20),
    ) {
        let d = DistanceMatrix::new(Array2::from_shape_vec((6, 20), vals).unwrap(), true).unwrap();
        let q = SampleLabels::from_pairs((0..6).map(|i| (i % 4, 3)));
        let g = SampleLabels::from_pairs(pids.iter().copied().zip(cams.iter().copied()));
        let base = evaluate(&d, &q, &g, 20);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        for w in base.cmc.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert!(base.cmc.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((0.0..=1.0).contains(&base.map));
        for f in [|x: f64| 2.0 * x + 1.0, |x: f64| x * x * x] {
            let t = DistanceMatrix::new(d.as_array().mapv(f), true).unwrap();
            let r = evaluate(&t, &q, &g, 20).unwrap();
            prop_assert_eq!(r.map, base.map);
            prop_assert_eq!(&r.cmc, &base.cmc);
        }
    }

    #[test]
    fn npy_round_trips(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>(), f64p in any::<bool>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = if rows == 0 || cols == 0 { (0, 0) } else { (rows, cols) };
        let a = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1e3f32..1e3) as f64);
        let p = if f64p { Precision::F64 } else { Precision::F32 };
        let bytes = to_npy_bytes(a.view(), p);
        let back = read_npy(&bytes[..]).unwrap();
        prop_assert_eq!(&back, &a);
        prop_assert_eq!(to_npy_bytes(back.view(), p), bytes);
    }

    #[test]
    fn labels_round_trip(pairs in proptest::collection::vec((any::<u32>(), any::<u32>()), 1..40)) {
        let labels = SampleLabels::from_pairs(pairs);
        let text = labels_to_string(&labels);
        let back = read_labels(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &labels);
        prop_assert_eq!(labels_to_string(&back), text);
    }

    #[test]
    fn synthetic_sets_have_cross_camera_positives(ids in 2usize..12, per in 2usize..6, cams in 2usize..4, seed in any::<u64>()) {
        let spec = SynthSpec { num_ids: ids, imgs_per_id: per, num_cams: cams, dim: 8, seed, ..SynthSpec::default() };
        let set = generate(&spec).unwrap();
        prop_assert_eq!(set.query.rows() + set.gallery.rows(), ids * per);
        for q in set.query_labels.iter() {
            prop_assert!(set.gallery_labels.iter().any(|g| g.pid == q.pid && g.camid != q.camid));
        }
        let again = generate(&spec).unwrap();
        prop_assert_eq!(again.query.as_slice(), set.query.as_slice());
        prop_assert_eq!(again.gallery.as_slice(), set.gallery.as_slice());
    }
}

#[test]
fn gamma_one_is_identity_after_normalization() {
    let set = generate(&SynthSpec { dim: 8, ..SynthSpec::default() }).unwrap();
    let cfg = DmonConfig { gamma: 1.0, ..DmonConfig::default() };
    let out = enhance(&set.gallery, &cfg).unwrap();
    let plain = nrerank_core::tensor::l2_normalize_rows(&set.gallery).unwrap();
    assert_eq!(out.as_slice(), plain.as_slice());
}

#[test]
fn decay_defaults_are_dominated_by_first_order() {
    let cfg = DmonConfig { orders: 5, ..DmonConfig::default() };
    let a = cfg.decay();
    assert!(a.windows(2).all(|w| w[0] > w[1]));
}

#[test]
fn fixed_sigma_and_literal_weights_still_give_unit_rows() {
    let set = generate(&SynthSpec::default()).unwrap();
    let cfg = DmonConfig {
        sigma_mode: SigmaMode::Fixed,
        sigma: 0.3,
        normalize_weight_rows: false,
        disjoint_orders: true,
        ..DmonConfig::default()
    };
    let out = enhance(&set.gallery, &cfg).unwrap();
    for row in out.as_array().rows() {
        assert!((row.dot(&row) - 1.0).abs() < 1e-9);
    }
}

fn mean_intra_inter(f: &FeatureMatrix, labels: &SampleLabels) -> (f64, f64) {
    let d = pairwise_sq_euclidean(f, f, 64).unwrap();
    let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..f.rows() {
        for j in 0..f.rows() {
            if i == j {
                continue;
            }
            if labels.get(i).pid == labels.get(j).pid {
                intra += d.get(i, j);
                ni += 1.0;
            } else {
                inter += d.get(i, j);
                ne += 1.0;
            }
        }
    }
    (intra / ni, inter / ne)
}

#[test]
fn enhancement_compacts_identities() {
    let spec = SynthSpec { intra_noise: 0.15, ..SynthSpec::default() };
    let set = generate(&spec).unwrap();
    let raw = nrerank_core::tensor::l2_normalize_rows(&set.gallery).unwrap();
    let out = enhance(&set.gallery, &DmonConfig::default()).unwrap();
    let (ri, re) = mean_intra_inter(&raw, &set.gallery_labels);
    let (ei, ee) = mean_intra_inter(&out, &set.gallery_labels);
    assert!(ei / ee < ri / re, "ratio {} -> {}", ri / re, ei / ee);
}
