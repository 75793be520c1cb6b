use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ran_core::dataset::{gen_two_moons, DataMatrix, LabeledDataset};
use ran_core::eval::{evaluate_method, sweep_k, write_sweep_csv, RanMethod};
use ran_core::ranking::{ran_solve, rank_order, QueryVector, RankConfig};

fn two_clusters(seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (label, cx) in [(0, -3.0), (1, 3.0)] {
        for _ in 0..20 {
            rows.push(vec![cx + noise.sample(&mut rng), noise.sample(&mut rng)]);
            labels.push(label);
        }
    }
    LabeledDataset::new(DataMatrix::from_rows(&rows).unwrap(), labels).unwrap()
}

#[test]
fn separated_clusters_rank_own_cluster_first() {
    let ds = two_clusters(5);
    let y = QueryVector::from_indices(40, &[0]).unwrap();
    let r = ran_solve(
        &ds.data,
        &y,
        &RankConfig {
            k: 5,
            ..RankConfig::default()
        },
    )
    .unwrap();
    assert!(r.converged);
    let order = rank_order(&r.scores, &[0]);
    assert!(order[..19].iter().all(|&i| ds.labels[i] == 0), "{order:?}");
    assert!((r.scores[0] - 1.0).abs() < 1e-6);
}

#[test]
fn permuting_points_permutes_scores() {
    let ds = gen_two_moons(30, 0.1, 2).unwrap();
    let n = ds.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let permuted = ds.data.select_rows(&perm).unwrap();
    let q = 4;
    let q_new = perm.iter().position(|&p| p == q).unwrap();
    let cfg = RankConfig {
        k: 5,
        ..RankConfig::default()
    };

    let a = ran_solve(&ds.data, &QueryVector::from_indices(n, &[q]).unwrap(), &cfg).unwrap();
    let b = ran_solve(
        &permuted,
        &QueryVector::from_indices(n, &[q_new]).unwrap(),
        &cfg,
    )
    .unwrap();
    assert_eq!(a.iterations, b.iterations);
    for (new_i, &old_i) in perm.iter().enumerate() {
        let (x, y) = (a.scores[old_i], b.scores[new_i]);
        assert!(
            (x - y).abs() <= 1e-9 * x.abs().max(1e-300),
            "point {old_i}: {x} vs {y}"
        );
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let ds = gen_two_moons(40, 0.1, 3).unwrap();
    let cfg = RankConfig {
        k: 5,
        ..RankConfig::default()
    };
    let run = || {
        let m = RanMethod::new(&ds.data, cfg.clone()).unwrap();
        evaluate_method(&ds, &m, 10).unwrap()
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(single, many);
}

#[test]
fn usps_shaped_input_runs() {
    // 10 classes of 40 points in 256 dimensions
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let centers: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..256).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..40 {
            rows.push(center.iter().map(|&x| x + noise.sample(&mut rng)).collect());
            labels.push(c as i64);
        }
    }
    let ds = LabeledDataset::new(DataMatrix::from_rows(&rows).unwrap(), labels).unwrap();
    let report = evaluate_method(
        &ds,
        &RanMethod::new(&ds.data, RankConfig::default()).unwrap(),
        50,
    )
    .unwrap();
    assert_eq!(report.per_query.len(), 400);
    assert!(report.mean_precision > 70.0, "{}", report.mean_precision);
    assert!(report.mean_recall <= 100.0);
}

#[test]
fn sweep_with_single_and_repeated_k() {
    let ds = two_clusters(6);
    let cfg = RankConfig::default();
    let one = sweep_k(&ds, &[5], &cfg, 10).unwrap();
    assert_eq!(one.len(), 1);
    let twice = sweep_k(&ds, &[5, 5], &cfg, 10).unwrap();
    assert_eq!(twice[0], twice[1]);
    assert_eq!(twice[0], one[0]);

    let mut out = Vec::new();
    write_sweep_csv(&twice, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("k,precision,recall\n5,100.00,"));
}

#[test]
fn sweep_rejects_empty_and_out_of_range_k() {
    let ds = two_clusters(6);
    assert!(sweep_k(&ds, &[], &RankConfig::default(), 10).is_err());
    assert!(sweep_k(&ds, &[5, 40], &RankConfig::default(), 10).is_err());
}
