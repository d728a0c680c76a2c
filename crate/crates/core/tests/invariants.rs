use std::collections::HashSet;

use mlpbsde::mlp::{mlp_expectation_check, MlpConfig};
use mlpbsde::pathgrid::{ceil_grid, floor_grid, interpolate, GridSpec};
use mlpbsde::problem::{builtin_problem, Family, ProblemParams};
use mlpbsde::randomness::{encode_elements, node_draws};
use mlpbsde::{MasterSeed, ThetaPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn distinct_paths_give_uncorrelated_draws() {
    let seed = MasterSeed(77);
    let pairs: [(fn(i64) -> Vec<i64>, fn(i64) -> Vec<i64>); 3] = [
        (|i| vec![1, i], |i| vec![2, i]),
        (|i| vec![1, i], |i| vec![1, i, 0]),
        (|i| vec![0, -i], |i| vec![0, i]),
    ];
    for (left, right) in pairs {
        let (mut r1, mut r2, mut z1, mut z2) = (vec![], vec![], vec![], vec![]);
        for i in 1..=100_000i64 {
            let a = node_draws(seed, &ThetaPath::new(left(i)), 2).unwrap();
            let b = node_draws(seed, &ThetaPath::new(right(i)), 2).unwrap();
            r1.push(a.r);
            r2.push(b.r);
            z1.push(a.z[1]);
            z2.push(b.z[1]);
        }
        assert!(correlation(&r1, &r2).abs() < 0.01);
        assert!(correlation(&z1, &z2).abs() < 0.01);
    }
}

#[test]
fn encoding_is_injective() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut paths = HashSet::new();
    let mut encodings = HashSet::new();
    for _ in 0..1_000_000 {
        let len = rng.gen_range(0..6);
        let p: Vec<i64> = (0..len).map(|_| rng.gen_range(-3..=3)).collect();
        encodings.insert(encode_elements(&p));
        paths.insert(p);
    }
    assert_eq!(paths.len(), encodings.len());
}

#[test]
fn first_iterate_is_unbiased() {
    let e = (-0.5f64).exp();
    let exp_truth = (0.01f64 / 2.0).exp() + 0.1;
    for (family, truth) in [
        (Family::CosZero, e),
        (Family::CosAffine, e + 0.1),
        (Family::CosSine, e),
        (Family::ExpAffine, exp_truth),
    ] {
        let p = builtin_problem(family, 1, &ProblemParams::default()).unwrap();
        let cfg = MlpConfig::new(1, 3).unwrap();
        let (mean, se) = mlp_expectation_check(&p, cfg, 0.0, 0.0, 10_000, MasterSeed(21)).unwrap();
        assert!((mean - truth).abs() <= 4.0 * se, "{family}: {mean} +- {se} vs {truth}");
        let (at_t, se_t) = mlp_expectation_check(&p, cfg, 1.0, 0.4, 10, MasterSeed(1)).unwrap();
        assert_eq!((at_t, se_t), (p.terminal.evaluate(&[0.4]), 0.0));
    }
}

#[test]
fn interpolation_weights_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10_000 {
        let horizon = rng.gen_range(0.1..5.0);
        let cells = rng.gen_range(1..=256u64);
        let t = rng.gen_range(0.0..horizon);
        let (lo, hi) = (floor_grid(t, cells, horizon).unwrap(), ceil_grid(t, cells, horizon).unwrap());
        let h = horizon / cells as f64;
        assert!(((hi - t) / h + (t - lo) / h - 1.0).abs() < 1e-12);
    }
}

#[test]
fn telescoping_of_identical_levels() {
    let y = |t: f64| (3.0 * t).sin() + t * t;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for m in 1..=4u32 {
        for n in 1..=4u32 {
            let level = |l: u32| {
                let g = GridSpec::new(m, l, 1.0).unwrap();
                let v: Vec<f64> = (0..g.node_count() as u64).map(|k| y(g.node(k))).collect();
                (g, v)
            };
            for _ in 0..200 {
                let t = rng.gen_range(0.0..=1.0);
                let mut sum = 0.0;
                for l in 0..n {
                    let (g, v) = level(l + 1);
                    sum += interpolate(&v, &g, t).unwrap();
                    if l >= 1 {
                        let (g, v) = level(l);
                        sum -= interpolate(&v, &g, t).unwrap();
                    }
                }
                let (g, v) = level(n);
                assert!((sum - interpolate(&v, &g, t).unwrap()).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn grids_are_nested() {
    for m in 1..=6u32 {
        for l in 0..5u32 {
            let coarse = GridSpec::new(m, l, 1.0).unwrap();
            let fine = GridSpec::new(m, l + 1, 1.0).unwrap();
            for k in 0..coarse.node_count() as u64 {
                assert_eq!(coarse.node(k), fine.node(k * m as u64));
            }
        }
    }
}
