//! Second implementations of the estimators, written out by hand for
//! n = 2, M = 2, and compared bit for bit.

use mlpbsde::mlp::{mlp_evaluate, CostCounters, MlpConfig};
use mlpbsde::pathgrid::{interpolate, path_estimate, path_value, GridSpec};
use mlpbsde::problem::{builtin_problem, BsdeProblem, Family, ProblemParams};
use mlpbsde::randomness::node_draws;
use mlpbsde::{mlp_field, MasterSeed, ThetaPath};

const M: i64 = 2;

fn draws(seed: MasterSeed, path: &[i64], d: usize) -> (f64, Vec<f64>) {
    let nd = node_draws(seed, &ThetaPath::new(path.to_vec()), d).unwrap();
    (nd.r, nd.z)
}

fn join(theta: &[i64], tail: [i64; 2]) -> Vec<i64> {
    let mut v = theta.to_vec();
    v.extend_from_slice(&tail);
    v
}

fn shifted(x: &[f64], scale: f64, z: &[f64]) -> Vec<f64> {
    x.iter().zip(z).map(|(a, b)| a + scale * b).collect()
}

fn leaf_mean(p: &BsdeProblem, seed: MasterSeed, theta: &[i64], count: i64, t: f64, x: &[f64]) -> f64 {
    let s = (p.horizon - t).sqrt();
    let mut sum = 0.0;
    for i in 1..=count {
        let (_, z) = draws(seed, &join(theta, [0, -i]), p.dim);
        sum += p.terminal.evaluate(&shifted(x, s, &z));
    }
    sum / count as f64
}

fn u1(p: &BsdeProblem, seed: MasterSeed, theta: &[i64], t: f64, x: &[f64]) -> f64 {
    let dt = p.horizon - t;
    let mut value = leaf_mean(p, seed, theta, M, t, x);
    let mut sum = 0.0;
    for i in 1..=M {
        let (r, z) = draws(seed, &join(theta, [0, i]), p.dim);
        let tau = t + dt * r;
        let xi = shifted(x, (dt * r).sqrt(), &z);
        sum += p.driver.evaluate(tau, &xi, 0.0);
    }
    value += dt * sum / M as f64;
    value
}

fn u2(p: &BsdeProblem, seed: MasterSeed, theta: &[i64], t: f64, x: &[f64]) -> f64 {
    let dt = p.horizon - t;
    let mut value = leaf_mean(p, seed, theta, M * M, t, x);
    let mut sum0 = 0.0;
    for i in 1..=M * M {
        let (r, z) = draws(seed, &join(theta, [0, i]), p.dim);
        let tau = t + dt * r;
        let xi = shifted(x, (dt * r).sqrt(), &z);
        sum0 += p.driver.evaluate(tau, &xi, 0.0);
    }
    value += dt * sum0 / (M * M) as f64;
    let mut sum1 = 0.0;
    for i in 1..=M {
        let (r, z) = draws(seed, &join(theta, [1, i]), p.dim);
        let tau = t + dt * r;
        let xi = shifted(x, (dt * r).sqrt(), &z);
        let fine = u1(p, seed, &join(theta, [1, i]), tau, &xi);
        sum1 += p.driver.evaluate(tau, &xi, fine) - p.driver.evaluate(tau, &xi, 0.0);
    }
    value += dt * sum1 / M as f64;
    value
}

fn sine_problem(d: usize) -> BsdeProblem {
    builtin_problem(Family::CosSine, d, &ProblemParams::default()).unwrap()
}

#[test]
fn recursion_matches_hand_unrolled_version() {
    let p = sine_problem(2);
    let cfg = MlpConfig::new(2, 2).unwrap();
    for s in 0..20u64 {
        let seed = MasterSeed(s);
        let theta = [3i64, -1];
        let t = (s as f64) / 25.0;
        let x = [0.1 * s as f64, -0.3];
        let mut c = CostCounters::default();
        let got = mlp_evaluate(&p, seed, &ThetaPath::new(theta.to_vec()), cfg, t, &x, &mut c).unwrap();
        let want = u2(&p, seed, &theta, t, &x);
        assert_eq!(got.to_bits(), want.to_bits(), "seed {s}: {got} vs {want}");
    }
}

#[test]
fn zero_driver_is_flat_monte_carlo() {
    let p = builtin_problem(Family::CosZero, 3, &ProblemParams::default()).unwrap();
    for n in 1..=3u32 {
        let cfg = MlpConfig::new(n, 3).unwrap();
        let x = [0.2, 0.0, -1.0];
        let mut c = CostCounters::default();
        let got = mlp_evaluate(&p, MasterSeed(8), &ThetaPath::root(), cfg, 0.4, &x, &mut c).unwrap();
        let want = leaf_mean(&p, MasterSeed(8), &[], 3i64.pow(n), 0.4, &x);
        assert_eq!(got.to_bits(), want.to_bits(), "n = {n}");
    }
}

fn brownian(seed: MasterSeed, d: usize, steps: usize, horizon: f64) -> Vec<Vec<f64>> {
    let scale = (horizon / steps as f64).sqrt();
    let mut w = vec![vec![0.0; d]];
    for k in 0..steps {
        let (_, z) = draws(seed, &[i64::MIN, k as i64], d);
        let next = shifted(&w[k], scale, &z);
        w.push(next);
    }
    w
}

#[test]
fn path_estimator_matches_hand_unrolled_version() {
    let p = sine_problem(1);
    for s in 0..20u64 {
        let seed = MasterSeed(100 + s);
        let est = path_estimate(&p, seed, 2, 2).unwrap();
        let w = brownian(seed, 1, 4, 1.0);
        for (k, wk) in w.iter().enumerate() {
            assert_eq!(est.w_path.point(k), wk.as_slice());
        }
        // level 0: U^{[0]}_2 on {0, 1/2, 1}; level 1: U^{[1]}_1 on {0, 1/4, ..., 1}
        let lvl0: Vec<f64> = (0..3).map(|j| u2(&p, seed, &[0], j as f64 / 2.0, &w[2 * j])).collect();
        let lvl1: Vec<f64> = (0..5).map(|j| u1(&p, seed, &[1], j as f64 / 4.0, &w[j])).collect();
        let interp_half = |v: &[f64], k: usize| {
            if k % 2 == 0 {
                v[k / 2]
            } else {
                0.5 * v[k / 2] + 0.5 * v[k / 2 + 1]
            }
        };
        for k in 0..5 {
            let coarse1 = interp_half(&[lvl1[0], lvl1[2], lvl1[4]], k);
            let want = interp_half(&lvl0, k) + (lvl1[k] - coarse1);
            assert_eq!(est.fine_nodes[k].to_bits(), want.to_bits(), "seed {s} node {k}");
        }
    }
}

#[test]
fn path_value_matches_direct_formula() {
    let p = builtin_problem(Family::CosAffine, 2, &ProblemParams::default()).unwrap();
    let seed = MasterSeed(42);
    let est = path_estimate(&p, seed, 2, 2).unwrap();
    let w = &est.w_path;
    let cfgs = [MlpConfig::new(2, 2).unwrap(), MlpConfig::new(1, 2).unwrap()];
    let mut level_nodes = Vec::new();
    for (l, cfg) in cfgs.iter().enumerate() {
        let field = mlp_field(&p, seed, ThetaPath::new(vec![l as i64]), *cfg);
        let cells = 2usize.pow(l as u32 + 1);
        let stride = 4 / cells;
        let vals: Vec<f64> = (0..=cells)
            .map(|j| {
                let mut c = CostCounters::default();
                field.evaluate(j as f64 / cells as f64, w.point(j * stride), &mut c).unwrap()
            })
            .collect();
        level_nodes.push(vals);
    }
    let g1 = GridSpec::new(2, 1, 1.0).unwrap();
    let g2 = GridSpec::new(2, 2, 1.0).unwrap();
    let coarse: Vec<f64> = level_nodes[1].iter().step_by(2).copied().collect();
    for i in 0..=200 {
        let t = i as f64 / 200.0 * 0.999_999 + 0.000_000_3 * (i % 7) as f64;
        let t = t.min(1.0);
        let direct = interpolate(&level_nodes[0], &g1, t).unwrap() + interpolate(&level_nodes[1], &g2, t).unwrap()
            - interpolate(&coarse, &g1, t).unwrap();
        let got = path_value(&est, t).unwrap();
        assert!((got - direct).abs() < 1e-12, "t = {t}: {got} vs {direct}");
    }
}
