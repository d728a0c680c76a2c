//! Self-contained property suites run by `mlpbsde validate`.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{cost_mlp_bound, cost_mlp_closed, cost_path_bound, default_alpha};
use crate::exec::Exec;
use crate::mlp::{mlp_evaluate, CostCounters, MlpConfig};
use crate::oracle::{affine_closed_form, lipschitz_gap_check, nested_mc};
use crate::pathgrid::lemmas::{check_interp_error_bound, check_interp_holder, random_case};
use crate::pathgrid::{ceil_grid, floor_grid, grid_time, path_estimate_with};
use crate::problem::{builtin_problem, BsdeProblem, Family, ProblemParams, Terminal, ZeroDriver};
use crate::randomness::{MasterSeed, ThetaPath};

const GRID_MESH: usize = 2000;
const LEMMA_CASES: u64 = 100;
const GAP_CASES: usize = 10_000;

/// Deliberate defects for exercising the failure path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    pub ceil_grid_off_by_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail).unwrap();
        }
        let failed = self.failures().len();
        writeln!(s, "{} checks, {} failed", self.checks.len(), failed).unwrap();
        s
    }
}

fn outcome(name: &str, result: std::result::Result<String, String>) -> CheckOutcome {
    match result {
        Ok(detail) => CheckOutcome {
            name: name.into(),
            passed: true,
            detail,
        },
        Err(detail) => CheckOutcome {
            name: name.into(),
            passed: false,
            detail,
        },
    }
}

type Check = std::result::Result<String, String>;

fn faulty_ceil(t: f64, cells: u64, horizon: f64) -> f64 {
    let k = (0..cells).rev().find(|&k| grid_time(k, cells, horizon) <= t).unwrap_or(0);
    grid_time((k + 2).min(cells), cells, horizon)
}

/// Brute-force set definitions: the largest node in [0, t] other than T,
/// and the smallest node in (t, T] together with T.
pub fn brute_force_floor_ceil(t: f64, cells: u64, horizon: f64) -> (f64, f64) {
    let nodes: Vec<f64> = (0..=cells).map(|k| grid_time(k, cells, horizon)).collect();
    let floor = nodes
        .iter()
        .copied()
        .filter(|&s| s <= t && s != horizon)
        .fold(f64::NEG_INFINITY, f64::max);
    let ceil = nodes
        .iter()
        .copied()
        .filter(|&s| s > t && s <= horizon)
        .chain(std::iter::once(horizon))
        .fold(f64::INFINITY, f64::min);
    (floor, ceil)
}

fn grid_sandwich(faults: Faults) -> Check {
    let horizon = 1.0;
    let mut count = 0usize;
    for cells in 1..=16u64 {
        let mut ts: Vec<f64> = (0..=GRID_MESH).map(|i| i as f64 * horizon / GRID_MESH as f64).collect();
        ts.extend((0..=cells).map(|k| grid_time(k, cells, horizon)));
        for t in ts {
            let f = floor_grid(t, cells, horizon).map_err(|e| e.to_string())?;
            let c = if faults.ceil_grid_off_by_one {
                faulty_ceil(t, cells, horizon)
            } else {
                ceil_grid(t, cells, horizon).map_err(|e| e.to_string())?
            };
            let (bf, bc) = brute_force_floor_ceil(t, cells, horizon);
            if f != bf || c != bc || f > t || (c < t) {
                return Err(format!(
                    "M={cells} t={t}: floor {f} ceil {c}, expected floor {bf} ceil {bc}"
                ));
            }
            count += 1;
        }
    }
    Ok(format!("{count} (M, t) pairs agree with the set definitions"))
}

fn interpolation_bound() -> Check {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..LEMMA_CASES {
        let case = random_case(seed, 300);
        let c = check_interp_error_bound(&case).map_err(|e| e.to_string())?;
        if !c.holds {
            return Err(format!("case {seed}: {} > {}", c.lhs, c.rhs));
        }
        worst = worst.max(c.lhs - c.rhs);
    }
    Ok(format!("{LEMMA_CASES} random cases, max lhs - rhs = {worst:.3e}"))
}

fn interpolation_holder() -> Check {
    for seed in 0..LEMMA_CASES {
        let case = random_case(seed + 10_000, 300);
        let c = check_interp_holder(&case).map_err(|e| e.to_string())?;
        if !c.holds {
            return Err(format!("case {seed}: {} > {}", c.lhs, c.rhs));
        }
    }
    Ok(format!("{LEMMA_CASES} random cases"))
}

fn problem(family: Family, d: usize) -> Result<BsdeProblem, String> {
    builtin_problem(family, d, &ProblemParams::default()).map_err(|e| e.to_string())
}

fn mlp_structure() -> Check {
    let seed = MasterSeed(11);
    let p = problem(Family::CosSine, 2)?;
    let x = [0.3, -0.7];
    let mut c = CostCounters::default();
    let run = |n: u32, m: u32, t: f64, x: &[f64], c: &mut CostCounters| {
        let cfg = MlpConfig::new(n, m).map_err(|e| e.to_string())?;
        mlp_evaluate(&p, seed, &ThetaPath::root(), cfg, t, x, c).map_err(|e| e.to_string())
    };
    let u0 = run(0, 3, 0.2, &x, &mut c)?;
    if u0 != 0.0 {
        return Err(format!("U_0 = {u0}"));
    }
    for n in 1..=3 {
        let v = run(n, 2, 1.0, &x, &mut c)?;
        let g = p.terminal.evaluate(&x);
        if (v - g).abs() > 1e-12 {
            return Err(format!("U_{n}(T, x) = {v}, g(x) = {g}"));
        }
    }
    Ok("U_0 = 0 and U_n(T, x) = g(x) for n = 1..3".into())
}

#[derive(Debug)]
struct LinearTerminal {
    c: Vec<f64>,
}

impl Terminal for LinearTerminal {
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }
}

fn mlp_linearity() -> Check {
    let c = vec![0.5, -1.25, 2.0];
    let p = BsdeProblem::new(1.0, 3, Arc::new(ZeroDriver), Arc::new(LinearTerminal { c: c.clone() }))
        .map_err(|e| e.to_string())?;
    let cfg = MlpConfig::new(3, 3).map_err(|e| e.to_string())?;
    let x = [0.1, 0.2, 0.3];
    let h = [1.0, -2.0, 0.5];
    let xh: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
    let mut cnt = CostCounters::default();
    let seed = MasterSeed(5);
    let a = mlp_evaluate(&p, seed, &ThetaPath::root(), cfg, 0.25, &x, &mut cnt).map_err(|e| e.to_string())?;
    let b = mlp_evaluate(&p, seed, &ThetaPath::root(), cfg, 0.25, &xh, &mut cnt).map_err(|e| e.to_string())?;
    let expected: f64 = c.iter().zip(&h).map(|(c, h)| c * h).sum();
    if ((b - a) - expected).abs() > 1e-12 {
        return Err(format!("U(x+h) - U(x) = {}, expected {expected}", b - a));
    }
    Ok("shift of a linear terminal passes through exactly".into())
}

fn path_terminal() -> Check {
    let mut worst = 0.0f64;
    for family in [Family::CosZero, Family::CosSine] {
        for (n, m) in [(1, 1), (2, 2), (3, 2), (2, 4)] {
            let p = problem(family, 2)?;
            let est = path_estimate_with(&p, MasterSeed(n as u64 * 31 + m as u64), n, m, Exec::default())
                .map_err(|e| e.to_string())?;
            let last = est.fine_nodes.len() - 1;
            let g = p.terminal.evaluate(est.w_path.point(last));
            worst = worst.max((est.fine_nodes[last] - g).abs());
        }
    }
    if worst > 1e-12 {
        return Err(format!("|Y_T - g(W_T)| = {worst:.3e}"));
    }
    Ok(format!("max |Y_T - g(W_T)| = {worst:.3e}"))
}

fn cost_chain() -> Check {
    let mut rows = 0;
    for d in [1usize, 3] {
        let p = problem(Family::CosAffine, d)?;
        let alpha = default_alpha(d);
        for n in 1..=3u32 {
            for m in 1..=3u32 {
                let mut c = CostCounters::default();
                let cfg = MlpConfig::new(n, m).map_err(|e| e.to_string())?;
                mlp_evaluate(&p, MasterSeed(1), &ThetaPath::root(), cfg, 0.0, &vec![0.0; d], &mut c)
                    .map_err(|e| e.to_string())?;
                let rec = cost_mlp_bound(n, m, alpha).map_err(|e| e.to_string())?;
                let closed = cost_mlp_closed(n, m, alpha).map_err(|e| e.to_string())?;
                let path = path_estimate_with(&p, MasterSeed(1), n, m, Exec::default())
                    .map_err(|e| e.to_string())?
                    .counters
                    .total();
                let (prec, pclosed) = cost_path_bound(n, m, alpha).map_err(|e| e.to_string())?;
                if !(c.total() <= rec && rec <= closed && path <= prec && prec <= pclosed) {
                    return Err(format!(
                        "n={n} M={m} d={d}: mlp {} <= {rec} <= {closed}, path {path} <= {prec} <= {pclosed}",
                        c.total()
                    ));
                }
                rows += 1;
            }
        }
    }
    Ok(format!("{rows} (n, M, d) rows satisfy measured <= recursion <= closed form"))
}

fn second_difference() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for i in 0..GAP_CASES {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-10.0..10.0));
        let c = lipschitz_gap_check(f64::sin, 1.0, 1.0, q[0], q[1], q[2], q[3]);
        if !c.holds {
            return Err(format!("sample {i}: {} > {}", c.lhs, c.rhs));
        }
        let lin = lipschitz_gap_check(|v| 0.3 * v + 0.1, 0.3, 0.0, q[0], q[1], q[2], q[3]);
        if (lin.lhs - lin.rhs).abs() > 1e-12 {
            return Err(format!("affine sample {i}: {} != {}", lin.lhs, lin.rhs));
        }
    }
    Ok(format!("{GAP_CASES} quadruples for sin, equality for affine f"))
}

fn determinism() -> Check {
    let p = problem(Family::CosSine, 3)?;
    let run = |exec| path_estimate_with(&p, MasterSeed(77), 3, 3, exec).map_err(|e| e.to_string());
    let a = run(Exec::Sequential)?;
    let b = run(Exec::Parallel)?;
    let c = run(Exec::Parallel)?;
    let same = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits());
    if !(same(&a.fine_nodes, &b.fine_nodes) && same(&b.fine_nodes, &c.fine_nodes) && a.counters == b.counters) {
        return Err("path estimates differ between runs or execution policies".into());
    }
    Ok("sequential and parallel path estimates are bit-identical".into())
}

fn oracle_agreement() -> Check {
    let p = problem(Family::CosAffine, 2)?;
    let exact = affine_closed_form(&p).map_err(|e| e.to_string())?;
    let x = [0.2, -0.4];
    let (v, se) = nested_mc(&p, 0.3, &x, 1, 2000, MasterSeed(9)).map_err(|e| e.to_string())?;
    let u = exact.evaluate(0.3, &x);
    if (v - u).abs() > 4.0 * se + 0.01 {
        return Err(format!("nested {v} +- {se}, closed form {u}"));
    }
    Ok(format!("closed form {u:.6}, nested Monte Carlo {v:.6} +- {se:.6}"))
}

pub fn run_validation(faults: Faults) -> ValidationReport {
    let suites: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("grid sandwich", Box::new(move || grid_sandwich(faults))),
        ("interpolation error bound", Box::new(interpolation_bound)),
        ("interpolation Hölder stability", Box::new(interpolation_holder)),
        ("mlp structure", Box::new(mlp_structure)),
        ("mlp linearity", Box::new(mlp_linearity)),
        ("path terminal", Box::new(path_terminal)),
        ("cost chain", Box::new(cost_chain)),
        ("second-difference inequality", Box::new(second_difference)),
        ("determinism", Box::new(determinism)),
        ("oracle agreement", Box::new(oracle_agreement)),
    ];
    ValidationReport {
        checks: suites.into_iter().map(|(name, f)| outcome(name, f())).collect(),
    }
}
