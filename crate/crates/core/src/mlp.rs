//! The full-history recursive multilevel Picard estimator U_{n,M}^θ(t, x).
//!
//! For n >= 1 the estimator is
//!
//! ```text
//! U_n(t,x) = M^{-n} Σ_i g(x + sqrt(T-t) z^{(θ,0,-i)})
//!          + Σ_{l<n} (T-t) M^{l-n} Σ_i [ f(τ, ξ, U_l^{(θ,l,i)}(τ,ξ)) - 1{l>=1} f(τ, ξ, U_{l-1}^{(θ,-l,i)}(τ,ξ)) ]
//! ```
//!
//! with τ = t + (T-t) r^{(θ,l,i)} and ξ = x + sqrt((T-t) r^{(θ,l,i)}) z^{(θ,l,i)}.
//! All inner sums run over i = 1..count in ascending order; parallel
//! execution collects per-index results and reduces them in that order.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{Exec, OrderedSum};
use crate::problem::BsdeProblem;
use crate::randomness::{node_draws_into, MasterSeed, ThetaPath};

pub const MAX_LEVEL: u32 = 8;
pub const MAX_WORK: u64 = 1_000_000_000;

/// Work estimate above which an inner loop is handed to the thread pool.
const PAR_WORK: u64 = 4096;

/// Picard level `n` and sample base `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub n: u32,
    #[serde(rename = "M")]
    pub m: u32,
}

impl MlpConfig {
    pub fn new(n: u32, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(invalid("M", "must be at least 1"));
        }
        if n > MAX_LEVEL {
            return Err(Error::ResourceGuard(format!("n = {n} exceeds {MAX_LEVEL}")));
        }
        let work = (5u64 * m as u64).checked_pow(n).ok_or(Error::Overflow("(5M)^n"))?;
        if work > MAX_WORK {
            return Err(Error::ResourceGuard(format!("(5M)^n = {work} exceeds {MAX_WORK}")));
        }
        Ok(MlpConfig { n, m })
    }
}

/// Exact tallies of scalar random realizations and f/g evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub rv_scalars: u64,
    pub f_evals: u64,
    pub g_evals: u64,
}

impl CostCounters {
    pub fn total(&self) -> u64 {
        self.rv_scalars + self.f_evals + self.g_evals
    }
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, o: Self) {
        self.rv_scalars += o.rv_scalars;
        self.f_evals += o.f_evals;
        self.g_evals += o.g_evals;
    }
}

impl Add for CostCounters {
    type Output = CostCounters;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

/// One realization of the random field U_{n,M}^θ. Every evaluation shares
/// the draws indexed under θ.
#[derive(Debug, Clone)]
pub struct MlpField<'a> {
    problem: &'a BsdeProblem,
    seed: MasterSeed,
    theta: ThetaPath,
    cfg: MlpConfig,
    exec: Exec,
}

impl<'a> MlpField<'a> {
    pub fn new(problem: &'a BsdeProblem, seed: MasterSeed, theta: ThetaPath, cfg: MlpConfig) -> Self {
        MlpField {
            problem,
            seed,
            theta,
            cfg,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> MlpConfig {
        self.cfg
    }

    pub fn evaluate(&self, t: f64, x: &[f64], counters: &mut CostCounters) -> Result<f64> {
        self.problem.check_time(t)?;
        if x.len() != self.problem.dim {
            return Err(Error::LengthMismatch {
                expected: self.problem.dim,
                got: x.len(),
            });
        }
        // Re-validate: a config built by hand may bypass `MlpConfig::new`.
        MlpConfig::new(self.cfg.n, self.cfg.m)?;
        let mut path = self.theta.elements().to_vec();
        Ok(self.level(self.cfg.n, &mut path, t, x, counters))
    }

    fn level(&self, n: u32, path: &mut Vec<i64>, t: f64, x: &[f64], c: &mut CostCounters) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let m = self.cfg.m as u64;
        let dt = self.problem.horizon - t;
        let d = self.problem.dim as u64;

        let leaf_count = m.pow(n) as usize;
        let leaf_sum = self.sum_terms(leaf_count, leaf_count as u64 * d, path, c, |i, path, c, scratch| {
            self.leaf_term(i, path, dt, x, c, scratch)
        });
        let mut value = leaf_sum / leaf_count as f64;

        for l in 0..n {
            let count = m.pow(n - l) as usize;
            let work = count as u64 * (5 * m).pow(l);
            let level_sum = self.sum_terms(count, work, path, c, |i, path, c, scratch| {
                self.level_term(l, i, path, t, dt, x, c, scratch)
            });
            value += dt * level_sum / count as f64;
        }
        value
    }

    /// Σ_{i=1..count} term(i) in ascending order.
    fn sum_terms<F>(&self, count: usize, work: u64, path: &mut Vec<i64>, c: &mut CostCounters, term: F) -> f64
    where
        F: Fn(i64, &mut Vec<i64>, &mut CostCounters, &mut Scratch) -> f64 + Sync + Send,
    {
        let mut acc = OrderedSum::new(count);
        if self.exec.is_parallel() && work >= PAR_WORK && count > 1 {
            let base: &[i64] = path;
            let results = self.exec.map_collect(0..count, |k| {
                let mut local = CostCounters::default();
                let mut p = base.to_vec();
                let mut scratch = Scratch::new(self.problem.dim);
                let v = term(k as i64 + 1, &mut p, &mut local, &mut scratch);
                (v, local)
            });
            for (v, local) in results {
                acc.add(v);
                *c += local;
            }
        } else {
            let mut scratch = Scratch::new(self.problem.dim);
            for i in 1..=count as i64 {
                acc.add(term(i, path, c, &mut scratch));
            }
        }
        acc.value()
    }

    fn leaf_term(&self, i: i64, path: &mut Vec<i64>, dt: f64, x: &[f64], c: &mut CostCounters, s: &mut Scratch) -> f64 {
        let base = path.len();
        path.push(0);
        path.push(-i);
        node_draws_into(self.seed, path, &mut s.z);
        path.truncate(base);
        let scale = dt.sqrt();
        for ((y, &xj), &zj) in s.point.iter_mut().zip(x).zip(&s.z) {
            *y = xj + scale * zj;
        }
        c.rv_scalars += self.problem.dim as u64;
        c.g_evals += 1;
        self.problem.terminal.evaluate(&s.point)
    }

    #[allow(clippy::too_many_arguments)]
    fn level_term(
        &self,
        l: u32,
        i: i64,
        path: &mut Vec<i64>,
        t: f64,
        dt: f64,
        x: &[f64],
        c: &mut CostCounters,
        s: &mut Scratch,
    ) -> f64 {
        let base = path.len();
        path.push(l as i64);
        path.push(i);
        let r = node_draws_into(self.seed, path, &mut s.z);
        c.rv_scalars += 1 + self.problem.dim as u64;
        let tau = t + dt * r;
        let scale = (dt * r).sqrt();
        // ξ must outlive the recursive calls below, which reuse `s`.
        let xi: Vec<f64> = x.iter().zip(&s.z).map(|(&xj, &zj)| xj + scale * zj).collect();

        let u_fine = self.level(l, path, tau, &xi, c);
        path.truncate(base);
        let driver = &self.problem.driver;
        let mut term = driver.evaluate(tau, &xi, u_fine);
        c.f_evals += 1;
        if l >= 1 {
            path.push(-(l as i64));
            path.push(i);
            let u_coarse = self.level(l - 1, path, tau, &xi, c);
            path.truncate(base);
            term -= driver.evaluate(tau, &xi, u_coarse);
            c.f_evals += 1;
        }
        term
    }
}

struct Scratch {
    z: Vec<f64>,
    point: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch {
            z: vec![0.0; d],
            point: vec![0.0; d],
        }
    }
}

pub fn mlp_field(problem: &BsdeProblem, seed: MasterSeed, theta: ThetaPath, cfg: MlpConfig) -> MlpField<'_> {
    MlpField::new(problem, seed, theta, cfg)
}

pub fn mlp_evaluate(
    problem: &BsdeProblem,
    seed: MasterSeed,
    theta: &ThetaPath,
    cfg: MlpConfig,
    t: f64,
    x: &[f64],
    counters: &mut CostCounters,
) -> Result<f64> {
    MlpField::new(problem, seed, theta.clone(), cfg).evaluate(t, x, counters)
}

/// Counter values predicted by the counting convention (one uniform per
/// inner summand, d per normal vector, one per f or g call).
pub fn predicted_counters(n: u32, m: u32, d: u64) -> CostCounters {
    let m = m as u64;
    let mut table: Vec<CostCounters> = Vec::with_capacity(n as usize + 1);
    table.push(CostCounters::default());
    for k in 1..=n {
        let mut c = CostCounters {
            rv_scalars: m.pow(k) * d,
            f_evals: 0,
            g_evals: m.pow(k),
        };
        for l in 0..k {
            let reps = m.pow(k - l);
            let mut inner = table[l as usize];
            inner.rv_scalars += 1 + d;
            inner.f_evals += if l >= 1 { 2 } else { 1 };
            if l >= 1 {
                inner += table[l as usize - 1];
            }
            c.rv_scalars += reps * inner.rv_scalars;
            c.f_evals += reps * inner.f_evals;
            c.g_evals += reps * inner.g_evals;
        }
        table.push(c);
    }
    table[n as usize]
}

/// Sample mean and standard error of U_{1,M}(t, x) over `replications`
/// independent seeds, for d = 1.
pub fn mlp_expectation_check(
    problem: &BsdeProblem,
    cfg: MlpConfig,
    t: f64,
    x: f64,
    replications: usize,
    seed: MasterSeed,
) -> Result<(f64, f64)> {
    if problem.dim != 1 {
        return Err(invalid("d", "expectation check requires d = 1"));
    }
    if cfg.n != 1 {
        return Err(invalid("n", "expectation check requires n = 1"));
    }
    if replications < 2 {
        return Err(invalid("replications", "need at least 2"));
    }
    let theta = ThetaPath::root();
    let values = Exec::default().map_collect(0..replications, |r| {
        let mut c = CostCounters::default();
        mlp_evaluate(problem, seed.derive(r as u64), &theta, cfg, t, &[x], &mut c)
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_stderr(&values))
}

/// Sample mean and standard error, with deviations taken from the first
/// value so that identical samples give a standard error of exactly zero.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let shift = values[0];
    let s1: f64 = values.iter().map(|v| v - shift).sum();
    let s2: f64 = values.iter().map(|v| (v - shift).powi(2)).sum();
    let mean = shift + s1 / n;
    let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}
