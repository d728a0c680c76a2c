//! Reference solutions of the fixed-point equation
//!
//! ```text
//! u(t,x) = E[g(x + W_{T-t})] + ∫_t^T E[f(s, x + W_{s-t}, u(s, x + W_{s-t}))] ds
//! ```
//!
//! used to check the Monte Carlo estimators: a closed form for affine
//! drivers, a quadrature Picard iteration in one dimension, and crude
//! nested Monte Carlo. Also hosts the second-difference inequality check
//! for smooth drivers.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Exec;
use crate::mlp::mean_and_stderr;
use crate::pathgrid::fmt_f64;
use crate::problem::BsdeProblem;
use crate::quadrature::{gauss_legendre_on, normal_expectation, Rule};
use crate::randomness::{node_draws_into, MasterSeed};

/// First element of every index path used by [`nested_mc`].
pub const NESTED_SENTINEL: i64 = i64::MIN + 2;

const CLOSED_FORM_ACCURACY: f64 = 1e-12;
const HERMITE_NODES: usize = 200;
const HERMITE_CUTOFF: f64 = 8.0;
const LEGENDRE_NODES: usize = 16;
const PICARD_TOL: f64 = 1e-10;
const MAX_PICARD_LT: f64 = 4.0;
const NESTED_BUDGET: f64 = 1e8;
const GAP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    AffineClosedForm,
    PicardQuadrature,
    NestedMc,
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OracleKind::AffineClosedForm => "affine_closed_form",
            OracleKind::PicardQuadrature => "picard_quadrature",
            OracleKind::NestedMc => "nested_mc",
        };
        f.write_str(s)
    }
}

type EvalFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// An immutable, shareable reference solution u(t, x).
#[derive(Clone)]
pub struct ReferenceSolution {
    kind: OracleKind,
    accuracy: f64,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for ReferenceSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceSolution")
            .field("kind", &self.kind)
            .field("accuracy", &self.accuracy)
            .finish_non_exhaustive()
    }
}

impl ReferenceSolution {
    pub fn evaluate(&self, t: f64, x: &[f64]) -> f64 {
        (self.eval)(t, x)
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    /// Guaranteed or estimated absolute accuracy.
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    /// Table of oracle values with header `t,x_1,..,x_d,u,accuracy`.
    pub fn to_csv(&self, probes: &[(f64, Vec<f64>)]) -> String {
        let d = probes.first().map_or(0, |p| p.1.len());
        let mut out = String::from("t");
        for i in 1..=d {
            out.push_str(&format!(",x_{i}"));
        }
        out.push_str(",u,accuracy\n");
        for (t, x) in probes {
            out.push_str(&fmt_f64(*t));
            for v in x {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push(',');
            out.push_str(&fmt_f64(self.evaluate(*t, x)));
            out.push(',');
            out.push_str(&fmt_f64(self.accuracy));
            out.push('\n');
        }
        out
    }
}

/// Closed-form solution for f(v) = a v + b and a terminal with known
/// Gaussian smoothing G(s, x) = E[g(x + sqrt(s) Z)].
pub fn affine_closed_form(p: &BsdeProblem) -> Result<ReferenceSolution> {
    let (a, b) = p
        .driver
        .affine()
        .ok_or_else(|| Error::NoOracle("driver is not affine".into()))?;
    if p.terminal.gaussian_smoothing(0.0, &vec![0.0; p.dim]).is_none() {
        return Err(Error::NoOracle("terminal has no Gaussian smoothing".into()));
    }
    let horizon = p.horizon;
    let terminal = Arc::clone(&p.terminal);
    let eval = move |t: f64, x: &[f64]| {
        let s = (horizon - t).max(0.0);
        let g = terminal.gaussian_smoothing(s, x).unwrap_or(f64::NAN);
        if a == 0.0 {
            g + b * s
        } else {
            let e = (a * s).exp();
            e * g + b / a * (e - 1.0)
        }
    };
    Ok(ReferenceSolution {
        kind: OracleKind::AffineClosedForm,
        accuracy: CLOSED_FORM_ACCURACY,
        eval: Arc::new(eval),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    /// Number of time intervals of the uniform grid on [0, T].
    pub time_nodes: usize,
    /// Number of points of the uniform space grid.
    pub space_grid: usize,
    pub iters: usize,
    /// Queries are accurate for |x| up to this value.
    pub query_radius: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            time_nodes: 32,
            space_grid: 961,
            iters: 100,
            query_radius: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardDiagnostics {
    pub iterations: usize,
    /// sup-norm difference of the last two iterates on the grid
    pub last_increment: f64,
    pub accuracy: f64,
}

/// Tensor grid holding one iterate v(t_j, x_i).
#[derive(Debug, Clone)]
struct TensorGrid {
    horizon: f64,
    steps: usize,
    x0: f64,
    h: f64,
    nx: usize,
    values: Vec<f64>,
}

/// Cubic Lagrange weights for the four nodes starting at `start` of a
/// uniform grid, evaluated at fractional position `pos`.
fn lagrange4(pos: f64, start: usize) -> [f64; 4] {
    let u = pos - start as f64;
    let (a, b, c, d) = (u, u - 1.0, u - 2.0, u - 3.0);
    [-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0]
}

fn window(pos: f64, len: usize) -> usize {
    if len < 4 {
        return 0;
    }
    (pos.floor() as isize - 1).clamp(0, len as isize - 4) as usize
}

/// Cubic interpolation of uniformly spaced samples at fractional index
/// `pos`, clamped to the sample range.
fn interp_uniform(samples: &[f64], pos: f64) -> f64 {
    let n = samples.len();
    let pos = pos.clamp(0.0, (n - 1) as f64);
    if n < 4 {
        let k = (pos.floor() as usize).min(n.saturating_sub(2));
        let w = pos - k as f64;
        return if n == 1 { samples[0] } else { (1.0 - w) * samples[k] + w * samples[k + 1] };
    }
    let s = window(pos, n);
    let w = lagrange4(pos, s);
    w[0] * samples[s] + w[1] * samples[s + 1] + w[2] * samples[s + 2] + w[3] * samples[s + 3]
}

/// Quadrature node z at grid offset `scale * z`, as a cubic stencil
/// relative to the evaluation index, with the quadrature weight folded in.
struct Stencil {
    start: isize,
    weights: [f64; 4],
}

impl Stencil {
    fn for_rule(rule: &Rule, scale: f64) -> Vec<Stencil> {
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&z, &w)| {
                let off = scale * z;
                let fl = off.floor();
                let lag = lagrange4(off - fl + 1.0, 0);
                Stencil {
                    start: fl as isize - 1,
                    weights: lag.map(|l| l * w),
                }
            })
            .collect()
    }

    /// Index range where every stencil lies inside the grid.
    fn interior(stencils: &[Stencil], nx: usize) -> (usize, usize) {
        let min = stencils.iter().map(|s| s.start).min().unwrap_or(0);
        let max = stencils.iter().map(|s| s.start).max().unwrap_or(0);
        let lo = (-min).max(0) as usize;
        let hi = (nx as isize - 3 - max).clamp(0, nx as isize) as usize;
        (lo, hi.max(lo))
    }

    #[inline]
    fn apply(&self, samples: &[f64], i: usize) -> f64 {
        let k = (i as isize + self.start) as usize;
        let w = &self.weights;
        w[0] * samples[k] + w[1] * samples[k + 1] + w[2] * samples[k + 2] + w[3] * samples[k + 3]
    }
}

impl TensorGrid {
    fn time(&self, j: usize) -> f64 {
        if j == self.steps {
            self.horizon
        } else {
            j as f64 * self.horizon / self.steps as f64
        }
    }

    fn space(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.nx..(j + 1) * self.nx]
    }

    /// Profile x_i -> v(s, x_i) by cubic interpolation in time.
    fn time_profile(&self, s: f64, out: &mut [f64]) {
        let pos = (s / self.horizon * self.steps as f64).clamp(0.0, self.steps as f64);
        let len = self.steps + 1;
        if len < 4 {
            let k = (pos.floor() as usize).min(self.steps.saturating_sub(1));
            let w = pos - k as f64;
            let (r0, r1) = (self.row(k), self.row((k + 1).min(self.steps)));
            for (i, o) in out.iter_mut().enumerate() {
                *o = (1.0 - w) * r0[i] + w * r1[i];
            }
            return;
        }
        let st = window(pos, len);
        let w = lagrange4(pos, st);
        let rows = [self.row(st), self.row(st + 1), self.row(st + 2), self.row(st + 3)];
        for (i, o) in out.iter_mut().enumerate() {
            *o = w[0] * rows[0][i] + w[1] * rows[1][i] + w[2] * rows[2][i] + w[3] * rows[3][i];
        }
    }

    fn space_pos(&self, y: f64) -> f64 {
        (y - self.x0) / self.h
    }
}

struct PicardSetup {
    horizon: f64,
    p: BsdeProblem,
    hermite: Rule,
    legendre: Rule,
}

impl PicardSetup {
    /// E[g(x + sqrt(T - t) Z)] with the exact terminal.
    fn smoothing(&self, t: f64, x: f64) -> f64 {
        let s = (self.horizon - t).max(0.0);
        if s == 0.0 {
            return self.p.terminal.evaluate(&[x]);
        }
        let sq = s.sqrt();
        self.hermite.integrate(|z| self.p.terminal.evaluate(&[x + sq * z]))
    }

    /// ∫_t^T E[F(s, x + sqrt(s - t) Z)] ds, where `profile(s, buf)` fills
    /// buf with the driver applied to the current iterate at time s.
    fn integral_at(&self, grid: &TensorGrid, t: f64, x: f64, profile: &mut [f64], scratch: &mut [f64]) -> f64 {
        let span = self.horizon - t;
        if span <= 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (&lam, &wl) in self.legendre.nodes.iter().zip(&self.legendre.weights) {
            let s = t + span * lam;
            self.driver_profile(grid, s, profile, scratch);
            let sq = (s - t).sqrt();
            let inner = self
                .hermite
                .integrate(|z| interp_uniform(profile, grid.space_pos(x + sq * z)));
            total += wl * inner;
        }
        span * total
    }

    fn driver_profile(&self, grid: &TensorGrid, s: f64, profile: &mut [f64], scratch: &mut [f64]) {
        grid.time_profile(s, scratch);
        for (i, (o, &v)) in profile.iter_mut().zip(scratch.iter()).enumerate() {
            *o = self.p.driver.evaluate(s, &[grid.space(i)], v);
        }
    }
}

/// Picard iteration of the fixed-point equation on a time-space tensor
/// grid, d = 1. Returns the solution and convergence diagnostics.
pub fn picard_quadrature_detailed(
    p: &BsdeProblem,
    opts: PicardOptions,
) -> Result<(ReferenceSolution, PicardDiagnostics)> {
    if p.dim != 1 {
        return Err(invalid("d", format!("picard_quadrature needs d = 1, got {}", p.dim)));
    }
    if opts.time_nodes < 1 || opts.space_grid < 4 || opts.iters < 1 {
        return Err(invalid("opts", "need time_nodes >= 1, space_grid >= 4, iters >= 1"));
    }
    if !(opts.query_radius >= 0.0 && opts.query_radius.is_finite()) {
        return Err(invalid("query_radius", "must be finite and nonnegative"));
    }
    let horizon = p.horizon;
    let lip = p.lipschitz();
    let lt = lip * horizon;
    if !(lt <= MAX_PICARD_LT) {
        return Err(invalid("L*T", format!("{lt} exceeds {MAX_PICARD_LT}")));
    }
    let setup = PicardSetup {
        horizon,
        p: p.clone(),
        hermite: normal_expectation(HERMITE_NODES, HERMITE_CUTOFF),
        legendre: gauss_legendre_on(LEGENDRE_NODES, 0.0, 1.0),
    };
    let half = opts.query_radius + HERMITE_CUTOFF * horizon.sqrt() + 0.5;
    let nx = opts.space_grid;
    let steps = opts.time_nodes;
    let mut grid = TensorGrid {
        horizon,
        steps,
        x0: -half,
        h: 2.0 * half / (nx - 1) as f64,
        nx,
        values: vec![0.0; (steps + 1) * nx],
    };
    let leaf: Vec<f64> = (0..=steps)
        .flat_map(|j| {
            let t = grid.time(j);
            (0..nx).map(move |i| (t, i))
        })
        .map(|(t, i)| setup.smoothing(t, grid.space(i)))
        .collect();

    let mut profile = vec![0.0; nx];
    let mut scratch = vec![0.0; nx];
    let mut increment = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.iters {
        let mut next = leaf.clone();
        for j in 0..steps {
            let t = grid.time(j);
            let span = horizon - t;
            for (&lam, &wl) in setup.legendre.nodes.iter().zip(&setup.legendre.weights) {
                let s = t + span * lam;
                setup.driver_profile(&grid, s, &mut profile, &mut scratch);
                let sq = (s - t).sqrt();
                let stencils = Stencil::for_rule(&setup.hermite, sq / grid.h);
                let (lo, hi) = Stencil::interior(&stencils, nx);
                for i in 0..nx {
                    let inner = if i >= lo && i < hi {
                        stencils.iter().map(|st| st.apply(&profile, i)).sum()
                    } else {
                        let x = grid.space(i);
                        setup
                            .hermite
                            .integrate(|z| interp_uniform(&profile, grid.space_pos(x + sq * z)))
                    };
                    next[j * nx + i] += span * wl * inner;
                }
            }
        }
        increment = next
            .iter()
            .zip(&grid.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        grid.values = next;
        iterations += 1;
        if increment < PICARD_TOL {
            break;
        }
    }

    let accuracy = if lt < 1.0 {
        increment / (1.0 - lt)
    } else {
        // Weighted sup norm with weight e^{-2L(T-t)} makes the map a
        // contraction with factor q < 1/2.
        let lambda = 2.0 * lip;
        let q = (1.0 - (-lambda * horizon).exp()) / 2.0;
        (lambda * horizon).exp() * q / (1.0 - q) * increment
    };

    let grid = Arc::new(grid);
    let setup = Arc::new(setup);
    let eval = move |t: f64, x: &[f64]| {
        let x = x[0];
        let mut profile = vec![0.0; grid.nx];
        let mut scratch = vec![0.0; grid.nx];
        setup.smoothing(t, x) + setup.integral_at(&grid, t, x, &mut profile, &mut scratch)
    };
    let diagnostics = PicardDiagnostics {
        iterations,
        last_increment: increment,
        accuracy,
    };
    Ok((
        ReferenceSolution {
            kind: OracleKind::PicardQuadrature,
            accuracy,
            eval: Arc::new(eval),
        },
        diagnostics,
    ))
}

pub fn picard_quadrature(p: &BsdeProblem, opts: PicardOptions) -> Result<ReferenceSolution> {
    picard_quadrature_detailed(p, opts).map(|(r, _)| r)
}

/// The best available reference for `p`: the closed form when it
/// applies, otherwise the Picard quadrature in one dimension.
pub fn reference_for(p: &BsdeProblem) -> Result<ReferenceSolution> {
    match affine_closed_form(p) {
        Ok(r) => Ok(r),
        Err(_) if p.dim == 1 => picard_quadrature(p, PicardOptions::default()),
        Err(_) => Err(Error::NoOracle(format!(
            "no reference solution for a non-affine driver in dimension {}",
            p.dim
        ))),
    }
}

/// Nested Monte Carlo estimate of the (depth + 1)-th Picard iterate
/// started from zero. Returns (value, standard error).
pub fn nested_mc(
    p: &BsdeProblem,
    t: f64,
    x: &[f64],
    depth: u32,
    samples_per_level: usize,
    seed: MasterSeed,
) -> Result<(f64, f64)> {
    p.check_time(t)?;
    if x.len() != p.dim {
        return Err(Error::LengthMismatch { expected: p.dim, got: x.len() });
    }
    if depth > 2 {
        return Err(invalid("depth", "at most 2"));
    }
    if samples_per_level < 2 {
        return Err(invalid("samples_per_level", "need at least 2"));
    }
    let work = (samples_per_level as f64).powi(depth as i32 + 1);
    if work > NESTED_BUDGET {
        return Err(Error::ResourceGuard(format!(
            "nested_mc needs {work:.3e} samples, limit {NESTED_BUDGET:.0e}"
        )));
    }
    if t == p.horizon {
        return Ok((p.terminal.evaluate(x), 0.0));
    }
    let terms = Exec::default().map_collect(0..samples_per_level, |s| {
        let mut path = vec![NESTED_SENTINEL, s as i64];
        outer_term(p, seed, &mut path, t, x, depth, samples_per_level)
    });
    Ok(mean_and_stderr(&terms))
}

fn outer_term(p: &BsdeProblem, seed: MasterSeed, path: &mut Vec<i64>, t: f64, x: &[f64], level: u32, samples: usize) -> f64 {
    let span = p.horizon - t;
    let mut z = vec![0.0; p.dim];
    path.push(0);
    node_draws_into(seed, path, &mut z);
    let y: Vec<f64> = x.iter().zip(&z).map(|(x, z)| x + span.sqrt() * z).collect();
    let g = p.terminal.evaluate(&y);
    *path.last_mut().unwrap() = 1;
    let r = node_draws_into(seed, path, &mut z);
    let tau = t + span * r;
    let xi: Vec<f64> = x.iter().zip(&z).map(|(x, z)| x + (tau - t).sqrt() * z).collect();
    let inner = if level == 0 {
        0.0
    } else {
        let mut sum = 0.0;
        for s in 0..samples {
            path.push(s as i64);
            sum += outer_term(p, seed, path, tau, &xi, level - 1, samples);
            path.pop();
        }
        sum / samples as f64
    };
    path.pop();
    g + span * p.driver.evaluate(tau, &xi, inner)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks |(f(v1)-f(w1)) - (f(v2)-f(w2))| against
/// B1 |(v1-w1)-(v2-w2)| + B2/2 (|v1-w1|+|v2-w2|) min(|v1-v2|, |w1-w2|)
/// for f with |f'| <= B1 and |f''| <= B2.
pub fn lipschitz_gap_check(f: impl Fn(f64) -> f64, b1: f64, b2: f64, v1: f64, v2: f64, w1: f64, w2: f64) -> GapCheck {
    let lhs = ((f(v1) - f(w1)) - (f(v2) - f(w2))).abs();
    let rhs = b1 * ((v1 - w1) - (v2 - w2)).abs()
        + 0.5 * b2 * ((v1 - w1).abs() + (v2 - w2).abs()) * (v1 - v2).abs().min((w1 - w2).abs());
    GapCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + GAP_SLACK,
    }
}
