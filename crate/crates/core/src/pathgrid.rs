//! Uniform nested time grids, piecewise-linear interpolation, and the
//! multi-grid path estimator
//!
//! ```text
//! 𝒴_t = Σ_{l<n} [ L_{l+1}(U^{[l]}_{n-l})(t) - 1{l>=1} L_l(U^{[l]}_{n-l})(t) ]
//! ```
//!
//! where `L_k` interpolates a field, evaluated along the Brownian path at
//! the nodes of the grid {jT/M^k}, linearly in time. Each level uses one
//! field realization for both its fine and coarse interpolant.

pub mod lemmas;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Exec;
use crate::mlp::{CostCounters, MlpConfig, MlpField};
use crate::oracle::ReferenceSolution;
use crate::problem::BsdeProblem;
use crate::randomness::{brownian_path_with, BrownianPath, MasterSeed, ThetaPath};

/// Node `k` of the uniform grid with `cells` cells on [0, T]. The last
/// node is T itself.
#[inline]
pub fn grid_time(k: u64, cells: u64, horizon: f64) -> f64 {
    if k == cells {
        horizon
    } else {
        (k as f64 * horizon) / cells as f64
    }
}

fn check_t(t: f64, horizon: f64) -> Result<()> {
    if (0.0..=horizon).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange { t, horizon })
    }
}

/// Index of the largest node of {kT/M} that is <= t and differs from T.
fn floor_index(t: f64, cells: u64, horizon: f64) -> u64 {
    let guess = ((t / horizon) * cells as f64).floor();
    let mut k = if guess.is_finite() && guess > 0.0 {
        (guess as u64).min(cells - 1)
    } else {
        0
    };
    while k > 0 && grid_time(k, cells, horizon) > t {
        k -= 1;
    }
    while k + 1 < cells && grid_time(k + 1, cells, horizon) <= t {
        k += 1;
    }
    k
}

/// ⌊t⌋_M: the largest grid node in [0, t] other than T.
pub fn floor_grid(t: f64, m: u64, horizon: f64) -> Result<f64> {
    check_t(t, horizon)?;
    if m == 0 {
        return Err(invalid("M", "must be at least 1"));
    }
    Ok(grid_time(floor_index(t, m, horizon), m, horizon))
}

/// ⌈t⌉_M: the smallest grid node in (t, ∞), or T when there is none.
pub fn ceil_grid(t: f64, m: u64, horizon: f64) -> Result<f64> {
    check_t(t, horizon)?;
    if m == 0 {
        return Err(invalid("M", "must be at least 1"));
    }
    let k = floor_index(t, m, horizon);
    // Nodes above k: k+1 is the first node greater than t unless t == T.
    if t >= horizon {
        return Ok(horizon);
    }
    Ok(grid_time(k + 1, m, horizon))
}

/// The grid {k T / M^level : k = 0..M^level}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "M")]
    pub m: u32,
    pub level: u32,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl GridSpec {
    pub fn new(m: u32, level: u32, horizon: f64) -> Result<Self> {
        if m == 0 {
            return Err(invalid("M", "must be at least 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("T", "horizon must be positive"));
        }
        (m as u64).checked_pow(level).ok_or(Error::Overflow("M^level"))?;
        Ok(GridSpec { m, level, horizon })
    }

    pub fn cells(&self) -> u64 {
        (self.m as u64).pow(self.level)
    }

    pub fn node_count(&self) -> usize {
        self.cells() as usize + 1
    }

    pub fn node(&self, k: u64) -> f64 {
        grid_time(k, self.cells(), self.horizon)
    }
}

/// Piecewise-linear interpolant of `nodes` on `grid`, evaluated at `t`.
/// Returns the node value exactly at grid nodes.
pub fn interpolate(nodes: &[f64], grid: &GridSpec, t: f64) -> Result<f64> {
    if nodes.len() != grid.node_count() {
        return Err(Error::LengthMismatch {
            expected: grid.node_count(),
            got: nodes.len(),
        });
    }
    check_t(t, grid.horizon)?;
    let cells = grid.cells();
    if cells == 0 {
        return Ok(nodes[0]);
    }
    let k = floor_index(t, cells, grid.horizon);
    let lo = grid.node(k);
    let hi = grid.node(k + 1);
    let (y0, y1) = (nodes[k as usize], nodes[k as usize + 1]);
    if t == lo {
        return Ok(y0);
    }
    if t == hi {
        return Ok(y1);
    }
    Ok(((hi - t) * y0 + (t - lo) * y1) / (hi - lo))
}

/// Interpolation of level values `y` (on the grid with `coarse_cells`
/// cells) at fine node `k` of the grid with `fine_cells` cells, using
/// exact index-ratio weights.
#[inline]
fn interpolate_at_fine_index(y: &[f64], k: u64, coarse_cells: u64, stride: u64) -> f64 {
    let j = (k / stride).min(coarse_cells - 1);
    let rem = k - j * stride;
    let w_lo = (stride - rem) as f64 / stride as f64;
    let w_hi = rem as f64 / stride as f64;
    w_lo * y[j as usize] + w_hi * y[j as usize + 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n: u32,
    #[serde(rename = "M")]
    pub m: u32,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub d: usize,
}

/// One realization of the path estimator on the fine grid {kT/M^n}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub fine_nodes: Vec<f64>,
    pub w_path: BrownianPath,
    pub config: PathConfig,
    pub counters: CostCounters,
    pub seed: MasterSeed,
}

impl PathEstimate {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            m: self.config.m,
            level: self.config.n,
            horizon: self.config.horizon,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let g = self.grid();
        (0..g.node_count() as u64).map(|k| g.node(k)).collect()
    }

    /// CSV with columns k, t_k, w_1..w_d, y (17 significant digits).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,t_k");
        for j in 1..=self.config.d {
            out.push_str(&format!(",w_{j}"));
        }
        out.push_str(",y\n");
        for (k, t) in self.times().into_iter().enumerate() {
            out.push_str(&format!("{k},{}", fmt_f64(t)));
            for w in self.w_path.point(k) {
                out.push(',');
                out.push_str(&fmt_f64(*w));
            }
            out.push(',');
            out.push_str(&fmt_f64(self.fine_nodes[k]));
            out.push('\n');
        }
        out
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn path_estimate(p: &BsdeProblem, seed: MasterSeed, n: u32, m: u32) -> Result<PathEstimate> {
    path_estimate_with(p, seed, n, m, Exec::default())
}

pub fn path_estimate_with(p: &BsdeProblem, seed: MasterSeed, n: u32, m: u32, exec: Exec) -> Result<PathEstimate> {
    if n == 0 {
        return Err(invalid("n", "path estimator needs n >= 1"));
    }
    MlpConfig::new(n, m)?;
    let w_path = brownian_path_with(seed, p.dim, m, n, p.horizon, exec)?;
    let mut counters = CostCounters {
        rv_scalars: (w_path.steps * p.dim) as u64,
        ..Default::default()
    };
    let fine_cells = w_path.steps as u64;
    let mm = m as u64;

    // values[l][j] = U^{[l]}_{n-l}(jT/M^{l+1}, W at that node)
    let mut level_values: Vec<Vec<f64>> = Vec::with_capacity(n as usize);
    for l in 0..n {
        let field = MlpField::new(p, seed, ThetaPath::new(vec![l as i64]), MlpConfig::new(n - l, m)?).with_exec(exec);
        let cells = mm.pow(l + 1);
        let stride = fine_cells / cells;
        let evals = exec.map_collect(0..cells as usize + 1, |j| {
            let j = j as u64;
            let t = grid_time(j, cells, p.horizon);
            let mut c = CostCounters::default();
            field
                .evaluate(t, w_path.point((j * stride) as usize), &mut c)
                .map(|v| (v, c))
        });
        let mut values = Vec::with_capacity(evals.len());
        for e in evals {
            let (v, c) = e?;
            values.push(v);
            counters += c;
        }
        level_values.push(values);
    }

    // Level-l nodes are every M-th level-(l+1) node.
    let coarse_values: Vec<Vec<f64>> = level_values
        .iter()
        .map(|v| v.iter().step_by(m as usize).copied().collect())
        .collect();
    let fine_nodes = (0..=fine_cells)
        .map(|k| {
            let mut y = 0.0;
            for l in 0..n {
                let cells = mm.pow(l + 1);
                let fine = interpolate_at_fine_index(&level_values[l as usize], k, cells, fine_cells / cells);
                if l == 0 {
                    y = fine;
                } else {
                    let coarse_cells = mm.pow(l);
                    let coarse = interpolate_at_fine_index(
                        &coarse_values[l as usize],
                        k,
                        coarse_cells,
                        fine_cells / coarse_cells,
                    );
                    y += fine - coarse;
                }
            }
            y
        })
        .collect();

    Ok(PathEstimate {
        fine_nodes,
        w_path,
        config: PathConfig {
            n,
            m,
            horizon: p.horizon,
            d: p.dim,
        },
        counters,
        seed,
    })
}

/// 𝒴_t at arbitrary t: linear interpolation of the fine-grid values.
pub fn path_value(est: &PathEstimate, t: f64) -> Result<f64> {
    interpolate(&est.fine_nodes, &est.grid(), t)
}

/// Largest |𝒴_k - u(t_k, W_{t_k})| over the fine grid, with the reference
/// evaluated along the same Brownian path.
pub fn sup_grid_error(est: &PathEstimate, oracle: &ReferenceSolution) -> f64 {
    est.times()
        .iter()
        .enumerate()
        .map(|(k, &t)| (est.fine_nodes[k] - oracle.evaluate(t, est.w_path.point(k))).abs())
        .fold(0.0, f64::max)
}

/// Per-replication sup-grid errors of independent path estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub sup_errors: Vec<f64>,
    /// Counters summed over all replications.
    pub counters: CostCounters,
    /// Counters of a single replication (identical for every replication).
    pub per_replication: CostCounters,
}

impl ReplicationSummary {
    /// Root mean square of the sup-grid errors.
    pub fn rmse(&self) -> f64 {
        let n = self.sup_errors.len() as f64;
        (self.sup_errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt()
    }
}

/// Runs `replications` path estimates with seeds `seed.derive(r)` and
/// measures each against `oracle`. Aggregation order is fixed.
pub fn replicate_sup_errors(
    p: &BsdeProblem,
    oracle: &ReferenceSolution,
    n: u32,
    m: u32,
    replications: usize,
    seed: MasterSeed,
    exec: Exec,
) -> Result<ReplicationSummary> {
    if replications == 0 {
        return Err(invalid("replications", "must be at least 1"));
    }
    let runs = exec.map_collect(0..replications, |r| {
        path_estimate_with(p, seed.derive(r as u64), n, m, exec).map(|est| (sup_grid_error(&est, oracle), est.counters))
    });
    let mut sup_errors = Vec::with_capacity(replications);
    let mut counters = CostCounters::default();
    let mut per_replication = CostCounters::default();
    for run in runs {
        let (e, c) = run?;
        sup_errors.push(e);
        counters += c;
        per_replication = c;
    }
    Ok(ReplicationSummary {
        sup_errors,
        counters,
        per_replication,
    })
}
