//! Cost recursions, closed-form cost bounds, error-bound formulas and the
//! pilot-based choice of the level n for a target accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Exec;
use crate::oracle::reference_for;
use crate::pathgrid::replicate_sup_errors;
use crate::problem::BsdeProblem;
use crate::randomness::MasterSeed;

/// Largest level tried by [`select_n`].
pub const SELECT_MAX_LEVEL: u32 = 6;

fn overflow() -> Error {
    Error::Overflow("cost recursion")
}

fn check_base(m: u32, alpha: u64) -> Result<()> {
    if m == 0 {
        return Err(invalid("M", "must be at least 1"));
    }
    if alpha == 0 {
        return Err(invalid("alpha", "must be at least 1"));
    }
    Ok(())
}

/// C_0, ..., C_n of the MLP cost recursion taken with equality.
fn mlp_cost_table(n: u32, m: u32, alpha: u64) -> Result<Vec<u64>> {
    check_base(m, alpha)?;
    (5u64 * m as u64).checked_pow(n).ok_or_else(overflow)?;
    let m = m as u64;
    let mut c: Vec<u64> = vec![0];
    for k in 1..=n {
        let mut total = alpha.checked_mul(m.pow(k)).ok_or_else(overflow)?;
        for l in 0..k {
            let prev = if l >= 1 { c[l as usize - 1] } else { 0 };
            let inner = (1 + alpha)
                .checked_add(c[l as usize])
                .and_then(|v| v.checked_add(prev))
                .ok_or_else(overflow)?;
            let term = m.pow(k - l).checked_mul(inner).ok_or_else(overflow)?;
            total = total.checked_add(term).ok_or_else(overflow)?;
        }
        c.push(total);
    }
    Ok(c)
}

/// C_{n,M}: the MLP cost recursion with equality.
pub fn cost_mlp_bound(n: u32, m: u32, alpha: u64) -> Result<u64> {
    Ok(mlp_cost_table(n, m, alpha)?[n as usize])
}

/// alpha (5M)^n.
pub fn cost_mlp_closed(n: u32, m: u32, alpha: u64) -> Result<u64> {
    check_base(m, alpha)?;
    (5u64 * m as u64)
        .checked_pow(n)
        .and_then(|v| v.checked_mul(alpha))
        .ok_or_else(overflow)
}

/// Path estimator cost with equality, alpha (M^n + 1) +
/// sum_l (M^{l+1} + 1) C_{n-l}, and the closed bound (n+2)(5M)^{n+1} alpha.
pub fn cost_path_bound(n: u32, m: u32, alpha: u64) -> Result<(u64, u64)> {
    let table = mlp_cost_table(n, m, alpha)?;
    let mm = m as u64;
    let mut exact = mm
        .checked_pow(n)
        .and_then(|v| v.checked_add(1))
        .and_then(|v| v.checked_mul(alpha))
        .ok_or_else(overflow)?;
    for l in 0..n {
        let evals = mm.checked_pow(l + 1).ok_or_else(overflow)? + 1;
        let term = evals.checked_mul(table[(n - l) as usize]).ok_or_else(overflow)?;
        exact = exact.checked_add(term).ok_or_else(overflow)?;
    }
    let closed = (5u64 * mm)
        .checked_pow(n + 1)
        .and_then(|v| v.checked_mul(n as u64 + 2))
        .and_then(|v| v.checked_mul(alpha))
        .ok_or_else(overflow)?;
    Ok((exact, closed))
}

/// Pointwise RMS bound e^{M/2} M^{-N/2} (50 e^{2LT})^{N+1} V_beta.
pub fn err_bound_mlp(n: u32, m: u32, lipschitz: f64, horizon: f64, v_beta: f64) -> f64 {
    let m = m as f64;
    let n = n as f64;
    (m / 2.0).exp() * m.powf(-n / 2.0) * (50.0 * (2.0 * lipschitz * horizon).exp()).powf(n + 1.0) * v_beta
}

/// Path RMS bound
/// 8n e^{M/2 + 4nLT + rho T/2} M^{-n/2} 50^{2n} (V0 max{E|z|^4, 1})^{1/4}.
pub fn err_bound_path(
    n: u32,
    m: u32,
    lipschitz: f64,
    horizon: f64,
    rho: f64,
    v0: f64,
    z_fourth_moment: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "path bound needs n >= 1"));
    }
    if m == 0 {
        return Err(invalid("M", "must be at least 1"));
    }
    let (nf, mf) = (n as f64, m as f64);
    let expo = mf / 2.0 + 4.0 * nf * lipschitz * horizon + rho * horizon / 2.0;
    Ok(8.0 * nf * expo.exp() * mf.powf(-nf / 2.0) * 50f64.powf(2.0 * nf) * (v0 * z_fourth_moment.max(1.0)).abs().powf(0.25))
}

/// E|Z|^4 = d^2 + 2d for a standard normal vector in d dimensions.
pub fn z_fourth_moment(d: usize) -> f64 {
    let d = d as f64;
    d * d + 2.0 * d
}

/// The counting convention unit: one uniform, d normals, two f calls.
pub fn default_alpha(d: usize) -> u64 {
    d as u64 + 3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: u32,
    #[serde(rename = "M")]
    pub m: u32,
    pub cost_mlp_exact: u64,
    pub cost_mlp_closed: u64,
    pub cost_path_exact: u64,
    pub cost_path_closed: u64,
    pub err_mlp: f64,
    pub err_path: f64,
    pub alpha: u64,
}

impl BoundReport {
    pub fn new(p: &BsdeProblem, n: u32, m: u32) -> Result<Self> {
        Self::with_alpha(p, n, m, default_alpha(p.dim))
    }

    pub fn with_alpha(p: &BsdeProblem, n: u32, m: u32, alpha: u64) -> Result<Self> {
        let (cost_path_exact, cost_path_closed) = cost_path_bound(n, m, alpha)?;
        let lip = p.lipschitz();
        Ok(BoundReport {
            n,
            m,
            cost_mlp_exact: cost_mlp_bound(n, m, alpha)?,
            cost_mlp_closed: cost_mlp_closed(n, m, alpha)?,
            cost_path_exact,
            cost_path_closed,
            err_mlp: err_bound_mlp(n, m, lip, p.horizon, p.v_beta_at_origin()),
            err_path: err_bound_path(n, m, lip, p.horizon, p.rho, p.lyapunov_v0, z_fourth_moment(p.dim))?,
            alpha,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub replications: usize,
    pub seed: MasterSeed,
    /// Refuse a level whose predicted cost over all replications exceeds this.
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub n: u32,
    /// (n, pilot sup-grid RMS error) for every level tried
    pub pilot: Vec<(u32, f64)>,
}

/// Smallest n = M whose pilot estimate of the sup-over-grid RMS error
/// against the reference solution is below `epsilon`.
pub fn select_n(p: &BsdeProblem, epsilon: f64, pilot: PilotConfig) -> Result<Selection> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon", "must be positive and finite"));
    }
    if pilot.replications == 0 {
        return Err(invalid("replications", "must be at least 1"));
    }
    let oracle = reference_for(p)?;
    let alpha = default_alpha(p.dim);
    let mut table = Vec::new();
    for n in 1..=SELECT_MAX_LEVEL {
        let predicted = cost_path_bound(n, n, alpha)?
            .0
            .checked_mul(pilot.replications as u64)
            .ok_or_else(overflow)?;
        if predicted > pilot.budget {
            return Err(Error::ResourceGuard(format!(
                "level n = {n} needs up to {predicted} operations, budget {}",
                pilot.budget
            )));
        }
        let summary = replicate_sup_errors(p, &oracle, n, n, pilot.replications, pilot.seed, Exec::default())?;
        let rmse = summary.rmse();
        table.push((n, rmse));
        if rmse < epsilon {
            return Ok(Selection { n, pilot: table });
        }
    }
    Err(Error::AccuracyNotReached {
        epsilon,
        n_max: SELECT_MAX_LEVEL,
    })
}
