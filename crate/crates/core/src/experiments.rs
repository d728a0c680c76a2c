//! Experiment commands behind the `mlpbsde` binary. Each command returns
//! its output files in memory; the binary writes them to disk.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ExperimentConfig, Format};
use crate::cost::{
    cost_mlp_bound, cost_mlp_closed, cost_path_bound, default_alpha, err_bound_path, select_n, z_fourth_moment, BoundReport,
    PilotConfig, Selection,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mlp::{mlp_evaluate, CostCounters, MlpConfig};
use crate::oracle::reference_for;
use crate::pathgrid::{fmt_f64, path_estimate_with, replicate_sup_errors};
use crate::problem::BsdeProblem;
use crate::randomness::{mix64, MasterSeed, ThetaPath};
use crate::validate::{run_validation, Faults};
use crate::VERSION;

const BOOTSTRAP_RESAMPLES: usize = 200;

const ERROR_MEASURE: &str =
    "max over fine-grid nodes of |Y_k - u(t_k, W_{t_k})| per replication, root mean square over replications";

/// One output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub artifacts: Vec<Artifact>,
    /// Human-readable table for standard output.
    pub summary: String,
    /// Timing notes for standard error; never written to files.
    pub notes: Vec<String>,
    /// False when an asserted invariant failed.
    pub passed: bool,
}

impl CommandOutput {
    fn new(summary: String) -> Self {
        CommandOutput {
            artifacts: Vec::new(),
            summary,
            notes: Vec::new(),
            passed: true,
        }
    }

    fn push(&mut self, cfg: &ExperimentConfig, format: Format, name: &str, contents: String) {
        if cfg.output.wants(format) {
            self.artifacts.push(Artifact {
                name: name.to_string(),
                contents,
            });
        }
    }

    pub fn artifact(&self, name: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.name == name).map(|a| a.contents.as_str())
    }
}

fn to_json(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn check_budget(predicted: u64, budget: u64, what: &str) -> Result<()> {
    if predicted > budget {
        return Err(Error::ResourceGuard(format!(
            "{what}: predicted cost {predicted} exceeds budget {budget}"
        )));
    }
    Ok(())
}

fn predicted_path_cost(n: u32, m: u32, d: usize, replications: usize) -> Result<u64> {
    cost_path_bound(n, m, default_alpha(d))?
        .0
        .checked_mul(replications as u64)
        .ok_or(Error::Overflow("predicted cost"))
}

/// Single path solve: path CSV, counters JSON and bound report.
pub fn cmd_solve_path(cfg: &ExperimentConfig, budget: u64) -> Result<CommandOutput> {
    let p = cfg.problem.build()?;
    let (n, m) = (cfg.method.n, cfg.method.m);
    MlpConfig::new(n, m)?;
    check_budget(predicted_path_cost(n, m, p.dim, 1)?, budget, "solve")?;
    let start = Instant::now();
    let est = path_estimate_with(&p, cfg.seed(), n, m, Exec::default())?;
    let bounds = BoundReport::new(&p, n, m)?;

    let last = est.fine_nodes.len() - 1;
    let mut summary = String::new();
    writeln!(summary, "solve {} d={} n={n} M={m} seed={}", cfg.problem.family, p.dim, cfg.method.seed).unwrap();
    writeln!(summary, "fine nodes      {}", est.fine_nodes.len()).unwrap();
    writeln!(summary, "Y_0             {}", fmt_f64(est.fine_nodes[0])).unwrap();
    writeln!(summary, "Y_T             {}", fmt_f64(est.fine_nodes[last])).unwrap();
    writeln!(summary, "measured cost   {}", est.counters.total()).unwrap();
    writeln!(summary, "cost bound      {} (alpha = {})", bounds.cost_path_exact, bounds.alpha).unwrap();

    let mut out = CommandOutput::new(summary);
    out.notes.push(format!("solve: {:.3} s", start.elapsed().as_secs_f64()));
    out.push(cfg, Format::Csv, "path.csv", est.to_csv());
    let meta = json!({
        "version": VERSION,
        "command": "solve",
        "config": cfg,
        "n": n,
        "M": m,
        "seed": cfg.method.seed,
        "counters": est.counters,
        "measured_cost": est.counters.total(),
    });
    out.push(cfg, Format::Json, "path.json", to_json(&meta));
    out.push(
        cfg,
        Format::Json,
        "bounds.json",
        to_json(&json!({ "version": VERSION, "bounds": bounds })),
    );
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u32,
    #[serde(rename = "M")]
    pub m: u32,
    #[serde(rename = "R")]
    pub r: usize,
    pub sup_grid_rmse: f64,
    pub rmse_stderr: f64,
    pub theory_bound: f64,
    pub measured_cost: u64,
    pub cost_bound: u64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Bootstrap standard error of the root mean square of `errors`.
pub fn bootstrap_rmse_stderr(errors: &[f64], seed: u64) -> f64 {
    if errors.len() < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = errors.len();
    let stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let s: f64 = (0..n).map(|_| errors[rng.gen_range(0..n)].powi(2)).sum();
            (s / n as f64).sqrt()
        })
        .collect();
    crate::mlp::mean_and_stderr(&stats).1 * (BOOTSTRAP_RESAMPLES as f64).sqrt()
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

fn convergence_row(p: &BsdeProblem, cfg: &ExperimentConfig, n: u32, oracle: &crate::oracle::ReferenceSolution) -> Result<ConvergenceRow> {
    let r = cfg.method.replications;
    let start = Instant::now();
    let summary = replicate_sup_errors(p, oracle, n, n, r, cfg.seed(), Exec::default())?;
    Ok(ConvergenceRow {
        n,
        m: n,
        r,
        sup_grid_rmse: summary.rmse(),
        rmse_stderr: bootstrap_rmse_stderr(&summary.sup_errors, mix64(cfg.method.seed ^ n as u64)),
        theory_bound: err_bound_path(n, n, p.lipschitz(), p.horizon, p.rho, p.lyapunov_v0, z_fourth_moment(p.dim))?,
        measured_cost: summary.per_replication.total(),
        cost_bound: cost_path_bound(n, n, default_alpha(p.dim))?.0,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Convergence study over n = M in `study.n_list`.
pub fn cmd_convergence(cfg: &ExperimentConfig, budget: u64) -> Result<(CommandOutput, Vec<ConvergenceRow>)> {
    let p = cfg.problem.build()?;
    let r = cfg.method.replications;
    let mut predicted = 0u64;
    for &n in &cfg.study.n_list {
        MlpConfig::new(n, n)?;
        predicted = predicted.saturating_add(predicted_path_cost(n, n, p.dim, r)?);
    }
    check_budget(predicted, budget, "converge")?;
    let oracle = reference_for(&p)?;

    let mut rows = Vec::new();
    for &n in &cfg.study.n_list {
        rows.push(convergence_row(&p, cfg, n, &oracle)?);
    }
    let slope = fit_slope(
        &rows.iter().map(|r| r.n as f64).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.sup_grid_rmse.log2()).collect::<Vec<_>>(),
    );

    let mut csv = String::from("n,M,R,sup_grid_rmse,rmse_stderr,theory_bound,measured_cost,cost_bound\n");
    let mut summary = format!(
        "converge {} d={} R={r} oracle={}\n{:>3} {:>3} {:>14} {:>14} {:>14} {:>12} {:>14}\n",
        cfg.problem.family,
        p.dim,
        oracle.kind(),
        "n",
        "M",
        "sup_grid_rmse",
        "rmse_stderr",
        "theory_bound",
        "cost",
        "cost_bound"
    );
    let mut notes = Vec::new();
    for row in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.n,
            row.m,
            row.r,
            fmt_f64(row.sup_grid_rmse),
            fmt_f64(row.rmse_stderr),
            fmt_f64(row.theory_bound),
            row.measured_cost,
            row.cost_bound
        )
        .unwrap();
        writeln!(
            summary,
            "{:>3} {:>3} {:>14.6e} {:>14.6e} {:>14.6e} {:>12} {:>14}",
            row.n, row.m, row.sup_grid_rmse, row.rmse_stderr, row.theory_bound, row.measured_cost, row.cost_bound
        )
        .unwrap();
        notes.push(format!("converge n={}: {:.3} s", row.n, row.wall_time_s));
    }
    if let Some(s) = slope {
        writeln!(summary, "log2 error slope per level: {s:.4}").unwrap();
    }
    // Level selection for a target accuracy uses the empirical pilot, not
    // the theoretical bound.
    let selection: Option<Selection> = match cfg.study.epsilon {
        Some(eps) => {
            let pilot = PilotConfig {
                replications: r,
                seed: cfg.seed(),
                budget: budget.saturating_sub(predicted),
            };
            let sel = select_n(&p, eps, pilot)?;
            writeln!(summary, "selected n = M = {} for epsilon = {eps} (pilot rule)", sel.n).unwrap();
            Some(sel)
        }
        None => None,
    };
    let mut out = CommandOutput::new(summary);
    out.notes = notes;
    out.push(cfg, Format::Csv, "convergence.csv", csv);
    let meta = json!({
        "version": VERSION,
        "command": "converge",
        "config": cfg,
        "error_measure": ERROR_MEASURE,
        "oracle": { "kind": oracle.kind(), "accuracy": oracle.accuracy() },
        "log2_slope": slope,
        "selection": selection.map(|s| json!({
            "epsilon": cfg.study.epsilon,
            "rule": "pilot",
            "n": s.n,
            "pilot": s.pilot,
        })),
        "rows": rows,
    });
    out.push(cfg, Format::Json, "convergence.json", to_json(&meta));
    Ok((out, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub n: u32,
    #[serde(rename = "M")]
    pub m: u32,
    pub d: usize,
    pub alpha: u64,
    pub measured_mlp: u64,
    pub recursion_mlp: u64,
    pub closed_mlp: u64,
    pub measured_path: u64,
    pub recursion_path: u64,
    pub closed_path: u64,
    pub chain_ok: bool,
    pub affine_in_d: bool,
}

/// Measured counters of one MLP evaluation and one path estimate.
pub fn measured_costs(p: &BsdeProblem, n: u32, m: u32, seed: MasterSeed) -> Result<(CostCounters, CostCounters)> {
    let mut mlp = CostCounters::default();
    mlp_evaluate(p, seed, &ThetaPath::root(), MlpConfig::new(n, m)?, 0.0, &vec![0.0; p.dim], &mut mlp)?;
    let path = path_estimate_with(p, seed, n, m, Exec::default())?.counters;
    Ok((mlp, path))
}

/// Measured versus recursive versus closed-form costs for n <= n_max,
/// M <= M_max and d in d_list.
pub fn cmd_cost_table(cfg: &ExperimentConfig, budget: u64) -> Result<(CommandOutput, Vec<CostRow>)> {
    let (n_max, m_max) = (cfg.study.n_max, cfg.study.m_max);
    let mut dims = cfg.study.d_list.clone();
    dims.sort_unstable();
    dims.dedup();
    let mut predicted = 0u64;
    for n in 1..=n_max {
        for m in 1..=m_max {
            MlpConfig::new(n, m)?;
            for &d in dims.iter().chain([1, 2].iter()) {
                predicted = predicted.saturating_add(predicted_path_cost(n, m, d, 1)?);
            }
        }
    }
    check_budget(predicted, budget, "cost")?;

    let seed = cfg.seed();
    let mut rows = Vec::new();
    for n in 1..=n_max {
        for m in 1..=m_max {
            let (mlp1, path1) = measured_costs(&cfg.problem.build_with_dim(1)?, n, m, seed)?;
            let (mlp2, path2) = measured_costs(&cfg.problem.build_with_dim(2)?, n, m, seed)?;
            let slope_mlp = mlp2.total() as i128 - mlp1.total() as i128;
            let slope_path = path2.total() as i128 - path1.total() as i128;
            for &d in &dims {
                let (mlp, path) = measured_costs(&cfg.problem.build_with_dim(d)?, n, m, seed)?;
                let alpha = default_alpha(d);
                let recursion_mlp = cost_mlp_bound(n, m, alpha)?;
                let closed_mlp = cost_mlp_closed(n, m, alpha)?;
                let (recursion_path, closed_path) = cost_path_bound(n, m, alpha)?;
                let chain_ok = mlp.total() <= recursion_mlp
                    && recursion_mlp <= closed_mlp
                    && path.total() <= recursion_path
                    && recursion_path <= closed_path;
                let dd = d as i128 - 1;
                let affine_in_d = mlp.total() as i128 == mlp1.total() as i128 + dd * slope_mlp
                    && path.total() as i128 == path1.total() as i128 + dd * slope_path;
                rows.push(CostRow {
                    n,
                    m,
                    d,
                    alpha,
                    measured_mlp: mlp.total(),
                    recursion_mlp,
                    closed_mlp,
                    measured_path: path.total(),
                    recursion_path,
                    closed_path,
                    chain_ok,
                    affine_in_d,
                });
            }
        }
    }

    let header = "n,M,d,alpha,measured_mlp,recursion_mlp,closed_mlp,measured_path,recursion_path,closed_path,chain_ok,affine_in_d";
    let mut csv = format!("{header}\n");
    let mut summary = format!(
        "cost table (alpha = d + 3)\n{:>2} {:>2} {:>3} {:>12} {:>12} {:>14} {:>12} {:>12} {:>16} {:>5} {:>6}\n",
        "n", "M", "d", "mlp", "recursion", "closed", "path", "recursion", "closed", "chain", "affine"
    );
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.m,
            r.d,
            r.alpha,
            r.measured_mlp,
            r.recursion_mlp,
            r.closed_mlp,
            r.measured_path,
            r.recursion_path,
            r.closed_path,
            r.chain_ok,
            r.affine_in_d
        )
        .unwrap();
        writeln!(
            summary,
            "{:>2} {:>2} {:>3} {:>12} {:>12} {:>14} {:>12} {:>12} {:>16} {:>5} {:>6}",
            r.n,
            r.m,
            r.d,
            r.measured_mlp,
            r.recursion_mlp,
            r.closed_mlp,
            r.measured_path,
            r.recursion_path,
            r.closed_path,
            r.chain_ok,
            r.affine_in_d
        )
        .unwrap();
    }
    let all_ok = rows.iter().all(|r| r.chain_ok && r.affine_in_d);
    writeln!(summary, "{}", if all_ok { "all rows satisfy the cost chain" } else { "COST CHAIN VIOLATED" }).unwrap();
    let mut out = CommandOutput::new(summary);
    out.passed = all_ok;
    out.push(cfg, Format::Csv, "cost.csv", csv);
    let meta = json!({
        "version": VERSION,
        "command": "cost",
        "config": cfg,
        "all_ok": all_ok,
        "rows": rows,
    });
    out.push(cfg, Format::Json, "cost.json", to_json(&meta));
    Ok((out, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimRow {
    pub d: usize,
    pub n: u32,
    #[serde(rename = "M")]
    pub m: u32,
    #[serde(rename = "R")]
    pub r: usize,
    pub sup_grid_rmse: f64,
    pub rmse_stderr: f64,
    pub measured_cost: u64,
    pub cost_bound: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSweep {
    pub rows: Vec<DimRow>,
    /// Per-dimension cost increment when the measured cost is affine in d.
    pub affine_increment: Option<u64>,
    /// Log-log slope of cost against d over the rows with d >= 5.
    pub loglog_slope: Option<f64>,
}

/// Returns B when cost(d) = A + B d holds exactly for every row.
pub fn affine_increment(points: &[(usize, u64)]) -> Option<u64> {
    let (d0, c0) = *points.first()?;
    let (d1, c1) = *points.iter().find(|(d, _)| *d != d0)?;
    let num = c1 as i128 - c0 as i128;
    let den = d1 as i128 - d0 as i128;
    if num % den != 0 {
        return None;
    }
    let b = num / den;
    let ok = points.iter().all(|&(d, c)| c as i128 == c0 as i128 + (d as i128 - d0 as i128) * b);
    if ok && b >= 0 {
        Some(b as u64)
    } else {
        None
    }
}

/// Cost and error against dimension at fixed n and M.
pub fn cmd_dim_sweep(cfg: &ExperimentConfig, budget: u64) -> Result<(CommandOutput, DimSweep)> {
    let (n, m) = (cfg.method.n, cfg.method.m);
    let r = cfg.method.replications;
    MlpConfig::new(n, m)?;
    let mut predicted = 0u64;
    for &d in &cfg.study.d_list {
        predicted = predicted.saturating_add(predicted_path_cost(n, m, d, r)?);
    }
    check_budget(predicted, budget, "dimsweep")?;

    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &d in &cfg.study.d_list {
        let start = Instant::now();
        let p = cfg.problem.build_with_dim(d)?;
        let oracle = reference_for(&p)?;
        let s = replicate_sup_errors(&p, &oracle, n, m, r, cfg.seed(), Exec::default())?;
        rows.push(DimRow {
            d,
            n,
            m,
            r,
            sup_grid_rmse: s.rmse(),
            rmse_stderr: bootstrap_rmse_stderr(&s.sup_errors, mix64(cfg.method.seed ^ d as u64)),
            measured_cost: s.per_replication.total(),
            cost_bound: cost_path_bound(n, m, default_alpha(d))?.0,
        });
        notes.push(format!("dimsweep d={d}: {:.3} s", start.elapsed().as_secs_f64()));
    }
    let points: Vec<(usize, u64)> = rows.iter().map(|r| (r.d, r.measured_cost)).collect();
    let large: Vec<&DimRow> = rows.iter().filter(|r| r.d >= 5).collect();
    let sweep = DimSweep {
        affine_increment: affine_increment(&points),
        loglog_slope: fit_slope(
            &large.iter().map(|r| (r.d as f64).ln()).collect::<Vec<_>>(),
            &large.iter().map(|r| (r.measured_cost as f64).ln()).collect::<Vec<_>>(),
        ),
        rows,
    };

    let mut csv = String::from("d,n,M,R,sup_grid_rmse,rmse_stderr,measured_cost,cost_bound\n");
    let mut summary = format!(
        "dimsweep {} n={n} M={m} R={r}\n{:>4} {:>14} {:>14} {:>12} {:>14}\n",
        cfg.problem.family, "d", "sup_grid_rmse", "rmse_stderr", "cost", "cost_bound"
    );
    for row in &sweep.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.d,
            row.n,
            row.m,
            row.r,
            fmt_f64(row.sup_grid_rmse),
            fmt_f64(row.rmse_stderr),
            row.measured_cost,
            row.cost_bound
        )
        .unwrap();
        writeln!(
            summary,
            "{:>4} {:>14.6e} {:>14.6e} {:>12} {:>14}",
            row.d, row.sup_grid_rmse, row.rmse_stderr, row.measured_cost, row.cost_bound
        )
        .unwrap();
    }
    match sweep.affine_increment {
        Some(b) => writeln!(summary, "cost is affine in d, increment {b} per dimension").unwrap(),
        None => writeln!(summary, "cost is not affine in d").unwrap(),
    }
    if let Some(s) = sweep.loglog_slope {
        writeln!(summary, "log-log slope of cost vs d (d >= 5): {s:.4}").unwrap();
    }
    let mut out = CommandOutput::new(summary);
    out.notes = notes;
    out.push(cfg, Format::Csv, "dimsweep.csv", csv);
    let meta = json!({
        "version": VERSION,
        "command": "dimsweep",
        "config": cfg,
        "error_measure": ERROR_MEASURE,
        "sweep": sweep,
    });
    out.push(cfg, Format::Json, "dimsweep.json", to_json(&meta));
    Ok((out, sweep))
}

/// Runs the property suites. `passed` is false when any check fails.
pub fn cmd_validate(cfg: Option<&ExperimentConfig>, faults: Faults) -> CommandOutput {
    let report = run_validation(faults);
    let text = report.render();
    let mut out = CommandOutput::new(text.clone());
    out.passed = report.passed();
    let wants = |f: Format| cfg.is_none_or(|c| c.output.wants(f));
    if wants(Format::Csv) {
        out.artifacts.push(Artifact {
            name: "validate.txt".into(),
            contents: text,
        });
    }
    if wants(Format::Json) {
        out.artifacts.push(Artifact {
            name: "validate.json".into(),
            contents: to_json(&json!({ "version": VERSION, "checks": report.checks, "passed": report.passed() })),
        });
    }
    out
}
