//! Problem definitions: driver, terminal condition, growth constants, and
//! the builtin families used by tests and experiments.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::randomness::{KeyedStream, MasterSeed};

pub const MAX_DIMENSION: usize = 1_000_000;
pub const DEFAULT_BETA: f64 = 1.0 / 12.0;

/// The nonlinearity f(t, x, v).
pub trait Driver: Send + Sync + fmt::Debug {
    fn evaluate(&self, t: f64, x: &[f64], v: f64) -> f64;

    /// Lipschitz constant in `v`.
    fn lipschitz(&self) -> f64;

    /// `Some((a, b))` when f(t, x, v) = a v + b.
    fn affine(&self) -> Option<(f64, f64)> {
        None
    }

    fn depends_on_tx(&self) -> bool {
        false
    }

    /// Bounds on sup|f'| and sup|f''| for drivers depending on `v` only.
    fn derivative_bounds(&self) -> Option<(f64, f64)> {
        None
    }
}

/// The terminal condition g(x).
pub trait Terminal: Send + Sync + fmt::Debug {
    fn evaluate(&self, x: &[f64]) -> f64;

    /// G(s, x) = E[g(x + sqrt(s) Z)] when available in closed form.
    fn gaussian_smoothing(&self, _s: f64, _x: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroDriver;

impl Driver for ZeroDriver {
    fn evaluate(&self, _t: f64, _x: &[f64], _v: f64) -> f64 {
        0.0
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn affine(&self) -> Option<(f64, f64)> {
        Some((0.0, 0.0))
    }
    fn derivative_bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDriver {
    pub a: f64,
    pub b: f64,
}

impl Driver for AffineDriver {
    fn evaluate(&self, _t: f64, _x: &[f64], v: f64) -> f64 {
        self.a * v + self.b
    }
    fn lipschitz(&self) -> f64 {
        self.a.abs()
    }
    fn affine(&self) -> Option<(f64, f64)> {
        Some((self.a, self.b))
    }
    fn derivative_bounds(&self) -> Option<(f64, f64)> {
        Some((self.a.abs(), 0.0))
    }
}

/// f(v) = sin(v).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineDriver;

impl Driver for SineDriver {
    fn evaluate(&self, _t: f64, _x: &[f64], v: f64) -> f64 {
        v.sin()
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn derivative_bounds(&self) -> Option<(f64, f64)> {
        Some((1.0, 1.0))
    }
}

/// g(x) = prod_i cos(x_i).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosProduct;

impl Terminal for CosProduct {
    fn evaluate(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.cos()).product()
    }
    fn gaussian_smoothing(&self, s: f64, x: &[f64]) -> Option<f64> {
        if s == 0.0 {
            return Some(self.evaluate(x));
        }
        Some((-(x.len() as f64) * s / 2.0).exp() * self.evaluate(x))
    }
}

/// g(x) = exp(<c, x>).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpLinear {
    pub c: Vec<f64>,
}

impl ExpLinear {
    fn dot(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }
}

impl Terminal for ExpLinear {
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.dot(x).exp()
    }
    fn gaussian_smoothing(&self, s: f64, x: &[f64]) -> Option<f64> {
        if s == 0.0 {
            return Some(self.evaluate(x));
        }
        let norm2: f64 = self.c.iter().map(|c| c * c).sum();
        Some((self.dot(x) + s * norm2 / 2.0).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    CosZero,
    CosAffine,
    ExpAffine,
    CosSine,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::CosZero => "cos_zero",
            Family::CosAffine => "cos_affine",
            Family::ExpAffine => "exp_affine",
            Family::CosSine => "cos_sine",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos_zero" => Ok(Family::CosZero),
            "cos_affine" => Ok(Family::CosAffine),
            "exp_affine" => Ok(Family::ExpAffine),
            "cos_sine" => Ok(Family::CosSine),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// Family-specific constants. Missing entries take the family defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Coefficient vector of the exponential terminal; a single entry is
    /// broadcast to all coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "V0", default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BsdeProblem {
    pub horizon: f64,
    pub dim: usize,
    pub driver: Arc<dyn Driver>,
    pub terminal: Arc<dyn Terminal>,
    pub rho: f64,
    pub beta: f64,
    pub lyapunov_v0: f64,
    pub family: Option<Family>,
}

impl BsdeProblem {
    /// Builds a problem from arbitrary driver and terminal. Growth
    /// constants default to rho = 0, beta = 1/12, V(0) = 1.
    pub fn new(horizon: f64, dim: usize, driver: Arc<dyn Driver>, terminal: Arc<dyn Terminal>) -> Result<Self> {
        check_horizon(horizon)?;
        check_dim(dim)?;
        Ok(BsdeProblem {
            horizon,
            dim,
            driver,
            terminal,
            rho: 0.0,
            beta: DEFAULT_BETA,
            lyapunov_v0: 1.0,
            family: None,
        })
    }

    pub fn with_growth(mut self, rho: f64, beta: f64, v0: f64) -> Self {
        self.rho = rho;
        self.beta = beta;
        self.lyapunov_v0 = v0;
        self
    }

    pub fn lipschitz(&self) -> f64 {
        self.driver.lipschitz()
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange { t, horizon: self.horizon })
        }
    }

    /// (e^{rho T} V(0))^beta, the weight at the path origin.
    pub fn v_beta_at_origin(&self) -> f64 {
        ((self.rho * self.horizon).exp() * self.lyapunov_v0).powf(self.beta)
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(invalid("T", format!("horizon must be positive and finite, got {horizon}")))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    if dim > MAX_DIMENSION {
        return Err(Error::ResourceGuard(format!("dimension {dim} exceeds {MAX_DIMENSION}")));
    }
    Ok(())
}

pub fn builtin_problem(family: Family, dim: usize, params: &ProblemParams) -> Result<BsdeProblem> {
    check_dim(dim)?;
    let horizon = params.horizon.unwrap_or(1.0);
    check_horizon(horizon)?;
    let a = params.a.unwrap_or(0.3);
    let b = params.b.unwrap_or(0.1);
    let beta = params.beta.unwrap_or(DEFAULT_BETA);
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be positive"));
    }

    let driver: Arc<dyn Driver> = match family {
        Family::CosZero => Arc::new(ZeroDriver),
        Family::CosAffine | Family::ExpAffine => Arc::new(AffineDriver { a, b }),
        Family::CosSine => Arc::new(SineDriver),
    };
    let f0 = driver.evaluate(0.0, &vec![0.0; dim], 0.0).abs();
    // V must dominate |T f(0)|^{1/beta}.
    let driver_floor = (horizon * f0).powf(1.0 / beta).max(1.0);

    let (terminal, rho_default, v0_default): (Arc<dyn Terminal>, f64, f64) = match family {
        Family::ExpAffine => {
            let c = match &params.c {
                None => vec![0.1; dim],
                Some(c) if c.len() == 1 => vec![c[0]; dim],
                Some(c) if c.len() == dim => c.clone(),
                Some(c) => {
                    return Err(Error::LengthMismatch {
                        expected: dim,
                        got: c.len(),
                    })
                }
            };
            // V(x) = K (exp(<c,x>/beta) + 1) with K = driver_floor.
            let norm2: f64 = c.iter().map(|v| v * v).sum();
            let rho = norm2 / (2.0 * beta * beta);
            (Arc::new(ExpLinear { c }), rho, 2.0 * driver_floor)
        }
        _ => (Arc::new(CosProduct), 0.0, driver_floor),
    };

    Ok(BsdeProblem {
        horizon,
        dim,
        driver,
        terminal,
        rho: params.rho.unwrap_or(rho_default),
        beta,
        lyapunov_v0: params.v0.unwrap_or(v0_default),
        family: Some(family),
    })
}

const PROBES: u64 = 256;
const LIPSCHITZ_SLACK: f64 = 1e-12;

/// Advisory checks of the growth and Lipschitz hypotheses on a
/// deterministic probe set. Returns human-readable warnings.
pub fn validate_problem(p: &BsdeProblem) -> Vec<String> {
    let mut warnings = Vec::new();
    if !(p.beta > 0.0 && p.beta <= DEFAULT_BETA) {
        warnings.push(format!("beta outside (0,1/12]: {}", p.beta));
    }
    if !(p.lyapunov_v0 >= 1.0) {
        warnings.push(format!("V0 below 1: {}", p.lyapunov_v0));
    }
    if !(p.rho >= 0.0) {
        warnings.push(format!("rho negative: {}", p.rho));
    }
    if p.beta <= 0.0 {
        return warnings;
    }

    let origin = vec![0.0; p.dim];
    let exponent = 1.0 / p.beta;
    let g0 = p.terminal.evaluate(&origin).abs().powf(exponent);
    if g0 > p.lyapunov_v0 * (1.0 + 1e-12) {
        warnings.push(format!("|g(0)|^(1/beta) = {g0} exceeds V0 = {}", p.lyapunov_v0));
    }

    let lip = p.driver.lipschitz();
    let mut growth_failed = false;
    let mut lipschitz_failed = false;
    let mut x = vec![0.0; p.dim];
    for k in 0..PROBES {
        let stream = KeyedStream::new(MasterSeed(0x5eed), &[k as i64]);
        let t = p.horizon * stream.unit(0);
        let tf0 = (p.horizon * p.driver.evaluate(t, &origin, 0.0)).abs().powf(exponent);
        if tf0 > p.lyapunov_v0 * (1.0 + 1e-12) {
            growth_failed = true;
        }
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = 4.0 * (stream.unit(3 + j as u64) - 0.5);
        }
        let v = 20.0 * (stream.unit(1) - 0.5);
        let w = 20.0 * (stream.unit(2) - 0.5);
        let lhs = (p.driver.evaluate(t, &x, v) - p.driver.evaluate(t, &x, w)).abs();
        if lhs > lip * (v - w).abs() + LIPSCHITZ_SLACK {
            lipschitz_failed = true;
        }
    }
    if growth_failed {
        warnings.push("|T f(t,0,0)|^(1/beta) exceeds V0 on the probe set".to_string());
    }
    if lipschitz_failed {
        warnings.push(format!("driver violates the declared Lipschitz constant {lip}"));
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> ProblemParams {
        ProblemParams::default()
    }

    #[test]
    fn cos_zero_basics() {
        let p = builtin_problem(Family::CosZero, 1, &defaults()).unwrap();
        assert_eq!(p.terminal.evaluate(&[0.0]), 1.0);
        assert_eq!(p.driver.evaluate(0.3, &[1.0], 5.0), 0.0);
        assert_eq!(p.lipschitz(), 0.0);
        assert_eq!(p.horizon, 1.0);
        let g = p.terminal.gaussian_smoothing(1.0, &[0.0]).unwrap();
        assert!((g - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn affine_lipschitz_is_abs_a() {
        let p = builtin_problem(Family::CosAffine, 2, &defaults()).unwrap();
        assert_eq!(p.lipschitz(), 0.3);
        assert_eq!(p.driver.affine(), Some((0.3, 0.1)));
        assert_eq!(p.driver.evaluate(0.0, &[0.0, 0.0], 2.0), 0.3 * 2.0 + 0.1);
    }

    #[test]
    fn smoothing_at_zero_is_terminal() {
        for family in [Family::CosZero, Family::ExpAffine] {
            let p = builtin_problem(family, 3, &defaults()).unwrap();
            let x = [0.3, -1.2, 2.0];
            assert_eq!(p.terminal.gaussian_smoothing(0.0, &x).unwrap(), p.terminal.evaluate(&x));
        }
    }

    #[test]
    fn construction_errors() {
        assert!(matches!("heat".parse::<Family>(), Err(Error::UnknownFamily(_))));
        let bad_t = ProblemParams {
            horizon: Some(0.0),
            ..defaults()
        };
        assert!(builtin_problem(Family::CosZero, 1, &bad_t).is_err());
        assert!(matches!(
            builtin_problem(Family::CosZero, MAX_DIMENSION + 1, &defaults()),
            Err(Error::ResourceGuard(_))
        ));
        assert!(builtin_problem(Family::CosZero, 0, &defaults()).is_err());
    }

    #[test]
    fn builtins_validate_clean() {
        for family in [Family::CosZero, Family::CosAffine, Family::ExpAffine, Family::CosSine] {
            for d in [1, 4] {
                let p = builtin_problem(family, d, &defaults()).unwrap();
                assert!(validate_problem(&p).is_empty(), "{family} d={d}: {:?}", validate_problem(&p));
            }
        }
    }

    #[test]
    fn beta_out_of_range_warns() {
        let p = builtin_problem(Family::CosZero, 1, &defaults()).unwrap().with_growth(0.0, 0.2, 1.0);
        let w = validate_problem(&p);
        assert!(w.iter().any(|m| m.contains("beta outside (0,1/12]")), "{w:?}");
    }

    #[test]
    fn exp_family_growth_constants() {
        let params = ProblemParams {
            c: Some(vec![0.5]),
            ..defaults()
        };
        let p = builtin_problem(Family::ExpAffine, 2, &params).unwrap();
        // |c|^2 = 0.5, rho = 0.5 / (2 / 144)
        assert!((p.rho - 36.0).abs() < 1e-12);
        assert!(p.lyapunov_v0 >= 2.0);
    }
}
