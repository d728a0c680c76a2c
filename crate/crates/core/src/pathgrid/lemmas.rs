//! Brute-force checks of the interpolation error and Hölder stability
//! inequalities for piecewise-linear interpolation on general partitions.
//!
//! A case is a function sampled on a uniform dense grid over [0, T] and a
//! partition given as indices into that grid, so every partition node is a
//! sample point and the seminorm of a sample can be computed with a table
//! of powers of the sample spacing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

pub const SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct InterpCase {
    pub horizon: f64,
    /// Values at t_i = i T / (len - 1).
    pub samples: Vec<f64>,
    /// Strictly increasing sample indices, first 0 and last `len - 1`.
    pub partition: Vec<usize>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InterpCase {
    fn validate(&self) -> Result<()> {
        let n = self.samples.len();
        if self.partition.len() < 2 {
            return Err(invalid("partition", "needs at least two nodes"));
        }
        if n < 2 {
            return Err(invalid("samples", "needs at least two samples"));
        }
        if self.partition[0] != 0 || *self.partition.last().unwrap() != n - 1 {
            return Err(invalid("partition", "must start at 0 and end at the last sample"));
        }
        if self.partition.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("partition", "must be strictly increasing"));
        }
        if !(self.alpha > 0.0) {
            return Err(invalid("alpha", "must be positive"));
        }
        Ok(())
    }

    fn spacing(&self) -> f64 {
        self.horizon / (self.samples.len() - 1) as f64
    }

    /// Interpolant of the partition-node values, evaluated at every sample.
    pub fn interpolant(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.samples.len()];
        for w in self.partition.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (ya, yb) = (self.samples[a], self.samples[b]);
            let span = (b - a) as f64;
            for (i, o) in out.iter_mut().enumerate().take(b + 1).skip(a) {
                *o = ((b - i) as f64 * ya + (i - a) as f64 * yb) / span;
            }
        }
        out
    }

    fn max_mesh(&self) -> f64 {
        self.partition
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 * self.spacing())
            .fold(0.0, f64::max)
    }
}

/// sup over sample pairs of |x_s - x_t| / |s - t|^alpha.
pub fn holder_seminorm(values: &[f64], spacing: f64, alpha: f64) -> f64 {
    let n = values.len();
    let powers: Vec<f64> = (0..n).map(|k| (k as f64 * spacing).powf(alpha)).collect();
    let mut best = 0.0f64;
    for i in 0..n {
        let xi = values[i];
        for j in i + 1..n {
            let q = (values[j] - xi).abs() / powers[j - i];
            if q > best {
                best = q;
            }
        }
    }
    best
}

/// sup_t |X_t - x_t| <= 2^{-min(3, α)} (max mesh)^α [x]_α
pub fn check_interp_error_bound(case: &InterpCase) -> Result<InterpCheck> {
    case.validate()?;
    let interp = case.interpolant();
    let lhs = interp
        .iter()
        .zip(&case.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let semi = holder_seminorm(&case.samples, case.spacing(), case.alpha);
    let rhs = 2f64.powf(-case.alpha.min(3.0)) * case.max_mesh().powf(case.alpha) * semi;
    Ok(InterpCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + SLACK,
    })
}

/// [X]_α <= [x]_α for α in (0, 1].
pub fn check_interp_holder(case: &InterpCase) -> Result<InterpCheck> {
    case.validate()?;
    if case.alpha > 1.0 {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: "Hölder stability needs alpha in (0, 1]".into(),
        });
    }
    let h = case.spacing();
    let lhs = holder_seminorm(&case.interpolant(), h, case.alpha);
    let rhs = holder_seminorm(&case.samples, h, case.alpha);
    Ok(InterpCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + SLACK,
    })
}

/// Random piecewise-smooth test case: a mix of power cusps, oscillations
/// and a kink, sampled at `samples + 1` points, with a random partition
/// and α drawn from {1/4, 1/2, 1}.
pub fn random_case(seed: u64, samples: usize) -> InterpCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(0.5..2.0);
    let alpha = [0.25, 0.5, 1.0][rng.gen_range(0..3)];
    let cusp_at = rng.gen_range(0.0..horizon);
    let cusp_pow = rng.gen_range(0.25..1.5);
    let amp = rng.gen_range(-2.0..2.0);
    let freq = rng.gen_range(0.5..8.0);
    let phase = rng.gen_range(0.0..6.3);
    let kink_at = rng.gen_range(0.0..horizon);
    let slope = rng.gen_range(-3.0..3.0);
    let f = |t: f64| {
        amp * (t - cusp_at).abs().powf(cusp_pow) + (freq * t + phase).sin() + slope * (t - kink_at).max(0.0)
    };
    let values = (0..=samples)
        .map(|i| f(i as f64 * horizon / samples as f64))
        .collect();
    let keep = rng.gen_range(0.02..0.3);
    let mut partition = vec![0];
    for i in 1..samples {
        if rng.gen_bool(keep) {
            partition.push(i);
        }
    }
    partition.push(samples);
    InterpCase {
        horizon,
        samples: values,
        partition,
        alpha,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(f: impl Fn(f64) -> f64, n: usize, partition: Vec<usize>, alpha: f64) -> InterpCase {
        InterpCase {
            horizon: 1.0,
            samples: (0..=n).map(|i| f(i as f64 / n as f64)).collect(),
            partition,
            alpha,
        }
    }

    #[test]
    fn constant_function() {
        let c = sampled(|_| 2.5, 1000, vec![0, 300, 1000], 0.5);
        let e = check_interp_error_bound(&c).unwrap();
        assert_eq!(e.lhs, 0.0);
        assert!(e.holds);
        let h = check_interp_holder(&c).unwrap();
        assert_eq!((h.lhs, h.rhs), (0.0, 0.0));
    }

    #[test]
    fn linear_function_is_reproduced() {
        let c = sampled(|t| 3.0 * t - 1.0, 1000, vec![0, 250, 500, 750, 1000], 1.0);
        let e = check_interp_error_bound(&c).unwrap();
        assert!(e.lhs < 1e-14);
        let h = check_interp_holder(&c).unwrap();
        assert!((h.lhs - h.rhs).abs() < 1e-12);
    }

    #[test]
    fn square_root_cusp() {
        let c = sampled(|t| (t - 0.5).abs().sqrt(), 10_000, vec![0, 5000, 10_000], 0.5);
        let e = check_interp_error_bound(&c).unwrap();
        assert!(e.holds, "{e:?}");
        assert!(e.lhs > 0.0);
    }

    #[test]
    fn rejects_bad_partitions() {
        let mut c = sampled(|t| t, 100, vec![0], 1.0);
        assert!(check_interp_error_bound(&c).is_err());
        c.partition = vec![0, 50, 50, 100];
        assert!(check_interp_error_bound(&c).is_err());
        c.partition = vec![0, 99];
        assert!(check_interp_error_bound(&c).is_err());
        c.partition = vec![0, 100];
        c.alpha = 1.5;
        assert!(check_interp_holder(&c).is_err());
    }
}
