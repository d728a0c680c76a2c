//! Counter-based random streams addressed by multi-indices.
//!
//! Every draw used by the estimator is a pure function of a master seed
//! and a [`ThetaPath`]. The keyed stream is derived by absorbing the
//! length-framed encoding of the path into a 128-bit state; output words
//! are produced by hashing a counter against that key. The exact
//! construction is documented in `FORMAT.md` at the repository root.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Exec;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const K1: u64 = 0xD1B5_4A32_D192_ED03;
const K2: u64 = 0x8CB9_2BA7_2F3D_8DD7;

/// First element of the index paths reserved for the driving Brownian
/// motion. MLP paths never start with it.
pub const BROWNIAN_SENTINEL: i64 = i64::MIN;
/// First element of the index paths used to derive replication seeds.
pub const SEED_SENTINEL: i64 = i64::MIN + 1;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MasterSeed(pub u64);

impl MasterSeed {
    /// Independent seed for replication `index`.
    pub fn derive(self, index: u64) -> MasterSeed {
        let stream = KeyedStream::new(self, &[SEED_SENTINEL, index as i64]);
        MasterSeed(stream.word(0))
    }
}

/// A multi-index θ. The empty path is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ThetaPath(Vec<i64>);

impl ThetaPath {
    pub fn root() -> Self {
        ThetaPath(Vec::new())
    }

    pub fn new(elements: Vec<i64>) -> Self {
        ThetaPath(elements)
    }

    pub fn elements(&self) -> &[i64] {
        &self.0
    }

    /// Returns `self` with `(l, i)` appended.
    pub fn child(&self, l: i64, i: i64) -> ThetaPath {
        let mut e = Vec::with_capacity(self.0.len() + 2);
        e.extend_from_slice(&self.0);
        e.push(l);
        e.push(i);
        ThetaPath(e)
    }

    /// Canonical encoding: element count then each element, all as
    /// little-endian 64-bit words.
    pub fn encode(&self) -> Vec<u8> {
        encode_elements(&self.0)
    }
}

pub fn encode_elements(elements: &[i64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * (elements.len() + 1));
    out.extend_from_slice(&(elements.len() as u64).to_le_bytes());
    for e in elements {
        out.extend_from_slice(&e.to_le_bytes());
    }
    out
}

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A stateless stream of 64-bit words keyed by (seed, path).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyedStream {
    k0: u64,
    k1: u64,
}

impl KeyedStream {
    pub fn new(seed: MasterSeed, elements: &[i64]) -> Self {
        let mut h0 = mix64(seed.0 ^ GOLDEN);
        let mut h1 = mix64(seed.0.wrapping_add(K1));
        let words = std::iter::once(elements.len() as u64).chain(elements.iter().map(|&e| e as u64));
        for (i, w) in words.enumerate() {
            h0 = mix64(h0 ^ w).wrapping_add(h1.rotate_left(23));
            h1 = mix64(h1.wrapping_add(w).wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1)))
                ^ h0.rotate_left(41);
        }
        KeyedStream {
            k0: mix64(h0 ^ K2),
            k1: mix64(h1 ^ h0),
        }
    }

    #[inline]
    pub fn word(&self, j: u64) -> u64 {
        mix64(mix64(self.k1.wrapping_add(K1.wrapping_mul(j + 1))) ^ self.k0)
    }

    /// Uniform in [0, 1) from word `j`.
    #[inline]
    pub fn unit(&self, j: u64) -> f64 {
        (self.word(j) >> 11) as f64 * TWO_POW_M53
    }

    /// Fills `z` with standard normals from words 1, 2, 3, ... by Box-Muller.
    pub fn normals_into(&self, z: &mut [f64]) {
        let mut j = 1;
        for pair in z.chunks_mut(2) {
            let u1 = ((self.word(j) >> 11) + 1) as f64 * TWO_POW_M53;
            let u2 = (self.word(j + 1) >> 11) as f64 * TWO_POW_M53;
            let radius = (-2.0 * u1.ln()).sqrt();
            let angle = std::f64::consts::TAU * u2;
            pair[0] = radius * angle.cos();
            if pair.len() > 1 {
                pair[1] = radius * angle.sin();
            }
            j += 2;
        }
    }
}

/// The draws attached to one index: the uniform time variable and a
/// d-dimensional standard normal vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDraws {
    pub r: f64,
    pub z: Vec<f64>,
}

pub fn node_draws(seed: MasterSeed, theta: &ThetaPath, d: usize) -> Result<NodeDraws> {
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    let mut z = vec![0.0; d];
    let r = node_draws_into(seed, theta.elements(), &mut z);
    Ok(NodeDraws { r, z })
}

/// Allocation-free variant of [`node_draws`]; returns `r` and writes `z`.
#[inline]
pub fn node_draws_into(seed: MasterSeed, elements: &[i64], z: &mut [f64]) -> f64 {
    let stream = KeyedStream::new(seed, elements);
    stream.normals_into(z);
    stream.unit(0)
}

/// Brownian path sampled on the uniform grid {kT/M^n : k = 0..M^n}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub d: usize,
    pub steps: usize,
    pub horizon: f64,
    data: Vec<f64>,
}

impl BrownianPath {
    /// Value at node `k`.
    pub fn point(&self, k: usize) -> &[f64] {
        &self.data[k * self.d..(k + 1) * self.d]
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub const MAX_PATH_STEPS: u64 = 100_000_000;

/// Checked M^n.
pub fn checked_pow(m: u64, n: u32) -> Option<u64> {
    m.checked_pow(n)
}

pub fn brownian_path(seed: MasterSeed, d: usize, m: u32, n: u32, horizon: f64) -> Result<BrownianPath> {
    brownian_path_with(seed, d, m, n, horizon, Exec::default())
}

pub fn brownian_path_with(
    seed: MasterSeed,
    d: usize,
    m: u32,
    n: u32,
    horizon: f64,
    exec: Exec,
) -> Result<BrownianPath> {
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    if m == 0 {
        return Err(invalid("M", "must be at least 1"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("T", "horizon must be positive"));
    }
    let steps = checked_pow(m as u64, n).ok_or(Error::Overflow("M^n"))?;
    if steps > MAX_PATH_STEPS {
        return Err(Error::ResourceGuard(format!("M^n = {steps} exceeds {MAX_PATH_STEPS}")));
    }
    let steps = steps as usize;
    let scale = (horizon / steps as f64).sqrt();
    let increments = exec.map_collect(0..steps, |k| {
        let mut z = vec![0.0; d];
        node_draws_into(seed, &[BROWNIAN_SENTINEL, k as i64], &mut z);
        z
    });
    let mut data = vec![0.0; (steps + 1) * d];
    for (k, z) in increments.iter().enumerate() {
        for j in 0..d {
            data[(k + 1) * d + j] = data[k * d + j] + scale * z[j];
        }
    }
    Ok(BrownianPath {
        d,
        steps,
        horizon,
        data,
    })
}
