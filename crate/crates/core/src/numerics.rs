//! Vector arithmetic, seedable random streams and Euclidean ball projection.
//!
//! Every random draw in the crate goes through an [`RngStream`] built from an
//! explicit [`RngState`]; nothing reads ambient entropy.

use std::fmt;
use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("non-finite vector")]
    NonFinite,
    #[error("projection radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("standard deviation must be finite and nonnegative, got {0}")]
    InvalidSigma(f64),
    #[error("index sampling needs n >= 1")]
    EmptyRange,
    #[error("pairwise learning needs n >= 2, got {0}")]
    PairNeedsTwo(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Dense model / feature / noise vector with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self, NumericsError> {
        if entries.iter().all(|v| v.is_finite()) {
            Ok(Vector(entries))
        } else {
            Err(NumericsError::NonFinite)
        }
    }

    pub fn zeros(d: usize) -> Self {
        Vector(vec![0.0; d])
    }

    /// Wraps entries the caller has already checked to be finite.
    pub(crate) fn from_finite(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| v.is_finite()));
        Vector(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn dist_sq(&self, other: &Vector) -> f64 {
        dist_sq(&self.0, &other.0)
    }

    pub fn scaled(&self, a: f64) -> Result<Vector, NumericsError> {
        Vector::new(self.0.iter().map(|v| v * a).collect())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector, NumericsError> {
        self.check_dim(other)?;
        Vector::new(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector, NumericsError> {
        self.check_dim(other)?;
        Vector::new(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    fn check_dim(&self, other: &Vector) -> Result<(), NumericsError> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(NumericsError::DimensionMismatch(self.dim(), other.dim()))
        }
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = NumericsError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean projection onto the centred ball of the given radius.
///
/// `radius = f64::INFINITY` is the unconstrained case.
pub fn project_ball(w: &Vector, radius: f64) -> Result<Vector, NumericsError> {
    check_radius(radius)?;
    let mut out = w.0.clone();
    project_ball_in_place(&mut out, radius);
    Vector::new(out)
}

pub(crate) fn check_radius(radius: f64) -> Result<(), NumericsError> {
    if radius > 0.0 && !radius.is_nan() {
        Ok(())
    } else {
        Err(NumericsError::InvalidRadius(radius))
    }
}

/// In-place variant used by the SGD inner loop. Leaves points inside the
/// ball bit-for-bit untouched, so projection is exactly idempotent.
#[inline]
pub fn project_ball_in_place(w: &mut [f64], radius: f64) {
    if radius.is_infinite() {
        return;
    }
    let nrm = norm(w);
    if nrm > radius {
        let s = radius / nrm;
        for v in w.iter_mut() {
            *v *= s;
        }
        // Rounding can leave the scaled norm an ulp above the radius.
        let after = norm(w);
        if after > radius {
            let s = radius / after * (1.0 - f64::EPSILON);
            for v in w.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Named stream ids. Keeping index sampling and noise on separate streams
/// lets paired trajectories share both exactly.
pub mod streams {
    pub const INDICES: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const DATA: u64 = 3;
    pub const REPLACEMENT: u64 = 4;
    pub const ORACLE: u64 = 5;
    pub const PROBES: u64 = 6;
}

/// Seed plus stream id. Identical states produce identical draw sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngState { seed, stream }
    }

    pub fn start(self) -> RngStream {
        RngStream::new(self)
    }
}

/// A live random stream: ChaCha12 keyed by the seed, with the stream id
/// selecting ChaCha's independent 64-bit stream. Normals come from
/// `rand_distr::StandardNormal` (ziggurat), which is deterministic given the
/// underlying bit stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    state: RngState,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(state: RngState) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(state.seed);
        rng.set_stream(state.stream);
        RngStream { state, rng }
    }

    pub fn state(&self) -> RngState {
        self.state
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on {0, .., n-1}. Callers must ensure n >= 1.
    #[inline]
    pub(crate) fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// `d` independent N(0, sigma^2) draws; `sigma = 0` yields the zero vector
/// without consuming randomness.
pub fn gaussian_vector(rng: &mut RngStream, d: usize, sigma: f64) -> Result<Vector, NumericsError> {
    if d == 0 {
        return Err(NumericsError::ZeroDimension);
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(NumericsError::InvalidSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(Vector::zeros(d));
    }
    Ok(Vector::from_finite(
        (0..d).map(|_| sigma * rng.standard_normal()).collect(),
    ))
}

/// Zero-based uniform index in `0..n`.
pub fn uniform_index(rng: &mut RngStream, n: usize) -> Result<usize, NumericsError> {
    if n == 0 {
        return Err(NumericsError::EmptyRange);
    }
    Ok(rng.below(n))
}

/// Uniform ordered pair of distinct zero-based indices: draw `i` from
/// `0..n`, `j` from `0..n-1`, and shift `j` past `i`.
pub fn uniform_distinct_pair(rng: &mut RngStream, n: usize) -> Result<(usize, usize), NumericsError> {
    if n < 2 {
        return Err(NumericsError::PairNeedsTwo(n));
    }
    let i = rng.below(n);
    let mut j = rng.below(n - 1);
    if j >= i {
        j += 1;
    }
    Ok((i, j))
}

/// Deterministic seed derivation (splitmix64 folding) for per-run streams.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ 0x6a09_e667_f3bc_c908);
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Neumaier-compensated running sum of vectors.
#[derive(Clone, Debug)]
pub(crate) struct CompensatedSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedSum {
    pub fn new(d: usize) -> Self {
        CompensatedSum { sum: vec![0.0; d], comp: vec![0.0; d] }
    }

    pub fn add(&mut self, x: &[f64]) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(x) {
            let t = *s + v;
            if s.abs() >= v.abs() {
                *c += (*s - t) + v;
            } else {
                *c += (v - t) + *s;
            }
            *s = t;
        }
    }

    pub fn mean(&self, count: usize) -> Vec<f64> {
        let k = count as f64;
        self.sum.iter().zip(&self.comp).map(|(s, c)| (s + c) / k).collect()
    }
}

/// Neumaier-compensated sum of scalars.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for v in xs {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

/// Mean and standard error of a sample.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_ball(&v(&[0.3, 0.4]), 1.0).unwrap(), v(&[0.3, 0.4]));
        let p = project_ball(&v(&[3.0, 4.0]), 1.0).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert!(p.norm() <= 1.0);
        assert_eq!(project_ball(&v(&[0.0, 0.0]), 0.5).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(project_ball(&v(&[1e300, 1.0]), f64::INFINITY).unwrap(), v(&[1e300, 1.0]));
    }

    #[test]
    fn projection_rejects_bad_input() {
        assert_eq!(project_ball(&v(&[1.0]), 0.0), Err(NumericsError::InvalidRadius(0.0)));
        assert_eq!(Vector::new(vec![f64::NAN]), Err(NumericsError::NonFinite));
        assert_eq!(Vector::new(vec![1.0, f64::INFINITY]), Err(NumericsError::NonFinite));
    }

    #[test]
    fn degenerate_noise_is_zero() {
        let mut rng = RngState::new(1, streams::NOISE).start();
        assert_eq!(gaussian_vector(&mut rng, 3, 0.0).unwrap(), Vector::zeros(3));
        assert!(gaussian_vector(&mut rng, 0, 1.0).is_err());
        assert!(gaussian_vector(&mut rng, 2, -1.0).is_err());
    }

    #[test]
    fn same_state_same_draws() {
        let a = gaussian_vector(&mut RngState::new(7, 2).start(), 5, 1.0).unwrap();
        let b = gaussian_vector(&mut RngState::new(7, 2).start(), 5, 1.0).unwrap();
        let c = gaussian_vector(&mut RngState::new(7, 3).start(), 5, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn index_edge_cases() {
        let mut rng = RngState::new(3, streams::INDICES).start();
        for _ in 0..100 {
            assert_eq!(uniform_index(&mut rng, 1).unwrap(), 0);
        }
        assert_eq!(uniform_index(&mut rng, 0), Err(NumericsError::EmptyRange));
        assert_eq!(uniform_distinct_pair(&mut rng, 1), Err(NumericsError::PairNeedsTwo(1)));
        for _ in 0..100 {
            let p = uniform_distinct_pair(&mut rng, 2).unwrap();
            assert!(p == (0, 1) || p == (1, 0));
        }
    }

    #[test]
    fn compensated_mean_of_constant() {
        let mut s = CompensatedSum::new(2);
        for _ in 0..1000 {
            s.add(&[0.1, -0.3]);
        }
        let m = s.mean(1000);
        assert!((m[0] - 0.1).abs() < 1e-16 && (m[1] + 0.3).abs() < 1e-16);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_eq!(derive_seed(9, &[1]), derive_seed(9, &[1]));
    }
}
