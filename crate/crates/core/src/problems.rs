//! Synthetic learning problems with a known minimizer `w*`, its risk
//! `F(w*)`, and a population-risk oracle.
//!
//! Features are uniform on the sphere of radius `B` throughout.
//!
//! | name | loss | oracle | `F(w*)` |
//! |---|---|---|---|
//! | `realizable_least_squares` | `least_squares` | closed form | 0 |
//! | `realizable_pairwise` | `pair_squared` | closed form | 0 |
//! | `noisy_logistic` | `logistic` | 2-D quadrature | > 0 |
//! | `noisy_auc` | `auc_logistic` | 4-D quadrature | > 0 |
//! | `separable_hinge` | `hinge`, `hinge_q:<q>` | seeded Monte Carlo | 0 |
//! | `separable_auc` | `auc_hinge`, `auc_hinge_q:<q>` | seeded Monte Carlo | 0 |

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{builtin_pairwise, builtin_pointwise, Example, Loss, LossBounds, LossError};
use crate::numerics::{compensated_sum, derive_seed, dot, streams, RngState, RngStream, Vector};
use crate::quadrature::{sphere_cap_two_sided, sphere_rule, SpherePoint};
use crate::sgd::{empirical_pairwise_risk, empirical_risk, run_pairwise, run_pointwise, RunReport, SgdConfig, SgdError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    #[error("dimension d must be at least 1")]
    ZeroDimension,
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("label_flip must lie in [0, 0.5), got {0}")]
    InvalidFlip(f64),
    #[error("margin {margin} leaves acceptance probability {acceptance:.3e} below 1%; use a larger margin")]
    MarginTooSmall { margin: f64, acceptance: f64 },
    #[error("margin {margin} must be positive and at most the feature bound {bound}")]
    InvalidMargin { margin: f64, bound: f64 },
    #[error("problem '{problem}' does not support loss '{loss}'")]
    IncompatibleLoss { problem: String, loss: String },
    #[error("parameter '{key}' does not apply to problem '{problem}'")]
    IrrelevantParameter { problem: String, key: &'static str },
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Serializable description of a problem, as read from configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_b")]
    pub feature_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_flip: Option<f64>,
    /// Norm of the true logistic parameter of the noisy problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<f64>,
    /// Loss override for the separable problems (`hinge_q:<q>` and friends).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

fn default_d() -> usize {
    10
}

fn default_b() -> f64 {
    1.0
}

pub const PROBLEM_NAMES: [&str; 6] = [
    "realizable_least_squares",
    "realizable_pairwise",
    "noisy_logistic",
    "noisy_auc",
    "separable_hinge",
    "separable_auc",
];

/// Default norm of the true parameter in the noisy problems.
pub const DEFAULT_SIGNAL: f64 = 4.0;
/// Default projection radius of the noisy problems.
pub const DEFAULT_NOISY_RADIUS: f64 = 1.0;
/// Samples in the Monte-Carlo oracle.
pub const MC_SAMPLES: usize = 1_000_000;
const MC_CHUNK: usize = 8192;
const POINT_NODES: usize = 96;
const PAIR_NODES: usize = 48;

impl ProblemSpec {
    pub fn new(name: &str, d: usize, feature_bound: f64, seed: u64) -> Self {
        ProblemSpec {
            name: name.to_string(),
            d,
            feature_bound,
            radius: None,
            margin: None,
            label_flip: None,
            signal: None,
            loss: None,
            seed,
        }
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.radius = Some(r);
        self
    }

    pub fn with_margin(mut self, m: f64) -> Self {
        self.margin = Some(m);
        self
    }

    pub fn with_flip(mut self, f: f64) -> Self {
        self.label_flip = Some(f);
        self
    }

    pub fn with_signal(mut self, s: f64) -> Self {
        self.signal = Some(s);
        self
    }

    pub fn with_loss(mut self, loss: &str) -> Self {
        self.loss = Some(loss.to_string());
        self
    }

    /// Every violated parameter rule, not just the first.
    pub fn violations(&self) -> Vec<ProblemError> {
        let mut out = Vec::new();
        if !PROBLEM_NAMES.contains(&self.name.as_str()) {
            out.push(ProblemError::UnknownProblem(self.name.clone()));
            return out;
        }
        if self.d == 0 {
            out.push(ProblemError::ZeroDimension);
        }
        if !(self.feature_bound > 0.0 && self.feature_bound.is_finite()) {
            out.push(ProblemError::NotPositive { name: "feature_bound", value: self.feature_bound });
        }
        let name = self.name.as_str();
        let irrelevant = |key: &'static str| ProblemError::IrrelevantParameter { problem: name.to_string(), key };
        let separable = matches!(name, "separable_hinge" | "separable_auc");
        let noisy = matches!(name, "noisy_logistic" | "noisy_auc");
        if separable {
            if self.radius.is_some() {
                out.push(irrelevant("radius"));
            }
            match self.margin {
                None => out.push(ProblemError::InvalidMargin { margin: f64::NAN, bound: self.feature_bound }),
                Some(m) if !(m > 0.0 && m <= self.feature_bound) => {
                    out.push(ProblemError::InvalidMargin { margin: m, bound: self.feature_bound })
                }
                _ => {}
            }
        } else {
            if self.margin.is_some() {
                out.push(irrelevant("margin"));
            }
            if self.loss.is_some() {
                out.push(irrelevant("loss"));
            }
            if let Some(r) = self.radius {
                if !(r > 0.0 && r.is_finite()) {
                    out.push(ProblemError::NotPositive { name: "radius", value: r });
                }
            }
        }
        if noisy {
            if let Some(f) = self.label_flip {
                if !(0.0..0.5).contains(&f) {
                    out.push(ProblemError::InvalidFlip(f));
                }
            }
            if let Some(s) = self.signal {
                if !(s >= 0.0 && s.is_finite()) {
                    out.push(ProblemError::NotPositive { name: "signal", value: s });
                }
            }
        } else {
            if self.label_flip.is_some() {
                out.push(irrelevant("label_flip"));
            }
            if self.signal.is_some() {
                out.push(irrelevant("signal"));
            }
        }
        out
    }

    pub fn build(&self) -> Result<Problem, ProblemError> {
        if let Some(e) = self.violations().into_iter().next() {
            return Err(e);
        }
        let (d, b, seed) = (self.d, self.feature_bound, self.seed);
        match self.name.as_str() {
            "realizable_least_squares" => realizable_least_squares(d, b, self.radius.unwrap_or(1.0), seed),
            "realizable_pairwise" => realizable_pairwise(d, b, self.radius.unwrap_or(1.0), seed),
            "noisy_logistic" => noisy_logistic_with(
                d,
                b,
                self.radius.unwrap_or(DEFAULT_NOISY_RADIUS),
                self.label_flip.unwrap_or(0.1),
                self.signal.unwrap_or(DEFAULT_SIGNAL),
                seed,
            ),
            "noisy_auc" => noisy_auc(
                d,
                b,
                self.radius.unwrap_or(DEFAULT_NOISY_RADIUS),
                self.label_flip.unwrap_or(0.1),
                self.signal.unwrap_or(DEFAULT_SIGNAL),
                seed,
            ),
            "separable_hinge" => {
                separable_hinge_with(d, self.margin.unwrap_or(0.0), b, self.loss.as_deref().unwrap_or("hinge"), seed)
            }
            "separable_auc" => {
                separable_auc_with(d, self.margin.unwrap_or(0.0), b, self.loss.as_deref().unwrap_or("auc_hinge"), seed)
            }
            other => Err(ProblemError::UnknownProblem(other.to_string())),
        }
    }
}

/// How labels are produced from features.
#[derive(Debug, Clone, PartialEq)]
enum Labels {
    /// `y = ⟨w*, x⟩`.
    Linear,
    /// `P(y = 1 | x) = (1 − f) σ(⟨w_true, x⟩) + f (1 − σ(⟨w_true, x⟩))`.
    Logistic { w_true: Vector, flip: f64 },
    /// `y = sign⟨u, x⟩`, conditioned on `|⟨u, x⟩| ≥ margin`.
    Separable { u: Vector, margin: f64, acceptance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum Oracle {
    /// `c ‖w − w*‖² B² / d` with `c = 1` (pointwise) or `2` (pairwise).
    Quadratic { c: f64 },
    NoisyPoint { points: Vec<SpherePoint>, p_pos: Vec<f64> },
    NoisyPair { points: Vec<SpherePoint>, p_pos: Vec<f64> },
    MonteCarlo { seed: u64, samples: usize },
}

/// A synthetic problem. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    spec: ProblemSpec,
    loss: Loss,
    bounds: LossBounds,
    d: usize,
    /// Unit vector of the label model.
    direction: Vector,
    w_star: Vector,
    f_star: f64,
    labels: Labels,
    oracle: Oracle,
}

/// Estimate of a population quantity with its declared error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    /// Standard error for Monte Carlo; a declared bound for quadrature; 0 for
    /// closed forms.
    pub error: f64,
}

fn positive(name: &'static str, value: f64) -> Result<(), ProblemError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ProblemError::NotPositive { name, value })
    }
}

fn random_direction(d: usize, seed: u64) -> Vector {
    let mut rng = RngState::new(seed, streams::ORACLE).start();
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return Vector::from_finite(v.iter().map(|x| x / n).collect());
        }
    }
}

fn sphere_sample(rng: &mut RngStream, d: usize, b: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            let mut x: Vec<f64> = v.iter().map(|x| b * x / n).collect();
            // keep ‖x‖ ≤ B exactly
            let nx = x.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nx > b {
                for xi in &mut x {
                    *xi *= b / nx * (1.0 - f64::EPSILON);
                }
            }
            return x;
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 500.0 {
        z
    } else if z < -500.0 {
        0.0
    } else {
        z.max(0.0) + (-z.abs()).exp().ln_1p()
    }
}

fn quadratic_problem(name: &str, d: usize, b: f64, r: f64, seed: u64, pairwise: bool) -> Result<Problem, ProblemError> {
    if d == 0 {
        return Err(ProblemError::ZeroDimension);
    }
    positive("feature_bound", b)?;
    positive("radius", r)?;
    let u = random_direction(d, seed);
    let w_star = Vector::from_finite(u.as_slice().iter().map(|x| x * r / 2.0).collect());
    let bounds = LossBounds::new(b, r, b * r / 2.0)?;
    let loss = if pairwise {
        Loss::Pairwise(builtin_pairwise("pair_squared", &bounds)?)
    } else {
        Loss::Pointwise(builtin_pointwise("least_squares", &bounds)?)
    };
    Ok(Problem {
        spec: ProblemSpec::new(name, d, b, seed).with_radius(r),
        loss,
        bounds,
        d,
        direction: u,
        w_star,
        f_star: 0.0,
        labels: Labels::Linear,
        oracle: Oracle::Quadratic { c: if pairwise { 2.0 } else { 1.0 } },
    })
}

/// `y = ⟨w*, x⟩` with `‖w*‖ = R/2`; least-squares loss; `F(w*) = 0` and
/// `F(w) = ‖w − w*‖² B² / d`.
pub fn realizable_least_squares(d: usize, b: f64, r: f64, seed: u64) -> Result<Problem, ProblemError> {
    quadratic_problem("realizable_least_squares", d, b, r, seed, false)
}

/// Pairwise analogue for `pair_squared`: `F̄(w) = 2 ‖w − w*‖² B² / d`.
pub fn realizable_pairwise(d: usize, b: f64, r: f64, seed: u64) -> Result<Problem, ProblemError> {
    quadratic_problem("realizable_pairwise", d, b, r, seed, true)
}

/// Logistic labels with flip noise, signal [`DEFAULT_SIGNAL`].
pub fn noisy_logistic(d: usize, b: f64, r: f64, label_flip: f64, seed: u64) -> Result<Problem, ProblemError> {
    noisy_logistic_with(d, b, r, label_flip, DEFAULT_SIGNAL, seed)
}

fn check_noisy(d: usize, b: f64, r: f64, flip: f64, signal: f64) -> Result<(), ProblemError> {
    if d == 0 {
        return Err(ProblemError::ZeroDimension);
    }
    positive("feature_bound", b)?;
    positive("radius", r)?;
    if !(0.0..0.5).contains(&flip) {
        return Err(ProblemError::InvalidFlip(flip));
    }
    if !(signal >= 0.0 && signal.is_finite()) {
        return Err(ProblemError::NotPositive { name: "signal", value: signal });
    }
    Ok(())
}

fn positive_rate(points: &[SpherePoint], b: f64, signal: f64, flip: f64) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            let s = sigmoid(signal * b * p.t);
            (1.0 - flip) * s + flip * (1.0 - s)
        })
        .collect()
}

/// Minimizes a convex function of `a ∈ [0, r]` by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64, r: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, r);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-10 * r.max(1.0) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    // the boundary may beat the interior bracket
    [0.0, mid, r].into_iter().min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap_or(mid)
}

fn noisy_problem(
    name: &str,
    d: usize,
    b: f64,
    r: f64,
    flip: f64,
    signal: f64,
    seed: u64,
    pairwise: bool,
) -> Result<Problem, ProblemError> {
    check_noisy(d, b, r, flip, signal)?;
    let u = random_direction(d, seed);
    let bounds = LossBounds::new(b, r, 1.0)?;
    let (loss, points) = if pairwise {
        (Loss::Pairwise(builtin_pairwise("auc_logistic", &bounds)?), sphere_rule(d, PAIR_NODES))
    } else {
        (Loss::Pointwise(builtin_pointwise("logistic", &bounds)?), sphere_rule(d, POINT_NODES))
    };
    let p_pos = positive_rate(&points, b, signal, flip);
    let oracle = if pairwise {
        Oracle::NoisyPair { points, p_pos }
    } else {
        Oracle::NoisyPoint { points, p_pos }
    };
    let w_true = Vector::from_finite(u.as_slice().iter().map(|x| x * signal).collect());
    let mut problem = Problem {
        spec: ProblemSpec::new(name, d, b, seed).with_radius(r).with_flip(flip).with_signal(signal),
        loss,
        bounds,
        d,
        direction: u.clone(),
        w_star: Vector::zeros(d),
        f_star: 0.0,
        labels: Labels::Logistic { w_true, flip },
        oracle,
    };
    // by the reflection symmetry about the true direction, the minimizer lies on it
    let a = golden_min(|a| problem.risk_along(a, 0.0), r);
    problem.w_star = Vector::from_finite(u.as_slice().iter().map(|x| x * a).collect());
    problem.f_star = problem.risk_along(a, 0.0);
    Ok(problem)
}

/// Logistic labels with flip noise and a chosen signal strength `‖w_true‖`.
pub fn noisy_logistic_with(
    d: usize,
    b: f64,
    r: f64,
    label_flip: f64,
    signal: f64,
    seed: u64,
) -> Result<Problem, ProblemError> {
    noisy_problem("noisy_logistic", d, b, r, label_flip, signal, seed, false)
}

/// Pairwise counterpart of [`noisy_logistic`] under `auc_logistic`.
pub fn noisy_auc(d: usize, b: f64, r: f64, label_flip: f64, signal: f64, seed: u64) -> Result<Problem, ProblemError> {
    noisy_problem("noisy_auc", d, b, r, label_flip, signal, seed, true)
}

fn separable_problem(
    name: &str,
    d: usize,
    margin: f64,
    b: f64,
    loss_name: &str,
    seed: u64,
    pairwise: bool,
) -> Result<Problem, ProblemError> {
    if d == 0 {
        return Err(ProblemError::ZeroDimension);
    }
    positive("feature_bound", b)?;
    if !(margin > 0.0 && margin <= b) {
        return Err(ProblemError::InvalidMargin { margin, bound: b });
    }
    let acceptance = sphere_cap_two_sided(d, margin / b);
    if acceptance < 0.01 {
        return Err(ProblemError::MarginTooSmall { margin, acceptance });
    }
    // pairs of opposite labels are separated by 2·margin along u
    let scale = if pairwise { 2.0 * margin } else { margin };
    let r = 2.0 / scale;
    let bounds = LossBounds::new(b, r, 1.0)?;
    let incompatible = || ProblemError::IncompatibleLoss { problem: name.to_string(), loss: loss_name.to_string() };
    let base = loss_name.split(':').next().unwrap_or("");
    let loss = if pairwise {
        if !matches!(base, "auc_hinge" | "auc_hinge_q") {
            return Err(incompatible());
        }
        Loss::Pairwise(builtin_pairwise(loss_name, &bounds)?)
    } else {
        if !matches!(base, "hinge" | "hinge_q") {
            return Err(incompatible());
        }
        Loss::Pointwise(builtin_pointwise(loss_name, &bounds)?)
    };
    let u = random_direction(d, seed);
    let w_star = Vector::from_finite(u.as_slice().iter().map(|x| x / scale).collect());
    Ok(Problem {
        spec: ProblemSpec::new(name, d, b, seed).with_margin(margin).with_loss(loss_name),
        loss,
        bounds,
        d,
        direction: u.clone(),
        w_star,
        f_star: 0.0,
        labels: Labels::Separable { u, margin, acceptance },
        oracle: Oracle::MonteCarlo { seed: derive_seed(seed, &[0x0a11_ce]), samples: MC_SAMPLES },
    })
}

/// Labels `sign⟨u, x⟩` with `|⟨u, x⟩| ≥ margin`, `w* = u / margin`,
/// `R = 2‖w*‖`, hinge loss.
pub fn separable_hinge(d: usize, margin: f64, b: f64, seed: u64) -> Result<Problem, ProblemError> {
    separable_hinge_with(d, margin, b, "hinge", seed)
}

/// As [`separable_hinge`] with `hinge` or `hinge_q:<q>`.
pub fn separable_hinge_with(d: usize, margin: f64, b: f64, loss: &str, seed: u64) -> Result<Problem, ProblemError> {
    separable_problem("separable_hinge", d, margin, b, loss, seed, false)
}

/// Pairwise counterpart for AUC hinge losses: `w* = u / (2·margin)`.
pub fn separable_auc(d: usize, margin: f64, b: f64, seed: u64) -> Result<Problem, ProblemError> {
    separable_auc_with(d, margin, b, "auc_hinge", seed)
}

pub fn separable_auc_with(d: usize, margin: f64, b: f64, loss: &str, seed: u64) -> Result<Problem, ProblemError> {
    separable_problem("separable_auc", d, margin, b, loss, seed, true)
}

impl Problem {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn loss(&self) -> &Loss {
        &self.loss
    }

    pub fn bounds(&self) -> &LossBounds {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> f64 {
        self.bounds.radius
    }

    pub fn w_star(&self) -> &Vector {
        &self.w_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn is_pairwise(&self) -> bool {
        self.loss.is_pairwise()
    }

    /// True for the constructions with `F(w*) = 0` exactly.
    pub fn is_lownoise(&self) -> bool {
        !matches!(self.labels, Labels::Logistic { .. })
    }

    /// Unit vector along which the labels are generated.
    pub fn direction(&self) -> &Vector {
        &self.direction
    }

    fn draw(&self, rng: &mut RngStream) -> Example {
        let (d, b) = (self.d, self.bounds.feature_bound);
        match &self.labels {
            Labels::Linear => {
                let x = sphere_sample(rng, d, b);
                let y = dot(&x, self.w_star.as_slice());
                Example { x: Vector::from_finite(x), y }
            }
            Labels::Logistic { w_true, flip } => {
                let x = sphere_sample(rng, d, b);
                let p = sigmoid(dot(&x, w_true.as_slice()));
                let mut y = if rng.uniform() < p { 1.0 } else { -1.0 };
                if rng.uniform() < *flip {
                    y = -y;
                }
                Example { x: Vector::from_finite(x), y }
            }
            Labels::Separable { u, margin, .. } => loop {
                let x = sphere_sample(rng, d, b);
                let s = dot(&x, u.as_slice());
                if s.abs() >= *margin {
                    let y = if s > 0.0 { 1.0 } else { -1.0 };
                    return Example { x: Vector::from_finite(x), y };
                }
            },
        }
    }

    /// `n` i.i.d. examples from stream [`streams::DATA`] of `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Example> {
        let mut rng = RngState::new(seed, streams::DATA).start();
        self.sample_from(n, &mut rng)
    }

    pub fn sample_from(&self, n: usize, rng: &mut RngStream) -> Vec<Example> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// One fresh example, e.g. a replacement `z_i'`.
    pub fn sample_one(&self, rng: &mut RngStream) -> Example {
        self.draw(rng)
    }

    /// Population risk `F(w)` (or `F̄(w)` for pairwise problems).
    pub fn population_risk(&self, w: &Vector) -> f64 {
        self.population_risk_with_error(w).value
    }

    pub fn population_risk_with_error(&self, w: &Vector) -> OracleValue {
        match &self.oracle {
            Oracle::Quadratic { c } => OracleValue {
                value: c * w.dist_sq(&self.w_star) * self.bounds.feature_bound.powi(2) / self.d as f64,
                error: 0.0,
            },
            Oracle::NoisyPoint { .. } | Oracle::NoisyPair { .. } => {
                let a = w.dot(&self.direction);
                let b = (w.norm_sq() - a * a).max(0.0).sqrt();
                let error = if self.is_pairwise() { PAIR_QUADRATURE_ERROR } else { QUADRATURE_ERROR };
                OracleValue { value: self.risk_along(a, b), error }
            }
            Oracle::MonteCarlo { .. } => {
                let (mean, se) = self.monte_carlo(|ws| self.pointwise_value(w.as_slice(), ws));
                OracleValue { value: mean, error: se }
            }
        }
    }

    /// `F(w) − F(w*)`. Monte-Carlo oracles evaluate both risks on the same
    /// samples, so the reported error is that of the paired difference.
    pub fn excess_risk(&self, w: &Vector) -> OracleValue {
        match &self.oracle {
            Oracle::MonteCarlo { .. } => {
                let (mean, se) = self.monte_carlo(|ws| {
                    self.pointwise_value(w.as_slice(), ws) - self.pointwise_value(self.w_star.as_slice(), ws)
                });
                OracleValue { value: mean, error: se }
            }
            _ => {
                let v = self.population_risk_with_error(w);
                OracleValue { value: v.value - self.f_star, error: v.error }
            }
        }
    }

    /// Loss of `w` on one oracle sample (an example, or a pair stored as two).
    fn pointwise_value(&self, w: &[f64], sample: &[Example]) -> f64 {
        match &self.loss {
            Loss::Pointwise(l) => l.value_raw(w, &sample[0]),
            Loss::Pairwise(l) => {
                let u = dot(w, sample[0].x.as_slice()) - dot(w, sample[1].x.as_slice());
                l.value_at(u, sample[0].y, sample[1].y)
            }
        }
    }

    /// Mean and standard error of `g` over the frozen oracle sample stream.
    fn monte_carlo(&self, g: impl Fn(&[Example]) -> f64 + Sync) -> (f64, f64) {
        let Oracle::MonteCarlo { seed, samples } = self.oracle else {
            return (f64::NAN, f64::NAN);
        };
        let per = if self.is_pairwise() { 2 } else { 1 };
        let chunks = samples.div_ceil(MC_CHUNK);
        let parts: Vec<(f64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = RngState::new(derive_seed(seed, &[c as u64]), streams::ORACLE).start();
                let m = MC_CHUNK.min(samples - c * MC_CHUNK);
                let mut buf = Vec::with_capacity(per);
                let mut vals = Vec::with_capacity(m);
                for _ in 0..m {
                    buf.clear();
                    for _ in 0..per {
                        buf.push(self.draw(&mut rng));
                    }
                    vals.push(g(&buf));
                }
                let s = compensated_sum(vals.iter().copied());
                let s2 = compensated_sum(vals.iter().map(|v| v * v));
                (s, s2)
            })
            .collect();
        let n = samples as f64;
        let mean = compensated_sum(parts.iter().map(|p| p.0)) / n;
        let second = compensated_sum(parts.iter().map(|p| p.1)) / n;
        let var = (second - mean * mean).max(0.0) * n / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    /// Quadrature risk at `w = a·u + b·e` with `e ⊥ u` a unit vector.
    fn risk_along(&self, a: f64, b: f64) -> f64 {
        let bf = self.bounds.feature_bound;
        match &self.oracle {
            Oracle::NoisyPoint { points, p_pos } => compensated_sum(points.iter().zip(p_pos).map(|(pt, &p)| {
                let m = bf * (a * pt.t + b * pt.s);
                pt.weight * (p * softplus(-m) + (1.0 - p) * softplus(m))
            })),
            Oracle::NoisyPair { points, p_pos } => {
                let m: Vec<f64> = points.iter().map(|pt| bf * (a * pt.t + b * pt.s)).collect();
                let rows: Vec<f64> = (0..points.len())
                    .into_par_iter()
                    .map(|k| {
                        let (mk, pk) = (m[k], p_pos[k]);
                        let row = compensated_sum(points.iter().zip(&m).zip(p_pos).map(|((pl, &ml), &q)| {
                            let u = mk - ml;
                            pl.weight * (pk * (1.0 - q) * softplus(-u) + (1.0 - pk) * q * softplus(u))
                        }));
                        points[k].weight * row
                    })
                    .collect();
                compensated_sum(rows)
            }
            _ => f64::NAN,
        }
    }

    /// Empirical risk `F_S(w)` (or `F̄_S(w)`) under the problem's loss.
    pub fn empirical_risk(&self, w: &Vector, data: &[Example]) -> Result<f64, SgdError> {
        match &self.loss {
            Loss::Pointwise(l) => empirical_risk(l, w, data),
            Loss::Pairwise(l) => empirical_pairwise_risk(l, w, data),
        }
    }

    /// Runs the engine matching the problem's loss, projecting onto the
    /// problem's radius.
    pub fn train(&self, config: &SgdConfig, data: &[Example]) -> Result<RunReport, SgdError> {
        match &self.loss {
            Loss::Pointwise(l) => run_pointwise(config, l, data),
            Loss::Pairwise(l) => run_pairwise(config, l, data),
        }
    }

    /// Acceptance probability of the margin condition (separable problems).
    pub fn acceptance(&self) -> Option<f64> {
        match self.labels {
            Labels::Separable { acceptance, .. } => Some(acceptance),
            _ => None,
        }
    }
}

/// Declared accuracy of the quadrature oracles (checked against finer rules
/// in the tests).
pub const QUADRATURE_ERROR: f64 = 1e-9;
pub const PAIR_QUADRATURE_ERROR: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_closed_form() {
        let p = realizable_least_squares(4, 2.0, 2.0, 1).unwrap();
        assert_eq!(p.population_risk(p.w_star()), 0.0);
        assert!((p.w_star().norm() - 1.0).abs() < 1e-15);
        let mut w = p.w_star().clone().into_inner();
        w[0] += 1.0;
        // B² = d
        assert!((p.population_risk(&Vector::new(w).unwrap()) - 1.0).abs() < 1e-14);
        let data = p.sample(10_000, 5);
        let Loss::Pointwise(l) = p.loss() else { panic!() };
        assert!(empirical_risk(l, p.w_star(), &data).unwrap() < 1e-28);
        assert!(data.iter().all(|z| z.x.norm() <= 2.0 && z.y.abs() <= p.bounds().label_bound));
    }

    #[test]
    fn separable_hinge_basics() {
        let p = separable_hinge(5, 0.3, 1.0, 2).unwrap();
        let Loss::Pointwise(l) = p.loss() else { panic!() };
        let data = p.sample(2000, 3);
        assert!(data.iter().all(|z| l.value(p.w_star(), z) == 0.0));
        assert_eq!(p.population_risk(&Vector::zeros(5)), 1.0);
        assert!(p.population_risk(p.w_star()) == 0.0);
    }

    #[test]
    fn tiny_margin_rejected() {
        assert!(matches!(separable_hinge(200, 0.6, 1.0, 1), Err(ProblemError::MarginTooSmall { .. })));
    }

    #[test]
    fn flip_half_puts_minimizer_at_origin() {
        let p = noisy_logistic(5, 2.0, 1.0, 0.4999999, 1).unwrap();
        assert!(p.w_star().norm() < 1e-4);
    }

    #[test]
    fn quadrature_resolution() {
        let p = noisy_logistic(10, 2.0, 1.0, 0.1, 7).unwrap();
        let Oracle::NoisyPoint { .. } = &p.oracle else { panic!() };
        let fine = sphere_rule(10, 160);
        let pf = positive_rate(&fine, 2.0, DEFAULT_SIGNAL, 0.1);
        let mut q = p.clone();
        q.oracle = Oracle::NoisyPoint { points: fine, p_pos: pf };
        for (a, b) in [(0.0, 0.0), (0.7, 0.3), (-0.5, 0.8), (1.0, 0.0)] {
            assert!((p.risk_along(a, b) - q.risk_along(a, b)).abs() < QUADRATURE_ERROR);
        }
    }

    #[test]
    fn pairwise_quadrature_resolution() {
        let p = noisy_auc(10, 2.0, 1.0, 0.1, DEFAULT_SIGNAL, 7).unwrap();
        let fine = sphere_rule(10, 64);
        let pf = positive_rate(&fine, 2.0, DEFAULT_SIGNAL, 0.1);
        let mut q = p.clone();
        q.oracle = Oracle::NoisyPair { points: fine, p_pos: pf };
        for (a, b) in [(0.0, 0.0), (0.7, 0.3), (1.0, 0.0)] {
            let (x, y) = (p.risk_along(a, b), q.risk_along(a, b));
            assert!((x - y).abs() < PAIR_QUADRATURE_ERROR, "{a} {b}: {:e}", x - y);
        }
    }

    #[test]
    fn pairwise_closed_form_matches_monte_carlo() {
        let p = realizable_pairwise(3, 1.0, 2.0, 4).unwrap();
        let Loss::Pairwise(l) = p.loss() else { panic!() };
        let data = p.sample(600, 9);
        assert!(empirical_pairwise_risk(l, p.w_star(), &data).unwrap() < 1e-28);
        let w = Vector::zeros(3);
        let closed = p.population_risk(&w);
        assert!((closed - 2.0 / 3.0).abs() < 1e-14);
        let mut rng = RngState::new(17, streams::ORACLE).start();
        let m = 200_000;
        let vals: Vec<f64> = (0..m)
            .map(|_| {
                let (a, b) = (p.sample_one(&mut rng), p.sample_one(&mut rng));
                l.value(&w, &a, &b)
            })
            .collect();
        let (mean, se) = crate::numerics::mean_and_stderr(&vals);
        assert!((mean - closed).abs() < 4.0 * se, "{mean} vs {closed} ± {se}");
    }

    #[test]
    fn spec_violations_are_collected() {
        let mut s = ProblemSpec::new("separable_hinge", 0, -1.0, 0);
        s.label_flip = Some(0.2);
        let v = s.violations();
        assert!(v.len() >= 4, "{v:?}");
        assert!(ProblemSpec::new("nope", 3, 1.0, 0).build().is_err());
    }
}
