//! Convex losses for linear models with certified constants.
//!
//! Each loss carries a [`Certificate`]: a Lipschitz constant `G`, a
//! smoothness class (strongly smooth or α-Hölder) and `M = sup_z f(0; z)`.
//! Certificates are derived from declared bounds on features, labels and the
//! feasible ball, never from data, so the privacy calibration built on `G`
//! does not depend on the sample.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{dot, streams, RngState, RngStream, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("unknown loss '{0}'")]
    UnknownLoss(String),
    #[error("exponent q must lie in [1, 2], got {0}")]
    ExponentOutOfRange(f64),
    #[error("Hölder exponent alpha must lie in [0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("smoothness parameter L must be positive and finite, got {0}")]
    InvalidSmoothness(f64),
    #[error("bound '{name}' must be positive and finite, got {value}")]
    InvalidBound { name: &'static str, value: f64 },
    #[error("loss '{0}' needs a finite ball radius to certify its Lipschitz constant")]
    UncertifiableRadius(String),
    #[error("c_alpha_2 is undefined for the strongly smooth class")]
    CAlpha2Smooth,
    #[error("c_alpha_3 undefined for alpha=1")]
    CAlpha3Smooth,
}

/// Gradient regularity of a loss in `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum SmoothnessClass {
    /// L-strongly smooth.
    Smooth { l: f64 },
    /// `‖∂f(w) − ∂f(w')‖ ≤ L ‖w − w'‖^α` with α in [0, 1).
    Holder { alpha: f64, l: f64 },
}

impl SmoothnessClass {
    pub fn smooth(l: f64) -> Result<Self, LossError> {
        check_l(l)?;
        Ok(SmoothnessClass::Smooth { l })
    }

    pub fn holder(alpha: f64, l: f64) -> Result<Self, LossError> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(LossError::AlphaOutOfRange(alpha));
        }
        check_l(l)?;
        Ok(SmoothnessClass::Holder { alpha, l })
    }

    pub fn l(&self) -> f64 {
        match *self {
            SmoothnessClass::Smooth { l } | SmoothnessClass::Holder { l, .. } => l,
        }
    }

    /// Hölder exponent, with the smooth class reported as 1.
    pub fn alpha(&self) -> f64 {
        match *self {
            SmoothnessClass::Smooth { .. } => 1.0,
            SmoothnessClass::Holder { alpha, .. } => alpha,
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self, SmoothnessClass::Smooth { .. })
    }

    fn with_l(self, l: f64) -> Self {
        match self {
            SmoothnessClass::Smooth { .. } => SmoothnessClass::Smooth { l },
            SmoothnessClass::Holder { alpha, .. } => SmoothnessClass::Holder { alpha, l },
        }
    }
}

fn check_l(l: f64) -> Result<(), LossError> {
    if l > 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(LossError::InvalidSmoothness(l))
    }
}

/// Certified constants of a loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Lipschitz constant on the feasible ball.
    pub g: f64,
    pub smoothness: SmoothnessClass,
    /// `sup_z f(0; z)`.
    pub m: f64,
}

/// Declared bounds a loss certificate is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBounds {
    /// Bound on `‖x‖₂`.
    pub feature_bound: f64,
    /// Radius of the feasible ball (may be infinite for losses whose
    /// gradient is bounded regardless of `w`).
    pub radius: f64,
    /// Bound on `|y|`.
    pub label_bound: f64,
}

impl LossBounds {
    pub fn new(feature_bound: f64, radius: f64, label_bound: f64) -> Result<Self, LossError> {
        for (name, value) in [("feature_bound", feature_bound), ("label_bound", label_bound)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LossError::InvalidBound { name, value });
            }
        }
        if !(radius > 0.0) {
            return Err(LossError::InvalidBound { name: "radius", value: radius });
        }
        Ok(LossBounds { feature_bound, radius, label_bound })
    }
}

/// A labelled example `z = (x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vector,
    pub y: f64,
}

/// Scalar link of a linear-model loss, evaluated at the prediction `u`
/// against target `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Link {
    /// `log(1 + exp(-y u))`
    Logistic,
    /// `(u - y)^2`
    Squared,
    /// `max{0, 1 - y u}^q`
    Hinge { q: f64 },
    /// `|y - u|^q`
    QNorm { q: f64 },
}

/// `log(1 + e^z)` without overflow; exact asymptote beyond |z| = 500.
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

/// `1 / (1 + e^{-z})`.
#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Link {
    #[inline]
    fn value(self, u: f64, y: f64) -> f64 {
        match self {
            Link::Logistic => softplus(-y * u),
            Link::Squared => (u - y) * (u - y),
            Link::Hinge { q } => {
                let slack = 1.0 - y * u;
                if slack <= 0.0 {
                    0.0
                } else if q == 1.0 {
                    slack
                } else {
                    slack.powf(q)
                }
            }
            Link::QNorm { q } => {
                let r = (y - u).abs();
                if q == 1.0 {
                    r
                } else {
                    r.powf(q)
                }
            }
        }
    }

    /// d/du of the link. At kinks the zero subgradient is returned.
    #[inline]
    fn derivative(self, u: f64, y: f64) -> f64 {
        match self {
            Link::Logistic => -y * sigmoid(-y * u),
            Link::Squared => 2.0 * (u - y),
            Link::Hinge { q } => {
                let slack = 1.0 - y * u;
                if slack <= 0.0 {
                    0.0
                } else if q == 1.0 {
                    -y
                } else {
                    -q * y * slack.powf(q - 1.0)
                }
            }
            Link::QNorm { q } => {
                let r = y - u;
                if r == 0.0 {
                    0.0
                } else if q == 1.0 {
                    -r.signum()
                } else {
                    -q * r.signum() * r.abs().powf(q - 1.0)
                }
            }
        }
    }

    /// Distance of the prediction from the non-differentiable point, if any.
    fn kink_distance(self, u: f64, y: f64) -> f64 {
        match self {
            Link::Logistic | Link::Squared => f64::INFINITY,
            Link::Hinge { q } if q >= 2.0 => f64::INFINITY,
            Link::Hinge { .. } => (1.0 - y * u).abs(),
            Link::QNorm { q } if q >= 2.0 => f64::INFINITY,
            Link::QNorm { .. } => (y - u).abs(),
        }
    }
}

fn parse_q(name: &str, text: &str) -> Result<f64, LossError> {
    let q: f64 = text.trim().parse().map_err(|_| LossError::UnknownLoss(name.to_string()))?;
    if !(1.0..=2.0).contains(&q) {
        return Err(LossError::ExponentOutOfRange(q));
    }
    Ok(q)
}

fn finite_radius(name: &str, bounds: &LossBounds) -> Result<f64, LossError> {
    if bounds.radius.is_finite() {
        Ok(bounds.radius)
    } else {
        Err(LossError::UncertifiableRadius(name.to_string()))
    }
}

/// Hinge-type certificate for margin `s * u` with `|s| * ‖x‖ ≤ scale`.
fn hinge_certificate(q: f64, scale: f64, radius: f64) -> Result<Certificate, LossError> {
    let smoothness = if q == 2.0 {
        SmoothnessClass::smooth(2.0 * scale * scale)?
    } else {
        SmoothnessClass::holder(q - 1.0, q * scale.powf(q))?
    };
    let g = if q == 1.0 { scale } else { q * scale * (1.0 + scale * radius).powf(q - 1.0) };
    Ok(Certificate { g, smoothness, m: 1.0 })
}

/// Loss on a single example, `f(w; z) = φ(⟨w, x⟩, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseLoss {
    name: String,
    link: Link,
    certificate: Certificate,
}

/// Builds a named pointwise loss: `logistic`, `least_squares`, `hinge`
/// (q = 1), `hinge_q:<q>` or `qnorm:<q>` with q in [1, 2].
pub fn builtin_pointwise(name: &str, bounds: &LossBounds) -> Result<PointwiseLoss, LossError> {
    let b = bounds.feature_bound;
    let y = bounds.label_bound;
    let (base, param) = match name.split_once(':') {
        Some((base, p)) => (base, Some(p)),
        None => (name, None),
    };
    let (link, certificate) = match (base, param) {
        ("logistic", None) => (
            Link::Logistic,
            Certificate {
                g: y * b,
                smoothness: SmoothnessClass::smooth(y * y * b * b / 4.0)?,
                m: std::f64::consts::LN_2,
            },
        ),
        ("least_squares", None) => {
            let r = finite_radius(name, bounds)?;
            (
                Link::Squared,
                Certificate {
                    g: 2.0 * b * (b * r + y),
                    smoothness: SmoothnessClass::smooth(2.0 * b * b)?,
                    m: y * y,
                },
            )
        }
        ("hinge", None) => (Link::Hinge { q: 1.0 }, hinge_certificate(1.0, y * b, bounds.radius)?),
        ("hinge_q", Some(p)) => {
            let q = parse_q(name, p)?;
            let r = if q > 1.0 { finite_radius(name, bounds)? } else { bounds.radius };
            (Link::Hinge { q }, hinge_certificate(q, y * b, r)?)
        }
        ("qnorm", Some(p)) => {
            let q = parse_q(name, p)?;
            let smoothness = if q == 2.0 {
                SmoothnessClass::smooth(2.0 * b * b)?
            } else if q == 1.0 {
                SmoothnessClass::holder(0.0, 2.0 * b)?
            } else {
                SmoothnessClass::holder(q - 1.0, q * 2f64.powf(2.0 - q) * b.powf(q))?
            };
            let g = if q == 1.0 {
                b
            } else {
                q * b * (b * finite_radius(name, bounds)? + y).powf(q - 1.0)
            };
            (Link::QNorm { q }, Certificate { g, smoothness, m: y.powf(q) })
        }
        _ => return Err(LossError::UnknownLoss(name.to_string())),
    };
    Ok(PointwiseLoss { name: name.to_string(), link, certificate })
}

impl PointwiseLoss {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn value(&self, w: &Vector, z: &Example) -> f64 {
        self.value_raw(w.as_slice(), z)
    }

    pub fn gradient(&self, w: &Vector, z: &Example) -> Vector {
        let k = self.grad_coeff(w.as_slice(), z);
        Vector::from_finite(z.x.as_slice().iter().map(|xi| k * xi).collect())
    }

    #[inline]
    pub(crate) fn value_raw(&self, w: &[f64], z: &Example) -> f64 {
        self.link.value(dot(w, z.x.as_slice()), z.y)
    }

    /// The gradient is `grad_coeff * x`.
    #[inline]
    pub(crate) fn grad_coeff(&self, w: &[f64], z: &Example) -> f64 {
        self.link.derivative(dot(w, z.x.as_slice()), z.y)
    }

    /// Distance of `⟨w, x⟩` from the loss's kink (infinite for smooth links).
    pub fn kink_distance(&self, w: &Vector, z: &Example) -> f64 {
        self.link.kink_distance(w.dot(&z.x), z.y)
    }

    /// Copy of this loss whose certified `L` is multiplied by `factor`.
    /// Only meant for negative controls of the certificate checks.
    pub fn with_scaled_l(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.certificate.smoothness = self.certificate.smoothness.with_l(self.certificate.smoothness.l() * factor);
        out
    }
}

/// How a pairwise loss turns two labels into a target.
#[derive(Debug, Clone, Copy, PartialEq)]
enum PairTarget {
    /// Only discordant pairs contribute; the target is `(y − y')/2`.
    Ranking,
    /// The target is `y − y'`.
    Difference,
}

/// Loss on an ordered pair, `f(w; z, z') = φ(⟨w, x − x'⟩, target(y, y'))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseLoss {
    name: String,
    link: Link,
    target: PairTarget,
    certificate: Certificate,
}

/// Builds a named pairwise loss: `auc_hinge`, `auc_hinge_q:<q>`,
/// `auc_logistic` or `pair_squared`. Ranking losses expect labels in {−1, 1}.
pub fn builtin_pairwise(name: &str, bounds: &LossBounds) -> Result<PairwiseLoss, LossError> {
    let b = bounds.feature_bound;
    let y = bounds.label_bound;
    let (base, param) = match name.split_once(':') {
        Some((base, p)) => (base, Some(p)),
        None => (name, None),
    };
    let (link, target, certificate) = match (base, param) {
        ("auc_logistic", None) => (
            Link::Logistic,
            PairTarget::Ranking,
            Certificate {
                g: 2.0 * b,
                smoothness: SmoothnessClass::smooth(b * b)?,
                m: std::f64::consts::LN_2,
            },
        ),
        ("auc_hinge", None) => (
            Link::Hinge { q: 1.0 },
            PairTarget::Ranking,
            hinge_certificate(1.0, 2.0 * b, bounds.radius)?,
        ),
        ("auc_hinge_q", Some(p)) => {
            let q = parse_q(name, p)?;
            let r = if q > 1.0 { finite_radius(name, bounds)? } else { bounds.radius };
            (Link::Hinge { q }, PairTarget::Ranking, hinge_certificate(q, 2.0 * b, r)?)
        }
        ("pair_squared", None) => {
            let r = finite_radius(name, bounds)?;
            (
                Link::Squared,
                PairTarget::Difference,
                Certificate {
                    g: 8.0 * b * (b * r + y),
                    smoothness: SmoothnessClass::smooth(8.0 * b * b)?,
                    m: 4.0 * y * y,
                },
            )
        }
        _ => return Err(LossError::UnknownLoss(name.to_string())),
    };
    Ok(PairwiseLoss { name: name.to_string(), link, target, certificate })
}

impl PairwiseLoss {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    /// Target for the pair, or `None` when the pair does not contribute.
    #[inline]
    fn pair_target(&self, y: f64, y2: f64) -> Option<f64> {
        match self.target {
            PairTarget::Ranking if y == y2 => None,
            PairTarget::Ranking => Some((y - y2) / 2.0),
            PairTarget::Difference => Some(y - y2),
        }
    }

    pub fn value(&self, w: &Vector, z: &Example, z2: &Example) -> f64 {
        let u = w.dot(&z.x) - w.dot(&z2.x);
        self.value_at(u, z.y, z2.y)
    }

    pub fn gradient(&self, w: &Vector, z: &Example, z2: &Example) -> Vector {
        let k = self.grad_coeff_at(w.dot(&z.x) - w.dot(&z2.x), z.y, z2.y);
        Vector::from_finite(
            z.x.as_slice().iter().zip(z2.x.as_slice()).map(|(a, b)| k * (a - b)).collect(),
        )
    }

    /// Value given the prediction difference `⟨w, x − x'⟩`.
    #[inline]
    pub(crate) fn value_at(&self, u: f64, y: f64, y2: f64) -> f64 {
        match self.pair_target(y, y2) {
            Some(t) => self.link.value(u, t),
            None => 0.0,
        }
    }

    /// The gradient is `coeff * (x − x')`.
    #[inline]
    pub(crate) fn grad_coeff_at(&self, u: f64, y: f64, y2: f64) -> f64 {
        match self.pair_target(y, y2) {
            Some(t) => self.link.derivative(u, t),
            None => 0.0,
        }
    }

    pub fn kink_distance(&self, w: &Vector, z: &Example, z2: &Example) -> f64 {
        match self.pair_target(z.y, z2.y) {
            Some(t) => self.link.kink_distance(w.dot(&z.x) - w.dot(&z2.x), t),
            None => f64::INFINITY,
        }
    }

    pub fn with_scaled_l(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.certificate.smoothness = self.certificate.smoothness.with_l(self.certificate.smoothness.l() * factor);
        out
    }
}

/// Either kind of loss, as carried by problems and configs.
#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    Pointwise(PointwiseLoss),
    Pairwise(PairwiseLoss),
}

impl Loss {
    /// Looks the name up in the pointwise registry, then the pairwise one.
    pub fn by_name(name: &str, bounds: &LossBounds) -> Result<Loss, LossError> {
        match builtin_pointwise(name, bounds) {
            Ok(l) => Ok(Loss::Pointwise(l)),
            Err(LossError::UnknownLoss(_)) => builtin_pairwise(name, bounds).map(Loss::Pairwise),
            Err(e) => Err(e),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Loss::Pointwise(l) => l.name(),
            Loss::Pairwise(l) => l.name(),
        }
    }

    pub fn certificate(&self) -> &Certificate {
        match self {
            Loss::Pointwise(l) => l.certificate(),
            Loss::Pairwise(l) => l.certificate(),
        }
    }

    pub fn is_pairwise(&self) -> bool {
        matches!(self, Loss::Pairwise(_))
    }

    pub fn with_scaled_l(&self, factor: f64) -> Loss {
        match self {
            Loss::Pointwise(l) => Loss::Pointwise(l.with_scaled_l(factor)),
            Loss::Pairwise(l) => Loss::Pairwise(l.with_scaled_l(factor)),
        }
    }
}

/// Self-bounding constant `c_{α,1}`: `√(2L)` for smooth losses,
/// `(1 + 1/α)^{α/(1+α)} L^{1/(1+α)}` for α > 0 and `M + L` for α = 0.
pub fn c_alpha_1(cert: &Certificate) -> f64 {
    match cert.smoothness {
        SmoothnessClass::Smooth { l } => (2.0 * l).sqrt(),
        SmoothnessClass::Holder { alpha, l } if alpha == 0.0 => cert.m + l,
        SmoothnessClass::Holder { alpha, l } => {
            (1.0 + 1.0 / alpha).powf(alpha / (1.0 + alpha)) * l.powf(1.0 / (1.0 + alpha))
        }
    }
}

/// `c_{α,2} = (1−α)/(1+α) · (2α/(1+α))^{2α/(1−α)} · c_{α,1}^{(2+2α)/(1−α)}`,
/// and `c_{α,1}²` at α = 0.
pub fn c_alpha_2(cert: &Certificate) -> Result<f64, LossError> {
    let c1 = c_alpha_1(cert);
    match cert.smoothness {
        SmoothnessClass::Smooth { .. } => Err(LossError::CAlpha2Smooth),
        SmoothnessClass::Holder { alpha, .. } if alpha == 0.0 => Ok(c1 * c1),
        SmoothnessClass::Holder { alpha, .. } => Ok((1.0 - alpha) / (1.0 + alpha)
            * (2.0 * alpha / (1.0 + alpha)).powf(2.0 * alpha / (1.0 - alpha))
            * c1.powf((2.0 + 2.0 * alpha) / (1.0 - alpha))),
    }
}

/// `c_{α,3} = √((1−α)/(1+α)) · (2^{−α} L)^{1/(1−α)}`.
pub fn c_alpha_3(cert: &Certificate) -> Result<f64, LossError> {
    match cert.smoothness {
        SmoothnessClass::Smooth { .. } => Err(LossError::CAlpha3Smooth),
        SmoothnessClass::Holder { alpha, l } => {
            Ok(((1.0 - alpha) / (1.0 + alpha)).sqrt() * (2f64.powf(-alpha) * l).powf(1.0 / (1.0 - alpha)))
        }
    }
}

/// Pairwise variant with `e` under the root:
/// `√(e(1−α)/(1+α)) · (2^{−α} L)^{1/(1−α)}`.
pub fn c_alpha_3_pairwise(cert: &Certificate) -> Result<f64, LossError> {
    Ok(std::f64::consts::E.sqrt() * c_alpha_3(cert)?)
}

const SELF_BOUNDING_RTOL: f64 = 1e-9;

fn self_bounding_rhs(cert: &Certificate, value: f64) -> f64 {
    match cert.smoothness {
        SmoothnessClass::Smooth { l } => (2.0 * l * value).sqrt(),
        SmoothnessClass::Holder { alpha, .. } => c_alpha_1(cert) * value.powf(alpha / (1.0 + alpha)),
    }
}

fn self_bounding_holds(cert: &Certificate, value: f64, grad_norm: f64) -> bool {
    grad_norm <= self_bounding_rhs(cert, value) * (1.0 + SELF_BOUNDING_RTOL)
}

/// Checks `‖∂f‖ ≤ √(2 L f)` (smooth) or `‖∂f‖ ≤ c_{α,1} f^{α/(1+α)}`
/// (Hölder) at one point, to relative tolerance 1e-9.
pub fn check_self_bounding(loss: &PointwiseLoss, w: &Vector, z: &Example) -> bool {
    self_bounding_holds(loss.certificate(), loss.value(w, z), loss.gradient(w, z).norm())
}

pub fn check_self_bounding_pair(loss: &PairwiseLoss, w: &Vector, z: &Example, z2: &Example) -> bool {
    self_bounding_holds(loss.certificate(), loss.value(w, z, z2), loss.gradient(w, z, z2).norm())
}

/// Outcome of [`probe_self_bounding`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probes: usize,
    pub violations: usize,
    /// Largest `‖∂f‖ / rhs` seen (≤ 1 when the certificate holds).
    pub worst_ratio: f64,
}

/// Largest `‖w‖` probed for losses certified on an unbounded domain.
pub const PROBE_RADIUS_CAP: f64 = 10.0;

fn probe_point(rng: &mut RngStream, d: usize, radius: f64) -> Vector {
    let mut v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let n = crate::numerics::norm(&v);
    let r = if rng.uniform() < 0.5 { radius } else { radius * rng.uniform() };
    for x in &mut v {
        *x *= r / n;
    }
    Vector::from_finite(v)
}

fn probe_example(rng: &mut RngStream, d: usize, bounds: &LossBounds) -> Example {
    let x = probe_point(rng, d, bounds.feature_bound);
    let y = if rng.uniform() < 0.5 {
        if rng.uniform() < 0.5 { bounds.label_bound } else { -bounds.label_bound }
    } else {
        bounds.label_bound * (2.0 * rng.uniform() - 1.0)
    };
    Example { x, y }
}

/// Checks the self-bounding inequality of `loss` at `probes` random points
/// `(w, z)` (or `(w, z, z')`) in `d` dimensions, with `‖w‖ ≤ min(R, 10)`,
/// `‖x‖ ≤ B` (half the probes on the boundary) and `|y| ≤ Y`.
pub fn probe_self_bounding(loss: &Loss, bounds: &LossBounds, d: usize, probes: usize, seed: u64) -> ProbeReport {
    let mut rng = RngState::new(seed, streams::PROBES).start();
    let radius = bounds.radius.min(PROBE_RADIUS_CAP);
    let cert = loss.certificate();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let w = probe_point(&mut rng, d, radius);
        let z = probe_example(&mut rng, d, bounds);
        let (value, grad) = match loss {
            Loss::Pointwise(l) => (l.value(&w, &z), l.gradient(&w, &z).norm()),
            Loss::Pairwise(l) => {
                let z2 = probe_example(&mut rng, d, bounds);
                (l.value(&w, &z, &z2), l.gradient(&w, &z, &z2).norm())
            }
        };
        if !self_bounding_holds(cert, value, grad) {
            violations += 1;
        }
        let rhs = self_bounding_rhs(cert, value);
        if grad > 0.0 {
            worst = worst.max(if rhs > 0.0 { grad / rhs } else { f64::INFINITY });
        }
    }
    ProbeReport { probes, violations, worst_ratio: worst }
}

/// Names of every builtin loss at a representative set of exponents.
pub fn builtin_names() -> Vec<&'static str> {
    vec![
        "logistic",
        "least_squares",
        "hinge",
        "hinge_q:1.5",
        "hinge_q:2",
        "qnorm:1",
        "qnorm:1.5",
        "qnorm:2",
        "auc_logistic",
        "auc_hinge",
        "auc_hinge_q:1.5",
        "pair_squared",
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    fn unit_bounds() -> LossBounds {
        LossBounds::new(1.0, 2.0, 1.0).unwrap()
    }

    fn holder(alpha: f64, l: f64, m: f64) -> Certificate {
        Certificate { g: 1.0, smoothness: SmoothnessClass::holder(alpha, l).unwrap(), m }
    }

    #[test]
    fn logistic_at_origin() {
        let loss = builtin_pointwise("logistic", &unit_bounds()).unwrap();
        let z = Example { x: v(&[0.6, -0.8]), y: -1.0 };
        let w = Vector::zeros(2);
        assert!((loss.value(&w, &z) - std::f64::consts::LN_2).abs() < 1e-15);
        let g = loss.gradient(&w, &z);
        assert!((g[0] - 0.3).abs() < 1e-15 && (g[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn hinge_flat_beyond_margin() {
        let loss = builtin_pointwise("hinge", &unit_bounds()).unwrap();
        let z = Example { x: v(&[1.0, 0.0]), y: 1.0 };
        for w in [v(&[1.0, 0.3]), v(&[2.5, -1.0])] {
            assert_eq!(loss.value(&w, &z), 0.0);
            assert_eq!(loss.gradient(&w, &z), Vector::zeros(2));
        }
    }

    #[test]
    fn least_squares_interpolation_point() {
        let loss = builtin_pointwise("least_squares", &unit_bounds()).unwrap();
        let z = Example { x: v(&[1.0, 0.0]), y: 1.0 };
        let w = v(&[1.0, 0.0]);
        assert_eq!(loss.value(&w, &z), 0.0);
        assert_eq!(loss.gradient(&w, &z), Vector::zeros(2));
        assert!(check_self_bounding(&loss, &w, &z));
    }

    #[test]
    fn pairwise_examples() {
        let b = unit_bounds();
        let auc = builtin_pairwise("auc_hinge", &b).unwrap();
        let z1 = Example { x: v(&[0.2, 0.1]), y: 1.0 };
        let z2 = Example { x: v(&[-0.5, 0.4]), y: 1.0 };
        let w = v(&[0.3, -0.7]);
        assert_eq!(auc.value(&w, &z1, &z2), 0.0);
        assert_eq!(auc.gradient(&w, &z1, &z2), Vector::zeros(2));

        let sq = builtin_pairwise("pair_squared", &b).unwrap();
        let ws = v(&[0.5, -0.25]);
        let za = Example { x: v(&[0.2, 0.1]), y: ws.dot(&v(&[0.2, 0.1])) };
        let zb = Example { x: v(&[-0.5, 0.4]), y: ws.dot(&v(&[-0.5, 0.4])) };
        assert!(sq.value(&ws, &za, &zb).abs() < 1e-30);

        let lg = builtin_pairwise("auc_logistic", &b).unwrap();
        let zp = Example { x: v(&[0.2, 0.1]), y: 1.0 };
        let zn = Example { x: v(&[0.4, 0.4]), y: -1.0 };
        assert!((lg.value(&Vector::zeros(2), &zp, &zn) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn registry_errors() {
        let b = unit_bounds();
        assert_eq!(builtin_pointwise("huber", &b), Err(LossError::UnknownLoss("huber".into())));
        assert_eq!(builtin_pointwise("hinge_q:2.5", &b), Err(LossError::ExponentOutOfRange(2.5)));
        assert_eq!(builtin_pointwise("qnorm:0.5", &b), Err(LossError::ExponentOutOfRange(0.5)));
        assert!(builtin_pairwise("logistic", &b).is_err());
        let open = LossBounds::new(1.0, f64::INFINITY, 1.0).unwrap();
        assert!(matches!(builtin_pointwise("least_squares", &open), Err(LossError::UncertifiableRadius(_))));
        assert!(builtin_pointwise("logistic", &open).is_ok());
        assert!(matches!(Loss::by_name("pair_squared", &b), Ok(Loss::Pairwise(_))));
    }

    #[test]
    fn certified_constants() {
        let b = LossBounds::new(2.0, 3.0, 1.0).unwrap();
        let lg = builtin_pointwise("logistic", &b).unwrap();
        assert_eq!(lg.certificate().g, 2.0);
        assert_eq!(lg.certificate().smoothness, SmoothnessClass::Smooth { l: 1.0 });
        let ls = builtin_pointwise("least_squares", &b).unwrap();
        assert_eq!(ls.certificate().g, 2.0 * 2.0 * (6.0 + 1.0));
        assert_eq!(ls.certificate().smoothness.l(), 8.0);
        let h = builtin_pointwise("hinge_q:1.5", &b).unwrap();
        assert_eq!(h.certificate().smoothness.alpha(), 0.5);
        let al = builtin_pairwise("auc_logistic", &b).unwrap();
        assert_eq!(al.certificate().g, 4.0);
        assert_eq!(al.certificate().smoothness.l(), 4.0);
    }

    #[test]
    fn c_alpha_1_values() {
        assert_eq!(c_alpha_1(&holder(0.0, 2.0, 1.0)), 3.0);
        assert!((c_alpha_1(&holder(0.5, 1.0, 1.0)) - 3f64.powf(1.0 / 3.0)).abs() < 1e-15);
        assert!((c_alpha_1(&holder(0.5, 1.0, 1.0)) - 1.44225).abs() < 1e-5);
        let smooth = Certificate { g: 1.0, smoothness: SmoothnessClass::smooth(2.0).unwrap(), m: 0.0 };
        assert_eq!(c_alpha_1(&smooth), 2.0);
    }

    #[test]
    fn c_alpha_2_values() {
        assert_eq!(c_alpha_2(&holder(0.0, 2.0, 1.0)).unwrap(), 9.0);
        assert!((c_alpha_2(&holder(0.5, 1.0, 1.0)).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        let smooth = Certificate { g: 1.0, smoothness: SmoothnessClass::smooth(2.0).unwrap(), m: 0.0 };
        assert_eq!(c_alpha_2(&smooth), Err(LossError::CAlpha2Smooth));
        // continuity scan: log c2 moves by a small amount per 1e-3 step in alpha
        let mut prev = c_alpha_2(&holder(0.001, 1.5, 1.0)).unwrap().ln();
        for k in 2..=800 {
            let cur = c_alpha_2(&holder(k as f64 / 1000.0, 1.5, 1.0)).unwrap().ln();
            assert!(cur.is_finite());
            assert!((cur - prev).abs() < 0.2, "jump at alpha={}", k as f64 / 1000.0);
            prev = cur;
        }
    }

    #[test]
    fn c_alpha_3_values() {
        assert_eq!(c_alpha_3(&holder(0.0, 2.0, 1.0)).unwrap(), 2.0);
        let c = c_alpha_3(&holder(0.5, 1.0, 1.0)).unwrap();
        assert!((c - (1.0f64 / 3.0).sqrt() * 0.5).abs() < 1e-15);
        assert!((c - 0.28868).abs() < 1e-5);
        assert!(c_alpha_3(&holder(0.5, 1e-300, 1.0)).unwrap() < 1e-300);
        let smooth = Certificate { g: 1.0, smoothness: SmoothnessClass::smooth(2.0).unwrap(), m: 0.0 };
        assert_eq!(c_alpha_3(&smooth), Err(LossError::CAlpha3Smooth));
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        assert!((softplus(499.0) - 499.0).abs() < 1e-12);
    }

    #[test]
    fn smoothness_validation() {
        assert_eq!(SmoothnessClass::holder(1.0, 1.0), Err(LossError::AlphaOutOfRange(1.0)));
        assert_eq!(SmoothnessClass::smooth(0.0), Err(LossError::InvalidSmoothness(0.0)));
    }

    #[test]
    fn probes_pass_and_halved_l_fails() {
        let b = LossBounds::new(1.0, 2.0, 1.0).unwrap();
        let mut halved_violations = 0;
        for name in builtin_names() {
            let loss = Loss::by_name(name, &b).unwrap();
            let r = probe_self_bounding(&loss, &b, 4, 2000, 1);
            assert_eq!(r.violations, 0, "{name}: {r:?}");
            halved_violations += probe_self_bounding(&loss.with_scaled_l(0.5), &b, 4, 2000, 1).violations;
        }
        assert!(halved_violations > 0);
    }
}
