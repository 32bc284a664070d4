//! Rényi-DP accounting and noise calibration for the two DP-SGD engines.
//!
//! The per-step mechanism is a Gaussian perturbation of one sampled
//! gradient (pointwise) or one sampled pair gradient (pairwise). Its
//! ℓ₂-sensitivity is `2G`; uniform subsampling at rate `1/n` (or `2/n` for
//! pairs) gives the closed-form RDP bound `3.5 p² λ Δ² / σ²`, which is
//! composed over `T` steps and converted to `(ε, δ)`-DP.
//!
//! All logarithms are natural.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrivacyError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("delta must lie in (0,1), got {0}")]
    InvalidDelta(f64),
    #[error("Rényi order must exceed 1, got {0}")]
    InvalidOrder(f64),
    #[error("RDP parameter must be nonnegative, got {0}")]
    InvalidRho(f64),
    #[error("sampling rate must lie in (0,1], got {0}")]
    InvalidRate(f64),
    #[error("Lipschitz constant must be positive and finite, got {0}")]
    InvalidLipschitz(f64),
    #[error("noise variance must be positive, got {0}")]
    InvalidVariance(f64),
    #[error("subsampled Gaussian bound invalid: sigma^2 = {sigma2} < 0.67 * Delta^2 = {floor}")]
    VarianceBelowFloor { sigma2: f64, floor: f64 },
    #[error("subsampled Gaussian bound invalid: lambda - 1 = {lhs} exceeds {rhs}")]
    OrderTooLarge { lhs: f64, rhs: f64 },
    #[error("cannot compose RDP claims at different orders ({0} vs {1})")]
    MismatchedOrders(f64, f64),
    #[error("calibration is infeasible")]
    Infeasible,
    #[error("n must be greater than 18 for the beta-existence threshold, got {0}")]
    ThresholdDomain(usize),
    #[error("n and T must be positive")]
    EmptyRun,
}

/// `(ε, δ)` privacy target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpTarget {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpTarget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, PrivacyError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(PrivacyError::InvalidEpsilon(epsilon));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(PrivacyError::InvalidDelta(delta));
        }
        Ok(DpTarget { epsilon, delta })
    }
}

/// `(λ, ρ)`-RDP statement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpClaim {
    pub lambda: f64,
    pub rho: f64,
}

impl RdpClaim {
    pub fn new(lambda: f64, rho: f64) -> Result<Self, PrivacyError> {
        if !(lambda > 1.0) {
            return Err(PrivacyError::InvalidOrder(lambda));
        }
        if !(rho >= 0.0) {
            return Err(PrivacyError::InvalidRho(rho));
        }
        Ok(RdpClaim { lambda, rho })
    }
}

/// ℓ₂-sensitivity of a deterministic map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity(pub f64);

/// Sensitivity of one sampled (pair) gradient for a `G`-Lipschitz loss:
/// replacing the sampled example moves the gradient by at most `2G`.
pub fn gradient_sensitivity(g: f64) -> Result<Sensitivity, PrivacyError> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(PrivacyError::InvalidLipschitz(g));
    }
    Ok(Sensitivity(2.0 * g))
}

/// RDP of the Gaussian mechanism on a uniform subsample at rate `p`:
/// `ρ = 3.5 p² λ Δ² / σ²`, valid when `σ² ≥ 0.67 Δ²` and
/// `λ − 1 ≤ (2σ²/(3Δ²)) log(1 / (λ p (1 + σ²/Δ²)))`. Refuses outside
/// that region.
pub fn subsampled_rdp(p: f64, lambda: f64, delta2: Sensitivity, sigma2: f64) -> Result<RdpClaim, PrivacyError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(PrivacyError::InvalidRate(p));
    }
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(PrivacyError::InvalidOrder(lambda));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(PrivacyError::InvalidVariance(sigma2));
    }
    let d2 = delta2.0 * delta2.0;
    let floor = 0.67 * d2;
    if sigma2 < floor {
        return Err(PrivacyError::VarianceBelowFloor { sigma2, floor });
    }
    let arg = 1.0 / (lambda * p * (1.0 + sigma2 / d2));
    let rhs = 2.0 * sigma2 / (3.0 * d2) * arg.ln();
    let lhs = lambda - 1.0;
    if !(lhs <= rhs) {
        return Err(PrivacyError::OrderTooLarge { lhs, rhs });
    }
    RdpClaim::new(lambda, 3.5 * p * p * lambda * d2 / sigma2)
}

/// Adaptive composition at a common order: the ρ's add.
pub fn compose(claims: &[RdpClaim]) -> Result<RdpClaim, PrivacyError> {
    let Some(first) = claims.first() else {
        // order is irrelevant for a zero claim
        return Ok(RdpClaim { lambda: 2.0, rho: 0.0 });
    };
    let mut rho = 0.0;
    for c in claims {
        if c.lambda != first.lambda {
            return Err(PrivacyError::MismatchedOrders(first.lambda, c.lambda));
        }
        rho += c.rho;
    }
    RdpClaim::new(first.lambda, rho)
}

/// `steps` identical claims composed.
pub fn compose_repeated(claim: RdpClaim, steps: u64) -> RdpClaim {
    RdpClaim { lambda: claim.lambda, rho: claim.rho * steps as f64 }
}

/// `ε = ρ + log(1/δ)/(λ − 1)`.
pub fn rdp_to_dp(claim: RdpClaim, delta: f64) -> Result<f64, PrivacyError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PrivacyError::InvalidDelta(delta));
    }
    RdpClaim::new(claim.lambda, claim.rho)?;
    Ok(claim.rho + (1.0 / delta).ln() / (claim.lambda - 1.0))
}

/// Which engine a calibration is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Pointwise,
    Pairwise,
}

impl Which {
    /// Leading constant of the σ² formula.
    fn coefficient(self) -> f64 {
        match self {
            Which::Pointwise => 14.0,
            Which::Pairwise => 56.0,
        }
    }

    /// Per-step sampling rate: one example, or a pair touching two.
    pub fn sampling_rate(self, n: usize) -> f64 {
        match self {
            Which::Pointwise => 1.0 / n as f64,
            Which::Pairwise => (2.0 / n as f64).min(1.0),
        }
    }

    fn log_denominator(self) -> f64 {
        match self {
            Which::Pointwise => 1.0,
            Which::Pairwise => 2.0,
        }
    }
}

impl std::str::FromStr for Which {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pointwise" => Ok(Which::Pointwise),
            "pairwise" => Ok(Which::Pairwise),
            other => Err(format!("unknown engine '{other}' (expected pointwise or pairwise)")),
        }
    }
}

/// A candidate noise level for one `(n, T, G, ε, δ, β)` setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub beta: f64,
    pub sigma2: f64,
    pub lambda: f64,
    pub feasible: bool,
    pub which: Which,
    pub n: usize,
    pub t: u64,
    pub g: f64,
    pub target: DpTarget,
}

/// Rényi order `λ = log(1/δ)/((1−β)ε) + 1`.
pub fn renyi_order(target: &DpTarget, beta: f64) -> f64 {
    (1.0 / target.delta).ln() / ((1.0 - beta) * target.epsilon) + 1.0
}

fn calibrate(which: Which, n: usize, t: u64, g: f64, target: &DpTarget, beta: f64) -> Calibration {
    let lambda = renyi_order(target, beta);
    let nf = n as f64;
    let sigma2 = which.coefficient() * g * g * t as f64 / (beta * nf * nf * target.epsilon) * lambda;
    let feasible = beta > 0.0
        && beta < 1.0
        && g > 0.0
        && n >= 1
        && t >= 1
        && conditions_hold(which, n, g, sigma2, lambda);
    Calibration { beta, sigma2, lambda, feasible, which, n, t, g, target: *target }
}

/// `σ² ≥ 2.68 G²` and
/// `λ − 1 ≤ (σ²/(6G²)) log(n / (k λ (1 + σ²/(4G²)))`, k = 1 or 2.
/// A nonpositive log argument counts as infeasible.
pub fn conditions_hold(which: Which, n: usize, g: f64, sigma2: f64, lambda: f64) -> bool {
    if !(sigma2.is_finite() && lambda.is_finite() && lambda > 1.0) {
        return false;
    }
    let g2 = g * g;
    if sigma2 < 2.68 * g2 {
        return false;
    }
    let arg = n as f64 / (which.log_denominator() * lambda * (1.0 + sigma2 / (4.0 * g2)));
    if !(arg > 0.0) {
        return false;
    }
    lambda - 1.0 <= sigma2 / (6.0 * g2) * arg.ln()
}

/// Pointwise noise level `σ² = 14 G² T / (β n² ε) · λ`.
pub fn calibrate_pointwise(n: usize, t: u64, g: f64, target: &DpTarget, beta: f64) -> Calibration {
    calibrate(Which::Pointwise, n, t, g, target, beta)
}

/// Pairwise noise level `σ² = 56 G² T / (β n² ε) · λ`.
pub fn calibrate_pairwise(n: usize, t: u64, g: f64, target: &DpTarget, beta: f64) -> Calibration {
    calibrate(Which::Pairwise, n, t, g, target, beta)
}

pub fn calibrate_for(which: Which, n: usize, t: u64, g: f64, target: &DpTarget, beta: f64) -> Calibration {
    calibrate(which, n, t, g, target, beta)
}

/// The β scan: `0.001, 0.002, …, 0.999`.
pub fn beta_grid() -> impl Iterator<Item = f64> {
    (1..1000).map(|k| k as f64 / 1000.0)
}

/// Geometric continuation below the grid, `10^{-3 - k/1000}` down to 1e-12,
/// used only when the main grid has no feasible point.
fn beta_refinement() -> impl Iterator<Item = f64> {
    (1..=9000).map(|k| 10f64.powf(-3.0 - k as f64 / 1000.0))
}

/// Best feasible β (smallest σ²) on the deterministic scan, or an
/// infeasible calibration at β = 0.5 when none exists.
pub fn find_beta(n: usize, t: u64, g: f64, target: &DpTarget, which: Which) -> Calibration {
    let best = |betas: &mut dyn Iterator<Item = f64>| {
        betas
            .map(|b| calibrate(which, n, t, g, target, b))
            .filter(|c| c.feasible)
            .min_by(|a, b| a.sigma2.total_cmp(&b.sigma2))
    };
    best(&mut beta_grid())
        .or_else(|| best(&mut beta_refinement()))
        .unwrap_or_else(|| calibrate(which, n, t, g, target, 0.5))
}

/// Sufficient ε for some feasible β when `T = n`, `δ = 1/n²` (n > 18):
/// `(7(n^{1/3} − 1) + 4 log(n) n + 7) / (2n(n^{1/3} − 1))`.
pub fn min_epsilon_for_beta(n: usize) -> Result<f64, PrivacyError> {
    if n <= 18 {
        return Err(PrivacyError::ThresholdDomain(n));
    }
    let nf = n as f64;
    let c = nf.cbrt() - 1.0;
    Ok((7.0 * c + 4.0 * nf.ln() * nf + 7.0) / (2.0 * nf * c))
}

/// Smallest ε (to about 1e-6 relative) for which [`find_beta`] is feasible
/// at fixed `(n, T, G, δ)`, by bisection on `log ε` over `[1e-4, 1e4]`.
/// `None` when even ε = 1e4 is infeasible.
pub fn min_feasible_epsilon(n: usize, t: u64, g: f64, delta: f64, which: Which) -> Option<f64> {
    let ok = |eps: f64| DpTarget::new(eps, delta).map(|tg| find_beta(n, t, g, &tg, which).feasible).unwrap_or(false);
    let (mut lo, mut hi) = (1e-4f64.ln(), 1e4f64.ln());
    if !ok(hi.exp()) {
        return None;
    }
    if ok(lo.exp()) {
        return Some(lo.exp());
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if ok(mid.exp()) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi.exp())
}

/// Result of re-deriving the privacy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyAudit {
    pub per_step: RdpClaim,
    pub composed: RdpClaim,
    pub epsilon_achieved: f64,
    pub delta: f64,
}

/// Recomputes the per-step RDP through [`subsampled_rdp`], composes it
/// over `T` steps and converts to `(ε, δ)`. Errors when the calibration is
/// not feasible or the lemma's hypotheses fail.
pub fn verify_run_privacy(cal: &Calibration) -> Result<PrivacyAudit, PrivacyError> {
    if !cal.feasible {
        return Err(PrivacyError::Infeasible);
    }
    if cal.n == 0 || cal.t == 0 {
        return Err(PrivacyError::EmptyRun);
    }
    let sens = gradient_sensitivity(cal.g)?;
    let per_step = subsampled_rdp(cal.which.sampling_rate(cal.n), cal.lambda, sens, cal.sigma2)?;
    let composed = compose_repeated(per_step, cal.t);
    let epsilon_achieved = rdp_to_dp(composed, cal.target.delta)?;
    Ok(PrivacyAudit { per_step, composed, epsilon_achieved, delta: cal.target.delta })
}

/// Arithmetic slack allowed when comparing the achieved ε to the target.
pub const EPSILON_SLACK: f64 = 1e-12;

/// True when the audit meets the calibration's target up to [`EPSILON_SLACK`]
/// (relative to ε).
pub fn audit_meets_target(audit: &PrivacyAudit, target: &DpTarget) -> bool {
    audit.epsilon_achieved <= target.epsilon * (1.0 + EPSILON_SLACK)
}
