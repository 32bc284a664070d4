//! Strict TOML configuration for single-configuration commands, and the
//! shared strict parser also used for sweep specs.
//!
//! ```toml
//! n = 256
//! mc_runs = 50
//!
//! [problem]
//! name = "noisy_logistic"
//! d = 10
//!
//! [privacy]
//! epsilon = 2.0
//! delta = 1e-5
//!
//! [schedule]
//! regime = "smooth_general"
//! c = 1.0
//! ```

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{NoiseMode, SweepSpec};
use crate::problems::ProblemSpec;
use crate::sgd::Regime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub noise: NoiseMode,
}

/// Either a regime (with multiplier `c`) or a hand-picked `eta` and `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
    /// Declared Hölder exponent; checked against the loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl ScheduleSection {
    /// The regime in force: explicit, or `smooth_general` unless the
    /// schedule is hand-picked.
    pub fn effective_regime(&self) -> Option<Regime> {
        match (self.regime, self.eta, self.t) {
            (Some(r), _, _) => Some(r),
            (None, None, None) => Some(Regime::SmoothGeneral),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub n: usize,
    #[serde(default = "default_runs")]
    pub mc_runs: usize,
    pub problem: ProblemSpec,
    pub privacy: PrivacySection,
    #[serde(default)]
    pub schedule: ScheduleSection,
}

fn default_runs() -> usize {
    50
}

impl Config {
    pub fn new(problem: ProblemSpec, n: usize, epsilon: f64, delta: f64) -> Self {
        Config {
            n,
            mc_runs: default_runs(),
            problem,
            privacy: PrivacySection { epsilon, delta, noise: NoiseMode::Calibrated },
            schedule: ScheduleSection::default(),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = self.problem.violations().iter().map(|e| format!("problem: {e}")).collect();
        if self.n < 2 {
            out.push(format!("n must be at least 2, got {}", self.n));
        }
        if self.mc_runs == 0 {
            out.push("mc_runs must be positive".into());
        }
        let p = &self.privacy;
        if !(p.epsilon > 0.0 && p.epsilon.is_finite()) {
            out.push(format!("epsilon must be positive and finite, got {}", p.epsilon));
        }
        if !(p.delta > 0.0 && p.delta < 1.0) {
            out.push(format!("delta must lie in (0,1), got {}", p.delta));
        }
        let s = &self.schedule;
        match (s.eta, s.t) {
            (Some(_), None) | (None, Some(_)) => out.push("schedule: eta and T must be given together".into()),
            (Some(eta), Some(t)) => {
                if s.regime.is_some() || s.c.is_some() {
                    out.push("schedule: a hand-picked eta/T excludes regime and c".into());
                }
                if !(eta >= 0.0 && eta.is_finite()) {
                    out.push(format!("schedule: eta must be nonnegative, got {eta}"));
                }
                if t == 0 {
                    out.push("schedule: T must be positive".into());
                }
            }
            (None, None) => {}
        }
        if let Some(c) = s.c {
            if !(c > 0.0 && c.is_finite()) {
                out.push(format!("schedule: c must be positive, got {c}"));
            }
        }
        if let Some(a) = s.alpha {
            match s.effective_regime() {
                Some(r) if r.is_holder() && !(0.0..1.0).contains(&a) => {
                    out.push(format!("schedule: alpha must lie in [0,1) for Hölder-smooth losses, got {a}"))
                }
                Some(r) if !r.is_holder() && a != 1.0 => {
                    out.push(format!("schedule: alpha must be 1 for the smooth regime {r}, got {a}"))
                }
                None if !(0.0..=1.0).contains(&a) => out.push(format!("schedule: alpha must lie in [0,1], got {a}")),
                _ => {}
            }
        }
        out
    }

    /// Canonical TOML echo.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }
}

/// Deserializes `text`, rejecting unknown keys, with line and column on
/// syntax and type errors.
pub fn parse_strict<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = match e.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
                (line, column)
            }
            None => (0, 0),
        };
        ConfigError::Syntax { line, column, message: e.message().trim().to_string() }
    })
}

/// Parses and validates a run config, reporting every violated constraint.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let config: Config = parse_strict(text)?;
    let v = config.violations();
    if v.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(v))
    }
}

/// Parses and validates a sweep spec.
pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec, ConfigError> {
    let spec: SweepSpec = parse_strict(text)?;
    let v = spec.violations();
    if v.is_empty() {
        Ok(spec)
    } else {
        Err(ConfigError::Invalid(v))
    }
}
