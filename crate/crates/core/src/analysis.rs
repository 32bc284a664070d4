//! Closed-form stability and optimization bounds, and the Monte-Carlo
//! estimators they are confronted with.
//!
//! All bounds assume a constant step size `η`, so sums like `Σ_{j≤t} η_j²`
//! collapse to `t η²`. `e` is Euler's number.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{c_alpha_1, c_alpha_2, c_alpha_3, c_alpha_3_pairwise, Certificate, Example};
use crate::numerics::{derive_seed, dist_sq, mean_and_stderr, streams, RngState, Vector};
use crate::problems::Problem;
use crate::sgd::{Recording, Schedule, SgdConfig, SgdError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("bound needs {needed} per-iterate risks, got {got}")]
    MissingRisks { needed: u64, got: usize },
    #[error("Hölder bound needs c_alpha_2 / c_alpha_3, which are undefined for smooth losses")]
    SmoothConstants,
    #[error("rate fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("rate fit needs positive values; point {index} has n = {n}, risk = {risk} (try more Monte-Carlo runs)")]
    NonPositive { index: usize, n: f64, risk: f64 },
    #[error("rate fit needs at least two distinct n values")]
    DegenerateAbscissa,
    #[error("at least {min} Monte-Carlo runs are required, got {got}")]
    TooFewRuns { min: usize, got: usize },
    #[error("replacement index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("n = {n} is too small for {requested} distinct replacement indices")]
    TooManyIndices { n: usize, requested: usize },
    #[error(transparent)]
    Sgd(#[from] SgdError),
}

/// Every symbol the bounds need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub t: u64,
    pub d: usize,
    pub eta: f64,
    pub sigma2: f64,
    pub l: f64,
    pub g: f64,
    /// 1 for smooth losses.
    pub alpha: f64,
    pub c1: f64,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    /// Pairwise `c_{α,3}` (with `√e`).
    pub c3_pair: Option<f64>,
    pub w_star_norm: f64,
    /// `E[F_S(w_j)]` for `j = 1, 2, …`.
    pub risks: Vec<f64>,
    /// `E[F_S(w_j)^{2α/(1+α)}]`; when absent the Hölder bounds use
    /// `(E[F_S(w_j)])^{2α/(1+α)}`, which is no smaller by Jensen.
    pub powered_risks: Option<Vec<f64>>,
    /// `F_S(w*)`.
    pub f_star_empirical: f64,
}

impl BoundInputs {
    /// Constants taken from a loss certificate; risks left empty.
    pub fn from_certificate(
        cert: &Certificate,
        n: usize,
        t: u64,
        d: usize,
        eta: f64,
        sigma2: f64,
        w_star_norm: f64,
    ) -> Self {
        BoundInputs {
            n,
            t,
            d,
            eta,
            sigma2,
            l: cert.smoothness.l(),
            g: cert.g,
            alpha: cert.smoothness.alpha(),
            c1: c_alpha_1(cert),
            c2: c_alpha_2(cert).ok(),
            c3: c_alpha_3(cert).ok(),
            c3_pair: c_alpha_3_pairwise(cert).ok(),
            w_star_norm,
            risks: Vec::new(),
            powered_risks: None,
            f_star_empirical: 0.0,
        }
    }

    pub fn with_risks(mut self, risks: Vec<f64>) -> Self {
        self.risks = risks;
        self
    }

    pub fn with_powered_risks(mut self, powered: Vec<f64>) -> Self {
        self.powered_risks = Some(powered);
        self
    }

    pub fn with_f_star(mut self, f: f64) -> Self {
        self.f_star_empirical = f;
        self
    }

    fn holder_exponent(&self) -> f64 {
        2.0 * self.alpha / (1.0 + self.alpha)
    }

    fn risk_sum(&self, t: u64) -> Result<f64, AnalysisError> {
        let r = self.risks.get(..t as usize).ok_or(AnalysisError::MissingRisks { needed: t, got: self.risks.len() })?;
        Ok(r.iter().sum())
    }

    fn powered_sum(&self, t: u64) -> Result<f64, AnalysisError> {
        let p = self.holder_exponent();
        match &self.powered_risks {
            Some(v) => {
                let r = v.get(..t as usize).ok_or(AnalysisError::MissingRisks { needed: t, got: v.len() })?;
                Ok(r.iter().sum())
            }
            None => {
                let r = self
                    .risks
                    .get(..t as usize)
                    .ok_or(AnalysisError::MissingRisks { needed: t, got: self.risks.len() })?;
                Ok(r.iter().map(|f| f.max(0.0).powf(p)).sum())
            }
        }
    }
}

/// Pointwise smooth: `8e(1 + t/n)L/n · Σ_{j≤t} η² E[F_S(w_j)]`.
pub fn stability_bound_smooth(inputs: &BoundInputs, t: u64) -> Result<f64, AnalysisError> {
    let n = inputs.n as f64;
    Ok(8.0 * E * (1.0 + t as f64 / n) * inputs.l / n * inputs.eta.powi(2) * inputs.risk_sum(t)?)
}

/// Pointwise Hölder: `c_{α,3}² e Σ η^{2/(1−α)} + 4e c_{α,1}² (1 + t/n)/n · Σ η² E[F_S^{2α/(1+α)}(w_j)]`.
pub fn stability_bound_holder(inputs: &BoundInputs, t: u64) -> Result<f64, AnalysisError> {
    let c3 = inputs.c3.ok_or(AnalysisError::SmoothConstants)?;
    let n = inputs.n as f64;
    let floor = c3 * c3 * E * t as f64 * inputs.eta.powf(2.0 / (1.0 - inputs.alpha));
    let main = 4.0 * E * inputs.c1.powi(2) * (1.0 + t as f64 / n) / n * inputs.eta.powi(2) * inputs.powered_sum(t)?;
    Ok(floor + main)
}

/// Pairwise smooth: `16L(1 + 2t/n)e/n · Σ η² E[F̄_S(w_j)]`.
pub fn stability_bound_pairwise_smooth(inputs: &BoundInputs, t: u64) -> Result<f64, AnalysisError> {
    let n = inputs.n as f64;
    Ok(16.0 * inputs.l * (1.0 + 2.0 * t as f64 / n) * E / n * inputs.eta.powi(2) * inputs.risk_sum(t)?)
}

/// Pairwise Hölder: `8e c_{α,1}² (1 + 2t/n)/n · Σ η² E[F̄_S^{2α/(1+α)}] + c'_{α,3}² e Σ η^{2/(1−α)}`
/// with the pairwise `c'_{α,3}`.
pub fn stability_bound_pairwise_holder(inputs: &BoundInputs, t: u64) -> Result<f64, AnalysisError> {
    let c3 = inputs.c3_pair.ok_or(AnalysisError::SmoothConstants)?;
    let n = inputs.n as f64;
    let main = 8.0 * E * inputs.c1.powi(2) * (1.0 + 2.0 * t as f64 / n) / n * inputs.eta.powi(2) * inputs.powered_sum(t)?;
    let floor = c3 * c3 * E * t as f64 * inputs.eta.powf(2.0 / (1.0 - inputs.alpha));
    Ok(main + floor)
}

/// Upper bound on `Σ_{j≤t} η E[F_S(w_j) − F_S(w*)]` (pointwise or pairwise).
///
/// Smooth: `(1/2 + 3Lη)‖w*‖² + 3L Σ(3η³σ²d + 2η²F_S(w*)) + Σ 3η²σ²d`.
///
/// Hölder: `½‖w*‖² + ¾ c_{α,1}² (Σ η²)^{(1−α)/(1+α)} [2η‖w*‖² + Σ(6η³σ²d + 4η²F_S(w*) + 3c_{α,2} η^{(3−α)/(1−α)})]^{2α/(1+α)} + Σ 3η²σ²d`.
pub fn optimization_bound(inputs: &BoundInputs, t: u64, smooth: bool) -> Result<f64, AnalysisError> {
    let tf = t as f64;
    let eta = inputs.eta;
    let noise = inputs.sigma2 * inputs.d as f64;
    let w2 = inputs.w_star_norm.powi(2);
    let fs = inputs.f_star_empirical;
    let tail = 3.0 * tf * eta * eta * noise;
    if smooth {
        let l = inputs.l;
        return Ok((0.5 + 3.0 * l * eta) * w2 + 3.0 * l * tf * (3.0 * eta.powi(3) * noise + 2.0 * eta * eta * fs) + tail);
    }
    let c2 = inputs.c2.ok_or(AnalysisError::SmoothConstants)?;
    let a = inputs.alpha;
    let inner = 2.0 * eta * w2
        + tf * (6.0 * eta.powi(3) * noise + 4.0 * eta * eta * fs + 3.0 * c2 * eta.powf((3.0 - a) / (1.0 - a)));
    Ok(0.5 * w2
        + 0.75 * inputs.c1.powi(2) * (tf * eta * eta).powf((1.0 - a) / (1.0 + a)) * inner.powf(2.0 * a / (1.0 + a))
        + tail)
}

/// Which stability bound applies to a loss.
pub fn stability_bound_for(inputs: &BoundInputs, t: u64, pairwise: bool) -> Result<f64, AnalysisError> {
    let smooth = inputs.c3.is_none();
    match (pairwise, smooth) {
        (false, true) => stability_bound_smooth(inputs, t),
        (false, false) => stability_bound_holder(inputs, t),
        (true, true) => stability_bound_pairwise_smooth(inputs, t),
        (true, false) => stability_bound_pairwise_holder(inputs, t),
    }
}

/// How one Monte-Carlo training run is set up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub n: usize,
    pub schedule: Schedule,
    pub sigma2: f64,
    pub seed: u64,
}

/// Stability estimator options.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityOptions {
    pub mc_runs: usize,
    /// Fixed replacement positions; `None` draws `random_indices` distinct
    /// positions per run.
    pub replacement_indices: Option<Vec<usize>>,
    pub random_indices: usize,
    /// Also measure at these steps `t` (the final step `T` is always measured).
    pub extra_steps: Vec<u64>,
    /// Use `z_i' = z_i`: a control whose estimate must be exactly zero.
    pub identical_replacement: bool,
    /// Average `F_S(w_j)` over runs for every `j`, for the bounds.
    pub collect_risks: bool,
}

impl StabilityOptions {
    pub fn new(mc_runs: usize) -> Self {
        StabilityOptions {
            mc_runs,
            replacement_indices: None,
            random_indices: 8,
            extra_steps: Vec::new(),
            identical_replacement: false,
            collect_risks: false,
        }
    }
}

/// `(1/|I|) Σ_{i∈I} ‖w_{t+1} − w_{t+1}^{(i)}‖²` averaged over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    pub t: u64,
    pub value: f64,
    pub mc_runs: usize,
    pub std_err: f64,
    /// `(t, value, std_err)` at the extra steps.
    pub at_steps: Vec<(u64, f64, f64)>,
    /// Mean `F_S(w_j)`, `j = 1..T`, when collected.
    pub mean_risks: Option<Vec<f64>>,
    /// Mean `F_S(w_j)^{2α/(1+α)}` when collected (Hölder losses only).
    pub mean_powered_risks: Option<Vec<f64>>,
}

/// Minimum Monte-Carlo runs accepted by the estimators.
pub const MIN_MC_RUNS: usize = 10;

fn distinct_indices(n: usize, k: usize, rng: &mut crate::numerics::RngStream) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + (rng.uniform() * (n - i) as f64) as usize;
        pool.swap(i, j.min(n - 1));
    }
    pool.truncate(k);
    pool
}

/// Paired-trajectory estimate of on-average argument stability. Both
/// trajectories of a pair share the index stream and the noise stream.
pub fn estimate_stability(
    problem: &Problem,
    setup: &TrainSetup,
    opts: &StabilityOptions,
) -> Result<StabilityEstimate, AnalysisError> {
    if opts.mc_runs < MIN_MC_RUNS {
        return Err(AnalysisError::TooFewRuns { min: MIN_MC_RUNS, got: opts.mc_runs });
    }
    let n = setup.n;
    if let Some(idx) = &opts.replacement_indices {
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(AnalysisError::IndexOutOfRange { index: bad, n });
        }
    } else if opts.random_indices > n || opts.random_indices == 0 {
        return Err(AnalysisError::TooManyIndices { n, requested: opts.random_indices });
    }
    let total = setup.schedule.t;
    let mut steps: Vec<u64> = opts.extra_steps.iter().copied().filter(|&s| s >= 1 && s < total).collect();
    steps.push(total);
    steps.sort_unstable();
    steps.dedup();
    let alpha = problem.loss().certificate().smoothness.alpha();
    let powered = opts.collect_risks && alpha < 1.0;
    let p = 2.0 * alpha / (1.0 + alpha);

    let mut per_step: Vec<Vec<f64>> = vec![Vec::with_capacity(opts.mc_runs); steps.len()];
    let mut risk_sums = opts.collect_risks.then(|| vec![0.0; total as usize]);
    let mut powered_sums = powered.then(|| vec![0.0; total as usize]);

    for run in 0..opts.mc_runs as u64 {
        let data = problem.sample(n, derive_seed(setup.seed, &[run, 1]));
        let mut rng = RngState::new(derive_seed(setup.seed, &[run, 2]), streams::REPLACEMENT).start();
        let positions = match &opts.replacement_indices {
            Some(v) => v.clone(),
            None => distinct_indices(n, opts.random_indices, &mut rng),
        };
        let record = if opts.collect_risks { Recording::Every(1) } else { Recording::Off };
        let config = SgdConfig::new(problem.radius(), setup.schedule, setup.sigma2, derive_seed(setup.seed, &[run, 3]))
            .with_record(record)
            .with_checkpoints(steps.clone());
        let base = problem.train(&config, &data)?;
        if let Some(sums) = risk_sums.as_mut() {
            for s in &base.iterate_risks {
                sums[(s.t - 1) as usize] += s.risk;
            }
        }
        if let Some(sums) = powered_sums.as_mut() {
            for s in &base.iterate_risks {
                sums[(s.t - 1) as usize] += s.risk.max(0.0).powf(p);
            }
        }
        let quiet = config.clone().with_record(Recording::Off);
        let mut acc = vec![0.0; steps.len()];
        for &i in &positions {
            let mut other: Vec<Example> = data.clone();
            if !opts.identical_replacement {
                other[i] = problem.sample_one(&mut rng);
            }
            let rep = problem.train(&quiet, &other)?;
            for (k, (a, b)) in base.checkpoints.iter().zip(&rep.checkpoints).enumerate() {
                acc[k] += dist_sq(a.w.as_slice(), b.w.as_slice());
            }
        }
        for (k, v) in acc.iter().enumerate() {
            per_step[k].push(v / positions.len() as f64);
        }
    }

    let runs = opts.mc_runs as f64;
    let summaries: Vec<(u64, f64, f64)> = steps
        .iter()
        .zip(&per_step)
        .map(|(&s, vals)| {
            let (m, se) = mean_and_stderr(vals);
            (s, m, se)
        })
        .collect();
    let (_, value, std_err) = *summaries.last().unwrap_or(&(total, f64::NAN, f64::NAN));
    Ok(StabilityEstimate {
        t: total,
        value,
        mc_runs: opts.mc_runs,
        std_err,
        at_steps: summaries[..summaries.len() - 1].to_vec(),
        mean_risks: risk_sums.map(|v| v.into_iter().map(|s| s / runs).collect()),
        mean_powered_risks: powered_sums.map(|v| v.into_iter().map(|s| s / runs).collect()),
    })
}

/// Mean and standard error of `F(w_priv) − F_S(w_priv)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub mc_runs: usize,
}

/// Generalization gap of the private learner over `mc_runs` fresh datasets.
pub fn estimate_generalization_gap(
    problem: &Problem,
    setup: &TrainSetup,
    mc_runs: usize,
) -> Result<GapEstimate, AnalysisError> {
    if mc_runs < MIN_MC_RUNS {
        return Err(AnalysisError::TooFewRuns { min: MIN_MC_RUNS, got: mc_runs });
    }
    let mut gaps = Vec::with_capacity(mc_runs);
    for run in 0..mc_runs as u64 {
        let data = problem.sample(setup.n, derive_seed(setup.seed, &[run, 1]));
        let config = SgdConfig::new(problem.radius(), setup.schedule, setup.sigma2, derive_seed(setup.seed, &[run, 3]))
            .with_record(Recording::Off);
        let report = problem.train(&config, &data)?;
        let emp = problem.empirical_risk(&report.w_priv, &data)?;
        gaps.push(problem.population_risk(&report.w_priv) - emp);
    }
    let (mean, std_err) = mean_and_stderr(&gaps);
    Ok(GapEstimate { mean, std_err, mc_runs })
}

/// Gap at a fixed, data-independent `w`.
pub fn generalization_gap_at(
    problem: &Problem,
    w: &Vector,
    n: usize,
    mc_runs: usize,
    seed: u64,
) -> Result<GapEstimate, AnalysisError> {
    if mc_runs < MIN_MC_RUNS {
        return Err(AnalysisError::TooFewRuns { min: MIN_MC_RUNS, got: mc_runs });
    }
    let pop = problem.population_risk(w);
    let mut gaps = Vec::with_capacity(mc_runs);
    for run in 0..mc_runs as u64 {
        let data = problem.sample(n, derive_seed(seed, &[run, 1]));
        gaps.push(pop - problem.empirical_risk(w, &data)?);
    }
    let (mean, std_err) = mean_and_stderr(&gaps);
    Ok(GapEstimate { mean, std_err, mc_runs })
}

/// Monte-Carlo view of the optimization error of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationMeasurement {
    pub t: u64,
    pub mc_runs: usize,
    /// Mean `F_S(w_j)`, `j = 1..T`.
    pub mean_risks: Vec<f64>,
    /// Mean `F_S(w_j)^{2α/(1+α)}` (Hölder losses only).
    pub mean_powered_risks: Option<Vec<f64>>,
    /// Mean `F_S(w*)`.
    pub f_star_empirical: f64,
    /// `(t, mean, std_err)` of `Σ_{j≤t} η (F_S(w_j) − F_S(w*))` at each requested `t`.
    pub opt_sums: Vec<(u64, f64, f64)>,
}

/// Runs `mc_runs` fresh trainings (seeds as in [`estimate_stability`]) and
/// records every iterate's empirical risk.
pub fn measure_optimization(
    problem: &Problem,
    setup: &TrainSetup,
    mc_runs: usize,
    steps: &[u64],
) -> Result<OptimizationMeasurement, AnalysisError> {
    if mc_runs < MIN_MC_RUNS {
        return Err(AnalysisError::TooFewRuns { min: MIN_MC_RUNS, got: mc_runs });
    }
    let total = setup.schedule.t;
    let eta = setup.schedule.eta;
    let mut steps: Vec<u64> = steps.iter().copied().filter(|&s| s >= 1 && s <= total).collect();
    steps.push(total);
    steps.sort_unstable();
    steps.dedup();
    let alpha = problem.loss().certificate().smoothness.alpha();
    let p = 2.0 * alpha / (1.0 + alpha);
    let mut risks = vec![0.0; total as usize];
    let mut powered = (alpha < 1.0).then(|| vec![0.0; total as usize]);
    let mut f_star = Vec::with_capacity(mc_runs);
    let mut sums: Vec<Vec<f64>> = vec![Vec::with_capacity(mc_runs); steps.len()];
    for run in 0..mc_runs as u64 {
        let data = problem.sample(setup.n, derive_seed(setup.seed, &[run, 1]));
        let config = SgdConfig::new(problem.radius(), setup.schedule, setup.sigma2, derive_seed(setup.seed, &[run, 3]))
            .with_record(Recording::Every(1));
        let report = problem.train(&config, &data)?;
        let fs = problem.empirical_risk(problem.w_star(), &data)?;
        f_star.push(fs);
        let mut acc = 0.0;
        let mut k = 0;
        for s in &report.iterate_risks {
            let j = (s.t - 1) as usize;
            risks[j] += s.risk;
            if let Some(v) = powered.as_mut() {
                v[j] += s.risk.max(0.0).powf(p);
            }
            acc += eta * (s.risk - fs);
            if k < steps.len() && s.t == steps[k] {
                sums[k].push(acc);
                k += 1;
            }
        }
    }
    let runs = mc_runs as f64;
    Ok(OptimizationMeasurement {
        t: total,
        mc_runs,
        mean_risks: risks.into_iter().map(|r| r / runs).collect(),
        mean_powered_risks: powered.map(|v| v.into_iter().map(|r| r / runs).collect()),
        f_star_empirical: f_star.iter().sum::<f64>() / runs,
        opt_sums: steps
            .iter()
            .zip(&sums)
            .map(|(&t, v)| {
                let (m, se) = mean_and_stderr(v);
                (t, m, se)
            })
            .collect(),
    })
}

/// Bound inputs for `problem` under `setup`, with the measured risks.
pub fn bound_inputs(problem: &Problem, setup: &TrainSetup, m: &OptimizationMeasurement) -> BoundInputs {
    let mut inputs = BoundInputs::from_certificate(
        problem.loss().certificate(),
        setup.n,
        setup.schedule.t,
        problem.dim(),
        setup.schedule.eta,
        setup.sigma2,
        problem.w_star().norm(),
    )
    .with_risks(m.mean_risks.clone())
    .with_f_star(m.f_star_empirical);
    if let Some(p) = &m.mean_powered_risks {
        inputs = inputs.with_powered_risks(p.clone());
    }
    inputs
}

/// Least-squares line through `(ln n, ln risk)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit, AnalysisError> {
    if points.len() < 4 {
        return Err(AnalysisError::TooFewPoints(points.len()));
    }
    for (index, &(n, risk)) in points.iter().enumerate() {
        if !(n > 0.0 && risk > 0.0 && n.is_finite() && risk.is_finite()) {
            return Err(AnalysisError::NonPositive { index, n, risk });
        }
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(n, r)| (n.ln(), r.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(AnalysisError::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(RateFit { slope, intercept, r2, points: logs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::SmoothnessClass;

    fn smooth_inputs(n: usize, t: u64, l: f64, eta: f64, risk: f64) -> BoundInputs {
        let cert = Certificate { g: 1.0, smoothness: SmoothnessClass::smooth(l).unwrap(), m: 0.0 };
        BoundInputs::from_certificate(&cert, n, t, 1, eta, 0.0, 0.0).with_risks(vec![risk; t as usize])
    }

    #[test]
    fn smooth_stability_example() {
        let b = stability_bound_smooth(&smooth_inputs(100, 100, 1.0, 0.01, 0.5), 100).unwrap();
        assert!((b - 8.0 * E * 1e-4).abs() < 1e-15);
        assert!((b - 0.0021746).abs() < 1e-7);
        assert_eq!(stability_bound_smooth(&smooth_inputs(100, 100, 1.0, 0.01, 0.0), 100).unwrap(), 0.0);
        let b2 = stability_bound_smooth(&smooth_inputs(100, 100, 1.0, 0.02, 0.5), 100).unwrap();
        assert!((b2 / b - 4.0).abs() < 1e-12);
        assert!(matches!(
            stability_bound_smooth(&smooth_inputs(100, 10, 1.0, 0.01, 0.5), 100),
            Err(AnalysisError::MissingRisks { .. })
        ));
    }

    #[test]
    fn pairwise_smooth_is_twice_pointwise_when_t_terms_vanish() {
        let i = smooth_inputs(1_000_000_000, 1, 1.0, 0.1, 0.3);
        let a = stability_bound_smooth(&i, 1).unwrap();
        let b = stability_bound_pairwise_smooth(&i, 1).unwrap();
        assert!((b / a - 2.0).abs() < 1e-8);
    }

    #[test]
    fn holder_floor() {
        let cert = Certificate { g: 1.0, smoothness: SmoothnessClass::holder(0.5, 1.0).unwrap(), m: 1.0 };
        let inp = BoundInputs::from_certificate(&cert, 100, 100, 1, 0.01, 0.0, 0.0).with_risks(vec![0.0; 100]);
        let c3 = c_alpha_3(&cert).unwrap();
        let b = stability_bound_holder(&inp, 100).unwrap();
        assert!((b - c3 * c3 * E * 100.0 * 0.01f64.powi(4)).abs() < 1e-18);
        let cert0 = Certificate { g: 1.0, smoothness: SmoothnessClass::holder(0.0, 2.0).unwrap(), m: 1.0 };
        let inp0 = BoundInputs::from_certificate(&cert0, 100, 10, 1, 0.1, 0.0, 0.0).with_risks(vec![0.0; 10]);
        let c30 = c_alpha_3(&cert0).unwrap();
        let b0 = stability_bound_holder(&inp0, 10).unwrap();
        let c10 = c_alpha_1(&cert0);
        let main = 4.0 * E * c10 * c10 * 1.1 / 100.0 * 0.01 * 10.0;
        assert!((b0 - c30 * c30 * E * 10.0 * 0.01 - main).abs() < 1e-13);
    }

    #[test]
    fn optimization_examples() {
        let cert = Certificate { g: 1.0, smoothness: SmoothnessClass::smooth(1.0).unwrap(), m: 0.0 };
        let inp = BoundInputs::from_certificate(&cert, 100, 100, 1, 0.01, 1.0, 1.0).with_f_star(0.1);
        let b = optimization_bound(&inp, 100, true).unwrap();
        assert!((b - (0.53 + 3.0 * (3e-4 + 2e-3) + 0.03)).abs() < 1e-12);
        assert!((b - 0.5669).abs() < 1e-12);
        let quiet = BoundInputs::from_certificate(&cert, 100, 100, 1, 0.01, 0.0, 2.0);
        let b0 = optimization_bound(&quiet, 100, true).unwrap();
        assert!((b0 - (0.5 + 0.03) * 4.0).abs() < 1e-12);
        assert!(optimization_bound(&quiet, 100, false).is_err());
    }

    #[test]
    fn fit_planted_slopes() {
        let ns = [128.0, 256.0, 512.0, 1024.0, 2048.0];
        let f = fit_rate(&ns.map(|n: f64| (n, 4.0 / n.sqrt()))).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let f = fit_rate(&ns.map(|n: f64| (n, 3.0 / n))).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        let f = fit_rate(&ns.map(|n: f64| (n, 1.0 / n.sqrt() + 0.001))).unwrap();
        assert!(f.slope > -0.5 && f.slope < 0.0);
        assert!(matches!(fit_rate(&[(1.0, 1.0); 3]), Err(AnalysisError::TooFewPoints(3))));
        assert!(matches!(
            fit_rate(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)]),
            Err(AnalysisError::NonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn identical_replacement_is_exactly_zero() {
        let problem = crate::problems::realizable_least_squares(3, 1.0, 2.0, 5).unwrap();
        let setup = TrainSetup { n: 20, schedule: Schedule::fixed(0.1, 40).unwrap(), sigma2: 0.5, seed: 11 };
        let mut opts = StabilityOptions::new(10);
        opts.identical_replacement = true;
        opts.extra_steps = vec![10, 20];
        let est = estimate_stability(&problem, &setup, &opts).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(est.at_steps.iter().all(|s| s.1 == 0.0));
        opts.identical_replacement = false;
        opts.collect_risks = true;
        let est = estimate_stability(&problem, &setup, &opts).unwrap();
        assert!(est.value > 0.0 && est.at_steps.len() == 2);
        assert_eq!(est.mean_risks.as_ref().map(Vec::len), Some(40));
        assert!(est.mean_powered_risks.is_none());
        assert!(matches!(
            estimate_stability(&problem, &setup, &StabilityOptions::new(3)),
            Err(AnalysisError::TooFewRuns { .. })
        ));
    }

    #[test]
    fn gap_at_fixed_w_is_centered() {
        let problem = crate::problems::realizable_least_squares(3, 1.0, 2.0, 5).unwrap();
        let w = Vector::zeros(3);
        let g = generalization_gap_at(&problem, &w, 50, 400, 3).unwrap();
        assert!(g.mean.abs() < 3.0 * g.std_err + 1e-12, "{g:?}");
        let ws = problem.w_star().clone();
        let data = problem.sample(30, 9);
        let emp = problem.empirical_risk(&ws, &data).unwrap();
        assert_eq!(problem.population_risk(&ws), 0.0);
        assert!(emp >= 0.0);
    }

    #[test]
    fn measured_optimization_sits_under_the_bound() {
        let problem = crate::problems::realizable_least_squares(3, 1.0, 2.0, 5).unwrap();
        let setup = TrainSetup { n: 30, schedule: Schedule::fixed(0.2, 30).unwrap(), sigma2: 0.1, seed: 2 };
        let m = measure_optimization(&problem, &setup, 20, &[10]).unwrap();
        assert_eq!(m.mean_risks.len(), 30);
        assert_eq!(m.opt_sums.len(), 2);
        let inputs = bound_inputs(&problem, &setup, &m);
        for &(t, mean, _) in &m.opt_sums {
            assert!(mean <= optimization_bound(&inputs, t, true).unwrap());
        }
    }
}
