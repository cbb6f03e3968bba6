//! Experiment orchestration: rate sweeps, the offset (bias) demonstration,
//! least-squares/LAD baselines, the randomised bound-check suite and their
//! CSV/JSON reports.
//!
//! Every work item draws its data from `derive_seed_path(master_seed, ..)`
//! keyed by its position in the experiment, and results are collected in
//! key order, so reports are bit-identical whatever the thread count.

mod config;

use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    apply_override, BiasDemoConfig, BoundSuiteConfig, Comparator, ExperimentConfig, SigmaPolicy, DEFAULT_CONFIG,
};

use crate::distributions::{generate_dataset, Dataset, NoiseSpec, RegressionModel, ScaleFn, TruthFn};
use crate::error::{invalid, Error, Result};
use crate::hypothesis::{make_space, Estimator, HypothesisSpace, SpaceConfig};
use crate::loss::{huber_deriv_raw, huber_raw, theory_threshold, ScaleParam};
use crate::seed::{derive_seed, derive_seed_path, rng_from_seed};
use crate::solver::{adaptive_sigma, fit_erm, fit_lad, fit_least_squares, ScheduleParams};
use crate::theory::{all_bound_checks, l2_sq_distance, oracle_shift, BoundCheck, BoundChecks, L2Mode, MomentInfo, Welford};

const STREAM_RATES: u64 = 1;
const STREAM_BIAS: u64 = 2;
const STREAM_BASELINES: u64 = 3;
const STREAM_BOUNDS: u64 = 4;
const STREAM_FIT: u64 = 5;

/// Ordinary least squares fit of `log error = intercept + slope·log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(invalid(format!("slope fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(n, e)| !(n > 0.0 && e > 0.0 && n.is_finite() && e.is_finite())) {
        return Err(invalid("slope fit needs positive, finite points"));
    }
    let k = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(n, e)| (n.ln(), e.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("slope fit needs at least two distinct sample sizes"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        intercept,
        stderr: (rss / (k - 2.0) / sxx).sqrt(),
    })
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let h = (len - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn sigmas_for(policy: &SigmaPolicy, n: usize) -> Result<Vec<(String, ScaleParam)>> {
    Ok(match policy {
        SigmaPolicy::Fixed { value } => vec![("fixed".into(), ScaleParam::new(*value)?)],
        SigmaPolicy::Adaptive { epsilon, q } => {
            vec![("adaptive".into(), adaptive_sigma(n, &ScheduleParams::new(*epsilon, *q)?)?)]
        }
        SigmaPolicy::Grid { values } => values
            .iter()
            .map(|v| Ok((format!("sigma={v}"), ScaleParam::new(*v)?)))
            .collect::<Result<_>>()?,
    })
}

fn truth_fn(model: &RegressionModel) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    move |x: &[f64]| model.truth.eval(x)
}

/// `‖f − f*‖²`: quadrature on 1-D domains, the mean over `eval`'s inputs otherwise.
fn l2_sq_to_truth(f: &(dyn Fn(&[f64]) -> f64 + Sync), model: &RegressionModel, eval: Option<&Dataset>) -> Result<f64> {
    if model.domain.dim() == 1 {
        return l2_sq_distance(f, &truth_fn(model), &model.domain, L2Mode::Quadrature).map(|d| d.value);
    }
    let eval = eval.ok_or_else(|| invalid("multi-dimensional L2 errors need an evaluation sample"))?;
    let mut w = Welford::default();
    for x in eval.inputs() {
        let d = f(x) - model.truth.eval(x);
        w.push(d * d);
    }
    Ok(w.mean)
}

struct FitEvaluation {
    l2_sq: f64,
    excess: f64,
    excess_stderr: f64,
    clip_count: usize,
}

fn evaluate_fit(est: &Estimator, model: &RegressionModel, eval: &Dataset, sigma: ScaleParam) -> Result<FitEvaluation> {
    let s = sigma.get();
    let mut xi = Welford::default();
    let mut clips = 0usize;
    let m = est.space().bound();
    for (x, &y) in eval.inputs().zip(&eval.ys) {
        let raw = est.raw_value(x);
        clips += usize::from(raw.abs() > m);
        let fx = raw.clamp(-m, m);
        xi.push(huber_raw(y - fx, s) - huber_raw(y - model.truth.eval(x), s));
    }
    let value = |x: &[f64]| est.value(x);
    Ok(FitEvaluation {
        l2_sq: l2_sq_to_truth(&value, model, Some(eval))?,
        excess: xi.mean,
        excess_stderr: xi.stderr(),
        clip_count: clips,
    })
}

/// One fit in a rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub series: String,
    pub n: usize,
    pub replicate: usize,
    pub sigma: f64,
    pub l2_sq_error: f64,
    /// `R^σ(f̂) − R^σ(f*)` on an independent sample of `eval_n` points.
    pub excess_risk: f64,
    pub excess_risk_stderr: f64,
    pub iters: usize,
    pub converged: bool,
    /// Evaluation points where the fit was clipped to `±M`.
    pub clip_count: usize,
    pub seed: u64,
    /// `|excess − ‖f̂ − f*‖²| ≤ c_ε/σ^ε + 3·stderr`, when `σ > max{2M, 1}` and `ε` is declared.
    pub decomposition: Option<BoundCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowFailure {
    pub series: String,
    pub n: usize,
    pub replicate: usize,
    pub sigma: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub n: usize,
    pub sigma: f64,
    pub completed: usize,
    pub mean_l2_sq: f64,
    pub l2_sq_stderr: f64,
    pub mean_excess_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSeries {
    pub label: String,
    pub points: Vec<GridPoint>,
    /// Defined when at least three grid points have completed fits.
    pub slope: Option<SlopeFit>,
}

impl RateSeries {
    /// Mean error strictly decreasing along the grid.
    pub fn strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].mean_l2_sq < w[0].mean_l2_sq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub master_seed: u64,
    pub rows: Vec<RateRow>,
    pub failures: Vec<RowFailure>,
    pub series: Vec<RateSeries>,
    /// Slope of the first series.
    pub slope: Option<SlopeFit>,
    pub decomposition_checked: usize,
    pub decomposition_satisfied: usize,
    pub config: ExperimentConfig,
}

fn moment_info_for(config: &ExperimentConfig, model: &RegressionModel) -> Result<Option<MomentInfo>> {
    let Some(eps) = config.effective_epsilon() else {
        return Ok(None);
    };
    let info = MomentInfo::for_model(model, eps, config.space.bound)?;
    Ok(info.moment_1pe.is_finite().then_some(info))
}

/// Fits every `(n, replicate)` under the configured σ policy.
pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<RateReport> {
    config.validate()?;
    let model = &config.model;
    let space = Arc::new(make_space(&config.space, &model.domain)?);
    let info = moment_info_for(config, model)?;
    let jobs: Vec<(usize, usize)> = (0..config.n_grid.len())
        .flat_map(|ni| (0..config.replicates).map(move |r| (ni, r)))
        .collect();

    let outcomes: Vec<Vec<std::result::Result<RateRow, RowFailure>>> = jobs
        .par_iter()
        .map(|&(ni, rep)| {
            let n = config.n_grid[ni];
            let seed = derive_seed_path(config.master_seed, &[STREAM_RATES, ni as u64, rep as u64]);
            let sigmas = match sigmas_for(&config.sigma_policy, n) {
                Ok(s) => s,
                Err(e) => {
                    return vec![Err(RowFailure {
                        series: String::new(),
                        n,
                        replicate: rep,
                        sigma: f64::NAN,
                        seed,
                        error: e.to_string(),
                    })]
                }
            };
            let data = generate_dataset(model, n, seed);
            let eval = generate_dataset(model, config.eval_n, derive_seed(seed, 2));
            sigmas
                .into_iter()
                .map(|(label, sigma)| {
                    let fail = |e: Error| RowFailure {
                        series: label.clone(),
                        n,
                        replicate: rep,
                        sigma: sigma.get(),
                        seed,
                        error: e.to_string(),
                    };
                    let data = data.as_ref().map_err(|e| fail(Error::Experiment(e.to_string())))?;
                    let eval = eval.as_ref().map_err(|e| fail(Error::Experiment(e.to_string())))?;
                    let est = fit_erm(&space, data, sigma, &config.solver).map_err(fail)?;
                    let ev = evaluate_fit(&est, model, eval, sigma).map_err(fail)?;
                    let decomposition = match &info {
                        Some(info) if sigma.exceeds_theory_threshold(info.bound) => {
                            let rhs = info.c_epsilon().map_err(fail)? * sigma.get().powf(-info.epsilon);
                            Some(BoundCheck::new((ev.excess - ev.l2_sq).abs(), rhs, ev.excess_stderr))
                        }
                        _ => None,
                    };
                    let row = RateRow {
                        series: label.clone(),
                        n,
                        replicate: rep,
                        sigma: sigma.get(),
                        l2_sq_error: ev.l2_sq,
                        excess_risk: ev.excess,
                        excess_risk_stderr: ev.excess_stderr,
                        iters: est.diagnostics.iterations,
                        converged: est.diagnostics.converged,
                        clip_count: ev.clip_count,
                        seed,
                        decomposition,
                    };
                    if !(row.l2_sq_error.is_finite() && row.excess_risk.is_finite()) {
                        return Err(fail(Error::Numerical("non-finite error estimate".into())));
                    }
                    Ok(row)
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(r) => rows.push(r),
            Err(f) => {
                log::warn!("fit failed at n = {}, replicate {}: {}", f.n, f.replicate, f.error);
                failures.push(f);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Experiment(format!(
            "all {} fits failed; first error: {}",
            failures.len(),
            failures.first().map_or("none", |f| f.error.as_str())
        )));
    }

    let mut labels: Vec<String> = Vec::new();
    for r in &rows {
        if !labels.contains(&r.series) {
            labels.push(r.series.clone());
        }
    }
    let series: Vec<RateSeries> = labels
        .into_iter()
        .map(|label| {
            let points: Vec<GridPoint> = config
                .n_grid
                .iter()
                .filter_map(|&n| {
                    let sel: Vec<&RateRow> = rows.iter().filter(|r| r.series == label && r.n == n).collect();
                    if sel.is_empty() {
                        return None;
                    }
                    let mut l2 = Welford::default();
                    let mut ex = Welford::default();
                    for r in &sel {
                        l2.push(r.l2_sq_error);
                        ex.push(r.excess_risk);
                    }
                    Some(GridPoint {
                        n,
                        sigma: sel[0].sigma,
                        completed: sel.len(),
                        mean_l2_sq: l2.mean,
                        l2_sq_stderr: l2.stderr(),
                        mean_excess_risk: ex.mean,
                    })
                })
                .collect();
            let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.mean_l2_sq)).collect();
            let slope = fit_loglog_slope(&pts).ok();
            RateSeries { label, points, slope }
        })
        .collect();

    let checked: Vec<&BoundCheck> = rows.iter().filter_map(|r| r.decomposition.as_ref()).collect();
    Ok(RateReport {
        master_seed: config.master_seed,
        slope: series.first().and_then(|s| s.slope),
        decomposition_checked: checked.len(),
        decomposition_satisfied: checked.iter().filter(|c| c.satisfied).count(),
        rows,
        failures,
        series,
        config: config.clone(),
    })
}

/// One fit at sample size `n`, as run by the `fit` command.
#[derive(Debug, Clone, Serialize)]
pub struct SingleFit {
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub l2_sq_error: f64,
    pub excess_risk: f64,
    pub excess_risk_stderr: f64,
    pub clip_count: usize,
    pub estimator: Estimator,
}

/// Fit the Huber ERM once on fresh data. With a σ grid the first value is used.
pub fn run_single_fit(config: &ExperimentConfig, n: usize) -> Result<SingleFit> {
    config.validate()?;
    let model = &config.model;
    let space = Arc::new(make_space(&config.space, &model.domain)?);
    let (_, sigma) = sigmas_for(&config.sigma_policy, n)?.remove(0);
    let seed = derive_seed_path(config.master_seed, &[STREAM_FIT, n as u64]);
    let data = generate_dataset(model, n, seed)?;
    let eval = generate_dataset(model, config.eval_n, derive_seed(seed, 2))?;
    let estimator = fit_erm(&space, &data, sigma, &config.solver)?;
    let ev = evaluate_fit(&estimator, model, &eval, sigma)?;
    Ok(SingleFit {
        n,
        sigma: sigma.get(),
        seed,
        l2_sq_error: ev.l2_sq,
        excess_risk: ev.excess,
        excess_risk_stderr: ev.excess_stderr,
        clip_count: ev.clip_count,
        estimator,
    })
}

/// Fitted-minus-true offset for one σ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    /// `fixed` or `adaptive`.
    pub policy: String,
    pub n: usize,
    pub sigma: f64,
    pub replicates: usize,
    /// `∫(f̂ − f*) dρ`, averaged over replicates.
    pub offset: f64,
    pub offset_stderr: f64,
    /// Population offset `s·c(σ/s)` of the oracle for noise scale `s`.
    pub oracle_shift: f64,
    pub l2_sq_error: f64,
}

impl BiasRow {
    /// `|offset − oracle| ≤ 3·stderr`.
    pub fn matches_oracle(&self) -> bool {
        (self.offset - self.oracle_shift).abs() <= 3.0 * self.offset_stderr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub master_seed: u64,
    pub model: RegressionModel,
    pub rows: Vec<BiasRow>,
    /// `|offset|` along the adaptive rows never grows by more than 3 combined stderrs.
    pub adaptive_offsets_nonincreasing: Option<bool>,
}

fn bias_model(config: &ExperimentConfig) -> Result<RegressionModel> {
    let model = config.bias_demo.model.clone().unwrap_or_else(|| RegressionModel {
        truth: TruthFn::Constant { value: 0.0 },
        het_scale: ScaleFn::Constant { value: 1.0 },
        noise: config.model.noise.clone(),
        domain: config.model.domain.clone(),
        bound: 1.0,
    });
    model.validate()?;
    if !model.is_homoscedastic() {
        return Err(Error::Config("`bias_demo.model` must be homoscedastic".into()));
    }
    if config.bias_demo.constant_only && !matches!(model.truth, TruthFn::Constant { .. }) {
        return Err(Error::Config(
            "`bias_demo.constant_only` needs a constant truth in `bias_demo.model`".into(),
        ));
    }
    Ok(model)
}

fn bias_row(
    config: &ExperimentConfig,
    model: &RegressionModel,
    space: &Arc<HypothesisSpace>,
    policy: &str,
    idx: u64,
    n: usize,
    sigma: ScaleParam,
) -> Result<BiasRow> {
    let scale = match model.het_scale {
        ScaleFn::Constant { value } => value,
        ScaleFn::Linear { .. } => unreachable!("checked homoscedastic"),
    };
    let oracle = if scale == 0.0 {
        0.0
    } else {
        scale * oracle_shift(&model.noise, ScaleParam::new(sigma.get() / scale)?)?
    };
    let reps = config.bias_demo.replicates;
    let truth = truth_fn(model);
    let mut offsets = Welford::default();
    let mut l2 = Welford::default();
    let mut sandwich = 0.0;
    for rep in 0..reps {
        let seed = derive_seed_path(config.master_seed, &[STREAM_BIAS, idx, rep as u64]);
        let data = generate_dataset(model, n, seed)?;
        let est = fit_erm(space, &data, sigma, &config.solver)?;
        let value = |x: &[f64]| est.value(x);
        let offset = if model.domain.dim() == 1 {
            let (lo, hi) = (model.domain.lo[0], model.domain.hi[0]);
            let r = crate::quadrature::integrate(|x| est.value(&[x]) - truth(&[x]), lo, hi, &Default::default())?;
            r.value / (hi - lo)
        } else {
            data.inputs().map(|x| est.value(x) - truth(x)).sum::<f64>() / n as f64
        };
        offsets.push(offset);
        l2.push(l2_sq_to_truth(&value, model, Some(&data))?);
        // Location M-estimator sandwich: E ψ² / (E ψ')² / n.
        let (mut psi2, mut dpsi) = (0.0, 0.0);
        for (x, &y) in data.inputs().zip(&data.ys) {
            let r = y - est.raw_value(x);
            psi2 += huber_deriv_raw(r, sigma.get()).powi(2);
            dpsi += if r.abs() <= sigma.get() { 2.0 } else { 0.0 };
        }
        let nf = n as f64;
        sandwich += if dpsi > 0.0 {
            (psi2 / nf) / (dpsi / nf).powi(2) / nf
        } else {
            f64::INFINITY
        };
    }
    let offset_stderr = if reps >= 2 {
        offsets.stderr()
    } else {
        (sandwich / reps as f64).sqrt()
    };
    Ok(BiasRow {
        policy: policy.into(),
        n,
        sigma: sigma.get(),
        replicates: reps,
        offset: offsets.mean,
        offset_stderr,
        oracle_shift: oracle,
        l2_sq_error: l2.mean,
    })
}

/// Offsets for each fixed σ at `bias_demo.n`, then for `σ(n)` along `n_grid`.
pub fn run_bias_demo(config: &ExperimentConfig) -> Result<BiasReport> {
    config.validate()?;
    let demo = &config.bias_demo;
    let model = bias_model(config)?;
    let space = Arc::new(if demo.constant_only {
        HypothesisSpace::constant_only(config.space.radius, config.space.bound, config.space.q, model.domain.clone())?
    } else {
        make_space(&config.space, &model.domain)?
    });
    let mut jobs: Vec<(String, usize, ScaleParam)> = Vec::new();
    for &s in &demo.sigmas {
        jobs.push(("fixed".into(), demo.n, ScaleParam::new(s)?));
    }
    if let Some(params) = &demo.adaptive {
        for &n in &config.n_grid {
            jobs.push(("adaptive".into(), n, adaptive_sigma(n, params)?));
        }
    }
    let rows = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (policy, n, sigma))| bias_row(config, &model, &space, policy, i as u64, *n, *sigma))
        .collect::<Result<Vec<_>>>()?;
    let adaptive: Vec<&BiasRow> = rows.iter().filter(|r| r.policy == "adaptive").collect();
    let trend = (adaptive.len() >= 2).then(|| {
        adaptive.windows(2).all(|w| {
            let tol = 3.0 * w[0].offset_stderr.hypot(w[1].offset_stderr);
            w[1].offset.abs() <= w[0].offset.abs() + tol
        })
    });
    Ok(BiasReport {
        master_seed: config.master_seed,
        model,
        rows,
        adaptive_offsets_nonincreasing: trend,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    /// `huber`, `huber(sigma=…)` for a σ grid, `least_squares` or `lad`.
    pub method: String,
    pub n: usize,
    pub replicate: usize,
    pub sigma: Option<f64>,
    pub l2_sq_error: f64,
    pub seed: u64,
}

/// Dispersion of the L2 errors `‖f̂ − f*‖` of one method at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub method: String,
    pub n: usize,
    pub completed: usize,
    pub failed: usize,
    pub median_l2: f64,
    pub q25_l2: f64,
    pub q75_l2: f64,
    pub iqr_l2: f64,
    pub mean_l2_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub master_seed: u64,
    pub rows: Vec<BaselineRow>,
    pub failures: Vec<RowFailure>,
    pub summaries: Vec<BaselineSummary>,
}

impl BaselineReport {
    pub fn summary(&self, method: &str, n: usize) -> Option<&BaselineSummary> {
        self.summaries.iter().find(|s| s.method == method && s.n == n)
    }
}

/// Huber (under the configured σ policy) against the requested comparators,
/// all fitted on identical datasets. Empty when no comparators are requested.
pub fn run_baselines(config: &ExperimentConfig) -> Result<BaselineReport> {
    config.validate()?;
    if config.comparators.is_empty() {
        return Ok(BaselineReport {
            master_seed: config.master_seed,
            rows: Vec::new(),
            failures: Vec::new(),
            summaries: Vec::new(),
        });
    }
    let model = &config.model;
    let space = Arc::new(make_space(&config.space, &model.domain)?);
    let jobs: Vec<(usize, usize)> = (0..config.n_grid.len())
        .flat_map(|ni| (0..config.replicates).map(move |r| (ni, r)))
        .collect();
    let outcomes: Vec<Vec<std::result::Result<BaselineRow, RowFailure>>> = jobs
        .par_iter()
        .map(|&(ni, rep)| {
            let n = config.n_grid[ni];
            let seed = derive_seed_path(config.master_seed, &[STREAM_BASELINES, ni as u64, rep as u64]);
            let fail = |method: &str, sigma: Option<f64>, e: Error| RowFailure {
                series: method.to_string(),
                n,
                replicate: rep,
                sigma: sigma.unwrap_or(f64::NAN),
                seed,
                error: e.to_string(),
            };
            let data = match generate_dataset(model, n, seed) {
                Ok(d) => d,
                Err(e) => return vec![Err(fail("data", None, e))],
            };
            let mut fits: Vec<(String, Option<ScaleParam>, Result<Estimator>)> = Vec::new();
            match sigmas_for(&config.sigma_policy, n) {
                Ok(sigmas) => {
                    let grid = matches!(config.sigma_policy, SigmaPolicy::Grid { .. });
                    for (_, s) in sigmas {
                        let name = if grid { format!("huber(sigma={})", s.get()) } else { "huber".to_string() };
                        fits.push((name, Some(s), fit_erm(&space, &data, s, &config.solver)));
                    }
                }
                Err(e) => return vec![Err(fail("huber", None, e))],
            }
            for c in &config.comparators {
                let (name, fit) = match c {
                    Comparator::LeastSquares => ("least_squares", fit_least_squares(&space, &data, &config.solver)),
                    Comparator::Lad => ("lad", fit_lad(&space, &data, &config.solver)),
                };
                fits.push((name.to_string(), None, fit));
            }
            fits.into_iter()
                .map(|(method, sigma, fit)| {
                    let sig = sigma.map(ScaleParam::get);
                    let est = fit.map_err(|e| fail(&method, sig, e))?;
                    let value = |x: &[f64]| est.value(x);
                    let l2_sq = if model.domain.dim() == 1 {
                        l2_sq_to_truth(&value, model, None)
                    } else {
                        generate_dataset(model, config.eval_n, derive_seed(seed, 2))
                            .and_then(|ev| l2_sq_to_truth(&value, model, Some(&ev)))
                    }
                    .map_err(|e| fail(&method, sig, e))?;
                    if !l2_sq.is_finite() {
                        return Err(fail(&method, sig, Error::Numerical("non-finite L2 error".into())));
                    }
                    Ok(BaselineRow {
                        method,
                        n,
                        replicate: rep,
                        sigma: sig,
                        l2_sq_error: l2_sq,
                        seed,
                    })
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes.into_iter().flatten() {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    if rows.is_empty() {
        return Err(Error::Experiment("every baseline fit failed".into()));
    }
    let mut methods: Vec<String> = Vec::new();
    for r in &rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut summaries = Vec::new();
    for method in &methods {
        for &n in &config.n_grid {
            let mut l2: Vec<f64> = rows
                .iter()
                .filter(|r| &r.method == method && r.n == n)
                .map(|r| r.l2_sq_error.sqrt())
                .collect();
            if l2.is_empty() {
                continue;
            }
            l2.sort_by(f64::total_cmp);
            let (q25, q75) = (quantile(&l2, 0.25), quantile(&l2, 0.75));
            summaries.push(BaselineSummary {
                method: method.clone(),
                n,
                completed: l2.len(),
                failed: failures.iter().filter(|f| &f.series == method && f.n == n).count(),
                median_l2: quantile(&l2, 0.5),
                q25_l2: q25,
                q75_l2: q75,
                iqr_l2: q75 - q25,
                mean_l2_sq: l2.iter().map(|v| v * v).sum::<f64>() / l2.len() as f64,
            });
        }
    }
    Ok(BaselineReport {
        master_seed: config.master_seed,
        rows,
        failures,
        summaries,
    })
}

/// How the tested function `f` of a bound-suite triple was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleFunction {
    /// `f = f*`.
    Truth,
    /// Random coefficients over Gaussian bumps, clipped to `±M`.
    RandomBumps,
    /// `clip(a·f* + b)` for random `a, b`.
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSuiteRow {
    pub triple: usize,
    pub heteroscedastic: bool,
    pub noise: NoiseSpec,
    pub epsilon: f64,
    pub sigma: f64,
    pub bound: f64,
    pub function: TripleFunction,
    pub moment_1pe: f64,
    pub checks: BoundChecks,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CheckTally {
    pub satisfied: usize,
    pub skipped: usize,
    pub total: usize,
}

impl CheckTally {
    fn add(&mut self, c: &BoundCheck) {
        self.total += 1;
        self.satisfied += usize::from(c.satisfied);
        self.skipped += usize::from(c.skipped);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSuiteReport {
    pub master_seed: u64,
    pub mc_n: usize,
    pub comparison: CheckTally,
    pub variance: CheckTally,
    pub bernstein: CheckTally,
    pub markov: CheckTally,
    /// Triples whose four checks were all satisfied.
    pub triples_satisfied: usize,
    pub triples: usize,
    pub rows: Vec<BoundSuiteRow>,
}

impl BoundSuiteReport {
    pub fn all_satisfied(&self) -> bool {
        self.triples_satisfied == self.triples
    }

    /// `"k/N satisfied"`.
    pub fn tally_line(&self) -> String {
        format!("{}/{} satisfied", self.triples_satisfied, self.triples)
    }
}

struct TripleSpec {
    heteroscedastic: bool,
    noise_idx: usize,
    eps_idx: usize,
    sigma: f64,
    function: TripleFunction,
    seed: u64,
}

/// Noise families with a finite moment of order `1 + ε`: the tail index sits
/// 1.5 above it for the polynomial families.
fn suite_noises(epsilon: f64) -> Vec<NoiseSpec> {
    vec![
        NoiseSpec::toy_mixture(),
        NoiseSpec::Example1,
        NoiseSpec::StudentT {
            df: epsilon + 2.5,
            scale: 1.0,
        },
        NoiseSpec::SymmetricPareto {
            tail_index: epsilon + 2.5,
            scale: 0.5,
        },
    ]
}

fn suite_model(heteroscedastic: bool, noise: NoiseSpec) -> RegressionModel {
    if heteroscedastic {
        RegressionModel::toy(noise)
    } else {
        RegressionModel::homoscedastic_sine(noise)
    }
}

/// Random `(f, σ, model)` triples meeting `σ > max{2M, 1}` with a finite
/// `(1+ε)`-moment; each triple runs all four checks on one shared sample.
pub fn run_bound_suite(suite: &BoundSuiteConfig, master_seed: u64) -> Result<BoundSuiteReport> {
    if suite.epsilons.is_empty() || suite.mc_n < 2 {
        return Err(invalid("bound suite needs epsilons and mc_n ≥ 2"));
    }
    let bound = RegressionModel::toy(NoiseSpec::Example1).bound;
    let lo = 1.1 * theory_threshold(bound);
    if !(suite.sigma_max > lo) {
        return Err(Error::Config(format!("`bounds.sigma_max` must exceed {lo}")));
    }
    let n_noises = suite_noises(1.0).len();
    let specs: Vec<TripleSpec> = (0..suite.triples)
        .map(|t| {
            let seed = derive_seed_path(master_seed, &[STREAM_BOUNDS, t as u64]);
            let mut rng = rng_from_seed(seed);
            let function = match rng.random_range(0..4) {
                0 => TripleFunction::Truth,
                1 => TripleFunction::Perturbed,
                _ => TripleFunction::RandomBumps,
            };
            TripleSpec {
                heteroscedastic: rng.random_bool(0.5),
                noise_idx: rng.random_range(0..n_noises),
                eps_idx: rng.random_range(0..suite.epsilons.len()),
                sigma: (lo.ln() + rng.random::<f64>() * (suite.sigma_max.ln() - lo.ln())).exp(),
                function,
                seed,
            }
        })
        .collect();

    // E|Y|^{1+ε} once per distinct (model, noise, ε).
    let mut keys: Vec<(bool, usize, usize)> = specs.iter().map(|s| (s.heteroscedastic, s.noise_idx, s.eps_idx)).collect();
    keys.sort_unstable();
    keys.dedup();
    let moments: Vec<((bool, usize, usize), MomentInfo)> = keys
        .par_iter()
        .map(|&(het, ni, ei)| {
            let eps = suite.epsilons[ei];
            let model = suite_model(het, suite_noises(eps)[ni].clone());
            Ok(((het, ni, ei), MomentInfo::for_model(&model, eps, bound)?))
        })
        .collect::<Result<_>>()?;

    let bump_space = Arc::new(make_space(
        &SpaceConfig {
            centers_per_axis: 6,
            bandwidth: 0.25,
            radius: 1e3,
            bound,
            q: 1.0,
            constant_only: false,
        },
        &crate::distributions::BoxDomain::unit(1),
    )?);

    let rows = specs
        .par_iter()
        .enumerate()
        .map(|(t, spec)| {
            let eps = suite.epsilons[spec.eps_idx];
            let noise = suite_noises(eps)[spec.noise_idx].clone();
            let model = suite_model(spec.heteroscedastic, noise.clone());
            let info = moments
                .iter()
                .find(|(k, _)| *k == (spec.heteroscedastic, spec.noise_idx, spec.eps_idx))
                .map(|(_, i)| *i)
                .expect("moment computed for every key");
            let sigma = ScaleParam::new(spec.sigma)?;
            let mut rng = rng_from_seed(derive_seed(spec.seed, 1));
            let checks = match spec.function {
                TripleFunction::Truth => {
                    let f = truth_fn(&model);
                    all_bound_checks(&f, &model, sigma, &info, suite.mc_n, spec.seed)?
                }
                TripleFunction::Perturbed => {
                    let a = rng.random_range(0.5..1.5);
                    let b = rng.random_range(-0.5..0.5);
                    let f = |x: &[f64]| (a * model.truth.eval(x) + b).clamp(-bound, bound);
                    all_bound_checks(&f, &model, sigma, &info, suite.mc_n, spec.seed)?
                }
                TripleFunction::RandomBumps => {
                    let coeffs = (0..bump_space.basis_len()).map(|_| rng.random_range(-3.0..3.0)).collect();
                    let est = Estimator::from_coeffs(bump_space.clone(), coeffs)?;
                    let f = |x: &[f64]| est.value(x);
                    all_bound_checks(&f, &model, sigma, &info, suite.mc_n, spec.seed)?
                }
            };
            Ok(BoundSuiteRow {
                triple: t,
                heteroscedastic: spec.heteroscedastic,
                noise,
                epsilon: eps,
                sigma: spec.sigma,
                bound,
                function: spec.function,
                moment_1pe: info.moment()?,
                checks,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = BoundSuiteReport {
        master_seed,
        mc_n: suite.mc_n,
        comparison: CheckTally::default(),
        variance: CheckTally::default(),
        bernstein: CheckTally::default(),
        markov: CheckTally::default(),
        triples_satisfied: 0,
        triples: rows.len(),
        rows: Vec::new(),
    };
    for r in &rows {
        report.comparison.add(&r.checks.comparison);
        report.variance.add(&r.checks.variance);
        report.bernstein.add(&r.checks.bernstein);
        report.markov.add(&r.checks.markov);
        report.triples_satisfied += usize::from(r.checks.all_satisfied());
    }
    report.rows = rows;
    Ok(report)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Serialize)]
struct RateCsvRow {
    n: usize,
    replicate: usize,
    sigma: f64,
    l2_sq_error: f64,
    excess_risk: f64,
    iters: usize,
    clip_count: usize,
    seed: u64,
}

/// `rates.csv` (one row per fit) and `rates_summary.json`.
pub fn write_rate_report(report: &RateReport, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.rows {
        w.serialize(RateCsvRow {
            n: r.n,
            replicate: r.replicate,
            sigma: r.sigma,
            l2_sq_error: r.l2_sq_error,
            excess_risk: r.excess_risk,
            iters: r.iters,
            clip_count: r.clip_count,
            seed: r.seed,
        })?;
    }
    if report.rows.is_empty() {
        w.write_record(["n", "replicate", "sigma", "l2_sq_error", "excess_risk", "iters", "clip_count", "seed"])?;
    }
    let csv_bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        master_seed: u64,
        slope: Option<f64>,
        stderr: Option<f64>,
        series: &'a [RateSeries],
        decomposition_checks: CheckTally,
        failures: &'a [RowFailure],
        config: &'a ExperimentConfig,
    }
    let summary = Summary {
        master_seed: report.master_seed,
        slope: report.slope.map(|s| s.slope),
        stderr: report.slope.map(|s| s.stderr),
        series: &report.series,
        decomposition_checks: CheckTally {
            satisfied: report.decomposition_satisfied,
            skipped: 0,
            total: report.decomposition_checked,
        },
        failures: &report.failures,
        config: &report.config,
    };
    let json = json_bytes(&summary)?;
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("rates.csv"), &csv_bytes)?;
    write_atomic(&dir.join("rates_summary.json"), &json)
}

pub fn write_bias_report(report: &BiasReport, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.rows {
        w.serialize(r)?;
    }
    let csv_bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let json = json_bytes(report)?;
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("bias_demo.csv"), &csv_bytes)?;
    write_atomic(&dir.join("bias_demo.json"), &json)
}

pub fn write_baseline_report(report: &BaselineReport, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.rows {
        w.serialize(r)?;
    }
    let csv_bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let json = json_bytes(&(&report.summaries, &report.failures))?;
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("baselines.csv"), &csv_bytes)?;
    write_atomic(&dir.join("baselines_summary.json"), &json)
}

/// `bounds.json`: one JSON object per triple with lhs, rhs, stderr and inputs, plus tallies.
pub fn write_bound_report(report: &BoundSuiteReport, dir: &Path) -> Result<()> {
    let json = json_bytes(report)?;
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("bounds.json"), &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_exact_power_laws() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&n: &f64| (n, n.powf(-0.5))).collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0, 1e4].iter().map(|&n: &f64| (n, 3.0 / n)).collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn slope_rejects_bad_points() {
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.5)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0), (-2.0, 1.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn slope_on_noisy_power_law() {
        // log-normal 5% noise around 2·n^{−0.7}; the fitted slope lands within 3 stderr.
        let mut rng = rng_from_seed(99);
        let normal = rand_distr::Normal::new(0.0, 0.05).unwrap();
        let mut covered = 0;
        for _ in 0..200 {
            let pts: Vec<(f64, f64)> = (1..=8)
                .map(|k| {
                    let n = 10f64.powf(1.0 + 0.5 * k as f64);
                    (n, 2.0 * n.powf(-0.7) * rand_distr::Distribution::<f64>::sample(&normal, &mut rng).exp())
                })
                .collect();
            let fit = fit_loglog_slope(&pts).unwrap();
            covered += usize::from((fit.slope + 0.7).abs() <= 3.0 * fit.stderr);
        }
        assert!(covered >= 190, "{covered}/200");
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-15);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_with_overrides(
            DEFAULT_CONFIG,
            &[
                "n_grid=[100, 200]".into(),
                "replicates=1".into(),
                "eval_n=1000".into(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn two_point_grid_has_no_slope() {
        let report = run_rate_experiment(&small_config()).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.slope.is_none());
        assert!(report.rows.iter().all(|r| r.l2_sq_error.is_finite() && r.excess_risk.is_finite()));
    }

    #[test]
    fn rate_rows_are_reproducible() {
        let mut c = small_config();
        c.replicates = 2;
        let a = run_rate_experiment(&c).unwrap();
        let b = run_rate_experiment(&c).unwrap();
        assert_eq!(a.rows, b.rows);
        c.master_seed += 1;
        let d = run_rate_experiment(&c).unwrap();
        assert_ne!(a.rows[0].l2_sq_error, d.rows[0].l2_sq_error);
    }

    #[test]
    fn no_comparators_gives_empty_baselines() {
        let mut c = small_config();
        c.comparators.clear();
        let r = run_baselines(&c).unwrap();
        assert!(r.rows.is_empty() && r.summaries.is_empty());
    }

    #[test]
    fn grid_policy_gives_one_series_per_sigma() {
        let mut c = small_config();
        c.sigma_policy = SigmaPolicy::Grid { values: vec![0.5, 5.0] };
        let r = run_rate_experiment(&c).unwrap();
        assert_eq!(r.series.len(), 2);
        assert_eq!(r.rows.len(), 4);
    }

    #[test]
    fn csv_header_is_fixed() {
        let report = run_rate_experiment(&small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_rate_report(&report, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "n,replicate,sigma,l2_sq_error,excess_risk,iters,clip_count,seed"
        );
        assert_eq!(text.lines().count(), 3);
    }
}
