//! Empirical Huber risk minimisation over a [`HypothesisSpace`] and the
//! sample-size-driven scale schedule.
//!
//! The fit is an iteratively reweighted least-squares (IRLS) scheme: with
//! residuals `r = y − Xβ`, each step solves
//!
//! ```text
//! min_β' (1/n)‖W^{1/2}(y − Xβ')‖² + λ‖β' − β‖²,   W = diag(min(1, σ/|r_i|))
//! ```
//!
//! which is a majorise–minimise step for the Huber risk, so the empirical
//! risk cannot increase. The proximal jitter `λ` keeps rank-deficient designs
//! solvable without moving the fixed point. Should a step fail to decrease the risk (round-off on badly
//! conditioned designs), the solver switches to gradient descent with an
//! Armijo line search.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::Dataset;
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::hypothesis::{Estimator, FitDiagnostics, FitMethod, HypothesisSpace};
use crate::loss::{huber_deriv_raw, huber_raw, huber_weight_raw, theory_threshold, ScaleParam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once `‖∇R̂‖ ≤ grad_tol·(1 + R̂)`.
    pub grad_tol: f64,
    /// Also stop once a step decreases the risk by less than `rel_tol·R̂`.
    pub rel_tol: f64,
    /// Added to the diagonal of the (averaged) normal equations.
    pub ridge_jitter: f64,
    /// Fall back to gradient descent when an IRLS step stalls.
    pub fallback: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-12,
            rel_tol: 1e-14,
            ridge_jitter: 1e-10,
            fallback: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        ensure_finite(self.rel_tol, "rel_tol")?;
        ensure_finite(self.grad_tol, "grad_tol")?;
        if self.grad_tol < 0.0 {
            return Err(invalid("grad_tol must be nonnegative"));
        }
        ensure_finite(self.ridge_jitter, "ridge_jitter")?;
        if self.rel_tol <= 0.0 {
            return Err(invalid("rel_tol must be positive"));
        }
        if self.ridge_jitter < 0.0 {
            return Err(invalid("ridge_jitter must be nonnegative"));
        }
        Ok(())
    }
}

/// Moment exponent `ε` and capacity exponent `q` driving the scale schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleParams {
    pub epsilon: f64,
    pub q: f64,
}

impl ScheduleParams {
    pub fn new(epsilon: f64, q: f64) -> Result<Self> {
        let p = Self { epsilon, q };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.epsilon, "epsilon")?;
        ensure_finite(self.q, "q")?;
        if self.epsilon <= 0.0 {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.q <= 0.0 {
            return Err(invalid(format!("q must be positive, got {}", self.q)));
        }
        Ok(())
    }

    /// Schedule exponent `Φ(ε, q)`: `1/((1+ε)(1+q))` for `ε ≤ 1`,
    /// `(1+ε)/(q(1+ε)² + ε(ε+3))` above.
    pub fn exponent(&self) -> f64 {
        let (e, q) = (self.epsilon, self.q);
        if e <= 1.0 {
            1.0 / ((1.0 + e) * (1.0 + q))
        } else {
            (1.0 + e) / (q * (1.0 + e).powi(2) + e * (e + 3.0))
        }
    }

    /// Exponent of the resulting `L2²` rate, `εΦ(ε, q)`.
    pub fn rate_exponent(&self) -> f64 {
        self.epsilon * self.exponent()
    }
}

/// `σ = n^{Φ(ε, q)}`.
pub fn adaptive_sigma(n: usize, params: &ScheduleParams) -> Result<ScaleParam> {
    params.validate()?;
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    ScaleParam::new((n as f64).powf(params.exponent()))
}

/// Rate envelope `Ψ(n, ε, σ)`: `σ^{−ε} + σ n^{−1/(q+1)}` for `ε ≤ 1`,
/// `σ^{−ε} + (σ^{q + 2ε/(1+ε)}/n)^{1/(q+1)}` above.
pub fn psi_bound(n: usize, epsilon: f64, sigma: ScaleParam, q: f64) -> Result<f64> {
    ScheduleParams::new(epsilon, q)?;
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    let s = sigma.get();
    let n = n as f64;
    let bias = s.powf(-epsilon);
    let variance = if epsilon <= 1.0 {
        s / n.powf(1.0 / (q + 1.0))
    } else {
        (s.powf(q + 2.0 * epsilon / (1.0 + epsilon)) / n).powf(1.0 / (q + 1.0))
    };
    Ok(bias + variance)
}

/// Per-observation loss and IRLS weight of a robust objective.
trait Objective {
    fn loss(&self, r: f64) -> f64;
    fn weight(&self, r: f64) -> f64;
    fn deriv(&self, r: f64) -> f64;
}

struct HuberObjective(f64);

impl Objective for HuberObjective {
    fn loss(&self, r: f64) -> f64 {
        huber_raw(r, self.0)
    }
    fn weight(&self, r: f64) -> f64 {
        huber_weight_raw(r, self.0)
    }
    fn deriv(&self, r: f64) -> f64 {
        huber_deriv_raw(r, self.0)
    }
}

/// `|r|` with IRLS weights floored at `1/floor`.
struct AbsObjective {
    floor: f64,
}

impl Objective for AbsObjective {
    fn loss(&self, r: f64) -> f64 {
        r.abs()
    }
    fn weight(&self, r: f64) -> f64 {
        1.0 / r.abs().max(self.floor)
    }
    fn deriv(&self, r: f64) -> f64 {
        if r.abs() <= self.floor {
            r / self.floor
        } else {
            r.signum()
        }
    }
}

struct Problem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    n: f64,
    jitter: f64,
}

impl Problem {
    fn new(space: &HypothesisSpace, data: &Dataset, opts: &SolverOptions) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        data.validate()?;
        opts.validate()?;
        let x = space.design_matrix(data)?;
        Ok(Self {
            x,
            y: DVector::from_column_slice(&data.ys),
            n: data.len() as f64,
            jitter: opts.ridge_jitter,
        })
    }

    fn residuals(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.x * beta
    }

    fn risk<O: Objective>(&self, obj: &O, beta: &DVector<f64>) -> f64 {
        self.residuals(beta).iter().map(|r| obj.loss(*r)).sum::<f64>() / self.n
    }

    /// Gradient of the (unjittered) empirical risk in coefficient space.
    fn gradient<O: Objective>(&self, obj: &O, beta: &DVector<f64>) -> DVector<f64> {
        let psi = self.residuals(beta).map(|r| obj.deriv(r));
        -(self.x.tr_mul(&psi)) / self.n
    }

    /// Minimises `(1/n)Σ w_i(y_i − x_iᵀβ)² + λ‖β − β₀‖²` (with `β₀ = 0` when
    /// no anchor is given) through a QR factorisation of the stacked system
    /// `[√W X; √(nλ) I]`, avoiding the squared condition number of the normal
    /// equations. With `β₀` the current iterate the jitter acts as a proximal
    /// term, so fixed points are exact stationary points of the unjittered risk.
    fn weighted_solve(&self, weights: &DVector<f64>, anchor: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        let (n, p) = self.x.shape();
        let ridge = (self.n * self.jitter).sqrt();
        let mut a = DMatrix::zeros(n + p, p);
        let mut rhs = DVector::zeros(n + p);
        for i in 0..n {
            let w = weights[i].sqrt();
            for j in 0..p {
                a[(i, j)] = w * self.x[(i, j)];
            }
            rhs[i] = w * self.y[i];
        }
        for j in 0..p {
            a[(n + j, j)] = ridge;
            if let Some(b0) = anchor {
                rhs[n + j] = ridge * b0[j];
            }
        }
        let qr = a.qr();
        let r = qr.r();
        let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if r.diagonal().iter().any(|v| v.abs() <= 1e-14 * scale) || scale == 0.0 {
            return Err(Error::Numerical(
                "weighted least-squares system is singular; increase ridge_jitter".into(),
            ));
        }
        let qtb = qr.q().tr_mul(&rhs);
        let beta = r
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numerical("weighted solve produced non-finite coefficients".into()));
        }
        Ok(beta)
    }

    fn least_squares(&self) -> Result<DVector<f64>> {
        self.weighted_solve(&DVector::from_element(self.x.nrows(), 1.0), None)
    }

    /// Upper bound on the Lipschitz constant of the Huber-risk gradient.
    fn gradient_lipschitz(&self) -> f64 {
        let gram = self.x.tr_mul(&self.x) / self.n;
        // Largest eigenvalue bounded by the max absolute row sum.
        let bound = gram
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        2.0 * bound.max(f64::MIN_POSITIVE)
    }
}

struct IrlsOutcome {
    beta: DVector<f64>,
    diagnostics: FitDiagnostics,
}

fn irls<O: Objective>(problem: &Problem, obj: &O, opts: &SolverOptions) -> Result<IrlsOutcome> {
    let mut beta = problem.least_squares()?;
    let mut risk = problem.risk(obj, &beta);
    let mut diag = FitDiagnostics {
        risk_trace: vec![risk],
        ..FitDiagnostics::default()
    };
    let mut stalled = false;
    let mut iters = 0;
    while iters < opts.max_iters {
        if risk == 0.0 || problem.gradient(obj, &beta).norm() <= opts.grad_tol * (1.0 + risk) {
            diag.converged = true;
            break;
        }
        iters += 1;
        let weights = problem.residuals(&beta).map(|r| obj.weight(r));
        let candidate = problem.weighted_solve(&weights, Some(&beta))?;
        let cand_risk = problem.risk(obj, &candidate);
        let decrease = risk - cand_risk;
        if decrease >= 0.0 {
            beta = candidate;
            risk = cand_risk;
            diag.risk_trace.push(risk);
            if decrease <= opts.rel_tol * risk {
                diag.converged = true;
                break;
            }
        } else if -decrease <= opts.rel_tol * risk {
            // Converged up to the jitter's perturbation of the optimum.
            diag.converged = true;
            break;
        } else {
            stalled = true;
            break;
        }
    }

    if stalled {
        diag.warnings
            .push(format!("IRLS step increased the risk at iteration {iters}"));
        if opts.fallback {
            diag.used_fallback = true;
            let (b, r, used) = gradient_descent(problem, obj, beta, risk, opts.max_iters - iters + 1, opts, &mut diag);
            beta = b;
            risk = r;
            iters += used;
        }
    }
    if !diag.converged {
        diag.warnings
            .push(format!("no convergence within {} iterations", opts.max_iters));
        log::warn!("solver stopped after {iters} iterations without meeting rel_tol");
    }
    diag.iterations = iters;
    diag.final_risk = risk;
    diag.gradient_norm = problem.gradient(obj, &beta).norm();
    Ok(IrlsOutcome {
        beta,
        diagnostics: diag,
    })
}

fn gradient_descent<O: Objective>(
    problem: &Problem,
    obj: &O,
    mut beta: DVector<f64>,
    mut risk: f64,
    budget: usize,
    opts: &SolverOptions,
    diag: &mut FitDiagnostics,
) -> (DVector<f64>, f64, usize) {
    let lipschitz = problem.gradient_lipschitz();
    let mut used = 0;
    while used < budget {
        used += 1;
        let g = problem.gradient(obj, &beta);
        let g2 = g.norm_squared();
        if g2.sqrt() <= opts.grad_tol * (1.0 + risk) {
            diag.converged = true;
            break;
        }
        let mut step = 1.0 / lipschitz;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &beta - &g * step;
            let r = problem.risk(obj, &cand);
            if r <= risk - 0.5 * step * g2 {
                accepted = Some((cand, r));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, r)) = accepted else {
            diag.converged = true;
            break;
        };
        let decrease = risk - r;
        beta = cand;
        risk = r;
        diag.risk_trace.push(risk);
        if decrease <= opts.rel_tol * risk {
            diag.converged = true;
            break;
        }
    }
    (beta, risk, used)
}

fn finish(
    space: &Arc<HypothesisSpace>,
    mut beta: DVector<f64>,
    mut diag: FitDiagnostics,
    sigma: Option<ScaleParam>,
    method: FitMethod,
) -> Result<Estimator> {
    if !diag.final_risk.is_finite() {
        return Err(Error::Numerical("final empirical risk is not finite".into()));
    }
    let norm = beta.norm();
    if norm > space.radius() {
        beta *= space.radius() / norm;
        diag.projected = true;
        diag.warnings.push(format!(
            "coefficient norm {norm:.4} exceeded radius {}; projected onto the ball",
            space.radius()
        ));
    }
    let coeffs: Vec<f64> = beta.iter().copied().collect();
    let sup = space
        .check_grid()
        .iter()
        .map(|x| space.raw_value(&coeffs, x).abs())
        .fold(0.0, f64::max);
    if sup > space.bound() {
        diag.exceeds_bound = true;
        diag.warnings.push(format!(
            "fitted function reaches {sup:.4} on the check grid, above M = {}",
            space.bound()
        ));
    }
    for w in &diag.warnings {
        log::debug!("{method:?} fit: {w}");
    }
    Estimator::new(space.clone(), coeffs, sigma, method, diag)
}

/// Minimise the empirical Huber risk `(1/n) Σ ℓ_σ(y_i − f(x_i))` over `space`.
///
/// The fit uses unclipped predictions; clipping to `±M` only happens when
/// the estimator is evaluated.
pub fn fit_erm(
    space: &Arc<HypothesisSpace>,
    data: &Dataset,
    sigma: ScaleParam,
    opts: &SolverOptions,
) -> Result<Estimator> {
    let problem = Problem::new(space, data, opts)?;
    let obj = HuberObjective(sigma.get());
    let mut out = irls(&problem, &obj, opts)?;
    if !sigma.exceeds_theory_threshold(space.bound()) {
        out.diagnostics.warnings.push(format!(
            "sigma = {sigma} is not above max(2M, 1) = {}",
            theory_threshold(space.bound())
        ));
    }
    finish(space, out.beta, out.diagnostics, Some(sigma), FitMethod::Huber)
}

/// Ridge-jittered least squares.
pub fn fit_least_squares(space: &Arc<HypothesisSpace>, data: &Dataset, opts: &SolverOptions) -> Result<Estimator> {
    let problem = Problem::new(space, data, opts)?;
    let beta = problem.least_squares()?;
    let risk = problem.residuals(&beta).norm_squared() / problem.n;
    let diag = FitDiagnostics {
        iterations: 1,
        final_risk: risk,
        risk_trace: vec![risk],
        converged: true,
        gradient_norm: (problem.x.tr_mul(&problem.residuals(&beta)) * (2.0 / problem.n)).norm(),
        ..FitDiagnostics::default()
    };
    finish(space, beta, diag, None, FitMethod::LeastSquares)
}

/// Least absolute deviations by IRLS with weights `1/max(|r|, 1e-8)`.
pub fn fit_lad(space: &Arc<HypothesisSpace>, data: &Dataset, opts: &SolverOptions) -> Result<Estimator> {
    let problem = Problem::new(space, data, opts)?;
    let out = irls(&problem, &AbsObjective { floor: 1e-8 }, opts)?;
    finish(space, out.beta, out.diagnostics, None, FitMethod::Lad)
}

/// Gradient of the empirical Huber risk at `coeffs`.
pub fn risk_gradient(space: &HypothesisSpace, data: &Dataset, coeffs: &[f64], sigma: ScaleParam) -> Result<Vec<f64>> {
    let problem = Problem::new(space, data, &SolverOptions::default())?;
    if coeffs.len() != space.basis_len() {
        return Err(invalid("coefficient length does not match the space"));
    }
    let beta = DVector::from_column_slice(coeffs);
    Ok(problem
        .gradient(&HuberObjective(sigma.get()), &beta)
        .iter()
        .copied()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{generate_dataset, BoxDomain, NoiseSpec, RegressionModel};
    use crate::hypothesis::{make_space, SpaceConfig};
    use crate::loss::empirical_risk;

    fn sigma(v: f64) -> ScaleParam {
        ScaleParam::new(v).unwrap()
    }

    fn space() -> Arc<HypothesisSpace> {
        Arc::new(
            make_space(
                &SpaceConfig {
                    centers_per_axis: 6,
                    bandwidth: 0.25,
                    radius: 1e3,
                    bound: 3.0,
                    q: 1.0,
                    constant_only: false,
                },
                &BoxDomain::unit(1),
            )
            .unwrap(),
        )
    }

    #[test]
    fn schedule_examples() {
        let p = ScheduleParams::new(1.0, 1.0).unwrap();
        assert!((adaptive_sigma(16, &p).unwrap().get() - 2.0).abs() < 1e-15);
        let p3 = ScheduleParams::new(3.0, 1.0).unwrap();
        assert!((p3.exponent() - 2.0 / 17.0).abs() < 1e-15);
        assert_eq!(adaptive_sigma(1, &p3).unwrap().get(), 1.0);
        assert!(ScheduleParams::new(0.0, 1.0).is_err());
        assert!(ScheduleParams::new(1.0, -1.0).is_err());
        assert!(adaptive_sigma(0, &p).is_err());
    }

    #[test]
    fn schedule_exponent_continuous_at_one() {
        for q in [0.1, 0.5, 1.0, 3.0] {
            let below = ScheduleParams::new(1.0, q).unwrap().exponent();
            let above = ScheduleParams::new(1.0 + 1e-12, q).unwrap().exponent();
            assert!((below - 1.0 / (2.0 * (1.0 + q))).abs() < 1e-15);
            assert!((below - above).abs() < 1e-10);
        }
    }

    #[test]
    fn schedule_is_increasing() {
        for (e, q) in [(0.4, 1.0), (1.0, 1.0), (2.5, 0.5)] {
            let p = ScheduleParams::new(e, q).unwrap();
            let mut last = 0.0;
            for n in [1, 2, 10, 100, 1000, 100_000] {
                let s = adaptive_sigma(n, &p).unwrap().get();
                assert!(s >= last);
                last = s;
            }
        }
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi_bound(1, 1.0, sigma(1.0), 1.0).unwrap(), 2.0);
        let small = psi_bound(1000, 1.0, sigma(10.0), 1.0).unwrap();
        let huge = psi_bound(1000, 1.0, sigma(1e8), 1.0).unwrap();
        assert!(huge > 1e6 && huge > small);
        assert!(psi_bound(10, 0.0, sigma(1.0), 1.0).is_err());
        assert!(psi_bound(0, 1.0, sigma(1.0), 1.0).is_err());
        // ε > 1 branch by substitution: σ=2, q=1, ε=3, n=4 → 1/8 + (2^{2.5}/4)^{1/2}
        let v = psi_bound(4, 3.0, sigma(2.0), 1.0).unwrap();
        assert!((v - (0.125 + (2f64.powf(2.5) / 4.0).sqrt())).abs() < 1e-14);
    }

    #[test]
    fn psi_grid_minimum_matches_schedule() {
        for (n, q) in [(1_000usize, 1.0), (100_000, 1.0), (50_000, 0.5)] {
            let grid: Vec<f64> = (0..20_001).map(|i| 10f64.powf(-1.0 + 4.0 * i as f64 / 20_000.0)).collect();
            let best = grid
                .iter()
                .copied()
                .min_by(|a, b| {
                    let pa = psi_bound(n, 1.0, sigma(*a), q).unwrap();
                    let pb = psi_bound(n, 1.0, sigma(*b), q).unwrap();
                    pa.total_cmp(&pb)
                })
                .unwrap();
            let predicted = (n as f64).powf(1.0 / (2.0 * (1.0 + q)));
            let step = 10f64.powf(4.0 / 20_000.0);
            assert!((best / predicted).ln().abs() <= step.ln() * 1.01, "n={n}: {best} vs {predicted}");
        }
    }

    #[test]
    fn constant_data_is_interpolated() {
        let space = space();
        let n = 200;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let data = Dataset {
            dim: 1,
            xs: xs.clone(),
            ys: vec![3.0; n],
            seed: 0,
        };
        for s in [0.01, 1.0, 50.0] {
            let est = fit_erm(&space, &data, sigma(s), &SolverOptions::default()).unwrap();
            for x in &xs {
                let v = est.evaluate(&[*x]).unwrap();
                assert!((v - 3.0).abs() < 1e-8, "s={s} x={x} v={v} {:?} {:?}", est.coeffs, est.diagnostics);
            }
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let data = Dataset {
            dim: 1,
            xs: vec![],
            ys: vec![],
            seed: 0,
        };
        assert!(matches!(
            fit_erm(&space(), &data, sigma(1.0), &SolverOptions::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn zero_jitter_singular_design_errors() {
        // Two identical bumps make the Gram matrix singular.
        let space = Arc::new(
            make_space(
                &SpaceConfig {
                    centers_per_axis: 1,
                    bandwidth: 1e-3,
                    radius: 10.0,
                    bound: 5.0,
                    q: 1.0,
                    constant_only: false,
                },
                &BoxDomain::unit(1),
            )
            .unwrap(),
        );
        // The bump is numerically zero away from x = 0.5, duplicating nothing but
        // leaving an all-zero column.
        let data = Dataset {
            dim: 1,
            xs: vec![0.0, 0.1, 0.9, 1.0],
            ys: vec![1.0, 2.0, 3.0, 4.0],
            seed: 0,
        };
        let opts = SolverOptions {
            ridge_jitter: 0.0,
            ..SolverOptions::default()
        };
        assert!(matches!(fit_erm(&space, &data, sigma(1.0), &opts), Err(Error::Numerical(_))));
        assert!(fit_erm(&space, &data, sigma(1.0), &SolverOptions::default()).is_ok());
    }

    #[test]
    fn risk_trace_nonincreasing_and_stationary() {
        let space = space();
        let model = RegressionModel::toy(NoiseSpec::Example1);
        let data = generate_dataset(&model, 3000, 11).unwrap();
        for s in [0.05, 0.5, 2.0, 8.0] {
            let est = fit_erm(&space, &data, sigma(s), &SolverOptions::default()).unwrap();
            let d = &est.diagnostics;
            assert!(d.converged, "sigma={s}: {:?}", d.warnings);
            for w in d.risk_trace.windows(2) {
                assert!(w[1] <= w[0], "sigma={s}: {:?}", d.risk_trace);
            }
            let preds: Vec<f64> = data.inputs().map(|x| est.raw_value(x)).collect();
            let risk = empirical_risk(&preds, &data.ys, sigma(s)).unwrap();
            assert!((risk - d.final_risk).abs() < 1e-12 * (1.0 + risk));
            if s >= 0.5 {
                let g = risk_gradient(&space, &data, &est.coeffs, sigma(s)).unwrap();
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(norm <= 1e-6 * (1.0 + risk), "sigma={s}: gradient {norm}");
            }
        }
    }

    #[test]
    fn lad_and_least_squares_fit() {
        let space = space();
        let model = RegressionModel::homoscedastic_sine(NoiseSpec::gaussian(0.3));
        let data = generate_dataset(&model, 2000, 5).unwrap();
        let ls = fit_least_squares(&space, &data, &SolverOptions::default()).unwrap();
        let lad = fit_lad(&space, &data, &SolverOptions::default()).unwrap();
        for x in [0.1, 0.5, 0.9] {
            let truth = 2.0 * (std::f64::consts::PI * x).sin();
            assert!((ls.evaluate(&[x]).unwrap() - truth).abs() < 0.1);
            assert!((lad.evaluate(&[x]).unwrap() - truth).abs() < 0.15);
        }
        for w in lad.diagnostics.risk_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
