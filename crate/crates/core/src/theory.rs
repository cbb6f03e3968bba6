//! Population oracles and Monte Carlo bound checks.
//!
//! The oracles work on the location problem `ν ↦ ∫ℓ_σ(u − ν) p(u) du` of a
//! noise density `p`; under homoscedastic noise the population Huber
//! minimiser is `f* + c` with `c` the minimiser of that problem
//! ([`oracle_shift`]).
//!
//! The checks compare Monte Carlo estimates against the explicit envelopes
//! for a bounded function `f` with `‖f‖∞ ≤ M` and `σ > max{2M, 1}`, writing
//! `ξ = ℓ_σ(Y − f(X)) − ℓ_σ(Y − f*(X))`:
//!
//! * comparison gap: `|Eξ − ‖f − f*‖²| ≤ c_ε σ^{−ε}`, `c_ε = 2^{3+ε}(M+1)² E|Y|^{1+ε}`;
//! * variance: `Eξ² ≤ c₁‖f − f*‖^{2(ε−1)₊/(ε+1)} + c₂σ^{1−ε}`;
//! * relaxed Bernstein: `Eξ² ≤ c₁(Eξ)^κ + c₁(c_ε σ^{−ε})^κ + c₂σ^{1−ε}`, `κ = (ε−1)₊/(ε+1)`;
//! * tail: `Pr(|Y| ≥ σ/2) ≤ 2^{1+ε} E|Y|^{1+ε} / σ^{1+ε}`;
//!
//! with `c₁ = 64(M+1)²(E|Y|^{1+ε} + M² + 1)` and
//! `c₂ = 48M²(E|Y|^{1+ε} + M^{1+ε}) + 16M² E|Y|^{1+ε}`.
//! A check passes when `lhs ≤ rhs + 3·stderr`.

use serde::{Deserialize, Serialize};

use crate::distributions::{generate_dataset, BoxDomain, Moment, NoiseSpec, RegressionModel};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::loss::{huber_deriv_raw, huber_raw, ScaleParam};
use crate::quadrature::{integrate, integrate_with_breaks, QuadOptions};

/// A real-valued function on the input domain.
pub type RegressionFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Moment order and bound used by every envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentInfo {
    pub epsilon: f64,
    /// `E|Y|^{1+ε}`.
    pub moment_1pe: Moment,
    /// `M = max{‖f*‖∞, sup_H ‖f‖∞}`.
    pub bound: f64,
}

impl MomentInfo {
    pub fn new(epsilon: f64, moment_1pe: Moment, bound: f64) -> Result<Self> {
        ensure_finite(epsilon, "epsilon")?;
        ensure_finite(bound, "bound")?;
        if epsilon <= 0.0 {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if bound <= 0.0 {
            return Err(invalid(format!("bound must be positive, got {bound}")));
        }
        Ok(Self {
            epsilon,
            moment_1pe,
            bound,
        })
    }

    /// Computes `E|Y|^{1+ε}` for `model` by quadrature.
    pub fn for_model(model: &RegressionModel, epsilon: f64, bound: f64) -> Result<Self> {
        ensure_finite(epsilon, "epsilon")?;
        if epsilon <= 0.0 {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        let moment = model.response_moment(1.0 + epsilon)?;
        Self::new(epsilon, moment, bound.max(model.bound))
    }

    pub fn moment(&self) -> Result<f64> {
        self.moment_1pe.value().ok_or_else(|| {
            Error::Precondition(format!(
                "E|Y|^(1+eps) is infinite for eps = {}; the envelopes need a finite moment",
                self.epsilon
            ))
        })
    }

    /// `c_ε = 2^{3+ε}(M+1)² E|Y|^{1+ε}`.
    pub fn c_epsilon(&self) -> Result<f64> {
        let m = self.bound;
        Ok(2f64.powf(3.0 + self.epsilon) * (m + 1.0).powi(2) * self.moment()?)
    }

    /// `c₁ = 64(M+1)²(E|Y|^{1+ε} + M² + 1)`.
    pub fn c1(&self) -> Result<f64> {
        let m = self.bound;
        Ok(64.0 * (m + 1.0).powi(2) * (self.moment()? + m * m + 1.0))
    }

    /// `c₂ = 48M²(E|Y|^{1+ε} + M^{1+ε}) + 16M² E|Y|^{1+ε}`.
    pub fn c2(&self) -> Result<f64> {
        let m = self.bound;
        let e = self.moment()?;
        Ok(48.0 * m * m * (e + m.powf(1.0 + self.epsilon)) + 16.0 * m * m * e)
    }

    /// `(ε − 1)₊ / (ε + 1)`.
    pub fn bernstein_exponent(&self) -> f64 {
        (self.epsilon - 1.0).max(0.0) / (self.epsilon + 1.0)
    }
}

/// A measured quantity against its theoretical envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs ≤ rhs + 3·mc_stderr`; always true for skipped checks.
    pub satisfied: bool,
    pub mc_stderr: f64,
    /// The check's preconditions did not hold for this draw.
    pub skipped: bool,
}

impl BoundCheck {
    pub fn new(lhs: f64, rhs: f64, mc_stderr: f64) -> Self {
        Self {
            lhs,
            rhs,
            satisfied: lhs <= rhs + 3.0 * mc_stderr,
            mc_stderr,
            skipped: false,
        }
    }

    fn skipped(lhs: f64, rhs: f64, mc_stderr: f64) -> Self {
        Self {
            lhs,
            rhs,
            satisfied: true,
            mc_stderr,
            skipped: true,
        }
    }
}

fn oracle_quad() -> QuadOptions {
    QuadOptions::default().with_abs_tol(1e-13).with_rel_tol(1e-12)
}

/// `d/dν ∫ℓ_σ(u − ν) p(u) du = −∫ψ_σ(u − ν) p(u) du`.
pub fn risk_deriv_at(nu: f64, sigma: ScaleParam, spec: &NoiseSpec) -> Result<f64> {
    ensure_finite(nu, "nu")?;
    spec.validate()?;
    let s = sigma.get();
    let mut breaks = spec.breakpoints();
    breaks.extend([nu - s, nu + s]);
    let r = integrate_with_breaks(
        |u| {
            let d = spec.pdf(u);
            if d == 0.0 {
                0.0
            } else {
                huber_deriv_raw(u - nu, s) * d
            }
        },
        f64::NEG_INFINITY,
        f64::INFINITY,
        &breaks,
        &oracle_quad(),
    )
    .map_err(|e| Error::Numerical(format!("risk derivative at nu = {nu}, sigma = {s}: {e}")))?;
    Ok(-r.value)
}

/// Population location risk `∫ℓ_σ(u − ν) p(u) du`.
pub fn population_risk(nu: f64, sigma: ScaleParam, spec: &NoiseSpec) -> Result<f64> {
    ensure_finite(nu, "nu")?;
    if !spec.moment(1.0)?.is_finite() {
        return Err(Error::Precondition("noise has no finite first moment".into()));
    }
    let s = sigma.get();
    let mut breaks = spec.breakpoints();
    breaks.extend([nu - s, nu, nu + s]);
    integrate_with_breaks(
        |u| {
            let d = spec.pdf(u);
            if d == 0.0 {
                0.0
            } else {
                huber_raw(u - nu, s) * d
            }
        },
        f64::NEG_INFINITY,
        f64::INFINITY,
        &breaks,
        &oracle_quad(),
    )
    .map(|r| r.value)
}

/// Closed form of `risk_deriv_at(0, σ, Example1)`:
/// `e^{−σ−¼} − ½e^{½−2σ}` for `σ ≥ ¼`, `2σ + e^{−σ−¼} − e^{σ−¼}` below.
pub fn example1_risk_deriv_at_zero(sigma: ScaleParam) -> f64 {
    let s = sigma.get();
    if s >= 0.25 {
        (-s - 0.25).exp() - 0.5 * (0.5 - 2.0 * s).exp()
    } else {
        2.0 * s + (-s - 0.25).exp() - (s - 0.25).exp()
    }
}

/// Minimiser `c` of the population location risk, found by bisection on
/// [`risk_deriv_at`] inside `[−σ − E|ε|, σ + E|ε|]` down to width `1e−12`.
pub fn oracle_shift(spec: &NoiseSpec, sigma: ScaleParam) -> Result<f64> {
    let abs_mean = spec
        .moment(1.0)?
        .value()
        .ok_or_else(|| Error::Precondition("noise has no finite first moment".into()))?;
    let s = sigma.get();
    let mut lo = -s - abs_mean;
    let mut hi = s + abs_mean;
    let d_lo = risk_deriv_at(lo, sigma, spec)?;
    let d_hi = risk_deriv_at(hi, sigma, spec)?;
    if d_lo > 0.0 || d_hi < 0.0 {
        return Err(Error::Numerical(format!(
            "oracle bracket [{lo}, {hi}] does not straddle a root: derivatives {d_lo:e}, {d_hi:e}"
        )));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let d = risk_deriv_at(mid, sigma, spec)?;
        if d == 0.0 {
            return Ok(mid);
        }
        if d > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// How [`l2_distance`] integrates over the input marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum L2Mode {
    /// Adaptive quadrature; one-dimensional domains only.
    Quadrature,
    MonteCarlo { mc_n: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2Distance {
    pub value: f64,
    /// Zero in quadrature mode.
    pub stderr: f64,
}

/// `‖f − g‖_{L2(ρ)}` with `ρ` uniform on `domain`.
pub fn l2_distance(f: RegressionFn<'_>, g: RegressionFn<'_>, domain: &BoxDomain, mode: L2Mode) -> Result<L2Distance> {
    let sq = l2_sq_distance(f, g, domain, mode)?;
    let value = sq.value.max(0.0).sqrt();
    let stderr = if value > 0.0 { sq.stderr / (2.0 * value) } else { sq.stderr.sqrt() };
    Ok(L2Distance { value, stderr })
}

/// `‖f − g‖²_{L2(ρ)}` with its Monte Carlo standard error.
pub fn l2_sq_distance(f: RegressionFn<'_>, g: RegressionFn<'_>, domain: &BoxDomain, mode: L2Mode) -> Result<L2Distance> {
    domain.validate()?;
    match mode {
        L2Mode::Quadrature => {
            if domain.dim() != 1 {
                return Err(invalid("quadrature L2 distance needs a one-dimensional domain"));
            }
            let (lo, hi) = (domain.lo[0], domain.hi[0]);
            let opts = QuadOptions::default().with_abs_tol(1e-13).with_rel_tol(1e-11);
            let r = integrate(
                |x| {
                    let d = f(&[x]) - g(&[x]);
                    d * d
                },
                lo,
                hi,
                &opts,
            )?;
            Ok(L2Distance {
                value: r.value / (hi - lo),
                stderr: 0.0,
            })
        }
        L2Mode::MonteCarlo { mc_n, seed } => {
            if mc_n < 2 {
                return Err(invalid("Monte Carlo L2 distance needs at least 2 draws"));
            }
            let mut rng = crate::seed::rng_from_seed(seed);
            let mut x = Vec::with_capacity(domain.dim());
            let mut stats = Welford::default();
            for _ in 0..mc_n {
                x.clear();
                domain.sample_into(&mut rng, &mut x);
                let d = f(&x) - g(&x);
                stats.push(d * d);
            }
            Ok(L2Distance {
                value: stats.mean,
                stderr: stats.stderr(),
            })
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Welford {
    pub n: usize,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Monte Carlo summaries of the excess loss `ξ` on one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcessLossSample {
    pub mc_n: usize,
    pub mean: f64,
    pub mean_stderr: f64,
    pub second_moment: f64,
    pub second_moment_stderr: f64,
    /// `Pr(|Y| ≥ σ/2)` estimate.
    pub tail_freq: f64,
    /// `‖f − f*‖²`, by quadrature on 1-D domains.
    pub l2_sq: f64,
    pub l2_sq_stderr: f64,
}

fn check_inputs(f: RegressionFn<'_>, model: &RegressionModel, sigma: ScaleParam, info: &MomentInfo) -> Result<()> {
    model.validate()?;
    sigma.require_theory_regime(info.bound)?;
    info.moment()?;
    if model.bound > info.bound * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "model bound {} exceeds M = {}",
            model.bound, info.bound
        )));
    }
    let per_axis = if model.domain.dim() == 1 { 1001 } else { 31 };
    let sup = model
        .domain
        .grid(per_axis)
        .iter()
        .map(|x| f(x).abs())
        .fold(0.0, f64::max);
    if !(sup <= info.bound * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!(
            "‖f‖∞ ≈ {sup} exceeds M = {}",
            info.bound
        )));
    }
    Ok(())
}

/// Draws `mc_n` observations and summarises `ξ` and the response tail.
pub fn excess_loss_sample(
    f: RegressionFn<'_>,
    model: &RegressionModel,
    sigma: ScaleParam,
    mc_n: usize,
    seed: u64,
) -> Result<ExcessLossSample> {
    if mc_n < 2 {
        return Err(invalid("Monte Carlo checks need at least 2 draws"));
    }
    let data = generate_dataset(model, mc_n, seed)?;
    let s = sigma.get();
    let half = 0.5 * s;
    let mut xi = Welford::default();
    let mut xi2 = Welford::default();
    let mut diff2 = Welford::default();
    let mut tail = 0usize;
    for (x, &y) in data.inputs().zip(&data.ys) {
        let fx = f(x);
        let fs = model.truth.eval(x);
        let e = huber_raw(y - fx, s) - huber_raw(y - fs, s);
        xi.push(e);
        xi2.push(e * e);
        diff2.push((fx - fs) * (fx - fs));
        tail += usize::from(y.abs() >= half);
    }
    let (l2_sq, l2_sq_stderr) = if model.domain.dim() == 1 {
        let truth = |x: &[f64]| model.truth.eval(x);
        let d = l2_sq_distance(f, &truth, &model.domain, L2Mode::Quadrature)?;
        (d.value, 0.0)
    } else {
        (diff2.mean, diff2.stderr())
    };
    Ok(ExcessLossSample {
        mc_n,
        mean: xi.mean,
        mean_stderr: xi.stderr(),
        second_moment: xi2.mean,
        second_moment_stderr: xi2.stderr(),
        tail_freq: tail as f64 / mc_n as f64,
        l2_sq,
        l2_sq_stderr,
    })
}

fn comparison_from(sample: &ExcessLossSample, sigma: ScaleParam, info: &MomentInfo) -> Result<BoundCheck> {
    let lhs = (sample.mean - sample.l2_sq).abs();
    let se = sample.mean_stderr.hypot(sample.l2_sq_stderr);
    let rhs = info.c_epsilon()? * sigma.get().powf(-info.epsilon);
    Ok(BoundCheck::new(lhs, rhs, se))
}

fn variance_from(sample: &ExcessLossSample, sigma: ScaleParam, info: &MomentInfo) -> Result<BoundCheck> {
    let kappa = info.bernstein_exponent();
    let dist = sample.l2_sq.max(0.0).sqrt();
    let rhs = info.c1()? * dist.powf(2.0 * kappa) + info.c2()? * sigma.get().powf(1.0 - info.epsilon);
    Ok(BoundCheck::new(sample.second_moment, rhs, sample.second_moment_stderr))
}

fn bernstein_from(sample: &ExcessLossSample, sigma: ScaleParam, info: &MomentInfo) -> Result<BoundCheck> {
    let kappa = info.bernstein_exponent();
    let c1 = info.c1()?;
    let s = sigma.get();
    let slack = info.c_epsilon()? * s.powf(-info.epsilon);
    let first = sample.mean.max(0.0);
    let rhs = c1 * first.powf(kappa) + c1 * slack.powf(kappa) + info.c2()? * s.powf(1.0 - info.epsilon);
    if sample.mean + 3.0 * sample.mean_stderr < 0.0 {
        return Ok(BoundCheck::skipped(sample.second_moment, rhs, sample.second_moment_stderr));
    }
    Ok(BoundCheck::new(sample.second_moment, rhs, sample.second_moment_stderr))
}

fn markov_from(tail_freq: f64, mc_n: usize, sigma: ScaleParam, info: &MomentInfo) -> Result<BoundCheck> {
    let p = 1.0 + info.epsilon;
    let rhs = 2f64.powf(p) * info.moment()? / sigma.get().powf(p);
    let se = (tail_freq * (1.0 - tail_freq) / mc_n as f64).sqrt();
    Ok(BoundCheck::new(tail_freq, rhs, se))
}

/// `|[R^σ(f) − R^σ(f*)] − ‖f − f*‖²|` against `c_ε/σ^ε`.
pub fn comparison_gap(
    f: RegressionFn<'_>,
    model: &RegressionModel,
    sigma: ScaleParam,
    info: &MomentInfo,
    mc_n: usize,
    seed: u64,
) -> Result<BoundCheck> {
    check_inputs(f, model, sigma, info)?;
    let sample = excess_loss_sample(f, model, sigma, mc_n, seed)?;
    comparison_from(&sample, sigma, info)
}

/// `Eξ²` against `c₁‖f − f*‖^{2(ε−1)₊/(ε+1)} + c₂σ^{1−ε}`.
pub fn variance_bound_check(
    f: RegressionFn<'_>,
    model: &RegressionModel,
    sigma: ScaleParam,
    info: &MomentInfo,
    mc_n: usize,
    seed: u64,
) -> Result<BoundCheck> {
    check_inputs(f, model, sigma, info)?;
    let sample = excess_loss_sample(f, model, sigma, mc_n, seed)?;
    variance_from(&sample, sigma, info)
}

/// `Eξ²` against the relaxed Bernstein envelope. Skipped (and reported as
/// such) when `Eξ` is negative beyond three standard errors.
pub fn relaxed_bernstein_check(
    f: RegressionFn<'_>,
    model: &RegressionModel,
    sigma: ScaleParam,
    info: &MomentInfo,
    mc_n: usize,
    seed: u64,
) -> Result<BoundCheck> {
    check_inputs(f, model, sigma, info)?;
    let sample = excess_loss_sample(f, model, sigma, mc_n, seed)?;
    bernstein_from(&sample, sigma, info)
}

/// Empirical `Pr(|Y| ≥ σ/2)` against `2^{1+ε}E|Y|^{1+ε}/σ^{1+ε}`.
pub fn markov_tail_check(
    model: &RegressionModel,
    sigma: ScaleParam,
    info: &MomentInfo,
    mc_n: usize,
    seed: u64,
) -> Result<BoundCheck> {
    info.moment()?;
    if mc_n == 0 {
        return Err(invalid("Monte Carlo checks need at least 1 draw"));
    }
    let data = generate_dataset(model, mc_n, seed)?;
    let half = 0.5 * sigma.get();
    let hits = data.ys.iter().filter(|y| y.abs() >= half).count();
    markov_from(hits as f64 / mc_n as f64, mc_n, sigma, info)
}

/// All four checks evaluated on one shared sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundChecks {
    pub comparison: BoundCheck,
    pub variance: BoundCheck,
    pub bernstein: BoundCheck,
    pub markov: BoundCheck,
    pub sample: ExcessLossSample,
}

impl BoundChecks {
    pub fn all_satisfied(&self) -> bool {
        [self.comparison, self.variance, self.bernstein, self.markov]
            .iter()
            .all(|c| c.satisfied)
    }
}

pub fn all_bound_checks(
    f: RegressionFn<'_>,
    model: &RegressionModel,
    sigma: ScaleParam,
    info: &MomentInfo,
    mc_n: usize,
    seed: u64,
) -> Result<BoundChecks> {
    check_inputs(f, model, sigma, info)?;
    let sample = excess_loss_sample(f, model, sigma, mc_n, seed)?;
    Ok(BoundChecks {
        comparison: comparison_from(&sample, sigma, info)?,
        variance: variance_from(&sample, sigma, info)?,
        bernstein: bernstein_from(&sample, sigma, info)?,
        markov: markov_from(sample.tail_freq, mc_n, sigma, info)?,
        sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{ScaleFn, TruthFn};

    fn s(v: f64) -> ScaleParam {
        ScaleParam::new(v).unwrap()
    }

    /// Brute-force derivative oracle: −Σ ψ(u−ν)p(u) by composite Simpson on
    /// pieces split at every kink, truncated where the density is < 1e−16.
    fn brute_deriv(nu: f64, sigma: f64) -> f64 {
        let mut knots = vec![-20.0, nu - sigma, nu + sigma, -0.25, 40.0];
        knots.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            // One density branch per piece, so the jump at −¼ is never straddled.
            let left = 0.5 * (a + b) < -0.25;
            let p = |u: f64| {
                if left {
                    (2.0 * (u + 0.25)).exp()
                } else {
                    0.5 * (-(u + 0.25)).exp()
                }
            };
            let m = 20_000;
            let h = (b - a) / m as f64;
            let g = |u: f64| huber_deriv_raw(u - nu, sigma) * p(u);
            let mut acc = g(a) + g(b);
            for i in 1..m {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(a + i as f64 * h);
            }
            total += acc * h / 3.0;
        }
        -total
    }

    #[test]
    fn risk_deriv_examples() {
        // Closed forms evaluated independently: e^{−1.25} − ½e^{−1.5}, 0.2 + e^{−0.35} − e^{−0.15}.
        let d1 = risk_deriv_at(0.0, s(1.0), &NoiseSpec::Example1).unwrap();
        assert!((d1 - 0.174_939_716_785_975_2).abs() < 1e-10, "{d1}");
        let d01 = risk_deriv_at(0.0, s(0.1), &NoiseSpec::Example1).unwrap();
        assert!((d01 - 0.043_980_113_293_655_6).abs() < 1e-10, "{d01}");
        for sigma in [0.1, 1.0, 5.0] {
            let d = risk_deriv_at(0.0, s(sigma), &NoiseSpec::toy_mixture()).unwrap();
            assert!(d.abs() < 1e-8);
        }
    }

    #[test]
    fn risk_deriv_matches_brute_force_off_zero() {
        for (nu, sigma) in [(-0.2, 0.5), (0.3, 0.05), (-1.0, 2.0)] {
            let q = risk_deriv_at(nu, s(sigma), &NoiseSpec::Example1).unwrap();
            let b = brute_deriv(nu, sigma);
            assert!((q - b).abs() < 1e-9, "nu={nu} sigma={sigma}: {q} vs {b}");
        }
    }

    #[test]
    fn oracle_shift_values() {
        for sigma in [0.3, 2.0, 9.0] {
            let c = oracle_shift(&NoiseSpec::toy_mixture(), s(sigma)).unwrap();
            assert!(c.abs() < 1e-10);
        }
        let c = oracle_shift(&NoiseSpec::Example1, s(0.5)).unwrap();
        assert!(c < 0.0);
        assert!(risk_deriv_at(c, s(0.5), &NoiseSpec::Example1).unwrap().abs() < 1e-10);
        // Frozen from a 30-digit bisection on the quadrature derivative.
        assert!((c - -0.174_007_068_814_850_65).abs() < 1e-10, "{c}");
    }

    #[test]
    fn oracle_is_a_local_minimum() {
        for spec in [
            NoiseSpec::Example1,
            NoiseSpec::StudentT { df: 1.5, scale: 1.0 },
            NoiseSpec::SymmetricPareto {
                tail_index: 2.2,
                scale: 0.5,
            },
        ] {
            for sigma in [0.2, 1.0, 3.0] {
                let c = oracle_shift(&spec, s(sigma)).unwrap();
                let at = population_risk(c, s(sigma), &spec).unwrap();
                assert!(at <= population_risk(c + 0.01, s(sigma), &spec).unwrap());
                assert!(at <= population_risk(c - 0.01, s(sigma), &spec).unwrap());
            }
        }
    }

    #[test]
    fn l2_examples() {
        let d = BoxDomain::unit(1);
        let a = |_: &[f64]| 1.5;
        let b = |_: &[f64]| -0.5;
        let sine = |x: &[f64]| 2.0 * (std::f64::consts::PI * x[0]).sin();
        let zero = |_: &[f64]| 0.0;
        assert_eq!(l2_distance(&sine, &sine, &d, L2Mode::Quadrature).unwrap().value, 0.0);
        assert!((l2_distance(&a, &b, &d, L2Mode::Quadrature).unwrap().value - 2.0).abs() < 1e-12);
        let q = l2_distance(&sine, &zero, &d, L2Mode::Quadrature).unwrap();
        assert!((q.value - 2f64.sqrt()).abs() < 1e-8);
        let mc = l2_distance(&sine, &zero, &d, L2Mode::MonteCarlo { mc_n: 200_000, seed: 3 }).unwrap();
        assert!((mc.value - 2f64.sqrt()).abs() < 4.0 * mc.stderr);
        assert!(l2_distance(&a, &b, &BoxDomain::unit(2), L2Mode::Quadrature).is_err());
    }

    fn toy_info(model: &RegressionModel, eps: f64) -> MomentInfo {
        MomentInfo::for_model(model, eps, 3.0).unwrap()
    }

    #[test]
    fn identical_functions_have_zero_lhs() {
        let model = RegressionModel::toy(NoiseSpec::toy_mixture());
        let info = toy_info(&model, 1.0);
        let truth = |x: &[f64]| model.truth.eval(x);
        let checks = all_bound_checks(&truth, &model, s(10.0), &info, 10_000, 1).unwrap();
        assert_eq!(checks.comparison.lhs, 0.0);
        assert_eq!(checks.variance.lhs, 0.0);
        assert!(checks.bernstein.rhs > 0.0);
        assert!(checks.all_satisfied());
    }

    #[test]
    fn precondition_on_sigma() {
        let model = RegressionModel::toy(NoiseSpec::toy_mixture());
        let info = toy_info(&model, 1.0);
        let truth = |x: &[f64]| model.truth.eval(x);
        assert!(matches!(
            comparison_gap(&truth, &model, s(6.0), &info, 100, 1),
            Err(Error::Precondition(_))
        ));
        let big = |_: &[f64]| 4.0;
        assert!(matches!(
            variance_bound_check(&big, &model, s(10.0), &info, 100, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn envelope_scaling() {
        let model = RegressionModel::toy(NoiseSpec::toy_mixture());
        let info = toy_info(&model, 1.0);
        let f = |x: &[f64]| 0.5 * model.truth.eval(x);
        let a = comparison_gap(&f, &model, s(10.0), &info, 20_000, 4).unwrap();
        let b = comparison_gap(&f, &model, s(20.0), &info, 20_000, 4).unwrap();
        assert!((b.rhs / a.rhs - 0.5).abs() < 1e-14);
        let m1 = markov_tail_check(&model, s(10.0), &info, 1000, 1).unwrap();
        let m2 = markov_tail_check(&model, s(20.0), &info, 1000, 1).unwrap();
        assert!((m1.rhs / m2.rhs - 4.0).abs() < 1e-12);
    }

    #[test]
    fn bernstein_exponent_vanishes_below_one() {
        let model = RegressionModel::toy(NoiseSpec::toy_mixture());
        let info = toy_info(&model, 0.7);
        let f = |x: &[f64]| 0.9 * model.truth.eval(x);
        let sigma = s(12.0);
        let check = relaxed_bernstein_check(&f, &model, sigma, &info, 20_000, 9).unwrap();
        let expect = 2.0 * info.c1().unwrap() + info.c2().unwrap() * 12f64.powf(0.3);
        assert!((check.rhs - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn variance_second_term_exponent() {
        let model = RegressionModel::toy(NoiseSpec::StudentT { df: 4.0, scale: 1.0 });
        let info = toy_info(&model, 2.5);
        let truth = |x: &[f64]| model.truth.eval(x);
        let check = variance_bound_check(&truth, &model, s(10.0), &info, 1000, 2).unwrap();
        // f = f*: the first term is c₁·0^{3/7} = 0.
        assert!((check.rhs - info.c2().unwrap() * 10f64.powf(-1.5)).abs() < 1e-9 * check.rhs);
    }

    #[test]
    fn checks_hold_on_toy_model() {
        let model = RegressionModel::toy(NoiseSpec::toy_mixture());
        let info = toy_info(&model, 1.0);
        let f = |x: &[f64]| 1.0 - 0.3 * x[0];
        let checks = all_bound_checks(&f, &model, s(10.0), &info, 200_000, 17).unwrap();
        assert!(checks.all_satisfied(), "{checks:?}");
        let markov = markov_tail_check(&model, s(5.0), &info, 200_000, 5).unwrap();
        assert!(markov.satisfied);
        let far = markov_tail_check(&model, s(1e6), &info, 10_000, 5).unwrap();
        assert_eq!(far.lhs, 0.0);
    }

    #[test]
    fn heteroscedastic_constant_model_moment() {
        let model = RegressionModel {
            truth: TruthFn::Constant { value: 1.0 },
            het_scale: ScaleFn::Constant { value: 0.0 },
            noise: NoiseSpec::Example1,
            domain: BoxDomain::unit(1),
            bound: 1.0,
        };
        let info = MomentInfo::for_model(&model, 1.0, 1.0).unwrap();
        assert!((info.moment().unwrap() - 1.0).abs() < 1e-12);
    }
}
