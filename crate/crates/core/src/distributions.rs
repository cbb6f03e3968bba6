//! Noise families, exact samplers and synthetic regression data for
//! `Y = f*(X) + s(X)·ε`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::distr::{Distribution, Open01};
use rand::Rng as _;
use rand_distr::{Normal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::quadrature::{integrate_with_breaks, QuadOptions};
use crate::seed::{derive_seed, rng_from_seed, Rng};

/// Location of the density's jump in the asymmetric exponential family.
const EXAMPLE1_JOINT: f64 = -0.25;

/// `E|ε|^p`, or an explicit marker when the moment diverges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn is_finite(&self) -> bool {
        matches!(self, Moment::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Moment::Finite(v) => Some(v),
            Moment::Infinite => None,
        }
    }
}

/// Density of the asymmetric exponential noise: `½e^{−(t+¼)}` for `t ≥ −¼`,
/// `e^{2(t+¼)}` below. Zero mean, median `−¼`.
pub fn example1_pdf(t: f64) -> Result<f64> {
    ensure_finite(t, "t")?;
    Ok(example1_pdf_raw(t))
}

#[inline]
fn example1_pdf_raw(t: f64) -> f64 {
    let s = t - EXAMPLE1_JOINT;
    if s >= 0.0 {
        0.5 * (-s).exp()
    } else {
        (2.0 * s).exp()
    }
}

pub fn example1_cdf(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    let s = t - EXAMPLE1_JOINT;
    if s < 0.0 {
        0.5 * (2.0 * s).exp()
    } else {
        1.0 - 0.5 * (-s).exp()
    }
}

/// Exact inverse of [`example1_cdf`] on `(0, 1)`.
pub fn example1_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(invalid(format!("quantile level must lie in (0, 1), got {u}")));
    }
    Ok(example1_quantile_raw(u))
}

#[inline]
fn example1_quantile_raw(u: f64) -> f64 {
    if u < 0.5 {
        EXAMPLE1_JOINT + 0.5 * (2.0 * u).ln()
    } else {
        EXAMPLE1_JOINT - (2.0 * (1.0 - u)).ln()
    }
}

/// Zero-mean noise families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// The fixed asymmetric exponential density of [`example1_pdf`].
    Example1,
    /// `Σ w_k N(μ_k, s_k²)`; the weighted means must cancel.
    GaussMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        stds: Vec<f64>,
    },
    /// Student-t with `df > 1` degrees of freedom, scaled by `scale`.
    StudentT { df: f64, scale: f64 },
    /// Random sign times a Pareto variable with minimum `scale`.
    SymmetricPareto { tail_index: f64, scale: f64 },
}

impl NoiseSpec {
    /// The mixture `0.5 N(0, 2.5²) + 0.5 N(0, 0.5²)`.
    pub fn toy_mixture() -> Self {
        NoiseSpec::GaussMixture {
            weights: vec![0.5, 0.5],
            means: vec![0.0, 0.0],
            stds: vec![2.5, 0.5],
        }
    }

    pub fn gaussian(std: f64) -> Self {
        NoiseSpec::GaussMixture {
            weights: vec![1.0],
            means: vec![0.0],
            stds: vec![std],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::Example1 => Ok(()),
            NoiseSpec::GaussMixture {
                weights,
                means,
                stds,
            } => {
                if weights.is_empty() {
                    return Err(invalid("gauss mixture needs at least one component"));
                }
                if weights.len() != means.len() || weights.len() != stds.len() {
                    return Err(invalid("gauss mixture weights, means and stds differ in length"));
                }
                for ((&w, &m), &s) in weights.iter().zip(means).zip(stds) {
                    ensure_finite(w, "mixture weight")?;
                    ensure_finite(m, "mixture mean")?;
                    ensure_finite(s, "mixture std")?;
                    if w < 0.0 {
                        return Err(invalid(format!("mixture weight {w} is negative")));
                    }
                    if s <= 0.0 {
                        return Err(invalid(format!("mixture std {s} must be positive")));
                    }
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("mixture weights sum to {total}, not 1")));
                }
                let mean: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
                let spread: f64 = weights.iter().zip(means).map(|(w, m)| (w * m).abs()).sum();
                if mean.abs() > 1e-12 * (1.0 + spread) {
                    return Err(invalid(format!("mixture mean is {mean}, noise must be centred")));
                }
                Ok(())
            }
            NoiseSpec::StudentT { df, scale } => {
                ensure_finite(*df, "df")?;
                ensure_finite(*scale, "scale")?;
                if *df <= 1.0 {
                    return Err(invalid(format!("student-t df must exceed 1, got {df}")));
                }
                if *scale <= 0.0 {
                    return Err(invalid(format!("student-t scale must be positive, got {scale}")));
                }
                Ok(())
            }
            NoiseSpec::SymmetricPareto { tail_index, scale } => {
                ensure_finite(*tail_index, "tail_index")?;
                ensure_finite(*scale, "scale")?;
                if *tail_index <= 1.0 {
                    return Err(invalid(format!("pareto tail index must exceed 1, got {tail_index}")));
                }
                if *scale <= 0.0 {
                    return Err(invalid(format!("pareto scale must be positive, got {scale}")));
                }
                Ok(())
            }
        }
    }

    /// Whether the density is symmetric about zero.
    pub fn is_symmetric(&self) -> bool {
        match self {
            NoiseSpec::Example1 => false,
            NoiseSpec::GaussMixture { means, .. } => means.iter().all(|m| *m == 0.0),
            NoiseSpec::StudentT { .. } | NoiseSpec::SymmetricPareto { .. } => true,
        }
    }

    /// Supremum of moment orders that are finite (`∞` for light tails).
    pub fn tail_exponent(&self) -> f64 {
        match self {
            NoiseSpec::Example1 | NoiseSpec::GaussMixture { .. } => f64::INFINITY,
            NoiseSpec::StudentT { df, .. } => *df,
            NoiseSpec::SymmetricPareto { tail_index, .. } => *tail_index,
        }
    }

    /// Points where the density or its derivative is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            NoiseSpec::Example1 => vec![EXAMPLE1_JOINT],
            NoiseSpec::SymmetricPareto { scale, .. } => vec![-scale, *scale],
            _ => Vec::new(),
        }
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match self {
            NoiseSpec::Example1 => example1_pdf_raw(t),
            NoiseSpec::GaussMixture {
                weights,
                means,
                stds,
            } => weights
                .iter()
                .zip(means)
                .zip(stds)
                .map(|((w, m), s)| {
                    let z = (t - m) / s;
                    w * (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
                })
                .sum(),
            NoiseSpec::StudentT { df, scale } => {
                let z = t / scale;
                let log_norm = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln();
                (log_norm - 0.5 * (df + 1.0) * (z * z / df).ln_1p()).exp() / scale
            }
            NoiseSpec::SymmetricPareto { tail_index, scale } => {
                let a = t.abs();
                if a < *scale {
                    0.0
                } else {
                    0.5 * tail_index * scale.powf(*tail_index) / a.powf(tail_index + 1.0)
                }
            }
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            NoiseSpec::Example1 => example1_cdf(t),
            NoiseSpec::GaussMixture {
                weights,
                means,
                stds,
            } => weights
                .iter()
                .zip(means)
                .zip(stds)
                .map(|((w, m), s)| w * 0.5 * erfc(-(t - m) / s * FRAC_1_SQRT_2))
                .sum(),
            NoiseSpec::StudentT { df, scale } => StudentsT::new(0.0, *scale, *df)
                .map(|d| d.cdf(t))
                .unwrap_or(f64::NAN),
            NoiseSpec::SymmetricPareto { tail_index, scale } => {
                if t <= -scale {
                    0.5 * (scale / -t).powf(*tail_index)
                } else if t < *scale {
                    0.5
                } else {
                    1.0 - 0.5 * (scale / t).powf(*tail_index)
                }
            }
        }
    }

    /// Append `n` i.i.d. draws to `out`. The spec must already be validated.
    pub(crate) fn sample_into(&self, rng: &mut Rng, n: usize, out: &mut Vec<f64>) {
        out.reserve(n);
        match self {
            NoiseSpec::Example1 => {
                for _ in 0..n {
                    let u: f64 = Open01.sample(rng);
                    out.push(example1_quantile_raw(u));
                }
            }
            NoiseSpec::GaussMixture {
                weights,
                means,
                stds,
            } => {
                let comps: Vec<Normal<f64>> = means
                    .iter()
                    .zip(stds)
                    .map(|(m, s)| Normal::new(*m, *s).expect("validated mixture component"))
                    .collect();
                let mut cumulative = Vec::with_capacity(weights.len());
                let mut acc = 0.0;
                for w in weights {
                    acc += w;
                    cumulative.push(acc);
                }
                for _ in 0..n {
                    let k = if comps.len() == 1 {
                        0
                    } else {
                        let u: f64 = rng.random();
                        cumulative
                            .iter()
                            .position(|c| u < *c)
                            .unwrap_or(comps.len() - 1)
                    };
                    out.push(comps[k].sample(rng));
                }
            }
            NoiseSpec::StudentT { df, scale } => {
                let t = StudentT::new(*df).expect("validated student-t df");
                for _ in 0..n {
                    out.push(scale * t.sample(rng));
                }
            }
            NoiseSpec::SymmetricPareto { tail_index, scale } => {
                let inv = -1.0 / tail_index;
                for _ in 0..n {
                    let u: f64 = Open01.sample(rng);
                    let magnitude = scale * u.powf(inv);
                    out.push(if rng.random::<bool>() { magnitude } else { -magnitude });
                }
            }
        }
    }

    /// `E|ε|^p`: closed forms for the Gaussian mixture (centred components),
    /// Student-t and Pareto families, adaptive quadrature otherwise.
    pub fn moment(&self, p: f64) -> Result<Moment> {
        ensure_finite(p, "moment order")?;
        if p <= 0.0 {
            return Err(invalid(format!("moment order must be positive, got {p}")));
        }
        self.validate()?;
        match self {
            NoiseSpec::StudentT { df, scale } => {
                if p >= *df {
                    return Ok(Moment::Infinite);
                }
                let log_m = 0.5 * p * df.ln() + ln_gamma(0.5 * (p + 1.0)) + ln_gamma(0.5 * (df - p))
                    - 0.5 * PI.ln()
                    - ln_gamma(0.5 * df);
                Ok(Moment::Finite(scale.powf(p) * log_m.exp()))
            }
            NoiseSpec::SymmetricPareto { tail_index, scale } => {
                if p >= *tail_index {
                    return Ok(Moment::Infinite);
                }
                Ok(Moment::Finite(tail_index * scale.powf(p) / (tail_index - p)))
            }
            NoiseSpec::GaussMixture {
                weights,
                means,
                stds,
            } if means.iter().all(|m| *m == 0.0) => {
                let abs_normal = (0.5 * p * 2f64.ln() + ln_gamma(0.5 * (p + 1.0)) - 0.5 * PI.ln()).exp();
                Ok(Moment::Finite(
                    weights
                        .iter()
                        .zip(stds)
                        .map(|(w, s)| w * s.powf(p) * abs_normal)
                        .sum(),
                ))
            }
            _ => self.abs_moment_by_quadrature(p).map(Moment::Finite),
        }
    }

    /// `∫|t|^p pdf(t) dt` by adaptive quadrature.
    pub fn abs_moment_by_quadrature(&self, p: f64) -> Result<f64> {
        let mut breaks = self.breakpoints();
        breaks.push(0.0);
        let opts = QuadOptions::default()
            .with_abs_tol(1e-13)
            .with_rel_tol(1e-12)
            .with_tail_decay(self.tail_exponent() - p);
        integrate_with_breaks(
            |t| {
                let d = self.pdf(t);
                if d == 0.0 {
                    0.0
                } else {
                    t.abs().powf(p) * d
                }
            },
            f64::NEG_INFINITY,
            f64::INFINITY,
            &breaks,
            &opts,
        )
        .map(|r| r.value)
    }

    /// `∫ pdf` over the real line by quadrature.
    pub fn total_mass(&self) -> Result<f64> {
        let opts = QuadOptions::default().with_abs_tol(1e-13).with_rel_tol(1e-13);
        integrate_with_breaks(
            |t| self.pdf(t),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &self.breakpoints(),
            &opts,
        )
        .map(|r| r.value)
    }

    /// `E ε` by quadrature, folded as `∫₀^∞ t (p(t) − p(−t)) dt` so symmetric
    /// families are exactly zero.
    pub fn mean(&self) -> Result<f64> {
        let breaks: Vec<f64> = self.breakpoints().iter().map(|b| b.abs()).collect();
        let opts = QuadOptions::default().with_abs_tol(1e-13).with_rel_tol(1e-12);
        integrate_with_breaks(
            |t| t * (self.pdf(t) - self.pdf(-t)),
            0.0,
            f64::INFINITY,
            &breaks,
            &opts,
        )
        .map(|r| r.value)
    }
}

/// `n` i.i.d. draws of `spec`, reproducible from `seed`.
pub fn sample_noise(spec: &NoiseSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(n);
    spec.sample_into(&mut rng, n, &mut out);
    Ok(out)
}

pub fn moment(spec: &NoiseSpec, p: f64) -> Result<Moment> {
    spec.moment(p)
}

/// One-sample Kolmogorov–Smirnov distance between `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Axis-aligned input box `∏[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(invalid("domain needs matching, nonempty lo and hi"));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            ensure_finite(*l, "domain lower corner")?;
            ensure_finite(*h, "domain upper corner")?;
            if l >= h {
                return Err(invalid(format!("degenerate domain side [{l}, {h}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| {
                let slack = 1e-12 * (h - l);
                *v >= l - slack && *v <= h + slack
            })
    }

    /// Tensor grid with `per_axis` points per side, row-major in the first axis.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| {
                if per_axis <= 1 {
                    vec![0.5 * (l + h)]
                } else {
                    (0..per_axis)
                        .map(|i| l + (h - l) * i as f64 / (per_axis - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let mut points = vec![Vec::with_capacity(self.dim())];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        points
    }

    pub(crate) fn sample_into(&self, rng: &mut Rng, out: &mut Vec<f64>) {
        for (l, h) in self.lo.iter().zip(&self.hi) {
            let u: f64 = rng.random();
            out.push(l + (h - l) * u);
        }
    }
}

/// Conditional mean `f*`, acting on the first input coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthFn {
    /// `amplitude · sin(frequency · π · x₀)`
    Sine { amplitude: f64, frequency: f64 },
    Constant { value: f64 },
    Linear { intercept: f64, slope: f64 },
}

impl TruthFn {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let x0 = x[0];
        match *self {
            TruthFn::Sine {
                amplitude,
                frequency,
            } => amplitude * (frequency * PI * x0).sin(),
            TruthFn::Constant { value } => value,
            TruthFn::Linear { intercept, slope } => intercept + slope * x0,
        }
    }
}

/// Heteroscedastic noise scale `s(x) ≥ 0`, acting on the first coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleFn {
    Constant { value: f64 },
    Linear { intercept: f64, slope: f64 },
}

impl ScaleFn {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            ScaleFn::Constant { value } => value,
            ScaleFn::Linear { intercept, slope } => intercept + slope * x[0],
        }
    }
}

/// `Y = f*(X) + s(X)·ε` with `X` uniform on `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionModel {
    pub truth: TruthFn,
    pub het_scale: ScaleFn,
    pub noise: NoiseSpec,
    pub domain: BoxDomain,
    /// Sup-norm bound `M ≥ ‖f*‖∞`.
    pub bound: f64,
}

impl RegressionModel {
    /// `Y = 2 sin(πX) + (1 + 2X) ε` on `[0, 1]`.
    pub fn toy(noise: NoiseSpec) -> Self {
        Self {
            truth: TruthFn::Sine {
                amplitude: 2.0,
                frequency: 1.0,
            },
            het_scale: ScaleFn::Linear {
                intercept: 1.0,
                slope: 2.0,
            },
            noise,
            domain: BoxDomain::unit(1),
            bound: 2.0,
        }
    }

    /// `Y = 2 sin(πX) + ε` on `[0, 1]`.
    pub fn homoscedastic_sine(noise: NoiseSpec) -> Self {
        Self {
            het_scale: ScaleFn::Constant { value: 1.0 },
            ..Self::toy(noise)
        }
    }

    /// `Y = value + ε` on `[0, 1]`.
    pub fn constant(value: f64, noise: NoiseSpec) -> Self {
        Self {
            truth: TruthFn::Constant { value },
            het_scale: ScaleFn::Constant { value: 1.0 },
            noise,
            domain: BoxDomain::unit(1),
            bound: value.abs().max(f64::MIN_POSITIVE),
        }
    }

    pub fn is_homoscedastic(&self) -> bool {
        matches!(self.het_scale, ScaleFn::Constant { .. })
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.domain.validate()?;
        ensure_finite(self.bound, "model bound")?;
        if self.bound <= 0.0 {
            return Err(invalid("model bound M must be positive"));
        }
        let per_axis = if self.domain.dim() == 1 { 2001 } else { 41 };
        let mut sup = 0.0f64;
        for x in self.domain.grid(per_axis) {
            let f = self.truth.eval(&x);
            let s = self.het_scale.eval(&x);
            if !f.is_finite() || !s.is_finite() {
                return Err(invalid(format!("model is not finite at {x:?}")));
            }
            if s < 0.0 {
                return Err(invalid(format!("noise scale is negative at {x:?}")));
            }
            sup = sup.max(f.abs());
        }
        if sup > self.bound * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "model bound M = {} is below sup|f*| = {sup}",
                self.bound
            )));
        }
        Ok(())
    }

    /// `E|Y|^p` by nested quadrature over `x₀` and the noise.
    pub fn response_moment(&self, p: f64) -> Result<Moment> {
        ensure_finite(p, "moment order")?;
        if p <= 0.0 {
            return Err(invalid(format!("moment order must be positive, got {p}")));
        }
        self.validate()?;
        if !self.noise.moment(p)?.is_finite() {
            return Ok(Moment::Infinite);
        }
        let (lo, hi) = (self.domain.lo[0], self.domain.hi[0]);
        let noise_breaks = self.noise.breakpoints();
        let inner_opts = QuadOptions::default()
            .with_abs_tol(1e-13)
            .with_rel_tol(1e-11)
            .with_tail_decay(self.noise.tail_exponent() - p);
        let outer_opts = QuadOptions::default().with_abs_tol(1e-12).with_rel_tol(1e-9);
        let base = self.domain.lo.clone();
        let failure = std::cell::RefCell::new(None);
        let outer = integrate_with_breaks(
            |x0| {
                let mut x = base.clone();
                x[0] = x0;
                let f = self.truth.eval(&x);
                let s = self.het_scale.eval(&x);
                if s == 0.0 {
                    return f.abs().powf(p);
                }
                let mut breaks = noise_breaks.clone();
                breaks.push(-f / s);
                match integrate_with_breaks(
                    |t| {
                        let d = self.noise.pdf(t);
                        if d == 0.0 {
                            0.0
                        } else {
                            (f + s * t).abs().powf(p) * d
                        }
                    },
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                    &breaks,
                    &inner_opts,
                ) {
                    Ok(r) => r.value,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            lo,
            hi,
            &[],
            &outer_opts,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(Moment::Finite(outer?.value / (hi - lo)))
    }
}

/// i.i.d. observations stored row-major: `x(i)` is `xs[i*dim..(i+1)*dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.xs.chunks_exact(self.dim.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dataset dimension must be positive"));
        }
        if self.xs.len() != self.dim * self.ys.len() {
            return Err(invalid("dataset inputs and responses differ in length"));
        }
        if self.xs.iter().chain(&self.ys).any(|v| !v.is_finite()) {
            return Err(invalid("dataset contains non-finite entries"));
        }
        Ok(())
    }
}

/// `n` draws from `model`, bit-identical for equal seeds.
///
/// Inputs and noise use independent streams derived from `seed`.
pub fn generate_dataset(model: &RegressionModel, n: usize, seed: u64) -> Result<Dataset> {
    model.validate()?;
    let dim = model.domain.dim();
    let mut x_rng = rng_from_seed(derive_seed(seed, 0));
    let mut xs = Vec::with_capacity(n * dim);
    for _ in 0..n {
        model.domain.sample_into(&mut x_rng, &mut xs);
    }
    let noise = sample_noise(&model.noise, n, derive_seed(seed, 1))?;
    let ys: Vec<f64> = xs
        .chunks_exact(dim)
        .zip(&noise)
        .map(|(x, e)| model.truth.eval(x) + model.het_scale.eval(x) * e)
        .collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Numerical("generated a non-finite response".into()));
    }
    Ok(Dataset { dim, xs, ys, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force composite Simpson on `[a, b]` with `m` panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let m = m + m % 2;
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    fn left_branch(t: f64) -> f64 {
        (2.0 * (t + 0.25)).exp()
    }

    fn right_branch(t: f64) -> f64 {
        0.5 * (-(t + 0.25)).exp()
    }

    fn all_specs() -> Vec<NoiseSpec> {
        vec![
            NoiseSpec::Example1,
            NoiseSpec::toy_mixture(),
            NoiseSpec::gaussian(1.3),
            NoiseSpec::StudentT { df: 1.5, scale: 1.0 },
            NoiseSpec::StudentT { df: 4.0, scale: 0.7 },
            NoiseSpec::SymmetricPareto {
                tail_index: 2.5,
                scale: 1.0,
            },
            NoiseSpec::SymmetricPareto {
                tail_index: 1.3,
                scale: 0.5,
            },
        ]
    }

    #[test]
    fn example1_pdf_values() {
        assert_eq!(example1_pdf(-0.25).unwrap(), 0.5);
        assert!((example1_pdf(0.75).unwrap() - 0.5 * (-1f64).exp()).abs() < 1e-15);
        assert!((example1_pdf(0.75).unwrap() - 0.183940).abs() < 1e-6);
        assert!(example1_pdf(f64::NAN).is_err());
    }

    #[test]
    fn example1_mass_by_brute_force() {
        // Piecewise Simpson on a truncated range; tails beyond are below 1e-14.
        // Each side uses its own branch so the jump at −¼ is not sampled.
        let left = simpson(left_branch, -20.0, -0.25, 200_000);
        let right = simpson(right_branch, -0.25, 40.0, 400_000);
        assert!((left - 0.5).abs() < 1e-10);
        assert!((right - 0.5).abs() < 1e-10);
        assert!((NoiseSpec::Example1.total_mass().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn example1_cdf_and_quantile() {
        assert_eq!(example1_cdf(-0.25), 0.5);
        assert_eq!(example1_quantile(0.5).unwrap(), -0.25);
        assert!((example1_cdf(50.0) - 1.0).abs() < 1e-12);
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(example1_quantile(u).is_err());
        }
        // The upper tail loses digits in 1 − u, so the round trip stops at 5.
        for t in [-30.0, -3.0, -0.26, -0.25, -0.1, 0.0, 0.9, 5.0] {
            let back = example1_quantile(example1_cdf(t)).unwrap();
            assert!((back - t).abs() < 1e-12 * (1.0 + t.abs()), "t={t} back={back}");
        }
    }

    #[test]
    fn example1_second_moment_closed_form() {
        // ½∫₀^∞(s−¼)²e^{−s}ds + ∫₀^∞(s+¼)²e^{−2s}ds = 25/32 + 13/32
        let brute = simpson(|t| t * t * left_branch(t), -40.0, -0.25, 400_000)
            + simpson(|t| t * t * right_branch(t), -0.25, 60.0, 600_000);
        assert!((brute - 19.0 / 16.0).abs() < 1e-9);
        let m = NoiseSpec::Example1.moment(2.0).unwrap().value().unwrap();
        assert!((m - 1.1875).abs() < 1e-8);
    }

    #[test]
    fn moment_examples() {
        let m = NoiseSpec::toy_mixture().moment(2.0).unwrap().value().unwrap();
        assert!((m - 3.25).abs() < 1e-12);
        assert_eq!(
            NoiseSpec::StudentT { df: 1.5, scale: 1.0 }.moment(2.0).unwrap(),
            Moment::Infinite
        );
        assert_eq!(
            NoiseSpec::SymmetricPareto {
                tail_index: 2.0,
                scale: 1.0
            }
            .moment(2.0)
            .unwrap(),
            Moment::Infinite
        );
        assert!(NoiseSpec::Example1.moment(0.0).is_err());
        assert!(NoiseSpec::Example1.moment(-1.0).is_err());
    }

    #[test]
    fn closed_form_moments_match_quadrature() {
        let cases = [
            (NoiseSpec::toy_mixture(), 1.5),
            (NoiseSpec::toy_mixture(), 3.0),
            (NoiseSpec::StudentT { df: 4.0, scale: 0.7 }, 2.0),
            (NoiseSpec::StudentT { df: 3.0, scale: 1.0 }, 1.0),
            (NoiseSpec::StudentT { df: 2.5, scale: 1.0 }, 1.2),
            (
                NoiseSpec::SymmetricPareto {
                    tail_index: 2.5,
                    scale: 1.0,
                },
                1.5,
            ),
        ];
        for (spec, p) in cases {
            let closed = spec.moment(p).unwrap().value().unwrap();
            let quad = spec.abs_moment_by_quadrature(p).unwrap();
            assert!(
                (closed - quad).abs() < 1e-8 * closed.max(1.0),
                "{spec:?} p={p}: closed {closed} quad {quad}"
            );
        }
    }

    #[test]
    fn moment_regime_matches_tails() {
        for spec in all_specs() {
            let tail = spec.tail_exponent();
            for p in [0.5, 1.0, 1.2, 1.4, 2.0, 2.4, 3.0, 5.0] {
                let m = spec.moment(p).unwrap();
                assert_eq!(m.is_finite(), p < tail, "{spec:?} p={p}");
            }
        }
    }

    #[test]
    fn every_family_normalised_and_centred() {
        for spec in all_specs() {
            let mass = spec.total_mass().unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "{spec:?} mass {mass}");
            let mean = spec.mean().unwrap();
            assert!(mean.abs() < 1e-8, "{spec:?} mean {mean}");
        }
    }

    #[test]
    fn example1_mean_halves() {
        // +3/8 above the joint, −3/8 below.
        let opts = QuadOptions::default();
        let upper = integrate_with_breaks(|t| t * example1_pdf_raw(t), -0.25, f64::INFINITY, &[], &opts)
            .unwrap()
            .value;
        assert!((upper - 0.375).abs() < 1e-12);
    }

    #[test]
    fn cdf_is_integral_of_pdf() {
        for spec in all_specs() {
            for t in [-3.0, -1.0, -0.25, 0.3, 2.0] {
                let mut breaks = spec.breakpoints();
                breaks.push(0.0);
                let int = integrate_with_breaks(
                    |u| spec.pdf(u),
                    f64::NEG_INFINITY,
                    t,
                    &breaks,
                    &QuadOptions::default().with_abs_tol(1e-12),
                )
                .unwrap()
                .value;
                assert!((int - spec.cdf(t)).abs() < 1e-8, "{spec:?} t={t}: {int} vs {}", spec.cdf(t));
            }
        }
    }

    #[test]
    fn sample_noise_contracts() {
        assert!(sample_noise(&NoiseSpec::Example1, 0, 1).unwrap().is_empty());
        let a = sample_noise(&NoiseSpec::toy_mixture(), 100, 9).unwrap();
        let b = sample_noise(&NoiseSpec::toy_mixture(), 100, 9).unwrap();
        assert_eq!(a, b);
        assert!(sample_noise(&NoiseSpec::StudentT { df: 0.5, scale: 1.0 }, 10, 1).is_err());
        let bad_mix = NoiseSpec::GaussMixture {
            weights: vec![0.5, 0.6],
            means: vec![0.0, 0.0],
            stds: vec![1.0, 1.0],
        };
        assert!(sample_noise(&bad_mix, 10, 1).is_err());
    }

    #[test]
    fn example1_sample_mean_is_zero() {
        let n = 1_000_000;
        let xs = sample_noise(&NoiseSpec::Example1, n, 20240601).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (19.0f64 / 16.0).sqrt();
        assert!(mean.abs() < 4.0 * sd / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn samplers_pass_ks() {
        let n = 100_000;
        for (i, spec) in all_specs().into_iter().enumerate() {
            let xs = sample_noise(&spec, n, 1000 + i as u64).unwrap();
            let d = ks_statistic(&xs, |t| spec.cdf(t));
            assert!(d < 1.95 / (n as f64).sqrt(), "{spec:?}: KS {d}");
        }
    }

    #[test]
    fn dataset_generation() {
        let model = RegressionModel::toy(NoiseSpec::toy_mixture());
        let empty = generate_dataset(&model, 0, 3).unwrap();
        assert!(empty.is_empty() && empty.xs.is_empty());
        let a = generate_dataset(&model, 500, 3).unwrap();
        let b = generate_dataset(&model, 500, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_dataset(&model, 500, 4).unwrap());
        a.validate().unwrap();
        assert!(a.inputs().all(|x| model.domain.contains(x)));
    }

    #[test]
    fn toy_residual_mean_is_zero() {
        let model = RegressionModel::toy(NoiseSpec::toy_mixture());
        let n = 1_000_000;
        let data = generate_dataset(&model, n, 77).unwrap();
        let resid: Vec<f64> = data
            .inputs()
            .zip(&data.ys)
            .map(|(x, y)| y - 2.0 * (PI * x[0]).sin())
            .collect();
        let mean = resid.iter().sum::<f64>() / n as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * (var / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn model_validation() {
        let mut model = RegressionModel::toy(NoiseSpec::Example1);
        model.validate().unwrap();
        model.bound = 1.5;
        assert!(model.validate().is_err());
        let mut neg = RegressionModel::toy(NoiseSpec::Example1);
        neg.het_scale = ScaleFn::Linear {
            intercept: -1.0,
            slope: 0.5,
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn response_moment_homoscedastic_constant() {
        // Y = ε when f* = 0 and s = 1.
        let model = RegressionModel {
            truth: TruthFn::Constant { value: 0.0 },
            bound: 1.0,
            ..RegressionModel::constant(0.0, NoiseSpec::Example1)
        };
        let m = model.response_moment(2.0).unwrap().value().unwrap();
        assert!((m - 1.1875).abs() < 1e-8);
    }

    #[test]
    fn response_moment_matches_monte_carlo() {
        let model = RegressionModel::toy(NoiseSpec::toy_mixture());
        let exact = model.response_moment(2.0).unwrap().value().unwrap();
        // E Y² = E[4 sin²(πX)] + E[(1+2X)²]·3.25 = 2 + (13/3)·3.25
        assert!((exact - (2.0 + 13.0 / 3.0 * 3.25)).abs() < 1e-8, "{exact}");
        let heavy = RegressionModel::toy(NoiseSpec::StudentT { df: 1.5, scale: 1.0 });
        assert_eq!(heavy.response_moment(1.5).unwrap(), Moment::Infinite);
        assert!(heavy.response_moment(1.4).unwrap().is_finite());
    }

    #[test]
    fn grid_shapes() {
        let d = BoxDomain::unit(2);
        let g = d.grid(3);
        assert_eq!(g.len(), 9);
        assert!(g.iter().all(|p| d.contains(p)));
        assert_eq!(BoxDomain::interval(0.0, 2.0).grid(1), vec![vec![1.0]]);
    }
}
