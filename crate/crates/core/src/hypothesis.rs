//! Bounded hypothesis spaces spanned by Gaussian bumps plus a constant.
//!
//! A space is the Euclidean ball `‖β‖₂ ≤ R` of coefficient vectors over a
//! fixed dictionary `exp(−‖x − c_j‖²/h²)`, `j = 1..k`, followed by the
//! constant function. Outputs are clipped to `[−M, M]` at evaluation time.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distributions::{BoxDomain, Dataset};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::loss::ScaleParam;

/// Configuration for [`make_space`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub centers_per_axis: usize,
    pub bandwidth: f64,
    pub radius: f64,
    pub bound: f64,
    pub q: f64,
    /// Drop the bumps and keep only the constant function.
    #[serde(default)]
    pub constant_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisSpace {
    domain: BoxDomain,
    /// Row-major bump centers, `dim` values each.
    centers: Vec<f64>,
    bandwidth: f64,
    radius: f64,
    bound: f64,
    q: f64,
}

fn positive(value: f64, what: &str) -> Result<()> {
    ensure_finite(value, what)?;
    if value <= 0.0 {
        return Err(invalid(format!("{what} must be positive, got {value}")));
    }
    Ok(())
}

/// Uniform grid of bump centers over `domain` plus the constant function.
pub fn make_space(config: &SpaceConfig, domain: &BoxDomain) -> Result<HypothesisSpace> {
    if config.constant_only {
        return HypothesisSpace::constant_only(config.radius, config.bound, config.q, domain.clone());
    }
    domain.validate()?;
    if config.centers_per_axis == 0 {
        return Err(invalid("centers_per_axis must be at least 1"));
    }
    positive(config.bandwidth, "bandwidth")?;
    positive(config.radius, "radius")?;
    positive(config.bound, "bound")?;
    positive(config.q, "q")?;
    let centers = domain.grid(config.centers_per_axis).concat();
    Ok(HypothesisSpace {
        domain: domain.clone(),
        centers,
        bandwidth: config.bandwidth,
        radius: config.radius,
        bound: config.bound,
        q: config.q,
    })
}

impl HypothesisSpace {
    /// The space of constants `{β : |β| ≤ R}`.
    pub fn constant_only(radius: f64, bound: f64, q: f64, domain: BoxDomain) -> Result<Self> {
        domain.validate()?;
        positive(radius, "radius")?;
        positive(bound, "bound")?;
        positive(q, "q")?;
        Ok(Self {
            domain,
            centers: Vec::new(),
            bandwidth: 1.0,
            radius,
            bound,
            q,
        })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn num_bumps(&self) -> usize {
        self.centers.len() / self.dim()
    }

    /// Number of basis functions, the constant included.
    pub fn basis_len(&self) -> usize {
        self.num_bumps() + 1
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn center(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.centers[j * d..(j + 1) * d]
    }

    /// Basis values at `x` written into `out` (length [`Self::basis_len`]).
    #[inline]
    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let inv_h2 = 1.0 / (self.bandwidth * self.bandwidth);
        for (j, c) in self.centers.chunks_exact(d).enumerate() {
            let r2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            out[j] = (-r2 * inv_h2).exp();
        }
        out[self.num_bumps()] = 1.0;
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.basis_len()];
        self.features_into(x, &mut out);
        out
    }

    /// `n × p` design matrix of `data`.
    pub fn design_matrix(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        if data.dim != self.dim() {
            return Err(invalid(format!(
                "dataset dimension {} does not match space dimension {}",
                data.dim,
                self.dim()
            )));
        }
        let p = self.basis_len();
        let mut row = vec![0.0; p];
        let mut m = DMatrix::zeros(data.len(), p);
        for (i, x) in data.inputs().enumerate() {
            self.features_into(x, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }

    /// Unclipped `Σ β_j φ_j(x)`.
    #[inline]
    pub fn raw_value(&self, coeffs: &[f64], x: &[f64]) -> f64 {
        let d = self.dim();
        let inv_h2 = 1.0 / (self.bandwidth * self.bandwidth);
        let mut acc = coeffs[self.num_bumps()];
        for (c, b) in self.centers.chunks_exact(d).zip(coeffs) {
            let r2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            acc += b * (-r2 * inv_h2).exp();
        }
        acc
    }

    /// Default grid used to probe sup-norms over the domain.
    pub fn check_grid(&self) -> Vec<Vec<f64>> {
        let per_axis = match self.dim() {
            1 => 1001,
            2 => 101,
            3 => 21,
            _ => 7,
        };
        self.domain.grid(per_axis)
    }
}

/// How an estimator was fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Huber,
    LeastSquares,
    Lad,
    /// Coefficients supplied directly rather than fitted.
    Given,
}

/// Solver diagnostics carried by every [`Estimator`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub final_risk: f64,
    /// Empirical risk after initialisation and after every accepted step.
    pub risk_trace: Vec<f64>,
    pub converged: bool,
    pub used_fallback: bool,
    pub gradient_norm: f64,
    /// Coefficients were rescaled onto the radius ball.
    pub projected: bool,
    /// Unclipped fit exceeded `M` somewhere on the check grid.
    pub exceeds_bound: bool,
    pub warnings: Vec<String>,
}

/// A fitted (or given) element of a hypothesis space.
#[derive(Debug, Clone, Serialize)]
pub struct Estimator {
    #[serde(skip)]
    space: Arc<HypothesisSpace>,
    pub coeffs: Vec<f64>,
    pub sigma_used: Option<ScaleParam>,
    pub method: FitMethod,
    pub diagnostics: FitDiagnostics,
}

/// Value of an estimator at a point, with whether clipping was applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub clipped: bool,
}

impl Estimator {
    pub fn new(
        space: Arc<HypothesisSpace>,
        coeffs: Vec<f64>,
        sigma_used: Option<ScaleParam>,
        method: FitMethod,
        diagnostics: FitDiagnostics,
    ) -> Result<Self> {
        if coeffs.len() != space.basis_len() {
            return Err(invalid(format!(
                "expected {} coefficients, got {}",
                space.basis_len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("estimator coefficients are not finite".into()));
        }
        Ok(Self {
            space,
            coeffs,
            sigma_used,
            method,
            diagnostics,
        })
    }

    /// A fixed function of the space with the given coefficients.
    pub fn from_coeffs(space: Arc<HypothesisSpace>, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(space, coeffs, None, FitMethod::Given, FitDiagnostics::default())
    }

    pub fn space(&self) -> &Arc<HypothesisSpace> {
        &self.space
    }

    pub fn evaluate_detailed(&self, x: &[f64]) -> Result<Evaluation> {
        if !self.space.domain.contains(x) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        let raw = self.space.raw_value(&self.coeffs, x);
        let m = self.space.bound;
        Ok(Evaluation {
            value: raw.clamp(-m, m),
            clipped: raw.abs() > m,
        })
    }

    /// `clip(Σ β_j φ_j(x), −M, M)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.evaluate_detailed(x).map(|e| e.value)
    }

    /// Clipped values at every point together with the number of clipped points.
    pub fn evaluate_many<'a>(&self, xs: impl IntoIterator<Item = &'a [f64]>) -> Result<(Vec<f64>, usize)> {
        let mut clipped = 0;
        let values = xs
            .into_iter()
            .map(|x| {
                let e = self.evaluate_detailed(x)?;
                clipped += usize::from(e.clipped);
                Ok(e.value)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((values, clipped))
    }

    /// Clipped value without the domain check, for callers sampling inside the domain.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        let m = self.space.bound;
        self.space.raw_value(&self.coeffs, x).clamp(-m, m)
    }

    pub fn raw_value(&self, x: &[f64]) -> f64 {
        self.space.raw_value(&self.coeffs, x)
    }

    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

#[inline]
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

const MAX_COVER_POINTS: usize = 40_000;

/// Clipped value vectors on `eval_grid` of every coefficient vector on a
/// `resolution`-per-axis lattice of `[−R, R]^p` that lies in the radius ball.
pub fn discretized_function_set(
    space: &HypothesisSpace,
    resolution: usize,
    eval_grid: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if resolution < 2 {
        return Err(invalid("coefficient grid resolution must be at least 2"));
    }
    if eval_grid.is_empty() {
        return Err(invalid("evaluation grid must be nonempty"));
    }
    if eval_grid.iter().any(|x| !space.domain.contains(x)) {
        return Err(invalid("evaluation grid leaves the domain"));
    }
    let p = space.basis_len();
    let lattice = (resolution as f64).powi(p as i32);
    if lattice > 1e7 {
        return Err(invalid(format!(
            "coefficient lattice of {resolution}^{p} points is too large"
        )));
    }
    let r = space.radius;
    let axis: Vec<f64> = (0..resolution)
        .map(|i| -r + 2.0 * r * i as f64 / (resolution - 1) as f64)
        .collect();
    let features: Vec<Vec<f64>> = eval_grid.iter().map(|x| space.features(x)).collect();
    let m = space.bound;
    let mut out = Vec::new();
    let mut idx = vec![0usize; p];
    'outer: loop {
        let beta: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
        if beta.iter().map(|b| b * b).sum::<f64>() <= r * r * (1.0 + 1e-12) {
            out.push(
                features
                    .iter()
                    .map(|phi| phi.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().clamp(-m, m))
                    .collect(),
            );
            if out.len() > MAX_COVER_POINTS {
                return Err(invalid(format!(
                    "discretized set exceeds {MAX_COVER_POINTS} points; lower the resolution"
                )));
            }
        }
        for k in 0..p {
            idx[k] += 1;
            if idx[k] < resolution {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    Ok(out)
}

/// Greedy set-cover estimate of the sup-norm covering number `N(H, η)`.
///
/// The coefficient ball is discretized on a `coeff_grid_resolution` lattice,
/// functions are compared in sup-norm over `eval_grid`, and at each step the
/// candidate centre covering the most uncovered points is chosen.
pub fn covering_number_estimate(
    space: &HypothesisSpace,
    eta: f64,
    coeff_grid_resolution: usize,
    eval_grid: &[Vec<f64>],
) -> Result<usize> {
    ensure_finite(eta, "eta")?;
    if eta <= 0.0 {
        return Err(invalid(format!("eta must be positive, got {eta}")));
    }
    let set = discretized_function_set(space, coeff_grid_resolution, eval_grid)?;
    Ok(greedy_cover(&set, eta))
}

fn greedy_cover(points: &[Vec<f64>], eta: f64) -> usize {
    let g = points.len();
    let tol = eta * (1.0 + 1e-12);
    let neighbours: Vec<Vec<usize>> = (0..g)
        .map(|i| {
            (0..g)
                .filter(|&j| sup_distance(&points[i], &points[j]) <= tol)
                .collect()
        })
        .collect();
    let mut covered = vec![false; g];
    let mut gain: Vec<usize> = neighbours.iter().map(Vec::len).collect();
    let mut remaining = g;
    let mut centres = 0;
    while remaining > 0 {
        // Gains only shrink, so a stale maximum is refreshed until it is exact.
        let best = loop {
            let (i, &stale) = gain
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("nonempty");
            let fresh = neighbours[i].iter().filter(|&&j| !covered[j]).count();
            gain[i] = fresh;
            if fresh == stale {
                break i;
            }
        };
        for &j in &neighbours[best] {
            if !covered[j] {
                covered[j] = true;
                remaining -= 1;
            }
        }
        gain[best] = 0;
        centres += 1;
    }
    centres
}
