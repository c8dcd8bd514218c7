//! Probability paths that are straight lines in natural coordinates.
//!
//! A path connects the fixed prior (μ₀ = 0, σ₀ = 1 for coordinate blocks,
//! α₀ = 1 for categorical blocks) to a data-dependent endpoint by linear
//! interpolation of natural parameters: η_t = (1−t)·η₀ + t·η₁(t). Three
//! endpoint schedules are supported:
//!
//! * **evolving** — the endpoint tightens with path time,
//!   σ₁(t) = λ(1−t) + ε and α₁(t) = (1 − λ(1−t))·target + λ(1−t)/K, so the
//!   interpolant stays broad in the interior and collapses onto the target
//!   only at t = 1;
//! * **static** — a fixed near-singular endpoint (Gaussian σ₁, Dirichlet
//!   target-class concentration a₁), the baseline the evolving schedule is
//!   measured against;
//! * **sldm** — the degenerate straight-line case in which prior and endpoint
//!   share σ = ε, making the mean exactly affine in t. This is a statement
//!   about coordinate blocks only; categorical paths reject it.
//!
//! With the path time plugged in, the Gaussian interpolant in moment form is
//! σ_t² = ((1−t)/σ₀² + t/σ₁(t)²)⁻¹ and μ_t = σ_t²·((1−t)μ₀/σ₀² + t·x*/σ₁(t)²),
//! and the categorical one is α_t = (1−t)·α₀ + t·α₁(t). Tangents follow the
//! product rule: η̇_t = (η₁(t) − η₀) + t·η̇₁(t).

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default endpoint contraction rate λ of the evolving schedule.
pub const DEFAULT_LAMBDA: f64 = 0.2;

/// Default terminal scale ε shared by all schedules.
pub const DEFAULT_EPS: f64 = 1e-6;

/// How a path schedule parameterizes its data endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Evolving endpoint σ₁(t) = λ(1−t) + ε, α₁(t) mixed toward uniform.
    EvoEgf { lambda: f64, eps: f64 },
    /// Fixed endpoint: Gaussian scale σ₁ and Dirichlet target-class mass a₁.
    StaticEgf { sigma1: f64, alpha1: f64 },
    /// Degenerate straight-line case σ₀ = σ₁ = ε (coordinate blocks only).
    Sldm { eps: f64 },
}

/// A path schedule together with the fixed prior it starts from.
///
/// The prior is pinned to μ₀ = 0, σ₀ = 1 and α₀ = 1 — except under
/// [`ScheduleMode::Sldm`], where the prior scale is ε as well.
///
/// Serializes as its [`ScheduleMode`] so configuration files write the
/// tagged form directly; deserialization re-validates the rate constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleMode", into = "ScheduleMode")]
pub struct EvoSchedule {
    mode: ScheduleMode,
}

impl TryFrom<ScheduleMode> for EvoSchedule {
    type Error = Error;

    fn try_from(mode: ScheduleMode) -> Result<Self> {
        Self::from_mode(mode)
    }
}

impl From<EvoSchedule> for ScheduleMode {
    fn from(schedule: EvoSchedule) -> ScheduleMode {
        schedule.mode
    }
}

impl EvoSchedule {
    /// Evolving schedule; requires λ ∈ (0, 1] and ε > 0.
    pub fn evo(lambda: f64, eps: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 || lambda > 1.0 {
            return Err(Error::config(format!(
                "evolving schedule needs λ in (0, 1], got {lambda}"
            )));
        }
        check_eps(eps)?;
        Ok(Self {
            mode: ScheduleMode::EvoEgf { lambda, eps },
        })
    }

    /// Evolving schedule at the default rates (λ = 0.2, ε = 1e−6).
    pub fn evo_default() -> Self {
        Self::evo(DEFAULT_LAMBDA, DEFAULT_EPS).expect("defaults are valid")
    }

    /// Static schedule; requires σ₁ > 0 and a₁ > 0.
    pub fn static_egf(sigma1: f64, alpha1: f64) -> Result<Self> {
        if !sigma1.is_finite() || sigma1 <= 0.0 {
            return Err(Error::config(format!(
                "static schedule needs σ₁ > 0, got {sigma1}"
            )));
        }
        if !alpha1.is_finite() || alpha1 <= 0.0 {
            return Err(Error::config(format!(
                "static schedule needs a₁ > 0, got {alpha1}"
            )));
        }
        Ok(Self {
            mode: ScheduleMode::StaticEgf { sigma1, alpha1 },
        })
    }

    /// Straight-line degenerate schedule; requires ε > 0.
    pub fn sldm(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self {
            mode: ScheduleMode::Sldm { eps },
        })
    }

    /// Builds a schedule from its serializable mode description.
    pub fn from_mode(mode: ScheduleMode) -> Result<Self> {
        match mode {
            ScheduleMode::EvoEgf { lambda, eps } => Self::evo(lambda, eps),
            ScheduleMode::StaticEgf { sigma1, alpha1 } => Self::static_egf(sigma1, alpha1),
            ScheduleMode::Sldm { eps } => Self::sldm(eps),
        }
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    /// Prior mean (broadcast over coordinates).
    pub fn prior_mean(&self) -> f64 {
        0.0
    }

    /// Prior coordinate scale σ₀.
    pub fn prior_sigma(&self) -> f64 {
        match self.mode {
            ScheduleMode::Sldm { eps } => eps,
            _ => 1.0,
        }
    }

    /// Prior concentration α₀ (broadcast over classes).
    pub fn prior_alpha(&self) -> f64 {
        1.0
    }

    /// Endpoint scale σ₁(t).
    pub fn endpoint_sigma(&self, t: f64) -> f64 {
        match self.mode {
            ScheduleMode::EvoEgf { lambda, eps } => lambda * (1.0 - t) + eps,
            ScheduleMode::StaticEgf { sigma1, .. } => sigma1,
            ScheduleMode::Sldm { eps } => eps,
        }
    }

    /// dσ₁/dt.
    pub fn endpoint_sigma_dot(&self, _t: f64) -> f64 {
        match self.mode {
            ScheduleMode::EvoEgf { lambda, .. } => -lambda,
            _ => 0.0,
        }
    }

    /// Endpoint concentration α₁(t) for a simplex-valued target row.
    pub fn endpoint_alpha(&self, target: &[f64], t: f64) -> Result<Vec<f64>> {
        let k = target.len() as f64;
        match self.mode {
            ScheduleMode::EvoEgf { lambda, .. } => {
                let pull = lambda * (1.0 - t);
                Ok(target.iter().map(|v| (1.0 - pull) * v + pull / k).collect())
            }
            ScheduleMode::StaticEgf { alpha1, .. } => {
                Ok(target.iter().map(|v| 1.0 + (alpha1 - 1.0) * v).collect())
            }
            ScheduleMode::Sldm { .. } => Err(Error::domain(
                "the straight-line degenerate schedule defines coordinate paths only".to_string(),
            )),
        }
    }

    /// dα₁/dt for a simplex-valued target row.
    pub fn endpoint_alpha_dot(&self, target: &[f64], _t: f64) -> Result<Vec<f64>> {
        let k = target.len() as f64;
        match self.mode {
            ScheduleMode::EvoEgf { lambda, .. } => {
                Ok(target.iter().map(|v| lambda * (v - 1.0 / k)).collect())
            }
            ScheduleMode::StaticEgf { .. } => Ok(vec![0.0; target.len()]),
            ScheduleMode::Sldm { .. } => Err(Error::domain(
                "the straight-line degenerate schedule defines coordinate paths only".to_string(),
            )),
        }
    }

    /// Diagonal sensitivity ∂α_t/∂target — the chain-rule factor that maps a
    /// gradient in α_t back onto the predicted simplex row.
    pub fn alpha_target_sensitivity(&self, t: f64) -> Result<f64> {
        check_unit_interval(t)?;
        match self.mode {
            ScheduleMode::EvoEgf { lambda, .. } => Ok(t * (1.0 - lambda * (1.0 - t))),
            ScheduleMode::StaticEgf { alpha1, .. } => Ok(t * (alpha1 - 1.0)),
            ScheduleMode::Sldm { .. } => Err(Error::domain(
                "the straight-line degenerate schedule defines coordinate paths only".to_string(),
            )),
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::config(format!("schedule needs ε > 0, got {eps}")));
    }
    Ok(())
}

pub(crate) fn check_unit_interval(t: f64) -> Result<()> {
    if !t.is_finite() || !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("path time must lie in [0, 1], got {t}")));
    }
    Ok(())
}

fn check_target_finite(target: &[f64]) -> Result<()> {
    if target.is_empty() {
        return Err(Error::domain("path target must be non-empty"));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("path target must be finite"));
    }
    Ok(())
}

/// Validates an exact one-hot row: entries in {0, 1}, exactly one 1.
fn check_one_hot(target: &[f64]) -> Result<()> {
    if target.len() < 2 {
        return Err(Error::domain("categorical target needs at least two classes"));
    }
    let ones = target.iter().filter(|&&v| v == 1.0).count();
    if ones != 1 || target.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::domain(format!(
            "categorical data target must be one-hot, got {target:?}"
        )));
    }
    Ok(())
}

/// Validates a closed-simplex row: non-negative entries summing to 1.
fn check_closed_simplex(row: &[f64]) -> Result<()> {
    if row.len() < 2 {
        return Err(Error::domain("simplex row needs at least two classes"));
    }
    check_target_finite(row)?;
    if row.iter().any(|&v| v < 0.0) {
        return Err(Error::domain(format!(
            "simplex row must be non-negative, got {row:?}"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!("simplex row must sum to 1, got {sum}")));
    }
    Ok(())
}

/// Gaussian moments at one path time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPoint {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl GaussianPoint {
    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Natural coordinates `[η₁, η₂₁…η₂d]`.
    pub fn natural(&self) -> Vec<f64> {
        let mut eta = Vec::with_capacity(self.mean.len() + 1);
        eta.push(-0.5 / self.variance);
        eta.extend(self.mean.iter().map(|m| m / self.variance));
        eta
    }
}

/// Every block's path parameters at one time — the state the progressive
/// sampler carries between refinement steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    /// Coordinate block, if the state has one.
    pub gaussian: Option<GaussianPoint>,
    /// One concentration row per categorical site.
    pub types: Vec<Vec<f64>>,
    /// One concentration row per site pair.
    pub bonds: Vec<Vec<f64>>,
}

/// Coordinate-block path point at time t toward target x*.
///
/// Evaluated in precision form: σ_t² = ((1−t)/σ₀² + t/σ₁(t)²)⁻¹ and
/// μ_t = σ_t²·((1−t)·μ₀/σ₀² + t·x*/σ₁(t)²); the prior terms vanish for the
/// standard prior and keep the degenerate σ₀ = ε case exact.
pub fn gaussian_path(schedule: &EvoSchedule, target: &[f64], t: f64) -> Result<GaussianPoint> {
    check_unit_interval(t)?;
    check_target_finite(target)?;
    let s0 = schedule.prior_sigma();
    let s1 = schedule.endpoint_sigma(t);
    let precision = (1.0 - t) / (s0 * s0) + t / (s1 * s1);
    let variance = 1.0 / precision;
    let prior_pull = (1.0 - t) * schedule.prior_mean() / (s0 * s0);
    let mean = target
        .iter()
        .map(|x| variance * (prior_pull + t * x / (s1 * s1)))
        .collect();
    Ok(GaussianPoint { mean, variance })
}

/// Categorical-site path point for an exact one-hot data target.
pub fn dirichlet_path(schedule: &EvoSchedule, target: &[f64], t: f64) -> Result<Vec<f64>> {
    check_one_hot(target)?;
    dirichlet_path_unvalidated(schedule, target, t)
}

/// Categorical-site path point for a soft (predicted) simplex row.
pub fn dirichlet_path_soft(schedule: &EvoSchedule, target: &[f64], t: f64) -> Result<Vec<f64>> {
    check_closed_simplex(target)?;
    dirichlet_path_unvalidated(schedule, target, t)
}

fn dirichlet_path_unvalidated(
    schedule: &EvoSchedule,
    target: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    check_unit_interval(t)?;
    let alpha0 = schedule.prior_alpha();
    let alpha1 = schedule.endpoint_alpha(target, t)?;
    Ok(alpha1.iter().map(|a1| (1.0 - t) * alpha0 + t * a1).collect())
}

/// Predicted targets for one refinement update.
#[derive(Debug, Clone, Copy)]
pub struct Predictions<'a> {
    /// Flattened predicted coordinates, if the state has a coordinate block.
    pub coords: Option<&'a [f64]>,
    /// Predicted class simplex per categorical site.
    pub types: &'a [Vec<f64>],
    /// Predicted class simplex per site pair.
    pub bonds: &'a [Vec<f64>],
}

/// One refinement update: re-anchors every block's path on the current
/// predictions and advances it to t + Δt.
pub fn geodesic_step(
    schedule: &EvoSchedule,
    predictions: &Predictions,
    t: f64,
    dt: f64,
) -> Result<PathPoint> {
    check_unit_interval(t)?;
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::domain(format!("step size must be ≥ 0, got {dt}")));
    }
    if t + dt > 1.0 + 1e-9 {
        return Err(Error::domain(format!(
            "step target time {} exceeds 1",
            t + dt
        )));
    }
    let t_next = (t + dt).min(1.0);
    let gaussian = predictions
        .coords
        .map(|x| gaussian_path(schedule, x, t_next))
        .transpose()?;
    let types = predictions
        .types
        .iter()
        .map(|row| dirichlet_path_soft(schedule, row, t_next))
        .collect::<Result<Vec<_>>>()?;
    let bonds = predictions
        .bonds
        .iter()
        .map(|row| dirichlet_path_soft(schedule, row, t_next))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathPoint {
        t: t_next,
        gaussian,
        types,
        bonds,
    })
}

/// Natural-coordinate path velocity `[η̇₁, η̇₂₁…η̇₂d]` of the coordinate block:
/// η̇_t = (η₁(t) − η₀) + t·η̇₁(t) with η(σ, μ) = (−1/(2σ²), μ/σ²).
pub fn gaussian_tangent(schedule: &EvoSchedule, target: &[f64], t: f64) -> Result<Vec<f64>> {
    check_unit_interval(t)?;
    check_target_finite(target)?;
    let s0 = schedule.prior_sigma();
    let s1 = schedule.endpoint_sigma(t);
    let s1_dot = schedule.endpoint_sigma_dot(t);
    let eta0_1 = -0.5 / (s0 * s0);
    let end_1 = -0.5 / (s1 * s1);
    let end_1_dot = s1_dot / (s1 * s1 * s1);
    let mut tangent = Vec::with_capacity(target.len() + 1);
    tangent.push((end_1 - eta0_1) + t * end_1_dot);
    let prior_2 = schedule.prior_mean() / (s0 * s0);
    for x in target {
        let end_2 = x / (s1 * s1);
        let end_2_dot = -2.0 * x * s1_dot / (s1 * s1 * s1);
        tangent.push((end_2 - prior_2) + t * end_2_dot);
    }
    Ok(tangent)
}

/// Natural-coordinate path velocity (= α̇_t) of one categorical site:
/// α̇_t = (α₁(t) − α₀) + t·α̇₁(t).
pub fn dirichlet_tangent(schedule: &EvoSchedule, target: &[f64], t: f64) -> Result<Vec<f64>> {
    check_one_hot(target)?;
    check_unit_interval(t)?;
    let alpha0 = schedule.prior_alpha();
    let alpha1 = schedule.endpoint_alpha(target, t)?;
    let alpha1_dot = schedule.endpoint_alpha_dot(target, t)?;
    Ok(alpha1
        .iter()
        .zip(&alpha1_dot)
        .map(|(a1, a1d)| (a1 - alpha0) + t * a1d)
        .collect())
}

/// First time the *static* coordinate path contracts to σ_t ≤ `threshold`
/// (prior σ₀ = 1). Closed form: t* = (1/threshold² − 1)/(1/σ₁² − 1).
///
/// Returns `Some(0)` when the prior already satisfies the threshold and
/// `None` when the path never reaches it.
pub fn singularity_probe(sigma1: f64, threshold: f64) -> Result<Option<f64>> {
    for (name, v) in [("σ₁", sigma1), ("threshold", threshold)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::domain(format!(
                "singularity probe needs {name} > 0, got {v}"
            )));
        }
    }
    if threshold >= 1.0 {
        return Ok(Some(0.0));
    }
    let t = (1.0 / (threshold * threshold) - 1.0) / (1.0 / (sigma1 * sigma1) - 1.0);
    Ok((0.0..=1.0).contains(&t).then_some(t))
}

/// Dirichlet analogue of the probe: first time the static categorical path's
/// target-class concentration reaches `level` under the endpoint
/// α₁ = 1 + (a₁ − 1)·onehot. Closed form: t* = (level − 1)/(a₁ − 1).
pub fn singularity_probe_dirichlet(alpha1: f64, level: f64) -> Result<Option<f64>> {
    for (name, v) in [("a₁", alpha1), ("level", level)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::domain(format!(
                "singularity probe needs {name} > 0, got {v}"
            )));
        }
    }
    if level <= 1.0 {
        return Ok(Some(0.0));
    }
    if alpha1 <= 1.0 {
        return Ok(None);
    }
    let t = (level - 1.0) / (alpha1 - 1.0);
    Ok((t <= 1.0).then_some(t))
}

/// Interpolation scheme compared by [`schedule_comparison`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum ComparisonScheme {
    StaticEgf { sigma1: f64 },
    EvoEgf { lambda: f64, eps: f64 },
    Sldm { eps: f64 },
    /// Moment-space straight line μ_t = t·x*, σ_t = (1−t)·σ₀ + t·σ_min —
    /// linear in (μ, σ), *not* in natural coordinates.
    LinearFm { sigma_min: f64 },
}

impl ComparisonScheme {
    /// Short stable identifier used in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            ComparisonScheme::StaticEgf { .. } => "static_egf",
            ComparisonScheme::EvoEgf { .. } => "evo_egf",
            ComparisonScheme::Sldm { .. } => "sldm",
            ComparisonScheme::LinearFm { .. } => "linear_fm",
        }
    }
}

/// One row of a 1-D schedule comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub t: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// Evaluates one scheme's 1-D path toward `target` on a time grid, reporting
/// both natural and moment coordinates per row.
pub fn schedule_comparison(
    scheme: ComparisonScheme,
    target: f64,
    grid: &[f64],
) -> Result<Vec<ScheduleRow>> {
    if grid.is_empty() {
        return Err(Error::domain("comparison grid must be non-empty"));
    }
    let schedule = match scheme {
        ComparisonScheme::StaticEgf { sigma1 } => Some(EvoSchedule::static_egf(sigma1, 2.0)?),
        ComparisonScheme::EvoEgf { lambda, eps } => Some(EvoSchedule::evo(lambda, eps)?),
        ComparisonScheme::Sldm { eps } => Some(EvoSchedule::sldm(eps)?),
        ComparisonScheme::LinearFm { sigma_min } => {
            if !sigma_min.is_finite() || sigma_min <= 0.0 {
                return Err(Error::config(format!(
                    "linear comparison needs σ_min > 0, got {sigma_min}"
                )));
            }
            None
        }
    };
    grid.iter()
        .map(|&t| {
            check_unit_interval(t)?;
            let (mu, sigma) = match (&schedule, scheme) {
                (Some(s), _) => {
                    let p = gaussian_path(s, &[target], t)?;
                    (p.mean[0], p.sigma())
                }
                (None, ComparisonScheme::LinearFm { sigma_min }) => {
                    (t * target, (1.0 - t) + t * sigma_min)
                }
                _ => unreachable!("non-linear schemes build a schedule"),
            };
            Ok(ScheduleRow {
                t,
                eta1: -0.5 / (sigma * sigma),
                eta2: mu / (sigma * sigma),
                mu,
                sigma,
            })
        })
        .collect()
}
