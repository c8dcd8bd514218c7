//! Training losses for coordinate and categorical blocks, with analytic
//! gradients.
//!
//! The coordinate loss is a time-weighted squared error whose weight
//! `t²σ_t²/(2σ₁(t)⁴)` makes it exactly the KL divergence between the true and
//! predicted intermediate coordinate distributions. The categorical loss is
//! the Dirichlet KL divergence written in the prediction-first direction,
//! evaluated between the concentration rows the path builds from the true
//! one-hot target and from the predicted simplex row.

use crate::geodesic::{
    dirichlet_path, dirichlet_path_soft, gaussian_path, geodesic_step, EvoSchedule, PathPoint,
    Predictions,
};
use crate::manifold::special::{digamma_unchecked, trigamma_unchecked};
use crate::manifold::{ln_beta, DirichletParams};
use crate::{Error, Result};

/// Per-sample loss components at one evaluation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Evaluation time.
    pub t: f64,
    /// Coordinate-loss weight t²σ_t²/(2σ₁(t)⁴) at that time.
    pub weight_x: f64,
    /// Coordinate block loss.
    pub l_x: f64,
    /// Categorical-site (type) loss, summed over sites.
    pub l_v: f64,
    /// Pair-site (bond) loss, summed over pairs.
    pub l_b: f64,
    /// l_x + l_v + l_b.
    pub total: f64,
}

impl LossBreakdown {
    /// Assembles a breakdown; `total` is always the sum of the components.
    pub fn new(t: f64, weight_x: f64, l_x: f64, l_v: f64, l_b: f64) -> Self {
        LossBreakdown {
            t,
            weight_x,
            l_x,
            l_v,
            l_b,
            total: l_x + l_v + l_b,
        }
    }
}

/// A loss value together with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn check_training_time(t: f64) -> Result<()> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::domain(format!(
            "loss evaluation time must lie in [0, 1) — the weight is singular at the collapsed endpoint — got {t}"
        )));
    }
    Ok(())
}

/// Coordinate-loss weight t²σ_t²/(2σ₁(t)⁴).
///
/// Finite and continuous on [0, 1−δ]; grows like (1−t)⁻² toward the endpoint
/// until the schedule's ε floor takes over.
pub fn coord_weight(schedule: &EvoSchedule, t: f64) -> Result<f64> {
    check_training_time(t)?;
    let s1 = schedule.endpoint_sigma(t);
    let variance_t = gaussian_path(schedule, &[0.0], t)?.variance;
    Ok(t * t * variance_t / (2.0 * s1 * s1 * s1 * s1))
}

/// Weighted squared-error coordinate loss
/// `L = t²σ_t²/(2σ₁(t)⁴)·‖x_true − x_pred‖²` with its gradient
/// `∂L/∂x_pred = −(t²σ_t²/σ₁⁴)(x_true − x_pred)`.
///
/// Equal to the KL divergence between the intermediate coordinate
/// distributions built from the true and predicted targets.
pub fn coord_loss(
    schedule: &EvoSchedule,
    x_true: &[f64],
    x_pred: &[f64],
    t: f64,
) -> Result<LossAndGrad> {
    if x_true.len() != x_pred.len() {
        return Err(Error::domain(format!(
            "coordinate target has {} components but the prediction has {}",
            x_true.len(),
            x_pred.len()
        )));
    }
    if x_true.iter().chain(x_pred).any(|x| !x.is_finite()) {
        return Err(Error::domain(
            "coordinate loss requires finite inputs".to_string(),
        ));
    }
    let weight = coord_weight(schedule, t)?;
    let value = weight
        * x_true
            .iter()
            .zip(x_pred)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    let grad = x_true
        .iter()
        .zip(x_pred)
        .map(|(a, b)| -2.0 * weight * (a - b))
        .collect();
    Ok(LossAndGrad { value, grad })
}

/// Categorical loss between concentration rows, written prediction-first:
/// `L = ln(B(α)/B(α̂)) + Σ_j (α̂_j − α_j)(ψ(α̂_j) − ψ(Σα̂))`, which is
/// `KL(Dir(α̂) ‖ Dir(α))`. The gradient w.r.t. the prediction is
/// `∂L/∂α̂_k = (α̂_k − α_k)ψ′(α̂_k) − ψ′(Σα̂)·Σ_j(α̂_j − α_j)`.
pub fn type_loss(alpha_true: &[f64], alpha_pred: &[f64]) -> Result<LossAndGrad> {
    if alpha_true.len() != alpha_pred.len() {
        return Err(Error::domain(format!(
            "concentration target has {} components but the prediction has {}",
            alpha_true.len(),
            alpha_pred.len()
        )));
    }
    // Validates interior positivity and K ≥ 2 for both rows.
    DirichletParams::new(alpha_true.to_vec())?;
    DirichletParams::new(alpha_pred.to_vec())?;

    let total_pred: f64 = alpha_pred.iter().sum();
    let psi_total = digamma_unchecked(total_pred);
    let mut value = ln_beta(alpha_true) - ln_beta(alpha_pred);
    let mut mismatch_sum = 0.0;
    for (&a, &b) in alpha_true.iter().zip(alpha_pred) {
        value += (b - a) * (digamma_unchecked(b) - psi_total);
        mismatch_sum += b - a;
    }
    let trigamma_total = trigamma_unchecked(total_pred);
    let grad = alpha_true
        .iter()
        .zip(alpha_pred)
        .map(|(&a, &b)| (b - a) * trigamma_unchecked(b) - trigamma_total * mismatch_sum)
        .collect();
    Ok(LossAndGrad { value, grad })
}

/// Categorical loss for one site directly from the predicted simplex row:
/// builds α_t from the one-hot truth and α̂_t from the prediction, evaluates
/// [`type_loss`], and chains the gradient back to the prediction through the
/// path's target sensitivity ∂α̂_t/∂v̂ = t·(dα₁/da).
pub fn type_loss_from_prediction(
    schedule: &EvoSchedule,
    truth_one_hot: &[f64],
    pred_simplex: &[f64],
    t: f64,
) -> Result<LossAndGrad> {
    check_training_time(t)?;
    let alpha_true = dirichlet_path(schedule, truth_one_hot, t)?;
    let alpha_pred = dirichlet_path_soft(schedule, pred_simplex, t)?;
    let mut inner = type_loss(&alpha_true, &alpha_pred)?;
    let sensitivity = schedule.alpha_target_sensitivity(t)?;
    for g in &mut inner.grad {
        *g *= sensitivity;
    }
    Ok(inner)
}

/// Path parameters re-anchored on predicted targets at the same time:
/// μ̂_t via the coordinate path with x̂ substituted, and
/// α̂_t = (1−t)·1 + t·α₁(v̂) per categorical row.
pub fn build_predicted_path_params(
    schedule: &EvoSchedule,
    predictions: &Predictions,
    t: f64,
) -> Result<PathPoint> {
    geodesic_step(schedule, predictions, t, 0.0)
}
