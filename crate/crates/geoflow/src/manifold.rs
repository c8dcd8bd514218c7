//! Exponential-family manifolds in natural coordinates.
//!
//! Two families carry the whole crate: the isotropic Gaussian N(μ, σ²·I) on
//! R^d and the Dirichlet on the open simplex. Both are written against the
//! base measure h(x) = 1, so a density is exp(ηᵀT(x) − A(η)) with
//!
//! * Gaussian: T(x) = (‖x‖², x), η = (−1/(2σ²), μ/σ²), and
//!   A(η) = −‖η₂‖²/(4η₁) − (d/2)·ln(−2η₁) + (d/2)·ln(2π);
//! * Dirichlet: T(x) = ln x (componentwise), η = α − 1, and
//!   A(η) = Σₖ ln Γ(αₖ) − ln Γ(Σₖ αₖ) = ln B(α).
//!
//! The natural-coordinate view is what makes e-geodesics (module
//! [`crate::geodesic`]) straight lines, and the log-partition derivatives
//! supply everything else: ∇A is the mean of the sufficient statistics and
//! ∇²A is simultaneously their covariance and the Fisher information.
//!
//! Natural coordinate vectors for the Gaussian are laid out `[η₁, η₂₁…η₂d]`;
//! every consumer of Fisher matrices or tangents in this crate follows that
//! ordering.

pub mod special;

use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use special::{digamma_unchecked, ln_gamma_unchecked, trigamma_unchecked};

const LN_TWO_PI: f64 = 1.837_877_066_409_345_3;

/// Concentrations below this are lifted to it before drawing Gamma variates,
/// purely to keep the sampler away from underflow; path construction and
/// divergences never apply the floor.
pub const ALPHA_SAMPLING_FLOOR: f64 = 1e-8;

/// Tolerance on Σxᵢ = 1 when validating simplex points.
const SIMPLEX_SUM_TOL: f64 = 1e-9;

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}

/// Validates that `x` lies in the open probability simplex.
pub(crate) fn check_open_simplex(x: &[f64]) -> Result<()> {
    check_finite("simplex point", x)?;
    if x.iter().any(|&v| v <= 0.0) {
        return Err(Error::domain(
            "simplex point must have strictly positive components".to_string(),
        ));
    }
    let sum: f64 = x.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
        return Err(Error::domain(format!(
            "simplex point must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// ln B(α) = Σ ln Γ(αₖ) − ln Γ(Σ αₖ). Assumes α was validated positive.
pub(crate) fn ln_beta(alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    alpha.iter().map(|&a| ln_gamma_unchecked(a)).sum::<f64>() - ln_gamma_unchecked(total)
}

// ---------------------------------------------------------------------------
// Isotropic Gaussian
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianRepr {
    mean: Vec<f64>,
    variance: f64,
}

impl TryFrom<GaussianRepr> for GaussianParams {
    type Error = Error;
    fn try_from(r: GaussianRepr) -> Result<Self> {
        GaussianParams::new(r.mean, r.variance)
    }
}

/// Isotropic Gaussian N(μ, σ²·I) on R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr")]
pub struct GaussianParams {
    mean: Vec<f64>,
    variance: f64,
}

impl GaussianParams {
    /// Builds N(μ, σ²·I); requires a non-empty finite mean and σ² > 0.
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::domain("gaussian mean must be non-empty"));
        }
        check_finite("gaussian mean", &mean)?;
        if !variance.is_finite() || variance <= 0.0 {
            return Err(Error::domain(format!(
                "gaussian variance must be positive and finite, got {variance}"
            )));
        }
        Ok(Self { mean, variance })
    }

    /// Standard normal on R^d.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], 1.0)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Natural coordinates `[η₁, η₂₁…η₂d]` with η₁ = −1/(2σ²), η₂ = μ/σ².
    pub fn natural(&self) -> Vec<f64> {
        let mut eta = Vec::with_capacity(self.dim() + 1);
        eta.push(-0.5 / self.variance);
        eta.extend(self.mean.iter().map(|m| m / self.variance));
        eta
    }

    /// Inverts [`Self::natural`]; requires η₁ < 0.
    pub fn from_natural(eta: &[f64]) -> Result<Self> {
        if eta.len() < 2 {
            return Err(Error::domain(
                "gaussian natural coordinates need at least [η₁, η₂₁]".to_string(),
            ));
        }
        check_finite("gaussian natural coordinates", eta)?;
        let eta1 = eta[0];
        if eta1 >= 0.0 {
            return Err(Error::domain(format!(
                "gaussian natural coordinate η₁ must be negative, got {eta1}"
            )));
        }
        let variance = -0.5 / eta1;
        let mean = eta[1..].iter().map(|e| e * variance).collect();
        Self::new(mean, variance)
    }

    /// Log-partition A(η) = −‖η₂‖²/(4η₁) − (d/2)·ln(−2η₁) + (d/2)·ln(2π).
    pub fn log_partition(&self) -> f64 {
        let eta = self.natural();
        let eta1 = eta[0];
        let eta2_sq: f64 = eta[1..].iter().map(|e| e * e).sum();
        let d = self.dim() as f64;
        -eta2_sq / (4.0 * eta1) - 0.5 * d * (-2.0 * eta1).ln() + 0.5 * d * LN_TWO_PI
    }

    /// ∇A(η) = E[T(x)] = [‖μ‖² + d·σ², μ₁…μ_d].
    pub fn grad_log_partition(&self) -> Vec<f64> {
        let mean_sq: f64 = self.mean.iter().map(|m| m * m).sum();
        let mut grad = Vec::with_capacity(self.dim() + 1);
        grad.push(mean_sq + self.dim() as f64 * self.variance);
        grad.extend_from_slice(&self.mean);
        grad
    }

    /// Log-density ln p(x) = ηᵀT(x) − A(η) with T(x) = (‖x‖², x).
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::domain(format!(
                "gaussian log_density: point has dim {}, params have dim {}",
                x.len(),
                self.dim()
            )));
        }
        check_finite("gaussian log_density point", x)?;
        let eta = self.natural();
        let x_sq: f64 = x.iter().map(|v| v * v).sum();
        let dot: f64 = eta[1..].iter().zip(x).map(|(e, v)| e * v).sum();
        Ok(eta[0] * x_sq + dot - self.log_partition())
    }

    /// Draws `count` points μ + σ·z with z standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let sigma = self.variance.sqrt();
        (0..count)
            .map(|_| {
                self.mean
                    .iter()
                    .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }

    /// Fisher information ∇²A(η) in natural coordinates, ordered `[η₁, η₂…]`:
    ///
    /// ```text
    /// ∂²A/∂η₁²    = −‖η₂‖²/(2η₁³) + d/(2η₁²)
    /// ∂²A/∂η₁∂η₂ᵢ = η₂ᵢ/(2η₁²)
    /// ∂²A/∂η₂ᵢ∂η₂ⱼ = −δᵢⱼ/(2η₁)
    /// ```
    pub fn fisher_metric(&self) -> Vec<Vec<f64>> {
        let eta = self.natural();
        let eta1 = eta[0];
        let d = self.dim();
        let eta2_sq: f64 = eta[1..].iter().map(|e| e * e).sum();
        let mut g = vec![vec![0.0; d + 1]; d + 1];
        g[0][0] = -eta2_sq / (2.0 * eta1.powi(3)) + d as f64 / (2.0 * eta1 * eta1);
        for i in 0..d {
            let cross = eta[1 + i] / (2.0 * eta1 * eta1);
            g[0][1 + i] = cross;
            g[1 + i][0] = cross;
            g[1 + i][1 + i] = -0.5 / eta1;
        }
        g
    }
}

/// KL(p ‖ q) between isotropic Gaussians of equal dimension:
/// ½·[d·σ_p²/σ_q² − d + ‖μ_p − μ_q‖²/σ_q² + d·ln(σ_q²/σ_p²)].
pub fn kl_gaussian(p: &GaussianParams, q: &GaussianParams) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::domain(format!(
            "kl_gaussian: dimension mismatch ({} vs {})",
            p.dim(),
            q.dim()
        )));
    }
    let d = p.dim() as f64;
    let mean_term: f64 = p
        .mean
        .iter()
        .zip(&q.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / q.variance;
    Ok(0.5
        * (d * p.variance / q.variance - d + mean_term + d * (q.variance / p.variance).ln()))
}

// ---------------------------------------------------------------------------
// Dirichlet
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirichletRepr {
    alpha: Vec<f64>,
}

impl TryFrom<DirichletRepr> for DirichletParams {
    type Error = Error;
    fn try_from(r: DirichletRepr) -> Result<Self> {
        DirichletParams::new(r.alpha)
    }
}

/// Dirichlet distribution Dir(α) on the open (K−1)-simplex, K ≥ 2, α ≻ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DirichletRepr")]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    /// Builds Dir(α); requires K ≥ 2 strictly positive finite concentrations.
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::domain(
                "dirichlet needs at least two concentration components".to_string(),
            ));
        }
        check_finite("dirichlet concentration", &alpha)?;
        if alpha.iter().any(|&a| a <= 0.0) {
            return Err(Error::domain(
                "dirichlet concentrations must be strictly positive".to_string(),
            ));
        }
        Ok(Self { alpha })
    }

    /// Uniform Dir(1, …, 1) on K classes.
    pub fn flat(classes: usize) -> Result<Self> {
        Self::new(vec![1.0; classes])
    }

    pub fn classes(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Natural coordinates η = α − 1 (base measure h(x) = 1).
    pub fn natural(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a - 1.0).collect()
    }

    /// Inverts [`Self::natural`]; requires η + 1 ≻ 0.
    pub fn from_natural(eta: &[f64]) -> Result<Self> {
        Self::new(eta.iter().map(|e| e + 1.0).collect())
    }

    /// Log-partition A(α) = ln B(α) = Σ ln Γ(αₖ) − ln Γ(Σ αₖ).
    pub fn log_partition(&self) -> f64 {
        ln_beta(&self.alpha)
    }

    /// ∇A in natural coordinates: ψ(αᵢ) − ψ(Σₖ αₖ) = E[ln xᵢ].
    pub fn grad_log_partition(&self) -> Vec<f64> {
        let psi_total = digamma_unchecked(self.alpha.iter().sum());
        self.alpha
            .iter()
            .map(|&a| digamma_unchecked(a) - psi_total)
            .collect()
    }

    /// Log-density Σ (αᵢ − 1)·ln xᵢ − ln B(α) for x in the open simplex.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.classes() {
            return Err(Error::domain(format!(
                "dirichlet log_density: point has {} components, params have {}",
                x.len(),
                self.classes()
            )));
        }
        check_open_simplex(x)?;
        let dot: f64 = self
            .alpha
            .iter()
            .zip(x)
            .map(|(a, v)| (a - 1.0) * v.ln())
            .sum();
        Ok(dot - self.log_partition())
    }

    /// Draws `count` simplex points via normalized Gamma variates.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        // Constructor guarantees α ≻ 0, so the boundary-aware path cannot fail.
        dirichlet_draws(&self.alpha, count, rng).expect("validated concentration")
    }

    /// Fisher information ∇²A(α)ᵢⱼ = ψ′(αᵢ)·δᵢⱼ − ψ′(Σₖ αₖ).
    pub fn fisher_metric(&self) -> Vec<Vec<f64>> {
        let k = self.classes();
        let trig_total = trigamma_unchecked(self.alpha.iter().sum());
        let mut g = vec![vec![-trig_total; k]; k];
        for (i, &a) in self.alpha.iter().enumerate() {
            g[i][i] += trigamma_unchecked(a);
        }
        g
    }
}

/// Draws from Dir(α) allowing boundary concentrations.
///
/// Components with αₖ = 0 are emitted as exact zeros (the α → 0⁺ limit places
/// no mass on that coordinate). Positive concentrations below
/// [`ALPHA_SAMPLING_FLOOR`] are lifted to the floor before the Gamma draw so
/// the variate does not silently degenerate; if every Gamma draw still
/// underflows to zero, the draw falls back to the one-hot vector at the
/// largest concentration.
pub fn dirichlet_draws<R: Rng + ?Sized>(
    alpha: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if alpha.len() < 2 {
        return Err(Error::domain(
            "dirichlet sampling needs at least two components".to_string(),
        ));
    }
    check_finite("dirichlet concentration", alpha)?;
    if alpha.iter().any(|&a| a < 0.0) {
        return Err(Error::domain(
            "dirichlet concentrations must be non-negative".to_string(),
        ));
    }
    let total: f64 = alpha.iter().sum();
    if total <= 0.0 {
        return Err(Error::domain(
            "dirichlet concentrations must not all be zero".to_string(),
        ));
    }
    let gammas: Vec<Option<Gamma<f64>>> = alpha
        .iter()
        .map(|&a| {
            if a == 0.0 {
                None
            } else {
                let shape = a.max(ALPHA_SAMPLING_FLOOR);
                Some(Gamma::new(shape, 1.0).expect("positive shape"))
            }
        })
        .collect();
    let argmax = alpha
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok((0..count)
        .map(|_| {
            let mut draw: Vec<f64> = gammas
                .iter()
                .map(|g| g.as_ref().map_or(0.0, |g| g.sample(rng)))
                .collect();
            let mass: f64 = draw.iter().sum();
            if mass > 0.0 {
                for v in &mut draw {
                    *v /= mass;
                }
            } else {
                // All variates underflowed: collapse to the dominant class.
                draw[argmax] = 1.0;
            }
            draw
        })
        .collect())
}

/// KL(p ‖ q) between Dirichlet distributions over the same number of classes:
/// ln B(α_q) − ln B(α_p) + Σₖ (α_{p,k} − α_{q,k})·(ψ(α_{p,k}) − ψ(Σ α_p)).
pub fn kl_dirichlet(p: &DirichletParams, q: &DirichletParams) -> Result<f64> {
    if p.classes() != q.classes() {
        return Err(Error::domain(format!(
            "kl_dirichlet: class-count mismatch ({} vs {})",
            p.classes(),
            q.classes()
        )));
    }
    let psi_total = digamma_unchecked(p.alpha.iter().sum());
    let cross: f64 = p
        .alpha
        .iter()
        .zip(&q.alpha)
        .map(|(&ap, &aq)| (ap - aq) * (digamma_unchecked(ap) - psi_total))
        .sum();
    Ok(ln_beta(&q.alpha) - ln_beta(&p.alpha) + cross)
}

/// The categorical training loss evaluates its divergence with the argument
/// roles swapped relative to the usual KL(p ‖ q) convention: plugging a
/// (target, prediction) pair into the displayed formula yields
/// KL(prediction ‖ target). This helper makes that relationship explicit.
pub fn kl_dirichlet_swapped(p: &DirichletParams, q: &DirichletParams) -> Result<f64> {
    kl_dirichlet(q, p)
}

// ---------------------------------------------------------------------------
// Composite product manifolds
// ---------------------------------------------------------------------------

/// A single labeled factor of a product manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBlock {
    pub label: String,
    #[serde(flatten)]
    pub params: BlockParams,
}

/// One factor: either a coordinate block or a categorical block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BlockParams {
    Gaussian(GaussianParams),
    Dirichlet(DirichletParams),
}

impl BlockParams {
    pub fn log_partition(&self) -> f64 {
        match self {
            BlockParams::Gaussian(g) => g.log_partition(),
            BlockParams::Dirichlet(d) => d.log_partition(),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        match self {
            BlockParams::Gaussian(g) => g.log_density(x),
            BlockParams::Dirichlet(d) => d.log_density(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            BlockParams::Gaussian(g) => g.sample(1, rng).pop().expect("one draw"),
            BlockParams::Dirichlet(d) => d.sample(1, rng).pop().expect("one draw"),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompositeRepr {
    blocks: Vec<LabeledBlock>,
}

impl TryFrom<CompositeRepr> for CompositeParams {
    type Error = Error;
    fn try_from(r: CompositeRepr) -> Result<Self> {
        CompositeParams::new(r.blocks)
    }
}

/// Ordered product of labeled exponential-family blocks (e.g. one Gaussian
/// coordinate block plus one Dirichlet block per categorical site).
///
/// The product is itself an exponential family: log-partitions add across
/// blocks, densities factorize, and natural coordinates concatenate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CompositeRepr")]
pub struct CompositeParams {
    blocks: Vec<LabeledBlock>,
}

impl CompositeParams {
    pub fn new(blocks: Vec<LabeledBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::domain("composite params need at least one block"));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[LabeledBlock] {
        &self.blocks
    }

    /// A(η) of the product: sum of the per-block log-partitions.
    pub fn log_partition(&self) -> f64 {
        self.blocks.iter().map(|b| b.params.log_partition()).sum()
    }

    /// Joint log-density over the product domain; `xs` holds one point per
    /// block, in block order.
    pub fn log_density(&self, xs: &[Vec<f64>]) -> Result<f64> {
        if xs.len() != self.blocks.len() {
            return Err(Error::domain(format!(
                "composite log_density: {} points for {} blocks",
                xs.len(),
                self.blocks.len()
            )));
        }
        self.blocks
            .iter()
            .zip(xs)
            .map(|(b, x)| b.params.log_density(x))
            .sum()
    }

    /// One joint draw: an independent sample from every block, in order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| b.params.sample(rng)).collect()
    }
}

/// Any parameter value this crate serializes, tagged by family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Params {
    Gaussian(GaussianParams),
    Dirichlet(DirichletParams),
    Composite(CompositeParams),
}

/// vᵀ·G·v for a small dense symmetric matrix.
pub fn quadratic_form(g: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, row) in g.iter().enumerate() {
        for (j, gij) in row.iter().enumerate() {
            acc += v[i] * gij * v[j];
        }
    }
    acc
}
