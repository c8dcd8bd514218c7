//! Training and sampling loops over composite (coordinates, types, bonds)
//! states.
//!
//! Training follows the progressive-refinement objective: draw a discrete
//! time from the grid, build every block's path parameters toward the data
//! endpoint, draw a noisy state, predict the endpoint with the network, and
//! descend the summed per-block divergence losses. Sampling runs the dual
//! loop: starting from the prior parameters, repeatedly draw a state, predict
//! the endpoint, and re-anchor the paths one grid step further.
//!
//! Every random draw comes from an independent deterministic substream keyed
//! by (seed, step, sample, block), so runs are bit-reproducible across thread
//! counts and ablation arms share identical draws for the blocks they have in
//! common.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geodesic::{
    dirichlet_path, gaussian_path, geodesic_step, EvoSchedule, GaussianPoint, PathPoint,
    ScheduleMode,
};
use crate::manifold::dirichlet_draws;
use crate::net::{
    optimizer_step, AdamState, NetConfig, NetOutput, Network, OutputGrads, Predictor,
};
use crate::objective::{coord_loss, coord_weight, type_loss_from_prediction, LossBreakdown};
use crate::{Error, Result};

/// One data point: a composite state with optional coordinate, type, and
/// bond blocks. Generated samples use the same container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMolecule {
    pub n_sites: usize,
    pub coord_dim: usize,
    pub k_atom: usize,
    pub k_bond: usize,
    /// Flattened site coordinates, `n_sites × coord_dim`.
    pub coords: Vec<f64>,
    /// One class row per site (one-hot for data, empty when `k_atom = 0`).
    pub atom_types: Vec<Vec<f64>>,
    /// One class row per unordered site pair (i < j), lexicographic.
    pub bond_types: Vec<Vec<f64>>,
}

/// Lexicographic rank of the unordered pair (i, j), i < j, among the
/// `n(n−1)/2` pairs of `0..n`.
pub fn pair_index(n_sites: usize, i: usize, j: usize) -> usize {
    assert!(i < j && j < n_sites, "pair ({i}, {j}) out of range for {n_sites} sites");
    i * n_sites - i * (i + 1) / 2 + (j - i - 1)
}

fn check_simplex_rows(label: &str, rows: &[Vec<f64>], classes: usize) -> Result<()> {
    for row in rows {
        if row.len() != classes {
            return Err(Error::config(format!(
                "{label} row has {} classes, expected {classes}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(format!(
                "{label} row must be non-negative and finite, got {row:?}"
            )));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::config(format!("{label} row sums to {total}, expected 1")));
        }
    }
    Ok(())
}

impl ToyMolecule {
    pub fn new(
        n_sites: usize,
        coord_dim: usize,
        k_atom: usize,
        k_bond: usize,
        coords: Vec<f64>,
        atom_types: Vec<Vec<f64>>,
        bond_types: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let molecule = ToyMolecule {
            n_sites,
            coord_dim,
            k_atom,
            k_bond,
            coords,
            atom_types,
            bond_types,
        };
        molecule.validate()?;
        Ok(molecule)
    }

    pub fn pair_count(&self) -> usize {
        self.n_sites * (self.n_sites - 1) / 2
    }

    /// Shape and simplex checks; class rows may be soft here — data-level
    /// exactness is [`Self::has_one_hot_rows`].
    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return Err(Error::config("a state needs at least one site".to_string()));
        }
        if self.coord_dim == 0 && self.k_atom == 0 {
            return Err(Error::config(
                "a state needs a coordinate or a type block".to_string(),
            ));
        }
        if self.k_atom == 1 || self.k_bond == 1 {
            return Err(Error::config(
                "categorical blocks need at least two classes (or zero to disable)".to_string(),
            ));
        }
        if self.coords.len() != self.n_sites * self.coord_dim {
            return Err(Error::config(format!(
                "coordinate block has {} values, expected {}",
                self.coords.len(),
                self.n_sites * self.coord_dim
            )));
        }
        if self.coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("coordinates must be finite".to_string()));
        }
        let expected_type_rows = if self.k_atom > 0 { self.n_sites } else { 0 };
        if self.atom_types.len() != expected_type_rows {
            return Err(Error::config(format!(
                "type block has {} rows, expected {expected_type_rows}",
                self.atom_types.len()
            )));
        }
        check_simplex_rows("type", &self.atom_types, self.k_atom)?;
        let expected_bond_rows = if self.k_bond > 0 { self.pair_count() } else { 0 };
        if self.bond_types.len() != expected_bond_rows {
            return Err(Error::config(format!(
                "bond block has {} rows, expected {expected_bond_rows}",
                self.bond_types.len()
            )));
        }
        check_simplex_rows("bond", &self.bond_types, self.k_bond)?;
        Ok(())
    }

    /// True when every class row is an exact one-hot (the data invariant).
    pub fn has_one_hot_rows(&self) -> bool {
        let one_hot = |row: &Vec<f64>| {
            row.iter().filter(|&&v| v == 1.0).count() == 1
                && row.iter().all(|&v| v == 0.0 || v == 1.0)
        };
        self.atom_types.iter().all(one_hot) && self.bond_types.iter().all(one_hot)
    }
}

/// Training hyperparameters. The schedule carries the path mode and its
/// rate constants; `time_steps` is the resolution n of the discrete time
/// grid while `steps` counts optimizer updates.
///
/// Deserialization requires only `schedule` and `steps`; every other key
/// falls back to the [`TrainConfig::new`] default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub schedule: EvoSchedule,
    /// Optimizer updates to run.
    pub steps: usize,
    /// Time-grid resolution n: training times are {0, 1/n, …, (n−1)/n}.
    #[serde(default = "defaults::time_steps")]
    pub time_steps: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// When false, the bond block is skipped entirely (ablation arm).
    #[serde(default = "defaults::bond_generation")]
    pub bond_generation: bool,
    /// Draw t uniformly from [0, 1) instead of the discrete grid.
    #[serde(default)]
    pub continuous_time: bool,
    /// Cosine-decay the learning rate to zero across the step budget. The
    /// late-time loss terms carry very large weights, so their gradient
    /// noise keeps jostling the mid-time prediction map at a fixed rate;
    /// annealing lets that map settle within a fixed budget.
    #[serde(default)]
    pub lr_decay: bool,
    /// Optional per-step decay for an exponential moving average of the
    /// weights (for example 0.999). The sampler's re-anchoring loop amplifies
    /// prediction-map noise once the path variance shrinks below the map's
    /// error, so sampling from the averaged weights is markedly more stable
    /// late in the path. `None` disables averaging.
    #[serde(default)]
    pub ema: Option<f64>,
    /// Hidden width of the prediction network.
    #[serde(default = "defaults::hidden")]
    pub hidden: usize,
    /// Optional fixed conditioning vector (empty = unconditional).
    #[serde(default)]
    pub context: Vec<f64>,
}

mod defaults {
    pub(super) fn time_steps() -> usize {
        100
    }
    pub(super) fn batch_size() -> usize {
        16
    }
    pub(super) fn learning_rate() -> f64 {
        5e-4
    }
    pub(super) fn bond_generation() -> bool {
        true
    }
    pub(super) fn hidden() -> usize {
        32
    }
}

impl TrainConfig {
    /// Defaults: 100 time steps, batch 16, learning rate 5e−4.
    pub fn new(schedule: EvoSchedule, steps: usize) -> Self {
        TrainConfig {
            schedule,
            steps,
            time_steps: 100,
            batch_size: 16,
            learning_rate: 5e-4,
            seed: 0,
            bond_generation: true,
            continuous_time: false,
            lr_decay: false,
            ema: None,
            hidden: 32,
            context: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("training needs at least one step".to_string()));
        }
        if self.time_steps == 0 {
            return Err(Error::config("the time grid needs n ≥ 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1".to_string()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden == 0 {
            return Err(Error::config("hidden width must be at least 1".to_string()));
        }
        if let Some(decay) = self.ema {
            if !decay.is_finite() || !(0.0..1.0).contains(&decay) || decay == 0.0 {
                return Err(Error::config(format!(
                    "weight-average decay must lie in (0, 1), got {decay}"
                )));
            }
        }
        if self.context.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("context vector must be finite".to_string()));
        }
        Ok(())
    }

    fn context_arg(&self) -> Option<&[f64]> {
        (!self.context.is_empty()).then_some(self.context.as_slice())
    }
}

/// The discrete time grid {0, 1/n, …, (n−1)/n} shared by training
/// (t = (i−1)/n for i ∼ U(1, n)) and sampling (t = i/n); t = 1 is reached
/// only as the terminal emission point.
pub fn time_grid(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::config("the time grid needs n ≥ 1".to_string()));
    }
    Ok((0..n).map(|i| i as f64 / n as f64).collect())
}

/// Per-block substream identifiers: disjoint streams keep ablation arms
/// comparable draw-for-draw on the blocks they share.
mod block {
    pub const TIME: u64 = 0;
    pub const COORDS: u64 = 1;
    pub const TYPES: u64 = 2;
    pub const BONDS: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const TERMINAL: u64 = 5;
    pub const TIEBREAK: u64 = 6;
}

/// Independent deterministic generator for one (seed, step, sample, block)
/// cell; the key words fill the 256-bit seed injectively.
fn substream(seed: u64, step: u64, sample: u64, block: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..24].copy_from_slice(&sample.to_le_bytes());
    key[24..32].copy_from_slice(&block.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// A noisy intermediate state drawn from the paths at one training time.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyState {
    pub t: f64,
    pub coords: Vec<f64>,
    pub types: Vec<Vec<f64>>,
    pub bonds: Vec<Vec<f64>>,
}

fn draw_gaussian_state(point: &GaussianPoint, rng: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(point.variance > 0.0, "path variance must stay positive, got {}", point.variance);
    let sigma = point.variance.sqrt();
    point
        .mean
        .iter()
        .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn draw_dirichlet_rows(
    schedule: &EvoSchedule,
    targets: &[Vec<f64>],
    t: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    targets
        .iter()
        .map(|row| {
            let alpha = dirichlet_path(schedule, row, t)?;
            assert!(
                alpha.iter().all(|&a| a >= 0.0),
                "path concentrations must stay non-negative, got {alpha:?}"
            );
            Ok(dirichlet_draws(&alpha, 1, rng)?.swap_remove(0))
        })
        .collect()
}

/// Draws the training time and the noisy state for one batch element,
/// using the per-block substreams of (seed, step, sample).
fn draw_training_state(
    config: &TrainConfig,
    molecule: &ToyMolecule,
    step: u64,
    sample: u64,
) -> Result<NoisyState> {
    let mut time_rng = substream(config.seed, step, sample, block::TIME);
    let t = if config.continuous_time {
        time_rng.gen_range(0.0..1.0)
    } else {
        let n = config.time_steps as u64;
        let i = time_rng.gen_range(1..=n);
        (i - 1) as f64 / n as f64
    };

    let coords = if molecule.coord_dim > 0 {
        let point = gaussian_path(&config.schedule, &molecule.coords, t)?;
        let mut rng = substream(config.seed, step, sample, block::COORDS);
        draw_gaussian_state(&point, &mut rng)
    } else {
        Vec::new()
    };

    let types = if molecule.k_atom > 0 {
        let mut rng = substream(config.seed, step, sample, block::TYPES);
        draw_dirichlet_rows(&config.schedule, &molecule.atom_types, t, &mut rng)?
    } else {
        Vec::new()
    };

    let bonds = if config.bond_generation && molecule.k_bond > 0 {
        let mut rng = substream(config.seed, step, sample, block::BONDS);
        draw_dirichlet_rows(&config.schedule, &molecule.bond_types, t, &mut rng)?
    } else {
        Vec::new()
    };

    Ok(NoisyState { t, coords, types, bonds })
}

/// Losses and upstream output gradients for one prediction against one
/// molecule's data endpoint.
pub(crate) fn state_losses(
    config: &TrainConfig,
    molecule: &ToyMolecule,
    state: &NoisyState,
    output: &NetOutput,
) -> Result<(LossBreakdown, OutputGrads)> {
    let t = state.t;
    let schedule = &config.schedule;
    let mut grads = OutputGrads::default();

    let (weight_x, l_x) = if molecule.coord_dim > 0 {
        if output.coords.len() != molecule.coords.len() {
            return Err(Error::config(format!(
                "prediction has {} coordinates, expected {}",
                output.coords.len(),
                molecule.coords.len()
            )));
        }
        let loss = coord_loss(schedule, &molecule.coords, &output.coords, t)?;
        grads.coords = loss.grad;
        (coord_weight(schedule, t)?, loss.value)
    } else {
        (0.0, 0.0)
    };

    let mut l_v = 0.0;
    if molecule.k_atom > 0 {
        if output.types.len() != molecule.n_sites {
            return Err(Error::config(format!(
                "prediction has {} type rows, expected {}",
                output.types.len(),
                molecule.n_sites
            )));
        }
        for (truth, predicted) in molecule.atom_types.iter().zip(&output.types) {
            let loss = type_loss_from_prediction(schedule, truth, predicted, t)?;
            l_v += loss.value;
            grads.types.push(loss.grad);
        }
    }

    let mut l_b = 0.0;
    if config.bond_generation && molecule.k_bond > 0 {
        if output.bonds.len() != molecule.pair_count() {
            return Err(Error::config(format!(
                "prediction has {} bond rows, expected {}",
                output.bonds.len(),
                molecule.pair_count()
            )));
        }
        for (truth, predicted) in molecule.bond_types.iter().zip(&output.bonds) {
            let loss = type_loss_from_prediction(schedule, truth, predicted, t)?;
            l_b += loss.value;
            grads.bonds.push(loss.grad);
        }
    }

    Ok((LossBreakdown::new(t, weight_x, l_x, l_v, l_b), grads))
}

fn mean_breakdown(parts: &[LossBreakdown]) -> LossBreakdown {
    let scale = 1.0 / parts.len() as f64;
    LossBreakdown::new(
        parts.iter().map(|p| p.t).sum::<f64>() * scale,
        parts.iter().map(|p| p.weight_x).sum::<f64>() * scale,
        parts.iter().map(|p| p.l_x).sum::<f64>() * scale,
        parts.iter().map(|p| p.l_v).sum::<f64>() * scale,
        parts.iter().map(|p| p.l_b).sum::<f64>() * scale,
    )
}

/// Batch-mean losses under an arbitrary predictor, drawing exactly the same
/// times and noisy states `train_step` would draw at this step index.
pub fn evaluate_losses<P: Predictor>(
    config: &TrainConfig,
    batch: &[ToyMolecule],
    predictor: &P,
    step_index: u64,
) -> Result<LossBreakdown> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::config("batch must be non-empty".to_string()));
    }
    let mut parts = Vec::with_capacity(batch.len());
    for (s, molecule) in batch.iter().enumerate() {
        molecule.validate()?;
        let state = draw_training_state(config, molecule, step_index, s as u64)?;
        let coords_arg = (molecule.coord_dim > 0).then_some(state.coords.as_slice());
        let output = predictor.predict(coords_arg, &state.types, &state.bonds, state.t)?;
        let (breakdown, _) = state_losses(config, molecule, &state, &output)?;
        parts.push(breakdown);
    }
    Ok(mean_breakdown(&parts))
}

/// One optimizer update over a batch: per-sample draws, forward, losses,
/// exact gradients, ordered batch-mean reduction, Adam step.
///
/// The per-sample work runs in parallel; the reduction order is fixed by
/// batch position, so results are bit-identical across thread counts.
pub fn train_step(
    config: &TrainConfig,
    batch: &[ToyMolecule],
    net: &mut Network,
    adam: &mut AdamState,
    step_index: u64,
) -> Result<LossBreakdown> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::config("batch must be non-empty".to_string()));
    }
    let frozen = &*net;
    let per_sample: Vec<(LossBreakdown, Vec<f64>)> = (0..batch.len())
        .into_par_iter()
        .map(|s| -> Result<(LossBreakdown, Vec<f64>)> {
            let molecule = &batch[s];
            molecule.validate()?;
            let state = draw_training_state(config, molecule, step_index, s as u64)?;
            let coords_arg = (molecule.coord_dim > 0).then_some(state.coords.as_slice());
            let (output, cache) = frozen.forward_cached(
                coords_arg,
                &state.types,
                &state.bonds,
                state.t,
                config.context_arg(),
            )?;
            let (breakdown, upstream) = state_losses(config, molecule, &state, &output)?;
            let grads = frozen.backward(&cache, &upstream)?;
            Ok((breakdown, grads))
        })
        .collect::<Result<Vec<_>>>()?;

    let scale = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; net.params().len()];
    let mut parts = Vec::with_capacity(per_sample.len());
    for (breakdown, sample_grads) in per_sample {
        for (g, s) in grads.iter_mut().zip(&sample_grads) {
            *g += scale * s;
        }
        parts.push(breakdown);
    }
    let breakdown = mean_breakdown(&parts);
    let rate = effective_learning_rate(config, step_index);
    optimizer_step(net.params_mut(), &grads, adam, rate)?;
    Ok(breakdown)
}

/// The step's learning rate: constant, or cosine-annealed over the step
/// budget when `lr_decay` is set, floored at 0.1% of the configured rate so
/// the optimizer's positivity contract holds for any step index.
fn effective_learning_rate(config: &TrainConfig, step_index: u64) -> f64 {
    if !config.lr_decay {
        return config.learning_rate;
    }
    let progress = (step_index as f64 / config.steps as f64).min(1.0);
    let factor = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    config.learning_rate * factor.max(1e-3)
}

/// Loss record for one optimizer step (the metrics-log row).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub step: u64,
    pub l_x: f64,
    pub l_v: f64,
    pub l_b: f64,
    pub total: f64,
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub adam: AdamState,
    pub records: Vec<TrainRecord>,
    /// Bias-corrected exponential moving average of the weights over the
    /// run; present only when [`TrainConfig::ema`] was set.
    pub averaged: Option<Network>,
}

impl TrainOutcome {
    /// The network to sample from: the weight average when one was kept,
    /// otherwise the live weights.
    pub fn sampler_network(&self) -> &Network {
        self.averaged.as_ref().unwrap_or(&self.network)
    }
}

fn check_dataset(config: &TrainConfig, data: &[ToyMolecule]) -> Result<()> {
    let first = data.first().ok_or_else(|| {
        Error::config("training needs a non-empty dataset".to_string())
    })?;
    for molecule in data {
        molecule.validate()?;
        if !molecule.has_one_hot_rows() {
            return Err(Error::config(
                "data class rows must be exact one-hots".to_string(),
            ));
        }
        // Site counts may vary (the network weights are shared across
        // sites) but the per-site block widths must agree.
        if (molecule.coord_dim, molecule.k_atom, molecule.k_bond)
            != (first.coord_dim, first.k_atom, first.k_bond)
        {
            return Err(Error::config(
                "all training molecules must share the same block widths".to_string(),
            ));
        }
    }
    let categorical = first.k_atom > 0 || (config.bond_generation && first.k_bond > 0);
    if matches!(config.schedule.mode(), ScheduleMode::Sldm { .. }) && categorical {
        return Err(Error::config(
            "the straight-line degenerate schedule defines coordinate paths only".to_string(),
        ));
    }
    Ok(())
}

/// Full training loop: seeded network init, per-step batch selection with
/// replacement, and one loss record per optimizer step.
pub fn train(config: &TrainConfig, data: &[ToyMolecule]) -> Result<TrainOutcome> {
    config.validate()?;
    check_dataset(config, data)?;
    let first = &data[0];
    let net_config = NetConfig {
        coord_dim: first.coord_dim,
        k_atom: first.k_atom,
        k_bond: if config.bond_generation { first.k_bond } else { 0 },
        hidden: config.hidden,
        time_features: 8,
        context_dim: config.context.len(),
        activation: crate::net::Activation::Silu,
    };
    let mut net = Network::new(net_config, config.seed)?;
    let mut adam = AdamState::new(net.params().len());
    let mut records = Vec::with_capacity(config.steps);
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut shadow = config.ema.map(|_| vec![0.0; net.params().len()]);
    for step in 0..config.steps as u64 {
        let mut batch_rng = substream(config.seed, step, 0, block::BATCH);
        batch.clear();
        batch.extend(
            (0..config.batch_size).map(|_| data[batch_rng.gen_range(0..data.len())].clone()),
        );
        let breakdown = train_step(config, &batch, &mut net, &mut adam, step)?;
        if let (Some(decay), Some(shadow)) = (config.ema, shadow.as_mut()) {
            for (s, p) in shadow.iter_mut().zip(net.params()) {
                *s = decay * *s + (1.0 - decay) * p;
            }
        }
        records.push(TrainRecord {
            step,
            l_x: breakdown.l_x,
            l_v: breakdown.l_v,
            l_b: breakdown.l_b,
            total: breakdown.total,
        });
    }
    let averaged = match (config.ema, shadow) {
        (Some(decay), Some(shadow)) => {
            // The zero-initialized average understates early steps; the same
            // geometric-series correction Adam uses fixes the scale.
            let correction = 1.0 - decay.powi(config.steps.min(i32::MAX as usize) as i32);
            let params = shadow.iter().map(|s| s / correction).collect();
            Some(Network::from_parts(net.config().clone(), params)?)
        }
        _ => None,
    };
    Ok(TrainOutcome { network: net, adam, records, averaged })
}

/// Trailing moving average with a warm-up prefix (the first values average
/// over what is available).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "moving average needs a positive window");
    let mut out = Vec::with_capacity(values.len());
    let mut running = 0.0;
    for (i, v) in values.iter().enumerate() {
        running += v;
        if i >= window {
            running -= values[i - window];
        }
        out.push(running / window.min(i + 1) as f64);
    }
    out
}

/// Block shapes of the states a sampler should emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleDims {
    pub n_sites: usize,
    pub coord_dim: usize,
    pub k_atom: usize,
    pub k_bond: usize,
}

impl SampleDims {
    /// Dimensions matching a network's configuration for `n_sites` sites.
    pub fn of_network(net: &Network, n_sites: usize) -> SampleDims {
        let config = net.config();
        SampleDims {
            n_sites,
            coord_dim: config.coord_dim,
            k_atom: config.k_atom,
            k_bond: config.k_bond,
        }
    }

    pub fn pair_count(&self) -> usize {
        self.n_sites * (self.n_sites - 1) / 2
    }

    fn validate(&self, schedule: &EvoSchedule) -> Result<()> {
        if self.n_sites == 0 {
            return Err(Error::config("sampling needs at least one site".to_string()));
        }
        if self.coord_dim == 0 && self.k_atom == 0 {
            return Err(Error::config(
                "sampling needs a coordinate or a type block".to_string(),
            ));
        }
        if self.k_atom == 1 || self.k_bond == 1 {
            return Err(Error::config(
                "categorical blocks need at least two classes (or zero to disable)".to_string(),
            ));
        }
        if matches!(schedule.mode(), ScheduleMode::Sldm { .. })
            && (self.k_atom > 0 || self.k_bond > 0)
        {
            return Err(Error::config(
                "the straight-line degenerate schedule defines coordinate paths only".to_string(),
            ));
        }
        Ok(())
    }
}

fn argmax_one_hot(row: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let peak = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = row
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == peak)
        .map(|(k, _)| k)
        .collect();
    let winner = ties[rng.gen_range(0..ties.len())];
    let mut one_hot = vec![0.0; row.len()];
    one_hot[winner] = 1.0;
    one_hot
}

fn prior_point(schedule: &EvoSchedule, dims: &SampleDims) -> PathPoint {
    let sigma0 = schedule.prior_sigma();
    PathPoint {
        t: 0.0,
        gaussian: (dims.coord_dim > 0).then(|| GaussianPoint {
            mean: vec![schedule.prior_mean(); dims.n_sites * dims.coord_dim],
            variance: sigma0 * sigma0,
        }),
        types: vec![vec![schedule.prior_alpha(); dims.k_atom]; if dims.k_atom > 0 { dims.n_sites } else { 0 }],
        bonds: vec![
            vec![schedule.prior_alpha(); dims.k_bond];
            if dims.k_bond > 0 { dims.pair_count() } else { 0 }
        ],
    }
}

fn sample_indexed<P: Predictor + ?Sized>(
    schedule: &EvoSchedule,
    predictor: &P,
    dims: &SampleDims,
    time_steps: usize,
    seed: u64,
    molecule_index: u64,
) -> Result<(ToyMolecule, Vec<PathPoint>)> {
    dims.validate(schedule)?;
    if time_steps == 0 {
        return Err(Error::config("sampling needs n ≥ 1 refinement steps".to_string()));
    }
    let n = time_steps;
    let mut state = prior_point(schedule, dims);
    let mut trace = Vec::with_capacity(n + 1);
    trace.push(state.clone());

    for i in 0..n {
        let t = i as f64 / n as f64;
        let coords_draw = state.gaussian.as_ref().map(|point| {
            let mut rng = substream(seed, i as u64, molecule_index, block::COORDS);
            draw_gaussian_state(point, &mut rng)
        });
        let draw_rows = |rows: &[Vec<f64>], block_id: u64| -> Result<Vec<Vec<f64>>> {
            let mut rng = substream(seed, i as u64, molecule_index, block_id);
            rows.iter()
                .map(|alpha| {
                    assert!(
                        alpha.iter().all(|&a| a >= 0.0),
                        "sampler concentrations must stay non-negative, got {alpha:?}"
                    );
                    Ok(dirichlet_draws(alpha, 1, &mut rng)?.swap_remove(0))
                })
                .collect()
        };
        let types_draw = draw_rows(&state.types, block::TYPES)?;
        let bonds_draw = draw_rows(&state.bonds, block::BONDS)?;

        let output = predictor.predict(coords_draw.as_deref(), &types_draw, &bonds_draw, t)?;
        if output.coords.len() != dims.n_sites * dims.coord_dim
            || output.types.len() != state.types.len()
            || output.bonds.len() != state.bonds.len()
        {
            return Err(Error::config(
                "predictor output shapes do not match the sampling dimensions".to_string(),
            ));
        }
        // Land exactly on the next grid point (and exactly on 1 at the end).
        let dt = (i + 1) as f64 / n as f64 - t;
        state = geodesic_step(schedule, &output.as_predictions(), t, dt)?;
        trace.push(state.clone());
    }

    // Terminal emission at t = 1: a prediction-anchored coordinate draw and
    // the dominant class of each final concentration row.
    let coords = match &state.gaussian {
        Some(point) => {
            let mut rng = substream(seed, n as u64, molecule_index, block::TERMINAL);
            draw_gaussian_state(point, &mut rng)
        }
        None => Vec::new(),
    };
    let mut tie_rng = substream(seed, n as u64, molecule_index, block::TIEBREAK);
    let atom_types: Vec<Vec<f64>> = state
        .types
        .iter()
        .map(|row| argmax_one_hot(row, &mut tie_rng))
        .collect();
    let bond_types: Vec<Vec<f64>> = state
        .bonds
        .iter()
        .map(|row| argmax_one_hot(row, &mut tie_rng))
        .collect();

    let molecule = ToyMolecule::new(
        dims.n_sites,
        dims.coord_dim,
        dims.k_atom,
        dims.k_bond,
        coords,
        atom_types,
        bond_types,
    )?;
    Ok((molecule, trace))
}

/// Progressive-refinement sampling: starting from the prior parameters,
/// iterate (draw state, predict endpoint, advance paths by 1/n) and emit the
/// terminal state at t = 1.
pub fn sample<P: Predictor + ?Sized>(
    schedule: &EvoSchedule,
    predictor: &P,
    dims: &SampleDims,
    time_steps: usize,
    seed: u64,
) -> Result<ToyMolecule> {
    sample_indexed(schedule, predictor, dims, time_steps, seed, 0).map(|(m, _)| m)
}

/// [`sample`] plus the visited path parameters at every grid time
/// (n + 1 points, t = 0 through t = 1).
pub fn sample_with_trace<P: Predictor + ?Sized>(
    schedule: &EvoSchedule,
    predictor: &P,
    dims: &SampleDims,
    time_steps: usize,
    seed: u64,
) -> Result<(ToyMolecule, Vec<PathPoint>)> {
    sample_indexed(schedule, predictor, dims, time_steps, seed, 0)
}

/// Draws `count` molecules in parallel, one deterministic substream family
/// per molecule index.
pub fn sample_many<P: Predictor + Sync + ?Sized>(
    schedule: &EvoSchedule,
    predictor: &P,
    dims: &SampleDims,
    time_steps: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<ToyMolecule>> {
    (0..count)
        .into_par_iter()
        .map(|m| {
            sample_indexed(schedule, predictor, dims, time_steps, seed, m as u64)
                .map(|(molecule, _)| molecule)
        })
        .collect()
}

/// Borrows a conditional network together with its fixed context so it can
/// drive the predictor-generic loops.
pub struct WithContext<'a> {
    pub network: &'a Network,
    pub context: &'a [f64],
}

impl Predictor for WithContext<'_> {
    fn predict(
        &self,
        coords: Option<&[f64]>,
        types: &[Vec<f64>],
        bonds: &[Vec<f64>],
        t: f64,
    ) -> Result<NetOutput> {
        self.network.forward(coords, types, bonds, t, Some(self.context))
    }
}
