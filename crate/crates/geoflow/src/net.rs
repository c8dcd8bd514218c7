//! The parameter estimator Φ: a small feed-forward network with time
//! conditioning and self-contained reverse-mode gradients.
//!
//! Architecture: a per-site shared MLP (the trunk) reads each site's
//! concatenated [coordinates, type simplex, sinusoidal time features,
//! optional fixed context] and produces a site embedding. A mean-pooled
//! context vector couples the sites. Heads read [site embedding, pooled
//! context]: the coordinate head regresses targets directly, the type head
//! emits class logits through a softmax, and the bond head reads the
//! symmetric sum of the pair's two embeddings plus the pair's noisy bond
//! simplex. All weights live in one flat parameter vector described by a
//! [`Layout`], which keeps the optimizer and the finite-difference gradient
//! checks trivial.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geodesic::Predictions;
use crate::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Silu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Silu => x * sigmoid(x),
        }
    }

    /// Derivative as a function of the pre-activation.
    fn slope(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Shape of the network; sizes of zero disable the corresponding block
/// (a task with no bonds sets `k_bond = 0`, and so on).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "NetConfigRepr")]
pub struct NetConfig {
    /// Coordinates per site (0 = no coordinate block).
    pub coord_dim: usize,
    /// Type classes per site (0 = no type block).
    pub k_atom: usize,
    /// Bond classes per site pair (0 = no bond block).
    pub k_bond: usize,
    /// Width of every hidden layer.
    pub hidden: usize,
    /// Number of sinusoidal frequency pairs in the time embedding.
    pub time_features: usize,
    /// Width of the optional fixed conditioning vector (0 = unconditional).
    pub context_dim: usize,
    /// Hidden nonlinearity.
    pub activation: Activation,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetConfigRepr {
    coord_dim: usize,
    k_atom: usize,
    k_bond: usize,
    hidden: usize,
    time_features: usize,
    context_dim: usize,
    activation: Activation,
}

impl TryFrom<NetConfigRepr> for NetConfig {
    type Error = Error;

    fn try_from(repr: NetConfigRepr) -> Result<Self> {
        let config = NetConfig {
            coord_dim: repr.coord_dim,
            k_atom: repr.k_atom,
            k_bond: repr.k_bond,
            hidden: repr.hidden,
            time_features: repr.time_features,
            context_dim: repr.context_dim,
            activation: repr.activation,
        };
        config.validate()?;
        Ok(config)
    }
}

impl NetConfig {
    /// Configuration with the default hidden width, time embedding, and
    /// activation; block sizes as given.
    pub fn new(coord_dim: usize, k_atom: usize, k_bond: usize, hidden: usize) -> Result<Self> {
        let config = NetConfig {
            coord_dim,
            k_atom,
            k_bond,
            hidden,
            time_features: 8,
            context_dim: 0,
            activation: Activation::Silu,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config("hidden width must be at least 1".to_string()));
        }
        if self.time_features == 0 {
            return Err(Error::config(
                "the time embedding needs at least one frequency".to_string(),
            ));
        }
        if self.k_atom == 1 || self.k_bond == 1 {
            return Err(Error::config(
                "categorical blocks need at least two classes (or zero to disable)".to_string(),
            ));
        }
        if self.coord_dim == 0 && self.k_atom == 0 {
            return Err(Error::config(
                "at least one per-site block (coordinates or types) is required".to_string(),
            ));
        }
        Ok(())
    }

    /// Width of one site's trunk input row.
    fn site_input_dim(&self) -> usize {
        self.coord_dim + self.k_atom + 2 * self.time_features + self.context_dim
    }
}

/// One dense layer's slot in the flat parameter vector: `out_dim × in_dim`
/// row-major weights followed by `out_dim` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub offset: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    fn len(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    /// Parameter-vector range this layer occupies.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn weight_rows<'p>(&self, params: &'p [f64]) -> &'p [f64] {
        &params[self.offset..self.offset + self.out_dim * self.in_dim]
    }

    fn biases<'p>(&self, params: &'p [f64]) -> &'p [f64] {
        &params[self.offset + self.out_dim * self.in_dim..self.offset + self.len()]
    }

    fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let weights = self.weight_rows(params);
        let biases = self.biases(params);
        (0..self.out_dim)
            .map(|r| {
                let row = &weights[r * self.in_dim..(r + 1) * self.in_dim];
                biases[r] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates weight/bias gradients for upstream `dout` and, when a
    /// buffer is supplied, adds the input gradient into it.
    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        dout: &[f64],
        grads: &mut [f64],
        mut dinput: Option<&mut [f64]>,
    ) {
        let weights = self.weight_rows(params);
        let weight_base = self.offset;
        let bias_base = self.offset + self.out_dim * self.in_dim;
        for r in 0..self.out_dim {
            let d = dout[r];
            grads[bias_base + r] += d;
            let row_base = weight_base + r * self.in_dim;
            let row = &weights[r * self.in_dim..(r + 1) * self.in_dim];
            for c in 0..self.in_dim {
                grads[row_base + c] += d * input[c];
            }
            if let Some(buffer) = dinput.as_deref_mut() {
                for (b, w) in buffer.iter_mut().zip(row) {
                    *b += w * d;
                }
            }
        }
    }
}

/// Positions of every layer inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub trunk1: Linear,
    pub trunk2: Linear,
    /// Hidden + output layers of the coordinate head, when present.
    pub coord_head: Option<(Linear, Linear)>,
    /// Hidden + output layers of the type head, when present.
    pub type_head: Option<(Linear, Linear)>,
    /// Hidden + output layers of the bond head, when present.
    pub bond_head: Option<(Linear, Linear)>,
    /// Total parameter count.
    pub total: usize,
}

impl Layout {
    pub fn new(config: &NetConfig) -> Layout {
        let hidden = config.hidden;
        let mut cursor = 0;
        let mut place = |in_dim: usize, out_dim: usize| {
            let linear = Linear { offset: cursor, in_dim, out_dim };
            cursor += linear.len();
            linear
        };
        let trunk1 = place(config.site_input_dim(), hidden);
        let trunk2 = place(hidden, hidden);
        // Heads read [site embedding, pooled context].
        let head_in = 2 * hidden;
        let coord_head = (config.coord_dim > 0)
            .then(|| (place(head_in, hidden), place(hidden, config.coord_dim)));
        let type_head = (config.k_atom > 0)
            .then(|| (place(head_in, hidden), place(hidden, config.k_atom)));
        // The bond head reads [h_i + h_j, pooled context, pair bond simplex].
        let bond_head = (config.k_bond > 0)
            .then(|| (place(head_in + config.k_bond, hidden), place(hidden, config.k_bond)));
        Layout { trunk1, trunk2, coord_head, type_head, bond_head, total: cursor }
    }
}

/// Predicted targets for every block of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput {
    /// Flattened predicted coordinates (empty when the block is absent).
    pub coords: Vec<f64>,
    /// Predicted class simplex per site.
    pub types: Vec<Vec<f64>>,
    /// Predicted class simplex per site pair.
    pub bonds: Vec<Vec<f64>>,
}

impl NetOutput {
    /// View suitable for re-anchoring the parameter paths.
    pub fn as_predictions(&self) -> Predictions<'_> {
        Predictions {
            coords: (!self.coords.is_empty()).then_some(self.coords.as_slice()),
            types: &self.types,
            bonds: &self.bonds,
        }
    }
}

/// Upstream loss gradients with respect to the network outputs (the softmax
/// Jacobian for the simplex heads is applied inside `backward`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputGrads {
    pub coords: Vec<f64>,
    pub types: Vec<Vec<f64>>,
    pub bonds: Vec<Vec<f64>>,
}

struct SiteCache {
    input: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    h: Vec<f64>,
    /// [h_i, pooled context] — the shared head input.
    g: Vec<f64>,
    coord: Option<(Vec<f64>, Vec<f64>)>,
    type_hidden: Option<(Vec<f64>, Vec<f64>)>,
    type_probs: Option<Vec<f64>>,
}

struct PairCache {
    i: usize,
    j: usize,
    q: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    probs: Vec<f64>,
}

/// Activations recorded during a forward pass, consumed by `backward`.
pub struct ForwardCache {
    sites: Vec<SiteCache>,
    pairs: Vec<PairCache>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// d(loss)/d(logits) from d(loss)/d(probabilities):
/// `dz_k = p_k (dp_k − Σ_j p_j dp_j)`.
fn softmax_backward(probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    let inner: f64 = probs.iter().zip(dprobs).map(|(p, d)| p * d).sum();
    probs
        .iter()
        .zip(dprobs)
        .map(|(p, d)| p * (d - inner))
        .collect()
}

/// Sinusoidal time features: F frequency pairs geometric from 1 to 1000.
fn time_features(t: f64, count: usize) -> Vec<f64> {
    let mut features = Vec::with_capacity(2 * count);
    for f in 0..count {
        let exponent = if count > 1 { f as f64 / (count - 1) as f64 } else { 0.0 };
        let omega = 1000.0_f64.powf(exponent);
        features.push((omega * t).sin());
        features.push((omega * t).cos());
    }
    features
}

/// Anything that maps a noisy state and a time to predicted targets; the
/// training and sampling loops are generic over this so tests can drive them
/// with analytic stand-ins.
pub trait Predictor {
    fn predict(
        &self,
        coords: Option<&[f64]>,
        types: &[Vec<f64>],
        bonds: &[Vec<f64>],
        t: f64,
    ) -> Result<NetOutput>;
}

/// Weights plus configuration: the concrete estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetConfig,
    layout: Layout,
    params: Vec<f64>,
}

impl Network {
    /// Seeded initialization: weights uniform in ±1/√fan_in, biases zero.
    pub fn new(config: NetConfig, seed: u64) -> Result<Network> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |linear: &Linear, params: &mut Vec<f64>| {
            let bound = 1.0 / (linear.in_dim as f64).sqrt();
            for w in &mut params[linear.offset..linear.offset + linear.out_dim * linear.in_dim] {
                *w = rng.gen_range(-bound..bound);
            }
        };
        init(&layout.trunk1, &mut params);
        init(&layout.trunk2, &mut params);
        for head in [&layout.coord_head, &layout.type_head, &layout.bond_head]
            .into_iter()
            .flatten()
        {
            init(&head.0, &mut params);
            init(&head.1, &mut params);
        }
        Ok(Network { config, layout, params })
    }

    /// All-zero weights: predicts the origin and uniform class rows.
    pub fn zeros(config: NetConfig) -> Result<Network> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = vec![0.0; layout.total];
        Ok(Network { config, layout, params })
    }

    /// Rebuilds a network from a configuration and a saved parameter vector.
    pub fn from_parts(config: NetConfig, params: Vec<f64>) -> Result<Network> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::config(format!(
                "parameter vector has {} entries but the layout needs {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Network { config, layout, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_inputs(
        &self,
        coords: Option<&[f64]>,
        types: &[Vec<f64>],
        bonds: &[Vec<f64>],
        t: f64,
        context: Option<&[f64]>,
    ) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("time must lie in [0, 1], got {t}")));
        }
        let config = &self.config;
        if (config.coord_dim > 0) != coords.is_some() {
            return Err(Error::config(
                "coordinate input must be present exactly when the block is configured"
                    .to_string(),
            ));
        }
        if config.k_atom == 0 && !types.is_empty() {
            return Err(Error::config("type rows supplied but no type block configured".to_string()));
        }
        let n = if config.k_atom > 0 {
            types.len()
        } else {
            coords.map_or(0, |c| c.len() / config.coord_dim.max(1))
        };
        if n == 0 {
            return Err(Error::config("the state must have at least one site".to_string()));
        }
        if let Some(c) = coords {
            if c.len() != n * config.coord_dim {
                return Err(Error::config(format!(
                    "coordinate input has {} values, expected {} for {} site(s)",
                    c.len(),
                    n * config.coord_dim,
                    n
                )));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain("coordinate input must be finite".to_string()));
            }
        }
        for row in types {
            if row.len() != config.k_atom {
                return Err(Error::config(format!(
                    "type row has {} classes, expected {}",
                    row.len(),
                    config.k_atom
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain("type input must be finite".to_string()));
            }
        }
        let pair_count = n * (n - 1) / 2;
        if config.k_bond == 0 {
            if !bonds.is_empty() {
                return Err(Error::config(
                    "bond rows supplied but no bond block configured".to_string(),
                ));
            }
        } else if !bonds.is_empty() && bonds.len() != pair_count {
            return Err(Error::config(format!(
                "bond input has {} rows, expected {pair_count} (or none to skip the block)",
                bonds.len()
            )));
        }
        for row in bonds {
            if row.len() != config.k_bond {
                return Err(Error::config(format!(
                    "bond row has {} classes, expected {}",
                    row.len(),
                    config.k_bond
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain("bond input must be finite".to_string()));
            }
        }
        match (config.context_dim, context) {
            (0, None) => {}
            (0, Some(_)) => {
                return Err(Error::config(
                    "context supplied but the network is unconditional".to_string(),
                ))
            }
            (want, Some(c)) if c.len() == want => {}
            (want, got) => {
                return Err(Error::config(format!(
                    "context must have {want} values, got {:?}",
                    got.map(<[f64]>::len)
                )))
            }
        }
        Ok(n)
    }

    /// Forward pass; see the module docs for the dataflow.
    pub fn forward(
        &self,
        coords: Option<&[f64]>,
        types: &[Vec<f64>],
        bonds: &[Vec<f64>],
        t: f64,
        context: Option<&[f64]>,
    ) -> Result<NetOutput> {
        self.forward_cached(coords, types, bonds, t, context)
            .map(|(output, _)| output)
    }

    /// Forward pass that also records every activation for [`Self::backward`].
    pub fn forward_cached(
        &self,
        coords: Option<&[f64]>,
        types: &[Vec<f64>],
        bonds: &[Vec<f64>],
        t: f64,
        context: Option<&[f64]>,
    ) -> Result<(NetOutput, ForwardCache)> {
        let n = self.check_inputs(coords, types, bonds, t, context)?;
        let config = &self.config;
        let layout = &self.layout;
        let params = &self.params;
        let act = config.activation;
        let clock = time_features(t, config.time_features);

        let mut sites = Vec::with_capacity(n);
        for i in 0..n {
            let mut input = Vec::with_capacity(config.site_input_dim());
            if let Some(c) = coords {
                input.extend_from_slice(&c[i * config.coord_dim..(i + 1) * config.coord_dim]);
            }
            if config.k_atom > 0 {
                input.extend_from_slice(&types[i]);
            }
            input.extend_from_slice(&clock);
            if let Some(c) = context {
                input.extend_from_slice(c);
            }
            let z1 = layout.trunk1.forward(params, &input);
            let a1: Vec<f64> = z1.iter().map(|&z| act.apply(z)).collect();
            let z2 = layout.trunk2.forward(params, &a1);
            let h: Vec<f64> = z2.iter().map(|&z| act.apply(z)).collect();
            sites.push(SiteCache {
                input,
                z1,
                a1,
                z2,
                h,
                g: Vec::new(),
                coord: None,
                type_hidden: None,
                type_probs: None,
            });
        }

        let hidden = config.hidden;
        let mut pooled = vec![0.0; hidden];
        for site in &sites {
            for (p, h) in pooled.iter_mut().zip(&site.h) {
                *p += h;
            }
        }
        for p in &mut pooled {
            *p /= n as f64;
        }

        let mut out_coords = Vec::with_capacity(n * config.coord_dim);
        let mut out_types = Vec::with_capacity(if config.k_atom > 0 { n } else { 0 });
        for site in &mut sites {
            let mut g = Vec::with_capacity(2 * hidden);
            g.extend_from_slice(&site.h);
            g.extend_from_slice(&pooled);
            if let Some((head1, head2)) = &layout.coord_head {
                let zc1 = head1.forward(params, &g);
                let ac1: Vec<f64> = zc1.iter().map(|&z| act.apply(z)).collect();
                out_coords.extend(head2.forward(params, &ac1));
                site.coord = Some((zc1, ac1));
            }
            if let Some((head1, head2)) = &layout.type_head {
                let zt1 = head1.forward(params, &g);
                let at1: Vec<f64> = zt1.iter().map(|&z| act.apply(z)).collect();
                let probs = softmax(&head2.forward(params, &at1));
                out_types.push(probs.clone());
                site.type_hidden = Some((zt1, at1));
                site.type_probs = Some(probs);
            }
            site.g = g;
        }

        let mut pairs = Vec::new();
        let mut out_bonds = Vec::new();
        if let Some((head1, head2)) = &layout.bond_head {
            if !bonds.is_empty() {
                let mut p = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        let mut q = Vec::with_capacity(2 * hidden + config.k_bond);
                        q.extend(sites[i].h.iter().zip(&sites[j].h).map(|(a, b)| a + b));
                        q.extend_from_slice(&pooled);
                        q.extend_from_slice(&bonds[p]);
                        let z1 = head1.forward(params, &q);
                        let a1: Vec<f64> = z1.iter().map(|&z| act.apply(z)).collect();
                        let probs = softmax(&head2.forward(params, &a1));
                        out_bonds.push(probs.clone());
                        pairs.push(PairCache { i, j, q, z1, a1, probs });
                        p += 1;
                    }
                }
            }
        }

        Ok((
            NetOutput { coords: out_coords, types: out_types, bonds: out_bonds },
            ForwardCache { sites, pairs },
        ))
    }

    /// Exact reverse-mode gradients of the flat parameter vector for the
    /// given upstream output gradients.
    pub fn backward(&self, cache: &ForwardCache, upstream: &OutputGrads) -> Result<Vec<f64>> {
        let config = &self.config;
        let layout = &self.layout;
        let params = &self.params;
        let act = config.activation;
        let n = cache.sites.len();
        let hidden = config.hidden;

        if upstream.coords.len() != n * config.coord_dim && config.coord_dim > 0 {
            return Err(Error::config(format!(
                "coordinate gradient has {} values, expected {}",
                upstream.coords.len(),
                n * config.coord_dim
            )));
        }
        if config.k_atom > 0 && upstream.types.len() != n {
            return Err(Error::config(format!(
                "type gradient has {} rows, expected {n}",
                upstream.types.len()
            )));
        }
        if upstream.bonds.len() != cache.pairs.len() {
            return Err(Error::config(format!(
                "bond gradient has {} rows, expected {}",
                upstream.bonds.len(),
                cache.pairs.len()
            )));
        }

        let mut grads = vec![0.0; layout.total];
        let mut dh: Vec<Vec<f64>> = vec![vec![0.0; hidden]; n];
        let mut dpooled = vec![0.0; hidden];

        for (i, site) in cache.sites.iter().enumerate() {
            let mut dg = vec![0.0; 2 * hidden];
            if let Some((head1, head2)) = &layout.coord_head {
                let (zc1, ac1) = site.coord.as_ref().expect("coord cache");
                let dout = &upstream.coords[i * config.coord_dim..(i + 1) * config.coord_dim];
                let mut dac1 = vec![0.0; hidden];
                head2.backward(params, ac1, dout, &mut grads, Some(&mut dac1));
                let dzc1: Vec<f64> = dac1
                    .iter()
                    .zip(zc1)
                    .map(|(d, &z)| d * act.slope(z))
                    .collect();
                head1.backward(params, &site.g, &dzc1, &mut grads, Some(&mut dg));
            }
            if let Some((head1, head2)) = &layout.type_head {
                let (zt1, at1) = site.type_hidden.as_ref().expect("type cache");
                let probs = site.type_probs.as_ref().expect("type probabilities");
                let dlogits = softmax_backward(probs, &upstream.types[i]);
                let mut dat1 = vec![0.0; hidden];
                head2.backward(params, at1, &dlogits, &mut grads, Some(&mut dat1));
                let dzt1: Vec<f64> = dat1
                    .iter()
                    .zip(zt1)
                    .map(|(d, &z)| d * act.slope(z))
                    .collect();
                head1.backward(params, &site.g, &dzt1, &mut grads, Some(&mut dg));
            }
            for (slot, d) in dh[i].iter_mut().zip(&dg[..hidden]) {
                *slot += d;
            }
            for (slot, d) in dpooled.iter_mut().zip(&dg[hidden..]) {
                *slot += d;
            }
        }

        if let Some((head1, head2)) = &layout.bond_head {
            for (pair, dprobs) in cache.pairs.iter().zip(&upstream.bonds) {
                let dlogits = softmax_backward(&pair.probs, dprobs);
                let mut da1 = vec![0.0; hidden];
                head2.backward(params, &pair.a1, &dlogits, &mut grads, Some(&mut da1));
                let dz1: Vec<f64> = da1
                    .iter()
                    .zip(&pair.z1)
                    .map(|(d, &z)| d * act.slope(z))
                    .collect();
                let mut dq = vec![0.0; 2 * hidden + config.k_bond];
                head1.backward(params, &pair.q, &dz1, &mut grads, Some(&mut dq));
                for (slot, d) in dh[pair.i].iter_mut().zip(&dq[..hidden]) {
                    *slot += d;
                }
                for (slot, d) in dh[pair.j].iter_mut().zip(&dq[..hidden]) {
                    *slot += d;
                }
                for (slot, d) in dpooled.iter_mut().zip(&dq[hidden..2 * hidden]) {
                    *slot += d;
                }
            }
        }

        // The pooled context is the site mean, so its gradient spreads back
        // to every site equally.
        let share = 1.0 / n as f64;
        for dsite in &mut dh {
            for (slot, d) in dsite.iter_mut().zip(&dpooled) {
                *slot += share * d;
            }
        }

        for (site, dsite) in cache.sites.iter().zip(&dh) {
            let dz2: Vec<f64> = dsite
                .iter()
                .zip(&site.z2)
                .map(|(d, &z)| d * act.slope(z))
                .collect();
            let mut da1 = vec![0.0; hidden];
            layout
                .trunk2
                .backward(params, &site.a1, &dz2, &mut grads, Some(&mut da1));
            let dz1: Vec<f64> = da1
                .iter()
                .zip(&site.z1)
                .map(|(d, &z)| d * act.slope(z))
                .collect();
            layout
                .trunk1
                .backward(params, &site.input, &dz1, &mut grads, None);
        }
        Ok(grads)
    }
}

impl Predictor for Network {
    fn predict(
        &self,
        coords: Option<&[f64]>,
        types: &[Vec<f64>],
        bonds: &[Vec<f64>],
        t: f64,
    ) -> Result<NetOutput> {
        if self.config.context_dim > 0 {
            return Err(Error::config(
                "a conditional network needs its context; drive it through forward".to_string(),
            ));
        }
        self.forward(coords, types, bonds, t, None)
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First/second-moment accumulators for Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(parameter_count: usize) -> AdamState {
        AdamState {
            m: vec![0.0; parameter_count],
            v: vec![0.0; parameter_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with β = (0.9, 0.999), ε = 1e−8, bias-corrected.
pub fn optimizer_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::config(format!(
            "optimizer shapes disagree: {} parameters, {} gradients, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if !lr.is_finite() || lr <= 0.0 {
        return Err(Error::config(format!("learning rate must be positive, got {lr}")));
    }
    state.step += 1;
    let t = state.step as f64;
    let m_correction = 1.0 - ADAM_BETA1.powf(t);
    let v_correction = 1.0 - ADAM_BETA2.powf(t);
    for i in 0..params.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grads[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
        let m_hat = state.m[i] / m_correction;
        let v_hat = state.v[i] / v_correction;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Serialized container version; `load` rejects anything else.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume or sample: configuration, weights, optimizer
/// state, and the seed/step bookkeeping of the run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: NetConfig,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub seed: u64,
    pub trained_steps: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let payload = serde_json::to_string(self)?;
        std::fs::write(path, payload)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let payload = std::fs::read_to_string(path)?;
        let checkpoint: Checkpoint = serde_json::from_str(&payload)?;
        checkpoint.validate()?;
        Ok(checkpoint)
    }

    /// Version and shape consistency; run after any deserialization path.
    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::config(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let expected = Layout::new(&self.config).total;
        if self.params.len() != expected {
            return Err(Error::config(format!(
                "checkpoint has {} parameters but the configuration needs {expected}",
                self.params.len()
            )));
        }
        if self.adam.m.len() != expected || self.adam.v.len() != expected {
            return Err(Error::config(
                "checkpoint optimizer state does not match the parameter count".to_string(),
            ));
        }
        Ok(())
    }
}
