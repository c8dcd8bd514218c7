//! Temporary causal probes for the mixture task: train once, save the
//! checkpoint, then (a) splice the exact posterior mean into chosen time
//! windows of the sampler and (b) map the trained net's angular response
//! at early times. Not part of the shipped suite.

use std::f64::consts::PI;
use std::path::Path;

use geoflow::geodesic::{gaussian_path, EvoSchedule};
use geoflow::net::{Checkpoint, NetOutput, Network, Predictor};
use geoflow::pipeline::{sample_many, train, SampleDims, TrainConfig};
use geoflow::toybench::{
    generate_dataset, mode_coverage, molecule_point, DatasetKind, DatasetSpec, MixtureSpec,
};
use geoflow::Result;

const CKPT: &str = "/tmp/mix_probe.ckpt";

fn mixture_data() -> Vec<geoflow::pipeline::ToyMolecule> {
    let spec = MixtureSpec::default();
    generate_dataset(&DatasetSpec {
        kind: DatasetKind::GaussMixture2d {
            modes: spec.modes,
            radius: spec.radius,
            sigma: spec.sigma,
        },
        size: 4096,
        seed: 901,
    })
    .expect("dataset")
}

struct Ideal {
    schedule: EvoSchedule,
    centers: Vec<[f64; 2]>,
    sigma_m: f64,
}

impl Ideal {
    fn predict_point(&self, m: &[f64], t: f64) -> [f64; 2] {
        let point = gaussian_path(&self.schedule, &[0.0], t).expect("path");
        let sigma_t_sq = point.variance;
        let s1 = self.schedule.endpoint_sigma(t);
        let a = sigma_t_sq * t / (s1 * s1);
        let channel_var = a * a * self.sigma_m * self.sigma_m + sigma_t_sq;
        let mut weights = Vec::with_capacity(self.centers.len());
        let mut best = f64::NEG_INFINITY;
        for c in &self.centers {
            let d2 = (m[0] - a * c[0]).powi(2) + (m[1] - a * c[1]).powi(2);
            let log_w = -d2 / (2.0 * channel_var);
            best = best.max(log_w);
            weights.push(log_w);
        }
        let mut total = 0.0;
        for w in &mut weights {
            *w = (*w - best).exp();
            total += *w;
        }
        let gain = a * self.sigma_m * self.sigma_m / channel_var;
        let mut x_hat = [0.0, 0.0];
        for (w, c) in weights.iter().zip(&self.centers) {
            let r = w / total;
            x_hat[0] += r * (c[0] + gain * (m[0] - a * c[0]));
            x_hat[1] += r * (c[1] + gain * (m[1] - a * c[1]));
        }
        x_hat
    }
}

/// Ideal below the cutoff time, trained network at and above it.
struct Hybrid {
    ideal: Ideal,
    net: Network,
    cutoff: f64,
}

impl Predictor for Hybrid {
    fn predict(
        &self,
        coords: Option<&[f64]>,
        types: &[Vec<f64>],
        bonds: &[Vec<f64>],
        t: f64,
    ) -> Result<NetOutput> {
        if t < self.cutoff {
            let m = coords.expect("coords");
            Ok(NetOutput {
                coords: self.ideal.predict_point(m, t).to_vec(),
                types: Vec::new(),
                bonds: Vec::new(),
            })
        } else {
            self.net.predict(coords, types, bonds, t)
        }
    }
}

#[test]
fn a_train_and_save() {
    let data = mixture_data();
    let mut config = TrainConfig::new(EvoSchedule::evo_default(), 20_000);
    config.batch_size = 64;
    config.hidden = 64;
    config.learning_rate = 1e-3;
    config.lr_decay = false;
    config.seed = 902;
    let outcome = train(&config, &data).expect("training");
    let checkpoint = Checkpoint {
        version: geoflow::net::CHECKPOINT_VERSION,
        config: outcome.network.config().clone(),
        params: outcome.network.params().to_vec(),
        adam: outcome.adam,
        seed: config.seed,
        trained_steps: config.steps as u64,
    };
    checkpoint.save(Path::new(CKPT)).expect("save");
    println!("saved {CKPT}");
}

#[test]
fn b_hybrid_scan() {
    let checkpoint = Checkpoint::load(Path::new(CKPT)).expect("checkpoint (run a_ first)");
    let spec = MixtureSpec::default();
    let schedule = EvoSchedule::evo_default();
    let centers = spec.mode_centers();
    let spacing = 2.0 * spec.radius * (PI / centers.len() as f64).sin();
    let radius = spacing / 4.0;

    for &cutoff in &[0.0, 0.02, 0.05, 0.1, 0.2, 0.5] {
        let hybrid = Hybrid {
            ideal: Ideal {
                schedule,
                centers: centers.clone(),
                sigma_m: spec.sigma,
            },
            net: Network::from_parts(checkpoint.config.clone(), checkpoint.params.clone())
                .expect("network"),
            cutoff,
        };
        let dims = SampleDims {
            n_sites: 1,
            coord_dim: 2,
            k_atom: 0,
            k_bond: 0,
        };
        let molecules = sample_many(&schedule, &hybrid, &dims, 100, 903, 2000).expect("sampling");
        let points: Vec<[f64; 2]> = molecules
            .iter()
            .map(|m| molecule_point(m).expect("planar"))
            .collect();
        let coverage = mode_coverage(&points, &centers, radius).expect("coverage");
        let fractions: Vec<String> = coverage
            .per_mode_fraction
            .iter()
            .map(|f| format!("{:.3}", f))
            .collect();
        println!(
            "cutoff {cutoff:>4}: covered {}/8 dist {:.3} per-mode [{}]",
            coverage.covered,
            coverage.mean_nearest_distance,
            fractions.join(", ")
        );
    }
}

#[test]
fn d_steps_scan() {
    let checkpoint = Checkpoint::load(Path::new(CKPT)).expect("checkpoint (run a_ first)");
    let spec = MixtureSpec::default();
    let schedule = EvoSchedule::evo_default();
    let centers = spec.mode_centers();
    let spacing = 2.0 * spec.radius * (PI / centers.len() as f64).sin();
    let radius = spacing / 4.0;
    let net =
        Network::from_parts(checkpoint.config.clone(), checkpoint.params.clone()).expect("net");
    let dims = SampleDims {
        n_sites: 1,
        coord_dim: 2,
        k_atom: 0,
        k_bond: 0,
    };
    for &steps in &[50usize, 100, 200, 400, 1000] {
        let molecules = sample_many(&schedule, &net, &dims, steps, 903, 1000).expect("sampling");
        let points: Vec<[f64; 2]> = molecules
            .iter()
            .map(|m| molecule_point(m).expect("planar"))
            .collect();
        let coverage = mode_coverage(&points, &centers, radius).expect("coverage");
        println!(
            "steps {steps:>4}: covered {}/8 dist {:.3}",
            coverage.covered, coverage.mean_nearest_distance
        );
    }
}

#[test]
fn e_late_chain_stability() {
    // Deterministic late-time chain: start exactly on a mode at t = t0 and
    // iterate prediction → re-anchor → (noise-free) observation to t = 1.
    let checkpoint = Checkpoint::load(Path::new(CKPT)).expect("checkpoint (run a_ first)");
    let net =
        Network::from_parts(checkpoint.config.clone(), checkpoint.params.clone()).expect("net");
    let spec = MixtureSpec::default();
    let schedule = EvoSchedule::evo_default();
    let centers = spec.mode_centers();

    for &c in &[centers[0], centers[3]] {
        for delta in [0.0, 0.1] {
            let start = [c[0] + delta, c[1]];
            let n = 100;
            let t0 = 50;
            let mut x_hat = start.to_vec();
            for i in t0..n {
                let t = i as f64 / n as f64;
                let point = gaussian_path(&schedule, &x_hat, t).expect("path");
                let out = net
                    .predict(Some(&point.mean), &[], &[], t)
                    .expect("prediction");
                x_hat = out.coords;
            }
            let err = ((x_hat[0] - c[0]).powi(2) + (x_hat[1] - c[1]).powi(2)).sqrt();
            println!(
                "mode ({:+.2},{:+.2}) start offset {delta}: final x̂ ({:+.3},{:+.3}) |err| {:.3}",
                c[0], c[1], x_hat[0], x_hat[1], err
            );
        }
    }
}

#[test]
fn a2_train_and_save_ema() {
    let data = mixture_data();
    let mut config = TrainConfig::new(EvoSchedule::evo_default(), 20_000);
    config.batch_size = 64;
    config.hidden = 64;
    config.learning_rate = 1e-3;
    config.lr_decay = false;
    config.ema = Some(0.999);
    config.seed = 902;
    let outcome = train(&config, &data).expect("training");
    let net = outcome.sampler_network();
    let checkpoint = Checkpoint {
        version: geoflow::net::CHECKPOINT_VERSION,
        config: net.config().clone(),
        params: net.params().to_vec(),
        adam: outcome.adam,
        seed: config.seed,
        trained_steps: config.steps as u64,
    };
    checkpoint.save(Path::new(CKPT)).expect("save");
    println!("saved averaged weights to {CKPT}");
}

#[test]
fn f_collapse_probe() {
    use geoflow::pipeline::sample_with_trace;

    let checkpoint = Checkpoint::load(Path::new(CKPT)).expect("checkpoint (run a2_ first)");
    let net =
        Network::from_parts(checkpoint.config.clone(), checkpoint.params.clone()).expect("net");
    let schedule = EvoSchedule::evo_default();
    let dims = SampleDims {
        n_sites: 1,
        coord_dim: 2,
        k_atom: 0,
        k_bond: 0,
    };

    let runs = 400;
    let mut traces = Vec::with_capacity(runs);
    for seed in 0..runs as u64 {
        let (_, trace) = sample_with_trace(&schedule, &net, &dims, 100, seed).expect("trace");
        traces.push(trace);
    }

    // At each selected time: sector entropy (bits) of the anchored mean's
    // angle, plus its mean radius, over the ensemble.
    for &index in &[1usize, 2, 3, 5, 8, 10, 15, 20, 30, 50, 90, 100] {
        let mut sectors = [0usize; 8];
        let mut mean_radius = 0.0;
        let mut t = 0.0;
        for trace in &traces {
            let point = &trace[index];
            t = point.t;
            let g = point.gaussian.as_ref().expect("coords");
            let r = (g.mean[0].powi(2) + g.mean[1].powi(2)).sqrt();
            mean_radius += r;
            if r > 1e-6 {
                let angle = g.mean[1].atan2(g.mean[0]).rem_euclid(2.0 * PI);
                sectors[((angle / (2.0 * PI) * 8.0).floor() as usize).min(7)] += 1;
            }
        }
        let total: usize = sectors.iter().sum();
        let entropy: f64 = sectors
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total as f64;
                -p * p.log2()
            })
            .sum();
        println!(
            "t {t:.2}: sector entropy {entropy:.2} bits (max 3.00), mean |μ| {:.3}, sectors {:?}",
            mean_radius / runs as f64,
            sectors
        );
    }
}

#[test]
fn g_zero_time_response() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    let checkpoint = Checkpoint::load(Path::new(CKPT)).expect("checkpoint (run a2_ first)");
    let net =
        Network::from_parts(checkpoint.config.clone(), checkpoint.params.clone()).expect("net");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut mean = [0.0, 0.0];
    let mut norm = 0.0;
    let draws = 200;
    for _ in 0..draws {
        let m = [
            StandardNormal.sample(&mut rng),
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
        ];
        let out = net.predict(Some(&m), &[], &[], 0.0).expect("prediction");
        mean[0] += out.coords[0];
        mean[1] += out.coords[1];
        norm += (out.coords[0].powi(2) + out.coords[1].powi(2)).sqrt();
    }
    let n = draws as f64;
    println!(
        "t = 0 response over standard-normal inputs: mean output ({:+.3}, {:+.3}), mean |x̂| {:.3}",
        mean[0] / n,
        mean[1] / n,
        norm / n
    );
}

#[test]
fn c_angular_probe() {
    let checkpoint = Checkpoint::load(Path::new(CKPT)).expect("checkpoint (run a_ first)");
    let net =
        Network::from_parts(checkpoint.config.clone(), checkpoint.params.clone()).expect("net");
    let schedule = EvoSchedule::evo_default();

    for &t in &[0.02, 0.05, 0.1] {
        let point = gaussian_path(&schedule, &[0.0], t).expect("path");
        let sd = point.sigma();
        // Histogram over 8 sectors of where predictions point, for inputs
        // swept uniformly in angle at |m| = σ_t (the typical draw radius).
        let mut sectors = [0usize; 8];
        let mut mean_norm = 0.0;
        let probes = 256;
        for k in 0..probes {
            let theta = 2.0 * PI * k as f64 / probes as f64;
            let m = [sd * theta.cos(), sd * theta.sin()];
            let out = net.predict(Some(&m), &[], &[], t).expect("prediction");
            let angle = out.coords[1].atan2(out.coords[0]).rem_euclid(2.0 * PI);
            let sector = ((angle / (2.0 * PI) * 8.0).floor() as usize).min(7);
            sectors[sector] += 1;
            mean_norm += (out.coords[0].powi(2) + out.coords[1].powi(2)).sqrt();
        }
        println!(
            "t {t:.2} (|m| = {sd:.3}): sector counts {:?} mean |x̂| {:.3}",
            sectors,
            mean_norm / probes as f64
        );
    }
}
