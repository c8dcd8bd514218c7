//! Temporary hyperparameter sweep for the planar-mixture benchmark,
//! with a probe comparing the trained map to the exact posterior mean.
//! Not part of the shipped suite.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use geoflow::geodesic::{gaussian_path, EvoSchedule};
use geoflow::net::Predictor;
use geoflow::pipeline::{sample_many, train, SampleDims, TrainConfig};
use geoflow::toybench::{
    freq_metrics, generate_dataset, mode_coverage, molecule_point, DatasetKind, DatasetSpec,
    MixtureSpec,
};

const STEPS: usize = 20_000;
const BATCH: usize = 64;
const N_STEPS: usize = 100;

fn ideal_prediction(
    schedule: &EvoSchedule,
    centers: &[[f64; 2]],
    sigma_m: f64,
    m: &[f64],
    t: f64,
) -> [f64; 2] {
    let point = gaussian_path(schedule, &[0.0], t).expect("path");
    let sigma_t_sq = point.variance;
    let s1 = schedule.endpoint_sigma(t);
    let a = sigma_t_sq * t / (s1 * s1);
    let channel_var = a * a * sigma_m * sigma_m + sigma_t_sq;
    let mut weights = Vec::with_capacity(centers.len());
    let mut best = f64::NEG_INFINITY;
    for c in centers {
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
    let gain = a * sigma_m * sigma_m / channel_var;
    let mut x_hat = [0.0, 0.0];
    for (w, c) in weights.iter().zip(centers) {
        let r = w / total;
        x_hat[0] += r * (c[0] + gain * (m[0] - a * c[0]));
        x_hat[1] += r * (c[1] + gain * (m[1] - a * c[1]));
    }
    x_hat
}

#[test]
fn sweep_mixture_configs() {
    let spec = MixtureSpec::default();
    let schedule = EvoSchedule::evo_default();
    let centers = spec.mode_centers();
    let spacing = 2.0 * spec.radius * (PI / centers.len() as f64).sin();
    let radius = spacing / 4.0;

    let data = generate_dataset(&DatasetSpec {
        kind: DatasetKind::GaussMixture2d {
            modes: spec.modes,
            radius: spec.radius,
            sigma: spec.sigma,
        },
        size: 4096,
        seed: 901,
    })
    .expect("dataset");

    let configs: &[(usize, f64, bool)] = &[
        (128, 1e-3, true),
        (64, 1e-3, true),
        (128, 2e-3, true),
    ];

    for &(hidden, lr, decay) in configs {
        let started = Instant::now();
        let mut config = TrainConfig::new(schedule, STEPS);
        config.batch_size = BATCH;
        config.hidden = hidden;
        config.learning_rate = lr;
        config.lr_decay = decay;
        config.seed = 902;
        let outcome = train(&config, &data).expect("training");
        let train_secs = started.elapsed().as_secs_f64();

        let dims = SampleDims::of_network(&outcome.network, 1);
        let molecules =
            sample_many(&schedule, &outcome.network, &dims, N_STEPS, 903, 2000).expect("sampling");
        let points: Vec<[f64; 2]> = molecules
            .iter()
            .map(|m| molecule_point(m).expect("planar"))
            .collect();
        let coverage = mode_coverage(&points, &centers, radius).expect("coverage");
        let nearest = |p: &[f64; 2]| -> usize {
            let (index, d2) = centers
                .iter()
                .enumerate()
                .map(|(k, c)| (k, (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("modes");
            if d2 <= radius * radius { index } else { centers.len() }
        };
        let assigned: Vec<usize> = points.iter().map(nearest).collect();
        let reference: Vec<usize> = (0..2000).map(|i| i % centers.len()).collect();
        let freq = freq_metrics(&assigned, &reference, centers.len() + 1).expect("freq");
        let last = outcome.records.last().expect("records");
        println!(
            "hidden {hidden:>3} lr {lr:.0e} decay {decay}: covered {}/8 dist {:.3} jsd {:.4} final_loss {:.3} ({:.0}s train)",
            coverage.covered, coverage.mean_nearest_distance, freq.jsd, last.total, train_secs
        );

        // Probe: mean |net - ideal| and mean |net| vs |ideal| across t.
        let mut rng = ChaCha8Rng::seed_from_u64(31_337);
        for &t in &[0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 0.9] {
            let point = gaussian_path(&schedule, &[0.0], t).expect("path");
            let s1 = schedule.endpoint_sigma(t);
            let a = point.variance * t / (s1 * s1);
            let sd = point.sigma();
            let mut gap = 0.0;
            let mut net_norm = 0.0;
            let mut ideal_norm = 0.0;
            let draws = 400;
            for _ in 0..draws {
                let sample = &data[rng.gen_range(0..data.len())];
                let x = [sample.coords[0], sample.coords[1]];
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                let m = [a * x[0] + sd * e1, a * x[1] + sd * e2];
                let ideal = ideal_prediction(&schedule, &centers, spec.sigma, &m, t);
                let out = outcome
                    .network
                    .predict(Some(&m), &[], &[], t)
                    .expect("prediction");
                let dx = out.coords[0] - ideal[0];
                let dy = out.coords[1] - ideal[1];
                gap += (dx * dx + dy * dy).sqrt();
                net_norm += (out.coords[0].powi(2) + out.coords[1].powi(2)).sqrt();
                ideal_norm += (ideal[0].powi(2) + ideal[1].powi(2)).sqrt();
            }
            let n = draws as f64;
            println!(
                "  t {t:.2}: |net-ideal| {:.3}  |net| {:.3}  |ideal| {:.3}",
                gap / n,
                net_norm / n,
                ideal_norm / n
            );
        }
    }
}
