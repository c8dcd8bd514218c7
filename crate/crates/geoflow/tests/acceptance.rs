//! Acceptance suite: ten release-gating checks, one test per criterion.
//!
//! Every criterion prints a single `ACCEPTANCE n ...: PASS/FAIL` line
//! straight to stdout (bypassing test capture, so the lines appear in plain
//! `cargo test` output) and then asserts. Tolerances are pinned next to each
//! check. The learned-task criteria (9 and 10) train real models and take a
//! few minutes; everything else runs in seconds.

use std::f64::consts::PI;
use std::io::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use geoflow::flowfield::{
    continuity_residual, fisher_fm_check_dirichlet, fisher_fm_check_gaussian, GridSpec,
};
use geoflow::geodesic::{dirichlet_path, gaussian_path, singularity_probe, EvoSchedule};
use geoflow::manifold::special::ln_gamma;
use geoflow::manifold::{kl_gaussian, GaussianParams};
use geoflow::net::{NetConfig, Network, OutputGrads};
use geoflow::objective::{coord_loss, type_loss, type_loss_from_prediction};
use geoflow::pipeline::{sample_many, train, SampleDims, ToyMolecule, TrainConfig};
use geoflow::toybench::{
    freq_metrics, generate_dataset, mode_coverage, molecule_checks, molecule_point,
    one_hot_class, standard_templates, DatasetKind, DatasetSpec, MixtureSpec,
};

/// Prints one verdict line per criterion directly to the process stdout so
/// it survives libtest's output capture, then enforces the verdict.
fn report(criterion: u32, name: &str, pass: bool, details: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("ACCEPTANCE {criterion:>2} {name}: {verdict} — {details}\n");
    std::io::stdout()
        .lock()
        .write_all(line.as_bytes())
        .expect("stdout is writable");
    assert!(pass, "criterion {criterion} ({name}) failed: {details}");
}

/// Plain relative error; zero when both values are exactly zero.
fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Relative error with a floor, so near-zero gradient components compare on
/// an absolute scale instead of blowing up the quotient.
fn guarded_rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

/// The evaluation grid shared by the path-exactness checks: both endpoints'
/// neighbourhoods plus the interior decades.
fn exactness_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=9).map(|i| i as f64 / 10.0).collect();
    grid.push(1.0 - 1e-6);
    grid
}

// ---------------------------------------------------------------------------
// 1. Path exactness against a literal transcription of the closed forms.
// ---------------------------------------------------------------------------

/// Independent oracle: the evolving coordinate path written out exactly as
/// the defining equations read, with no shared code.
fn oracle_evolving_gaussian(t: f64, x: f64) -> (f64, f64) {
    let sigma1 = 0.2 * (1.0 - t) + 1e-6;
    let sigma_t = ((1.0 - t) + t / (sigma1 * sigma1)).powf(-0.5);
    let mu_t = sigma_t * sigma_t * (t * x / (sigma1 * sigma1));
    (mu_t, sigma_t)
}

fn oracle_evolving_alpha(t: f64, one_hot: &[f64]) -> Vec<f64> {
    let k = one_hot.len() as f64;
    one_hot
        .iter()
        .map(|&v| {
            let a1 = (1.0 - 0.2 * (1.0 - t)) * v + 0.2 * (1.0 - t) / k;
            (1.0 - t) * 1.0 + t * a1
        })
        .collect()
}

/// Static counterpart: fixed endpoint scale σ₁ (prior N(0, 1)).
fn oracle_static_gaussian(t: f64, x: f64, sigma1: f64) -> (f64, f64) {
    let precision = (1.0 - t) / 1.0 + t / (sigma1 * sigma1);
    let variance = 1.0 / precision;
    let mu = variance * (t * x / (sigma1 * sigma1));
    (mu, variance.sqrt())
}

/// Static categorical endpoint: flat prior toward 1 + (a₁ − 1)·one-hot.
fn oracle_static_alpha(t: f64, one_hot: &[f64], a1: f64) -> Vec<f64> {
    one_hot
        .iter()
        .map(|&v| (1.0 - t) * 1.0 + t * (1.0 + (a1 - 1.0) * v))
        .collect()
}

#[test]
fn criterion_01_paths_match_the_arithmetic_oracle() {
    const TOLERANCE: f64 = 1e-9;
    let grid = exactness_grid();
    let mut worst = 0.0_f64;

    let evo = EvoSchedule::evo_default();
    for &t in &grid {
        for x in [-2.5, 0.3, 1.7] {
            let point = gaussian_path(&evo, &[x], t).expect("evolving coordinate path");
            let (mu, sigma) = oracle_evolving_gaussian(t, x);
            worst = worst.max(rel(point.mean[0], mu)).max(rel(point.sigma(), sigma));
        }
        // A multi-component block shares the scale and maps each component.
        let point = gaussian_path(&evo, &[-1.0, 0.25, 2.0], t).expect("vector path");
        for (component, x) in point.mean.iter().zip([-1.0, 0.25, 2.0]) {
            worst = worst.max(rel(*component, oracle_evolving_gaussian(t, x).0));
        }

        for classes in [3usize, 5] {
            let mut one_hot = vec![0.0; classes];
            one_hot[classes - 1] = 1.0;
            let alpha = dirichlet_path(&evo, &one_hot, t).expect("evolving categorical path");
            for (a, b) in alpha.iter().zip(oracle_evolving_alpha(t, &one_hot)) {
                worst = worst.max(rel(*a, b));
            }
        }
    }

    for sigma1 in [1e-3, 0.5] {
        let schedule = EvoSchedule::static_egf(sigma1, 8.0).expect("static schedule");
        for &t in &grid {
            for x in [-2.5, 1.7] {
                let point = gaussian_path(&schedule, &[x], t).expect("static coordinate path");
                let (mu, sigma) = oracle_static_gaussian(t, x, sigma1);
                worst = worst.max(rel(point.mean[0], mu)).max(rel(point.sigma(), sigma));
            }
            let one_hot = [0.0, 1.0, 0.0];
            let alpha = dirichlet_path(&schedule, &one_hot, t).expect("static categorical path");
            for (a, b) in alpha.iter().zip(oracle_static_alpha(t, &one_hot, 8.0)) {
                worst = worst.max(rel(*a, b));
            }
        }
    }

    report(
        1,
        "path-exactness",
        worst <= TOLERANCE,
        &format!("max relative deviation {worst:.3e} (tolerance {TOLERANCE:.0e})"),
    );
}

// ---------------------------------------------------------------------------
// 2. The coordinate loss is the KL divergence of the induced intermediates.
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_coordinate_loss_equals_gaussian_kl() {
    const TOLERANCE: f64 = 1e-9;
    let schedules = [
        EvoSchedule::evo_default(),
        EvoSchedule::static_egf(0.5, 8.0).expect("static schedule"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0_f64;
    for case in 0..1000 {
        let schedule = &schedules[case % 2];
        let t = rng.gen_range(0.02..0.98);
        let dim = rng.gen_range(1..=3);
        let x_true: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x_pred: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();

        let loss = coord_loss(schedule, &x_true, &x_pred, t).expect("coordinate loss").value;
        let p = gaussian_path(schedule, &x_true, t).expect("true path");
        let q = gaussian_path(schedule, &x_pred, t).expect("predicted path");
        let p = GaussianParams::new(p.mean.clone(), p.sigma()).expect("true intermediate");
        let q = GaussianParams::new(q.mean.clone(), q.sigma()).expect("predicted intermediate");
        let divergence = kl_gaussian(&p, &q).expect("closed-form divergence");
        worst = worst.max(rel(loss, divergence));
    }
    report(
        2,
        "coordinate-loss-is-kl",
        worst <= TOLERANCE,
        &format!("max relative deviation {worst:.3e} over 1000 triples (tolerance {TOLERANCE:.0e})"),
    );
}

// ---------------------------------------------------------------------------
// 3. The categorical loss matches a Monte-Carlo KL oracle, in the
//    prediction-first direction specifically.
// ---------------------------------------------------------------------------

fn dirichlet_log_density(alpha: &[f64], w: &[f64]) -> f64 {
    let log_normalizer: f64 = alpha
        .iter()
        .map(|&a| ln_gamma(a).expect("positive concentration"))
        .sum::<f64>()
        - ln_gamma(alpha.iter().sum()).expect("positive total");
    -log_normalizer
        + alpha
            .iter()
            .zip(w)
            .map(|(a, x)| (a - 1.0) * x.ln())
            .sum::<f64>()
}

/// Monte-Carlo estimate of KL(Dir(from) ‖ Dir(to)) with its standard error,
/// drawing through normalized Gamma variates so the estimate shares no code
/// with the closed forms under test.
fn mc_dirichlet_kl(from: &[f64], to: &[f64], draws: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let gammas: Vec<Gamma<f64>> = from
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape"))
        .collect();
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut w = vec![0.0; from.len()];
    for n in 1..=draws {
        let mut total = 0.0;
        for (slot, gamma) in w.iter_mut().zip(&gammas) {
            *slot = gamma.sample(rng);
            total += *slot;
        }
        for slot in &mut w {
            *slot /= total;
        }
        let value = dirichlet_log_density(from, &w) - dirichlet_log_density(to, &w);
        let delta = value - mean;
        mean += delta / n as f64;
        m2 += delta * (value - mean);
    }
    let variance = m2 / (draws - 1) as f64;
    (mean, (variance / draws as f64).sqrt())
}

#[test]
fn criterion_03_categorical_loss_matches_monte_carlo_kl() {
    const DRAWS: usize = 1_000_000;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_z = 0.0_f64;
    for pair in 0..20 {
        let classes = 3 + pair % 3;
        let alpha_true: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.3..4.0)).collect();
        let alpha_pred: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.3..4.0)).collect();
        let loss = type_loss(&alpha_true, &alpha_pred).expect("categorical loss").value;
        // The loss reads prediction-first, so the oracle draws from the
        // predicted row.
        let (estimate, se) = mc_dirichlet_kl(&alpha_pred, &alpha_true, DRAWS, &mut rng);
        worst_z = worst_z.max((loss - estimate).abs() / se);
    }

    // Direction demonstration: on an asymmetric pair the same oracle agrees
    // with the loss in the prediction-first direction and rejects the
    // reversed reading outright.
    let alpha_true = [0.5, 0.5, 3.0];
    let alpha_pred = [2.5, 1.0, 0.4];
    let loss = type_loss(&alpha_true, &alpha_pred).expect("categorical loss").value;
    let (forward, forward_se) = mc_dirichlet_kl(&alpha_pred, &alpha_true, DRAWS, &mut rng);
    let (reverse, reverse_se) = mc_dirichlet_kl(&alpha_true, &alpha_pred, DRAWS, &mut rng);
    let forward_z = (loss - forward).abs() / forward_se;
    let reverse_z = (loss - reverse).abs() / reverse_se;
    let elapsed = started.elapsed().as_secs_f64();

    let pass = worst_z <= 3.0 && forward_z <= 3.0 && reverse_z > 20.0 && elapsed < 120.0;
    report(
        3,
        "categorical-loss-oracle",
        pass,
        &format!(
            "max |z| {worst_z:.2} over 20 pairs (bound 3); direction split z {forward_z:.2} vs {reverse_z:.0}; {elapsed:.1}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Divergence of nearby path points ≈ ½·Fisher quadratic form.
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_fisher_flow_matching_ratios_stay_in_band() {
    let mut worst_gaussian = 0.0_f64;
    let static_schedule = EvoSchedule::static_egf(0.85, 2.0).expect("static schedule");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let ratio = fisher_fm_check_gaussian(&static_schedule, &[1.0], 0.5, 1e-3, 1e-3, &mut rng)
            .expect("static ratio");
        worst_gaussian = worst_gaussian.max((ratio - 1.0).abs());
    }
    let evo = EvoSchedule::evo_default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for t in [0.25, 0.5] {
        for _ in 0..100 {
            let ratio = fisher_fm_check_gaussian(&evo, &[2.0], t, 1e-3, 1e-5, &mut rng)
                .expect("evolving ratio");
            worst_gaussian = worst_gaussian.max((ratio - 1.0).abs());
        }
    }

    let mut worst_dirichlet = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for classes in [3usize, 7] {
        let mut one_hot = vec![0.0; classes];
        one_hot[0] = 1.0;
        for _ in 0..100 {
            let ratio = fisher_fm_check_dirichlet(&evo, &one_hot, 0.5, 1e-3, 1e-3, &mut rng)
                .expect("categorical ratio");
            worst_dirichlet = worst_dirichlet.max((ratio - 1.0).abs());
        }
    }

    let pass = worst_gaussian <= 0.01 && worst_dirichlet <= 0.02;
    report(
        4,
        "fisher-metric-ratio",
        pass,
        &format!(
            "max |ratio−1|: coordinate {worst_gaussian:.4} (bound 0.01), categorical {worst_dirichlet:.4} (bound 0.02)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. The analytic velocity satisfies the continuity equation on a grid.
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_continuity_residuals_stay_small() {
    const BOUND: f64 = 1e-4;
    let schedule = EvoSchedule::evo_default();
    let spec = GridSpec::default();
    let mut worst = 0.0_f64;
    for target in [-1.3, 0.7, 2.0] {
        for i in 1..=9 {
            let t = i as f64 / 10.0;
            let residual = continuity_residual(&schedule, target, t, &spec)
                .expect("grid residual")
                .max_residual;
            worst = worst.max(residual);
        }
    }
    report(
        5,
        "continuity-residual",
        worst <= BOUND,
        &format!("max grid residual {worst:.3e} over 27 slices (bound {BOUND:.0e})"),
    );
}

// ---------------------------------------------------------------------------
// 6. The degenerate equal-scale schedule reproduces straight-line diffusion.
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_degenerate_schedule_reproduces_straight_line_diffusion() {
    const BOUND: f64 = 1e-12;
    let mut worst_sigma = 0.0_f64;
    let mut worst_curvature = 0.0_f64;
    for eps in [0.05, 1e-6] {
        let schedule = EvoSchedule::sldm(eps).expect("degenerate schedule");
        for target in [-1.5, 2.0] {
            let mut means = Vec::with_capacity(1001);
            for i in 0..=1000 {
                let t = i as f64 / 1000.0;
                let point = gaussian_path(&schedule, &[target], t).expect("degenerate path");
                worst_sigma = worst_sigma.max((point.sigma() - eps).abs());
                worst_sigma = worst_sigma.max((point.mean[0] - t * target).abs());
                means.push(point.mean[0]);
            }
            for window in means.windows(3) {
                worst_curvature = worst_curvature.max((window[2] - 2.0 * window[1] + window[0]).abs());
            }
        }
    }
    let pass = worst_sigma <= BOUND && worst_curvature <= BOUND;
    report(
        6,
        "straight-line-degeneration",
        pass,
        &format!(
            "max |σ_t−ε| and |μ_t−t·x*| {worst_sigma:.2e}, max second difference {worst_curvature:.2e} (bound {BOUND:.0e})"
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Static schedules collapse at the predicted time; the evolving one
//    keeps its scale through the first half.
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_static_scale_collapse_time_is_reproduced() {
    const TIME_TOLERANCE: f64 = 1e-6;
    let expected = (1e4 - 1.0) / (1e6 - 1.0);
    let closed_form = singularity_probe(1e-3, 0.01)
        .expect("collapse probe")
        .expect("a crossing exists");

    // Independent reproduction: bisect the static path's scale directly.
    let static_schedule = EvoSchedule::static_egf(1e-3, 100.0).expect("static schedule");
    let sigma_at = |t: f64| {
        gaussian_path(&static_schedule, &[0.0], t)
            .expect("static path")
            .sigma()
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if sigma_at(mid) > 0.01 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bisected = 0.5 * (lo + hi);

    let evo = EvoSchedule::evo_default();
    let mut min_sigma = f64::INFINITY;
    for i in 0..=5000 {
        let t = i as f64 * 1e-4;
        min_sigma = min_sigma.min(gaussian_path(&evo, &[0.0], t).expect("evolving path").sigma());
    }

    let pass = (closed_form - expected).abs() <= TIME_TOLERANCE
        && (bisected - expected).abs() <= TIME_TOLERANCE
        && min_sigma > 0.1;
    report(
        7,
        "scale-collapse-time",
        pass,
        &format!(
            "closed form {closed_form:.9}, bisection {bisected:.9}, expected {expected:.9} (±{TIME_TOLERANCE:.0e}); evolving min σ {min_sigma:.4} > 0.1 on [0, 0.5]"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Every analytic gradient agrees with central finite differences.
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_analytic_gradients_match_finite_differences() {
    const TOLERANCE: f64 = 1e-5;
    let schedules = [
        EvoSchedule::evo_default(),
        EvoSchedule::static_egf(0.5, 8.0).expect("static schedule"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut worst = 0.0_f64;

    // Coordinate-loss gradient, one random component per case.
    for case in 0..1000 {
        let schedule = &schedules[case % 2];
        let t = rng.gen_range(0.05..0.95);
        let dim = rng.gen_range(1..=3);
        let x_true: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x_pred: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let component = rng.gen_range(0..dim);
        let analytic = coord_loss(schedule, &x_true, &x_pred, t).expect("loss").grad[component];
        let h = 1e-6 * x_pred[component].abs().max(1.0);
        let mut plus = x_pred.clone();
        plus[component] += h;
        let mut minus = x_pred.clone();
        minus[component] -= h;
        let fd = (coord_loss(schedule, &x_true, &plus, t).expect("loss").value
            - coord_loss(schedule, &x_true, &minus, t).expect("loss").value)
            / (2.0 * h);
        worst = worst.max(guarded_rel(analytic, fd));
    }

    // Concentration-row gradient of the categorical loss.
    for _ in 0..1000 {
        let classes = rng.gen_range(2..=6);
        let alpha_true: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.2..5.0)).collect();
        let alpha_pred: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.2..5.0)).collect();
        let component = rng.gen_range(0..classes);
        let analytic = type_loss(&alpha_true, &alpha_pred).expect("loss").grad[component];
        let h = 1e-6 * alpha_pred[component].abs().max(1.0);
        let mut plus = alpha_pred.clone();
        plus[component] += h;
        let mut minus = alpha_pred.clone();
        minus[component] -= h;
        let fd = (type_loss(&alpha_true, &plus).expect("loss").value
            - type_loss(&alpha_true, &minus).expect("loss").value)
            / (2.0 * h);
        worst = worst.max(guarded_rel(analytic, fd));
    }

    // Simplex-prediction gradient chained through the path construction.
    for case in 0..1000 {
        let schedule = &schedules[case % 2];
        let t = rng.gen_range(0.05..0.95);
        let classes = rng.gen_range(2..=4);
        let mut truth = vec![0.0; classes];
        truth[rng.gen_range(0..classes)] = 1.0;
        let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let simplex: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let component = rng.gen_range(0..classes);
        let analytic =
            type_loss_from_prediction(schedule, &truth, &simplex, t).expect("loss").grad[component];
        // The loss treats rows coordinate-wise, so the off-simplex
        // perturbation is well defined.
        let h = 1e-6;
        let mut plus = simplex.clone();
        plus[component] += h;
        let mut minus = simplex.clone();
        minus[component] -= h;
        let fd = (type_loss_from_prediction(schedule, &truth, &plus, t).expect("loss").value
            - type_loss_from_prediction(schedule, &truth, &minus, t).expect("loss").value)
            / (2.0 * h);
        worst = worst.max(guarded_rel(analytic, fd));
    }

    // Network reverse pass: random linear functionals of the outputs,
    // differentiated against every-nth-parameter central differences.
    let config = NetConfig::new(2, 3, 2, 6).expect("network shape");
    let network = Network::new(config, 99).expect("network");
    let mut net_worst = 0.0_f64;
    for _ in 0..20 {
        let n_sites = rng.gen_range(1..=3);
        let pairs = n_sites * (n_sites - 1) / 2;
        let coords: Vec<f64> = (0..2 * n_sites).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let simplex_row = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|p| p / total).collect()
        };
        let types: Vec<Vec<f64>> = (0..n_sites).map(|_| simplex_row(&mut rng, 3)).collect();
        let bonds: Vec<Vec<f64>> = (0..pairs).map(|_| simplex_row(&mut rng, 2)).collect();
        let t = rng.gen_range(0.05..0.95);

        let upstream = OutputGrads {
            coords: (0..2 * n_sites).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            types: (0..n_sites)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            bonds: (0..pairs)
                .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
        };
        let functional = |net: &Network| -> f64 {
            let out = net
                .forward(Some(&coords), &types, &bonds, t, None)
                .expect("forward pass");
            let mut value: f64 = out.coords.iter().zip(&upstream.coords).map(|(o, c)| o * c).sum();
            for (row, coeff) in out.types.iter().zip(&upstream.types) {
                value += row.iter().zip(coeff).map(|(o, c)| o * c).sum::<f64>();
            }
            for (row, coeff) in out.bonds.iter().zip(&upstream.bonds) {
                value += row.iter().zip(coeff).map(|(o, c)| o * c).sum::<f64>();
            }
            value
        };

        let (_, cache) = network
            .forward_cached(Some(&coords), &types, &bonds, t, None)
            .expect("forward pass");
        let analytic = network.backward(&cache, &upstream).expect("reverse pass");
        let mut perturbed = network.clone();
        for index in (0..analytic.len()).step_by(7) {
            let h = 1e-5;
            let original = perturbed.params()[index];
            perturbed.params_mut()[index] = original + h;
            let plus = functional(&perturbed);
            perturbed.params_mut()[index] = original - h;
            let minus = functional(&perturbed);
            perturbed.params_mut()[index] = original;
            net_worst = net_worst.max(guarded_rel(analytic[index], (plus - minus) / (2.0 * h)));
        }
    }
    worst = worst.max(net_worst);

    report(
        8,
        "gradient-exactness",
        worst <= TOLERANCE,
        &format!(
            "max guarded relative deviation {worst:.3e} across loss and reverse-pass gradients (tolerance {TOLERANCE:.0e})"
        ),
    );
}

// ---------------------------------------------------------------------------
// 9 & 10. Learned tasks.
// ---------------------------------------------------------------------------

/// Budget-pinned settings for the learned criteria: the step count, batch
/// size, endpoint rate, and sampling-step count are fixed; network width and
/// learning rate are free and tuned for the CPU-scale network.
const MIXTURE_STEPS: usize = 20_000;
const BATCH_SIZE: usize = 64;
const SAMPLING_STEPS: usize = 100;
const MIXTURE_HIDDEN: usize = 128;
const MIXTURE_LEARNING_RATE: f64 = 5e-4;

struct MixtureOutcome {
    covered: usize,
    mean_distance: f64,
    jsd: f64,
}

/// Trains one schedule on a planar mixture dataset and scores its samples:
/// mode coverage, mean distance to the nearest mode, and the divergence of
/// the per-mode counts from uniform.
fn mixture_run(
    schedule: EvoSchedule,
    steps: usize,
    hidden: usize,
    data: &[ToyMolecule],
    train_seed: u64,
    samples: usize,
    sample_seed: u64,
) -> MixtureOutcome {
    let mut config = TrainConfig::new(schedule, steps);
    config.batch_size = BATCH_SIZE;
    config.hidden = hidden;
    config.learning_rate = MIXTURE_LEARNING_RATE;
    config.seed = train_seed;
    let outcome = train(&config, data).expect("mixture training");

    let dims = SampleDims::of_network(&outcome.network, 1);
    let molecules = sample_many(
        &schedule,
        &outcome.network,
        &dims,
        SAMPLING_STEPS,
        sample_seed,
        samples,
    )
    .expect("mixture sampling");
    let points: Vec<[f64; 2]> = molecules
        .iter()
        .map(|m| molecule_point(m).expect("planar state"))
        .collect();

    let spec = MixtureSpec::default();
    let centers = spec.mode_centers();
    let spacing = 2.0 * spec.radius * (PI / centers.len() as f64).sin();
    let radius = spacing / 4.0;
    let coverage = mode_coverage(&points, &centers, radius).expect("coverage");
    // Samples that land on a mode take its index; strays share an extra
    // off-mode class, so collapsed runs cannot masquerade as balanced.
    let nearest = |p: &[f64; 2]| -> usize {
        let (index, distance_sq) = centers
            .iter()
            .enumerate()
            .map(|(k, c)| (k, (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("mode list is non-empty");
        if distance_sq <= radius * radius {
            index
        } else {
            centers.len()
        }
    };
    let assigned: Vec<usize> = points.iter().map(nearest).collect();
    let reference: Vec<usize> = (0..samples).map(|i| i % centers.len()).collect();
    let frequencies = freq_metrics(&assigned, &reference, centers.len() + 1).expect("frequencies");

    MixtureOutcome {
        covered: coverage.covered,
        mean_distance: coverage.mean_nearest_distance,
        jsd: frequencies.jsd,
    }
}

fn mixture_dataset(size: usize, seed: u64) -> Vec<ToyMolecule> {
    let spec = MixtureSpec::default();
    generate_dataset(&DatasetSpec {
        kind: DatasetKind::GaussMixture2d {
            modes: spec.modes,
            radius: spec.radius,
            sigma: spec.sigma,
        },
        size,
        seed,
    })
    .expect("mixture dataset")
}

#[test]
fn criterion_09_end_to_end_toy_generation_meets_quality_bars() {
    let started = Instant::now();
    let mode_sigma = MixtureSpec::default().sigma;

    // Planar mixture: cover ≥ 7 of 8 modes, land within 3 mode widths.
    let data = mixture_dataset(4096, 901);
    let mixture = mixture_run(
        EvoSchedule::evo_default(),
        MIXTURE_STEPS,
        MIXTURE_HIDDEN,
        &data,
        902,
        2000,
        903,
    );
    let mixture_pass = mixture.covered >= 7 && mixture.mean_distance < 3.0 * mode_sigma;

    // Categorical frequencies: recover the target to < 0.01 bit.
    let target = [0.6, 0.25, 0.15];
    let data = generate_dataset(&DatasetSpec {
        kind: DatasetKind::Categorical { target: target.to_vec() },
        size: 4096,
        seed: 911,
    })
    .expect("categorical dataset");
    let mut config = TrainConfig::new(EvoSchedule::evo_default(), 6000);
    config.batch_size = BATCH_SIZE;
    config.hidden = 32;
    config.learning_rate = 1e-3;
    config.seed = 912;
    let outcome = train(&config, &data).expect("categorical training");
    let dims = SampleDims::of_network(&outcome.network, 1);
    let molecules = sample_many(
        &EvoSchedule::evo_default(),
        &outcome.network,
        &dims,
        SAMPLING_STEPS,
        913,
        4000,
    )
    .expect("categorical sampling");
    let generated: Vec<usize> = molecules
        .iter()
        .map(|m| one_hot_class(&m.atom_types[0]).expect("terminal draws are one-hot"))
        .collect();
    // 4000 · (0.6, 0.25, 0.15) is integral, so the reference realizes the
    // target frequencies exactly.
    let reference: Vec<usize> = target
        .iter()
        .enumerate()
        .flat_map(|(class, p)| {
            std::iter::repeat(class).take((p * 4000.0).round() as usize)
        })
        .collect();
    let frequencies = freq_metrics(&generated, &reference, 3).expect("frequencies");
    let categorical_pass = frequencies.jsd < 0.01;

    // Template states: connected with faithful site types.
    let data = generate_dataset(&DatasetSpec {
        kind: DatasetKind::TemplateMolecules { jitter: 0.05 },
        size: 4096,
        seed: 921,
    })
    .expect("template dataset");
    let mut config = TrainConfig::new(EvoSchedule::evo_default(), 12_000);
    config.batch_size = BATCH_SIZE;
    config.hidden = 64;
    config.learning_rate = 1e-3;
    config.seed = 922;
    let outcome = train(&config, &data).expect("template training");
    let templates = standard_templates();
    let mut reports = Vec::new();
    for (group, n_sites) in [3usize, 4].iter().enumerate() {
        let dims = SampleDims::of_network(&outcome.network, *n_sites);
        let molecules = sample_many(
            &EvoSchedule::evo_default(),
            &outcome.network,
            &dims,
            SAMPLING_STEPS,
            923 + group as u64,
            200,
        )
        .expect("template sampling");
        for molecule in &molecules {
            reports.push(molecule_checks(molecule, &templates).expect("structure report"));
        }
    }
    let connected = reports.iter().filter(|r| r.connected).count() as f64 / reports.len() as f64;
    let type_accuracy = reports
        .iter()
        .filter_map(|r| r.type_accuracy)
        .sum::<f64>()
        / reports.len() as f64;
    let template_pass = connected >= 0.95 && type_accuracy >= 0.90;

    let elapsed = started.elapsed().as_secs_f64();
    let pass = mixture_pass && categorical_pass && template_pass && elapsed < 1800.0;
    report(
        9,
        "end-to-end-generation",
        pass,
        &format!(
            "mixture {}/8 modes, mean distance {:.3} (< {:.1}); class divergence {:.5} bit (< 0.01); connected {:.1}%, site-type accuracy {:.1}%; {:.0}s on {} threads",
            mixture.covered,
            mixture.mean_distance,
            3.0 * mode_sigma,
            frequencies.jsd,
            100.0 * connected,
            100.0 * type_accuracy,
            elapsed,
            rayon::current_num_threads(),
        ),
    );
}

#[test]
fn criterion_10_evolving_beats_static_under_identical_budgets() {
    const ABLATION_STEPS: usize = 6000;
    let mut evo_coverage = 0.0;
    let mut evo_jsd = 0.0;
    let mut static_coverage = 0.0;
    let mut static_jsd = 0.0;
    for seed in [41u64, 42, 43] {
        let data = mixture_dataset(4096, 1000 + seed);
        let evo = mixture_run(
            EvoSchedule::evo_default(),
            ABLATION_STEPS,
            MIXTURE_HIDDEN,
            &data,
            seed,
            1500,
            seed + 100,
        );
        let collapsed = mixture_run(
            EvoSchedule::static_egf(1e-3, 100.0).expect("static schedule"),
            ABLATION_STEPS,
            MIXTURE_HIDDEN,
            &data,
            seed,
            1500,
            seed + 100,
        );
        evo_coverage += evo.covered as f64 / 3.0;
        evo_jsd += evo.jsd / 3.0;
        static_coverage += collapsed.covered as f64 / 3.0;
        static_jsd += collapsed.jsd / 3.0;
    }
    let pass = evo_coverage > static_coverage && evo_jsd < static_jsd;
    report(
        10,
        "evolving-vs-static-ablation",
        pass,
        &format!(
            "coverage {evo_coverage:.2} vs {static_coverage:.2} modes, divergence {evo_jsd:.4} vs {static_jsd:.4} bit (3-seed means, evolving first)"
        ),
    );
}
