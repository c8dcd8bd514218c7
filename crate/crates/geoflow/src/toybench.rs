//! Synthetic datasets and desk-scale evaluation metrics.
//!
//! Three task families exercise the three block kinds: a 2-D Gaussian
//! mixture on a circle (coordinates only), an i.i.d. categorical task
//! (types only), and small template molecules — triangles and squares with
//! fixed types, single/double bond patterns, and coordinate jitter. The
//! metrics side provides frequency comparisons (mean absolute error and
//! Jensen–Shannon divergence), mode-coverage counts for the mixture, and a
//! per-molecule report (nearest template, centered RMSD, type/bond
//! accuracy, connectivity).
//!
//! RMSD is computed in the shared canonical frame (no rotation alignment):
//! the generator and the model see the same frame, so frame search would
//! only mask errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::pipeline::{pair_index, ToyMolecule};
use crate::{Error, Result};

/// Bond class reserved for "no bond"; connectivity ignores these edges.
pub const BOND_NONE: usize = 0;

/// Parameters of the circular 2-D Gaussian mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    /// Number of modes, equally spaced on the circle.
    pub modes: usize,
    /// Circle radius.
    pub radius: f64,
    /// Per-mode isotropic standard deviation.
    pub sigma: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        MixtureSpec { modes: 8, radius: 5.0, sigma: 0.2 }
    }
}

impl MixtureSpec {
    fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::config("a mixture needs at least one mode".to_string()));
        }
        if !self.radius.is_finite() || self.radius <= 0.0 {
            return Err(Error::config(format!(
                "mode circle radius must be positive, got {}",
                self.radius
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::config(format!(
                "mode spread must be non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Mode centers `radius·(cos 2πk/M, sin 2πk/M)`.
    pub fn mode_centers(&self) -> Vec<[f64; 2]> {
        (0..self.modes)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / self.modes as f64;
                [self.radius * angle.cos(), self.radius * angle.sin()]
            })
            .collect()
    }
}

/// Draws `size` mixture points: a uniform mode, then isotropic noise.
pub fn mixture_points(spec: &MixtureSpec, size: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    spec.validate()?;
    if size == 0 {
        return Err(Error::config("dataset size must be at least 1".to_string()));
    }
    let centers = spec.mode_centers();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..size)
        .map(|_| {
            let center = centers[rng.gen_range(0..centers.len())];
            [
                center[0] + spec.sigma * rng.sample::<f64, _>(StandardNormal),
                center[1] + spec.sigma * rng.sample::<f64, _>(StandardNormal),
            ]
        })
        .collect())
}

/// Single-site, coordinate-only state for one 2-D point.
pub fn point_molecule(point: [f64; 2]) -> ToyMolecule {
    ToyMolecule::new(1, 2, 0, 0, point.to_vec(), vec![], vec![])
        .expect("a finite point is a valid state")
}

/// The 2-D point of a single-site coordinate state.
pub fn molecule_point(molecule: &ToyMolecule) -> Result<[f64; 2]> {
    if molecule.coord_dim != 2 || molecule.n_sites != 1 {
        return Err(Error::config(
            "expected a single-site 2-D coordinate state".to_string(),
        ));
    }
    Ok([molecule.coords[0], molecule.coords[1]])
}

/// Draws `size` i.i.d. category indices from a target distribution over
/// `target.len()` classes.
pub fn categorical_draws(target: &[f64], size: usize, seed: u64) -> Result<Vec<usize>> {
    if target.len() < 2 {
        return Err(Error::config(
            "a categorical task needs at least two classes".to_string(),
        ));
    }
    if target.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::config(format!(
            "class probabilities must be non-negative, got {target:?}"
        )));
    }
    let total: f64 = target.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "class probabilities sum to {total}, expected 1"
        )));
    }
    if size == 0 {
        return Err(Error::config("dataset size must be at least 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..size)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0);
            let mut cumulative = 0.0;
            for (k, p) in target.iter().enumerate() {
                cumulative += p;
                if u < cumulative {
                    return k;
                }
            }
            target.len() - 1
        })
        .collect())
}

/// Single-site, type-only state for one category.
pub fn category_molecule(class: usize, classes: usize) -> Result<ToyMolecule> {
    if class >= classes {
        return Err(Error::config(format!(
            "class {class} out of range for {classes} classes"
        )));
    }
    let mut row = vec![0.0; classes];
    row[class] = 1.0;
    ToyMolecule::new(1, 0, classes, 0, vec![], vec![row], vec![])
}

/// The class index of an exact one-hot row, if it is one.
pub fn one_hot_class(row: &[f64]) -> Option<usize> {
    let ones = row.iter().filter(|&&v| v == 1.0).count();
    if ones == 1 && row.iter().all(|&v| v == 0.0 || v == 1.0) {
        row.iter().position(|&v| v == 1.0)
    } else {
        None
    }
}

fn one_hot_row(class: usize, classes: usize) -> Vec<f64> {
    let mut row = vec![0.0; classes];
    row[class] = 1.0;
    row
}

/// Equilateral triangle: three distinct atom types on the unit circle
/// (canonical frame, z = 0), two single bonds and one double bond.
pub fn triangle_template() -> ToyMolecule {
    let angles = [90.0_f64, 210.0, 330.0];
    let mut coords = Vec::with_capacity(9);
    for a in angles {
        let rad = a.to_radians();
        coords.extend([rad.cos(), rad.sin(), 0.0]);
    }
    let atom_types = (0..3).map(|k| one_hot_row(k, 3)).collect();
    // Pairs (0,1), (0,2), (1,2): single, single, double.
    let bond_types = vec![one_hot_row(1, 3), one_hot_row(1, 3), one_hot_row(2, 3)];
    ToyMolecule::new(3, 3, 3, 3, coords, atom_types, bond_types).expect("valid template")
}

/// Unit square with alternating atom types, single bonds along the edges,
/// and no bond across the diagonals.
pub fn square_template() -> ToyMolecule {
    let corners = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]];
    let mut coords = Vec::with_capacity(12);
    for c in corners {
        coords.extend([c[0], c[1], 0.0]);
    }
    let atom_types = vec![
        one_hot_row(0, 3),
        one_hot_row(1, 3),
        one_hot_row(0, 3),
        one_hot_row(1, 3),
    ];
    let edges = [(0, 1), (1, 2), (2, 3), (0, 3)];
    let mut bond_types = vec![one_hot_row(BOND_NONE, 3); 6];
    for (i, j) in edges {
        bond_types[pair_index(4, i, j)] = one_hot_row(1, 3);
    }
    ToyMolecule::new(4, 3, 3, 3, coords, atom_types, bond_types).expect("valid template")
}

/// The fixed template set: one triangle and one square.
pub fn standard_templates() -> Vec<ToyMolecule> {
    vec![triangle_template(), square_template()]
}

/// Draws `size` template molecules: a uniform template choice followed by
/// i.i.d. Gaussian coordinate jitter; types and bonds are copied verbatim.
pub fn template_molecules(
    templates: &[ToyMolecule],
    jitter_sigma: f64,
    size: usize,
    seed: u64,
) -> Result<Vec<ToyMolecule>> {
    if templates.is_empty() {
        return Err(Error::config("the template set must be non-empty".to_string()));
    }
    for template in templates {
        template.validate()?;
    }
    if !jitter_sigma.is_finite() || jitter_sigma < 0.0 {
        return Err(Error::config(format!(
            "jitter must be non-negative, got {jitter_sigma}"
        )));
    }
    if size == 0 {
        return Err(Error::config("dataset size must be at least 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..size)
        .map(|_| {
            let mut molecule = templates[rng.gen_range(0..templates.len())].clone();
            for x in &mut molecule.coords {
                *x += jitter_sigma * rng.sample::<f64, _>(StandardNormal);
            }
            molecule
        })
        .collect())
}

/// Which synthetic task a dataset draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetKind {
    /// Single-site 2-D points from a mixture of `modes` Gaussians on a
    /// circle of `radius` with per-mode spread `sigma`.
    #[serde(rename = "gauss_mixture_2d")]
    GaussMixture2d { modes: usize, radius: f64, sigma: f64 },
    /// Single-site one-hot types drawn i.i.d. from `target`.
    Categorical { target: Vec<f64> },
    /// Jittered copies of the standard triangle/square templates.
    TemplateMolecules { jitter: f64 },
}

/// A reproducible synthetic dataset: task, size, and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(flatten)]
    pub kind: DatasetKind,
    pub size: usize,
    pub seed: u64,
}

/// Materializes a dataset spec into training states.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<ToyMolecule>> {
    match &spec.kind {
        DatasetKind::GaussMixture2d { modes, radius, sigma } => {
            let mixture = MixtureSpec { modes: *modes, radius: *radius, sigma: *sigma };
            Ok(mixture_points(&mixture, spec.size, spec.seed)?
                .into_iter()
                .map(point_molecule)
                .collect())
        }
        DatasetKind::Categorical { target } => {
            categorical_draws(target, spec.size, spec.seed)?
                .into_iter()
                .map(|class| category_molecule(class, target.len()))
                .collect()
        }
        DatasetKind::TemplateMolecules { jitter } => {
            template_molecules(&standard_templates(), *jitter, spec.size, spec.seed)
        }
    }
}

/// Frequency agreement between two category multisets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqMetrics {
    /// Mean absolute difference of per-category frequencies.
    pub mae: f64,
    /// Jensen–Shannon divergence in bits (base 2), smoothed by 1e−9.
    pub jsd: f64,
}

fn frequencies(values: &[usize], classes: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::config("frequency metrics need non-empty inputs".to_string()));
    }
    let mut counts = vec![0usize; classes];
    for &v in values {
        if v >= classes {
            return Err(Error::config(format!(
                "category {v} out of range for {classes} classes"
            )));
        }
        counts[v] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / values.len() as f64)
        .collect())
}

const JSD_SMOOTHING: f64 = 1e-9;

/// Jensen–Shannon divergence in bits between two frequency vectors, with
/// additive smoothing so empty categories stay finite.
pub fn jsd_bits(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.len() < 2 {
        return Err(Error::config(format!(
            "frequency vectors must share at least two classes, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    let smooth = |row: &[f64]| -> Vec<f64> {
        let total: f64 = row.iter().sum::<f64>() + row.len() as f64 * JSD_SMOOTHING;
        row.iter().map(|v| (v + JSD_SMOOTHING) / total).collect()
    };
    let ps = smooth(p);
    let qs = smooth(q);
    let mut divergence = 0.0;
    for (a, b) in ps.iter().zip(&qs) {
        let m = 0.5 * (a + b);
        divergence += 0.5 * a * (a / m).log2() + 0.5 * b * (b / m).log2();
    }
    Ok(divergence.max(0.0))
}

/// Per-category frequency comparison of two category multisets over the
/// same `classes`-sized universe.
pub fn freq_metrics(
    generated: &[usize],
    reference: &[usize],
    classes: usize,
) -> Result<FreqMetrics> {
    let p = frequencies(generated, classes)?;
    let q = frequencies(reference, classes)?;
    let mae = p
        .iter()
        .zip(&q)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / classes as f64;
    Ok(FreqMetrics { mae, jsd: jsd_bits(&p, &q)? })
}

/// Mode-recovery summary for 2-D samples against a set of mode centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverage {
    /// Modes holding at least 1% of the samples within the radius.
    pub covered: usize,
    /// Mean distance from each sample to its nearest mode.
    pub mean_nearest_distance: f64,
    /// Fraction of samples within the radius of each mode.
    pub per_mode_fraction: Vec<f64>,
}

/// Coverage threshold: a mode counts as recovered when at least this
/// fraction of all samples lands within the radius.
pub const COVERAGE_THRESHOLD: f64 = 0.01;

pub fn mode_coverage(
    samples: &[[f64; 2]],
    modes: &[[f64; 2]],
    radius: f64,
) -> Result<ModeCoverage> {
    if samples.is_empty() || modes.is_empty() {
        return Err(Error::config(
            "coverage needs non-empty samples and modes".to_string(),
        ));
    }
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::config(format!("coverage radius must be positive, got {radius}")));
    }
    let mut within = vec![0usize; modes.len()];
    let mut distance_total = 0.0;
    for sample in samples {
        let mut nearest = f64::INFINITY;
        for (k, mode) in modes.iter().enumerate() {
            let d = ((sample[0] - mode[0]).powi(2) + (sample[1] - mode[1]).powi(2)).sqrt();
            nearest = nearest.min(d);
            if d <= radius {
                within[k] += 1;
            }
        }
        distance_total += nearest;
    }
    let per_mode_fraction: Vec<f64> = within
        .iter()
        .map(|&c| c as f64 / samples.len() as f64)
        .collect();
    Ok(ModeCoverage {
        covered: per_mode_fraction
            .iter()
            .filter(|&&f| f >= COVERAGE_THRESHOLD)
            .count(),
        mean_nearest_distance: distance_total / samples.len() as f64,
        per_mode_fraction,
    })
}

/// Whether the graph over non-`BOND_NONE` bond classes connects all sites.
///
/// `bond_classes` holds one class per unordered pair in lexicographic
/// (i < j) order. A single site is trivially connected; an empty bond block
/// on a multi-site state is not.
pub fn is_connected(n_sites: usize, bond_classes: &[usize]) -> bool {
    if n_sites <= 1 {
        return true;
    }
    if bond_classes.len() != n_sites * (n_sites - 1) / 2 {
        return false;
    }
    // Depth-first search from site 0 over the bonded edges.
    let mut adjacency = vec![Vec::new(); n_sites];
    let mut p = 0;
    for i in 0..n_sites {
        for j in i + 1..n_sites {
            if bond_classes[p] != BOND_NONE {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
            p += 1;
        }
    }
    let mut seen = vec![false; n_sites];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut reached = 1;
    while let Some(site) = stack.pop() {
        for &next in &adjacency[site] {
            if !seen[next] {
                seen[next] = true;
                reached += 1;
                stack.push(next);
            }
        }
    }
    reached == n_sites
}

/// The argmax class of every bond row (the sampler emits exact one-hots;
/// soft rows fall back to their dominant class).
pub fn bond_classes(molecule: &ToyMolecule) -> Vec<usize> {
    molecule
        .bond_types
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .unwrap_or(0)
        })
        .collect()
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0)
}

/// Quality report of one generated molecule against a template set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeReport {
    /// Index of the best-matching template, if any shares the site count.
    pub nearest_template: Option<usize>,
    /// Centered root-mean-square coordinate deviation under the best
    /// exhaustive atom matching (no rotation alignment).
    pub rmsd: Option<f64>,
    /// Fraction of sites whose dominant type class matches the template's.
    pub type_accuracy: Option<f64>,
    /// Fraction of pairs whose dominant bond class matches the template's.
    pub bond_accuracy: Option<f64>,
    /// Whether the non-"none" bonds connect all sites.
    pub connected: bool,
}

fn centered_sites(molecule: &ToyMolecule) -> Vec<Vec<f64>> {
    let n = molecule.n_sites;
    let d = molecule.coord_dim;
    let mut center = vec![0.0; d];
    for site in 0..n {
        for k in 0..d {
            center[k] += molecule.coords[site * d + k] / n as f64;
        }
    }
    (0..n)
        .map(|site| {
            (0..d)
                .map(|k| molecule.coords[site * d + k] - center[k])
                .collect()
        })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    fn heap(k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(current.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, current, out);
            if k % 2 == 0 {
                current.swap(i, k - 1);
            } else {
                current.swap(0, k - 1);
            }
        }
    }
    heap(n, &mut current, &mut out);
    out.sort();
    out
}

struct TemplateMatch {
    rmsd: f64,
    type_matches: usize,
    bond_matches: usize,
}

/// Best assignment of molecule sites onto template sites: minimal centered
/// coordinate cost, ties broken toward higher type then bond agreement.
fn match_template(molecule: &ToyMolecule, template: &ToyMolecule) -> TemplateMatch {
    let n = molecule.n_sites;
    let mol_sites = centered_sites(molecule);
    let tmpl_sites = centered_sites(template);
    let mol_types: Vec<usize> = molecule.atom_types.iter().map(|r| argmax(r)).collect();
    let tmpl_types: Vec<usize> = template.atom_types.iter().map(|r| argmax(r)).collect();
    let mol_bonds = bond_classes(molecule);
    let tmpl_bonds = bond_classes(template);

    let mut best: Option<(f64, usize, usize)> = None;
    for perm in permutations(n) {
        // perm[j] = molecule site assigned to template site j.
        let cost: f64 = (0..n)
            .map(|j| {
                mol_sites[perm[j]]
                    .iter()
                    .zip(&tmpl_sites[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        let type_matches = (0..n)
            .filter(|&j| mol_types[perm[j]] == tmpl_types[j])
            .count();
        let bond_matches = if molecule.k_bond > 0 && template.k_bond > 0 {
            let mut matches = 0;
            for j1 in 0..n {
                for j2 in j1 + 1..n {
                    let (a, b) = (perm[j1].min(perm[j2]), perm[j1].max(perm[j2]));
                    if mol_bonds[pair_index(n, a, b)] == tmpl_bonds[pair_index(n, j1, j2)] {
                        matches += 1;
                    }
                }
            }
            matches
        } else {
            0
        };
        let better = match &best {
            None => true,
            Some((c, t, b)) => {
                cost < c - 1e-12
                    || ((cost - c).abs() <= 1e-12
                        && (type_matches, bond_matches) > (*t, *b))
            }
        };
        if better {
            best = Some((cost, type_matches, bond_matches));
        }
    }
    let (cost, type_matches, bond_matches) = best.expect("n ≥ 1 has a permutation");
    TemplateMatch {
        rmsd: (cost / n as f64).sqrt(),
        type_matches,
        bond_matches,
    }
}

/// Compares a molecule against every template with the same site count and
/// reports the nearest one plus connectivity.
///
/// Exhaustive matching is priced for N ≤ 5 sites; larger states are
/// rejected rather than matched approximately.
pub fn molecule_checks(
    molecule: &ToyMolecule,
    templates: &[ToyMolecule],
) -> Result<MoleculeReport> {
    if templates.is_empty() {
        return Err(Error::config("the template set must be non-empty".to_string()));
    }
    molecule.validate()?;
    if molecule.n_sites > 5 {
        return Err(Error::config(
            "exhaustive atom matching is limited to 5 sites".to_string(),
        ));
    }
    // Connectivity is vacuously true without a bond block.
    let connected =
        molecule.k_bond == 0 || is_connected(molecule.n_sites, &bond_classes(molecule));

    let mut nearest: Option<(usize, TemplateMatch)> = None;
    for (index, template) in templates.iter().enumerate() {
        template.validate()?;
        if template.n_sites != molecule.n_sites
            || template.coord_dim != molecule.coord_dim
            || template.k_atom != molecule.k_atom
            || template.k_bond != molecule.k_bond
        {
            continue;
        }
        let candidate = match_template(molecule, template);
        let better = match &nearest {
            None => true,
            Some((_, best)) => candidate.rmsd < best.rmsd,
        };
        if better {
            nearest = Some((index, candidate));
        }
    }

    Ok(match nearest {
        Some((index, matched)) => {
            let n = molecule.n_sites as f64;
            let pairs = molecule.pair_count() as f64;
            MoleculeReport {
                nearest_template: Some(index),
                rmsd: Some(matched.rmsd),
                type_accuracy: Some(matched.type_matches as f64 / n),
                bond_accuracy: (molecule.k_bond > 0 && pairs > 0.0)
                    .then(|| matched.bond_matches as f64 / pairs),
                connected,
            }
        }
        // No template shares this site count: flag as unmatched.
        None => MoleculeReport {
            nearest_template: None,
            rmsd: None,
            type_accuracy: None,
            bond_accuracy: None,
            connected,
        },
    })
}
