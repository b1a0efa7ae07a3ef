//! Genetic search over movable element placements.
//!
//! Each individual encodes one `(x_left, y_top, width, height)` quadruple per
//! movable element. Selection is by tournament on energy (lower wins),
//! crossover swaps whole element quadruples between parents, and mutation
//! adds Gaussian noise to individual genes before clamping the element back
//! onto the canvas and into its size bounds.
//!
//! All random draws happen on the sequential path from a single seeded
//! ChaCha stream; energy evaluation runs in parallel and is pure, so a run is
//! a deterministic function of `(problem, config)`.

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    total_energy, DimBounds, ElementBox, ElementKind, EnergyBreakdown, EnergyError, EnergyWeights,
    Layout, SizeBounds,
};
use crate::geometry::BBox;

#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("invalid GA configuration: {0}")]
    Config(String),
    #[error("invalid layout problem: {0}")]
    Problem(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("brute force is limited to {max_elements} movable elements and {max_steps} grid steps: {detail}")]
    Intractable {
        max_elements: usize,
        max_steps: usize,
        detail: String,
    },
}

pub type Rng64 = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GAConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub per_gene_mutation_prob: f64,
    pub tournament_size: usize,
    pub elitism: usize,
    /// Mutation standard deviation as a fraction of the canvas dimension.
    pub mutation_sigma: f64,
    pub rng_seed: u64,
}

impl Default for GAConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            generations: 150,
            crossover_prob: 0.7,
            mutation_prob: 0.2,
            per_gene_mutation_prob: 0.25,
            tournament_size: 3,
            elitism: 2,
            mutation_sigma: 0.05,
            rng_seed: 0,
        }
    }
}

impl GAConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn check(&self) -> Result<(), GaError> {
        let err = |m: &str| Err(GaError::Config(m.to_string()));
        if self.population_size < 2 {
            return err("population_size must be >= 2");
        }
        if self.elitism >= self.population_size {
            return err("elitism must be < population_size");
        }
        if self.tournament_size < 1 {
            return err("tournament_size must be >= 1");
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("per_gene_mutation_prob", self.per_gene_mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GaError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.mutation_sigma.is_finite() && self.mutation_sigma >= 0.0) {
            return err("mutation_sigma must be finite and >= 0");
        }
        Ok(())
    }
}

/// A movable element to be placed: its kind and nominal size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovableSpec {
    pub kind: ElementKind,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutProblem {
    pub canvas_width: f64,
    pub canvas_height: f64,
    #[serde(default)]
    pub fixed: Vec<ElementBox>,
    pub movable: Vec<MovableSpec>,
    pub bounds: SizeBounds,
    #[serde(default)]
    pub weights: EnergyWeights,
}

impl LayoutProblem {
    pub fn check(&self) -> Result<(), GaError> {
        if !(self.canvas_width > 0.0 && self.canvas_height > 0.0) {
            return Err(GaError::Problem(
                "canvas dimensions must be positive".into(),
            ));
        }
        if self.movable.is_empty() {
            return Err(GaError::Problem(
                "at least one movable element is required".into(),
            ));
        }
        if let Some(s) = self.movable.iter().find(|s| !s.kind.is_movable()) {
            return Err(GaError::Problem(format!(
                "{} elements are not movable",
                s.kind.name()
            )));
        }
        if self.fixed.iter().any(|e| e.movable) {
            return Err(GaError::Problem(
                "fixed elements must not be movable".into(),
            ));
        }
        self.bounds.check(self.canvas_width, self.canvas_height)?;
        self.weights.check()?;
        Ok(())
    }

    fn dim_bounds(&self, i: usize) -> &DimBounds {
        self.bounds
            .for_kind(self.movable[i].kind)
            .expect("movable kinds have bounds")
    }

    pub fn gene_count(&self) -> usize {
        4 * self.movable.len()
    }

    /// Layout of the fixed boxes plus the movable elements placed by `genes`.
    pub fn decode(&self, genes: &[f64]) -> Layout {
        let mut layout = Layout::new(self.canvas_width, self.canvas_height);
        layout.elements.extend(self.fixed.iter().copied());
        for (spec, q) in self.movable.iter().zip(genes.chunks_exact(4)) {
            layout.elements.push(ElementBox::movable(
                spec.kind,
                BBox::from_xywh(q[0], q[1], q[2], q[3]),
            ));
        }
        layout
    }

    pub fn evaluate(&self, genes: &[f64]) -> EnergyBreakdown {
        total_energy(&self.decode(genes), &self.weights, &self.bounds)
    }

    /// Clamp every element's size into its bounds and its position onto the canvas.
    fn repair(&self, genes: &mut [f64]) {
        for (i, q) in genes.chunks_exact_mut(4).enumerate() {
            let b = self.dim_bounds(i);
            q[2] = q[2].clamp(b.min_width, b.max_width);
            q[3] = q[3].clamp(b.min_height, b.max_height);
            q[0] = q[0].clamp(0.0, self.canvas_width - q[2]);
            q[1] = q[1].clamp(0.0, self.canvas_height - q[3]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genes: Vec<f64>,
    /// Cached total energy; `None` after any gene changes.
    pub energy: Option<f64>,
}

impl Individual {
    pub fn new(genes: Vec<f64>) -> Self {
        Self {
            genes,
            energy: None,
        }
    }

    /// Fitness is the negated energy.
    pub fn fitness(&self) -> Option<f64> {
        self.energy.map(|e| -e)
    }

    fn energy_or_inf(&self) -> f64 {
        self.energy.unwrap_or(f64::INFINITY)
    }
}

fn sample_individual(prob: &LayoutProblem, rng: &mut Rng64) -> Individual {
    let mut genes = Vec::with_capacity(prob.gene_count());
    for i in 0..prob.movable.len() {
        let b = prob.dim_bounds(i);
        let w = rng.random_range(b.min_width..=b.max_width);
        let h = rng.random_range(b.min_height..=b.max_height);
        let x = rng.random_range(0.0..=prob.canvas_width - w);
        let y = rng.random_range(0.0..=prob.canvas_height - h);
        genes.extend_from_slice(&[x, y, w, h]);
    }
    Individual::new(genes)
}

/// Random individuals with uniform sizes within bounds and uniform on-canvas
/// positions.
pub fn init_population(
    cfg: &GAConfig,
    prob: &LayoutProblem,
    rng: &mut Rng64,
) -> Result<Vec<Individual>, GaError> {
    cfg.check()?;
    prob.check()?;
    Ok((0..cfg.population_size)
        .map(|_| sample_individual(prob, rng))
        .collect())
}

fn better(pop: &[Individual], a: usize, b: usize) -> usize {
    let (ea, eb) = (pop[a].energy_or_inf(), pop[b].energy_or_inf());
    if ea < eb || (ea == eb && a < b) {
        a
    } else {
        b
    }
}

/// Tournament selection. Each pick draws `tournament_size` distinct
/// individuals (capped at the population size) and keeps the lowest energy.
/// Returns indices into `population`.
pub fn select(population: &[Individual], k: usize, cfg: &GAConfig, rng: &mut Rng64) -> Vec<usize> {
    let n = population.len();
    if n == 0 {
        return Vec::new();
    }
    let t = cfg.tournament_size.clamp(1, n);
    (0..k)
        .map(|_| {
            index::sample(rng, n, t)
                .into_iter()
                .reduce(|a, b| better(population, a, b))
                .expect("tournament is non-empty")
        })
        .collect()
}

/// Element-granular uniform crossover: each element's quadruple is swapped
/// between the children with probability 1/2.
pub fn crossover(a: &Individual, b: &Individual, rng: &mut Rng64) -> (Individual, Individual) {
    let mut c1 = a.clone();
    let mut c2 = b.clone();
    let mut swapped = false;
    for (q1, q2) in c1
        .genes
        .chunks_exact_mut(4)
        .zip(c2.genes.chunks_exact_mut(4))
    {
        if rng.random_bool(0.5) {
            q1.swap_with_slice(q2);
            swapped = true;
        }
    }
    if swapped {
        c1.energy = None;
        c2.energy = None;
    }
    (c1, c2)
}

/// Gaussian per-gene mutation followed by clamping into bounds.
pub fn mutate(
    ind: &Individual,
    prob: &LayoutProblem,
    cfg: &GAConfig,
    rng: &mut Rng64,
) -> Individual {
    let mut out = ind.clone();
    let dims = [prob.canvas_width, prob.canvas_height];
    let mut changed = false;
    for (g, v) in out.genes.iter_mut().enumerate() {
        if rng.random_bool(cfg.per_gene_mutation_prob) {
            let sigma = cfg.mutation_sigma * dims[g % 2];
            if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).expect("sigma is positive and finite");
                *v += noise.sample(rng);
                changed = true;
            }
        }
    }
    if changed {
        prob.repair(&mut out.genes);
        out.energy = None;
    }
    out
}

fn is_feasible(prob: &LayoutProblem, ind: &Individual) -> bool {
    crate::energy::feasible(&prob.decode(&ind.genes), &prob.bounds)
}

/// Fill in missing energies in parallel; returns the number of evaluations.
fn evaluate_all(prob: &LayoutProblem, pop: &mut [Individual]) -> usize {
    pop.par_iter_mut()
        .filter(|ind| ind.energy.is_none())
        .map(|ind| {
            ind.energy = Some(prob.evaluate(&ind.genes).total);
            1
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_energy: f64,
    pub mean_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLayout {
    pub layout: Layout,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GARun {
    pub best_layout: Layout,
    pub best_energy: f64,
    pub best_breakdown: EnergyBreakdown,
    /// Generation 0 is the initial population.
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    /// Distinct feasible layouts of the final population (plus the best ever
    /// seen), ascending by energy.
    pub ranked: Vec<ScoredLayout>,
}

impl GARun {
    pub fn top_k(&self, k: usize) -> &[ScoredLayout] {
        &self.ranked[..k.min(self.ranked.len())]
    }

    /// `generation,best_energy,mean_energy` rows.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("generation,best_energy,mean_energy\n");
        for h in &self.history {
            let _ = writeln!(s, "{},{},{}", h.generation, h.best_energy, h.mean_energy);
        }
        s
    }
}

fn stats(generation: usize, pop: &[Individual]) -> GenerationStats {
    let energies = pop.iter().map(Individual::energy_or_inf);
    let best = energies.clone().fold(f64::INFINITY, f64::min);
    let mean = energies.sum::<f64>() / pop.len() as f64;
    GenerationStats {
        generation,
        best_energy: best,
        mean_energy: mean,
    }
}

fn ranked_order(pop: &[Individual]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| {
        pop[a]
            .energy_or_inf()
            .total_cmp(&pop[b].energy_or_inf())
            .then(a.cmp(&b))
    });
    order
}

/// Run the generational loop and return the lowest-energy feasible layout seen.
pub fn evolve(prob: &LayoutProblem, cfg: &GAConfig) -> Result<GARun, GaError> {
    let mut rng = seeded_rng(cfg.rng_seed);
    let mut pop = init_population(cfg, prob, &mut rng)?;
    let mut evaluations = evaluate_all(prob, &mut pop);
    let mut history = vec![stats(0, &pop)];
    let mut best = pop[ranked_order(&pop)[0]].clone();

    for generation in 1..=cfg.generations {
        let order = ranked_order(&pop);
        let mut next: Vec<Individual> = order[..cfg.elitism]
            .iter()
            .map(|&i| pop[i].clone())
            .collect();

        while next.len() < cfg.population_size {
            let parents = select(&pop, 2, cfg, &mut rng);
            let (a, b) = (&pop[parents[0]], &pop[parents[1]]);
            let (c1, c2) = if rng.random_bool(cfg.crossover_prob) {
                crossover(a, b, &mut rng)
            } else {
                (a.clone(), b.clone())
            };
            for child in [c1, c2] {
                if next.len() == cfg.population_size {
                    break;
                }
                let mut child = if rng.random_bool(cfg.mutation_prob) {
                    mutate(&child, prob, cfg, &mut rng)
                } else {
                    child
                };
                if !is_feasible(prob, &child) {
                    child = sample_individual(prob, &mut rng);
                }
                next.push(child);
            }
        }

        evaluations += evaluate_all(prob, &mut next);
        pop = next;
        let gen_stats = stats(generation, &pop);
        let gen_best = &pop[ranked_order(&pop)[0]];
        if gen_best.energy_or_inf() < best.energy_or_inf() {
            best = gen_best.clone();
        }
        history.push(gen_stats);
    }

    let mut ranked: Vec<ScoredLayout> = Vec::new();
    let mut seen: Vec<&[f64]> = Vec::new();
    let final_order = ranked_order(&pop);
    let candidates = std::iter::once(&best).chain(final_order.iter().map(|&i| &pop[i]));
    for ind in candidates {
        if seen.contains(&ind.genes.as_slice()) || !is_feasible(prob, ind) {
            continue;
        }
        seen.push(&ind.genes);
        let layout = prob.decode(&ind.genes);
        let energy = prob.evaluate(&ind.genes);
        ranked.push(ScoredLayout { layout, energy });
    }
    ranked.sort_by(|a, b| a.energy.total.total_cmp(&b.energy.total));

    let best_breakdown = prob.evaluate(&best.genes);
    Ok(GARun {
        best_layout: prob.decode(&best.genes),
        best_energy: best_breakdown.total,
        best_breakdown,
        history,
        evaluations,
        ranked,
    })
}

pub const BRUTE_FORCE_MAX_ELEMENTS: usize = 2;
pub const BRUTE_FORCE_MAX_STEPS: usize = 24;

/// Top-left positions of an element of size `(w, h)` on a `steps x steps`
/// lattice spanning every on-canvas placement, in row-major scan order.
pub fn lattice_positions(prob: &LayoutProblem, w: f64, h: f64, steps: usize) -> Vec<(f64, f64)> {
    let axis = |span: f64| -> Vec<f64> {
        (0..steps)
            .map(|i| span * i as f64 / (steps - 1) as f64)
            .collect()
    };
    let xs = axis(prob.canvas_width - w);
    let ys = axis(prob.canvas_height - h);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect()
}

/// Exhaustive minimum over the placement lattice with elements held at their
/// nominal sizes. Ties keep the first layout in scan order.
pub fn brute_force_layout(
    prob: &LayoutProblem,
    grid_steps: usize,
) -> Result<(Layout, EnergyBreakdown), GaError> {
    prob.check()?;
    let intractable = |detail: String| GaError::Intractable {
        max_elements: BRUTE_FORCE_MAX_ELEMENTS,
        max_steps: BRUTE_FORCE_MAX_STEPS,
        detail,
    };
    if prob.movable.len() > BRUTE_FORCE_MAX_ELEMENTS {
        return Err(intractable(format!(
            "{} movable elements",
            prob.movable.len()
        )));
    }
    if !(2..=BRUTE_FORCE_MAX_STEPS).contains(&grid_steps) {
        return Err(intractable(format!("grid_steps = {grid_steps}")));
    }
    for (i, s) in prob.movable.iter().enumerate() {
        let b = prob.dim_bounds(i);
        if !b.admits(s.width, s.height) {
            return Err(GaError::Problem(format!(
                "movable[{i}] nominal size {}x{} violates its bounds",
                s.width, s.height
            )));
        }
    }

    let per_element: Vec<Vec<(f64, f64)>> = prob
        .movable
        .iter()
        .map(|s| lattice_positions(prob, s.width, s.height, grid_steps))
        .collect();

    let mut genes: Vec<f64> = prob
        .movable
        .iter()
        .flat_map(|s| [0.0, 0.0, s.width, s.height])
        .collect();
    let mut best: Option<(Vec<f64>, EnergyBreakdown)> = None;
    let mut cursor = vec![0usize; per_element.len()];
    loop {
        for (e, &c) in cursor.iter().enumerate() {
            let (x, y) = per_element[e][c];
            genes[4 * e] = x;
            genes[4 * e + 1] = y;
        }
        let energy = prob.evaluate(&genes);
        if energy.feasible && best.as_ref().is_none_or(|(_, b)| energy.total < b.total) {
            best = Some((genes.clone(), energy));
        }
        // odometer, last element fastest
        let mut e = cursor.len();
        loop {
            if e == 0 {
                let (g, energy) =
                    best.ok_or_else(|| GaError::Problem("no feasible lattice placement".into()))?;
                return Ok((prob.decode(&g), energy));
            }
            e -= 1;
            cursor[e] += 1;
            if cursor[e] < per_element[e].len() {
                break;
            }
            cursor[e] = 0;
        }
    }
}

/// Best of `samples` independent random feasible layouts.
pub fn random_search(
    prob: &LayoutProblem,
    samples: usize,
    rng: &mut Rng64,
) -> Result<ScoredLayout, GaError> {
    prob.check()?;
    let mut best: Option<(Individual, EnergyBreakdown)> = None;
    for _ in 0..samples.max(1) {
        let ind = sample_individual(prob, rng);
        let e = prob.evaluate(&ind.genes);
        if e.feasible && best.as_ref().is_none_or(|(_, b)| e.total < b.total) {
            best = Some((ind, e));
        }
    }
    let (ind, energy) = best.ok_or_else(|| GaError::Problem("no feasible sample".into()))?;
    Ok(ScoredLayout {
        layout: prob.decode(&ind.genes),
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::feasible;

    fn problem() -> LayoutProblem {
        LayoutProblem {
            canvas_width: 200.0,
            canvas_height: 100.0,
            fixed: vec![ElementBox::fixed(
                ElementKind::Person,
                BBox::new(120.0, 10.0, 180.0, 100.0),
            )],
            movable: vec![
                MovableSpec {
                    kind: ElementKind::Logo,
                    width: 40.0,
                    height: 20.0,
                },
                MovableSpec {
                    kind: ElementKind::Text,
                    width: 80.0,
                    height: 30.0,
                },
            ],
            bounds: SizeBounds {
                logo: DimBounds::new(20.0, 60.0, 10.0, 30.0),
                text: DimBounds::new(40.0, 120.0, 15.0, 40.0),
            },
            weights: EnergyWeights::default(),
        }
    }

    fn cfg() -> GAConfig {
        GAConfig {
            population_size: 10,
            ..GAConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic_and_feasible() {
        let p = problem();
        let a = init_population(&cfg(), &p, &mut seeded_rng(42)).unwrap();
        let b = init_population(&cfg(), &p, &mut seeded_rng(42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.iter().all(|i| feasible(&p.decode(&i.genes), &p.bounds)));
        assert!(a.iter().all(|i| i.genes.len() == 8));
    }

    #[test]
    fn init_with_exact_bounds_fixes_size() {
        let mut p = problem();
        p.bounds.logo = DimBounds::exact(40.0, 20.0);
        let pop = init_population(&cfg(), &p, &mut seeded_rng(1)).unwrap();
        assert!(pop.iter().all(|i| i.genes[2] == 40.0 && i.genes[3] == 20.0));
    }

    #[test]
    fn init_rejects_oversized_bounds() {
        let mut p = problem();
        p.bounds.logo = DimBounds::new(250.0, 300.0, 10.0, 20.0);
        assert!(init_population(&cfg(), &p, &mut seeded_rng(1)).is_err());
    }

    fn with_energies(energies: &[f64]) -> Vec<Individual> {
        energies
            .iter()
            .map(|&e| Individual {
                genes: vec![0.0; 4],
                energy: Some(e),
            })
            .collect()
    }

    #[test]
    fn full_tournament_returns_global_best() {
        let pop = with_energies(&[3.0, 0.5, 2.0, 7.0, 1.0]);
        let c = GAConfig {
            tournament_size: 5,
            ..cfg()
        };
        let picks = select(&pop, 50, &c, &mut seeded_rng(3));
        assert!(picks.iter().all(|&i| i == 1));
    }

    #[test]
    fn two_individual_tournament() {
        let pop = with_energies(&[1.0, 9.0]);
        let c = GAConfig {
            tournament_size: 2,
            ..cfg()
        };
        assert!(select(&pop, 100, &c, &mut seeded_rng(4))
            .iter()
            .all(|&i| i == 0));
    }

    #[test]
    fn unit_tournament_is_uniform() {
        let pop = with_energies(&[1.0, 2.0, 3.0, 4.0]);
        let c = GAConfig {
            tournament_size: 1,
            ..cfg()
        };
        let picks = select(&pop, 8000, &c, &mut seeded_rng(5));
        for k in 0..4 {
            let share = picks.iter().filter(|&&i| i == k).count() as f64 / 8000.0;
            assert!((share - 0.25).abs() < 0.03, "index {k} share {share}");
        }
    }

    #[test]
    fn crossover_conserves_quadruples() {
        let a = Individual::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let b = Individual::new(vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0]);
        let mut rng = seeded_rng(9);
        for _ in 0..20 {
            let (c1, c2) = crossover(&a, &b, &mut rng);
            for e in 0..2 {
                let mut got = vec![&c1.genes[4 * e..4 * e + 4], &c2.genes[4 * e..4 * e + 4]];
                let mut want = vec![&a.genes[4 * e..4 * e + 4], &b.genes[4 * e..4 * e + 4]];
                got.sort_by(|x, y| x[0].total_cmp(&y[0]));
                want.sort_by(|x, y| x[0].total_cmp(&y[0]));
                assert_eq!(got, want);
            }
        }
        let (c1, c2) = crossover(&a, &a, &mut rng);
        assert_eq!(c1.genes, a.genes);
        assert_eq!(c2.genes, a.genes);
    }

    #[test]
    fn single_element_crossover_copies_or_swaps() {
        let a = Individual::new(vec![1.0, 2.0, 3.0, 4.0]);
        let b = Individual::new(vec![5.0, 6.0, 7.0, 8.0]);
        let mut rng = seeded_rng(11);
        for _ in 0..20 {
            let (c1, c2) = crossover(&a, &b, &mut rng);
            let copy = c1.genes == a.genes && c2.genes == b.genes;
            let swap = c1.genes == b.genes && c2.genes == a.genes;
            assert!(copy ^ swap);
        }
    }

    #[test]
    fn mutation_contracts() {
        let p = problem();
        let pop = init_population(&cfg(), &p, &mut seeded_rng(2)).unwrap();
        let none = GAConfig {
            per_gene_mutation_prob: 0.0,
            ..cfg()
        };
        let mut rng = seeded_rng(5);
        for ind in &pop {
            assert_eq!(mutate(ind, &p, &none, &mut rng).genes, ind.genes);
        }
        let wild = GAConfig {
            per_gene_mutation_prob: 1.0,
            mutation_sigma: 2.0,
            ..cfg()
        };
        for ind in &pop {
            let m = mutate(ind, &p, &wild, &mut rng);
            assert!(feasible(&p.decode(&m.genes), &p.bounds));
            assert!(m.energy.is_none());
        }
        let m1 = mutate(&pop[0], &p, &wild, &mut seeded_rng(77));
        let m2 = mutate(&pop[0], &p, &wild, &mut seeded_rng(77));
        assert_eq!(m1, m2);
    }

    #[test]
    fn evolve_is_monotone_and_deterministic() {
        let p = problem();
        let c = GAConfig {
            population_size: 30,
            generations: 40,
            rng_seed: 8,
            ..GAConfig::default()
        };
        let a = evolve(&p, &c).unwrap();
        let b = evolve(&p, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 41);
        assert!(a
            .history
            .windows(2)
            .all(|w| w[1].best_energy <= w[0].best_energy));
        let min_hist = a
            .history
            .iter()
            .map(|h| h.best_energy)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_energy, min_hist);
        assert!(a.best_breakdown.feasible);
        assert_eq!(a.ranked[0].energy.total, a.best_energy);
        assert!(a
            .history_csv()
            .starts_with("generation,best_energy,mean_energy\n0,"));
    }

    fn single_element(weights: EnergyWeights, fixed: Vec<ElementBox>) -> LayoutProblem {
        LayoutProblem {
            canvas_width: 100.0,
            canvas_height: 100.0,
            fixed,
            movable: vec![MovableSpec {
                kind: ElementKind::Logo,
                width: 20.0,
                height: 20.0,
            }],
            bounds: SizeBounds {
                logo: DimBounds::exact(20.0, 20.0),
                text: DimBounds::exact(20.0, 20.0),
            },
            weights,
        }
    }

    #[test]
    fn brute_force_centers_under_symmetry() {
        let p = single_element(EnergyWeights::new(0.0, 0.0, 0.0, 1.0), vec![]);
        let (layout, e) = brute_force_layout(&p, 9).unwrap();
        let b = layout.movable().next().unwrap().bbox;
        assert_eq!(b.x_left, 40.0);
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn brute_force_avoids_fixed_box() {
        let fixed = vec![ElementBox::fixed(
            ElementKind::Object,
            BBox::new(0.0, 0.0, 50.0, 100.0),
        )];
        let p = single_element(EnergyWeights::new(0.0, 1.0, 0.0, 0.0), fixed);
        let (layout, e) = brute_force_layout(&p, 16).unwrap();
        let b = layout.movable().next().unwrap().bbox;
        assert!(b.x_left >= 50.0);
        assert_eq!(e.total, 0.0);
        let recomputed = total_energy(&layout, &p.weights, &p.bounds);
        assert_eq!(recomputed, e);
    }

    #[test]
    fn brute_force_guards() {
        let mut p = problem();
        p.movable.push(MovableSpec {
            kind: ElementKind::Text,
            width: 50.0,
            height: 20.0,
        });
        assert!(matches!(
            brute_force_layout(&p, 8),
            Err(GaError::Intractable { .. })
        ));
        assert!(matches!(
            brute_force_layout(&problem(), 25),
            Err(GaError::Intractable { .. })
        ));
    }

    #[test]
    fn config_checks() {
        assert!(GAConfig::default().check().is_ok());
        assert!(GAConfig {
            population_size: 1,
            ..GAConfig::default()
        }
        .check()
        .is_err());
        assert!(GAConfig {
            elitism: 100,
            ..GAConfig::default()
        }
        .check()
        .is_err());
        assert!(GAConfig {
            mutation_prob: 1.5,
            ..GAConfig::default()
        }
        .check()
        .is_err());
        assert!(GAConfig {
            tournament_size: 0,
            ..GAConfig::default()
        }
        .check()
        .is_err());
    }
}
