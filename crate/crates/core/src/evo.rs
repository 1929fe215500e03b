//! Real-coded genetic-algorithm primitives shared by the single- and
//! multi-objective loops: populations, bounds handling, and the
//! crossover, mutation and selection operators.
//!
//! Every operator is a pure function of its inputs and the supplied
//! generator, and every genome an operator returns satisfies the bounds
//! of its gene specs.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive bounds for one decision variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl GeneSpec {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower >= upper {
            return Err(Error::invalid(format!(
                "gene bounds must be finite with lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { name: name.into(), lower, upper })
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.min(self.upper).max(self.lower)
    }
}

/// A real-valued decision vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub genes: Vec<f64>,
}

impl Genome {
    pub fn new(genes: Vec<f64>) -> Self {
        Self { genes }
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    /// True when every gene lies inside its spec's bounds.
    pub fn within_bounds(&self, specs: &[GeneSpec]) -> bool {
        self.genes.len() == specs.len()
            && self.genes.iter().zip(specs).all(|(&g, s)| s.contains(g))
    }
}

/// Optimisation sense of one objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

/// Objective values paired with their optimisation directions.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessVector {
    values: Vec<f64>,
    directions: Vec<Direction>,
}

impl FitnessVector {
    pub fn new(values: Vec<f64>, directions: Vec<Direction>) -> Result<Self> {
        if values.is_empty() || values.len() != directions.len() {
            return Err(Error::invalid(format!(
                "fitness needs equal nonzero value/direction counts, got {} and {}",
                values.len(),
                directions.len()
            )));
        }
        Ok(Self { values, directions })
    }

    pub fn single(value: f64, direction: Direction) -> Self {
        Self { values: vec![value], directions: vec![direction] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which evaluator produced an individual's fitness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSource {
    Simulation,
    Surrogate,
    Unevaluated,
}

/// A genome plus its (optional) fitness and the evaluator that produced it.
///
/// The fitness is absent exactly when the source is `Unevaluated`; the
/// accessors keep that pairing intact.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    fitness: Option<FitnessVector>,
    source: EvalSource,
}

impl Individual {
    pub fn unevaluated(genome: Genome) -> Self {
        Self { genome, fitness: None, source: EvalSource::Unevaluated }
    }

    pub fn evaluated(genome: Genome, fitness: FitnessVector, source: EvalSource) -> Result<Self> {
        let mut ind = Self::unevaluated(genome);
        ind.set_fitness(fitness, source)?;
        Ok(ind)
    }

    pub fn set_fitness(&mut self, fitness: FitnessVector, source: EvalSource) -> Result<()> {
        if source == EvalSource::Unevaluated {
            return Err(Error::invalid("cannot set a fitness with source Unevaluated"));
        }
        self.fitness = Some(fitness);
        self.source = source;
        Ok(())
    }

    pub fn clear_fitness(&mut self) {
        self.fitness = None;
        self.source = EvalSource::Unevaluated;
    }

    pub fn fitness(&self) -> Option<&FitnessVector> {
        self.fitness.as_ref()
    }

    pub fn source(&self) -> EvalSource {
        self.source
    }

    pub fn is_evaluated(&self) -> bool {
        self.fitness.is_some()
    }
}

/// An ordered set of individuals at a given generation.
#[derive(Debug, Clone)]
pub struct Population {
    pub members: Vec<Individual>,
    pub generation: u32,
}

impl Population {
    /// Builds a population, checking that members agree on genome length
    /// and (where evaluated) objective count.
    pub fn new(members: Vec<Individual>, generation: u32) -> Result<Self> {
        if let Some(first) = members.first() {
            let genome_len = first.genome.len();
            let mut objectives = None;
            for m in &members {
                if m.genome.len() != genome_len {
                    return Err(Error::invalid("population members disagree on genome length"));
                }
                if let Some(f) = m.fitness() {
                    match objectives {
                        None => objectives = Some(f.len()),
                        Some(n) if n != f.len() => {
                            return Err(Error::invalid(
                                "population members disagree on objective count",
                            ))
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(Self { members, generation })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn all_evaluated(&self) -> bool {
        self.members.iter().all(Individual::is_evaluated)
    }
}

/// Orders two fitness vectors on objective 0 only, better first.
///
/// NaN ranks worst so sorting never panics on a degenerate evaluation.
pub fn scalar_fitness_cmp(a: &FitnessVector, b: &FitnessVector) -> Ordering {
    let (av, bv) = (a.values()[0], b.values()[0]);
    let better_high = a.directions()[0] == Direction::Maximize;
    let ord = match (av.is_nan(), bv.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (false, false) => av.partial_cmp(&bv).unwrap(),
    };
    if better_high {
        ord.reverse()
    } else {
        ord
    }
}

fn check_rate(name: &str, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) || rate.is_nan() {
        return Err(Error::invalid(format!("{name} must lie in [0, 1], got {rate}")));
    }
    Ok(())
}

fn check_lengths(genome_len: usize, specs: &[GeneSpec]) -> Result<()> {
    if genome_len != specs.len() {
        return Err(Error::invalid(format!(
            "genome length {} does not match {} gene specs",
            genome_len,
            specs.len()
        )));
    }
    Ok(())
}

/// Draws `size` genomes uniformly within the spec bounds, all unevaluated,
/// at generation 0.
pub fn init_random_population<R: Rng>(
    specs: &[GeneSpec],
    size: usize,
    rng: &mut R,
) -> Result<Population> {
    if specs.is_empty() {
        return Err(Error::invalid("gene specs must be nonempty"));
    }
    if size == 0 {
        return Err(Error::invalid("population size must be at least 1"));
    }
    let members = (0..size)
        .map(|_| {
            let genes = specs.iter().map(|s| rng.random_range(s.lower..=s.upper)).collect();
            Individual::unevaluated(Genome::new(genes))
        })
        .collect();
    Population::new(members, 0)
}

/// Replaces every gene by its nearest in-bounds value.
pub fn clamp_to_bounds(genome: &Genome, specs: &[GeneSpec]) -> Result<Genome> {
    check_lengths(genome.len(), specs)?;
    let genes = genome.genes.iter().zip(specs).map(|(&g, s)| s.clamp(g)).collect();
    Ok(Genome::new(genes))
}

/// Blend crossover: each child gene is drawn uniformly from the parents'
/// hull extended by `alpha` times its width, then clamped to bounds.
pub fn blx_alpha_crossover<R: Rng>(
    p1: &Genome,
    p2: &Genome,
    alpha: f64,
    specs: &[GeneSpec],
    rng: &mut R,
) -> Result<Genome> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if p1.len() != p2.len() {
        return Err(Error::invalid("parents must have equal genome length"));
    }
    check_lengths(p1.len(), specs)?;
    let genes = p1
        .genes
        .iter()
        .zip(&p2.genes)
        .zip(specs)
        .map(|((&a, &b), spec)| {
            let (lo, hi) = (a.min(b), a.max(b));
            let ext = (hi - lo) * alpha;
            let child = if hi - lo + 2.0 * ext > 0.0 {
                rng.random_range(lo - ext..=hi + ext)
            } else {
                lo
            };
            spec.clamp(child)
        })
        .collect();
    Ok(Genome::new(genes))
}

/// Replaces each gene, independently with probability `rate`, by a fresh
/// uniform draw from its bounds.
pub fn random_substitution_mutation<R: Rng>(
    genome: &Genome,
    specs: &[GeneSpec],
    rate: f64,
    rng: &mut R,
) -> Result<Genome> {
    check_rate("mutation rate", rate)?;
    check_lengths(genome.len(), specs)?;
    let genes = genome
        .genes
        .iter()
        .zip(specs)
        .map(|(&g, s)| {
            if rng.random::<f64>() < rate {
                rng.random_range(s.lower..=s.upper)
            } else {
                g
            }
        })
        .collect();
    Ok(Genome::new(genes))
}

/// Deterministic core of the intermediate crossover given an explicit
/// selection mask and per-gene weights.
///
/// Selected genes move toward the other parent by `ratio` of the parent
/// difference; before clamping, each selected gene pair conserves its sum.
pub fn intermediate_crossover_with(
    p1: &Genome,
    p2: &Genome,
    mask: &[bool],
    ratios: &[f64],
    specs: &[GeneSpec],
) -> Result<(Genome, Genome)> {
    if p1.len() != p2.len() || mask.len() != p1.len() || ratios.len() != p1.len() {
        return Err(Error::invalid("mask, ratios and parents must share one length"));
    }
    check_lengths(p1.len(), specs)?;
    let mut c1 = Vec::with_capacity(p1.len());
    let mut c2 = Vec::with_capacity(p1.len());
    for i in 0..p1.len() {
        let (a, b) = (p1.genes[i], p2.genes[i]);
        if mask[i] {
            let step = ratios[i] * (b - a);
            c1.push(specs[i].clamp(a + step));
            c2.push(specs[i].clamp(b - step));
        } else {
            c1.push(specs[i].clamp(a));
            c2.push(specs[i].clamp(b));
        }
    }
    Ok((Genome::new(c1), Genome::new(c2)))
}

/// Weighted-average crossover producing two children.
///
/// A per-gene binary mask selects which genes move (a uniform draw below
/// `crossover_rate`), and each selected gene uses a fresh uniform weight.
pub fn intermediate_crossover<R: Rng>(
    p1: &Genome,
    p2: &Genome,
    crossover_rate: f64,
    specs: &[GeneSpec],
    rng: &mut R,
) -> Result<(Genome, Genome)> {
    check_rate("crossover rate", crossover_rate)?;
    if p1.len() != p2.len() {
        return Err(Error::invalid("parents must have equal genome length"));
    }
    check_lengths(p1.len(), specs)?;
    let mask: Vec<bool> = (0..p1.len()).map(|_| rng.random::<f64>() < crossover_rate).collect();
    let ratios: Vec<f64> =
        mask.iter().map(|&m| if m { rng.random::<f64>() } else { 0.0 }).collect();
    intermediate_crossover_with(p1, p2, &mask, &ratios, specs)
}

/// Adds zero-mean Gaussian noise to each selected gene.
///
/// The deviation for gene g is `scale * range_g * (1 - shrink * generation
/// / max_generations)`, so later generations perturb less.
#[allow(clippy::too_many_arguments)]
pub fn gaussian_mutation<R: Rng>(
    genome: &Genome,
    specs: &[GeneSpec],
    rate: f64,
    scale: f64,
    shrink: f64,
    generation: u32,
    max_generations: u32,
    rng: &mut R,
) -> Result<Genome> {
    check_rate("mutation rate", rate)?;
    check_rate("shrink", shrink)?;
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::invalid(format!("scale must be finite and > 0, got {scale}")));
    }
    if max_generations == 0 {
        return Err(Error::invalid("max_generations must be at least 1"));
    }
    if generation > max_generations {
        return Err(Error::invalid(format!(
            "generation {generation} exceeds max_generations {max_generations}"
        )));
    }
    check_lengths(genome.len(), specs)?;
    let decay = 1.0 - shrink * f64::from(generation) / f64::from(max_generations);
    let genes = genome
        .genes
        .iter()
        .zip(specs)
        .map(|(&g, s)| {
            if rng.random::<f64>() < rate {
                let sigma = scale * s.range() * decay;
                let noise = if sigma > 0.0 {
                    Normal::new(0.0, sigma).expect("sigma is finite and positive").sample(rng)
                } else {
                    0.0
                };
                s.clamp(g + noise)
            } else {
                g
            }
        })
        .collect();
    Ok(Genome::new(genes))
}

/// Runs `n_select` tournaments, each sampling `tournament_size` members
/// uniformly with replacement and keeping the comparator-best.
///
/// `better(i, j)` returns `Less` when member `i` outranks member `j`;
/// ties keep the earliest-drawn candidate.
pub fn tournament_selection<R: Rng, F>(
    pop: &Population,
    tournament_size: usize,
    n_select: usize,
    better: F,
    rng: &mut R,
) -> Result<Population>
where
    F: Fn(usize, usize) -> Ordering,
{
    if pop.is_empty() {
        return Err(Error::invalid("tournament selection needs a nonempty population"));
    }
    if tournament_size == 0 {
        return Err(Error::invalid("tournament size must be at least 1"));
    }
    let mut winners = Vec::with_capacity(n_select);
    for _ in 0..n_select {
        let mut best = rng.random_range(0..pop.len());
        for _ in 1..tournament_size {
            let candidate = rng.random_range(0..pop.len());
            if better(candidate, best) == Ordering::Less {
                best = candidate;
            }
        }
        winners.push(pop.members[best].clone());
    }
    Population::new(winners, pop.generation)
}

/// Indices of the comparator-best `ceil(fraction * n)` members, best first.
pub fn elite_indices<F>(pop: &Population, fraction: f64, better: F) -> Result<Vec<usize>>
where
    F: Fn(usize, usize) -> Ordering,
{
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("elite fraction must lie in (0, 1], got {fraction}")));
    }
    for (i, m) in pop.members.iter().enumerate() {
        if !m.is_evaluated() {
            return Err(Error::contract(format!("member {i} is unevaluated")));
        }
    }
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| better(a, b));
    let count = ((fraction * pop.len() as f64).ceil() as usize).clamp(1, pop.len());
    order.truncate(count);
    Ok(order)
}

/// The comparator-best `ceil(fraction * n)` members as a population,
/// order preserved best-first.
pub fn elite_selection<F>(pop: &Population, fraction: f64, better: F) -> Result<Population>
where
    F: Fn(usize, usize) -> Ordering,
{
    let idx = elite_indices(pop, fraction, better)?;
    let members = idx.into_iter().map(|i| pop.members[i].clone()).collect();
    Population::new(members, pop.generation)
}
