//! Experiment orchestration: the surrogate-assisted single-objective
//! loop, the surrogate-assisted NSGA-II loop, direct (simulator-only)
//! baselines, call accounting, and speedup reporting.
//!
//! Both loops run a warm start first — `warm_size` random genomes
//! evaluated by the true simulator — keeping the ranked-best `population`
//! members and, in surrogate mode, fitting one forest per objective on
//! every warm sample. Each generation then evaluates offspring with the
//! configured evaluator, cross-checks the elite against the simulator,
//! and retrains the surrogate when the mean absolute elite deviation
//! exceeds the divergence threshold.
//!
//! Everything derives its randomness from `(seed, repetition, phase,
//! generation, member)` streams, so a run is bit-reproducible from its
//! manifest regardless of thread count.

mod config;
mod export;

pub use config::{
    Algorithm, DivergenceReference, ExperimentConfig, GaParams, Mode, NsgaParams, Problem,
    SurrogateParams, CONFIG_FORMAT_VERSION,
};
pub use export::{export_results, load_config_or_manifest, write_manifest, Manifest};

use std::cmp::Ordering;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evo::{
    blx_alpha_crossover, elite_indices, gaussian_mutation, init_random_population,
    intermediate_crossover, random_substitution_mutation, scalar_fitness_cmp,
    tournament_selection, Direction, EvalSource, FitnessVector, GeneSpec, Genome, Individual,
    Population,
};
use crate::metrics::{gd_plus, hypervolume_2d, igd_plus, FrontSet, ReferencePoint};
use crate::nsga::{dominates, nsga_rank_order, DominanceOrdering};
use crate::rng::{self, tag};
use crate::sims::{psa_objectives, psa_proxy_front, simulate_cps1, simulate_cps2, SimOutcome};
use crate::surrogate::{
    divergence_score, fit_forest, holdout_accuracy, predict_forest, retrain, sample_std,
    warm_start, HoldoutAccuracy, RandomForestModel, TrainingSet,
};

/// Spread the divergence rule compares against, per the configured
/// reference.
fn divergence_reference_sigma(
    reference: DivergenceReference,
    model: &RandomForestModel,
    elite_sim_values: &[f64],
) -> f64 {
    match reference {
        DivergenceReference::TrainingSigma => model.sigma_train(),
        DivergenceReference::EliteSigma => sample_std(elite_sim_values),
    }
}

/// Reference-front sample count for the proxy-front distance metrics.
const PROXY_FRONT_POINTS: usize = 500;

/// Per-generation accounting of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: u32,
    /// Best simulator-measured elite fitness (single-objective runs).
    pub best_fitness: Option<f64>,
    /// Mean fitness over the whole population, as currently believed.
    pub mean_fitness: Option<f64>,
    /// Mean simulator-measured elite fitness.
    pub elite_mean_fitness: Option<f64>,
    /// First-front objective vectors (two-objective runs).
    pub front: Option<Vec<[f64; 2]>>,
    /// Hypervolume of the first front in normalized objectives.
    pub hv: Option<f64>,
    pub gd_plus: Option<f64>,
    pub igd_plus: Option<f64>,
    /// Cumulative simulator evaluations, warm start included.
    pub sim_calls: u64,
    /// Cumulative surrogate evaluations.
    pub surrogate_calls: u64,
    pub diverged: bool,
    /// Cumulative retrain count.
    pub retrains: u32,
    pub wall_time_s: f64,
}

/// A member of an exported front: objectives plus the genome behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontMember {
    pub objectives: Vec<f64>,
    pub genome: Genome,
}

/// Everything one repetition produced.
#[derive(Debug, Clone)]
pub struct RepetitionRun {
    pub repetition: u32,
    pub records: Vec<GenerationRecord>,
    pub warm_sim_calls: u64,
    /// Simulator calls spent scoring the surrogate after the run; kept
    /// out of the optimisation counters.
    pub holdout_sim_calls: u64,
    pub final_population: Population,
    /// Simulator-measured final front (single-objective runs export the
    /// final elite here).
    pub final_front: Vec<FrontMember>,
    /// Anti-optimal corner used for the hypervolume series, in objective
    /// units (two-objective runs).
    pub hv_reference: Option<[f64; 2]>,
    /// Surrogate accuracy on fresh holdout data, one entry per objective.
    pub holdout: Vec<HoldoutAccuracy>,
    pub models: Vec<RandomForestModel>,
    pub wall_time_s: f64,
}

/// All repetitions of one configured experiment.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub runs: Vec<RepetitionRun>,
}

/// Call-count and accuracy comparison between a direct and a
/// surrogate-mode experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupReport {
    /// Direct over surrogate total simulator calls, warm start included
    /// on both sides.
    pub sim_call_ratio: f64,
    /// Same ratio with the direct run's warm start excluded, since a
    /// plain optimiser does not need one.
    pub sim_call_ratio_excl_warm: f64,
    pub wall_time_ratio: f64,
    pub holdout_r2: Vec<f64>,
    pub holdout_normalized_mae: Vec<f64>,
}

struct ProblemContext<'a> {
    cfg: &'a ExperimentConfig,
    specs: Vec<GeneSpec>,
    rep_seed: u64,
}

impl<'a> ProblemContext<'a> {
    fn new(cfg: &'a ExperimentConfig, repetition: u32) -> Self {
        Self {
            cfg,
            specs: cfg.problem.gene_specs(),
            rep_seed: rng::child_seed(cfg.seed, &[tag::REPETITION, u64::from(repetition)]),
        }
    }

    /// One true-simulator evaluation with a stream derived from
    /// (repetition, phase, generation, member index).
    fn evaluate(
        &self,
        phase: u64,
        generation: u64,
        index: u64,
        genome: &Genome,
    ) -> Result<FitnessVector> {
        let seed = rng::child_seed(self.rep_seed, &[phase, generation, index]);
        match self.cfg.problem {
            Problem::Cps1 => {
                let outcome = simulate_cps1(genome, &self.cfg.cps, seed)?;
                Ok(FitnessVector::single(outcome.revenue, Direction::Maximize))
            }
            Problem::Cps2 => {
                let outcome = simulate_cps2(genome, &self.cfg.cps, seed)?;
                Ok(FitnessVector::single(outcome.revenue, Direction::Maximize))
            }
            Problem::PsaProxy => {
                let [p, r] = psa_objectives(genome)?;
                FitnessVector::new(vec![p, r], self.cfg.problem.directions())
            }
        }
    }

    /// Full simulation outcome for export (plant problems only).
    fn simulate_outcome(&self, index: u64, genome: &Genome) -> Result<Option<SimOutcome>> {
        let seed = rng::child_seed(self.rep_seed, &[tag::EXPORT, 0, index]);
        match self.cfg.problem {
            Problem::Cps1 => Ok(Some(simulate_cps1(genome, &self.cfg.cps, seed)?)),
            Problem::Cps2 => Ok(Some(simulate_cps2(genome, &self.cfg.cps, seed)?)),
            Problem::PsaProxy => Ok(None),
        }
    }

    fn evaluate_batch(
        &self,
        phase: u64,
        generation: u64,
        genomes: &[Genome],
    ) -> Result<Vec<FitnessVector>> {
        genomes
            .par_iter()
            .enumerate()
            .map(|(i, g)| self.evaluate(phase, generation, i as u64, g))
            .collect()
    }
}

fn cmp_by_first_objective(pop: &Population) -> impl Fn(usize, usize) -> Ordering + '_ {
    |a, b| match (pop.members[a].fitness(), pop.members[b].fitness()) {
        (Some(fa), Some(fb)) => scalar_fitness_cmp(fa, fb),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Two distinct indices below `n` (or a repeated one when `n` is 1),
/// drawn with a fixed number of generator calls.
fn distinct_pair<R: Rng>(n: usize, rng: &mut R) -> (usize, usize) {
    let a = rng.random_range(0..n);
    if n == 1 {
        return (a, a);
    }
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

fn elite_count(fraction: f64, population: usize) -> usize {
    ((fraction * population as f64).ceil() as usize).clamp(1, population)
}

fn require_algorithm(cfg: &ExperimentConfig, wanted: Algorithm) -> Result<()> {
    cfg.validate()?;
    if cfg.algorithm != wanted {
        return Err(Error::invalid(format!(
            "configured algorithm is {}, expected {wanted}",
            cfg.algorithm
        )));
    }
    Ok(())
}

/// Runs one repetition of the single-objective loop (surrogate-assisted
/// or direct, per the config).
///
/// Per generation: rank by revenue, keep the elite, breed offspring from
/// elite pairs by blend crossover plus random-substitution mutation,
/// evaluate offspring with the configured evaluator, re-measure the
/// elite with the simulator, promote offspring that beat the worst
/// elite member (simulator-verified first in surrogate mode), and
/// retrain the forest when the elite deviation breaches the divergence
/// threshold.
pub fn run_sa_ga(cfg: &ExperimentConfig, repetition: u32) -> Result<RepetitionRun> {
    require_algorithm(cfg, Algorithm::Ga)?;
    let start = Instant::now();
    let ctx = ProblemContext::new(cfg, repetition);
    let params = cfg.ga.clone();
    let surrogate_mode = cfg.mode == Mode::Surrogate;
    let generations = cfg.generations();

    let mut warm_rng = rng::stream(ctx.rep_seed, &[tag::WARM_GENOMES]);
    let ranker = |members: &[Individual]| -> Result<Vec<usize>> {
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.sort_by(|&a, &b| {
            scalar_fitness_cmp(members[a].fitness().unwrap(), members[b].fitness().unwrap())
        });
        Ok(order)
    };
    let (mut pop, warm_training) = warm_start(
        &ctx.specs,
        params.warm_size,
        params.population,
        |i, g| ctx.evaluate(tag::WARM_EVAL, 0, i as u64, g),
        ranker,
        &mut warm_rng,
    )?;
    let warm_sim_calls = params.warm_size as u64;
    let mut sim_calls = warm_sim_calls;
    let mut surrogate_calls = 0u64;
    let mut retrains = 0u32;
    let mut pending = TrainingSet::default();

    let mut model = if surrogate_mode {
        Some(fit_forest(
            &warm_training[0],
            &cfg.surrogate.forest,
            &mut rng::stream(ctx.rep_seed, &[tag::FOREST_FIT, 0, 0]),
        )?)
    } else {
        None
    };

    let mut records = Vec::with_capacity(generations as usize);
    for g in 0..generations {
        let mut ops_rng = rng::stream(ctx.rep_seed, &[tag::OPERATORS, u64::from(g)]);
        let elite_idx = elite_indices(&pop, params.elite_fraction, cmp_by_first_objective(&pop))?;
        let n_offspring = pop.len() - elite_idx.len();

        let offspring_genomes: Vec<Genome> = (0..n_offspring)
            .map(|_| {
                let (a, b) = distinct_pair(elite_idx.len(), &mut ops_rng);
                let p1 = &pop.members[elite_idx[a]].genome;
                let p2 = &pop.members[elite_idx[b]].genome;
                let child = if ops_rng.random::<f64>() < params.crossover_rate {
                    blx_alpha_crossover(p1, p2, params.blx_alpha, &ctx.specs, &mut ops_rng)?
                } else {
                    p1.clone()
                };
                random_substitution_mutation(&child, &ctx.specs, params.mutation_rate, &mut ops_rng)
            })
            .collect::<Result<_>>()?;

        let mut offspring: Vec<Individual> = if surrogate_mode {
            let forest = model.as_ref().unwrap();
            surrogate_calls += n_offspring as u64;
            offspring_genomes
                .iter()
                .map(|genome| {
                    let value = predict_forest(forest, genome)?;
                    Individual::evaluated(
                        genome.clone(),
                        FitnessVector::single(value, Direction::Maximize),
                        EvalSource::Surrogate,
                    )
                })
                .collect::<Result<_>>()?
        } else {
            sim_calls += n_offspring as u64;
            let values =
                ctx.evaluate_batch(tag::OFFSPRING_EVAL, u64::from(g), &offspring_genomes)?;
            offspring_genomes
                .iter()
                .zip(values)
                .map(|(genome, fv)| {
                    Individual::evaluated(genome.clone(), fv, EvalSource::Simulation)
                })
                .collect::<Result<_>>()?
        };

        // The elite is always measured by the simulator.
        let elite_genomes: Vec<Genome> =
            elite_idx.iter().map(|&i| pop.members[i].genome.clone()).collect();
        let elite_fitness = ctx.evaluate_batch(tag::ELITE_EVAL, u64::from(g), &elite_genomes)?;
        sim_calls += elite_idx.len() as u64;
        let elite_values: Vec<f64> = elite_fitness.iter().map(|f| f.values()[0]).collect();
        for (slot, &i) in elite_idx.iter().enumerate() {
            pop.members[i].set_fitness(elite_fitness[slot].clone(), EvalSource::Simulation)?;
        }
        if surrogate_mode {
            for (genome, &value) in elite_genomes.iter().zip(&elite_values) {
                pending.push(genome.clone(), value)?;
            }
        }

        // Divergence is judged on the pre-promotion elite batch.
        let diverged = if let Some(forest) = &model {
            surrogate_calls += elite_idx.len() as u64;
            let elite_pop = Population::new(
                elite_genomes
                    .iter()
                    .zip(&elite_fitness)
                    .map(|(genome, fv)| {
                        Individual::evaluated(genome.clone(), fv.clone(), EvalSource::Simulation)
                    })
                    .collect::<Result<_>>()?,
                g,
            )?;
            let sigma = divergence_reference_sigma(
                cfg.surrogate.divergence_reference,
                forest,
                &elite_values,
            );
            divergence_score(forest, &elite_pop, &elite_values)?
                > cfg.surrogate.divergence_sigma * sigma
        } else {
            false
        };

        // A child that beats the worst elite member takes its place; in
        // surrogate mode it must first survive a simulator re-check.
        for child_slot in 0..offspring.len() {
            let cmp = cmp_by_first_objective(&pop);
            let worst_slot =
                *elite_idx.iter().max_by(|&&a, &&b| cmp(a, b)).expect("elite is nonempty");
            drop(cmp);
            let beats = |candidate: &Individual, pop: &Population| {
                scalar_fitness_cmp(
                    candidate.fitness().unwrap(),
                    pop.members[worst_slot].fitness().unwrap(),
                ) == Ordering::Less
            };
            if !beats(&offspring[child_slot], &pop) {
                continue;
            }
            if surrogate_mode {
                let fv = ctx.evaluate(
                    tag::PROMOTION_EVAL,
                    u64::from(g),
                    child_slot as u64,
                    &offspring[child_slot].genome,
                )?;
                sim_calls += 1;
                pending.push(offspring[child_slot].genome.clone(), fv.values()[0])?;
                offspring[child_slot].set_fitness(fv, EvalSource::Simulation)?;
                if !beats(&offspring[child_slot], &pop) {
                    continue;
                }
            }
            std::mem::swap(&mut pop.members[worst_slot], &mut offspring[child_slot]);
        }

        if diverged {
            let forest = model.as_ref().unwrap();
            model = Some(retrain(
                forest,
                &pending,
                &mut rng::stream(ctx.rep_seed, &[tag::FOREST_FIT, u64::from(g) + 1, 0]),
            )?);
            pending.clear();
            retrains += 1;
        }

        let elite_after: Vec<f64> = elite_idx
            .iter()
            .map(|&i| pop.members[i].fitness().unwrap().values()[0])
            .collect();
        let best = elite_after.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let elite_mean = elite_after.iter().sum::<f64>() / elite_after.len() as f64;

        let mut next_members: Vec<Individual> =
            elite_idx.iter().map(|&i| pop.members[i].clone()).collect();
        next_members.extend(offspring);
        pop = Population::new(next_members, g + 1)?;
        let mean =
            pop.members.iter().map(|m| m.fitness().unwrap().values()[0]).sum::<f64>()
                / pop.len() as f64;

        records.push(GenerationRecord {
            generation: g,
            best_fitness: Some(best),
            mean_fitness: Some(mean),
            elite_mean_fitness: Some(elite_mean),
            front: None,
            hv: None,
            gd_plus: None,
            igd_plus: None,
            sim_calls,
            surrogate_calls,
            diverged,
            retrains,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }

    // The final elite sits at the head of the population, measured by the
    // simulator during the last generation.
    let elite_size = elite_count(params.elite_fraction, pop.len());
    let mut final_front: Vec<FrontMember> = pop.members[..elite_size]
        .iter()
        .map(|m| FrontMember {
            objectives: m.fitness().unwrap().values().to_vec(),
            genome: m.genome.clone(),
        })
        .collect();
    final_front.sort_by(|a, b| b.objectives[0].partial_cmp(&a.objectives[0]).unwrap());

    let (holdout, holdout_sim_calls) = if surrogate_mode {
        score_holdout(&ctx, std::slice::from_ref(model.as_ref().unwrap()))?
    } else {
        (Vec::new(), 0)
    };

    Ok(RepetitionRun {
        repetition,
        records,
        warm_sim_calls,
        holdout_sim_calls,
        final_population: pop,
        final_front,
        hv_reference: None,
        holdout,
        models: model.into_iter().collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Scores the fitted surrogates on fresh simulator samples; these calls
/// are reporting-only and excluded from the optimisation counters.
fn score_holdout(
    ctx: &ProblemContext,
    models: &[RandomForestModel],
) -> Result<(Vec<HoldoutAccuracy>, u64)> {
    let n = ctx.cfg.surrogate.holdout_size;
    if n == 0 || models.is_empty() {
        return Ok((Vec::new(), 0));
    }
    let mut holdout_rng = rng::stream(ctx.rep_seed, &[tag::HOLDOUT]);
    let genomes: Vec<Genome> = init_random_population(&ctx.specs, n, &mut holdout_rng)?
        .members
        .into_iter()
        .map(|m| m.genome)
        .collect();
    let fitness = ctx.evaluate_batch(tag::HOLDOUT, 0, &genomes)?;
    let mut scores = Vec::with_capacity(models.len());
    for (k, model) in models.iter().enumerate() {
        let mut set = TrainingSet::default();
        for (genome, fv) in genomes.iter().zip(&fitness) {
            set.push(genome.clone(), fv.values()[k])?;
        }
        scores.push(holdout_accuracy(model, &set)?);
    }
    Ok((scores, n as u64))
}

struct FrontMetrics {
    front: Vec<[f64; 2]>,
    hv: f64,
    gd: f64,
    igd: f64,
}

/// First-front metrics in normalized (percent / 100) objectives. Points
/// that fall below the hypervolume reference are not part of its area.
fn psa_front_metrics(
    members: &[Individual],
    hv_reference: [f64; 2],
    reference_front: &FrontSet,
) -> Result<FrontMetrics> {
    let objs: Vec<FitnessVector> = members.iter().map(|m| m.fitness().unwrap().clone()).collect();
    let ord = DominanceOrdering::new(objs[0].directions().to_vec())?;
    let partition = crate::nsga::fast_non_dominated_sort(&objs, &ord)?;
    let front: Vec<[f64; 2]> = partition.fronts[0]
        .iter()
        .map(|&i| [objs[i].values()[0], objs[i].values()[1]])
        .collect();

    let normalized: Vec<Vec<f64>> = front.iter().map(|p| vec![p[0] / 100.0, p[1] / 100.0]).collect();
    let ref_norm = [hv_reference[0] / 100.0, hv_reference[1] / 100.0];
    let dominating: Vec<Vec<f64>> = normalized
        .iter()
        .filter(|p| p[0] >= ref_norm[0] && p[1] >= ref_norm[1])
        .cloned()
        .collect();
    let hv = hypervolume_2d(
        &FrontSet::new(dominating, "front")?,
        &ReferencePoint::new(ref_norm.to_vec()),
    )?;
    let x = FrontSet::new(normalized, "front")?;
    Ok(FrontMetrics {
        front,
        hv,
        gd: gd_plus(&x, reference_front)?,
        igd: igd_plus(&x, reference_front)?,
    })
}

/// Indices of the non-dominated members of a fully evaluated population.
fn front_one_members(pop: &Population) -> Result<Vec<usize>> {
    let objs: Vec<FitnessVector> =
        pop.members.iter().map(|m| m.fitness().unwrap().clone()).collect();
    let ord = DominanceOrdering::new(objs[0].directions().to_vec())?;
    let mut front = Vec::new();
    for (i, a) in objs.iter().enumerate() {
        let dominated = objs.iter().any(|b| dominates(b, a, &ord).unwrap_or(false));
        if !dominated {
            front.push(i);
        }
    }
    Ok(front)
}

/// Runs one repetition of the two-objective loop (surrogate-assisted or
/// direct, per the config).
///
/// Per generation: merge the previous population with its offspring, rank
/// by non-dominated front and crowding distance, keep the best
/// `population` members, breed a new offspring set by binary-tournament
/// selection, intermediate crossover and Gaussian mutation, evaluate it
/// with the configured evaluator, then cross-check the ranked elite
/// against the simulator and retrain both forests on divergence.
pub fn run_sa_nsga(cfg: &ExperimentConfig, repetition: u32) -> Result<RepetitionRun> {
    require_algorithm(cfg, Algorithm::Nsga2)?;
    let start = Instant::now();
    let ctx = ProblemContext::new(cfg, repetition);
    let params = cfg.nsga.clone();
    let surrogate_mode = cfg.mode == Mode::Surrogate;
    let generations = cfg.generations();
    let n_objectives = cfg.problem.objective_count();

    let mut warm_rng = rng::stream(ctx.rep_seed, &[tag::WARM_GENOMES]);
    let ranker = |members: &[Individual]| -> Result<Vec<usize>> {
        nsga_rank_order(&Population::new(members.to_vec(), 0)?)
    };
    let (mut pop, warm_training) = warm_start(
        &ctx.specs,
        params.warm_size,
        params.population,
        |i, g| ctx.evaluate(tag::WARM_EVAL, 0, i as u64, g),
        ranker,
        &mut warm_rng,
    )?;
    let warm_sim_calls = params.warm_size as u64;
    let mut sim_calls = warm_sim_calls;
    let mut surrogate_calls = 0u64;
    let mut retrains = 0u32;

    // The hypervolume reference is the objective-wise worst corner of the
    // warm sample, fixed for the whole run.
    let hv_reference = [
        warm_training[0].targets().iter().copied().fold(f64::INFINITY, f64::min),
        warm_training[1].targets().iter().copied().fold(f64::INFINITY, f64::min),
    ];
    let reference_front = FrontSet::new(
        psa_proxy_front(PROXY_FRONT_POINTS)
            .into_iter()
            .map(|p| vec![p[0] / 100.0, p[1] / 100.0])
            .collect(),
        "proxy_front",
    )?;

    let mut models: Vec<RandomForestModel> = if surrogate_mode {
        warm_training
            .iter()
            .enumerate()
            .map(|(k, set)| {
                fit_forest(
                    set,
                    &cfg.surrogate.forest,
                    &mut rng::stream(ctx.rep_seed, &[tag::FOREST_FIT, 0, k as u64]),
                )
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let mut pendings = vec![TrainingSet::default(); n_objectives];

    let mut offspring: Vec<Individual> = Vec::new();
    let mut records = Vec::with_capacity(generations as usize);
    let mut final_front_members: Vec<Individual> = Vec::new();

    for g in 0..generations {
        let mut ops_rng = rng::stream(ctx.rep_seed, &[tag::OPERATORS, u64::from(g)]);

        // Survival over the merged pool.
        let mut pool_members = pop.members.clone();
        pool_members.append(&mut offspring);
        let pool = Population::new(pool_members, g)?;
        let order = nsga_rank_order(&pool)?;
        let survivors: Vec<Individual> =
            order.iter().take(params.population).map(|&i| pool.members[i].clone()).collect();
        pop = Population::new(survivors, g)?;

        // Mating: survivors are stored best-first, so the tournament
        // comparator is plain index order.
        let parents = tournament_selection(
            &pop,
            params.tournament_size,
            params.mating_pool_size(),
            |a, b| a.cmp(&b),
            &mut ops_rng,
        )?;
        let mut offspring_genomes: Vec<Genome> = Vec::with_capacity(parents.len());
        for pair in parents.members.chunks(2) {
            let p1 = &pair[0].genome;
            let p2 = if pair.len() == 2 { &pair[1].genome } else { &parents.members[0].genome };
            let (c1, c2) =
                intermediate_crossover(p1, p2, params.crossover_rate, &ctx.specs, &mut ops_rng)?;
            for child in [c1, c2] {
                if offspring_genomes.len() == parents.len() {
                    break;
                }
                offspring_genomes.push(gaussian_mutation(
                    &child,
                    &ctx.specs,
                    params.mutation_rate,
                    params.mutation_scale,
                    params.mutation_shrink,
                    g,
                    generations,
                    &mut ops_rng,
                )?);
            }
        }

        offspring = if surrogate_mode {
            surrogate_calls += offspring_genomes.len() as u64;
            offspring_genomes
                .iter()
                .map(|genome| {
                    let values = models
                        .iter()
                        .map(|m| predict_forest(m, genome))
                        .collect::<Result<Vec<f64>>>()?;
                    Individual::evaluated(
                        genome.clone(),
                        FitnessVector::new(values, cfg.problem.directions())?,
                        EvalSource::Surrogate,
                    )
                })
                .collect::<Result<_>>()?
        } else {
            sim_calls += offspring_genomes.len() as u64;
            let values =
                ctx.evaluate_batch(tag::OFFSPRING_EVAL, u64::from(g), &offspring_genomes)?;
            offspring_genomes
                .iter()
                .zip(values)
                .map(|(genome, fv)| {
                    Individual::evaluated(genome.clone(), fv, EvalSource::Simulation)
                })
                .collect::<Result<_>>()?
        };

        // Elite cross-check: the top of the ranked population is always
        // measured by the simulator.
        let elite_size = elite_count(params.elite_fraction, pop.len());
        let elite_genomes: Vec<Genome> =
            pop.members[..elite_size].iter().map(|m| m.genome.clone()).collect();
        let elite_fitness = ctx.evaluate_batch(tag::ELITE_EVAL, u64::from(g), &elite_genomes)?;
        sim_calls += elite_size as u64;

        let mut diverged = false;
        if surrogate_mode {
            surrogate_calls += elite_size as u64;
            let elite_pop = Population::new(
                elite_genomes
                    .iter()
                    .zip(&elite_fitness)
                    .map(|(genome, fv)| {
                        Individual::evaluated(genome.clone(), fv.clone(), EvalSource::Simulation)
                    })
                    .collect::<Result<_>>()?,
                g,
            )?;
            // The models retrain together: one breach flags both.
            for (k, model) in models.iter().enumerate() {
                let sim_values: Vec<f64> = elite_fitness.iter().map(|f| f.values()[k]).collect();
                let score = divergence_score(model, &elite_pop, &sim_values)?;
                let sigma = divergence_reference_sigma(
                    cfg.surrogate.divergence_reference,
                    model,
                    &sim_values,
                );
                if score > cfg.surrogate.divergence_sigma * sigma {
                    diverged = true;
                }
            }
            for (genome, fv) in elite_genomes.iter().zip(&elite_fitness) {
                for (k, pending) in pendings.iter_mut().enumerate() {
                    pending.push(genome.clone(), fv.values()[k])?;
                }
            }
        }
        for (slot, fv) in elite_fitness.into_iter().enumerate() {
            pop.members[slot].set_fitness(fv, EvalSource::Simulation)?;
        }

        if diverged {
            for (k, model) in models.iter_mut().enumerate() {
                *model = retrain(
                    model,
                    &pendings[k],
                    &mut rng::stream(ctx.rep_seed, &[tag::FOREST_FIT, u64::from(g) + 1, k as u64]),
                )?;
            }
            for pending in &mut pendings {
                pending.clear();
            }
            retrains += 1;
        }

        let last_generation = g + 1 == generations;
        if last_generation && surrogate_mode {
            // Report the closing front from the simulator, not from
            // surrogate beliefs: re-measure every believed front member.
            let believed = front_one_members(&pop)?;
            let genomes: Vec<Genome> =
                believed.iter().map(|&i| pop.members[i].genome.clone()).collect();
            let fresh = ctx.evaluate_batch(tag::EXPORT, u64::from(g), &genomes)?;
            sim_calls += genomes.len() as u64;
            for (&slot, fv) in believed.iter().zip(fresh) {
                pop.members[slot].set_fitness(fv, EvalSource::Simulation)?;
            }
        }

        let metrics = psa_front_metrics(&pop.members, hv_reference, &reference_front)?;
        if last_generation {
            final_front_members =
                front_one_members(&pop)?.into_iter().map(|i| pop.members[i].clone()).collect();
        }
        records.push(GenerationRecord {
            generation: g,
            best_fitness: None,
            mean_fitness: None,
            elite_mean_fitness: None,
            front: Some(metrics.front),
            hv: Some(metrics.hv),
            gd_plus: Some(metrics.gd),
            igd_plus: Some(metrics.igd),
            sim_calls,
            surrogate_calls,
            diverged,
            retrains,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }

    let final_front = final_front_members
        .iter()
        .map(|m| FrontMember {
            objectives: m.fitness().unwrap().values().to_vec(),
            genome: m.genome.clone(),
        })
        .collect();

    let (holdout, holdout_sim_calls) =
        if surrogate_mode { score_holdout(&ctx, &models)? } else { (Vec::new(), 0) };

    Ok(RepetitionRun {
        repetition,
        records,
        warm_sim_calls,
        holdout_sim_calls,
        final_population: pop,
        final_front,
        hv_reference: Some(hv_reference),
        holdout,
        models,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs the configured loop with the surrogate branch disabled; every
/// evaluation hits the simulator.
pub fn run_direct_baseline(cfg: &ExperimentConfig, repetition: u32) -> Result<RepetitionRun> {
    let mut direct = cfg.clone();
    direct.mode = Mode::Direct;
    match direct.algorithm {
        Algorithm::Ga => run_sa_ga(&direct, repetition),
        Algorithm::Nsga2 => run_sa_nsga(&direct, repetition),
    }
}

/// Runs every configured repetition of the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let runs = (0..cfg.repetitions)
        .map(|rep| match cfg.algorithm {
            Algorithm::Ga => run_sa_ga(cfg, rep),
            Algorithm::Nsga2 => run_sa_nsga(cfg, rep),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRun { config: cfg.clone(), runs })
}

/// Compares one direct repetition against one surrogate repetition.
pub fn compute_speedup(direct: &RepetitionRun, surrogate: &RepetitionRun) -> Result<SpeedupReport> {
    if direct.records.is_empty() || direct.records.len() != surrogate.records.len() {
        return Err(Error::invalid(format!(
            "runs must cover the same generations, got {} vs {}",
            direct.records.len(),
            surrogate.records.len()
        )));
    }
    let direct_total = direct.records.last().unwrap().sim_calls;
    let surrogate_total = surrogate.records.last().unwrap().sim_calls;
    if surrogate_total == 0 || direct_total == 0 {
        return Err(Error::invalid("both runs must have made simulator calls"));
    }
    Ok(SpeedupReport {
        sim_call_ratio: direct_total as f64 / surrogate_total as f64,
        sim_call_ratio_excl_warm: (direct_total - direct.warm_sim_calls) as f64
            / surrogate_total as f64,
        wall_time_ratio: direct.wall_time_s / surrogate.wall_time_s.max(1e-12),
        holdout_r2: surrogate.holdout.iter().map(|h| h.r2).collect(),
        holdout_normalized_mae: surrogate.holdout.iter().map(|h| h.normalized_mae).collect(),
    })
}

/// Averages the per-repetition speedup over paired repetitions.
pub fn mean_speedup(direct: &ExperimentRun, surrogate: &ExperimentRun) -> Result<SpeedupReport> {
    if direct.runs.is_empty() || direct.runs.len() != surrogate.runs.len() {
        return Err(Error::invalid("experiments must have matching repetition counts"));
    }
    if direct.config.problem != surrogate.config.problem
        || direct.config.generations() != surrogate.config.generations()
    {
        return Err(Error::invalid("experiments must share problem and generation count"));
    }
    let reports = direct
        .runs
        .iter()
        .zip(&surrogate.runs)
        .map(|(d, s)| compute_speedup(d, s))
        .collect::<Result<Vec<_>>>()?;
    let n = reports.len() as f64;
    let n_obj = reports[0].holdout_r2.len();
    let mean_over = |pick: &dyn Fn(&SpeedupReport) -> &[f64]| -> Vec<f64> {
        (0..n_obj).map(|k| reports.iter().map(|r| pick(r)[k]).sum::<f64>() / n).collect()
    };
    Ok(SpeedupReport {
        sim_call_ratio: reports.iter().map(|r| r.sim_call_ratio).sum::<f64>() / n,
        sim_call_ratio_excl_warm: reports.iter().map(|r| r.sim_call_ratio_excl_warm).sum::<f64>()
            / n,
        wall_time_ratio: reports.iter().map(|r| r.wall_time_ratio).sum::<f64>() / n,
        holdout_r2: mean_over(&|r| &r.holdout_r2),
        holdout_normalized_mae: mean_over(&|r| &r.holdout_normalized_mae),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_ga_cfg(mode: Mode) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(Problem::Cps1, mode, Algorithm::Ga);
        cfg.seed = 11;
        cfg.generations = Some(3);
        cfg.ga.warm_size = 40;
        cfg.ga.population = 12;
        cfg.surrogate.forest.n_trees = 10;
        cfg.surrogate.holdout_size = 10;
        cfg.cps.horizon_hours = 200;
        cfg
    }

    fn small_nsga_cfg(mode: Mode) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(Problem::PsaProxy, mode, Algorithm::Nsga2);
        cfg.seed = 13;
        cfg.generations = Some(4);
        cfg.nsga.warm_size = 50;
        cfg.nsga.population = 16;
        cfg.surrogate.forest.n_trees = 10;
        cfg.surrogate.holdout_size = 10;
        cfg
    }

    #[test]
    fn ga_direct_accounting_is_closed_form() {
        let cfg = small_ga_cfg(Mode::Direct);
        let run = run_sa_ga(&cfg, 0).unwrap();
        assert_eq!(run.records.len(), 3);
        let elite = elite_count(cfg.ga.elite_fraction, cfg.ga.population);
        let per_generation = (cfg.ga.population - elite + elite) as u64;
        let expected = cfg.ga.warm_size as u64 + 3 * per_generation;
        assert_eq!(run.records.last().unwrap().sim_calls, expected);
        assert!(run.records.iter().all(|r| r.surrogate_calls == 0));
        assert!(run.records.iter().all(|r| !r.diverged));
    }

    #[test]
    fn ga_surrogate_uses_fewer_sim_calls() {
        let direct = run_sa_ga(&small_ga_cfg(Mode::Direct), 0).unwrap();
        let surrogate = run_sa_ga(&small_ga_cfg(Mode::Surrogate), 0).unwrap();
        for (d, s) in direct.records.iter().zip(&surrogate.records) {
            assert!(s.sim_calls < d.sim_calls, "generation {}", d.generation);
        }
        assert!(surrogate.records.last().unwrap().surrogate_calls > 0);
        let report = compute_speedup(&direct, &surrogate).unwrap();
        assert!(report.sim_call_ratio > 1.0);
        assert_eq!(report.holdout_r2.len(), 1);
    }

    #[test]
    fn ga_runs_are_reproducible() {
        let cfg = small_ga_cfg(Mode::Surrogate);
        let a = run_sa_ga(&cfg, 0).unwrap();
        let b = run_sa_ga(&cfg, 0).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.best_fitness, y.best_fitness);
            assert_eq!(x.sim_calls, y.sim_calls);
            assert_eq!(x.diverged, y.diverged);
        }
        let c = run_sa_ga(&cfg, 1).unwrap();
        assert_ne!(
            a.records.last().unwrap().best_fitness,
            c.records.last().unwrap().best_fitness
        );
    }

    #[test]
    fn ga_warm_start_matches_across_modes() {
        let direct = run_sa_ga(&small_ga_cfg(Mode::Direct), 2).unwrap();
        let surrogate = run_sa_ga(&small_ga_cfg(Mode::Surrogate), 2).unwrap();
        assert_eq!(direct.warm_sim_calls, surrogate.warm_sim_calls);
        // Same derived streams: both modes start from the same kept set.
        let genomes = |run: &RepetitionRun| {
            run.final_population.members.iter().map(|m| m.genome.len()).count()
        };
        assert_eq!(genomes(&direct), genomes(&surrogate));
    }

    #[test]
    fn ga_elite_is_simulator_tagged() {
        let cfg = small_ga_cfg(Mode::Surrogate);
        let run = run_sa_ga(&cfg, 0).unwrap();
        let elite = elite_count(cfg.ga.elite_fraction, cfg.ga.population);
        for m in &run.final_population.members[..elite] {
            assert_eq!(m.source(), EvalSource::Simulation);
        }
        assert_eq!(run.final_front.len(), elite);
    }

    #[test]
    fn ga_retrains_iff_diverged() {
        let run = run_sa_ga(&small_ga_cfg(Mode::Surrogate), 0).unwrap();
        let diverged_count = run.records.iter().filter(|r| r.diverged).count() as u32;
        assert_eq!(run.records.last().unwrap().retrains, diverged_count);
    }

    #[test]
    fn nsga_record_count_and_front_shape() {
        let cfg = small_nsga_cfg(Mode::Direct);
        let run = run_sa_nsga(&cfg, 0).unwrap();
        assert_eq!(run.records.len(), 4);
        for r in &run.records {
            let front = r.front.as_ref().unwrap();
            assert!(!front.is_empty());
            assert!(r.hv.unwrap() >= 0.0);
            assert!(r.gd_plus.unwrap() >= 0.0);
            assert!(r.igd_plus.unwrap() >= 0.0);
        }
        assert!(!run.final_front.is_empty());
        assert!(run.hv_reference.is_some());
    }

    #[test]
    fn nsga_direct_accounting_is_closed_form() {
        let cfg = small_nsga_cfg(Mode::Direct);
        let run = run_sa_nsga(&cfg, 0).unwrap();
        let elite = elite_count(cfg.nsga.elite_fraction, cfg.nsga.population);
        let expected =
            cfg.nsga.warm_size as u64 + 4 * (cfg.nsga.population as u64 + elite as u64);
        assert_eq!(run.records.last().unwrap().sim_calls, expected);
        assert!(run.records.iter().all(|r| r.surrogate_calls == 0));
    }

    #[test]
    fn nsga_surrogate_reproducible_and_cheaper() {
        let cfg = small_nsga_cfg(Mode::Surrogate);
        let a = run_sa_nsga(&cfg, 0).unwrap();
        let b = run_sa_nsga(&cfg, 0).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.hv, y.hv);
            assert_eq!(x.sim_calls, y.sim_calls);
        }
        let direct = run_sa_nsga(&small_nsga_cfg(Mode::Direct), 0).unwrap();
        assert!(
            a.records.last().unwrap().sim_calls < direct.records.last().unwrap().sim_calls
        );
        // The exported front is simulator-measured.
        for m in front_one_members(&a.final_population).unwrap() {
            assert_eq!(a.final_population.members[m].source(), EvalSource::Simulation);
        }
        assert_eq!(a.holdout.len(), 2);
    }

    #[test]
    fn direct_baseline_forces_direct_mode() {
        let cfg = small_ga_cfg(Mode::Surrogate);
        let run = run_direct_baseline(&cfg, 0).unwrap();
        assert!(run.records.iter().all(|r| r.surrogate_calls == 0));
        assert!(run.models.is_empty());
    }

    #[test]
    fn speedup_rejects_mismatched_runs() {
        let mut short = small_ga_cfg(Mode::Direct);
        short.generations = Some(2);
        let direct = run_sa_ga(&short, 0).unwrap();
        let surrogate = run_sa_ga(&small_ga_cfg(Mode::Surrogate), 0).unwrap();
        assert!(compute_speedup(&direct, &surrogate).is_err());
    }

    #[test]
    fn experiment_runs_all_repetitions() {
        let mut cfg = small_ga_cfg(Mode::Direct);
        cfg.repetitions = 2;
        let run = run_experiment(&cfg).unwrap();
        assert_eq!(run.runs.len(), 2);
        assert_ne!(
            run.runs[0].records.last().unwrap().best_fitness,
            run.runs[1].records.last().unwrap().best_fitness
        );
    }
}
