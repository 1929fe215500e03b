//! Random Forest fitness surrogates: training data management, the
//! forest ensemble, warm-start initialisation, and the divergence /
//! retrain policy that keeps a surrogate honest against the simulator.

mod io;
mod tree;

pub use io::{read_model, write_model};
pub use tree::{fit_tree, predict_tree, TreeNode};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evo::{
    init_random_population, EvalSource, FitnessVector, GeneSpec, Genome, Individual, Population,
};

/// Paired genomes and scalar targets for one objective.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    inputs: Vec<Genome>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(inputs: Vec<Genome>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::invalid(format!(
                "inputs and targets must pair up, got {} and {}",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|g| g.len() != first.len()) {
                return Err(Error::invalid("training genomes must share one length"));
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn push(&mut self, genome: Genome, target: f64) -> Result<()> {
        if let Some(first) = self.inputs.first() {
            if genome.len() != first.len() {
                return Err(Error::invalid("training genomes must share one length"));
            }
        }
        self.inputs.push(genome);
        self.targets.push(target);
        Ok(())
    }

    pub fn append(&mut self, other: &TrainingSet) -> Result<()> {
        for (g, &t) in other.inputs.iter().zip(&other.targets) {
            self.push(g.clone(), t)?;
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.inputs.clear();
        self.targets.clear();
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.inputs.first().map_or(0, Genome::len)
    }

    pub fn inputs(&self) -> &[Genome] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// Split-quality criterion for tree fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    #[default]
    MeanSquaredError,
}

/// Forest configuration; the defaults are the tuned set used throughout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    pub criterion: SplitCriterion,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Candidate features sampled per split; clamped to the genome length
    /// at fit time.
    pub max_features: usize,
    pub bootstrap: bool,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            criterion: SplitCriterion::MeanSquaredError,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: 5,
            bootstrap: true,
        }
    }
}

impl ForestHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_samples_leaf == 0 || self.max_features == 0 {
            return Err(Error::invalid("forest hyper-parameters must be positive"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        Ok(())
    }
}

/// Sample count and target spread captured at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_samples: usize,
    /// Sample standard deviation of the training targets.
    pub sigma_train: f64,
}

/// A fitted Random Forest plus the data it has accumulated, so retraining
/// can extend rather than restart the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestModel {
    trees: Vec<TreeNode>,
    hyperparams: ForestHyperparams,
    summary: TrainingSummary,
    data: TrainingSet,
}

impl RandomForestModel {
    pub(crate) fn from_parts(
        trees: Vec<TreeNode>,
        hyperparams: ForestHyperparams,
        summary: TrainingSummary,
        data: TrainingSet,
    ) -> Self {
        Self { trees, hyperparams, summary, data }
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    pub fn hyperparams(&self) -> &ForestHyperparams {
        &self.hyperparams
    }

    pub fn summary(&self) -> TrainingSummary {
        self.summary
    }

    pub fn sigma_train(&self) -> f64 {
        self.summary.sigma_train
    }

    pub fn data(&self) -> &TrainingSet {
        &self.data
    }
}

pub(crate) fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Fits `n_trees` CARTs, each on a bootstrap resample of the data when
/// bootstrapping is enabled. Trees fit in parallel; each one owns a
/// generator derived here, so the result does not depend on scheduling.
pub fn fit_forest<R: Rng>(
    data: &TrainingSet,
    hp: &ForestHyperparams,
    rng: &mut R,
) -> Result<RandomForestModel> {
    if data.len() < 2 {
        return Err(Error::invalid(format!(
            "forest fitting needs at least 2 samples, got {}",
            data.len()
        )));
    }
    hp.validate()?;
    let tree_seeds: Vec<u64> = (0..hp.n_trees).map(|_| rng.random()).collect();
    let trees: Vec<TreeNode> = tree_seeds
        .par_iter()
        .map(|&seed| {
            let mut tree_rng = crate::rng::stream(seed, &[]);
            let indices: Vec<usize> = if hp.bootstrap {
                (0..data.len()).map(|_| tree_rng.random_range(0..data.len())).collect()
            } else {
                (0..data.len()).collect()
            };
            tree::fit_tree_on_indices(data, indices, hp, &mut tree_rng)
        })
        .collect();
    Ok(RandomForestModel {
        trees,
        hyperparams: hp.clone(),
        summary: TrainingSummary { n_samples: data.len(), sigma_train: sample_std(data.targets()) },
        data: data.clone(),
    })
}

/// Ensemble mean of the per-tree predictions.
pub fn predict_forest(model: &RandomForestModel, genome: &Genome) -> Result<f64> {
    if model.trees.is_empty() {
        return Err(Error::contract("model has no fitted trees"));
    }
    let mut sum = 0.0;
    for tree in &model.trees {
        sum += predict_tree(tree, genome)?;
    }
    Ok(sum / model.trees.len() as f64)
}

/// Evaluates `warm_size` random genomes with the true simulator, keeps
/// the `keep` ranked-best as the initial population, and returns one
/// training set per objective covering every evaluated sample.
///
/// The evaluator receives the sample index so it can derive its own
/// random stream; evaluation runs in parallel with order-stable results.
pub fn warm_start<R, F, K>(
    specs: &[GeneSpec],
    warm_size: usize,
    keep: usize,
    evaluator: F,
    ranker: K,
    rng: &mut R,
) -> Result<(Population, Vec<TrainingSet>)>
where
    R: Rng,
    F: Fn(usize, &Genome) -> Result<FitnessVector> + Sync,
    K: Fn(&[Individual]) -> Result<Vec<usize>>,
{
    if keep == 0 || keep > warm_size {
        return Err(Error::invalid(format!(
            "keep must lie in 1..=warm_size, got keep {keep} of {warm_size}"
        )));
    }
    let genomes: Vec<Genome> = init_random_population(specs, warm_size, rng)?
        .members
        .into_iter()
        .map(|m| m.genome)
        .collect();
    let members: Vec<Individual> = genomes
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let fitness = evaluator(i, g)?;
            Individual::evaluated(g.clone(), fitness, EvalSource::Simulation)
        })
        .collect::<Result<_>>()?;

    let n_objectives = members[0].fitness().map_or(0, FitnessVector::len);
    let mut training = vec![TrainingSet::default(); n_objectives];
    for m in &members {
        let fitness = m.fitness().expect("warm-start members are evaluated");
        if fitness.len() != n_objectives {
            return Err(Error::contract("warm-start evaluator changed objective count"));
        }
        for (set, &v) in training.iter_mut().zip(fitness.values()) {
            set.push(m.genome.clone(), v)?;
        }
    }

    let order = ranker(&members)?;
    let kept = order.iter().take(keep).map(|&i| members[i].clone()).collect();
    Ok((Population::new(kept, 0)?, training))
}

/// Mean absolute deviation between the surrogate's predictions and the
/// simulator's values over the elite.
pub fn divergence_score(
    model: &RandomForestModel,
    elite: &Population,
    sim_values: &[f64],
) -> Result<f64> {
    if elite.is_empty() {
        return Err(Error::invalid("divergence check needs a nonempty elite"));
    }
    if elite.len() != sim_values.len() {
        return Err(Error::invalid(format!(
            "elite size {} does not match {} simulation values",
            elite.len(),
            sim_values.len()
        )));
    }
    let mut total = 0.0;
    for (member, &sim) in elite.members.iter().zip(sim_values) {
        total += (predict_forest(model, &member.genome)? - sim).abs();
    }
    Ok(total / elite.len() as f64)
}

/// True when the mean absolute elite deviation exceeds one training-target
/// standard deviation.
pub fn divergence_check(
    model: &RandomForestModel,
    elite: &Population,
    sim_values: &[f64],
) -> Result<bool> {
    Ok(divergence_score(model, elite, sim_values)? > model.summary.sigma_train)
}

/// Appends the new pairs to the accumulated training set and refits from
/// scratch with the same hyper-parameters.
pub fn retrain<R: Rng>(
    model: &RandomForestModel,
    new_pairs: &TrainingSet,
    rng: &mut R,
) -> Result<RandomForestModel> {
    if new_pairs.is_empty() {
        return Err(Error::invalid("retrain needs at least one new pair"));
    }
    let mut data = model.data.clone();
    data.append(new_pairs)?;
    fit_forest(&data, &model.hyperparams, rng)
}

/// Fit quality of a model on held-out pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutAccuracy {
    pub r2: f64,
    /// `1 - MAE / sigma_train`: 1 is perfect, 0 means errors as wide as
    /// the training spread.
    pub normalized_mae: f64,
}

/// R-squared and normalized mean absolute error on held-out data.
pub fn holdout_accuracy(model: &RandomForestModel, data: &TrainingSet) -> Result<HoldoutAccuracy> {
    if data.is_empty() {
        return Err(Error::invalid("holdout set must be nonempty"));
    }
    let mean = data.targets().iter().sum::<f64>() / data.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut abs_err = 0.0;
    for (g, &y) in data.inputs().iter().zip(data.targets()) {
        let p = predict_forest(model, g)?;
        ss_res += (y - p) * (y - p);
        ss_tot += (y - mean) * (y - mean);
        abs_err += (y - p).abs();
    }
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    let mae = abs_err / data.len() as f64;
    let sigma = model.summary.sigma_train;
    let normalized_mae = if sigma > 0.0 {
        1.0 - mae / sigma
    } else if mae == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(HoldoutAccuracy { r2, normalized_mae })
}
