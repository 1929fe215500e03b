//! Experiment configuration: the TOML-backed schema shared by config
//! files, CLI overrides, and run manifests.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evo::{Direction, GeneSpec};
use crate::sims::{cps1_gene_specs, cps2_gene_specs, psa_gene_specs, CpsConfig};
use crate::surrogate::ForestHyperparams;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Evaluation target of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Cps1,
    Cps2,
    PsaProxy,
}

impl Problem {
    pub fn objective_count(self) -> usize {
        match self {
            Problem::Cps1 | Problem::Cps2 => 1,
            Problem::PsaProxy => 2,
        }
    }

    pub fn gene_specs(self) -> Vec<GeneSpec> {
        match self {
            Problem::Cps1 => cps1_gene_specs(),
            Problem::Cps2 => cps2_gene_specs(),
            Problem::PsaProxy => psa_gene_specs(),
        }
    }

    pub fn directions(self) -> Vec<Direction> {
        vec![Direction::Maximize; self.objective_count()]
    }

    pub fn objective_names(self) -> Vec<&'static str> {
        match self {
            Problem::Cps1 | Problem::Cps2 => vec!["revenue"],
            Problem::PsaProxy => vec!["purity_pct", "recovery_pct"],
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Cps1 => "cps1",
            Problem::Cps2 => "cps2",
            Problem::PsaProxy => "psa_proxy",
        })
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cps1" => Ok(Problem::Cps1),
            "cps2" => Ok(Problem::Cps2),
            "psa_proxy" => Ok(Problem::PsaProxy),
            other => Err(Error::Config(format!(
                "unknown problem '{other}' (expected cps1, cps2 or psa_proxy)"
            ))),
        }
    }
}

/// Whether offspring are evaluated by the simulator or the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Direct,
    Surrogate,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Direct => "direct",
            Mode::Surrogate => "surrogate",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Mode::Direct),
            "surrogate" => Ok(Mode::Surrogate),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected direct or surrogate)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ga,
    Nsga2,
}

impl Algorithm {
    pub fn default_generations(self) -> u32 {
        match self {
            Algorithm::Ga => 50,
            Algorithm::Nsga2 => 60,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Ga => "ga",
            Algorithm::Nsga2 => "nsga2",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ga" => Ok(Algorithm::Ga),
            "nsga2" => Ok(Algorithm::Nsga2),
            other => {
                Err(Error::Config(format!("unknown algorithm '{other}' (expected ga or nsga2)")))
            }
        }
    }
}

/// Parameters of the single-objective loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population: usize,
    pub warm_size: usize,
    pub elite_fraction: f64,
    pub blx_alpha: f64,
    /// Fraction of offspring produced by crossover (the rest clone a
    /// parent before mutation).
    pub crossover_rate: f64,
    /// Per-gene random-substitution probability.
    pub mutation_rate: f64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 75,
            warm_size: 800,
            elite_fraction: 0.15,
            blx_alpha: 0.15,
            crossover_rate: 1.0,
            mutation_rate: 0.30,
        }
    }
}

/// Parameters of the two-objective loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NsgaParams {
    pub population: usize,
    pub warm_size: usize,
    /// Fraction of the ranked population cross-checked against the
    /// simulator each generation.
    pub elite_fraction: f64,
    pub tournament_size: usize,
    /// Number of selection tournaments per generation; the mating pool
    /// size. Zero means "population size".
    pub n_select: usize,
    /// Per-gene selection probability of the intermediate crossover.
    pub crossover_rate: f64,
    /// Per-gene Gaussian mutation probability.
    pub mutation_rate: f64,
    pub mutation_scale: f64,
    pub mutation_shrink: f64,
}

impl Default for NsgaParams {
    fn default() -> Self {
        Self {
            population: 60,
            warm_size: 800,
            elite_fraction: 0.15,
            tournament_size: 2,
            n_select: 0,
            crossover_rate: 2.0 / 6.0,
            mutation_rate: 2.0 / 6.0,
            mutation_scale: 0.1,
            mutation_shrink: 0.5,
        }
    }
}

impl NsgaParams {
    pub fn mating_pool_size(&self) -> usize {
        if self.n_select == 0 {
            self.population
        } else {
            self.n_select
        }
    }
}

/// Which spread the 1-sigma divergence rule is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceReference {
    /// Standard deviation of the model's training targets. Over a mostly
    /// random training set this spread is so wide that retraining never
    /// triggers and the forest stays capped at the warm-start hull.
    TrainingSigma,
    /// Standard deviation of the current elite's simulator values, so the
    /// rule tightens as the search converges.
    EliteSigma,
}

/// Surrogate-management parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateParams {
    pub forest: ForestHyperparams,
    /// Retrain when the mean absolute elite deviation exceeds this many
    /// reference standard deviations.
    pub divergence_sigma: f64,
    pub divergence_reference: DivergenceReference,
    /// Fresh simulator evaluations used to score surrogate accuracy after
    /// a run (reported separately from optimisation call counts).
    pub holdout_size: usize,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            forest: ForestHyperparams::default(),
            divergence_sigma: 1.0,
            divergence_reference: DivergenceReference::EliteSigma,
            holdout_size: 200,
        }
    }
}

/// A fully-specified experiment; serialises to the config-file and
/// manifest schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub problem: Problem,
    pub mode: Mode,
    pub algorithm: Algorithm,
    /// Generation count; omitted means the per-algorithm default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<u32>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub ga: GaParams,
    #[serde(default)]
    pub nsga: NsgaParams,
    #[serde(default)]
    pub surrogate: SurrogateParams,
    #[serde(default)]
    pub cps: CpsConfig,
}

fn default_format_version() -> u32 {
    CONFIG_FORMAT_VERSION
}

fn default_repetitions() -> u32 {
    1
}

impl ExperimentConfig {
    pub fn new(problem: Problem, mode: Mode, algorithm: Algorithm) -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            problem,
            mode,
            algorithm,
            generations: None,
            repetitions: 1,
            seed: 0,
            out_dir: None,
            ga: GaParams::default(),
            nsga: NsgaParams::default(),
            surrogate: SurrogateParams::default(),
            cps: CpsConfig::default(),
        }
    }

    pub fn generations(&self) -> u32 {
        self.generations.unwrap_or_else(|| self.algorithm.default_generations())
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported config format version {}",
                self.format_version
            )));
        }
        let objectives = self.problem.objective_count();
        match self.algorithm {
            Algorithm::Ga if objectives != 1 => {
                return Err(Error::invalid(format!(
                    "algorithm ga needs a single-objective problem, {} has {objectives}",
                    self.problem
                )))
            }
            Algorithm::Nsga2 if objectives != 2 => {
                return Err(Error::invalid(format!(
                    "algorithm nsga2 needs a two-objective problem, {} has {objectives}",
                    self.problem
                )))
            }
            _ => {}
        }
        if self.generations() == 0 {
            return Err(Error::invalid("generations must be at least 1"));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }

        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        let (population, warm_size, elite_fraction) = match self.algorithm {
            Algorithm::Ga => (self.ga.population, self.ga.warm_size, self.ga.elite_fraction),
            Algorithm::Nsga2 => {
                (self.nsga.population, self.nsga.warm_size, self.nsga.elite_fraction)
            }
        };
        if population < 2 {
            return Err(Error::invalid("population must be at least 2"));
        }
        if warm_size < population {
            return Err(Error::invalid(format!(
                "warm size {warm_size} cannot be below the population size {population}"
            )));
        }
        if !(elite_fraction > 0.0 && elite_fraction <= 1.0) {
            return Err(Error::invalid("elite fraction must lie in (0, 1]"));
        }
        match self.algorithm {
            Algorithm::Ga => {
                rate("crossover_rate", self.ga.crossover_rate)?;
                rate("mutation_rate", self.ga.mutation_rate)?;
                if self.ga.blx_alpha < 0.0 {
                    return Err(Error::invalid("blx_alpha must be non-negative"));
                }
            }
            Algorithm::Nsga2 => {
                rate("crossover_rate", self.nsga.crossover_rate)?;
                rate("mutation_rate", self.nsga.mutation_rate)?;
                rate("mutation_shrink", self.nsga.mutation_shrink)?;
                if self.nsga.mutation_scale <= 0.0 {
                    return Err(Error::invalid("mutation_scale must be positive"));
                }
                if self.nsga.tournament_size == 0 {
                    return Err(Error::invalid("tournament_size must be at least 1"));
                }
            }
        }
        if self.mode == Mode::Surrogate {
            self.surrogate.forest.validate()?;
            if self.surrogate.divergence_sigma <= 0.0 {
                return Err(Error::invalid("divergence_sigma must be positive"));
            }
        }
        self.cps.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config encode: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_tuned_setup() {
        let cfg = ExperimentConfig::new(Problem::Cps1, Mode::Surrogate, Algorithm::Ga);
        assert_eq!(cfg.generations(), 50);
        assert_eq!(cfg.ga.population, 75);
        assert_eq!(cfg.ga.warm_size, 800);
        assert_eq!(cfg.ga.mutation_rate, 0.30);
        let nsga = ExperimentConfig::new(Problem::PsaProxy, Mode::Surrogate, Algorithm::Nsga2);
        assert_eq!(nsga.generations(), 60);
        assert_eq!(nsga.nsga.population, 60);
        assert!((nsga.nsga.crossover_rate - 2.0 / 6.0).abs() < 1e-15);
        assert!(cfg.validate().is_ok());
        assert!(nsga.validate().is_ok());
    }

    #[test]
    fn algorithm_problem_pairing_is_enforced() {
        let bad = ExperimentConfig::new(Problem::PsaProxy, Mode::Direct, Algorithm::Ga);
        assert!(bad.validate().is_err());
        let bad2 = ExperimentConfig::new(Problem::Cps1, Mode::Direct, Algorithm::Nsga2);
        assert!(bad2.validate().is_err());
    }

    #[test]
    fn minimal_toml_round_trips() {
        let text = "problem = \"cps2\"\nmode = \"surrogate\"\nalgorithm = \"ga\"\nseed = 7\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.problem, Problem::Cps2);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.ga.population, 75);
        let encoded = cfg.to_toml_string().unwrap();
        let again = ExperimentConfig::from_toml_str(&encoded).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(ExperimentConfig::from_toml_str("problem = \"nope\"").is_err());
        assert!(ExperimentConfig::from_toml_str("problem = \"cps1\"").is_err());
    }

    #[test]
    fn enum_round_trip_via_fromstr() {
        for p in ["cps1", "cps2", "psa_proxy"] {
            assert_eq!(p.parse::<Problem>().unwrap().to_string(), p);
        }
        assert!("cps3".parse::<Problem>().is_err());
        assert_eq!("direct".parse::<Mode>().unwrap(), Mode::Direct);
        assert_eq!("nsga2".parse::<Algorithm>().unwrap(), Algorithm::Nsga2);
    }
}
