//! Run artefacts: per-generation CSV, final-front CSV, per-repetition
//! summary, wall-clock timings, the reproduction manifest, and saved
//! surrogate models.
//!
//! Every file except `timings.csv` is a pure function of the manifest, so
//! re-running a manifest reproduces those files byte for byte. All CSV
//! cells are numeric.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Algorithm, ExperimentConfig, ExperimentRun, Mode, ProblemContext};
use crate::surrogate::write_model;

/// A config frozen together with the code version that produced a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub experiment: ExperimentConfig,
}

impl Manifest {
    pub fn for_config(config: &ExperimentConfig) -> Self {
        let mut experiment = config.clone();
        // Manifests pin the resolved generation count but stay
        // location-independent.
        experiment.generations = Some(config.generations());
        experiment.out_dir = None;
        Self { code_version: env!("CARGO_PKG_VERSION").to_string(), experiment }
    }
}

/// Writes the manifest for a config.
pub fn write_manifest(config: &ExperimentConfig, path: &Path) -> Result<()> {
    let manifest = Manifest::for_config(config);
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest encode: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads either a plain experiment config or a run manifest.
pub fn load_config_or_manifest(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(manifest) = toml::from_str::<Manifest>(&text) {
        manifest.experiment.validate()?;
        return Ok(manifest.experiment);
    }
    ExperimentConfig::from_toml_str(&text)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn generations_csv(run: &ExperimentRun) -> String {
    let mut out = String::new();
    match run.config.algorithm {
        Algorithm::Ga => {
            out.push_str(
                "experiment_id,generation,best_fitness,mean_fitness,elite_mean_fitness,\
                 sim_calls,surrogate_calls,diverged\n",
            );
            for rep in &run.runs {
                for r in &rep.records {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        rep.repetition,
                        r.generation,
                        r.best_fitness.unwrap_or(f64::NAN),
                        r.mean_fitness.unwrap_or(f64::NAN),
                        r.elite_mean_fitness.unwrap_or(f64::NAN),
                        r.sim_calls,
                        r.surrogate_calls,
                        u8::from(r.diverged),
                    );
                }
            }
        }
        Algorithm::Nsga2 => {
            out.push_str("experiment_id,generation,hv,gd_plus,igd_plus,sim_calls,surrogate_calls\n");
            for rep in &run.runs {
                for r in &rep.records {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        rep.repetition,
                        r.generation,
                        r.hv.unwrap_or(f64::NAN),
                        r.gd_plus.unwrap_or(f64::NAN),
                        r.igd_plus.unwrap_or(f64::NAN),
                        r.sim_calls,
                        r.surrogate_calls,
                    );
                }
            }
        }
    }
    out
}

fn front_csv(run: &ExperimentRun) -> String {
    let mut out = String::from("experiment_id");
    for name in run.config.problem.objective_names() {
        out.push(',');
        out.push_str(name);
    }
    for spec in run.config.problem.gene_specs() {
        out.push(',');
        out.push_str(&spec.name);
    }
    out.push('\n');
    for rep in &run.runs {
        for member in &rep.final_front {
            let _ = write!(out, "{}", rep.repetition);
            for v in &member.objectives {
                let _ = write!(out, ",{v}");
            }
            for g in &member.genome.genes {
                let _ = write!(out, ",{g}");
            }
            out.push('\n');
        }
    }
    out
}

fn summary_csv(run: &ExperimentRun) -> String {
    let surrogate_mode = run.config.mode == Mode::Surrogate;
    let n_objectives = run.config.problem.objective_count();
    let mut header = String::from(
        "experiment_id,warm_sim_calls,total_sim_calls,total_surrogate_calls,retrains,\
         holdout_sim_calls",
    );
    match run.config.algorithm {
        Algorithm::Ga => header.push_str(",final_best_fitness,final_elite_mean_fitness"),
        Algorithm::Nsga2 => {
            header.push_str(",final_hv,final_gd_plus,final_igd_plus,hv_ref_0,hv_ref_1");
        }
    }
    if surrogate_mode {
        for k in 0..n_objectives {
            let _ = write!(header, ",holdout_r2_{k},holdout_nmae_{k}");
        }
    }
    let mut out = header;
    out.push('\n');
    for rep in &run.runs {
        let last = rep.records.last().expect("runs have records");
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            rep.repetition,
            rep.warm_sim_calls,
            last.sim_calls,
            last.surrogate_calls,
            last.retrains,
            rep.holdout_sim_calls,
        );
        match run.config.algorithm {
            Algorithm::Ga => {
                let _ = write!(
                    out,
                    ",{},{}",
                    last.best_fitness.unwrap_or(f64::NAN),
                    last.elite_mean_fitness.unwrap_or(f64::NAN)
                );
            }
            Algorithm::Nsga2 => {
                let hv_ref = rep.hv_reference.unwrap_or([f64::NAN, f64::NAN]);
                let _ = write!(
                    out,
                    ",{},{},{},{},{}",
                    last.hv.unwrap_or(f64::NAN),
                    last.gd_plus.unwrap_or(f64::NAN),
                    last.igd_plus.unwrap_or(f64::NAN),
                    hv_ref[0],
                    hv_ref[1],
                );
            }
        }
        if surrogate_mode {
            for h in &rep.holdout {
                let _ = write!(out, ",{},{}", h.r2, h.normalized_mae);
            }
        }
        out.push('\n');
    }
    out
}

fn timings_csv(run: &ExperimentRun) -> String {
    let mut out = String::from("experiment_id,wall_time_s\n");
    for rep in &run.runs {
        let _ = writeln!(out, "{},{}", rep.repetition, rep.wall_time_s);
    }
    out
}

fn outcomes_csv(run: &ExperimentRun) -> Result<Option<String>> {
    let mut out = String::new();
    for rep in &run.runs {
        let ctx = ProblemContext::new(&run.config, rep.repetition);
        for (i, member) in rep.final_front.iter().enumerate() {
            let Some(outcome) = ctx.simulate_outcome(i as u64, &member.genome)? else {
                return Ok(None);
            };
            if out.is_empty() {
                out.push_str("experiment_id,");
                out.push_str(&outcome.csv_header());
                out.push('\n');
            }
            let _ = writeln!(out, "{},{}", rep.repetition, outcome.csv_row());
        }
    }
    Ok(if out.is_empty() { None } else { Some(out) })
}

/// Writes the run's artefacts into `out_dir`, returning the paths
/// created.
pub fn export_results(run: &ExperimentRun, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if run.runs.is_empty() {
        return Err(Error::invalid("cannot export an experiment with no repetitions"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let manifest_path = out_dir.join("manifest.toml");
    write_manifest(&run.config, &manifest_path)?;
    written.push(manifest_path);

    written.push(write_file(out_dir, "generations.csv", &generations_csv(run))?);
    written.push(write_file(out_dir, "front.csv", &front_csv(run))?);
    written.push(write_file(out_dir, "summary.csv", &summary_csv(run))?);
    written.push(write_file(out_dir, "timings.csv", &timings_csv(run))?);
    if let Some(outcomes) = outcomes_csv(run)? {
        written.push(write_file(out_dir, "outcomes.csv", &outcomes)?);
    }

    // Saved models allow resuming or re-scoring the first repetition's
    // surrogates without re-running the experiment.
    if let Some(first) = run.runs.first() {
        for (k, model) in first.models.iter().enumerate() {
            let path = out_dir.join(format!("model_obj{k}.rfm"));
            write_model(model, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, Problem};

    fn tiny_ga_run() -> ExperimentRun {
        let mut cfg = ExperimentConfig::new(Problem::Cps2, Mode::Surrogate, Algorithm::Ga);
        cfg.seed = 3;
        cfg.generations = Some(2);
        cfg.repetitions = 2;
        cfg.ga.warm_size = 30;
        cfg.ga.population = 10;
        cfg.surrogate.forest.n_trees = 8;
        cfg.surrogate.holdout_size = 8;
        cfg.cps.horizon_hours = 150;
        run_experiment(&cfg).unwrap()
    }

    fn assert_strict_numeric_csv(text: &str) {
        let mut lines = text.lines();
        let header = lines.next().expect("header");
        let columns = header.split(',').count();
        assert!(columns > 1);
        let mut rows = 0;
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), columns, "ragged row: {line}");
            for cell in cells {
                cell.parse::<f64>().unwrap_or_else(|_| panic!("non-numeric cell '{cell}'"));
            }
            rows += 1;
        }
        assert!(rows > 0, "csv has no data rows");
    }

    #[test]
    fn exported_files_are_strict_csv() {
        let run = tiny_ga_run();
        let dir = tempfile::tempdir().unwrap();
        let written = export_results(&run, dir.path()).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for expected in ["manifest.toml", "generations.csv", "front.csv", "summary.csv",
                         "timings.csv", "outcomes.csv", "model_obj0.rfm"] {
            assert!(names.iter().any(|n| n == expected), "missing {expected}");
        }
        for file in ["generations.csv", "front.csv", "summary.csv", "timings.csv",
                     "outcomes.csv"] {
            let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
            assert_strict_numeric_csv(&text);
        }
    }

    #[test]
    fn front_csv_has_one_row_per_front_member() {
        let run = tiny_ga_run();
        let expected: usize = run.runs.iter().map(|r| r.final_front.len()).sum();
        let text = front_csv(&run);
        assert_eq!(text.lines().count() - 1, expected);
    }

    #[test]
    fn manifest_round_trips_and_reproduces() {
        let run = tiny_ga_run();
        let dir = tempfile::tempdir().unwrap();
        export_results(&run, dir.path()).unwrap();
        let cfg = load_config_or_manifest(&dir.path().join("manifest.toml")).unwrap();
        assert_eq!(cfg.generations, Some(2));
        let rerun = run_experiment(&cfg).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        export_results(&rerun, dir2.path()).unwrap();
        for file in ["generations.csv", "front.csv", "summary.csv", "outcomes.csv",
                     "manifest.toml", "model_obj0.rfm"] {
            let a = std::fs::read(dir.path().join(file)).unwrap();
            let b = std::fs::read(dir2.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between a run and its manifest re-run");
        }
    }

    #[test]
    fn plain_config_also_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        std::fs::write(&path, "problem = \"cps1\"\nmode = \"direct\"\nalgorithm = \"ga\"\n")
            .unwrap();
        let cfg = load_config_or_manifest(&path).unwrap();
        assert_eq!(cfg.problem, Problem::Cps1);
    }

    #[test]
    fn export_to_unwritable_directory_reports_path() {
        let run = tiny_ga_run();
        let err = export_results(&run, Path::new("/proc/definitely/not/writable")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
