//! `saeo` — run surrogate-assisted and direct optimisation experiments,
//! compare their cost, and inspect exported fronts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use saeo::harness::{
    export_results, load_config_or_manifest, run_experiment, Algorithm, ExperimentConfig,
    ExperimentRun, Mode, Problem,
};

#[derive(Parser)]
#[command(name = "saeo", version, about = "Surrogate-assisted evolutionary optimisation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and export its records, fronts and models.
    Run(RunArgs),
    /// Run the direct (simulator-only) baseline of a configuration.
    Baseline(RunArgs),
    /// Compare a direct run directory against a surrogate run directory.
    Report(ReportArgs),
    /// Print the exported final front of a run directory.
    Front(FrontArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config or manifest TOML; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// cps1, cps2 or psa_proxy.
    #[arg(long)]
    problem: Option<String>,
    /// direct or surrogate.
    #[arg(long)]
    mode: Option<String>,
    /// ga or nsga2; defaults to the problem's natural algorithm.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    generations: Option<u32>,
    #[arg(long)]
    repetitions: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the run artefacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory exported by a direct-mode run.
    #[arg(long)]
    direct: PathBuf,
    /// Directory exported by a surrogate-mode run.
    #[arg(long)]
    surrogate: PathBuf,
}

#[derive(Args)]
struct FrontArgs {
    /// Run directory containing front.csv.
    #[arg(long)]
    run: PathBuf,
    /// Restrict the listing to one repetition.
    #[arg(long)]
    rep: Option<u32>,
}

fn main() {
    if let Err(err) = dispatch(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run(args, None),
        Command::Baseline(args) => run(args, Some(Mode::Direct)),
        Command::Report(args) => report(&args),
        Command::Front(args) => front(&args),
    }
}

fn build_config(args: &RunArgs, forced_mode: Option<Mode>) -> Result<ExperimentConfig> {
    let mut cfg = if let Some(path) = &args.config {
        load_config_or_manifest(path).with_context(|| format!("loading {}", path.display()))?
    } else {
        let problem: Problem = args
            .problem
            .as_deref()
            .context("--problem is required when no --config is given")?
            .parse()?;
        let algorithm = match args.algorithm.as_deref() {
            Some(a) => a.parse()?,
            None => match problem.objective_count() {
                1 => Algorithm::Ga,
                _ => Algorithm::Nsga2,
            },
        };
        let mode = match (forced_mode, args.mode.as_deref()) {
            (Some(m), _) => m,
            (None, Some(m)) => m.parse()?,
            (None, None) => Mode::Surrogate,
        };
        ExperimentConfig::new(problem, mode, algorithm)
    };

    if let Some(p) = &args.problem {
        cfg.problem = p.parse()?;
    }
    if let Some(a) = &args.algorithm {
        cfg.algorithm = a.parse()?;
    }
    if let Some(m) = &args.mode {
        cfg.mode = m.parse()?;
    }
    if let Some(m) = forced_mode {
        cfg.mode = m;
    }
    if let Some(g) = args.generations {
        cfg.generations = Some(g);
    }
    if let Some(r) = args.repetitions {
        cfg.repetitions = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs, forced_mode: Option<Mode>) -> Result<()> {
    let cfg = build_config(&args, forced_mode)?;
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| {
        PathBuf::from(format!(
            "out/{}-{}-{}-seed{}",
            cfg.problem, cfg.mode, cfg.algorithm, cfg.seed
        ))
    });
    println!(
        "running problem={} mode={} algorithm={} generations={} repetitions={} seed={}",
        cfg.problem,
        cfg.mode,
        cfg.algorithm,
        cfg.generations(),
        cfg.repetitions,
        cfg.seed
    );
    let experiment = run_experiment(&cfg)?;
    print_run_summary(&experiment);
    let written = export_results(&experiment, &out_dir)?;
    println!("wrote {} files to {}", written.len(), out_dir.display());
    Ok(())
}

fn print_run_summary(experiment: &ExperimentRun) {
    for rep in &experiment.runs {
        let last = rep.records.last().expect("runs have records");
        match experiment.config.algorithm {
            Algorithm::Ga => println!(
                "rep {}: sim_calls={} surrogate_calls={} retrains={} best={:.6e} elite_mean={:.6e}",
                rep.repetition,
                last.sim_calls,
                last.surrogate_calls,
                last.retrains,
                last.best_fitness.unwrap_or(f64::NAN),
                last.elite_mean_fitness.unwrap_or(f64::NAN),
            ),
            Algorithm::Nsga2 => println!(
                "rep {}: sim_calls={} surrogate_calls={} retrains={} hv={:.6} igd_plus={:.6}",
                rep.repetition,
                last.sim_calls,
                last.surrogate_calls,
                last.retrains,
                last.hv.unwrap_or(f64::NAN),
                last.igd_plus.unwrap_or(f64::NAN),
            ),
        }
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        let header: Vec<String> =
            lines.next().context("empty csv")?.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for line in lines {
            let row = line
                .split(',')
                .map(|cell| cell.parse::<f64>().map_err(Into::into))
                .collect::<Result<Vec<f64>>>()
                .with_context(|| format!("parsing row '{line}'"))?;
            if row.len() != header.len() {
                bail!("ragged csv row in {}", path.display());
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column '{name}' not found"))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    fn mean(&self, name: &str) -> Result<f64> {
        let col = self.column(name)?;
        if col.is_empty() {
            bail!("column '{name}' has no rows");
        }
        Ok(col.iter().sum::<f64>() / col.len() as f64)
    }
}

fn report(args: &ReportArgs) -> Result<()> {
    let direct = Table::read(&args.direct.join("summary.csv"))?;
    let surrogate = Table::read(&args.surrogate.join("summary.csv"))?;
    let direct_total = direct.mean("total_sim_calls")?;
    let direct_warm = direct.mean("warm_sim_calls")?;
    let surrogate_total = surrogate.mean("total_sim_calls")?;
    if surrogate_total <= 0.0 {
        bail!("surrogate run reports no simulator calls");
    }

    println!("mean simulator calls: direct={direct_total:.1} surrogate={surrogate_total:.1}");
    println!("sim-call ratio (warm included):     {:.3}", direct_total / surrogate_total);
    println!(
        "sim-call ratio (direct excl. warm): {:.3}",
        (direct_total - direct_warm) / surrogate_total
    );

    let direct_wall = Table::read(&args.direct.join("timings.csv"))?.mean("wall_time_s")?;
    let surrogate_wall = Table::read(&args.surrogate.join("timings.csv"))?.mean("wall_time_s")?;
    if surrogate_wall > 0.0 {
        println!("wall-time ratio:                    {:.3}", direct_wall / surrogate_wall);
    }

    for k in 0.. {
        let r2 = format!("holdout_r2_{k}");
        if !surrogate.header.iter().any(|h| *h == r2) {
            break;
        }
        println!(
            "objective {k}: holdout R2 = {:.4}, 1 - MAE/sigma = {:.4}",
            surrogate.mean(&r2)?,
            surrogate.mean(&format!("holdout_nmae_{k}"))?
        );
    }
    Ok(())
}

fn front(args: &FrontArgs) -> Result<()> {
    let path = args.run.join("front.csv");
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty front.csv")?;
    println!("{header}");
    for line in lines {
        if let Some(rep) = args.rep {
            let first = line.split(',').next().unwrap_or_default();
            if first.parse::<u32>().ok() != Some(rep) {
                continue;
            }
        }
        println!("{line}");
    }
    Ok(())
}
