use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use bluegreen::genome::Genome;
use bluegreen::optimizer::{run_optimization_with, GAConfig};
use bluegreen::raster::{AsciiGrid, ValueFormat};
use bluegreen::scenario::{generate_synthetic_catchment, load_scenario, save_scenario, CatchmentScenario, SyntheticSpec};
use bluegreen::validation::{
    convergence_test, efficiency_report, enumerate_all, write_history_csv, write_repository_csv, zone_contribution,
    GenerationStatus, ParetoFront, ValidationError, DEFAULT_ENUMERATION_CAP,
};
use bluegreen::{Front, Scenario};

#[derive(Parser)]
#[command(name = "bluegreen", version, about = "Cost/risk optimization of permeable-surface zones")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Worker threads for evaluations (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the genetic optimizer on a scenario.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        ga: GaArgs,
        #[arg(long, required = true)]
        seed: Option<u64>,
        /// Reference pareto.csv; fills the converged flag in history.csv.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Add wall-clock figures to report.txt.
        #[arg(long)]
        timing: bool,
        #[arg(long, default_value_t = 24.0)]
        budget_hours: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every genome and extract the exact front.
    Enumerate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Largest zone count to enumerate.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: usize,
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check, per seed, when the optimizer first matches a reference front.
    Convergence {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        ga: GaArgs,
        /// One or more seeds, comma separated or repeated.
        #[arg(long = "seed", required = true, value_delimiter = ',', num_args = 1..)]
        seeds: Vec<u64>,
        /// Oracle pareto.csv; enumerated here when absent.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: usize,
        /// End each run at its first convergent generation.
        #[arg(long)]
        stop_at_convergence: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flood one genome and write its depth rasters and water balance.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Zone bits, e.g. 0101100000.
        #[arg(long)]
        genome: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split every zone into 2 or 4 children.
    Subdivide {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_parser = ["2", "4"])]
        factor: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the synthetic test catchment.
    Generate {
        #[arg(long, default_value_t = 10)]
        zones: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Storm depth in mm (default 21.9).
        #[arg(long)]
        rain_mm: Option<f64>,
        #[arg(long)]
        return_period: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario directory.
    #[arg(long)]
    scenario: PathBuf,
    /// Override a scenario.cfg setting, e.g. --set depth_threshold_m=0.2.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct GaArgs {
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long)]
    gens: Option<usize>,
    #[arg(long)]
    crossover: Option<f64>,
    #[arg(long)]
    mutation: Option<f64>,
    /// Breeding attempts per pair before re-selecting parents.
    #[arg(long)]
    retry_cap: Option<usize>,
}

impl GaArgs {
    fn config(&self, zones: usize, seed: u64, jobs: Option<usize>) -> Result<GAConfig, Failure> {
        let mut c = GAConfig::for_zones(zones, seed);
        if let Some(p) = self.pop {
            c.population_size = p;
        }
        if let Some(g) = self.gens {
            c.max_generations = g;
        }
        if let Some(x) = self.crossover {
            c.crossover_probability = x;
        }
        if let Some(m) = self.mutation {
            c.mutation_probability = m;
        }
        if let Some(r) = self.retry_cap {
            c.uniqueness_retry_cap = r;
        }
        c.jobs = jobs;
        c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(c)
    }
}

enum Failure {
    Usage(String),
    Refused(String),
    Internal(String),
}

impl Failure {
    fn internal(e: impl std::fmt::Display) -> Self {
        Failure::Internal(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Refused(m)) => {
            eprintln!("refused: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn load(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let mut scenario: Scenario = load_scenario(&args.scenario).map_err(|e| Failure::Usage(e.to_string()))?;
    for pair in &args.overrides {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{pair}`")))?;
        scenario
            .apply_override(key.trim(), value.trim())
            .map_err(|m| Failure::Usage(format!("--set {pair}: {m}")))?;
    }
    Ok(scenario)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Internal(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Failure> {
    let mut w = create(dir, name)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Internal(format!("{}: {e}", dir.join(name).display())))
}

fn write_lines(dir: &Path, name: &str, lines: &[String]) -> Result<(), Failure> {
    write_file(dir, name, |w| lines.iter().try_for_each(|l| writeln!(w, "{l}")))
}

fn zone_ids(scenario: &Scenario) -> Vec<String> {
    scenario.costs.rows().iter().map(|r| r.zone_id.clone()).collect()
}

fn read_reference(path: &Path, zones: usize) -> Result<Front, Failure> {
    let file = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let front = ParetoFront::read_csv(BufReader::new(file)).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    match front.zone_count() {
        None => Err(Failure::Usage(format!("{}: reference front is empty", path.display()))),
        Some(n) if n != zones => Err(Failure::Usage(format!(
            "{}: reference front has {n} zones, scenario has {zones}",
            path.display()
        ))),
        Some(_) => Ok(front),
    }
}

fn enumeration_failure(e: ValidationError) -> Failure {
    match e {
        ValidationError::CapExceeded { .. } => Failure::Refused(e.to_string()),
        other => Failure::internal(other),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let jobs = cli.jobs;
    if jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::Optimize { scenario, ga, seed, reference, timing, budget_hours, out } => {
            let seed = seed.expect("clap enforces --seed");
            let s = load(&scenario)?;
            let n = s.zone_count();
            let config = ga.config(n, seed, jobs)?;
            let target = reference.as_deref().map(|p| read_reference(p, n)).transpose()?.map(|f| f.objective_set());
            let evaluator = s.evaluator().map_err(Failure::internal)?;
            let mut history = Vec::new();
            let started = Instant::now();
            let result = run_optimization_with(&evaluator, &config, |record| {
                history.push(GenerationStatus::from_record(record, n, target.as_deref()));
                std::ops::ControlFlow::Continue(())
            })
            .map_err(Failure::internal)?;
            let elapsed = started.elapsed();
            let front = ParetoFront::from_optimization(&result);
            let contribution = zone_contribution(&front, &zone_ids(&s)).map_err(Failure::internal)?;
            write_file(&out, "pareto.csv", |w| front.write_csv(w))?;
            write_file(&out, "repository.csv", |w| write_repository_csv(&result.repository, w))?;
            write_file(&out, "history.csv", |w| write_history_csv(&history, w))?;
            write_file(&out, "contribution.csv", |w| contribution.write_csv(w))?;
            let mut lines = vec![
                format!("zones: {n}"),
                format!("seed: {seed}"),
                format!("population size: {}", config.population_size),
                format!("max generations: {}", config.max_generations),
                format!("crossover probability: {}", config.crossover_probability),
                format!("mutation probability: {}", config.mutation_probability),
                format!("generations run: {}", result.history.last().map_or(0, |r| r.generation)),
                format!("search space exhausted: {}", if result.exhausted { "yes" } else { "no" }),
                format!("pareto members: {}", front.len()),
            ];
            if target.is_some() {
                let first = history.iter().find(|h| h.converged == Some(true));
                lines.push(match first {
                    Some(h) => format!("first generation matching reference: {} (fraction {:.3})", h.generation, h.repository_fraction),
                    None => "first generation matching reference: not converged".into(),
                });
            }
            let budget = Duration::from_secs_f64(budget_hours.max(0.0) * 3600.0);
            lines.extend(efficiency_report(result.repository.len(), n, elapsed, budget).lines(timing));
            write_lines(&out, "report.txt", &lines)
        }
        Command::Enumerate { scenario, cap, timing, out } => {
            let s = load(&scenario)?;
            let n = s.zone_count();
            let evaluator = s.evaluator().map_err(Failure::internal)?;
            let started = Instant::now();
            let e = enumerate_all(&evaluator, cap, jobs).map_err(enumeration_failure)?;
            let elapsed = started.elapsed();
            let contribution = zone_contribution(&e.front, &zone_ids(&s)).map_err(Failure::internal)?;
            write_file(&out, "pareto.csv", |w| e.front.write_csv(w))?;
            write_file(&out, "repository.csv", |w| write_repository_csv(&e.repository, w))?;
            write_file(&out, "contribution.csv", |w| contribution.write_csv(w))?;
            let mut lines = vec![format!("zones: {n}"), format!("pareto members: {}", e.front.len())];
            lines.extend(efficiency_report(e.repository.len(), n, elapsed, Duration::MAX).lines(timing));
            write_lines(&out, "report.txt", &lines)
        }
        Command::Convergence { scenario, ga, seeds, reference, cap, stop_at_convergence, out } => {
            let s = load(&scenario)?;
            let n = s.zone_count();
            let evaluator = s.evaluator().map_err(Failure::internal)?;
            let configs = seeds.iter().map(|&seed| ga.config(n, seed, jobs)).collect::<Result<Vec<_>, _>>()?;
            let reference = match reference {
                Some(path) => read_reference(&path, n)?,
                None => {
                    if n > cap {
                        return Err(Failure::Refused(format!(
                            "no --reference given and enumerating {n} zones needs {} evaluations, above the cap of {cap} zones",
                            bluegreen::repository::space_size(n)
                        )));
                    }
                    let e = enumerate_all(&evaluator, cap, jobs).map_err(enumeration_failure)?;
                    write_file(&out, "reference_pareto.csv", |w| e.front.write_csv(w))?;
                    e.front
                }
            };
            let mut rows = vec!["seed,first_converged_generation,repo_fraction_at_convergence,evaluations_at_convergence,final_converged,evaluations".to_string()];
            let mut converged = 0;
            for config in &configs {
                let (report, _) = convergence_test(&evaluator, config, &reference, stop_at_convergence).map_err(Failure::internal)?;
                write_file(&out, &format!("history_seed{}.csv", config.rng_seed), |w| write_history_csv(&report.history, w))?;
                let (generation, fraction, evaluations) = match report.first_converged {
                    Some(g) => {
                        converged += 1;
                        (
                            g.to_string(),
                            report.fraction_at_convergence.map_or(String::new(), |f| f.to_string()),
                            report.evaluations_at_convergence.map_or(String::new(), |e| e.to_string()),
                        )
                    }
                    None => ("not converged".to_string(), String::new(), String::new()),
                };
                rows.push(format!(
                    "{},{generation},{fraction},{evaluations},{},{}",
                    report.seed,
                    if report.final_converged { 1 } else { 0 },
                    report.evaluations
                ));
            }
            write_lines(&out, "convergence.csv", &rows)?;
            write_lines(
                &out,
                "report.txt",
                &[
                    format!("zones: {n}"),
                    format!("reference members: {}", reference.len()),
                    format!("seeds converged: {converged} of {}", configs.len()),
                ],
            )
        }
        Command::Simulate { scenario, genome, out } => {
            let s = load(&scenario)?;
            let genome: Genome = genome.parse().map_err(|e| Failure::Usage(format!("--genome: {e}")))?;
            if genome.len() != s.zone_count() {
                return Err(Failure::Usage(format!(
                    "--genome has {} bits but the scenario has {} zones",
                    genome.len(),
                    s.zone_count()
                )));
            }
            let evaluator = s.evaluator().map_err(Failure::internal)?;
            let (flood, objectives) = evaluator.assess(&genome).map_err(Failure::internal)?;
            write_depths(&s, &out, "max_depth.asc", &flood.max_depth)?;
            write_depths(&s, &out, "final_depth.asc", &flood.final_depth)?;
            let exposed: Vec<&str> = (0..s.buildings.len())
                .filter(|&i| evaluator.exposure().exposed(i, &flood))
                .map(|i| s.buildings.buildings[i].id.as_str())
                .collect();
            let lines = vec![
                format!("genome: {genome}"),
                format!("cost: {}", objectives.cost),
                format!("exposed buildings: {} of {}", objectives.risk, s.buildings.len()),
                format!("exposed ids: {}", exposed.join(" ")),
                format!("rainfall volume m3: {}", flood.rainfall_volume),
                format!("infiltrated volume m3: {}", flood.infiltrated_volume),
                format!("boundary outflow volume m3: {}", flood.boundary_outflow_volume),
                format!("surface storage m3: {}", flood.storage_volume),
                format!("relative mass balance error: {:e}", flood.mass_balance_error()),
                format!("steps: {}", flood.steps),
                format!("drained below threshold: {}", if flood.drained { "yes" } else { "no" }),
            ];
            write_lines(&out, "report.txt", &lines)
        }
        Command::Subdivide { scenario, factor, out } => {
            let s = load(&scenario)?;
            let factor: usize = factor.parse().expect("clap restricts --factor");
            let finer = s.subdivide(factor).map_err(|e| Failure::Usage(e.to_string()))?;
            save_scenario(&finer, &out).map_err(Failure::internal)
        }
        Command::Generate { zones, seed, rain_mm, return_period, out } => {
            let mut spec = SyntheticSpec::<f64> { zone_count: zones, ..SyntheticSpec::default() };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            if let Some(mm) = rain_mm {
                spec.rain_total_mm = mm;
            }
            if let Some(t) = return_period {
                spec.rain_return_period_years = t;
            }
            let s = generate_synthetic_catchment(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
            save_scenario(&s, &out).map_err(Failure::internal)
        }
    }
}

fn write_depths(s: &CatchmentScenario<f64>, out: &Path, name: &str, depths: &[f64]) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::Internal(format!("{}: {e}", out.display())))?;
    AsciiGrid::new(s.grid.ncols, s.grid.nrows, s.grid.cellsize, depths.to_vec())
        .write_path(&out.join(name), ValueFormat::RoundTrip)
        .map_err(Failure::internal)
}
