//! Command-line front end: run experiments, summarize results, inspect the
//! problem catalog, and export generated datasets.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use neuroevo::data::{generate, ProblemId};
use neuroevo::harness::{
    build_report, collect_final_errors, load_config_file, persist_outputs, problem_defaults,
    render_report, run_experiment, ConfigOverrides, Method, DEFAULT_SEED,
};

#[derive(Parser)]
#[command(
    name = "neuroevo",
    version,
    about = "Train fixed-topology networks with DE and CMA-ES, with optional symmetry breaking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: a problem, a method, and several seeded repetitions.
    Run {
        /// Problem name; see list-problems.
        #[arg(long)]
        problem: Option<ProblemId>,
        /// Method name: de, de-inv-sb, de-sb, de-sb-bf, cma-es, cma-es-inv-sb,
        /// cma-es-sb, or cma-es-sb-bf.
        #[arg(long)]
        method: Option<Method>,
        /// Network layer sizes, e.g. 1-5-1.
        #[arg(long)]
        topology: Option<String>,
        /// Population size.
        #[arg(long)]
        np: Option<usize>,
        /// Evaluation budget per run.
        #[arg(long)]
        evals: Option<u64>,
        /// Number of repetitions.
        #[arg(long)]
        reps: Option<usize>,
        /// Base seed; repetition i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset size.
        #[arg(long)]
        samples: Option<usize>,
        /// Standard deviation of target noise for regression problems.
        #[arg(long)]
        noise_sd: Option<f64>,
        /// Output directory for traces; defaults to the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Key = value settings file; command-line flags win.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated digits dataset (16 features + label per line).
        #[arg(long)]
        digits_file: Option<PathBuf>,
    },
    /// Read persisted traces and print statistics per problem.
    Report {
        /// Directory holding trace_*.csv files.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Print the problem catalog with per-problem defaults.
    ListProblems,
    /// Generate a dataset and write it as comma-separated text to stdout or a file.
    ExportData {
        #[arg(long)]
        problem: ProblemId,
        /// Dataset size; defaults to the catalog value.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Standard deviation of target noise for regression problems.
        #[arg(long, default_value_t = neuroevo::harness::DEFAULT_NOISE_SD)]
        noise_sd: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> neuroevo::Result<()> {
    match cli.command {
        Command::Run {
            problem,
            method,
            topology,
            np,
            evals,
            reps,
            seed,
            samples,
            noise_sd,
            out,
            config,
            digits_file,
        } => {
            let file_overrides = match &config {
                Some(path) => load_config_file(path)?,
                None => ConfigOverrides::default(),
            };
            let cli_overrides = ConfigOverrides {
                problem,
                method,
                topology,
                np,
                max_evaluations: evals,
                repetitions: reps,
                seed,
                sample_count: samples,
                noise_sd,
                out,
                digits_file,
            };
            let merged = file_overrides.merge(cli_overrides);
            let out_dir = merged.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let config = merged.into_config()?;
            eprintln!(
                "running {} / {} ({} reps, np {}, {} evals, seed {})",
                config.problem.name(),
                config.method.name(),
                config.repetitions,
                config.np,
                config.max_evaluations,
                config.seed
            );
            let outputs = run_experiment(&config)?;
            let paths = persist_outputs(&config, &outputs, &out_dir)?;
            for (o, p) in outputs.iter().zip(&paths) {
                println!(
                    "run {:>3}: final error {:e} ({} rows, {:.2}s) -> {}",
                    o.run_index,
                    o.final_error,
                    o.trace.rows.len(),
                    o.wall_secs,
                    p.display()
                );
            }
            Ok(())
        }
        Command::Report { input } => {
            let errors = collect_final_errors(&input)?;
            if errors.is_empty() {
                return Err(neuroevo::Error::Config(format!(
                    "no trace files found in {}",
                    input.display()
                )));
            }
            for (problem, samples) in &errors {
                let report = build_report(problem, samples)?;
                print!("{}", render_report(&report));
            }
            Ok(())
        }
        Command::ListProblems => {
            println!(
                "{:<16} {:<16} {:>8} {:>7} {:>7} {:>9}",
                "problem", "topology", "samples", "np-de", "np-cma", "budget"
            );
            for &p in ProblemId::all() {
                let d = problem_defaults(p);
                println!(
                    "{:<16} {:<16} {:>8} {:>7} {:>7} {:>9}",
                    p.name(),
                    d.topology,
                    d.sample_count,
                    d.np_de,
                    d.np_cma,
                    d.max_evaluations
                );
            }
            Ok(())
        }
        Command::ExportData { problem, samples, seed, noise_sd, out } => {
            let n = samples.unwrap_or_else(|| problem_defaults(problem).sample_count);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let data = generate(problem, n, noise_sd, &mut rng)?;
            match out {
                Some(path) => {
                    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
                    data.write_delimited(&mut file)?;
                    file.flush()?;
                    eprintln!("wrote {} samples to {}", data.len(), path.display());
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    data.write_delimited(&mut lock)?;
                }
            }
            Ok(())
        }
    }
}
