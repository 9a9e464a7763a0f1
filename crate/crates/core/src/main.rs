//! Command line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 unsatisfiable problem,
//! 3 statistical rejection in validate mode.

use clap::{Parser, Subcommand, ValueEnum};
use liftgen::harness::{self, ValidateReport};
use liftgen::logic::{Problem, Vocabulary};
use liftgen::sampler::Sampler;
use liftgen::textio;
use liftgen::wfomc::{self, brute, BruteOptions};
use liftgen::Error;
use rayon::prelude::*;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "liftgen", version, about = "Exact weighted model counting and sampling for two-variable logic")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact weighted model count of a problem file.
    Count {
        file: PathBuf,
        /// Extra cardinality constraint, e.g. "|E| = 4".
        #[arg(long)]
        cc: Option<String>,
    },
    /// Draw models proportionally to their weight.
    Sample {
        file: PathBuf,
        /// Number of models to draw.
        #[arg(long, default_value_t = 1)]
        num: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Lines)]
        format: Format,
    },
    /// Materialize a named preset problem.
    Preset {
        name: String,
        /// Domain size.
        #[arg(short)]
        n: u32,
        /// Degree parameter for k-regular.
        #[arg(short, default_value_t = 2)]
        k: u32,
        /// Print the problem file instead of its count.
        #[arg(long)]
        emit_problem: bool,
    },
    /// Sample and KS-test against the exactly computed distribution.
    Validate {
        /// Problem file path, or a preset name (with -n and -k).
        target: String,
        #[arg(long, default_value_t = 10_000)]
        num: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Mode::Auto)]
        mode: Mode,
        /// Predicates for count mode; defaults to the preset's observed set.
        #[arg(long)]
        observed: Vec<String>,
        /// Domain size when the target is a preset name.
        #[arg(short, default_value_t = 5)]
        n: u32,
        #[arg(short, default_value_t = 2)]
        k: u32,
    },
    /// Brute-force reference: count and exact model distribution.
    Oracle { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Lines,
    Json,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    /// Count mode when the preset defines observed predicates, else model.
    Auto,
    Model,
    Count,
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("LIFTGEN_THREADS") {
        match v.parse::<usize>() {
            Ok(t) if t >= 1 => {
                rayon::ThreadPoolBuilder::new().num_threads(t).build_global().ok();
            }
            _ => {
                eprintln!("error: LIFTGEN_THREADS must be a positive integer");
                return ExitCode::from(1);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage errors exit 1; --help and --version are successes.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Error::Unsatisfiable) => {
            eprintln!("error: {}", Error::Unsatisfiable);
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn read_problem(path: &PathBuf) -> Result<Problem, Error> {
    Ok(read_input(path)?.0)
}

fn read_input(path: &PathBuf) -> Result<(Problem, Option<Arc<Vocabulary>>), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    harness::load_input(&text)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.cmd {
        Cmd::Count { file, cc } => {
            let mut problem = read_problem(&file)?;
            if let Some(expr) = cc {
                let extra = textio::parse_constraint(&expr, &problem.vocab)?;
                problem.cardinality = Some(match problem.cardinality.take() {
                    None => extra,
                    Some(c) => c.and(extra),
                });
            }
            let count = wfomc::count(&problem)?;
            println!("{}", textio::render_rational(&count));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sample { file, num, seed, format } => {
            let (problem, mln_vocab) = read_input(&file)?;
            let sampler = Sampler::new(&problem)?;
            let mut rendered: Vec<(u64, String)> = (0..num)
                .into_par_iter()
                .map(|i| {
                    let model = sampler.sample(seed, i)?;
                    // MLN samples are reported over the MLN's own predicates;
                    // the reduction's auxiliary atoms are determined by them.
                    let model = match &mln_vocab {
                        Some(vocab) => model.project(vocab),
                        None => model,
                    };
                    Ok((i, model.render()))
                })
                .collect::<Result<_, _>>()?;
            rendered.sort_unstable_by_key(|(i, _)| *i);
            match format {
                Format::Lines => {
                    println!("{}", textio::run_header(seed, &problem));
                    for (_, line) in rendered {
                        println!("{line}");
                    }
                }
                Format::Json => {
                    let doc = serde_json::json!({
                        "seed": seed,
                        "problem": textio::problem_hash(&problem),
                        "models": rendered.iter().map(|(_, l)| l).collect::<Vec<_>>(),
                    });
                    println!("{doc}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Preset { name, n, k, emit_problem } => {
            if emit_problem {
                // The source text, not the canonical render: MLN presets
                // round-trip through their rule syntax.
                print!("{}", harness::preset_text(&name, n, k)?);
            } else {
                let problem = harness::preset(&name, n, k)?;
                let count = wfomc::count(&problem)?;
                println!("preset {name} n={n} count {}", textio::render_rational(&count));
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Validate { target, num, seed, alpha, mode, observed, n, k } => {
            let is_preset = harness::PRESET_NAMES.contains(&target.as_str());
            let problem = if is_preset {
                harness::preset(&target, n, k)?
            } else {
                read_problem(&PathBuf::from(&target))?
            };
            let preset_observed: Vec<String> = if is_preset {
                harness::preset_observed(&target).iter().map(|s| s.to_string()).collect()
            } else {
                Vec::new()
            };
            let observed = if observed.is_empty() { preset_observed } else { observed };
            let count_mode = match mode {
                Mode::Count => true,
                Mode::Model => false,
                Mode::Auto => !observed.is_empty(),
            };
            let report = if count_mode {
                if observed.is_empty() {
                    return Err(Error::InvalidInput(
                        "count mode needs --observed predicates".into(),
                    ));
                }
                let names: Vec<&str> = observed.iter().map(|s| s.as_str()).collect();
                harness::validate_counts(&problem, &names, num, seed, alpha)?
            } else {
                harness::validate_models(&problem, num, seed, alpha)?
            };
            print_report(&target, count_mode, &report);
            if report.ks.rejected {
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Oracle { file } => {
            let problem = read_problem(&file)?;
            let count = brute::count(&problem, &BruteOptions::default())?;
            println!("count {}", textio::render_rational(&count));
            for (model, prob) in harness::exact_distribution(&problem)? {
                println!("{} {}", textio::render_rational(&prob), model.render());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_report(target: &str, count_mode: bool, report: &ValidateReport) {
    let mode = if count_mode { "count" } else { "model" };
    let verdict = if report.ks.rejected { "REJECTED" } else { "ok" };
    println!(
        "validate {target} mode={mode} samples={} outcomes={} deviation={:.6} bound={:.6} alpha={} {verdict}",
        report.n_samples,
        report.outcomes,
        report.ks.max_deviation,
        report.ks.bound,
        report.ks.alpha,
    );
}
