//! `dpce` — build sparse polynomial chaos surrogates from the command line.

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use std::path::PathBuf;
use std::process::ExitCode;

use dpce_core::harness::{self, write_cdf_outputs, write_outputs, ConfigFile, Experiment};
use dpce_core::io::{read_pool_csv, write_design_csv, write_pool_csv, SolutionFile};
use dpce_core::solvers::{
    cross_validate_k, dsp, dsp_cv, subspace_pursuit, CandidateSet, CvParams, PoolOracle,
};
use dpce_core::{
    design, sample_pool, BasisSpec, Family, PhysicalModel, RngStream, SamplingStrategy,
};

#[derive(Parser)]
#[command(
    name = "dpce",
    version,
    about = "Sparse polynomial chaos surrogates via subspace pursuit and D-optimal designs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Legendre,
    Hermite,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Legendre => Family::Legendre,
            FamilyArg::Hermite => Family::Hermite,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Standard,
    #[value(name = "coherence-optimal", alias = "coh-opt")]
    CoherenceOptimal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DesignMethod {
    Rrqr,
    Subset,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolveMethod {
    Sp,
    Dsp,
    #[value(name = "dsp-cv")]
    DspCv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Duffing,
    Wingweight,
    Ishigami,
}

impl From<ModelArg> for PhysicalModel {
    fn from(m: ModelArg) -> PhysicalModel {
        match m {
            ModelArg::Duffing => PhysicalModel::Duffing,
            ModelArg::Wingweight => PhysicalModel::WingWeight,
            ModelArg::Ishigami => PhysicalModel::Ishigami,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a candidate input pool and write it as CSV
    Sample {
        #[arg(long)]
        family: FamilyArg,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        p: usize,
        #[arg(long = "M")]
        m: usize,
        #[arg(long)]
        strategy: StrategyArg,
        #[arg(long)]
        seed: u64,
        /// Stream id; distinct streams give independent pools per seed
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select a D-optimal design from a pool
    Design {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        method: DesignMethod,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit sparse PC coefficients for a benchmark model over a pool
    Solve {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        model: ModelArg,
        #[arg(long)]
        method: SolveMethod,
        /// Sparsity bound, or `auto` for cross-validation
        #[arg(long = "K", default_value = "auto")]
        k: String,
        /// Evaluation budget (design size)
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a benchmark model
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Run a configured strategy-comparison experiment
    Bench {
        /// TOML config; keys match the experiment configuration fields
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compare design-quality CDFs of MC versus coherence-optimal pools
    CdfStudy {
        #[arg(long)]
        family: FamilyArg,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        p: usize,
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "M")]
        m: usize,
        #[arg(long)]
        n_designs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Print the QoI at one point, or one value per line for a CSV of points
    Eval {
        #[arg(long)]
        model: ModelArg,
        /// Comma-separated coordinates, e.g. `0.5,0,0`
        #[arg(long, conflicts_with = "points")]
        point: Option<String>,
        /// CSV file with one point per line
        #[arg(long)]
        points: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> dpce_core::Result<()> {
    match command {
        Command::Sample {
            family,
            d,
            p,
            m,
            strategy,
            seed,
            stream,
            out,
        } => {
            let spec = BasisSpec::new(family.into(), d, p)?;
            let strat = match strategy {
                StrategyArg::Standard => SamplingStrategy::StandardMc,
                StrategyArg::CoherenceOptimal => SamplingStrategy::CoherenceOptimal,
            };
            let pool = sample_pool(&spec, strat, m, RngStream::new(seed, stream))?;
            write_pool_csv(&out, &spec, &pool)?;
            eprintln!("wrote {} points to {}", m, out.display());
            Ok(())
        }
        Command::Design {
            pool,
            n,
            method,
            out,
        } => {
            let (spec, pool) = read_pool_csv(&pool)?;
            let phi_c = spec.assemble_matrix(&pool.points, &pool.weights)?;
            let selected = match method {
                DesignMethod::Rrqr => design::rrqr_select(&phi_c, n)?,
                DesignMethod::Subset => design::subset_select(&phi_c, n)?,
            };
            write_design_csv(&out, &selected)?;
            eprintln!("wrote {n}-point design to {}", out.display());
            Ok(())
        }
        Command::Solve {
            pool,
            model,
            method,
            k,
            n,
            seed,
            out,
        } => {
            let (spec, pool) = read_pool_csv(&pool)?;
            let model: PhysicalModel = model.into();
            if spec.dim() != model.dim() {
                return Err(dpce_core::Error::InvalidArgument(format!(
                    "pool dimension {} does not match model dimension {}",
                    spec.dim(),
                    model.dim()
                )));
            }
            let cand = CandidateSet::from_pool(&spec, &pool)?;
            let mut oracle = PoolOracle::from_fn(cand.len(), move |pt| model.eval(pt));
            let fixed_k: Option<usize> = if k.eq_ignore_ascii_case("auto") {
                None
            } else {
                Some(k.parse().map_err(|e| {
                    dpce_core::Error::Parse(format!("--K expects an integer or `auto`: {e}"))
                })?)
            };
            let mut rng = RngStream::new(seed, 0).rng();

            let (method_name, sol) = match method {
                SolveMethod::Sp => {
                    let mut rows = rand::seq::index::sample(&mut rng, cand.len(), n).into_vec();
                    rows.sort_unstable();
                    let phi_n = dpce_core::design::Design::new(rows.clone(), cand.len())?
                        .select_rows(&cand.phi);
                    let v = DVector::from_vec(
                        rows.iter()
                            .map(|&i| Ok(cand.weights[i] * oracle.value(&cand, i)?))
                            .collect::<dpce_core::Result<Vec<f64>>>()?,
                    );
                    let k_used = match fixed_k {
                        Some(k) => k,
                        None => cross_validate_k(&phi_n, &v, CvParams::default(), &mut rng)?.k,
                    };
                    let mut sol = subspace_pursuit(k_used, &phi_n, &v)?;
                    sol.n_model_evals = oracle.n_evals();
                    ("sp", sol)
                }
                SolveMethod::Dsp => {
                    let k = fixed_k.ok_or_else(|| {
                        dpce_core::Error::InvalidArgument(
                            "--method dsp needs an explicit --K; use dsp-cv for auto".into(),
                        )
                    })?;
                    ("dsp", dsp(k, &cand, n, &mut oracle)?)
                }
                SolveMethod::DspCv => {
                    if fixed_k.is_some() {
                        return Err(dpce_core::Error::InvalidArgument(
                            "--method dsp-cv cross-validates K; drop --K".into(),
                        ));
                    }
                    (
                        "dsp-cv",
                        dsp_cv(&cand, n, &mut oracle, CvParams::default(), &mut rng)?,
                    )
                }
            };
            let model_name = format!("{:?}", model).to_lowercase();
            SolutionFile::from_solution(method_name, &model_name, &sol).write(&out)?;
            eprintln!(
                "wrote solution ({} support columns, {} model evaluations) to {}",
                sol.support.len(),
                sol.n_model_evals,
                out.display()
            );
            Ok(())
        }
        Command::Model {
            command: ModelCommand::Eval {
                model,
                point,
                points,
            },
        } => {
            let model: PhysicalModel = model.into();
            match (point, points) {
                (Some(text), None) => {
                    let xi = parse_point(&text)?;
                    println!("{}", harness::fmt_g17(model.eval(&xi)?));
                    Ok(())
                }
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path)?;
                    for line in text.lines() {
                        if line.trim().is_empty() || line.starts_with('#') {
                            continue;
                        }
                        let xi = parse_point(line)?;
                        println!("{}", harness::fmt_g17(model.eval(&xi)?));
                    }
                    Ok(())
                }
                _ => Err(dpce_core::Error::InvalidArgument(
                    "pass exactly one of --point or --points".into(),
                )),
            }
        }
        Command::Bench { config, out_dir } => {
            let text = std::fs::read_to_string(&config)?;
            let config = ConfigFile::parse(&text)?.resolve()?;
            let experiment = Experiment::new(config)?;
            let output = experiment.run()?;
            write_outputs(&out_dir, &experiment, &output)?;
            for cell in &output.report.cells {
                println!(
                    "{:<14} N={:<4} mean={:.3e} std={} evals<=N",
                    cell.strategy.name(),
                    cell.n,
                    cell.mean_rel_err,
                    cell.std_rel_err
                        .map(|s| format!("{s:.3e}"))
                        .unwrap_or_else(|| "n/a".into()),
                );
            }
            eprintln!(
                "wrote report.csv, records.jsonl, manifest.json to {}",
                out_dir.display()
            );
            Ok(())
        }
        Command::CdfStudy {
            family,
            d,
            p,
            n,
            m,
            n_designs,
            seed,
            out_dir,
        } => {
            let study = harness::cdf_study(family.into(), d, p, n, m, n_designs, seed)?;
            write_cdf_outputs(&out_dir, &study)?;
            println!(
                "coherence-optimal CDF at or below MC CDF on {:.1}% of the grid; strict dominance: {}",
                study.dominance_pct, study.coh_dominates_mc
            );
            eprintln!(
                "wrote cdf_mc.csv and cdf_coh-opt.csv to {}",
                out_dir.display()
            );
            Ok(())
        }
    }
}

fn parse_point(text: &str) -> dpce_core::Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| dpce_core::Error::Parse(format!("coordinate `{v}`: {e}")))
        })
        .collect()
}
