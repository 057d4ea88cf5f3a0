use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use epra::bench::{self, ExperimentManifest};
use epra::oracle::verify_relint_pair;
use epra::{EpraConfig, EpraResult, Error, Family, GenSpec, Instance, RescaleMode, Scheme};

#[derive(Parser)]
#[command(
    name = "epra-kit",
    version,
    about = "Projection-and-rescaling feasibility solver"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Naive,
    Controlled,
    Partitioned,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Perceptron,
    Vn,
    Vna,
    Smooth,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    All,
    Single,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an instance file.
    Gen {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        delta_cap: Option<f64>,
        #[arg(long)]
        frac_small: Option<f64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the solver on an instance file.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "smooth")]
        scheme: SchemeArg,
        #[arg(long = "U")]
        u_cap: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_rounds: Option<usize>,
        #[arg(long, value_enum, default_value = "all")]
        rescale_mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a result against its instance; prints a JSON report.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        result: PathBuf,
    },
    /// Run a batch experiment described by a manifest.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Histogram of a counted field from a per-instance log.
    Hist {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        field: String,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Solver(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::DimensionMismatch { .. }
            | Error::RankDeficient { .. }
            | Error::FullRankSquare { .. }
            | Error::NonFinite(_)
            | Error::InvalidInput(_)
            | Error::Io(_)
            | Error::Format(_) => Failure::Input(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solver(msg)) => {
            eprintln!("epra-kit: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("epra-kit: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Gen {
            family,
            n,
            m,
            delta_cap,
            frac_small,
            seed,
            out,
        } => {
            let family = match family {
                FamilyArg::Naive => Family::Naive,
                FamilyArg::Controlled => Family::Controlled,
                FamilyArg::Partitioned => Family::Partitioned,
            };
            let spec = GenSpec {
                delta_cap,
                frac_small,
                ..GenSpec::new(family, n, m, seed)
            };
            spec.generate()?.write(&out)?;
            Ok(())
        }
        Cmd::Solve {
            instance,
            scheme,
            u_cap,
            epsilon,
            max_rounds,
            rescale_mode,
            out,
        } => {
            let inst = Instance::read(&instance)?;
            let d = EpraConfig::default();
            let cfg = EpraConfig {
                scheme: match scheme {
                    SchemeArg::Perceptron => Scheme::Perceptron,
                    SchemeArg::Vn => Scheme::VonNeumann,
                    SchemeArg::Vna => Scheme::VonNeumannAway,
                    SchemeArg::Smooth => Scheme::SmoothPerceptron,
                },
                u_cap: u_cap.unwrap_or(d.u_cap),
                epsilon: epsilon.unwrap_or(d.epsilon),
                max_rounds: max_rounds.unwrap_or(d.max_rounds),
                rescale_mode: match rescale_mode {
                    ModeArg::All => RescaleMode::AllDirections,
                    ModeArg::Single => RescaleMode::SingleDirection,
                },
                ..d
            };
            cfg.validate()?;
            let res = epra::solve(&inst, &cfg)?;
            std::fs::write(&out, res.to_json()?).map_err(Error::from)?;
            eprintln!(
                "status {:?}, {} rescaling rounds, {} basic-procedure iterations",
                res.status,
                res.rounds,
                res.total_bp_iters()
            );
            if res.status.is_solved() {
                Ok(())
            } else {
                Err(Failure::Solver(format!("no certificate: {:?}", res.status)))
            }
        }
        Cmd::Verify { instance, result } => {
            let inst = Instance::read(&instance)?;
            let text = std::fs::read_to_string(&result).map_err(Error::from)?;
            let res = EpraResult::from_json(&text)?;
            // threshold taken from the defaults; the result file does not carry U
            let d = EpraConfig::default();
            let rep = verify_relint_pair(&inst, &res, d.u_cap, d.membership_tol);
            println!("{}", serde_json::to_string_pretty(&rep).map_err(Error::from)?);
            if rep.passed() {
                Ok(())
            } else {
                Err(Failure::Solver("verification failed".into()))
            }
        }
        Cmd::Bench {
            manifest,
            out_dir,
            parallelism,
        } => {
            let mut man = ExperimentManifest::read(&manifest)?;
            if let Some(p) = parallelism {
                man.parallelism = p;
            }
            if let Ok(s) = std::env::var("EPRA_SEED") {
                man.base_seed = s
                    .trim()
                    .parse()
                    .map_err(|_| Failure::Input(format!("EPRA_SEED is not a u64: {s}")))?;
            }
            let rows = bench::run_experiment(&man, Some(&out_dir))?;
            bench::rows_to_csv(std::io::stdout().lock(), &rows)?;
            Ok(())
        }
        Cmd::Hist { results, field, out } => {
            let recs = bench::read_records(&results)?;
            let f = std::fs::File::create(&out).map_err(Error::from)?;
            bench::emit_histogram(f, &recs, &field)?;
            Ok(())
        }
    }
}
