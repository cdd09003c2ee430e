use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Serialize};

use restaurant_core::certify::{self, CertifyError, CertifyOptions};
use restaurant_core::cstrategy::{self, ClassicalError};
use restaurant_core::experiment::{self, Device, ExperimentConfig, ExperimentError, NoiseModel};
use restaurant_core::game::{GameError, GameSpec};
use restaurant_core::polarimeter::{self, PolarimeterError, Rank1Povm};
use restaurant_core::qstrategy::{self, QuantumStrategy, StrategyError};
use restaurant_core::repro::{self, ReproError, ReproOptions, ReproReport};

/// Qubit versus one-bit strategies for the three-restaurant game.
#[derive(Parser)]
#[command(name = "restaurant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a perfect qubit strategy for γ and print it as JSON.
    Synth {
        #[command(flatten)]
        game: GameArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Optimize one-bit classical strategies and print ℰ_C with the best one.
    Classical {
        #[command(flatten)]
        game: GameArgs,
        /// Step of the sender grid.
        #[arg(long, default_value_t = cstrategy::DEFAULT_GRID_STEP)]
        grid: f64,
        /// Local refinement rounds around the best grid point.
        #[arg(long, default_value_t = cstrategy::DEFAULT_REFINE_ROUNDS)]
        refine: u32,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compile a strategy file into polarimeter settings.
    Compile {
        /// QuantumStrategy JSON.
        strategy: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate the photonic experiment for a game file.
    Simulate {
        /// GameSpec JSON.
        game: PathBuf,
        /// QuantumStrategy JSON; synthesized from the game when absent.
        #[arg(long)]
        strategy: Option<PathBuf>,
        #[arg(long, default_value_t = experiment::DEFAULT_SHOTS)]
        shots: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Depolarizing strength on the encoded states.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Standard deviation of wave-plate angle jitter, in degrees.
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        /// Use exact states and effects instead of the wave-plate model.
        #[arg(long)]
        ideal: bool,
        /// Bootstrap resamples for the error on ℰ_Q.
        #[arg(long, default_value_t = experiment::DEFAULT_BOOTSTRAP)]
        bootstrap: usize,
        /// Print only the counts as CSV (closed,visited,count).
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Certify nonclassicality from observed counts.
    Certify {
        /// Counts as CSV (closed,visited,count) or a JSON 3×3 array.
        counts: PathBuf,
        /// GameSpec JSON.
        game: PathBuf,
        /// Required separation in bootstrap standard errors.
        #[arg(long, default_value_t = certify::DEFAULT_Z)]
        z: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = experiment::DEFAULT_BOOTSTRAP)]
        bootstrap: usize,
        #[arg(long, default_value_t = cstrategy::DEFAULT_GRID_STEP)]
        grid: f64,
        #[arg(long, default_value_t = cstrategy::DEFAULT_REFINE_ROUNDS)]
        refine: u32,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Regenerate the per-game report, both tables and the hexagon heat map.
    Reproduce {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = experiment::DEFAULT_SHOTS)]
        shots: u64,
        #[arg(long, default_value_t = experiment::DEFAULT_BOOTSTRAP)]
        bootstrap: usize,
        #[arg(long, default_value_t = cstrategy::DEFAULT_GRID_STEP)]
        grid: f64,
        #[arg(long, default_value_t = cstrategy::DEFAULT_REFINE_ROUNDS)]
        refine: u32,
        /// γ spacing of the heat map.
        #[arg(long, default_value_t = 0.02)]
        heatmap_step: f64,
        /// Skip the heat map.
        #[arg(long)]
        no_heatmap: bool,
    },
}

#[derive(Args)]
struct GameArgs {
    /// Target visiting probabilities γ₁ γ₂ γ₃.
    #[arg(num_args = 3, required = true, allow_negative_numbers = true)]
    gamma: Vec<f64>,
    /// Weight of the closed-restaurant penalty.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    k1: f64,
    /// Weight of the visiting-distribution penalty.
    #[arg(long, default_value_t = 1.0)]
    k2: f64,
}

impl GameArgs {
    fn spec(&self) -> Result<GameSpec, Failure> {
        let g = [self.gamma[0], self.gamma[1], self.gamma[2]];
        Ok(GameSpec::new(
            g,
            self.k1,
            self.k2,
            restaurant_core::game::UNIFORM,
        )?)
    }
}

#[derive(Args)]
struct OutArgs {
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error with the process exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

const INVALID_INPUT: u8 = 2;
const NO_SOLUTION: u8 = 3;

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: INVALID_INPUT,
            message: message.into(),
        }
    }

    fn no_solution(message: impl Into<String>) -> Self {
        Self {
            code: NO_SOLUTION,
            message: message.into(),
        }
    }
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<StrategyError> for Failure {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::DegenerateGeometry(_) | StrategyError::ConvergenceFailure { .. } => {
                Failure::no_solution(e.to_string())
            }
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<ClassicalError> for Failure {
    fn from(e: ClassicalError) -> Self {
        match e {
            ClassicalError::Lp(_) | ClassicalError::NotWinnable(_) => {
                Failure::no_solution(e.to_string())
            }
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<PolarimeterError> for Failure {
    fn from(e: PolarimeterError) -> Self {
        match e {
            PolarimeterError::ReflectedWeight(_) => Failure::no_solution(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Polarimeter(p) => p.into(),
            ExperimentError::NoAdvantage { .. } => Failure::no_solution(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<CertifyError> for Failure {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::Classical(c) => c.into(),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<ReproError> for Failure {
    fn from(e: ReproError) -> Self {
        match e {
            ReproError::BadHeatStep(_) => Failure::invalid(e.to_string()),
            ReproError::Classical(c) => c.into(),
            _ => Failure::no_solution(e.to_string()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output types serialize") + "\n"
}

/// Checks that the JSON we are about to emit reads back as the same type.
fn validated_json<T: Serialize + DeserializeOwned>(value: &T) -> Result<String, Failure> {
    let text = to_json(value);
    serde_json::from_str::<T>(&text)
        .map_err(|e| Failure::no_solution(format!("output failed validation: {e}")))?;
    Ok(text)
}

fn emit(text: &str, out: &OutArgs) -> Result<(), Failure> {
    match &out.out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth { game, out } => {
            let spec = game.spec()?;
            let s = qstrategy::synthesize(spec.gamma)?;
            emit(&validated_json(&s)?, &out)
        }
        Command::Classical {
            game,
            grid,
            refine,
            out,
        } => {
            let opt = cstrategy::optimize(&game.spec()?, grid, refine)?;
            emit(&validated_json(&opt)?, &out)
        }
        Command::Compile { strategy, out } => {
            let s: QuantumStrategy = read_json(&strategy)?;
            let cfg = polarimeter::compile(&Rank1Povm::from_strategy(&s)?)?;
            emit(&validated_json(&cfg)?, &out)
        }
        Command::Simulate {
            game,
            strategy,
            shots,
            seed,
            eps,
            jitter,
            ideal,
            bootstrap,
            csv,
            out,
        } => {
            let spec: GameSpec = read_json(&game)?;
            let spec = spec.validated()?;
            let s = match strategy {
                Some(p) => read_json(&p)?,
                None => qstrategy::synthesize(spec.gamma)?,
            };
            let device = if ideal {
                Device::ideal(s)
            } else {
                Device::optical_from_strategy(&s)?
            };
            let noise = NoiseModel::new(eps, jitter)?;
            let cfg = ExperimentConfig {
                shots,
                seed,
                closure_prior: spec.prior,
                bootstrap,
            }
            .validated()?;
            let r = experiment::simulate(&spec, &device, &noise, &cfg);
            if csv {
                emit(&r.counts.to_csv(), &out)
            } else {
                emit(&validated_json(&r)?, &out)
            }
        }
        Command::Certify {
            counts,
            game,
            z,
            seed,
            bootstrap,
            grid,
            refine,
            out,
        } => {
            let counts = certify::read_counts(&read_text(&counts)?)?;
            let spec: GameSpec = read_json(&game)?;
            let opts = CertifyOptions {
                z,
                bootstrap_seed: seed,
                bootstrap,
                grid_step: grid,
                refine_rounds: refine,
            };
            let cert = certify::certify(&counts, &spec, &opts)?;
            emit(&validated_json(&cert)?, &out)
        }
        Command::Reproduce {
            out,
            seed,
            shots,
            bootstrap,
            grid,
            refine,
            heatmap_step,
            no_heatmap,
        } => {
            let opts = ReproOptions {
                grid_step: grid,
                refine_rounds: refine,
                shots,
                seed,
                bootstrap,
                heatmap_step,
            };
            if !no_heatmap {
                repro::hexagon_lattice(heatmap_step)?;
            }
            fs::create_dir_all(&out)
                .map_err(|e| Failure::invalid(format!("{}: {e}", out.display())))?;
            let report = repro::reproduce(&opts)?;
            write_file(
                &out.join("report.json"),
                &validated_json::<ReproReport>(&report)?,
            )?;
            write_file(&out.join("table_eps.csv"), &repro::eps_table_csv(&report))?;
            write_file(
                &out.join("table_params.csv"),
                &repro::params_table_csv(&report),
            )?;
            if !no_heatmap {
                let heat = repro::hexagon_heatmap(heatmap_step, grid, refine)?;
                write_file(&out.join("hexagon_heatmap.csv"), &repro::heatmap_csv(&heat))?;
            }
            let v = report.verdicts;
            eprintln!(
                "max |ε_C − published| = {:.2e} ({}), max quantum ε = {:.1e} ({}), mean F = {:.5}",
                report.summary.max_eps_c_diff,
                if v.eps_c_matches_published {
                    "ok"
                } else {
                    "MISMATCH"
                },
                report.summary.max_quantum_ideal_eps,
                if v.quantum_ideal_is_perfect {
                    "ok"
                } else {
                    "MISMATCH"
                },
                report.summary.mean_overlap_f,
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
