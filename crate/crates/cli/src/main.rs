//! `msgate`: gate-error scenarios, sideband fits and reference reproductions.

mod commands;
mod config;
mod io;
mod reproduce;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msgate_motion::noise::{NoiseModel, PhaseObjective};
use msgate_motion::sideband::{synthetic_dataset, time_grid, RabiModel, SidebandState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::RunConfig;

/// Error category; each maps to an exit status.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<msgate_motion::Error> for Failure {
    fn from(e: msgate_motion::Error) -> Self {
        use msgate_motion::Error as E;
        match e {
            E::InvalidParameter { .. } => Failure::Usage(e.to_string()),
            E::InvalidDataset { .. } => Failure::Data(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "msgate", version, about = "Mølmer–Sørensen gate error from displaced thermal motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV; defaults to `output.path` from the config, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Failure> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    fn out_path(&self, cfg: &RunConfig) -> Option<PathBuf> {
        self.out.clone().or_else(|| cfg.output.path.as_ref().map(PathBuf::from))
    }
}

#[derive(Debug, Args)]
struct GateArgs {
    #[arg(long, default_value_t = 2)]
    loops: u32,
    #[arg(long, default_value_t = 60.0)]
    tau_us: f64,
    #[arg(long, default_value_t = 3.0)]
    nu0_mhz: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Objective {
    Infidelity,
    Diamond,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Drive parameters for K closed loops in time τ.
    Calibrate {
        #[arg(long)]
        loops: u32,
        #[arg(long)]
        tau_us: f64,
        #[arg(long, default_value_t = 3.0)]
        nu0_mhz: f64,
    },
    /// Gate error at fixed trap-frequency offsets.
    Sweep(ConfigArgs),
    /// Noise-averaged gate error against the displacement phase.
    PhaseScan(ConfigArgs),
    /// Noise-averaged gate error over a (|α|², n̄) grid.
    Surface(ConfigArgs),
    /// Noise-averaged gate error at one motional state, with a quadrature check.
    Average(ConfigArgs),
    /// Displacement phase minimizing the averaged gate error.
    OptimizePhase {
        #[command(flatten)]
        io: ConfigArgs,
        #[arg(long, value_enum, default_value = "infidelity")]
        objective: Objective,
    },
    /// Joint maximum-likelihood fit of blue-sideband Rabi datasets.
    Fit {
        #[arg(required = true)]
        data: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Gate error predicted from a fit.
    Predict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        phi: f64,
        #[arg(long, default_value_t = 600.0)]
        sigma_hz: f64,
        #[arg(long, default_value_t = 31)]
        order: usize,
        #[command(flatten)]
        gate: GateArgs,
        /// Output JSON; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Binomially sampled Rabi-flopping CSV.
    Synth {
        #[arg(long)]
        alpha_sq: f64,
        #[arg(long)]
        nbar: f64,
        #[arg(long, default_value_t = 13.0)]
        omega_khz: f64,
        #[arg(long, default_value_t = 1.34)]
        decay_ms: f64,
        #[arg(long, default_value_t = 500)]
        shots: u64,
        #[arg(long, default_value_t = 60)]
        points: usize,
        #[arg(long, default_value_t = 5.0)]
        first_us: f64,
        #[arg(long, default_value_t = 300.0)]
        last_us: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate a reference figure or checkpoint set with a pass/fail summary.
    Reproduce {
        #[arg(value_enum)]
        id: reproduce::Target,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Calibrate { loops, tau_us, nu0_mhz } => commands::print_json(&commands::calibrate(loops, tau_us, nu0_mhz)?),
        Command::Sweep(a) => {
            let cfg = a.load()?;
            commands::emit(&commands::sweep_table(&cfg)?, a.out_path(&cfg).as_deref())
        }
        Command::PhaseScan(a) => {
            let cfg = a.load()?;
            commands::emit(&commands::phase_table(&cfg)?, a.out_path(&cfg).as_deref())
        }
        Command::Surface(a) => {
            let cfg = a.load()?;
            commands::emit(&commands::surface_table(&cfg)?, a.out_path(&cfg).as_deref())
        }
        Command::Average(a) => {
            let cfg = a.load()?;
            commands::emit(&commands::average_table(&cfg)?, a.out_path(&cfg).as_deref())
        }
        Command::OptimizePhase { io: a, objective } => {
            let cfg = a.load()?;
            let objective = match objective {
                Objective::Infidelity => PhaseObjective::Infidelity,
                Objective::Diamond => PhaseObjective::Diamond,
            };
            commands::print_json(&commands::optimize(&cfg, objective)?)
        }
        Command::Fit { data, out_dir } => {
            let out = commands::fit(&data, &out_dir)?;
            commands::print_json(&out)
        }
        Command::Predict { fit, phi, sigma_hz, order, gate, out } => {
            if !phi.is_finite() {
                return Err(Failure::Usage(format!("--phi must be finite, got {phi}")));
            }
            let params = config::gate_params(gate.loops, gate.tau_us, gate.nu0_mhz)?;
            let model = NoiseModel::from_hz(sigma_hz, order)?;
            let predictions = commands::predict(&fit, &params, &model, phi)?;
            match out {
                Some(p) => io::write_json(&p, &predictions),
                None => commands::print_json(&predictions),
            }
        }
        Command::Synth { alpha_sq, nbar, omega_khz, decay_ms, shots, points, first_us, last_us, seed, out } => {
            let model = RabiModel::new(std::f64::consts::TAU * omega_khz * 1e3, 1e3 / decay_ms)?;
            let state = SidebandState::new(alpha_sq, nbar)?;
            let times = time_grid(first_us * 1e-6, last_us * 1e-6, points);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = synthetic_dataset("synthetic", &model, &state, &times, shots, &mut rng)?;
            match out {
                Some(p) => io::write_rabi(&data, io::create(&p)?),
                None => io::write_rabi(&data, std::io::stdout().lock()),
            }
        }
        Command::Reproduce { id, out_dir } => {
            let dir = out_dir.unwrap_or_else(|| Path::new("reproduce").join(id.name()));
            commands::print_json(&reproduce::run(id, &dir)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
