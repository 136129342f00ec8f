use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use agefl::config::ExperimentConfig;
use agefl::harness;
use agefl_core::age_dp::NoiseMode;
use agefl_core::scheduler::SchemeId;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

/// Age-aware scheduling for differentially-private federated learning.
///
/// Set AGEFL_THREADS to cap the worker pool. Output does not depend on it.
#[derive(Parser)]
#[command(name = "agefl", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's Monte-Carlo trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Adaptive,
    Constant,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every (scheme, eps_bar) pair and write one CSV row per pair.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Also run the fixed-scale constant-noise sweep over the config's eta_grid.
        #[arg(long)]
        fixed_scale_out: Option<PathBuf>,
    },
    /// Loss difference versus one client's collection time, others freshest.
    Curve {
        #[command(flatten)]
        common: Common,
        /// Client index, 1-based.
        #[arg(long)]
        client: usize,
        /// Privacy target; defaults to the config's eps_bar.
        #[arg(long)]
        eps_bar: Option<f64>,
        /// Output CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the bound for a given schedule.
    Bound {
        #[command(flatten)]
        common: Common,
        /// Collection times, one per client, e.g. 12,7,9.
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        eps_bar: Option<f64>,
        #[arg(long, value_enum, default_value = "adaptive")]
        noise: Noise,
    },
    /// Run one scheme (name or number 1-6) and print its choice.
    Schedule {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: String,
        #[arg(long)]
        eps_bar: Option<f64>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = agefl::load_config(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(t) = common.trials {
        if t == 0 {
            bail!("--trials must be at least 1");
        }
        cfg.trials = t;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("AGEFL_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().with_context(|| format!("AGEFL_THREADS={v} is not a thread count"))?;
    if n == 0 {
        bail!("AGEFL_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    Ok(())
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.cmd {
        Cmd::Sweep { common, out, fixed_scale_out } => {
            let cfg = load(&common)?;
            let rows = harness::run_sweep(&cfg)?;
            harness::write_sweep_csv(&rows, create(&out)?)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            if failed > 0 {
                eprintln!("{failed} of {} points failed; see the error rows in {}", rows.len(), out.display());
            }
            if let Some(path) = fixed_scale_out {
                if cfg.eta_grid.is_empty() {
                    bail!("--fixed-scale-out needs a non-empty eta_grid in the config");
                }
                let pts = harness::fixed_scale_sweep(&cfg)?;
                harness::write_fixed_scale_csv(&pts, create(&path)?)?;
            }
        }
        Cmd::Curve { common, client, eps_bar, out } => {
            let cfg = load(&common)?;
            let pts = harness::per_client_loss_curve(&cfg, client, eps_bar.unwrap_or(cfg.eps_bar))?;
            match out {
                Some(p) => harness::write_curve_csv(&pts, create(&p)?)?,
                None => harness::write_curve_csv(&pts, io::stdout().lock())?,
            }
        }
        Cmd::Bound { common, schedule, eps_bar, noise } => {
            let cfg = load(&common)?;
            let s = harness::parse_schedule(&schedule, cfg.t_agg)?;
            let mode = match noise {
                Noise::Adaptive => NoiseMode::Adaptive,
                Noise::Constant => NoiseMode::Constant,
            };
            let report = harness::bound_report(&cfg, &s, eps_bar.unwrap_or(cfg.eps_bar), mode)?;
            let mut out = io::stdout().lock();
            report.write(&cfg.client_names, &mut out)?;
            out.flush()?;
        }
        Cmd::Schedule { common, scheme, eps_bar } => {
            let cfg = load(&common)?;
            let id: SchemeId = scheme.parse()?;
            let run = harness::schedule(&cfg, id, eps_bar.unwrap_or(cfg.eps_bar))?;
            let mut out = io::stdout().lock();
            harness::write_scheme_run(&run, &cfg, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}
