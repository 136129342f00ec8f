//! Experiment orchestration: sweeps, per-client curves, bound reports.
//!
//! Orchestration is sequential; parallelism lives inside the core crate.
//! Rows are produced in config order, so the CSV is byte-identical across
//! runs and thread counts.

use std::io::Write;

use agefl_core::age_dp::{build_noise_plan, NoiseMode, NoisePlan, PrivacyRequirement};
use agefl_core::bound::{evaluate_bound, BoundBreakdown};
use agefl_core::scheduler::{constant_noise_sweep, run_scheme_with, selection_table, FixedScalePoint, SchemeId, SchemeRun};
use agefl_core::sim::{baseline_stats, monte_carlo_loss_diff, McSummary};
use agefl_core::Schedule;

use crate::config::ExperimentConfig;
use crate::format::sig;

pub const SWEEP_HEADER: [&str; 8] =
    ["scheme", "eps_bar", "schedule", "mean_loss_diff", "std_err", "mean_noise_power", "bound_total", "achieved_eps_bar"];

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] agefl_core::Error),
    #[error("client index {index} out of range 1..={count}")]
    ClientIndex { index: usize, count: usize },
    #[error("schedule `{0}`: expected comma-separated collection times")]
    ScheduleSyntax(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// Numeric part of a sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowValues {
    pub schedule: Schedule,
    pub mean_loss_diff: f64,
    pub std_err: f64,
    pub mean_noise_power: f64,
    pub bound_total: f64,
    pub achieved_eps_bar: f64,
}

/// One `(scheme, ε̄)` point. A scheme that refuses (for example because
/// the schedule space exceeds the cap) yields an error row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: SchemeId,
    pub eps_bar: f64,
    pub outcome: std::result::Result<RowValues, String>,
}

impl ResultRow {
    fn from_run(eps_bar: f64, run: &SchemeRun) -> Self {
        ResultRow {
            scheme: run.scheme,
            eps_bar,
            outcome: Ok(RowValues {
                schedule: run.choice.schedule.clone(),
                mean_loss_diff: run.sim.mean,
                std_err: run.sim.std_err,
                mean_noise_power: run.sim.mean_noise_power,
                bound_total: run.bound_total,
                achieved_eps_bar: run.choice.achieved_eps_bar,
            }),
        }
    }

    fn record(&self) -> Vec<String> {
        let head = [self.scheme.as_str().to_string(), sig(self.eps_bar)];
        let tail = match &self.outcome {
            Ok(v) => vec![
                v.schedule.label(),
                sig(v.mean_loss_diff),
                sig(v.std_err),
                sig(v.mean_noise_power),
                sig(v.bound_total),
                sig(v.achieved_eps_bar),
            ],
            Err(msg) => {
                let mut t = vec![format!("error: {msg}")];
                t.extend(std::iter::repeat(String::new()).take(5));
                t
            }
        };
        head.into_iter().chain(tail).collect()
    }
}

/// Every `(scheme, ε̄)` pair of the config, ε̄-major.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let settings = cfg.settings();
    let table = selection_table(&cfg.clients, cfg.t_agg, &settings)?;
    let mut rows = Vec::with_capacity(cfg.eps_bar_grid.len() * cfg.schemes.len());
    for &eps in &cfg.eps_bar_grid {
        let req = PrivacyRequirement::new(eps)?;
        for &scheme in &cfg.schemes {
            let row = match run_scheme_with(scheme, &cfg.clients, req, &settings, &table) {
                Ok(run) => ResultRow::from_run(eps, &run),
                Err(e) => ResultRow { scheme, eps_bar: eps, outcome: Err(e.to_string()) },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Loss difference when one client's collection time varies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t_c: u32,
    pub summary: McSummary,
}

/// Sweeps `t_c` of client `client` (1-based) over `[1, t_agg]` with every
/// other client collecting at `t_agg`, under adaptive noise at `eps_bar`.
pub fn per_client_loss_curve(cfg: &ExperimentConfig, client: usize, eps_bar: f64) -> Result<Vec<CurvePoint>> {
    let m = cfg.clients.len();
    if client == 0 || client > m {
        return Err(HarnessError::ClientIndex { index: client, count: m });
    }
    let settings = cfg.settings();
    let req = PrivacyRequirement::new(eps_bar)?;
    (1..=cfg.t_agg)
        .map(|t| {
            let mut schedule = Schedule::freshest(m, cfg.t_agg);
            schedule.t_c[client - 1] = t;
            let plan = build_noise_plan(&cfg.clients, &schedule, req, NoiseMode::Adaptive, settings.delta_mode)?;
            let summary = monte_carlo_loss_diff(&cfg.clients, &schedule, &plan, settings.trials, settings.seed, settings.sim)?;
            Ok(CurvePoint { t_c: t, summary })
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_c", "mean_loss_diff", "std_err", "mean_noise_power"])?;
    for p in points {
        w.write_record([p.t_c.to_string(), sig(p.summary.mean), sig(p.summary.std_err), sig(p.summary.mean_noise_power)])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `a,b,c` into a schedule.
pub fn parse_schedule(text: &str, t_agg: u32) -> Result<Schedule> {
    let t_c = text
        .split(',')
        .map(|s| s.trim().parse::<u32>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| HarnessError::ScheduleSyntax(text.to_string()))?;
    Ok(Schedule::new(t_c, t_agg)?)
}

/// Bound terms plus the per-client privacy parameters behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub schedule: Schedule,
    pub eps_bar: f64,
    pub noise_mode: NoiseMode,
    pub plan: NoisePlan,
    pub breakdown: BoundBreakdown,
}

/// Evaluates the bound for a given schedule. Baseline expectations use the
/// config's seed and trial count, the same ones the schedule search uses.
pub fn bound_report(cfg: &ExperimentConfig, schedule: &Schedule, eps_bar: f64, noise_mode: NoiseMode) -> Result<BoundReport> {
    let settings = cfg.settings();
    let req = PrivacyRequirement::new(eps_bar)?;
    let plan = build_noise_plan(&cfg.clients, schedule, req, noise_mode, settings.delta_mode)?;
    let baseline = baseline_stats(&cfg.clients, schedule, settings.trials, settings.seed, settings.sim)?;
    let breakdown = evaluate_bound(&cfg.clients, schedule, &plan, &baseline, settings.bound)?;
    Ok(BoundReport { schedule: schedule.clone(), eps_bar, noise_mode, plan, breakdown })
}

impl BoundReport {
    pub fn write<W: Write>(&self, names: &[String], mut out: W) -> Result<()> {
        let b = &self.breakdown;
        writeln!(out, "schedule = {}", self.schedule.label())?;
        writeln!(out, "eps_bar = {}", sig(self.eps_bar))?;
        writeln!(out, "noise = {}", noise_name(self.noise_mode))?;
        writeln!(out, "gen_term = {}", sig(b.gen_term))?;
        writeln!(out, "baseline_term = {}", sig(b.baseline_term))?;
        writeln!(out, "noise_term = {}", sig(b.noise_term))?;
        writeln!(out, "total = {}", sig(b.total))?;
        writeln!(out, "client,t_c,mi,delta,eps_c,eta,f_se")?;
        for (i, (c, e)) in b.per_client.iter().zip(&self.plan.entries).enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                names.get(i).map_or("?", String::as_str),
                self.schedule.t_c[i],
                sig(c.mi),
                sig(e.delta),
                sig(e.eps_c),
                sig(e.eta),
                sig(c.f_se)
            )?;
        }
        Ok(())
    }
}

pub fn noise_name(mode: NoiseMode) -> &'static str {
    match mode {
        NoiseMode::Adaptive => "adaptive",
        NoiseMode::Constant => "constant",
    }
}

/// Runs one scheme at one target.
pub fn schedule(cfg: &ExperimentConfig, scheme: SchemeId, eps_bar: f64) -> Result<SchemeRun> {
    let settings = cfg.settings();
    let table = selection_table(&cfg.clients, cfg.t_agg, &settings)?;
    Ok(run_scheme_with(scheme, &cfg.clients, PrivacyRequirement::new(eps_bar)?, &settings, &table)?)
}

pub fn write_scheme_run<W: Write>(run: &SchemeRun, cfg: &ExperimentConfig, mut out: W) -> Result<()> {
    writeln!(out, "scheme = {}", run.scheme)?;
    writeln!(out, "schedule = {}", run.choice.schedule.label())?;
    writeln!(out, "score = {}", sig(run.choice.score))?;
    writeln!(out, "bound_total = {}", sig(run.bound_total))?;
    writeln!(out, "achieved_eps_bar = {}", sig(run.choice.achieved_eps_bar))?;
    writeln!(out, "mean_loss_diff = {}", sig(run.sim.mean))?;
    writeln!(out, "std_err = {}", sig(run.sim.std_err))?;
    writeln!(out, "mean_noise_power = {}", sig(run.sim.mean_noise_power))?;
    writeln!(out, "client,t_c,delta,eta")?;
    for (i, e) in run.choice.plan.entries.iter().enumerate() {
        writeln!(out, "{},{},{},{}", cfg.client_names[i], run.choice.schedule.t_c[i], sig(e.delta), sig(e.eta))?;
    }
    Ok(())
}

/// Fixed-scale constant-noise sweep over the config's `eta_grid`.
pub fn fixed_scale_sweep(cfg: &ExperimentConfig) -> Result<Vec<FixedScalePoint>> {
    Ok(constant_noise_sweep(&cfg.clients, cfg.t_agg, &cfg.eta_grid, &cfg.settings())?)
}

pub fn write_fixed_scale_csv<W: Write>(points: &[FixedScalePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eta", "schedule", "achieved_eps_bar", "mean_loss_diff", "std_err", "mean_noise_power", "bound_total"])?;
    for p in points {
        w.write_record([
            sig(p.eta),
            p.schedule.label(),
            sig(p.achieved_eps_bar),
            sig(p.sim.mean),
            sig(p.sim.std_err),
            sig(p.sim.mean_noise_power),
            sig(p.bound_total),
        ])?;
    }
    w.flush()?;
    Ok(())
}
