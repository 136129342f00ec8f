//! Exhaustive schedule search and the six comparison schemes.
//!
//! Candidates are enumerated in lexicographic order and scored in parallel;
//! the argmin keeps the first (lexicographically smallest) schedule among
//! equal scores, so the choice does not depend on the thread count.
//!
//! All candidates of one search share a [`DrawTable`] built from the
//! selection seed. The chosen schedule is then re-simulated under an
//! evaluation seed derived from it, which keeps the reported means free of
//! the selection bias of the simulated argmin.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::age_dp::{client_delta, plan_from_deltas, DeltaMode, NoiseMode, NoisePlan, PrivacyRequirement};
use crate::bound::{evaluate_bound_with_mi, BoundOptions};
use crate::error::{domain, Error, Result};
use crate::model::{ClientSpec, Schedule};
use crate::par;
use crate::sim::{monte_carlo_loss_diff, DrawTable, McSummary, SimOptions};

/// Default cap on the number of enumerated schedules.
pub const DEFAULT_SCHEDULE_CAP: u128 = 1_000_000;

/// The six comparison schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    RandomConstant,
    RandomAdaptive,
    ProposedConstant,
    ProposedAdaptive,
    OptimalConstant,
    OptimalAdaptive,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::RandomConstant,
        SchemeId::RandomAdaptive,
        SchemeId::ProposedConstant,
        SchemeId::ProposedAdaptive,
        SchemeId::OptimalConstant,
        SchemeId::OptimalAdaptive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::RandomConstant => "random_constant",
            SchemeId::RandomAdaptive => "random_adaptive",
            SchemeId::ProposedConstant => "proposed_constant",
            SchemeId::ProposedAdaptive => "proposed_adaptive",
            SchemeId::OptimalConstant => "optimal_constant",
            SchemeId::OptimalAdaptive => "optimal_adaptive",
        }
    }

    /// 1-based scheme number.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn noise_mode(self) -> NoiseMode {
        match self {
            SchemeId::RandomConstant | SchemeId::ProposedConstant | SchemeId::OptimalConstant => NoiseMode::Constant,
            _ => NoiseMode::Adaptive,
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    /// Accepts the snake-case name or the scheme number `1`..`6`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        SchemeId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s || s.parse::<u8>().ok() == Some(id.number()))
            .ok_or_else(|| Error::Config(alloc::format!("unknown scheme `{s}`")))
    }
}

/// Search and evaluation settings shared by every scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub delta_mode: DeltaMode,
    pub bound: BoundOptions,
    pub sim: SimOptions,
    /// Monte-Carlo trials for baselines, simulated selection and evaluation.
    pub trials: usize,
    pub seed: u64,
    pub cap: u128,
}

impl Settings {
    pub fn new(seed: u64, trials: usize) -> Self {
        Settings {
            delta_mode: DeltaMode::default(),
            bound: BoundOptions::default(),
            sim: SimOptions::default(),
            trials,
            seed,
            cap: DEFAULT_SCHEDULE_CAP,
        }
    }

    /// Seed of the final evaluation run, distinct from the selection seed.
    pub fn evaluation_seed(&self) -> u64 {
        splitmix64(self.seed)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Number of schedules for `m` clients, saturating.
pub fn schedule_count(m: usize, t_agg: u32) -> u128 {
    let mut n: u128 = 1;
    for _ in 0..m {
        n = n.saturating_mul(t_agg as u128);
    }
    n
}

/// Lexicographic iterator over `[1, t_agg]^m`.
#[derive(Debug, Clone)]
pub struct ScheduleIter {
    m: usize,
    t_agg: u32,
    next: usize,
    len: usize,
}

impl Iterator for ScheduleIter {
    type Item = Schedule;

    fn next(&mut self) -> Option<Schedule> {
        if self.next >= self.len {
            return None;
        }
        let s = schedule_at(self.next, self.m, self.t_agg);
        self.next += 1;
        Some(s)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.len - self.next;
        (r, Some(r))
    }
}

impl ExactSizeIterator for ScheduleIter {}

/// Schedule number `index` in lexicographic order (client 0 most significant).
pub fn schedule_at(index: usize, m: usize, t_agg: u32) -> Schedule {
    let base = t_agg as usize;
    let mut t_c = vec![1u32; m];
    let mut rest = index;
    for slot in t_c.iter_mut().rev() {
        *slot = (rest % base) as u32 + 1;
        rest /= base;
    }
    Schedule { t_c, t_agg }
}

/// Every schedule of `m` clients, or a refusal when there are more than `cap`.
pub fn enumerate_schedules(m: usize, t_agg: u32, cap: u128) -> Result<ScheduleIter> {
    if t_agg == 0 {
        return Err(Error::InvalidSchedule(String::from("t_agg must be at least 1")));
    }
    if m == 0 {
        return Err(Error::InvalidSchedule(String::from("no clients")));
    }
    let count = schedule_count(m, t_agg);
    if count > cap || count > usize::MAX as u128 {
        return Err(Error::ScheduleBudget { count, cap });
    }
    Ok(ScheduleIter { m, t_agg, next: 0, len: count as usize })
}

/// Index of the smallest score; earlier indices win ties.
pub fn argmin_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if !(s < b) => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// A selected schedule with its noise plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleChoice {
    pub schedule: Schedule,
    pub plan: NoisePlan,
    /// Bound total or simulated mean, depending on the chooser.
    pub score: f64,
    pub achieved_eps_bar: f64,
}

/// Per-client, per-gap quantities reused across candidates.
struct GapTables {
    deltas: Vec<Vec<f64>>,
    mis: Vec<Vec<f64>>,
}

impl GapTables {
    fn new(clients: &[ClientSpec], t_agg: u32, delta_mode: DeltaMode) -> Result<Self> {
        let mut deltas = Vec::with_capacity(clients.len());
        let mut mis = Vec::with_capacity(clients.len());
        for c in clients {
            deltas.push((0..t_agg).map(|g| client_delta(c, g, delta_mode)).collect::<Result<Vec<_>>>()?);
            mis.push((0..t_agg).map(|g| c.chain.mutual_information_age(g)).collect());
        }
        Ok(GapTables { deltas, mis })
    }

    fn pick(table: &[Vec<f64>], s: &Schedule) -> Vec<f64> {
        s.gaps().enumerate().map(|(i, g)| table[i][g as usize]).collect()
    }
}

/// Builds the candidate space and the shared draws for a search.
pub fn selection_table(clients: &[ClientSpec], t_agg: u32, settings: &Settings) -> Result<DrawTable> {
    DrawTable::build(clients, t_agg, settings.trials, settings.seed, settings.sim)
}

fn pick_best<F>(clients: &[ClientSpec], t_agg: u32, settings: &Settings, score: F) -> Result<(Schedule, f64)>
where
    F: Fn(&Schedule) -> Result<f64> + Sync + Send,
{
    let count = enumerate_schedules(clients.len(), t_agg, settings.cap)?.len();
    let m = clients.len();
    let scores = par::map_indexed(count, |idx| score(&schedule_at(idx, m, t_agg)));
    let scores = scores.into_iter().collect::<Result<Vec<f64>>>()?;
    if let Some(bad) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(alloc::format!("score of schedule {}", schedule_at(bad, m, t_agg).label())));
    }
    let best = argmin_first(&scores).ok_or_else(|| Error::InvalidSchedule(String::from("empty schedule space")))?;
    Ok((schedule_at(best, m, t_agg), scores[best]))
}

fn finish(clients: &[ClientSpec], schedule: Schedule, score: f64, req: PrivacyRequirement, mode: NoiseMode, tables: &GapTables) -> Result<ScheduleChoice> {
    let plan = plan_from_deltas(clients, &GapTables::pick(&tables.deltas, &schedule), req, mode)?;
    let achieved_eps_bar = plan.achieved_eps_bar();
    Ok(ScheduleChoice { schedule, plan, score, achieved_eps_bar })
}

/// Argmin of the bound total over all schedules.
pub fn choose_schedule_bound(
    clients: &[ClientSpec],
    req: PrivacyRequirement,
    t_agg: u32,
    noise_mode: NoiseMode,
    settings: &Settings,
) -> Result<ScheduleChoice> {
    enumerate_schedules(clients.len(), t_agg, settings.cap)?;
    let table = selection_table(clients, t_agg, settings)?;
    choose_schedule_bound_with(clients, req, noise_mode, settings, &table)
}

/// [`choose_schedule_bound`] over a prebuilt selection table.
pub fn choose_schedule_bound_with(
    clients: &[ClientSpec],
    req: PrivacyRequirement,
    noise_mode: NoiseMode,
    settings: &Settings,
    table: &DrawTable,
) -> Result<ScheduleChoice> {
    let t_agg = table.t_agg();
    let tables = GapTables::new(clients, t_agg, settings.delta_mode)?;
    let (schedule, score) = pick_best(clients, t_agg, settings, |s| {
        let plan = plan_from_deltas(clients, &GapTables::pick(&tables.deltas, s), req, noise_mode)?;
        let baseline = table.baseline(s)?;
        let b = evaluate_bound_with_mi(clients, &GapTables::pick(&tables.mis, s), &plan, &baseline, settings.bound)?;
        Ok(b.total)
    })?;
    finish(clients, schedule, score, req, noise_mode, &tables)
}

/// Argmin of the simulated mean loss difference over all schedules.
pub fn choose_schedule_sim(
    clients: &[ClientSpec],
    req: PrivacyRequirement,
    t_agg: u32,
    noise_mode: NoiseMode,
    settings: &Settings,
) -> Result<ScheduleChoice> {
    enumerate_schedules(clients.len(), t_agg, settings.cap)?;
    let table = selection_table(clients, t_agg, settings)?;
    choose_schedule_sim_with(clients, req, noise_mode, settings, &table)
}

/// [`choose_schedule_sim`] over a prebuilt selection table.
pub fn choose_schedule_sim_with(
    clients: &[ClientSpec],
    req: PrivacyRequirement,
    noise_mode: NoiseMode,
    settings: &Settings,
    table: &DrawTable,
) -> Result<ScheduleChoice> {
    let t_agg = table.t_agg();
    let tables = GapTables::new(clients, t_agg, settings.delta_mode)?;
    let (schedule, score) = pick_best(clients, t_agg, settings, |s| {
        let plan = plan_from_deltas(clients, &GapTables::pick(&tables.deltas, s), req, noise_mode)?;
        Ok(table.loss_summary(s, &plan)?.mean)
    })?;
    finish(clients, schedule, score, req, noise_mode, &tables)
}

/// The schedule a random scheme uses: each `t_c,i` uniform on `[1, t_agg]`,
/// drawn once per seed from a stream no simulation uses.
pub fn random_schedule(m: usize, t_agg: u32, seed: u64) -> Result<Schedule> {
    if t_agg == 0 {
        return Err(Error::InvalidSchedule(String::from("t_agg must be at least 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    Schedule::new((0..m).map(|_| rng.gen_range(1..=t_agg)).collect(), t_agg)
}

/// Outcome of one scheme at one privacy target.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub scheme: SchemeId,
    pub choice: ScheduleChoice,
    /// Evaluation run under [`Settings::evaluation_seed`].
    pub sim: McSummary,
    /// Bound total of the chosen schedule, with selection-seed baselines.
    pub bound_total: f64,
}

/// Runs one scheme end to end.
pub fn run_scheme(
    scheme: SchemeId,
    clients: &[ClientSpec],
    req: PrivacyRequirement,
    t_agg: u32,
    settings: &Settings,
) -> Result<SchemeRun> {
    let table = selection_table(clients, t_agg, settings)?;
    run_scheme_with(scheme, clients, req, settings, &table)
}

/// [`run_scheme`] over a prebuilt selection table, so a sweep can reuse it.
pub fn run_scheme_with(
    scheme: SchemeId,
    clients: &[ClientSpec],
    req: PrivacyRequirement,
    settings: &Settings,
    table: &DrawTable,
) -> Result<SchemeRun> {
    let t_agg = table.t_agg();
    let mode = scheme.noise_mode();
    let tables = GapTables::new(clients, t_agg, settings.delta_mode)?;
    let bound_of = |s: &Schedule, plan: &NoisePlan| -> Result<f64> {
        let baseline = table.baseline(s)?;
        Ok(evaluate_bound_with_mi(clients, &GapTables::pick(&tables.mis, s), plan, &baseline, settings.bound)?.total)
    };
    let (choice, bound_total) = match scheme {
        SchemeId::RandomConstant | SchemeId::RandomAdaptive => {
            let schedule = random_schedule(clients.len(), t_agg, settings.seed)?;
            let mut choice = finish(clients, schedule, 0.0, req, mode, &tables)?;
            let b = bound_of(&choice.schedule, &choice.plan)?;
            choice.score = b;
            (choice, b)
        }
        SchemeId::ProposedConstant | SchemeId::ProposedAdaptive => {
            let choice = choose_schedule_bound_with(clients, req, mode, settings, table)?;
            let b = choice.score;
            (choice, b)
        }
        SchemeId::OptimalConstant | SchemeId::OptimalAdaptive => {
            let choice = choose_schedule_sim_with(clients, req, mode, settings, table)?;
            let b = bound_of(&choice.schedule, &choice.plan)?;
            (choice, b)
        }
    };
    let sim = monte_carlo_loss_diff(clients, &choice.schedule, &choice.plan, settings.trials, settings.evaluation_seed(), settings.sim)?;
    Ok(SchemeRun { scheme, choice, sim, bound_total })
}

/// One point of the fixed-scale constant-noise sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedScalePoint {
    pub eta: f64,
    pub schedule: Schedule,
    /// Largest age-dependent ε any client ends up with under this scale.
    pub achieved_eps_bar: f64,
    pub bound_total: f64,
    pub sim: McSummary,
}

/// Constant noise parameterized by the scale instead of the target: for each
/// `η` the bound picks a schedule, then the achieved ε̄ and the evaluated
/// loss are reported.
pub fn constant_noise_sweep(clients: &[ClientSpec], t_agg: u32, etas: &[f64], settings: &Settings) -> Result<Vec<FixedScalePoint>> {
    let table = selection_table(clients, t_agg, settings)?;
    let tables = GapTables::new(clients, t_agg, settings.delta_mode)?;
    let mut out = Vec::with_capacity(etas.len());
    for &eta in etas {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(domain("eta", eta, "finite and > 0"));
        }
        let (schedule, bound_total) = pick_best(clients, t_agg, settings, |s| {
            let plan = NoisePlan::fixed_scale(clients, &GapTables::pick(&tables.deltas, s), eta)?;
            let baseline = table.baseline(s)?;
            Ok(evaluate_bound_with_mi(clients, &GapTables::pick(&tables.mis, s), &plan, &baseline, settings.bound)?.total)
        })?;
        let plan = NoisePlan::fixed_scale(clients, &GapTables::pick(&tables.deltas, &schedule), eta)?;
        let sim = monte_carlo_loss_diff(clients, &schedule, &plan, settings.trials, settings.evaluation_seed(), settings.sim)?;
        out.push(FixedScalePoint { eta, achieved_eps_bar: plan.achieved_eps_bar(), schedule, bound_total, sim });
    }
    Ok(out)
}
