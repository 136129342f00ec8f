//! Monte-Carlo simulator of the one-shot protocol.
//!
//! Every sample is an independent trajectory born at its client's collection
//! time `t_c,i` with the collection distribution, then evolved by the
//! transition matrix until `t_agg`. The client trains on the birth snapshot;
//! the ideal model `w*` is trained on the `t_agg` snapshot.
//!
//! Randomness is keyed by `(seed, trial, client)`: trial `k` uses seed
//! `seed ^ k` and client `i` reads ChaCha stream `i` of that seed. A client's
//! draws therefore depend only on its own gap, which lets [`DrawTable`]
//! evaluate every schedule from one set of per-client draws (common random
//! numbers) with results identical to [`monte_carlo_loss_diff`].

use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::age_dp::{laplace_inverse_cdf, NoisePlan};
use crate::error::{Error, Result};
use crate::model::{ClientSpec, Schedule};
use crate::par;
use crate::stats::{mean_and_std_err, pairwise_sum};

/// Which data the ideal model `w*` is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreshMode {
    /// The `t_agg` snapshot of the same trajectories the client trained on.
    #[default]
    Shared,
    /// An independent set of trajectories born at `t_c,i`.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    pub fresh_mode: FreshMode,
}

/// Seed of trial `k`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed ^ trial as u64
}

/// Random stream of client `i` within one trial.
pub fn client_rng(trial_seed: u64, client_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(client_index as u64);
    rng
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect()
}

// Inverse-CDF categorical draw; rounding slack in the last cumulative entry
// falls back to the last state with positive mass.
fn categorical(cum: &[f64], probs: &[f64], u: f64) -> usize {
    match cum.iter().position(|&c| u < c) {
        Some(i) if probs[i] > 0.0 => i,
        Some(i) => (i..probs.len()).find(|&j| probs[j] > 0.0).unwrap_or(i),
        None => probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1),
    }
}

/// State paths of one client's samples. Path `j` occupies
/// `states[j * len .. (j + 1) * len]` with `len = gap + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    len: usize,
    states: Vec<usize>,
}

impl Trajectories {
    pub fn num_paths(&self) -> usize {
        self.states.len() / self.len
    }

    pub fn path_len(&self) -> usize {
        self.len
    }

    pub fn path(&self, j: usize) -> &[usize] {
        &self.states[j * self.len..(j + 1) * self.len]
    }

    /// Values of every sample `step` steps after birth.
    pub fn snapshot(&self, step: usize, state_values: &[f64]) -> Vec<f64> {
        (0..self.num_paths()).map(|j| state_values[self.path(j)[step]]).collect()
    }

    pub fn first(&self, state_values: &[f64]) -> Vec<f64> {
        self.snapshot(0, state_values)
    }

    pub fn last(&self, state_values: &[f64]) -> Vec<f64> {
        self.snapshot(self.len - 1, state_values)
    }
}

/// `client.n_samples` independent paths of `gap + 1` states each.
///
/// Paths for different gaps drawn from equal RNG states share their
/// common prefix.
pub fn generate_trajectories<R: Rng + ?Sized>(client: &ClientSpec, gap: u32, rng: &mut R) -> Trajectories {
    let chain = &client.chain;
    let n = chain.num_states();
    let init_p = chain.collection_dist();
    let init_c = cumulative(init_p);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|s| {
            let r = chain.transition().row(s).to_vec();
            (cumulative(&r), r)
        })
        .collect();
    let len = gap as usize + 1;
    let m = client.n_samples;
    // step-major: every birth state first, then one step of every path at a
    // time, so the paths for gap g are prefixes of the paths for gap g + 1
    let mut states = vec![0usize; m * len];
    for j in 0..m {
        states[j * len] = categorical(&init_c, init_p, rng.gen::<f64>());
    }
    for step in 1..len {
        for j in 0..m {
            let (c, p) = &rows[states[j * len + step - 1]];
            states[j * len + step] = categorical(c, p, rng.gen::<f64>());
        }
    }
    Trajectories { len, states }
}

/// Empirical MSE minimizer: the sample mean.
pub fn local_erm(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(pairwise_sum(samples) / samples.len() as f64)
}

/// `Σ p_i w_i`.
pub fn aggregate(weights: &[f64], p: &[f64]) -> Result<f64> {
    if weights.len() != p.len() {
        return Err(Error::LengthMismatch { expected: p.len(), found: weights.len() });
    }
    Ok(weights.iter().zip(p).map(|(w, q)| w * q).sum())
}

/// Everything a trial needs from one client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientDraw {
    /// Local ERM weight on the collection snapshot.
    pub w_local: f64,
    /// Mean of the client's `t_agg` data.
    pub fresh_mean: f64,
    /// Empirical variance (1/n) of the client's `t_agg` data.
    pub fresh_var: f64,
    /// Uniform in (0, 1) driving the client's Laplace noise.
    pub noise_u: f64,
}

/// Draws one client's data for one trial.
pub fn simulate_client(client: &ClientSpec, gap: u32, trial_seed: u64, client_index: usize, opts: SimOptions) -> ClientDraw {
    let mut rng = client_rng(trial_seed, client_index);
    let noise_u: f64 = rng.sample(Open01);
    let values = client.chain.state_values();
    let paths = generate_trajectories(client, gap, &mut rng);
    let collected = paths.first(values);
    let fresh = match opts.fresh_mode {
        FreshMode::Shared => paths.last(values),
        FreshMode::Independent => generate_trajectories(client, gap, &mut rng).last(values),
    };
    // n_samples >= 1 is a ClientSpec invariant
    let w_local = local_erm(&collected).unwrap_or(f64::NAN);
    let fresh_mean = local_erm(&fresh).unwrap_or(f64::NAN);
    let dev: Vec<f64> = fresh.iter().map(|z| (z - fresh_mean) * (z - fresh_mean)).collect();
    let fresh_var = pairwise_sum(&dev) / fresh.len() as f64;
    ClientDraw { w_local, fresh_mean, fresh_var, noise_u }
}

/// Result of one protocol run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// `L̂(W̃, D_agg) − L̂(w*, D_agg)`.
    pub loss_diff: f64,
    /// `(1/m) Σ N_i²`.
    pub noise_power: f64,
    pub w_tilde: f64,
    pub w_star: f64,
}

/// Aggregates one trial's client draws.
///
/// `W̃ = Σ p_i W_i + (1/m) Σ N_i` and `w* = Σ p_i mean(D_i^agg)`. Per client,
/// `MSE(w, D) = var(D) + (w − mean(D))²`, so the variance cancels and
/// `loss_diff = Σ p_i [(W̃ − z̄_i)² − (w* − z̄_i)²]`.
pub fn combine_trial(draws: &[ClientDraw], weights: &[f64], plan: &NoisePlan) -> TrialOutcome {
    let m = draws.len() as f64;
    let mut w = 0.0;
    let mut w_star = 0.0;
    let mut noise = 0.0;
    let mut power = 0.0;
    for ((d, p), e) in draws.iter().zip(weights).zip(&plan.entries) {
        w += p * d.w_local;
        w_star += p * d.fresh_mean;
        let n = if e.eta > 0.0 { laplace_inverse_cdf(d.noise_u, e.eta) } else { 0.0 };
        noise += n;
        power += n * n;
    }
    let w_tilde = w + noise / m;
    let mut loss_diff = 0.0;
    for (d, p) in draws.iter().zip(weights) {
        let a = w_tilde - d.fresh_mean;
        let b = w_star - d.fresh_mean;
        loss_diff += p * (a * a - b * b);
    }
    TrialOutcome { loss_diff, noise_power: power / m, w_tilde, w_star }
}

fn check_inputs(clients: &[ClientSpec], schedule: &Schedule, plan: Option<&NoisePlan>) -> Result<()> {
    ClientSpec::validate_set(clients)?;
    schedule.validate_for(clients.len())?;
    if let Some(plan) = plan {
        if plan.entries.len() != clients.len() {
            return Err(Error::LengthMismatch { expected: clients.len(), found: plan.entries.len() });
        }
    }
    Ok(())
}

/// One trial with the given trial seed.
pub fn run_trial(clients: &[ClientSpec], schedule: &Schedule, plan: &NoisePlan, trial_seed: u64, opts: SimOptions) -> Result<TrialOutcome> {
    check_inputs(clients, schedule, Some(plan))?;
    let draws: Vec<ClientDraw> = clients
        .iter()
        .enumerate()
        .map(|(i, c)| simulate_client(c, schedule.gap(i), trial_seed, i, opts))
        .collect();
    Ok(combine_trial(&draws, &ClientSpec::weights(clients), plan))
}

/// Outcomes of trials `0..trials`, in trial order.
pub fn trial_outcomes(
    clients: &[ClientSpec],
    schedule: &Schedule,
    plan: &NoisePlan,
    trials: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<Vec<TrialOutcome>> {
    check_inputs(clients, schedule, Some(plan))?;
    if trials == 0 {
        return Err(crate::error::domain("trials", 0.0, ">= 1"));
    }
    let weights = ClientSpec::weights(clients);
    Ok(par::map_indexed(trials, |k| {
        let ts = trial_seed(seed, k);
        let draws: Vec<ClientDraw> = clients
            .iter()
            .enumerate()
            .map(|(i, c)| simulate_client(c, schedule.gap(i), ts, i, opts))
            .collect();
        combine_trial(&draws, &weights, plan)
    }))
}

/// Monte-Carlo estimate of the expected loss difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSummary {
    pub mean: f64,
    pub std_err: f64,
    /// Mean realized `(1/m) Σ N_i²`.
    pub mean_noise_power: f64,
    /// Standard error of `mean_noise_power`.
    pub noise_power_std_err: f64,
    pub trials: usize,
}

pub fn summarize(outcomes: &[TrialOutcome]) -> McSummary {
    let losses: Vec<f64> = outcomes.iter().map(|o| o.loss_diff).collect();
    let powers: Vec<f64> = outcomes.iter().map(|o| o.noise_power).collect();
    let (mean, std_err) = mean_and_std_err(&losses);
    let (mean_noise_power, noise_power_std_err) = mean_and_std_err(&powers);
    McSummary { mean, std_err, mean_noise_power, noise_power_std_err, trials: outcomes.len() }
}

pub fn monte_carlo_loss_diff(
    clients: &[ClientSpec],
    schedule: &Schedule,
    plan: &NoisePlan,
    trials: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<McSummary> {
    Ok(summarize(&trial_outcomes(clients, schedule, plan, trials, seed, opts)?))
}

/// Noise-free expectations feeding the bound's baseline term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineStats {
    /// `E[L̄(W)]` for the noise-free aggregate `W`.
    pub e_pop_risk_w: f64,
    /// `E[L̂(w*, D_agg)]`.
    pub e_emp_loss_wstar: f64,
    /// `E[L̄(w*)]`, only used by the literal form of the bound.
    pub e_pop_risk_wstar: f64,
}

// Population risk Σ p_i E_{μ_i}[(w − Z)²], evaluated as a finite sum.
fn population_risk(w: f64, weights: &[f64], targets: &[&[f64]], values: &[&[f64]]) -> f64 {
    let mut acc = 0.0;
    for ((p, mu), v) in weights.iter().zip(targets).zip(values) {
        let mut r = 0.0;
        for (q, x) in mu.iter().zip(v.iter()) {
            r += q * (w - x) * (w - x);
        }
        acc += p * r;
    }
    acc
}

struct TrialBaseline {
    pop_w: f64,
    emp_wstar: f64,
    pop_wstar: f64,
}

fn trial_baseline(draws: &[ClientDraw], weights: &[f64], targets: &[&[f64]], values: &[&[f64]]) -> TrialBaseline {
    let mut w = 0.0;
    let mut w_star = 0.0;
    for (d, p) in draws.iter().zip(weights) {
        w += p * d.w_local;
        w_star += p * d.fresh_mean;
    }
    let mut emp = 0.0;
    for (d, p) in draws.iter().zip(weights) {
        let b = w_star - d.fresh_mean;
        emp += p * (d.fresh_var + b * b);
    }
    TrialBaseline {
        pop_w: population_risk(w, weights, targets, values),
        emp_wstar: emp,
        pop_wstar: population_risk(w_star, weights, targets, values),
    }
}

fn reduce_baseline(per_trial: &[TrialBaseline]) -> BaselineStats {
    let n = per_trial.len() as f64;
    let col = |f: fn(&TrialBaseline) -> f64| pairwise_sum(&per_trial.iter().map(f).collect::<Vec<_>>()) / n;
    BaselineStats {
        e_pop_risk_w: col(|t| t.pop_w),
        e_emp_loss_wstar: col(|t| t.emp_wstar),
        e_pop_risk_wstar: col(|t| t.pop_wstar),
    }
}

/// Monte-Carlo baseline statistics. The target distribution of client `i`
/// is `marginal_at(t_agg − t_c,i)`, the law of its `t_agg` data.
pub fn baseline_stats(clients: &[ClientSpec], schedule: &Schedule, trials: usize, seed: u64, opts: SimOptions) -> Result<BaselineStats> {
    check_inputs(clients, schedule, None)?;
    if trials == 0 {
        return Err(crate::error::domain("trials", 0.0, ">= 1"));
    }
    let weights = ClientSpec::weights(clients);
    let marginals: Vec<Vec<f64>> = clients.iter().enumerate().map(|(i, c)| c.chain.marginal_at(schedule.gap(i))).collect();
    let targets: Vec<&[f64]> = marginals.iter().map(Vec::as_slice).collect();
    let values: Vec<&[f64]> = clients.iter().map(|c| c.chain.state_values()).collect();
    let per_trial = par::map_indexed(trials, |k| {
        let ts = trial_seed(seed, k);
        let draws: Vec<ClientDraw> = clients
            .iter()
            .enumerate()
            .map(|(i, c)| simulate_client(c, schedule.gap(i), ts, i, opts))
            .collect();
        trial_baseline(&draws, &weights, &targets, &values)
    });
    Ok(reduce_baseline(&per_trial))
}

/// Per-client draws for every gap `0..t_agg` and every trial, so that any
/// schedule can be scored without resampling. Scores equal those of
/// [`monte_carlo_loss_diff`] and [`baseline_stats`] bit for bit.
#[derive(Debug, Clone)]
pub struct DrawTable {
    t_agg: u32,
    trials: usize,
    weights: Vec<f64>,
    values: Vec<Vec<f64>>,
    // [client][gap] -> marginal at that gap
    marginals: Vec<Vec<Vec<f64>>>,
    // [client][gap][trial]
    draws: Vec<Vec<Vec<ClientDraw>>>,
}

impl DrawTable {
    pub fn build(clients: &[ClientSpec], t_agg: u32, trials: usize, seed: u64, opts: SimOptions) -> Result<Self> {
        ClientSpec::validate_set(clients)?;
        if t_agg == 0 {
            return Err(Error::InvalidSchedule("t_agg must be at least 1".into()));
        }
        if trials == 0 {
            return Err(crate::error::domain("trials", 0.0, ">= 1"));
        }
        let m = clients.len();
        let gaps = t_agg as usize;
        let flat = par::map_indexed(m * gaps * trials, |idx| {
            let k = idx % trials;
            let g = (idx / trials) % gaps;
            let i = idx / (trials * gaps);
            simulate_client(&clients[i], g as u32, trial_seed(seed, k), i, opts)
        });
        let mut draws = vec![vec![Vec::new(); gaps]; m];
        for (idx, d) in flat.into_iter().enumerate() {
            let g = (idx / trials) % gaps;
            let i = idx / (trials * gaps);
            draws[i][g].push(d);
        }
        let marginals = clients.iter().map(|c| (0..t_agg).map(|g| c.chain.marginal_at(g)).collect()).collect();
        Ok(DrawTable {
            t_agg,
            trials,
            weights: ClientSpec::weights(clients),
            values: clients.iter().map(|c| c.chain.state_values().to_vec()).collect(),
            marginals,
            draws,
        })
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn t_agg(&self) -> u32 {
        self.t_agg
    }

    fn check(&self, schedule: &Schedule) -> Result<()> {
        schedule.validate_for(self.weights.len())?;
        if schedule.t_agg != self.t_agg {
            return Err(Error::InvalidSchedule(alloc::format!(
                "schedule has t_agg {}, table was built for {}",
                schedule.t_agg, self.t_agg
            )));
        }
        Ok(())
    }

    fn trial_draws(&self, gaps: &[usize], k: usize) -> Vec<ClientDraw> {
        gaps.iter().enumerate().map(|(i, &g)| self.draws[i][g][k]).collect()
    }

    pub fn outcomes(&self, schedule: &Schedule, plan: &NoisePlan) -> Result<Vec<TrialOutcome>> {
        self.check(schedule)?;
        if plan.entries.len() != self.weights.len() {
            return Err(Error::LengthMismatch { expected: self.weights.len(), found: plan.entries.len() });
        }
        let gaps: Vec<usize> = schedule.gaps().map(|g| g as usize).collect();
        Ok((0..self.trials).map(|k| combine_trial(&self.trial_draws(&gaps, k), &self.weights, plan)).collect())
    }

    pub fn loss_summary(&self, schedule: &Schedule, plan: &NoisePlan) -> Result<McSummary> {
        Ok(summarize(&self.outcomes(schedule, plan)?))
    }

    pub fn baseline(&self, schedule: &Schedule) -> Result<BaselineStats> {
        self.check(schedule)?;
        let gaps: Vec<usize> = schedule.gaps().map(|g| g as usize).collect();
        let targets: Vec<&[f64]> = gaps.iter().enumerate().map(|(i, &g)| self.marginals[i][g].as_slice()).collect();
        let values: Vec<&[f64]> = self.values.iter().map(Vec::as_slice).collect();
        let per_trial: Vec<TrialBaseline> = (0..self.trials)
            .map(|k| trial_baseline(&self.trial_draws(&gaps, k), &self.weights, &targets, &values))
            .collect();
        Ok(reduce_baseline(&per_trial))
    }
}
