//! Age-dependent differential privacy and the adaptive Laplace mechanism.
//!
//! An `ε_c`-DP mechanism whose output is attacked `t` steps after the data
//! was collected is `ε(t, ε_c)`-age-dependent DP with
//! `ε(t, ε_c) = ln(1 + Δ(t) (e^{ε_c} − 1))`. Inverting that relation gives the
//! classic budget a client needs to meet a global target `ε̄`.

use alloc::vec::Vec;

use rand::distributions::Open01;
use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::math;
use crate::model::{ClientSpec, Schedule};

/// Global age-dependent privacy target `ε̄` (nats).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyRequirement {
    eps_bar: f64,
}

impl PrivacyRequirement {
    pub fn new(eps_bar: f64) -> Result<Self> {
        if !(eps_bar > 0.0) || !eps_bar.is_finite() {
            return Err(domain("eps_bar", eps_bar, "finite and > 0"));
        }
        Ok(Self { eps_bar })
    }

    /// No privacy requirement: every plan built from it adds zero noise.
    pub fn none() -> Self {
        Self { eps_bar: f64::INFINITY }
    }

    pub fn eps_bar(&self) -> f64 {
        self.eps_bar
    }
}

/// How noise scales are chosen across clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseMode {
    /// Each client sizes its own noise from its own aging factor.
    Adaptive,
    /// One scale for every client, sized for the worst client.
    Constant,
}

/// Which `Δ` the privacy calculus uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DeltaMode {
    Exact,
    #[default]
    Spectral,
}

/// `ε(t, ε_c) = ln(1 + Δ (e^{ε_c} − 1))`. An infinite `ε_c` with `Δ = 0`
/// (a client that needs no noise) yields 0.
pub fn age_epsilon(eps_c: f64, delta: f64) -> Result<f64> {
    if !(eps_c >= 0.0) {
        return Err(domain("eps_c", eps_c, ">= 0"));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(domain("delta", delta, "[0, 1]"));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    if delta == 1.0 {
        return Ok(eps_c);
    }
    Ok(math::ln_1p(delta * math::exp_m1(eps_c)))
}

/// Classic budget meeting `ε̄` after aging by `Δ`:
/// `ε_c = ln((e^{ε̄} − 1)/Δ + 1)`.
///
/// `Δ = 0` returns `f64::INFINITY`: no finite budget is needed and the
/// client may release its update without noise.
pub fn required_classic_eps(eps_bar: f64, delta: f64) -> Result<f64> {
    if !(eps_bar > 0.0) {
        return Err(domain("eps_bar", eps_bar, "> 0"));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(domain("delta", delta, "[0, 1]"));
    }
    if delta == 0.0 {
        return Ok(f64::INFINITY);
    }
    if delta == 1.0 {
        return Ok(eps_bar);
    }
    Ok(math::ln_1p(math::exp_m1(eps_bar) / delta))
}

/// ℓ1-sensitivity of the sample mean over `n` values in `[lo, hi]`.
pub fn l1_sensitivity_mean(lo: f64, hi: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(hi > lo) {
        return Err(domain("value range width", hi - lo, "> 0"));
    }
    Ok((hi - lo) / n as f64)
}

/// Laplace scale `η = s / ε_c`. An infinite budget gives a zero scale; a
/// zero budget is rejected since the scale would be infinite.
pub fn laplace_scale(sensitivity: f64, eps_c: f64) -> Result<f64> {
    if !(sensitivity > 0.0) {
        return Err(domain("sensitivity", sensitivity, "> 0"));
    }
    if eps_c == 0.0 {
        return Err(Error::InfiniteScale);
    }
    if !(eps_c > 0.0) {
        return Err(domain("eps_c", eps_c, "> 0"));
    }
    Ok(sensitivity / eps_c)
}

/// Inverse CDF of the zero-mean Laplace law with scale `η` at `u ∈ (0, 1)`.
pub fn laplace_inverse_cdf(u: f64, eta: f64) -> f64 {
    if u < 0.5 {
        eta * math::ln(2.0 * u)
    } else {
        -eta * math::ln(2.0 - 2.0 * u)
    }
}

/// One Laplace(0, η) draw by inversion of a uniform on the open interval.
pub fn sample_laplace<R: Rng + ?Sized>(eta: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    laplace_inverse_cdf(u, eta)
}

/// Per-client noise parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEntry {
    /// Aging factor `Δ_i` at the client's gap.
    pub delta: f64,
    /// Classic budget actually delivered, `s_i / η_i` (infinite when `η_i = 0`).
    pub eps_c: f64,
    /// Laplace scale.
    pub eta: f64,
    /// Noise variance `2 η²`.
    pub sigma_sq: f64,
    /// The client's `Δ_i` was zero, so it adds no noise.
    pub zero_noise: bool,
}

impl NoiseEntry {
    fn new(delta: f64, sensitivity: f64, eta: f64, zero_noise: bool) -> Self {
        let eps_c = if eta > 0.0 { sensitivity / eta } else { f64::INFINITY };
        NoiseEntry { delta, eps_c, eta, sigma_sq: 2.0 * eta * eta, zero_noise }
    }

    /// Age-dependent ε this entry achieves.
    pub fn achieved_eps(&self) -> f64 {
        age_epsilon(self.eps_c, self.delta).unwrap_or(f64::NAN)
    }
}

/// Noise scales and budgets for every client under one schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePlan {
    /// Target the plan was built for; `INFINITY` when privacy is disabled
    /// or the scale was fixed directly.
    pub eps_bar: f64,
    pub mode: Option<NoiseMode>,
    /// Model dimension; the mean estimator is scalar.
    pub dimension: usize,
    pub entries: Vec<NoiseEntry>,
}

impl NoisePlan {
    /// No noise anywhere.
    pub fn disabled(m: usize) -> Self {
        let entries = (0..m)
            .map(|_| NoiseEntry { delta: 1.0, eps_c: f64::INFINITY, eta: 0.0, sigma_sq: 0.0, zero_noise: true })
            .collect();
        NoisePlan { eps_bar: f64::INFINITY, mode: None, dimension: 1, entries }
    }

    /// One fixed scale `η` for every client; the achieved age-dependent ε
    /// follows from each client's `Δ_i`.
    pub fn fixed_scale(clients: &[ClientSpec], deltas: &[f64], eta: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(domain("eta", eta, "finite and >= 0"));
        }
        if deltas.len() != clients.len() {
            return Err(Error::LengthMismatch { expected: clients.len(), found: deltas.len() });
        }
        let entries = clients
            .iter()
            .zip(deltas)
            .map(|(c, &d)| NoiseEntry::new(d, c.sensitivity, eta, eta == 0.0))
            .collect();
        Ok(NoisePlan { eps_bar: f64::INFINITY, mode: Some(NoiseMode::Constant), dimension: 1, entries })
    }

    pub fn etas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.eta).collect()
    }

    /// `max_i ε(Δ_i, ε_c,i)`.
    pub fn achieved_eps_bar(&self) -> f64 {
        self.entries.iter().map(NoiseEntry::achieved_eps).fold(0.0, f64::max)
    }

    /// `(1/m) Σ 2 η_i²`.
    pub fn mean_noise_power(&self) -> f64 {
        let m = self.entries.len() as f64;
        self.entries.iter().map(|e| e.sigma_sq).sum::<f64>() / m
    }
}

/// `Δ_i` for a client at a given age gap.
pub fn client_delta(client: &ClientSpec, gap: u32, mode: DeltaMode) -> Result<f64> {
    match mode {
        DeltaMode::Exact => client.chain.delta_exact(gap),
        DeltaMode::Spectral => client.chain.delta_spectral_bound(gap),
    }
}

/// Builds the noise plan for a schedule.
///
/// Adaptive: client `i` uses `ε_c,i = required_classic_eps(ε̄, Δ_i)` and
/// `η_i = s_i / ε_c,i`. Constant: every client uses the largest of those
/// scales, so the worst client still meets `ε̄`. Clients with `Δ_i = 0`
/// need no noise and are flagged `zero_noise` in adaptive mode.
pub fn build_noise_plan(
    clients: &[ClientSpec],
    schedule: &Schedule,
    req: PrivacyRequirement,
    mode: NoiseMode,
    delta_mode: DeltaMode,
) -> Result<NoisePlan> {
    schedule.validate_for(clients.len())?;
    let deltas = clients
        .iter()
        .zip(schedule.gaps())
        .map(|(c, g)| client_delta(c, g, delta_mode))
        .collect::<Result<Vec<_>>>()?;
    plan_from_deltas(clients, &deltas, req, mode)
}

/// [`build_noise_plan`] with precomputed aging factors.
pub fn plan_from_deltas(
    clients: &[ClientSpec],
    deltas: &[f64],
    req: PrivacyRequirement,
    mode: NoiseMode,
) -> Result<NoisePlan> {
    if deltas.len() != clients.len() {
        return Err(Error::LengthMismatch { expected: clients.len(), found: deltas.len() });
    }
    let adaptive: Vec<f64> = clients
        .iter()
        .zip(deltas)
        .map(|(c, &d)| {
            let eps_c = required_classic_eps(req.eps_bar(), d)?;
            if eps_c.is_infinite() {
                Ok(0.0)
            } else {
                laplace_scale(c.sensitivity, eps_c)
            }
        })
        .collect::<Result<_>>()?;
    let entries = match mode {
        NoiseMode::Adaptive => clients
            .iter()
            .zip(deltas)
            .zip(&adaptive)
            .map(|((c, &d), &eta)| NoiseEntry::new(d, c.sensitivity, eta, eta == 0.0))
            .collect(),
        NoiseMode::Constant => {
            let eta = adaptive.iter().copied().fold(0.0, f64::max);
            clients
                .iter()
                .zip(deltas)
                .map(|(c, &d)| NoiseEntry::new(d, c.sensitivity, eta, eta == 0.0))
                .collect()
        }
    };
    Ok(NoisePlan { eps_bar: req.eps_bar(), mode: Some(mode), dimension: 1, entries })
}
