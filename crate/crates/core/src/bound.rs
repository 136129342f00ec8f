//! Schedule-scoring upper bound on the expected loss difference.
//!
//! For a loss that is sub-exponential with parameters `(ν, α)` the bound is
//!
//! ```text
//! Σ_i p_i f_SE(I_i; ν_i, α_i)  +  E[L̄(W)] − E[L̂(w*, D_agg)]  +  (1/m) Σ_i 2η_i²
//! ```
//!
//! where `I_i = I(Z_i at t_c,i ; Z_i at t_agg)` bounds the information the
//! aggregate carries about a fresh sample (data-processing inequality), and
//! `ν_i = α_i = 2η_i²` follow from the Laplace noise scale.

use alloc::vec::Vec;

use crate::age_dp::NoisePlan;
use crate::error::{domain, Error, Result};
use crate::math;
use crate::model::{ClientSpec, Schedule};
use crate::sim::BaselineStats;

/// Sub-exponential parameters `(ν, α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubExpParams {
    nu: f64,
    alpha: f64,
}

impl SubExpParams {
    pub fn new(nu: f64, alpha: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(domain("nu", nu, "finite and > 0"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(domain("alpha", alpha, "finite and > 0"));
        }
        Ok(Self { nu, alpha })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Branch point `ν² / (2α²)`.
    pub fn threshold(&self) -> f64 {
        self.nu * self.nu / (2.0 * self.alpha * self.alpha)
    }
}

/// Which closed form of the sub-exponential inverse to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FseMode {
    /// `√(4ν I)` below the branch point, `ν²/(2α²) + α I` above.
    #[default]
    Paper,
    /// The exact Legendre dual of `ψ(λ) = λ²ν²/2` on `[0, 1/α]`:
    /// `√(2ν² I)` below the branch point, `ν²/(2α) + α I` above.
    Canonical,
}

/// Whether the `L̄(w*)` terms cancel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundMode {
    /// `E[L̄(W)] − E[L̂(w*, D)]`.
    #[default]
    Cancelled,
    /// Keeps the extra `+ L̄(w*)` of the displayed final form.
    PaperLiteral,
}

/// `(ν, α)` used for clients that add no noise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NuFallback {
    /// `2 (s_i / ε̄)²`: the scale the client would need without aging.
    #[default]
    NoAgingScale,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundOptions {
    pub fse_mode: FseMode,
    pub bound_mode: BoundMode,
    pub fallback: NuFallback,
}

/// Piecewise sub-exponential bound `f_SE(I; ν, α)`.
pub fn f_se(mi: f64, params: SubExpParams, mode: FseMode) -> Result<f64> {
    if !(mi >= 0.0) {
        return Err(domain("mutual information", mi, ">= 0"));
    }
    let (nu, alpha) = (params.nu, params.alpha);
    let th = params.threshold();
    Ok(match (mode, mi <= th) {
        (FseMode::Paper, true) => math::sqrt(4.0 * nu * mi),
        (FseMode::Paper, false) => th + alpha * mi,
        (FseMode::Canonical, true) => math::sqrt(2.0 * nu * nu * mi),
        (FseMode::Canonical, false) => nu * nu / (2.0 * alpha) + alpha * mi,
    })
}

/// Numerical `ψ*⁻¹(x) = inf_{λ ∈ (0, b₊]} (x + ψ(λ)) / λ`.
///
/// The objective is scanned on a geometric grid of `grid` points spanning
/// twelve decades below `b₊` and the best cell is refined by golden-section
/// search. An infinite `b₊` is replaced by the first power of two past
/// which the objective increases.
pub fn psi_inverse_generic<F>(mi: f64, psi: F, b_plus: f64, grid: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(mi >= 0.0) {
        return Err(domain("mutual information", mi, ">= 0"));
    }
    if !(b_plus > 0.0) {
        return Err(domain("b_plus", b_plus, "> 0"));
    }
    if grid < 2 {
        return Err(domain("grid", grid as f64, ">= 2"));
    }
    let objective = |lam: f64| (mi + psi(lam)) / lam;
    let checked = |lam: f64| -> Result<f64> {
        let v = objective(lam);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(alloc::format!("psi objective at lambda = {lam}")))
        }
    };

    let hi = if b_plus.is_finite() {
        b_plus
    } else {
        let mut lam = 1.0;
        let mut prev = checked(lam)?;
        // grow until the objective turns upward
        loop {
            let next = checked(2.0 * lam)?;
            if next >= prev || lam > 1e300 {
                break 2.0 * lam;
            }
            prev = next;
            lam *= 2.0;
        }
    };
    let lo = hi * 1e-12;
    let ratio = hi / lo;
    let lambdas: Vec<f64> = (0..grid)
        .map(|k| if k + 1 == grid { hi } else { lo * libm::pow(ratio, k as f64 / (grid - 1) as f64) })
        .collect();
    let mut best_k = 0;
    let mut best = f64::INFINITY;
    for (k, &lam) in lambdas.iter().enumerate() {
        let v = checked(lam)?;
        if v < best {
            best = v;
            best_k = k;
        }
    }

    let mut a = lambdas[best_k.saturating_sub(1)];
    let mut b = lambdas[(best_k + 1).min(grid - 1)];
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = checked(c)?;
    let mut fd = checked(d)?;
    for _ in 0..200 {
        if (b - a) <= 1e-15 * b {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = checked(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = checked(d)?;
        }
    }
    Ok(best.min(fc).min(fd))
}

/// `I(Z_i at t_c,i ; Z_i at t_agg)`, which upper-bounds the information the
/// aggregate holds about one of client `i`'s fresh samples.
pub fn mi_upper_bound_for_client(client: &ClientSpec, schedule: &Schedule, index: usize) -> Result<f64> {
    schedule.validate()?;
    let t_c = *schedule
        .t_c
        .get(index)
        .ok_or(Error::LengthMismatch { expected: index + 1, found: schedule.t_c.len() })?;
    Ok(client.chain.mutual_information_age(schedule.t_agg - t_c))
}

/// Per-client contributions to the generalization term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientBoundTerms {
    pub mi: f64,
    pub nu: f64,
    pub alpha: f64,
    pub f_se: f64,
}

/// The evaluated bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundBreakdown {
    /// `Σ p_i f_SE(I_i)`.
    pub gen_term: f64,
    /// `E[L̄(W)] − E[L̂(w*, D)]` (plus `E[L̄(w*)]` in the literal mode).
    pub baseline_term: f64,
    /// `(1/m) Σ σ²_c,i`.
    pub noise_term: f64,
    /// `gen_term + baseline_term + noise_term`.
    pub total: f64,
    pub per_client: Vec<ClientBoundTerms>,
}

/// Evaluates the bound for a schedule, its noise plan and baseline stats.
pub fn evaluate_bound(
    clients: &[ClientSpec],
    schedule: &Schedule,
    plan: &NoisePlan,
    baseline: &BaselineStats,
    opts: BoundOptions,
) -> Result<BoundBreakdown> {
    schedule.validate_for(clients.len())?;
    let mis: Vec<f64> = clients.iter().zip(schedule.gaps()).map(|(c, g)| c.chain.mutual_information_age(g)).collect();
    evaluate_bound_with_mi(clients, &mis, plan, baseline, opts)
}

/// [`evaluate_bound`] with the per-client mutual information precomputed.
pub fn evaluate_bound_with_mi(
    clients: &[ClientSpec],
    mis: &[f64],
    plan: &NoisePlan,
    baseline: &BaselineStats,
    opts: BoundOptions,
) -> Result<BoundBreakdown> {
    let m = clients.len();
    if mis.len() != m {
        return Err(Error::LengthMismatch { expected: m, found: mis.len() });
    }
    if plan.entries.len() != m {
        return Err(Error::LengthMismatch { expected: m, found: plan.entries.len() });
    }
    let mut per_client = Vec::with_capacity(m);
    let mut gen_term = 0.0;
    for ((c, &mi), e) in clients.iter().zip(mis).zip(&plan.entries) {
        let nu = if e.eta > 0.0 {
            2.0 * e.eta * e.eta
        } else {
            match opts.fallback {
                NuFallback::Fixed(v) => v,
                NuFallback::NoAgingScale => {
                    let eta0 = c.sensitivity / plan.eps_bar;
                    2.0 * eta0 * eta0
                }
            }
        };
        let params = SubExpParams::new(nu, nu)?;
        let f = f_se(mi, params, opts.fse_mode)?;
        gen_term += c.weight * f;
        per_client.push(ClientBoundTerms { mi, nu, alpha: nu, f_se: f });
    }
    let noise_term = plan.entries.iter().map(|e| e.sigma_sq).sum::<f64>() / m as f64;
    let mut baseline_term = baseline.e_pop_risk_w - baseline.e_emp_loss_wstar;
    if opts.bound_mode == BoundMode::PaperLiteral {
        baseline_term += baseline.e_pop_risk_wstar;
    }
    let total = gen_term + baseline_term + noise_term;
    Ok(BoundBreakdown { gen_term, baseline_term, noise_term, total, per_client })
}

/// Noise-independent bound on the excess risk: `sup_w L̄(w) − E[L̄(w*)]`
/// with `w` ranging over the hull of the state values. `L̄` is a convex
/// quadratic, so the supremum sits at an end point.
pub fn excess_risk_sup(clients: &[ClientSpec], schedule: &Schedule, baseline: &BaselineStats) -> Result<f64> {
    schedule.validate_for(clients.len())?;
    let lo = clients.iter().map(|c| c.chain.value_range().0).fold(f64::INFINITY, f64::min);
    let hi = clients.iter().map(|c| c.chain.value_range().1).fold(f64::NEG_INFINITY, f64::max);
    let risk = |w: f64| -> f64 {
        clients
            .iter()
            .zip(schedule.gaps())
            .map(|(c, g)| {
                let mu = c.chain.marginal_at(g);
                let r: f64 = mu.iter().zip(c.chain.state_values()).map(|(q, x)| q * (w - x) * (w - x)).sum();
                c.weight * r
            })
            .sum()
    };
    Ok(risk(lo).max(risk(hi)) - baseline.e_pop_risk_wstar)
}
