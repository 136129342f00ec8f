//! Experiment configuration, read from TOML.
//!
//! Every validation error names the offending line. The seed is mandatory:
//! runs never fall back to wall-clock entropy.

use std::ops::Range;
use std::path::Path;

use agefl_core::age_dp::DeltaMode;
use agefl_core::bound::{BoundMode, BoundOptions, FseMode, NuFallback};
use agefl_core::markov::cyclic_chain;
use agefl_core::scheduler::{SchemeId, Settings, DEFAULT_SCHEDULE_CAP};
use agefl_core::sim::{FreshMode, SimOptions};
use agefl_core::{ClientSpec, MarkovChain, Matrix};
use serde::Deserialize;
use toml::Spanned;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
}

/// Model and estimator switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flags {
    pub delta_mode: DeltaMode,
    pub fse_mode: FseMode,
    pub bound_mode: BoundMode,
    pub fresh_mode: FreshMode,
    pub fallback: NuFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub clients: Vec<ClientSpec>,
    pub client_names: Vec<String>,
    pub t_agg: u32,
    pub eps_bar_grid: Vec<f64>,
    /// Target used by the single-point commands when none is given.
    pub eps_bar: f64,
    pub schemes: Vec<SchemeId>,
    pub trials: usize,
    pub seed: u64,
    pub flags: Flags,
    pub schedule_cap: u128,
    /// Laplace scales for the fixed-scale constant-noise sweep.
    pub eta_grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn settings(&self) -> Settings {
        Settings {
            delta_mode: self.flags.delta_mode,
            bound: BoundOptions {
                fse_mode: self.flags.fse_mode,
                bound_mode: self.flags.bound_mode,
                fallback: self.flags.fallback,
            },
            sim: SimOptions { fresh_mode: self.flags.fresh_mode },
            trials: self.trials,
            seed: self.seed,
            cap: self.schedule_cap,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<Spanned<u64>>,
    t_agg: Spanned<u32>,
    trials: Spanned<usize>,
    eps_bar_grid: Spanned<Vec<f64>>,
    eps_bar: Option<Spanned<f64>>,
    schemes: Option<Spanned<Vec<Spanned<String>>>>,
    schedule_cap: Option<Spanned<u64>>,
    eta_grid: Option<Spanned<Vec<f64>>>,
    #[serde(default)]
    flags: RawFlags,
    clients: Spanned<Vec<Spanned<RawClient>>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFlags {
    delta_mode: Option<Spanned<String>>,
    fse_mode: Option<Spanned<String>>,
    bound_mode: Option<Spanned<String>>,
    fresh_mode: Option<Spanned<String>>,
    nu_fallback: Option<Spanned<toml::Value>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClient {
    name: Option<String>,
    q: Option<Spanned<f64>>,
    transition: Option<Spanned<Vec<Spanned<Vec<f64>>>>>,
    collection_dist: Spanned<Vec<f64>>,
    n_samples: Spanned<usize>,
    state_values: Spanned<Vec<f64>>,
}

const ROW_TOL: f64 = 1e-9;

struct Src<'a>(&'a str);

impl Src<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.0.len());
        self.0[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err<T>(&self, span: Range<usize>, msg: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError::Invalid { line: self.line(span), msg: msg.into() })
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let src = Src(text);

    let seed = match raw.seed {
        Some(s) => s.into_inner(),
        None => return src.err(0..0, "missing `seed`; runs must be seeded explicitly"),
    };
    if *raw.t_agg.get_ref() == 0 {
        return src.err(raw.t_agg.span(), "t_agg must be at least 1");
    }
    if *raw.trials.get_ref() == 0 {
        return src.err(raw.trials.span(), "trials must be at least 1");
    }
    let grid = raw.eps_bar_grid.get_ref();
    if grid.is_empty() {
        return src.err(raw.eps_bar_grid.span(), "eps_bar_grid is empty");
    }
    if let Some(bad) = grid.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return src.err(raw.eps_bar_grid.span(), format!("eps_bar_grid entry {bad} is not a positive finite number"));
    }
    let eps_bar = match &raw.eps_bar {
        Some(e) if !(*e.get_ref() > 0.0 && e.get_ref().is_finite()) => {
            return src.err(e.span(), "eps_bar must be positive and finite")
        }
        Some(e) => *e.get_ref(),
        None => grid[0],
    };

    let schemes = match raw.schemes {
        None => SchemeId::ALL.to_vec(),
        Some(list) => {
            if list.get_ref().is_empty() {
                return src.err(list.span(), "schemes is empty");
            }
            let mut out = Vec::new();
            for s in list.get_ref() {
                match s.get_ref().parse::<SchemeId>() {
                    Ok(id) => out.push(id),
                    Err(e) => return src.err(s.span(), e.to_string()),
                }
            }
            out
        }
    };

    let eta_grid = match raw.eta_grid {
        None => Vec::new(),
        Some(g) => {
            if let Some(bad) = g.get_ref().iter().find(|e| !(**e > 0.0 && e.is_finite())) {
                return src.err(g.span(), format!("eta_grid entry {bad} is not a positive finite number"));
            }
            g.into_inner()
        }
    };

    let flags = parse_flags(&src, raw.flags)?;

    let raw_clients = raw.clients.get_ref();
    if raw_clients.is_empty() {
        return src.err(raw.clients.span(), "no clients");
    }
    let mut chains = Vec::with_capacity(raw_clients.len());
    let mut names = Vec::with_capacity(raw_clients.len());
    for (i, c) in raw_clients.iter().enumerate() {
        let name = c.get_ref().name.clone().unwrap_or_else(|| format!("client{}", i + 1));
        chains.push(build_chain(&src, c, &name)?);
        names.push(name);
    }
    let clients = ClientSpec::from_chains(chains).map_err(|e| ConfigError::Invalid { line: src.line(raw.clients.span()), msg: e.to_string() })?;

    Ok(ExperimentConfig {
        clients,
        client_names: names,
        t_agg: raw.t_agg.into_inner(),
        eps_bar_grid: raw.eps_bar_grid.into_inner(),
        eps_bar,
        schemes,
        trials: raw.trials.into_inner(),
        seed,
        flags,
        schedule_cap: raw.schedule_cap.map_or(DEFAULT_SCHEDULE_CAP, |c| c.into_inner() as u128),
        eta_grid,
    })
}

fn pick<T: Copy>(src: &Src, v: &Option<Spanned<String>>, key: &str, default: T, options: &[(&str, T)]) -> Result<T, ConfigError> {
    let Some(v) = v else { return Ok(default) };
    match options.iter().find(|(k, _)| *k == v.get_ref()) {
        Some((_, x)) => Ok(*x),
        None => {
            let names: Vec<&str> = options.iter().map(|(k, _)| *k).collect();
            src.err(v.span(), format!("{key} must be one of {}, got `{}`", names.join("|"), v.get_ref()))
        }
    }
}

fn parse_flags(src: &Src, f: RawFlags) -> Result<Flags, ConfigError> {
    let fallback = match &f.nu_fallback {
        None => NuFallback::NoAgingScale,
        Some(v) => match v.get_ref() {
            toml::Value::String(s) if s == "no_aging" => NuFallback::NoAgingScale,
            toml::Value::Float(x) if *x > 0.0 && x.is_finite() => NuFallback::Fixed(*x),
            toml::Value::Integer(x) if *x > 0 => NuFallback::Fixed(*x as f64),
            _ => return src.err(v.span(), "nu_fallback must be \"no_aging\" or a positive number"),
        },
    };
    Ok(Flags {
        delta_mode: pick(src, &f.delta_mode, "delta_mode", DeltaMode::Spectral, &[("exact", DeltaMode::Exact), ("spectral", DeltaMode::Spectral)])?,
        fse_mode: pick(src, &f.fse_mode, "fse_mode", FseMode::Paper, &[("paper", FseMode::Paper), ("canonical", FseMode::Canonical)])?,
        bound_mode: pick(
            src,
            &f.bound_mode,
            "bound_mode",
            BoundMode::Cancelled,
            &[("cancelled", BoundMode::Cancelled), ("paper_literal", BoundMode::PaperLiteral)],
        )?,
        fresh_mode: pick(
            src,
            &f.fresh_mode,
            "fresh_mode",
            FreshMode::Shared,
            &[("shared", FreshMode::Shared), ("independent", FreshMode::Independent)],
        )?,
        fallback,
    })
}

fn build_chain(src: &Src, c: &Spanned<RawClient>, name: &str) -> Result<(MarkovChain, usize), ConfigError> {
    let raw = c.get_ref();
    let values = raw.state_values.get_ref().clone();
    let k = values.len();
    if k < 2 {
        return src.err(raw.state_values.span(), format!("client {name}: need at least two states"));
    }
    let transition = match (&raw.q, &raw.transition) {
        (Some(_), Some(t)) => return src.err(t.span(), format!("client {name}: give either `q` or `transition`, not both")),
        (None, None) => return src.err(c.span(), format!("client {name}: missing `q` or `transition`")),
        (Some(q), None) => cyclic_chain(k, *q.get_ref(), values.clone())
            .map_err(|e| ConfigError::Invalid { line: src.line(q.span()), msg: format!("client {name}: {e}") })?
            .transition()
            .clone(),
        (None, Some(t)) => {
            let rows = t.get_ref();
            if rows.len() != k {
                return src.err(t.span(), format!("client {name}: transition has {} rows, expected {k}", rows.len()));
            }
            for (r, row) in rows.iter().enumerate() {
                let v = row.get_ref();
                if v.len() != k {
                    return src.err(row.span(), format!("client {name}: transition row {r} has {} entries, expected {k}", v.len()));
                }
                if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                    return src.err(row.span(), format!("client {name}: transition row {r} has a negative or non-finite entry"));
                }
                let sum: f64 = v.iter().sum();
                if (sum - 1.0).abs() > ROW_TOL {
                    return src.err(row.span(), format!("client {name}: transition row {r} sums to {sum}, expected 1"));
                }
            }
            let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.get_ref().clone()).collect();
            Matrix::from_rows(&rows).map_err(|e| ConfigError::Invalid { line: src.line(t.span()), msg: format!("client {name}: {e}") })?
        }
    };
    let n = *raw.n_samples.get_ref();
    if n == 0 {
        return src.err(raw.n_samples.span(), format!("client {name}: n_samples must be at least 1"));
    }
    let chain = MarkovChain::new(values, transition, raw.collection_dist.get_ref().clone())
        .map_err(|e| ConfigError::Invalid { line: src.line(raw.collection_dist.span()), msg: format!("client {name}: {e}") })?;
    Ok((chain, n))
}
