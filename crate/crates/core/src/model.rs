//! Shared domain types: clients and collection schedules.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::markov::MarkovChain;

/// One client: its data process, dataset size, learning-algorithm
/// sensitivity and aggregation weight `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSpec {
    pub chain: MarkovChain,
    pub n_samples: usize,
    pub sensitivity: f64,
    pub weight: f64,
}

impl ClientSpec {
    /// Builds clients whose weights are `n_i / Σ n` and whose sensitivity is
    /// that of the sample mean over the chain's value range.
    pub fn from_chains(chains: Vec<(MarkovChain, usize)>) -> Result<Vec<ClientSpec>> {
        if chains.is_empty() {
            return Err(Error::Config(String::from("at least one client is required")));
        }
        let total: usize = chains.iter().map(|(_, n)| *n).sum();
        chains
            .into_iter()
            .map(|(chain, n)| {
                let (lo, hi) = chain.value_range();
                let sensitivity = crate::age_dp::l1_sensitivity_mean(lo, hi, n)?;
                Ok(ClientSpec { chain, n_samples: n, sensitivity, weight: n as f64 / total as f64 })
            })
            .collect()
    }

    pub fn weights(clients: &[ClientSpec]) -> Vec<f64> {
        clients.iter().map(|c| c.weight).collect()
    }

    pub fn validate_set(clients: &[ClientSpec]) -> Result<()> {
        if clients.is_empty() {
            return Err(Error::Config(String::from("at least one client is required")));
        }
        let sum: f64 = clients.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("client weights sum to {sum}, expected 1")));
        }
        for (i, c) in clients.iter().enumerate() {
            if c.n_samples == 0 {
                return Err(Error::Config(format!("client {i} has no samples")));
            }
            if !(c.weight >= 0.0) {
                return Err(Error::Config(format!("client {i} has negative weight")));
            }
        }
        Ok(())
    }
}

/// Per-client collection times plus the aggregation time, all in steps.
/// Valid schedules satisfy `1 ≤ t_c[i] ≤ t_agg`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Schedule {
    pub t_c: Vec<u32>,
    pub t_agg: u32,
}

impl Schedule {
    pub fn new(t_c: Vec<u32>, t_agg: u32) -> Result<Self> {
        let s = Schedule { t_c, t_agg };
        s.validate()?;
        Ok(s)
    }

    /// Every client collects at `t_agg`.
    pub fn freshest(m: usize, t_agg: u32) -> Self {
        Schedule { t_c: alloc::vec![t_agg; m], t_agg }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_agg == 0 {
            return Err(Error::InvalidSchedule(String::from("t_agg must be at least 1")));
        }
        for (i, &t) in self.t_c.iter().enumerate() {
            if t < 1 || t > self.t_agg {
                return Err(Error::InvalidSchedule(format!(
                    "client {i}: collection time {t} outside [1, {}]",
                    self.t_agg
                )));
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, m: usize) -> Result<()> {
        if self.t_c.len() != m {
            return Err(Error::LengthMismatch { expected: m, found: self.t_c.len() });
        }
        self.validate()
    }

    pub fn num_clients(&self) -> usize {
        self.t_c.len()
    }

    /// Age gap `t_agg − t_c` of client `i`.
    pub fn gap(&self, i: usize) -> u32 {
        self.t_agg - self.t_c[i]
    }

    pub fn gaps(&self) -> impl Iterator<Item = u32> + '_ {
        self.t_c.iter().map(move |&t| self.t_agg - t)
    }

    /// Collection times joined by `-`, e.g. `12-7-9`.
    pub fn label(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.t_c.iter().enumerate() {
            if i > 0 {
                s.push('-');
            }
            s.push_str(&format!("{t}"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_bounds() {
        assert!(Schedule::new(alloc::vec![1, 12], 12).is_ok());
        assert!(Schedule::new(alloc::vec![0, 12], 12).is_err());
        assert!(Schedule::new(alloc::vec![13], 12).is_err());
        let s = Schedule::new(alloc::vec![3, 12, 7], 12).unwrap();
        assert_eq!(s.label(), "3-12-7");
        assert_eq!(s.gaps().collect::<Vec<_>>(), alloc::vec![9, 0, 5]);
    }
}
