//! Finite-state Markov chains over real-valued states.
//!
//! `Δ(t)` is the largest total-variation distance between two rows of the
//! time-reversed `t`-step kernel. It is the factor by which aging discounts
//! a classic privacy budget (see [`crate::age_dp::age_epsilon`]).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;

const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite chain: state labels, row-stochastic transition matrix and the
/// distribution of a client's data at its collection time.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    state_values: Vec<f64>,
    transition: Matrix,
    collection_dist: Vec<f64>,
}

fn check_distribution(what: &'static str, p: &[f64]) -> Result<()> {
    for (i, &x) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidDistribution { what, reason: format!("entry {i} = {x} not in [0, 1]") });
        }
    }
    let s: f64 = p.iter().sum();
    if math::abs(s - 1.0) > STOCHASTIC_TOL {
        return Err(Error::InvalidDistribution { what, reason: format!("sums to {s}") });
    }
    Ok(())
}

fn check_stochastic(m: &Matrix) -> Result<()> {
    for (r, row) in m.rows().enumerate() {
        if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidChain(format!("row {r} has an entry outside [0, 1]")));
        }
        let sum: f64 = row.iter().sum();
        if math::abs(sum - 1.0) > STOCHASTIC_TOL {
            return Err(Error::NotStochastic { row: r, sum });
        }
    }
    Ok(())
}

impl MarkovChain {
    pub fn new(state_values: Vec<f64>, transition: Matrix, collection_dist: Vec<f64>) -> Result<Self> {
        let n = state_values.len();
        if n < 2 {
            return Err(Error::InvalidChain(format!("need at least 2 states, got {n}")));
        }
        if state_values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidChain("state values must be strictly increasing".into()));
        }
        if transition.dim() != n {
            return Err(Error::LengthMismatch { expected: n, found: transition.dim() });
        }
        if collection_dist.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: collection_dist.len() });
        }
        check_stochastic(&transition)?;
        check_distribution("collection distribution", &collection_dist)?;
        Ok(Self { state_values, transition, collection_dist })
    }

    /// Replaces the collection-time distribution.
    pub fn with_collection_dist(self, collection_dist: Vec<f64>) -> Result<Self> {
        Self::new(self.state_values, self.transition, collection_dist)
    }

    pub fn num_states(&self) -> usize {
        self.state_values.len()
    }

    pub fn state_values(&self) -> &[f64] {
        &self.state_values
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn collection_dist(&self) -> &[f64] {
        &self.collection_dist
    }

    /// Smallest and largest state value.
    pub fn value_range(&self) -> (f64, f64) {
        (self.state_values[0], self.state_values[self.state_values.len() - 1])
    }

    /// `transition^t`.
    pub fn t_step_transition(&self, t: u32) -> Matrix {
        self.transition.pow(t)
    }

    /// Distribution of the state `t` steps after collection.
    pub fn marginal_at(&self, t: u32) -> Vec<f64> {
        self.t_step_transition(t).left_mul(&self.collection_dist)
    }

    /// Time reversal of the `t`-step kernel:
    /// `R(x, y) = Pr[Z_0 = y | Z_t = x] = start(y) P_t(y, x) / (start · P_t)(x)`.
    ///
    /// `start` is the distribution at the earlier time. With a stationary
    /// `start` this is `start(y) P_t(y, x) / start(x)`. Fails if some state
    /// has zero probability at time `t`.
    pub fn reverse_kernel(&self, t: u32, start: &[f64]) -> Result<Matrix> {
        let n = self.num_states();
        if start.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: start.len() });
        }
        let pt = self.t_step_transition(t);
        let cond = pt.left_mul(start);
        let mut rows = Vec::with_capacity(n);
        for x in 0..n {
            if cond[x] <= 0.0 {
                return Err(Error::Unreachable { state: x });
            }
            rows.push(self.reverse_row(&pt, start, cond[x], x));
        }
        Matrix::from_rows(&rows)
    }

    fn reverse_row(&self, pt: &Matrix, start: &[f64], cond_x: f64, x: usize) -> Vec<f64> {
        (0..self.num_states()).map(|y| start[y] * pt.get(y, x) / cond_x).collect()
    }

    /// Exact `Δ(t)`: the largest TV distance between rows of the reverse
    /// kernel built from the collection distribution.
    ///
    /// Only states reachable at time `t` can be conditioned on, so pairs are
    /// taken over the support of `marginal_at(t)`. With a single reachable
    /// state nothing can be distinguished and the result is 0.
    pub fn delta_exact(&self, t: u32) -> Result<f64> {
        let pt = self.t_step_transition(t);
        let start = &self.collection_dist;
        let cond = pt.left_mul(start);
        let rows: Vec<Vec<f64>> = (0..self.num_states())
            .filter(|&x| cond[x] > 0.0)
            .map(|x| self.reverse_row(&pt, start, cond[x], x))
            .collect();
        let mut best = 0.0f64;
        for a in 0..rows.len() {
            for b in (a + 1)..rows.len() {
                best = best.max(tv_distance(&rows[a], &rows[b])?);
            }
        }
        Ok(best.min(1.0))
    }

    /// Second-largest eigenvalue modulus of the transition matrix: the
    /// largest modulus once one copy of the eigenvalue 1 is removed.
    pub fn slem(&self) -> Result<f64> {
        let ev = self.transition.eigenvalues()?;
        let unit = ev
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = math::hypot(a.1.re - 1.0, a.1.im);
                let db = math::hypot(b.1.re - 1.0, b.1.im);
                da.partial_cmp(&db).unwrap_or(core::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
            .ok_or(Error::NoConvergence { iterations: 0 })?;
        let second = ev
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != unit)
            .map(|(_, e)| e.modulus())
            .fold(0.0f64, f64::max);
        Ok(second.clamp(0.0, 1.0))
    }

    /// Spectral upper bound on `Δ(t)`:
    /// `min{1, max_Z sqrt((1 − π_t(Z)) / π_t(Z)) · slem^t}` with
    /// `π_t = marginal_at(t)`. States with `π_t(Z) = 0` are skipped; if none
    /// remain the bound is 1.
    pub fn delta_spectral_bound(&self, t: u32) -> Result<f64> {
        let gamma = self.slem()?;
        Ok(self.delta_spectral_bound_with_slem(t, gamma))
    }

    /// [`Self::delta_spectral_bound`] with a precomputed SLEM.
    pub fn delta_spectral_bound_with_slem(&self, t: u32, slem: f64) -> f64 {
        let pi_t = self.marginal_at(t);
        let worst = pi_t
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| math::sqrt((1.0 - p).max(0.0) / p))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        match worst {
            None => 1.0,
            Some(w) => {
                let decay = if t == 0 { 1.0 } else { math::powi(slem, t) };
                let raw = w * decay;
                if raw.is_nan() { 1.0 } else { raw.min(1.0) }
            }
        }
    }

    /// `I(Z_collect ; Z_{collect+gap})` in nats, exact on the finite chain.
    pub fn mutual_information_age(&self, gap: u32) -> f64 {
        let pt = self.t_step_transition(gap);
        let px = &self.collection_dist;
        let py = pt.left_mul(px);
        let n = self.num_states();
        let mut acc = 0.0;
        for x in 0..n {
            if px[x] <= 0.0 {
                continue;
            }
            for y in 0..n {
                let joint = px[x] * pt.get(x, y);
                if joint > 0.0 && py[y] > 0.0 {
                    // joint / (px * py) = P_t(x, y) / py(y)
                    acc += joint * math::ln(pt.get(x, y) / py[y]);
                }
            }
        }
        acc.max(0.0)
    }

    /// Shannon entropy of the collection distribution in nats.
    pub fn collection_entropy(&self) -> f64 {
        entropy(&self.collection_dist)
    }
}

/// The displayed four-state (in general `n`-state) cyclic chain: `1 − q` on
/// the diagonal and `q` one state up, wrapping from the last state to the
/// first. The collection distribution is uniform; replace it with
/// [`MarkovChain::with_collection_dist`].
pub fn cyclic_chain(n: usize, q: f64, state_values: Vec<f64>) -> Result<MarkovChain> {
    if !(0.0..=1.0).contains(&q) {
        return Err(crate::error::domain("q", q, "[0, 1]"));
    }
    if n < 2 {
        return Err(Error::InvalidChain(format!("need at least 2 states, got {n}")));
    }
    if state_values.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: state_values.len() });
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0 - q;
        data[i * n + (i + 1) % n] += q;
    }
    let transition = Matrix::from_row_major(n, data)?;
    MarkovChain::new(state_values, transition, vec![1.0 / n as f64; n])
}

/// Total-variation distance, `½ ‖p − q‖₁`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { expected: p.len(), found: q.len() });
    }
    let s: f64 = p.iter().zip(q).map(|(a, b)| math::abs(a - b)).sum();
    Ok((0.5 * s).min(1.0))
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * math::ln(x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const WH: [f64; 4] = [20.0, 50.0, 100.0, 200.0];

    fn cyc(q: f64) -> MarkovChain {
        cyclic_chain(4, q, WH.to_vec()).unwrap()
    }

    fn uniform_chain(n: usize) -> MarkovChain {
        let vals: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let t = Matrix::from_row_major(n, vec![1.0 / n as f64; n * n]).unwrap();
        MarkovChain::new(vals, t, vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn cyclic_rows_match_displayed_matrix() {
        let c = cyc(0.1);
        assert_eq!(c.transition().row(0), &[0.9, 0.1, 0.0, 0.0]);
        let c = cyc(0.6);
        assert_eq!(c.transition().row(3), &[0.6, 0.0, 0.0, 0.4]);
        assert_eq!(*cyc(0.0).transition(), Matrix::identity(4));
    }

    #[test]
    fn cyclic_rejects_bad_arguments() {
        assert!(cyclic_chain(4, 1.5, WH.to_vec()).is_err());
        assert!(cyclic_chain(4, -0.1, WH.to_vec()).is_err());
        assert!(cyclic_chain(1, 0.5, vec![1.0]).is_err());
        assert!(cyclic_chain(4, 0.5, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn chain_validation() {
        let bad = Matrix::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap();
        assert_eq!(
            MarkovChain::new(vec![0.0, 1.0], bad, vec![0.5, 0.5]),
            Err(Error::NotStochastic { row: 0, sum: 0.9 })
        );
        let ok = Matrix::identity(2);
        assert!(MarkovChain::new(vec![1.0, 0.0], ok.clone(), vec![0.5, 0.5]).is_err());
        assert!(MarkovChain::new(vec![0.0, 1.0], ok, vec![0.6, 0.5]).is_err());
    }

    #[test]
    fn two_step_entry_is_q_squared() {
        let p2 = cyc(0.6).t_step_transition(2);
        assert!((p2.get(0, 2) - 0.36).abs() < 1e-15);
    }

    #[test]
    fn one_step_marginal() {
        let c = cyc(0.1).with_collection_dist(vec![0.8, 0.2, 0.0, 0.0]).unwrap();
        let m = c.marginal_at(1);
        let want = [0.72, 0.26, 0.02, 0.0];
        for (a, b) in m.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(c.marginal_at(0), c.collection_dist());
    }

    #[test]
    fn marginal_converges_to_stationary() {
        // Non-symmetric ergodic chain; stationary vector from the left null space of P - I.
        let t = Matrix::from_rows(&[vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2]]).unwrap();
        let c = MarkovChain::new(vec![0.0, 1.0, 2.0], t.clone(), vec![1.0, 0.0, 0.0]).unwrap();
        // Solve π (P - I) = 0 with Σπ = 1 by Cramer on two equations plus normalization.
        let a = [
            [t.get(0, 0) - 1.0, t.get(1, 0), t.get(2, 0)],
            [t.get(0, 1), t.get(1, 1) - 1.0, t.get(2, 1)],
            [1.0, 1.0, 1.0],
        ];
        let b = [0.0, 0.0, 1.0];
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(a);
        let pi: Vec<f64> = (0..3)
            .map(|k| {
                let mut m = a;
                for r in 0..3 {
                    m[r][k] = b[r];
                }
                det(m) / d
            })
            .collect();
        let late = c.marginal_at(200);
        for (x, y) in late.iter().zip(&pi) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn reverse_kernel_cases() {
        // symmetric (reversible) chain with uniform stationary base
        let t = Matrix::from_rows(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let c = MarkovChain::new(vec![0.0, 1.0], t, vec![0.5, 0.5]).unwrap();
        let r = c.reverse_kernel(3, &[0.5, 0.5]).unwrap();
        let p3 = c.t_step_transition(3);
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.get(i, j) - p3.get(i, j)).abs() < 1e-15);
            }
        }
        let u = uniform_chain(4);
        let r = u.reverse_kernel(1, &[0.25; 4]).unwrap();
        for row in r.rows() {
            for &x in row {
                assert!((x - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reverse_kernel_from_nonstationary_start() {
        let c = cyc(0.3);
        let start = [0.0, 0.1, 0.5, 0.4];
        let r = c.reverse_kernel(2, &start).unwrap();
        let p2 = c.t_step_transition(2);
        let cond = p2.left_mul(&start);
        for x in 0..4 {
            let s: f64 = r.row(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
            for y in 0..4 {
                let direct = start[y] * p2.get(y, x) / cond[x];
                assert!((r.get(x, y) - direct).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reverse_kernel_reports_unreachable_state() {
        let c = cyc(0.1);
        let err = c.reverse_kernel(1, &[0.8, 0.2, 0.0, 0.0]).unwrap_err();
        assert_eq!(err, Error::Unreachable { state: 3 });
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        // subset enumeration oracle: max over A of |p(A) - q(A)|
        let p = [0.8, 0.2];
        let q = [0.5, 0.5];
        let mut best = 0.0f64;
        for mask in 0..4u32 {
            let (mut a, mut b) = (0.0f64, 0.0f64);
            for i in 0..2 {
                if mask & (1 << i) != 0 {
                    a += p[i];
                    b += q[i];
                }
            }
            best = best.max((a - b).abs());
        }
        assert!((best - 0.3).abs() < 1e-15);
        assert!((tv_distance(&p, &q).unwrap() - best).abs() < 1e-15);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn delta_exact_extremes() {
        for t in 1..6 {
            assert_eq!(cyc(0.0).delta_exact(t).unwrap(), 1.0);
            assert!(uniform_chain(4).delta_exact(t).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn delta_exact_brute_force() {
        let c = cyc(0.3);
        let t = 4;
        let pt = c.t_step_transition(t);
        let pi = [0.25; 4];
        let cond = pt.left_mul(&pi);
        let mut best = 0.0f64;
        for x in 0..4 {
            for x2 in 0..4 {
                let s: f64 = (0..4)
                    .map(|y| (pi[y] * pt.get(y, x) / cond[x] - pi[y] * pt.get(y, x2) / cond[x2]).abs())
                    .sum();
                best = best.max(0.5 * s);
            }
        }
        let d = c.delta_exact(t).unwrap();
        assert!((d - best).abs() < 1e-15);
        assert!(d > 0.0 && d < 1.0);
    }

    #[test]
    fn slem_examples() {
        assert!(uniform_chain(4).slem().unwrap() < 1e-12);
        assert!((cyc(0.0).slem().unwrap() - 1.0).abs() < 1e-12);
        assert!((cyc(0.1).slem().unwrap() - 0.82f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spectral_bound_examples() {
        let c = cyc(0.1).with_collection_dist(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        assert_eq!(c.delta_spectral_bound(0).unwrap(), 1.0);
        for t in 1..5 {
            assert!(uniform_chain(4).delta_spectral_bound(t).unwrap() < 1e-12);
        }
        // circulant oracle: slem = |1 - q + q i| for q = 0.6
        let gamma = (0.4f64 * 0.4 + 0.6 * 0.6).sqrt();
        let want = (3.0f64.sqrt() * gamma.powi(6)).min(1.0);
        let got = cyc(0.6).delta_spectral_bound(6).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.2436).abs() < 1e-3);
    }

    #[test]
    fn spectral_bound_skips_zero_states() {
        // all mass on one state at t=0: no other state to compare, term is 0
        let c = cyc(0.5).with_collection_dist(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.delta_spectral_bound(0).unwrap(), 0.0);
    }

    #[test]
    fn mutual_information_cases() {
        let c = cyc(0.3).with_collection_dist(vec![0.0, 0.1, 0.5, 0.4]).unwrap();
        assert!((c.mutual_information_age(0) - c.collection_entropy()).abs() < 1e-12);
        assert!(uniform_chain(4).mutual_information_age(1).abs() < 1e-15);

        // brute-force double sum on the joint
        let p2 = c.t_step_transition(2);
        let px = c.collection_dist();
        let mut joint = [[0.0; 4]; 4];
        for x in 0..4 {
            for y in 0..4 {
                joint[x][y] = px[x] * p2.get(x, y);
            }
        }
        let mx: Vec<f64> = (0..4).map(|x| joint[x].iter().sum()).collect();
        let my: Vec<f64> = (0..4).map(|y| (0..4).map(|x| joint[x][y]).sum()).collect();
        let mut mi = 0.0;
        for x in 0..4 {
            for y in 0..4 {
                if joint[x][y] > 0.0 {
                    mi += joint[x][y] * (joint[x][y] / (mx[x] * my[y])).ln();
                }
            }
        }
        let got = c.mutual_information_age(2);
        assert!(got > 0.0);
        assert!((got - mi).abs() < 1e-12);
    }
}
