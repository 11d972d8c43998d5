//! Batched nonparametric k-nearest-neighbor UCB.
//!
//! Within batch `m` every arm's index is computed from the snapshot of
//! rounds `1..=t_{m-1}` only:
//!
//! ```text
//! ucb_a(x) = mean of the k nearest arm-a rewards
//!          + sqrt( 2 sigma^2 / k * ln(d * t_{m-1}^(2d+3) * K) )
//!          + L * (distance to the k-th neighbor)
//! ```
//!
//! where `k` is chosen per query by [`crate::knn::Neighborhood::adaptive_k`].
//! An arm without a usable neighbor gets `+inf`, and the arm with the largest
//! index is played, ties broken uniformly at random.

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::PolicyError;
use crate::knn::{AdaptiveK, ArmHistory, Context, Sample};
use crate::policy::{break_tie, BatchClock, BatchedPolicy};
use crate::schedule::BatchGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankUcbConfig {
    /// Lipschitz constant `L` of the mean reward functions.
    pub lipschitz: f64,
    /// Sub-Gaussian noise scale `sigma`.
    pub sigma: f64,
    pub num_arms: usize,
    pub dim: usize,
    /// Seed of the stream used only for tie-breaking.
    pub tie_seed: u64,
}

impl BankUcbConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(PolicyError::Config(format!(
                "lipschitz constant must be positive, got {}",
                self.lipschitz
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(PolicyError::Config(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if self.num_arms < 2 {
            return Err(PolicyError::Config(format!(
                "need at least 2 arms, got {}",
                self.num_arms
            )));
        }
        if self.dim == 0 {
            return Err(PolicyError::Config("dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// An upper confidence bound: finite, or `+inf` for an arm without usable data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UcbValue {
    Finite(f64),
    Infinite,
}

impl UcbValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            UcbValue::Finite(v) => Some(v),
            UcbValue::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, UcbValue::Infinite)
    }

    fn cmp_index(&self, other: &Self) -> Ordering {
        match (self, other) {
            (UcbValue::Infinite, UcbValue::Infinite) => Ordering::Equal,
            (UcbValue::Infinite, _) => Ordering::Greater,
            (_, UcbValue::Infinite) => Ordering::Less,
            (UcbValue::Finite(a), UcbValue::Finite(b)) => a.total_cmp(b),
        }
    }
}

/// The noise width for a `k`-neighbor average given data through `t_prev`.
///
/// The logarithm is expanded as `ln d + (2d + 3) ln t_prev + ln K` so large
/// dimensions do not overflow.
pub fn xi(k: usize, cfg: &BankUcbConfig, t_prev: u64) -> f64 {
    let d = cfg.dim as f64;
    let log_term = d.ln() + (2.0 * d + 3.0) * (t_prev as f64).ln() + (cfg.num_arms as f64).ln();
    (2.0 * cfg.sigma * cfg.sigma / k as f64 * log_term).sqrt()
}

/// The frozen snapshot plus the current batch's pending observations.
#[derive(Debug, Clone)]
pub struct PolicyState {
    frozen: ArmHistory,
    pending: Vec<Sample>,
    clock: BatchClock,
}

impl PolicyState {
    pub fn new(num_arms: usize, dim: usize, grid: BatchGrid) -> Self {
        Self {
            frozen: ArmHistory::new(num_arms, dim),
            pending: Vec::new(),
            clock: BatchClock::new(grid),
        }
    }

    pub fn frozen(&self) -> &ArmHistory {
        &self.frozen
    }

    pub fn pending(&self) -> &[Sample] {
        &self.pending
    }

    pub fn grid(&self) -> &BatchGrid {
        self.clock.grid()
    }

    /// Current batch index `m` (1-based).
    pub fn batch(&self) -> usize {
        self.clock.batch()
    }

    pub fn round(&self) -> u64 {
        self.clock.round()
    }

    /// `t_{m-1}`.
    pub fn frozen_horizon(&self) -> u64 {
        self.clock.frozen_horizon()
    }

    fn record(&mut self, s: Sample) -> Result<(), PolicyError> {
        if s.context.dim() != self.frozen.dim() {
            return Err(crate::error::KnnError::DimensionMismatch {
                expected: self.frozen.dim(),
                found: s.context.dim(),
            }
            .into());
        }
        if s.arm >= self.frozen.num_arms() {
            return Err(crate::error::KnnError::UnknownArm {
                arm: s.arm,
                num_arms: self.frozen.num_arms(),
            }
            .into());
        }
        self.clock.check_record(s.time)?;
        self.pending.push(s);
        Ok(())
    }

    fn commit(&mut self) -> Result<(), PolicyError> {
        self.clock.commit()?;
        // Merge in time order so the snapshot does not depend on the order
        // in which observations arrived.
        self.pending.sort_by_key(|s| s.time);
        for s in self.pending.drain(..) {
            self.frozen.insert(s)?;
        }
        Ok(())
    }
}

/// The BaNk-UCB policy.
#[derive(Debug, Clone)]
pub struct BankUcb {
    cfg: BankUcbConfig,
    state: PolicyState,
    ties: ChaCha8Rng,
}

impl BankUcb {
    pub fn new(cfg: BankUcbConfig, grid: BatchGrid) -> Result<Self, PolicyError> {
        Self::with_rng(cfg, grid, ChaCha8Rng::seed_from_u64(cfg.tie_seed))
    }

    /// Like [`BankUcb::new`] but with an explicit tie-breaking stream.
    pub fn with_rng(cfg: BankUcbConfig, grid: BatchGrid, ties: ChaCha8Rng) -> Result<Self, PolicyError> {
        cfg.validate()?;
        Ok(Self {
            state: PolicyState::new(cfg.num_arms, cfg.dim, grid),
            cfg,
            ties,
        })
    }

    pub fn config(&self) -> &BankUcbConfig {
        &self.cfg
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    /// The index of `arm` at `x`, computed from the frozen snapshot.
    pub fn ucb(&self, x: &Context, arm: usize) -> Result<UcbValue, PolicyError> {
        let t_prev = self.state.frozen_horizon();
        let mut hood = self.state.frozen.neighborhood(x, arm)?;
        match hood.adaptive_k(self.cfg.lipschitz, t_prev) {
            AdaptiveK::NoUsableNeighbor => Ok(UcbValue::Infinite),
            AdaptiveK::Neighbors(k) => {
                let stats = hood.stats(k)?;
                Ok(UcbValue::Finite(
                    stats.mean + xi(k, &self.cfg, t_prev) + self.cfg.lipschitz * stats.radius,
                ))
            }
        }
    }

    pub fn ucb_values(&self, x: &Context) -> Result<Vec<UcbValue>, PolicyError> {
        (0..self.cfg.num_arms).map(|a| self.ucb(x, a)).collect()
    }
}

/// Indices attaining the maximum UCB.
pub fn argmax_set(values: &[UcbValue]) -> Vec<usize> {
    let mut best: Vec<usize> = Vec::with_capacity(values.len());
    for (a, v) in values.iter().enumerate() {
        match best.first().map(|&b| v.cmp_index(&values[b])) {
            None | Some(Ordering::Equal) => best.push(a),
            Some(Ordering::Greater) => {
                best.clear();
                best.push(a);
            }
            Some(Ordering::Less) => {}
        }
    }
    best
}

impl BatchedPolicy for BankUcb {
    fn name(&self) -> &'static str {
        "bank_ucb"
    }

    fn select_action(&mut self, x: &Context) -> Result<usize, PolicyError> {
        self.state.clock.interval()?;
        let values = self.ucb_values(x)?;
        self.state.clock.advance()?;
        Ok(break_tie(&argmax_set(&values), &mut self.ties))
    }

    fn record(&mut self, sample: Sample) -> Result<(), PolicyError> {
        self.state.record(sample)
    }

    fn commit_batch(&mut self) -> Result<(), PolicyError> {
        self.state.commit()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(sigma: f64) -> BankUcbConfig {
        BankUcbConfig {
            lipschitz: 1.0,
            sigma,
            num_arms: 2,
            dim: 2,
            tie_seed: 9,
        }
    }

    fn ctx(c: &[f64]) -> Context {
        Context::new(c.to_vec()).unwrap()
    }

    // A policy whose first batch ends at `t_prev` and whose arm-0 history
    // holds `points` (coords, reward) at rounds 1.. and arm 1 the rest.
    fn primed(sigma: f64, t_prev: u64, points: &[([f64; 2], f64)]) -> BankUcb {
        let grid = BatchGrid::from_endpoints(vec![0, t_prev, t_prev + 10]).unwrap();
        let mut p = BankUcb::new(cfg(sigma), grid).unwrap();
        let x = ctx(&[0.0, 0.0]);
        for _ in 0..t_prev {
            p.select_action(&x).unwrap();
        }
        for t in 1..=t_prev {
            let (c, y, arm) = match points.get(t as usize - 1) {
                Some((c, y)) => (ctx(c), *y, 0),
                None => (ctx(&[0.9, 0.9]), 0.0, 1),
            };
            p.record(Sample::new(c, arm, y, t)).unwrap();
        }
        p.commit_batch().unwrap();
        p
    }

    #[test]
    fn xi_values() {
        assert_eq!(xi(3, &cfg(0.0), 100), 0.0);
        let expected = (0.5 * (2f64.ln() + 7.0 * 100f64.ln() + 2f64.ln())).sqrt();
        assert!((xi(4, &cfg(1.0), 100) - expected).abs() < 1e-12);
        assert!((xi(4, &cfg(1.0), 100) - 4.100).abs() < 1e-3);
        assert!((xi(8, &cfg(1.0), 100) - xi(4, &cfg(1.0), 100) / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn xi_is_finite_in_high_dimension() {
        let c = BankUcbConfig {
            dim: 14,
            ..cfg(0.5)
        };
        assert!(xi(1, &c, 10_000).is_finite());
    }

    #[test]
    fn empty_arm_is_infinite() {
        let grid = BatchGrid::from_endpoints(vec![0, 5, 10]).unwrap();
        let p = BankUcb::new(cfg(1.0), grid).unwrap();
        assert_eq!(p.ucb(&ctx(&[0.0, 0.0]), 0).unwrap(), UcbValue::Infinite);
    }

    #[test]
    fn noiseless_exact_neighbor_returns_reward() {
        let p = primed(0.0, 4, &[([0.0, 0.0], 0.7)]);
        assert_eq!(p.ucb(&ctx(&[0.0, 0.0]), 0).unwrap(), UcbValue::Finite(0.7));
    }

    #[test]
    fn composed_ucb_value() {
        let pts = [([0.1, 0.0], 1.0), ([0.2, 0.0], 2.0), ([0.3, 0.0], 3.0)];
        let p = primed(1.0, 100, &pts);
        let expected = 2.0 + ((2.0 / 3.0) * (2f64.ln() + 7.0 * 100f64.ln() + 2f64.ln())).sqrt() + 0.3;
        let got = p.ucb(&ctx(&[0.0, 0.0]), 0).unwrap().finite().unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 7.034).abs() < 1e-3);
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(
            argmax_set(&[UcbValue::Finite(3.2), UcbValue::Finite(7.0)]),
            vec![1]
        );
        assert_eq!(
            argmax_set(&[UcbValue::Infinite, UcbValue::Finite(7.0), UcbValue::Infinite]),
            vec![0, 2]
        );
        assert_eq!(
            argmax_set(&[UcbValue::Finite(1.0), UcbValue::Finite(1.0)]),
            vec![0, 1]
        );
    }

    #[test]
    fn first_batch_spreads_over_arms() {
        let grid = BatchGrid::from_endpoints(vec![0, 200, 400]).unwrap();
        let mut p = BankUcb::new(cfg(0.5), grid).unwrap();
        let x = ctx(&[0.0, 0.0]);
        let ones = (0..200).filter(|_| p.select_action(&x).unwrap() == 1).count();
        assert!(ones > 60 && ones < 140, "{ones}");
    }

    #[test]
    fn replay_is_deterministic() {
        let grid = BatchGrid::from_endpoints(vec![0, 20, 40]).unwrap();
        let x = ctx(&[0.3, 0.1]);
        let play = || {
            let mut p = BankUcb::new(cfg(0.5), grid.clone()).unwrap();
            (0..20).map(|_| p.select_action(&x).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(play(), play());
    }

    #[test]
    fn record_is_invisible_until_commit() {
        let pts = [([0.1, 0.0], 1.0), ([0.2, 0.0], 2.0)];
        let mut p = primed(0.5, 10, &pts);
        let x = ctx(&[0.0, 0.0]);
        let before = p.ucb_values(&x).unwrap();
        p.select_action(&x).unwrap();
        p.record(Sample::new(ctx(&[0.0, 0.0]), 0, 100.0, 11)).unwrap();
        assert_eq!(p.ucb_values(&x).unwrap(), before);
        assert_eq!(p.state().pending().len(), 1);
    }

    #[test]
    fn record_rejects_out_of_batch_times() {
        let mut p = primed(0.5, 10, &[]);
        let err = p.record(Sample::new(ctx(&[0.0, 0.0]), 0, 1.0, 10));
        assert!(matches!(err, Err(PolicyError::OutsideBatch { .. })));
        let err = p.record(Sample::new(ctx(&[0.0, 0.0]), 0, 1.0, 21));
        assert!(matches!(err, Err(PolicyError::OutsideBatch { .. })));
        let err = p.record(Sample::new(ctx(&[0.0]), 0, 1.0, 11));
        assert!(matches!(err, Err(PolicyError::Knn(_))));
    }

    #[test]
    fn commit_mid_batch_fails() {
        let grid = BatchGrid::from_endpoints(vec![0, 5, 10]).unwrap();
        let mut p = BankUcb::new(cfg(0.5), grid).unwrap();
        p.select_action(&ctx(&[0.0, 0.0])).unwrap();
        assert!(matches!(
            p.commit_batch(),
            Err(PolicyError::CommitMidBatch { .. })
        ));
    }

    #[test]
    fn empty_commit_advances_batch() {
        let grid = BatchGrid::from_endpoints(vec![0, 3, 10]).unwrap();
        let mut p = BankUcb::new(cfg(0.5), grid).unwrap();
        for _ in 0..3 {
            p.select_action(&ctx(&[0.0, 0.0])).unwrap();
        }
        p.commit_batch().unwrap();
        assert_eq!(p.state().batch(), 2);
        assert_eq!(p.state().frozen_horizon(), 3);
        assert_eq!(p.state().frozen().total(), 0);
    }

    #[test]
    fn commit_matches_rebuilt_snapshot() {
        let pts = [([0.1, 0.2], 1.0), ([0.5, 0.2], 0.3), ([-0.3, 0.4], -1.0)];
        let p = primed(0.5, 8, &pts);
        let mut rebuilt = ArmHistory::new(2, 2);
        for t in 1..=8u64 {
            let s = match pts.get(t as usize - 1) {
                Some((c, y)) => Sample::new(ctx(c), 0, *y, t),
                None => Sample::new(ctx(&[0.9, 0.9]), 1, 0.0, t),
            };
            rebuilt.insert(s).unwrap();
        }
        let x = ctx(&[0.0, 0.1]);
        for arm in 0..2 {
            let n = rebuilt.count(arm);
            assert_eq!(
                p.state().frozen().knn_distances(&x, arm, n).unwrap(),
                rebuilt.knn_distances(&x, arm, n).unwrap()
            );
        }
    }

    #[test]
    fn rejects_bad_config() {
        let grid = BatchGrid::from_endpoints(vec![0, 5]).unwrap();
        for bad in [
            BankUcbConfig { lipschitz: 0.0, ..cfg(0.5) },
            BankUcbConfig { sigma: -1.0, ..cfg(0.5) },
            BankUcbConfig { num_arms: 1, ..cfg(0.5) },
            BankUcbConfig { dim: 0, ..cfg(0.5) },
        ] {
            assert!(BankUcb::new(bad, grid.clone()).is_err());
        }
    }
}
