//! Per-arm nearest-neighbor storage and the adaptive neighborhood-size rule.
//!
//! Points are kept in flat per-arm arrays. A query computes every distance
//! from the query point to the arm's contexts once and then sorts only as
//! long a prefix as the caller actually reads, so the cost of a UCB
//! evaluation is linear in the arm's sample count plus `k log k`.
//!
//! Neighbors are ordered by `(distance, time)`: among equidistant contexts
//! the one observed earlier wins.

use std::cmp::Ordering;

use crate::error::KnnError;

/// A point in the context space.
#[derive(Debug, Clone, PartialEq)]
pub struct Context(Vec<f64>);

impl Context {
    /// Wraps a coordinate vector, rejecting empty or non-finite input.
    pub fn new(coords: Vec<f64>) -> Result<Self, KnnError> {
        if coords.is_empty() {
            return Err(KnnError::EmptyContext);
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(KnnError::NonFinite { index: i });
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Context) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

impl AsRef<[f64]> for Context {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One observed round: the context, the arm that was pulled, its reward and
/// the (1-based) round index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub context: Context,
    pub arm: usize,
    pub reward: f64,
    pub time: u64,
}

impl Sample {
    pub fn new(context: Context, arm: usize, reward: f64, time: u64) -> Self {
        Self {
            context,
            arm,
            reward,
            time,
        }
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Default)]
struct ArmPoints {
    // Row-major, `dim` values per sample.
    coords: Vec<f64>,
    rewards: Vec<f64>,
    times: Vec<u64>,
}

impl ArmPoints {
    fn len(&self) -> usize {
        self.times.len()
    }
}

/// Samples grouped by arm, with all times at or below a frozen horizon.
#[derive(Debug, Clone)]
pub struct ArmHistory {
    dim: usize,
    arms: Vec<ArmPoints>,
    horizon: u64,
}

/// Outcome of the adaptive neighborhood-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptiveK {
    /// Use the `k` nearest neighbors.
    Neighbors(usize),
    /// The arm has no data close enough to say anything; its UCB is `+inf`.
    NoUsableNeighbor,
}

/// Mean reward and radius of a k-nearest-neighbor set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborStats {
    pub mean: f64,
    pub radius: f64,
}

impl ArmHistory {
    pub fn new(num_arms: usize, dim: usize) -> Self {
        Self {
            dim,
            arms: vec![ArmPoints::default(); num_arms],
            horizon: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    /// Largest round index stored so far (0 when empty).
    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Number of samples stored for `arm`.
    pub fn count(&self, arm: usize) -> usize {
        self.arms.get(arm).map_or(0, ArmPoints::len)
    }

    pub fn total(&self) -> usize {
        self.arms.iter().map(ArmPoints::len).sum()
    }

    /// Appends a sample. Times must be strictly increasing across all arms.
    pub fn insert(&mut self, s: Sample) -> Result<(), KnnError> {
        if s.context.dim() != self.dim {
            return Err(KnnError::DimensionMismatch {
                expected: self.dim,
                found: s.context.dim(),
            });
        }
        if s.arm >= self.arms.len() {
            return Err(KnnError::UnknownArm {
                arm: s.arm,
                num_arms: self.arms.len(),
            });
        }
        if s.time == 0 || s.time <= self.horizon {
            return Err(KnnError::NonIncreasingTime {
                time: s.time,
                horizon: self.horizon,
            });
        }
        let arm = &mut self.arms[s.arm];
        arm.coords.extend_from_slice(s.context.coords());
        arm.rewards.push(s.reward);
        arm.times.push(s.time);
        self.horizon = s.time;
        Ok(())
    }

    /// Iterates over the stored samples of one arm in insertion order.
    pub fn samples(&self, arm: usize) -> impl Iterator<Item = (&[f64], f64, u64)> + '_ {
        let points = &self.arms[arm];
        points
            .coords
            .chunks_exact(self.dim.max(1))
            .zip(&points.rewards)
            .zip(&points.times)
            .map(|((c, r), t)| (c, *r, *t))
    }

    /// Lazily sorted distances from `x` to every context stored for `arm`.
    pub fn neighborhood(&self, x: &Context, arm: usize) -> Result<Neighborhood, KnnError> {
        if x.dim() != self.dim {
            return Err(KnnError::DimensionMismatch {
                expected: self.dim,
                found: x.dim(),
            });
        }
        let points = self.arms.get(arm).ok_or(KnnError::UnknownArm {
            arm,
            num_arms: self.arms.len(),
        })?;
        let entries = points
            .coords
            .chunks_exact(self.dim)
            .zip(&points.rewards)
            .zip(&points.times)
            .map(|((c, &reward), &time)| Neighbor {
                distance: euclidean(c, x.coords()),
                time,
                reward,
            })
            .collect();
        Ok(Neighborhood { entries, sorted: 0 })
    }

    /// The `j` smallest distances from `x` to the contexts of `arm`, ascending.
    pub fn knn_distances(&self, x: &Context, arm: usize, j: usize) -> Result<Vec<f64>, KnnError> {
        let mut hood = self.neighborhood(x, arm)?;
        hood.require(j)?;
        Ok(hood.prefix(j).iter().map(|n| n.distance).collect())
    }

    /// Largest `k` whose radius passes `L * d_k <= sqrt(ln(t_prev) / k)`.
    pub fn adaptive_k(
        &self,
        x: &Context,
        arm: usize,
        lipschitz: f64,
        t_prev: u64,
    ) -> Result<AdaptiveK, KnnError> {
        let mut hood = self.neighborhood(x, arm)?;
        Ok(hood.adaptive_k(lipschitz, t_prev))
    }

    /// Mean reward and radius of the exact `k`-nearest set of `arm` around `x`.
    pub fn neighbor_stats(
        &self,
        x: &Context,
        arm: usize,
        k: usize,
    ) -> Result<NeighborStats, KnnError> {
        let mut hood = self.neighborhood(x, arm)?;
        hood.stats(k)
    }
}

/// A stored context seen from a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub time: u64,
    pub reward: f64,
}

fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.time.cmp(&b.time))
}

/// All neighbors of one arm around a query point. The first `sorted` entries
/// are in final order and every later entry compares greater than them.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    entries: Vec<Neighbor>,
    sorted: usize,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn require(&mut self, j: usize) -> Result<(), KnnError> {
        if j > self.entries.len() {
            return Err(KnnError::InsufficientSamples {
                requested: j,
                available: self.entries.len(),
            });
        }
        if j <= self.sorted {
            return Ok(());
        }
        // Grow geometrically so a scan over j costs O(n + k log k) overall.
        let target = j.max(2 * self.sorted).max(16).min(self.entries.len());
        let rest = &mut self.entries[self.sorted..];
        let pivot = target - self.sorted;
        if pivot < rest.len() {
            rest.select_nth_unstable_by(pivot - 1, neighbor_order);
        }
        rest[..pivot].sort_unstable_by(neighbor_order);
        self.sorted = target;
        Ok(())
    }

    fn prefix(&self, j: usize) -> &[Neighbor] {
        debug_assert!(j <= self.sorted);
        &self.entries[..j]
    }

    /// The `j`-th nearest neighbor (1-based).
    pub fn nth(&mut self, j: usize) -> Result<Neighbor, KnnError> {
        if j == 0 {
            return Err(KnnError::ZeroNeighbors);
        }
        self.require(j)?;
        Ok(self.entries[j - 1])
    }

    /// The nearest `j` neighbors, in order.
    pub fn nearest(&mut self, j: usize) -> Result<&[Neighbor], KnnError> {
        self.require(j)?;
        Ok(self.prefix(j))
    }

    pub fn adaptive_k(&mut self, lipschitz: f64, t_prev: u64) -> AdaptiveK {
        if t_prev < 2 || self.entries.is_empty() {
            return AdaptiveK::NoUsableNeighbor;
        }
        let log_t = (t_prev as f64).ln();
        let d1 = self.nth(1).expect("nonempty").distance;
        if lipschitz * d1 > log_t.sqrt() {
            return AdaptiveK::NoUsableNeighbor;
        }
        // The feasible set is a prefix of 1..=n, so stop at the first failure.
        let n = self.entries.len();
        let mut k = 1;
        while k < n {
            let next = self.nth(k + 1).expect("k < n").distance;
            if lipschitz * next > (log_t / (k + 1) as f64).sqrt() {
                break;
            }
            k += 1;
        }
        AdaptiveK::Neighbors(k)
    }

    pub fn stats(&mut self, k: usize) -> Result<NeighborStats, KnnError> {
        if k == 0 {
            return Err(KnnError::ZeroNeighbors);
        }
        let set = self.nearest(k)?;
        let mean = set.iter().map(|n| n.reward).sum::<f64>() / k as f64;
        Ok(NeighborStats {
            mean,
            radius: set[k - 1].distance,
        })
    }
}
