//! Geometric batch grids.
//!
//! The horizon `T` is cut into `M` batches with endpoints
//! `t_1 = floor(a * d)` and `t_m = floor(a * t_{m-1}^gamma)`, where
//! `gamma = (1 + alpha) / (2 + d)` and the scale `a` is the smallest value
//! that makes the recursion reach `T` after `M` steps. The last endpoint is
//! then pinned to `T` exactly.
//!
//! ```
//! use bankucb::schedule::make_grid;
//!
//! let grid = make_grid(10_000, 5, 1.0, 2).unwrap();
//! assert_eq!(grid.endpoints().len(), 6);
//! assert_eq!(grid.horizon(), 10_000);
//! ```

use serde::Serialize;

use crate::error::GridError;

/// Relative resolution of the search over the scale `a`.
pub const SCALE_RESOLUTION: f64 = 1e-6;

/// `gamma = (1 + alpha) / (2 + d)`.
pub fn gamma(alpha: f64, dim: usize) -> Result<f64, GridError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(GridError::AlphaOutOfRange(alpha));
    }
    if dim == 0 {
        return Err(GridError::ZeroDimension);
    }
    Ok((1.0 + alpha) / (2.0 + dim as f64))
}

/// Parameters of the geometric recursion that produced a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridLaw {
    pub gamma: f64,
    pub scale: f64,
    pub dim: usize,
}

/// Batch endpoints `0 = t_0 < t_1 < ... < t_M = T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchGrid {
    endpoints: Vec<u64>,
    law: Option<GridLaw>,
}

impl BatchGrid {
    /// A grid from explicit endpoints. Fails unless the endpoints start at 0
    /// and increase strictly.
    pub fn from_endpoints(endpoints: Vec<u64>) -> Result<Self, GridError> {
        let horizon = endpoints.last().copied().unwrap_or(0);
        let grid = Self {
            endpoints,
            law: None,
        };
        if grid.endpoints.len() < 2 {
            return Err(GridError::ZeroBatches);
        }
        if !validate_grid(&grid, horizon) {
            return Err(GridError::Infeasible {
                horizon,
                batches: grid.endpoints.len() - 1,
                dim: 0,
            });
        }
        Ok(grid)
    }

    /// One batch per round: the fully sequential schedule `0, 1, ..., T`.
    pub fn sequential(horizon: u64) -> Result<Self, GridError> {
        if horizon == 0 {
            return Err(GridError::ZeroBatches);
        }
        Ok(Self {
            endpoints: (0..=horizon).collect(),
            law: None,
        })
    }

    pub fn endpoints(&self) -> &[u64] {
        &self.endpoints
    }

    /// `M`.
    pub fn num_batches(&self) -> usize {
        self.endpoints.len() - 1
    }

    /// `T`.
    pub fn horizon(&self) -> u64 {
        *self.endpoints.last().expect("grid has endpoints")
    }

    /// `t_m` for `m` in `0..=M`.
    pub fn endpoint(&self, m: usize) -> u64 {
        self.endpoints[m]
    }

    pub fn law(&self) -> Option<GridLaw> {
        self.law
    }

    pub fn gamma(&self) -> Option<f64> {
        self.law.map(|l| l.gamma)
    }

    pub fn scale(&self) -> Option<f64> {
        self.law.map(|l| l.scale)
    }

    /// 1-based batch index containing round `t`, or `None` outside `1..=T`.
    pub fn batch_of(&self, t: u64) -> Option<usize> {
        if t == 0 || t > self.horizon() {
            return None;
        }
        // First endpoint >= t.
        Some(self.endpoints.partition_point(|&e| e < t))
    }

    /// Interior endpoints `t_1, ..., t_{M-1}`.
    pub fn interior(&self) -> &[u64] {
        &self.endpoints[1..self.endpoints.len() - 1]
    }
}

fn recurse(scale: f64, gamma: f64, dim: usize, batches: usize) -> Vec<f64> {
    let mut ts = Vec::with_capacity(batches);
    let mut t = (scale * dim as f64).floor();
    ts.push(t);
    for _ in 1..batches {
        t = (scale * t.powf(gamma)).floor();
        ts.push(t);
    }
    ts
}

/// Builds the geometric grid for horizon `T` with `M` batches.
pub fn make_grid(horizon: u64, batches: usize, alpha: f64, dim: usize) -> Result<BatchGrid, GridError> {
    let gamma = gamma(alpha, dim)?;
    if batches == 0 {
        return Err(GridError::ZeroBatches);
    }
    if horizon < 2 * batches as u64 {
        return Err(GridError::HorizonTooShort { horizon, batches });
    }
    if batches == 1 {
        return Ok(BatchGrid {
            endpoints: vec![0, horizon],
            law: Some(GridLaw {
                gamma,
                scale: horizon as f64 / dim as f64,
                dim,
            }),
        });
    }

    // Search the lattice a_i = (1 + resolution)^i. The lattice does not depend
    // on T, so the chosen scale (and every endpoint) is monotone in T.
    let step = SCALE_RESOLUTION.ln_1p();
    let scale_at = |i: i64| (i as f64 * step).exp();
    let target = horizon as f64;
    let reaches = |i: i64| {
        recurse(scale_at(i), gamma, dim, batches)
            .last()
            .is_some_and(|&t| t >= target)
    };
    // a = 1/d gives t_1 = 1 and t_2 < T; a = T gives t_m >= T for m >= 2.
    let mut lo = ((1.0 / dim as f64).ln() / step).floor() as i64 - 1;
    let mut hi = (target.ln() / step).ceil() as i64 + 1;
    debug_assert!(!reaches(lo) && reaches(hi));
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let scale = scale_at(hi);
    let mut endpoints = vec![0u64];
    endpoints.extend(
        recurse(scale, gamma, dim, batches)
            .iter()
            .take(batches - 1)
            .map(|&t| t as u64),
    );
    endpoints.push(horizon);
    let grid = BatchGrid {
        endpoints,
        law: Some(GridLaw { gamma, scale, dim }),
    };
    if !validate_grid(&grid, horizon) {
        return Err(GridError::Infeasible {
            horizon,
            batches,
            dim,
        });
    }
    Ok(grid)
}

/// True iff `grid` starts at 0, increases strictly, ends at `horizon`, and
/// (when it carries a recursion law) follows it at every interior endpoint.
pub fn validate_grid(grid: &BatchGrid, horizon: u64) -> bool {
    let e = &grid.endpoints;
    if e.len() < 2 || e[0] != 0 || *e.last().unwrap() != horizon {
        return false;
    }
    if e.windows(2).any(|w| w[0] >= w[1]) {
        return false;
    }
    if let Some(law) = grid.law {
        let m_last = e.len() - 1;
        for m in 2..m_last {
            let expected = (law.scale * (e[m - 1] as f64).powf(law.gamma)).floor();
            if e[m] as f64 != expected {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(1.0, 2).unwrap(), 0.5);
        assert_eq!(gamma(1.0, 14).unwrap(), 0.125);
        assert!((gamma(0.5, 3).unwrap() - 0.3).abs() < 1e-15);
        assert!(gamma(0.0, 2).is_err());
        assert!(gamma(1.5, 2).is_err());
        assert!(gamma(f64::NAN, 2).is_err());
        assert_eq!(gamma(1.0, 0), Err(GridError::ZeroDimension));
    }

    #[test]
    fn single_batch() {
        let g = make_grid(37, 1, 1.0, 3).unwrap();
        assert_eq!(g.endpoints(), &[0, 37]);
    }

    #[test]
    fn headline_setting_grid() {
        let g = make_grid(10_000, 5, 1.0, 2).unwrap();
        let e = g.endpoints();
        assert_eq!(e.len(), 6);
        assert_eq!(e[0], 0);
        assert_eq!(e[5], 10_000);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        // Closed-form order of the scale: T^{(1-gamma)/(1-gamma^M)}.
        let closed = 10_000f64.powf(0.5 / (1.0 - 0.5f64.powi(5)));
        let a = g.scale().unwrap();
        assert!(a / closed > 0.5 && a / closed < 2.0, "a = {a}, closed = {closed}");
        assert!(validate_grid(&g, 10_000));
    }

    #[test]
    fn scale_is_minimal_on_lattice() {
        let g = make_grid(10_000, 5, 1.0, 2).unwrap();
        let a = g.scale().unwrap();
        let below = a / (1.0 + SCALE_RESOLUTION);
        let t_last = *recurse(below, 0.5, 2, 5).last().unwrap();
        assert!(t_last < 10_000.0);
        let t_last = *recurse(a, 0.5, 2, 5).last().unwrap();
        assert!(t_last >= 10_000.0);
    }

    #[test]
    fn log_rate_matches_geometric_sum() {
        let t = 1_000_000u64;
        let g = make_grid(t, 5, 1.0, 2).unwrap();
        let gam = 0.5f64;
        for m in 2..=4 {
            let predicted = (1.0 - gam.powi(m as i32)) / (1.0 - gam.powi(5));
            let observed = (g.endpoint(m) as f64).ln() / (t as f64).ln();
            assert!(
                (observed - predicted).abs() <= 0.15 * predicted,
                "m={m}: {observed} vs {predicted}"
            );
        }
    }

    #[test]
    fn rejects_short_horizon_and_zero_batches() {
        assert!(matches!(
            make_grid(5, 3, 1.0, 2),
            Err(GridError::HorizonTooShort { .. })
        ));
        assert_eq!(make_grid(10, 0, 1.0, 2), Err(GridError::ZeroBatches));
    }

    #[test]
    fn infeasible_when_endpoints_collide() {
        // High dimension makes t_1 = floor(a d) overshoot the later endpoints.
        assert!(matches!(
            make_grid(20, 4, 1.0, 14),
            Err(GridError::Infeasible { .. })
        ));
    }

    #[test]
    fn validate_examples() {
        let ok = BatchGrid {
            endpoints: vec![0, 5, 10],
            law: None,
        };
        assert!(validate_grid(&ok, 10));
        let dup = BatchGrid {
            endpoints: vec![0, 5, 5],
            law: None,
        };
        assert!(!validate_grid(&dup, 5));
        let short = BatchGrid {
            endpoints: vec![0, 5, 9],
            law: None,
        };
        assert!(!validate_grid(&short, 10));
        assert!(BatchGrid::from_endpoints(vec![0, 5, 5]).is_err());
        assert!(BatchGrid::from_endpoints(vec![1, 5]).is_err());
    }

    #[test]
    fn sequential_grid() {
        let g = BatchGrid::sequential(4).unwrap();
        assert_eq!(g.endpoints(), &[0, 1, 2, 3, 4]);
        assert_eq!(g.num_batches(), 4);
        assert!(validate_grid(&g, 4));
    }

    #[test]
    fn batch_lookup() {
        let g = BatchGrid::from_endpoints(vec![0, 3, 7, 10]).unwrap();
        assert_eq!(g.batch_of(0), None);
        assert_eq!(g.batch_of(1), Some(1));
        assert_eq!(g.batch_of(3), Some(1));
        assert_eq!(g.batch_of(4), Some(2));
        assert_eq!(g.batch_of(10), Some(3));
        assert_eq!(g.batch_of(11), None);
        assert_eq!(g.interior(), &[3, 7]);
    }

    proptest! {
        #[test]
        fn produced_grids_follow_the_recursion(
            horizon in 200u64..200_000,
            batches in 2usize..7,
            alpha in 0.05f64..=1.0,
            dim in 1usize..6,
        ) {
            if let Ok(g) = make_grid(horizon, batches, alpha, dim) {
                prop_assert!(validate_grid(&g, horizon));
                let law = g.law().unwrap();
                for m in 2..batches {
                    let expected = (law.scale * (g.endpoint(m - 1) as f64).powf(law.gamma)).floor() as u64;
                    prop_assert_eq!(g.endpoint(m), expected);
                }
            }
        }

        #[test]
        fn endpoints_monotone_in_horizon(
            horizon in 500u64..50_000,
            extra in 1u64..5_000,
            batches in 2usize..6,
            dim in 1usize..4,
        ) {
            let (Ok(a), Ok(b)) = (make_grid(horizon, batches, 1.0, dim), make_grid(horizon + extra, batches, 1.0, dim)) else {
                return Ok(());
            };
            for m in 0..=batches {
                prop_assert!(a.endpoint(m) <= b.endpoint(m));
            }
        }
    }
}
