//! Baseline and benchmark dispatch rules.

use alloc::boxed::Box;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{Action, DispatchState, EnvError};
use crate::eval;
use crate::world::{Geography, RequestInstance};

/// A dispatch rule mapping decision states to feasible actions.
pub trait Policy {
    fn decide(&mut self, state: &DispatchState, geo: &Geography) -> Action;

    /// Clears any per-day memory.
    fn start_day(&mut self) {}
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn decide(&mut self, state: &DispatchState, geo: &Geography) -> Action {
        (**self).decide(state, geo)
    }

    fn start_day(&mut self) {
        (**self).start_day()
    }
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn decide(&mut self, state: &DispatchState, geo: &Geography) -> Action {
        (**self).decide(state, geo)
    }

    fn start_day(&mut self) {
        (**self).start_day()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("bucket threshold must lie in [0, 1], got {0}")]
    Threshold(f64),
    #[error("reserved vehicles must be between 1 and {max}, got {got}")]
    Reserved { got: usize, max: usize },
    #[error("the reserved-vehicle policy needs exactly two regions, got {0}")]
    Regions(usize),
}

/// Accept whenever feasible, on the vehicle with the smallest insertion delta.
#[derive(Debug, Clone, Copy, Default)]
pub struct Myopic;

impl Policy for Myopic {
    fn decide(&mut self, state: &DispatchState, _geo: &Geography) -> Action {
        state.feasibility.cheapest().map_or(Action::Reject, Action::Assign)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RejectAll;

impl Policy for RejectAll {
    fn decide(&mut self, _state: &DispatchState, _geo: &Geography) -> Action {
        Action::Reject
    }
}

/// Caps each region's accumulated acceptance rate at a threshold after a
/// warm-up window during which every feasible request is accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bucket {
    threshold: f64,
    warmup_minutes: f64,
}

impl Bucket {
    pub const WARMUP_MINUTES: f64 = 30.0;

    pub fn new(threshold: f64) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(PolicyError::Threshold(threshold));
        }
        Ok(Self { threshold, warmup_minutes: Self::WARMUP_MINUTES })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

impl Policy for Bucket {
    fn decide(&mut self, state: &DispatchState, _geo: &Geography) -> Action {
        let Some(m) = state.feasibility.cheapest() else {
            return Action::Reject;
        };
        if state.time < self.warmup_minutes || state.counters.rate(state.request.region) < self.threshold {
            Action::Assign(m)
        } else {
            Action::Reject
        }
    }
}

/// Vehicles `0..reserved` serve only the first region, the rest only the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reserved {
    reserved: usize,
}

impl Reserved {
    pub fn new(reserved: usize, fleet_size: usize, num_regions: usize) -> Result<Self, PolicyError> {
        if num_regions != 2 {
            return Err(PolicyError::Regions(num_regions));
        }
        if reserved == 0 || reserved >= fleet_size {
            return Err(PolicyError::Reserved { got: reserved, max: fleet_size.saturating_sub(1) });
        }
        Ok(Self { reserved })
    }

    pub fn reserved(&self) -> usize {
        self.reserved
    }

    /// Whether vehicle `m` may serve requests from `region`.
    pub fn permits(&self, m: usize, region: usize) -> bool {
        (region == 0) == (m < self.reserved)
    }
}

impl Policy for Reserved {
    fn decide(&mut self, state: &DispatchState, _geo: &Geography) -> Action {
        let region = state.request.region;
        state.feasibility.cheapest_where(|m| self.permits(m, region)).map_or(Action::Reject, Action::Assign)
    }
}

/// Grid used by [`bucket_search`], in hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketGrid {
    pub start_percent: u32,
    pub step_percent: u32,
    /// Consecutive non-improving steps that end the search.
    pub patience: u32,
}

impl Default for BucketGrid {
    fn default() -> Self {
        Self { start_percent: 5, step_percent: 1, patience: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSearch {
    pub best: f64,
    pub best_r_min: f64,
    /// Every evaluated `(threshold, r_min)` pair in search order.
    pub curve: Vec<(f64, f64)>,
}

/// Pushes the bucket threshold upward from a small value until the minimum
/// regional rate on `instances` stops improving for `patience` steps, and
/// returns the best threshold seen.
pub fn bucket_search(
    geo: &Geography,
    instances: &[RequestInstance],
    fleet_size: usize,
    grid: BucketGrid,
) -> Result<BucketSearch, EnvError> {
    let mut err = None;
    let res = bucket_search_with(grid, |threshold| {
        if err.is_some() {
            return f64::NEG_INFINITY;
        }
        let mut policy = Bucket::new(threshold).expect("grid stays in [0, 1]");
        match eval::evaluate(&mut policy, geo, instances, fleet_size) {
            Ok(r) => r.r_min,
            Err(e) => {
                err = Some(e);
                f64::NEG_INFINITY
            }
        }
    });
    err.map_or(Ok(res), Err)
}

/// Search driver over an arbitrary `threshold -> r_min` evaluator.
pub fn bucket_search_with(grid: BucketGrid, mut r_min_at: impl FnMut(f64) -> f64) -> BucketSearch {
    let mut curve = Vec::new();
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    let mut stall = 0;
    let mut pct = grid.start_percent;
    while pct <= 100 {
        let threshold = f64::from(pct) / 100.0;
        let r = r_min_at(threshold);
        curve.push((threshold, r));
        if r > best.1 {
            best = (threshold, r);
            stall = 0;
        } else {
            stall += 1;
            if stall >= grid.patience {
                break;
            }
        }
        pct += grid.step_percent.max(1);
    }
    BucketSearch { best: best.0, best_r_min: best.1, curve }
}
