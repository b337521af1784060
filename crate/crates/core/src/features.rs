//! State featurization for the Q-network.
//!
//! Layout, with `J` regions and `M` vehicles:
//!
//! | block                         | width |
//! |-------------------------------|-------|
//! | decision time                 | 1     |
//! | one-hot region of the request | J     |
//! | depot-to-customer travel time | 1     |
//! | vehicle return times          | M     |
//! | vehicle feasibility flags     | M     |
//! | vehicle insertion deltas      | M     |
//! | regional acceptance rates     | J     |
//!
//! Every entry is min-max normalized with bounds fixed from the geography,
//! so training and evaluation see identical scaling.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::DispatchState;
use crate::world::Geography;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn dimension(num_regions: usize, fleet_size: usize) -> usize {
    2 * num_regions + 2 + 3 * fleet_size
}

/// Name and raw-unit bounds of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Ordered feature schema for auditing.
pub fn schema(geo: &Geography, fleet_size: usize) -> Vec<FeatureSpec> {
    let t_max = geo.day_length_minutes;
    let spec = |name: String, max: f64| FeatureSpec { name, min: 0.0, max };
    let j = geo.num_regions();
    let mut out = Vec::with_capacity(dimension(j, fleet_size));
    out.push(spec("time_min".into(), t_max));
    out.extend((1..=j).map(|r| spec(format!("region_{r}"), 1.0)));
    out.push(spec("depot_travel_min".into(), t_max));
    out.extend((1..=fleet_size).map(|m| spec(format!("vehicle_{m}_return_min"), t_max)));
    out.extend((1..=fleet_size).map(|m| spec(format!("vehicle_{m}_feasible"), 1.0)));
    out.extend((1..=fleet_size).map(|m| spec(format!("vehicle_{m}_delta_min"), t_max)));
    out.extend((1..=j).map(|r| spec(format!("region_{r}_acceptance_rate"), 1.0)));
    out
}

#[inline]
fn unit(x: f64, upper: f64) -> f64 {
    (x / upper).clamp(0.0, 1.0)
}

/// Writes the normalized features of `state` into `out` (cleared first).
pub fn featurize_into(state: &DispatchState, geo: &Geography, out: &mut Vec<f64>) {
    let t_max = geo.day_length_minutes;
    // Travel times and deltas share the day length as their upper bound.
    let t_ub = t_max;
    out.clear();
    out.push(unit(state.time, t_max));
    out.extend((0..geo.num_regions()).map(|j| if j == state.request.region { 1.0 } else { 0.0 }));
    out.push(unit(geo.travel_time(&geo.depot, &state.request.location), t_ub));
    out.extend(state.fleet.vehicles.iter().map(|v| unit(v.ongoing_return, t_max)));
    let ins = &state.feasibility.insertions;
    out.extend(ins.iter().map(|i| if i.is_some() { 1.0 } else { 0.0 }));
    out.extend(ins.iter().map(|i| i.as_ref().map_or(0.0, |i| unit(i.delta, t_ub))));
    out.extend((0..geo.num_regions()).map(|j| state.counters.rate(j)));
}

pub fn featurize(state: &DispatchState, geo: &Geography) -> FeatureVector {
    let mut out = Vec::with_capacity(dimension(geo.num_regions(), state.fleet_size()));
    featurize_into(state, geo, &mut out);
    FeatureVector(out)
}
