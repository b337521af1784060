//! The dispatch decision process: states, actions, rewards and transitions.
//!
//! A decision point occurs at every request. The dispatcher either rejects the
//! request or assigns it to one feasible vehicle, whose planned route then
//! receives the customer by cheapest insertion. Between decision points the
//! fleet advances: planned routes whose load start has passed become ongoing.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::routing::{Departure, Feasibility, FleetState};
use crate::world::{Geography, Request, RequestInstance};

/// Largest supported fleet; the action set must fit a 64-bit mask.
pub const MAX_FLEET: usize = 63;

/// Reduced action: reject, or assign to a vehicle (0-based index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Reject,
    Assign(usize),
}

impl Action {
    /// Network output index: 0 for reject, `m + 1` for vehicle `m`.
    pub fn index(self) -> usize {
        match self {
            Action::Reject => 0,
            Action::Assign(m) => m + 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Reject
        } else {
            Action::Assign(i - 1)
        }
    }

    pub fn accepts(self) -> bool {
        matches!(self, Action::Assign(_))
    }
}

/// Bit set over action indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionMask(pub u64);

impl ActionMask {
    pub fn contains(self, index: usize) -> bool {
        index < 64 && self.0 & (1 << index) != 0
    }

    pub fn insert(&mut self, index: usize) {
        self.0 |= 1 << index;
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }
}

/// Requests received and accepted so far, per region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCounters {
    pub total: Vec<u32>,
    pub accepted: Vec<u32>,
}

impl RegionCounters {
    pub fn new(num_regions: usize) -> Self {
        Self { total: alloc::vec![0; num_regions], accepted: alloc::vec![0; num_regions] }
    }

    pub fn num_regions(&self) -> usize {
        self.total.len()
    }

    pub fn record(&mut self, region: usize, accepted: bool) {
        self.total[region] += 1;
        if accepted {
            self.accepted[region] += 1;
        }
    }

    /// Acceptance rate of region `j`; zero while it has no requests.
    pub fn rate(&self, j: usize) -> f64 {
        ratio(self.accepted[j], self.total[j])
    }

    /// Minimum regional rate, counting regions without requests as zero.
    pub fn min_rate(&self) -> f64 {
        (0..self.num_regions()).map(|j| self.rate(j)).fold(f64::INFINITY, f64::min)
    }

    pub fn overall_rate(&self) -> f64 {
        ratio(self.accepted.iter().sum(), self.total.iter().sum())
    }

    pub fn total_requests(&self) -> u32 {
        self.total.iter().sum()
    }

    pub fn total_accepted(&self) -> u32 {
        self.accepted.iter().sum()
    }
}

fn ratio(a: u32, b: u32) -> f64 {
    if b == 0 {
        0.0
    } else {
        f64::from(a) / f64::from(b)
    }
}

/// Which immediate reward the process pays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RewardMode {
    /// Change in the weighted overall and minimum regional service rates.
    RateBased,
    /// Unit utility reward plus a fixed-denominator bonus for the least-served region.
    Modified,
    /// Per-region acceptance reward `p_j`.
    Priority { weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    #[serde(flatten)]
    pub mode: RewardMode,
    /// Fairness weight in `[0, 1]`; ignored by the priority mode.
    #[serde(default)]
    pub alpha: f64,
}

impl RewardSpec {
    pub fn modified(alpha: f64) -> Self {
        Self { mode: RewardMode::Modified, alpha }
    }

    pub fn rate_based(alpha: f64) -> Self {
        Self { mode: RewardMode::RateBased, alpha }
    }

    pub fn priority(weights: Vec<f64>) -> Self {
        Self { mode: RewardMode::Priority { weights }, alpha: 0.0 }
    }

    pub fn validate(&self, num_regions: usize) -> Result<(), EnvError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(EnvError::Alpha(self.alpha));
        }
        if let RewardMode::Priority { weights } = &self.mode {
            if weights.len() != num_regions || weights.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                return Err(EnvError::PriorityWeights);
            }
        }
        Ok(())
    }

    /// Immediate reward of `action` in `state`.
    pub fn reward(&self, state: &DispatchState, action: Action, geo: &Geography) -> f64 {
        match &self.mode {
            RewardMode::RateBased => reward_rate_based(state, action).combined(self.alpha),
            RewardMode::Modified => reward_modified(state, action, geo, self.alpha),
            RewardMode::Priority { weights } => reward_priority(state, action, weights),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("action {0:?} is not feasible in this state")]
    Infeasible(Action),
    #[error("episode is already terminal")]
    Terminal,
    #[error("fairness weight must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error("priority weights must be positive, one per region")]
    PriorityWeights,
    #[error("fleet size must be between 1 and {MAX_FLEET}, got {0}")]
    FleetSize(usize),
}

/// State at a decision point.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchState {
    /// 1-based decision index.
    pub k: usize,
    pub time: f64,
    pub request: Request,
    pub fleet: FleetState,
    /// Counts of requests strictly before this one.
    pub counters: RegionCounters,
    /// Cheapest insertion of the current request per vehicle.
    pub feasibility: Feasibility,
}

impl DispatchState {
    pub fn fleet_size(&self) -> usize {
        self.fleet.len()
    }

    pub fn is_feasible(&self, action: Action) -> bool {
        match action {
            Action::Reject => true,
            Action::Assign(m) => self.feasibility.is_feasible(m),
        }
    }

    /// Reject plus every feasible assignment, in action-index order.
    pub fn feasible_actions(&self) -> Vec<Action> {
        let mut actions = alloc::vec![Action::Reject];
        actions.extend((0..self.fleet_size()).filter(|&m| self.feasibility.is_feasible(m)).map(Action::Assign));
        actions
    }

    pub fn action_mask(&self) -> ActionMask {
        let mut mask = ActionMask::default();
        for a in self.feasible_actions() {
            mask.insert(a.index());
        }
        mask
    }
}

/// Rate-change reward components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReward {
    pub total: f64,
    pub min: f64,
}

impl RateReward {
    pub fn combined(self, alpha: f64) -> f64 {
        (1.0 - alpha) * self.total + alpha * self.min
    }
}

/// Changes in the overall and minimum regional acceptance rates caused by
/// `action`. Regions without requests count as rate zero on both sides of the
/// difference, which gives zero fairness change at the first decision.
pub fn reward_rate_based(state: &DispatchState, action: Action) -> RateReward {
    let a = if action.accepts() { 1.0 } else { 0.0 };
    if state.k <= 1 {
        return RateReward { total: a, min: 0.0 };
    }
    let c = &state.counters;
    let k = state.k as f64;
    let accepted = f64::from(c.total_accepted());
    let total = (a + accepted) / k - accepted / (k - 1.0);

    let region = state.request.region;
    let after = (0..c.num_regions())
        .map(|j| {
            let (acc, tot) = (f64::from(c.accepted[j]), f64::from(c.total[j]));
            if j == region {
                (acc + a) / (tot + 1.0)
            } else if tot > 0.0 {
                acc / tot
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min);
    RateReward { total, min: after - c.min_rate() }
}

/// Region whose accepted count relative to its expected daily count is
/// smallest; ties to the lowest index. Regions without expected demand are skipped.
pub fn least_served_region(counters: &RegionCounters, geo: &Geography) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, region) in geo.regions.iter().enumerate() {
        let n = region.expected_count();
        if n <= 0.0 {
            continue;
        }
        let r = f64::from(counters.accepted[j]) / n;
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((j, r));
        }
    }
    best.map(|(j, _)| j)
}

/// Non-negative reward: `1 - alpha` per acceptance, plus `alpha * n / n_z`
/// when the customer lives in the least-served region `z`.
pub fn reward_modified(state: &DispatchState, action: Action, geo: &Geography, alpha: f64) -> f64 {
    if !action.accepts() {
        return 0.0;
    }
    match least_served_region(&state.counters, geo) {
        Some(z) if z == state.request.region => {
            1.0 - alpha + alpha * geo.expected_total() / geo.regions[z].expected_count()
        }
        _ => 1.0 - alpha,
    }
}

pub fn reward_priority(state: &DispatchState, action: Action, weights: &[f64]) -> f64 {
    if action.accepts() {
        weights[state.request.region]
    } else {
        0.0
    }
}

/// One logged decision with the counters after it.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub k: usize,
    pub time: f64,
    pub region: usize,
    pub action: Action,
    pub reward: f64,
    pub counters_after: RegionCounters,
}

/// One simulated day under a fixed reward specification.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    geo: &'a Geography,
    instance: &'a RequestInstance,
    reward: RewardSpec,
    state: Option<DispatchState>,
    fleet: FleetState,
    counters: RegionCounters,
    departures: Vec<Departure>,
    decisions: Vec<DecisionRecord>,
}

impl<'a> Episode<'a> {
    /// Starts a day with an idle fleet of `fleet_size` vehicles at the depot.
    /// An empty instance yields an episode that is terminal from the start.
    pub fn reset(
        geo: &'a Geography,
        instance: &'a RequestInstance,
        fleet_size: usize,
        reward: RewardSpec,
    ) -> Result<Self, EnvError> {
        if fleet_size == 0 || fleet_size > MAX_FLEET {
            return Err(EnvError::FleetSize(fleet_size));
        }
        reward.validate(geo.num_regions())?;
        let fleet = FleetState::idle(fleet_size);
        let counters = RegionCounters::new(geo.num_regions());
        let state = instance.requests.first().map(|first| DispatchState {
            k: 1,
            time: first.time,
            request: first.clone(),
            feasibility: fleet.feasibility(first, first.time, geo),
            fleet: fleet.clone(),
            counters: counters.clone(),
        });
        Ok(Self { geo, instance, reward, state, fleet, counters, departures: Vec::new(), decisions: Vec::new() })
    }

    pub fn state(&self) -> Option<&DispatchState> {
        self.state.as_ref()
    }

    pub fn is_terminal(&self) -> bool {
        self.state.is_none()
    }

    pub fn geography(&self) -> &'a Geography {
        self.geo
    }

    pub fn reward_spec(&self) -> &RewardSpec {
        &self.reward
    }

    /// Applies `action`, pays the configured reward and moves to the next
    /// request (or to the end of the day).
    pub fn step(&mut self, action: Action) -> Result<f64, EnvError> {
        let state = self.state.take().ok_or(EnvError::Terminal)?;
        if !state.is_feasible(action) {
            self.state = Some(state);
            return Err(EnvError::Infeasible(action));
        }
        let geo = self.geo;
        let reward = self.reward.reward(&state, action, geo);
        let DispatchState { k, time, request, mut fleet, mut counters, mut feasibility } = state;

        counters.record(request.region, action.accepts());
        if let Action::Assign(m) = action {
            let insertion = feasibility.insertions[m].take().expect("checked feasible");
            fleet.vehicles[m].planned = insertion.candidate;
        }
        debug_assert_eq!(fleet.validate(time, geo), Ok(()));
        self.decisions.push(DecisionRecord {
            k,
            time,
            region: request.region,
            action,
            reward,
            counters_after: counters.clone(),
        });

        match self.instance.requests.get(k) {
            Some(next) => {
                self.departures.extend(fleet.advance(time, next.time));
                debug_assert_eq!(fleet.validate(next.time, geo), Ok(()));
                let feasibility = fleet.feasibility(next, next.time, geo);
                self.state = Some(DispatchState {
                    k: k + 1,
                    time: next.time,
                    request: next.clone(),
                    fleet: fleet.clone(),
                    counters: counters.clone(),
                    feasibility,
                });
            }
            None => {
                self.departures.extend(fleet.advance(time, geo.day_length_minutes));
            }
        }
        self.fleet = fleet;
        self.counters = counters;
        Ok(reward)
    }

    /// Counters after the latest decision.
    pub fn counters(&self) -> &RegionCounters {
        &self.counters
    }

    /// Fleet after the latest transition.
    pub fn fleet(&self) -> &FleetState {
        &self.fleet
    }

    /// Tours that have departed so far, in departure order.
    pub fn departures(&self) -> &[Departure] {
        &self.departures
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }
}
