//! Planned routes, feasibility and cheapest insertion.
//!
//! Every vehicle carries at most one *planned* route: the tour it will start
//! after returning from its current (immutable) ongoing tour. New customers
//! are only ever inserted into planned routes. A planned route departs at the
//! latest load start that still meets every deadline and the end of the day,
//! recomputed after each insertion.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::world::{Geography, Point, Request};
use crate::TIME_TOLERANCE;

/// A customer on a route together with its planned arrival time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    /// Request index (1-based arrival order) of the customer.
    pub customer: usize,
    pub location: Point,
    pub deadline: f64,
    pub arrival: f64,
}

/// A not-yet-started tour.
///
/// For an empty route `load_start` and `final_return` both equal
/// `depot_return`; the vehicle simply waits at the depot until `t_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRoute {
    /// Return time from the ongoing tour, `a(N1)`; zero before the first tour.
    pub depot_return: f64,
    /// Start of loading, `s(N1)`.
    pub load_start: f64,
    pub stops: Vec<Stop>,
    /// Planned return to the depot, `a(N2)`.
    pub final_return: f64,
}

/// Which of the route conditions a schedule breaks.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RouteViolation {
    #[error("customer {customer} arrives at {arrival:.6} after its deadline {deadline:.6}")]
    Deadline { customer: usize, arrival: f64, deadline: f64 },
    #[error("loading starts at {load_start:.6} before the vehicle is back at {depot_return:.6}")]
    LoadBeforeReturn { load_start: f64, depot_return: f64 },
    #[error("first arrival {arrival:.6} does not follow loading and travel (expected {expected:.6})")]
    FirstArrival { arrival: f64, expected: f64 },
    #[error("arrival at stop {position} is {arrival:.6}, expected {expected:.6}")]
    Consecutive { position: usize, arrival: f64, expected: f64 },
    #[error("return {final_return:.6} is inconsistent or later than the end of the day")]
    Return { final_return: f64 },
    #[error("loading starts at {load_start:.6}, already in the past at {now:.6}")]
    Past { load_start: f64, now: f64 },
    #[error("vehicle {0}: planned route does not start at the ongoing return")]
    Handover(usize),
}

impl PlannedRoute {
    pub fn empty(depot_return: f64) -> Self {
        Self { depot_return, load_start: depot_return, stops: Vec::new(), final_return: depot_return }
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    /// Time from the start of loading until the return to the depot.
    pub fn tour_duration(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.final_return - self.load_start
        }
    }

    /// Checks the schedule conditions for this route at decision time `now`.
    pub fn check(&self, now: f64, geo: &Geography) -> Result<(), RouteViolation> {
        if self.is_empty() {
            return Ok(());
        }
        let tol = TIME_TOLERANCE;
        if self.load_start < self.depot_return - tol {
            return Err(RouteViolation::LoadBeforeReturn {
                load_start: self.load_start,
                depot_return: self.depot_return,
            });
        }
        if self.load_start < now - tol {
            return Err(RouteViolation::Past { load_start: self.load_start, now });
        }
        let first = &self.stops[0];
        let expected = self.load_start + geo.load_time_minutes + geo.travel_time(&geo.depot, &first.location);
        if (first.arrival - expected).abs() > tol {
            return Err(RouteViolation::FirstArrival { arrival: first.arrival, expected });
        }
        for (i, pair) in self.stops.windows(2).enumerate() {
            let expected =
                pair[0].arrival + geo.dropoff_time_minutes + geo.travel_time(&pair[0].location, &pair[1].location);
            if (pair[1].arrival - expected).abs() > tol {
                return Err(RouteViolation::Consecutive { position: i + 1, arrival: pair[1].arrival, expected });
            }
        }
        for s in &self.stops {
            if s.arrival > s.deadline + tol {
                return Err(RouteViolation::Deadline { customer: s.customer, arrival: s.arrival, deadline: s.deadline });
            }
        }
        let last = self.stops.last().expect("non-empty");
        let expected = last.arrival + geo.dropoff_time_minutes + geo.travel_time(&last.location, &geo.depot);
        if (self.final_return - expected).abs() > tol || self.final_return > geo.day_length_minutes + tol {
            return Err(RouteViolation::Return { final_return: self.final_return });
        }
        Ok(())
    }
}

/// Lays out `stops` (locations and deadlines already set) departing at `load_start`.
fn schedule(depot_return: f64, load_start: f64, mut stops: Vec<Stop>, geo: &Geography) -> PlannedRoute {
    let mut at = geo.depot;
    let mut t = load_start + geo.load_time_minutes;
    for (i, stop) in stops.iter_mut().enumerate() {
        if i > 0 {
            t += geo.dropoff_time_minutes;
        }
        t += geo.travel_time(&at, &stop.location);
        stop.arrival = t;
        at = stop.location;
    }
    let final_return = t + geo.dropoff_time_minutes + geo.travel_time(&at, &geo.depot);
    PlannedRoute { depot_return, load_start, stops, final_return }
}

/// Outcome of inserting one customer into one planned route.
#[derive(Debug, Clone, PartialEq)]
pub struct Insertion {
    /// Index the new customer occupies in `candidate.stops`.
    pub position: usize,
    /// Increase in tour duration, minutes.
    pub delta: f64,
    pub candidate: PlannedRoute,
}

/// Cheapest feasible insertion of `request` into `route` at decision time `now`.
///
/// Every position is evaluated in O(1) from prefix and suffix deadline slack,
/// so the whole scan is linear in the route length. Increases within
/// [`TIME_TOLERANCE`] of each other tie and go to the earliest position. Returns `None` when no position is
/// feasible for this route.
pub fn cheapest_insertion(route: &PlannedRoute, request: &Request, now: f64, geo: &Geography) -> Option<Insertion> {
    let tau = |a: &Point, b: &Point| geo.travel_time(a, b);
    let (t_load, t_drop, t_max) = (geo.load_time_minutes, geo.dropoff_time_minutes, geo.day_length_minutes);
    let depot = geo.depot;
    let c = request.location;
    let earliest = route.depot_return.max(now);
    let stops = &route.stops;
    let h = stops.len();

    // Offsets of each arrival from the load start.
    let mut offsets = Vec::with_capacity(h);
    let mut at = depot;
    let mut off = t_load;
    for (i, s) in stops.iter().enumerate() {
        if i > 0 {
            off += t_drop;
        }
        off += tau(&at, &s.location);
        offsets.push(off);
        at = s.location;
    }
    let duration = if h == 0 { 0.0 } else { off + t_drop + tau(&at, &depot) };

    // prefix[p] = min over i < p of (deadline_i - offset_i); suffix[p] likewise over i >= p.
    let mut prefix = Vec::with_capacity(h + 1);
    prefix.push(f64::INFINITY);
    for (s, o) in stops.iter().zip(&offsets) {
        let last = *prefix.last().expect("seeded");
        prefix.push(f64::min(last, s.deadline - o));
    }
    let mut suffix = alloc::vec![f64::INFINITY; h + 1];
    for i in (0..h).rev() {
        suffix[i] = suffix[i + 1].min(stops[i].deadline - offsets[i]);
    }

    let mut best: Option<(usize, f64, f64)> = None;
    for p in 0..=h {
        let prev = if p == 0 { depot } else { stops[p - 1].location };
        let next = if p == h { depot } else { stops[p].location };
        let (delta, off_c) = if h == 0 {
            let off_c = t_load + tau(&depot, &c);
            (off_c + t_drop + tau(&c, &depot), off_c)
        } else {
            let detour = tau(&prev, &c) + t_drop + tau(&c, &next) - tau(&prev, &next);
            let off_c = if p == 0 { t_load + tau(&depot, &c) } else { offsets[p - 1] + t_drop + tau(&prev, &c) };
            (detour, off_c)
        };
        let latest = prefix[p]
            .min(request.deadline - off_c)
            .min(suffix[p] - delta)
            .min(t_max - (duration + delta));
        if latest < earliest - TIME_TOLERANCE {
            continue;
        }
        if best.is_none_or(|(_, d, _)| delta < d - TIME_TOLERANCE) {
            best = Some((p, delta, latest));
        }
    }

    let (position, delta, latest) = best?;
    let mut new_stops = stops.clone();
    new_stops.insert(
        position,
        Stop { customer: request.index, location: c, deadline: request.deadline, arrival: 0.0 },
    );
    let candidate = schedule(route.depot_return, latest.max(earliest), new_stops, geo);
    Some(Insertion { position, delta, candidate })
}

/// One vehicle: its ongoing tour's return time and its planned route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    /// When the ongoing tour ends at the depot; zero while idle since the start of day.
    pub ongoing_return: f64,
    pub planned: PlannedRoute,
}

/// A planned route that turned into an ongoing tour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Departure {
    /// 0-based vehicle index.
    pub vehicle: usize,
    pub load_start: f64,
    pub stops: Vec<Stop>,
    pub final_return: f64,
}

/// Kind of an event in a route trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Depart,
    Arrive,
    Return,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Depart => "depart",
            TraceKind::Arrive => "arrive",
            TraceKind::Return => "return",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub vehicle: usize,
    pub kind: TraceKind,
    pub time: f64,
    pub customer: Option<usize>,
}

impl Departure {
    /// Depart, per-customer arrivals and return, in time order.
    pub fn events(&self) -> Vec<TraceEvent> {
        let mut out = Vec::with_capacity(self.stops.len() + 2);
        out.push(TraceEvent { vehicle: self.vehicle, kind: TraceKind::Depart, time: self.load_start, customer: None });
        out.extend(self.stops.iter().map(|s| TraceEvent {
            vehicle: self.vehicle,
            kind: TraceKind::Arrive,
            time: s.arrival,
            customer: Some(s.customer),
        }));
        out.push(TraceEvent { vehicle: self.vehicle, kind: TraceKind::Return, time: self.final_return, customer: None });
        out
    }
}

/// Per-vehicle insertion outcomes for one request.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Feasibility {
    pub insertions: Vec<Option<Insertion>>,
}

impl Feasibility {
    pub fn flags(&self) -> Vec<bool> {
        self.insertions.iter().map(Option::is_some).collect()
    }

    /// Tour-time increase per vehicle; zero where infeasible.
    pub fn deltas(&self) -> Vec<f64> {
        self.insertions.iter().map(|i| i.as_ref().map_or(0.0, |i| i.delta)).collect()
    }

    pub fn is_feasible(&self, vehicle: usize) -> bool {
        self.insertions.get(vehicle).is_some_and(Option::is_some)
    }

    pub fn any(&self) -> bool {
        self.insertions.iter().any(Option::is_some)
    }

    /// Feasible vehicle with the smallest delta among those accepted by `allowed`;
    /// deltas within [`TIME_TOLERANCE`] tie and go to the lowest index.
    pub fn cheapest_where(&self, mut allowed: impl FnMut(usize) -> bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (m, ins) in self.insertions.iter().enumerate() {
            if let Some(ins) = ins {
                if allowed(m) && best.is_none_or(|(_, d)| ins.delta < d - TIME_TOLERANCE) {
                    best = Some((m, ins.delta));
                }
            }
        }
        best.map(|(m, _)| m)
    }

    pub fn cheapest(&self) -> Option<usize> {
        self.cheapest_where(|_| true)
    }
}

/// All vehicles of the fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetState {
    pub vehicles: Vec<Vehicle>,
}

impl FleetState {
    /// `size` vehicles idle at the depot at time zero.
    pub fn idle(size: usize) -> Self {
        Self { vehicles: (0..size).map(|_| Vehicle { ongoing_return: 0.0, planned: PlannedRoute::empty(0.0) }).collect() }
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Cheapest insertion of `request` into each vehicle's planned route.
    pub fn feasibility(&self, request: &Request, now: f64, geo: &Geography) -> Feasibility {
        Feasibility {
            insertions: self.vehicles.iter().map(|v| cheapest_insertion(&v.planned, request, now, geo)).collect(),
        }
    }

    /// Feasibility flags and deltas for `request`.
    pub fn feasibility_vector(&self, request: &Request, now: f64, geo: &Geography) -> (Vec<bool>, Vec<f64>) {
        let f = self.feasibility(request, now, geo);
        (f.flags(), f.deltas())
    }

    /// Assigns `request` to the vehicle with the smallest insertion delta
    /// (ties to the lowest index) and returns that vehicle with the updated fleet.
    pub fn assign(&self, request: &Request, now: f64, geo: &Geography) -> Option<(usize, FleetState)> {
        let mut f = self.feasibility(request, now, geo);
        let m = f.cheapest()?;
        let mut next = self.clone();
        next.vehicles[m].planned = f.insertions[m].take().expect("feasible").candidate;
        Some((m, next))
    }

    /// Freezes every non-empty planned route whose load start is not after
    /// `to_t` into an ongoing tour and opens a fresh empty planned route
    /// after it. Returns the departed tours; their customers are loaded.
    pub fn advance(&mut self, from_t: f64, to_t: f64) -> Vec<Departure> {
        debug_assert!(from_t <= to_t, "advance backwards from {from_t} to {to_t}");
        let mut departed = Vec::new();
        for (m, v) in self.vehicles.iter_mut().enumerate() {
            if v.planned.is_empty() || v.planned.load_start > to_t {
                continue;
            }
            let route = core::mem::replace(&mut v.planned, PlannedRoute::empty(0.0));
            v.ongoing_return = route.final_return;
            v.planned = PlannedRoute::empty(route.final_return);
            departed.push(Departure {
                vehicle: m,
                load_start: route.load_start,
                stops: route.stops,
                final_return: route.final_return,
            });
        }
        departed
    }

    /// Checks every planned route at time `now`.
    pub fn validate(&self, now: f64, geo: &Geography) -> Result<(), RouteViolation> {
        for (m, v) in self.vehicles.iter().enumerate() {
            if (v.planned.depot_return - v.ongoing_return).abs() > TIME_TOLERANCE {
                return Err(RouteViolation::Handover(m));
            }
            v.planned.check(now, geo)?;
        }
        Ok(())
    }

    /// Customers accepted but not yet loaded.
    pub fn pending(&self) -> impl Iterator<Item = &Stop> {
        self.vehicles.iter().flat_map(|v| v.planned.stops.iter())
    }
}
