//! Service geographies, the travel-time model and daily request generation.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::math;

/// Planar location in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        math::sqrt(dx * dx + dy * dy)
    }
}

/// Axis-aligned rectangle in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub const fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    /// Strict interior membership.
    pub fn contains_strictly(&self, p: &Point) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn center(&self) -> Point {
        Point::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }

    /// Whether the open interiors of two rectangles intersect.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.min.x < other.max.x
            && other.min.x < self.max.x
            && self.min.y < other.max.y
            && other.min.y < self.max.y
    }

    fn is_proper(&self) -> bool {
        self.min.x.is_finite()
            && self.min.y.is_finite()
            && self.max.x.is_finite()
            && self.max.y.is_finite()
            && self.min.x < self.max.x
            && self.min.y < self.max.y
    }
}

/// One request-generating region of the service area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    /// 1-based region number, equal to its position in `Geography::regions` plus one.
    pub id: usize,
    pub bounds: Rect,
    pub center: Point,
    /// Expected requests per day; doubles as the expected daily count `n_j`.
    pub arrival_rate: f64,
}

impl RegionSpec {
    pub fn expected_count(&self) -> f64 {
        self.arrival_rate
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("geography has no regions")]
    NoRegions,
    #[error("invalid time parameters: day length {day_length}, request cutoff {cutoff}, deadline {deadline}")]
    TimeParameters { day_length: f64, cutoff: f64, deadline: f64 },
    #[error("speed must be positive, got {0}")]
    Speed(f64),
    #[error("circuity factor must be at least 1, got {0}")]
    Circuity(f64),
    #[error("service times must be non-negative and finite")]
    ServiceTimes,
    #[error("location standard deviation must be positive, got {0}")]
    LocationStdev(f64),
    #[error("region {0}: bounds are degenerate or non-finite")]
    DegenerateRegion(usize),
    #[error("region at position {position} has id {id}, expected {}", position + 1)]
    RegionId { position: usize, id: usize },
    #[error("region {0}: center lies outside its bounds")]
    CenterOutside(usize),
    #[error("region {0}: arrival rate must be finite and non-negative")]
    ArrivalRate(usize),
    #[error("regions {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("depot ({x}, {y}) lies outside the permitted area")]
    DepotOutside { x: f64, y: f64 },
    #[error("region width must be positive, got {0}")]
    Width(f64),
}

/// The two built-in unfair geographies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeographyKind {
    /// Regions differ in their distance to the depot.
    Dist,
    /// Regions differ in request density.
    Dens,
}

/// Default region width `d` in kilometres.
pub const DEFAULT_REGION_WIDTH_KM: f64 = 3.0;

/// A service area with its depot, demand and time parameters.
///
/// All times are minutes from the start of the operating day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geography {
    pub regions: Vec<RegionSpec>,
    pub depot: Point,
    /// End of the operating day, `t_max`.
    pub day_length_minutes: f64,
    /// Requests arrive on `[0, request_cutoff_minutes]`.
    pub request_cutoff_minutes: f64,
    /// Delivery deadline offset after the request time.
    pub deadline_minutes: f64,
    pub speed_km_per_h: f64,
    /// Straight-line to road distance multiplier.
    pub circuity_factor: f64,
    /// Loading time at the depot before each tour.
    pub load_time_minutes: f64,
    /// Drop-off time at each customer.
    pub dropoff_time_minutes: f64,
    /// Standard deviation of each location coordinate around its region center.
    pub location_stdev_km: f64,
}

impl Geography {
    /// Built-in geography with the default region width and depot placement.
    pub fn builtin(kind: GeographyKind) -> Self {
        Self::builtin_with(kind, DEFAULT_REGION_WIDTH_KM, None).expect("default geography is valid")
    }

    /// Built-in geography for region width `d` (km), optionally displacing the
    /// depot by `depot_offset` from its default position.
    ///
    /// The displaced depot must stay within the bounding box of all regions
    /// widened by a margin of `d` on every side.
    pub fn builtin_with(
        kind: GeographyKind,
        d: f64,
        depot_offset: Option<Point>,
    ) -> Result<Self, WorldError> {
        if !(d.is_finite() && d > 0.0) {
            return Err(WorldError::Width(d));
        }
        let tall = 2.0 * d;
        let (regions, depot) = match kind {
            GeographyKind::Dist => {
                // Region 1 | no-request strip | Region 2, depot at Region 2's center.
                let r1 = Rect::new(Point::new(0.0, 0.0), Point::new(d, tall));
                let r2 = Rect::new(Point::new(2.0 * d, 0.0), Point::new(3.0 * d, tall));
                let depot = r2.center();
                (alloc::vec![(r1, 250.0), (r2, 250.0)], depot)
            }
            GeographyKind::Dens => {
                let r1 = Rect::new(Point::new(0.0, 0.0), Point::new(d, tall));
                let r2 = Rect::new(Point::new(d, 0.0), Point::new(2.0 * d, tall));
                (alloc::vec![(r1, 100.0), (r2, 400.0)], Point::new(d, d))
            }
        };
        let regions: Vec<RegionSpec> = regions
            .into_iter()
            .enumerate()
            .map(|(i, (bounds, rate))| RegionSpec {
                id: i + 1,
                bounds,
                center: bounds.center(),
                arrival_rate: rate,
            })
            .collect();
        let mut depot = depot;
        if let Some(off) = depot_offset {
            depot = Point::new(depot.x + off.x, depot.y + off.y);
            let bbox = bounding_box(&regions);
            let allowed = Rect::new(
                Point::new(bbox.min.x - d, bbox.min.y - d),
                Point::new(bbox.max.x + d, bbox.max.y + d),
            );
            if !allowed.contains(&depot) {
                return Err(WorldError::DepotOutside { x: depot.x, y: depot.y });
            }
        }
        let geo = Geography {
            regions,
            depot,
            day_length_minutes: 480.0,
            request_cutoff_minutes: 420.0,
            deadline_minutes: 240.0,
            speed_km_per_h: 30.0,
            circuity_factor: 1.4,
            load_time_minutes: 3.0,
            dropoff_time_minutes: 3.0,
            location_stdev_km: 3.0,
        };
        geo.validate()?;
        Ok(geo)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.regions.is_empty() {
            return Err(WorldError::NoRegions);
        }
        let (t_max, cutoff, deadline) =
            (self.day_length_minutes, self.request_cutoff_minutes, self.deadline_minutes);
        if !(cutoff > 0.0 && t_max > cutoff && deadline > 0.0 && t_max.is_finite() && deadline.is_finite())
        {
            return Err(WorldError::TimeParameters { day_length: t_max, cutoff, deadline });
        }
        if !(self.speed_km_per_h > 0.0 && self.speed_km_per_h.is_finite()) {
            return Err(WorldError::Speed(self.speed_km_per_h));
        }
        if !(self.circuity_factor >= 1.0 && self.circuity_factor.is_finite()) {
            return Err(WorldError::Circuity(self.circuity_factor));
        }
        let service_ok = |t: f64| t >= 0.0 && t.is_finite();
        if !(service_ok(self.load_time_minutes) && service_ok(self.dropoff_time_minutes)) {
            return Err(WorldError::ServiceTimes);
        }
        if !(self.location_stdev_km > 0.0 && self.location_stdev_km.is_finite()) {
            return Err(WorldError::LocationStdev(self.location_stdev_km));
        }
        for (pos, r) in self.regions.iter().enumerate() {
            if r.id != pos + 1 {
                return Err(WorldError::RegionId { position: pos, id: r.id });
            }
            if !r.bounds.is_proper() {
                return Err(WorldError::DegenerateRegion(r.id));
            }
            if !r.bounds.contains(&r.center) {
                return Err(WorldError::CenterOutside(r.id));
            }
            if !(r.arrival_rate >= 0.0 && r.arrival_rate.is_finite()) {
                return Err(WorldError::ArrivalRate(r.id));
            }
        }
        for (i, a) in self.regions.iter().enumerate() {
            for b in &self.regions[i + 1..] {
                if a.bounds.overlaps(&b.bounds) {
                    return Err(WorldError::Overlap(a.id, b.id));
                }
            }
        }
        if !(self.depot.x.is_finite() && self.depot.y.is_finite()) {
            return Err(WorldError::DepotOutside { x: self.depot.x, y: self.depot.y });
        }
        Ok(())
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    /// Expected total requests per day, `n`.
    pub fn expected_total(&self) -> f64 {
        self.regions.iter().map(RegionSpec::expected_count).sum()
    }

    /// Returns a copy with every arrival rate multiplied by `factor`.
    pub fn scaled_rates(&self, factor: f64) -> Self {
        let mut geo = self.clone();
        for r in &mut geo.regions {
            r.arrival_rate *= factor;
        }
        geo
    }

    /// Returns a copy with the given per-region arrival rates.
    pub fn with_rates(&self, rates: &[f64]) -> Self {
        assert_eq!(rates.len(), self.regions.len(), "one rate per region");
        let mut geo = self.clone();
        for (r, &rate) in geo.regions.iter_mut().zip(rates) {
            r.arrival_rate = rate;
        }
        geo
    }

    /// Travel time in minutes between two points.
    pub fn travel_time(&self, a: &Point, b: &Point) -> f64 {
        travel_time(a, b, self)
    }

    /// Index of the region containing `p`, if any.
    pub fn region_of(&self, p: &Point) -> Option<usize> {
        self.regions.iter().position(|r| r.bounds.contains(p))
    }

    /// Samples one day of requests.
    pub fn sample_instance(&self, seed: u64) -> RequestInstance {
        sample_instance(self, seed)
    }
}

fn bounding_box(regions: &[RegionSpec]) -> Rect {
    let mut bbox = regions[0].bounds;
    for r in &regions[1..] {
        bbox.min.x = bbox.min.x.min(r.bounds.min.x);
        bbox.min.y = bbox.min.y.min(r.bounds.min.y);
        bbox.max.x = bbox.max.x.max(r.bounds.max.x);
        bbox.max.y = bbox.max.y.max(r.bounds.max.y);
    }
    bbox
}

/// Depot displacements for the depot-location study on the density
/// geography: five evenly spaced points on the line joining the two region
/// centers, expressed relative to the default depot.
pub fn depot_study_offsets(d: f64) -> [Point; 5] {
    let step = d / 4.0;
    core::array::from_fn(|i| Point::new((i as f64 - 2.0) * step, 0.0))
}

/// Road-corrected travel time in minutes.
pub fn travel_time(a: &Point, b: &Point, geography: &Geography) -> f64 {
    geography.circuity_factor * a.distance(b) / geography.speed_km_per_h * 60.0
}

/// A single customer request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    /// 1-based arrival order within the day.
    pub index: usize,
    pub time: f64,
    pub location: Point,
    /// Index into `Geography::regions` (region id minus one).
    pub region: usize,
    pub deadline: f64,
}

/// One day of requests, sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestInstance {
    pub seed: u64,
    pub requests: Vec<Request>,
}

impl RequestInstance {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Requests per region.
    pub fn region_counts(&self, num_regions: usize) -> Vec<usize> {
        let mut counts = alloc::vec![0; num_regions];
        for r in &self.requests {
            counts[r.region] += 1;
        }
        counts
    }
}

/// Samples one day: per region a Poisson number of requests with uniform
/// arrival times on `[0, cutoff]` and normally distributed coordinates
/// around the region center, rejection-sampled into the region.
pub fn sample_instance(geography: &Geography, seed: u64) -> RequestInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cutoff = geography.request_cutoff_minutes;
    let mut drawn: Vec<(f64, Point, usize)> = Vec::new();
    for (j, region) in geography.regions.iter().enumerate() {
        if region.arrival_rate <= 0.0 {
            continue;
        }
        let count = Poisson::new(region.arrival_rate)
            .expect("positive finite rate")
            .sample(&mut rng) as usize;
        let nx = Normal::new(region.center.x, geography.location_stdev_km).expect("valid stdev");
        let ny = Normal::new(region.center.y, geography.location_stdev_km).expect("valid stdev");
        for _ in 0..count {
            let time = rng.random::<f64>() * cutoff;
            let location = loop {
                let p = Point::new(nx.sample(&mut rng), ny.sample(&mut rng));
                if region.bounds.contains_strictly(&p) {
                    break p;
                }
            };
            drawn.push((time, location, j));
        }
    }
    // Stable sort keeps region-then-draw order for equal times.
    drawn.sort_by(|a, b| a.0.total_cmp(&b.0));
    let requests = drawn
        .into_iter()
        .enumerate()
        .map(|(i, (time, location, region))| Request {
            index: i + 1,
            time,
            location,
            region,
            deadline: time + geography.deadline_minutes,
        })
        .collect();
    RequestInstance { seed, requests }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn travel_time_formula() {
        let geo = Geography::builtin(GeographyKind::Dist);
        let a = Point::new(0.0, 0.0);
        assert_eq!(geo.travel_time(&a, &a), 0.0);
        let b = Point::new(0.0, 5.0);
        assert!((geo.travel_time(&a, &b) - 14.0).abs() < 1e-12);
        let c = Point::new(3.0, 0.0);
        let e = Point::new(3.0, 4.0);
        assert!(geo.travel_time(&a, &e) <= geo.travel_time(&a, &c) + geo.travel_time(&c, &e));
    }

    #[test]
    fn builtin_rates_and_depot() {
        let dens = Geography::builtin(GeographyKind::Dens);
        assert_eq!(dens.regions[0].arrival_rate, 100.0);
        assert_eq!(dens.regions[1].arrival_rate, 400.0);
        assert_eq!(dens.expected_total(), 500.0);

        let dist = Geography::builtin(GeographyKind::Dist);
        assert_eq!(dist.regions[0].arrival_rate, 250.0);
        assert_eq!(dist.regions[1].arrival_rate, 250.0);
        let d = DEFAULT_REGION_WIDTH_KM;
        assert!((dist.depot.distance(&dist.regions[0].center) - 2.0 * d).abs() < 1e-12);
        // The middle strip belongs to no region.
        assert_eq!(dist.region_of(&Point::new(1.5 * d, d)), None);
    }

    #[test]
    fn depot_offset_bounds() {
        let d = DEFAULT_REGION_WIDTH_KM;
        for off in depot_study_offsets(d) {
            assert!(Geography::builtin_with(GeographyKind::Dens, d, Some(off)).is_ok());
        }
        let too_far = Point::new(10.0 * d, 0.0);
        assert!(matches!(
            Geography::builtin_with(GeographyKind::Dens, d, Some(too_far)),
            Err(WorldError::DepotOutside { .. })
        ));
        let offsets = depot_study_offsets(d);
        let dens = Geography::builtin(GeographyKind::Dens);
        assert!((dens.depot.x + offsets[0].x - dens.regions[0].center.x).abs() < 1e-12);
        assert!((dens.depot.x + offsets[4].x - dens.regions[1].center.x).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let mut geo = Geography::builtin(GeographyKind::Dens);
        geo.circuity_factor = 0.9;
        assert_eq!(geo.validate(), Err(WorldError::Circuity(0.9)));

        let mut geo = Geography::builtin(GeographyKind::Dens);
        geo.request_cutoff_minutes = 500.0;
        assert!(matches!(geo.validate(), Err(WorldError::TimeParameters { .. })));

        let mut geo = Geography::builtin(GeographyKind::Dens);
        geo.regions[1].bounds.min.x -= 1.0;
        assert_eq!(geo.validate(), Err(WorldError::Overlap(1, 2)));
    }

    #[test]
    fn zero_rates_give_empty_instance() {
        let geo = Geography::builtin(GeographyKind::Dist).with_rates(&[0.0, 0.0]);
        assert!(geo.sample_instance(7).is_empty());
    }

    #[test]
    fn sampling_is_deterministic_and_sorted() {
        let geo = Geography::builtin(GeographyKind::Dist);
        let a = geo.sample_instance(42);
        let b = geo.sample_instance(42);
        assert_eq!(a, b);
        for w in a.requests.windows(2) {
            assert!(w[0].time <= w[1].time);
            assert_eq!(w[0].index + 1, w[1].index);
        }
        for r in &a.requests {
            assert!(geo.regions[r.region].bounds.contains_strictly(&r.location));
            assert!(r.time >= 0.0 && r.time <= geo.request_cutoff_minutes);
            assert_eq!(r.deadline, r.time + geo.deadline_minutes);
        }
    }
}
