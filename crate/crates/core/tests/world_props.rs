use fairdispatch_core::world::{travel_time, Geography, GeographyKind, Point};
use proptest::prelude::*;

/// Upper `1 - p` quantile of chi-square with `k` degrees of freedom
/// (Wilson-Hilferty), for the standard normal quantile `z`.
fn chi2_upper(k: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * k);
    k * (1.0 - a + z * a.sqrt()).powi(3)
}

const Z_99: f64 = 2.326_347_874;

#[test]
fn region_counts_are_poisson_with_the_declared_rate() {
    for kind in [GeographyKind::Dist, GeographyKind::Dens] {
        let geo = Geography::builtin(kind);
        let days = 1000;
        let counts: Vec<Vec<usize>> = (0..days).map(|s| geo.sample_instance(s).region_counts(2)).collect();
        for (j, region) in geo.regions.iter().enumerate() {
            let lambda = region.arrival_rate;
            // Poisson dispersion statistic: sum (n - lambda)^2 / lambda ~ chi2(days).
            let stat: f64 = counts.iter().map(|c| (c[j] as f64 - lambda).powi(2) / lambda).sum();
            let upper = chi2_upper(days as f64, Z_99);
            let lower = chi2_upper(days as f64, -Z_99);
            assert!(stat < upper && stat > lower, "{kind:?} region {j}: {stat} outside ({lower}, {upper})");
            let mean = counts.iter().map(|c| c[j] as f64).sum::<f64>() / days as f64;
            let tol = 3.0 * lambda.sqrt() / (days as f64).sqrt();
            assert!((mean - lambda).abs() < tol, "{kind:?} region {j}: mean {mean}");
        }
    }
}

#[test]
fn dens_mean_daily_total_is_500() {
    let geo = Geography::builtin(GeographyKind::Dens);
    let mean = (0..1000).map(|s| geo.sample_instance(s).len() as f64).sum::<f64>() / 1000.0;
    let tol = 3.0 * 500f64.sqrt() / 1000f64.sqrt();
    assert!((mean - 500.0).abs() < tol, "mean {mean}, tolerance {tol}");
}

#[test]
fn dist_region_one_center_is_two_widths_from_depot() {
    let geo = Geography::builtin(GeographyKind::Dist);
    assert!((geo.depot.distance(&geo.regions[0].center) - 6.0).abs() < 1e-12);
}

#[test]
fn same_seed_same_instance() {
    let geo = Geography::builtin(GeographyKind::Dist);
    assert_eq!(geo.sample_instance(42), geo.sample_instance(42));
    assert_ne!(geo.sample_instance(42), geo.sample_instance(43));
}

fn point() -> impl Strategy<Value = Point> {
    (-20.0..20.0f64, -20.0..20.0f64).prop_map(|(x, y)| Point::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn travel_time_is_a_scaled_metric(a in point(), b in point(), c in point()) {
        let geo = Geography::builtin(GeographyKind::Dist);
        let t = |p: &Point, q: &Point| travel_time(p, q, &geo);
        prop_assert_eq!(t(&a, &b), t(&b, &a));
        prop_assert_eq!(t(&a, &a), 0.0);
        if a != b {
            prop_assert!(t(&a, &b) > 0.0);
        }
        prop_assert!(t(&a, &c) <= t(&a, &b) + t(&b, &c) + 1e-12);
    }

    #[test]
    fn sampled_requests_are_well_formed(seed in any::<u64>(), dens in any::<bool>()) {
        let kind = if dens { GeographyKind::Dens } else { GeographyKind::Dist };
        let geo = Geography::builtin(kind).scaled_rates(0.2);
        let inst = geo.sample_instance(seed);
        for (i, r) in inst.requests.iter().enumerate() {
            prop_assert_eq!(r.index, i + 1);
            prop_assert!(geo.regions[r.region].bounds.contains_strictly(&r.location));
            prop_assert_eq!(geo.region_of(&r.location), Some(r.region));
            prop_assert!((0.0..=geo.request_cutoff_minutes).contains(&r.time));
            prop_assert_eq!(r.deadline, r.time + geo.deadline_minutes);
        }
        prop_assert!(inst.requests.windows(2).all(|w| w[0].time <= w[1].time));
    }
}
