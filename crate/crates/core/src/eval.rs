//! Policy evaluation: service-rate metrics, Pareto tables, reward profiles
//! and the long-term demand-feedback simulation.
//!
//! Rates pool counts over all evaluated days: `r_j` is the accepted share of
//! all requests from region `j`, `r_total` the accepted share overall. A
//! region that received no requests has rate zero.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{reward_rate_based, EnvError, Episode, RegionCounters, RewardSpec};
use crate::math;
use crate::policies::Policy;
use crate::world::{Geography, RequestInstance};

/// Number of equal parts the operating day is split into for temporal rates.
pub const QUARTERS: usize = 4;

/// Runs one day under `policy` and returns the finished episode.
pub fn simulate_day<'a, P: Policy + ?Sized>(
    policy: &mut P,
    geo: &'a Geography,
    instance: &'a RequestInstance,
    fleet_size: usize,
    reward: RewardSpec,
) -> Result<Episode<'a>, EnvError> {
    let mut episode = Episode::reset(geo, instance, fleet_size, reward)?;
    policy.start_day();
    while let Some(state) = episode.state() {
        let action = policy.decide(state, geo);
        episode.step(action)?;
    }
    Ok(episode)
}

/// Counts from one evaluated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayOutcome {
    pub seed: u64,
    pub counters: RegionCounters,
    /// Per-quarter counters, quarters of `[0, t_max]`.
    pub quarters: Vec<RegionCounters>,
}

impl DayOutcome {
    pub fn from_episode(episode: &Episode<'_>, seed: u64) -> Self {
        let geo = episode.geography();
        let j = geo.num_regions();
        let quarter_len = geo.day_length_minutes / QUARTERS as f64;
        let mut quarters = alloc::vec![RegionCounters::new(j); QUARTERS];
        for d in episode.decisions() {
            let q = (math::floor(d.time / quarter_len) as usize).min(QUARTERS - 1);
            quarters[q].record(d.region, d.action.accepts());
        }
        Self { seed, counters: episode.counters().clone(), quarters }
    }

    pub fn accepted(&self) -> u32 {
        self.counters.total_accepted()
    }
}

/// Evaluates one day; the reward specification does not affect the counts.
pub fn evaluate_day<P: Policy + ?Sized>(
    policy: &mut P,
    geo: &Geography,
    instance: &RequestInstance,
    fleet_size: usize,
) -> Result<DayOutcome, EnvError> {
    let episode = simulate_day(policy, geo, instance, fleet_size, RewardSpec::modified(0.0))?;
    Ok(DayOutcome::from_episode(&episode, instance.seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarterRates {
    pub r_total: f64,
    pub r_min: f64,
}

/// Aggregate metrics of one policy over a set of days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instances: usize,
    pub seed_min: Option<u64>,
    pub seed_max: Option<u64>,
    /// Mean accepted requests per day (utility).
    pub utility: f64,
    pub utility_std: f64,
    pub r_total: f64,
    pub r_regions: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub quarters: Vec<QuarterRates>,
    pub accepted: Vec<u64>,
    pub requests: Vec<u64>,
}

fn pooled(days: &[DayOutcome], num_regions: usize, pick: impl Fn(&DayOutcome) -> &RegionCounters) -> (Vec<u64>, Vec<u64>) {
    let mut acc = alloc::vec![0u64; num_regions];
    let mut tot = alloc::vec![0u64; num_regions];
    for d in days {
        let c = pick(d);
        for j in 0..num_regions {
            acc[j] += u64::from(c.accepted[j]);
            tot[j] += u64::from(c.total[j]);
        }
    }
    (acc, tot)
}

fn rate(a: u64, t: u64) -> f64 {
    if t == 0 {
        0.0
    } else {
        a as f64 / t as f64
    }
}

impl EvalReport {
    /// Pools day outcomes; `num_regions` sizes the report when `days` is empty.
    pub fn from_days(days: &[DayOutcome], num_regions: usize) -> Self {
        let (accepted, requests) = pooled(days, num_regions, |d| &d.counters);
        let r_regions: Vec<f64> = accepted.iter().zip(&requests).map(|(&a, &t)| rate(a, t)).collect();
        let r_total = rate(accepted.iter().sum(), requests.iter().sum());
        let (r_min, r_max) = min_max(&r_regions);

        let quarters = (0..QUARTERS)
            .map(|q| {
                let (a, t) = pooled(days, num_regions, |d| &d.quarters[q]);
                let rates: Vec<f64> = a.iter().zip(&t).map(|(&a, &t)| rate(a, t)).collect();
                QuarterRates { r_total: rate(a.iter().sum(), t.iter().sum()), r_min: min_max(&rates).0 }
            })
            .collect();

        let n = days.len() as f64;
        let utility = if days.is_empty() { 0.0 } else { days.iter().map(|d| f64::from(d.accepted())).sum::<f64>() / n };
        let utility_std = if days.len() < 2 {
            0.0
        } else {
            let var = days.iter().map(|d| { let e = f64::from(d.accepted()) - utility; e * e }).sum::<f64>() / (n - 1.0);
            math::sqrt(var)
        };
        Self {
            instances: days.len(),
            seed_min: days.iter().map(|d| d.seed).min(),
            seed_max: days.iter().map(|d| d.seed).max(),
            utility,
            utility_std,
            r_total,
            r_regions,
            r_min,
            r_max,
            quarters,
            accepted,
            requests,
        }
    }

    /// Weighted utility-fairness objective `(1 - alpha) r_total + alpha r_min`.
    pub fn objective(&self, alpha: f64) -> f64 {
        (1.0 - alpha) * self.r_total + alpha * self.r_min
    }
}

/// Field-wise mean of reports over the same instances, such as the
/// evaluations of the last few checkpoints of one run. Counts are summed.
pub fn average_reports(reports: &[EvalReport]) -> Option<EvalReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let j = first.r_regions.len();
    let sum_counts = |f: &dyn Fn(&EvalReport) -> &Vec<u64>| {
        (0..j).map(|r| reports.iter().map(|x| f(x)[r]).sum()).collect()
    };
    Some(EvalReport {
        instances: first.instances,
        seed_min: first.seed_min,
        seed_max: first.seed_max,
        utility: mean(&|r| r.utility),
        utility_std: mean(&|r| r.utility_std),
        r_total: mean(&|r| r.r_total),
        r_regions: (0..j).map(|k| mean(&|r| r.r_regions[k])).collect(),
        r_min: mean(&|r| r.r_min),
        r_max: mean(&|r| r.r_max),
        quarters: (0..first.quarters.len())
            .map(|q| QuarterRates { r_total: mean(&|r| r.quarters[q].r_total), r_min: mean(&|r| r.quarters[q].r_min) })
            .collect(),
        accepted: sum_counts(&|r| &r.accepted),
        requests: sum_counts(&|r| &r.requests),
    })
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Evaluates `policy` on every instance in order.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &mut P,
    geo: &Geography,
    instances: &[RequestInstance],
    fleet_size: usize,
) -> Result<EvalReport, EnvError> {
    let days = instances
        .iter()
        .map(|inst| evaluate_day(policy, geo, inst, fleet_size))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_days(&days, geo.num_regions()))
}

/// Relative objective gap of a benchmark against a reference policy.
pub fn percent_difference(benchmark: f64, reference: f64) -> f64 {
    (benchmark - reference) / reference
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub alpha: f64,
    pub r_total: f64,
    pub r_min: f64,
    pub utility: f64,
    /// Another row is at least as good on both rates and strictly better on one.
    pub dominated: bool,
}

/// One row per `(alpha, report)` pair with dominance flags.
pub fn pareto_table(rows: &[(f64, EvalReport)]) -> Vec<ParetoRow> {
    rows.iter()
        .map(|(alpha, r)| {
            let dominated = rows.iter().any(|(_, o)| {
                o.r_total >= r.r_total && o.r_min >= r.r_min && (o.r_total > r.r_total || o.r_min > r.r_min)
            });
            ParetoRow { alpha: *alpha, r_total: r.r_total, r_min: r.r_min, utility: r.utility, dominated }
        })
        .collect()
}

/// Rate-based reward statistics for decisions within one minute of the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub minute: u32,
    pub count: u64,
    pub mean: f64,
    pub mean_abs: f64,
}

/// Per-minute mean combined rate-based reward of `policy` over `instances`.
/// Only minutes within the request window that saw at least one decision are reported.
pub fn reward_profile<P: Policy + ?Sized>(
    policy: &mut P,
    geo: &Geography,
    instances: &[RequestInstance],
    fleet_size: usize,
    alpha: f64,
) -> Result<Vec<ProfileBin>, EnvError> {
    let bins = math::floor(geo.request_cutoff_minutes) as usize + 1;
    let mut sum = alloc::vec![0.0; bins];
    let mut sum_abs = alloc::vec![0.0; bins];
    let mut count = alloc::vec![0u64; bins];
    for inst in instances {
        let mut episode = Episode::reset(geo, inst, fleet_size, RewardSpec::rate_based(alpha))?;
        policy.start_day();
        while let Some(state) = episode.state() {
            let action = policy.decide(state, geo);
            let r = reward_rate_based(state, action).combined(alpha);
            let b = (math::floor(state.time) as usize).min(bins - 1);
            sum[b] += r;
            sum_abs[b] += r.abs();
            count[b] += 1;
            episode.step(action)?;
        }
    }
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| ProfileBin {
            minute: b as u32,
            count: count[b],
            mean: sum[b] / count[b] as f64,
            mean_abs: sum_abs[b] / count[b] as f64,
        })
        .collect())
}

/// Average of the per-minute mean absolute reward over minutes in `[from, to)`.
pub fn window_mean_abs(bins: &[ProfileBin], from: u32, to: u32) -> f64 {
    let sel: Vec<f64> = bins.iter().filter(|b| b.minute >= from && b.minute < to).map(|b| b.mean_abs).collect();
    if sel.is_empty() {
        0.0
    } else {
        sel.iter().sum::<f64>() / sel.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTermConfig {
    pub months: usize,
    pub days_per_month: usize,
    /// Service rate customers expect; demand grows above it and shrinks below.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for LongTermConfig {
    fn default() -> Self {
        Self { months: 12, days_per_month: 30, threshold: 0.70, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthRecord {
    pub month: usize,
    /// Arrival rates in force during this month.
    pub lambda: Vec<f64>,
    pub service_rate: Vec<f64>,
    pub accepted_per_day: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTermSeries {
    pub months: Vec<MonthRecord>,
    /// Rates after the last monthly update.
    pub final_lambda: Vec<f64>,
}

impl LongTermSeries {
    pub fn last_month_accepted_per_day(&self) -> f64 {
        self.months.last().map_or(0.0, |m| m.accepted_per_day.iter().sum())
    }
}

/// Month-wise mean of several series of equal length, such as the runs of
/// the last few checkpoints of one training.
pub fn average_series(series: &[LongTermSeries]) -> Option<LongTermSeries> {
    let first = series.first()?;
    let n = series.len() as f64;
    let mean_vec = |f: &dyn Fn(&LongTermSeries) -> &Vec<f64>| -> Vec<f64> {
        (0..f(first).len()).map(|j| series.iter().map(|s| f(s)[j]).sum::<f64>() / n).collect()
    };
    let months = (0..first.months.len())
        .map(|m| MonthRecord {
            month: first.months[m].month,
            lambda: mean_vec(&|s| &s.months[m].lambda),
            service_rate: mean_vec(&|s| &s.months[m].service_rate),
            accepted_per_day: mean_vec(&|s| &s.months[m].accepted_per_day),
        })
        .collect();
    Some(LongTermSeries { months, final_lambda: mean_vec(&|s| &s.final_lambda) })
}

/// Demand update `lambda + lambda (r - threshold)`, floored at zero.
pub fn update_rate(lambda: f64, service_rate: f64, threshold: f64) -> f64 {
    (lambda + lambda * (service_rate - threshold)).max(0.0)
}

/// Simulates `config.months` months of `config.days_per_month` days, feeding
/// each month's regional service rates back into the next month's demand.
/// Day `d` of month `m` uses seed `config.seed + m * days_per_month + d`.
pub fn long_term<P: Policy + ?Sized>(
    policy: &mut P,
    geo: &Geography,
    fleet_size: usize,
    config: &LongTermConfig,
) -> Result<LongTermSeries, EnvError> {
    let j = geo.num_regions();
    let mut lambda: Vec<f64> = geo.regions.iter().map(|r| r.arrival_rate).collect();
    let mut months = Vec::with_capacity(config.months);
    for m in 0..config.months {
        let month_geo = geo.with_rates(&lambda);
        let mut totals = RegionCounters::new(j);
        for d in 0..config.days_per_month {
            let seed = config.seed + (m * config.days_per_month + d) as u64;
            let inst = month_geo.sample_instance(seed);
            let day = evaluate_day(policy, &month_geo, &inst, fleet_size)?;
            for r in 0..j {
                totals.total[r] += day.counters.total[r];
                totals.accepted[r] += day.counters.accepted[r];
            }
        }
        let service_rate: Vec<f64> = (0..j).map(|r| totals.rate(r)).collect();
        let days = config.days_per_month.max(1) as f64;
        let accepted_per_day = totals.accepted.iter().map(|&a| f64::from(a) / days).collect();
        months.push(MonthRecord { month: m + 1, lambda: lambda.clone(), service_rate: service_rate.clone(), accepted_per_day });
        for r in 0..j {
            lambda[r] = update_rate(lambda[r], service_rate[r], config.threshold);
        }
    }
    Ok(LongTermSeries { months, final_lambda: lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;
    use crate::policies::{Myopic, RejectAll};
    use crate::world::GeographyKind;
    use crate::DispatchState;

    fn desk() -> Geography {
        Geography::builtin(GeographyKind::Dens).scaled_rates(0.2)
    }

    #[test]
    fn reject_all_scores_zero() {
        let g = desk();
        let pool: Vec<_> = (0..5).map(|s| g.sample_instance(s)).collect();
        let r = evaluate(&mut RejectAll, &g, &pool, 1).unwrap();
        assert_eq!(r.utility, 0.0);
        assert_eq!((r.r_total, r.r_min, r.r_max), (0.0, 0.0, 0.0));
        assert!(r.r_regions.iter().all(|&x| x == 0.0));
        assert_eq!(r.instances, 5);
        assert_eq!((r.seed_min, r.seed_max), (Some(0), Some(4)));
    }

    #[test]
    fn report_bounds_and_quarters() {
        let g = desk();
        let pool: Vec<_> = (0..10).map(|s| g.sample_instance(s)).collect();
        let r = evaluate(&mut Myopic, &g, &pool, 1).unwrap();
        assert!(r.r_min <= r.r_total && r.r_total <= r.r_max);
        for &x in &r.r_regions {
            assert!(r.r_min <= x && x <= r.r_max);
        }
        let days: Vec<DayOutcome> = pool.iter().map(|i| evaluate_day(&mut Myopic, &g, i, 1).unwrap()).collect();
        let acc: u64 = days.iter().flat_map(|d| d.quarters.iter()).map(|q| u64::from(q.total_accepted())).sum();
        let tot: u64 = days.iter().flat_map(|d| d.quarters.iter()).map(|q| u64::from(q.total_requests())).sum();
        assert_eq!(acc as f64 / tot as f64, r.r_total);
    }

    #[test]
    fn pareto_flags() {
        let mk = |t: f64, m: f64| {
            let mut r = EvalReport::from_days(&[], 2);
            r.r_total = t;
            r.r_min = m;
            r
        };
        let rows = [(0.0, mk(0.8, 0.2)), (0.5, mk(0.7, 0.6)), (1.0, mk(0.6, 0.5))];
        let t = pareto_table(&rows);
        assert_eq!(t.iter().map(|r| r.dominated).collect::<Vec<_>>(), alloc::vec![false, false, true]);
    }

    #[test]
    fn profile_has_no_bins_after_cutoff_and_decays() {
        let g = desk();
        let pool: Vec<_> = (0..20).map(|s| g.sample_instance(s)).collect();
        let bins = reward_profile(&mut Myopic, &g, &pool, 1, 0.5).unwrap();
        assert!(bins.iter().all(|b| f64::from(b.minute) <= g.request_cutoff_minutes));
        assert!(window_mean_abs(&bins, 0, 30) > window_mean_abs(&bins, 360, 420));
        assert_eq!(bins, reward_profile(&mut Myopic, &g, &pool, 1, 0.5).unwrap());
    }

    /// Accepts exactly every other request of each region when feasible.
    struct Alternating;
    impl Policy for Alternating {
        fn decide(&mut self, s: &DispatchState, _g: &Geography) -> Action {
            let j = s.request.region;
            match s.feasibility.cheapest() {
                Some(m) if s.counters.total[j].is_multiple_of(2) => Action::Assign(m),
                _ => Action::Reject,
            }
        }
    }

    #[test]
    fn long_term_follows_update_rule() {
        let g = Geography::builtin(GeographyKind::Dist).scaled_rates(0.1);
        let cfg = LongTermConfig { months: 4, days_per_month: 3, threshold: 0.7, seed: 5 };
        let series = long_term(&mut Alternating, &g, 3, &cfg).unwrap();
        assert_eq!(series.months.len(), 4);
        for w in series.months.windows(2) {
            for r in 0..2 {
                let (old, new) = (w[0].lambda[r], w[1].lambda[r]);
                assert!((new / old - 1.0 - (w[0].service_rate[r] - cfg.threshold)).abs() < 1e-12);
            }
        }
        // Reject-all drives rates toward zero and zero stays zero.
        let cfg = LongTermConfig { months: 3, days_per_month: 2, threshold: 1.0, seed: 0 };
        let series = long_term(&mut RejectAll, &g, 3, &cfg).unwrap();
        assert!(series.final_lambda.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn fixed_point_rate_keeps_demand_constant() {
        assert_eq!(update_rate(40.0, 0.7, 0.7), 40.0);
        assert_eq!(update_rate(40.0, 0.5, 0.7), 40.0 * 0.8);
        assert_eq!(update_rate(0.0, 0.9, 0.7), 0.0);
        assert_eq!(update_rate(10.0, 0.0, 1.5), 0.0);
    }

    #[test]
    fn averaging_reports() {
        let g = desk();
        let pool: Vec<_> = (0..4).map(|s| g.sample_instance(s)).collect();
        let a = evaluate(&mut Myopic, &g, &pool, 1).unwrap();
        let b = evaluate(&mut RejectAll, &g, &pool, 1).unwrap();
        let m = average_reports(&[a.clone(), b]).unwrap();
        assert_eq!(m.r_total, a.r_total / 2.0);
        assert_eq!(m.r_regions[1], a.r_regions[1] / 2.0);
        assert_eq!(m.requests[0], 2 * a.requests[0]);
        assert_eq!(average_reports(core::slice::from_ref(&a)).unwrap(), a);
        assert!(average_reports(&[]).is_none());
    }

    #[test]
    fn averaging_series() {
        let g = desk();
        let cfg = LongTermConfig { months: 2, days_per_month: 2, threshold: 0.7, seed: 3 };
        let a = long_term(&mut Myopic, &g, 1, &cfg).unwrap();
        let b = long_term(&mut RejectAll, &g, 1, &cfg).unwrap();
        let m = average_series(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.months.len(), 2);
        assert_eq!(m.final_lambda[0], (a.final_lambda[0] + b.final_lambda[0]) / 2.0);
        assert_eq!(m.months[1].service_rate[1], a.months[1].service_rate[1] / 2.0);
        assert_eq!(average_series(core::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn objective_and_percent_difference() {
        let mut r = EvalReport::from_days(&[], 2);
        r.r_total = 0.6;
        r.r_min = 0.4;
        assert!((r.objective(0.5) - 0.5).abs() < 1e-15);
        assert!((percent_difference(0.45, 0.5) + 0.1).abs() < 1e-12);
    }
}
