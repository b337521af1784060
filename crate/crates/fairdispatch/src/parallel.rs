//! Day-parallel evaluation. Results are collected in instance order, so they
//! do not depend on the number of workers.

use fairdispatch_core::eval::{evaluate_day, DayOutcome, EvalReport};
use fairdispatch_core::policies::{bucket_search_with, BucketGrid, BucketSearch};
use fairdispatch_core::{Bucket, EnvError, Geography, Policy, RequestInstance};
use rayon::prelude::*;

use crate::error::CliError;

/// Worker pool with `jobs` threads; zero lets rayon pick.
pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

/// Evaluates every instance with a fresh policy per worker.
pub fn evaluate_days<F, P>(
    pool: &rayon::ThreadPool,
    make_policy: F,
    geo: &Geography,
    instances: &[RequestInstance],
    fleet_size: usize,
) -> Result<Vec<DayOutcome>, EnvError>
where
    F: Fn() -> P + Sync,
    P: Policy,
{
    pool.install(|| {
        instances
            .par_iter()
            .map_init(&make_policy, |policy, inst| evaluate_day(policy, geo, inst, fleet_size))
            .collect()
    })
}

pub fn evaluate<F, P>(
    pool: &rayon::ThreadPool,
    make_policy: F,
    geo: &Geography,
    instances: &[RequestInstance],
    fleet_size: usize,
) -> Result<EvalReport, EnvError>
where
    F: Fn() -> P + Sync,
    P: Policy,
{
    let days = evaluate_days(pool, make_policy, geo, instances, fleet_size)?;
    Ok(EvalReport::from_days(&days, geo.num_regions()))
}

/// Threshold search for the bucket policy with day-parallel evaluation.
pub fn bucket_search(
    pool: &rayon::ThreadPool,
    geo: &Geography,
    instances: &[RequestInstance],
    fleet_size: usize,
    grid: BucketGrid,
) -> Result<BucketSearch, EnvError> {
    let mut err = None;
    let res = bucket_search_with(grid, |k| {
        if err.is_some() {
            return f64::NEG_INFINITY;
        }
        let make = || Bucket::new(k).expect("grid stays in [0, 1]");
        match evaluate(pool, make, geo, instances, fleet_size) {
            Ok(r) => r.r_min,
            Err(e) => {
                err = Some(e);
                f64::NEG_INFINITY
            }
        }
    });
    err.map_or(Ok(res), Err)
}
