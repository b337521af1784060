//! The subcommands. Every command writes only under its output directory and
//! never records wall-clock data, so reruns reproduce files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use fairdispatch_core::eval::{self, average_reports, average_series, EvalReport, LongTermConfig, LongTermSeries, ParetoRow, ProfileBin};
use fairdispatch_core::policies::{BucketGrid, BucketSearch};
use fairdispatch_core::{dqn, features, Bucket, Geography, RequestInstance, RewardSpec, TrainOutcome};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::{self, write_json, Manifest, ManifestEntry};
use crate::parallel;
use crate::policy_spec::{self, PolicySpec, Resolved};

/// Settings shared by every command.
#[derive(Debug)]
pub struct Context {
    pub config: RunConfig,
    pub geography: Geography,
    pub pool: rayon::ThreadPool,
    pub out: PathBuf,
}

impl Context {
    pub fn new(config: RunConfig, jobs: usize, out: PathBuf) -> Result<Self, CliError> {
        let geography = config.validate()?;
        let pool = parallel::thread_pool(jobs)?;
        fs::create_dir_all(&out).map_err(CliError::io(&out))?;
        Ok(Self { config, geography, pool, out })
    }

    fn fleet_size(&self) -> usize {
        self.config.train.fleet_size
    }

    fn test_instances(&self, manifest: Option<&Path>) -> Result<Vec<RequestInstance>, CliError> {
        match manifest {
            Some(path) => {
                let (geo, instances) = Manifest::load_instances(path)?;
                if geo.num_regions() != self.geography.num_regions() {
                    return Err(CliError::Config(format!(
                        "{}: {} regions, configuration has {}",
                        path.display(),
                        geo.num_regions(),
                        self.geography.num_regions()
                    )));
                }
                Ok(instances)
            }
            None => Ok(self.config.pools.test.sample(&self.geography)),
        }
    }

    fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out.join(name)
    }
}

#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    package: &'static str,
    version: &'static str,
    weights_schema: u32,
    command: &'a str,
    geography: &'a Geography,
}

fn write_meta(config: &RunConfig, geography: &Geography, dir: &Path, command: &str) -> Result<(), CliError> {
    write_json(&dir.join("config.json"), config)?;
    write_json(
        &dir.join("meta.json"),
        &RunMeta {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            weights_schema: fairdispatch_core::approximator::SCHEMA_VERSION,
            command,
            geography,
        },
    )
}

/// Writes `count` instances with seeds `start..start + count` plus a manifest.
pub fn gen(ctx: &Context, start: u64, count: u64) -> Result<Manifest, CliError> {
    let dir = ctx.path("instances");
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    let mut entries = Vec::with_capacity(count as usize);
    for seed in start..start + count {
        let file = PathBuf::from("instances").join(format!("instance_{seed}.csv"));
        formats::write_instance(&ctx.path(&file), &ctx.geography.sample_instance(seed))?;
        entries.push(ManifestEntry { seed, file });
    }
    let manifest = Manifest { geography: ctx.geography.clone(), instances: entries };
    write_json(&ctx.path("manifest.json"), &manifest)?;
    write_json(&ctx.path("geography.json"), &ctx.geography)?;
    Ok(manifest)
}

/// Trains with the configuration in `ctx` and writes a run directory at `dir`.
pub fn train_into(ctx: &Context, config: &RunConfig, dir: &Path, quiet: bool) -> Result<TrainOutcome, CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    write_meta(config, &ctx.geography, dir, "train")?;
    let fleet = config.train.fleet_size;
    write_json(&dir.join("features.json"), &features::schema(&ctx.geography, fleet))?;

    let pool = config.pools.train.sample(&ctx.geography);
    let validation = config.pools.validation.sample(&ctx.geography);
    let interval = config.train.checkpoint_interval();
    let outcome = dqn::train(&config.train, &ctx.geography, &pool, &validation, |row| {
        if !quiet && row.epoch % interval == 0 {
            eprintln!(
                "epoch {:>7}  eps {:.3}  loss {}  r_total {}  r_min {}",
                row.epoch,
                row.epsilon,
                fmt_opt(row.loss),
                fmt_opt(row.eval_r_total),
                fmt_opt(row.eval_r_min)
            );
        }
    })?;

    for ck in &outcome.checkpoints {
        formats::save_weights(&dir.join(format!("ckpt_{}.json", ck.epoch)), &ck.net)?;
    }
    let path = dir.join("train_log.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    w.write_record(["epoch", "epsilon", "loss", "eval_r_total", "eval_r_min"]).map_err(|e| csv_err(&path, e))?;
    for row in &outcome.log {
        w.write_record([
            row.epoch.to_string(),
            row.epsilon.to_string(),
            opt_field(row.loss),
            opt_field(row.eval_r_total),
            opt_field(row.eval_r_min),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(CliError::io(&path))?;
    Ok(outcome)
}

pub fn train(ctx: &Context) -> Result<TrainOutcome, CliError> {
    train_into(ctx, &ctx.config, &ctx.out, false)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn opt_field(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// Policies a spec stands for; `bucket:search` is resolved on the validation pool.
pub fn resolve_policies(ctx: &Context, spec: &PolicySpec) -> Result<Vec<Resolved>, CliError> {
    let fleet = ctx.fleet_size();
    let resolved = match spec {
        PolicySpec::BucketSearch => {
            let search = run_bucket_search(ctx)?;
            vec![Resolved::Bucket(Bucket::new(search.best).map_err(|e| CliError::Contract(e.to_string()))?)]
        }
        other => policy_spec::resolve(other, ctx.geography.num_regions(), fleet)?,
    };
    for r in &resolved {
        r.check_fits(&ctx.geography, fleet)?;
    }
    Ok(resolved)
}

fn run_bucket_search(ctx: &Context) -> Result<BucketSearch, CliError> {
    let validation = ctx.config.pools.validation.sample(&ctx.geography);
    Ok(parallel::bucket_search(&ctx.pool, &ctx.geography, &validation, ctx.fleet_size(), BucketGrid::default())?)
}

/// Evaluates each resolved policy on `instances`; a run directory yields the mean report.
pub fn evaluate_resolved(ctx: &Context, policies: &[Resolved], instances: &[RequestInstance]) -> Result<(EvalReport, Vec<EvalReport>), CliError> {
    let reports = policies
        .iter()
        .map(|p| parallel::evaluate(&ctx.pool, || p.instantiate(), &ctx.geography, instances, ctx.fleet_size()))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = average_reports(&reports).ok_or_else(|| CliError::Config("no policy to evaluate".into()))?;
    Ok((mean, reports))
}

#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub policy: String,
    pub fleet_size: usize,
    /// Weight of fairness in the reported objective.
    pub alpha: f64,
    pub objective: f64,
    pub report: EvalReport,
    /// Per-policy reports when several were averaged.
    pub members: Vec<EvalReport>,
}

/// Evaluates a policy on the test pool (or the instances of `manifest`).
/// With `logs > 0`, decision logs and route traces of the first `logs` days
/// are written under `logs/`.
pub fn eval(ctx: &Context, spec: &PolicySpec, manifest: Option<&Path>, logs: usize) -> Result<EvalSummary, CliError> {
    let policies = resolve_policies(ctx, spec)?;
    let instances = ctx.test_instances(manifest)?;
    let (report, mut members) = evaluate_resolved(ctx, &policies, &instances)?;
    if members.len() == 1 {
        members.clear();
    }
    let alpha = ctx.config.train.reward.alpha;
    let summary =
        EvalSummary { policy: spec.to_string(), fleet_size: ctx.fleet_size(), alpha, objective: report.objective(alpha), report, members };
    write_json(&ctx.path("report.json"), &summary)?;
    write_report_csv(&ctx.path("report.csv"), &summary)?;

    if logs > 0 {
        let dir = ctx.path("logs");
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        let mut policy = policies[policies.len() - 1].instantiate();
        for inst in instances.iter().take(logs) {
            let ep = eval::simulate_day(&mut policy, &ctx.geography, inst, ctx.fleet_size(), ctx.config.train.reward.clone())?;
            formats::write_decision_log(&dir.join(format!("decisions_{}.csv", inst.seed)), ep.decisions(), ctx.geography.num_regions())?;
            formats::write_route_trace(&dir.join(format!("routes_{}.csv", inst.seed)), ep.departures())?;
        }
    }
    Ok(summary)
}

fn write_report_csv(path: &Path, s: &EvalSummary) -> Result<(), CliError> {
    let j = s.report.r_regions.len();
    let mut header: Vec<String> =
        ["policy", "member", "instances", "utility", "utility_std", "r_total", "r_min", "r_max", "objective"].map(String::from).into();
    header.extend((1..=j).map(|r| format!("r_{r}")));
    header.extend((1..=s.report.quarters.len()).flat_map(|q| [format!("q{q}_r_total"), format!("q{q}_r_min")]));
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let row = |member: String, r: &EvalReport| {
        let mut row = vec![
            s.policy.clone(),
            member,
            r.instances.to_string(),
            r.utility.to_string(),
            r.utility_std.to_string(),
            r.r_total.to_string(),
            r.r_min.to_string(),
            r.r_max.to_string(),
            r.objective(s.alpha).to_string(),
        ];
        row.extend(r.r_regions.iter().map(f64::to_string));
        row.extend(r.quarters.iter().flat_map(|q| [q.r_total.to_string(), q.r_min.to_string()]));
        row
    };
    for (i, m) in s.members.iter().enumerate() {
        w.write_record(row((i + 1).to_string(), m)).map_err(|e| csv_err(path, e))?;
    }
    w.write_record(row("mean".into(), &s.report)).map_err(|e| csv_err(path, e))?;
    w.flush().map_err(CliError::io(path))
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub rows: Vec<ParetoRow>,
    pub reports: Vec<(f64, EvalReport)>,
}

/// Trains one run per `alpha` under `alpha_<a>/`, evaluates the mean of each
/// run's last ten checkpoints on the test pool and writes the Pareto table.
pub fn sweep(ctx: &Context, alphas: &[f64], manifest: Option<&Path>) -> Result<SweepSummary, CliError> {
    if alphas.is_empty() {
        return Err(CliError::Config("sweep needs at least one alpha".into()));
    }
    let instances = ctx.test_instances(manifest)?;
    let mut reports = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut config = ctx.config.clone();
        config.train.reward = RewardSpec { alpha, ..config.train.reward.clone() };
        config.validate()?;
        let dir = ctx.path(format!("alpha_{alpha}"));
        eprintln!("training alpha = {alpha}");
        train_into(ctx, &config, &dir, false)?;
        let policies = policy_spec::resolve(&PolicySpec::Run(dir), ctx.geography.num_regions(), config.train.fleet_size)?;
        let (mean, _) = evaluate_resolved(ctx, &policies, &instances)?;
        reports.push((alpha, mean));
    }
    let rows = eval::pareto_table(&reports);
    let path = ctx.path("pareto.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for r in &rows {
        w.serialize(r).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(CliError::io(&path))?;
    let summary = SweepSummary { rows, reports };
    write_json(&ctx.path("pareto.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct BucketSummary {
    pub search: BucketSearch,
    /// The best threshold on the test pool.
    pub test: EvalReport,
}

pub fn bucket_search(ctx: &Context, manifest: Option<&Path>) -> Result<BucketSummary, CliError> {
    let search = run_bucket_search(ctx)?;
    let path = ctx.path("bucket_search.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["threshold", "r_min"]).map_err(|e| csv_err(&path, e))?;
    for (k, r) in &search.curve {
        w.write_record([k.to_string(), r.to_string()]).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(CliError::io(&path))?;
    let instances = ctx.test_instances(manifest)?;
    let best = Bucket::new(search.best).map_err(|e| CliError::Contract(e.to_string()))?;
    let test = parallel::evaluate(&ctx.pool, || best, &ctx.geography, &instances, ctx.fleet_size())?;
    let summary = BucketSummary { search, test };
    write_json(&ctx.path("bucket_search.json"), &summary)?;
    Ok(summary)
}

/// Long-term demand feedback; a run directory averages the series of its
/// last ten checkpoints. Policies are simulated in parallel.
pub fn longterm(ctx: &Context, spec: &PolicySpec, lt: &LongTermConfig) -> Result<LongTermSeries, CliError> {
    if !(lt.threshold > 0.0 && lt.threshold < 1.0) {
        return Err(CliError::Config(format!("long-term threshold {} outside (0, 1)", lt.threshold)));
    }
    if lt.months == 0 || lt.days_per_month == 0 {
        return Err(CliError::Config("long-term simulation needs at least one month of one day".into()));
    }
    let policies = resolve_policies(ctx, spec)?;
    let fleet = ctx.fleet_size();
    let all = ctx.pool.install(|| {
        use rayon::prelude::*;
        policies
            .par_iter()
            .map(|p| eval::long_term(&mut p.instantiate(), &ctx.geography, fleet, lt))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let series = average_series(&all).ok_or_else(|| CliError::Config("no policy to simulate".into()))?;

    let j = ctx.geography.num_regions();
    let path = ctx.path("longterm.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let mut header = vec!["month".to_string()];
    for r in 1..=j {
        header.extend([format!("lambda_{r}"), format!("service_rate_{r}"), format!("accepted_per_day_{r}")]);
    }
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for m in &series.months {
        let mut row = vec![m.month.to_string()];
        for r in 0..j {
            row.extend([m.lambda[r].to_string(), m.service_rate[r].to_string(), m.accepted_per_day[r].to_string()]);
        }
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(CliError::io(&path))?;
    write_json(&ctx.path("longterm.json"), &series)?;
    Ok(series)
}

#[derive(Debug, Serialize)]
pub struct ProfileSummary {
    pub policy: String,
    pub alpha: f64,
    pub days: usize,
    /// Mean |reward| over minutes `[0, 30)`.
    pub first_half_hour: f64,
    /// Mean |reward| over the last hour before the cutoff.
    pub last_hour: f64,
}

/// Per-minute rate-based reward under `spec` over the test pool.
pub fn reward_profile(ctx: &Context, spec: &PolicySpec, alpha: f64, manifest: Option<&Path>) -> Result<(Vec<ProfileBin>, ProfileSummary), CliError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CliError::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    let policies = resolve_policies(ctx, spec)?;
    if policies.len() != 1 {
        return Err(CliError::Config("reward profiles take a single policy; use weights:<file>".into()));
    }
    let instances = ctx.test_instances(manifest)?;
    let bins = eval::reward_profile(&mut policies[0].instantiate(), &ctx.geography, &instances, ctx.fleet_size(), alpha)?;
    let path = ctx.path("reward_profile.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["minute", "count", "mean", "mean_abs"]).map_err(|e| csv_err(&path, e))?;
    for b in &bins {
        w.write_record([b.minute.to_string(), b.count.to_string(), b.mean.to_string(), b.mean_abs.to_string()])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(CliError::io(&path))?;
    let cutoff = ctx.geography.request_cutoff_minutes as u32;
    let summary = ProfileSummary {
        policy: spec.to_string(),
        alpha,
        days: instances.len(),
        first_half_hour: eval::window_mean_abs(&bins, 0, 30),
        last_hour: eval::window_mean_abs(&bins, cutoff.saturating_sub(60), cutoff + 1),
    };
    write_json(&ctx.path("reward_profile.json"), &summary)?;
    Ok((bins, summary))
}
