//! Textual policy selection: `myopic`, `reject-all`, `bucket:<threshold>`,
//! `bucket:search`, `reserved:<vehicles>`, `weights:<file>` and `run:<dir>`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fairdispatch_core::{Bucket, Geography, Mlp, Myopic, Policy, QPolicy, RejectAll, Reserved};

use crate::error::CliError;
use crate::formats::load_weights;

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Myopic,
    RejectAll,
    Bucket(f64),
    /// Bucket with the threshold found on the validation pool.
    BucketSearch,
    Reserved(usize),
    Weights(PathBuf),
    /// The last ten checkpoints of a training run.
    Run(PathBuf),
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = s.split_once(':').map_or((s, None), |(h, a)| (h, Some(a)));
        let need = |what: &str| arg.ok_or_else(|| format!("`{head}` needs `{head}:<{what}>`"));
        Ok(match head {
            "myopic" => PolicySpec::Myopic,
            "reject-all" => PolicySpec::RejectAll,
            "bucket" => match need("threshold|search")? {
                "search" => PolicySpec::BucketSearch,
                k => PolicySpec::Bucket(k.parse().map_err(|e| format!("bucket threshold `{k}`: {e}"))?),
            },
            "reserved" => {
                let k = need("vehicles")?;
                PolicySpec::Reserved(k.parse().map_err(|e| format!("reserved vehicles `{k}`: {e}"))?)
            }
            "weights" => PolicySpec::Weights(need("file")?.into()),
            "run" => PolicySpec::Run(need("dir")?.into()),
            _ => return Err(format!("unknown policy `{s}`")),
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Myopic => write!(f, "myopic"),
            PolicySpec::RejectAll => write!(f, "reject-all"),
            PolicySpec::Bucket(k) => write!(f, "bucket:{k}"),
            PolicySpec::BucketSearch => write!(f, "bucket:search"),
            PolicySpec::Reserved(k) => write!(f, "reserved:{k}"),
            PolicySpec::Weights(p) => write!(f, "weights:{}", p.display()),
            PolicySpec::Run(p) => write!(f, "run:{}", p.display()),
        }
    }
}

/// A policy ready to be instantiated once per worker.
#[derive(Debug, Clone)]
pub enum Resolved {
    Myopic,
    RejectAll,
    Bucket(Bucket),
    Reserved(Reserved),
    Q(Mlp),
}

impl Resolved {
    pub fn instantiate(&self) -> Box<dyn Policy + Send> {
        match self {
            Resolved::Myopic => Box::new(Myopic),
            Resolved::RejectAll => Box::new(RejectAll),
            Resolved::Bucket(b) => Box::new(*b),
            Resolved::Reserved(r) => Box::new(*r),
            Resolved::Q(net) => Box::new(QPolicy::new(net.clone())),
        }
    }

    /// Checks a network against the feature layout of `geo` with `fleet_size` vehicles.
    pub fn check_fits(&self, geo: &Geography, fleet_size: usize) -> Result<(), CliError> {
        if let Resolved::Q(net) = self {
            let d = fairdispatch_core::features::dimension(geo.num_regions(), fleet_size);
            if net.input_dim() != d || net.output_dim() != fleet_size + 1 {
                return Err(CliError::Config(format!(
                    "network expects {} inputs and {} actions, setup has {d} and {}",
                    net.input_dim(),
                    net.output_dim(),
                    fleet_size + 1
                )));
            }
        }
        Ok(())
    }
}

/// Checkpoint files of a run directory, ordered by epoch.
pub fn checkpoints(run: &Path) -> Result<Vec<(usize, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(run).map_err(CliError::io(run))? {
        let path = entry.map_err(CliError::io(run))?.path();
        let epoch = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("ckpt_"))
            .and_then(|n| n.strip_suffix(".json"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(e) = epoch {
            out.push((e, path));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::Config(format!("{}: no checkpoints", run.display())));
    }
    Ok(out)
}

/// Resolves a spec into one or more concrete policies (several for a run directory).
pub fn resolve(spec: &PolicySpec, num_regions: usize, fleet_size: usize) -> Result<Vec<Resolved>, CliError> {
    let cfg = |e: fairdispatch_core::policies::PolicyError| CliError::Config(e.to_string());
    Ok(match spec {
        PolicySpec::Myopic => vec![Resolved::Myopic],
        PolicySpec::RejectAll => vec![Resolved::RejectAll],
        PolicySpec::Bucket(k) => vec![Resolved::Bucket(Bucket::new(*k).map_err(cfg)?)],
        PolicySpec::BucketSearch => {
            return Err(CliError::Config("bucket:search must be resolved against a validation pool".into()))
        }
        PolicySpec::Reserved(k) => vec![Resolved::Reserved(Reserved::new(*k, fleet_size, num_regions).map_err(cfg)?)],
        PolicySpec::Weights(p) => vec![Resolved::Q(load_weights(p)?)],
        PolicySpec::Run(dir) => {
            let all = checkpoints(dir)?;
            let tail = &all[all.len().saturating_sub(10)..];
            tail.iter().map(|(_, p)| load_weights(p).map(Resolved::Q)).collect::<Result<_, _>>()?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["myopic", "reject-all", "bucket:0.25", "bucket:search", "reserved:2", "weights:w.json", "run:out/r"] {
            let p: PolicySpec = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("bucket".parse::<PolicySpec>().is_err());
        assert!("reserved:x".parse::<PolicySpec>().is_err());
        assert!("greedy".parse::<PolicySpec>().is_err());
    }

    #[test]
    fn reserved_needs_two_vehicles() {
        assert!(resolve(&PolicySpec::Reserved(1), 2, 1).is_err());
        assert_eq!(resolve(&PolicySpec::Reserved(1), 2, 2).unwrap().len(), 1);
    }
}
