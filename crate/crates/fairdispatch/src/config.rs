//! Run configuration and the named `desk` / `paper` profiles.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fairdispatch_core::world::DEFAULT_REGION_WIDTH_KM;
use fairdispatch_core::{Geography, GeographyKind, Point, RequestInstance, RewardSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

/// Where the geography comes from: a built-in layout with overrides, or a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeographyConfig {
    #[serde(default)]
    pub builtin: Option<GeographyKind>,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default = "default_width")]
    pub region_width_km: f64,
    #[serde(default)]
    pub depot_offset: Option<Point>,
    /// Per-region arrival rates replacing the layout's defaults.
    #[serde(default)]
    pub rates: Option<Vec<f64>>,
}

fn default_width() -> f64 {
    DEFAULT_REGION_WIDTH_KM
}

impl GeographyConfig {
    pub fn builtin(kind: GeographyKind, rates: Option<Vec<f64>>) -> Self {
        Self { builtin: Some(kind), file: None, region_width_km: DEFAULT_REGION_WIDTH_KM, depot_offset: None, rates }
    }

    pub fn resolve(&self) -> Result<Geography, CliError> {
        let geo = match (&self.builtin, &self.file) {
            (Some(kind), None) => Geography::builtin_with(*kind, self.region_width_km, self.depot_offset)
                .map_err(|e| CliError::Config(format!("geography: {e}")))?,
            (None, Some(path)) => crate::formats::read_geography(path)?,
            _ => return Err(CliError::Config("geography needs exactly one of `builtin` or `file`".into())),
        };
        let geo = match &self.rates {
            Some(r) if r.len() != geo.num_regions() => {
                return Err(CliError::Config(format!(
                    "geography has {} regions but {} rates were given",
                    geo.num_regions(),
                    r.len()
                )))
            }
            Some(r) => geo.with_rates(r),
            None => geo,
        };
        geo.validate().map_err(|e| CliError::Config(format!("geography: {e}")))?;
        Ok(geo)
    }
}

/// A contiguous block of instance seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedBlock {
    pub start: u64,
    pub count: u64,
}

impl SeedBlock {
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.start..self.start + self.count
    }

    pub fn sample(&self, geo: &Geography) -> Vec<RequestInstance> {
        self.seeds().map(|s| geo.sample_instance(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pools {
    pub train: SeedBlock,
    /// Used for checkpoint evaluation and the bucket threshold search.
    pub validation: SeedBlock,
    pub test: SeedBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub geography: GeographyConfig,
    /// Fleet size, reward and all learning hyperparameters.
    pub train: TrainConfig,
    pub pools: Pools,
    /// Long-term simulation demand threshold.
    #[serde(default = "default_threshold")]
    pub longterm_threshold: f64,
}

fn default_threshold() -> f64 {
    0.70
}

impl RunConfig {
    /// G_dens with one fifth of the demand, one vehicle and 20000 epochs.
    pub fn desk() -> Self {
        let mut train = TrainConfig::new(20_000, 1, RewardSpec::modified(0.5));
        train.seed = 1;
        Self {
            profile: Profile::Desk,
            geography: GeographyConfig::builtin(GeographyKind::Dens, Some(vec![20.0, 80.0])),
            train,
            pools: Pools {
                train: SeedBlock { start: 0, count: 200 },
                validation: SeedBlock { start: 500_000, count: 20 },
                test: SeedBlock { start: 1_000_000, count: 100 },
            },
            longterm_threshold: 0.70,
        }
    }

    /// Full-scale G_dens with three vehicles.
    pub fn paper() -> Self {
        let mut train = TrainConfig::new(200_000, 3, RewardSpec::modified(0.5));
        train.seed = 1;
        Self {
            profile: Profile::Paper,
            geography: GeographyConfig::builtin(GeographyKind::Dens, None),
            train,
            pools: Pools {
                train: SeedBlock { start: 0, count: 1500 },
                validation: SeedBlock { start: 500_000, count: 50 },
                test: SeedBlock { start: 1_000_000, count: 500 },
            },
            longterm_threshold: 0.70,
        }
    }

    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Structural checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<Geography, CliError> {
        let geo = self.geography.resolve()?;
        self.train
            .validate(geo.num_regions())
            .map_err(|e| CliError::Config(format!("train: {e}")))?;
        if self.pools.train.count == 0 {
            return Err(CliError::Config("training pool is empty".into()));
        }
        if !(self.longterm_threshold > 0.0 && self.longterm_threshold < 1.0) {
            return Err(CliError::Config(format!("long-term threshold {} outside (0, 1)", self.longterm_threshold)));
        }
        Ok(geo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate_and_round_trip() {
        for p in [Profile::Desk, Profile::Paper] {
            let c = RunConfig::for_profile(p);
            c.validate().unwrap();
            let text = serde_json::to_string_pretty(&c).unwrap();
            assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        }
        let desk = RunConfig::desk().validate().unwrap();
        assert_eq!(desk.expected_total(), 100.0);
    }

    #[test]
    fn unknown_fields_and_bad_rates_are_config_errors() {
        let mut v = serde_json::to_value(RunConfig::desk()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
        let mut c = RunConfig::desk();
        c.geography.rates = Some(vec![1.0]);
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = RunConfig::desk();
        c.train.reward.alpha = 2.0;
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }
}
