//! On-disk formats: JSON documents, instance / trace / decision CSVs and weight files.

use std::fs;
use std::path::{Path, PathBuf};

use fairdispatch_core::env::DecisionRecord;
use fairdispatch_core::routing::Departure;
use fairdispatch_core::{Geography, Mlp, MlpFile, Point, Request, RequestInstance};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Contract(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn read_geography(path: &Path) -> Result<Geography, CliError> {
    let geo: Geography = read_json(path)?;
    geo.validate().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(geo)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

#[derive(Debug, Deserialize)]
struct InstanceRow {
    index: usize,
    time_min: f64,
    x_km: f64,
    y_km: f64,
    /// 1-based.
    region: usize,
    deadline_min: f64,
}

/// Times are written with three decimals, coordinates at full precision.
pub fn write_instance(path: &Path, instance: &RequestInstance) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["index", "time_min", "x_km", "y_km", "region", "deadline_min"]).map_err(|e| csv_error(path, e))?;
    for r in &instance.requests {
        w.write_record([
            r.index.to_string(),
            format!("{:.3}", r.time),
            r.location.x.to_string(),
            r.location.y.to_string(),
            (r.region + 1).to_string(),
            format!("{:.3}", r.deadline),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Reads an instance file and checks it against `geo`.
pub fn read_instance(path: &Path, seed: u64, geo: &Geography) -> Result<RequestInstance, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut requests = Vec::new();
    for row in rdr.deserialize::<InstanceRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let bad = |what: &str| CliError::Config(format!("{}: request {}: {what}", path.display(), row.index));
        if row.region == 0 || row.region > geo.num_regions() {
            return Err(bad("unknown region"));
        }
        if row.index != requests.len() + 1 {
            return Err(bad("indices must run 1, 2, 3, ..."));
        }
        if requests.last().is_some_and(|p: &Request| p.time > row.time_min) {
            return Err(bad("requests must be sorted by time"));
        }
        requests.push(Request {
            index: row.index,
            time: row.time_min,
            location: Point::new(row.x_km, row.y_km),
            region: row.region - 1,
            deadline: row.deadline_min,
        });
    }
    Ok(RequestInstance { seed, requests })
}

/// Depart / arrive / return events of every tour, vehicles 1-based.
pub fn write_route_trace(path: &Path, departures: &[Departure]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["vehicle", "event", "time_min", "customer"]).map_err(|e| csv_error(path, e))?;
    for dep in departures {
        for ev in dep.events() {
            let customer = ev.customer.map(|c| c.to_string()).unwrap_or_default();
            w.write_record([(ev.vehicle + 1).to_string(), ev.kind.as_str().into(), ev.time.to_string(), customer])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(CliError::io(path))
}

/// One row per decision with the acceptance counters after it.
pub fn write_decision_log(path: &Path, decisions: &[DecisionRecord], num_regions: usize) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["k", "time_min", "region", "action", "vehicle", "reward"].map(String::from).into();
    header.extend((1..=num_regions).map(|j| format!("psi_accept_{j}")));
    header.extend((1..=num_regions).map(|j| format!("psi_total_{j}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for d in decisions {
        let (action, vehicle) = match d.action {
            fairdispatch_core::Action::Reject => ("reject", String::new()),
            fairdispatch_core::Action::Assign(m) => ("assign", (m + 1).to_string()),
        };
        let mut row =
            vec![d.k.to_string(), d.time.to_string(), (d.region + 1).to_string(), action.into(), vehicle, d.reward.to_string()];
        row.extend(d.counters_after.accepted.iter().map(u32::to_string));
        row.extend(d.counters_after.total.iter().map(u32::to_string));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn save_weights(path: &Path, net: &Mlp) -> Result<(), CliError> {
    let text = serde_json::to_string(&net.to_file()).map_err(|e| CliError::Contract(e.to_string()))?;
    fs::write(path, text + "\n").map_err(CliError::io(path))
}

pub fn load_weights(path: &Path) -> Result<Mlp, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let file: MlpFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: schema: {e}", path.display())))?;
    Mlp::from_file(&file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Index of a generated instance set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub geography: Geography,
    pub instances: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub file: PathBuf,
}

impl Manifest {
    /// Loads every instance listed in the manifest at `path`.
    pub fn load_instances(path: &Path) -> Result<(Geography, Vec<RequestInstance>), CliError> {
        let m: Manifest = read_json(path)?;
        m.geography.validate().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let instances = m
            .instances
            .iter()
            .map(|e| read_instance(&dir.join(&e.file), e.seed, &m.geography))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((m.geography, instances))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fairdispatch_core::{Episode, GeographyKind, Myopic, Policy, RewardSpec};

    #[test]
    fn instance_csv_round_trips_up_to_time_rounding() {
        let dir = tempfile::tempdir().unwrap();
        let geo = Geography::builtin(GeographyKind::Dist).scaled_rates(0.1);
        for seed in [0, 7, 99] {
            let inst = geo.sample_instance(seed);
            let p = dir.path().join(format!("i{seed}.csv"));
            write_instance(&p, &inst).unwrap();
            let back = read_instance(&p, seed, &geo).unwrap();
            assert_eq!(back.len(), inst.len());
            for (a, b) in back.requests.iter().zip(&inst.requests) {
                assert_eq!((a.index, a.region, a.location), (b.index, b.region, b.location));
                assert!((a.time - b.time).abs() <= 5e-4 && (a.deadline - b.deadline).abs() <= 5e-4);
            }
            // A second pass is a fixed point.
            let p2 = dir.path().join(format!("j{seed}.csv"));
            write_instance(&p2, &back).unwrap();
            assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
            assert_eq!(read_instance(&p2, seed, &geo).unwrap(), back);
        }
        let empty = RequestInstance { seed: 3, requests: vec![] };
        let p = dir.path().join("empty.csv");
        write_instance(&p, &empty).unwrap();
        assert_eq!(read_instance(&p, 3, &geo).unwrap(), empty);
    }

    #[test]
    fn bad_instance_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let geo = Geography::builtin(GeographyKind::Dist);
        let p = dir.path().join("bad.csv");
        fs::write(&p, "index,time_min,x_km,y_km,region,deadline_min\n1,5,1,1,3,245\n").unwrap();
        assert!(matches!(read_instance(&p, 0, &geo), Err(CliError::Config(_))));
        fs::write(&p, "index,time_min,x_km,y_km,region,deadline_min\n1,5,1,1,1,245\n2,4,1,1,1,244\n").unwrap();
        assert!(matches!(read_instance(&p, 0, &geo), Err(CliError::Config(_))));
    }

    #[test]
    fn weights_round_trip_bit_identical_and_truncation_fails() {
        let dir = tempfile::tempdir().unwrap();
        let net = Mlp::new(&[9, 50, 50, 2], 5).unwrap();
        let p = dir.path().join("w.json");
        save_weights(&p, &net).unwrap();
        let back = load_weights(&p).unwrap();
        assert_eq!(back.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), net.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_weights(&p), Err(CliError::Config(_))));
    }

    #[test]
    fn traces_and_logs_have_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        let geo = Geography::builtin(GeographyKind::Dens).scaled_rates(0.05);
        let inst = geo.sample_instance(4);
        let mut ep = Episode::reset(&geo, &inst, 1, RewardSpec::modified(0.5)).unwrap();
        while let Some(s) = ep.state() {
            let a = Myopic.decide(s, &geo);
            ep.step(a).unwrap();
        }
        let p = dir.path().join("routes.csv");
        write_route_trace(&p, ep.departures()).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("vehicle,event,time_min,customer\n"));
        let accepted = ep.decisions().iter().filter(|d| d.action.accepts()).count();
        assert_eq!(text.lines().filter(|l| l.contains(",arrive,")).count(), accepted);
        let p = dir.path().join("decisions.csv");
        write_decision_log(&p, ep.decisions(), 2).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), inst.len() + 1);
        assert!(text.starts_with("k,time_min,region,action,vehicle,reward,psi_accept_1,psi_accept_2,psi_total_1,psi_total_2\n"));
    }
}
