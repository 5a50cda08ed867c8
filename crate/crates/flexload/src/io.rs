//! On-disk formats: JSON configs, CSV ingestion and emission, and the run
//! manifest that makes every CLI invocation reproducible.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fleet::{SimConfig, SimResult};
use crate::numeric::fmt_sig12;
use crate::policy::Rollout;
use crate::price::{JointSample, PriceModel, PricePair, StageDistribution};
use crate::thresholds::{LoadSpec, ThresholdTable};
use crate::{Error, Result};

pub fn read_load_spec(path: &Path) -> Result<LoadSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("reading {}: {e}", path.display())))?;
    let spec: LoadSpec = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("parsing {}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

pub fn read_price_model(path: &Path) -> Result<PriceModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("reading {}: {e}", path.display())))?;
    let model: PriceModel = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("parsing {}: {e}", path.display())))?;
    model.validate()?;
    Ok(model)
}

pub fn read_sim_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("reading {}: {e}", path.display())))?;
    let cfg: SimConfig = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("parsing {}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Price CSV ingestion. Two layouts share the entry point:
/// `stage,pi_e,pi_r` gives a deterministic path (point-mass stages), and
/// `stage,sample_idx,weight,eps_e,eps_r` gives per-stage empirical joint
/// innovations.
pub fn read_price_csv(path: &Path) -> Result<PriceModel> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::invalid(format!("reading {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::invalid(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["stage", "pi_e", "pi_r"] => {
            let mut rows: Vec<(usize, f64, f64)> = Vec::new();
            for rec in reader.deserialize() {
                let row: (usize, f64, f64) = rec.map_err(|e| Error::invalid(e.to_string()))?;
                rows.push(row);
            }
            rows.sort_by_key(|r| r.0);
            for (want, row) in rows.iter().enumerate() {
                if row.0 != want {
                    return Err(Error::invalid(format!(
                        "deterministic price CSV must cover stages 0..n contiguously (missing {want})"
                    )));
                }
            }
            if rows.is_empty() {
                return Err(Error::invalid("price CSV has no rows"));
            }
            let stages = rows
                .into_iter()
                .map(|(_, e, r)| StageDistribution::Independent {
                    energy: crate::price::Innovation::PointMass { value: e },
                    reserve: crate::price::Innovation::PointMass { value: r },
                })
                .collect();
            let model = PriceModel::independent(stages);
            model.validate()?;
            Ok(model)
        }
        ["stage", "sample_idx", "weight", "eps_e", "eps_r"] => {
            let mut by_stage: Vec<Vec<JointSample>> = Vec::new();
            for rec in reader.deserialize() {
                let (stage, _idx, weight, eps_e, eps_r): (usize, usize, f64, f64, f64) =
                    rec.map_err(|e| Error::invalid(e.to_string()))?;
                if by_stage.len() <= stage {
                    by_stage.resize(stage + 1, Vec::new());
                }
                by_stage[stage].push(JointSample { eps_e, eps_r, weight });
            }
            if by_stage.is_empty() {
                return Err(Error::invalid("price CSV has no rows"));
            }
            let stages = by_stage
                .into_iter()
                .enumerate()
                .map(|(t, joint)| {
                    if joint.is_empty() {
                        return Err(Error::invalid(format!("stage {t} has no samples")));
                    }
                    Ok(StageDistribution::JointEmpirical { joint })
                })
                .collect::<Result<_>>()?;
            let model = PriceModel::independent(stages);
            model.validate()?;
            Ok(model)
        }
        other => Err(Error::invalid(format!("unrecognized price CSV header {other:?}"))),
    }
}

/// Deterministic price path from a `stage,pi_e,pi_r` CSV.
pub fn read_price_path(path: &Path) -> Result<Vec<PricePair>> {
    let model = read_price_csv(path)?;
    Ok(model.sample_path_seeded(0))
}

/// Threshold table CSV: header `t,i,m_hat`, row-major by stage then piece,
/// the `i = 0` sentinel written as `-inf`, finite values with 12 significant
/// digits.
pub fn table_to_csv(table: &ThresholdTable) -> String {
    let mut out = String::from("t,i,m_hat\n");
    for t in 0..=table.horizon() {
        let _ = writeln!(out, "{t},0,-inf");
        for (idx, m) in table.row(t).iter().enumerate() {
            let _ = writeln!(out, "{t},{},{}", idx + 1, fmt_sig12(*m));
        }
    }
    out
}

pub fn write_table_csv(table: &ThresholdTable, path: &Path) -> Result<()> {
    fs::write(path, table_to_csv(table))
        .map_err(|e| Error::invalid(format!("writing {}: {e}", path.display())))
}

/// Parse a table CSV back into a `ThresholdTable`; capacity and penalty come
/// from the accompanying load spec.
pub fn read_table_csv(path: &Path, spec: &LoadSpec) -> Result<ThresholdTable> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::invalid(format!("reading {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::invalid(e.to_string()))?;
        if rec.len() != 3 {
            return Err(Error::invalid("table CSV rows must be t,i,m_hat"));
        }
        let t: usize = rec[0].parse().map_err(|_| Error::invalid("bad stage index"))?;
        let i: usize = rec[1].parse().map_err(|_| Error::invalid("bad piece index"))?;
        if rows.len() <= t {
            rows.resize(t + 1, Vec::new());
        }
        if i == 0 {
            if rec[2].trim() != "-inf" {
                return Err(Error::invalid("piece 0 must be the -inf sentinel"));
            }
            continue;
        }
        let m: f64 = rec[2].parse().map_err(|_| Error::invalid("bad threshold value"))?;
        if rows[t].len() + 1 != i {
            return Err(Error::invalid("table CSV pieces must be contiguous per stage"));
        }
        rows[t].push(m);
    }
    let table = ThresholdTable::from_rows(spec.capacity, spec.shortfall_penalty, rows)?;
    if table.horizon() != spec.horizon {
        return Err(Error::invalid(format!(
            "table horizon {} does not match spec horizon {}",
            table.horizon(),
            spec.horizon
        )));
    }
    // serialized at 12 significant digits, so compare loosely
    let tol = 1e-9 * spec.shortfall_penalty.abs().max(1.0);
    if table.row(table.horizon()).iter().any(|&m| (m - spec.shortfall_penalty).abs() > tol) {
        return Err(Error::invalid("terminal row does not match the spec's shortfall penalty"));
    }
    Ok(table)
}

/// Rollout CSV: `t,pi_e,pi_r,d,e,r,stage_cost`.
pub fn rollout_to_csv(rollout: &Rollout) -> String {
    let mut out = String::from("t,pi_e,pi_r,d,e,r,stage_cost\n");
    for s in &rollout.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.stage,
            fmt_sig12(s.prices.energy),
            fmt_sig12(s.prices.reserve),
            fmt_sig12(s.demand_before),
            fmt_sig12(s.decision.consume),
            fmt_sig12(s.decision.reserve_offer),
            fmt_sig12(s.stage_cost),
        );
    }
    out
}

/// `costs.csv`: one row per simulated policy.
pub fn costs_to_csv(result: &SimResult) -> String {
    let mut out = String::from("policy,mean_cost,ci_halfwidth,normalized\n");
    for s in &result.stats {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.policy.label(),
            fmt_sig12(s.mean_cost),
            fmt_sig12(s.ci_halfwidth),
            s.normalized.map_or_else(|| "".to_string(), fmt_sig12),
        );
    }
    out
}

/// `diurnal.csv`: mean aggregate load per slot and policy.
pub fn diurnal_to_csv(result: &SimResult) -> String {
    let mut out = String::from("slot,policy,mean_load\n");
    for s in &result.stats {
        for (slot, load) in s.diurnal.iter().enumerate() {
            let _ = writeln!(out, "{slot},{},{}", s.policy.label(), fmt_sig12(*load));
        }
    }
    out
}

/// `summary.json` payload for a simulation run.
#[derive(Debug, Serialize)]
pub struct SimSummary<'a> {
    pub seed: u64,
    pub n_scenarios: usize,
    pub fleet_size: usize,
    pub sessions: usize,
    pub dominance_violations: usize,
    pub conservation_violations: usize,
    pub policies: Vec<SimSummaryPolicy<'a>>,
}

#[derive(Debug, Serialize)]
pub struct SimSummaryPolicy<'a> {
    pub policy: &'a str,
    pub mean_cost: f64,
    pub ci_halfwidth: f64,
    pub normalized: Option<f64>,
    pub par: Option<f64>,
    pub mean_as_capacity: f64,
}

pub fn sim_summary(result: &SimResult) -> SimSummary<'_> {
    SimSummary {
        seed: result.seed,
        n_scenarios: result.n_scenarios,
        fleet_size: result.fleet_size,
        sessions: result.sessions,
        dominance_violations: result.dominance_violations,
        conservation_violations: result.conservation_violations,
        policies: result
            .stats
            .iter()
            .map(|s| SimSummaryPolicy {
                policy: s.policy.label(),
                mean_cost: s.mean_cost,
                ci_halfwidth: s.ci_halfwidth,
                normalized: s.normalized,
                par: s.par,
                mean_as_capacity: s.mean_as_capacity,
            })
            .collect(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Digest of a file on disk.
pub fn file_digest(path: &Path) -> Result<FileDigest> {
    let bytes =
        fs::read(path).map_err(|e| Error::invalid(format!("reading {}: {e}", path.display())))?;
    Ok(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one CLI run: what was asked, of which inputs, producing which
/// outputs. Rerunning the same manifest reproduces the outputs bit for bit.
/// Worker count is deliberately absent: it never affects results.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    /// Digest over the subcommand, resolved parameters and input digests.
    pub config_digest: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, params: &str, inputs: Vec<FileDigest>) -> Self {
        let mut blob = format!("{subcommand}\n{seed}\n{params}\n");
        for i in &inputs {
            let _ = writeln!(blob, "{}:{}", i.path, i.sha256);
        }
        RunManifest {
            tool: "flexload".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            seed,
            config_digest: sha256_hex(blob.as_bytes()),
            inputs,
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(file_digest(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("serializing manifest: {e}")))?;
        fs::write(path, text)
            .map_err(|e| Error::invalid(format!("writing {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::price::Innovation;
    use crate::thresholds::compile_independent;

    fn worked_table() -> (LoadSpec, ThresholdTable) {
        let spec = LoadSpec { demand: 1.5, capacity: 1.0, horizon: 2, shortfall_penalty: 10.0 };
        let model = PriceModel::independent(vec![
            StageDistribution::Independent {
                energy: Innovation::PointMass { value: 5.0 },
                reserve: Innovation::PointMass { value: 1.0 },
            },
            StageDistribution::Independent {
                energy: Innovation::PointMass { value: 7.0 },
                reserve: Innovation::PointMass { value: 0.0 },
            },
        ]);
        let table = compile_independent(&spec, &model).unwrap();
        (spec, table)
    }

    #[test]
    fn table_csv_round_trip() {
        let (spec, table) = worked_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        write_table_csv(&table, &path).unwrap();
        let read = read_table_csv(&path, &spec).unwrap();
        assert_eq!(read.horizon(), table.horizon());
        for t in 0..=2 {
            for i in 0..2 {
                assert!((read.row(t)[i] - table.row(t)[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn table_csv_layout() {
        let (_, table) = worked_table();
        let text = table_to_csv(&table);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,i,m_hat"));
        assert_eq!(lines.next(), Some("0,0,-inf"));
        assert!(lines.next().unwrap().starts_with("0,1,4.0"));
    }

    #[test]
    fn deterministic_price_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prices.csv");
        fs::write(&path, "stage,pi_e,pi_r\n0,5.0,1.0\n1,7.0,0.0\n").unwrap();
        let model = read_price_csv(&path).unwrap();
        let got = model.sample_path_seeded(3);
        assert_eq!(got, vec![PricePair::new(5.0, 1.0), PricePair::new(7.0, 0.0)]);
    }

    #[test]
    fn empirical_price_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("innov.csv");
        fs::write(&path, "stage,sample_idx,weight,eps_e,eps_r\n0,0,1.0,1.0,0.0\n0,1,1.0,3.0,0.0\n")
            .unwrap();
        let model = read_price_csv(&path).unwrap();
        assert_eq!(model.horizon(), 1);
        assert_eq!(model.effective_cdf(0, 2.0).unwrap(), 0.5);
    }

    #[test]
    fn rejects_gapped_stage_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prices.csv");
        fs::write(&path, "stage,pi_e,pi_r\n0,5.0,1.0\n2,7.0,0.0\n").unwrap();
        assert!(read_price_csv(&path).is_err());
    }

    #[test]
    fn manifest_digest_depends_on_params() {
        let a = RunManifest::new("thresholds", 1, "mode=independent", vec![]);
        let b = RunManifest::new("thresholds", 1, "mode=correlated", vec![]);
        assert_ne!(a.config_digest, b.config_digest);
    }
}
