//! Artifact files: per-round curves, final accuracy table, check verdicts,
//! the reproducibility stamp and the multi-seed summary.
//!
//! `curves.csv`: header `round,client_id,loss,accuracy`, `,` separator, LF line
//! endings, one row per (round, client) in ascending order. `round` is 1-based
//! and counts server updates; `loss` is the held-out cross-entropy written in
//! shortest round-trip form; `accuracy` is a percentage with two decimals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::error::HarnessError;
use crate::scenario::{execute, CheckOutcome, MetricsTable, RunOutput};

pub const CURVES: &str = "curves.csv";
pub const ACCURACY: &str = "accuracy.json";
pub const CHECKS: &str = "checks.json";
pub const STAMP: &str = "stamp.json";
pub const SIGMA: &str = "accuracy_sigma.json";

/// Overrides the output root; each scenario then writes to `<root>/<name>`.
pub const OUTPUT_ROOT_ENV: &str = "DICTATOR_OUTPUT_ROOT";

/// Where a scenario writes: the explicit override, else `$DICTATOR_OUTPUT_ROOT/<name>`,
/// else the config's `outputs`, else `out/<name>`.
pub fn output_dir(cfg: &ScenarioConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(root).join(&cfg.name);
    }
    cfg.outputs
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

fn two_decimals(x: f64) -> Box<RawValue> {
    // JSON has no NaN
    let text = if x.is_finite() {
        format!("{x:.2}")
    } else {
        "null".to_string()
    };
    RawValue::from_string(text).expect("formatted number is valid JSON")
}

pub fn curves_csv(table: &MetricsTable) -> String {
    let mut out = String::from("round,client_id,loss,accuracy\n");
    for (t, row) in table.rows.iter().enumerate() {
        for (id, m) in table.clients.iter().zip(row) {
            let _ = writeln!(out, "{},{},{},{:.2}", t + 1, id, m.loss, 100.0 * m.accuracy);
        }
    }
    out
}

#[derive(Serialize)]
struct AccuracyFile<'a> {
    scenario: &'a str,
    seed: u64,
    round: usize,
    accuracy: BTreeMap<String, Box<RawValue>>,
    mean: Box<RawValue>,
}

pub fn accuracy_json(cfg: &ScenarioConfig, run: &RunOutput) -> String {
    let finals = run.table.final_accuracy();
    let mean = finals.iter().map(|(_, a)| 100.0 * a).sum::<f64>() / finals.len().max(1) as f64;
    let file = AccuracyFile {
        scenario: &cfg.name,
        seed: run.seed,
        round: run.table.rows.len(),
        accuracy: finals
            .iter()
            .map(|(id, a)| (id.to_string(), two_decimals(100.0 * a)))
            .collect(),
        mean: two_decimals(mean),
    };
    serde_json::to_string_pretty(&file).expect("serializable") + "\n"
}

#[derive(Serialize)]
struct ChecksFile<'a> {
    scenario: &'a str,
    seed: u64,
    skipped: bool,
    all_passed: bool,
    checks: &'a [CheckOutcome],
}

pub fn checks_json(cfg: &ScenarioConfig, run: &RunOutput) -> String {
    let file = ChecksFile {
        scenario: &cfg.name,
        seed: run.seed,
        skipped: run.checks.is_empty(),
        all_passed: run.all_checks_ok(),
        checks: &run.checks,
    };
    serde_json::to_string_pretty(&file).expect("serializable") + "\n"
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    Sha256::digest(cfg.to_toml().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn stamp_json(cfg: &ScenarioConfig, seed: u64) -> String {
    let unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let stamp = serde_json::json!({
        "config_sha256": config_hash(cfg),
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "generated_unix": unix,
    });
    serde_json::to_string_pretty(&stamp).expect("serializable") + "\n"
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), HarnessError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| HarnessError::io(path, e))
}

fn run_into(cfg: &ScenarioConfig, seed: u64, dir: &Path) -> Result<RunOutput, HarnessError> {
    let run = execute(cfg, seed)?;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write(dir, CURVES, &curves_csv(&run.table))?;
    write(dir, ACCURACY, &accuracy_json(cfg, &run))?;
    write(dir, CHECKS, &checks_json(cfg, &run))?;
    write(dir, STAMP, &stamp_json(cfg, seed))?;
    Ok(run)
}

/// Runs `cfg` with its `seed` and writes all artifacts into `dir`.
pub fn run_scenario(cfg: &ScenarioConfig, dir: &Path) -> Result<RunOutput, HarnessError> {
    run_into(cfg, cfg.seed, dir).map_err(|e| e.in_scenario(&cfg.name))
}

/// Mean and population standard deviation of each client's final accuracy, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTable {
    pub seeds: Vec<u64>,
    pub cells: BTreeMap<String, (f64, f64)>,
}

fn mean_sigma(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    // offset by the first sample so identical inputs give exactly zero spread
    let x0 = xs.first().copied().unwrap_or(0.0);
    let mean = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn sigma_table(runs: &[RunOutput]) -> SigmaTable {
    let mut per_cell: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in runs {
        let finals = run.table.final_accuracy();
        let mean = finals.iter().map(|(_, a)| 100.0 * a).sum::<f64>() / finals.len().max(1) as f64;
        for (id, a) in finals {
            per_cell.entry(id.to_string()).or_default().push(100.0 * a);
        }
        per_cell.entry("mean".into()).or_default().push(mean);
    }
    SigmaTable {
        seeds: runs.iter().map(|r| r.seed).collect(),
        cells: per_cell.into_iter().map(|(k, v)| (k, mean_sigma(&v))).collect(),
    }
}

fn sigma_json(cfg: &ScenarioConfig, table: &SigmaTable) -> String {
    #[derive(Serialize)]
    struct Cell {
        mean: Box<RawValue>,
        sigma: Box<RawValue>,
    }
    #[derive(Serialize)]
    struct File<'a> {
        scenario: &'a str,
        seeds: &'a [u64],
        accuracy: BTreeMap<&'a str, Cell>,
    }
    let file = File {
        scenario: &cfg.name,
        seeds: &table.seeds,
        accuracy: table
            .cells
            .iter()
            .map(|(k, (m, s))| {
                (
                    k.as_str(),
                    Cell {
                        mean: two_decimals(*m),
                        sigma: two_decimals(*s),
                    },
                )
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("serializable") + "\n"
}

/// Runs every seed in `cfg.seeds` (in parallel) into `dir/seed-<s>` and writes
/// `accuracy_sigma.json` into `dir`.
pub fn run_multi_seed(cfg: &ScenarioConfig, dir: &Path) -> Result<(Vec<RunOutput>, SigmaTable), HarnessError> {
    let seeds = cfg.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    let runs = seeds
        .par_iter()
        .map(|&s| run_into(cfg, s, &dir.join(format!("seed-{s}"))))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.in_scenario(&cfg.name))?;
    let table = sigma_table(&runs);
    write(dir, SIGMA, &sigma_json(cfg, &table))?;
    Ok((runs, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dictator_core::{ClientId, ClientMetric};

    fn table(acc: &[f64]) -> MetricsTable {
        MetricsTable {
            clients: (1..=acc.len() as u32).map(ClientId).collect(),
            rows: vec![acc
                .iter()
                .map(|a| ClientMetric {
                    loss: 0.1,
                    accuracy: *a,
                })
                .collect()],
        }
    }

    fn run(seed: u64, acc: &[f64]) -> RunOutput {
        RunOutput {
            seed,
            table: table(acc),
            records: Vec::new(),
            checks: Vec::new(),
        }
    }

    #[test]
    fn csv_layout() {
        let csv = curves_csv(&table(&[0.99631, 0.0]));
        assert_eq!(csv, "round,client_id,loss,accuracy\n1,1,0.1,99.63\n1,2,0.1,0.00\n");
    }

    #[test]
    fn single_seed_has_zero_sigma() {
        let t = sigma_table(&[run(1, &[0.5, 0.25])]);
        assert_eq!(t.cells["1"], (50.0, 0.0));
        assert_eq!(t.cells["mean"], (37.5, 0.0));
    }

    #[test]
    fn sigma_is_the_population_deviation() {
        let t = sigma_table(&[run(1, &[0.2]), run(2, &[0.4])]);
        let (m, s) = t.cells["1"];
        assert!((m - 30.0).abs() < 1e-12 && (s - 10.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_numbers_become_null() {
        assert_eq!(two_decimals(f64::NAN).get(), "null");
        assert_eq!(two_decimals(0.0).get(), "0.00");
        assert_eq!(two_decimals(100.0).get(), "100.00");
    }
}
