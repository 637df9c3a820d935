//! `dictator`: run, verify and report dictator-attack scenarios.
//!
//! Exit codes: 0 success, 1 an equivalence check failed, 2 invalid config or
//! nothing to report, 3 any other runtime failure. On a non-zero exit a JSON
//! summary goes to stdout and a readable message to stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use dictator_attacks::{estimate_eta, ProbeConfig, ProbeDictatorClient};
use dictator_core::{run_rounds, ClientId, ClientStrategy, HonestClient, Objective, ProtocolConfig};
use dictator_harness::output::{ACCURACY, CHECKS, SIGMA};
use dictator_harness::scenario::probe_magnitude;
use dictator_harness::{
    output_dir, parse_config, prepare, run_multi_seed, run_scenario, HarnessError, RoleConfig, RunOutput,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "dictator", version, about = "Dictator-client federated learning scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and DICTATOR_OUTPUT_ROOT)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and fail unless every equivalence check passes
    Verify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Send one probe update and report the recovered learning rate
    ProbeEta {
        config: PathBuf,
        /// Probing client (defaults to the config's probe role, else client 1)
        #[arg(long)]
        client: Option<u32>,
        /// Probe size B (defaults to the probe role's setting, else 1e8 x median gradient)
        #[arg(long)]
        magnitude: Option<f64>,
    },
    /// Pretty-print the artifacts in a run directory
    Report { dir: PathBuf },
}

enum Failure {
    Checks(Value),
    Invalid(Value, String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let msg = e.to_string();
        match &e {
            HarnessError::Invalid(issues) => {
                Failure::Invalid(json!({"status": "invalid_config", "errors": issues}), msg)
            }
            HarnessError::Parse { .. } => Failure::Invalid(json!({"status": "invalid_config", "errors": [msg]}), msg),
            HarnessError::Scenario { source, .. } if matches!(**source, HarnessError::Invalid(_)) => {
                Failure::Invalid(json!({"status": "invalid_config", "errors": [msg]}), msg)
            }
            HarnessError::NoArtifacts(p) => {
                Failure::Invalid(json!({"status": "no_artifacts", "dir": p.display().to_string()}), msg)
            }
            _ => Failure::Runtime(msg),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => run(&config, out.as_deref(), false),
        Command::Verify { config, out } => run(&config, out.as_deref(), true),
        Command::ProbeEta {
            config,
            client,
            magnitude,
        } => probe_eta(&config, client, magnitude),
        Command::Report { dir } => report(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(summary)) => {
            println!("{summary}");
            eprintln!("equivalence checks failed");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(summary, msg)) => {
            println!("{summary}");
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            println!("{}", json!({"status": "error", "message": msg}));
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn check_summary(runs: &[RunOutput]) -> Value {
    let failed: Vec<Value> = runs
        .iter()
        .flat_map(|r| r.checks.iter().map(move |c| (r.seed, c)))
        .filter(|(_, c)| !c.ok())
        .map(|(seed, c)| {
            json!({
                "seed": seed,
                "claim_id": c.check.claim_id,
                "passed": c.check.passed,
                "diff_inf_norm": c.check.diff_inf_norm,
                "negative_control_failed": !c.negative_control.passed,
            })
        })
        .collect();
    json!({"status": "checks_failed", "failed": failed})
}

fn run(config: &Path, out: Option<&Path>, verify: bool) -> Result<(), Failure> {
    let cfg = parse_config(config)?;
    let dir = output_dir(&cfg, out);
    let runs = if cfg.seeds.is_some() {
        let (runs, table) = run_multi_seed(&cfg, &dir)?;
        for (cell, (mean, sigma)) in &table.cells {
            println!("client {cell:>4}: {mean:6.2} ± {sigma:.2}");
        }
        runs
    } else {
        let run = run_scenario(&cfg, &dir)?;
        for (id, acc) in run.table.final_accuracy() {
            println!("client {id:>4}: {:6.2}", 100.0 * acc);
        }
        vec![run]
    };
    for run in &runs {
        for c in &run.checks {
            println!(
                "check {:<24} {} (diff {:.3e}, tolerance {:.0e}; negative control {})",
                c.check.claim_id,
                if c.check.passed { "PASS" } else { "FAIL" },
                c.check.diff_inf_norm,
                c.check.tolerance,
                if c.negative_control.passed {
                    "PASSED (bad)"
                } else {
                    "failed as expected"
                }
            );
        }
    }
    println!("artifacts in {}", dir.display());
    if verify && !runs.iter().all(RunOutput::all_checks_ok) {
        return Err(Failure::Checks(check_summary(&runs)));
    }
    Ok(())
}

fn probe_eta(config: &Path, client: Option<u32>, magnitude: Option<f64>) -> Result<(), Failure> {
    let cfg = parse_config(config)?;
    let prep = prepare(&cfg, cfg.seed)?;
    let roles = cfg.resolved_roles();
    let configured = roles.iter().find(|(_, r)| matches!(r, RoleConfig::Probe { .. }));
    let m = client
        .map(ClientId)
        .or(configured.map(|(id, _)| *id))
        .unwrap_or(ClientId(1));
    let Some(own) = prep.train.get(&m).cloned() else {
        return Err(Failure::Invalid(
            json!({"status": "invalid_config", "errors": [format!("no client {m}")]}),
            format!("no client {m}"),
        ));
    };
    let b = match (magnitude, configured) {
        (Some(b), _) => b,
        (None, Some((id, role))) if *id == m => probe_magnitude(role, own.as_ref(), &prep.theta_0)?,
        _ => probe_magnitude(
            &RoleConfig::Probe {
                magnitude: None,
                relative: Some(1e8),
                known_eta: false,
            },
            own.as_ref(),
            &prep.theta_0,
        )?,
    };
    let probe = ProbeConfig::new(b);
    let mut clients: Vec<Box<dyn ClientStrategy>> = Vec::new();
    for (id, ev) in &prep.train {
        let obj: Arc<dyn Objective> = ev.clone();
        clients.push(if *id == m {
            Box::new(ProbeDictatorClient::new(*id, obj, probe).map_err(HarnessError::from)?)
        } else {
            Box::new(HonestClient::new(*id, obj))
        });
    }
    let one_round = ProtocolConfig {
        rounds: 1,
        ..cfg.protocol
    };
    let recs =
        run_rounds(&one_round, &mut clients, prep.theta_0.clone(), &BTreeMap::new()).map_err(HarnessError::from)?;
    let eta = cfg.protocol.eta;
    let eta_hat = estimate_eta(&recs[0].theta_before, &recs[0].theta_after, &probe).map_err(HarnessError::from)?;
    let mut others = prep.theta_0.filled_like(0.0);
    for (id, ev) in &prep.train {
        if *id != m {
            let g = ev.gradient(&prep.theta_0).map_err(HarnessError::from)?;
            others = dictator_core::add(&others, &g).map_err(|e| Failure::Runtime(e.to_string()))?;
        }
    }
    let rel = (eta_hat - eta).abs() / eta;
    let bound = others.inf_norm() / b;
    println!(
        "{}",
        json!({
            "client": m.0,
            "magnitude": b,
            "eta": eta,
            "eta_hat": eta_hat,
            "relative_error": rel,
            "relative_error_bound": bound,
        })
    );
    Ok(())
}

fn pct(v: &Value) -> String {
    v.as_f64().map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

fn report(dir: &Path) -> Result<(), Failure> {
    let mut found = false;
    let read = |p: PathBuf| -> Result<Option<Value>, Failure> {
        match std::fs::read_to_string(&p) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
            Err(_) => Ok(None),
        }
    };
    if let Some(sigma) = read(dir.join(SIGMA))? {
        found = true;
        println!("final accuracy over seeds {} (mean ± σ, %)", sigma["seeds"]);
        if let Some(cells) = sigma["accuracy"].as_object() {
            for (cell, v) in cells {
                println!("  {cell:>6}  {:>6} ± {}", pct(&v["mean"]), pct(&v["sigma"]));
            }
        }
    }
    let mut dirs = vec![dir.to_path_buf()];
    if let Ok(entries) = std::fs::read_dir(dir) {
        let mut seeds: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("seed-")))
            .collect();
        seeds.sort();
        dirs.extend(seeds);
    }
    for d in dirs {
        let Some(acc) = read(d.join(ACCURACY))? else { continue };
        found = true;
        println!(
            "{} (seed {}, after round {})",
            acc["scenario"].as_str().unwrap_or("?"),
            acc["seed"],
            acc["round"]
        );
        println!("  client  accuracy %");
        if let Some(cells) = acc["accuracy"].as_object() {
            for (id, v) in cells {
                println!("  {id:>6}  {:>10}", pct(v));
            }
        }
        println!("  {:>6}  {:>10}", "mean", pct(&acc["mean"]));
        if let Some(checks) = read(d.join(CHECKS))? {
            if checks["skipped"] == json!(true) {
                println!("  checks: skipped");
            }
            for c in checks["checks"].as_array().into_iter().flatten() {
                println!(
                    "  check {}: {} (diff {}, residual {})",
                    c["check"]["claim_id"].as_str().unwrap_or("?"),
                    if c["check"]["passed"] == json!(true) {
                        "pass"
                    } else {
                        "FAIL"
                    },
                    c["check"]["diff_inf_norm"],
                    c["check"]["residual_inf_norm"]
                );
            }
        }
    }
    if !found {
        return Err(HarnessError::NoArtifacts(dir.to_path_buf()).into());
    }
    Ok(())
}
