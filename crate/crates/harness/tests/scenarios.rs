use std::path::Path;

use dictator_harness::{execute, parse_config, parse_config_str, run_multi_seed, ScenarioKind};

fn shipped() -> Vec<std::path::PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_scenarios_round_trip() {
    let paths = shipped();
    assert!(paths.len() >= 7);
    for p in paths {
        let cfg = parse_config(&p).unwrap();
        assert!(cfg.validate().is_empty(), "{}", p.display());
        let mut again = parse_config_str(&cfg.to_toml(), &p).unwrap();
        again.base_dir = cfg.base_dir.clone();
        assert_eq!(again.to_toml(), cfg.to_toml(), "{}", p.display());
        assert_eq!(again, cfg);
    }
}

#[test]
fn repeated_seed_has_zero_sigma() {
    let mut cfg =
        parse_config(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/regular_multi_seed.toml")).unwrap();
    cfg.seeds = Some(vec![9, 9, 9]);
    cfg.protocol.rounds = 10;
    let dir = tempfile::tempdir().unwrap();
    let (runs, table) = run_multi_seed(&cfg, dir.path()).unwrap();
    assert_eq!(runs.len(), 3);
    assert!(table.cells.values().all(|(_, sigma)| *sigma == 0.0));
    assert!(dir.path().join("accuracy_sigma.json").is_file());
}

#[test]
fn regular_training_lowers_every_loss() {
    let mut cfg = parse_config(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/regular.toml")).unwrap();
    assert_eq!(cfg.scenario_kind, ScenarioKind::Regular);
    cfg.protocol.rounds = 30;
    let out = execute(&cfg, cfg.seed).unwrap();
    assert!(out.checks.is_empty());
    for id in &out.table.clients {
        assert!(out.table.loss(30, *id).unwrap() < out.table.loss(1, *id).unwrap());
    }
}

#[test]
fn different_seeds_give_different_runs() {
    let cfg = parse_config(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/regular.toml")).unwrap();
    let mut short = cfg.clone();
    short.protocol.rounds = 3;
    let a = execute(&short, 1).unwrap();
    let b = execute(&short, 2).unwrap();
    assert!(!a.records[0].theta_before.bitwise_eq(&b.records[0].theta_before));
    let a2 = execute(&short, 1).unwrap();
    assert!(a
        .records
        .last()
        .unwrap()
        .theta_after
        .bitwise_eq(&a2.records.last().unwrap().theta_after));
}
