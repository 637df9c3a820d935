//! Scenario files: a versioned TOML schema, parsed strictly and validated as a
//! whole so that every problem is reported at once.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use dictator_core::{Activation, ClientId, ModelKind, ProtocolConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Issue};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Regular,
    SingleDictator,
    Coalition,
    MutualDomination,
    Betrayal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs {
        num_classes: usize,
        dim: usize,
        per_class: usize,
        sigma: f64,
    },
    /// Paths are relative to the config file.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        limit: usize,
        #[serde(default = "ten")]
        num_classes: usize,
    },
}

fn ten() -> usize {
    10
}

impl DatasetConfig {
    pub fn num_classes(&self) -> usize {
        match self {
            DatasetConfig::Blobs { num_classes, .. } | DatasetConfig::Idx { num_classes, .. } => *num_classes,
        }
    }
}

/// Either contiguous blocks of `labels_per_client` labels (client 1 gets the
/// first block) or an explicit client → labels table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_per_client: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignments: Option<BTreeMap<String, Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case", deny_unknown_fields)]
pub enum RoleConfig {
    Honest {},
    Dictator {},
    Coalition {
        members: Vec<u32>,
    },
    Cheater {
        partner: u32,
        betrayal_round: usize,
    },
    /// Probe size is `magnitude`, or `relative` times the median absolute
    /// coordinate of the client's own gradient at `θ_0`.
    Probe {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        magnitude: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        relative: Option<f64>,
        /// Hand the client the true learning rate instead of its estimate.
        #[serde(default)]
        known_eta: bool,
    },
}

impl RoleConfig {
    fn name(&self) -> &'static str {
        match self {
            RoleConfig::Honest {} => "honest",
            RoleConfig::Dictator {} => "dictator",
            RoleConfig::Coalition { .. } => "coalition",
            RoleConfig::Cheater { .. } => "cheater",
            RoleConfig::Probe { .. } => "probe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub scenario_kind: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    /// Multi-seed mode: run once per seed and report mean and σ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    pub protocol: ProtocolConfig,
    /// Client id → role. Unlisted clients are honest (dictators under
    /// `mutual_domination`).
    #[serde(default)]
    pub roles: BTreeMap<String, RoleConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_holdout() -> f64 {
    0.2
}

/// Reads, parses and validates a scenario file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, HarnessError> {
    let path = path.as_ref();
    // an unreadable config is reported like a malformed one
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        message: format!("cannot read config: {e}"),
    })?;
    let mut cfg = parse_config_str(&text, path)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

pub fn parse_config_str(text: &str, origin: &Path) -> Result<ScenarioConfig, HarnessError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| HarnessError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(HarnessError::Invalid(issues));
    }
    Ok(cfg)
}

/// Makes every client a dictator.
pub fn compose_mutual_domination(cfg: &ScenarioConfig) -> ScenarioConfig {
    let mut out = cfg.clone();
    out.scenario_kind = ScenarioKind::MutualDomination;
    out.roles = (1..=cfg.protocol.num_clients)
        .map(|id| (id.to_string(), RoleConfig::Dictator {}))
        .collect();
    out
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every client's role, defaults filled in. Only meaningful on a valid config.
    pub fn resolved_roles(&self) -> BTreeMap<ClientId, RoleConfig> {
        let fallback = match self.scenario_kind {
            ScenarioKind::MutualDomination => RoleConfig::Dictator {},
            _ => RoleConfig::Honest {},
        };
        let mut out: BTreeMap<ClientId, RoleConfig> = (1..=self.protocol.num_clients as u32)
            .map(|id| (ClientId(id), fallback.clone()))
            .collect();
        for (key, role) in &self.roles {
            if let Ok(id) = key.parse::<u32>() {
                out.insert(ClientId(id), role.clone());
            }
        }
        out
    }

    /// Client → labels as configured; `None` when the partition itself is invalid.
    pub fn label_table(&self) -> Option<BTreeMap<ClientId, BTreeSet<usize>>> {
        let n = self.protocol.num_clients;
        let classes = self.dataset.num_classes();
        match (&self.partition.labels_per_client, &self.partition.assignments) {
            (_, Some(table)) => table
                .iter()
                .map(|(k, v)| Some((ClientId(k.parse().ok()?), v.iter().copied().collect())))
                .collect(),
            (k, None) => {
                let k = k.unwrap_or(classes.checked_div(n).unwrap_or(0));
                Some(
                    (0..n)
                        .map(|i| (ClientId(i as u32 + 1), (i * k..(i + 1) * k).collect()))
                        .collect(),
                )
            }
        }
    }

    /// All problems with this config; empty when it is usable.
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut bad = |field: &str, msg: String| issues.push(Issue::new(field, msg));

        if self.schema_version != SCHEMA_VERSION {
            bad(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            );
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            bad("name", format!("{:?} is not usable as a directory name", self.name));
        }
        if matches!(&self.seeds, Some(s) if s.is_empty()) {
            bad("seeds", "list must not be empty".into());
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            bad("holdout_fraction", format!("{} not in (0, 1)", self.holdout_fraction));
        }
        if let Err(e) = self.protocol.validate() {
            bad("protocol", e.to_string());
        }

        match &self.dataset {
            DatasetConfig::Blobs {
                num_classes,
                dim,
                per_class,
                sigma,
            } => {
                if *num_classes < 2 {
                    bad("dataset.num_classes", "need at least 2 classes".into());
                }
                if *dim == 0 {
                    bad("dataset.dim", "must be positive".into());
                }
                if *per_class < 2 {
                    bad(
                        "dataset.per_class",
                        "need at least 2 rows per class to hold some out".into(),
                    );
                }
                if *sigma <= 0.0 || !sigma.is_finite() {
                    bad("dataset.sigma", format!("{sigma} is not a positive finite number"));
                }
            }
            DatasetConfig::Idx { limit, num_classes, .. } => {
                if *limit == 0 {
                    bad("dataset.limit", "must be positive".into());
                }
                if *num_classes < 2 {
                    bad("dataset.num_classes", "need at least 2 classes".into());
                }
            }
        }

        match (self.model.kind, self.model.hidden_dim) {
            (ModelKind::Mlp1, None | Some(0)) => bad("model.hidden_dim", "mlp1 needs hidden_dim >= 1".into()),
            (ModelKind::LinearSoftmax, Some(_)) => bad("model.hidden_dim", "only applies to mlp1".into()),
            _ => {}
        }

        self.validate_partition(&mut bad);
        self.validate_roles(&mut bad);
        issues
    }

    fn validate_partition(&self, bad: &mut impl FnMut(&str, String)) {
        let n = self.protocol.num_clients;
        let classes = self.dataset.num_classes();
        match (&self.partition.labels_per_client, &self.partition.assignments) {
            (Some(_), Some(_)) => bad(
                "partition",
                "set either labels_per_client or assignments, not both".into(),
            ),
            (k, None) => {
                let k = k.unwrap_or(classes.checked_div(n).unwrap_or(0));
                if k == 0 || k * n != classes {
                    bad(
                        "partition.labels_per_client",
                        format!("{k} labels for each of {n} clients does not cover {classes} classes exactly"),
                    );
                }
            }
            (None, Some(table)) => {
                let mut owner: BTreeMap<usize, u32> = BTreeMap::new();
                let mut seen = BTreeSet::new();
                for (key, labels) in table {
                    let field = format!("partition.assignments.{key}");
                    let Some(id) = client_key(key, n) else {
                        bad(&field, format!("not a client id in 1..={n}"));
                        continue;
                    };
                    seen.insert(id);
                    if labels.is_empty() {
                        bad(&field, "client has no labels".into());
                    }
                    for &l in labels {
                        if l >= classes {
                            bad(&field, format!("label {l} out of range 0..{classes}"));
                        } else if let Some(prev) = owner.insert(l, id) {
                            bad(&field, format!("label {l} already assigned to client {prev}"));
                        }
                    }
                }
                for id in 1..=n as u32 {
                    if !seen.contains(&id) {
                        bad("partition.assignments", format!("client {id} has no labels"));
                    }
                }
                for l in 0..classes {
                    if !owner.contains_key(&l) {
                        bad("partition.assignments", format!("label {l} is not assigned"));
                    }
                }
            }
        }
    }

    fn validate_roles(&self, bad: &mut impl FnMut(&str, String)) {
        let n = self.protocol.num_clients;
        let rounds = self.protocol.rounds;
        let in_range = |id: u32| id >= 1 && id as usize <= n;
        let mut roles: BTreeMap<u32, &RoleConfig> = BTreeMap::new();
        for (key, role) in &self.roles {
            let field = format!("roles.{key}");
            let Some(id) = client_key(key, n) else {
                bad(&field, format!("not a client id in 1..={n}"));
                continue;
            };
            roles.insert(id, role);
            match role {
                RoleConfig::Coalition { members } => {
                    let set: BTreeSet<u32> = members.iter().copied().collect();
                    if set.len() != members.len() {
                        bad(&format!("{field}.members"), "duplicate member".into());
                    }
                    for m in &set {
                        if !in_range(*m) {
                            bad(&format!("{field}.members"), format!("member {m} outside 1..={n}"));
                        }
                    }
                    if !set.contains(&id) {
                        bad(&format!("{field}.members"), format!("must include client {id} itself"));
                    }
                    if set.len() < 2 || set.len() >= n {
                        bad(
                            &format!("{field}.members"),
                            format!("coalition size {} must satisfy 1 < P < {n}", set.len()),
                        );
                    }
                }
                RoleConfig::Cheater {
                    partner,
                    betrayal_round,
                } => {
                    if !in_range(*partner) || *partner == id {
                        bad(
                            &format!("{field}.partner"),
                            format!("{partner} is not another client in 1..={n}"),
                        );
                    }
                    if *betrayal_round < 2 {
                        bad(
                            &format!("{field}.betrayal_round"),
                            format!("must be at least 2, got {betrayal_round}"),
                        );
                    } else if *betrayal_round >= rounds {
                        bad(
                            &format!("{field}.betrayal_round"),
                            format!("round {betrayal_round} never happens in a {rounds}-round run"),
                        );
                    }
                }
                RoleConfig::Probe {
                    magnitude, relative, ..
                } => match (magnitude, relative) {
                    (Some(v), None) | (None, Some(v)) if *v > 0.0 && v.is_finite() => {}
                    (Some(_), Some(_)) | (None, None) => {
                        bad(&field, "probe needs exactly one of magnitude or relative".into())
                    }
                    (Some(v), None) | (None, Some(v)) => bad(&field, format!("probe size {v} must be positive")),
                },
                RoleConfig::Honest {} | RoleConfig::Dictator {} => {}
            }
        }

        let attackers: Vec<(u32, &RoleConfig)> = roles
            .iter()
            .filter(|(_, r)| !matches!(r, RoleConfig::Honest {}))
            .map(|(id, r)| (*id, *r))
            .collect();
        let kind = "scenario_kind";
        match self.scenario_kind {
            ScenarioKind::Regular => {
                if let Some((id, r)) = attackers.first() {
                    bad(
                        &format!("roles.{id}"),
                        format!("{} role in a regular scenario", r.name()),
                    );
                }
            }
            ScenarioKind::SingleDictator => match attackers.as_slice() {
                [(_, RoleConfig::Dictator {})] => {}
                [(_, RoleConfig::Probe { .. })] => {
                    if rounds < 2 {
                        bad("protocol.rounds", "a probe run needs at least 2 rounds".into());
                    }
                }
                _ => bad(kind, "single_dictator needs exactly one dictator or probe role".into()),
            },
            ScenarioKind::Coalition => {
                let ids: BTreeSet<u32> = attackers.iter().map(|(id, _)| *id).collect();
                for (id, r) in &attackers {
                    match r {
                        RoleConfig::Coalition { members } => {
                            if members.iter().copied().collect::<BTreeSet<_>>() != ids {
                                bad(
                                    &format!("roles.{id}.members"),
                                    format!("must list exactly the coalition clients {ids:?}"),
                                );
                            }
                        }
                        other => bad(
                            &format!("roles.{id}"),
                            format!("{} role in a coalition scenario", other.name()),
                        ),
                    }
                }
                if ids.len() < 2 {
                    bad(kind, "coalition scenario needs at least 2 coalition roles".into());
                }
            }
            ScenarioKind::MutualDomination => {
                for (id, r) in &roles {
                    if !matches!(r, RoleConfig::Dictator {}) {
                        bad(
                            &format!("roles.{id}"),
                            format!("{} role; mutual_domination makes every client a dictator", r.name()),
                        );
                    }
                }
                if rounds < 2 {
                    bad("protocol.rounds", "mutual_domination needs at least 2 rounds".into());
                }
            }
            ScenarioKind::Betrayal => {
                let cheaters: Vec<(u32, u32)> = attackers
                    .iter()
                    .filter_map(|(id, r)| match r {
                        RoleConfig::Cheater { partner, .. } => Some((*id, *partner)),
                        _ => None,
                    })
                    .collect();
                if n < 3 {
                    bad(
                        "protocol.num_clients",
                        "betrayal needs at least one client outside the pair".into(),
                    );
                }
                match cheaters.as_slice() {
                    [(cheater, partner)] => {
                        let pair = BTreeSet::from([*cheater, *partner]);
                        match roles.get(partner) {
                            Some(RoleConfig::Coalition { members })
                                if members.iter().copied().collect::<BTreeSet<_>>() == pair => {}
                            _ => bad(
                                &format!("roles.{partner}"),
                                format!("the partner needs role coalition with members [{cheater}, {partner}]"),
                            ),
                        }
                        for (id, r) in &attackers {
                            if *id != *cheater && *id != *partner {
                                bad(
                                    &format!("roles.{id}"),
                                    format!("{} role outside the betrayal pair", r.name()),
                                );
                            }
                        }
                    }
                    _ => bad(
                        kind,
                        format!("betrayal needs exactly one cheater, found {}", cheaters.len()),
                    ),
                }
            }
        }
    }
}

fn client_key(key: &str, n: usize) -> Option<u32> {
    key.parse::<u32>().ok().filter(|id| *id >= 1 && *id as usize <= n)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "plain"
scenario_kind = "regular"

[model]
kind = "linear_softmax"

[dataset]
source = "blobs"
num_classes = 6
dim = 4
per_class = 10
sigma = 0.5

[protocol]
eta = 0.1
rounds = 5
num_clients = 3
"#;

    fn parse(text: &str) -> Result<ScenarioConfig, HarnessError> {
        parse_config_str(text, Path::new("test.toml"))
    }

    fn issues(text: &str) -> Vec<Issue> {
        match parse(text) {
            Err(HarnessError::Invalid(v)) => v,
            other => panic!("expected validation issues, got {other:?}"),
        }
    }

    #[test]
    fn minimal_regular_config_gets_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.holdout_fraction, 0.2);
        assert!(cfg.seeds.is_none());
        assert_eq!(cfg.model.activation, Activation::Tanh);
        let table = cfg.label_table().unwrap();
        assert_eq!(table[&ClientId(2)], BTreeSet::from([2, 3]));
        assert!(cfg.resolved_roles().values().all(|r| *r == RoleConfig::Honest {}));
    }

    #[test]
    fn round_trips_through_toml() {
        let text = format!("{MINIMAL}\n[roles]\n2 = {{ role = \"probe\", relative = 1e8 }}\n")
            .replace("\"regular\"", "\"single_dictator\"");
        let cfg = parse(&text).unwrap();
        let again = parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = parse(&MINIMAL.replace("sigma = 0.5", "sigma = 0.5\nspread = 2")).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { .. }), "{err}");
        let err = parse(&format!("{MINIMAL}\nextra = 1\n")).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { .. }));
        let err = parse(&format!(
            "{MINIMAL}\n[roles]\n1 = {{ role = \"dictator\", boost = 2 }}\n"
        ))
        .unwrap_err();
        assert!(matches!(err, HarnessError::Parse { .. }), "{err}");
    }

    #[test]
    fn coalition_member_out_of_range_names_the_field() {
        let text = MINIMAL.replace("\"regular\"", "\"coalition\"")
            + "\n[roles]\n1 = { role = \"coalition\", members = [1, 7] }\n7 = { role = \"coalition\", members = [1, 7] }\n";
        let found = issues(&text);
        assert!(
            found
                .iter()
                .any(|i| i.field == "roles.1.members" && i.message.contains("member 7")),
            "{found:?}"
        );
        assert!(found.iter().any(|i| i.field == "roles.7"), "{found:?}");
    }

    #[test]
    fn all_problems_are_reported_together() {
        let text = MINIMAL
            .replace("schema_version = 1", "schema_version = 9")
            .replace("eta = 0.1", "eta = -1.0")
            .replace("sigma = 0.5", "sigma = 0.0");
        let found = issues(&text);
        let fields: BTreeSet<&str> = found.iter().map(|i| i.field.as_str()).collect();
        assert!(fields.contains("schema_version"));
        assert!(fields.contains("protocol"));
        assert!(fields.contains("dataset.sigma"));
    }

    #[test]
    fn role_scenario_consistency() {
        let with =
            |kind: &str, roles: &str| MINIMAL.replace("\"regular\"", &format!("\"{kind}\"")) + "\n[roles]\n" + roles;
        assert!(!issues(&with("regular", "1 = { role = \"dictator\" }\n")).is_empty());
        assert!(parse(&with("single_dictator", "3 = { role = \"dictator\" }\n")).is_ok());
        assert!(!issues(&with("single_dictator", "")).is_empty());
        assert!(!issues(&with(
            "single_dictator",
            "1 = { role = \"dictator\" }\n2 = { role = \"dictator\" }\n"
        ))
        .is_empty());
        assert!(!issues(&with("mutual_domination", "1 = { role = \"honest\" }\n")).is_empty());
        let md = parse(&with("mutual_domination", "")).unwrap();
        assert!(md.resolved_roles().values().all(|r| *r == RoleConfig::Dictator {}));
        let pair = "1 = { role = \"cheater\", partner = 2, betrayal_round = 3 }\n2 = { role = \"coalition\", members = [1, 2] }\n";
        assert!(parse(&with("betrayal", pair)).is_ok());
        // betrayal at or after the last round never happens
        assert!(!issues(&with(
            "betrayal",
            &pair.replace("betrayal_round = 3", "betrayal_round = 5")
        ))
        .is_empty());
        assert!(!issues(&with(
            "betrayal",
            "1 = { role = \"cheater\", partner = 2, betrayal_round = 3 }\n"
        ))
        .is_empty());
    }

    #[test]
    fn explicit_partition_is_checked() {
        let text = MINIMAL.to_string() + "\n[partition.assignments]\n1 = [0, 1]\n2 = [1, 2]\n3 = [4, 5, 9]\n";
        let found = issues(&text);
        assert!(found.iter().any(|i| i.message.contains("label 1 already assigned")));
        assert!(found.iter().any(|i| i.message.contains("label 9 out of range")));
        assert!(found.iter().any(|i| i.message.contains("label 3 is not assigned")));
    }

    #[test]
    fn compose_makes_every_client_a_dictator() {
        let cfg = compose_mutual_domination(&parse(MINIMAL).unwrap());
        assert_eq!(cfg.scenario_kind, ScenarioKind::MutualDomination);
        assert!(cfg.validate().is_empty());
        assert_eq!(cfg.roles.len(), 3);
    }
}
