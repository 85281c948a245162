//! JSON scenario files.
//!
//! ```json
//! {
//!   "team": ["human", "human", "human", "machine"],
//!   "edges": [[0, 1], [1, 2]],
//!   "mission": {"at_least": 2},
//!   "sis": {"alpha": 0.2, "beta": 0.3},
//!   "responses": [{"machine": 3, "watched": [1], "rule": "any"}],
//!   "policy": {"rule": "switch_partner", "preferences": [1, 2, 0]},
//!   "initial": "0100",
//!   "steps": 10
//! }
//! ```
//!
//! `mission` is one of `{"table": "<decision table text>"}`,
//! `{"table_file": "f.tbl"}`, `{"pla": "f.pla", "output": 0}` or
//! `{"at_least": k}`. Relative paths resolve against the scenario file.
//! `contacts` (a list of `{"from_step", "edges"}`) may replace `edges`.
//! An optional `timeline` of bit strings turns the file into a fixed replay.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{ContactSchedule, MissionFunction, RobotPolicy, Scenario, ScenarioError, StatusMap};
use crate::logic::{
    parse_bits, team_from_kinds, BinaryState, DecisionTable, LogicError, ResponseRule, StressResponse, TeammateId,
    TeammateKind,
};
use crate::pla::{parse_pla, PlaError};
use crate::sis::{ContactGraph, SisParams, SisState};

#[derive(Debug, Error)]
pub enum ScenarioFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Table { path: PathBuf, source: LogicError },
    #[error("{path}: {source}")]
    Pla { path: PathBuf, source: PlaError },
    #[error("{field}: `{value}` is not a bit string")]
    Bits { field: String, value: String },
    #[error("mission must give exactly one of table, table_file, pla, at_least")]
    MissionSpec,
    #[error("give either edges or contacts, not both")]
    ContactSpec,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

impl ScenarioFileError {
    /// True for malformed input text, as opposed to well-formed but invalid content.
    pub fn is_parse(&self) -> bool {
        match self {
            Self::Io { .. } | Self::Json { .. } | Self::Bits { .. } => true,
            Self::Table { source, .. } => matches!(source, LogicError::Parse { .. }),
            Self::Pla { source, .. } => !matches!(source, PlaError::TooManyVariables { .. } | PlaError::Dd(_)),
            _ => false,
        }
    }

    pub fn is_limit(&self) -> bool {
        match self {
            Self::Table { source, .. } => matches!(source, LogicError::TooManyVariables { .. }),
            Self::Pla { source, .. } => matches!(source, PlaError::TooManyVariables { .. }),
            Self::Scenario(ScenarioError::TooLarge(_)) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMission {
    table: Option<String>,
    table_file: Option<PathBuf>,
    pla: Option<PathBuf>,
    #[serde(default)]
    output: usize,
    at_least: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContacts {
    from_step: u64,
    edges: Vec<(usize, usize)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResponse {
    machine: usize,
    watched: Vec<usize>,
    #[serde(default = "default_rule")]
    rule: ResponseRule,
}

fn default_rule() -> ResponseRule {
    ResponseRule::AnyWatchedStressed
}

fn default_policy() -> RobotPolicy {
    RobotPolicy::ReportOnly
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    team: Vec<TeammateKind>,
    edges: Option<Vec<(usize, usize)>>,
    contacts: Option<Vec<RawContacts>>,
    mission: RawMission,
    sis: SisParams,
    #[serde(default)]
    responses: Vec<RawResponse>,
    #[serde(default = "default_policy")]
    policy: RobotPolicy,
    #[serde(default)]
    status_map: StatusMap,
    initial: Option<String>,
    timeline: Option<Vec<String>>,
    steps: Option<u64>,
}

/// Everything a scenario file describes.
#[derive(Debug)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub policy: RobotPolicy,
    /// Defaults to everyone unstressed.
    pub initial: SisState,
    pub timeline: Option<Vec<Vec<BinaryState>>>,
    pub steps: Option<u64>,
}

fn bits(field: &str, s: &str) -> Result<Vec<BinaryState>, ScenarioFileError> {
    parse_bits(s.trim()).ok_or_else(|| ScenarioFileError::Bits { field: field.into(), value: s.into() })
}

fn graph(team: &[TeammateId], edges: &[(usize, usize)]) -> Result<ContactGraph, ScenarioFileError> {
    ContactGraph::new(team.to_vec(), edges.iter().copied()).map_err(|e| ScenarioError::from(e).into())
}

fn read(path: &Path) -> Result<String, ScenarioFileError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioFileError::Io { path: path.into(), source })
}

fn mission(raw: &RawMission, team: &[TeammateId], base: &Path) -> Result<MissionFunction, ScenarioFileError> {
    let given = [raw.table.is_some(), raw.table_file.is_some(), raw.pla.is_some(), raw.at_least.is_some()];
    if given.iter().filter(|&&g| g).count() != 1 {
        return Err(ScenarioFileError::MissionSpec);
    }
    let table = |text: &str, path: &Path| {
        let t = DecisionTable::parse(text).map_err(|source| ScenarioFileError::Table { path: path.into(), source })?;
        Ok::<_, ScenarioFileError>(MissionFunction::from_table(&t)?)
    };
    if let Some(text) = &raw.table {
        return table(text, Path::new("<inline table>"));
    }
    if let Some(p) = &raw.table_file {
        let path = base.join(p);
        return table(&read(&path)?, &path);
    }
    if let Some(p) = &raw.pla {
        let path = base.join(p);
        let pla = parse_pla(&read(&path)?).map_err(|source| ScenarioFileError::Pla { path: path.clone(), source })?;
        return Ok(MissionFunction::from_pla(&pla, raw.output)?);
    }
    Ok(MissionFunction::at_least(team, raw.at_least.unwrap_or_default())?)
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, ScenarioFileError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ScenarioFileError::Json { source, .. } => ScenarioFileError::Json { path: path.into(), source },
            other => other,
        })
    }

    /// Parses scenario JSON; relative file references resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ScenarioFileError> {
        let raw: RawScenario = serde_json::from_str(text)
            .map_err(|source| ScenarioFileError::Json { path: PathBuf::from("<scenario>"), source })?;
        let team = team_from_kinds(&raw.team);

        let contacts =
            match (&raw.edges, &raw.contacts) {
                (Some(_), Some(_)) => return Err(ScenarioFileError::ContactSpec),
                (Some(e), None) => ContactSchedule::fixed(graph(&team, e)?),
                (None, Some(c)) => ContactSchedule::new(
                    c.iter()
                        .map(|c| Ok((c.from_step, graph(&team, &c.edges)?)))
                        .collect::<Result<_, ScenarioFileError>>()?,
                )?,
                (None, None) => ContactSchedule::fixed(graph(&team, &[])?),
            };

        let mission = mission(&raw.mission, &team, base)?;

        let lookup = |i: usize| {
            team.get(i)
                .copied()
                .ok_or_else(|| ScenarioError::Invalid(format!("teammate {i} is outside a team of {}", team.len())))
        };
        let mut responses = Vec::with_capacity(raw.responses.len());
        for r in &raw.responses {
            let watched = r.watched.iter().map(|&w| lookup(w)).collect::<Result<Vec<_>, _>>()?;
            let resp = StressResponse::new(lookup(r.machine)?, watched, r.rule).map_err(ScenarioError::from)?;
            responses.push(resp);
        }

        let scenario = Scenario::new(team, contacts, mission, responses, raw.sis, raw.status_map)?;
        raw.policy.validate(&scenario.team)?;

        let initial_bits = match &raw.initial {
            Some(s) => bits("initial", s)?,
            None => vec![BinaryState::Unstressed; scenario.team.len()],
        };
        let initial = SisState::new(&scenario.team, initial_bits, &scenario.responses).map_err(ScenarioError::from)?;
        let timeline = raw
            .timeline
            .as_ref()
            .map(|rows| rows.iter().map(|r| bits("timeline", r)).collect::<Result<Vec<_>, _>>())
            .transpose()?;

        Ok(Self { scenario, policy: raw.policy, initial, timeline, steps: raw.steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{replay_fixed, MissionStatus};
    use std::io::Write;

    const CHAIN: &str = r#"{
        "team": ["human", "human", "human"],
        "edges": [[0, 1], [1, 2]],
        "mission": {"at_least": 2},
        "sis": {"alpha": 0.0, "beta": 0.5},
        "initial": "010",
        "steps": 1
    }"#;

    #[test]
    fn loads_minimal_chain() {
        let f = ScenarioFile::parse(CHAIN, Path::new(".")).unwrap();
        assert_eq!(f.scenario.team.len(), 3);
        assert_eq!(f.scenario.sis.dt, 1.0);
        assert_eq!(f.policy, RobotPolicy::ReportOnly);
        assert_eq!(f.initial.stress, parse_bits("010").unwrap());
        assert_eq!(f.steps, Some(1));
    }

    #[test]
    fn inline_table_and_timeline() {
        let text = r#"{
            "team": ["human", "human", "human"],
            "mission": {"table": "n=3\n000 0\n100 0\n010 0\n001 0\n011 1\n101 1\n110 1\n111 1\n"},
            "sis": {"alpha": 0.0, "beta": 0.0},
            "timeline": ["000", "100", "010", "011"]
        }"#;
        let f = ScenarioFile::parse(text, Path::new(".")).unwrap();
        let got = replay_fixed(&f.scenario, f.timeline.as_ref().unwrap()).unwrap();
        assert_eq!(got.last(), Some(&MissionStatus::Failed));
    }

    #[test]
    fn pla_reference_resolves_relative() {
        let dir = tempfile::tempdir().unwrap();
        let mut pla = std::fs::File::create(dir.path().join("and.pla")).unwrap();
        writeln!(pla, ".i 2\n.o 1\n11 1\n.e").unwrap();
        let text = r#"{"team": ["human", "human"], "mission": {"pla": "and.pla", "output": 0},
                       "sis": {"alpha": 0.1, "beta": 0.1}}"#;
        let path = dir.path().join("s.json");
        std::fs::write(&path, text).unwrap();
        let f = ScenarioFile::load(&path).unwrap();
        let m = &f.scenario.mission;
        assert_eq!(m.evaluate(&parse_bits("11").unwrap()).unwrap(), crate::logic::Ternary::One);
        assert_eq!(m.evaluate(&parse_bits("10").unwrap()).unwrap(), crate::logic::Ternary::Zero);
    }

    #[test]
    fn error_classes() {
        let parse = |t: &str| ScenarioFile::parse(t, Path::new(".")).unwrap_err();
        assert!(parse("{").is_parse());
        assert!(parse(&CHAIN.replace("\"010\"", "\"0x0\"")).is_parse());
        let e = parse(&CHAIN.replace("{\"at_least\": 2}", "{\"at_least\": 2, \"table\": \"n=3\"}"));
        assert!(matches!(e, ScenarioFileError::MissionSpec));
        assert!(!e.is_parse());
        let e = parse(&CHAIN.replace("[[0, 1], [1, 2]]", "[[0, 1], [1, 7]]"));
        assert!(!e.is_parse() && !e.is_limit());
        let e = parse(
            &CHAIN
                .replace("\"human\", \"human\", \"human\"", "\"human\", \"human\", \"machine\"")
                .replace("[1, 2]", "[1, 0]"),
        );
        assert!(matches!(e, ScenarioFileError::Scenario(ScenarioError::Invalid(_))));
        assert!(parse(&CHAIN.replace("\"010\"", "\"01\"")).to_string().contains("teammates"));
    }

    #[test]
    fn contact_schedule_from_file() {
        let text = r#"{"team": ["human", "human"], "mission": {"at_least": 2},
            "sis": {"alpha": 0.0, "beta": 1.0},
            "contacts": [{"from_step": 0, "edges": []}, {"from_step": 2, "edges": [[0, 1]]}]}"#;
        let f = ScenarioFile::parse(text, Path::new(".")).unwrap();
        assert_eq!(f.scenario.contacts.graph_at(1).edges().count(), 0);
        assert_eq!(f.scenario.contacts.graph_at(2).edges().count(), 1);
        let bad = text.replace("\"from_step\": 0", "\"from_step\": 1");
        assert!(ScenarioFile::parse(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn robot_response_and_policy() {
        let text = r#"{"team": ["human", "human", "human", "machine"],
            "edges": [[0, 1], [1, 2]],
            "mission": {"at_least": 2},
            "sis": {"alpha": 0.2, "beta": 0.3},
            "responses": [{"machine": 3, "watched": [1], "rule": "any"}],
            "policy": {"rule": "switch_partner", "preferences": [1, 2, 0]},
            "initial": "0100"}"#;
        let f = ScenarioFile::parse(text, Path::new(".")).unwrap();
        assert_eq!(f.initial.detection[&3], BinaryState::Stressed);
        assert_eq!(f.policy, RobotPolicy::SwitchPartner { preferences: vec![1, 2, 0] });
        let bad = text.replace("[1, 2, 0]", "[1, 3]");
        assert!(ScenarioFile::parse(&bad, Path::new(".")).is_err());
    }
}
