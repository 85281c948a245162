//! Mission engine: replays, stochastic missions and failure estimates.
//!
//! Every step runs in a fixed order: stress dynamics, machine detection,
//! robot policy, then mission evaluation through the compiled diagram.

pub mod file;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dd::{DdError, Manager, NodeRef};
use crate::logic::{
    assignment_of, BinaryState, Decision, DecisionTable, LogicError, StressResponse, TableRow, TeammateId,
    TeammateKind, Ternary, MAX_TABLE_VARS,
};
use crate::pla::{PlaError, PlaFile};
use crate::sis::{self, rng_from_seed, ContactGraph, SisError, SisParams, SisState};

/// Upper bound on human teammates and on live chain states for exact
/// enumeration.
pub const MAX_EXACT_STATES: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("assignment at step {step} has {got} entries, team has {expected}")]
    WidthMismatch { step: usize, expected: usize, got: usize },
    #[error("team mismatch: {0}")]
    TeamMismatch(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("state space too large for exact enumeration: {0}")]
    TooLarge(String),
    #[error("at least one trial is required")]
    NoTrials,
    #[error(transparent)]
    Sis(#[from] SisError),
    #[error(transparent)]
    Dd(#[from] DdError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Pla(#[from] PlaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionStatus {
    Started,
    InProgress,
    Failed,
    Uncertain,
}

/// How diagram terminals become statuses, and which statuses stick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatusMap {
    pub zero: MissionStatus,
    pub one: MissionStatus,
    pub dont_care: MissionStatus,
    pub failed_absorbing: bool,
    pub uncertain_absorbing: bool,
}

impl Default for StatusMap {
    fn default() -> Self {
        Self {
            zero: MissionStatus::InProgress,
            one: MissionStatus::Failed,
            dont_care: MissionStatus::Uncertain,
            failed_absorbing: true,
            uncertain_absorbing: false,
        }
    }
}

impl StatusMap {
    pub fn map(&self, t: Ternary) -> MissionStatus {
        match t {
            Ternary::Zero => self.zero,
            Ternary::One => self.one,
            Ternary::DontCare => self.dont_care,
        }
    }

    pub fn is_absorbing(&self, s: MissionStatus) -> bool {
        match s {
            MissionStatus::Failed => self.failed_absorbing,
            MissionStatus::Uncertain => self.uncertain_absorbing,
            _ => false,
        }
    }
}

/// Unit-state function over all teammates; machine variables read g(m).
#[derive(Debug)]
pub struct MissionFunction {
    mgr: Manager,
    root: NodeRef,
}

impl MissionFunction {
    pub fn from_table(t: &DecisionTable) -> Result<Self, ScenarioError> {
        let mut mgr = Manager::new(t.n);
        let root = mgr.build_from_table(t)?;
        Ok(Self { mgr, root })
    }

    pub fn from_pla(p: &PlaFile, output: usize) -> Result<Self, ScenarioError> {
        if output >= p.num_outputs {
            return Err(ScenarioError::Invalid(format!("PLA has no output {output}")));
        }
        let mut mgr = Manager::new(p.num_inputs);
        let root = p.output_dd(output, &mut mgr)?;
        Ok(Self { mgr, root })
    }

    /// Fails once at least `k` humans are stressed; machine columns are ignored.
    pub fn at_least(team: &[TeammateId], k: usize) -> Result<Self, ScenarioError> {
        Self::from_table(&threshold_table(team, k)?)
    }

    pub fn num_vars(&self) -> usize {
        self.mgr.num_vars()
    }

    pub fn manager(&self) -> &Manager {
        &self.mgr
    }

    pub fn root(&self) -> NodeRef {
        self.root
    }

    pub fn evaluate(&self, scene: &[BinaryState]) -> Result<Ternary, ScenarioError> {
        Ok(self.mgr.evaluate(self.root, scene)?)
    }
}

/// Full table: 1 when at least `k` humans are stressed, else 0.
pub fn threshold_table(team: &[TeammateId], k: usize) -> Result<DecisionTable, ScenarioError> {
    let n = team.len();
    if n > MAX_TABLE_VARS {
        return Err(LogicError::TooManyVariables { requested: n }.into());
    }
    let rows = (0..1u64 << n)
        .map(|code| {
            let assignment = assignment_of(code, n);
            let stressed = team.iter().filter(|m| m.is_human() && assignment[m.index].is_stressed()).count();
            let unit_state = if stressed >= k { Ternary::One } else { Ternary::Zero };
            TableRow { assignment, unit_state, decision: Decision::for_unit_state(unit_state) }
        })
        .collect();
    Ok(DecisionTable::new(n, rows))
}

/// Contact graphs that take effect at scripted step boundaries.
#[derive(Debug, Clone)]
pub struct ContactSchedule {
    entries: Vec<(u64, ContactGraph)>,
}

impl ContactSchedule {
    pub fn fixed(g: ContactGraph) -> Self {
        Self { entries: vec![(0, g)] }
    }

    pub fn new(entries: Vec<(u64, ContactGraph)>) -> Result<Self, ScenarioError> {
        match entries.first() {
            Some((0, _)) => {}
            _ => return Err(ScenarioError::Invalid("contact schedule must start at step 0".into())),
        }
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(ScenarioError::Invalid("contact schedule steps must strictly increase".into()));
        }
        if entries.iter().any(|(_, g)| g.team() != entries[0].1.team()) {
            return Err(ScenarioError::Invalid("contact graphs disagree on the team".into()));
        }
        Ok(Self { entries })
    }

    /// Graph driving the transition out of step `s`.
    pub fn graph_at(&self, s: u64) -> &ContactGraph {
        let i = self.entries.partition_point(|(from, _)| *from <= s);
        &self.entries[i - 1].1
    }
}

#[derive(Debug)]
pub struct Scenario {
    pub team: Vec<TeammateId>,
    pub contacts: ContactSchedule,
    pub mission: MissionFunction,
    pub responses: Vec<StressResponse>,
    pub sis: SisParams,
    pub status_map: StatusMap,
}

impl Scenario {
    pub fn new(
        team: Vec<TeammateId>,
        contacts: ContactSchedule,
        mission: MissionFunction,
        responses: Vec<StressResponse>,
        sis: SisParams,
        status_map: StatusMap,
    ) -> Result<Self, ScenarioError> {
        sis.validate()?;
        if contacts.entries[0].1.team() != team.as_slice() {
            return Err(ScenarioError::TeamMismatch("contact graph team differs from scenario team".into()));
        }
        if mission.num_vars() != team.len() {
            return Err(ScenarioError::Invalid(format!(
                "mission function has {} variables for {} teammates",
                mission.num_vars(),
                team.len()
            )));
        }
        for m in team.iter().filter(|m| m.kind == TeammateKind::Machine) {
            let n = responses.iter().filter(|r| r.machine().index == m.index).count();
            if n != 1 {
                return Err(ScenarioError::Invalid(format!("machine {} has {n} stress responses", m.index)));
            }
        }
        for r in &responses {
            let m = r.machine().index;
            if team.get(m).map(|t| t.kind) != Some(TeammateKind::Machine) {
                return Err(ScenarioError::Invalid(format!("response for non-machine {m}")));
            }
            if let Some(&w) = r.watched().iter().find(|&&w| team.get(w).map(|t| t.kind) != Some(TeammateKind::Human)) {
                return Err(ScenarioError::Invalid(format!("machine {m} watches non-human {w}")));
            }
        }
        Ok(Self { team, contacts, mission, responses, sis, status_map })
    }

    pub fn humans(&self) -> impl Iterator<Item = usize> + '_ {
        self.team.iter().filter(|m| m.is_human()).map(|m| m.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RobotPolicy {
    ReportOnly,
    /// On detection, watch the first unstressed human from `preferences`.
    SwitchPartner {
        preferences: Vec<usize>,
    },
}

impl RobotPolicy {
    pub fn validate(&self, team: &[TeammateId]) -> Result<(), ScenarioError> {
        if let RobotPolicy::SwitchPartner { preferences } = self {
            if let Some(&p) = preferences.iter().find(|&&p| team.get(p).map(|t| t.kind) != Some(TeammateKind::Human)) {
                return Err(ScenarioError::Invalid(format!("preference {p} is not a human teammate")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    StateChange { teammate: usize, from: BinaryState, to: BinaryState },
    Detection { machine: usize, watched: Vec<usize> },
    PartnerSwitch { machine: usize, from: Vec<usize>, to: usize },
    StatusChange { status: MissionStatus },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub t: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    fn push(&mut self, t: u64, kind: EventKind) {
        self.events.push(Event { t, kind });
    }

    pub fn statuses(&self) -> impl Iterator<Item = (u64, MissionStatus)> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::StatusChange { status } => Some((e.t, status)),
            _ => None,
        })
    }

    pub fn contains_failed(&self) -> bool {
        self.statuses().any(|(_, s)| s == MissionStatus::Failed)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    /// CSV with columns `t,kind,subject,detail`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,kind,subject,detail\n");
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        for e in &self.events {
            let (kind, subject, detail) = match &e.kind {
                EventKind::StateChange { teammate, from, to } => {
                    ("state_change", teammate.to_string(), format!("{}->{}", from.bit(), to.bit()))
                }
                EventKind::Detection { machine, watched } => ("detection", machine.to_string(), join(watched)),
                EventKind::PartnerSwitch { machine, from, to } => {
                    ("partner_switch", machine.to_string(), format!("{}->{to}", join(from)))
                }
                EventKind::StatusChange { status } => (
                    "status_change",
                    String::new(),
                    serde_json::to_value(status).unwrap().as_str().unwrap().to_string(),
                ),
            };
            let _ = writeln!(out, "{},{kind},{subject},{detail}", e.t);
        }
        out
    }
}

/// Outcome of the deterministic part of a step.
struct Reaction {
    detection: BTreeMap<usize, BinaryState>,
    switches: Vec<(usize, Vec<usize>, usize)>,
    terminal: Ternary,
}

/// Detection, policy and evaluation for freshly updated human states.
/// Rewires `responses` in place when the policy switches partners.
fn react(
    sc: &Scenario,
    policy: &RobotPolicy,
    responses: &mut [StressResponse],
    stress: &[BinaryState],
) -> Result<Reaction, ScenarioError> {
    let detection = sis::detect(responses, stress)?;
    let mut switches = Vec::new();
    if let RobotPolicy::SwitchPartner { preferences } = policy {
        for r in responses.iter_mut() {
            if !detection[&r.machine().index].is_stressed() {
                continue;
            }
            let pick = preferences.iter().copied().find(|&h| !stress[h].is_stressed() && !r.watched().contains(&h));
            if let Some(h) = pick {
                let from: Vec<usize> = r.watched().iter().copied().collect();
                r.rewire(h);
                switches.push((r.machine().index, from, h));
            }
        }
    }
    let mut scene = stress.to_vec();
    for (&m, &g) in &detection {
        scene[m] = g;
    }
    let terminal = sc.mission.evaluate(&scene)?;
    Ok(Reaction { detection, switches, terminal })
}

/// Logged mission state shared by replays and stochastic runs.
struct Mission<'a> {
    sc: &'a Scenario,
    policy: &'a RobotPolicy,
    responses: Vec<StressResponse>,
    stress: Vec<BinaryState>,
    detection: BTreeMap<usize, BinaryState>,
    status: MissionStatus,
    absorbed: bool,
    failed: bool,
    log: EventLog,
}

impl<'a> Mission<'a> {
    fn start(sc: &'a Scenario, policy: &'a RobotPolicy, stress: Vec<BinaryState>) -> Result<Self, ScenarioError> {
        policy.validate(&sc.team)?;
        if stress.len() != sc.team.len() {
            return Err(ScenarioError::WidthMismatch { step: 0, expected: sc.team.len(), got: stress.len() });
        }
        let mut m = Mission {
            sc,
            policy,
            responses: sc.responses.clone(),
            stress: vec![BinaryState::Unstressed; sc.team.len()],
            detection: sc.responses.iter().map(|r| (r.machine().index, BinaryState::Unstressed)).collect(),
            status: MissionStatus::Started,
            absorbed: false,
            failed: false,
            log: EventLog::default(),
        };
        m.log.push(0, EventKind::StatusChange { status: MissionStatus::Started });
        m.observe(0, stress)?;
        Ok(m)
    }

    fn observe(&mut self, t: u64, mut stress: Vec<BinaryState>) -> Result<(), ScenarioError> {
        for m in self.sc.team.iter().filter(|m| !m.is_human()) {
            stress[m.index] = BinaryState::Unstressed;
        }
        if t > 0 {
            for (i, (&old, &new)) in self.stress.iter().zip(&stress).enumerate() {
                if old != new {
                    self.log.push(t, EventKind::StateChange { teammate: i, from: old, to: new });
                }
            }
        }
        let watched_before: Vec<Vec<usize>> =
            self.responses.iter().map(|r| r.watched().iter().copied().collect()).collect();
        let reaction = react(self.sc, self.policy, &mut self.responses, &stress)?;
        for (r, watched) in self.sc.responses.iter().zip(watched_before) {
            let m = r.machine().index;
            if reaction.detection[&m].is_stressed() && !self.detection[&m].is_stressed() {
                self.log.push(t, EventKind::Detection { machine: m, watched });
            }
        }
        for (machine, from, to) in reaction.switches {
            self.log.push(t, EventKind::PartnerSwitch { machine, from, to });
        }
        self.stress = stress;
        self.detection = reaction.detection;

        let status = self.sc.status_map.map(reaction.terminal);
        // the opening step reports Started unless the scene is already a failure
        if t == 0 && status != MissionStatus::Failed {
            return Ok(());
        }
        if !self.absorbed && status != self.status {
            self.status = status;
            self.log.push(t, EventKind::StatusChange { status });
            self.failed |= status == MissionStatus::Failed;
            self.absorbed = self.sc.status_map.is_absorbing(status);
        }
        Ok(())
    }
}

/// Statuses after each step of a scripted timeline (index 0 is the start).
pub fn replay_fixed(sc: &Scenario, timeline: &[Vec<BinaryState>]) -> Result<Vec<MissionStatus>, ScenarioError> {
    let log = replay_logged(sc, &RobotPolicy::ReportOnly, timeline)?;
    let mut out = Vec::with_capacity(timeline.len());
    let mut current = MissionStatus::Started;
    let mut changes = log.statuses().peekable();
    for t in 0..timeline.len() as u64 {
        while let Some(&(_, s)) = changes.peek().filter(|(at, _)| *at == t) {
            current = s;
            changes.next();
        }
        out.push(current);
    }
    Ok(out)
}

/// Scripted timeline with a robot policy, fully logged.
pub fn replay_logged(
    sc: &Scenario,
    policy: &RobotPolicy,
    timeline: &[Vec<BinaryState>],
) -> Result<EventLog, ScenarioError> {
    let Some(first) = timeline.first() else {
        return Ok(EventLog::default());
    };
    for (step, a) in timeline.iter().enumerate() {
        if a.len() != sc.team.len() {
            return Err(ScenarioError::WidthMismatch { step, expected: sc.team.len(), got: a.len() });
        }
    }
    let mut m = Mission::start(sc, policy, first.clone())?;
    for (t, a) in timeline.iter().enumerate().skip(1) {
        m.observe(t as u64, a.clone())?;
    }
    Ok(m.log)
}

fn check_initial(sc: &Scenario, initial: &SisState) -> Result<(), ScenarioError> {
    if initial.stress.len() != sc.team.len() {
        return Err(ScenarioError::TeamMismatch(format!(
            "initial state has {} teammates, scenario {}",
            initial.stress.len(),
            sc.team.len()
        )));
    }
    if let Some(m) = sc.team.iter().find(|m| !m.is_human() && initial.stress[m.index].is_stressed()) {
        return Err(ScenarioError::TeamMismatch(format!("machine {} cannot be stressed", m.index)));
    }
    Ok(())
}

fn simulate<'a>(
    sc: &'a Scenario,
    policy: &'a RobotPolicy,
    initial: &SisState,
    steps: u64,
    seed: u64,
    stop_on_failure: bool,
) -> Result<Mission<'a>, ScenarioError> {
    check_initial(sc, initial)?;
    let mut rng = rng_from_seed(seed);
    let mut m = Mission::start(sc, policy, initial.stress.clone())?;
    let mut state = SisState { t: 0, stress: m.stress.clone(), detection: m.detection.clone() };
    for t in 1..=steps {
        if stop_on_failure && m.failed {
            break;
        }
        let next = sis::step(&state, sc.contacts.graph_at(t - 1), &m.responses, &sc.sis, &mut rng)?;
        m.observe(t, next.stress.clone())?;
        state = SisState { t, stress: next.stress, detection: m.detection.clone() };
    }
    Ok(m)
}

/// One stochastic mission; the log is a pure function of the inputs.
pub fn run_mission(
    sc: &Scenario,
    policy: &RobotPolicy,
    initial: &SisState,
    steps: u64,
    seed: u64,
) -> Result<EventLog, ScenarioError> {
    simulate(sc, policy, initial, steps, seed, false).map(|m| m.log)
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of Monte Carlo trial `trial`: `splitmix64(seed ^ splitmix64(trial))`.
pub fn child_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FailureEstimate {
    pub trials: u64,
    pub failures: u64,
    pub p_fail: f64,
    /// Normal-approximation 95% interval, clipped to [0, 1].
    pub ci95: (f64, f64),
}

impl FailureEstimate {
    pub fn contains(&self, p: f64) -> bool {
        self.ci95.0 <= p && p <= self.ci95.1
    }
}

pub fn estimate_failure(
    sc: &Scenario,
    policy: &RobotPolicy,
    initial: &SisState,
    steps: u64,
    trials: u64,
    seed: u64,
) -> Result<FailureEstimate, ScenarioError> {
    if trials == 0 {
        return Err(ScenarioError::NoTrials);
    }
    let failures = (0..trials)
        .into_par_iter()
        .map(|i| simulate(sc, policy, initial, steps, child_seed(seed, i), true).map(|m| m.failed as u64))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let p = failures as f64 / trials as f64;
    let half = 1.96 * (p * (1.0 - p) / trials as f64).sqrt();
    Ok(FailureEstimate { trials, failures, p_fail: p, ci95: ((p - half).max(0.0), (p + half).min(1.0)) })
}

/// Exact probability that the log would contain `Failed` within `steps`,
/// by forward enumeration of the human-state Markov chain.
pub fn failure_probability_exact(
    sc: &Scenario,
    policy: &RobotPolicy,
    initial: &SisState,
    steps: u64,
) -> Result<f64, ScenarioError> {
    check_initial(sc, initial)?;
    policy.validate(&sc.team)?;
    let humans: Vec<usize> = sc.humans().collect();
    if humans.len() > 20 {
        return Err(ScenarioError::TooLarge(format!("{} humans", humans.len())));
    }
    let map = &sc.status_map;
    let mut responses = sc.responses.clone();
    let mut stress = initial.stress.clone();
    for m in sc.team.iter().filter(|m| !m.is_human()) {
        stress[m.index] = BinaryState::Unstressed;
    }
    let r0 = react(sc, policy, &mut responses, &stress)?;
    if map.map(r0.terminal) == MissionStatus::Failed {
        return Ok(1.0);
    }

    // (human states, machine responses, frozen in Uncertain) → probability
    type Key = (Vec<BinaryState>, Vec<StressResponse>, bool);
    let mut live: HashMap<Key, f64> = HashMap::from([((stress, responses, false), 1.0)]);
    let mut p_fail = 0.0;
    let recover = sc.sis.recovery_probability();
    for t in 1..=steps {
        let g = sc.contacts.graph_at(t - 1);
        let mut next: HashMap<Key, f64> = HashMap::new();
        for ((stress, responses, frozen), mass) in live {
            let mut branches: Vec<(Vec<BinaryState>, f64)> = vec![(stress.clone(), mass)];
            for &h in &humans {
                let p1 = if stress[h].is_stressed() {
                    1.0 - recover
                } else {
                    let k = g.human_neighbours(h).iter().filter(|&&j| stress[j].is_stressed()).count();
                    sc.sis.infection_probability(k)
                };
                let mut grown = Vec::with_capacity(branches.len() * 2);
                for (mut s, w) in branches {
                    if p1 < 1.0 {
                        let mut s0 = s.clone();
                        s0[h] = BinaryState::Unstressed;
                        grown.push((s0, w * (1.0 - p1)));
                    }
                    if p1 > 0.0 {
                        s[h] = BinaryState::Stressed;
                        grown.push((s, w * p1));
                    }
                }
                branches = grown;
            }
            for (s, w) in branches {
                let mut rs = responses.clone();
                let r = react(sc, policy, &mut rs, &s)?;
                let status = map.map(r.terminal);
                if frozen {
                    *next.entry((s, rs, true)).or_insert(0.0) += w;
                } else if status == MissionStatus::Failed {
                    p_fail += w;
                } else {
                    let freeze = status == MissionStatus::Uncertain && map.uncertain_absorbing;
                    *next.entry((s, rs, freeze)).or_insert(0.0) += w;
                }
            }
        }
        if next.len() > MAX_EXACT_STATES {
            return Err(ScenarioError::TooLarge(format!("{} live chain states at step {t}", next.len())));
        }
        // frozen mass can never fail again
        next.retain(|k, _| !k.2);
        live = next;
    }
    Ok(p_fail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_bits, team_from_kinds, ResponseRule};

    fn humans(n: usize) -> Vec<TeammateId> {
        (0..n).map(TeammateId::human).collect()
    }

    fn chain(n: usize, alpha: f64, beta: f64, k: usize) -> Scenario {
        let team = humans(n);
        let g = ContactGraph::new(team.clone(), (1..n).map(|i| (i - 1, i))).unwrap();
        Scenario::new(
            team.clone(),
            ContactSchedule::fixed(g),
            MissionFunction::at_least(&team, k).unwrap(),
            vec![],
            SisParams::new(alpha, beta, 1.0).unwrap(),
            StatusMap::default(),
        )
        .unwrap()
    }

    fn init(sc: &Scenario, bits: &str) -> SisState {
        SisState::new(&sc.team, parse_bits(bits).unwrap(), &sc.responses).unwrap()
    }

    fn timeline(rows: &[&str]) -> Vec<Vec<BinaryState>> {
        rows.iter().map(|r| parse_bits(r).unwrap()).collect()
    }

    #[test]
    fn human_only_replay() {
        let sc = chain(3, 0.0, 0.0, 2);
        let got = replay_fixed(&sc, &timeline(&["000", "100", "010", "011"])).unwrap();
        use MissionStatus::*;
        assert_eq!(got, vec![Started, InProgress, InProgress, Failed]);
        let calm = replay_fixed(&sc, &timeline(&["000", "000", "000", "000"])).unwrap();
        assert_eq!(calm, vec![Started, InProgress, InProgress, InProgress]);
        assert!(matches!(
            replay_fixed(&sc, &timeline(&["000", "10"])),
            Err(ScenarioError::WidthMismatch { step: 1, .. })
        ));
    }

    #[test]
    fn failed_is_absorbing() {
        let sc = chain(3, 0.0, 0.0, 2);
        let got = replay_fixed(&sc, &timeline(&["000", "110", "000", "100"])).unwrap();
        assert_eq!(got[1..], [MissionStatus::Failed; 3]);
    }

    #[test]
    fn already_failed_at_start() {
        let sc = chain(3, 0.0, 0.0, 2);
        let got = replay_fixed(&sc, &timeline(&["110", "000"])).unwrap();
        assert_eq!(got, vec![MissionStatus::Failed, MissionStatus::Failed]);
        assert_eq!(failure_probability_exact(&sc, &RobotPolicy::ReportOnly, &init(&sc, "110"), 0).unwrap(), 1.0);
        assert_eq!(failure_probability_exact(&sc, &RobotPolicy::ReportOnly, &init(&sc, "100"), 0).unwrap(), 0.0);
        let log = run_mission(&sc, &RobotPolicy::ReportOnly, &init(&sc, "110"), 0, 1).unwrap();
        let s: Vec<_> = log.statuses().collect();
        assert_eq!(s, vec![(0, MissionStatus::Started), (0, MissionStatus::Failed)]);
    }

    #[test]
    fn quiet_mission_logs_only_start() {
        let sc = chain(3, 0.0, 0.0, 2);
        let log = run_mission(&sc, &RobotPolicy::ReportOnly, &init(&sc, "000"), 25, 9).unwrap();
        assert_eq!(log.events.len(), 2);
        assert_eq!(log.events[0], Event { t: 0, kind: EventKind::StatusChange { status: MissionStatus::Started } });
        assert!(!log.contains_failed());
        let log = run_mission(&sc, &RobotPolicy::ReportOnly, &init(&sc, "000"), 0, 9).unwrap();
        assert_eq!(log.events.len(), 1);
    }

    #[test]
    fn forced_chain_fails_at_step_one() {
        let sc = chain(3, 0.0, 1.0, 2);
        let log = run_mission(&sc, &RobotPolicy::ReportOnly, &init(&sc, "100"), 5, 0).unwrap();
        assert_eq!(
            log.events[1],
            Event {
                t: 1,
                kind: EventKind::StateChange { teammate: 1, from: BinaryState::Unstressed, to: BinaryState::Stressed }
            }
        );
        assert!(log.statuses().any(|s| s == (1, MissionStatus::Failed)));
        // nothing after the absorbing failure changes status
        assert_eq!(log.statuses().last().unwrap().1, MissionStatus::Failed);
    }

    #[test]
    fn exact_one_step_chain() {
        let sc = chain(3, 0.0, 0.5, 2);
        let p = failure_probability_exact(&sc, &RobotPolicy::ReportOnly, &init(&sc, "010"), 1).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
    }

    #[test]
    fn exact_without_infection() {
        let sc = chain(2, 0.3, 0.0, 1);
        let p = failure_probability_exact(&sc, &RobotPolicy::ReportOnly, &init(&sc, "00"), 10).unwrap();
        assert_eq!(p, 0.0);
        let sc = chain(2, 0.3, 0.0, 2);
        assert_eq!(failure_probability_exact(&sc, &RobotPolicy::ReportOnly, &init(&sc, "11"), 3).unwrap(), 1.0);
    }

    #[test]
    fn uncertain_absorbing_blocks_failure() {
        let team = humans(2);
        let t = DecisionTable::parse("n=2\n00 0\n01 X\n11 1\n").unwrap();
        let g = ContactGraph::new(team.clone(), [(0, 1)]).unwrap();
        let map = StatusMap { uncertain_absorbing: true, ..StatusMap::default() };
        let sc = Scenario::new(
            team,
            ContactSchedule::fixed(g),
            MissionFunction::from_table(&t).unwrap(),
            vec![],
            SisParams::new(0.0, 1.0, 1.0).unwrap(),
            map,
        )
        .unwrap();
        let got = replay_fixed(&sc, &timeline(&["00", "01", "11"])).unwrap();
        assert_eq!(got, vec![MissionStatus::Started, MissionStatus::Uncertain, MissionStatus::Uncertain]);
        // the opening scene is not absorbed, so 01 still reaches 11
        let p = failure_probability_exact(&sc, &RobotPolicy::ReportOnly, &init(&sc, "01"), 3).unwrap();
        assert_eq!(p, 1.0);
        let p = failure_probability_exact(&sc, &RobotPolicy::ReportOnly, &init(&sc, "00"), 3).unwrap();
        assert_eq!(p, 0.0);
    }

    fn robot_team() -> (Vec<TeammateId>, StressResponse) {
        let team =
            team_from_kinds(&[TeammateKind::Human, TeammateKind::Human, TeammateKind::Human, TeammateKind::Machine]);
        let r = StressResponse::new(TeammateId::machine(3), [TeammateId::human(1)], ResponseRule::AnyWatchedStressed)
            .unwrap();
        (team, r)
    }

    fn robot_scenario(beta: f64) -> Scenario {
        let (team, r) = robot_team();
        let g = ContactGraph::new(team.clone(), [(0, 1), (1, 2), (1, 3), (2, 3)]).unwrap();
        Scenario::new(
            team.clone(),
            ContactSchedule::fixed(g),
            MissionFunction::at_least(&team, 2).unwrap(),
            vec![r],
            SisParams::new(0.5, beta, 1.0).unwrap(),
            StatusMap::default(),
        )
        .unwrap()
    }

    #[test]
    fn robot_switches_partner() {
        let sc = robot_scenario(0.0);
        let policy = RobotPolicy::SwitchPartner { preferences: vec![1, 2, 0] };
        let log = replay_logged(&sc, &policy, &timeline(&["0000", "1000", "0100", "0110"])).unwrap();
        let kinds: Vec<_> = log.events.iter().filter(|e| e.t == 2).map(|e| &e.kind).collect();
        assert!(kinds.contains(&&EventKind::Detection { machine: 3, watched: vec![1] }));
        assert!(kinds.contains(&&EventKind::PartnerSwitch { machine: 3, from: vec![1], to: 2 }));
        assert_eq!(log.statuses().last().unwrap(), (3, MissionStatus::Failed));
        // h3 is stressed too, so the robot moves on to h1 without a fresh detection edge
        assert!(log
            .events
            .iter()
            .any(|e| e.t == 3 && e.kind == EventKind::PartnerSwitch { machine: 3, from: vec![2], to: 0 }));
        assert!(!log.events.iter().any(|e| e.t == 3 && matches!(e.kind, EventKind::Detection { .. })));

        let report =
            replay_logged(&sc, &RobotPolicy::ReportOnly, &timeline(&["0000", "1000", "0100", "0110"])).unwrap();
        assert!(!report.events.iter().any(|e| matches!(e.kind, EventKind::PartnerSwitch { .. })));
    }

    #[test]
    fn scenario_validation() {
        let (team, r) = robot_team();
        let g = ContactGraph::new(team.clone(), []).unwrap();
        let mk = |responses: Vec<StressResponse>, vars: usize| {
            Scenario::new(
                team.clone(),
                ContactSchedule::fixed(g.clone()),
                MissionFunction::at_least(&humans(vars), 2).unwrap(),
                responses,
                SisParams::new(0.1, 0.1, 1.0).unwrap(),
                StatusMap::default(),
            )
        };
        assert!(mk(vec![], 4).is_err());
        assert!(mk(vec![r.clone(), r.clone()], 4).is_err());
        assert!(mk(vec![r.clone()], 3).is_err());
        assert!(mk(vec![r], 4).is_ok());
        assert!(RobotPolicy::SwitchPartner { preferences: vec![3] }.validate(&team).is_err());
    }

    #[test]
    fn schedule_lookup() {
        let team = humans(2);
        let g0 = ContactGraph::new(team.clone(), []).unwrap();
        let g1 = ContactGraph::new(team.clone(), [(0, 1)]).unwrap();
        let s = ContactSchedule::new(vec![(0, g0.clone()), (3, g1.clone())]).unwrap();
        assert_eq!(s.graph_at(2), &g0);
        assert_eq!(s.graph_at(3), &g1);
        assert_eq!(s.graph_at(100), &g1);
        assert!(ContactSchedule::new(vec![(1, g0.clone())]).is_err());
        assert!(ContactSchedule::new(vec![(0, g0.clone()), (0, g1.clone())]).is_err());
    }

    #[test]
    fn scheduled_link_delays_contagion() {
        let team = humans(2);
        let g0 = ContactGraph::new(team.clone(), []).unwrap();
        let g1 = ContactGraph::new(team.clone(), [(0, 1)]).unwrap();
        let sc = Scenario::new(
            team.clone(),
            ContactSchedule::new(vec![(0, g0), (3, g1)]).unwrap(),
            MissionFunction::at_least(&team, 2).unwrap(),
            vec![],
            SisParams::new(0.0, 1.0, 1.0).unwrap(),
            StatusMap::default(),
        )
        .unwrap();
        let log = run_mission(&sc, &RobotPolicy::ReportOnly, &init(&sc, "10"), 6, 0).unwrap();
        assert_eq!(log.statuses().last().unwrap(), (4, MissionStatus::Failed));
        assert_eq!(failure_probability_exact(&sc, &RobotPolicy::ReportOnly, &init(&sc, "10"), 3).unwrap(), 0.0);
        assert_eq!(failure_probability_exact(&sc, &RobotPolicy::ReportOnly, &init(&sc, "10"), 4).unwrap(), 1.0);
    }

    #[test]
    fn estimate_edge_cases() {
        let sc = chain(3, 5.0, 0.0, 2);
        let e = estimate_failure(&sc, &RobotPolicy::ReportOnly, &init(&sc, "010"), 20, 10_000, 1).unwrap();
        assert_eq!(e.failures, 0);
        assert_eq!(e.ci95, (0.0, 0.0));
        let sc = chain(4, 0.0, 1.0, 4);
        let e = estimate_failure(&sc, &RobotPolicy::ReportOnly, &init(&sc, "1000"), 3, 500, 1).unwrap();
        assert_eq!(e.p_fail, 1.0);
        assert!(matches!(
            estimate_failure(&sc, &RobotPolicy::ReportOnly, &init(&sc, "1000"), 3, 0, 1),
            Err(ScenarioError::NoTrials)
        ));
    }

    #[test]
    fn estimate_is_seed_deterministic() {
        let sc = robot_scenario(0.4);
        let policy = RobotPolicy::SwitchPartner { preferences: vec![1, 2, 0] };
        let s0 = init(&sc, "1000");
        let a = estimate_failure(&sc, &policy, &s0, 6, 2000, 42).unwrap();
        let b = estimate_failure(&sc, &policy, &s0, 6, 2000, 42).unwrap();
        assert_eq!(a, b);
        let l1 = run_mission(&sc, &policy, &s0, 30, 5).unwrap();
        assert_eq!(l1.to_jsonl(), run_mission(&sc, &policy, &s0, 30, 5).unwrap().to_jsonl());
    }

    #[test]
    fn robot_exact_matches_sampler() {
        let sc = robot_scenario(0.4);
        let policy = RobotPolicy::SwitchPartner { preferences: vec![1, 2, 0] };
        let s0 = init(&sc, "1000");
        let exact = failure_probability_exact(&sc, &policy, &s0, 4).unwrap();
        let est = estimate_failure(&sc, &policy, &s0, 4, 20_000, 3).unwrap();
        assert!(est.contains(exact), "exact {exact} vs {est:?}");
    }

    #[test]
    fn log_exports() {
        let sc = chain(3, 0.0, 1.0, 2);
        let log = run_mission(&sc, &RobotPolicy::ReportOnly, &init(&sc, "100"), 1, 0).unwrap();
        let jsonl = log.to_jsonl();
        assert_eq!(jsonl.lines().next().unwrap(), r#"{"t":0,"kind":"status_change","status":"started"}"#);
        let csv = log.to_csv();
        assert!(csv.starts_with("t,kind,subject,detail\n0,status_change,,started\n1,state_change,1,0->1\n"));
    }

    #[test]
    fn child_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| child_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
