//! SIS stress dynamics on a team contact graph.
//!
//! Closed forms for pure recovery (`I(t) = I0·e^(−αt)`, `F(t) = 1 − e^(−αt)`)
//! sit next to a synchronous discrete-time process: each step every human
//! draws one uniform number. A stressed human recovers when the draw falls
//! below `1 − e^(−α·dt)`; a susceptible one with `k` stressed human
//! neighbours becomes stressed when it falls below `1 − (1 − β)^k`.
//! Machines never carry stress; their detection flag g(m) is recomputed
//! from the post-step human states.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{BinaryState, LogicError, StressResponse, TeammateId, TeammateKind};

/// Seedable generator used by every stochastic routine in the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SisError {
    #[error("negative input: {0}")]
    NegativeInput(&'static str),
    #[error("mean stressed time is undefined for a zero recovery rate")]
    ZeroRate,
    #[error("invalid SIS parameters: {0}")]
    InvalidParams(String),
    #[error("invalid contact graph: {0}")]
    InvalidGraph(String),
    #[error("state and graph describe different teams: {0}")]
    TeamMismatch(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

pub fn recovery_cdf(alpha: f64, t: f64) -> Result<f64, SisError> {
    if alpha < 0.0 {
        return Err(SisError::NegativeInput("alpha"));
    }
    if t < 0.0 {
        return Err(SisError::NegativeInput("t"));
    }
    Ok(-(-alpha * t).exp_m1())
}

pub fn expected_stressed(i0: f64, alpha: f64, t: f64) -> Result<f64, SisError> {
    if i0 < 0.0 {
        return Err(SisError::NegativeInput("i0"));
    }
    if alpha < 0.0 {
        return Err(SisError::NegativeInput("alpha"));
    }
    if t < 0.0 {
        return Err(SisError::NegativeInput("t"));
    }
    Ok(i0 * (-alpha * t).exp())
}

pub fn mean_stressed_time(alpha: f64) -> Result<f64, SisError> {
    if alpha < 0.0 {
        return Err(SisError::NegativeInput("alpha"));
    }
    if alpha == 0.0 {
        return Err(SisError::ZeroRate);
    }
    Ok(1.0 / alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SisParams {
    /// Recovery rate per unit time.
    pub alpha: f64,
    /// Per-contact, per-step transmission probability.
    pub beta: f64,
    /// Step duration.
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    1.0
}

impl SisParams {
    pub fn new(alpha: f64, beta: f64, dt: f64) -> Result<Self, SisError> {
        let p = Self { alpha, beta, dt };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SisError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(SisError::InvalidParams(format!("alpha = {} must be finite and >= 0", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(SisError::InvalidParams(format!("beta = {} must lie in [0, 1]", self.beta)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SisError::InvalidParams(format!("dt = {} must be finite and > 0", self.dt)));
        }
        Ok(())
    }

    /// `1 − e^(−α·dt)`
    pub fn recovery_probability(&self) -> f64 {
        -(-self.alpha * self.dt).exp_m1()
    }

    /// `1 − (1 − β)^k`
    pub fn infection_probability(&self, stressed_neighbours: usize) -> f64 {
        1.0 - (1.0 - self.beta).powi(stressed_neighbours as i32)
    }
}

/// Team members plus undirected contacts. Stress crosses human–human
/// edges only; human–machine edges carry detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactGraph {
    team: Vec<TeammateId>,
    edges: BTreeSet<(usize, usize)>,
    human_adj: Vec<Vec<usize>>,
}

impl ContactGraph {
    pub fn new(team: Vec<TeammateId>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, SisError> {
        for (i, m) in team.iter().enumerate() {
            if m.index != i {
                return Err(SisError::InvalidGraph(format!("teammate at position {i} has index {}", m.index)));
            }
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(SisError::InvalidGraph(format!("self-edge on teammate {a}")));
            }
            if a >= team.len() || b >= team.len() {
                return Err(SisError::InvalidGraph(format!("edge ({a}, {b}) leaves the team")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut human_adj = vec![Vec::new(); team.len()];
        for &(a, b) in &set {
            if team[a].is_human() && team[b].is_human() {
                human_adj[a].push(b);
                human_adj[b].push(a);
            }
        }
        Ok(Self { team, edges: set, human_adj })
    }

    pub fn team(&self) -> &[TeammateId] {
        &self.team
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Humans sharing a transmitting edge with teammate `i`.
    pub fn human_neighbours(&self, i: usize) -> &[usize] {
        &self.human_adj[i]
    }

    pub fn humans(&self) -> impl Iterator<Item = usize> + '_ {
        self.team.iter().filter(|m| m.is_human()).map(|m| m.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SisState {
    pub t: u64,
    /// Per teammate; machine entries stay `Unstressed`.
    pub stress: Vec<BinaryState>,
    /// g(m) keyed by machine index.
    pub detection: BTreeMap<usize, BinaryState>,
}

impl SisState {
    pub fn new(team: &[TeammateId], stress: Vec<BinaryState>, responses: &[StressResponse]) -> Result<Self, SisError> {
        if stress.len() != team.len() {
            return Err(SisError::TeamMismatch(format!("{} states for {} teammates", stress.len(), team.len())));
        }
        if let Some(m) = team.iter().find(|m| m.kind == TeammateKind::Machine && stress[m.index].is_stressed()) {
            return Err(SisError::TeamMismatch(format!("machine {} cannot be stressed", m.index)));
        }
        let detection = detect(responses, &stress)?;
        Ok(Self { t: 0, stress, detection })
    }

    pub fn stressed_count(&self) -> usize {
        self.stress.iter().filter(|s| s.is_stressed()).count()
    }

    /// Human states with each machine slot replaced by its g(m).
    pub fn scene(&self) -> Vec<BinaryState> {
        let mut a = self.stress.clone();
        for (&m, &g) in &self.detection {
            a[m] = g;
        }
        a
    }
}

pub(crate) fn detect(
    responses: &[StressResponse],
    stress: &[BinaryState],
) -> Result<BTreeMap<usize, BinaryState>, SisError> {
    responses.iter().map(|r| Ok((r.machine().index, r.eval(stress)?))).collect()
}

/// Human transition for one step given the uniform draw `u`.
pub fn transition(current: BinaryState, stressed_neighbours: usize, p: &SisParams, u: f64) -> BinaryState {
    if current.is_stressed() {
        BinaryState::from_bool(u >= p.recovery_probability())
    } else {
        BinaryState::from_bool(u < p.infection_probability(stressed_neighbours))
    }
}

/// Advances human stress by one synchronous step, then recomputes g(m).
pub fn step(
    s: &SisState,
    g: &ContactGraph,
    responses: &[StressResponse],
    p: &SisParams,
    rng: &mut impl Rng,
) -> Result<SisState, SisError> {
    if s.stress.len() != g.team().len() {
        return Err(SisError::TeamMismatch(format!(
            "state has {} teammates, graph {}",
            s.stress.len(),
            g.team().len()
        )));
    }
    let mut next = s.stress.clone();
    for m in g.team().iter().filter(|m| m.is_human()) {
        let i = m.index;
        let k = g.human_neighbours(i).iter().filter(|&&j| s.stress[j].is_stressed()).count();
        let u: f64 = rng.gen();
        next[i] = transition(s.stress[i], k, p, u);
    }
    let detection = detect(responses, &next)?;
    Ok(SisState { t: s.t + 1, stress: next, detection })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub seed: u64,
    pub params: SisParams,
    pub states: Vec<SisState>,
}

pub fn run(
    initial: &SisState,
    g: &ContactGraph,
    responses: &[StressResponse],
    p: &SisParams,
    steps: u64,
    seed: u64,
) -> Result<Trajectory, SisError> {
    p.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut states = Vec::with_capacity(steps as usize + 1);
    states.push(initial.clone());
    for _ in 0..steps {
        let next = step(states.last().unwrap(), g, responses, p, &mut rng)?;
        states.push(next);
    }
    Ok(Trajectory { seed, params: *p, states })
}

impl Trajectory {
    /// CSV with columns `t,teammate,kind,state,g`; one row per teammate per step.
    pub fn to_csv(&self, team: &[TeammateId]) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "teammate", "kind", "state", "g"])?;
        for s in &self.states {
            for m in team {
                let (kind, state, g) = match m.kind {
                    TeammateKind::Human => {
                        ("human", if s.stress[m.index].is_stressed() { "I" } else { "S" }, String::new())
                    }
                    TeammateKind::Machine => {
                        ("machine", "-", s.detection.get(&m.index).map(|g| g.bit().to_string()).unwrap_or_default())
                    }
                };
                w.write_record([s.t.to_string(), m.index.to_string(), kind.into(), state.into(), g])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
