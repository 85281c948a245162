//! Factor graphs over binary stress variables and exact sum-product.
//!
//! Factor tables are row-major over their scope: the last scope variable
//! varies fastest. Factors built from a conditional distribution put the
//! parents first and the child last, so a CPT row `[p(c=0|pa), p(c=1|pa)]`
//! is contiguous.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{BinaryState, StressResponse, TeammateId, TeammateKind};

/// Largest graph handled by exhaustive enumeration.
pub const MAX_BRUTE_FORCE_VARS: usize = 20;

const CPT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FgError {
    #[error("parent relation contains a cycle through {0}")]
    CyclicParents(String),
    #[error("no CPT given for variable {0}")]
    MissingCpt(String),
    #[error("CPT for {var} has {got} entries, expected {expected}")]
    CptShapeMismatch { var: String, expected: usize, got: usize },
    #[error("CPT for {var} does not sum to 1 for parent assignment {row}")]
    CptNotNormalized { var: String, row: usize },
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("duplicate variable {0}")]
    DuplicateVariable(String),
    #[error("invalid factor {name}: {msg}")]
    InvalidFactor { name: String, msg: String },
    #[error("factor graph contains a cycle; only trees and forests are supported")]
    GraphHasCycle,
    #[error("evidence names unknown variable {0}")]
    UnknownEvidenceVariable(String),
    #[error("evidence has zero probability")]
    ZeroProbabilityEvidence,
    #[error("{0} variables exceed the enumeration limit of {MAX_BRUTE_FORCE_VARS}")]
    TooManyVariables(usize),
    #[error("contact structure is not a tree: {0}")]
    CyclicContactStructure(String),
    #[error("invalid stress parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub name: String,
    pub scope: Vec<usize>,
    pub table: Vec<f64>,
}

impl Factor {
    fn entry_bit(&self, idx: usize, pos: usize) -> usize {
        (idx >> (self.scope.len() - 1 - pos)) & 1
    }
}

/// Bipartite graph of binary variables and factors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorGraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    factors: Vec<Factor>,
    var_factors: Vec<Vec<usize>>,
}

pub type Evidence = BTreeMap<String, BinaryState>;

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: &str) -> Result<usize, FgError> {
        if self.index.contains_key(name) {
            return Err(FgError::DuplicateVariable(name.into()));
        }
        let id = self.names.len();
        self.names.push(name.into());
        self.index.insert(name.into(), id);
        self.var_factors.push(Vec::new());
        Ok(id)
    }

    pub fn add_factor(&mut self, name: &str, scope: Vec<usize>, table: Vec<f64>) -> Result<usize, FgError> {
        let bad = |msg: String| FgError::InvalidFactor { name: name.into(), msg };
        if scope.is_empty() {
            return Err(bad("empty scope".into()));
        }
        for (i, &v) in scope.iter().enumerate() {
            if v >= self.names.len() {
                return Err(bad(format!("scope variable {v} does not exist")));
            }
            if scope[..i].contains(&v) {
                return Err(bad(format!("variable {} repeated in scope", self.names[v])));
            }
        }
        if table.len() != 1 << scope.len() {
            return Err(bad(format!("table has {} entries for a scope of {}", table.len(), scope.len())));
        }
        if table.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(bad("entries must be finite and non-negative".into()));
        }
        if !table.iter().any(|x| *x > 0.0) {
            return Err(bad("all entries are zero".into()));
        }
        let id = self.factors.len();
        for &v in &scope {
            self.var_factors[v].push(id);
        }
        self.factors.push(Factor { name: name.into(), scope, table });
        Ok(id)
    }

    pub fn num_variables(&self) -> usize {
        self.names.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.factors.iter().map(|f| f.scope.len()).sum()
    }

    pub fn variable_names(&self) -> &[String] {
        &self.names
    }

    pub fn variable(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    fn num_nodes(&self) -> usize {
        self.names.len() + self.factors.len()
    }

    fn neighbours(&self, node: usize) -> &[usize] {
        let v = self.names.len();
        if node < v {
            &self.var_factors[node]
        } else {
            &self.factors[node - v].scope
        }
    }

    // Node ids: variables first, then factors offset by the variable count.
    fn node_neighbours(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let v = self.names.len();
        let offset = if node < v { v } else { 0 };
        self.neighbours(node).iter().map(move |&n| n + offset)
    }

    /// Connected components as lists of node ids.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.num_nodes()];
        let mut out = Vec::new();
        for start in 0..self.num_nodes() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut i = 0;
            while i < comp.len() {
                let u = comp[i];
                for n in self.node_neighbours(u) {
                    if !seen[n] {
                        seen[n] = true;
                        comp.push(n);
                    }
                }
                i += 1;
            }
            out.push(comp);
        }
        out
    }

    pub fn is_forest(&self) -> bool {
        self.num_edges() + self.components().len() == self.num_nodes()
    }

    fn evidence_vector(&self, evidence: &Evidence) -> Result<Vec<Option<usize>>, FgError> {
        let mut clamp = vec![None; self.names.len()];
        for (name, s) in evidence {
            let v = self.variable(name).ok_or_else(|| FgError::UnknownEvidenceVariable(name.clone()))?;
            clamp[v] = Some(s.bit() as usize);
        }
        Ok(clamp)
    }

    fn clamped_tables(&self, clamp: &[Option<usize>]) -> Vec<Vec<f64>> {
        self.factors
            .iter()
            .map(|f| {
                let mut t = f.table.clone();
                for (idx, x) in t.iter_mut().enumerate() {
                    let consistent =
                        f.scope.iter().enumerate().all(|(pos, &v)| clamp[v].is_none_or(|b| b == f.entry_bit(idx, pos)));
                    if !consistent {
                        *x = 0.0;
                    }
                }
                t
            })
            .collect()
    }
}

/// Declarative Bayesian network: variable list, parent lists and CPTs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesModel {
    pub variables: Vec<String>,
    #[serde(default)]
    pub parents: BTreeMap<String, Vec<String>>,
    pub cpts: BTreeMap<String, Vec<f64>>,
}

impl BayesModel {
    pub fn to_factor_graph(&self) -> Result<FactorGraph, FgError> {
        from_bayesian(&self.variables, &self.parents, &self.cpts)
    }
}

/// One factor per variable with scope `parents ++ [child]`.
pub fn from_bayesian(
    vars: &[String],
    parents: &BTreeMap<String, Vec<String>>,
    cpts: &BTreeMap<String, Vec<f64>>,
) -> Result<FactorGraph, FgError> {
    let mut g = FactorGraph::new();
    for v in vars {
        g.add_variable(v)?;
    }
    let lookup = |name: &String| g.variable(name).ok_or_else(|| FgError::UnknownVariable(name.clone()));
    let mut pa: Vec<Vec<usize>> = vec![Vec::new(); vars.len()];
    for (child, ps) in parents {
        let c = lookup(child)?;
        pa[c] = ps.iter().map(lookup).collect::<Result<_, _>>()?;
    }
    for name in cpts.keys() {
        lookup(name)?;
    }
    topological_order(&pa).map_err(|v| FgError::CyclicParents(vars[v].clone()))?;

    for (c, name) in vars.iter().enumerate() {
        let table = cpts.get(name).ok_or_else(|| FgError::MissingCpt(name.clone()))?;
        let expected = 1 << (pa[c].len() + 1);
        if table.len() != expected {
            return Err(FgError::CptShapeMismatch { var: name.clone(), expected, got: table.len() });
        }
        for (row, pair) in table.chunks(2).enumerate() {
            if pair.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (pair[0] + pair[1] - 1.0).abs() > CPT_TOLERANCE {
                return Err(FgError::CptNotNormalized { var: name.clone(), row });
            }
        }
        let mut scope = pa[c].clone();
        scope.push(c);
        g.add_factor(&format!("f_{name}"), scope, table.clone())?;
    }
    Ok(g)
}

// Kahn's algorithm; on failure returns a node on a cycle.
fn topological_order(parents: &[Vec<usize>]) -> Result<Vec<usize>, usize> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&v| indeg[v] > 0).unwrap())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalSet {
    names: Vec<String>,
    probs: Vec<[f64; 2]>,
}

impl MarginalSet {
    pub fn get(&self, name: &str) -> Option<[f64; 2]> {
        self.names.iter().position(|n| n == name).map(|i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, [f64; 2])> {
        self.names.iter().map(String::as_str).zip(self.probs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn max_abs_diff(&self, other: &MarginalSet) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max)
    }

    /// `{var: [p0, p1]}` keyed in variable order.
    pub fn to_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        for (n, p) in self.iter() {
            m.insert(n.to_string(), serde_json::json!(p));
        }
        serde_json::Value::Object(m)
    }
}

/// A message along a directed edge; node ids number variables first, then
/// factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub values: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SumProductOptions {
    pub normalize_messages: bool,
    /// Each component is rooted at its node in position
    /// `root_offset % component_size` of discovery order.
    pub root_offset: usize,
}

impl Default for SumProductOptions {
    fn default() -> Self {
        Self { normalize_messages: true, root_offset: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SumProductRun {
    pub marginals: MarginalSet,
    pub messages: Vec<Message>,
}

pub fn sum_product(g: &FactorGraph, evidence: &Evidence) -> Result<MarginalSet, FgError> {
    sum_product_with(g, evidence, SumProductOptions::default()).map(|r| r.marginals)
}

/// Two-pass message passing: leaves to root, then root to leaves.
pub fn sum_product_with(
    g: &FactorGraph,
    evidence: &Evidence,
    opts: SumProductOptions,
) -> Result<SumProductRun, FgError> {
    let clamp = g.evidence_vector(evidence)?;
    if !g.is_forest() {
        return Err(FgError::GraphHasCycle);
    }
    let tables = g.clamped_tables(&clamp);
    let nv = g.num_variables();
    let local = |v: usize| match clamp[v] {
        Some(0) => [1.0, 0.0],
        Some(_) => [0.0, 1.0],
        None => [1.0, 1.0],
    };
    let mut msgs: HashMap<(usize, usize), [f64; 2]> = HashMap::new();
    let mut log = Vec::new();

    let mut send = |u: usize, to: usize, msgs: &mut HashMap<(usize, usize), [f64; 2]>| -> Result<(), FgError> {
        let mut m = if u < nv {
            let mut m = local(u);
            for n in g.node_neighbours(u).filter(|&n| n != to) {
                let inc = msgs[&(n, u)];
                m[0] *= inc[0];
                m[1] *= inc[1];
            }
            m
        } else {
            let f = &g.factors[u - nv];
            let target = f.scope.iter().position(|&v| v == to).expect("adjacent");
            let mut m = [0.0, 0.0];
            for (idx, &val) in tables[u - nv].iter().enumerate() {
                if val == 0.0 {
                    continue;
                }
                let mut w = val;
                for (pos, &v) in f.scope.iter().enumerate() {
                    if pos != target {
                        w *= msgs[&(v, u)][f.entry_bit(idx, pos)];
                    }
                }
                m[f.entry_bit(idx, target)] += w;
            }
            m
        };
        if opts.normalize_messages {
            let s = m[0] + m[1];
            if s.is_nan() || s <= 0.0 {
                return Err(FgError::ZeroProbabilityEvidence);
            }
            m = [m[0] / s, m[1] / s];
        }
        msgs.insert((u, to), m);
        log.push(Message { from: u, to, values: m });
        Ok(())
    };

    for comp in g.components() {
        let root = comp[opts.root_offset % comp.len()];
        // BFS from root gives parents and a top-down order.
        let mut order = vec![root];
        let mut parent = HashMap::from([(root, usize::MAX)]);
        let mut i = 0;
        while i < order.len() {
            let u = order[i];
            for n in g.node_neighbours(u) {
                if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(n) {
                    e.insert(u);
                    order.push(n);
                }
            }
            i += 1;
        }
        for &u in order.iter().rev().filter(|&&u| u != root) {
            send(u, parent[&u], &mut msgs)?;
        }
        for &u in &order {
            for n in g.node_neighbours(u).filter(|&n| n != parent[&u]) {
                send(u, n, &mut msgs)?;
            }
        }
    }

    let mut probs = Vec::with_capacity(nv);
    for v in 0..nv {
        let mut b = local(v);
        for f in g.node_neighbours(v) {
            let m = msgs[&(f, v)];
            b[0] *= m[0];
            b[1] *= m[1];
        }
        let z = b[0] + b[1];
        if z.is_nan() || z <= 0.0 || !z.is_finite() {
            return Err(FgError::ZeroProbabilityEvidence);
        }
        probs.push([b[0] / z, b[1] / z]);
    }
    Ok(SumProductRun { marginals: MarginalSet { names: g.names.clone(), probs }, messages: log })
}

/// Exact marginals by summing the full joint; works on any graph shape.
pub fn brute_force_marginals(g: &FactorGraph, evidence: &Evidence) -> Result<MarginalSet, FgError> {
    let n = g.num_variables();
    if n > MAX_BRUTE_FORCE_VARS {
        return Err(FgError::TooManyVariables(n));
    }
    let clamp = g.evidence_vector(evidence)?;
    let mut acc = vec![[0.0f64; 2]; n];
    let mut z = 0.0;
    for k in 0u64..1 << n {
        let bit = |v: usize| ((k >> (n - 1 - v)) & 1) as usize;
        if (0..n).any(|v| clamp[v].is_some_and(|b| b != bit(v))) {
            continue;
        }
        let mut w = 1.0;
        for f in &g.factors {
            let idx = f.scope.iter().fold(0usize, |i, &v| (i << 1) | bit(v));
            w *= f.table[idx];
            if w == 0.0 {
                break;
            }
        }
        if w == 0.0 {
            continue;
        }
        z += w;
        for (v, a) in acc.iter_mut().enumerate() {
            a[bit(v)] += w;
        }
    }
    if z.is_nan() || z <= 0.0 {
        return Err(FgError::ZeroProbabilityEvidence);
    }
    let probs = acc.iter().map(|a| [a[0] / z, a[1] / z]).collect();
    Ok(MarginalSet { names: g.names.clone(), probs })
}

/// Conditional stress probabilities for [`stress_fg_from_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressNetParams {
    /// P(stressed) for teammates without parents.
    pub root_stress: f64,
    /// P(stressed | no parent stressed), unless overridden per teammate.
    pub baseline: f64,
    /// Fraction of the remaining headroom `1 − baseline` realised when at
    /// least one parent is stressed.
    pub transmission: f64,
    #[serde(default)]
    pub baseline_overrides: BTreeMap<usize, f64>,
}

impl StressNetParams {
    fn baseline_for(&self, i: usize) -> f64 {
        self.baseline_overrides.get(&i).copied().unwrap_or(self.baseline)
    }

    fn validate(&self) -> Result<(), FgError> {
        let all = [self.root_stress, self.baseline, self.transmission]
            .into_iter()
            .chain(self.baseline_overrides.values().copied());
        for p in all {
            if !(0.0..=1.0).contains(&p) {
                return Err(FgError::InvalidParams(format!("{p} is not a probability")));
            }
        }
        Ok(())
    }
}

/// Display names: humans `h1, h2, …`, machines `m1, m2, …`, numbered by
/// kind in team order.
pub fn teammate_names(team: &[TeammateId]) -> Vec<String> {
    let (mut h, mut m) = (0, 0);
    team.iter()
        .map(|t| match t.kind {
            TeammateKind::Human => {
                h += 1;
                format!("h{h}")
            }
            TeammateKind::Machine => {
                m += 1;
                format!("m{m}")
            }
        })
        .collect()
}

/// Bayesian network over teammates: humans depend on their contact parents,
/// machines with a response are deterministic in their watched humans.
pub fn stress_fg_from_scenario(
    team: &[TeammateId],
    parents: &BTreeMap<usize, Vec<usize>>,
    responses: &[StressResponse],
    params: &StressNetParams,
) -> Result<FactorGraph, FgError> {
    params.validate()?;
    let n = team.len();
    let names = teammate_names(team);
    let mut pa: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (&c, ps) in parents {
        if c >= n || ps.iter().any(|&p| p >= n || p == c) {
            return Err(FgError::CyclicContactStructure(format!("bad parent list for teammate {c}")));
        }
        pa[c] = ps.clone();
    }
    let mut response_of = BTreeMap::new();
    for r in responses {
        let m = r.machine().index;
        if m >= n || r.watched().iter().any(|&w| w >= n) {
            return Err(FgError::InvalidParams(format!("response of machine {m} leaves the team")));
        }
        if !pa[m].is_empty() {
            return Err(FgError::CyclicContactStructure(format!(
                "machine {} has both contact parents and a stress response",
                names[m]
            )));
        }
        pa[m] = r.watched().iter().copied().collect();
        response_of.insert(m, r);
    }
    topological_order(&pa).map_err(|v| FgError::CyclicContactStructure(format!("cycle through {}", names[v])))?;

    let mut cpts = BTreeMap::new();
    let mut parent_names = BTreeMap::new();
    for i in 0..n {
        let k = pa[i].len();
        let mut table = Vec::with_capacity(2 << k);
        for row in 0..1usize << k {
            let parent_states: Vec<BinaryState> =
                (0..k).map(|p| BinaryState::from_bool((row >> (k - 1 - p)) & 1 == 1)).collect();
            let p1 = if let Some(r) = response_of.get(&i) {
                let mut scene = vec![BinaryState::Unstressed; n];
                for (&w, &s) in pa[i].iter().zip(&parent_states) {
                    scene[w] = s;
                }
                if r.eval(&scene).expect("watched humans in range").is_stressed() {
                    1.0
                } else {
                    0.0
                }
            } else if k == 0 {
                params.root_stress
            } else {
                let b = params.baseline_for(i);
                if parent_states.iter().any(|s| s.is_stressed()) {
                    b + params.transmission * (1.0 - b)
                } else {
                    b
                }
            };
            table.extend([1.0 - p1, p1]);
        }
        cpts.insert(names[i].clone(), table);
        if k > 0 {
            parent_names.insert(names[i].clone(), pa[i].iter().map(|&p| names[p].clone()).collect());
        }
    }
    let g = from_bayesian(&names, &parent_names, &cpts)?;
    if !g.is_forest() {
        return Err(FgError::CyclicContactStructure("factor graph has an undirected cycle".into()));
    }
    Ok(g)
}
