//! Teammate states, state expressions and decision tables.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest teammate count that may be expanded into an explicit table.
pub const MAX_TABLE_VARS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicError {
    #[error("variable index {index} out of range for assignment of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{requested} variables exceed the table expansion limit of {MAX_TABLE_VARS}")]
    TooManyVariables { requested: usize },
    #[error("expression uses variable {index} but the table has only {n} columns")]
    NarrowTable { index: usize, n: usize },
    #[error("invalid stress response: {0}")]
    InvalidResponse(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeammateKind {
    Human,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TeammateId {
    pub index: usize,
    pub kind: TeammateKind,
}

impl TeammateId {
    pub fn human(index: usize) -> Self {
        Self { index, kind: TeammateKind::Human }
    }

    pub fn machine(index: usize) -> Self {
        Self { index, kind: TeammateKind::Machine }
    }

    pub fn is_human(&self) -> bool {
        self.kind == TeammateKind::Human
    }
}

/// Builds a team from a kind list; indices follow list position.
pub fn team_from_kinds(kinds: &[TeammateKind]) -> Vec<TeammateId> {
    kinds.iter().enumerate().map(|(index, &kind)| TeammateId { index, kind }).collect()
}

/// Stress state of a single teammate, encoded 0/1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum BinaryState {
    #[default]
    Unstressed = 0,
    Stressed = 1,
}

impl BinaryState {
    pub fn from_bool(b: bool) -> Self {
        if b {
            BinaryState::Stressed
        } else {
            BinaryState::Unstressed
        }
    }

    pub fn is_stressed(self) -> bool {
        self == BinaryState::Stressed
    }

    pub fn bit(self) -> u8 {
        self as u8
    }
}

impl From<bool> for BinaryState {
    fn from(b: bool) -> Self {
        Self::from_bool(b)
    }
}

/// Terminal value of a unit-state function: 0, 1 or don't care.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ternary {
    Zero,
    One,
    DontCare,
}

impl Ternary {
    pub fn symbol(self) -> char {
        match self {
            Ternary::Zero => '0',
            Ternary::One => '1',
            Ternary::DontCare => 'X',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '0' => Some(Ternary::Zero),
            '1' => Some(Ternary::One),
            'X' | 'x' => Some(Ternary::DontCare),
            _ => None,
        }
    }
}

impl From<BinaryState> for Ternary {
    fn from(s: BinaryState) -> Self {
        match s {
            BinaryState::Unstressed => Ternary::Zero,
            BinaryState::Stressed => Ternary::One,
        }
    }
}

impl fmt::Display for Ternary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Big-endian assignment of `k`: teammate 0 is the most significant bit.
pub fn assignment_of(k: u64, n: usize) -> Vec<BinaryState> {
    (0..n).map(|i| BinaryState::from_bool((k >> (n - 1 - i)) & 1 == 1)).collect()
}

/// Inverse of [`assignment_of`].
pub fn index_of(a: &[BinaryState]) -> u64 {
    a.iter().fold(0u64, |acc, s| (acc << 1) | s.bit() as u64)
}

pub fn parse_bits(s: &str) -> Option<Vec<BinaryState>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(BinaryState::Unstressed),
            '1' => Some(BinaryState::Stressed),
            _ => None,
        })
        .collect()
}

pub fn format_bits(a: &[BinaryState]) -> String {
    a.iter().map(|s| if s.is_stressed() { '1' } else { '0' }).collect()
}

/// Boolean expression over teammate states.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(usize),
    Const(BinaryState),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Xor(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn constant(b: bool) -> Self {
        Expr::Const(BinaryState::from_bool(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    pub fn and(a: Expr, b: Expr) -> Self {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Self {
        Expr::Or(Box::new(a), Box::new(b))
    }

    pub fn xor(a: Expr, b: Expr) -> Self {
        Expr::Xor(Box::new(a), Box::new(b))
    }

    pub fn nor(a: Expr, b: Expr) -> Self {
        Expr::not(Expr::or(a, b))
    }

    /// One more than the largest variable index, or 0 for closed expressions.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Var(i) => i + 1,
            Expr::Const(_) => 0,
            Expr::Not(e) => e.arity(),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Xor(a, b) => a.arity().max(b.arity()),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) => 0,
            Expr::Not(e) => 1 + e.depth(),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Xor(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn eval(&self, a: &[BinaryState]) -> Result<BinaryState, LogicError> {
        eval_expression(self, a)
    }
}

pub fn eval_expression(expr: &Expr, a: &[BinaryState]) -> Result<BinaryState, LogicError> {
    fn go(e: &Expr, a: &[BinaryState]) -> Result<bool, LogicError> {
        Ok(match e {
            Expr::Var(i) => a.get(*i).ok_or(LogicError::IndexOutOfRange { index: *i, len: a.len() })?.is_stressed(),
            Expr::Const(s) => s.is_stressed(),
            Expr::Not(x) => !go(x, a)?,
            Expr::And(x, y) => go(x, a)? & go(y, a)?,
            Expr::Or(x, y) => go(x, a)? | go(y, a)?,
            Expr::Xor(x, y) => go(x, a)? ^ go(y, a)?,
        })
    }
    go(expr, a).map(BinaryState::from_bool)
}

/// Decision recorded next to a table row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Decision {
    NoAction,
    Action,
    Uncertain,
    MissionFails,
    Custom(String),
}

impl Decision {
    pub fn label(&self) -> &str {
        match self {
            Decision::NoAction => "NoAction",
            Decision::Action => "Action",
            Decision::Uncertain => "Uncertain",
            Decision::MissionFails => "MissionFails",
            Decision::Custom(s) => s,
        }
    }

    /// Default labelling: 0 ⇒ no action, 1 ⇒ mission fails, X ⇒ uncertain.
    pub fn for_unit_state(t: Ternary) -> Self {
        match t {
            Ternary::Zero => Decision::NoAction,
            Ternary::One => Decision::MissionFails,
            Ternary::DontCare => Decision::Uncertain,
        }
    }
}

impl FromStr for Decision {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "NoAction" => Decision::NoAction,
            "Action" => Decision::Action,
            "Uncertain" => Decision::Uncertain,
            "MissionFails" => Decision::MissionFails,
            other => Decision::Custom(other.to_string()),
        })
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRow {
    pub assignment: Vec<BinaryState>,
    pub unit_state: Ternary,
    pub decision: Decision,
}

impl TableRow {
    pub fn new(bits: &str, unit_state: Ternary, decision: Decision) -> Self {
        Self { assignment: parse_bits(bits).expect("row bits must be 0/1"), unit_state, decision }
    }
}

/// Rows of teammate assignments with the unit state and decision they carry.
/// Assignments absent from the table are don't cares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTable {
    pub n: usize,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableViolation {
    WidthMismatch { row: usize, width: usize },
    ConflictingRows(usize, usize),
    TooManyRows { rows: usize },
}

impl fmt::Display for TableViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableViolation::WidthMismatch { row, width } => {
                write!(f, "row {row} has {width} bits")
            }
            TableViolation::ConflictingRows(a, b) => {
                write!(f, "rows {a} and {b} share an assignment with different unit states")
            }
            TableViolation::TooManyRows { rows } => write!(f, "{rows} rows exceed 2^n"),
        }
    }
}

impl DecisionTable {
    pub fn new(n: usize, rows: Vec<TableRow>) -> Self {
        Self { n, rows }
    }

    /// Unit state for `a`, or `DontCare` when no row specifies it.
    pub fn lookup(&self, a: &[BinaryState]) -> Ternary {
        self.rows.iter().find(|r| r.assignment == a).map(|r| r.unit_state).unwrap_or(Ternary::DontCare)
    }

    /// Dense unit-state column of length 2^n (unspecified rows are X).
    pub fn column(&self) -> Result<Vec<Ternary>, LogicError> {
        if self.n > MAX_TABLE_VARS {
            return Err(LogicError::TooManyVariables { requested: self.n });
        }
        let mut col = vec![Ternary::DontCare; 1usize << self.n];
        for r in &self.rows {
            if r.assignment.len() == self.n {
                col[index_of(&r.assignment) as usize] = r.unit_state;
            }
        }
        Ok(col)
    }

    pub fn validate(&self) -> Vec<TableViolation> {
        validate_table(self)
    }

    pub fn parse(text: &str) -> Result<Self, LogicError> {
        let mut n = None;
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if n.is_none() {
                let width = line
                    .strip_prefix("n=")
                    .and_then(|v| v.trim().parse::<usize>().ok())
                    .ok_or(LogicError::Parse { line: line_no, msg: "expected header `n=<count>`".into() })?;
                n = Some(width);
                continue;
            }
            let mut parts = line.splitn(3, char::is_whitespace);
            let bits = parts.next().unwrap_or("");
            let assignment = parse_bits(bits).ok_or_else(|| LogicError::Parse {
                line: line_no,
                msg: format!("assignment `{bits}` must contain only 0 and 1"),
            })?;
            let state = parts.next().unwrap_or("").trim();
            let mut chars = state.chars();
            let unit_state = match (chars.next().and_then(Ternary::from_symbol), chars.next()) {
                (Some(t), None) => t,
                _ => {
                    return Err(LogicError::Parse {
                        line: line_no,
                        msg: format!("unit state `{state}` must be 0, 1 or X"),
                    })
                }
            };
            let label = parts.next().map(str::trim).unwrap_or("");
            let decision = if label.is_empty() { Decision::for_unit_state(unit_state) } else { label.parse().unwrap() };
            rows.push(TableRow { assignment, unit_state, decision });
        }
        let n = n.ok_or(LogicError::Parse { line: 0, msg: "empty decision table".into() })?;
        Ok(Self { n, rows })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for r in &self.rows {
            out.push_str(&format!("{} {} {}\n", format_bits(&r.assignment), r.unit_state, r.decision));
        }
        out
    }
}

pub fn validate_table(t: &DecisionTable) -> Vec<TableViolation> {
    let mut out = Vec::new();
    for (i, r) in t.rows.iter().enumerate() {
        if r.assignment.len() != t.n {
            out.push(TableViolation::WidthMismatch { row: i, width: r.assignment.len() });
        }
    }
    if t.n < 64 && t.rows.len() as u128 > 1u128 << t.n {
        out.push(TableViolation::TooManyRows { rows: t.rows.len() });
    }
    let mut first: HashMap<&[BinaryState], usize> = HashMap::new();
    for (i, r) in t.rows.iter().enumerate() {
        if r.assignment.len() != t.n {
            continue;
        }
        match first.get(r.assignment.as_slice()) {
            Some(&j) if t.rows[j].unit_state != r.unit_state => {
                out.push(TableViolation::ConflictingRows(j, i));
            }
            Some(_) => {}
            None => {
                first.insert(&r.assignment, i);
            }
        }
    }
    out
}

/// Tabulates `expr` over all 2^n assignments in big-endian order.
pub fn expression_to_table(
    expr: &Expr,
    n: usize,
    labeler: impl Fn(Ternary) -> Decision,
) -> Result<DecisionTable, LogicError> {
    if n > MAX_TABLE_VARS {
        return Err(LogicError::TooManyVariables { requested: n });
    }
    if expr.arity() > n {
        return Err(LogicError::NarrowTable { index: expr.arity() - 1, n });
    }
    let rows = (0..1u64 << n)
        .map(|k| {
            let assignment = assignment_of(k, n);
            let unit_state = Ternary::from(eval_expression(expr, &assignment)?);
            Ok(TableRow { assignment, unit_state, decision: labeler(unit_state) })
        })
        .collect::<Result<Vec<_>, LogicError>>()?;
    Ok(DecisionTable { n, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseRule {
    #[serde(alias = "any")]
    AnyWatchedStressed,
    #[serde(alias = "all")]
    AllWatchedStressed,
}

/// Stress response g(m) of a machine watching a set of humans.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StressResponse {
    machine: TeammateId,
    watched: BTreeSet<usize>,
    rule: ResponseRule,
}

impl StressResponse {
    pub fn new(
        machine: TeammateId,
        watched: impl IntoIterator<Item = TeammateId>,
        rule: ResponseRule,
    ) -> Result<Self, LogicError> {
        if machine.kind != TeammateKind::Machine {
            return Err(LogicError::InvalidResponse(format!("teammate {} is not a machine", machine.index)));
        }
        let mut set = BTreeSet::new();
        for w in watched {
            if w.kind != TeammateKind::Human {
                return Err(LogicError::InvalidResponse(format!("watched teammate {} is not human", w.index)));
            }
            set.insert(w.index);
        }
        if set.is_empty() {
            return Err(LogicError::InvalidResponse("watched set is empty".into()));
        }
        Ok(Self { machine, watched: set, rule })
    }

    pub fn machine(&self) -> TeammateId {
        self.machine
    }

    pub fn watched(&self) -> &BTreeSet<usize> {
        &self.watched
    }

    pub fn rule(&self) -> ResponseRule {
        self.rule
    }

    /// Replaces the watched set with a single human.
    pub(crate) fn rewire(&mut self, human: usize) {
        self.watched = BTreeSet::from([human]);
    }

    pub fn eval(&self, a: &[BinaryState]) -> Result<BinaryState, LogicError> {
        eval_response(self, a)
    }
}

pub fn eval_response(r: &StressResponse, a: &[BinaryState]) -> Result<BinaryState, LogicError> {
    let mut states = r
        .watched
        .iter()
        .map(|&i| a.get(i).map(|s| s.is_stressed()).ok_or(LogicError::IndexOutOfRange { index: i, len: a.len() }));
    let hit = match r.rule {
        ResponseRule::AnyWatchedStressed => states.try_fold(false, |acc, s| s.map(|s| acc | s))?,
        ResponseRule::AllWatchedStressed => states.try_fold(true, |acc, s| s.map(|s| acc & s))?,
    };
    Ok(BinaryState::from_bool(hit))
}
