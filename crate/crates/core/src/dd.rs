//! Reduced ordered decision diagrams with 0/1/X terminals.
//!
//! Nodes are hash-consed in a [`Manager`], so two handles are equal exactly
//! when they denote the same ternary function. Tables compile by Shannon
//! expansion over the variable order; unspecified assignments land on the
//! `X` terminal.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU32, Ordering};

use serde::Serialize;
use thiserror::Error;

use crate::logic::{BinaryState, DecisionTable, Expr, TableViolation, Ternary};

static NEXT_MANAGER: AtomicU32 = AtomicU32::new(1);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DdError {
    #[error("table has {got} variables but the manager has {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("variable {index} out of range for assignment of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("node handle belongs to a different manager")]
    MixedManagers,
    #[error("Boolean apply on an operand that reaches the X terminal")]
    DontCareOperand,
    #[error("variable order is not a permutation of 0..{0}")]
    InvalidOrder(usize),
    #[error("decision table rows {0} and {1} conflict")]
    ConflictingRows(usize, usize),
    #[error("cube has {got} literals but the manager has {expected} variables")]
    CubeWidth { expected: usize, got: usize },
}

/// Handle into a [`Manager`]'s node store. The three terminals are shared by
/// every manager.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    mgr: u32,
    idx: u32,
}

impl NodeRef {
    pub const T0: NodeRef = NodeRef { mgr: 0, idx: 0 };
    pub const T1: NodeRef = NodeRef { mgr: 0, idx: 1 };
    pub const TX: NodeRef = NodeRef { mgr: 0, idx: 2 };

    pub fn terminal(t: Ternary) -> Self {
        match t {
            Ternary::Zero => Self::T0,
            Ternary::One => Self::T1,
            Ternary::DontCare => Self::TX,
        }
    }

    pub fn is_terminal(self) -> bool {
        self.mgr == 0
    }

    pub fn terminal_value(self) -> Option<Ternary> {
        match (self.mgr, self.idx) {
            (0, 0) => Some(Ternary::Zero),
            (0, 1) => Some(Ternary::One),
            (0, 2) => Some(Ternary::DontCare),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DdNode {
    pub var: usize,
    pub low: NodeRef,
    pub high: NodeRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoolOp {
    And,
    Or,
    Xor,
}

impl BoolOp {
    fn eval(self, a: bool, b: bool) -> bool {
        match self {
            BoolOp::And => a & b,
            BoolOp::Or => a | b,
            BoolOp::Xor => a ^ b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum CacheOp {
    Bool(BoolOp),
    // (on-set, dc-set) → 1 / X / 0
    Mask,
}

/// One position of a path cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Literal {
    Zero,
    One,
    Free,
}

impl Literal {
    pub fn symbol(self) -> char {
        match self {
            Literal::Zero => '0',
            Literal::One => '1',
            Literal::Free => '-',
        }
    }

    pub fn admits(self, s: BinaryState) -> bool {
        match self {
            Literal::Free => true,
            Literal::Zero => !s.is_stressed(),
            Literal::One => s.is_stressed(),
        }
    }
}

/// A root-to-terminal path; `literals` is indexed by variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PathCube {
    pub literals: Vec<Literal>,
    pub terminal: Ternary,
}

impl PathCube {
    pub fn pattern(&self) -> String {
        self.literals.iter().map(|l| l.symbol()).collect()
    }

    pub fn contains(&self, a: &[BinaryState]) -> bool {
        self.literals.iter().zip(a).all(|(l, s)| l.admits(*s))
    }

    pub fn size(&self) -> u128 {
        1u128 << self.literals.iter().filter(|l| **l == Literal::Free).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DdCount {
    pub internal_nodes: usize,
    pub paths: u128,
    pub sat_assignments_one: u128,
}

/// Node store, uniqueness index and operation cache for one variable order.
#[derive(Debug)]
pub struct Manager {
    id: u32,
    order: Vec<usize>,
    level: Vec<usize>,
    nodes: Vec<DdNode>,
    unique: HashMap<DdNode, NodeRef>,
    cache: HashMap<(CacheOp, NodeRef, NodeRef), NodeRef>,
}

impl Manager {
    /// Manager over `num_vars` variables in index order.
    pub fn new(num_vars: usize) -> Self {
        Self::with_order((0..num_vars).collect()).expect("identity order")
    }

    /// `order[level]` is the variable tested at that level.
    pub fn with_order(order: Vec<usize>) -> Result<Self, DdError> {
        let n = order.len();
        let mut level = vec![usize::MAX; n];
        for (l, &v) in order.iter().enumerate() {
            if v >= n || level[v] != usize::MAX {
                return Err(DdError::InvalidOrder(n));
            }
            level[v] = l;
        }
        Ok(Self {
            id: NEXT_MANAGER.fetch_add(1, Ordering::Relaxed),
            order,
            level,
            nodes: Vec::new(),
            unique: HashMap::new(),
            cache: HashMap::new(),
        })
    }

    pub fn num_vars(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Number of internal nodes ever created in this manager.
    pub fn store_size(&self) -> usize {
        self.nodes.len()
    }

    fn check(&self, r: NodeRef) -> Result<(), DdError> {
        if r.mgr == 0 || (r.mgr == self.id && (r.idx as usize) < self.nodes.len()) {
            Ok(())
        } else {
            Err(DdError::MixedManagers)
        }
    }

    /// The internal node behind `r`, or `None` for terminals.
    pub fn node(&self, r: NodeRef) -> Option<DdNode> {
        if r.is_terminal() || r.mgr != self.id {
            None
        } else {
            self.nodes.get(r.idx as usize).copied()
        }
    }

    fn get(&self, r: NodeRef) -> DdNode {
        self.nodes[r.idx as usize]
    }

    fn level_of(&self, r: NodeRef) -> usize {
        if r.is_terminal() {
            self.order.len()
        } else {
            self.level[self.get(r).var]
        }
    }

    /// Hash-consing constructor; applies both reduction rules.
    fn mk(&mut self, var: usize, low: NodeRef, high: NodeRef) -> NodeRef {
        if low == high {
            return low;
        }
        let key = DdNode { var, low, high };
        if let Some(&r) = self.unique.get(&key) {
            return r;
        }
        let r = NodeRef { mgr: self.id, idx: self.nodes.len() as u32 };
        self.nodes.push(key);
        self.unique.insert(key, r);
        r
    }

    /// Projection function of variable `v`.
    pub fn var(&mut self, v: usize) -> Result<NodeRef, DdError> {
        if v >= self.num_vars() {
            return Err(DdError::IndexOutOfRange { index: v, len: self.num_vars() });
        }
        Ok(self.mk(v, NodeRef::T0, NodeRef::T1))
    }

    /// Conjunction of literals leading to `leaf`; other assignments go to T0.
    pub fn cube(&mut self, literals: &[Literal], leaf: NodeRef) -> Result<NodeRef, DdError> {
        if literals.len() != self.num_vars() {
            return Err(DdError::CubeWidth { expected: self.num_vars(), got: literals.len() });
        }
        self.check(leaf)?;
        let mut r = leaf;
        for l in (0..self.num_vars()).rev() {
            let v = self.order[l];
            r = match literals[v] {
                Literal::Free => r,
                Literal::One => self.mk(v, NodeRef::T0, r),
                Literal::Zero => self.mk(v, r, NodeRef::T0),
            };
        }
        Ok(r)
    }

    pub fn build_from_table(&mut self, t: &DecisionTable) -> Result<NodeRef, DdError> {
        if t.n != self.num_vars() {
            return Err(DdError::WidthMismatch { expected: self.num_vars(), got: t.n });
        }
        for v in t.validate() {
            match v {
                TableViolation::WidthMismatch { width, .. } => {
                    return Err(DdError::WidthMismatch { expected: t.n, got: width })
                }
                TableViolation::ConflictingRows(a, b) => return Err(DdError::ConflictingRows(a, b)),
                TableViolation::TooManyRows { .. } => {}
            }
        }
        let mut rows: Vec<usize> = (0..t.rows.len()).collect();
        Ok(self.build_rows(t, 0, &mut rows))
    }

    fn build_rows(&mut self, t: &DecisionTable, level: usize, rows: &mut [usize]) -> NodeRef {
        let Some(&first) = rows.first() else {
            return NodeRef::TX;
        };
        if level == self.num_vars() {
            return NodeRef::terminal(t.rows[first].unit_state);
        }
        let var = self.order[level];
        // partition: zeros first
        let mut split = 0;
        for i in 0..rows.len() {
            if !t.rows[rows[i]].assignment[var].is_stressed() {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (lo_rows, hi_rows) = rows.split_at_mut(split);
        let low = self.build_rows(t, level + 1, lo_rows);
        let high = self.build_rows(t, level + 1, hi_rows);
        self.mk(var, low, high)
    }

    /// One root per table, all sharing this manager's store.
    pub fn build_multi_output(&mut self, tables: &[DecisionTable]) -> Result<Vec<NodeRef>, DdError> {
        tables.iter().map(|t| self.build_from_table(t)).collect()
    }

    pub fn build_from_expr(&mut self, e: &Expr) -> Result<NodeRef, DdError> {
        Ok(match e {
            Expr::Var(i) => self.var(*i)?,
            Expr::Const(s) => NodeRef::terminal((*s).into()),
            Expr::Not(x) => {
                let x = self.build_from_expr(x)?;
                self.not(x)?
            }
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Xor(a, b) => {
                let op = match e {
                    Expr::And(..) => BoolOp::And,
                    Expr::Or(..) => BoolOp::Or,
                    _ => BoolOp::Xor,
                };
                let a = self.build_from_expr(a)?;
                let b = self.build_from_expr(b)?;
                self.apply(a, b, op)?
            }
        })
    }

    pub fn evaluate(&self, node: NodeRef, a: &[BinaryState]) -> Result<Ternary, DdError> {
        self.check(node)?;
        let mut r = node;
        loop {
            if let Some(t) = r.terminal_value() {
                return Ok(t);
            }
            let n = self.get(r);
            let s = a.get(n.var).ok_or(DdError::IndexOutOfRange { index: n.var, len: a.len() })?;
            r = if s.is_stressed() { n.high } else { n.low };
        }
    }

    /// True when some path from `node` ends in the X terminal.
    pub fn reaches_dont_care(&self, node: NodeRef) -> bool {
        let mut seen = HashSet::new();
        let mut stack = vec![node];
        while let Some(r) = stack.pop() {
            if r == NodeRef::TX {
                return true;
            }
            if r.is_terminal() || !seen.insert(r) {
                continue;
            }
            let n = self.get(r);
            stack.push(n.low);
            stack.push(n.high);
        }
        false
    }

    pub fn apply(&mut self, f: NodeRef, g: NodeRef, op: BoolOp) -> Result<NodeRef, DdError> {
        self.check(f)?;
        self.check(g)?;
        if self.reaches_dont_care(f) || self.reaches_dont_care(g) {
            return Err(DdError::DontCareOperand);
        }
        Ok(self.apply_rec(CacheOp::Bool(op), f, g))
    }

    pub fn not(&mut self, f: NodeRef) -> Result<NodeRef, DdError> {
        self.apply(f, NodeRef::T1, BoolOp::Xor)
    }

    /// Ternary function that is 1 on `on`, X on `dc \ on` and 0 elsewhere.
    pub fn with_dont_cares(&mut self, on: NodeRef, dc: NodeRef) -> Result<NodeRef, DdError> {
        self.check(on)?;
        self.check(dc)?;
        if self.reaches_dont_care(on) || self.reaches_dont_care(dc) {
            return Err(DdError::DontCareOperand);
        }
        Ok(self.apply_rec(CacheOp::Mask, on, dc))
    }

    fn apply_rec(&mut self, op: CacheOp, f: NodeRef, g: NodeRef) -> NodeRef {
        if let (Some(a), Some(b)) = (f.terminal_value(), g.terminal_value()) {
            let a = a == Ternary::One;
            let b = b == Ternary::One;
            return match op {
                CacheOp::Bool(op) => NodeRef::terminal(BinaryState::from_bool(op.eval(a, b)).into()),
                CacheOp::Mask if a => NodeRef::T1,
                CacheOp::Mask if b => NodeRef::TX,
                CacheOp::Mask => NodeRef::T0,
            };
        }
        match op {
            CacheOp::Bool(BoolOp::And) if f == NodeRef::T0 || g == NodeRef::T0 => return NodeRef::T0,
            CacheOp::Bool(BoolOp::And) if f == NodeRef::T1 => return g,
            CacheOp::Bool(BoolOp::And) if g == NodeRef::T1 || f == g => return f,
            CacheOp::Bool(BoolOp::Or) if f == NodeRef::T1 || g == NodeRef::T1 => return NodeRef::T1,
            CacheOp::Bool(BoolOp::Or) if f == NodeRef::T0 => return g,
            CacheOp::Bool(BoolOp::Or) if g == NodeRef::T0 || f == g => return f,
            CacheOp::Bool(BoolOp::Xor) if f == g => return NodeRef::T0,
            CacheOp::Bool(BoolOp::Xor) if f == NodeRef::T0 => return g,
            CacheOp::Bool(BoolOp::Xor) if g == NodeRef::T0 => return f,
            CacheOp::Mask if f == NodeRef::T1 => return NodeRef::T1,
            _ => {}
        }
        let key = match op {
            CacheOp::Bool(_) if g < f => (op, g, f),
            _ => (op, f, g),
        };
        if let Some(&r) = self.cache.get(&key) {
            return r;
        }
        let (lf, lg) = (self.level_of(f), self.level_of(g));
        let top = lf.min(lg);
        let var = self.order[top];
        let (f0, f1) = if lf == top {
            let n = self.get(f);
            (n.low, n.high)
        } else {
            (f, f)
        };
        let (g0, g1) = if lg == top {
            let n = self.get(g);
            (n.low, n.high)
        } else {
            (g, g)
        };
        let low = self.apply_rec(op, f0, g0);
        let high = self.apply_rec(op, f1, g1);
        let r = self.mk(var, low, high);
        self.cache.insert(key, r);
        r
    }

    /// Every root-to-terminal path as a cube over all variables.
    pub fn enumerate_paths(&self, node: NodeRef) -> Result<Vec<PathCube>, DdError> {
        self.check(node)?;
        let mut out = Vec::new();
        let mut lits = vec![Literal::Free; self.num_vars()];
        self.paths_rec(node, &mut lits, &mut out);
        Ok(out)
    }

    fn paths_rec(&self, r: NodeRef, lits: &mut Vec<Literal>, out: &mut Vec<PathCube>) {
        if let Some(t) = r.terminal_value() {
            out.push(PathCube { literals: lits.clone(), terminal: t });
            return;
        }
        let n = self.get(r);
        lits[n.var] = Literal::Zero;
        self.paths_rec(n.low, lits, out);
        lits[n.var] = Literal::One;
        self.paths_rec(n.high, lits, out);
        lits[n.var] = Literal::Free;
    }

    fn reachable(&self, roots: &[NodeRef]) -> Vec<NodeRef> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut stack: Vec<NodeRef> = roots.to_vec();
        while let Some(r) = stack.pop() {
            if r.is_terminal() || !seen.insert(r) {
                continue;
            }
            out.push(r);
            let n = self.get(r);
            stack.push(n.low);
            stack.push(n.high);
        }
        out
    }

    /// Internal nodes reachable from any of `roots`, shared nodes counted once.
    pub fn shared_size(&self, roots: &[NodeRef]) -> Result<usize, DdError> {
        for &r in roots {
            self.check(r)?;
        }
        Ok(self.reachable(roots).len())
    }

    /// Number of full assignments evaluating to `target`.
    pub fn count_assignments(&self, node: NodeRef, target: Ternary) -> Result<u128, DdError> {
        self.check(node)?;
        let mut memo = HashMap::new();
        let below = self.sat_rec(node, target, &mut memo);
        Ok(below << self.level_of(node))
    }

    // Assignments of the variables at levels >= level(r) reaching `target`.
    fn sat_rec(&self, r: NodeRef, target: Ternary, memo: &mut HashMap<NodeRef, u128>) -> u128 {
        if let Some(t) = r.terminal_value() {
            return (t == target) as u128;
        }
        if let Some(&c) = memo.get(&r) {
            return c;
        }
        let n = self.get(r);
        let l = self.level[n.var];
        let lo = self.sat_rec(n.low, target, memo) << (self.level_of(n.low) - l - 1);
        let hi = self.sat_rec(n.high, target, memo) << (self.level_of(n.high) - l - 1);
        memo.insert(r, lo + hi);
        lo + hi
    }

    pub fn count(&self, node: NodeRef) -> Result<DdCount, DdError> {
        self.check(node)?;
        fn paths(m: &Manager, r: NodeRef, memo: &mut HashMap<NodeRef, u128>) -> u128 {
            if r.is_terminal() {
                return 1;
            }
            if let Some(&c) = memo.get(&r) {
                return c;
            }
            let n = m.get(r);
            let c = paths(m, n.low, memo) + paths(m, n.high, memo);
            memo.insert(r, c);
            c
        }
        Ok(DdCount {
            internal_nodes: self.reachable(&[node]).len(),
            paths: paths(self, node, &mut HashMap::new()),
            sat_assignments_one: self.count_assignments(node, Ternary::One)?,
        })
    }

    /// Checks ordering, redundancy and uniqueness over everything reachable.
    pub fn is_reduced(&self, roots: &[NodeRef]) -> bool {
        let nodes = self.reachable(roots);
        let mut seen = HashSet::new();
        nodes.iter().all(|&r| {
            let n = self.get(r);
            let l = self.level[n.var];
            n.low != n.high && self.level_of(n.low) > l && self.level_of(n.high) > l && seen.insert(n)
        })
    }

    /// Graphviz rendering. Solid edges are 1-edges, dashed are 0-edges.
    pub fn to_dot(&self, roots: &[(String, NodeRef)], var_names: &[String]) -> Result<String, DdError> {
        for (_, r) in roots {
            self.check(*r)?;
        }
        let refs: Vec<NodeRef> = roots.iter().map(|(_, r)| *r).collect();
        let mut nodes = self.reachable(&refs);
        nodes.sort();
        let name = |v: usize| var_names.get(v).cloned().unwrap_or_else(|| format!("x{v}"));
        let id = |r: NodeRef| match r.terminal_value() {
            Some(t) => format!("t{}", t.symbol()),
            None => format!("n{}", r.idx),
        };
        let mut out = String::from("digraph dd {\n");
        for t in [Ternary::Zero, Ternary::One, Ternary::DontCare] {
            let _ = writeln!(out, "  t{0} [shape=box,label=\"{0}\"];", t.symbol());
        }
        for (label, r) in roots {
            let _ = writeln!(out, "  \"root_{label}\" [shape=plaintext,label=\"{label}\"];");
            let _ = writeln!(out, "  \"root_{label}\" -> {};", id(*r));
        }
        for r in nodes {
            let n = self.get(r);
            let _ = writeln!(out, "  {} [shape=circle,label=\"{}\"];", id(r), name(n.var));
            let _ = writeln!(out, "  {} -> {} [style=dashed];", id(r), id(n.low));
            let _ = writeln!(out, "  {} -> {} [style=solid];", id(r), id(n.high));
        }
        out.push_str("}\n");
        Ok(out)
    }
}
