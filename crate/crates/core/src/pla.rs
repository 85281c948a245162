//! Two-level PLA covers read as team-scenario benchmarks.
//!
//! Each input column is a teammate and each output column a scenario. A
//! cube's input pattern is a set of scenes; the output symbol says whether
//! those scenes are failures (`1`), make no claim (`0`) or are don't cares
//! (`-`). Scenes not claimed by any `1` or `-` are zeros (type `fd`).

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::dd::{BoolOp, DdError, Literal, Manager, NodeRef};
use crate::logic::{assignment_of, BinaryState, Decision, DecisionTable, TableRow, Ternary, MAX_TABLE_VARS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlaError {
    #[error("line {line}: cube before .i/.o header")]
    MissingHeader { line: usize },
    #[error("line {line}: cube has {got} symbols, expected {expected}")]
    CubeWidthMismatch { line: usize, expected: usize, got: usize },
    #[error("line {line}: bad symbol {symbol:?} in cube")]
    BadSymbol { line: usize, symbol: char },
    #[error("line {line}: malformed directive {directive}")]
    BadDirective { line: usize, directive: String },
    #[error("line {line}: unsupported cover type {kind}")]
    UnsupportedType { line: usize, kind: String },
    #[error(".p declares {declared} products but {found} cubes were read")]
    ProductCountMismatch { declared: usize, found: usize },
    #[error("{requested} inputs exceed the table expansion limit of {MAX_TABLE_VARS}")]
    TooManyVariables { requested: usize },
    #[error(transparent)]
    Dd(#[from] DdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CubeSymbol {
    Zero,
    One,
    Dash,
}

impl CubeSymbol {
    fn parse(c: char) -> Option<Self> {
        match c {
            '0' => Some(CubeSymbol::Zero),
            '1' => Some(CubeSymbol::One),
            '-' => Some(CubeSymbol::Dash),
            _ => None,
        }
    }

    fn symbol(self) -> char {
        match self {
            CubeSymbol::Zero => '0',
            CubeSymbol::One => '1',
            CubeSymbol::Dash => '-',
        }
    }

    fn literal(self) -> Literal {
        match self {
            CubeSymbol::Zero => Literal::Zero,
            CubeSymbol::One => Literal::One,
            CubeSymbol::Dash => Literal::Free,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cube {
    pub inputs: Vec<CubeSymbol>,
    pub outputs: Vec<CubeSymbol>,
}

impl Cube {
    pub fn covers(&self, a: &[BinaryState]) -> bool {
        self.inputs.iter().zip(a).all(|(c, s)| c.literal().admits(*s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlaFile {
    pub num_inputs: usize,
    pub num_outputs: usize,
    pub num_products: Option<usize>,
    pub input_labels: Option<Vec<String>>,
    pub output_labels: Option<Vec<String>>,
    pub cubes: Vec<Cube>,
    pub warnings: Vec<String>,
}

pub fn parse_pla(text: &str) -> Result<PlaFile, PlaError> {
    let mut inputs = None;
    let mut outputs = None;
    let mut p = PlaFile::default();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('.') {
            let mut words = rest.split_whitespace();
            let name = words.next().unwrap_or("");
            let args: Vec<&str> = words.collect();
            let count = |args: &[&str]| -> Result<usize, PlaError> {
                match args {
                    [v] => v.parse().map_err(|_| PlaError::BadDirective { line: line_no, directive: line.into() }),
                    _ => Err(PlaError::BadDirective { line: line_no, directive: line.into() }),
                }
            };
            match name {
                "i" => inputs = Some(count(&args)?),
                "o" => outputs = Some(count(&args)?),
                "p" => p.num_products = Some(count(&args)?),
                "ilb" => p.input_labels = Some(args.iter().map(|s| s.to_string()).collect()),
                "ob" => p.output_labels = Some(args.iter().map(|s| s.to_string()).collect()),
                "type" => match args.as_slice() {
                    ["fd"] => {}
                    _ => return Err(PlaError::UnsupportedType { line: line_no, kind: args.join(" ") }),
                },
                "e" | "end" => break,
                _ => p.warnings.push(format!("line {line_no}: ignored directive .{name}")),
            }
            continue;
        }
        let (Some(ni), Some(no)) = (inputs, outputs) else {
            return Err(PlaError::MissingHeader { line: line_no });
        };
        let symbols: String = line.split_whitespace().collect();
        if symbols.chars().count() != ni + no {
            return Err(PlaError::CubeWidthMismatch { line: line_no, expected: ni + no, got: symbols.chars().count() });
        }
        let parsed = symbols
            .chars()
            .map(|c| CubeSymbol::parse(c).ok_or(PlaError::BadSymbol { line: line_no, symbol: c }))
            .collect::<Result<Vec<_>, _>>()?;
        let (ins, outs) = parsed.split_at(ni);
        p.cubes.push(Cube { inputs: ins.to_vec(), outputs: outs.to_vec() });
    }

    let (Some(ni), Some(no)) = (inputs, outputs) else {
        return Err(PlaError::MissingHeader { line: text.lines().count().max(1) });
    };
    p.num_inputs = ni;
    p.num_outputs = no;
    if let Some(declared) = p.num_products {
        if declared != p.cubes.len() {
            return Err(PlaError::ProductCountMismatch { declared, found: p.cubes.len() });
        }
    }
    for (kind, labels, want) in [("ilb", &p.input_labels, ni), ("ob", &p.output_labels, no)] {
        if let Some(l) = labels {
            if l.len() != want {
                p.warnings.push(format!(".{kind} lists {} names for {want} columns", l.len()));
            }
        }
    }
    Ok(p)
}

impl PlaFile {
    pub fn to_text(&self) -> String {
        let mut out = format!(".i {}\n.o {}\n", self.num_inputs, self.num_outputs);
        if let Some(l) = &self.input_labels {
            let _ = writeln!(out, ".ilb {}", l.join(" "));
        }
        if let Some(l) = &self.output_labels {
            let _ = writeln!(out, ".ob {}", l.join(" "));
        }
        let _ = writeln!(out, ".p {}", self.cubes.len());
        for c in &self.cubes {
            let ins: String = c.inputs.iter().map(|s| s.symbol()).collect();
            let outs: String = c.outputs.iter().map(|s| s.symbol()).collect();
            let _ = writeln!(out, "{ins} {outs}");
        }
        out.push_str(".e\n");
        out
    }

    /// Direct cover semantics for output `j`, without any diagram.
    pub fn eval_output(&self, j: usize, a: &[BinaryState]) -> Ternary {
        let mut dc = false;
        for c in self.cubes.iter().filter(|c| c.covers(a)) {
            match c.outputs[j] {
                CubeSymbol::One => return Ternary::One,
                CubeSymbol::Dash => dc = true,
                CubeSymbol::Zero => {}
            }
        }
        if dc {
            Ternary::DontCare
        } else {
            Ternary::Zero
        }
    }

    /// Explicit decision table of output `j` over all 2^inputs scenes.
    pub fn output_table(&self, j: usize) -> Result<DecisionTable, PlaError> {
        if self.num_inputs > MAX_TABLE_VARS {
            return Err(PlaError::TooManyVariables { requested: self.num_inputs });
        }
        let rows = (0..1u64 << self.num_inputs)
            .map(|k| {
                let assignment = assignment_of(k, self.num_inputs);
                let unit_state = self.eval_output(j, &assignment);
                TableRow { assignment, unit_state, decision: Decision::for_unit_state(unit_state) }
            })
            .collect();
        Ok(DecisionTable::new(self.num_inputs, rows))
    }

    /// Builds output `j` symbolically; input dashes never get enumerated.
    pub fn output_dd(&self, j: usize, mgr: &mut Manager) -> Result<NodeRef, PlaError> {
        if mgr.num_vars() != self.num_inputs {
            return Err(DdError::WidthMismatch { expected: mgr.num_vars(), got: self.num_inputs }.into());
        }
        let mut on = NodeRef::T0;
        let mut dc = NodeRef::T0;
        for c in &self.cubes {
            let target = match c.outputs[j] {
                CubeSymbol::One => &mut on,
                CubeSymbol::Dash => &mut dc,
                CubeSymbol::Zero => continue,
            };
            let lits: Vec<Literal> = c.inputs.iter().map(|s| s.literal()).collect();
            let cube = mgr.cube(&lits, NodeRef::T1)?;
            *target = mgr.apply(*target, cube, BoolOp::Or)?;
        }
        Ok(mgr.with_dont_cares(on, dc)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BenchmarkStats {
    /// Internal nodes shared across all scenario roots.
    pub dd_internal_nodes: usize,
    /// Sum of root-to-terminal path counts over all roots.
    pub dd_paths: u128,
    /// scenarios × 2^teammates
    pub nominal_paths: u128,
}

#[derive(Debug, Clone)]
pub struct TeamBenchmark {
    pub name: String,
    pub teammates: usize,
    pub scenarios: usize,
    pub roots: Vec<NodeRef>,
    /// Present when the benchmark was expanded into explicit tables.
    pub tables: Option<Vec<DecisionTable>>,
    pub stats: BenchmarkStats,
}

pub fn nominal_paths(scenarios: usize, teammates: usize) -> u128 {
    scenarios as u128 * (1u128 << teammates)
}

fn benchmark(
    name: &str,
    p: &PlaFile,
    mgr: &mut Manager,
    tables: Option<Vec<DecisionTable>>,
) -> Result<TeamBenchmark, PlaError> {
    let roots = (0..p.num_outputs).map(|j| p.output_dd(j, mgr)).collect::<Result<Vec<_>, _>>()?;
    let dd_paths = roots.iter().map(|&r| mgr.count(r).map(|c| c.paths)).sum::<Result<u128, _>>()?;
    Ok(TeamBenchmark {
        name: name.to_string(),
        teammates: p.num_inputs,
        scenarios: p.num_outputs,
        stats: BenchmarkStats {
            dd_internal_nodes: mgr.shared_size(&roots)?,
            dd_paths,
            nominal_paths: nominal_paths(p.num_outputs, p.num_inputs),
        },
        roots,
        tables,
    })
}

/// Full reinterpretation: one decision table and one diagram per scenario.
pub fn to_team_benchmark(name: &str, p: &PlaFile, mgr: &mut Manager) -> Result<TeamBenchmark, PlaError> {
    if p.num_inputs > MAX_TABLE_VARS {
        return Err(PlaError::TooManyVariables { requested: p.num_inputs });
    }
    let tables = (0..p.num_outputs).map(|j| p.output_table(j)).collect::<Result<Vec<_>, _>>()?;
    benchmark(name, p, mgr, Some(tables))
}

/// Diagram-only reinterpretation for covers too wide to tabulate.
pub fn to_dd_benchmark(name: &str, p: &PlaFile, mgr: &mut Manager) -> Result<TeamBenchmark, PlaError> {
    benchmark(name, p, mgr, None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchmarkReport {
    pub name: String,
    pub teammate: usize,
    pub scenario: usize,
    pub node: usize,
    pub node_kind: &'static str,
    pub path: u128,
    pub path_kind: &'static str,
    pub path_formula: String,
    pub dd_paths: u128,
}

pub fn benchmark_report(b: &TeamBenchmark) -> BenchmarkReport {
    BenchmarkReport {
        name: b.name.clone(),
        teammate: b.teammates,
        scenario: b.scenarios,
        node: b.stats.dd_internal_nodes,
        node_kind: "measured",
        path: b.stats.nominal_paths,
        path_kind: "nominal",
        path_formula: format!("{}x2^{}", b.scenarios, b.teammates),
        dd_paths: b.stats.dd_paths,
    }
}

/// Aligned text table with the columns Name, Teammate, Scenario, Node, Path.
pub fn report_table(reports: &[BenchmarkReport]) -> String {
    let header = ["Name", "Teammate", "Scenario", "Node(measured)", "Path(nominal)"];
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.teammate.to_string(),
                r.scenario.to_string(),
                r.node.to_string(),
                format!("{} = {}", r.path_formula, r.path),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for r in &rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}
