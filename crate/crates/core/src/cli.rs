//! `stresskit` command line.
//!
//! Exit codes: 0 success, 1 input parse error, 2 semantic or usage error,
//! 3 internal limit exceeded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::dd::{DdError, Manager, NodeRef};
use crate::fg::{self, BayesModel, Evidence, FgError};
use crate::logic::{BinaryState, DecisionTable, LogicError, Ternary};
use crate::pla::{self, parse_pla, PlaError};
use crate::scenario::file::{ScenarioFile, ScenarioFileError};
use crate::scenario::{
    estimate_failure, failure_probability_exact, replay_logged, run_mission, EventLog, ScenarioError,
};

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_STEPS: u64 = 10;
pub const DEFAULT_TRIALS: u64 = 10_000;

#[derive(Debug, Parser)]
#[command(name = "stresskit", version, about = "Stress propagation in human-machine teams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Print progress notes on stderr.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
    Dot,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a decision table or PLA file into a decision diagram.
    Compile {
        input: PathBuf,
        /// Also write the diagram in DOT form.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Benchmark report for one or more PLA files.
    Bench {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Run one mission (or replay the scenario's timeline) and print the event log.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Exact marginals of a tree-shaped Bayesian model.
    Infer {
        model: PathBuf,
        /// Observed variable, as `name=0` or `name=1`.
        #[arg(long, value_parser = parse_evidence)]
        evidence: Vec<(String, BinaryState)>,
    },
    /// Monte Carlo estimate of the mission failure probability.
    Mc {
        scenario: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TRIALS, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long)]
        steps: Option<u64>,
        /// Also compute the exact probability by enumeration.
        #[arg(long)]
        exact: bool,
    },
}

fn parse_evidence(s: &str) -> Result<(String, BinaryState), String> {
    let (name, v) = s.split_once('=').ok_or_else(|| format!("`{s}` is not of the form var=0|1"))?;
    let state = match v.trim() {
        "0" => BinaryState::Unstressed,
        "1" => BinaryState::Stressed,
        other => return Err(format!("evidence value `{other}` must be 0 or 1")),
    };
    Ok((name.trim().to_string(), state))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Limit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Limit(_) => 3,
        }
    }
}

fn at(path: &Path, e: impl std::fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Parse(at(path, e)))
}

fn logic_err(path: &Path, e: LogicError) -> CliError {
    match e {
        LogicError::Parse { .. } => CliError::Parse(at(path, e)),
        LogicError::TooManyVariables { .. } => CliError::Limit(at(path, e)),
        _ => CliError::Invalid(at(path, e)),
    }
}

fn pla_err(path: &Path, e: PlaError) -> CliError {
    match e {
        PlaError::TooManyVariables { .. } => CliError::Limit(at(path, e)),
        PlaError::Dd(_) => CliError::Invalid(at(path, e)),
        _ => CliError::Parse(at(path, e)),
    }
}

fn dd_err(path: &Path, e: DdError) -> CliError {
    CliError::Invalid(at(path, e))
}

fn fg_err(path: &Path, e: FgError) -> CliError {
    match e {
        FgError::TooManyVariables(_) => CliError::Limit(at(path, e)),
        _ => CliError::Invalid(at(path, e)),
    }
}

fn scenario_err(path: &Path, e: ScenarioError) -> CliError {
    match e {
        ScenarioError::TooLarge(_) => CliError::Limit(at(path, e)),
        _ => CliError::Invalid(at(path, e)),
    }
}

fn file_err(e: ScenarioFileError) -> CliError {
    let msg = e.to_string();
    if e.is_parse() {
        CliError::Parse(msg)
    } else if e.is_limit() {
        CliError::Limit(msg)
    } else {
        CliError::Invalid(msg)
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable output");
    s.push('\n');
    s
}

fn unsupported(cmd: &str, f: Format) -> CliError {
    CliError::Invalid(format!("{cmd} does not support --format {}", f.to_possible_value().unwrap().get_name()))
}

fn is_pla(path: &Path, text: &str) -> bool {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pla")) {
        return true;
    }
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .find(|l| !l.is_empty())
        .is_some_and(|l| l.starts_with('.'))
}

fn var_names(n: usize, labels: Option<&Vec<String>>) -> Vec<String> {
    match labels {
        Some(l) if l.len() == n => l.clone(),
        _ => (1..=n).map(|i| format!("x{i}")).collect(),
    }
}

#[derive(Serialize)]
struct PathRow {
    cube: String,
    terminal: char,
}

#[derive(Serialize)]
struct TableStats {
    inputs: usize,
    nodes: usize,
    paths: u128,
    sat_one: u128,
    sat_zero: u128,
    sat_dont_care: u128,
    path_cubes: Vec<PathRow>,
}

fn compile_table(path: &Path, text: &str, format: Format, dot: &mut Option<String>) -> Result<String, CliError> {
    let t = DecisionTable::parse(text).map_err(|e| logic_err(path, e))?;
    let violations = t.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(CliError::Invalid(at(path, list.join("; "))));
    }
    let mut mgr = Manager::new(t.n);
    let root = mgr.build_from_table(&t).map_err(|e| dd_err(path, e))?;
    let count = mgr.count(root).map_err(|e| dd_err(path, e))?;
    let sat = |v| mgr.count_assignments(root, v).map_err(|e| dd_err(path, e));
    let stats = TableStats {
        inputs: t.n,
        nodes: count.internal_nodes,
        paths: count.paths,
        sat_one: count.sat_assignments_one,
        sat_zero: sat(Ternary::Zero)?,
        sat_dont_care: sat(Ternary::DontCare)?,
        path_cubes: mgr
            .enumerate_paths(root)
            .map_err(|e| dd_err(path, e))?
            .iter()
            .map(|p| PathRow { cube: p.pattern(), terminal: p.terminal.symbol() })
            .collect(),
    };
    let names = var_names(t.n, None);
    let render_dot = || mgr.to_dot(&[("f".to_string(), root)], &names).map_err(|e| dd_err(path, e));
    if dot.is_some() {
        *dot = Some(render_dot()?);
    }
    Ok(match format {
        Format::Json => json(&stats),
        Format::Dot => render_dot()?,
        Format::Csv => {
            let mut s = String::from("cube,terminal\n");
            for p in &stats.path_cubes {
                let _ = writeln!(s, "{},{}", p.cube, p.terminal);
            }
            s
        }
        Format::Table => {
            let mut s = format!(
                "inputs={} nodes={} paths={} sat1={} sat0={} satX={}\n",
                stats.inputs, stats.nodes, stats.paths, stats.sat_one, stats.sat_zero, stats.sat_dont_care
            );
            for (i, p) in stats.path_cubes.iter().enumerate() {
                let _ = writeln!(s, "path {}: {} -> {}", i + 1, p.cube, p.terminal);
            }
            s
        }
    })
}

fn pla_benchmark(path: &Path, text: &str) -> Result<(pla::PlaFile, Manager, pla::TeamBenchmark), CliError> {
    let p = parse_pla(text).map_err(|e| pla_err(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut mgr = Manager::new(p.num_inputs);
    let b = pla::to_dd_benchmark(&name, &p, &mut mgr).map_err(|e| pla_err(path, e))?;
    Ok((p, mgr, b))
}

fn pla_dot(path: &Path, p: &pla::PlaFile, mgr: &Manager, roots: &[NodeRef]) -> Result<String, CliError> {
    let outs = var_names(p.num_outputs, p.output_labels.as_ref());
    let named: Vec<(String, NodeRef)> = outs.into_iter().zip(roots.iter().copied()).collect();
    mgr.to_dot(&named, &var_names(p.num_inputs, p.input_labels.as_ref())).map_err(|e| dd_err(path, e))
}

fn reports_out(reports: &[pla::BenchmarkReport], format: Format) -> Result<String, CliError> {
    Ok(match format {
        Format::Json => json(&reports),
        Format::Table => pla::report_table(reports),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in reports {
                w.serialize(r).map_err(|e| CliError::Invalid(e.to_string()))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| CliError::Invalid(e.to_string()))?).expect("csv is utf-8")
        }
        Format::Dot => return Err(unsupported("bench", format)),
    })
}

fn compile(input: &Path, format: Format, dot_path: Option<&Path>, verbose: bool) -> Result<String, CliError> {
    let text = read(input)?;
    let mut dot = dot_path.map(|_| String::new());
    let out = if is_pla(input, &text) {
        let (p, mgr, b) = pla_benchmark(input, &text)?;
        if verbose {
            for w in &p.warnings {
                eprintln!("{}: warning: {w}", input.display());
            }
        }
        if dot.is_some() {
            dot = Some(pla_dot(input, &p, &mgr, &b.roots)?);
        }
        match format {
            Format::Dot => pla_dot(input, &p, &mgr, &b.roots)?,
            f => reports_out(&[pla::benchmark_report(&b)], f)?,
        }
    } else {
        compile_table(input, &text, format, &mut dot)?
    };
    if let (Some(p), Some(d)) = (dot_path, dot) {
        std::fs::write(p, d).map_err(|e| CliError::Invalid(at(p, e)))?;
    }
    Ok(out)
}

fn bench(inputs: &[PathBuf], format: Format) -> Result<String, CliError> {
    let mut reports = Vec::with_capacity(inputs.len());
    for input in inputs {
        let (_, _, b) = pla_benchmark(input, &read(input)?)?;
        reports.push(pla::benchmark_report(&b));
    }
    reports_out(&reports, format)
}

fn log_out(log: &EventLog, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => Ok(log.to_jsonl()),
        Format::Csv => Ok(log.to_csv()),
        Format::Table => Ok(log.to_csv().replace(',', "\t")),
        Format::Dot => Err(unsupported("simulate", format)),
    }
}

fn simulate(path: &Path, steps: Option<u64>, seed: u64, format: Format) -> Result<String, CliError> {
    let f = ScenarioFile::load(path).map_err(file_err)?;
    let log = match &f.timeline {
        Some(timeline) => {
            let keep = steps.map_or(timeline.len(), |s| timeline.len().min(s as usize + 1));
            replay_logged(&f.scenario, &f.policy, &timeline[..keep])
        }
        None => {
            let steps = steps.or(f.steps).unwrap_or(DEFAULT_STEPS);
            run_mission(&f.scenario, &f.policy, &f.initial, steps, seed)
        }
    }
    .map_err(|e| scenario_err(path, e))?;
    log_out(&log, format)
}

fn infer(path: &Path, evidence: &[(String, BinaryState)], format: Format) -> Result<String, CliError> {
    let model: BayesModel = serde_json::from_str(&read(path)?).map_err(|e| CliError::Parse(at(path, e)))?;
    let g = model.to_factor_graph().map_err(|e| fg_err(path, e))?;
    let ev: Evidence = evidence.iter().cloned().collect();
    let m = fg::sum_product(&g, &ev).map_err(|e| fg_err(path, e))?;
    Ok(match format {
        Format::Json => json(&m.to_json()),
        Format::Csv | Format::Table => {
            let sep = if format == Format::Csv { "," } else { "\t" };
            let mut s = ["var", "p0", "p1"].join(sep) + "\n";
            for (n, p) in m.iter() {
                let _ = writeln!(s, "{n}{sep}{}{sep}{}", p[0], p[1]);
            }
            s
        }
        Format::Dot => return Err(unsupported("infer", format)),
    })
}

#[derive(Serialize)]
struct McOut {
    trials: u64,
    failures: u64,
    steps: u64,
    seed: u64,
    p_fail: f64,
    ci95: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<f64>,
}

fn mc(
    path: &Path,
    trials: u64,
    steps: Option<u64>,
    exact: bool,
    seed: u64,
    format: Format,
) -> Result<String, CliError> {
    let f = ScenarioFile::load(path).map_err(file_err)?;
    let steps = steps.or(f.steps).unwrap_or(DEFAULT_STEPS);
    let e =
        estimate_failure(&f.scenario, &f.policy, &f.initial, steps, trials, seed).map_err(|e| scenario_err(path, e))?;
    let exact = if exact {
        Some(failure_probability_exact(&f.scenario, &f.policy, &f.initial, steps).map_err(|e| scenario_err(path, e))?)
    } else {
        None
    };
    let out = McOut { trials, failures: e.failures, steps, seed, p_fail: e.p_fail, ci95: [e.ci95.0, e.ci95.1], exact };
    Ok(match format {
        Format::Json => json(&out),
        Format::Csv | Format::Table => {
            let sep = if format == Format::Csv { "," } else { "\t" };
            let mut s =
                ["trials", "failures", "steps", "seed", "p_fail", "ci95_lo", "ci95_hi", "exact"].join(sep) + "\n";
            let ex = out.exact.map(|v| v.to_string()).unwrap_or_default();
            let cells = [
                out.trials.to_string(),
                out.failures.to_string(),
                out.steps.to_string(),
                out.seed.to_string(),
                out.p_fail.to_string(),
                out.ci95[0].to_string(),
                out.ci95[1].to_string(),
                ex,
            ];
            s += &cells.join(sep);
            s.push('\n');
            s
        }
        Format::Dot => return Err(unsupported("mc", format)),
    })
}

/// Runs a parsed command and returns what it would print.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let verbose = cli.verbose > 0;
    match &cli.command {
        Command::Compile { input, dot } => compile(input, cli.format.unwrap_or(Format::Table), dot.as_deref(), verbose),
        Command::Bench { inputs } => bench(inputs, cli.format.unwrap_or(Format::Table)),
        Command::Simulate { scenario, steps } => {
            simulate(scenario, *steps, cli.seed, cli.format.unwrap_or(Format::Json))
        }
        Command::Infer { model, evidence } => infer(model, evidence, cli.format.unwrap_or(Format::Json)),
        Command::Mc { scenario, trials, steps, exact } => {
            if verbose {
                eprintln!("running {trials} trials with seed {}", cli.seed);
            }
            mc(scenario, *trials, *steps, *exact, cli.seed, cli.format.unwrap_or(Format::Json))
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let out = match execute(&cli) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let written = match &cli.output {
        Some(p) => std::fs::write(p, out).map_err(|e| at(p, e)),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(out.as_bytes()).map_err(|e| e.to_string())
        }
    };
    match written {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("stresskit").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn evidence_syntax() {
        assert_eq!(parse_evidence("c3=1").unwrap(), ("c3".into(), BinaryState::Stressed));
        assert!(parse_evidence("c3").is_err());
        assert!(parse_evidence("c3=2").is_err());
    }

    #[test]
    fn flag_defaults() {
        let c = cli(&["mc", "s.json"]);
        assert_eq!(c.seed, DEFAULT_SEED);
        assert!(matches!(c.command, Command::Mc { trials: DEFAULT_TRIALS, steps: None, exact: false, .. }));
        let e = Cli::try_parse_from(["stresskit", "mc", "s.json", "--trials", "0"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn compile_or_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("or.tbl");
        std::fs::write(&p, "n=2\n00 0\n01 1\n10 1\n11 1\n").unwrap();
        let out = execute(&cli(&["compile", p.to_str().unwrap()])).unwrap();
        assert!(out.starts_with("inputs=2 nodes=2 paths=3 sat1=3"), "{out}");
        assert!(out.contains("path 3: 1- -> 1"));
        let dot = execute(&cli(&["compile", p.to_str().unwrap(), "--format", "dot"])).unwrap();
        assert!(dot.starts_with("digraph"));
    }

    #[test]
    fn compile_errors_classified() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.tbl");
        std::fs::write(&empty, "").unwrap();
        assert_eq!(execute(&cli(&["compile", empty.to_str().unwrap()])).unwrap_err().exit_code(), 1);
        let clash = dir.path().join("clash.tbl");
        std::fs::write(&clash, "n=1\n0 0\n0 1\n").unwrap();
        assert_eq!(execute(&cli(&["compile", clash.to_str().unwrap()])).unwrap_err().exit_code(), 2);
        let missing = dir.path().join("missing.tbl");
        assert_eq!(execute(&cli(&["compile", missing.to_str().unwrap()])).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn pla_detected_by_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tiny.txt");
        std::fs::write(&p, ".i 3\n.o 2\n1-- 10\n-11 01\n.e\n").unwrap();
        let out = execute(&cli(&["compile", p.to_str().unwrap(), "--format", "json"])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v[0]["path"], 16);
        assert_eq!(v[0]["name"], "tiny");
    }
}
