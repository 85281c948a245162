//! Acceptance checks, one line per criterion. Runs without the libtest harness.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stresskit::fg::{brute_force_marginals, sum_product, BayesModel, Evidence};
use stresskit::logic::{assignment_of, team_from_kinds, ResponseRule, TableRow};
use stresskit::pla::{benchmark_report, parse_pla, to_dd_benchmark};
use stresskit::scenario::file::ScenarioFile;
use stresskit::scenario::{
    estimate_failure, failure_probability_exact, replay_fixed, replay_logged, ContactSchedule, EventKind,
    MissionFunction, MissionStatus, RobotPolicy, Scenario, StatusMap,
};
use stresskit::sis::{self, mean_stressed_time, recovery_cdf, ContactGraph, SisParams, SisState};
use stresskit::{
    BinaryState, Decision, DecisionTable, Expr, Manager, StressResponse, TeammateId, TeammateKind, Ternary,
};

type Outcome = Result<String, String>;
type Reference = Box<dyn Fn(&[BinaryState]) -> Ternary>;
type Criterion = (&'static str, fn() -> Outcome);

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

fn truth_vector(mgr: &Manager, f: stresskit::NodeRef, n: usize) -> Result<String, String> {
    (0..1u64 << n)
        .map(|k| mgr.evaluate(f, &assignment_of(k, n)).map(|t| t.symbol()).map_err(|e| e.to_string()))
        .collect()
}

fn unit_functions() -> Outcome {
    let start = Instant::now();
    let (h1, h2) = (Expr::var(0), Expr::var(1));
    let cases = [
        ("or", Expr::or(h1.clone(), h2.clone()), "0111"),
        ("xor", Expr::xor(h1.clone(), h2.clone()), "0110"),
        ("and", Expr::and(h1.clone(), h2.clone()), "0001"),
        ("nor", Expr::nor(h1, h2), "1000"),
    ];
    let mut mgr = Manager::new(2);
    let mut got = Vec::new();
    for (name, e, want) in cases {
        let f = mgr.build_from_expr(&e).map_err(|e| e.to_string())?;
        let v = truth_vector(&mgr, f, 2)?;
        ensure(v == want, || format!("{name}: {v} != {want}"))?;
        got.push(v);
    }
    within(start.elapsed(), 1.0)?;
    Ok(got.join(" "))
}

fn or_diagram() -> Outcome {
    let t = DecisionTable::parse(&std::fs::read_to_string(data("or2.tbl")).unwrap()).map_err(|e| e.to_string())?;
    let mut mgr = Manager::new(2);
    let f = mgr.build_from_table(&t).map_err(|e| e.to_string())?;
    let c = mgr.count(f).map_err(|e| e.to_string())?;
    ensure(mgr.is_reduced(&[f]), || "diagram not reduced".into())?;
    ensure(c.internal_nodes == 2 && c.paths == 3, || format!("nodes={} paths={}", c.internal_nodes, c.paths))?;
    let cubes: Vec<String> = mgr
        .enumerate_paths(f)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|p| format!("{}->{}", p.pattern(), p.terminal.symbol()))
        .collect();
    ensure(cubes == ["00->0", "01->1", "1-->1"], || format!("cubes {cubes:?}"))?;
    Ok(format!("nodes=2 paths=3 cubes={}", cubes.join(",")))
}

fn robot_table() -> Outcome {
    let t =
        DecisionTable::parse(&std::fs::read_to_string(data("robot_watch.tbl")).unwrap()).map_err(|e| e.to_string())?;
    ensure(t.validate().is_empty() && t.rows.len() == 8, || "table invalid".into())?;
    let mut mgr = Manager::new(4);
    let f = mgr.build_from_table(&t).map_err(|e| e.to_string())?;
    let (mut exact, mut dc) = (0, 0);
    for k in 0..16 {
        let a = assignment_of(k, 4);
        let got = mgr.evaluate(f, &a).map_err(|e| e.to_string())?;
        match t.rows.iter().find(|r| r.assignment == a) {
            Some(r) => {
                ensure(got == r.unit_state, || format!("row {k}: {got:?} != {:?}", r.unit_state))?;
                exact += 1;
            }
            None => {
                ensure(got == Ternary::DontCare, || format!("unspecified {k} gave {got:?}"))?;
                dc += 1;
            }
        }
    }
    let sat = mgr.count_assignments(f, Ternary::One).map_err(|e| e.to_string())?;
    ensure(exact == 8 && dc == 8 && sat == 4, || format!("exact={exact} dc={dc} sat={sat}"))?;
    Ok(format!("specified={exact} unspecified->X={dc} failed-sat={sat}"))
}

const BENCHMARKS: [(&str, usize, usize, u128); 13] = [
    ("dc1", 4, 7, 7 << 4),
    ("rd53", 5, 3, 3 << 5),
    ("sgr6", 6, 12, 12 << 6),
    ("sqn", 7, 3, 3 << 7),
    ("adr4", 8, 5, 5 << 8),
    ("9sym", 9, 1, 1 << 9),
    ("sym10", 10, 1, 1 << 10),
    ("alu1", 12, 8, 8 << 12),
    ("co14", 14, 1, 1 << 14),
    ("gary", 15, 11, 11 << 15),
    ("in1", 16, 17, 17 << 16),
    ("opa", 17, 69, 69 << 17),
    ("vg2", 25, 8, 8 << 25),
];

/// Random `.type fd` cover with the given shape.
fn synthetic_pla(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> String {
    let mut s = format!(".i {inputs}\n.o {outputs}\n.type fd\n");
    let cubes = 2 * outputs + 4;
    s += &format!(".p {cubes}\n");
    for _ in 0..cubes {
        let ins: String = (0..inputs).map(|_| *b"01--".choose(rng).unwrap() as char).collect();
        let outs: String = (0..outputs).map(|_| if rng.gen_bool(0.3) { '1' } else { '0' }).collect();
        s += &format!("{ins} {outs}\n");
    }
    s + ".e\n"
}

fn benchmark_paths() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nodes = Vec::new();
    for (name, ti, so, want) in BENCHMARKS {
        let p = parse_pla(&synthetic_pla(ti, so, &mut rng)).map_err(|e| format!("{name}: {e}"))?;
        let mut mgr = Manager::new(p.num_inputs);
        let b = to_dd_benchmark(name, &p, &mut mgr).map_err(|e| format!("{name}: {e}"))?;
        let r = benchmark_report(&b);
        ensure(r.teammate == ti && r.scenario == so && r.path == want, || {
            format!("{name}: teammate={} scenario={} path={} want {want}", r.teammate, r.scenario, r.path)
        })?;
        nodes.push(format!("{name}:{}", r.node));
    }
    Ok(format!("13/13 paths exact; measured nodes {}", nodes.join(" ")))
}

fn random_expr(n: usize, depth: usize, rng: &mut ChaCha8Rng) -> Expr {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.1) { Expr::constant(rng.gen()) } else { Expr::var(rng.gen_range(0..n)) };
    }
    let a = random_expr(n, depth - 1, rng);
    match rng.gen_range(0..4) {
        0 => Expr::not(a),
        1 => Expr::and(a, random_expr(n, depth - 1, rng)),
        2 => Expr::or(a, random_expr(n, depth - 1, rng)),
        _ => Expr::xor(a, random_expr(n, depth - 1, rng)),
    }
}

/// Equivalent expression through De Morgan, commutation, double negation and XOR expansion.
fn rewrite(e: &Expr, rng: &mut ChaCha8Rng) -> Expr {
    let r = match e {
        Expr::Var(_) | Expr::Const(_) => e.clone(),
        Expr::Not(a) => Expr::not(rewrite(a, rng)),
        Expr::And(a, b) => match rng.gen_range(0..3) {
            0 => Expr::not(Expr::or(Expr::not(rewrite(a, rng)), Expr::not(rewrite(b, rng)))),
            1 => Expr::and(rewrite(b, rng), rewrite(a, rng)),
            _ => Expr::and(rewrite(a, rng), rewrite(b, rng)),
        },
        Expr::Or(a, b) => match rng.gen_range(0..3) {
            0 => Expr::not(Expr::and(Expr::not(rewrite(a, rng)), Expr::not(rewrite(b, rng)))),
            1 => Expr::or(rewrite(b, rng), rewrite(a, rng)),
            _ => Expr::or(rewrite(a, rng), rewrite(b, rng)),
        },
        Expr::Xor(a, b) => match rng.gen_range(0..2) {
            0 => Expr::or(
                Expr::and(rewrite(a, rng), Expr::not(rewrite(b, rng))),
                Expr::and(Expr::not(rewrite(a, rng)), rewrite(b, rng)),
            ),
            _ => Expr::xor(rewrite(b, rng), rewrite(a, rng)),
        },
    };
    if rng.gen_bool(0.1) {
        Expr::not(Expr::not(r))
    } else {
        r
    }
}

fn diagram_soundness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0u64;
    let mut functions = 0;
    for n in 1..=12usize {
        for trial in 0..6 {
            // tables with every density of unspecified rows, plus expressions
            let mut mgr = Manager::new(n);
            let (f, reference): (_, Reference) = if trial % 2 == 0 {
                let density = [0.0, 0.4, 0.9][trial / 2];
                let mut rows = Vec::new();
                for k in 0..1u64 << n {
                    if rng.gen_bool(density) {
                        continue;
                    }
                    let t = if rng.gen() { Ternary::One } else { Ternary::Zero };
                    rows.push(TableRow {
                        assignment: assignment_of(k, n),
                        unit_state: t,
                        decision: Decision::for_unit_state(t),
                    });
                }
                let t = DecisionTable::new(n, rows);
                let f = mgr.build_from_table(&t).map_err(|e| e.to_string())?;
                (f, Box::new(move |a| t.lookup(a)))
            } else {
                let e = random_expr(n, 6, &mut rng);
                let f = mgr.build_from_expr(&e).map_err(|e| e.to_string())?;
                (f, Box::new(move |a| Ternary::from(e.eval(a).unwrap())))
            };
            for k in 0..1u64 << n {
                let a = assignment_of(k, n);
                let got = mgr.evaluate(f, &a).map_err(|e| e.to_string())?;
                ensure(got == reference(&a), || format!("n={n} trial={trial} input {k}"))?;
                checked += 1;
            }
            ensure(mgr.is_reduced(&[f]), || format!("n={n} trial={trial} not reduced"))?;
            functions += 1;
        }
    }
    let mut canonical = 0;
    for i in 0..200 {
        let n = rng.gen_range(1..=8);
        let e = random_expr(n, rng.gen_range(1..=6), &mut rng);
        let e2 = rewrite(&e, &mut rng);
        let mut mgr = Manager::new(n);
        let (a, b) = (mgr.build_from_expr(&e).unwrap(), mgr.build_from_expr(&e2).unwrap());
        ensure(a == b, || format!("pair {i}: {e:?} vs {e2:?}"))?;
        canonical += 1;
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("{functions} functions, {checked} evaluations, {canonical}/200 canonical pairs"))
}

fn sis_closed_forms() -> Outcome {
    let start = Instant::now();
    let cdf = recovery_cdf(0.2, 5.0).map_err(|e| e.to_string())?;
    let want = 1.0 - (-1.0f64).exp();
    ensure((cdf - want).abs() < 1e-12, || format!("cdf {cdf}"))?;
    let mean = mean_stressed_time(0.2).map_err(|e| e.to_string())?;
    ensure(mean == 5.0, || format!("mean {mean}"))?;

    let n = 10_000;
    let alpha = 0.2;
    let team: Vec<TeammateId> = (0..n).map(TeammateId::human).collect();
    let g = ContactGraph::new(team.clone(), []).map_err(|e| e.to_string())?;
    let p = SisParams::new(alpha, 0.0, 1.0).map_err(|e| e.to_string())?;
    let s0 = SisState::new(&team, vec![BinaryState::Stressed; n], &[]).map_err(|e| e.to_string())?;
    let traj = sis::run(&s0, &g, &[], &p, 10, 17).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for t in 1..=10 {
        let surv = traj.states[t].stressed_count() as f64 / n as f64;
        let exact = (-alpha * t as f64).exp();
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        let z = (surv - exact).abs() / se;
        ensure(z < 3.0, || format!("t={t}: survival {surv} vs {exact} ({z:.2} SE)"))?;
        worst = worst.max(z);
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("cdf err {:.1e}, mean 5, survival worst {worst:.2} SE", (cdf - want).abs()))
}

/// Random polytree: a random undirected tree with each edge oriented at random.
fn random_polytree(n: usize, rng: &mut ChaCha8Rng) -> BayesModel {
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut parents: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let (child, parent) = if rng.gen() { (i, j) } else { (j, i) };
        parents.entry(names[child].clone()).or_default().push(names[parent].clone());
    }
    polytree_cpts(names, parents, rng)
}

fn polytree_cpts(names: Vec<String>, parents: BTreeMap<String, Vec<String>>, rng: &mut ChaCha8Rng) -> BayesModel {
    let cpts = names
        .iter()
        .map(|v| {
            let k = parents.get(v).map_or(0, Vec::len);
            let table = (0..1 << k)
                .flat_map(|_| {
                    let p: f64 = rng.gen_range(0.01..0.99);
                    [1.0 - p, p]
                })
                .collect();
            (v.clone(), table)
        })
        .collect();
    BayesModel { variables: names, parents, cpts }
}

fn inference_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let or_tree: BayesModel = serde_json::from_str(&std::fs::read_to_string(data("or_tree.json")).unwrap()).unwrap();
    let g = or_tree.to_factor_graph().map_err(|e| e.to_string())?;
    let m = sum_product(&g, &Evidence::new()).map_err(|e| e.to_string())?;
    let p = m.get("c2").unwrap()[1];
    ensure((p - 0.75).abs() <= 1e-9, || format!("p(c2=1)={p}"))?;

    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for i in 0..520 {
        let model = if i < 20 {
            // the four-node tree of the OR example with random tables
            polytree_cpts(or_tree.variables.clone(), or_tree.parents.clone(), &mut rng)
        } else {
            random_polytree(rng.gen_range(1..=16), &mut rng)
        };
        let g = model.to_factor_graph().map_err(|e| e.to_string())?;
        let mut ev = Evidence::new();
        if rng.gen_bool(0.4) {
            let v = model.variables.choose(&mut rng).unwrap().clone();
            ev.insert(v, BinaryState::from_bool(rng.gen()));
        }
        let sp = sum_product(&g, &ev).map_err(|e| format!("instance {i}: {e}"))?;
        let bf = brute_force_marginals(&g, &ev).map_err(|e| format!("instance {i}: {e}"))?;
        let d = sp.max_abs_diff(&bf);
        ensure(d < 1e-9, || format!("instance {i}: diff {d:e}"))?;
        for (name, s) in &ev {
            let want = if s.is_stressed() { [0.0, 1.0] } else { [1.0, 0.0] };
            ensure(sp.get(name) == Some(want), || format!("instance {i}: evidence {name} not clamped"))?;
        }
        worst = worst.max(d);
        instances += 1;
    }
    within(start.elapsed(), 120.0)?;
    Ok(format!("p(c2=1)={p}; {instances} trees, max diff {worst:.1e}"))
}

fn golden_replays() -> Outcome {
    let f = ScenarioFile::load(&data("contagion_replay.json")).map_err(|e| e.to_string())?;
    let got = replay_fixed(&f.scenario, f.timeline.as_ref().unwrap()).map_err(|e| e.to_string())?;
    use MissionStatus::*;
    ensure(got == [Started, InProgress, InProgress, Failed], || format!("{got:?}"))?;
    let f = ScenarioFile::load(&data("robot_switch_replay.json")).map_err(|e| e.to_string())?;
    let log = replay_logged(&f.scenario, &f.policy, f.timeline.as_ref().unwrap()).map_err(|e| e.to_string())?;
    let switch = log.events.iter().find(|e| matches!(e.kind, EventKind::PartnerSwitch { .. }));
    ensure(switch.is_some(), || "no partner switch logged".into())?;
    let last = log.statuses().last().unwrap();
    Ok(format!("{got:?}; switch at t={}, final {:?} at t={}", switch.unwrap().t, last.1, last.0))
}

fn random_scenario(rng: &mut ChaCha8Rng) -> (Scenario, RobotPolicy, SisState, u64) {
    let h = rng.gen_range(2..=4);
    let robot = rng.gen_bool(0.5);
    let mut kinds = vec![TeammateKind::Human; h];
    if robot {
        kinds.push(TeammateKind::Machine);
    }
    let team = team_from_kinds(&kinds);
    let mut edges = Vec::new();
    for i in 0..h {
        for j in i + 1..h {
            if j == i + 1 || rng.gen_bool(0.4) {
                edges.push((i, j));
            }
        }
    }
    let g = ContactGraph::new(team.clone(), edges).unwrap();
    let mut responses = Vec::new();
    let mut policy = RobotPolicy::ReportOnly;
    if robot {
        let watched = TeammateId::human(rng.gen_range(0..h));
        responses
            .push(StressResponse::new(TeammateId::machine(h), [watched], ResponseRule::AnyWatchedStressed).unwrap());
        if rng.gen() {
            let mut prefs: Vec<usize> = (0..h).collect();
            prefs.shuffle(rng);
            policy = RobotPolicy::SwitchPartner { preferences: prefs };
        }
    }
    let sis = SisParams::new(rng.gen_range(0.05..1.0), rng.gen_range(0.05..0.8), 1.0).unwrap();
    let k = rng.gen_range(2..=h);
    let sc = Scenario::new(
        team.clone(),
        ContactSchedule::fixed(g),
        MissionFunction::at_least(&team, k).unwrap(),
        responses,
        sis,
        StatusMap::default(),
    )
    .unwrap();
    let mut bits = vec![BinaryState::Unstressed; team.len()];
    bits[rng.gen_range(0..h)] = BinaryState::Stressed;
    let initial = SisState::new(&team, bits, &sc.responses).unwrap();
    (sc, policy, initial, rng.gen_range(1..=5))
}

fn sampler_vs_exact() -> Outcome {
    let start = Instant::now();
    let f = ScenarioFile::load(&data("chain075.json")).map_err(|e| e.to_string())?;
    let exact = failure_probability_exact(&f.scenario, &f.policy, &f.initial, 1).map_err(|e| e.to_string())?;
    ensure((exact - 0.75).abs() < 1e-15, || format!("exact {exact}"))?;
    let est = estimate_failure(&f.scenario, &f.policy, &f.initial, 1, 10_000, 0).map_err(|e| e.to_string())?;
    ensure(est.contains(exact), || format!("chain: {exact} outside {:?}", est.ci95))?;
    let bound = 3.0 * (0.75f64 * 0.25 / 10_000.0).sqrt();
    ensure((est.p_fail - 0.75).abs() < bound, || format!("chain: |{} - 0.75| >= {bound}", est.p_fail))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut inside = 0;
    for i in 0..20u64 {
        let (sc, policy, s0, steps) = random_scenario(&mut rng);
        let exact = failure_probability_exact(&sc, &policy, &s0, steps).map_err(|e| e.to_string())?;
        let est = estimate_failure(&sc, &policy, &s0, steps, 10_000, 1000 + i).map_err(|e| e.to_string())?;
        inside += est.contains(exact) as u32;
    }
    ensure(inside >= 18, || format!("{inside}/20 inside"))?;
    within(start.elapsed(), 120.0)?;
    Ok(format!("chain p={} ci=[{:.4}, {:.4}]; random {inside}/20 inside", est.p_fail, est.ci95.0, est.ci95.1))
}

fn cli_reproducibility() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_stresskit");
    let d = |n: &str| data(n).to_string_lossy().into_owned();
    let commands: Vec<Vec<String>> = [
        vec!["compile", &d("or2.tbl"), "--format", "json"],
        vec!["compile", &d("robot_watch.tbl"), "--format", "dot"],
        vec!["compile", &d("cover4x7.pla")],
        vec!["bench", &d("cover4x7.pla"), "--format", "csv"],
        vec!["simulate", &d("robot_mc.json"), "--seed", "1", "--steps", "50"],
        vec!["simulate", &d("robot_mc.json"), "--seed", "77", "--format", "csv"],
        vec!["simulate", &d("robot_switch_replay.json")],
        vec!["infer", &d("or_tree.json"), "--evidence", "c1=1"],
        vec!["mc", &d("chain075.json"), "--seed", "5", "--trials", "10000", "--exact"],
        vec!["mc", &d("robot_mc.json"), "--seed", "8", "--trials", "5000"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for args in &commands {
        let run = || Command::new(bin).args(args).output().map_err(|e| e.to_string());
        let (a, b) = (run()?, run()?);
        ensure(a.status.success(), || format!("{args:?} failed: {}", String::from_utf8_lossy(&a.stderr)))?;
        ensure(a.stdout == b.stdout && !a.stdout.is_empty(), || format!("{args:?} differs between runs"))?;
    }
    Ok(format!("{} commands byte-identical", commands.len()))
}

fn main() {
    // the harness-less target still receives libtest flags such as --list
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: [Criterion; 10] = [
        ("state-of-unit truth vectors", unit_functions),
        ("two-teammate OR diagram", or_diagram),
        ("four-teammate robot table", robot_table),
        ("benchmark path formula", benchmark_paths),
        ("diagram soundness", diagram_soundness),
        ("SIS closed forms", sis_closed_forms),
        ("inference oracle", inference_oracle),
        ("golden replays", golden_replays),
        ("sampler vs exact", sampler_vs_exact),
        ("CLI reproducibility", cli_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2} s): {why}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
