//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::rc::Rc;
use std::time::Instant;

use gridsim_cli::bench_case;
use gridsim_core::network::{
    kron_reduce, Branch, BranchModel, Bus, BusType, CMatrix, Cx, DeviceKind, Gen, LineParams, Network, Phase, Zip, ZipPart,
};
use gridsim_core::opf::{kkt_residual, opf_solve, IpmOptions, OpfStatus};
use gridsim_core::parsers::{canonical_case_json, case_from_canonical_json, expand_document, expand_document_with, load_matpower, matpower_parse, YamlScope};
use gridsim_core::powerflow::{model_build, solve_network, PfOptions, PowerFlowModel};
use gridsim_sim::config::load_simulation_with;
use gridsim_sim::scripted::{CallLog, Scripted};
use gridsim_sim::simlib::{BatteryModel, BatteryParams, SimNetwork, ThermalModel, VoltVarOpf};
use gridsim_sim::{Simulation, UpdateKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_yaml::Value;

type Outcome = Result<String, String>;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn case(name: &str) -> Network {
    load_matpower(data(&format!("cases/{name}.m"))).unwrap()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c(re: f64, im: f64) -> Cx {
    Cx::new(re, im)
}

// 1. flat-start power flow on the IEEE cases

fn reference_pf(name: &str) -> Vec<(String, f64, f64)> {
    let text = std::fs::read_to_string(data(&format!("cases/{name}_pf_solution.csv"))).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut notes = Vec::new();
    for name in ["ieee14", "ieee30", "ieee57"] {
        let mut net = case(name);
        let start = Instant::now();
        let (_, sol) = solve_network(&mut net, &PfOptions::default()).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        check(sol.converged && sol.power_mismatch < 1e-8, || format!("{name}: mismatch {:e}", sol.power_mismatch))?;
        check(sol.iterations <= 10, || format!("{name}: {} iterations", sol.iterations))?;
        check(secs < 1.0, || format!("{name}: {secs:.3} s"))?;
        if name == "ieee14" {
            for (bus, vm, va) in reference_pf(name) {
                let v = net.bus(&bus).unwrap().v[0];
                check((v.norm() - vm).abs() < 1e-4, || format!("bus {bus}: |V| {} vs {vm}", v.norm()))?;
                check((v.arg().to_degrees() - va).abs() < 0.01, || format!("bus {bus}: angle {} vs {va}", v.arg().to_degrees()))?;
            }
        }
        notes.push(format!("{name} {} it {:.1e} pu {:.1} ms", sol.iterations, sol.power_mismatch, secs * 1e3));
    }
    Ok(notes.join("; "))
}

// 2. Jacobian against central differences

fn zip_feeder() -> Network {
    let mut net = Network::new(1.0);
    net.add_bus(Bus::new("src", &Phase::ABC, 4.16).unwrap().with_type(BusType::Slack)).unwrap();
    net.add_bus(Bus::new("mid", &Phase::ABC, 4.16).unwrap()).unwrap();
    net.add_bus(Bus::new("end", &Phase::ABC, 4.16).unwrap().with_type(BusType::Pv)).unwrap();
    let mut z = CMatrix::from_element(4, 4, c(0.05, 0.35));
    let mut ysh = CMatrix::from_element(4, 4, c(0.0, -1e-6));
    for k in 0..4 {
        z[(k, k)] = c(0.35, 0.9);
        ysh[(k, k)] = c(0.0, 4e-6);
    }
    for (id, a, b) in [("l1", "src", "mid"), ("l2", "mid", "end")] {
        let line = LineParams { z_per_km: z.clone(), y_shunt_per_km: ysh.clone(), length_km: 1.5, n_neutral: 1 };
        net.add_branch(Branch::new(id, BranchModel::OverheadLine(line))).unwrap();
        net.connect_terminal(DeviceKind::Branch, id, 0, a, &Phase::ABC).unwrap();
        net.connect_terminal(DeviceKind::Branch, id, 1, b, &Phase::ABC).unwrap();
    }
    let wye = Zip::wye("wye", &[c(0.05, 0.01)], &[c(0.1, 0.02), c(0.0, 0.0), c(0.08, 0.03)], &[c(0.2, 0.1), c(0.25, 0.05), c(0.1, 0.04)]);
    net.add_zip(wye).unwrap();
    net.connect_terminal(DeviceKind::Zip, "wye", 0, "mid", &Phase::ABC).unwrap();
    let mut delta = Zip::new("delta", 3);
    delta.set(ZipPart::S, 1, 2, c(0.15, 0.05));
    delta.set(ZipPart::S, 2, 3, c(0.1, 0.02));
    delta.set(ZipPart::I, 3, 1, c(0.07, 0.01));
    delta.set(ZipPart::I, 1, 2, c(0.03, -0.01));
    net.add_zip(delta).unwrap();
    net.connect_terminal(DeviceKind::Zip, "delta", 0, "end", &Phase::ABC).unwrap();
    let mut g = Gen::new("pv", 1);
    g.s[0] = c(0.05, 0.0);
    g.voltage_control = true;
    g.v_setpoint = 0.99;
    net.add_gen(g).unwrap();
    net.connect_terminal(DeviceKind::Gen, "pv", 0, "end", &[Phase::B]).unwrap();
    net
}

/// Largest |FD − J| relative to the largest |J| entry.
fn jacobian_error(model: &PowerFlowModel, v: &[Cx], q: &[f64]) -> f64 {
    let jac = model.jacobian_rect(v, q).unwrap().to_dense();
    let x0 = model.pack(v, q);
    let h = 1e-6;
    let scale = jac.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for col in 0..x0.len() {
        let eval = |d: f64| {
            let mut x = x0.clone();
            x[col] += d;
            let mut vv = v.to_vec();
            let qq = model.unpack(&x, &mut vv);
            model.mismatch(&vv, &qq).unwrap()
        };
        let (fp, fm) = (eval(h), eval(-h));
        for row in 0..fp.len() {
            worst = worst.max(((fp[row] - fm[row]) / (2.0 * h) - jac[row][col]).abs() / scale);
        }
    }
    worst
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let nets = [("ieee14", case("ieee14")), ("ieee30", case("ieee30")), ("ieee57", case("ieee57")), ("zip_feeder", zip_feeder())];
    for (name, net) in nets {
        let model = model_build(&net).map_err(|e| e.to_string())?;
        let flat = model.flat_start();
        for _ in 0..10 {
            let v: Vec<Cx> = flat.iter().map(|v| v * Cx::from_polar(rng.random_range(0.9..1.1), rng.random_range(-0.3..0.3))).collect();
            let q: Vec<f64> = model.pv_nodes().iter().map(|_| rng.random_range(-0.5..0.5)).collect();
            let err = jacobian_error(&model, &v, &q);
            check(err < 1e-6, || format!("{name}: relative error {err:e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(format!("40 states, worst relative error {worst:.1e}"))
}

// 3. Kron reduction against node-by-node elimination

fn eliminate_one_at_a_time(y: &CMatrix, keep: &[usize]) -> CMatrix {
    let n = y.nrows();
    let mut m: Vec<Vec<Cx>> = (0..n).map(|i| (0..n).map(|j| y[(i, j)]).collect()).collect();
    let mut alive: Vec<usize> = (0..n).collect();
    for p in (0..n).filter(|i| !keep.contains(i)) {
        alive.retain(|&i| i != p);
        let pivot = m[p][p];
        for &i in &alive {
            let f = m[i][p] / pivot;
            for &j in &alive {
                let d = f * m[p][j];
                m[i][j] -= d;
            }
        }
    }
    CMatrix::from_fn(keep.len(), keep.len(), |r, col| m[keep[r]][keep[col]])
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case_no in 0..50 {
        let n = 6;
        let mut y = CMatrix::from_element(n, n, c(0.0, 0.0));
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.7) {
                    let yij = c(rng.random_range(0.1..5.0), -rng.random_range(0.5..20.0));
                    y[(i, j)] -= yij;
                    y[(j, i)] -= yij;
                    y[(i, i)] += yij;
                    y[(j, j)] += yij;
                }
            }
            y[(i, i)] += c(rng.random_range(0.01..0.5), rng.random_range(-0.2..0.2));
        }
        let mut keep: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        if keep.is_empty() || keep.len() == n {
            keep = vec![case_no % n];
        }
        let got = kron_reduce(&y, &keep).map_err(|e| e.to_string())?;
        let oracle = eliminate_one_at_a_time(&y, &keep);
        let scale = oracle.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        let err = (&got - &oracle).iter().fold(0.0f64, |m, x| m.max(x.norm())) / scale;
        check(err <= 1e-12, || format!("case {case_no}: relative error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("50 cases, worst relative error {worst:.1e}"))
}

// 4. OPF: degenerate dispatch, binding line limit, sampling lower bound

fn gen_cost(g: &Gen) -> f64 {
    let p = g.p_total();
    g.cost[0] + g.cost[1] * p + g.cost[2] * p * p
}

fn criterion_4a() -> Result<String, String> {
    let base = case("ieee14");
    let mut pf_net = base.clone();
    solve_network(&mut pf_net, &PfOptions::default()).map_err(|e| e.to_string())?;
    let mut net = base.clone();
    let slack: BTreeSet<String> = net.buses.values().filter(|b| b.bus_type == BusType::Slack).map(|b| b.id.clone()).collect();
    let mut pinned = BTreeMap::new();
    for g in net.gens.values_mut() {
        let bus = g.terminal.as_ref().unwrap().bus.clone();
        let p = pf_net.gens.get(&g.id).unwrap().p_total();
        (g.p_min, g.p_max) = if slack.contains(&bus) { (f64::NEG_INFINITY, f64::INFINITY) } else { (p, p) };
        (g.q_min, g.q_max) = (f64::NEG_INFINITY, f64::INFINITY);
        if g.voltage_control {
            pinned.entry(bus).or_insert(g.v_setpoint);
        }
    }
    for bus in net.buses.values_mut() {
        (bus.v_mag_min, bus.v_mag_max) = pinned.get(&bus.id).map_or((0.5, 1.5), |&v| (v, v));
    }
    let (problem, sol) = opf_solve(&net, Vec::new(), &IpmOptions::default()).map_err(|e| e.to_string())?;
    check(sol.status == OpfStatus::Optimal, || format!("status {:?}", sol.status))?;
    let v = problem.layout.voltages(&sol.x);
    let mut worst = 0.0f64;
    for (k, node) in problem.layout.nodes.nodes().iter().enumerate() {
        let reference = pf_net.bus(&node.bus).unwrap().v[0];
        worst = worst.max((v[k] - reference).norm());
    }
    check(worst <= 1e-6, || format!("voltage difference {worst:e} pu"))?;
    let pf_cost: f64 = pf_net.gens.values().map(gen_cost).sum();
    check((sol.objective - pf_cost).abs() <= 1e-6 * pf_cost.abs().max(1.0), || format!("objective {} vs PF cost {pf_cost}", sol.objective))?;
    Ok(format!("ieee14 |ΔV| {worst:.1e} pu"))
}

/// Apparent power (pu) at both ends of a pi line with series admittance
/// `y` and total charging susceptance `b`.
fn line_flows(va: Cx, vb: Cx, y: Cx, b: f64) -> [f64; 2] {
    let half = c(0.0, b / 2.0);
    [(va * ((va - vb) * y + half * va).conj()).norm(), (vb * ((vb - va) * y + half * vb).conj()).norm()]
}

fn criterion_4b() -> Result<String, String> {
    let net = case("case3_limit");
    let (problem, sol) = opf_solve(&net, Vec::new(), &IpmOptions::default()).map_err(|e| e.to_string())?;
    check(sol.status == OpfStatus::Optimal, || format!("status {:?}", sol.status))?;
    let kkt = kkt_residual(&problem, &sol).map_err(|e| e.to_string())?;
    check(kkt.max() <= 1e-6, || format!("KKT {kkt:?}"))?;
    let v = problem.layout.voltages(&sol.x);
    let at = |bus: &str| v[problem.layout.nodes.get(bus, Phase::Bal).unwrap()];
    let y = c(1.0, 0.0) / c(0.02, 0.2);
    let s = line_flows(at("1"), at("3"), y, 0.02);
    let s_max = s[0].max(s[1]);
    check((s_max - 0.6).abs() <= 1e-6, || format!("|S| {s_max} pu vs limit 0.6"))?;
    Ok(format!("objective {:.4}, |S| − S_max {:.1e} pu, KKT {:.1e}", sol.objective, s_max - 0.6, kkt.max()))
}

fn criterion_4c() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut notes = Vec::new();
    // case2: the only freedom is the slack voltage
    {
        let net = case("case2");
        let (_, sol) = opf_solve(&net, Vec::new(), &IpmOptions::default()).map_err(|e| e.to_string())?;
        check(sol.status == OpfStatus::Optimal, || "case2 not optimal".into())?;
        let mut accepted = 0;
        for _ in 0..200 {
            let mut n = net.clone();
            n.gens.get_mut("gen_1").unwrap().v_setpoint = rng.random_range(0.95..1.05);
            let (_, pf) = solve_network(&mut n, &PfOptions::default()).map_err(|e| e.to_string())?;
            let g = n.gens.get("gen_1").unwrap();
            let v2 = n.bus("2").unwrap().v[0].norm();
            let feasible = pf.converged
                && (0.0..=100.0).contains(&g.p_total())
                && (-100.0..=100.0).contains(&g.q_total())
                && (0.9..=1.1).contains(&v2);
            if feasible {
                accepted += 1;
                let cost = gen_cost(g);
                check(cost >= sol.objective - 1e-6, || format!("case2 sample beats optimum: {cost} < {}", sol.objective))?;
            }
        }
        notes.push(format!("case2 {accepted}/200 feasible"));
    }
    {
        let net = case("case3_limit");
        let (_, sol) = opf_solve(&net, Vec::new(), &IpmOptions::default()).map_err(|e| e.to_string())?;
        check(sol.status == OpfStatus::Optimal, || "case3_limit not optimal".into())?;
        let y = c(1.0, 0.0) / c(0.02, 0.2);
        let mut accepted = 0;
        for _ in 0..200 {
            let mut n = net.clone();
            let (v1, v2, p2) = (rng.random_range(0.9..1.1), rng.random_range(0.9..1.1), rng.random_range(0.0..200.0));
            n.gens.get_mut("gen_1").unwrap().v_setpoint = v1;
            let g2 = n.gens.get_mut("gen_2").unwrap();
            g2.v_setpoint = v2;
            g2.s[0] = c(p2, 0.0);
            let (_, pf) = solve_network(&mut n, &PfOptions::default()).map_err(|e| e.to_string())?;
            let volt = |b: &str| n.bus(b).unwrap().v[0];
            let flows = line_flows(volt("1"), volt("3"), y, 0.02);
            let gens_ok = n.gens.values().all(|g| (0.0..=200.0).contains(&g.p_total()) && (-100.0..=100.0).contains(&g.q_total()));
            let feasible = pf.converged && gens_ok && (0.9..=1.1).contains(&volt("3").norm()) && flows.iter().all(|&s| s <= 0.6);
            if feasible {
                accepted += 1;
                let cost: f64 = n.gens.values().map(gen_cost).sum();
                check(cost >= sol.objective - 1e-6, || format!("case3_limit sample beats optimum: {cost} < {}", sol.objective))?;
            }
        }
        notes.push(format!("case3_limit {accepted}/200 feasible"));
    }
    Ok(notes.join(", "))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let a = criterion_4a().map_err(|e| format!("(a) {e}"))?;
    let b = criterion_4b().map_err(|e| format!("(b) {e}"))?;
    let c = criterion_4c().map_err(|e| format!("(c) {e}"))?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!("(a) {a}; (b) {b}; (c) {c}; {secs:.2} s"))
}

// 5. PF against OPF solve times

fn criterion_5() -> Outcome {
    let row = bench_case(&data("cases/ieee57.m"), 5, &PfOptions::default(), &IpmOptions::default());
    check(row.status == "ok", || format!("bench status {}", row.status))?;
    check(row.pf_ms * 10.0 <= row.opf_ms, || format!("pf {:.3} ms vs opf {:.3} ms", row.pf_ms, row.opf_ms))?;
    Ok(format!("median pf {:.3} ms, opf {:.3} ms, ratio {:.1}", row.pf_ms, row.opf_ms, row.opf_ms / row.pf_ms))
}

// 6. engine ordering on random dependency graphs

fn random_dag(seed: u64) -> (Simulation, CallLog, Vec<(usize, usize)>, Vec<Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..15);
    let log: CallLog = Rc::new(RefCell::new(Vec::new()));
    let edges: Vec<(usize, usize)> = (1..n).flat_map(|j| (0..j).map(move |i| (i, j))).filter(|_| rng.random_bool(0.3)).collect();
    let mut desc: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(i, j) in edges.iter().rev() {
        let below = desc[j].clone();
        desc[i].insert(j);
        desc[i].extend(below);
    }
    let mut flags = vec![Vec::new(); n];
    let mut sim = Simulation::new(0, 100);
    for i in 0..n {
        let deps: Vec<String> = edges.iter().filter(|e| e.1 == i).map(|e| format!("c{}", e.0)).collect();
        let deps: Vec<&str> = deps.iter().map(String::as_str).collect();
        let times: Vec<i64> = (0..rng.random_range(0..5)).map(|_| rng.random_range(0..100)).collect();
        flags[i] = desc[i].iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        let targets: Vec<String> = flags[i].iter().map(|j| format!("c{j}")).collect();
        let targets: Vec<&str> = targets.iter().map(String::as_str).collect();
        sim.add(Scripted::new(format!("c{i}"), log.clone()).depends_on(&deps).at(&times).flags(&targets)).unwrap();
    }
    (sim, log, edges, flags)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut multi = 0;
    for seed in 0..100u64 {
        let (mut sim, log, edges, flags) = random_dag(seed);
        sim.run().map_err(|e| format!("seed {seed}: {e}"))?;
        let first = log.borrow().clone();
        let times: BTreeSet<i64> = first.iter().map(|e| e.0).collect();
        for t in times {
            let step: Vec<(usize, UpdateKind)> =
                first.iter().filter(|e| e.0 == t).map(|e| (e.1[1..].parse().unwrap(), e.2)).collect();
            let pos = |i: usize| step.iter().position(|s| s.0 == i);
            for &(a, b) in &edges {
                if let (Some(pa), Some(pb)) = (pos(a), pos(b)) {
                    check(pa < pb, || format!("seed {seed} t {t}: c{a} after its dependent c{b}"))?;
                }
            }
            let mut flagged: BTreeMap<usize, usize> = BTreeMap::new();
            for &(i, _) in &step {
                for &j in &flags[i] {
                    *flagged.entry(j).or_default() += 1;
                }
            }
            for (&j, &count) in &flagged {
                let updates: Vec<UpdateKind> = step.iter().filter(|s| s.0 == j).map(|s| s.1).collect();
                check(updates.len() == 1, || format!("seed {seed} t {t}: c{j} flagged {count}× updated {}×", updates.len()))?;
                let contingent = updates.iter().filter(|k| **k == UpdateKind::Contingent).count();
                check(contingent <= 1, || format!("seed {seed} t {t}: c{j} {contingent} contingent updates"))?;
                if count >= 2 {
                    multi += 1;
                }
            }
        }
        let (mut again, log2, _, _) = random_dag(seed);
        again.run().map_err(|e| e.to_string())?;
        check(first == *log2.borrow(), || format!("seed {seed}: replay differs"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!("100 graphs, {multi} multi-flagged updates, {secs:.2} s"))
}

// 7. PV volt-VAR demo

struct DemoRun {
    violations: BTreeMap<i64, usize>,
    slack_free: BTreeSet<i64>,
}

fn run_demo(volt_var: bool) -> Result<DemoRun, String> {
    let mut scope = YamlScope::new();
    scope.bind_fixed("volt_var", Value::Bool(volt_var));
    let mut sim = load_simulation_with(&data("pvdemo/pvdemo_ieee57.yaml"), scope).map_err(|e| e.to_string())?;
    sim.record_outputs = false;
    let net = sim.component::<SimNetwork>("network").map_err(|e| e.to_string())?.borrow().network();
    let counts = Rc::new(RefCell::new(BTreeMap::new()));
    let sink_counts = counts.clone();
    sim.add_sink(Box::new(move |rec| {
        let net = net.borrow();
        let n = net
            .buses
            .values()
            .flat_map(|b| b.v.iter().map(move |v| (b, v.norm())))
            .filter(|(b, m)| *m < b.v_mag_min - 1e-4 || *m > b.v_mag_max + 1e-4)
            .count();
        sink_counts.borrow_mut().insert(rec.time, n);
        Ok(())
    }));
    sim.run().map_err(|e| e.to_string())?;
    let opf = sim.component::<VoltVarOpf>("volt_var").map_err(|e| e.to_string())?;
    let slack_free = opf
        .borrow()
        .results()
        .iter()
        .filter(|r| r.status == Some(OpfStatus::Optimal) && r.max_slack <= 1e-6)
        .map(|r| r.time)
        .collect();
    let violations = counts.borrow().clone();
    Ok(DemoRun { violations, slack_free })
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let plain = run_demo(false)?;
    let controlled = run_demo(true)?;
    let secs = start.elapsed().as_secs_f64();
    let total = |r: &DemoRun| r.violations.values().sum::<usize>();
    let (n_plain, n_ctrl) = (total(&plain), total(&controlled));
    check(plain.violations.len() == 145, || format!("{} timesteps", plain.violations.len()))?;
    check(n_ctrl < n_plain, || format!("controlled {n_ctrl} not below uncontrolled {n_plain}"))?;
    for t in &controlled.slack_free {
        let n = controlled.violations.get(t).copied().unwrap_or(0);
        check(n == 0, || format!("{n} violations at {t} with all slacks zero"))?;
    }
    check(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "violations {n_plain} uncontrolled, {n_ctrl} controlled; {} slack-free steps clean; {secs:.1} s",
        controlled.slack_free.len()
    ))
}

// 8. battery accounting and building closed form

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = BatteryParams { capacity_kwh: 13.5, max_charge_kw: 5.0, max_discharge_kw: 7.0, eta_charge: 0.95, eta_discharge: 0.9 };
    let mut b = BatteryModel::new(params, 6.0);
    let mut expected = 6.0;
    let mut worst = 0.0f64;
    for step in 0..10_000 {
        let dt = rng.random_range(1.0..3600.0);
        let p = b.step(dt, rng.random_range(-10.0..10.0)).map_err(|e| e.to_string())?;
        let h = dt / 3600.0;
        expected += if p > 0.0 { params.eta_charge * p * h } else { p / params.eta_discharge * h };
        check((0.0..=params.capacity_kwh).contains(&b.charge_kwh), || format!("step {step}: charge {}", b.charge_kwh))?;
        worst = worst.max((b.charge_kwh - expected).abs());
        check(worst < 1e-9, || format!("step {step}: accounting error {worst:e} kWh"))?;
    }
    let mut building = 0.0f64;
    for _ in 0..1000 {
        let (r, cap) = (rng.random_range(0.5..5.0), rng.random_range(0.5..20.0));
        let mut m = ThermalModel { r, c: cap, t_int: rng.random_range(-5.0..35.0) };
        let (t0, t_ext, q, dt) = (m.t_int, rng.random_range(-10.0..40.0), rng.random_range(-5.0..5.0), rng.random_range(1.0..86400.0));
        m.step(dt, t_ext, q);
        let steady = t_ext + r * q;
        let closed = steady + (t0 - steady) * (-dt / (r * cap * 3600.0)).exp();
        let err = (m.t_int - closed).abs() / closed.abs().max(1.0);
        check(err <= 1e-12, || format!("building error {err:e}"))?;
        building = building.max(err);
    }
    Ok(format!("battery error {worst:.1e} kWh over 10000 steps; building error {building:.1e}"))
}

// 9. golden files

fn criterion_9() -> Outcome {
    for name in ["ieee14", "ieee30", "ieee57"] {
        let text = std::fs::read_to_string(data(&format!("cases/{name}.m"))).unwrap();
        let parsed = matpower_parse(&text).map_err(|e| e.to_string())?;
        let json = canonical_case_json(&parsed).map_err(|e| e.to_string())?;
        let golden = std::fs::read_to_string(data(&format!("golden/{name}.json"))).unwrap();
        check(json == golden, || format!("{name}: canonical JSON differs from golden"))?;
        let back = case_from_canonical_json(&json).map_err(|e| e.to_string())?;
        let again = canonical_case_json(&back).map_err(|e| e.to_string())?;
        check(again == json, || format!("{name}: JSON round trip not byte-identical"))?;
    }
    let doc = std::fs::read_to_string(data("pvdemo/pvdemo_ieee57.yaml")).unwrap();
    let mut scope = YamlScope::new();
    scope.bind_fixed("n_ld_buses", Value::from(3));
    scope.bind_fixed("n_pv", Value::from(2));
    let expanded = expand_document_with(&doc, scope).map_err(|e| e.to_string())?;
    let golden = expand_document(&std::fs::read_to_string(data("pvdemo/pvdemo_unrolled_golden.yaml")).unwrap()).map_err(|e| e.to_string())?;
    check(expanded == golden, || {
        let first = expanded.iter().zip(&golden).position(|(a, b)| a != b).unwrap_or(expanded.len().min(golden.len()));
        format!("expansion differs from golden at entry {first} ({} vs {} entries)", expanded.len(), golden.len())
    })?;
    Ok(format!("3 Matpower round trips, {} unrolled entries", golden.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 power flow on IEEE 14/30/57", criterion_1),
        ("2 Jacobian vs finite differences", criterion_2),
        ("3 Kron reduction vs elimination", criterion_3),
        ("4 OPF oracles", criterion_4),
        ("5 PF ≤ OPF/10 on IEEE 57", criterion_5),
        ("6 engine ordering on random graphs", criterion_6),
        ("7 PV volt-VAR demo", criterion_7),
        ("8 battery and building", criterion_8),
        ("9 golden files", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| name.starts_with(x.as_str())) {
            continue;
        }
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
