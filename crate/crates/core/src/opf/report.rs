use serde_json::{json, Value};

use super::model::OpfProblem;
use super::nlp::Nlp;
use super::OpfSolution;
use crate::network::{Cx, Network};

const BIND_TOL: f64 = 1e-5;

/// Writes node voltages and gen dispatch (MVA per phase) into `net`.
pub fn apply_opf_solution(net: &mut Network, problem: &OpfProblem, sol: &OpfSolution) {
    let layout = &problem.layout;
    let v = layout.voltages(&sol.x);
    for (i, info) in layout.nodes.nodes().iter().enumerate() {
        let bus = net.buses.get_by_index_mut(info.bus_index).expect("bus exists");
        let k = bus.phases().iter().position(|&p| p == info.phase).expect("phase exists");
        bus.v[k] = v[i];
    }
    for g in &layout.gens {
        let gen = net.gens.get_mut(&g.id).expect("gen exists");
        for k in 0..g.p.len() {
            gen.s[k] = Cx::new(sol.x[g.p[k]], sol.x[g.q[k]]) * layout.s_base;
        }
    }
}

/// Names of bounds and limits active at the solution.
pub fn binding_constraints(problem: &OpfProblem, sol: &OpfSolution) -> Vec<String> {
    let layout = &problem.layout;
    let (lo, hi) = problem.bounds();
    let n = layout.n_nodes();
    let mut out = Vec::new();
    let name = |i: usize| {
        let node = layout.nodes.node(i);
        format!("{}.{}", node.bus, node.phase)
    };
    let mut check = |label: String, i: usize| {
        if lo[i] < hi[i] {
            if lo[i].is_finite() && sol.x[i] - lo[i] <= BIND_TOL {
                out.push(format!("{label} at lower bound"));
            } else if hi[i].is_finite() && hi[i] - sol.x[i] <= BIND_TOL {
                out.push(format!("{label} at upper bound"));
            }
        }
    };
    for i in 0..n {
        check(format!("Vmag {}", name(i)), layout.v(i));
    }
    for g in &layout.gens {
        for k in 0..g.p.len() {
            check(format!("P {}[{k}]", g.id), g.p[k]);
            check(format!("Q {}[{k}]", g.id), g.q[k]);
        }
    }
    let flows = problem.branch_flows(&sol.x);
    for (lim, s) in problem.limits.iter().zip(flows) {
        if lim.s_max - s <= BIND_TOL {
            out.push(format!("Smax {} end {} conductor {}", lim.branch, lim.terminal, lim.conductor));
        }
    }
    out
}

pub fn opf_report(problem: &OpfProblem, sol: &OpfSolution) -> Value {
    let layout = &problem.layout;
    let v = layout.voltages(&sol.x);
    let nodes: Vec<Value> = layout
        .nodes
        .nodes()
        .iter()
        .zip(&v)
        .map(|(n, v)| json!({"bus": n.bus, "phase": n.phase.as_str(), "Vmag_pu": v.norm(), "Varg_deg": v.arg().to_degrees()}))
        .collect();
    let gens: Vec<Value> = layout
        .gens
        .iter()
        .map(|g| {
            let p: f64 = g.p.iter().map(|&i| sol.x[i]).sum::<f64>() * layout.s_base;
            let q: f64 = g.q.iter().map(|&i| sol.x[i]).sum::<f64>() * layout.s_base;
            json!({"id": g.id, "bus": g.bus, "P_MW": p, "Q_MVAr": q})
        })
        .collect();
    let extension: Vec<Value> = problem
        .extension_values(&sol.x)
        .into_iter()
        .map(|(ext, var, value)| json!({"extension": ext, "variable": var, "value": value}))
        .collect();
    json!({
        "status": sol.status,
        "objective": sol.objective,
        "iterations": sol.iterations,
        "kkt": sol.kkt,
        "nodes": nodes,
        "gens": gens,
        "extension_variables": extension,
        "binding_constraints": binding_constraints(problem, sol),
        "timing": sol.timing,
    })
}
