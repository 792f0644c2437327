use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};

use super::model::{model_build, NodeType, PfError, PowerFlowModel};
use crate::network::{Cx, Network};
use crate::sparse::SparseLu;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    #[default]
    Flat,
    /// Start from the voltages currently stored on the buses.
    Warm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub start: Start,
    /// Convert PV nodes to PQ at their reactive limit and re-solve.
    pub enforce_q_limits: bool,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions { tol: 1e-8, max_iter: 50, damping: 1.0, start: Start::Flat, enforce_q_limits: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PfTiming {
    pub build_s: f64,
    pub solve_s: f64,
    pub factor_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfSolution {
    pub v: Vec<Cx>,
    /// Generation per node including recovered slack and PV powers, pu.
    pub sg: Vec<Cx>,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the current mismatch at non-slack nodes.
    pub residual: f64,
    /// Infinity norm of the power mismatch at non-slack nodes.
    pub power_mismatch: f64,
    pub timing: PfTiming,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn initial_voltage(model: &PowerFlowModel, net: Option<&Network>, start: Start) -> Vec<Cx> {
    let flat = model.flat_start();
    match (start, net) {
        (Start::Warm, Some(net)) => {
            let mut v = flat;
            for (i, info) in model.nodes.nodes().iter().enumerate() {
                let bus = net.buses.get_by_index(info.bus_index).expect("bus exists");
                let k = bus.phases().iter().position(|&p| p == info.phase).expect("phase exists");
                if model.node_type[i] != NodeType::Slack && bus.v[k].norm() > 0.0 {
                    v[i] = bus.v[k];
                }
            }
            v
        }
        _ => flat,
    }
}

/// Newton iterations on the current-injection mismatch from a flat start.
pub fn nr_solve(model: &PowerFlowModel, opts: &PfOptions) -> Result<PfSolution, PfError> {
    nr_solve_from(model, model.flat_start(), opts)
}

pub fn nr_solve_from(model: &PowerFlowModel, v0: Vec<Cx>, opts: &PfOptions) -> Result<PfSolution, PfError> {
    let start = Instant::now();
    let mut v = v0;
    // Q at PV nodes starts from the specified value
    let mut q: Vec<f64> = model.pv_nodes().iter().map(|&i| model.sg[i].im).collect();
    let mut f = model.mismatch(&v, &q)?;
    let mut factor_s = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (current, power) = norms(model, &v, &q)?;
        let pv_err = model
            .pv_nodes()
            .iter()
            .map(|&i| (v[i].norm() - model.v_set[i]).abs())
            .fold(0.0, f64::max);
        debug!("nr iter {iterations}: |dI| = {current:.3e}, |dS| = {power:.3e}");
        if current <= opts.tol && power <= opts.tol && pv_err <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let jac = model.jacobian_rect(&v, &q)?;
        let t_factor = Instant::now();
        let lu = SparseLu::factor(&jac)?;
        factor_s += t_factor.elapsed().as_secs_f64();
        let mut dx: Vec<f64> = f.iter().map(|x| -x).collect();
        lu.solve_in_place(&mut dx);
        let x = model.pack(&v, &q);
        let f_norm = norm_inf(&f);
        let mut alpha = opts.damping;
        let mut halvings = 0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
            let mut v_trial = v.clone();
            let q_trial = model.unpack(&trial, &mut v_trial);
            let f_trial = model.mismatch(&v_trial, &q_trial);
            let accept = match &f_trial {
                Ok(ft) => norm_inf(ft) <= f_norm || halvings == 4,
                Err(_) => halvings == 4,
            };
            if accept {
                v = v_trial;
                q = q_trial;
                f = f_trial?;
                break;
            }
            alpha *= 0.5;
            halvings += 1;
        }
        iterations += 1;
    }
    let (residual, power_mismatch) = norms(model, &v, &q)?;
    let sg = recover_generation(model, &v, &q)?;
    Ok(PfSolution {
        v,
        sg,
        iterations,
        converged,
        residual,
        power_mismatch,
        timing: PfTiming { build_s: model.build_s, solve_s: start.elapsed().as_secs_f64(), factor_s },
    })
}

fn norms(model: &PowerFlowModel, v: &[Cx], q: &[f64]) -> Result<(f64, f64), PfError> {
    let sg = model.sg_with_q(q);
    let ri = model.residual_current_with(v, &sg)?;
    let rs = model.residual_power_with(v, &sg)?;
    let free = |i: &usize| model.node_type[*i] != NodeType::Slack;
    let ci = (0..v.len()).filter(free).fold(0.0f64, |m, i| m.max(ri[i].re.abs()).max(ri[i].im.abs()));
    let cs = (0..v.len()).filter(free).fold(0.0f64, |m, i| m.max(rs[i].re.abs()).max(rs[i].im.abs()));
    Ok((ci, cs))
}

/// Generation per node implied by the voltages: PV nodes take the solved Q,
/// slack nodes absorb whatever balances the node.
fn recover_generation(model: &PowerFlowModel, v: &[Cx], q: &[f64]) -> Result<Vec<Cx>, PfError> {
    let mut sg = model.sg_with_q(q);
    let zero: Vec<Cx> = vec![Cx::new(0.0, 0.0); v.len()];
    // power mismatch with zero generation is minus the node's net withdrawal
    let withdrawal = model.residual_power_with(v, &zero)?;
    for i in 0..v.len() {
        if model.node_type[i] == NodeType::Slack {
            sg[i] = -withdrawal[i];
        }
    }
    Ok(sg)
}

/// Builds, solves and writes the solution back into the network: bus
/// voltages and the power of voltage-controlling gens at slack and PV buses.
pub fn solve_network(net: &mut Network, opts: &PfOptions) -> Result<(PowerFlowModel, PfSolution), PfError> {
    let mut model = model_build(net)?;
    let mut sol = nr_solve_from(&model, initial_voltage(&model, Some(net), opts.start), opts)?;
    if opts.enforce_q_limits && sol.converged {
        for _ in 0..10 {
            let violated = q_limit_violations(net, &model, &sol);
            if violated.is_empty() {
                break;
            }
            for (node, s) in violated {
                model.demote_pv(node, s);
            }
            sol = nr_solve_from(&model, sol.v.clone(), opts)?;
            if !sol.converged {
                break;
            }
        }
    }
    apply_solution(net, &model, &sol);
    Ok((model, sol))
}

fn q_limit_violations(net: &Network, model: &PowerFlowModel, sol: &PfSolution) -> Vec<(usize, Cx)> {
    let mut out = Vec::new();
    for &i in model.pv_nodes() {
        let info = model.nodes.node(i);
        let (mut qmin, mut qmax) = (0.0, 0.0);
        for g in net.gens_at(&info.bus).filter(|g| g.voltage_control) {
            let n = g.n_phases() as f64;
            qmin += g.q_min / n / net.s_base;
            qmax += g.q_max / n / net.s_base;
        }
        let q = sol.sg[i].im;
        if q > qmax + 1e-9 || q < qmin - 1e-9 {
            out.push((i, Cx::new(sol.sg[i].re, q.clamp(qmin, qmax))));
        }
    }
    out
}

/// Stores voltages on buses and splits recovered generation equally among
/// the voltage-controlling gens at slack and PV nodes.
pub fn apply_solution(net: &mut Network, model: &PowerFlowModel, sol: &PfSolution) {
    for (i, info) in model.nodes.nodes().iter().enumerate() {
        let bus = net.buses.get_by_index_mut(info.bus_index).expect("bus exists");
        let k = bus.phases().iter().position(|&p| p == info.phase).expect("phase exists");
        bus.v[k] = sol.v[i];
    }
    // per node: fixed generation from non-controlling gens and the controlling gen slots
    let n = model.n_nodes();
    let mut fixed = vec![Cx::new(0.0, 0.0); n];
    let mut slots: Vec<Vec<(String, usize)>> = vec![Vec::new(); n];
    for gen in net.gens.values().filter(|g| g.in_service) {
        let Some(term) = &gen.terminal else { continue };
        for (k, &p) in term.phases.iter().enumerate() {
            let Some(i) = model.nodes.get(&term.bus, p) else { continue };
            let controls = gen.voltage_control && model.node_type[i] != NodeType::Pq;
            if controls {
                slots[i].push((gen.id.clone(), k));
                if model.node_type[i] == NodeType::Pv {
                    fixed[i] += Cx::new(gen.s[k].re, 0.0) / model.s_base;
                }
            } else {
                fixed[i] += gen.s[k] / model.s_base;
            }
        }
    }
    for i in 0..n {
        if slots[i].is_empty() {
            continue;
        }
        let share = (sol.sg[i] - fixed[i]) * model.s_base / slots[i].len() as f64;
        for (id, k) in &slots[i] {
            let gen = net.gens.get_mut(id).expect("gen exists");
            gen.s[*k] = match model.node_type[i] {
                NodeType::Pv => Cx::new(gen.s[*k].re, share.im),
                _ => share,
            };
        }
    }
}
