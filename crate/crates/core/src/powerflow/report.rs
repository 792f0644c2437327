use serde_json::{json, Value};

use super::{PfSolution, PowerFlowModel};
use crate::network::Network;

/// JSON summary of a solved network. Gen powers are read from `net`, so
/// the solution should already be applied.
pub fn pf_report(net: &Network, model: &PowerFlowModel, sol: &PfSolution) -> Value {
    let nodes: Vec<Value> = model
        .nodes
        .nodes()
        .iter()
        .zip(&sol.v)
        .map(|(n, v)| {
            json!({
                "bus": n.bus,
                "phase": n.phase.as_str(),
                "Vmag_pu": v.norm(),
                "Varg_deg": v.arg().to_degrees(),
            })
        })
        .collect();
    let gens: Vec<Value> = net
        .gens
        .values()
        .filter(|g| g.in_service)
        .map(|g| json!({"id": g.id, "P_MW": g.p_total(), "Q_MVAr": g.q_total()}))
        .collect();
    json!({
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residual_current_pu": sol.residual,
        "power_mismatch_pu": sol.power_mismatch,
        "nodes": nodes,
        "gens": gens,
        "timing": {
            "build_s": sol.timing.build_s,
            "solve_s": sol.timing.solve_s,
            "factor_s": sol.timing.factor_s,
        },
    })
}
