use serde_json::{json, Value};

use super::{ybus_assemble, BranchModel, CMatrix, Cx, Network, NetworkError, Terminal};

fn cx(v: Cx) -> Value {
    json!([v.re, v.im])
}

fn matrix(m: &CMatrix) -> Value {
    Value::Array((0..m.nrows()).map(|r| Value::Array((0..m.ncols()).map(|c| cx(m[(r, c)])).collect())).collect())
}

fn terminal(t: &Option<Terminal>) -> Value {
    match t {
        Some(t) => json!({"bus": t.bus, "phases": t.phases.iter().map(|p| p.as_str()).collect::<Vec<_>>()}),
        None => Value::Null,
    }
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Diagnostic dump of a network and its Y-bus triplets. Object keys are
/// sorted, so equal networks give identical text.
pub fn network_dump(net: &Network) -> Result<Value, NetworkError> {
    let buses: Vec<Value> = net
        .buses
        .values()
        .map(|b| {
            json!({
                "id": b.id,
                "phases": b.phases().iter().map(|p| p.as_str()).collect::<Vec<_>>(),
                "type": b.bus_type.as_str(),
                "v_base_kv": b.v_base,
                "v_nom": b.v_nom.iter().map(|v| cx(*v)).collect::<Vec<_>>(),
                "v_setpoint": b.v_mag_setpoint,
                "v_min": finite(b.v_mag_min),
                "v_max": finite(b.v_mag_max),
            })
        })
        .collect();
    let gens: Vec<Value> = net
        .gens
        .values()
        .map(|g| {
            json!({
                "id": g.id,
                "terminal": terminal(&g.terminal),
                "s_mva": g.s.iter().map(|v| cx(*v)).collect::<Vec<_>>(),
                "p_bounds": [finite(g.p_min), finite(g.p_max)],
                "q_bounds": [finite(g.q_min), finite(g.q_max)],
                "v_setpoint": g.v_setpoint,
                "voltage_control": g.voltage_control,
                "cost": g.cost,
                "in_service": g.in_service,
            })
        })
        .collect();
    let zips: Vec<Value> = net
        .zips
        .values()
        .map(|z| {
            json!({
                "id": z.id,
                "terminal": terminal(&z.terminal),
                "elements": z.elements().map(|e| json!({
                    "a": e.a, "b": e.b, "y": cx(e.y), "i": cx(e.i), "s": cx(e.s)
                })).collect::<Vec<_>>(),
                "in_service": z.in_service,
            })
        })
        .collect();
    let branches: Vec<Value> = net
        .branches
        .values()
        .map(|b| {
            let model = match &b.model {
                BranchModel::Common(cb) => json!({
                    "y_series": cx(cb.y_series), "y_shunt": cx(cb.y_shunt), "tap": cb.tap, "shift_rad": cb.shift_rad
                }),
                other => match other.admittance() {
                    Ok((y, _)) => json!({"y": matrix(&y)}),
                    Err(e) => json!({"error": e.to_string()}),
                },
            };
            json!({
                "id": b.id,
                "kind": b.model.kind(),
                "terminals": [terminal(&b.terminals[0]), terminal(&b.terminals[1])],
                "model": model,
                "rate_mva": b.rate,
                "in_service": b.in_service,
            })
        })
        .collect();
    let yb = ybus_assemble(net)?;
    let nodes: Vec<Value> = yb.nodes.nodes().iter().map(|n| json!([n.bus, n.phase.as_str()])).collect();
    let triplets: Vec<Value> = yb.y.triplets().map(|(r, c, v)| json!([r, c, v.re, v.im])).collect();
    Ok(json!({
        "s_base_mva": net.s_base,
        "frequency_hz": net.frequency,
        "buses": buses,
        "gens": gens,
        "zips": zips,
        "branches": branches,
        "nodes": nodes,
        "ybus": triplets,
    }))
}
