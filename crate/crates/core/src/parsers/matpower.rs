//! Reader for version-2 Matpower case files (baseMVA, bus, gen, branch and
//! optional gencost tables).

use std::collections::HashSet;
use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64 as Cx;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{
    Branch, BranchModel, Bus, BusType, CommonBranch, DeviceKind, Gen, Network, NetworkError, Phase, Zip, ZipPart,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatpowerError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing mpc.{0}")]
    Missing(&'static str),
    #[error("{table} row {row} references unknown bus {bus}")]
    DanglingReference { table: &'static str, row: usize, bus: u64 },
    #[error("duplicate bus {0}")]
    DuplicateBus(u64),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpBus {
    pub id: u64,
    pub bus_type: u8,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vm: f64,
    pub va: f64,
    pub base_kv: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpGen {
    pub bus: u64,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub status: bool,
    pub pmax: f64,
    pub pmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpBranch {
    pub from: u64,
    pub to: u64,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub rate_a: f64,
    pub ratio: f64,
    pub angle: f64,
    pub status: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpGenCost {
    pub model: u8,
    pub startup: f64,
    pub shutdown: f64,
    /// Polynomial coefficients, highest order first.
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatpowerCase {
    pub base_mva: f64,
    pub bus: Vec<MpBus>,
    pub gen: Vec<MpGen>,
    pub branch: Vec<MpBranch>,
    pub gencost: Vec<MpGenCost>,
}

struct Table {
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

fn strip_comment(line: &str) -> &str {
    // '%' inside quoted strings does not occur in the tables we read
    line.find('%').map_or(line, |i| &line[..i])
}

fn parse_number(tok: &str, line: usize) -> Result<f64, MatpowerError> {
    match tok {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| MatpowerError::Syntax { line, msg: format!("bad number '{tok}'") }),
    }
}

fn scan(text: &str) -> Result<(Option<f64>, Vec<(String, Table)>), MatpowerError> {
    let mut base = None;
    let mut tables = Vec::new();
    let mut current: Option<(String, Table)> = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut line = strip_comment(raw.trim_end_matches('\r')).trim();
        if let Some((_, table)) = current.as_mut() {
            let mut closed = false;
            if let Some(i) = line.find(']') {
                closed = true;
                line = &line[..i];
            }
            for row in line.split(';') {
                let toks: Vec<&str> = row.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
                if toks.is_empty() {
                    continue;
                }
                let vals = toks.iter().map(|t| parse_number(t, line_no)).collect::<Result<Vec<_>, _>>()?;
                table.rows.push((line_no, vals));
            }
            if closed {
                tables.push(current.take().expect("open table"));
            }
            continue;
        }
        if line.is_empty() || line.starts_with("function") {
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            return Err(MatpowerError::Syntax { line: line_no, msg: format!("unexpected '{line}'") });
        };
        let (name, value) = rest
            .split_once('=')
            .ok_or_else(|| MatpowerError::Syntax { line: line_no, msg: "expected '='".into() })?;
        let name = name.trim().to_string();
        let value = value.trim();
        if let Some(body) = value.strip_prefix('[') {
            let mut table = Table { line: line_no, rows: Vec::new() };
            let (body, closed) = match body.find(']') {
                Some(i) => (&body[..i], true),
                None => (body, false),
            };
            for row in body.split(';') {
                let toks: Vec<&str> = row.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
                if !toks.is_empty() {
                    let vals = toks.iter().map(|t| parse_number(t, line_no)).collect::<Result<Vec<_>, _>>()?;
                    table.rows.push((line_no, vals));
                }
            }
            if closed {
                tables.push((name, table));
            } else {
                current = Some((name, table));
            }
        } else if name == "baseMVA" {
            base = Some(parse_number(value.trim_end_matches(';').trim(), line_no)?);
        } else if name != "version" {
            warn!("ignoring mpc.{name} (line {line_no})");
        }
    }
    if let Some((_, t)) = current {
        return Err(MatpowerError::Syntax { line: t.line, msg: "unterminated matrix".into() });
    }
    Ok((base, tables))
}

fn need(row: &(usize, Vec<f64>), n: usize) -> Result<(), MatpowerError> {
    if row.1.len() < n {
        return Err(MatpowerError::Syntax { line: row.0, msg: format!("expected at least {n} columns, got {}", row.1.len()) });
    }
    Ok(())
}

fn bus_number(v: f64, line: usize) -> Result<u64, MatpowerError> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(MatpowerError::Syntax { line, msg: format!("bad bus number {v}") });
    }
    Ok(v as u64)
}

pub fn matpower_parse(text: &str) -> Result<MatpowerCase, MatpowerError> {
    let (base, mut tables) = scan(text)?;
    let base_mva = base.ok_or(MatpowerError::Missing("baseMVA"))?;
    let mut take = |name: &str| tables.iter().position(|t| t.0 == name).map(|i| tables.remove(i).1);
    let bus_t = take("bus").ok_or(MatpowerError::Missing("bus"))?;
    let gen_t = take("gen").ok_or(MatpowerError::Missing("gen"))?;
    let branch_t = take("branch").ok_or(MatpowerError::Missing("branch"))?;
    let cost_t = take("gencost");
    for (name, _) in &tables {
        warn!("ignoring mpc.{name}");
    }

    let mut seen = HashSet::new();
    let mut bus = Vec::with_capacity(bus_t.rows.len());
    for row in &bus_t.rows {
        need(row, 13)?;
        let r = &row.1;
        let id = bus_number(r[0], row.0)?;
        if !seen.insert(id) {
            return Err(MatpowerError::DuplicateBus(id));
        }
        bus.push(MpBus {
            id,
            bus_type: r[1] as u8,
            pd: r[2],
            qd: r[3],
            gs: r[4],
            bs: r[5],
            vm: r[7],
            va: r[8],
            base_kv: r[9],
            vmax: r[11],
            vmin: r[12],
        });
    }
    let mut gen = Vec::with_capacity(gen_t.rows.len());
    for (k, row) in gen_t.rows.iter().enumerate() {
        need(row, 10)?;
        let r = &row.1;
        let b = bus_number(r[0], row.0)?;
        if !seen.contains(&b) {
            return Err(MatpowerError::DanglingReference { table: "gen", row: k + 1, bus: b });
        }
        gen.push(MpGen {
            bus: b,
            pg: r[1],
            qg: r[2],
            qmax: r[3],
            qmin: r[4],
            vg: r[5],
            status: r[7] > 0.0,
            pmax: r[8],
            pmin: r[9],
        });
    }
    let mut branch = Vec::with_capacity(branch_t.rows.len());
    for (k, row) in branch_t.rows.iter().enumerate() {
        need(row, 11)?;
        let r = &row.1;
        let (from, to) = (bus_number(r[0], row.0)?, bus_number(r[1], row.0)?);
        for b in [from, to] {
            if !seen.contains(&b) {
                return Err(MatpowerError::DanglingReference { table: "branch", row: k + 1, bus: b });
            }
        }
        branch.push(MpBranch {
            from,
            to,
            r: r[2],
            x: r[3],
            b: r[4],
            rate_a: r[5],
            ratio: r[8],
            angle: r[9],
            status: r[10] > 0.0,
        });
    }
    let mut gencost = Vec::new();
    if let Some(t) = cost_t {
        for row in &t.rows {
            need(row, 4)?;
            let r = &row.1;
            let n = r[3] as usize;
            need(row, 4 + n)?;
            gencost.push(MpGenCost { model: r[0] as u8, startup: r[1], shutdown: r[2], coeffs: r[4..4 + n].to_vec() });
        }
    }
    Ok(MatpowerCase { base_mva, bus, gen, branch, gencost })
}

impl MpGenCost {
    /// Coefficients as [c0, c1, c2], if this is a polynomial of degree ≤ 2.
    pub fn quadratic(&self) -> Option<[f64; 3]> {
        if self.model != 2 {
            return None;
        }
        let mut out = [0.0; 3];
        for (k, c) in self.coeffs.iter().rev().enumerate() {
            if k < 3 {
                out[k] = *c;
            } else if *c != 0.0 {
                return None;
            }
        }
        Some(out)
    }
}

/// Single-phase network: buses `"<n>"`, gens `gen_<k>`, branches
/// `branch_<k>` (1-based row numbers), ZIPs `load_<n>` and `shunt_<n>`.
pub fn case_to_network(case: &MatpowerCase) -> Result<Network, MatpowerError> {
    let mut net = Network::new(case.base_mva);
    let base = case.base_mva;
    let bal = [Phase::Bal];
    for b in &case.bus {
        let bus_type = match b.bus_type {
            3 => BusType::Slack,
            2 => BusType::Pv,
            _ => BusType::Pq,
        };
        let mut bus = Bus::new(b.id.to_string(), &bal, b.base_kv)?.with_type(bus_type).with_bounds(b.vmin, b.vmax)?;
        bus.v_mag_setpoint = b.vm;
        if bus_type == BusType::Slack {
            bus.v_nom = vec![Cx::from_polar(1.0, b.va * PI / 180.0)];
        }
        bus.v = vec![Cx::from_polar(b.vm, b.va * PI / 180.0)];
        net.add_bus(bus)?;
        let id = b.id.to_string();
        if b.pd != 0.0 || b.qd != 0.0 {
            let zid = format!("load_{id}");
            net.add_zip(Zip::wye(&zid, &[], &[], &[Cx::new(b.pd, b.qd) / base]))?;
            net.connect_terminal(DeviceKind::Zip, &zid, 0, &id, &bal)?;
        }
        if b.gs != 0.0 || b.bs != 0.0 {
            let zid = format!("shunt_{id}");
            let mut z = Zip::new(&zid, 1);
            z.set_ground(ZipPart::Y, 0, Cx::new(b.gs, b.bs) / base);
            net.add_zip(z)?;
            net.connect_terminal(DeviceKind::Zip, &zid, 0, &id, &bal)?;
        }
    }
    for (k, g) in case.gen.iter().enumerate() {
        if !g.status {
            continue;
        }
        let gid = format!("gen_{}", k + 1);
        let mut gen = Gen::new(&gid, 1);
        gen.s[0] = Cx::new(g.pg, g.qg);
        gen.p_min = g.pmin;
        gen.p_max = g.pmax;
        gen.q_min = g.qmin;
        gen.q_max = g.qmax;
        gen.v_setpoint = g.vg;
        let bus_type = case.bus.iter().find(|b| b.id == g.bus).map_or(1, |b| b.bus_type);
        gen.voltage_control = matches!(bus_type, 2 | 3);
        if let Some(c) = case.gencost.get(k) {
            match c.quadratic() {
                Some(q) => gen.cost = q,
                None => warn!("{gid}: unsupported cost model, using default"),
            }
        }
        net.add_gen(gen)?;
        net.connect_terminal(DeviceKind::Gen, &gid, 0, &g.bus.to_string(), &bal)?;
    }
    for (k, br) in case.branch.iter().enumerate() {
        if !br.status {
            continue;
        }
        let bid = format!("branch_{}", k + 1);
        let cb = CommonBranch {
            y_series: Cx::new(1.0, 0.0) / Cx::new(br.r, br.x),
            y_shunt: Cx::new(0.0, br.b),
            tap: if br.ratio == 0.0 { 1.0 } else { br.ratio },
            shift_rad: br.angle * PI / 180.0,
        };
        let mut branch = Branch::new(&bid, BranchModel::Common(cb));
        branch.rate = (br.rate_a > 0.0).then_some(br.rate_a);
        net.add_branch(branch)?;
        net.connect_terminal(DeviceKind::Branch, &bid, 0, &br.from.to_string(), &bal)?;
        net.connect_terminal(DeviceKind::Branch, &bid, 1, &br.to.to_string(), &bal)?;
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "function mpc = two\r
mpc.version = '2';\r
mpc.baseMVA = 100;\r
mpc.bus = [\r
  1 3 0 0 0 0 1 1.0 0 135 1 1.1 0.9;\r
  2 1 57 20 0 0 1 1.0 0 135 1 1.1 0.9;  % load bus\r
];\r
mpc.gen = [ 1 0 0 100 -100 1.0 100 1 200 0 0 0 0 0 0 0 0 0 0 0 0 ];\r
mpc.branch = [\r
  1 2 0.01 0.1 0.02 0 0 0 0 0 1 -360 360\r
];\r
";

    #[test]
    fn minimal_case() {
        let case = matpower_parse(TWO_BUS).unwrap();
        assert_eq!(case.base_mva, 100.0);
        assert_eq!((case.bus.len(), case.gen.len(), case.branch.len()), (2, 1, 1));
        assert!(case.gencost.is_empty());
        let net = case_to_network(&case).unwrap();
        let z = net.zips.get("load_2").unwrap();
        assert_eq!(z.s[(0, 1)], Cx::new(0.57, 0.20));
        match &net.branches.get("branch_1").unwrap().model {
            BranchModel::Common(cb) => assert_eq!(cb.tap, 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_gen_bus() {
        let text = TWO_BUS.replace("mpc.gen = [ 1 ", "mpc.gen = [ 99 ");
        assert_eq!(
            matpower_parse(&text),
            Err(MatpowerError::DanglingReference { table: "gen", row: 1, bus: 99 })
        );
    }

    #[test]
    fn syntax_error_has_line() {
        let text = TWO_BUS.replace("57 20", "57 x20");
        assert!(matches!(matpower_parse(&text), Err(MatpowerError::Syntax { line: 6, .. })));
    }

    #[test]
    fn duplicate_bus() {
        let text = TWO_BUS.replace("  2 1 57", "  1 1 57");
        assert_eq!(matpower_parse(&text), Err(MatpowerError::DuplicateBus(1)));
    }

    #[test]
    fn quadratic_cost() {
        let c = MpGenCost { model: 2, startup: 0.0, shutdown: 0.0, coeffs: vec![0.01, 20.0, 5.0] };
        assert_eq!(c.quadratic(), Some([5.0, 20.0, 0.01]));
        let lin = MpGenCost { model: 2, startup: 0.0, shutdown: 0.0, coeffs: vec![3.0, 0.0] };
        assert_eq!(lin.quadratic(), Some([0.0, 3.0, 0.0]));
    }
}
