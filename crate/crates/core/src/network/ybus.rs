use std::collections::HashMap;
use std::ops::Range;

use super::{CMatrix, Cx, Network, NetworkError, Phase, Units};
use crate::sparse::ComplexCsr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo {
    pub bus: String,
    /// Position of the bus in the network's bus collection.
    pub bus_index: usize,
    pub phase: Phase,
}

/// Flattened (bus, phase) node numbering: buses in insertion order, phases
/// in canonical order within each bus.
#[derive(Debug, Clone, Default)]
pub struct NodeIndex {
    nodes: Vec<NodeInfo>,
    lookup: HashMap<(String, Phase), usize>,
    bus_ranges: Vec<Range<usize>>,
}

impl NodeIndex {
    pub fn build(net: &Network) -> Self {
        let mut idx = NodeIndex::default();
        for (b, bus) in net.buses.values().enumerate() {
            let start = idx.nodes.len();
            for &phase in bus.phases() {
                idx.lookup.insert((bus.id.clone(), phase), idx.nodes.len());
                idx.nodes.push(NodeInfo { bus: bus.id.clone(), bus_index: b, phase });
            }
            idx.bus_ranges.push(start..idx.nodes.len());
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &NodeInfo {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[NodeInfo] {
        &self.nodes
    }

    pub fn get(&self, bus: &str, phase: Phase) -> Option<usize> {
        self.lookup.get(&(bus.to_string(), phase)).copied()
    }

    /// Node range of the `b`-th bus.
    pub fn bus_nodes(&self, b: usize) -> Range<usize> {
        self.bus_ranges[b].clone()
    }

    pub fn terminal_nodes(&self, bus: &str, phases: &[Phase]) -> Result<Vec<usize>, NetworkError> {
        phases
            .iter()
            .map(|&p| {
                self.get(bus, p).ok_or_else(|| NetworkError::UnknownId { kind: "node", id: format!("{bus}.{p}") })
            })
            .collect()
    }
}

/// A branch admittance in per unit with the global nodes of its rows.
#[derive(Debug, Clone)]
pub struct BranchStamp {
    /// Position of the branch in the network's branch collection.
    pub branch: usize,
    pub nodes: Vec<usize>,
    /// Number of rows belonging to terminal 0.
    pub n0: usize,
    pub y: CMatrix,
}

/// Per-unit admittance stamps of all in-service branches.
pub fn branch_stamps(net: &Network, index: &NodeIndex) -> Result<Vec<BranchStamp>, NetworkError> {
    let mut out = Vec::new();
    for (pos, br) in net.branches.values().enumerate() {
        if !br.in_service {
            continue;
        }
        let t0 = br.terminal(0)?;
        let t1 = br.terminal(1)?;
        let mut nodes = index.terminal_nodes(&t0.bus, &t0.phases)?;
        let n0 = nodes.len();
        nodes.extend(index.terminal_nodes(&t1.bus, &t1.phases)?);
        let (mut y, units) = br.model.admittance()?;
        if y.nrows() != nodes.len() {
            return Err(NetworkError::Dimension { expected: nodes.len(), got: y.nrows() });
        }
        if units == Units::Siemens {
            let vb0 = net.bus(&t0.bus)?.v_base;
            let vb1 = net.bus(&t1.bus)?.v_base;
            let vb = |r: usize| if r < n0 { vb0 } else { vb1 };
            for r in 0..y.nrows() {
                for c in 0..y.ncols() {
                    y[(r, c)] *= vb(r) * vb(c) / net.s_base;
                }
            }
        }
        out.push(BranchStamp { branch: pos, nodes, n0, y });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct YBus {
    pub y: ComplexCsr,
    pub nodes: NodeIndex,
}

/// Assembles the per-unit nodal admittance of branches and constant-admittance
/// ZIP parts.
pub fn ybus_assemble(net: &Network) -> Result<YBus, NetworkError> {
    let nodes = NodeIndex::build(net);
    let mut trip: Vec<(usize, usize, Cx)> = Vec::new();
    for stamp in branch_stamps(net, &nodes)? {
        for (r, &nr) in stamp.nodes.iter().enumerate() {
            for (c, &nc) in stamp.nodes.iter().enumerate() {
                let v = stamp.y[(r, c)];
                if v != Cx::new(0.0, 0.0) {
                    trip.push((nr, nc, v));
                }
            }
        }
    }
    for zip in net.zips.values().filter(|z| z.in_service) {
        let term = zip
            .terminal
            .as_ref()
            .ok_or_else(|| NetworkError::UnconnectedTerminal { device: zip.id.clone(), index: 0 })?;
        let tn = nodes.terminal_nodes(&term.bus, &term.phases)?;
        for e in zip.elements().filter(|e| e.y != Cx::new(0.0, 0.0)) {
            let b = tn[e.b - 1];
            trip.push((b, b, e.y));
            if e.a > 0 {
                let a = tn[e.a - 1];
                trip.push((a, a, e.y));
                trip.push((a, b, -e.y));
                trip.push((b, a, -e.y));
            }
        }
    }
    for gen in net.gens.values().filter(|g| g.in_service) {
        if gen.terminal.is_none() {
            return Err(NetworkError::UnconnectedTerminal { device: gen.id.clone(), index: 0 });
        }
    }
    let n = nodes.len();
    Ok(YBus { y: ComplexCsr::from_triplets(n, n, &trip), nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, BranchModel, Bus, CommonBranch, DeviceKind, Zip, ZipPart};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Cx {
        Cx::new(re, im)
    }

    fn two_bus(y: Cx) -> Network {
        let mut net = Network::new(100.0);
        net.add_bus(Bus::new("1", &[Phase::Bal], 1.0).unwrap()).unwrap();
        net.add_bus(Bus::new("2", &[Phase::Bal], 1.0).unwrap()).unwrap();
        net.add_branch(Branch::new("l", BranchModel::Common(CommonBranch::line(y, c(0.0, 0.0))))).unwrap();
        net.connect_terminal(DeviceKind::Branch, "l", 0, "1", &[Phase::Bal]).unwrap();
        net.connect_terminal(DeviceKind::Branch, "l", 1, "2", &[Phase::Bal]).unwrap();
        net
    }

    #[test]
    fn single_line() {
        let y = c(1.0, -10.0);
        let yb = ybus_assemble(&two_bus(y)).unwrap();
        assert_eq!(yb.y.to_dense(), vec![vec![y, -y], vec![-y, y]]);
    }

    #[test]
    fn ground_zip_on_diagonal() {
        let y = c(1.0, -10.0);
        let mut net = two_bus(y);
        let mut z = Zip::new("z", 1);
        z.set_ground(ZipPart::Y, 0, c(0.5, 0.0));
        net.add_zip(z).unwrap();
        net.connect_terminal(DeviceKind::Zip, "z", 0, "2", &[Phase::Bal]).unwrap();
        let d = ybus_assemble(&net).unwrap().y.to_dense();
        assert_eq!(d, vec![vec![y, -y], vec![-y, y + 0.5]]);
    }

    #[test]
    fn delta_zip_stamp() {
        let mut net = Network::new(1.0);
        net.add_bus(Bus::new("b", &Phase::ABC, 1.0).unwrap()).unwrap();
        let mut z = Zip::new("z", 2);
        let y = c(0.3, -0.1);
        z.set(ZipPart::Y, 1, 2, y);
        net.add_zip(z).unwrap();
        net.connect_terminal(DeviceKind::Zip, "z", 0, "b", &[Phase::A, Phase::B]).unwrap();
        let yb = ybus_assemble(&net).unwrap();
        // two-node circuit: element between A and B carries y (V_A − V_B)
        let v = [c(1.0, 0.2), c(-0.4, 0.9), c(0.3, 0.3)];
        let i = yb.y.mul_vec(&v);
        let ia = y * (v[0] - v[1]);
        assert!((i[0] - ia).norm() < 1e-15);
        assert!((i[1] + ia).norm() < 1e-15);
        assert_eq!(i[2], c(0.0, 0.0));
    }

    #[test]
    fn unconnected_terminal_reported() {
        let mut net = two_bus(c(1.0, 0.0));
        net.add_branch(Branch::new("open", BranchModel::Common(CommonBranch::line(c(1.0, 0.0), c(0.0, 0.0))))).unwrap();
        assert!(matches!(ybus_assemble(&net), Err(NetworkError::UnconnectedTerminal { index: 0, .. })));
    }

    fn ring(order: &[usize]) -> Network {
        let mut net = Network::new(100.0);
        for &k in order {
            net.add_bus(Bus::new(format!("b{k}"), &[Phase::Bal], 1.0).unwrap()).unwrap();
        }
        for k in 0..order.len() {
            let id = format!("l{k}");
            let y = c(1.0 + k as f64, -5.0 - k as f64);
            net.add_branch(Branch::new(&id, BranchModel::Common(CommonBranch::line(y, c(0.0, 0.02))))).unwrap();
            net.connect_terminal(DeviceKind::Branch, &id, 0, &format!("b{k}"), &[Phase::Bal]).unwrap();
            net.connect_terminal(DeviceKind::Branch, &id, 1, &format!("b{}", (k + 1) % order.len()), &[Phase::Bal])
                .unwrap();
        }
        net
    }

    #[test]
    fn relabel_permutes_rows_and_columns() {
        let base: Vec<usize> = (0..8).collect();
        let a = ybus_assemble(&ring(&base)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let mut perm = base.clone();
            perm.shuffle(&mut rng);
            let b = ybus_assemble(&ring(&perm)).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    let (pi, pj) = (b.nodes.get(&format!("b{i}"), Phase::Bal).unwrap(), b.nodes.get(&format!("b{j}"), Phase::Bal).unwrap());
                    assert_eq!(a.y.get(i, j), b.y.get(pi, pj));
                }
            }
            // symmetric without phase shifts
            for (r, col, v) in b.y.triplets() {
                assert!((b.y.get(col, r) - v).norm() < 1e-12);
            }
        }
    }
}
