use std::time::Instant;

use thiserror::Error;

use crate::network::{ybus_assemble, BusType, Cx, Network, NetworkError, NodeIndex};
use crate::sparse::{ComplexCsr, LinSolveError, RealCsr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("island containing node {0} has no slack bus")]
    NoSlackInIsland(String),
    #[error("zero voltage at node {0} with a constant-power or constant-current term")]
    ZeroVoltage(String),
    #[error("singular jacobian: {0}")]
    SingularJacobian(#[from] LinSolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeType {
    Slack,
    Pv,
    Pq,
}

/// Constant-current and constant-power part of one ZIP element, acting on
/// W = V_p − V_q (q = None means ground).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipTerm {
    pub p: usize,
    pub q: Option<usize>,
    pub i: Cx,
    pub s: Cx,
}

/// Solver-facing data for the current-injection equations, all per unit.
#[derive(Debug, Clone)]
pub struct PowerFlowModel {
    pub y: ComplexCsr,
    pub nodes: NodeIndex,
    pub node_type: Vec<NodeType>,
    /// Specified generation per node. At PV nodes only the real part is
    /// binding; at slack nodes it is ignored by the solver.
    pub sg: Vec<Cx>,
    pub zip_terms: Vec<ZipTerm>,
    /// Voltage magnitude setpoints (slack and PV nodes).
    pub v_set: Vec<f64>,
    /// Unit phasor giving the reference angle of each node.
    pub v_ref: Vec<Cx>,
    /// Island label per node.
    pub island: Vec<usize>,
    pub s_base: f64,
    pub build_s: f64,
    free: Vec<Option<usize>>,
    pv: Vec<usize>,
    pv_slot: Vec<Option<usize>>,
}

impl PowerFlowModel {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of real unknowns: two per non-slack node plus Q at each PV node.
    pub fn n_vars(&self) -> usize {
        2 * self.free.iter().flatten().count() + self.pv.len()
    }

    pub fn pv_nodes(&self) -> &[usize] {
        &self.pv
    }

    pub fn count(&self, t: NodeType) -> usize {
        self.node_type.iter().filter(|&&x| x == t).count()
    }

    /// Reclassifies a PV node as PQ with the given fixed generation.
    pub fn demote_pv(&mut self, node: usize, sg: Cx) {
        self.node_type[node] = NodeType::Pq;
        self.sg[node] = sg;
        self.reindex();
    }

    fn reindex(&mut self) {
        let mut k = 0;
        for (i, t) in self.node_type.iter().enumerate() {
            self.free[i] = (*t != NodeType::Slack).then(|| {
                k += 1;
                k - 1
            });
        }
        self.pv = (0..self.node_type.len()).filter(|&i| self.node_type[i] == NodeType::Pv).collect();
        self.pv_slot = vec![None; self.node_type.len()];
        for (s, &i) in self.pv.iter().enumerate() {
            self.pv_slot[i] = Some(s);
        }
    }

    /// Flat start: unit magnitude (setpoint at SL/PV) along each node's
    /// reference angle, rotated by its island's slack angle.
    pub fn flat_start(&self) -> Vec<Cx> {
        let n = self.n_nodes();
        let mut rot = vec![None; n];
        for i in 0..n {
            let nominal = self.nodes.node(i).phase.nominal();
            if self.node_type[i] == NodeType::Slack && rot[self.island[i]].is_none() && nominal.norm() > 0.0 {
                rot[self.island[i]] = Some(self.v_ref[i] / nominal);
            }
        }
        (0..n)
            .map(|i| match self.node_type[i] {
                NodeType::Slack => self.v_ref[i] * self.v_set[i],
                t => {
                    let r = rot[self.island[i]].unwrap_or(Cx::new(1.0, 0.0));
                    let mag = if t == NodeType::Pq { 1.0 } else { self.v_set[i] };
                    self.v_ref[i] * r * mag
                }
            })
            .collect()
    }

    fn zero_check(&self, v: Cx, node: usize) -> Result<(), PfError> {
        if v.norm() == 0.0 {
            return Err(PfError::ZeroVoltage(node_name(&self.nodes, node)));
        }
        Ok(())
    }

    /// Complex current mismatch per node for generation `sg`.
    pub fn residual_current_with(&self, v: &[Cx], sg: &[Cx]) -> Result<Vec<Cx>, PfError> {
        let yv = self.y.mul_vec(v);
        let mut r: Vec<Cx> = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let mut ri = -yv[i];
            if sg[i] != Cx::new(0.0, 0.0) {
                self.zero_check(v[i], i)?;
                ri += sg[i].conj() / v[i].conj();
            }
            r.push(ri);
        }
        for t in &self.zip_terms {
            let w = v[t.p] - t.q.map_or(Cx::new(0.0, 0.0), |q| v[q]);
            self.zero_check(w, t.p)?;
            let h = t.s.conj() / w.conj() + t.i * w / w.norm();
            r[t.p] -= h;
            if let Some(q) = t.q {
                r[q] += h;
            }
        }
        Ok(r)
    }

    pub fn residual_current(&self, v: &[Cx]) -> Result<Vec<Cx>, PfError> {
        self.residual_current_with(v, &self.sg)
    }

    /// Complex power mismatch per node for generation `sg`.
    pub fn residual_power_with(&self, v: &[Cx], sg: &[Cx]) -> Result<Vec<Cx>, PfError> {
        let mut r: Vec<Cx> = sg.to_vec();
        for (i, ri) in r.iter_mut().enumerate() {
            for (k, yik) in self.y.row(i) {
                *ri -= yik.conj() * v[i] * v[k].conj();
            }
        }
        for t in &self.zip_terms {
            let w = v[t.p] - t.q.map_or(Cx::new(0.0, 0.0), |q| v[q]);
            self.zero_check(w, t.p)?;
            let unit = w.conj() / w.norm();
            r[t.p] -= t.s * v[t.p] / w + t.i.conj() * unit * v[t.p];
            if let Some(q) = t.q {
                r[q] += t.s * v[q] / w + t.i.conj() * unit * v[q];
            }
        }
        Ok(r)
    }

    pub fn residual_power(&self, v: &[Cx]) -> Result<Vec<Cx>, PfError> {
        self.residual_power_with(v, &self.sg)
    }

    /// Generation vector with PV reactive power taken from `q_pv`.
    pub fn sg_with_q(&self, q_pv: &[f64]) -> Vec<Cx> {
        let mut sg = self.sg.clone();
        for (s, &i) in self.pv.iter().enumerate() {
            sg[i] = Cx::new(sg[i].re, q_pv[s]);
        }
        sg
    }

    pub fn pack(&self, v: &[Cx], q_pv: &[f64]) -> Vec<f64> {
        let nf = self.n_vars() - self.pv.len();
        let mut x = vec![0.0; self.n_vars()];
        for (i, vi) in v.iter().enumerate() {
            if let Some(k) = self.free[i] {
                x[2 * k] = vi.re;
                x[2 * k + 1] = vi.im;
            }
        }
        x[nf..].copy_from_slice(q_pv);
        x
    }

    /// Writes unknowns back into `v` (slack entries untouched) and returns PV reactive powers.
    pub fn unpack(&self, x: &[f64], v: &mut [Cx]) -> Vec<f64> {
        let nf = self.n_vars() - self.pv.len();
        for (i, vi) in v.iter_mut().enumerate() {
            if let Some(k) = self.free[i] {
                *vi = Cx::new(x[2 * k], x[2 * k + 1]);
            }
        }
        x[nf..].to_vec()
    }

    /// Real mismatch vector ordered like the unknowns: current rows for every
    /// non-slack node, then |V|² − V_set² for each PV node.
    pub fn mismatch(&self, v: &[Cx], q_pv: &[f64]) -> Result<Vec<f64>, PfError> {
        let r = self.residual_current_with(v, &self.sg_with_q(q_pv))?;
        let nf = self.n_vars() - self.pv.len();
        let mut f = vec![0.0; self.n_vars()];
        for (i, ri) in r.iter().enumerate() {
            if let Some(k) = self.free[i] {
                f[2 * k] = ri.re;
                f[2 * k + 1] = ri.im;
            }
        }
        for (s, &i) in self.pv.iter().enumerate() {
            f[nf + s] = v[i].norm_sqr() - self.v_set[i] * self.v_set[i];
        }
        Ok(f)
    }

    /// Analytic Jacobian of [`Self::mismatch`] with respect to the unknowns
    /// (real and imaginary voltage parts, then PV reactive powers).
    pub fn jacobian_rect(&self, v: &[Cx], q_pv: &[f64]) -> Result<RealCsr, PfError> {
        let sg = self.sg_with_q(q_pv);
        let nf = self.n_vars() - self.pv.len();
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * self.y.nnz() + 8 * self.zip_terms.len());
        // derivative of complex residual i along (e_k, f_k)
        let push = |i: usize, k: usize, de: Cx, df: Cx, trip: &mut Vec<(usize, usize, f64)>| {
            if let (Some(ri), Some(ck)) = (self.free[i], self.free[k]) {
                trip.push((2 * ri, 2 * ck, de.re));
                trip.push((2 * ri, 2 * ck + 1, df.re));
                trip.push((2 * ri + 1, 2 * ck, de.im));
                trip.push((2 * ri + 1, 2 * ck + 1, df.im));
            }
        };
        let j = Cx::new(0.0, 1.0);
        for i in 0..v.len() {
            for (k, yik) in self.y.row(i) {
                push(i, k, -yik, -yik * j, &mut trip);
            }
            if sg[i] != Cx::new(0.0, 0.0) {
                self.zero_check(v[i], i)?;
                let d = sg[i].conj() / (v[i].conj() * v[i].conj());
                push(i, i, -d, d * j, &mut trip);
            }
        }
        for t in &self.zip_terms {
            let w = v[t.p] - t.q.map_or(Cx::new(0.0, 0.0), |q| v[q]);
            self.zero_check(w, t.p)?;
            let a = w.norm();
            let d_s = t.s.conj() / (w.conj() * w.conj());
            let de = -d_s + t.i * (1.0 / a - w * w.re / (a * a * a));
            let df = d_s * j + t.i * (j / a - w * w.im / (a * a * a));
            // residual at p gets −h(W), at q gets +h(W); ∂W/∂V_p = 1, ∂W/∂V_q = −1
            push(t.p, t.p, -de, -df, &mut trip);
            if let Some(q) = t.q {
                push(t.p, q, de, df, &mut trip);
                push(q, t.p, de, df, &mut trip);
                push(q, q, -de, -df, &mut trip);
            }
        }
        for (s, &i) in self.pv.iter().enumerate() {
            let ri = self.free[i].expect("PV nodes are free");
            // ∂/∂Q of conj(P + jQ)/conj(V) = −j / conj(V)
            let dq = -j / v[i].conj();
            trip.push((2 * ri, nf + s, dq.re));
            trip.push((2 * ri + 1, nf + s, dq.im));
            trip.push((nf + s, 2 * ri, 2.0 * v[i].re));
            trip.push((nf + s, 2 * ri + 1, 2.0 * v[i].im));
        }
        let n = self.n_vars();
        Ok(RealCsr::from_triplets(n, n, &trip))
    }
}

pub(crate) fn node_name(nodes: &NodeIndex, i: usize) -> String {
    let n = nodes.node(i);
    format!("{}.{}", n.bus, n.phase)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Node types and generation setpoints derived from buses and in-service gens.
pub fn model_build(net: &Network) -> Result<PowerFlowModel, PfError> {
    let start = Instant::now();
    let yb = ybus_assemble(net)?;
    let nodes = yb.nodes;
    let n = nodes.len();
    let mut node_type = vec![NodeType::Pq; n];
    let mut sg = vec![Cx::new(0.0, 0.0); n];
    let mut v_set = vec![1.0; n];
    let mut v_ref = vec![Cx::new(1.0, 0.0); n];

    for (b, bus) in net.buses.values().enumerate() {
        let range = nodes.bus_nodes(b);
        let controlling: Vec<_> = net.gens_at(&bus.id).filter(|g| g.voltage_control).collect();
        let t = match bus.bus_type {
            BusType::Slack => NodeType::Slack,
            BusType::Pv if !controlling.is_empty() => NodeType::Pv,
            _ => NodeType::Pq,
        };
        let setpoint = controlling.first().map_or(bus.v_mag_setpoint, |g| g.v_setpoint);
        for (k, i) in range.enumerate() {
            node_type[i] = t;
            v_set[i] = setpoint;
            let nom = bus.v_nom[k];
            v_ref[i] = if nom.norm() > 0.0 { nom / nom.norm() } else { Cx::new(1.0, 0.0) };
        }
    }
    for gen in net.gens.values().filter(|g| g.in_service) {
        let term = gen
            .terminal
            .as_ref()
            .ok_or_else(|| NetworkError::UnconnectedTerminal { device: gen.id.clone(), index: 0 })?;
        let tn = nodes.terminal_nodes(&term.bus, &term.phases)?;
        for (k, &i) in tn.iter().enumerate() {
            sg[i] += gen.s[k] / net.s_base;
        }
    }

    let mut uf = UnionFind((0..n).collect());
    for (r, c, _) in yb.y.triplets() {
        uf.union(r, c);
    }
    let mut zip_terms = Vec::new();
    for zip in net.zips.values().filter(|z| z.in_service) {
        let term = zip
            .terminal
            .as_ref()
            .ok_or_else(|| NetworkError::UnconnectedTerminal { device: zip.id.clone(), index: 0 })?;
        let tn = nodes.terminal_nodes(&term.bus, &term.phases)?;
        for e in zip.elements() {
            if e.i == Cx::new(0.0, 0.0) && e.s == Cx::new(0.0, 0.0) {
                continue;
            }
            let (p, q) = if e.a == 0 { (tn[e.b - 1], None) } else { (tn[e.a - 1], Some(tn[e.b - 1])) };
            if let Some(q) = q {
                uf.union(p, q);
            }
            zip_terms.push(ZipTerm { p, q, i: e.i, s: e.s });
        }
    }
    let island: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    let mut has_slack = vec![false; n];
    for i in 0..n {
        if node_type[i] == NodeType::Slack {
            has_slack[island[i]] = true;
        }
    }
    if let Some(i) = (0..n).find(|&i| !has_slack[island[i]]) {
        return Err(PfError::NoSlackInIsland(node_name(&nodes, i)));
    }

    let mut model = PowerFlowModel {
        y: yb.y,
        nodes,
        node_type,
        sg,
        zip_terms,
        v_set,
        v_ref,
        island,
        s_base: net.s_base,
        build_s: 0.0,
        free: vec![None; n],
        pv: Vec::new(),
        pv_slot: Vec::new(),
    };
    model.reindex();
    model.build_s = start.elapsed().as_secs_f64();
    Ok(model)
}
