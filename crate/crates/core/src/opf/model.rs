use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::SVector;
use num_dual::{hessian, jacobian, Dual2SVec64, DualNum, DualSVec64};

use super::extension::{ExtRow, ExtVar, OpfExtension};
use super::nlp::{Nlp, NlpEval, Triplets};
use super::OpfError;
use crate::network::{branch_stamps, BranchStamp, Cx, Network, NodeIndex};
use crate::powerflow::{model_build, NodeType, PfError, ZipTerm};
use crate::sparse::ComplexCsr;

const J: Cx = Cx::new(0.0, 1.0);
const ZERO: Cx = Cx::new(0.0, 0.0);

/// Variables of one in-service generator: one (P, Q) pair per phase, pu.
#[derive(Debug, Clone)]
pub struct GenVars {
    pub id: String,
    pub bus: String,
    pub nodes: Vec<usize>,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    /// c0 + c1 P + c2 P² with P the total in MW.
    pub cost: [f64; 3],
}

/// Variable ordering: magnitudes of all nodes, angles of all nodes, gen
/// active powers, gen reactive powers, then extension variables.
#[derive(Debug, Clone)]
pub struct OpfLayout {
    pub nodes: NodeIndex,
    pub node_type: Vec<NodeType>,
    pub gens: Vec<GenVars>,
    pub s_base: f64,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    /// Number of network variables (before extensions).
    pub n_base: usize,
}

impl OpfLayout {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn v(&self, node: usize) -> usize {
        node
    }

    pub fn theta(&self, node: usize) -> usize {
        self.n_nodes() + node
    }

    /// Complex node voltages of a point.
    pub fn voltages(&self, x: &[f64]) -> Vec<Cx> {
        let n = self.n_nodes();
        (0..n).map(|i| Cx::from_polar(x[i], x[n + i])).collect()
    }
}

/// Apparent-power limit on one conductor at one branch end.
#[derive(Debug, Clone)]
pub struct BranchLimit {
    pub branch: String,
    pub terminal: usize,
    pub conductor: usize,
    stamp: usize,
    row: usize,
    /// Limit per conductor, pu.
    pub s_max: f64,
}

#[derive(Debug, Clone)]
struct LinearEq {
    coefs: Vec<(usize, f64)>,
    rhs: f64,
}

struct ExtBlock {
    ext: Box<dyn OpfExtension>,
    first_var: usize,
    n_vars: usize,
    first_eq: usize,
    n_eq: usize,
    first_ineq: usize,
    n_ineq: usize,
    vars: Vec<ExtVar>,
}

/// Polar AC-OPF as a smooth NLP.
pub struct OpfProblem {
    pub layout: OpfLayout,
    y: ComplexCsr,
    zip_terms: Vec<ZipTerm>,
    stamps: Vec<BranchStamp>,
    pub limits: Vec<BranchLimit>,
    linear: Vec<LinearEq>,
    extensions: Vec<ExtBlock>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x0: Vec<f64>,
    n_eq: usize,
    n_ineq: usize,
    pub build_s: f64,
}

impl std::fmt::Debug for OpfProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpfProblem")
            .field("n_vars", &self.lo.len())
            .field("n_eq", &self.n_eq)
            .field("n_ineq", &self.n_ineq)
            .finish()
    }
}

pub fn opf_build(net: &Network, extensions: Vec<Box<dyn OpfExtension>>) -> Result<OpfProblem, OpfError> {
    let start = Instant::now();
    let model = model_build(net).map_err(|e| match e {
        PfError::NoSlackInIsland(node) => OpfError::MissingSlack(node),
        other => OpfError::PowerFlow(other),
    })?;
    let n = model.n_nodes();
    let s_base = net.s_base;

    let mut v_min = vec![0.0; n];
    let mut v_max = vec![f64::INFINITY; n];
    for (b, bus) in net.buses.values().enumerate() {
        if bus.v_mag_min > bus.v_mag_max {
            return Err(OpfError::InconsistentBounds(bus.id.clone()));
        }
        for i in model.nodes.bus_nodes(b) {
            v_min[i] = bus.v_mag_min;
            v_max[i] = bus.v_mag_max;
        }
    }

    let mut gens = Vec::new();
    let mut next = 2 * n;
    let active: Vec<_> = net.gens.values().filter(|g| g.in_service).collect();
    for g in &active {
        if g.p_min > g.p_max || g.q_min > g.q_max {
            return Err(OpfError::InconsistentBounds(g.id.clone()));
        }
        let term = g.terminal.as_ref().ok_or_else(|| OpfError::Network(crate::network::NetworkError::UnconnectedTerminal {
            device: g.id.clone(),
            index: 0,
        }))?;
        let nodes = model.nodes.terminal_nodes(&term.bus, &term.phases)?;
        let k = nodes.len();
        gens.push(GenVars {
            id: g.id.clone(),
            bus: term.bus.clone(),
            nodes,
            p: (next..next + k).collect(),
            q: Vec::new(),
            cost: g.cost,
        });
        next += k;
    }
    for gv in gens.iter_mut() {
        let k = gv.nodes.len();
        gv.q = (next..next + k).collect();
        next += k;
    }
    let n_base = next;
    let layout = OpfLayout {
        nodes: model.nodes.clone(),
        node_type: model.node_type.clone(),
        gens,
        s_base,
        v_min,
        v_max,
        n_base,
    };

    // bounds and start
    let mut lo = vec![f64::NEG_INFINITY; n_base];
    let mut hi = vec![f64::INFINITY; n_base];
    let mut x0 = vec![0.0; n_base];
    let flat = model.flat_start();
    for i in 0..n {
        lo[i] = layout.v_min[i];
        hi[i] = layout.v_max[i];
        x0[i] = 1.0;
        x0[n + i] = flat[i].arg();
        if model.node_type[i] == NodeType::Slack {
            let a = model.v_ref[i].arg();
            lo[n + i] = a;
            hi[n + i] = a;
            x0[n + i] = a;
        }
    }
    let total_load: f64 = net.zips.values().filter(|z| z.in_service).map(|z| z.s_total().re).sum::<f64>() / s_base;
    let n_gen_phases: usize = layout.gens.iter().map(|g| g.p.len()).sum();
    for (gv, g) in layout.gens.iter().zip(&active) {
        let k = gv.p.len() as f64;
        for (&pi, &qi) in gv.p.iter().zip(&gv.q) {
            lo[pi] = g.p_min / k / s_base;
            hi[pi] = g.p_max / k / s_base;
            lo[qi] = g.q_min / k / s_base;
            hi[qi] = g.q_max / k / s_base;
            x0[pi] = (total_load / n_gen_phases.max(1) as f64).clamp(lo[pi], hi[pi]);
            x0[qi] = 0.0f64.clamp(lo[qi], hi[qi]);
        }
    }

    // equal magnitudes and positive-sequence spacing across the phases of
    // slack buses and of each multi-phase voltage-controlling gen
    let mut linear = Vec::new();
    let mut tied: Vec<(Vec<usize>, bool)> = Vec::new();
    for b in 0..net.buses.len() {
        let range: Vec<usize> = model.nodes.bus_nodes(b).collect();
        if range.len() >= 2 && model.node_type[range[0]] == NodeType::Slack {
            tied.push((range, true));
        }
    }
    for (gv, g) in layout.gens.iter().zip(&active) {
        if g.voltage_control && gv.nodes.len() >= 2 && !tied.iter().any(|(r, _)| r.contains(&gv.nodes[0])) {
            tied.push((gv.nodes.clone(), false));
        }
    }
    for (nodes, slack) in tied {
        let first = nodes[0];
        let nom = |i: usize| {
            let info = model.nodes.node(i);
            let bus = net.buses.get_by_index(info.bus_index).expect("bus exists");
            bus.v_nom[bus.phases().iter().position(|&p| p == info.phase).expect("phase exists")]
        };
        for &i in &nodes[1..] {
            linear.push(LinearEq { coefs: vec![(i, 1.0), (first, -1.0)], rhs: 0.0 });
            if !slack {
                let offset = (nom(i) / nom(first)).arg();
                linear.push(LinearEq { coefs: vec![(n + i, 1.0), (n + first, -1.0)], rhs: offset });
            }
        }
    }

    // branch limits per conductor at both ends
    let stamps = branch_stamps(net, &model.nodes)?;
    let mut limits = Vec::new();
    for (si, st) in stamps.iter().enumerate() {
        let br = net.branches.get_by_index(st.branch).expect("stamp refers to a branch");
        let Some(rate) = br.rate.filter(|r| r.is_finite() && *r > 0.0) else { continue };
        let n1 = st.nodes.len() - st.n0;
        for row in 0..st.nodes.len() {
            let (terminal, conductor, nt) = if row < st.n0 { (0, row, st.n0) } else { (1, row - st.n0, n1) };
            limits.push(BranchLimit {
                branch: br.id.clone(),
                terminal,
                conductor,
                stamp: si,
                row,
                s_max: rate / nt as f64 / s_base,
            });
        }
    }

    let n_eq_base = 2 * n + linear.len();
    let mut problem = OpfProblem {
        layout,
        y: model.y,
        zip_terms: model.zip_terms,
        stamps,
        limits,
        linear,
        extensions: Vec::new(),
        lo,
        hi,
        x0,
        n_eq: n_eq_base,
        n_ineq: 0,
        build_s: 0.0,
    };
    problem.n_ineq = problem.limits.len();
    for ext in extensions {
        problem.add_extension(ext)?;
    }
    problem.build_s = start.elapsed().as_secs_f64();
    Ok(problem)
}

impl OpfProblem {
    fn add_extension(&mut self, ext: Box<dyn OpfExtension>) -> Result<(), OpfError> {
        let vars = ext.variables(&self.layout);
        let first_var = self.lo.len();
        for v in &vars {
            if v.lo > v.hi {
                return Err(OpfError::InconsistentBounds(format!("{}.{}", ext.name(), v.name)));
            }
            self.lo.push(v.lo);
            self.hi.push(v.hi);
            self.x0.push(v.init);
        }
        ext.adjust_bounds(&self.layout, &mut self.lo, &mut self.hi);
        let (mut eq, mut ineq) = (Vec::new(), Vec::new());
        ext.eval(&self.layout, first_var, &self.x0, &mut eq, &mut ineq);
        let block = ExtBlock {
            first_var,
            n_vars: vars.len(),
            first_eq: self.n_eq,
            n_eq: eq.len(),
            first_ineq: self.n_ineq,
            n_ineq: ineq.len(),
            vars,
            ext,
        };
        self.n_eq += block.n_eq;
        self.n_ineq += block.n_ineq;
        self.extensions.push(block);
        Ok(())
    }

    pub fn n_extension_vars(&self) -> usize {
        self.extensions.iter().map(|b| b.n_vars).sum()
    }

    /// Extension variable values of a point, as (extension, variable, value).
    pub fn extension_values(&self, x: &[f64]) -> Vec<(String, String, f64)> {
        self.extensions
            .iter()
            .flat_map(|b| b.vars.iter().enumerate().map(move |(k, v)| (b.ext.name().to_string(), v.name.clone(), x[b.first_var + k])))
            .collect()
    }

    pub fn set_initial_point(&mut self, x: Vec<f64>) {
        assert_eq!(x.len(), self.x0.len());
        self.x0 = x;
    }

    /// Mutable bounds, e.g. to pin variables before solving.
    pub fn bounds_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.lo, &mut self.hi)
    }

    /// Complex withdrawal N_i(V) at every node (branch flows plus ZIP
    /// current and power terms) and the branch currents YV.
    fn withdrawal(&self, v: &[Cx]) -> Result<(Vec<Cx>, Vec<Cx>), OpfError> {
        let iy = self.y.mul_vec(v);
        let mut s: Vec<Cx> = v.iter().zip(&iy).map(|(vi, ii)| vi * ii.conj()).collect();
        for t in &self.zip_terms {
            let vq = t.q.map_or(ZERO, |q| v[q]);
            let w = v[t.p] - vq;
            if w.norm() == 0.0 {
                return Err(OpfError::DomainViolation(format!("zero voltage across ZIP element at node {}", t.p)));
            }
            let unit = w.conj() / w.norm();
            s[t.p] += t.s * v[t.p] / w + t.i.conj() * unit * v[t.p];
            if let Some(q) = t.q {
                s[q] -= t.s * v[q] / w + t.i.conj() * unit * v[q];
            }
        }
        Ok((s, iy))
    }

    fn generation(&self, x: &[f64]) -> Vec<Cx> {
        let mut sg = vec![ZERO; self.layout.n_nodes()];
        for g in &self.layout.gens {
            for (k, &i) in g.nodes.iter().enumerate() {
                sg[i] += Cx::new(x[g.p[k]], x[g.q[k]]);
            }
        }
        sg
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let sb = self.layout.s_base;
        let mut f = 0.0;
        for g in &self.layout.gens {
            let p: f64 = g.p.iter().map(|&i| x[i]).sum::<f64>() * sb;
            f += g.cost[0] + g.cost[1] * p + g.cost[2] * p * p;
        }
        for b in &self.extensions {
            for (k, v) in b.vars.iter().enumerate() {
                let xv = x[b.first_var + k];
                f += v.cost_linear * xv + v.cost_quadratic * xv * xv;
            }
        }
        f
    }

    fn branch_power(&self, lim: &BranchLimit, v: &[Cx]) -> Cx {
        let st = &self.stamps[lim.stamp];
        let i: Cx = (0..st.nodes.len()).map(|m| st.y[(lim.row, m)] * v[st.nodes[m]]).sum();
        v[st.nodes[lim.row]] * i.conj()
    }

    /// Apparent power |S| per branch limit, pu.
    pub fn branch_flows(&self, x: &[f64]) -> Vec<f64> {
        let v = self.layout.voltages(x);
        self.limits.iter().map(|l| self.branch_power(l, &v).norm()).collect()
    }

    /// ∂s/∂(e, f) per global node for a branch-end power.
    fn branch_power_grad(&self, lim: &BranchLimit, v: &[Cx]) -> (Cx, Vec<(usize, Cx, Cx)>) {
        let st = &self.stamps[lim.stamp];
        let a = st.nodes[lim.row];
        let i: Cx = (0..st.nodes.len()).map(|m| st.y[(lim.row, m)] * v[st.nodes[m]]).sum();
        let mut d: Vec<(usize, Cx, Cx)> = Vec::with_capacity(st.nodes.len() + 1);
        let mut add = |node: usize, de: Cx, df: Cx| match d.iter_mut().find(|e| e.0 == node) {
            Some(e) => {
                e.1 += de;
                e.2 += df;
            }
            None => d.push((node, de, df)),
        };
        for (m, &node) in st.nodes.iter().enumerate() {
            let c = v[a] * st.y[(lim.row, m)].conj();
            add(node, c, -J * c);
        }
        add(a, i.conj(), J * i.conj());
        (v[a] * i.conj(), d)
    }
}

/// Derivatives of a function of (e_k, f_k) turned into (v_k, θ_k)
/// derivatives; `cs` is (cos θ_k, sin θ_k).
fn to_polar<T>(cs: (f64, f64), vk: Cx, de: T, df: T) -> (T, T)
where
    T: std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + Copy,
{
    (de * cs.0 + df * cs.1, de * (-vk.im) + df * vk.re)
}

fn angles(x: &[f64], n: usize) -> Vec<(f64, f64)> {
    x[n..2 * n].iter().map(|t| (t.cos(), t.sin())).collect()
}

/// ZIP withdrawal terms for (e_p, f_p, e_q, f_q): [Re T_p, Im T_p, Re T_q, Im T_q]
/// where node p withdraws T_p and node q injects T_q.
fn zip_terms_ad<T: DualNum<Primitive = f64>>(x: &[T], t: &ZipTerm) -> [T; 4] {
    let grounded = t.q.is_none();
    let (ep, fp) = (x[0].clone(), x[1].clone());
    let (eq, fq) = if grounded { (T::zero(), T::zero()) } else { (x[2].clone(), x[3].clone()) };
    let (we, wf) = (ep.clone() - eq.clone(), fp.clone() - fq.clone());
    let w2 = we.clone() * we.clone() + wf.clone() * wf.clone();
    let wn = w2.clone().sqrt();
    // V / W = V conj(W) / |W|²
    let ratio = |ve: T, vf: T| -> (T, T) {
        (
            (ve.clone() * we.clone() + vf.clone() * wf.clone()) / w2.clone(),
            (vf * we.clone() - ve * wf.clone()) / w2.clone(),
        )
    };
    // conj(i) conj(W) / |W| V
    let current = |ve: T, vf: T| -> (T, T) {
        let (ue, uf) = (we.clone() / wn.clone(), -(wf.clone() / wn.clone()));
        let (ie, ifi) = (t.i.re, -t.i.im);
        let (ae, af) = (ue.clone() * ie - uf.clone() * ifi, ue * ifi + uf * ie);
        (ae.clone() * ve.clone() - af.clone() * vf.clone(), ae * vf + af * ve)
    };
    let term = |ve: T, vf: T| -> (T, T) {
        let (re, im) = ratio(ve.clone(), vf.clone());
        let (ce, cf) = current(ve, vf);
        (re.clone() * t.s.re - im.clone() * t.s.im + ce, re * t.s.im + im * t.s.re + cf)
    };
    let (tp_re, tp_im) = term(ep, fp);
    let (tq_re, tq_im) = if grounded { (T::zero(), T::zero()) } else { term(eq, fq) };
    [tp_re, tp_im, tq_re, tq_im]
}

#[derive(Default)]
struct RectHessian {
    blocks: BTreeMap<(usize, usize), [[f64; 2]; 2]>,
}

impl RectHessian {
    fn add(&mut self, k: usize, m: usize, a: usize, b: usize, v: f64) {
        self.blocks.entry((k, m)).or_insert([[0.0; 2]; 2])[a][b] += v;
    }

    /// Adds the Hessian of Re(c · V_i · conj(V_k)).
    fn bilinear(&mut self, i: usize, k: usize, c: Cx) {
        let (a, b) = (c.re, c.im);
        if i == k {
            self.add(i, i, 0, 0, 2.0 * a);
            self.add(i, i, 1, 1, 2.0 * a);
            return;
        }
        self.add(i, k, 0, 0, a);
        self.add(i, k, 0, 1, b);
        self.add(i, k, 1, 0, -b);
        self.add(i, k, 1, 1, a);
        self.add(k, i, 0, 0, a);
        self.add(k, i, 1, 0, b);
        self.add(k, i, 0, 1, -b);
        self.add(k, i, 1, 1, a);
    }
}

impl Nlp for OpfProblem {
    fn n_vars(&self) -> usize {
        self.lo.len()
    }

    fn n_eq(&self) -> usize {
        self.n_eq
    }

    fn n_ineq(&self) -> usize {
        self.n_ineq
    }

    fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn values(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), OpfError> {
        let v = self.layout.voltages(x);
        let (s, _) = self.withdrawal(&v)?;
        let sg = self.generation(x);
        let mut g = Vec::with_capacity(self.n_eq);
        for i in 0..v.len() {
            let r = sg[i] - s[i];
            g.push(r.re);
            g.push(r.im);
        }
        g.extend(self.linear.iter().map(|l| l.coefs.iter().map(|&(c, a)| a * x[c]).sum::<f64>() - l.rhs));
        let mut h: Vec<f64> = self.limits.iter().map(|l| self.branch_power(l, &v).norm_sqr() - l.s_max * l.s_max).collect();
        for b in &self.extensions {
            let (mut eq, mut ineq) = (Vec::new(), Vec::new());
            b.ext.eval(&self.layout, b.first_var, x, &mut eq, &mut ineq);
            check_rows(b, &eq, &ineq)?;
            g.extend(eq.iter().map(|r| r.value));
            h.extend(ineq.iter().map(|r| r.value));
        }
        Ok((self.objective(x), g, h))
    }

    fn eval(&self, x: &[f64]) -> Result<NlpEval, OpfError> {
        let n = self.layout.n_nodes();
        let v = self.layout.voltages(x);
        let (s, iy) = self.withdrawal(&v)?;
        let sg = self.generation(x);
        let sb = self.layout.s_base;
        let cs = angles(x, n);

        let mut grad = vec![0.0; self.lo.len()];
        for gv in &self.layout.gens {
            let p: f64 = gv.p.iter().map(|&i| x[i]).sum::<f64>() * sb;
            let d = sb * (gv.cost[1] + 2.0 * gv.cost[2] * p);
            for &i in &gv.p {
                grad[i] = d;
            }
        }
        for b in &self.extensions {
            for (k, var) in b.vars.iter().enumerate() {
                grad[b.first_var + k] = var.cost_linear + 2.0 * var.cost_quadratic * x[b.first_var + k];
            }
        }

        // rectangular derivatives of the withdrawal N_i with respect to node k
        let mut dn: BTreeMap<(usize, usize), (Cx, Cx)> = BTreeMap::new();
        for i in 0..n {
            for (k, yik) in self.y.row(i) {
                let c = v[i] * yik.conj();
                let e = dn.entry((i, k)).or_insert((ZERO, ZERO));
                e.0 += c;
                e.1 += -J * c;
            }
            let e = dn.entry((i, i)).or_insert((ZERO, ZERO));
            e.0 += iy[i].conj();
            e.1 += J * iy[i].conj();
        }
        let mut jac_g: Triplets = Vec::with_capacity(4 * dn.len() + 16 * self.zip_terms.len());
        for (&(i, k), &(de, df)) in &dn {
            let (dv, dth) = to_polar(cs[k], v[k], de, df);
            // g = S_g − N
            jac_g.push((2 * i, k, -dv.re));
            jac_g.push((2 * i + 1, k, -dv.im));
            jac_g.push((2 * i, n + k, -dth.re));
            jac_g.push((2 * i + 1, n + k, -dth.im));
        }
        for t in &self.zip_terms {
            let nodes = [t.p, t.q.unwrap_or(t.p)];
            let x4 = SVector::<f64, 4>::from([v[t.p].re, v[t.p].im, v[nodes[1]].re, v[nodes[1]].im]);
            let (_, jz) = jacobian(
                |z: SVector<DualSVec64<4>, 4>| SVector::from(zip_terms_ad(z.as_slice(), t)),
                &x4,
            );
            // row r of jz: [Re T_p, Im T_p, Re T_q, Im T_q]; g_p −= T_p, g_q += T_q
            let rows = [(2 * t.p, -1.0, 0), (2 * t.p + 1, -1.0, 1), (2 * nodes[1], 1.0, 2), (2 * nodes[1] + 1, 1.0, 3)];
            for &(row, sign, r) in &rows {
                if t.q.is_none() && r >= 2 {
                    continue;
                }
                for (slot, &node) in nodes.iter().enumerate() {
                    if t.q.is_none() && slot == 1 {
                        continue;
                    }
                    let (dv, dth) = to_polar(cs[node], v[node], jz[(r, 2 * slot)], jz[(r, 2 * slot + 1)]);
                    jac_g.push((row, node, sign * dv));
                    jac_g.push((row, n + node, sign * dth));
                }
            }
        }
        for gv in &self.layout.gens {
            for (k, &i) in gv.nodes.iter().enumerate() {
                jac_g.push((2 * i, gv.p[k], 1.0));
                jac_g.push((2 * i + 1, gv.q[k], 1.0));
            }
        }
        let mut g = Vec::with_capacity(self.n_eq);
        for i in 0..n {
            let r = sg[i] - s[i];
            g.push(r.re);
            g.push(r.im);
        }
        for (r, l) in self.linear.iter().enumerate() {
            g.push(l.coefs.iter().map(|&(c, a)| a * x[c]).sum::<f64>() - l.rhs);
            jac_g.extend(l.coefs.iter().map(|&(c, a)| (2 * n + r, c, a)));
        }

        let mut h = Vec::with_capacity(self.n_ineq);
        let mut jac_h: Triplets = Vec::new();
        for (r, lim) in self.limits.iter().enumerate() {
            let (sp, d) = self.branch_power_grad(lim, &v);
            h.push(sp.norm_sqr() - lim.s_max * lim.s_max);
            for (node, de, df) in d {
                let (ge, gf) = (2.0 * (sp.conj() * de).re, 2.0 * (sp.conj() * df).re);
                let (dv, dth) = to_polar(cs[node], v[node], ge, gf);
                jac_h.push((r, node, dv));
                jac_h.push((r, n + node, dth));
            }
        }
        for b in &self.extensions {
            let (mut eq, mut ineq) = (Vec::new(), Vec::new());
            b.ext.eval(&self.layout, b.first_var, x, &mut eq, &mut ineq);
            check_rows(b, &eq, &ineq)?;
            for (k, row) in eq.into_iter().enumerate() {
                g.push(row.value);
                jac_g.extend(row.grad.into_iter().map(|(c, a)| (b.first_eq + k, c, a)));
            }
            for (k, row) in ineq.into_iter().enumerate() {
                h.push(row.value);
                jac_h.extend(row.grad.into_iter().map(|(c, a)| (b.first_ineq + k, c, a)));
            }
        }
        Ok(NlpEval { f: self.objective(x), grad, g, jac_g, h, jac_h })
    }

    fn hessian(&self, x: &[f64], sigma: f64, lambda: &[f64], mu: &[f64]) -> Result<Triplets, OpfError> {
        let n = self.layout.n_nodes();
        let v = self.layout.voltages(x);
        let iy = self.y.mul_vec(&v);
        let sb = self.layout.s_base;
        let mut out: Triplets = Vec::new();

        for gv in &self.layout.gens {
            let d = 2.0 * sigma * gv.cost[2] * sb * sb;
            if d != 0.0 {
                for &a in &gv.p {
                    for &b in &gv.p {
                        out.push((a, b, d));
                    }
                }
            }
        }
        for b in &self.extensions {
            for (k, var) in b.vars.iter().enumerate() {
                if var.cost_quadratic != 0.0 {
                    let i = b.first_var + k;
                    out.push((i, i, 2.0 * sigma * var.cost_quadratic));
                }
            }
        }

        // network part in rectangular coordinates: Hessian blocks and gradient
        let mut hr = RectHessian::default();
        let mut gr = vec![[0.0f64; 2]; n];
        let lam = |i: usize| Cx::new(lambda[2 * i], lambda[2 * i + 1]);
        for i in 0..n {
            let w = -lam(i).conj();
            if w == ZERO {
                continue;
            }
            for (k, yik) in self.y.row(i) {
                hr.bilinear(i, k, w * yik.conj());
                let c = v[i] * yik.conj();
                gr[k][0] += (w * c).re;
                gr[k][1] += (w * -J * c).re;
            }
            gr[i][0] += (w * iy[i].conj()).re;
            gr[i][1] += (w * J * iy[i].conj()).re;
        }
        for t in &self.zip_terms {
            let q = t.q.unwrap_or(t.p);
            let (lp, lq) = (lam(t.p), if t.q.is_some() { lam(q) } else { ZERO });
            if lp == ZERO && lq == ZERO {
                continue;
            }
            let x4 = SVector::<f64, 4>::from([v[t.p].re, v[t.p].im, v[q].re, v[q].im]);
            let (_, gz, hz) = hessian(
                |z: SVector<Dual2SVec64<4>, 4>| {
                    let [a, b, c, d] = zip_terms_ad(z.as_slice(), t);
                    // Re(conj(Λ_p)(−T_p)) + Re(conj(Λ_q) T_q)
                    -(a * lp.re + b * lp.im) + c * lq.re + d * lq.im
                },
                &x4,
            );
            let slots: &[usize] = if t.q.is_some() { &[t.p, q] } else { &[t.p] };
            for (sa, &na) in slots.iter().enumerate() {
                gr[na][0] += gz[2 * sa];
                gr[na][1] += gz[2 * sa + 1];
                for (sb_, &nb) in slots.iter().enumerate() {
                    for a in 0..2 {
                        for b in 0..2 {
                            hr.add(na, nb, a, b, hz[(2 * sa + a, 2 * sb_ + b)]);
                        }
                    }
                }
            }
        }
        for (r, lim) in self.limits.iter().enumerate() {
            let m = mu[r];
            if m == 0.0 {
                continue;
            }
            let (sp, d) = self.branch_power_grad(lim, &v);
            for &(na, dea, dfa) in &d {
                gr[na][0] += m * 2.0 * (sp.conj() * dea).re;
                gr[na][1] += m * 2.0 * (sp.conj() * dfa).re;
                let da = [dea, dfa];
                for &(nb, deb, dfb) in &d {
                    let db = [deb, dfb];
                    for a in 0..2 {
                        for b in 0..2 {
                            hr.add(na, nb, a, b, 2.0 * m * (da[a].conj() * db[b]).re);
                        }
                    }
                }
            }
            let st = &self.stamps[lim.stamp];
            let a = st.nodes[lim.row];
            let w = 2.0 * m * sp.conj();
            for (k, &node) in st.nodes.iter().enumerate() {
                hr.bilinear(a, node, w * st.y[(lim.row, k)].conj());
            }
        }

        // chain rule to polar coordinates
        let cs = angles(x, n);
        // rows (e, f), columns (v, θ)
        let t_of = |k: usize| [[cs[k].0, -v[k].im], [cs[k].1, v[k].re]];
        for (&(k, m), blk) in &hr.blocks {
            let (tk, tm) = (t_of(k), t_of(m));
            for a in 0..2 {
                for b in 0..2 {
                    let mut val = 0.0;
                    for p in 0..2 {
                        for q in 0..2 {
                            val += tk[p][a] * blk[p][q] * tm[q][b];
                        }
                    }
                    if val != 0.0 {
                        out.push((a * n + k, b * n + m, val));
                    }
                }
            }
        }
        for k in 0..n {
            let (c, s) = cs[k];
            let [ge, gf] = gr[k];
            let vt = -ge * s + gf * c;
            let tt = -ge * v[k].re - gf * v[k].im;
            if vt != 0.0 {
                out.push((k, n + k, vt));
                out.push((n + k, k, vt));
            }
            if tt != 0.0 {
                out.push((n + k, n + k, tt));
            }
        }

        for b in &self.extensions {
            b.ext.hessian(
                &self.layout,
                b.first_var,
                x,
                &lambda[b.first_eq..b.first_eq + b.n_eq],
                &mu[b.first_ineq..b.first_ineq + b.n_ineq],
                &mut out,
            );
        }
        Ok(out)
    }
}

fn check_rows(b: &ExtBlock, eq: &[ExtRow], ineq: &[ExtRow]) -> Result<(), OpfError> {
    if eq.len() != b.n_eq || ineq.len() != b.n_ineq {
        return Err(OpfError::Extension(format!(
            "{}: constraint count changed ({}+{} instead of {}+{})",
            b.ext.name(),
            eq.len(),
            ineq.len(),
            b.n_eq,
            b.n_ineq
        )));
    }
    Ok(())
}
