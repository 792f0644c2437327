//! Primal-dual interior-point method with a monotone barrier.
//!
//! Inequalities get slack variables, bounds get logarithmic barrier terms
//! and each iteration solves the symmetric primal-dual system with a
//! sparse LU. Regularization is chosen by a curvature test instead of an
//! inertia count. Steps use the fraction-to-boundary rule and an ℓ1 merit
//! backtracking search with one second-order correction.

use std::time::Instant;

use log::debug;
use serde::Serialize;

use super::nlp::{Nlp, NlpEval, Triplets};
use super::OpfError;
use crate::sparse::{RealCsr, SparseLu};

#[derive(Debug, Clone, PartialEq)]
pub struct IpmOptions {
    pub mu0: f64,
    pub mu_shrink: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub fraction_to_boundary: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions { mu0: 0.1, mu_shrink: 0.2, tol: 1e-6, max_iter: 100, fraction_to_boundary: 0.995 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OpfStatus {
    Optimal,
    MaxIter,
    InfeasibleDetected,
}

/// KKT residual norms of the internally scaled problem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct KktNorms {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktNorms {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

/// Objective factor and per-row constraint factors applied by the solver.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scaling {
    pub objective: f64,
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct OpfTiming {
    pub build_s: f64,
    pub solve_s: f64,
}

/// Solver output. Multipliers refer to the unscaled problem:
/// ∇f + J_gᵀλ + J_hᵀμ − z_lower + z_upper = 0 at an optimum.
#[derive(Debug, Clone)]
pub struct OpfSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub objective: f64,
    pub status: OpfStatus,
    pub iterations: usize,
    pub kkt: KktNorms,
    pub scaling: Scaling,
    pub timing: OpfTiming,
}

const S_MAX: f64 = 100.0;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_SIGMA: f64 = 1e10;
const PUSH: f64 = 1e-2;

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn norm_1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn push_inside(x: f64, l: f64, u: f64) -> f64 {
    let width = u - l;
    let mut x = x;
    if l.is_finite() {
        let pl = (PUSH * l.abs().max(1.0)).min(if width.is_finite() { PUSH * width } else { f64::INFINITY });
        x = x.max(l + pl);
    }
    if u.is_finite() {
        let pu = (PUSH * u.abs().max(1.0)).min(if width.is_finite() { PUSH * width } else { f64::INFINITY });
        x = x.min(u - pu);
    }
    x
}

fn row_scales(m: usize, jac: &Triplets, free: &[Option<usize>]) -> Vec<f64> {
    let mut big = vec![0.0f64; m];
    for &(r, c, v) in jac {
        if free[c].is_some() {
            big[r] = big[r].max(v.abs());
        }
    }
    big.iter().map(|&b| if b > S_MAX { S_MAX / b } else { 1.0 }).collect()
}

/// Scaled values and derivatives in full-variable indexing.
struct Scaled {
    f: f64,
    grad: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    jac_g: Triplets,
    jac_h: Triplets,
}

impl Scaled {
    fn new(e: NlpEval, sc: &Scaling) -> Self {
        let scale_rows = |t: Triplets, d: &[f64]| t.into_iter().map(|(r, c, v)| (r, c, v * d[r])).collect();
        Scaled {
            f: e.f * sc.objective,
            grad: e.grad.iter().map(|g| g * sc.objective).collect(),
            g: e.g.iter().zip(&sc.eq).map(|(g, d)| g * d).collect(),
            h: e.h.iter().zip(&sc.ineq).map(|(h, d)| h * d).collect(),
            jac_g: scale_rows(e.jac_g, &sc.eq),
            jac_h: scale_rows(e.jac_h, &sc.ineq),
        }
    }
}

/// Standard KKT norms of the scaled problem at (x, y_g, y_h, z).
#[allow(clippy::too_many_arguments)]
fn standard_kkt(
    s: &Scaled,
    x: &[f64],
    lo: &[f64],
    hi: &[f64],
    y_g: &[f64],
    y_h: &[f64],
    zl: &[f64],
    zu: &[f64],
) -> KktNorms {
    let n = x.len();
    let mut r = s.grad.clone();
    for &(row, c, v) in &s.jac_g {
        r[c] += v * y_g[row];
    }
    for &(row, c, v) in &s.jac_h {
        r[c] += v * y_h[row];
    }
    let mut stat = 0.0f64;
    let mut primal = norm_inf(&s.g);
    let mut dual = 0.0f64;
    let mut compl = 0.0f64;
    let mut z_sum = norm_1(y_h);
    let mut nz = y_h.len();
    for i in 0..n {
        if lo[i] >= hi[i] {
            continue;
        }
        stat = stat.max((r[i] - zl[i] + zu[i]).abs());
        primal = primal.max(lo[i] - x[i]).max(x[i] - hi[i]);
        dual = dual.max(-zl[i]).max(-zu[i]);
        if lo[i].is_finite() {
            compl = compl.max((zl[i] * (x[i] - lo[i])).abs());
            z_sum += zl[i].abs();
            nz += 1;
        }
        if hi[i].is_finite() {
            compl = compl.max((zu[i] * (hi[i] - x[i])).abs());
            z_sum += zu[i].abs();
            nz += 1;
        }
    }
    for (j, &hj) in s.h.iter().enumerate() {
        primal = primal.max(hj);
        dual = dual.max(-y_h[j]);
        compl = compl.max((y_h[j] * hj).abs());
    }
    let m = y_g.len() + y_h.len();
    let s_d = ((norm_1(y_g) + z_sum) / ((m + nz).max(1) as f64)).max(S_MAX) / S_MAX;
    let s_c = (z_sum / (nz.max(1) as f64)).max(S_MAX) / S_MAX;
    KktNorms { stationarity: stat / s_d, primal, dual, complementarity: compl / s_c }
}

/// KKT norms of a solution, recomputed from the problem with the scaling
/// the solver used.
pub fn kkt_residual<P: Nlp + ?Sized>(p: &P, sol: &OpfSolution) -> Result<KktNorms, OpfError> {
    let (lo, hi) = p.bounds();
    let sc = &sol.scaling;
    let s = Scaled::new(p.eval(&sol.x)?, sc);
    let unscale = |v: &[f64], d: &[f64]| -> Vec<f64> {
        v.iter().zip(d).map(|(m, d)| if *d > 0.0 { m * sc.objective / d } else { 0.0 }).collect()
    };
    let y_g = unscale(&sol.lambda, &sc.eq);
    let y_h = unscale(&sol.mu, &sc.ineq);
    let zl: Vec<f64> = sol.z_lower.iter().map(|z| z * sc.objective).collect();
    let zu: Vec<f64> = sol.z_upper.iter().map(|z| z * sc.objective).collect();
    Ok(standard_kkt(&s, &sol.x, lo, hi, &y_g, &y_h, &zl, &zu))
}

/// Iteration state over w = (free x, slacks).
struct State {
    w: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

struct Layout {
    n: usize,
    me: usize,
    mi: usize,
    free: Vec<usize>,
    col: Vec<Option<usize>>,
    lw: Vec<f64>,
    uw: Vec<f64>,
    fixed_x: Vec<f64>,
}

impl Layout {
    fn nf(&self) -> usize {
        self.free.len()
    }

    fn nw(&self) -> usize {
        self.free.len() + self.mi
    }

    fn m(&self) -> usize {
        self.me + self.mi
    }

    fn full_x(&self, w: &[f64]) -> Vec<f64> {
        let mut x = self.fixed_x.clone();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = w[k];
        }
        x
    }
}

fn barrier(lay: &Layout, w: &[f64], mu: f64) -> f64 {
    let mut b = 0.0;
    for i in 0..lay.nw() {
        if lay.lw[i].is_finite() {
            b -= mu * (w[i] - lay.lw[i]).ln();
        }
        if lay.uw[i].is_finite() {
            b -= mu * (lay.uw[i] - w[i]).ln();
        }
    }
    b
}

/// Scaled constraint vector c̃(w) = [g̃; h̃ + s].
fn residual_c(lay: &Layout, g: &[f64], h: &[f64], w: &[f64]) -> Vec<f64> {
    let nf = lay.nf();
    let mut c = g.to_vec();
    c.extend(h.iter().enumerate().map(|(j, hj)| hj + w[nf + j]));
    c
}

/// Merit value at w, or None outside the domain.
fn merit<P: Nlp + ?Sized>(p: &P, lay: &Layout, sc: &Scaling, w: &[f64], mu: f64, nu: f64) -> Option<(f64, f64)> {
    let x = lay.full_x(w);
    let (f, g, h) = p.values(&x).ok()?;
    let g: Vec<f64> = g.iter().zip(&sc.eq).map(|(a, d)| a * d).collect();
    let h: Vec<f64> = h.iter().zip(&sc.ineq).map(|(a, d)| a * d).collect();
    let theta = norm_1(&residual_c(lay, &g, &h, w));
    let phi = f * sc.objective + barrier(lay, w, mu);
    phi.is_finite().then_some((phi + nu * theta, theta))
}

fn max_step(v: &[f64], dv: &[f64], lo: &[f64], hi: &[f64], tau: f64) -> f64 {
    let mut a = 1.0f64;
    for i in 0..v.len() {
        if dv[i] < 0.0 && lo[i].is_finite() {
            a = a.min(-tau * (v[i] - lo[i]) / dv[i]);
        }
        if dv[i] > 0.0 && hi[i].is_finite() {
            a = a.min(tau * (hi[i] - v[i]) / dv[i]);
        }
    }
    a
}

fn next_delta(delta: f64, last: f64) -> f64 {
    if delta == 0.0 {
        if last == 0.0 {
            1e-4
        } else {
            (last / 3.0).max(1e-20)
        }
    } else if last == 0.0 {
        100.0 * delta
    } else {
        8.0 * delta
    }
}

pub fn ipm_solve<P: Nlp + ?Sized>(p: &P, opts: &IpmOptions) -> Result<OpfSolution, OpfError> {
    let start = Instant::now();
    let n = p.n_vars();
    let (me, mi) = (p.n_eq(), p.n_ineq());
    let (lo, hi) = p.bounds();
    if let Some(i) = (0..n).find(|&i| lo[i] > hi[i]) {
        return Err(OpfError::InconsistentBounds(format!("variable {i}")));
    }
    let free: Vec<usize> = (0..n).filter(|&i| lo[i] < hi[i]).collect();
    let mut col = vec![None; n];
    for (k, &i) in free.iter().enumerate() {
        col[i] = Some(k);
    }
    let mut x0 = p.initial_point();
    for i in 0..n {
        x0[i] = if col[i].is_some() { push_inside(x0[i], lo[i], hi[i]) } else { lo[i] };
    }
    let e0 = p.eval(&x0)?;
    let gmax = free.iter().fold(0.0f64, |m, &i| m.max(e0.grad[i].abs()));
    let sc = Scaling {
        objective: if gmax > S_MAX { S_MAX / gmax } else { 1.0 },
        eq: row_scales(me, &e0.jac_g, &col),
        ineq: row_scales(mi, &e0.jac_h, &col),
    };
    let nf = free.len();
    let mut lw: Vec<f64> = free.iter().map(|&i| lo[i]).collect();
    let mut uw: Vec<f64> = free.iter().map(|&i| hi[i]).collect();
    lw.extend(std::iter::repeat_n(0.0, mi));
    uw.extend(std::iter::repeat_n(f64::INFINITY, mi));
    let lay = Layout { n, me, mi, free, col, lw, uw, fixed_x: x0.clone() };
    let nw = lay.nw();
    let m = lay.m();

    let mut w: Vec<f64> = lay.free.iter().map(|&i| x0[i]).collect();
    w.extend(e0.h.iter().zip(&sc.ineq).map(|(h, d)| (-h * d).max(PUSH)));
    let init_z = |b: &[f64]| b.iter().map(|v| if v.is_finite() { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let mut st = State { w, y: vec![0.0; m], zl: init_z(&lay.lw), zu: init_z(&lay.uw) };

    let mut mu = opts.mu0;
    let mu_min = opts.tol / 10.0;
    let mut nu = 1.0f64;
    let mut delta_last = 0.0f64;
    let mut iterations = 0;
    let mut status = OpfStatus::MaxIter;
    let mut kkt;
    loop {
        let x = lay.full_x(&st.w);
        let s = Scaled::new(p.eval(&x)?, &sc);
        let (zl_x, zu_x) = full_bound_multipliers(&lay, &st);
        kkt = standard_kkt(&s, &x, lo, hi, &st.y[..me], &st.y[me..], &zl_x, &zu_x);
        debug!("ipm iter {iterations}: f = {:.6e}, mu = {mu:.1e}, kkt = {kkt:?}", s.f / sc.objective);
        if kkt.max() <= opts.tol {
            status = OpfStatus::Optimal;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        if norm_inf(&st.y) > 1e12 {
            status = OpfStatus::InfeasibleDetected;
            break;
        }

        // gradient of the scaled objective and Jacobian of c̃ in w columns
        let mut grad_w = vec![0.0; nw];
        for (k, &i) in lay.free.iter().enumerate() {
            grad_w[k] = s.grad[i];
        }
        let mut jac: Vec<(usize, usize, f64)> = Vec::with_capacity(s.jac_g.len() + s.jac_h.len() + mi);
        jac.extend(s.jac_g.iter().filter_map(|&(r, c, v)| lay.col[c].map(|k| (r, k, v))));
        jac.extend(s.jac_h.iter().filter_map(|&(r, c, v)| lay.col[c].map(|k| (me + r, k, v))));
        jac.extend((0..mi).map(|j| (me + j, nf + j, 1.0)));
        let c = residual_c(&lay, &s.g, &s.h, &st.w);

        // barrier subproblem error and monotone update
        let mut jty = grad_w.clone();
        for &(r, k, v) in &jac {
            jty[k] += v * st.y[r];
        }
        loop {
            let e_mu = subproblem_error(&lay, &st, &jty, &c, mu);
            if e_mu <= KAPPA_EPS * mu && mu > mu_min {
                mu = (mu * opts.mu_shrink).max(mu_min);
            } else {
                break;
            }
        }

        let y_g: Vec<f64> = st.y[..me].iter().zip(&sc.eq).map(|(y, d)| y * d).collect();
        let y_h: Vec<f64> = st.y[me..].iter().zip(&sc.ineq).map(|(y, d)| y * d).collect();
        let hess: Triplets = p
            .hessian(&x, sc.objective, &y_g, &y_h)?
            .into_iter()
            .filter_map(|(r, c, v)| Some((lay.col[r]?, lay.col[c]?, v)))
            .collect();
        let sigma: Vec<f64> = (0..nw)
            .map(|i| {
                let mut sg = 0.0;
                if lay.lw[i].is_finite() {
                    sg += st.zl[i] / (st.w[i] - lay.lw[i]);
                }
                if lay.uw[i].is_finite() {
                    sg += st.zu[i] / (lay.uw[i] - st.w[i]);
                }
                sg
            })
            .collect();
        // ∇φ_μ + Jᵀy
        let mut rd = jty.clone();
        for i in 0..nw {
            if lay.lw[i].is_finite() {
                rd[i] -= mu / (st.w[i] - lay.lw[i]);
            }
            if lay.uw[i].is_finite() {
                rd[i] += mu / (lay.uw[i] - st.w[i]);
            }
        }

        let (lu, dw, dy, delta_w) = solve_kkt(&hess, &sigma, &jac, &rd, &c, nw, m, mu, delta_last)?;
        if delta_w > 0.0 {
            delta_last = delta_w;
        }
        let dzl: Vec<f64> = (0..nw)
            .map(|i| {
                if lay.lw[i].is_finite() {
                    let gap = st.w[i] - lay.lw[i];
                    mu / gap - st.zl[i] - st.zl[i] / gap * dw[i]
                } else {
                    0.0
                }
            })
            .collect();
        let dzu: Vec<f64> = (0..nw)
            .map(|i| {
                if lay.uw[i].is_finite() {
                    let gap = lay.uw[i] - st.w[i];
                    mu / gap - st.zu[i] + st.zu[i] / gap * dw[i]
                } else {
                    0.0
                }
            })
            .collect();
        let tau = opts.fraction_to_boundary.max(1.0 - mu);
        let alpha_max = max_step(&st.w, &dw, &lay.lw, &lay.uw, tau);
        let zero = vec![0.0; nw];
        let inf = vec![f64::INFINITY; nw];
        let alpha_z = max_step(&st.zl, &dzl, &zero, &inf, tau).min(max_step(&st.zu, &dzu, &zero, &inf, tau));

        // ℓ1 merit; the penalty is raised until the step is a descent
        // direction with a margin proportional to the infeasibility
        let theta0 = norm_1(&c);
        let grad_phi: f64 = (0..nw).map(|i| (rd[i] - (jty[i] - grad_w[i])) * dw[i]).sum();
        let mut quad: f64 = hess.iter().map(|&(r, k, v)| dw[r] * v * dw[k]).sum();
        quad += (0..nw).map(|i| sigma[i] * dw[i] * dw[i]).sum::<f64>();
        if theta0 > 0.0 {
            let needed = (grad_phi + 0.5 * quad.max(0.0)) / (0.9 * theta0);
            if nu < needed {
                nu = needed + 1.0;
            }
        }
        let phi0 = s.f + barrier(&lay, &st.w, mu) + nu * theta0;
        let slope = (grad_phi - nu * theta0).min(0.0);

        let trial = |alpha: f64, dir: &[f64]| -> Vec<f64> { st.w.iter().zip(dir).map(|(w, d)| w + alpha * d).collect() };
        let mut alpha = alpha_max;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for k in 0..30 {
            let wt = trial(alpha, &dw);
            if let Some((phi, theta)) = merit(p, &lay, &sc, &wt, mu, nu) {
                if phi <= phi0 + 1e-4 * alpha * slope {
                    accepted = Some((wt, alpha));
                    break;
                }
                if k == 0 && theta > 0.0 {
                    // second-order correction on the full step
                    if let Some(w_soc) = second_order_correction(p, &lay, &sc, &st, &lu, &rd, &c, alpha, &wt, tau) {
                        if let Some((phi_soc, _)) = merit(p, &lay, &sc, &w_soc, mu, nu) {
                            if phi_soc <= phi0 + 1e-4 * alpha * slope {
                                accepted = Some((w_soc, alpha));
                                break;
                            }
                        }
                    }
                }
            }
            alpha *= 0.5;
        }
        let accepted_flag = accepted.is_some();
        let (w_new, alpha) = match accepted {
            Some(a) => a,
            None => {
                let a = alpha_max * 0.5f64.powi(30);
                (trial(a, &dw), a)
            }
        };
        debug!("step {alpha:.3e} of {alpha_max:.3e}, penalty {nu:.3e}, delta_w {delta_w:.1e}, accepted {accepted_flag}");
        st.w = w_new;
        for (y, d) in st.y.iter_mut().zip(&dy) {
            *y += alpha * d;
        }
        for i in 0..nw {
            st.zl[i] += alpha_z * dzl[i];
            st.zu[i] += alpha_z * dzu[i];
            if lay.lw[i].is_finite() {
                let gap = st.w[i] - lay.lw[i];
                st.zl[i] = st.zl[i].clamp(mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * mu / gap);
            }
            if lay.uw[i].is_finite() {
                let gap = lay.uw[i] - st.w[i];
                st.zu[i] = st.zu[i].clamp(mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * mu / gap);
            }
        }
        iterations += 1;
    }

    let x = lay.full_x(&st.w);
    let objective = p.values(&x)?.0;
    let unscale = |v: &[f64], d: &[f64]| -> Vec<f64> { v.iter().zip(d).map(|(y, d)| y * d / sc.objective).collect() };
    let (zl_x, zu_x) = full_bound_multipliers(&lay, &st);
    Ok(OpfSolution {
        lambda: unscale(&st.y[..me], &sc.eq),
        mu: unscale(&st.y[me..], &sc.ineq),
        z_lower: zl_x.iter().map(|z| z / sc.objective).collect(),
        z_upper: zu_x.iter().map(|z| z / sc.objective).collect(),
        x,
        objective,
        status,
        iterations,
        kkt,
        scaling: sc,
        timing: OpfTiming { build_s: 0.0, solve_s: start.elapsed().as_secs_f64() },
    })
}

fn full_bound_multipliers(lay: &Layout, st: &State) -> (Vec<f64>, Vec<f64>) {
    let mut zl = vec![0.0; lay.n];
    let mut zu = vec![0.0; lay.n];
    for (k, &i) in lay.free.iter().enumerate() {
        zl[i] = st.zl[k];
        zu[i] = st.zu[k];
    }
    (zl, zu)
}

fn subproblem_error(lay: &Layout, st: &State, jty: &[f64], c: &[f64], mu: f64) -> f64 {
    let mut stat = 0.0f64;
    let mut compl = 0.0f64;
    let mut z_sum = 0.0;
    let mut nz = 0usize;
    for i in 0..lay.nw() {
        stat = stat.max((jty[i] - st.zl[i] + st.zu[i]).abs());
        if lay.lw[i].is_finite() {
            compl = compl.max((st.zl[i] * (st.w[i] - lay.lw[i]) - mu).abs());
            z_sum += st.zl[i];
            nz += 1;
        }
        if lay.uw[i].is_finite() {
            compl = compl.max((st.zu[i] * (lay.uw[i] - st.w[i]) - mu).abs());
            z_sum += st.zu[i];
            nz += 1;
        }
    }
    let s_d = ((norm_1(&st.y) + z_sum) / ((lay.m() + nz).max(1) as f64)).max(S_MAX) / S_MAX;
    let s_c = (z_sum / (nz.max(1) as f64)).max(S_MAX) / S_MAX;
    (stat / s_d).max(norm_inf(c)).max(compl / s_c)
}

type KktStep = (SparseLu, Vec<f64>, Vec<f64>, f64);

/// Solves [H + Σ + δ_w I, Jᵀ; J, −δ_c I] [dw; dy] = −[rd; c], raising δ_w
/// until the step passes the curvature test.
#[allow(clippy::too_many_arguments)]
fn solve_kkt(
    hess: &Triplets,
    sigma: &[f64],
    jac: &Triplets,
    rd: &[f64],
    c: &[f64],
    nw: usize,
    m: usize,
    mu: f64,
    delta_last: f64,
) -> Result<KktStep, OpfError> {
    let mut delta_w = 0.0f64;
    let mut delta_c = 0.0f64;
    let dim = nw + m;
    loop {
        let mut trip: Triplets = Vec::with_capacity(hess.len() + 2 * jac.len() + dim);
        trip.extend(hess.iter().copied());
        for i in 0..nw {
            trip.push((i, i, sigma[i] + delta_w));
        }
        for &(r, k, v) in jac {
            trip.push((nw + r, k, v));
            trip.push((k, nw + r, v));
        }
        for r in 0..m {
            trip.push((nw + r, nw + r, -delta_c));
        }
        let kmat = RealCsr::from_triplets(dim, dim, &trip);
        let lu = match SparseLu::factor_with_threshold(&kmat, 1e-30) {
            Ok(lu) => lu,
            Err(_) => {
                if delta_c == 0.0 {
                    delta_c = 1e-8 * mu.powf(0.25);
                }
                delta_w = next_delta(delta_w, delta_last);
                if delta_w > 1e40 {
                    return Err(OpfError::NumericalBreakdown("singular KKT system".into()));
                }
                continue;
            }
        };
        let mut rhs: Vec<f64> = rd.iter().chain(c).map(|v| -v).collect();
        lu.solve_in_place(&mut rhs);
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(OpfError::NumericalBreakdown("non-finite step".into()));
        }
        let (dw, dy) = rhs.split_at(nw);
        let mut curv: f64 = hess.iter().map(|&(r, k, v)| dw[r] * v * dw[k]).sum();
        curv += (0..nw).map(|i| (sigma[i] + delta_w) * dw[i] * dw[i]).sum::<f64>();
        curv += delta_c * dy.iter().map(|d| d * d).sum::<f64>();
        let dw2: f64 = dw.iter().map(|d| d * d).sum();
        if curv >= 1e-10 * dw2 {
            return Ok((lu, dw.to_vec(), dy.to_vec(), delta_w));
        }
        delta_w = next_delta(delta_w, delta_last);
        if delta_w > 1e40 {
            return Err(OpfError::NumericalBreakdown("regularization diverged".into()));
        }
    }
}

/// Re-solves with the constraint residual at the trial point folded in and
/// returns the corrected trial point if it stays inside the bounds.
#[allow(clippy::too_many_arguments)]
fn second_order_correction<P: Nlp + ?Sized>(
    p: &P,
    lay: &Layout,
    sc: &Scaling,
    st: &State,
    lu: &SparseLu,
    rd: &[f64],
    c: &[f64],
    alpha: f64,
    w_trial: &[f64],
    tau: f64,
) -> Option<Vec<f64>> {
    // the corrected point is w + a·d_soc with its own fraction-to-boundary step
    let x = lay.full_x(w_trial);
    let (_, g, h) = p.values(&x).ok()?;
    let g: Vec<f64> = g.iter().zip(&sc.eq).map(|(a, d)| a * d).collect();
    let h: Vec<f64> = h.iter().zip(&sc.ineq).map(|(a, d)| a * d).collect();
    let c_trial = residual_c(lay, &g, &h, w_trial);
    let c_soc: Vec<f64> = c.iter().zip(&c_trial).map(|(a, b)| alpha * a + b).collect();
    let mut rhs: Vec<f64> = rd.iter().chain(&c_soc).map(|v| -v).collect();
    lu.solve_in_place(&mut rhs);
    let dw = &rhs[..lay.nw()];
    let a = max_step(&st.w, dw, &lay.lw, &lay.uw, tau);
    Some(st.w.iter().zip(dw).map(|(w, d)| w + a * d).collect())
}
