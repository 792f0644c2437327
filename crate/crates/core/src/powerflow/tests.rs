use num_complex::Complex64 as Cx;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::{two_bus, unbalanced_feeder};
use crate::network::{
    Branch, BranchModel, Bus, BusType, CMatrix, CommonBranch, DeviceKind, GenericBranch, Network,
    Phase, Zip, ZipPart,
};

fn c(re: f64, im: f64) -> Cx {
    Cx::new(re, im)
}

// V2 = V1 − conj(S) / (y conj(V2)), damped.
fn fixed_point_v2(y: Cx, s: Cx) -> Cx {
    let mut v2 = c(1.0, 0.0);
    for _ in 0..10_000 {
        let next = c(1.0, 0.0) - s.conj() / (y * v2.conj());
        v2 = v2 * 0.5 + next * 0.5;
    }
    v2
}

#[test]
fn two_bus_matches_fixed_point() {
    let s = c(0.1, 0.05);
    let model = model_build(&two_bus(s)).unwrap();
    assert_eq!((model.count(NodeType::Slack), model.count(NodeType::Pq), model.count(NodeType::Pv)), (1, 1, 0));
    let sol = nr_solve(&model, &PfOptions::default()).unwrap();
    assert!(sol.converged && sol.iterations <= 5);
    let v2 = fixed_point_v2(c(1.0, 0.0) / c(0.01, 0.1), s);
    assert!((sol.v[1] - v2).norm() < 1e-10);
    let r = model.residual_current_with(&sol.v, &sol.sg).unwrap();
    assert!(r.iter().all(|x| x.norm() < 1e-10));
    // the oracle point zeroes the residual directly
    let rr = model.residual_current(&[c(1.0, 0.0), v2]).unwrap();
    assert!(rr[1].norm() < 1e-12);
}

#[test]
fn zero_load_converges_immediately() {
    let model = model_build(&two_bus(c(0.0, 0.0))).unwrap();
    let sol = nr_solve(&model, &PfOptions::default()).unwrap();
    assert!(sol.converged && sol.iterations <= 1);
    assert!(sol.v.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-12));
    assert!(model.residual_current(&sol.v).unwrap()[1].norm() < 1e-15);
}

#[test]
fn zero_voltage_reported() {
    let model = model_build(&two_bus(c(0.1, 0.0))).unwrap();
    assert_eq!(model.residual_current(&[c(1.0, 0.0), c(0.0, 0.0)]), Err(PfError::ZeroVoltage("2.BAL".into())));
}

#[test]
fn island_without_slack() {
    let mut net = two_bus(c(0.1, 0.0));
    net.add_bus(Bus::new("3", &[Phase::Bal], 1.0).unwrap()).unwrap();
    assert_eq!(model_build(&net).unwrap_err(), PfError::NoSlackInIsland("3.BAL".into()));
}

#[test]
fn zero_network_has_zero_power_residual() {
    let mut net = Network::new(1.0);
    net.add_bus(Bus::new("a", &Phase::ABC, 1.0).unwrap().with_type(BusType::Slack)).unwrap();
    let model = model_build(&net).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<Cx> = (0..3).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    assert!(model.residual_power(&v).unwrap().iter().all(|r| r.norm() == 0.0));
}

#[test]
fn constant_power_hand_expansion() {
    // 2 nodes, line y, load S at node 2: ΔS_2 = 0 − conj(y)(V2 conj(V2) − V2 conj(V1)) − S
    let s = c(0.3, 0.1);
    let model = model_build(&two_bus(s)).unwrap();
    let y = c(1.0, 0.0) / c(0.01, 0.1);
    let (v1, v2) = (c(1.01, 0.02), c(0.95, -0.07));
    let expected = -(y.conj() * (v2 * v2.conj() - v2 * v1.conj())) - s;
    let got = model.residual_power(&[v1, v2]).unwrap()[1];
    assert!((got - expected).norm() < 1e-12);
}

/// Three-phase feeder: grounded-neutral line, wye and delta loads with all
/// ZIP parts, and a single-phase PV generator.
fn fd_jacobian_check(model: &PowerFlowModel, v: &[Cx], q: &[f64]) -> f64 {
    let jac = model.jacobian_rect(v, q).unwrap().to_dense();
    let x0 = model.pack(v, q);
    let h = 1e-7;
    let mut worst: f64 = 0.0;
    let scale = jac.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
    for col in 0..x0.len() {
        let eval = |d: f64| {
            let mut x = x0.clone();
            x[col] += d;
            let mut vv = v.to_vec();
            let qq = model.unpack(&x, &mut vv);
            model.mismatch(&vv, &qq).unwrap()
        };
        let (fp, fm) = (eval(h), eval(-h));
        for row in 0..x0.len() {
            let fd = (fp[row] - fm[row]) / (2.0 * h);
            worst = worst.max((fd - jac[row][col]).abs() / scale);
        }
    }
    worst
}

#[test]
fn jacobian_matches_finite_differences() {
    let model = model_build(&unbalanced_feeder()).unwrap();
    assert_eq!(model.count(NodeType::Pv), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let flat = model.flat_start();
    for _ in 0..10 {
        let v: Vec<Cx> = flat
            .iter()
            .map(|v| v * Cx::from_polar(rng.random_range(0.9..1.1), rng.random_range(-0.2..0.2)))
            .collect();
        let q: Vec<f64> = model.pv_nodes().iter().map(|_| rng.random_range(-0.5..0.5)).collect();
        assert!(fd_jacobian_check(&model, &v, &q) < 1e-6);
    }
}

#[test]
fn linear_network_jacobian_is_block_form() {
    let mut net = two_bus(c(0.0, 0.0));
    net.zips.remove("z").unwrap();
    let model = model_build(&net).unwrap();
    let j = model.jacobian_rect(&model.flat_start(), &[]).unwrap().to_dense();
    let y22 = model.y.get(1, 1);
    // mismatch is −Y V, so the block is −[[G, −B], [B, G]]
    assert_eq!(j, vec![vec![-y22.re, y22.im], vec![-y22.im, -y22.re]]);
}

#[test]
fn constant_current_radial_derivative_vanishes() {
    let mut net = two_bus(c(0.0, 0.0));
    let z = net.zip_mut("z").unwrap();
    z.set_ground(ZipPart::S, 0, c(0.0, 0.0));
    z.set_ground(ZipPart::I, 0, c(0.2, 0.1));
    let mut model = model_build(&net).unwrap();
    model.y = crate::sparse::ComplexCsr::from_triplets(2, 2, &[]);
    let v = [c(1.0, 0.0), c(0.9, -0.2)];
    let j = model.jacobian_rect(&v, &[]).unwrap().to_dense();
    let dir = [v[1].re, v[1].im];
    for row in &j {
        assert!((row[0] * dir[0] + row[1] * dir[1]).abs() < 1e-14);
    }
}

#[test]
fn power_form_is_v_times_conj_current() {
    let model = model_build(&unbalanced_feeder()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let v: Vec<Cx> = model
            .flat_start()
            .iter()
            .map(|v| v * Cx::from_polar(rng.random_range(0.8..1.2), rng.random_range(-0.3..0.3)))
            .collect();
        let ri = model.residual_current(&v).unwrap();
        let rs = model.residual_power(&v).unwrap();
        for k in 0..v.len() {
            assert!((rs[k] - v[k] * ri[k].conj()).norm() < 1e-12);
        }
    }
}

#[test]
fn unbalanced_feeder_solves_with_pv() {
    let mut net = unbalanced_feeder();
    let (model, sol) = solve_network(&mut net, &PfOptions::default()).unwrap();
    assert!(sol.converged, "residual {}", sol.residual);
    assert!(sol.residual <= 1e-8);
    for &i in model.pv_nodes() {
        assert!((sol.v[i].norm() - model.v_set[i]).abs() <= 1e-8);
    }
    let r = model.residual_power_with(&sol.v, &sol.sg).unwrap();
    assert!(r.iter().all(|x| x.norm() < 1e-8));
    // the gen Q written back balances its node
    let g = net.gens.get("pv").unwrap();
    let node = model.nodes.get("end", Phase::B).unwrap();
    assert!((g.s[0].im - sol.sg[node].im).abs() < 1e-12);
}

#[test]
fn conservation_on_feeder() {
    let mut net = unbalanced_feeder();
    let (model, sol) = solve_network(&mut net, &PfOptions::default()).unwrap();
    let flows = recover_flows(&net, &model.nodes, &sol.v).unwrap();
    let losses: Cx = flows.iter().map(|f| f.loss()).sum();
    let gen: Cx = sol.sg.iter().sum();
    let zero = vec![c(0.0, 0.0); sol.v.len()];
    // consumption of ZIPs = power mismatch with zero generation and no branches
    let mut loads_only = model.clone();
    loads_only.y = crate::sparse::ComplexCsr::from_triplets(sol.v.len(), sol.v.len(), &[]);
    let mut load: Cx = -loads_only.residual_power_with(&sol.v, &zero).unwrap().iter().sum::<Cx>();
    for z in net.zips.values() {
        let t = z.terminal.as_ref().unwrap();
        let tn = model.nodes.terminal_nodes(&t.bus, &t.phases).unwrap();
        for e in z.elements() {
            let w = sol.v[tn[e.b - 1]] - if e.a == 0 { c(0.0, 0.0) } else { sol.v[tn[e.a - 1]] };
            load += w * (e.y * w).conj();
        }
    }
    assert!((gen - load - losses).norm() < 1e-8);
}

#[test]
fn lossless_line_flows_cancel() {
    let mut net = Network::new(1.0);
    net.add_bus(Bus::new("1", &[Phase::Bal], 1.0).unwrap().with_type(BusType::Slack)).unwrap();
    net.add_bus(Bus::new("2", &[Phase::Bal], 1.0).unwrap()).unwrap();
    net.add_branch(Branch::new("l", BranchModel::Common(CommonBranch::line(c(0.0, -10.0), c(0.0, 0.0))))).unwrap();
    let y0 = CMatrix::zeros(2, 2);
    net.add_branch(Branch::new("open", BranchModel::Generic(GenericBranch::new(y0, [1, 1]).unwrap()))).unwrap();
    for id in ["l", "open"] {
        net.connect_terminal(DeviceKind::Branch, id, 0, "1", &[Phase::Bal]).unwrap();
        net.connect_terminal(DeviceKind::Branch, id, 1, "2", &[Phase::Bal]).unwrap();
    }
    net.add_zip(Zip::wye("z", &[], &[], &[c(0.5, 0.2)])).unwrap();
    net.connect_terminal(DeviceKind::Zip, "z", 0, "2", &[Phase::Bal]).unwrap();
    let (model, sol) = solve_network(&mut net, &PfOptions::default()).unwrap();
    let flows = recover_flows(&net, &model.nodes, &sol.v).unwrap();
    assert!((flows[0].s[0][0].re + flows[0].s[1][0].re).abs() < 1e-12);
    assert!(flows[1].s.iter().flatten().all(|s| s.norm() == 0.0));
}

#[test]
fn slack_rotation_rotates_solution() {
    let base = unbalanced_feeder();
    let mut rotated = base.clone();
    let rot = Cx::from_polar(1.0, 30f64.to_radians());
    let src = rotated.buses.get_mut("src").unwrap();
    for v in src.v_nom.iter_mut() {
        *v *= rot;
    }
    for net in [&base, &rotated] {
        assert!(model_build(net).is_ok());
    }
    let s0 = nr_solve(&model_build(&base).unwrap(), &PfOptions::default()).unwrap();
    let s1 = nr_solve(&model_build(&rotated).unwrap(), &PfOptions::default()).unwrap();
    for (a, b) in s0.v.iter().zip(&s1.v) {
        assert!((a * rot - b).norm() < 1e-9);
    }
}

#[test]
fn max_iter_reports_best_iterate() {
    let model = model_build(&unbalanced_feeder()).unwrap();
    let sol = nr_solve(&model, &PfOptions { max_iter: 1, ..PfOptions::default() }).unwrap();
    assert!(!sol.converged);
    assert_eq!(sol.iterations, 1);
    assert!(sol.residual.is_finite());
}
