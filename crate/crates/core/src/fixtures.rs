//! Small networks shared by unit tests.

use num_complex::Complex64 as Cx;

use crate::network::{
    Branch, BranchModel, Bus, BusType, CMatrix, CommonBranch, DeviceKind, Gen, LineParams, Network, Phase, Zip, ZipPart,
};

fn c(re: f64, im: f64) -> Cx {
    Cx::new(re, im)
}

pub fn two_bus(load: Cx) -> Network {
    let mut net = Network::new(100.0);
    net.add_bus(Bus::new("1", &[Phase::Bal], 1.0).unwrap().with_type(BusType::Slack)).unwrap();
    net.add_bus(Bus::new("2", &[Phase::Bal], 1.0).unwrap()).unwrap();
    let y = c(1.0, 0.0) / c(0.01, 0.1);
    net.add_branch(Branch::new("l", BranchModel::Common(CommonBranch::line(y, c(0.0, 0.0))))).unwrap();
    net.connect_terminal(DeviceKind::Branch, "l", 0, "1", &[Phase::Bal]).unwrap();
    net.connect_terminal(DeviceKind::Branch, "l", 1, "2", &[Phase::Bal]).unwrap();
    net.add_zip(Zip::wye("z", &[], &[], &[load])).unwrap();
    net.connect_terminal(DeviceKind::Zip, "z", 0, "2", &[Phase::Bal]).unwrap();
    net
}


/// Three-phase feeder with wye and delta ZIPs (constant-current parts
/// included) and a single-phase PV gen at the far end.
pub fn unbalanced_feeder() -> Network {
    let mut net = Network::new(1.0);
    net.add_bus(Bus::new("src", &Phase::ABC, 4.16).unwrap().with_type(BusType::Slack)).unwrap();
    net.add_bus(Bus::new("mid", &Phase::ABC, 4.16).unwrap()).unwrap();
    net.add_bus(Bus::new("end", &Phase::ABC, 4.16).unwrap().with_type(BusType::Pv)).unwrap();
    let mut z = CMatrix::from_element(4, 4, c(0.05, 0.35));
    for k in 0..4 {
        z[(k, k)] = c(0.35, 0.9);
    }
    let mut ysh = CMatrix::from_element(4, 4, c(0.0, -1e-6));
    for k in 0..4 {
        ysh[(k, k)] = c(0.0, 4e-6);
    }
    for (id, a, b) in [("l1", "src", "mid"), ("l2", "mid", "end")] {
        let line = LineParams { z_per_km: z.clone(), y_shunt_per_km: ysh.clone(), length_km: 1.5, n_neutral: 1 };
        net.add_branch(Branch::new(id, BranchModel::OverheadLine(line))).unwrap();
        net.connect_terminal(DeviceKind::Branch, id, 0, a, &Phase::ABC).unwrap();
        net.connect_terminal(DeviceKind::Branch, id, 1, b, &Phase::ABC).unwrap();
    }
    let mut wye = Zip::wye("wye", &[c(0.05, 0.01)], &[c(0.1, 0.02), c(0.0, 0.0), c(0.08, 0.03)], &[c(0.2, 0.1), c(0.25, 0.05), c(0.1, 0.04)]);
    wye.set_ground(ZipPart::Y, 1, c(0.02, 0.0));
    net.add_zip(wye).unwrap();
    net.connect_terminal(DeviceKind::Zip, "wye", 0, "mid", &Phase::ABC).unwrap();
    let mut delta = Zip::new("delta", 3);
    delta.set(ZipPart::S, 1, 2, c(0.15, 0.05));
    delta.set(ZipPart::S, 2, 3, c(0.1, 0.02));
    delta.set(ZipPart::I, 3, 1, c(0.07, 0.01));
    delta.set(ZipPart::Y, 1, 2, c(0.01, -0.01));
    net.add_zip(delta).unwrap();
    net.connect_terminal(DeviceKind::Zip, "delta", 0, "end", &Phase::ABC).unwrap();
    let mut g = Gen::new("pv", 1);
    g.s[0] = c(0.05, 0.0);
    g.voltage_control = true;
    g.v_setpoint = 0.99;
    net.add_gen(g).unwrap();
    net.connect_terminal(DeviceKind::Gen, "pv", 0, "end", &[Phase::B]).unwrap();
    net
}

