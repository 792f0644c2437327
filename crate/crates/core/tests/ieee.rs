use std::path::PathBuf;
use std::time::Instant;

use gridsim_core::parsers::{canonical_case_json, case_from_canonical_json, load_matpower, matpower_parse};
use gridsim_core::powerflow::{solve_network, NodeType, PfOptions};

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn reference(case: &str) -> Vec<(String, f64, f64)> {
    let text = std::fs::read_to_string(data(&format!("cases/{case}_pf_solution.csv"))).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

fn check_case(case: &str) {
    let mut net = load_matpower(data(&format!("cases/{case}.m"))).unwrap();
    let t = Instant::now();
    let (_, sol) = solve_network(&mut net, &PfOptions::default()).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    assert!(sol.converged, "{case} did not converge");
    assert!(sol.power_mismatch < 1e-8, "{case}: mismatch {}", sol.power_mismatch);
    assert!(sol.iterations <= 10, "{case}: {} iterations", sol.iterations);
    assert!(elapsed < 1.0, "{case}: {elapsed} s");
    for (bus, vm, va) in reference(case) {
        let v = net.bus(&bus).unwrap().v[0];
        assert!((v.norm() - vm).abs() < 1e-4, "{case} bus {bus}: |V| {} vs {vm}", v.norm());
        assert!((v.arg().to_degrees() - va).abs() < 0.01, "{case} bus {bus}: angle {} vs {va}", v.arg().to_degrees());
    }
}

#[test]
fn ieee14_matches_reference() {
    check_case("ieee14");
}

#[test]
fn ieee30_matches_reference() {
    check_case("ieee30");
}

#[test]
fn ieee57_matches_reference() {
    check_case("ieee57");
}

#[test]
fn ieee57_node_counts() {
    let net = load_matpower(data("cases/ieee57.m")).unwrap();
    let model = gridsim_core::powerflow::model_build(&net).unwrap();
    assert_eq!(model.n_nodes(), 57);
    assert_eq!(model.count(NodeType::Slack), 1);
    assert_eq!(model.count(NodeType::Pv), 6);
    assert_eq!(model.count(NodeType::Pq), 50);
}

#[test]
fn canonical_json_matches_golden() {
    for case in ["ieee14", "ieee30", "ieee57"] {
        let text = std::fs::read_to_string(data(&format!("cases/{case}.m"))).unwrap();
        let json = canonical_case_json(&matpower_parse(&text).unwrap()).unwrap();
        let golden = data(&format!("golden/{case}.json"));
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::write(&golden, &json).unwrap();
        }
        let expected = std::fs::read_to_string(&golden).unwrap();
        assert!(json == expected, "{case}: canonical JSON differs from {}", golden.display());
        let back = case_from_canonical_json(&json).unwrap();
        assert_eq!(back, matpower_parse(&text).unwrap());
        assert!(canonical_case_json(&back).unwrap() == json, "{case}: JSON round trip is not byte-identical");
    }
}
