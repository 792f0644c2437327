use std::cell::RefCell;
use std::rc::Rc;

use gridsim_core::time::HOUR;
use gridsim_sim::scripted::{CallLog, Scripted};
use gridsim_sim::simlib::Heartbeat;
use gridsim_sim::simulation::{update_log_sink, SimError, UpdateKind};
use gridsim_sim::{ComponentError, ComponentEvents, LinkContext, SimComponent, Simulation, TimestepRecord};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T0: i64 = 1_600_000_000;

fn log() -> CallLog {
    Rc::new(RefCell::new(Vec::new()))
}

fn calls(log: &CallLog) -> Vec<(String, UpdateKind)> {
    log.borrow().iter().map(|(_, id, k)| (id.clone(), *k)).collect()
}

#[test]
fn chain_ranks() {
    let l = log();
    let mut sim = Simulation::new(0, 10);
    sim.add(Scripted::new("c", l.clone()).depends_on(&["b"])).unwrap();
    sim.add(Scripted::new("b", l.clone()).depends_on(&["a"])).unwrap();
    sim.add(Scripted::new("a", l.clone())).unwrap();
    sim.rank_components().unwrap();
    assert_eq!([sim.rank("a").unwrap(), sim.rank("b").unwrap(), sim.rank("c").unwrap()], [0, 1, 2]);
}

#[test]
fn siblings_share_rank_and_keep_insertion_order() {
    let l = log();
    let mut sim = Simulation::new(0, 10);
    sim.add(Scripted::new("a", l.clone()).at(&[0])).unwrap();
    sim.add(Scripted::new("c", l.clone()).depends_on(&["a"]).at(&[0])).unwrap();
    sim.add(Scripted::new("b", l.clone()).depends_on(&["a"]).at(&[0])).unwrap();
    sim.initialize().unwrap();
    assert_eq!(sim.rank("b").unwrap(), 1);
    assert_eq!(sim.rank("c").unwrap(), 1);
    sim.do_timestep().unwrap();
    let order: Vec<String> = calls(&l).into_iter().map(|c| c.0).collect();
    assert_eq!(order, ["a", "c", "b"]);
}

#[test]
fn cycle_is_reported() {
    let l = log();
    let mut sim = Simulation::new(0, 10);
    sim.add(Scripted::new("a", l.clone()).depends_on(&["b"])).unwrap();
    sim.add(Scripted::new("b", l.clone()).depends_on(&["a"])).unwrap();
    match sim.rank_components() {
        Err(SimError::DependencyCycle(c)) => {
            assert!(c.contains(&"a".to_string()) && c.contains(&"b".to_string()));
            assert_eq!(c.first(), c.last());
        }
        other => panic!("expected a cycle, got {other:?}"),
    }
}

#[test]
fn missing_dependency_names_both_ids() {
    let mut sim = Simulation::new(0, 10);
    sim.add(Scripted::new("a", log()).depends_on(&["ghost"])).unwrap();
    let msg = sim.initialize().unwrap_err().to_string();
    assert!(msg.contains("'a'") && msg.contains("'ghost'"), "{msg}");
}

#[test]
fn duplicate_id_rejected() {
    let mut sim = Simulation::new(0, 10);
    sim.add(Heartbeat::new("h", 1)).unwrap();
    assert!(matches!(sim.add(Heartbeat::new("h", 1)), Err(SimError::DuplicateId(_))));
}

#[test]
fn heartbeat_timesteps() {
    let mut sim = Simulation::new(T0, T0 + HOUR);
    let hb = sim.add(Heartbeat::new("hb", 300)).unwrap();
    sim.initialize().unwrap();
    assert_eq!(hb.borrow().next_update_time(), Some(T0));
    assert_eq!(sim.do_timestep().unwrap(), T0);
    assert_eq!(sim.do_timestep().unwrap(), T0 + 300);
    assert_eq!(sim.do_timestep().unwrap(), T0 + 600);
}

#[test]
fn scheduled_flag_absorbs_and_contingent_runs_once() {
    let l = log();
    let mut sim = Simulation::new(0, 10);
    sim.add(Scripted::new("a", l.clone()).at(&[5]).flags(&["b", "c"])).unwrap();
    sim.add(Scripted::new("b", l.clone()).depends_on(&["a"]).at(&[5])).unwrap();
    sim.add(Scripted::new("c", l.clone()).depends_on(&["b"])).unwrap();
    sim.initialize().unwrap();
    assert_eq!(sim.do_timestep().unwrap(), 5);
    assert_eq!(
        calls(&l),
        [("a".into(), UpdateKind::Scheduled), ("b".into(), UpdateKind::Scheduled), ("c".into(), UpdateKind::Contingent)]
    );
}

#[test]
fn two_flaggers_one_contingent_update() {
    let l = log();
    let mut sim = Simulation::new(0, 10);
    sim.add(Scripted::new("a", l.clone()).at(&[1]).flags(&["d", "d"])).unwrap();
    sim.add(Scripted::new("b", l.clone()).at(&[1]).flags(&["d"])).unwrap();
    sim.add(Scripted::new("d", l.clone()).depends_on(&["a", "b"])).unwrap();
    sim.initialize().unwrap();
    sim.do_timestep().unwrap();
    let d: Vec<_> = calls(&l).into_iter().filter(|c| c.0 == "d").collect();
    assert_eq!(d, [("d".into(), UpdateKind::Contingent)]);
}

#[test]
fn flag_outside_timestep_and_unknown_id() {
    let mut sim = Simulation::new(0, 10);
    sim.add(Heartbeat::new("h", 1)).unwrap();
    sim.initialize().unwrap();
    assert!(matches!(sim.flag_contingent("h"), Err(SimError::NoActiveTimestep(_))));
    assert!(matches!(sim.flag_contingent("nobody"), Err(SimError::UnknownId(_))));
}

#[test]
fn backward_flag_starts_new_round() {
    // c (rank 1) flags a (rank 0) during the contingent phase: a runs in a
    // second round at the same time
    let l = log();
    let mut sim = Simulation::new(0, 10);
    sim.add(Scripted::new("a", l.clone())).unwrap();
    sim.add(Scripted::new("b", l.clone()).at(&[2]).flags(&["c"])).unwrap();
    sim.add(Scripted::new("c", l.clone()).depends_on(&["a"]).flags_at(2, &["a"])).unwrap();
    sim.initialize().unwrap();
    sim.do_timestep().unwrap();
    let order: Vec<String> = calls(&l).into_iter().map(|c| c.0).collect();
    assert_eq!(order, ["b", "c", "a"]);
}

#[test]
fn livelock_is_capped() {
    let l = log();
    let mut sim = Simulation::new(0, 10);
    sim.add(Scripted::new("a", l.clone()).at(&[0]).flags(&["b"])).unwrap();
    sim.add(Scripted::new("b", l.clone()).depends_on(&["a"]).flags(&["a"])).unwrap();
    sim.max_rounds = 7;
    sim.initialize().unwrap();
    assert!(matches!(sim.do_timestep(), Err(SimError::Livelock { time: 0, rounds: 7 })));
}

#[test]
fn run_counts_and_empty_cases() {
    let mut sim = Simulation::new(T0, T0 + 24 * HOUR);
    sim.add(Heartbeat::new("hb", HOUR)).unwrap();
    let seen = Rc::new(RefCell::new(0usize));
    let s = seen.clone();
    sim.add_sink(Box::new(move |rec: &TimestepRecord| {
        *s.borrow_mut() += rec.updates.len();
        Ok(())
    }));
    assert_eq!(sim.run().unwrap(), 25);
    assert_eq!(*seen.borrow(), 25);

    let mut backwards = Simulation::new(T0, T0 - 1);
    backwards.add(Heartbeat::new("hb", HOUR)).unwrap();
    assert_eq!(backwards.run().unwrap(), 0);

    let mut empty = Simulation::new(T0, T0 + HOUR);
    assert_eq!(empty.run().unwrap(), 0);
    assert!(matches!(empty.do_timestep(), Err(SimError::NoPendingUpdate)));
}

#[derive(Default)]
struct SharedBuf(Rc<RefCell<Vec<u8>>>);

impl std::io::Write for SharedBuf {
    fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
        self.0.borrow_mut().extend_from_slice(b);
        Ok(b.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn update_log_csv() {
    let buf = Rc::new(RefCell::new(Vec::new()));
    let l = log();
    let mut sim = Simulation::new(0, 1);
    sim.add(Scripted::new("a", l.clone()).at(&[0]).flags(&["b"])).unwrap();
    sim.add(Scripted::new("b", l.clone()).depends_on(&["a"])).unwrap();
    sim.add_sink(update_log_sink(SharedBuf(buf.clone())));
    sim.run().unwrap();
    let text = String::from_utf8(buf.borrow().clone()).unwrap();
    assert_eq!(text, "time,component_id,kind,rank\n0,a,scheduled,0\n0,b,contingent,1\n");
}

/// Component that exposes a value set during initialize.
struct Source {
    events: ComponentEvents,
    value: i32,
}

impl SimComponent for Source {
    fn id(&self) -> &str {
        "source"
    }
    fn kind(&self) -> &'static str {
        "source"
    }
    fn events(&self) -> &ComponentEvents {
        &self.events
    }
    fn initialize(&mut self, _start: i64) -> Result<(), ComponentError> {
        self.value = 42;
        Ok(())
    }
    fn next_update_time(&self) -> Option<i64> {
        None
    }
    fn update(&mut self, _t: i64, _k: UpdateKind) -> Result<(), ComponentError> {
        Ok(())
    }
}

struct Reader {
    events: ComponentEvents,
    seen: Option<i32>,
}

impl SimComponent for Reader {
    fn id(&self) -> &str {
        "reader"
    }
    fn kind(&self) -> &'static str {
        "reader"
    }
    fn events(&self) -> &ComponentEvents {
        &self.events
    }
    fn link(&mut self, ctx: &LinkContext<'_>) -> Result<(), ComponentError> {
        self.seen = Some(ctx.get::<Source>("source")?.borrow().value);
        Ok(())
    }
    fn next_update_time(&self) -> Option<i64> {
        None
    }
    fn update(&mut self, _t: i64, _k: UpdateKind) -> Result<(), ComponentError> {
        Ok(())
    }
}

#[test]
fn link_pass_sees_initialized_state() {
    let mut sim = Simulation::new(0, 1);
    // reader ranks first, so only the two-pass order makes this work
    let reader = sim.add(Reader { events: ComponentEvents::new("reader"), seen: None }).unwrap();
    sim.add(Source { events: ComponentEvents::new("source"), value: 0 }).unwrap();
    sim.add_dependency("source", "reader");
    sim.initialize().unwrap();
    assert_eq!(reader.borrow().seen, Some(42));
}

#[test]
fn needs_update_event_flags_owner() {
    let l = log();
    let mut sim = Simulation::new(0, 5);
    let b = sim.add(Scripted::new("b", l.clone())).unwrap();
    sim.add(Heartbeat::new("hb", 1)).unwrap();
    sim.initialize().unwrap();
    let needs = b.borrow().events().needs_update.clone();
    sim.add_sink(Box::new(|_| Ok(())));
    sim.component::<Heartbeat>("hb").unwrap().borrow().events().did_update.register("test", move || needs.trigger());
    sim.do_timestep().unwrap();
    assert_eq!(calls(&l), [("b".into(), UpdateKind::Contingent)]);
}

#[test]
fn time_must_advance() {
    struct Stuck(ComponentEvents);
    impl SimComponent for Stuck {
        fn id(&self) -> &str {
            "stuck"
        }
        fn kind(&self) -> &'static str {
            "stuck"
        }
        fn events(&self) -> &ComponentEvents {
            &self.0
        }
        fn next_update_time(&self) -> Option<i64> {
            Some(3)
        }
        fn update(&mut self, _t: i64, _k: UpdateKind) -> Result<(), ComponentError> {
            Ok(())
        }
    }
    let mut sim = Simulation::new(0, 10);
    sim.add(Stuck(ComponentEvents::new("stuck"))).unwrap();
    sim.initialize().unwrap();
    assert!(matches!(sim.do_timestep(), Err(SimError::NonIncreasingTime { .. })));
}

/// Random DAG where component j may depend on any i < j; scheduled updates
/// at random times and forward flags to descendants.
fn random_dag_sim(seed: u64) -> (Simulation, CallLog, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..12);
    let l = log();
    let mut edges = Vec::new();
    let mut desc: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 1..n {
        for i in 0..j {
            if rng.random_bool(0.3) {
                edges.push((i, j));
            }
        }
    }
    // descendants by closure over the edge list
    for i in (0..n).rev() {
        let mut d: Vec<usize> = edges.iter().filter(|e| e.0 == i).map(|e| e.1).collect();
        for &(a, b) in &edges {
            if a == i {
                d.extend(desc[b].clone());
            }
        }
        d.sort_unstable();
        d.dedup();
        desc[i] = d;
    }
    let name = |i: usize| format!("c{i}");
    let mut sim = Simulation::new(0, 50);
    for i in 0..n {
        let deps: Vec<String> = edges.iter().filter(|e| e.1 == i).map(|e| name(e.0)).collect();
        let dep_refs: Vec<&str> = deps.iter().map(String::as_str).collect();
        let times: Vec<i64> = (0..rng.random_range(0..6)).map(|_| rng.random_range(0..50)).collect();
        let mut c = Scripted::new(name(i), l.clone()).depends_on(&dep_refs).at(&times);
        for &t in &times {
            let targets: Vec<String> = desc[i].iter().filter(|_| rng.random_bool(0.5)).map(|&j| name(j)).collect();
            let refs: Vec<&str> = targets.iter().map(String::as_str).collect();
            c = c.flags_at(t, &refs);
        }
        sim.add(c).unwrap();
    }
    (sim, l, edges)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn random_dags_respect_causality_and_replay(seed in any::<u64>()) {
        let (mut sim, l, edges) = random_dag_sim(seed);
        sim.run().unwrap();
        let first = l.borrow().clone();
        let mut times: Vec<i64> = first.iter().map(|c| c.0).collect();
        times.dedup();
        for &t in &times {
            let step: Vec<&String> = first.iter().filter(|c| c.0 == t).map(|c| &c.1).collect();
            // one update per component per timestep
            let mut uniq = step.clone();
            uniq.sort();
            uniq.dedup();
            prop_assert_eq!(uniq.len(), step.len());
            for &(a, b) in &edges {
                let (na, nb) = (format!("c{a}"), format!("c{b}"));
                if let (Some(pa), Some(pb)) = (step.iter().position(|s| **s == na), step.iter().position(|s| **s == nb)) {
                    prop_assert!(pa < pb, "{} updated after its dependent {} at {}", na, nb, t);
                }
            }
        }
        let (mut again, l2, _) = random_dag_sim(seed);
        again.run().unwrap();
        prop_assert_eq!(&first, &*l2.borrow());
    }
}
