use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use gridsim_core::network::{BusType, Network};
use gridsim_core::opf::{ipm_solve, opf_build, IpmOptions, Nlp, OpfExtension, OpfProblem, OpfStatus, VoltageSlack};
use gridsim_core::time::Time;
use log::warn;

use super::{fmt_f, Inverter, QMode, SimLibError, SimNetwork};
use crate::simulation::{ComponentError, ComponentEvents, LinkContext, SimComponent, SimHandle, UpdateKind};

#[derive(Debug, Clone, PartialEq)]
pub struct VoltVarResult {
    pub time: Time,
    pub status: Option<OpfStatus>,
    pub objective: f64,
    pub iterations: usize,
    /// Largest voltage-bound slack in the solution, pu.
    pub max_slack: f64,
}

/// Sets inverter reactive power from an OPF after each network solve.
/// Conventional gens keep their active power and voltage setpoints; only
/// the slack absorbs the change in losses. Voltage bounds are softened
/// with penalised slacks so the OPF stays feasible.
pub struct VoltVarOpf {
    id: String,
    events: ComponentEvents,
    network_id: String,
    inverter_ids: Vec<String>,
    pub weight: f64,
    pub enabled: bool,
    pub ipm: IpmOptions,
    network: Option<Rc<RefCell<Network>>>,
    inverters: Vec<Rc<RefCell<Inverter>>>,
    handle: Option<SimHandle>,
    last_run: Rc<Cell<Option<Time>>>,
    results: Vec<VoltVarResult>,
}

impl VoltVarOpf {
    pub fn new(id: impl Into<String>, network_id: impl Into<String>, inverter_ids: Vec<String>, weight: f64) -> Self {
        let id = id.into();
        VoltVarOpf {
            events: ComponentEvents::new(&id),
            id,
            network_id: network_id.into(),
            inverter_ids,
            weight,
            enabled: true,
            ipm: IpmOptions::default(),
            network: None,
            inverters: Vec::new(),
            handle: None,
            last_run: Rc::new(Cell::new(None)),
            results: Vec::new(),
        }
    }

    pub fn results(&self) -> &[VoltVarResult] {
        &self.results
    }

    /// The dispatch problem seen by the controller, built from the live
    /// network state. Inverter ratings in kVA are converted to MVA here.
    fn control_network(&self, net: &Network) -> Network {
        let mut net = net.clone();
        let inverter_gens: HashMap<String, (f64, f64)> = self
            .inverters
            .iter()
            .map(|inv| {
                let inv = inv.borrow();
                (inv.gen_id().to_string(), (inv.p_kw() / 1000.0, inv.q_limit(inv.p_kw()) / 1000.0))
            })
            .collect();
        let slack_buses: HashSet<String> =
            net.buses.values().filter(|b| b.bus_type == BusType::Slack).map(|b| b.id.clone()).collect();
        let mut pinned: HashMap<String, f64> = HashMap::new();
        for gen in net.gens.values_mut().filter(|g| g.in_service) {
            let Some(bus) = gen.terminal.as_ref().map(|t| t.bus.clone()) else { continue };
            if let Some(&(p, qmax)) = inverter_gens.get(&gen.id) {
                (gen.p_min, gen.p_max) = (p, p);
                (gen.q_min, gen.q_max) = (-qmax, qmax);
                gen.voltage_control = false;
                continue;
            }
            (gen.q_min, gen.q_max) = (f64::NEG_INFINITY, f64::INFINITY);
            if slack_buses.contains(&bus) {
                (gen.p_min, gen.p_max) = (f64::NEG_INFINITY, f64::INFINITY);
            } else {
                let p = gen.p_total();
                (gen.p_min, gen.p_max) = (p, p);
            }
            if gen.voltage_control {
                pinned.entry(bus).or_insert(gen.v_setpoint);
            }
        }
        for bus in net.buses.values_mut() {
            if let Some(&v) = pinned.get(&bus.id) {
                (bus.v_mag_min, bus.v_mag_max) = (v, v);
            }
        }
        net
    }

    fn solve(&mut self, t: Time) -> Result<(), SimLibError> {
        let Some(net_rc) = self.network.clone() else { return Ok(()) };
        let ctrl = self.control_network(&net_rc.borrow());
        let ext: Vec<Box<dyn OpfExtension>> = vec![Box::new(VoltageSlack::new(self.weight))];
        let mut problem = opf_build(&ctrl, ext)?;
        warm_start(&mut problem, &ctrl);
        let outcome = ipm_solve(&problem, &self.ipm);
        let sol = match outcome {
            Ok(sol) => sol,
            Err(e) => {
                warn!("{}: OPF failed at {t}: {e}", self.id);
                self.results.push(VoltVarResult { time: t, status: None, objective: f64::NAN, iterations: 0, max_slack: f64::NAN });
                return Ok(());
            }
        };
        let max_slack = problem.extension_values(&sol.x).iter().fold(0.0f64, |m, (_, _, v)| m.max(*v));
        self.results.push(VoltVarResult {
            time: t,
            status: Some(sol.status),
            objective: sol.objective,
            iterations: sol.iterations,
            max_slack,
        });
        if sol.status != OpfStatus::Optimal {
            warn!("{}: OPF ended with {:?} at {t}; keeping previous setpoints", self.id, sol.status);
            return Ok(());
        }
        let s_base = problem.layout.s_base;
        let q_of: HashMap<&str, f64> = problem
            .layout
            .gens
            .iter()
            .map(|g| (g.id.as_str(), g.q.iter().map(|&i| sol.x[i]).sum::<f64>() * s_base * 1000.0))
            .collect();
        let handle = self.handle.clone().ok_or_else(|| SimLibError::Invalid { id: self.id.clone(), msg: "not linked".into() })?;
        for inv in &self.inverters {
            let inv = inv.borrow();
            if let Some(&q) = q_of.get(inv.gen_id()) {
                inv.q_command().set(q);
                handle.flag_contingent(inv.id()).map_err(|e| SimLibError::Invalid { id: self.id.clone(), msg: e.to_string() })?;
            }
        }
        Ok(())
    }
}

/// Starts the solver from the solved network state.
fn warm_start(problem: &mut OpfProblem, net: &Network) {
    let mut x = problem.initial_point();
    let layout = &problem.layout;
    let n = layout.n_nodes();
    for (i, info) in layout.nodes.nodes().iter().enumerate() {
        let bus = net.buses.get_by_index(info.bus_index).expect("bus exists");
        let k = bus.phases().iter().position(|&p| p == info.phase).expect("phase exists");
        if bus.v[k].norm() > 0.0 {
            x[layout.v(i)] = bus.v[k].norm();
            x[n + i] = bus.v[k].arg();
        }
    }
    for g in &layout.gens {
        let gen = net.gens.get(&g.id).expect("gen exists");
        for (k, (&pi, &qi)) in g.p.iter().zip(&g.q).enumerate() {
            x[pi] = gen.s[k].re / layout.s_base;
            x[qi] = gen.s[k].im / layout.s_base;
        }
    }
    problem.set_initial_point(x);
}

impl SimComponent for VoltVarOpf {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "volt_var_opf"
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn dependencies(&self) -> Vec<String> {
        vec![self.network_id.clone()]
    }

    fn initialize(&mut self, _start: Time) -> Result<(), ComponentError> {
        self.last_run.set(None);
        self.results.clear();
        Ok(())
    }

    fn link(&mut self, ctx: &LinkContext<'_>) -> Result<(), ComponentError> {
        self.inverters.clear();
        for id in &self.inverter_ids {
            let inv = ctx.get::<Inverter>(id)?;
            {
                let mut i = inv.borrow_mut();
                if self.enabled {
                    i.q_mode = QMode::OpfControlled;
                }
            }
            self.inverters.push(inv);
        }
        let sim_net = ctx.get::<SimNetwork>(&self.network_id)?;
        self.network = Some(sim_net.borrow().network());
        let handle = ctx.handle();
        self.handle = Some(handle.clone());
        if self.enabled {
            let own = self.id.clone();
            let last_run = self.last_run.clone();
            sim_net.borrow().events().did_update.register(&self.id, move || {
                if last_run.get() != handle.now() {
                    handle.flag_contingent(&own)?;
                }
                Ok(())
            });
        }
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        None
    }

    fn update(&mut self, t: Time, _kind: UpdateKind) -> Result<(), ComponentError> {
        if !self.enabled || self.last_run.get() == Some(t) {
            return Ok(());
        }
        self.last_run.set(Some(t));
        self.solve(t)?;
        Ok(())
    }

    fn channel(&self) -> Option<Vec<String>> {
        Some(vec!["time".into(), "status".into(), "objective".into(), "iterations".into(), "max_slack_pu".into()])
    }

    fn record(&mut self, t: Time, rows: &mut Vec<Vec<String>>) {
        if let Some(r) = self.results.last().filter(|r| r.time == t) {
            let status = r.status.map_or("error".to_string(), |s| format!("{s:?}"));
            rows.push(vec![t.to_string(), status, fmt_f(r.objective), r.iterations.to_string(), fmt_f(r.max_slack)]);
        }
    }
}
