use std::cell::{Cell, RefCell};
use std::rc::Rc;

use gridsim_core::network::Network;
use gridsim_core::powerflow::{solve_network, PfOptions, PfSolution, Start};
use gridsim_core::time::Time;

use super::{fmt_f, SimLibError};
use crate::simulation::{ComponentError, ComponentEvents, SimComponent, SimError, SimHandle, UpdateKind};

/// Wraps a network and re-solves the power flow whenever a member device
/// changed since the last solve.
pub struct SimNetwork {
    id: String,
    events: ComponentEvents,
    network: Rc<RefCell<Network>>,
    dirty: Rc<Cell<bool>>,
    pub options: PfOptions,
    last: Option<PfSolution>,
    solves: usize,
    next: Option<Time>,
}

impl SimNetwork {
    pub fn new(id: impl Into<String>, network: Network) -> Self {
        let id = id.into();
        SimNetwork {
            events: ComponentEvents::new(&id),
            id,
            network: Rc::new(RefCell::new(network)),
            dirty: Rc::new(Cell::new(true)),
            options: PfOptions { start: Start::Warm, ..PfOptions::default() },
            last: None,
            solves: 0,
            next: None,
        }
    }

    pub fn network(&self) -> Rc<RefCell<Network>> {
        self.network.clone()
    }

    pub fn solve_count(&self) -> usize {
        self.solves
    }

    pub fn last_solution(&self) -> Option<&PfSolution> {
        self.last.as_ref()
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty.get()
    }

    /// Lets a member device mark the network as changed.
    pub fn member_link(&self) -> MemberLink {
        MemberLink { network_id: self.id.clone(), dirty: self.dirty.clone() }
    }

    fn solve(&mut self, t: Time) -> Result<(), SimLibError> {
        let mut net = self.network.borrow_mut();
        let (model, sol) = solve_network(&mut net, &self.options)?;
        self.solves += 1;
        if !sol.converged {
            let worst = sol
                .v
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .map(|(i, v)| {
                    let n = model.nodes.node(i);
                    format!("{}.{} at {:.4} pu", n.bus, n.phase, v.norm())
                })
                .unwrap_or_default();
            return Err(SimLibError::PfDidNotConverge { time: t, iterations: sol.iterations, mismatch: sol.power_mismatch, worst });
        }
        self.dirty.set(false);
        self.last = Some(sol);
        Ok(())
    }
}

/// Handle held by member devices: marks the network dirty and flags it
/// for a contingent update.
#[derive(Debug, Clone)]
pub struct MemberLink {
    network_id: String,
    dirty: Rc<Cell<bool>>,
}

impl MemberLink {
    pub fn network_id(&self) -> &str {
        &self.network_id
    }

    pub fn mark(&self, handle: &SimHandle) -> Result<(), SimError> {
        self.dirty.set(true);
        handle.flag_contingent(&self.network_id)
    }

    /// Registers `mark` on a member's did_update event.
    pub fn attach(&self, owner: &str, events: &ComponentEvents, handle: SimHandle) {
        let link = self.clone();
        events.did_update.register(owner, move || Ok(link.mark(&handle)?));
    }
}

impl SimComponent for SimNetwork {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "network"
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn initialize(&mut self, start: Time) -> Result<(), ComponentError> {
        self.dirty.set(true);
        self.next = Some(start);
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, t: Time, _kind: UpdateKind) -> Result<(), ComponentError> {
        self.next = None;
        if self.dirty.get() {
            self.solve(t)?;
        }
        Ok(())
    }

    fn channel(&self) -> Option<Vec<String>> {
        Some(vec!["time".into(), "node".into(), "Vmag_pu".into()])
    }

    fn record(&mut self, t: Time, rows: &mut Vec<Vec<String>>) {
        let net = self.network.borrow();
        for bus in net.buses.values() {
            for (p, v) in bus.phases().iter().zip(&bus.v) {
                rows.push(vec![t.to_string(), format!("{}.{}", bus.id, p.as_str()), fmt_f(v.norm())]);
            }
        }
    }
}
