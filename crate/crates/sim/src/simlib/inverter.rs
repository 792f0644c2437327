use std::cell::{Cell, RefCell};
use std::rc::Rc;

use gridsim_core::network::{Cx, Network};
use gridsim_core::time::Time;

use super::{fmt_f, Battery, SimLibError, SimNetwork, SolarPv};
use crate::simulation::{ComponentError, ComponentEvents, LinkContext, SimComponent, UpdateKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QMode {
    /// Power factor; a negative value absorbs reactive power.
    FixedPf(f64),
    /// Reactive power setpoint, kVAr.
    Setpoint(f64),
    /// Reactive power commanded by a controller.
    OpfControlled,
}

enum Source {
    Pv(Rc<RefCell<SolarPv>>),
    Battery(Rc<RefCell<Battery>>),
}

/// Converts DC sources to AC and injects the result through a gen of the
/// network. With `reactive` set it also supplies reactive power inside
/// its apparent power rating.
pub struct Inverter {
    id: String,
    events: ComponentEvents,
    network_id: String,
    gen_id: String,
    source_ids: Vec<String>,
    pub efficiency: f64,
    pub s_max_kva: f64,
    pub q_mode: QMode,
    pub reactive: bool,
    q_command: Rc<Cell<f64>>,
    sources: Vec<Source>,
    network: Option<Rc<RefCell<Network>>>,
    p_kw: f64,
    q_kvar: f64,
    next: Option<Time>,
}

impl Inverter {
    pub fn new(
        id: impl Into<String>,
        network_id: impl Into<String>,
        gen_id: impl Into<String>,
        sources: Vec<String>,
        s_max_kva: f64,
    ) -> Self {
        let id = id.into();
        Inverter {
            events: ComponentEvents::new(&id),
            id,
            network_id: network_id.into(),
            gen_id: gen_id.into(),
            source_ids: sources,
            efficiency: 1.0,
            s_max_kva,
            q_mode: QMode::FixedPf(1.0),
            reactive: false,
            q_command: Rc::new(Cell::new(0.0)),
            sources: Vec::new(),
            network: None,
            p_kw: 0.0,
            q_kvar: 0.0,
            next: None,
        }
    }

    /// Inverter with reactive capability and the given control mode.
    pub fn pv(mut self, q_mode: QMode) -> Self {
        self.reactive = true;
        self.q_mode = q_mode;
        self
    }

    pub fn add_source(&mut self, id: &str) {
        self.source_ids.push(id.to_string());
    }

    pub fn gen_id(&self) -> &str {
        &self.gen_id
    }

    pub fn p_kw(&self) -> f64 {
        self.p_kw
    }

    pub fn q_kvar(&self) -> f64 {
        self.q_kvar
    }

    /// Shared cell read in `OpfControlled` mode, kVAr.
    pub fn q_command(&self) -> Rc<Cell<f64>> {
        self.q_command.clone()
    }

    /// Largest reactive power available at active power `p_kw`.
    pub fn q_limit(&self, p_kw: f64) -> f64 {
        if self.reactive {
            (self.s_max_kva.powi(2) - p_kw.powi(2)).max(0.0).sqrt()
        } else {
            0.0
        }
    }

    fn dc_kw(&self) -> f64 {
        self.sources
            .iter()
            .map(|s| match s {
                Source::Pv(pv) => pv.borrow().dc_power_kw(),
                Source::Battery(b) => -b.borrow().power_kw(),
            })
            .sum()
    }

    /// AC output (kW, kVAr) for a DC input.
    pub fn ac_output(&self, dc_kw: f64) -> (f64, f64) {
        let p = if dc_kw >= 0.0 { self.efficiency * dc_kw } else { dc_kw / self.efficiency };
        let p = p.clamp(-self.s_max_kva, self.s_max_kva);
        let q = match self.q_mode {
            QMode::FixedPf(pf) => {
                let pf = pf.clamp(-1.0, 1.0);
                if pf == 0.0 {
                    0.0
                } else {
                    p.abs() * (1.0 / (pf * pf) - 1.0).sqrt() * pf.signum()
                }
            }
            QMode::Setpoint(q) => q,
            QMode::OpfControlled => self.q_command.get(),
        };
        let qmax = self.q_limit(p);
        (p, q.clamp(-qmax, qmax))
    }
}

impl SimComponent for Inverter {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        if self.reactive {
            "pv_inverter"
        } else {
            "inverter"
        }
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn dependencies(&self) -> Vec<String> {
        self.source_ids.clone()
    }

    fn dependents(&self) -> Vec<String> {
        vec![self.network_id.clone()]
    }

    fn initialize(&mut self, start: Time) -> Result<(), ComponentError> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(SimLibError::Invalid { id: self.id.clone(), msg: format!("efficiency {} outside (0, 1]", self.efficiency) }.into());
        }
        self.next = Some(start);
        Ok(())
    }

    fn link(&mut self, ctx: &LinkContext<'_>) -> Result<(), ComponentError> {
        self.sources.clear();
        for sid in &self.source_ids {
            let source = if let Ok(pv) = ctx.get::<SolarPv>(sid) {
                Source::Pv(pv)
            } else if let Ok(b) = ctx.get::<Battery>(sid) {
                Source::Battery(b)
            } else {
                return Err(SimLibError::Invalid { id: self.id.clone(), msg: format!("source '{sid}' is neither solar_pv nor battery") }.into());
            };
            self.sources.push(source);
            let handle = ctx.handle();
            let own = self.id.clone();
            ctx.events(sid)?.did_update.register(&self.id, move || Ok(handle.flag_contingent(&own)?));
        }
        let sim_net = ctx.get::<SimNetwork>(&self.network_id)?;
        let sim_net = sim_net.borrow();
        let net = sim_net.network();
        net.borrow_mut().gen_mut(&self.gen_id)?;
        self.network = Some(net);
        sim_net.member_link().attach(&self.id, &self.events, ctx.handle());
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, _t: Time, _kind: UpdateKind) -> Result<(), ComponentError> {
        self.next = None;
        let (p, q) = self.ac_output(self.dc_kw());
        self.p_kw = p;
        self.q_kvar = q;
        let net = self.network.as_ref().ok_or_else(|| SimLibError::Invalid { id: self.id.clone(), msg: "not linked".into() })?;
        let mut net = net.borrow_mut();
        let gen = net.gen_mut(&self.gen_id)?;
        let n = gen.n_phases() as f64;
        let s = Cx::new(p, q) / 1000.0 / n;
        gen.s.iter_mut().for_each(|x| *x = s);
        Ok(())
    }

    fn channel(&self) -> Option<Vec<String>> {
        Some(vec!["time".into(), "P_kW".into(), "Q_kVAr".into()])
    }

    fn record(&mut self, t: Time, rows: &mut Vec<Vec<String>>) {
        rows.push(vec![t.to_string(), fmt_f(self.p_kw), fmt_f(self.q_kvar)]);
    }
}
