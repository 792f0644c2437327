use std::cell::RefCell;
use std::rc::Rc;

use gridsim_core::network::{Cx, Network};
use gridsim_core::time::Time;

use super::{fmt_f, SimLibError, SimNetwork, Weather};
use crate::simulation::{ComponentError, ComponentEvents, LinkContext, SimComponent, SimHandle, UpdateKind};

/// First-order thermal model: resistance `r` in °C/kW, capacitance `c` in
/// kWh/°C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalModel {
    pub r: f64,
    pub c: f64,
    pub t_int: f64,
}

impl ThermalModel {
    /// Time constant in seconds.
    pub fn tau_s(&self) -> f64 {
        self.r * self.c * 3600.0
    }

    /// Exact update over `dt_s` with outside temperature and heat input
    /// (kW) held constant.
    pub fn step(&mut self, dt_s: f64, t_ext: f64, q_kw: f64) {
        let steady = t_ext + self.r * q_kw;
        self.t_int = steady + (self.t_int - steady) * (-dt_s / self.tau_s()).exp();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvacMode {
    Heating,
    Cooling,
}

/// Building with an on/off HVAC unit around a thermostat setpoint. Its
/// electrical demand can load a ZIP of the network.
pub struct Building {
    id: String,
    events: ComponentEvents,
    weather_id: String,
    pub model: ThermalModel,
    pub hvac_kw: f64,
    pub cop: f64,
    pub mode: HvacMode,
    pub setpoint_c: f64,
    pub deadband_c: f64,
    pub gains_kw: f64,
    pub dt: Time,
    zip: Option<(String, String)>,
    weather: Option<Rc<RefCell<Weather>>>,
    network: Option<Rc<RefCell<Network>>>,
    member: Option<(super::MemberLink, SimHandle)>,
    hvac_on: bool,
    last: Option<Time>,
    next: Option<Time>,
}

impl Building {
    pub fn new(id: impl Into<String>, weather_id: impl Into<String>, model: ThermalModel) -> Self {
        let id = id.into();
        Building {
            events: ComponentEvents::new(&id),
            id,
            weather_id: weather_id.into(),
            model,
            hvac_kw: 0.0,
            cop: 3.0,
            mode: HvacMode::Heating,
            setpoint_c: 20.0,
            deadband_c: 1.0,
            gains_kw: 0.0,
            dt: 300,
            zip: None,
            weather: None,
            network: None,
            member: None,
            hvac_on: false,
            last: None,
            next: None,
        }
    }

    /// Loads `zip_id` of `network_id` with the HVAC electrical demand.
    pub fn with_zip(mut self, network_id: impl Into<String>, zip_id: impl Into<String>) -> Self {
        self.zip = Some((network_id.into(), zip_id.into()));
        self
    }

    /// Thermal power delivered to the building, kW.
    pub fn q_hvac_kw(&self) -> f64 {
        if !self.hvac_on {
            return 0.0;
        }
        let q = self.hvac_kw * self.cop;
        match self.mode {
            HvacMode::Heating => q,
            HvacMode::Cooling => -q,
        }
    }

    /// Electrical demand, kW.
    pub fn p_hvac_kw(&self) -> f64 {
        self.q_hvac_kw().abs() / self.cop
    }

    fn thermostat(&mut self) {
        let t = self.model.t_int;
        let (lo, hi) = (self.setpoint_c - self.deadband_c, self.setpoint_c + self.deadband_c);
        self.hvac_on = match self.mode {
            HvacMode::Heating if t < lo => true,
            HvacMode::Heating if t > hi => false,
            HvacMode::Cooling if t > hi => true,
            HvacMode::Cooling if t < lo => false,
            _ => self.hvac_on,
        };
    }
}

impl SimComponent for Building {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "building"
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn dependencies(&self) -> Vec<String> {
        vec![self.weather_id.clone()]
    }

    fn dependents(&self) -> Vec<String> {
        self.zip.iter().map(|(n, _)| n.clone()).collect()
    }

    fn initialize(&mut self, start: Time) -> Result<(), ComponentError> {
        if !(self.model.c > 0.0 && self.model.r > 0.0 && self.cop > 0.0) {
            return Err(SimLibError::Invalid { id: self.id.clone(), msg: "R, C and COP must be positive".into() }.into());
        }
        self.last = None;
        self.next = Some(start);
        Ok(())
    }

    fn link(&mut self, ctx: &LinkContext<'_>) -> Result<(), ComponentError> {
        self.weather = Some(ctx.get::<Weather>(&self.weather_id)?);
        if let Some((nid, zid)) = &self.zip {
            let sim_net = ctx.get::<SimNetwork>(nid)?;
            let sim_net = sim_net.borrow();
            let net = sim_net.network();
            net.borrow_mut().zip_mut(zid)?;
            self.network = Some(net);
            self.member = Some((sim_net.member_link(), ctx.handle()));
        }
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, t: Time, kind: UpdateKind) -> Result<(), ComponentError> {
        if kind == UpdateKind::Contingent {
            return Ok(());
        }
        let weather = self.weather.as_ref().ok_or_else(|| SimLibError::UnattachedWeather { id: self.id.clone() })?;
        if let Some(last) = self.last {
            let t_ext = weather.borrow().temperature_at(last);
            self.model.step((t - last) as f64, t_ext, self.q_hvac_kw() + self.gains_kw);
        }
        let was_on = self.hvac_on;
        self.thermostat();
        if let (Some(net), Some((_, zid))) = (&self.network, &self.zip) {
            let mut net = net.borrow_mut();
            let s_base = net.s_base;
            let zip = net.zip_mut(zid)?;
            let per_phase = Cx::new(self.p_hvac_kw() / 1000.0 / s_base / zip.n_phases() as f64, 0.0);
            let n = zip.n_phases();
            zip.set_s_wye(&vec![per_phase; n]);
        }
        if was_on != self.hvac_on || self.last.is_none() {
            if let Some((link, handle)) = &self.member {
                link.mark(handle)?;
            }
        }
        self.last = Some(t);
        self.next = Some(t + self.dt.max(1));
        Ok(())
    }

    fn channel(&self) -> Option<Vec<String>> {
        Some(vec!["time".into(), "T_int".into(), "P_hvac_kW".into()])
    }

    fn record(&mut self, t: Time, rows: &mut Vec<Vec<String>>) {
        rows.push(vec![t.to_string(), fmt_f(self.model.t_int), fmt_f(self.p_hvac_kw())]);
    }
}
