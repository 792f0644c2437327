use gridsim_core::event::{ActionError, Event};
use gridsim_core::time::Time;
use gridsim_core::timeseries::TimeSeries;

use super::fmt_f;
use crate::simulation::{ComponentError, ComponentEvents, SimComponent, UpdateKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryParams {
    pub capacity_kwh: f64,
    pub max_charge_kw: f64,
    pub max_discharge_kw: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams { capacity_kwh: 10.0, max_charge_kw: 5.0, max_discharge_kw: 5.0, eta_charge: 1.0, eta_discharge: 1.0 }
    }
}

/// Energy store. Positive power charges.
#[derive(Debug, Clone)]
pub struct BatteryModel {
    pub params: BatteryParams,
    pub charge_kwh: f64,
    /// Actual power of the last step, kW.
    pub power_kw: f64,
    pub charge_empty: Event,
    pub charge_full: Event,
    pub power_changed: Event,
}

impl BatteryModel {
    pub fn new(params: BatteryParams, charge_kwh: f64) -> Self {
        BatteryModel {
            params,
            charge_kwh: charge_kwh.clamp(0.0, params.capacity_kwh),
            power_kw: 0.0,
            charge_empty: Event::new("charge empty"),
            charge_full: Event::new("charge full"),
            power_changed: Event::new("power changed"),
        }
    }

    /// Holds `setpoint_kw` for `dt_s` seconds, clipped to the power ratings
    /// and to the energy that fits. Returns the actual power.
    pub fn step(&mut self, dt_s: f64, setpoint_kw: f64) -> Result<f64, ActionError> {
        assert!(dt_s > 0.0, "battery step needs a positive interval");
        let BatteryParams { capacity_kwh, max_charge_kw, max_discharge_kw, eta_charge, eta_discharge } = self.params;
        let h = dt_s / 3600.0;
        let mut p = setpoint_kw.clamp(-max_discharge_kw, max_charge_kw);
        let (mut full, mut empty) = (false, false);
        if p > 0.0 {
            let limit = (capacity_kwh - self.charge_kwh) / (eta_charge * h);
            if p >= limit {
                p = limit;
                self.charge_kwh = capacity_kwh;
                full = true;
            } else {
                self.charge_kwh += eta_charge * p * h;
            }
        } else if p < 0.0 {
            let limit = self.charge_kwh * eta_discharge / h;
            if -p >= limit {
                p = -limit;
                self.charge_kwh = 0.0;
                empty = true;
            } else {
                self.charge_kwh -= -p / eta_discharge * h;
            }
        }
        self.charge_kwh = self.charge_kwh.clamp(0.0, capacity_kwh);
        self.power_kw = p;
        if full {
            self.charge_full.trigger()?;
        }
        if empty {
            self.charge_empty.trigger()?;
        }
        if p != setpoint_kw {
            self.power_changed.trigger()?;
        }
        Ok(p)
    }
}

/// Battery following a setpoint schedule. At each update it commits the
/// power for the coming interval.
pub struct Battery {
    id: String,
    events: ComponentEvents,
    pub model: BatteryModel,
    setpoint: Option<TimeSeries>,
    pub requested_kw: f64,
    pub dt: Time,
    charge_at_update: f64,
    next: Option<Time>,
}

impl Battery {
    pub fn new(id: impl Into<String>, model: BatteryModel, dt: Time) -> Self {
        let id = id.into();
        Battery {
            events: ComponentEvents::new(&id),
            id,
            charge_at_update: model.charge_kwh,
            model,
            setpoint: None,
            requested_kw: 0.0,
            dt: dt.max(1),
            next: None,
        }
    }

    /// Requested power schedule, kW (positive charges).
    pub fn with_setpoint(mut self, series: TimeSeries) -> Self {
        self.setpoint = Some(series);
        self
    }

    /// Actual power for the current interval, kW.
    pub fn power_kw(&self) -> f64 {
        self.model.power_kw
    }
}

impl SimComponent for Battery {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "battery"
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn initialize(&mut self, start: Time) -> Result<(), ComponentError> {
        self.next = Some(start);
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, t: Time, kind: UpdateKind) -> Result<(), ComponentError> {
        if kind == UpdateKind::Contingent {
            return Ok(());
        }
        if let Some(s) = &self.setpoint {
            self.requested_kw = s.value_at(t)?[0];
        }
        self.charge_at_update = self.model.charge_kwh;
        self.model.step(self.dt as f64, self.requested_kw)?;
        self.next = Some(t + self.dt);
        Ok(())
    }

    fn channel(&self) -> Option<Vec<String>> {
        Some(vec!["time".into(), "charge_kWh".into(), "P_kW".into()])
    }

    fn record(&mut self, t: Time, rows: &mut Vec<Vec<String>>) {
        rows.push(vec![t.to_string(), fmt_f(self.charge_at_update), fmt_f(self.model.power_kw)]);
    }
}
