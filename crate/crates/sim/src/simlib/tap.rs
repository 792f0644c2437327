use std::cell::RefCell;
use std::rc::Rc;

use gridsim_core::network::{BranchModel, Cx, Network};
use gridsim_core::time::Time;
use gridsim_core::timeseries::TimeSeries;
use log::warn;

use super::{fmt_f, MemberLink, SimLibError, SimNetwork};
use crate::simulation::{ComponentError, ComponentEvents, LinkContext, SimComponent, SimHandle, UpdateKind};

/// Sets the off-nominal ratio of a branch. Common branches take the ratio
/// as their tap; transformers scale every winding of side 0.
fn set_ratio(net: &mut Network, branch: &str, ratio: f64) -> Result<(), SimLibError> {
    let id = branch.to_string();
    match &mut net.branch_mut(branch)?.model {
        BranchModel::Common(cb) => cb.tap = ratio,
        BranchModel::Transformer(tx) => tx.ratio[0].iter_mut().for_each(|r| *r = Cx::from_polar(ratio, r.arg())),
        other => {
            return Err(SimLibError::Invalid { id, msg: format!("{} branches have no tap", other.kind()) });
        }
    }
    Ok(())
}

fn get_ratio(net: &Network, branch: &str) -> Result<f64, SimLibError> {
    let b = net.branches.get(branch).ok_or_else(|| SimLibError::Invalid { id: branch.into(), msg: "unknown branch".into() })?;
    match &b.model {
        BranchModel::Common(cb) => Ok(cb.tap),
        BranchModel::Transformer(tx) => Ok(tx.ratio[0].first().map_or(1.0, |r| r.norm())),
        other => Err(SimLibError::Invalid { id: branch.into(), msg: format!("{} branches have no tap", other.kind()) }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapSettings {
    pub v_ref: f64,
    pub deadband: f64,
    /// Ratio change per tap position.
    pub step: f64,
    pub min_position: i32,
    pub max_position: i32,
    /// Seconds a violation must persist before the tap moves.
    pub delay: Time,
}

impl Default for TapSettings {
    fn default() -> Self {
        TapSettings { v_ref: 1.0, deadband: 0.01, step: 0.00625, min_position: -16, max_position: 16, delay: 60 }
    }
}

/// Keeps the mean voltage magnitude of a bus inside a band by moving a
/// branch tap one position at a time after a delay. Position +1 raises
/// the controlled bus voltage.
pub struct AutoTapChanger {
    id: String,
    events: ComponentEvents,
    network_id: String,
    branch_id: String,
    bus_id: String,
    pub settings: TapSettings,
    position: i32,
    nominal: f64,
    // +1 if raising the ratio raises the controlled bus voltage
    direction: f64,
    network: Option<Rc<RefCell<Network>>>,
    member: Option<(MemberLink, SimHandle)>,
    violation_since: Option<Time>,
    moves: usize,
    next: Option<Time>,
}

impl AutoTapChanger {
    pub fn new(
        id: impl Into<String>,
        network_id: impl Into<String>,
        branch_id: impl Into<String>,
        bus_id: impl Into<String>,
        settings: TapSettings,
    ) -> Self {
        let id = id.into();
        AutoTapChanger {
            events: ComponentEvents::new(&id),
            id,
            network_id: network_id.into(),
            branch_id: branch_id.into(),
            bus_id: bus_id.into(),
            settings,
            position: 0,
            nominal: 1.0,
            direction: -1.0,
            network: None,
            member: None,
            violation_since: None,
            moves: 0,
            next: None,
        }
    }

    pub fn position(&self) -> i32 {
        self.position
    }

    pub fn moves(&self) -> usize {
        self.moves
    }

    fn ratio(&self) -> f64 {
        self.nominal * (1.0 + self.direction * self.position as f64 * self.settings.step)
    }

    fn bus_voltage(&self, net: &Network) -> Result<f64, SimLibError> {
        let bus = net.bus(&self.bus_id)?;
        Ok(bus.v.iter().map(|v| v.norm()).sum::<f64>() / bus.v.len().max(1) as f64)
    }
}

impl SimComponent for AutoTapChanger {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "auto_tap_changer"
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn dependencies(&self) -> Vec<String> {
        vec![self.network_id.clone()]
    }

    fn initialize(&mut self, _start: Time) -> Result<(), ComponentError> {
        let s = &self.settings;
        if s.min_position > s.max_position || !(s.step > 0.0) || s.deadband < 0.0 || s.delay < 0 {
            return Err(SimLibError::Invalid { id: self.id.clone(), msg: "inconsistent tap settings".into() }.into());
        }
        self.violation_since = None;
        self.next = None;
        Ok(())
    }

    fn link(&mut self, ctx: &LinkContext<'_>) -> Result<(), ComponentError> {
        let sim_net = ctx.get::<SimNetwork>(&self.network_id)?;
        let sim_net = sim_net.borrow();
        let net = sim_net.network();
        {
            let n = net.borrow();
            self.nominal = get_ratio(&n, &self.branch_id)?;
            let b = n.branches.get(&self.branch_id).expect("checked by get_ratio");
            let on_side0 = b.terminals[0].as_ref().is_some_and(|t| t.bus == self.bus_id);
            let on_side1 = b.terminals[1].as_ref().is_some_and(|t| t.bus == self.bus_id);
            self.direction = match (on_side0, on_side1) {
                (true, _) => 1.0,
                (_, true) => -1.0,
                _ => {
                    return Err(SimLibError::Invalid {
                        id: self.id.clone(),
                        msg: format!("bus '{}' is not a terminal of '{}'", self.bus_id, self.branch_id),
                    }
                    .into())
                }
            };
        }
        self.position = self.position.clamp(self.settings.min_position, self.settings.max_position);
        set_ratio(&mut net.borrow_mut(), &self.branch_id, self.ratio())?;
        self.network = Some(net);
        self.member = Some((sim_net.member_link(), ctx.handle()));
        let handle = ctx.handle();
        let own = self.id.clone();
        sim_net.events().did_update.register(&self.id, move || Ok(handle.flag_contingent(&own)?));
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, t: Time, _kind: UpdateKind) -> Result<(), ComponentError> {
        let net = self.network.clone().ok_or_else(|| SimLibError::Invalid { id: self.id.clone(), msg: "not linked".into() })?;
        let v = self.bus_voltage(&net.borrow())?;
        let s = self.settings;
        let error = v - s.v_ref;
        if error.abs() <= s.deadband {
            self.violation_since = None;
            self.next = None;
            return Ok(());
        }
        let since = *self.violation_since.get_or_insert(t);
        if t - since < s.delay {
            self.next = Some(since + s.delay);
            return Ok(());
        }
        let wanted = if error < 0.0 { self.position + 1 } else { self.position - 1 };
        if wanted < s.min_position || wanted > s.max_position {
            warn!("{}: tap at limit {} with |V| = {v:.4} pu at {t}", self.id, self.position);
            self.next = None;
            return Ok(());
        }
        self.position = wanted;
        self.moves += 1;
        set_ratio(&mut net.borrow_mut(), &self.branch_id, self.ratio())?;
        self.violation_since = Some(t);
        self.next = (s.delay > 0).then_some(t + s.delay);
        if let Some((link, handle)) = &self.member {
            link.mark(handle)?;
        }
        Ok(())
    }

    fn channel(&self) -> Option<Vec<String>> {
        Some(vec!["time".into(), "position".into(), "ratio".into()])
    }

    fn record(&mut self, t: Time, rows: &mut Vec<Vec<String>>) {
        rows.push(vec![t.to_string(), self.position.to_string(), fmt_f(self.ratio())]);
    }
}

/// Replays a recorded ratio schedule onto a branch.
pub struct TimeSeriesTapChanger {
    id: String,
    events: ComponentEvents,
    network_id: String,
    branch_id: String,
    series: TimeSeries,
    network: Option<Rc<RefCell<Network>>>,
    next: Option<Time>,
}

impl TimeSeriesTapChanger {
    pub fn new(id: impl Into<String>, network_id: impl Into<String>, branch_id: impl Into<String>, series: TimeSeries) -> Self {
        let id = id.into();
        TimeSeriesTapChanger {
            events: ComponentEvents::new(&id),
            id,
            network_id: network_id.into(),
            branch_id: branch_id.into(),
            series,
            network: None,
            next: None,
        }
    }
}

impl SimComponent for TimeSeriesTapChanger {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "time_series_tap_changer"
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn dependents(&self) -> Vec<String> {
        vec![self.network_id.clone()]
    }

    fn initialize(&mut self, start: Time) -> Result<(), ComponentError> {
        self.next = Some(start);
        Ok(())
    }

    fn link(&mut self, ctx: &LinkContext<'_>) -> Result<(), ComponentError> {
        let sim_net = ctx.get::<SimNetwork>(&self.network_id)?;
        let sim_net = sim_net.borrow();
        let net = sim_net.network();
        get_ratio(&net.borrow(), &self.branch_id)?;
        self.network = Some(net);
        sim_net.member_link().attach(&self.id, &self.events, ctx.handle());
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, t: Time, _kind: UpdateKind) -> Result<(), ComponentError> {
        let ratio = self.series.value_at(t)?[0];
        if let Some(net) = &self.network {
            set_ratio(&mut net.borrow_mut(), &self.branch_id, ratio)?;
        }
        self.next = self.series.next_knot_after(t);
        Ok(())
    }
}
