use std::cell::RefCell;
use std::rc::Rc;

use gridsim_core::network::{Cx, Network, ZipPart};
use gridsim_core::time::Time;
use gridsim_core::timeseries::{Interpolation, TimeSeries};

use super::{SimLibError, SimNetwork};
use crate::simulation::{ComponentError, ComponentEvents, LinkContext, SimComponent, UpdateKind};

/// Drives one part of a ZIP load from a time series. Row values are packed
/// as `[re_0, im_0, re_1, im_1, ...]`, one pair per ZIP phase, in pu.
pub struct TimeSeriesZip {
    id: String,
    events: ComponentEvents,
    network_id: String,
    zip_id: String,
    series: TimeSeries,
    pub part: ZipPart,
    pub scale: f64,
    /// Update interval used with linear interpolation.
    pub resample: Time,
    network: Option<Rc<RefCell<Network>>>,
    next: Option<Time>,
}

impl TimeSeriesZip {
    pub fn new(id: impl Into<String>, network_id: impl Into<String>, zip_id: impl Into<String>, series: TimeSeries) -> Self {
        let id = id.into();
        TimeSeriesZip {
            events: ComponentEvents::new(&id),
            id,
            network_id: network_id.into(),
            zip_id: zip_id.into(),
            series,
            part: ZipPart::S,
            scale: 1.0,
            resample: 300,
            network: None,
            next: None,
        }
    }

    pub fn zip_id(&self) -> &str {
        &self.zip_id
    }

    /// Per-phase values of the series at `t`.
    pub fn values_at(&self, t: Time) -> Result<Vec<Cx>, SimLibError> {
        let row = self.series.value_at(t)?;
        Ok(row.chunks(2).map(|c| Cx::new(c[0], c[1]) * self.scale).collect())
    }
}

impl SimComponent for TimeSeriesZip {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "time_series_zip"
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
        let n_phases = net.borrow_mut().zip_mut(&self.zip_id)?.n_phases();
        if self.series.dim() != 2 * n_phases {
            return Err(SimLibError::Dimension { id: self.id.clone(), expected: 2 * n_phases, got: self.series.dim() }.into());
        }
        self.network = Some(net);
        sim_net.member_link().attach(&self.id, &self.events, ctx.handle());
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, t: Time, _kind: UpdateKind) -> Result<(), ComponentError> {
        let values = self.values_at(t)?;
        let net = self.network.as_ref().ok_or_else(|| SimLibError::Invalid { id: self.id.clone(), msg: "not linked".into() })?;
        let mut net = net.borrow_mut();
        let zip = net.zip_mut(&self.zip_id)?;
        for (k, v) in values.into_iter().enumerate() {
            zip.set_ground(self.part, k, v);
        }
        self.next = match self.series.interpolation {
            Interpolation::Stepwise => self.series.next_knot_after(t),
            Interpolation::Linear => (t < self.series.end()).then(|| (t + self.resample).min(self.series.end()).max(t + 1)),
        };
        Ok(())
    }
}
