use gridsim_core::time::Time;
use gridsim_core::timeseries::{Interpolation, TimeSeries};

use super::solar::{panel_irradiance, panel_normal, sun_direction, Irradiance};
use crate::simulation::{ComponentError, ComponentEvents, SimComponent, UpdateKind};

/// Site weather: temperature and cloud cover series plus the sun position
/// at the site's latitude and longitude.
pub struct Weather {
    id: String,
    events: ComponentEvents,
    pub latitude: f64,
    pub longitude: f64,
    temperature: TimeSeries,
    cloud: TimeSeries,
    pub cloud_exponent: f64,
    next: Option<Time>,
}

impl Weather {
    pub fn new(id: impl Into<String>, latitude: f64, longitude: f64) -> Self {
        let id = id.into();
        let constant = |v: f64| TimeSeries::scalar(&[(0, v)], Interpolation::Stepwise).expect("one point");
        Weather {
            events: ComponentEvents::new(&id),
            id,
            latitude,
            longitude,
            temperature: constant(20.0),
            cloud: constant(0.0),
            cloud_exponent: 3.0,
            next: None,
        }
    }

    pub fn with_temperature(mut self, series: TimeSeries) -> Self {
        self.temperature = series;
        self
    }

    pub fn with_cloud_cover(mut self, series: TimeSeries) -> Self {
        self.cloud = series;
        self
    }

    pub fn temperature_at(&self, t: Time) -> f64 {
        self.temperature.value_at(t).map(|v| v[0]).unwrap_or(f64::NAN)
    }

    pub fn cloud_at(&self, t: Time) -> f64 {
        self.cloud.value_at(t).map(|v| v[0].clamp(0.0, 1.0)).unwrap_or(0.0)
    }

    /// Irradiance on a panel with the given zenith and azimuth, degrees.
    pub fn irradiance(&self, t: Time, zenith_deg: f64, azimuth_deg: f64) -> Irradiance {
        let sun = sun_direction(self.latitude, self.longitude, t);
        panel_irradiance(sun, panel_normal(zenith_deg, azimuth_deg), self.cloud_at(t), self.cloud_exponent)
    }
}

impl SimComponent for Weather {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "weather"
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

    fn update(&mut self, t: Time, _kind: UpdateKind) -> Result<(), ComponentError> {
        self.next = [self.temperature.next_knot_after(t), self.cloud.next_knot_after(t)].into_iter().flatten().min();
        Ok(())
    }
}
