use std::cell::RefCell;
use std::f64::consts::PI;
use std::rc::Rc;

use gridsim_core::time::{day_and_hour, Time};

use super::{SimLibError, Weather};
use crate::simulation::{ComponentError, ComponentEvents, LinkContext, SimComponent, UpdateKind};

const SOLAR_CONSTANT: f64 = 1353.0;
const CLOUD_DEPTH: f64 = 0.75;
const DIFFUSE_FRACTION: f64 = 0.1;

/// Unit vector towards the sun in local east, north, up coordinates.
pub fn sun_direction(latitude_deg: f64, longitude_deg: f64, t: Time) -> [f64; 3] {
    let (day, hour) = day_and_hour(t);
    let decl = (23.45 * (2.0 * PI * (284.0 + day as f64) / 365.0).sin()).to_radians();
    let b = 2.0 * PI * (day as f64 - 81.0) / 364.0;
    let eot_min = 9.87 * (2.0 * b).sin() - 7.53 * b.cos() - 1.5 * b.sin();
    let solar_hour = hour + longitude_deg / 15.0 + eot_min / 60.0;
    let omega = (15.0 * (solar_hour - 12.0)).to_radians();
    let phi = latitude_deg.to_radians();
    [
        -decl.cos() * omega.sin(),
        phi.cos() * decl.sin() - phi.sin() * decl.cos() * omega.cos(),
        phi.sin() * decl.sin() + phi.cos() * decl.cos() * omega.cos(),
    ]
}

/// Panel normal for a tilt from vertical (zenith) and a compass azimuth,
/// both in degrees.
pub fn panel_normal(zenith_deg: f64, azimuth_deg: f64) -> [f64; 3] {
    let (z, a) = (zenith_deg.to_radians(), azimuth_deg.to_radians());
    [z.sin() * a.sin(), z.sin() * a.cos(), z.cos()]
}

/// Clear-sky direct normal irradiance (W/m²) for the sun at the given
/// cosine of its zenith angle, from the Meinel air-mass fit.
pub fn clear_sky_dni(cos_zenith: f64) -> f64 {
    if cos_zenith <= 0.0 {
        return 0.0;
    }
    let air_mass = 1.0 / cos_zenith;
    SOLAR_CONSTANT * 0.7f64.powf(air_mass.powf(0.678))
}

pub fn cloud_attenuation(cloud: f64, exponent: f64) -> f64 {
    1.0 - CLOUD_DEPTH * cloud.clamp(0.0, 1.0).powf(exponent)
}

/// DC output in kW of a panel area under the given irradiance.
pub fn pv_dc_kw(irradiance_w_m2: f64, area_m2: f64, efficiency: f64) -> f64 {
    irradiance_w_m2.max(0.0) * area_m2 * efficiency / 1000.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Irradiance {
    pub direct: f64,
    pub diffuse: f64,
}

impl Irradiance {
    pub fn total(&self) -> f64 {
        self.direct + self.diffuse
    }
}

/// Direct and diffuse irradiance on a panel, W/m². Diffuse light is a fixed
/// fraction of the clear-sky direct normal value spread over an isotropic
/// sky.
pub fn panel_irradiance(sun: [f64; 3], normal: [f64; 3], cloud: f64, exponent: f64) -> Irradiance {
    let cos_z = sun[2];
    if cos_z <= 0.0 {
        return Irradiance::default();
    }
    let dni = clear_sky_dni(cos_z);
    let incidence: f64 = sun.iter().zip(&normal).map(|(a, b)| a * b).sum();
    Irradiance {
        direct: dni * cloud_attenuation(cloud, exponent) * incidence.max(0.0),
        diffuse: DIFFUSE_FRACTION * dni * (1.0 + normal[2]) / 2.0,
    }
}

/// Panel array whose DC output follows the irradiance from a weather
/// component, sampled every `dt`.
pub struct SolarPv {
    id: String,
    events: ComponentEvents,
    weather_id: String,
    pub area_m2: f64,
    pub efficiency: f64,
    pub zenith_deg: f64,
    pub azimuth_deg: f64,
    pub dt: Time,
    weather: Option<Rc<RefCell<Weather>>>,
    dc_kw: f64,
    next: Option<Time>,
}

impl SolarPv {
    pub fn new(id: impl Into<String>, weather_id: impl Into<String>, area_m2: f64, efficiency: f64) -> Self {
        let id = id.into();
        SolarPv {
            events: ComponentEvents::new(&id),
            id,
            weather_id: weather_id.into(),
            area_m2,
            efficiency,
            zenith_deg: 0.0,
            azimuth_deg: 0.0,
            dt: 600,
            weather: None,
            dc_kw: 0.0,
            next: None,
        }
    }

    pub fn with_orientation(mut self, zenith_deg: f64, azimuth_deg: f64) -> Self {
        self.zenith_deg = zenith_deg;
        self.azimuth_deg = azimuth_deg;
        self
    }

    pub fn dc_power_kw(&self) -> f64 {
        self.dc_kw
    }

    /// DC output at `t` in kW.
    pub fn dc_power_at(&self, t: Time) -> Result<f64, SimLibError> {
        let w = self.weather.as_ref().ok_or_else(|| SimLibError::UnattachedWeather { id: self.id.clone() })?;
        let irr = w.borrow().irradiance(t, self.zenith_deg, self.azimuth_deg).total();
        Ok(pv_dc_kw(irr, self.area_m2, self.efficiency))
    }

    pub fn attach(&mut self, weather: Rc<RefCell<Weather>>) {
        self.weather = Some(weather);
    }
}

impl SimComponent for SolarPv {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "solar_pv"
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn dependencies(&self) -> Vec<String> {
        vec![self.weather_id.clone()]
    }

    fn initialize(&mut self, start: Time) -> Result<(), ComponentError> {
        self.next = Some(start);
        Ok(())
    }

    fn link(&mut self, ctx: &LinkContext<'_>) -> Result<(), ComponentError> {
        self.weather = Some(ctx.get::<Weather>(&self.weather_id)?);
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, t: Time, _kind: UpdateKind) -> Result<(), ComponentError> {
        self.dc_kw = self.dc_power_at(t)?;
        self.next = Some(t + self.dt.max(1));
        Ok(())
    }
}
