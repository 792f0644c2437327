//! Component library: network wrapper, loads, storage, solar, inverters,
//! weather, tap changers, buildings and controllers.

mod battery;
mod building;
mod clock;
mod heartbeat;
mod inverter;
mod network;
mod solar;
mod tap;
mod tszip;
mod voltvar;
mod weather;

use gridsim_core::network::NetworkError;
use gridsim_core::opf::OpfError;
use gridsim_core::powerflow::PfError;
use gridsim_core::time::Time;
use gridsim_core::timeseries::TimeSeriesError;
use thiserror::Error;

pub use battery::{Battery, BatteryModel, BatteryParams};
pub use building::{Building, HvacMode, ThermalModel};
pub use clock::RealTimeClock;
pub use heartbeat::Heartbeat;
pub use inverter::{Inverter, QMode};
pub use network::{MemberLink, SimNetwork};
pub use solar::{cloud_attenuation, clear_sky_dni, panel_irradiance, panel_normal, pv_dc_kw, sun_direction, Irradiance, SolarPv};
pub use tap::{AutoTapChanger, TapSettings, TimeSeriesTapChanger};
pub use tszip::TimeSeriesZip;
pub use voltvar::{VoltVarOpf, VoltVarResult};
pub use weather::Weather;

#[derive(Debug, Error)]
pub enum SimLibError {
    #[error("power flow did not converge at {time} after {iterations} iterations (mismatch {mismatch:.3e}); worst node {worst}")]
    PfDidNotConverge { time: Time, iterations: usize, mismatch: f64, worst: String },
    #[error("{id}: no weather attached")]
    UnattachedWeather { id: String },
    #[error("{id}: series has {got} columns, expected {expected}")]
    Dimension { id: String, expected: usize, got: usize },
    #[error("{id}: {msg}")]
    Invalid { id: String, msg: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    PowerFlow(#[from] PfError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    TimeSeries(#[from] TimeSeriesError),
}

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x}")
}
