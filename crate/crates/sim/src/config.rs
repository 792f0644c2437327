//! YAML configuration of simulations through keyword plugins.

use std::collections::HashMap;
use std::path::Path;

use gridsim_core::network::{DeviceKind, Phase, Zip, ZipPart};
use gridsim_core::parsers::{load_matpower, ParseContext, ParserRegistry, PluginResult, YamlError, YamlScope};
use gridsim_core::time::{parse_time, Time};
use gridsim_core::timeseries::{Interpolation, OutOfRange, TimeSeries};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_yaml::Value;
use thiserror::Error;

use crate::simlib::{
    AutoTapChanger, Battery, BatteryModel, BatteryParams, Building, Heartbeat, HvacMode, Inverter, QMode, RealTimeClock,
    SimNetwork, SolarPv, TapSettings, ThermalModel, TimeSeriesTapChanger, TimeSeriesZip, VoltVarOpf, Weather,
};
use crate::simulation::{SimError, Simulation};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Yaml(#[from] YamlError),
    #[error("configuration has no {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Target of the simulation plugins.
pub struct SimBuilder {
    pub sim: Simulation,
    pub start: Option<Time>,
    pub end: Option<Time>,
    /// Default update interval for sampled components, seconds.
    pub timestep: Option<Time>,
    pub series: HashMap<String, TimeSeries>,
}

impl Default for SimBuilder {
    fn default() -> Self {
        SimBuilder { sim: Simulation::new(0, 0), start: None, end: None, timestep: None, series: HashMap::new() }
    }
}

impl SimBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks the time horizon and hands over the simulation.
    pub fn finish(self) -> Result<Simulation, ConfigError> {
        let mut sim = self.sim;
        sim.start = self.start.ok_or(ConfigError::Missing("simulation start_time"))?;
        sim.end = self.end.ok_or(ConfigError::Missing("simulation end_time"))?;
        Ok(sim)
    }

    fn series(&self, id: &str) -> Result<TimeSeries, String> {
        self.series.get(id).cloned().ok_or_else(|| format!("unknown time series '{id}'"))
    }

    fn dt(&self, given: Option<Time>, default: Time) -> Time {
        given.or(self.timestep).unwrap_or(default).max(1)
    }
}

/// Integer seconds or a `YYYY-MM-DDThh:mm:ss` stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TimeValue(Time);

impl<'de> Deserialize<'de> for TimeValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(t) => Ok(TimeValue(t)),
            Raw::Text(s) => parse_time(&s).map(TimeValue).map_err(serde::de::Error::custom),
        }
    }
}

fn body<T: DeserializeOwned>(v: &Value) -> Result<T, String> {
    serde_yaml::from_value(v.clone()).map_err(|e| e.to_string())
}

fn parse_phases(list: &[String]) -> Result<Vec<Phase>, String> {
    list.iter().map(|p| p.parse::<Phase>().map_err(|_| format!("unknown phase '{p}'"))).collect()
}

fn default_network() -> String {
    "network".into()
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationCfg {
    start_time: Option<TimeValue>,
    end_time: Option<TimeValue>,
    timestep: Option<Time>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatpowerCfg {
    #[serde(default = "default_network", alias = "id")]
    sim_network_id: String,
    input_file: String,
    pf_tolerance: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSeriesCfg {
    id: String,
    data_file: Option<String>,
    /// Inline rows `[time, value, ...]`.
    values: Option<Vec<Vec<Value>>>,
    #[serde(default)]
    interpolation: Interpolation,
    #[serde(default)]
    out_of_range: OutOfRange,
}

fn read_series(cfg: &TimeSeriesCfg, ctx: &ParseContext) -> Result<TimeSeries, String> {
    if let Some(file) = &cfg.data_file {
        let path = ctx.resolve(file);
        return TimeSeries::from_csv_file(&path, cfg.interpolation, cfg.out_of_range).map_err(|e| format!("{}: {e}", path.display()));
    }
    let rows = cfg.values.as_ref().ok_or("time_series needs data_file or values")?;
    let mut points = Vec::with_capacity(rows.len());
    for row in rows {
        let (t, rest) = row.split_first().ok_or("empty time series row")?;
        let t = body::<TimeValue>(t)?.0;
        let vals = rest.iter().map(|v| v.as_f64().ok_or_else(|| format!("bad value {v:?}"))).collect::<Result<Vec<_>, _>>()?;
        points.push((t, vals));
    }
    TimeSeries::new(points, cfg.interpolation, cfg.out_of_range).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSeriesZipCfg {
    id: String,
    #[serde(default = "default_network")]
    sim_network_id: String,
    /// Existing ZIP to drive; defaults to the component id.
    zip_id: Option<String>,
    /// Creates a wye ZIP on this bus when the ZIP does not exist.
    bus_id: Option<String>,
    phases: Option<Vec<String>>,
    time_series_id: String,
    #[serde(default = "one")]
    scale_factor: f64,
    #[serde(default)]
    part: PartCfg,
    resample_s: Option<Time>,
}

#[derive(Deserialize, Default, Clone, Copy)]
enum PartCfg {
    #[default]
    S,
    I,
    Y,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeatherCfg {
    id: String,
    latitude: f64,
    longitude: f64,
    temperature: Option<f64>,
    temperature_series_id: Option<String>,
    cloud_cover: Option<f64>,
    cloud_cover_series_id: Option<String>,
    cloud_exponent: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SolarPvCfg {
    id: String,
    weather_id: String,
    area_m2: f64,
    efficiency: f64,
    #[serde(default)]
    zenith_degrees: f64,
    #[serde(default)]
    azimuth_degrees: f64,
    inverter_id: Option<String>,
    dt_s: Option<Time>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InverterCfg {
    id: String,
    #[serde(default = "default_network")]
    sim_network_id: String,
    bus_id: String,
    phases: Option<Vec<String>>,
    #[serde(default)]
    dc_sources: Vec<String>,
    #[serde(default = "one")]
    efficiency: f64,
    max_s_kva: f64,
    q_mode: Option<String>,
    power_factor: Option<f64>,
    q_setpoint_kvar: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BatteryCfg {
    id: String,
    capacity_kwh: f64,
    #[serde(default)]
    init_charge_kwh: f64,
    max_charge_kw: f64,
    max_discharge_kw: f64,
    #[serde(default = "one")]
    charge_efficiency: f64,
    #[serde(default = "one")]
    discharge_efficiency: f64,
    #[serde(default)]
    requested_power_kw: f64,
    setpoint_series_id: Option<String>,
    inverter_id: Option<String>,
    dt_s: Option<Time>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeartbeatCfg {
    id: String,
    dt_s: Time,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AutoTapCfg {
    id: String,
    #[serde(default = "default_network")]
    sim_network_id: String,
    branch_id: String,
    bus_id: String,
    #[serde(default = "one")]
    v_ref_pu: f64,
    deadband_pu: Option<f64>,
    tap_step: Option<f64>,
    min_position: Option<i32>,
    max_position: Option<i32>,
    delay_s: Option<Time>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TsTapCfg {
    id: String,
    #[serde(default = "default_network")]
    sim_network_id: String,
    branch_id: String,
    time_series_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildingCfg {
    id: String,
    weather_id: String,
    r_c_per_kw: f64,
    c_kwh_per_c: f64,
    init_temperature: f64,
    #[serde(default)]
    hvac_kw: f64,
    #[serde(default = "three")]
    cop: f64,
    #[serde(default)]
    cooling: bool,
    #[serde(default = "twenty")]
    setpoint: f64,
    #[serde(default = "one")]
    deadband: f64,
    #[serde(default)]
    internal_gains_kw: f64,
    sim_network_id: Option<String>,
    zip_id: Option<String>,
    bus_id: Option<String>,
    dt_s: Option<Time>,
}

fn three() -> f64 {
    3.0
}

fn twenty() -> f64 {
    20.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClockCfg {
    id: String,
    dt_s: Time,
    #[serde(default = "one")]
    speed: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VoltVarCfg {
    id: String,
    #[serde(default = "default_network")]
    sim_network_id: String,
    inverters: Vec<String>,
    #[serde(default = "default_weight")]
    slack_weight: f64,
    #[serde(default = "yes")]
    enabled: bool,
}

fn default_weight() -> f64 {
    1e4
}

fn yes() -> bool {
    true
}

fn add<T: crate::SimComponent + 'static>(b: &mut SimBuilder, c: T) -> Result<(), String> {
    b.sim.add(c).map(|_| ()).map_err(|e| e.to_string())
}

fn network_of(b: &SimBuilder, id: &str) -> Result<std::rc::Rc<std::cell::RefCell<gridsim_core::Network>>, String> {
    Ok(b.sim.component::<SimNetwork>(id).map_err(|e| e.to_string())?.borrow().network())
}

/// Adds a source to an inverter declared earlier in the document.
fn add_source(b: &SimBuilder, inverter: &str, source: &str) -> Result<(), String> {
    let inv = b.sim.component::<Inverter>(inverter).map_err(|e| e.to_string())?;
    inv.borrow_mut().add_source(source);
    Ok(())
}

fn q_mode(cfg: &InverterCfg) -> Result<QMode, String> {
    match cfg.q_mode.as_deref().unwrap_or("fixed_pf") {
        "fixed_pf" => Ok(QMode::FixedPf(cfg.power_factor.unwrap_or(1.0))),
        "setpoint" => Ok(QMode::Setpoint(cfg.q_setpoint_kvar.ok_or("setpoint mode needs q_setpoint_kvar")?)),
        "opf_controlled" => Ok(QMode::OpfControlled),
        other => Err(format!("unknown q_mode '{other}'")),
    }
}

fn add_inverter(v: &Value, b: &mut SimBuilder, reactive: bool) -> PluginResult {
    let cfg: InverterCfg = body(v)?;
    let net = network_of(b, &cfg.sim_network_id)?;
    {
        let mut net = net.borrow_mut();
        let phases = match &cfg.phases {
            Some(p) => parse_phases(p)?,
            None => net.bus(&cfg.bus_id)?.phases().to_vec(),
        };
        let mut gen = gridsim_core::network::Gen::new(&cfg.id, phases.len());
        gen.cost = [0.0, 0.0, 0.0];
        net.add_gen(gen)?;
        net.connect_terminal(DeviceKind::Gen, &cfg.id, 0, &cfg.bus_id, &phases)?;
    }
    let mut inv = Inverter::new(&cfg.id, &cfg.sim_network_id, &cfg.id, cfg.dc_sources.clone(), cfg.max_s_kva);
    inv.efficiency = cfg.efficiency;
    let mode = q_mode(&cfg)?;
    inv = if reactive { inv.pv(mode) } else { inv };
    if !reactive {
        inv.q_mode = mode;
    }
    add(b, inv)?;
    Ok(())
}

/// Registry with every simulation keyword.
pub fn sim_registry() -> ParserRegistry<SimBuilder> {
    let mut reg = ParserRegistry::new();
    reg.register("simulation", |v, b: &mut SimBuilder, _| {
        let cfg: SimulationCfg = body(v)?;
        b.start = cfg.start_time.map(|t| t.0).or(b.start);
        b.end = cfg.end_time.map(|t| t.0).or(b.end);
        b.timestep = cfg.timestep.or(b.timestep);
        Ok(())
    });
    reg.register("matpower", |v, b: &mut SimBuilder, ctx| {
        let cfg: MatpowerCfg = body(v)?;
        let path = ctx.resolve(&cfg.input_file);
        let net = load_matpower(&path)?;
        let mut sn = SimNetwork::new(&cfg.sim_network_id, net);
        if let Some(tol) = cfg.pf_tolerance {
            sn.options.tol = tol;
        }
        if let Some(n) = cfg.max_iterations {
            sn.options.max_iter = n;
        }
        add(b, sn)?;
        Ok(())
    });
    reg.register("time_series", |v, b: &mut SimBuilder, ctx| {
        let cfg: TimeSeriesCfg = body(v)?;
        let series = read_series(&cfg, ctx)?;
        if b.series.insert(cfg.id.clone(), series).is_some() {
            return Err(format!("duplicate time series '{}'", cfg.id).into());
        }
        Ok(())
    });
    reg.register("time_series_zip", |v, b: &mut SimBuilder, _| {
        let cfg: TimeSeriesZipCfg = body(v)?;
        let series = b.series(&cfg.time_series_id)?;
        let zip_id = cfg.zip_id.clone().unwrap_or_else(|| cfg.id.clone());
        let net = network_of(b, &cfg.sim_network_id)?;
        {
            let mut net = net.borrow_mut();
            if !net.zips.contains_key(&zip_id) {
                let bus = cfg.bus_id.as_deref().ok_or_else(|| format!("ZIP '{zip_id}' does not exist and no bus_id given"))?;
                let phases = match &cfg.phases {
                    Some(p) => parse_phases(p)?,
                    None => net.bus(bus)?.phases().to_vec(),
                };
                net.add_zip(Zip::new(&zip_id, phases.len()))?;
                net.connect_terminal(DeviceKind::Zip, &zip_id, 0, bus, &phases)?;
            }
        }
        let mut c = TimeSeriesZip::new(&cfg.id, &cfg.sim_network_id, zip_id, series);
        c.scale = cfg.scale_factor;
        c.part = match cfg.part {
            PartCfg::S => ZipPart::S,
            PartCfg::I => ZipPart::I,
            PartCfg::Y => ZipPart::Y,
        };
        c.resample = b.dt(cfg.resample_s, 300);
        add(b, c)?;
        Ok(())
    });
    reg.register("weather", |v, b: &mut SimBuilder, _| {
        let cfg: WeatherCfg = body(v)?;
        let constant = |x: f64| TimeSeries::scalar(&[(0, x)], Interpolation::Stepwise).map_err(|e| e.to_string());
        let mut w = Weather::new(&cfg.id, cfg.latitude, cfg.longitude);
        let temp = match &cfg.temperature_series_id {
            Some(id) => b.series(id)?,
            None => constant(cfg.temperature.unwrap_or(20.0))?,
        };
        let cloud = match &cfg.cloud_cover_series_id {
            Some(id) => b.series(id)?,
            None => constant(cfg.cloud_cover.unwrap_or(0.0))?,
        };
        w = w.with_temperature(temp).with_cloud_cover(cloud);
        if let Some(e) = cfg.cloud_exponent {
            w.cloud_exponent = e;
        }
        add(b, w)?;
        Ok(())
    });
    reg.register("solar_pv", |v, b: &mut SimBuilder, _| {
        let cfg: SolarPvCfg = body(v)?;
        if !(cfg.efficiency > 0.0 && cfg.efficiency <= 1.0) {
            return Err(format!("efficiency {} outside (0, 1]", cfg.efficiency).into());
        }
        let mut pv = SolarPv::new(&cfg.id, &cfg.weather_id, cfg.area_m2, cfg.efficiency)
            .with_orientation(cfg.zenith_degrees, cfg.azimuth_degrees);
        pv.dt = b.dt(cfg.dt_s, 600);
        add(b, pv)?;
        if let Some(inv) = &cfg.inverter_id {
            add_source(b, inv, &cfg.id)?;
        }
        Ok(())
    });
    reg.register("inverter", |v, b: &mut SimBuilder, _| add_inverter(v, b, false));
    reg.register("pv_inverter", |v, b: &mut SimBuilder, _| add_inverter(v, b, true));
    reg.register("battery", |v, b: &mut SimBuilder, _| {
        let cfg: BatteryCfg = body(v)?;
        let params = BatteryParams {
            capacity_kwh: cfg.capacity_kwh,
            max_charge_kw: cfg.max_charge_kw,
            max_discharge_kw: cfg.max_discharge_kw,
            eta_charge: cfg.charge_efficiency,
            eta_discharge: cfg.discharge_efficiency,
        };
        let mut bat = Battery::new(&cfg.id, BatteryModel::new(params, cfg.init_charge_kwh), b.dt(cfg.dt_s, 300));
        bat.requested_kw = cfg.requested_power_kw;
        if let Some(id) = &cfg.setpoint_series_id {
            bat = bat.with_setpoint(b.series(id)?);
        }
        add(b, bat)?;
        if let Some(inv) = &cfg.inverter_id {
            add_source(b, inv, &cfg.id)?;
        }
        Ok(())
    });
    reg.register("heartbeat", |v, b: &mut SimBuilder, _| {
        let cfg: HeartbeatCfg = body(v)?;
        if cfg.dt_s <= 0 {
            return Err("heartbeat dt_s must be positive".into());
        }
        add(b, Heartbeat::new(cfg.id, cfg.dt_s))?;
        Ok(())
    });
    reg.register("auto_tap_changer", |v, b: &mut SimBuilder, _| {
        let cfg: AutoTapCfg = body(v)?;
        let d = TapSettings::default();
        let settings = TapSettings {
            v_ref: cfg.v_ref_pu,
            deadband: cfg.deadband_pu.unwrap_or(d.deadband),
            step: cfg.tap_step.unwrap_or(d.step),
            min_position: cfg.min_position.unwrap_or(d.min_position),
            max_position: cfg.max_position.unwrap_or(d.max_position),
            delay: cfg.delay_s.unwrap_or(d.delay),
        };
        add(b, AutoTapChanger::new(cfg.id, cfg.sim_network_id, cfg.branch_id, cfg.bus_id, settings))?;
        Ok(())
    });
    reg.register("time_series_tap_changer", |v, b: &mut SimBuilder, _| {
        let cfg: TsTapCfg = body(v)?;
        let series = b.series(&cfg.time_series_id)?;
        add(b, TimeSeriesTapChanger::new(cfg.id, cfg.sim_network_id, cfg.branch_id, series))?;
        Ok(())
    });
    reg.register("building", |v, b: &mut SimBuilder, _| {
        let cfg: BuildingCfg = body(v)?;
        let model = ThermalModel { r: cfg.r_c_per_kw, c: cfg.c_kwh_per_c, t_int: cfg.init_temperature };
        let mut bld = Building::new(&cfg.id, &cfg.weather_id, model);
        bld.hvac_kw = cfg.hvac_kw;
        bld.cop = cfg.cop;
        bld.mode = if cfg.cooling { HvacMode::Cooling } else { HvacMode::Heating };
        bld.setpoint_c = cfg.setpoint;
        bld.deadband_c = cfg.deadband;
        bld.gains_kw = cfg.internal_gains_kw;
        bld.dt = b.dt(cfg.dt_s, 300);
        if let Some(nid) = &cfg.sim_network_id {
            let zip_id = cfg.zip_id.clone().unwrap_or_else(|| cfg.id.clone());
            let net = network_of(b, nid)?;
            let mut net = net.borrow_mut();
            if !net.zips.contains_key(&zip_id) {
                let bus = cfg.bus_id.as_deref().ok_or("building ZIP needs bus_id")?;
                let phases = net.bus(bus)?.phases().to_vec();
                net.add_zip(Zip::new(&zip_id, phases.len()))?;
                net.connect_terminal(DeviceKind::Zip, &zip_id, 0, bus, &phases)?;
            }
            bld = bld.with_zip(nid, zip_id);
        }
        add(b, bld)?;
        Ok(())
    });
    reg.register("real_time_clock", |v, b: &mut SimBuilder, _| {
        let cfg: ClockCfg = body(v)?;
        add(b, RealTimeClock::new(cfg.id, cfg.dt_s, cfg.speed))?;
        Ok(())
    });
    reg.register("volt_var_opf", |v, b: &mut SimBuilder, _| {
        let cfg: VoltVarCfg = body(v)?;
        let mut c = VoltVarOpf::new(cfg.id, cfg.sim_network_id, cfg.inverters, cfg.slack_weight);
        c.enabled = cfg.enabled;
        add(b, c)?;
        Ok(())
    });
    reg
}

/// Parses a configuration file into a ready-to-initialize simulation.
pub fn load_simulation(path: &Path) -> Result<Simulation, ConfigError> {
    load_simulation_with(path, YamlScope::new())
}

/// Like [`load_simulation`] with caller-supplied parameter bindings.
pub fn load_simulation_with(path: &Path, scope: YamlScope) -> Result<Simulation, ConfigError> {
    let mut b = SimBuilder::new();
    sim_registry().apply_file_with(path, scope, &mut b)?;
    b.finish()
}

/// Parses configuration text; relative files resolve against `base_dir`.
pub fn simulation_from_str(text: &str, base_dir: &Path) -> Result<Simulation, ConfigError> {
    let mut b = SimBuilder::new();
    let ctx = ParseContext { base_dir: base_dir.to_path_buf() };
    sim_registry().apply_str(text, &mut b, &ctx)?;
    b.finish()
}
