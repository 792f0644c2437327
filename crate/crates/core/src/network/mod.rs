//! Unbalanced network data model: buses, two-terminal branches, generators
//! and ZIP loads, plus nodal admittance construction.

mod admittance;
mod dump;
mod phase;
mod ybus;

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::collection::{CollectionError, ComponentCollection, Handle};
use crate::property::{expect_f64, HasProperties, PropertyMap};

pub use admittance::{
    common_branch_y, kron_reduce, line_y, sequence_to_phase, transformer_y, vector_group_shift, CommonBranch,
    Connection, GenericBranch, LineParams, Transformer,
};
pub use dump::network_dump;
pub use phase::{canonical_phases, Phase};
pub use ybus::{branch_stamps, ybus_assemble, BranchStamp, NodeIndex, NodeInfo, YBus};

pub type Cx = Complex64;
pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("unknown {kind} '{id}'")]
    UnknownId { kind: &'static str, id: String },
    #[error("{device}: phase {phase} is not on bus '{bus}'")]
    PhaseNotOnBus { device: String, phase: Phase, bus: String },
    #[error("{device}: terminal index {index} out of range")]
    IndexOutOfRange { device: String, index: usize },
    #[error("{device}: phase map has {got} entries, device has {expected} phases")]
    PhaseCount { device: String, expected: usize, got: usize },
    #[error("duplicate phase {0}")]
    DuplicatePhase(Phase),
    #[error("{device}: terminal {index} is not connected")]
    UnconnectedTerminal { device: String, index: usize },
    #[error("tap magnitude must be positive, got {0}")]
    NonPositiveTap(f64),
    #[error("series impedance is singular")]
    SingularImpedance,
    #[error("eliminated block is singular")]
    SingularEliminatedBlock,
    #[error("invalid transformer connection: {0}")]
    InvalidConnection(String),
    #[error("transformer turns ratio is zero")]
    ZeroTurnsRatio,
    #[error("matrix dimension {got} does not match expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("{0}: lower bound exceeds upper bound")]
    InvalidBounds(String),
    #[error(transparent)]
    Collection(#[from] CollectionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BusType {
    #[serde(rename = "SL")]
    Slack,
    #[serde(rename = "PV")]
    Pv,
    #[default]
    #[serde(rename = "PQ")]
    Pq,
}

impl BusType {
    pub fn as_str(self) -> &'static str {
        match self {
            BusType::Slack => "SL",
            BusType::Pv => "PV",
            BusType::Pq => "PQ",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    phases: Vec<Phase>,
    /// Base voltage of the bus nodes in kV.
    pub v_base: f64,
    /// Nominal per-unit phasor for each phase; its angle orients slack voltages.
    pub v_nom: Vec<Cx>,
    /// Voltage magnitude setpoint (pu) used at SL and PV buses.
    pub v_mag_setpoint: f64,
    pub bus_type: BusType,
    pub v_mag_min: f64,
    pub v_mag_max: f64,
    /// Solution voltages, per unit.
    pub v: Vec<Cx>,
}

impl Bus {
    pub fn new(id: impl Into<String>, phases: &[Phase], v_base: f64) -> Result<Self, NetworkError> {
        let phases = canonical_phases(phases).map_err(NetworkError::DuplicatePhase)?;
        let v_nom: Vec<Cx> = phases.iter().map(|p| p.nominal()).collect();
        Ok(Bus {
            id: id.into(),
            v: v_nom.clone(),
            v_nom,
            phases,
            v_base,
            v_mag_setpoint: 1.0,
            bus_type: BusType::Pq,
            v_mag_min: 0.0,
            v_mag_max: f64::INFINITY,
        })
    }

    pub fn with_type(mut self, bus_type: BusType) -> Self {
        self.bus_type = bus_type;
        self
    }

    pub fn with_bounds(mut self, min: f64, max: f64) -> Result<Self, NetworkError> {
        if min > max {
            return Err(NetworkError::InvalidBounds(self.id));
        }
        self.v_mag_min = min;
        self.v_mag_max = max;
        Ok(self)
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn has_phase(&self, p: Phase) -> bool {
        self.phases.contains(&p)
    }
}

impl HasProperties for Bus {
    fn property_map() -> &'static PropertyMap<Self> {
        static MAP: OnceLock<PropertyMap<Bus>> = OnceLock::new();
        MAP.get_or_init(|| {
            PropertyMap::new()
                .read_only("id", |b: &Bus| json!(b.id))
                .read_only("phases", |b: &Bus| json!(b.phases.iter().map(|p| p.as_str()).collect::<Vec<_>>()))
                .read_only("type", |b: &Bus| json!(b.bus_type.as_str()))
                .read_only("VMagPu", |b: &Bus| json!(b.v.iter().map(|v| v.norm()).collect::<Vec<_>>()))
                .read_only("VAngDeg", |b: &Bus| json!(b.v.iter().map(|v| v.arg().to_degrees()).collect::<Vec<_>>()))
                .read_write(
                    "VMagSetpointPu",
                    |b: &Bus| json!(b.v_mag_setpoint),
                    |b: &mut Bus, v| {
                        b.v_mag_setpoint = expect_f64("VMagSetpointPu", v)?;
                        Ok(())
                    },
                )
        })
    }
}

/// Binding of a device terminal to a bus: device phase slot `k` connects to
/// bus phase `phases[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terminal {
    pub bus: String,
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gen {
    pub id: String,
    pub terminal: Option<Terminal>,
    /// Injection per phase in MVA.
    pub s: Vec<Cx>,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub v_setpoint: f64,
    pub voltage_control: bool,
    /// Polynomial cost c0 + c1 P + c2 P² with P in MW.
    pub cost: [f64; 3],
    pub in_service: bool,
}

impl Gen {
    pub fn new(id: impl Into<String>, n_phases: usize) -> Self {
        Gen {
            id: id.into(),
            terminal: None,
            s: vec![Cx::new(0.0, 0.0); n_phases],
            p_min: f64::NEG_INFINITY,
            p_max: f64::INFINITY,
            q_min: f64::NEG_INFINITY,
            q_max: f64::INFINITY,
            v_setpoint: 1.0,
            voltage_control: false,
            cost: [0.0, 1.0, 0.0],
            in_service: true,
        }
    }

    pub fn n_phases(&self) -> usize {
        self.s.len()
    }

    pub fn check_bounds(&self) -> Result<(), NetworkError> {
        if self.p_min > self.p_max || self.q_min > self.q_max {
            return Err(NetworkError::InvalidBounds(self.id.clone()));
        }
        Ok(())
    }

    pub fn p_total(&self) -> f64 {
        self.s.iter().map(|s| s.re).sum()
    }

    pub fn q_total(&self) -> f64 {
        self.s.iter().map(|s| s.im).sum()
    }
}

/// ZIP load. Matrices have one extra slot: index 0 is ground and index
/// `k + 1` is device phase `k`. Element (a, b) with a ≠ b is a component
/// connected between those slots; entries are kept symmetric. Positive
/// values consume power.
#[derive(Debug, Clone, PartialEq)]
pub struct Zip {
    pub id: String,
    pub terminal: Option<Terminal>,
    pub y: CMatrix,
    pub i: CMatrix,
    pub s: CMatrix,
    pub in_service: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZipPart {
    Y,
    I,
    S,
}

/// One connected element of a ZIP, between slots `a < b` (0 = ground).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipElement {
    pub a: usize,
    pub b: usize,
    pub y: Cx,
    pub i: Cx,
    pub s: Cx,
}

impl Zip {
    pub fn new(id: impl Into<String>, n_phases: usize) -> Self {
        let z = CMatrix::zeros(n_phases + 1, n_phases + 1);
        Zip { id: id.into(), terminal: None, y: z.clone(), i: z.clone(), s: z, in_service: true }
    }

    /// Wye-connected ZIP with one phase-to-ground element per phase.
    pub fn wye(id: impl Into<String>, y: &[Cx], i: &[Cx], s: &[Cx]) -> Self {
        let mut z = Zip::new(id, s.len());
        for k in 0..s.len() {
            z.set(ZipPart::Y, 0, k + 1, y.get(k).copied().unwrap_or_default());
            z.set(ZipPart::I, 0, k + 1, i.get(k).copied().unwrap_or_default());
            z.set(ZipPart::S, 0, k + 1, s[k]);
        }
        z
    }

    pub fn n_phases(&self) -> usize {
        self.s.nrows() - 1
    }

    fn part_mut(&mut self, part: ZipPart) -> &mut CMatrix {
        match part {
            ZipPart::Y => &mut self.y,
            ZipPart::I => &mut self.i,
            ZipPart::S => &mut self.s,
        }
    }

    /// Sets the element between slots `a` and `b` (0 = ground).
    pub fn set(&mut self, part: ZipPart, a: usize, b: usize, value: Cx) {
        assert!(a != b, "ZIP diagonal slots are unused");
        let m = self.part_mut(part);
        m[(a, b)] = value;
        m[(b, a)] = value;
    }

    pub fn set_ground(&mut self, part: ZipPart, phase_slot: usize, value: Cx) {
        self.set(part, 0, phase_slot + 1, value);
    }

    /// Sets constant-power parts phase to ground from per-phase values.
    pub fn set_s_wye(&mut self, s: &[Cx]) {
        for (k, v) in s.iter().enumerate() {
            self.set_ground(ZipPart::S, k, *v);
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = ZipElement> + '_ {
        let n = self.s.nrows();
        (0..n).flat_map(move |a| (a + 1..n).map(move |b| (a, b))).filter_map(move |(a, b)| {
            let e = ZipElement { a, b, y: self.y[(a, b)], i: self.i[(a, b)], s: self.s[(a, b)] };
            let zero = Cx::new(0.0, 0.0);
            (e.y != zero || e.i != zero || e.s != zero).then_some(e)
        })
    }

    /// Total constant-power consumption, pu.
    pub fn s_total(&self) -> Cx {
        self.elements().map(|e| e.s).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchModel {
    Generic(GenericBranch),
    Common(CommonBranch),
    OverheadLine(LineParams),
    UndergroundCable(LineParams),
    Transformer(Transformer),
}

/// Whether a branch admittance is in per unit or in siemens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    PerUnit,
    Siemens,
}

impl BranchModel {
    pub fn n_phases(&self, terminal: usize) -> usize {
        match self {
            BranchModel::Generic(g) => g.n_phases[terminal],
            BranchModel::Common(_) => 1,
            BranchModel::OverheadLine(l) | BranchModel::UndergroundCable(l) => l.n_phases(),
            BranchModel::Transformer(t) => t.n_windings(),
        }
    }

    pub fn admittance(&self) -> Result<(CMatrix, Units), NetworkError> {
        match self {
            BranchModel::Generic(g) => Ok((g.y.clone(), Units::PerUnit)),
            BranchModel::Common(cb) => Ok((common_branch_y(cb)?, Units::PerUnit)),
            BranchModel::OverheadLine(l) | BranchModel::UndergroundCable(l) => Ok((line_y(l)?, Units::Siemens)),
            BranchModel::Transformer(t) => Ok((transformer_y(t)?, Units::PerUnit)),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BranchModel::Generic(_) => "generic",
            BranchModel::Common(_) => "common",
            BranchModel::OverheadLine(_) => "overhead_line",
            BranchModel::UndergroundCable(_) => "underground_cable",
            BranchModel::Transformer(_) => "transformer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub terminals: [Option<Terminal>; 2],
    pub model: BranchModel,
    /// Apparent power limit per terminal, MVA (all phases together).
    pub rate: Option<f64>,
    pub in_service: bool,
}

impl Branch {
    pub fn new(id: impl Into<String>, model: BranchModel) -> Self {
        Branch { id: id.into(), terminals: [None, None], model, rate: None, in_service: true }
    }

    pub fn terminal(&self, index: usize) -> Result<&Terminal, NetworkError> {
        self.terminals[index]
            .as_ref()
            .ok_or_else(|| NetworkError::UnconnectedTerminal { device: self.id.clone(), index })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceKind {
    Branch,
    Gen,
    Zip,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub buses: ComponentCollection<Bus>,
    pub branches: ComponentCollection<Branch>,
    pub gens: ComponentCollection<Gen>,
    pub zips: ComponentCollection<Zip>,
    /// System base power, MVA.
    pub s_base: f64,
    pub frequency: f64,
}

impl Default for Network {
    fn default() -> Self {
        Network::new(100.0)
    }
}

impl Network {
    pub fn new(s_base: f64) -> Self {
        Network {
            buses: ComponentCollection::new(),
            branches: ComponentCollection::new(),
            gens: ComponentCollection::new(),
            zips: ComponentCollection::new(),
            s_base,
            frequency: 50.0,
        }
    }

    pub fn add_bus(&mut self, bus: Bus) -> Result<Handle<Bus>, NetworkError> {
        if bus.v_mag_min > bus.v_mag_max {
            return Err(NetworkError::InvalidBounds(bus.id));
        }
        Ok(self.buses.insert(bus.id.clone(), bus)?)
    }

    pub fn add_branch(&mut self, branch: Branch) -> Result<Handle<Branch>, NetworkError> {
        Ok(self.branches.insert(branch.id.clone(), branch)?)
    }

    pub fn add_gen(&mut self, gen: Gen) -> Result<Handle<Gen>, NetworkError> {
        gen.check_bounds()?;
        Ok(self.gens.insert(gen.id.clone(), gen)?)
    }

    pub fn add_zip(&mut self, zip: Zip) -> Result<Handle<Zip>, NetworkError> {
        Ok(self.zips.insert(zip.id.clone(), zip)?)
    }

    pub fn bus(&self, id: &str) -> Result<&Bus, NetworkError> {
        self.buses.get(id).ok_or_else(|| unknown("bus", id))
    }

    pub fn gen_mut(&mut self, id: &str) -> Result<&mut Gen, NetworkError> {
        self.gens.get_mut(id).ok_or_else(|| unknown("gen", id))
    }

    pub fn zip_mut(&mut self, id: &str) -> Result<&mut Zip, NetworkError> {
        self.zips.get_mut(id).ok_or_else(|| unknown("zip", id))
    }

    pub fn branch_mut(&mut self, id: &str) -> Result<&mut Branch, NetworkError> {
        self.branches.get_mut(id).ok_or_else(|| unknown("branch", id))
    }

    /// Binds terminal `index` of a device to `bus_id`. `phase_map[k]` is the
    /// bus phase receiving device phase slot `k`.
    pub fn connect_terminal(
        &mut self,
        kind: DeviceKind,
        device: &str,
        index: usize,
        bus_id: &str,
        phase_map: &[Phase],
    ) -> Result<(), NetworkError> {
        let bus = self.buses.get(bus_id).ok_or_else(|| unknown("bus", bus_id))?;
        let (n_terminals, n_phases) = match kind {
            DeviceKind::Branch => {
                let b = self.branches.get(device).ok_or_else(|| unknown("branch", device))?;
                (2, if index < 2 { b.model.n_phases(index) } else { 0 })
            }
            DeviceKind::Gen => (1, self.gens.get(device).ok_or_else(|| unknown("gen", device))?.n_phases()),
            DeviceKind::Zip => (1, self.zips.get(device).ok_or_else(|| unknown("zip", device))?.n_phases()),
        };
        if index >= n_terminals {
            return Err(NetworkError::IndexOutOfRange { device: device.to_string(), index });
        }
        if phase_map.len() != n_phases {
            return Err(NetworkError::PhaseCount { device: device.to_string(), expected: n_phases, got: phase_map.len() });
        }
        canonical_phases(phase_map).map_err(NetworkError::DuplicatePhase)?;
        if let Some(&p) = phase_map.iter().find(|p| !bus.has_phase(**p)) {
            return Err(NetworkError::PhaseNotOnBus { device: device.to_string(), phase: p, bus: bus_id.to_string() });
        }
        let term = Some(Terminal { bus: bus_id.to_string(), phases: phase_map.to_vec() });
        match kind {
            DeviceKind::Branch => self.branches.get_mut(device).expect("checked").terminals[index] = term,
            DeviceKind::Gen => self.gens.get_mut(device).expect("checked").terminal = term,
            DeviceKind::Zip => self.zips.get_mut(device).expect("checked").terminal = term,
        }
        Ok(())
    }

    /// Gens attached to `bus_id` that are in service.
    pub fn gens_at<'a>(&'a self, bus_id: &'a str) -> impl Iterator<Item = &'a Gen> + 'a {
        self.gens
            .values()
            .filter(move |g| g.in_service && g.terminal.as_ref().is_some_and(|t| t.bus == bus_id))
    }
}

fn unknown(kind: &'static str, id: &str) -> NetworkError {
    NetworkError::UnknownId { kind, id: id.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_phase_net() -> Network {
        let mut net = Network::new(1.0);
        net.add_bus(Bus::new("b0", &Phase::ABC, 1.0).unwrap()).unwrap();
        net.add_bus(Bus::new("b1", &Phase::ABC, 1.0).unwrap()).unwrap();
        let y = CMatrix::identity(6, 6);
        net.add_branch(Branch::new("br", BranchModel::Generic(GenericBranch::new(y, [3, 3]).unwrap()))).unwrap();
        net.add_gen(Gen::new("g", 3)).unwrap();
        net
    }

    #[test]
    fn connect_identity_map() {
        let mut net = three_phase_net();
        net.connect_terminal(DeviceKind::Branch, "br", 0, "b0", &Phase::ABC).unwrap();
        assert_eq!(net.branches.get("br").unwrap().terminal(0).unwrap().bus, "b0");
    }

    #[test]
    fn connect_missing_phase() {
        let mut net = three_phase_net();
        let err = net.connect_terminal(DeviceKind::Branch, "br", 0, "b0", &[Phase::A, Phase::B, Phase::N]).unwrap_err();
        assert!(matches!(err, NetworkError::PhaseNotOnBus { phase: Phase::N, .. }));
    }

    #[test]
    fn gen_terminal_one_is_out_of_range() {
        let mut net = three_phase_net();
        let err = net.connect_terminal(DeviceKind::Gen, "g", 1, "b0", &Phase::ABC).unwrap_err();
        assert!(matches!(err, NetworkError::IndexOutOfRange { index: 1, .. }));
        assert!(matches!(
            net.connect_terminal(DeviceKind::Zip, "nope", 0, "b0", &Phase::ABC),
            Err(NetworkError::UnknownId { kind: "zip", .. })
        ));
    }

    #[test]
    fn bus_phases_sorted_and_unique() {
        let b = Bus::new("x", &[Phase::C, Phase::A], 1.0).unwrap();
        assert_eq!(b.phases(), &[Phase::A, Phase::C]);
        assert_eq!(Bus::new("x", &[Phase::A, Phase::A], 1.0), Err(NetworkError::DuplicatePhase(Phase::A)));
    }

    #[test]
    fn bus_properties() {
        let b = Bus::new("x", &Phase::ABC, 1.0).unwrap();
        let v = b.get_property("VMagPu").unwrap();
        assert_eq!(v.as_array().unwrap().len(), 3);
    }

    #[test]
    fn gen_bounds_checked() {
        let mut net = Network::new(100.0);
        let mut g = Gen::new("g", 1);
        g.p_min = 2.0;
        g.p_max = 1.0;
        assert!(matches!(net.add_gen(g), Err(NetworkError::InvalidBounds(_))));
    }

    #[test]
    fn zip_elements_symmetric() {
        let mut z = Zip::new("z", 3);
        z.set(ZipPart::S, 1, 2, Cx::new(1.0, 0.5));
        z.set_ground(ZipPart::Y, 2, Cx::new(0.1, 0.0));
        assert_eq!(z.s[(2, 1)], Cx::new(1.0, 0.5));
        let els: Vec<_> = z.elements().map(|e| (e.a, e.b)).collect();
        assert_eq!(els, vec![(0, 3), (1, 2)]);
    }
}
