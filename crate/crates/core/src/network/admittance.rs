//! Branch admittance builders and dense admittance utilities.

use std::f64::consts::PI;

use super::{CMatrix, Cx, NetworkError};

/// Branch given directly by its nodal admittance over both terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericBranch {
    pub y: CMatrix,
    pub n_phases: [usize; 2],
}

impl GenericBranch {
    pub fn new(y: CMatrix, n_phases: [usize; 2]) -> Result<Self, NetworkError> {
        let n = n_phases[0] + n_phases[1];
        if y.nrows() != n || y.ncols() != n {
            return Err(NetworkError::Dimension { expected: n, got: y.nrows() });
        }
        Ok(GenericBranch { y, n_phases })
    }
}

/// Single-phase series element with split shunt behind an ideal
/// transformer on terminal 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommonBranch {
    pub y_series: Cx,
    pub y_shunt: Cx,
    pub tap: f64,
    pub shift_rad: f64,
}

impl CommonBranch {
    pub fn line(y_series: Cx, y_shunt: Cx) -> Self {
        CommonBranch { y_series, y_shunt, tap: 1.0, shift_rad: 0.0 }
    }

    pub fn ratio(&self) -> Cx {
        Cx::from_polar(self.tap, self.shift_rad)
    }
}

pub fn common_branch_y(cb: &CommonBranch) -> Result<CMatrix, NetworkError> {
    if !(cb.tap > 0.0) {
        return Err(NetworkError::NonPositiveTap(cb.tap));
    }
    let t = cb.ratio();
    let y = cb.y_series;
    let ysh = cb.y_shunt / 2.0;
    Ok(CMatrix::from_row_slice(
        2,
        2,
        &[(y + ysh) / (cb.tap * cb.tap), -y / t.conj(), -y / t, y + ysh],
    ))
}

/// Per-length line data. The last `n_neutral` wires are neutrals, assumed
/// grounded at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct LineParams {
    /// Series impedance, ohm/km.
    pub z_per_km: CMatrix,
    /// Shunt admittance, S/km.
    pub y_shunt_per_km: CMatrix,
    pub length_km: f64,
    pub n_neutral: usize,
}

impl LineParams {
    pub fn n_wire(&self) -> usize {
        self.z_per_km.nrows()
    }

    pub fn n_phases(&self) -> usize {
        self.n_wire() - self.n_neutral
    }
}

/// Two-port admittance of a line in siemens, phases only.
pub fn line_y(line: &LineParams) -> Result<CMatrix, NetworkError> {
    let nw = line.n_wire();
    if line.z_per_km.ncols() != nw {
        return Err(NetworkError::Dimension { expected: nw, got: line.z_per_km.ncols() });
    }
    if line.n_neutral >= nw {
        return Err(NetworkError::Dimension { expected: nw, got: line.n_neutral });
    }
    let np = line.n_phases();
    let z = &line.z_per_km * Cx::from(line.length_km);
    let keep: Vec<usize> = (0..np).collect();
    let z_red = kron_reduce(&z, &keep).map_err(|_| NetworkError::SingularImpedance)?;
    let y = invert(&z_red).ok_or(NetworkError::SingularImpedance)?;
    let y_sh = if line.y_shunt_per_km.is_empty() {
        CMatrix::zeros(np, np)
    } else {
        if line.y_shunt_per_km.nrows() != nw {
            return Err(NetworkError::Dimension { expected: nw, got: line.y_shunt_per_km.nrows() });
        }
        line.y_shunt_per_km.view((0, 0), (np, np)) * Cx::from(line.length_km)
    };
    let half = &y_sh * Cx::from(0.5);
    let mut out = CMatrix::zeros(2 * np, 2 * np);
    out.view_mut((0, 0), (np, np)).copy_from(&(&y + &half));
    out.view_mut((np, np), (np, np)).copy_from(&(&y + &half));
    out.view_mut((0, np), (np, np)).copy_from(&(-&y));
    out.view_mut((np, 0), (np, np)).copy_from(&(-&y));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connection {
    WyeGrounded,
    Wye,
    Delta,
}

/// Transformer built from identical single-phase windings. Winding `k`
/// of a wye side sits on phase `k`; on a delta side it spans phases
/// `k` and `k+1 (mod 3)`. Ratios are per unit of each side's node base.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub connection: [Connection; 2],
    pub ratio: [Vec<Cx>; 2],
    pub y_leak: Cx,
    pub y_mag: Cx,
}

impl Transformer {
    pub fn new(connection: [Connection; 2], n_windings: usize, y_leak: Cx) -> Self {
        let unit = vec![Cx::new(1.0, 0.0); n_windings];
        Transformer { connection, ratio: [unit.clone(), unit], y_leak, y_mag: Cx::new(0.0, 0.0) }
    }

    pub fn n_windings(&self) -> usize {
        self.ratio[0].len()
    }
}

/// Phase displacement for a vector-group clock number, as a unit phasor.
pub fn vector_group_shift(clock: u8) -> Cx {
    Cx::from_polar(1.0, -(clock as f64) * PI / 6.0)
}

/// Nodal admittance over [terminal-0 phases, terminal-1 phases].
pub fn transformer_y(tx: &Transformer) -> Result<CMatrix, NetworkError> {
    let nw = tx.n_windings();
    if nw == 0 || tx.ratio[1].len() != nw {
        return Err(NetworkError::InvalidConnection("winding counts differ".into()));
    }
    if tx.connection.contains(&Connection::Delta) && nw != 3 {
        return Err(NetworkError::InvalidConnection("delta needs three windings".into()));
    }
    if tx.ratio.iter().flatten().any(|t| t.norm() == 0.0) {
        return Err(NetworkError::ZeroTurnsRatio);
    }
    // node layout: side 0 phases, side 1 phases, then any star points
    let mut n_nodes = 2 * nw;
    let star: Vec<Option<usize>> = tx
        .connection
        .iter()
        .map(|c| {
            (*c == Connection::Wye).then(|| {
                n_nodes += 1;
                n_nodes - 1
            })
        })
        .collect();
    // rows 0..nw: side-0 winding voltages, rows nw..2nw: side 1
    let mut ct = CMatrix::zeros(2 * nw, n_nodes);
    for side in 0..2 {
        for k in 0..nw {
            let row = side * nw + k;
            let inv_t = Cx::new(1.0, 0.0) / tx.ratio[side][k];
            let node = side * nw + k;
            ct[(row, node)] += inv_t;
            match tx.connection[side] {
                Connection::WyeGrounded => {}
                Connection::Wye => ct[(row, star[side].expect("star node"))] -= inv_t,
                Connection::Delta => ct[(row, side * nw + (k + 1) % 3)] -= inv_t,
            }
        }
    }
    let mut yw = CMatrix::zeros(2 * nw, 2 * nw);
    for k in 0..nw {
        yw[(k, k)] = tx.y_leak + tx.y_mag;
        yw[(k, nw + k)] = -tx.y_leak;
        yw[(nw + k, k)] = -tx.y_leak;
        yw[(nw + k, nw + k)] = tx.y_leak;
    }
    let y = ct.adjoint() * yw * &ct;
    if n_nodes == 2 * nw {
        return Ok(y);
    }
    let keep: Vec<usize> = (0..2 * nw).collect();
    kron_reduce(&y, &keep).map_err(|_| NetworkError::InvalidConnection("floating star points".into()))
}

fn invert(m: &CMatrix) -> Option<CMatrix> {
    if m.nrows() == 0 {
        return Some(m.clone());
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    if scale == 0.0 {
        return None;
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let min_pivot = (0..u.nrows()).fold(f64::INFINITY, |a, k| a.min(u[(k, k)].norm()));
    if min_pivot <= 1e-13 * scale {
        return None;
    }
    lu.try_inverse()
}

/// Eliminates all indices not in `keep`: Y_kk − Y_ke Y_ee⁻¹ Y_ek. The
/// result is ordered as `keep`.
pub fn kron_reduce(y: &CMatrix, keep: &[usize]) -> Result<CMatrix, NetworkError> {
    let n = y.nrows();
    let elim: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    let pick = |rows: &[usize], cols: &[usize]| CMatrix::from_fn(rows.len(), cols.len(), |r, c| y[(rows[r], cols[c])]);
    let ykk = pick(keep, keep);
    if elim.is_empty() {
        return Ok(ykk);
    }
    let yee_inv = invert(&pick(&elim, &elim)).ok_or(NetworkError::SingularEliminatedBlock)?;
    Ok(ykk - pick(keep, &elim) * yee_inv * pick(&elim, keep))
}

/// Phase-frame admittance from zero- and positive-sequence admittances.
pub fn sequence_to_phase(y0: Cx, y1: Cx) -> CMatrix {
    let a = Cx::from_polar(1.0, 2.0 * PI / 3.0);
    let a2 = a * a;
    let one = Cx::new(1.0, 0.0);
    let am = CMatrix::from_row_slice(3, 3, &[one, one, one, one, a2, a, one, a, a2]);
    let am_inv = CMatrix::from_row_slice(3, 3, &[one, one, one, one, a, a2, one, a2, a]) * Cx::from(1.0 / 3.0);
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![y0, y1, y1]));
    am * d * am_inv
}
