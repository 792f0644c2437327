use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A conductor phase. `Bal` stands for a single-phase or balanced equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
    N,
    #[serde(rename = "BAL")]
    Bal,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::A, Phase::B, Phase::C, Phase::N, Phase::Bal];
    pub const ABC: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    /// Unit nominal phasor: A at 0°, B at -120°, C at +120°; N is zero.
    pub fn nominal(self) -> Complex64 {
        let deg = match self {
            Phase::A | Phase::Bal => 0.0,
            Phase::B => -120.0,
            Phase::C => 120.0,
            Phase::N => return Complex64::new(0.0, 0.0),
        };
        Complex64::from_polar(1.0, f64::to_radians(deg))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
            Phase::N => "N",
            Phase::Bal => "BAL",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Phase::A),
            "B" => Ok(Phase::B),
            "C" => Ok(Phase::C),
            "N" => Ok(Phase::N),
            "BAL" => Ok(Phase::Bal),
            other => Err(format!("unknown phase '{other}'")),
        }
    }
}

/// Returns the phases sorted into canonical order, or the first duplicate.
pub fn canonical_phases(phases: &[Phase]) -> Result<Vec<Phase>, Phase> {
    let mut sorted = phases.to_vec();
    sorted.sort();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(w[0]);
        }
    }
    Ok(sorted)
}
