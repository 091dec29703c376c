//! NV ground-state spin-1 Hamiltonian.
//!
//! Basis ordering is fixed as {|+1⟩, |0⟩, |−1⟩} throughout the crate, and all
//! Hamiltonian entries are in Hz.
//!
//! The ¹⁴N hyperfine interaction is treated as a classical axial shift: a
//! nuclear sublevel `m_i` adds `m_i·A` to the `S_z` coefficient. Electric
//! fields enter with the same operator structure as perpendicular stress.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};
use crate::linalg::{c, real, HermitianMatrix, Mat3};

/// Index of a spin level in the fixed basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Plus,
    Zero,
    Minus,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Plus, Level::Zero, Level::Minus];

    pub fn index(self) -> usize {
        match self {
            Level::Plus => 0,
            Level::Zero => 1,
            Level::Minus => 2,
        }
    }

    pub fn ms(self) -> i32 {
        match self {
            Level::Plus => 1,
            Level::Zero => 0,
            Level::Minus => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConstants {
    /// Zero-field splitting D0 (Hz).
    pub zero_field_splitting: f64,
    /// Gyromagnetic ratio (Hz/G).
    pub gyromagnetic_ratio: f64,
    /// Perpendicular stress coupling (Hz/Pa).
    pub stress_coupling: f64,
    /// Perpendicular ground-state electric coupling (Hz·cm/V).
    pub electric_coupling: f64,
    /// ¹⁴N hyperfine constant A (Hz).
    pub hyperfine: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        let gyromagnetic_ratio = 2.8e6;
        Self {
            zero_field_splitting: 2.87e9,
            gyromagnetic_ratio,
            // 0.03 MHz/MPa
            stress_coupling: 0.03e6 / 1e6,
            electric_coupling: 17.0,
            // A/γ = 0.77 G
            hyperfine: gyromagnetic_ratio * 0.77,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("zero_field_splitting", self.zero_field_splitting),
            ("gyromagnetic_ratio", self.gyromagnetic_ratio),
            ("stress_coupling", self.stress_coupling),
            ("electric_coupling", self.electric_coupling),
            ("hyperfine", self.hyperfine),
        ];
        for (name, value) in fields {
            check(value.is_finite() && value > 0.0, name, "must be finite and > 0", value)?;
        }
        Ok(())
    }

    /// Hyperfine splitting expressed as an axial field (G).
    pub fn hyperfine_field(&self) -> f64 {
        self.hyperfine / self.gyromagnetic_ratio
    }
}

/// ¹⁴N nuclear spin projection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub enum NuclearSublevel {
    Minus,
    #[default]
    Zero,
    Plus,
}

impl NuclearSublevel {
    pub const ALL: [NuclearSublevel; 3] = [Self::Minus, Self::Zero, Self::Plus];

    pub fn value(self) -> f64 {
        i32::from(self) as f64
    }
}

impl From<NuclearSublevel> for i32 {
    fn from(m: NuclearSublevel) -> i32 {
        match m {
            NuclearSublevel::Minus => -1,
            NuclearSublevel::Zero => 0,
            NuclearSublevel::Plus => 1,
        }
    }
}

impl TryFrom<i32> for NuclearSublevel {
    type Error = Error;

    fn try_from(v: i32) -> Result<Self> {
        match v {
            -1 => Ok(Self::Minus),
            0 => Ok(Self::Zero),
            1 => Ok(Self::Plus),
            _ => Err(Error::InvalidParameter {
                name: "m_i",
                constraint: "must be one of -1, 0, +1",
                value: v as f64,
            }),
        }
    }
}

/// Static fields acting on one NV center.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    /// Axial magnetic field (G).
    pub b_par: f64,
    /// Transverse static magnetic field magnitude (G).
    pub b_perp: f64,
    /// Azimuth of the transverse field from the x axis (rad).
    pub b_perp_azimuth: f64,
    /// Perpendicular stress components (Pa).
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Perpendicular electric field magnitude (V/cm).
    pub e_perp: f64,
    /// Azimuth of the electric field; `E_x = E cos φ` takes the `σ_x` slot.
    pub e_azimuth: f64,
    pub m_i: NuclearSublevel,
}

impl FieldConfig {
    pub fn axial(b_par: f64) -> Self {
        Self {
            b_par,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("b_par", self.b_par),
            ("b_perp", self.b_perp),
            ("b_perp_azimuth", self.b_perp_azimuth),
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("e_perp", self.e_perp),
            ("e_azimuth", self.e_azimuth),
        ];
        for (name, value) in fields {
            check(value.is_finite(), name, "must be finite", value)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinOperators {
    pub sx: Mat3,
    pub sy: Mat3,
    pub sz: Mat3,
}

impl SpinOperators {
    /// `S_x S_y + S_y S_x`
    pub fn xy_anticommutator(&self) -> Mat3 {
        self.sx * self.sy + self.sy * self.sx
    }

    /// `S_x² − S_y²`
    pub fn xx_minus_yy(&self) -> Mat3 {
        self.sx * self.sx - self.sy * self.sy
    }
}

pub fn spin1_operators() -> SpinOperators {
    let r = real(FRAC_1_SQRT_2);
    let z = real(0.0);
    let i = c(0.0, FRAC_1_SQRT_2);
    SpinOperators {
        sx: Mat3::new(z, r, z, r, z, r, z, r, z),
        sy: Mat3::new(z, -i, z, i, z, -i, z, i, z),
        sz: Mat3::from_diagonal(&nalgebra::Vector3::new(real(1.0), z, real(-1.0))),
    }
}

/// Perpendicular-stress-like coupling `a·(S_xS_y + S_yS_x) + b·(S_x² − S_y²)`.
pub(crate) fn transverse_anisotropy(ops: &SpinOperators, a: f64, b: f64) -> Mat3 {
    ops.xy_anticommutator() * real(a) + ops.xx_minus_yy() * real(b)
}

pub fn build_hamiltonian(fields: &FieldConfig, consts: &PhysicalConstants) -> HermitianMatrix {
    let ops = spin1_operators();
    let gamma = consts.gyromagnetic_ratio;
    let axial = gamma * fields.b_par + fields.m_i.value() * consts.hyperfine;
    let (bs, bc) = fields.b_perp_azimuth.sin_cos();
    let (es, ec) = fields.e_azimuth.sin_cos();

    let h = ops.sz * ops.sz * real(consts.zero_field_splitting)
        + ops.sz * real(axial)
        + (ops.sx * real(bc) + ops.sy * real(bs)) * real(gamma * fields.b_perp)
        + transverse_anisotropy(
            &ops,
            consts.stress_coupling * fields.sigma_x,
            consts.stress_coupling * fields.sigma_y,
        )
        + transverse_anisotropy(
            &ops,
            consts.electric_coupling * fields.e_perp * ec,
            consts.electric_coupling * fields.e_perp * es,
        );
    HermitianMatrix::symmetrized(h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionFrequencies {
    /// `E(+1) − E(0)` (Hz).
    pub omega_plus: f64,
    /// `E(−1) − E(0)` (Hz).
    pub omega_minus: f64,
    /// `E(+1) − E(−1)` (Hz).
    pub omega_pm: f64,
    /// Set when eigenvector labeling is not clear-cut (strong mixing or
    /// degeneracy); labels are then assigned by maximum overlap.
    pub ambiguous: bool,
}

/// Minimum overlap of a labeled eigenvector with its basis state below which
/// the labeling is reported as ambiguous.
const LABEL_OVERLAP_MIN: f64 = 0.75;

/// Energies of the eigenstates labeled |+1⟩, |0⟩, |−1⟩ (basis order) together
/// with the eigenvector matrix reordered the same way.
pub fn labeled_eigenstates(h: &HermitianMatrix) -> ([f64; 3], Mat3, bool) {
    let eig = h.eigh();
    let overlap = |basis: usize, col: usize| eig.vectors[(basis, col)].norm_sqr();

    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let score = |p: &[usize; 3]| (0..3).map(|b| overlap(b, p[b])).sum::<f64>();
    let mut ranked: Vec<([usize; 3], f64)> = PERMS.iter().map(|p| (*p, score(p))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let best = ranked[0].0;

    let min_overlap = (0..3).map(|b| overlap(b, best[b])).fold(f64::INFINITY, f64::min);
    let tie = (ranked[0].1 - ranked[1].1).abs() < 1e-9;
    let ambiguous = min_overlap < LABEL_OVERLAP_MIN || tie;

    let mut energies = [0.0; 3];
    let mut vectors = Mat3::zeros();
    for b in 0..3 {
        energies[b] = eig.values[best[b]];
        let mut col = eig.vectors.column(best[b]).into_owned();
        // phase convention: component on the labeling basis state is real ≥ 0
        let pivot = col[b];
        if pivot.norm() > 0.0 {
            col *= pivot.conj() / pivot.norm();
        }
        vectors.set_column(b, &col);
    }
    (energies, vectors, ambiguous)
}

pub fn transition_frequencies(h: &HermitianMatrix) -> TransitionFrequencies {
    let (e, _, ambiguous) = labeled_eigenstates(h);
    let (plus, zero, minus) = (e[0], e[1], e[2]);
    TransitionFrequencies {
        omega_plus: plus - zero,
        omega_minus: minus - zero,
        omega_pm: plus - minus,
        ambiguous,
    }
}
