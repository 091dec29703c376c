//! Magnetic cross-driving of |−1⟩ ↔ |+1⟩ through a static transverse field,
//! and the electric-field driving bound.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};
use crate::linalg::{real, HermitianMatrix, Mat3};
use crate::spin_model::PhysicalConstants;

/// `|γB∥|/D0` at or above which the formulas are rejected.
pub const ANTI_CROSSING_LIMIT: f64 = 0.99;
/// `B_x0/B∥` above which the weak-mixing assumption is flagged.
pub const WEAK_MIXING_LIMIT: f64 = 0.2;

/// Which closed form is authoritative for the cross-driving Rabi frequency.
/// The two differ by exactly a factor of 2.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossDrivingFormula {
    /// `Ω = γ²·B_x1·B_x0·D0 / (2(D0² − γ²B∥²))`.
    #[default]
    Direct,
    /// `Ω = ratio · γ·B_x1/√2`, with the ratio from [`driving_ratio`].
    Ratio,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MisalignmentConfig {
    /// Axial static field (G).
    pub b_par: f64,
    /// Static transverse field along x (G).
    pub b_x0: f64,
    /// Oscillating transverse field amplitude (G).
    pub b_x1: f64,
    /// Oscillating stray field of the transducer (G).
    pub b_1_hbar: f64,
    pub formula: CrossDrivingFormula,
}

impl Default for MisalignmentConfig {
    fn default() -> Self {
        Self {
            b_par: 192.0,
            b_x0: 10.0,
            b_x1: 0.17,
            b_1_hbar: 0.17,
            formula: CrossDrivingFormula::Direct,
        }
    }
}

impl MisalignmentConfig {
    pub fn validate(&self, consts: &PhysicalConstants) -> Result<()> {
        check(self.b_par > 0.0, "b_par", "must be > 0", self.b_par)?;
        check(self.b_x0 >= 0.0, "b_x0", "must be >= 0", self.b_x0)?;
        check(self.b_x1 >= 0.0, "b_x1", "must be >= 0", self.b_x1)?;
        check(self.b_1_hbar >= 0.0, "b_1_hbar", "must be >= 0", self.b_1_hbar)?;
        let ratio = (consts.gyromagnetic_ratio * self.b_par).abs() / consts.zero_field_splitting;
        if ratio >= ANTI_CROSSING_LIMIT {
            return Err(Error::AntiCrossing { ratio });
        }
        Ok(())
    }

    /// Non-fatal diagnostics.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.b_par > 0.0 && self.b_x0 / self.b_par > WEAK_MIXING_LIMIT {
            out.push(format!(
                "b_x0/b_par = {:.3} exceeds {WEAK_MIXING_LIMIT}; first-order mixing is inaccurate",
                self.b_x0 / self.b_par
            ));
        }
        out
    }

    /// Same configuration driven by the transducer stray field.
    pub fn with_stray_field(&self) -> Self {
        Self {
            b_x1: self.b_1_hbar,
            ..*self
        }
    }
}

fn transition_gaps(cfg: &MisalignmentConfig, consts: &PhysicalConstants) -> Result<(f64, f64)> {
    let gb = consts.gyromagnetic_ratio * cfg.b_par;
    let (wp, wm) = (consts.zero_field_splitting + gb, consts.zero_field_splitting - gb);
    if wp == 0.0 || wm == 0.0 {
        return Err(Error::Degenerate(format!(
            "transition frequency vanishes at b_par = {} G",
            cfg.b_par
        )));
    }
    Ok((wp, wm))
}

/// `S_x` in the first-order perturbed eigenbasis of `D0 Sz² + γB∥Sz + γB_x0 Sx`,
/// rows and columns ordered |+1′⟩, |0′⟩, |−1′⟩.
pub fn perturbed_sx_matrix(cfg: &MisalignmentConfig, consts: &PhysicalConstants) -> Result<HermitianMatrix> {
    check(cfg.b_par.is_finite(), "b_par", "must be finite", cfg.b_par)?;
    check(cfg.b_x0.is_finite(), "b_x0", "must be finite", cfg.b_x0)?;
    let (wp, wm) = transition_gaps(cfg, consts)?;
    let gbx = consts.gyromagnetic_ratio * cfg.b_x0;
    let s = FRAC_1_SQRT_2;
    let corner = 0.5 * gbx * (1.0 / wp + 1.0 / wm);
    #[rustfmt::skip]
    let m = Mat3::new(
        real(gbx / wp), real(s),                          real(corner),
        real(s),        real(-gbx * (1.0 / wp + 1.0 / wm)), real(s),
        real(corner),   real(s),                          real(gbx / wm),
    );
    HermitianMatrix::new(m)
}

/// Rabi frequency (Hz) of |−1⟩ ↔ |+1⟩ under the oscillating field `b_x1`.
pub fn cross_driving_field(cfg: &MisalignmentConfig, consts: &PhysicalConstants) -> Result<f64> {
    cfg.validate(consts)?;
    let g = consts.gyromagnetic_ratio;
    let d = consts.zero_field_splitting;
    Ok(match cfg.formula {
        CrossDrivingFormula::Direct => g * g * cfg.b_x1 * cfg.b_x0 * d / (2.0 * (d * d - (g * cfg.b_par).powi(2))),
        CrossDrivingFormula::Ratio => driving_ratio(cfg, consts)? * g * cfg.b_x1 / SQRT_2,
    })
}

/// `Ω(−1↔+1) / Ω(0↔±1)` for the same oscillating field.
pub fn driving_ratio(cfg: &MisalignmentConfig, consts: &PhysicalConstants) -> Result<f64> {
    cfg.validate(consts)?;
    let g = consts.gyromagnetic_ratio;
    let d = consts.zero_field_splitting;
    Ok(SQRT_2 * g * cfg.b_x0 * d / (d * d - (g * cfg.b_par).powi(2)))
}

/// Rabi frequency (Hz) from a perpendicular electric field (V/cm).
pub fn electric_driving_bound(e_perp: f64, consts: &PhysicalConstants) -> Result<f64> {
    check(e_perp >= 0.0 && e_perp.is_finite(), "e_perp", "must be >= 0", e_perp)?;
    Ok(consts.electric_coupling * e_perp)
}
