//! Axial point-spread function of a confocal microscope focusing into
//! diamond, and its overlap with a stress standing wave.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::StandingWave;
use crate::error::{check, Result};
use crate::numeric::{integrate, simpson};

/// FWHM of `sinc²(π x)` in units of x.
pub const SINC2_FWHM: f64 = 0.885_892_941_378_904;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsfProfile {
    #[default]
    SincSquared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsfModel {
    /// Axial FWHM at the surface (m).
    pub fwhm0: f64,
    pub na: f64,
    pub n_dia: f64,
    pub profile: PsfProfile,
}

impl Default for PsfModel {
    fn default() -> Self {
        Self {
            fwhm0: 2e-6,
            na: 0.8,
            n_dia: 2.417,
            profile: PsfProfile::SincSquared,
        }
    }
}

impl PsfModel {
    pub fn validate(&self) -> Result<()> {
        check(
            self.fwhm0 > 0.0 && self.fwhm0.is_finite(),
            "fwhm0",
            "must be > 0",
            self.fwhm0,
        )?;
        check(self.na > 0.0, "na", "must be > 0", self.na)?;
        check(self.n_dia >= 1.0, "n_dia", "must be >= 1", self.n_dia)?;
        check(self.na < self.n_dia, "na", "must be < n_dia", self.na)?;
        // The marginal ray must exist in air too.
        check(
            self.na < 1.0 || self.n_dia == 1.0,
            "na",
            "must be < 1 (air side)",
            self.na,
        )?;
        Ok(())
    }

    pub fn theta_max(&self) -> f64 {
        (self.na / self.n_dia).asin()
    }

    /// Apparent-to-real depth ratio `n cosθ_dia / cosθ_air` for a ray at
    /// `theta_dia` inside the diamond.
    pub fn depth_ratio(&self, theta_dia: f64) -> f64 {
        let sin_air = self.n_dia * theta_dia.sin();
        let cos_air = (1.0 - sin_air * sin_air).max(0.0).sqrt();
        self.n_dia * theta_dia.cos() / cos_air
    }
}

/// Power-weighted mean of the depth ratio over the illuminated cone.
pub fn depth_correction_factor(psf: &PsfModel) -> Result<f64> {
    psf.validate()?;
    if psf.n_dia == 1.0 {
        return Ok(1.0);
    }
    let tmax = psf.theta_max();
    // dP/dθ ∝ tanθ_dia / cos²θ_air
    let weight = |t: f64| {
        let sin_air = psf.n_dia * t.sin();
        t.tan() / (1.0 - sin_air * sin_air)
    };
    let num = integrate(|t| psf.depth_ratio(t) * weight(t), 0.0, tmax, 1e-14);
    let den = integrate(weight, 0.0, tmax, 1e-14);
    Ok(num / den)
}

pub fn depth_correction(d_air: f64, psf: &PsfModel) -> Result<f64> {
    check(d_air >= 0.0, "d_air", "must be >= 0", d_air)?;
    Ok(d_air * depth_correction_factor(psf)?)
}

/// Axial FWHM at nominal focus depth `d_air`.
pub fn fwhm_at(d_air: f64, psf: &PsfModel) -> Result<f64> {
    check(d_air >= 0.0, "d_air", "must be >= 0", d_air)?;
    psf.validate()?;
    let spread = psf.depth_ratio(psf.theta_max()) - psf.depth_ratio(0.0);
    Ok(psf.fwhm0 + 0.5 * spread * d_air)
}

/// Axial PSF for one focus position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxialPsf {
    pub center: f64,
    pub fwhm: f64,
}

impl AxialPsf {
    pub fn new(center_d_air: f64, psf: &PsfModel) -> Result<Self> {
        Ok(Self {
            center: depth_correction(center_d_air, psf)?,
            fwhm: fwhm_at(center_d_air, psf)?,
        })
    }

    fn width(&self) -> f64 {
        self.fwhm / SINC2_FWHM
    }

    /// Unit-area density.
    pub fn density(&self, z: f64) -> f64 {
        let w = self.width();
        let x = PI * (z - self.center) / w;
        let s = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
        s * s / w
    }
}

pub fn psf_axial(z: f64, center_d_air: f64, psf: &PsfModel) -> Result<f64> {
    Ok(AxialPsf::new(center_d_air, psf)?.density(z))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Response {
    /// Signal proportional to |σ|.
    #[default]
    Linear,
    /// Two-level saturation `x/(1 + x)` with `x = |σ|/sigma_sat`.
    Saturating { sigma_sat: f64 },
}

impl Response {
    pub fn eval(&self, sigma_abs: f64, sigma_max: f64) -> f64 {
        match *self {
            Response::Linear => {
                if sigma_max > 0.0 {
                    sigma_abs / sigma_max
                } else {
                    0.0
                }
            }
            Response::Saturating { sigma_sat } => {
                let x = sigma_abs / sigma_sat;
                x / (1.0 + x)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthScanModel {
    pub psf: PsfModel,
    pub wave: StandingWave,
    /// Diamond thickness (m); the PSF is integrated over `[0, thickness]`.
    pub thickness: f64,
    pub response: Response,
    /// Nominal focus depths (m).
    pub d_air: Vec<f64>,
}

impl DepthScanModel {
    pub fn validate(&self) -> Result<()> {
        self.psf.validate()?;
        self.wave.validate()?;
        check(self.thickness > 0.0, "thickness", "must be > 0", self.thickness)?;
        if let Response::Saturating { sigma_sat } = self.response {
            check(sigma_sat > 0.0, "sigma_sat", "must be > 0", sigma_sat)?;
        }
        if let Some(&d) = self.d_air.iter().find(|d| !(**d >= 0.0)) {
            check(false, "d_air", "samples must be >= 0", d)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthScanPoint {
    pub d_air: f64,
    pub d_dia: f64,
    pub signal: f64,
}

/// PSF-weighted mean response at one focus depth, before normalization.
pub fn overlap(model: &DepthScanModel, d_air: f64) -> Result<f64> {
    let psf = AxialPsf::new(d_air, &model.psf)?;
    let w = psf.width();
    let lo = (psf.center - 60.0 * w).max(0.0);
    let hi = (psf.center + 60.0 * w).min(model.thickness);
    if hi <= lo {
        return Ok(0.0);
    }
    let step = w.min(0.5 * model.wave.wavelength) / 40.0;
    let n = (((hi - lo) / step).ceil() as usize).max(64);
    let wave = &model.wave;
    let num = simpson(
        |z| psf.density(z) * model.response.eval(wave.stress(z).abs(), wave.sigma_max),
        lo,
        hi,
        n,
    );
    let den = simpson(|z| psf.density(z), lo, hi, n);
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// Signal versus focus depth, normalized so the maximum is 1.
pub fn depth_scan_signal(model: &DepthScanModel) -> Result<Vec<DepthScanPoint>> {
    model.validate()?;
    let factor = depth_correction_factor(&model.psf)?;
    let raw = model
        .d_air
        .par_iter()
        .map(|&d| overlap(model, d))
        .collect::<Result<Vec<f64>>>()?;
    let max = raw.iter().copied().fold(0.0, f64::max);
    Ok(model
        .d_air
        .iter()
        .zip(raw)
        .map(|(&d_air, s)| DepthScanPoint {
            d_air,
            d_dia: d_air * factor,
            signal: if max > 0.0 { s / max } else { 0.0 },
        })
        .collect())
}

/// First anti-node strictly inside the diamond.
pub fn calibration_depth(model: &DepthScanModel) -> f64 {
    model
        .wave
        .antinodes_from(1e-3 * model.wave.wavelength)
        .next()
        .expect("anti-nodes are unbounded")
}

/// Overlap with the PSF focused on the calibration anti-node.
pub fn calibration_overlap(model: &DepthScanModel) -> Result<f64> {
    model.validate()?;
    let factor = depth_correction_factor(&model.psf)?;
    overlap(model, calibration_depth(model) / factor)
}

/// Overlap at the calibration anti-node divided by the overlap at the
/// following node.
pub fn antinode_node_ratio(model: &DepthScanModel) -> Result<f64> {
    model.validate()?;
    let factor = depth_correction_factor(&model.psf)?;
    let z = calibration_depth(model);
    let node = z + 0.25 * model.wave.wavelength;
    Ok(overlap(model, z / factor)? / overlap(model, node / factor)?)
}

/// `(max − min)/max` of a signal.
pub fn contrast(points: &[DepthScanPoint]) -> f64 {
    let max = points.iter().map(|p| p.signal).fold(f64::NEG_INFINITY, f64::max);
    let min = points.iter().map(|p| p.signal).fold(f64::INFINITY, f64::min);
    if max > 0.0 {
        (max - min) / max
    } else {
        0.0
    }
}
