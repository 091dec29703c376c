//! Stress driving-field estimate from an ODMSR spectrum and a magnetic
//! reference measurement.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::fit::{fit_triplet, TripletFit};
use super::SignalTrace;
use crate::error::{check, Error, Result};

/// A known drive and the background-free signal it produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagneticReference {
    /// Rabi frequency of the reference drive (Hz).
    pub omega: f64,
    /// Signal amplitude it produced, in trace units.
    pub amplitude: f64,
    /// Reference pulse length (s).
    pub duration: f64,
}

/// How signal amplitude maps back to a Rabi frequency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseLaw {
    /// `amplitude = C·sin²(πΩτ)` with `C` set by the reference; inverted on
    /// the principal branch `πΩτ ≤ π/2`.
    #[default]
    Coherent,
    /// `amplitude ∝ Ω²`, i.e. `Ω = Ω_ref·√(amplitude/amplitude_ref)`.
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Stress pulse length used for the spectrum (s).
    pub pulse_duration: f64,
    /// Hyperfine line spacing in the trace's x units (G).
    pub spacing: f64,
    pub law: ResponseLaw,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            pulse_duration: 6e-6,
            spacing: 0.77,
            law: ResponseLaw::Coherent,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub fit: TripletFit,
    pub peak_sum: f64,
    /// Peak sum divided by the overlap factor.
    pub ideal_amplitude: f64,
    /// Estimated peak stress Rabi frequency (Hz).
    pub omega: f64,
}

/// Fits the hyperfine triplet, sums its amplitudes, removes the PSF overlap
/// and converts the result to a Rabi frequency through the reference.
pub fn calibrate_driving(
    trace: &SignalTrace,
    reference: &MagneticReference,
    overlap: f64,
    cfg: &CalibrationConfig,
) -> Result<Calibration> {
    check(
        overlap > 0.0 && overlap <= 1.0,
        "overlap",
        "must lie in (0, 1]",
        overlap,
    )?;
    check(reference.omega > 0.0, "reference.omega", "must be > 0", reference.omega)?;
    check(
        reference.amplitude > 0.0,
        "reference.amplitude",
        "must be > 0",
        reference.amplitude,
    )?;
    check(cfg.spacing > 0.0, "spacing", "must be > 0", cfg.spacing)?;
    check(
        cfg.pulse_duration > 0.0,
        "pulse_duration",
        "must be > 0",
        cfg.pulse_duration,
    )?;

    let fit = fit_triplet(&trace.x, &trace.signal, cfg.spacing)
        .ok_or_else(|| Error::NoResolvablePeaks("triplet fit failed".into()))?;
    let strongest = fit.amplitudes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = (5.0 * fit.rms_residual).max(1e-9 * (1.0 + fit.background.abs()));
    if !(strongest > floor) {
        return Err(Error::NoResolvablePeaks(format!(
            "largest fitted amplitude {strongest:.3e} is below the noise floor {floor:.3e}"
        )));
    }
    let peak_sum: f64 = fit.amplitudes.iter().map(|a| a.max(0.0)).sum();
    let ideal_amplitude = peak_sum / overlap;

    let omega = match cfg.law {
        ResponseLaw::Quadratic => reference.omega * (ideal_amplitude / reference.amplitude).sqrt(),
        ResponseLaw::Coherent => {
            check(
                reference.duration > 0.0,
                "reference.duration",
                "must be > 0",
                reference.duration,
            )?;
            let scale = reference.amplitude / (PI * reference.omega * reference.duration).sin().powi(2);
            let s = ideal_amplitude / scale;
            if !(s <= 1.0) {
                return Err(Error::CalibrationRange(format!(
                    "ideal amplitude {ideal_amplitude:.4} exceeds the reference full-transfer level {scale:.4}"
                )));
            }
            s.sqrt().asin() / (PI * cfg.pulse_duration)
        }
    };
    Ok(Calibration {
        fit,
        peak_sum,
        ideal_amplitude,
        omega,
    })
}
