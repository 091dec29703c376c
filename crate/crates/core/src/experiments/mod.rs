//! Ensemble-averaged pulse-sequence simulations: ODMSR field scans,
//! Rabi-style pulse-length scans, magnetic stray-field control scans and the
//! driving-field calibration built on them.
//!
//! Every cell (field point, nuclear sublevel, stress sample) is evolved in the
//! rotating frame of its drive with exact 2×2 propagators. The lab-frame
//! propagator in [`crate::dynamics`] is the reference for that reduction.

mod calibration;
mod fit;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    chirp_unitary, landau_zener_probability, rwa_hamiltonian, rwa_unitary, DriveKind, DrivePulse, SpinState, Transition,
};
use crate::error::{check, Error, Result};
use crate::linalg::{propagator2, Mat2};
use crate::optics::{AxialPsf, DepthScanModel};
use crate::perturbation::{cross_driving_field, MisalignmentConfig};
use crate::spin_model::{
    build_hamiltonian, transition_frequencies, FieldConfig, Level, NuclearSublevel, PhysicalConstants,
};

pub use calibration::{calibrate_driving, Calibration, CalibrationConfig, MagneticReference, ResponseLaw};
pub use fit::{find_peaks, fit_decay, fit_triplet, DecayFit, Peak, TripletFit};

/// Stress samples used by [`EnsembleSpec::psf_weighted`].
pub const DEFAULT_STRESS_SAMPLES: usize = 64;

/// One stress sample: fraction of the peak stress and its weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressSample {
    pub fraction: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSpec {
    /// Weights of m_I = −1, 0, +1.
    pub hyperfine_weights: [f64; 3],
    pub stress: Vec<StressSample>,
    /// Signal per unit of missing |0⟩ population.
    pub contrast: f64,
    /// Constant offset attributed to pulse errors.
    pub background: f64,
    /// Standard deviation of additive Gaussian readout noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            hyperfine_weights: [1.0 / 3.0; 3],
            stress: vec![StressSample {
                fraction: 1.0,
                weight: 1.0,
            }],
            contrast: 1.0,
            background: 0.0,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl EnsembleSpec {
    pub fn homogeneous() -> Self {
        Self::default()
    }

    /// Replaces the stress distribution by `n` equal-weight quantiles of
    /// `|σ(z)|/σmax` weighted by the PSF focused at `d_air`.
    pub fn psf_weighted(mut self, model: &DepthScanModel, d_air: f64, n: usize) -> Result<Self> {
        self.stress = stress_quantiles(model, d_air, n)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.hyperfine_weights.iter().sum();
        check(
            self.hyperfine_weights.iter().all(|w| *w >= 0.0) && (total - 1.0).abs() < 1e-9,
            "hyperfine_weights",
            "must be non-negative and sum to 1",
            total,
        )?;
        check(!self.stress.is_empty(), "stress", "needs at least one sample", 0.0)?;
        let total: f64 = self.stress.iter().map(|s| s.weight).sum();
        check(
            self.stress.iter().all(|s| s.weight >= 0.0 && s.fraction >= 0.0) && (total - 1.0).abs() < 1e-9,
            "stress",
            "weights must be non-negative and sum to 1",
            total,
        )?;
        check(
            self.contrast > 0.0 && self.contrast <= 1.0,
            "contrast",
            "must lie in (0, 1]",
            self.contrast,
        )?;
        check(
            (0.0..1.0).contains(&self.background),
            "background",
            "must lie in [0, 1)",
            self.background,
        )?;
        check(self.noise >= 0.0, "noise", "must be >= 0", self.noise)?;
        Ok(())
    }

    /// Mean stress fraction.
    pub fn mean_fraction(&self) -> f64 {
        self.stress.iter().map(|s| s.fraction * s.weight).sum()
    }
}

fn stress_quantiles(model: &DepthScanModel, d_air: f64, n: usize) -> Result<Vec<StressSample>> {
    model.validate()?;
    check(n > 0, "samples", "must be > 0", n as f64)?;
    let psf = AxialPsf::new(d_air, &model.psf)?;
    let w = psf.fwhm;
    let lo = (psf.center - 60.0 * w).max(0.0);
    let hi = (psf.center + 60.0 * w).min(model.thickness);
    check(hi > lo, "d_air", "focus must overlap the diamond", d_air)?;
    let step = w.min(0.5 * model.wave.wavelength) / 40.0;
    let m = ((hi - lo) / step).ceil() as usize + 1;
    let dz = (hi - lo) / (m - 1) as f64;
    let mut cells: Vec<(f64, f64)> = (0..m)
        .map(|k| {
            let z = lo + k as f64 * dz;
            let edge = if k == 0 || k == m - 1 { 0.5 } else { 1.0 };
            let fraction = if model.wave.sigma_max > 0.0 {
                model.wave.stress(z).abs() / model.wave.sigma_max
            } else {
                0.0
            };
            (fraction, psf.density(z) * edge)
        })
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = cells.iter().map(|c| c.1).sum();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut it = cells.iter();
    let mut current = *it.next().expect("non-empty grid");
    acc += current.1;
    for k in 0..n {
        let target = (k as f64 + 0.5) / n as f64 * total;
        while acc < target {
            match it.next() {
                Some(c) => {
                    current = *c;
                    acc += c.1;
                }
                None => break,
            }
        }
        out.push(StressSample {
            fraction: current.0,
            weight: 1.0 / n as f64,
        });
    }
    Ok(out)
}

/// Magnetic adiabatic passage on |0⟩ ↔ |−1⟩, swept upward across a window
/// centered on the m_I = 0 transition at each field point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PassageSpec {
    /// Full sweep width (Hz).
    pub span: f64,
    pub duration: f64,
    /// Transverse field amplitude (G).
    pub amplitude: f64,
    /// Integration step of the chirp (s).
    pub max_step: f64,
    pub envelope: Envelope,
}

/// Amplitude shape of the passage pulse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Envelope {
    /// Constant amplitude, switched on and off abruptly.
    Flat,
    /// `sin²(πt/T)`: ramps from zero so the dressed states start and end on
    /// the bare levels.
    #[default]
    Hann,
}

impl Default for PassageSpec {
    fn default() -> Self {
        Self {
            span: 40e6,
            duration: 40e-6,
            // Ω = γB/√2 = 1 MHz
            amplitude: 1e6 * std::f64::consts::SQRT_2 / 2.8e6,
            max_step: 10e-9,
            envelope: Envelope::Hann,
        }
    }
}

impl PassageSpec {
    pub fn validate(&self) -> Result<()> {
        check(self.span > 0.0, "passage.span", "must be > 0", self.span)?;
        check(self.duration > 0.0, "passage.duration", "must be > 0", self.duration)?;
        check(self.amplitude > 0.0, "passage.amplitude", "must be > 0", self.amplitude)?;
        check(self.max_step > 0.0, "passage.max_step", "must be > 0", self.max_step)?;
        Ok(())
    }

    pub fn rabi_frequency(&self, consts: &PhysicalConstants) -> f64 {
        consts.gyromagnetic_ratio * self.amplitude * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn chirp_rate(&self) -> f64 {
        self.span / self.duration
    }

    /// Rotating-frame propagator for a transition `offset` Hz from the
    /// sweep center.
    pub fn unitary(&self, offset: f64, consts: &PhysicalConstants) -> Mat2 {
        let rabi = self.rabi_frequency(consts);
        let (start, stop) = (offset + 0.5 * self.span, offset - 0.5 * self.span);
        match self.envelope {
            Envelope::Flat => chirp_unitary(rabi, start, stop, self.duration, self.max_step),
            Envelope::Hann => {
                let steps = (self.duration / self.max_step).ceil().max(1.0) as usize;
                let dt = self.duration / steps as f64;
                let mut u = Mat2::identity();
                for k in 0..steps {
                    let t = (k as f64 + 0.5) * dt;
                    let x = t / self.duration;
                    let shape = (std::f64::consts::PI * x).sin().powi(2);
                    let h = rwa_hamiltonian(rabi * shape, start + (stop - start) * x, 0.0);
                    u = propagator2(&h, dt) * u;
                }
                u
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdmsrScan {
    /// Axial field points (G).
    pub b_par: Vec<f64>,
    pub omega_hbar: f64,
    /// Drive on |−1⟩ ↔ |+1⟩; its carrier must equal `omega_hbar`.
    pub pulse: DrivePulse,
    pub passage: PassageSpec,
    /// Static fields other than `b_par` and `m_i`.
    pub fields: FieldConfig,
}

impl OdmsrScan {
    /// Stress scan with peak perpendicular stress `sigma_perp` (Pa).
    pub fn stress(b_par: Vec<f64>, omega_hbar: f64, sigma_perp: f64, duration: f64) -> Self {
        Self {
            b_par,
            omega_hbar,
            pulse: DrivePulse {
                kind: DriveKind::Stress,
                carrier: omega_hbar,
                amplitude: sigma_perp,
                phase: 0.0,
                duration,
            },
            passage: PassageSpec::default(),
            fields: FieldConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check(!self.b_par.is_empty(), "b_par", "sweep must be non-empty", 0.0)?;
        if let Some(b) = self.b_par.iter().find(|b| !b.is_finite()) {
            check(false, "b_par", "must be finite", *b)?;
        }
        check(self.omega_hbar > 0.0, "omega_hbar", "must be > 0", self.omega_hbar)?;
        self.pulse.validate()?;
        check(
            self.pulse.duration > 0.0,
            "duration",
            "must be > 0",
            self.pulse.duration,
        )?;
        check(
            (self.pulse.carrier - self.omega_hbar).abs() <= 1e-9 * self.omega_hbar,
            "carrier",
            "must equal omega_hbar",
            self.pulse.carrier,
        )?;
        self.passage.validate()?;
        self.fields.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub x: Vec<f64>,
    pub signal: Vec<f64>,
    /// Noise-free signal of each nuclear sublevel (m_I = −1, 0, +1) alone.
    pub components: Vec<[f64; 3]>,
    pub warnings: Vec<String>,
}

impl SignalTrace {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn peaks(&self, min_prominence: f64) -> Vec<Peak> {
        find_peaks(&self.x, &self.signal, min_prominence)
    }
}

/// Population-missing from |0⟩ after AP → drive → AP for one cell.
fn cell_missing(passage: &Mat2, drive: &Mat2) -> f64 {
    let s = SpinState::basis(Level::Zero)
        .apply_pair(Transition::ZeroMinus, passage)
        .apply_pair(Transition::MinusPlus, drive)
        .apply_pair(Transition::ZeroMinus, passage);
    (1.0 - s.population(Level::Zero)).clamp(0.0, 1.0)
}

struct Cell {
    passage: Mat2,
    omega_pm: f64,
}

fn cell(
    b_par: f64,
    m_i: NuclearSublevel,
    base: &FieldConfig,
    passage: &PassageSpec,
    consts: &PhysicalConstants,
) -> Cell {
    let fields = FieldConfig { b_par, m_i, ..*base };
    let t = transition_frequencies(&build_hamiltonian(&fields, consts));
    let center = transition_frequencies(&build_hamiltonian(
        &FieldConfig {
            m_i: NuclearSublevel::Zero,
            ..fields
        },
        consts,
    ))
    .omega_minus;
    Cell {
        passage: passage.unitary(t.omega_minus - center, consts),
        omega_pm: t.omega_pm,
    }
}

fn passage_warnings(passage: &PassageSpec, consts: &PhysicalConstants) -> Vec<String> {
    let p = landau_zener_probability(passage.rabi_frequency(consts), passage.chirp_rate());
    let u = passage.unitary(0.0, consts);
    let miss = 1.0 - u[(1, 0)].norm_sqr();
    let mut out = Vec::new();
    if p > 1e-3 || miss > 1e-2 {
        out.push(format!(
            "passage is not adiabatic: Landau-Zener probability {p:.3e}, transfer error {miss:.3e}"
        ));
    }
    out
}

fn add_noise(signal: &mut [f64], ens: &EnsembleSpec) {
    if ens.noise == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ens.seed);
    let normal = Normal::new(0.0, ens.noise).expect("noise validated");
    for s in signal.iter_mut() {
        *s = (*s + normal.sample(&mut rng)).clamp(0.0, 1.0 + ens.background);
    }
}

/// Averages the per-sublevel signals and finishes the trace.
fn assemble(x: Vec<f64>, components: Vec<[f64; 3]>, ens: &EnsembleSpec, warnings: Vec<String>) -> SignalTrace {
    let mut signal: Vec<f64> = components
        .iter()
        .map(|c| c.iter().zip(&ens.hyperfine_weights).map(|(s, w)| s * w).sum())
        .collect();
    add_noise(&mut signal, ens);
    SignalTrace {
        x,
        signal,
        components,
        warnings,
    }
}

/// Field scan of the AP → drive → AP sequence on |−1⟩ ↔ |+1⟩, with each
/// stress sample driving at `fraction·Ω`.
fn run_pm_scan<F>(scan: &OdmsrScan, ens: &EnsembleSpec, consts: &PhysicalConstants, rabi_of: F) -> Result<SignalTrace>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    scan.validate()?;
    ens.validate()?;
    consts.validate()?;
    let components = scan
        .b_par
        .par_iter()
        .map(|&b| {
            let rabi = rabi_of(b)?;
            let mut out = [0.0; 3];
            for (slot, m_i) in out.iter_mut().zip(NuclearSublevel::ALL) {
                let c = cell(b, m_i, &scan.fields, &scan.passage, consts);
                let detuning = c.omega_pm - scan.omega_hbar;
                let missing: f64 = ens
                    .stress
                    .iter()
                    .map(|s| {
                        let u = rwa_unitary(rabi * s.fraction, detuning, scan.pulse.phase, scan.pulse.duration);
                        s.weight * cell_missing(&c.passage, &u)
                    })
                    .sum();
                *slot = ens.background + ens.contrast * missing;
            }
            Ok(out)
        })
        .collect::<Result<Vec<[f64; 3]>>>()?;
    Ok(assemble(
        scan.b_par.clone(),
        components,
        ens,
        passage_warnings(&scan.passage, consts),
    ))
}

/// ODMSR spectrum: missing |0⟩ population versus axial field.
pub fn run_odmsr_scan(scan: &OdmsrScan, ens: &EnsembleSpec, consts: &PhysicalConstants) -> Result<SignalTrace> {
    if scan.pulse.kind != DriveKind::Stress {
        return Err(Error::TransitionMismatch {
            kind: "magnetic",
            transition: Transition::MinusPlus.name(),
        });
    }
    let rabi = consts.stress_coupling * scan.pulse.amplitude;
    run_pm_scan(scan, ens, consts, |_| Ok(rabi))
}

/// Same sequence with a weak magnetic drive at `omega_hbar`, coupling
/// |−1⟩ ↔ |+1⟩ only through the static transverse field `mis.b_x0`. The
/// oscillating amplitude is `mis.b_x1`; the stress distribution is ignored.
pub fn run_stray_field_control(
    scan: &OdmsrScan,
    mis: &MisalignmentConfig,
    ens: &EnsembleSpec,
    consts: &PhysicalConstants,
) -> Result<SignalTrace> {
    let mut scan = scan.clone();
    scan.pulse.kind = DriveKind::Magnetic;
    scan.pulse.amplitude = mis.b_x1;
    scan.fields.b_perp = mis.b_x0;
    scan.fields.b_perp_azimuth = 0.0;
    let ens = EnsembleSpec {
        stress: vec![StressSample {
            fraction: 1.0,
            weight: 1.0,
        }],
        ..ens.clone()
    };
    let mut trace = run_pm_scan(&scan, &ens, consts, |b| {
        cross_driving_field(&MisalignmentConfig { b_par: b, ..*mis }, consts)
    })?;
    trace.warnings.extend(mis.warnings());
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiScan {
    /// Drive pulse lengths (s).
    pub taus: Vec<f64>,
    pub b_par: f64,
    pub omega_hbar: f64,
    /// Peak perpendicular stress (Pa).
    pub sigma_perp: f64,
    pub passage: PassageSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiTrace {
    pub trace: SignalTrace,
    pub decay: Option<DecayFit>,
}

/// Pulse-length scan at fixed field. The compensation pulse that keeps the
/// total drive time constant acts after the second passage and leaves the
/// |0⟩ population unchanged, so it is not simulated.
pub fn run_rabi_style(scan: &RabiScan, ens: &EnsembleSpec, consts: &PhysicalConstants) -> Result<RabiTrace> {
    check(!scan.taus.is_empty(), "taus", "must be non-empty", 0.0)?;
    if let Some(t) = scan.taus.iter().find(|t| !(**t >= 0.0)) {
        check(false, "taus", "must be >= 0", *t)?;
    }
    check(scan.sigma_perp >= 0.0, "sigma_perp", "must be >= 0", scan.sigma_perp)?;
    check(scan.omega_hbar > 0.0, "omega_hbar", "must be > 0", scan.omega_hbar)?;
    scan.passage.validate()?;
    ens.validate()?;
    consts.validate()?;
    let rabi = consts.stress_coupling * scan.sigma_perp;
    let cells: Vec<Cell> = NuclearSublevel::ALL
        .iter()
        .map(|&m| cell(scan.b_par, m, &FieldConfig::default(), &scan.passage, consts))
        .collect();
    let components: Vec<[f64; 3]> = scan
        .taus
        .par_iter()
        .map(|&tau| {
            let mut out = [0.0; 3];
            for (slot, c) in out.iter_mut().zip(&cells) {
                let detuning = c.omega_pm - scan.omega_hbar;
                let missing: f64 = ens
                    .stress
                    .iter()
                    .map(|s| s.weight * cell_missing(&c.passage, &rwa_unitary(rabi * s.fraction, detuning, 0.0, tau)))
                    .sum();
                *slot = ens.background + ens.contrast * missing;
            }
            out
        })
        .collect();
    let trace = assemble(
        scan.taus.clone(),
        components,
        ens,
        passage_warnings(&scan.passage, consts),
    );
    let decay = fit_decay(&trace.x, &trace.signal);
    Ok(RabiTrace { trace, decay })
}

/// Field points `start, start + step, …` up to and including `stop`.
pub fn field_sweep(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    check(step > 0.0, "step", "must be > 0", step)?;
    check(stop >= start, "stop", "must be >= start", stop)?;
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

#[cfg(test)]
mod tests;
