//! Time evolution of the three-level spin.
//!
//! `propagate` integrates the Schrödinger equation with piecewise-constant
//! midpoint exponentials, which keeps every step exactly unitary. The RWA
//! helpers reduce a driven pair of levels to an analytic two-level problem in
//! the frame co-rotating with the drive; the full propagator remains the
//! reference for them.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};
use crate::linalg::{propagator2, real, HermitianMatrix, Mat2, Mat3, Vec3, C64};
use crate::spin_model::{
    build_hamiltonian, spin1_operators, transition_frequencies, FieldConfig, Level, PhysicalConstants,
};

pub const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinState(Vec3);

impl SpinState {
    pub fn new(amplitudes: [C64; 3]) -> Result<Self> {
        let v = Vec3::new(amplitudes[0], amplitudes[1], amplitudes[2]);
        let norm = v.norm();
        check((norm - 1.0).abs() < NORM_TOL, "state", "must be normalized", norm)?;
        Ok(Self(v))
    }

    pub fn basis(level: Level) -> Self {
        let mut v = Vec3::zeros();
        v[level.index()] = real(1.0);
        Self(v)
    }

    pub fn amplitudes(&self) -> &Vec3 {
        &self.0
    }

    pub fn amplitude(&self, level: Level) -> C64 {
        self.0[level.index()]
    }

    pub fn population(&self, level: Level) -> f64 {
        self.0[level.index()].norm_sqr()
    }

    /// Populations in basis order (+1, 0, −1).
    pub fn populations(&self) -> [f64; 3] {
        [self.0[0].norm_sqr(), self.0[1].norm_sqr(), self.0[2].norm_sqr()]
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn apply(&self, u: &Mat3) -> Self {
        Self(u * self.0)
    }

    /// Applies a 2×2 unitary acting on (`lower`, `upper`) of `transition`.
    pub fn apply_pair(&self, transition: Transition, u: &Mat2) -> Self {
        let (a, b) = transition.levels();
        let (ia, ib) = (a.index(), b.index());
        let mut v = self.0;
        let (ca, cb) = (self.0[ia], self.0[ib]);
        v[ia] = u[(0, 0)] * ca + u[(0, 1)] * cb;
        v[ib] = u[(1, 0)] * ca + u[(1, 1)] * cb;
        Self(v)
    }
}

/// A pair of levels addressed by a drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transition {
    ZeroMinus,
    ZeroPlus,
    MinusPlus,
}

impl Transition {
    /// `(lower, upper)`; the transition frequency is `E(upper) − E(lower)`.
    pub fn levels(self) -> (Level, Level) {
        match self {
            Transition::ZeroMinus => (Level::Zero, Level::Minus),
            Transition::ZeroPlus => (Level::Zero, Level::Plus),
            Transition::MinusPlus => (Level::Minus, Level::Plus),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transition::ZeroMinus => "|0>-|-1>",
            Transition::ZeroPlus => "|0>-|+1>",
            Transition::MinusPlus => "|-1>-|+1>",
        }
    }

    pub fn frequency(self, fields: &FieldConfig, consts: &PhysicalConstants) -> f64 {
        let t = transition_frequencies(&build_hamiltonian(fields, consts));
        match self {
            Transition::ZeroMinus => t.omega_minus,
            Transition::ZeroPlus => t.omega_plus,
            Transition::MinusPlus => t.omega_pm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveKind {
    /// Oscillating perpendicular stress (amplitude in Pa) in the `S_x² − S_y²`
    /// channel.
    Stress,
    /// Oscillating transverse magnetic field along x (amplitude in G).
    Magnetic,
}

impl DriveKind {
    fn name(self) -> &'static str {
        match self {
            DriveKind::Stress => "stress",
            DriveKind::Magnetic => "magnetic",
        }
    }
}

/// A constant-amplitude drive `amplitude·cos(2π·carrier·t + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivePulse {
    pub kind: DriveKind,
    pub carrier: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub duration: f64,
}

impl DrivePulse {
    pub fn validate(&self) -> Result<()> {
        check(self.duration >= 0.0, "duration", "must be >= 0", self.duration)?;
        check(self.amplitude >= 0.0, "amplitude", "must be >= 0", self.amplitude)?;
        check(self.carrier.is_finite(), "carrier", "must be finite", self.carrier)?;
        Ok(())
    }

    fn operator(&self, consts: &PhysicalConstants) -> Mat3 {
        let ops = spin1_operators();
        match self.kind {
            DriveKind::Stress => ops.xx_minus_yy() * real(consts.stress_coupling),
            DriveKind::Magnetic => ops.sx * real(consts.gyromagnetic_ratio),
        }
    }

    /// Lab-frame Hamiltonian of this pulse on top of the static fields.
    pub fn hamiltonian(&self, fields: &FieldConfig, consts: &PhysicalConstants) -> DrivenHamiltonian {
        DrivenHamiltonian {
            base: build_hamiltonian(fields, consts),
            operator: self.operator(consts),
            amplitude: self.amplitude,
            carrier: self.carrier,
            chirp: 0.0,
            phase: self.phase,
        }
    }
}

/// Linear frequency chirp at constant magnetic amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPulse {
    pub start: f64,
    pub stop: f64,
    /// Transverse magnetic amplitude (G).
    pub amplitude: f64,
    pub duration: f64,
    pub transition: Transition,
}

impl SweepPulse {
    pub fn validate(&self) -> Result<()> {
        check(self.duration > 0.0, "duration", "must be > 0", self.duration)?;
        check(self.amplitude >= 0.0, "amplitude", "must be >= 0", self.amplitude)?;
        if self.transition == Transition::MinusPlus {
            return Err(Error::TransitionMismatch {
                kind: "magnetic",
                transition: self.transition.name(),
            });
        }
        Ok(())
    }

    /// Chirp rate (Hz/s).
    pub fn chirp_rate(&self) -> f64 {
        (self.stop - self.start) / self.duration
    }

    pub fn rabi_frequency(&self, consts: &PhysicalConstants) -> f64 {
        magnetic_rabi(self.amplitude, consts)
    }

    pub fn brackets(&self, frequency: f64) -> bool {
        (self.start - frequency) * (self.stop - frequency) < 0.0
    }

    pub fn lab_hamiltonian(&self, fields: &FieldConfig, consts: &PhysicalConstants) -> DrivenHamiltonian {
        DrivenHamiltonian {
            base: build_hamiltonian(fields, consts),
            operator: spin1_operators().sx * real(consts.gyromagnetic_ratio),
            amplitude: self.amplitude,
            carrier: self.start,
            chirp: self.chirp_rate(),
            phase: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagatorConfig {
    /// Upper bound on the integration step (s).
    pub max_step: f64,
    /// When set, the step is halved until the largest population change
    /// between successive refinements drops below this value.
    pub tolerance: Option<f64>,
    pub min_step: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            max_step: 1e-9,
            tolerance: None,
            min_step: 1e-15,
        }
    }
}

impl PropagatorConfig {
    /// Fifty steps per carrier period.
    pub fn for_carrier(carrier: f64) -> Self {
        Self {
            max_step: 1.0 / (50.0 * carrier.abs()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check(self.max_step > 0.0, "max_step", "must be > 0", self.max_step)?;
        check(self.min_step > 0.0, "min_step", "must be > 0", self.min_step)?;
        if let Some(tol) = self.tolerance {
            check(tol > 0.0, "tolerance", "must be > 0", tol)?;
        }
        Ok(())
    }
}

/// A Hamiltonian (Hz) as a function of time.
pub trait Hamiltonian {
    fn at(&self, t: f64) -> Mat3;

    /// Static Hamiltonians are exponentiated in a single step.
    fn is_static(&self) -> bool {
        false
    }
}

impl Hamiltonian for HermitianMatrix {
    fn at(&self, _t: f64) -> Mat3 {
        *self.matrix()
    }

    fn is_static(&self) -> bool {
        true
    }
}

impl<F: Fn(f64) -> Mat3> Hamiltonian for F {
    fn at(&self, t: f64) -> Mat3 {
        self(t)
    }
}

/// `base + amplitude·cos(2π(carrier·t + chirp·t²/2) + phase)·operator`
#[derive(Clone, Copy, Debug)]
pub struct DrivenHamiltonian {
    pub base: HermitianMatrix,
    pub operator: Mat3,
    pub amplitude: f64,
    pub carrier: f64,
    pub chirp: f64,
    pub phase: f64,
}

impl Hamiltonian for DrivenHamiltonian {
    fn at(&self, t: f64) -> Mat3 {
        let arg = 2.0 * PI * (self.carrier * t + 0.5 * self.chirp * t * t) + self.phase;
        self.base.matrix() + self.operator * real(self.amplitude * arg.cos())
    }

    fn is_static(&self) -> bool {
        self.amplitude == 0.0
    }
}

fn step_through<H: Hamiltonian + ?Sized>(state: &SpinState, h: &H, duration: f64, steps: usize) -> Result<SpinState> {
    let dt = duration / steps as f64;
    let mut v = *state.amplitudes();
    for k in 0..steps {
        let t = (k as f64 + 0.5) * dt;
        let m = h.at(t);
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteHamiltonian { time: t });
        }
        v = HermitianMatrix::symmetrized(m).propagator(dt) * v;
    }
    Ok(SpinState(v))
}

/// Evolves `state` under `h` for `duration` seconds.
pub fn propagate<H: Hamiltonian + ?Sized>(
    state: &SpinState,
    h: &H,
    duration: f64,
    cfg: &PropagatorConfig,
) -> Result<SpinState> {
    check(
        duration >= 0.0 && duration.is_finite(),
        "duration",
        "must be finite and >= 0",
        duration,
    )?;
    cfg.validate()?;
    if duration == 0.0 {
        return Ok(*state);
    }
    if h.is_static() {
        return step_through(state, h, duration, 1);
    }

    let mut steps = (duration / cfg.max_step).ceil().max(1.0) as usize;
    let mut current = step_through(state, h, duration, steps)?;
    let Some(tol) = cfg.tolerance else {
        return Ok(current);
    };
    loop {
        let step = duration / (2 * steps) as f64;
        let refined = step_through(state, h, duration, 2 * steps)?;
        let change = current
            .populations()
            .iter()
            .zip(refined.populations())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < tol {
            return Ok(refined);
        }
        if step < cfg.min_step {
            return Err(Error::StepUnderflow {
                step,
                min_step: cfg.min_step,
                last_change: change,
                tolerance: tol,
            });
        }
        steps *= 2;
        current = refined;
    }
}

pub(crate) fn magnetic_rabi(amplitude: f64, consts: &PhysicalConstants) -> f64 {
    consts.gyromagnetic_ratio * amplitude * FRAC_1_SQRT_2
}

/// Transition nearest in frequency to `carrier`.
fn addressed_transition(carrier: f64, fields: &FieldConfig, consts: &PhysicalConstants) -> Transition {
    let t = transition_frequencies(&build_hamiltonian(fields, consts));
    [
        (Transition::ZeroPlus, t.omega_plus),
        (Transition::ZeroMinus, t.omega_minus),
        (Transition::MinusPlus, t.omega_pm),
    ]
    .into_iter()
    .min_by(|a, b| (a.1.abs() - carrier).abs().total_cmp(&(b.1.abs() - carrier).abs()))
    .map(|(tr, _)| tr)
    .expect("three candidates")
}

/// Resonant Rabi frequency (Hz) of `pulse` in the rotating-wave
/// approximation: transferred population goes as `sin²(πΩt)`.
pub fn rwa_rabi_frequency(pulse: &DrivePulse, fields: &FieldConfig, consts: &PhysicalConstants) -> Result<f64> {
    pulse.validate()?;
    let target = addressed_transition(pulse.carrier, fields, consts);
    match (pulse.kind, target) {
        (DriveKind::Stress, Transition::MinusPlus) => Ok(consts.stress_coupling * pulse.amplitude),
        (DriveKind::Magnetic, Transition::ZeroPlus | Transition::ZeroMinus) => {
            Ok(magnetic_rabi(pulse.amplitude, consts))
        }
        (kind, tr) => Err(Error::TransitionMismatch {
            kind: kind.name(),
            transition: tr.name(),
        }),
    }
}

/// Rotating-frame two-level Hamiltonian for one driven pair (Hz), in the
/// (lower, upper) basis. `detuning` is transition minus drive frequency.
pub fn rwa_hamiltonian(rabi: f64, detuning: f64, phase: f64) -> Mat2 {
    let coupling = C64::from_polar(0.5 * rabi, phase);
    Mat2::new(real(0.0), coupling, coupling.conj(), real(detuning))
}

/// Exact RWA evolution of a driven pair for a constant drive.
pub fn rwa_unitary(rabi: f64, detuning: f64, phase: f64, duration: f64) -> Mat2 {
    propagator2(&rwa_hamiltonian(rabi, detuning, phase), duration)
}

/// Generalized Rabi formula: population moved from one level of the pair to
/// the other after `duration`.
pub fn rabi_transfer(rabi: f64, detuning: f64, duration: f64) -> f64 {
    let generalized = rabi.hypot(detuning);
    if generalized == 0.0 {
        return 0.0;
    }
    (rabi / generalized).powi(2) * (PI * generalized * duration).sin().powi(2)
}

/// RWA evolution through a linear chirp, detuning running from
/// `detuning_start` to `detuning_stop` (transition minus drive frequency).
pub fn chirp_unitary(rabi: f64, detuning_start: f64, detuning_stop: f64, duration: f64, max_step: f64) -> Mat2 {
    let steps = (duration / max_step).ceil().max(1.0) as usize;
    let dt = duration / steps as f64;
    let rate = (detuning_stop - detuning_start) / duration;
    let mut u = Mat2::identity();
    for k in 0..steps {
        let t = (k as f64 + 0.5) * dt;
        u = propagator2(&rwa_hamiltonian(rabi, detuning_start + rate * t, 0.0), dt) * u;
    }
    u
}

/// Landau–Zener probability of staying in the diabatic state for a linear
/// sweep at `chirp_rate` (Hz/s) through a crossing with Rabi frequency
/// `rabi` (Hz): `exp(−π² Ω² / |α|)`.
pub fn landau_zener_probability(rabi: f64, chirp_rate: f64) -> f64 {
    if chirp_rate == 0.0 {
        return if rabi == 0.0 { 1.0 } else { 0.0 };
    }
    (-(PI * rabi).powi(2) / chirp_rate.abs()).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PassageOutcome {
    pub state: SpinState,
    /// False when the sweep does not cross the target transition; the partial
    /// result is returned as computed.
    pub brackets_resonance: bool,
}

/// Magnetic adiabatic passage in the frame co-rotating with the chirped
/// drive. Only the addressed pair evolves; the spectator level is untouched.
pub fn adiabatic_passage(
    state: &SpinState,
    sweep: &SweepPulse,
    fields: &FieldConfig,
    consts: &PhysicalConstants,
    cfg: &PropagatorConfig,
) -> Result<PassageOutcome> {
    sweep.validate()?;
    cfg.validate()?;
    let resonance = sweep.transition.frequency(fields, consts).abs();
    let u = chirp_unitary(
        sweep.rabi_frequency(consts),
        resonance - sweep.start,
        resonance - sweep.stop,
        sweep.duration,
        cfg.max_step,
    );
    Ok(PassageOutcome {
        state: state.apply_pair(sweep.transition, &u),
        brackets_resonance: sweep.brackets(resonance),
    })
}

/// Same passage integrated in the lab frame with the full three-level
/// Hamiltonian, counter-rotating terms and the off-resonant pair included.
pub fn adiabatic_passage_lab(
    state: &SpinState,
    sweep: &SweepPulse,
    fields: &FieldConfig,
    consts: &PhysicalConstants,
    cfg: &PropagatorConfig,
) -> Result<PassageOutcome> {
    sweep.validate()?;
    let resonance = sweep.transition.frequency(fields, consts).abs();
    let h = sweep.lab_hamiltonian(fields, consts);
    Ok(PassageOutcome {
        state: propagate(state, &h, sweep.duration, cfg)?,
        brackets_resonance: sweep.brackets(resonance),
    })
}
