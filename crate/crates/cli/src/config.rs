//! Experiment descriptions as read from TOML or JSON.
//!
//! Every quantity carries its unit in the key name (`_ghz`, `_um`, `_mpa`,
//! ...). Conversion to the SI values used by the library happens here.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nvmech::experiments::{Envelope, PassageSpec, ResponseLaw};
use nvmech::optics::{PsfModel, PsfProfile, Response};
use nvmech::perturbation::CrossDrivingFormula;
use nvmech::spin_model::PhysicalConstants;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    OdmsrScan,
    RabiStyle,
    DepthScan,
    StrayFieldControl,
    QCircle,
    ResonanceComb,
    CalibrationReport,
    PerturbationReport,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::OdmsrScan,
        Self::RabiStyle,
        Self::DepthScan,
        Self::StrayFieldControl,
        Self::QCircle,
        Self::ResonanceComb,
        Self::CalibrationReport,
        Self::PerturbationReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::OdmsrScan => "odmsr-scan",
            Self::RabiStyle => "rabi-style",
            Self::DepthScan => "depth-scan",
            Self::StrayFieldControl => "stray-field-control",
            Self::QCircle => "q-circle",
            Self::ResonanceComb => "resonance-comb",
            Self::CalibrationReport => "calibration-report",
            Self::PerturbationReport => "perturbation-report",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::OdmsrScan => "stress-driven spin resonance spectrum versus axial field",
            Self::RabiStyle => "signal versus stress pulse length at fixed field",
            Self::DepthScan => "PSF and standing-wave overlap versus focus depth",
            Self::StrayFieldControl => "spectrum from the transducer's magnetic stray field alone",
            Self::QCircle => "Q-circle fit of one resonance in a Touchstone file",
            Self::ResonanceComb => "acoustic mode comb, optionally fitted against a Touchstone file",
            Self::CalibrationReport => "stress Rabi frequency recovered from a simulated spectrum",
            Self::PerturbationReport => "magnetic cross-driving through a static transverse field",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            format!(
                "unknown experiment kind `{s}`; valid kinds are: {}",
                Self::valid_names()
            )
        })
    }
}

impl Serialize for ExperimentKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ExperimentKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// File stem for the outputs; defaults to the kind name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default, rename = "odmsr-scan", skip_serializing_if = "Option::is_none")]
    pub odmsr_scan: Option<OdmsrConfig>,
    #[serde(default, rename = "rabi-style", skip_serializing_if = "Option::is_none")]
    pub rabi_style: Option<RabiConfig>,
    #[serde(default, rename = "depth-scan", skip_serializing_if = "Option::is_none")]
    pub depth_scan: Option<DepthScanConfig>,
    #[serde(default, rename = "stray-field-control", skip_serializing_if = "Option::is_none")]
    pub stray_field_control: Option<StrayFieldConfig>,
    #[serde(default, rename = "q-circle", skip_serializing_if = "Option::is_none")]
    pub q_circle: Option<QCircleConfig>,
    #[serde(default, rename = "resonance-comb", skip_serializing_if = "Option::is_none")]
    pub resonance_comb: Option<CombConfig>,
    #[serde(default, rename = "calibration-report", skip_serializing_if = "Option::is_none")]
    pub calibration_report: Option<CalibrationReportConfig>,
    #[serde(default, rename = "perturbation-report", skip_serializing_if = "Option::is_none")]
    pub perturbation_report: Option<PerturbationConfig>,
}

impl ExperimentConfig {
    /// Defaults for `kind` with no overrides.
    pub fn new(kind: ExperimentKind) -> Self {
        let mut cfg = Self {
            kind,
            seed: 0,
            output: None,
            constants: ConstantsConfig::default(),
            odmsr_scan: None,
            rabi_style: None,
            depth_scan: None,
            stray_field_control: None,
            q_circle: None,
            resonance_comb: None,
            calibration_report: None,
            perturbation_report: None,
        };
        cfg.fill_defaults();
        cfg
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
        };
        cfg.check_sections()?;
        cfg.fill_defaults();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn output_stem(&self) -> &str {
        self.output.as_deref().unwrap_or(self.kind.name())
    }

    fn present_sections(&self) -> Vec<ExperimentKind> {
        use ExperimentKind::*;
        let flags = [
            (OdmsrScan, self.odmsr_scan.is_some()),
            (RabiStyle, self.rabi_style.is_some()),
            (DepthScan, self.depth_scan.is_some()),
            (StrayFieldControl, self.stray_field_control.is_some()),
            (QCircle, self.q_circle.is_some()),
            (ResonanceComb, self.resonance_comb.is_some()),
            (CalibrationReport, self.calibration_report.is_some()),
            (PerturbationReport, self.perturbation_report.is_some()),
        ];
        flags.into_iter().filter(|(_, on)| *on).map(|(k, _)| k).collect()
    }

    fn check_sections(&self) -> Result<(), CliError> {
        if let Some(other) = self.present_sections().into_iter().find(|k| *k != self.kind) {
            return Err(CliError::Config(format!(
                "section [{other}] does not apply to kind `{}`",
                self.kind
            )));
        }
        Ok(())
    }

    fn fill_defaults(&mut self) {
        use ExperimentKind::*;
        match self.kind {
            OdmsrScan => drop(self.odmsr_scan.get_or_insert_with(Default::default)),
            RabiStyle => drop(self.rabi_style.get_or_insert_with(Default::default)),
            DepthScan => drop(self.depth_scan.get_or_insert_with(Default::default)),
            StrayFieldControl => drop(self.stray_field_control.get_or_insert_with(Default::default)),
            QCircle => drop(self.q_circle.get_or_insert_with(Default::default)),
            ResonanceComb => drop(self.resonance_comb.get_or_insert_with(Default::default)),
            CalibrationReport => drop(self.calibration_report.get_or_insert_with(Default::default)),
            PerturbationReport => drop(self.perturbation_report.get_or_insert_with(Default::default)),
        }
    }

    /// Rewrites relative input file paths as absolute paths under `base`.
    pub fn absolutize_paths(&mut self, base: &Path) {
        let fix = |p: &mut String| {
            if !p.is_empty() && Path::new(p.as_str()).is_relative() {
                let joined = base.join(p.as_str());
                let abs = std::path::absolute(&joined).unwrap_or(joined);
                *p = abs.to_string_lossy().into_owned();
            }
        };
        if let Some(q) = &mut self.q_circle {
            fix(&mut q.touchstone);
        }
        if let Some(p) = self.resonance_comb.as_mut().and_then(|c| c.touchstone.as_mut()) {
            fix(p);
        }
    }

    pub fn physical_constants(&self) -> Result<PhysicalConstants, CliError> {
        self.constants.resolve()
    }
}

/// Overrides of the physical constants. Unset entries keep their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_field_splitting_ghz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gyromagnetic_ratio_mhz_per_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stress_coupling_mhz_per_mpa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub electric_coupling_hz_cm_per_v: Option<f64>,
    /// Hyperfine splitting expressed as an axial field A/γ.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyperfine_field_g: Option<f64>,
}

impl ConstantsConfig {
    pub fn resolve(&self) -> Result<PhysicalConstants, CliError> {
        let mut k = PhysicalConstants::default();
        let hyperfine_field = k.hyperfine_field();
        if let Some(v) = self.zero_field_splitting_ghz {
            k.zero_field_splitting = v * 1e9;
        }
        if let Some(v) = self.gyromagnetic_ratio_mhz_per_g {
            k.gyromagnetic_ratio = v * 1e6;
        }
        if let Some(v) = self.stress_coupling_mhz_per_mpa {
            k.stress_coupling = v;
        }
        if let Some(v) = self.electric_coupling_hz_cm_per_v {
            k.electric_coupling = v;
        }
        k.hyperfine = self.hyperfine_field_g.unwrap_or(hyperfine_field) * k.gyromagnetic_ratio;
        k.validate().map_err(|e| CliError::Config(format!("constants: {e}")))?;
        Ok(k)
    }
}

/// Chirped magnetic passage on |0⟩ ↔ |−1⟩.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PassageConfig {
    pub span_mhz: f64,
    pub duration_us: f64,
    pub rabi_mhz: f64,
    pub step_ns: f64,
    pub envelope: Envelope,
}

impl Default for PassageConfig {
    fn default() -> Self {
        Self {
            span_mhz: 40.0,
            duration_us: 40.0,
            rabi_mhz: 1.0,
            step_ns: 10.0,
            envelope: Envelope::Hann,
        }
    }
}

impl PassageConfig {
    pub fn spec(&self, consts: &PhysicalConstants) -> PassageSpec {
        PassageSpec {
            span: self.span_mhz * 1e6,
            duration: self.duration_us * 1e-6,
            amplitude: self.rabi_mhz * 1e6 * std::f64::consts::SQRT_2 / consts.gyromagnetic_ratio,
            max_step: self.step_ns * 1e-9,
            envelope: self.envelope,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StressProfile {
    /// Every center sees the peak stress.
    Homogeneous,
    /// Stress distribution seen by the PSF focused on the calibration
    /// anti-node.
    #[default]
    Psf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub stress_profile: StressProfile,
    pub samples: usize,
    /// Weights of m_I = −1, 0, +1.
    pub hyperfine_weights: [f64; 3],
    pub contrast: f64,
    pub background: f64,
    /// Gaussian readout noise, in signal units.
    pub noise: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            stress_profile: StressProfile::Psf,
            samples: nvmech::experiments::DEFAULT_STRESS_SAMPLES,
            hyperfine_weights: [1.0 / 3.0; 3],
            contrast: 1.0,
            background: 0.0,
            noise: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ResponseConfig {
    #[default]
    Linear,
    Saturating {
        sigma_sat_mpa: f64,
    },
}

impl ResponseConfig {
    pub fn response(self) -> Response {
        match self {
            Self::Linear => Response::Linear,
            Self::Saturating { sigma_sat_mpa } => Response::Saturating {
                sigma_sat: sigma_sat_mpa * 1e6,
            },
        }
    }
}

/// Diamond, acoustic cavity and microscope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConfig {
    pub thickness_um: f64,
    /// When unset, derived from the comb pitch and thickness.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sound_speed_m_per_s: Option<f64>,
    pub comb_pitch_mhz: f64,
    /// Stress anti-node position measured from the imaged face.
    pub antinode_um: f64,
    pub fwhm0_um: f64,
    pub na: f64,
    pub n_dia: f64,
    pub response: ResponseConfig,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            thickness_um: 300.0,
            sound_speed_m_per_s: None,
            comb_pitch_mhz: 27.0,
            antinode_um: 0.0,
            fwhm0_um: 2.0,
            na: 0.8,
            n_dia: 2.417,
            response: ResponseConfig::Linear,
        }
    }
}

impl OpticsConfig {
    pub fn thickness(&self) -> f64 {
        self.thickness_um * 1e-6
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed_m_per_s
            .unwrap_or_else(|| nvmech::acoustics::sound_speed_from_pitch(self.thickness(), self.comb_pitch_mhz * 1e6))
    }

    pub fn psf(&self) -> PsfModel {
        PsfModel {
            fwhm0: self.fwhm0_um * 1e-6,
            na: self.na,
            n_dia: self.n_dia,
            profile: PsfProfile::SincSquared,
        }
    }
}

/// Stress amplitude, either given directly or derived from the drive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub power_dbm: f64,
    pub q_unloaded: f64,
    pub impedance_ohm: f64,
    /// Overrides the drive chain when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_perp_mpa: Option<f64>,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            power_dbm: 25.0,
            q_unloaded: 437.0,
            impedance_ohm: 29.9,
            sigma_perp_mpa: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdmsrConfig {
    pub b_start_g: f64,
    pub b_stop_g: f64,
    pub b_step_g: f64,
    pub omega_hbar_ghz: f64,
    pub pulse_us: f64,
    pub drive: DriveConfig,
    pub passage: PassageConfig,
    pub ensemble: EnsembleConfig,
    pub optics: OpticsConfig,
}

impl Default for OdmsrConfig {
    fn default() -> Self {
        Self {
            b_start_g: 189.0,
            b_stop_g: 195.0,
            b_step_g: 0.01,
            omega_hbar_ghz: 1.076,
            pulse_us: 6.0,
            drive: DriveConfig::default(),
            passage: PassageConfig::default(),
            ensemble: EnsembleConfig::default(),
            optics: OpticsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabiConfig {
    pub tau_start_us: f64,
    pub tau_stop_us: f64,
    pub tau_step_us: f64,
    /// Defaults to the m_I = 0 resonance field.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_par_g: Option<f64>,
    pub omega_hbar_ghz: f64,
    pub drive: DriveConfig,
    pub passage: PassageConfig,
    pub ensemble: EnsembleConfig,
    pub optics: OpticsConfig,
}

impl Default for RabiConfig {
    fn default() -> Self {
        Self {
            tau_start_us: 0.0,
            tau_stop_us: 6.0,
            tau_step_us: 0.02,
            b_par_g: None,
            omega_hbar_ghz: 1.076,
            drive: DriveConfig::default(),
            passage: PassageConfig::default(),
            ensemble: EnsembleConfig::default(),
            optics: OpticsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthScanConfig {
    pub d_air_start_um: f64,
    pub d_air_stop_um: f64,
    pub d_air_step_um: f64,
    pub frequency_ghz: f64,
    /// Peak stress; only the saturating response depends on it.
    pub sigma_max_mpa: f64,
    pub optics: OpticsConfig,
}

impl Default for DepthScanConfig {
    fn default() -> Self {
        Self {
            d_air_start_um: 0.0,
            d_air_stop_um: 20.0,
            d_air_step_um: 0.05,
            frequency_ghz: 1.076,
            sigma_max_mpa: 10.0,
            optics: OpticsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrayFieldConfig {
    pub b_start_g: f64,
    pub b_stop_g: f64,
    pub b_step_g: f64,
    pub omega_hbar_ghz: f64,
    pub pulse_us: f64,
    /// Static transverse field from misalignment.
    pub b_x0_g: f64,
    /// Oscillating stray field of the transducer.
    pub b_1_hbar_g: f64,
    pub formula: CrossDrivingFormula,
    /// Stress drive the stray-field result is compared against.
    pub drive: DriveConfig,
    pub passage: PassageConfig,
    pub ensemble: EnsembleConfig,
}

impl Default for StrayFieldConfig {
    fn default() -> Self {
        Self {
            b_start_g: 185.0,
            b_stop_g: 195.0,
            b_step_g: 0.01,
            omega_hbar_ghz: 1.076,
            pulse_us: 6.0,
            b_x0_g: 10.0,
            b_1_hbar_g: 0.17,
            formula: CrossDrivingFormula::Direct,
            drive: DriveConfig::default(),
            passage: PassageConfig::default(),
            ensemble: EnsembleConfig {
                stress_profile: StressProfile::Homogeneous,
                ..EnsembleConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QCircleConfig {
    /// Path to a one-port Touchstone file, relative to the config file.
    pub touchstone: String,
    /// Fit window; the whole trace when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_ghz: Option<[f64; 2]>,
    /// Drive power used for the stress estimate.
    pub power_dbm: f64,
}

impl Default for QCircleConfig {
    fn default() -> Self {
        Self {
            touchstone: String::new(),
            window_ghz: None,
            power_dbm: 25.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombConfig {
    pub band_ghz: [f64; 2],
    pub thickness_um: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sound_speed_m_per_s: Option<f64>,
    pub comb_pitch_mhz: f64,
    /// Optional measured reflection to fit at each comb line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub touchstone: Option<String>,
    /// Half-width of each fit window as a fraction of the pitch.
    pub window_fraction: f64,
    pub power_dbm: f64,
}

impl Default for CombConfig {
    fn default() -> Self {
        Self {
            band_ghz: [0.9, 1.2],
            thickness_um: 300.0,
            sound_speed_m_per_s: None,
            comb_pitch_mhz: 27.0,
            touchstone: None,
            window_fraction: 0.4,
            power_dbm: 25.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationReportConfig {
    pub b_start_g: f64,
    pub b_stop_g: f64,
    pub b_step_g: f64,
    pub omega_hbar_ghz: f64,
    pub pulse_us: f64,
    /// Known Rabi frequency and pulse of the reference measurement.
    pub reference_rabi_khz: f64,
    pub reference_pulse_us: f64,
    pub law: ResponseLaw,
    pub drive: DriveConfig,
    pub passage: PassageConfig,
    pub ensemble: EnsembleConfig,
    pub optics: OpticsConfig,
}

impl Default for CalibrationReportConfig {
    fn default() -> Self {
        Self {
            b_start_g: 189.0,
            b_stop_g: 195.0,
            b_step_g: 0.01,
            omega_hbar_ghz: 1.076,
            pulse_us: 1.0,
            reference_rabi_khz: 240.0,
            reference_pulse_us: 1.0,
            law: ResponseLaw::Coherent,
            drive: DriveConfig::default(),
            passage: PassageConfig::default(),
            ensemble: EnsembleConfig::default(),
            optics: OpticsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub b_par_g: f64,
    pub b_x0_g: f64,
    pub b_x1_g: f64,
    pub formula: CrossDrivingFormula,
    /// Sweep of the static transverse field for the CSV table.
    pub b_x0_start_g: f64,
    pub b_x0_stop_g: f64,
    pub b_x0_step_g: f64,
    pub e_perp_v_per_cm: f64,
    /// Stress drive the cross-driving result is compared against.
    pub drive: DriveConfig,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            b_par_g: 192.0,
            b_x0_g: 10.0,
            b_x1_g: 0.17,
            formula: CrossDrivingFormula::Direct,
            b_x0_start_g: 0.5,
            b_x0_stop_g: 20.0,
            b_x0_step_g: 0.5,
            e_perp_v_per_cm: 10.0,
            drive: DriveConfig::default(),
        }
    }
}
