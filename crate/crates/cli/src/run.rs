//! One function per experiment kind, each producing a table plus derived
//! quantities for the metadata sidecar.

use std::path::{Path, PathBuf};

use nvmech::acoustics::{
    parse_touchstone, perpendicular_stress, q_circle_fit, resonance_comb, stress_from_drive, stress_ratio,
    AcousticResonance, DriveStress, HbarGeometry, QCircleFit, StandingWave,
};
use nvmech::experiments::{
    calibrate_driving, field_sweep, run_odmsr_scan, run_rabi_style, run_stray_field_control, CalibrationConfig,
    EnsembleSpec, MagneticReference, OdmsrScan, RabiScan, SignalTrace, TripletFit,
};
use nvmech::optics::{
    antinode_node_ratio, calibration_depth, calibration_overlap, contrast, depth_correction_factor, depth_scan_signal,
    DepthScanModel,
};
use nvmech::perturbation::{
    cross_driving_field, driving_ratio, electric_driving_bound, CrossDrivingFormula, MisalignmentConfig,
};
use nvmech::spin_model::PhysicalConstants;
use serde_json::{json, Map, Value};

use crate::config::*;
use crate::output::{RunOutput, Table};
use crate::CliError;

type Derived = Map<String, Value>;

fn insert(d: &mut Derived, key: &str, v: impl Into<Value>) {
    d.insert(key.to_owned(), v.into());
}

fn resonance_field(omega_hbar: f64, consts: &PhysicalConstants) -> f64 {
    omega_hbar / (2.0 * consts.gyromagnetic_ratio)
}

fn drive_stress(drive: &DriveConfig, consts: &PhysicalConstants) -> Result<DriveStress, CliError> {
    if let Some(mpa) = drive.sigma_perp_mpa {
        if !(mpa >= 0.0 && mpa.is_finite()) {
            return Err(CliError::Config(format!(
                "drive.sigma_perp_mpa: must be finite and >= 0 (got {mpa})"
            )));
        }
        let sigma_perp = mpa * 1e6;
        return Ok(DriveStress {
            sigma_max: sigma_perp / perpendicular_stress(1.0),
            sigma_perp,
            rabi: consts.stress_coupling * sigma_perp,
        });
    }
    let res = AcousticResonance {
        frequency: 1.0,
        q_unloaded: drive.q_unloaded,
        impedance: drive.impedance_ohm,
    };
    res.validate()?;
    Ok(stress_from_drive(drive.power_dbm, &res, consts))
}

fn drive_json(s: &DriveStress) -> Value {
    json!({
        "sigma_max_pa": s.sigma_max,
        "sigma_perp_pa": s.sigma_perp,
        "rabi_hz": s.rabi,
    })
}

fn depth_model(optics: &OpticsConfig, frequency: f64, sigma_max: f64) -> DepthScanModel {
    DepthScanModel {
        psf: optics.psf(),
        wave: StandingWave {
            sigma_max,
            wavelength: optics.sound_speed() / frequency,
            antinode: optics.antinode_um * 1e-6,
        },
        thickness: optics.thickness(),
        response: optics.response.response(),
        d_air: Vec::new(),
    }
}

fn ensemble(
    cfg: &EnsembleConfig,
    optics: &OpticsConfig,
    frequency: f64,
    sigma_max: f64,
    seed: u64,
    derived: &mut Derived,
) -> Result<EnsembleSpec, CliError> {
    let ens = EnsembleSpec {
        hyperfine_weights: cfg.hyperfine_weights,
        contrast: cfg.contrast,
        background: cfg.background,
        noise: cfg.noise,
        seed,
        ..EnsembleSpec::default()
    };
    let ens = match cfg.stress_profile {
        StressProfile::Homogeneous => ens,
        StressProfile::Psf => {
            let model = depth_model(optics, frequency, sigma_max.max(1.0));
            let factor = depth_correction_factor(&model.psf)?;
            let depth = calibration_depth(&model);
            insert(derived, "sound_speed_m_per_s", optics.sound_speed());
            insert(derived, "wavelength_m", model.wave.wavelength);
            insert(derived, "depth_correction_factor", factor);
            insert(derived, "calibration_depth_m", depth);
            insert(derived, "calibration_overlap", calibration_overlap(&model)?);
            ens.psf_weighted(&model, depth / factor, cfg.samples)?
        }
    };
    ens.validate()?;
    insert(derived, "mean_stress_fraction", ens.mean_fraction());
    Ok(ens)
}

fn sweep(start: f64, stop: f64, step: f64, what: &str) -> Result<Vec<f64>, CliError> {
    field_sweep(start, stop, step).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

fn trace_table(x_name: &str, x_scale: f64, trace: &SignalTrace) -> Table {
    let mut t = Table::new([x_name, "signal", "m_i_minus", "m_i_zero", "m_i_plus"]);
    for ((x, s), c) in trace.x.iter().zip(&trace.signal).zip(&trace.components) {
        t.push_values(&[x * x_scale, *s, c[0], c[1], c[2]]);
    }
    t
}

fn peaks_json(trace: &SignalTrace) -> Value {
    let max = trace.signal.iter().copied().fold(0.0, f64::max);
    let peaks: Vec<Value> = trace
        .peaks(0.5 * max)
        .iter()
        .map(|p| json!({"position": p.position, "height": p.height}))
        .collect();
    Value::Array(peaks)
}

fn triplet_json(fit: &TripletFit) -> Value {
    json!({
        "center_g": fit.center,
        "width_g": fit.width,
        "background": fit.background,
        "amplitudes": fit.amplitudes.to_vec(),
        "rms_residual": fit.rms_residual,
    })
}

pub fn odmsr(cfg: &OdmsrConfig, seed: u64, consts: &PhysicalConstants) -> Result<RunOutput, CliError> {
    let mut derived = Derived::new();
    let omega = cfg.omega_hbar_ghz * 1e9;
    let stress = drive_stress(&cfg.drive, consts)?;
    insert(&mut derived, "drive", drive_json(&stress));
    insert(&mut derived, "resonance_field_g", resonance_field(omega, consts));
    let ens = ensemble(&cfg.ensemble, &cfg.optics, omega, stress.sigma_max, seed, &mut derived)?;
    let mut scan = OdmsrScan::stress(
        sweep(cfg.b_start_g, cfg.b_stop_g, cfg.b_step_g, "b_start_g..b_stop_g")?,
        omega,
        stress.sigma_perp,
        cfg.pulse_us * 1e-6,
    );
    scan.passage = cfg.passage.spec(consts);
    let trace = run_odmsr_scan(&scan, &ens, consts)?;
    insert(&mut derived, "peaks_g", peaks_json(&trace));
    if let Some(fit) = nvmech::experiments::fit_triplet(&trace.x, &trace.signal, consts.hyperfine_field()) {
        insert(&mut derived, "triplet_fit", triplet_json(&fit));
    }
    Ok(RunOutput {
        table: trace_table("b_par_g", 1.0, &trace),
        derived,
        warnings: trace.warnings,
    })
}

pub fn rabi(cfg: &RabiConfig, seed: u64, consts: &PhysicalConstants) -> Result<RunOutput, CliError> {
    let mut derived = Derived::new();
    let omega = cfg.omega_hbar_ghz * 1e9;
    let stress = drive_stress(&cfg.drive, consts)?;
    let b_par = cfg.b_par_g.unwrap_or_else(|| resonance_field(omega, consts));
    insert(&mut derived, "drive", drive_json(&stress));
    insert(&mut derived, "b_par_g", b_par);
    let ens = ensemble(&cfg.ensemble, &cfg.optics, omega, stress.sigma_max, seed, &mut derived)?;
    let taus: Vec<f64> = sweep(
        cfg.tau_start_us,
        cfg.tau_stop_us,
        cfg.tau_step_us,
        "tau_start_us..tau_stop_us",
    )?
    .into_iter()
    .map(|t| t * 1e-6)
    .collect();
    let scan = RabiScan {
        taus,
        b_par,
        omega_hbar: omega,
        sigma_perp: stress.sigma_perp,
        passage: cfg.passage.spec(consts),
    };
    let out = run_rabi_style(&scan, &ens, consts)?;
    let decay = out.decay.map(|d| {
        json!({
            "offset": d.offset,
            "amplitude": d.amplitude,
            "time_s": d.time,
            "rms_residual": d.rms_residual,
        })
    });
    insert(&mut derived, "decay_fit", decay.unwrap_or(Value::Null));
    Ok(RunOutput {
        table: trace_table("tau_us", 1e6, &out.trace),
        derived,
        warnings: out.trace.warnings,
    })
}

pub fn depth_scan(cfg: &DepthScanConfig) -> Result<RunOutput, CliError> {
    let mut derived = Derived::new();
    let mut model = depth_model(&cfg.optics, cfg.frequency_ghz * 1e9, cfg.sigma_max_mpa * 1e6);
    model.d_air = sweep(
        cfg.d_air_start_um,
        cfg.d_air_stop_um,
        cfg.d_air_step_um,
        "d_air_start_um..d_air_stop_um",
    )?
    .into_iter()
    .map(|d| d * 1e-6)
    .collect();
    let points = depth_scan_signal(&model)?;
    insert(&mut derived, "sound_speed_m_per_s", cfg.optics.sound_speed());
    insert(&mut derived, "wavelength_m", model.wave.wavelength);
    insert(
        &mut derived,
        "depth_correction_factor",
        depth_correction_factor(&model.psf)?,
    );
    insert(&mut derived, "calibration_depth_m", calibration_depth(&model));
    insert(&mut derived, "calibration_overlap", calibration_overlap(&model)?);
    insert(&mut derived, "antinode_node_ratio", antinode_node_ratio(&model)?);
    insert(&mut derived, "contrast", contrast(&points));
    let mut t = Table::new(["d_air_um", "d_dia_um", "signal"]);
    for p in &points {
        t.push_values(&[p.d_air * 1e6, p.d_dia * 1e6, p.signal]);
    }
    Ok(RunOutput {
        table: t,
        derived,
        warnings: Vec::new(),
    })
}

pub fn stray_field(cfg: &StrayFieldConfig, seed: u64, consts: &PhysicalConstants) -> Result<RunOutput, CliError> {
    let mut derived = Derived::new();
    let omega = cfg.omega_hbar_ghz * 1e9;
    let stress = drive_stress(&cfg.drive, consts)?;
    let b_res = resonance_field(omega, consts);
    let mis = MisalignmentConfig {
        b_par: b_res,
        b_x0: cfg.b_x0_g,
        b_x1: cfg.b_1_hbar_g,
        b_1_hbar: cfg.b_1_hbar_g,
        formula: cfg.formula,
    };
    let cross = cross_driving_field(&mis, consts)?;
    insert(&mut derived, "drive", drive_json(&stress));
    insert(&mut derived, "resonance_field_g", b_res);
    insert(&mut derived, "stray_rabi_hz", cross);
    insert(&mut derived, "stray_to_stress_rabi", cross / stress.rabi);
    let ens = ensemble(
        &cfg.ensemble,
        &OpticsConfig::default(),
        omega,
        stress.sigma_max,
        seed,
        &mut derived,
    )?;
    let mut scan = OdmsrScan::stress(
        sweep(cfg.b_start_g, cfg.b_stop_g, cfg.b_step_g, "b_start_g..b_stop_g")?,
        omega,
        stress.sigma_perp,
        cfg.pulse_us * 1e-6,
    );
    scan.passage = cfg.passage.spec(consts);
    let trace = run_stray_field_control(&scan, &mis, &ens, consts)?;
    let max = trace.signal.iter().copied().fold(0.0, f64::max);
    insert(&mut derived, "max_signal", max);
    Ok(RunOutput {
        table: trace_table("b_par_g", 1.0, &trace),
        derived,
        warnings: trace.warnings,
    })
}

fn fit_json(fit: &QCircleFit) -> Value {
    json!({
        "frequency_hz": fit.resonance.frequency,
        "q_unloaded": fit.resonance.q_unloaded,
        "q_loaded": fit.q_loaded,
        "coupling": fit.coupling,
        "impedance_ohm": fit.resonance.impedance,
        "circle_radius": fit.circle.radius,
        "circle_rms_residual": fit.circle.rms_residual,
    })
}

fn load_touchstone(path: &Path) -> Result<nvmech::acoustics::S11Trace, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_touchstone(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn q_circle(cfg: &QCircleConfig, base: &Path, consts: &PhysicalConstants) -> Result<RunOutput, CliError> {
    if cfg.touchstone.is_empty() {
        return Err(CliError::Config("q-circle.touchstone: a file path is required".into()));
    }
    let trace = load_touchstone(&resolve(base, &cfg.touchstone))?;
    let f = trace.frequencies();
    let window = match cfg.window_ghz {
        Some([lo, hi]) => (lo * 1e9, hi * 1e9),
        None => (f[0], f[f.len() - 1]),
    };
    let fit = q_circle_fit(&trace, window)?;
    let stress = stress_from_drive(cfg.power_dbm, &fit.resonance, consts);
    let mut derived = Derived::new();
    insert(&mut derived, "fit", fit_json(&fit));
    insert(&mut derived, "drive", drive_json(&stress));
    let mut t = Table::new(["frequency_hz", "s11_re", "s11_im", "s11_db"]);
    for (f, g) in trace.iter() {
        t.push_values(&[f, g.re, g.im, 20.0 * g.norm().log10()]);
    }
    Ok(RunOutput {
        table: t,
        derived,
        warnings: Vec::new(),
    })
}

pub fn comb(cfg: &CombConfig, base: &Path, consts: &PhysicalConstants) -> Result<RunOutput, CliError> {
    let thickness = cfg.thickness_um * 1e-6;
    let geom = HbarGeometry {
        thickness,
        sound_speed: cfg
            .sound_speed_m_per_s
            .unwrap_or_else(|| nvmech::acoustics::sound_speed_from_pitch(thickness, cfg.comb_pitch_mhz * 1e6)),
        drive_power_dbm: cfg.power_dbm,
    };
    if !(cfg.window_fraction > 0.0 && cfg.window_fraction <= 0.5) {
        return Err(CliError::Config(format!(
            "resonance-comb.window_fraction: must lie in (0, 0.5] (got {})",
            cfg.window_fraction
        )));
    }
    let lines = resonance_comb(&geom, (cfg.band_ghz[0] * 1e9, cfg.band_ghz[1] * 1e9))?;
    let pitch = geom.pitch();
    let trace = cfg
        .touchstone
        .as_ref()
        .map(|p| load_touchstone(&resolve(base, p)))
        .transpose()?;

    let mut derived = Derived::new();
    let mut warnings = Vec::new();
    insert(&mut derived, "sound_speed_m_per_s", geom.sound_speed);
    insert(&mut derived, "pitch_hz", pitch);
    let mut t = Table::new([
        "mode",
        "frequency_hz",
        "wavelength_um",
        "fitted_frequency_hz",
        "q_unloaded",
        "impedance_ohm",
        "sigma_perp_mpa",
        "rabi_khz",
    ]);
    let mut fitted: Vec<AcousticResonance> = Vec::new();
    for &f in &lines {
        let mode = (f / pitch).round();
        let mut row = vec![
            Some(mode),
            Some(f),
            Some(geom.wavelength(f) * 1e6),
            None,
            None,
            None,
            None,
            None,
        ];
        if let Some(trace) = &trace {
            let half = cfg.window_fraction * pitch;
            let span = trace.frequencies();
            let inside = f - half >= span[0] && f + half <= span[span.len() - 1];
            if inside && trace.window(f - half, f + half).0.len() >= nvmech::acoustics::MIN_POINTS {
                match q_circle_fit(trace, (f - half, f + half)) {
                    Ok(fit) => {
                        let s = stress_from_drive(cfg.power_dbm, &fit.resonance, consts);
                        row[3] = Some(fit.resonance.frequency);
                        row[4] = Some(fit.resonance.q_unloaded);
                        row[5] = Some(fit.resonance.impedance);
                        row[6] = Some(s.sigma_perp * 1e-6);
                        row[7] = Some(s.rabi * 1e-3);
                        fitted.push(fit.resonance);
                    }
                    Err(e) => warnings.push(format!("mode {mode}: {e}")),
                }
            }
        }
        t.push(row);
    }
    if fitted.len() >= 2 {
        insert(
            &mut derived,
            "stress_ratio_first_two",
            stress_ratio(&fitted[0], &fitted[1]),
        );
    }
    Ok(RunOutput {
        table: t,
        derived,
        warnings,
    })
}

pub fn calibration(
    cfg: &CalibrationReportConfig,
    seed: u64,
    consts: &PhysicalConstants,
) -> Result<RunOutput, CliError> {
    let mut derived = Derived::new();
    let omega = cfg.omega_hbar_ghz * 1e9;
    let stress = drive_stress(&cfg.drive, consts)?;
    insert(&mut derived, "drive", drive_json(&stress));
    let fields = sweep(cfg.b_start_g, cfg.b_stop_g, cfg.b_step_g, "b_start_g..b_stop_g")?;
    let passage = cfg.passage.spec(consts);
    let triplet_spacing = consts.hyperfine_field();
    let cal_cfg = CalibrationConfig {
        pulse_duration: cfg.pulse_us * 1e-6,
        spacing: triplet_spacing,
        law: cfg.law,
    };

    // Reference: homogeneous drive of known Rabi frequency through the same sequence.
    let ref_rabi = cfg.reference_rabi_khz * 1e3;
    let mut ref_scan = OdmsrScan::stress(
        fields.clone(),
        omega,
        ref_rabi / consts.stress_coupling,
        cfg.reference_pulse_us * 1e-6,
    );
    ref_scan.passage = passage;
    let ref_ens = EnsembleSpec {
        hyperfine_weights: cfg.ensemble.hyperfine_weights,
        contrast: cfg.ensemble.contrast,
        background: cfg.ensemble.background,
        ..EnsembleSpec::default()
    };
    let ref_trace = run_odmsr_scan(&ref_scan, &ref_ens, consts)?;
    let ref_fit = nvmech::experiments::fit_triplet(&ref_trace.x, &ref_trace.signal, triplet_spacing)
        .ok_or_else(|| CliError::Runtime("reference spectrum: triplet fit failed".into()))?;
    let reference = MagneticReference {
        omega: ref_rabi,
        amplitude: ref_fit.amplitudes.iter().map(|a| a.max(0.0)).sum(),
        duration: cfg.reference_pulse_us * 1e-6,
    };

    let ens = ensemble(&cfg.ensemble, &cfg.optics, omega, stress.sigma_max, seed, &mut derived)?;
    let overlap = match cfg.ensemble.stress_profile {
        StressProfile::Homogeneous => 1.0,
        StressProfile::Psf => calibration_overlap(&depth_model(&cfg.optics, omega, stress.sigma_max))?,
    };
    let mut scan = OdmsrScan::stress(fields, omega, stress.sigma_perp, cfg.pulse_us * 1e-6);
    scan.passage = passage;
    let trace = run_odmsr_scan(&scan, &ens, consts)?;
    let cal = calibrate_driving(&trace, &reference, overlap, &cal_cfg)?;

    insert(&mut derived, "reference_amplitude", reference.amplitude);
    insert(&mut derived, "overlap_used", overlap);
    insert(&mut derived, "triplet_fit", triplet_json(&cal.fit));
    insert(&mut derived, "peak_sum", cal.peak_sum);
    insert(&mut derived, "ideal_amplitude", cal.ideal_amplitude);
    insert(&mut derived, "estimated_rabi_hz", cal.omega);
    insert(&mut derived, "true_rabi_hz", stress.rabi);
    insert(
        &mut derived,
        "estimated_sigma_perp_pa",
        cal.omega / consts.stress_coupling,
    );
    let mut warnings = ref_trace.warnings;
    warnings.extend(trace.warnings.iter().cloned());
    warnings.dedup();
    Ok(RunOutput {
        table: trace_table("b_par_g", 1.0, &trace),
        derived,
        warnings,
    })
}

pub fn perturbation(cfg: &PerturbationConfig, consts: &PhysicalConstants) -> Result<RunOutput, CliError> {
    let base = MisalignmentConfig {
        b_par: cfg.b_par_g,
        b_x0: cfg.b_x0_g,
        b_x1: cfg.b_x1_g,
        b_1_hbar: cfg.b_x1_g,
        formula: cfg.formula,
    };
    let with = |formula: CrossDrivingFormula, b_x0: f64| {
        cross_driving_field(&MisalignmentConfig { formula, b_x0, ..base }, consts)
    };
    let stress = drive_stress(&cfg.drive, consts)?;
    let selected = cross_driving_field(&base, consts)?;
    let ratio = driving_ratio(&base, consts)?;
    let electric = electric_driving_bound(cfg.e_perp_v_per_cm, consts)?;

    let mut derived = Derived::new();
    insert(&mut derived, "drive", drive_json(&stress));
    insert(&mut derived, "cross_driving_hz", selected);
    insert(
        &mut derived,
        "cross_driving_direct_hz",
        with(CrossDrivingFormula::Direct, cfg.b_x0_g)?,
    );
    insert(
        &mut derived,
        "cross_driving_ratio_form_hz",
        with(CrossDrivingFormula::Ratio, cfg.b_x0_g)?,
    );
    insert(&mut derived, "driving_ratio", ratio);
    insert(
        &mut derived,
        "driving_ratio_per_g",
        if cfg.b_x0_g > 0.0 { ratio / cfg.b_x0_g } else { f64::NAN },
    );
    insert(&mut derived, "cross_to_stress_rabi", selected / stress.rabi);
    insert(&mut derived, "electric_rabi_hz", electric);
    insert(&mut derived, "electric_to_stress_rabi", electric / stress.rabi);

    let mut t = Table::new(["b_x0_g", "driving_ratio", "cross_direct_hz", "cross_ratio_form_hz"]);
    for b in sweep(
        cfg.b_x0_start_g,
        cfg.b_x0_stop_g,
        cfg.b_x0_step_g,
        "b_x0_start_g..b_x0_stop_g",
    )? {
        let r = driving_ratio(&MisalignmentConfig { b_x0: b, ..base }, consts)?;
        t.push_values(&[
            b,
            r,
            with(CrossDrivingFormula::Direct, b)?,
            with(CrossDrivingFormula::Ratio, b)?,
        ]);
    }
    Ok(RunOutput {
        table: t,
        derived,
        warnings: base.warnings(),
    })
}
