//! Acceptance checks. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nvmech::acoustics::{
    q_circle_fit, stress_from_drive, stress_ratio, synthetic_reflection, AcousticResonance, S11Trace,
};
use nvmech::dynamics::{
    adiabatic_passage, landau_zener_probability, propagate, DriveKind, DrivePulse, PropagatorConfig, SpinState,
    SweepPulse, Transition,
};
use nvmech::linalg::C64;
use nvmech::optics::{depth_correction_factor, PsfModel};
use nvmech::perturbation::{
    cross_driving_field, driving_ratio, perturbed_sx_matrix, CrossDrivingFormula, MisalignmentConfig,
};
use nvmech::spin_model::{
    build_hamiltonian, labeled_eigenstates, spin1_operators, FieldConfig, Level, PhysicalConstants,
};
use nvmech_cli::{run_config_file, run_experiment, ExperimentConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/configs")
}

fn load(name: &str) -> ExperimentConfig {
    let path = configs().join(name);
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.absolutize_paths(&configs());
    cfg
}

fn column(table: &nvmech_cli::Table, name: &str) -> Vec<f64> {
    let i = table.columns.iter().position(|c| c == name).unwrap();
    table.rows.iter().map(|r| r[i].unwrap()).collect()
}

fn odmsr_peaks() -> Vec<f64> {
    let out = run_experiment(&load("fig2b.toml"), &configs()).unwrap();
    let x = column(&out.table, "b_par_g");
    let y = column(&out.table, "signal");
    let max = y.iter().copied().fold(0.0, f64::max);
    nvmech::experiments::find_peaks(&x, &y, 0.5 * max)
        .iter()
        .map(|p| p.position)
        .collect()
}

fn c1_resonance(peaks: &[f64]) -> Outcome {
    if peaks.len() != 3 {
        return outcome(false, format!("expected 3 peaks, found {peaks:?}"));
    }
    let center = peaks[1];
    outcome(
        (center - 192.1).abs() <= 0.2,
        format!("central peak at {center:.4} G (192.1 ± 0.2)"),
    )
}

fn c2_triplet(peaks: &[f64]) -> Outcome {
    if peaks.len() != 3 {
        return outcome(false, format!("expected 3 peaks, found {peaks:?}"));
    }
    let (s1, s2) = (peaks[1] - peaks[0], peaks[2] - peaks[1]);
    let ok = (s1 - 0.77).abs() <= 0.01 && (s2 - 0.77).abs() <= 0.01;
    outcome(ok, format!("spacings {s1:.4} G, {s2:.4} G (0.77 ± 0.01)"))
}

fn c3_drive_chain() -> Outcome {
    let res = AcousticResonance {
        frequency: 1.076e9,
        q_unloaded: 437.0,
        impedance: 29.9,
    };
    let s = stress_from_drive(25.0, &res, &PhysicalConstants::default());
    let ok = (s.sigma_max - 10e6).abs() < 1e-6 * 10e6
        && (s.sigma_perp * 1e-6 - 8.16).abs() <= 0.01
        && (s.rabi * 1e-3 - 245.0).abs() <= 5.0;
    outcome(
        ok,
        format!(
            "sigma_max {:.4} MPa, sigma_perp {:.4} MPa, rabi {:.2} kHz",
            s.sigma_max * 1e-6,
            s.sigma_perp * 1e-6,
            s.rabi * 1e-3
        ),
    )
}

fn c4_stress_ratio() -> Outcome {
    let a = AcousticResonance {
        frequency: 1.076e9,
        q_unloaded: 437.0,
        impedance: 29.9,
    };
    let b = AcousticResonance {
        frequency: 1.103e9,
        q_unloaded: 350.0,
        impedance: 33.5,
    };
    let r = stress_ratio(&a, &b);
    outcome((r - 1.14).abs() <= 0.005, format!("ratio {r:.5} (1.14 ± 0.005)"))
}

fn c5_depth_factor() -> Outcome {
    let f = depth_correction_factor(&PsfModel::default()).unwrap();
    outcome((f - 3.1).abs() <= 0.05, format!("factor {f:.4} (3.1 ± 0.05)"))
}

fn c6_depth_scan() -> Outcome {
    let out = run_experiment(&load("fig3b.toml"), &configs()).unwrap();
    let ratio = out.derived["antinode_node_ratio"].as_f64().unwrap();
    let overlap = out.derived["calibration_overlap"].as_f64().unwrap();
    let wavelength = out.derived["wavelength_m"].as_f64().unwrap() * 1e6;

    // Peak-to-trough swing per half wavelength of real depth.
    let d = column(&out.table, "d_dia_um");
    let s = column(&out.table, "signal");
    let half = 0.5 * wavelength;
    let swings: Vec<f64> = (0..)
        .map(|k| k as f64 * half)
        .take_while(|lo| lo + half <= d[d.len() - 1])
        .map(|lo| {
            let w: Vec<f64> = d
                .iter()
                .zip(&s)
                .filter(|(z, _)| **z >= lo && **z < lo + half)
                .map(|(_, v)| *v)
                .collect();
            w.iter().copied().fold(f64::NEG_INFINITY, f64::max) - w.iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect();
    let n = swings.len();
    let decays = n >= 4 && swings[n - 1] < swings[1] && swings[n - 2] < swings[1];

    let ok_ratio = (ratio - 1.5).abs() <= 0.15;
    let ok_overlap = (overlap - 0.84).abs() <= 0.05;
    outcome(
        ok_ratio && ok_overlap && decays,
        format!(
            "anti-node/node {ratio:.3} (1.5 ± 0.15: {}), overlap {overlap:.3} (0.84 ± 0.05: {}), \
             swing {:.3} -> {:.3} ({})",
            if ok_ratio { "ok" } else { "out" },
            if ok_overlap { "ok" } else { "out" },
            swings.get(1).copied().unwrap_or(f64::NAN),
            swings.last().copied().unwrap_or(f64::NAN),
            if decays { "decays" } else { "does not decay" },
        ),
    )
}

fn c7_perturbation() -> Outcome {
    let k = PhysicalConstants::default();
    let cfg = MisalignmentConfig::default();
    let per_g = driving_ratio(&cfg, &k).unwrap() / cfg.b_x0;
    let direct = cross_driving_field(&cfg, &k).unwrap();
    let ratio_form = cross_driving_field(
        &MisalignmentConfig {
            formula: CrossDrivingFormula::Ratio,
            ..cfg
        },
        &k,
    )
    .unwrap();
    let ok = (per_g / 0.0014 - 1.0).abs() <= 0.03 && (direct / 2.7e3 - 1.0).abs() <= 0.15;
    outcome(
        ok,
        format!(
            "ratio {per_g:.4e}/G (0.0014 ± 3%), direct {:.3} kHz (2.7 ± 15%), ratio form {:.3} kHz (factor {:.3})",
            direct * 1e-3,
            ratio_form * 1e-3,
            ratio_form / direct
        ),
    )
}

fn c8_tdse_vs_rwa() -> Outcome {
    let k = PhysicalConstants::default();
    let fields = FieldConfig::axial(192.0);
    let carrier = Transition::MinusPlus.frequency(&fields, &k);
    let rabi = 240e3;
    let period = 1.0 / rabi;
    let segments = 24;
    let dt = period / segments as f64;
    let cfg = PropagatorConfig::for_carrier(carrier);
    let mut state = SpinState::basis(Level::Minus);
    let mut worst: f64 = 0.0;
    for j in 0..segments {
        let t0 = j as f64 * dt;
        // continue the same carrier from t0
        let pulse = DrivePulse {
            kind: DriveKind::Stress,
            carrier,
            amplitude: rabi / k.stress_coupling,
            phase: 2.0 * PI * carrier * t0,
            duration: dt,
        };
        state = propagate(&state, &pulse.hamiltonian(&fields, &k), dt, &cfg).unwrap();
        let t = t0 + dt;
        let expect = (PI * rabi * t).sin().powi(2);
        worst = worst.max((state.population(Level::Plus) - expect).abs());
    }
    outcome(
        worst <= 1e-2,
        format!(
            "max |P - sin²(πΩt)| = {worst:.2e} over one period, Ω/carrier = {:.1e}",
            rabi / carrier
        ),
    )
}

fn c9_landau_zener() -> Outcome {
    let k = PhysicalConstants::default();
    let fields = FieldConfig::axial(100.0);
    let f = Transition::ZeroMinus.frequency(&fields, &k);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let rabi = 0.1e6 + i as f64 * 0.1e6;
        for j in 0..10 {
            // π²Ω²/α from 0.05 to 3
            let x = 0.05 * (60.0f64).powf(j as f64 / 9.0);
            let rate = (PI * rabi).powi(2) / x;
            let half_span = 400.0 * rabi;
            let sweep = SweepPulse {
                start: f - half_span,
                stop: f + half_span,
                amplitude: rabi * std::f64::consts::SQRT_2 / k.gyromagnetic_ratio,
                duration: 2.0 * half_span / rate,
                transition: Transition::ZeroMinus,
            };
            let cfg = PropagatorConfig {
                max_step: 0.01 / rabi.max(rate.sqrt()),
                ..Default::default()
            };
            let out = adiabatic_passage(&SpinState::basis(Level::Zero), &sweep, &fields, &k, &cfg).unwrap();
            let p = out.state.population(Level::Zero);
            worst = worst.max((p - landau_zener_probability(rabi, rate)).abs());
        }
    }
    outcome(worst <= 5e-3, format!("max |P - P_LZ| = {worst:.2e} over 10x10 grid"))
}

fn c10_perturbed_matrix() -> Outcome {
    let k = PhysicalConstants::default();
    let wm = k.zero_field_splitting - k.gyromagnetic_ratio * 192.0;
    let c_bound = 2.0;
    let mut worst: f64 = 0.0;
    for j in 0..=49 {
        let bx = 0.1 + j as f64 * 0.1;
        let cfg = MisalignmentConfig {
            b_par: 192.0,
            b_x0: bx,
            ..Default::default()
        };
        let approx = perturbed_sx_matrix(&cfg, &k).unwrap();
        let fields = FieldConfig {
            b_perp: bx,
            ..FieldConfig::axial(192.0)
        };
        let (_, v, _) = labeled_eigenstates(&build_hamiltonian(&fields, &k));
        let exact = v.adjoint() * spin1_operators().sx * v;
        let err = (approx.matrix() - exact).camax();
        let eps = k.gyromagnetic_ratio * bx / wm;
        worst = worst.max(err / (eps * eps));
    }
    outcome(
        worst <= c_bound,
        format!("error/(γB_x0/ω−1)² ≤ {worst:.3} (C = {c_bound})"),
    )
}

fn c11_q_circle() -> Outcome {
    let normal = Normal::new(0.0, 0.01).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for (i, q) in [100.0, 350.0, 437.0, 1000.0].into_iter().enumerate() {
        let res = AcousticResonance {
            frequency: 1.076e9,
            q_unloaded: q,
            impedance: 29.9,
        };
        let half = 3.0 * res.frequency / q;
        let freqs: Vec<f64> = (0..601)
            .map(|n| res.frequency - half + 2.0 * half * n as f64 / 600.0)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let refl: Vec<C64> = synthetic_reflection(&freqs, &res, 0.7)
            .into_iter()
            .map(|g| g + C64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect();
        let trace = S11Trace::new(freqs.clone(), refl, 50.0).unwrap();
        let fit = q_circle_fit(&trace, (freqs[0], freqs[600])).unwrap();
        let err = fit.resonance.q_unloaded / q - 1.0;
        ok &= err.abs() <= 0.03;
        details.push(format!("{q}: {:+.2}%", 100.0 * err));
    }
    outcome(ok, format!("Q errors {} (± 3%)", details.join(", ")))
}

fn c12_determinism() -> Outcome {
    let mut bad = Vec::new();
    for name in ["fig1c", "fig2b", "fig3b", "figS2b", "figS3b"] {
        let path = configs().join(format!("{name}.toml"));
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (fa, _) = run_config_file(&path, Some(a.path()), None).unwrap();
        let (fb, _) = run_config_file(&path, Some(b.path()), None).unwrap();
        let same_csv = std::fs::read(&fa.csv).unwrap() == std::fs::read(&fb.csv).unwrap();
        let same_json = std::fs::read(&fa.json).unwrap() == std::fs::read(&fb.json).unwrap();
        if !(same_csv && same_json) {
            bad.push(name);
        }
    }
    outcome(bad.is_empty(), format!("5 figure configs, differing: {bad:?}"))
}

#[test]
fn acceptance_criteria() {
    let peaks = odmsr_peaks();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 resonance condition", c1_resonance(&peaks)),
        ("2 hyperfine triplet", c2_triplet(&peaks)),
        ("3 drive chain", c3_drive_chain()),
        ("4 stress ratio", c4_stress_ratio()),
        ("5 depth correction", c5_depth_factor()),
        ("6 depth-scan model", c6_depth_scan()),
        ("7 perturbation ratio", c7_perturbation()),
        ("8 TDSE vs RWA", c8_tdse_vs_rwa()),
        ("9 Landau-Zener", c9_landau_zener()),
        ("10 perturbed matrix", c10_perturbed_matrix()),
        ("11 Q-circle recovery", c11_q_circle()),
        ("12 determinism", c12_determinism()),
    ];
    let mut failed = Vec::new();
    for (name, o) in &results {
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
