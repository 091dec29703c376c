use super::*;
use crate::acoustics::{HbarGeometry, StandingWave};
use crate::optics::{calibration_depth, calibration_overlap, depth_correction_factor, PsfModel, Response};
use proptest::prelude::*;

const F_HBAR: f64 = 1.076e9;
const SIGMA_PERP: f64 = 8.165e6;

fn consts() -> PhysicalConstants {
    PhysicalConstants::default()
}

fn depth_model() -> DepthScanModel {
    DepthScanModel {
        psf: PsfModel::default(),
        wave: StandingWave::at_resonance(10e6, F_HBAR, &HbarGeometry::default(), 0.0),
        thickness: 300e-6,
        response: Response::Linear,
        d_air: vec![],
    }
}

fn psf_ensemble() -> EnsembleSpec {
    let m = depth_model();
    let d_air = calibration_depth(&m) / depth_correction_factor(&m.psf).unwrap();
    EnsembleSpec::default()
        .psf_weighted(&m, d_air, DEFAULT_STRESS_SAMPLES)
        .unwrap()
}

fn resonance_field() -> f64 {
    F_HBAR / (2.0 * consts().gyromagnetic_ratio)
}

fn triplet(trace: &SignalTrace) -> Vec<Peak> {
    let mut peaks = trace.peaks(0.02);
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
    peaks.truncate(3);
    peaks.sort_by(|a, b| a.position.total_cmp(&b.position));
    peaks
}

#[test]
fn quantiles_match_overlap() {
    let ens = psf_ensemble();
    ens.validate().unwrap();
    assert_eq!(ens.stress.len(), 64);
    let overlap = calibration_overlap(&depth_model()).unwrap();
    assert!(
        (ens.mean_fraction() - overlap).abs() < 0.01,
        "{} vs {overlap}",
        ens.mean_fraction()
    );
    assert!(ens.stress.windows(2).all(|w| w[0].fraction <= w[1].fraction));
}

#[test]
fn passage_step_is_converged() {
    let p = PassageSpec::default();
    let fine = PassageSpec { max_step: 1e-9, ..p };
    for offset in [-2.156e6, 0.0, 2.156e6] {
        let d = p.unitary(offset, &consts()) - fine.unitary(offset, &consts());
        assert!(d.norm() < 1e-3, "{offset}: {}", d.norm());
    }
    assert!(passage_warnings(&p, &consts()).is_empty());
    let fast = PassageSpec { duration: 0.1e-6, ..p };
    assert_eq!(passage_warnings(&fast, &consts()).len(), 1);
}

#[test]
fn odmsr_triplet_at_resonance() {
    let scan = OdmsrScan::stress(field_sweep(186.0, 198.0, 0.01).unwrap(), F_HBAR, SIGMA_PERP, 6e-6);
    let trace = run_odmsr_scan(&scan, &psf_ensemble(), &consts()).unwrap();
    assert!(trace.warnings.is_empty(), "{:?}", trace.warnings);
    let peaks = triplet(&trace);
    assert_eq!(peaks.len(), 3, "{peaks:?}");
    assert!((peaks[1].position - resonance_field()).abs() < 0.01, "{peaks:?}");
    for w in peaks.windows(2) {
        assert!((w[1].position - w[0].position - 0.77).abs() < 0.01, "{peaks:?}");
    }
}

#[test]
fn zero_stress_is_flat_background() {
    let scan = OdmsrScan::stress(field_sweep(191.0, 193.0, 0.05).unwrap(), F_HBAR, 0.0, 6e-6);
    let ens = EnsembleSpec {
        background: 0.1,
        contrast: 0.3,
        ..EnsembleSpec::default()
    };
    let trace = run_odmsr_scan(&scan, &ens, &consts()).unwrap();
    for s in &trace.signal {
        // Passage infidelity only.
        assert!((s - 0.1).abs() < 1e-3, "{s}");
    }
}

#[test]
fn ensemble_is_a_mixture_of_sublevels() {
    let scan = OdmsrScan::stress(field_sweep(191.0, 193.2, 0.02).unwrap(), F_HBAR, SIGMA_PERP, 6e-6);
    let mixed = run_odmsr_scan(&scan, &EnsembleSpec::default(), &consts()).unwrap();
    let single: Vec<SignalTrace> = (0..3)
        .map(|k| {
            let mut w = [0.0; 3];
            w[k] = 1.0;
            let ens = EnsembleSpec {
                hyperfine_weights: w,
                ..EnsembleSpec::default()
            };
            run_odmsr_scan(&scan, &ens, &consts()).unwrap()
        })
        .collect();
    for i in 0..mixed.len() {
        let avg = (single[0].signal[i] + single[1].signal[i] + single[2].signal[i]) / 3.0;
        assert!((mixed.signal[i] - avg).abs() < 1e-14);
    }
}

#[test]
fn hyperfine_spacing_is_independent_of_drive() {
    for (sigma, tau) in [(2e6, 6e-6), (SIGMA_PERP, 3e-6)] {
        let scan = OdmsrScan::stress(field_sweep(190.5, 193.8, 0.01).unwrap(), F_HBAR, sigma, tau);
        let peaks = triplet(&run_odmsr_scan(&scan, &EnsembleSpec::default(), &consts()).unwrap());
        assert_eq!(peaks.len(), 3);
        for w in peaks.windows(2) {
            assert!((w[1].position - w[0].position - 0.77).abs() < 0.01, "{peaks:?}");
        }
    }
}

#[test]
fn weak_drive_is_quadratic() {
    let b0 = resonance_field();
    let peak = |sigma: f64| {
        let scan = OdmsrScan::stress(vec![b0], F_HBAR, sigma, 6e-6);
        run_odmsr_scan(&scan, &EnsembleSpec::default(), &consts())
            .unwrap()
            .signal[0]
    };
    // Rabi 1 kHz and 10 kHz; baseline from passage infidelity removed.
    let base = peak(0.0);
    let (a, b) = (peak(1e3 / 0.03) - base, peak(1e4 / 0.03) - base);
    let exponent = (b / a).log10();
    assert!((exponent - 2.0).abs() < 0.1, "{exponent}");
}

#[test]
fn noise_is_seeded_and_bounded() {
    let scan = OdmsrScan::stress(field_sweep(191.5, 192.5, 0.05).unwrap(), F_HBAR, SIGMA_PERP, 6e-6);
    let ens = EnsembleSpec {
        noise: 0.05,
        seed: 11,
        background: 0.05,
        ..EnsembleSpec::default()
    };
    let a = run_odmsr_scan(&scan, &ens, &consts()).unwrap();
    let b = run_odmsr_scan(&scan, &ens, &consts()).unwrap();
    assert_eq!(a, b);
    assert!(a.signal.iter().all(|s| (0.0..=1.05).contains(s)));
    let c = run_odmsr_scan(&scan, &EnsembleSpec { seed: 12, ..ens }, &consts()).unwrap();
    assert_ne!(a.signal, c.signal);
}

#[test]
fn rejects_bad_ensembles() {
    let bad = EnsembleSpec {
        hyperfine_weights: [0.5, 0.5, 0.5],
        ..EnsembleSpec::default()
    };
    assert!(bad.validate().is_err());
    let bad = EnsembleSpec {
        contrast: 0.0,
        ..EnsembleSpec::default()
    };
    assert!(bad.validate().is_err());
    let scan = OdmsrScan::stress(vec![], F_HBAR, SIGMA_PERP, 6e-6);
    assert!(run_odmsr_scan(&scan, &EnsembleSpec::default(), &consts()).is_err());
}

fn rabi_scan(taus: Vec<f64>) -> RabiScan {
    RabiScan {
        taus,
        b_par: resonance_field(),
        omega_hbar: F_HBAR,
        sigma_perp: SIGMA_PERP,
        passage: PassageSpec::default(),
    }
}

#[test]
fn homogeneous_rabi_matches_rwa() {
    let taus: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1e-6).collect();
    let out = run_rabi_style(&rabi_scan(taus.clone()), &EnsembleSpec::default(), &consts()).unwrap();
    let omega = 0.03 * SIGMA_PERP;
    for (tau, s) in taus.iter().zip(&out.trace.signal) {
        let expect = (std::f64::consts::PI * omega * tau).sin().powi(2) / 3.0;
        assert!((s - expect).abs() < 1e-2, "tau={tau}: {s} vs {expect}");
    }
    assert!(out.trace.signal[0] < 1e-3);
}

#[test]
fn psf_weighted_rabi_decays_on_microsecond_scale() {
    let taus: Vec<f64> = (0..=100).map(|k| k as f64 * 0.05e-6).collect();
    let out = run_rabi_style(&rabi_scan(taus), &psf_ensemble(), &consts()).unwrap();
    let fit = out.decay.unwrap();
    assert!(fit.time > 0.2e-6 && fit.time < 5e-6, "{fit:?}");
}

fn stray_mis(b_x0: f64, b_x1: f64) -> MisalignmentConfig {
    MisalignmentConfig {
        b_x0,
        b_x1,
        ..MisalignmentConfig::default()
    }
}

#[test]
fn stray_field_without_static_mixing_is_flat() {
    let scan = OdmsrScan::stress(field_sweep(191.0, 193.0, 0.05).unwrap(), F_HBAR, SIGMA_PERP, 6e-6);
    let trace = run_stray_field_control(&scan, &stray_mis(0.0, 0.5), &EnsembleSpec::default(), &consts()).unwrap();
    let max = trace.signal.iter().copied().fold(0.0, f64::max);
    assert!(max < 1e-3, "{max}");
}

#[test]
fn stray_field_weak_regime_ratio() {
    let c = consts();
    let b_x1 = 1e6 * std::f64::consts::SQRT_2 / c.gyromagnetic_ratio;
    let mis = stray_mis(10.0, b_x1);
    let b0 = resonance_field();
    // The transverse field shifts the |−1⟩ ↔ |+1⟩ line, so compare maxima.
    let mut scan = OdmsrScan::stress(field_sweep(b0 - 0.05, b0 + 0.05, 0.0005).unwrap(), F_HBAR, 0.0, 6e-6);
    let base = run_odmsr_scan(&scan, &EnsembleSpec::default(), &c).unwrap().signal[0];
    let max = |t: SignalTrace| t.signal.iter().copied().fold(0.0, f64::max) - base;

    let omega_c = cross_driving_field(&MisalignmentConfig { b_par: b0, ..mis }, &c).unwrap();
    let omega_s = 10e3;
    scan.pulse.amplitude = omega_s / c.stress_coupling;
    let stress = max(run_odmsr_scan(&scan, &EnsembleSpec::default(), &c).unwrap());
    let magnetic = max(run_stray_field_control(&scan, &mis, &EnsembleSpec::default(), &c).unwrap());
    let expect = (omega_c / omega_s).powi(2);
    assert!(
        (magnetic / stress / expect - 1.0).abs() < 0.02,
        "{} vs {expect}",
        magnetic / stress
    );
}

#[test]
fn stray_field_triplet_matches_odmsr() {
    let c = consts();
    let mis = stray_mis(10.0, 1e6 * std::f64::consts::SQRT_2 / c.gyromagnetic_ratio);
    let scan = OdmsrScan::stress(field_sweep(190.5, 193.8, 0.01).unwrap(), F_HBAR, SIGMA_PERP, 6e-6);
    let stress = triplet(&run_odmsr_scan(&scan, &EnsembleSpec::default(), &c).unwrap());
    let trace = run_stray_field_control(&scan, &mis, &EnsembleSpec::default(), &c).unwrap();
    let mut magnetic = trace.peaks(1e-3);
    magnetic.sort_by(|a, b| b.height.total_cmp(&a.height));
    magnetic.truncate(3);
    magnetic.sort_by(|a, b| a.position.total_cmp(&b.position));
    assert_eq!(magnetic.len(), 3);
    for (m, s) in magnetic.iter().zip(&stress) {
        // Transverse-field shift of the levels moves lines by < 0.05 G.
        assert!((m.position - s.position).abs() < 0.05, "{magnetic:?} vs {stress:?}");
    }
}

#[test]
fn calibration_round_trip() {
    let c = consts();
    let tau = 1.5e-6;
    let omega = 240e3;
    let scan = OdmsrScan::stress(
        field_sweep(190.0, 194.3, 0.01).unwrap(),
        F_HBAR,
        omega / c.stress_coupling,
        tau,
    );
    let ens = EnsembleSpec {
        contrast: 0.3,
        background: 0.05,
        ..EnsembleSpec::default()
    };
    let trace = run_odmsr_scan(&scan, &ens, &c).unwrap();
    let reference_omega = 150e3;
    let reference = MagneticReference {
        omega: reference_omega,
        amplitude: ens.contrast * (std::f64::consts::PI * reference_omega * tau).sin().powi(2),
        duration: tau,
    };
    let cfg = CalibrationConfig {
        pulse_duration: tau,
        ..CalibrationConfig::default()
    };
    let cal = calibrate_driving(&trace, &reference, 1.0, &cfg).unwrap();
    assert!((cal.omega / omega - 1.0).abs() < 0.05, "{cal:?}");
}

#[test]
fn calibration_rejects_flat_trace() {
    let x = field_sweep(190.0, 194.0, 0.01).unwrap();
    let trace = SignalTrace {
        signal: vec![0.05; x.len()],
        x,
        ..SignalTrace::default()
    };
    let reference = MagneticReference {
        omega: 1e5,
        amplitude: 0.1,
        duration: 1e-6,
    };
    let err = calibrate_driving(&trace, &reference, 0.84, &CalibrationConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NoResolvablePeaks(_)), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn center_peak_tracks_resonance(f in 0.5e9..2.0e9f64) {
        let b0 = f / (2.0 * consts().gyromagnetic_ratio);
        let step = 0.01;
        let scan = OdmsrScan::stress(field_sweep(b0 - 1.2, b0 + 1.2, step).unwrap(), f, SIGMA_PERP, 6e-6);
        let trace = run_odmsr_scan(&scan, &EnsembleSpec::default(), &consts()).unwrap();
        let peaks = triplet(&trace);
        prop_assert_eq!(peaks.len(), 3);
        prop_assert!((peaks[1].position - b0).abs() < step);
        for s in &trace.signal {
            prop_assert!((0.0..=1.0).contains(s));
        }
    }
}
