//! Regenerates the synthetic Touchstone files under `configs/data`.
//!
//! `cargo run -p nvmech-cli --example make_synthetic_s1p`

use std::path::Path;

use nvmech::acoustics::{synthetic_reflection, write_touchstone, AcousticResonance, S11Trace, TouchstoneFormat};
use nvmech::linalg::C64;

const Z0: f64 = 50.0;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn to_z(g: C64) -> C64 {
    (1.0 + g) / (1.0 - g) * Z0
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/data");
    std::fs::create_dir_all(&dir)?;

    let single = AcousticResonance {
        frequency: 1.076e9,
        q_unloaded: 437.0,
        impedance: 29.9,
    };
    let freqs = linspace(1.066e9, 1.086e9, 401);
    let trace = S11Trace::new(freqs.clone(), synthetic_reflection(&freqs, &single, 0.3), Z0)?;
    std::fs::write(
        dir.join("hbar_1076mhz.s1p"),
        write_touchstone(&trace, TouchstoneFormat::Ri),
    )?;

    // Two modes of the comb in series.
    let second = AcousticResonance {
        frequency: 1.103e9,
        q_unloaded: 350.0,
        impedance: 33.5,
    };
    let freqs = linspace(1.060e9, 1.120e9, 1201);
    let a = synthetic_reflection(&freqs, &single, 0.0);
    let b = synthetic_reflection(&freqs, &second, 0.0);
    let refl: Vec<C64> = a
        .iter()
        .zip(&b)
        .map(|(&ga, &gb)| {
            let z = to_z(ga) + to_z(gb);
            (z - Z0) / (z + Z0)
        })
        .collect();
    let trace = S11Trace::new(freqs, refl, Z0)?;
    std::fs::write(
        dir.join("hbar_comb.s1p"),
        write_touchstone(&trace, TouchstoneFormat::Ri),
    )?;
    Ok(())
}
