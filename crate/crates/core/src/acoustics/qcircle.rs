//! Q-circle extraction of a one-port resonance from its reflection locus.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{AcousticResonance, S11Trace, REFERENCE_IMPEDANCE};
use crate::error::{Error, Result};
use crate::linalg::C64;

/// Minimum samples inside the fit window.
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: C64,
    pub radius: f64,
    /// RMS of the radial residuals.
    pub rms_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QCircleFit {
    pub resonance: AcousticResonance,
    pub q_loaded: f64,
    pub coupling: f64,
    pub circle: Circle,
    /// Reflection at resonance and far off resonance, both on the fitted circle.
    pub gamma_resonant: C64,
    pub gamma_detuned: C64,
}

/// Algebraic (Taubin) circle fit.
pub fn fit_circle(points: &[C64]) -> Result<Circle> {
    if points.len() < 3 {
        return Err(Error::IllConditioned(format!(
            "circle fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<C64>() / n;

    let (mut mxx, mut myy, mut mxy, mut mxz, mut myz, mut mzz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (x, y) = (p.re - mean.re, p.im - mean.im);
        let z = x * x + y * y;
        mxx += x * x;
        myy += y * y;
        mxy += x * y;
        mxz += x * z;
        myz += y * z;
        mzz += z * z;
    }
    mxx /= n;
    myy /= n;
    mxy /= n;
    mxz /= n;
    myz /= n;
    mzz /= n;

    let mz = mxx + myy;
    if mz < 1e-24 {
        return Err(Error::NoResonance("reflection trace has no spread".into()));
    }
    let cov_xy = mxx * myy - mxy * mxy;
    let var_z = mzz - mz * mz;
    let a3 = 4.0 * mz;
    let a2 = -3.0 * mz * mz - mzz;
    let a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
    let a0 = mxz * (mxz * myy - myz * mxy) + myz * (myz * mxx - mxz * mxy) - var_z * cov_xy;

    let (mut x, mut y) = (0.0f64, a0);
    for _ in 0..100 {
        let dy = a1 + x * (2.0 * a2 + 3.0 * a3 * x);
        let x_new = x - y / dy;
        if x_new == x || !x_new.is_finite() {
            break;
        }
        let y_new = a0 + x_new * (a1 + x_new * (a2 + x_new * a3));
        if y_new.abs() >= y.abs() {
            break;
        }
        x = x_new;
        y = y_new;
    }

    let det = x * x - x * mz + cov_xy;
    if !(det.abs() > 1e-14 * mz * mz) {
        return Err(Error::IllConditioned(format!(
            "circle fit determinant {det:e} is singular (points collinear?)"
        )));
    }
    let xc = (mxz * (myy - x) - myz * mxy) / det / 2.0;
    let yc = (myz * (mxx - x) - mxz * mxy) / det / 2.0;
    let center = mean + C64::new(xc, yc);
    let radius = (xc * xc + yc * yc + mz).sqrt();
    if !center.re.is_finite() || !center.im.is_finite() || !radius.is_finite() {
        return Err(Error::IllConditioned(
            "circle fit produced non-finite parameters".into(),
        ));
    }
    let rms_residual = (points
        .iter()
        .map(|p| ((p - center).norm() - radius).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(Circle {
        center,
        radius,
        rms_residual,
    })
}

fn wrap(a: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Angle about the circle center: θ(f) = θ0 − 2·atan(2·Q_L·(f − f0)/f0).
fn phase_model(p: &Vector3<f64>, f: f64) -> f64 {
    p[0] - 2.0 * (2.0 * p[1] * (f - p[2]) / p[2]).atan()
}

fn phase_jacobian(p: &Vector3<f64>, f: f64) -> Vector3<f64> {
    let (ql, f0) = (p[1], p[2]);
    let x = 2.0 * ql * (f - f0) / f0;
    let g = -2.0 / (1.0 + x * x);
    Vector3::new(1.0, g * 2.0 * (f - f0) / f0, g * (-2.0 * ql * f / (f0 * f0)))
}

/// Levenberg-Marquardt fit of the phase model. Returns parameters and the RMS
/// angular residual.
fn fit_phase(freqs: &[f64], angles: &[f64], start: Vector3<f64>) -> Result<(Vector3<f64>, f64)> {
    let cost = |p: &Vector3<f64>| -> f64 {
        freqs
            .iter()
            .zip(angles)
            .map(|(&f, &a)| wrap(a - phase_model(p, f)).powi(2))
            .sum()
    };
    let mut p = start;
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&f, &a) in freqs.iter().zip(angles) {
            let j = phase_jacobian(&p, f);
            let r = wrap(a - phase_model(&p, f));
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let diag = jtj.diagonal();
        if diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::IllConditioned("phase fit Jacobian is degenerate".into()));
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for k in 0..3 {
                a[(k, k)] += lambda * diag[k];
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            if trial[2] <= 0.0 || !trial.iter().all(|v| v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let ct = cost(&trial);
            if ct < c {
                let done = (c - ct) <= 1e-15 * c.max(1e-300)
                    || step.component_div(&p.map(|v| v.abs().max(1e-12))).amax() < 1e-13;
                p = trial;
                c = ct;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if done {
                    return finish(p, c, freqs.len(), &jtj);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let mut jtj = Matrix3::zeros();
    for &f in freqs {
        let j = phase_jacobian(&p, f);
        jtj += j * j.transpose();
    }
    finish(p, c, freqs.len(), &jtj)
}

fn finish(p: Vector3<f64>, cost: f64, n: usize, jtj: &Matrix3<f64>) -> Result<(Vector3<f64>, f64)> {
    // Condition number of the column-scaled normal matrix.
    let s = jtj.diagonal().map(|d| 1.0 / d.sqrt());
    let scaled = Matrix3::from_fn(|i, j| jtj[(i, j)] * s[i] * s[j]);
    let ev = scaled.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    if !(lo > 1e-14 * hi) {
        return Err(Error::IllConditioned(format!(
            "phase fit condition number {:e} overflows",
            hi / lo.max(0.0)
        )));
    }
    Ok((p, (cost / n as f64).sqrt()))
}

/// Fits one resonance inside `window` (Hz).
pub fn q_circle_fit(trace: &S11Trace, window: (f64, f64)) -> Result<QCircleFit> {
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter {
            name: "window",
            constraint: "finite with lo < hi",
            value: hi - lo,
        });
    }
    let (freqs, gammas) = trace.window(lo, hi);
    if freqs.len() < MIN_POINTS {
        return Err(Error::InvalidParameter {
            name: "window",
            constraint: "must contain at least 8 samples",
            value: freqs.len() as f64,
        });
    }
    let circle = fit_circle(&gammas)?;
    if circle.radius < 3.0 * circle.rms_residual || circle.radius < 1e-6 {
        return Err(Error::NoResonance(format!(
            "circle radius {:.3e} is below the noise floor (rms residual {:.3e})",
            circle.radius, circle.rms_residual
        )));
    }

    let angles: Vec<f64> = gammas.iter().map(|g| (g - circle.center).arg()).collect();
    // Start at the steepest phase change.
    let (mut best, mut slope) = (1, 0.0f64);
    for i in 1..freqs.len() - 1 {
        let s = wrap(angles[i + 1] - angles[i - 1]) / (freqs[i + 1] - freqs[i - 1]);
        if s.abs() > slope.abs() {
            best = i;
            slope = s;
        }
    }
    let f_guess = freqs[best];
    let start = Vector3::new(angles[best], -slope * f_guess / 4.0, f_guess);
    let (p, rms_angle) = fit_phase(&freqs, &angles, start)?;
    if rms_angle > 0.5 {
        return Err(Error::NoResonance(format!(
            "phase does not follow a single-pole resonance (rms {rms_angle:.3} rad)"
        )));
    }
    let (theta0, q_loaded, f0) = (p[0], p[1].abs(), p[2]);
    if !(lo..=hi).contains(&f0) {
        return Err(Error::NoResonance(format!(
            "fitted resonance {f0:.6e} Hz lies outside the window"
        )));
    }

    let gamma_resonant = circle.center + C64::from_polar(circle.radius, theta0);
    let gamma_detuned = circle.center - C64::from_polar(circle.radius, theta0);
    let d = (2.0 * circle.radius / gamma_detuned.norm()).min(2.0 - 1e-12);
    let coupling = d / (2.0 - d);
    let q_unloaded = q_loaded * (1.0 + coupling);

    let g = -gamma_resonant / gamma_detuned;
    let z = REFERENCE_IMPEDANCE * (1.0 + g) / (1.0 - g);

    Ok(QCircleFit {
        resonance: AcousticResonance {
            frequency: f0,
            q_unloaded,
            impedance: z.re,
        },
        q_loaded,
        coupling,
        circle,
        gamma_resonant,
        gamma_detuned,
    })
}

/// Reflection of a parallel resonator `Z(f) = R / (1 + 2jQ0(f − f0)/f0)`
/// against the 50 Ω reference, rotated by `rotation` radians.
pub fn synthetic_reflection(freqs: &[f64], res: &AcousticResonance, rotation: f64) -> Vec<C64> {
    let phase = C64::from_polar(1.0, rotation);
    freqs
        .iter()
        .map(|&f| {
            let x = 2.0 * res.q_unloaded * (f - res.frequency) / res.frequency;
            let z = C64::new(res.impedance, 0.0) / C64::new(1.0, x);
            phase * (z - REFERENCE_IMPEDANCE) / (z + REFERENCE_IMPEDANCE)
        })
        .collect()
}
