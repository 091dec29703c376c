//! Peak location and the small fits used on simulated traces.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::numeric::{golden_min, linear_lstsq};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Sub-sample position from a parabola through the three highest samples.
    pub position: f64,
    pub height: f64,
    pub prominence: f64,
}

/// Local maxima with prominence at least `min_prominence`, in order of
/// position. `x` must be increasing.
pub fn find_peaks(x: &[f64], y: &[f64], min_prominence: f64) -> Vec<Peak> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if !(y[i] > y[i - 1]) {
            i += 1;
            continue;
        }
        // Plateau: extend to its right edge.
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        if j + 1 >= n || y[j + 1] > y[i] {
            i = j + 1;
            continue;
        }
        let left_min = lowest_before_higher(y, i, -1);
        let right_min = lowest_before_higher(y, j, 1);
        let prominence = y[i] - left_min.max(right_min);
        if prominence >= min_prominence {
            let k = (i + j) / 2;
            let position = if i == j {
                let (y0, y1, y2) = (y[k - 1], y[k], y[k + 1]);
                let denom = y0 - 2.0 * y1 + y2;
                let h = 0.5 * (x[k + 1] - x[k - 1]);
                let shift = if denom < 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
                x[k] + shift.clamp(-0.5, 0.5) * h
            } else {
                0.5 * (x[i] + x[j])
            };
            out.push(Peak {
                position,
                height: y[i],
                prominence,
            });
        }
        i = j + 1;
    }
    out
}

fn lowest_before_higher(y: &[f64], from: usize, dir: isize) -> f64 {
    let top = y[from];
    let mut lowest = top;
    let mut k = from as isize + dir;
    while k >= 0 && (k as usize) < y.len() {
        let v = y[k as usize];
        if v > top {
            break;
        }
        lowest = lowest.min(v);
        k += dir;
    }
    lowest
}

/// `offset + amplitude·exp(−τ/time)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub offset: f64,
    pub amplitude: f64,
    pub time: f64,
    pub rms_residual: f64,
}

/// Least-squares exponential fit: golden-section search on the decay time,
/// offset and amplitude solved linearly at each trial.
pub fn fit_decay(t: &[f64], y: &[f64]) -> Option<DecayFit> {
    if t.len() < 3 {
        return None;
    }
    let span = t.iter().copied().fold(f64::NEG_INFINITY, f64::max) - t.iter().copied().fold(f64::INFINITY, f64::min);
    if !(span > 0.0) {
        return None;
    }
    let solve = |time: f64| {
        let e: Vec<f64> = t.iter().map(|&ti| (-ti / time).exp()).collect();
        linear_lstsq(&[vec![1.0; t.len()], e], y)
    };
    let rss = |log_time: f64| solve(log_time.exp()).map_or(f64::INFINITY, |(_, r)| r);
    let (lo, hi) = ((span * 1e-3).ln(), (span * 1e2).ln());
    // Coarse scan first so the golden search starts in the right basin.
    let grid = 60;
    let best = (0..=grid)
        .map(|k| lo + (hi - lo) * k as f64 / grid as f64)
        .min_by(|a, b| rss(*a).total_cmp(&rss(*b)))?;
    let step = (hi - lo) / grid as f64;
    let (log_time, _) = golden_min(rss, best - step, best + step, 1e-10);
    let time = log_time.exp();
    let (c, r) = solve(time)?;
    Some(DecayFit {
        offset: c[0],
        amplitude: c[1],
        time,
        rms_residual: (r / t.len() as f64).sqrt(),
    })
}

/// Three Gaussians of common width at `center − spacing`, `center`,
/// `center + spacing` on a constant background.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletFit {
    pub center: f64,
    pub width: f64,
    pub background: f64,
    /// Heights above background, in order of increasing position.
    pub amplitudes: [f64; 3],
    pub rms_residual: f64,
}

fn triplet_columns(x: f64, center: f64, width: f64, spacing: f64) -> Vector4<f64> {
    let g = |mu: f64| (-(x - mu).powi(2) / (2.0 * width * width)).exp();
    Vector4::new(1.0, g(center - spacing), g(center), g(center + spacing))
}

fn triplet_solve(x: &[f64], y: &[f64], center: f64, width: f64, spacing: f64) -> Option<(Vector4<f64>, f64)> {
    let mut ata = Matrix4::zeros();
    let mut aty = Vector4::zeros();
    for (&xi, &yi) in x.iter().zip(y) {
        let a = triplet_columns(xi, center, width, spacing);
        ata += a * a.transpose();
        aty += a * yi;
    }
    let coef = ata.cholesky()?.solve(&aty);
    let rss = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (triplet_columns(xi, center, width, spacing).dot(&coef) - yi).powi(2))
        .sum();
    Some((coef, rss))
}

/// Variable-projection fit of a hyperfine triplet with fixed `spacing`.
pub fn fit_triplet(x: &[f64], y: &[f64], spacing: f64) -> Option<TripletFit> {
    if x.len() < 8 {
        return None;
    }
    let step = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let (w_lo, w_hi) = ((0.5 * step).max(1e-6 * spacing), 0.5 * spacing);
    let cost = |c: f64, w: f64| triplet_solve(x, y, c, w, spacing).map_or(f64::INFINITY, |(_, r)| r);

    let widths: Vec<f64> = (0..=24).map(|k| w_lo * (w_hi / w_lo).powf(k as f64 / 24.0)).collect();
    let mut best = (x[0], w_lo, f64::INFINITY);
    for &c in x {
        for &w in &widths {
            let r = cost(c, w);
            if r < best.2 {
                best = (c, w, r);
            }
        }
    }
    let (mut c, mut w, _) = best;
    let mut dc = step.max(1e-12);
    for _ in 0..6 {
        c = golden_min(|c| cost(c, w), c - dc, c + dc, 1e-6 * dc).0;
        let lw = golden_min(|lw: f64| cost(c, lw.exp()), (w / 1.5).ln(), (w * 1.5).ln(), 1e-9).0;
        w = lw.exp();
        dc *= 0.5;
    }
    let (coef, rss) = triplet_solve(x, y, c, w, spacing)?;
    Some(TripletFit {
        center: c,
        width: w,
        background: coef[0],
        amplitudes: [coef[1], coef[2], coef[3]],
        rms_residual: (rss / x.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sub_sample_peaks() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&x| (-(x - 5.03f64).powi(2)).exp() + 0.5 * (-(x - 12.0f64).powi(2) * 4.0).exp())
            .collect();
        let peaks = find_peaks(&x, &y, 0.1);
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].position - 5.03).abs() < 0.01, "{peaks:?}");
        assert!((peaks[1].position - 12.0).abs() < 1e-9);
        assert!(find_peaks(&x, &vec![1.0; 200], 0.0).is_empty());
    }

    #[test]
    fn prominence_filters_ripples() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| 1e-4 * (x * 1.3).sin()).collect();
        assert!(find_peaks(&x, &y, 1e-2).is_empty());
    }

    #[test]
    fn decay_fit_recovers_parameters() {
        let t: Vec<f64> = (0..80).map(|i| i as f64 * 0.05e-6).collect();
        let y: Vec<f64> = t.iter().map(|&t| 0.2 - 0.15 * (-t / 1.1e-6).exp()).collect();
        let fit = fit_decay(&t, &y).unwrap();
        assert!((fit.time / 1.1e-6 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.offset - 0.2).abs() < 1e-9);
        assert!((fit.amplitude + 0.15).abs() < 1e-9);
    }

    #[test]
    fn triplet_fit_recovers_gaussians() {
        let x: Vec<f64> = (0..1201).map(|i| 186.0 + i as f64 * 0.01).collect();
        let g = |x: f64, mu: f64| (-(x - mu).powi(2) / (2.0 * 0.05f64.powi(2))).exp();
        let y: Vec<f64> = x
            .iter()
            .map(|&x| 0.1 + 0.2 * g(x, 191.37) + 0.3 * g(x, 192.14) + 0.25 * g(x, 192.91))
            .collect();
        let fit = fit_triplet(&x, &y, 0.77).unwrap();
        assert!((fit.center - 192.14).abs() < 1e-6, "{fit:?}");
        assert!((fit.width - 0.05).abs() < 1e-6);
        for (a, e) in fit.amplitudes.iter().zip([0.2, 0.3, 0.25]) {
            assert!((a - e).abs() < 1e-6);
        }
        assert!((fit.background - 0.1).abs() < 1e-8);
    }
}
