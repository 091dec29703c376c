//! Small dense complex matrices for the three-level spin problem.
//!
//! All Hamiltonians are expressed in Hz (cycles per second). Propagators
//! apply the factor of 2π internally: `U(dt) = exp(-2πi H dt)`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat3 = Matrix3<C64>;
pub type Vec3 = Vector3<C64>;
pub type Mat2 = Matrix2<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub(crate) fn real(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn max_abs(m: &Mat3) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation of `m` from its conjugate transpose, relative
/// to the largest entry (absolute when the matrix is zero).
pub fn hermitian_deviation(m: &Mat3) -> f64 {
    let dev = max_abs(&(m - m.adjoint()));
    let scale = max_abs(m);
    if scale > 0.0 {
        dev / scale
    } else {
        dev
    }
}

/// A 3×3 Hermitian matrix in the {|+1⟩, |0⟩, |−1⟩} basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HermitianMatrix(Mat3);

/// Eigen-decomposition with eigenvalues in ascending order; column `k` of
/// `vectors` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: [f64; 3],
    pub vectors: Mat3,
}

impl HermitianMatrix {
    pub fn new(m: Mat3) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteHamiltonian { time: 0.0 });
        }
        let deviation = hermitian_deviation(&m);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self::symmetrized(m))
    }

    /// Projects onto the Hermitian part, `(m + m†)/2`.
    pub(crate) fn symmetrized(m: Mat3) -> Self {
        Self((m + m.adjoint()) * real(0.5))
    }

    pub fn zeros() -> Self {
        Self(Mat3::zeros())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn eigh(&self) -> Eigen {
        let decomp = self.0.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| decomp.eigenvalues[a].total_cmp(&decomp.eigenvalues[b]));
        let mut vectors = Mat3::zeros();
        let mut values = [0.0; 3];
        for (dst, &src) in order.iter().enumerate() {
            values[dst] = decomp.eigenvalues[src];
            vectors.set_column(dst, &decomp.eigenvectors.column(src));
        }
        Eigen { values, vectors }
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        self.eigh().values
    }

    /// `exp(-2πi H dt)`; unitary to rounding for any `dt`.
    pub fn propagator(&self, dt: f64) -> Mat3 {
        if is_diagonal(&self.0) {
            return Mat3::from_diagonal(&Vec3::from_fn(|k, _| {
                C64::from_polar(1.0, -2.0 * PI * self.0[(k, k)].re * dt)
            }));
        }
        let Eigen { values, vectors } = self.eigh();
        let phases = Mat3::from_diagonal(&Vec3::from_fn(|k, _| C64::from_polar(1.0, -2.0 * PI * values[k] * dt)));
        vectors * phases * vectors.adjoint()
    }
}

fn is_diagonal(m: &Mat3) -> bool {
    (0..3).all(|i| (0..3).all(|j| i == j || m[(i, j)] == C64::new(0.0, 0.0)))
}

/// Exact propagator of a 2×2 Hermitian Hamiltonian (Hz) over `dt`.
pub fn propagator2(h: &Mat2, dt: f64) -> Mat2 {
    let mean = 0.5 * (h[(0, 0)].re + h[(1, 1)].re);
    let half_diff = 0.5 * (h[(0, 0)].re - h[(1, 1)].re);
    let off = h[(0, 1)];
    let norm = (half_diff * half_diff + off.norm_sqr()).sqrt();
    let global = C64::from_polar(1.0, -2.0 * PI * mean * dt);
    let angle = 2.0 * PI * norm * dt;
    let (s, co) = angle.sin_cos();
    // exp(-i angle n·σ) = cos - i sin (n·σ)
    let (nz, nxy) = if norm > 0.0 {
        (half_diff / norm, off / norm)
    } else {
        (0.0, C64::new(0.0, 0.0))
    };
    let i_s = C64::new(0.0, s);
    Mat2::new(real(co) - i_s * nz, -i_s * nxy, -i_s * nxy.conj(), real(co) + i_s * nz) * global
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> HermitianMatrix {
        HermitianMatrix::new(Mat3::new(
            real(2.0),
            c(0.3, -0.1),
            c(0.0, 0.5),
            c(0.3, 0.1),
            real(-1.0),
            c(0.2, 0.0),
            c(0.0, -0.5),
            c(0.2, 0.0),
            real(0.5),
        ))
        .unwrap()
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = *sample().matrix();
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eigh_reconstructs() {
        let h = sample();
        let e = h.eigh();
        assert!(e.values[0] <= e.values[1] && e.values[1] <= e.values[2]);
        let d = Mat3::from_diagonal(&Vec3::from_fn(|k, _| real(e.values[k])));
        let back = e.vectors * d * e.vectors.adjoint();
        assert!((back - h.matrix()).norm() < 1e-12);
    }

    #[test]
    fn propagator_is_unitary_and_composes() {
        let h = sample();
        let u1 = h.propagator(0.37);
        let u2 = h.propagator(0.74);
        assert!((u1.adjoint() * u1 - Mat3::identity()).norm() < 1e-13);
        assert!((u1 * u1 - u2).norm() < 1e-12);
    }

    #[test]
    fn propagator_matches_series() {
        let h = sample();
        let dt = 1e-3;
        let a = h.matrix() * c(0.0, -2.0 * PI * dt);
        let mut term = Mat3::identity();
        let mut sum = Mat3::identity();
        for k in 1..20 {
            term = term * a / real(k as f64);
            sum += term;
        }
        assert!((h.propagator(dt) - sum).norm() < 1e-14);
    }

    #[test]
    fn two_level_propagator_matches_three_level_embedding() {
        let h2 = Mat2::new(real(0.4), c(0.3, 0.2), c(0.3, -0.2), real(-1.1));
        let mut h3 = Mat3::zeros();
        h3[(0, 0)] = h2[(0, 0)];
        h3[(0, 2)] = h2[(0, 1)];
        h3[(2, 0)] = h2[(1, 0)];
        h3[(2, 2)] = h2[(1, 1)];
        let u3 = HermitianMatrix::new(h3).unwrap().propagator(0.8);
        let u2 = propagator2(&h2, 0.8);
        assert!((u3[(0, 0)] - u2[(0, 0)]).norm() < 1e-13);
        assert!((u3[(0, 2)] - u2[(0, 1)]).norm() < 1e-13);
        assert!((u3[(2, 0)] - u2[(1, 0)]).norm() < 1e-13);
        assert!((u3[(2, 2)] - u2[(1, 1)]).norm() < 1e-13);
    }
}
