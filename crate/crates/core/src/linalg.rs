//! Minimal dense 2x2 complex matrix used for the flavor-basis Hamiltonian.

use std::ops::{Add, Mul, Sub};

use crate::params::Complex;

/// Row-major 2x2 complex matrix, rows/columns ordered (B0, B0bar).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex; 2]; 2]);

impl Mat2 {
    pub fn zero() -> Self {
        Self([[Complex::new(0.0, 0.0); 2]; 2])
    }

    pub fn identity() -> Self {
        Self::diag(Complex::new(1.0, 0.0), Complex::new(1.0, 0.0))
    }

    pub fn diag(a: Complex, d: Complex) -> Self {
        let z = Complex::new(0.0, 0.0);
        Self([[a, z], [z, d]])
    }

    pub fn get(&self, i: usize, j: usize) -> Complex {
        self.0[i][j]
    }

    pub fn scale(&self, k: Complex) -> Self {
        let m = self.0;
        Self([[m[0][0] * k, m[0][1] * k], [m[1][0] * k, m[1][1] * k]])
    }

    pub fn trace(&self) -> Complex {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> Complex {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn adjoint(&self) -> Self {
        let m = self.0;
        Self([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn apply(&self, v: [Complex; 2]) -> [Complex; 2] {
        let m = self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// Eigenvalues ordered by ascending real part.
    pub fn eigenvalues(&self) -> [Complex; 2] {
        let half_tr = self.trace() * 0.5;
        let disc = (half_tr * half_tr - self.det()).sqrt();
        let (a, b) = (half_tr - disc, half_tr + disc);
        if a.re <= b.re {
            [a, b]
        } else {
            [b, a]
        }
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        worst
    }

    /// Induced 1-norm (max column sum).
    pub fn norm_one(&self) -> f64 {
        let m = self.0;
        (m[0][0].norm() + m[1][0].norm()).max(m[0][1].norm() + m[1][1].norm())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        Mat2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        self + rhs.scale(Complex::new(-1.0, 0.0))
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        let mut out = [[Complex::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }
}
