//! Test-only oracles and random parameter draws.

use rand::Rng;

use crate::linalg::Mat2;
use crate::params::{Complex, MixingParams, Postselection};

/// Matrix exponential by scaling and squaring of a degree-20 Taylor series.
pub fn expm(a: &Mat2) -> Mat2 {
    let norm = a.norm_one();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.scale(Complex::new(0.5f64.powi(squarings), 0.0));
    let mut term = Mat2::identity();
    let mut sum = Mat2::identity();
    for k in 1..=20 {
        term = (term * scaled).scale(Complex::new(1.0 / k as f64, 0.0));
        sum = sum + term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

pub fn random_mixing<R: Rng>(rng: &mut R) -> MixingParams {
    let abs_p: f64 = rng.random_range(0.2..0.98);
    let phase_p = rng.random_range(-3.1..3.1);
    let phase_q = rng.random_range(-3.1..3.1);
    let abs_q = (1.0 - abs_p * abs_p).sqrt();
    MixingParams::new(Complex::from_polar(abs_p, phase_p), Complex::from_polar(abs_q, phase_q)).unwrap()
}

pub fn random_post<R: Rng>(rng: &mut R) -> Postselection {
    let abs_r: f64 = rng.random_range(0.05..0.99);
    let abs_s = (1.0 - abs_r * abs_r).sqrt();
    Postselection::new(
        Complex::from_polar(abs_r, rng.random_range(-3.1..3.1)),
        Complex::from_polar(abs_s, rng.random_range(-3.1..3.1)),
    )
    .unwrap()
}

#[test]
fn expm_of_diagonal() {
    let a = Mat2::diag(Complex::new(0.3, 2.0), Complex::new(-1.5, -7.0));
    let e = expm(&a);
    assert!((e.get(0, 0) - Complex::new(0.3, 2.0).exp()).norm() < 1e-13);
    assert!((e.get(1, 1) - Complex::new(-1.5, -7.0).exp()).norm() < 1e-13);
    assert!(e.get(0, 1).norm() < 1e-15);
}
