//! Double-sided crystal-ball resolution function: a Gaussian core on
//! [-alpha_L, alpha_H] (in units of sigma) joined continuously to power-law
//! tails, normalized analytically.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};

use crate::error::{ensure_finite, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolutionParams {
    /// Core mean (ps).
    pub mu: f64,
    /// Core width (ps).
    pub sigma: f64,
    pub alpha_l: f64,
    pub alpha_h: f64,
    pub n_l: f64,
    pub n_h: f64,
}

impl Default for ResolutionParams {
    /// Placeholder shape; not fitted to any detector.
    fn default() -> Self {
        Self { mu: 0.0, sigma: 0.8, alpha_l: 1.2, alpha_h: 1.5, n_l: 3.0, n_h: 4.0 }
    }
}

impl ResolutionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("alpha_L", self.alpha_l),
            ("alpha_H", self.alpha_h),
            ("n_L", self.n_l),
            ("n_H", self.n_h),
        ] {
            ensure_finite(name, v)?;
        }
        if self.sigma <= 0.0 {
            return Err(invalid("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if self.alpha_l <= 0.0 || self.alpha_h <= 0.0 {
            return Err(invalid("alpha", "transition points must be positive"));
        }
        if self.n_l <= 1.0 || self.n_h <= 1.0 {
            return Err(invalid("n", "tail exponents must exceed 1 for a normalizable tail"));
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<DscbShape> {
        self.validate()?;
        DscbShape::new(self.alpha_l, self.alpha_h, self.n_l, self.n_h)
    }

    pub fn kernel(&self) -> Result<Resolution> {
        Ok(Resolution { mu: self.mu, sigma: self.sigma, shape: self.shape()? })
    }
}

/// The standardized shape in X = (x - mu)/sigma, with its integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DscbShape {
    alpha_l: f64,
    alpha_h: f64,
    n_l: f64,
    n_h: f64,
    left: f64,
    core: f64,
    right: f64,
}

impl DscbShape {
    pub fn new(alpha_l: f64, alpha_h: f64, n_l: f64, n_h: f64) -> Result<Self> {
        if !(alpha_l > 0.0 && alpha_h > 0.0) {
            return Err(invalid("alpha", "transition points must be positive"));
        }
        if !(n_l > 1.0 && n_h > 1.0) {
            return Err(invalid("n", "tail exponents must exceed 1 for a normalizable tail"));
        }
        let tail = |a: f64, n: f64| (-0.5 * a * a).exp() * (n / a) / (n - 1.0);
        Ok(Self {
            alpha_l,
            alpha_h,
            n_l,
            n_h,
            left: tail(alpha_l, n_l),
            core: FRAC_PI_2.sqrt() * (erf(alpha_h / SQRT_2) + erf(alpha_l / SQRT_2)),
            right: tail(alpha_h, n_h),
        })
    }

    pub fn alpha_l(&self) -> f64 {
        self.alpha_l
    }
    pub fn alpha_h(&self) -> f64 {
        self.alpha_h
    }
    pub fn n_l(&self) -> f64 {
        self.n_l
    }
    pub fn n_h(&self) -> f64 {
        self.n_h
    }

    /// Integral of the unnormalized shape over the real line.
    pub fn integral(&self) -> f64 {
        self.left + self.core + self.right
    }

    /// Unnormalized shape (peak value 1 at X = 0).
    pub fn eval(&self, x: f64) -> f64 {
        if x < -self.alpha_l {
            let (a, n) = (self.alpha_l, self.n_l);
            (-0.5 * a * a).exp() * ((a / n) * (n / a - a - x)).powf(-n)
        } else if x > self.alpha_h {
            let (a, n) = (self.alpha_h, self.n_h);
            (-0.5 * a * a).exp() * ((a / n) * (n / a - a + x)).powf(-n)
        } else {
            (-0.5 * x * x).exp()
        }
    }

    /// Normalized density in X.
    pub fn pdf(&self, x: f64) -> f64 {
        self.eval(x) / self.integral()
    }

    /// Fractions of the probability in the (left tail, core, right tail).
    pub fn fractions(&self) -> (f64, f64, f64) {
        let t = self.integral();
        (self.left / t, self.core / t, self.right / t)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let t = self.integral();
        if x < -self.alpha_l {
            let (a, n) = (self.alpha_l, self.n_l);
            let y = 1.0 - (a / n) * (a + x);
            self.left * y.powf(1.0 - n) / t
        } else if x <= self.alpha_h {
            let core = FRAC_PI_2.sqrt() * (erf(x / SQRT_2) + erf(self.alpha_l / SQRT_2));
            (self.left + core) / t
        } else {
            let (a, n) = (self.alpha_h, self.n_h);
            let y = 1.0 + (a / n) * (x - a);
            1.0 - self.right * y.powf(1.0 - n) / t
        }
    }

    /// Inverse CDF for u in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let t = self.integral();
        let mass = u * t;
        if mass < self.left {
            let (a, n) = (self.alpha_l, self.n_l);
            let y = (mass / self.left).powf(1.0 / (1.0 - n));
            -a - (n / a) * (y - 1.0)
        } else if mass <= self.left + self.core {
            let v = (mass - self.left) / FRAC_PI_2.sqrt() - erf(self.alpha_l / SQRT_2);
            let mut x = (SQRT_2 * erf_inv(v.clamp(-1.0, 1.0))).clamp(-self.alpha_l, self.alpha_h);
            // erf_inv is good to ~1e-10; polish against the cdf
            for _ in 0..2 {
                let d = self.pdf(x);
                if d > 0.0 {
                    x = (x - (self.cdf(x) - u) / d).clamp(-self.alpha_l, self.alpha_h);
                }
            }
            x
        } else {
            let (a, n) = (self.alpha_h, self.n_h);
            let upper = ((1.0 - u) * t).max(0.0);
            let y = (upper / self.right).powf(1.0 / (1.0 - n));
            a + (n / a) * (y - 1.0)
        }
    }

    /// Mean of X; infinite unless both exponents exceed 2.
    pub fn mean(&self) -> f64 {
        if self.n_l <= 2.0 || self.n_h <= 2.0 {
            return f64::NAN;
        }
        let core = (-0.5 * self.alpha_l * self.alpha_l).exp() - (-0.5 * self.alpha_h * self.alpha_h).exp();
        let tail = |a: f64, n: f64| (-0.5 * a * a).exp() * (n / a) * ((a - n / a) / (n - 1.0) + (n / a) / (n - 2.0));
        (core + tail(self.alpha_h, self.n_h) - tail(self.alpha_l, self.n_l)) / self.integral()
    }
}

/// Resolution function R(x) = shape((x - mu)/sigma) / (sigma * integral).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub mu: f64,
    pub sigma: f64,
    pub shape: DscbShape,
}

impl Resolution {
    pub fn pdf(&self, x: f64) -> f64 {
        self.shape.pdf((x - self.mu) / self.sigma) / self.sigma
    }
    pub fn cdf(&self, x: f64) -> f64 {
        self.shape.cdf((x - self.mu) / self.sigma)
    }
    pub fn quantile(&self, u: f64) -> f64 {
        self.mu + self.sigma * self.shape.quantile(u)
    }
    pub fn mean(&self) -> f64 {
        self.mu + self.sigma * self.shape.mean()
    }
}

/// Resolution function value at x.
pub fn resolution(x: f64, rp: &ResolutionParams) -> Result<f64> {
    Ok(rp.kernel()?.pdf(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_real_line, integrate_to_infinity};

    #[test]
    fn continuity_at_transitions() {
        let rp = ResolutionParams::default();
        let sh = rp.shape().unwrap();
        for (x, a) in [(-rp.alpha_l, rp.alpha_l), (rp.alpha_h, rp.alpha_h)] {
            let expected = (-0.5 * a * a).exp();
            let eps = 1e-13;
            assert!((sh.eval(x - eps) - expected).abs() < 1e-12);
            assert!((sh.eval(x + eps) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn default_normalization_by_quadrature() {
        let rp = ResolutionParams::default();
        let k = rp.kernel().unwrap();
        let total = integrate_real_line(|x| k.pdf(x), rp.mu, 1e-12).unwrap().value;
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn cdf_quantile_and_mean() {
        let rp = ResolutionParams { mu: 0.1, sigma: 0.5, alpha_l: 0.9, alpha_h: 2.1, n_l: 3.5, n_h: 5.0 };
        let k = rp.kernel().unwrap();
        for &x in &[-30.0f64, -3.0, -0.4, 0.0, 0.3, 1.1, 2.0, 40.0] {
            let q = integrate_to_infinity(|z| k.pdf(-z), -x, 1e-12).unwrap().value;
            assert!((k.cdf(x) - q).abs() < 1e-9, "x={x}: {} vs {q}", k.cdf(x));
        }
        for i in 1..1000 {
            let u = i as f64 / 1000.0;
            assert!((k.cdf(k.quantile(u)) - u).abs() < 1e-12, "u={u}");
        }
        let m = integrate_real_line(|x| x * k.pdf(x), rp.mu, 1e-11).unwrap().value;
        assert!((m - k.mean()).abs() < 1e-8, "{m} vs {}", k.mean());
    }

    #[test]
    fn rejects_invalid_parameters() {
        let bad = [
            ResolutionParams { sigma: 0.0, ..Default::default() },
            ResolutionParams { alpha_l: -1.0, ..Default::default() },
            ResolutionParams { n_h: 1.0, ..Default::default() },
            ResolutionParams { mu: f64::NAN, ..Default::default() },
        ];
        for rp in bad {
            assert!(rp.validate().is_err());
            assert!(resolution(0.0, &rp).is_err());
        }
    }
}
