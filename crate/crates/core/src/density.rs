//! Normalized densities of the form e^{-rate |t|} [c0 + c_cos cos(w t) + c_sin sin(w t)]
//! on [0, inf) or on the whole real line, with closed-form CDF, moments and
//! inverse-CDF sampling.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// t >= 0
    Positive,
    /// all real t, exponential in |t|
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTrigDensity {
    rate: f64,
    omega: f64,
    c0: f64,
    c_cos: f64,
    c_sin: f64,
    support: Support,
    norm: f64,
}

impl ExpTrigDensity {
    /// Builds the density from unnormalized coefficients. The bracket must be
    /// non-negative everywhere (c0 >= sqrt(c_cos^2 + c_sin^2)).
    pub fn new(rate: f64, omega: f64, c0: f64, c_cos: f64, c_sin: f64, support: Support) -> Result<Self> {
        for (name, v) in [("rate", rate), ("omega", omega), ("c0", c0), ("c_cos", c_cos), ("c_sin", c_sin)] {
            crate::error::ensure_finite(name, v)?;
        }
        if rate <= 0.0 {
            return Err(invalid("rate", format!("must be positive, got {rate}")));
        }
        let amp = c_cos.hypot(c_sin);
        if c0 < amp * (1.0 - 1e-12) {
            return Err(invalid("c0", format!("density would turn negative (c0 = {c0}, oscillation amplitude {amp})")));
        }
        let mut d = Self { rate, omega, c0, c_cos, c_sin, support, norm: 1.0 };
        let total = match support {
            Support::Positive => d.positive_integral(f64::INFINITY, 1.0),
            Support::TwoSided => 2.0 * (c0 / rate + c_cos * rate / d.denom()),
        };
        if total.is_nan() || total <= 0.0 {
            return Err(Error::DegenerateNormalization(total));
        }
        d.norm = total;
        Ok(d)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn support(&self) -> Support {
        self.support
    }

    /// Integral of the unnormalized density.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    fn denom(&self) -> f64 {
        self.rate * self.rate + self.omega * self.omega
    }

    /// Unnormalized integral over [0, x] for x >= 0, with the sin coefficient
    /// multiplied by `sin_sign` (-1 mirrors the negative half-line).
    fn positive_integral(&self, x: f64, sin_sign: f64) -> f64 {
        let (l, w) = (self.rate, self.omega);
        let d = self.denom();
        if x.is_infinite() {
            return self.c0 / l + self.c_cos * l / d + sin_sign * self.c_sin * w / d;
        }
        let e = (-l * x).exp();
        let (s, c) = (w * x).sin_cos();
        let i0 = -(-l * x).exp_m1() / l;
        let ic = (l - e * (l * c - w * s)) / d;
        let is = (w - e * (l * s + w * c)) / d;
        self.c0 * i0 + self.c_cos * ic + sin_sign * self.c_sin * is
    }

    fn unnormalized(&self, t: f64) -> f64 {
        let (s, c) = (self.omega * t).sin_cos();
        (-self.rate * t.abs()).exp() * (self.c0 + self.c_cos * c + self.c_sin * s)
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if self.support == Support::Positive && t < 0.0 {
            return 0.0;
        }
        (self.unnormalized(t) / self.norm).max(0.0)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let raw = match self.support {
            Support::Positive => {
                if t <= 0.0 {
                    0.0
                } else {
                    self.positive_integral(t, 1.0)
                }
            }
            Support::TwoSided => {
                let neg_total = self.positive_integral(f64::INFINITY, -1.0);
                if t <= 0.0 {
                    neg_total - self.positive_integral(-t, -1.0)
                } else {
                    neg_total + self.positive_integral(t, 1.0)
                }
            }
        };
        (raw / self.norm).clamp(0.0, 1.0)
    }

    /// First moment.
    pub fn mean(&self) -> f64 {
        let (l, w) = (self.rate, self.omega);
        let d = self.denom();
        let odd = self.c_sin * 2.0 * l * w / (d * d);
        match self.support {
            Support::Positive => (self.c0 / (l * l) + self.c_cos * (l * l - w * w) / (d * d) + odd) / self.norm,
            Support::TwoSided => 2.0 * odd / self.norm,
        }
    }

    /// Mean of |t|.
    pub fn mean_abs(&self) -> f64 {
        let (l, w) = (self.rate, self.omega);
        let d = self.denom();
        let even = self.c0 / (l * l) + self.c_cos * (l * l - w * w) / (d * d);
        match self.support {
            Support::Positive => self.mean(),
            Support::TwoSided => 2.0 * even / self.norm,
        }
    }

    /// Inverse CDF at u in [0, 1), by safeguarded Newton iteration.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let scale = 1.0 / self.rate;
        // bracket [lo, hi] with cdf(lo) <= u <= cdf(hi)
        let (mut lo, mut hi) = match self.support {
            Support::Positive => (0.0, scale),
            Support::TwoSided => (-scale, scale),
        };
        while self.cdf(hi) < u && hi < 1e6 * scale {
            hi *= 2.0;
        }
        if self.support == Support::TwoSided {
            while self.cdf(lo) > u && lo > -1e6 * scale {
                lo *= 2.0;
            }
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.cdf(t) - u;
            if f == 0.0 {
                return t;
            }
            if f < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let p = self.pdf(t);
            let newton = t - f / p;
            let next = if p > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - t).abs() <= 1e-14 * (1.0 + t.abs()) || hi - lo <= 1e-14 * (1.0 + t.abs()) {
                return next;
            }
            t = next;
        }
        t
    }
}
