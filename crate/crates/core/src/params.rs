//! Value types describing the two-level meson system, its mixing, and the
//! postselected final state.
//!
//! Natural units with hbar = 1 are used throughout: times in ps, masses and
//! widths in 1/ps.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};

pub type Complex = num_complex::Complex64;

/// Tolerance for the unit-norm invariants of `MixingParams`, `Postselection`
/// and decay-mode superpositions.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Builds a complex number, rejecting NaN or infinite components.
pub fn checked_complex(re: f64, im: f64) -> Result<Complex> {
    ensure_finite("complex.re", re)?;
    ensure_finite("complex.im", im)?;
    Ok(Complex::new(re, im))
}

fn ensure_finite_complex(name: &'static str, z: Complex) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite, got {z}")))
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Masses and widths of the light and heavy mass eigenstates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesonParams {
    m_l: f64,
    m_h: f64,
    gamma_l: f64,
    gamma_h: f64,
}

impl MesonParams {
    pub fn new(m_l: f64, m_h: f64, gamma_l: f64, gamma_h: f64) -> Result<Self> {
        for (name, v) in [("m_L", m_l), ("m_H", m_h), ("Gamma_L", gamma_l), ("Gamma_H", gamma_h)] {
            ensure_finite(name, v)?;
        }
        if m_l > m_h {
            return Err(invalid("m_L", format!("must not exceed m_H ({m_l} > {m_h})")));
        }
        if gamma_l <= 0.0 {
            return Err(invalid("Gamma_L", format!("must be positive, got {gamma_l}")));
        }
        if gamma_h <= 0.0 {
            return Err(invalid("Gamma_H", format!("must be positive, got {gamma_h}")));
        }
        Ok(Self { m_l, m_h, gamma_l, gamma_h })
    }

    /// Builds the eigenstate parameters from averages and differences.
    ///
    /// `delta_m = 0` (degenerate masses) is accepted; only the normalized
    /// operator rejects it.
    pub fn from_averages(m: f64, delta_m: f64, gamma: f64, delta_gamma: f64) -> Result<Self> {
        if delta_m < 0.0 {
            return Err(invalid("delta_m", format!("must be non-negative, got {delta_m}")));
        }
        Self::new(m - 0.5 * delta_m, m + 0.5 * delta_m, gamma - 0.5 * delta_gamma, gamma + 0.5 * delta_gamma)
    }

    /// Neutral B_d defaults: delta_m = 0.506/ps, tau = 1.519 ps, equal widths.
    ///
    /// The mean mass only contributes a global phase; 1/ps is used.
    pub fn b_meson() -> Self {
        Self::from_averages(1.0, 0.506, 1.0 / 1.519, 0.0).expect("valid defaults")
    }

    pub fn m_l(&self) -> f64 {
        self.m_l
    }
    pub fn m_h(&self) -> f64 {
        self.m_h
    }
    pub fn gamma_l(&self) -> f64 {
        self.gamma_l
    }
    pub fn gamma_h(&self) -> f64 {
        self.gamma_h
    }
    pub fn m(&self) -> f64 {
        0.5 * (self.m_l + self.m_h)
    }
    pub fn gamma(&self) -> f64 {
        0.5 * (self.gamma_l + self.gamma_h)
    }
    pub fn delta_m(&self) -> f64 {
        self.m_h - self.m_l
    }
    pub fn delta_gamma(&self) -> f64 {
        self.gamma_h - self.gamma_l
    }
    pub fn tau(&self) -> f64 {
        1.0 / self.gamma()
    }

    /// Complex eigenvalue m_L - i Gamma_L / 2.
    pub fn lambda_l(&self) -> Complex {
        Complex::new(self.m_l, -0.5 * self.gamma_l)
    }

    /// Complex eigenvalue m_H - i Gamma_H / 2.
    pub fn lambda_h(&self) -> Complex {
        Complex::new(self.m_h, -0.5 * self.gamma_h)
    }
}

/// Mixing coefficients relating mass and flavor eigenstates:
/// |B_L> = p|B0> + q|B0bar>, |B_H> = p|B0> - q|B0bar>.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingParams {
    p: Complex,
    q: Complex,
}

impl MixingParams {
    pub fn new(p: Complex, q: Complex) -> Result<Self> {
        ensure_finite_complex("p", p)?;
        ensure_finite_complex("q", q)?;
        let norm = p.norm_sqr() + q.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { what: "mixing parameters (p, q)", norm });
        }
        Ok(Self { p, q })
    }

    /// p = |p| e^{i varphi}, q = sqrt(1 - |p|^2) real and non-negative.
    pub fn from_phase(abs_p: f64, varphi: f64) -> Result<Self> {
        ensure_finite("|p|", abs_p)?;
        ensure_finite("varphi", varphi)?;
        if !(0.0..=1.0).contains(&abs_p) {
            return Err(invalid("|p|", format!("must lie in [0, 1], got {abs_p}")));
        }
        Self::new(Complex::from_polar(abs_p, varphi), Complex::new((1.0 - abs_p * abs_p).max(0.0).sqrt(), 0.0))
    }

    pub fn p(&self) -> Complex {
        self.p
    }
    pub fn q(&self) -> Complex {
        self.q
    }
    pub fn abs_p(&self) -> f64 {
        self.p.norm()
    }
    pub fn abs_q(&self) -> f64 {
        self.q.norm()
    }

    /// Relative phase varphi defined by p/q = (|p|/|q|) e^{i varphi}, in (-pi, pi].
    pub fn varphi(&self) -> f64 {
        wrap_angle(self.p.arg() - self.q.arg())
    }

    /// The CP-conjugate parameter set (p <-> q).
    pub fn swapped(&self) -> Self {
        Self { p: self.q, q: self.p }
    }
}

/// Flavor eigenstate assigned by tagging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlavorState {
    B0,
    B0bar,
}

impl FlavorState {
    pub fn opposite(self) -> Self {
        match self {
            Self::B0 => Self::B0bar,
            Self::B0bar => Self::B0,
        }
    }

    /// Compact wire code: 0 for B0, 1 for B0bar.
    pub fn code(self) -> u8 {
        match self {
            Self::B0 => 0,
            Self::B0bar => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::B0),
            1 => Some(Self::B0bar),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::B0 => "B0",
            Self::B0bar => "B0bar",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "B0" => Some(Self::B0),
            "B0bar" => Some(Self::B0bar),
            _ => None,
        }
    }
}

impl fmt::Display for FlavorState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Postselected meson state |B_decay> = r|B0> + s|B0bar>.
///
/// The CP-conjugate postselection used for B0bar-tagged decays is
/// |B0bar_decay> = s|B0> + r|B0bar>.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Postselection {
    r: Complex,
    s: Complex,
}

impl Postselection {
    pub fn new(r: Complex, s: Complex) -> Result<Self> {
        ensure_finite_complex("r", r)?;
        ensure_finite_complex("s", s)?;
        let norm = r.norm_sqr() + s.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { what: "postselection (r, s)", norm });
        }
        Ok(Self { r, s })
    }

    /// r = |r| e^{i theta}, s = sqrt(1 - |r|^2) real and non-negative.
    pub fn from_abs_theta(abs_r: f64, theta: f64) -> Result<Self> {
        ensure_finite("|r|", abs_r)?;
        ensure_finite("theta", theta)?;
        if !(0.0..=1.0).contains(&abs_r) {
            return Err(invalid("|r|", format!("must lie in [0, 1], got {abs_r}")));
        }
        Self::new(Complex::from_polar(abs_r, theta), Complex::new((1.0 - abs_r * abs_r).max(0.0).sqrt(), 0.0))
    }

    pub fn r(&self) -> Complex {
        self.r
    }
    pub fn s(&self) -> Complex {
        self.s
    }
    pub fn abs_r(&self) -> f64 {
        self.r.norm()
    }
    pub fn abs_s(&self) -> f64 {
        self.s.norm()
    }

    /// Relative phase theta defined by r/s = (|r|/|s|) e^{i theta}, in (-pi, pi].
    pub fn theta(&self) -> f64 {
        wrap_angle(self.r.arg() - self.s.arg())
    }

    /// Coefficients (on |B0>, on |B0bar>) of the state projected onto for a
    /// decay that started as `flavor`.
    pub fn state_for(&self, flavor: FlavorState) -> (Complex, Complex) {
        match flavor {
            FlavorState::B0 => (self.r, self.s),
            FlavorState::B0bar => (self.s, self.r),
        }
    }

    /// The orthogonal complement (-s*, r*).
    pub fn orthogonal(&self) -> Self {
        Self { r: -self.s.conj(), s: self.r.conj() }
    }

    /// Multiplies both coefficients by a common phase.
    pub fn rephased(&self, phase: f64) -> Self {
        let z = Complex::from_polar(1.0, phase);
        Self { r: self.r * z, s: self.s * z }
    }
}
