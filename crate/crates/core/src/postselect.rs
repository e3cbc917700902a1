//! Map from a measured decay-mode specification (K* and photon
//! superpositions) to the effective postselected meson state.
//!
//! With A_f = c xi1* eta1* and Abar_f = c xi2* eta2*, the measured rate
//! |A_f a + Abar_f b|^2 equals |c|^2 |<B_decay|B0(t)>|^2 up to a constant for
//! r/s = (xi1 eta1)/(xi2 eta2), i.e. r*/s* = A_f/Abar_f.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::{Complex, Postselection, NORM_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayModeSpec {
    xi1: Complex,
    xi2: Complex,
    eta1: Complex,
    eta2: Complex,
}

impl DecayModeSpec {
    /// `xi` is the K* superposition, `eta` the photon superposition.
    pub fn new(xi: (Complex, Complex), eta: (Complex, Complex)) -> Result<Self> {
        for (name, pair) in [("xi", xi), ("eta", eta)] {
            for z in [pair.0, pair.1] {
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(invalid(name, format!("must be finite, got {z}")));
                }
            }
            let norm = pair.0.norm_sqr() + pair.1.norm_sqr();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::NotNormalized {
                    what: if name == "xi" {
                        "K* superposition (xi1, xi2)"
                    } else {
                        "photon superposition (eta1, eta2)"
                    },
                    norm,
                });
            }
        }
        Ok(Self { xi1: xi.0, xi2: xi.1, eta1: eta.0, eta2: eta.1 })
    }

    pub fn xi(&self) -> (Complex, Complex) {
        (self.xi1, self.xi2)
    }
    pub fn eta(&self) -> (Complex, Complex) {
        (self.eta1, self.eta2)
    }

    /// The mode with both superpositions flavor-swapped.
    pub fn cp_conjugate(&self) -> Self {
        Self { xi1: self.xi2, xi2: self.xi1, eta1: self.eta2, eta2: self.eta1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayAmplitudes {
    pub a_f: Complex,
    pub a_f_bar: Complex,
    pub c_norm: Complex,
}

pub fn amplitudes_from_mode(mode: &DecayModeSpec, c: Complex) -> Result<DecayAmplitudes> {
    if c.norm() == 0.0 || !(c.re.is_finite() && c.im.is_finite()) {
        return Err(invalid("c", format!("must be finite and non-zero, got {c}")));
    }
    Ok(DecayAmplitudes {
        a_f: c * mode.xi1.conj() * mode.eta1.conj(),
        a_f_bar: c * mode.xi2.conj() * mode.eta2.conj(),
        c_norm: c,
    })
}

/// Postselected state (r, s) with r/s = xi1 eta1 / (xi2 eta2), normalized and
/// rephased so that s is real and non-negative.
pub fn postselection_from_mode(mode: &DecayModeSpec) -> Result<Postselection> {
    let u = mode.xi1 * mode.eta1;
    let v = mode.xi2 * mode.eta2;
    let n = u.norm().hypot(v.norm());
    if n == 0.0 {
        return Err(Error::UndefinedPostselection);
    }
    if v.norm() == 0.0 {
        return Postselection::new(Complex::new(1.0, 0.0), Complex::new(0.0, 0.0));
    }
    let rot = Complex::from_polar(1.0, -v.arg());
    let r = u * rot / n;
    let s = Complex::new(v.norm() / n, 0.0);
    // absorb the last rounding so the unit-norm check holds tightly
    let k = r.norm().hypot(s.re);
    Postselection::new(r / k, s / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub passed: bool,
    pub residual: f64,
}

pub const CONSISTENCY_TOLERANCE: f64 = 1e-10;

/// Checks r*/s* = A_f/Abar_f. When either ratio has a vanishing denominator
/// the residual is the projective distance |r* Abar_f - s* A_f| / ||(A_f, Abar_f)||.
pub fn consistency_check(mode: &DecayModeSpec, post: &Postselection) -> ConsistencyCheck {
    let amps = amplitudes_from_mode(mode, Complex::new(1.0, 0.0)).expect("c = 1 is valid");
    let (a, abar) = (amps.a_f, amps.a_f_bar);
    let (rc, sc) = (post.r().conj(), post.s().conj());
    let residual = if abar.norm() > 0.0 && sc.norm() > 0.0 {
        (rc / sc - a / abar).norm()
    } else {
        let scale = a.norm().hypot(abar.norm());
        if scale == 0.0 {
            f64::INFINITY
        } else {
            (rc * abar - sc * a).norm() / scale
        }
    };
    ConsistencyCheck { passed: residual < CONSISTENCY_TOLERANCE, residual }
}
