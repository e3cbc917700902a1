//! Detector-level model of the signed decay-time difference: two-sided signal
//! densities, background, resolution, wrong-tag dilution and expected yield.

mod convolution;
mod resolution;

pub use convolution::{
    basis_values, convolve_basis, BasisKernel, BasisSource, ConvolutionTable, DirectConvolution, TableSpec, N_BASIS,
};
pub use resolution::{resolution, DscbShape, Resolution, ResolutionParams};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::params::FlavorState;

/// Physics inputs of the observable signal density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalParams {
    /// Lifetime (ps).
    pub tau: f64,
    /// Mass difference (1/ps).
    pub delta_m: f64,
    pub abs_r: f64,
    /// Postselection phase (rad).
    pub theta: f64,
    /// Mixing phase (rad).
    pub varphi: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self { tau: 1.519, delta_m: 0.506, abs_r: 0.5, theta: 0.0, varphi: 44.4f64.to_radians() }
    }
}

impl SignalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("delta_m", self.delta_m),
            ("|r|", self.abs_r),
            ("theta", self.theta),
            ("varphi", self.varphi),
        ] {
            ensure_finite(name, v)?;
        }
        if self.tau <= 0.0 {
            return Err(invalid("tau", format!("must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.abs_r) {
            return Err(invalid("|r|", format!("must lie in [0, 1], got {}", self.abs_r)));
        }
        Ok(())
    }

    /// Coefficient of cos(dm t) in the bracket, 2|r|^2 - 1.
    pub fn cos_coefficient(&self) -> f64 {
        2.0 * self.abs_r * self.abs_r - 1.0
    }

    /// Amplitude 2|r| sqrt(1 - |r|^2) of the sin(dm t) term.
    pub fn sin_amplitude(&self) -> f64 {
        2.0 * self.abs_r * (1.0 - self.abs_r * self.abs_r).max(0.0).sqrt()
    }

    /// N = tau (1 + (2|r|^2 - 1)/(1 + (tau dm)^2)); the density carries 1/(2N).
    pub fn normalization(&self) -> f64 {
        let x = self.tau * self.delta_m;
        self.tau * (1.0 + self.cos_coefficient() / (1.0 + x * x))
    }

    /// Coefficient of sin(dm t) for the given tag, before dilution.
    pub fn sin_coefficient(&self, flavor: FlavorState) -> f64 {
        let phase = match flavor {
            FlavorState::B0 => self.theta - self.varphi,
            FlavorState::B0bar => self.theta + self.varphi,
        };
        -self.sin_amplitude() * phase.sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundParams {
    /// Background lifetime (ps).
    pub tau_bkg: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        Self { tau_bkg: 0.896 }
    }
}

impl BackgroundParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("tau_bkg", self.tau_bkg)?;
        if self.tau_bkg <= 0.0 {
            return Err(invalid("tau_bkg", format!("must be positive, got {}", self.tau_bkg)));
        }
        Ok(())
    }
}

/// Sample composition, tagging and yield-chain inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Signal fraction of the selected sample.
    pub f_phys: f64,
    /// Wrong-tag fraction w.
    pub wrong_tag: f64,
    /// Number of produced B meson pairs.
    pub n_bb: f64,
    pub br_upsilon: f64,
    pub br_signal: f64,
    pub br_kstar: f64,
    pub br_ks: f64,
    pub eff_tag: f64,
    pub eff_reco: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            f_phys: 0.66,
            wrong_tag: 0.02,
            n_bb: 550e8,
            br_upsilon: 0.49,
            br_signal: 4.2e-5,
            br_kstar: 0.17,
            br_ks: 0.69,
            eff_tag: 0.136,
            eff_reco: 0.182,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("f_phys", self.f_phys),
            ("wrong_tag", self.wrong_tag),
            ("br_upsilon", self.br_upsilon),
            ("br_signal", self.br_signal),
            ("br_kstar", self.br_kstar),
            ("br_ks", self.br_ks),
            ("eff_tag", self.eff_tag),
            ("eff_reco", self.eff_reco),
        ] {
            ensure_finite(name, v)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if self.wrong_tag > 0.5 {
            return Err(invalid("wrong_tag", "must not exceed 0.5"));
        }
        ensure_finite("n_bb", self.n_bb)?;
        if self.n_bb < 0.0 {
            return Err(invalid("n_bb", "must be non-negative"));
        }
        Ok(())
    }
}

/// Expected signal yield: product of the pair count, branching fractions and
/// efficiencies.
pub fn expected_yield(dc: &DetectorConfig) -> f64 {
    dc.n_bb * dc.br_upsilon * dc.br_signal * dc.br_kstar * dc.br_ks * dc.eff_tag * dc.eff_reco
}

/// Bracket coefficients of a (possibly diluted) signal density
/// e^{-|t|/tau} [1 + c_cos cos(dm t) + c_sin sin(dm t)] / (2N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalShape {
    pub c_cos: f64,
    pub c_sin: f64,
    /// 2N.
    pub norm: f64,
}

impl SignalShape {
    pub fn new(flavor: FlavorState, sp: &SignalParams, wrong_tag: f64) -> Result<Self> {
        sp.validate()?;
        if !(0.0..=0.5).contains(&wrong_tag) {
            return Err(invalid("wrong_tag", format!("must lie in [0, 0.5], got {wrong_tag}")));
        }
        let n = sp.normalization();
        if n.is_nan() || n <= 0.0 {
            return Err(Error::DegenerateNormalization(n));
        }
        let c_sin = (1.0 - wrong_tag) * sp.sin_coefficient(flavor) + wrong_tag * sp.sin_coefficient(flavor.opposite());
        Ok(Self { c_cos: sp.cos_coefficient(), c_sin, norm: 2.0 * n })
    }

    /// Combines convolved (or plain) basis values b0, b_cos, b_sin.
    pub fn combine(&self, basis: &[f64; N_BASIS]) -> f64 {
        (basis[0] + self.c_cos * basis[1] + self.c_sin * basis[2]) / self.norm
    }
}

/// Two-sided signal density for the given tag.
pub fn signal_pdf(delta_t: f64, flavor: FlavorState, sp: &SignalParams) -> Result<f64> {
    diluted_signal_pdf(delta_t, flavor, sp, 0.0)
}

/// (1 - w) P(t | flavor) + w P(t | opposite flavor).
pub fn diluted_signal_pdf(delta_t: f64, flavor: FlavorState, sp: &SignalParams, wrong_tag: f64) -> Result<f64> {
    let shape = SignalShape::new(flavor, sp, wrong_tag)?;
    let kernel = BasisKernel::new(sp.tau, sp.delta_m, 1.0)?;
    Ok(shape.combine(&basis_values(&kernel, delta_t)))
}

/// Two-sided exponential background, normalized to one.
pub fn background_pdf(delta_t: f64, bp: &BackgroundParams) -> Result<f64> {
    bp.validate()?;
    Ok((-delta_t.abs() / bp.tau_bkg).exp() / (2.0 * bp.tau_bkg))
}

/// Full observable model for one tag category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableModel {
    pub signal: SignalParams,
    pub resolution: ResolutionParams,
    pub background: BackgroundParams,
    pub f_phys: f64,
    pub wrong_tag: f64,
}

impl ObservableModel {
    pub fn new(sp: SignalParams, rp: ResolutionParams, bp: BackgroundParams, dc: &DetectorConfig) -> Result<Self> {
        let m = Self { signal: sp, resolution: rp, background: bp, f_phys: dc.f_phys, wrong_tag: dc.wrong_tag };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.signal.validate()?;
        self.resolution.validate()?;
        self.background.validate()?;
        ensure_finite("f_phys", self.f_phys)?;
        if !(0.0..=1.0).contains(&self.f_phys) {
            return Err(invalid("f_phys", format!("must lie in [0, 1], got {}", self.f_phys)));
        }
        if !(0.0..=0.5).contains(&self.wrong_tag) {
            return Err(invalid("wrong_tag", format!("must lie in [0, 0.5], got {}", self.wrong_tag)));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<BasisKernel> {
        BasisKernel::new(self.signal.tau, self.signal.delta_m, self.background.tau_bkg)
    }

    /// Mixture of signal and background basis contributions.
    pub fn combine(&self, flavor: FlavorState, basis: &[f64; N_BASIS]) -> Result<f64> {
        let shape = SignalShape::new(flavor, &self.signal, self.wrong_tag)?;
        Ok(self.f_phys * shape.combine(basis) + (1.0 - self.f_phys) * basis[3])
    }

    /// Unconvolved mixture f P_phys + (1 - f) P_bkg.
    pub fn physics_pdf(&self, delta_t: f64, flavor: FlavorState) -> Result<f64> {
        self.combine(flavor, &basis_values(&self.kernel()?, delta_t))
    }

    /// Resolution-convolved density, evaluated by direct quadrature.
    pub fn convolved_pdf(&self, delta_t: f64, flavor: FlavorState) -> Result<f64> {
        let conv = DirectConvolution::new(self.kernel()?, self.resolution.shape()?);
        let basis = conv.basis(delta_t - self.resolution.mu, self.resolution.sigma)?;
        self.combine(flavor, &basis)
    }
}

/// f_phys (P_phys conv R) + (1 - f_phys) (P_bkg conv R) with the wrong-tag
/// dilution applied to P_phys before convolution.
pub fn convolved_pdf(
    delta_t: f64,
    flavor: FlavorState,
    sp: &SignalParams,
    rp: &ResolutionParams,
    bp: &BackgroundParams,
    dc: &DetectorConfig,
) -> Result<f64> {
    ObservableModel::new(*sp, *rp, *bp, dc)?.convolved_pdf(delta_t, flavor)
}
