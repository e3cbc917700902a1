//! Unbinned likelihood for the mixing phase with Gaussian-constrained
//! nuisance parameters, its minimization and the ensemble scan.

mod minimize;
mod scan;

use std::cell::RefCell;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::experiment::{BasisSource, ObservableModel, SignalShape, N_BASIS};
use crate::params::FlavorState;
use crate::pseudoexp::Dataset;
use crate::sum::ExactSum;

pub use minimize::{minimize, profile_interval, profile_uncertainty, FitOptions};
pub use scan::{
    ensemble_summary, scan, write_scan_csv, EnsembleSummary, ScanGrid, ScanPoint, ScanResult, ToyFit, ToyFitter,
    MAX_FAILED_FRACTION, SCAN_CSV_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceKind {
    FPhys,
    Mu,
    Sigma,
}

impl NuisanceKind {
    pub const ALL: [NuisanceKind; 3] = [NuisanceKind::FPhys, NuisanceKind::Mu, NuisanceKind::Sigma];

    pub fn name(self) -> &'static str {
        match self {
            NuisanceKind::FPhys => "f_phys",
            NuisanceKind::Mu => "mu",
            NuisanceKind::Sigma => "sigma",
        }
    }

    pub fn get(self, model: &ObservableModel) -> f64 {
        match self {
            NuisanceKind::FPhys => model.f_phys,
            NuisanceKind::Mu => model.resolution.mu,
            NuisanceKind::Sigma => model.resolution.sigma,
        }
    }

    pub fn set(self, model: &mut ObservableModel, value: f64) {
        match self {
            NuisanceKind::FPhys => model.f_phys = value,
            NuisanceKind::Mu => model.resolution.mu = value,
            NuisanceKind::Sigma => model.resolution.sigma = value,
        }
    }
}

impl fmt::Display for NuisanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceParam {
    pub name: NuisanceKind,
    /// Centre of the Gaussian constraint.
    pub nominal: f64,
    pub constraint_width: f64,
    pub fitted: f64,
}

/// Gaussian constraint widths. Zero fixes the parameter at its centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintWidths {
    pub f_phys: f64,
    /// ps
    pub mu: f64,
    /// ps
    pub sigma: f64,
}

impl Default for ConstraintWidths {
    /// Placeholder widths, not taken from any calibration.
    fn default() -> Self {
        Self { f_phys: 0.02, mu: 0.02, sigma: 0.04 }
    }
}

impl ConstraintWidths {
    pub fn fixed() -> Self {
        Self { f_phys: 0.0, mu: 0.0, sigma: 0.0 }
    }

    pub fn get(&self, kind: NuisanceKind) -> f64 {
        match kind {
            NuisanceKind::FPhys => self.f_phys,
            NuisanceKind::Mu => self.mu,
            NuisanceKind::Sigma => self.sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for kind in NuisanceKind::ALL {
            let w = self.get(kind);
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid("constraint_width", format!("{kind} width must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Constraint centres and widths, ordered as `NuisanceKind::ALL`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraints {
    pub centres: [f64; 3],
    pub widths: [f64; 3],
}

impl Constraints {
    /// Centred on the values of `model`.
    pub fn nominal(model: &ObservableModel, widths: &ConstraintWidths) -> Self {
        Self { centres: NuisanceKind::ALL.map(|k| k.get(model)), widths: NuisanceKind::ALL.map(|k| widths.get(k)) }
    }

    /// Indices of the parameters that float.
    pub fn free(&self) -> Vec<usize> {
        (0..3).filter(|&i| self.widths[i] > 0.0).collect()
    }

    /// Sum of z^2/2; infinite when a fixed parameter is moved.
    pub fn penalty(&self, values: &[f64; 3]) -> f64 {
        let mut p = 0.0;
        for ((v, c), w) in values.iter().zip(&self.centres).zip(&self.widths) {
            let d = v - c;
            if *w > 0.0 {
                let z = d / w;
                p += 0.5 * z * z;
            } else if d != 0.0 {
                return f64::INFINITY;
            }
        }
        p
    }
}

struct BasisCache {
    key: Option<(f64, f64)>,
    values: Vec<[f64; N_BASIS]>,
}

/// -ln L for one dataset: both tag samples share phi and the nuisances.
pub struct Likelihood<'a> {
    data: &'a Dataset,
    source: &'a dyn BasisSource,
    model: ObservableModel,
    constraints: Constraints,
    cache: RefCell<BasisCache>,
}

impl<'a> Likelihood<'a> {
    /// `model` fixes everything except phi and the nuisances; its phi is
    /// used as the starting value of fits.
    pub fn new(
        data: &'a Dataset,
        source: &'a dyn BasisSource,
        model: ObservableModel,
        constraints: Constraints,
    ) -> Result<Self> {
        model.validate()?;
        data.validate()?;
        if data.is_empty() {
            return Err(Error::Dataset("cannot fit an empty dataset".into()));
        }
        if source.kernel() != model.kernel()? || source.shape() != model.resolution.shape()? {
            return Err(invalid("basis source", "built for a different lifetime, mixing or resolution shape"));
        }
        for w in constraints.widths {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid("constraint_width", format!("must be >= 0, got {w}")));
            }
        }
        Ok(Self { data, source, model, constraints, cache: RefCell::new(BasisCache { key: None, values: Vec::new() }) })
    }

    pub fn model(&self) -> &ObservableModel {
        &self.model
    }

    pub fn constraints(&self) -> &Constraints {
        &self.constraints
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    fn refresh_cache(&self, mu: f64, sigma: f64) -> Result<()> {
        let mut cache = self.cache.borrow_mut();
        if cache.key == Some((mu, sigma)) {
            return Ok(());
        }
        cache.values.clear();
        for e in &self.data.events {
            cache.values.push(self.source.basis(e.delta_t - mu, sigma)?);
        }
        cache.key = Some((mu, sigma));
        Ok(())
    }

    /// Data term -sum ln P. Out-of-range nuisance values give +inf.
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // the negated forms also catch NaN
    pub fn data_term(&self, varphi: f64, nuisances: &[f64; 3]) -> Result<f64> {
        let [f, mu, sigma] = *nuisances;
        if !(0.0..=1.0).contains(&f) || !(sigma > 0.0) || !mu.is_finite() || !varphi.is_finite() {
            return Ok(f64::INFINITY);
        }
        let mut sp = self.model.signal;
        sp.varphi = varphi;
        let shapes = [
            SignalShape::new(FlavorState::B0, &sp, self.model.wrong_tag)?,
            SignalShape::new(FlavorState::B0bar, &sp, self.model.wrong_tag)?,
        ];
        self.refresh_cache(mu, sigma)?;
        let cache = self.cache.borrow();
        let mut sum = ExactSum::new();
        for (index, (e, b)) in self.data.events.iter().zip(&cache.values).enumerate() {
            let p = f * shapes[e.tag.code() as usize].combine(b) + (1.0 - f) * b[3];
            if !(p > 0.0) {
                return Err(Error::NumericDomain { index, delta_t: e.delta_t, value: p });
            }
            sum.add(-p.ln());
        }
        Ok(sum.value())
    }

    /// Data term plus the Gaussian constraint penalty.
    pub fn nll(&self, varphi: f64, nuisances: &[f64; 3]) -> Result<f64> {
        let penalty = self.constraints.penalty(nuisances);
        if !penalty.is_finite() {
            return Ok(f64::INFINITY);
        }
        Ok(self.data_term(varphi, nuisances)? + penalty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// rad, wrapped to (-pi, pi]
    pub varphi_hat: f64,
    /// Half-width of the profile-likelihood interval (rad), when computed.
    pub varphi_err_profile: Option<f64>,
    pub nuisances: Vec<NuisanceParam>,
    pub nll_min: f64,
    pub converged: bool,
    pub n_iterations: u64,
}

impl FitResult {
    pub fn nuisance_values(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (slot, kind) in out.iter_mut().zip(NuisanceKind::ALL) {
            *slot = self.nuisances.iter().find(|n| n.name == kind).map(|n| n.fitted).unwrap_or(f64::NAN);
        }
        out
    }
}
