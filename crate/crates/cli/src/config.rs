//! Run configuration: one TOML document, every section optional. Angles are
//! given in degrees; the accessors return radians.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wvamp_core::experiment::{BackgroundParams, DetectorConfig, ObservableModel, ResolutionParams, SignalParams};
use wvamp_core::fit::{ConstraintWidths, FitOptions, ScanGrid};
use wvamp_core::postselect::{postselection_from_mode, DecayModeSpec};
use wvamp_core::pseudoexp::{EnsembleConfig, YieldMode, DEFAULT_EVENTS};
use wvamp_core::{Complex, MesonParams, MixingParams, Postselection};

use crate::error::CliError;

pub const RESOLVED_NAME: &str = "resolved_config.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub physics: Physics,
    pub selection: Selection,
    pub detector: DetectorConfig,
    pub resolution: ResolutionParams,
    pub background: BackgroundParams,
    pub constraints: ConstraintWidths,
    pub run: Run,
    pub fit: FitOptions,
    pub lifetime: LifetimeGrid,
    pub pdf: PdfGrid,
    pub scan: ScanAxes,
    pub io: Io,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    /// ps
    pub tau: f64,
    /// 1/ps
    pub delta_m: f64,
    /// Gamma_H - Gamma_L, 1/ps. Only the lifetime command accepts nonzero.
    pub delta_gamma: f64,
    pub abs_p: f64,
    pub varphi_deg: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self { tau: 1.519, delta_m: 0.506, delta_gamma: 0.0, abs_p: FRAC_1_SQRT_2, varphi_deg: 44.4 }
    }
}

/// Either (abs_r, theta_deg) or a decay mode, not both. Defaults to |r| = 0.5,
/// theta = 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Selection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
}

/// K* (xi) and photon (eta) superpositions as [re, im] pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub xi: [[f64; 2]; 2],
    pub eta: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YieldKind {
    Fixed,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Run {
    pub seed: u64,
    pub experiments: usize,
    /// Events per experiment, or the Poisson mean.
    pub events: usize,
    #[serde(rename = "yield")]
    pub yield_kind: YieldKind,
    pub b0_fraction: f64,
    /// Profile-likelihood errors in ensembles.
    pub profile: bool,
    /// Extra fit with the nuisances fixed, for the stat/syst split.
    pub stat_fit: bool,
    /// Draw the constraint centres around the truth per toy.
    pub randomize_aux: bool,
}

impl Default for Run {
    fn default() -> Self {
        Self {
            seed: 20_250_101,
            experiments: 200,
            events: DEFAULT_EVENTS,
            yield_kind: YieldKind::Fixed,
            b0_fraction: 0.5,
            profile: true,
            stat_fit: true,
            randomize_aux: true,
        }
    }
}

/// A grid axis: explicit values or an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range(Range),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Axis {
    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        Axis::Range(Range { start, stop, step })
    }

    pub fn values(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let v = match self {
            Axis::Values(v) => v.clone(),
            Axis::Range(r) => {
                if !(r.step > 0.0 && r.start.is_finite() && r.stop >= r.start) {
                    return Err(CliError::config(format!("{name}: need finite start <= stop and step > 0")));
                }
                let n = ((r.stop - r.start) / r.step + 1e-9).floor() as usize + 1;
                if n > 10_000_000 {
                    return Err(CliError::config(format!("{name}: {n} points is too many")));
                }
                // snap to 12 decimals so 0.1 + 6 * 0.1 prints as 0.7
                (0..n).map(|i| ((r.start + i as f64 * r.step) * 1e12).round() / 1e12).collect()
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::config(format!("{name}: needs at least one finite value")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifetimeGrid {
    pub abs_r: Axis,
    pub theta_deg: Axis,
}

impl Default for LifetimeGrid {
    fn default() -> Self {
        Self { abs_r: Axis::range(0.01, 0.99, 0.01), theta_deg: Axis::range(-180.0, 180.0, 5.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdfGrid {
    /// Observable curves over [t_min, t_max]; wide enough that the
    /// resolution tails carry < 1e-4 outside.
    pub t_min: f64,
    pub t_max: f64,
    pub step: f64,
    /// |r| sweep of the postselected decay-time curves.
    pub abs_r: Axis,
    pub conditional_t_max: f64,
    pub conditional_step: f64,
}

impl Default for PdfGrid {
    fn default() -> Self {
        Self {
            t_min: -200.0,
            t_max: 200.0,
            step: 0.02,
            abs_r: Axis::range(0.1, 0.9, 0.1),
            conditional_t_max: 30.0,
            conditional_step: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanAxes {
    pub abs_r: Axis,
    pub theta_deg: Axis,
}

impl Default for ScanAxes {
    fn default() -> Self {
        Self { abs_r: Axis::range(0.1, 0.9, 0.1), theta_deg: Axis::range(-180.0, 180.0, 36.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Io {
    pub out_dir: PathBuf,
    /// Format written by `generate`.
    pub format: DataFormat,
    /// Dataset read by `fit`; `.bin` files are binary, anything else CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
}

impl Default for Io {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("wvamp-out"), format: DataFormat::Csv, data: None }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        // plain data with string keys; serialization cannot fail
        toml::to_string(self).expect("config serializes")
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // the negated forms also catch NaN
    pub fn meson(&self) -> Result<MesonParams, CliError> {
        let p = &self.physics;
        if !(p.tau > 0.0) {
            return Err(CliError::config(format!("physics.tau must be positive, got {}", p.tau)));
        }
        Ok(MesonParams::from_averages(1.0, p.delta_m, 1.0 / p.tau, p.delta_gamma)?)
    }

    pub fn mixing(&self) -> Result<MixingParams, CliError> {
        Ok(MixingParams::from_phase(self.physics.abs_p, self.physics.varphi_deg.to_radians())?)
    }

    pub fn postselection(&self) -> Result<Postselection, CliError> {
        let s = &self.selection;
        match &s.mode {
            Some(_) if s.abs_r.is_some() || s.theta_deg.is_some() => {
                Err(CliError::config("selection: give either abs_r/theta_deg or mode, not both"))
            }
            Some(m) => {
                let pair = |v: [[f64; 2]; 2]| (Complex::new(v[0][0], v[0][1]), Complex::new(v[1][0], v[1][1]));
                Ok(postselection_from_mode(&DecayModeSpec::new(pair(m.xi), pair(m.eta))?)?)
            }
            None => Ok(Postselection::from_abs_theta(s.abs_r.unwrap_or(0.5), s.theta_deg.unwrap_or(0.0).to_radians())?),
        }
    }

    /// Detector-level model; needs |p| = |q| and equal widths.
    pub fn model(&self) -> Result<ObservableModel, CliError> {
        let p = &self.physics;
        if (p.abs_p - FRAC_1_SQRT_2).abs() > 1e-12 || p.delta_gamma != 0.0 {
            return Err(CliError::config("the detector-level model assumes |p| = |q| = 1/sqrt2 and delta_gamma = 0"));
        }
        let post = self.postselection()?;
        let sp = SignalParams {
            tau: p.tau,
            delta_m: p.delta_m,
            abs_r: post.abs_r(),
            theta: post.theta(),
            varphi: p.varphi_deg.to_radians(),
        };
        Ok(ObservableModel::new(sp, self.resolution, self.background, &self.detector)?)
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig, CliError> {
        let mut cfg = EnsembleConfig::new(self.model()?, self.run.experiments, self.run.seed);
        cfg.b0_fraction = self.run.b0_fraction;
        cfg.yield_mode = match self.run.yield_kind {
            YieldKind::Fixed => YieldMode::Fixed(self.run.events),
            YieldKind::Poisson => YieldMode::Poisson(self.run.events as f64),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn widths(&self) -> Result<ConstraintWidths, CliError> {
        self.constraints.validate()?;
        Ok(self.constraints)
    }

    pub fn scan_grid(&self) -> Result<ScanGrid, CliError> {
        let grid = ScanGrid {
            abs_r: self.scan.abs_r.values("scan.abs_r")?,
            theta: self.scan.theta_deg.values("scan.theta_deg")?.into_iter().map(f64::to_radians).collect(),
        };
        grid.validate()?;
        Ok(grid)
    }
}
