//! Toy fits over ensembles and the (|r|, theta) uncertainty scan.

use std::io::Write;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{minimize, profile_uncertainty, ConstraintWidths, Constraints, FitOptions, FitResult, Likelihood};
use crate::error::{invalid, Result};
use crate::experiment::{BasisSource, ObservableModel};
use crate::params::wrap_angle;
use crate::pseudoexp::{run_ensemble, Dataset, EnsembleConfig, EnsembleResults, Fitter};

/// Fraction of failed fits above which a grid point is flagged.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyFit {
    /// Nuisances floating under their constraints.
    pub full: FitResult,
    /// Nuisances fixed at their true values.
    pub stat: Option<FitResult>,
}

/// Fits one pseudo-experiment generated from `truth`. The constraint
/// centres play the role of auxiliary measurements and are drawn around the
/// true values when `randomize_aux` is set.
#[derive(Clone)]
pub struct ToyFitter {
    pub truth: ObservableModel,
    pub widths: ConstraintWidths,
    pub source: Arc<dyn BasisSource>,
    pub options: FitOptions,
    pub randomize_aux: bool,
    pub stat_fit: bool,
    pub profile: bool,
}

impl ToyFitter {
    pub fn new(truth: ObservableModel, widths: ConstraintWidths, source: Arc<dyn BasisSource>) -> Self {
        Self {
            truth,
            widths,
            source,
            options: FitOptions::default(),
            randomize_aux: true,
            stat_fit: true,
            profile: false,
        }
    }
}

impl Fitter for ToyFitter {
    type Output = ToyFit;

    fn fit(&self, data: &Dataset, aux: &mut ChaCha8Rng) -> Result<ToyFit> {
        let truth_c = Constraints::nominal(&self.truth, &self.widths);
        let mut c = truth_c;
        if self.randomize_aux {
            for i in 0..3 {
                let z: f64 = StandardNormal.sample(aux);
                c.centres[i] += c.widths[i] * z;
            }
        }
        let lik = Likelihood::new(data, self.source.as_ref(), self.truth, c)?;
        let mut full = minimize(&lik, &self.options)?;
        if self.profile && full.converged {
            full.varphi_err_profile = Some(profile_uncertainty(&lik, &full, &self.options)?);
        }
        let stat = if self.stat_fit {
            let fixed = Constraints { widths: [0.0; 3], ..truth_c };
            let lik = Likelihood::new(data, self.source.as_ref(), self.truth, fixed)?;
            Some(minimize(&lik, &self.options)?)
        } else {
            None
        };
        Ok(ToyFit { full, stat })
    }
}

/// Ensemble statistics of the fitted phi around the generated value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_ok: usize,
    /// Errors plus non-converged fits.
    pub n_failed: usize,
    /// Mean of (phi_hat - phi_true), rad.
    pub mean_bias: f64,
    /// Standard deviation of phi_hat with floating nuisances, rad.
    pub err_total: f64,
    /// Standard deviation of phi_hat with fixed nuisances, rad.
    pub err_stat: f64,
    /// sqrt(max(total^2 - stat^2, 0)), rad.
    pub err_syst: f64,
    pub pull_mean: f64,
    pub pull_width: f64,
    pub mean_profile_err: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.len() < 2 {
        return (v.first().copied().unwrap_or(f64::NAN), f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn ensemble_summary(results: &EnsembleResults<ToyFit>, varphi_true: f64) -> EnsembleSummary {
    let ok: Vec<&ToyFit> =
        results.successes().filter(|t| t.full.converged && t.stat.as_ref().is_none_or(|s| s.converged)).collect();
    let dev = |f: &FitResult| wrap_angle(f.varphi_hat - varphi_true);
    let full: Vec<f64> = ok.iter().map(|t| dev(&t.full)).collect();
    let stat: Vec<f64> = ok.iter().filter_map(|t| t.stat.as_ref()).map(dev).collect();
    let pulls: Vec<f64> = ok.iter().filter_map(|t| t.full.varphi_err_profile.map(|e| dev(&t.full) / e)).collect();
    let profile_errs: Vec<f64> = ok.iter().filter_map(|t| t.full.varphi_err_profile).collect();
    let (mean_bias, err_total) = mean_std(&full);
    let err_stat = mean_std(&stat).1;
    let (pull_mean, pull_width) = mean_std(&pulls);
    EnsembleSummary {
        n_ok: ok.len(),
        n_failed: results.outcomes.len() - ok.len(),
        mean_bias,
        err_total,
        err_stat,
        err_syst: (err_total * err_total - err_stat * err_stat).max(0.0).sqrt(),
        pull_mean,
        pull_width,
        mean_profile_err: mean_std(&profile_errs).0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub abs_r: Vec<f64>,
    /// rad
    pub theta: Vec<f64>,
}

impl ScanGrid {
    /// |r| = 0.1..0.9 in steps of 0.1, theta = -180..180 deg in steps of 36.
    pub fn standard() -> Self {
        Self {
            abs_r: (1..=9).map(|i| i as f64 / 10.0).collect(),
            theta: (0..=10).map(|i| (-180.0 + 36.0 * i as f64).to_radians()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.abs_r.is_empty() || self.theta.is_empty() {
            return Err(invalid("grid", "needs at least one |r| and one theta"));
        }
        if let Some(r) = self.abs_r.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(invalid("abs_r", format!("grid value {r} outside (0, 1)")));
        }
        if let Some(t) = self.theta.iter().find(|t| !t.is_finite()) {
            return Err(invalid("theta", format!("grid value {t} is not finite")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub abs_r: f64,
    /// rad
    pub theta: f64,
    pub summary: EnsembleSummary,
    /// More than 10% of the fits failed.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Row-major in (abs_r, theta).
    pub points: Vec<ScanPoint>,
}

/// Runs one ensemble per grid point. Experiment seeds depend only on the
/// master seed and index, so all points share their random numbers.
pub fn scan(grid: &ScanGrid, config: &EnsembleConfig, fitter: &ToyFitter) -> Result<ScanResult> {
    grid.validate()?;
    let mut points = Vec::with_capacity(grid.abs_r.len() * grid.theta.len());
    for &abs_r in &grid.abs_r {
        for &theta in &grid.theta {
            let mut cfg = *config;
            cfg.model.signal.abs_r = abs_r;
            cfg.model.signal.theta = theta;
            let toy = ToyFitter { truth: cfg.model, ..fitter.clone() };
            let results = run_ensemble(&cfg, &toy)?;
            let summary = ensemble_summary(&results, cfg.model.signal.varphi);
            points.push(ScanPoint {
                abs_r,
                theta,
                flagged: summary.n_failed as f64 > MAX_FAILED_FRACTION * cfg.n_experiments as f64,
                summary,
            });
        }
    }
    Ok(ScanResult { points })
}

pub const SCAN_CSV_HEADER: &str = "abs_r,theta_deg,err_total_deg,err_stat_deg,err_syst_deg,n_failed,flagged";

pub fn write_scan_csv<W: Write>(result: &ScanResult, mut w: W) -> Result<()> {
    writeln!(w, "{SCAN_CSV_HEADER}")?;
    for p in &result.points {
        let s = &p.summary;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.abs_r,
            p.theta.to_degrees(),
            s.err_total.to_degrees(),
            s.err_stat.to_degrees(),
            s.err_syst.to_degrees(),
            s.n_failed,
            p.flagged
        )?;
    }
    w.flush()?;
    Ok(())
}
