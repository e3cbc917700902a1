//! Nelder-Mead minimization with seeded restarts, and profile-likelihood
//! intervals for phi.

use std::cell::RefCell;
use std::f64::consts::FRAC_PI_2;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FitResult, Likelihood, NuisanceKind, NuisanceParam};
use crate::error::{invalid, Error, Result};
use crate::params::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Extra simplex restarts from the best point.
    pub restarts: usize,
    pub max_iters: u64,
    /// Stop restarting once a restart improves the minimum by less than this.
    pub tolerance: f64,
    /// Seed of the restart perturbations.
    pub seed: u64,
    /// Initial simplex step in phi (rad).
    pub step_varphi: f64,
    /// Initial simplex step of a nuisance, in constraint widths.
    pub step_nuisance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 3, max_iters: 2000, tolerance: 1e-6, seed: 0x5eed, step_varphi: 0.1, step_nuisance: 1.0 }
    }
}

/// Spread of simplex values at which one Nelder-Mead run stops.
const SIMPLEX_SD: f64 = 1e-9;
/// First trial offset when bracketing the profile interval.
const PROFILE_FIRST_STEP: f64 = 0.02;
/// Width of the final bracket on each side (rad).
const PROFILE_TOLERANCE: f64 = 1e-4;

struct Objective<'f, F> {
    f: &'f F,
    failure: &'f RefCell<Option<Error>>,
}

impl<F: Fn(&[f64]) -> Result<f64>> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        match (self.f)(x) {
            Ok(v) if v.is_nan() => Ok(f64::INFINITY),
            Ok(v) => Ok(v),
            // argmin unwraps costs while building the simplex; keep the
            // first error and let the run finish on an infinite cost
            Err(e) => {
                self.failure.borrow_mut().get_or_insert(e);
                Ok(f64::INFINITY)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Outcome {
    x: Vec<f64>,
    value: f64,
    iters: u64,
    converged: bool,
}

fn nelder_mead<F: Fn(&[f64]) -> Result<f64>>(f: &F, x0: &[f64], steps: &[f64], max_iters: u64) -> Result<Outcome> {
    let mut simplex = vec![x0.to_vec()];
    for (i, s) in steps.iter().enumerate() {
        let mut v = x0.to_vec();
        v[i] += s;
        simplex.push(v);
    }
    let solver =
        NelderMead::new(simplex).with_sd_tolerance(SIMPLEX_SD).map_err(|e| invalid("simplex", e.to_string()))?;
    let failure = RefCell::new(None);
    let objective = Objective { f, failure: &failure };
    let run = Executor::new(objective, solver).configure(|s| s.max_iters(max_iters)).run();
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let res = run.map_err(|e| Error::NumericFailure { context: "Nelder-Mead", detail: e.to_string() })?;
    let state = res.state();
    let x = state.get_best_param().cloned().unwrap_or_else(|| x0.to_vec());
    Ok(Outcome {
        value: state.get_best_cost(),
        iters: state.get_iter(),
        converged: matches!(
            state.get_termination_status(),
            TerminationStatus::Terminated(TerminationReason::SolverConverged)
        ),
        x,
    })
}

/// Nelder-Mead from `x0`, then up to `opts.restarts` restarts around the
/// best point with randomly rescaled and reflected steps.
fn minimize_with_restarts<F: Fn(&[f64]) -> Result<f64>>(
    f: &F,
    x0: &[f64],
    steps: &[f64],
    opts: &FitOptions,
    restarts: usize,
) -> Result<Outcome> {
    if x0.is_empty() {
        return Ok(Outcome { x: Vec::new(), value: f(x0)?, iters: 0, converged: true });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = nelder_mead(f, x0, steps, opts.max_iters)?;
    let mut iters = best.iters;
    let mut settled = false;
    for _ in 0..restarts {
        let trial_steps: Vec<f64> = steps
            .iter()
            .map(|s| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * s * rng.random_range(0.5..1.5)
            })
            .collect();
        let next = nelder_mead(f, &best.x, &trial_steps, opts.max_iters)?;
        iters += next.iters;
        let improvement = best.value - next.value;
        if next.value < best.value {
            best = Outcome { iters: 0, ..next };
        } else {
            best.converged &= next.converged;
        }
        if improvement < opts.tolerance {
            settled = true;
            break;
        }
    }
    best.iters = iters;
    best.converged &= settled || restarts == 0;
    Ok(best)
}

fn nuisance_values(lik: &Likelihood, free: &[usize], z: &[f64]) -> [f64; 3] {
    let c = lik.constraints();
    let mut v = c.centres;
    for (&i, zi) in free.iter().zip(z) {
        v[i] = c.centres[i] + c.widths[i] * zi;
    }
    v
}

/// Minimum of the NLL over phi and the free nuisances, starting from the
/// model's phi and the constraint centres.
pub fn minimize(lik: &Likelihood, opts: &FitOptions) -> Result<FitResult> {
    let free = lik.constraints().free();
    let mut x0 = vec![lik.model().signal.varphi];
    x0.extend(free.iter().map(|_| 0.0));
    let mut steps = vec![opts.step_varphi];
    steps.extend(free.iter().map(|_| opts.step_nuisance));
    let objective = |x: &[f64]| lik.nll(x[0], &nuisance_values(lik, &free, &x[1..]));
    let best = minimize_with_restarts(&objective, &x0, &steps, opts, opts.restarts)?;
    let values = nuisance_values(lik, &free, &best.x[1..]);
    let c = lik.constraints();
    Ok(FitResult {
        varphi_hat: wrap_angle(best.x[0]),
        varphi_err_profile: None,
        nuisances: NuisanceKind::ALL
            .iter()
            .enumerate()
            .map(|(i, &name)| NuisanceParam {
                name,
                nominal: c.centres[i],
                constraint_width: c.widths[i],
                fitted: values[i],
            })
            .collect(),
        nll_min: best.value,
        converged: best.converged && best.value.is_finite(),
        n_iterations: best.iters,
    })
}

/// Half-width of {phi : f(phi) - f_min <= 1/2} around `center`. Each side
/// is bracketed outwards (at most to pi/2) using a quadratic guess for the
/// next trial, then refined by Illinois false position.
pub fn profile_interval<F: FnMut(f64) -> Result<f64>>(mut f: F, center: f64, f_min: f64) -> Result<f64> {
    let mut widths = [0.0; 2];
    for (slot, (sign, side)) in widths.iter_mut().zip([(1.0, "upper"), (-1.0, "lower")]) {
        let mut g = |d: f64| -> Result<f64> { Ok(f(center + sign * d)? - f_min - 0.5) };
        let (mut lo, mut g_lo) = (0.0, -0.5);
        let (mut hi, mut g_hi) = (PROFILE_FIRST_STEP, g(PROFILE_FIRST_STEP)?);
        let mut guess = f64::NAN;
        while g_hi < 0.0 {
            if hi >= FRAC_PI_2 {
                return Err(Error::ProfileNotBracketed { side });
            }
            (lo, g_lo) = (hi, g_hi);
            // distance where a parabola through the origin reaches 1/2
            guess = if g_lo > -0.5 { lo * (0.5 / (g_lo + 0.5)).sqrt() } else { 4.0 * lo };
            let upper = (4.0 * lo).min(FRAC_PI_2);
            hi = (1.02 * guess).clamp((1.05 * lo).min(upper), upper);
            g_hi = g(hi)?;
        }
        // tighten from below when the guess was good
        let below = 0.98 * guess;
        if below > lo && below < hi {
            let gb = g(below)?;
            if gb < 0.0 {
                (lo, g_lo) = (below, gb);
            } else {
                (hi, g_hi) = (below, gb);
            }
        }
        let mut root = None;
        let mut last = 0;
        for _ in 0..100 {
            if hi - lo <= PROFILE_TOLERANCE {
                break;
            }
            let d = lo - g_lo * (hi - lo) / (g_hi - g_lo);
            let gd = g(d)?;
            if gd.abs() < 1e-9 {
                root = Some(d);
                break;
            }
            if gd < 0.0 {
                (lo, g_lo) = (d, gd);
                if last < 0 {
                    g_hi *= 0.5;
                }
                last = -1;
            } else {
                (hi, g_hi) = (d, gd);
                if last > 0 {
                    g_lo *= 0.5;
                }
                last = 1;
            }
        }
        *slot = root.unwrap_or_else(|| lo - g_lo * (hi - lo) / (g_hi - g_lo));
    }
    Ok(0.5 * (widths[0] + widths[1]))
}

/// Profile-likelihood half-width for phi; the free nuisances are
/// re-minimized at every trial phi.
pub fn profile_uncertainty(lik: &Likelihood, fit: &FitResult, opts: &FitOptions) -> Result<f64> {
    if !fit.converged {
        return Err(invalid("fit", "profile interval needs a converged fit"));
    }
    let free = lik.constraints().free();
    let c = *lik.constraints();
    let fitted = fit.nuisance_values();
    let z_best: Vec<f64> = free.iter().map(|&i| (fitted[i] - c.centres[i]) / c.widths[i]).collect();
    let steps: Vec<f64> = free.iter().map(|_| opts.step_nuisance).collect();
    let warm = RefCell::new(z_best.clone());
    let profile = |phi: f64| -> Result<f64> {
        let objective = |z: &[f64]| lik.nll(phi, &nuisance_values(lik, &free, z));
        let start = warm.borrow().clone();
        let best = minimize_with_restarts(&objective, &start, &steps, opts, 0)?;
        *warm.borrow_mut() = best.x.clone();
        Ok(best.value)
    };
    profile_interval(profile, fit.varphi_hat, fit.nll_min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_gives_curvature_width() {
        for sigma in [0.01, 0.07, 0.4] {
            let w = profile_interval(|x| Ok((x - 0.3).powi(2) / (2.0 * sigma * sigma) + 7.0), 0.3, 7.0).unwrap();
            assert!((w - sigma).abs() < 1e-6, "{w} vs {sigma}");
        }
    }

    #[test]
    fn asymmetric_profile_averages_sides() {
        let f = |x: f64| Ok(if x > 0.0 { x * x / (2.0 * 0.04) } else { x * x / (2.0 * 0.01) });
        let w = profile_interval(f, 0.0, 0.0).unwrap();
        assert!((w - 0.15).abs() < 1e-6, "{w}");
    }

    #[test]
    fn flat_profile_is_not_bracketed() {
        let r = profile_interval(|x| Ok(0.1 * x * x), 0.0, 0.0);
        assert!(matches!(r, Err(Error::ProfileNotBracketed { .. })));
    }

    #[test]
    fn restarts_reach_quadratic_minimum() {
        let f = |x: &[f64]| Ok((x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + (x[0] - x[1]).powi(2) * 0.5);
        let out = minimize_with_restarts(&f, &[4.0, 4.0], &[0.5, 0.5], &FitOptions::default(), 3).unwrap();
        assert!(out.converged);
        // analytic minimum from the normal equations
        let (a, b) = (0.55, -0.35);
        assert!((out.x[0] - a).abs() < 1e-3 && (out.x[1] - b).abs() < 1e-3, "{:?}", out.x);
    }
}
