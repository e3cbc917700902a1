use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use wvamp_core::experiment::{
    background_pdf, diluted_signal_pdf, BasisSource, ConvolutionTable, DirectConvolution, ObservableModel, TableSpec,
};
use wvamp_core::fit::{
    ensemble_summary, minimize, profile_uncertainty, scan, write_scan_csv, ConstraintWidths, Constraints, FitResult,
    Likelihood, ToyFit, ToyFitter, MAX_FAILED_FRACTION,
};
use wvamp_core::lifetime::{conditional_density_equalwidth, effective_lifetime, effective_lifetime_moments};
use wvamp_core::pseudoexp::{generate_ensemble, read_binary, read_csv, run_ensemble, write_binary, write_csv, Dataset};
use wvamp_core::{FlavorState, Postselection};

use crate::config::{Axis, DataFormat, RunConfig};
use crate::error::CliError;

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = out.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| CliError::from(e).context(path.display()))
}

/// CSV number: shortest round-trip digits, exponent form outside [1e-4, 1e15).
struct Num(f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0.abs();
        if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
            write!(f, "{:e}", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Sigma grid of the table spans this many constraint widths.
const TABLE_SIGMA_WIDTHS: f64 = 5.5;

fn basis_table(model: &ObservableModel, widths: &ConstraintWidths) -> Result<Arc<ConvolutionTable>, CliError> {
    let direct = DirectConvolution::new(model.kernel()?, model.resolution.shape()?);
    let spec = TableSpec::around(model.resolution.sigma, widths.sigma, TABLE_SIGMA_WIDTHS);
    Ok(Arc::new(ConvolutionTable::build(direct, spec)?))
}

fn trapezoid(step: f64, ys: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = ys.collect();
    match v.len() {
        0 | 1 => 0.0,
        n => step * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1])),
    }
}

pub fn lifetime(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mp = cfg.meson()?;
    let mix = cfg.mixing()?;
    let rs = cfg.lifetime.abs_r.values("lifetime.abs_r")?;
    let ts = cfg.lifetime.theta_deg.values("lifetime.theta_deg")?;
    let points: Vec<(f64, f64)> = rs.iter().flat_map(|&r| ts.iter().map(move |&t| (r, t))).collect();
    let rows = points
        .par_iter()
        .map(|&(r, t)| {
            let post = Postselection::from_abs_theta(r, t.to_radians())?;
            if mp.delta_gamma() == 0.0 {
                effective_lifetime(&post, FlavorState::B0, &mp, &mix)
            } else {
                effective_lifetime_moments(&post, FlavorState::B0, &mp, &mix)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut w = create(out, "lifetime.csv")?;
    writeln!(w, "abs_r,theta_deg,tau_eff,ratio")?;
    for (&(r, t), res) in points.iter().zip(&rows) {
        writeln!(w, "{},{},{},{}", Num(r), Num(t), Num(res.tau_eff), Num(res.amplification_ratio))?;
    }
    w.flush()?;

    let (i, best) = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.amplification_ratio.total_cmp(&b.1.amplification_ratio))
        .expect("grid is not empty");
    println!(
        "lifetime: {} points, max tau_eff/tau = {:.4} at |r| = {}, theta = {} deg",
        rows.len(),
        best.amplification_ratio,
        points[i].0,
        points[i].1
    );
    Ok(())
}

pub fn pdf(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.model()?;
    let g = &cfg.pdf;
    let ts = Axis::range(g.t_min, g.t_max, g.step).values("pdf.t_min/t_max/step")?;
    let direct = DirectConvolution::new(model.kernel()?, model.resolution.shape()?);
    let b0 = cfg.run.b0_fraction;
    if !(0.0..=1.0).contains(&b0) {
        return Err(CliError::config(format!("run.b0_fraction must lie in [0, 1], got {b0}")));
    }
    let rows = ts
        .par_iter()
        .map(|&t| -> Result<[f64; 4], CliError> {
            let basis = direct.basis(t - model.resolution.mu, model.resolution.sigma)?;
            let total = b0 * model.combine(FlavorState::B0, &basis)?
                + (1.0 - b0) * model.combine(FlavorState::B0bar, &basis)?;
            Ok([
                diluted_signal_pdf(t, FlavorState::B0, &model.signal, model.wrong_tag)?,
                diluted_signal_pdf(t, FlavorState::B0bar, &model.signal, model.wrong_tag)?,
                background_pdf(t, &model.background)?,
                total,
            ])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut w = create(out, "pdf.csv")?;
    writeln!(w, "delta_t,pdf_B0,pdf_B0bar,pdf_bkg,pdf_total")?;
    for (t, r) in ts.iter().zip(&rows) {
        writeln!(w, "{},{},{},{},{}", Num(*t), Num(r[0]), Num(r[1]), Num(r[2]), Num(r[3]))?;
    }
    w.flush()?;

    // postselected decay-time curves for the |r| sweep, t >= 0
    let mp = cfg.meson()?;
    let mix = cfg.mixing()?;
    let theta = model.signal.theta;
    let cts = Axis::range(0.0, g.conditional_t_max, g.conditional_step).values("pdf.conditional_t_max/step")?;
    let mut w = create(out, "conditional.csv")?;
    writeln!(w, "abs_r,delta_t,pdf_B0,pdf_B0bar")?;
    for r in g.abs_r.values("pdf.abs_r")? {
        let post = Postselection::from_abs_theta(r, theta)?;
        let d0 = conditional_density_equalwidth(&post, FlavorState::B0, &mp, &mix)?;
        let d1 = conditional_density_equalwidth(&post, FlavorState::B0bar, &mp, &mix)?;
        for &t in &cts {
            writeln!(w, "{},{},{},{}", Num(r), Num(t), Num(d0.pdf(t)), Num(d1.pdf(t)))?;
        }
    }
    w.flush()?;

    println!(
        "pdf: {} points on [{}, {}] ps; trapezoid norm of pdf_total {:.6}",
        ts.len(),
        g.t_min,
        g.t_max,
        trapezoid(g.step, rows.iter().map(|r| r[3]))
    );
    Ok(())
}

fn load_datasets(path: &Path) -> Result<Vec<Dataset>, CliError> {
    let file = File::open(path).map_err(|e| CliError::config(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let sets = if path.extension().is_some_and(|e| e == "bin") { read_binary(reader)? } else { read_csv(reader)? };
    if sets.is_empty() {
        return Err(CliError::config(format!("{} holds no events", path.display())));
    }
    Ok(sets)
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ens = cfg.ensemble()?;
    let sets = generate_ensemble(&ens)?;
    let name = match cfg.io.format {
        DataFormat::Csv => {
            write_csv(&sets, create(out, "events.csv")?)?;
            "events.csv"
        }
        DataFormat::Binary => {
            write_binary(&sets, create(out, "events.bin")?)?;
            "events.bin"
        }
    };
    let n: usize = sets.iter().map(Dataset::len).sum();
    println!("generate: {} experiments, {n} events -> {name}", sets.len());
    Ok(())
}

#[derive(Serialize)]
struct FitRecord {
    experiment_id: u32,
    n_events: usize,
    converged: bool,
    varphi_hat_deg: Option<f64>,
    varphi_err_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct FitReport {
    experiments: Vec<FitRecord>,
}

pub fn fit(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let path = cfg.io.data.as_deref().ok_or_else(|| CliError::config("fit needs a dataset: --data PATH or io.data"))?;
    let sets = load_datasets(path)?;
    let model = cfg.model()?;
    let widths = cfg.widths()?;
    let table = basis_table(&model, &widths)?;
    let constraints = Constraints::nominal(&model, &widths);

    let outcomes: Vec<Result<FitResult, CliError>> = sets
        .par_iter()
        .map(|data| {
            let lik = Likelihood::new(data, table.as_ref() as &dyn BasisSource, model, constraints)?;
            let mut fit = minimize(&lik, &cfg.fit)?;
            if fit.converged {
                fit.varphi_err_profile = Some(profile_uncertainty(&lik, &fit, &cfg.fit)?);
            }
            Ok(fit)
        })
        .collect();

    let mut first_error = None;
    let mut n_unconverged = 0;
    let mut records = Vec::with_capacity(sets.len());
    for (data, outcome) in sets.iter().zip(outcomes) {
        let mut rec = FitRecord {
            experiment_id: data.id,
            n_events: data.len(),
            converged: false,
            varphi_hat_deg: None,
            varphi_err_deg: None,
            fit: None,
            error: None,
        };
        match outcome {
            Ok(f) => {
                rec.converged = f.converged;
                rec.varphi_hat_deg = Some(f.varphi_hat.to_degrees());
                rec.varphi_err_deg = f.varphi_err_profile.map(f64::to_degrees);
                n_unconverged += usize::from(!f.converged);
                rec.fit = Some(f);
            }
            Err(e) => {
                rec.error = Some(e.message.clone());
                first_error.get_or_insert(e);
            }
        }
        records.push(rec);
    }
    if let [one] = records.as_slice() {
        if let (Some(v), Some(e)) = (one.varphi_hat_deg, one.varphi_err_deg) {
            println!("fit: phi = {v:.3} +- {e:.3} deg ({} events)", one.n_events);
        }
    } else {
        println!("fit: {} experiments", records.len());
    }
    let n = records.len();
    write_json(out, "fit.json", &FitReport { experiments: records })?;

    if let Some(e) = first_error {
        return Err(e.context("fit failed"));
    }
    if n_unconverged > 0 {
        return Err(CliError::not_converged(format!("{n_unconverged} of {n} fits did not converge")));
    }
    Ok(())
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut w = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn toy_fitter(cfg: &RunConfig, model: ObservableModel) -> Result<ToyFitter, CliError> {
    let widths = cfg.widths()?;
    let mut fitter = ToyFitter::new(model, widths, basis_table(&model, &widths)?);
    fitter.options = cfg.fit;
    fitter.randomize_aux = cfg.run.randomize_aux;
    fitter.stat_fit = cfg.run.stat_fit;
    fitter.profile = cfg.run.profile;
    Ok(fitter)
}

/// Ensemble statistics in degrees. Statistics that are undefined (too few
/// fits, no profiles) serialize as null.
#[derive(Serialize)]
struct SummaryReport {
    abs_r: f64,
    theta_deg: f64,
    varphi_true_deg: f64,
    n_experiments: usize,
    n_ok: usize,
    n_failed: usize,
    flagged: bool,
    mean_bias_deg: f64,
    err_total_deg: f64,
    err_stat_deg: f64,
    err_syst_deg: f64,
    pull_mean: f64,
    pull_width: f64,
    mean_profile_err_deg: f64,
    failures: Vec<Failure>,
}

#[derive(Serialize)]
struct Failure {
    experiment_id: usize,
    message: String,
}

pub fn ensemble(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ens = cfg.ensemble()?;
    let model = ens.model;
    let fitter = toy_fitter(cfg, model)?;
    let results = run_ensemble(&ens, &fitter)?;
    let s = ensemble_summary(&results, model.signal.varphi);
    let flagged = s.n_failed as f64 > MAX_FAILED_FRACTION * ens.n_experiments as f64;

    let mut w = create(out, "ensemble.csv")?;
    writeln!(w, "experiment_id,status,varphi_hat_deg,varphi_err_deg,varphi_stat_deg")?;
    let mut failures = Vec::new();
    for (i, outcome) in results.outcomes.iter().enumerate() {
        match outcome {
            Ok(ToyFit { full, stat }) => {
                let converged = full.converged && stat.as_ref().is_none_or(|s| s.converged);
                let opt = |x: Option<f64>| x.map(|v| Num(v.to_degrees()).to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{i},{},{},{},{}",
                    if converged { "ok" } else { "not_converged" },
                    Num(full.varphi_hat.to_degrees()),
                    opt(full.varphi_err_profile),
                    opt(stat.as_ref().map(|s| s.varphi_hat))
                )?;
            }
            Err(message) => {
                writeln!(w, "{i},failed,,,")?;
                failures.push(Failure { experiment_id: i, message: message.clone() });
            }
        }
    }
    w.flush()?;

    let report = SummaryReport {
        abs_r: model.signal.abs_r,
        theta_deg: model.signal.theta.to_degrees(),
        varphi_true_deg: model.signal.varphi.to_degrees(),
        n_experiments: ens.n_experiments,
        n_ok: s.n_ok,
        n_failed: s.n_failed,
        flagged,
        mean_bias_deg: s.mean_bias.to_degrees(),
        err_total_deg: s.err_total.to_degrees(),
        err_stat_deg: s.err_stat.to_degrees(),
        err_syst_deg: s.err_syst.to_degrees(),
        pull_mean: s.pull_mean,
        pull_width: s.pull_width,
        mean_profile_err_deg: s.mean_profile_err.to_degrees(),
        failures,
    };
    write_json(out, "summary.json", &report)?;
    println!(
        "ensemble: {} ok, {} failed; total {:.3} deg, stat {:.3} deg, pull width {:.3}",
        s.n_ok,
        s.n_failed,
        s.err_total.to_degrees(),
        s.err_stat.to_degrees(),
        s.pull_width
    );
    if flagged {
        return Err(CliError::not_converged(format!(
            "{} of {} fits failed or did not converge",
            s.n_failed, ens.n_experiments
        )));
    }
    Ok(())
}

pub fn scan_grid(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid = cfg.scan_grid()?;
    let ens = cfg.ensemble()?;
    let fitter = toy_fitter(cfg, ens.model)?;
    let result = scan(&grid, &ens, &fitter)?;
    write_scan_csv(&result, create(out, "scan.csv")?)?;

    let best =
        result.points.iter().filter(|p| !p.flagged).min_by(|a, b| a.summary.err_total.total_cmp(&b.summary.err_total));
    match best {
        Some(p) => println!(
            "scan: {} points; smallest total error {:.3} deg at |r| = {}, theta = {} deg",
            result.points.len(),
            p.summary.err_total.to_degrees(),
            p.abs_r,
            p.theta.to_degrees()
        ),
        None => println!("scan: {} points, all flagged", result.points.len()),
    }
    let flagged = result.points.iter().filter(|p| p.flagged).count();
    if flagged > 0 {
        return Err(CliError::not_converged(format!(
            "{flagged} grid points have more than {:.0}% failed fits",
            100.0 * MAX_FAILED_FRACTION
        )));
    }
    Ok(())
}
