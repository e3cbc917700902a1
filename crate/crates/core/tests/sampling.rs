//! Pseudo-experiment sampling against quadrature oracles, reproducibility
//! and file round trips.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fs::File;
use std::io::{BufReader, BufWriter};

use rayon::ThreadPoolBuilder;
use wvamp_core::experiment::{
    diluted_signal_pdf, BackgroundParams, DetectorConfig, ObservableModel, ResolutionParams, SignalParams,
};
use wvamp_core::fit::ScanGrid;
use wvamp_core::pseudoexp::{
    experiment_rng, generate_ensemble, read_binary, read_csv, sample_events, write_binary, write_csv, EnsembleConfig,
    EventSampler, YieldMode,
};
use wvamp_core::quad::{integrate, integrate_to_infinity};
use wvamp_core::FlavorState;

fn model_with(sp: SignalParams, f_phys: f64) -> ObservableModel {
    let dc = DetectorConfig { f_phys, ..DetectorConfig::default() };
    ObservableModel::new(sp, ResolutionParams::default(), BackgroundParams::default(), &dc).unwrap()
}

#[test]
fn smeared_events_follow_convolved_density() {
    let model = model_with(SignalParams::default(), 0.66);
    let n = 100_000;
    let mut x: Vec<f64> = sample_events(n, 1.0, &model, 7).unwrap().into_iter().map(|e| e.delta_t).collect();
    x.sort_by(f64::total_cmp);

    // oracle cdf on a grid: lower tail plus cumulative cell integrals
    let pdf = |t: f64| model.convolved_pdf(t, FlavorState::B0).unwrap();
    let (lo, hi, step) = (-12.0, 20.0, 0.25);
    let mut cdf = integrate_to_infinity(|z| pdf(-z), -lo, 1e-10).unwrap().value;
    let mut d_max: f64 = 0.0;
    let mut a = lo;
    while a < hi {
        let below = x.partition_point(|&v| v <= a) as f64 / n as f64;
        d_max = d_max.max((below - cdf).abs());
        cdf += integrate(pdf, a, a + step, 1e-11).unwrap().value;
        a += step;
    }
    // grid KS statistic; 1.95/sqrt(n) is the 0.1% critical value
    let critical = 1.95 / (n as f64).sqrt();
    assert!(d_max < critical, "D = {d_max} >= {critical}");
    assert!((cdf + integrate_to_infinity(pdf, hi, 1e-10).unwrap().value - 1.0).abs() < 1e-6);
}

#[test]
fn positive_time_moment_at_every_grid_point() {
    let grid = ScanGrid::standard();
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for &abs_r in &grid.abs_r {
        for &theta in &grid.theta {
            let sp = SignalParams { abs_r, theta, ..SignalParams::default() };
            let model = model_with(sp, 1.0);
            let sampler = EventSampler::new(&model).unwrap();
            let mut rng = experiment_rng(11, 0, 0);
            let pos: Vec<f64> =
                (0..n).map(|_| sampler.true_time(FlavorState::B0, &mut rng)).filter(|&t| t > 0.0).collect();
            let m = pos.len() as f64;
            let mean = pos.iter().sum::<f64>() / m;
            let var = pos.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0);

            let p = |t: f64| diluted_signal_pdf(t, FlavorState::B0, &sp, model.wrong_tag).unwrap();
            let norm = integrate_to_infinity(p, 0.0, 1e-12).unwrap().value;
            let first = integrate_to_infinity(|t| t * p(t), 0.0, 1e-12).unwrap().value;
            let pull = (mean - first / norm) / (var / m).sqrt();
            assert!(pull.abs() < 3.0, "|r| = {abs_r}, theta = {theta}: pull {pull}");
            worst = worst.max(pull.abs());
        }
    }
    eprintln!("largest |pull| over the grid: {worst:.2}");
}

#[test]
fn balanced_postselection_has_mean_abs_time_tau() {
    let sp = SignalParams { abs_r: FRAC_1_SQRT_2, theta: SignalParams::default().varphi, ..SignalParams::default() };
    let sampler = EventSampler::new(&model_with(sp, 1.0)).unwrap();
    let mut rng = experiment_rng(3, 0, 0);
    let n = 1_000_000;
    let mut sum = 0.0;
    for i in 0..n {
        let tag = if i % 2 == 0 { FlavorState::B0 } else { FlavorState::B0bar };
        sum += sampler.true_time(tag, &mut rng).abs();
    }
    // |t| is exponential with mean and standard deviation tau
    let se = sp.tau / (n as f64).sqrt();
    assert!((sum / n as f64 - sp.tau).abs() < 3.0 * se, "{} vs {}", sum / n as f64, sp.tau);
}

#[test]
fn poisson_yield_mean() {
    let mut cfg = EnsembleConfig::new(model_with(SignalParams::default(), 0.66), 400, 5);
    cfg.yield_mode = YieldMode::Poisson(3286.4);
    let counts: Vec<f64> = (0..cfg.n_experiments).map(|i| cfg.events_for(i) as f64).collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let se = (3286.4 / counts.len() as f64).sqrt();
    assert!((mean - 3286.4).abs() < 3.0 * se, "{mean}");
    assert!(counts.iter().any(|&c| c != counts[0]));
}

#[test]
fn ensembles_are_reproducible_and_thread_independent() {
    let cfg = EnsembleConfig::new(model_with(SignalParams::default(), 0.66), 12, 2025);
    let in_pool = |threads: usize| {
        ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| generate_ensemble(&cfg).unwrap())
    };
    let one = in_pool(1);
    assert_eq!(one, in_pool(3));
    assert_eq!(one, generate_ensemble(&cfg).unwrap());
    assert!(one.iter().all(|d| d.len() == 3200 && d.count(FlavorState::B0) == 1600));
    assert_eq!(one[4], wvamp_core::pseudoexp::run_experiment(&cfg, 4).unwrap());

    let other = generate_ensemble(&EnsembleConfig { seed: 2026, ..cfg }).unwrap();
    assert_ne!(one[0], other[0]);
    // experiments of one ensemble use distinct streams
    assert_ne!(one[0].events, one[1].events);
}

#[test]
fn ensemble_files_round_trip() {
    let cfg = EnsembleConfig::new(model_with(SignalParams::default(), 0.66), 3, 99);
    let sets = generate_ensemble(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let csv = dir.path().join("events.csv");
    write_csv(&sets, BufWriter::new(File::create(&csv).unwrap())).unwrap();
    assert_eq!(read_csv(BufReader::new(File::open(&csv).unwrap())).unwrap(), sets);

    let bin = dir.path().join("events.bin");
    write_binary(&sets, BufWriter::new(File::create(&bin).unwrap())).unwrap();
    assert_eq!(std::fs::metadata(&bin).unwrap().len(), 13 * 3 * 3200);
    assert_eq!(read_binary(BufReader::new(File::open(&bin).unwrap())).unwrap(), sets);
}
