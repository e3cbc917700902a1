//! Pseudo-experiment generation.
//!
//! Events are drawn by exact inversion: one uniform picks signal or
//! background, one inverts the closed-form CDF of the true-time density and
//! one inverts the resolution CDF for the smearing. Every experiment owns a
//! ChaCha8 stream selected by its index, so ensembles are reproducible and
//! independent of thread count.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{ExpTrigDensity, Support};
use crate::error::{invalid, Error, Result};
use crate::experiment::{ObservableModel, Resolution, SignalShape};
use crate::params::FlavorState;

/// Default per-experiment yield.
pub const DEFAULT_EVENTS: usize = 3200;

/// Stream domains; the low byte of the ChaCha stream id.
const STREAM_EVENTS: u64 = 0;
const STREAM_YIELD: u64 = 1;
pub(crate) const STREAM_AUX: u64 = 2;

/// Generator for stream `domain` of experiment `index`.
pub fn experiment_rng(seed: u64, index: usize, domain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((index as u64) << 8) | domain);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Signed decay-time difference (ps).
    pub delta_t: f64,
    pub tag: FlavorState,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub id: u32,
    pub events: Vec<Event>,
}

impl Dataset {
    pub fn new(id: u32, events: Vec<Event>) -> Self {
        Self { id, events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, tag: FlavorState) -> usize {
        self.events.iter().filter(|e| e.tag == tag).count()
    }

    pub fn validate(&self) -> Result<()> {
        match self.events.iter().position(|e| !e.delta_t.is_finite()) {
            Some(i) => Err(Error::Dataset(format!("event {i} of experiment {} has non-finite delta_t", self.id))),
            None => Ok(()),
        }
    }
}

/// Draws events from an `ObservableModel`.
#[derive(Debug, Clone, Copy)]
pub struct EventSampler {
    signal: [ExpTrigDensity; 2],
    background: ExpTrigDensity,
    resolution: Resolution,
    f_phys: f64,
}

impl EventSampler {
    pub fn new(model: &ObservableModel) -> Result<Self> {
        model.validate()?;
        let sp = &model.signal;
        let signal = |flavor| -> Result<ExpTrigDensity> {
            let shape = SignalShape::new(flavor, sp, model.wrong_tag)?;
            ExpTrigDensity::new(1.0 / sp.tau, sp.delta_m, 1.0, shape.c_cos, shape.c_sin, Support::TwoSided)
        };
        Ok(Self {
            signal: [signal(FlavorState::B0)?, signal(FlavorState::B0bar)?],
            background: ExpTrigDensity::new(1.0 / model.background.tau_bkg, 0.0, 1.0, 0.0, 0.0, Support::TwoSided)?,
            resolution: model.resolution.kernel()?,
            f_phys: model.f_phys,
        })
    }

    /// Time before smearing; signal with probability f_phys.
    pub fn true_time<R: Rng + ?Sized>(&self, tag: FlavorState, rng: &mut R) -> f64 {
        let u_cat: f64 = rng.random();
        let u_t = open_unit(rng);
        if u_cat < self.f_phys {
            self.signal[tag.code() as usize].quantile(u_t)
        } else {
            self.background.quantile(u_t)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, tag: FlavorState, rng: &mut R) -> Event {
        let t = self.true_time(tag, rng);
        let smear = self.resolution.quantile(open_unit(rng));
        Event { delta_t: t + smear, tag }
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Number of B0-tagged events out of `n` for a tag fraction.
fn b0_count(n: usize, b0_fraction: f64) -> usize {
    ((n as f64 * b0_fraction).round() as usize).min(n)
}

fn sample_with<R: Rng + ?Sized>(n: usize, b0_fraction: f64, sampler: &EventSampler, rng: &mut R) -> Vec<Event> {
    let n_b0 = b0_count(n, b0_fraction);
    (0..n)
        .map(|i| {
            let tag = if i < n_b0 { FlavorState::B0 } else { FlavorState::B0bar };
            sampler.sample(tag, rng)
        })
        .collect()
}

/// `n` events, the first round(n * b0_fraction) tagged B0 and the rest B0bar.
pub fn sample_events(n: usize, b0_fraction: f64, model: &ObservableModel, seed: u64) -> Result<Vec<Event>> {
    if !(0.0..=1.0).contains(&b0_fraction) {
        return Err(invalid("b0_fraction", format!("must lie in [0, 1], got {b0_fraction}")));
    }
    let sampler = EventSampler::new(model)?;
    let mut rng = experiment_rng(seed, 0, STREAM_EVENTS);
    Ok(sample_with(n, b0_fraction, &sampler, &mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "events", rename_all = "lowercase")]
pub enum YieldMode {
    Fixed(usize),
    /// Poisson-distributed total with the given mean.
    Poisson(f64),
}

impl Default for YieldMode {
    fn default() -> Self {
        YieldMode::Fixed(DEFAULT_EVENTS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub n_experiments: usize,
    pub yield_mode: YieldMode,
    /// Fraction of each experiment tagged B0.
    pub b0_fraction: f64,
    pub seed: u64,
    pub model: ObservableModel,
}

impl EnsembleConfig {
    pub fn new(model: ObservableModel, n_experiments: usize, seed: u64) -> Self {
        Self { n_experiments, yield_mode: YieldMode::default(), b0_fraction: 0.5, seed, model }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_experiments == 0 {
            return Err(invalid("n_experiments", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.b0_fraction) {
            return Err(invalid("b0_fraction", format!("must lie in [0, 1], got {}", self.b0_fraction)));
        }
        if let YieldMode::Poisson(mean) = self.yield_mode {
            if !(mean > 0.0 && mean.is_finite()) {
                return Err(invalid("yield", format!("Poisson mean must be positive, got {mean}")));
            }
        }
        self.model.validate()
    }

    /// Event count of experiment `index`.
    pub fn events_for(&self, index: usize) -> usize {
        match self.yield_mode {
            YieldMode::Fixed(n) => n,
            YieldMode::Poisson(mean) => {
                let mut rng = experiment_rng(self.seed, index, STREAM_YIELD);
                // validated mean, so construction cannot fail
                Poisson::new(mean).map(|p| p.sample(&mut rng) as usize).unwrap_or(0)
            }
        }
    }
}

/// Dataset of experiment `index`.
pub fn run_experiment(config: &EnsembleConfig, index: usize) -> Result<Dataset> {
    config.validate()?;
    let sampler = EventSampler::new(&config.model)?;
    Ok(generate(config, &sampler, index))
}

fn generate(config: &EnsembleConfig, sampler: &EventSampler, index: usize) -> Dataset {
    let n = config.events_for(index);
    let mut rng = experiment_rng(config.seed, index, STREAM_EVENTS);
    Dataset::new(index as u32, sample_with(n, config.b0_fraction, sampler, &mut rng))
}

/// All datasets of an ensemble, in index order.
pub fn generate_ensemble(config: &EnsembleConfig) -> Result<Vec<Dataset>> {
    config.validate()?;
    let sampler = EventSampler::new(&config.model)?;
    Ok((0..config.n_experiments).into_par_iter().map(|i| generate(config, &sampler, i)).collect())
}

/// Anything that turns one dataset into a result. `aux` is a private stream
/// of the experiment for auxiliary measurements.
pub trait Fitter: Sync {
    type Output: Send;
    fn fit(&self, data: &Dataset, aux: &mut ChaCha8Rng) -> Result<Self::Output>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResults<T> {
    /// Indexed by experiment; failures keep their message.
    pub outcomes: Vec<std::result::Result<T, String>>,
}

impl<T> EnsembleResults<T> {
    pub fn n_failed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_err()).count()
    }

    pub fn successes(&self) -> impl Iterator<Item = &T> {
        self.outcomes.iter().filter_map(|o| o.as_ref().ok())
    }
}

/// Generates and fits every experiment. Fit errors are recorded per
/// experiment rather than aborting the ensemble.
pub fn run_ensemble<F: Fitter>(config: &EnsembleConfig, fitter: &F) -> Result<EnsembleResults<F::Output>> {
    config.validate()?;
    let sampler = EventSampler::new(&config.model)?;
    let outcomes = (0..config.n_experiments)
        .into_par_iter()
        .map(|i| {
            let data = generate(config, &sampler, i);
            let mut aux = experiment_rng(config.seed, i, STREAM_AUX);
            fitter.fit(&data, &mut aux).map_err(|e| e.to_string())
        })
        .collect();
    Ok(EnsembleResults { outcomes })
}

pub const CSV_HEADER: &str = "experiment_id,tag,delta_t";
const RECORD_BYTES: usize = 13;

pub fn write_csv<W: Write>(datasets: &[Dataset], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for d in datasets {
        for e in &d.events {
            writeln!(w, "{},{},{}", d.id, e.tag.label(), e.delta_t)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_tag(s: &str) -> Option<FlavorState> {
    FlavorState::from_label(s).or_else(|| s.parse::<u8>().ok().and_then(FlavorState::from_code))
}

fn group(records: Vec<(u32, Event)>) -> Vec<Dataset> {
    let mut by_id: BTreeMap<u32, Vec<Event>> = BTreeMap::new();
    for (id, e) in records {
        by_id.entry(id).or_default().push(e);
    }
    by_id.into_iter().map(|(id, events)| Dataset::new(id, events)).collect()
}

/// Reads a CSV written by `write_csv`; events are grouped by experiment id,
/// keeping file order within an experiment.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<Dataset>> {
    let mut records = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if lineno == 0 {
            if line != CSV_HEADER {
                return Err(Error::Dataset(format!("expected header `{CSV_HEADER}`, found `{line}`")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Dataset(format!("line {}: cannot parse `{line}`", lineno + 1));
        let mut fields = line.split(',');
        let (Some(id), Some(tag), Some(dt), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(bad());
        };
        let id = id.trim().parse::<u32>().map_err(|_| bad())?;
        let tag = parse_tag(tag.trim()).ok_or_else(bad)?;
        let delta_t = dt.trim().parse::<f64>().map_err(|_| bad())?;
        if !delta_t.is_finite() {
            return Err(bad());
        }
        records.push((id, Event { delta_t, tag }));
    }
    Ok(group(records))
}

/// Little-endian records of (u32 experiment id, u8 tag, f64 delta_t).
pub fn write_binary<W: Write>(datasets: &[Dataset], mut w: W) -> Result<()> {
    let mut buf = [0u8; RECORD_BYTES];
    for d in datasets {
        for e in &d.events {
            buf[..4].copy_from_slice(&d.id.to_le_bytes());
            buf[4] = e.tag.code();
            buf[5..].copy_from_slice(&e.delta_t.to_le_bytes());
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Vec<Dataset>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::Dataset(format!(
            "binary length {} is not a multiple of the {RECORD_BYTES}-byte record",
            bytes.len()
        )));
    }
    let mut records = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let id = u32::from_le_bytes(rec[..4].try_into().expect("4-byte slice"));
        let tag =
            FlavorState::from_code(rec[4]).ok_or_else(|| Error::Dataset(format!("record {i}: tag byte {}", rec[4])))?;
        let delta_t = f64::from_le_bytes(rec[5..].try_into().expect("8-byte slice"));
        if !delta_t.is_finite() {
            return Err(Error::Dataset(format!("record {i}: non-finite delta_t")));
        }
        records.push((id, Event { delta_t, tag }));
    }
    Ok(group(records))
}
