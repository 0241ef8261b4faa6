//! Measurements over run logs: complexity trace, desirable-time fraction,
//! visited shapes, shape-transition frequencies and the periodogram of the
//! visited-shape series.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::{ColorId, Grid};
use crate::pattern::{Catalogue, ShapeClass};
use crate::sim::{run, RunLog, SimConfig};

pub const MIN_PERIODOGRAM_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ComplexityTracePoint {
    pub step: u64,
    /// `min over patterns of (distance + description bits)`.
    pub value: u32,
    /// The grid is exactly one of the basic states.
    pub exact: bool,
}

/// Best two-part description of `grid`: nearest pattern distance plus its code length.
pub fn description_bound(grid: &Grid, catalogue: &Catalogue) -> Result<(u32, bool)> {
    let mut best = u32::MAX;
    let mut exact = false;
    for idx in 0..catalogue.len() {
        let (d, _) = catalogue.get(idx).distance(grid)?;
        let v = d as u32 + catalogue.describe_complexity(idx, grid.k())?;
        best = best.min(v);
        exact |= d == 0;
    }
    Ok((best, exact))
}

pub fn complexity_trace(log: &RunLog, catalogue: &Catalogue) -> Result<Vec<ComplexityTracePoint>> {
    log.events
        .iter()
        .zip(log.states())
        .map(|(e, g)| {
            let (value, exact) = description_bound(&g, catalogue)?;
            Ok(ComplexityTracePoint { step: e.step, value, exact })
        })
        .collect()
}

/// Fraction of agent decisions at which at least one candidate was desirable.
pub fn desirable_fraction(log: &RunLog) -> f64 {
    let decisions: Vec<_> = log.events.iter().filter(|e| !e.human).collect();
    if decisions.is_empty() {
        return 0.0;
    }
    let hits = decisions.iter().filter(|e| e.desirable_count > 0).count();
    hits as f64 / decisions.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonFraction {
    pub horizon: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_err: f64,
    pub runs: usize,
}

/// Desirable fraction per horizon, averaged over one run per seed.
/// Runs execute on scoped worker threads; the result does not depend on
/// scheduling.
pub fn desirable_fraction_sweep(
    base: &SimConfig,
    horizons: &[usize],
    seeds: &[u64],
) -> Result<Vec<HorizonFraction>> {
    if horizons.is_empty() || seeds.is_empty() {
        return Err(invalid("sweep needs at least one horizon and one seed"));
    }
    let jobs: Vec<(usize, u64)> = horizons
        .iter()
        .flat_map(|&h| seeds.iter().map(move |&s| (h, s)))
        .collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    let chunk = jobs.len().div_ceil(workers);
    let fractions: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&(horizon, seed)| {
                            let cfg = SimConfig { horizon, seed, ..base.clone() };
                            run(&cfg).map(|log| desirable_fraction(&log))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let fractions: Vec<f64> = fractions.into_iter().collect::<Result<_>>()?;
    Ok(horizons
        .iter()
        .zip(fractions.chunks(seeds.len()))
        .map(|(&horizon, xs)| {
            let (mean, std_dev) = mean_std(xs);
            HorizonFraction {
                horizon,
                mean,
                std_dev,
                std_err: std_dev / (xs.len() as f64).sqrt(),
                runs: xs.len(),
            }
        })
        .collect())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Visit {
    pub shape: ShapeClass,
    pub config: usize,
    pub label: String,
    pub background: ColorId,
}

/// Reached basic states in order, with shape and background colour.
pub fn visited_sequence(log: &RunLog, catalogue: &Catalogue) -> Result<Vec<Visit>> {
    log.reached
        .iter()
        .map(|id| {
            let b = catalogue.resolve(id, log.config.k)?;
            Ok(Visit {
                shape: b.shape,
                config: b.config,
                label: catalogue.get(b.pattern).label.clone(),
                background: b.background,
            })
        })
        .collect()
}

/// Same background colour, or different.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Background {
    Same = 0,
    Opposite = 1,
}

/// Counts of consecutive reached-state pairs by shape class and background relation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionMatrix {
    counts: [[[u64; 2]; 4]; 4],
    min_transitions: u64,
}

impl TransitionMatrix {
    pub fn new(min_transitions: u64) -> Self {
        TransitionMatrix { counts: Default::default(), min_transitions }
    }

    pub fn add_sequence(&mut self, visits: &[Visit]) {
        for pair in visits.windows(2) {
            let rel = if pair[0].background == pair[1].background {
                Background::Same
            } else {
                Background::Opposite
            };
            self.counts[pair[0].shape.index()][pair[1].shape.index()][rel as usize] += 1;
        }
    }

    pub fn count(&self, from: ShapeClass, to: ShapeClass, rel: Background) -> u64 {
        self.counts[from.index()][to.index()][rel as usize]
    }

    pub fn row_total(&self, from: ShapeClass) -> u64 {
        self.counts[from.index()].iter().flatten().sum()
    }

    pub fn low_confidence(&self, from: ShapeClass) -> bool {
        self.row_total(from) < self.min_transitions
    }

    /// Frequency of `from -> to` among transitions out of `from`.
    pub fn frequency(&self, from: ShapeClass, to: ShapeClass) -> f64 {
        self.ratio(self.counts[from.index()][to.index()].iter().sum(), from)
    }

    pub fn frequency_rel(&self, from: ShapeClass, to: ShapeClass, rel: Background) -> f64 {
        self.ratio(self.count(from, to, rel), from)
    }

    fn ratio(&self, count: u64, from: ShapeClass) -> f64 {
        match self.row_total(from) {
            0 => 0.0,
            total => count as f64 / total as f64,
        }
    }

    /// Binomial standard error of a frequency in the `from` row.
    pub fn std_err(&self, from: ShapeClass, p: f64) -> f64 {
        match self.row_total(from) {
            0 => f64::INFINITY,
            n => (p * (1.0 - p) / n as f64).sqrt(),
        }
    }

    /// Long-form rows: `from,to,relation,count,frequency`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("from,to,relation,count,frequency,row_total,low_confidence\n");
        for from in ShapeClass::ALL {
            for to in ShapeClass::ALL {
                for (rel, name) in [(Background::Same, "bc"), (Background::Opposite, "1-bc")] {
                    let _ = writeln!(
                        out,
                        "{from},{to},{name},{},{:.6},{},{}",
                        self.count(from, to, rel),
                        self.frequency_rel(from, to, rel),
                        self.row_total(from),
                        self.low_confidence(from)
                    );
                }
            }
        }
        out
    }

    /// Reference shape per row, target shape per column; each cell shows the
    /// total frequency and its same / opposite background split.
    pub fn to_table(&self) -> String {
        let mut out = String::from("reference\tPlain\tDiagonal\tTriangle\tLine\n");
        for from in ShapeClass::ALL {
            let _ = write!(out, "{} ({} transitions)", title(from), self.row_total(from));
            for to in ShapeClass::ALL {
                let _ = write!(
                    out,
                    "\t{:.2} bc: {:.2} 1-bc: {:.2}",
                    self.frequency(from, to),
                    self.frequency_rel(from, to, Background::Same),
                    self.frequency_rel(from, to, Background::Opposite)
                );
            }
            out.push('\n');
        }
        out
    }
}

fn title(s: ShapeClass) -> &'static str {
    match s {
        ShapeClass::Plain => "Plain",
        ShapeClass::Diagonal => "Diagonal",
        ShapeClass::Triangle => "Triangle",
        ShapeClass::Line => "Line",
    }
}

/// Pools consecutive-pair counts over the reached sequences of several runs.
pub fn transition_matrix(
    logs: &[RunLog],
    catalogue: &Catalogue,
    min_transitions: u64,
) -> Result<TransitionMatrix> {
    let mut m = TransitionMatrix::new(min_transitions);
    for log in logs {
        m.add_sequence(&visited_sequence(log, catalogue)?);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Periodogram {
    /// Power at frequency `(i + 1) / len` for `i` in `0..len/2`.
    pub power: Vec<f64>,
    pub len: usize,
    /// Largest single-frequency share of the total power.
    pub dominance: f64,
    pub peak: usize,
}

/// DFT power spectrum of a mean-removed series (no window).
pub fn periodogram_of(series: &[f64]) -> Result<Periodogram> {
    let len = series.len();
    if len < MIN_PERIODOGRAM_LEN {
        return Err(invalid(format!(
            "periodogram needs at least {MIN_PERIODOGRAM_LEN} samples, got {len}"
        )));
    }
    let mean = series.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let power: Vec<f64> = buf[1..=len / 2]
        .iter()
        .map(|c| c.norm_sqr() / len as f64)
        .collect();
    let total: f64 = power.iter().sum();
    let (peak, max) = power
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
    let dominance = if total > 0.0 { max / total } else { 0.0 };
    Ok(Periodogram { power, len, dominance, peak: peak + 1 })
}

/// Periodogram of the shape-class index series (plain 0 .. line 3).
pub fn periodogram(seq: &[ShapeClass]) -> Result<Periodogram> {
    let series: Vec<f64> = seq.iter().map(|s| s.index() as f64).collect();
    periodogram_of(&series)
}

/// Quantiles of the dominance ratio under a no-regularity null.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullBand {
    pub lo: f64,
    pub hi: f64,
    pub median: f64,
    pub draws: usize,
}

impl NullBand {
    pub fn contains(&self, x: f64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }
}

fn band(mut samples: Vec<f64>, coverage: f64) -> NullBand {
    samples.sort_by(f64::total_cmp);
    let q = |p: f64| samples[((samples.len() - 1) as f64 * p).round() as usize];
    let tail = (1.0 - coverage) / 2.0;
    NullBand { lo: q(tail), hi: q(1.0 - tail), median: q(0.5), draws: samples.len() }
}

/// Null band from random reorderings of `seq` (class frequencies kept,
/// ordering destroyed).
pub fn shuffle_null(seq: &[ShapeClass], draws: usize, coverage: f64, seed: u64) -> Result<NullBand> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = seq.to_vec();
    let samples = (0..draws)
        .map(|_| {
            work.shuffle(&mut rng);
            periodogram(&work).map(|p| p.dominance)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(band(samples, coverage))
}

/// Null band for i.i.d. uniform class sequences of length `len`.
pub fn uniform_null(len: usize, draws: usize, coverage: f64, seed: u64) -> Result<NullBand> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..draws)
        .map(|_| {
            let seq: Vec<ShapeClass> = (0..len).map(|_| ShapeClass::ALL[rng.gen_range(0..4)]).collect();
            periodogram(&seq).map(|p| p.dominance)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(band(samples, coverage))
}
