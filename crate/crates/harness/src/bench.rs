//! Monte-Carlo repetitions over synthetic designs.

use std::io::{Read, Write};
use std::time::Instant;

use cot_pi::datagen::{sample_bernoulli_design, sample_covariate_dependent, sample_with_covariate_shift, SyntheticDraw};
use cot_pi::discretize::prepare_samples;
use cot_pi::estimator::{estimate, mean_sd, BoundKind, EstimatorConfig, PiInterval, PropensitySource};
use cot_pi::oracles::gaussian_vc;
use cot_pi::reweight::PropensityModel;
use cot_pi::rng::derive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CostChoice, DesignKind, ErrorMetric, ModelId, PropensityChoice, Settings};
use crate::error::{HarnessError, Result};

/// One repetition of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub design: String,
    pub n: usize,
    pub n0: usize,
    pub n1: usize,
    pub c: f64,
    pub r: f64,
    pub rep: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub oracle: Option<f64>,
    pub rel_error: Option<f64>,
    pub abs_error: Option<f64>,
    pub wall_ms: f64,
    pub seed: u64,
}

/// Aggregate over the repetitions of one `(n, c)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub c: f64,
    pub reps: usize,
    pub mean_lower: Option<f64>,
    pub mean_upper: Option<f64>,
    pub mean_error: Option<f64>,
    /// Standard error of the mean error; empty when `reps = 1`.
    pub sem: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub oracle: Option<f64>,
    pub notices: Vec<String>,
}

/// Population lower bound for the built-in models under squared cost.
pub fn oracle_lower(settings: &Settings) -> Result<Option<f64>> {
    if settings.cost != CostChoice::Squared {
        return Ok(None);
    }
    Ok(Some(match settings.model {
        // (1.6 + 0.6)^2 E[Z^2]
        ModelId::Linear => 4.84,
        // (0.6 + 0.2)^2 E[Z^4]
        ModelId::Quadratic => 1.92,
        ModelId::Scale => gaussian_vc(&settings.model.spec(), settings.oracle_mc, 0)?.value,
    }))
}

pub fn draw(settings: &Settings, n: usize, seed: u64) -> Result<SyntheticDraw> {
    let design = settings.synthetic(n, seed);
    Ok(match settings.design {
        DesignKind::Bernoulli | DesignKind::BernoulliTotal => sample_bernoulli_design(&design)?,
        DesignKind::Covariate => sample_covariate_dependent(&design)?,
        DesignKind::Shift => sample_with_covariate_shift(&design)?,
    })
}

/// Estimates on a synthetic draw, attaching the design's own propensity
/// when it is treated as known.
pub fn estimate_draw(settings: &Settings, draw: &SyntheticDraw, c: f64, seed: u64) -> Result<(PiInterval, f64)> {
    let (s0, s1, record) = prepare_samples(&draw.control, &draw.treated)?;
    let mut cfg: EstimatorConfig = settings.estimator(c, seed);
    if settings.design == DesignKind::Covariate && settings.propensity == PropensityChoice::Known {
        let e = settings.assignment().as_fn();
        cfg.propensity = PropensitySource::Known(PropensityModel::known_raw(
            move |z: &[f64]| e(z),
            record,
            settings.clip_eta,
        )?);
    }
    let r = cfg.rate_for(s0.d_z(), s0.d_y());
    Ok((estimate(&s0, &s1, &settings.cost.spec(), &cfg)?, r))
}

fn run_one(settings: &Settings, oracle: Option<f64>, n: usize, c: f64, rep: usize, seed: u64) -> Result<ResultRow> {
    let start = Instant::now();
    let d = draw(settings, n, seed)?;
    let (est, r) = estimate_draw(settings, &d, c, seed)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let target = match settings.bound {
        BoundKind::Upper => None,
        _ => est.lower,
    };
    let (rel_error, abs_error) = match (target, oracle) {
        (Some(v), Some(o)) => (Some((v - o).abs() / o.abs()), Some((v - o).abs())),
        _ => (None, None),
    };
    Ok(ResultRow {
        model: settings.model.to_string(),
        design: settings.design.to_string(),
        n,
        n0: d.control.len(),
        n1: d.treated.len(),
        c,
        r,
        rep,
        lower: est.lower,
        upper: est.upper,
        oracle,
        rel_error,
        abs_error,
        wall_ms,
        seed,
    })
}

/// Seed of repetition `rep` at the `point`-th size. Every cell constant
/// sees the same draws.
pub fn rep_seed(seed: u64, point: usize, rep: usize) -> u64 {
    derive(derive(seed, point as u64), rep as u64)
}

fn mean_of(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = v.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean_sd(&v).0)
}

/// Per-grid-point aggregates; rows must be in grid order.
pub fn summarize(rows: &[ResultRow], metric: ErrorMetric) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let (n, c) = (rows[start].n, rows[start].c);
        let end = start + rows[start..].iter().take_while(|r| r.n == n && r.c == c).count();
        let group = &rows[start..end];
        let errors: Option<Vec<f64>> = group
            .iter()
            .map(|r| match metric {
                ErrorMetric::Relative => r.rel_error,
                ErrorMetric::Absolute => r.abs_error,
            })
            .collect();
        let (mean_error, sem) = match errors {
            Some(e) => {
                let (m, sd) = mean_sd(&e);
                let sem = (e.len() > 1).then(|| sd / (e.len() as f64).sqrt());
                (Some(m), sem)
            }
            None => (None, None),
        };
        out.push(SummaryRow {
            n,
            c,
            reps: group.len(),
            mean_lower: mean_of(group.iter().map(|r| r.lower)),
            mean_upper: mean_of(group.iter().map(|r| r.upper)),
            mean_error,
            sem,
        });
        start = end;
    }
    out
}

/// Runs every repetition of every `(n, c)` grid point on `settings.jobs`
/// threads. Results do not depend on the thread count.
pub fn run_benchmark(settings: &Settings) -> Result<BenchmarkReport> {
    settings.validate()?;
    let oracle = oracle_lower(settings)?;
    let mut notices = Vec::new();
    if oracle.is_none() {
        notices.push(format!(
            "no population oracle for cost {:?} on model {}; error columns omitted",
            settings.cost, settings.model
        ));
    }
    let mut tasks = Vec::new();
    for (point, &n) in settings.sizes.iter().enumerate() {
        for &c in &settings.c {
            for rep in 0..settings.reps {
                tasks.push((n, c, rep, rep_seed(settings.seed, point, rep)));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {} workers: {e}", settings.jobs)))?;
    let rows: Vec<ResultRow> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(n, c, rep, seed)| run_one(settings, oracle, n, c, rep, seed))
            .collect::<Result<_>>()
    })?;
    let summary = summarize(&rows, settings.metric);
    Ok(BenchmarkReport {
        rows,
        summary,
        oracle,
        notices,
    })
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Aligned text table of the summary.
pub fn format_summary(summary: &[SummaryRow], metric: ErrorMetric) -> String {
    let label = match metric {
        ErrorMetric::Relative => "rel_error",
        ErrorMetric::Absolute => "abs_error",
    };
    let mut s = format!(
        "{:>7} {:>6} {:>5} {:>10} {:>10} {:>10} {:>10}\n",
        "n", "c", "reps", "lower", "upper", label, "sem"
    );
    for r in summary {
        s.push_str(&format!(
            "{:>7} {:>6} {:>5} {:>10} {:>10} {:>10} {:>10}\n",
            r.n,
            r.c,
            r.reps,
            cell(r.mean_lower),
            cell(r.mean_upper),
            cell(r.mean_error),
            cell(r.sem)
        ));
    }
    s
}
