//! Bodies of the `estimate`, `simulate`, and `select-c` subcommands.

use std::io::Write;
use std::path::Path;

use cot_pi::datagen::SyntheticDraw;
use cot_pi::discretize::prepare_samples;
use cot_pi::estimator::{estimate, select_cell_constant, CellConstantChoice, PiInterval};
use cot_pi::sample::GroupData;
use serde::Serialize;

use crate::bench;
use crate::config::{DesignKind, PropensityChoice, Settings};
use crate::error::{config, Result};
use crate::input::read_groups_path;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub c: f64,
    pub r: f64,
    pub n0: usize,
    pub n1: usize,
    pub cells0: usize,
    pub cells1: usize,
    pub coupling_support: usize,
    pub clip_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub row: EstimateRow,
    pub interval: PiInterval,
}

/// Runs the configured estimator on observed groups.
pub fn estimate_groups(settings: &Settings, g0: &GroupData, g1: &GroupData) -> Result<EstimateReport> {
    let c = settings.single_c()?;
    if settings.design == DesignKind::Covariate && settings.propensity == PropensityChoice::Known {
        return config("a known propensity is only available for synthetic designs; set propensity = fit");
    }
    let (s0, s1, _) = prepare_samples(g0, g1)?;
    let cfg = settings.estimator(c, settings.seed);
    let interval = estimate(&s0, &s1, &settings.cost.spec(), &cfg)?;
    let d = &interval.diagnostics;
    let row = EstimateRow {
        lower: interval.lower,
        upper: interval.upper,
        c,
        r: cfg.rate_for(s0.d_z(), s0.d_y()),
        n0: s0.len(),
        n1: s1.len(),
        cells0: d.cells[0],
        cells1: d.cells[1],
        coupling_support: d.coupling_support,
        clip_count: d.clip_count,
    };
    Ok(EstimateReport { row, interval })
}

pub fn cmd_estimate(settings: &Settings, input: &Path) -> Result<EstimateReport> {
    let (g0, g1) = read_groups_path(input)?;
    estimate_groups(settings, &g0, &g1)
}

fn side(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

pub fn format_estimate(report: &EstimateReport) -> String {
    let r = &report.row;
    let mut s = format!(
        "interval  [{}, {}]\nc={} r={:.4} n0={} n1={} cells=({}, {}) support={} clipped={}\n",
        side(r.lower),
        side(r.upper),
        r.c,
        r.r,
        r.n0,
        r.n1,
        r.cells0,
        r.cells1,
        r.coupling_support,
        r.clip_count
    );
    for w in &report.interval.diagnostics.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s
}

/// One synthetic draw at the first configured size.
pub fn cmd_simulate(settings: &Settings) -> Result<SyntheticDraw> {
    settings.validate()?;
    bench::draw(settings, settings.sizes[0], settings.seed)
}

/// Elbow selection on a data file, or on one synthetic draw when no file
/// is given.
pub fn cmd_select_c(settings: &Settings, input: Option<&Path>) -> Result<CellConstantChoice> {
    settings.validate()?;
    let (g0, g1) = match input {
        Some(p) => read_groups_path(p)?,
        None => {
            let d = bench::draw(settings, settings.sizes[0], settings.seed)?;
            (d.control, d.treated)
        }
    };
    if settings.design == DesignKind::Covariate && settings.propensity == PropensityChoice::Known {
        return config("select-c fits the propensity; set propensity = fit");
    }
    let (s0, s1, _) = prepare_samples(&g0, &g1)?;
    let cfg = settings.estimator(settings.candidates[0], settings.seed);
    Ok(select_cell_constant(
        &s0,
        &s1,
        &settings.cost.spec(),
        &cfg,
        &settings.candidates,
        settings.bootstrap,
        settings.seed,
    )?)
}

#[derive(Serialize)]
struct CurveRow {
    c: f64,
    mean: f64,
    std_error: f64,
    chosen: bool,
}

pub fn write_curve<W: Write>(out: W, choice: &CellConstantChoice) -> Result<()> {
    let rows: Vec<CurveRow> = choice
        .curve
        .iter()
        .map(|p| CurveRow {
            c: p.c,
            mean: p.mean,
            std_error: p.std_error,
            chosen: p.c == choice.chosen,
        })
        .collect();
    bench::write_rows(out, &rows)
}
