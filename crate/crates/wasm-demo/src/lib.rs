//! Browser bindings. Each export returns a JSON string; the `*_report`
//! functions hold the logic and are usable natively.

use cot_pi::datagen::{sample_bernoulli_design, Sizes, SyntheticDesign};
use cot_pi::discretize::prepare_samples;
use cot_pi::estimator::{estimate_bernoulli, select_cell_constant, CostSpec, EstimatorConfig};
use cot_pi::oracles::{gaussian_vc, GaussianModelSpec};
use cot_pi::ot::{solve_1d_quantile_ot, solve_1d_quantile_ot_max, CostTag, DiscreteDistribution};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Points {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub lower: f64,
    pub upper: f64,
    /// Population lower bound under squared cost.
    pub oracle: Option<f64>,
    pub cells: [usize; 2],
    pub control: Points,
    pub treated: Points,
}

#[derive(Debug, Serialize)]
pub struct CurveReport {
    pub chosen: f64,
    pub c: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Pair {
    pub x: f64,
    pub y: f64,
    pub mass: f64,
}

#[derive(Debug, Serialize)]
pub struct CouplingReport {
    pub value: f64,
    pub pairs: Vec<Pair>,
}

fn model(name: &str) -> Result<GaussianModelSpec, String> {
    match name {
        "a" | "linear" => Ok(GaussianModelSpec::linear_location()),
        "b" | "quadratic" => Ok(GaussianModelSpec::quadratic_location()),
        "c" | "scale" => Ok(GaussianModelSpec::scale()),
        other => Err(format!("unknown model '{other}'")),
    }
}

fn cost(name: &str) -> Result<(CostSpec, CostTag), String> {
    match name {
        "absolute" => Ok((CostSpec::absolute(), CostTag::Absolute)),
        "squared" => Ok((CostSpec::squared(), CostTag::Squared)),
        other => Err(format!("unknown cost '{other}'")),
    }
}

fn oracle(name: &str, cost: CostTag) -> Result<Option<f64>, String> {
    if cost != CostTag::Squared {
        return Ok(None);
    }
    Ok(Some(match name {
        "a" | "linear" => 4.84,
        "b" | "quadratic" => 1.92,
        _ => gaussian_vc(&model(name)?, 200_000, 0).map_err(|e| e.to_string())?.value,
    }))
}

fn draw(name: &str, n: usize, seed: u32) -> Result<cot_pi::datagen::SyntheticDraw, String> {
    let design = SyntheticDesign::new(model(name)?, Sizes::PerGroup { n0: n, n1: n }, u64::from(seed));
    sample_bernoulli_design(&design).map_err(|e| e.to_string())
}

pub fn estimate_report(model_name: &str, n: usize, c: f64, cost_name: &str, seed: u32) -> Result<EstimateReport, String> {
    let (spec, tag) = cost(cost_name)?;
    let d = draw(model_name, n, seed)?;
    let (s0, s1, _) = prepare_samples(&d.control, &d.treated).map_err(|e| e.to_string())?;
    let cfg = EstimatorConfig::default().with_c(c);
    let est = estimate_bernoulli(&s0, &s1, &spec, &cfg).map_err(|e| e.to_string())?;
    Ok(EstimateReport {
        lower: est.lower.unwrap_or(f64::NAN),
        upper: est.upper.unwrap_or(f64::NAN),
        oracle: oracle(model_name, tag)?,
        cells: est.diagnostics.cells,
        control: Points {
            z: d.control.covariates,
            y: d.control.outcomes,
        },
        treated: Points {
            z: d.treated.covariates,
            y: d.treated.outcomes,
        },
    })
}

pub fn curve_report(
    model_name: &str,
    n: usize,
    candidates: &[f64],
    bootstrap: usize,
    seed: u32,
) -> Result<CurveReport, String> {
    let d = draw(model_name, n, seed)?;
    let (s0, s1, _) = prepare_samples(&d.control, &d.treated).map_err(|e| e.to_string())?;
    let choice = select_cell_constant(
        &s0,
        &s1,
        &CostSpec::squared(),
        &EstimatorConfig::default(),
        candidates,
        bootstrap,
        u64::from(seed),
    )
    .map_err(|e| e.to_string())?;
    Ok(CurveReport {
        chosen: choice.chosen,
        c: choice.curve.iter().map(|p| p.c).collect(),
        mean: choice.curve.iter().map(|p| p.mean).collect(),
        std_error: choice.curve.iter().map(|p| p.std_error).collect(),
    })
}

pub fn coupling_report(x: &[f64], y: &[f64], cost_name: &str, maximize: bool) -> Result<CouplingReport, String> {
    let (_, tag) = cost(cost_name)?;
    let mu = DiscreteDistribution::uniform_scalars(x).map_err(|e| e.to_string())?;
    let nu = DiscreteDistribution::uniform_scalars(y).map_err(|e| e.to_string())?;
    let sol = if maximize {
        solve_1d_quantile_ot_max(&mu, &nu, tag)
    } else {
        solve_1d_quantile_ot(&mu, &nu, tag)
    }
    .map_err(|e| e.to_string())?;
    let pairs = sol
        .coupling
        .entries()
        .iter()
        .map(|&(i, j, mass)| Pair {
            x: mu.point(i)[0],
            y: nu.point(j)[0],
            mass,
        })
        .collect();
    Ok(CouplingReport { value: sol.value, pairs })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// Draws `n` units per arm from a built-in model and estimates the
/// interval with cell constant `c`.
#[wasm_bindgen]
pub fn simulate_and_estimate(model: &str, n: usize, c: f64, cost: &str, seed: u32) -> Result<String, JsError> {
    to_js(estimate_report(model, n, c, cost, seed))
}

/// Bootstrap curve of the lower-bound estimate over the candidate cell
/// constants, with the elbow choice.
#[wasm_bindgen]
pub fn select_c_curve(model: &str, n: usize, candidates: Vec<f64>, bootstrap: usize, seed: u32) -> Result<String, JsError> {
    to_js(curve_report(model, n, &candidates, bootstrap, seed))
}

/// Monotone (or antitone when `maximize`) coupling of two uniform samples.
#[wasm_bindgen]
pub fn quantile_coupling(x: Vec<f64>, y: Vec<f64>, cost: &str, maximize: bool) -> Result<String, JsError> {
    to_js(coupling_report(&x, &y, cost, maximize))
}
