//! Adapted conditional-optimal-transport estimator of partial-identification
//! bounds for `E[h(Y(0), Y(1))]`.
//!
//! Each arm is discretized on its own grid, the two cell marginals are
//! matched by an optimal Wasserstein-1 coupling, and every matched cell
//! pair contributes the optimal (or, for the upper bound, the worst)
//! transport cost between its outcome laws, weighted by the matched mass.

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;

use crate::discretize::{build_adapted_empirical, build_grid, AdaptedEmpirical};
use crate::error::{config_err, input_err, CotError, Result};
use crate::ot::{
    self, quantile, solve_exact_ot, solve_exact_ot_max, CostMatrix, DiscreteDistribution, OtSolution,
};
use crate::reweight::{cell_weights, fit_propensity, split_folds, PropensityModel, DEFAULT_CLIP_ETA};
use crate::rng;
use crate::sample::{Group, WeightedSample};

type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CostKind {
    /// `|y0 - y1|`, Euclidean norm for vector outcomes.
    AbsoluteDifference,
    /// `|y0 - y1|^2`.
    SquaredDifference,
    /// `-|y0 + y1|^2`.
    NegativeSquaredSum,
    Custom(CostFn),
}

/// The objective `h(y0, y1)`.
#[derive(Clone)]
pub struct CostSpec {
    pub kind: CostKind,
    pub lipschitz_hint: Option<f64>,
    /// Allows the monotone-rearrangement shortcut for scalar outcomes. Only
    /// sound when `h(y0, y1) = phi(y0 - y1)` with `phi` convex.
    pub convex_1d: bool,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl CostSpec {
    pub fn absolute() -> Self {
        Self {
            kind: CostKind::AbsoluteDifference,
            lipschitz_hint: Some(1.0),
            convex_1d: true,
        }
    }

    pub fn squared() -> Self {
        Self {
            kind: CostKind::SquaredDifference,
            lipschitz_hint: None,
            convex_1d: true,
        }
    }

    pub fn negative_squared_sum() -> Self {
        Self {
            kind: CostKind::NegativeSquaredSum,
            lipschitz_hint: None,
            convex_1d: false,
        }
    }

    pub fn custom<F>(f: F, convex_1d: bool) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: CostKind::Custom(Arc::new(f)),
            lipschitz_hint: None,
            convex_1d,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            CostKind::AbsoluteDifference => "absolute",
            CostKind::SquaredDifference => "squared",
            CostKind::NegativeSquaredSum => "negative_squared_sum",
            CostKind::Custom(_) => "custom",
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.kind {
            CostKind::AbsoluteDifference => ot::euclidean(a, b),
            CostKind::SquaredDifference => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            CostKind::NegativeSquaredSum => -a.iter().zip(b).map(|(x, y)| (x + y) * (x + y)).sum::<f64>(),
            CostKind::Custom(f) => f(a, b),
        }
    }

    fn matrix(&self, mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<CostMatrix> {
        let mut data = Vec::with_capacity(mu.len() * nu.len());
        for a in mu.points() {
            for b in nu.points() {
                let c = self.eval(a, b);
                if !c.is_finite() {
                    return input_err(format!("cost is {c} at outcome pair ({a:?}, {b:?})"));
                }
                data.push(c);
            }
        }
        CostMatrix::new(mu.len(), nu.len(), data)
    }

    fn transport(&self, mu: &DiscreteDistribution, nu: &DiscreteDistribution, maximize: bool) -> Result<OtSolution> {
        if self.convex_1d && mu.dim() == 1 {
            let sol = quantile::monotone(mu, nu, |a, b| self.eval(&[a], &[b]), maximize);
            if !sol.value.is_finite() {
                return input_err("cost is not finite on the outcome supports");
            }
            return Ok(sol);
        }
        let cost = self.matrix(mu, nu)?;
        if maximize {
            solve_exact_ot_max(mu, nu, &cost)
        } else {
            solve_exact_ot(mu, nu, &cost)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Lower,
    Upper,
    Both,
}

impl BoundKind {
    fn lower(self) -> bool {
        matches!(self, BoundKind::Lower | BoundKind::Both)
    }

    fn upper(self) -> bool {
        matches!(self, BoundKind::Upper | BoundKind::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    Bernoulli,
    CovariateDependent,
}

#[derive(Debug, Clone)]
pub enum PropensitySource {
    Known(PropensityModel),
    /// Logistic regression on the complementary fold.
    Fit { clip_eta: f64 },
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// Rate exponent; `None` selects `1 / (d_z + max(2, d_y))`.
    pub rate: Option<f64>,
    pub cell_constant: f64,
    pub bound: BoundKind,
    pub design: Design,
    pub propensity: PropensitySource,
    pub folds: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            rate: None,
            cell_constant: 1.0,
            bound: BoundKind::Both,
            design: Design::Bernoulli,
            propensity: PropensitySource::Fit {
                clip_eta: DEFAULT_CLIP_ETA,
            },
            folds: 2,
            seed: 0,
        }
    }
}

pub fn default_rate(d_z: usize, d_y: usize) -> f64 {
    1.0 / (d_z + d_y.max(2)) as f64
}

impl EstimatorConfig {
    pub fn rate_for(&self, d_z: usize, d_y: usize) -> f64 {
        self.rate.unwrap_or_else(|| default_rate(d_z, d_y))
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.cell_constant = c;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Occupied cells per group, summed over folds when cross-fitting.
    pub cells: [usize; 2],
    /// Cells per axis of each group's grid (last fold when cross-fitting).
    pub per_axis: [usize; 2],
    /// Positive entries of the covariate coupling, summed over folds.
    pub coupling_support: usize,
    pub clip_count: usize,
    /// `(evaluated fold, fold the propensity was trained on)`.
    pub fold_provenance: Vec<(usize, Option<usize>)>,
    pub warnings: Vec<String>,
}

/// Estimated bounds `[lower, upper]`; a side is `None` when not requested.
#[derive(Debug, Clone, PartialEq)]
pub struct PiInterval {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub diagnostics: Diagnostics,
}

fn check_pair(s0: &WeightedSample, s1: &WeightedSample) -> Result<()> {
    if s0.is_empty() || s1.is_empty() {
        return input_err("both treatment groups need at least one observation");
    }
    if s0.d_z() != s1.d_z() || s0.d_y() != s1.d_y() {
        return input_err(format!(
            "groups disagree on dimensions: (d_z, d_y) = ({}, {}) vs ({}, {})",
            s0.d_z(),
            s0.d_y(),
            s1.d_z(),
            s1.d_y()
        ));
    }
    Ok(())
}

fn check_config(config: &EstimatorConfig, d_z: usize, d_y: usize) -> Result<f64> {
    let r = config.rate_for(d_z, d_y);
    if !(r > 0.0 && r < 1.0) {
        return config_err(format!("rate exponent r={r} must lie in (0, 1)"));
    }
    if !(config.cell_constant > 0.0 && config.cell_constant.is_finite()) {
        return config_err(format!("cell constant c={} must be positive", config.cell_constant));
    }
    Ok(r)
}

/// Optimal Wasserstein-1 coupling of the two cell marginals.
pub fn covariate_coupling(ae0: &AdaptedEmpirical, ae1: &AdaptedEmpirical) -> Result<OtSolution> {
    let (m0, m1) = (ae0.cell_marginal(), ae1.cell_marginal());
    if m0.dim() == 1 {
        // Monotone matching is a W1 optimizer on the line.
        Ok(quantile::monotone(m0, m1, |a, b| (a - b).abs(), false))
    } else {
        ot::wasserstein1(m0, m1)
    }
}

struct CotValue {
    lower: Option<f64>,
    upper: Option<f64>,
    support: usize,
}

/// Integrates per-cell-pair transport values against the covariate coupling.
fn adapted_cot_value(
    ae0: &AdaptedEmpirical,
    ae1: &AdaptedEmpirical,
    cost: &CostSpec,
    bound: BoundKind,
) -> Result<CotValue> {
    let pi = covariate_coupling(ae0, ae1)?;
    let mut lower = 0.0;
    let mut upper = 0.0;
    for &(i, j, mass) in pi.coupling.entries() {
        if mass <= 0.0 {
            continue;
        }
        let (c0, c1) = (ae0.conditional_at(i), ae1.conditional_at(j));
        if bound.lower() {
            lower += mass * cost.transport(c0, c1, false)?.value;
        }
        if bound.upper() {
            upper += mass * cost.transport(c0, c1, true)?.value;
        }
    }
    Ok(CotValue {
        lower: bound.lower().then_some(lower),
        upper: bound.upper().then_some(upper),
        support: pi.coupling.support_size(),
    })
}

fn finish_interval(lower: Option<f64>, upper: Option<f64>, diagnostics: Diagnostics) -> Result<PiInterval> {
    if let (Some(l), Some(u)) = (lower, upper) {
        if l > u + 1e-9 {
            return Err(CotError::Numerical(format!("lower bound {l} exceeds upper bound {u}")));
        }
    }
    Ok(PiInterval {
        lower,
        upper,
        diagnostics,
    })
}

/// Estimator for randomized (Bernoulli) designs. The samples' own weights
/// are used as given; covariates must already be in the unit cube.
pub fn estimate_bernoulli(
    sample0: &WeightedSample,
    sample1: &WeightedSample,
    cost: &CostSpec,
    config: &EstimatorConfig,
) -> Result<PiInterval> {
    check_pair(sample0, sample1)?;
    let r = check_config(config, sample0.d_z(), sample0.d_y())?;
    let c = config.cell_constant;
    let g0 = build_grid(sample0.len(), sample0.d_z(), r, c)?;
    let g1 = build_grid(sample1.len(), sample1.d_z(), r, c)?;
    let ae0 = build_adapted_empirical(sample0, &g0)?;
    let ae1 = build_adapted_empirical(sample1, &g1)?;
    let v = adapted_cot_value(&ae0, &ae1, cost, config.bound)?;
    let diagnostics = Diagnostics {
        cells: [ae0.occupied(), ae1.occupied()],
        per_axis: [g0.per_axis(), g1.per_axis()],
        coupling_support: v.support,
        ..Default::default()
    };
    finish_interval(v.lower, v.upper, diagnostics)
}

/// Splits the pooled units into two folds; unit `k < n0` is control row
/// `k`, otherwise treated row `k - n0`. Returns per fold the control and
/// treated row indices.
pub fn fold_rows(n0: usize, n1: usize, seed: u64) -> Result<[[Vec<usize>; 2]; 2]> {
    let folds = split_folds(n0 + n1, seed)?;
    let mut out: [[Vec<usize>; 2]; 2] = Default::default();
    for (k, &f) in folds.fold_of().iter().enumerate() {
        let (g, i) = if k < n0 { (0, k) } else { (1, k - n0) };
        out[f as usize][g].push(i);
    }
    Ok(out)
}

/// Estimator under covariate-dependent assignment: two-fold cross-fitting
/// with group-wise self-normalized inverse-propensity cell weights. The
/// final interval averages the fold estimates.
pub fn estimate_covariate_dependent(
    sample0: &WeightedSample,
    sample1: &WeightedSample,
    cost: &CostSpec,
    config: &EstimatorConfig,
) -> Result<PiInterval> {
    check_pair(sample0, sample1)?;
    let r = check_config(config, sample0.d_z(), sample0.d_y())?;
    let rows: Vec<[Vec<usize>; 2]> = match (config.folds, &config.propensity) {
        (2, _) => fold_rows(sample0.len(), sample1.len(), config.seed)?.into(),
        (1, PropensitySource::Known(_)) => vec![[(0..sample0.len()).collect(), (0..sample1.len()).collect()]],
        (1, PropensitySource::Fit { .. }) => {
            return config_err("a fitted propensity needs 2 folds for cross-fitting");
        }
        (k, _) => return config_err(format!("folds must be 1 or 2, got {k}")),
    };
    let samples = [sample0, sample1];
    let mut diag = Diagnostics::default();
    let (mut lower, mut upper) = (0.0, 0.0);
    let share = 1.0 / rows.len() as f64;

    for fold in 0..rows.len() {
        let other = 1 - fold;
        let model = match &config.propensity {
            PropensitySource::Known(m) => m.clone(),
            PropensitySource::Fit { clip_eta } => {
                let mut z = Vec::new();
                let mut t = Vec::new();
                for g in 0..2 {
                    for &i in &rows[other][g] {
                        z.extend_from_slice(samples[g].covariate(i));
                        t.push(g == 1);
                    }
                }
                if t.is_empty() {
                    return input_err(format!("fold {other} is empty; cannot fit a propensity model"));
                }
                let m = fit_propensity(&z, sample0.d_z(), &t, *clip_eta)?.with_provenance(other);
                if m.is_degenerate() {
                    diag.warnings.push(format!(
                        "fold {other} holds a single treatment class; using a constant propensity"
                    ));
                }
                m
            }
        };
        diag.fold_provenance.push((fold, model.trained_on()));

        let mut adapted = Vec::with_capacity(2);
        for g in 0..2 {
            let group = if g == 0 { Group::Control } else { Group::Treated };
            if rows[fold][g].is_empty() {
                return input_err(format!("fold {fold} has no {group:?} units"));
            }
            let sub = samples[g].subsample(&rows[fold][g])?;
            let grid = build_grid(sub.len(), sub.d_z(), r, config.cell_constant)?;
            let (w, clipped) = cell_weights(&sub, &grid, &model, group)?;
            diag.clip_count += clipped;
            let ae = build_adapted_empirical(&sub.reweighted(w)?, &grid)?;
            diag.cells[g] += ae.occupied();
            diag.per_axis[g] = grid.per_axis();
            adapted.push(ae);
        }
        let v = adapted_cot_value(&adapted[0], &adapted[1], cost, config.bound)?;
        diag.coupling_support += v.support;
        lower += v.lower.unwrap_or(0.0) * share;
        upper += v.upper.unwrap_or(0.0) * share;
    }
    finish_interval(
        config.bound.lower().then_some(lower),
        config.bound.upper().then_some(upper),
        diag,
    )
}

/// Dispatches on `config.design`.
pub fn estimate(
    sample0: &WeightedSample,
    sample1: &WeightedSample,
    cost: &CostSpec,
    config: &EstimatorConfig,
) -> Result<PiInterval> {
    match config.design {
        Design::Bernoulli => estimate_bernoulli(sample0, sample1, cost, config),
        Design::CovariateDependent => estimate_covariate_dependent(sample0, sample1, cost, config),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub c: f64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellConstantChoice {
    pub chosen: f64,
    pub curve: Vec<CurvePoint>,
}

/// Index of the point farthest from the chord joining the first and last
/// points; ties go to the earliest index.
pub fn elbow_index(xs: &[f64], ys: &[f64]) -> usize {
    let n = xs.len();
    if n < 3 {
        return 0;
    }
    let (x0, y0, x1, y1) = (xs[0], ys[0], xs[n - 1], ys[n - 1]);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let norm = dx.hypot(dy);
    let dist = |k: usize| {
        if norm == 0.0 {
            (xs[k] - x0).hypot(ys[k] - y0)
        } else {
            (dy * (xs[k] - x0) - dx * (ys[k] - y0)).abs() / norm
        }
    };
    let tol = 1e-12 * (norm + 1.0);
    let mut best = 0;
    let mut best_d = dist(0);
    for k in 1..n {
        let d = dist(k);
        if d > best_d + tol {
            best = k;
            best_d = d;
        }
    }
    best
}

fn resample(s: &WeightedSample, rng: &mut rng::Rng) -> Result<WeightedSample> {
    let n = s.len();
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    s.subsample(&idx)
}

/// Bootstrap curve of the mean estimate against the cell constant and its
/// elbow. The lower bound is tracked unless only the upper one is
/// requested. Every candidate sees the same bootstrap resamples.
pub fn select_cell_constant(
    sample0: &WeightedSample,
    sample1: &WeightedSample,
    cost: &CostSpec,
    config: &EstimatorConfig,
    candidates: &[f64],
    bootstrap: usize,
    seed: u64,
) -> Result<CellConstantChoice> {
    if candidates.len() < 3 {
        return config_err(format!("elbow selection needs at least 3 candidates, got {}", candidates.len()));
    }
    if candidates.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return config_err("candidates must be strictly increasing");
    }
    if bootstrap == 0 {
        return config_err("bootstrap count must be positive");
    }
    check_pair(sample0, sample1)?;
    let mut values = vec![Vec::with_capacity(bootstrap); candidates.len()];
    for b in 0..bootstrap {
        let mut rng = rng::stream(seed, b as u64);
        let s0 = resample(sample0, &mut rng)?;
        let s1 = resample(sample1, &mut rng)?;
        for (k, &c) in candidates.iter().enumerate() {
            let cfg = config.clone().with_c(c);
            let est = estimate(&s0, &s1, cost, &cfg)?;
            let v = match config.bound {
                BoundKind::Upper => est.upper,
                _ => est.lower,
            };
            values[k].push(v.expect("requested bound is present"));
        }
    }
    let curve: Vec<CurvePoint> = candidates
        .iter()
        .zip(&values)
        .map(|(&c, v)| {
            let (mean, sd) = mean_sd(v);
            CurvePoint {
                c,
                mean,
                std_error: sd / (v.len() as f64).sqrt(),
            }
        })
        .collect();
    let xs: Vec<f64> = curve.iter().map(|p| p.c).collect();
    let ys: Vec<f64> = curve.iter().map(|p| p.mean).collect();
    Ok(CellConstantChoice {
        chosen: candidates[elbow_index(&xs, &ys)],
        curve,
    })
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for `n = 1`).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Naive plug-in under exact covariate matching: with all covariates
/// distinct, the only coupling that matches covariates exactly pairs row
/// `i` with row `i`, so the value is the mean of `h(Y_i(0), Y_i(1))`.
pub fn plugin_exact_match_estimate(
    sample0: &WeightedSample,
    sample1: &WeightedSample,
    cost: &CostSpec,
) -> Result<f64> {
    check_pair(sample0, sample1)?;
    if sample0.len() != sample1.len() {
        return input_err(format!(
            "exact matching needs equal group sizes, got {} and {}",
            sample0.len(),
            sample1.len()
        ));
    }
    let n = sample0.len();
    let mut total = 0.0;
    for i in 0..n {
        if sample0.covariate(i) != sample1.covariate(i) {
            return input_err(format!("covariates of pair {i} differ"));
        }
        total += cost.eval(sample0.outcome(i), sample1.outcome(i));
    }
    Ok(total / n as f64)
}
