//! Propensity models, group-wise self-normalized cell weights, and the
//! two-fold split used for cross-fitting.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::discretize::{CellGrid, NormalizationRecord};
use crate::error::{config_err, input_err, Result};
use crate::rng;
use crate::sample::{Group, WeightedSample};

pub const DEFAULT_CLIP_ETA: f64 = 0.05;

type PropensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Known(PropensityFn),
    Logistic { intercept: f64, coef: Vec<f64> },
    Constant(f64),
}

/// Treatment probability `e(z)` evaluated on unit-cube covariates and
/// clipped to `[clip_eta, 1 - clip_eta]`.
#[derive(Clone)]
pub struct PropensityModel {
    kind: Kind,
    clip_eta: f64,
    trained_on: Option<usize>,
    degenerate: bool,
}

impl fmt::Debug for PropensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::Known(_) => "known".to_string(),
            Kind::Logistic { intercept, coef } => format!("logistic({intercept}, {coef:?})"),
            Kind::Constant(p) => format!("constant({p})"),
        };
        f.debug_struct("PropensityModel")
            .field("kind", &kind)
            .field("clip_eta", &self.clip_eta)
            .field("trained_on", &self.trained_on)
            .field("degenerate", &self.degenerate)
            .finish()
    }
}

fn check_eta(clip_eta: f64) -> Result<()> {
    if !(clip_eta > 0.0 && clip_eta < 0.5) {
        return config_err(format!("clip_eta={clip_eta} must lie in (0, 0.5)"));
    }
    Ok(())
}

impl PropensityModel {
    /// Wraps a closed-form propensity on unit-cube coordinates.
    pub fn known<F>(f: F, clip_eta: f64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        check_eta(clip_eta)?;
        Ok(Self {
            kind: Kind::Known(Arc::new(f)),
            clip_eta,
            trained_on: None,
            degenerate: false,
        })
    }

    /// Wraps a propensity stated in raw covariate units; unit-cube inputs
    /// are mapped back through `record` before evaluation.
    pub fn known_raw<F>(f: F, record: NormalizationRecord, clip_eta: f64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::known(move |u: &[f64]| f(&record.invert(u)), clip_eta)
    }

    pub fn constant(p: f64, clip_eta: f64) -> Result<Self> {
        check_eta(clip_eta)?;
        Ok(Self {
            kind: Kind::Constant(p),
            clip_eta,
            trained_on: None,
            degenerate: false,
        })
    }

    pub fn clip_eta(&self) -> f64 {
        self.clip_eta
    }

    /// Fold whose data fitted this model, if it was fitted.
    pub fn trained_on(&self) -> Option<usize> {
        self.trained_on
    }

    pub fn with_provenance(mut self, fold: usize) -> Self {
        self.trained_on = Some(fold);
        self
    }

    /// Set when fitting fell back to a constant because only one class was
    /// present.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn coefficients(&self) -> Option<(f64, &[f64])> {
        match &self.kind {
            Kind::Logistic { intercept, coef } => Some((*intercept, coef)),
            _ => None,
        }
    }

    pub fn raw(&self, z: &[f64]) -> f64 {
        match &self.kind {
            Kind::Known(f) => f(z),
            Kind::Logistic { intercept, coef } => {
                sigmoid(intercept + coef.iter().zip(z).map(|(b, x)| b * x).sum::<f64>())
            }
            Kind::Constant(p) => *p,
        }
    }

    /// Clipped value and whether clipping was active.
    pub fn evaluate(&self, z: &[f64]) -> (f64, bool) {
        let p = self.raw(z);
        let (lo, hi) = (self.clip_eta, 1.0 - self.clip_eta);
        if p.is_nan() {
            return (0.5, true);
        }
        let c = p.clamp(lo, hi);
        (c, c != p)
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Weights from the clipped propensity at each occupied cell's center,
/// `1/(1 - e)` for controls and `1/e` for treated units, normalized over
/// the group. Returns the weights and the number of cells where clipping
/// was active.
pub fn cell_weights(
    sample: &WeightedSample,
    grid: &CellGrid,
    model: &PropensityModel,
    group: Group,
) -> Result<(Vec<f64>, usize)> {
    if sample.is_empty() {
        return input_err("cannot weight an empty sample");
    }
    let mut cell_of = Vec::with_capacity(sample.len());
    let mut raw_of_cell = std::collections::BTreeMap::new();
    let mut clipped = 0;
    for i in 0..sample.len() {
        let (cell, center) = grid.project(sample.covariate(i))?;
        cell_of.push(cell);
        raw_of_cell.entry(cell).or_insert_with(|| {
            let (e, was_clipped) = model.evaluate(&center);
            clipped += usize::from(was_clipped);
            match group {
                Group::Control => 1.0 / (1.0 - e),
                Group::Treated => 1.0 / e,
            }
        });
    }
    // Relative to the largest raw weight, so equal raws give exactly 1/n.
    let top = raw_of_cell.values().fold(0.0_f64, |a, &b| a.max(b));
    let rel: Vec<f64> = cell_of.iter().map(|c| raw_of_cell[c] / top).collect();
    let denom: f64 = rel.iter().sum();
    Ok((rel.iter().map(|r| r / denom).collect(), clipped))
}

/// Fold label (0 or 1) of every unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<u8>,
}

impl FoldAssignment {
    pub fn fold_of(&self) -> &[u8] {
        &self.fold_of
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn members(&self, fold: u8) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn sizes(&self) -> (usize, usize) {
        let a = self.fold_of.iter().filter(|f| **f == 0).count();
        (a, self.fold_of.len() - a)
    }
}

/// Random halving of `0..n`; the first fold takes the extra unit when `n`
/// is odd.
pub fn split_folds(n: usize, seed: u64) -> Result<FoldAssignment> {
    if n < 2 {
        return input_err(format!("cross-fitting needs at least 2 units, got {n}"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, 0xF01D));
    let mut fold_of = vec![1u8; n];
    for &i in &perm[..n.div_ceil(2)] {
        fold_of[i] = 0;
    }
    Ok(FoldAssignment { fold_of })
}

const IRLS_MAX_ITER: usize = 200;
const IRLS_GRAD_TOL: f64 = 1e-8;

/// Logistic regression with intercept fitted by Newton-IRLS.
///
/// Single-class training data yields a constant model at the clipped
/// empirical rate, flagged as degenerate.
pub fn fit_propensity(
    covariates: &[f64],
    d_z: usize,
    treated: &[bool],
    clip_eta: f64,
) -> Result<PropensityModel> {
    check_eta(clip_eta)?;
    let n = treated.len();
    if n == 0 || d_z == 0 || covariates.len() != n * d_z {
        return input_err("propensity training data has inconsistent shape");
    }
    let n1 = treated.iter().filter(|t| **t).count();
    if n1 == 0 || n1 == n {
        let rate = (n1 as f64 / n as f64).clamp(clip_eta, 1.0 - clip_eta);
        let mut m = PropensityModel::constant(rate, clip_eta)?;
        m.degenerate = true;
        return Ok(m);
    }

    let p = d_z + 1;
    let x = DMatrix::from_fn(n, p, |i, k| if k == 0 { 1.0 } else { covariates[i * d_z + k - 1] });
    let y = DVector::from_iterator(n, treated.iter().map(|&t| f64::from(u8::from(t))));
    let mut beta = DVector::zeros(p);
    beta[0] = (n1 as f64 / (n - n1) as f64).ln();

    for _ in 0..IRLS_MAX_ITER {
        let eta = &x * &beta;
        let mu = eta.map(sigmoid);
        let grad = x.transpose() * (&y - &mu);
        if grad.amax() / n as f64 <= IRLS_GRAD_TOL {
            break;
        }
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let mut xtwx = DMatrix::zeros(p, p);
        for i in 0..n {
            let row = x.row(i);
            xtwx += w[i] * row.transpose() * row;
        }
        for k in 0..p {
            xtwx[(k, k)] += 1e-10;
        }
        let Some(step) = xtwx.cholesky().map(|c| c.solve(&grad)) else {
            break;
        };
        beta += step;
        if !beta.iter().all(|b| b.is_finite()) {
            return Err(crate::CotError::Numerical("logistic fit diverged".into()));
        }
    }
    Ok(PropensityModel {
        kind: Kind::Logistic {
            intercept: beta[0],
            coef: beta.iter().skip(1).copied().collect(),
        },
        clip_eta,
        trained_on: None,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cell_sample() -> (WeightedSample, CellGrid) {
        let s = WeightedSample::uniform(Group::Control, 1, 1, vec![0.2, 0.7], vec![0.0, 1.0]).unwrap();
        (s, CellGrid::new(1, 2).unwrap())
    }

    #[test]
    fn hand_evaluated_control_weights() {
        let (s, g) = two_cell_sample();
        let model = PropensityModel::known(|z: &[f64]| if z[0] < 0.5 { 0.5 } else { 0.75 }, 0.05).unwrap();
        let (w, clipped) = cell_weights(&s, &g, &model, Group::Control).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(clipped, 0);
    }

    #[test]
    fn constant_propensity_is_uniform() {
        let s = WeightedSample::uniform(Group::Treated, 1, 1, vec![0.1, 0.3, 0.35, 0.9, 0.6], vec![0.0; 5])
            .unwrap();
        let model = PropensityModel::constant(0.3, 0.05).unwrap();
        for m in 1..5 {
            let (w, _) = cell_weights(&s, &CellGrid::new(1, m).unwrap(), &model, Group::Treated).unwrap();
            assert!(w.iter().all(|v| *v == 0.2));
        }
        let varying = PropensityModel::known(|z: &[f64]| 0.2 + 0.5 * z[0], 0.05).unwrap();
        let (w, _) = cell_weights(&s, &CellGrid::new(1, 1).unwrap(), &varying, Group::Treated).unwrap();
        assert!(w.iter().all(|v| *v == 0.2));
    }

    #[test]
    fn clipping_is_counted() {
        let (s, g) = two_cell_sample();
        let model = PropensityModel::known(|z: &[f64]| if z[0] < 0.5 { 0.0 } else { 1.2 }, 0.1).unwrap();
        let (w, clipped) = cell_weights(&s, &g, &model, Group::Treated).unwrap();
        assert_eq!(clipped, 2);
        // raws 1/0.1 and 1/0.9
        assert!((w[0] - 0.9).abs() < 1e-12);
        assert!(model.evaluate(&[0.0]).0 >= 0.1 && model.evaluate(&[1.0]).0 <= 0.9);
    }

    #[test]
    fn folds() {
        let f = split_folds(4, 1).unwrap();
        assert_eq!(f.sizes(), (2, 2));
        let f = split_folds(5, 9).unwrap();
        let (a, b) = f.sizes();
        assert_eq!(a + b, 5);
        assert!(a.abs_diff(b) <= 1);
        assert_eq!(split_folds(101, 3).unwrap(), split_folds(101, 3).unwrap());
        assert_ne!(split_folds(101, 3).unwrap(), split_folds(101, 4).unwrap());
        assert!(split_folds(1, 0).is_err());
    }

    #[test]
    fn single_class_falls_back() {
        let m = fit_propensity(&[0.1, 0.2, 0.3], 1, &[true, true, true], 0.05).unwrap();
        assert!(m.is_degenerate());
        assert_eq!(m.evaluate(&[0.5]).0, 0.95);
        assert!(fit_propensity(&[0.1], 1, &[true], 0.6).is_err());
    }
}
