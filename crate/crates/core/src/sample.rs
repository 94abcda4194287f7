//! Observed group data before and after covariate normalization.

use crate::error::{input_err, Result};
use crate::ot::MASS_TOLERANCE;

/// Treatment arm of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Control,
    Treated,
}

impl Group {
    pub fn index(self) -> usize {
        match self {
            Group::Control => 0,
            Group::Treated => 1,
        }
    }

    pub fn from_index(w: usize) -> Result<Self> {
        match w {
            0 => Ok(Group::Control),
            1 => Ok(Group::Treated),
            other => input_err(format!("treatment indicator must be 0 or 1, got {other}")),
        }
    }
}

/// Raw observations of one arm: covariates in their original units.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupData {
    pub group: Group,
    pub d_z: usize,
    pub d_y: usize,
    /// `n x d_z`, row-major.
    pub covariates: Vec<f64>,
    /// `n x d_y`, row-major.
    pub outcomes: Vec<f64>,
    /// Optional unnormalized observation weights.
    pub weights: Option<Vec<f64>>,
}

impl GroupData {
    pub fn new(group: Group, d_z: usize, d_y: usize, covariates: Vec<f64>, outcomes: Vec<f64>) -> Self {
        Self {
            group,
            d_z,
            d_y,
            covariates,
            outcomes,
            weights: None,
        }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len().checked_div(self.d_y).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn covariate(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.d_z..(i + 1) * self.d_z]
    }

    pub fn outcome(&self, i: usize) -> &[f64] {
        &self.outcomes[i * self.d_y..(i + 1) * self.d_y]
    }
}

/// One arm with covariates in the unit cube and probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    group: Group,
    d_z: usize,
    d_y: usize,
    covariates: Vec<f64>,
    outcomes: Vec<f64>,
    weights: Vec<f64>,
    uniform: bool,
}

impl WeightedSample {
    pub fn new(
        group: Group,
        d_z: usize,
        d_y: usize,
        covariates: Vec<f64>,
        outcomes: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if d_z == 0 || d_y == 0 {
            return input_err("covariate and outcome dimensions must be positive");
        }
        let n = weights.len();
        if n == 0 {
            return input_err(format!("{group:?} sample is empty"));
        }
        if covariates.len() != n * d_z || outcomes.len() != n * d_y {
            return input_err(format!(
                "{n} weights but {} covariate and {} outcome values (d_z={d_z}, d_y={d_y})",
                covariates.len(),
                outcomes.len()
            ));
        }
        if let Some(k) = covariates.iter().position(|z| !(0.0..=1.0).contains(z)) {
            return input_err(format!(
                "covariate {} of row {} is outside [0, 1]; normalize first",
                covariates[k],
                k / d_z
            ));
        }
        if let Some(k) = outcomes.iter().position(|y| !y.is_finite()) {
            return input_err(format!("non-finite outcome in row {}", k / d_y));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return input_err(format!("invalid observation weight {w}"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return input_err(format!("observation weights sum to {total}, expected 1"));
        }
        let uniform = weights.iter().all(|w| *w == weights[0]);
        Ok(Self {
            group,
            d_z,
            d_y,
            covariates,
            outcomes,
            weights,
            uniform,
        })
    }

    /// Equal weights `1/n`.
    pub fn uniform(group: Group, d_z: usize, d_y: usize, covariates: Vec<f64>, outcomes: Vec<f64>) -> Result<Self> {
        let n = outcomes.len().checked_div(d_y).unwrap_or(0);
        Self::new(group, d_z, d_y, covariates, outcomes, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn covariate(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.d_z..(i + 1) * self.d_z]
    }

    pub fn outcome(&self, i: usize) -> &[f64] {
        &self.outcomes[i * self.d_y..(i + 1) * self.d_y]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every observation carries the same weight.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Rows `idx` with uniform weights.
    pub fn subsample(&self, idx: &[usize]) -> Result<Self> {
        let mut z = Vec::with_capacity(idx.len() * self.d_z);
        let mut y = Vec::with_capacity(idx.len() * self.d_y);
        for &i in idx {
            z.extend_from_slice(self.covariate(i));
            y.extend_from_slice(self.outcome(i));
        }
        Self::uniform(self.group, self.d_z, self.d_y, z, y)
    }

    /// Same observations under new weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(
            self.group,
            self.d_z,
            self.d_y,
            self.covariates.clone(),
            self.outcomes.clone(),
            weights,
        )
    }

    /// Outcomes shifted by a constant vector, for invariance checks.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self> {
        Self::new(
            self.group,
            self.d_z,
            self.d_y,
            self.covariates.clone(),
            outcomes,
            self.weights.clone(),
        )
    }
}
