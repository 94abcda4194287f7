//! Samplers for synthetic Gaussian designs with known population bounds.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config_err, input_err, Result};
use crate::oracles::{sqrt_psd, GaussianModelSpec, NoiseModel};
use crate::rng;
use crate::sample::{Group, GroupData};

type PropensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// How units are assigned to treatment.
#[derive(Clone)]
pub enum Assignment {
    /// Constant probability `p`.
    Bernoulli(f64),
    /// `e(z) = 1 / (1 + exp(-slope * z_1))`.
    Logistic { slope: f64 },
    Custom(PropensityFn),
}

impl fmt::Debug for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assignment::Bernoulli(p) => write!(f, "Bernoulli({p})"),
            Assignment::Logistic { slope } => write!(f, "Logistic({slope})"),
            Assignment::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Assignment {
    /// Treatment probability at a raw covariate.
    pub fn propensity(&self, z: &[f64]) -> f64 {
        match self {
            Assignment::Bernoulli(p) => *p,
            Assignment::Logistic { slope } => 1.0 / (1.0 + (-slope * z[0]).exp()),
            Assignment::Custom(f) => f(z),
        }
    }

    /// The same probability as a shareable closure.
    pub fn as_fn(&self) -> PropensityFn {
        let a = self.clone();
        Arc::new(move |z: &[f64]| a.propensity(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sizes {
    /// Each arm drawn separately at a fixed size.
    PerGroup { n0: usize, n1: usize },
    /// `N` units, each assigned at random.
    Total(usize),
}

#[derive(Debug, Clone)]
pub struct SyntheticDesign {
    pub model: GaussianModelSpec,
    pub assignment: Assignment,
    /// Treated covariates are `Z + shift_eta * eps` with independent
    /// standard normal `eps`.
    pub shift_eta: f64,
    pub sizes: Sizes,
    pub seed: u64,
}

impl SyntheticDesign {
    pub fn new(model: GaussianModelSpec, sizes: Sizes, seed: u64) -> Self {
        Self {
            model,
            assignment: Assignment::Bernoulli(0.5),
            shift_eta: 0.0,
            sizes,
            seed,
        }
    }

    pub fn with_assignment(mut self, assignment: Assignment) -> Self {
        self.assignment = assignment;
        self
    }

    pub fn with_shift(mut self, eta: f64) -> Self {
        self.shift_eta = eta;
        self
    }

    fn validate(&self) -> Result<()> {
        if let Assignment::Bernoulli(p) = self.assignment {
            if !(p > 0.0 && p < 1.0) {
                return config_err(format!("assignment probability {p} must lie in (0, 1)"));
            }
        }
        if !(self.shift_eta >= 0.0 && self.shift_eta.is_finite()) {
            return config_err(format!("shift_eta={} must be nonnegative", self.shift_eta));
        }
        Ok(())
    }
}

/// Observed arms of one synthetic draw, covariates in raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDraw {
    pub control: GroupData,
    pub treated: GroupData,
}

struct OutcomeSampler {
    model: NoiseModel,
    roots: [DMatrix<f64>; 2],
}

impl OutcomeSampler {
    fn new(spec: &GaussianModelSpec) -> Result<Self> {
        Ok(Self {
            model: spec.model,
            roots: [sqrt_psd(&spec.sigma0)?, sqrt_psd(&spec.sigma1)?],
        })
    }

    fn draw(&self, spec: &GaussianModelSpec, w: usize, z: &[f64], rng: &mut rng::Rng) -> Vec<f64> {
        let d = spec.d_y();
        let f = if w == 0 { (spec.f0)(z) } else { (spec.f1)(z) };
        let raw = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let eps = &self.roots[w] * raw;
        match self.model {
            NoiseModel::Location => f.iter().zip(eps.iter()).map(|(a, e)| a + e).collect(),
            NoiseModel::Scale => f.iter().zip(eps.iter()).map(|(a, e)| a * e).collect(),
        }
    }
}

struct Builder {
    d_z: usize,
    d_y: usize,
    z: [Vec<f64>; 2],
    y: [Vec<f64>; 2],
}

impl Builder {
    fn new(spec: &GaussianModelSpec) -> Self {
        Self {
            d_z: spec.d_z(),
            d_y: spec.d_y(),
            z: Default::default(),
            y: Default::default(),
        }
    }

    fn push(&mut self, w: usize, z: &[f64], y: &[f64]) {
        self.z[w].extend_from_slice(z);
        self.y[w].extend_from_slice(y);
    }

    fn finish(self) -> SyntheticDraw {
        let [z0, z1] = self.z;
        let [y0, y1] = self.y;
        SyntheticDraw {
            control: GroupData::new(Group::Control, self.d_z, self.d_y, z0, y0),
            treated: GroupData::new(Group::Treated, self.d_z, self.d_y, z1, y1),
        }
    }
}

fn shifted(z: Vec<f64>, eta: f64, rng: &mut rng::Rng) -> Vec<f64> {
    if eta == 0.0 {
        return z;
    }
    z.into_iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(rng);
            v + eta * e
        })
        .collect()
}

fn per_group(design: &SyntheticDesign, n0: usize, n1: usize) -> Result<SyntheticDraw> {
    let spec = &design.model;
    let outcomes = OutcomeSampler::new(spec)?;
    let mut b = Builder::new(spec);
    for (w, n) in [(0, n0), (1, n1)] {
        let mut rng = rng::stream(design.seed, w as u64);
        for _ in 0..n {
            let mut z = spec.z_law.sample(&mut rng);
            if w == 1 {
                z = shifted(z, design.shift_eta, &mut rng);
            }
            let y = outcomes.draw(spec, w, &z, &mut rng);
            b.push(w, &z, &y);
        }
    }
    Ok(b.finish())
}

/// Draws `n` units with both potential outcomes, assigns treatment by the
/// design's propensity, and keeps only the realized outcome.
fn assigned_units(design: &SyntheticDesign, n: usize) -> Result<SyntheticDraw> {
    let spec = &design.model;
    let outcomes = OutcomeSampler::new(spec)?;
    let mut b = Builder::new(spec);
    let mut rng = rng::stream(design.seed, 2);
    for _ in 0..n {
        let z = spec.z_law.sample(&mut rng);
        let y0 = outcomes.draw(spec, 0, &z, &mut rng);
        let y1 = outcomes.draw(spec, 1, &z, &mut rng);
        let treated = rng.random::<f64>() < design.assignment.propensity(&z);
        if treated {
            b.push(1, &z, &y1);
        } else {
            b.push(0, &z, &y0);
        }
    }
    let draw = b.finish();
    if draw.control.is_empty() || draw.treated.is_empty() {
        return input_err(format!("a treatment group is empty after assigning {n} units"));
    }
    Ok(draw)
}

/// Randomized design: covariates and noise drawn independently per arm
/// (`PerGroup`), or `N` units assigned with the design's probability
/// (`Total`).
pub fn sample_bernoulli_design(design: &SyntheticDesign) -> Result<SyntheticDraw> {
    design.validate()?;
    match design.sizes {
        Sizes::PerGroup { n0, n1 } => {
            if n0 == 0 || n1 == 0 {
                return config_err("group sizes must be positive");
            }
            per_group(&SyntheticDesign { shift_eta: 0.0, ..design.clone() }, n0, n1)
        }
        Sizes::Total(n) => {
            if n < 2 {
                return config_err("need at least two units");
            }
            assigned_units(&SyntheticDesign { shift_eta: 0.0, ..design.clone() }, n)
        }
    }
}

/// Observational design: `N` units, treatment drawn from `e(Z)`.
pub fn sample_covariate_dependent(design: &SyntheticDesign) -> Result<SyntheticDraw> {
    design.validate()?;
    let Sizes::Total(n) = design.sizes else {
        return config_err("covariate-dependent assignment needs a total unit count");
    };
    if n < 2 {
        return config_err("need at least two units");
    }
    assigned_units(design, n)
}

/// Per-arm draws where the treated covariates are perturbed by
/// `shift_eta` times independent standard normal noise.
pub fn sample_with_covariate_shift(design: &SyntheticDesign) -> Result<SyntheticDraw> {
    design.validate()?;
    let Sizes::PerGroup { n0, n1 } = design.sizes else {
        return config_err("covariate shift needs per-group sizes");
    };
    if n0 == 0 || n1 == 0 {
        return config_err("group sizes must be positive");
    }
    per_group(design, n0, n1)
}
