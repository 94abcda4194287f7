//! Population values for Gaussian noise models, used as ground truth.
//!
//! With `h(y0, y1) = |y0 - y1|^2` and Gaussian noise the conditional
//! transport problems reduce to Gaussian Wasserstein-2 distances, so `V_c`
//! is an expectation over the covariate law that Monte Carlo resolves at
//! the parametric rate.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{config_err, input_err, Result};
use crate::estimator::mean_sd;
use crate::rng;

const PSD_FLOOR: f64 = -1e-10;

/// Noise enters additively (`m = 1`) or multiplies coordinatewise (`m = 2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseModel {
    Location,
    Scale,
}

pub type MeanFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ZSampler = Arc<dyn Fn(&mut rng::Rng) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum CovariateLaw {
    StandardNormal { dim: usize },
    Custom { dim: usize, sampler: ZSampler },
}

impl CovariateLaw {
    pub fn dim(&self) -> usize {
        match self {
            CovariateLaw::StandardNormal { dim } | CovariateLaw::Custom { dim, .. } => *dim,
        }
    }

    pub fn sample(&self, rng: &mut rng::Rng) -> Vec<f64> {
        match self {
            CovariateLaw::StandardNormal { dim } => (0..*dim).map(|_| StandardNormal.sample(rng)).collect(),
            CovariateLaw::Custom { sampler, .. } => sampler(rng),
        }
    }
}

/// `Y(w) = F_m(f_w(Z), eps_w)` with `eps_w ~ N(0, Sigma_w)`.
#[derive(Clone)]
pub struct GaussianModelSpec {
    pub model: NoiseModel,
    pub f0: MeanFn,
    pub f1: MeanFn,
    pub sigma0: DMatrix<f64>,
    pub sigma1: DMatrix<f64>,
    pub z_law: CovariateLaw,
}

impl fmt::Debug for GaussianModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaussianModelSpec")
            .field("model", &self.model)
            .field("sigma0", &self.sigma0)
            .field("sigma1", &self.sigma1)
            .field("d_z", &self.z_law.dim())
            .finish_non_exhaustive()
    }
}

impl GaussianModelSpec {
    pub fn new(
        model: NoiseModel,
        f0: MeanFn,
        f1: MeanFn,
        sigma0: DMatrix<f64>,
        sigma1: DMatrix<f64>,
        z_law: CovariateLaw,
    ) -> Result<Self> {
        if sigma0.shape() != sigma1.shape() || !sigma0.is_square() {
            return input_err("noise covariances must be square with equal shapes");
        }
        check_psd(&sigma0)?;
        check_psd(&sigma1)?;
        Ok(Self {
            model,
            f0,
            f1,
            sigma0,
            sigma1,
            z_law,
        })
    }

    /// Scalar model with `Z, eps_0, eps_1 ~ N(0, 1)`.
    pub fn scalar<F0, F1>(model: NoiseModel, f0: F0, f1: F1) -> Self
    where
        F0: Fn(f64) -> f64 + Send + Sync + 'static,
        F1: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            model,
            f0: Arc::new(move |z: &[f64]| vec![f0(z[0])]),
            f1: Arc::new(move |z: &[f64]| vec![f1(z[0])]),
            sigma0: DMatrix::identity(1, 1),
            sigma1: DMatrix::identity(1, 1),
            z_law: CovariateLaw::StandardNormal { dim: 1 },
        }
    }

    /// `f0(z) = -0.6 z`, `f1(z) = 1.6 z`, additive noise.
    pub fn linear_location() -> Self {
        Self::scalar(NoiseModel::Location, |z| -0.6 * z, |z| 1.6 * z)
    }

    /// `f0(z) = -0.2 z^2`, `f1(z) = 0.6 z^2`, additive noise.
    pub fn quadratic_location() -> Self {
        Self::scalar(NoiseModel::Location, |z| -0.2 * z * z, |z| 0.6 * z * z)
    }

    /// `f0(z) = 0.5 z - 0.35`, `f1(z) = 1.1 z + 0.35`, multiplicative noise.
    pub fn scale() -> Self {
        Self::scalar(NoiseModel::Scale, |z| 0.5 * z - 0.35, |z| 1.1 * z + 0.35)
    }

    pub fn d_y(&self) -> usize {
        self.sigma0.nrows()
    }

    pub fn d_z(&self) -> usize {
        self.z_law.dim()
    }

    /// Integrand of `V_c` at covariate `z`, without the constant Bures
    /// term of the location model.
    fn conditional_term(&self, z: &[f64]) -> Result<f64> {
        let (a, b) = ((self.f0)(z), (self.f1)(z));
        match self.model {
            NoiseModel::Location => Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum()),
            NoiseModel::Scale => {
                if self.d_y() == 1 {
                    let (s0, s1) = (self.sigma0[(0, 0)].sqrt(), self.sigma1[(0, 0)].sqrt());
                    let d = a[0].abs() * s0 - b[0].abs() * s1;
                    return Ok(d * d);
                }
                let da = DMatrix::from_diagonal(&DVector::from_vec(a));
                let db = DMatrix::from_diagonal(&DVector::from_vec(b));
                bures_trace(&(&da * &self.sigma0 * &da), &(&db * &self.sigma1 * &db))
            }
        }
    }
}

fn check_psd(s: &DMatrix<f64>) -> Result<()> {
    if !s.is_square() {
        return input_err("covariance must be square");
    }
    let asym = (s - s.transpose()).amax();
    if asym > 1e-10 * s.amax().max(1.0) {
        return input_err(format!("covariance is not symmetric (max asymmetry {asym:e})"));
    }
    let min = SymmetricEigen::new(s.clone()).eigenvalues.min();
    if min < PSD_FLOOR * s.amax().max(1.0) {
        return input_err(format!("covariance has negative eigenvalue {min:e}"));
    }
    Ok(())
}

/// Principal square root of a symmetric PSD matrix; eigenvalues are
/// clamped at zero.
pub fn sqrt_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_psd(s)?;
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

/// `Tr(S0 + S1 - 2 (S0^1/2 S1 S0^1/2)^1/2)`, the squared 2-Wasserstein
/// distance between centered Gaussians with these covariances.
pub fn bures_trace(sigma0: &DMatrix<f64>, sigma1: &DMatrix<f64>) -> Result<f64> {
    if sigma0.shape() != sigma1.shape() {
        return input_err("covariances have different shapes");
    }
    let r0 = sqrt_psd(sigma0)?;
    check_psd(sigma1)?;
    let inner = &r0 * sigma1 * &r0;
    let cross = sqrt_psd(&((&inner + inner.transpose()) * 0.5))?;
    let s = sigma0.trace() + sigma1.trace() - 2.0 * cross.trace();
    Ok(s.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    pub std_error: f64,
}

pub const MIN_MC_SAMPLES: usize = 100;

/// Monte-Carlo evaluation of `V_c` for squared-distance cost.
pub fn gaussian_vc(spec: &GaussianModelSpec, mc_samples: usize, seed: u64) -> Result<OracleValue> {
    if mc_samples < MIN_MC_SAMPLES {
        return config_err(format!("need at least {MIN_MC_SAMPLES} Monte-Carlo samples, got {mc_samples}"));
    }
    let offset = match spec.model {
        NoiseModel::Location => bures_trace(&spec.sigma0, &spec.sigma1)?,
        NoiseModel::Scale => 0.0,
    };
    let mut rng = rng::stream(seed, 0x0AC1E);
    let mut terms = Vec::with_capacity(mc_samples);
    for _ in 0..mc_samples {
        let z = spec.z_law.sample(&mut rng);
        terms.push(spec.conditional_term(&z)?);
    }
    let (mean, sd) = mean_sd(&terms);
    Ok(OracleValue {
        value: mean + offset,
        std_error: sd / (mc_samples as f64).sqrt(),
    })
}

/// Exact `V_c` for a location model with affine means `f_w(z) = A_w z + b_w`
/// and `Z ~ N(0, I)`: `|A0 - A1|_F^2 + |b0 - b1|^2 + S(Sigma0, Sigma1)`.
pub fn location_vc_affine(
    a0: &DMatrix<f64>,
    b0: &DVector<f64>,
    a1: &DMatrix<f64>,
    b1: &DVector<f64>,
    sigma0: &DMatrix<f64>,
    sigma1: &DMatrix<f64>,
) -> Result<f64> {
    if a0.shape() != a1.shape() || b0.len() != b1.len() || a0.nrows() != b0.len() {
        return input_err("affine mean maps have mismatched shapes");
    }
    Ok((a0 - a1).norm_squared() + (b0 - b1).norm_squared() + bures_trace(sigma0, sigma1)?)
}

pub type QuantileFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrechetHoeffding {
    pub lower: OracleValue,
    pub upper: OracleValue,
}

pub const MIN_QUAD_POINTS: usize = 10;

/// Comonotone and countermonotone bounds for scalar outcomes and squared
/// cost: midpoint quadrature over `u`, Monte Carlo over `Z`.
pub fn frechet_hoeffding_bounds(
    quantile0: &QuantileFn,
    quantile1: &QuantileFn,
    z_law: &CovariateLaw,
    mc_samples: usize,
    quad_points: usize,
    seed: u64,
) -> Result<FrechetHoeffding> {
    if quad_points < MIN_QUAD_POINTS {
        return config_err(format!("need at least {MIN_QUAD_POINTS} quadrature nodes, got {quad_points}"));
    }
    if mc_samples < MIN_MC_SAMPLES {
        return config_err(format!("need at least {MIN_MC_SAMPLES} Monte-Carlo samples, got {mc_samples}"));
    }
    let nodes: Vec<f64> = (0..quad_points).map(|k| (k as f64 + 0.5) / quad_points as f64).collect();
    let mut rng = rng::stream(seed, 0xF4EC);
    let mut lo = Vec::with_capacity(mc_samples);
    let mut hi = Vec::with_capacity(mc_samples);
    for _ in 0..mc_samples {
        let z = z_law.sample(&mut rng);
        let q0: Vec<f64> = nodes.iter().map(|&u| quantile0(u, &z)).collect();
        let q1: Vec<f64> = nodes.iter().map(|&u| quantile1(u, &z)).collect();
        let n = quad_points as f64;
        lo.push(q0.iter().zip(&q1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n);
        hi.push(q0.iter().zip(q1.iter().rev()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n);
    }
    let summarize = |v: &[f64]| {
        let (m, sd) = mean_sd(v);
        OracleValue {
            value: m,
            std_error: sd / (v.len() as f64).sqrt(),
        }
    };
    Ok(FrechetHoeffding {
        lower: summarize(&lo),
        upper: summarize(&hi),
    })
}

/// Standard normal quantile.
pub fn normal_quantile(u: f64) -> f64 {
    Normal::standard().inverse_cdf(u)
}

/// Conditional quantile functions of a scalar Gaussian model.
pub fn gaussian_quantiles(spec: &GaussianModelSpec) -> Result<(QuantileFn, QuantileFn)> {
    if spec.d_y() != 1 {
        return input_err("conditional quantiles need scalar outcomes");
    }
    let build = |f: MeanFn, var: f64, model: NoiseModel| -> QuantileFn {
        let sd = var.sqrt();
        Arc::new(move |u: f64, z: &[f64]| {
            let m = f(z)[0];
            match model {
                NoiseModel::Location => m + sd * normal_quantile(u),
                NoiseModel::Scale => m.abs() * sd * normal_quantile(u),
            }
        })
    };
    Ok((
        build(spec.f0.clone(), spec.sigma0[(0, 0)], spec.model),
        build(spec.f1.clone(), spec.sigma1[(0, 0)], spec.model),
    ))
}
