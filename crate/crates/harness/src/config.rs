//! Run settings layered as defaults, then a `key = value` file, then
//! `COTPI_<KEY>` environment variables, then command-line flags.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cot_pi::datagen::{Assignment, Sizes, SyntheticDesign};
use cot_pi::estimator::{BoundKind, CostSpec, Design, EstimatorConfig, PropensitySource};
use cot_pi::oracles::GaussianModelSpec;
use cot_pi::reweight::DEFAULT_CLIP_ETA;

use crate::error::{config, HarnessError, Result};

pub const ENV_PREFIX: &str = "COTPI_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    Linear,
    Quadratic,
    Scale,
}

impl ModelId {
    pub fn spec(self) -> GaussianModelSpec {
        match self {
            ModelId::Linear => GaussianModelSpec::linear_location(),
            ModelId::Quadratic => GaussianModelSpec::quadratic_location(),
            ModelId::Scale => GaussianModelSpec::scale(),
        }
    }
}

impl FromStr for ModelId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "linear" => Ok(ModelId::Linear),
            "b" | "quadratic" => Ok(ModelId::Quadratic),
            "c" | "scale" => Ok(ModelId::Scale),
            _ => config(format!("unknown model `{s}` (expected a|linear, b|quadratic, c|scale)")),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelId::Linear => "linear",
            ModelId::Quadratic => "quadratic",
            ModelId::Scale => "scale",
        })
    }
}

/// How synthetic units reach the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    /// `n0 = n1 = N`, arms drawn separately.
    Bernoulli,
    /// `N` units, each treated with probability `p`.
    BernoulliTotal,
    /// `N` units, treated with logistic probability in `z`.
    Covariate,
    /// `n0 = n1 = N` with perturbed treated covariates.
    Shift,
}

impl FromStr for DesignKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(DesignKind::Bernoulli),
            "bernoulli-total" => Ok(DesignKind::BernoulliTotal),
            "covariate" => Ok(DesignKind::Covariate),
            "shift" => Ok(DesignKind::Shift),
            _ => config(format!(
                "unknown design `{s}` (expected bernoulli, bernoulli-total, covariate, shift)"
            )),
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesignKind::Bernoulli => "bernoulli",
            DesignKind::BernoulliTotal => "bernoulli-total",
            DesignKind::Covariate => "covariate",
            DesignKind::Shift => "shift",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostChoice {
    Absolute,
    Squared,
    NegativeSquaredSum,
}

impl CostChoice {
    pub fn spec(self) -> CostSpec {
        match self {
            CostChoice::Absolute => CostSpec::absolute(),
            CostChoice::Squared => CostSpec::squared(),
            CostChoice::NegativeSquaredSum => CostSpec::negative_squared_sum(),
        }
    }
}

impl FromStr for CostChoice {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" | "abs" => Ok(CostChoice::Absolute),
            "squared" | "sq" => Ok(CostChoice::Squared),
            "negative-squared-sum" => Ok(CostChoice::NegativeSquaredSum),
            _ => config(format!(
                "unknown cost `{s}` (expected absolute, squared, negative-squared-sum)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMetric {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropensityChoice {
    Known,
    Fit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub model: ModelId,
    pub design: DesignKind,
    pub cost: CostChoice,
    pub bound: BoundKind,
    /// Cell constants; benchmarks sweep all of them.
    pub c: Vec<f64>,
    pub rate: Option<f64>,
    /// Size grid `N`; see [`DesignKind`] for its meaning.
    pub sizes: Vec<usize>,
    /// Overrides `n0 = n1 = N` for per-arm designs.
    pub n0: Option<usize>,
    pub n1: Option<usize>,
    pub p: f64,
    pub slope: f64,
    pub propensity: PropensityChoice,
    pub clip_eta: f64,
    /// Cross-fitting folds for the covariate design; 1 uses the full
    /// sample and needs a known propensity.
    pub folds: usize,
    pub shift_eta: f64,
    pub candidates: Vec<f64>,
    pub bootstrap: usize,
    pub reps: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub metric: ErrorMetric,
    pub oracle_mc: usize,
    pub input: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            model: ModelId::Quadratic,
            design: DesignKind::Bernoulli,
            cost: CostChoice::Squared,
            bound: BoundKind::Both,
            c: vec![1.0],
            rate: None,
            sizes: vec![300],
            n0: None,
            n1: None,
            p: 0.5,
            slope: 1.5,
            propensity: PropensityChoice::Known,
            clip_eta: DEFAULT_CLIP_ETA,
            shift_eta: 0.0,
            candidates: vec![0.6, 0.8, 1.0, 1.2, 1.4],
            bootstrap: 50,
            folds: 2,
            reps: 500,
            seed: 0,
            jobs: 1,
            metric: ErrorMetric::Relative,
            oracle_mc: 1_000_000,
            input: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("`{key}`: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return config(format!("`{key}` is empty"));
    }
    Ok(items)
}

fn prefixed(e: HarnessError, at: &str) -> HarnessError {
    match e {
        HarnessError::Config(m) => HarnessError::Config(format!("{at}: {m}")),
        other => other,
    }
}

impl Settings {
    /// Sets one key; `-` and `_` are interchangeable and case is ignored.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "model" => self.model = value.parse()?,
            "design" => self.design = value.parse()?,
            "cost" => self.cost = value.parse()?,
            "bound" => {
                self.bound = match value {
                    "lower" => BoundKind::Lower,
                    "upper" => BoundKind::Upper,
                    "both" => BoundKind::Both,
                    _ => return config(format!("unknown bound `{value}` (expected lower, upper, both)")),
                }
            }
            "c" => self.c = parse_list(&key, value)?,
            "rate" => self.rate = Some(parse(&key, value)?),
            "n" | "sizes" => self.sizes = parse_list(&key, value)?,
            "n0" => self.n0 = Some(parse(&key, value)?),
            "n1" => self.n1 = Some(parse(&key, value)?),
            "p" => self.p = parse(&key, value)?,
            "slope" => self.slope = parse(&key, value)?,
            "propensity" => {
                self.propensity = match value {
                    "known" => PropensityChoice::Known,
                    "fit" => PropensityChoice::Fit,
                    _ => return config(format!("unknown propensity `{value}` (expected known, fit)")),
                }
            }
            "clip_eta" => self.clip_eta = parse(&key, value)?,
            "shift_eta" => self.shift_eta = parse(&key, value)?,
            "candidates" => self.candidates = parse_list(&key, value)?,
            "bootstrap" => self.bootstrap = parse(&key, value)?,
            "folds" => self.folds = parse(&key, value)?,
            "reps" => self.reps = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "jobs" => self.jobs = parse(&key, value)?,
            "metric" => {
                self.metric = match value {
                    "relative" => ErrorMetric::Relative,
                    "absolute" => ErrorMetric::Absolute,
                    _ => return config(format!("unknown metric `{value}` (expected relative, absolute)")),
                }
            }
            "oracle_mc" => self.oracle_mc = parse(&key, value)?,
            "input" => self.input = Some(PathBuf::from(value)),
            "preset" => {
                self.reps = match value {
                    "paper" => 500,
                    "desk" => 50,
                    _ => return config(format!("unknown preset `{value}` (expected paper, desk)")),
                }
            }
            _ => return config(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return config(format!("line {}: expected `key = value`", i + 1));
            };
            self.apply(k, v).map_err(|e| prefixed(e, &format!("line {}", i + 1)))?;
        }
        Ok(())
    }

    /// Applies every `COTPI_<KEY>` pair.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        vars.sort();
        for (k, v) in vars {
            self.apply(&k[ENV_PREFIX.len()..], &v).map_err(|e| prefixed(e, &k))?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then the process environment.
    pub fn load(file: Option<&Path>) -> Result<Self> {
        let mut s = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            s.apply_text(&text)?;
        }
        s.apply_env(std::env::vars())?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return config("reps must be at least 1");
        }
        if self.sizes.contains(&0) {
            return config("sizes must be positive");
        }
        if self.c.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return config("cell constants must be positive");
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return config(format!("p={} must lie in (0, 1)", self.p));
        }
        if !matches!(self.folds, 1 | 2) {
            return config(format!("folds must be 1 or 2, got {}", self.folds));
        }
        Ok(())
    }

    pub fn single_c(&self) -> Result<f64> {
        match self.c.as_slice() {
            [c] => Ok(*c),
            _ => config(format!("expected a single cell constant, got {:?}", self.c)),
        }
    }

    /// Estimator settings for cell constant `c`. A known propensity is
    /// attached per draw, since it depends on the normalization.
    pub fn estimator(&self, c: f64, seed: u64) -> EstimatorConfig {
        let covariate = self.design == DesignKind::Covariate;
        EstimatorConfig {
            rate: self.rate,
            cell_constant: c,
            bound: self.bound,
            design: if covariate { Design::CovariateDependent } else { Design::Bernoulli },
            propensity: PropensitySource::Fit { clip_eta: self.clip_eta },
            folds: self.folds,
            seed,
        }
    }

    pub fn assignment(&self) -> Assignment {
        match self.design {
            DesignKind::Covariate => Assignment::Logistic { slope: self.slope },
            _ => Assignment::Bernoulli(self.p),
        }
    }

    /// Synthetic design at grid size `n`.
    pub fn synthetic(&self, n: usize, seed: u64) -> SyntheticDesign {
        let per_arm = Sizes::PerGroup {
            n0: self.n0.unwrap_or(n),
            n1: self.n1.unwrap_or(n),
        };
        let sizes = match self.design {
            DesignKind::Bernoulli | DesignKind::Shift => per_arm,
            DesignKind::BernoulliTotal | DesignKind::Covariate => Sizes::Total(n),
        };
        SyntheticDesign::new(self.model.spec(), sizes, seed)
            .with_assignment(self.assignment())
            .with_shift(if self.design == DesignKind::Shift { self.shift_eta } else { 0.0 })
    }
}
