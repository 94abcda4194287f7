//! Exact discrete optimal transport.
//!
//! [`solve_exact_ot`] solves the transportation linear program with a
//! primal network simplex; [`solve_1d_quantile_ot`] is the monotone
//! rearrangement shortcut for one-dimensional supports and costs that are
//! convex in the difference `y0 - y1`.

pub(crate) mod quantile;
mod simplex;

use std::fmt;
use std::str::FromStr;

use crate::error::{input_err, CotError, Result};

/// Masses below this are dropped before solving.
pub const PRUNE_BELOW: f64 = 1e-15;
/// Tolerance on the total mass of a [`DiscreteDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Finite support with probability weights.
///
/// Points are stored row-major in a flat buffer of `len * dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return input_err("support dimension must be positive");
        }
        if weights.is_empty() {
            return input_err("distribution needs at least one support point");
        }
        if points.len() != dim * weights.len() {
            return input_err(format!(
                "{} coordinates do not fit {} points of dimension {dim}",
                points.len(),
                weights.len()
            ));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return input_err("support point with non-finite coordinate");
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return input_err(format!("invalid probability weight {w}"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return input_err(format!("weights sum to {total}, expected 1"));
        }
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    /// Normalizes nonnegative masses to total one.
    pub fn from_masses(dim: usize, points: Vec<f64>, masses: &[f64]) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return input_err(format!("masses must have positive finite total, got {total}"));
        }
        Self::new(dim, points, masses.iter().map(|m| m / total).collect())
    }

    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() {
            return input_err("uniform distribution over an empty support");
        }
        let n = points.len() / dim;
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    pub fn from_scalars(values: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec(), weights.to_vec())
    }

    pub fn uniform_scalars(values: &[f64]) -> Result<Self> {
        Self::uniform(1, values.to_vec())
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        let dim = point.len();
        Self::new(dim, point, vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat_points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Drops negligible masses and renormalizes the remainder. Returns the
    /// kept original indices alongside the reduced distribution.
    fn pruned(&self) -> (Vec<usize>, Vec<f64>) {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.weights[i] >= PRUNE_BELOW)
            .collect();
        let total: f64 = keep.iter().map(|&i| self.weights[i]).sum();
        let w = keep.iter().map(|&i| self.weights[i] / total).collect();
        (keep, w)
    }
}

/// Dense `rows x cols` matrix of pairwise costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return input_err(format!(
                "cost buffer of length {} is not {rows}x{cols}",
                data.len()
            ));
        }
        if let Some(k) = data.iter().position(|c| !c.is_finite()) {
            return input_err(format!(
                "non-finite cost at ({}, {})",
                k / cols.max(1),
                k % cols.max(1)
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Evaluates `cost(x, y)` on every support pair.
    pub fn from_fn<F>(mu: &DiscreteDistribution, nu: &DiscreteDistribution, cost: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64,
    {
        let mut data = Vec::with_capacity(mu.len() * nu.len());
        for x in mu.points() {
            for y in nu.points() {
                data.push(cost(x, y));
            }
        }
        Self::new(mu.len(), nu.len(), data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn negated(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|c| -c).collect(),
        }
    }
}

/// Sparse transport plan stored as `(source, target, mass)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    rows: usize,
    cols: usize,
    mass: Vec<(usize, usize, f64)>,
}

impl Coupling {
    pub(crate) fn new(rows: usize, cols: usize, mass: Vec<(usize, usize, f64)>) -> Self {
        Self { rows, cols, mass }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.mass
    }

    /// Number of strictly positive entries.
    pub fn support_size(&self) -> usize {
        self.mass.iter().filter(|e| e.2 > 0.0).count()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for &(i, _, m) in &self.mass {
            s[i] += m;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for &(_, j, m) in &self.mass {
            s[j] += m;
        }
        s
    }

    pub fn expected_cost(&self, cost: &CostMatrix) -> f64 {
        self.mass.iter().map(|&(i, j, m)| m * cost.get(i, j)).sum()
    }

    /// Largest deviation of the plan's marginals from the given weights.
    pub fn marginal_error(&self, mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> f64 {
        let rows = self.row_sums();
        let cols = self.col_sums();
        rows.iter()
            .zip(mu.weights())
            .chain(cols.iter().zip(nu.weights()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OtSolution {
    pub value: f64,
    pub coupling: Coupling,
}

/// Scalar costs `h(y0, y1) = phi(y0 - y1)` with convex `phi`, for which
/// the comonotone coupling minimizes and the antitone coupling maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CostTag {
    Absolute,
    Squared,
}

impl CostTag {
    #[inline]
    pub fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            CostTag::Absolute => (a - b).abs(),
            CostTag::Squared => (a - b) * (a - b),
        }
    }
}

impl FromStr for CostTag {
    type Err = CotError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" | "abs" => Ok(CostTag::Absolute),
            "squared" | "sq" => Ok(CostTag::Squared),
            other => input_err(format!("unsupported cost tag '{other}' for the quantile path")),
        }
    }
}

impl fmt::Display for CostTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostTag::Absolute => "absolute",
            CostTag::Squared => "squared",
        })
    }
}

fn check_dims(mu: &DiscreteDistribution, nu: &DiscreteDistribution, cost: &CostMatrix) -> Result<()> {
    if cost.rows() != mu.len() || cost.cols() != nu.len() {
        return input_err(format!(
            "cost matrix is {}x{} but supports have sizes {} and {}",
            cost.rows(),
            cost.cols(),
            mu.len(),
            nu.len()
        ));
    }
    Ok(())
}

/// Minimum expected cost over all couplings of `mu` and `nu`.
pub fn solve_exact_ot(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: &CostMatrix,
) -> Result<OtSolution> {
    check_dims(mu, nu, cost)?;
    let (rows, a) = mu.pruned();
    let (cols, b) = nu.pruned();
    let reduced: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| cost.get(i, j)))
        .collect();
    let plan = simplex::solve_transport(&a, &b, &reduced)?;
    let mass = plan
        .into_iter()
        .map(|(i, j, m)| (rows[i], cols[j], m))
        .collect();
    let coupling = Coupling::new(mu.len(), nu.len(), mass);
    let value = coupling.expected_cost(cost);
    Ok(OtSolution { value, coupling })
}

/// Maximum expected cost over all couplings, via the negated cost.
pub fn solve_exact_ot_max(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: &CostMatrix,
) -> Result<OtSolution> {
    let sol = solve_exact_ot(mu, nu, &cost.negated())?;
    Ok(OtSolution {
        value: -sol.value,
        coupling: sol.coupling,
    })
}

fn require_scalar(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<()> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return input_err(format!(
            "quantile transport needs 1-D supports, got dimensions {} and {}",
            mu.dim(),
            nu.dim()
        ));
    }
    Ok(())
}

/// Comonotone (quantile-matched) coupling of two 1-D distributions. Optimal
/// for the minimization whenever the cost is convex in the difference.
pub fn solve_1d_quantile_ot(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: CostTag,
) -> Result<OtSolution> {
    require_scalar(mu, nu)?;
    Ok(quantile::monotone(mu, nu, |a, b| cost.eval(a, b), false))
}

/// Antitone coupling, the maximizer for convex-in-difference costs.
pub fn solve_1d_quantile_ot_max(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: CostTag,
) -> Result<OtSolution> {
    require_scalar(mu, nu)?;
    Ok(quantile::monotone(mu, nu, |a, b| cost.eval(a, b), true))
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Wasserstein-1 distance under the Euclidean ground metric, with an
/// optimal plan.
pub fn wasserstein1(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<OtSolution> {
    if mu.dim() != nu.dim() {
        return input_err(format!(
            "supports live in dimensions {} and {}",
            mu.dim(),
            nu.dim()
        ));
    }
    let cost = CostMatrix::from_fn(mu, nu, euclidean)?;
    solve_exact_ot(mu, nu, &cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_cost(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> CostMatrix {
        CostMatrix::from_fn(mu, nu, |a, b| (a[0] - b[0]).abs()).unwrap()
    }

    #[test]
    fn dirac_pair_is_forced() {
        let mu = DiscreteDistribution::dirac(vec![0.0]).unwrap();
        let nu = DiscreteDistribution::dirac(vec![3.0]).unwrap();
        let c = abs_cost(&mu, &nu);
        let sol = solve_exact_ot(&mu, &nu, &c).unwrap();
        assert_eq!(sol.value, 3.0);
        assert_eq!(sol.coupling.entries(), &[(0, 0, 1.0)]);
        assert_eq!(solve_exact_ot_max(&mu, &nu, &c).unwrap().value, 3.0);
    }

    #[test]
    fn identical_two_point_laws() {
        let mu = DiscreteDistribution::uniform_scalars(&[0.0, 1.0]).unwrap();
        let c = abs_cost(&mu, &mu);
        assert!(solve_exact_ot(&mu, &mu, &c).unwrap().value.abs() < 1e-12);
        // antitone pairing 0<->1
        assert!((solve_exact_ot_max(&mu, &mu, &c).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_three_point_laws() {
        let mu = DiscreteDistribution::uniform_scalars(&[1.0, 2.0, 3.0]).unwrap();
        let nu = DiscreteDistribution::uniform_scalars(&[4.0, 5.0, 6.0]).unwrap();
        let c = abs_cost(&mu, &nu);
        assert!((solve_exact_ot(&mu, &nu, &c).unwrap().value - 3.0).abs() < 1e-12);
        assert!((solve_exact_ot_max(&mu, &nu, &c).unwrap().value - 3.0).abs() < 1e-12);
        let q = solve_1d_quantile_ot(&mu, &nu, CostTag::Squared).unwrap();
        assert!((q.value - 9.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_examples() {
        let mu = DiscreteDistribution::uniform_scalars(&[0.0, 1.0]).unwrap();
        let nu = DiscreteDistribution::uniform_scalars(&[0.0, 2.0]).unwrap();
        let q = solve_1d_quantile_ot(&mu, &nu, CostTag::Absolute).unwrap();
        assert!((q.value - 0.5).abs() < 1e-12);
        let e = solve_exact_ot(&mu, &nu, &abs_cost(&mu, &nu)).unwrap();
        assert!((e.value - 0.5).abs() < 1e-12);

        let same = DiscreteDistribution::from_scalars(&[3.0, -1.0, 0.5], &[0.2, 0.5, 0.3]).unwrap();
        let q = solve_1d_quantile_ot(&same, &same, CostTag::Absolute).unwrap();
        assert!(q.value.abs() < 1e-15);
    }

    #[test]
    fn w1_of_planar_diracs() {
        let mu = DiscreteDistribution::dirac(vec![0.0, 0.0]).unwrap();
        let nu = DiscreteDistribution::dirac(vec![3.0, 4.0]).unwrap();
        assert!((wasserstein1(&mu, &nu).unwrap().value - 5.0).abs() < 1e-12);
        assert_eq!(wasserstein1(&mu, &mu).unwrap().value, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mu = DiscreteDistribution::uniform_scalars(&[0.0, 1.0]).unwrap();
        let nu = DiscreteDistribution::uniform_scalars(&[0.0, 1.0, 2.0]).unwrap();
        let wrong = CostMatrix::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(solve_exact_ot(&mu, &nu, &wrong), Err(CotError::Input(_))));
        assert!(matches!(
            CostMatrix::new(1, 2, vec![0.0, f64::NAN]),
            Err(CotError::Input(_))
        ));
        let planar = DiscreteDistribution::dirac(vec![0.0, 0.0]).unwrap();
        assert!(solve_1d_quantile_ot(&planar, &planar, CostTag::Absolute).is_err());
        assert!(wasserstein1(&planar, &mu).is_err());
        assert!("cubic".parse::<CostTag>().is_err());
        assert!(DiscreteDistribution::from_scalars(&[0.0, 1.0], &[0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::from_scalars(&[0.0, 1.0], &[1.5, -0.5]).is_err());
    }

    #[test]
    fn negligible_masses_are_pruned() {
        let mu = DiscreteDistribution::from_scalars(&[0.0, 10.0], &[1.0 - 1e-16, 1e-16]).unwrap();
        let nu = DiscreteDistribution::dirac(vec![1.0]).unwrap();
        let sol = solve_exact_ot(&mu, &nu, &abs_cost(&mu, &nu)).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!(sol.coupling.entries().iter().all(|e| e.0 == 0));
    }

    #[test]
    fn vertex_solution_is_sparse() {
        let mu = DiscreteDistribution::from_scalars(&[0.0, 1.0, 2.5, 4.0], &[0.1, 0.2, 0.3, 0.4])
            .unwrap();
        let nu = DiscreteDistribution::from_scalars(&[0.3, 1.7, 3.0], &[0.5, 0.25, 0.25]).unwrap();
        let c = CostMatrix::from_fn(&mu, &nu, |a, b| (a[0] * b[0]).sin()).unwrap();
        let sol = solve_exact_ot(&mu, &nu, &c).unwrap();
        assert!(sol.coupling.support_size() <= mu.len() + nu.len() - 1);
        assert!(sol.coupling.marginal_error(&mu, &nu) < 1e-12);
    }
}
