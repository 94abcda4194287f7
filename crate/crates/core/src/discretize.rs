//! Cell-center projection of covariates and adapted empirical distributions.

use std::collections::BTreeMap;

use crate::error::{config_err, input_err, Result};
use crate::ot::DiscreteDistribution;
use crate::sample::{GroupData, WeightedSample};

/// Per-axis pooled range used to map covariates into `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationRecord {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl NormalizationRecord {
    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    pub fn mins(&self) -> &[f64] {
        &self.mins
    }

    pub fn maxs(&self) -> &[f64] {
        &self.maxs
    }

    /// Rescales a raw point and clamps it to the unit cube. Constant axes
    /// map to 0.5.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&v, (&lo, &hi))| {
                if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect()
    }

    /// Maps a unit-cube point back to raw units.
    pub fn invert(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&v, (&lo, &hi))| if hi > lo { lo + v * (hi - lo) } else { lo })
            .collect()
    }
}

/// Pooled min-max rescaling of two covariate matrices sharing `dim` columns.
pub fn normalize_covariates(
    raw0: &[f64],
    raw1: &[f64],
    dim: usize,
) -> Result<(Vec<f64>, Vec<f64>, NormalizationRecord)> {
    if dim == 0 {
        return input_err("covariate dimension must be positive");
    }
    if !raw0.len().is_multiple_of(dim) || !raw1.len().is_multiple_of(dim) {
        return input_err(format!("covariate buffers are not multiples of d_z={dim}"));
    }
    if raw0.is_empty() && raw1.is_empty() {
        return input_err("cannot normalize an empty pooled sample");
    }
    if let Some(v) = raw0.iter().chain(raw1).find(|v| !v.is_finite()) {
        return input_err(format!("non-finite covariate {v}"));
    }
    let mut mins = vec![f64::INFINITY; dim];
    let mut maxs = vec![f64::NEG_INFINITY; dim];
    for row in raw0.chunks_exact(dim).chain(raw1.chunks_exact(dim)) {
        for (k, &v) in row.iter().enumerate() {
            mins[k] = mins[k].min(v);
            maxs[k] = maxs[k].max(v);
        }
    }
    let record = NormalizationRecord { mins, maxs };
    let map = |raw: &[f64]| -> Vec<f64> { raw.chunks_exact(dim).flat_map(|r| record.apply(r)).collect() };
    let (u0, u1) = (map(raw0), map(raw1));
    Ok((u0, u1, record))
}

fn sample_from(group: &GroupData, covariates: Vec<f64>) -> Result<WeightedSample> {
    match &group.weights {
        None => WeightedSample::uniform(group.group, group.d_z, group.d_y, covariates, group.outcomes.clone()),
        Some(w) => {
            let total: f64 = w.iter().sum();
            if !(total.is_finite() && total > 0.0) {
                return input_err(format!("{:?} weights have nonpositive total", group.group));
            }
            WeightedSample::new(
                group.group,
                group.d_z,
                group.d_y,
                covariates,
                group.outcomes.clone(),
                w.iter().map(|v| v / total).collect(),
            )
        }
    }
}

/// Normalizes both arms jointly and attaches probability weights.
pub fn prepare_samples(
    g0: &GroupData,
    g1: &GroupData,
) -> Result<(WeightedSample, WeightedSample, NormalizationRecord)> {
    if g0.d_z != g1.d_z || g0.d_y != g1.d_y {
        return input_err("groups disagree on covariate or outcome dimension");
    }
    if g0.is_empty() || g1.is_empty() {
        return input_err("both treatment groups need at least one observation");
    }
    let (u0, u1, rec) = normalize_covariates(&g0.covariates, &g1.covariates, g0.d_z)?;
    Ok((sample_from(g0, u0)?, sample_from(g1, u1)?, rec))
}

/// Regular partition of `[0, 1]^dim` into `per_axis^dim` cubes.
///
/// Cells are half-open `[k/m, (k+1)/m)` on every axis except the last one,
/// which is closed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellGrid {
    dim: usize,
    per_axis: usize,
}

impl CellGrid {
    pub fn new(dim: usize, per_axis: usize) -> Result<Self> {
        if dim == 0 || per_axis == 0 {
            return config_err("grid needs positive dimension and cells per axis");
        }
        Ok(Self { dim, per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn edge(&self) -> f64 {
        1.0 / self.per_axis as f64
    }

    pub fn cell_count(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }

    /// Center of the cell with linear index `cell`.
    pub fn center(&self, cell: usize) -> Vec<f64> {
        let m = self.per_axis;
        let mut rest = cell;
        (0..self.dim)
            .map(|_| {
                let k = rest % m;
                rest /= m;
                (k as f64 + 0.5) / m as f64
            })
            .collect()
    }

    /// Index of the cell containing `z` and that cell's center.
    pub fn project(&self, z: &[f64]) -> Result<(usize, Vec<f64>)> {
        if z.len() != self.dim {
            return input_err(format!("point has {} coordinates, grid has {}", z.len(), self.dim));
        }
        let m = self.per_axis;
        let mut index = 0;
        let mut stride = 1;
        for &v in z {
            if !(0.0..=1.0).contains(&v) {
                return input_err(format!("coordinate {v} outside [0, 1]"));
            }
            let k = ((v * m as f64).floor() as usize).min(m - 1);
            index += k * stride;
            stride *= m;
        }
        Ok((index, self.center(index)))
    }

    /// Lower and upper corners of a cell.
    pub fn bounds(&self, cell: usize) -> (Vec<f64>, Vec<f64>) {
        let h = self.edge();
        let c = self.center(cell);
        (c.iter().map(|v| v - h / 2.0).collect(), c.iter().map(|v| v + h / 2.0).collect())
    }
}

/// Grid for a sample of size `n`: about `c * n^(r * d_z)` cells in total,
/// rounded to a whole number per axis.
pub fn build_grid(n: usize, d_z: usize, r: f64, c: f64) -> Result<CellGrid> {
    if n == 0 {
        return config_err("grid requires a nonempty sample");
    }
    if !(r > 0.0 && r < 1.0) {
        return config_err(format!("rate exponent r={r} must lie in (0, 1)"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return config_err(format!("cell constant c={c} must be positive"));
    }
    if d_z == 0 {
        return config_err("covariate dimension must be positive");
    }
    let target = (c * (n as f64).powf(r * d_z as f64)).round().max(1.0);
    let per_axis = target.powf(1.0 / d_z as f64).round().max(1.0) as usize;
    CellGrid::new(d_z, per_axis)
}

/// Covariate marginal on occupied cell centers and per-cell outcome laws.
#[derive(Debug, Clone)]
pub struct AdaptedEmpirical {
    grid: CellGrid,
    cells: Vec<usize>,
    cell_marginal: DiscreteDistribution,
    conditionals: Vec<DiscreteDistribution>,
    members: Vec<Vec<usize>>,
}

impl AdaptedEmpirical {
    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    /// Occupied cell indices, ascending; aligned with the marginal support.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell_marginal(&self) -> &DiscreteDistribution {
        &self.cell_marginal
    }

    /// Outcome law of the `k`-th occupied cell.
    pub fn conditional_at(&self, k: usize) -> &DiscreteDistribution {
        &self.conditionals[k]
    }

    pub fn conditional(&self, cell: usize) -> Option<&DiscreteDistribution> {
        self.cells.binary_search(&cell).ok().map(|k| &self.conditionals[k])
    }

    /// Sample rows falling in the `k`-th occupied cell.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn occupied(&self) -> usize {
        self.cells.len()
    }
}

/// Assigns every row to its cell, sums weights per cell, and renormalizes
/// weights within each cell to form the conditionals. Cells without
/// positive mass are omitted.
pub fn build_adapted_empirical(sample: &WeightedSample, grid: &CellGrid) -> Result<AdaptedEmpirical> {
    if sample.d_z() != grid.dim() {
        return input_err(format!(
            "sample has d_z={} but grid has dimension {}",
            sample.d_z(),
            grid.dim()
        ));
    }
    let mut by_cell: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..sample.len() {
        let (cell, _) = grid.project(sample.covariate(i))?;
        by_cell.entry(cell).or_default().push(i);
    }
    let n = sample.len();
    let w = sample.weights();
    let d_y = sample.d_y();

    let mut cells = Vec::with_capacity(by_cell.len());
    let mut centers = Vec::new();
    let mut masses = Vec::with_capacity(by_cell.len());
    let mut conditionals = Vec::with_capacity(by_cell.len());
    let mut members = Vec::with_capacity(by_cell.len());
    for (cell, rows) in by_cell {
        let mass = if sample.is_uniform() {
            rows.len() as f64 / n as f64
        } else {
            rows.iter().map(|&i| w[i]).sum()
        };
        if mass <= 0.0 {
            continue;
        }
        let mut ys = Vec::with_capacity(rows.len() * d_y);
        for &i in &rows {
            ys.extend_from_slice(sample.outcome(i));
        }
        let cond = if sample.is_uniform() {
            DiscreteDistribution::uniform(d_y, ys)?
        } else {
            let local: Vec<f64> = rows.iter().map(|&i| w[i]).collect();
            DiscreteDistribution::from_masses(d_y, ys, &local)?
        };
        cells.push(cell);
        centers.extend(grid.center(cell));
        masses.push(mass);
        conditionals.push(cond);
        members.push(rows);
    }
    let cell_marginal = if sample.is_uniform() {
        DiscreteDistribution::new(grid.dim(), centers, masses)?
    } else {
        DiscreteDistribution::from_masses(grid.dim(), centers, &masses)?
    };
    Ok(AdaptedEmpirical {
        grid: *grid,
        cells,
        cell_marginal,
        conditionals,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::Group;

    #[test]
    fn pooled_min_max() {
        let (u0, u1, rec) = normalize_covariates(&[-1.0, 0.0], &[1.0], 1).unwrap();
        assert_eq!(u0, vec![0.0, 0.5]);
        assert_eq!(u1, vec![1.0]);
        let (u0, _, rec2) = normalize_covariates(&[2.0, 2.0], &[2.0], 1).unwrap();
        assert_eq!(u0, vec![0.5, 0.5]);
        assert_eq!(rec2.apply(&[7.0]), vec![0.5]);
        let (_, _, unit) = normalize_covariates(&[0.0], &[1.0], 1).unwrap();
        assert_eq!(unit.apply(&[1.5]), vec![1.0]);
        assert_eq!(rec.invert(&[0.5]), vec![0.0]);
        assert!(normalize_covariates(&[], &[], 1).is_err());
    }

    #[test]
    fn grid_sizes() {
        let g = build_grid(16, 1, 0.5, 1.0).unwrap();
        assert_eq!((g.per_axis(), g.cell_count(), g.edge()), (4, 4, 0.25));
        // 16^(0.25 * 2) = 4 cells, i.e. 2 per axis
        let g = build_grid(16, 2, 0.25, 1.0).unwrap();
        assert_eq!((g.per_axis(), g.cell_count()), (2, 4));
        // 2 total cells cannot be split evenly across 2 axes
        let g = build_grid(4, 2, 0.25, 1.0).unwrap();
        assert_eq!((g.per_axis(), g.cell_count(), g.edge()), (1, 1, 1.0));
        let g = build_grid(1000, 1, 1.0 / 3.0, 1e-9).unwrap();
        assert_eq!(g.cell_count(), 1);
        assert!(build_grid(10, 1, 1.0, 1.0).is_err());
        assert!(build_grid(10, 1, 0.5, 0.0).is_err());
        assert!(build_grid(0, 1, 0.5, 1.0).is_err());
    }

    #[test]
    fn projection_boundaries() {
        let g = CellGrid::new(1, 4).unwrap();
        assert_eq!(g.project(&[0.1]).unwrap().1, vec![0.125]);
        assert_eq!(g.project(&[0.25]).unwrap().1, vec![0.375]);
        assert_eq!(g.project(&[1.0]).unwrap().1, vec![0.875]);
        assert_eq!(g.project(&[0.0]).unwrap().1, vec![0.125]);
        assert!(g.project(&[1.0001]).is_err());
        assert!(g.project(&[-0.1]).is_err());
        let g2 = CellGrid::new(2, 3).unwrap();
        let (cell, c) = g2.project(&[0.9, 0.1]).unwrap();
        assert_eq!(cell, 2);
        assert_eq!(g2.project(&c).unwrap().0, cell);
    }

    #[test]
    fn counting_cells() {
        let s = WeightedSample::uniform(Group::Control, 1, 1, vec![0.1, 0.6, 0.7, 0.9], vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        let g = CellGrid::new(1, 2).unwrap();
        let ae = build_adapted_empirical(&s, &g).unwrap();
        assert_eq!(ae.cell_marginal().weights(), &[0.25, 0.75]);
        assert_eq!(ae.cell_marginal().flat_points(), &[0.25, 0.75]);
        assert_eq!(ae.conditional(1).unwrap().weights(), &[1.0 / 3.0; 3]);
        assert_eq!(ae.conditional(0).unwrap().flat_points(), &[1.0]);
        assert_eq!(ae.members(1), &[1, 2, 3]);

        let one = CellGrid::new(1, 1).unwrap();
        let ae = build_adapted_empirical(&s, &one).unwrap();
        assert_eq!(ae.cell_marginal().weights(), &[1.0]);
        assert_eq!(ae.conditional_at(0).len(), 4);
    }

    #[test]
    fn weighted_cells() {
        let s = WeightedSample::new(
            Group::Treated,
            1,
            1,
            vec![0.1, 0.2, 0.8],
            vec![0.0, 1.0, 2.0],
            vec![0.2, 0.6, 0.2],
        )
        .unwrap();
        let ae = build_adapted_empirical(&s, &CellGrid::new(1, 2).unwrap()).unwrap();
        assert!((ae.cell_marginal().weights()[0] - 0.8).abs() < 1e-15);
        let cond = ae.conditional_at(0).weights();
        assert!((cond[0] - 0.25).abs() < 1e-15 && (cond[1] - 0.75).abs() < 1e-15);
    }
}
