use cot_pi::discretize::{build_adapted_empirical, build_grid, normalize_covariates, prepare_samples, CellGrid};
use cot_pi::ot::{wasserstein1, DiscreteDistribution};
use cot_pi::reweight::{cell_weights, fit_propensity, split_folds, PropensityModel};
use cot_pi::sample::{Group, GroupData, WeightedSample};
use proptest::prelude::*;
use rand::Rng;

fn random_sample(n: usize, d_z: usize, seed: u64, weighted: bool) -> WeightedSample {
    let mut rng = cot_pi::rng::stream(seed, 3);
    let z: Vec<f64> = (0..n * d_z).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
    if weighted {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
        let s: f64 = w.iter().sum();
        WeightedSample::new(Group::Control, d_z, 1, z, y, w.iter().map(|v| v / s).collect()).unwrap()
    } else {
        WeightedSample::uniform(Group::Control, d_z, 1, z, y).unwrap()
    }
}

#[test]
fn discretization_gap_bound() {
    for (k, &(d_z, n)) in [(1, 100), (1, 1000), (2, 100), (2, 400)].iter().enumerate() {
        for rep in 0..5 {
            let s = random_sample(n, d_z, 100 * k as u64 + rep, false);
            let r = 1.0 / (d_z + 2) as f64;
            let grid = build_grid(n, d_z, r, 1.0).unwrap();
            let ae = build_adapted_empirical(&s, &grid).unwrap();
            let raw = DiscreteDistribution::uniform(d_z, s.covariates().to_vec()).unwrap();
            let gap = wasserstein1(ae.cell_marginal(), &raw).unwrap().value;
            let half_diag = (d_z as f64).sqrt() * grid.edge() / 2.0;
            assert!(gap <= half_diag + 1e-12, "gap {gap} > {half_diag}");
            assert!(gap <= (d_z as f64).sqrt() * (n as f64).powf(-r));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adapted_mass_is_conserved(
        n in 1usize..200,
        d_z in 1usize..=3,
        c in 0.05..4.0f64,
        seed in any::<u64>(),
        weighted in any::<bool>(),
    ) {
        let s = random_sample(n, d_z, seed, weighted);
        let grid = build_grid(n, d_z, 0.3, c).unwrap();
        let ae = build_adapted_empirical(&s, &grid).unwrap();
        let total: f64 = ae.cell_marginal().weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let mut seen = 0;
        for k in 0..ae.occupied() {
            let cond = ae.conditional_at(k);
            prop_assert!((cond.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            seen += ae.members(k).len();
        }
        prop_assert_eq!(seen, n);
    }

    #[test]
    fn weights_sum_to_one(
        n in 1usize..300,
        d_z in 1usize..=2,
        c in 0.1..3.0f64,
        slope in -4.0..4.0f64,
        seed in any::<u64>(),
        treated in any::<bool>(),
    ) {
        let s = random_sample(n, d_z, seed, false);
        let grid = build_grid(n, d_z, 0.3, c).unwrap();
        let eta = 0.05;
        let model = PropensityModel::known(move |z: &[f64]| 1.0 / (1.0 + (-slope * (z[0] - 0.5)).exp()), eta).unwrap();
        let group = if treated { Group::Treated } else { Group::Control };
        let (w, _) = cell_weights(&s, &grid, &model, group).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let bound = (1.0 - eta) / eta / n as f64;
        for &v in &w {
            prop_assert!(v > 0.0 && v <= bound + 1e-15);
        }
    }
}

#[test]
fn constant_propensity_gives_uniform_weights() {
    let s = random_sample(37, 2, 4, false);
    let grid = build_grid(37, 2, 0.3, 2.0).unwrap();
    let model = PropensityModel::constant(0.3, 0.05).unwrap();
    for g in [Group::Control, Group::Treated] {
        let (w, clipped) = cell_weights(&s, &grid, &model, g).unwrap();
        assert_eq!(clipped, 0);
        assert!(w.iter().all(|&v| v == 1.0 / 37.0));
    }
}

#[test]
fn hand_computed_two_cell_weights() {
    let s = WeightedSample::uniform(Group::Control, 1, 1, vec![0.2, 0.7], vec![0.0, 1.0]).unwrap();
    let grid = CellGrid::new(1, 2).unwrap();
    let model = PropensityModel::known(|z: &[f64]| if z[0] < 0.5 { 0.5 } else { 0.75 }, 0.05).unwrap();
    let (w, _) = cell_weights(&s, &grid, &model, Group::Control).unwrap();
    assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!((w[1] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn clipping_is_counted_and_bounded() {
    let s = WeightedSample::uniform(Group::Treated, 1, 1, vec![0.01, 0.99], vec![0.0, 1.0]).unwrap();
    let grid = CellGrid::new(1, 2).unwrap();
    let model = PropensityModel::known(|z: &[f64]| if z[0] < 0.5 { 0.001 } else { 0.999 }, 0.1).unwrap();
    let (w, clipped) = cell_weights(&s, &grid, &model, Group::Treated).unwrap();
    assert_eq!(clipped, 2);
    assert!((w[0] / w[1] - 9.0).abs() < 1e-12);
}

#[test]
fn normalization_then_projection() {
    let g0 = GroupData::new(Group::Control, 1, 1, vec![-1.0, 0.0], vec![0.0, 0.0]);
    let g1 = GroupData::new(Group::Treated, 1, 1, vec![1.0], vec![0.0]);
    let (s0, s1, rec) = prepare_samples(&g0, &g1).unwrap();
    assert_eq!(s0.covariates(), &[0.0, 0.5]);
    assert_eq!(s1.covariates(), &[1.0]);
    assert_eq!(rec.apply(&[1.5]), vec![1.0]);
    let (u, _, _) = normalize_covariates(&[2.0, 2.0, 2.0], &[], 1).unwrap();
    assert_eq!(u, vec![0.5; 3]);
    let grid = CellGrid::new(1, 4).unwrap();
    assert_eq!(grid.project(&[0.25]).unwrap().1, vec![0.375]);
    assert_eq!(grid.project(&[1.0]).unwrap().1, vec![0.875]);
}

#[test]
fn fitted_propensity_recovers_design() {
    let n = 5000;
    let mut rng = cot_pi::rng::stream(21, 0);
    let mut z = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        let v: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
        z.push(v);
        t.push(rng.random::<f64>() < 1.0 / (1.0 + (-1.5 * v).exp()));
    }
    let m = fit_propensity(&z, 1, &t, 0.05).unwrap();
    let (_, coef) = m.coefficients().unwrap();
    assert!((coef[0] - 1.5).abs() < 0.25 * 1.5, "slope {}", coef[0]);
}

#[test]
fn null_propensity_is_flat() {
    let n = 4000;
    let mut rng = cot_pi::rng::stream(22, 0);
    let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let t: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
    let rate = t.iter().filter(|b| **b).count() as f64 / n as f64;
    let m = fit_propensity(&z, 1, &t, 0.05).unwrap();
    for u in [0.0, 0.25, 0.5, 0.75, 1.0] {
        assert!((m.evaluate(&[u]).0 - rate).abs() < 0.02);
    }
    let m = fit_propensity(&z, 1, &t, 0.1).unwrap();
    assert!((0.1..=0.9).contains(&m.evaluate(&[1e6]).0));
}

#[test]
fn folds_are_balanced_and_deterministic() {
    assert_eq!(split_folds(4, 1).unwrap().sizes(), (2, 2));
    let (a, b) = split_folds(5, 1).unwrap().sizes();
    assert_eq!(a.abs_diff(b), 1);
    assert_eq!(split_folds(101, 9).unwrap(), split_folds(101, 9).unwrap());
    assert!(split_folds(1, 0).is_err());
}
