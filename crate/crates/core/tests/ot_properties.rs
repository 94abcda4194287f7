use cot_pi::ot::{
    euclidean, solve_1d_quantile_ot, solve_1d_quantile_ot_max, solve_exact_ot, solve_exact_ot_max, wasserstein1,
    CostMatrix, CostTag, DiscreteDistribution,
};
use proptest::prelude::*;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force(cost: &[f64], n: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in permutations(n) {
        let v = (0..n).map(|i| cost[i * n + p[i]]).sum::<f64>() / n as f64;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn uniform_points(n: usize) -> DiscreteDistribution {
    DiscreteDistribution::uniform_scalars(&(0..n).map(|i| i as f64).collect::<Vec<_>>()).unwrap()
}

fn square_instance() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=5).prop_flat_map(|n| (Just(n), prop::collection::vec(0.0..1.0f64, n * n)))
}

fn weighted_line() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=12).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(1u32..=8, n).prop_map(|w| w.into_iter().map(f64::from).collect()),
        )
    })
}

proptest! {
    #[test]
    fn exact_matches_permutations((n, cost) in square_instance()) {
        let mu = uniform_points(n);
        let nu = uniform_points(n);
        let m = CostMatrix::new(n, n, cost.clone()).unwrap();
        let (lo, hi) = brute_force(&cost, n);
        let min = solve_exact_ot(&mu, &nu, &m).unwrap();
        let max = solve_exact_ot_max(&mu, &nu, &m).unwrap();
        prop_assert!((min.value - lo).abs() < 1e-9);
        prop_assert!((max.value - hi).abs() < 1e-9);
        prop_assert!(min.coupling.marginal_error(&mu, &nu) < 1e-9);
        prop_assert!(max.coupling.marginal_error(&mu, &nu) < 1e-9);
    }

    #[test]
    fn quantile_matches_exact((x, wx) in weighted_line(), (y, wy) in weighted_line()) {
        let mu = DiscreteDistribution::from_masses(1, x.clone(), &wx).unwrap();
        let nu = DiscreteDistribution::from_masses(1, y.clone(), &wy).unwrap();
        for tag in [CostTag::Absolute, CostTag::Squared] {
            let m = CostMatrix::from_fn(&mu, &nu, |a, b| tag.eval(a[0], b[0])).unwrap();
            let q = solve_1d_quantile_ot(&mu, &nu, tag).unwrap();
            let e = solve_exact_ot(&mu, &nu, &m).unwrap();
            prop_assert!((q.value - e.value).abs() < 1e-9, "{tag}: {} vs {}", q.value, e.value);
            prop_assert!(q.coupling.marginal_error(&mu, &nu) < 1e-9);
            let q = solve_1d_quantile_ot_max(&mu, &nu, tag).unwrap();
            let e = solve_exact_ot_max(&mu, &nu, &m).unwrap();
            prop_assert!((q.value - e.value).abs() < 1e-9, "{tag} max: {} vs {}", q.value, e.value);
        }
    }

    #[test]
    fn symmetric_cost_is_symmetric((x, wx) in weighted_line(), (y, wy) in weighted_line()) {
        let mu = DiscreteDistribution::from_masses(1, x.clone(), &wx).unwrap();
        let nu = DiscreteDistribution::from_masses(1, y.clone(), &wy).unwrap();
        let a = wasserstein1(&mu, &nu).unwrap().value;
        let b = wasserstein1(&nu, &mu).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn w1_is_stable_under_perturbation(
        (x, wx) in weighted_line(),
        (y, wy) in weighted_line(),
        delta in -0.5..0.5f64,
    ) {
        let mu = DiscreteDistribution::from_masses(1, x.clone(), &wx).unwrap();
        let nu = DiscreteDistribution::from_masses(1, y.clone(), &wy).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + delta).collect();
        let mu2 = DiscreteDistribution::from_masses(1, shifted.clone(), &wx).unwrap();
        let a = wasserstein1(&mu, &nu).unwrap().value;
        let b = wasserstein1(&mu2, &nu).unwrap().value;
        prop_assert!((a - b).abs() <= delta.abs() + 1e-9);
    }

    #[test]
    fn multivariate_marginals_hold(
        n in 1usize..=6,
        m in 1usize..=6,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = cot_pi::rng::stream(seed, 0);
        let pts = |k: usize, rng: &mut cot_pi::rng::Rng| (0..2 * k).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
        let wts = |k: usize, rng: &mut cot_pi::rng::Rng| (0..k).map(|_| rng.random_range(0.1..1.0)).collect::<Vec<f64>>();
        let (p, w) = (pts(n, &mut rng), wts(n, &mut rng));
        let mu = DiscreteDistribution::from_masses(2, p, &w).unwrap();
        let (p, w) = (pts(m, &mut rng), wts(m, &mut rng));
        let nu = DiscreteDistribution::from_masses(2, p, &w).unwrap();
        let sol = wasserstein1(&mu, &nu).unwrap();
        prop_assert!(sol.coupling.marginal_error(&mu, &nu) < 1e-9);
        let cost = CostMatrix::from_fn(&mu, &nu, euclidean).unwrap();
        let max = solve_exact_ot_max(&mu, &nu, &cost).unwrap();
        prop_assert!(max.value >= sol.value - 1e-12);
    }
}

#[test]
fn four_by_four_plane_instance() {
    let mut rng = cot_pi::rng::stream(99, 1);
    use rand::Rng;
    let a: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
    let mu = DiscreteDistribution::uniform(2, a.clone()).unwrap();
    let nu = DiscreteDistribution::uniform(2, b.clone()).unwrap();
    let cost: Vec<f64> = (0..16).map(|k| euclidean(&a[2 * (k / 4)..2 * (k / 4) + 2], &b[2 * (k % 4)..2 * (k % 4) + 2])).collect();
    let (lo, _) = brute_force(&cost, 4);
    assert!((wasserstein1(&mu, &nu).unwrap().value - lo).abs() < 1e-9);
}

#[test]
fn worked_examples() {
    let u = |v: &[f64]| DiscreteDistribution::uniform_scalars(v).unwrap();
    let abs = |mu: &DiscreteDistribution, nu: &DiscreteDistribution| {
        CostMatrix::from_fn(mu, nu, |a, b| (a[0] - b[0]).abs()).unwrap()
    };
    let (a, b) = (u(&[1.0, 2.0, 3.0]), u(&[4.0, 5.0, 6.0]));
    assert!((solve_exact_ot(&a, &b, &abs(&a, &b)).unwrap().value - 3.0).abs() < 1e-12);
    assert!((solve_exact_ot_max(&a, &b, &abs(&a, &b)).unwrap().value - 3.0).abs() < 1e-12);
    assert!((solve_1d_quantile_ot(&a, &b, CostTag::Squared).unwrap().value - 9.0).abs() < 1e-12);

    let c = u(&[0.0, 1.0]);
    assert!(solve_exact_ot(&c, &c, &abs(&c, &c)).unwrap().value.abs() < 1e-12);
    assert!((solve_exact_ot_max(&c, &c, &abs(&c, &c)).unwrap().value - 1.0).abs() < 1e-12);
    let d = u(&[0.0, 2.0]);
    assert!((solve_1d_quantile_ot(&c, &d, CostTag::Absolute).unwrap().value - 0.5).abs() < 1e-12);

    let p = DiscreteDistribution::dirac(vec![0.0, 0.0]).unwrap();
    let q = DiscreteDistribution::dirac(vec![3.0, 4.0]).unwrap();
    let sol = wasserstein1(&p, &q).unwrap();
    assert!((sol.value - 5.0).abs() < 1e-12);
    assert_eq!(sol.coupling.entries(), &[(0, 0, 1.0)]);
}

#[test]
fn larger_instance_finishes_quickly() {
    use rand::Rng;
    let mut rng = cot_pi::rng::stream(5, 5);
    let n = 120;
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = (0..n + 7).map(|_| rng.random::<f64>() + 0.3).collect();
    let mu = DiscreteDistribution::uniform_scalars(&x).unwrap();
    let nu = DiscreteDistribution::uniform_scalars(&y).unwrap();
    let m = CostMatrix::from_fn(&mu, &nu, |a, b| (a[0] - b[0]).powi(2)).unwrap();
    let exact = solve_exact_ot(&mu, &nu, &m).unwrap();
    let q = solve_1d_quantile_ot(&mu, &nu, CostTag::Squared).unwrap();
    assert!((exact.value - q.value).abs() < 1e-9);
}
