use std::sync::Arc;

use cot_pi::oracles::{
    bures_trace, frechet_hoeffding_bounds, gaussian_quantiles, gaussian_vc, location_vc_affine, normal_quantile,
    sqrt_psd, CovariateLaw, GaussianModelSpec, NoiseModel, QuantileFn,
};
use cot_pi::ot::{solve_1d_quantile_ot_max, CostTag, DiscreteDistribution};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn random_psd(d: usize, rng: &mut cot_pi::rng::Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose()
}

#[test]
fn linear_location_oracle() {
    let v = gaussian_vc(&GaussianModelSpec::linear_location(), 200_000, 1).unwrap();
    assert!((v.value - 4.84).abs() < 3.0 * v.std_error, "{v:?}");
    let exact = location_vc_affine(
        &DMatrix::from_element(1, 1, -0.6),
        &DVector::zeros(1),
        &DMatrix::from_element(1, 1, 1.6),
        &DVector::zeros(1),
        &DMatrix::identity(1, 1),
        &DMatrix::identity(1, 1),
    )
    .unwrap();
    assert!((exact - 4.84).abs() < 1e-12);
}

#[test]
fn quadratic_location_oracle() {
    // 0.8^2 * E[Z^4] = 0.64 * 3
    let v = gaussian_vc(&GaussianModelSpec::quadratic_location(), 400_000, 2).unwrap();
    assert!((v.value - 1.92).abs() < 3.0 * v.std_error, "{v:?}");
}

#[test]
fn scale_model_oracle_matches_quadrature() {
    let spec = GaussianModelSpec::scale();
    let v = gaussian_vc(&spec, 400_000, 3).unwrap();
    // E[(|0.5Z - 0.35| - |1.1Z + 0.35|)^2] by adaptive quadrature.
    let reference = 0.702_071_9;
    assert!((v.value - reference).abs() < 3.0 * v.std_error, "{v:?}");
}

#[test]
fn identical_arms_have_zero_oracle() {
    let spec = GaussianModelSpec::scalar(NoiseModel::Location, |z| z.sin(), |z| z.sin());
    assert_eq!(gaussian_vc(&spec, 1000, 4).unwrap().value, 0.0);
    assert!(gaussian_vc(&spec, 99, 4).is_err());
}

#[test]
fn frechet_hoeffding_agrees_with_lemma() {
    let spec = GaussianModelSpec::linear_location();
    let (q0, q1) = gaussian_quantiles(&spec).unwrap();
    let fh = frechet_hoeffding_bounds(&q0, &q1, &spec.z_law, 20_000, 1024, 5).unwrap();
    let vc = gaussian_vc(&spec, 20_000, 6).unwrap();
    let se = fh.lower.std_error.hypot(vc.std_error);
    assert!((fh.lower.value - vc.value).abs() < 3.0 * se, "{:?} vs {vc:?}", fh.lower);

    let spec = GaussianModelSpec::scale();
    let (q0, q1) = gaussian_quantiles(&spec).unwrap();
    let fh = frechet_hoeffding_bounds(&q0, &q1, &spec.z_law, 20_000, 1024, 7).unwrap();
    let vc = gaussian_vc(&spec, 20_000, 8).unwrap();
    let se = fh.lower.std_error.hypot(vc.std_error);
    assert!((fh.lower.value - vc.value).abs() < 3.0 * se + 1e-3);
}

#[test]
fn countermonotone_standard_normals() {
    let q: QuantileFn = Arc::new(|u: f64, _: &[f64]| normal_quantile(u));
    let law = CovariateLaw::StandardNormal { dim: 1 };
    let fh = frechet_hoeffding_bounds(&q, &q, &law, 100, 20_000, 9).unwrap();
    assert!(fh.lower.value.abs() < 1e-12);
    assert!((fh.upper.value - 4.0).abs() < 0.01, "{:?}", fh.upper);

    let n = 2000;
    let pts: Vec<f64> = (0..n).map(|k| normal_quantile((k as f64 + 0.5) / n as f64)).collect();
    let mu = DiscreteDistribution::uniform_scalars(&pts).unwrap();
    let max = solve_1d_quantile_ot_max(&mu, &mu, CostTag::Squared).unwrap();
    assert!((max.value - fh.upper.value).abs() < 0.01);
    assert!(frechet_hoeffding_bounds(&q, &q, &law, 100, 9, 0).is_err());
}

#[test]
fn matrix_square_root() {
    let mut rng = cot_pi::rng::stream(10, 0);
    for d in 1..6 {
        let s = random_psd(d, &mut rng);
        let r = sqrt_psd(&s).unwrap();
        assert!((&r * &r - &s).norm() < 1e-8);
    }
}

#[test]
fn bures_trace_properties() {
    let mut rng = cot_pi::rng::stream(11, 0);
    let i = DMatrix::<f64>::identity(3, 3);
    assert!(bures_trace(&i, &i).unwrap().abs() < 1e-12);
    let one = DMatrix::from_element(1, 1, 1.0);
    let four = DMatrix::from_element(1, 1, 4.0);
    assert!((bures_trace(&one, &four).unwrap() - 1.0).abs() < 1e-12);
    for d in 1..5 {
        let a = random_psd(d, &mut rng);
        let b = random_psd(d, &mut rng);
        let ab = bures_trace(&a, &b).unwrap();
        let ba = bures_trace(&b, &a).unwrap();
        assert!(ab >= -1e-10);
        assert!((ab - ba).abs() < 1e-8);
    }
}

#[test]
fn multivariate_location_oracle() {
    let a0 = DMatrix::from_row_slice(2, 1, &[1.0, -0.5]);
    let a1 = DMatrix::from_row_slice(2, 1, &[0.0, 0.5]);
    let s0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
    let s1 = DMatrix::identity(2, 2);
    let (f0, f1) = (a0.clone(), a1.clone());
    let spec = GaussianModelSpec::new(
        NoiseModel::Location,
        Arc::new(move |z: &[f64]| (&f0 * DVector::from_column_slice(z)).iter().copied().collect()),
        Arc::new(move |z: &[f64]| (&f1 * DVector::from_column_slice(z)).iter().copied().collect()),
        s0.clone(),
        s1.clone(),
        CovariateLaw::StandardNormal { dim: 1 },
    )
    .unwrap();
    let mc = gaussian_vc(&spec, 100_000, 12).unwrap();
    let exact = location_vc_affine(&a0, &DVector::zeros(2), &a1, &DVector::zeros(2), &s0, &s1).unwrap();
    assert!((mc.value - exact).abs() < 3.0 * mc.std_error + 1e-12);
}
