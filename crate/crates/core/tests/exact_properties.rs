use hetgp_core::exact::{log_marginal_likelihood, ExactGpModel, Noise};
use hetgp_core::kernels::{KernelConfig, KernelFamily, MaternNu, Point2};
use hetgp_core::mean::MeanFunction;
use proptest::prelude::*;

const FAMILIES: [KernelFamily; 4] = [
    KernelFamily::Rbf,
    KernelFamily::RationalQuadratic,
    KernelFamily::Matern(MaternNu::ThreeHalves),
    KernelFamily::Matern(MaternNu::FiveHalves),
];

fn point() -> impl Strategy<Value = Point2> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| [a, b])
}

fn kernel() -> impl Strategy<Value = KernelConfig> {
    (0..FAMILIES.len(), 0.3..2.0f64, 0.3..3.0f64).prop_map(|(f, l, s)| KernelConfig::new(FAMILIES[f], l, s).unwrap())
}

fn problem() -> impl Strategy<Value = (Vec<Point2>, Vec<f64>, KernelConfig, f64)> {
    (2usize..15).prop_flat_map(|n| {
        (
            prop::collection::vec(point(), n),
            prop::collection::vec(-2.0..2.0f64, n),
            kernel(),
            0.01..0.5f64,
        )
    })
}

fn fit(x: &[Point2], y: &[f64], k: KernelConfig, v: f64) -> ExactGpModel {
    ExactGpModel::new(x.to_vec(), y.to_vec(), k, MeanFunction::Constant(0.2), Noise::homoscedastic(v)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_variance_below_prior((x, y, k, v) in problem(), qs in prop::collection::vec(point(), 1..10)) {
        let (_, var) = fit(&x, &y, k, v).predict(&qs).unwrap();
        for s in var {
            prop_assert!(s >= 0.0 && s <= k.outputscale() + 1e-9);
        }
    }

    #[test]
    fn lml_is_permutation_invariant((x, y, k, v) in problem(), shift in 1usize..14) {
        let n = x.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
        prop_assume!({
            let mut p = perm.clone();
            p.sort_unstable();
            p.dedup();
            p.len() == n
        });
        let xp: Vec<Point2> = perm.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let mean = MeanFunction::Constant(0.1);
        let a = log_marginal_likelihood(&x, &y, &mean, &k, &Noise::homoscedastic(v)).unwrap();
        let b = log_marginal_likelihood(&xp, &yp, &mean, &k, &Noise::homoscedastic(v)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn equal_per_point_noise_matches_homoscedastic((x, y, k, v) in problem(), qs in prop::collection::vec(point(), 1..10)) {
        let homo = fit(&x, &y, k, v);
        let het = ExactGpModel::new(x.clone(), y.clone(), k, MeanFunction::Constant(0.2), Noise::PerPoint(vec![v; x.len()])).unwrap();
        let (m1, v1) = homo.predict(&qs).unwrap();
        let (m2, v2) = het.predict(&qs).unwrap();
        for i in 0..qs.len() {
            prop_assert!((m1[i] - m2[i]).abs() < 1e-12);
            prop_assert!((v1[i] - v2[i]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn adding_a_point_never_increases_variance((x, y, k, v) in problem(), extra in point(), qs in prop::collection::vec(point(), 1..10)) {
        let (_, before) = fit(&x, &y, k, v).predict(&qs).unwrap();
        let mut x2 = x.clone();
        let mut y2 = y.clone();
        x2.push(extra);
        y2.push(0.0);
        let (_, after) = fit(&x2, &y2, k, v).predict(&qs).unwrap();
        for i in 0..qs.len() {
            prop_assert!(after[i] <= before[i] + 1e-9);
        }
    }
}

#[test]
fn near_noise_free_fit_interpolates() {
    let x: Vec<Point2> = (0..25).map(|i| [(i % 5) as f64 * 0.4, (i / 5) as f64 * 0.4]).collect();
    let y: Vec<f64> = x.iter().map(|p| (2.0 * p[0]).sin() * p[1].cos()).collect();
    let k = KernelConfig::new(KernelFamily::Rbf, 0.5, 1.0).unwrap();
    let m = ExactGpModel::new(x.clone(), y.clone(), k, MeanFunction::Zero, Noise::PerPoint(vec![1e-12; 25])).unwrap();
    let (mu, _) = m.predict(&x).unwrap();
    let rmse = (mu.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 25.0).sqrt();
    assert!(rmse < 1e-6, "{rmse}");
}
