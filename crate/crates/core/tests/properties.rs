mod common;

use common::*;
use mcgpp::covariance::DEFAULT_JITTER_SCHEDULE;
use mcgpp::diagnostics::{random_inputs, random_theta, regret_term};
use mcgpp::inference::laplace_at;
use mcgpp::kernels::cov_cross;
use mcgpp::likelihood::{phi, phi_grad_w};
use mcgpp::{assemble_k, chol_psd, CovFamily, Hyperparams, KernelParams, RegressionCoefficients};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn family() -> impl Strategy<Value = CovFamily> {
    prop_oneof![
        Just(CovFamily::SquaredExponential),
        (0.2f64..4.0).prop_map(|nu| CovFamily::Matern { nu }),
        (0.1f64..=2.0).prop_map(|gamma| CovFamily::GammaExponential { gamma }),
        (0.1f64..10.0).prop_map(|alpha| CovFamily::RationalQuadratic { alpha }),
    ]
}

fn kernel(p: usize) -> impl Strategy<Value = KernelParams> {
    (-2.0f64..2.0, proptest::collection::vec(0.05f64..5.0, p)).prop_map(|(v, d)| KernelParams::diagonal(v, &d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn cross_covariance_is_symmetric(f in family(), pa in kernel(2), pb in kernel(2), d in proptest::collection::vec(-4.0f64..4.0, 2)) {
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        prop_assert_eq!(cov_cross(&f, &d, &pa, &pb).unwrap(), cov_cross(&f, &neg, &pb, &pa).unwrap());
    }

    #[test]
    fn assembled_covariance_is_symmetric_psd(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let p = rng.random_range(1..=3);
        let theta = random_theta(&mut rng, p);
        let k = assemble_k(&random_inputs(&mut rng, p), &theta).unwrap();
        prop_assert_eq!(&k, &k.transpose());
        let eig = k.clone().symmetric_eigen().eigenvalues;
        let norm = eig.amax();
        prop_assert!(eig.min() >= -1e-8 * norm.max(1e-300));
    }

    #[test]
    fn regret_is_monotone(seed in any::<u64>(), d1 in 0.01f64..5.0, d2 in 0.01f64..5.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let theta = random_theta(&mut rng, 1);
        let k = assemble_k(&random_inputs(&mut rng, 1), &theta).unwrap();
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        prop_assert!(regret_term(&k, lo).unwrap() <= regret_term(&k, hi).unwrap() + 1e-12);
        // K + M ⪰ K for PSD M.
        let n = k.nrows();
        let m = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let bigger = &k + &m * m.transpose();
        prop_assert!(regret_term(&k, lo).unwrap() <= regret_term(&bigger, lo).unwrap() + 1e-12);
    }

    #[test]
    fn phi_gradient_matches_differences(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let theta = random_theta(&mut rng, 1);
        let inputs = random_inputs(&mut rng, 1);
        let k = assemble_k(&inputs, &theta).unwrap();
        let n = k.nrows();
        let z: Vec<u64> = (0..n).map(|_| rng.random_range(0..8)).collect();
        let data = intercept_dataset(z[..inputs.x1.len()].to_vec(), inputs.x1.clone(), z[inputs.x1.len()..].to_vec(), inputs.x2.clone());
        let beta = RegressionCoefficients::new(vec![rng.random_range(-1.0..1.0)], vec![rng.random_range(-1.0..1.0)]);
        // Add a floor so K⁻¹ stays moderate and the difference quotient is accurate.
        let fac = chol_psd(&(&k + DMatrix::identity(n, n) * 0.1), &DEFAULT_JITTER_SCHEDULE).unwrap();
        let tau = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (g, _) = phi_grad_w(&tau, &data, &beta, &fac).unwrap();
        let fd = fd_gradient(|t| phi(t, &data, &beta, &fac).unwrap(), &tau, 1e-5);
        prop_assert!((&g - &fd).amax() <= 1e-5 * g.amax().max(1.0));
    }

    #[test]
    fn laplace_mode_is_stationary(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let theta = random_theta(&mut rng, 1);
        let inputs = random_inputs(&mut rng, 1);
        let k = assemble_k(&inputs, &theta).unwrap();
        let n1 = inputs.x1.len();
        let z = draw_counts(&k, &vec![0.5; k.nrows()], &mut rng);
        let data = intercept_dataset(z[..n1].to_vec(), inputs.x1.clone(), z[n1..].to_vec(), inputs.x2.clone());
        let beta = RegressionCoefficients::new(vec![0.5], vec![0.5]);
        let r = laplace_at(&data, &beta, &Hyperparams::Mcgp(theta), 1e-9, 200).unwrap();
        // The remaining Newton step in f, from (I + K W) δf = K ∇L − f, is negligible.
        let mu = r.mode.map(|t| (0.5 + t).exp());
        let zv = DVector::from_iterator(z.len(), z.iter().map(|&v| v as f64));
        let n = k.nrows();
        let lhs = DMatrix::identity(n, n) + &k * DMatrix::from_diagonal(&mu);
        let rhs = &k * (zv - &mu) - &r.mode;
        let step = lhs.lu().solve(&rhs).unwrap();
        prop_assert!(step.amax() < 1e-6 * (1.0 + r.mode.amax()), "{}", step.amax());
    }

    #[test]
    fn exposure_compensated_by_intercept(seed in any::<u64>(), shift in -3.0f64..3.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let theta = random_theta(&mut rng, 1);
        let inputs = random_inputs(&mut rng, 1);
        let k = assemble_k(&inputs, &theta).unwrap();
        let n1 = inputs.x1.len();
        let z = draw_counts(&k, &vec![0.0; k.nrows()], &mut rng);
        let data = intercept_dataset(z[..n1].to_vec(), inputs.x1.clone(), z[n1..].to_vec(), inputs.x2.clone());
        let mut scaled = data.clone();
        for c in scaled.components.iter_mut() {
            c.exposure = vec![shift.exp(); c.len()];
        }
        let theta = Hyperparams::Mcgp(theta);
        let b = RegressionCoefficients::new(vec![0.2], vec![-0.1]);
        let b_shift = RegressionCoefficients::new(vec![0.2 - shift], vec![-0.1 - shift]);
        // The likelihood itself is invariant up to rounding of the offsets.
        let n = k.nrows();
        let fac = chol_psd(&(&k + DMatrix::identity(n, n) * 0.1), &DEFAULT_JITTER_SCHEDULE).unwrap();
        let tau = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let p0 = phi(&tau, &data, &b, &fac).unwrap();
        let p1 = phi(&tau, &scaled, &b_shift, &fac).unwrap();
        prop_assert!((p0 - p1).abs() <= 1e-12 * p0.abs().max(1.0), "{} vs {}", p0, p1);
        // The Laplace value inherits the conditioning of the mode search.
        let l0 = mcgpp::laplace_marginal_loglik(&b, &theta, &data).unwrap();
        let l1 = mcgpp::laplace_marginal_loglik(&b_shift, &theta, &scaled).unwrap();
        prop_assert!((l0 - l1).abs() <= 1e-8 * l0.abs().max(1.0), "{} vs {}", l0, l1);
    }
}
