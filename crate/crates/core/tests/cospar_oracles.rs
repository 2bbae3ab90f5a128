use handover_core::cospar::{
    laplace_posterior, log_likelihood, select_query, synthetic_oracle, ActionGrid, GridSpec, PreferenceConfig,
    PreferencePosterior, PreferenceRecord, PriorKernel, PriorModel,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::sync::Arc;

fn grid(k: &[f64], b: &[f64]) -> ActionGrid {
    ActionGrid::new(GridSpec { stiffness: k.to_vec(), damping: b.to_vec(), forecast_time: vec![0.5], release_force: vec![10.0] })
        .unwrap()
}

fn toy_prior() -> Arc<PriorModel> {
    PriorModel::new(grid(&[80.0, 110.0, 140.0], &[15.0]), PreferenceConfig::default()).unwrap()
}

fn prior_matrix(prior: &PriorModel) -> DMatrix<f64> {
    let g = prior.grid();
    let k = prior.config().kernel;
    DMatrix::from_fn(g.len(), g.len(), |i, j| k.eval(&g.normalized(i), &g.normalized(j)))
}

/// Objective `log p(D | f) - f^T K^-1 f / 2` on the three-action toy.
fn objective(records: &[PreferenceRecord], kinv: &DMatrix<f64>, f: [f64; 3]) -> f64 {
    let v = nalgebra::Vector3::from(f);
    log_likelihood(records, &f, 0.2) - 0.5 * (v.transpose() * kinv * v)[0]
}

/// Coarse-to-fine exhaustive search; the final pass is a 0.01 lattice.
fn brute_force_map(records: &[PreferenceRecord], kinv: &DMatrix<f64>) -> [f64; 3] {
    let mut center = [0.0; 3];
    for (step, half) in [(0.1, 30i32), (0.01, 15)] {
        let mut best = (f64::NEG_INFINITY, center);
        for i in -half..=half {
            for j in -half..=half {
                for l in -half..=half {
                    let f = [center[0] + i as f64 * step, center[1] + j as f64 * step, center[2] + l as f64 * step];
                    let v = objective(records, kinv, f);
                    if v > best.0 {
                        best = (v, f);
                    }
                }
            }
        }
        center = best.1;
    }
    center
}

#[test]
fn newton_map_matches_brute_force_on_three_actions() {
    let prior = toy_prior();
    let kinv = prior_matrix(&prior).try_inverse().unwrap();
    let cases: Vec<Vec<PreferenceRecord>> = vec![
        vec![PreferenceRecord::new(2, 0), PreferenceRecord::new(0, 1), PreferenceRecord::new(2, 1)],
        vec![PreferenceRecord::new(1, 0), PreferenceRecord::new(1, 2)],
        vec![PreferenceRecord::new(0, 1), PreferenceRecord::new(1, 0), PreferenceRecord::new(0, 2)],
    ];
    for records in cases {
        let post = laplace_posterior(&records, &prior).unwrap();
        assert!(post.gradient_norm() < 1e-8);
        let brute = brute_force_map(&records, &kinv);
        let m = post.mean();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let d = (m[i] - m[j]) - (brute[i] - brute[j]);
            assert!(d.abs() <= 0.02, "pair ({i},{j}): newton {:?} brute {:?}", m, brute);
        }
    }
    // the first case is the total order 2 > 0 > 1
    let post = laplace_posterior(&[PreferenceRecord::new(2, 0), PreferenceRecord::new(0, 1), PreferenceRecord::new(2, 1)], &prior).unwrap();
    assert!(post.mean()[2] > post.mean()[0] && post.mean()[0] > post.mean()[1]);
}

#[test]
fn covariance_is_inverse_negative_hessian_and_psd() {
    let prior = PriorModel::new(grid(&[80.0, 100.0, 120.0, 140.0], &[10.0, 15.0, 20.0]), PreferenceConfig::default()).unwrap();
    let records =
        [(3, 0), (4, 7), (11, 2), (5, 6), (5, 9), (1, 10), (4, 0), (8, 3)].map(|(w, l)| PreferenceRecord::new(w, l));
    let post = laplace_posterior(&records, &prior).unwrap();
    let n = prior.grid().len();
    let cov = DMatrix::from_row_slice(n, n, &post.covariance());
    assert_eq!(cov, cov.transpose());
    let eig = SymmetricEigen::new(cov.clone());
    assert!(eig.eigenvalues.iter().all(|e| *e >= -1e-10));

    // negative Hessian: K^-1 + W with W from the probit curvature at the mode
    let k = prior_matrix(&prior);
    let mut w = DMatrix::zeros(n, n);
    let scale = 1.0 / (2f64.sqrt() * 0.2);
    for r in &records {
        let z = (post.mean()[r.winner] - post.mean()[r.loser]) * scale;
        let (_, d2) = handover_core::math::log_normal_cdf_derivs(z);
        let c = -d2 * scale * scale;
        w[(r.winner, r.winner)] += c;
        w[(r.loser, r.loser)] += c;
        w[(r.winner, r.loser)] -= c;
        w[(r.loser, r.winner)] -= c;
    }
    let hessian = k.clone().try_inverse().unwrap() + w;
    let product = &hessian * &cov;
    let err = (product - DMatrix::identity(n, n)).abs().max();
    assert!(err < 1e-6, "H * cov - I = {err:e}");
    for i in 0..n {
        assert!((post.variance(i) - cov[(i, i)]).abs() < 1e-12);
    }
}

#[test]
fn posterior_samples_have_the_laplace_moments() {
    let prior = toy_prior();
    let records = [PreferenceRecord::new(2, 0), PreferenceRecord::new(0, 1)];
    let post = laplace_posterior(&records, &prior).unwrap();
    let cov = post.covariance();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 40_000;
    let mut mean = [0.0; 3];
    let mut second = [[0.0; 3]; 3];
    for _ in 0..draws {
        let s = post.sample(&mut rng);
        for i in 0..3 {
            mean[i] += s[i] / draws as f64;
            for j in 0..3 {
                second[i][j] += (s[i] - post.mean()[i]) * (s[j] - post.mean()[j]) / draws as f64;
            }
        }
    }
    for i in 0..3 {
        assert!((mean[i] - post.mean()[i]).abs() < 0.02);
        for j in 0..3 {
            assert!((second[i][j] - cov[i * 3 + j]).abs() < 0.03, "cov[{i}][{j}]");
        }
    }
}

#[test]
fn exchangeable_prior_proposes_uniformly() {
    let config = PreferenceConfig { kernel: PriorKernel { lengthscale: 0.0, variance: 1.0 }, ..PreferenceConfig::default() };
    let prior = PriorModel::new(grid(&[80.0, 100.0, 120.0, 140.0], &[10.0, 12.5, 15.0, 17.5, 20.0]), config).unwrap();
    let post = PreferencePosterior::empty(&prior);
    let n = prior.grid().len();
    let mut counts = vec![0usize; n];
    for seed in 0..10_000 {
        let (a, b) = select_query(&post, seed).unwrap();
        assert_ne!(a, b);
        counts[a] += 1;
        counts[b] += 1;
    }
    let expected = 20_000.0 / n as f64;
    let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

#[test]
fn refit_is_pure_and_duplicates_sharpen() {
    let prior = toy_prior();
    let base = laplace_posterior(&[PreferenceRecord::new(0, 1)], &prior).unwrap();
    let added = base.update(PreferenceRecord::new(2, 1)).unwrap();
    let removed = laplace_posterior(&added.records()[..1], &prior).unwrap();
    assert_eq!(removed.mean(), base.mean());
    assert_eq!(removed.covariance(), base.covariance());

    let mut post = PreferencePosterior::empty(&prior);
    let mut gaps = Vec::new();
    for _ in 0..5 {
        post = post.update(PreferenceRecord::new(2, 0)).unwrap();
        gaps.push(post.mean()[2] - post.mean()[0]);
    }
    assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
    assert!(post.update(PreferenceRecord::new(1, 1)).is_err());
}

#[test]
fn pairwise_differences_are_reproducible() {
    let prior = PriorModel::new(grid(&[80.0, 110.0, 140.0], &[10.0, 20.0]), PreferenceConfig::default()).unwrap();
    let records = [(0, 1), (2, 3), (4, 5), (5, 0), (3, 4)].map(|(w, l)| PreferenceRecord::new(w, l));
    let a = laplace_posterior(&records, &prior).unwrap();
    let b = laplace_posterior(&records, &prior).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            assert!(((a.mean()[i] - a.mean()[j]) - (b.mean()[i] - b.mean()[j])).abs() <= 1e-6);
        }
    }
}

#[test]
fn oracle_is_fair_for_equal_utilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let draws = 10_000;
    let wins = (0..draws).filter(|_| synthetic_oracle(0, 1, 0.4, 0.4, 0.2, &mut rng).winner == 0).count();
    let rate = wins as f64 / draws as f64;
    assert!((rate - 0.5).abs() <= 0.02, "rate {rate}");
}

#[test]
fn default_grid_prior_factorizes() {
    let prior = PriorModel::new(ActionGrid::default(), PreferenceConfig::default()).unwrap();
    assert_eq!(prior.grid().len(), 1764);
    assert!(prior.jitter() <= 1e-6);
}
