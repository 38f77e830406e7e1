mod common;

use crackrom::ml::{
    fit_poly_ridge, lsq_minimize, nn_forward, nn_train, Activation, FeedforwardNet, Loss, LsqOptions, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..5 {
        for (act, loss) in [(Activation::Logistic, Loss::CrossEntropy), (Activation::Identity, Loss::Squared)] {
            let err = common::gradient_check(seed, act, loss);
            assert!(err < 1e-4, "seed {seed} {loss:?}: {err:e}");
        }
    }
}

#[test]
fn ridge_reproduces_an_exact_cubic() {
    assert!(common::cubic_fit_error() < 1e-6);
}

#[test]
fn ridge_shrinks_toward_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<(f64, f64)> = (0..40)
        .map(|_| {
            let x = rng.gen_range(0.0..1.0);
            (x, x * x + rng.gen_range(-0.05..0.05))
        })
        .collect();
    let norms: Vec<f64> = [0.0, 0.1, 1.0, 10.0, 1e6]
        .iter()
        .map(|&l| fit_poly_ridge(&samples, 3, l).unwrap().slope_norm())
        .collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{norms:?}");
    assert!(norms[4] < 1e-4);
}

#[test]
fn nelder_mead_solves_rosenbrock() {
    let (f, evals) = common::rosenbrock_fit();
    assert!(f < 1e-3, "objective {f}");
    assert!(evals <= 2000);
}

#[test]
fn nelder_mead_never_worse_than_start_and_stays_in_bounds() {
    let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2) + (x[0] * x[1]).sin();
    let bounds = [(0.0, 2.0), (-0.5, 0.5)];
    let start = [1.0, 0.0];
    let r = lsq_minimize(f, &start, &bounds, &LsqOptions::default()).unwrap();
    assert!(r.objective <= f(&start));
    for (x, (lo, hi)) in r.best.iter().zip(bounds) {
        assert!(*x >= lo && *x <= hi);
    }
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn training_learns_a_separable_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<(Vec<f64>, f64)> = (0..400)
        .map(|_| {
            let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = f64::from(x[0] + 0.5 * x[3] > 0.0);
            (x, y)
        })
        .collect();
    let mut net = FeedforwardNet::new(9, &crackrom::ml::MCPIC_HIDDEN, Activation::Logistic, 0);
    let report = nn_train(&mut net, &data, Loss::CrossEntropy, &TrainConfig::default()).unwrap();
    assert!(report.loss_curve.last().unwrap() < &report.loss_curve[0]);
    let correct = data
        .iter()
        .filter(|(x, y)| (nn_forward(&net, x).unwrap() >= 0.5) == (*y == 1.0))
        .count();
    assert!(correct as f64 / data.len() as f64 > 0.9, "{correct}/400");
}

#[test]
fn network_round_trips_through_json() {
    let net = FeedforwardNet::new(9, &crackrom::ml::MCPIC_HIDDEN, Activation::Identity, 3);
    let back: FeedforwardNet = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
    let x = [0.1, -0.2, 0.3, 0.0, 1.0, 0.5, -1.0, 0.25, 0.75];
    assert_eq!(nn_forward(&net, &x).unwrap(), nn_forward(&back, &x).unwrap());
}
