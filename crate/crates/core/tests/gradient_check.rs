//! Backpropagation through time against central finite differences.

use qpl_core::lstm::{backward, forward, mse_grad, mse_loss, LstmConfig, LstmModel};

const STEP: f64 = 1e-6;

fn loss(model: &LstmModel<f64>, window: &[f64], target: &[f64]) -> f64 {
    mse_loss(&model.predict(window).unwrap(), target).unwrap()
}

/// Largest relative error between analytic and numeric gradients. Entries
/// whose magnitude is below `floor` are compared on the floor's scale.
fn max_relative_error(
    model: &LstmModel<f64>,
    window: &[f64],
    target: &[f64],
    floor: f64,
) -> (f64, String) {
    let (pred, cache) = forward(model, window).unwrap();
    let analytic = backward(model, &cache, &mse_grad(&pred, target).unwrap()).unwrap();
    let mut probe = model.clone();
    let mut worst = (0.0, String::new());
    for (b, (name, grads)) in analytic.blocks().into_iter().enumerate() {
        #[allow(clippy::needless_range_loop)]
        for k in 0..grads.len() {
            let orig = probe.weights.blocks_mut()[b][k];
            probe.weights.blocks_mut()[b][k] = orig + STEP;
            let up = loss(&probe, window, target);
            probe.weights.blocks_mut()[b][k] = orig - STEP;
            let down = loss(&probe, window, target);
            probe.weights.blocks_mut()[b][k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let err = (grads[k] - numeric).abs() / grads[k].abs().max(numeric.abs()).max(floor);
            if err > worst.0 {
                worst = (
                    err,
                    format!("{name}[{k}]: analytic {} numeric {numeric}", grads[k]),
                );
            }
        }
    }
    worst
}

fn check(layers: usize, units: usize, window: usize, horizon: usize, seed: u64) {
    let model = LstmModel::init(
        LstmConfig::new(layers, units, window, horizon).unwrap(),
        seed,
    )
    .unwrap();
    let inputs: Vec<f64> = (0..window)
        .map(|t| ((t as f64 + 1.0) * 0.9 + seed as f64).sin())
        .collect();
    let target: Vec<f64> = (0..horizon).map(|k| 0.6 - 0.35 * k as f64).collect();
    let (err, at) = max_relative_error(&model, &inputs, &target, 1e-4);
    assert!(
        err < 1e-5,
        "{layers}x{units} W={window} H={horizon} seed {seed}: {err:e} at {at}"
    );
}

#[test]
fn two_by_four_window_five_matches_finite_differences() {
    for seed in [1, 2, 3, 4] {
        check(2, 4, 5, 1, seed);
    }
}

#[test]
fn other_shapes_match_finite_differences() {
    check(1, 3, 4, 1, 7);
    check(3, 2, 3, 2, 8);
    check(2, 5, 6, 3, 9);
}
