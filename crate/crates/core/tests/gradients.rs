//! Finite-difference checks of the analytic gradients over random
//! architectures, batches and parameter values.

use csireid::mlp::{Matrix, MlpArchitecture, MlpModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const MAX_REL_ERR: f64 = 1e-4;
/// Points this close to a LeakyReLU kink are not differentiable at step size.
const KINK_MARGIN: f64 = 1e-3;
/// Roundoff of the extrapolated difference, `64 ε max(|L|, 1) / h`.
fn fd_roundoff(loss: f64) -> f64 {
    64.0 * f64::EPSILON * loss.abs().max(1.0) / STEP
}

fn randomized(arch: MlpArchitecture, seed: u64) -> MlpModel {
    let mut model = MlpModel::init(arch, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for h in &mut model.hidden {
        h.bn_scale.iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5));
        h.bn_shift.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    model.output.bias.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    model
}

/// Smallest distance of any LeakyReLU input from its kink at zero.
fn kink_distance(model: &MlpModel, x: &Matrix) -> f64 {
    let cache = model.forward_train(x).unwrap();
    let mut nearest = f64::INFINITY;
    for (l, h) in model.hidden.iter().enumerate() {
        let n = cache.normalized(l);
        for i in 0..n.rows() {
            for j in 0..n.cols() {
                nearest = nearest.min((h.bn_scale[j] * n.get(i, j) + h.bn_shift[j]).abs());
            }
        }
    }
    nearest
}

/// Smallest pre-normalization batch variance relative to ε.
fn variance_margin(model: &MlpModel, x: &Matrix) -> f64 {
    let stats = model.forward_train(x).unwrap().batch_stats();
    let eps = model.arch.batchnorm_epsilon;
    stats.iter().flat_map(|s| s.var.iter()).fold(f64::INFINITY, |m, &v| m.min(v / eps))
}

/// Largest relative error over entries whose discrepancy exceeds the
/// central-difference roundoff; exactly-zero gradients (a shift absorbed by
/// the next batch norm) are resolved only to that level.
fn worst_relative_error(model: &mut MlpModel, x: &Matrix, labels: &[usize]) -> f64 {
    let base = model.loss_and_grad(x, labels).unwrap();
    let roundoff = fd_roundoff(base.loss);
    let analytic = base.gradients;
    let mut worst: f64 = 0.0;
    for t in 0..model.parameters().len() {
        for j in 0..model.parameters()[t].len() {
            let original = model.parameters()[t][j];
            let mut central = |h: f64| {
                model.parameters_mut()[t][j] = original + h;
                let plus = model.loss_and_grad(x, labels).unwrap().loss;
                model.parameters_mut()[t][j] = original - h;
                let minus = model.loss_and_grad(x, labels).unwrap().loss;
                model.parameters_mut()[t][j] = original;
                (plus - minus) / (2.0 * h)
            };
            // Richardson step: units with variance far below ε curve sharply.
            let numeric = (4.0 * central(STEP / 2.0) - central(STEP)) / 3.0;
            let a = analytic.tensors[t][j];
            if (a - numeric).abs() <= roundoff {
                continue;
            }
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_gradients_match_central_differences(
        input in 1usize..6,
        h1 in 1usize..7,
        h2 in 1usize..7,
        classes in 2usize..6,
        batch in 2usize..8,
        slope in 0.01f64..0.3,
        seed in any::<u64>(),
    ) {
        let mut arch = MlpArchitecture::new(input, classes).with_hidden([h1, h2]);
        arch.leaky_slope = slope;
        let mut model = randomized(arch, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let x = Matrix::from_vec(
            batch,
            input,
            (0..batch * input).map(|_| rng.random_range(-2.0..2.0)).collect(),
        );
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        prop_assume!(kink_distance(&model, &x) > KINK_MARGIN);
        // Far below ε the loss curves on a scale near the step size.
        prop_assume!(variance_margin(&model, &x) > 10.0);
        let worst = worst_relative_error(&mut model, &x, &labels);
        prop_assert!(worst < MAX_REL_ERR, "max relative error {worst:e}");
    }
}

#[test]
fn gradient_of_a_trained_network_still_matches() {
    let arch = MlpArchitecture::new(4, 3).with_hidden([6, 5]);
    let mut model = randomized(arch, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Matrix::from_vec(8, 4, (0..32).map(|_| rng.random_range(-3.0..3.0)).collect());
    let labels = [0, 1, 2, 0, 1, 2, 2, 1];
    assert!(kink_distance(&model, &x) > KINK_MARGIN);
    let mut state = csireid::mlp::AdamState::new(&model, 1e-2);
    for _ in 0..50 {
        let lg = model.loss_and_grad(&x, &labels).unwrap();
        csireid::mlp::adam_step(&mut model, &mut state, &lg.gradients).unwrap();
    }
    assert!(worst_relative_error(&mut model, &x, &labels) < MAX_REL_ERR);
}
