mod common;

use common::{finite_difference_check, random_matrix, toy_gradient_check};
use pgae::ae::{init_network, NetworkConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_all_ok(checks: &[common::GradCheck], what: &str) {
    let bad: Vec<_> = checks.iter().filter(|c| !c.ok()).collect();
    assert!(
        bad.is_empty(),
        "{what}: {} mismatches, first {:?}",
        bad.len(),
        bad.first()
    );
}

#[test]
fn toy_nets_match_finite_differences() {
    for seed in 0..20 {
        for alpha in [0.0, 1.0] {
            assert_all_ok(
                &toy_gradient_check(seed, alpha),
                &format!("seed {seed} alpha {alpha}"),
            );
        }
    }
}

#[test]
fn deeper_net_with_fractional_alpha() {
    let net = init_network(&NetworkConfig::with_hidden(16, &[7, 6, 5], 4, 42)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = random_matrix(&mut rng, 5, 16);
    let targets = random_matrix(&mut rng, 5, 4);
    let checks = finite_difference_check(&net, &batch, &targets, 0.3);
    assert_eq!(checks.len(), net.parameter_count());
    assert_all_ok(&checks, "deeper net");
}

#[test]
fn single_sample_batch() {
    let net = init_network(&NetworkConfig::with_hidden(6, &[5], 3, 11)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = random_matrix(&mut rng, 1, 6);
    let targets = random_matrix(&mut rng, 1, 3);
    assert_all_ok(
        &finite_difference_check(&net, &batch, &targets, 2.0),
        "batch of one",
    );
}
