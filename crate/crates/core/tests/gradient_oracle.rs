mod support;

use cppnlab::train::loss_and_grad;
use cppnlab::{input_grid, LossSpace, TargetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracle;

#[test]
fn library_loss_matches_naive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points = input_grid(6).unwrap();
    for _ in 0..10 {
        let depth = rng.random_range(2..=5);
        let m = oracle::random_architecture(&mut rng, depth);
        let teacher = oracle::random_architecture(&mut rng, depth);
        let target = TargetSpec::from_mlp(&teacher, 6).unwrap();
        let TargetSpec::Hsv { values, .. } = &target else { unreachable!() };
        for space in [LossSpace::HsvPost, LossSpace::Rgb] {
            let (mse, _) = loss_and_grad(&m, &points, &target, space).unwrap();
            let reference = oracle::loss(&m, &points, values, space);
            assert!((mse - reference).abs() <= 1e-12, "{space}: {mse} vs {reference}");
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let points = input_grid(4).unwrap();
    let mut done = 0;
    while done < 10 {
        let depth = rng.random_range(2..=5);
        let m = oracle::random_architecture(&mut rng, depth);
        let target = TargetSpec::from_mlp(&oracle::random_architecture(&mut rng, depth), 4).unwrap();
        let TargetSpec::Hsv { values, .. } = &target else { unreachable!() };
        if oracle::kink_margin(&m, &points, values) <= 1e-3 {
            continue;
        }
        for space in [LossSpace::HsvPost, LossSpace::Rgb] {
            let (_, g) = loss_and_grad(&m, &points, &target, space).unwrap();
            let (worst, checked) = oracle::worst_relative_error(&m, &points, values, space, &g.weights, &g.bias, 1e-5);
            assert!(checked > 0);
            assert!(worst <= 1e-4, "{space} depth {depth}: relative error {worst}");
        }
        done += 1;
    }
}
