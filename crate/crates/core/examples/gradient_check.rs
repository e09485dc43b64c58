//! Compares backpropagation with central differences on a small actor.

use dubins_intercept::agent::{build_actor, ArchConfig};
use dubins_intercept::nn::{Network, Parameters, Pass};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let arch = ArchConfig {
        actor_hidden: vec![8; 4],
        layer_norm: true,
        ..ArchConfig::default()
    };
    let mut actor = build_actor(&arch, &mut rng).unwrap();
    let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-2.0..2.0));
    let loss = |net: &Network| net.predict(x.view()).unwrap().sum();

    let (out, tape) = actor.forward(x.view(), Pass::Eval).unwrap();
    let (grads, _) = actor.backward(&tape, Array2::ones(out.raw_dim()).view()).unwrap();
    let analytic: Vec<f64> = grads.tensors().into_iter().flatten().copied().collect();

    let h = 1e-6;
    let mut worst = 0.0f64;
    for (i, &g) in analytic.iter().enumerate() {
        let shift = |net: &mut Network, by: f64| {
            *net.tensors_mut().into_iter().flatten().nth(i).unwrap() += by;
        };
        shift(&mut actor, h);
        let up = loss(&actor);
        shift(&mut actor, -2.0 * h);
        let down = loss(&actor);
        shift(&mut actor, h);
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-2));
    }
    println!("{} parameters, worst relative error {worst:.2e}", analytic.len());
}
