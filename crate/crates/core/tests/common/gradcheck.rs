//! Central finite differences against analytic gradients.

use dubins_intercept::nn::{Activation, DenseLayer, Network, Parameters};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

pub const H: f64 = 1e-6;

/// Denominator floor for the relative error. Round-off in a difference
/// quotient with h = 1e-6 reaches a few 1e-9 on saturated networks, so for
/// gradients smaller than this the check is effectively absolute.
pub const FLOOR: f64 = 1e-2;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn nudge<P: Parameters + ?Sized>(p: &mut P, mut i: usize, by: f64) {
    for t in p.tensors_mut() {
        if i < t.len() {
            t[i] += by;
            return;
        }
        i -= t.len();
    }
    panic!("parameter index out of range");
}

/// Worst relative error over every parameter of `p`.
pub fn check_params<P, G, F>(p: &mut P, analytic: &G, f: F) -> f64
where
    P: Parameters + ?Sized,
    G: Parameters + ?Sized,
    F: Fn(&P) -> f64,
{
    let grads: Vec<f64> = analytic.tensors().into_iter().flatten().copied().collect();
    assert_eq!(grads.len(), p.param_count());
    let mut worst = 0.0f64;
    for (i, &g) in grads.iter().enumerate() {
        let orig: Vec<f64> = p.tensors().into_iter().flatten().copied().collect();
        nudge(p, i, H);
        let up = f(p);
        nudge(p, i, -2.0 * H);
        let down = f(p);
        // restore exactly rather than trusting +h-2h+h to cancel
        let mut k = 0;
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = orig[k];
                k += 1;
            }
        }
        worst = worst.max(rel_error(g, (up - down) / (2.0 * H)));
    }
    worst
}

/// Worst relative error of `analytic` against differences of `f` in each entry of `x`.
pub fn check_input<F: Fn(&Array2<f64>) -> f64>(x: &Array2<f64>, analytic: &Array2<f64>, f: F) -> f64 {
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for (idx, &g) in analytic.indexed_iter() {
        let orig = probe[idx];
        probe[idx] = orig + H;
        let up = f(&probe);
        probe[idx] = orig - H;
        let down = f(&probe);
        probe[idx] = orig;
        worst = worst.max(rel_error(g, (up - down) / (2.0 * H)));
    }
    worst
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// A random MLP with 1..=4 layers of width ≤ 16.
pub fn random_network(rng: &mut impl Rng) -> Network {
    let depth = rng.random_range(1..=4);
    let mut dims = vec![rng.random_range(1..=16)];
    for _ in 0..depth {
        dims.push(rng.random_range(1..=16));
    }
    let acts = [Activation::Selu, Activation::Tanh, Activation::Linear];
    let layers = dims
        .windows(2)
        .map(|w| {
            let act = acts[rng.random_range(0..acts.len())];
            // with one or two units the normalized output is ±1 and only
            // round-off survives in the differences
            let ln = w[1] > 3 && rng.random_bool(0.5);
            DenseLayer::lecun(w[0], w[1], act, rng).with_layer_norm(ln)
        })
        .collect();
    Network::new(layers).unwrap()
}
