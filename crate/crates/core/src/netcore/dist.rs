//! Diagonal Gaussian action head with state-independent log std.

use rand::Rng;
use rand_distr::StandardNormal;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

pub fn log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_2PI
        })
        .sum()
}

pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LOG_2PI).sum()
}

/// Draw `mean + exp(log_std) * eps` and return it with its log density.
pub fn sample_action<R: Rng + ?Sized>(mean: &[f64], log_std: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
    let action: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, ls)| {
            let eps: f64 = rng.sample(StandardNormal);
            m + ls.exp() * eps
        })
        .collect();
    let lp = log_prob(&action, mean, log_std);
    (action, lp)
}
