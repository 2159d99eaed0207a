use super::rollout::RolloutBatch;

/// Raw (unnormalised) advantages and returns, per env backwards in time.
pub fn gae_raw(batch: &RolloutBatch, gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let (e, steps) = (batch.n_envs, batch.steps);
    let mut adv = vec![0.0; e * steps];
    for env in 0..e {
        let mut next_adv = 0.0;
        let mut next_value = batch.bootstrap[env];
        for s in (0..steps).rev() {
            let i = s * e + env;
            let live = if batch.dones[i] { 0.0 } else { 1.0 };
            let delta = batch.rewards[i] + gamma * next_value * live - batch.values[i];
            next_adv = delta + gamma * lam * live * next_adv;
            adv[i] = next_adv;
            next_value = batch.values[i];
        }
    }
    let returns = adv.iter().zip(&batch.values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Advantages normalised to zero mean and unit std (`eps = 1e-8`), and
/// returns `A + V` computed before normalisation.
pub fn compute_gae(batch: &RolloutBatch, gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let (mut adv, returns) = gae_raw(batch, gamma, lam);
    normalize(&mut adv);
    (adv, returns)
}

pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v = (*v - mean) / (std + 1e-8);
    }
}
