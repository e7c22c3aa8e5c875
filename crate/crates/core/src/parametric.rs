//! Peer selection for parametric models.
//!
//! Each round the target device probes a random subset of peers: for every
//! candidate it simulates one gradient step of its current parameters on
//! the candidate's loss, scores the stepped parameters on its own local
//! dataset, and adopts the best candidate's step. The target's data is
//! used only for scoring, never for gradient computation.
//!
//! The online variant replaces each candidate's exact gradient with an
//! estimate computed from a fresh batch drawn from the candidate's
//! generating distribution.

use rand_chacha::ChaCha8Rng;

use crate::linear::{loss_gradient, ridge_least_squares, squared_loss, LinearParams};
use crate::rng::{stream_rng, STREAM_CANDIDATES, STREAM_ONLINE_BATCH};
use crate::synth::{sample_device_batch, Federation, LocalDataset};
use crate::{Error, Result};

/// Regularization used by the optional local pretraining init.
const PRETRAIN_RIDGE_LAMBDA: f64 = 1e-3;

/// How the target's parameters are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Start from the zero vector.
    Zero,
    /// Ridge-regularized fit of the target's own dataset.
    LocalPretrain,
}

#[derive(Debug, Clone)]
pub struct Alg1Config {
    pub learning_rate: f64,
    pub rounds: usize,
    pub candidate_count: usize,
    pub target_device: usize,
    pub init: InitScheme,
    pub seed: u64,
}

impl Alg1Config {
    pub fn new(learning_rate: f64, rounds: usize, candidate_count: usize, seed: u64) -> Self {
        Alg1Config {
            learning_rate,
            rounds,
            candidate_count,
            target_device: 0,
            init: InitScheme::Zero,
            seed,
        }
    }

    fn validate(&self, n_devices: usize) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.target_device >= n_devices {
            return Err(Error::DeviceIndex {
                index: self.target_device,
                n: n_devices,
            });
        }
        if n_devices < 2 {
            return Err(Error::Config(
                "federation needs at least two devices".into(),
            ));
        }
        if self.candidate_count == 0 || self.candidate_count > n_devices - 1 {
            return Err(Error::Config(format!(
                "candidate_count must be in 1..={}, got {}",
                n_devices - 1,
                self.candidate_count
            )));
        }
        Ok(())
    }
}

/// Audit record of one selection round.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub round: usize,
    /// Probed device indices, ascending.
    pub candidates: Vec<usize>,
    /// Target-loss decrease per candidate, aligned with `candidates`.
    pub rewards: Vec<f64>,
    pub chosen: usize,
    pub target_loss_after: f64,
}

/// Output of one selection run.
#[derive(Debug, Clone)]
pub struct Alg1Run {
    pub final_params: LinearParams,
    pub records: Vec<SelectionRecord>,
    /// Parameters before round 1 and after every round; length rounds + 1.
    pub snapshots: Vec<LinearParams>,
}

/// Simulated gradient step of `current` on one peer's loss.
pub fn probe_gradient_step(
    current: &LinearParams,
    peer_data: &LocalDataset,
    learning_rate: f64,
) -> Result<LinearParams> {
    let g = loss_gradient(current, peer_data)?;
    Ok(LinearParams::new(&current.weights - learning_rate * g))
}

/// Decrease of the target's loss when moving from `current` to `candidate`.
pub fn reward(
    target_data: &LocalDataset,
    current: &LinearParams,
    candidate: &LinearParams,
) -> Result<f64> {
    Ok(squared_loss(current, target_data)? - squared_loss(candidate, target_data)?)
}

/// Draw `count` distinct device indices excluding `target`, ascending.
pub(crate) fn sample_candidates(
    rng: &mut ChaCha8Rng,
    n_devices: usize,
    target: usize,
    count: usize,
) -> Vec<usize> {
    let picks = rand::seq::index::sample(rng, n_devices - 1, count);
    let mut out: Vec<usize> = picks
        .iter()
        .map(|p| if p < target { p } else { p + 1 })
        .collect();
    out.sort_unstable();
    out
}

fn initial_params(federation: &Federation, config: &Alg1Config) -> Result<LinearParams> {
    match config.init {
        InitScheme::Zero => Ok(LinearParams::zeros(federation.spec.dim)),
        InitScheme::LocalPretrain => ridge_least_squares(
            &federation.datasets[config.target_device],
            PRETRAIN_RIDGE_LAMBDA,
        ),
    }
}

/// Run the selection loop; `peer_gradient_source` supplies the dataset a
/// candidate's gradient is computed on (the candidate's fixed dataset in
/// the offline setting, a fresh batch in the online one).
fn run_selection_loop(
    federation: &Federation,
    config: &Alg1Config,
    mut peer_update: impl FnMut(&LinearParams, usize) -> Result<LinearParams>,
) -> Result<Alg1Run> {
    config.validate(federation.n_devices())?;
    let target = config.target_device;
    let target_data = &federation.datasets[target];

    let mut params = initial_params(federation, config)?;
    let mut candidate_rng = stream_rng(config.seed, STREAM_CANDIDATES, target as u64);
    let mut records = Vec::with_capacity(config.rounds);
    let mut snapshots = Vec::with_capacity(config.rounds + 1);
    snapshots.push(params.clone());

    for round in 1..=config.rounds {
        let candidates = sample_candidates(
            &mut candidate_rng,
            federation.n_devices(),
            target,
            config.candidate_count,
        );
        let loss_before = squared_loss(&params, target_data)?;

        let mut rewards = Vec::with_capacity(candidates.len());
        let mut best: Option<(usize, f64, LinearParams)> = None;
        for &peer in &candidates {
            let stepped = peer_update(&params, peer)?;
            let loss = squared_loss(&stepped, target_data)?;
            rewards.push(loss_before - loss);
            // Strict comparison keeps the lowest device index on ties.
            if best.as_ref().is_none_or(|(_, l, _)| loss < *l) {
                best = Some((peer, loss, stepped));
            }
        }
        let (chosen, target_loss_after, next) = best.expect("candidate set is nonempty");
        params = next;
        records.push(SelectionRecord {
            round,
            candidates,
            rewards,
            chosen,
            target_loss_after,
        });
        snapshots.push(params.clone());
    }

    Ok(Alg1Run {
        final_params: params,
        records,
        snapshots,
    })
}

/// Peer selection with exact per-candidate gradients.
pub fn run_algorithm1(federation: &Federation, config: &Alg1Config) -> Result<Alg1Run> {
    run_selection_loop(federation, config, |params, peer| {
        probe_gradient_step(params, &federation.datasets[peer], config.learning_rate)
    })
}

/// Online variant: every probe draws a fresh batch from the candidate's
/// generating distribution and uses the batch gradient in place of the
/// exact one. Candidate scoring still uses the target's fixed dataset.
pub fn run_algorithm1_online(
    federation: &Federation,
    config: &Alg1Config,
    batch_size: usize,
) -> Result<Alg1Run> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut batch_rng = stream_rng(
        config.seed,
        STREAM_ONLINE_BATCH,
        config.target_device as u64,
    );
    run_selection_loop(federation, config, move |params, peer| {
        let batch = sample_device_batch(federation, peer, batch_size, &mut batch_rng)?;
        probe_gradient_step(params, &batch, config.learning_rate)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::least_squares_min_norm;
    use crate::metrics::param_mse_vec;
    use crate::synth::{generate_federation, SyntheticSpec};
    use nalgebra::DVector;

    fn small_fed(n: usize, m: usize, d: usize, sizes: Vec<usize>, seed: u64) -> Federation {
        let spec = SyntheticSpec {
            n_devices: n,
            samples_per_device: m,
            dim: d,
            noise_std: 0.0,
            cluster_sizes: sizes,
            param_range: crate::synth::DEFAULT_PARAM_RANGE,
            seed,
        };
        generate_federation(&spec).unwrap()
    }

    #[test]
    fn probe_step_hand_example() {
        // Gradient (-2, -4) at w = 0 with lr 0.05 gives w = (0.1, 0.2).
        let data = LocalDataset::new(
            nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DVector::from_row_slice(&[2.0, 4.0]),
        )
        .unwrap();
        let w = LinearParams::zeros(2);
        let stepped = probe_gradient_step(&w, &data, 0.05).unwrap();
        assert!((stepped.weights[0] - 0.1).abs() < 1e-15);
        assert!((stepped.weights[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn probe_step_identity_cases() {
        let fed = small_fed(2, 8, 3, vec![2], 4);
        let peer = &fed.datasets[1];
        let minimizer =
            LinearParams::new(least_squares_min_norm(&peer.features, &peer.labels).unwrap());
        let stepped = probe_gradient_step(&minimizer, peer, 0.1).unwrap();
        assert!((&stepped.weights - &minimizer.weights).norm() < 1e-10);

        // Zero learning rate is rejected by the config but valid in the
        // probe itself and leaves the parameters unchanged.
        let w = LinearParams::new(DVector::from_row_slice(&[1.0, -2.0, 0.5]));
        let same = probe_gradient_step(&w, peer, 0.0).unwrap();
        assert_eq!(same.weights, w.weights);
    }

    #[test]
    fn reward_examples() {
        let fed = small_fed(2, 6, 2, vec![2], 8);
        let data = &fed.datasets[0];
        let w = LinearParams::new(DVector::from_row_slice(&[0.3, -1.0]));
        assert_eq!(reward(data, &w, &w).unwrap(), 0.0);

        // Loss 5 before, loss 3 after: reward 2.
        let one_point = LocalDataset::new(
            nalgebra::DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_row_slice(&[0.0]),
        )
        .unwrap();
        let before = LinearParams::new(DVector::from_row_slice(&[5.0f64.sqrt()]));
        let after = LinearParams::new(DVector::from_row_slice(&[3.0f64.sqrt()]));
        let r = reward(&one_point, &before, &after).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn max_reward_equals_min_loss() {
        // Maximizing the reward and minimizing the candidate loss select
        // the same index, checked by direct enumeration.
        let fed = small_fed(12, 6, 3, vec![6, 6], 15);
        let target_data = &fed.datasets[0];
        for round_seed in 0..100u64 {
            let mut rng = stream_rng(round_seed, 99, 0);
            let candidates = sample_candidates(&mut rng, fed.n_devices(), 0, 5);
            let w = LinearParams::new(DVector::from_iterator(
                3,
                (0..3).map(|j| ((round_seed as f64) * 0.37 + j as f64).sin()),
            ));
            let probes: Vec<(usize, LinearParams)> = candidates
                .iter()
                .map(|&i| (i, probe_gradient_step(&w, &fed.datasets[i], 0.05).unwrap()))
                .collect();
            let by_loss = probes
                .iter()
                .min_by(|a, b| {
                    squared_loss(&a.1, target_data)
                        .unwrap()
                        .partial_cmp(&squared_loss(&b.1, target_data).unwrap())
                        .unwrap()
                })
                .unwrap()
                .0;
            let by_reward = probes
                .iter()
                .max_by(|a, b| {
                    reward(target_data, &w, &a.1)
                        .unwrap()
                        .partial_cmp(&reward(target_data, &w, &b.1).unwrap())
                        .unwrap()
                })
                .unwrap()
                .0;
            assert_eq!(by_loss, by_reward);
        }
    }

    #[test]
    fn two_device_run_converges_to_shared_params() {
        // Single peer, one cluster, zero noise, well-posed least squares:
        // repeated gradient steps on the peer's data recover the shared
        // parameters.
        let fed = small_fed(2, 10, 3, vec![2], 23);
        let config = Alg1Config::new(0.05, 400, 1, 5);
        let run = run_algorithm1(&fed, &config).unwrap();
        let mse = param_mse_vec(&run.final_params, fed.true_params(0));
        assert!(mse < 1e-10, "final mse {}", mse);
        for rec in &run.records {
            assert_eq!(rec.candidates, vec![1]);
            assert_eq!(rec.chosen, 1);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let fed = small_fed(10, 5, 2, vec![5, 5], 31);
        let config = Alg1Config::new(0.05, 25, 3, 7);
        let a = run_algorithm1(&fed, &config).unwrap();
        let b = run_algorithm1(&fed, &config).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_params, b.final_params);
    }

    #[test]
    fn audit_trail_invariants() {
        let fed = small_fed(10, 5, 2, vec![5, 5], 31);
        let config = Alg1Config::new(0.05, 40, 4, 11);
        let run = run_algorithm1(&fed, &config).unwrap();
        assert_eq!(run.records.len(), 40);
        assert_eq!(run.snapshots.len(), 41);
        for rec in &run.records {
            // Target never probed.
            assert!(!rec.candidates.contains(&0));
            assert!(rec.candidates.windows(2).all(|w| w[0] < w[1]));
            // Chosen candidate attains the maximal reward.
            let pos = rec
                .candidates
                .iter()
                .position(|&c| c == rec.chosen)
                .unwrap();
            let max = rec
                .rewards
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(rec.rewards[pos], max);
        }
    }

    #[test]
    fn candidate_count_bounds_are_enforced() {
        let fed = small_fed(4, 5, 2, vec![2, 2], 3);
        let config = Alg1Config::new(0.05, 5, 4, 1);
        assert!(matches!(
            run_algorithm1(&fed, &config),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn pretrain_init_starts_from_local_fit() {
        let fed = small_fed(4, 10, 2, vec![2, 2], 9);
        let mut config = Alg1Config::new(0.05, 1, 2, 1);
        config.init = InitScheme::LocalPretrain;
        let run = run_algorithm1(&fed, &config).unwrap();
        // d <= m and zero noise: the ridge fit is already close to truth.
        let mse0 = param_mse_vec(&run.snapshots[0], fed.true_params(0));
        assert!(mse0 < 1e-3, "pretrain mse {}", mse0);
    }

    #[test]
    fn online_batch_gradient_matches_full_data_gradient() {
        // A batch used as a dataset gives the same gradient either way.
        let fed = small_fed(4, 5, 3, vec![2, 2], 13);
        let mut rng = stream_rng(5, STREAM_ONLINE_BATCH, 0);
        let batch = sample_device_batch(&fed, 1, 10_000, &mut rng).unwrap();
        let w = LinearParams::new(DVector::from_row_slice(&[0.2, -0.4, 1.0]));
        let g = loss_gradient(&w, &batch).unwrap();
        // Manual form: (-2/|B|) sum x (y - x^T w).
        let mut manual = DVector::zeros(3);
        for r in 0..batch.len() {
            let x = batch.features.row(r).transpose();
            let resid = batch.labels[r] - w.weights.dot(&x);
            manual += x * resid;
        }
        manual *= -2.0 / batch.len() as f64;
        assert!((&g - &manual).norm() < 1e-9 * g.norm().max(1.0));
    }

    #[test]
    fn online_single_cluster_converges() {
        let fed = small_fed(10, 10, 5, vec![10], 17);
        let config = Alg1Config::new(0.05, 500, 3, 19);
        let run = run_algorithm1_online(&fed, &config, 10).unwrap();
        let mse = param_mse_vec(&run.final_params, fed.true_params(0));
        assert!(mse < 1e-2, "online final mse {}", mse);
    }
}
