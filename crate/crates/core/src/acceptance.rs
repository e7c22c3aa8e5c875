//! Acceptance suite: the reference testbed configurations checked as
//! properties, plus the independent numeric oracles they rely on.
//!
//! Every criterion returns a report instead of panicking, so the suite can
//! run both as an integration test target and behind the CLI `verify`
//! subcommand. The oracles here (finite differences, a generic numeric
//! minimizer, exhaustive split enumeration) deliberately avoid the code
//! paths they check.

use nalgebra::DVector;

use crate::agnostic::{run_algorithm2, Alg2Config};
use crate::baselines::{
    run_ifca, run_oracle_sampler, train_cluster_oracle_model, train_local_only, IfcaConfig,
};
use crate::experiment::{execute, ExperimentConfig, ExperimentKind};
use crate::hypothesis::ModelKind;
use crate::linear::{proximal_least_squares, squared_loss, LinearParams};
use crate::metrics::{average_traces, param_mse_vec, validation_mse, MetricTrace};
use crate::parametric::{run_algorithm1, run_algorithm1_online, Alg1Config, InitScheme};
use crate::synth::{
    generate_federation, generate_unlabeled_test_set, generate_validation_set, LocalDataset,
    SyntheticSpec, DEFAULT_PARAM_RANGE,
};
use crate::tree::{fit_tree, TreeNode, WeightedSample};
use crate::Result;

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:2} {} — {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

fn report(id: usize, name: &'static str, passed: bool, detail: String) -> CriterionReport {
    CriterionReport {
        id,
        name,
        passed,
        detail,
    }
}

fn error_report(id: usize, name: &'static str, err: &crate::Error) -> CriterionReport {
    report(id, name, false, format!("errored: {}", err))
}

// ── Oracles ─────────────────────────────────────────────────────────────

/// Central finite differences of the squared loss.
pub fn finite_difference_gradient(
    params: &LinearParams,
    data: &LocalDataset,
    step: f64,
) -> DVector<f64> {
    let d = params.dim();
    let mut grad = DVector::zeros(d);
    for j in 0..d {
        let mut plus = params.clone();
        plus.weights[j] += step;
        let mut minus = params.clone();
        minus.weights[j] -= step;
        grad[j] = (squared_loss(&plus, data).unwrap() - squared_loss(&minus, data).unwrap())
            / (2.0 * step);
    }
    grad
}

/// Generic descent minimizer of the proximal objective
/// `loss_weight * L(w) + ||w - anchor||^2`, driven purely by objective
/// evaluations (finite-difference gradients, backtracking line search).
pub fn numeric_proximal_minimizer(
    anchor: &LinearParams,
    data: &LocalDataset,
    loss_weight: f64,
) -> DVector<f64> {
    let objective = |w: &DVector<f64>| {
        let p = LinearParams::new(w.clone());
        loss_weight * squared_loss(&p, data).unwrap() + (w - &anchor.weights).norm_squared()
    };
    let d = anchor.dim();
    let fd_step = 1e-5;
    let mut w = anchor.weights.clone();
    for _ in 0..5_000 {
        let mut grad = DVector::zeros(d);
        for j in 0..d {
            let mut plus = w.clone();
            plus[j] += fd_step;
            let mut minus = w.clone();
            minus[j] -= fd_step;
            grad[j] = (objective(&plus) - objective(&minus)) / (2.0 * fd_step);
        }
        let gnorm = grad.norm();
        if gnorm <= 1e-9 {
            break;
        }
        let here = objective(&w);
        let mut step = 1.0;
        loop {
            let trial = &w - step * &grad;
            if objective(&trial) <= here - 0.25 * step * gnorm * gnorm {
                w = trial;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                return w;
            }
        }
    }
    w
}

fn direct_weighted_sse(samples: &[WeightedSample], indices: &[usize]) -> (f64, f64, f64) {
    let total_w: f64 = indices.iter().map(|&i| samples[i].weight).sum();
    let mean: f64 = indices
        .iter()
        .map(|&i| samples[i].weight * samples[i].label)
        .sum::<f64>()
        / total_w;
    let sse: f64 = indices
        .iter()
        .map(|&i| {
            let e = samples[i].label - mean;
            samples[i].weight * e * e
        })
        .sum();
    (total_w, mean, sse)
}

/// Exhaustive enumeration of every (feature, midpoint-threshold) pair,
/// with the tie-break order of the greedy fit: lowest feature index, then
/// lowest threshold, requiring each accepted candidate to improve the gain
/// beyond the same relative slack the fit uses (distinct pairs inducing
/// one partition are exact ties up to rounding).
pub fn exhaustive_best_split(
    samples: &[WeightedSample],
    indices: &[usize],
    min_leaf: usize,
) -> Option<(usize, f64)> {
    let dim = samples[indices[0]].features.len();
    let (_, _, parent_sse) = direct_weighted_sse(samples, indices);
    let tolerance = crate::tree::GAIN_TIE_REL_EPS * parent_sse;
    let mut best: Option<(usize, f64, f64)> = None;
    for feature in 0..dim {
        let mut values: Vec<f64> = indices
            .iter()
            .map(|&i| samples[i].features[feature])
            .collect();
        values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for pair in values.windows(2) {
            let threshold = 0.5 * (pair[0] + pair[1]);
            if !(threshold > pair[0]) {
                continue;
            }
            let left: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|&i| samples[i].features[feature] < threshold)
                .collect();
            let right: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|&i| samples[i].features[feature] >= threshold)
                .collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let (_, _, left_sse) = direct_weighted_sse(samples, &left);
            let (_, _, right_sse) = direct_weighted_sse(samples, &right);
            let gain = parent_sse - left_sse - right_sse;
            if gain > best.map_or(0.0, |(_, _, g)| g) + tolerance {
                best = Some((feature, threshold, gain));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

/// Walk a fitted tree and flag any node whose split (or decision to stop)
/// disagrees with exhaustive enumeration over the samples reaching it.
pub fn verify_tree_against_enumeration(
    node: &TreeNode,
    samples: &[WeightedSample],
    indices: &[usize],
    depth_left: usize,
    min_leaf: usize,
) -> std::result::Result<(), String> {
    let (total_w, mean, sse) = direct_weighted_sse(samples, indices);
    let negligible = sse / total_w <= 1e-12 * (1.0 + mean * mean);
    match node {
        TreeNode::Leaf { .. } => {
            if depth_left > 0
                && indices.len() >= 2 * min_leaf
                && !negligible
                && exhaustive_best_split(samples, indices, min_leaf).is_some()
            {
                return Err(format!(
                    "leaf with {} samples where enumeration finds a positive-gain split",
                    indices.len()
                ));
            }
            Ok(())
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let expect = exhaustive_best_split(samples, indices, min_leaf)
                .ok_or_else(|| "split node where enumeration finds no gain".to_string())?;
            if expect != (*feature, *threshold) {
                return Err(format!(
                    "split (x{}, {}) but enumeration picks (x{}, {})",
                    feature, threshold, expect.0, expect.1
                ));
            }
            let (li, ri): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| samples[i].features[*feature] < *threshold);
            verify_tree_against_enumeration(left, samples, &li, depth_left - 1, min_leaf)?;
            verify_tree_against_enumeration(right, samples, &ri, depth_left - 1, min_leaf)
        }
    }
}

// ── Shared experiment plumbing ──────────────────────────────────────────

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Setup {
    n_devices: usize,
    samples: usize,
    dim: usize,
    noise_std: f64,
    cluster_sizes: Vec<usize>,
}

impl Setup {
    fn testbed(dim: usize, noise_std: f64) -> Setup {
        Setup {
            n_devices: 100,
            samples: 10,
            dim,
            noise_std,
            cluster_sizes: vec![50, 50],
        }
    }

    fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_devices: self.n_devices,
            samples_per_device: self.samples,
            dim: self.dim,
            noise_std: self.noise_std,
            cluster_sizes: self.cluster_sizes.clone(),
            param_range: DEFAULT_PARAM_RANGE,
            seed,
        }
    }
}

fn alg1_config(rounds: usize, candidates: usize, seed: u64) -> Alg1Config {
    Alg1Config {
        learning_rate: 0.05,
        rounds,
        candidate_count: candidates,
        target_device: 0,
        init: InitScheme::Zero,
        seed,
    }
}

fn alg1_mse_trace(
    setup: &Setup,
    rounds: usize,
    candidates: usize,
    seed: u64,
) -> Result<MetricTrace> {
    let fed = generate_federation(&setup.spec(seed))?;
    let run = run_algorithm1(&fed, &alg1_config(rounds, candidates, seed))?;
    Ok(MetricTrace::from_values(
        format!("seed={}", seed),
        run.snapshots
            .iter()
            .enumerate()
            .map(|(k, w)| (k, param_mse_vec(w, fed.true_params(0))))
            .collect(),
    ))
}

fn alg1_avg_trace(setup: &Setup, rounds: usize, candidates: usize) -> Result<MetricTrace> {
    let traces: Vec<MetricTrace> = SEEDS
        .iter()
        .map(|&s| alg1_mse_trace(setup, rounds, candidates, s))
        .collect::<Result<_>>()?;
    Ok(average_traces(&traces, "avg"))
}

// ── Criteria ────────────────────────────────────────────────────────────

/// Analytic gradient vs central finite differences, 100 random instances.
pub fn criterion_1_gradient_oracle() -> CriterionReport {
    let name = "gradient-oracle";
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let m = 2 + (seed % 9) as usize;
        let d = 1 + (seed % 7) as usize;
        let spec = SyntheticSpec {
            n_devices: 2,
            samples_per_device: m,
            dim: d,
            noise_std: 1.0,
            cluster_sizes: vec![2],
            param_range: DEFAULT_PARAM_RANGE,
            seed: 9000 + seed,
        };
        let fed = match generate_federation(&spec) {
            Ok(f) => f,
            Err(e) => return error_report(1, name, &e),
        };
        let data = &fed.datasets[0];
        let w = LinearParams::new(DVector::from_iterator(
            d,
            (0..d).map(|j| ((seed as f64) * 0.611 + j as f64 * 1.7).sin() * 3.0),
        ));
        let g = crate::linear::loss_gradient(&w, data).unwrap();
        let fd = finite_difference_gradient(&w, data, 1e-5);
        let rel = (&g - &fd).norm() / g.norm().max(1e-12);
        worst = worst.max(rel);
    }
    report(
        1,
        name,
        worst <= 1e-6,
        format!(
            "worst relative error {:.3e} over 100 instances (limit 1e-6)",
            worst
        ),
    )
}

/// Proximal closed form vs a numeric minimizer on 20 small instances.
pub fn criterion_2_proximal_oracle() -> CriterionReport {
    let name = "proximal-oracle";
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let m = 4 + (seed % 7) as usize;
        let d = 1 + (seed % 5) as usize;
        let spec = SyntheticSpec {
            n_devices: 2,
            samples_per_device: m,
            dim: d,
            noise_std: 0.5,
            cluster_sizes: vec![2],
            param_range: DEFAULT_PARAM_RANGE,
            seed: 7000 + seed,
        };
        let fed = match generate_federation(&spec) {
            Ok(f) => f,
            Err(e) => return error_report(2, name, &e),
        };
        let data = &fed.datasets[1];
        let anchor = LinearParams::new(DVector::from_iterator(
            d,
            (0..d).map(|j| ((seed + 3) as f64 * 0.43 + j as f64).cos() * 2.0),
        ));
        let loss_weight = 0.2 + 0.35 * (seed % 8) as f64;
        let closed = match proximal_least_squares(&anchor, data, loss_weight) {
            Ok(p) => p,
            Err(e) => return error_report(2, name, &e),
        };
        let numeric = numeric_proximal_minimizer(&anchor, data, loss_weight);
        let gap = (&closed.weights - &numeric).norm();
        worst = worst.max(gap);
    }
    report(
        2,
        name,
        worst <= 1e-6,
        format!(
            "worst parameter gap {:.3e} over 20 instances (limit 1e-6)",
            worst
        ),
    )
}

/// Greedy splits vs exhaustive enumeration on 50 random micro-datasets.
pub fn criterion_3_tree_oracle() -> CriterionReport {
    let name = "tree-oracle";
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4242);
    for case in 0..50 {
        let n = rng.random_range(2..=12);
        let dim = rng.random_range(1..=2);
        let max_depth = rng.random_range(1..=2);
        let samples: Vec<WeightedSample> = (0..n)
            .map(|_| {
                WeightedSample::new(
                    (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect(),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(0.25..3.0),
                )
            })
            .collect();
        let tree = match fit_tree(&samples, max_depth, 1) {
            Ok(t) => t,
            Err(e) => return error_report(3, name, &e),
        };
        let indices: Vec<usize> = (0..samples.len()).collect();
        if let Err(msg) = verify_tree_against_enumeration(&tree, &samples, &indices, max_depth, 1) {
            return report(3, name, false, format!("case {}: {}", case, msg));
        }
    }
    report(
        3,
        name,
        true,
        "all 50 micro-datasets match enumeration".into(),
    )
}

/// Noiseless convergence at d/m = 0.2 and slower convergence at d/m = 10.
pub fn criterion_4_alg1_convergence() -> CriterionReport {
    let name = "alg1-convergence";
    let low = Setup::testbed(2, 0.0);
    let mut reached = 0;
    for &seed in &SEEDS {
        match alg1_mse_trace(&low, 300, 20, seed) {
            Ok(trace) => {
                if trace.first_round_at_or_below(1e-3).is_some() {
                    reached += 1;
                }
            }
            Err(e) => return error_report(4, name, &e),
        }
    }

    let avg_low = match alg1_avg_trace(&Setup::testbed(2, 0.0), 500, 20) {
        Ok(t) => t,
        Err(e) => return error_report(4, name, &e),
    };
    let avg_high = match alg1_avg_trace(&Setup::testbed(100, 0.0), 500, 20) {
        Ok(t) => t,
        Err(e) => return error_report(4, name, &e),
    };
    let r_low = avg_low.first_round_at_or_below(1e-1);
    let r_high = avg_high.first_round_at_or_below(1e-1);
    let slower = match (r_low, r_high) {
        (Some(a), Some(b)) => b > a,
        (Some(_), None) => true,
        _ => false,
    };
    report(
        4,
        name,
        reached >= 4 && slower,
        format!(
            "mse<=1e-3 within 300 rounds in {}/5 seeds (need >=4); rounds to 1e-1: d/m=0.2 -> {:?}, d/m=10 -> {:?}",
            reached, r_low, r_high
        ),
    )
}

/// Final MSE nondecreasing across noise levels with matched feature seeds.
pub fn criterion_5_noise_monotonicity() -> CriterionReport {
    let name = "noise-monotonicity";
    let sigmas = [0.05, 0.1, 0.2, 0.5, 1.0];
    let mut finals = Vec::new();
    for &sigma in &sigmas {
        match alg1_avg_trace(&Setup::testbed(20, sigma), 500, 20) {
            Ok(t) => finals.push(t.final_value().unwrap()),
            Err(e) => return error_report(5, name, &e),
        }
    }
    let monotone = finals.windows(2).all(|w| w[0] <= w[1]);
    report(
        5,
        name,
        monotone,
        format!(
            "seed-averaged final MSE by sigma {:?}: {:?}",
            sigmas, finals
        ),
    )
}

/// Small candidate sets converge far worse: S=5 at least 10x S=20.
pub fn criterion_6_candidate_set_size() -> CriterionReport {
    let name = "candidate-set-size";
    let setup = Setup::testbed(20, 0.0);
    let small = match alg1_avg_trace(&setup, 500, 5) {
        Ok(t) => t.final_value().unwrap(),
        Err(e) => return error_report(6, name, &e),
    };
    let large = match alg1_avg_trace(&setup, 500, 20) {
        Ok(t) => t.final_value().unwrap(),
        Err(e) => return error_report(6, name, &e),
    };
    report(
        6,
        name,
        small >= 10.0 * large,
        format!(
            "final MSE S=5: {:.3e}, S=20: {:.3e} (need >=10x)",
            small, large
        ),
    )
}

/// Selection performs comparably to sampling from the true cluster.
///
/// Compared at a horizon inside the decay regime: with zero noise the two
/// trajectories separate once the target's own design matrix can no longer
/// observe the residual error, so very long horizons measure floor noise
/// rather than convergence behavior.
pub fn criterion_7_oracle_comparability() -> CriterionReport {
    let name = "oracle-comparability";
    let setup = Setup::testbed(20, 0.0);
    let rounds = 50;
    let mut alg1_runs = Vec::new();
    let mut oracle_runs = Vec::new();
    for &seed in &SEEDS {
        let fed = match generate_federation(&setup.spec(seed)) {
            Ok(f) => f,
            Err(e) => return error_report(7, name, &e),
        };
        let truth = fed.true_params(0);
        match run_algorithm1(&fed, &alg1_config(rounds, 20, seed)) {
            Ok(run) => alg1_runs.push(param_mse_vec(&run.final_params, truth)),
            Err(e) => return error_report(7, name, &e),
        }
        match run_oracle_sampler(&fed, &alg1_config(rounds, 1, seed)) {
            Ok(run) => oracle_runs.push(param_mse_vec(&run.final_params, truth)),
            Err(e) => return error_report(7, name, &e),
        }
    }
    let alg1_final: f64 = alg1_runs.iter().sum::<f64>() / alg1_runs.len() as f64;
    let oracle_final: f64 = oracle_runs.iter().sum::<f64>() / oracle_runs.len() as f64;
    report(
        7,
        name,
        alg1_final <= 2.0 * oracle_final,
        format!(
            "final MSE selection: {:.3e}, oracle sampler: {:.3e} (limit 2x)",
            alg1_final, oracle_final
        ),
    )
}

/// Well-specified IFCA and the selection algorithm both converge.
///
/// Counted per seed, four of five sufficing: IFCA's random model
/// initialization occasionally leaves one model capturing both clusters,
/// a known sensitivity that a single seed should not decide.
pub fn criterion_8_ifca_well_specified() -> CriterionReport {
    let name = "ifca-well-specified";
    let setup = Setup::testbed(2, 0.0);
    let mut both_reached = 0;
    let mut details = Vec::new();
    for &seed in &SEEDS {
        let fed = match generate_federation(&setup.spec(seed)) {
            Ok(f) => f,
            Err(e) => return error_report(8, name, &e),
        };
        let alg1 = match alg1_mse_trace(&setup, 500, 20, seed) {
            Ok(t) => t,
            Err(e) => return error_report(8, name, &e),
        };
        let ifca = match run_ifca(&fed, &IfcaConfig::new(2, 0.05, 500, seed)) {
            Ok(run) => MetricTrace::from_values("ifca", run.target_mse),
            Err(e) => return error_report(8, name, &e),
        };
        let a = alg1.min_value().unwrap();
        let i = ifca.min_value().unwrap();
        if a <= 1e-2 && i <= 1e-2 {
            both_reached += 1;
        }
        details.push(format!(
            "seed {}: selection {:.1e}, ifca {:.1e}",
            seed, a, i
        ));
    }
    report(
        8,
        name,
        both_reached >= 4,
        format!(
            "both reach MSE<=1e-2 in {}/5 seeds (need >=4); {}",
            both_reached,
            details.join("; ")
        ),
    )
}

/// With the cluster count misspecified, selection beats IFCA at every d/m.
pub fn criterion_9_ifca_misspecified() -> CriterionReport {
    let name = "ifca-misspecified";
    let mut details = Vec::new();
    let mut passed = true;
    for &dm in &[0.2, 2.0, 5.0] {
        let dim = ((dm * 10.0) as usize).max(1);
        let setup = Setup {
            n_devices: 100,
            samples: 10,
            dim,
            noise_std: 0.0,
            cluster_sizes: vec![20; 5],
        };
        let mut alg1_finals = Vec::new();
        let mut ifca_finals = Vec::new();
        for &seed in &SEEDS {
            let fed = match generate_federation(&setup.spec(seed)) {
                Ok(f) => f,
                Err(e) => return error_report(9, name, &e),
            };
            let truth = fed.true_params(0);
            match run_algorithm1(&fed, &alg1_config(500, 20, seed)) {
                Ok(run) => alg1_finals.push(param_mse_vec(&run.final_params, truth)),
                Err(e) => return error_report(9, name, &e),
            }
            match run_ifca(&fed, &IfcaConfig::new(2, 0.05, 500, seed)) {
                Ok(run) => ifca_finals.push(run.target_mse.last().unwrap().1),
                Err(e) => return error_report(9, name, &e),
            }
        }
        let a: f64 = alg1_finals.iter().sum::<f64>() / alg1_finals.len() as f64;
        let i: f64 = ifca_finals.iter().sum::<f64>() / ifca_finals.len() as f64;
        if a >= i {
            passed = false;
        }
        details.push(format!("d/m={}: selection {:.3e} vs ifca {:.3e}", dm, a, i));
    }
    report(9, name, passed, details.join("; "))
}

/// Online variant with batch size 10 converges for d/m <= 2.
pub fn criterion_10_online_variant() -> CriterionReport {
    let name = "online-variant";
    let mut details = Vec::new();
    let mut passed = true;
    for &dm in &[0.2, 1.0, 2.0] {
        let dim = ((dm * 10.0) as usize).max(1);
        let setup = Setup::testbed(dim, 0.0);
        let mut traces = Vec::new();
        for &seed in &SEEDS {
            let fed = match generate_federation(&setup.spec(seed)) {
                Ok(f) => f,
                Err(e) => return error_report(10, name, &e),
            };
            match run_algorithm1_online(&fed, &alg1_config(500, 20, seed), 10) {
                Ok(run) => traces.push(MetricTrace::from_values(
                    "online",
                    run.snapshots
                        .iter()
                        .enumerate()
                        .map(|(k, w)| (k, param_mse_vec(w, fed.true_params(0))))
                        .collect(),
                )),
                Err(e) => return error_report(10, name, &e),
            }
        }
        let avg = average_traces(&traces, "online");
        let best = avg.min_value().unwrap();
        if best > 1e-1 {
            passed = false;
        }
        details.push(format!("d/m={}: best avg MSE {:.3e}", dm, best));
    }
    report(10, name, passed, details.join("; "))
}

/// Personalized tree matches or beats local-only training and stays within
/// 1/0.8 of the pooled-cluster oracle.
pub fn criterion_11_tree_agnostic() -> CriterionReport {
    let name = "tree-agnostic";
    let rounds = 60;
    let mut details = Vec::new();
    let mut passed = true;
    for &dm in &[0.2, 1.0, 2.0, 5.0, 10.0] {
        let dim = ((dm * 10.0) as usize).max(1);
        let setup = Setup::testbed(dim, 0.0);
        let model = ModelKind::Tree { max_depth: 3 };
        let mut algo2_finals = Vec::new();
        let mut local_ratios = Vec::new();
        for &seed in &SEEDS {
            let fed = match generate_federation(&setup.spec(seed)) {
                Ok(f) => f,
                Err(e) => return error_report(11, name, &e),
            };
            let test_set = match generate_unlabeled_test_set(100, dim, seed) {
                Ok(t) => t,
                Err(e) => return error_report(11, name, &e),
            };
            let val = match generate_validation_set(0, &fed, 100, seed) {
                Ok(v) => v,
                Err(e) => return error_report(11, name, &e),
            };
            let oracle = match train_cluster_oracle_model(&fed, 0, model) {
                Ok(h) => h,
                Err(e) => return error_report(11, name, &e),
            };
            let oracle_mse = validation_mse(&oracle, &val);
            if oracle_mse == 0.0 {
                return report(11, name, false, "oracle validation MSE is zero".into());
            }
            let local = match train_local_only(&fed.datasets[0], model) {
                Ok(h) => h,
                Err(e) => return error_report(11, name, &e),
            };
            local_ratios.push(validation_mse(&local, &val) / oracle_mse);
            let config = Alg2Config {
                loss_weight: 1.0,
                rounds,
                candidate_count: 20,
                target_device: 0,
                test_set,
                model,
                seed,
            };
            match run_algorithm2(&fed, &config, &val) {
                Ok(run) => algo2_finals.push(run.validation_trace.last().unwrap().1 / oracle_mse),
                Err(e) => return error_report(11, name, &e),
            }
        }
        let algo2: f64 = algo2_finals.iter().sum::<f64>() / algo2_finals.len() as f64;
        let local: f64 = local_ratios.iter().sum::<f64>() / local_ratios.len() as f64;
        if dm >= 1.0 && algo2 > local {
            passed = false;
        }
        if algo2 < 0.8 {
            passed = false;
        }
        details.push(format!(
            "d/m={}: MSE_norm {:.3} (local-only {:.3})",
            dm, algo2, local
        ));
    }
    report(11, name, passed, details.join("; "))
}

/// Post-burn-in selections land in the target's true cluster.
pub fn criterion_12_selection_accuracy() -> CriterionReport {
    let name = "selection-accuracy";
    let setup = Setup::testbed(2, 0.0);
    let mut in_cluster = 0usize;
    let mut total = 0usize;
    for &seed in &SEEDS {
        let fed = match generate_federation(&setup.spec(seed)) {
            Ok(f) => f,
            Err(e) => return error_report(12, name, &e),
        };
        let target_cluster = fed.truth.device_to_cluster[0];
        match run_algorithm1(&fed, &alg1_config(300, 20, seed)) {
            Ok(run) => {
                for rec in run.records.iter().filter(|r| r.round > 20) {
                    total += 1;
                    if fed.truth.device_to_cluster[rec.chosen] == target_cluster {
                        in_cluster += 1;
                    }
                }
            }
            Err(e) => return error_report(12, name, &e),
        }
    }
    let frac = in_cluster as f64 / total as f64;
    report(
        12,
        name,
        frac >= 0.9,
        format!(
            "{}/{} post-burn-in selections in the true cluster ({:.1}%, need >=90%)",
            in_cluster,
            total,
            frac * 100.0
        ),
    )
}

/// Re-running the dm sweep with one seed reproduces files byte for byte.
pub fn criterion_13_determinism() -> CriterionReport {
    let name = "determinism";
    let stamp = format!(
        "fedprobe-verify-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0)
    );
    let base = std::env::temp_dir().join(stamp);
    let run_once = |dir: &std::path::Path| -> Result<Vec<Vec<u8>>> {
        let config = ExperimentConfig::new(ExperimentKind::DmSweep);
        let (_, paths) = execute(&config, Some(1), Some(dir))?;
        let mut bytes = Vec::new();
        for p in paths {
            bytes.push(std::fs::read(p)?);
        }
        Ok(bytes)
    };
    let result = (|| -> Result<bool> {
        let a = run_once(&base.join("a"))?;
        let b = run_once(&base.join("b"))?;
        Ok(a == b)
    })();
    let _ = std::fs::remove_dir_all(&base);
    match result {
        Ok(identical) => report(
            13,
            name,
            identical,
            if identical {
                "two runs of `run dm_sweep --seed 1` are byte-identical".into()
            } else {
                "output files differ between runs".into()
            },
        ),
        Err(e) => error_report(13, name, &e),
    }
}

/// Run every criterion in order, printing one line each unless quiet.
pub fn run_all(quiet: bool) -> Vec<CriterionReport> {
    let criteria: Vec<fn() -> CriterionReport> = vec![
        criterion_1_gradient_oracle,
        criterion_2_proximal_oracle,
        criterion_3_tree_oracle,
        criterion_4_alg1_convergence,
        criterion_5_noise_monotonicity,
        criterion_6_candidate_set_size,
        criterion_7_oracle_comparability,
        criterion_8_ifca_well_specified,
        criterion_9_ifca_misspecified,
        criterion_10_online_variant,
        criterion_11_tree_agnostic,
        criterion_12_selection_accuracy,
        criterion_13_determinism,
    ];
    let mut reports = Vec::with_capacity(criteria.len());
    for criterion in criteria {
        let r = criterion();
        if !quiet {
            println!("{}", r.line());
        }
        reports.push(r);
    }
    reports
}
