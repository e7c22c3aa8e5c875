//! Experiment orchestration: declarative configs, seed management, sweep
//! execution, and reproducible CSV output.
//!
//! Each experiment runs a grid of (column, seed) cells, averages traces
//! across seeds pointwise, and writes one CSV per experiment (column 0 is
//! the iteration index, remaining columns one per sweep value) together
//! with a per-seed CSV and a manifest listing every resolved parameter.
//! Cells may run in parallel; output ordering is fixed by the config, so
//! re-running a config reproduces files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::agnostic::{run_algorithm2, Alg2Config};
use crate::baselines::{
    run_ifca, run_oracle_sampler, train_cluster_oracle_model, train_local_only, IfcaConfig,
};
use crate::hypothesis::ModelKind;
use crate::linear::LinearParams;
use crate::metrics::{average_traces, param_mse_vec, validation_mse, MetricTrace};
use crate::numfmt::sig12;
use crate::parametric::{run_algorithm1, run_algorithm1_online, Alg1Config, InitScheme};
use crate::synth::{
    generate_federation, generate_unlabeled_test_set, generate_validation_set, SyntheticSpec,
    DEFAULT_PARAM_RANGE,
};
use crate::{Error, Result};

/// Environment variable giving the default output directory.
pub const ENV_OUT_DIR: &str = "FEDPROBE_OUT";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    DmSweep,
    NoiseSweep,
    SubsetSweep,
    IfcaCompare,
    IfcaMisspecified,
    OracleCompare,
    Online,
    TreeAgnostic,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::DmSweep,
        ExperimentKind::NoiseSweep,
        ExperimentKind::SubsetSweep,
        ExperimentKind::IfcaCompare,
        ExperimentKind::IfcaMisspecified,
        ExperimentKind::OracleCompare,
        ExperimentKind::Online,
        ExperimentKind::TreeAgnostic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::DmSweep => "dm_sweep",
            ExperimentKind::NoiseSweep => "noise_sweep",
            ExperimentKind::SubsetSweep => "subset_sweep",
            ExperimentKind::IfcaCompare => "ifca_compare",
            ExperimentKind::IfcaMisspecified => "ifca_misspecified",
            ExperimentKind::OracleCompare => "oracle_compare",
            ExperimentKind::Online => "online",
            ExperimentKind::TreeAgnostic => "tree_agnostic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown experiment kind '{}'; valid kinds: {}",
                    s,
                    names.join(", ")
                ))
            })
    }
}

/// Declarative experiment description, usually read from a TOML file.
/// Unset fields fall back to kind-specific defaults; unknown keys are an
/// error.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub n_seeds: Option<usize>,
    #[serde(default)]
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub rounds: Option<usize>,
    #[serde(default)]
    pub n_devices: Option<usize>,
    #[serde(default)]
    pub samples_per_device: Option<usize>,
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub candidate_count: Option<usize>,
    #[serde(default)]
    pub init: Option<String>,
    #[serde(default)]
    pub dm_values: Option<Vec<f64>>,
    #[serde(default)]
    pub noise_values: Option<Vec<f64>>,
    #[serde(default)]
    pub subset_values: Option<Vec<usize>>,
    #[serde(default)]
    pub n_clusters: Option<usize>,
    #[serde(default)]
    pub param_range: Option<[f64; 2]>,
    #[serde(default)]
    pub ifca_k: Option<usize>,
    #[serde(default)]
    pub ifca_init_scale: Option<f64>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub tree_depth: Option<usize>,
    #[serde(default)]
    pub loss_weight: Option<f64>,
    #[serde(default)]
    pub test_count: Option<usize>,
    #[serde(default)]
    pub validation_count: Option<usize>,
}

/// Parse one experiment config from TOML text.
pub fn load_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    experiment: Vec<ExperimentConfig>,
}

/// Parse a batch file holding an `[[experiment]]` array.
pub fn load_sweep(text: &str) -> Result<Vec<ExperimentConfig>> {
    let file: SweepFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.experiment.is_empty() {
        return Err(Error::Config("sweep file lists no experiments".into()));
    }
    Ok(file.experiment)
}

/// A config with every default materialized.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub kind: ExperimentKind,
    pub out: PathBuf,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub rounds: usize,
    pub n_devices: usize,
    pub samples_per_device: usize,
    pub noise_std: f64,
    /// True when `noise_std` was not set explicitly.
    pub noise_std_is_default: bool,
    pub learning_rate: f64,
    pub candidate_count: usize,
    pub init: InitScheme,
    pub dm_values: Vec<f64>,
    pub noise_values: Vec<f64>,
    pub subset_values: Vec<usize>,
    pub n_clusters: usize,
    pub param_range: (f64, f64),
    pub ifca_k: usize,
    pub ifca_init_scale: f64,
    pub batch_size: usize,
    pub tree_depth: usize,
    pub loss_weight: f64,
    pub test_count: usize,
    pub validation_count: usize,
}

impl ResolvedExperiment {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64)
            .map(|s| self.base_seed + s)
            .collect()
    }
}

fn default_dm_values(kind: ExperimentKind) -> Vec<f64> {
    match kind {
        ExperimentKind::DmSweep | ExperimentKind::Online | ExperimentKind::TreeAgnostic => {
            vec![0.2, 1.0, 2.0, 5.0, 10.0]
        }
        ExperimentKind::IfcaCompare | ExperimentKind::IfcaMisspecified => vec![0.2, 2.0, 5.0],
        ExperimentKind::NoiseSweep
        | ExperimentKind::SubsetSweep
        | ExperimentKind::OracleCompare => {
            vec![2.0]
        }
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            ..Default::default()
        }
    }

    /// Materialize every default. `seed_override` and `out_override` come
    /// from the command line; the output directory falls back to the
    /// `FEDPROBE_OUT` environment variable and then to `results`.
    pub fn resolve(
        &self,
        seed_override: Option<u64>,
        out_override: Option<&Path>,
    ) -> Result<ResolvedExperiment> {
        let kind = self.kind;
        let out = out_override
            .map(Path::to_path_buf)
            .or_else(|| self.out.clone())
            .or_else(|| std::env::var_os(ENV_OUT_DIR).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"));
        let init = match self.init.as_deref() {
            None | Some("zero") => InitScheme::Zero,
            Some("local_pretrain") => InitScheme::LocalPretrain,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown init '{}'; valid: zero, local_pretrain",
                    other
                )))
            }
        };
        let resolved = ResolvedExperiment {
            kind,
            out,
            n_seeds: self.n_seeds.unwrap_or(5),
            base_seed: seed_override.or(self.base_seed).unwrap_or(0),
            rounds: self.rounds.unwrap_or(500),
            n_devices: self.n_devices.unwrap_or(100),
            samples_per_device: self.samples_per_device.unwrap_or(10),
            noise_std: self.noise_std.unwrap_or(0.0),
            noise_std_is_default: self.noise_std.is_none(),
            learning_rate: self.learning_rate.unwrap_or(0.05),
            candidate_count: self.candidate_count.unwrap_or(20),
            init,
            dm_values: self
                .dm_values
                .clone()
                .unwrap_or_else(|| default_dm_values(kind)),
            noise_values: self
                .noise_values
                .clone()
                .unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.5, 1.0]),
            subset_values: self
                .subset_values
                .clone()
                .unwrap_or_else(|| vec![5, 10, 15, 20, 30]),
            n_clusters: self.n_clusters.unwrap_or(match kind {
                ExperimentKind::IfcaMisspecified => 5,
                _ => 2,
            }),
            param_range: self
                .param_range
                .map(|r| (r[0], r[1]))
                .unwrap_or(DEFAULT_PARAM_RANGE),
            ifca_k: self.ifca_k.unwrap_or(2),
            ifca_init_scale: self.ifca_init_scale.unwrap_or(1.0),
            batch_size: self.batch_size.unwrap_or(10),
            tree_depth: self.tree_depth.unwrap_or(3),
            loss_weight: self.loss_weight.unwrap_or(1.0),
            test_count: self.test_count.unwrap_or(100),
            validation_count: self.validation_count.unwrap_or(100),
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

impl ResolvedExperiment {
    fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be positive".into()));
        }
        if self.dm_values.is_empty()
            || self.noise_values.is_empty()
            || self.subset_values.is_empty()
        {
            return Err(Error::Config("sweep values must be nonempty".into()));
        }
        match self.kind {
            ExperimentKind::NoiseSweep
            | ExperimentKind::SubsetSweep
            | ExperimentKind::OracleCompare
                if self.dm_values.len() != 1 =>
            {
                return Err(Error::Config(format!(
                    "{} uses exactly one dm value, got {}",
                    self.kind.name(),
                    self.dm_values.len()
                )));
            }
            _ => {}
        }
        Ok(())
    }

    fn dim_for(&self, dm: f64) -> usize {
        ((dm * self.samples_per_device as f64).round() as usize).max(1)
    }

    fn cluster_sizes(&self) -> Vec<usize> {
        split_sizes(self.n_devices, self.n_clusters)
    }

    fn data_spec(&self, dim: usize, noise_std: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_devices: self.n_devices,
            samples_per_device: self.samples_per_device,
            dim,
            noise_std,
            cluster_sizes: self.cluster_sizes(),
            param_range: self.param_range,
            seed,
        }
    }
}

/// Near-equal partition of `n` devices into `k` clusters.
fn split_sizes(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    (0..k).map(|i| base + usize::from(i < extra)).collect()
}

#[derive(Debug, Clone)]
enum ColumnTask {
    Alg1 {
        dim: usize,
        noise_std: f64,
        candidate_count: usize,
        batch_size: Option<usize>,
    },
    Ifca {
        dim: usize,
        noise_std: f64,
    },
    OracleSampler {
        dim: usize,
        noise_std: f64,
    },
    AgnosticTree {
        dim: usize,
        noise_std: f64,
    },
    LocalTreeBaseline {
        dim: usize,
        noise_std: f64,
    },
}

#[derive(Debug, Clone)]
struct Column {
    label: String,
    task: ColumnTask,
}

fn columns_for(res: &ResolvedExperiment) -> Vec<Column> {
    let mut cols = Vec::new();
    match res.kind {
        ExperimentKind::DmSweep => {
            for &dm in &res.dm_values {
                cols.push(Column {
                    label: format!("d/m={}", dm),
                    task: ColumnTask::Alg1 {
                        dim: res.dim_for(dm),
                        noise_std: res.noise_std,
                        candidate_count: res.candidate_count,
                        batch_size: None,
                    },
                });
            }
        }
        ExperimentKind::NoiseSweep => {
            let dim = res.dim_for(res.dm_values[0]);
            for &sigma in &res.noise_values {
                cols.push(Column {
                    label: format!("sigma={}", sigma),
                    task: ColumnTask::Alg1 {
                        dim,
                        noise_std: sigma,
                        candidate_count: res.candidate_count,
                        batch_size: None,
                    },
                });
            }
        }
        ExperimentKind::SubsetSweep => {
            let dim = res.dim_for(res.dm_values[0]);
            for &s in &res.subset_values {
                cols.push(Column {
                    label: format!("S={}", s),
                    task: ColumnTask::Alg1 {
                        dim,
                        noise_std: res.noise_std,
                        candidate_count: s,
                        batch_size: None,
                    },
                });
            }
        }
        ExperimentKind::IfcaCompare | ExperimentKind::IfcaMisspecified => {
            for &dm in &res.dm_values {
                cols.push(Column {
                    label: format!("algo1 d/m={}", dm),
                    task: ColumnTask::Alg1 {
                        dim: res.dim_for(dm),
                        noise_std: res.noise_std,
                        candidate_count: res.candidate_count,
                        batch_size: None,
                    },
                });
            }
            for &dm in &res.dm_values {
                cols.push(Column {
                    label: format!("ifca d/m={}", dm),
                    task: ColumnTask::Ifca {
                        dim: res.dim_for(dm),
                        noise_std: res.noise_std,
                    },
                });
            }
        }
        ExperimentKind::OracleCompare => {
            let dim = res.dim_for(res.dm_values[0]);
            cols.push(Column {
                label: "algo1".into(),
                task: ColumnTask::Alg1 {
                    dim,
                    noise_std: res.noise_std,
                    candidate_count: res.candidate_count,
                    batch_size: None,
                },
            });
            cols.push(Column {
                label: "oracle".into(),
                task: ColumnTask::OracleSampler {
                    dim,
                    noise_std: res.noise_std,
                },
            });
        }
        ExperimentKind::Online => {
            for &dm in &res.dm_values {
                cols.push(Column {
                    label: format!("d/m={}", dm),
                    task: ColumnTask::Alg1 {
                        dim: res.dim_for(dm),
                        noise_std: res.noise_std,
                        candidate_count: res.candidate_count,
                        batch_size: Some(res.batch_size),
                    },
                });
            }
        }
        ExperimentKind::TreeAgnostic => {
            for &dm in &res.dm_values {
                cols.push(Column {
                    label: format!("algo2 d/m={}", dm),
                    task: ColumnTask::AgnosticTree {
                        dim: res.dim_for(dm),
                        noise_std: res.noise_std,
                    },
                });
            }
            for &dm in &res.dm_values {
                cols.push(Column {
                    label: format!("local d/m={}", dm),
                    task: ColumnTask::LocalTreeBaseline {
                        dim: res.dim_for(dm),
                        noise_std: res.noise_std,
                    },
                });
            }
        }
    }
    cols
}

fn snapshot_mse_trace(
    snapshots: &[LinearParams],
    truth: &nalgebra::DVector<f64>,
    label: &str,
) -> MetricTrace {
    MetricTrace::from_values(
        label,
        snapshots
            .iter()
            .enumerate()
            .map(|(k, w)| (k, param_mse_vec(w, truth)))
            .collect(),
    )
}

fn run_cell(res: &ResolvedExperiment, column: &Column, seed: u64) -> Result<MetricTrace> {
    match &column.task {
        ColumnTask::Alg1 {
            dim,
            noise_std,
            candidate_count,
            batch_size,
        } => {
            let fed = generate_federation(&res.data_spec(*dim, *noise_std, seed))?;
            let config = Alg1Config {
                learning_rate: res.learning_rate,
                rounds: res.rounds,
                candidate_count: *candidate_count,
                target_device: 0,
                init: res.init,
                seed,
            };
            let run = match batch_size {
                Some(batch) => run_algorithm1_online(&fed, &config, *batch)?,
                None => run_algorithm1(&fed, &config)?,
            };
            Ok(snapshot_mse_trace(
                &run.snapshots,
                fed.true_params(0),
                &column.label,
            ))
        }
        ColumnTask::Ifca { dim, noise_std } => {
            let fed = generate_federation(&res.data_spec(*dim, *noise_std, seed))?;
            let config = IfcaConfig {
                k_assumed: res.ifca_k,
                learning_rate: res.learning_rate,
                rounds: res.rounds,
                init_scale: res.ifca_init_scale,
                seed,
            };
            let run = run_ifca(&fed, &config)?;
            Ok(MetricTrace::from_values(&column.label, run.target_mse))
        }
        ColumnTask::OracleSampler { dim, noise_std } => {
            let fed = generate_federation(&res.data_spec(*dim, *noise_std, seed))?;
            let config = Alg1Config {
                learning_rate: res.learning_rate,
                rounds: res.rounds,
                candidate_count: 1,
                target_device: 0,
                init: res.init,
                seed,
            };
            let run = run_oracle_sampler(&fed, &config)?;
            Ok(snapshot_mse_trace(
                &run.snapshots,
                fed.true_params(0),
                &column.label,
            ))
        }
        ColumnTask::AgnosticTree { dim, noise_std } => {
            let fed = generate_federation(&res.data_spec(*dim, *noise_std, seed))?;
            let model = ModelKind::Tree {
                max_depth: res.tree_depth,
            };
            let test_set = generate_unlabeled_test_set(res.test_count, *dim, seed)?;
            let val = generate_validation_set(0, &fed, res.validation_count, seed)?;
            let oracle = train_cluster_oracle_model(&fed, 0, model)?;
            let oracle_mse = validation_mse(&oracle, &val);
            if oracle_mse == 0.0 {
                return Err(Error::ZeroOracleMse);
            }
            let config = Alg2Config {
                loss_weight: res.loss_weight,
                rounds: res.rounds,
                candidate_count: res.candidate_count,
                target_device: 0,
                test_set,
                model,
                seed,
            };
            let run = run_algorithm2(&fed, &config, &val)?;
            Ok(MetricTrace::from_values(
                &column.label,
                run.validation_trace
                    .into_iter()
                    .map(|(k, v)| (k, v / oracle_mse))
                    .collect(),
            ))
        }
        ColumnTask::LocalTreeBaseline { dim, noise_std } => {
            let fed = generate_federation(&res.data_spec(*dim, *noise_std, seed))?;
            let model = ModelKind::Tree {
                max_depth: res.tree_depth,
            };
            let val = generate_validation_set(0, &fed, res.validation_count, seed)?;
            let oracle = train_cluster_oracle_model(&fed, 0, model)?;
            let oracle_mse = validation_mse(&oracle, &val);
            if oracle_mse == 0.0 {
                return Err(Error::ZeroOracleMse);
            }
            let local = train_local_only(&fed.datasets[0], model)?;
            let ratio = validation_mse(&local, &val) / oracle_mse;
            Ok(MetricTrace::from_values(
                &column.label,
                (0..=res.rounds).map(|k| (k, ratio)).collect(),
            ))
        }
    }
}

/// Result of one experiment: seed-averaged traces plus the per-seed runs.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub resolved: ResolvedExperiment,
    pub traces: Vec<MetricTrace>,
    pub per_seed: Vec<MetricTrace>,
}

/// Execute every (column, seed) cell of the experiment.
///
/// Cells run in parallel; traces are reduced in config order so the output
/// is independent of scheduling.
pub fn run_experiment(res: &ResolvedExperiment) -> Result<ExperimentOutput> {
    let columns = columns_for(res);
    let seeds = res.seeds();
    let cells: Vec<(usize, usize)> = (0..columns.len())
        .flat_map(|c| (0..seeds.len()).map(move |s| (c, s)))
        .collect();

    let mut results: Vec<(usize, usize, MetricTrace)> = cells
        .par_iter()
        .map(|&(c, s)| run_cell(res, &columns[c], seeds[s]).map(|t| (c, s, t)))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|&(c, s, _)| (c, s));

    let mut per_seed = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(columns.len());
    for (c, column) in columns.iter().enumerate() {
        let runs: Vec<MetricTrace> = results
            .iter()
            .filter(|&&(rc, _, _)| rc == c)
            .map(|(_, s, t)| {
                let mut labeled = t.clone();
                labeled.label = format!("{} seed={}", column.label, seeds[*s]);
                labeled
            })
            .collect();
        traces.push(average_traces(&runs, column.label.clone()));
        per_seed.extend(runs);
    }

    Ok(ExperimentOutput {
        resolved: res.clone(),
        traces,
        per_seed,
    })
}

fn write_csv(path: &Path, traces: &[MetricTrace]) -> Result<()> {
    assert!(!traces.is_empty());
    let grid: Vec<usize> = traces[0].values.iter().map(|&(k, _)| k).collect();
    for t in traces {
        assert_eq!(t.values.len(), grid.len(), "column grids differ");
    }
    let mut text = String::new();
    text.push('k');
    for t in traces {
        text.push(',');
        text.push_str(&t.label);
    }
    text.push('\n');
    for (row, &k) in grid.iter().enumerate() {
        text.push_str(&k.to_string());
        for t in traces {
            text.push(',');
            text.push_str(&sig12(t.values[row].1));
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn manifest_text(output: &ExperimentOutput) -> String {
    let res = &output.resolved;
    let mut text = String::new();
    let mut line = |key: &str, value: String| {
        text.push_str(key);
        text.push_str(" = ");
        text.push_str(&value);
        text.push('\n');
    };
    let join_f64 = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    line("kind", res.kind.name().into());
    line("n_devices", res.n_devices.to_string());
    line("samples_per_device", res.samples_per_device.to_string());
    line("rounds", res.rounds.to_string());
    line("n_seeds", res.n_seeds.to_string());
    line("base_seed", res.base_seed.to_string());
    line(
        "seeds",
        res.seeds()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    line("noise_std", sig12(res.noise_std));
    line(
        "noise_std_source",
        if res.noise_std_is_default {
            "default".into()
        } else {
            "config".into()
        },
    );
    line("learning_rate", sig12(res.learning_rate));
    line("candidate_count", res.candidate_count.to_string());
    line(
        "init",
        match res.init {
            InitScheme::Zero => "zero".into(),
            InitScheme::LocalPretrain => "local_pretrain".into(),
        },
    );
    line("dm_values", join_f64(&res.dm_values));
    line(
        "dims",
        res.dm_values
            .iter()
            .map(|&dm| res.dim_for(dm).to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    line("noise_values", join_f64(&res.noise_values));
    line(
        "subset_values",
        res.subset_values
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    line("n_clusters", res.n_clusters.to_string());
    line(
        "cluster_sizes",
        res.cluster_sizes()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    line(
        "param_range",
        format!("{},{}", res.param_range.0, res.param_range.1),
    );
    line("ifca_k", res.ifca_k.to_string());
    line("ifca_init_scale", sig12(res.ifca_init_scale));
    line("batch_size", res.batch_size.to_string());
    line("tree_depth", res.tree_depth.to_string());
    line("loss_weight", sig12(res.loss_weight));
    line("test_count", res.test_count.to_string());
    line("validation_count", res.validation_count.to_string());
    line(
        "columns",
        output
            .traces
            .iter()
            .map(|t| t.label.clone())
            .collect::<Vec<_>>()
            .join(","),
    );
    line("csv", format!("{}.csv", res.kind.name()));
    line("per_seed_csv", format!("{}_per_seed.csv", res.kind.name()));
    text
}

/// Write the averaged CSV, the per-seed CSV, and the manifest; returns the
/// paths written.
pub fn write_outputs(output: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    let dir = &output.resolved.out;
    fs::create_dir_all(dir)?;
    let name = output.resolved.kind.name();
    let csv = dir.join(format!("{}.csv", name));
    let per_seed = dir.join(format!("{}_per_seed.csv", name));
    let manifest = dir.join(format!("{}_manifest.txt", name));
    write_csv(&csv, &output.traces)?;
    write_csv(&per_seed, &output.per_seed)?;
    fs::write(&manifest, manifest_text(output))?;
    Ok(vec![csv, per_seed, manifest])
}

/// Resolve, run, and persist one experiment.
pub fn execute(
    config: &ExperimentConfig,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<(ExperimentOutput, Vec<PathBuf>)> {
    let resolved = config.resolve(seed_override, out_override)?;
    let output = run_experiment(&resolved)?;
    let paths = write_outputs(&output)?;
    Ok((output, paths))
}
