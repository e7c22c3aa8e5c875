//! Clustered synthetic federations of local regression datasets.
//!
//! Devices are partitioned into clusters; all devices of a cluster share
//! one true parameter vector drawn uniformly from `param_range`. Each
//! device holds `samples_per_device` points with standard-normal features
//! and labels from the noisy linear model `y = X w + noise_std * eps`.
//!
//! All generation is a pure function of the spec and its seed: separate
//! ChaCha streams per purpose and device make regeneration bit-identical
//! and keep feature draws untouched when the noise level changes.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numfmt::sig12;
use crate::rng::{
    stream_rng, STREAM_CLUSTER_PARAMS, STREAM_FEATURES, STREAM_NOISE, STREAM_TEST_SET,
    STREAM_VAL_FEATURES, STREAM_VAL_NOISE,
};
use crate::{Error, Result};

/// Configuration of one synthetic federation.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_devices: usize,
    pub samples_per_device: usize,
    pub dim: usize,
    pub noise_std: f64,
    /// One entry per cluster; entries must sum to `n_devices`.
    pub cluster_sizes: Vec<usize>,
    /// Range the true cluster parameters are drawn from.
    pub param_range: (f64, f64),
    pub seed: u64,
}

impl SyntheticSpec {
    /// Spec with two equal clusters and the default parameter range.
    pub fn two_cluster(
        n_devices: usize,
        samples_per_device: usize,
        dim: usize,
        noise_std: f64,
        seed: u64,
    ) -> Self {
        let half = n_devices / 2;
        SyntheticSpec {
            n_devices,
            samples_per_device,
            dim,
            noise_std,
            cluster_sizes: vec![half, n_devices - half],
            param_range: DEFAULT_PARAM_RANGE,
            seed,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_devices == 0 || self.samples_per_device == 0 || self.dim == 0 {
            return Err(Error::Config(
                "n_devices, samples_per_device and dim must be positive".into(),
            ));
        }
        if self.noise_std < 0.0 || !self.noise_std.is_finite() {
            return Err(Error::Config("noise_std must be finite and >= 0".into()));
        }
        if self.cluster_sizes.is_empty() || self.cluster_sizes.contains(&0) {
            return Err(Error::Config(
                "cluster_sizes must be nonempty and positive".into(),
            ));
        }
        if self.cluster_sizes.iter().sum::<usize>() != self.n_devices {
            return Err(Error::Config(format!(
                "cluster_sizes sum to {}, expected n_devices = {}",
                self.cluster_sizes.iter().sum::<usize>(),
                self.n_devices
            )));
        }
        if !(self.param_range.0 < self.param_range.1) {
            return Err(Error::Config(
                "param_range must be a nonempty interval".into(),
            ));
        }
        Ok(())
    }
}

pub const DEFAULT_PARAM_RANGE: (f64, f64) = (-5.0, 5.0);

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    n_devices: Option<usize>,
    samples_per_device: Option<usize>,
    dim: Option<usize>,
    noise_std: Option<f64>,
    cluster_sizes: Option<Vec<usize>>,
    param_range: Option<[f64; 2]>,
    seed: Option<u64>,
}

impl SyntheticSpec {
    /// The standard two-cluster testbed: 100 devices of 10 samples each,
    /// dimension 20, zero noise.
    pub fn default_testbed(seed: u64) -> Self {
        SyntheticSpec::two_cluster(100, 10, 20, 0.0, seed)
    }

    /// Parse a spec from TOML text; unset keys use the default testbed
    /// values, unknown keys are an error.
    pub fn from_toml(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let file: SpecFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let n_devices = file.n_devices.unwrap_or(100);
        let spec = SyntheticSpec {
            n_devices,
            samples_per_device: file.samples_per_device.unwrap_or(10),
            dim: file.dim.unwrap_or(20),
            noise_std: file.noise_std.unwrap_or(0.0),
            cluster_sizes: file.cluster_sizes.unwrap_or_else(|| {
                let half = n_devices / 2;
                vec![half, n_devices - half]
            }),
            param_range: file
                .param_range
                .map(|r| (r[0], r[1]))
                .unwrap_or(DEFAULT_PARAM_RANGE),
            seed: seed_override.or(file.seed).unwrap_or(0),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Ground-truth cluster structure of a federation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster index of each device.
    pub device_to_cluster: Vec<usize>,
    /// True parameter vector of each cluster.
    pub cluster_params: Vec<DVector<f64>>,
}

impl ClusterAssignment {
    /// True parameter vector of one device.
    pub fn params_of(&self, device: usize) -> &DVector<f64> {
        &self.cluster_params[self.device_to_cluster[device]]
    }
}

/// Feature matrix and label vector of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
}

impl LocalDataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimMismatch {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        Ok(LocalDataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Copy of row `r` of the feature matrix.
    pub fn feature_row(&self, r: usize) -> Vec<f64> {
        self.features.row(r).iter().copied().collect()
    }
}

/// A generated network of devices together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Federation {
    pub datasets: Vec<LocalDataset>,
    pub truth: ClusterAssignment,
    pub spec: SyntheticSpec,
}

impl Federation {
    pub fn n_devices(&self) -> usize {
        self.datasets.len()
    }

    pub fn dataset(&self, device: usize) -> Result<&LocalDataset> {
        self.datasets.get(device).ok_or(Error::DeviceIndex {
            index: device,
            n: self.datasets.len(),
        })
    }

    /// True parameter vector of one device.
    pub fn true_params(&self, device: usize) -> &DVector<f64> {
        self.truth.params_of(device)
    }

    /// Indices of all devices in `cluster`.
    pub fn cluster_members(&self, cluster: usize) -> Vec<usize> {
        self.truth
            .device_to_cluster
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    /// Write the federation as one CSV per device plus a manifest.
    pub fn save_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        manifest.push_str(&format!("n_devices = {}\n", self.spec.n_devices));
        manifest.push_str(&format!(
            "samples_per_device = {}\n",
            self.spec.samples_per_device
        ));
        manifest.push_str(&format!("dim = {}\n", self.spec.dim));
        manifest.push_str(&format!("noise_std = {}\n", sig12(self.spec.noise_std)));
        manifest.push_str(&format!("n_clusters = {}\n", self.spec.n_clusters()));
        manifest.push_str(&format!(
            "cluster_sizes = {}\n",
            join_usize(&self.spec.cluster_sizes)
        ));
        manifest.push_str(&format!(
            "param_range = {},{}\n",
            sig12(self.spec.param_range.0),
            sig12(self.spec.param_range.1)
        ));
        manifest.push_str(&format!("seed = {}\n", self.spec.seed));
        manifest.push_str(&format!(
            "device_to_cluster = {}\n",
            join_usize(&self.truth.device_to_cluster)
        ));
        for (c, w) in self.truth.cluster_params.iter().enumerate() {
            let row: Vec<String> = w.iter().map(|&v| sig12(v)).collect();
            manifest.push_str(&format!("cluster_params_{} = {}\n", c, row.join(",")));
        }
        fs::write(dir.join("manifest.txt"), manifest)?;

        for (i, data) in self.datasets.iter().enumerate() {
            let mut out = fs::File::create(dir.join(format!("device_{:03}.csv", i)))?;
            let header: Vec<String> = (0..data.dim()).map(|j| format!("x{}", j)).collect();
            writeln!(out, "{},y", header.join(","))?;
            for r in 0..data.len() {
                let mut cells: Vec<String> =
                    data.features.row(r).iter().map(|&v| sig12(v)).collect();
                cells.push(sig12(data.labels[r]));
                writeln!(out, "{}", cells.join(","))?;
            }
        }
        Ok(())
    }
}

fn join_usize(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let buf: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DMatrix::from_row_slice(rows, cols, &buf)
}

fn normal_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Labels from the noisy linear model `y = X w + noise_std * eps`.
fn labels_for(
    features: &DMatrix<f64>,
    params: &DVector<f64>,
    noise_std: f64,
    eps: &DVector<f64>,
) -> DVector<f64> {
    features * params + noise_std * eps
}

/// Generate a clustered federation from a spec.
///
/// Devices are assigned to clusters in contiguous blocks following
/// `cluster_sizes`. Identical spec and seed yield a bit-identical
/// federation.
pub fn generate_federation(spec: &SyntheticSpec) -> Result<Federation> {
    spec.validate()?;

    let mut param_rng = stream_rng(spec.seed, STREAM_CLUSTER_PARAMS, 0);
    let uniform = Uniform::new_inclusive(spec.param_range.0, spec.param_range.1)
        .map_err(|_| Error::Config("invalid param_range".into()))?;
    let cluster_params: Vec<DVector<f64>> = (0..spec.n_clusters())
        .map(|_| {
            DVector::from_iterator(
                spec.dim,
                (0..spec.dim).map(|_| uniform.sample(&mut param_rng)),
            )
        })
        .collect();

    let mut device_to_cluster = Vec::with_capacity(spec.n_devices);
    for (c, &size) in spec.cluster_sizes.iter().enumerate() {
        device_to_cluster.extend(std::iter::repeat_n(c, size));
    }

    let mut datasets = Vec::with_capacity(spec.n_devices);
    for (i, &c) in device_to_cluster.iter().enumerate() {
        let mut feat_rng = stream_rng(spec.seed, STREAM_FEATURES, i as u64);
        let mut noise_rng = stream_rng(spec.seed, STREAM_NOISE, i as u64);
        let features = normal_matrix(&mut feat_rng, spec.samples_per_device, spec.dim);
        let eps = normal_vector(&mut noise_rng, spec.samples_per_device);
        let labels = labels_for(&features, &cluster_params[c], spec.noise_std, &eps);
        datasets.push(LocalDataset { features, labels });
    }

    Ok(Federation {
        datasets,
        truth: ClusterAssignment {
            device_to_cluster,
            cluster_params,
        },
        spec: spec.clone(),
    })
}

/// Unlabeled standard-normal feature matrix with `count` rows.
pub fn generate_unlabeled_test_set(count: usize, dim: usize, seed: u64) -> Result<DMatrix<f64>> {
    if count == 0 || dim == 0 {
        return Err(Error::Config(
            "test set count and dim must be positive".into(),
        ));
    }
    let mut rng = stream_rng(seed, STREAM_TEST_SET, 0);
    Ok(normal_matrix(&mut rng, count, dim))
}

/// Fresh labeled samples from one device's generating distribution.
///
/// Draws come from validation-specific streams, so the device's training
/// data is left untouched by however many validation sets are generated.
pub fn generate_validation_set(
    device: usize,
    federation: &Federation,
    count: usize,
    seed: u64,
) -> Result<LocalDataset> {
    if device >= federation.n_devices() {
        return Err(Error::DeviceIndex {
            index: device,
            n: federation.n_devices(),
        });
    }
    if count == 0 {
        return Err(Error::Config("validation count must be positive".into()));
    }
    let spec = &federation.spec;
    let mut feat_rng = stream_rng(seed, STREAM_VAL_FEATURES, device as u64);
    let mut noise_rng = stream_rng(seed, STREAM_VAL_NOISE, device as u64);
    let features = normal_matrix(&mut feat_rng, count, spec.dim);
    let eps = normal_vector(&mut noise_rng, count);
    let labels = labels_for(
        &features,
        federation.true_params(device),
        spec.noise_std,
        &eps,
    );
    Ok(LocalDataset { features, labels })
}

/// Draw a batch of fresh samples from one device's distribution using the
/// caller's generator. Used by the online selection variant, where each
/// probe sees only the most recent batch instead of a fixed dataset.
pub fn sample_device_batch(
    federation: &Federation,
    device: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LocalDataset> {
    if device >= federation.n_devices() {
        return Err(Error::DeviceIndex {
            index: device,
            n: federation.n_devices(),
        });
    }
    let spec = &federation.spec;
    let features = normal_matrix(rng, count, spec.dim);
    let eps = normal_vector(rng, count);
    let labels = labels_for(
        &features,
        federation.true_params(device),
        spec.noise_std,
        &eps,
    );
    Ok(LocalDataset { features, labels })
}
