//! Abstract predictor shared by the model-agnostic algorithm, the
//! baselines, and the metrics: either a linear model or a regression tree.

use nalgebra::{DMatrix, DVector};

use crate::linear::LinearParams;
use crate::synth::LocalDataset;
use crate::tree::TreeNode;

/// Which local model class to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Tree { max_depth: usize },
}

/// A fitted predictor mapping feature vectors to scalar labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    Linear(LinearParams),
    Tree(TreeNode),
}

impl Hypothesis {
    pub fn predict_slice(&self, features: &[f64]) -> f64 {
        match self {
            Hypothesis::Linear(p) => p.predict_slice(features),
            Hypothesis::Tree(t) => t.predict(features),
        }
    }

    /// Predictions for every row of a feature matrix.
    pub fn predict_matrix(&self, features: &DMatrix<f64>) -> DVector<f64> {
        match self {
            Hypothesis::Linear(p) => features * &p.weights,
            Hypothesis::Tree(t) => {
                let mut buf = vec![0.0; features.ncols()];
                DVector::from_iterator(
                    features.nrows(),
                    (0..features.nrows()).map(|r| {
                        for (j, v) in features.row(r).iter().enumerate() {
                            buf[j] = *v;
                        }
                        t.predict(&buf)
                    }),
                )
            }
        }
    }

    /// Mean squared prediction error on a labeled dataset.
    pub fn mean_squared_loss(&self, data: &LocalDataset) -> f64 {
        let pred = self.predict_matrix(&data.features);
        (&data.labels - pred).norm_squared() / data.len() as f64
    }
}

impl From<LinearParams> for Hypothesis {
    fn from(p: LinearParams) -> Self {
        Hypothesis::Linear(p)
    }
}

impl From<TreeNode> for Hypothesis {
    fn from(t: TreeNode) -> Self {
        Hypothesis::Tree(t)
    }
}
