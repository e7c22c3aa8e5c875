//! Scalar quality measures and iteration-indexed traces.

use nalgebra::DVector;

use crate::hypothesis::Hypothesis;
use crate::linear::LinearParams;
use crate::synth::LocalDataset;
use crate::{Error, Result};

/// Squared Euclidean distance between an estimate and the true parameters.
pub fn param_mse(estimate: &LinearParams, truth: &LinearParams) -> f64 {
    assert_eq!(estimate.dim(), truth.dim(), "parameter dimension mismatch");
    (&estimate.weights - &truth.weights).norm_squared()
}

/// Convenience form taking the raw truth vector.
pub fn param_mse_vec(estimate: &LinearParams, truth: &DVector<f64>) -> f64 {
    assert_eq!(estimate.dim(), truth.len(), "parameter dimension mismatch");
    (&estimate.weights - truth).norm_squared()
}

/// Sum of squared prediction errors over a validation set.
///
/// Deliberately a sum rather than a mean; the normalization in
/// [`normalized_mse`] cancels the constant either way.
pub fn validation_mse(h: &Hypothesis, val: &LocalDataset) -> f64 {
    let pred = h.predict_matrix(&val.features);
    (&val.labels - pred).norm_squared()
}

/// Validation error of `h` relative to the oracle model's.
pub fn normalized_mse(h: &Hypothesis, oracle_h: &Hypothesis, val: &LocalDataset) -> Result<f64> {
    let oracle = validation_mse(oracle_h, val);
    if oracle == 0.0 {
        return Err(Error::ZeroOracleMse);
    }
    Ok(validation_mse(h, val) / oracle)
}

/// Iteration-indexed metric values for one experiment setting.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrace {
    pub label: String,
    pub values: Vec<(usize, f64)>,
}

impl MetricTrace {
    pub fn new(label: impl Into<String>) -> Self {
        MetricTrace {
            label: label.into(),
            values: Vec::new(),
        }
    }

    pub fn from_values(label: impl Into<String>, values: Vec<(usize, f64)>) -> Self {
        let mut trace = MetricTrace::new(label);
        for (k, v) in values {
            trace.push(k, v);
        }
        trace
    }

    /// Append one (round, value) point; rounds must be strictly increasing
    /// and values finite.
    pub fn push(&mut self, round: usize, value: f64) {
        if let Some(&(last, _)) = self.values.last() {
            assert!(round > last, "rounds must be strictly increasing");
        }
        assert!(value.is_finite(), "metric values must be finite");
        self.values.push((round, value));
    }

    pub fn final_value(&self) -> Option<f64> {
        self.values.last().map(|&(_, v)| v)
    }

    /// First round at which the value drops to `threshold` or below.
    pub fn first_round_at_or_below(&self, threshold: f64) -> Option<usize> {
        self.values
            .iter()
            .find(|&&(_, v)| v <= threshold)
            .map(|&(k, _)| k)
    }

    pub fn min_value(&self) -> Option<f64> {
        self.values
            .iter()
            .map(|&(_, v)| v)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }
}

/// Pointwise mean of traces sharing one round grid.
pub fn average_traces(traces: &[MetricTrace], label: impl Into<String>) -> MetricTrace {
    assert!(!traces.is_empty(), "cannot average zero traces");
    let grid: Vec<usize> = traces[0].values.iter().map(|&(k, _)| k).collect();
    for t in traces {
        assert_eq!(
            t.values.len(),
            grid.len(),
            "traces must share one round grid"
        );
    }
    let mut out = MetricTrace::new(label);
    for (pos, &k) in grid.iter().enumerate() {
        let sum: f64 = traces.iter().map(|t| t.values[pos].1).sum();
        out.push(k, sum / traces.len() as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeNode;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn param_mse_examples() {
        let a = LinearParams::new(DVector::from_row_slice(&[1.0, 0.0]));
        let zero = LinearParams::zeros(2);
        assert_eq!(param_mse(&a, &a), 0.0);
        assert_eq!(param_mse(&a, &zero), 1.0);
        // Symmetric, and matches a direct sum.
        let b = LinearParams::new(DVector::from_row_slice(&[-0.5, 2.0]));
        let direct = (1.0f64 - -0.5).powi(2) + (0.0f64 - 2.0).powi(2);
        assert!((param_mse(&a, &b) - direct).abs() < 1e-12);
        assert_eq!(param_mse(&a, &b), param_mse(&b, &a));
    }

    #[test]
    fn validation_mse_is_a_sum() {
        let val = LocalDataset::new(
            DMatrix::from_row_slice(2, 1, &[0.0, 0.0]),
            DVector::from_row_slice(&[1.0, 2.0]),
        )
        .unwrap();
        let zero = Hypothesis::Tree(TreeNode::Leaf { value: 0.0 });
        assert_eq!(validation_mse(&zero, &val), 5.0);
        let perfect = Hypothesis::Tree(TreeNode::Leaf { value: 1.0 });
        let one_point = LocalDataset::new(
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DVector::from_row_slice(&[1.0]),
        )
        .unwrap();
        assert_eq!(validation_mse(&perfect, &one_point), 0.0);
    }

    #[test]
    fn normalized_mse_examples() {
        let val = LocalDataset::new(
            DMatrix::from_row_slice(2, 1, &[0.0, 0.0]),
            DVector::from_row_slice(&[1.0, 2.0]),
        )
        .unwrap();
        let oracle = Hypothesis::Tree(TreeNode::Leaf { value: 0.0 });
        assert_eq!(normalized_mse(&oracle, &oracle, &val).unwrap(), 1.0);

        // Predictor with double the oracle's residuals has 4x its MSE.
        let val2 = LocalDataset::new(
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DVector::from_row_slice(&[2.0]),
        )
        .unwrap();
        let half = Hypothesis::Tree(TreeNode::Leaf { value: 1.0 });
        let zero = Hypothesis::Tree(TreeNode::Leaf { value: 0.0 });
        assert_eq!(normalized_mse(&zero, &half, &val2).unwrap(), 4.0);

        let exact = Hypothesis::Tree(TreeNode::Leaf { value: 2.0 });
        assert!(matches!(
            normalized_mse(&zero, &exact, &val2),
            Err(Error::ZeroOracleMse)
        ));
    }

    #[test]
    fn trace_ordering_is_enforced() {
        let mut t = MetricTrace::new("d/m=2");
        t.push(0, 5.0);
        t.push(1, 4.0);
        assert_eq!(t.first_round_at_or_below(4.5), Some(1));
        assert_eq!(t.final_value(), Some(4.0));
        let result = std::panic::catch_unwind(move || t.push(1, 3.0));
        assert!(result.is_err());
    }

    #[test]
    fn averaging_is_pointwise() {
        let a = MetricTrace::from_values("s", vec![(0, 1.0), (1, 3.0)]);
        let b = MetricTrace::from_values("s", vec![(0, 3.0), (1, 5.0)]);
        let avg = average_traces(&[a, b], "avg");
        assert_eq!(avg.values, vec![(0, 2.0), (1, 4.0)]);
    }
}
