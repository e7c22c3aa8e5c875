//! Deterministic numeric formatting for CSV and manifest output.

/// Format with 12 significant digits in scientific notation.
///
/// Used for every floating-point value written to disk so that re-running
/// an experiment reproduces output files byte for byte.
pub(crate) fn sig12(v: f64) -> String {
    format!("{:.11e}", v)
}
