//! Shared serializable result types for the verification routines.

use serde::Serialize;

/// Outcome of one slice-lemma verification against its stated bound.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub name: String,
    pub s: f64,
    pub grid: usize,
    /// The value the slice must stay at or below (3 or 4).
    pub bound: f64,
    /// Largest OPT value seen anywhere on the checked slices.
    pub max_opt: f64,
    /// Bound minus the largest OPT over the region where a strict gap
    /// is claimed (anchor points excluded). NaN when the lemma makes no
    /// gap claim.
    pub min_margin: f64,
    pub monotone: bool,
    pub anchors: bool,
    pub aux: bool,
    pub pass: bool,
}

/// Per-partition accumulator for grid sweeps. Partitions merge with
/// maxima and integer sums only, so the merged report is independent of
/// partition boundaries and thread count.
#[derive(Debug, Clone)]
pub struct SweepPartial {
    pub points: usize,
    pub case_points: [usize; 4],
    pub max_opt: f64,
    pub max_opt_outside: f64,
    pub coupling_error: f64,
}

impl SweepPartial {
    pub fn new() -> Self {
        SweepPartial {
            points: 0,
            case_points: [0; 4],
            max_opt: f64::MIN,
            max_opt_outside: f64::MIN,
            coupling_error: 0.0,
        }
    }
}

impl Default for SweepPartial {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of a whole-domain sweep of a bound `OPT <= bound` with a
/// strict margin required outside an eps-neighborhood of the balanced
/// point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub s: f64,
    pub grid: usize,
    pub eps: f64,
    pub bound: f64,
    pub points: usize,
    /// Largest OPT anywhere on the grid.
    pub max_opt: f64,
    /// Largest OPT outside the eps-neighborhood.
    pub max_opt_outside: f64,
    pub min_margin_outside: f64,
    /// Largest violation of the coupling constraint tying the
    /// construction to the class fractions.
    pub coupling_error: f64,
    /// Points handled by each of the four constructions.
    pub case_points: [usize; 4],
    pub pass: bool,
}
