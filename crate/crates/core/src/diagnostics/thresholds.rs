//! Fixed thresholds for the statistical checks. Every tolerance used by a
//! Monte-Carlo verdict lives here.

/// A bound holds when `lhs ≤ rhs + BOUND_SE_MULTIPLIER·se`. Two standard
/// errors leave roughly a 2.5% one-sided false-alarm rate per report.
pub const BOUND_SE_MULTIPLIER: f64 = 2.0;

/// Significance level of every distribution-equality test.
pub const EQUIVALENCE_LEVEL: f64 = 0.05;

/// Share of matched runs that must not reject. With 20 runs at level 0.05
/// the binomial probability of 3 or more rejections is about 7.5%.
pub const EQUIVALENCE_MIN_PASS_RATE: f64 = 0.90;

/// Matched runs per equivalence check.
pub const EQUIVALENCE_RUNS: usize = 20;

/// Default permutation count for the energy test.
pub const ENERGY_PERMUTATIONS: usize = 500;

/// Slope tolerance around the predicted risk exponent.
pub const SLOPE_TOLERANCE: f64 = 0.15;

/// Risk schedules need at least this many sample sizes ...
pub const MIN_SCHEDULE_POINTS: usize = 4;

/// ... spanning at least this ratio between largest and smallest n.
pub const MIN_SCHEDULE_SPAN: f64 = 16.0;

/// Bootstrap resamples for the slope interval.
pub const BOOTSTRAP_RESAMPLES: usize = 400;

/// Minimum replicates for the localization Monte Carlo.
pub const MIN_LOCALIZATION_REPS: usize = 50;

/// Absolute slack on the regime inequality so that the boundary cases
/// (for example α = 1/23 at β = 1) are decided as the exact arithmetic
/// would decide them.
pub const REGIME_TOLERANCE: f64 = 1e-12;

/// Unbiasedness checks accept deviations within this many standard errors.
pub const UNBIASED_SE_MULTIPLIER: f64 = 3.0;

/// Agreement required between two routes to the same closed form.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-10;
