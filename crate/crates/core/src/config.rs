//! Centralized numerical tolerances.

/// Every tolerance and iteration budget used by the solvers in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Fixed-point residual for iterative projections and the generic dual solver.
    pub fixed_point_tol: f64,
    /// Slack allowed on variational-inequality checks.
    pub vi_slack: f64,
    /// Feasibility slack accepted when a point is handed to a penalty.
    pub feasibility_slack: f64,
    /// Iteration cap for the generic dual solver.
    pub dual_max_iter: usize,
    /// Armijo slope for backtracking line searches.
    pub armijo_slope: f64,
    /// Backtracking contraction factor.
    pub backtrack_factor: f64,
    /// Below `generic_mu_floor * spread(g)` the generic dual solver refuses to run.
    pub generic_mu_floor: f64,
    /// Iteration cap for projected-gradient polytope projections.
    pub projection_max_iter: usize,
    /// Rank tolerance used when pruning redundant moment rows.
    pub rank_tol: f64,
    /// Residual target for the exponential-tilting Newton solve.
    pub tilting_tol: f64,
    /// Iteration cap for the exponential-tilting Newton solve.
    pub tilting_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            fixed_point_tol: 1e-12,
            vi_slack: 1e-10,
            feasibility_slack: 1e-9,
            dual_max_iter: 100_000,
            armijo_slope: 1e-4,
            backtrack_factor: 0.5,
            generic_mu_floor: 1e-3,
            projection_max_iter: 1_000_000,
            rank_tol: 1e-12,
            tilting_tol: 1e-12,
            tilting_max_iter: 200,
        }
    }
}
