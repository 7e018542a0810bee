use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("block `{label}`: {reason}")]
    Dimension { label: String, reason: String },

    #[error("variable index {index} out of range for a problem with {nvars} variables")]
    VariableIndex { index: usize, nvars: usize },

    #[error(
        "solver stalled after {iterations} iterations \
         (relative gap {relative_gap:.3e}, primal infeasibility {primal_infeasibility:.3e}, \
         dual infeasibility {dual_infeasibility:.3e})"
    )]
    Stalled {
        iterations: usize,
        relative_gap: f64,
        primal_infeasibility: f64,
        dual_infeasibility: f64,
    },

    /// The primal iterate diverged, which certifies (numerically) that the
    /// LMI has no strictly feasible point.
    #[error("LMI appears infeasible: primal iterate diverged after {iterations} iterations")]
    Infeasible { iterations: usize },

    #[error("numerical breakdown: {0}")]
    Numerical(String),
}
