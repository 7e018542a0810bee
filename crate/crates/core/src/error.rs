use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("payload mass must be positive and finite, got {0}")]
    Mass(f64),
    #[error("gravity must be positive and finite, got {0}")]
    Gravity(f64),
    #[error("inertia must be positive definite")]
    SingularInertia,
    #[error("robot `{id}`: quadrant {quadrant} is not in 1..=4")]
    QuadrantIndex { id: String, quadrant: usize },
    #[error("robot `{id}`: declared quadrant {declared} but attachment lies in quadrant {actual}")]
    QuadrantMismatch { id: String, declared: usize, actual: usize },
    #[error("robot `{id}`: attachment lies on a coordinate axis")]
    OnAxis { id: String },
    #[error("robot `{id}`: spin direction must be +1 or -1")]
    SpinDirection { id: String },
    #[error("robot `{id}`: thrust limits must satisfy max > min >= 0")]
    ThrustLimits { id: String },
    #[error("robot `{id}`: thrust-torque coefficient must be positive")]
    TorqueCoefficient { id: String },
    #[error("duplicate robot id `{id}`")]
    DuplicateId { id: String },
    #[error("quadrant {quadrant} has no robots")]
    EmptyQuadrant { quadrant: usize },
    #[error("quadrant {quadrant} mixes spin directions")]
    MixedSpin { quadrant: usize },
    #[error("all quadrants spin the same way; yaw is uncontrollable")]
    UniformSpin,
    #[error("quadrant-average thrust-torque coefficients differ: {means:?}")]
    TorqueCoefficientSpread { means: [f64; 4] },
    #[error("representative point of quadrant {quadrant} is not inside that quadrant")]
    RepresentativePoint { quadrant: usize },
    #[error("output coefficients must all be positive")]
    OutputCoefficients,
    #[error("acceleration map [1/m; B_phi] is singular for this geometry")]
    SingularAccelerationStack,
}

#[derive(Debug, Error)]
pub enum DesignError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid pole region: {0}")]
    PoleRegion(String),
    #[error("invalid uncertainty box: {0}")]
    UncertaintyBox(String),
    #[error("design infeasible: best margin {margin:.3e} is below {required:.1e}; most violated constraint `{worst}`")]
    Infeasible { worst: String, margin: f64, required: f64 },
    #[error("SDP solver failed during {phase}: {source}")]
    Solver {
        phase: &'static str,
        #[source]
        source: cotrans_sdp::SdpError,
    },
    #[error("solution failed certification: constraint `{worst}` has margin {margin:.3e}")]
    Certification { worst: String, margin: f64 },
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("archive has no matrix `{0}`")]
    Missing(String),
    #[error("matrix `{label}` is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Shape {
        label: String,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
}
