use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("zero vector has no Miller representative")]
    ZeroVector,
    #[error("not a Miller vector: {0}")]
    NotMiller(String),
    #[error("invalid Miller sequence target: {0}")]
    InvalidTarget(String),
    #[error("region is unbounded")]
    UnboundedRegion,
    #[error("degenerate polytope: {0}")]
    DegeneratePolytope(String),
    #[error("interface plane does not cut the interior of the domain")]
    PlaneMissesInterior,
    #[error("facet offsets changed the polytope combinatorics: {0}")]
    CombinatorialChange(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("deformation is not invertible: {0}")]
    NonInvertible(String),
    #[error("gradients are not rank-one compatible: {0}")]
    Incompatible(String),
    #[error("invalid ε-schedule: {0}")]
    InvalidSchedule(String),
    #[error("least-squares design is rank deficient")]
    RankDeficient,
    #[error("inconsistent scene: {0}")]
    InconsistentScene(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
