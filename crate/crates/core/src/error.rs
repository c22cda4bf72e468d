use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("edge {0} has zero length (repeated consecutive vertex)")]
    ZeroLengthEdge(usize),
    #[error("boundary self-intersects (edges {0} and {1})")]
    SelfIntersection(usize, usize),
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("points are not in counterclockwise order")]
    Orientation,
    #[error("invalid marking: {0}")]
    BadMarking(String),
    #[error("inner plate is not strictly inside the outer plate (inner vertex/edge {0})")]
    InnerNotInside(usize),
    #[error("similarity scale must be positive, got {0}")]
    BadScale(f64),
    #[error("{0}")]
    BadParameter(String),
}

impl GeometryError {
    /// Short machine-readable code, used in API error bodies.
    pub fn reason(&self) -> &'static str {
        match self {
            Self::TooFewVertices(_) => "too-few-vertices",
            Self::NonFinite(_) => "non-finite-coordinate",
            Self::ZeroLengthEdge(_) => "zero-length-edge",
            Self::SelfIntersection(..) => "self-intersection",
            Self::ZeroArea => "zero-area",
            Self::Orientation => "orientation",
            Self::BadMarking(_) => "bad-marking",
            Self::InnerNotInside(_) => "inner-not-inside",
            Self::BadScale(_) => "bad-scale",
            Self::BadParameter(_) => "bad-parameter",
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpecialFunctionError {
    #[error("argument {arg} outside the domain {domain}")]
    Domain { arg: f64, domain: &'static str },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MeshError {
    #[error("max_area must be positive, got {0}")]
    BadMaxArea(f64),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("invalid marking: triangle index {0} out of range")]
    BadMarking(usize),
    #[error("mesh refinement did not close after {0} bisections")]
    RefinementStalled(usize),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolveError {
    #[error("no Dirichlet data: the system is singular")]
    Singular,
    #[error("boundary tag {0} has neither Dirichlet nor Neumann data")]
    UncoveredTag(String),
    #[error("tag {0} is both Dirichlet and Neumann")]
    OverlappingTags(String),
    #[error("conflicting Dirichlet values at node {0}")]
    ConflictingDirichlet(usize),
    #[error("relative tolerance must lie in (0, 1), got {0}")]
    BadTolerance(f64),
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
}

/// Anything that can go wrong while computing a modulus or capacity.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModulusError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    SpecialFunction(#[from] SpecialFunctionError),
    #[error("{0}")]
    BadOptions(String),
}

impl ModulusError {
    /// Short machine-readable code, used in API error bodies.
    pub fn reason(&self) -> &'static str {
        match self {
            Self::Geometry(e) => e.reason(),
            Self::Mesh(_) => "mesh",
            Self::Solve(_) => "solver",
            Self::SpecialFunction(_) => "domain",
            Self::BadOptions(_) => "bad-options",
        }
    }

    /// Whether the caller supplied bad input, as opposed to a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Self::Geometry(_) | Self::SpecialFunction(_) | Self::BadOptions(_)
        )
    }
}
