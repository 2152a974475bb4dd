use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("polynomial degree {degree} exceeds basis degree {max}")]
    DegreeOverflow { degree: u32, max: u32 },

    #[error("polytope is empty")]
    EmptyPolytope,

    #[error("polytope is unbounded")]
    UnboundedPolytope,

    #[error("polytope is degenerate (inscribed radius {radius:e})")]
    DegenerateRegion { radius: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("relaxation order {order} is below the minimum {min}")]
    RelaxationOrderTooLow { order: u32, min: u32 },

    #[error("solver ran into numerical trouble: {0}")]
    NumericalTrouble(String),

    #[error("no free region encloses the robot at the {which} configuration")]
    NoEnclosingRegion { which: &'static str },

    #[error("goal is unreachable through the region graph")]
    Unreachable,

    #[error("waypoint {tau} lies in no region of the path sequence")]
    AllocationGap { tau: usize },

    #[error("transition region could not be grown: {0}")]
    TransitionBlocked(String),

    #[error("free-space decomposition failed: {0}")]
    Decomposition(String),

    #[error("non-finite state at step {tau}")]
    NonFiniteState { tau: usize },

    #[error("missing dual variables for gradient")]
    MissingDuals,

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("cannot read artifact {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse { context: context.into(), message: message.to_string() }
    }

    /// Process exit status used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::InvalidInput(_) => 2,
            Error::Decomposition(_) => 3,
            Error::NoEnclosingRegion { .. } => 4,
            Error::Unreachable => 5,
            Error::TransitionBlocked(_) => 8,
            _ => 7,
        }
    }
}

/// Exit status when the optimizer stops without meeting the tolerance.
pub const EXIT_NOT_CONVERGED: i32 = 6;
