use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    /// Rejected input: bad domain bounds, misaligned holes, out-of-range
    /// exponents, violated preconditions. The message names the offending
    /// field or axis.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A hole face does not land on the mesh lattice.
    #[error(
        "hole face at {value} on axis {axis} does not lie on the lattice of step {step}; nearest lattice value {nearest}"
    )]
    MisalignedHole {
        axis: usize,
        value: f64,
        step: f64,
        nearest: f64,
    },

    /// A coefficient evaluated to NaN or infinity at a quadrature point.
    #[error("non-finite {context} sample at {point:?}{}", fmt_elem(*element))]
    NonFiniteSample {
        context: String,
        point: Vec<f64>,
        element: Option<usize>,
    },

    /// The constructed weight dropped to (or below) the positivity floor.
    /// This is the numerical signature of a drift whose singular part is
    /// not excluded from the domain.
    #[error(
        "weight positivity failure: nodal value {value:.6e} at vertex {vertex} {point:?} is below the floor {floor:.6e}"
    )]
    PositivityFailure {
        vertex: usize,
        point: Vec<f64>,
        value: f64,
        floor: f64,
    },

    /// Direct factorization hit a zero pivot: the discrete operator is
    /// singular at this resolution.
    #[error("singular matrix: zero pivot at row {row}")]
    SingularMatrix { row: usize },

    /// Iteration ran out of budget. Carries the best iterate seen and its
    /// recomputed relative residual.
    #[error("solver stagnation after {iterations} iterations, best residual {residual:.3e}")]
    SolverStagnation {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    /// Requested problem size exceeds the in-memory budget.
    #[error("resource limit: {0}")]
    Resource(String),
}

fn fmt_elem(element: Option<usize>) -> String {
    match element {
        Some(e) => format!(" (element {e})"),
        None => String::new(),
    }
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
