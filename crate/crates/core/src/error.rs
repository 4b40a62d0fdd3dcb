use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid norm exponent q = {0} (need q >= 1)")]
    InvalidExponent(f64),

    #[error("linear solver stalled after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("time step {dt:e} exceeds the explicit stability limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("quadrature with {points} points per axis aliases {modes} modes (need at least {required})")]
    Aliasing {
        points: usize,
        modes: usize,
        required: usize,
    },

    #[error("coefficient blow-up at t = {time}: |c| = {norm:e}")]
    BlowUp { time: f64, norm: f64 },

    #[error("trajectory does not support this query: {0}")]
    Trajectory(String),

    #[error("weighted Hessian constant C1(ζ) undefined for ζ = {zeta} (need 0 < ζ < {limit})")]
    ZetaOutOfRange { zeta: f64, limit: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
