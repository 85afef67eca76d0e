use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("singular Euler equation: u_cc = {u_cc} at c = {c}, x = {x}")]
    SingularEuler { u_cc: f64, c: f64, x: f64 },
    #[error("marginal utility u_c = {u_c} is not positive at t = {t}")]
    NonPositiveMarginalUtility { u_c: f64, t: f64 },
    #[error("no sign change of the stationarity residual on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("bracket [{lo}, {hi}] does not contain opposite classifications")]
    Bracket { lo: f64, hi: f64 },
    #[error("steady state is not a saddle")]
    NotSaddle,
    #[error("terminal behaviour cannot be classified: {0}")]
    Unclassifiable(String),
    #[error("paths do not share a grid")]
    GridMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
