use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("estimated Jacobian is near singular: smallest singular value {sigma:.3e} below floor {floor:.3e}")]
    SingularJacobianEstimate { sigma: f64, floor: f64 },
    #[error("controller state `{block}` is not finite")]
    NonFiniteState { block: &'static str },
    #[error("gain condition violated: {0}")]
    GainConditionViolated(String),
    #[error("adaptation gain `{name}` left the interval (0, bound]")]
    GainBoundViolated { name: &'static str },
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
}
