use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("matrix is not unimodular (det must be +1 or -1)")]
    NotUnimodular,
    #[error("matrix is not Anosov")]
    NotAnosov,
    #[error("gluing data does not give Sol geometry")]
    NotSol,
    #[error("matrix admits no reverser")]
    NoReverser,
    #[error("B is not a reverser of A")]
    NotAReverser,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("elements belong to different groups")]
    GroupMismatch,
    #[error("automorphism is not invertible")]
    NotInvertible,
    #[error("sapphire matrix has det -1; normalize to det +1 first")]
    DetMinusOne,
    #[error("rstu = 0: the sapphire is a torus bundle")]
    TorusBundleDegenerate,
    #[error("structure tree is infinite")]
    InfiniteTree,
    #[error("group too large: order {0} exceeds cap {1}")]
    TooLarge(usize, usize),
    #[error("search cap exceeded: {0}")]
    CapExceeded(String),
    #[error("inconsistent structure: {0}")]
    Inconsistent(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
