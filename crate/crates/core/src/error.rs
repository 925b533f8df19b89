use std::fmt;

use thiserror::Error;

/// Coefficient block of the model, one per link function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    Mu,
    Theta,
    Lambda,
    Alpha,
    Delta,
}

impl Block {
    pub const ALL: [Block; 5] = [
        Block::Mu,
        Block::Theta,
        Block::Lambda,
        Block::Alpha,
        Block::Delta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Mu => "mu",
            Block::Theta => "theta",
            Block::Lambda => "lambda",
            Block::Alpha => "alpha",
            Block::Delta => "delta",
        }
    }

    /// Whether the block is indexed by unit (`true`) or by observation.
    pub fn per_unit(self) -> bool {
        matches!(self, Block::Alpha | Block::Delta)
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Dimension(String),

    #[error("non-finite {block} parameter at design row {row}")]
    NonFiniteParameter { block: Block, row: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("initialization error: {0}")]
    Initialization(String),

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("convergence failure: {0}")]
    Convergence(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
