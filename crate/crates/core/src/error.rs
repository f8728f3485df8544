use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("field extension degree {0} out of range 1..=8")]
    FieldDegree(u32),
    #[error("invalid protomatrix: {0}")]
    Protomatrix(String),
    #[error("invalid puncturing vector: {0}")]
    Puncturing(String),
    #[error("design rate undefined: n_c2 - sum(delta) is zero")]
    RateUndefined,
    #[error("lifting factor Z1={z1} smaller than max protograph entry {max_entry}")]
    LiftingFactor { z1: usize, max_entry: u32 },
    #[error("preset parameters invalid: {0}")]
    Preset(String),
    #[error("rank distribution invalid: {0}")]
    RankDistribution(String),
    #[error("grid of {0} points exceeds the enumeration guard")]
    GridTooLarge(u128),
    #[error("infeasible degree constraint: {0}")]
    InfeasibleDegree(String),
    #[error("BP-decodable puncturing not found within {0} attempts")]
    RetryCapExceeded(usize),
    #[error("precode is rank deficient after {attempts} label draws (rank {rank} of {rows})")]
    RankDeficientPrecode {
        attempts: usize,
        rank: usize,
        rows: usize,
    },
    #[error("codec input invalid: {0}")]
    Codec(String),
    #[error("simulation plan invalid: {0}")]
    Plan(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
