use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed image: {0}")]
    MalformedImage(String),

    #[error("no road cell survives thresholding")]
    AllObstacle,

    #[error("attraction map is {found_width}x{found_height}, expected {width}x{height}")]
    DimensionMismatch {
        width: usize,
        height: usize,
        found_width: usize,
        found_height: usize,
    },

    #[error("illegal attraction weight {value} (expected 1, 5 or 10)")]
    IllegalWeight { value: u8 },

    #[error("map graph has no vertices")]
    EmptyGraph,

    #[error("vertex {dst} is unreachable from vertex {src}")]
    Unreachable { src: usize, dst: usize },

    #[error("vertex {0} is not in the map graph")]
    UnknownVertex(usize),

    #[error("no road cell lies in any boundary band")]
    NoBoundaryRoad,

    #[error("no boundary destination differs from vertex {0}")]
    NoDestination(usize),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("invalid sweep spec at line {line}: {message}")]
    SweepSpec { line: usize, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
