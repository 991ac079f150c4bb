use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    Domain(String),
    /// Input data is malformed (wrong length, bad ordering, ...).
    InvalidInput(String),
    /// An operation needed observations and got none.
    NoUsableSequence,
    /// The KL affinity needs an SSL centroid on both clusters.
    LocationUnavailable,
    /// A segment referenced by a clustering is unknown to the ground truth (or vice versa).
    SegmentMismatch(String),
    /// Rejection sampling gave up.
    RejectionLimit(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::NoUsableSequence => {
                write!(f, "no sequence with at least two observed frames")
            }
            Error::LocationUnavailable => {
                write!(f, "location affinity unavailable: cluster has no SSL frames")
            }
            Error::SegmentMismatch(msg) => write!(f, "segment mismatch: {msg}"),
            Error::RejectionLimit(msg) => write!(f, "rejection sampling failed: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
