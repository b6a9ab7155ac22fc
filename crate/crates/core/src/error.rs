use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dataset needs at least 2 rows and 1 column, got {rows}x{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{expected} attribute names given for {found} columns")]
    NameCount { expected: usize, found: usize },
    #[error("column {index} ({name}) is constant; cannot rescale")]
    ConstantColumn { index: usize, name: String },
    #[error("whitening needs more rows than columns (n = {n}, m = {m})")]
    TooFewRows { n: usize, m: usize },
    #[error("covariance is singular; reduce the number of attributes before whitening")]
    SingularCovariance,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate sample: all points identical")]
    DegenerateSample,
    #[error("degenerate direction: no entry above the zero threshold")]
    DegenerateDirection,
    #[error("unsupported Mallows order t = {0} (only t = 2 has a gradient)")]
    UnsupportedOrder(u32),
    #[error("projected samples need at least 2 finite values per side")]
    InvalidSamples,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("nothing to fit: r_pairs = 0")]
    NothingToFit,
    #[error("{formulation} requires the pearson_multi divergence, got {found}")]
    UnsupportedDivergence {
        formulation: &'static str,
        found: &'static str,
    },
    #[error("CCA requires sample correspondence (n = {n}, k = {k})")]
    NoCorrespondence { n: usize, k: usize },
    #[error("ratio-model system is singular")]
    SingularSystem,
    #[error("degenerate cluster: {0}")]
    DegenerateCluster(String),
}
