use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("empty matrix")]
    Empty,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not semi-sectorial (numerical range margin {margin:.3e})")]
    NotSemiSectorial { margin: f64 },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("compression matrix does not have full column rank")]
    RankDeficient,

    #[error("phase spread condition violated: {spread:.6} > pi")]
    SpreadViolated { spread: f64 },

    #[error("no diagonal scaling renders the matrix semi-sectorial")]
    NotEssentiallySemiSectorial,

    #[error("graph has no spanning tree ({sources} source components)")]
    NoSpanningTree { sources: usize },

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("left null vector is not strictly positive (min entry {0:.3e})")]
    NotPositive(f64),

    #[error("graph is not undirected: {0}")]
    Asymmetric(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("persistent mode at frequency {omega} is not semi-simple (algebraic {algebraic}, geometric {geometric})")]
    NotSemisimple { omega: f64, algebraic: usize, geometric: usize },

    #[error("persistent mode at frequency {omega} has multiplicity {found}, expected {expected}")]
    ModeMultiplicity { omega: f64, found: usize, expected: usize },

    #[error("singular residue at frequency {omega}")]
    SingularResidue { omega: f64 },

    #[error("system has unexpected marginal or unstable eigenvalue {re:.4e}{im:+.4e}j")]
    UnexpectedPole { re: f64, im: f64 },

    #[error("evaluation at a pole (s = {re}{im:+}j)")]
    PoleEvaluation { re: f64, im: f64 },

    #[error("controller or edge system is not stable")]
    UnstableController,

    #[error("closed loop is not well posed (algebraic loop is singular)")]
    IllPosed,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("interpolation target {index} is singular")]
    SingularTarget { index: usize },

    #[error("coincident interpolation nodes")]
    CoincidentNodes,

    #[error("invalid polynomial or rational data: {0}")]
    InvalidRational(String),

    #[error("gain search failed: {0}")]
    SearchFailure(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
