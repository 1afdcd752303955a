use std::path::PathBuf;

/// Errors produced anywhere in the stitching pipeline.
///
/// Variants are grouped roughly by the stage that raises them. Errors that a
/// stage can recover from (an edge dropped, an image marked vp-absent) are
/// still reported through this type so callers can decide.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    // geometry kernels
    #[error("rotation is degenerate for in-plane decomposition (camera pitched ~180 degrees)")]
    DegenerateRotation,
    #[error("summed target matrix has rank < 2")]
    RankDeficient,
    #[error("all points are collinear; convex hull is degenerate")]
    DegenerateHull,
    #[error("need at least 3 points, got {found}")]
    TooFewPoints { found: usize },
    #[error("linear system is singular or rank-deficient ({context})")]
    SingularSystem { context: String },
    #[error("invalid least-squares problem: {0}")]
    InvalidProblem(String),
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    // ingest
    #[error("only {found} line segments survived detection (need {required})")]
    TooFewSegments { found: usize, required: usize },
    #[error("only {found} inlier matches (need {required})")]
    InsufficientMatches { found: usize, required: usize },
    #[error("format error in {file}: {context}")]
    Format { file: String, context: String },
    #[error("coordinate out of bounds in {file}: {context}")]
    Bounds { file: String, context: String },
    #[error("image {id} is {width}x{height}; minimum size is 32x32")]
    ImageTooSmall { id: usize, width: u32, height: u32 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    // vanishing points
    #[error("no vanishing-point consensus: best candidate has {best} supporting segments")]
    NoConsensus { best: usize },
    #[error("no candidate pair yields a valid focal length")]
    NoOrthogonalPair,
    #[error("orthogonal directions explain only {coverage:.2} of the segments")]
    WeakStructure { coverage: f64 },

    // pose graph
    #[error("stitch graph is disconnected: components {components:?}")]
    DisconnectedGraph { components: Vec<Vec<usize>> },
    #[error("focal estimation failed on edge ({a}, {b})")]
    FocalEstimationFailed { a: usize, b: usize },
    #[error("rotation averaging failed to converge: {0}")]
    ConvergenceFailure(String),

    // similarity prior
    #[error("no roughly orthogonal pair of aligned vanishing points")]
    NoHypothesis,
    #[error("every image was rejected as a vanishing-point outlier")]
    AllOutliers,

    // mesh warp
    #[error("no alignment anchors on edge ({a}, {b})")]
    NoAnchors { a: usize, b: usize },
    #[error("all meshes are degenerate; nothing to composite")]
    EmptyCanvas,
    #[error("canvas of {width}x{height} exceeds the size limit")]
    CanvasTooLarge { width: usize, height: usize },

    // metrics
    #[error("image {id} has no non-overlapping quads")]
    NoFreeQuads { id: usize },
    #[error("GDIC needs at least two images")]
    SingleImage,
    #[error("ground-truth extrinsics are missing{0}")]
    MissingTruth(String),

    // synthesis and configuration
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn singular(context: impl Into<String>) -> Self {
        Error::SingularSystem {
            context: context.into(),
        }
    }
}
