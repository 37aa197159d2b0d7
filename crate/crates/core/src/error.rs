use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the toolkit.
///
/// Variants fall into two families: invalid or malformed input
/// ([`ErrorKind::Input`]) and numerical failures of an otherwise valid
/// problem ([`ErrorKind::Numerical`]). The CLI maps these to exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // geometry
    #[error("point maps to the line at infinity (|w| = {0:e})")]
    DegenerateProjection(f64),
    #[error("matrix is singular (relative determinant {0:e})")]
    SingularMatrix(f64),
    #[error("invalid similarity transform: {0}")]
    InvalidTransform(String),
    #[error("invalid grid geometry: {0}")]
    InvalidGrid(String),
    #[error("grid of {cells} cells exceeds the cap of {cap}")]
    GridTooLarge { cells: u64, cap: u64 },
    #[error("non-finite coordinate")]
    NonFinite,

    // camera model
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("normalized point outside the distortion model range (r^2 = {0})")]
    OutOfModelRange(f64),
    #[error("undistortion did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("disparity must be positive, got {0}")]
    NonPositiveDisparity(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("baseline must be positive, got {0}")]
    InvalidBaseline(f64),

    // calibration
    #[error("invalid board: {0}")]
    InvalidBoard(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("at least 3 views are required, got {0}")]
    InsufficientViews(usize),
    #[error("closed-form intrinsics are unstable: {0}")]
    UnstableSolution(String),
    #[error("intrinsic matrix is singular")]
    SingularIntrinsics,
    #[error("refinement diverged: {0}")]
    DivergedRefinement(String),
    #[error("view {view}: {reason}")]
    InvalidView { view: usize, reason: String },

    // stereo
    #[error("census window {0} is not one of 3, 5, 7, 9")]
    InvalidWindow(usize),
    #[error("window {window} is too large for a {width}x{height} image")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },
    #[error("image sizes differ: {0}")]
    SizeMismatch(String),
    #[error("disparity range [{0}, {1}] is empty or invalid")]
    EmptyRange(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),

    // georectification
    #[error("at least 4 GCPs with image observations are required, got {0}")]
    InsufficientGcps(usize),
    #[error("no GCPs available")]
    EmptyGcpSet,
    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    // registration
    #[error("at least 3 point pairs are required, got {0}")]
    InsufficientPairs(usize),
    #[error("source points are collinear")]
    CollinearPoints,
    #[error("duplicated source point for id {0:?}")]
    DuplicateSource(String),

    // surface
    #[error("at least 3 distinct points are required, got {0}")]
    TooFewPoints(usize),
    #[error("all points are collinear in xy")]
    CollinearInput,
    #[error("kill distance must be positive, got {0}")]
    InvalidKillDistance(f64),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    // formats
    #[error("coordinate {value} does not fit the LAS integer range for scale {scale} and offset {offset}")]
    CoordinateOverflow { value: f64, scale: f64, offset: f64 },
    #[error("bad LAS signature")]
    BadSignature,
    #[error("unsupported LAS version {major}.{minor} or point format {format}")]
    UnsupportedVersionOrFormat { major: u8, minor: u8, format: u8 },
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("WKT syntax error: {0}")]
    SyntaxError(String),
    #[error("ring {0} is not closed")]
    OpenRing(usize),
    #[error("ring {0} self-intersects")]
    SelfIntersection(usize),
    #[error("bad magic number: {0}")]
    BadMagic(String),
    #[error("sample out of range: {0}")]
    OutOfRangeSample(String),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("missing key {0:?}")]
    MissingKey(String),
    #[error("input is not valid UTF-8 text")]
    NotText,
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The input is invalid, malformed or insufficient.
    Input,
    /// The input is well formed but the numerical problem has no usable solution.
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            DegenerateProjection(_)
            | SingularMatrix(_)
            | NonConvergence(_)
            | DegenerateConfiguration(_)
            | UnstableSolution(_)
            | SingularIntrinsics
            | DivergedRefinement(_)
            | CollinearPoints
            | CollinearInput
            | OutOfModelRange(_)
            | BehindCamera(_) => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        }
    }
}
