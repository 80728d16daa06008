use std::fmt;

/// Location-tagged failure raised while reading metric source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax(String),
    DimensionMismatch(String),
    NonSymmetric { i: usize, j: usize },
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(msg) => {
                write!(f, "syntax error at {}:{}: {}", self.line, self.column, msg)
            }
            ParseErrorKind::DimensionMismatch(msg) => {
                write!(
                    f,
                    "dimension mismatch at {}:{}: {}",
                    self.line, self.column, msg
                )
            }
            ParseErrorKind::NonSymmetric { i, j } => write!(
                f,
                "non-symmetric components at {}:{}: g{}{} differs from g{}{}",
                self.line, self.column, i, j, j, i
            ),
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    /// Evaluation left the admissible region: chart box, log of a non-positive value, pole of a quotient.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("metric is not positive definite at {point:?} (pivot ratio {pivot_ratio:e})")]
    NotPositiveDefinite { point: Vec<f64>, pivot_ratio: f64 },

    #[error("degenerate plane: vectors are (numerically) parallel")]
    DegeneratePlane,

    #[error("tangent vector is not unit length: |v|_g = {norm}")]
    NonUnitTangent { norm: f64 },

    #[error("geodesic left the chart domain at sigma = {sigma}")]
    ChartExit { sigma: f64 },

    #[error("step size underflow at sigma = {sigma}")]
    StepUnderflow { sigma: f64 },

    #[error("initial frame is not g-orthonormal with last column equal to the velocity (defect {defect:e})")]
    NonOrthonormalFrame { defect: f64 },

    #[error("sigma = {sigma} outside sampled range [{lo}, {hi}]")]
    OutOfRange { sigma: f64, lo: f64, hi: f64 },

    #[error("gram determinant is negative beyond round-off: {det:e}")]
    NegativeDeterminant { det: f64 },

    #[error("matrix is ill-conditioned (condition number {cond:e})")]
    Conditioning { cond: f64 },

    #[error("sigma = {sigma} lies inside a masked pole neighbourhood")]
    Masked { sigma: f64 },

    #[error("derivative estimate too noisy (estimated error {estimate:e})")]
    DerivativeNoise { estimate: f64 },

    #[error("pole fit residual {residual:e} exceeds threshold {threshold:e}")]
    PoorFit { residual: f64, threshold: f64 },

    #[error(
        "quadrature did not converge: estimated error {error:e} after {evaluations} evaluations"
    )]
    Quadrature { error: f64, evaluations: usize },

    #[error("antipodal configuration: geodesic count is not finite")]
    Antipodal,

    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
