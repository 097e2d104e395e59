use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular matrix: pivot {pivot:e} below floor {floor:e}")]
    SingularMatrix { pivot: f64, floor: f64 },
    #[error("matrix not Hermitian: relative defect {0:e}")]
    NotHermitian(f64),
    #[error("operator not Krein-selfadjoint: relative defect {0:e}")]
    NotSelfadjoint(f64),
    #[error("iteration budget exhausted in {0}")]
    NoConvergence(&'static str),
    #[error("scalar function undefined on the spectrum: {0}")]
    DomainError(String),
    #[error("compressed Gram degenerate: eigenvalue {0:e} below floor")]
    DegenerateRange(f64),
    #[error("z = {re}{im:+}i is numerically in the spectrum")]
    SpectrumHit { re: f64, im: f64 },
    #[error("eps undefined: h0 has eigenvalue {0:e} below tolerance")]
    EpsUndefined(f64),
    #[error("eps singular: smallest eigenvalue {0:e}")]
    EpsSingular(f64),
    #[error("symbol is missing derivative of order {0}")]
    MissingDerivative(usize),
    #[error("resolvent growth check failed: observed exponent {observed:.3} exceeds allowed {allowed:.3}")]
    GrowthCheckFailed { observed: f64, allowed: f64 },
    #[error("quadrature budget exceeded in {0}")]
    QuadratureBudgetExceeded(&'static str),
    #[error("definitizing search exhausted; best margin {best_margin:e}")]
    SearchExhausted { best_margin: f64 },
    #[error("tail expansion residual does not decay (residual {0:e})")]
    TailFitFailed(f64),
    #[error("symbol and sampled Fourier transform disagree: max probe error {0:e}")]
    FourierMismatch(f64),
    #[error("group growth violation: 2*eps*gamma = {0:.4} >= 1")]
    GrowthViolation(f64),
    #[error("integral diverges: tail grows past t = {0}")]
    Divergent(f64),
    #[error("log-log fit unstable: R^2 = {0:.4}")]
    FitUnstable(f64),
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
    #[error("indefinite window: compressed Gram eigenvalue {0:e}")]
    IndefiniteWindow(f64),
    #[error("invalid model spec: {0}")]
    SpecInvalid(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
