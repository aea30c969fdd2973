//! Evaluation statistics: macro-F1, ΔF1, Krippendorff's alpha and the Mann–Whitney U test.

mod agreement;
mod f1;
mod mwu;

pub use agreement::{krippendorff_alpha, load_agreement_csv, AnnotationMatrix};
pub use f1::{delta_f1, macro_f1, ClassMetrics, EvalOutcome, MetricsReport};
pub use mwu::{mann_whitney_u, MannWhitney, PValueMethod, EXACT_MAX_PRODUCT};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("malformed agreement CSV: {0}")]
    MalformedCsv(String),
}
