use thiserror::Error;

use crate::family::ResonanceReport;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("empty multi-index")]
    EmptyMultiIndex,

    #[error("mode index {0} outside the truncated basis (dim {1})")]
    IndexOutOfRange(u32, usize),

    #[error("objects built over different bases ({0} vs {1} modes)")]
    DomainMismatch(usize, usize),

    #[error("declared degree {declared} does not match term of degree {found}")]
    DegreeMismatch { declared: usize, found: usize },

    #[error("coefficient at {context} is not a finite real number")]
    NonRealCoefficient { context: String },

    #[error("frequency map violates antisymmetry at mode {0}")]
    FrequencyAsymmetry(u32),

    #[error("source polynomial is not odd (classified {0})")]
    NotOdd(String),

    #[error("near-resonant divisor at order {order}: {} offending multisets, smallest divisor {:.3e}", report.violations.len(), report.min_divisor)]
    Resonance {
        order: usize,
        report: ResonanceReport,
    },

    #[error("state is not real: reality residual {residual:.3e} exceeds {tol:.3e}")]
    NonRealState { residual: f64, tol: f64 },

    #[error("evaluation produced imaginary part {imag:.3e} beyond tolerance")]
    SpuriousImaginary { imag: f64 },

    #[error("trajectory blew up at t = {t}: ||z||_s = {norm:.3e} exceeded ceiling {ceiling:.3e}")]
    BlowUp { t: f64, norm: f64, ceiling: f64 },

    #[error("oracle cost guard: {0}")]
    CostGuard(String),

    #[error("trajectory too short: {0} samples (need at least 3)")]
    TooFewSamples(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
