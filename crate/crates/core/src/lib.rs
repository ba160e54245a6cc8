//! Exact machinery for base-b digit expansions of divisor series
//! `sum d(n) a_n / b^n`: scaled-integer digit arithmetic, a
//! number-theoretic kernel, congruence plans built by the Chinese remainder
//! theorem, certified series evaluation with rigorous tail bounds, and
//! digit-stream analysis (zero runs, periodicity falsification).
//!
//! Everything is exact arbitrary-precision arithmetic; no floating point
//! crosses any certified path.

pub mod analysis;
pub mod construction;
pub mod digits;
pub mod nt;
pub mod series;

pub use analysis::{PeriodicityVerdict, RunPrediction, ZeroRun};
pub use construction::{CrtPlan, M0Certificate, PlanMode, TailRule};
pub use digits::{Certification, DigitString, ScaledInteger};
pub use nt::{DivisorTable, Factorization, Primality};
pub use series::{CertifiedPrefix, CoefficientRule, SeriesBudget, SeriesSpec};
