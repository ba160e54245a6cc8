//! Digit-stream forensics: maximal zero runs with their preceding digit,
//! run-window prediction from an m0 certificate, and falsification of
//! eventual periodicity.

use num_bigint::BigUint;
use serde::Serialize;
use thiserror::Error;

use crate::construction::{M0Certificate, TailStatus};
use crate::digits::{Certification, DigitString};
use crate::series::SeriesSpec;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("min_len must be at least 1")]
    ZeroMinLen,
    #[error("series base {series} does not match certificate base {plan}")]
    BaseMismatch { series: u32, plan: u32 },
    #[error("tail bound not certified; pass waive_tail to get a heuristic prediction")]
    TailNotCertified,
    #[error("certified prefix too short: scan needs {required} digits, have {have}")]
    PrefixTooShort { required: u64, have: u64 },
}

/// A maximal block of zero digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ZeroRun {
    /// 1-indexed fractional position of the first zero.
    pub start: u64,
    pub length: u64,
    /// Digit at `start - 1` is non-zero (position 0 consults the lowest
    /// digit of the integer part).
    pub preceded_by_nonzero: bool,
    /// False when the run touches the certified boundary and may extend.
    pub within_certified: bool,
}

/// All maximal zero runs of length >= `min_len` inside the certified region.
/// Runs touching the boundary are truncated there and flagged.
pub fn find_zero_runs(
    digits: &DigitString,
    cert: Certification,
    min_len: u64,
) -> Result<Vec<ZeroRun>, AnalysisError> {
    if min_len == 0 {
        return Err(AnalysisError::ZeroMinLen);
    }
    let stored = digits.digits.len() as u64;
    let limit = cert.length_for(stored);
    let exact = cert == Certification::Exact;
    let mut runs = Vec::new();
    let mut pos = 1u64;
    while pos <= limit {
        if digits.digit_at(pos) != 0 {
            pos += 1;
            continue;
        }
        let start = pos;
        while pos <= limit && digits.digit_at(pos) == 0 {
            pos += 1;
        }
        let length = pos - start;
        let touches_boundary = pos > limit && !exact;
        if length >= min_len {
            let preceded_by_nonzero = if start == 1 {
                digits.last_integer_digit() != 0
            } else {
                digits.digit_at(start - 1) != 0
            };
            runs.push(ZeroRun {
                start,
                length,
                preceded_by_nonzero,
                within_certified: !touches_boundary,
            });
        }
    }
    Ok(runs)
}

/// Where the construction guarantees a zero run, and how long.
#[derive(Debug, Clone, Serialize)]
pub struct RunPrediction {
    /// The run starts no earlier than this fractional position...
    #[serde(with = "crate::construction::biguint_decimal")]
    pub start_lo: BigUint,
    /// ...and no later than this one.
    #[serde(with = "crate::construction::biguint_decimal")]
    pub start_hi: BigUint,
    /// floor(k/2) - ceil(log_b(2 max|a|)) - 1; non-positive means the
    /// guarantee is vacuous at this scale.
    pub guaranteed_run_length: i64,
    pub preceded_by_nonzero: bool,
    /// True when the tail bound was waived rather than certified.
    pub heuristic: bool,
}

fn ceil_log(base: u32, value: u64) -> i64 {
    // smallest t >= 0 with base^t >= value
    let mut t = 0i64;
    let mut power = 1u128;
    while power < value as u128 {
        power = power.saturating_mul(base as u128);
        t += 1;
    }
    t
}

/// Predicted zero-run window for an m0 certificate: the run starts between
/// the (r + m0 A)th and (r + j0 + m0 A)th places, immediately preceded by a
/// non-zero digit.
pub fn predict_run_window(
    cert: &M0Certificate,
    spec: &SeriesSpec,
    waive_tail: bool,
) -> Result<RunPrediction, AnalysisError> {
    let plan = &cert.plan;
    if spec.base() != plan.base {
        return Err(AnalysisError::BaseMismatch {
            series: spec.base(),
            plan: plan.base,
        });
    }
    let certified = matches!(cert.tail, TailStatus::Certified { .. });
    if !certified && !waive_tail {
        return Err(AnalysisError::TailNotCertified);
    }
    let start_lo = &plan.residue + &plan.a_modulus * cert.m0;
    let start_hi = &start_lo + BigUint::from(plan.j0);
    let guaranteed_run_length =
        (plan.k as i64) / 2 - ceil_log(plan.base, 2 * spec.max_abs()) - 1;
    Ok(RunPrediction {
        start_lo,
        start_hi,
        guaranteed_run_length,
        preceded_by_nonzero: true,
        heuristic: !certified,
    })
}

/// Surviving (preperiod, period) pairs after scanning a certified prefix.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodicityVerdict {
    /// Scanned prefix length.
    pub prefix_length: u64,
    pub max_preperiod: u64,
    pub max_period: u64,
    /// (s, p) with digits s+1 .. prefix_length p-periodic.
    pub survivors: Vec<(u64, u64)>,
    /// One witness index per rejected pair: a position i where
    /// digit(i) != digit(i + p).
    pub witnesses: Vec<(u64, u64, u64)>,
}

impl PeriodicityVerdict {
    pub fn no_survivors(&self) -> bool {
        self.survivors.is_empty()
    }

    /// Human-readable conclusion.
    pub fn summary(&self) -> String {
        if self.survivors.is_empty() {
            format!(
                "no rational with preperiod <= {} and period <= {} admits this {}-digit prefix",
                self.max_preperiod, self.max_period, self.prefix_length
            )
        } else {
            format!("{} surviving (preperiod, period) pairs", self.survivors.len())
        }
    }
}

/// Exhaustive scan over preperiods s <= max_preperiod and periods
/// p <= max_period. Needs at least two full periods past every candidate
/// preperiod: `max_preperiod + 2 * max_period <= certified length`.
pub fn periodicity_scan(
    digits: &DigitString,
    cert: Certification,
    max_preperiod: u64,
    max_period: u64,
) -> Result<PeriodicityVerdict, AnalysisError> {
    let stored = digits.digits.len() as u64;
    let len = cert.length_for(stored);
    let required = max_preperiod + 2 * max_period;
    if required > len {
        return Err(AnalysisError::PrefixTooShort {
            required,
            have: len,
        });
    }
    let mut survivors = Vec::new();
    let mut witnesses = Vec::new();
    for s in 0..=max_preperiod {
        for p in 1..=max_period {
            let mut witness = None;
            let mut i = s + 1;
            while i + p <= len {
                if digits.digit_at(i) != digits.digit_at(i + p) {
                    witness = Some(i);
                    break;
                }
                i += 1;
            }
            match witness {
                None => survivors.push((s, p)),
                Some(i) => witnesses.push((s, p, i)),
            }
        }
    }
    Ok(PeriodicityVerdict {
        prefix_length: len,
        max_preperiod,
        max_period,
        survivors,
        witnesses,
    })
}

/// Zero-pad an exact digit string out to `len` digits; exact expansions end
/// on an infinite string of zeros, so this is lossless.
pub fn extend_exact(digits: &DigitString, len: u64) -> DigitString {
    let mut out = digits.clone();
    while (out.digits.len() as u64) < len {
        out.digits.push(0);
    }
    out
}
