//! Certified evaluation of the divisor series sum d(n) a_n / b^n: exact
//! partial sums, a rigorous tail bound from d(n) <= n, certified digit
//! prefixes, adaptive tail comparisons, and the tail census.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construction::CrtPlan;
use crate::digits::{
    accumulate_terms, big_pow_int, certified_common_prefix, DigitString, DigitsError,
    ScaledInteger,
};
use crate::nt::{DivisorTable, NtError};

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("base must be at least 2, got {0}")]
    InvalidBase(u32),
    #[error("coefficient pattern must be non-empty")]
    EmptyPattern,
    #[error("target must be at least 1")]
    ZeroTarget,
    #[error("threshold must be positive")]
    NonPositiveThreshold,
    #[error("census needs the plan's r and A to fit in 64 bits")]
    CensusScale,
    #[error("series base {series} does not match plan base {plan}")]
    BaseMismatch { series: u32, plan: u32 },
    #[error(transparent)]
    Nt(#[from] NtError),
    #[error(transparent)]
    Digits(#[from] DigitsError),
}

/// Coefficient rule a_n over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientRule {
    Constant(i64),
    /// a_n = (-1)^n.
    Alternating,
    Periodic(Vec<i64>),
    /// a_n = list[n - 1] for n <= len, then 0 (finite series).
    Explicit(Vec<i64>),
}

/// Base plus coefficient rule; carries the derived alphabet and max|a|.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesSpec {
    base: u32,
    rule: CoefficientRule,
    alphabet: Vec<i64>,
    max_abs: u64,
}

impl SeriesSpec {
    pub fn new(base: u32, rule: CoefficientRule) -> Result<Self, SeriesError> {
        if base < 2 {
            return Err(SeriesError::InvalidBase(base));
        }
        let mut alphabet: Vec<i64> = match &rule {
            CoefficientRule::Constant(a) => vec![*a],
            CoefficientRule::Alternating => vec![-1, 1],
            CoefficientRule::Periodic(pattern) => {
                if pattern.is_empty() {
                    return Err(SeriesError::EmptyPattern);
                }
                pattern.clone()
            }
            CoefficientRule::Explicit(list) => {
                // the implicit zero tail is part of the alphabet
                let mut v = list.clone();
                v.push(0);
                v
            }
        };
        alphabet.sort_unstable();
        alphabet.dedup();
        let max_abs = alphabet.iter().map(|a| a.unsigned_abs()).max().unwrap_or(0);
        Ok(Self {
            base,
            rule,
            alphabet,
            max_abs,
        })
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn rule(&self) -> &CoefficientRule {
        &self.rule
    }

    pub fn alphabet(&self) -> &[i64] {
        &self.alphabet
    }

    pub fn max_abs(&self) -> u64 {
        self.max_abs
    }

    /// The stronger theorem applies exactly when 0 is not a possible
    /// coefficient value.
    pub fn theorem2_mode(&self) -> bool {
        !self.alphabet.contains(&0)
    }

    pub fn coefficient(&self, n: u64) -> i64 {
        match &self.rule {
            CoefficientRule::Constant(a) => *a,
            CoefficientRule::Alternating => {
                if n % 2 == 0 {
                    1
                } else {
                    -1
                }
            }
            CoefficientRule::Periodic(pattern) => pattern[((n - 1) % pattern.len() as u64) as usize],
            CoefficientRule::Explicit(list) => {
                list.get((n - 1) as usize).copied().unwrap_or(0)
            }
        }
    }

    pub fn all_nonnegative(&self) -> bool {
        self.alphabet.iter().all(|&a| a >= 0)
    }

    pub fn all_nonpositive(&self) -> bool {
        self.alphabet.iter().all(|&a| a <= 0)
    }

    /// True when every coefficient beyond position `m` is zero.
    fn tail_is_zero(&self, m: u64) -> bool {
        match &self.rule {
            CoefficientRule::Constant(a) => *a == 0,
            CoefficientRule::Alternating => false,
            CoefficientRule::Periodic(pattern) => pattern.iter().all(|&a| a == 0),
            CoefficientRule::Explicit(list) => {
                list.iter()
                    .skip(m as usize)
                    .all(|&a| a == 0)
            }
        }
    }
}

/// Exact closed form of `max_abs * sum_{n > m} n / b^n`, which dominates the
/// true tail since d(n) <= n:
///
/// `max_abs * b^(-m) * ((m+1)(b-1) + 1) / (b-1)^2`
pub fn tail_upper_bound(base: u32, m: u64, max_abs: u64) -> BigRational {
    let b = BigInt::from(base);
    let k = (BigInt::from(m) + 1) * (&b - 1) + 1;
    let num = BigInt::from(max_abs) * k;
    let den = (&b - 1) * (&b - 1) * big_pow_int(base, m);
    BigRational::new(num, den)
}

/// Evaluation budgets shared by the adaptive operations.
#[derive(Debug, Clone)]
pub struct SeriesBudget {
    /// Largest truncation the prefix search may reach.
    pub max_truncation: u64,
    /// First tail-comparison window size.
    pub initial_window: u64,
    /// Largest tail-comparison window size.
    pub max_window: u64,
    /// Cap on any single divisor-sieve span.
    pub max_sieve_span: u64,
}

impl Default for SeriesBudget {
    fn default() -> Self {
        Self {
            max_truncation: 1 << 16,
            initial_window: 32,
            max_window: 1 << 16,
            max_sieve_span: 1 << 26,
        }
    }
}

/// A digit prefix guaranteed stable under every admissible tail.
#[derive(Debug, Clone)]
pub struct CertifiedPrefix {
    pub spec: SeriesSpec,
    /// Truncation point: the partial sum covers n <= truncation.
    pub truncation: u64,
    pub partial: ScaledInteger,
    pub tail_bound: BigRational,
    pub digits: DigitString,
    pub certified_length: u64,
    /// The value is known exactly; all later digits are zero.
    pub exact: bool,
    pub target: u64,
    /// False when the budget ran out before reaching the target.
    pub met_target: bool,
}

fn ceil_div(num: &BigInt, den: &BigInt) -> BigInt {
    use num_integer::Integer;
    num.div_ceil(den)
}

/// Certified prefix at one fixed truncation (no adaptive doubling).
pub fn certified_prefix_at(
    spec: &SeriesSpec,
    truncation: u64,
    target: u64,
) -> Result<CertifiedPrefix, SeriesError> {
    let m = truncation;
    let d = crate::nt::divisor_sieve(m.max(1))?;
    let mut terms = Vec::with_capacity(m as usize);
    for n in 1..=m {
        let c = spec.coefficient(n);
        if c != 0 {
            terms.push((n, d[(n - 1) as usize] as i64 * c));
        }
    }
    let partial = accumulate_terms(spec.base, &terms, m)?;
    let tail_zero = spec.tail_is_zero(m);
    let tail_bound = if tail_zero {
        BigRational::zero()
    } else {
        tail_upper_bound(spec.base, m, spec.max_abs)
    };

    // outward-rounded interval endpoints at a slightly finer scale
    let guard = 2u64;
    let scale = m + guard;
    let center = partial.value_at_scale(scale);
    let (lo_val, hi_val) = if tail_zero {
        (center.clone(), center.clone())
    } else {
        // tail_bound * base^scale, rounded up
        let spread = ceil_div(
            &(tail_bound.numer() * big_pow_int(spec.base, scale)),
            tail_bound.denom(),
        );
        let lo = if spec.all_nonnegative() {
            center.clone()
        } else {
            &center - &spread
        };
        let hi = if spec.all_nonpositive() {
            center.clone()
        } else {
            &center + &spread
        };
        (lo, hi)
    };

    let (digits, certified_length, exact) = if lo_val.sign() != num_bigint::Sign::Minus {
        let lo = ScaledInteger::new(spec.base, lo_val, scale)?;
        let hi = ScaledInteger::new(spec.base, hi_val, scale)?;
        let p = certified_common_prefix(&lo, &hi)?;
        let len = if p.integer_certified { p.certified_length } else { 0 };
        (p.digits, len, p.exact)
    } else if hi_val.sign() != num_bigint::Sign::Plus {
        let lo = ScaledInteger::new(spec.base, -hi_val, scale)?;
        let hi = ScaledInteger::new(spec.base, -lo_val, scale)?;
        let p = certified_common_prefix(&lo, &hi)?;
        let mut ds = p.digits;
        if !ds.is_zero() {
            ds.sign = -1;
        }
        let len = if p.integer_certified { p.certified_length } else { 0 };
        (ds, len, p.exact)
    } else {
        // interval straddles zero: nothing certifiable yet
        (
            DigitString {
                base: spec.base,
                sign: 1,
                integer_part: BigUint::zero(),
                digits: Vec::new(),
            },
            0,
            false,
        )
    };

    let met = exact || certified_length >= target;
    Ok(CertifiedPrefix {
        spec: spec.clone(),
        truncation: m,
        partial,
        tail_bound,
        digits,
        certified_length,
        exact,
        target,
        met_target: met,
    })
}

/// Certified prefix of at least `target_digits` digits, doubling the
/// truncation until certified or out of budget. A short result is returned
/// flagged (`met_target = false`), never as an error.
pub fn certified_prefix(
    spec: &SeriesSpec,
    target_digits: u64,
    budget: &SeriesBudget,
) -> Result<CertifiedPrefix, SeriesError> {
    if target_digits == 0 {
        return Err(SeriesError::ZeroTarget);
    }
    let mut m = 32u64.max(target_digits);
    loop {
        let prefix = certified_prefix_at(spec, m, target_digits)?;
        if prefix.met_target || m >= budget.max_truncation {
            return Ok(prefix);
        }
        m = (m * 2).min(budget.max_truncation);
    }
}

/// Threshold `mantissa / base^scale_exp`; the split keeps comparisons cheap
/// even when the exponent is in the millions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TailThreshold {
    pub mantissa: BigRational,
    pub scale_exp: u64,
}

impl TailThreshold {
    pub fn plain(mantissa: BigRational) -> Self {
        Self {
            mantissa,
            scale_exp: 0,
        }
    }

    pub fn power_scaled(mantissa: BigRational, scale_exp: u64) -> Self {
        Self {
            mantissa,
            scale_exp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailVerdict {
    Above,
    Below,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TailComparison {
    pub verdict: TailVerdict,
    pub window_used: u64,
}

/// Compare `a / base^ea` with `b / base^eb` without materializing the
/// powers on both sides.
fn cmp_power_scaled(a: &BigInt, ea: u64, b: &BigInt, eb: u64, base: u32) -> std::cmp::Ordering {
    if ea <= eb {
        (a * big_pow_int(base, eb - ea)).cmp(b)
    } else {
        a.cmp(&(b * big_pow_int(base, ea - eb)))
    }
}

/// Certified comparison of `sum_{n > cutoff} |d(n) a_n / b^n|` against a
/// positive threshold. `Unresolved` signals budget exhaustion (or exact
/// equality, which refinement can never settle).
pub fn tail_compare(
    spec: &SeriesSpec,
    cutoff: u64,
    threshold: &TailThreshold,
    budget: &SeriesBudget,
    table: Option<&DivisorTable>,
) -> Result<TailComparison, SeriesError> {
    if threshold.mantissa <= BigRational::zero() {
        return Err(SeriesError::NonPositiveThreshold);
    }
    let b = spec.base;
    let t_num = threshold.mantissa.numer();
    let t_den = threshold.mantissa.denom();
    let t_exp = threshold.scale_exp;
    let bm1 = BigInt::from(b) - 1;
    let bm1_sq = &bm1 * &bm1;
    let max_abs = BigInt::from(spec.max_abs);

    let mut window = 0u64;
    loop {
        // exact window sum numerator: U / base^(cutoff + window)
        let u = if window == 0 {
            BigInt::zero()
        } else {
            let owned;
            let tbl: &DivisorTable = match table {
                Some(t) if t.covers(cutoff + 1, cutoff + window) => t,
                _ => {
                    owned = DivisorTable::range_with_budget(
                        cutoff + 1,
                        cutoff + window,
                        budget.max_sieve_span,
                    )?;
                    &owned
                }
            };
            let mut u = BigInt::zero();
            let base_big = BigInt::from(b);
            for n in cutoff + 1..=cutoff + window {
                u *= &base_big;
                let c = spec.coefficient(n).unsigned_abs();
                u += BigInt::from(tbl.get(n) as u64 * c);
            }
            u
        };

        // Above: window sum alone already beats the threshold
        if cmp_power_scaled(&(&u * t_den), cutoff + window, &(t_num * BigInt::one()), t_exp, b)
            == std::cmp::Ordering::Greater
        {
            return Ok(TailComparison {
                verdict: TailVerdict::Above,
                window_used: window,
            });
        }

        // Below: window sum plus the remainder bound stays under it
        let tail_zero = spec.tail_is_zero(cutoff + window);
        let k = (BigInt::from(cutoff + window) + 1) * &bm1 + 1;
        let combined = if tail_zero {
            &u * &bm1_sq
        } else {
            &u * &bm1_sq + &max_abs * k
        };
        if cmp_power_scaled(
            &(&combined * t_den),
            cutoff + window,
            &(t_num * &bm1_sq),
            t_exp,
            b,
        ) == std::cmp::Ordering::Less
        {
            return Ok(TailComparison {
                verdict: TailVerdict::Below,
                window_used: window,
            });
        }

        if window >= budget.max_window {
            return Ok(TailComparison {
                verdict: TailVerdict::Unresolved,
                window_used: window,
            });
        }
        window = if window == 0 {
            budget.initial_window.max(1)
        } else {
            (window * 2).min(budget.max_window)
        };
    }
}

/// One row of the tail census.
#[derive(Debug, Clone, Serialize)]
pub struct CensusRow {
    pub m: u64,
    pub cutoff: u64,
    /// Threshold is `threshold_num / base^threshold_exp`.
    pub threshold_num: u64,
    pub threshold_exp: u64,
    pub verdict: TailVerdict,
    pub window_used: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusReport {
    pub base: u32,
    pub k: u32,
    pub m_limit: u64,
    /// Number of m with a certified exceedance (verdict Above).
    pub exceedance_count: u64,
    /// Unresolved rows, reported but never counted.
    pub unresolved_count: u64,
    /// Shape of the non-checkable reference bound, with its constant left
    /// symbolic.
    pub bound_shape: String,
    pub rows: Vec<CensusRow>,
}

/// For each m below `m_limit`, decide whether the tail beyond r + k + mA
/// exceeds max|a| / b^(r + ceil(k/2) + mA). Rows are independent and merged
/// in m order; one shared sieve serves every window.
pub fn lemma1_census(
    plan: &CrtPlan,
    spec: &SeriesSpec,
    m_limit: u64,
    budget: &SeriesBudget,
) -> Result<CensusReport, SeriesError> {
    if spec.base() != plan.base {
        return Err(SeriesError::BaseMismatch {
            series: spec.base(),
            plan: plan.base,
        });
    }
    let bound_shape = "10*c*N*(log N)^2 / (A * 2^(k/4)), c unspecified".to_string();
    if m_limit == 0 {
        return Ok(CensusReport {
            base: plan.base,
            k: plan.k,
            m_limit,
            exceedance_count: 0,
            unresolved_count: 0,
            bound_shape,
            rows: Vec::new(),
        });
    }
    let (r, a) = match (plan.residue.to_u64(), plan.a_modulus.to_u64()) {
        (Some(r), Some(a)) => (r, a),
        _ => return Err(SeriesError::CensusScale),
    };
    let k = plan.k as u64;
    let last_cutoff = r + k + (m_limit - 1) * a;
    let table = DivisorTable::range_with_budget(
        (r + k + 1).min(last_cutoff + 1),
        last_cutoff + budget.max_window,
        budget.max_sieve_span,
    )?;

    let rows: Vec<CensusRow> = (0..m_limit)
        .into_par_iter()
        .map(|m| {
            let cutoff = r + k + m * a;
            let exp = r + k.div_ceil(2) + m * a;
            let threshold = TailThreshold::power_scaled(
                BigRational::from(BigInt::from(spec.max_abs())),
                exp,
            );
            let cmp = tail_compare(spec, cutoff, &threshold, budget, Some(&table))?;
            Ok(CensusRow {
                m,
                cutoff,
                threshold_num: spec.max_abs(),
                threshold_exp: exp,
                verdict: cmp.verdict,
                window_used: cmp.window_used,
            })
        })
        .collect::<Result<Vec<_>, SeriesError>>()?;

    let exceedance_count = rows
        .iter()
        .filter(|row| row.verdict == TailVerdict::Above)
        .count() as u64;
    let unresolved_count = rows
        .iter()
        .filter(|row| row.verdict == TailVerdict::Unresolved)
        .count() as u64;
    Ok(CensusReport {
        base: plan.base,
        k: plan.k,
        m_limit,
        exceedance_count,
        unresolved_count,
        bound_shape,
        rows,
    })
}
