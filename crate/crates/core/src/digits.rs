//! Exact base-b scaled-integer arithmetic and canonical digit extraction.
//!
//! A [`ScaledInteger`] holds the exact value `value / base^scale`; all
//! operations here are exact, no floating point anywhere. Digit strings
//! follow the convention that finite expansions end on an infinite string
//! of zeros, so canonical values carry no trailing zero digits.

use std::cmp::Ordering;
use std::io::{self, BufRead, Write};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{Pow, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DigitsError {
    #[error("base must be at least 2, got {0}")]
    InvalidBase(u32),
    #[error("term position {position} exceeds scale {scale}")]
    OutOfScale { position: u64, scale: u64 },
    #[error("term positions start at 1")]
    ZeroPosition,
    #[error("base mismatch: {0} vs {1}")]
    BaseMismatch(u32, u32),
    #[error("empty interval: lo > hi")]
    EmptyInterval,
    #[error("negative intervals are unsupported; split at zero first")]
    NegativeInterval,
    #[error("digit {digit} out of range for base {base}")]
    DigitOutOfRange { digit: u32, base: u32 },
    #[error("digit file: {0}")]
    Format(String),
}

pub(crate) fn big_pow(base: u32, exp: u64) -> BigUint {
    Pow::pow(&BigUint::from(base), exp)
}

pub(crate) fn big_pow_int(base: u32, exp: u64) -> BigInt {
    BigInt::from(big_pow(base, exp))
}

/// Exact value `value / base^scale`.
///
/// Canonical form: `scale == 0` or `base` does not divide `value`.
/// Construction always normalizes, so two `ScaledInteger`s over the same
/// base are equal as numbers iff they are equal as structs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaledInteger {
    base: u32,
    value: BigInt,
    scale: u64,
}

impl ScaledInteger {
    pub fn new(base: u32, value: BigInt, scale: u64) -> Result<Self, DigitsError> {
        if base < 2 {
            return Err(DigitsError::InvalidBase(base));
        }
        let mut out = Self { base, value, scale };
        out.normalize();
        Ok(out)
    }

    pub fn zero(base: u32) -> Result<Self, DigitsError> {
        Self::new(base, BigInt::zero(), 0)
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn value(&self) -> &BigInt {
        &self.value
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.value.is_negative()
    }

    /// Rescale `value` so that `base` no longer divides it (or scale hits 0).
    fn normalize(&mut self) {
        if self.value.is_zero() {
            self.scale = 0;
            return;
        }
        let b = BigInt::from(self.base);
        while self.scale > 0 {
            let (q, r) = self.value.div_rem(&b);
            if r.is_zero() {
                self.value = q;
                self.scale -= 1;
            } else {
                break;
            }
        }
    }

    /// The numerator after raising the representation to `scale >= self.scale`.
    pub(crate) fn value_at_scale(&self, scale: u64) -> BigInt {
        debug_assert!(scale >= self.scale);
        &self.value * big_pow_int(self.base, scale - self.scale)
    }

    pub fn neg(&self) -> Self {
        Self {
            base: self.base,
            value: -&self.value,
            scale: self.scale,
        }
    }
}

/// Exact trichotomous comparison of two values over the same base.
pub fn compare(x: &ScaledInteger, y: &ScaledInteger) -> Result<Ordering, DigitsError> {
    if x.base != y.base {
        return Err(DigitsError::BaseMismatch(x.base, y.base));
    }
    let s = x.scale.max(y.scale);
    Ok(x.value_at_scale(s).cmp(&y.value_at_scale(s)))
}

/// Exact sum of `coefficient * base^(-position)` terms, held at scale `scale`.
///
/// Terms are summed in position order internally, so the result is
/// independent of input order. Duplicate positions are allowed and add.
pub fn accumulate_terms(
    base: u32,
    terms: &[(u64, i64)],
    scale: u64,
) -> Result<ScaledInteger, DigitsError> {
    if base < 2 {
        return Err(DigitsError::InvalidBase(base));
    }
    for &(n, _) in terms {
        if n == 0 {
            return Err(DigitsError::ZeroPosition);
        }
        if n > scale {
            return Err(DigitsError::OutOfScale { position: n, scale });
        }
    }
    let mut sorted: Vec<(u64, i64)> = terms.to_vec();
    sorted.sort_by_key(|t| t.0);
    let mut acc = BigInt::zero();
    let mut prev = 0u64;
    for (n, c) in sorted {
        if n != prev {
            acc *= big_pow_int(base, n - prev);
            prev = n;
        }
        acc += c;
    }
    acc *= big_pow_int(base, scale - prev);
    ScaledInteger::new(base, acc, scale)
}

/// Canonical base-b digit representation: sign, integer part, and fractional
/// digits indexed from position 1 (the coefficient of `base^(-position)`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitString {
    pub base: u32,
    pub sign: i8,
    pub integer_part: BigUint,
    pub digits: Vec<u32>,
}

impl DigitString {
    /// Fractional digit at 1-indexed `position`; zero beyond the stored
    /// digits, matching the trailing-zeros convention.
    pub fn digit_at(&self, position: u64) -> u32 {
        if position == 0 || position > self.digits.len() as u64 {
            0
        } else {
            self.digits[(position - 1) as usize]
        }
    }

    /// Lowest digit of the integer part (the digit "at position 0").
    pub fn last_integer_digit(&self) -> u32 {
        let (_, r) = self.integer_part.div_rem(&BigUint::from(self.base));
        r.to_u32_digits().first().copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.integer_part.is_zero() && self.digits.iter().all(|&d| d == 0)
    }
}

fn radix_digits(n: &BigUint, base: u32) -> Vec<u32> {
    if n.is_zero() {
        return Vec::new();
    }
    if base <= 256 {
        n.to_radix_be(base).into_iter().map(u32::from).collect()
    } else {
        let mut out = Vec::new();
        let b = BigUint::from(base);
        let mut m = n.clone();
        while !m.is_zero() {
            let (q, r) = m.div_rem(&b);
            out.push(r.to_u32_digits().first().copied().unwrap_or(0));
            m = q;
        }
        out.reverse();
        out
    }
}

/// Exact canonical digit expansion of a scaled integer.
pub fn to_digits(x: &ScaledInteger) -> DigitString {
    let mag = x.value.magnitude();
    let bp = big_pow(x.base, x.scale);
    let (int_part, rem) = mag.div_rem(&bp);
    let raw = radix_digits(&rem, x.base);
    debug_assert!(raw.len() as u64 <= x.scale);
    let mut digits = vec![0u32; (x.scale as usize) - raw.len()];
    digits.extend_from_slice(&raw);
    DigitString {
        base: x.base,
        sign: if x.value.is_negative() { -1 } else { 1 },
        integer_part: int_part,
        digits,
    }
}

/// Re-expand a digit string into the scaled integer it denotes.
pub fn from_digits(ds: &DigitString) -> Result<ScaledInteger, DigitsError> {
    if ds.base < 2 {
        return Err(DigitsError::InvalidBase(ds.base));
    }
    for &d in &ds.digits {
        if d >= ds.base {
            return Err(DigitsError::DigitOutOfRange {
                digit: d,
                base: ds.base,
            });
        }
    }
    let b = BigUint::from(ds.base);
    let mut mag = ds.integer_part.clone();
    for &d in &ds.digits {
        mag = mag * &b + BigUint::from(d);
    }
    let mut value = BigInt::from(mag);
    if ds.sign < 0 {
        value = -value;
    }
    ScaledInteger::new(ds.base, value, ds.digits.len() as u64)
}

/// Result of [`certified_common_prefix`].
#[derive(Debug, Clone)]
pub struct CommonPrefix {
    /// Integer part plus the shared fractional digits.
    pub digits: DigitString,
    /// Number of fractional positions certified identical across the interval.
    pub certified_length: u64,
    /// Whether the integer part itself is certified.
    pub integer_certified: bool,
    /// Degenerate interval: the value is known exactly and every later digit
    /// is zero.
    pub exact: bool,
}

/// Longest digit prefix shared by every value in `[lo, hi]`.
///
/// Both endpoints must be non-negative; callers handle signed intervals by
/// splitting at zero. If the interval straddles a digit rollover the prefix
/// stops at the rollover point.
pub fn certified_common_prefix(
    lo: &ScaledInteger,
    hi: &ScaledInteger,
) -> Result<CommonPrefix, DigitsError> {
    if lo.base != hi.base {
        return Err(DigitsError::BaseMismatch(lo.base, hi.base));
    }
    if lo.is_negative() {
        return Err(DigitsError::NegativeInterval);
    }
    match compare(lo, hi)? {
        Ordering::Greater => return Err(DigitsError::EmptyInterval),
        Ordering::Equal => {
            let ds = to_digits(lo);
            let len = ds.digits.len() as u64;
            return Ok(CommonPrefix {
                digits: ds,
                certified_length: len,
                integer_certified: true,
                exact: true,
            });
        }
        Ordering::Less => {}
    }
    let dl = to_digits(lo);
    let dh = to_digits(hi);
    if dl.integer_part != dh.integer_part {
        return Ok(CommonPrefix {
            digits: DigitString {
                base: lo.base,
                sign: 1,
                integer_part: dl.integer_part,
                digits: Vec::new(),
            },
            certified_length: 0,
            integer_certified: false,
            exact: false,
        });
    }
    // Endpoints sharing the first L digits pin every value in between to the
    // same half-open digit cell [prefix, prefix + base^-L).
    let longest = dl.digits.len().max(dh.digits.len());
    let mut shared = 0usize;
    while shared < longest {
        let a = dl.digits.get(shared).copied().unwrap_or(0);
        let b = dh.digits.get(shared).copied().unwrap_or(0);
        if a != b {
            break;
        }
        shared += 1;
    }
    Ok(CommonPrefix {
        digits: DigitString {
            base: lo.base,
            sign: 1,
            integer_part: dl.integer_part,
            digits: (0..shared)
                .map(|i| dl.digits.get(i).copied().unwrap_or(0))
                .collect(),
        },
        certified_length: shared as u64,
        integer_certified: true,
        exact: false,
    })
}

/// Certification status carried by digit files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certification {
    Certified(u64),
    Exact,
}

impl Certification {
    /// Certified fractional length for a string with `stored` stored digits.
    pub fn length_for(&self, stored: u64) -> u64 {
        match *self {
            Certification::Certified(l) => l.min(stored),
            Certification::Exact => stored,
        }
    }
}

const DIGITS_PER_LINE: usize = 64;

/// Write the digit-file format: `base`, `sign`, `integer`, `certified`
/// header lines, then digits 64 per line.
pub fn write_digit_file<W: Write>(
    w: &mut W,
    ds: &DigitString,
    cert: Certification,
) -> io::Result<()> {
    writeln!(w, "base {}", ds.base)?;
    writeln!(w, "sign {}", if ds.sign < 0 { "-" } else { "+" })?;
    writeln!(w, "integer {}", ds.integer_part)?;
    match cert {
        Certification::Certified(l) => writeln!(w, "certified {l}")?,
        Certification::Exact => writeln!(w, "certified exact")?,
    }
    for chunk in ds.digits.chunks(DIGITS_PER_LINE) {
        let line: Vec<String> = chunk.iter().map(|d| d.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_digit_file<R: BufRead>(r: &mut R) -> Result<(DigitString, Certification), DigitsError> {
    let mut lines = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| DigitsError::Format(e.to_string()))?;
        lines.push(line);
    }
    let mut it = lines.iter();
    let field = |it: &mut std::slice::Iter<String>, key: &str| -> Result<String, DigitsError> {
        let line = it
            .next()
            .ok_or_else(|| DigitsError::Format(format!("missing `{key}` line")))?;
        let rest = line
            .strip_prefix(key)
            .ok_or_else(|| DigitsError::Format(format!("expected `{key}`, got `{line}`")))?;
        Ok(rest.trim().to_string())
    };
    let base: u32 = field(&mut it, "base")?
        .parse()
        .map_err(|_| DigitsError::Format("bad base".into()))?;
    let sign = match field(&mut it, "sign")?.as_str() {
        "+" => 1i8,
        "-" => -1i8,
        s => return Err(DigitsError::Format(format!("bad sign `{s}`"))),
    };
    let integer_part: BigUint = field(&mut it, "integer")?
        .parse()
        .map_err(|_| DigitsError::Format("bad integer part".into()))?;
    let cert_str = field(&mut it, "certified")?;
    let cert = if cert_str == "exact" {
        Certification::Exact
    } else {
        Certification::Certified(
            cert_str
                .parse()
                .map_err(|_| DigitsError::Format("bad certified length".into()))?,
        )
    };
    let mut digits = Vec::new();
    for line in it {
        for tok in line.split_whitespace() {
            let d: u32 = tok
                .parse()
                .map_err(|_| DigitsError::Format(format!("bad digit `{tok}`")))?;
            if d >= base {
                return Err(DigitsError::DigitOutOfRange { digit: d, base });
            }
            digits.push(d);
        }
    }
    Ok((
        DigitString {
            base,
            sign,
            integer_part,
            digits,
        },
        cert,
    ))
}
