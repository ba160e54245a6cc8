//! Number-theoretic kernel: divisor-function sieves, bounded factorization,
//! primality, primes and prime counts in arithmetic progressions, CRT
//! solving, and p-adic valuation.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NtError {
    #[error("requested {requested} entries exceeds the sieve budget of {budget}")]
    Resource { requested: u64, budget: u64 },
    #[error("could not factor {n} with trial division up to {bound}")]
    Unfactored { n: u64, bound: u64 },
    #[error("moduli at positions {i} and {j} share the factor {gcd}")]
    NonCoprimeModuli { i: usize, j: usize, gcd: BigUint },
    #[error("modulus at position {0} must be positive")]
    NonPositiveModulus(usize),
    #[error("argument out of domain: {0}")]
    Domain(&'static str),
}

/// Default cap on sieve table entries (u32 counts, so ~1 GiB).
pub const DEFAULT_SIEVE_BUDGET: u64 = 1 << 28;

/// Default trial-division bound for pointwise factorization.
pub const DEFAULT_TRIAL_BOUND: u64 = 1 << 22;

/// Divisor counts d(n) for n in a contiguous range `[lo, hi]`.
///
/// Built once and shared; immutable afterwards.
#[derive(Debug, Clone)]
pub struct DivisorTable {
    lo: u64,
    counts: Vec<u32>,
}

impl DivisorTable {
    pub fn range(lo: u64, hi: u64) -> Result<Self, NtError> {
        Self::range_with_budget(lo, hi, DEFAULT_SIEVE_BUDGET)
    }

    pub fn range_with_budget(lo: u64, hi: u64, budget: u64) -> Result<Self, NtError> {
        if lo < 1 || hi < lo {
            return Err(NtError::Domain("divisor table needs 1 <= lo <= hi"));
        }
        let len = hi - lo + 1;
        if len > budget || hi > budget.saturating_mul(64) {
            return Err(NtError::Resource {
                requested: len.max(hi),
                budget,
            });
        }
        let mut counts = vec![0u32; len as usize];
        for i in 1..=hi {
            let start = lo.div_ceil(i) * i;
            let mut j = start;
            while j <= hi {
                counts[(j - lo) as usize] += 1;
                j += i;
            }
        }
        Ok(Self { lo, counts })
    }

    pub fn lo(&self) -> u64 {
        self.lo
    }

    pub fn hi(&self) -> u64 {
        self.lo + self.counts.len() as u64 - 1
    }

    pub fn covers(&self, lo: u64, hi: u64) -> bool {
        lo >= self.lo && hi <= self.hi() && lo <= hi
    }

    /// d(n); panics if `n` is outside the table range.
    pub fn get(&self, n: u64) -> u32 {
        self.counts[(n - self.lo) as usize]
    }
}

/// d(1..=n) as a vector indexed so that entry `i` is d(i+1).
pub fn divisor_sieve(n: u64) -> Result<Vec<u32>, NtError> {
    divisor_sieve_with_budget(n, DEFAULT_SIEVE_BUDGET)
}

pub fn divisor_sieve_with_budget(n: u64, budget: u64) -> Result<Vec<u32>, NtError> {
    let table = DivisorTable::range_with_budget(1, n, budget)?;
    Ok(table.counts)
}

/// Prime factorization with distinct ascending primes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization {
    pub n: u64,
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn divisor_count(&self) -> u64 {
        self.factors.iter().map(|&(_, e)| (e + 1) as u64).product()
    }
}

/// Bounded trial-division factorization. Returns `Unfactored` rather than a
/// wrong answer when the cofactor is composite and beyond the bound.
pub fn factorize(n: u64, trial_bound: u64) -> Result<Factorization, NtError> {
    if n == 0 {
        return Err(NtError::Domain("factorize needs n >= 1"));
    }
    let mut factors = Vec::new();
    let mut m = n;
    let mut push = |p: u64, m: &mut u64| {
        let mut e = 0u32;
        while *m % p == 0 {
            *m /= p;
            e += 1;
        }
        if e > 0 {
            factors.push((p, e));
        }
    };
    push(2, &mut m);
    push(3, &mut m);
    let mut p = 5u64;
    let mut step = 2u64; // 5, 7, 11, 13, ... (6k +- 1 wheel)
    while p <= trial_bound && p * p <= m {
        push(p, &mut m);
        p += step;
        step = 6 - step;
    }
    if m > 1 {
        if p * p > m || is_prime_u64(m) {
            factors.push((m, 1));
        } else {
            return Err(NtError::Unfactored {
                n,
                bound: trial_bound,
            });
        }
    }
    Ok(Factorization { n, factors })
}

/// d(n) via bounded factorization; errs instead of guessing.
pub fn divisor_count(n: u64) -> Result<u64, NtError> {
    divisor_count_with_bound(n, DEFAULT_TRIAL_BOUND)
}

pub fn divisor_count_with_bound(n: u64, trial_bound: u64) -> Result<u64, NtError> {
    Ok(factorize(n, trial_bound)?.divisor_count())
}

fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn powmod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(acc, a, m);
        }
        a = mulmod(a, a, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for all n < 2^64 (12 fixed witnesses).
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let d = n - 1;
    let s = d.trailing_zeros();
    let d = d >> s;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primality verdict; exact below 2^64, flagged probabilistic above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primality {
    Prime,
    Composite,
    /// Passed the given number of fixed-base strong-pseudoprime rounds.
    ProbablePrime { rounds: u32 },
}

impl Primality {
    pub fn passes(&self) -> bool {
        !matches!(self, Primality::Composite)
    }
}

const BIG_MR_ROUNDS: u32 = 40;

/// Primality check for arbitrary-size integers. Deterministic below 2^64;
/// above that, fixed-base Miller-Rabin flagged as probable.
pub fn check_prime(n: &BigUint) -> Primality {
    if let Some(small) = n.to_u64() {
        return if is_prime_u64(small) {
            Primality::Prime
        } else {
            Primality::Composite
        };
    }
    // quick trial division by small primes
    for p in small_primes_to(1000) {
        if (n % BigUint::from(p)).is_zero() {
            return Primality::Composite;
        }
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let mut rounds = 0u32;
    let mut base = 2u64;
    while rounds < BIG_MR_ROUNDS {
        // fixed witness schedule: consecutive primes, fully deterministic
        while !is_prime_u64(base) {
            base += 1;
        }
        let a = BigUint::from(base);
        let mut x = a.modpow(&d, n);
        if !x.is_one() && x != n_minus_1 {
            let mut ok = false;
            for _ in 1..s {
                x = x.modpow(&BigUint::from(2u32), n);
                if x == n_minus_1 {
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Primality::Composite;
            }
        }
        rounds += 1;
        base += 1;
    }
    Primality::ProbablePrime {
        rounds: BIG_MR_ROUNDS,
    }
}

fn small_primes_to(bound: u64) -> Vec<u64> {
    let mut sieve = vec![true; (bound + 1) as usize];
    let mut out = Vec::new();
    for p in 2..=bound {
        if sieve[p as usize] {
            out.push(p);
            let mut q = p * p;
            while q <= bound {
                sieve[q as usize] = false;
                q += p;
            }
        }
    }
    out
}

/// Primes p with `lo < p <= hi` (strict lower bound), ascending.
pub fn primes_in_range(lo: u64, hi: u64) -> Vec<u64> {
    if hi < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut n = lo + 1;
    if n < 2 {
        n = 2;
    }
    // small spans at desk scale; trial primality per candidate is plenty
    while n <= hi {
        if is_prime_u64(n) {
            out.push(n);
        }
        n += 1;
    }
    out
}

/// Exact count of primes <= n congruent to a mod d, plus the reference
/// density value n / (2 phi(d) log n) for comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApCount {
    pub count: u64,
    pub reference: f64,
}

pub fn prime_count_ap(n: u64, d: u64, a: u64) -> Result<ApCount, NtError> {
    if d < 1 || a >= d {
        return Err(NtError::Domain("prime_count_ap needs d >= 1 and 0 <= a < d"));
    }
    let count = small_primes_to(n)
        .into_iter()
        .filter(|&p| p % d == a)
        .count() as u64;
    let reference = if n >= 3 {
        let phi = euler_phi(d) as f64;
        n as f64 / (2.0 * phi * (n as f64).ln())
    } else {
        0.0
    };
    Ok(ApCount { count, reference })
}

pub fn euler_phi(d: u64) -> u64 {
    let f = factorize(d, d).expect("trial bound covers d");
    let mut phi = d;
    for (p, _) in f.factors {
        phi = phi / p * (p - 1);
    }
    phi
}

/// Solve a system of congruences `x = r_i (mod m_i)` with pairwise coprime
/// moduli; returns `(r, M)` with `0 <= r < M = prod m_i`.
pub fn crt_solve(congruences: &[(BigInt, BigInt)]) -> Result<(BigInt, BigInt), NtError> {
    for (i, (_, m)) in congruences.iter().enumerate() {
        if !m.is_positive() {
            return Err(NtError::NonPositiveModulus(i));
        }
    }
    let mut r = BigInt::zero();
    let mut modulus = BigInt::one();
    for (i, (ri, mi)) in congruences.iter().enumerate() {
        let g = modulus.gcd(mi);
        if !g.is_one() {
            // name the offending earlier pair
            for (j, (_, mj)) in congruences.iter().enumerate().take(i) {
                let gj = mj.gcd(mi);
                if !gj.is_one() {
                    return Err(NtError::NonCoprimeModuli {
                        i: j,
                        j: i,
                        gcd: gj.magnitude().clone(),
                    });
                }
            }
            unreachable!("accumulated gcd without an offending pair");
        }
        // x = r + modulus * t, with t = (ri - r) / modulus  (mod mi)
        let egcd = modulus.extended_gcd(mi);
        let inv = egcd.x.mod_floor(mi);
        let t = ((ri - &r) * inv).mod_floor(mi);
        r += &modulus * t;
        modulus *= mi;
        r = r.mod_floor(&modulus);
    }
    Ok((r, modulus))
}

/// Largest e with p^e dividing n. Panics if n = 0 or p < 2.
pub fn valuation(n: &BigUint, p: &BigUint) -> u64 {
    assert!(!n.is_zero(), "valuation of zero is undefined");
    assert!(p >= &BigUint::from(2u32), "valuation base must be >= 2");
    let mut e = 0u64;
    let mut m = n.clone();
    loop {
        let (q, r) = m.div_rem(p);
        if !r.is_zero() {
            return e;
        }
        m = q;
        e += 1;
    }
}

pub fn valuation_u64(n: u64, p: u64) -> u64 {
    valuation(&BigUint::from(n), &BigUint::from(p))
}
