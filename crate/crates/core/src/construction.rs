//! The congruence construction: slot primes above a floor, the modulus A,
//! the residue r solved by CRT, and the search for an offset m0 where the
//! exceptional slot lands on a prime.
//!
//! Each non-exceptional slot j carries its own block of primes, and r is
//! chosen so that every slot prime p divides r + j with exact valuation
//! b - 1. Multiplicativity of the divisor function then forces
//! b^(slot prime count) to divide d(r + mA + j) for every m.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Pow, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nt::{self, NtError, Primality};
use crate::series::{SeriesBudget, SeriesError, SeriesSpec, TailThreshold, TailVerdict};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("base must be at least 2, got {0}")]
    InvalidBase(u32),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("logN must be positive")]
    NonPositiveLog,
    #[error("alphabet must be non-empty")]
    EmptyAlphabet,
    #[error("alphabet contains 0, which the construction excludes")]
    ZeroInAlphabet,
    #[error("modulus would need about {bits} bits, beyond the budget of {budget}")]
    Resource { bits: u64, budget: u64 },
    #[error("plan violates gcd(r + j0, A) = 1")]
    Coprimality,
    #[error("series base {series} does not match plan base {plan}")]
    BaseMismatch { series: u32, plan: u32 },
    #[error(
        "no m0 below {m_limit}: {divisibility_failures} divisibility, \
         {primality_failures} primality, {tail_failures} tail failures"
    )]
    SearchExhausted {
        m_limit: u64,
        primality_failures: u64,
        divisibility_failures: u64,
        tail_failures: u64,
    },
    #[error("strict tail checking needs the plan's r and A to fit in 64 bits")]
    TailScale,
    #[error(transparent)]
    Nt(#[from] NtError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// How many primes each slot receives.
///
/// `PaperFaithful` gives slot j exactly j primes (so slot 0 is empty) and
/// claims b^j divisibility; `ClaimedStrength` gives j + 1 primes and claims
/// b^(j+1). The two readings of the construction are both available and
/// reports always state which one produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    PaperFaithful,
    ClaimedStrength,
}

impl PlanMode {
    pub fn primes_for_slot(self, j: u32) -> u32 {
        match self {
            PlanMode::PaperFaithful => j,
            PlanMode::ClaimedStrength => j + 1,
        }
    }
}

pub(crate) mod biguint_decimal {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(|_| D::Error::custom("bad decimal integer"))
    }
}

/// A fully solved congruence plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrtPlan {
    pub base: u32,
    pub k: u32,
    pub j0: u32,
    pub mode: PlanMode,
    pub prime_floor: u64,
    pub slots: Vec<Vec<u64>>,
    #[serde(rename = "A", with = "biguint_decimal")]
    pub a_modulus: BigUint,
    #[serde(rename = "r", with = "biguint_decimal")]
    pub residue: BigUint,
}

impl CrtPlan {
    /// Divisibility exponent claimed for slot j.
    pub fn slot_exponent(&self, j: u32) -> u32 {
        self.mode.primes_for_slot(j)
    }

    /// r + mA + j.
    pub fn progression_member(&self, m: u64, j: u32) -> BigUint {
        &self.residue + &self.a_modulus * m + j
    }

    pub fn total_prime_count(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Largest k with k^10 <= logN, computed exactly.
pub fn choose_k(log_n: &BigRational) -> Result<u64, PlanError> {
    if log_n <= &BigRational::zero() {
        return Err(PlanError::NonPositiveLog);
    }
    let fits = |k: u64| {
        let kp: BigInt = Pow::pow(&BigInt::from(k), 10u32);
        &(kp * log_n.denom()) <= log_n.numer()
    };
    let mut hi = 1u64;
    while fits(hi) {
        hi *= 2;
    }
    let mut lo = 0u64;
    hi -= 1;
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}

/// Smallest j0 with 2 * max|a| < b^j0.
pub fn choose_j0(base: u32, alphabet: &[i64]) -> Result<u32, PlanError> {
    if base < 2 {
        return Err(PlanError::InvalidBase(base));
    }
    if alphabet.is_empty() {
        return Err(PlanError::EmptyAlphabet);
    }
    if alphabet.contains(&0) {
        return Err(PlanError::ZeroInAlphabet);
    }
    let max_abs = alphabet.iter().map(|a| a.unsigned_abs()).max().unwrap();
    let target = 2u128 * max_abs as u128;
    let mut j0 = 0u32;
    let mut power = 1u128;
    while power <= target {
        power = power.saturating_mul(base as u128);
        j0 += 1;
    }
    Ok(j0)
}

const DEFAULT_MODULUS_BIT_BUDGET: u64 = 1 << 20;

pub fn build_plan(
    base: u32,
    k: u32,
    j0: u32,
    prime_floor: u64,
    mode: PlanMode,
) -> Result<CrtPlan, PlanError> {
    build_plan_with_budget(base, k, j0, prime_floor, mode, DEFAULT_MODULUS_BIT_BUDGET)
}

pub fn build_plan_with_budget(
    base: u32,
    k: u32,
    j0: u32,
    prime_floor: u64,
    mode: PlanMode,
    bit_budget: u64,
) -> Result<CrtPlan, PlanError> {
    if base < 2 {
        return Err(PlanError::InvalidBase(base));
    }
    if k < 1 {
        return Err(PlanError::InvalidK);
    }
    let needed: u64 = (0..k)
        .filter(|&j| j != j0)
        .map(|j| mode.primes_for_slot(j) as u64)
        .sum();

    // smallest `needed` primes strictly greater than the floor, ascending
    let mut primes = Vec::with_capacity(needed as usize);
    let mut candidate = prime_floor + 1;
    let mut est_bits = 0u64;
    while (primes.len() as u64) < needed {
        if nt::is_prime_u64(candidate) {
            est_bits += (base as u64) * (64 - candidate.leading_zeros() as u64);
            if est_bits > bit_budget {
                return Err(PlanError::Resource {
                    bits: est_bits,
                    budget: bit_budget,
                });
            }
            primes.push(candidate);
        }
        candidate += 1;
    }

    // smallest primes go to the smallest slots
    let mut slots: Vec<Vec<u64>> = Vec::with_capacity(k as usize);
    let mut cursor = 0usize;
    for j in 0..k {
        if j == j0 {
            slots.push(Vec::new());
            continue;
        }
        let count = mode.primes_for_slot(j) as usize;
        slots.push(primes[cursor..cursor + count].to_vec());
        cursor += count;
    }

    // per-slot congruence: r + j = P^(b-1)  (mod P^b), P the slot's prime product
    let mut congruences = Vec::new();
    for (j, slot) in slots.iter().enumerate() {
        if slot.is_empty() {
            continue;
        }
        let p_prod: BigUint = slot.iter().map(|&p| BigUint::from(p)).product();
        let modulus = BigInt::from(Pow::pow(&p_prod, base as u64));
        let target = BigInt::from(Pow::pow(&p_prod, (base - 1) as u64));
        let residue = (target - BigInt::from(j)).mod_floor(&modulus);
        congruences.push((residue, modulus));
    }
    let (r, a) = nt::crt_solve(&congruences)?;
    let residue = r.magnitude().clone();
    let a_modulus = a.magnitude().clone();

    let plan = CrtPlan {
        base,
        k,
        j0,
        mode,
        prime_floor,
        slots,
        a_modulus,
        residue,
    };

    // invariant sweep: exact slot valuations and coprimality of the open slot
    for (j, slot) in plan.slots.iter().enumerate() {
        for &p in slot {
            let n = &plan.residue + BigUint::from(j);
            if n.is_zero() {
                continue;
            }
            debug_assert_eq!(nt::valuation(&n, &BigUint::from(p)), (base - 1) as u64);
        }
    }
    let open = &plan.residue + BigUint::from(plan.j0);
    if !open.gcd(&plan.a_modulus).is_one() {
        return Err(PlanError::Coprimality);
    }
    Ok(plan)
}

/// Outcome of one (m, j) divisibility check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum SlotOutcome {
    /// d(n) fully computed and divisible by base^target.
    Pass { divisor_count: u64, base_valuation: u64 },
    Fail { divisor_count: u64, base_valuation: u64 },
    /// n could not be fully factored within budget; never counted as a pass.
    Unverified,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlotVerification {
    pub m: u64,
    pub j: u32,
    #[serde(with = "biguint_decimal")]
    pub n: BigUint,
    pub target_exponent: u32,
    /// (slot prime, exact valuation of that prime in n).
    pub prime_valuations: Vec<(u64, u64)>,
    pub outcome: SlotOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub coprime_ok: bool,
    pub rows: Vec<SlotVerification>,
}

impl PlanReport {
    pub fn all_pass(&self) -> bool {
        self.coprime_ok
            && self
                .rows
                .iter()
                .all(|row| matches!(row.outcome, SlotOutcome::Pass { .. }))
    }
}

fn check_slot(plan: &CrtPlan, m: u64, j: u32, trial_bound: u64) -> SlotVerification {
    let n = plan.progression_member(m, j);
    let prime_valuations: Vec<(u64, u64)> = plan.slots[j as usize]
        .iter()
        .map(|&p| (p, nt::valuation(&n, &BigUint::from(p))))
        .collect();
    let target = plan.slot_exponent(j);
    let outcome = if target == 0 {
        // a slot with no primes claims base^0 | d(n): vacuously true
        SlotOutcome::Pass {
            divisor_count: n
                .to_u64()
                .filter(|&s| s > 0)
                .and_then(|s| nt::divisor_count_with_bound(s, trial_bound).ok())
                .unwrap_or(0),
            base_valuation: 0,
        }
    } else {
        match n.to_u64() {
            Some(small) if small > 0 => match nt::divisor_count_with_bound(small, trial_bound) {
                Ok(d) => {
                    let v = nt::valuation_u64(d, plan.base as u64);
                    if v >= target as u64 {
                        SlotOutcome::Pass {
                            divisor_count: d,
                            base_valuation: v,
                        }
                    } else {
                        SlotOutcome::Fail {
                            divisor_count: d,
                            base_valuation: v,
                        }
                    }
                }
                Err(_) => SlotOutcome::Unverified,
            },
            _ => SlotOutcome::Unverified,
        }
    };
    SlotVerification {
        m,
        j,
        n,
        target_exponent: target,
        prime_valuations,
        outcome,
    }
}

/// Check base^t(j) | d(r + mA + j) for every m in range and non-exceptional
/// slot j, by full factorization. Rows come back ordered by (m, j).
pub fn verify_plan(plan: &CrtPlan, m_range: std::ops::Range<u64>, trial_bound: u64) -> PlanReport {
    let open = &plan.residue + BigUint::from(plan.j0);
    let coprime_ok = open.gcd(&plan.a_modulus).is_one();
    let rows: Vec<SlotVerification> = m_range
        .collect::<Vec<_>>()
        .par_iter()
        .flat_map_iter(|&m| {
            (0..plan.k)
                .filter(|&j| j != plan.j0)
                .map(move |j| check_slot(plan, m, j, trial_bound))
                .collect::<Vec<_>>()
        })
        .collect();
    PlanReport { coprime_ok, rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    Off,
    Strict,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum TailStatus {
    Unchecked,
    Certified {
        cutoff: u64,
        threshold_exponent: u64,
        window_used: u64,
    },
}

/// Witness that m0 satisfies the three conditions: slot divisibility,
/// primality of the exceptional member, and (optionally) the tail bound.
#[derive(Debug, Clone, Serialize)]
pub struct M0Certificate {
    pub plan: CrtPlan,
    pub m0: u64,
    #[serde(with = "biguint_decimal")]
    pub n_star: BigUint,
    pub primality: Primality,
    /// Slot-prime valuations at m0, all exactly b - 1.
    pub slot_valuations: Vec<(u32, Vec<(u64, u64)>)>,
    /// The m interval that was searched (half-open).
    pub searched: (u64, u64),
    pub tail: TailStatus,
}

/// Smallest m0 below `m_limit` whose certificate holds.
///
/// Divisibility is established through the slot-prime valuations (each
/// exact valuation b - 1 contributes a factor of b to d(n) by
/// multiplicativity), so it stays checkable even when A is enormous.
pub fn find_m0(
    plan: &CrtPlan,
    spec: &SeriesSpec,
    m_limit: u64,
    tail_rule: TailRule,
) -> Result<M0Certificate, PlanError> {
    if spec.base() != plan.base {
        return Err(PlanError::BaseMismatch {
            series: spec.base(),
            plan: plan.base,
        });
    }
    let b_minus_1 = (plan.base - 1) as u64;
    let mut primality_failures = 0u64;
    let mut divisibility_failures = 0u64;
    let mut tail_failures = 0u64;

    for m in 0..m_limit {
        let mut valuations = Vec::new();
        let mut ok = true;
        for j in 0..plan.k {
            if j == plan.j0 {
                continue;
            }
            let n = plan.progression_member(m, j);
            let vals: Vec<(u64, u64)> = plan.slots[j as usize]
                .iter()
                .map(|&p| (p, nt::valuation(&n, &BigUint::from(p))))
                .collect();
            if vals.iter().any(|&(_, v)| v != b_minus_1) {
                ok = false;
            }
            valuations.push((j, vals));
        }
        if !ok {
            divisibility_failures += 1;
            continue;
        }
        let n_star = plan.progression_member(m, plan.j0);
        let primality = nt::check_prime(&n_star);
        if !primality.passes() {
            primality_failures += 1;
            continue;
        }
        let tail = match tail_rule {
            TailRule::Off => TailStatus::Unchecked,
            TailRule::Strict => {
                let (r_small, a_small) = match (plan.residue.to_u64(), plan.a_modulus.to_u64()) {
                    (Some(r), Some(a)) => (r, a),
                    _ => return Err(PlanError::TailScale),
                };
                let cutoff = r_small + plan.k as u64 + m * a_small;
                // threshold max|a| / b^(r + ceil(k/2) + mA); the rounded-up
                // half makes a pass imply the bound for either reading of k/2
                let exp = r_small + (plan.k as u64).div_ceil(2) + m * a_small;
                let threshold = TailThreshold::power_scaled(
                    BigRational::from(BigInt::from(spec.max_abs())),
                    exp,
                );
                let cmp =
                    crate::series::tail_compare(spec, cutoff, &threshold, &SeriesBudget::default(), None)?;
                match cmp.verdict {
                    TailVerdict::Below => TailStatus::Certified {
                        cutoff,
                        threshold_exponent: exp,
                        window_used: cmp.window_used,
                    },
                    _ => {
                        tail_failures += 1;
                        continue;
                    }
                }
            }
        };
        return Ok(M0Certificate {
            plan: plan.clone(),
            m0: m,
            n_star,
            primality,
            slot_valuations: valuations,
            searched: (0, m + 1),
            tail,
        });
    }
    Err(PlanError::SearchExhausted {
        m_limit,
        primality_failures,
        divisibility_failures,
        tail_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::CoefficientRule;

    fn desk_plan() -> CrtPlan {
        build_plan(2, 2, 2, 4, PlanMode::ClaimedStrength).unwrap()
    }

    #[test]
    fn choose_k_examples() {
        let q = |n: i64| BigRational::from(BigInt::from(n));
        assert_eq!(choose_k(&q(1024)).unwrap(), 2);
        assert_eq!(choose_k(&q(1023)).unwrap(), 1);
        assert_eq!(choose_k(&q(59049)).unwrap(), 3);
        assert!(matches!(choose_k(&q(0)), Err(PlanError::NonPositiveLog)));
    }

    #[test]
    fn choose_j0_examples() {
        assert_eq!(choose_j0(2, &[-1, 1]).unwrap(), 2);
        assert_eq!(choose_j0(3, &[-1, 1]).unwrap(), 1);
        assert_eq!(choose_j0(2, &[-5, 3]).unwrap(), 4);
        assert!(matches!(
            choose_j0(2, &[0, 1]),
            Err(PlanError::ZeroInAlphabet)
        ));
    }

    #[test]
    fn desk_plan_matches_hand_construction() {
        let plan = desk_plan();
        assert_eq!(plan.slots, vec![vec![5], vec![7, 11]]);
        assert_eq!(plan.a_modulus, BigUint::from(148225u64));
        assert_eq!(plan.residue, BigUint::from(6005u64));
        // exact valuations behind the divisibility claim
        assert_eq!(nt::valuation_u64(6005, 5), 1);
        assert_eq!(nt::valuation_u64(6006, 7), 1);
        assert_eq!(nt::valuation_u64(6006, 11), 1);
        // consequences
        assert_eq!(nt::divisor_count(6005).unwrap(), 4);
        assert_eq!(nt::divisor_count(6006).unwrap(), 32);
        assert!(BigUint::from(6007u64).gcd(&plan.a_modulus).is_one());
    }

    #[test]
    fn degenerate_plan() {
        let plan = build_plan(2, 1, 2, 10, PlanMode::PaperFaithful).unwrap();
        assert_eq!(plan.slots, vec![Vec::<u64>::new()]);
        assert_eq!(plan.a_modulus, BigUint::one());
        assert_eq!(plan.residue, BigUint::zero());
        // vacuous verification
        let report = verify_plan(&plan, 0..3, 1000);
        assert!(report.all_pass());
    }

    #[test]
    fn verify_desk_plan() {
        let plan = desk_plan();
        let report = verify_plan(&plan, 0..2, 1 << 16);
        assert!(report.coprime_ok);
        for row in &report.rows {
            match &row.outcome {
                SlotOutcome::Pass { divisor_count, base_valuation } => {
                    if row.m == 0 && row.j == 0 {
                        assert_eq!(*divisor_count, 4);
                    }
                    if row.m == 0 && row.j == 1 {
                        assert_eq!(*divisor_count, 32);
                    }
                    assert!(*base_valuation >= row.target_exponent as u64);
                }
                other => panic!("expected pass, got {other:?} at m={} j={}", row.m, row.j),
            }
            for &(p, v) in &row.prime_valuations {
                assert_eq!(v, 1, "prime {p} at m={} j={}", row.m, row.j);
            }
        }
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = desk_plan();
        let text = plan.to_json();
        assert!(text.contains("\"A\": \"148225\""));
        assert!(text.contains("\"r\": \"6005\""));
        let back = CrtPlan::from_json(&text).unwrap();
        assert_eq!(back, plan);
        // byte-stable round trip
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn find_m0_desk() {
        let plan = desk_plan();
        let spec = SeriesSpec::new(2, CoefficientRule::Constant(1)).unwrap();
        let cert = find_m0(&plan, &spec, 10, TailRule::Off).unwrap();
        assert_eq!(cert.m0, 0);
        assert_eq!(cert.n_star, BigUint::from(6007u64));
        assert_eq!(cert.primality, Primality::Prime);
        // trial-division oracle on 6007
        assert!((2..78).all(|d| 6007 % d != 0));
        assert!(matches!(cert.tail, TailStatus::Unchecked));
    }

    #[test]
    fn find_m0_parity_blocks_even_members() {
        // force the exceptional slot onto an even progression member:
        // n* = 6006 + 148225 m is even for even m, so any m0 found is odd
        let mut plan = desk_plan();
        plan.j0 = 1;
        plan.slots[1].clear(); // slot 1 is now exceptional; drop its primes
        let spec = SeriesSpec::new(2, CoefficientRule::Constant(1)).unwrap();
        match find_m0(&plan, &spec, 50, TailRule::Off) {
            Ok(cert) => assert_eq!(cert.m0 % 2, 1),
            Err(PlanError::SearchExhausted { primality_failures, .. }) => {
                assert!(primality_failures >= 25)
            }
            Err(other) => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn find_m0_degenerate_first_prime_at_or_after_j0() {
        let plan = build_plan(2, 1, 2, 10, PlanMode::PaperFaithful).unwrap();
        let spec = SeriesSpec::new(2, CoefficientRule::Constant(1)).unwrap();
        let cert = find_m0(&plan, &spec, 100, TailRule::Off).unwrap();
        // n* = m + j0; smallest prime >= j0 = 2 is 2 itself at m = 0
        assert_eq!(cert.m0, 0);
        assert_eq!(cert.n_star, BigUint::from(2u32));
    }

    #[test]
    fn random_m_preserves_slot_valuations() {
        let plan = desk_plan();
        for m in [0u64, 1, 7, 100, 12345] {
            for (j, slot) in plan.slots.iter().enumerate() {
                let n = plan.progression_member(m, j as u32);
                for &p in slot {
                    assert_eq!(nt::valuation(&n, &BigUint::from(p)), 1);
                }
            }
        }
    }

    #[test]
    fn modulus_bound_mirror() {
        // A < ceiling^(b * total primes) with ceiling = largest slot prime + 1
        let plan = desk_plan();
        let ceiling = plan.slots.iter().flatten().max().unwrap() + 1;
        let bound = Pow::pow(
            &BigUint::from(ceiling),
            plan.base as u64 * plan.total_prime_count() as u64,
        );
        assert!(plan.a_modulus < bound);
    }

    #[test]
    fn resource_budget() {
        assert!(matches!(
            build_plan_with_budget(2, 4, 0, 4, PlanMode::ClaimedStrength, 8),
            Err(PlanError::Resource { .. })
        ));
    }
}
