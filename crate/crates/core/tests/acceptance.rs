//! Desk-scale acceptance suite. Each criterion prints one pass/fail line;
//! run with `cargo test --test acceptance -- --nocapture` to see them all.

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Pow, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dseries_core::analysis::{extend_exact, find_zero_runs, periodicity_scan, predict_run_window};
use dseries_core::construction::{
    build_plan, find_m0, verify_plan, CrtPlan, M0Certificate, PlanMode, TailRule, TailStatus,
};
use dseries_core::digits::{Certification, DigitString};
use dseries_core::nt;
use dseries_core::series::{
    certified_prefix, certified_prefix_at, lemma1_census, tail_compare, tail_upper_bound,
    CoefficientRule, SeriesBudget, SeriesSpec, TailThreshold, TailVerdict,
};

fn report(name: &str, body: impl FnOnce()) {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("{name}: pass"),
        Err(e) => {
            println!("{name}: FAIL");
            resume_unwind(e);
        }
    }
}

#[test]
fn criterion_1_kernel_oracle_equivalence() {
    report("criterion 1 (kernel oracle equivalence)", || {
        let start = std::time::Instant::now();
        let limit = 1_000_000u64;
        let table = nt::divisor_sieve(limit).unwrap();
        for n in 1..=limit {
            assert_eq!(
                table[(n - 1) as usize] as u64,
                nt::divisor_count(n).unwrap(),
                "sieve and factorization disagree at {n}"
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pairs = 0;
        while pairs < 10_000 {
            let a = rng.gen_range(1..=limit);
            let b = rng.gen_range(1..=limit);
            if a.gcd(&b) != 1 {
                continue;
            }
            assert_eq!(
                nt::divisor_count(a * b).unwrap(),
                table[(a - 1) as usize] as u64 * table[(b - 1) as usize] as u64,
                "multiplicativity fails at ({a}, {b})"
            );
            pairs += 1;
        }
        assert!(
            start.elapsed().as_secs() <= 10,
            "kernel check exceeded 10 s: {:?}",
            start.elapsed()
        );
    });
}

#[test]
fn criterion_2_construction_fidelity() {
    report("criterion 2 (construction fidelity)", || {
        let plan = build_plan(2, 2, 2, 4, PlanMode::ClaimedStrength).unwrap();
        assert_eq!(plan.a_modulus, BigUint::from(148225u64));
        assert_eq!(plan.residue, BigUint::from(6005u64));
        assert_eq!(plan.slot_exponent(0), 1);
        assert_eq!(plan.slot_exponent(1), 2);
        let open = &plan.residue + BigUint::from(plan.j0);
        assert!(open.gcd(&plan.a_modulus).is_one());
        let rep = verify_plan(&plan, 0..100, 1 << 22);
        assert!(rep.coprime_ok);
        assert_eq!(rep.rows.len(), 200);
        assert!(rep.all_pass(), "some (m, j) divisibility check failed");
    });
}

/// Fifty reproducible random plans shared by criteria 3 and 4.
fn random_plans() -> Vec<CrtPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bases = [2u32, 3, 5, 10];
    let mut plans = Vec::new();
    while plans.len() < 50 {
        let base = bases[rng.gen_range(0..bases.len())];
        let k = rng.gen_range(1..=4u32);
        let j0 = rng.gen_range(0..=k);
        let floor = rng.gen_range(k as u64 + 1..=200);
        let mode = if rng.gen_bool(0.5) {
            PlanMode::PaperFaithful
        } else {
            PlanMode::ClaimedStrength
        };
        if let Ok(plan) = build_plan(base, k, j0, floor, mode) {
            plans.push(plan);
        }
    }
    plans
}

#[test]
fn criterion_3_randomized_construction_property() {
    report("criterion 3 (randomized construction property)", || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for plan in random_plans() {
            let target = (plan.base - 1) as u64;
            for _ in 0..20 {
                let m = rng.gen_range(0..1_000_000u64);
                for (j, slot) in plan.slots.iter().enumerate() {
                    let n = plan.progression_member(m, j as u32);
                    for &p in slot {
                        assert_eq!(
                            nt::valuation(&n, &BigUint::from(p)),
                            target,
                            "valuation off: base {} m {m} j {j} p {p}",
                            plan.base
                        );
                    }
                }
            }
        }
    });
}

#[test]
fn criterion_4_m0_existence() {
    report("criterion 4 (m0 existence at desk scale)", || {
        let mut hits = 0u32;
        for plan in random_plans() {
            let spec = SeriesSpec::new(plan.base, CoefficientRule::Constant(1)).unwrap();
            match find_m0(&plan, &spec, 10_000, TailRule::Off) {
                Ok(cert) => {
                    assert!(cert.m0 <= 10_000);
                    assert!(cert.primality.passes());
                    hits += 1;
                }
                Err(_) => {}
            }
        }
        assert!(hits >= 45, "only {hits} of 50 plans produced an m0");
    });
}

/// Independent value oracle: sum_{j >= 1} 1/(2^j - 1) computed directly,
/// with tail over j > cut bounded by 2^(1 - cut).
fn lambert_bracket(cut: u32) -> (BigRational, BigRational) {
    let mut s = BigRational::zero();
    for j in 1..=cut {
        let den = BigInt::from(2u32).pow(j) - 1;
        s += BigRational::new(BigInt::one(), den);
    }
    let eps = BigRational::new(BigInt::from(2), BigInt::from(2u32).pow(cut));
    let hi = &s + eps;
    (s, hi)
}

/// Fractional binary digit i (1-indexed) of a rational in [0, 2), provided
/// both ends of the bracket agree on it.
fn bracket_digit(lo: &BigRational, hi: &BigRational, i: u64) -> Option<u32> {
    let shift = |x: &BigRational| (x.numer() * BigInt::from(2u32).pow(i as u32)) / x.denom();
    let a = shift(lo);
    if a != shift(hi) {
        return None;
    }
    Some(a.mod_floor(&BigInt::from(2)).to_u32().unwrap())
}

#[test]
fn criterion_5_certified_digits() {
    report("criterion 5 (certified digits vs oracle)", || {
        let spec = SeriesSpec::new(2, CoefficientRule::Constant(1)).unwrap();
        let prefix = certified_prefix(&spec, 64, &SeriesBudget::default()).unwrap();
        assert!(prefix.met_target);
        assert!(prefix.certified_length >= 64);
        assert_eq!(prefix.digits.integer_part, BigUint::one());

        let (lo, hi) = lambert_bracket(200);
        // fractional part: integer part of the constant is 1
        let frac_lo = &lo - BigRational::from(BigInt::one());
        let frac_hi = &hi - BigRational::from(BigInt::one());
        assert!(frac_lo > BigRational::zero());

        // decimal spot check: 0.60669515...
        let dec = (frac_lo.numer() * BigInt::from(100_000_000u64)) / frac_lo.denom();
        assert_eq!(dec, BigInt::from(60_669_515u64));

        for i in 1..=prefix.certified_length.min(64) {
            let want = bracket_digit(&frac_lo, &frac_hi, i).expect("oracle digit unstable");
            assert_eq!(
                prefix.digits.digit_at(i),
                want,
                "digit {i} disagrees with the oracle"
            );
        }

        // monotone refinement: no certified digit ever flips
        let mut prev: Option<dseries_core::series::CertifiedPrefix> = None;
        for m in [64u64, 128, 256, 512] {
            let cur = certified_prefix_at(&spec, m, 64).unwrap();
            if let Some(p) = &prev {
                assert!(cur.certified_length >= p.certified_length);
                for i in 1..=p.certified_length {
                    assert_eq!(
                        cur.digits.digit_at(i),
                        p.digits.digit_at(i),
                        "certified digit {i} flipped between truncations"
                    );
                }
            }
            prev = Some(cur);
        }
    });
}

#[test]
fn criterion_6_tail_soundness() {
    report("criterion 6 (tail soundness)", || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let base = rng.gen_range(2..=10u32);
            let m = rng.gen_range(0..=30u64);
            let rule = match rng.gen_range(0..3) {
                0 => CoefficientRule::Constant(rng.gen_range(1..=3i64)),
                1 => CoefficientRule::Alternating,
                _ => CoefficientRule::Periodic(vec![1, -1, rng.gen_range(1..=2i64)]),
            };
            let spec = SeriesSpec::new(base, rule).unwrap();
            let window = rng.gen_range(1..=200u64);

            // exact window sum of |d(n) a_n| / b^n over m < n <= m + window
            let d = nt::divisor_sieve(m + window).unwrap();
            let mut sum = BigRational::zero();
            for n in m + 1..=m + window {
                let c = spec.coefficient(n).abs();
                sum += BigRational::new(
                    BigInt::from(d[(n - 1) as usize] as i64 * c),
                    BigInt::from(base).pow(n as u32),
                );
            }
            let bound = tail_upper_bound(base, m, spec.max_abs());
            assert!(sum <= bound, "window sum exceeds tail bound (b={base}, m={m})");

            // verdict stability under a 4x window budget
            let scale = rng.gen_range(0..3u32);
            let threshold = TailThreshold::plain(
                bound * BigRational::new(BigInt::from(1 + scale), BigInt::from(2)),
            );
            let tight = SeriesBudget {
                initial_window: 4,
                max_window: 64,
                ..SeriesBudget::default()
            };
            let roomy = SeriesBudget {
                initial_window: 4,
                max_window: 256,
                ..SeriesBudget::default()
            };
            let v1 = tail_compare(&spec, m, &threshold, &tight, None).unwrap().verdict;
            let v4 = tail_compare(&spec, m, &threshold, &roomy, None).unwrap().verdict;
            if v1 != TailVerdict::Unresolved {
                assert_eq!(v1, v4, "verdict flipped under larger budget");
            }
        }
    });
}

#[test]
fn criterion_7_irrationality_corroboration() {
    report("criterion 7 (irrationality corroboration)", || {
        let start = std::time::Instant::now();
        for rule in [CoefficientRule::Constant(1), CoefficientRule::Alternating] {
            let spec = SeriesSpec::new(2, rule).unwrap();
            let prefix = certified_prefix(&spec, 256, &SeriesBudget::default()).unwrap();
            assert!(prefix.met_target);
            let verdict = periodicity_scan(
                &prefix.digits,
                Certification::Certified(prefix.certified_length),
                64,
                64,
            )
            .unwrap();
            assert!(verdict.no_survivors(), "periodic candidate survived the scan");
        }

        // rational control: a finite series terminates in zeros and must survive
        let spec = SeriesSpec::new(2, CoefficientRule::Explicit(vec![1, 1, 1])).unwrap();
        let exact = certified_prefix(&spec, 8, &SeriesBudget::default()).unwrap();
        assert!(exact.exact);
        let padded = extend_exact(&exact.digits, 256);
        let verdict = periodicity_scan(&padded, Certification::Exact, 64, 64).unwrap();
        assert!(!verdict.no_survivors(), "rational control found no survivors");
        assert!(
            start.elapsed().as_secs() <= 60,
            "periodicity scans exceeded 60 s"
        );
    });
}

/// Naive reference scanner for the cross-check half of criterion 8.
fn naive_runs(digits: &[u32], min_len: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < digits.len() {
        if digits[i] != 0 {
            i += 1;
            continue;
        }
        let start = i;
        while i < digits.len() && digits[i] == 0 {
            i += 1;
        }
        if (i - start) as u64 >= min_len {
            out.push((start as u64 + 1, (i - start) as u64));
        }
    }
    out
}

#[test]
fn criterion_8_zero_run_machinery() {
    report("criterion 8 (zero-run machinery)", || {
        // synthetic k = 40 certificate: A = 1000, r = 101, j0 = 2, n* = 103
        let plan = CrtPlan {
            base: 2,
            k: 40,
            j0: 2,
            mode: PlanMode::ClaimedStrength,
            prime_floor: 40,
            slots: vec![Vec::new(); 40],
            a_modulus: BigUint::from(1000u64),
            residue: BigUint::from(101u64),
        };
        let cert = M0Certificate {
            plan,
            m0: 0,
            n_star: BigUint::from(103u64),
            primality: nt::check_prime(&BigUint::from(103u64)),
            slot_valuations: Vec::new(),
            searched: (0, 1),
            tail: TailStatus::Certified {
                cutoff: 141,
                threshold_exponent: 121,
                window_used: 0,
            },
        };
        let spec = SeriesSpec::new(2, CoefficientRule::Constant(1)).unwrap();
        let pred = predict_run_window(&cert, &spec, false).unwrap();
        assert_eq!(pred.start_lo, BigUint::from(101u64));
        assert_eq!(pred.start_hi, BigUint::from(103u64));
        assert_eq!(pred.guaranteed_run_length, 18);
        assert!(pred.preceded_by_nonzero);
        assert!(!pred.heuristic);

        // digit fixture: nonzero head, a 20-zero run starting at position 102
        let mut digits = vec![1u32; 130];
        for d in digits.iter_mut().take(121).skip(101) {
            *d = 0;
        }
        let ds = DigitString {
            base: 2,
            sign: 1,
            integer_part: BigUint::zero(),
            digits,
        };
        let runs = find_zero_runs(&ds, Certification::Certified(130), 18).unwrap();
        assert_eq!(runs.len(), 1);
        let run = &runs[0];
        let lo = pred.start_lo.to_u64().unwrap();
        let hi = pred.start_hi.to_u64().unwrap();
        assert!(run.start >= lo && run.start <= hi, "run outside predicted window");
        assert!(run.length >= pred.guaranteed_run_length as u64);
        assert!(run.preceded_by_nonzero);
        assert!(run.within_certified);

        // detector vs brute force on random strings
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let base = rng.gen_range(2..=10u32);
            let len = rng.gen_range(1..=64usize);
            let min_len = rng.gen_range(1..=4u64);
            // skew toward zeros so runs actually occur
            let digits: Vec<u32> = (0..len)
                .map(|_| if rng.gen_bool(0.6) { 0 } else { rng.gen_range(1..base) })
                .collect();
            let ds = DigitString {
                base,
                sign: 1,
                integer_part: BigUint::zero(),
                digits: digits.clone(),
            };
            let got: Vec<(u64, u64)> = find_zero_runs(&ds, Certification::Exact, min_len)
                .unwrap()
                .iter()
                .map(|r| (r.start, r.length))
                .collect();
            assert_eq!(got, naive_runs(&digits, min_len), "detector disagrees with brute force");
        }
    });
}

#[test]
fn criterion_9_census_integrity() {
    report("criterion 9 (census integrity)", || {
        let plan = build_plan(2, 2, 2, 4, PlanMode::ClaimedStrength).unwrap();
        let spec = SeriesSpec::new(2, CoefficientRule::Constant(1)).unwrap();
        let budget = SeriesBudget::default();
        let report = lemma1_census(&plan, &spec, 50, &budget).unwrap();
        assert_eq!(report.rows.len(), 50);
        assert_eq!(report.unresolved_count, 0);
        let mut above = 0u64;
        for row in &report.rows {
            assert_ne!(row.verdict, TailVerdict::Unresolved);
            // independent re-verification without the shared sieve
            let threshold = TailThreshold::power_scaled(
                BigRational::from(BigInt::from(row.threshold_num)),
                row.threshold_exp,
            );
            let again = tail_compare(&spec, row.cutoff, &threshold, &budget, None).unwrap();
            assert_eq!(again.verdict, row.verdict, "row m={} fails re-verification", row.m);
            if row.verdict == TailVerdict::Above {
                above += 1;
            }
        }
        assert_eq!(report.exceedance_count, above);
    });
}
