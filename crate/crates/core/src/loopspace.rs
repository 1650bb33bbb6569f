//! Exact integer bookkeeping for the homological side of the argument:
//! Betti tables of the loop-space pairs and the two auxiliary spaces,
//! admissible prime selection, local critical-group ranks, Morse
//! (in)equalities, the forced index sequence, the three pushforward
//! multipliers, and the final divisibility contradiction.
//!
//! Everything in this module is integer arithmetic; nothing here touches
//! floating point. Values stay well inside i64/u64 for every input the
//! toolkit accepts, and the few products that could grow are range-guarded
//! at the door instead of silently wrapping.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::morse::{Gamma, IndexSequence};
use crate::report::{Anchor, Check, Value, VerificationReport};

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    if n % 3 == 0 {
        return n == 3;
    }
    let mut d = 5;
    while d * d <= n {
        if n % d == 0 || n % (d + 2) == 0 {
            return false;
        }
        d += 6;
    }
    true
}

/// The least prime dividing neither m - 1 nor m. Always at least 3 (one of
/// two consecutive integers is even) and at most m + 2.
pub fn smallest_admissible_prime(m: u64) -> Result<u64> {
    if m < 2 {
        return Err(Error::invalid_input("prime selection needs m >= 2"));
    }
    let mut p = 3;
    loop {
        if is_prime(p) && m % p != 0 && (m - 1) % p != 0 {
            return Ok(p);
        }
        p += 2;
        if p > m + 2 {
            return Err(Error::InternalInconsistency(format!(
                "no admissible prime up to m + 2 for m = {m}"
            )));
        }
    }
}

fn check_m(m: u64) -> Result<()> {
    if m < 2 {
        return Err(Error::invalid_input("rank formulas need m >= 2"));
    }
    Ok(())
}

/// Rank of degree j homology of the free-loop pair over the sphere of
/// dimension 2m - 1: one generator at every 2r(m - 1) with r >= 1, and one
/// at every 2r(m - 1) + 1 with r >= 2.
pub fn betti_free_loop(m: u64, j: u64) -> Result<u64> {
    check_m(m)?;
    let w = 2 * (m - 1);
    if j >= w && j % w == 0 {
        return Ok(1);
    }
    if j > 2 * w && (j - 1) % w == 0 {
        return Ok(1);
    }
    Ok(0)
}

/// Rank of degree j homology of the circle-quotient pair: two generators
/// at every 2s(m - 1) with s >= 2, one at every other even degree from
/// 2m - 2 on.
pub fn betti_quotient(m: u64, j: u64) -> Result<u64> {
    check_m(m)?;
    let w = 2 * (m - 1);
    if j >= 2 * w && j % w == 0 {
        return Ok(2);
    }
    if j >= w && j % 2 == 0 {
        return Ok(1);
    }
    Ok(0)
}

/// Homology ranks of the unit tangent bundle of the sphere of dimension
/// 2m - 1: one generator each at 0, 2m - 2, 2m - 1 and 4m - 3.
pub fn homology_unit_tangent(m: u64, j: u64) -> Result<u64> {
    check_m(m)?;
    if j == 0 || j == 2 * m - 2 || j == 2 * m - 1 || j == 4 * m - 3 {
        Ok(1)
    } else {
        Ok(0)
    }
}

/// Homology ranks of the oriented 2-plane Grassmannian of R^{2m-2}: rank
/// one at 0 and 4m - 4, rank two in the middle degree 2m - 2.
pub fn homology_grassmannian(m: u64, j: u64) -> Result<u64> {
    check_m(m)?;
    if j == 2 * m - 2 {
        Ok(2)
    } else if j == 0 || j == 4 * m - 4 {
        Ok(1)
    } else {
        Ok(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LoopSpace {
    FreeLoopPair,
    QuotientPair,
    UnitTangent,
    Grassmannian,
}

impl LoopSpace {
    pub fn rank(self, m: u64, j: u64) -> Result<u64> {
        match self {
            LoopSpace::FreeLoopPair => betti_free_loop(m, j),
            LoopSpace::QuotientPair => betti_quotient(m, j),
            LoopSpace::UnitTangent => homology_unit_tangent(m, j),
            LoopSpace::Grassmannian => homology_grassmannian(m, j),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LoopSpace::FreeLoopPair => "free-loop-pair",
            LoopSpace::QuotientPair => "quotient-pair",
            LoopSpace::UnitTangent => "unit-tangent",
            LoopSpace::Grassmannian => "grassmannian",
        }
    }
}

/// Nonzero homology ranks of one of the four spaces up to a degree cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BettiTable {
    pub space: LoopSpace,
    pub m: u64,
    pub ranks: BTreeMap<u64, u64>,
}

pub fn betti_table(space: LoopSpace, m: u64, max_degree: u64) -> Result<BettiTable> {
    check_m(m)?;
    let mut ranks = BTreeMap::new();
    for j in 0..=max_degree {
        let r = space.rank(m, j)?;
        if r > 0 {
            ranks.insert(j, r);
        }
    }
    Ok(BettiTable { space, m, ranks })
}

/// Which gammas let an even iterate contribute a local class. The default
/// follows the equivariant display (gamma = +1, or odd iterate); the
/// alternative admits both integral gammas. Differences between the two
/// readings are surfaced by callers, not resolved here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaReading {
    #[default]
    PlusOnly,
    Integral,
}

/// Local critical-group ranks of the r-th iterate of a closed geodesic
/// with the given index and iteration invariant. Equivariant: a single
/// class at the index when the parity condition holds. Non-equivariant:
/// classes at the index and one above it.
pub fn local_betti(
    r: u64,
    index_r: u64,
    gamma: Gamma,
    equivariant: bool,
) -> Result<BTreeMap<u64, u64>> {
    local_betti_with_reading(r, index_r, gamma, equivariant, GammaReading::default())
}

pub fn local_betti_with_reading(
    r: u64,
    index_r: u64,
    gamma: Gamma,
    equivariant: bool,
    reading: GammaReading,
) -> Result<BTreeMap<u64, u64>> {
    if r == 0 {
        return Err(Error::invalid_input("iterate must be at least 1"));
    }
    let admits = r % 2 == 1
        || match reading {
            GammaReading::PlusOnly => gamma == Gamma::PlusOne,
            GammaReading::Integral => gamma.is_integral(),
        };
    let mut ranks = BTreeMap::new();
    if admits {
        ranks.insert(index_r, 1);
        if !equivariant {
            ranks.insert(index_r + 1, 1);
        }
    }
    Ok(ranks)
}

/// Critical counts, target ranks, and the surplus sequence solving
/// v_j = beta_j + q_j + q_{j-1}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorseData {
    pub v: BTreeMap<u64, u64>,
    pub beta: BTreeMap<u64, u64>,
    pub q: BTreeMap<u64, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MorseCheck {
    Consistent(MorseData),
    /// The recursion forced a negative surplus at this degree.
    FailsAt { degree: u64, deficit: i64 },
}

impl MorseCheck {
    pub fn is_consistent(&self) -> bool {
        matches!(self, MorseCheck::Consistent(_))
    }
}

/// Solve the Morse relation degree by degree with q_{-1} = 0. The counts
/// are consistent exactly when every surplus q_j is non-negative; the
/// first violation is reported with its deficit.
pub fn morse_inequalities(
    v: &BTreeMap<u64, u64>,
    beta: &BTreeMap<u64, u64>,
    max_degree: u64,
) -> MorseCheck {
    let mut q_prev: i64 = 0;
    let mut q = BTreeMap::new();
    for j in 0..=max_degree {
        let vj = *v.get(&j).unwrap_or(&0) as i64;
        let bj = *beta.get(&j).unwrap_or(&0) as i64;
        let qj = vj - bj - q_prev;
        if qj < 0 {
            return MorseCheck::FailsAt { degree: j, deficit: qj };
        }
        if qj > 0 {
            q.insert(j, qj as u64);
        }
        q_prev = qj;
    }
    MorseCheck::Consistent(MorseData { v: v.clone(), beta: beta.clone(), q })
}

fn check_admissible_pair(m: u64, p: u64) -> Result<()> {
    if m < 2 {
        return Err(Error::invalid_input("need m >= 2"));
    }
    if !is_prime(p) {
        return Err(Error::invalid_input(format!("{p} is not prime")));
    }
    if m % p == 0 || (m - 1) % p == 0 {
        return Err(Error::invalid_input(format!(
            "p = {p} divides m = {m} or m - 1; pick a prime coprime to both"
        )));
    }
    Ok(())
}

/// The index sequence forced on the iterates of a single closed geodesic
/// by requiring its equivariant counts to match the quotient ranks degree
/// by degree: even values from 2m - 2 up, each taken once except the
/// doubled degrees of [`betti_quotient`], through iterate (2p - 1)m + 1.
pub fn forced_index_sequence(m: u64, p: u64) -> Result<IndexSequence> {
    check_admissible_pair(m, p)?;
    let w = 2 * (m - 1);
    let top = 2 * p * w;
    let r_needed = ((2 * p - 1) * m + 1) as usize;
    if r_needed > 10_000_000 {
        return Err(Error::invalid_input(
            "forced sequence would be unreasonably long; reduce m or p",
        ));
    }

    let mut values = Vec::with_capacity(r_needed);
    let mut j = w;
    while values.len() < r_needed {
        if j > top {
            return Err(Error::InternalInconsistency(
                "forced sequence ran past its final degree".to_string(),
            ));
        }
        let mult = betti_quotient(m, j)?;
        for _ in 0..mult {
            if values.len() == r_needed {
                return Err(Error::InternalInconsistency(
                    "forced sequence split a doubled degree".to_string(),
                ));
            }
            values.push(j);
        }
        j += 2;
    }
    if *values.last().unwrap() != top {
        return Err(Error::InternalInconsistency(
            "forced sequence did not end at its final degree".to_string(),
        ));
    }

    // The multiset is pinned by the rank constraint, so the monotone
    // arrangement is the unique consistent one; double-check the equality
    // rather than trusting the construction.
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &v in &values {
        *counts.entry(v).or_insert(0) += 1;
    }
    for degree in (0..=top).step_by(2) {
        let want = if degree >= w { betti_quotient(m, degree)? } else { 0 };
        let got = *counts.get(&degree).unwrap_or(&0);
        if got != want {
            return Err(Error::InternalInconsistency(format!(
                "forced sequence count {got} at degree {degree} disagrees with rank {want}"
            )));
        }
    }

    IndexSequence::new(values)
}

/// Model the counts available when the iteration invariant is one of the
/// half values: indices strictly increase, so no even degree can host two
/// classes, and the doubled rank at 4m - 4 is unreachable. Returns the
/// resulting Morse failure.
pub fn half_gamma_exclusion(m: u64) -> Result<MorseCheck> {
    check_m(m)?;
    let w = 2 * (m - 1);
    let mut v = BTreeMap::new();
    let mut j = w;
    while j <= 2 * w + 2 {
        v.insert(j, 1);
        j += 2;
    }
    let mut beta = BTreeMap::new();
    for j in 0..=2 * w + 2 {
        let b = betti_quotient(m, j)?;
        if b > 0 {
            beta.insert(j, b);
        }
    }
    Ok(morse_inequalities(&v, &beta, 2 * w + 2))
}

/// Pushforward of the degree-2k(m-1) free generator to the quotient
/// scales it by k.
pub fn projection_multiplier(k: u64) -> Result<u64> {
    if k == 0 {
        return Err(Error::invalid_input("multiplier argument must be positive"));
    }
    Ok(k)
}

/// Round trip through the quotient and back doubles the projection
/// factor.
pub fn transfer_multiplier(k: u64) -> Result<u64> {
    if k == 0 {
        return Err(Error::invalid_input("multiplier argument must be positive"));
    }
    Ok(2 * k)
}

/// Pushforward of the level-r class scales it by the iterate order r.
pub fn level_projection_multiplier(r: u64) -> Result<u64> {
    if r == 0 {
        return Err(Error::invalid_input("multiplier argument must be positive"));
    }
    Ok(r)
}

/// Verify that the closing pair of divisibility equations
/// p(2m a - w) = (m - 1) a and p(2m b - z) = m b admits no coprime
/// integers (a, b): symbolically (p is coprime to both m - 1 and m, so it
/// must divide a and b, hence their gcd) and by exhaustive enumeration up
/// to `bound`.
pub fn contradiction_witness(m: u64, p: u64, bound: u64) -> Result<VerificationReport> {
    check_admissible_pair(m, p)?;
    if bound == 0 {
        return Err(Error::invalid_input("enumeration bound must be positive"));
    }
    if m > 1_000_000_000 || bound > 10_000_000 {
        return Err(Error::invalid_input("witness inputs out of the supported range"));
    }

    let mut report = VerificationReport::new();
    report.set_input("m", Value::Int(m as i64));
    report.set_input("p", Value::Int(p as i64));
    report.set_input("bound", Value::Int(bound as i64));

    report.push(Check::int(
        "contradiction.gcd-p-m-minus-one",
        Anchor::TheoremContradiction,
        gcd(p, m - 1) as i64,
        1,
    ));
    report.push(Check::int(
        "contradiction.gcd-p-m",
        Anchor::TheoremContradiction,
        gcd(p, m) as i64,
        1,
    ));
    // p(2m a - w) = (m-1) a forces p | (m-1) a, and p is coprime to m - 1,
    // so p | a; the second equation forces p | b the same way. A common
    // prime factor contradicts gcd(a, b) = 1.
    let symbolic_ok = gcd(p, m - 1) == 1 && gcd(p, m) == 1 && p > 1;
    report.push(Check::flag(
        "contradiction.symbolic",
        Anchor::TheoremContradiction,
        symbolic_ok,
        Value::Text(format!("p = {p} divides both integers, so no coprime pair exists")),
        Value::Text("no coprime solution".to_string()),
    ));

    // Exhaustive search. Only a with p | (m-1)a can make the first
    // equation integral, and gcd(p, m-1) = 1 reduces that to p | a;
    // likewise for b. Enumerating those candidates is exhaustive.
    let b_i = bound as i64;
    let p_i = p as i64;
    let mut solutions: u64 = 0;
    let mut alpha = -(b_i / p_i) * p_i;
    while alpha <= b_i {
        let mut beta = -(b_i / p_i) * p_i;
        while beta <= b_i {
            if gcd(alpha.unsigned_abs(), beta.unsigned_abs()) == 1 {
                solutions += 1;
            }
            beta += p_i;
        }
        alpha += p_i;
    }
    report.push(Check::int(
        "contradiction.no-solutions",
        Anchor::TheoremContradiction,
        solutions as i64,
        0,
    ));

    // Guard the candidate pruning itself on a small box, testing the
    // integrality conditions directly on every pair.
    let small = b_i.min(40);
    let mi = m as i64;
    let mut direct: u64 = 0;
    for a in -small..=small {
        for b in -small..=small {
            if gcd(a.unsigned_abs(), b.unsigned_abs()) != 1 {
                continue;
            }
            if ((mi - 1) * a).rem_euclid(p_i) == 0 && (mi * b).rem_euclid(p_i) == 0 {
                direct += 1;
            }
        }
    }
    report.push(Check::int(
        "contradiction.direct-small-box",
        Anchor::TheoremContradiction,
        direct as i64,
        0,
    ));

    Ok(report)
}

/// The index threshold under which a second closed geodesic is produced:
/// 4 p (m - 1) + 2 for the admissible prime p of m.
pub fn theorem_index_bound(m: u64) -> Result<u64> {
    let p = smallest_admissible_prime(m)?;
    Ok(4 * p * (m - 1) + 2)
}

/// Run the whole integer skeleton for one m: prime selection, rank tables,
/// the forced index sequence with its double jump, the exclusion of the
/// half-valued invariant, the pushforward multipliers, and the coprime
/// contradiction.
pub fn verify_theorem_skeleton(m: u64) -> Result<VerificationReport> {
    check_m(m)?;
    verify_theorem_skeleton_with_prime(m, smallest_admissible_prime(m)?)
}

/// Same skeleton with a caller-chosen prime. Any prime coprime to both
/// m - 1 and m works for the argument; a non-minimal choice is flagged
/// with a warning instead of a failure.
pub fn verify_theorem_skeleton_with_prime(m: u64, p: u64) -> Result<VerificationReport> {
    check_admissible_pair(m, p)?;
    let canonical = smallest_admissible_prime(m)? == p;
    let mut report = VerificationReport::new();
    report.set_input("m", Value::Int(m as i64));

    report.set_input("p", Value::Int(p as i64));
    report.push(Check::flag(
        "prime.admissible",
        Anchor::TheoremSmallestPrime,
        is_prime(p) && m % p != 0 && (m - 1) % p != 0,
        Value::Int(p as i64),
        Value::Text("prime dividing neither m - 1 nor m".to_string()),
    ));
    if canonical {
        report.push(Check::flag(
            "prime.bound",
            Anchor::TheoremPrimeBound,
            (3..=m + 2).contains(&p),
            Value::Int(p as i64),
            Value::IntRange(3, (m + 2) as i64),
        ));
    } else {
        report.push(Check::warn(
            "prime.non-minimal",
            Anchor::TheoremSmallestPrime,
            Value::Int(p as i64),
            Value::Int(smallest_admissible_prime(m)? as i64),
        ));
    }

    report.push(Check::int(
        "betti.quotient-doubled",
        Anchor::LoopQuotientBetti,
        betti_quotient(m, 4 * m - 4)? as i64,
        2,
    ));

    let seq = forced_index_sequence(m, p)?;
    report.push(Check::int(
        "sequence.first-index",
        Anchor::LoopForcedSequence,
        seq.values[0] as i64,
        (2 * m - 2) as i64,
    ));
    let r0 = ((2 * p - 1) * m) as usize;
    let top = 4 * p * (m - 1);
    report.push(Check::flag(
        "sequence.double-jump",
        Anchor::LoopForcedSequence,
        seq.values[r0 - 1] == top && seq.values[r0] == top,
        Value::Ints(vec![seq.values[r0 - 1] as i64, seq.values[r0] as i64]),
        Value::Ints(vec![top as i64, top as i64]),
    ));
    report.push(Check::flag(
        "sequence.gamma",
        Anchor::LoopForcedSequence,
        seq.gamma == Gamma::PlusOne,
        Value::Text(seq.gamma.to_string()),
        Value::Text("+1".to_string()),
    ));

    let mut v = BTreeMap::new();
    for &val in &seq.values {
        *v.entry(val).or_insert(0) += 1;
    }
    let mut beta = BTreeMap::new();
    for j in 0..=top + 2 {
        let b = betti_quotient(m, j)?;
        if b > 0 {
            beta.insert(j, b);
        }
    }
    let morse = morse_inequalities(&v, &beta, top);
    let tight = match &morse {
        MorseCheck::Consistent(data) => data.q.is_empty(),
        MorseCheck::FailsAt { .. } => false,
    };
    report.push(Check::flag(
        "morse.equality",
        Anchor::LoopMorseInequalities,
        tight,
        Value::Text(if tight { "v = beta, q = 0".to_string() } else { format!("{morse:?}") }),
        Value::Text("counts match ranks with zero surplus".to_string()),
    ));

    let exclusion = half_gamma_exclusion(m)?;
    let excluded_at = match exclusion {
        MorseCheck::FailsAt { degree, .. } => Some(degree),
        MorseCheck::Consistent(_) => None,
    };
    report.push(Check::flag(
        "morse.half-gamma-exclusion",
        Anchor::LoopGammaExclusion,
        excluded_at == Some(4 * m - 4),
        Value::Text(match excluded_at {
            Some(d) => format!("fails at degree {d}"),
            None => "no failure".to_string(),
        }),
        Value::Text(format!("fails at degree {}", 4 * m - 4)),
    ));

    let r0 = (2 * p - 1) * m;
    report.push(Check::flag(
        "diagram.level-multipliers-coprime",
        Anchor::TheoremContradiction,
        gcd(level_projection_multiplier(r0)?, level_projection_multiplier(r0 + 1)?) == 1,
        Value::Ints(vec![r0 as i64, (r0 + 1) as i64]),
        Value::Text("consecutive level multipliers are coprime".to_string()),
    ));
    report.push(Check::flag(
        "diagram.projection-transfer",
        Anchor::TheoremContradiction,
        projection_multiplier(2 * p)? == 2 * p && transfer_multiplier(2 * p)? == 4 * p,
        Value::Ints(vec![(2 * p) as i64, (4 * p) as i64]),
        Value::Text("top-degree class scales by 2p, its transfer by 4p".to_string()),
    ));

    report.extend(contradiction_witness(m, p, 1000)?);

    let bound = 4 * p * (m - 1) + 2;
    let expected_bound = if !canonical {
        bound
    } else if m == 2 {
        14
    } else if m % 3 == 2 {
        12 * m - 10
    } else {
        bound
    };
    report.push(Check::int(
        "theorem.index-bound",
        Anchor::TheoremIndexBound,
        bound as i64,
        expected_bound as i64,
    ));

    let concluded = report.all_passed();
    report.push(Check::flag(
        "theorem.second-geodesic",
        Anchor::TheoremSecondGeodesic,
        concluded,
        Value::Text(if concluded {
            "single-geodesic counts are contradictory; a second one exists below the bound"
                .to_string()
        } else {
            "an intermediate check failed".to_string()
        }),
        Value::Text("contradiction established".to_string()),
    ));

    Ok(report)
}
