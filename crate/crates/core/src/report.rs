//! Structured pass/fail reports.
//!
//! Every numeric claim the toolkit makes is emitted as a [`Check`]: an id,
//! an anchor naming the domain fact being tested, the observed and expected
//! values, and the tolerance used. Anchors come from a closed catalog so
//! reports stay machine-diffable across versions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Closed catalog of facts a check can point at. Adding a variant here is
/// the only way to emit a new kind of check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    #[serde(rename = "metric.admissibility")]
    MetricAdmissibility,
    #[serde(rename = "metric.unit-speed")]
    MetricUnitSpeed,
    #[serde(rename = "metric.reversibility")]
    MetricReversibility,
    #[serde(rename = "metric.distortion")]
    MetricDistortion,
    #[serde(rename = "metric.distortion-reversibility-inequality")]
    MetricDistortionInequality,
    #[serde(rename = "katok.length-formula")]
    KatokLengthFormula,
    #[serde(rename = "katok.geodesic-count")]
    KatokGeodesicCount,
    #[serde(rename = "katok.index-values")]
    KatokIndexValues,
    #[serde(rename = "katok.nullity")]
    KatokNullity,
    #[serde(rename = "finder.catalog-recovery")]
    FinderCatalogRecovery,
    #[serde(rename = "finder.closure-residual")]
    FinderClosureResidual,
    #[serde(rename = "index.round-iterates")]
    IndexRoundIterates,
    #[serde(rename = "index.bott-lower-bound")]
    IndexBottLowerBound,
    #[serde(rename = "index.bott-monotonicity")]
    IndexBottMonotonicity,
    #[serde(rename = "index.symplectic-return")]
    IndexSymplecticReturn,
    #[serde(rename = "loopspace.free-loop-betti")]
    LoopFreeBetti,
    #[serde(rename = "loopspace.quotient-betti")]
    LoopQuotientBetti,
    #[serde(rename = "loopspace.unit-tangent-ranks")]
    LoopUnitTangentRanks,
    #[serde(rename = "loopspace.grassmannian-ranks")]
    LoopGrassmannianRanks,
    #[serde(rename = "loopspace.morse-inequalities")]
    LoopMorseInequalities,
    #[serde(rename = "loopspace.forced-sequence")]
    LoopForcedSequence,
    #[serde(rename = "loopspace.gamma-exclusion")]
    LoopGammaExclusion,
    #[serde(rename = "theorem.smallest-prime")]
    TheoremSmallestPrime,
    #[serde(rename = "theorem.prime-bound")]
    TheoremPrimeBound,
    #[serde(rename = "theorem.index-bound")]
    TheoremIndexBound,
    #[serde(rename = "theorem.divisibility-contradiction")]
    TheoremContradiction,
    #[serde(rename = "theorem.second-geodesic")]
    TheoremSecondGeodesic,
}

impl Anchor {
    pub fn as_str(self) -> &'static str {
        match self {
            Anchor::MetricAdmissibility => "metric.admissibility",
            Anchor::MetricUnitSpeed => "metric.unit-speed",
            Anchor::MetricReversibility => "metric.reversibility",
            Anchor::MetricDistortion => "metric.distortion",
            Anchor::MetricDistortionInequality => {
                "metric.distortion-reversibility-inequality"
            }
            Anchor::KatokLengthFormula => "katok.length-formula",
            Anchor::KatokGeodesicCount => "katok.geodesic-count",
            Anchor::KatokIndexValues => "katok.index-values",
            Anchor::KatokNullity => "katok.nullity",
            Anchor::FinderCatalogRecovery => "finder.catalog-recovery",
            Anchor::FinderClosureResidual => "finder.closure-residual",
            Anchor::IndexRoundIterates => "index.round-iterates",
            Anchor::IndexBottLowerBound => "index.bott-lower-bound",
            Anchor::IndexBottMonotonicity => "index.bott-monotonicity",
            Anchor::IndexSymplecticReturn => "index.symplectic-return",
            Anchor::LoopFreeBetti => "loopspace.free-loop-betti",
            Anchor::LoopQuotientBetti => "loopspace.quotient-betti",
            Anchor::LoopUnitTangentRanks => "loopspace.unit-tangent-ranks",
            Anchor::LoopGrassmannianRanks => "loopspace.grassmannian-ranks",
            Anchor::LoopMorseInequalities => "loopspace.morse-inequalities",
            Anchor::LoopForcedSequence => "loopspace.forced-sequence",
            Anchor::LoopGammaExclusion => "loopspace.gamma-exclusion",
            Anchor::TheoremSmallestPrime => "theorem.smallest-prime",
            Anchor::TheoremPrimeBound => "theorem.prime-bound",
            Anchor::TheoremIndexBound => "theorem.index-bound",
            Anchor::TheoremContradiction => "theorem.divisibility-contradiction",
            Anchor::TheoremSecondGeodesic => "theorem.second-geodesic",
        }
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Warn,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Pass => f.write_str("pass"),
            Status::Fail => f.write_str("fail"),
            Status::Warn => f.write_str("warn"),
        }
    }
}

/// Observed or expected quantity attached to a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
    Ints(Vec<i64>),
    Reals(Vec<f64>),
    /// Inclusive integer range, for quantities only known up to an interval.
    IntRange(i64, i64),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(k) => write!(f, "{k}"),
            Value::Real(x) => write!(f, "{x}"),
            Value::Text(s) => f.write_str(s),
            Value::Ints(v) => {
                let parts: Vec<String> = v.iter().map(|k| k.to_string()).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Value::Reals(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Value::IntRange(lo, hi) => write!(f, "[{lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tolerance {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "abs")]
    Abs(f64),
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Exact => f.write_str("exact"),
            Tolerance::Abs(t) => write!(f, "{t:e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub anchor: Anchor,
    pub status: Status,
    pub observed: Value,
    pub expected: Value,
    pub tolerance: Tolerance,
}

impl Check {
    pub fn new(
        id: impl Into<String>,
        anchor: Anchor,
        status: Status,
        observed: Value,
        expected: Value,
        tolerance: Tolerance,
    ) -> Self {
        Check { id: id.into(), anchor, status, observed, expected, tolerance }
    }

    /// Compare two reals under an absolute tolerance.
    pub fn real(
        id: impl Into<String>,
        anchor: Anchor,
        observed: f64,
        expected: f64,
        tol: f64,
    ) -> Self {
        let status = if (observed - expected).abs() <= tol && observed.is_finite() {
            Status::Pass
        } else {
            Status::Fail
        };
        Check::new(
            id,
            anchor,
            status,
            Value::Real(observed),
            Value::Real(expected),
            Tolerance::Abs(tol),
        )
    }

    /// Compare two integers exactly.
    pub fn int(id: impl Into<String>, anchor: Anchor, observed: i64, expected: i64) -> Self {
        let status = if observed == expected { Status::Pass } else { Status::Fail };
        Check::new(
            id,
            anchor,
            status,
            Value::Int(observed),
            Value::Int(expected),
            Tolerance::Exact,
        )
    }

    /// Pass iff the predicate already held; the values describe what was tested.
    pub fn flag(
        id: impl Into<String>,
        anchor: Anchor,
        ok: bool,
        observed: Value,
        expected: Value,
    ) -> Self {
        let status = if ok { Status::Pass } else { Status::Fail };
        Check::new(id, anchor, status, observed, expected, Tolerance::Exact)
    }

    pub fn warn(
        id: impl Into<String>,
        anchor: Anchor,
        observed: Value,
        expected: Value,
    ) -> Self {
        Check::new(id, anchor, Status::Warn, observed, expected, Tolerance::Exact)
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub warned: usize,
    pub status: Status,
}

/// A bag of checks plus the inputs that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub inputs: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub summary: Summary,
}

impl VerificationReport {
    pub fn new() -> Self {
        VerificationReport {
            inputs: BTreeMap::new(),
            checks: Vec::new(),
            summary: Summary {
                version: crate::VERSION.to_string(),
                total: 0,
                passed: 0,
                failed: 0,
                warned: 0,
                status: Status::Pass,
            },
        }
    }

    pub fn set_input(&mut self, key: impl Into<String>, value: Value) {
        self.inputs.insert(key.into(), value);
    }

    pub fn push(&mut self, check: Check) {
        match check.status {
            Status::Pass => self.summary.passed += 1,
            Status::Fail => self.summary.failed += 1,
            Status::Warn => self.summary.warned += 1,
        }
        self.summary.total += 1;
        self.summary.status = if self.summary.failed > 0 {
            Status::Fail
        } else if self.summary.warned > 0 {
            Status::Warn
        } else {
            Status::Pass
        };
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        for (k, v) in other.inputs {
            self.inputs.entry(k).or_insert(v);
        }
        for check in other.checks {
            self.push(check);
        }
    }

    /// True when no check failed (warnings allowed).
    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn find(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }
}

impl Default for VerificationReport {
    fn default() -> Self {
        VerificationReport::new()
    }
}
