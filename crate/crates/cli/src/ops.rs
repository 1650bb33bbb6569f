//! The four commands. Each returns a verification report plus
//! pre-rendered CSV rows and a human table so the output layer stays
//! format-only.

use finsler_geodesics::dynamics::{
    self, ClosedGeodesicRecord, FinderOptions, GeodesicLabel, IndexRange,
};
use finsler_geodesics::loopspace::{self, LoopSpace};
use finsler_geodesics::morse;
use finsler_geodesics::report::{Anchor, Check, Status, Tolerance, Value, VerificationReport};
use finsler_geodesics::sphere::KillingField;
use finsler_geodesics::zermelo::ZermeloMetric;
use finsler_geodesics::{Error, Exec, Result};

pub struct CommandOutput {
    pub report: VerificationReport,
    pub csv: String,
    pub table: String,
}

fn index_cell(index: Option<IndexRange>) -> String {
    match index {
        None => String::new(),
        Some(r) if r.is_exact() => r.lo().to_string(),
        Some(r) => format!("{}..{}", r.lo(), r.hi()),
    }
}

fn index_value(r: IndexRange) -> Value {
    if r.is_exact() {
        Value::Int(r.lo() as i64)
    } else {
        Value::Ints(vec![r.lo() as i64, r.hi() as i64])
    }
}

fn closure_residual(field: &KillingField, rec: &ClosedGeodesicRecord) -> f64 {
    let end = dynamics::exact_flow(field, &rec.initial, rec.length);
    let dx = (end.x() - rec.initial.x()).norm();
    let dp = (end.p() - rec.initial.p()).norm();
    dx.hypot(dp)
}

pub fn katok(m: usize, weights: Vec<u64>, mu: f64) -> Result<CommandOutput> {
    let field = KillingField::new(m, weights.clone(), mu)?;
    let metric = ZermeloMetric::new(field.clone())?;

    let mut report = VerificationReport::new();
    report.set_input("command", Value::Text("katok".to_string()));
    report.set_input("m", Value::Int(m as i64));
    report.set_input("weights", Value::Ints(weights.iter().map(|&w| w as i64).collect()));
    report.set_input("mu", Value::Real(mu));

    report.push(Check::flag(
        "metric.admissible",
        Anchor::MetricAdmissibility,
        field.mu_a() < 1.0,
        Value::Real(field.mu_a()),
        Value::Text("mu a < 1".to_string()),
    ));

    let invariants = metric.invariants(1_500, Exec::default())?;
    let lambda = metric.reversibility_exact();
    let distortion = metric.distortion_exact();
    report.push(Check::real(
        "metric.reversibility",
        Anchor::MetricReversibility,
        invariants.reversibility,
        lambda,
        1e-6,
    ));
    report.push(Check::real(
        "metric.distortion",
        Anchor::MetricDistortion,
        invariants.distortion,
        distortion,
        1e-6,
    ));
    // The amplitude-based form uses a(p_1..p_m) where the definitional
    // value uses the pointwise sup of the field; show both and warn when
    // they disagree instead of failing.
    let quoted = invariants.distortion_claimed;
    if (quoted - distortion).abs() <= 1e-9 {
        report.push(Check::real(
            "metric.distortion-quoted",
            Anchor::MetricDistortion,
            quoted,
            distortion,
            1e-9,
        ));
    } else {
        report.push(Check::warn(
            "metric.distortion-quoted",
            Anchor::MetricDistortion,
            Value::Real(quoted),
            Value::Real(distortion),
        ));
    }
    report.push(Check::flag(
        "metric.distortion-squared-dominates",
        Anchor::MetricDistortionInequality,
        distortion * distortion + 1e-12 >= lambda,
        Value::Reals(vec![distortion * distortion, lambda]),
        Value::Text("D^2 >= lambda".to_string()),
    ));

    let mut records = dynamics::katok_closed_geodesics(&field)?;
    report.push(Check::int(
        "geodesic.count",
        Anchor::KatokGeodesicCount,
        records.len() as i64,
        2 * m as i64,
    ));

    for rec in &mut records {
        morse::annotate_record(&field, rec)?;
    }
    records.sort_by(|a, b| a.length.total_cmp(&b.length));

    for rec in &records {
        let label = rec.label.to_string();
        report.push(Check::real(
            format!("geodesic.{label}.closes"),
            Anchor::KatokLengthFormula,
            closure_residual(&field, rec),
            0.0,
            1e-9,
        ));
        if let GeodesicLabel::Plane { plane, positive } = rec.label {
            let (mode_index, mode_nullity) =
                morse::plane_orbit_mode_index(&field, plane, positive, rec.multiplicity)?;
            let idx = rec.index.expect("annotated above");
            report.push(Check::flag(
                format!("geodesic.{label}.index"),
                Anchor::KatokIndexValues,
                idx.contains(mode_index as u32),
                index_value(idx),
                Value::Int(mode_index as i64),
            ));
            report.push(Check::int(
                format!("geodesic.{label}.nullity"),
                Anchor::KatokNullity,
                rec.nullity.expect("annotated above") as i64,
                mode_nullity as i64,
            ));
        }
    }

    let bound = loopspace::theorem_index_bound(m as u64)?;
    let shortest: Vec<&ClosedGeodesicRecord> = records.iter().take(2).collect();
    let within = shortest.iter().all(|r| match r.index {
        Some(idx) => idx.hi() as u64 <= bound,
        None => false,
    });
    report.push(Check::flag(
        "theorem.shortest-below-bound",
        Anchor::TheoremIndexBound,
        within,
        Value::Ints(shortest.iter().map(|r| r.index.map_or(-1, |i| i.hi() as i64)).collect()),
        Value::Text(format!("indices of the two shortest <= {bound}")),
    ));

    let mut csv = String::from("label,length,index,nullity\n");
    for rec in &records {
        csv.push_str(&format!(
            "{},{:.9},{},{}\n",
            rec.label,
            rec.length,
            index_cell(rec.index),
            rec.nullity.map_or(String::new(), |n| n.to_string()),
        ));
    }

    let mut table = format!(
        "rotated metric on S^{}, weights {:?}, mu {}\n",
        2 * m - 1,
        weights,
        mu
    );
    table.push_str(&format!(
        "reversibility lambda: numeric {:.9}, closed form {:.9}\n",
        invariants.reversibility, lambda
    ));
    table.push_str(&format!(
        "distortion D:         numeric {:.9}, closed form {:.9}, amplitude form {:.9}\n",
        invariants.distortion, distortion, quoted
    ));
    table.push_str(&format!("index bound for the two shortest: {bound}\n"));
    for rec in &records {
        table.push_str(&format!(
            "  {:<5} length {:<12.9} index {:<6} nullity {}\n",
            rec.label.to_string(),
            rec.length,
            index_cell(rec.index),
            rec.nullity.map_or(String::new(), |n| n.to_string()),
        ));
    }

    Ok(CommandOutput { report, csv, table })
}

pub fn find(
    m: usize,
    weights: Vec<u64>,
    mu: f64,
    bound: f64,
    seeds: usize,
    tol: f64,
) -> Result<CommandOutput> {
    let field = KillingField::new(m, weights.clone(), mu)?;
    let opts = FinderOptions { length_bound: bound, seeds, tol, exec: Exec::default() };
    let outcome = dynamics::find_closed_geodesics(&field, &opts)?;
    let catalog = dynamics::katok_closed_geodesics(&field)?;
    let expected: Vec<&ClosedGeodesicRecord> =
        catalog.iter().filter(|r| r.length <= bound).collect();

    let mut report = VerificationReport::new();
    report.set_input("command", Value::Text("find".to_string()));
    report.set_input("m", Value::Int(m as i64));
    report.set_input("weights", Value::Ints(weights.iter().map(|&w| w as i64).collect()));
    report.set_input("mu", Value::Real(mu));
    report.set_input("bound", Value::Real(bound));
    report.set_input("seeds", Value::Int(seeds as i64));
    report.set_input("tol", Value::Real(tol));

    let match_tol = 1e-6f64.max(10.0 * tol);
    report.push(Check::int(
        "finder.count",
        Anchor::FinderCatalogRecovery,
        outcome.records.len() as i64,
        expected.len() as i64,
    ));
    for exp in &expected {
        let label = exp.label.to_string();
        let hit = outcome
            .records
            .iter()
            .find(|r| (r.length - exp.length).abs() <= match_tol);
        report.push(Check::flag(
            format!("finder.recovered.{label}"),
            Anchor::FinderCatalogRecovery,
            hit.is_some(),
            match hit {
                Some(r) => Value::Real(r.length),
                None => Value::Text("missing".to_string()),
            },
            Value::Real(exp.length),
        ));
    }
    for rec in &outcome.records {
        let extra = !expected.iter().any(|e| (rec.length - e.length).abs() <= match_tol);
        if extra {
            report.push(Check::flag(
                format!("finder.extra.{}", rec.label),
                Anchor::FinderCatalogRecovery,
                false,
                Value::Real(rec.length),
                Value::Text("not in the closed-form catalog".to_string()),
            ));
        }
    }

    let max_residual = outcome
        .records
        .iter()
        .map(|r| closure_residual(&field, r))
        .fold(0.0f64, f64::max);
    report.push(Check::real(
        "finder.closure-residual",
        Anchor::FinderClosureResidual,
        max_residual,
        0.0,
        100.0 * tol,
    ));

    for (i, warning) in outcome.warnings.iter().enumerate() {
        report.push(Check::warn(
            format!("finder.warning.{i}"),
            Anchor::FinderCatalogRecovery,
            Value::Text(warning.clone()),
            Value::Text("none".to_string()),
        ));
    }

    let mut csv = String::from("label,length,matched\n");
    for rec in &outcome.records {
        let matched = expected.iter().any(|e| (rec.length - e.length).abs() <= match_tol);
        csv.push_str(&format!("{},{:.9},{}\n", rec.label, rec.length, matched));
    }

    let mut table = format!(
        "recovered {} of {} catalog orbits below length {} from {} seeds\n",
        outcome
            .records
            .iter()
            .filter(|r| expected.iter().any(|e| (r.length - e.length).abs() <= match_tol))
            .count(),
        expected.len(),
        bound,
        outcome.seeds_tried,
    );
    for rec in &outcome.records {
        table.push_str(&format!("  {:<5} length {:.9}\n", rec.label.to_string(), rec.length));
    }
    for warning in &outcome.warnings {
        table.push_str(&format!("  warning: {warning}\n"));
    }

    Ok(CommandOutput { report, csv, table })
}

pub fn loopspace_tables(m: u64, max_degree: u64) -> Result<CommandOutput> {
    let mut report = VerificationReport::new();
    report.set_input("command", Value::Text("loopspace".to_string()));
    report.set_input("m", Value::Int(m as i64));
    report.set_input("max_degree", Value::Int(max_degree as i64));

    let spaces = [
        (LoopSpace::FreeLoopPair, Anchor::LoopFreeBetti),
        (LoopSpace::QuotientPair, Anchor::LoopQuotientBetti),
        (LoopSpace::UnitTangent, Anchor::LoopUnitTangentRanks),
        (LoopSpace::Grassmannian, Anchor::LoopGrassmannianRanks),
    ];

    let mut csv = String::from("space,degree,rank\n");
    let mut table = String::new();
    for (space, anchor) in spaces {
        let t = loopspace::betti_table(space, m, max_degree)?;
        let dense: Vec<i64> =
            (0..=max_degree).map(|j| *t.ranks.get(&j).unwrap_or(&0) as i64).collect();
        report.push(Check::new(
            format!("table.{}", space.name()),
            anchor,
            Status::Pass,
            Value::Ints(dense.clone()),
            Value::Ints(dense),
            Tolerance::Exact,
        ));
        table.push_str(&format!("{} (nonzero ranks up to degree {max_degree}):\n", space.name()));
        if t.ranks.is_empty() {
            table.push_str("  none\n");
        }
        for (j, r) in &t.ranks {
            csv.push_str(&format!("{},{},{}\n", space.name(), j, r));
            table.push_str(&format!("  degree {j}: rank {r}\n"));
        }
    }

    report.push(Check::flag(
        "table.pair-tables-vanish-at-zero",
        Anchor::LoopFreeBetti,
        loopspace::betti_free_loop(m, 0)? == 0 && loopspace::betti_quotient(m, 0)? == 0,
        Value::Ints(vec![
            loopspace::betti_free_loop(m, 0)? as i64,
            loopspace::betti_quotient(m, 0)? as i64,
        ]),
        Value::Ints(vec![0, 0]),
    ));
    if 4 * m - 4 <= max_degree {
        report.push(Check::int(
            "table.quotient-doubled",
            Anchor::LoopQuotientBetti,
            loopspace::betti_quotient(m, 4 * m - 4)? as i64,
            2,
        ));
    }

    Ok(CommandOutput { report, csv, table })
}

fn parse_m_range(spec: &str) -> Result<(u64, u64)> {
    let parse_one = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| Error::InvalidInput(format!("cannot parse '{s}' as an integer")))
    };
    let (lo, hi) = match spec.split_once("..") {
        Some((a, b)) => (parse_one(a)?, parse_one(b.trim_start_matches('='))?),
        None => {
            let v = parse_one(spec)?;
            (v, v)
        }
    };
    if lo < 2 {
        return Err(Error::InvalidInput("the range must start at m >= 2".to_string()));
    }
    if hi < lo {
        return Err(Error::InvalidInput(format!("empty range {lo}..{hi}")));
    }
    if hi - lo > 100_000 {
        return Err(Error::InvalidInput("range too large; cap is 100000 values".to_string()));
    }
    Ok((lo, hi))
}

pub fn theorem(m_spec: &str, p_override: Option<u64>) -> Result<CommandOutput> {
    let (lo, hi) = parse_m_range(m_spec)?;

    let mut report = VerificationReport::new();
    report.set_input("command", Value::Text("theorem".to_string()));
    report.set_input(
        "m",
        if lo == hi { Value::Int(lo as i64) } else { Value::IntRange(lo as i64, hi as i64) },
    );
    if let Some(p) = p_override {
        report.set_input("p", Value::Int(p as i64));
    }

    let mut csv = String::from("m,p,index_bound,failed_checks,status\n");
    let mut table = String::new();
    for m in lo..=hi {
        let sub = match p_override {
            Some(p) => loopspace::verify_theorem_skeleton_with_prime(m, p)?,
            None => loopspace::verify_theorem_skeleton(m)?,
        };
        let p_used = match sub.inputs.get("p") {
            Some(Value::Int(p)) => *p,
            _ => -1,
        };
        let bound = match sub.find("theorem.index-bound").map(|c| &c.observed) {
            Some(Value::Int(b)) => *b,
            _ => -1,
        };
        let ok = sub.all_passed();
        csv.push_str(&format!(
            "{m},{p_used},{bound},{},{}\n",
            sub.summary.failed,
            if ok { "pass" } else { "fail" }
        ));
        table.push_str(&format!(
            "m = {m}: p = {p_used}, index bound {bound}, {}\n",
            if ok { "contradiction established" } else { "FAILED" }
        ));
        if lo == hi {
            report.extend(sub);
        } else {
            for check in sub.checks {
                report.push(Check { id: format!("m{m}.{}", check.id), ..check });
            }
        }
    }

    Ok(CommandOutput { report, csv, table })
}
