//! Morse data for closed geodesics: conjugate points, index and nullity,
//! linearized return maps, and iteration (Bott) bookkeeping.
//!
//! The index of a closed geodesic splits as the number of conjugate points
//! in the open parameter interval, counted with multiplicity, plus the
//! index of a finite dimensional concavity form built from the linearized
//! return data. Conjugate points are located by integrating the
//! variational flow once with dense output and scanning the smallest
//! singular value of the matrix of momentum-start variations, projected
//! off the orbit direction; candidate dips are refined by golden-section
//! search and classified against the global singular-value scale. The
//! return map is computed on an orthonormal transversal to the constraint
//! gradients and the flow direction, and is rejected unless it preserves
//! the restricted symplectic form to 1e-8.
//!
//! Everything here assumes the orbit keeps the perpendicular splitting
//! invariant, which holds for the rotation-invariant plane orbits and
//! their iterates; other orbits are rejected rather than silently
//! mishandled. Conjugate-point dips are assumed to be separated by more
//! than the scan step (a twentieth of a half-turn), which is comfortable
//! for this family where consecutive crossings are a half-turn apart.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector, Schur};
use rand::Rng;
use serde::Serialize;

use crate::dynamics::{
    flow_vector, ClosedGeodesicRecord, GeodesicState, IndexRange, VariationalFlow,
    DEFAULT_INTEGRATION_TOL,
};
use crate::error::{Error, Result};
use crate::minimize::golden_min;
use crate::ode::{integrate, integrate_final, OdeOptions, OdeSolution};
use crate::report::{Anchor, Check, Value, VerificationReport};
use crate::sphere::KillingField;

/// Grid step for the singular-value scan.
const SCAN_STEP: f64 = PI / 40.0;
/// How far past the requested endpoint the scan looks, so crossings at or
/// just beyond the endpoint are seen and classified.
const SCAN_OVERSHOOT: f64 = 0.15;
/// Crossings closer than this to the endpoint are boundary cases.
const BOUNDARY_WINDOW: f64 = 1e-8;
/// Singular values below this fraction of the global scale count as zero.
const KERNEL_FRAC: f64 = 1e-7;
/// Refined dips below this fraction (but above `KERNEL_FRAC`) are
/// unresolvable: too small to ignore, too large to be crossings.
const SUSPICIOUS_FRAC: f64 = 1e-4;
/// A grid local minimum must dip below this fraction of the scale to be
/// worth refining.
const DIP_GATE: f64 = 0.25;
/// Ignore minima this close to the start, where the variations vanish by
/// construction.
const MIN_CROSSING_TIME: f64 = 0.05;
/// Singular values of (M - I) below this count toward the nullity.
const NULLITY_TOL: f64 = 1e-6;
/// Maximum allowed entrywise defect of M^T O M - O.
const SYMPLECTIC_TOL: f64 = 1e-8;
/// Relative residual allowed when expressing the returned variations in
/// the transversal-plus-flow frame.
const FRAME_RESIDUAL_TOL: f64 = 1e-6;

/// Index of the k-th iterate of a great circle on the round sphere of
/// dimension 2m - 1: (4k - 2)(m - 1).
pub fn round_index(m: usize, k: usize) -> Result<u64> {
    if m < 2 {
        return Err(Error::invalid_input("round index needs m >= 2"));
    }
    if k < 1 {
        return Err(Error::invalid_input("round index needs iterate k >= 1"));
    }
    Ok((4 * k as u64 - 2) * (m as u64 - 1))
}

/// Nullity of the k-th iterate of a round great circle, independent of k.
pub fn round_nullity(m: usize) -> Result<u64> {
    if m < 2 {
        return Err(Error::invalid_input("round nullity needs m >= 2"));
    }
    Ok(4 * (m as u64 - 1))
}

/// The four-valued iteration invariant attached to a closed geodesic by
/// the parities of ind(c) and ind(c^2) - ind(c).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Gamma {
    #[serde(rename = "+1")]
    PlusOne,
    #[serde(rename = "-1")]
    MinusOne,
    #[serde(rename = "+1/2")]
    PlusHalf,
    #[serde(rename = "-1/2")]
    MinusHalf,
}

impl Gamma {
    pub fn value(self) -> f64 {
        match self {
            Gamma::PlusOne => 1.0,
            Gamma::MinusOne => -1.0,
            Gamma::PlusHalf => 0.5,
            Gamma::MinusHalf => -0.5,
        }
    }

    /// True for +1 and -1, false for the half values.
    pub fn is_integral(self) -> bool {
        matches!(self, Gamma::PlusOne | Gamma::MinusOne)
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Gamma::PlusOne | Gamma::PlusHalf)
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::PlusOne => f.write_str("+1"),
            Gamma::MinusOne => f.write_str("-1"),
            Gamma::PlusHalf => f.write_str("+1/2"),
            Gamma::MinusHalf => f.write_str("-1/2"),
        }
    }
}

/// Determine gamma from ind(c) and ind(c^2): integral iff the difference
/// is even, positive iff ind(c) is even.
pub fn gamma_invariant(first: u64, second: u64) -> Gamma {
    let diff_even = (second as i64 - first as i64) % 2 == 0;
    let base_even = first % 2 == 0;
    match (diff_even, base_even) {
        (true, true) => Gamma::PlusOne,
        (true, false) => Gamma::MinusOne,
        (false, true) => Gamma::PlusHalf,
        (false, false) => Gamma::MinusHalf,
    }
}

/// Indices of the iterates c, c^2, ..., c^R of one closed geodesic,
/// together with the derived iteration invariant.
///
/// Construction only needs the list; whether the list actually satisfies
/// the Bott iteration inequalities is the job of [`bott_checks`], so that
/// defective sequences can be fed to the checker and reported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexSequence {
    pub base_index: u64,
    pub values: Vec<u64>,
    pub gamma: Gamma,
}

impl IndexSequence {
    pub fn new(values: Vec<u64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid_input(
                "an index sequence needs at least ind(c) and ind(c^2)",
            ));
        }
        let base_index = values[0];
        let gamma = gamma_invariant(values[0], values[1]);
        Ok(IndexSequence { base_index, values, gamma })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Check the Bott iteration inequalities on an index sequence: every
/// iterate index at least the base index, and (separately) monotonicity
/// in the iterate order.
pub fn bott_checks(seq: &IndexSequence) -> VerificationReport {
    let mut report = VerificationReport::new();
    report.set_input("base_index", Value::Int(seq.base_index as i64));
    report.set_input(
        "values",
        Value::Ints(seq.values.iter().map(|&v| v as i64).collect()),
    );
    report.set_input("gamma", Value::Text(seq.gamma.to_string()));

    let observed = Value::Ints(seq.values.iter().map(|&v| v as i64).collect());

    let lower = seq.values.iter().all(|&v| v >= seq.base_index);
    report.push(Check::flag(
        "bott.lower-bound",
        Anchor::IndexBottLowerBound,
        lower,
        observed.clone(),
        Value::Text(format!("every iterate index >= {}", seq.base_index)),
    ));

    let monotone = seq.values.windows(2).all(|w| w[1] >= w[0]);
    report.push(Check::flag(
        "bott.monotonicity",
        Anchor::IndexBottMonotonicity,
        monotone,
        observed,
        Value::Text("nondecreasing in the iterate".to_string()),
    ));

    report
}

/// Linearization of the return map of a closed orbit, restricted to a
/// transversal of the constraint set and reduced by the flow direction.
#[derive(Debug, Clone, Serialize)]
pub struct LinearizedReturnData {
    pub monodromy: DMatrix<f64>,
    /// Arguments of the monodromy eigenvalues, normalized to [0, 2pi) and
    /// sorted.
    pub eigen_angles: Vec<f64>,
    /// Entrywise norm of M^T O M - O on the transversal.
    pub symplectic_defect: f64,
    /// Dimension of the numerical kernel of M - I.
    pub nullity: u32,
}

fn omega_pairing(d: usize, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        s += a[i] * b[d + i] - a[d + i] * b[i];
    }
    s
}

/// Orthonormalize `seeds` and extend the result with coordinate directions
/// until it has `total` vectors of dimension `dim`.
fn orthonormal_extension(
    seeds: &[DVector<f64>],
    dim: usize,
    total: usize,
) -> Result<Vec<DVector<f64>>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(total);
    for s in seeds {
        let mut v = s.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let n = v.norm();
        if n < 1e-10 * s.norm().max(1.0) {
            return Err(Error::InternalInconsistency(
                "dependent seed vectors in orthonormal extension".to_string(),
            ));
        }
        basis.push(v / n);
    }
    let mut i = 0;
    while basis.len() < total && i < dim {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let n = v.norm();
        if n > 1e-6 {
            basis.push(v / n);
        }
        i += 1;
    }
    if basis.len() < total {
        return Err(Error::InternalInconsistency(
            "could not complete the orthonormal extension".to_string(),
        ));
    }
    Ok(basis)
}

/// Compute the linearized return map of a closed orbit over its full
/// length. The transversal is the orthogonal complement of the three
/// constraint gradients (sphere, orthogonality, unit energy) and the flow
/// direction; returned variations are re-expressed in that frame with the
/// flow component quotiented out.
pub fn linearized_return_map(
    field: &KillingField,
    record: &ClosedGeodesicRecord,
) -> Result<LinearizedReturnData> {
    let d = field.ambient_dim();
    let nt = 2 * d - 4;
    let state = &record.initial;
    let x = state.x();
    let p = state.p();
    let (dx, dp) = flow_vector(field, x, p);

    let stack = |a: &DVector<f64>, b: &DVector<f64>| {
        let mut v = DVector::zeros(2 * d);
        v.rows_mut(0, d).copy_from(a);
        v.rows_mut(d, d).copy_from(b);
        v
    };
    let zero = DVector::zeros(d);
    // Gradients of |x|^2/2, <x, p> and the energy, then the flow itself.
    let seeds = [
        stack(x, &zero),
        stack(p, x),
        stack(&(-&dp), &dx),
        stack(&dx, &dp),
    ];
    let frame = orthonormal_extension(&seeds, 2 * d, 2 * d)?;
    let transversal = &frame[4..];
    debug_assert_eq!(transversal.len(), nt);
    let flow_dir = &frame[3];

    let sys = VariationalFlow { field, n_vars: nt };
    let mut y0 = vec![0.0; 2 * d * (1 + nt)];
    y0[..d].copy_from_slice(x.as_slice());
    y0[d..2 * d].copy_from_slice(p.as_slice());
    for (k, b) in transversal.iter().enumerate() {
        let off = 2 * d * (1 + k);
        y0[off..off + 2 * d].copy_from_slice(b.as_slice());
    }
    let opts = OdeOptions {
        rtol: DEFAULT_INTEGRATION_TOL,
        atol: DEFAULT_INTEGRATION_TOL,
        ..OdeOptions::default()
    };
    let y_end = integrate_final(&sys, &y0, 0.0, record.length, &opts)?;

    let mut returned = DMatrix::zeros(2 * d, nt);
    for k in 0..nt {
        let off = 2 * d * (1 + k);
        for i in 0..2 * d {
            returned[(i, k)] = y_end[off + i];
        }
    }

    // Solve [transversal | flow] * Z = returned in the least-squares
    // sense; dropping the flow row of Z quotients out the drift along the
    // orbit.
    let mut frame_mat = DMatrix::zeros(2 * d, nt + 1);
    for (k, b) in transversal.iter().enumerate() {
        frame_mat.column_mut(k).copy_from(b);
    }
    frame_mat.column_mut(nt).copy_from(flow_dir);
    let svd = frame_mat.clone().svd(true, true);
    let z = svd
        .solve(&returned, 1e-12)
        .map_err(|e| Error::NumericalFailure(format!("return frame solve failed: {e}")))?;
    let residual = (&frame_mat * &z - &returned).norm();
    if residual > FRAME_RESIDUAL_TOL * returned.norm().max(1.0) {
        return Err(Error::NumericalFailure(format!(
            "returned variations leave the constraint transversal (residual {residual:.3e})"
        )));
    }
    let monodromy = z.rows(0, nt).into_owned();

    let mut form = DMatrix::zeros(nt, nt);
    for k in 0..nt {
        for l in 0..nt {
            form[(k, l)] = omega_pairing(d, &transversal[k], &transversal[l]);
        }
    }
    let defect = (monodromy.transpose() * &form * &monodromy - &form).amax();
    if defect > SYMPLECTIC_TOL {
        return Err(Error::NumericalFailure(format!(
            "return map symplectic defect {defect:.3e} exceeds {SYMPLECTIC_TOL:.0e}"
        )));
    }

    let eigen_angles = return_spectrum_angles(&monodromy)?;

    let nullity = (monodromy.clone() - DMatrix::identity(nt, nt))
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s < NULLITY_TOL)
        .count() as u32;

    Ok(LinearizedReturnData { monodromy, eigen_angles, symplectic_defect: defect, nullity })
}

/// Eigenvalue arguments of the return map, sorted ascending in [0, 2 pi).
///
/// The Francis iteration behind the general eigensolver cycles forever on
/// the tied unit-circle pairs these catalogs routinely produce (two
/// identical rotation blocks is the norm, not the exception, once m >= 3),
/// and conjugating the matrix does not help because the stall is a
/// property of the spectrum. Near-normal maps therefore bypass it: for a
/// normal matrix with unit-circle spectrum the symmetric part has
/// eigenvalues cos(theta) with matching multiplicities, the symmetric
/// eigensolver cannot stall, and conjugate symmetry recovers the signs.
/// Everything else gets a bounded Schur budget plus randomized restarts.
/// Maps within 1e-8 of the identity short-circuit to zero angles: the
/// identity is normal, so by Bauer-Fike every eigenvalue sits within that
/// distance of 1.
fn return_spectrum_angles(monodromy: &DMatrix<f64>) -> Result<Vec<f64>> {
    let nt = monodromy.nrows();
    if (monodromy - DMatrix::identity(nt, nt)).norm() <= 1e-8 {
        return Ok(vec![0.0; nt]);
    }
    let scale = monodromy.norm();
    let commutator =
        (monodromy * monodromy.transpose() - monodromy.transpose() * monodromy).norm();
    if commutator <= 1e-8 * scale * scale {
        if let Some(v) = normal_spectrum_angles(monodromy) {
            return Ok(v);
        }
    }
    let angles = |eig: nalgebra::DVector<nalgebra::Complex<f64>>| {
        let mut v: Vec<f64> = eig
            .iter()
            .map(|z| {
                let a = z.arg();
                if a < 0.0 {
                    a + 2.0 * PI
                } else {
                    a
                }
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v
    };
    if let Some(schur) = Schur::try_new(monodromy.clone(), f64::EPSILON, 20_000) {
        return Ok(angles(schur.complex_eigenvalues()));
    }
    // Conjugating by a random orthogonal matrix preserves the spectrum
    // exactly but reshuffles the rounding, which is sometimes enough.
    let mut rng = crate::sampling::seeded_rng(0x5c400);
    for _ in 0..4 {
        let g = DMatrix::from_fn(nt, nt, |_, _| rng.gen_range(-1.0..1.0));
        let q = g.qr().q();
        let conj = q.transpose() * monodromy * &q;
        if let Some(schur) = Schur::try_new(conj, f64::EPSILON, 20_000) {
            return Ok(angles(schur.complex_eigenvalues()));
        }
    }
    Err(Error::NumericalFailure(
        "return map spectrum did not converge under restarts".to_string(),
    ))
}

/// Angles of a near-normal map via its symmetric part. The cosines of a
/// symplectic spectrum come in equal interior pairs (conjugate
/// eigenvalues), which split as theta and 2 pi - theta; cosines at the
/// +-1 edges map to 0 and pi directly. Returns None if the pairing
/// assumption is visibly broken so the caller can fall back.
fn normal_spectrum_angles(monodromy: &DMatrix<f64>) -> Option<Vec<f64>> {
    let sym = (monodromy + monodromy.transpose()) * 0.5;
    let mut cosines: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    cosines.sort_by(|a, b| b.total_cmp(a));
    let mut thetas: Vec<f64> = cosines.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect();
    let edge = 1e-5;
    let mut out = Vec::with_capacity(thetas.len());
    let mut i = 0;
    while i < thetas.len() {
        let t = thetas[i];
        if t < edge || t > PI - edge {
            out.push(t);
            i += 1;
            continue;
        }
        if i + 1 >= thetas.len() || (thetas[i + 1] - t).abs() > 1e-4 {
            return None;
        }
        let mean = 0.5 * (t + thetas[i + 1]);
        out.push(mean);
        out.push(2.0 * PI - mean);
        i += 2;
    }
    out.sort_by(f64::total_cmp);
    Some(out)
}

/// One dense integration of the variational flow along an orbit, carrying
/// position-start and momentum-start variations for every direction
/// perpendicular to the orbit plane.
struct OrbitVariations<'a> {
    field: &'a KillingField,
    d: usize,
    n_perp: usize,
    rho: f64,
    perp: Vec<DVector<f64>>,
    sol: OdeSolution,
}

impl OrbitVariations<'_> {
    fn eval(&self, t: f64, buf: &mut Vec<f64>) -> Result<()> {
        buf.resize(self.sol.y_end.len(), 0.0);
        self.sol.eval(t, buf)
    }

    /// Singular values (descending) of the momentum-start variation block,
    /// projected off the position and velocity directions at time t.
    fn sigmas(&self, y: &[f64]) -> DVector<f64> {
        let d = self.d;
        let x = DVector::from_column_slice(&y[..d]);
        let p = DVector::from_column_slice(&y[d..2 * d]);
        let mut vel = &p / p.norm();
        vel += self.field.generator_apply(&x);
        let xh = &x / x.norm();
        let vh = &vel / vel.norm();

        let mut mat = DMatrix::zeros(d, self.n_perp);
        for k in 0..self.n_perp {
            let off = 2 * d * (1 + self.n_perp + k);
            let mut col = DVector::from_column_slice(&y[off..off + d]);
            let cx = xh.dot(&col);
            col.axpy(-cx, &xh, 1.0);
            let cv = vh.dot(&col);
            col.axpy(-cv, &vh, 1.0);
            mat.column_mut(k).copy_from(&col);
        }
        mat.svd(false, false).singular_values
    }

    fn smallest_sigma(&self, t: f64, buf: &mut Vec<f64>) -> f64 {
        if self.eval(t, buf).is_err() {
            return f64::INFINITY;
        }
        let s = self.sigmas(buf);
        s[s.len() - 1]
    }

    /// Endpoint blocks of the linearized flow in the perpendicular frame,
    /// in (position, momentum / rho) coordinates: columns of a and c come
    /// from position starts, columns of b and d from momentum starts.
    #[allow(clippy::type_complexity)]
    fn endpoint_blocks(
        &self,
        t: f64,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let d = self.d;
        let n = self.n_perp;
        let mut y = Vec::new();
        self.eval(t, &mut y)?;

        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        let mut c = DMatrix::zeros(n, n);
        let mut dd = DMatrix::zeros(n, n);
        for k in 0..2 * n {
            let off = 2 * d * (1 + k);
            let vx = DVector::from_column_slice(&y[off..off + d]);
            let vp = DVector::from_column_slice(&y[off + d..off + 2 * d]);
            // The orbit must come back to its starting frame for the
            // endpoint comparison to make sense.
            let mut rx = 0.0;
            let mut rp = 0.0;
            for (i, e) in self.perp.iter().enumerate() {
                let px = e.dot(&vx);
                let pp = e.dot(&vp);
                rx += px * px;
                rp += pp * pp;
                if k < n {
                    a[(i, k)] = px;
                    c[(i, k)] = pp / self.rho;
                } else {
                    b[(i, k - n)] = px;
                    dd[(i, k - n)] = pp / self.rho;
                }
            }
            let leak = (vx.norm_squared() - rx).max(0.0).sqrt()
                + (vp.norm_squared() - rp).max(0.0).sqrt();
            if leak > FRAME_RESIDUAL_TOL * (vx.norm() + vp.norm()).max(1.0) {
                return Err(Error::NumericalFailure(format!(
                    "perpendicular frame does not return to itself (leak {leak:.3e})"
                )));
            }
        }
        Ok((a, b, c, dd))
    }
}

fn integrate_perpendicular_variations<'a>(
    field: &'a KillingField,
    state: &GeodesicState,
    t_max: f64,
) -> Result<OrbitVariations<'a>> {
    let d = field.ambient_dim();
    let n_perp = d - 2;
    let x = state.x();
    let p = state.p();
    let rho = p.norm();
    let vel = state.velocity(field);
    let frame = orthonormal_extension(&[x.clone(), vel], d, d)?;
    let perp = frame[2..].to_vec();

    // Plane orbits keep span{x, xdot} and its complement invariant; the
    // index pipeline relies on that reduction.
    for e in &perp {
        if e.dot(p).abs() > 1e-8 * rho {
            return Err(Error::NumericalFailure(
                "orbit does not preserve the perpendicular splitting; \
                 index data covers the invariant-plane orbits"
                    .to_string(),
            ));
        }
    }

    let n_vars = 2 * n_perp;
    let sys = VariationalFlow { field, n_vars };
    let mut y0 = vec![0.0; 2 * d * (1 + n_vars)];
    y0[..d].copy_from_slice(x.as_slice());
    y0[d..2 * d].copy_from_slice(p.as_slice());
    for (k, e) in perp.iter().enumerate() {
        // Position start (e, 0).
        let off = 2 * d * (1 + k);
        y0[off..off + d].copy_from_slice(e.as_slice());
        // Momentum start (0, rho e).
        let off = 2 * d * (1 + n_perp + k) + d;
        for i in 0..d {
            y0[off + i] = rho * e[i];
        }
    }
    let opts = OdeOptions {
        rtol: DEFAULT_INTEGRATION_TOL,
        atol: DEFAULT_INTEGRATION_TOL,
        ..OdeOptions::default()
    };
    let sol = integrate(&sys, &y0, 0.0, t_max, &opts, true)?;
    Ok(OrbitVariations { field, d, n_perp, rho, perp, sol })
}

struct ConjugateScan {
    /// Total multiplicity of crossings strictly inside (0, upto), clear
    /// of the boundary window.
    interior: u32,
    /// Multiplicity sitting within the boundary window of `upto`, if any.
    boundary: Option<u32>,
}

fn scan_conjugate_points(
    vars: &OrbitVariations<'_>,
    upto: f64,
) -> Result<ConjugateScan> {
    let t_max = vars.sol.t_end;
    let n_grid = (t_max / SCAN_STEP).ceil() as usize;
    let h = t_max / n_grid as f64;

    let mut buf = Vec::new();
    let mut smin = Vec::with_capacity(n_grid);
    let mut scale: f64 = 0.0;
    for i in 1..=n_grid {
        let t = h * i as f64;
        vars.eval(t, &mut buf)?;
        let s = vars.sigmas(&buf);
        scale = scale.max(s[0]);
        smin.push(s[s.len() - 1]);
    }
    if !(scale > 0.0) {
        return Err(Error::NumericalFailure(
            "variational solution collapsed to zero".to_string(),
        ));
    }

    let mut interior: u32 = 0;
    let mut boundary: Option<u32> = None;
    let mut last_refined: Option<f64> = None;
    for i in 1..n_grid.saturating_sub(1) {
        let here = smin[i];
        if here > smin[i - 1] || here > smin[i + 1] || here >= DIP_GATE * scale {
            continue;
        }
        let a = h * i as f64;
        let b = h * (i + 2) as f64;
        let t_star = golden_min(|t| vars.smallest_sigma(t, &mut Vec::new()), a, b, 90);
        let s_star = vars.smallest_sigma(t_star, &mut buf);
        if s_star >= SUSPICIOUS_FRAC * scale {
            continue;
        }
        if s_star >= KERNEL_FRAC * scale {
            return Err(Error::NumericalFailure(format!(
                "unresolved singular-value dip at t = {t_star:.6} (sigma {s_star:.3e}, scale {scale:.3e})"
            )));
        }
        if t_star < MIN_CROSSING_TIME {
            continue;
        }
        if let Some(prev) = last_refined {
            if (t_star - prev).abs() < 1e-6 {
                continue;
            }
        }
        last_refined = Some(t_star);
        vars.eval(t_star, &mut buf)?;
        let sigmas = vars.sigmas(&buf);
        let mult = sigmas.iter().filter(|&&s| s < KERNEL_FRAC * scale).count() as u32;
        if (t_star - upto).abs() <= BOUNDARY_WINDOW {
            boundary = Some(boundary.unwrap_or(0) + mult);
        } else if t_star < upto {
            interior += mult;
        }
    }
    Ok(ConjugateScan { interior, boundary })
}

/// Count conjugate points along a closed geodesic on the open interval
/// (0, upto), with multiplicity. A crossing within 1e-8 of `upto` is
/// reported as a boundary ambiguity instead of being silently counted or
/// dropped.
pub fn count_conjugate_points(
    field: &KillingField,
    record: &ClosedGeodesicRecord,
    upto: f64,
) -> Result<u32> {
    if !upto.is_finite() || upto <= 0.0 {
        return Err(Error::invalid_input("conjugate count needs a positive horizon"));
    }
    let vars = integrate_perpendicular_variations(field, &record.initial, upto + SCAN_OVERSHOOT)?;
    let scan = scan_conjugate_points(&vars, upto)?;
    if scan.boundary.is_some() {
        return Err(Error::BoundaryAmbiguous(format!(
            "conjugate point within {BOUNDARY_WINDOW:.0e} of t = {upto}"
        )));
    }
    Ok(scan.interior)
}

/// Index and nullity of one closed geodesic, with the intermediate data
/// that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct IndexData {
    pub index: IndexRange,
    pub nullity: u32,
    /// Multiplicity-weighted conjugate points strictly inside the period.
    pub conjugate_points: u32,
    /// Index contribution of the concavity form at the closure.
    pub concavity: IndexRange,
    /// Conjugate multiplicity sitting at the period itself, if any.
    pub end_multiplicity: u32,
    pub return_map: LinearizedReturnData,
}

fn range_from(lo: u32, hi: u32) -> Result<IndexRange> {
    if lo == hi {
        Ok(IndexRange::exact(lo))
    } else {
        IndexRange::bounds(lo, hi)
    }
}

fn symmetrized(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let asym = (q - q.transpose()).amax();
    if asym > 1e-5 * (1.0 + q.amax()) {
        return Err(Error::NumericalFailure(format!(
            "concavity form is not symmetric (defect {asym:.3e})"
        )));
    }
    Ok((q + q.transpose()) * 0.5)
}

/// Count negative and near-zero eigenvalues of a symmetric form.
fn signature_counts(q: &DMatrix<f64>) -> Result<(u32, u32)> {
    let qs = symmetrized(q)?;
    let eig = qs.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, &l| m.max(l.abs()));
    let thr = KERNEL_FRAC * scale;
    let mut neg = 0;
    let mut zero = 0;
    for &l in eig.eigenvalues.iter() {
        if l < -thr {
            neg += 1;
        } else if l <= thr {
            zero += 1;
        }
    }
    Ok((neg, zero))
}

/// Apply the pseudo-inverse of a factored matrix to `rhs`, keeping only
/// singular values above `thr`.
fn pinv_apply(
    svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    rhs: &DMatrix<f64>,
    thr: f64,
) -> DMatrix<f64> {
    let u = svd.u.as_ref().expect("svd computed with u");
    let vt = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut core = u.transpose() * rhs;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let f = if s > thr { 1.0 / s } else { 0.0 };
        for j in 0..core.ncols() {
            core[(i, j)] *= f;
        }
    }
    vt.transpose() * core
}

/// Index of the concavity form comparing periodic against free boundary
/// conditions, from the endpoint blocks of the linearized flow in the
/// perpendicular frame. Exact when the form is nondegenerate or when its
/// kernel is explained by the orbit's nullity; an interval otherwise.
fn concavity_range(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    nullity: u32,
) -> Result<IndexRange> {
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let svd_b = b.clone().svd(true, true);
    let s_max = svd_b.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    let rank_thr = KERNEL_FRAC * s_max.max(1.0);
    let rank = svd_b.singular_values.iter().filter(|&&s| s > rank_thr).count();

    if rank == n {
        // Periodic matching b = B^{-1}(I - A) v exists for every v.
        let slope = pinv_apply(&svd_b, &(&id - a), rank_thr);
        let q = c + (d - &id) * slope;
        let (neg, zero) = signature_counts(&q)?;
        if zero == 0 || zero <= nullity {
            return range_from(neg, neg);
        }
        return range_from(neg, neg + zero);
    }

    // Degenerate closure: restrict to directions whose matching equation
    // is solvable at all.
    let u = svd_b.u.as_ref().expect("svd computed with u");
    let u0 = u.columns(rank, n - rank);
    let nmat = u0.transpose() * (&id - a);
    let nsvd = nmat.clone().svd(false, true);
    let n_thr = KERNEL_FRAC
        * nsvd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s)).max(1.0);
    let vt = nsvd.v_t.as_ref().expect("svd computed with v_t");
    let mut row_seeds: Vec<DVector<f64>> = Vec::new();
    for (i, &s) in nsvd.singular_values.iter().enumerate() {
        if s > n_thr {
            row_seeds.push(vt.row(i).transpose());
        }
    }
    let solvable_rank = row_seeds.len();
    let w_dim = n - solvable_rank;
    if w_dim == 0 {
        // No direction admits a periodic matching; everything unresolved.
        return range_from(0, n as u32);
    }
    let full = orthonormal_extension(&row_seeds, n, n)?;
    let mut w = DMatrix::zeros(n, w_dim);
    for (j, v) in full[solvable_rank..].iter().enumerate() {
        w.column_mut(j).copy_from(v);
    }

    let ia_w = (&id - a) * &w;
    let slope = pinv_apply(&svd_b, &ia_w, rank_thr);
    let match_res = (b * &slope - &ia_w).norm();
    if match_res > FRAME_RESIDUAL_TOL * ia_w.norm().max(1.0) {
        return Err(Error::NumericalFailure(format!(
            "periodic matching residual {match_res:.3e} on the solvable subspace"
        )));
    }
    let q = w.transpose() * c * &w + w.transpose() * (d - &id) * slope;
    let (neg, zero) = signature_counts(&q)?;
    let ghosts = (n - w_dim) as u32;
    if ghosts == 0 && zero <= nullity {
        return range_from(neg, neg);
    }
    range_from(neg, neg + zero + ghosts)
}

/// Morse index and nullity of a closed geodesic over its full period.
///
/// The index is exact whenever the closure data is nondegenerate or its
/// degeneracy is fully explained by the orbit's nullity; otherwise an
/// honest interval is returned.
pub fn closed_geodesic_index(
    field: &KillingField,
    record: &ClosedGeodesicRecord,
) -> Result<IndexData> {
    let length = record.length;
    if !length.is_finite() || length <= 0.0 {
        return Err(Error::invalid_input("closed geodesic record has no positive length"));
    }
    let vars = integrate_perpendicular_variations(field, &record.initial, length + SCAN_OVERSHOOT)?;
    let scan = scan_conjugate_points(&vars, length)?;
    let return_map = linearized_return_map(field, record)?;
    let (a, b, c, d) = vars.endpoint_blocks(length)?;
    let concavity = concavity_range(&a, &b, &c, &d, return_map.nullity)?;
    let index = range_from(
        scan.interior + concavity.lo(),
        scan.interior + concavity.hi(),
    )?;
    Ok(IndexData {
        index,
        nullity: return_map.nullity,
        conjugate_points: scan.interior,
        concavity,
        end_multiplicity: scan.boundary.unwrap_or(0),
        return_map,
    })
}

/// Compute index and nullity for a record and store them on it.
pub fn annotate_record(field: &KillingField, record: &mut ClosedGeodesicRecord) -> Result<()> {
    let data = closed_geodesic_index(field, record)?;
    record.index = Some(data.index);
    record.nullity = Some(data.nullity);
    Ok(())
}

/// Closed-form index and nullity of an invariant-plane orbit (and its
/// iterates) by counting rotation modes: each perpendicular block of
/// rotation angle theta contributes a conjugate pair for every integer l
/// with |theta - 2 pi l| < L, and a nullity pair on equality.
pub fn plane_orbit_mode_index(
    field: &KillingField,
    plane: usize,
    positive: bool,
    iterate: u32,
) -> Result<(u64, u64)> {
    let m = field.m();
    if plane == 0 || plane > m {
        return Err(Error::invalid_input(format!("plane {plane} out of range 1..={m}")));
    }
    if iterate == 0 {
        return Err(Error::invalid_input("iterate must be at least 1"));
    }
    let rates = field.block_rates();
    let rp = rates[plane - 1];
    let denom = if positive { 1.0 + rp } else { 1.0 - rp };
    if denom <= 0.0 {
        return Err(Error::invalid_metric("orbit frequency is not positive"));
    }
    let length = iterate as f64 * 2.0 * PI / denom;

    let mut index = 0u64;
    let mut nullity = 0u64;
    for (j, &r) in rates.iter().enumerate() {
        if j == plane - 1 {
            continue;
        }
        let theta = r * length;
        let l_lo = ((theta - length) / (2.0 * PI)).floor() as i64 - 1;
        let l_hi = ((theta + length) / (2.0 * PI)).ceil() as i64 + 1;
        for l in l_lo..=l_hi {
            let dist = (theta - 2.0 * PI * l as f64).abs();
            if (dist - length).abs() <= 1e-9 {
                nullity += 2;
            } else if dist < length {
                index += 2;
            }
        }
    }
    Ok((index, nullity))
}
