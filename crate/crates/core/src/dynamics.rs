//! Geodesic flow of the shifted metrics, exact and numeric, plus the
//! catalog of invariant-plane geodesics and a closed-orbit search.
//!
//! The cogeodesic flow embeds into the Hamiltonian system
//!
//!   H(x, p) = |x| |p| + <A x, p>,  A = mu * generator,
//!
//! on the ambient phase space. Both constraints |x| = 1 and <x, p> = 0
//! are conserved (the second identically, the first on <x, p> = 0), so
//! the restricted flow is the cogeodesic flow of the shifted metric on
//! the unit cosphere bundle and time is arc length. The system splits
//! as the round flow composed with the isometric block rotation, which
//! gives the closed solution
//!
//!   Phi_t(x, p) = e^{tA} (cos t x + sin t p/rho, -rho sin t x + cos t p)
//!
//! with rho = |p| conserved. Everything downstream gets two routes: the
//! closed form with its closed-form differential, and a Runge-Kutta
//! integration of the same vector field. Tests hold them against each
//! other.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::minimize::golden_min;
use crate::ode::{self, OdeOptions, OdeSystem};
use crate::par;
use crate::sampling;
use crate::sphere::{GreatCircle, KillingField};
use crate::zermelo::{shifted_dual_norm, shifted_norm};
use crate::Exec;

/// Default local tolerance of the numeric route. Tight enough that the
/// energy stays within 1e-9 over tens of periods.
pub const DEFAULT_INTEGRATION_TOL: f64 = 1e-12;

const POSITION_TOL: f64 = 1e-9;
const ENERGY_TOL: f64 = 1e-6;

/// Point of the unit cosphere bundle: |x| = 1, <x, p> = 0, and the
/// dual norm of p equals 1, so the orbit through the state is
/// parametrized by arc length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicState {
    x: DVector<f64>,
    p: DVector<f64>,
}

impl GeodesicState {
    pub fn new(field: &KillingField, x: DVector<f64>, p: DVector<f64>) -> Result<Self> {
        let d = field.ambient_dim();
        if x.len() != d || p.len() != d {
            return Err(Error::invalid_input(format!(
                "state dimension ({}, {}) does not match ambient dimension {d}",
                x.len(),
                p.len()
            )));
        }
        if (x.norm() - 1.0).abs() > POSITION_TOL {
            return Err(Error::invalid_input(format!(
                "base point has norm {}, not 1",
                x.norm()
            )));
        }
        let along = x.dot(&p);
        if along.abs() > POSITION_TOL * p.norm().max(1.0) {
            return Err(Error::invalid_input(format!(
                "momentum not orthogonal to base point: <x,p> = {along:e}"
            )));
        }
        let energy = shifted_dual_norm(field, &x, &p);
        if (energy - 1.0).abs() > ENERGY_TOL {
            return Err(Error::invalid_input(format!(
                "state lies on energy level {energy}, not on the unit level"
            )));
        }
        Ok(Self { x, p })
    }

    /// Projects (x, p) onto the unit cosphere bundle: normalizes x,
    /// removes the momentum component along x, rescales to energy 1.
    pub fn normalized(field: &KillingField, x: DVector<f64>, p: DVector<f64>) -> Result<Self> {
        let nx = x.norm();
        if nx < 1e-6 {
            return Err(Error::invalid_input("base point too close to the origin".to_string()));
        }
        let xh = x / nx;
        let mut q = p.clone();
        q.axpy(-xh.dot(&p), &xh, 1.0);
        let energy = shifted_dual_norm(field, &xh, &q);
        if energy < 1e-9 {
            return Err(Error::invalid_input(
                "momentum degenerates after projection; cannot rescale to unit energy".to_string(),
            ));
        }
        Ok(Self { x: xh, p: q / energy })
    }

    /// State with the given velocity direction at x. Any positive
    /// multiple of the intended velocity works; it is rescaled to unit
    /// norm before dualizing.
    pub fn from_velocity(field: &KillingField, x: &DVector<f64>, y: &DVector<f64>) -> Result<Self> {
        if (x.norm() - 1.0).abs() > POSITION_TOL {
            return Err(Error::invalid_input("base point is not on the unit sphere".to_string()));
        }
        let along = x.dot(y);
        if along.abs() > POSITION_TOL * y.norm().max(1.0) {
            return Err(Error::invalid_input(format!(
                "velocity not tangent to the sphere: <x,y> = {along:e}"
            )));
        }
        let p = legendre_dual(field, x, y)?;
        Ok(Self { x: x.clone(), p })
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn p(&self) -> &DVector<f64> {
        &self.p
    }

    /// Unit velocity of the geodesic through this state: p/|p| + W(x).
    pub fn velocity(&self, field: &KillingField) -> DVector<f64> {
        let mut v = &self.p / self.p.norm();
        v += field.generator_apply(&self.x);
        v
    }

    /// Dual norm of the momentum; 1 up to round-off on valid states.
    pub fn energy(&self, field: &KillingField) -> f64 {
        shifted_dual_norm(field, &self.x, &self.p)
    }
}

/// Covector dual to the direction of y at x: the unique p with unit
/// dual norm whose Hamiltonian velocity points along y.
pub fn legendre_dual(
    field: &KillingField,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let f = shifted_norm(field, x, y)?;
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::invalid_input("cannot dualize a zero velocity".to_string()));
    }
    let w = field.generator_apply(x);
    let u = y / f - &w;
    let denom = 1.0 + w.dot(&u);
    Ok(u / denom)
}

/// Unit velocity realized by a momentum p at x: p/|p| + W(x). Inverse
/// of `legendre_dual` on the unit energy level.
pub fn legendre_primal(field: &KillingField, x: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
    let mut v = p / p.norm();
    v += field.generator_apply(x);
    v
}

fn slice_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn slice_norm(a: &[f64]) -> f64 {
    slice_dot(a, a).sqrt()
}

/// out += A v with A the field generator, on raw slices.
fn add_generator(field: &KillingField, v: &[f64], out: &mut [f64]) {
    for j in 0..field.m() {
        let r = field.block_rate(j);
        out[2 * j] -= r * v[2 * j + 1];
        out[2 * j + 1] += r * v[2 * j];
    }
}

/// The Hamiltonian vector field (H_p, -H_x) at an arbitrary point of
/// the ambient phase space.
pub(crate) fn flow_vector(
    field: &KillingField,
    x: &DVector<f64>,
    p: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let (nx, np) = (x.norm(), p.norm());
    let mut dx = p * (nx / np);
    dx += field.generator_apply(x);
    let mut dp = x * (-np / nx);
    dp += field.generator_apply(p);
    (dx, dp)
}

/// Plain cogeodesic flow as an ODE on (x, p). No projection: the
/// conserved quantities measure the integrator honestly.
pub(crate) struct CotangentFlow<'a> {
    pub field: &'a KillingField,
}

impl OdeSystem for CotangentFlow<'_> {
    fn dim(&self) -> usize {
        2 * self.field.ambient_dim()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = self.field.ambient_dim();
        let (x, p) = y.split_at(d);
        let (dx, dp) = dy.split_at_mut(d);
        let (nx, np) = (slice_norm(x), slice_norm(p));
        let (cx, cp) = (nx / np, -np / nx);
        for i in 0..d {
            dx[i] = cx * p[i];
            dp[i] = cp * x[i];
        }
        add_generator(self.field, x, dx);
        add_generator(self.field, p, dp);
    }
}

/// Cogeodesic flow coupled with `n_vars` copies of its linearization.
/// State layout: (x, p, dx_1, dp_1, ..., dx_n, dp_n).
pub(crate) struct VariationalFlow<'a> {
    pub field: &'a KillingField,
    pub n_vars: usize,
}

impl OdeSystem for VariationalFlow<'_> {
    fn dim(&self) -> usize {
        2 * self.field.ambient_dim() * (1 + self.n_vars)
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = self.field.ambient_dim();
        let (x, rest) = y.split_at(d);
        let p = &rest[..d];
        let (nx, np) = (slice_norm(x), slice_norm(p));
        {
            let (dx, drest) = dy.split_at_mut(d);
            let dp = &mut drest[..d];
            let (cx, cp) = (nx / np, -np / nx);
            for i in 0..d {
                dx[i] = cx * p[i];
                dp[i] = cp * x[i];
            }
            add_generator(self.field, x, dx);
            add_generator(self.field, p, dp);
        }
        // Linearization: with xh = x/|x|, ph = p/|p|,
        //   d(dx)/dt = ph <xh, dx> + A dx + (|x|/|p|)(dp - ph <ph, dp>)
        //   d(dp)/dt = -(|p|/|x|)(dx - xh <xh, dx>) - xh <ph, dp> + A dp
        for k in 0..self.n_vars {
            let off = 2 * d * (1 + k);
            let vx = &y[off..off + d];
            let vp = &y[off + d..off + 2 * d];
            let sx = slice_dot(x, vx) / nx;
            let sp = slice_dot(p, vp) / np;
            let (a1, a2, a3) = (sx / np, nx / np, nx * sp / (np * np));
            let (b1, b2, b3) = (np / nx, np * sx / (nx * nx), sp / nx);
            {
                let (dvx, dvp) = dy[off..off + 2 * d].split_at_mut(d);
                for i in 0..d {
                    dvx[i] = (a1 - a3) * p[i] + a2 * vp[i];
                    dvp[i] = -b1 * vx[i] + (b2 - b3) * x[i];
                }
            }
            let (dvx, dvp) = dy[off..off + 2 * d].split_at_mut(d);
            add_generator(self.field, vx, dvx);
            add_generator(self.field, vp, dvp);
        }
    }
}

/// Closed-form flow on raw vectors. Requires |x0| = 1, <x0, p0> = 0,
/// p0 != 0; under those the formula solves the Hamiltonian system
/// exactly for every t.
pub(crate) fn exact_flow_raw(
    field: &KillingField,
    x0: &DVector<f64>,
    p0: &DVector<f64>,
    t: f64,
) -> (DVector<f64>, DVector<f64>) {
    let rho = p0.norm();
    debug_assert!(rho > 0.0, "exact flow needs a nonzero momentum");
    let (s, c) = t.sin_cos();
    let u = x0 * c + p0 * (s / rho);
    let q = x0 * (-rho * s) + p0 * c;
    (field.rotate(t, &u), field.rotate(t, &q))
}

/// Closed-form time-t flow of a state.
pub fn exact_flow(field: &KillingField, state: &GeodesicState, t: f64) -> GeodesicState {
    let (x, p) = exact_flow_raw(field, &state.x, &state.p, t);
    GeodesicState { x, p }
}

fn rotation_matrix(field: &KillingField, t: f64) -> DMatrix<f64> {
    let d = field.ambient_dim();
    let mut r = DMatrix::zeros(d, d);
    for j in 0..field.m() {
        let (s, c) = (field.block_rate(j) * t).sin_cos();
        r[(2 * j, 2 * j)] = c;
        r[(2 * j, 2 * j + 1)] = -s;
        r[(2 * j + 1, 2 * j)] = s;
        r[(2 * j + 1, 2 * j + 1)] = c;
    }
    r
}

pub(crate) fn exact_flow_jacobian_raw(
    field: &KillingField,
    x0: &DVector<f64>,
    p0: &DVector<f64>,
    t: f64,
) -> DMatrix<f64> {
    let d = field.ambient_dim();
    let rho = p0.norm();
    let ph = p0 / rho;
    let (s, c) = t.sin_cos();
    let rot = rotation_matrix(field, t);
    let proj = DMatrix::identity(d, d) - &ph * ph.transpose();
    let tl = &rot * c;
    let tr = &rot * proj * (s / rho);
    let bl = &rot * (-rho * s);
    let br = &rot * (DMatrix::identity(d, d) * c - x0 * ph.transpose() * s);
    let mut jac = DMatrix::zeros(2 * d, 2 * d);
    jac.view_mut((0, 0), (d, d)).copy_from(&tl);
    jac.view_mut((0, d), (d, d)).copy_from(&tr);
    jac.view_mut((d, 0), (d, d)).copy_from(&bl);
    jac.view_mut((d, d), (d, d)).copy_from(&br);
    jac
}

/// Differential of the closed-form time-t flow with respect to the
/// initial state, as a 2d x 2d matrix in (x, p) block order. On
/// directions tangent to the constraint set it equals the linearized
/// geodesic flow.
pub fn exact_flow_jacobian(field: &KillingField, state: &GeodesicState, t: f64) -> DMatrix<f64> {
    exact_flow_jacobian_raw(field, &state.x, &state.p, t)
}

/// Numerically integrated orbit with dense output.
pub struct Trajectory<'a> {
    field: &'a KillingField,
    initial_energy: f64,
    sol: ode::OdeSolution,
}

impl Trajectory<'_> {
    pub fn t_end(&self) -> f64 {
        self.sol.t_end
    }

    pub fn accepted_steps(&self) -> usize {
        self.sol.accepted
    }

    /// Interpolated state at time t. Not re-validated: the interpolant
    /// carries the integrator's small constraint drift.
    pub fn state_at(&self, t: f64) -> Result<GeodesicState> {
        let d = self.field.ambient_dim();
        let mut buf = vec![0.0; 2 * d];
        self.sol.eval(t, &mut buf)?;
        Ok(GeodesicState {
            x: DVector::from_column_slice(&buf[..d]),
            p: DVector::from_column_slice(&buf[d..]),
        })
    }

    pub fn end_state(&self) -> GeodesicState {
        let d = self.field.ambient_dim();
        GeodesicState {
            x: DVector::from_column_slice(&self.sol.y_end[..d]),
            p: DVector::from_column_slice(&self.sol.y_end[d..]),
        }
    }

    /// Maximum drift of the conserved dual norm over all accepted step
    /// endpoints, relative to its initial value.
    pub fn max_energy_drift(&self) -> f64 {
        let d = self.field.ambient_dim();
        let energy_of = |y: &[f64]| {
            let x = DVector::from_column_slice(&y[..d]);
            let p = DVector::from_column_slice(&y[d..]);
            shifted_dual_norm(self.field, &x, &p)
        };
        let mut drift: f64 = (energy_of(&self.sol.y_end) - self.initial_energy).abs();
        for step in &self.sol.steps {
            drift = drift.max((energy_of(&step.y1) - self.initial_energy).abs());
        }
        drift
    }
}

/// Integrates the cogeodesic flow numerically from a state over
/// [0, t_end] (t_end may be negative). `tol` is the local error
/// tolerance per step.
pub fn integrate_geodesic<'a>(
    field: &'a KillingField,
    state: &GeodesicState,
    t_end: f64,
    tol: f64,
) -> Result<Trajectory<'a>> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::invalid_input(format!("integration tolerance {tol} must be positive")));
    }
    let d = field.ambient_dim();
    let mut y0 = vec![0.0; 2 * d];
    y0[..d].copy_from_slice(state.x.as_slice());
    y0[d..].copy_from_slice(state.p.as_slice());
    let sys = CotangentFlow { field };
    let opts = OdeOptions { rtol: tol, atol: tol, ..OdeOptions::default() };
    let sol = ode::integrate(&sys, &y0, 0.0, t_end, &opts, true)?;
    Ok(Trajectory { field, initial_energy: state.energy(field), sol })
}

/// Closed geodesic, possibly decorated with index data by the index
/// pass. `multiplicity` is the covering multiplicity over the
/// underlying prime curve (1 for prime orbits); `length` is the total
/// length of the iterated curve.
#[derive(Debug, Clone, Serialize)]
pub struct ClosedGeodesicRecord {
    pub label: GeodesicLabel,
    pub length: f64,
    pub multiplicity: u32,
    pub initial: GeodesicState,
    pub circle: Option<GreatCircle>,
    pub index: Option<IndexRange>,
    pub nullity: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GeodesicLabel {
    /// Great circle in the k-th invariant coordinate plane (1-based),
    /// traversed with (+) or against (-) the rotation of the field.
    Plane { plane: usize, positive: bool },
    /// Orbit found by the numeric search, numbered by increasing
    /// length.
    Found { id: usize },
}

impl fmt::Display for GeodesicLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeodesicLabel::Plane { plane, positive } => {
                write!(f, "c{}{}", plane, if *positive { '+' } else { '-' })
            }
            GeodesicLabel::Found { id } => write!(f, "g{id}"),
        }
    }
}

/// Morse index, possibly known only within a closed interval when a
/// unit-circle eigenvalue of the return map resists classification at
/// the working precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexRange {
    lo: u32,
    hi: u32,
}

impl IndexRange {
    pub fn exact(k: u32) -> Self {
        Self { lo: k, hi: k }
    }

    pub fn bounds(lo: u32, hi: u32) -> Result<Self> {
        if lo > hi {
            return Err(Error::invalid_input(format!("empty index range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> u32 {
        self.lo
    }

    pub fn hi(&self) -> u32 {
        self.hi
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, k: u32) -> bool {
        self.lo <= k && k <= self.hi
    }
}

impl fmt::Display for IndexRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_exact() {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "[{}, {}]", self.lo, self.hi)
        }
    }
}

fn basis_vector(d: usize, k: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[k] = 1.0;
    e
}

/// Initial state of the invariant-plane geodesic c_j^{+/-} (1-based
/// plane index). With r = mu p / p_j, the circle in the j-th plane run
/// with the field has length 2 pi / (1 + r), against it 2 pi / (1 - r).
fn plane_state(field: &KillingField, plane: usize, positive: bool) -> GeodesicState {
    let d = field.ambient_dim();
    let r = field.block_rate(plane - 1);
    let x = basis_vector(d, 2 * (plane - 1));
    let scale = if positive { 1.0 / (1.0 + r) } else { -1.0 / (1.0 - r) };
    let p = basis_vector(d, 2 * (plane - 1) + 1) * scale;
    GeodesicState { x, p }
}

fn plane_length(field: &KillingField, plane: usize, positive: bool) -> f64 {
    let r = field.block_rate(plane - 1);
    2.0 * PI / if positive { 1.0 + r } else { 1.0 - r }
}

/// The great circle traced by the invariant-plane geodesic, in its
/// arc-length parametrization (period = length).
pub fn katok_circle(field: &KillingField, plane: usize, positive: bool) -> Result<GreatCircle> {
    if plane == 0 || plane > field.m() {
        return Err(Error::invalid_input(format!(
            "plane index {plane} out of range 1..={}",
            field.m()
        )));
    }
    let d = field.ambient_dim();
    let r = field.block_rate(plane - 1);
    let u = basis_vector(d, 2 * (plane - 1));
    let sign = if positive { 1.0 } else { -1.0 };
    let v = basis_vector(d, 2 * (plane - 1) + 1) * sign;
    let speed = if positive { 1.0 + r } else { 1.0 - r };
    GreatCircle::new(u, v, speed)
}

/// The 2m closed geodesics of an irrational shift: both traversals of
/// each invariant-plane circle, sorted by length. For mu = 0 the
/// metric is round, every great circle closes, and the discrete
/// catalog does not exist.
pub fn katok_closed_geodesics(field: &KillingField) -> Result<Vec<ClosedGeodesicRecord>> {
    if field.mu() == 0.0 {
        return Err(Error::DegenerateMetric(
            "the round metric has all great circles closed; the plane catalog needs mu > 0"
                .to_string(),
        ));
    }
    let mut records = Vec::with_capacity(2 * field.m());
    for plane in 1..=field.m() {
        for positive in [true, false] {
            records.push(ClosedGeodesicRecord {
                label: GeodesicLabel::Plane { plane, positive },
                length: plane_length(field, plane, positive),
                multiplicity: 1,
                initial: plane_state(field, plane, positive),
                circle: Some(katok_circle(field, plane, positive)?),
                index: None,
                nullity: None,
            });
        }
    }
    records.sort_by(|a, b| a.length.total_cmp(&b.length));
    Ok(records)
}

/// The k-th iterate of a closed geodesic: same curve, covered k times.
pub fn iterate_record(record: &ClosedGeodesicRecord, k: u32) -> Result<ClosedGeodesicRecord> {
    if k == 0 {
        return Err(Error::invalid_input("iterate count must be at least 1".to_string()));
    }
    let mut out = record.clone();
    out.length = record.length * k as f64;
    out.multiplicity = record.multiplicity * k;
    out.index = None;
    out.nullity = None;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FinderOptions {
    /// Only orbits of length (= period) up to this bound are reported.
    pub length_bound: f64,
    /// Number of initial conditions tried. The first 2m are the
    /// invariant-plane states, the next 2m perturbations of them, the
    /// rest random.
    pub seeds: usize,
    /// Convergence threshold on the closure residual.
    pub tol: f64,
    pub exec: Exec,
}

impl Default for FinderOptions {
    fn default() -> Self {
        Self { length_bound: 10.0 * PI, seeds: 200, tol: 1e-9, exec: Exec::default() }
    }
}

#[derive(Debug, Clone)]
pub struct FinderOutcome {
    pub records: Vec<ClosedGeodesicRecord>,
    pub seeds_tried: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
struct Candidate {
    x: DVector<f64>,
    p: DVector<f64>,
    period: f64,
}

/// Searches for closed geodesics by shooting from a batch of seeds,
/// detecting near-returns of the exact flow, and polishing candidates
/// with a Gauss-Newton iteration on the closure system. Found orbits
/// are reduced to their prime period, deduplicated, matched against
/// the invariant-plane catalog for labeling, and sorted by length.
pub fn find_closed_geodesics(field: &KillingField, opts: &FinderOptions) -> Result<FinderOutcome> {
    if !(opts.length_bound > 0.0) || !opts.length_bound.is_finite() {
        return Err(Error::invalid_input(format!(
            "length bound {} must be positive and finite",
            opts.length_bound
        )));
    }
    if opts.seeds == 0 {
        return Err(Error::invalid_input("at least one seed is required".to_string()));
    }
    if !(opts.tol > 0.0) || opts.tol > 1e-3 {
        return Err(Error::invalid_input(format!(
            "closure tolerance {} outside the sensible range (0, 1e-3]",
            opts.tol
        )));
    }

    let mut warnings = Vec::new();
    if opts.seeds < 4 * field.m() {
        warnings.push(format!(
            "{} seeds is fewer than 4m = {}; the search may miss catalog orbits",
            opts.seeds,
            4 * field.m()
        ));
    }

    let seeds = build_seeds(field, opts.seeds)?;
    let hits: Vec<Option<Candidate>> =
        par::map_indices(seeds.len(), opts.exec, |i| search_from_seed(field, &seeds[i], opts));

    let mut kept: Vec<Candidate> = Vec::new();
    for cand in hits.into_iter().flatten() {
        let duplicate = kept.iter().any(|k| {
            (k.period - cand.period).abs() < 1e-6 * k.period.max(1.0)
                && point_on_orbit(field, k, &cand.x, &cand.p)
        });
        if !duplicate {
            kept.push(cand);
        }
    }
    kept.sort_by(|a, b| a.period.total_cmp(&b.period));

    let catalog = katok_closed_geodesics(field).ok();
    let mut records = Vec::with_capacity(kept.len());
    let mut next_id = 1;
    for cand in &kept {
        let mut label = None;
        if let Some(cat) = &catalog {
            for rec in cat {
                if (rec.length - cand.period).abs() < 1e-5 * rec.length
                    && point_on_orbit(field, cand, &rec.initial.x, &rec.initial.p)
                {
                    label = Some(rec.label);
                    break;
                }
            }
        }
        let label = label.unwrap_or_else(|| {
            let l = GeodesicLabel::Found { id: next_id };
            next_id += 1;
            l
        });
        let circle = match label {
            GeodesicLabel::Plane { plane, positive } => Some(katok_circle(field, plane, positive)?),
            GeodesicLabel::Found { .. } => None,
        };
        records.push(ClosedGeodesicRecord {
            label,
            length: cand.period,
            multiplicity: 1,
            initial: GeodesicState::normalized(field, cand.x.clone(), cand.p.clone())?,
            circle,
            index: None,
            nullity: None,
        });
    }

    if records.is_empty() {
        warnings.push("no closed orbit converged below the length bound".to_string());
    }

    Ok(FinderOutcome { records, seeds_tried: opts.seeds, warnings })
}

fn build_seeds(field: &KillingField, n: usize) -> Result<Vec<GeodesicState>> {
    let m = field.m();
    let d = field.ambient_dim();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i < 2 * m {
            out.push(plane_state(field, i / 2 + 1, i % 2 == 0));
        } else if i < 4 * m {
            let base = plane_state(field, (i - 2 * m) / 2 + 1, i % 2 == 0);
            let mut rng = sampling::seeded_rng(0xD00D ^ i as u64);
            let mut x = base.x + sampling::random_unit(d, &mut rng) * 0.2;
            x /= x.norm();
            let p = base.p + sampling::random_unit(d, &mut rng) * 0.1;
            out.push(GeodesicState::normalized(field, x, p)?);
        } else {
            let mut rng = sampling::seeded_rng(0xD00D ^ i as u64);
            let x = sampling::random_unit(d, &mut rng);
            let mut y = sampling::random_unit(d, &mut rng);
            y.axpy(-x.dot(&y), &x, 1.0);
            out.push(GeodesicState::from_velocity(field, &x, &y)?);
        }
    }
    Ok(out)
}

/// Squared phase-space distance from the seed after time t.
fn return_gap(field: &KillingField, seed: &GeodesicState, t: f64) -> f64 {
    let (x, p) = exact_flow_raw(field, &seed.x, &seed.p, t);
    (x - &seed.x).norm_squared() + (p - &seed.p).norm_squared()
}

fn search_from_seed(
    field: &KillingField,
    seed: &GeodesicState,
    opts: &FinderOptions,
) -> Option<Candidate> {
    // No closed geodesic is shorter than 2 pi / (1 + w), w < 1, so the
    // scan can start above 1. The gate 0.25 on the squared gap keeps
    // only returns close enough to be worth polishing.
    const T_MIN: f64 = 1.0;
    const DT: f64 = 0.02;
    const GATE: f64 = 0.25;
    let horizon = opts.length_bound + 2.0 * DT;
    let n = ((horizon - T_MIN) / DT).ceil() as usize;
    let gaps: Vec<f64> = (0..=n).map(|i| return_gap(field, seed, T_MIN + i as f64 * DT)).collect();
    for i in 1..n {
        if gaps[i] < gaps[i - 1] && gaps[i] <= gaps[i + 1] && gaps[i] < GATE {
            let a = T_MIN + (i - 1) as f64 * DT;
            let b = T_MIN + (i + 1) as f64 * DT;
            let t_star = golden_min(|t| return_gap(field, seed, t), a, b, 80);
            if let Some(cand) = polish(field, &seed.x, &seed.p, t_star, opts.tol) {
                if cand.period <= opts.length_bound + 1e-9 {
                    return Some(reduce_period(field, cand, opts.tol));
                }
            }
        }
    }
    None
}

fn closure_residual(field: &KillingField, x: &DVector<f64>, p: &DVector<f64>, t: f64) -> DVector<f64> {
    let d = x.len();
    let (fx, fp) = exact_flow_raw(field, x, p, t);
    let mut r = DVector::zeros(2 * d + 3);
    for i in 0..d {
        r[i] = fx[i] - x[i];
        r[d + i] = fp[i] - p[i];
    }
    r[2 * d] = 0.5 * (x.norm_squared() - 1.0);
    r[2 * d + 1] = x.dot(p);
    r[2 * d + 2] = shifted_dual_norm(field, x, p) - 1.0;
    r
}

fn closure_jacobian(
    field: &KillingField,
    x: &DVector<f64>,
    p: &DVector<f64>,
    t: f64,
) -> DMatrix<f64> {
    let d = x.len();
    let mut jac = DMatrix::zeros(2 * d + 3, 2 * d + 1);
    let flow_jac = exact_flow_jacobian_raw(field, x, p, t);
    for i in 0..2 * d {
        for j in 0..2 * d {
            jac[(i, j)] = flow_jac[(i, j)] - if i == j { 1.0 } else { 0.0 };
        }
    }
    let (fx, fp) = exact_flow_raw(field, x, p, t);
    let (vx, vp) = flow_vector(field, &fx, &fp);
    for i in 0..d {
        jac[(i, 2 * d)] = vx[i];
        jac[(d + i, 2 * d)] = vp[i];
    }
    let wp = field.generator_apply(p);
    let wx = field.generator_apply(x);
    let np = p.norm();
    for i in 0..d {
        jac[(2 * d, i)] = x[i];
        jac[(2 * d + 1, i)] = p[i];
        jac[(2 * d + 1, d + i)] = x[i];
        jac[(2 * d + 2, i)] = -wp[i];
        jac[(2 * d + 2, d + i)] = p[i] / np + wx[i];
    }
    jac
}

/// Gauss-Newton on the closure system Phi_T(x, p) = (x, p) together
/// with the constraint rows. The time-shift null direction is handled
/// by the minimal-norm SVD solve.
fn polish(
    field: &KillingField,
    x0: &DVector<f64>,
    p0: &DVector<f64>,
    t0: f64,
    tol: f64,
) -> Option<Candidate> {
    let d = x0.len();
    let mut x = x0.clone();
    let mut p = p0.clone();
    let mut t = t0;
    let mut res = closure_residual(field, &x, &p, t);
    let mut rn = res.amax();
    for _ in 0..60 {
        if rn < tol {
            break;
        }
        let jac = closure_jacobian(field, &x, &p, t);
        let svd = jac.svd(true, true);
        let delta = svd.solve(&res, 1e-9).ok()?;
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1.0 / 1024.0 {
            let mut xn = x.clone();
            let mut pn = p.clone();
            for i in 0..d {
                xn[i] -= lambda * delta[i];
                pn[i] -= lambda * delta[d + i];
            }
            let tn = t - lambda * delta[2 * d];
            if tn <= 0.5 {
                lambda *= 0.5;
                continue;
            }
            let rn_new = closure_residual(field, &xn, &pn, tn);
            if rn_new.amax() < rn {
                x = xn;
                p = pn;
                t = tn;
                res = rn_new;
                rn = res.amax();
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            return None;
        }
    }
    (rn < tol).then_some(Candidate { x, p, period: t })
}

/// Replaces a candidate by the orbit's prime period if the period is a
/// multiple of a shorter one.
fn reduce_period(field: &KillingField, cand: Candidate, tol: f64) -> Candidate {
    let mut cand = cand;
    'outer: loop {
        for k in 2..=16u32 {
            let tk = cand.period / k as f64;
            if tk < 0.5 {
                break;
            }
            let (fx, fp) = exact_flow_raw(field, &cand.x, &cand.p, tk);
            let gap = (fx - &cand.x).norm() + (fp - &cand.p).norm();
            if gap < 1e-6 {
                if let Some(shorter) = polish(field, &cand.x, &cand.p, tk, tol) {
                    cand = shorter;
                    continue 'outer;
                }
            }
        }
        return cand;
    }
}

/// Whether the phase-space point (x, p) lies on the candidate's orbit,
/// up to 1e-6. Orbits of the same flow either coincide or stay apart,
/// so this decides orbit equality.
fn point_on_orbit(field: &KillingField, orbit: &Candidate, x: &DVector<f64>, p: &DVector<f64>) -> bool {
    let gap = |t: f64| {
        let (fx, fp) = exact_flow_raw(field, &orbit.x, &orbit.p, t);
        (fx - x).norm_squared() + (fp - p).norm_squared()
    };
    const SAMPLES: usize = 256;
    let dt = orbit.period / SAMPLES as f64;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..SAMPLES {
        let g = gap(i as f64 * dt);
        if g < best {
            best = g;
            best_i = i;
        }
    }
    let center = best_i as f64 * dt;
    let t_star = golden_min(gap, center - dt, center + dt, 70);
    gap(t_star) < 1e-12
}
