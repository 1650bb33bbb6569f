//! Round-sphere primitives: points and tangent vectors of S^{2m-1} in
//! ambient coordinates, the block-rotation Killing fields generated by
//! coprime weight tuples, and great circles.
//!
//! The Killing field attached to weights p_1 < ... < p_m splits R^{2m}
//! into m coordinate 2-planes; on the j-th plane the one-parameter
//! group rotates with angular rate p/p_j where p = p_1 * ... * p_m.
//! Everything here is exact up to round-off, so flows renormalize the
//! result and the validation tolerance is 1e-12 throughout.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance for the unit-length and orthogonality invariants of the
/// ambient representation.
pub const GEOMETRY_TOL: f64 = 1e-12;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// A point of S^{2m-1}, stored as a unit vector in R^{2m}.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint {
    coords: DVector<f64>,
}

impl SpherePoint {
    /// Wraps an ambient vector, requiring unit length within 1e-12.
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.len() < 4 || coords.len() % 2 != 0 {
            return Err(Error::invalid_input(format!(
                "ambient dimension must be even and at least 4, got {}",
                coords.len()
            )));
        }
        let norm = coords.norm();
        if (norm - 1.0).abs() > GEOMETRY_TOL {
            return Err(Error::invalid_input(format!(
                "point norm {norm} is not 1 within {GEOMETRY_TOL}"
            )));
        }
        Ok(Self { coords })
    }

    /// Wraps and rescales an ambient vector of roughly unit length.
    /// Used after flows to absorb round-off drift; rejects vectors that
    /// are not even close.
    pub fn renormalized(mut coords: DVector<f64>) -> Result<Self> {
        let norm = coords.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::NumericalFailure(format!(
                "cannot renormalize: norm {norm} too far from 1"
            )));
        }
        coords /= norm;
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn ambient_dim(&self) -> usize {
        self.coords.len()
    }

    /// Standard basis point e_k.
    pub fn basis(ambient_dim: usize, k: usize) -> Result<Self> {
        if k >= ambient_dim {
            return Err(Error::invalid_input(format!(
                "basis index {k} out of range for dimension {ambient_dim}"
            )));
        }
        let mut coords = DVector::zeros(ambient_dim);
        coords[k] = 1.0;
        Self::new(coords)
    }
}

/// A tangent vector of S^{2m-1} at a base point: an ambient vector
/// orthogonal to the base within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: SpherePoint,
    components: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: SpherePoint, components: DVector<f64>) -> Result<Self> {
        if components.len() != base.ambient_dim() {
            return Err(Error::invalid_input(
                "tangent vector dimension does not match base point".to_string(),
            ));
        }
        let along = base.coords().dot(&components);
        if along.abs() > GEOMETRY_TOL * components.norm().max(1.0) {
            return Err(Error::invalid_input(format!(
                "vector is not tangent: component along base = {along:e}"
            )));
        }
        Ok(Self { base, components })
    }

    pub fn base(&self) -> &SpherePoint {
        &self.base
    }

    pub fn components(&self) -> &DVector<f64> {
        &self.components
    }

    /// Round (ambient Euclidean) norm.
    pub fn round_norm(&self) -> f64 {
        self.components.norm()
    }
}

/// Killing field of the round S^{2m-1} built from a coprime weight
/// tuple and an amplitude `mu`.
///
/// The generator acts on the j-th coordinate 2-plane as (p/p_j) times
/// the standard quarter-turn, and the field itself is `mu` times the
/// generator applied to the position. `mu` must stay strictly below
/// 1/a(p_1, ..., p_m), where
///
///   a = p * sqrt(sum_j 1/p_j^2),
///
/// which in particular keeps the pointwise sup norm mu * p/p_1 of the
/// field below 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KillingField {
    m: usize,
    weights: Vec<u64>,
    mu: f64,
    p: u64,
}

/// The amplitude bound invariant a(p_1, ..., p_m) = p * sqrt(sum 1/p_j^2).
///
/// Note this dominates the largest block rate p/p_1 (strictly for m >= 2),
/// so it is not the sup of the field's pointwise norms; see
/// [`KillingField::sup_norm`] for that quantity.
pub fn a_invariant(weights: &[u64]) -> Result<f64> {
    validate_weights(weights)?;
    let p: u64 = weights.iter().product();
    let sum: f64 = weights.iter().map(|&w| 1.0 / (w as f64 * w as f64)).sum();
    Ok(p as f64 * sum.sqrt())
}

fn validate_weights(weights: &[u64]) -> Result<()> {
    if weights.len() < 2 {
        return Err(Error::invalid_input(
            "need at least two weights (sphere dimension at least 3)".to_string(),
        ));
    }
    if weights.contains(&0) {
        return Err(Error::invalid_input("weights must be positive".to_string()));
    }
    for pair in weights.windows(2) {
        if pair[0] >= pair[1] {
            return Err(Error::invalid_input(format!(
                "weights must be strictly increasing, got {} >= {}",
                pair[0], pair[1]
            )));
        }
    }
    for i in 0..weights.len() {
        for j in i + 1..weights.len() {
            if gcd(weights[i], weights[j]) != 1 {
                return Err(Error::invalid_input(format!(
                    "weights {} and {} share a factor",
                    weights[i], weights[j]
                )));
            }
        }
    }
    let p: u64 = weights.iter().try_fold(1u64, |acc, &w| acc.checked_mul(w)).ok_or_else(
        || Error::invalid_input("weight product overflows".to_string()),
    )?;
    let _ = p;
    Ok(())
}

impl KillingField {
    pub fn new(m: usize, weights: Vec<u64>, mu: f64) -> Result<Self> {
        if weights.len() != m {
            return Err(Error::invalid_input(format!(
                "m = {m} does not match {} weights",
                weights.len()
            )));
        }
        validate_weights(&weights)?;
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::invalid_metric(format!("mu must be >= 0, got {mu}")));
        }
        let bound = 1.0 / a_invariant(&weights)?;
        if mu >= bound {
            return Err(Error::invalid_metric(format!(
                "mu = {mu} is not admissible: requires mu < 1/a = {bound}"
            )));
        }
        let p = weights.iter().product();
        Ok(Self { m, weights, mu, p })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Product of the weights.
    pub fn weight_product(&self) -> u64 {
        self.p
    }

    pub fn ambient_dim(&self) -> usize {
        2 * self.m
    }

    /// Angular rate mu * p/p_j of the flow on the j-th block (0-based).
    pub fn block_rate(&self, j: usize) -> f64 {
        self.mu * self.p as f64 / self.weights[j] as f64
    }

    /// All block rates (mu * p/p_1, ..., mu * p/p_m).
    pub fn block_rates(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.block_rate(j)).collect()
    }

    /// Sup over the sphere of the round norm of the field. The maximum
    /// sits on the first block, so this is mu * p/p_1.
    pub fn sup_norm(&self) -> f64 {
        self.block_rate(0)
    }

    /// mu * a(p_1, ..., p_m); the admissibility check keeps this < 1.
    pub fn mu_a(&self) -> f64 {
        self.mu * a_invariant(&self.weights).expect("weights validated at construction")
    }

    /// Applies mu times the generator to an arbitrary ambient vector.
    pub fn generator_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for j in 0..self.m {
            let r = self.block_rate(j);
            let (a, b) = (v[2 * j], v[2 * j + 1]);
            out[2 * j] = -r * b;
            out[2 * j + 1] = r * a;
        }
        out
    }

    /// Field value at a point, as a tangent vector.
    pub fn value_at(&self, x: &SpherePoint) -> Result<TangentVector> {
        self.check_dim(x)?;
        TangentVector::new(x.clone(), self.generator_apply(x.coords()))
    }

    /// The time-t rotation of the flow applied to an ambient vector.
    /// This is also the differential of the flow, the map being linear.
    pub fn rotate(&self, t: f64, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for j in 0..self.m {
            let theta = self.block_rate(j) * t;
            let (c, s) = (theta.cos(), theta.sin());
            let (a, b) = (v[2 * j], v[2 * j + 1]);
            out[2 * j] = c * a - s * b;
            out[2 * j + 1] = s * a + c * b;
        }
        out
    }

    /// Time-t flow of the field, with round-off renormalization.
    pub fn flow(&self, t: f64, x: &SpherePoint) -> Result<SpherePoint> {
        self.check_dim(x)?;
        SpherePoint::renormalized(self.rotate(t, x.coords()))
    }

    fn check_dim(&self, x: &SpherePoint) -> Result<()> {
        if x.ambient_dim() != self.ambient_dim() {
            return Err(Error::invalid_input(format!(
                "point dimension {} does not match field dimension {}",
                x.ambient_dim(),
                self.ambient_dim()
            )));
        }
        Ok(())
    }
}

/// Great circle c(t) = cos(speed t) u + sin(speed t) v with (u, v)
/// orthonormal. One period always has round length 2 pi.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreatCircle {
    u: DVector<f64>,
    v: DVector<f64>,
    speed: f64,
}

impl GreatCircle {
    pub fn new(u: DVector<f64>, v: DVector<f64>, speed: f64) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::invalid_input("u and v dimensions differ".to_string()));
        }
        if (u.norm() - 1.0).abs() > GEOMETRY_TOL
            || (v.norm() - 1.0).abs() > GEOMETRY_TOL
            || u.dot(&v).abs() > GEOMETRY_TOL
        {
            return Err(Error::invalid_input(
                "u, v must be orthonormal within 1e-12".to_string(),
            ));
        }
        if !(speed.is_finite() && speed > 0.0) {
            return Err(Error::invalid_input(format!("speed must be positive, got {speed}")));
        }
        Ok(Self { u, v, speed })
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Round period 2 pi / speed.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.speed
    }

    pub fn point(&self, t: f64) -> Result<SpherePoint> {
        let phase = self.speed * t;
        SpherePoint::renormalized(self.u.clone() * phase.cos() + self.v.clone() * phase.sin())
    }

    /// Velocity c'(t), a tangent vector at c(t).
    pub fn velocity(&self, t: f64) -> Result<TangentVector> {
        let phase = self.speed * t;
        let vel = (self.v.clone() * phase.cos() - self.u.clone() * phase.sin()) * self.speed;
        TangentVector::new(self.point(t)?, vel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn field_13() -> KillingField {
        KillingField::new(2, vec![1, 3], 0.1).unwrap()
    }

    #[test]
    fn a_invariant_values() {
        assert_abs_diff_eq!(a_invariant(&[1, 3]).unwrap(), 10f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a_invariant(&[1, 2, 3]).unwrap(), 7.0, epsilon = 1e-12);
    }

    #[test]
    fn block_rates_and_sup_norm() {
        let k = field_13();
        assert_abs_diff_eq!(k.block_rate(0), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(k.block_rate(1), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(k.sup_norm(), 0.3, epsilon = 1e-15);

        let k = KillingField::new(3, vec![1, 2, 5], 0.05).unwrap();
        assert_abs_diff_eq!(k.sup_norm(), 0.5, epsilon = 1e-15);

        let zero = KillingField::new(2, vec![1, 3], 0.0).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
    }

    #[test]
    fn sup_norm_maximizes_pointwise_field_norm() {
        let k = field_13();
        // Sample points; the field norm never exceeds the sup and the
        // first-block circle attains it.
        let e1 = SpherePoint::basis(4, 0).unwrap();
        let attained = k.value_at(&e1).unwrap().round_norm();
        assert_abs_diff_eq!(attained, k.sup_norm(), epsilon = 1e-14);
        for s in 0..64 {
            let t = s as f64 * 0.17;
            let coords = DVector::from_vec(vec![
                (t.cos() * 0.8),
                (t.sin() * 0.8),
                (t.cos() * 0.6),
                (t.sin() * 0.6),
            ]);
            let x = SpherePoint::renormalized(coords).unwrap();
            assert!(k.value_at(&x).unwrap().round_norm() <= k.sup_norm() + 1e-13);
        }
    }

    #[test]
    fn sup_norm_below_mu_a() {
        let k = field_13();
        assert!(k.sup_norm() <= k.mu_a());
    }

    #[test]
    fn flow_closes_on_first_block() {
        let k = field_13();
        let e1 = SpherePoint::basis(4, 0).unwrap();
        let back = k.flow(2.0 * PI / 0.3, &e1).unwrap();
        assert_abs_diff_eq!((back.coords() - e1.coords()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn flow_is_a_one_parameter_group() {
        let k = field_13();
        let x = SpherePoint::renormalized(DVector::from_vec(vec![0.5, -0.5, 0.5, 0.5])).unwrap();
        let (s, t) = (0.7, -2.3);
        let a = k.flow(s + t, &x).unwrap();
        let b = k.flow(s, &k.flow(t, &x).unwrap()).unwrap();
        assert_abs_diff_eq!((a.coords() - b.coords()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_preserves_round_norm() {
        let k = field_13();
        let v = DVector::from_vec(vec![0.3, -1.2, 0.4, 2.0]);
        assert_abs_diff_eq!(k.rotate(1.37, &v).norm(), v.norm(), epsilon = 1e-12);
    }

    #[test]
    fn field_value_at_basis_point() {
        let k = field_13();
        let e1 = SpherePoint::basis(4, 0).unwrap();
        let val = k.value_at(&e1).unwrap();
        let expect = DVector::from_vec(vec![0.0, 0.3, 0.0, 0.0]);
        assert_abs_diff_eq!((val.components() - expect).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_weights_and_mu() {
        assert!(KillingField::new(2, vec![1, 1], 0.1).is_err());
        assert!(KillingField::new(2, vec![2, 4], 0.1).is_err());
        assert!(KillingField::new(2, vec![3, 1], 0.1).is_err());
        assert!(KillingField::new(3, vec![1, 3], 0.1).is_err());
        // 1/a for (1,3) is about 0.3162; just above must be rejected.
        assert!(KillingField::new(2, vec![1, 3], 0.317).is_err());
        assert!(KillingField::new(2, vec![1, 3], 0.316).is_ok());
        assert!(KillingField::new(2, vec![1, 3], -0.1).is_err());
    }

    #[test]
    fn great_circle_half_turn() {
        let u = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let gc = GreatCircle::new(u.clone(), v, 2.0 * PI).unwrap();
        let half = gc.point(0.5).unwrap();
        assert_abs_diff_eq!((half.coords() + u).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gc.period(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn great_circle_velocity_is_tangent() {
        let u = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        let gc = GreatCircle::new(u, v, 1.0).unwrap();
        let vel = gc.velocity(0.9).unwrap();
        assert_abs_diff_eq!(vel.round_norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tangent_vector_rejects_non_orthogonal() {
        let e1 = SpherePoint::basis(4, 0).unwrap();
        let bad = DVector::from_vec(vec![0.5, 1.0, 0.0, 0.0]);
        assert!(TangentVector::new(e1, bad).is_err());
    }
}
