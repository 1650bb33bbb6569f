//! Embedded Dormand-Prince 5(4) integrator with per-step cubic Hermite
//! dense output, used for the geodesic and variational flows.
//!
//! Steps are error-controlled against mixed absolute/relative
//! tolerances; accepted states can be projected back onto flow
//! invariants by the system. Dense evaluation interpolates within a
//! stored step from its endpoint states and derivatives, which keeps
//! interpolation error far below the pointwise tolerances the callers
//! assert, given the default step cap.

use crate::error::{Error, Result};

pub(crate) trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
    /// Pulls an accepted state back onto invariant constraints.
    /// Returns true if the state was modified.
    fn project(&self, _y: &mut [f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Cap on accepted steps, guarding against runaway loops.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-11, max_step: 0.05, max_steps: 4_000_000 }
    }
}

/// One accepted step with the data needed for dense evaluation.
#[derive(Debug, Clone)]
pub(crate) struct DenseStep {
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
}

impl DenseStep {
    /// Cubic Hermite interpolation at t in [t0, t1].
    #[allow(clippy::needless_range_loop)]
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for i in 0..out.len() {
            out[i] = h00 * self.y0[i] + h * h10 * self.f0[i] + h01 * self.y1[i]
                + h * h11 * self.f1[i];
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct OdeSolution {
    pub steps: Vec<DenseStep>,
    pub t_end: f64,
    pub y_end: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

impl OdeSolution {
    /// Dense evaluation anywhere on the integrated span.
    pub fn eval(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let first = self.steps.first().ok_or_else(|| {
            Error::IntegrationFailure("empty solution has no dense span".to_string())
        })?;
        let (a, b) = (first.t0, self.t_end);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if t < lo - 1e-9 || t > hi + 1e-9 {
            return Err(Error::invalid_input(format!(
                "dense evaluation time {t} outside integrated span [{lo}, {hi}]"
            )));
        }
        // Steps are time-ordered in the direction of integration.
        let forward = b >= a;
        let idx = self
            .steps
            .partition_point(|s| if forward { s.t1 < t } else { s.t1 > t })
            .min(self.steps.len() - 1);
        self.steps[idx].eval(t, out);
        Ok(())
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_ERR: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrates from (t0, y0) to t1 (either direction), storing dense
/// steps when `dense` is set.
pub(crate) fn integrate<S: OdeSystem>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    t1: f64,
    opts: &OdeOptions,
    dense: bool,
) -> Result<OdeSolution> {
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::invalid_input("state dimension mismatch".to_string()));
    }
    let span = t1 - t0;
    let dir = if span >= 0.0 { 1.0 } else { -1.0 };
    let mut sol = OdeSolution {
        steps: Vec::new(),
        t_end: t0,
        y_end: y0.to_vec(),
        accepted: 0,
        rejected: 0,
    };
    if span == 0.0 {
        return Ok(sol);
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut y_stage = vec![0.0; n];
    let mut y_next = vec![0.0; n];
    sys.rhs(t, &y, &mut k[0]);

    let mut h = (opts.max_step.min(span.abs() / 10.0)).max(1e-8) * dir;

    loop {
        if sol.accepted + sol.rejected >= opts.max_steps {
            return Err(Error::IntegrationFailure(format!(
                "step budget {} exhausted at t = {t}",
                opts.max_steps
            )));
        }
        let remaining = t1 - t;
        if remaining.abs() <= 1e-14 * (1.0 + t.abs()) {
            break;
        }
        if h.abs() > remaining.abs() {
            h = remaining;
        }
        if h.abs() < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::IntegrationFailure(format!(
                "step size underflow at t = {t} (h = {h:e})"
            )));
        }

        // Stages 2..7 (stage 7 doubles as the FSAL derivative).
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            sys.rhs(t + C[s] * h, &y_stage, &mut tail[0]);
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if B[j] != 0.0 {
                    acc += B[j] * kj[i];
                }
            }
            y_next[i] = y[i] + h * acc;
        }

        // Weighted RMS error of the embedded difference.
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if B_ERR[j] != 0.0 {
                    e += B_ERR[j] * kj[i];
                }
            }
            e *= h;
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_next[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / n as f64).sqrt();

        if err <= 1.0 {
            // k[6] is f(t+h, y_next) already: FSAL.
            let mut f1 = k[6].clone();
            let moved = sys.project(&mut y_next);
            if moved {
                sys.rhs(t + h, &y_next, &mut f1);
            }
            if dense {
                sol.steps.push(DenseStep {
                    t0: t,
                    t1: t + h,
                    y0: y.clone(),
                    y1: y_next.clone(),
                    f0: k[0].clone(),
                    f1: f1.clone(),
                });
            }
            t += h;
            std::mem::swap(&mut y, &mut y_next);
            k[0].copy_from_slice(&f1);
            sol.accepted += 1;
        } else {
            sol.rejected += 1;
        }

        // A non-finite error estimate would turn the clamp into a NaN and
        // defeat every loop guard; treat it as a hard reject instead.
        let factor = if err == 0.0 {
            5.0
        } else if err.is_finite() {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            0.2
        };
        h *= factor;
        if h.abs() > opts.max_step {
            h = opts.max_step * dir;
        }
    }

    sol.t_end = t;
    sol.y_end = y;
    Ok(sol)
}

/// Convenience wrapper returning only the final state.
pub(crate) fn integrate_final<S: OdeSystem>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    t1: f64,
    opts: &OdeOptions,
) -> Result<Vec<f64>> {
    Ok(integrate(sys, y0, t0, t1, opts, false)?.y_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Oscillator;

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    #[test]
    fn oscillator_period() {
        let opts = OdeOptions::default();
        let y = integrate_final(&Oscillator, &[1.0, 0.0], 0.0, 2.0 * std::f64::consts::PI, &opts)
            .unwrap();
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(y[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn dense_output_tracks_solution() {
        let opts = OdeOptions::default();
        let sol = integrate(&Oscillator, &[1.0, 0.0], 0.0, 6.0, &opts, true).unwrap();
        let mut buf = [0.0; 2];
        for i in 0..120 {
            let t = 0.05 * i as f64;
            sol.eval(t, &mut buf).unwrap();
            assert_abs_diff_eq!(buf[0], t.cos(), epsilon = 1e-8);
            assert_abs_diff_eq!(buf[1], -t.sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn backward_integration() {
        let opts = OdeOptions::default();
        let fwd = integrate_final(&Oscillator, &[1.0, 0.0], 0.0, 1.7, &opts).unwrap();
        let back = integrate_final(&Oscillator, &fwd, 1.7, 0.0, &opts).unwrap();
        assert_abs_diff_eq!(back[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(back[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn energy_drift_over_long_span() {
        let opts = OdeOptions::default();
        let span = 20.0 * std::f64::consts::PI;
        let y = integrate_final(&Oscillator, &[1.0, 0.0], 0.0, span, &opts).unwrap();
        let energy = y[0] * y[0] + y[1] * y[1];
        assert_abs_diff_eq!(energy, 1.0, epsilon = 1e-9);
    }
}
