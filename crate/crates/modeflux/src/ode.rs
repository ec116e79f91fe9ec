//! Adaptive Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! The moment equations are linear, slowly varying and non-stiff away from
//! turning points, which is exactly the regime an explicit embedded pair
//! handles well. Integration may run forward or backward in the independent
//! variable; requested output points are produced from the fourth-order
//! continuous extension, so the output grid never constrains the step.

use crate::error::{Error, Result};

/// Step-size control parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; `None` selects one automatically.
    pub h_init: Option<f64>,
    /// Maximum step magnitude; `None` means the full interval.
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-14, h_init: None, h_max: None, max_steps: 200_000 }
    }
}

/// Values of the solution at the requested output points.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrate `dy/dt = f(t, y)` from `t0` to `t1` (either direction) and
/// return the solution at each point of `outputs`.
///
/// `outputs` must lie in `[min(t0,t1), max(t0,t1)]` and be ordered along the
/// direction of integration. The right-hand side may fail (for example when
/// coefficients cannot be built), which aborts the integration.
pub fn solve<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, outputs: &[f64], opts: &OdeOptions) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    for w in outputs.windows(2) {
        if (w[1] - w[0]) * dir < 0.0 {
            return Err(Error::SolverToleranceExceeded("output points not ordered along integration".into()));
        }
    }
    let lo = t0.min(t1);
    let hi = t0.max(t1);
    if outputs.iter().any(|&t| t < lo - 1e-12 * span.max(1.0) || t > hi + 1e-12 * span.max(1.0)) {
        return Err(Error::SolverToleranceExceeded("output point outside the integration interval".into()));
    }

    let mut sol = OdeSolution {
        t: Vec::with_capacity(outputs.len()),
        y: Vec::with_capacity(outputs.len()),
        accepted_steps: 0,
        rejected_steps: 0,
        rhs_evaluations: 0,
    };
    let mut next_out = 0;
    // Outputs coinciding with the start are emitted directly.
    while next_out < outputs.len() && (outputs[next_out] - t0) * dir <= 0.0 {
        sol.t.push(outputs[next_out]);
        sol.y.push(y0.to_vec());
        next_out += 1;
    }
    if span == 0.0 {
        return Ok(sol);
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    f(t, &y, &mut k1)?;
    sol.rhs_evaluations += 1;

    let h_max = opts.h_max.unwrap_or(span).min(span);
    let mut h = match opts.h_init {
        Some(h0) => h0.abs().min(h_max),
        None => initial_step(&y, &k1, span, opts).min(h_max),
    };
    let mut err_prev: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if sol.accepted_steps + sol.rejected_steps >= opts.max_steps {
            return Err(Error::SolverToleranceExceeded(format!(
                "step budget {} exhausted at t = {t}",
                opts.max_steps
            )));
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h < 1e-14 * span.max(t.abs()) {
            return Err(Error::SolverToleranceExceeded(format!("step size underflow at t = {t}")));
        }
        let hs = h * dir;

        for i in 0..n {
            ytmp[i] = y[i] + hs * A21 * k1[i];
        }
        f(t + C2 * hs, &ytmp, &mut k2)?;
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * hs, &ytmp, &mut k3)?;
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * hs, &ytmp, &mut k4)?;
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * hs, &ytmp, &mut k5)?;
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + hs };
        f(t + hs, &ytmp, &mut k6)?;
        for i in 0..n {
            ynew[i] = y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t_new, &ynew, &mut k7)?;
        sol.rhs_evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = if n > 0 { (err / n as f64).sqrt() } else { 0.0 };
        if !err.is_finite() {
            return Err(Error::SolverToleranceExceeded(format!("non-finite state near t = {t}")));
        }

        if err <= 1.0 {
            // Emit dense output for requested points inside (t, t_new].
            while next_out < outputs.len() && (outputs[next_out] - t_new) * dir <= 0.0 {
                let theta = ((outputs[next_out] - t) / hs).clamp(0.0, 1.0);
                let th1 = 1.0 - theta;
                let mut yo = vec![0.0; n];
                for i in 0..n {
                    let ydiff = ynew[i] - y[i];
                    let bspl = hs * k1[i] - ydiff;
                    let r4 = ydiff - hs * k7[i] - bspl;
                    let r5 = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                    yo[i] = y[i] + theta * (ydiff + th1 * (bspl + theta * (r4 + th1 * r5)));
                }
                if theta == 1.0 {
                    yo.copy_from_slice(&ynew);
                }
                sol.t.push(outputs[next_out]);
                sol.y.push(yo);
                next_out += 1;
            }
            t = t_new;
            y.copy_from_slice(&ynew);
            std::mem::swap(&mut k1, &mut k7);
            sol.accepted_steps += 1;
            if last {
                while next_out < outputs.len() {
                    sol.t.push(outputs[next_out]);
                    sol.y.push(y.clone());
                    next_out += 1;
                }
                return Ok(sol);
            }
            // PI controller (Hairer–Wanner constants for DOPRI5).
            let mut fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(h_max);
            err_prev = err.max(1e-4);
            last_rejected = false;
        } else {
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            sol.rejected_steps += 1;
            last_rejected = true;
        }
    }
}

fn initial_step(y: &[f64], f0: &[f64], span: f64, opts: &OdeOptions) -> f64 {
    let n = y.len().max(1) as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(f0) {
        let sc = opts.atol + opts.rtol * yi.abs();
        d0 += (yi / sc).powi(2);
        d1 += (fi / sc).powi(2);
    }
    let d0 = (d0 / n).sqrt();
    let d1 = (d1 / n).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
    h.min(0.1 * span).max(1e-10 * span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_backward() {
        // y' = 0.3 y integrated from 0 down to −10: y(−10) = e^{−3}.
        let outs: Vec<f64> = (0..=10).map(|i| -(i as f64)).collect();
        let sol = solve(
            |_, y, dy| {
                dy[0] = 0.3 * y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            -10.0,
            &outs,
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in sol.t.iter().zip(&sol.y) {
            assert!((y[0] - (0.3 * t).exp()).abs() < 1e-9, "t={t} y={}", y[0]);
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let outs: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let sol = solve(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            0.0,
            &[0.0, 1.0],
            10.0,
            &outs,
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in sol.t.iter().zip(&sol.y) {
            assert!((y[0] - t.sin()).abs() < 1e-8, "t={t}");
            assert!((y[1] - t.cos()).abs() < 1e-8, "t={t}");
        }
    }
}
