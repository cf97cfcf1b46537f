//! Deterministic ODE integration: an adaptive Dormand–Prince 5(4) solver
//! with cubic-Hermite dense output, and a fixed-step fourth-order rule kept
//! deliberately independent for cross-checking.

use crate::error::{Error, Result};

/// Continuous solution produced by the adaptive solver: accepted nodes with
/// states and derivatives, evaluable anywhere on [t0, t1] by cubic Hermite
/// interpolation (locally fourth-order, below the solver tolerance).
#[derive(Debug, Clone)]
pub struct OdeSolution {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    derivs: Vec<f64>,
}

impl OdeSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, node: usize) -> &[f64] {
        &self.states[node * self.dim..(node + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t1(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Evaluates the interpolant at t (clamped to the solved range).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(self.t0(), self.t1());
        let i = match self.times.partition_point(|&u| u <= t) {
            0 => 0,
            p => (p - 1).min(self.times.len() - 2),
        };
        let (ta, tb) = (self.times[i], self.times[i + 1]);
        let hseg = tb - ta;
        let s = if hseg > 0.0 { (t - ta) / hseg } else { 0.0 };
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let xa = &self.states[i * self.dim..(i + 1) * self.dim];
        let xb = &self.states[(i + 1) * self.dim..(i + 2) * self.dim];
        let da = &self.derivs[i * self.dim..(i + 1) * self.dim];
        let db = &self.derivs[(i + 1) * self.dim..(i + 2) * self.dim];
        for j in 0..self.dim {
            out[j] = h00 * xa[j] + h10 * hseg * da[j] + h01 * xb[j] + h11 * hseg * db[j];
        }
    }
}

/// Dormand–Prince 5(4) embedded pair with standard step control.
pub fn rk45<F>(field: F, x0: &[f64], t0: f64, t1: f64, rel_tol: f64, abs_tol: f64) -> Result<OdeSolution>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    // Fifth-order solution weights coincide with the last A row; the error
    // estimate uses the difference against the embedded fourth-order weights.
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    if !(t1 >= t0) {
        return Err(Error::invalid("time interval must be ordered"));
    }
    let dim = x0.len();
    let mut t = t0;
    let mut x = x0.to_vec();
    let mut k = vec![vec![0.0; dim]; 7];
    field(t, &x, &mut k[0]);

    let mut times = vec![t0];
    let mut states = x.clone();
    let mut derivs = k[0].clone();

    if t1 == t0 {
        return Ok(OdeSolution { dim, times, states, derivs });
    }

    let span = t1 - t0;
    let mut h = (span / 100.0).min(1e-2 * span.max(1.0)).max(span * 1e-10);
    let mut trial = vec![0.0; dim];
    let mut steps: u64 = 0;

    while t < t1 {
        if h < 1e-14 * span {
            return Err(Error::StepUnderflow { t, h });
        }
        if t + h > t1 {
            h = t1 - t;
        }
        // Stages 2..7 (k[0] carried over, first-same-as-last).
        for s in 0..6 {
            for j in 0..dim {
                let mut acc = 0.0;
                for (r, kr) in k.iter().enumerate().take(s + 1) {
                    acc += A[s][r] * kr[j];
                }
                trial[j] = x[j] + h * acc;
            }
            field(t + C[s] * h, &trial, &mut k[s + 1]);
        }
        // k[6] is the derivative at the fifth-order trial point; `trial`
        // currently holds that point because the last A row is the solution.
        let mut err: f64 = 0.0;
        for j in 0..dim {
            let mut e = 0.0;
            for (r, kr) in k.iter().enumerate() {
                e += E[r] * kr[j];
            }
            let scale = abs_tol + rel_tol * x[j].abs().max(trial[j].abs());
            err = err.max((h * e / scale).abs());
        }
        if !err.is_finite() {
            return Err(Error::Explosion { t, norm: f64::INFINITY });
        }
        if err <= 1.0 {
            t += h;
            x.copy_from_slice(&trial);
            let (head, tail) = k.split_at_mut(1);
            head[0].copy_from_slice(&tail[5]);
            times.push(t);
            states.extend_from_slice(&x);
            derivs.extend_from_slice(&k[0]);
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
        steps += 1;
        if steps > 50_000_000 {
            return Err(Error::StepUnderflow { t, h });
        }
    }
    Ok(OdeSolution { dim, times, states, derivs })
}

/// Classic fixed-step fourth-order integrator; returns the terminal state.
/// Used as an independent oracle against the adaptive solver.
pub fn rk4_terminal<F>(field: F, x0: &[f64], t0: f64, t1: f64, n_steps: usize) -> Vec<f64>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let dim = x0.len();
    let h = (t1 - t0) / n_steps as f64;
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    for i in 0..n_steps {
        let t = t0 + i as f64 * h;
        field(t, &x, &mut k1);
        for j in 0..dim {
            tmp[j] = x[j] + 0.5 * h * k1[j];
        }
        field(t + 0.5 * h, &tmp, &mut k2);
        for j in 0..dim {
            tmp[j] = x[j] + 0.5 * h * k2[j];
        }
        field(t + 0.5 * h, &tmp, &mut k3);
        for j in 0..dim {
            tmp[j] = x[j] + h * k3[j];
        }
        field(t + h, &tmp, &mut k4);
        for j in 0..dim {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let sol = rk45(|_t, x, dx| dx[0] = -0.5 * x[0], &[1.0], 0.0, 2.0, 1e-10, 1e-12).unwrap();
        assert_relative_eq!(sol.terminal()[0], (-1.0f64).exp(), max_relative = 1e-9);
        for &t in &[0.3, 1.1, 1.7] {
            assert_relative_eq!(sol.eval(t)[0], (-0.5 * t).exp(), max_relative = 1e-8);
        }
    }

    #[test]
    fn harmonic_oscillator_energy_is_conserved() {
        let field = |_t: f64, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -x[0];
        };
        let sol = rk45(field, &[1.0, 0.0], 0.0, 20.0, 1e-10, 1e-12).unwrap();
        let x = sol.terminal();
        assert_relative_eq!(x[0], 20.0f64.cos(), epsilon = 1e-7);
        assert_relative_eq!(x[1], -20.0f64.sin(), epsilon = 1e-7);
    }

    #[test]
    fn adaptive_and_fixed_rules_agree() {
        let field = |t: f64, x: &[f64], dx: &mut [f64]| dx[0] = (t - x[0]).sin() + 0.1 * x[0];
        let a = rk45(field, &[0.2], 0.0, 3.0, 1e-11, 1e-13).unwrap();
        let b = rk4_terminal(field, &[0.2], 0.0, 3.0, 6000);
        assert_relative_eq!(a.terminal()[0], b[0], max_relative = 1e-9);
    }

    #[test]
    fn stiffness_blowup_reports_explosion_or_underflow() {
        // x' = x², finite-time blowup at t = 1.
        let res = rk45(|_t, x, dx| dx[0] = x[0] * x[0], &[1.0], 0.0, 2.0, 1e-8, 1e-10);
        assert!(res.is_err());
    }

    #[test]
    fn zero_span_returns_initial_state() {
        let sol = rk45(|_t, _x, dx| dx[0] = 1.0, &[4.0], 1.0, 1.0, 1e-8, 1e-10).unwrap();
        assert_eq!(sol.terminal(), &[4.0]);
    }
}
