//! One-dimensional quadrature primitives.
//!
//! Two independent rule families are provided on purpose: Romberg
//! (trapezoid refinement with Richardson extrapolation, accepted when two
//! successive refinement levels agree to a relative tolerance) drives the
//! adaptive integrators, while composite Gauss-Legendre serves as a second
//! route for cross-checks and for cached fixed-node rules in hot loops.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Default acceptance tolerance for two successive refinement levels.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

/// Romberg table depth. 2^MAX_LEVEL + 1 evaluations at the deepest level.
const MAX_LEVEL: usize = 18;

/// Integrates f on [a, b] by Romberg extrapolation. Accepts once two
/// successive diagonal entries agree within `rel_tol` relatively (with a small
/// absolute floor for integrals that vanish).
pub fn romberg<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::invalid(format!("bad interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let h0 = b - a;
    let mut row = vec![0.5 * h0 * (f(a) + f(b))];
    let mut prev_diag = row[0];
    for level in 1..=MAX_LEVEL {
        let n_new = 1usize << (level - 1);
        let h = h0 / (1 << level) as f64;
        let mut sum = 0.0;
        for i in 0..n_new {
            sum += f(a + h * (2 * i + 1) as f64);
        }
        let mut next = Vec::with_capacity(level + 1);
        next.push(0.5 * row[0] + h * sum);
        let mut pow4 = 1.0;
        for j in 1..=level {
            pow4 *= 4.0;
            let val = next[j - 1] + (next[j - 1] - row[j - 1]) / (pow4 - 1.0);
            next.push(val);
        }
        let diag = next[level];
        if !diag.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand detected on [{a}, {b}]"
            )));
        }
        if level >= 3 {
            let scale = diag.abs().max(1e-300);
            if (diag - prev_diag).abs() <= rel_tol * scale + f64::MIN_POSITIVE {
                return Ok(diag);
            }
        }
        prev_diag = diag;
        row = next;
    }
    Err(Error::Quadrature(format!(
        "no convergence on [{a}, {b}] after {MAX_LEVEL} refinement levels"
    )))
}

/// Recursion depth cap for adaptive subdivision.
const MAX_DEPTH: usize = 48;

/// Adaptive Simpson integration: an interval is accepted when its refinement
/// by bisection changes the Simpson value by at most the local budget, and
/// the accepted value carries the Richardson correction (S2 - S1)/15.
/// Subdivision isolates kinks that defeat single-interval extrapolation.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let scale = composite_gl(f, a, b, 4).abs().max(1e-300);
    let eps = rel_tol * scale;
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_recurse(f, a, b, fa, fm, fb, whole, eps, 0)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    if !(flm.is_finite() && frm.is_finite()) {
        return Err(Error::Quadrature(format!(
            "non-finite integrand near [{a:.6e}, {b:.6e}]"
        )));
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let refined = left + right;
    if depth >= 2 && (refined - whole).abs() <= 15.0 * eps {
        return Ok(refined + (refined - whole) / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature(format!(
            "no convergence near [{a:.6e}, {b:.6e}] at depth {MAX_DEPTH}"
        )));
    }
    let l = simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * eps, depth + 1)?;
    let r = simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * eps, depth + 1)?;
    Ok(l + r)
}

/// Integrates f on [a, b], substituting r = e^u when the interval spans many
/// octaves so that integrable endpoint blow-ups become smooth.
pub fn integrate_interval<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    if a > 0.0 && b / a > 8.0 {
        let (la, lb) = (a.ln(), b.ln());
        adaptive_simpson(&|u: f64| { let r = u.exp(); f(r) * r }, la, lb, rel_tol)
    } else {
        adaptive_simpson(f, a, b, rel_tol)
    }
}

/// Integrates f on [a, `inf`) by doubling the truncation radius until two
/// consecutive shells contribute a negligible fraction of the running total.
/// Growing shell contributions are reported as divergence.
pub fn integrate_tail<F: Fn(f64) -> f64>(f: &F, a: f64, rel_tol: f64) -> Result<f64> {
    let mut r0 = a;
    let mut r1 = if a > 1.0 { 2.0 * a } else { a + 1.0 };
    let mut total = integrate_interval(f, r0, r1, rel_tol)?;
    let mut last = total.abs();
    let mut quiet = 0usize;
    let mut growing = 0usize;
    for _ in 0..64 {
        r0 = r1;
        r1 *= 2.0;
        let shell = integrate_interval(f, r0, r1, rel_tol)?;
        total += shell;
        if !total.is_finite() || total.abs() > 1e290 {
            return Err(Error::Quadrature(
                "tail integral overflow; integrand not integrable".into(),
            ));
        }
        let mag = shell.abs();
        growing = if mag > last && mag > rel_tol * total.abs() { growing + 1 } else { 0 };
        if growing >= 3 {
            return Err(Error::Quadrature(format!(
                "tail contributions grow beyond r = {r0:.3e}; integrand appears divergent"
            )));
        }
        quiet = if mag <= 0.25 * rel_tol * total.abs().max(1e-300) { quiet + 1 } else { 0 };
        if quiet >= 2 {
            return Ok(total);
        }
        last = mag;
    }
    Err(Error::Quadrature(
        "tail integral did not stabilize within 64 doublings".into(),
    ))
}

const GL_ORDER: usize = 16;

fn gl_nodes() -> &'static [(f64, f64); GL_ORDER] {
    static NODES: OnceLock<[(f64, f64); GL_ORDER]> = OnceLock::new();
    NODES.get_or_init(|| {
        // Nodes of the Legendre polynomial on [-1, 1] by Newton iteration.
        let n = GL_ORDER;
        let mut out = [(0.0, 0.0); GL_ORDER];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            out[i] = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        out
    })
}

/// Composite 16-point Gauss-Legendre rule with `panels` equal panels.
pub fn composite_gl<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let nodes = gl_nodes();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let mut acc = 0.0;
        for &(x, w) in nodes.iter() {
            acc += w * f(mid + half * x);
        }
        total += acc * half;
    }
    total
}

/// Fixed nodes and weights on [a, b], refined until two successive panel
/// doublings agree within `rel_tol`. The finer node set is kept so repeated
/// weighted sums against different integrands stay cheap and deterministic.
#[derive(Debug, Clone)]
pub struct FixedRule {
    pub nodes: Vec<(f64, f64)>,
}

impl FixedRule {
    pub fn build<F: Fn(f64) -> f64>(probe: &F, a: f64, b: f64, rel_tol: f64) -> Result<FixedRule> {
        if b <= a {
            return Ok(FixedRule { nodes: Vec::new() });
        }
        let mut panels = 1usize;
        let mut prev = composite_gl(probe, a, b, panels);
        for _ in 0..12 {
            panels *= 2;
            let cur = composite_gl(probe, a, b, panels);
            if (cur - prev).abs() <= rel_tol * cur.abs().max(1e-300) {
                let nodes_static = gl_nodes();
                let h = (b - a) / panels as f64;
                let mut nodes = Vec::with_capacity(panels * GL_ORDER);
                for p in 0..panels {
                    let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
                    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                    for &(x, w) in nodes_static.iter() {
                        nodes.push((mid + half * x, w * half));
                    }
                }
                return Ok(FixedRule { nodes });
            }
            prev = cur;
        }
        Err(Error::Quadrature(format!(
            "fixed rule on [{a:.3e}, {b:.3e}] did not stabilize"
        )))
    }

    /// Weighted sum of `f` over the stored nodes.
    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().map(|&(x, w)| w * f(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SQRT_PI: f64 = 1.7724538509055159;

    #[test]
    fn romberg_matches_closed_forms() {
        let v = romberg(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-12);
        let v = romberg(|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-12).unwrap();
        assert_relative_eq!(v, SQRT_PI, max_relative = 1e-12);
    }

    #[test]
    fn log_substitution_handles_steep_endpoints() {
        // int_a^1 r^{-3/2} dr = 2 (a^{-1/2} - 1)
        let a = 1e-6;
        let v = integrate_interval(&|r: f64| r.powf(-1.5), a, 1.0, 1e-11).unwrap();
        assert_relative_eq!(v, 2.0 * (a.powf(-0.5) - 1.0), max_relative = 1e-9);
    }

    #[test]
    fn tail_integral_converges_and_detects_divergence() {
        let v = integrate_tail(&|r: f64| (-r).exp(), 0.0, 1e-10).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-9);
        // Gaussian second moment over the whole line: 2 int_0^inf r^2 e^{-r^2} dr.
        let v = 2.0 * integrate_tail(&|r: f64| r * r * (-r * r).exp(), 0.0, 1e-10).unwrap();
        assert_relative_eq!(v, 0.5 * SQRT_PI, max_relative = 1e-9);
        assert!(integrate_tail(&|r: f64| (0.1 * r).exp(), 0.0, 1e-10).is_err());
    }

    #[test]
    fn two_rule_families_agree() {
        let f = |r: f64| r.powf(-1.5) * (-r * r).exp();
        let a = romberg(|u: f64| { let r = u.exp(); f(r) * r }, (1e-3f64).ln(), (6.0f64).ln(), 1e-11).unwrap();
        let b = {
            let mut panels = 8;
            let mut prev = composite_gl(&f, 1e-3, 6.0, panels);
            loop {
                panels *= 2;
                let cur = composite_gl(&f, 1e-3, 6.0, panels);
                if (cur - prev).abs() < 1e-11 * cur.abs() {
                    break cur;
                }
                prev = cur;
            }
        };
        assert_relative_eq!(a, b, max_relative = 1e-9);
    }

    #[test]
    fn fixed_rule_reproduces_adaptive_value() {
        let f = |r: f64| (-r * r).exp();
        let rule = FixedRule::build(&f, 0.0, 8.0, 1e-12).unwrap();
        assert_relative_eq!(rule.apply(f), 0.5 * SQRT_PI, max_relative = 1e-11);
    }
}
