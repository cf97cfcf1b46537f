//! Coefficient sets for the slow–fast jump systems, benchmark instances with
//! known closed forms, and sampled verification of the structural hypotheses
//! the estimators rely on.

use crate::error::{Error, Result};
use crate::levy::{nu_integral, LevyMeasureSpec, MarkSampler};
use crate::report::ValidationReport;
use crate::rng::{stream_rng, StreamKind};
use rand::Rng as _;

/// Two-argument vector field writing its value into `out`.
pub type Field2 = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Three-argument vector field writing its value into `out`.
pub type Field3 = Box<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// The coefficient quadruple of a slow–fast system with jumps, together with
/// the structural constants the estimators reference.
///
/// Shapes: a(x, y) ∈ ℝ^d, c(x, z) ∈ ℝ^d, f(x, y) ∈ ℝ^k, h(x, y, z) ∈ ℝ^k,
/// with x ∈ ℝ^d (slow), y ∈ ℝ^k (fast), z ∈ ℝ^d (mark).
pub struct SystemCoefficients {
    slow_dim: usize,
    fast_dim: usize,
    a: Field2,
    c: Field2,
    f: Field2,
    h: Field3,
    /// Lipschitz constant for the slow drift in (x, y) jointly.
    pub lipschitz: f64,
    /// Bound Λ in |h(x, y, z)| ≤ Λ|z|.
    pub jump_bound: f64,
    /// Contraction rate β₁ in the fast-variable dissipativity inequality.
    pub beta1: f64,
    /// Slow-state allowance β₂ in the same inequality.
    pub beta2: f64,
    /// Declares c(x, z) independent of x, enabling cached jump integrals.
    pub slow_jump_state_free: bool,
    /// Declares z ↦ c(x, z) and z ↦ h(x, y, z) odd, so compensator drifts
    /// vanish under symmetric measures.
    pub odd_jumps: bool,
}

impl std::fmt::Debug for SystemCoefficients {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("SystemCoefficients")
            .field("slow_dim", &self.slow_dim)
            .field("fast_dim", &self.fast_dim)
            .field("lipschitz", &self.lipschitz)
            .field("jump_bound", &self.jump_bound)
            .field("beta1", &self.beta1)
            .field("beta2", &self.beta2)
            .finish_non_exhaustive()
    }
}

impl SystemCoefficients {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        slow_dim: usize,
        fast_dim: usize,
        a: Field2,
        c: Field2,
        f: Field2,
        h: Field3,
        lipschitz: f64,
        jump_bound: f64,
        beta1: f64,
        beta2: f64,
    ) -> Result<SystemCoefficients> {
        if slow_dim == 0 || fast_dim == 0 {
            return Err(Error::invalid("state dimensions must be positive"));
        }
        if !(lipschitz > 0.0) || !(jump_bound >= 0.0) || !(beta1 > 0.0) || !(beta2 >= 0.0) {
            return Err(Error::invalid("structural constants must be positive"));
        }
        Ok(SystemCoefficients {
            slow_dim,
            fast_dim,
            a,
            c,
            f,
            h,
            lipschitz,
            jump_bound,
            beta1,
            beta2,
            slow_jump_state_free: false,
            odd_jumps: false,
        })
    }

    pub fn with_state_free_slow_jumps(mut self) -> Self {
        self.slow_jump_state_free = true;
        self
    }

    pub fn with_odd_jumps(mut self) -> Self {
        self.odd_jumps = true;
        self
    }

    pub fn slow_dim(&self) -> usize {
        self.slow_dim
    }

    pub fn fast_dim(&self) -> usize {
        self.fast_dim
    }

    pub fn a_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.slow_dim);
        (self.a)(x, y, out);
    }

    pub fn c_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.slow_dim);
        (self.c)(x, z, out);
    }

    pub fn f_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.fast_dim);
        (self.f)(x, y, out);
    }

    pub fn h_into(&self, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.fast_dim);
        (self.h)(x, y, z, out);
    }

    pub fn a(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.slow_dim];
        self.a_into(x, y, &mut out);
        out
    }

    pub fn c(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.slow_dim];
        self.c_into(x, z, &mut out);
        out
    }

    pub fn f(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.fast_dim];
        self.f_into(x, y, &mut out);
        out
    }

    pub fn h(&self, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.fast_dim];
        self.h_into(x, y, z, &mut out);
        out
    }

    /// d = k = 1 system with every closed form available: slow drift
    /// a = −x + κy with coupling κ = 1/2, fast relaxation f = −(y − x),
    /// unit jump coefficients c = z and h = z.
    pub fn linear_benchmark() -> SystemCoefficients {
        Self::linear_with_slow_bias(0.0)
    }

    /// Linear benchmark with a constant bias added to the slow drift,
    /// breaking the fixed point away from the origin.
    pub fn linear_with_slow_bias(bias: f64) -> SystemCoefficients {
        SystemCoefficients::new(
            1,
            1,
            Box::new(move |x, y, out| out[0] = -x[0] + 0.5 * y[0] + bias),
            Box::new(|_x, z, out| out[0] = z[0]),
            Box::new(|x, y, out| out[0] = -(y[0] - x[0])),
            Box::new(|_x, _y, z, out| out[0] = z[0]),
            1.0,
            1.0,
            2.0,
            1e-12,
        )
        .expect("benchmark constants are valid")
        .with_state_free_slow_jumps()
        .with_odd_jumps()
    }

    /// Benchmark with the slow fixed point tilted off the origin by +0.1.
    pub fn tilted_benchmark() -> SystemCoefficients {
        Self::linear_with_slow_bias(0.1)
    }

    /// No drift at all; jumps pass the mark through. With a zero-mass
    /// measure this freezes the state entirely.
    pub fn zero_system(slow_dim: usize, fast_dim: usize) -> SystemCoefficients {
        SystemCoefficients::new(
            slow_dim,
            fast_dim,
            Box::new(|_x, _y, out| out.fill(0.0)),
            Box::new(move |_x, z, out| {
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = *zi;
                }
            }),
            Box::new(|_x, _y, out| out.fill(0.0)),
            Box::new(move |_x, _y, _z, out| out.fill(0.0)),
            1.0,
            0.0,
            1.0,
            0.0,
        )
        .expect("zero system constants are valid")
        .with_state_free_slow_jumps()
        .with_odd_jumps()
    }

    /// Cubic repulsion on the slow variable; blows up in finite time from
    /// |x₀| > 0 and exists to exercise the explosion guard.
    pub fn diverging_benchmark() -> SystemCoefficients {
        SystemCoefficients::new(
            1,
            1,
            Box::new(|x, _y, out| out[0] = x[0] * x[0] * x[0]),
            Box::new(|_x, z, out| out[0] = z[0]),
            Box::new(|x, y, out| out[0] = -(y[0] - x[0])),
            Box::new(|_x, _y, z, out| out[0] = z[0]),
            1.0,
            1.0,
            2.0,
            1e-12,
        )
        .expect("benchmark constants are valid")
        .with_state_free_slow_jumps()
        .with_odd_jumps()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Samples the structural hypotheses over random states and marks.
///
/// Required checks: joint Lipschitz bound on a, the linear-growth bound on h
/// in the mark, the fast-variable difference dissipativity inequality, and
/// consistency of the declared structure flags. The condition a(0, y) = 0 is
/// reported informationally: systems that violate it still simulate, but the
/// origin-anchored growth bounds do not apply to them.
pub fn check_hypotheses(
    coeffs: &SystemCoefficients,
    spec: &LevyMeasureSpec,
    master_seed: u64,
) -> Result<ValidationReport> {
    const PAIRS: usize = 10_000;
    const BOX_HALF_WIDTH: f64 = 3.0;
    const SLACK: f64 = 1e-9;

    if spec.dim() != coeffs.slow_dim() {
        return Err(Error::invalid("measure dimension must match the slow dimension"));
    }

    let mut report = ValidationReport::default();
    let mut rng = stream_rng(master_seed, StreamKind::Validation, 1, 0);
    let d = coeffs.slow_dim();
    let k = coeffs.fast_dim();
    let sampler = MarkSampler::new(spec, spec.sim_region())?;

    let draw = |rng: &mut crate::rng::Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-BOX_HALF_WIDTH..BOX_HALF_WIDTH)).collect()
    };

    // Joint Lipschitz bound on the slow drift.
    let mut worst_ratio: f64 = 0.0;
    let (mut a1, mut a2) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..PAIRS {
        let (x1, y1) = (draw(&mut rng, d), draw(&mut rng, k));
        let (x2, y2) = (draw(&mut rng, d), draw(&mut rng, k));
        coeffs.a_into(&x1, &y1, &mut a1);
        coeffs.a_into(&x2, &y2, &mut a2);
        let da = a1.iter().zip(&a2).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        let dx = x1.iter().zip(&x2).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        let dy = y1.iter().zip(&y2).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        let denom = coeffs.lipschitz * (dx + dy);
        if denom > 0.0 {
            worst_ratio = worst_ratio.max(da / denom);
        }
    }
    report.push(
        "slow_drift_lipschitz",
        worst_ratio <= 1.0 + SLACK,
        true,
        Some(worst_ratio),
        format!("max |Δa| / (L(|Δx|+|Δy|)) over {PAIRS} sampled pairs"),
    );

    // Linear growth of the fast jump coefficient in the mark.
    let mut worst_h: f64 = 0.0;
    let mut hv = vec![0.0; k];
    for _ in 0..PAIRS {
        let (x, y) = (draw(&mut rng, d), draw(&mut rng, k));
        let z = sampler.sample(&mut rng);
        coeffs.h_into(&x, &y, &z, &mut hv);
        let bound = coeffs.jump_bound * norm(&z);
        if bound > 0.0 {
            worst_h = worst_h.max(norm(&hv) / bound);
        } else if norm(&hv) > 0.0 {
            worst_h = f64::INFINITY;
        }
    }
    report.push(
        "fast_jump_linear_growth",
        worst_h <= 1.0 + SLACK,
        true,
        Some(worst_h),
        format!("max |h| / (Λ|z|) over {PAIRS} sampled states and marks"),
    );

    // Does h depend on the fast state at all? Decides whether the
    // dissipativity inequality needs its quadrature term.
    let mut h_varies_in_y = false;
    {
        let (mut h1, mut h2) = (vec![0.0; k], vec![0.0; k]);
        for _ in 0..128 {
            let x = draw(&mut rng, d);
            let (y1, y2) = (draw(&mut rng, k), draw(&mut rng, k));
            let z = sampler.sample(&mut rng);
            coeffs.h_into(&x, &y1, &z, &mut h1);
            coeffs.h_into(&x, &y2, &z, &mut h2);
            if h1.iter().zip(&h2).any(|(u, v)| (u - v).abs() > 1e-14) {
                h_varies_in_y = true;
                break;
            }
        }
    }

    // Difference-form dissipativity of the fast dynamics.
    let quad_pairs = if h_varies_in_y { 200 } else { PAIRS };
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    let (mut f1, mut f2) = (vec![0.0; k], vec![0.0; k]);
    let mut diss_ok = true;
    for _ in 0..quad_pairs {
        let x = draw(&mut rng, d);
        let (y1, y2) = (draw(&mut rng, k), draw(&mut rng, k));
        coeffs.f_into(&x, &y1, &mut f1);
        coeffs.f_into(&x, &y2, &mut f2);
        let inner: f64 = y1
            .iter()
            .zip(&y2)
            .zip(f1.iter().zip(&f2))
            .map(|((u, v), (p, q))| (u - v) * (p - q))
            .sum();
        let jump_term = if h_varies_in_y {
            nu_integral(
                spec,
                |z| {
                    let hy1 = coeffs.h(&x, &y1, z);
                    let hy2 = coeffs.h(&x, &y2, z);
                    hy1.iter().zip(&hy2).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()
                },
                spec.sim_region(),
            )?
        } else {
            0.0
        };
        let dy2 = y1.iter().zip(&y2).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
        let x2 = x.iter().map(|u| u * u).sum::<f64>();
        let lhs = 2.0 * inner + jump_term;
        let rhs = -coeffs.beta1 * dy2 + coeffs.beta2 * x2;
        let scale = dy2.max(x2).max(1.0);
        worst_gap = worst_gap.max(lhs - rhs);
        if lhs > rhs + SLACK * scale {
            diss_ok = false;
        }
    }
    report.push(
        "fast_difference_dissipativity",
        diss_ok,
        true,
        Some(worst_gap),
        format!("max LHS−RHS of the contraction inequality over {quad_pairs} sampled pairs"),
    );

    // Informational: does the slow drift vanish at the origin?
    let mut worst_a0: f64 = 0.0;
    let zero_x = vec![0.0; d];
    let mut a0 = vec![0.0; d];
    for _ in 0..256 {
        let y = draw(&mut rng, k);
        coeffs.a_into(&zero_x, &y, &mut a0);
        worst_a0 = worst_a0.max(norm(&a0));
    }
    report.push(
        "slow_drift_vanishes_at_origin",
        worst_a0 <= 1e-12,
        false,
        Some(worst_a0),
        "max |a(0, y)|; systems with a tilted fixed point fail this informationally",
    );

    // Declared structure flags must match sampled behavior.
    if coeffs.slow_jump_state_free {
        let (mut c1, mut c2) = (vec![0.0; d], vec![0.0; d]);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let (x1, x2) = (draw(&mut rng, d), draw(&mut rng, d));
            let z = sampler.sample(&mut rng);
            coeffs.c_into(&x1, &z, &mut c1);
            coeffs.c_into(&x2, &z, &mut c2);
            worst = worst.max(c1.iter().zip(&c2).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max));
        }
        report.push(
            "slow_jump_state_free_declared",
            worst <= 1e-13,
            true,
            Some(worst),
            "declared x-independence of c verified on sampled states",
        );
    }
    if coeffs.odd_jumps {
        let (mut p, mut q) = (vec![0.0; d.max(k)], vec![0.0; d.max(k)]);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let (x, y) = (draw(&mut rng, d), draw(&mut rng, k));
            let z = sampler.sample(&mut rng);
            let neg: Vec<f64> = z.iter().map(|v| -v).collect();
            coeffs.c_into(&x, &z, &mut p[..d]);
            coeffs.c_into(&x, &neg, &mut q[..d]);
            worst = worst
                .max(p[..d].iter().zip(&q[..d]).map(|(u, v)| (u + v).abs()).fold(0.0, f64::max));
            coeffs.h_into(&x, &y, &z, &mut p[..k]);
            coeffs.h_into(&x, &y, &neg, &mut q[..k]);
            worst = worst
                .max(p[..k].iter().zip(&q[..k]).map(|(u, v)| (u + v).abs()).fold(0.0, f64::max));
        }
        report.push(
            "odd_jump_coefficients_declared",
            worst <= 1e-13,
            true,
            Some(worst),
            "declared oddness of z ↦ c, h verified on sampled states",
        );
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian1() -> LevyMeasureSpec {
        LevyMeasureSpec::gaussian(1, 1.0).unwrap()
    }

    #[test]
    fn linear_benchmark_passes_all_required_checks() {
        let coeffs = SystemCoefficients::linear_benchmark();
        let report = check_hypotheses(&coeffs, &gaussian1(), 7).unwrap();
        assert!(report.passed(), "{report}");
        // The coupled drift keeps a(0, y) = 0.5y ≠ 0; informational only.
        let origin = report.check("slow_drift_vanishes_at_origin").unwrap();
        assert!(!origin.passed && !origin.required);
    }

    #[test]
    fn tilted_benchmark_passes_required_but_not_origin_condition() {
        let coeffs = SystemCoefficients::tilted_benchmark();
        let report = check_hypotheses(&coeffs, &gaussian1(), 7).unwrap();
        assert!(report.passed(), "{report}");
        let origin = report.check("slow_drift_vanishes_at_origin").unwrap();
        assert!(!origin.passed && !origin.required);
    }

    #[test]
    fn wrong_lipschitz_constant_is_caught() {
        let mut coeffs = SystemCoefficients::linear_benchmark();
        coeffs.lipschitz = 0.4;
        let report = check_hypotheses(&coeffs, &gaussian1(), 7).unwrap();
        assert!(!report.passed());
        assert!(!report.check("slow_drift_lipschitz").unwrap().passed);
    }

    #[test]
    fn false_structure_declaration_is_caught() {
        let coeffs = SystemCoefficients::new(
            1,
            1,
            Box::new(|x, y, out| out[0] = -x[0] + 0.5 * y[0]),
            // c depends on x, contradicting the declaration below.
            Box::new(|x, z, out| out[0] = x[0] * z[0]),
            Box::new(|x, y, out| out[0] = -(y[0] - x[0])),
            Box::new(|_x, _y, z, out| out[0] = z[0]),
            1.0,
            1.0,
            2.0,
            1e-12,
        )
        .unwrap()
        .with_state_free_slow_jumps();
        let report = check_hypotheses(&coeffs, &gaussian1(), 7).unwrap();
        assert!(!report.check("slow_jump_state_free_declared").unwrap().passed);
    }

    #[test]
    fn benchmark_closed_form_values() {
        let coeffs = SystemCoefficients::linear_benchmark();
        assert_eq!(coeffs.a(&[1.0], &[0.0]), vec![-1.0]);
        assert_eq!(coeffs.a(&[0.0], &[2.0]), vec![1.0]);
        assert_eq!(coeffs.f(&[1.0], &[3.0]), vec![-2.0]);
        assert_eq!(coeffs.c(&[5.0], &[0.25]), vec![0.25]);
        assert_eq!(coeffs.h(&[5.0], &[1.0], &[-0.5]), vec![-0.5]);
        let tilted = SystemCoefficients::tilted_benchmark();
        assert_eq!(tilted.a(&[0.0], &[0.0]), vec![0.1]);
    }
}
