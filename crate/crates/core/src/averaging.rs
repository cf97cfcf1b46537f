//! Invariant-measure estimation for the frozen fast process, the averaged
//! drift and its tabulation, mixing-rate estimation, averaging-principle
//! experiments, and a characteristic-function cross-check for linear
//! (OU-type) fast dynamics.

use crate::error::{Error, Result};
use crate::levy::{levy_symbol, LevyMeasureSpec, MarkSampler};
use crate::msde::{averaged_from_stream, AveragedSystem, Compensator, SimEngine};
use crate::ode::{self, OdeSolution};
use crate::prm::{simulate_with_sampler, ControlGrid, JumpStream};
use crate::quad;
use crate::rng::{stream_rng, Rng, StreamKind};
use crate::stats::{self, BatchMeans, RunningMoments};
use crate::system::SystemCoefficients;

/// Time-averaged statistics of the fast process with the slow argument
/// frozen, together with the averaged drift sample at that point.
#[derive(Debug, Clone)]
pub struct InvariantEstimate {
    pub frozen_x: Vec<f64>,
    /// Time-averaged fast state (invariant mean estimate).
    pub mean: Vec<f64>,
    /// Time-averaged centered second moments, row-major k×k.
    pub covariance: Vec<f64>,
    /// Time average of a(frozen_x, Y_s): the averaged drift at frozen_x.
    pub abar_at_x: Vec<f64>,
    /// Batch-means standard error per component of `abar_at_x`.
    pub abar_stderr: Vec<f64>,
    /// Batch-means standard error per component of `mean`.
    pub mean_stderr: Vec<f64>,
    /// Batch-means standard error per entry of `covariance`, from the
    /// scatter of centered products (the sample variance is translation
    /// invariant, so the global-mean centering adds no first-order error).
    pub covariance_stderr: Vec<f64>,
    pub n_samples: u64,
    pub burn_in: f64,
    /// Witnessed constant in ∫|y|² μ(dy) ≤ C (1 + |x|² + |y₀|²).
    pub second_moment_ratio: f64,
    /// True when first- and second-half averages disagree by more than five
    /// standard errors, indicating the run never settled.
    pub nonstationary: bool,
}

/// Integrates the fast equation at unit speed with the slow argument frozen:
/// dY = f(x̄, Y) dt + jumps h(x̄, Y, z) of a unit-rate compensated stream.
/// Returns states at the uniform grid (step h_step).
pub fn frozen_fast_path(
    coeffs: &SystemCoefficients,
    spec: &LevyMeasureSpec,
    frozen_x: &[f64],
    y0: &[f64],
    horizon: f64,
    h_step: f64,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(h_step > 0.0) || !(horizon > 0.0) {
        return Err(Error::invalid("need positive horizon and step"));
    }
    let k = coeffs.fast_dim();
    let region = spec.sim_region();
    let sampler = MarkSampler::new(spec, region)?;
    let stream = simulate_with_sampler(&sampler, 1.0, horizon, region, rng)?;
    let compensator = Compensator::new(coeffs, spec)?;
    let n = (horizon / h_step - 1e-9).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    let mut ys = Vec::with_capacity((n + 1) * k);
    let mut y = y0.to_vec();
    let mut fy = vec![0.0; k];
    let mut comp = vec![0.0; k];
    let mut hy = vec![0.0; k];
    ys.extend_from_slice(&y);
    let mut next_event = 0usize;
    for w in times.windows(2) {
        let (mut t, t1) = (w[0], w[1]);
        loop {
            let (t_event, has_event) = match stream.events.get(next_event) {
                Some(e) if e.time <= t1 => (e.time, true),
                _ => (t1, false),
            };
            while t < t_event - 1e-14 * horizon.max(1.0) {
                let h = h_step.min(t_event - t);
                coeffs.f_into(frozen_x, &y, &mut fy);
                if !compensator.is_zero() {
                    compensator.fast_into(coeffs, frozen_x, &y, &mut comp);
                }
                for j in 0..k {
                    y[j] += h * (fy[j] - comp[j]);
                }
                t += h;
                let norm = y.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
                if !norm.is_finite() || norm > crate::msde::DEFAULT_EXPLOSION_RADIUS {
                    return Err(Error::Explosion { t, norm });
                }
            }
            t = t_event;
            if has_event {
                let mark = &stream.events[next_event].mark;
                coeffs.h_into(frozen_x, &y, mark, &mut hy);
                for j in 0..k {
                    y[j] += hy[j];
                }
                next_event += 1;
            } else {
                break;
            }
        }
        ys.extend_from_slice(&y);
    }
    Ok((times, ys))
}

/// Ergodic time-average estimate of the invariant law of the frozen fast
/// process and of the averaged drift at `frozen_x`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_invariant(
    coeffs: &SystemCoefficients,
    spec: &LevyMeasureSpec,
    frozen_x: &[f64],
    y0: &[f64],
    t_long: f64,
    burn_in: f64,
    h_step: f64,
    rng: &mut Rng,
) -> Result<InvariantEstimate> {
    if !(burn_in >= 0.0 && burn_in < t_long) {
        return Err(Error::invalid("burn-in must lie inside the horizon"));
    }
    let d = coeffs.slow_dim();
    let k = coeffs.fast_dim();
    let (times, ys) = frozen_fast_path(coeffs, spec, frozen_x, y0, t_long, h_step, rng)?;
    let first = times.partition_point(|&t| t < burn_in);
    let n_used = times.len() - first;
    if n_used < 64 {
        return Err(Error::invalid("too few post-burn-in samples"));
    }
    const N_BATCHES: usize = 32;
    let mut mean_acc: Vec<BatchMeans> =
        (0..k).map(|_| BatchMeans::new(n_used as u64, N_BATCHES)).collect();
    let mut abar_acc: Vec<BatchMeans> =
        (0..d).map(|_| BatchMeans::new(n_used as u64, N_BATCHES)).collect();
    let mut second = vec![0.0; k * k];
    let mut sq_norm = 0.0;
    let mut a_buf = vec![0.0; d];
    for i in first..times.len() {
        let y = &ys[i * k..(i + 1) * k];
        for (j, acc) in mean_acc.iter_mut().enumerate() {
            acc.push(y[j]);
        }
        for p in 0..k {
            for q in 0..k {
                second[p * k + q] += y[p] * y[q];
            }
        }
        sq_norm += y.iter().map(|v| v * v).sum::<f64>();
        coeffs.a_into(frozen_x, y, &mut a_buf);
        for (j, acc) in abar_acc.iter_mut().enumerate() {
            acc.push(a_buf[j]);
        }
    }
    let inv_n = 1.0 / n_used as f64;
    let mean: Vec<f64> = mean_acc.iter().map(|a| a.mean()).collect();
    let mut covariance = vec![0.0; k * k];
    for p in 0..k {
        for q in 0..k {
            covariance[p * k + q] = second[p * k + q] * inv_n - mean[p] * mean[q];
        }
    }
    let mut cov_acc: Vec<BatchMeans> =
        (0..k * k).map(|_| BatchMeans::new(n_used as u64, N_BATCHES)).collect();
    for i in first..times.len() {
        let y = &ys[i * k..(i + 1) * k];
        for p in 0..k {
            for q in 0..k {
                cov_acc[p * k + q].push((y[p] - mean[p]) * (y[q] - mean[q]));
            }
        }
    }
    let mut nonstationary = false;
    for acc in mean_acc.iter().chain(abar_acc.iter()) {
        if let Some((a, b)) = acc.half_means() {
            let s = acc.stderr();
            if s.is_finite() && s > 0.0 && (a - b).abs() > 5.0 * s {
                nonstationary = true;
            }
        }
    }
    let x2: f64 = frozen_x.iter().map(|v| v * v).sum();
    let y02: f64 = y0.iter().map(|v| v * v).sum();
    Ok(InvariantEstimate {
        frozen_x: frozen_x.to_vec(),
        mean,
        covariance,
        abar_at_x: abar_acc.iter().map(|a| a.mean()).collect(),
        abar_stderr: abar_acc.iter().map(|a| a.stderr()).collect(),
        mean_stderr: mean_acc.iter().map(|a| a.stderr()).collect(),
        covariance_stderr: cov_acc.iter().map(|a| a.stderr()).collect(),
        n_samples: n_used as u64,
        burn_in,
        second_moment_ratio: sq_norm * inv_n / (1.0 + x2 + y02),
        nonstationary,
    })
}

/// Tabulated averaged drift on a one-dimensional slow grid with linear
/// interpolation (linear extrapolation beyond the end nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct AbarTable {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Max divided difference over adjacent nodes (Lipschitz audit value).
    pub lipschitz_bound: f64,
}

impl AbarTable {
    pub fn from_columns(xs: Vec<f64>, values: Vec<f64>, stderrs: Vec<f64>) -> Result<AbarTable> {
        if xs.len() < 2 || xs.len() != values.len() || xs.len() != stderrs.len() {
            return Err(Error::invalid("table needs matching columns with ≥ 2 nodes"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("table nodes must be strictly increasing"));
        }
        let lipschitz_bound = xs
            .windows(2)
            .zip(values.windows(2))
            .map(|(xw, vw)| ((vw[1] - vw[0]) / (xw[1] - xw[0])).abs())
            .fold(0.0f64, f64::max);
        Ok(AbarTable { xs, values, stderrs, lipschitz_bound })
    }

    /// Piecewise-linear evaluation, extrapolating with the end slopes.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&u| u <= x) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    }

    /// Serializes as CSV: header then one `x,abar,stderr` row per node.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,abar,stderr\n");
        for i in 0..self.xs.len() {
            s.push_str(&format!("{},{},{}\n", self.xs[i], self.values[i], self.stderrs[i]));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<AbarTable> {
        let mut xs = Vec::new();
        let mut values = Vec::new();
        let mut stderrs = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (ln == 0 && line.starts_with('x')) {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = |what: &str| -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| Error::invalid(format!("line {}: missing {what}", ln + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("line {}: {e}", ln + 1)))
            };
            xs.push(next("x")?);
            values.push(next("abar")?);
            stderrs.push(next("stderr")?);
        }
        AbarTable::from_columns(xs, values, stderrs)
    }
}

/// Estimates the averaged drift on a grid of slow states (d = 1).
#[allow(clippy::too_many_arguments)]
pub fn abar_table(
    coeffs: &SystemCoefficients,
    spec: &LevyMeasureSpec,
    x_grid: &[f64],
    y0: &[f64],
    t_long: f64,
    burn_in: f64,
    h_step: f64,
    master_seed: u64,
) -> Result<AbarTable> {
    if coeffs.slow_dim() != 1 {
        return Err(Error::invalid("drift tabulation supports slow dimension 1"));
    }
    if x_grid.is_empty() {
        return Err(Error::invalid("empty tabulation grid"));
    }
    let mut values = Vec::with_capacity(x_grid.len());
    let mut stderrs = Vec::with_capacity(x_grid.len());
    for (node, &x) in x_grid.iter().enumerate() {
        let mut rng = stream_rng(master_seed, StreamKind::Averaging, node as u32, 0);
        let est = estimate_invariant(coeffs, spec, &[x], y0, t_long, burn_in, h_step, &mut rng)
            .map_err(|e| Error::Validation(format!("table node {node} (x = {x}): {e}")))?;
        values.push(est.abar_at_x[0]);
        stderrs.push(est.abar_stderr[0]);
    }
    AbarTable::from_columns(x_grid.to_vec(), values, stderrs)
}

/// Integrates the averaged ODE ẋ = ā(x) with the adaptive solver.
pub fn solve_averaged_ode<F>(abar: F, x0: &[f64], horizon: f64, tol: f64) -> Result<OdeSolution>
where
    F: Fn(&[f64], &mut [f64]),
{
    ode::rk45(|_t, x, dx| abar(x, dx), x0, 0.0, horizon, tol, tol * 1e-2)
}

/// Empirical mixing rate of the frozen fast process.
#[derive(Debug, Clone)]
pub struct MixingEstimate {
    pub horizons: Vec<f64>,
    /// α̂(T): normalized mean-square deviation of the time-averaged drift.
    pub alpha_values: Vec<f64>,
    pub alpha_stderrs: Vec<f64>,
    /// Slope of ln α̂ against ln T.
    pub log_log_slope: f64,
}

/// α̂(T) = E |T⁻¹∫₀^T a(x̄, Y_s) ds − ā(x̄)|² / (1 + |x̄|² + |y₀|²), by MC
/// over independent frozen-fast trajectories.
#[allow(clippy::too_many_arguments)]
pub fn estimate_mixing(
    coeffs: &SystemCoefficients,
    spec: &LevyMeasureSpec,
    frozen_x: &[f64],
    y0: &[f64],
    abar_at_x: &[f64],
    horizons: &[f64],
    replications: u64,
    h_step: f64,
    master_seed: u64,
) -> Result<MixingEstimate> {
    if horizons.is_empty() || horizons.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("mixing horizons must be positive"));
    }
    let d = coeffs.slow_dim();
    let norm_const = 1.0
        + frozen_x.iter().map(|v| v * v).sum::<f64>()
        + y0.iter().map(|v| v * v).sum::<f64>();
    let mut alpha_values = Vec::with_capacity(horizons.len());
    let mut alpha_stderrs = Vec::with_capacity(horizons.len());
    for (hi, &horizon) in horizons.iter().enumerate() {
        let mut acc = RunningMoments::new();
        let mut a_buf = vec![0.0; d];
        for rep in 0..replications {
            let mut rng = stream_rng(master_seed, StreamKind::Mixing, hi as u32, rep);
            let (times, ys) =
                frozen_fast_path(coeffs, spec, frozen_x, y0, horizon, h_step, &mut rng)?;
            let k = coeffs.fast_dim();
            let mut avg = vec![0.0; d];
            // Left-endpoint rule over the uniform grid.
            let n = times.len() - 1;
            for i in 0..n {
                coeffs.a_into(frozen_x, &ys[i * k..(i + 1) * k], &mut a_buf);
                for j in 0..d {
                    avg[j] += a_buf[j];
                }
            }
            let dev: f64 = avg
                .iter()
                .zip(abar_at_x)
                .map(|(s, ab)| {
                    let m = s / n as f64 - ab;
                    m * m
                })
                .sum();
            acc.push(dev / norm_const);
        }
        alpha_values.push(acc.mean());
        alpha_stderrs.push(acc.stderr());
    }
    let slope = if horizons.len() >= 2 {
        let ln_t: Vec<f64> = horizons.iter().map(|t| t.ln()).collect();
        let ln_a: Vec<f64> = alpha_values.iter().map(|a| a.max(1e-300).ln()).collect();
        stats::linear_fit(&ln_t, &ln_a).0
    } else {
        f64::NAN
    };
    Ok(MixingEstimate { horizons: horizons.to_vec(), alpha_values, alpha_stderrs, log_log_slope: slope })
}

/// Which reference path the slow trajectory is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    /// The deterministic averaged flow solved once from the averaged drift.
    DeterministicOde,
    /// The averaged jump equation driven by the same realized noise as the
    /// trajectory under test (required for controlled comparisons).
    AveragedSde,
}

#[derive(Debug, Clone)]
pub struct AveragingExperimentConfig {
    pub eps_grid: Vec<f64>,
    pub delta: f64,
    pub trials: u64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub comparator: Comparator,
    pub control: Option<ControlGrid>,
    /// When set, drives every path with an empty stream (a jump region of
    /// zero mass), making trajectories deterministic.
    pub noiseless: bool,
    /// Confidence level z-value for the Wilson intervals.
    pub z: f64,
}

impl AveragingExperimentConfig {
    pub fn new(eps_grid: Vec<f64>, delta: f64, trials: u64, horizon: f64) -> Self {
        AveragingExperimentConfig {
            eps_grid,
            delta,
            trials,
            horizon,
            x0: vec![1.0],
            y0: vec![0.0],
            comparator: Comparator::DeterministicOde,
            control: None,
            noiseless: false,
            z: stats::Z_95,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpsOutcome {
    pub eps: f64,
    pub exceedances: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

/// Per-ε empirical probability that the slow path strays more than δ from
/// its averaged reference in sup-distance over the record grid.
pub fn averaging_experiment(
    coeffs: &SystemCoefficients,
    spec: &LevyMeasureSpec,
    abar: impl Fn(&[f64], &mut [f64]) + Send + Sync + Copy,
    cfg: &AveragingExperimentConfig,
    master_seed: u64,
) -> Result<Vec<EpsOutcome>> {
    if cfg.eps_grid.is_empty() {
        return Err(Error::invalid("empty epsilon grid"));
    }
    let ode_ref = match cfg.comparator {
        Comparator::DeterministicOde => {
            Some(solve_averaged_ode(abar, &cfg.x0, cfg.horizon, 1e-10)?)
        }
        Comparator::AveragedSde => None,
    };
    let mut out = Vec::with_capacity(cfg.eps_grid.len());
    for (pi, &eps) in cfg.eps_grid.iter().enumerate() {
        let h_step = eps / 10.0;
        let engine = SimEngine::new(coeffs, spec, eps, cfg.horizon, h_step)?;
        let avg_sys = AveragedSystem::new(abar, coeffs);
        let mut exceed = 0u64;
        for trial in 0..cfg.trials {
            let mut rng = stream_rng(master_seed, StreamKind::Averaging, 1000 + pi as u32, trial);
            let stream = if cfg.noiseless {
                JumpStream::empty(cfg.horizon, spec.sim_region())
            } else {
                match &cfg.control {
                    Some(g) => engine.draw_controlled_stream(g, &mut rng)?,
                    None => engine.draw_stream(&mut rng)?,
                }
            };
            let path = engine.path_from_stream(&cfg.x0, &cfg.y0, &stream)?;
            let sup = match (&ode_ref, cfg.comparator) {
                (Some(sol), _) => {
                    let mut worst = 0.0f64;
                    let mut xref = vec![0.0; coeffs.slow_dim()];
                    for (i, &t) in path.times.iter().enumerate() {
                        sol.eval_into(t, &mut xref);
                        let dist = path
                            .slow_at(i)
                            .iter()
                            .zip(&xref)
                            .map(|(u, v)| (u - v) * (u - v))
                            .sum::<f64>()
                            .sqrt();
                        worst = worst.max(dist);
                    }
                    worst
                }
                (None, _) => {
                    let avg_path = averaged_from_stream(&avg_sys, &engine, &cfg.x0, &stream)?;
                    let mut worst = 0.0f64;
                    for i in 0..path.n_nodes() {
                        let dist = path
                            .slow_at(i)
                            .iter()
                            .zip(avg_path.state_at(i))
                            .map(|(u, v)| (u - v) * (u - v))
                            .sum::<f64>()
                            .sqrt();
                        worst = worst.max(dist);
                    }
                    worst
                }
            };
            if sup > cfg.delta {
                exceed += 1;
            }
        }
        let (lo, hi) = stats::wilson_interval(exceed, cfg.trials, cfg.z);
        out.push(EpsOutcome {
            eps,
            exceedances: exceed,
            trials: cfg.trials,
            p_hat: exceed as f64 / cfg.trials as f64,
            wilson_lo: lo,
            wilson_hi: hi,
        });
    }
    Ok(out)
}

/// One frequency of the characteristic-function check.
#[derive(Debug, Clone)]
pub struct CfPoint {
    pub xi: f64,
    pub empirical: f64,
    pub predicted: f64,
    pub discrepancy: f64,
    pub mc_stderr: f64,
    /// Truncation point of the s-integral and the bound on its dropped tail.
    pub s_star: f64,
    pub tail_bound: f64,
}

/// Compares the empirical characteristic function of the frozen fast
/// process's invariant law against exp(−∫₀^∞ ψ(e^{−c s} ξ) ds) for linear
/// relaxation at rate c (k = 1).
#[allow(clippy::too_many_arguments)]
pub fn invariant_cf_check(
    coeffs: &SystemCoefficients,
    spec: &LevyMeasureSpec,
    ou_rate: f64,
    xi_grid: &[f64],
    t_long: f64,
    burn_in: f64,
    h_step: f64,
    rng: &mut Rng,
) -> Result<Vec<CfPoint>> {
    if coeffs.fast_dim() != 1 || spec.dim() != 1 {
        return Err(Error::invalid("characteristic-function check supports k = d = 1"));
    }
    if !(ou_rate > 0.0) {
        return Err(Error::invalid("relaxation rate must be positive"));
    }
    // Verify the declared linear form f(0, y) = −c·y on probes.
    for probe in [-2.0, -0.5, 0.1, 1.7] {
        let fv = coeffs.f(&[0.0], &[probe]);
        if (fv[0] + ou_rate * probe).abs() > 1e-10 * probe.abs().max(1.0) {
            return Err(Error::Validation(format!(
                "fast drift is not linear at rate {ou_rate}: f(0, {probe}) = {}",
                fv[0]
            )));
        }
    }
    let (times, ys) = frozen_fast_path(coeffs, spec, &[0.0], &[0.0], t_long, h_step, rng)?;
    let first = times.partition_point(|&t| t < burn_in);
    let n_used = times.len() - first;
    let mut out = Vec::with_capacity(xi_grid.len());
    for &xi in xi_grid {
        let mut acc = BatchMeans::new(n_used as u64, 32);
        for i in first..times.len() {
            acc.push((xi * ys[i]).cos());
        }
        let (s_star, predicted, tail_bound) = cf_prediction(spec, ou_rate, xi)?;
        let empirical = acc.mean();
        out.push(CfPoint {
            xi,
            empirical,
            predicted,
            discrepancy: (empirical - predicted).abs(),
            mc_stderr: if n_used > 64 { acc.stderr() } else { f64::INFINITY },
            s_star,
            tail_bound,
        });
    }
    Ok(out)
}

/// Quadrature of exp(−∫₀^{s*} ψ(e^{−cs} ξ) ds) with the dropped tail bounded
/// through the small-frequency quadratic behavior of the symbol.
fn cf_prediction(spec: &LevyMeasureSpec, c: f64, xi: f64) -> Result<(f64, f64, f64)> {
    if xi == 0.0 {
        return Ok((0.0, 1.0, 0.0));
    }
    let cutoff = 1e-3;
    let s_star = (xi.abs() / cutoff).ln().max(0.0) / c;
    let integral = if s_star > 0.0 {
        quad::adaptive_simpson(
            &|s: f64| {
                levy_symbol(spec, &[(-c * s).exp() * xi])
                    .map(|v| v.re)
                    .unwrap_or(f64::NAN)
            },
            0.0,
            s_star,
            1e-10,
        )?
    } else {
        0.0
    };
    // For |u| ≤ cutoff, ψ(u) ≤ u²/2 · ∫z²ν(dz); integrate the envelope.
    let second_moment = crate::levy::nu_integral_radial(
        spec,
        |r| r * r,
        crate::levy::Annulus { lo: spec.delta_min().max(0.0), hi: f64::INFINITY },
    )?;
    let u_at_star = (-c * s_star).exp() * xi.abs();
    let tail_bound = second_moment / 2.0 * u_at_star * u_at_star / (2.0 * c);
    Ok((s_star, (-integral).exp(), tail_bound))
}
