//! Cost of tilting the jump intensity: the entropy functional on control
//! grids, the deterministic skeleton equation it drives, rate-function
//! evaluation by penalized minimization over control values, and the
//! quasi-potential / barrier-height computations built on top.

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::levy::LevyMeasureSpec;
use crate::ode;
use crate::prm::{CellRules, ControlGrid, MarkCell, Side};
use crate::rng::{stream_rng, StreamKind};
use rand::Rng as _;
use rayon::prelude::*;

/// Pointwise entropy density φ(g) = g ln g − g + 1 (φ(0) = 1, φ(1) = 0).
fn phi(g: f64) -> f64 {
    let v = if g == 0.0 { 1.0 } else { g * g.ln() - g + 1.0 };
    v.max(0.0)
}

/// Total tilting cost of a control: Σ over (interval, cell) of
/// Δt · φ(g) · ν(cell). Marks outside every cell carry g = 1 and cost 0.
pub fn entropy(control: &ControlGrid, spec: &LevyMeasureSpec) -> Result<f64> {
    let masses = control.cell_masses(spec)?;
    Ok(entropy_from_masses(control, &masses))
}

/// Entropy with the per-cell ν-masses precomputed (optimizer hot path).
pub(crate) fn entropy_from_masses(control: &ControlGrid, masses: &[f64]) -> f64 {
    let knots = control.time_knots();
    let n_cells = masses.len();
    let mut total = 0.0;
    for j in 0..control.n_intervals() {
        let dt = knots[j + 1] - knots[j];
        for (c, &mass) in masses.iter().enumerate() {
            total += dt * mass * phi(control.values()[j * n_cells + c]);
        }
    }
    total
}

/// Deterministic solution of the controlled slow equation
/// U̇ = ā(U) + ∫ c(U, z)(g(t, z) − 1) ν(dz), recorded on a dense grid.
#[derive(Debug, Clone)]
pub struct SkeletonPath {
    pub times: Vec<f64>,
    /// Row-major states, one row per time node.
    pub states: Vec<f64>,
    pub dim: usize,
    pub x0: Vec<f64>,
}

impl SkeletonPath {
    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    pub fn state_at(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state_at(self.n_nodes() - 1)
    }

    /// Linear interpolation on the record grid, clamped to the span.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.n_nodes();
        if t <= self.times[0] {
            out.copy_from_slice(self.state_at(0));
            return;
        }
        if t >= self.times[n - 1] {
            out.copy_from_slice(self.terminal());
            return;
        }
        let i = self.times.partition_point(|&u| u <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        for (k, o) in out.iter_mut().enumerate() {
            *o = (1.0 - w) * self.states[i * self.dim + k] + w * self.states[(i + 1) * self.dim + k];
        }
    }

    /// CSV rows `t,x_0,…,x_{d−1}` with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for k in 0..self.dim {
            s.push_str(&format!(",x{k}"));
        }
        s.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            s.push_str(&format!("{t}"));
            for v in self.state_at(i) {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Integrates the skeleton equation with the adaptive solver, one segment
/// per control interval (the nonlocal drift is constant-in-time within a
/// segment). `horizon` may end before the control grid does.
pub fn solve_skeleton<A, C>(
    abar: A,
    c: C,
    spec: &LevyMeasureSpec,
    control: &ControlGrid,
    x0: &[f64],
    horizon: f64,
    tol: f64,
) -> Result<SkeletonPath>
where
    A: Fn(&[f64], &mut [f64]),
    C: Fn(&[f64], &[f64], &mut [f64]),
{
    if !(horizon > 0.0) {
        return Err(Error::invalid("skeleton horizon must be positive"));
    }
    if horizon > control.horizon() * (1.0 + 1e-12) {
        return Err(Error::invalid("control grid ends before the requested horizon"));
    }
    let rules = CellRules::new(spec, control.cells())?;
    let d = x0.len();
    let m = control.n_intervals();
    let nodes_per_interval = (256usize / m).clamp(8, 256);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut x = x0.to_vec();
    times.push(0.0);
    states.extend_from_slice(&x);
    for j in 0..m {
        let t0 = control.time_knots()[j];
        if t0 >= horizon * (1.0 - 1e-15) {
            break;
        }
        let t1 = control.time_knots()[j + 1].min(horizon);
        let row = &control.values()[j * control.cells().len()..(j + 1) * control.cells().len()];
        let field = |_t: f64, u: &[f64], du: &mut [f64]| {
            abar(u, du);
            let mut cu = vec![0.0; d];
            for (cell, rule) in rules.rules.iter().enumerate() {
                let w = row[cell] - 1.0;
                if w == 0.0 {
                    continue;
                }
                for &(z, q) in rule {
                    c(u, &[z], &mut cu);
                    for (dv, cv) in du.iter_mut().zip(&cu) {
                        *dv += w * q * cv;
                    }
                }
            }
        };
        let sol = ode::rk45(field, &x, t0, t1, tol, tol * 1e-2)?;
        let mut buf = vec![0.0; d];
        for s in 1..=nodes_per_interval {
            let t = t0 + (t1 - t0) * s as f64 / nodes_per_interval as f64;
            sol.eval_into(t, &mut buf);
            times.push(t);
            states.extend_from_slice(&buf);
        }
        x.copy_from_slice(sol.terminal());
        let last = states.len() - d;
        states[last..].copy_from_slice(&x);
    }
    Ok(SkeletonPath { times, states, dim: d, x0: x0.to_vec() })
}

/// What the rate function pins down: either a whole reference path on its
/// grid or just the terminal state, each with a feasibility tolerance in
/// sup-distance.
pub enum RateTarget<'a> {
    Path { path: &'a SkeletonPath, tol: f64 },
    Endpoint { target: Vec<f64>, tol: f64 },
}

/// Search space and budgets for the rate-function minimization.
#[derive(Debug, Clone)]
pub struct OptConfig {
    pub n_intervals: usize,
    pub cells: Vec<MarkCell>,
    /// Penalty continuation stages.
    pub outer_iters: usize,
    /// Quasi-Newton iterations per stage.
    pub inner_iters: usize,
    /// Independent starts (first from the identity control).
    pub restarts: usize,
    pub seed: u64,
    /// Lineage index separating concurrent call sites.
    pub param_index: u32,
    /// Initial penalty weight μ; the violation term is ‖·‖²/μ.
    pub mu0: f64,
    pub mu_decay: f64,
    /// Adaptive-solver tolerance for reported values.
    pub ode_tol: f64,
    /// Endpoint tolerance used by the quasi-potential drivers.
    pub endpoint_tol: f64,
    /// Bound on ln g per cell value.
    pub theta_bound: f64,
    /// Fixed RK4 substeps per control interval inside the optimizer.
    pub steps_per_interval: usize,
    /// Central-difference step in ln-g space.
    pub fd_step: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            n_intervals: 8,
            cells: signed_band_cells(1.0),
            outer_iters: 5,
            inner_iters: 60,
            restarts: 3,
            seed: 1,
            param_index: 0,
            mu0: 0.1,
            mu_decay: 0.1,
            ode_tol: 1e-9,
            endpoint_tol: 1e-3,
            theta_bound: 4.0,
            steps_per_interval: 24,
            fd_step: 1e-5,
        }
    }
}

/// Four signed radial bands split at `split`: the default mark partition for
/// scalar marks.
pub fn signed_band_cells(split: f64) -> Vec<MarkCell> {
    vec![
        MarkCell::band(0.0, split, Side::Plus),
        MarkCell::band(split, f64::INFINITY, Side::Plus),
        MarkCell::band(0.0, split, Side::Minus),
        MarkCell::band(split, f64::INFINITY, Side::Minus),
    ]
}

/// Outcome of a rate-function minimization. An infeasible result stands in
/// for the value +∞; `value()` is `None` there rather than a sentinel float.
#[derive(Debug, Clone)]
pub struct ActionResult {
    pub entropy: f64,
    pub terminal: Vec<f64>,
    /// Sup-distance from the constraint (before subtracting its tolerance).
    pub violation: f64,
    pub feasible: bool,
    /// Total objective evaluations spent.
    pub evaluations: u64,
    /// Best penalized objective after each continuation stage.
    pub trace: Vec<f64>,
    pub control: ControlGrid,
}

impl ActionResult {
    /// The rate-function value: entropy when feasible, `None` standing in
    /// for +∞ otherwise.
    pub fn value(&self) -> Option<f64> {
        self.feasible.then_some(self.entropy)
    }
}

/// Shared pieces of one minimization problem.
struct RateProblem<'a, A, C> {
    abar: &'a A,
    c: &'a C,
    rules: Vec<Vec<(f64, f64)>>,
    masses: Vec<f64>,
    knots: Vec<f64>,
    n_cells: usize,
    d: usize,
    x0: &'a [f64],
    steps_per_interval: usize,
}

impl<'a, A, C> RateProblem<'a, A, C>
where
    A: Fn(&[f64], &mut [f64]),
    C: Fn(&[f64], &[f64], &mut [f64]),
{
    /// Fixed-step RK4 across the control intervals; optionally records the
    /// state at the sorted `record` times (each clamped into the span).
    fn integrate(&self, values: &[f64], record: Option<(&[f64], &mut Vec<f64>)>) -> Vec<f64> {
        let d = self.d;
        let mut x = self.x0.to_vec();
        let mut k1 = vec![0.0; d];
        let mut k2 = vec![0.0; d];
        let mut k3 = vec![0.0; d];
        let mut k4 = vec![0.0; d];
        let mut xs = vec![0.0; d];
        let mut cu = vec![0.0; d];
        let (rec_times, rec_out): (&[f64], Option<&mut Vec<f64>>) = match record {
            Some((t, out)) => {
                out.clear();
                (t, Some(out))
            }
            None => (&[], None),
        };
        let mut rec_out = rec_out;
        let mut next_rec = 0usize;
        let mut x_old = vec![0.0; d];
        if let Some(out) = rec_out.as_deref_mut() {
            while next_rec < rec_times.len() && rec_times[next_rec] <= 1e-12 {
                out.extend_from_slice(&x);
                next_rec += 1;
            }
        }
        for j in 0..self.knots.len() - 1 {
            let (t0, t1) = (self.knots[j], self.knots[j + 1]);
            let row = &values[j * self.n_cells..(j + 1) * self.n_cells];
            let mut field = |u: &[f64], du: &mut [f64]| {
                (self.abar)(u, du);
                for (cell, rule) in self.rules.iter().enumerate() {
                    let w = row[cell] - 1.0;
                    if w == 0.0 {
                        continue;
                    }
                    for &(z, q) in rule {
                        (self.c)(u, &[z], &mut cu);
                        for (dv, cv) in du.iter_mut().zip(cu.iter()) {
                            *dv += w * q * cv;
                        }
                    }
                }
            };
            let h = (t1 - t0) / self.steps_per_interval as f64;
            let mut t = t0;
            for _ in 0..self.steps_per_interval {
                x_old.copy_from_slice(&x);
                field(&x, &mut k1);
                for i in 0..d {
                    xs[i] = x[i] + 0.5 * h * k1[i];
                }
                field(&xs, &mut k2);
                for i in 0..d {
                    xs[i] = x[i] + 0.5 * h * k2[i];
                }
                field(&xs, &mut k3);
                for i in 0..d {
                    xs[i] = x[i] + h * k3[i];
                }
                field(&xs, &mut k4);
                for i in 0..d {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                let t_new = t + h;
                if let Some(out) = rec_out.as_deref_mut() {
                    while next_rec < rec_times.len() && rec_times[next_rec] <= t_new + 1e-12 {
                        let w = ((rec_times[next_rec] - t) / h).clamp(0.0, 1.0);
                        for i in 0..d {
                            out.push((1.0 - w) * x_old[i] + w * x[i]);
                        }
                        next_rec += 1;
                    }
                }
                t = t_new;
            }
        }
        // Flush any trailing record times past the horizon.
        if let Some(out) = rec_out.as_deref_mut() {
            while next_rec < rec_times.len() {
                out.extend_from_slice(&x);
                next_rec += 1;
            }
        }
        x
    }

    fn entropy_of(&self, values: &[f64]) -> f64 {
        let mut total = 0.0;
        for j in 0..self.knots.len() - 1 {
            let dt = self.knots[j + 1] - self.knots[j];
            for (c, &mass) in self.masses.iter().enumerate() {
                total += dt * mass * phi(values[j * self.n_cells + c]);
            }
        }
        total
    }

    /// Constraint deviation in sup-distance (tolerance not yet subtracted).
    fn deviation(&self, values: &[f64], target: &RateTarget, scratch: &mut Vec<f64>) -> f64 {
        match target {
            RateTarget::Endpoint { target, .. } => {
                let term = self.integrate(values, None);
                term.iter()
                    .zip(target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            }
            RateTarget::Path { path, .. } => {
                self.integrate(values, Some((&path.times, scratch)));
                let mut worst = 0.0f64;
                for i in 0..path.n_nodes() {
                    let dist = scratch[i * self.d..(i + 1) * self.d]
                        .iter()
                        .zip(path.state_at(i))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(dist);
                }
                worst
            }
        }
    }
}

fn target_tol(target: &RateTarget) -> f64 {
    match target {
        RateTarget::Endpoint { tol, .. } | RateTarget::Path { tol, .. } => *tol,
    }
}

/// Minimizes the tilting entropy over the control values subject to the
/// path or endpoint constraint, by quadratic-penalty continuation with a
/// BFGS inner descent on ln g. Infeasibility at budget is reported in
/// the result, not raised.
pub fn rate_function<A, C>(
    abar: A,
    c: C,
    spec: &LevyMeasureSpec,
    target: &RateTarget,
    x0: &[f64],
    horizon: f64,
    cfg: &OptConfig,
) -> Result<ActionResult>
where
    A: Fn(&[f64], &mut [f64]),
    C: Fn(&[f64], &[f64], &mut [f64]),
{
    if !(horizon > 0.0) {
        return Err(Error::invalid("rate-function horizon must be positive"));
    }
    if let RateTarget::Path { path, .. } = target {
        let end = *path.times.last().unwrap_or(&f64::NAN);
        if (end - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::invalid("reference path does not span the horizon"));
        }
    }
    let template = ControlGrid::constant(
        horizon,
        cfg.n_intervals,
        cfg.cells.clone(),
        vec![1.0; cfg.cells.len()],
    )?;
    let masses = template.cell_masses(spec)?;
    let rules = CellRules::new(spec, template.cells())?;
    let tol = target_tol(target);
    let problem = RateProblem {
        abar: &abar,
        c: &c,
        rules: rules.rules,
        masses,
        knots: template.time_knots().to_vec(),
        n_cells: cfg.cells.len(),
        d: x0.len(),
        x0,
        steps_per_interval: cfg.steps_per_interval.max(4),
    };
    let n = cfg.n_intervals * cfg.cells.len();
    let mut evals: u64 = 0;
    let mut scratch = Vec::new();

    // The identity control is the unconstrained global minimum (entropy 0);
    // accept it outright when it already meets the constraint.
    let id_values = vec![1.0; n];
    let id_dev = problem.deviation(&id_values, target, &mut scratch);
    evals += 1;
    if id_dev <= tol {
        return finish_result(
            &abar, &c, spec, target, x0, horizon, cfg, &template, id_values, evals, vec![0.0],
        );
    }

    let hinge = |dev: f64| (dev - tol).max(0.0);
    let mut best_theta: Option<Vec<f64>> = None;
    let mut best_key = (false, f64::INFINITY); // (feasible, entropy or deviation)
    let mut trace = Vec::new();
    for restart in 0..cfg.restarts.max(1) {
        let mut theta = vec![0.0; n];
        if restart > 0 {
            let mut rng = stream_rng(cfg.seed, StreamKind::Action, cfg.param_index, restart as u64);
            for th in theta.iter_mut() {
                *th = rng.random_range(-0.75..0.75);
            }
        }
        let mut mu = cfg.mu0;
        let base_stages = cfg.outer_iters.max(1);
        // Continuation may extend past the configured stages (up to twice as
        // many) while the iterate is still outside the constraint tolerance.
        let max_stages = 2 * base_stages;
        let mut stage = 0;
        let (dev, ent) = loop {
            let objective = |th: &[f64], evals: &mut u64, scratch: &mut Vec<f64>| -> f64 {
                *evals += 1;
                let values: Vec<f64> = th.iter().map(|t| t.exp()).collect();
                let dev = problem.deviation(&values, target, scratch);
                let h = hinge(dev);
                problem.entropy_of(&values) + h * h / mu
            };
            bfgs_minimize(
                &mut theta,
                cfg.theta_bound,
                cfg.inner_iters,
                cfg.fd_step,
                &mut evals,
                &mut scratch,
                objective,
            );
            let values: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
            let dev = problem.deviation(&values, target, &mut scratch);
            evals += 1;
            stage += 1;
            if stage >= base_stages && (dev <= tol || stage >= max_stages) {
                break (dev, problem.entropy_of(&values));
            }
            mu *= cfg.mu_decay;
        };
        trace.push(ent + hinge(dev).powi(2) / mu);
        let key: (bool, f64) = if dev <= tol { (true, ent) } else { (false, dev) };
        let better = match (key.0, best_key.0) {
            (true, false) => true,
            (false, true) => false,
            _ => key.1 < best_key.1,
        };
        if better {
            best_key = key;
            best_theta = Some(theta);
        }
    }
    let values: Vec<f64> = best_theta
        .expect("at least one restart ran")
        .iter()
        .map(|t| t.exp())
        .collect();
    finish_result(&abar, &c, spec, target, x0, horizon, cfg, &template, values, evals, trace)
}

/// Re-evaluates the chosen control with the adaptive solver and assembles
/// the result; feasibility is judged on this high-accuracy pass.
#[allow(clippy::too_many_arguments)]
fn finish_result<A, C>(
    abar: &A,
    c: &C,
    spec: &LevyMeasureSpec,
    target: &RateTarget,
    x0: &[f64],
    horizon: f64,
    cfg: &OptConfig,
    template: &ControlGrid,
    values: Vec<f64>,
    evaluations: u64,
    trace: Vec<f64>,
) -> Result<ActionResult>
where
    A: Fn(&[f64], &mut [f64]),
    C: Fn(&[f64], &[f64], &mut [f64]),
{
    let control = template.with_values(values)?;
    let path = solve_skeleton(abar, c, spec, &control, x0, horizon, cfg.ode_tol)?;
    let violation = match target {
        RateTarget::Endpoint { target, .. } => path
            .terminal()
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        RateTarget::Path { path: reference, .. } => {
            let mut buf = vec![0.0; path.dim];
            let mut worst = 0.0f64;
            for (i, &t) in reference.times.iter().enumerate() {
                path.eval_into(t, &mut buf);
                let dist = buf
                    .iter()
                    .zip(reference.state_at(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(dist);
            }
            worst
        }
    };
    let ent = entropy(&control, spec)?;
    Ok(ActionResult {
        entropy: ent,
        terminal: path.terminal().to_vec(),
        violation,
        feasible: violation <= target_tol(target),
        evaluations,
        trace,
        control,
    })
}

/// Projected BFGS with central-difference gradients and Armijo backtracking
/// on the box |θ_i| ≤ bound. Deterministic; mutates θ in place.
fn bfgs_minimize<F>(
    theta: &mut [f64],
    bound: f64,
    max_iters: usize,
    fd_step: f64,
    evals: &mut u64,
    scratch: &mut Vec<f64>,
    mut f: F,
) where
    F: FnMut(&[f64], &mut u64, &mut Vec<f64>) -> f64,
{
    let n = theta.len();
    let mut h = vec![0.0; n * n];
    let reset = |h: &mut [f64]| {
        h.fill(0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    reset(&mut h);
    let grad = |th: &mut [f64], f: &mut F, evals: &mut u64, scratch: &mut Vec<f64>| -> Vec<f64> {
        let mut g = vec![0.0; n];
        for i in 0..n {
            let keep = th[i];
            th[i] = keep + fd_step;
            let fp = f(th, evals, scratch);
            th[i] = keep - fd_step;
            let fm = f(th, evals, scratch);
            th[i] = keep;
            g[i] = (fp - fm) / (2.0 * fd_step);
        }
        g
    };
    let mut fx = f(theta, evals, scratch);
    let mut g = grad(theta, &mut f, evals, scratch);
    let mut first_update = true;
    for _ in 0..max_iters {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm <= 1e-9 * (1.0 + fx.abs()) {
            break;
        }
        // p = −H g
        let mut p = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += h[i * n + j] * g[j];
            }
            p[i] = -acc;
        }
        let mut slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            reset(&mut h);
            first_update = true;
            for (pi, gi) in p.iter_mut().zip(&g) {
                *pi = -gi;
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut step = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; n];
        let mut f_new = fx;
        for _ in 0..30 {
            for i in 0..n {
                trial[i] = (theta[i] + step * p[i]).clamp(-bound, bound);
            }
            f_new = f(&trial, evals, scratch);
            if f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || !f_new.is_finite() {
            break;
        }
        let s: Vec<f64> = trial.iter().zip(theta.iter()).map(|(a, b)| a - b).collect();
        theta.copy_from_slice(&trial);
        let g_new = grad(theta, &mut f, evals, scratch);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let yy: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-12 * ss * yy && sy.is_finite() {
            if first_update {
                // Scale the seed matrix to the first observed curvature.
                let scale = sy / y.iter().map(|v| v * v).sum::<f64>();
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] = if i == j { scale } else { 0.0 };
                    }
                }
                first_update = false;
            }
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let mut hy = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += h[i * n + j] * y[j];
                }
                hy[i] = acc;
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * rho * yhy * s[i] * s[j] + rho * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        let stalled = (fx - f_new).abs() <= 1e-14 * (1.0 + fx.abs());
        fx = f_new;
        g = g_new;
        if stalled {
            break;
        }
    }
}

/// One horizon's outcome inside a quasi-potential scan.
#[derive(Debug, Clone)]
pub struct HorizonOutcome {
    pub horizon: f64,
    pub value: Option<f64>,
    pub violation: f64,
}

/// Boundary sweep attached to a barrier-height result.
#[derive(Debug, Clone)]
pub struct BoundaryScan {
    pub nodes: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub values: Vec<Option<f64>>,
    pub argmin: Option<usize>,
}

/// Minimal steering cost from `source` to `target`, minimized over a finite
/// horizon grid; `value` is `None` when every horizon came back infeasible.
#[derive(Debug, Clone)]
pub struct QuasiPotentialResult {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    pub value: Option<f64>,
    pub optimal_horizon: Option<f64>,
    /// True when the minimizing horizon is the largest in the grid — the
    /// finite grid may then be truncating the true infimum.
    pub argmin_at_largest_horizon: bool,
    pub control: Option<ControlGrid>,
    pub per_horizon: Vec<HorizonOutcome>,
    pub boundary: Option<BoundaryScan>,
}

/// V(x, z) over a horizon grid: the smallest feasible rate-function value
/// among endpoint problems x → z on each horizon. Horizons run in parallel.
pub fn quasi_potential<A, C>(
    abar: A,
    c: C,
    spec: &LevyMeasureSpec,
    x: &[f64],
    z: &[f64],
    t_grid: &[f64],
    cfg: &OptConfig,
) -> Result<QuasiPotentialResult>
where
    A: Fn(&[f64], &mut [f64]) + Sync,
    C: Fn(&[f64], &[f64], &mut [f64]) + Sync,
{
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::invalid("horizon grid must be finite positive values"));
    }
    let results: Vec<ActionResult> = t_grid
        .par_iter()
        .enumerate()
        .map(|(ti, &horizon)| {
            let mut local = cfg.clone();
            local.param_index = cfg.param_index.wrapping_add(ti as u32);
            rate_function(
                &abar,
                &c,
                spec,
                &RateTarget::Endpoint { target: z.to_vec(), tol: cfg.endpoint_tol },
                x,
                horizon,
                &local,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let per_horizon: Vec<HorizonOutcome> = t_grid
        .iter()
        .zip(&results)
        .map(|(&horizon, r)| HorizonOutcome { horizon, value: r.value(), violation: r.violation })
        .collect();
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some(v) = r.value() {
            if best.map_or(true, |b| v < results[b].value().unwrap()) {
                best = Some(i);
            }
        }
    }
    let largest = t_grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    Ok(QuasiPotentialResult {
        source: x.to_vec(),
        target: z.to_vec(),
        value: best.map(|i| results[i].entropy),
        optimal_horizon: best.map(|i| t_grid[i]),
        argmin_at_largest_horizon: best == Some(largest),
        control: best.map(|i| results[i].control.clone()),
        per_horizon,
        boundary: None,
    })
}

/// Barrier height V̄ of the stable state: the smallest quasi-potential from
/// the origin to exterior targets placed `offset_frac`·diam(D) beyond each
/// boundary node. Requires the averaged drift to point inward at every
/// node. Nodes run in parallel; ties take the smallest node index.
#[allow(clippy::too_many_arguments)]
pub fn potential_height<A, C>(
    abar: A,
    c: C,
    spec: &LevyMeasureSpec,
    domain: &Domain,
    n_boundary: usize,
    offset_frac: f64,
    t_grid: &[f64],
    cfg: &OptConfig,
) -> Result<QuasiPotentialResult>
where
    A: Fn(&[f64], &mut [f64]) + Sync,
    C: Fn(&[f64], &[f64], &mut [f64]) + Sync,
{
    if !domain.contains_origin() {
        return Err(Error::invalid("the stable state (origin) must lie inside the domain"));
    }
    if !(offset_frac > 0.0) {
        return Err(Error::invalid("exterior offset fraction must be positive"));
    }
    let origin = vec![0.0; domain.dim()];
    let nodes = domain.boundary_nodes(n_boundary)?;
    let offset = offset_frac * domain.diameter();
    let mut targets = Vec::with_capacity(nodes.len());
    let mut drift = vec![0.0; domain.dim()];
    for (i, node) in nodes.iter().enumerate() {
        let normal = domain.outward_normal(node)?;
        abar(node, &mut drift);
        let inward: f64 = drift.iter().zip(&normal).map(|(a, b)| a * b).sum();
        if !(inward < 0.0) {
            return Err(Error::Validation(format!(
                "averaged drift does not point inward at boundary node {i} ({node:?}): ⟨ā, n⟩ = {inward:.3e}"
            )));
        }
        targets.push(domain.exterior_point(node, offset)?);
    }
    let scans: Vec<QuasiPotentialResult> = targets
        .par_iter()
        .enumerate()
        .map(|(i, target)| {
            let mut local = cfg.clone();
            local.param_index = cfg.param_index.wrapping_add((i * t_grid.len()) as u32);
            quasi_potential(&abar, &c, spec, &origin, target, t_grid, &local)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut argmin: Option<usize> = None;
    for (i, scan) in scans.iter().enumerate() {
        if let Some(v) = scan.value {
            if argmin.map_or(true, |b| v < scans[b].value.unwrap()) {
                argmin = Some(i);
            }
        }
    }
    let scan = BoundaryScan {
        nodes,
        targets: targets.clone(),
        values: scans.iter().map(|s| s.value).collect(),
        argmin,
    };
    let best = argmin.map(|i| &scans[i]);
    Ok(QuasiPotentialResult {
        source: origin,
        target: best.map_or_else(Vec::new, |b| b.target.clone()),
        value: best.and_then(|b| b.value),
        optimal_horizon: best.and_then(|b| b.optimal_horizon),
        argmin_at_largest_horizon: best.is_some_and(|b| b.argmin_at_largest_horizon),
        control: best.and_then(|b| b.control.clone()),
        per_horizon: best.map_or_else(Vec::new, |b| b.per_horizon.clone()),
        boundary: Some(scan),
    })
}
