//! Monte Carlo first-exit experiments for the two-scale jump system: exit
//! times and loci from a bounded domain, excursion statistics around the
//! stable state, and the small-noise regression of ε·ln E[σ] against the
//! barrier height.

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::levy::{LevyMeasureSpec, MarkSampler};
use crate::msde::Compensator;
use crate::prm::simulate_with_sampler;
use crate::rng::{stream_rng, StreamKind};
use crate::stats::{linear_fit, median, wilson_interval, Z_95};
use crate::system::SystemCoefficients;
use rayon::prelude::*;
use serde::Serialize;

/// Default per-trial step budget before censoring.
pub const DEFAULT_STEP_CAP: u64 = 10_000_000;

/// Geometry and budgets of one exit experiment.
#[derive(Debug, Clone)]
pub struct ExitExperimentConfig {
    pub domain: Domain,
    /// Inner core radius: a completed excursion re-enters the closed ball
    /// of this radius.
    pub rho: f64,
    /// Excursion radius: leaving the ball of this radius completes the
    /// outbound half of a cycle.
    pub rho_prime: f64,
    pub eps_grid: Vec<f64>,
    pub trials: usize,
    /// Wall-clock (model time) cap per trial; reaching it censors the trial.
    pub time_cap: f64,
    /// Step-count cap per trial (drift substeps + jumps).
    pub step_cap: u64,
    /// Slow start state; must lie inside the domain.
    pub x0: Vec<f64>,
    /// Fast start state; zeros of the right dimension when empty.
    pub y0: Vec<f64>,
    /// Integration step is this fraction of ε.
    pub h_factor: f64,
}

impl ExitExperimentConfig {
    /// Standard setup: start at the origin, excursion radii at 0.2 and 0.4
    /// of the domain's inradius.
    pub fn new(domain: Domain, eps_grid: Vec<f64>, trials: usize, time_cap: f64) -> Result<Self> {
        if !domain.contains_origin() {
            return Err(Error::invalid("exit domain must contain the origin"));
        }
        let r = domain.inradius_from_origin()?;
        let cfg = ExitExperimentConfig {
            x0: vec![0.0; domain.dim()],
            y0: Vec::new(),
            domain,
            rho: 0.2 * r,
            rho_prime: 0.4 * r,
            eps_grid,
            trials,
            time_cap,
            step_cap: DEFAULT_STEP_CAP,
            h_factor: 0.1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.domain.contains_origin() {
            return Err(Error::invalid("exit domain must contain the origin"));
        }
        let r = self.domain.inradius_from_origin()?;
        if !(self.rho > 0.0 && self.rho < self.rho_prime) {
            return Err(Error::invalid("need 0 < rho < rho_prime"));
        }
        if self.rho_prime >= r {
            return Err(Error::invalid(
                "excursion radius must leave room inside the domain (rho_prime < inradius)",
            ));
        }
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::invalid("eps grid must be nonempty with values in (0, 1]"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("need at least one trial"));
        }
        if !(self.time_cap > 0.0) || self.step_cap == 0 {
            return Err(Error::invalid("need positive time and step caps"));
        }
        if self.x0.len() != self.domain.dim() || !self.domain.contains(&self.x0) {
            return Err(Error::invalid("start state must lie inside the domain"));
        }
        if !(self.h_factor > 0.0 && self.h_factor <= 0.1) {
            return Err(Error::invalid("step factor must lie in (0, 0.1]"));
        }
        Ok(())
    }
}

/// One trial's outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ExitRecord {
    pub eps: f64,
    pub trial: u64,
    /// First time the slow state was observed outside the domain, or the
    /// censoring time.
    pub sigma: f64,
    /// Slow state at that time (outside the domain iff uncensored).
    pub locus: Vec<f64>,
    /// Number of entries into the core ball separated by excursions past
    /// the outer radius; ≥ 1 whenever the path touched the core.
    pub excursions: u64,
    pub censored: bool,
    /// Time resolution of the drift stepping: drift-driven exits are late
    /// by at most this much (jump-driven exits are exact).
    pub h_step: f64,
}

/// Verifies that a drift field points inward on the domain boundary nodes.
pub fn check_inward_drift(
    abar: impl Fn(&[f64], &mut [f64]),
    domain: &Domain,
    n_nodes: usize,
) -> Result<()> {
    let nodes = domain.boundary_nodes(n_nodes)?;
    let mut drift = vec![0.0; domain.dim()];
    for (i, node) in nodes.iter().enumerate() {
        let normal = domain.outward_normal(node)?;
        abar(node, &mut drift);
        let outward: f64 = drift.iter().zip(&normal).map(|(a, b)| a * b).sum();
        if !(outward < 0.0) {
            return Err(Error::Validation(format!(
                "drift does not point inward at boundary node {i} ({node:?}): ⟨drift, n⟩ = {outward:.3e}"
            )));
        }
    }
    Ok(())
}

/// Phase of the excursion counter.
#[derive(Clone, Copy, PartialEq)]
enum Phase {
    /// Waiting for the path to (re-)enter the closed core ball.
    SeekingCore,
    /// Inside a core visit; waiting for the path to leave the outer ball.
    InCore,
}

struct ExcursionCounter {
    rho: f64,
    rho_prime: f64,
    phase: Phase,
    count: u64,
}

impl ExcursionCounter {
    fn new(rho: f64, rho_prime: f64) -> ExcursionCounter {
        ExcursionCounter { rho, rho_prime, phase: Phase::SeekingCore, count: 0 }
    }

    fn observe(&mut self, x: &[f64]) {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self.phase {
            Phase::SeekingCore if norm <= self.rho => {
                self.count += 1;
                self.phase = Phase::InCore;
            }
            Phase::InCore if norm >= self.rho_prime => {
                self.phase = Phase::SeekingCore;
            }
            _ => {}
        }
    }
}

/// Runs all trials for every ε in the grid. Trials are independent and run
/// in parallel; each draws its randomness from a stream keyed by
/// (master_seed, ε-index, trial), so results do not depend on thread count.
/// Returns one record list per ε, in grid order.
pub fn run_exit_trials(
    coeffs: &SystemCoefficients,
    spec: &LevyMeasureSpec,
    config: &ExitExperimentConfig,
    master_seed: u64,
) -> Result<Vec<Vec<ExitRecord>>> {
    config.validate()?;
    if spec.dim() != coeffs.slow_dim() {
        return Err(Error::invalid("measure dimension must match slow dimension"));
    }
    if coeffs.slow_dim() != config.domain.dim() {
        return Err(Error::invalid("domain dimension must match slow dimension"));
    }
    let region = spec.sim_region();
    let sampler = MarkSampler::new(spec, region)?;
    let compensator = Compensator::new(coeffs, spec)?;
    let y0 = if config.y0.is_empty() {
        vec![0.0; coeffs.fast_dim()]
    } else if config.y0.len() == coeffs.fast_dim() {
        config.y0.clone()
    } else {
        return Err(Error::invalid("fast start state has the wrong dimension"));
    };
    let mut out = Vec::with_capacity(config.eps_grid.len());
    for (ei, &eps) in config.eps_grid.iter().enumerate() {
        let records: Vec<ExitRecord> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| {
                let mut rng = stream_rng(master_seed, StreamKind::Exit, ei as u32, trial);
                run_one_trial(
                    coeffs,
                    spec,
                    config,
                    &sampler,
                    &compensator,
                    eps,
                    trial,
                    &y0,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<ExitRecord>>>()?;
        out.push(records);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_one_trial(
    coeffs: &SystemCoefficients,
    spec: &LevyMeasureSpec,
    config: &ExitExperimentConfig,
    sampler: &MarkSampler,
    compensator: &Compensator,
    eps: f64,
    trial: u64,
    y0: &[f64],
    rng: &mut crate::rng::Rng,
) -> Result<ExitRecord> {
    let d = coeffs.slow_dim();
    let k = coeffs.fast_dim();
    let h_step = config.h_factor * eps;
    let mut x = config.x0.clone();
    let mut y = y0.to_vec();
    let mut ax = vec![0.0; d];
    let mut cx = vec![0.0; d];
    let mut fy = vec![0.0; k];
    let mut hy = vec![0.0; k];
    let mut comp_x = vec![0.0; d];
    let mut comp_y = vec![0.0; k];
    let mut counter = ExcursionCounter::new(config.rho, config.rho_prime);
    counter.observe(&x);
    let mut steps: u64 = 0;
    let mut t_global = 0.0;
    // Chunk the horizon so each jump stream stays small regardless of how
    // long the trial survives.
    let rate = sampler.region_mass() / eps;
    let chunk_len = if rate > 0.0 { (512.0 / rate).min(config.time_cap) } else { config.time_cap };
    let chunk_len = chunk_len.max(16.0 * h_step);

    let mut drift_substep = |x: &mut Vec<f64>,
                             y: &mut Vec<f64>,
                             h: f64,
                             t: f64|
     -> Result<()> {
        coeffs.a_into(x, y, &mut ax);
        coeffs.f_into(x, y, &mut fy);
        if !compensator.is_zero() {
            compensator.slow_into(coeffs, x, &mut comp_x);
            compensator.fast_into(coeffs, x, y, &mut comp_y);
        }
        for j in 0..d {
            x[j] += h * (ax[j] - comp_x[j]);
        }
        for j in 0..k {
            y[j] += h * ((fy[j] - comp_y[j]) / eps);
        }
        let n = x.iter().chain(y.iter()).map(|v| v.abs()).fold(0.0f64, f64::max);
        if !n.is_finite() || n > crate::msde::DEFAULT_EXPLOSION_RADIUS {
            return Err(Error::Explosion { t, norm: n });
        }
        Ok(())
    };

    let finish = |t: f64, x: &[f64], counter: &ExcursionCounter, censored: bool| ExitRecord {
        eps,
        trial,
        sigma: t,
        locus: x.to_vec(),
        excursions: counter.count,
        censored,
        h_step,
    };

    loop {
        let remaining = config.time_cap - t_global;
        if remaining <= 1e-12 * config.time_cap {
            return Ok(finish(config.time_cap, &x, &counter, true));
        }
        let span = chunk_len.min(remaining);
        let stream = simulate_with_sampler(sampler, eps, span, spec.sim_region(), rng)?;
        let mut t_local = 0.0;
        let mut next_event = 0usize;
        loop {
            let (t_event, has_event) = match stream.events.get(next_event) {
                Some(e) if e.time <= span => (e.time, true),
                _ => (span, false),
            };
            while t_local < t_event - 1e-14 * span.max(1.0) {
                let h = h_step.min(t_event - t_local);
                debug_assert!(config.domain.contains(&x), "pre-step state left the domain");
                drift_substep(&mut x, &mut y, h, t_global)?;
                t_local += h;
                t_global += h;
                steps += 1;
                counter.observe(&x);
                if !config.domain.contains(&x) {
                    return Ok(finish(t_global, &x, &counter, false));
                }
                if steps >= config.step_cap {
                    return Ok(finish(t_global, &x, &counter, true));
                }
            }
            let dt = t_event - t_local;
            t_local = t_event;
            t_global += dt;
            if !has_event {
                break;
            }
            let mark = &stream.events[next_event].mark;
            next_event += 1;
            // Both coefficients see the pre-jump state.
            coeffs.c_into(&x, mark, &mut cx);
            coeffs.h_into(&x, &y, mark, &mut hy);
            for j in 0..d {
                x[j] += eps * cx[j];
            }
            for j in 0..k {
                y[j] += hy[j];
            }
            steps += 1;
            counter.observe(&x);
            if !config.domain.contains(&x) {
                return Ok(finish(t_global, &x, &counter, false));
            }
            if steps >= config.step_cap {
                return Ok(finish(t_global, &x, &counter, true));
            }
        }
    }
}

/// Per-ε aggregate of an exit experiment.
#[derive(Debug, Clone, Serialize)]
pub struct EpsAggregate {
    pub eps: f64,
    pub n_trials: usize,
    pub n_censored: usize,
    /// Mean exit time over uncensored trials (NaN when none).
    pub mean_sigma: f64,
    /// Median exit time over uncensored trials (NaN when none).
    pub median_sigma: f64,
    /// ε · ln(mean exit time); NaN when uninformative.
    pub eps_ln_mean: f64,
    /// For each configured δ: fraction of trials with exit time inside
    /// (exp((V̄−δ)/ε), exp((V̄+δ)/ε)). Censored trials count as outside.
    pub band_fractions: Vec<f64>,
    /// True when every trial was censored.
    pub uninformative: bool,
}

/// Small-noise regression block: ε ln Ê[σ^ε] fitted linearly in ε, so the
/// intercept extrapolates the ε → 0 limit.
#[derive(Debug, Clone, Serialize)]
pub struct KramersRegression {
    pub per_eps: Vec<EpsAggregate>,
    /// Extrapolated limit of ε ln Ê[σ^ε] (the fit's intercept).
    pub limit: f64,
    /// First-order coefficient of the fit.
    pub slope: f64,
    /// Reference barrier height the bands were computed against.
    pub vbar: f64,
    pub band_deltas: Vec<f64>,
    /// True when fewer than 3 informative ε levels were available; the fit
    /// is then reported from whatever is available (NaN below 2 levels).
    pub partial: bool,
}

/// Aggregates records per ε and fits ε·ln(mean σ) = limit + slope·ε.
/// `band_deltas` are absolute δ values for the exit-time band check.
pub fn kramers_regression(
    records_per_eps: &[Vec<ExitRecord>],
    vbar: f64,
    band_deltas: &[f64],
) -> Result<KramersRegression> {
    if records_per_eps.is_empty() || records_per_eps.iter().any(|r| r.is_empty()) {
        return Err(Error::invalid("need at least one record per eps level"));
    }
    if !vbar.is_finite() || vbar <= 0.0 {
        return Err(Error::invalid("barrier height must be positive and finite"));
    }
    let mut per_eps = Vec::with_capacity(records_per_eps.len());
    for records in records_per_eps {
        let eps = records[0].eps;
        if records.iter().any(|r| r.eps != eps) {
            return Err(Error::invalid("mixed eps values inside one record list"));
        }
        let uncensored: Vec<f64> =
            records.iter().filter(|r| !r.censored).map(|r| r.sigma).collect();
        let n_censored = records.len() - uncensored.len();
        let uninformative = uncensored.is_empty();
        let mean = if uninformative {
            f64::NAN
        } else {
            uncensored.iter().sum::<f64>() / uncensored.len() as f64
        };
        let med = if uninformative { f64::NAN } else { median(&uncensored) };
        let band_fractions = band_deltas
            .iter()
            .map(|&delta| {
                let lo = ((vbar - delta) / eps).exp();
                let hi = ((vbar + delta) / eps).exp();
                let inside = records
                    .iter()
                    .filter(|r| !r.censored && r.sigma > lo && r.sigma < hi)
                    .count();
                inside as f64 / records.len() as f64
            })
            .collect();
        per_eps.push(EpsAggregate {
            eps,
            n_trials: records.len(),
            n_censored,
            mean_sigma: mean,
            median_sigma: med,
            eps_ln_mean: if uninformative { f64::NAN } else { eps * mean.ln() },
            band_fractions,
            uninformative,
        });
    }
    let informative: Vec<&EpsAggregate> = per_eps.iter().filter(|a| !a.uninformative).collect();
    let partial = informative.len() < 3;
    let (limit, slope) = if informative.len() >= 2 {
        let xs: Vec<f64> = informative.iter().map(|a| a.eps).collect();
        let ys: Vec<f64> = informative.iter().map(|a| a.eps_ln_mean).collect();
        let (slope, intercept) = linear_fit(&xs, &ys);
        (intercept, slope)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(KramersRegression { per_eps, limit, slope, vbar, band_deltas: band_deltas.to_vec(), partial })
}

/// One histogram bin over the first coordinate of the exit locus.
#[derive(Debug, Clone, Serialize)]
pub struct LocusBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    /// Relative frequency among uncensored records.
    pub frequency: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

/// Exit-locus histogram for scalar slow states.
#[derive(Debug, Clone, Serialize)]
pub struct LocusHistogram {
    pub eps: f64,
    pub n_uncensored: usize,
    pub bins: Vec<LocusBin>,
    pub all_censored: bool,
    /// Fraction of uncensored exits within δ of the reference exit point,
    /// when one was supplied (`None` when the minimizer is not unique and
    /// the concentration check is skipped).
    pub near_z_star: Option<f64>,
}

/// Bins uncensored exit loci by first coordinate into [edges[i], edges[i+1]).
/// `z_star` is the reference exit point with its δ-neighborhood radius.
pub fn exit_locus_histogram(
    records: &[ExitRecord],
    edges: &[f64],
    z_star: Option<(&[f64], f64)>,
) -> Result<LocusHistogram> {
    if records.is_empty() {
        return Err(Error::invalid("no exit records"));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("bin edges must be strictly increasing"));
    }
    let eps = records[0].eps;
    let uncensored: Vec<&ExitRecord> = records.iter().filter(|r| !r.censored).collect();
    if uncensored.is_empty() {
        return Ok(LocusHistogram {
            eps,
            n_uncensored: 0,
            bins: Vec::new(),
            all_censored: true,
            near_z_star: None,
        });
    }
    let n = uncensored.len();
    let mut bins = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let count = uncensored
            .iter()
            .filter(|r| r.locus[0] >= w[0] && r.locus[0] < w[1])
            .count() as u64;
        let (lo, hi) = wilson_interval(count, n as u64, Z_95);
        bins.push(LocusBin {
            lo: w[0],
            hi: w[1],
            count,
            frequency: count as f64 / n as f64,
            wilson_lo: lo,
            wilson_hi: hi,
        });
    }
    let near_z_star = z_star.map(|(z, delta)| {
        uncensored
            .iter()
            .filter(|r| {
                let dist = r
                    .locus
                    .iter()
                    .zip(z)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                dist < delta
            })
            .count() as f64
            / n as f64
    });
    Ok(LocusHistogram { eps, n_uncensored: n, bins, all_censored: false, near_z_star })
}

/// Checks that concentration mass is nondecreasing as ε decreases.
/// `series` holds (ε, mass) pairs; `slack` absorbs Monte Carlo noise.
pub fn concentration_nondecreasing(series: &[(f64, f64)], slack: f64) -> bool {
    let mut sorted: Vec<(f64, f64)> = series.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    sorted.windows(2).all(|w| w[1].1 >= w[0].1 - slack)
}

/// Per-trial CSV rows: `eps,trial,sigma,censored,excursions,h_step,locus…`.
pub fn records_to_csv(records_per_eps: &[Vec<ExitRecord>]) -> String {
    let dim = records_per_eps
        .iter()
        .flat_map(|r| r.iter())
        .map(|r| r.locus.len())
        .next()
        .unwrap_or(1);
    let mut s = String::from("eps,trial,sigma,censored,excursions,h_step");
    for i in 0..dim {
        s.push_str(&format!(",locus{i}"));
    }
    s.push('\n');
    for records in records_per_eps {
        for r in records {
            s.push_str(&format!(
                "{},{},{},{},{},{}",
                r.eps, r.trial, r.sigma, r.censored as u8, r.excursions, r.h_step
            ));
            for v in &r.locus {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::two_proportion_z;
    use crate::system::SystemCoefficients;

    fn spec1() -> LevyMeasureSpec {
        LevyMeasureSpec::gaussian(1, 1.0).unwrap()
    }

    fn linear_coeffs() -> SystemCoefficients {
        SystemCoefficients::linear_benchmark()
    }

    /// The benchmark's drifts with the jump maps removed: a noiseless flow.
    fn noiseless_coeffs() -> SystemCoefficients {
        SystemCoefficients::new(
            1,
            1,
            Box::new(|x, y, out| out[0] = -x[0] + 0.5 * y[0]),
            Box::new(|_x, _z, out| out[0] = 0.0),
            Box::new(|x, y, out| out[0] = -(y[0] - x[0])),
            Box::new(|_x, _y, _z, out| out[0] = 0.0),
            1.0,
            1e-12,
            2.0,
            1e-12,
        )
        .unwrap()
        .with_state_free_slow_jumps()
        .with_odd_jumps()
    }

    fn base_config(eps_grid: Vec<f64>, trials: usize, time_cap: f64) -> ExitExperimentConfig {
        ExitExperimentConfig::new(Domain::interval(-1.0, 1.0).unwrap(), eps_grid, trials, time_cap)
            .unwrap()
    }

    #[test]
    fn config_validation_catches_bad_geometry() {
        let mut cfg = base_config(vec![0.3], 10, 10.0);
        cfg.rho = 0.5;
        cfg.rho_prime = 0.4;
        assert!(cfg.validate().is_err());
        let mut cfg = base_config(vec![0.3], 10, 10.0);
        cfg.rho_prime = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = base_config(vec![0.3], 10, 10.0);
        cfg.x0 = vec![2.0];
        assert!(cfg.validate().is_err());
        assert!(ExitExperimentConfig::new(
            Domain::interval(0.5, 1.0).unwrap(),
            vec![0.3],
            10,
            10.0
        )
        .is_err());
    }

    #[test]
    fn inward_drift_check_accepts_stable_and_rejects_unstable() {
        let domain = Domain::interval(-1.0, 1.0).unwrap();
        assert!(check_inward_drift(|x, out| out[0] = -0.5 * x[0], &domain, 2).is_ok());
        assert!(check_inward_drift(|x, out| out[0] = x[0], &domain, 2).is_err());
    }

    #[test]
    fn noiseless_flow_never_exits() {
        let coeffs = noiseless_coeffs();
        let spec = spec1();
        let mut cfg = base_config(vec![0.3], 8, 5.0);
        cfg.step_cap = 100_000;
        let per_eps = run_exit_trials(&coeffs, &spec, &cfg, 71).unwrap();
        assert!(per_eps[0].iter().all(|r| r.censored));
        assert!(per_eps[0].iter().all(|r| r.sigma <= 5.0 + 1e-9));
        assert!(per_eps[0].iter().all(|r| cfg.domain.contains(&r.locus)));
        // Everything censored: the level is uninformative and the fit
        // degrades to a flagged partial report.
        let reg = kramers_regression(&per_eps, 0.5, &[0.05, 0.1]).unwrap();
        assert!(reg.partial);
        assert!(reg.per_eps[0].uninformative);
        assert!(reg.limit.is_nan());
        let hist = exit_locus_histogram(&per_eps[0], &[-2.0, 0.0, 2.0], None).unwrap();
        assert!(hist.all_censored);
        assert!(hist.bins.is_empty());
    }

    #[test]
    fn symmetric_interval_exits_through_both_sides_evenly() {
        let coeffs = linear_coeffs();
        let spec = spec1();
        let cfg = base_config(vec![0.3], 400, 400.0);
        let per_eps = run_exit_trials(&coeffs, &spec, &cfg, 72).unwrap();
        let records = &per_eps[0];
        let censored = records.iter().filter(|r| r.censored).count();
        assert!(
            censored * 10 < records.len(),
            "too many censored trials: {censored}/{}",
            records.len()
        );
        // Every uncensored locus is outside the open interval.
        for r in records.iter().filter(|r| !r.censored) {
            assert!(!cfg.domain.contains(&r.locus), "locus {:?} inside", r.locus);
            assert!(r.sigma <= cfg.time_cap);
            assert!(r.excursions >= 1, "started at the origin, so the core was touched");
        }
        // Some trial should have completed at least one full excursion cycle.
        assert!(records.iter().any(|r| r.excursions >= 2));
        // Exit side symmetry within 4σ.
        let plus = records.iter().filter(|r| !r.censored && r.locus[0] > 0.0).count() as u64;
        let n = (records.len() - censored) as u64;
        let z = two_proportion_z(plus, n, n - plus, n);
        assert!(z.abs() < 4.0, "side asymmetry z = {z}");
        // Histogram puts roughly half the mass on each side.
        let hist =
            exit_locus_histogram(records, &[-10.0, 0.0, 10.0], None).unwrap();
        assert_eq!(hist.bins.len(), 2);
        for bin in &hist.bins {
            assert!(bin.wilson_lo < 0.5 && bin.wilson_hi > 0.35);
        }
    }

    #[test]
    fn median_exit_time_grows_as_eps_shrinks() {
        let coeffs = linear_coeffs();
        let spec = spec1();
        let cfg = base_config(vec![0.3, 0.2], 150, 2000.0);
        let per_eps = run_exit_trials(&coeffs, &spec, &cfg, 73).unwrap();
        let reg = kramers_regression(&per_eps, 0.55, &[0.055, 0.11]).unwrap();
        let m03 = reg.per_eps[0].median_sigma;
        let m02 = reg.per_eps[1].median_sigma;
        assert!(
            m02 > m03,
            "median exit time should grow as eps shrinks: {m03} vs {m02}"
        );
        // The two-point extrapolation of eps·ln(mean) should already land in
        // the neighborhood of the barrier height (≈ 0.55 for this system).
        assert!(
            reg.limit > 0.2 && reg.limit < 0.9,
            "extrapolated limit {} far from the barrier height",
            reg.limit
        );
    }

    #[test]
    fn regression_recovers_synthetic_laws_exactly() {
        let vbar = 0.62;
        let eps_grid = [0.3, 0.2, 0.15, 0.1];
        // Exact law sigma = exp(vbar/eps): limit = vbar, slope = 0.
        let records: Vec<Vec<ExitRecord>> = eps_grid
            .iter()
            .map(|&eps| {
                (0..5)
                    .map(|trial| ExitRecord {
                        eps,
                        trial,
                        sigma: (vbar / eps).exp(),
                        locus: vec![1.05],
                        excursions: 1,
                        censored: false,
                        h_step: eps / 10.0,
                    })
                    .collect()
            })
            .collect();
        let reg = kramers_regression(&records, vbar, &[0.1 * vbar, 0.2 * vbar]).unwrap();
        assert!(!reg.partial);
        assert!((reg.limit - vbar).abs() < 1e-12, "limit {}", reg.limit);
        assert!(reg.slope.abs() < 1e-12, "slope {}", reg.slope);
        for agg in &reg.per_eps {
            assert_eq!(agg.band_fractions, vec![1.0, 1.0]);
        }
        // First-order law sigma = exp((vbar + c·eps)/eps): slope = c.
        let c = 0.37;
        let records: Vec<Vec<ExitRecord>> = eps_grid
            .iter()
            .map(|&eps| {
                (0..5)
                    .map(|trial| ExitRecord {
                        eps,
                        trial,
                        sigma: ((vbar + c * eps) / eps).exp(),
                        locus: vec![1.05],
                        excursions: 1,
                        censored: false,
                        h_step: eps / 10.0,
                    })
                    .collect()
            })
            .collect();
        let reg = kramers_regression(&records, vbar, &[0.1 * vbar]).unwrap();
        assert!((reg.limit - vbar).abs() < 1e-12);
        assert!((reg.slope - c).abs() < 1e-12);
    }

    #[test]
    fn histogram_concentration_and_csv_round_trip() {
        let mk = |locus: f64, censored: bool, trial: u64| ExitRecord {
            eps: 0.2,
            trial,
            sigma: 3.0,
            locus: vec![locus],
            excursions: 1,
            censored,
            h_step: 0.02,
        };
        let records: Vec<ExitRecord> = (0..8)
            .map(|i| mk(if i < 6 { 1.1 } else { -1.2 }, false, i))
            .chain(std::iter::once(mk(0.0, true, 8)))
            .collect();
        let hist =
            exit_locus_histogram(&records, &[-5.0, 0.0, 5.0], Some((&[1.1], 0.3))).unwrap();
        assert_eq!(hist.n_uncensored, 8);
        assert_eq!(hist.bins[0].count, 2);
        assert_eq!(hist.bins[1].count, 6);
        assert!((hist.near_z_star.unwrap() - 0.75).abs() < 1e-12);
        assert!(concentration_nondecreasing(&[(0.3, 0.5), (0.2, 0.6), (0.1, 0.58)], 0.05));
        assert!(!concentration_nondecreasing(&[(0.3, 0.9), (0.1, 0.2)], 0.05));
        let csv = records_to_csv(&[records]);
        assert!(csv.starts_with("eps,trial,sigma,censored,excursions,h_step,locus0\n"));
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.lines().nth(9).unwrap().starts_with("0.2,8,"));
    }

    #[test]
    fn bad_histogram_inputs_are_rejected() {
        assert!(exit_locus_histogram(&[], &[0.0, 1.0], None).is_err());
        let r = ExitRecord {
            eps: 0.2,
            trial: 0,
            sigma: 1.0,
            locus: vec![1.1],
            excursions: 1,
            censored: false,
            h_step: 0.02,
        };
        assert!(exit_locus_histogram(&[r], &[1.0], None).is_err());
    }
}
