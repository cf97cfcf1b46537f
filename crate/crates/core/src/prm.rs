//! Poisson random measure realizations and their controlled (thinned)
//! counterparts, the driving noise of every integrator in the crate.
//!
//! A controlled stream with intensity g(t,z)·ν(dz)/ε is produced by
//! simulating at the dominating constant rate (sup g)·ν/ε and keeping each
//! event with probability g(t,z)/sup g. The auxiliary coordinate that makes
//! this exact in law is never materialized; only the keep/drop decision is
//! sampled, and events with keep probability 1 consume no randomness, so the
//! identity control reproduces the uncontrolled stream bit for bit.

use crate::error::{Error, Result};
use crate::levy::{nu_integral_radial, nu_mass, Annulus, LevyMeasureSpec, MarkSampler};
use crate::quad::FixedRule;
use crate::rng::Rng;
use rand::Rng as _;

/// Default guard on the expected event count of one stream.
pub const DEFAULT_EVENT_BUDGET: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: Vec<f64>,
}

/// One realized marked point process on [0, T].
#[derive(Debug, Clone, PartialEq)]
pub struct JumpStream {
    pub horizon: f64,
    /// Events ordered by strictly increasing time in (0, T].
    pub events: Vec<JumpEvent>,
    /// Rate the stream was simulated at: ν(region) · (headroom / ε).
    pub base_rate: f64,
    pub region: Annulus,
}

impl JumpStream {
    pub fn empty(horizon: f64, region: Annulus) -> JumpStream {
        JumpStream { horizon, events: Vec::new(), base_rate: 0.0, region }
    }

    pub fn count(&self) -> usize {
        self.events.len()
    }

    /// N_t: number of events with time ≤ t.
    pub fn count_up_to(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.time <= t)
    }

    /// Realized waiting times τ_k = T_k − T_{k−1}.
    pub fn waiting_times(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.events
            .iter()
            .map(|e| {
                let tau = e.time - prev;
                prev = e.time;
                tau
            })
            .collect()
    }

    /// Merges two independent streams over the same horizon; the result is a
    /// stream at the summed rate on the hull of the two regions.
    pub fn merge(a: &JumpStream, b: &JumpStream) -> Result<JumpStream> {
        if (a.horizon - b.horizon).abs() > 1e-12 * a.horizon.max(1.0) {
            return Err(Error::invalid("cannot merge streams with different horizons"));
        }
        let mut events = Vec::with_capacity(a.count() + b.count());
        let (mut i, mut j) = (0, 0);
        while i < a.events.len() || j < b.events.len() {
            let take_a = match (a.events.get(i), b.events.get(j)) {
                (Some(x), Some(y)) => x.time <= y.time,
                (Some(_), None) => true,
                _ => false,
            };
            if take_a {
                events.push(a.events[i].clone());
                i += 1;
            } else {
                events.push(b.events[j].clone());
                j += 1;
            }
        }
        Ok(JumpStream {
            horizon: a.horizon,
            events,
            base_rate: a.base_rate + b.base_rate,
            region: Annulus {
                lo: a.region.lo.min(b.region.lo),
                hi: a.region.hi.max(b.region.hi),
            },
        })
    }
}

/// Which signed half of a radial band a cell covers. Sign refers to the
/// first mark coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
    Full,
}

/// A signed radial band {z : lo ≤ |z| < hi, sign(z₁) as per side}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkCell {
    pub lo: f64,
    pub hi: f64,
    pub side: Side,
}

impl MarkCell {
    pub fn band(lo: f64, hi: f64, side: Side) -> MarkCell {
        MarkCell { lo, hi, side }
    }

    pub fn contains(&self, mark: &[f64]) -> bool {
        let r = mark.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r < self.lo || (self.hi.is_finite() && r >= self.hi) {
            return false;
        }
        match self.side {
            Side::Full => true,
            Side::Plus => mark[0] >= 0.0,
            Side::Minus => mark[0] < 0.0,
        }
    }

    fn sides_overlap(a: Side, b: Side) -> bool {
        matches!(
            (a, b),
            (Side::Full, _) | (_, Side::Full) | (Side::Plus, Side::Plus) | (Side::Minus, Side::Minus)
        )
    }

    fn radial_overlap(&self, other: &MarkCell) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }
}

/// Piecewise-constant control g(t, z) on a time grid × mark-cell partition.
/// Outside its cells the control is the identity (g = 1), so cells only
/// describe where the intensity is tilted.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    time_knots: Vec<f64>,
    cells: Vec<MarkCell>,
    /// Row-major (interval-major): values[j * cells.len() + c].
    values: Vec<f64>,
    /// Entropy sublevel tag: Some(M) asserts entropy ≤ M.
    level: Option<f64>,
}

impl ControlGrid {
    pub fn new(time_knots: Vec<f64>, cells: Vec<MarkCell>, values: Vec<f64>) -> Result<ControlGrid> {
        if time_knots.len() < 2 || time_knots[0] != 0.0 {
            return Err(Error::invalid("time knots must start at 0 and contain an interval"));
        }
        if time_knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("time knots must be strictly increasing"));
        }
        if cells.is_empty() {
            return Err(Error::invalid("control grid needs at least one mark cell"));
        }
        for c in &cells {
            if !(c.lo >= 0.0) || c.hi <= c.lo {
                return Err(Error::invalid(format!("bad mark cell [{}, {})", c.lo, c.hi)));
            }
        }
        for (i, a) in cells.iter().enumerate() {
            for b in cells.iter().skip(i + 1) {
                if MarkCell::sides_overlap(a.side, b.side) && a.radial_overlap(b) {
                    return Err(Error::invalid("mark cells overlap"));
                }
            }
        }
        if values.len() != (time_knots.len() - 1) * cells.len() {
            return Err(Error::invalid(format!(
                "need {} control values, got {}",
                (time_knots.len() - 1) * cells.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("control values must be nonnegative"));
        }
        Ok(ControlGrid { time_knots, cells, values, level: None })
    }

    /// Constant-in-time control with one value per cell.
    pub fn constant(horizon: f64, n_intervals: usize, cells: Vec<MarkCell>, per_cell: Vec<f64>)
        -> Result<ControlGrid>
    {
        if per_cell.len() != cells.len() {
            return Err(Error::invalid("one value per cell required"));
        }
        let knots = (0..=n_intervals)
            .map(|i| horizon * i as f64 / n_intervals as f64)
            .collect();
        let mut values = Vec::with_capacity(n_intervals * cells.len());
        for _ in 0..n_intervals {
            values.extend_from_slice(&per_cell);
        }
        ControlGrid::new(knots, cells, values)
    }

    /// Uniform control value on a full-space cell.
    pub fn uniform(horizon: f64, value: f64) -> Result<ControlGrid> {
        ControlGrid::constant(
            horizon,
            1,
            vec![MarkCell::band(0.0, f64::INFINITY, Side::Full)],
            vec![value],
        )
    }

    /// The identity control g ≡ 1.
    pub fn identity(horizon: f64) -> ControlGrid {
        ControlGrid::uniform(horizon, 1.0).expect("identity grid is valid")
    }

    pub fn horizon(&self) -> f64 {
        *self.time_knots.last().unwrap()
    }

    pub fn time_knots(&self) -> &[f64] {
        &self.time_knots
    }

    pub fn n_intervals(&self) -> usize {
        self.time_knots.len() - 1
    }

    pub fn cells(&self) -> &[MarkCell] {
        &self.cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, interval: usize, cell: usize) -> f64 {
        self.values[interval * self.cells.len() + cell]
    }

    pub fn level(&self) -> Option<f64> {
        self.level
    }

    /// Replaces all values, preserving grid shape. Used by optimizers.
    pub fn with_values(&self, values: Vec<f64>) -> Result<ControlGrid> {
        ControlGrid::new(self.time_knots.clone(), self.cells.clone(), values)
    }

    /// Index of the time interval containing t (clamped to the grid).
    pub fn interval_of(&self, t: f64) -> usize {
        let m = self.n_intervals();
        if t <= 0.0 {
            return 0;
        }
        let i = self.time_knots.partition_point(|&k| k <= t);
        (i - 1).min(m - 1)
    }

    pub fn cell_of(&self, mark: &[f64]) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(mark))
    }

    /// g(t, z); the identity value 1 outside all cells.
    pub fn value_at(&self, t: f64, mark: &[f64]) -> f64 {
        match self.cell_of(mark) {
            Some(c) => self.value(self.interval_of(t), c),
            None => 1.0,
        }
    }

    /// True when the cells (on both signed sides) cover the whole region.
    pub fn covers(&self, region: Annulus) -> bool {
        if region.is_empty() {
            return true;
        }
        for side in [Side::Plus, Side::Minus] {
            let mut intervals: Vec<(f64, f64)> = self
                .cells
                .iter()
                .filter(|c| matches!(c.side, Side::Full) || c.side == side)
                .map(|c| (c.lo, c.hi))
                .collect();
            intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut reach = region.lo;
            for (lo, hi) in intervals {
                if lo > reach {
                    break;
                }
                reach = reach.max(hi);
            }
            if reach < region.hi {
                return false;
            }
        }
        true
    }

    /// Supremum of g over the region, accounting for the implicit identity
    /// value wherever the cells do not cover.
    pub fn sup_value(&self, region: Annulus) -> f64 {
        let mut sup: f64 = if self.covers(region) { 0.0 } else { 1.0 };
        for (c, cell) in self.cells.iter().enumerate() {
            let clipped = cell.lo < region.hi && region.lo < cell.hi;
            if !clipped {
                continue;
            }
            for j in 0..self.n_intervals() {
                sup = sup.max(self.value(j, c));
            }
        }
        sup
    }

    /// ν-mass of each cell. Signed half-bands of the isotropic families carry
    /// exactly half the band mass.
    pub fn cell_masses(&self, spec: &LevyMeasureSpec) -> Result<Vec<f64>> {
        self.cells
            .iter()
            .map(|cell| {
                let lo = if spec.has_infinite_mass() { cell.lo.max(spec.delta_min()) } else { cell.lo };
                let band = Annulus { lo, hi: cell.hi.max(lo) };
                let m = nu_mass(spec, band)?;
                Ok(match cell.side {
                    Side::Full => m,
                    _ => 0.5 * m,
                })
            })
            .collect()
    }

    /// Tags the grid as a member of the entropy sublevel set with bound M,
    /// verifying the bound against this grid's precomputed entropy.
    pub fn with_level(mut self, m: f64, entropy: f64) -> Result<ControlGrid> {
        if entropy > m {
            return Err(Error::Validation(format!(
                "control entropy {entropy:.6e} exceeds sublevel bound {m:.6e}"
            )));
        }
        self.level = Some(m);
        Ok(self)
    }

    pub fn is_identity(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0)
    }
}

/// Simulates N^{1/ε} over the region: waiting times at rate ν(region)/ε,
/// marks i.i.d. from the normalized restriction of ν.
pub fn simulate_prm(
    spec: &LevyMeasureSpec,
    eps: f64,
    horizon: f64,
    region: Annulus,
    rng: &mut Rng,
) -> Result<JumpStream> {
    simulate_prm_budgeted(spec, eps, horizon, region, rng, DEFAULT_EVENT_BUDGET)
}

pub fn simulate_prm_budgeted(
    spec: &LevyMeasureSpec,
    eps: f64,
    horizon: f64,
    region: Annulus,
    rng: &mut Rng,
    budget: f64,
) -> Result<JumpStream> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1]"));
    }
    if horizon < 0.0 {
        return Err(Error::invalid("horizon must be nonnegative"));
    }
    if horizon == 0.0 || region.is_empty() {
        return Ok(JumpStream::empty(horizon, region));
    }
    let sampler = MarkSampler::new(spec, region)?;
    let rate = sampler.region_mass() / eps;
    sample_stream(&sampler, rate, horizon, region, rng, budget)
}

/// Like [`simulate_prm`] but reusing a prebuilt sampler, for hot loops that
/// generate many streams over the same region.
pub fn simulate_with_sampler(
    sampler: &MarkSampler,
    eps: f64,
    horizon: f64,
    region: Annulus,
    rng: &mut Rng,
) -> Result<JumpStream> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1]"));
    }
    if horizon <= 0.0 || region.is_empty() {
        return Ok(JumpStream::empty(horizon.max(0.0), region));
    }
    let rate = sampler.region_mass() / eps;
    sample_stream(sampler, rate, horizon, region, rng, DEFAULT_EVENT_BUDGET)
}

fn sample_stream(
    sampler: &MarkSampler,
    rate: f64,
    horizon: f64,
    region: Annulus,
    rng: &mut Rng,
    budget: f64,
) -> Result<JumpStream> {
    let expected = rate * horizon;
    if expected > budget {
        return Err(Error::Sizing(format!(
            "expected event count {expected:.3e} exceeds budget {budget:.1e}; \
             raise delta_min or epsilon, or shorten the horizon"
        )));
    }
    let mut events = Vec::with_capacity((expected + 4.0 * expected.sqrt()) as usize + 4);
    let mut t = 0.0;
    loop {
        let u: f64 = rng.random();
        let mut tau = -(1.0 - u).ln() / rate;
        if tau == 0.0 {
            tau = f64::MIN_POSITIVE;
        }
        t += tau;
        if t > horizon {
            break;
        }
        events.push(JumpEvent { time: t, mark: sampler.sample(rng) });
    }
    Ok(JumpStream { horizon, events, base_rate: rate, region })
}

/// Thins a dominating stream down to the controlled intensity g·ν/ε.
///
/// The stream must have been simulated with enough headroom: its base rate
/// divided by ν(region)/ε is the dominating level G, and every control value
/// must satisfy g ≤ G. Events with keep probability ≥ 1 are kept without
/// consuming randomness.
pub fn thin_to_control(
    stream: &JumpStream,
    control: &ControlGrid,
    spec: &LevyMeasureSpec,
    eps: f64,
    rng: &mut Rng,
) -> Result<JumpStream> {
    let mass = nu_mass(spec, stream.region)?;
    thin_with_mass(stream, control, mass, eps, rng)
}

/// [`thin_to_control`] with the region's ν-mass precomputed, for hot loops.
pub fn thin_with_mass(
    stream: &JumpStream,
    control: &ControlGrid,
    region_mass: f64,
    eps: f64,
    rng: &mut Rng,
) -> Result<JumpStream> {
    if stream.events.is_empty() {
        return Ok(JumpStream { base_rate: 0.0, ..stream.clone() });
    }
    let headroom = stream.base_rate * eps / region_mass;
    let sup = control.sup_value(stream.region);
    if sup > headroom * (1.0 + 1e-9) {
        return Err(Error::invalid(format!(
            "control supremum {sup:.6e} exceeds thinning headroom {headroom:.6e}"
        )));
    }
    let mut events = Vec::with_capacity(stream.events.len());
    for e in &stream.events {
        let g = control.value_at(e.time, &e.mark);
        let keep = if g >= headroom {
            true
        } else if g == 0.0 {
            false
        } else {
            rng.random::<f64>() * headroom < g
        };
        if keep {
            events.push(e.clone());
        }
    }
    Ok(JumpStream {
        horizon: stream.horizon,
        events,
        base_rate: sup * region_mass / eps,
        region: stream.region,
    })
}

/// Simulates a controlled stream N^{g/ε} directly: dominate at sup g, thin.
pub fn controlled_stream(
    spec: &LevyMeasureSpec,
    control: &ControlGrid,
    eps: f64,
    horizon: f64,
    region: Annulus,
    rng: &mut Rng,
) -> Result<JumpStream> {
    let sup = control.sup_value(region);
    if sup == 0.0 {
        return Ok(JumpStream::empty(horizon, region));
    }
    if horizon == 0.0 || region.is_empty() {
        return Ok(JumpStream::empty(horizon, region));
    }
    let sampler = MarkSampler::new(spec, region)?;
    let rate = sampler.region_mass() * sup / eps;
    let dominating = sample_stream(&sampler, rate, horizon, region, rng, DEFAULT_EVENT_BUDGET)?;
    thin_with_mass(&dominating, control, sampler.region_mass(), eps, rng)
}

/// Per-cell fixed quadrature nodes (signed marks and weights including the
/// density) for d = 1 coefficient integrals against cells.
#[derive(Debug, Clone)]
pub struct CellRules {
    /// One node list per cell: (signed mark z, weight w) with Σ w f(z)
    /// approximating ∫_cell f(z) ν(dz).
    pub rules: Vec<Vec<(f64, f64)>>,
}

impl CellRules {
    pub fn new(spec: &LevyMeasureSpec, cells: &[MarkCell]) -> Result<CellRules> {
        if spec.dim() != 1 {
            return Err(Error::invalid("cell quadrature rules require d = 1"));
        }
        let mut rules = Vec::with_capacity(cells.len());
        for cell in cells {
            let hi = if cell.hi.is_finite() { cell.hi } else { spec.truncation_radius(cell.lo) };
            let lo = cell.lo.max(if spec.has_infinite_mass() { spec.delta_min() } else { 0.0 });
            let mut nodes = Vec::new();
            if hi > lo {
                let probe = |r: f64| spec.radial_profile(r);
                let base = FixedRule::build(&probe, lo, hi, 1e-10)?;
                for &(r, w) in &base.nodes {
                    let wr = w * spec.radial_profile(r);
                    match cell.side {
                        Side::Plus => nodes.push((r, wr)),
                        Side::Minus => nodes.push((-r, wr)),
                        Side::Full => {
                            nodes.push((r, wr));
                            nodes.push((-r, wr));
                        }
                    }
                }
            }
            rules.push(nodes);
        }
        Ok(CellRules { rules })
    }
}

/// ∫ c(x, z) (g(t, z) − 1) ν(dz) by per-cell quadrature at a fixed time.
/// The off-cell region contributes nothing because g = 1 there.
pub fn compensator_drift<C>(
    control: &ControlGrid,
    coefficient_slice: C,
    spec: &LevyMeasureSpec,
    t: f64,
    out_dim: usize,
) -> Result<Vec<f64>>
where
    C: Fn(&[f64]) -> Vec<f64>,
{
    if spec.dim() != 1 {
        return Err(Error::invalid("compensator_drift requires d = 1"));
    }
    let j = control.interval_of(t);
    let mut out = vec![0.0; out_dim];
    for (c_idx, cell) in control.cells().iter().enumerate() {
        let g = control.value(j, c_idx);
        if g == 1.0 {
            continue;
        }
        let factor = g - 1.0;
        for comp in 0..out_dim {
            let side_integral = |sign: f64| -> Result<f64> {
                let lo = if spec.has_infinite_mass() { cell.lo.max(spec.delta_min()) } else { cell.lo };
                let band = Annulus { lo, hi: cell.hi.max(lo) };
                nu_integral_radial(spec, |r| coefficient_slice(&[sign * r])[comp], band)
                    .map(|v| 0.5 * v)
            };
            let v = match cell.side {
                Side::Plus => side_integral(1.0)?,
                Side::Minus => side_integral(-1.0)?,
                Side::Full => side_integral(1.0)? + side_integral(-1.0)?,
            };
            out[comp] += factor * v;
        }
    }
    Ok(out)
}
