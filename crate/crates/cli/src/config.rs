//! Experiment configuration: TOML schema, dotted-path overrides, and the
//! resolved-config hash that pins every run's outputs.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use fwlab::{Domain, LevyMeasureSpec, OptConfig, SystemCoefficients};
use serde::Deserialize;
use sha2::{Digest, Sha256};

/// A fully resolved run configuration: file contents after `--override` and
/// `--seed` are applied, the canonical serialization that was hashed, and the
/// worker count (kept out of the hash because it must never change results).
pub struct ResolvedConfig {
    pub file: FileConfig,
    pub master_seed: u64,
    pub workers: usize,
    pub sha256: String,
    pub resolved_toml: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub master_seed: Option<u64>,
    pub measure: Option<MeasureBlock>,
    pub system: Option<SystemBlock>,
    pub simulate: Option<SimulateBlock>,
    pub average: Option<AverageBlock>,
    pub action: Option<ActionBlock>,
    pub exit: Option<ExitBlock>,
    pub toyldp: Option<ToyBlock>,
}

fn default_dim() -> usize {
    1
}

fn default_delta_min() -> f64 {
    1e-3
}

fn default_h_factor() -> f64 {
    0.1
}

fn default_n_boundary() -> usize {
    2
}

fn default_offset_frac() -> f64 {
    0.05
}

fn default_band_deltas() -> Vec<f64> {
    vec![0.1, 0.2]
}

fn default_mixing_replications() -> u64 {
    256
}

/// Jump-measure block. `family` selects the profile; the remaining fields are
/// required or ignored depending on that choice.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureBlock {
    /// One of "gaussian" | "tempered" | "appendix".
    pub family: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Gaussian profile: density e^{−decay·|z|²}.
    pub decay: Option<f64>,
    /// Tempered-radial profile: stable index in (0, 2).
    pub stable_index: Option<f64>,
    /// Appendix profile: exponential tilt exponent (> 1).
    pub alpha_temper: Option<f64>,
    /// Appendix profile: power-law index in [0, 1).
    pub beta_tail: Option<f64>,
    /// Inner cutoff for infinite-mass profiles.
    #[serde(default = "default_delta_min")]
    pub delta_min: f64,
}

impl MeasureBlock {
    pub fn build(&self) -> Result<LevyMeasureSpec> {
        let spec = match self.family.as_str() {
            "gaussian" => LevyMeasureSpec::gaussian(
                self.dim,
                self.decay
                    .ok_or_else(|| anyhow!("measure.decay is required for family \"gaussian\""))?,
            ),
            "tempered" => LevyMeasureSpec::tempered_radial(
                self.dim,
                self.stable_index.ok_or_else(|| {
                    anyhow!("measure.stable_index is required for family \"tempered\"")
                })?,
                self.delta_min,
            ),
            "appendix" => LevyMeasureSpec::appendix_tempered(
                self.dim,
                self.alpha_temper.ok_or_else(|| {
                    anyhow!("measure.alpha_temper is required for family \"appendix\"")
                })?,
                self.beta_tail.ok_or_else(|| {
                    anyhow!("measure.beta_tail is required for family \"appendix\"")
                })?,
                self.delta_min,
            ),
            other => bail!("measure.family \"{other}\" is not one of gaussian|tempered|appendix"),
        };
        spec.map_err(|e| anyhow!("measure block rejected: {e}"))
    }
}

/// Coefficient block: built-in benchmark systems selected by name, so runs
/// need no user-supplied expressions.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    /// One of "linear" | "tilted" | "zero".
    pub benchmark: String,
}

/// A named built-in system together with the closed forms the experiment
/// drivers need: the averaged slow drift and the slow jump coefficient.
pub struct BuiltinSystem {
    pub coeffs: SystemCoefficients,
    /// Averaged drift is −drift_scale·x + drift_bias componentwise.
    pub drift_scale: f64,
    pub drift_bias: f64,
}

impl BuiltinSystem {
    /// Closed-form averaged drift of the selected benchmark.
    pub fn averaged_drift(&self) -> impl Fn(&[f64], &mut [f64]) + Send + Sync + Copy {
        let scale = self.drift_scale;
        let bias = self.drift_bias;
        move |x: &[f64], out: &mut [f64]| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = -scale * xi + bias;
            }
        }
    }

    /// Slow jump coefficient: every built-in passes the mark through.
    pub fn slow_jump(&self) -> impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + Copy {
        |_x: &[f64], z: &[f64], out: &mut [f64]| out.copy_from_slice(z)
    }
}

impl SystemBlock {
    pub fn build(&self) -> Result<BuiltinSystem> {
        match self.benchmark.as_str() {
            "linear" => Ok(BuiltinSystem {
                coeffs: SystemCoefficients::linear_benchmark(),
                drift_scale: 0.5,
                drift_bias: 0.0,
            }),
            "tilted" => Ok(BuiltinSystem {
                coeffs: SystemCoefficients::tilted_benchmark(),
                drift_scale: 0.5,
                drift_bias: 0.1,
            }),
            "zero" => Ok(BuiltinSystem {
                coeffs: SystemCoefficients::zero_system(1, 1),
                drift_scale: 0.0,
                drift_bias: 0.0,
            }),
            other => bail!("system.benchmark \"{other}\" is not one of linear|tilted|zero"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub eps_grid: Vec<f64>,
    pub horizon: f64,
    pub trials: u64,
    /// Integration step is h_factor·ε (must be ≤ 0.1 for stability).
    #[serde(default = "default_h_factor")]
    pub h_factor: f64,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AverageBlock {
    /// Slow-state nodes for the averaged-drift table.
    pub grid: Vec<f64>,
    /// Time-average window for the frozen-fast estimator.
    pub t_long: f64,
    /// Discarded initial stretch; defaults to t_long/10.
    pub burn_in: Option<f64>,
    pub h_step: f64,
    /// Horizons for the mixing-rate diagnostic; defaults to 1,2,4,8,16.
    pub mixing_horizons: Option<Vec<f64>>,
    #[serde(default = "default_mixing_replications")]
    pub mixing_replications: u64,
    /// Deviation-probability experiment: ε levels, threshold, trials, horizon.
    pub eps_grid: Vec<f64>,
    pub delta: f64,
    pub trials: u64,
    pub horizon: f64,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum DomainBlock {
    Interval { lo: f64, hi: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

impl DomainBlock {
    pub fn build(&self) -> Result<Domain> {
        let domain = match self {
            DomainBlock::Interval { lo, hi } => Domain::interval(*lo, *hi),
            DomainBlock::Ball { center, radius } => Domain::ball(center.clone(), *radius),
        };
        domain.map_err(|e| anyhow!("domain block rejected: {e}"))
    }

    /// A default locus-histogram grid: the domain's first-coordinate span
    /// padded by a quarter on each side, 16 bins.
    pub fn default_locus_edges(&self) -> Vec<f64> {
        let (lo, hi) = match self {
            DomainBlock::Interval { lo, hi } => (*lo, *hi),
            DomainBlock::Ball { center, radius } => {
                let c = center.first().copied().unwrap_or(0.0);
                (c - radius, c + radius)
            }
        };
        let pad = 0.25 * (hi - lo);
        let (a, b) = (lo - pad, hi + pad);
        let n = 16usize;
        (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    }
}

/// Optimizer knobs for the steering-cost solver; unset fields keep defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptBlock {
    pub n_intervals: Option<usize>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub restarts: Option<usize>,
    pub steps_per_interval: Option<usize>,
    pub endpoint_tol: Option<f64>,
    pub theta_bound: Option<f64>,
    /// Mark-cell split radius for the control discretization.
    pub band_split: Option<f64>,
}

impl OptBlock {
    pub fn build(&self, master_seed: u64) -> OptConfig {
        let mut cfg = OptConfig {
            seed: master_seed,
            ..OptConfig::default()
        };
        if let Some(v) = self.n_intervals {
            cfg.n_intervals = v;
        }
        if let Some(v) = self.outer_iters {
            cfg.outer_iters = v;
        }
        if let Some(v) = self.inner_iters {
            cfg.inner_iters = v;
        }
        if let Some(v) = self.restarts {
            cfg.restarts = v;
        }
        if let Some(v) = self.steps_per_interval {
            cfg.steps_per_interval = v;
        }
        if let Some(v) = self.endpoint_tol {
            cfg.endpoint_tol = v;
        }
        if let Some(v) = self.theta_bound {
            cfg.theta_bound = v;
        }
        if let Some(split) = self.band_split {
            cfg.cells = fwlab::signed_band_cells(split);
        }
        cfg
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBlock {
    pub domain: DomainBlock,
    /// Horizon grid the steering cost is minimized over.
    pub t_grid: Vec<f64>,
    #[serde(default = "default_n_boundary")]
    pub n_boundary: usize,
    /// Exterior targets sit this fraction of the domain diameter outside.
    #[serde(default = "default_offset_frac")]
    pub offset_frac: f64,
    /// Optional extra point-to-point costs from `source` (default origin).
    pub targets: Option<Vec<Vec<f64>>>,
    pub source: Option<Vec<f64>>,
    #[serde(default)]
    pub opt: OptBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitBlock {
    pub domain: DomainBlock,
    pub eps_grid: Vec<f64>,
    pub trials: usize,
    /// Model-time cap per trial; reaching it censors the trial.
    pub time_cap: f64,
    /// Reference barrier height the regression bands are computed against.
    pub vbar: f64,
    #[serde(default = "default_band_deltas")]
    pub band_deltas: Vec<f64>,
    pub rho: Option<f64>,
    pub rho_prime: Option<f64>,
    pub step_cap: Option<u64>,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    pub h_factor: Option<f64>,
    /// Locus-histogram bin edges; defaults to the padded domain span.
    pub locus_edges: Option<Vec<f64>>,
    /// Reference exit point for the concentration fraction.
    pub z_star: Option<Vec<f64>>,
    pub z_star_delta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyBlock {
    pub alpha_temper: f64,
    pub beta_tail: f64,
    pub eps_grid: Vec<f64>,
    pub horizon: f64,
    pub threshold: f64,
    pub lambda_exponent: f64,
    pub trials: u64,
    pub delta_min: Option<f64>,
    /// Radii for the single-jump tail table; defaults to 1..5.
    pub u_grid: Option<Vec<f64>>,
}

/// Parse one `--override key.path=value` entry into the raw config table.
fn apply_override(root: &mut toml::Table, entry: &str) -> Result<()> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| anyhow!("override \"{entry}\" must look like key.path=value"))?;
    let path = path.trim();
    if path.is_empty() {
        bail!("override \"{entry}\" has an empty key path");
    }
    let leaf = parse_override_value(raw.trim());
    let mut segments: Vec<&str> = path.split('.').collect();
    let last = segments.pop().expect("split always yields one segment");
    let mut cursor = root;
    for seg in &segments {
        cursor = cursor
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                anyhow!("override path \"{path}\" descends through non-table value at \"{seg}\"")
            })?;
    }
    cursor.insert(last.to_string(), leaf);
    Ok(())
}

/// Interpret the right-hand side as a TOML literal when possible (numbers,
/// booleans, arrays, quoted strings), otherwise as a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut table) => table.remove("v").expect("parsed assignment has the key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Load, override, hash, and type-check the configuration file.
pub fn load(
    path: &Path,
    overrides: &[String],
    seed_flag: Option<u64>,
    workers_flag: Option<usize>,
) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut table: toml::Table = toml::from_str(&text)
        .with_context(|| format!("config file {} is not valid TOML", path.display()))?;
    for entry in overrides {
        apply_override(&mut table, entry)?;
    }
    if let Some(seed) = seed_flag {
        if seed > i64::MAX as u64 {
            bail!("--seed {seed} exceeds the largest value the config format can record");
        }
        table.insert("master_seed".to_string(), toml::Value::Integer(seed as i64));
    }
    // The worker count tunes throughput only — results must be identical at
    // any value — so it lives outside the hashed configuration.
    let file_workers = table
        .remove("workers")
        .map(|v| {
            v.as_integer()
                .filter(|&n| n >= 0)
                .map(|n| n as usize)
                .ok_or_else(|| anyhow!("workers must be a nonnegative integer"))
        })
        .transpose()?;
    let workers = workers_flag.or(file_workers).unwrap_or(0);

    let resolved_toml =
        toml::to_string(&table).context("cannot serialize the resolved configuration")?;
    let sha256 = hex_digest(resolved_toml.as_bytes());
    let file: FileConfig = toml::from_str(&resolved_toml)
        .context("config does not match the expected schema")?;
    let master_seed = file.master_seed.ok_or_else(|| {
        anyhow!("master_seed is required: set it in the config file or pass --seed")
    })?;
    Ok(ResolvedConfig {
        file,
        master_seed,
        workers,
        sha256,
        resolved_toml,
    })
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_entries_replace_nested_values() {
        let mut table: toml::Table =
            toml::from_str("master_seed = 1\n[simulate]\ntrials = 5\n").unwrap();
        apply_override(&mut table, "simulate.trials=9").unwrap();
        apply_override(&mut table, "simulate.eps_grid=[0.5, 0.2]").unwrap();
        apply_override(&mut table, "system.benchmark=linear").unwrap();
        let sim = table["simulate"].as_table().unwrap();
        assert_eq!(sim["trials"].as_integer(), Some(9));
        assert_eq!(sim["eps_grid"].as_array().unwrap().len(), 2);
        assert_eq!(table["system"]["benchmark"].as_str(), Some("linear"));
    }

    #[test]
    fn override_through_scalar_is_rejected() {
        let mut table: toml::Table = toml::from_str("master_seed = 1\n").unwrap();
        let err = apply_override(&mut table, "master_seed.sub=2").unwrap_err();
        assert!(err.to_string().contains("non-table"));
    }

    #[test]
    fn measure_family_errors_name_the_missing_field() {
        let block = MeasureBlock {
            family: "appendix".to_string(),
            dim: 1,
            decay: None,
            stable_index: None,
            alpha_temper: None,
            beta_tail: Some(0.5),
            delta_min: 1e-3,
        };
        let err = block.build().unwrap_err();
        assert!(err.to_string().contains("measure.alpha_temper"));
    }

    #[test]
    fn builtin_systems_expose_their_averaged_drift() {
        let sys = SystemBlock {
            benchmark: "tilted".to_string(),
        }
        .build()
        .unwrap();
        let drift = sys.averaged_drift();
        let mut out = [0.0];
        drift(&[2.0], &mut out);
        assert!((out[0] - (-0.9)).abs() < 1e-12);
        let jump = sys.slow_jump();
        jump(&[0.0], &[0.7], &mut out);
        assert_eq!(out[0], 0.7);
    }
}
