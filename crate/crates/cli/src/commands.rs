//! Subcommand drivers: each builds its inputs from the resolved config, runs
//! the experiment, and writes CSV artifacts plus summary lines.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use fwlab::{
    averaging_experiment, big_jump_scale, big_jump_scale_csv, check_hypotheses, estimate_mixing,
    exit_locus_histogram, kramers_regression, potential_height, quasi_potential, records_to_csv,
    run_exit_trials, simulate_toy, single_jump_tail, small_jump_scale, small_jump_scale_csv,
    stream_rng, tail_csv, trials_csv, AveragingExperimentConfig, ExitExperimentConfig,
    LevyMeasureSpec, SeedLineage, SimEngine, StreamKind, SystemCoefficients, ToyModelConfig,
};
use rayon::prelude::*;

use crate::config::{BuiltinSystem, ResolvedConfig};

/// What a subcommand produced: artifacts, human-readable lines, failure
/// accounting, and whether the run counts as a success for the exit status.
pub struct RunReport {
    pub outputs: Vec<OutputFile>,
    pub summary_lines: Vec<String>,
    pub failed_trials: u64,
    pub ok: bool,
}

pub struct OutputFile {
    pub name: String,
    pub bytes: u64,
}

impl RunReport {
    fn new() -> RunReport {
        RunReport {
            outputs: Vec::new(),
            summary_lines: Vec::new(),
            failed_trials: 0,
            ok: true,
        }
    }

    fn line(&mut self, text: impl Into<String>) {
        self.summary_lines.push(text.into());
    }

    fn write(&mut self, out_dir: &Path, name: &str, content: &str) -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, content)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(OutputFile {
            name: name.to_string(),
            bytes: content.len() as u64,
        });
        Ok(())
    }
}

fn missing_block(name: &str) -> anyhow::Error {
    anyhow!("config is missing the [{name}] block required by this command")
}

fn need_measure(rc: &ResolvedConfig) -> Result<LevyMeasureSpec> {
    rc.file
        .measure
        .as_ref()
        .ok_or_else(|| missing_block("measure"))?
        .build()
}

fn need_system(rc: &ResolvedConfig) -> Result<BuiltinSystem> {
    rc.file
        .system
        .as_ref()
        .ok_or_else(|| missing_block("system"))?
        .build()
}

/// Run the standing-assumption checks and abort the command when any
/// required check fails; simulation must not start on a bad system.
fn gate_hypotheses(
    coeffs: &SystemCoefficients,
    spec: &LevyMeasureSpec,
    master_seed: u64,
    report: &mut RunReport,
) -> Result<()> {
    let validation = check_hypotheses(coeffs, spec, master_seed)
        .map_err(|e| anyhow!("hypothesis validation could not run: {e}"))?;
    if !validation.passed() {
        let names: Vec<&str> = validation.failures().map(|c| c.name.as_str()).collect();
        bail!(
            "hypothesis validation failed ({}); aborting before simulation",
            names.join(", ")
        );
    }
    report.line(format!(
        "hypothesis checks: all required passed ({} checks)",
        validation.checks.len()
    ));
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// `validate`: run every hypothesis check and report pass/fail per check.
pub fn validate(rc: &ResolvedConfig, out_dir: &Path) -> Result<RunReport> {
    let spec = need_measure(rc)?;
    let sys = need_system(rc)?;
    let mut report = RunReport::new();
    let validation = check_hypotheses(&sys.coeffs, &spec, rc.master_seed)
        .map_err(|e| anyhow!("hypothesis validation could not run: {e}"))?;

    let mut csv = String::from("name,passed,required,value,detail\n");
    for check in &validation.checks {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            check.name,
            check.passed,
            check.required,
            fmt_opt(check.value),
            csv_quote(&check.detail),
        ));
    }
    report.write(out_dir, "validation.csv", &csv)?;

    for check in &validation.checks {
        let status = match (check.passed, check.required) {
            (true, _) => "pass",
            (false, true) => "FAIL",
            (false, false) => "fail (informational)",
        };
        report.line(format!("check {}: {status}", check.name));
    }
    let n_req = validation.checks.iter().filter(|c| c.required).count();
    let n_req_passed = validation
        .checks
        .iter()
        .filter(|c| c.required && c.passed)
        .count();
    report.line(format!(
        "required hypothesis checks: {n_req_passed} of {n_req} passed"
    ));
    report.ok = validation.passed();
    Ok(report)
}

/// `simulate`: integrate two-scale paths on each ε level and record terminal
/// states; a failed trial is logged and counted, never fatal.
pub fn simulate(rc: &ResolvedConfig, out_dir: &Path) -> Result<RunReport> {
    let spec = need_measure(rc)?;
    let sys = need_system(rc)?;
    let sim = rc.file.simulate.as_ref().ok_or_else(|| missing_block("simulate"))?;
    if sim.eps_grid.is_empty() {
        bail!("simulate.eps_grid must list at least one epsilon");
    }
    if sim.trials == 0 {
        bail!("simulate.trials must be positive");
    }
    let mut report = RunReport::new();
    gate_hypotheses(&sys.coeffs, &spec, rc.master_seed, &mut report)?;

    let d = sys.coeffs.slow_dim();
    let k = sys.coeffs.fast_dim();
    let x0 = sim.x0.clone().unwrap_or_else(|| vec![1.0; d]);
    let y0 = sim.y0.clone().unwrap_or_else(|| vec![0.0; k]);
    if x0.len() != d {
        bail!("simulate.x0 must have {d} entries for this system");
    }
    if y0.len() != k {
        bail!("simulate.y0 must have {k} entries for this system");
    }

    let mut csv = String::from("eps,trial,status");
    for j in 0..d {
        csv.push_str(&format!(",x{j}"));
    }
    for j in 0..k {
        csv.push_str(&format!(",y{j}"));
    }
    csv.push_str(",sup_slow\n");

    let master_seed = rc.master_seed;
    for (ei, &eps) in sim.eps_grid.iter().enumerate() {
        let h_step = sim.h_factor * eps;
        let engine = SimEngine::new(&sys.coeffs, &spec, eps, sim.horizon, h_step)
            .map_err(|e| anyhow!("simulate block rejected at eps={eps}: {e}"))?;
        // Per-trial streams are keyed by (master seed, ε index, trial), so
        // the worker count never changes any byte of the output.
        let rows: Vec<(String, bool, f64)> = (0..sim.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = stream_rng(master_seed, StreamKind::Path, ei as u32, trial);
                let lineage = Some(SeedLineage {
                    master_seed,
                    param_index: ei as u32,
                    trial,
                });
                match engine.multiscale_path(&x0, &y0, &mut rng, lineage) {
                    Ok(path) => {
                        let n = path.times.len();
                        let mut sup = 0.0f64;
                        for i in 0..n {
                            let row = &path.slow[i * d..(i + 1) * d];
                            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                            sup = sup.max(norm);
                        }
                        let mut row = format!("{eps},{trial},ok");
                        for v in path.terminal_slow() {
                            row.push_str(&format!(",{v}"));
                        }
                        for v in path.terminal_fast() {
                            row.push_str(&format!(",{v}"));
                        }
                        row.push_str(&format!(",{sup}"));
                        (row, true, sup)
                    }
                    Err(e) => {
                        eprintln!("warning: eps={eps} trial={trial} failed: {e}");
                        let row = format!("{eps},{trial},error{}", ",".repeat(d + k + 1));
                        (row, false, f64::NAN)
                    }
                }
            })
            .collect();

        let mut failed = 0u64;
        let mut sup_sum = 0.0;
        let mut n_ok = 0u64;
        for (row, ok, sup) in &rows {
            csv.push_str(row);
            csv.push('\n');
            if *ok {
                sup_sum += sup;
                n_ok += 1;
            } else {
                failed += 1;
            }
        }
        report.failed_trials += failed;
        let mean_sup = if n_ok > 0 { sup_sum / n_ok as f64 } else { f64::NAN };
        report.line(format!(
            "eps={eps}: {n_ok} ok, {failed} failed, mean sup|X| = {mean_sup:.6}"
        ));
    }
    report.write(out_dir, "paths.csv", &csv)?;
    Ok(report)
}

/// `average`: tabulate the averaged drift, measure the mixing rate, and run
/// the deviation-probability experiment against the averaged flow.
pub fn average(rc: &ResolvedConfig, out_dir: &Path) -> Result<RunReport> {
    let spec = need_measure(rc)?;
    let sys = need_system(rc)?;
    let av = rc.file.average.as_ref().ok_or_else(|| missing_block("average"))?;
    if av.eps_grid.is_empty() {
        bail!("average.eps_grid must list at least one epsilon");
    }
    if av.grid.is_empty() {
        bail!("average.grid must list at least one slow-state node");
    }
    let mut report = RunReport::new();
    gate_hypotheses(&sys.coeffs, &spec, rc.master_seed, &mut report)?;

    let d = sys.coeffs.slow_dim();
    let k = sys.coeffs.fast_dim();
    let y0 = av.y0.clone().unwrap_or_else(|| vec![0.0; k]);
    let burn_in = av.burn_in.unwrap_or(av.t_long / 10.0);

    let table = fwlab::abar_table(
        &sys.coeffs,
        &spec,
        &av.grid,
        &y0,
        av.t_long,
        burn_in,
        av.h_step,
        rc.master_seed,
    )
    .map_err(|e| anyhow!("averaged-drift tabulation failed: {e}"))?;
    report.write(out_dir, "abar.csv", &table.to_csv())?;
    report.line(format!(
        "averaged drift tabulated at {} nodes, divided-difference bound {:.6}",
        table.xs.len(),
        table.lipschitz_bound
    ));

    let frozen_x = av.x0.clone().unwrap_or_else(|| vec![1.0; d]);
    let drift = sys.averaged_drift();
    let mut abar_at_x = vec![0.0; d];
    drift(&frozen_x, &mut abar_at_x);
    let horizons = av
        .mixing_horizons
        .clone()
        .unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    let mixing = estimate_mixing(
        &sys.coeffs,
        &spec,
        &frozen_x,
        &y0,
        &abar_at_x,
        &horizons,
        av.mixing_replications,
        av.h_step,
        rc.master_seed,
    )
    .map_err(|e| anyhow!("mixing-rate estimation failed: {e}"))?;
    let mut csv = String::from("horizon,alpha,stderr\n");
    for i in 0..mixing.horizons.len() {
        csv.push_str(&format!(
            "{},{},{}\n",
            mixing.horizons[i], mixing.alpha_values[i], mixing.alpha_stderrs[i]
        ));
    }
    report.write(out_dir, "mixing.csv", &csv)?;
    report.line(format!(
        "mixing diagnostic log-log slope: {:.4}",
        mixing.log_log_slope
    ));

    let mut exp_cfg =
        AveragingExperimentConfig::new(av.eps_grid.clone(), av.delta, av.trials, av.horizon);
    if let Some(x0) = &av.x0 {
        exp_cfg.x0 = x0.clone();
    }
    if let Some(y0) = &av.y0 {
        exp_cfg.y0 = y0.clone();
    }
    let outcomes = averaging_experiment(&sys.coeffs, &spec, drift, &exp_cfg, rc.master_seed)
        .map_err(|e| anyhow!("deviation-probability experiment failed: {e}"))?;
    let mut csv = String::from("eps,exceedances,trials,p_hat,wilson_lo,wilson_hi\n");
    for o in &outcomes {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            o.eps, o.exceedances, o.trials, o.p_hat, o.wilson_lo, o.wilson_hi
        ));
        report.line(format!(
            "eps={}: deviation probability {:.4} [{:.4}, {:.4}]",
            o.eps, o.p_hat, o.wilson_lo, o.wilson_hi
        ));
    }
    report.write(out_dir, "exceedance.csv", &csv)?;
    Ok(report)
}

/// `action`: barrier height of the domain under the averaged system, plus
/// optional point-to-point steering costs.
pub fn action(rc: &ResolvedConfig, out_dir: &Path) -> Result<RunReport> {
    let spec = need_measure(rc)?;
    let sys = need_system(rc)?;
    let act = rc.file.action.as_ref().ok_or_else(|| missing_block("action"))?;
    if act.t_grid.is_empty() {
        bail!("action.t_grid must list at least one horizon");
    }
    let mut report = RunReport::new();
    gate_hypotheses(&sys.coeffs, &spec, rc.master_seed, &mut report)?;

    let domain = act.domain.build()?;
    let opt = act.opt.build(rc.master_seed);
    let abar = sys.averaged_drift();
    let jump = sys.slow_jump();
    let result = potential_height(
        abar,
        jump,
        &spec,
        &domain,
        act.n_boundary,
        act.offset_frac,
        &act.t_grid,
        &opt,
    )
    .map_err(|e| anyhow!("barrier-height optimization failed: {e}"))?;

    let mut csv = String::from("horizon,value,violation\n");
    for h in &result.per_horizon {
        csv.push_str(&format!("{},{},{}\n", h.horizon, fmt_opt(h.value), h.violation));
    }
    report.write(out_dir, "horizons.csv", &csv)?;

    if let Some(scan) = &result.boundary {
        let dim = scan.nodes.first().map(|n| n.len()).unwrap_or(1);
        let mut csv = String::from("index");
        for j in 0..dim {
            csv.push_str(&format!(",node{j}"));
        }
        for j in 0..dim {
            csv.push_str(&format!(",target{j}"));
        }
        csv.push_str(",value,is_argmin\n");
        for i in 0..scan.nodes.len() {
            csv.push_str(&i.to_string());
            for v in &scan.nodes[i] {
                csv.push_str(&format!(",{v}"));
            }
            for v in &scan.targets[i] {
                csv.push_str(&format!(",{v}"));
            }
            csv.push_str(&format!(
                ",{},{}\n",
                fmt_opt(scan.values[i]),
                scan.argmin == Some(i)
            ));
        }
        report.write(out_dir, "boundary.csv", &csv)?;
    }

    match result.value {
        Some(v) => report.line(format!(
            "barrier height: {v:.6} (optimal horizon {})",
            result
                .optimal_horizon
                .map(|t| t.to_string())
                .unwrap_or_else(|| "?".to_string())
        )),
        None => report.line("barrier height: unreachable on this horizon grid".to_string()),
    }
    if result.argmin_at_largest_horizon {
        report.line("note: minimizing horizon is the largest in the grid".to_string());
    }

    if let Some(targets) = &act.targets {
        let d = spec.dim();
        let source = act.source.clone().unwrap_or_else(|| vec![0.0; d]);
        let mut csv = String::from("index");
        for j in 0..d {
            csv.push_str(&format!(",target{j}"));
        }
        csv.push_str(",value,optimal_horizon,truncated\n");
        for (i, target) in targets.iter().enumerate() {
            let mut opt_t = opt.clone();
            // Each target gets its own optimizer stream lineage, clear of the
            // indices the boundary sweep uses.
            opt_t.param_index = 10_000 + i as u32;
            let q = quasi_potential(abar, jump, &spec, &source, target, &act.t_grid, &opt_t)
                .map_err(|e| anyhow!("steering cost to target {i} failed: {e}"))?;
            csv.push_str(&i.to_string());
            for v in target {
                csv.push_str(&format!(",{v}"));
            }
            csv.push_str(&format!(
                ",{},{},{}\n",
                fmt_opt(q.value),
                fmt_opt(q.optimal_horizon),
                q.argmin_at_largest_horizon
            ));
            report.line(format!(
                "steering cost to target {i}: {}",
                q.value
                    .map(|v| format!("{v:.6}"))
                    .unwrap_or_else(|| "infeasible".to_string())
            ));
        }
        report.write(out_dir, "targets.csv", &csv)?;
    }
    Ok(report)
}

/// `exit`: first-exit experiment across ε, the slow-exit regression against
/// the configured barrier height, and the exit-locus histogram.
pub fn exit(rc: &ResolvedConfig, out_dir: &Path) -> Result<RunReport> {
    let spec = need_measure(rc)?;
    let sys = need_system(rc)?;
    let ex = rc.file.exit.as_ref().ok_or_else(|| missing_block("exit"))?;
    if ex.eps_grid.is_empty() {
        bail!("exit.eps_grid must list at least one epsilon");
    }
    let mut report = RunReport::new();
    gate_hypotheses(&sys.coeffs, &spec, rc.master_seed, &mut report)?;

    let domain = ex.domain.build()?;
    let mut exit_cfg =
        ExitExperimentConfig::new(domain, ex.eps_grid.clone(), ex.trials, ex.time_cap)
            .map_err(|e| anyhow!("exit block rejected: {e}"))?;
    if let Some(v) = ex.rho {
        exit_cfg.rho = v;
    }
    if let Some(v) = ex.rho_prime {
        exit_cfg.rho_prime = v;
    }
    if let Some(v) = ex.step_cap {
        exit_cfg.step_cap = v;
    }
    if let Some(v) = ex.h_factor {
        exit_cfg.h_factor = v;
    }
    if let Some(v) = &ex.x0 {
        exit_cfg.x0 = v.clone();
    }
    if let Some(v) = &ex.y0 {
        exit_cfg.y0 = v.clone();
    }
    exit_cfg
        .validate()
        .map_err(|e| anyhow!("exit block rejected: {e}"))?;

    let records = run_exit_trials(&sys.coeffs, &spec, &exit_cfg, rc.master_seed)
        .map_err(|e| anyhow!("exit experiment failed: {e}"))?;
    report.write(out_dir, "exit_records.csv", &records_to_csv(&records))?;

    let regression = kramers_regression(&records, ex.vbar, &ex.band_deltas)
        .map_err(|e| anyhow!("exit-time regression failed: {e}"))?;
    let mut csv = String::from("eps,n_trials,n_censored,mean_sigma,median_sigma,eps_ln_mean");
    for delta in &regression.band_deltas {
        csv.push_str(&format!(",band_frac_{delta}"));
    }
    csv.push('\n');
    for agg in &regression.per_eps {
        csv.push_str(&format!(
            "{},{},{},{},{},{}",
            agg.eps, agg.n_trials, agg.n_censored, agg.mean_sigma, agg.median_sigma, agg.eps_ln_mean
        ));
        for frac in &agg.band_fractions {
            csv.push_str(&format!(",{frac}"));
        }
        csv.push('\n');
        report.line(format!(
            "eps={}: mean exit {:.4}, censored {}/{}",
            agg.eps, agg.mean_sigma, agg.n_censored, agg.n_trials
        ));
    }
    report.write(out_dir, "exit_fit.csv", &csv)?;
    report.line(format!(
        "exit-scale fit: limit {:.6}, slope {:.6}, reference barrier {:.6}{}",
        regression.limit,
        regression.slope,
        regression.vbar,
        if regression.partial { " (partial fit)" } else { "" }
    ));

    let edges = ex
        .locus_edges
        .clone()
        .unwrap_or_else(|| ex.domain.default_locus_edges());
    let z_star = ex
        .z_star
        .as_ref()
        .map(|z| (z.as_slice(), ex.z_star_delta.unwrap_or(0.25)));
    let mut csv = String::from("eps,bin_lo,bin_hi,count,frequency,wilson_lo,wilson_hi\n");
    for per_eps in &records {
        let hist = exit_locus_histogram(per_eps, &edges, z_star)
            .map_err(|e| anyhow!("exit-locus histogram failed: {e}"))?;
        for bin in &hist.bins {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                hist.eps, bin.lo, bin.hi, bin.count, bin.frequency, bin.wilson_lo, bin.wilson_hi
            ));
        }
        if let Some(frac) = hist.near_z_star {
            report.line(format!(
                "eps={}: exit-locus concentration near reference point {frac:.4}",
                hist.eps
            ));
        }
    }
    report.write(out_dir, "exit_histogram.csv", &csv)?;
    Ok(report)
}

/// `toyldp`: the tractable single-scale jump model — trial decomposition,
/// single-jump tail table, and the two rare-event scale reports.
pub fn toyldp(rc: &ResolvedConfig, out_dir: &Path) -> Result<RunReport> {
    let tb = rc.file.toyldp.as_ref().ok_or_else(|| missing_block("toyldp"))?;
    if tb.eps_grid.is_empty() {
        bail!("toyldp.eps_grid must list at least one epsilon");
    }
    let mut report = RunReport::new();

    let mut toy_cfg = ToyModelConfig::new(
        tb.alpha_temper,
        tb.beta_tail,
        tb.eps_grid.clone(),
        tb.horizon,
        tb.threshold,
        tb.lambda_exponent,
        tb.trials as usize,
    )
    .map_err(|e| anyhow!("toyldp block rejected: {e}"))?;
    if let Some(dm) = tb.delta_min {
        toy_cfg.delta_min = dm;
        toy_cfg
            .validate()
            .map_err(|e| anyhow!("toyldp block rejected: {e}"))?;
    }

    let per_eps = simulate_toy(&toy_cfg, rc.master_seed)
        .map_err(|e| anyhow!("toy-model simulation failed: {e}"))?;
    report.write(out_dir, "toy_trials.csv", &trials_csv(&toy_cfg.eps_grid, &per_eps))?;
    report.line(format!(
        "toy model simulated: {} eps levels x {} trials",
        toy_cfg.eps_grid.len(),
        toy_cfg.trials
    ));

    let u_grid = tb
        .u_grid
        .clone()
        .unwrap_or_else(|| vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    let tail = single_jump_tail(&toy_cfg, &u_grid)
        .map_err(|e| anyhow!("single-jump tail table failed: {e}"))?;
    report.write(out_dir, "toy_tail.csv", &tail_csv(&tail))?;

    let big = big_jump_scale(&toy_cfg, rc.master_seed)
        .map_err(|e| anyhow!("large-jump scale report failed: {e}"))?;
    report.write(out_dir, "toy_big_scale.csv", &big_jump_scale_csv(&big))?;
    for p in &big.points {
        let exact = p
            .exact_log_scale
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "n/a".to_string());
        let mc = p
            .mc_log_scale
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "n/a".to_string());
        report.line(format!(
            "eps={}: large-jump scaled log-probability exact {exact}, mc {mc} ({} of {} hits)",
            p.eps, p.mc_hits, p.mc_trials
        ));
    }

    let small = small_jump_scale(&toy_cfg, rc.master_seed)
        .map_err(|e| anyhow!("small-jump scale report failed: {e}"))?;
    report.write(out_dir, "toy_small_scale.csv", &small_jump_scale_csv(&small))?;
    for (p, nv) in small.points.iter().zip(&small.neglected_variance) {
        report.line(format!(
            "eps={}: small-jump bound {:.6}, neglected variance {:.3e}{}",
            p.eps,
            p.chernoff_log_scale.unwrap_or(f64::NAN),
            nv,
            if p.below_resolution { " (below MC resolution)" } else { "" }
        ));
    }
    Ok(report)
}

/// Write `manifest.json`: the reproducibility record for the run.
pub fn write_manifest(
    out_dir: &Path,
    rc: &ResolvedConfig,
    command: &str,
    report: &RunReport,
    total_ms: u128,
) -> Result<()> {
    let outputs: Vec<serde_json::Value> = report
        .outputs
        .iter()
        .map(|o| serde_json::json!({"file": o.name, "bytes": o.bytes}))
        .collect();
    let manifest = serde_json::json!({
        "command": command,
        "config_sha256": rc.sha256,
        "master_seed": rc.master_seed,
        "workers": rc.workers,
        "versions": {
            "fwlab": fwlab::VERSION,
            "fwlab-cli": env!("CARGO_PKG_VERSION"),
        },
        "timings_ms": { command: total_ms as u64 },
        "failed_trials": report.failed_trials,
        "ok": report.ok,
        "outputs": outputs,
    });
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Write `summary.txt` (no timings or absolute paths, so the bytes are
/// reproducible) and the resolved configuration for replay.
pub fn write_summary(
    out_dir: &Path,
    rc: &ResolvedConfig,
    command: &str,
    report: &RunReport,
) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!("command: {command}\n"));
    text.push_str(&format!("config sha256: {}\n", rc.sha256));
    text.push_str(&format!("master seed: {}\n", rc.master_seed));
    for line in &report.summary_lines {
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(&format!("failed trials: {}\n", report.failed_trials));
    for o in &report.outputs {
        text.push_str(&format!("output: {} ({} bytes)\n", o.name, o.bytes));
    }
    text.push_str(&format!(
        "status: {}\n",
        if report.ok { "ok" } else { "failed" }
    ));
    let path = out_dir.join("summary.txt");
    std::fs::write(&path, &text).with_context(|| format!("cannot write {}", path.display()))?;

    let cfg_path = out_dir.join("config.resolved.toml");
    std::fs::write(&cfg_path, &rc.resolved_toml)
        .with_context(|| format!("cannot write {}", cfg_path.display()))
}
