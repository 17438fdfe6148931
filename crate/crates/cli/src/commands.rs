//! The five subcommand implementations and their shared output plumbing.
//!
//! Every report file embeds a [`ToolStamp`] — config hash, tool versions,
//! effective seed — and nothing time- or host-dependent, so reruns of the
//! same config and seed are byte-identical.

use crate::config::ExperimentConfig;
use serde::Serialize;
use stable_width_core::counterexample::divergence_experiment;
use stable_width_core::heavy::{TailMode, TailSpec};
use stable_width_core::limit::{self, JointChain, LimitChain};
use stable_width_core::mlp::{Activation, LayerConfig, NetworkConfig};
use stable_width_core::rng::{tags, SeedTree};
use stable_width_core::stable::{c_alpha, StableParams};
use stable_width_core::stats::{convergence_sweep, ConvergenceReport, SweepOptions};
use stable_width_core::{Error, Result};
use std::path::PathBuf;

/// Tolerance-gate outcome: `Fail` exits 1 (distinct from configuration and
/// numeric errors, which exit 2 and 3).
pub enum Gate {
    Pass,
    Fail(String),
}

pub struct Context {
    pub cfg: ExperimentConfig,
    pub config_sha256: String,
    pub out_dir: PathBuf,
}

/// Provenance block embedded in every output file.
#[derive(Clone, Serialize)]
struct ToolStamp {
    cli_version: &'static str,
    core_version: &'static str,
    config_sha256: String,
    seed: u64,
}

impl Context {
    fn stamp(&self) -> ToolStamp {
        ToolStamp {
            cli_version: env!("CARGO_PKG_VERSION"),
            core_version: stable_width_core::VERSION,
            config_sha256: self.config_sha256.clone(),
            seed: self.cfg.seed,
        }
    }

    /// The same stamp as a CSV comment line.
    fn csv_stamp(&self) -> String {
        format!(
            "# config_sha256={} cli_version={} core_version={} seed={}\n",
            self.config_sha256,
            env!("CARGO_PKG_VERSION"),
            stable_width_core::VERSION,
            self.cfg.seed
        )
    }

    fn write_out(&self, name: &str, content: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| {
            Error::config(format!(
                "cannot create output directory {}: {e}",
                self.out_dir.display()
            ))
        })?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, content)
            .map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn sweep_options(&self) -> SweepOptions<f64> {
        let defaults = SweepOptions::<f64>::default();
        SweepOptions {
            n_mc: self.cfg.n_mc.unwrap_or(defaults.n_mc),
            n_atoms: self.cfg.n_atoms.unwrap_or(defaults.n_atoms),
            sup_tol: self.cfg.tolerances.as_ref().and_then(|t| t.sup_cf),
            variance_rel_tol: self
                .cfg
                .tolerances
                .as_ref()
                .and_then(|t| t.variance_rel)
                .unwrap_or(defaults.variance_rel_tol),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json renders");
    s.push('\n');
    s
}

/// Short human label for an activation, read off its wire form.
fn activation_label(act: &Activation<f64>) -> String {
    match to_value(act) {
        serde_json::Value::Object(map) => {
            let kind = map
                .get("kind")
                .and_then(|k| k.as_str())
                .unwrap_or("unknown")
                .to_string();
            match map.get("params").and_then(|p| p.as_array()) {
                Some(params) if !params.is_empty() => {
                    let vals: Vec<String> = params.iter().map(|p| p.to_string()).collect();
                    format!("{kind}({})", vals.join(","))
                }
                _ => kind,
            }
        }
        _ => "unknown".to_string(),
    }
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

/// Compute the limit laws (univariate always; joint when there are several
/// inputs or `joint: true`) and write `predict.json`.
///
/// The seed streams mirror the ones `verify` derives, so for a given config
/// and seed the predicted law here is bit-identical to the prediction
/// embedded in the verify report.
pub fn predict(ctx: &Context) -> Result<Gate> {
    let cfg = &ctx.cfg;
    let net = cfg.require_network()?;
    let inputs = cfg.require_inputs()?;
    let n_mc = cfg.n_mc.unwrap_or(limit::DEFAULT_MC);
    let n_atoms = cfg.n_atoms.unwrap_or(100_000);

    let ptree = SeedTree::new(cfg.seed).child(tags::PREDICTION);
    let chain: LimitChain<f64> = limit::sigma_recursion(net, &inputs[0], n_mc, &ptree)?;

    let want_joint = inputs.len() >= 2 || cfg.joint.unwrap_or(false);
    let joint: Option<JointChain<f64>> = if want_joint {
        Some(limit::joint_chain(
            net,
            inputs,
            n_mc.min(200_000),
            n_atoms,
            &ptree.child(2),
        )?)
    } else {
        None
    };

    let doc = serde_json::json!({
        "tool": to_value(&ctx.stamp()),
        "univariate": to_value(&chain),
        "joint": joint.as_ref().map(to_value),
    });
    let path = ctx.write_out("predict.json", &pretty(&doc))?;

    println!("predicted limit laws -> {}", path.display());
    for layer in &chain.layers {
        println!(
            "  layer {}: alpha = {}, sigma = {:.6} (stderr {:.2e})",
            layer.layer, layer.alpha, layer.sigma, layer.sigma_stderr
        );
    }
    if let Some(j) = &joint {
        println!(
            "  joint law over {} inputs ({} layers, atom budget {})",
            j.inputs,
            j.layers.len(),
            j.atom_budget
        );
    }
    Ok(Gate::Pass)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

/// Run the width sweep against the predicted law; write `verify.json` and
/// `verify.csv`; gate on the report's pass flags.
pub fn verify(ctx: &Context) -> Result<Gate> {
    let cfg = &ctx.cfg;
    let net = cfg.require_network()?;
    let inputs = cfg.require_inputs()?;
    let layer = cfg.require_layer()?;
    let widths = cfg.require_widths()?;
    let m = cfg.require_replicates()?;
    let opts = ctx.sweep_options();

    let tree = SeedTree::new(cfg.seed);
    let report = convergence_sweep(net, inputs, layer, widths, m, &tree, &opts)?;

    let doc = serde_json::json!({
        "tool": to_value(&ctx.stamp()),
        "report": to_value(&report),
    });
    let json_path = ctx.write_out("verify.json", &pretty(&doc))?;
    let csv_path = ctx.write_out("verify.csv", &format!("{}{}", ctx.csv_stamp(), report.to_csv()))?;

    print_verify_summary(&report);
    println!("report -> {} and {}", json_path.display(), csv_path.display());
    gate_report(&report)
}

fn print_verify_summary(report: &ConvergenceReport<f64>) {
    println!(
        "layer {} across widths {:?} ({} replicates each):",
        report.layer, report.widths, report.replicates
    );
    println!(
        "  predicted: alpha = {}, sigma = {:.6}",
        report.predicted.alpha, report.predicted.sigma
    );
    for row in &report.rows {
        let joint = row
            .joint_sup
            .map(|j| format!(", joint sup-CF {j:.4}"))
            .unwrap_or_default();
        let var = row
            .variance
            .map(|v| format!(", variance {v:.4}"))
            .unwrap_or_default();
        println!(
            "  width {:>8}: sup-CF {:.4}, alpha_hat {:.3}, sigma_hat {:.4}{joint}{var}",
            row.width, row.sup_cf, row.alpha_hat, row.sigma_hat
        );
    }
}

fn gate_report(report: &ConvergenceReport<f64>) -> Result<Gate> {
    let flags = &report.pass;
    if flags.all {
        println!(
            "PASS: sup-CF {:.4} at width {} is within tolerance {:.4}",
            report.rows.last().map(|r| r.sup_cf).unwrap_or(f64::NAN),
            report.widths.last().copied().unwrap_or(0),
            report.sup_tolerance
        );
        return Ok(Gate::Pass);
    }
    let mut reasons = Vec::new();
    if !flags.sup_ok {
        reasons.push(format!(
            "sup-CF {:.4} at the largest width exceeds tolerance {:.4}",
            report.rows.last().map(|r| r.sup_cf).unwrap_or(f64::NAN),
            report.sup_tolerance
        ));
    }
    if flags.trend_ok == Some(false) {
        reasons.push("sup-CF did not shrink from the first width to the last".to_string());
    }
    if flags.variance_ok == Some(false) {
        reasons.push(format!(
            "sample variance misses the predicted 2 sigma^2 by more than {:.1}%",
            100.0 * report.variance_rel_tol
        ));
    }
    Ok(Gate::Fail(reasons.join("; ")))
}

// ---------------------------------------------------------------------------
// counterexample
// ---------------------------------------------------------------------------

/// Run the divergence experiment; write `counterexample.json` and
/// `counterexample.csv`; gate on the report's pass flag.
pub fn counterexample(ctx: &Context) -> Result<Gate> {
    let cfg = &ctx.cfg;
    let section = cfg.counterexample.as_ref().ok_or_else(|| {
        Error::config("this command needs a \"counterexample\" section in the config")
    })?;
    let core_cfg = section.to_core(cfg.seed)?;
    let report = divergence_experiment(&core_cfg)?;

    let doc = serde_json::json!({
        "tool": to_value(&ctx.stamp()),
        "report": to_value(&report),
    });
    let json_path = ctx.write_out("counterexample.json", &pretty(&doc))?;
    let csv_path = ctx.write_out(
        "counterexample.csv",
        &format!("{}{}", ctx.csv_stamp(), report.to_csv()),
    )?;

    println!(
        "divergence experiment at alpha = {} ({} replicates):",
        report.alpha, report.replicates
    );
    println!(
        "  naive scaling: sigma_hat grows by {:.3}x (threshold {:.3}), medians monotone: {}",
        report.naive_growth_factor, report.growth_threshold, report.median_monotone
    );
    println!(
        "  corrected scaling: largest/smallest sigma_hat ratio {:.3} (band [0.7, 1.4])",
        report.corrected_ratio
    );
    println!("report -> {} and {}", json_path.display(), csv_path.display());

    if report.pass {
        println!("PASS: naive scaling diverges and the corrected scaling stabilizes");
        Ok(Gate::Pass)
    } else {
        let mut reasons = Vec::new();
        if !report.growth_ok {
            reasons.push(format!(
                "naive growth {:.3} is below the required {:.3}",
                report.naive_growth_factor, report.growth_threshold
            ));
        }
        if !report.median_monotone {
            reasons.push("naive-scaled medians are not strictly increasing".to_string());
        }
        if !report.corrected_ok {
            reasons.push(format!(
                "corrected ratio {:.3} falls outside [0.7, 1.4]",
                report.corrected_ratio
            ));
        }
        Ok(Gate::Fail(reasons.join("; ")))
    }
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepBlock {
    index: usize,
    alpha: f64,
    activation: serde_json::Value,
    report: ConvergenceReport<f64>,
}

/// One verify block per (α, activation) grid point: the base network is
/// rebuilt with every layer's weight law moved to the grid α (heavy laws
/// keep their slowly varying factor, stable laws their scale) and the grid
/// activation swapped in. Each point runs under its own seed stream;
/// per-block JSON and CSV reports are concatenated into one file each.
pub fn sweep(ctx: &Context) -> Result<Gate> {
    let cfg = &ctx.cfg;
    let net = cfg.require_network()?;
    let inputs = cfg.require_inputs()?;
    let layer = cfg.require_layer()?;
    let widths = cfg.require_widths()?;
    let m = cfg.require_replicates()?;
    let section = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("this command needs a \"sweep\" section in the config"))?;
    if section.alphas.is_empty() {
        return Err(Error::config(
            "sweep grid is empty: \"sweep.alphas\" must list at least one tail index",
        ));
    }
    let activations: Vec<Activation<f64>> = if section.activations.is_empty() {
        vec![net.activation().clone()]
    } else {
        section.activations.clone()
    };
    let opts = ctx.sweep_options();
    let root = SeedTree::new(cfg.seed).child(tags::SWEEP);

    let mut blocks: Vec<SweepBlock> = Vec::new();
    let mut csv = ctx.csv_stamp();
    let mut failures = Vec::new();
    for (i, (&alpha, act)) in section
        .alphas
        .iter()
        .flat_map(|a| activations.iter().map(move |act| (a, act)))
        .enumerate()
    {
        let point_net = rebuild_at(net, alpha, act)?;
        let tree = root.child(i as u64);
        let report = convergence_sweep(&point_net, inputs, layer, widths, m, &tree, &opts)?;
        let label = activation_label(act);
        println!(
            "block {i}: alpha = {alpha}, activation = {label}, sup-CF {:.4} at width {}, pass: {}",
            report.rows.last().map(|r| r.sup_cf).unwrap_or(f64::NAN),
            report.widths.last().copied().unwrap_or(0),
            report.pass.all
        );
        if !report.pass.all {
            failures.push(format!("block {i} (alpha = {alpha}, {label})"));
        }
        csv.push_str(&format!("# block={i} alpha={alpha} activation={label}\n"));
        csv.push_str(&report.to_csv());
        blocks.push(SweepBlock {
            index: i,
            alpha,
            activation: to_value(act),
            report,
        });
    }

    let doc = serde_json::json!({
        "tool": to_value(&ctx.stamp()),
        "blocks": to_value(&blocks),
    });
    let json_path = ctx.write_out("sweep.json", &pretty(&doc))?;
    let csv_path = ctx.write_out("sweep.csv", &csv)?;
    println!(
        "{} blocks -> {} and {}",
        blocks.len(),
        json_path.display(),
        csv_path.display()
    );

    if failures.is_empty() {
        println!("PASS: every sweep block met its gates");
        Ok(Gate::Pass)
    } else {
        Ok(Gate::Fail(format!("gates failed in {}", failures.join(", "))))
    }
}

/// The base network with every layer's weight law moved to `alpha` and the
/// activation replaced. Finite-variance laws have no tail index to move, so
/// they only admit the α = 2 grid point.
fn rebuild_at(
    net: &NetworkConfig<f64>,
    alpha: f64,
    act: &Activation<f64>,
) -> Result<NetworkConfig<f64>> {
    let mut layers = Vec::with_capacity(net.layers().len());
    for (i, layer) in net.layers().iter().enumerate() {
        let weights = match layer.weights.mode() {
            TailMode::Heavy { sv } => TailSpec::heavy(alpha, sv.clone())?,
            TailMode::Stable { sigma } => TailSpec::stable(alpha, *sigma)?,
            TailMode::Finite { law } => {
                if alpha == 2.0 {
                    TailSpec::finite(law.clone())?
                } else {
                    return Err(Error::config(format!(
                        "sweep alpha = {alpha}: layer {} uses a finite-variance weight law, \
                         which only exists at alpha = 2; use a heavy or stable law to sweep \
                         over the tail index",
                        i + 1
                    )));
                }
            }
        };
        layers.push(LayerConfig::new(weights, layer.sigma_bias)?);
    }
    NetworkConfig::new(net.input_dim(), net.depth(), layers, act.clone())
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

/// Quick built-in checks: degenerate-activation exactness, config schema
/// gates, pinned constants, and bitwise reproducibility. Every check runs
/// in well under a second; failures exit 1.
pub fn selftest() -> Result<Gate> {
    let checks: Vec<(&str, fn() -> std::result::Result<(), String>)> = vec![
        ("zero activation collapses sigma to sigma_bias", st_phi_zero),
        ("unknown config keys are rejected by name", st_unknown_key),
        ("unsupported config versions are rejected", st_version_gate),
        ("tail-constant pinned values hold", st_c_alpha),
        ("characteristic function is 1 at t = 0", st_cf_zero),
        ("non-increasing sweep widths are rejected", st_bad_widths),
        ("equal seeds reproduce bit-identical results", st_same_seed),
        ("distinct seeds decorrelate", st_distinct_seeds),
    ];

    let mut failed = Vec::new();
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("selftest: {name}: ok"),
            Err(msg) => {
                println!("selftest: {name}: FAILED ({msg})");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        println!("selftest: all checks passed");
        Ok(Gate::Pass)
    } else {
        Ok(Gate::Fail(format!(
            "{} selftest check(s) failed: {}",
            failed.len(),
            failed.join("; ")
        )))
    }
}

/// Depth-2 Pareto(1.5) network used by several checks.
fn selftest_net(act: Activation<f64>) -> std::result::Result<NetworkConfig<f64>, String> {
    use stable_width_core::heavy::SlowlyVarying;
    let spec = TailSpec::heavy(1.5, SlowlyVarying::Constant { c: 1.0 }).map_err(err_str)?;
    let layer = LayerConfig::new(spec, 1.0).map_err(err_str)?;
    NetworkConfig::new(2, 2, vec![layer.clone(), layer.clone(), layer], act).map_err(err_str)
}

fn err_str(e: Error) -> String {
    e.to_string()
}

/// φ ≡ 0 kills the integral term, so σ_ℓ = σ_bias exactly at every layer.
fn st_phi_zero() -> std::result::Result<(), String> {
    let net = selftest_net(Activation::ClippedLinear { bound: 0.0 })?;
    let chain = limit::sigma_recursion(&net, &[1.0, 0.5], 10_000, &SeedTree::new(7))
        .map_err(err_str)?;
    for layer in &chain.layers {
        if (layer.sigma - 1.0).abs() > 1e-12 {
            return Err(format!(
                "layer {} sigma = {} (want the bias scale 1)",
                layer.layer, layer.sigma
            ));
        }
    }
    Ok(())
}

fn st_unknown_key() -> std::result::Result<(), String> {
    let text = r#"{"version": 1, "seed": 1, "typo_field": 3}"#;
    match ExperimentConfig::from_json(text) {
        Ok(_) => Err("a config with an unknown key parsed".to_string()),
        Err(e) if e.to_string().contains("typo_field") => Ok(()),
        Err(e) => Err(format!("rejection does not name the key: {e}")),
    }
}

fn st_version_gate() -> std::result::Result<(), String> {
    let text = r#"{"version": 99, "seed": 1}"#;
    match ExperimentConfig::from_json(text) {
        Ok(_) => Err("a config with version 99 parsed".to_string()),
        Err(e) if e.to_string().contains("version") => Ok(()),
        Err(e) => Err(format!("rejection does not mention the version: {e}")),
    }
}

fn st_c_alpha() -> std::result::Result<(), String> {
    let at_two = c_alpha(2.0).map_err(err_str)?;
    if at_two != 1.0 {
        return Err(format!("c(2) = {at_two}, want exactly 1"));
    }
    let at_one = c_alpha(1.0).map_err(err_str)?;
    if (at_one - std::f64::consts::FRAC_PI_2).abs() > 1e-12 {
        return Err(format!("c(1) = {at_one}, want pi/2"));
    }
    Ok(())
}

fn st_cf_zero() -> std::result::Result<(), String> {
    let p = StableParams::new(1.5, 2.0).map_err(err_str)?;
    let at_zero = p.cf(0.0);
    if at_zero != 1.0 {
        return Err(format!("cf(0) = {at_zero}, want exactly 1"));
    }
    Ok(())
}

fn st_bad_widths() -> std::result::Result<(), String> {
    let net = selftest_net(Activation::Tanh)?;
    let tree = SeedTree::new(3);
    let opts = SweepOptions::default();
    match convergence_sweep(&net, &[vec![1.0, 0.5]], 2, &[50, 20], 100, &tree, &opts) {
        Ok(_) => Err("a decreasing width schedule was accepted".to_string()),
        Err(Error::Config(_)) => Ok(()),
        Err(e) => Err(format!("wrong error category: {e}")),
    }
}

fn st_same_seed() -> std::result::Result<(), String> {
    let net = selftest_net(Activation::Tanh)?;
    let sigma = |seed: u64| -> std::result::Result<f64, String> {
        let chain = limit::sigma_recursion(&net, &[1.0, 0.5], 20_000, &SeedTree::new(seed))
            .map_err(err_str)?;
        Ok(chain.layers[0].sigma)
    };
    let (a, b) = (sigma(42)?, sigma(42)?);
    if a.to_bits() != b.to_bits() {
        return Err(format!("two runs at seed 42 gave {a} and {b}"));
    }
    Ok(())
}

fn st_distinct_seeds() -> std::result::Result<(), String> {
    let net = selftest_net(Activation::Tanh)?;
    let sigma = |seed: u64| -> std::result::Result<f64, String> {
        let chain = limit::sigma_recursion(&net, &[1.0, 0.5], 20_000, &SeedTree::new(seed))
            .map_err(err_str)?;
        Ok(chain.layers[0].sigma)
    };
    let (a, b) = (sigma(1)?, sigma(2)?);
    if a.to_bits() == b.to_bits() {
        return Err(format!("seeds 1 and 2 both gave {a}"));
    }
    Ok(())
}
