//! The divergence demonstration: ReLU with Pareto(α) weights under the
//! naive width scaling.
//!
//! Take a depth-1 network with standard Pareto(α) weights (tail exactly
//! `t^{−α}` from t₀ = 1), no biases, input `x = (1)`, and `φ = ReLU`. The
//! product `W⁽²⁾ · ReLU(W⁽¹⁾)` then has the exact tail
//! `P(|W₂ W₁ 1_{W₁>0}| > z) = ½ z^{−α} (1 + α log z)` for z ≥ 1 — still
//! index α, but with an unbounded slowly varying correction `1 + α log z`.
//! The naive per-layer norming `a_n = n^{1/α}` ignores that correction, so
//! the normalized sums grow without bound (at rate `(1 + α log â_n)^{1/α}`),
//! while the corrected sequence `â_n` — the quantile of the *product*
//! tail — stabilizes them. This is exactly why unbounded activations are
//! rejected for heavy-tailed weights at configuration time.

use crate::heavy::{SlowlyVarying, TailSpec};
use crate::mlp::{replicate_layer_with, Activation, ForwardPlan, LayerConfig, NetworkConfig};
use crate::rng::SeedTree;
use crate::stats::{scale_estimator, ScaleEstimate};
use crate::{Error, Real, Result};
use serde::{Deserialize, Serialize};

/// Configuration of the divergence experiment. Everything else about the
/// network is pinned: Pareto(α) weights with unit tail constant, σ_B = 0,
/// ReLU, scalar input x = (1).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig<T> {
    pub alpha: T,
    pub widths: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl<T: Real> CounterexampleConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha < T::of(2.0)) {
            return Err(Error::config(format!(
                "counterexample needs α in (0, 2), got {}",
                self.alpha
            )));
        }
        if self.widths.len() < 2 {
            return Err(Error::config(
                "counterexample needs at least two widths to exhibit growth",
            ));
        }
        if self.widths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("counterexample widths must be strictly increasing"));
        }
        if self.widths[0] < 2 {
            return Err(Error::config("widths must be ≥ 2"));
        }
        if self.replicates < 1000 {
            return Err(Error::config(format!(
                "counterexample needs m ≥ 1000 for the scale estimates, got {}",
                self.replicates
            )));
        }
        Ok(())
    }
}

/// Exact tail of the single-edge product: for z ≥ 1,
/// `P(|W₂ · W₁ · 1_{W₁ > 0}| > z) = ½ z^{−α} (1 + α log z)`.
pub fn product_tail<T: Real>(z: T, alpha: T) -> Result<T> {
    if !(alpha > T::zero() && alpha < T::of(2.0)) {
        return Err(Error::config(format!("product tail needs α in (0, 2), got {alpha}")));
    }
    if !(z >= T::one()) {
        return Err(Error::config(format!(
            "product tail formula holds for z ≥ 1, got {z}"
        )));
    }
    let lnz = z.ln();
    Ok(T::of(0.5) * z.fast_powf(-alpha) * (T::one() + alpha * lnz))
}

/// The corrected norming sequence:
/// `â_n = inf{x : x^{−α}(1 + α log x)/2 ≤ 1/n}`, found by bisection on
/// the (monotone for x ≥ 1) product tail. The result satisfies
/// `n · â_n^{−α}(1 + α log â_n)/2 ∈ [1 − 1e−9, 1]`.
pub fn a_hat_n<T: Real>(alpha: T, n: u64) -> Result<T> {
    if n < 2 {
        return Err(Error::config(format!("â_n needs n ≥ 2, got {n}")));
    }
    if !(alpha > T::zero() && alpha < T::of(2.0)) {
        return Err(Error::config(format!("â_n needs α in (0, 2), got {alpha}")));
    }
    let target = T::of(n as f64).recip();
    let g = |x: T| T::of(0.5) * x.fast_powf(-alpha) * (T::one() + alpha * x.ln());
    // g(1) = 1/2 ≥ 1/n for n ≥ 2; double until below the target.
    let mut lo = T::one();
    let mut hi = T::of(2.0);
    let mut steps = 0;
    while g(hi) > target {
        lo = hi;
        hi = hi * T::of(2.0);
        steps += 1;
        if steps > 1100 || !hi.is_finite() {
            return Err(Error::numeric("â_n bracket failure: tail never crossed 1/n"));
        }
    }
    // Invariant: g(lo) > target ≥ g(hi).
    for _ in 0..200 {
        let mid = T::of(0.5) * (lo + hi);
        if g(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= hi * T::of(1e-14) {
            break;
        }
    }
    let root = hi;
    let check = T::of(n as f64) * g(root);
    if !(check >= T::one() - T::of(1e-9) && check <= T::one()) {
        return Err(Error::numeric(format!(
            "â_n bisection did not meet its defining inequality: n·G(â) = {check}"
        )));
    }
    Ok(root)
}

/// One row of the divergence report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DivergenceRow<T> {
    pub width: usize,
    /// `"naive"` (a_n = n^{1/α}) or `"corrected"` (â_n).
    pub scaling_mode: String,
    pub median_abs: T,
    pub sigma_hat: T,
    pub sigma_ci: (T, T),
}

/// Outcome of the divergence experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DivergenceReport<T> {
    pub alpha: T,
    pub replicates: usize,
    pub rows: Vec<DivergenceRow<T>>,
    /// σ̂(largest width) / σ̂(smallest width) under naive scaling.
    pub naive_growth_factor: T,
    /// Required lower bound `((1+α log â_max)/(1+α log â_min))^{1/α} · 0.5`.
    pub growth_threshold: T,
    pub growth_ok: bool,
    /// Naive-scaled medians strictly increasing across widths.
    pub median_monotone: bool,
    /// σ̂(largest)/σ̂(smallest) under corrected scaling; the stabilization
    /// band is [0.7, 1.4]. Exploratory: stabilization is checked
    /// empirically, not asserted by the underlying theory.
    pub corrected_ratio: T,
    pub corrected_ok: bool,
    /// (n, â_n) for each width.
    pub a_hat: Vec<(usize, T)>,
    pub seed_lineage: String,
    pub pass: bool,
}

impl<T: Real> DivergenceReport<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("divergence report serializes")
    }

    /// `width,scaling_mode,median_abs,sigma_hat` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("width,scaling_mode,median_abs,sigma_hat\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.width, r.scaling_mode, r.median_abs, r.sigma_hat
            ));
        }
        out
    }
}

/// Build the pinned network: depth 1, scalar input, Pareto(α) weights in
/// both layers, no biases, ReLU. Assembled through the unchecked
/// constructor precisely because the checked one rejects this pairing.
fn counterexample_net<T: Real>(alpha: T) -> Result<NetworkConfig<T>> {
    let spec = TailSpec::heavy(alpha, SlowlyVarying::Constant { c: T::one() })?;
    let layers = vec![
        LayerConfig::new(spec.clone(), T::zero())?,
        LayerConfig::new(spec, T::zero())?,
    ];
    let mut net = NetworkConfig::new_unchecked(1, 1, layers, Activation::Relu)?;
    net.set_unguarded();
    Ok(net)
}

fn median_abs<T: Real>(values: &[T]) -> T {
    let mut mags: Vec<T> = values.iter().map(|&v| v.abs()).collect();
    let mid = mags.len() / 2;
    let (_, m, _) = mags.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("no NaN"));
    *m
}

/// Simulate layer 2 of the pinned network across widths, once with the
/// naive norming `n^{1/α}` and once with the corrected `â_n`, and test
/// growth versus stabilization of the scale.
///
/// Both passes replay identical weight streams; only the final norming
/// constant differs, so the corrected values are an exact deterministic
/// rescaling of the naive ones — which is the point: no norming choice can
/// repair the law, only its scale.
pub fn divergence_experiment<T: Real>(cfg: &CounterexampleConfig<T>) -> Result<DivergenceReport<T>> {
    cfg.validate()?;
    let net = counterexample_net(cfg.alpha)?;
    let tree = SeedTree::new(cfg.seed).child(crate::rng::tags::COUNTEREXAMPLE);
    let x = vec![vec![T::one()]];
    let inv_alpha = cfg.alpha.recip();

    let mut rows = Vec::with_capacity(cfg.widths.len() * 2);
    let mut naive_sigma: Vec<T> = Vec::with_capacity(cfg.widths.len());
    let mut naive_median: Vec<T> = Vec::with_capacity(cfg.widths.len());
    let mut corrected_sigma: Vec<T> = Vec::with_capacity(cfg.widths.len());
    let mut a_hats: Vec<(usize, T)> = Vec::with_capacity(cfg.widths.len());

    for &n in &cfg.widths {
        let widths = vec![n];
        // Naive pass: for the unit-constant Pareto tail the plan's own
        // norming already is n^{1/α}.
        let plan = ForwardPlan::new(&net, &widths)?;
        let naive_scale = T::of(n as f64).fast_powf(inv_alpha);
        debug_assert!((plan.scale(2) / naive_scale - T::one()).abs() < T::of(1e-12));
        let batch = replicate_layer_with(&plan, &x, 2, cfg.replicates, &[0], &tree)?;
        let samples = batch.column(0, 0);
        let med = median_abs(&samples);
        let scale: ScaleEstimate<T> = scale_estimator(&samples, cfg.alpha)?;
        rows.push(DivergenceRow {
            width: n,
            scaling_mode: "naive".to_owned(),
            median_abs: med,
            sigma_hat: scale.sigma_hat,
            sigma_ci: (scale.ci_lo, scale.ci_hi),
        });
        naive_sigma.push(scale.sigma_hat);
        naive_median.push(med);

        // Corrected pass: same streams, â_n in place of n^{1/α}.
        let a_hat = a_hat_n(cfg.alpha, n as u64)?;
        a_hats.push((n, a_hat));
        let mut corrected_plan = ForwardPlan::new(&net, &widths)?;
        corrected_plan.override_scale(2, a_hat);
        let cbatch = replicate_layer_with(&corrected_plan, &x, 2, cfg.replicates, &[0], &tree)?;
        let csamples = cbatch.column(0, 0);
        let cmed = median_abs(&csamples);
        let cscale: ScaleEstimate<T> = scale_estimator(&csamples, cfg.alpha)?;
        rows.push(DivergenceRow {
            width: n,
            scaling_mode: "corrected".to_owned(),
            median_abs: cmed,
            sigma_hat: cscale.sigma_hat,
            sigma_ci: (cscale.ci_lo, cscale.ci_hi),
        });
        corrected_sigma.push(cscale.sigma_hat);
    }

    let a_min = a_hats.first().expect("one per width").1;
    let a_max = a_hats.last().expect("one per width").1;
    let correction = |a: T| T::one() + cfg.alpha * a.ln();
    let growth_threshold =
        (correction(a_max) / correction(a_min)).fast_powf(inv_alpha) * T::of(0.5);
    let naive_growth_factor = naive_sigma[naive_sigma.len() - 1] / naive_sigma[0];
    let growth_ok = naive_growth_factor >= growth_threshold;
    let median_monotone = naive_median.windows(2).all(|w| w[1] > w[0]);
    let corrected_ratio = corrected_sigma[corrected_sigma.len() - 1] / corrected_sigma[0];
    let corrected_ok = corrected_ratio >= T::of(0.7) && corrected_ratio <= T::of(1.4);
    let pass = growth_ok && median_monotone && corrected_ok;

    Ok(DivergenceReport {
        alpha: cfg.alpha,
        replicates: cfg.replicates,
        rows,
        naive_growth_factor,
        growth_threshold,
        growth_ok,
        median_monotone,
        corrected_ratio,
        corrected_ok,
        a_hat: a_hats,
        seed_lineage: tree.lineage().to_owned(),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_tail_plug_ins() {
        // z = 1: ½·1·(1+0) = ½ for any α.
        for &a in &[0.5f64, 1.0, 1.5, 1.9] {
            assert!((product_tail(1.0, a).unwrap() - 0.5).abs() < 1e-15);
        }
        // z = e, α = 1: ½ e^{−1} (1 + 1) = e^{−1}.
        let e = std::f64::consts::E;
        assert!((product_tail(e, 1.0).unwrap() - e.recip()).abs() < 1e-15);
        assert!(product_tail(0.99, 1.5f64).is_err());
        assert!(product_tail(2.0, 2.0f64).is_err());
    }

    #[test]
    fn product_tail_is_a_survival_function() {
        let alpha = 1.3f64;
        let mut prev = 0.5;
        for i in 1..200 {
            let z = 1.0 + i as f64 * 0.25;
            let p = product_tail(z, alpha).unwrap();
            assert!(p <= prev + 1e-15, "tail rose at z={z}");
            assert!(p >= 0.0);
            prev = p;
        }
        assert!(product_tail(1e12, alpha).unwrap() < 1e-10);
    }

    #[test]
    fn product_tail_matches_brute_force() {
        // Monte Carlo of |W₂ · ReLU(W₁)| over paired Pareto draws.
        let alpha = 1.5f64;
        let mut stream = SeedTree::new(99).stream(7);
        let n = 2_000_000usize;
        let zs = [2.0f64, 4.0, 8.0];
        let mut hits = [0u64; 3];
        for _ in 0..n {
            let u1: f64 = stream.unit();
            let sign1 = stream.next_u64() & 1 == 0;
            let w1 = u1.powf(-1.0 / alpha);
            let u2: f64 = stream.unit();
            let sign2 = stream.next_u64() & 1 == 0;
            let w2 = if sign2 { u2.powf(-1.0 / alpha) } else { -u2.powf(-1.0 / alpha) };
            // ReLU keeps W₁ only when positive.
            let prod = if sign1 { (w2 * w1).abs() } else { 0.0 };
            for (slot, &z) in hits.iter_mut().zip(&zs) {
                if prod > z {
                    *slot += 1;
                }
            }
        }
        for (&z, &h) in zs.iter().zip(&hits) {
            let p = product_tail(z, alpha).unwrap();
            let emp = h as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (emp - p).abs() < 3.0 * se,
                "z={z}: emp {emp} vs exact {p} (se {se})"
            );
        }
    }

    #[test]
    fn a_hat_defining_inequality_and_growth() {
        let alpha = 1.5f64;
        let mut prev_ratio = 0.0;
        for &n in &[100u64, 1000, 10_000, 100_000, 1_000_000] {
            let a = a_hat_n(alpha, n).unwrap();
            let check = n as f64 * 0.5 * a.powf(-alpha) * (1.0 + alpha * a.ln());
            assert!((1.0 - 1e-9..=1.0).contains(&check), "n={n}: {check}");
            let ratio = a / (n as f64).powf(1.0 / alpha);
            assert!(ratio > prev_ratio, "â_n/n^(1/α) must increase: n={n}");
            prev_ratio = ratio;
        }
        assert!(a_hat_n(1.5f64, 1).is_err());
    }

    #[test]
    fn a_hat_matches_independent_root() {
        // Independent oracle: Newton iteration on h(x) = log G(x) − log(1/n)
        // in long-double-free f64, different algorithm and start point.
        let alpha = 1.0f64;
        let n = 1000u64;
        let target = (n as f64).recip().ln();
        let mut x = (n as f64).powf(1.0 / alpha); // start at the naive scale
        for _ in 0..200 {
            let g = 0.5 * x.powf(-alpha) * (1.0 + alpha * x.ln());
            let h = g.ln() - target;
            // d/dx log G = −α/x + α/(x(1+α ln x))
            let dh = -alpha / x + alpha / (x * (1.0 + alpha * x.ln()));
            let step = h / dh;
            x -= step;
            if step.abs() < 1e-12 * x {
                break;
            }
        }
        let ours = a_hat_n(alpha, n).unwrap();
        assert!(
            ((ours - x) / x).abs() < 1e-6,
            "bisection {ours} vs newton {x}"
        );
    }

    #[test]
    fn a_hat_asymptotic_ratio() {
        let alpha = 1.2f64;
        for &n in &[1_000_000u64, 10_000_000] {
            let a = a_hat_n(alpha, n).unwrap();
            let expect = ((1.0 + alpha * a.ln()) / 2.0).powf(1.0 / alpha);
            let ratio = a / (n as f64).powf(1.0 / alpha);
            assert!(
                ((ratio - expect) / expect).abs() < 0.01,
                "n={n}: ratio {ratio} vs {expect}"
            );
        }
    }

    #[test]
    fn corrected_is_exact_rescaling_of_naive() {
        let alpha = 1.5f64;
        let net = counterexample_net(alpha).unwrap();
        let widths = vec![64usize];
        let tree = SeedTree::new(31).child(crate::rng::tags::COUNTEREXAMPLE);
        let x = vec![vec![1.0f64]];
        let plan = ForwardPlan::new(&net, &widths).unwrap();
        let naive = replicate_layer_with(&plan, &x, 2, 50, &[0], &tree).unwrap();
        let a_hat = a_hat_n(alpha, 64).unwrap();
        let mut cplan = ForwardPlan::new(&net, &widths).unwrap();
        cplan.override_scale(2, a_hat);
        let corrected = replicate_layer_with(&cplan, &x, 2, 50, &[0], &tree).unwrap();
        let factor = 64f64.powf(1.0 / alpha) / a_hat;
        for r in 0..50 {
            let nv = naive.value(r, 0, 0);
            let cv = corrected.value(r, 0, 0);
            assert!(
                (cv - nv * factor).abs() <= 1e-14 * nv.abs().max(1.0) * factor.max(1.0),
                "replicate {r}: {cv} vs {}",
                nv * factor
            );
        }
    }

    #[test]
    fn config_validation() {
        let ok = CounterexampleConfig {
            alpha: 1.5f64,
            widths: vec![100, 1000],
            replicates: 1000,
            seed: 1,
        };
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.alpha = 2.0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.widths = vec![100];
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.widths = vec![1000, 100];
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.replicates = 0;
        assert!(bad.validate().is_err());
        let json = r#"{"alpha":1.5,"widths":[100,1000],"replicates":1000,"seed":1,"extra":1}"#;
        assert!(serde_json::from_str::<CounterexampleConfig<f64>>(json).is_err());
    }

    #[test]
    fn small_divergence_run_grows() {
        // Small widths keep this fast; the full-size growth gate lives in
        // the acceptance suite.
        let cfg = CounterexampleConfig {
            alpha: 1.5f64,
            widths: vec![50, 5000],
            replicates: 4000,
            seed: 7,
        };
        let report = divergence_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert!(report.naive_growth_factor > 1.0, "{}", report.naive_growth_factor);
        assert!(report.median_monotone);
        assert!(
            report.corrected_ratio < report.naive_growth_factor,
            "correction must shrink the growth: {} vs {}",
            report.corrected_ratio,
            report.naive_growth_factor
        );
        let csv = report.to_csv();
        assert!(csv.starts_with("width,scaling_mode,median_abs,sigma_hat\n"));
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("\n50,naive,"));
        assert!(csv.contains("\n5000,corrected,"));
        // Byte-identical rerun.
        let report2 = divergence_experiment(&cfg).unwrap();
        assert_eq!(report.to_json(), report2.to_json());
    }
}
