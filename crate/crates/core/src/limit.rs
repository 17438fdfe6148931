//! Predicted infinite-width limit laws.
//!
//! As every hidden width grows, layer ℓ's pre-activations become i.i.d.
//! across nodes with a law determined by a per-layer recursion:
//!
//! * α_ℓ < 2: SαS(α_ℓ, σ_ℓ) with
//!   `σ_ℓ^{α_ℓ} = σ_B^{α_ℓ} + c_{α_ℓ} ∫ |φ(y)|^{α_ℓ} dμ_{ℓ−1}`,
//!   where μ₁ = ν⁽¹⁾ is the exact layer-1 law and μ_{ℓ−1} is the previous
//!   layer's limit;
//! * α_ℓ = 2: centered Gaussian with variance 2σ_ℓ² under the same
//!   recursion (c₂ = 1).
//!
//! For k inputs evaluated jointly, the limit of the k-vector at one node is
//! either a multivariate SαS law with a discrete spectral measure `Γ_ℓ`
//! (one atom in the all-ones direction from the shared bias, plus sampled
//! atoms `φ(y)/‖φ(y)‖` weighted by `c_α ‖φ(y)‖^α / N`) or a Gaussian with
//! covariance `M_ℓ = 2σ_B² + 2·E[φ(y_a)φ(y_b)]` entrywise.
//!
//! The `M` convention deserves a note: with the characteristic function
//! `exp(−½⟨t, M t⟩)`, consistency with the univariate α = 2 limit (variance
//! `2σ_ℓ²`) and with the shared bias `B·1` (which couples every pair of
//! inputs, exactly like the `1/√k` atom of `Γ_ℓ`) forces the factor 2 and
//! the bias term in every entry. The k = 1 reduction then reproduces
//! `σ_ℓ` exactly, which is what the cross-checks below verify.
//!
//! The integrals have no closed form (μ has no elementary density), so
//! they are Monte Carlo estimates with batch-bootstrap standard errors,
//! and σ-uncertainty is propagated layer to layer by a first-order delta
//! method with common-random-number finite differences.

use crate::linalg::pairwise_sum;
use crate::mlp::NetworkConfig;
use crate::rng::SeedTree;
use crate::stable::{
    c_alpha, sample_multivariate_sas, sample_sas_one, GaussianCov, SpectralAtom, SpectralMeasure,
    StableParams,
};
use crate::{Error, Real, Result};
use serde::{Deserialize, Serialize};

/// Default Monte Carlo size for the recursion integrals.
pub const DEFAULT_MC: usize = 1_000_000;
/// Batches for batch-mean bootstrap standard errors.
const BOOTSTRAP_BATCHES: usize = 200;
/// Bootstrap resamples.
const BOOTSTRAP_RESAMPLES: usize = 200;
/// Relative step of the common-random-number finite difference.
const CRN_STEP: f64 = 1e-4;

/// One layer of the univariate limit: SαS(α, σ) (Gaussian when α = 2,
/// variance 2σ²), with Monte Carlo accounting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnivariateLayer<T> {
    pub layer: usize,
    pub alpha: T,
    pub sigma: T,
    /// Delta-method standard error of `sigma`.
    pub sigma_stderr: T,
    /// The Monte Carlo integral `∫ |φ|^{α} dμ_prev`.
    pub integral: T,
    pub integral_stderr: T,
}

/// Univariate limit laws for layers 2..=depth+1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitChain<T> {
    pub layers: Vec<UnivariateLayer<T>>,
    pub n_mc: usize,
    pub lineage: String,
}

impl<T: Real> LimitChain<T> {
    pub fn layer(&self, ell: usize) -> Result<&UnivariateLayer<T>> {
        self.layers
            .iter()
            .find(|l| l.layer == ell)
            .ok_or_else(|| Error::config(format!("layer {ell} not in the computed chain")))
    }

    /// Predicted characteristic function `exp(−|σ_ℓ t|^{α_ℓ})`.
    pub fn cf(&self, ell: usize, t: T) -> Result<T> {
        let layer = self.layer(ell)?;
        Ok(StableParams::new(layer.alpha, layer.sigma)?.cf(t))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("limit chain serializes")
    }
}

/// One layer of the joint (k-input) limit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JointLayer<T> {
    Stable {
        layer: usize,
        spectral: SpectralMeasure<T>,
    },
    Gaussian {
        layer: usize,
        cov: GaussianCov<T>,
    },
}

impl<T: Real> JointLayer<T> {
    pub fn layer_index(&self) -> usize {
        match self {
            JointLayer::Stable { layer, .. } | JointLayer::Gaussian { layer, .. } => *layer,
        }
    }

    /// Predicted joint characteristic function at `t ∈ R^k`.
    pub fn cf(&self, t: &[T]) -> Result<T> {
        match self {
            JointLayer::Stable { spectral, .. } => crate::stable::cf_multivariate_sas(spectral, t),
            JointLayer::Gaussian { cov, .. } => cov.cf(t),
        }
    }
}

/// Joint limit laws for layers 2..=depth+1 at a fixed input set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JointChain<T> {
    pub layers: Vec<JointLayer<T>>,
    pub inputs: usize,
    pub n_mc: usize,
    pub atom_budget: usize,
    pub lineage: String,
}

impl<T: Real> JointChain<T> {
    pub fn layer(&self, ell: usize) -> Result<&JointLayer<T>> {
        self.layers
            .iter()
            .find(|l| l.layer_index() == ell)
            .ok_or_else(|| Error::config(format!("layer {ell} not in the computed chain")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("joint chain serializes")
    }
}

fn require_guarded<T: Real>(net: &NetworkConfig<T>) -> Result<()> {
    // Networks built through the validated constructor always qualify;
    // the divergence demonstrations construct unguarded networks whose
    // limit integrals do not exist.
    if net.activation().is_bounded() {
        return Ok(());
    }
    // Constructor-validated unbounded nets are fine; reconstruct the check
    // cheaply by re-running validation on a clone.
    NetworkConfig::new(
        net.input_dim(),
        net.depth(),
        net.layers().to_vec(),
        net.activation().clone(),
    )
    .map(|_| ())
    .map_err(|e| {
        Error::config(format!(
            "limit recursion needs an integrable activation/weight pairing: {e}"
        ))
    })
}

/// Draws from ν⁽¹⁾, the exact law of `Y⁽¹⁾_1(x) = Σ_j W_{1j} x_j + B`.
pub fn nu1_sampler<T: Real>(
    net: &NetworkConfig<T>,
    x: &[T],
    n: usize,
    tree: &SeedTree,
) -> Result<Vec<T>> {
    let joint = nu1_joint_sampler(net, std::slice::from_ref(&x.to_vec()), n, tree)?;
    Ok(joint.into_iter().map(|mut v| v.swap_remove(0)).collect())
}

/// Joint draws from ν⁽¹⁾_k: the k-vector `(Y⁽¹⁾(x₁), …, Y⁽¹⁾(x_k))` with
/// weights and bias shared across inputs.
pub fn nu1_joint_sampler<T: Real>(
    net: &NetworkConfig<T>,
    xs: &[Vec<T>],
    n: usize,
    tree: &SeedTree,
) -> Result<Vec<Vec<T>>> {
    if xs.is_empty() || n == 0 {
        return Err(Error::config("nu1 sampler needs inputs and n ≥ 1"));
    }
    for x in xs {
        if x.len() != net.input_dim() {
            return Err(Error::config(format!(
                "input length {} does not match input_dim {}",
                x.len(),
                net.input_dim()
            )));
        }
    }
    let layer = net.layer(1);
    let bias = if layer.sigma_bias > T::zero() {
        Some(StableParams::new(layer.alpha, layer.sigma_bias)?)
    } else {
        None
    };
    let mut wstream = tree.stream(0);
    let mut bstream = tree.stream(1);
    let dim = net.input_dim();
    let mut w = vec![T::zero(); dim];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        layer.weights.sample(&mut wstream, &mut w);
        let b = match &bias {
            Some(p) => sample_sas_one(p, &mut bstream),
            None => T::zero(),
        };
        out.push(
            xs.iter()
                .map(|x| crate::linalg::pairwise_dot(&w, x) + b)
                .collect(),
        );
    }
    Ok(out)
}

/// Batch-mean bootstrap standard error of the mean of `vals`, with a fixed
/// internal seed so reports are reproducible.
fn bootstrap_se<T: Real>(vals: &[T]) -> T {
    let n = vals.len();
    let b = BOOTSTRAP_BATCHES.min(n);
    if b < 2 {
        return T::zero();
    }
    let batch_len = n / b;
    let used = batch_len * b;
    let mut means = Vec::with_capacity(b);
    for i in 0..b {
        let chunk = &vals[i * batch_len..(i + 1) * batch_len];
        means.push(pairwise_sum(chunk) / T::of(batch_len as f64));
    }
    // SplitMix64 index stream, fixed seed: determinism over convenience.
    let mut state = 0x9e3779b97f4a7c15u64 ^ used as u64;
    let mut next = move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        (z ^ (z >> 31)) as usize
    };
    let mut resampled = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut acc = T::zero();
        for _ in 0..b {
            acc += means[next() % b];
        }
        resampled.push(acc / T::of(b as f64));
    }
    let mean = pairwise_sum(&resampled) / T::of(BOOTSTRAP_RESAMPLES as f64);
    let var = resampled
        .iter()
        .map(|&x| (x - mean) * (x - mean))
        .fold(T::zero(), |a, v| a + v)
        / T::of((BOOTSTRAP_RESAMPLES - 1) as f64);
    var.sqrt()
}

/// Mean of `|φ(y)|^p` over a sample, with bootstrap standard error.
fn mean_abs_phi_pow<T: Real>(
    net: &NetworkConfig<T>,
    ys: impl Iterator<Item = T>,
    p: T,
    keep: &mut Vec<T>,
) -> (T, T) {
    keep.clear();
    for y in ys {
        let phi = net.activation().apply(y);
        let term = if phi == T::zero() {
            T::zero()
        } else {
            phi.abs().fast_powf(p)
        };
        keep.push(term);
    }
    let mean = pairwise_sum(keep) / T::of(keep.len() as f64);
    let se = bootstrap_se(keep);
    (mean, se)
}

/// The univariate σ recursion for layers 2..=depth+1 at input `x`.
///
/// Layer 2 integrates over ν⁽¹⁾ draws; deeper layers integrate over exact
/// SαS(α_{ℓ−1}, σ_{ℓ−1}) draws. Each σ_ℓ carries a standard error
/// combining its own Monte Carlo noise with the propagated uncertainty of
/// σ_{ℓ−1} (common-random-number finite difference).
pub fn sigma_recursion<T: Real>(
    net: &NetworkConfig<T>,
    x: &[T],
    n_mc: usize,
    tree: &SeedTree,
) -> Result<LimitChain<T>> {
    require_guarded(net)?;
    if n_mc < BOOTSTRAP_BATCHES * 2 {
        return Err(Error::config(format!(
            "Monte Carlo size {n_mc} too small (need ≥ {})",
            BOOTSTRAP_BATCHES * 2
        )));
    }
    let mut layers = Vec::with_capacity(net.depth());
    let mut terms = Vec::with_capacity(n_mc);

    // Layer 2: integrate |φ|^{α₂} against ν⁽¹⁾.
    {
        let cfg = net.layer(2);
        let alpha = cfg.alpha;
        let nu1 = nu1_sampler(net, x, n_mc, &tree.child(1))?;
        let (integral, int_se) = mean_abs_phi_pow(net, nu1.iter().copied(), alpha, &mut terms);
        let c = c_alpha(alpha)?;
        let sig_b = cfg.sigma_bias;
        let s_pow = sig_b.fast_powf(alpha) + c * integral;
        let sigma = s_pow.fast_powf(alpha.recip());
        // dσ/dI = c / (α σ^{α−1})
        let dsig_di = c / (alpha * sigma.fast_powf(alpha - T::one()));
        let sigma_se = (dsig_di * int_se).abs();
        layers.push(UnivariateLayer {
            layer: 2,
            alpha,
            sigma,
            sigma_stderr: sigma_se,
            integral,
            integral_stderr: int_se,
        });
    }

    // Deeper layers: integrate against SαS(α_prev, σ_prev) via standard
    // draws scaled by σ_prev, which makes the finite-difference derivative
    // in σ_prev exact common-random-numbers.
    for ell in 3..=net.depth() + 1 {
        let cfg = net.layer(ell);
        let alpha = cfg.alpha;
        let prev = layers.last().expect("layer 2 pushed").clone();
        let std_prev = StableParams::new(prev.alpha, T::one())?;
        let mut stream = tree.child(1).stream(ell as u64);
        let z: Vec<T> = (0..n_mc).map(|_| sample_sas_one(&std_prev, &mut stream)).collect();
        let (integral, int_se) =
            mean_abs_phi_pow(net, z.iter().map(|&v| prev.sigma * v), alpha, &mut terms);
        let h = T::of(CRN_STEP);
        let bumped_sigma = prev.sigma * (T::one() + h);
        let (integral_up, _) =
            mean_abs_phi_pow(net, z.iter().map(|&v| bumped_sigma * v), alpha, &mut terms);
        let di_dsigma = (integral_up - integral) / (prev.sigma * h);
        let c = c_alpha(alpha)?;
        let s_pow = cfg.sigma_bias.fast_powf(alpha) + c * integral;
        let sigma = s_pow.fast_powf(alpha.recip());
        let denom = alpha * sigma.fast_powf(alpha - T::one());
        let dsig_di = c / denom;
        let dsig_dprev = c * di_dsigma / denom;
        let var = (dsig_di * int_se) * (dsig_di * int_se)
            + (dsig_dprev * prev.sigma_stderr) * (dsig_dprev * prev.sigma_stderr);
        layers.push(UnivariateLayer {
            layer: ell,
            alpha,
            sigma,
            sigma_stderr: var.sqrt(),
            integral,
            integral_stderr: int_se,
        });
    }

    Ok(LimitChain {
        layers,
        n_mc,
        lineage: tree.lineage().to_owned(),
    })
}

/// The joint (k-input) recursion for layers 2..=depth+1, dispatching per
/// layer to a spectral measure (α_ℓ < 2) or a Gaussian covariance
/// (α_ℓ = 2). `n_mc` draws feed the Gaussian integrals, `n_atoms` the
/// sampled spectral atoms.
pub fn joint_chain<T: Real>(
    net: &NetworkConfig<T>,
    xs: &[Vec<T>],
    n_mc: usize,
    n_atoms: usize,
    tree: &SeedTree,
) -> Result<JointChain<T>> {
    require_guarded(net)?;
    if xs.is_empty() {
        return Err(Error::config("joint chain needs at least one input"));
    }
    if n_mc == 0 || n_atoms == 0 {
        return Err(Error::config("joint chain needs n_mc ≥ 1 and n_atoms ≥ 1"));
    }
    let k = xs.len();
    let mut layers: Vec<JointLayer<T>> = Vec::with_capacity(net.depth());
    for ell in 2..=net.depth() + 1 {
        let cfg = net.layer(ell);
        let alpha = cfg.alpha;
        let gaussian = alpha == T::of(2.0);
        let n_draw = if gaussian { n_mc } else { n_atoms };
        // Previous-layer joint draws.
        let child = tree.child(ell as u64);
        let prev_draws: Vec<Vec<T>> = if ell == 2 {
            nu1_joint_sampler(net, xs, n_draw, &child)?
        } else {
            let mut stream = child.stream(0);
            let mut buf = vec![T::zero(); k];
            match layers.last().expect("previous layer computed") {
                JointLayer::Stable { spectral, .. } => (0..n_draw)
                    .map(|_| {
                        sample_multivariate_sas(spectral, &mut stream, &mut buf)
                            .map(|_| buf.clone())
                    })
                    .collect::<Result<_>>()?,
                JointLayer::Gaussian { cov, .. } => (0..n_draw)
                    .map(|_| cov.sample(&mut stream, &mut buf).map(|_| buf.clone()))
                    .collect::<Result<_>>()?,
            }
        };
        let layer = if gaussian {
            JointLayer::Gaussian {
                layer: ell,
                cov: gaussian_layer(net, cfg.sigma_bias, &prev_draws, k)?,
            }
        } else {
            JointLayer::Stable {
                layer: ell,
                spectral: spectral_layer(net, alpha, cfg.sigma_bias, &prev_draws, k)?,
            }
        };
        layers.push(layer);
    }
    Ok(JointChain {
        layers,
        inputs: k,
        n_mc,
        atom_budget: n_atoms,
        lineage: tree.lineage().to_owned(),
    })
}

/// Build Γ_ℓ from previous-layer draws: bias atom `(σ_B √k)^α` at `1/√k`
/// plus one sampled atom per draw with weight `c_α ‖φ(y)‖^α / N`
/// (zero-φ draws carry no spectral mass and are dropped).
fn spectral_layer<T: Real>(
    net: &NetworkConfig<T>,
    alpha: T,
    sigma_bias: T,
    prev_draws: &[Vec<T>],
    k: usize,
) -> Result<SpectralMeasure<T>> {
    let c = c_alpha(alpha)?;
    let n = T::of(prev_draws.len() as f64);
    let mut atoms = Vec::with_capacity(prev_draws.len() + 1);
    if sigma_bias > T::zero() {
        let root_k = T::of(k as f64).sqrt();
        atoms.push(SpectralAtom {
            s: vec![root_k.recip(); k],
            w: (sigma_bias * root_k).fast_powf(alpha),
        });
    }
    let mut phi = vec![T::zero(); k];
    for y in prev_draws {
        let mut norm_sq = T::zero();
        for (slot, &v) in phi.iter_mut().zip(y.iter()) {
            let p = net.activation().apply(v);
            *slot = p;
            norm_sq += p * p;
        }
        if norm_sq == T::zero() {
            continue;
        }
        let norm = norm_sq.sqrt();
        atoms.push(SpectralAtom {
            s: phi.iter().map(|&p| p / norm).collect(),
            w: c * norm.fast_powf(alpha) / n,
        });
    }
    if atoms.is_empty() {
        return Err(Error::numeric(
            "spectral measure came out empty: zero bias and φ ≡ 0 on all draws",
        ));
    }
    SpectralMeasure::new(k, alpha, atoms)
}

/// Build M_ℓ from previous-layer draws:
/// `M_ab = 2σ_B² + 2·mean(φ(y_a)φ(y_b))`. The sample mean of outer
/// products is PSD by construction, and the bias term adds a PSD rank-one
/// matrix, so no projection is ever needed.
fn gaussian_layer<T: Real>(
    net: &NetworkConfig<T>,
    sigma_bias: T,
    prev_draws: &[Vec<T>],
    k: usize,
) -> Result<GaussianCov<T>> {
    let n = T::of(prev_draws.len() as f64);
    let mut acc = vec![T::zero(); k * k];
    let mut phi = vec![T::zero(); k];
    for y in prev_draws {
        for (slot, &v) in phi.iter_mut().zip(y.iter()) {
            *slot = net.activation().apply(v);
        }
        for a in 0..k {
            for b in a..k {
                acc[a * k + b] += phi[a] * phi[b];
            }
        }
    }
    let bias_sq = T::of(2.0) * sigma_bias * sigma_bias;
    let two = T::of(2.0);
    let mut cov = vec![T::zero(); k * k];
    for a in 0..k {
        for b in a..k {
            let v = bias_sq + two * acc[a * k + b] / n;
            cov[a * k + b] = v;
            cov[b * k + a] = v;
        }
    }
    GaussianCov::new(k, cov)
}

/// Γ_ℓ for one stable layer (errors on a Gaussian layer: that covariance
/// lives in [`gaussian_recursion`]).
pub fn spectral_recursion<T: Real>(
    net: &NetworkConfig<T>,
    xs: &[Vec<T>],
    layer: usize,
    n_mc: usize,
    n_atoms: usize,
    tree: &SeedTree,
) -> Result<SpectralMeasure<T>> {
    check_layer(net, layer)?;
    if net.layer(layer).alpha == T::of(2.0) {
        return Err(Error::config(format!(
            "layer {layer} has α = 2; its joint limit is Gaussian — use gaussian_recursion"
        )));
    }
    let chain = joint_chain(net, xs, n_mc, n_atoms, tree)?;
    match chain.layer(layer)? {
        JointLayer::Stable { spectral, .. } => Ok(spectral.clone()),
        JointLayer::Gaussian { .. } => unreachable!("α < 2 layer is stable"),
    }
}

/// M_ℓ for one Gaussian layer (errors on a stable layer).
pub fn gaussian_recursion<T: Real>(
    net: &NetworkConfig<T>,
    xs: &[Vec<T>],
    layer: usize,
    n_mc: usize,
    tree: &SeedTree,
) -> Result<GaussianCov<T>> {
    check_layer(net, layer)?;
    if net.layer(layer).alpha < T::of(2.0) {
        return Err(Error::config(format!(
            "layer {layer} has α < 2; its joint limit is stable — use spectral_recursion"
        )));
    }
    let chain = joint_chain(net, xs, n_mc, n_mc, tree)?;
    match chain.layer(layer)? {
        JointLayer::Gaussian { cov, .. } => Ok(cov.clone()),
        JointLayer::Stable { .. } => unreachable!("α = 2 layer is Gaussian"),
    }
}

fn check_layer<T: Real>(net: &NetworkConfig<T>, layer: usize) -> Result<()> {
    if layer < 2 || layer > net.depth() + 1 {
        return Err(Error::config(format!(
            "layer {layer} out of range 2..={} (layer 1 has the exact law ν⁽¹⁾)",
            net.depth() + 1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heavy::{FiniteLaw, SlowlyVarying, TailSpec};
    use crate::mlp::{Activation, LayerConfig};

    fn net_with(
        activation: Activation<f64>,
        alpha: f64,
        sigma_bias: f64,
        depth: usize,
    ) -> NetworkConfig<f64> {
        let layers = (0..=depth)
            .map(|_| {
                LayerConfig::new(
                    TailSpec::heavy(alpha, SlowlyVarying::Constant { c: 1.0 }).unwrap(),
                    sigma_bias,
                )
                .unwrap()
            })
            .collect();
        NetworkConfig::new(2, depth, layers, activation).unwrap()
    }

    #[test]
    fn zero_activation_makes_sigma_equal_bias() {
        let net = net_with(Activation::ClippedLinear { bound: 0.0 }, 1.5, 1.0, 2);
        let chain = sigma_recursion(&net, &[1.0, 0.5], 1000, &SeedTree::new(5)).unwrap();
        for layer in &chain.layers {
            assert!((layer.sigma - 1.0).abs() < 1e-12, "layer {}", layer.layer);
            assert_eq!(layer.integral, 0.0);
        }
    }

    #[test]
    fn constant_activation_is_exact() {
        let c = 0.7f64;
        let net = net_with(Activation::Const { c }, 1.5, 1.0, 1);
        let chain = sigma_recursion(&net, &[1.0, 0.5], 1000, &SeedTree::new(6)).unwrap();
        let ca = c_alpha(1.5f64).unwrap();
        let expect = (1.0 + ca * c.powf(1.5)).powf(1.0 / 1.5);
        let got = chain.layer(2).unwrap().sigma;
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn nu1_reduces_to_bias_for_zero_input() {
        // x = 0 ⇒ ν⁽¹⁾ = SαS(α, σ_B) exactly; check the empirical CF.
        let net = net_with(Activation::Tanh, 1.5, 1.0, 1);
        let draws = nu1_sampler(&net, &[0.0, 0.0], 200_000, &SeedTree::new(7)).unwrap();
        let params = StableParams::new(1.5f64, 1.0).unwrap();
        for &t in &[0.5f64, 1.0, 2.0] {
            let ecf = draws.iter().map(|&y| (t * y).cos()).sum::<f64>() / draws.len() as f64;
            assert!(
                (ecf - params.cf(t)).abs() < 0.01,
                "t={t}: {ecf} vs {}",
                params.cf(t)
            );
        }
    }

    #[test]
    fn nu1_is_symmetric() {
        let net = net_with(Activation::Tanh, 1.5, 1.0, 1);
        let draws = nu1_sampler(&net, &[1.0, 0.5], 100_000, &SeedTree::new(8)).unwrap();
        let mean_sign =
            draws.iter().map(|&y| if y > 0.0 { 1.0 } else { -1.0 }).sum::<f64>() / draws.len() as f64;
        assert!(mean_sign.abs() < 0.02, "sign balance {mean_sign}");
    }

    #[test]
    fn doubling_phi_scales_integral_exactly() {
        // Const activations make the integral deterministic: 2φ multiplies
        // it by 2^α exactly.
        let net1 = net_with(Activation::Const { c: 0.5 }, 1.5, 1.0, 1);
        let net2 = net_with(Activation::Const { c: 1.0 }, 1.5, 1.0, 1);
        let tree = SeedTree::new(9);
        let a = sigma_recursion(&net1, &[1.0, 0.5], 1000, &tree).unwrap();
        let b = sigma_recursion(&net2, &[1.0, 0.5], 1000, &tree).unwrap();
        let ratio = b.layer(2).unwrap().integral / a.layer(2).unwrap().integral;
        assert!((ratio - 2.0f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn sigma_dominates_bias_term() {
        let net = net_with(Activation::Tanh, 1.5, 1.0, 3);
        let chain = sigma_recursion(&net, &[1.0, 0.5], 20_000, &SeedTree::new(10)).unwrap();
        for layer in &chain.layers {
            assert!(layer.sigma >= 1.0);
            assert!(layer.sigma_stderr > 0.0);
            assert!(layer.integral_stderr > 0.0);
        }
    }

    #[test]
    fn joint_k1_matches_univariate_sigma() {
        let net = net_with(Activation::Tanh, 1.5, 1.0, 1);
        let x = vec![1.0, 0.5];
        let tree = SeedTree::new(11);
        let uni = sigma_recursion(&net, &x, 200_000, &tree).unwrap();
        let joint = joint_chain(&net, &[x], 10_000, 200_000, &tree).unwrap();
        let spectral = match joint.layer(2).unwrap() {
            JointLayer::Stable { spectral, .. } => spectral,
            _ => panic!("α=1.5 layer must be stable"),
        };
        let sigma_joint = spectral.univariate_sigma().unwrap();
        let sigma_uni = uni.layer(2).unwrap().sigma;
        let tol = 4.0 * uni.layer(2).unwrap().sigma_stderr + 0.01;
        assert!(
            (sigma_joint - sigma_uni).abs() < tol,
            "{sigma_joint} vs {sigma_uni} (tol {tol})"
        );
    }

    #[test]
    fn equal_inputs_put_atoms_on_the_diagonal() {
        let net = net_with(Activation::Tanh, 1.5, 1.0, 1);
        let x = vec![1.0, 0.5];
        let gamma = spectral_recursion(
            &net,
            &[x.clone(), x],
            2,
            1000,
            500,
            &SeedTree::new(12),
        )
        .unwrap();
        let d = 0.5f64.sqrt();
        for atom in &gamma.atoms {
            let s = &atom.s;
            assert!(
                (s[0] - s[1]).abs() < 1e-12,
                "atom off the diagonal: {s:?}"
            );
            assert!((s[0].abs() - d).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_activation_spectral_atoms() {
        // φ ≡ c: every sampled atom is the same direction 1/√k with weight
        // c_α (|c|√k)^α / N each, summing to c_α (|c|√k)^α.
        let c = 0.8f64;
        let net = net_with(Activation::Const { c }, 1.5, 0.0, 1);
        let xs = vec![vec![1.0, 0.5], vec![0.3, 0.1]];
        let gamma = spectral_recursion(&net, &xs, 2, 1000, 400, &SeedTree::new(13)).unwrap();
        let ca = c_alpha(1.5f64).unwrap();
        let expect_mass = ca * (c * 2.0f64.sqrt()).powf(1.5);
        assert!((gamma.total_mass() - expect_mass).abs() < 1e-9);
    }

    #[test]
    fn gaussian_layer_constant_activation_exact() {
        // φ ≡ c over any previous law: M_ab = 2σ_B² + 2c² in every entry.
        let c = 0.6f64;
        let sigma_b = 0.9f64;
        let layers = (0..=1)
            .map(|_| {
                LayerConfig::new(
                    TailSpec::finite(FiniteLaw::Uniform { half_width: 1.0 }).unwrap(),
                    sigma_b,
                )
                .unwrap()
            })
            .collect();
        let net =
            NetworkConfig::new(2, 1, layers, Activation::Const { c }).unwrap();
        let xs = vec![vec![1.0, 0.5], vec![0.3, 0.1]];
        let cov = gaussian_recursion(&net, &xs, 2, 1000, &SeedTree::new(14)).unwrap();
        let expect = 2.0 * sigma_b * sigma_b + 2.0 * c * c;
        for a in 0..2 {
            for b in 0..2 {
                assert!((cov.entry(a, b) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equal_inputs_make_gaussian_cov_degenerate() {
        // x₁ = x₂ ⇒ y₁ = y₂ almost surely ⇒ all entries of M equal in the
        // estimator, exactly.
        let layers = (0..=1)
            .map(|_| {
                LayerConfig::new(
                    TailSpec::finite(FiniteLaw::Uniform { half_width: 1.0 }).unwrap(),
                    1.0,
                )
                .unwrap()
            })
            .collect();
        let net = NetworkConfig::new(2, 1, layers, Activation::Tanh).unwrap();
        let x = vec![1.0, 0.5];
        let cov = gaussian_recursion(&net, &[x.clone(), x], 2, 2000, &SeedTree::new(15)).unwrap();
        assert_eq!(cov.entry(0, 0), cov.entry(0, 1));
        assert_eq!(cov.entry(0, 0), cov.entry(1, 1));
    }

    #[test]
    fn recursion_dispatch_errors() {
        let net = net_with(Activation::Tanh, 1.5, 1.0, 1);
        let xs = vec![vec![1.0, 0.5]];
        let tree = SeedTree::new(16);
        assert!(gaussian_recursion(&net, &xs, 2, 100, &tree).is_err());
        assert!(spectral_recursion(&net, &xs, 5, 100, 100, &tree).is_err());
        let layers = (0..=1)
            .map(|_| {
                LayerConfig::new(
                    TailSpec::finite(FiniteLaw::Uniform { half_width: 1.0 }).unwrap(),
                    1.0,
                )
                .unwrap()
            })
            .collect();
        let gnet = NetworkConfig::<f64>::new(2, 1, layers, Activation::Tanh).unwrap();
        assert!(spectral_recursion(&gnet, &xs, 2, 100, 100, &tree).is_err());
    }

    #[test]
    fn chain_json_roundtrip() {
        let net = net_with(Activation::Tanh, 1.5, 1.0, 1);
        let chain = sigma_recursion(&net, &[1.0, 0.5], 1000, &SeedTree::new(17)).unwrap();
        let json = chain.to_json();
        let back: LimitChain<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.layers.len(), chain.layers.len());
        assert_eq!(back.layer(2).unwrap().sigma, chain.layer(2).unwrap().sigma);
    }
}
