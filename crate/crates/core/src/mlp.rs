//! Finite-width multilayer perceptron with heavy-tailed weights.
//!
//! The network has `I` inputs, `L` hidden layers of widths `n₁ … n_L`, and
//! an output layer `L+1`. Layer ℓ owns a weight law (a [`TailSpec`]) with
//! index `α_ℓ` and an SαS(α_ℓ, σ_B) bias. Pre-activations follow
//!
//! ```text
//! Y⁽¹⁾_i = Σ_j W⁽¹⁾_ij x_j + B⁽¹⁾_i                      (unscaled)
//! Y⁽ℓ⁾_i = a(n_{ℓ−1}; ℓ)⁻¹ Σ_j W⁽ℓ⁾_ij φ(Y⁽ℓ⁻¹⁾_j) + B⁽ℓ⁾_i
//! ```
//!
//! where `a(n; ℓ)` is the norming sequence of layer ℓ's weight law at the
//! previous layer's width. Weights are never stored: every entry is
//! regenerated on demand from a counter-based stream keyed by
//! (replicate, layer, node), with in-stream positions addressing the
//! remaining index. That keying is what lets replicates run in parallel
//! with schedule-independent results, and what keeps the weight sharing
//! exact when one network is evaluated jointly on several inputs.
//!
//! Node indices are not bounded by the widths: the width only limits how
//! many previous-layer nodes the sums run over, so any node of any layer
//! may be materialized on demand (the network extends to infinite width).

use crate::heavy::{TailMode, TailSpec};
use crate::linalg::pairwise_dot;
use crate::rng::{bias_field, mlp_stream_id, weight_field, SeedTree, MAX_LAYER_INDEX};
use crate::stable::{sample_sas, sample_sas_one, StableParams};
use crate::{Error, Real, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Activation function φ applied between layers.
#[derive(Clone, Debug, PartialEq)]
pub enum Activation<T> {
    /// Bounded, odd, smooth.
    Tanh,
    /// Bounded, even.
    Cos,
    /// `clamp(y, −bound, bound)`; `bound = 0` gives φ ≡ 0.
    ClippedLinear { bound: T },
    /// Constant `c` (degenerate but handy: it makes limit integrals exact).
    Const { c: T },
    /// `max(y, 0)` — unbounded with envelope exponent 1.
    Relu,
    /// `|y|^β` — unbounded with envelope exponent β.
    AbsPow { beta: T },
}

impl<T: Real> Activation<T> {
    fn validate(&self) -> Result<()> {
        match self {
            Activation::ClippedLinear { bound } => {
                if !(*bound >= T::zero()) || !bound.is_finite() {
                    return Err(Error::config(format!(
                        "clipped-linear bound must be ≥ 0 and finite, got {bound}"
                    )));
                }
            }
            Activation::Const { c } => {
                if !c.is_finite() {
                    return Err(Error::config("constant activation value must be finite"));
                }
            }
            Activation::AbsPow { beta } => {
                if !(*beta > T::zero()) || !beta.is_finite() {
                    return Err(Error::config(format!(
                        "power activation exponent must be positive, got {beta}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Apply φ.
    #[inline]
    pub fn apply(&self, y: T) -> T {
        match self {
            Activation::Tanh => y.tanh(),
            Activation::Cos => y.cos(),
            Activation::ClippedLinear { bound } => y.max(-*bound).min(*bound),
            Activation::Const { c } => *c,
            Activation::Relu => y.max(T::zero()),
            Activation::AbsPow { beta } => {
                if y == T::zero() {
                    T::zero()
                } else {
                    y.abs().fast_powf(*beta)
                }
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(
            self,
            Activation::Tanh
                | Activation::Cos
                | Activation::ClippedLinear { .. }
                | Activation::Const { .. }
        )
    }

    /// Envelope exponent β with `|φ(y)| ≤ a + b|y|^β`, for unbounded kinds.
    pub fn envelope_beta(&self) -> Option<T> {
        match self {
            Activation::Relu => Some(T::one()),
            Activation::AbsPow { beta } => Some(*beta),
            _ => None,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Cos => "cos",
            Activation::ClippedLinear { .. } => "clipped-linear",
            Activation::Const { .. } => "const",
            Activation::Relu => "relu",
            Activation::AbsPow { .. } => "abs-pow",
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActivationWire<T> {
    kind: String,
    #[serde(default = "Vec::new")]
    params: Vec<T>,
}

impl<T: Real> Serialize for Activation<T> {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let params = match self {
            Activation::ClippedLinear { bound } => vec![*bound],
            Activation::Const { c } => vec![*c],
            Activation::AbsPow { beta } => vec![*beta],
            _ => vec![],
        };
        ActivationWire {
            kind: self.kind_name().to_owned(),
            params,
        }
        .serialize(ser)
    }
}

impl<'de, T: Real> Deserialize<'de> for Activation<T> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let wire = ActivationWire::<T>::deserialize(de)?;
        let need = |n: usize| -> std::result::Result<(), D::Error> {
            if wire.params.len() != n {
                return Err(serde::de::Error::custom(format!(
                    "activation kind '{}' takes {n} parameter(s), got {}",
                    wire.kind,
                    wire.params.len()
                )));
            }
            Ok(())
        };
        let act = match wire.kind.as_str() {
            "tanh" => {
                need(0)?;
                Activation::Tanh
            }
            "cos" => {
                need(0)?;
                Activation::Cos
            }
            "clipped-linear" => {
                need(1)?;
                Activation::ClippedLinear { bound: wire.params[0] }
            }
            "const" => {
                need(1)?;
                Activation::Const { c: wire.params[0] }
            }
            "relu" => {
                need(0)?;
                Activation::Relu
            }
            "abs-pow" => {
                need(1)?;
                Activation::AbsPow { beta: wire.params[0] }
            }
            other => {
                return Err(serde::de::Error::custom(format!(
                    "unknown activation kind '{other}'"
                )))
            }
        };
        act.validate().map_err(serde::de::Error::custom)?;
        Ok(act)
    }
}

/// One layer: tail index, weight law, bias scale. The bias is SαS(α, σ_bias)
/// with the same α as the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct LayerConfig<T> {
    pub alpha: T,
    pub weights: TailSpec<T>,
    pub sigma_bias: T,
}

impl<T: Real> LayerConfig<T> {
    pub fn new(weights: TailSpec<T>, sigma_bias: T) -> Result<Self> {
        let cfg = LayerConfig {
            alpha: weights.alpha(),
            weights,
            sigma_bias,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.alpha != self.weights.alpha() {
            return Err(Error::config(format!(
                "layer alpha {} disagrees with its weight law's alpha {}",
                self.alpha,
                self.weights.alpha()
            )));
        }
        if !(self.sigma_bias >= T::zero()) || !self.sigma_bias.is_finite() {
            return Err(Error::config(format!(
                "sigma_bias must be ≥ 0 and finite, got {}",
                self.sigma_bias
            )));
        }
        Ok(())
    }
}

/// A validated network. Layers are indexed 1..=depth+1; `layers[ℓ−1]`
/// configures layer ℓ. `depth` counts hidden layers, so `layers` has
/// `depth + 1` entries (the last is the output layer).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig<T: Real> {
    input_dim: usize,
    depth: usize,
    layers: Vec<LayerConfig<T>>,
    activation: Activation<T>,
    /// Skip finite-value guarding of pre-activations (divergence
    /// demonstrations want the overflow, not an error). NaN still errors.
    unguarded: bool,
}

impl<T: Real> NetworkConfig<T> {
    pub fn new(
        input_dim: usize,
        depth: usize,
        layers: Vec<LayerConfig<T>>,
        activation: Activation<T>,
    ) -> Result<Self> {
        let net = Self::new_unchecked(input_dim, depth, layers, activation)?;
        net.validate_envelope()?;
        Ok(net)
    }

    /// Shape validation only — skips the unbounded-activation envelope rule
    /// and disables overflow guarding. For divergence demonstrations.
    pub(crate) fn new_unchecked(
        input_dim: usize,
        depth: usize,
        layers: Vec<LayerConfig<T>>,
        activation: Activation<T>,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::config("input_dim must be ≥ 1"));
        }
        if depth == 0 {
            return Err(Error::config("depth must be ≥ 1 (hidden layers)"));
        }
        if depth + 1 > MAX_LAYER_INDEX {
            return Err(Error::config(format!(
                "depth {depth} exceeds the supported maximum of {} layers",
                MAX_LAYER_INDEX - 1
            )));
        }
        if layers.len() != depth + 1 {
            return Err(Error::config(format!(
                "a depth-{depth} network needs {} layer configs (hidden + output), got {}",
                depth + 1,
                layers.len()
            )));
        }
        activation.validate()?;
        for layer in &layers {
            layer.validate()?;
        }
        Ok(NetworkConfig {
            input_dim,
            depth,
            layers,
            activation,
            unguarded: false,
        })
    }

    pub(crate) fn set_unguarded(&mut self) {
        self.unguarded = true;
    }

    /// Unbounded activations are only admitted in the two regimes where the
    /// scaled sums provably converge:
    ///
    /// 1. every layer has exactly Gaussian weights (α = 2, normal or
    ///    stable mode) — any polynomial envelope integrates; or
    /// 2. every layer has exact SαS weights and the envelope exponent β
    ///    satisfies `β < min_{ℓ≥2} α_{ℓ−1}/α_ℓ`.
    ///
    /// Outside these regimes the per-layer norming is wrong by a slowly
    /// varying factor and the pre-activations drift with width — the
    /// `counterexample` module demonstrates this for ReLU with Pareto
    /// weights, where the product tail gains a logarithmic correction.
    fn validate_envelope(&self) -> Result<()> {
        let beta = match self.activation.envelope_beta() {
            None => return Ok(()),
            Some(b) => b,
        };
        let all_gaussian = self.layers.iter().all(|l| {
            l.alpha == T::of(2.0)
                && matches!(
                    l.weights.mode(),
                    TailMode::Stable { .. }
                        | TailMode::Finite { law: crate::heavy::FiniteLaw::Normal { .. } }
                )
        });
        if all_gaussian {
            return Ok(());
        }
        let all_stable = self
            .layers
            .iter()
            .all(|l| matches!(l.weights.mode(), TailMode::Stable { .. }));
        if all_stable {
            let mut min_ratio = T::infinity();
            for pair in self.layers.windows(2) {
                min_ratio = min_ratio.min(pair[0].alpha / pair[1].alpha);
            }
            if beta < min_ratio {
                return Ok(());
            }
            return Err(Error::config(format!(
                "unbounded activation '{}' has envelope exponent β = {beta}, but exact \
                 stable weights only admit β < min over layers of α_prev/α_next = {min_ratio}; \
                 at or above that threshold the scaled sums do not converge (the \
                 `counterexample` module demonstrates the ReLU/Pareto divergence)",
                self.activation.kind_name()
            )));
        }
        Err(Error::config(format!(
            "unbounded activation '{}' requires exactly Gaussian weights (α = 2) at every \
             layer, or exact symmetric-stable weights with a small enough envelope exponent; \
             with general heavy-tailed weights the product of weight and activation has a \
             strictly heavier tail than the weight alone and the usual norming diverges \
             (see the `counterexample` module)",
            self.activation.kind_name()
        )))
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn layers(&self) -> &[LayerConfig<T>] {
        &self.layers
    }

    pub fn layer(&self, ell: usize) -> &LayerConfig<T> {
        &self.layers[ell - 1]
    }

    pub fn activation(&self) -> &Activation<T> {
        &self.activation
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("network config: {e}")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
struct NetworkConfigWire<T> {
    input_dim: usize,
    depth: usize,
    layers: Vec<LayerConfig<T>>,
    activation: Activation<T>,
}

impl<T: Real> Serialize for NetworkConfig<T> {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkConfigWire {
            input_dim: self.input_dim,
            depth: self.depth,
            layers: self.layers.clone(),
            activation: self.activation.clone(),
        }
        .serialize(ser)
    }
}

impl<'de, T: Real> Deserialize<'de> for NetworkConfig<T> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let wire = NetworkConfigWire::<T>::deserialize(de)?;
        NetworkConfig::new(wire.input_dim, wire.depth, wire.layers, wire.activation)
            .map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

/// Precomputed per-(network, widths) forward state: the norming constants
/// `a(n_{ℓ−1}; ℓ)` for layers 2..=depth+1. Computing these once matters —
/// for α = 2 each involves quadrature-backed root finding.
pub struct ForwardPlan<'n, T: Real> {
    net: &'n NetworkConfig<T>,
    widths: Vec<usize>,
    /// `scales[ℓ−2]` = `a(n_{ℓ−1}; ℓ)` for ℓ in 2..=depth+1.
    scales: Vec<T>,
}

impl<'n, T: Real> ForwardPlan<'n, T> {
    pub fn new(net: &'n NetworkConfig<T>, widths: &[usize]) -> Result<Self> {
        if widths.len() != net.depth {
            return Err(Error::config(format!(
                "need one width per hidden layer ({}), got {}",
                net.depth,
                widths.len()
            )));
        }
        for &w in widths {
            if w < 2 {
                return Err(Error::config(format!("layer widths must be ≥ 2, got {w}")));
            }
            if w >= 1 << 24 {
                return Err(Error::config(format!(
                    "width {w} exceeds the 2²⁴ node address space"
                )));
            }
        }
        let mut scales = Vec::with_capacity(net.depth);
        for ell in 2..=net.depth + 1 {
            let n_prev = widths[ell - 2] as u64;
            scales.push(net.layer(ell).weights.a_n(n_prev)?);
        }
        Ok(ForwardPlan {
            net,
            widths: widths.to_vec(),
            scales,
        })
    }

    /// Norming constant `a(n_{ℓ−1}; ℓ)` used by layer ℓ ≥ 2.
    pub fn scale(&self, ell: usize) -> T {
        self.scales[ell - 2]
    }

    /// Replace one layer's norming constant (divergence demonstrations
    /// substitute the corrected sequence for the naive one).
    pub(crate) fn override_scale(&mut self, ell: usize, value: T) {
        self.scales[ell - 2] = value;
    }

    fn check_inputs(&self, xs: &[Vec<T>]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::config("need at least one input vector"));
        }
        for x in xs {
            if x.len() != self.net.input_dim {
                return Err(Error::config(format!(
                    "input vector length {} does not match input_dim {}",
                    x.len(),
                    self.net.input_dim
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("input vectors must be finite"));
            }
        }
        Ok(())
    }

    /// Scan a layer's pre-activations for invalid values.
    fn guard(&self, ell: usize, vals: &[Vec<T>]) -> Result<()> {
        for col in vals {
            for &v in col {
                if v.is_nan() {
                    return Err(Error::numeric(format!(
                        "NaN pre-activation at layer {ell}"
                    )));
                }
                if !self.net.unguarded && !v.is_finite() {
                    return Err(Error::numeric(format!(
                        "overflowing pre-activation at layer {ell}; the configuration's \
                         scaled sums exceed the floating-point range at this width"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draw the biases of `layer` for the given nodes (SαS(α, σ_bias), two
    /// words per node, node i at draw position 2i).
    fn biases(&self, tree: &SeedTree, replicate: u32, ell: usize, nodes: &NodeSel) -> Vec<T> {
        let cfg = self.net.layer(ell);
        let count = nodes.len();
        if cfg.sigma_bias == T::zero() {
            return vec![T::zero(); count];
        }
        let params = StableParams::new(cfg.alpha, cfg.sigma_bias).expect("validated");
        let mut stream = tree.stream(mlp_stream_id(replicate, bias_field(ell), 0));
        match nodes {
            NodeSel::Dense(n) => {
                let mut out = vec![T::zero(); *n];
                sample_sas(&params, &mut stream, &mut out);
                out
            }
            NodeSel::Sparse(ids) => ids
                .iter()
                .map(|&i| {
                    stream.seek(2 * i as u128);
                    sample_sas_one(&params, &mut stream)
                })
                .collect(),
        }
    }

    /// Layer-1 values at the given nodes for all k inputs: one positional
    /// weight stream per replicate, node i's `I` weights at draw positions
    /// [i·I, (i+1)·I).
    fn layer_one(
        &self,
        tree: &SeedTree,
        replicate: u32,
        xs: &[Vec<T>],
        nodes: &NodeSel,
    ) -> Result<Vec<Vec<T>>> {
        let spec = &self.net.layer(1).weights;
        let dim = self.net.input_dim;
        let wpd = spec.words_per_draw() as u128;
        let mut stream = tree.stream(mlp_stream_id(replicate, weight_field(1), 0));
        let k = xs.len();
        let count = nodes.len();
        let mut vals = vec![vec![T::zero(); count]; k];
        let biases = self.biases(tree, replicate, 1, nodes);
        match nodes {
            NodeSel::Dense(n) => {
                // One bulk draw for the whole weight matrix: node i's `I`
                // weights still sit at draw positions [i·I, (i+1)·I).
                let mut wall = vec![T::zero(); *n * dim];
                spec.sample(&mut stream, &mut wall);
                for i in 0..*n {
                    let w = &wall[i * dim..(i + 1) * dim];
                    for (c, x) in xs.iter().enumerate() {
                        vals[c][i] = pairwise_dot(w, x) + biases[i];
                    }
                }
            }
            NodeSel::Sparse(ids) => {
                let mut w = vec![T::zero(); dim];
                for (slot, &i) in ids.iter().enumerate() {
                    stream.seek(i as u128 * dim as u128 * wpd);
                    spec.sample(&mut stream, &mut w);
                    for (c, x) in xs.iter().enumerate() {
                        vals[c][slot] = pairwise_dot(&w, x) + biases[slot];
                    }
                }
            }
        }
        self.guard(1, &vals)?;
        Ok(vals)
    }

    /// Layer ℓ ≥ 2 values at the given nodes from φ of the previous layer's
    /// first `n_{ℓ−1}` nodes: one weight stream per (replicate, node).
    fn layer_up(
        &self,
        tree: &SeedTree,
        replicate: u32,
        ell: usize,
        phi_prev: &[Vec<T>],
        nodes: &NodeSel,
        wbuf: &mut Vec<T>,
    ) -> Result<Vec<Vec<T>>> {
        let spec = &self.net.layer(ell).weights;
        let inv_a = self.scale(ell).recip();
        let k = phi_prev.len();
        let n_prev = phi_prev[0].len();
        wbuf.resize(n_prev, T::zero());
        let count = nodes.len();
        let mut vals = vec![vec![T::zero(); count]; k];
        let biases = self.biases(tree, replicate, ell, nodes);
        for slot in 0..count {
            let node = nodes.id(slot);
            let mut stream = tree.stream(mlp_stream_id(replicate, weight_field(ell), node as u32));
            spec.sample(&mut stream, wbuf);
            for c in 0..k {
                vals[c][slot] = inv_a * pairwise_dot(wbuf, &phi_prev[c]) + biases[slot];
            }
        }
        self.guard(ell, &vals)?;
        Ok(vals)
    }

    /// Apply φ in place.
    fn phi(&self, vals: &mut [Vec<T>]) {
        for col in vals.iter_mut() {
            for v in col.iter_mut() {
                *v = self.net.activation.apply(*v);
            }
        }
    }

    /// Evaluate one replicate up to `top_layer`, returning that layer's
    /// values at `top_nodes` (per input). If `keep` is set, every layer's
    /// values (at the width, or `extra[ℓ−1]` nodes if larger) are pushed.
    fn run_replicate(
        &self,
        tree: &SeedTree,
        replicate: u32,
        xs: &[Vec<T>],
        top_layer: usize,
        top_nodes: &NodeSel,
        extra: Option<&[usize]>,
        mut keep: Option<&mut Vec<Vec<Vec<T>>>>,
    ) -> Result<Vec<Vec<T>>> {
        let nodes_at = |ell: usize| -> NodeSel {
            // Downstream sums need the first n_ℓ nodes; a caller may ask
            // for more via `extra` (lazy extension past the width).
            let need = self.widths[ell - 1];
            let want = extra.map(|e| e[ell - 1]).unwrap_or(0);
            NodeSel::Dense(need.max(want))
        };
        let mut current = if top_layer == 1 {
            self.layer_one(tree, replicate, xs, top_nodes)?
        } else {
            self.layer_one(tree, replicate, xs, &nodes_at(1))?
        };
        if top_layer == 1 {
            return Ok(current);
        }
        if let Some(keep) = keep.as_deref_mut() {
            keep.push(current.clone());
        }
        let mut wbuf = Vec::new();
        for ell in 2..=top_layer {
            // φ over exactly the previous width (extra kept nodes are
            // excluded from the sums).
            let n_prev = self.widths[ell - 2];
            let mut phi_vals: Vec<Vec<T>> = current
                .iter()
                .map(|col| col[..n_prev].to_vec())
                .collect();
            self.phi(&mut phi_vals);
            let sel = if ell == top_layer {
                top_nodes.clone()
            } else {
                nodes_at(ell)
            };
            current = self.layer_up(tree, replicate, ell, &phi_vals, &sel, &mut wbuf)?;
            if ell < top_layer {
                if let Some(keep) = keep.as_deref_mut() {
                    keep.push(current.clone());
                }
            }
        }
        Ok(current)
    }
}

/// Which nodes of a layer to materialize.
#[derive(Clone, Debug)]
enum NodeSel {
    /// Nodes `0..n`.
    Dense(usize),
    /// An explicit list.
    Sparse(Vec<usize>),
}

impl NodeSel {
    fn len(&self) -> usize {
        match self {
            NodeSel::Dense(n) => *n,
            NodeSel::Sparse(v) => v.len(),
        }
    }

    fn id(&self, slot: usize) -> usize {
        match self {
            NodeSel::Dense(_) => slot,
            NodeSel::Sparse(v) => v[slot],
        }
    }
}

/// Pre-activations of every layer for one input: `result[ℓ−1][i]` is
/// `Y⁽ℓ⁾_i`, with `node_counts[ℓ−1]` nodes materialized at layer ℓ.
pub fn forward<T: Real>(
    net: &NetworkConfig<T>,
    x: &[T],
    widths: &[usize],
    node_counts: &[usize],
    tree: &SeedTree,
    replicate: u32,
) -> Result<Vec<Vec<T>>> {
    let joint = forward_joint(net, &[x.to_vec()], widths, node_counts, tree, replicate)?;
    Ok(joint.into_iter().map(|mut per_input| per_input.swap_remove(0)).collect())
}

/// Pre-activations of every layer for `k` inputs evaluated through the
/// same weight/bias realization: `result[ℓ−1][c][i]` is `Y⁽ℓ⁾_i(x_c)`.
pub fn forward_joint<T: Real>(
    net: &NetworkConfig<T>,
    xs: &[Vec<T>],
    widths: &[usize],
    node_counts: &[usize],
    tree: &SeedTree,
    replicate: u32,
) -> Result<Vec<Vec<Vec<T>>>> {
    let plan = ForwardPlan::new(net, widths)?;
    plan.check_inputs(xs)?;
    if node_counts.len() != net.depth + 1 {
        return Err(Error::config(format!(
            "need one node count per layer ({}), got {}",
            net.depth + 1,
            node_counts.len()
        )));
    }
    let top = net.depth + 1;
    let mut kept: Vec<Vec<Vec<T>>> = Vec::with_capacity(top);
    let top_vals = plan.run_replicate(
        tree,
        replicate,
        xs,
        top,
        &NodeSel::Dense(node_counts[top - 1]),
        Some(node_counts),
        Some(&mut kept),
    )?;
    kept.push(top_vals);
    // Trim layers to the requested counts (they may have been computed
    // wider to feed the next layer).
    for (ell_idx, layer_vals) in kept.iter_mut().enumerate() {
        for col in layer_vals.iter_mut() {
            col.truncate(node_counts[ell_idx]);
        }
    }
    Ok(kept)
}

/// A batch of i.i.d. replicate draws of selected nodes at one layer,
/// possibly jointly over several inputs. Row-major: replicate, then node
/// (in request order), then input index.
#[derive(Clone, Debug)]
pub struct SampleBatch<T> {
    pub layer: usize,
    pub widths: Vec<usize>,
    pub node_ids: Vec<usize>,
    pub inputs: usize,
    pub replicates: usize,
    pub lineage: String,
    values: Vec<T>,
}

impl<T: Real> SampleBatch<T> {
    pub fn value(&self, replicate: usize, node_pos: usize, input: usize) -> T {
        let per_row = self.node_ids.len() * self.inputs;
        self.values[replicate * per_row + node_pos * self.inputs + input]
    }

    /// All replicate values of one (node, input) coordinate.
    pub fn column(&self, node_pos: usize, input: usize) -> Vec<T> {
        (0..self.replicates)
            .map(|r| self.value(r, node_pos, input))
            .collect()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// CSV export: `replicate,node,input_index,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24 + 32);
        out.push_str("replicate,node,input_index,value\n");
        for r in 0..self.replicates {
            for (p, &node) in self.node_ids.iter().enumerate() {
                for c in 0..self.inputs {
                    let v = self.value(r, p, c);
                    let _ = writeln!(out, "{r},{node},{c},{v}");
                }
            }
        }
        out
    }
}

/// Draw `m` i.i.d. replicates of layer `layer`'s pre-activations at the
/// requested nodes, jointly over the given inputs. Replicates differ only
/// in the replicate component of their stream keys, so results are
/// identical under any parallel schedule.
pub fn replicate_layer<T: Real>(
    net: &NetworkConfig<T>,
    xs: &[Vec<T>],
    widths: &[usize],
    layer: usize,
    m: usize,
    nodes: &[usize],
    tree: &SeedTree,
) -> Result<SampleBatch<T>> {
    let plan = ForwardPlan::new(net, widths)?;
    replicate_layer_with(&plan, xs, layer, m, nodes, tree)
}

/// As [`replicate_layer`], reusing a prepared [`ForwardPlan`].
pub fn replicate_layer_with<T: Real>(
    plan: &ForwardPlan<'_, T>,
    xs: &[Vec<T>],
    layer: usize,
    m: usize,
    nodes: &[usize],
    tree: &SeedTree,
) -> Result<SampleBatch<T>> {
    let net = plan.net;
    plan.check_inputs(xs)?;
    if layer == 0 || layer > net.depth + 1 {
        return Err(Error::config(format!(
            "layer {layer} out of range 1..={}",
            net.depth + 1
        )));
    }
    if m == 0 {
        return Err(Error::config("need at least one replicate"));
    }
    if m >= 1 << 32 {
        return Err(Error::config("replicate count exceeds the 2³² key space"));
    }
    if nodes.is_empty() {
        return Err(Error::config("need at least one node"));
    }
    for &i in nodes {
        if i >= 1 << 24 {
            return Err(Error::config(format!(
                "node index {i} exceeds the 2²⁴ address space"
            )));
        }
    }
    let sel = NodeSel::Sparse(nodes.to_vec());
    let k = xs.len();
    let per_row = nodes.len() * k;
    let rows: Result<Vec<Vec<T>>> = (0..m)
        .into_par_iter()
        .map(|r| {
            let vals = plan.run_replicate(tree, r as u32, xs, layer, &sel, None, None)?;
            // vals is per-input; interleave into node-major row order.
            let mut row = vec![T::zero(); per_row];
            for (c, col) in vals.iter().enumerate() {
                for (p, &v) in col.iter().enumerate() {
                    row[p * k + c] = v;
                }
            }
            Ok(row)
        })
        .collect();
    let rows = rows?;
    let mut values = Vec::with_capacity(m * per_row);
    for row in rows {
        values.extend_from_slice(&row);
    }
    Ok(SampleBatch {
        layer,
        widths: plan.widths.clone(),
        node_ids: nodes.to_vec(),
        inputs: k,
        replicates: m,
        lineage: tree.lineage().to_owned(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heavy::{FiniteLaw, SlowlyVarying};

    fn pareto_layer(alpha: f64, sigma_bias: f64) -> LayerConfig<f64> {
        LayerConfig::new(
            TailSpec::heavy(alpha, SlowlyVarying::Constant { c: 1.0 }).unwrap(),
            sigma_bias,
        )
        .unwrap()
    }

    fn tanh_net(depth: usize, alpha: f64, sigma_bias: f64) -> NetworkConfig<f64> {
        let layers = (0..=depth).map(|_| pareto_layer(alpha, sigma_bias)).collect();
        NetworkConfig::new(2, depth, layers, Activation::Tanh).unwrap()
    }

    #[test]
    fn zero_input_zero_bias_propagates_zero() {
        let net = tanh_net(2, 1.5, 0.0);
        let tree = SeedTree::new(7);
        let out = forward(&net, &[0.0, 0.0], &[8, 8], &[8, 8, 4], &tree, 0).unwrap();
        for layer_vals in &out {
            assert!(layer_vals.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn forward_joint_k1_matches_forward_bitwise() {
        let net = tanh_net(2, 1.5, 1.0);
        let tree = SeedTree::new(9);
        let x = vec![1.0, 0.5];
        let single = forward(&net, &x, &[16, 16], &[16, 16, 3], &tree, 5).unwrap();
        let joint = forward_joint(&net, &[x], &[16, 16], &[16, 16, 3], &tree, 5).unwrap();
        for (a, b) in single.iter().zip(joint.iter()) {
            assert_eq!(a, &b[0]);
        }
    }

    #[test]
    fn equal_inputs_give_equal_coordinates() {
        let net = tanh_net(1, 1.5, 1.0);
        let tree = SeedTree::new(10);
        let x = vec![1.0, 0.5];
        let out = forward_joint(&net, &[x.clone(), x], &[32], &[32, 4], &tree, 0).unwrap();
        for layer_vals in &out {
            assert_eq!(layer_vals[0], layer_vals[1]);
        }
    }

    #[test]
    fn zero_second_input_zero_bias_first_layer() {
        let net = tanh_net(1, 1.5, 0.0);
        let tree = SeedTree::new(11);
        let out = forward_joint(
            &net,
            &[vec![1.0, 0.5], vec![0.0, 0.0]],
            &[16],
            &[16, 2],
            &tree,
            0,
        )
        .unwrap();
        assert!(out[0][1].iter().all(|&v| v == 0.0));
        assert!(out[0][0].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn replicate_layer_m1_matches_forward() {
        let net = tanh_net(2, 1.5, 1.0);
        let tree = SeedTree::new(12);
        let x = vec![1.0, 0.5];
        let batch =
            replicate_layer(&net, &[x.clone()], &[8, 8], 3, 1, &[0, 1, 5], &tree).unwrap();
        let fwd = forward(&net, &x, &[8, 8], &[8, 8, 6], &tree, 0).unwrap();
        assert_eq!(batch.value(0, 0, 0), fwd[2][0]);
        assert_eq!(batch.value(0, 1, 0), fwd[2][1]);
        assert_eq!(batch.value(0, 2, 0), fwd[2][5]);
    }

    #[test]
    fn replicates_are_deterministic_and_distinct() {
        let net = tanh_net(1, 1.5, 1.0);
        let tree = SeedTree::new(13);
        let x = vec![1.0, 0.5];
        let a = replicate_layer(&net, &[x.clone()], &[64], 2, 100, &[0], &tree).unwrap();
        let b = replicate_layer(&net, &[x.clone()], &[64], 2, 100, &[0], &tree).unwrap();
        assert_eq!(a.values(), b.values());
        let col = a.column(0, 0);
        let distinct = col.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(distinct > 90, "replicates should differ");
    }

    #[test]
    fn lazy_node_extension_beyond_width() {
        let net = tanh_net(1, 1.5, 1.0);
        let tree = SeedTree::new(14);
        let x = vec![1.0, 0.5];
        // Nodes far past the layer-2 "width" are materializable.
        let batch = replicate_layer(&net, &[x.clone()], &[8], 2, 4, &[0, 1000], &tree).unwrap();
        assert_eq!(batch.column(1, 0).len(), 4);
        // And requesting a node twice gives identical values (pure keying).
        let twice = replicate_layer(&net, &[x], &[8], 2, 4, &[1000, 1000], &tree).unwrap();
        assert_eq!(twice.column(0, 0), twice.column(1, 0));
    }

    #[test]
    fn sparse_node_request_matches_dense() {
        let net = tanh_net(1, 1.5, 1.0);
        let tree = SeedTree::new(15);
        let x = vec![1.0, 0.5];
        let dense = forward(&net, &x, &[32], &[32, 8], &tree, 0).unwrap();
        let sparse = replicate_layer(&net, &[x.clone()], &[32], 2, 1, &[2, 7], &tree).unwrap();
        assert_eq!(sparse.value(0, 0, 0), dense[1][2]);
        assert_eq!(sparse.value(0, 1, 0), dense[1][7]);
        // Layer-1 sparse positional addressing agrees too.
        let l1 = replicate_layer(&net, &[x], &[32], 1, 1, &[3, 30], &tree).unwrap();
        assert_eq!(l1.value(0, 0, 0), dense[0][3]);
        assert_eq!(l1.value(0, 1, 0), dense[0][30]);
    }

    #[test]
    fn scaling_uses_downstream_layer_norming() {
        // Layer 2's norming must be a_n of layer 2's weight law at the
        // previous width: check against the heavy module directly.
        let net = tanh_net(1, 1.5, 1.0);
        let plan = ForwardPlan::new(&net, &[500]).unwrap();
        let expect = net.layer(2).weights.a_n(500).unwrap();
        assert_eq!(plan.scale(2), expect);
    }

    #[test]
    fn envelope_rule_gates_unbounded_activations() {
        let stable_layer = |alpha: f64| {
            LayerConfig::new(TailSpec::stable(alpha, 1.0).unwrap(), 1.0).unwrap()
        };
        // AbsPow(0.6) under all-stable α=1.5: admitted (0.6 < 1).
        assert!(NetworkConfig::new(
            1,
            1,
            vec![stable_layer(1.5), stable_layer(1.5)],
            Activation::AbsPow { beta: 0.6 },
        )
        .is_ok());
        // ReLU (β = 1) under the same weights: rejected, message points at
        // the divergence demonstration.
        let err = NetworkConfig::new(
            1,
            1,
            vec![stable_layer(1.5), stable_layer(1.5)],
            Activation::Relu,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("counterexample"), "message: {msg}");
        // ReLU with heavy (non-stable) weights: rejected.
        assert!(NetworkConfig::new(
            1,
            1,
            vec![pareto_layer(1.5, 0.0), pareto_layer(1.5, 0.0)],
            Activation::Relu,
        )
        .is_err());
        // ReLU with exactly Gaussian weights everywhere: admitted.
        let gauss = |sd: f64| {
            LayerConfig::new(
                TailSpec::finite(FiniteLaw::Normal { sd }).unwrap(),
                1.0,
            )
            .unwrap()
        };
        assert!(NetworkConfig::new(
            1,
            1,
            vec![gauss(1.0), gauss(1.0)],
            Activation::Relu,
        )
        .is_ok());
        // But uniform weights (finite variance, not Gaussian) with ReLU:
        // rejected — the admission rule is exact-Gaussian or exact-stable.
        let unif = LayerConfig::new(
            TailSpec::finite(FiniteLaw::Uniform { half_width: 1.0 }).unwrap(),
            1.0,
        )
        .unwrap();
        assert!(NetworkConfig::new(
            1,
            1,
            vec![unif.clone(), unif],
            Activation::Relu,
        )
        .is_err());
    }

    #[test]
    fn width_and_shape_validation() {
        let net = tanh_net(1, 1.5, 1.0);
        let tree = SeedTree::new(16);
        let x = vec![1.0, 0.5];
        assert!(forward(&net, &x, &[1], &[1, 1], &tree, 0).is_err());
        assert!(forward(&net, &x, &[8, 8], &[8, 8, 1], &tree, 0).is_err());
        assert!(forward(&net, &[1.0], &[8], &[8, 1], &tree, 0).is_err());
        assert!(replicate_layer(&net, &[x.clone()], &[8], 3, 4, &[0], &tree).is_err());
        assert!(replicate_layer(&net, &[x.clone()], &[8], 2, 0, &[0], &tree).is_err());
        assert!(replicate_layer(&net, &[x], &[8], 2, 4, &[], &tree).is_err());
    }

    #[test]
    fn network_config_json_roundtrip() {
        let net = tanh_net(2, 1.5, 1.0);
        let json = net.to_json();
        let back = NetworkConfig::<f64>::from_json(&json).unwrap();
        assert_eq!(net, back);
        // Unknown keys rejected.
        let bad = json.replacen("\"input_dim\"", "\"inpt_dim\"", 1);
        assert!(NetworkConfig::<f64>::from_json(&bad).is_err());
    }

    #[test]
    fn activation_shapes() {
        let acts: Vec<(Activation<f64>, f64, f64)> = vec![
            (Activation::Tanh, 0.5, 0.5f64.tanh()),
            (Activation::Cos, 0.5, 0.5f64.cos()),
            (Activation::ClippedLinear { bound: 1.0 }, 2.0, 1.0),
            (Activation::ClippedLinear { bound: 1.0 }, -2.0, -1.0),
            (Activation::Const { c: 3.0 }, -7.0, 3.0),
            (Activation::Relu, -2.0, 0.0),
            (Activation::Relu, 2.0, 2.0),
            (Activation::AbsPow { beta: 0.6 }, 0.0, 0.0),
        ];
        for (act, y, expect) in acts {
            assert_eq!(act.apply(y), expect, "{act:?}({y})");
        }
        let ap = Activation::AbsPow { beta: 0.6 };
        assert!((ap.apply(-2.0f64) - 2.0f64.powf(0.6)).abs() < 1e-12);
    }

    #[test]
    fn csv_export_shape() {
        let net = tanh_net(1, 1.5, 1.0);
        let tree = SeedTree::new(17);
        let batch = replicate_layer(
            &net,
            &[vec![1.0, 0.5], vec![0.3, -0.2]],
            &[8],
            2,
            2,
            &[0, 3],
            &tree,
        )
        .unwrap();
        let csv = batch.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "replicate,node,input_index,value");
        // 2 replicates × 2 nodes × 2 inputs = 8 data rows.
        assert_eq!(lines.len(), 9);
        assert!(lines[1].starts_with("0,0,0,"));
        assert!(lines[4].starts_with("0,3,1,"));
    }
}
