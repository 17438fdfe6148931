//! The experiment configuration file: one versioned JSON schema shared by
//! every subcommand, with unknown keys rejected so a typo in a tolerance or
//! an α never silently runs a different experiment.

use serde::{Deserialize, Serialize};
use stable_width_core::counterexample::CounterexampleConfig;
use stable_width_core::mlp::{Activation, NetworkConfig};
use stable_width_core::{Error, Result};

/// Current schema version; files declaring any other version are rejected.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schema version; must equal [`SCHEMA_VERSION`].
    pub version: u32,
    /// Root seed. Mandatory: there is no wall-clock fallback, so every run
    /// is reproducible by construction.
    pub seed: u64,
    /// The network under study (required by predict/verify/sweep).
    #[serde(default)]
    pub network: Option<NetworkConfig<f64>>,
    /// Input vectors; one gives univariate laws, several give joint laws.
    #[serde(default)]
    pub inputs: Vec<Vec<f64>>,
    /// Layer under test for verify/sweep (2 ≤ layer ≤ depth + 1).
    #[serde(default)]
    pub layer: Option<usize>,
    /// Widths for the convergence sweep, strictly increasing.
    #[serde(default)]
    pub widths: Vec<usize>,
    /// Replicates per width (the empirical sample size m).
    #[serde(default)]
    pub replicates: Option<usize>,
    /// Monte Carlo draws for the predicted-limit integrals.
    #[serde(default)]
    pub n_mc: Option<usize>,
    /// Atom budget for sampled spectral measures (k ≥ 2).
    #[serde(default)]
    pub n_atoms: Option<usize>,
    /// Force the joint (multivariate) prediction even for one input.
    #[serde(default)]
    pub joint: Option<bool>,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    /// Section for the `counterexample` subcommand.
    #[serde(default)]
    pub counterexample: Option<CounterexampleSection>,
    /// Section for the `sweep` subcommand.
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    /// Output directory; the `--out` flag overrides it.
    #[serde(default)]
    pub out: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Sup-norm gate on |ψ̂ − ψ| at the largest width. Zero is legal and
    /// simply cannot pass (a deliberate way to force a red run); negative
    /// values are a configuration error.
    #[serde(default)]
    pub sup_cf: Option<f64>,
    /// Relative tolerance of the α = 2 variance gate.
    #[serde(default)]
    pub variance_rel: Option<f64>,
}

/// Counterexample parameters. The run seed is the experiment-level seed, so
/// the section repeats only what is specific to the divergence experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSection {
    pub alpha: f64,
    pub widths: Vec<usize>,
    pub replicates: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Weight tail indices to sweep; each point rebuilds every layer's
    /// weight law at that α (keeping kind and scale parameters).
    pub alphas: Vec<f64>,
    /// Activations to sweep; empty means "just the base activation".
    #[serde(default)]
    pub activations: Vec<Activation<f64>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("config does not match the schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (this tool reads version {SCHEMA_VERSION})",
                self.version
            )));
        }
        if let Some(t) = &self.tolerances {
            for (name, v) in [("sup_cf", t.sup_cf), ("variance_rel", t.variance_rel)] {
                if let Some(v) = v {
                    if !(v >= 0.0) || !v.is_finite() {
                        return Err(Error::config(format!(
                            "tolerances.{name} must be a finite nonnegative number, got {v}"
                        )));
                    }
                }
            }
        }
        if let Some(n) = self.replicates {
            if n == 0 {
                return Err(Error::config("replicates must be ≥ 1"));
            }
        }
        if let Some(n) = self.n_mc {
            if n == 0 {
                return Err(Error::config("n_mc must be ≥ 1"));
            }
        }
        if let Some(n) = self.n_atoms {
            if n == 0 {
                return Err(Error::config("n_atoms must be ≥ 1"));
            }
        }
        if let Some(cx) = &self.counterexample {
            // Delegate the detailed checks to the core validator.
            cx.to_core(self.seed)?;
        }
        Ok(())
    }

    /// The network, or a configuration error naming the missing key.
    pub fn require_network(&self) -> Result<&NetworkConfig<f64>> {
        self.network
            .as_ref()
            .ok_or_else(|| Error::config("this command needs a \"network\" section"))
    }

    pub fn require_inputs(&self) -> Result<&[Vec<f64>]> {
        if self.inputs.is_empty() {
            return Err(Error::config("this command needs a nonempty \"inputs\" list"));
        }
        Ok(&self.inputs)
    }

    pub fn require_layer(&self) -> Result<usize> {
        self.layer
            .ok_or_else(|| Error::config("this command needs a \"layer\" field"))
    }

    pub fn require_widths(&self) -> Result<&[usize]> {
        if self.widths.is_empty() {
            return Err(Error::config("this command needs a nonempty \"widths\" list"));
        }
        Ok(&self.widths)
    }

    pub fn require_replicates(&self) -> Result<usize> {
        self.replicates
            .ok_or_else(|| Error::config("this command needs a \"replicates\" field"))
    }
}

impl CounterexampleSection {
    pub fn to_core(&self, seed: u64) -> Result<CounterexampleConfig<f64>> {
        let cfg = CounterexampleConfig {
            alpha: self.alpha,
            widths: self.widths.clone(),
            replicates: self.replicates,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
