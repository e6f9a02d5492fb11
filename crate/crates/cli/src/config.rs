//! Scenario configuration: a TOML file whose keys mirror the structs below.
//! Unknown keys are rejected and every default is written back out in the
//! echoed copy, so a run directory records exactly what was executed.

use std::path::{Path, PathBuf};

use rbsmc::prior::{build_spatial_covariance, BlockLayout, MarginalPrior, PriorSpec, RhoCase};
use rbsmc::smc::{ComponentPrior, RhoPrior, SmcConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Master seed; every random stream derives from it.
    #[serde(default)]
    pub seed: u64,
    pub layout: LayoutConfig,
    pub prior: PriorConfig,
    #[serde(default)]
    pub rho: RhoConfig,
    #[serde(default)]
    pub observation: ObservationConfig,
    #[serde(default)]
    pub metamodel: MetamodelConfig,
    #[serde(default)]
    pub truth: TruthConfig,
    #[serde(default)]
    pub smc: SmcConfig,
    #[serde(default)]
    pub inputs: InputsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub areas_per_block: Vec<usize>,
    pub frequencies: usize,
    pub angles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Per block `[eps_re, eps_im, mu_re, mu_im]` at the first frequency.
    pub reference: Vec<[f64; 4]>,
    /// Per block change of the reference values across the band (linear in
    /// frequency index). Zero when omitted.
    #[serde(default)]
    pub drift: Vec<[f64; 4]>,
    #[serde(default = "defaults::sigma_abs")]
    pub sigma_abs: f64,
    #[serde(default = "defaults::sigma_rel")]
    pub sigma_rel: f64,
    #[serde(default = "defaults::spatial_correlation")]
    pub spatial_correlation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoConfig {
    #[serde(default = "defaults::rho_case")]
    pub case: RhoCase,
    /// Prior applied independently to every component.
    #[serde(default = "defaults::rho_prior")]
    pub prior: ComponentPrior,
}

impl Default for RhoConfig {
    fn default() -> Self {
        Self { case: defaults::rho_case(), prior: defaults::rho_prior() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    /// Standard deviation of the measurement noise added to the metamodel's
    /// residual covariance.
    #[serde(default = "defaults::noise_scale")]
    pub noise_scale: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self { noise_scale: defaults::noise_scale() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetamodelSource {
    /// Training pairs produced by the built-in synthetic solver.
    Synthetic,
    /// Training pairs read from `inputs.training`.
    Training,
    /// Fitted matrices read from `inputs.model`.
    Matrices,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetamodelConfig {
    #[serde(default = "defaults::source")]
    pub source: MetamodelSource,
    /// Strength `γ` of the synthetic solver's quadratic term.
    #[serde(default)]
    pub nonlinearity: f64,
    /// Training pairs per frequency for the synthetic solver.
    #[serde(default = "defaults::training_pairs")]
    pub training_pairs: usize,
    /// Training states are drawn from the prior marginal with its standard
    /// deviations scaled by this factor.
    #[serde(default = "defaults::one")]
    pub training_spread: f64,
    /// Bootstrap replicates computed by `fit` (0 disables, otherwise ≥ 100).
    #[serde(default = "defaults::bootstrap_replicates")]
    pub bootstrap_replicates: usize,
}

impl Default for MetamodelConfig {
    fn default() -> Self {
        Self {
            source: defaults::source(),
            nonlinearity: 0.0,
            training_pairs: defaults::training_pairs(),
            training_spread: 1.0,
            bootstrap_replicates: defaults::bootstrap_replicates(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthMode {
    /// Trajectory from the prior AR process with `truth.rho`.
    #[default]
    Smooth,
    /// Independent draws from each frequency's prior marginal.
    Irregular,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    #[serde(default)]
    pub mode: TruthMode,
    /// True ρ; one value is broadcast to every component. Drawn from the ρ
    /// prior when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
}

/// Input files; relative paths are resolved against the config file's
/// directory. Missing entries default to the files `generate` writes into the
/// output directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "defaults::histogram_bins")]
    pub histogram_bins: usize,
    /// Posterior trajectory draws written to `samples.csv` (0 skips the file).
    #[serde(default)]
    pub posterior_samples: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { histogram_bins: defaults::histogram_bins(), posterior_samples: 0 }
    }
}

mod defaults {
    use super::*;

    pub fn sigma_abs() -> f64 {
        0.1
    }
    pub fn sigma_rel() -> f64 {
        0.05
    }
    pub fn spatial_correlation() -> f64 {
        0.5
    }
    pub fn rho_case() -> RhoCase {
        RhoCase::PerBlock
    }
    pub fn rho_prior() -> ComponentPrior {
        ComponentPrior::Uniform
    }
    pub fn noise_scale() -> f64 {
        0.05
    }
    pub fn source() -> MetamodelSource {
        MetamodelSource::Synthetic
    }
    pub fn training_pairs() -> usize {
        200
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn bootstrap_replicates() -> usize {
        200
    }
    pub fn histogram_bins() -> usize {
        20
    }
}

fn invalid(field: &str, message: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: {message}"))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.materialize();
        config.validate()?;
        Ok(config)
    }

    /// Reads, validates and fills in defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn materialize(&mut self) {
        if self.prior.drift.is_empty() {
            self.prior.drift = vec![[0.0; 4]; self.prior.reference.len()];
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.layout;
        if l.frequencies == 0 {
            return Err(invalid("layout.frequencies", "must be at least 1"));
        }
        if l.angles == 0 {
            return Err(invalid("layout.angles", "must be at least 1"));
        }
        let layout = BlockLayout::new(l.areas_per_block.clone()).map_err(|e| invalid("layout.areas_per_block", e))?;
        if self.prior.drift.len() != self.prior.reference.len() {
            return Err(invalid("prior.drift", "needs one row per block"));
        }
        self.prior_spec(0).validate(&layout).map_err(|e| {
            let field = match e.to_string() {
                m if m.contains("spatial correlation") => "prior.spatial_correlation",
                m if m.contains("reference") => "prior.reference",
                _ => "prior",
            };
            invalid(field, e)
        })?;
        if !(self.observation.noise_scale >= 0.0 && self.observation.noise_scale.is_finite()) {
            return Err(invalid("observation.noise_scale", "must be a finite non-negative number"));
        }
        RhoPrior::iid(self.rho.case, &layout, self.rho.prior).map_err(|e| invalid("rho.prior", e))?;
        let m = &self.metamodel;
        if !m.nonlinearity.is_finite() {
            return Err(invalid("metamodel.nonlinearity", "must be finite"));
        }
        if !(m.training_spread > 0.0 && m.training_spread.is_finite()) {
            return Err(invalid("metamodel.training_spread", "must be positive"));
        }
        if m.source == MetamodelSource::Synthetic && m.training_pairs <= layout.state_dim() + 1 {
            return Err(invalid(
                "metamodel.training_pairs",
                format!("must exceed the {} fitted coefficients per output", layout.state_dim() + 1),
            ));
        }
        if m.bootstrap_replicates != 0 && m.bootstrap_replicates < 100 {
            return Err(invalid("metamodel.bootstrap_replicates", "must be 0 or at least 100"));
        }
        if let Some(rho) = &self.truth.rho {
            let dim = self.rho.case.dim(&layout);
            if rho.len() != 1 && rho.len() != dim {
                return Err(invalid("truth.rho", format!("needs 1 or {dim} values")));
            }
            if rho.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(invalid("truth.rho", "values must lie in [0,1]"));
            }
        }
        self.smc.validate().map_err(|e| invalid("smc", e))?;
        if self.output.histogram_bins < 2 {
            return Err(invalid("output.histogram_bins", "must be at least 2"));
        }
        Ok(())
    }

    pub fn block_layout(&self) -> BlockLayout {
        BlockLayout::new(self.layout.areas_per_block.clone()).expect("validated layout")
    }

    /// Prior specification at frequency index `k`.
    pub fn prior_spec(&self, k: usize) -> PriorSpec {
        let kk = self.layout.frequencies;
        let t = if kk > 1 { k as f64 / (kk - 1) as f64 } else { 0.0 };
        let reference = self
            .prior
            .reference
            .iter()
            .zip(&self.prior.drift)
            .map(|(r, d)| std::array::from_fn(|p| r[p] + d[p] * t))
            .collect();
        PriorSpec {
            reference,
            sigma_abs: self.prior.sigma_abs,
            sigma_rel: self.prior.sigma_rel,
            spatial_correlation: self.prior.spatial_correlation,
        }
    }

    pub fn priors(&self) -> Result<Vec<MarginalPrior>> {
        let layout = self.block_layout();
        (0..self.layout.frequencies)
            .map(|k| build_spatial_covariance(&layout, &self.prior_spec(k)).map_err(|e| invalid("prior", e)))
            .collect()
    }

    pub fn rho_prior(&self) -> RhoPrior {
        RhoPrior::iid(self.rho.case, &self.block_layout(), self.rho.prior).expect("validated rho prior")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short hash of everything in the configuration except the seed.
    pub fn scenario_hash(&self) -> String {
        let mut unseeded = self.clone();
        unseeded.seed = 0;
        let digest = Sha256::digest(unseeded.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
