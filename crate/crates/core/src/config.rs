//! Experiment configuration: TOML with strict keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiscale::WeightSequence;
use crate::priors::{ModelKind, PriorContext, PriorRegistry, PriorSpec};
use crate::truth::{TruthRegistry, TruthSpec};

/// Every accepted key, for `--help`.
pub const CONFIG_REFERENCE: &str = "\
Top level:
  scenario = \"name\"        scenario id, used in output file names ([A-Za-z0-9._-])
  seed = 1                   master seed; replicate r uses a stream keyed by (seed, r)
  replications = 100         datasets per sample size (coverage needs >= 100)
  alpha = 0.05               credibility 1 - alpha, 0 < alpha < 1
  n = [5000]                 sample sizes (white-noise: noise level 1/sqrt(n)), each >= 2

[model]
  kind = \"sampling\"         sampling | white_noise
  levels = 5                 white_noise: highest observed detail level J;
                             clt: projection level j_n

[truth]
  kind = \"holder_cusp\"      uniform | zero | holder_cusp | heights
  gamma = 0.75               holder_cusp: exponent in (0, 1]
  amplitude = 1.0            holder_cusp: density 1 + a (|x - 1/2|^gamma - mean)
  level = 14                 holder_cusp: tabulation level (cell averages are exact)
  heights = [0.5, 1.5]       heights: 2^L cell heights

[prior]
  kind = \"histogram\"        histogram | gaussian_series | log_density | point_mass
  draws = 1000               posterior draws per dataset (>= 20 / alpha for bands)
  cutoff = { rule = \"ln\", alpha = 0.75 }
                             jn | ln (with alpha) or fixed (with level)
  dirichlet_alpha = 1.0      histogram: common Dirichlet parameter
  dirichlet_bounds = [1.0, 1.0, 1.0]
                             histogram: (a, c1, c2), c1 2^{-L a} <= alpha <= c2
  smoothness = 0.5           series priors: sigma_l = 2^{-l (smoothness + 1/2)}
  base = \"gaussian\"         gaussian_series: gaussian | uniform;
                             log_density: gaussian | log_lipschitz
  bound = 1.0                gaussian_series uniform base: half-width B
  tau = 0.0                  log_lipschitz: tail parameter in [0, 1)
  r = 0.25                   log_density gaussian: sigma_l = 2^{-l (r + 1/2)},
                             0 < r < smoothness - 1/4 (default smoothness / 2)
  m_threshold = 10.0         warn when sup |f0_lk| / sigma_l exceeds it
  [prior.mcmc]               log_density sampler
    burn_in = 5000           sweeps, step sizes adapt only here
    thin = 10                sweeps between kept states
    adapt_every = 50         sweeps per adaptation batch
    target_low = 0.2         acceptance window aimed at by the adaptation
    target_high = 0.5

[weights]
  rule = \"sqrt_log\"         sqrt_log | sqrt | power(p)

[band]
  centring = \"efficient\"    efficient (observation / empirical projection) | posterior_mean
  cdf_centring = \"empirical\" empirical (F_n) | histogram (primitive of the centring)
  holder_gamma = 0.75        add a Hoelder constraint with this exponent
  holder_u = 2.0             its radius (default w_{j_n} / sqrt(j_n))

[check]
  reference_draws = 2000     draws from the reference Gaussian law
  coordinate_levels = 4      bvm: per-coordinate comparison for levels <= this
";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centring {
    #[default]
    Efficient,
    PosteriorMean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdfCentringKind {
    #[default]
    Empirical,
    Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub rule: String,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self {
            rule: "sqrt_log".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    #[serde(default)]
    pub centring: Centring,
    #[serde(default)]
    pub cdf_centring: CdfCentringKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder_u: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default = "default_reference_draws")]
    pub reference_draws: usize,
    #[serde(default = "default_coordinate_levels")]
    pub coordinate_levels: usize,
}

fn default_reference_draws() -> usize {
    2000
}

fn default_coordinate_levels() -> usize {
    4
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            reference_draws: default_reference_draws(),
            coordinate_levels: default_coordinate_levels(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub n: Vec<u64>,
    pub model: ModelSection,
    pub truth: TruthSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub band: BandSection,
    #[serde(default)]
    pub check: CheckSection,
}

fn default_seed() -> u64 {
    1
}

fn default_replications() -> usize {
    100
}

fn default_alpha() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn weights(&self) -> Result<WeightSequence> {
        WeightSequence::parse(&self.weights.rule)
    }

    pub fn prior_spec(&self) -> Result<&PriorSpec> {
        self.prior
            .as_ref()
            .ok_or_else(|| Error::Config("this experiment needs a [prior] section".into()))
    }

    /// Checks shared by every experiment; experiment-specific ones live in the harness.
    pub fn validate(&self) -> Result<()> {
        if self.scenario.is_empty()
            || !self
                .scenario
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
        {
            return Err(Error::Config(format!(
                "scenario `{}` must be non-empty and use only [A-Za-z0-9._-]",
                self.scenario
            )));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.n.is_empty() {
            return Err(Error::Config("n must list at least one sample size".into()));
        }
        if let Some(bad) = self.n.iter().find(|&&n| n < 2) {
            return Err(Error::Config(format!("sample sizes must be >= 2, got {bad}")));
        }
        if self.model.kind == ModelKind::WhiteNoise && self.model.levels.is_none() {
            return Err(Error::Config("white_noise model needs [model] levels".into()));
        }
        if self.check.reference_draws < 2 {
            return Err(Error::Config("check.reference_draws must be >= 2".into()));
        }
        self.weights()?;
        let truth = TruthRegistry::default().build(&self.truth)?;
        if self.model.kind == ModelKind::Sampling {
            truth.function().validate_density().map_err(|e| {
                Error::Config(format!("sampling model needs a density truth: {e}"))
            })?;
        }
        if let Some(prior) = &self.prior {
            let ctx = PriorContext {
                truth: Some(truth.coefficients()),
            };
            let sampler = PriorRegistry::default().build(prior, &ctx)?;
            if let Some(m) = sampler.model() {
                if m != self.model.kind {
                    return Err(Error::Config(format!(
                        "prior `{}` is for the {m} model but [model] kind is {}",
                        prior.kind, self.model.kind
                    )));
                }
            }
            if prior.draws == 0 {
                return Err(Error::Config("prior.draws must be >= 1".into()));
            }
        }
        if let Some(g) = self.band.holder_gamma {
            if !(g > 0.0) {
                return Err(Error::Config(format!("band.holder_gamma must be > 0, got {g}")));
            }
        }
        Ok(())
    }
}
