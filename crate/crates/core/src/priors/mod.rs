//! Prior families and their posterior samplers.
//!
//! Every family implements [`PosteriorSampler`] and is registered by name in a
//! [`PriorRegistry`]; experiments pick one at runtime from the `[prior]` config section.

mod gaussian;
mod histogram;
mod logdensity;
mod point_mass;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use gaussian::{CoefficientBase, SeriesPriorWN};
pub use histogram::HistogramPrior;
pub use logdensity::{CoefficientDensity, LogDensityPrior, McmcSettings};
pub use point_mass::PointMassPrior;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sampling::{CutoffRule, IidSample, WhiteNoiseObservation};
use crate::wavelet::{synthesize, CoefficientTree};

/// Data handed to a posterior sampler.
#[derive(Clone, Debug)]
pub enum Observation {
    WhiteNoise(WhiteNoiseObservation),
    Iid(IidSample),
}

impl Observation {
    /// Sample size (or noise-level equivalent).
    pub fn n(&self) -> u64 {
        match self {
            Observation::WhiteNoise(o) => o.n,
            Observation::Iid(s) => s.len() as u64,
        }
    }

    pub fn model(&self) -> ModelKind {
        match self {
            Observation::WhiteNoise(_) => ModelKind::WhiteNoise,
            Observation::Iid(_) => ModelKind::Sampling,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    WhiteNoise,
    Sampling,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::WhiteNoise => "white_noise",
            ModelKind::Sampling => "sampling",
        })
    }
}

/// Per-level Metropolis diagnostics; empty for exact samplers.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SamplerDiagnostics {
    pub acceptance: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DrawMeta {
    pub prior: String,
    pub data_id: String,
    pub diagnostics: SamplerDiagnostics,
}

/// Posterior draws as coefficient trees; immutable once built.
#[derive(Clone, Debug)]
pub struct PosteriorDraws {
    draws: Vec<CoefficientTree>,
    meta: DrawMeta,
    densities: bool,
}

impl PosteriorDraws {
    pub fn new(draws: Vec<CoefficientTree>, meta: DrawMeta, densities: bool) -> Self {
        Self {
            draws,
            meta,
            densities,
        }
    }

    pub fn draws(&self) -> &[CoefficientTree] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn meta(&self) -> &DrawMeta {
        &self.meta
    }

    /// Whether every draw is the coefficient tree of a probability density.
    pub fn are_densities(&self) -> bool {
        self.densities
    }

    /// Write draws as CSV, one row per draw. Columns: `draw`, `s` (scaling), then `d<l>_<k>`
    /// in level-major order (all `k` of level 0, then level 1, ...).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let depth = self.draws.iter().map(|d| d.depth()).max().unwrap_or(0);
        let mut header = vec!["draw".to_string(), "s".to_string()];
        for l in 0..depth {
            for k in 0..(1usize << l) {
                header.push(format!("d{l}_{k}"));
            }
        }
        wtr.write_record(&header)?;
        for (i, d) in self.draws.iter().enumerate() {
            let d = d.resized(depth);
            let row = std::iter::once(i.to_string()).chain(d.iter_flat().map(|v| v.to_string()));
            wtr.write_record(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read draws written by [`PosteriorDraws::write_csv`].
    pub fn read_csv<R: std::io::Read>(reader: R, meta: DrawMeta, densities: bool) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let width = rdr.headers()?.len();
        if width < 2 || !(width - 1).is_power_of_two() {
            return Err(Error::Dimension(format!("{width} columns is not a tree layout")));
        }
        let mut draws = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| Error::Validation(format!("bad value `{v}`"))))
                .collect::<Result<_>>()?;
            draws.push(CoefficientTree::from_parts(vals[0], vals[1..].to_vec())?);
        }
        Ok(Self::new(draws, meta, densities))
    }
}

/// Coordinate-wise average of the draws.
pub fn posterior_mean(d: &PosteriorDraws) -> Result<CoefficientTree> {
    let first = d
        .draws
        .first()
        .ok_or_else(|| Error::Validation("posterior mean of zero draws".into()))?;
    let depth = d.draws.iter().map(|t| t.depth()).max().unwrap_or(first.depth());
    let mut acc = CoefficientTree::zeros(depth);
    for t in &d.draws {
        let t = t.resized(depth);
        acc.set_scaling(acc.scaling() + t.scaling());
        for (a, v) in acc.detail_mut().iter_mut().zip(t.detail()) {
            *a += v;
        }
    }
    acc.scale(1.0 / d.len() as f64);
    Ok(acc)
}

/// Check that a density draw is nonnegative and integrates to one within `tol`.
pub fn check_density_draw(t: &CoefficientTree, tol: f64) -> Result<()> {
    let f = synthesize(t, t.depth())?;
    if f.min_height() < -tol {
        return Err(Error::Numeric(format!("draw has negative height {}", f.min_height())));
    }
    if (f.integral() - 1.0).abs() > tol {
        return Err(Error::Numeric(format!("draw integrates to {}", f.integral())));
    }
    Ok(())
}

/// A prior family together with the recipe for sampling its posterior.
pub trait PosteriorSampler: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Observation model this prior is defined for; `None` when it accepts both.
    fn model(&self) -> Option<ModelKind>;

    /// Highest detail level carried by posterior draws for data of size `n` and observation
    /// depth `observed_levels`. Credible sets are restricted to levels up to this one.
    fn max_level(&self, n: u64, observed_levels: usize) -> Result<usize>;

    /// Whether draws are probability densities.
    fn draws_densities(&self) -> bool;

    fn sample(&self, data: &Observation, draws: usize, rng: &mut Stream)
        -> Result<PosteriorDraws>;

    /// Closed-form posterior mean when the family is conjugate.
    fn exact_mean(&self, _data: &Observation) -> Result<Option<CoefficientTree>> {
        Ok(None)
    }
}

/// Posterior mean: the closed form when the sampler provides one, else the draw average.
pub fn posterior_mean_for(
    sampler: &dyn PosteriorSampler,
    data: &Observation,
    d: &PosteriorDraws,
) -> Result<CoefficientTree> {
    match sampler.exact_mean(data)? {
        Some(m) => Ok(m),
        None => posterior_mean(d),
    }
}

fn check_model(sampler: &dyn PosteriorSampler, data: &Observation) -> Result<()> {
    match sampler.model() {
        Some(m) if m != data.model() => Err(Error::Unsupported(format!(
            "prior `{}` is defined for the {m} model, got {} data",
            sampler.name(),
            data.model()
        ))),
        _ => Ok(()),
    }
}

/// The `[prior]` config section. Keys irrelevant to the chosen `kind` are ignored; unknown
/// keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    /// Registered prior name: `histogram`, `gaussian_series`, `log_density`, `point_mass`.
    pub kind: String,
    /// Posterior draws per dataset.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Cut-off rule for histogram and log-density priors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<CutoffRule>,
    /// Common Dirichlet parameter of the histogram prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_alpha: Option<f64>,
    /// Bounds `c1 2^{-L a} <= alpha_k <= c2` checked for the Dirichlet parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_bounds: Option<[f64; 3]>,
    /// Prior smoothness `alpha` in `sigma_l = 2^{-l(alpha + 1/2)}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
    /// Coefficient base law of the series priors: `gaussian`, `uniform`, `log_lipschitz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    /// Half-width `B` of the uniform base law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    /// Tail parameter `tau` of the log-Lipschitz base law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Gaussian log-density case exponent `r` (default `alpha / 2`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Threshold `M` for the `sup |f0_lk| / sigma_l <= M` check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcSettings>,
}

fn default_draws() -> usize {
    1000
}

impl PriorSpec {
    pub fn named(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            draws: default_draws(),
            cutoff: None,
            dirichlet_alpha: None,
            dirichlet_bounds: None,
            smoothness: None,
            base: None,
            bound: None,
            tau: None,
            r: None,
            m_threshold: None,
            mcmc: None,
        }
    }
}

/// Extra context a builder may need, such as the truth for the degenerate point-mass prior.
#[derive(Clone, Debug, Default)]
pub struct PriorContext {
    pub truth: Option<CoefficientTree>,
}

type PriorBuilder = fn(&PriorSpec, &PriorContext) -> Result<Box<dyn PosteriorSampler>>;

/// Name-keyed registry of prior families.
pub struct PriorRegistry {
    builders: BTreeMap<&'static str, PriorBuilder>,
}

impl Default for PriorRegistry {
    fn default() -> Self {
        let mut reg = Self {
            builders: BTreeMap::new(),
        };
        reg.register("histogram", |s, _| Ok(Box::new(HistogramPrior::from_spec(s)?)));
        reg.register("gaussian_series", |s, _| Ok(Box::new(SeriesPriorWN::from_spec(s)?)));
        reg.register("log_density", |s, _| Ok(Box::new(LogDensityPrior::from_spec(s)?)));
        reg.register("point_mass", |_, ctx| {
            let truth = ctx.truth.clone().ok_or_else(|| {
                Error::Config("point_mass prior needs a truth to concentrate on".into())
            })?;
            Ok(Box::new(PointMassPrior::new(truth)))
        });
        reg
    }
}

impl PriorRegistry {
    pub fn register(&mut self, name: &'static str, builder: PriorBuilder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(&self, spec: &PriorSpec, ctx: &PriorContext) -> Result<Box<dyn PosteriorSampler>> {
        let builder = self
            .builders
            .get(spec.kind.as_str())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "prior",
                name: spec.kind.clone(),
                known: self.names().join(", "),
            })?;
        builder(spec, ctx)
    }
}

/// `sigma_l = 2^{-l(s + 1/2)}`; the scaling level shares `sigma_0 = 1`.
pub(crate) fn geometric_sigma(exponent: f64, level: usize) -> f64 {
    (2f64).powf(-(level as f64) * (exponent + 0.5))
}

/// Warning text when `sup_{l,k} |f0_lk| / sigma_l` exceeds `threshold`.
pub fn check_truth_scale(
    truth: &CoefficientTree,
    smoothness: f64,
    threshold: f64,
) -> Option<String> {
    let mut worst = 0.0f64;
    for l in 0..truth.depth() {
        let s = geometric_sigma(smoothness, l);
        worst = worst.max(crate::multiscale::max_abs(truth.level(l)) / s);
    }
    (worst > threshold).then(|| {
        format!(
            "sup |f0_lk| / sigma_l = {worst:.4} exceeds M = {threshold}; \
             the white-noise BvM hypotheses fail"
        )
    })
}
