use rand::Rng;
use rand_distr::Gamma;

use super::{check_model, DrawMeta, ModelKind, Observation, PosteriorDraws, PosteriorSampler, PriorSpec, SamplerDiagnostics};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sampling::{cutoff, CutoffRule, IidSample};
use crate::wavelet::{analyze, CoefficientTree, PiecewiseConstantFn};

/// Dirichlet random histogram on the `2^L` dyadic cells, `L` from a cut-off rule.
///
/// The posterior given bin counts `N_k` is `Dirichlet(alpha_k + N_k)`; heights are
/// `2^L omega_k`.
#[derive(Clone, Debug)]
pub struct HistogramPrior {
    pub cutoff: CutoffRule,
    pub alpha: f64,
    /// `(a, c1, c2)` with `c1 2^{-L a} <= alpha <= c2`.
    pub bounds: [f64; 3],
}

impl HistogramPrior {
    pub fn new(cutoff: CutoffRule, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Validation(format!("Dirichlet parameter must be > 0, got {alpha}")));
        }
        Ok(Self {
            cutoff,
            alpha,
            bounds: [1.0, alpha.min(1.0), alpha.max(1.0)],
        })
    }

    pub fn from_spec(spec: &PriorSpec) -> Result<Self> {
        let rule = spec
            .cutoff
            .ok_or_else(|| Error::Config("histogram prior needs a `cutoff` rule".into()))?;
        let mut prior = Self::new(rule, spec.dirichlet_alpha.unwrap_or(1.0))?;
        if let Some(b) = spec.dirichlet_bounds {
            if b.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Validation("dirichlet_bounds must be positive".into()));
            }
            prior.bounds = b;
        }
        Ok(prior)
    }

    /// Number of histogram levels `L` for sample size `n`.
    pub fn level(&self, n: u64) -> Result<usize> {
        let level = match self.cutoff {
            CutoffRule::Fixed { level } => level,
            rule => cutoff(rule, n)?,
        };
        let [a, c1, c2] = self.bounds;
        let lower = c1 * (2f64).powf(-(level as f64) * a);
        if self.alpha < lower || self.alpha > c2 {
            return Err(Error::Validation(format!(
                "Dirichlet parameter {} outside [{lower}, {c2}] at level {level}",
                self.alpha
            )));
        }
        Ok(level)
    }

    /// Posterior Dirichlet parameters `alpha + N_k`.
    pub fn posterior_parameters(&self, sample: &IidSample) -> Result<(usize, Vec<f64>)> {
        let level = self.level(sample.len() as u64)?;
        let params = sample
            .counts(level)
            .iter()
            .map(|&c| self.alpha + c as f64)
            .collect();
        Ok((level, params))
    }

    fn iid<'a>(&self, data: &'a Observation) -> Result<&'a IidSample> {
        match data {
            Observation::Iid(s) => Ok(s),
            Observation::WhiteNoise(_) => Err(Error::Unsupported(
                "histogram prior needs i.i.d. data".into(),
            )),
        }
    }
}

/// One Dirichlet draw via normalised Gamma variates.
pub(crate) fn dirichlet_draw<R: Rng + ?Sized>(gammas: &[Gamma<f64>], rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = gammas.iter().map(|g| rng.sample(g)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

impl PosteriorSampler for HistogramPrior {
    fn name(&self) -> &str {
        "histogram"
    }

    fn model(&self) -> Option<ModelKind> {
        Some(ModelKind::Sampling)
    }

    fn max_level(&self, n: u64, _observed_levels: usize) -> Result<usize> {
        let level = self.level(n)?;
        level.checked_sub(1).ok_or_else(|| {
            Error::Validation("histogram with one bin carries no detail levels".into())
        })
    }

    fn draws_densities(&self) -> bool {
        true
    }

    fn sample(&self, data: &Observation, draws: usize, rng: &mut Stream) -> Result<PosteriorDraws> {
        check_model(self, data)?;
        if draws == 0 {
            return Err(Error::Validation("need at least one posterior draw".into()));
        }
        let sample = self.iid(data)?;
        let (level, params) = self.posterior_parameters(sample)?;
        let gammas = params
            .iter()
            .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::Numeric(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let cells = (1u64 << level) as f64;
        let out = (0..draws)
            .map(|_| {
                let w = dirichlet_draw(&gammas, rng);
                let heights = w.iter().map(|v| v * cells).collect();
                PiecewiseConstantFn::new(level, heights).map(|f| analyze(&f))
            })
            .collect::<Result<Vec<CoefficientTree>>>()?;
        Ok(PosteriorDraws::new(
            out,
            DrawMeta {
                prior: format!("histogram(L={level}, alpha={})", self.alpha),
                data_id: format!("iid(n={})", sample.len()),
                diagnostics: SamplerDiagnostics::default(),
            },
            true,
        ))
    }

    fn exact_mean(&self, data: &Observation) -> Result<Option<CoefficientTree>> {
        let sample = self.iid(data)?;
        let (level, params) = self.posterior_parameters(sample)?;
        let total: f64 = params.iter().sum();
        let cells = (1u64 << level) as f64;
        let heights = params.iter().map(|a| cells * a / total).collect();
        Ok(Some(analyze(&PiecewiseConstantFn::new(level, heights)?)))
    }
}
