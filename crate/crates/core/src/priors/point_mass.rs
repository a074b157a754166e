use super::{DrawMeta, ModelKind, Observation, PosteriorDraws, PosteriorSampler, SamplerDiagnostics};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::wavelet::CoefficientTree;

/// Degenerate "posterior" that always returns the truth. Used to calibrate the harness: any
/// band built from it must contain the truth.
#[derive(Clone, Debug)]
pub struct PointMassPrior {
    truth: CoefficientTree,
}

impl PointMassPrior {
    pub fn new(truth: CoefficientTree) -> Self {
        Self { truth }
    }
}

impl PosteriorSampler for PointMassPrior {
    fn name(&self) -> &str {
        "point_mass"
    }

    fn model(&self) -> Option<ModelKind> {
        None
    }

    fn max_level(&self, _n: u64, _observed_levels: usize) -> Result<usize> {
        self.truth
            .max_level()
            .ok_or_else(|| Error::Validation("point-mass truth has no detail levels".into()))
    }

    fn draws_densities(&self) -> bool {
        false
    }

    fn sample(&self, data: &Observation, draws: usize, _rng: &mut Stream) -> Result<PosteriorDraws> {
        if draws == 0 {
            return Err(Error::Validation("need at least one posterior draw".into()));
        }
        Ok(PosteriorDraws::new(
            vec![self.truth.clone(); draws],
            DrawMeta {
                prior: "point_mass".into(),
                data_id: format!("{}(n={})", data.model(), data.n()),
                diagnostics: SamplerDiagnostics::default(),
            },
            false,
        ))
    }

    fn exact_mean(&self, _data: &Observation) -> Result<Option<CoefficientTree>> {
        Ok(Some(self.truth.clone()))
    }
}
