use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    check_model, DrawMeta, ModelKind, Observation, PosteriorDraws, PosteriorSampler, PriorSpec,
    SamplerDiagnostics,
};
use crate::error::{Error, Result};
use crate::numeric::integrate_even_real_line;
use crate::rng::Stream;
use crate::sampling::{cutoff, CutoffRule, IidSample};
use crate::wavelet::{analyze, CoefficientTree, PiecewiseConstantFn};

/// Knobs of the adaptive per-coordinate random-walk Metropolis sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSettings {
    /// Burn-in sweeps; step sizes adapt only during burn-in.
    pub burn_in: usize,
    /// Sweeps between stored states.
    pub thin: usize,
    /// Sweeps per adaptation batch.
    pub adapt_every: usize,
    /// Acceptance window targeted by the adaptation.
    pub target_low: f64,
    pub target_high: f64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            burn_in: 5000,
            thin: 10,
            adapt_every: 50,
            target_low: 0.2,
            target_high: 0.5,
        }
    }
}

/// Acceptance outside this window after tuning raises a diagnostics warning.
const ACCEPTANCE_ALARM: (f64, f64) = (0.05, 0.8);

/// Density of the i.i.d. coefficients `alpha_lk` of a log-density series prior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoefficientDensity {
    /// Standard normal.
    Gaussian,
    /// `c_tau exp(-(1 + |x|)^{1 - tau})`, `0 <= tau < 1`.
    LogLipschitz { tau: f64 },
}

impl CoefficientDensity {
    /// Log-density up to the additive normalising constant.
    #[inline]
    pub fn log_kernel(&self, x: f64) -> f64 {
        match *self {
            CoefficientDensity::Gaussian => -0.5 * x * x,
            CoefficientDensity::LogLipschitz { tau } => -(1.0 + x.abs()).powf(1.0 - tau),
        }
    }

    /// Normalising constant: `1/sqrt(2 pi)` or `c_tau` by adaptive quadrature.
    pub fn normalizer(&self) -> Result<f64> {
        match *self {
            CoefficientDensity::Gaussian => Ok(1.0 / (2.0 * std::f64::consts::PI).sqrt()),
            CoefficientDensity::LogLipschitz { .. } => {
                let z = integrate_even_real_line(&|x| self.log_kernel(x).exp(), 1e-12)?;
                Ok(1.0 / z)
            }
        }
    }
}

/// Prior on log-densities `f = exp(T - c(T))` with
/// `T = sum_{l <= L_n} sum_k sigma_l alpha_lk psi_lk`.
///
/// Haar `T` is piecewise constant on the cells of level `L_n + 1`, so `c(T)` is a finite sum
/// and the likelihood depends on the data only through the bin counts at that level.
#[derive(Clone, Debug)]
pub struct LogDensityPrior {
    pub cutoff: CutoffRule,
    pub smoothness: f64,
    pub coefficients: CoefficientDensity,
    /// Exponent of the Gaussian case, `sigma_l = 2^{-l(r + 1/2)}`.
    pub r: f64,
    pub mcmc: McmcSettings,
}

impl LogDensityPrior {
    pub fn new(
        cutoff: CutoffRule,
        smoothness: f64,
        coefficients: CoefficientDensity,
        r: Option<f64>,
        mcmc: McmcSettings,
    ) -> Result<Self> {
        if !(smoothness > 0.5) {
            return Err(Error::Validation(format!(
                "log-density prior needs smoothness > 1/2, got {smoothness}"
            )));
        }
        let r = r.unwrap_or(smoothness / 2.0);
        match coefficients {
            CoefficientDensity::Gaussian => {
                if !(r > 0.0 && r < smoothness - 0.25) {
                    return Err(Error::Validation(format!(
                        "Gaussian log-density prior needs 0 < r < alpha - 1/4, got r = {r}, \
                         alpha = {smoothness}"
                    )));
                }
            }
            CoefficientDensity::LogLipschitz { tau } => {
                if !(0.0..1.0).contains(&tau) {
                    return Err(Error::Validation(format!("tau must lie in [0, 1), got {tau}")));
                }
            }
        }
        if mcmc.thin == 0 || mcmc.adapt_every == 0 {
            return Err(Error::Validation("mcmc thin and adapt_every must be >= 1".into()));
        }
        if !(0.0 < mcmc.target_low && mcmc.target_low < mcmc.target_high && mcmc.target_high < 1.0)
        {
            return Err(Error::Validation("mcmc acceptance window must satisfy 0 < low < high < 1".into()));
        }
        Ok(Self {
            cutoff,
            smoothness,
            coefficients,
            r,
            mcmc,
        })
    }

    pub fn from_spec(spec: &PriorSpec) -> Result<Self> {
        let rule = spec
            .cutoff
            .ok_or_else(|| Error::Config("log_density prior needs a `cutoff` rule".into()))?;
        let smoothness = spec
            .smoothness
            .ok_or_else(|| Error::Config("log_density prior needs `smoothness`".into()))?;
        let coefficients = match spec.base.as_deref().unwrap_or("gaussian") {
            "gaussian" => CoefficientDensity::Gaussian,
            "log_lipschitz" => CoefficientDensity::LogLipschitz {
                tau: spec.tau.unwrap_or(0.0),
            },
            other => {
                return Err(Error::Unsupported(format!(
                    "base `{other}` for log_density (use gaussian or log_lipschitz)"
                )))
            }
        };
        Self::new(rule, smoothness, coefficients, spec.r, spec.mcmc.unwrap_or_default())
    }

    pub fn sigma(&self, level: usize) -> f64 {
        let exponent = match self.coefficients {
            CoefficientDensity::Gaussian => self.r,
            CoefficientDensity::LogLipschitz { .. } => self.smoothness,
        };
        super::geometric_sigma(exponent, level)
    }

    /// Cut-off `L_n`: coefficients on levels `0..=L_n` are random.
    pub fn levels(&self, n: u64) -> Result<usize> {
        match self.cutoff {
            CutoffRule::Fixed { level } => Ok(level),
            rule => cutoff(rule, n),
        }
    }

    /// Unnormalised log posterior of the coefficient vector (level-major, no scaling), for
    /// oracles and diagnostics.
    pub fn log_posterior(&self, alphas: &[f64], sample: &IidSample) -> Result<f64> {
        let top = self.levels(sample.len() as u64)?;
        if alphas.len() != (1usize << (top + 1)) - 1 {
            return Err(Error::Dimension(format!(
                "expected {} coefficients, got {}",
                (1usize << (top + 1)) - 1,
                alphas.len()
            )));
        }
        let state = ChainState::new(self, top, alphas.to_vec(), &sample.counts(top + 1));
        let prior: f64 = alphas.iter().map(|a| self.coefficients.log_kernel(*a)).sum();
        Ok(state.log_likelihood() + prior)
    }
}

/// Current coefficients plus the cell values `t_j` of `T` and `sum_j exp(t_j)`.
struct ChainState {
    top: usize,
    cells_level: usize,
    alphas: Vec<f64>,
    t: Vec<f64>,
    exp_t: Vec<f64>,
    sum_exp: f64,
    counts: Vec<f64>,
    n: f64,
    /// `sigma_l 2^{l/2}` per level.
    scale: Vec<f64>,
}

impl ChainState {
    fn new(prior: &LogDensityPrior, top: usize, alphas: Vec<f64>, counts: &[u64]) -> Self {
        let cells_level = top + 1;
        let scale: Vec<f64> = (0..=top)
            .map(|l| prior.sigma(l) * (2f64).powf(l as f64 / 2.0))
            .collect();
        let cells = 1usize << cells_level;
        let mut state = Self {
            top,
            cells_level,
            alphas,
            t: vec![0.0; cells],
            exp_t: vec![1.0; cells],
            sum_exp: cells as f64,
            counts: counts.iter().map(|&c| c as f64).collect(),
            n: counts.iter().sum::<u64>() as f64,
            scale,
        };
        state.recompute();
        state
    }

    fn recompute(&mut self) {
        self.t.iter_mut().for_each(|v| *v = 0.0);
        for l in 0..=self.top {
            for k in 0..(1usize << l) {
                let a = self.alphas[(1 << l) - 1 + k];
                let delta = self.scale[l] * a;
                let (lo, mid, hi) = self.support(l, k);
                self.t[lo..mid].iter_mut().for_each(|v| *v += delta);
                self.t[mid..hi].iter_mut().for_each(|v| *v -= delta);
            }
        }
        for (e, t) in self.exp_t.iter_mut().zip(&self.t) {
            *e = t.exp();
        }
        self.sum_exp = self.exp_t.iter().sum();
    }

    #[inline]
    fn support(&self, l: usize, k: usize) -> (usize, usize, usize) {
        let width = 1usize << (self.cells_level - l);
        let lo = k * width;
        (lo, lo + width / 2, lo + width)
    }

    /// `sum_j N_j t_j - n c(T)`.
    fn log_likelihood(&self) -> f64 {
        let cells = self.t.len() as f64;
        let c = (self.sum_exp / cells).ln();
        self.counts.iter().zip(&self.t).map(|(n, t)| n * t).sum::<f64>() - self.n * c
    }

    /// Change in log-likelihood and new `sum exp(t)` if coefficient `(l, k)` moves by `step`.
    fn propose(&self, l: usize, k: usize, step: f64) -> (f64, f64) {
        let delta = self.scale[l] * step;
        let (lo, mid, hi) = self.support(l, k);
        let (up, down) = (delta.exp(), (-delta).exp());
        let mut new_sum = self.sum_exp;
        let mut count_term = 0.0;
        for j in lo..mid {
            new_sum += self.exp_t[j] * (up - 1.0);
            count_term += self.counts[j];
        }
        for j in mid..hi {
            new_sum += self.exp_t[j] * (down - 1.0);
            count_term -= self.counts[j];
        }
        let dll = delta * count_term - self.n * (new_sum.ln() - self.sum_exp.ln());
        (dll, new_sum)
    }

    fn accept(&mut self, l: usize, k: usize, step: f64, new_sum: f64) {
        let delta = self.scale[l] * step;
        let (lo, mid, hi) = self.support(l, k);
        for j in lo..mid {
            self.t[j] += delta;
            self.exp_t[j] = self.t[j].exp();
        }
        for j in mid..hi {
            self.t[j] -= delta;
            self.exp_t[j] = self.t[j].exp();
        }
        self.alphas[(1 << l) - 1 + k] += step;
        self.sum_exp = new_sum;
    }

    /// Density tree of `exp(T - c(T))`.
    fn density_tree(&self) -> Result<CoefficientTree> {
        let cells = self.t.len() as f64;
        let norm = self.sum_exp / cells;
        let heights = self.exp_t.iter().map(|e| e / norm).collect();
        Ok(analyze(&PiecewiseConstantFn::new(self.cells_level, heights)?))
    }
}

impl PosteriorSampler for LogDensityPrior {
    fn name(&self) -> &str {
        "log_density"
    }

    fn model(&self) -> Option<ModelKind> {
        Some(ModelKind::Sampling)
    }

    fn max_level(&self, n: u64, _observed_levels: usize) -> Result<usize> {
        self.levels(n)
    }

    fn draws_densities(&self) -> bool {
        true
    }

    fn sample(&self, data: &Observation, draws: usize, rng: &mut Stream) -> Result<PosteriorDraws> {
        check_model(self, data)?;
        if draws == 0 {
            return Err(Error::Validation("need at least one posterior draw".into()));
        }
        let Observation::Iid(sample) = data else {
            unreachable!("model checked above")
        };
        let top = self.levels(sample.len() as u64)?;
        let dim = (1usize << (top + 1)) - 1;
        let mut state = ChainState::new(self, top, vec![0.0; dim], &sample.counts(top + 1));

        // Initial steps from the rough posterior scale of each coefficient.
        let n_eff = (sample.len().max(1)) as f64;
        let mut steps: Vec<f64> = (0..=top)
            .map(|l| 2.4 * (1.0 / (self.sigma(l) * n_eff.sqrt())).min(1.0))
            .collect();
        let mut accepted = vec![0usize; top + 1];
        let mut proposed = vec![0usize; top + 1];

        let mcmc = self.mcmc;
        let sweep = |state: &mut ChainState,
                         steps: &[f64],
                         accepted: &mut [usize],
                         proposed: &mut [usize],
                         rng: &mut Stream| {
            for l in 0..=top {
                for k in 0..(1usize << l) {
                    let z: f64 = rng.sample(StandardNormal);
                    let step = steps[l] * z;
                    let current = state.alphas[(1 << l) - 1 + k];
                    let (dll, new_sum) = state.propose(l, k, step);
                    let dprior = self.coefficients.log_kernel(current + step)
                        - self.coefficients.log_kernel(current);
                    proposed[l] += 1;
                    let log_u: f64 = rng.random::<f64>().ln();
                    if log_u < dll + dprior {
                        state.accept(l, k, step, new_sum);
                        accepted[l] += 1;
                    }
                }
            }
            // Refresh cached sums to keep rounding from accumulating.
            state.recompute();
        };

        for it in 1..=mcmc.burn_in {
            sweep(&mut state, &steps, &mut accepted, &mut proposed, rng);
            if it % mcmc.adapt_every == 0 {
                for l in 0..=top {
                    let rate = accepted[l] as f64 / proposed[l].max(1) as f64;
                    if rate < mcmc.target_low {
                        steps[l] *= 0.7;
                    } else if rate > mcmc.target_high {
                        steps[l] *= 1.4;
                    }
                    accepted[l] = 0;
                    proposed[l] = 0;
                }
            }
        }
        accepted.iter_mut().for_each(|a| *a = 0);
        proposed.iter_mut().for_each(|p| *p = 0);

        let mut out = Vec::with_capacity(draws);
        for _ in 0..draws {
            for _ in 0..mcmc.thin {
                sweep(&mut state, &steps, &mut accepted, &mut proposed, rng);
            }
            out.push(state.density_tree()?);
        }

        let acceptance: Vec<f64> = accepted
            .iter()
            .zip(&proposed)
            .map(|(a, p)| *a as f64 / (*p).max(1) as f64)
            .collect();
        let warning = acceptance
            .iter()
            .enumerate()
            .find(|(_, a)| **a < ACCEPTANCE_ALARM.0 || **a > ACCEPTANCE_ALARM.1)
            .map(|(l, a)| format!("level {l} acceptance {a:.3} outside [0.05, 0.8]"));
        let base = match self.coefficients {
            CoefficientDensity::Gaussian => format!("gaussian, r={}", self.r),
            CoefficientDensity::LogLipschitz { tau } => format!("log_lipschitz, tau={tau}"),
        };
        Ok(PosteriorDraws::new(
            out,
            DrawMeta {
                prior: format!("log_density(L={top}, alpha={}, {base})", self.smoothness),
                data_id: format!("iid(n={})", sample.len()),
                diagnostics: SamplerDiagnostics {
                    acceptance,
                    step_sizes: steps,
                    warning,
                },
            },
            true,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::check_density_draw;
    use crate::rng;
    use crate::sampling::sample_iid;

    fn prior(level: usize, coefficients: CoefficientDensity) -> LogDensityPrior {
        let mcmc = McmcSettings {
            burn_in: 1000,
            thin: 2,
            ..McmcSettings::default()
        };
        LogDensityPrior::new(CutoffRule::Fixed { level }, 1.0, coefficients, None, mcmc).unwrap()
    }

    #[test]
    fn log_lipschitz_normalizer_closed_forms() {
        // int exp(-(1+|x|)) = 2/e; with tau = 1/2 the integral is 8/e.
        let c0 = CoefficientDensity::LogLipschitz { tau: 0.0 }.normalizer().unwrap();
        assert!((c0 - std::f64::consts::E / 2.0).abs() < 1e-10);
        let c5 = CoefficientDensity::LogLipschitz { tau: 0.5 }.normalizer().unwrap();
        assert!((c5 - std::f64::consts::E / 8.0).abs() < 1e-10);
    }

    #[test]
    fn parameter_constraints() {
        let m = McmcSettings::default();
        let g = CoefficientDensity::Gaussian;
        let f = CutoffRule::Fixed { level: 1 };
        assert!(LogDensityPrior::new(f, 0.5, g, None, m).is_err());
        assert!(LogDensityPrior::new(f, 1.0, g, Some(0.8), m).is_err());
        assert!(LogDensityPrior::new(f, 1.0, g, Some(0.7), m).is_ok());
        let ll = CoefficientDensity::LogLipschitz { tau: 1.0 };
        assert!(LogDensityPrior::new(f, 1.0, ll, None, m).is_err());
    }

    #[test]
    fn incremental_likelihood_matches_full_recompute() {
        let p = prior(2, CoefficientDensity::Gaussian);
        let s = sample_iid(&crate::wavelet::PiecewiseConstantFn::uniform(), 200, &mut rng::stream(1))
            .unwrap();
        let alphas: Vec<f64> = (0..7).map(|i| 0.1 * i as f64 - 0.3).collect();
        let mut state = ChainState::new(&p, 2, alphas.clone(), &s.counts(3));
        let before = state.log_likelihood();
        let (dll, new_sum) = state.propose(1, 1, 0.37);
        state.accept(1, 1, 0.37, new_sum);
        let after = state.log_likelihood();
        assert!((after - before - dll).abs() < 1e-10);
        let mut moved = alphas;
        moved[2] += 0.37;
        let fresh = ChainState::new(&p, 2, moved, &s.counts(3));
        assert!((fresh.log_likelihood() - after).abs() < 1e-10);
    }

    #[test]
    fn prior_only_draws_are_centred_densities() {
        let p = prior(1, CoefficientDensity::Gaussian);
        let data = Observation::Iid(IidSample::new(vec![]).unwrap());
        let d = p.sample(&data, 3000, &mut rng::stream(2)).unwrap();
        for t in d.draws() {
            check_density_draw(t, 1e-8).unwrap();
        }
        // Density coefficients are odd functions of the alphas, so their prior mean is zero.
        let xs: Vec<f64> = d.draws().iter().map(|t| t.get(0, 0)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        // thinned chain, allow for autocorrelation
        assert!(mean.abs() < 3.0 * sd / (xs.len() as f64 / 4.0).sqrt(), "mean {mean}");
    }

    #[test]
    fn diagnostics_are_recorded() {
        let p = prior(2, CoefficientDensity::LogLipschitz { tau: 0.0 });
        let s = sample_iid(&crate::wavelet::PiecewiseConstantFn::uniform(), 500, &mut rng::stream(3))
            .unwrap();
        let d = p.sample(&Observation::Iid(s), 200, &mut rng::stream(4)).unwrap();
        let diag = &d.meta().diagnostics;
        assert_eq!(diag.acceptance.len(), 3);
        for a in &diag.acceptance {
            assert!((0.1..0.7).contains(a), "acceptance {a}");
        }
        assert!(diag.warning.is_none());
    }
}
