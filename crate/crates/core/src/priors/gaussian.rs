use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    check_model, geometric_sigma, DrawMeta, ModelKind, Observation, PosteriorDraws,
    PosteriorSampler, PriorSpec, SamplerDiagnostics,
};
use crate::error::{Error, Result};
use crate::numeric::GridDensity;
use crate::rng::Stream;
use crate::sampling::WhiteNoiseObservation;
use crate::wavelet::CoefficientTree;

/// Nodes of the per-coordinate grid used for the uniform base law.
const GRID_POINTS: usize = 2049;

/// Law of the standardised coefficients `phi_lk` of a series prior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoefficientBase {
    Gaussian,
    /// Uniform on `[-B, B]`.
    Uniform(f64),
}

/// Product prior `f = sum_l sigma_l sum_k phi_lk psi_lk` in the white-noise model with
/// `sigma_l = 2^{-l(alpha + 1/2)}`.
///
/// With a Gaussian base each coordinate posterior is normal with mean
/// `n sigma_l^2 X_lk / (1 + n sigma_l^2)` and variance `sigma_l^2 / (1 + n sigma_l^2)`.
/// With a uniform base it is a normal truncated to `[-sigma_l B, sigma_l B]`, sampled by
/// inverting a tabulated CDF.
#[derive(Clone, Debug)]
pub struct SeriesPriorWN {
    pub smoothness: f64,
    pub base: CoefficientBase,
}

impl SeriesPriorWN {
    pub fn new(smoothness: f64, base: CoefficientBase) -> Result<Self> {
        if !(smoothness > 0.0) {
            return Err(Error::Validation(format!("smoothness must be > 0, got {smoothness}")));
        }
        if let CoefficientBase::Uniform(b) = base {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Validation(format!("uniform bound must be > 0, got {b}")));
            }
        }
        Ok(Self { smoothness, base })
    }

    pub fn from_spec(spec: &PriorSpec) -> Result<Self> {
        let smoothness = spec
            .smoothness
            .ok_or_else(|| Error::Config("gaussian_series prior needs `smoothness`".into()))?;
        let base = match spec.base.as_deref().unwrap_or("gaussian") {
            "gaussian" => CoefficientBase::Gaussian,
            "uniform" => CoefficientBase::Uniform(
                spec.bound
                    .ok_or_else(|| Error::Config("uniform base needs `bound`".into()))?,
            ),
            other => {
                return Err(Error::Unsupported(format!(
                    "base `{other}` for gaussian_series; the white-noise sampler supports \
                     gaussian and uniform (use log_density for log-Lipschitz)"
                )))
            }
        };
        Self::new(smoothness, base)
    }

    /// Prior scale at detail level `l`; the scaling coefficient uses `sigma_0`.
    pub fn sigma(&self, level: usize) -> f64 {
        geometric_sigma(self.smoothness, level)
    }

    /// Conjugate normal posterior `(mean, variance)` for one coordinate.
    pub fn conjugate(sigma: f64, n: u64, x: f64) -> (f64, f64) {
        let ns2 = n as f64 * sigma * sigma;
        (ns2 * x / (1.0 + ns2), sigma * sigma / (1.0 + ns2))
    }

    fn observation<'a>(&self, data: &'a Observation) -> Result<&'a WhiteNoiseObservation> {
        match data {
            Observation::WhiteNoise(o) => Ok(o),
            Observation::Iid(_) => Err(Error::Unsupported(
                "gaussian_series prior needs white-noise data".into(),
            )),
        }
    }

    fn truncated_grid(sigma: f64, bound: f64, n: u64, x: f64) -> Result<GridDensity> {
        let (lo, hi) = (-sigma * bound, sigma * bound);
        let sd = 1.0 / (n as f64).sqrt();
        let mut a = lo.max(x - 12.0 * sd);
        let mut b = hi.min(x + 12.0 * sd);
        if a >= b {
            // Observation far outside the support: mass piles up at the nearer edge with
            // exponential decay rate n |x - edge|.
            if x > hi {
                a = lo.max(hi - 40.0 / (n as f64 * (x - hi)));
                b = hi;
            } else {
                a = lo;
                b = hi.min(lo + 40.0 / (n as f64 * (lo - x)));
            }
        }
        let nf = n as f64;
        GridDensity::from_log_density(|f| -0.5 * nf * (f - x).powi(2), a, b, GRID_POINTS)
    }

    fn coordinate_sampler(&self, sigma: f64, n: u64, x: f64) -> Result<CoordinatePosterior> {
        Ok(match self.base {
            CoefficientBase::Gaussian => {
                let (m, v) = Self::conjugate(sigma, n, x);
                CoordinatePosterior::Normal(m, v.sqrt())
            }
            CoefficientBase::Uniform(b) => {
                CoordinatePosterior::Grid(Self::truncated_grid(sigma, b, n, x)?)
            }
        })
    }

    fn coordinates(&self, obs: &WhiteNoiseObservation) -> Result<Vec<CoordinatePosterior>> {
        let c = &obs.coeffs;
        let mut out = Vec::with_capacity(c.len());
        out.push(self.coordinate_sampler(self.sigma(0), obs.n, c.scaling())?);
        for l in 0..c.depth() {
            let s = self.sigma(l);
            for &x in c.level(l) {
                out.push(self.coordinate_sampler(s, obs.n, x)?);
            }
        }
        Ok(out)
    }
}

enum CoordinatePosterior {
    Normal(f64, f64),
    Grid(GridDensity),
}

impl CoordinatePosterior {
    fn draw(&self, rng: &mut Stream) -> f64 {
        match self {
            CoordinatePosterior::Normal(m, s) => m + s * rng.sample::<f64, _>(StandardNormal),
            CoordinatePosterior::Grid(g) => g.quantile(rng.random::<f64>()),
        }
    }

    fn mean(&self) -> f64 {
        match self {
            CoordinatePosterior::Normal(m, _) => *m,
            CoordinatePosterior::Grid(g) => g.mean(),
        }
    }
}

impl PosteriorSampler for SeriesPriorWN {
    fn name(&self) -> &str {
        "gaussian_series"
    }

    fn model(&self) -> Option<ModelKind> {
        Some(ModelKind::WhiteNoise)
    }

    fn max_level(&self, _n: u64, observed_levels: usize) -> Result<usize> {
        observed_levels
            .checked_sub(1)
            .ok_or_else(|| Error::Validation("white-noise observation has no detail levels".into()))
    }

    fn draws_densities(&self) -> bool {
        false
    }

    fn sample(&self, data: &Observation, draws: usize, rng: &mut Stream) -> Result<PosteriorDraws> {
        check_model(self, data)?;
        if draws == 0 {
            return Err(Error::Validation("need at least one posterior draw".into()));
        }
        let obs = self.observation(data)?;
        let coords = self.coordinates(obs)?;
        let depth = obs.coeffs.depth();
        let out = (0..draws)
            .map(|_| {
                let mut t = CoefficientTree::zeros(depth);
                t.set_scaling(coords[0].draw(rng));
                for (x, c) in t.detail_mut().iter_mut().zip(&coords[1..]) {
                    *x = c.draw(rng);
                }
                t
            })
            .collect();
        let base = match self.base {
            CoefficientBase::Gaussian => "gaussian".to_string(),
            CoefficientBase::Uniform(b) => format!("uniform({b})"),
        };
        Ok(PosteriorDraws::new(
            out,
            DrawMeta {
                prior: format!("gaussian_series(alpha={}, base={base})", self.smoothness),
                data_id: format!("white_noise(n={}, J={})", obs.n, depth.saturating_sub(1)),
                diagnostics: SamplerDiagnostics::default(),
            },
            false,
        ))
    }

    fn exact_mean(&self, data: &Observation) -> Result<Option<CoefficientTree>> {
        let obs = self.observation(data)?;
        let coords = self.coordinates(obs)?;
        let mut t = CoefficientTree::zeros(obs.coeffs.depth());
        t.set_scaling(coords[0].mean());
        for (x, c) in t.detail_mut().iter_mut().zip(&coords[1..]) {
            *x = c.mean();
        }
        Ok(Some(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::adaptive_simpson;
    use crate::priors::posterior_mean;
    use crate::rng;

    /// Posterior mean and variance of theta given X ~ N(theta, 1/n), theta ~ N(0, s^2), by
    /// direct 1-D integration of likelihood times prior.
    fn quadrature_posterior(sigma: f64, n: f64, x: f64) -> (f64, f64) {
        let dens = |t: f64| (-0.5 * n * (x - t).powi(2) - 0.5 * (t / sigma).powi(2)).exp();
        let (lo, hi) = (x - 20.0, x + 20.0);
        let z = adaptive_simpson(&dens, lo, hi, 1e-13).unwrap();
        let m1 = adaptive_simpson(&|t| t * dens(t), lo, hi, 1e-13).unwrap() / z;
        let m2 = adaptive_simpson(&|t| t * t * dens(t), lo, hi, 1e-13).unwrap() / z;
        (m1, m2 - m1 * m1)
    }

    #[test]
    fn conjugate_matches_quadrature() {
        let (m, v) = SeriesPriorWN::conjugate(1.0, 1, 2.0);
        assert_eq!((m, v), (1.0, 0.5));
        let (qm, qv) = quadrature_posterior(1.0, 1.0, 2.0);
        assert!((qm - m).abs() < 1e-6 && (qv - v).abs() < 1e-6);
        for &(s, n, x) in &[(0.3, 50.0, 0.1), (0.05, 4096.0, -0.02)] {
            let (m, v) = SeriesPriorWN::conjugate(s, n as u64, x);
            let (qm, qv) = quadrature_posterior(s, n, x);
            assert!((qm - m).abs() < 1e-6, "{qm} vs {m}");
            assert!((qv - v).abs() < 1e-6, "{qv} vs {v}");
        }
    }

    #[test]
    fn limits_of_conjugate_formula() {
        let (m, _) = SeriesPriorWN::conjugate(1.0, 1_000_000_000, 0.7);
        assert!((m - 0.7).abs() < 1e-8);
        let (m, v) = SeriesPriorWN::conjugate(1e-9, 100, 0.7);
        assert!(m.abs() < 1e-12 && v < 1e-17);
    }

    #[test]
    fn mc_mean_matches_closed_form() {
        let prior = SeriesPriorWN::new(0.5, CoefficientBase::Gaussian).unwrap();
        let mut f0 = CoefficientTree::with_max_level(2);
        f0.set(1, 0, 0.3);
        let obs = crate::sampling::observe_white_noise(&f0, 64, 2, &mut rng::stream(2)).unwrap();
        let data = Observation::WhiteNoise(obs);
        let d = prior.sample(&data, 20_000, &mut rng::stream(3)).unwrap();
        let mc = posterior_mean(&d).unwrap();
        let exact = prior.exact_mean(&data).unwrap().unwrap();
        for (a, b) in mc.iter_flat().zip(exact.iter_flat()) {
            // posterior sd <= 1/8, MC error <= 4 * 0.125 / sqrt(20000)
            assert!((a - b).abs() < 0.0036, "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_base_stays_in_support() {
        let prior = SeriesPriorWN::new(1.0, CoefficientBase::Uniform(1.0)).unwrap();
        let mut coeffs = CoefficientTree::with_max_level(2);
        coeffs.set(2, 3, 5.0);
        let data = Observation::WhiteNoise(WhiteNoiseObservation { n: 100, coeffs });
        let d = prior.sample(&data, 500, &mut rng::stream(5)).unwrap();
        let edge = prior.sigma(2);
        for t in d.draws() {
            assert!(t.get(2, 3).abs() <= edge + 1e-15);
            assert!(t.get(2, 3) > 0.5 * edge);
        }
    }

    #[test]
    fn rejects_iid_data_and_bad_base() {
        let prior = SeriesPriorWN::new(1.0, CoefficientBase::Gaussian).unwrap();
        let data = Observation::Iid(crate::sampling::IidSample::new(vec![0.5]).unwrap());
        assert!(matches!(
            prior.sample(&data, 3, &mut rng::stream(0)),
            Err(Error::Unsupported(_))
        ));
        let mut spec = PriorSpec::named("gaussian_series");
        spec.smoothness = Some(1.0);
        spec.base = Some("log_lipschitz".into());
        assert!(matches!(SeriesPriorWN::from_spec(&spec), Err(Error::Unsupported(_))));
    }
}
