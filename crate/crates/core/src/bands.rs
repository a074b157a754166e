//! Credible sets built from posterior draws: multiscale balls, their intersection with a
//! Hölder ball, and sup-norm bands for distribution functions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::multiscale::{multiscale_norm_upto, WeightSequence};
use crate::priors::PosteriorDraws;
use crate::sampling::EmpiricalCdf;
use crate::wavelet::{holder_norm, synthesize, CoefficientTree, PiecewiseLinearCdf};

/// Order statistic `ceil((1 - alpha) m)` of the values (1-based), the conservative upper
/// empirical quantile.
pub fn upper_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Validation(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if values.is_empty() {
        return Err(Error::Validation("quantile of an empty set".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN among quantile inputs".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    // the offset guards (1 - alpha) m landing a hair above an integer
    let k = (((1.0 - alpha) * m) - 1e-9).ceil().max(1.0) as usize;
    Ok(v[k.min(v.len()) - 1])
}

/// Minimum number of draws for a `1 - alpha` radius.
pub fn required_draws(alpha: f64) -> usize {
    (20.0 / alpha - 1e-9).ceil() as usize
}

fn check_draw_count(m: usize, alpha: f64) -> Result<()> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Validation(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let required = required_draws(alpha);
    if m < required {
        return Err(Error::TooFewDraws {
            required,
            got: m,
            alpha,
        });
    }
    Ok(())
}

/// `sqrt(n) ||draw - centring||_{M(w)}` over the scaling coefficient and levels `<= max_level`,
/// one value per draw.
pub fn posterior_statistics(
    d: &PosteriorDraws,
    centring: &CoefficientTree,
    w: &WeightSequence,
    n: u64,
    max_level: usize,
) -> Vec<f64> {
    let root_n = (n as f64).sqrt();
    d.draws()
        .iter()
        .map(|t| root_n * multiscale_norm_upto(&t.difference(centring), w, max_level + 1))
        .collect()
}

/// Radius `R_n`: upper `1 - alpha` quantile of the posterior multiscale statistics.
pub fn credible_radius(
    d: &PosteriorDraws,
    centring: &CoefficientTree,
    w: &WeightSequence,
    alpha: f64,
    n: u64,
    max_level: usize,
) -> Result<f64> {
    check_draw_count(d.len(), alpha)?;
    upper_quantile(&posterior_statistics(d, centring, w, n, max_level), alpha)
}

/// Hölder ball `{ f : ||f||_{C^gamma} <= u_n }` intersected with a multiscale band. Levels
/// from `j_n` on are controlled by this constraint alone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HolderConstraint {
    pub gamma: f64,
    pub u_n: f64,
    pub j_n: usize,
}

impl HolderConstraint {
    /// Radius `u_n = w_{j_n} / sqrt(j_n)` unless given explicitly.
    pub fn new(gamma: f64, j_n: usize, w: &WeightSequence, u_n: Option<f64>) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Validation(format!("Hölder exponent must be > 0, got {gamma}")));
        }
        if j_n == 0 && u_n.is_none() {
            return Err(Error::Validation("default u_n needs j_n >= 1".into()));
        }
        let u_n = u_n.unwrap_or_else(|| w.weight(j_n) / (j_n as f64).sqrt());
        if !(u_n >= 0.0) {
            return Err(Error::Validation(format!("u_n must be >= 0, got {u_n}")));
        }
        Ok(Self { gamma, u_n, j_n })
    }
}

/// Multiscale credible ball `{ f : max_{l <= L, k} |f_lk - T_lk| / w_l <= R_n / sqrt(n) }`,
/// optionally intersected with a Hölder ball.
#[derive(Clone, Debug)]
pub struct CredibleBand {
    pub centring: CoefficientTree,
    pub centring_id: String,
    pub weights: WeightSequence,
    pub radius: f64,
    pub alpha: f64,
    pub n: u64,
    /// Highest constrained detail level `L`.
    pub max_level: usize,
    pub holder: Option<HolderConstraint>,
}

impl CredibleBand {
    /// Band whose radius is calibrated on the posterior draws.
    pub fn from_draws(
        d: &PosteriorDraws,
        centring: CoefficientTree,
        centring_id: impl Into<String>,
        weights: WeightSequence,
        alpha: f64,
        n: u64,
        max_level: usize,
    ) -> Result<Self> {
        let radius = credible_radius(d, &centring, &weights, alpha, n, max_level)?;
        Ok(Self {
            centring,
            centring_id: centring_id.into(),
            weights,
            radius,
            alpha,
            n,
            max_level,
            holder: None,
        })
    }

    pub fn with_holder(mut self, holder: HolderConstraint) -> Self {
        self.holder = Some(holder);
        self
    }

    /// Membership in the multiscale ball alone.
    pub fn ball_contains(&self, f: &CoefficientTree) -> bool {
        let dist = multiscale_norm_upto(&f.difference(&self.centring), &self.weights, self.max_level + 1);
        (self.n as f64).sqrt() * dist <= self.radius
    }

    /// Membership in the band, including the Hölder constraint when present.
    pub fn contains(&self, f: &CoefficientTree) -> bool {
        self.ball_contains(f)
            && self
                .holder
                .is_none_or(|h| holder_norm(f, h.gamma) <= h.u_n)
    }

    /// Upper bound on the sup-norm diameter of the Hölder-intersected band.
    ///
    /// Two members differ by at most `2 w_l R_n / sqrt(n)` per coefficient on levels `<= L`
    /// and by `2 u_n 2^{-l(gamma + 1/2)}` above, and `||h||_inf <= sum_l 2^{l/2} max_k |h_lk|`.
    /// The low-frequency sum covers levels `-1..=L`, the geometric tail starts at `j_n = L + 1`.
    pub fn diameter_bound(&self) -> Result<f64> {
        let h = self
            .holder
            .ok_or_else(|| Error::Validation("diameter bound needs a Hölder constraint".into()))?;
        let step = 2.0 * self.radius / (self.n as f64).sqrt();
        let mut low = self.weights.weight(0) * step;
        for l in 0..=self.max_level {
            low += (2f64).powf(l as f64 / 2.0) * self.weights.weight(l) * step;
        }
        let j = (self.max_level + 1) as f64;
        let ratio = (2f64).powf(-h.gamma);
        let tail = 2.0 * h.u_n * ratio.powf(j) / (1.0 - ratio);
        Ok(low + tail)
    }

    pub fn summary(&self) -> BandSummary {
        BandSummary {
            centring_id: self.centring_id.clone(),
            weights: self.weights.spec(),
            r_n: self.radius,
            alpha: self.alpha,
            holder: self.holder,
            diameter_bound: self.diameter_bound().ok(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BandSummary {
    pub centring_id: String,
    pub weights: String,
    #[serde(rename = "R_n")]
    pub r_n: f64,
    pub alpha: f64,
    pub holder: Option<HolderConstraint>,
    pub diameter_bound: Option<f64>,
}

/// Centre of a distribution-function band.
#[derive(Clone, Debug)]
pub enum CdfCentring {
    /// The empirical distribution function `F_n`.
    Empirical(EmpiricalCdf),
    /// A continuous piecewise-linear CDF, e.g. the primitive of the histogram centring.
    Linear(PiecewiseLinearCdf),
}

impl CdfCentring {
    pub fn sup_distance(&self, cdf: &PiecewiseLinearCdf) -> f64 {
        match self {
            CdfCentring::Empirical(e) => e.sup_distance(cdf),
            CdfCentring::Linear(g) => g.sup_distance(cdf),
        }
    }
}

/// Exact CDF of a density draw.
pub fn draw_cdf(t: &CoefficientTree) -> Result<PiecewiseLinearCdf> {
    Ok(synthesize(t, t.depth())?.primitive())
}

/// `sqrt(n) ||F - centring||_inf` for every draw `F`.
pub fn ks_statistic(d: &PosteriorDraws, centring: &CdfCentring, n: u64) -> Result<Vec<f64>> {
    if !d.are_densities() {
        return Err(Error::Validation("CDF statistics need density draws".into()));
    }
    let root_n = (n as f64).sqrt();
    d.draws()
        .iter()
        .map(|t| Ok(root_n * centring.sup_distance(&draw_cdf(t)?)))
        .collect()
}

/// Sup-norm credible band for the distribution function.
#[derive(Clone, Debug)]
pub struct CdfBand {
    pub centring: CdfCentring,
    pub radius: f64,
    pub alpha: f64,
    pub n: u64,
}

impl CdfBand {
    pub fn contains(&self, cdf: &PiecewiseLinearCdf) -> bool {
        (self.n as f64).sqrt() * self.centring.sup_distance(cdf) <= self.radius
    }
}

pub fn cdf_band(d: &PosteriorDraws, centring: CdfCentring, alpha: f64, n: u64) -> Result<CdfBand> {
    check_draw_count(d.len(), alpha)?;
    let radius = upper_quantile(&ks_statistic(d, &centring, n)?, alpha)?;
    Ok(CdfBand {
        centring,
        radius,
        alpha,
        n,
    })
}
