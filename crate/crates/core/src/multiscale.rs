//! Multiscale sequence spaces: weight sequences, the `M(w)` norm, the multiscale statistic,
//! the `H(delta)` norm, projections onto `V_J` and the Gaussian limit processes.
//!
//! Levels `-1` (scaling) and `0` share the weight `w_0` and use divisor one in the multiscale
//! statistic.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::wavelet::{analyze, CoefficientTree, PiecewiseConstantFn};

/// Levels over which admissibility is probed.
pub const ADMISSIBILITY_PROBE: usize = 64;

/// Largest level for which the dense white-bridge covariance is factorised.
pub const MAX_BRIDGE_LEVEL: usize = 12;

/// A rule generating the weights `w_l`, `l >= 0`.
pub trait WeightRule: Send + Sync + fmt::Debug {
    /// Canonical spec string, e.g. `power(0.75)`.
    fn spec(&self) -> String;
    fn weight(&self, level: usize) -> f64;
}

#[derive(Debug)]
struct SqrtLog;

impl WeightRule for SqrtLog {
    fn spec(&self) -> String {
        "sqrt_log".into()
    }
    fn weight(&self, level: usize) -> f64 {
        let l = level as f64;
        ((l + 1.0).sqrt() * (l + std::f64::consts::E).ln()).max(1.0)
    }
}

#[derive(Debug)]
struct Sqrt;

impl WeightRule for Sqrt {
    fn spec(&self) -> String {
        "sqrt".into()
    }
    fn weight(&self, level: usize) -> f64 {
        ((level as f64) + 1.0).sqrt().max(1.0)
    }
}

#[derive(Debug)]
struct Power(f64);

impl WeightRule for Power {
    fn spec(&self) -> String {
        format!("power({})", self.0)
    }
    fn weight(&self, level: usize) -> f64 {
        ((level as f64) + 1.0).powf(self.0)
    }
}

type WeightBuilder = fn(Option<f64>) -> Result<Arc<dyn WeightRule>>;

/// Weight rules addressable by name. `name(param)` passes `param` to the builder.
pub struct WeightRegistry {
    builders: BTreeMap<&'static str, WeightBuilder>,
}

impl Default for WeightRegistry {
    fn default() -> Self {
        let mut reg = Self {
            builders: BTreeMap::new(),
        };
        reg.register("sqrt_log", |p| no_param("sqrt_log", p).map(|_| Arc::new(SqrtLog) as _));
        reg.register("sqrt", |p| no_param("sqrt", p).map(|_| Arc::new(Sqrt) as _));
        reg.register("power", |p| {
            let p = p.ok_or_else(|| Error::Validation("power(p) needs an exponent".into()))?;
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::Validation(format!(
                    "power exponent must be finite and >= 0, got {p}"
                )));
            }
            Ok(Arc::new(Power(p)) as _)
        });
        reg
    }
}

fn no_param(name: &str, p: Option<f64>) -> Result<()> {
    match p {
        None => Ok(()),
        Some(_) => Err(Error::Validation(format!("`{name}` takes no parameter"))),
    }
}

impl WeightRegistry {
    pub fn register(&mut self, name: &'static str, builder: WeightBuilder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(&self, spec: &str) -> Result<WeightSequence> {
        let spec = spec.trim();
        let (name, param) = match spec.find('(') {
            Some(open) if spec.ends_with(')') => {
                let raw = &spec[open + 1..spec.len() - 1];
                let value = raw.trim().parse::<f64>().map_err(|_| {
                    Error::Validation(format!("bad weight parameter `{raw}` in `{spec}`"))
                })?;
                (&spec[..open], Some(value))
            }
            Some(_) => return Err(Error::Validation(format!("malformed weight spec `{spec}`"))),
            None => (spec, None),
        };
        let builder = self
            .builders
            .get(name)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "weight sequence",
                name: name.to_string(),
                known: self.names().join(", "),
            })?;
        WeightSequence::new(builder(param)?)
    }
}

/// A weight sequence `(w_l)` together with its finite-range admissibility verdict.
#[derive(Clone, Debug)]
pub struct WeightSequence {
    rule: Arc<dyn WeightRule>,
    admissible: bool,
}

impl WeightSequence {
    /// Wrap a rule, checking `w_l >= 1` and monotonicity over the probe range.
    pub fn new(rule: Arc<dyn WeightRule>) -> Result<Self> {
        let mut prev = 0.0;
        for l in 0..=ADMISSIBILITY_PROBE {
            let w = rule.weight(l);
            if !(w >= 1.0 && w.is_finite()) {
                return Err(Error::Validation(format!(
                    "weight {} has w_{l} = {w} < 1",
                    rule.spec()
                )));
            }
            if w < prev {
                return Err(Error::Validation(format!(
                    "weight {} decreases at level {l}",
                    rule.spec()
                )));
            }
            prev = w;
        }
        // w_l / sqrt(l) strictly increasing on 1..=64; divergence itself cannot be probed.
        let ratios: Vec<f64> = (1..=ADMISSIBILITY_PROBE)
            .map(|l| rule.weight(l) / (l as f64).sqrt())
            .collect();
        let admissible = ratios.windows(2).all(|p| p[1] > p[0]);
        Ok(Self { rule, admissible })
    }

    pub fn parse(spec: &str) -> Result<Self> {
        WeightRegistry::default().build(spec)
    }

    /// The default `sqrt_log` sequence.
    pub fn sqrt_log() -> Self {
        Self::new(Arc::new(SqrtLog)).expect("sqrt_log is valid")
    }

    pub fn spec(&self) -> String {
        self.rule.spec()
    }

    pub fn is_admissible(&self) -> bool {
        self.admissible
    }

    /// `w_l` for detail level `l`; the scaling level uses `w_0`.
    #[inline]
    pub fn weight(&self, level: usize) -> f64 {
        self.rule.weight(level)
    }
}

/// `||x||_{M(w)} = sup_l max_k |x_{lk}| / w_l` over the stored levels.
pub fn multiscale_norm(c: &CoefficientTree, w: &WeightSequence) -> f64 {
    multiscale_norm_upto(c, w, c.depth())
}

/// Multiscale norm restricted to the scaling coefficient and detail levels `< depth`.
pub fn multiscale_norm_upto(c: &CoefficientTree, w: &WeightSequence, depth: usize) -> f64 {
    let mut best = c.scaling().abs() / w.weight(0);
    for l in 0..depth.min(c.depth()) {
        let m = max_abs(c.level(l));
        best = best.max(m / w.weight(l));
    }
    best
}

#[inline]
pub(crate) fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Multiscale statistic `Z_J = max_{l <= J, k} |x_{lk}| / sqrt(l)`; levels `-1` and `0` use
/// divisor one.
pub fn multiscale_statistic(c: &CoefficientTree, max_level: usize) -> Result<f64> {
    if c.max_level().is_none_or(|m| max_level > m) {
        return Err(Error::Dimension(format!(
            "statistic up to level {max_level} but tree stores {} levels",
            c.depth()
        )));
    }
    let mut z = c.scaling().abs();
    for l in 0..=max_level {
        let div = if l == 0 { 1.0 } else { (l as f64).sqrt() };
        z = z.max(max_abs(c.level(l)) / div);
    }
    Ok(z)
}

/// `||f||_{H(delta)} = (sum_l 2^-l l^{-2 delta} sum_k x_{lk}^2)^{1/2}`.
///
/// The scaling coefficient and level `0` enter with unit factor.
pub fn h_delta_norm(c: &CoefficientTree, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Validation(format!("delta must be > 0, got {delta}")));
    }
    let mut acc = c.scaling().powi(2);
    for l in 0..c.depth() {
        let ss: f64 = c.level(l).iter().map(|x| x * x).sum();
        let factor = if l == 0 {
            1.0
        } else {
            (0.5f64).powi(l as i32) * (l as f64).powf(-2.0 * delta)
        };
        acc += factor * ss;
    }
    Ok(acc.sqrt())
}

/// Constant `C = (sum_{l <= J} w_l^2 l^{-2 delta})^{1/2}` with `||.||_{H(delta)} <= C ||.||_{M(w)}`
/// for trees with levels `< depth` (levels `-1` and `0` contribute `w_0^2` each).
pub fn h_delta_embedding_constant(w: &WeightSequence, delta: f64, depth: usize) -> f64 {
    let mut acc = w.weight(0).powi(2);
    for l in 0..depth {
        let factor = if l == 0 {
            1.0
        } else {
            (l as f64).powf(-2.0 * delta)
        };
        acc += w.weight(l).powi(2) * factor;
    }
    acc.sqrt()
}

/// Projection onto `V_J`: levels above `max_level` are zeroed, storage depth is kept.
pub fn project(c: &CoefficientTree, max_level: usize) -> CoefficientTree {
    let mut out = c.clone();
    for l in (max_level + 1)..c.depth() {
        out.level_mut(l).iter_mut().for_each(|x| *x = 0.0);
    }
    out
}

/// Gaussian limit processes on the Haar coefficients.
#[derive(Clone, Debug)]
pub enum GaussianProcessKind {
    /// i.i.d. `N(0, 1)` coefficients.
    WhiteNoise,
    /// The `P`-white bridge for a step density bounded away from zero.
    WhiteBridge(PiecewiseConstantFn),
}

/// Sampler for one process truncated to detail levels `0..=max_level`.
///
/// For the white bridge the covariance
/// `Cov(psi_a, psi_b) = int psi_a psi_b f - (int psi_a f)(int psi_b f)` is assembled exactly
/// and factorised once; draws are then `L z`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    depth: usize,
    factor: Option<DMatrix<f64>>,
}

impl GaussianSampler {
    pub fn new(kind: &GaussianProcessKind, max_level: usize) -> Result<Self> {
        let depth = max_level + 1;
        match kind {
            GaussianProcessKind::WhiteNoise => Ok(Self {
                depth,
                factor: None,
            }),
            GaussianProcessKind::WhiteBridge(f) => {
                if max_level > MAX_BRIDGE_LEVEL {
                    return Err(Error::Unsupported(format!(
                        "dense white-bridge sampling is capped at level {MAX_BRIDGE_LEVEL}; \
                         for the CDF process use the Brownian bridge composed with F_0"
                    )));
                }
                f.validate_density()?;
                if f.min_height() <= 0.0 {
                    return Err(Error::Validation(
                        "white bridge needs a density bounded away from zero".into(),
                    ));
                }
                let cov = bridge_covariance(f, max_level)?;
                Ok(Self {
                    depth,
                    factor: Some(cholesky_with_jitter(cov)?),
                })
            }
        }
    }

    pub fn max_level(&self) -> usize {
        self.depth - 1
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CoefficientTree {
        let mut tree = CoefficientTree::zeros(self.depth);
        match &self.factor {
            None => {
                tree.set_scaling(rng.sample(StandardNormal));
                for x in tree.detail_mut() {
                    *x = rng.sample(StandardNormal);
                }
            }
            Some(lower) => {
                // Constants are annihilated by the bridge, so the scaling coordinate is zero.
                let dim = lower.nrows();
                let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = lower * z;
                tree.detail_mut().copy_from_slice(x.as_slice());
            }
        }
        tree
    }
}

/// One draw of the process truncated at `max_level`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    kind: &GaussianProcessKind,
    max_level: usize,
    rng: &mut R,
) -> Result<CoefficientTree> {
    Ok(GaussianSampler::new(kind, max_level)?.sample(rng))
}

/// Exact covariance of the white bridge on the detail coefficients with levels `<= max_level`.
pub fn bridge_covariance(f: &PiecewiseConstantFn, max_level: usize) -> Result<DMatrix<f64>> {
    let depth = max_level + 1;
    let fine = f.refine(f.level().max(depth))?;
    // m_a = int psi_a f for every detail index a.
    let means = analyze(&fine).resized(depth);
    // Mass of f on every dyadic cell at levels 0..depth, same flat layout as the tree.
    let width = fine.cell_width();
    let mut mass_levels: Vec<Vec<f64>> = vec![fine.heights().iter().map(|h| h * width).collect()];
    while mass_levels.last().unwrap().len() > 1 {
        let last = mass_levels.last().unwrap();
        mass_levels.push(last.chunks_exact(2).map(|p| p[0] + p[1]).collect());
    }
    let cell_mass = |l: usize, k: usize| mass_levels[fine.level() - l][k];

    let index = |l: usize, k: usize| (1usize << l) - 1 + k;
    let m = DVector::from_column_slice(means.detail());
    let mut cov = -(&m * m.transpose());
    // Add E[psi_a psi_b f], nonzero only for nested supports.
    for l in 0..depth {
        let amp = (2f64).powf(l as f64 / 2.0);
        for k in 0..(1usize << l) {
            let a = index(l, k);
            cov[(a, a)] += (1u64 << l) as f64 * cell_mass(l, k);
            for l2 in (l + 1)..depth {
                let shift = l2 - l;
                let first = k << shift;
                for k2 in first..first + (1usize << shift) {
                    let b = index(l2, k2);
                    // psi_a is constant on supp psi_b, positive on its left half.
                    let sign = if (k2 >> (shift - 1)) & 1 == 0 { 1.0 } else { -1.0 };
                    let v = sign * amp * means.get(l2, k2);
                    cov[(a, b)] += v;
                    cov[(b, a)] += v;
                }
            }
        }
    }
    Ok(cov)
}

fn cholesky_with_jitter(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for jitter in [0.0, 1e-14, 1e-12, 1e-10] {
        let mut m = cov.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter * scale;
        }
        if let Some(ch) = m.cholesky() {
            return Ok(ch.l());
        }
    }
    let min_diag = cov.diagonal().iter().copied().fold(f64::INFINITY, f64::min);
    Err(Error::Numeric(format!(
        "covariance of dimension {} not positive definite after jitter up to 1e-10 \
         (min diagonal {min_diag:e}, max diagonal {scale:e})",
        cov.nrows()
    )))
}
