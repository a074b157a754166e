//! Observation models: the Gaussian white-noise sequence model and i.i.d. sampling from a
//! step density, with the empirical objects built from them.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::{
    analyze, dyadic_cell, CoefficientTree, PiecewiseConstantFn, PiecewiseLinearCdf,
};

/// `X_{lk} = f0_{lk} + g_{lk} / sqrt(n)` for detail levels `0..=J` and the scaling coefficient.
#[derive(Clone, Debug)]
pub struct WhiteNoiseObservation {
    pub n: u64,
    pub coeffs: CoefficientTree,
}

pub fn observe_white_noise<R: Rng + ?Sized>(
    f0: &CoefficientTree,
    n: u64,
    max_level: usize,
    rng: &mut R,
) -> Result<WhiteNoiseObservation> {
    if n == 0 {
        return Err(Error::Validation("white-noise model needs n >= 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let mut coeffs = f0.resized(max_level + 1);
    let g: f64 = rng.sample(StandardNormal);
    coeffs.set_scaling(coeffs.scaling() + scale * g);
    for x in coeffs.detail_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *x += scale * g;
    }
    Ok(WhiteNoiseObservation { n, coeffs })
}

/// Points of an i.i.d. sample on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IidSample {
    points: Vec<f64>,
}

impl IidSample {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if let Some(x) = points.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Validation(format!("sample point {x} outside [0, 1]")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Bin counts on the dyadic cells of `level`.
    pub fn counts(&self, level: usize) -> Vec<u64> {
        let mut counts = vec![0u64; 1 << level];
        for &x in &self.points {
            counts[dyadic_cell(x, level)] += 1;
        }
        counts
    }

    /// Read a one-column CSV (optional header `x`).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 1 {
                return Err(Error::Validation(format!(
                    "line {}: expected one column, got {}",
                    i + 1,
                    rec.len()
                )));
            }
            let field = &rec[0];
            match field.parse::<f64>() {
                Ok(v) => points.push(v),
                Err(_) if i == 0 => continue,
                Err(_) => {
                    return Err(Error::Validation(format!(
                        "line {}: `{field}` is not a number",
                        i + 1
                    )))
                }
            }
        }
        Self::new(points)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["x"])?;
        for x in &self.points {
            wtr.write_record([x.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `n` i.i.d. draws from a step density by exact inversion of its piecewise-linear CDF.
pub fn sample_iid<R: Rng + ?Sized>(
    f: &PiecewiseConstantFn,
    n: usize,
    rng: &mut R,
) -> Result<IidSample> {
    f.validate_density()?;
    let sampler = InverseCdf::new(f);
    let points = (0..n).map(|_| sampler.quantile(rng.random::<f64>())).collect();
    Ok(IidSample { points })
}

/// Inverse of the CDF of a step density.
#[derive(Clone, Debug)]
pub struct InverseCdf {
    cumulative: Vec<f64>,
    heights: Vec<f64>,
    width: f64,
}

impl InverseCdf {
    pub fn new(f: &PiecewiseConstantFn) -> Self {
        let width = f.cell_width();
        let mut cumulative = Vec::with_capacity(f.heights().len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for h in f.heights() {
            acc += h * width;
            cumulative.push(acc);
        }
        Self {
            cumulative,
            heights: f.heights().to_vec(),
            width,
        }
    }

    /// `F^{-1}(u)` for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let cells = self.heights.len();
        // First cell whose right endpoint mass exceeds u; zero-mass cells are skipped.
        let j = self.cumulative[1..]
            .partition_point(|&c| c <= u)
            .min(cells - 1);
        let h = self.heights[j];
        let left = j as f64 * self.width;
        if h <= 0.0 {
            return left;
        }
        (left + (u - self.cumulative[j]) / h).clamp(0.0, 1.0)
    }
}

/// Coefficients of the projected empirical measure `P_n(J)`: `n^-1 sum psi_{lk}(X_i)` for
/// `l <= J`.
pub fn empirical_coefficients(s: &IidSample, max_level: usize) -> Result<CoefficientTree> {
    if s.is_empty() {
        return Err(Error::Validation("empirical coefficients need n >= 1".into()));
    }
    // Every psi_{lk} with l <= J is constant on the cells of level J + 1.
    let level = max_level + 1;
    let scale = (1u64 << level) as f64 / s.len() as f64;
    let heights = s.counts(level).iter().map(|&c| c as f64 * scale).collect();
    Ok(analyze(&PiecewiseConstantFn::new(level, heights)?))
}

/// Histogram of the sample on the cells of `level`, as a density.
pub fn empirical_histogram(s: &IidSample, level: usize) -> Result<PiecewiseConstantFn> {
    if s.is_empty() {
        return Err(Error::Validation("empirical histogram needs n >= 1".into()));
    }
    let scale = (1u64 << level) as f64 / s.len() as f64;
    PiecewiseConstantFn::new(level, s.counts(level).iter().map(|&c| c as f64 * scale).collect())
}

/// Right-continuous empirical distribution function.
#[derive(Clone, Debug)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(s: &IidSample) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::Validation("empirical CDF of an empty sample".into()));
        }
        let mut sorted = s.points().to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    /// `#{X_i <= t} / n`.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= t) as f64 / self.n() as f64
    }

    /// `sup_t |F(t) - F_n(t)|` for a continuous piecewise-linear `F`, exact.
    ///
    /// Between consecutive jumps `F_n` is constant and `F` is linear between its knots, so the
    /// supremum is attained at a knot of `F` or as a one-sided limit at a jump of `F_n`.
    pub fn sup_distance(&self, cdf: &PiecewiseLinearCdf) -> f64 {
        let n = self.n() as f64;
        let mut best = 0.0f64;
        let mut i = 0;
        while i < self.sorted.len() {
            let x = self.sorted[i];
            let mut j = i;
            while j < self.sorted.len() && self.sorted[j] == x {
                j += 1;
            }
            let fx = cdf.evaluate(x);
            best = best.max((fx - i as f64 / n).abs()).max((fx - j as f64 / n).abs());
            i = j;
        }
        let cells = 1usize << cdf.level();
        for (k, v) in cdf.knots().iter().enumerate() {
            let t = k as f64 / cells as f64;
            best = best.max((v - self.evaluate(t)).abs());
        }
        // Value of F_n at 0 is covered by the knot t = 0; F_n below 0 is 0 and F(0) is a knot.
        best
    }
}

/// Rule choosing the cut-off level from the sample size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CutoffRule {
    /// Largest `j` with `2^j <= n^{1/(2 alpha + 1)}`.
    Jn { alpha: f64 },
    /// Largest `l` with `2^l <= (n / ln n)^{1/(2 alpha + 1)}`.
    Ln { alpha: f64 },
    /// Fixed level regardless of `n`.
    Fixed { level: usize },
}

/// Cut-off level for `n` observations (`n >= 2`).
pub fn cutoff(rule: CutoffRule, n: u64) -> Result<usize> {
    if n < 2 {
        return Err(Error::Validation(format!("cut-off needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let (log_target, alpha) = match rule {
        CutoffRule::Fixed { level } => return Ok(level),
        CutoffRule::Jn { alpha } => (nf.ln(), alpha),
        CutoffRule::Ln { alpha } => ((nf / nf.ln()).ln(), alpha),
    };
    if !(alpha > 0.0) {
        return Err(Error::Validation(format!("cut-off smoothness must be > 0, got {alpha}")));
    }
    let bound = log_target / (2.0 * alpha + 1.0) / std::f64::consts::LN_2;
    // Tolerance so exact powers of two are not lost to rounding.
    Ok((bound + 1e-12).floor().max(0.0) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn inverse_cdf_example() {
        let f = PiecewiseConstantFn::density(1, vec![2.0, 0.0]).unwrap();
        let inv = InverseCdf::new(&f);
        assert_eq!(inv.quantile(0.25), 0.125);
        assert!(inv.quantile(0.999) <= 0.5);
    }

    #[test]
    fn inverse_cdf_skips_empty_cells() {
        let f = PiecewiseConstantFn::density(2, vec![0.0, 2.0, 0.0, 2.0]).unwrap();
        let inv = InverseCdf::new(&f);
        assert_eq!(inv.quantile(0.0), 0.25);
        assert_eq!(inv.quantile(0.5), 0.75);
    }

    #[test]
    fn uniform_sample_mean() {
        let s = sample_iid(&PiecewiseConstantFn::uniform(), 100_000, &mut rng::stream(3)).unwrap();
        let mean = s.points().iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 0.5).abs() < 0.005);
        let empty = sample_iid(&PiecewiseConstantFn::uniform(), 0, &mut rng::stream(3)).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn sample_rejects_non_density() {
        let f = PiecewiseConstantFn::new(1, vec![1.0, 0.5]).unwrap();
        assert!(sample_iid(&f, 10, &mut rng::stream(0)).is_err());
    }

    #[test]
    fn empirical_coefficients_single_point() {
        let s = IidSample::new(vec![0.25]).unwrap();
        let c = empirical_coefficients(&s, 3).unwrap();
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.scaling(), 1.0);
        assert!(empirical_coefficients(&IidSample::new(vec![]).unwrap(), 2).is_err());
    }

    #[test]
    fn empirical_coefficients_match_direct_sum() {
        let s = sample_iid(&PiecewiseConstantFn::uniform(), 37, &mut rng::stream(5)).unwrap();
        let c = empirical_coefficients(&s, 3).unwrap();
        for l in 0..4 {
            for k in 0..(1usize << l) {
                let direct: f64 = s
                    .points()
                    .iter()
                    .map(|&x| crate::wavelet::haar_value(l, k, x))
                    .sum::<f64>()
                    / 37.0;
                assert!((c.get(l, k) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empirical_cdf_examples() {
        let s = IidSample::new(vec![0.5]).unwrap();
        let ecdf = EmpiricalCdf::new(&s).unwrap();
        let uni = PiecewiseConstantFn::uniform().primitive();
        assert!((ecdf.sup_distance(&uni) - 0.5).abs() < 1e-15);
        assert_eq!(ecdf.evaluate(1.0), 1.0);
        assert!(EmpiricalCdf::new(&IidSample::new(vec![]).unwrap()).is_err());
    }

    #[test]
    fn empirical_cdf_sup_matches_dense_scan() {
        let f = PiecewiseConstantFn::density(2, vec![0.4, 1.6, 1.2, 0.8]).unwrap();
        let s = sample_iid(&f, 50, &mut rng::stream(9)).unwrap();
        let ecdf = EmpiricalCdf::new(&s).unwrap();
        let cdf = f.primitive();
        let exact = ecdf.sup_distance(&cdf);
        // Scan a dense grid plus points just left of each observation.
        let mut scan = 0.0f64;
        for i in 0..=100_000 {
            let t = i as f64 / 100_000.0;
            scan = scan.max((cdf.evaluate(t) - ecdf.evaluate(t)).abs());
        }
        for &x in s.points() {
            let t = x - 1e-12;
            scan = scan.max((cdf.evaluate(t) - ecdf.evaluate(t)).abs());
        }
        assert!(exact >= scan - 1e-9);
        assert!(exact - scan < 1e-6);
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff(CutoffRule::Jn { alpha: 1.0 }, 1000).unwrap(), 3);
        assert_eq!(cutoff(CutoffRule::Ln { alpha: 1.0 }, 1000).unwrap(), 2);
        assert_eq!(cutoff(CutoffRule::Jn { alpha: 0.5 }, 4096).unwrap(), 6);
        assert!(cutoff(CutoffRule::Jn { alpha: 1.0 }, 1).is_err());
        let mut prev = (0, 0);
        for e in 2..=6 {
            let n = 10u64.pow(e);
            let j = cutoff(CutoffRule::Jn { alpha: 0.75 }, n).unwrap();
            let l = cutoff(CutoffRule::Ln { alpha: 0.75 }, n).unwrap();
            assert!(j >= prev.0 && l >= prev.1);
            prev = (j, l);
        }
    }

    #[test]
    fn white_noise_observation_is_seeded() {
        let f0 = CoefficientTree::with_max_level(4);
        let a = observe_white_noise(&f0, 100, 4, &mut rng::stream(1)).unwrap();
        let b = observe_white_noise(&f0, 100, 4, &mut rng::stream(1)).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
        assert!(observe_white_noise(&f0, 0, 4, &mut rng::stream(1)).is_err());
    }

    #[test]
    fn sample_csv_round_trip() {
        let s = IidSample::new(vec![0.0, 0.125, 1.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(IidSample::read_csv(buf.as_slice()).unwrap(), s);
        assert!(IidSample::read_csv("x\n1.5\n".as_bytes()).is_err());
    }
}
