//! Small numerical helpers: adaptive quadrature and sampling from a tabulated 1-D density.

use crate::error::{Error, Result};

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = simpson_step(f, a, b, fa, fm, fb, whole, tol, 50);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric("adaptive quadrature produced a non-finite value".into()))
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// `int_{-inf}^{inf} f` for an even integrand, via `x = t / (1 - t)` on `[0, 1)`.
pub fn integrate_even_real_line(f: &dyn Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let x = t / (1.0 - t);
        f(x) / ((1.0 - t) * (1.0 - t))
    };
    Ok(2.0 * adaptive_simpson(&g, 0.0, 1.0, tol / 2.0)?)
}

/// A 1-D density tabulated on a uniform grid, sampled by inverting its trapezoidal CDF.
#[derive(Clone, Debug)]
pub struct GridDensity {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl GridDensity {
    /// Tabulate `exp(log_density)` on `points` nodes spanning `[lo, hi]`.
    pub fn from_log_density(
        log_density: impl Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        points: usize,
    ) -> Result<Self> {
        if !(hi > lo) || points < 2 {
            return Err(Error::Numeric(format!("degenerate grid [{lo}, {hi}]")));
        }
        let step = (hi - lo) / (points - 1) as f64;
        let nodes: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
        let logs: Vec<f64> = nodes.iter().map(|&x| log_density(x)).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Numeric("grid density has no finite mass".into()));
        }
        let dens: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let mut cdf = Vec::with_capacity(points);
        cdf.push(0.0);
        for i in 1..points {
            let prev = cdf[i - 1];
            cdf.push(prev + 0.5 * step * (dens[i - 1] + dens[i]));
        }
        let total = *cdf.last().unwrap();
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { nodes, cdf })
    }

    /// Inverse CDF, linear between nodes.
    pub fn quantile(&self, u: f64) -> f64 {
        let j = self.cdf.partition_point(|&c| c < u).clamp(1, self.nodes.len() - 1);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.nodes[j - 1] + frac.clamp(0.0, 1.0) * (self.nodes[j] - self.nodes[j - 1])
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.nodes[0] {
            return 0.0;
        }
        if x >= *self.nodes.last().unwrap() {
            return 1.0;
        }
        let j = self.nodes.partition_point(|&v| v <= x).clamp(1, self.nodes.len() - 1);
        let frac = (x - self.nodes[j - 1]) / (self.nodes[j] - self.nodes[j - 1]);
        self.cdf[j - 1] + frac * (self.cdf[j] - self.cdf[j - 1])
    }

    /// Mean of the tabulated density (trapezoidal rule on `x dF`).
    pub fn mean(&self) -> f64 {
        self.nodes
            .windows(2)
            .zip(self.cdf.windows(2))
            .map(|(x, c)| 0.5 * (x[0] + x[1]) * (c[1] - c[0]))
            .sum()
    }
}
