//! Haar basis on `[0, 1]`, dyadic coefficient trees and piecewise-constant functions.
//!
//! Basis convention: `psi_{-1,0} = 1_[0,1]` (the scaling coefficient) and
//! `psi_{lk} = 2^{l/2} (1_{(k/2^l, (k+1/2)/2^l]} - 1_{((k+1/2)/2^l, (k+1)/2^l]})` for
//! `l >= 0`, `k < 2^l`. Cells are left-open, right-closed, except that `x = 0` belongs to
//! the first cell.

use crate::error::{Error, Result};

/// Index of the dyadic cell at `level` containing `x`.
///
/// Cells are `I_0 = [0, 2^-level]` and `I_k = (k 2^-level, (k+1) 2^-level]`. Points outside
/// `[0, 1]` are clamped to the boundary cells.
#[inline]
pub fn dyadic_cell(x: f64, level: usize) -> usize {
    let cells = 1usize << level;
    if x <= 0.0 {
        return 0;
    }
    // x * 2^level is exact in binary floating point.
    let scaled = (x * cells as f64).ceil();
    if scaled < 1.0 {
        0
    } else {
        ((scaled as usize) - 1).min(cells - 1)
    }
}

/// Value of the Haar wavelet `psi_{lk}` at `x`. Midpoints go to the positive (left) branch.
pub fn haar_value(level: usize, k: usize, x: f64) -> f64 {
    let cell = dyadic_cell(x, level + 1);
    if cell / 2 != k {
        return 0.0;
    }
    let amp = (2f64).powf(level as f64 / 2.0);
    if cell.is_multiple_of(2) {
        amp
    } else {
        -amp
    }
}

/// Dyadic wavelet coefficients up to a maximal level, stored level-major in one flat array.
///
/// Entry `(l, k)` lives at `2^l - 1 + k` of the detail array; the scaling coefficient is
/// kept separately.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTree {
    scaling: f64,
    detail: Vec<f64>,
    depth: usize,
}

impl CoefficientTree {
    /// All-zero tree carrying `depth` detail levels (levels `0..depth`).
    pub fn zeros(depth: usize) -> Self {
        Self {
            scaling: 0.0,
            detail: vec![0.0; (1usize << depth) - 1],
            depth,
        }
    }

    /// Zero tree with detail levels `0..=max_level`.
    pub fn with_max_level(max_level: usize) -> Self {
        Self::zeros(max_level + 1)
    }

    pub fn from_parts(scaling: f64, detail: Vec<f64>) -> Result<Self> {
        let len = detail.len() + 1;
        if !len.is_power_of_two() {
            return Err(Error::Dimension(format!(
                "detail array of length {} is not 2^d - 1",
                detail.len()
            )));
        }
        if !scaling.is_finite() || detail.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("coefficients must be finite".into()));
        }
        Ok(Self {
            scaling,
            detail,
            depth: len.trailing_zeros() as usize,
        })
    }

    /// Number of stored detail levels.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Highest stored detail level, `None` when only the scaling coefficient is present.
    pub fn max_level(&self) -> Option<usize> {
        self.depth.checked_sub(1)
    }

    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    pub fn set_scaling(&mut self, v: f64) {
        self.scaling = v;
    }

    #[inline]
    pub fn get(&self, level: usize, k: usize) -> f64 {
        debug_assert!(level < self.depth && k < (1 << level));
        self.detail[(1 << level) - 1 + k]
    }

    #[inline]
    pub fn set(&mut self, level: usize, k: usize, v: f64) {
        debug_assert!(level < self.depth && k < (1 << level));
        self.detail[(1 << level) - 1 + k] = v;
    }

    #[inline]
    pub fn level(&self, level: usize) -> &[f64] {
        let start = (1 << level) - 1;
        &self.detail[start..start + (1 << level)]
    }

    #[inline]
    pub fn level_mut(&mut self, level: usize) -> &mut [f64] {
        let start = (1 << level) - 1;
        &mut self.detail[start..start + (1 << level)]
    }

    pub fn detail(&self) -> &[f64] {
        &self.detail
    }

    pub fn detail_mut(&mut self) -> &mut [f64] {
        &mut self.detail
    }

    /// Number of coefficients including the scaling one.
    pub fn len(&self) -> usize {
        self.detail.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Scaling coefficient followed by the detail levels in level-major order.
    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.scaling).chain(self.detail.iter().copied())
    }

    /// Copy with `depth` detail levels, zero padded or truncated.
    pub fn resized(&self, depth: usize) -> Self {
        let mut out = Self::zeros(depth);
        out.scaling = self.scaling;
        let n = out.detail.len().min(self.detail.len());
        out.detail[..n].copy_from_slice(&self.detail[..n]);
        out
    }

    /// `self - other`, padding the shallower tree with zeros.
    pub fn difference(&self, other: &Self) -> Self {
        let depth = self.depth.max(other.depth);
        let mut out = self.resized(depth);
        out.scaling -= other.scaling;
        for (o, v) in out.detail.iter_mut().zip(&other.detail) {
            *o -= v;
        }
        out
    }

    /// Multiply every coefficient by `factor` in place.
    pub fn scale(&mut self, factor: f64) {
        self.scaling *= factor;
        self.detail.iter_mut().for_each(|v| *v *= factor);
    }

    /// Sum of squares of all coefficients.
    pub fn sum_of_squares(&self) -> f64 {
        self.iter_flat().map(|v| v * v).sum()
    }

    /// Evaluate the finite Haar series at `x`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let mut value = self.scaling;
        for l in 0..self.depth {
            let cell = dyadic_cell(x, l + 1);
            let amp = (2f64).powf(l as f64 / 2.0) * self.get(l, cell / 2);
            value += if cell.is_multiple_of(2) { amp } else { -amp };
        }
        value
    }
}

/// A step function with `2^level` heights on the dyadic cells of `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstantFn {
    level: usize,
    heights: Vec<f64>,
}

impl PiecewiseConstantFn {
    pub fn new(level: usize, heights: Vec<f64>) -> Result<Self> {
        if heights.len() != 1usize << level {
            return Err(Error::Dimension(format!(
                "level {level} needs {} heights, got {}",
                1usize << level,
                heights.len()
            )));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::Validation("heights must be finite".into()));
        }
        Ok(Self { level, heights })
    }

    /// Construct and check the density constraints (nonnegative, integrates to one).
    pub fn density(level: usize, heights: Vec<f64>) -> Result<Self> {
        let f = Self::new(level, heights)?;
        f.validate_density()?;
        Ok(f)
    }

    /// Uniform density on `[0, 1]`.
    pub fn uniform() -> Self {
        Self {
            level: 0,
            heights: vec![1.0],
        }
    }

    pub fn validate_density(&self) -> Result<()> {
        if let Some(h) = self.heights.iter().find(|h| **h < 0.0) {
            return Err(Error::Validation(format!("negative density height {h}")));
        }
        let integral = self.integral();
        if (integral - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "density integrates to {integral}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn cell_width(&self) -> f64 {
        (0.5f64).powi(self.level as i32)
    }

    pub fn integral(&self) -> f64 {
        self.heights.iter().sum::<f64>() * self.cell_width()
    }

    pub fn integral_of_square(&self) -> f64 {
        self.heights.iter().map(|h| h * h).sum::<f64>() * self.cell_width()
    }

    pub fn min_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.heights[dyadic_cell(x, self.level)]
    }

    /// Same function expressed on the finer grid at `level >= self.level`.
    pub fn refine(&self, level: usize) -> Result<Self> {
        if level < self.level {
            return Err(Error::Dimension(format!(
                "cannot refine level {} down to {level}",
                self.level
            )));
        }
        let rep = 1usize << (level - self.level);
        let heights = self
            .heights
            .iter()
            .flat_map(|h| std::iter::repeat_n(*h, rep))
            .collect();
        Ok(Self { level, heights })
    }

    /// Exact primitive `t -> int_0^t f`.
    pub fn primitive(&self) -> PiecewiseLinearCdf {
        let w = self.cell_width();
        let mut knots = Vec::with_capacity(self.heights.len() + 1);
        let mut acc = 0.0;
        knots.push(0.0);
        for h in &self.heights {
            acc += h * w;
            knots.push(acc);
        }
        PiecewiseLinearCdf {
            level: self.level,
            knots,
        }
    }
}

/// Continuous piecewise-linear function on `[0, 1]` with knots on the dyadic grid of `level`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinearCdf {
    level: usize,
    knots: Vec<f64>,
}

impl PiecewiseLinearCdf {
    /// Values at the `2^level + 1` grid points `k 2^-level`.
    pub fn from_knots(level: usize, knots: Vec<f64>) -> Result<Self> {
        if knots.len() != (1usize << level) + 1 {
            return Err(Error::Dimension(format!(
                "level {level} needs {} knot values, got {}",
                (1usize << level) + 1,
                knots.len()
            )));
        }
        Ok(Self { level, knots })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let cells = 1usize << self.level;
        let pos = t * cells as f64;
        let i = (pos.floor() as usize).min(cells - 1);
        let frac = pos - i as f64;
        self.knots[i] + frac * (self.knots[i + 1] - self.knots[i])
    }

    /// `sup_t |self(t) - other(t)|`, exact: both are linear between points of the finer grid.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        let level = self.level.max(other.level);
        let cells = 1usize << level;
        (0..=cells)
            .map(|i| {
                let t = i as f64 / cells as f64;
                (self.evaluate(t) - other.evaluate(t)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Haar coefficients `<f, psi_{lk}>` of a step function, computed exactly.
///
/// A function at level `L` yields a tree with detail levels `0..L` (maximal level `L - 1`).
pub fn analyze(f: &PiecewiseConstantFn) -> CoefficientTree {
    let level = f.level();
    let width = f.cell_width();
    // Cell integrals, coarsened one level at a time.
    let mut mass: Vec<f64> = f.heights().iter().map(|h| h * width).collect();
    let mut tree = CoefficientTree::zeros(level);
    for l in (0..level).rev() {
        let amp = (2f64).powf(l as f64 / 2.0);
        let coarse: Vec<f64> = mass.chunks_exact(2).map(|p| p[0] + p[1]).collect();
        let row = tree.level_mut(l);
        for (k, pair) in mass.chunks_exact(2).enumerate() {
            row[k] = amp * (pair[0] - pair[1]);
        }
        mass = coarse;
    }
    tree.set_scaling(mass[0]);
    tree
}

/// Step function `sum x_{lk} psi_{lk}` on the dyadic grid of `level`.
///
/// `level` must be at least `depth` (one more than the maximal stored level).
pub fn synthesize(c: &CoefficientTree, level: usize) -> Result<PiecewiseConstantFn> {
    if level < c.depth() {
        return Err(Error::Dimension(format!(
            "synthesis level {level} below required {}",
            c.depth()
        )));
    }
    let mut values = vec![c.scaling()];
    for l in 0..c.depth() {
        let amp = (2f64).powf(l as f64 / 2.0);
        let row = c.level(l);
        let mut next = Vec::with_capacity(values.len() * 2);
        for (v, x) in values.iter().zip(row) {
            next.push(v + amp * x);
            next.push(v - amp * x);
        }
        values = next;
    }
    PiecewiseConstantFn::new(c.depth(), values)?.refine(level)
}

/// Wavelet Hölder-type norm `sup_{l,k} 2^{l(s+1/2)} |x_{lk}|` over the stored detail levels.
///
/// The scaling coefficient is not part of the supremum. For a function with nonzero
/// coefficients beyond the stored depth this is a lower bound of the full norm.
pub fn holder_norm(c: &CoefficientTree, s: f64) -> f64 {
    (0..c.depth())
        .map(|l| {
            let factor = (2f64).powf(l as f64 * (s + 0.5));
            c.level(l).iter().fold(0.0f64, |m, x| m.max(x.abs())) * factor
        })
        .fold(0.0, f64::max)
}
