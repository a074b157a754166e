//! Registry of true functions used to simulate data.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::{analyze, CoefficientTree, PiecewiseConstantFn};

/// Resolution of tabulated truths unless configured.
pub const DEFAULT_TRUTH_LEVEL: usize = 14;

/// A true function, tabulated exactly by its averages over the dyadic cells of some level.
pub trait Truth: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn function(&self) -> &PiecewiseConstantFn;

    fn coefficients(&self) -> CoefficientTree {
        analyze(self.function())
    }
}

/// The `[truth]` config section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    /// `uniform`, `zero`, `holder_cusp` or `heights`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heights: Option<Vec<f64>>,
}

impl TruthSpec {
    pub fn named(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
struct Tabulated {
    name: String,
    f: PiecewiseConstantFn,
}

impl Truth for Tabulated {
    fn name(&self) -> &str {
        &self.name
    }

    fn function(&self) -> &PiecewiseConstantFn {
        &self.f
    }
}

/// Cell averages of `1 + a (|x - 1/2|^gamma - m_gamma)` with `m_gamma = 2^-gamma / (gamma + 1)`
/// its mean, a density whenever `a m_gamma < 1`.
pub fn holder_cusp(gamma: f64, amplitude: f64, level: usize) -> Result<PiecewiseConstantFn> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Validation(format!("cusp exponent must lie in (0, 1], got {gamma}")));
    }
    let mean = (0.5f64).powf(gamma) / (gamma + 1.0);
    if !(amplitude >= 0.0 && amplitude * mean < 1.0) {
        return Err(Error::Validation(format!(
            "cusp amplitude {amplitude} makes the density negative (limit {})",
            1.0 / mean
        )));
    }
    if level == 0 || level > 24 {
        return Err(Error::Validation(format!("cusp level must lie in 1..=24, got {level}")));
    }
    // Antiderivative of |x - 1/2|^gamma; cells never straddle 1/2 for level >= 1.
    let prim = |x: f64| {
        let d = x - 0.5;
        d.signum() * d.abs().powf(gamma + 1.0) / (gamma + 1.0)
    };
    let cells = 1usize << level;
    let h = 1.0 / cells as f64;
    let heights = (0..cells)
        .map(|k| {
            let avg = (prim((k + 1) as f64 * h) - prim(k as f64 * h)) / h;
            1.0 + amplitude * (avg - mean)
        })
        .collect();
    PiecewiseConstantFn::new(level, heights)
}

type TruthBuilder = fn(&TruthSpec) -> Result<Box<dyn Truth>>;

pub struct TruthRegistry {
    builders: BTreeMap<&'static str, TruthBuilder>,
}

impl Default for TruthRegistry {
    fn default() -> Self {
        let mut reg = Self {
            builders: BTreeMap::new(),
        };
        reg.register("uniform", |_| {
            Ok(Box::new(Tabulated {
                name: "uniform".into(),
                f: PiecewiseConstantFn::uniform(),
            }))
        });
        reg.register("zero", |_| {
            Ok(Box::new(Tabulated {
                name: "zero".into(),
                f: PiecewiseConstantFn::new(0, vec![0.0])?,
            }))
        });
        reg.register("holder_cusp", |s| {
            let gamma = s
                .gamma
                .ok_or_else(|| Error::Config("holder_cusp truth needs `gamma`".into()))?;
            let amplitude = s.amplitude.unwrap_or(1.0);
            let level = s.level.unwrap_or(DEFAULT_TRUTH_LEVEL);
            Ok(Box::new(Tabulated {
                name: format!("holder_cusp(gamma={gamma}, amplitude={amplitude})"),
                f: holder_cusp(gamma, amplitude, level)?,
            }))
        });
        reg.register("heights", |s| {
            let heights = s
                .heights
                .clone()
                .ok_or_else(|| Error::Config("heights truth needs `heights`".into()))?;
            let cells = heights.len();
            if !cells.is_power_of_two() {
                return Err(Error::Validation(format!(
                    "heights truth needs 2^L values, got {cells}"
                )));
            }
            Ok(Box::new(Tabulated {
                name: format!("heights({cells})"),
                f: PiecewiseConstantFn::new(cells.trailing_zeros() as usize, heights)?,
            }))
        });
        reg
    }
}

impl TruthRegistry {
    pub fn register(&mut self, name: &'static str, builder: TruthBuilder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(&self, spec: &TruthSpec) -> Result<Box<dyn Truth>> {
        let builder = self
            .builders
            .get(spec.kind.as_str())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "truth",
                name: spec.kind.clone(),
                known: self.names().join(", "),
            })?;
        builder(spec)
    }
}
