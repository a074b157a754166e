//! Monte Carlo experiments checking frequentist properties of the posteriors.
//!
//! Each experiment implements [`Experiment`] and is registered by name. Replications run in
//! parallel on streams keyed by `(seed, replicate)`, so rows do not depend on the schedule.
//!
//! Distances between laws on the coefficient space are replaced by Monte Carlo surrogates:
//! two-sample Kolmogorov-Smirnov distances between coordinates, between multiscale norms and
//! between sup-norms of distribution-function processes. Each surrogate is reported next to
//! its self-comparison noise floor (two independent samples from the reference law).

mod bvm;
mod clt;
mod coverage;
mod donsker;
mod rates;
mod utilities;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

pub use bvm::BvmCheck;
pub use clt::CltCheck;
pub use coverage::Coverage;
pub use donsker::DonskerCheck;
pub use rates::RateCheck;
pub use utilities::{AnalyzeTruth, SamplePosterior};

use crate::config::{Centring, ExperimentConfig};
use crate::error::{Error, Result};
use crate::multiscale::WeightSequence;
use crate::priors::{
    check_truth_scale, posterior_mean_for, ModelKind, Observation, PosteriorDraws,
    PosteriorSampler, PriorContext, PriorRegistry,
};
use crate::rng::Stream;
use crate::sampling::{empirical_coefficients, observe_white_noise, sample_iid};
use crate::truth::{Truth, TruthRegistry};
use crate::wavelet::{CoefficientTree, PiecewiseConstantFn};

/// Version string written into every report.
pub fn version() -> String {
    format!("msbvm v{}", env!("CARGO_PKG_VERSION"))
}

/// Stream purposes, mixed into the seed so that e.g. reference draws never reuse data draws.
pub(crate) const PURPOSE_DATA: u64 = 0;
pub(crate) const PURPOSE_REFERENCE: u64 = 1;
pub(crate) const PURPOSE_FLOOR: u64 = 2;

/// Stream for replicate `rep` at the `n_index`-th sample size.
pub(crate) fn replicate_stream(seed: u64, n_index: usize, rep: usize, purpose: u64) -> Stream {
    crate::rng::substream2(seed, ((n_index as u64) << 32) | rep as u64, purpose)
}

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Flag(bool),
    Text(String),
    Missing,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Flag(v) => write!(f, "{}", u8::from(*v)),
            Cell::Text(s) => f.write_str(s),
            Cell::Missing => Ok(()),
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<Option<bool>> for Cell {
    fn from(v: Option<bool>) -> Self {
        v.map_or(Cell::Missing, Cell::Flag)
    }
}

/// Rows plus aggregates of one experiment run.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub scenario: String,
    pub seed: u64,
    pub version: String,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<Cell>>,
    pub aggregates: BTreeMap<String, Value>,
    /// One-line result for the console.
    pub headline: String,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    pub fn new(experiment: &str, cfg: &ExperimentConfig, columns: &[&str]) -> Self {
        let mut columns: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        columns.push("error".into());
        Self {
            experiment: experiment.into(),
            scenario: cfg.scenario.clone(),
            seed: cfg.seed,
            version: version(),
            columns,
            rows: Vec::new(),
            aggregates: BTreeMap::new(),
            headline: String::new(),
            warnings: Vec::new(),
            notes: Vec::new(),
            config: cfg.clone(),
        }
    }

    /// Append a row; `values` must cover every column except the trailing `error`.
    pub fn push(&mut self, values: Vec<Cell>, error: Option<String>) {
        let mut row = values;
        row.resize(self.columns.len() - 1, Cell::Missing);
        row.push(error.map_or(Cell::Missing, Cell::Text));
        self.rows.push(row);
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.aggregates.insert(key.into(), v);
    }

    pub fn aggregate_f64(&self, key: &str) -> Option<f64> {
        self.aggregates.get(key).and_then(Value::as_f64)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    /// Number of rows that carry an error.
    pub fn error_count(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| !matches!(r.last(), Some(Cell::Missing)))
            .count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Numeric(e.to_string()))
    }

    /// Aggregates, config echo and metadata as pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        v["row_count"] = json!(self.rows.len());
        v["errors"] = json!(self.error_count());
        v["config_toml"] = json!(self.config.to_toml()?);
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} [{} seed={}] {}",
            self.experiment, self.scenario, self.seed, self.headline
        )
    }
}

/// A Monte Carlo experiment.
pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;

    /// Experiment-specific config checks on top of [`ExperimentConfig::validate`].
    fn check(&self, _cfg: &ExperimentConfig) -> Result<()> {
        Ok(())
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentReport>;
}

pub struct ExperimentRegistry {
    experiments: BTreeMap<&'static str, Box<dyn Experiment>>,
}

impl Default for ExperimentRegistry {
    fn default() -> Self {
        let mut reg = Self {
            experiments: BTreeMap::new(),
        };
        reg.register(Box::new(Coverage));
        reg.register(Box::new(BvmCheck));
        reg.register(Box::new(DonskerCheck));
        reg.register(Box::new(RateCheck));
        reg.register(Box::new(CltCheck));
        reg.register(Box::new(SamplePosterior));
        reg.register(Box::new(AnalyzeTruth));
        reg
    }
}

impl ExperimentRegistry {
    pub fn register(&mut self, e: Box<dyn Experiment>) {
        self.experiments.insert(e.name(), e);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.experiments.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Experiment> {
        self.experiments
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "experiment",
                name: name.into(),
                known: self.names().join(", "),
            })
    }

    /// Validate the config and run the named experiment.
    pub fn run(&self, name: &str, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        let e = self.get(name)?;
        cfg.validate()?;
        e.check(cfg)?;
        e.run(cfg)
    }
}

/// Objects shared by all replications of an experiment.
pub(crate) struct Setup {
    pub truth: Box<dyn Truth>,
    pub f0_coeffs: CoefficientTree,
    pub weights: WeightSequence,
    pub sampler: Option<Box<dyn PosteriorSampler>>,
    pub warnings: Vec<String>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let truth = TruthRegistry::default().build(&cfg.truth)?;
        let f0_coeffs = truth.coefficients();
        let weights = cfg.weights()?;
        let mut warnings = Vec::new();
        if !weights.is_admissible() {
            warnings.push(format!(
                "weights {} fail the admissibility probe (w_l / sqrt(l) not increasing)",
                weights.spec()
            ));
        }
        let sampler = match &cfg.prior {
            Some(p) => {
                let ctx = PriorContext {
                    truth: Some(f0_coeffs.clone()),
                };
                if let (Some(m), Some(s)) = (p.m_threshold, p.smoothness) {
                    warnings.extend(check_truth_scale(&f0_coeffs, s, m));
                }
                Some(PriorRegistry::default().build(p, &ctx)?)
            }
            None => None,
        };
        Ok(Self {
            truth,
            f0_coeffs,
            weights,
            sampler,
            warnings,
        })
    }

    pub fn f0(&self) -> &PiecewiseConstantFn {
        self.truth.function()
    }

    pub fn sampler(&self) -> Result<&dyn PosteriorSampler> {
        self.sampler
            .as_deref()
            .ok_or_else(|| Error::Config("this experiment needs a [prior] section".into()))
    }

    /// Detail levels of the observation (white noise), zero for samples.
    pub fn observed_levels(cfg: &ExperimentConfig) -> usize {
        match cfg.model.kind {
            ModelKind::WhiteNoise => cfg.model.levels.map_or(0, |l| l + 1),
            ModelKind::Sampling => 0,
        }
    }

    pub fn max_level(&self, cfg: &ExperimentConfig, n: u64) -> Result<usize> {
        self.sampler()?.max_level(n, Self::observed_levels(cfg))
    }

    pub fn simulate(&self, cfg: &ExperimentConfig, n: u64, rng: &mut Stream) -> Result<Observation> {
        match cfg.model.kind {
            ModelKind::Sampling => Ok(Observation::Iid(sample_iid(self.f0(), n as usize, rng)?)),
            ModelKind::WhiteNoise => {
                let levels = cfg
                    .model
                    .levels
                    .ok_or_else(|| Error::Config("white_noise model needs levels".into()))?;
                Ok(Observation::WhiteNoise(observe_white_noise(
                    &self.f0_coeffs,
                    n,
                    levels,
                    rng,
                )?))
            }
        }
    }

    /// The efficient centring: the observation itself or the projected empirical measure.
    pub fn efficient_centring(data: &Observation, max_level: usize) -> Result<CoefficientTree> {
        match data {
            Observation::WhiteNoise(o) => Ok(o.coeffs.resized(max_level + 1)),
            Observation::Iid(s) => empirical_coefficients(s, max_level),
        }
    }

    pub fn centring(
        &self,
        cfg: &ExperimentConfig,
        data: &Observation,
        draws: &PosteriorDraws,
        max_level: usize,
    ) -> Result<(CoefficientTree, &'static str)> {
        Ok(match cfg.band.centring {
            Centring::Efficient => (
                Self::efficient_centring(data, max_level)?,
                match data {
                    Observation::WhiteNoise(_) => "observation",
                    Observation::Iid(_) => "empirical_projection",
                },
            ),
            Centring::PosteriorMean => (
                posterior_mean_for(self.sampler()?, data, draws)?.resized(max_level + 1),
                "posterior_mean",
            ),
        })
    }
}

/// Values of one replicate before they become a row.
pub(crate) type RowResult = Result<Vec<Cell>>;

pub(crate) fn push_result(report: &mut ExperimentReport, r: RowResult, prefix: Vec<Cell>) {
    match r {
        Ok(mut cells) => {
            let mut row = prefix;
            row.append(&mut cells);
            report.push(row, None);
        }
        Err(e) => report.push(prefix, Some(e.to_string())),
    }
}

/// Pull numeric values out of a column, skipping missing cells.
pub(crate) fn numbers(cells: &[&Cell]) -> Vec<f64> {
    cells
        .iter()
        .filter_map(|c| match c {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            Cell::Flag(b) => Some(f64::from(u8::from(*b))),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_render_compactly() {
        assert_eq!(Cell::Num(0.5).to_string(), "0.5");
        assert_eq!(Cell::Flag(true).to_string(), "1");
        assert_eq!(Cell::from(None::<f64>).to_string(), "");
    }

    #[test]
    fn registry_names() {
        let reg = ExperimentRegistry::default();
        assert_eq!(
            reg.names(),
            vec!["analyze", "bvm", "clt", "coverage", "donsker", "rates", "sample-posterior"]
        );
        assert!(matches!(reg.get("plot"), Err(Error::UnknownStrategy { .. })));
    }
}
