use rand::Rng;
use rayon::prelude::*;

use super::{
    push_result, replicate_stream, Cell, Experiment, ExperimentReport, RowResult, Setup,
    PURPOSE_DATA, PURPOSE_FLOOR,
};
use crate::bands::{ks_statistic, CdfCentring};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::priors::{ModelKind, Observation};
use crate::sampling::EmpiricalCdf;
use crate::stats::{kolmogorov_cdf, kolmogorov_quantile, ks_one_sample, mean};

/// Posterior law of `sqrt(n) ||F - F_n||_inf` against the Kolmogorov distribution.
pub struct DonskerCheck;

const COLUMNS: &[&str] = &["n", "dataset", "ks_kolmogorov", "floor", "median_statistic"];

fn dataset(cfg: &ExperimentConfig, setup: &Setup, n: u64, n_index: usize, rep: usize) -> RowResult {
    let sampler = setup.sampler()?;
    let mut rng = replicate_stream(cfg.seed, n_index, rep, PURPOSE_DATA);
    let data = setup.simulate(cfg, n, &mut rng)?;
    let Observation::Iid(sample) = &data else {
        return Err(Error::Unsupported("donsker check needs i.i.d. data".into()));
    };
    let draws = sampler.sample(&data, cfg.prior_spec()?.draws, &mut rng)?;
    let mut stats = ks_statistic(&draws, &CdfCentring::Empirical(EmpiricalCdf::new(sample)?), n)?;
    let ks = ks_one_sample(&stats, kolmogorov_cdf)?;

    // Same number of exact Kolmogorov draws, by inversion.
    let mut floor_rng = replicate_stream(cfg.seed, n_index, rep, PURPOSE_FLOOR);
    let exact: Vec<f64> = (0..stats.len())
        .map(|_| kolmogorov_quantile(floor_rng.random_range(1e-12..1.0 - 1e-12)))
        .collect::<Result<_>>()?;
    let floor = ks_one_sample(&exact, kolmogorov_cdf)?;

    stats.sort_by(f64::total_cmp);
    Ok(vec![
        Cell::Num(ks),
        Cell::Num(floor),
        Cell::Num(stats[stats.len() / 2]),
    ])
}

impl Experiment for DonskerCheck {
    fn name(&self) -> &'static str {
        "donsker"
    }

    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        if cfg.model.kind != ModelKind::Sampling {
            return Err(Error::Config("donsker check needs the sampling model".into()));
        }
        cfg.prior_spec()?;
        Ok(())
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        let setup = Setup::new(cfg)?;
        if !setup.sampler()?.draws_densities() {
            return Err(Error::Config("donsker check needs a prior on densities".into()));
        }
        let mut report = ExperimentReport::new(self.name(), cfg, COLUMNS);
        report.warnings.append(&mut setup.warnings.clone());
        report.notes.push(
            "one-sample KS distance between posterior draws of sqrt(n)||F - F_n||_inf and the \
             Kolmogorov law; floor = same distance for exact Kolmogorov draws"
                .into(),
        );
        for (ni, &n) in cfg.n.iter().enumerate() {
            let results: Vec<RowResult> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| dataset(cfg, &setup, n, ni, r))
                .collect();
            for (r, res) in results.into_iter().enumerate() {
                push_result(&mut report, res, vec![Cell::Int(n), Cell::Int(r as u64)]);
            }
        }
        let ks = super::numbers(&report.column("ks_kolmogorov").unwrap_or_default());
        let floor = super::numbers(&report.column("floor").unwrap_or_default());
        if !ks.is_empty() {
            let (m, f) = (mean(&ks), mean(&floor));
            report.set("mean_ks", m);
            report.set("max_ks", ks.iter().copied().fold(0.0, f64::max));
            report.set("mean_floor", f);
            report.set("excess_ks", m - f);
            report.headline = format!("mean KS to Kolmogorov {m:.4} (floor {f:.4})");
        }
        let errors = report.error_count();
        report.set("errors", errors);
        Ok(report)
    }
}
