use rayon::prelude::*;
use serde_json::json;

use super::{
    numbers, push_result, replicate_stream, Cell, Experiment, ExperimentReport, RowResult, Setup,
    PURPOSE_DATA,
};
use crate::bands::{required_draws, CredibleBand, HolderConstraint};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::stats::{mean, ols, std_dev};

/// Diameter bound of the Hölder-intersected band across sample sizes, with the log-log slope
/// against `log n / n`.
pub struct RateCheck;

const COLUMNS: &[&str] = &["n", "replicate", "max_level", "r_n", "u_n", "diameter_bound"];

fn replicate(
    cfg: &ExperimentConfig,
    setup: &Setup,
    gamma: f64,
    n: u64,
    n_index: usize,
    rep: usize,
) -> RowResult {
    let sampler = setup.sampler()?;
    let mut rng = replicate_stream(cfg.seed, n_index, rep, PURPOSE_DATA);
    let data = setup.simulate(cfg, n, &mut rng)?;
    let draws = sampler.sample(&data, cfg.prior_spec()?.draws, &mut rng)?;
    let max_level = setup.max_level(cfg, n)?;
    let (centring, id) = setup.centring(cfg, &data, &draws, max_level)?;
    let holder = HolderConstraint::new(gamma, max_level + 1, &setup.weights, cfg.band.holder_u)?;
    let band = CredibleBand::from_draws(
        &draws,
        centring,
        id,
        setup.weights.clone(),
        cfg.alpha,
        n,
        max_level,
    )?
    .with_holder(holder);
    Ok(vec![
        Cell::Int(max_level as u64),
        Cell::Num(band.radius),
        Cell::Num(holder.u_n),
        Cell::Num(band.diameter_bound()?),
    ])
}

impl Experiment for RateCheck {
    fn name(&self) -> &'static str {
        "rates"
    }

    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        if cfg.band.holder_gamma.is_none() {
            return Err(Error::Config("rates needs band.holder_gamma".into()));
        }
        if cfg.n.len() < 3 {
            return Err(Error::Config("rates needs at least three sample sizes".into()));
        }
        if cfg.prior_spec()?.draws < required_draws(cfg.alpha) {
            return Err(Error::Config(format!(
                "prior.draws is below 20 / alpha = {}",
                required_draws(cfg.alpha)
            )));
        }
        Ok(())
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        let setup = Setup::new(cfg)?;
        let gamma = cfg
            .band
            .holder_gamma
            .ok_or_else(|| Error::Config("rates needs band.holder_gamma".into()))?;
        let mut report = ExperimentReport::new(self.name(), cfg, COLUMNS);
        report.warnings.append(&mut setup.warnings.clone());
        let mut by_n = Vec::new();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (ni, &n) in cfg.n.iter().enumerate() {
            let results: Vec<RowResult> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| replicate(cfg, &setup, gamma, n, ni, r))
                .collect();
            let start = report.rows.len();
            for (r, res) in results.into_iter().enumerate() {
                push_result(&mut report, res, vec![Cell::Int(n), Cell::Int(r as u64)]);
            }
            let pick = |col: &str| {
                let j = report.columns.iter().position(|c| c == col).unwrap();
                numbers(&report.rows[start..].iter().map(|row| &row[j]).collect::<Vec<_>>())
            };
            let (diam, r_n) = (pick("diameter_bound"), pick("r_n"));
            if diam.is_empty() {
                continue;
            }
            let md = mean(&diam);
            let nf = n as f64;
            xs.push((nf.ln() / nf).ln());
            ys.push(md.ln());
            by_n.push(json!({
                "n": n,
                "mean_diameter_bound": md,
                "mean_r_n": mean(&r_n),
                "sd_r_n": std_dev(&r_n),
            }));
        }
        report.set("expected_slope", gamma / (2.0 * gamma + 1.0));
        if xs.len() >= 3 {
            let fit = ols(&xs, &ys)?;
            report.set("slope", fit.slope);
            report.set("slope_se", fit.slope_se);
            report.set("slope_ci", [fit.slope_ci.0, fit.slope_ci.1]);
            report.headline = format!(
                "log-log slope {:.3} [{:.3}, {:.3}], expected {:.3}",
                fit.slope,
                fit.slope_ci.0,
                fit.slope_ci.1,
                gamma / (2.0 * gamma + 1.0)
            );
        } else {
            report.headline = "too few sample sizes without errors for a slope".into();
        }
        if let (Some(first), Some(last)) = (by_n.first(), by_n.last()) {
            report.set("sd_r_n_first", first["sd_r_n"].clone());
            report.set("sd_r_n_last", last["sd_r_n"].clone());
        }
        report.set("by_n", by_n);
        let errors = report.error_count();
        report.set("errors", errors);
        Ok(report)
    }
}
