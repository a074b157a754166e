use rayon::prelude::*;
use serde_json::json;

use super::{
    numbers, push_result, replicate_stream, Cell, Experiment, ExperimentReport, RowResult, Setup,
    PURPOSE_DATA,
};
use crate::bands::{
    cdf_band, draw_cdf, required_draws, CdfCentring, CredibleBand, HolderConstraint,
};
use crate::config::{CdfCentringKind, ExperimentConfig};
use crate::error::{Error, Result};
use crate::priors::{ModelKind, Observation};
use crate::sampling::EmpiricalCdf;
use crate::stats::{binomial_se, mean};
use crate::wavelet::{holder_norm, PiecewiseLinearCdf};

/// Frequentist coverage of the multiscale band, its Hölder intersection and the CDF band.
pub struct Coverage;

const COLUMNS: &[&str] = &[
    "n",
    "replicate",
    "max_level",
    "hit",
    "hit_holder",
    "hit_cdf",
    "r_n",
    "r_cdf",
    "diameter_bound",
];

fn holder_for(cfg: &ExperimentConfig, setup: &Setup, max_level: usize) -> Result<Option<HolderConstraint>> {
    cfg.band
        .holder_gamma
        .map(|g| HolderConstraint::new(g, max_level + 1, &setup.weights, cfg.band.holder_u))
        .transpose()
}

fn replicate(
    cfg: &ExperimentConfig,
    setup: &Setup,
    f0_cdf: &PiecewiseLinearCdf,
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
    let mut band = CredibleBand::from_draws(
        &draws,
        centring.clone(),
        id,
        setup.weights.clone(),
        cfg.alpha,
        n,
        max_level,
    )?;
    let hit = band.ball_contains(&setup.f0_coeffs);
    let mut hit_holder = None;
    let mut diameter = None;
    if let Some(h) = holder_for(cfg, setup, max_level)? {
        band = band.with_holder(h);
        hit_holder = Some(band.contains(&setup.f0_coeffs));
        diameter = Some(band.diameter_bound()?);
    }

    let (mut hit_cdf, mut r_cdf) = (None, None);
    if let (Observation::Iid(sample), true) = (&data, draws.are_densities()) {
        let centre = match cfg.band.cdf_centring {
            CdfCentringKind::Empirical => CdfCentring::Empirical(EmpiricalCdf::new(sample)?),
            CdfCentringKind::Histogram => CdfCentring::Linear(draw_cdf(&centring)?),
        };
        let cb = cdf_band(&draws, centre, cfg.alpha, n)?;
        hit_cdf = Some(cb.contains(f0_cdf));
        r_cdf = Some(cb.radius);
    }
    Ok(vec![
        Cell::Int(max_level as u64),
        Cell::Flag(hit),
        hit_holder.into(),
        hit_cdf.into(),
        Cell::Num(band.radius),
        r_cdf.into(),
        diameter.into(),
    ])
}

fn rate(report: &ExperimentReport, rows: std::ops::Range<usize>, col: &str) -> Option<(f64, usize)> {
    let j = report.columns.iter().position(|c| c == col)?;
    let cells: Vec<&Cell> = report.rows[rows].iter().map(|r| &r[j]).collect();
    let v = numbers(&cells);
    (!v.is_empty()).then(|| (mean(&v), v.len()))
}

impl Experiment for Coverage {
    fn name(&self) -> &'static str {
        "coverage"
    }

    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        if cfg.replications < 100 {
            return Err(Error::Config(format!(
                "coverage needs replications >= 100, got {}",
                cfg.replications
            )));
        }
        let draws = cfg.prior_spec()?.draws;
        if draws < required_draws(cfg.alpha) {
            return Err(Error::Config(format!(
                "prior.draws = {draws} is below 20 / alpha = {}",
                required_draws(cfg.alpha)
            )));
        }
        Ok(())
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        let setup = Setup::new(cfg)?;
        let mut report = ExperimentReport::new(self.name(), cfg, COLUMNS);
        report.warnings.append(&mut setup.warnings.clone());
        let f0_cdf = setup.f0().primitive();
        let mut by_n = Vec::new();
        let mut headline = Vec::new();
        for (ni, &n) in cfg.n.iter().enumerate() {
            if let Ok(max_level) = setup.max_level(cfg, n) {
                if let Some(h) = holder_for(cfg, &setup, max_level)? {
                    let norm = holder_norm(&setup.f0_coeffs, h.gamma);
                    if norm > h.u_n {
                        report.warnings.push(format!(
                            "n = {n}: truth Hölder norm {norm:.4} exceeds u_n = {:.4}",
                            h.u_n
                        ));
                    }
                }
            }
            let results: Vec<RowResult> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| replicate(cfg, &setup, &f0_cdf, n, ni, r))
                .collect();
            let start = report.rows.len();
            for (r, res) in results.into_iter().enumerate() {
                push_result(&mut report, res, vec![Cell::Int(n), Cell::Int(r as u64)]);
            }
            let range = start..report.rows.len();
            let errors = report.rows[range.clone()]
                .iter()
                .filter(|row| !matches!(row.last(), Some(Cell::Missing)))
                .count();
            let mut entry = json!({ "n": n, "errors": errors });
            for (col, key) in [("hit", "coverage"), ("hit_holder", "coverage_holder"), ("hit_cdf", "coverage_cdf")] {
                if let Some((p, m)) = rate(&report, range.clone(), col) {
                    entry[key] = json!(p);
                    entry[format!("{key}_se")] = json!(binomial_se(p, m));
                    if col == "hit" {
                        headline.push(format!("n={n}: coverage {p:.3} ± {:.3}", binomial_se(p, m)));
                    }
                }
            }
            for (col, key) in [("r_n", "mean_r_n"), ("r_cdf", "mean_r_cdf"), ("diameter_bound", "mean_diameter_bound")] {
                if let Some((v, _)) = rate(&report, range.clone(), col) {
                    entry[key] = json!(v);
                }
            }
            by_n.push(entry);
        }
        if cfg.model.kind == ModelKind::WhiteNoise {
            report.notes.push("white-noise data: no CDF band".into());
        }
        report.notes.push(format!("nominal coverage {}", 1.0 - cfg.alpha));
        if let Some(first) = by_n.first() {
            for key in ["coverage", "coverage_se", "coverage_holder", "coverage_holder_se", "coverage_cdf", "coverage_cdf_se"] {
                if let Some(v) = first.get(key) {
                    report.set(key, v.clone());
                }
            }
        }
        report.set("by_n", by_n);
        let errors = report.error_count();
        report.set("errors", errors);
        report.headline = headline.join("; ");
        Ok(report)
    }
}
