use rayon::prelude::*;

use super::{
    push_result, replicate_stream, Cell, Experiment, ExperimentReport, RowResult, Setup,
    PURPOSE_DATA, PURPOSE_FLOOR, PURPOSE_REFERENCE,
};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::multiscale::{
    bridge_covariance, multiscale_norm_upto, GaussianProcessKind, GaussianSampler,
};
use crate::priors::ModelKind;
use crate::sampling::{empirical_coefficients, sample_iid};
use crate::stats::{ks_two_sample, mean};
use crate::wavelet::CoefficientTree;

/// Law of `||sqrt(n) (P_n(j) - P)||_{M(w)}` against that of the projected `P`-white bridge.
pub struct CltCheck;

const COLUMNS: &[&str] = &["n", "replicate", "norm"];

/// Levels whose coordinate variances are compared with the bridge covariance.
const VARIANCE_LEVELS: usize = 4;

fn replicate(
    cfg: &ExperimentConfig,
    setup: &Setup,
    level: usize,
    n: u64,
    n_index: usize,
    rep: usize,
) -> Result<CoefficientTree> {
    let mut rng = replicate_stream(cfg.seed, n_index, rep, PURPOSE_DATA);
    let s = sample_iid(setup.f0(), n as usize, &mut rng)?;
    let mut d = empirical_coefficients(&s, level)?.difference(&setup.f0_coeffs.resized(level + 1));
    d.scale((n as f64).sqrt());
    Ok(d)
}

impl Experiment for CltCheck {
    fn name(&self) -> &'static str {
        "clt"
    }

    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        if cfg.model.kind != ModelKind::Sampling {
            return Err(Error::Config("clt check needs the sampling model".into()));
        }
        if cfg.model.levels.is_none() {
            return Err(Error::Config("clt check needs [model] levels (projection level)".into()));
        }
        Ok(())
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        let setup = Setup::new(cfg)?;
        let level = cfg
            .model
            .levels
            .ok_or_else(|| Error::Config("clt check needs [model] levels".into()))?;
        let mut report = ExperimentReport::new(self.name(), cfg, COLUMNS);
        report.warnings.append(&mut setup.warnings.clone());
        let reference =
            GaussianSampler::new(&GaussianProcessKind::WhiteBridge(setup.f0().clone()), level)?;
        let cov = bridge_covariance(setup.f0(), level)?;
        let w = &setup.weights;
        let norm = |t: &CoefficientTree| multiscale_norm_upto(t, w, level + 1);

        let mut per_n = Vec::new();
        for (ni, &n) in cfg.n.iter().enumerate() {
            let trees: Vec<Result<CoefficientTree>> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| replicate(cfg, &setup, level, n, ni, r))
                .collect();
            let mut ok = Vec::new();
            for (r, t) in trees.into_iter().enumerate() {
                let row: RowResult = t.map(|t| {
                    let v = vec![Cell::Num(norm(&t))];
                    ok.push(t);
                    v
                });
                push_result(&mut report, row, vec![Cell::Int(n), Cell::Int(r as u64)]);
            }
            if ok.len() < 2 {
                continue;
            }
            let emp: Vec<f64> = ok.iter().map(norm).collect();
            let mut ref_rng = replicate_stream(cfg.seed, ni, 0, PURPOSE_REFERENCE);
            let mut floor_rng = replicate_stream(cfg.seed, ni, 0, PURPOSE_FLOOR);
            let refs: Vec<f64> = (0..cfg.check.reference_draws)
                .map(|_| norm(&reference.sample(&mut ref_rng)))
                .collect();
            let twin: Vec<f64> = (0..ok.len()).map(|_| norm(&reference.sample(&mut floor_rng))).collect();
            let ks = ks_two_sample(&emp, &refs)?;
            let floor = ks_two_sample(&twin, &refs)?;

            // Coordinate variances against Var_P(psi_lk).
            let mut worst = 0.0f64;
            let top = level.min(VARIANCE_LEVELS);
            for idx in 0..((1usize << (top + 1)) - 1) {
                let xs: Vec<f64> = ok.iter().map(|t| t.detail()[idx]).collect();
                let m = mean(&xs);
                let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
                let target = cov[(idx, idx)];
                worst = worst.max((var / target - 1.0).abs());
            }
            per_n.push(serde_json::json!({
                "n": n,
                "ks": ks,
                "floor": floor,
                "excess_ks": ks - floor,
                "max_variance_rel_error": worst,
            }));
            report.headline = format!("n={n}: norm-law KS {ks:.4} (floor {floor:.4}), coordinate variance error {worst:.3}");
            report.set("ks", ks);
            report.set("floor", floor);
            report.set("excess_ks", ks - floor);
            report.set("max_variance_rel_error", worst);
        }
        report.set("by_n", per_n);
        let errors = report.error_count();
        report.set("errors", errors);
        Ok(report)
    }
}
