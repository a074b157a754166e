use serde_json::json;

use super::{replicate_stream, Cell, Experiment, ExperimentReport, Setup, PURPOSE_DATA};
use crate::bands::{required_draws, CredibleBand, HolderConstraint};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::multiscale::multiscale_norm;
use crate::wavelet::holder_norm;

/// One dataset at the first sample size, its posterior draws and credible band.
pub struct SamplePosterior;

impl Experiment for SamplePosterior {
    fn name(&self) -> &'static str {
        "sample-posterior"
    }

    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        cfg.prior_spec()?;
        Ok(())
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        let setup = Setup::new(cfg)?;
        let n = cfg.n[0];
        let mut rng = replicate_stream(cfg.seed, 0, 0, PURPOSE_DATA);
        let data = setup.simulate(cfg, n, &mut rng)?;
        let draws = setup.sampler()?.sample(&data, cfg.prior_spec()?.draws, &mut rng)?;
        let max_level = setup.max_level(cfg, n)?;
        let depth = draws.draws().iter().map(|d| d.depth()).max().unwrap_or(0);

        let mut columns = vec!["draw".to_string(), "s".to_string()];
        for l in 0..depth {
            for k in 0..(1usize << l) {
                columns.push(format!("d{l}_{k}"));
            }
        }
        let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
        let mut report = ExperimentReport::new(self.name(), cfg, &cols);
        report.warnings.append(&mut setup.warnings.clone());
        for (i, t) in draws.draws().iter().enumerate() {
            let mut row = vec![Cell::Int(i as u64)];
            row.extend(t.resized(depth).iter_flat().map(Cell::Num));
            report.push(row, None);
        }
        report.set("n", n);
        report.set("max_level", max_level);
        report.set("diagnostics", &draws.meta().diagnostics);
        if let Some(w) = &draws.meta().diagnostics.warning {
            report.warnings.push(w.clone());
        }

        if draws.len() >= required_draws(cfg.alpha) {
            let (centring, id) = setup.centring(cfg, &data, &draws, max_level)?;
            let mut band = CredibleBand::from_draws(
                &draws,
                centring,
                id,
                setup.weights.clone(),
                cfg.alpha,
                n,
                max_level,
            )?;
            if let Some(g) = cfg.band.holder_gamma {
                band = band.with_holder(HolderConstraint::new(
                    g,
                    max_level + 1,
                    &setup.weights,
                    cfg.band.holder_u,
                )?);
            }
            report.set("band", band.summary());
            report.set("truth_in_band", band.contains(&setup.f0_coeffs));
            report.headline = format!(
                "{} draws at n={n}, L={max_level}, R_n {:.4}",
                draws.len(),
                band.radius
            );
        } else {
            report.notes.push(format!(
                "no band: {} draws, {} needed",
                draws.len(),
                required_draws(cfg.alpha)
            ));
            report.headline = format!("{} draws at n={n}, L={max_level}", draws.len());
        }
        Ok(report)
    }
}

/// Haar coefficients of the configured truth.
pub struct AnalyzeTruth;

impl Experiment for AnalyzeTruth {
    fn name(&self) -> &'static str {
        "analyze"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        let setup = Setup::new(cfg)?;
        let c = &setup.f0_coeffs;
        let mut report = ExperimentReport::new(self.name(), cfg, &["level", "k", "coefficient"]);
        report.push(
            vec![Cell::Text("-1".into()), Cell::Int(0), Cell::Num(c.scaling())],
            None,
        );
        for l in 0..c.depth() {
            for (k, v) in c.level(l).iter().enumerate() {
                report.push(
                    vec![Cell::Text(l.to_string()), Cell::Int(k as u64), Cell::Num(*v)],
                    None,
                );
            }
        }
        let m = multiscale_norm(c, &setup.weights);
        let l2 = c.sum_of_squares().sqrt();
        report.set("depth", c.depth());
        report.set("multiscale_norm", m);
        report.set("l2_norm", l2);
        if let Some(g) = cfg.band.holder_gamma {
            report.set("holder_norm", json!({ "gamma": g, "value": holder_norm(c, g) }));
        }
        report.headline = format!(
            "{} coefficients, ||f0||_M {m:.4}, ||f0||_2 {l2:.4}",
            report.rows.len()
        );
        Ok(report)
    }
}
