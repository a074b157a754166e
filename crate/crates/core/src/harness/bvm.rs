use rayon::prelude::*;

use super::{
    push_result, replicate_stream, Cell, Experiment, ExperimentReport, RowResult, Setup,
    PURPOSE_DATA, PURPOSE_FLOOR, PURPOSE_REFERENCE,
};
use crate::bands::{draw_cdf, posterior_statistics};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::multiscale::{multiscale_norm_upto, GaussianProcessKind, GaussianSampler};
use crate::priors::{ModelKind, Observation};
use crate::stats::{ks_two_sample, mean};
use crate::wavelet::{synthesize, CoefficientTree};

/// Distance between the centred, rescaled posterior and the limiting Gaussian law.
///
/// The white-noise limit is white noise itself; in the sampling model it is the `P_0`-white
/// bridge. Three surrogate distances are computed per dataset: per-coordinate KS, KS between
/// multiscale-norm laws and KS between laws of the sup of the CDF process.
pub struct BvmCheck;

const COLUMNS: &[&str] = &[
    "n",
    "dataset",
    "max_level",
    "coord_ks_max",
    "coord_ks_mean",
    "coord_floor",
    "stat_ks",
    "stat_floor",
    "cdf_ks",
    "cdf_floor",
];

struct Reference {
    sampler: GaussianSampler,
}

impl Reference {
    fn draws(&self, m: usize, rng: &mut crate::rng::Stream) -> Vec<CoefficientTree> {
        (0..m).map(|_| self.sampler.sample(rng)).collect()
    }
}

/// Coordinates compared one by one: the scaling coefficient (white noise only) and every
/// detail coefficient on levels `<= top`.
fn coordinates(top: usize, with_scaling: bool) -> Vec<Option<(usize, usize)>> {
    let mut v = Vec::new();
    if with_scaling {
        v.push(None);
    }
    for l in 0..=top {
        for k in 0..(1usize << l) {
            v.push(Some((l, k)));
        }
    }
    v
}

fn coordinate(t: &CoefficientTree, c: Option<(usize, usize)>) -> f64 {
    match c {
        None => t.scaling(),
        Some((l, k)) => t.get(l, k),
    }
}

fn column(ts: &[CoefficientTree], c: Option<(usize, usize)>) -> Vec<f64> {
    ts.iter().map(|t| coordinate(t, c)).collect()
}

/// `sup_t |G(t)|` for the CDF process of a coefficient draw, exact at the dyadic knots.
fn cdf_sup(t: &CoefficientTree) -> Result<f64> {
    let f = synthesize(t, t.depth())?;
    // G is linear between knots, so the sup is attained at one.
    let width = f.cell_width();
    let mut acc = 0.0f64;
    let mut best = 0.0f64;
    for h in f.heights() {
        acc += h * width;
        best = best.max(acc.abs());
    }
    Ok(best)
}

fn dataset(
    cfg: &ExperimentConfig,
    setup: &Setup,
    reference: &Reference,
    n: u64,
    n_index: usize,
    rep: usize,
) -> RowResult {
    let sampler = setup.sampler()?;
    let mut rng = replicate_stream(cfg.seed, n_index, rep, PURPOSE_DATA);
    let data = setup.simulate(cfg, n, &mut rng)?;
    let draws = sampler.sample(&data, cfg.prior_spec()?.draws, &mut rng)?;
    let max_level = setup.max_level(cfg, n)?;
    let centring = Setup::efficient_centring(&data, max_level)?;
    let root_n = (n as f64).sqrt();
    let scaled: Vec<CoefficientTree> = draws
        .draws()
        .iter()
        .map(|t| {
            let mut d = t.difference(&centring).resized(max_level + 1);
            d.scale(root_n);
            d
        })
        .collect();

    let m_ref = cfg.check.reference_draws;
    let mut ref_rng = replicate_stream(cfg.seed, n_index, rep, PURPOSE_REFERENCE);
    let mut floor_rng = replicate_stream(cfg.seed, n_index, rep, PURPOSE_FLOOR);
    let reference_draws = reference.draws(m_ref, &mut ref_rng);
    // Self-comparison sample of the same size as the posterior sample.
    let twin = reference.draws(scaled.len(), &mut floor_rng);

    let top = cfg.check.coordinate_levels.min(max_level);
    let with_scaling = matches!(data, Observation::WhiteNoise(_));
    let mut coord_ks = Vec::new();
    let mut coord_floor = Vec::new();
    for c in coordinates(top, with_scaling) {
        let r = column(&reference_draws, c);
        coord_ks.push(ks_two_sample(&column(&scaled, c), &r)?);
        coord_floor.push(ks_two_sample(&column(&twin, c), &r)?);
    }

    let w = &setup.weights;
    let post_stat = posterior_statistics(&draws, &centring, w, n, max_level);
    let norm = |t: &CoefficientTree| multiscale_norm_upto(t, w, max_level + 1);
    let ref_stat: Vec<f64> = reference_draws.iter().map(norm).collect();
    let twin_stat: Vec<f64> = twin.iter().map(norm).collect();
    let stat_ks = ks_two_sample(&post_stat, &ref_stat)?;
    let stat_floor = ks_two_sample(&twin_stat, &ref_stat)?;

    let (mut cdf_ks, mut cdf_floor) = (None, None);
    if draws.are_densities() {
        let centre = draw_cdf(&centring)?;
        let post: Vec<f64> = draws
            .draws()
            .iter()
            .map(|t| Ok(root_n * centre.sup_distance(&draw_cdf(t)?)))
            .collect::<Result<_>>()?;
        let r: Vec<f64> = reference_draws.iter().map(cdf_sup).collect::<Result<_>>()?;
        let tw: Vec<f64> = twin.iter().map(cdf_sup).collect::<Result<_>>()?;
        cdf_ks = Some(ks_two_sample(&post, &r)?);
        cdf_floor = Some(ks_two_sample(&tw, &r)?);
    }

    Ok(vec![
        Cell::Int(max_level as u64),
        Cell::Num(coord_ks.iter().copied().fold(0.0, f64::max)),
        Cell::Num(mean(&coord_ks)),
        Cell::Num(mean(&coord_floor)),
        Cell::Num(stat_ks),
        Cell::Num(stat_floor),
        cdf_ks.into(),
        cdf_floor.into(),
    ])
}

impl Experiment for BvmCheck {
    fn name(&self) -> &'static str {
        "bvm"
    }

    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        cfg.prior_spec()?;
        Ok(())
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        let setup = Setup::new(cfg)?;
        let mut report = ExperimentReport::new(self.name(), cfg, COLUMNS);
        report.warnings.append(&mut setup.warnings.clone());
        report.notes.push(
            "bounded-Lipschitz distance replaced by two-sample KS surrogates: per coordinate, \
             multiscale norm, sup of the CDF process; *_floor columns are self-comparisons \
             of the reference law"
                .into(),
        );
        for (ni, &n) in cfg.n.iter().enumerate() {
            let max_level = setup.max_level(cfg, n)?;
            let kind = match cfg.model.kind {
                ModelKind::WhiteNoise => GaussianProcessKind::WhiteNoise,
                ModelKind::Sampling => GaussianProcessKind::WhiteBridge(setup.f0().clone()),
            };
            let reference = Reference {
                sampler: GaussianSampler::new(&kind, max_level).map_err(|e| {
                    Error::Unsupported(format!("reference law at level {max_level}: {e}"))
                })?,
            };
            let results: Vec<RowResult> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| dataset(cfg, &setup, &reference, n, ni, r))
                .collect();
            for (r, res) in results.into_iter().enumerate() {
                push_result(&mut report, res, vec![Cell::Int(n), Cell::Int(r as u64)]);
            }
        }
        let mut headline = Vec::new();
        for (col, floor, key) in [
            ("coord_ks_max", "coord_floor", "coord_ks_max"),
            ("stat_ks", "stat_floor", "stat_ks"),
            ("cdf_ks", "cdf_floor", "cdf_ks"),
        ] {
            let v = super::numbers(&report.column(col).unwrap_or_default());
            let f = super::numbers(&report.column(floor).unwrap_or_default());
            if v.is_empty() {
                continue;
            }
            let (mv, mf) = (mean(&v), mean(&f));
            report.set(&format!("mean_{key}"), mv);
            report.set(&format!("max_{key}"), v.iter().copied().fold(0.0, f64::max));
            report.set(&format!("mean_{floor}"), mf);
            report.set(&format!("excess_{key}"), mv - mf);
            headline.push(format!("{key} {mv:.4} (floor {mf:.4})"));
        }
        let errors = report.error_count();
        report.set("errors", errors);
        report.headline = headline.join(", ");
        Ok(report)
    }
}
