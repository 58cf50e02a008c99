//! Replicated fitting and bias / ESD / RMSE / coverage summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{generate_dataset, SimulationDesign};
use crate::error::{Error, Result};
use crate::estimation::{fit_first_stage, fit_naive, fit_oracle, fit_with_first_stage, EstimatorVariant, FitOptions};
use crate::numerics::pairwise_sum;

/// Largest failed fraction of replications for a healthy summary.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub label: String,
    pub truth: f64,
    pub bias: f64,
    pub esd: f64,
    pub rmse: f64,
    /// Fraction of intervals containing the truth.
    pub cr: f64,
    pub mean_se: f64,
    /// Coverage and mean SE without the first-stage correction.
    pub uncorrected_cr: f64,
    pub mean_uncorrected_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: EstimatorVariant,
    pub parameters: Vec<ParameterSummary>,
    pub successes: usize,
    pub failures: usize,
}

impl VariantSummary {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub design: SimulationDesign,
    pub variants: Vec<VariantSummary>,
    /// Mean of `1 - mean(Delta)` over replications.
    pub censoring_rate: f64,
    pub failed_replications: usize,
    pub healthy: bool,
}

impl SimulationSummary {
    pub fn variant(&self, v: EstimatorVariant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }
}

/// One successful fit, reduced to what the summary needs.
#[derive(Debug, Clone)]
struct Draw {
    estimates: Vec<f64>,
    covered: Vec<bool>,
    se: Vec<f64>,
    uncorrected_covered: Vec<bool>,
    uncorrected_se: Vec<f64>,
}

struct Replication {
    censoring: f64,
    draws: Vec<Option<Draw>>,
}

fn draw_from(fit: &crate::estimation::FitResult, truth: &[f64], opts: &FitOptions) -> Option<Draw> {
    if !fit.converged || !fit.has_inference() {
        return None;
    }
    let est = fit.estimates();
    let layout = fit.layout();
    let mut uncorrected_covered = Vec::with_capacity(est.len());
    for (k, &j) in fit.free.iter().enumerate() {
        let kind = crate::estimation::ParamKind::of(&layout, j);
        let (lo, hi) = crate::estimation::interval(kind, est[k], fit.uncorrected_std_errors[k], opts.level).ok()?;
        uncorrected_covered.push(lo <= truth[j] && truth[j] <= hi);
    }
    Some(Draw {
        covered: fit
            .free
            .iter()
            .enumerate()
            .map(|(k, &j)| fit.ci_lower[k] <= truth[j] && truth[j] <= fit.ci_upper[k])
            .collect(),
        estimates: est,
        se: fit.std_errors.clone(),
        uncorrected_covered,
        uncorrected_se: fit.uncorrected_std_errors.clone(),
    })
}

fn replicate(design: &SimulationDesign, variants: &[EstimatorVariant], opts: &FitOptions, rep: u64) -> Replication {
    let truth = design.theta_true.to_vec();
    let Ok((data, control)) = generate_dataset(design, rep) else {
        return Replication {
            censoring: f64::NAN,
            draws: vec![None; variants.len()],
        };
    };
    let family = design.design.family();
    let first = if variants.iter().any(|v| v.uses_first_stage()) {
        fit_first_stage(family, &data).ok()
    } else {
        None
    };
    let draws = variants
        .iter()
        .map(|&v| {
            let fit = match v {
                EstimatorVariant::Naive => fit_naive(&data, opts),
                EstimatorVariant::Oracle => fit_oracle(&data, &control, opts),
                _ => match &first {
                    Some(fs) => fit_with_first_stage(v, fs, &data, opts),
                    None => return None,
                },
            };
            fit.ok().and_then(|f| draw_from(&f, &truth, opts))
        })
        .collect();
    Replication {
        censoring: data.censoring_rate(),
        draws,
    }
}

fn mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

fn summarize(
    variant: EstimatorVariant,
    draws: &[&Draw],
    failures: usize,
    design: &SimulationDesign,
) -> VariantSummary {
    let layout = design.theta_true.layout();
    let free = variant.free_indices(&layout);
    let names = layout.names();
    let labels = layout.labels();
    let truth = design.theta_true.to_vec();
    let n = draws.len();
    let parameters = free
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let est: Vec<f64> = draws.iter().map(|d| d.estimates[k]).collect();
            let m = mean(&est);
            let dev: Vec<f64> = est.iter().map(|e| (e - m) * (e - m)).collect();
            let err: Vec<f64> = est.iter().map(|e| (e - truth[j]) * (e - truth[j])).collect();
            let frac = |f: &dyn Fn(&Draw) -> bool| draws.iter().filter(|d| f(d)).count() as f64 / n as f64;
            let se: Vec<f64> = draws.iter().map(|d| d.se[k]).collect();
            let use_: Vec<f64> = draws.iter().map(|d| d.uncorrected_se[k]).collect();
            ParameterSummary {
                name: names[j].clone(),
                label: labels[j].clone(),
                truth: truth[j],
                bias: m - truth[j],
                esd: if n > 1 {
                    (pairwise_sum(&dev) / (n - 1) as f64).sqrt()
                } else {
                    f64::NAN
                },
                rmse: mean(&err).sqrt(),
                cr: frac(&|d| d.covered[k]),
                mean_se: mean(&se),
                uncorrected_cr: frac(&|d| d.uncorrected_covered[k]),
                mean_uncorrected_se: mean(&use_),
            }
        })
        .collect();
    VariantSummary {
        variant,
        parameters,
        successes: n,
        failures,
    }
}

/// Fits every variant on `design.replications` generated datasets.
///
/// Replications run in parallel on the current rayon pool; results are
/// collected in replication order so the summary does not depend on scheduling.
pub fn run_monte_carlo(
    design: &SimulationDesign,
    variants: &[EstimatorVariant],
    opts: &FitOptions,
) -> Result<SimulationSummary> {
    design.validate()?;
    if design.replications < 2 {
        return Err(Error::Config(format!(
            "at least 2 replications are needed, got {}",
            design.replications
        )));
    }
    let mut variants = variants.to_vec();
    variants.dedup();

    let reps: Vec<Replication> = (0..design.replications as u64)
        .into_par_iter()
        .map(|r| replicate(design, &variants, opts, r))
        .collect();

    let censoring: Vec<f64> = reps.iter().map(|r| r.censoring).filter(|c| c.is_finite()).collect();
    let mut failed_replications = 0;
    for r in &reps {
        if r.draws.iter().any(Option::is_none) {
            failed_replications += 1;
        }
    }
    let summaries: Vec<VariantSummary> = variants
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let ok: Vec<&Draw> = reps.iter().filter_map(|r| r.draws[i].as_ref()).collect();
            let failures = reps.len() - ok.len();
            summarize(v, &ok, failures, design)
        })
        .collect();
    let healthy = summaries
        .iter()
        .all(|s| s.failures as f64 <= MAX_FAILURE_RATE * design.replications as f64 && s.successes >= 2);

    Ok(SimulationSummary {
        design: design.clone(),
        variants: summaries,
        censoring_rate: if censoring.is_empty() { f64::NAN } else { mean(&censoring) },
        failed_replications,
        healthy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::DesignId;

    #[test]
    fn smoke_two_replications() {
        let d = SimulationDesign::new(DesignId::Four, 300).with_replications(2).with_seed(4);
        let s = run_monte_carlo(&d, &[EstimatorVariant::TwoStep], &FitOptions::default()).unwrap();
        let v = s.variant(EstimatorVariant::TwoStep).unwrap();
        assert_eq!(v.successes + v.failures, 2);
        for p in &v.parameters {
            assert!(p.bias.is_finite() && p.esd.is_finite() && p.rmse.is_finite());
            assert!((0.0..=1.0).contains(&p.cr));
            let n = v.successes as f64;
            let identity = p.bias * p.bias + p.esd * p.esd * (n - 1.0) / n;
            assert!((p.rmse * p.rmse - identity).abs() < 1e-10);
        }
    }

    #[test]
    fn needs_two_replications() {
        let d = SimulationDesign::new(DesignId::Four, 100).with_replications(1);
        assert!(run_monte_carlo(&d, &[EstimatorVariant::Naive], &FitOptions::default()).is_err());
    }

    #[test]
    fn naive_and_independent_drop_parameters() {
        let d = SimulationDesign::new(DesignId::Two, 250).with_replications(3).with_seed(2);
        let s = run_monte_carlo(
            &d,
            &[EstimatorVariant::Naive, EstimatorVariant::Independent],
            &FitOptions::default(),
        )
        .unwrap();
        let naive = s.variant(EstimatorVariant::Naive).unwrap();
        assert!(naive.parameter("lambda_T").is_none() && naive.parameter("rho").is_some());
        let ind = s.variant(EstimatorVariant::Independent).unwrap();
        assert!(ind.parameter("rho").is_none() && ind.parameter("lambda_C").is_some());
    }
}
