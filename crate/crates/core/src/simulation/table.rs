//! Text and CSV rendering of Monte Carlo summaries.

use std::fmt::Write;

use super::monte_carlo::SimulationSummary;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryTable {
    pub text: String,
    pub csv: String,
}

const METRICS: [&str; 4] = ["bias", "esd", "rmse", "cr"];

/// One row per variant and parameter, with Bias/ESD/RMSE/CR for each summary
/// (typically one per sample size) side by side.
///
/// Variants and parameters follow the first summary; a variant or parameter
/// missing from a later summary leaves its cells empty.
pub fn summary_table(summaries: &[SimulationSummary]) -> SummaryTable {
    let mut csv = String::from("variant,parameter");
    for s in summaries {
        for m in METRICS {
            let _ = write!(csv, ",{m}_n{}", s.design.n);
        }
    }
    csv.push('\n');

    let mut text = String::new();
    if let Some(first) = summaries.first() {
        let _ = writeln!(
            text,
            "Design {}, {} replications, seed {}",
            first.design.design, first.design.replications, first.design.seed
        );
    }
    let _ = write!(text, "{:<12} {:<10}", "Estimator", "Parameter");
    for s in summaries {
        let _ = write!(text, " | {:^35}", format!("n = {}", s.design.n));
    }
    text.push('\n');
    let _ = write!(text, "{:<12} {:<10}", "", "");
    for _ in summaries {
        let _ = write!(text, " | {:>8} {:>8} {:>8} {:>8}", "Bias", "ESD", "RMSE", "CR");
    }
    text.push('\n');

    let Some(first) = summaries.first() else {
        return SummaryTable { text, csv };
    };
    for v in &first.variants {
        for p in &v.parameters {
            let _ = write!(csv, "{},{}", v.variant, p.name);
            let _ = write!(text, "{:<12} {:<10}", v.variant.as_str(), p.label);
            for s in summaries {
                let cell = s.variant(v.variant).and_then(|vs| vs.parameter(&p.name));
                match cell {
                    Some(c) => {
                        let _ = write!(csv, ",{},{},{},{}", c.bias, c.esd, c.rmse, c.cr);
                        let _ = write!(text, " | {:>8.3} {:>8.3} {:>8.3} {:>8.3}", c.bias, c.esd, c.rmse, c.cr);
                    }
                    None => {
                        csv.push_str(",,,,");
                        let _ = write!(text, " | {:>35}", "");
                    }
                }
            }
            csv.push('\n');
            text.push('\n');
        }
    }
    for s in summaries {
        let _ = writeln!(
            text,
            "n = {}: censoring {:.1}%, failed replications {}{}",
            s.design.n,
            100.0 * s.censoring_rate,
            s.failed_replications,
            if s.healthy { "" } else { " (more than 5% failed)" }
        );
    }
    SummaryTable { text, csv }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::EstimatorVariant;
    use crate::simulation::{DesignId, ParameterSummary, SimulationDesign, VariantSummary};

    fn fake(variants: Vec<VariantSummary>, n: usize) -> SimulationSummary {
        SimulationSummary {
            design: SimulationDesign::new(DesignId::Four, n),
            variants,
            censoring_rate: 0.46,
            failed_replications: 0,
            healthy: true,
        }
    }

    fn two_step_rows() -> VariantSummary {
        let layout = crate::model::ThetaLayout::new(1);
        VariantSummary {
            variant: EstimatorVariant::TwoStep,
            parameters: layout
                .names()
                .into_iter()
                .zip(layout.labels())
                .map(|(name, label)| ParameterSummary {
                    name,
                    label,
                    truth: 1.0,
                    bias: 0.01,
                    esd: 0.2,
                    rmse: 0.2,
                    cr: 0.95,
                    mean_se: 0.2,
                    uncorrected_cr: 0.9,
                    mean_uncorrected_se: 0.15,
                })
                .collect(),
            successes: 10,
            failures: 0,
        }
    }

    #[test]
    fn empty_variant_set_is_header_only() {
        let t = summary_table(&[fake(vec![], 500)]);
        assert_eq!(t.csv, "variant,parameter,bias_n500,esd_n500,rmse_n500,cr_n500\n");
        assert_eq!(summary_table(&[]).csv, "variant,parameter\n");
    }

    #[test]
    fn row_labels_in_table_order() {
        let t = summary_table(&[fake(vec![two_step_rows()], 250), fake(vec![two_step_rows()], 500)]);
        let labels: Vec<&str> = t
            .text
            .lines()
            .filter(|l| l.starts_with("two_step"))
            .map(|l| l.split_whitespace().nth(1).unwrap())
            .collect();
        assert_eq!(
            labels,
            ["β_{T,0}", "β_{T,1}", "α_T", "λ_T", "β_{C,0}", "β_{C,1}", "α_C", "λ_C", "σ_T", "σ_C", "ρ"]
        );
        assert_eq!(t.csv.lines().count(), 12);
        assert!(t.csv.lines().nth(1).unwrap().starts_with("two_step,beta_T0,0.01,0.2,0.2,0.95,0.01"));
    }
}
