use ivdc_core::estimation::{EstimatorVariant, FitOptions};
use ivdc_core::simulation::{generate_dataset, run_monte_carlo, summary_table, DesignId, NuScale, SimulationDesign};

fn alpha_t(s: &ivdc_core::simulation::SimulationSummary, v: EstimatorVariant) -> (f64, f64) {
    let p = s.variant(v).unwrap().parameter("alpha_T").unwrap();
    (p.rmse, p.esd)
}

#[test]
fn rmse_shrinks_with_n_and_oracle_is_tighter() {
    let variants = [EstimatorVariant::TwoStep, EstimatorVariant::Oracle];
    let mut prev = f64::INFINITY;
    for n in [250, 500, 1000] {
        let design = SimulationDesign::new(DesignId::Four, n).with_seed(5).with_replications(100);
        let s = run_monte_carlo(&design, &variants, &FitOptions::default()).unwrap();
        assert!(s.healthy);
        let (rmse, esd) = alpha_t(&s, EstimatorVariant::TwoStep);
        let (_, oracle_esd) = alpha_t(&s, EstimatorVariant::Oracle);
        assert!(rmse < prev, "n={n}: {rmse} !< {prev}");
        assert!(oracle_esd <= esd, "n={n}: oracle {oracle_esd} two-step {esd}");
        prev = rmse;
    }
}

#[test]
fn replications_are_independent_but_reproducible() {
    let design = SimulationDesign::new(DesignId::Two, 100).with_seed(9);
    let (a, va) = generate_dataset(&design, 0).unwrap();
    let (a2, va2) = generate_dataset(&design, 0).unwrap();
    let (b, _) = generate_dataset(&design, 1).unwrap();
    assert_eq!(va, va2);
    assert_eq!(a.observations()[0].y.to_bits(), a2.observations()[0].y.to_bits());
    assert_ne!(a.observations()[0].y, b.observations()[0].y);
    let other_seed = generate_dataset(&design.clone().with_seed(10), 0).unwrap().0;
    assert_ne!(a.observations()[0].y, other_seed.observations()[0].y);
}

#[test]
fn every_design_produces_both_outcomes() {
    for id in [DesignId::One, DesignId::Two, DesignId::Three, DesignId::Four] {
        for scale in [NuScale::StdDev, NuScale::Variance] {
            let design = SimulationDesign::new(id, 20_000).with_seed(1).with_nu_scale(scale);
            let (data, v) = generate_dataset(&design, 0).unwrap();
            let rate = data.censoring_rate();
            assert!(rate > 0.1 && rate < 0.9, "design {} censoring {rate}", id.number());
            assert_eq!(v.len(), data.len());
            assert_eq!(data.z_is_binary(), id.family() != ivdc_core::FirstStageFamily::Linear);
        }
    }
}

#[test]
fn summary_table_lists_each_variant_and_n() {
    let variants = [EstimatorVariant::TwoStep, EstimatorVariant::Naive];
    let runs: Vec<_> = [100, 200]
        .iter()
        .map(|&n| {
            let design = SimulationDesign::new(DesignId::Four, n).with_seed(3).with_replications(10);
            run_monte_carlo(&design, &variants, &FitOptions::default()).unwrap()
        })
        .collect();
    let table = summary_table(&runs);
    let header = table.csv.lines().next().unwrap();
    assert!(header.contains("bias_n100") && header.contains("cr_n200"));
    assert!(table.csv.lines().any(|l| l.starts_with("naive,alpha_T")));
    assert!(!table.csv.lines().any(|l| l.starts_with("naive,lambda_T")));
    assert!(table.text.contains("α_T"));
}

#[test]
fn too_few_replications_rejected() {
    let design = SimulationDesign::new(DesignId::Four, 100).with_replications(1);
    assert!(run_monte_carlo(&design, &[EstimatorVariant::TwoStep], &FitOptions::default()).is_err());
}

#[test]
fn design_config_round_trips_through_json() {
    let design = SimulationDesign::new(DesignId::Three, 750).with_seed(42).with_nu_scale(NuScale::Variance);
    let text = serde_json::to_string(&design).unwrap();
    assert!(text.contains("\"design\":3"));
    let back: SimulationDesign = serde_json::from_str(&text).unwrap();
    assert_eq!(back, design);
}
