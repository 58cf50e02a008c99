//! Fit reports: text (T equation, C equation, scales and correlation), JSON and CSV.

use std::fmt::Write;
use std::path::Path;

use ivdc_core::estimation::FitResult;
use ivdc_core::io::ColumnMap;
use ivdc_core::FirstStageFamily;
use serde_json::{json, Map, Value};

pub struct FitContext<'a> {
    pub input: &'a Path,
    pub columns: &'a ColumnMap,
    pub log_time: bool,
    pub family: FirstStageFamily,
    pub seed: u64,
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

pub fn fit_json(fit: &FitResult, ctx: &FitContext<'_>) -> String {
    let names = fit.names();
    let est = fit.estimates();
    let mut estimates = Map::new();
    let mut std_errors = Map::new();
    let mut ci = Map::new();
    let mut p_values = Map::new();
    for (k, name) in names.iter().enumerate() {
        estimates.insert(name.clone(), num(est[k]));
        if fit.has_inference() {
            std_errors.insert(name.clone(), num(fit.std_errors[k]));
            ci.insert(name.clone(), json!([num(fit.ci_lower[k]), num(fit.ci_upper[k])]));
            p_values.insert(name.clone(), num(fit.p_values[k]));
        }
    }
    let doc = json!({
        "variant": fit.variant.as_str(),
        "n": fit.n,
        "estimates": estimates,
        "std_errors": std_errors,
        "ci": ci,
        "p_values": p_values,
        "loglik": num(fit.loglik),
        "converged": fit.converged,
        "seed": ctx.seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

pub fn fit_csv(fit: &FitResult) -> String {
    let mut s = String::from("parameter,estimate,std_error,p_value,ci_lower,ci_upper\n");
    let est = fit.estimates();
    for (k, name) in fit.names().iter().enumerate() {
        let _ = write!(s, "{name},{}", est[k]);
        if fit.has_inference() {
            let _ = writeln!(
                s,
                ",{},{},{},{}",
                fit.std_errors[k], fit.p_values[k], fit.ci_lower[k], fit.ci_upper[k]
            );
        } else {
            s.push_str(",,,,\n");
        }
    }
    s
}

pub fn fit_text(fit: &FitResult, ctx: &FitContext<'_>) -> String {
    let layout = fit.layout();
    let labels = fit.labels();
    let est = fit.estimates();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "ivdc {}  estimator: {}  first stage: {}  n = {}  seed = {}",
        env!("CARGO_PKG_VERSION"),
        fit.variant,
        ctx.family,
        fit.n,
        ctx.seed
    );
    let c = ctx.columns;
    let _ = writeln!(
        s,
        "input: {}  time = {}{}  status = {}  z = {}  w = {}  covariates = [{}]",
        ctx.input.display(),
        c.time,
        if ctx.log_time { " (log)" } else { "" },
        c.status,
        c.z,
        c.w,
        c.covariates.join(", ")
    );
    let pct = 100.0 * fit.level;
    let header = format!(
        "  {:<10} {:>10} {:>10} {:>9}   {:>23}\n",
        "",
        "Estimate",
        "SE",
        "p-value",
        format!("{pct:.0}% CI")
    );

    let blocks: [(&str, Vec<usize>); 3] = [
        (
            "T equation",
            layout
                .beta_t()
                .chain([layout.alpha_t(), layout.lambda_t()])
                .collect(),
        ),
        (
            "C equation",
            layout
                .beta_c()
                .chain([layout.alpha_c(), layout.lambda_c()])
                .collect(),
        ),
        ("Error distribution", vec![layout.sigma_t(), layout.sigma_c(), layout.rho()]),
    ];
    for (title, indices) in blocks {
        let rows: Vec<usize> = indices.iter().filter_map(|&j| fit.position(j)).collect();
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(s, "\n{title}");
        s.push_str(&header);
        for k in rows {
            let _ = write!(s, "  {:<10} {:>10.4}", labels[k], est[k]);
            if fit.has_inference() {
                let _ = writeln!(
                    s,
                    " {:>10.4} {:>9.4}   [{:>10.4}, {:>10.4}]",
                    fit.std_errors[k], fit.p_values[k], fit.ci_lower[k], fit.ci_upper[k]
                );
            } else {
                s.push('\n');
            }
        }
    }
    if let Some(fs) = &fit.first_stage {
        let g: Vec<String> = fs.gamma_hat.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(s, "\nfirst stage ({}): gamma = ({})", fs.family, g.join(", "));
    }
    let _ = writeln!(
        s,
        "\nmean log-likelihood {:.6}  converged: {}  iterations: {}  score sup-norm: {:.2e}",
        fit.loglik,
        if fit.converged { "yes" } else { "no" },
        fit.iterations,
        fit.score_norm
    );
    if !fit.has_inference() {
        let _ = writeln!(s, "standard errors unavailable: the fit did not converge");
    }
    s
}
