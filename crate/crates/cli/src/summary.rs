//! Console summary of a fitted model.

use frailtime_core::FitReport;
use std::fmt::Write;

const RULE: &str = "-------------------------------------------------------------------------------";

/// Round to `digits` decimals and drop trailing zeros.
pub fn round_trim(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" { "0".into() } else { s }
}

pub fn render(report: &FitReport, n_units: usize) -> String {
    let mut out = String::new();
    let sizes = report.parameters_categories;
    let status = if report.status {
        format!("TRUE (Convergence in  {}  runs).", report.n_run)
    } else {
        format!("FALSE (No convergence after  {}  runs).", report.n_run)
    };
    let _ = writeln!(out, "Output of the time-dependent shared frailty model");
    let _ = writeln!(out, "{RULE}");
    let _ = writeln!(out, "Call:  {}", report.formula);
    let _ = writeln!(
        out,
        "with cluster variable ' {} ' ( {} clusters, {} units).",
        report.cluster_variable, report.n_clusters, n_units
    );
    let _ = writeln!(out, "{RULE}");
    let _ = writeln!(out, "Log-likelihood:            {}", round_trim(report.loglikelihood, 3));
    let _ = writeln!(out, "AIC:                        {}", round_trim(report.aic, 4));
    let _ = writeln!(out, "Status of the algorithm:    {status}");
    let _ = writeln!(out, "{RULE}");
    let _ = writeln!(out, "Overall number of parameters  {},", report.n_parameters);
    let _ = writeln!(
        out,
        "divided as (phi, betar, mu1, nu, gammak) = ( {} , {} , {} , {} , {} ),",
        sizes[0], sizes[1], sizes[2], sizes[3], sizes[4]
    );
    let _ = writeln!(out, "with: number of intervals = {}", report.n_intervals);
    let _ = writeln!(out, "      number of regressors = {} .", report.n_regressors);
    let _ = writeln!(out, "{RULE}");
    let _ = writeln!(out, "Estimated regressors (standard error):");
    let offset = sizes[0];
    for (r, name) in report.regressors.iter().enumerate() {
        let est = report.optimal_parameters[offset + r];
        let se = match report.standard_error_parameters[offset + r] {
            Some(se) => round_trim(se, 4),
            None => "NA".into(),
        };
        let _ = writeln!(out, "{name} : {} ({se})", round_trim(est, 4));
    }
    let _ = writeln!(out, "{RULE}");
    out
}
