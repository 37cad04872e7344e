//! Versioned JSON document for a fitted model.

use crate::dataio::{ColumnEncoding, FormulaSpec};
use crate::inference::{FitResult, FrailtyDispersion};
use crate::optimizer::OptimTrace;
use crate::params::{ParamBounds, ParamError, ParamLayout, ParamVector};
use crate::timegrid::TimeGrid;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametersRange {
    #[serde(rename = "ParametersRangeMin")]
    pub min: Vec<f64>,
    #[serde(rename = "ParametersRangeMax")]
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoriesRange {
    pub min: [f64; 5],
    pub max: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametersCi {
    #[serde(rename = "ParamsCI_left")]
    pub left: Vec<Option<f64>>,
    #[serde(rename = "ParamsCI_right")]
    pub right: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionDoc {
    #[serde(rename = "FrailtyVariance")]
    pub variance: Vec<f64>,
    #[serde(rename = "FrailtyStandardDeviation")]
    pub sd: Vec<f64>,
    /// `full` or `partial`: which of the two blocks below is reported above.
    #[serde(rename = "Type")]
    pub kind: String,
    #[serde(rename = "Full")]
    pub full: FrailtyDispersion,
    #[serde(rename = "Partial")]
    pub partial: FrailtyDispersion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEstimates {
    pub alpha: Vec<f64>,
    pub eps: Vec<Vec<f64>>,
    #[serde(rename = "Z")]
    pub z: Vec<Vec<f64>>,
    #[serde(rename = "MeanZ")]
    pub mean_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorVariance {
    #[serde(rename = "alphaVar")]
    pub alpha: Vec<f64>,
    #[serde(rename = "epsVar")]
    pub eps: Vec<Vec<f64>>,
    #[serde(rename = "ZVar")]
    pub z: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorCi {
    #[serde(rename = "PostFrailtyCI_left")]
    pub left: Vec<Vec<f64>>,
    #[serde(rename = "PostFrailtyCI_right")]
    pub right: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct FitReport {
    #[serde(rename = "schema_version")]
    pub schema_version: u32,
    #[serde(rename = "formula")]
    pub formula: String,
    pub regressors: Vec<String>,
    pub n_regressors: usize,
    pub cluster_variable: String,
    pub n_clusters: usize,
    pub time_domain: TimeGrid,
    pub n_intervals: usize,
    pub n_parameters: usize,
    pub parameters_categories: [usize; 5],
    pub parameters_range: ParametersRange,
    pub categories_range: CategoriesRange,
    pub loglikelihood: f64,
    #[serde(rename = "AIC")]
    pub aic: f64,
    pub status: bool,
    pub n_run: usize,
    pub optimal_parameters: Vec<f64>,
    /// `null` where the curvature does not define a standard error.
    pub standard_error_parameters: Vec<Option<f64>>,
    #[serde(rename = "ParametersCI")]
    pub parameters_ci: ParametersCi,
    pub level: f64,
    pub z_value: f64,
    pub baseline_hazard: Vec<f64>,
    pub frailty_dispersion: DispersionDoc,
    pub posterior_frailty_estimates: PosteriorEstimates,
    pub posterior_frailty_variance: PosteriorVariance,
    #[serde(rename = "PosteriorFrailtyCI")]
    pub posterior_frailty_ci: PosteriorCi,
    pub group_names: Vec<String>,
    pub encoding: Vec<ColumnEncoding>,
    pub hessian_diagonal: Vec<Option<f64>>,
    pub seed: u64,
    /// Column the event status was read from, if any.
    #[serde(default)]
    pub status_column: Option<String>,
    pub trace: OptimTrace,
}

impl FitReport {
    pub fn new(fit: &FitResult, formula: &FormulaSpec) -> Self {
        let layout = fit.layout;
        let post = &fit.posterior;
        let reported = fit.reported_dispersion().clone();
        Self {
            schema_version: SCHEMA_VERSION,
            formula: formula.to_string(),
            regressors: fit.covariate_names.clone(),
            n_regressors: layout.n_regressors(),
            cluster_variable: formula.cluster.clone(),
            n_clusters: fit.group_names.len(),
            time_domain: fit.grid.clone(),
            n_intervals: layout.n_intervals(),
            n_parameters: layout.n_params(),
            parameters_categories: layout.category_sizes(),
            parameters_range: ParametersRange {
                min: fit.bounds.min().to_vec(),
                max: fit.bounds.max().to_vec(),
            },
            categories_range: CategoriesRange {
                min: fit.bounds.category_min(),
                max: fit.bounds.category_max(),
            },
            loglikelihood: fit.loglik,
            aic: fit.aic,
            status: fit.converged,
            n_run: fit.n_run,
            optimal_parameters: fit.optimal_params.values().to_vec(),
            standard_error_parameters: fit.se.clone(),
            parameters_ci: ParametersCi {
                left: fit.ci_lo.clone(),
                right: fit.ci_hi.clone(),
            },
            level: fit.level,
            z_value: fit.z,
            baseline_hazard: fit.baseline_hazard.clone(),
            frailty_dispersion: DispersionDoc {
                variance: reported.variance,
                sd: reported.sd,
                kind: if fit.report_full_sd { "full" } else { "partial" }.into(),
                full: fit.dispersion_full.clone(),
                partial: fit.dispersion_partial.clone(),
            },
            posterior_frailty_estimates: PosteriorEstimates {
                alpha: post.alpha.clone(),
                eps: post.eps.clone(),
                z: post.z.clone(),
                mean_z: post.mean_z(),
            },
            posterior_frailty_variance: PosteriorVariance {
                alpha: post.var_alpha.clone(),
                eps: post.var_eps.clone(),
                z: post.var_z.clone(),
            },
            posterior_frailty_ci: PosteriorCi {
                left: post.ci_lo.clone(),
                right: post.ci_hi.clone(),
            },
            group_names: fit.group_names.clone(),
            encoding: fit.encoding.clone(),
            hessian_diagonal: fit.hessian_diag.clone(),
            seed: fit.seed,
            status_column: None,
            trace: fit.trace.clone(),
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.n_intervals, self.n_regressors)
    }

    pub fn bounds(&self) -> Result<ParamBounds, ParamError> {
        ParamBounds::expand(self.categories_range.min, self.categories_range.max, self.layout())
    }

    pub fn optimal(&self) -> Result<ParamVector, ParamError> {
        ParamVector::new(self.optimal_parameters.clone(), self.layout())
    }

    /// Structural consistency of the document.
    pub fn check(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!("unsupported schema_version {}", self.schema_version));
        }
        let layout = self.layout();
        let n_p = layout.n_params();
        let l = self.n_intervals;
        let n = self.n_clusters;
        let checks = [
            (self.n_parameters == n_p, "NParameters"),
            (self.regressors.len() == self.n_regressors, "Regressors"),
            (self.time_domain.n_intervals() == l, "TimeDomain"),
            (self.parameters_categories == layout.category_sizes(), "ParametersCategories"),
            (self.parameters_range.min.len() == n_p && self.parameters_range.max.len() == n_p, "ParametersRange"),
            (self.optimal_parameters.len() == n_p, "OptimalParameters"),
            (self.standard_error_parameters.len() == n_p, "StandardErrorParameters"),
            (self.parameters_ci.left.len() == n_p && self.parameters_ci.right.len() == n_p, "ParametersCI"),
            (self.baseline_hazard.len() == l, "BaselineHazard"),
            (self.frailty_dispersion.variance.len() == l, "FrailtyDispersion"),
            (self.group_names.len() == n, "GroupNames"),
            (self.posterior_frailty_estimates.alpha.len() == n, "PosteriorFrailtyEstimates.alpha"),
            (
                self.posterior_frailty_estimates.z.len() == n
                    && self.posterior_frailty_estimates.z.iter().all(|r| r.len() == l),
                "PosteriorFrailtyEstimates.Z",
            ),
            (self.posterior_frailty_variance.z.len() == n, "PosteriorFrailtyVariance"),
            (self.posterior_frailty_ci.left.len() == n, "PosteriorFrailtyCI"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, field)) => Err(format!("field {field} has inconsistent shape")),
            None => Ok(()),
        }
    }
}
