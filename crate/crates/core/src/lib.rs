//! Time-dependent shared gamma frailty Cox model with a piecewise-constant
//! baseline hazard.
//!
//! The frailty of group `j` in interval `k` is `Z_jk = alpha_j + eps_jk`, with
//! independent gamma components of means `mu1` and `mu2 = 1 - mu1`. Parameters
//! are estimated by maximizing the closed-form marginal log-likelihood with
//! box-constrained coordinate Brent searches.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod analysis1d;
pub mod dataio;
pub mod inference;
pub mod likelihood;
pub mod optimizer;
pub mod params;
pub mod report;
pub mod simulate;
pub mod timegrid;

pub use analysis1d::{profile_1d, Profile1DResult, ProfileOptions};
pub use dataio::{parse_formula, ColumnEncoding, DataError, Dataset, FormulaSpec, Table};
pub use inference::{FitResult, PosteriorFrailty, SurvivalTable};
pub use likelihood::{LikelihoodContext, LikelihoodError};
pub use optimizer::{fit, FitOptions, Objective, OptimError, OptimTrace};
pub use params::{Category, ParamBounds, ParamLayout, ParamVector, EPS};
pub use report::FitReport;
pub use simulate::{simulate_dataset, SimData, SimSpec};
pub use timegrid::TimeGrid;

/// Category bounds used in the reference application, `[phi, beta, mu1, nu, gamma]`.
pub const DEFAULT_CATEGORY_MIN: [f64; 5] = [-8.0, -2.0, EPS, EPS, EPS];
pub const DEFAULT_CATEGORY_MAX: [f64; 5] = [-EPS, 0.5, 1.0 - EPS, 1.0, 10.0];
