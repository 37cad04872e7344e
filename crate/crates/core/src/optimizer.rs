//! Box-constrained maximization by cycles of one-dimensional Brent searches.
//!
//! Each run visits every coordinate once, maximizing the log-likelihood along
//! it over the full per-parameter box. Run 1 uses the natural order; later runs
//! use seeded random permutations. Runs stop when the log-likelihood of a run
//! is within `tol_ll` of the best previous one, or the budget
//! `n_params + n_extrarun` is spent.

use crate::dataio::Dataset;
use crate::inference::{self, FitResult};
use crate::likelihood::{LikelihoodContext, LikelihoodError};
use crate::params::{ParamBounds, ParamError, ParamVector};
use crate::timegrid::TimeGrid;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("objective is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("empty search interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },
    #[error("run {run}, parameter {index}: {source}")]
    Evaluation {
        run: usize,
        index: usize,
        #[source]
        source: LikelihoodError,
    },
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid option: {0}")]
    Options(String),
}

/// A scalar function of the full parameter vector, to be maximized.
pub trait Objective {
    fn evaluate(&self, values: &[f64]) -> Result<f64, LikelihoodError>;
}

impl Objective for LikelihoodContext {
    fn evaluate(&self, values: &[f64]) -> Result<f64, LikelihoodError> {
        self.loglik_values(values)
    }
}

/// Adapter for plain closures.
pub struct FnObjective<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Objective for FnObjective<F> {
    fn evaluate(&self, values: &[f64]) -> Result<f64, LikelihoodError> {
        Ok((self.0)(values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_extrarun: usize,
    pub tol_ll: f64,
    pub tol_optimize: f64,
    pub h_dd: f64,
    pub level: f64,
    pub seed: u64,
    pub verbose: bool,
    /// Report the full frailty dispersion `mu1 nu + mu2 gamma_k` (else only `mu2 gamma_k`).
    pub full_sd: bool,
    /// Use the literal 1.96 instead of the normal quantile for parameter CIs.
    pub literal_z: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_extrarun: 60,
            tol_ll: 1e-6,
            tol_optimize: 1e-6,
            h_dd: 1e-3,
            level: 0.95,
            seed: 0,
            verbose: false,
            full_sd: true,
            literal_z: false,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.tol_ll > 0.0) || !(self.tol_optimize > 0.0) || !(self.h_dd > 0.0) {
            return Err(OptimError::Options("tolerances and h_dd must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(OptimError::Options(format!("level {} not in (0, 1)", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    /// Log-likelihood reached at the end of each run.
    pub run_lls: Vec<f64>,
    /// Best log-likelihood seen up to and including each run.
    pub best_lls: Vec<f64>,
    pub n_run: usize,
    pub converged: bool,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - sqrt 5) / 2
const MAX_BRENT_ITER: usize = 1000;

/// Brent's method (golden section + parabolic interpolation) for the maximum of
/// `f` on `[lo, hi]`. Never evaluates exactly at the endpoints.
pub fn brent_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64), OptimError>
where
    F: FnMut(f64) -> Result<f64, LikelihoodError>,
{
    if !(lo < hi) {
        return Err(OptimError::EmptyInterval { lo, hi });
    }
    let mut g = |x: f64| -> Result<f64, OptimError> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(-v)
        } else {
            Err(OptimError::NonFinite { x })
        }
    };
    let eps = f64::EPSILON.sqrt();
    let tol3 = tol / 3.0;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut v, mut w) = (x, x);
    let mut fx = g(x)?;
    let (mut fv, mut fw) = (fx, fx);
    let (mut d, mut e): (f64, f64) = (0.0, 0.0);

    for _ in 0..MAX_BRENT_ITER {
        let xm = 0.5 * (a + b);
        let tol1 = eps * x.abs() + tol3;
        let t2 = 2.0 * tol1;
        if (x - xm).abs() <= t2 - 0.5 * (b - a) {
            break;
        }
        let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
        if e.abs() > tol1 {
            r = (x - w) * (fx - fv);
            q = (x - v) * (fx - fw);
            p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            r = e;
            e = d;
        }
        if p.abs() >= (0.5 * q * r).abs() || p <= q * (a - x) || p >= q * (b - x) {
            e = if x < xm { b - x } else { a - x };
            d = GOLDEN * e;
        } else {
            d = p / q;
            let u = x + d;
            if u - a < t2 || b - u < t2 {
                d = if x >= xm { -tol1 } else { tol1 };
            }
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = g(u)?;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((x, -fx))
}

/// One sweep over `order`, replacing each coordinate by its 1D maximizer over
/// its box. A coordinate keeps its current value when the line search returns
/// a lower objective than the current point.
pub fn coordinate_run<O: Objective + ?Sized>(
    p: &ParamVector,
    order: &[usize],
    bounds: &ParamBounds,
    objective: &O,
    tol: f64,
) -> Result<(ParamVector, f64), OptimError> {
    let mut current = p.clone();
    let mut ll = objective.evaluate(current.values())?;
    let mut scratch = current.values().to_vec();
    for &index in order {
        let (lo, hi) = bounds.interval(index);
        let (x_star, ll_star) = brent_max(
            |value| {
                scratch[index] = value;
                objective.evaluate(&scratch)
            },
            lo,
            hi,
            tol,
        )
        .map_err(|e| match e {
            OptimError::Likelihood(source) => OptimError::Evaluation { run: 0, index, source },
            other => other,
        })?;
        if ll_star >= ll {
            current.values_mut()[index] = x_star;
            ll = ll_star;
        }
        scratch.copy_from_slice(current.values());
    }
    Ok((current, ll))
}

/// The multi-run coordinate search alone, from a seeded uniform start.
pub fn maximize<O: Objective + ?Sized>(
    objective: &O,
    bounds: &ParamBounds,
    options: &FitOptions,
) -> Result<(ParamVector, f64, OptimTrace), OptimError> {
    options.validate()?;
    let n_params = bounds.layout().n_params();
    let n_total_run = n_params + options.n_extrarun;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut p = bounds.sample(&mut rng);
    let mut p_optimal = p.clone();
    let mut ll_optimal = f64::NEG_INFINITY;
    let mut actual_tol = f64::INFINITY;
    let mut trace = OptimTrace {
        run_lls: Vec::new(),
        best_lls: Vec::new(),
        n_run: 0,
        converged: false,
    };
    let mut order: Vec<usize> = (0..n_params).collect();

    while trace.n_run < n_total_run && actual_tol > options.tol_ll {
        let run = trace.n_run + 1;
        if run > 1 {
            order.shuffle(&mut rng);
        }
        let (next, ll_current) = coordinate_run(&p, &order, bounds, objective, options.tol_optimize)
            .map_err(|e| match e {
                OptimError::Evaluation { index, source, .. } => OptimError::Evaluation { run, index, source },
                other => other,
            })?;
        debug_assert!(bounds.contains(next.values()));
        p = next;
        actual_tol = (ll_optimal - ll_current).abs();
        if ll_optimal < ll_current {
            ll_optimal = ll_current;
            p_optimal = p.clone();
        }
        trace.run_lls.push(ll_current);
        trace.best_lls.push(ll_optimal);
        trace.n_run = run;
        if options.verbose {
            let tail = &trace.run_lls[trace.run_lls.len().saturating_sub(3)..];
            log::info!("run {run}: ll = {ll_current:.6}, previous values {tail:?}");
        }
    }
    trace.converged = actual_tol <= options.tol_ll;
    Ok((p_optimal, ll_optimal, trace))
}

/// Fit the model and compute every post-fit quantity.
pub fn fit(
    dataset: Dataset,
    grid: TimeGrid,
    category_min: [f64; 5],
    category_max: [f64; 5],
    options: &FitOptions,
) -> Result<FitResult, OptimError> {
    let ctx = LikelihoodContext::new(dataset, grid)?;
    let bounds = ParamBounds::expand(category_min, category_max, ctx.layout())?;
    fit_context(&ctx, &bounds, options)
}

pub fn fit_context(
    ctx: &LikelihoodContext,
    bounds: &ParamBounds,
    options: &FitOptions,
) -> Result<FitResult, OptimError> {
    let (p_hat, ll, trace) = maximize(ctx, bounds, options)?;
    Ok(inference::assemble(ctx, bounds, p_hat, ll, trace, options)?)
}
