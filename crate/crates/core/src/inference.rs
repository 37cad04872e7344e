//! Post-fit quantities: curvature-based standard errors, Wald intervals, AIC,
//! frailty dispersion, empirical-Bayes posterior frailties and conditional
//! survival curves.

use crate::dataio::{ColumnEncoding, Dataset};
use crate::likelihood::{dot, LikelihoodContext, LikelihoodError, ParamView};
use crate::optimizer::{FitOptions, Objective, OptimTrace};
use crate::params::{ParamBounds, ParamLayout, ParamVector};
use crate::timegrid::TimeGrid;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Multiplier used for posterior frailty intervals, regardless of `level`.
pub const POSTERIOR_Z: f64 = 1.96;

/// Centered second differences along each coordinate. No projection onto the
/// box is applied; an entry whose stencil is not evaluable is `None`.
pub fn hessian_diag<O: Objective + ?Sized>(objective: &O, p_hat: &[f64], h: f64) -> Vec<Option<f64>> {
    let centre = match objective.evaluate(p_hat) {
        Ok(v) if v.is_finite() => v,
        _ => return vec![None; p_hat.len()],
    };
    let mut x = p_hat.to_vec();
    (0..p_hat.len())
        .map(|i| {
            x[i] = p_hat[i] - h;
            let lo = objective.evaluate(&x);
            x[i] = p_hat[i] + h;
            let hi = objective.evaluate(&x);
            x[i] = p_hat[i];
            match (lo, hi) {
                (Ok(lo), Ok(hi)) if lo.is_finite() && hi.is_finite() => {
                    Some((lo - 2.0 * centre + hi) / (h * h))
                }
                _ => None,
            }
        })
        .collect()
}

/// `1 / sqrt(-H_pp)` where the curvature is negative.
pub fn standard_errors(hdiag: &[Option<f64>]) -> Vec<Option<f64>> {
    hdiag
        .iter()
        .map(|h| match *h {
            Some(h) if -h > 0.0 => Some(1.0 / (-h).sqrt()),
            _ => None,
        })
        .collect()
}

/// Two-sided standard normal quantile for a confidence `level`.
pub fn z_value(level: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

pub fn confidence_intervals(
    p_hat: &[f64],
    se: &[Option<f64>],
    z: f64,
) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    p_hat
        .iter()
        .zip(se)
        .map(|(&p, s)| match *s {
            Some(s) => (Some(p - z * s), Some(p + z * s)),
            None => (None, None),
        })
        .unzip()
}

pub fn aic(n_params: usize, loglik: f64) -> f64 {
    2.0 * n_params as f64 - 2.0 * loglik
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrailtyDispersion {
    pub variance: Vec<f64>,
    pub sd: Vec<f64>,
}

/// `mu1 nu + mu2 gamma_k` when `full`, else `mu2 gamma_k`.
pub fn frailty_dispersion(p_hat: &ParamVector, full: bool) -> FrailtyDispersion {
    let shared = if full { p_hat.mu1() * p_hat.nu() } else { 0.0 };
    let variance: Vec<f64> = p_hat.gamma().iter().map(|g| shared + p_hat.mu2() * g).collect();
    let sd = variance.iter().map(|v| v.sqrt()).collect();
    FrailtyDispersion { variance, sd }
}

/// Posterior frailty estimates. Matrices are indexed `[group][interval]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFrailty {
    /// Unnormalized posterior means.
    pub raw_alpha: Vec<f64>,
    pub raw_eps: Vec<Vec<f64>>,
    pub alpha_max: f64,
    pub eps_max: f64,
    pub alpha: Vec<f64>,
    pub eps: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub var_alpha: Vec<f64>,
    pub var_eps: Vec<Vec<f64>>,
    pub var_z: Vec<Vec<f64>>,
    pub ci_lo: Vec<Vec<f64>>,
    pub ci_hi: Vec<Vec<f64>>,
}

impl PosteriorFrailty {
    /// Average of all `Z_jk`.
    pub fn mean_z(&self) -> f64 {
        let (sum, count) = self
            .z
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        sum / count as f64
    }
}

/// `(N_jk, H_jk)` per group.
pub type GroupHistories = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Per-group event counts `N_jk` and at-risk cumulative hazards `H_jk`.
pub fn group_histories(ctx: &LikelihoodContext, p_hat: &ParamVector) -> Result<GroupHistories, LikelihoodError> {
    let view = ParamView::new(p_hat.values(), ctx.layout())?;
    let temporal = ctx.temporal();
    let l = ctx.layout().n_intervals();
    let mut counts = Vec::with_capacity(ctx.n_groups());
    let mut hazards = Vec::with_capacity(ctx.n_groups());
    for j in 0..ctx.n_groups() {
        let mut n_jk = vec![0.0; l];
        let mut h_jk = vec![0.0; l];
        for &i in ctx.members(j) {
            let lp = dot(ctx.dataset().row(i), view.beta);
            let (e, d, y) = (temporal.exposure_row(i), temporal.event_row(i), temporal.at_risk_row(i));
            for k in 0..l {
                n_jk[k] += f64::from(d[k]);
                if y[k] == 1 {
                    h_jk[k] += e[k] * (view.phi[k] + lp).exp();
                }
            }
        }
        counts.push(n_jk);
        hazards.push(h_jk);
    }
    Ok((counts, hazards))
}

/// Gamma posterior mean and variance for a prior with mean `m` and variance
/// parameter `v` (shape `m/v`, rate `1/v`) after `n` events over hazard `h`.
fn gamma_posterior(m: f64, v: f64, n: f64, h: f64) -> (f64, f64) {
    let denom = 1.0 + v * h;
    let mean = (m + v * n) / denom;
    (mean, v * mean / denom)
}

pub fn posterior_frailty(ctx: &LikelihoodContext, p_hat: &ParamVector) -> Result<PosteriorFrailty, LikelihoodError> {
    let (counts, hazards) = group_histories(ctx, p_hat)?;
    Ok(posterior_from_histories(p_hat, &counts, &hazards))
}

pub fn posterior_from_histories(p_hat: &ParamVector, counts: &[Vec<f64>], hazards: &[Vec<f64>]) -> PosteriorFrailty {
    let (mu1, mu2, nu, gamma) = (p_hat.mu1(), p_hat.mu2(), p_hat.nu(), p_hat.gamma());
    let mut raw_alpha = Vec::with_capacity(counts.len());
    let mut raw_var_alpha = Vec::with_capacity(counts.len());
    let mut raw_eps = Vec::with_capacity(counts.len());
    let mut raw_var_eps = Vec::with_capacity(counts.len());
    for (n_jk, h_jk) in counts.iter().zip(hazards) {
        let (a, va) = gamma_posterior(mu1, nu, n_jk.iter().sum(), h_jk.iter().sum());
        raw_alpha.push(a);
        raw_var_alpha.push(va);
        let (e, ve): (Vec<f64>, Vec<f64>) = (0..gamma.len())
            .map(|k| gamma_posterior(mu2, gamma[k], n_jk[k], h_jk[k]))
            .unzip();
        raw_eps.push(e);
        raw_var_eps.push(ve);
    }
    let alpha_max = raw_alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps_max = raw_eps.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);

    let alpha: Vec<f64> = raw_alpha.iter().map(|a| a / alpha_max).collect();
    let var_alpha: Vec<f64> = raw_var_alpha.iter().map(|v| v / (alpha_max * alpha_max)).collect();
    let eps: Vec<Vec<f64>> = raw_eps
        .iter()
        .map(|row| row.iter().map(|e| e / eps_max).collect())
        .collect();
    let var_eps: Vec<Vec<f64>> = raw_var_eps
        .iter()
        .map(|row| row.iter().map(|v| v / (eps_max * eps_max)).collect())
        .collect();
    let z: Vec<Vec<f64>> = eps
        .iter()
        .zip(&alpha)
        .map(|(row, a)| row.iter().map(|e| a + e).collect())
        .collect();
    let var_z: Vec<Vec<f64>> = var_eps
        .iter()
        .zip(&var_alpha)
        .map(|(row, va)| row.iter().map(|ve| va + ve).collect())
        .collect();
    let half: Vec<Vec<f64>> = var_z
        .iter()
        .map(|row| row.iter().map(|v| POSTERIOR_Z * v.sqrt()).collect())
        .collect();
    let combine = |sign: f64| -> Vec<Vec<f64>> {
        z.iter()
            .zip(&half)
            .map(|(zr, hr)| zr.iter().zip(hr).map(|(z, h)| z + sign * h).collect())
            .collect()
    };
    let (ci_lo, ci_hi) = (combine(-1.0), combine(1.0));
    PosteriorFrailty {
        raw_alpha,
        raw_eps,
        alpha_max,
        eps_max,
        alpha,
        eps,
        z,
        var_alpha,
        var_eps,
        var_z,
        ci_lo,
        ci_hi,
    }
}

/// Survival of one unit at each interval right endpoint given its group's frailties.
pub fn survival_curve(linpred: f64, phi: &[f64], z: &[f64], widths: &[f64]) -> Vec<f64> {
    let scale = linpred.exp();
    let mut cumulative = 0.0;
    phi.iter()
        .zip(z)
        .zip(widths)
        .map(|((phi, z), w)| {
            cumulative += z * phi.exp() * w;
            (-scale * cumulative).exp()
        })
        .collect()
}

/// One row per unit: its group label and `S(a_1), ..., S(a_L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTable {
    pub groups: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SurvivalTable {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let l = self.values.first().map_or(0, Vec::len);
        let mut header = vec!["group".to_string()];
        header.extend((1..=l).map(|k| format!("S_{k}")));
        w.write_record(&header)?;
        for (g, row) in self.groups.iter().zip(&self.values) {
            let mut rec = vec![g.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Conditional survival for every unit of `dataset`, whose group indices must
/// address rows of `z`.
pub fn conditional_survival(dataset: &Dataset, grid: &TimeGrid, phi: &[f64], beta: &[f64], z: &[Vec<f64>]) -> SurvivalTable {
    survival_for_design(
        dataset.design(),
        dataset.cluster_of(),
        dataset.group_names(),
        grid,
        phi,
        beta,
        z,
    )
}

/// Same as [`conditional_survival`] on a raw row-major design with
/// `beta.len()` columns.
pub fn survival_for_design(
    design: &[f64],
    cluster_of: &[usize],
    group_names: &[String],
    grid: &TimeGrid,
    phi: &[f64],
    beta: &[f64],
    z: &[Vec<f64>],
) -> SurvivalTable {
    let widths = grid.widths();
    let r = beta.len();
    let (groups, values) = cluster_of
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let lp = dot(&design[i * r..(i + 1) * r], beta);
            (group_names[j].clone(), survival_curve(lp, phi, &z[j], &widths))
        })
        .unzip();
    SurvivalTable { groups, values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub layout: ParamLayout,
    pub bounds: ParamBounds,
    pub optimal_params: ParamVector,
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
    pub n_run: usize,
    pub trace: OptimTrace,
    pub hessian_diag: Vec<Option<f64>>,
    pub se: Vec<Option<f64>>,
    pub ci_lo: Vec<Option<f64>>,
    pub ci_hi: Vec<Option<f64>>,
    pub level: f64,
    pub z: f64,
    pub baseline_hazard: Vec<f64>,
    pub dispersion_full: FrailtyDispersion,
    pub dispersion_partial: FrailtyDispersion,
    /// Whether `full` is the dispersion the user asked to report.
    pub report_full_sd: bool,
    pub posterior: PosteriorFrailty,
    pub grid: TimeGrid,
    pub group_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub encoding: Vec<ColumnEncoding>,
    pub seed: u64,
}

impl FitResult {
    pub fn reported_dispersion(&self) -> &FrailtyDispersion {
        if self.report_full_sd {
            &self.dispersion_full
        } else {
            &self.dispersion_partial
        }
    }

    pub fn survival(&self, dataset: &Dataset) -> SurvivalTable {
        conditional_survival(
            dataset,
            &self.grid,
            self.optimal_params.phi(),
            self.optimal_params.beta(),
            &self.posterior.z,
        )
    }
}

/// Gather every inference output at the optimum found by the optimizer.
pub fn assemble(
    ctx: &LikelihoodContext,
    bounds: &ParamBounds,
    p_hat: ParamVector,
    loglik: f64,
    trace: OptimTrace,
    options: &FitOptions,
) -> Result<FitResult, LikelihoodError> {
    let layout = ctx.layout();
    let hdiag = hessian_diag(ctx, p_hat.values(), options.h_dd);
    let se = standard_errors(&hdiag);
    let z = if options.literal_z { 1.96 } else { z_value(options.level) };
    let (ci_lo, ci_hi) = confidence_intervals(p_hat.values(), &se, z);
    let posterior = posterior_frailty(ctx, &p_hat)?;
    let dataset = ctx.dataset();
    Ok(FitResult {
        layout,
        bounds: bounds.clone(),
        loglik,
        aic: aic(layout.n_params(), loglik),
        converged: trace.converged,
        n_run: trace.n_run,
        trace,
        hessian_diag: hdiag,
        se,
        ci_lo,
        ci_hi,
        level: options.level,
        z,
        baseline_hazard: p_hat.phi().iter().map(|p| p.exp()).collect(),
        dispersion_full: frailty_dispersion(&p_hat, true),
        dispersion_partial: frailty_dispersion(&p_hat, false),
        report_full_sd: options.full_sd,
        posterior,
        grid: ctx.grid().clone(),
        group_names: dataset.group_names().to_vec(),
        covariate_names: dataset.covariate_names().to_vec(),
        encoding: dataset.encoding().to_vec(),
        seed: options.seed,
        optimal_params: p_hat,
    })
}
