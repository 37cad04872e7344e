//! Closed-form marginal log-likelihood of the time-dependent shared frailty model.
//!
//! With `A_ijk = e_ijk exp(beta'x_ij + phi_k)` the group contribution is
//!
//! ```text
//! ll_j = sum_{i,k} d_ijk (beta'x_ij + phi_k)
//!        - (mu1/nu) log(1 + nu A_j..)
//!        - sum_k (mu2/gamma_k) log(1 + gamma_k A_j.k)
//!        + sum_k log sum_{l=0}^{d_j.k} C(d_j.k, l)
//!              Gamma(mu2/gamma_k + d_j.k - l)/Gamma(mu2/gamma_k)
//!              Gamma(mu1/nu + l)/Gamma(mu1/nu)
//!              (A_j.k + 1/gamma_k)^(l - d_j.k) (A_j.. + 1/nu)^(-l)
//! ```
//!
//! The inner sum is evaluated in log space; the Gamma ratios are rising
//! factorials, accumulated as sums of logs.

use crate::dataio::Dataset;
use crate::params::{Category, ParamLayout, ParamVector};
use crate::timegrid::{TemporalMatrices, TimeGrid, TimeGridError};
use rayon::prelude::*;
use thiserror::Error;

/// Datasets at least this large evaluate groups on the rayon pool.
const PARALLEL_MIN_UNITS: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum LikelihoodError {
    #[error("parameter vector has {got} entries, layout expects {expected}")]
    Length { expected: usize, got: usize },
    #[error("parameter {index} = {value} is outside the model domain")]
    InvalidParameter { index: usize, value: f64 },
    #[error("non-finite term at l = {l} of the combinatorial sum (d = {d})")]
    NonFiniteTerm { l: usize, d: usize },
    #[error("non-finite log-likelihood contribution in group {group}")]
    NonFiniteGroup { group: usize },
    #[error("parameter index {index} out of range for {n_params} parameters")]
    IndexOutOfRange { index: usize, n_params: usize },
    #[error(transparent)]
    Grid(#[from] TimeGridError),
    #[error("dataset has {got} regressors, layout expects {expected}")]
    RegressorMismatch { expected: usize, got: usize },
}

/// Per-group reductions of `A_ijk` and `d_ijk`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummaries {
    pub a_jk: Vec<f64>,
    pub a_j: f64,
    pub d_jk: Vec<usize>,
    pub linpred_event_sum: f64,
}

/// `log sum_{l=0}^{d} exp(t_l)` for the combinatorial Gamma sum of one (group, interval).
pub fn log_comb_sum(
    d: usize,
    shape_alpha: f64,
    shape_eps: f64,
    a_jk: f64,
    a_j: f64,
    rate_alpha: f64,
    rate_eps: f64,
) -> Result<f64, LikelihoodError> {
    if d == 0 {
        return Ok(0.0);
    }
    let log_eps_base = (a_jk + rate_eps).ln();
    let log_alpha_base = (a_j + rate_alpha).ln();

    // rising_eps[m] = log Gamma(shape_eps + m) - log Gamma(shape_eps)
    let mut rising_eps = Vec::with_capacity(d + 1);
    let mut acc = 0.0;
    rising_eps.push(0.0);
    for m in 0..d {
        acc += (shape_eps + m as f64).ln();
        rising_eps.push(acc);
    }

    let mut terms = Vec::with_capacity(d + 1);
    let mut log_binom = 0.0;
    let mut rising_alpha = 0.0;
    for l in 0..=d {
        if l > 0 {
            log_binom += ((d - l + 1) as f64).ln() - (l as f64).ln();
            rising_alpha += (shape_alpha + (l - 1) as f64).ln();
        }
        let t = log_binom + rising_eps[d - l] + rising_alpha
            - (d - l) as f64 * log_eps_base
            - l as f64 * log_alpha_base;
        if !t.is_finite() {
            return Err(LikelihoodError::NonFiniteTerm { l, d });
        }
        terms.push(t);
    }
    Ok(log_sum_exp(&terms))
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Borrowed category views into a raw parameter slice.
pub(crate) struct ParamView<'a> {
    pub phi: &'a [f64],
    pub beta: &'a [f64],
    pub mu1: f64,
    pub nu: f64,
    pub gamma: &'a [f64],
}

impl<'a> ParamView<'a> {
    pub(crate) fn new(values: &'a [f64], layout: ParamLayout) -> Result<Self, LikelihoodError> {
        if values.len() != layout.n_params() {
            return Err(LikelihoodError::Length {
                expected: layout.n_params(),
                got: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            let ok = match layout.category_of(index) {
                Some(Category::Mu1) => value > 0.0 && value < 1.0,
                Some(Category::Nu) | Some(Category::Gamma) => value > 0.0 && value.is_finite(),
                _ => value.is_finite(),
            };
            if !ok {
                return Err(LikelihoodError::InvalidParameter { index, value });
            }
        }
        Ok(Self {
            phi: &values[layout.range(Category::Phi)],
            beta: &values[layout.range(Category::Beta)],
            mu1: values[layout.mu1_index()],
            nu: values[layout.nu_index()],
            gamma: &values[layout.range(Category::Gamma)],
        })
    }

    pub(crate) fn mu2(&self) -> f64 {
        1.0 - self.mu1
    }
}

pub(crate) fn dot(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Dataset, time grid and the derived exposure/event/at-risk matrices.
#[derive(Debug, Clone)]
pub struct LikelihoodContext {
    dataset: Dataset,
    grid: TimeGrid,
    temporal: TemporalMatrices,
    members: Vec<Vec<usize>>,
    layout: ParamLayout,
}

impl LikelihoodContext {
    pub fn new(dataset: Dataset, grid: TimeGrid) -> Result<Self, LikelihoodError> {
        let temporal = TemporalMatrices::build(&grid, dataset.time(), dataset.event())?;
        let members = dataset.group_members();
        let layout = ParamLayout::new(grid.n_intervals(), dataset.n_regressors());
        Ok(Self {
            dataset,
            grid,
            temporal,
            members,
            layout,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn temporal(&self) -> &TemporalMatrices {
        &self.temporal
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn n_groups(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, group: usize) -> &[usize] {
        &self.members[group]
    }

    pub fn group_summaries(&self, p: &ParamVector, group: usize) -> Result<GroupSummaries, LikelihoodError> {
        let view = ParamView::new(p.values(), self.layout)?;
        Ok(self.summaries_view(&view, group))
    }

    fn summaries_view(&self, p: &ParamView<'_>, group: usize) -> GroupSummaries {
        let l = self.layout.n_intervals();
        let mut a_jk = vec![0.0; l];
        let mut d_jk = vec![0usize; l];
        let mut linpred_event_sum = 0.0;
        for &i in &self.members[group] {
            let lp = dot(self.dataset.row(i), p.beta);
            let e = self.temporal.exposure_row(i);
            let d = self.temporal.event_row(i);
            for k in 0..l {
                if e[k] > 0.0 {
                    a_jk[k] += e[k] * (lp + p.phi[k]).exp();
                }
                if d[k] == 1 {
                    d_jk[k] += 1;
                    linpred_event_sum += lp + p.phi[k];
                }
            }
        }
        let a_j = a_jk.iter().sum();
        GroupSummaries {
            a_jk,
            a_j,
            d_jk,
            linpred_event_sum,
        }
    }

    fn group_loglik_view(&self, p: &ParamView<'_>, group: usize) -> Result<f64, LikelihoodError> {
        let s = self.summaries_view(p, group);
        group_loglik_from_summaries(p, &s).and_then(|ll| {
            if ll.is_finite() {
                Ok(ll)
            } else {
                Err(LikelihoodError::NonFiniteGroup { group })
            }
        })
    }

    pub fn group_loglik(&self, p: &ParamVector, group: usize) -> Result<f64, LikelihoodError> {
        let view = ParamView::new(p.values(), self.layout)?;
        self.group_loglik_view(&view, group)
    }

    /// Log-likelihood at a raw parameter slice laid out as `[phi, beta, mu1, nu, gamma]`.
    pub fn loglik_values(&self, values: &[f64]) -> Result<f64, LikelihoodError> {
        let view = ParamView::new(values, self.layout)?;
        let groups = 0..self.n_groups();
        let per_group: Vec<f64> = if self.dataset.n_units() >= PARALLEL_MIN_UNITS {
            groups
                .into_par_iter()
                .map(|j| self.group_loglik_view(&view, j))
                .collect::<Result<_, _>>()?
        } else {
            groups
                .map(|j| self.group_loglik_view(&view, j))
                .collect::<Result<_, _>>()?
        };
        // fixed group order keeps the reduction bit-reproducible
        Ok(per_group.iter().sum())
    }

    pub fn loglik(&self, p: &ParamVector) -> Result<f64, LikelihoodError> {
        self.loglik_values(p.values())
    }

    /// Log-likelihood with `p[index]` replaced by `value`; `p` is left untouched.
    pub fn loglik_along(&self, index: usize, value: f64, p: &ParamVector) -> Result<f64, LikelihoodError> {
        let n_params = p.values().len();
        if index >= n_params {
            return Err(LikelihoodError::IndexOutOfRange { index, n_params });
        }
        let mut values = p.values().to_vec();
        values[index] = value;
        self.loglik_values(&values)
    }
}

fn group_loglik_from_summaries(p: &ParamView<'_>, s: &GroupSummaries) -> Result<f64, LikelihoodError> {
    let mu2 = p.mu2();
    let shape_alpha = p.mu1 / p.nu;
    let rate_alpha = 1.0 / p.nu;
    let mut ll = s.linpred_event_sum - shape_alpha * (p.nu * s.a_j).ln_1p();
    for (k, &gamma) in p.gamma.iter().enumerate() {
        ll -= mu2 / gamma * (gamma * s.a_jk[k]).ln_1p();
        ll += log_comb_sum(
            s.d_jk[k],
            shape_alpha,
            mu2 / gamma,
            s.a_jk[k],
            s.a_j,
            rate_alpha,
            1.0 / gamma,
        )?;
    }
    Ok(ll)
}
