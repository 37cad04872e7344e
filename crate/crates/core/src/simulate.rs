//! Synthetic clustered survival data from the generative model.
//!
//! Per group `alpha_j ~ Gamma(mu1/nu, scale nu)` and
//! `eps_jk ~ Gamma(mu2/gamma_k, scale gamma_k)`, so `E[Z_jk] = 1`. Event times
//! are drawn by inverting the piecewise-constant cumulative hazard.

use crate::dataio::Dataset;
use crate::params::{ParamLayout, ParamVector};
use crate::timegrid::TimeGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("truth has {got} entries, layout expects {expected}")]
    Length { expected: usize, got: usize },
    #[error("implausible truth: {0}")]
    Truth(String),
    #[error("{0}")]
    Spec(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovariateKind {
    Normal,
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

impl std::str::FromStr for CovariateSpec {
    type Err = SimError;

    /// `name:normal` or `name:bernoulli(p)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, kind) = s
            .split_once(':')
            .ok_or_else(|| SimError::Spec(format!("covariate `{s}` is not `name:kind`")))?;
        let kind = kind.trim();
        let kind = if kind == "normal" {
            CovariateKind::Normal
        } else if let Some(arg) = kind.strip_prefix("bernoulli(").and_then(|r| r.strip_suffix(')')) {
            let p: f64 = arg
                .trim()
                .parse()
                .map_err(|_| SimError::Spec(format!("bad bernoulli probability `{arg}`")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Spec(format!("bernoulli probability {p} outside [0, 1]")));
            }
            CovariateKind::Bernoulli { p }
        } else {
            return Err(SimError::Spec(format!("unknown covariate kind `{kind}`")));
        };
        Ok(Self {
            name: name.trim().to_string(),
            kind,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub truth: ParamVector,
    pub grid: TimeGrid,
    /// Units in each group; its length is the number of groups.
    pub units_per_group: Vec<usize>,
    pub covariates: Vec<CovariateSpec>,
    /// Replace every drawn `Z_jk` by this constant.
    pub frailty_override: Option<f64>,
    pub seed: u64,
}

impl SimSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let layout = self.truth.layout();
        if layout.n_intervals() != self.grid.n_intervals() || layout.n_regressors() != self.covariates.len() {
            return Err(SimError::Spec(format!(
                "truth layout (L = {}, R = {}) does not match grid ({}) and covariates ({})",
                layout.n_intervals(),
                layout.n_regressors(),
                self.grid.n_intervals(),
                self.covariates.len()
            )));
        }
        if self.units_per_group.is_empty() || self.units_per_group.contains(&0) {
            return Err(SimError::Spec("every group needs at least one unit".into()));
        }
        let p = &self.truth;
        if !(p.mu1() > 0.0 && p.mu1() < 1.0) {
            return Err(SimError::Truth(format!("mu1 = {} not in (0, 1)", p.mu1())));
        }
        if !(p.nu() > 0.0) || p.gamma().iter().any(|g| !(*g > 0.0)) {
            return Err(SimError::Truth("nu and gamma must be positive".into()));
        }
        if p.values().iter().any(|v| !v.is_finite()) {
            return Err(SimError::Truth("non-finite entry".into()));
        }
        Ok(())
    }
}

/// Build a truth vector from its categories.
pub fn truth_vector(phi: &[f64], beta: &[f64], mu1: f64, nu: f64, gamma: &[f64]) -> Result<ParamVector, SimError> {
    if phi.len() != gamma.len() {
        return Err(SimError::Spec(format!(
            "phi has {} entries but gamma has {}",
            phi.len(),
            gamma.len()
        )));
    }
    let layout = ParamLayout::new(phi.len(), beta.len());
    let mut v = phi.to_vec();
    v.extend_from_slice(beta);
    v.extend([mu1, nu]);
    v.extend_from_slice(gamma);
    ParamVector::new(v, layout).map_err(|e| SimError::Spec(e.to_string()))
}

fn gamma_draw<R: Rng + ?Sized>(rng: &mut R, mean: f64, var_param: f64) -> f64 {
    Gamma::new(mean / var_param, var_param)
        .expect("positive shape and scale")
        .sample(rng)
}

/// One group's `(alpha_j, [eps_j1, ..., eps_jL])`.
pub fn draw_frailties<R: Rng + ?Sized>(truth: &ParamVector, rng: &mut R) -> (f64, Vec<f64>) {
    let alpha = gamma_draw(rng, truth.mu1(), truth.nu());
    let eps = truth.gamma().iter().map(|&g| gamma_draw(rng, truth.mu2(), g)).collect();
    (alpha, eps)
}

/// Invert the cumulative hazard `sum_k z_k exp(lp + phi_k) |I_k cap [a_0, t]|`
/// at level `target`. `None` when the follow-up ends first.
pub fn invert_piecewise(grid: &TimeGrid, rates: &[f64], target: f64) -> Option<f64> {
    let b = grid.boundaries();
    let mut cumulative = 0.0;
    for (k, &rate) in rates.iter().enumerate() {
        let inc = rate * (b[k + 1] - b[k]);
        if cumulative + inc >= target && rate > 0.0 {
            return Some((b[k] + (target - cumulative) / rate).min(b[k + 1]));
        }
        cumulative += inc;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub time_axis: TimeGrid,
    pub phi: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu1: f64,
    pub nu: f64,
    pub gamma: Vec<f64>,
    pub params: Vec<f64>,
    pub covariates: Vec<CovariateSpec>,
    pub units_per_group: Vec<usize>,
    pub frailty_override: Option<f64>,
    pub seed: u64,
    pub group_names: Vec<String>,
    pub alpha: Vec<f64>,
    pub eps: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub covariate_names: Vec<String>,
    /// Row-major `n x R`.
    pub covariates: Vec<f64>,
    pub time: Vec<f64>,
    pub status: Vec<bool>,
    pub group: Vec<String>,
    pub truth: SimTruth,
}

pub fn simulate_dataset(spec: &SimSpec) -> Result<SimData, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = &spec.truth;
    let grid = &spec.grid;
    let censor_time = grid.end() + 0.1 * (grid.end() - grid.start());
    let n_total: usize = spec.units_per_group.iter().sum();
    let r = spec.covariates.len();
    let group_names: Vec<String> = (1..=spec.units_per_group.len()).map(|j| format!("G{j}")).collect();

    let mut covariates = Vec::with_capacity(n_total * r);
    let mut time = Vec::with_capacity(n_total);
    let mut status = Vec::with_capacity(n_total);
    let mut group = Vec::with_capacity(n_total);
    let mut alphas = Vec::new();
    let mut epss = Vec::new();

    for (j, &n_j) in spec.units_per_group.iter().enumerate() {
        let (alpha, eps) = draw_frailties(truth, &mut rng);
        let z: Vec<f64> = match spec.frailty_override {
            Some(c) => vec![c; eps.len()],
            None => eps.iter().map(|e| alpha + e).collect(),
        };
        alphas.push(alpha);
        epss.push(eps);
        for _ in 0..n_j {
            let x: Vec<f64> = spec
                .covariates
                .iter()
                .map(|c| match c.kind {
                    CovariateKind::Normal => rng.sample::<f64, _>(StandardNormal),
                    CovariateKind::Bernoulli { p } => {
                        f64::from(u8::from(Bernoulli::new(p).expect("p in [0, 1]").sample(&mut rng)))
                    }
                })
                .collect();
            let lp: f64 = x.iter().zip(truth.beta()).map(|(a, b)| a * b).sum();
            let rates: Vec<f64> = truth.phi().iter().zip(&z).map(|(phi, z)| z * (lp + phi).exp()).collect();
            let target: f64 = rng.sample(Exp1);
            match invert_piecewise(grid, &rates, target) {
                Some(t) => {
                    time.push(t);
                    status.push(true);
                }
                None => {
                    time.push(censor_time);
                    status.push(false);
                }
            }
            covariates.extend(x);
            group.push(group_names[j].clone());
        }
    }

    let truth_record = SimTruth {
        time_axis: grid.clone(),
        phi: truth.phi().to_vec(),
        beta: truth.beta().to_vec(),
        mu1: truth.mu1(),
        nu: truth.nu(),
        gamma: truth.gamma().to_vec(),
        params: truth.values().to_vec(),
        covariates: spec.covariates.clone(),
        units_per_group: spec.units_per_group.clone(),
        frailty_override: spec.frailty_override,
        seed: spec.seed,
        group_names,
        alpha: alphas,
        eps: epss,
    };
    Ok(SimData {
        covariate_names: spec.covariates.iter().map(|c| c.name.clone()).collect(),
        covariates,
        time,
        status,
        group,
        truth: truth_record,
    })
}

impl SimData {
    pub fn n_units(&self) -> usize {
        self.time.len()
    }

    /// In-memory dataset with the simulated status as the event indicator.
    pub fn to_dataset(&self) -> Dataset {
        let names = &self.truth.group_names;
        let cluster_of = self
            .group
            .iter()
            .map(|g| names.iter().position(|n| n == g).expect("simulated group"))
            .collect();
        Dataset::from_parts(
            self.covariates.clone(),
            self.covariate_names.clone(),
            cluster_of,
            names.clone(),
            self.time.clone(),
            self.status.clone(),
        )
    }

    /// Columns: covariates, `time_to_event`, `status`, `group`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.covariate_names.clone();
        header.extend(["time_to_event".into(), "status".into(), "group".into()]);
        w.write_record(&header)?;
        let r = self.covariate_names.len();
        for i in 0..self.n_units() {
            let mut rec: Vec<String> = self.covariates[i * r..(i + 1) * r].iter().map(|v| v.to_string()).collect();
            rec.push(self.time[i].to_string());
            rec.push(if self.status[i] { "1" } else { "0" }.into());
            rec.push(self.group[i].clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_truth<W: Write>(&self, writer: W) -> Result<(), SimError> {
        serde_json::to_writer_pretty(writer, &self.truth)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SimSpec {
        SimSpec {
            truth: truth_vector(&[-1.0, -0.5], &[0.3, -1.2], 0.3, 0.2, &[0.1, 0.4]).unwrap(),
            grid: TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap(),
            units_per_group: vec![30, 20, 10],
            covariates: vec!["x1:normal".parse().unwrap(), "x2:bernoulli(0.4)".parse().unwrap()],
            frailty_override: None,
            seed,
        }
    }

    fn csv_bytes(d: &SimData) -> Vec<u8> {
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        buf
    }

    #[test]
    fn seeded_output_is_identical() {
        let a = simulate_dataset(&spec(5)).unwrap();
        let b = simulate_dataset(&spec(5)).unwrap();
        assert_eq!(csv_bytes(&a), csv_bytes(&b));
        assert_ne!(csv_bytes(&a), csv_bytes(&simulate_dataset(&spec(6)).unwrap()));
    }

    #[test]
    fn shapes_and_time_ranges() {
        let d = simulate_dataset(&spec(1)).unwrap();
        assert_eq!(d.n_units(), 60);
        assert_eq!(d.covariates.len(), 120);
        for (t, s) in d.time.iter().zip(&d.status) {
            if *s {
                assert!(*t >= 0.0 && *t <= 2.0);
            } else {
                assert!((*t - 2.2).abs() < 1e-12);
            }
        }
        let text = String::from_utf8(csv_bytes(&d)).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x1,x2,time_to_event,status,group");
        assert!(text.lines().skip(1).all(|l| {
            let f: Vec<&str> = l.split(',').collect();
            f[3] == "0" || f[3] == "1"
        }));
    }

    #[test]
    fn unit_hazard_exponential_cdf() {
        let s = SimSpec {
            truth: truth_vector(&[0.0], &[0.0], 0.5, 0.5, &[0.5]).unwrap(),
            grid: TimeGrid::new(vec![0.0, 1.0]).unwrap(),
            units_per_group: vec![100_000],
            covariates: vec!["x:normal".parse().unwrap()],
            frailty_override: Some(1.0),
            seed: 17,
        };
        let d = simulate_dataset(&s).unwrap();
        let freq = d.status.iter().filter(|&&s| s).count() as f64 / d.n_units() as f64;
        assert!((freq - (1.0 - (-1.0f64).exp())).abs() < 0.005, "freq = {freq}");
    }

    #[test]
    fn frailty_moments() {
        let truth = truth_vector(&[0.0, 0.0], &[0.0], 0.3, 0.2, &[0.1, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let (a, e) = draw_frailties(&truth, &mut rng);
            for k in 0..2 {
                let z = a + e[k];
                sum[k] += z;
                sq[k] += z * z;
            }
        }
        for k in 0..2 {
            let mean = sum[k] / n as f64;
            let var = sq[k] / n as f64 - mean * mean;
            assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
            let expect = 0.3 * 0.2 + 0.7 * truth.gamma()[k];
            // sd of the sample variance is a few times var / sqrt(n) for gamma sums
            assert!((var - expect).abs() < 6.0 * expect * (2.0 / n as f64).sqrt() * 3.0, "var {var} vs {expect}");
        }
    }

    #[test]
    fn inversion_matches_single_exponential() {
        let grid = TimeGrid::new(vec![0.0, 10.0]).unwrap();
        let t = invert_piecewise(&grid, &[2.0], 1.0).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        assert_eq!(invert_piecewise(&grid, &[0.05], 1.0), None);
        let grid = TimeGrid::new(vec![0.0, 1.0, 3.0]).unwrap();
        let t = invert_piecewise(&grid, &[0.5, 1.0], 1.5).unwrap();
        assert!((t - 2.0).abs() < 1e-15);
    }

    #[test]
    fn covariate_spec_parsing() {
        let c: CovariateSpec = "Gender:bernoulli(0.5)".parse().unwrap();
        assert_eq!(c.kind, CovariateKind::Bernoulli { p: 0.5 });
        assert!("x:poisson".parse::<CovariateSpec>().is_err());
        assert!("x:bernoulli(2)".parse::<CovariateSpec>().is_err());
        assert!("x".parse::<CovariateSpec>().is_err());
    }

    #[test]
    fn rejects_bad_truth() {
        let mut s = spec(1);
        s.truth = truth_vector(&[0.0, 0.0], &[0.0, 0.0], 1.2, 0.2, &[0.1, 0.1]).unwrap();
        assert!(matches!(s.validate(), Err(SimError::Truth(_))));
        let mut s = spec(1);
        s.units_per_group = vec![];
        assert!(s.validate().is_err());
    }
}
