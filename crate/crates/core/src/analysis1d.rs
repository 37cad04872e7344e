//! One-dimensional log-likelihood profiles along a single parameter.
//!
//! In fixed mode the other parameters sit at a supplied vector (typically the
//! fitted optimum); in random mode they are redrawn uniformly in their boxes at
//! each iteration, which helps locate where a parameter's likelihood mass lives.

use crate::likelihood::LikelihoodContext;
use crate::optimizer::{brent_max, Objective, OptimError};
use crate::params::{uniform_in, ParamBounds, ParamError, ParamVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileIteration {
    pub x_star: f64,
    pub ll_star: f64,
    /// `(x, ll)` samples along the target parameter.
    pub curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile1DResult {
    pub index: usize,
    pub iterations: Vec<ProfileIteration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions {
    pub n_iter: usize,
    pub n_points: usize,
    pub tol: f64,
    pub seed: u64,
    /// Evenly spaced curve abscissae instead of uniform draws.
    pub even_grid: bool,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            n_iter: 1,
            n_points: 50,
            tol: 1e-6,
            seed: 0,
            even_grid: false,
        }
    }
}

pub fn profile_1d<O: Objective + ?Sized>(
    objective: &O,
    bounds: &ParamBounds,
    index: usize,
    fixed: Option<&ParamVector>,
    options: &ProfileOptions,
) -> Result<Profile1DResult, OptimError> {
    let n_params = bounds.layout().n_params();
    if index >= n_params {
        return Err(ParamError::IndexOutOfRange { index, n_params }.into());
    }
    if let Some(p) = fixed {
        ParamVector::within(p.values().to_vec(), bounds)?;
    }
    let (lo, hi) = bounds.interval(index);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut iterations = Vec::with_capacity(options.n_iter);
    for _ in 0..options.n_iter {
        let base = match fixed {
            Some(p) => p.clone(),
            None => bounds.sample(&mut rng),
        };
        let mut x = base.values().to_vec();
        let (mut x_star, mut ll_star) = brent_max(
            |v| {
                x[index] = v;
                objective.evaluate(&x)
            },
            lo,
            hi,
            options.tol,
        )?;
        let abscissae: Vec<f64> = if options.even_grid {
            let n = options.n_points;
            (0..n)
                .map(|i| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
                .collect()
        } else {
            (0..options.n_points).map(|_| uniform_in(&mut rng, lo, hi)).collect()
        };
        let mut curve = Vec::with_capacity(abscissae.len());
        for v in abscissae {
            x[index] = v;
            curve.push((v, objective.evaluate(&x)?));
        }
        // a multimodal profile can fool the line search; keep the best sample seen
        if let Some(&(xb, lb)) = curve.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
            if lb > ll_star {
                x_star = xb;
                ll_star = lb;
            }
        }
        iterations.push(ProfileIteration { x_star, ll_star, curve });
    }
    Ok(Profile1DResult { index, iterations })
}

/// Convenience wrapper on a likelihood context.
pub fn profile_likelihood(
    ctx: &LikelihoodContext,
    bounds: &ParamBounds,
    index: usize,
    fixed: Option<&ParamVector>,
    options: &ProfileOptions,
) -> Result<Profile1DResult, OptimError> {
    profile_1d(ctx, bounds, index, fixed, options)
}

impl Profile1DResult {
    /// Rows `iter,x,ll,is_max`: every curve sample followed by the maximizer.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iter", "x", "ll", "is_max"])?;
        for (i, it) in self.iterations.iter().enumerate() {
            let iter = (i + 1).to_string();
            for (x, ll) in &it.curve {
                w.write_record([iter.as_str(), &x.to_string(), &ll.to_string(), "0"])?;
            }
            w.write_record([iter.as_str(), &it.x_star.to_string(), &it.ll_star.to_string(), "1"])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::FnObjective;
    use crate::params::ParamLayout;

    fn bounds() -> ParamBounds {
        ParamBounds::expand([-3.0, -2.0, 0.1, 0.1, 0.1], [0.0, 2.0, 0.9, 2.0, 2.0], ParamLayout::new(1, 1)).unwrap()
    }

    fn objective() -> FnObjective<impl Fn(&[f64]) -> f64> {
        FnObjective(|p: &[f64]| -(p[0] + 1.0).powi(2) - (p[1] - 0.5 * p[0]).powi(2) + p[3])
    }

    #[test]
    fn fixed_mode_is_repeatable() {
        let b = bounds();
        let fixed = ParamVector::within(vec![-1.0, -0.5, 0.5, 1.0, 1.0], &b).unwrap();
        let opts = ProfileOptions {
            n_iter: 3,
            n_points: 20,
            ..Default::default()
        };
        let r = profile_1d(&objective(), &b, 1, Some(&fixed), &opts).unwrap();
        assert_eq!(r.iterations.len(), 3);
        for it in &r.iterations {
            assert_eq!((it.x_star, it.ll_star), (r.iterations[0].x_star, r.iterations[0].ll_star));
            assert!((it.x_star + 0.5).abs() < 1e-5);
            for &(_, ll) in &it.curve {
                assert!(ll <= it.ll_star + 1e-9);
            }
        }
    }

    #[test]
    fn increasing_direction_hits_upper_bound() {
        let b = bounds();
        let fixed = ParamVector::within(vec![-1.0, -0.5, 0.5, 1.0, 1.0], &b).unwrap();
        let r = profile_1d(&objective(), &b, 3, Some(&fixed), &ProfileOptions::default()).unwrap();
        assert!((r.iterations[0].x_star - 2.0).abs() < 1e-5);
    }

    #[test]
    fn random_mode_is_seeded() {
        let b = bounds();
        let opts = ProfileOptions {
            n_iter: 5,
            n_points: 10,
            seed: 9,
            ..Default::default()
        };
        let r1 = profile_1d(&objective(), &b, 0, None, &opts).unwrap();
        let r2 = profile_1d(&objective(), &b, 0, None, &opts).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.iterations.len(), 5);
        for it in &r1.iterations {
            assert!(it.x_star >= -3.0 && it.x_star <= 0.0);
            assert!(it.curve.iter().all(|&(x, _)| (-3.0..=0.0).contains(&x)));
        }
    }

    #[test]
    fn even_grid_and_csv() {
        let b = bounds();
        let fixed = ParamVector::within(vec![-1.0, -0.5, 0.5, 1.0, 1.0], &b).unwrap();
        let opts = ProfileOptions {
            n_points: 4,
            even_grid: true,
            ..Default::default()
        };
        let r = profile_1d(&objective(), &b, 0, Some(&fixed), &opts).unwrap();
        let xs: Vec<f64> = r.iterations[0].curve.iter().map(|c| c.0).collect();
        assert_eq!(xs, vec![-3.0, -2.0, -1.0, 0.0]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "iter,x,ll,is_max");
        assert_eq!(text.lines().count(), 1 + 4 + 1);
        assert!(text.lines().last().unwrap().ends_with(",1"));
    }

    #[test]
    fn bad_index_and_fixed_out_of_box() {
        let b = bounds();
        assert!(profile_1d(&objective(), &b, 5, None, &ProfileOptions::default()).is_err());
        let outside = ParamVector::new(vec![1.0, 0.0, 0.5, 1.0, 1.0], b.layout()).unwrap();
        assert!(profile_1d(&objective(), &b, 0, Some(&outside), &ProfileOptions::default()).is_err());
    }
}
