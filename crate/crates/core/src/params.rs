//! Parameter vector layout `p = [phi, beta, mu1, nu, gamma]` and its box bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use thiserror::Error;

/// Default open-boundary offset used for the strictly positive categories.
pub const EPS: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("category {category}: lower bound {min} is not below upper bound {max}")]
    InvertedRange { category: Category, min: f64, max: f64 },
    #[error("category {category}: bounds [{min}, {max}] leave the admissible domain")]
    Inadmissible { category: Category, min: f64, max: f64 },
    #[error("category bound is not finite")]
    NonFinite,
    #[error("unknown parameter category `{0}`")]
    UnknownCategory(String),
    #[error("expected {expected} parameter values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("parameter {index} = {value} lies outside [{min}, {max}]")]
    OutOfBounds { index: usize, value: f64, min: f64, max: f64 },
    #[error("parameter index {index} out of range for {n_params} parameters")]
    IndexOutOfRange { index: usize, n_params: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Phi,
    Beta,
    Mu1,
    Nu,
    Gamma,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Phi,
        Category::Beta,
        Category::Mu1,
        Category::Nu,
        Category::Gamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Phi => "phi",
            Category::Beta => "beta",
            Category::Mu1 => "mu1",
            Category::Nu => "nu",
            Category::Gamma => "gamma",
        }
    }

    fn position(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phi" => Ok(Category::Phi),
            "beta" => Ok(Category::Beta),
            "mu1" => Ok(Category::Mu1),
            "nu" => Ok(Category::Nu),
            "gamma" => Ok(Category::Gamma),
            other => Err(ParamError::UnknownCategory(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    n_intervals: usize,
    n_regressors: usize,
}

impl ParamLayout {
    pub fn new(n_intervals: usize, n_regressors: usize) -> Self {
        assert!(n_intervals >= 1 && n_regressors >= 1, "L and R must be positive");
        Self {
            n_intervals,
            n_regressors,
        }
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn n_regressors(&self) -> usize {
        self.n_regressors
    }

    /// `2L + R + 2`.
    pub fn n_params(&self) -> usize {
        2 * self.n_intervals + self.n_regressors + 2
    }

    pub fn category_sizes(&self) -> [usize; 5] {
        [self.n_intervals, self.n_regressors, 1, 1, self.n_intervals]
    }

    pub fn offsets(&self) -> [usize; 5] {
        let (l, r) = (self.n_intervals, self.n_regressors);
        [0, l, l + r, l + r + 1, l + r + 2]
    }

    pub fn range(&self, category: Category) -> Range<usize> {
        let pos = category.position();
        let start = self.offsets()[pos];
        start..start + self.category_sizes()[pos]
    }

    pub fn category_of(&self, index: usize) -> Option<Category> {
        Category::ALL
            .into_iter()
            .find(|&c| self.range(c).contains(&index))
    }

    pub fn mu1_index(&self) -> usize {
        self.offsets()[2]
    }

    pub fn nu_index(&self) -> usize {
        self.offsets()[3]
    }
}

/// Category-wise box bounds, expanded to one `[min, max]` pair per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    layout: ParamLayout,
    category_min: [f64; 5],
    category_max: [f64; 5],
    min: Vec<f64>,
    max: Vec<f64>,
}

impl ParamBounds {
    pub fn expand(
        category_min: [f64; 5],
        category_max: [f64; 5],
        layout: ParamLayout,
    ) -> Result<Self, ParamError> {
        for (pos, category) in Category::ALL.into_iter().enumerate() {
            let (lo, hi) = (category_min[pos], category_max[pos]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(ParamError::NonFinite);
            }
            if lo >= hi {
                return Err(ParamError::InvertedRange {
                    category,
                    min: lo,
                    max: hi,
                });
            }
            let admissible = match category {
                Category::Mu1 => lo > 0.0 && hi < 1.0,
                Category::Nu | Category::Gamma => lo > 0.0,
                Category::Phi | Category::Beta => true,
            };
            if !admissible {
                return Err(ParamError::Inadmissible {
                    category,
                    min: lo,
                    max: hi,
                });
            }
        }
        let sizes = layout.category_sizes();
        let mut min = Vec::with_capacity(layout.n_params());
        let mut max = Vec::with_capacity(layout.n_params());
        for pos in 0..5 {
            min.extend(std::iter::repeat_n(category_min[pos], sizes[pos]));
            max.extend(std::iter::repeat_n(category_max[pos], sizes[pos]));
        }
        Ok(Self {
            layout,
            category_min,
            category_max,
            min,
            max,
        })
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn category_min(&self) -> [f64; 5] {
        self.category_min
    }

    pub fn category_max(&self) -> [f64; 5] {
        self.category_max
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn interval(&self, index: usize) -> (f64, f64) {
        (self.min[index], self.max[index])
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.min.len()
            && values
                .iter()
                .zip(self.min.iter().zip(&self.max))
                .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    /// Draw every component uniformly inside its box.
    pub fn random_init(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(&mut rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let values = self
            .min
            .iter()
            .zip(&self.max)
            .map(|(&lo, &hi)| uniform_in(rng, lo, hi))
            .collect();
        ParamVector {
            values,
            layout: self.layout,
        }
    }
}

/// Uniform draw in `[lo, hi]`, never leaving the box through rounding.
pub(crate) fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    (lo + u * (hi - lo)).clamp(lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: ParamLayout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: ParamLayout) -> Result<Self, ParamError> {
        if values.len() != layout.n_params() {
            return Err(ParamError::Length {
                expected: layout.n_params(),
                got: values.len(),
            });
        }
        Ok(Self { values, layout })
    }

    /// Like [`ParamVector::new`] but also checks box membership.
    pub fn within(values: Vec<f64>, bounds: &ParamBounds) -> Result<Self, ParamError> {
        let p = Self::new(values, bounds.layout())?;
        for (index, &value) in p.values.iter().enumerate() {
            let (min, max) = bounds.interval(index);
            if !(value >= min && value <= max) {
                return Err(ParamError::OutOfBounds {
                    index,
                    value,
                    min,
                    max,
                });
            }
        }
        Ok(p)
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, index: usize) -> Result<f64, ParamError> {
        self.values
            .get(index)
            .copied()
            .ok_or(ParamError::IndexOutOfRange {
                index,
                n_params: self.values.len(),
            })
    }

    pub fn with(&self, index: usize, value: f64) -> Result<Self, ParamError> {
        self.get(index)?;
        let mut out = self.clone();
        out.values[index] = value;
        Ok(out)
    }

    pub fn extract(&self, category: Category) -> &[f64] {
        &self.values[self.layout.range(category)]
    }

    pub fn extract_named(&self, name: &str) -> Result<&[f64], ParamError> {
        Ok(self.extract(name.parse()?))
    }

    pub fn phi(&self) -> &[f64] {
        self.extract(Category::Phi)
    }

    pub fn beta(&self) -> &[f64] {
        self.extract(Category::Beta)
    }

    pub fn mu1(&self) -> f64 {
        self.values[self.layout.mu1_index()]
    }

    /// Always derived, never stored.
    pub fn mu2(&self) -> f64 {
        1.0 - self.mu1()
    }

    pub fn nu(&self) -> f64 {
        self.values[self.layout.nu_index()]
    }

    pub fn gamma(&self) -> &[f64] {
        self.extract(Category::Gamma)
    }
}
