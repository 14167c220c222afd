//! One-class SVM with a Gaussian kernel.
//!
//! Training solves the dual
//!
//! ```text
//! min 1/2 sum_ij a_i a_j k(x_i, x_j)   s.t.  0 <= a_i <= 1/(nu l),  sum_i a_i = 1
//! ```
//!
//! and the decision is `f(x) = sum_i a_i k(x_i, x) - rho`, legitimate when
//! `f(x) >= 0`. `nu` upper-bounds the fraction of training outliers.

mod select;
mod solver;

pub use select::{select_nu, select_nu_and_bandwidth, select_nu_for_tp, NuPoint, NuSelection};
pub use solver::{train, Gamma, TrainConfig, TrainOutcome};

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `exp(-gamma * ||x - y||^2)`.
pub fn gaussian_kernel<T: Real>(x: &[T], y: &[T], gamma: T) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok((-gamma * squared_distance(x, y)).exp())
}

pub(crate) fn squared_distance<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

/// Decision outcome for one profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Legitimate,
    Attacker,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision<T> {
    pub label: Label,
    pub score: T,
}

pub const MODEL_FORMAT: &str = "shieldscatter-ocsvm";
pub const MODEL_VERSION: u32 = 1;

/// Trained one-class boundary. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSvmModel<T> {
    support_vectors: Vec<Vec<T>>,
    alphas: Vec<T>,
    rho: T,
    gamma: T,
    nu: T,
}

#[derive(Serialize, Deserialize)]
struct ModelFile<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: OcSvmModel<T>,
}

impl<T: Real> OcSvmModel<T> {
    /// Assembles a model from parts. Alphas must be non-negative and sum to
    /// one within `1e-6`; they are renormalized to sum exactly.
    pub fn from_parts(support_vectors: Vec<Vec<T>>, alphas: Vec<T>, rho: T, gamma: T, nu: T) -> Result<Self> {
        let total = Self::validate(&support_vectors, &alphas, rho, gamma, nu)?;
        let alphas = alphas.into_iter().map(|a| a / total).collect();
        Ok(Self {
            support_vectors,
            alphas,
            rho,
            gamma,
            nu,
        })
    }

    fn validate(support_vectors: &[Vec<T>], alphas: &[T], rho: T, gamma: T, nu: T) -> Result<T> {
        if support_vectors.is_empty() {
            return Err(Error::EmptyInput("support vectors"));
        }
        if support_vectors.len() != alphas.len() {
            return Err(Error::DimensionMismatch {
                expected: support_vectors.len(),
                actual: alphas.len(),
            });
        }
        let dim = support_vectors[0].len();
        if let Some(bad) = support_vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        if !(gamma > T::zero()) || !(nu > T::zero() && nu <= T::one()) || !rho.is_finite() {
            return Err(Error::InvalidArgument("gamma > 0, nu in (0, 1], finite rho".into()));
        }
        if alphas.iter().any(|a| !(*a >= T::zero()) || !a.is_finite()) {
            return Err(Error::NonFinite("alphas"));
        }
        let total: T = alphas.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-6) {
            return Err(Error::InvalidArgument(format!("alphas sum to {:?}", total)));
        }
        Ok(total)
    }

    pub fn support_vectors(&self) -> &[Vec<T>] {
        &self.support_vectors
    }

    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn dim(&self) -> usize {
        self.support_vectors[0].len()
    }

    /// `sum_i a_i k(x_i, x) - rho`.
    pub fn score(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let sum: T = self
            .support_vectors
            .iter()
            .zip(&self.alphas)
            .map(|(sv, &a)| a * (-self.gamma * squared_distance(sv, x)).exp())
            .sum();
        Ok(sum - self.rho)
    }

    pub fn decide(&self, x: &[T]) -> Result<Decision<T>> {
        let score = self.score(x)?;
        let label = if score >= T::zero() {
            Label::Legitimate
        } else {
            Label::Attacker
        };
        Ok(Decision { label, score })
    }
}

impl<T: Real + Serialize + DeserializeOwned> OcSvmModel<T> {
    /// Versioned JSON container; floats round-trip exactly.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let file: ModelFile<T> = serde_json::from_reader(reader)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a model file: {}", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", file.version)));
        }
        let m = file.model;
        Self::validate(&m.support_vectors, &m.alphas, m.rho, m.gamma, m.nu)?;
        Ok(m)
    }
}
