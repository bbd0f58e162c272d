//! Shared domain types and the score-orientation convention.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-length feature vector extracted from one sensor window.
///
/// All components are finite; construction rejects NaN and infinities.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape {
                expected: 1,
                actual: 0,
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Checks that every vector in `xs` has the same dimension and returns it.
pub fn common_dim(xs: &[FeatureVector]) -> Result<usize> {
    let first = xs
        .first()
        .ok_or_else(|| Error::InsufficientData("empty sample set".into()))?;
    let dim = first.dim();
    for x in xs {
        if x.dim() != dim {
            return Err(Error::Shape {
                expected: dim,
                actual: x.dim(),
            });
        }
    }
    Ok(dim)
}

/// One enrolled user: genuine samples from a training session and a
/// disjoint testing session. Impostor samples are never stored here; the
/// evaluation protocol borrows them from other users at verification time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct UserDataset {
    pub user_id: String,
    pub train_genuine: Vec<FeatureVector>,
    pub test_genuine: Vec<FeatureVector>,
}

impl UserDataset {
    pub fn new(
        user_id: impl Into<String>,
        train_genuine: Vec<FeatureVector>,
        test_genuine: Vec<FeatureVector>,
    ) -> Result<Self> {
        let user_id = user_id.into();
        let dim = common_dim(&train_genuine).map_err(|e| e.for_user(&user_id))?;
        if let Some(bad) = test_genuine.iter().find(|x| x.dim() != dim) {
            return Err(Error::Shape {
                expected: dim,
                actual: bad.dim(),
            }
            .for_user(&user_id));
        }
        Ok(Self {
            user_id,
            train_genuine,
            test_genuine,
        })
    }

    pub fn dim(&self) -> usize {
        self.train_genuine[0].dim()
    }
}

/// A raw classifier output where higher means more genuine.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GenuinenessScore(f64);

impl GenuinenessScore {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::InvalidScore(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Total order on scores: `Greater` means `a` is more genuine than `b`.
pub fn compare_scores(a: GenuinenessScore, b: GenuinenessScore) -> Result<Ordering> {
    for s in [a.0, b.0] {
        if !s.is_finite() {
            return Err(Error::InvalidScore(s));
        }
    }
    Ok(a.0.total_cmp(&b.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    /// Accepts when `score >= threshold`.
    pub fn from_score(score: f64, threshold: f64) -> Self {
        if score >= threshold {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }

    pub fn is_accept(self) -> bool {
        self == Decision::Accept
    }
}

/// Seed for every randomized operation. Equal seeds and inputs give
/// bit-identical outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Derives an independent child seed for stream `stream` (splitmix64 mix).
    pub fn derive(self, stream: u64) -> RngSeed {
        let mut z = self
            .0
            .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngSeed(z ^ (z >> 31))
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}
