//! Matérn covariance over normalized inputs.
//!
//! All distances are measured after scaling each coordinate difference by its
//! lengthscale, so the kernel is anisotropic: r = sqrt(Σ ((a_i−b_i)/ℓ_i)²).
//! The half-integer smoothness orders have closed forms, which keeps
//! evaluation exact and cheap:
//!
//! - 1/2: σ² exp(−r)                       (rough, exponential kernel)
//! - 3/2: σ² (1 + √3 r) exp(−√3 r)
//! - 5/2: σ² (1 + √5 r + 5r²/3) exp(−√5 r) (twice differentiable, default)

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::GpError;

/// Matérn smoothness order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "3/2")]
    ThreeHalves,
    #[serde(rename = "5/2")]
    #[default]
    FiveHalves,
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Smoothness::Half => "1/2",
            Smoothness::ThreeHalves => "3/2",
            Smoothness::FiveHalves => "5/2",
        })
    }
}

impl FromStr for Smoothness {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "1/2" => Ok(Smoothness::Half),
            "3/2" => Ok(Smoothness::ThreeHalves),
            "5/2" => Ok(Smoothness::FiveHalves),
            other => Err(format!(
                "unknown smoothness `{other}` (expected `1/2`, `3/2`, or `5/2`)"
            )),
        }
    }
}

/// Validated kernel hyperparameters, expressed in normalized-input /
/// standardized-output space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelParams", into = "RawKernelParams")]
pub struct KernelParams {
    lengthscales: [f64; 2],
    signal_variance: f64,
    noise_variance: f64,
    smoothness: Smoothness,
}

#[derive(Serialize, Deserialize)]
struct RawKernelParams {
    lengthscales: [f64; 2],
    signal_variance: f64,
    noise_variance: f64,
    smoothness: Smoothness,
}

impl From<KernelParams> for RawKernelParams {
    fn from(p: KernelParams) -> Self {
        Self {
            lengthscales: p.lengthscales,
            signal_variance: p.signal_variance,
            noise_variance: p.noise_variance,
            smoothness: p.smoothness,
        }
    }
}

impl TryFrom<RawKernelParams> for KernelParams {
    type Error = GpError;
    fn try_from(raw: RawKernelParams) -> Result<Self, GpError> {
        KernelParams::new(
            raw.lengthscales,
            raw.signal_variance,
            raw.noise_variance,
            raw.smoothness,
        )
    }
}

impl KernelParams {
    /// Lengthscales and signal variance must be positive and finite; noise
    /// variance non-negative and finite.
    pub fn new(
        lengthscales: [f64; 2],
        signal_variance: f64,
        noise_variance: f64,
        smoothness: Smoothness,
    ) -> Result<Self, GpError> {
        for (i, l) in lengthscales.iter().enumerate() {
            if !(l.is_finite() && *l > 0.0) {
                return Err(GpError::InvalidParameter(format!(
                    "lengthscale[{i}] = {l} (must be positive and finite)"
                )));
            }
        }
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(GpError::InvalidParameter(format!(
                "signal_variance = {signal_variance} (must be positive and finite)"
            )));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(GpError::InvalidParameter(format!(
                "noise_variance = {noise_variance} (must be non-negative and finite)"
            )));
        }
        Ok(Self {
            lengthscales,
            signal_variance,
            noise_variance,
            smoothness,
        })
    }

    pub fn lengthscales(&self) -> [f64; 2] {
        self.lengthscales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    fn scaled_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d0 = (a[0] - b[0]) / self.lengthscales[0];
        let d1 = (a[1] - b[1]) / self.lengthscales[1];
        (d0 * d0 + d1 * d1).sqrt()
    }
}

/// Covariance k(a, b) between two normalized input points.
///
/// Symmetric in its arguments; k(a, a) equals the signal variance exactly.
pub fn matern_cov(a: [f64; 2], b: [f64; 2], params: &KernelParams) -> f64 {
    let r = params.scaled_distance(a, b);
    let s2 = params.signal_variance;
    match params.smoothness {
        Smoothness::Half => s2 * (-r).exp(),
        Smoothness::ThreeHalves => {
            let t = 3f64.sqrt() * r;
            s2 * (1.0 + t) * (-t).exp()
        }
        Smoothness::FiveHalves => {
            let t = 5f64.sqrt() * r;
            s2 * (1.0 + t + 5.0 / 3.0 * r * r) * (-t).exp()
        }
    }
}

/// Pairwise covariance (Gram) matrix of the training inputs. The noise term
/// is not included here; it is added to the diagonal at factorization time.
pub fn build_gram(inputs: &[[f64; 2]], params: &KernelParams) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.signal_variance;
        for j in 0..i {
            let v = matern_cov(inputs[i], inputs[j], params);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}
