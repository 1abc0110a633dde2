//! Gaussian-process surrogate over the two-dimensional restraint design
//! space.
//!
//! Inputs are normalized to the unit square before any kernel math, and
//! outputs are standardized to zero mean and unit spread during fitting, so
//! hyperparameters live on a scale-free footing regardless of the metric's
//! units. Predictions are mapped back to physical units on the way out.
//!
//! Hyperparameters are chosen by maximizing the log marginal likelihood with
//! a multi-start simplex search in log-space. The optimizer is seeded, the
//! starts are drawn from a counter-based generator, and ties are broken by
//! first strict improvement, so a fit is reproducible bit-for-bit for a given
//! seed and configuration.

mod io;
mod kernel;
mod optimize;

pub use io::{load_model, save_model, LoadedModel, ModelIoError};
pub use kernel::{build_gram, matern_cov, KernelParams, Smoothness};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{DesignBox, InputPoint};

const LN_2PI: f64 = 1.8378770664093453;

/// Ceiling of the diagonal-regularization ladder tried when a covariance
/// matrix is numerically indefinite.
const MAX_JITTER: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("need at least {needed} training runs, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("{inputs} training inputs but {outputs} outputs")]
    LengthMismatch { inputs: usize, outputs: usize },
    #[error("training data contains a non-finite value")]
    NonFiniteData,
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("covariance factorization failed even with diagonal regularization up to {max_jitter:e}")]
    FactorizationFailed { max_jitter: f64 },
    #[error("no optimizer start produced a usable likelihood")]
    AllStartsFailed,
    #[error("predicted variance {value:e} is more negative than round-off tolerance")]
    NegativeVariance { value: f64 },
    #[error("prediction query contains a non-finite coordinate")]
    NonFiniteQuery,
}

/// Settings for the marginal-likelihood hyperparameter search.
///
/// The default bounds reflect the geometry of the 5x5 screening grid this
/// tool was built around: after normalization the grid pitch is 0.25, so
/// lengthscales are kept at or above one cell (anything shorter can only
/// chase noise between samples) and below 5 (flat beyond the box). The noise
/// ceiling of 1e-2 in standardized units says the simulations are
/// deterministic to better than a tenth of the output spread; without that
/// ceiling a short-data fit can wander into an all-noise explanation of the
/// data and flatten the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub smoothness: Smoothness,
    /// Random optimizer starts in addition to the fixed center start.
    pub restarts: usize,
    pub seed: u64,
    /// Bounds on both lengthscales, in normalized input units.
    pub lengthscale_bounds: (f64, f64),
    /// Bounds on the signal variance, in standardized output units.
    pub signal_variance_bounds: (f64, f64),
    /// Bounds on the noise variance, in standardized output units.
    pub noise_variance_bounds: (f64, f64),
    /// Iteration cap for each simplex descent.
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            smoothness: Smoothness::FiveHalves,
            restarts: 8,
            seed: 42,
            lengthscale_bounds: (0.25, 5.0),
            signal_variance_bounds: (1e-3, 1e3),
            noise_variance_bounds: (1e-8, 1e-2),
            max_iterations: 400,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<(), GpError> {
        let pairs = [
            ("lengthscale_bounds", self.lengthscale_bounds),
            ("signal_variance_bounds", self.signal_variance_bounds),
            ("noise_variance_bounds", self.noise_variance_bounds),
        ];
        for (name, (lo, hi)) in pairs {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(GpError::InvalidConfig(format!(
                    "{name} = ({lo}, {hi}); bounds must be finite with 0 < lo < hi"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(GpError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// How a model's hyperparameters were obtained. Retained so that refits after
/// data augmentation repeat the same procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FitSource {
    /// Marginal-likelihood search with the stored configuration.
    Optimized(FitConfig),
    /// Caller-supplied hyperparameters; refits reuse them unchanged.
    FixedParams,
}

/// Posterior mean and variance at a query point, in physical output units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    /// True when the query lies outside the design box the model was trained
    /// on. The math still evaluates; trust decays with distance.
    pub extrapolated: bool,
}

/// A fitted Gaussian-process surrogate for one injury metric.
#[derive(Debug, Clone)]
pub struct GpModel {
    box_: DesignBox,
    inputs: Vec<InputPoint>,
    norm_inputs: Vec<[f64; 2]>,
    outputs: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    params: KernelParams,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
    lml: f64,
    source: FitSource,
}

impl GpModel {
    /// Fit hyperparameters to the training runs by maximizing the log
    /// marginal likelihood. Requires at least two runs; duplicate inputs are
    /// allowed (repeats of the same simulation) and only become a conditioning
    /// hazard when the fitted noise is essentially zero, which triggers a
    /// warning.
    pub fn fit(
        inputs: &[InputPoint],
        outputs: &[f64],
        box_: &DesignBox,
        config: &FitConfig,
    ) -> Result<GpModel, GpError> {
        check_training_data(inputs, outputs, 2)?;
        config.validate()?;

        let norm: Vec<[f64; 2]> = inputs.iter().map(|p| box_.normalize(*p)).collect();
        let (y_mean, y_scale) = standardization(outputs);
        let ys = DVector::from_iterator(
            outputs.len(),
            outputs.iter().map(|y| (y - y_mean) / y_scale),
        );

        let lb = [
            config.lengthscale_bounds.0.ln(),
            config.lengthscale_bounds.0.ln(),
            config.signal_variance_bounds.0.ln(),
            config.noise_variance_bounds.0.ln(),
        ];
        let ub = [
            config.lengthscale_bounds.1.ln(),
            config.lengthscale_bounds.1.ln(),
            config.signal_variance_bounds.1.ln(),
            config.noise_variance_bounds.1.ln(),
        ];
        let clamp = |theta: &[f64]| -> [f64; 4] {
            let mut t = [0.0; 4];
            for i in 0..4 {
                t[i] = theta[i].clamp(lb[i], ub[i]);
            }
            t
        };
        // Clamp again after exponentiation: exp(ln(bound)) can land one ulp
        // outside the bound, and fitted parameters must respect it exactly.
        let params_at = |theta: &[f64; 4]| -> KernelParams {
            let (l_lo, l_hi) = config.lengthscale_bounds;
            let (s_lo, s_hi) = config.signal_variance_bounds;
            let (n_lo, n_hi) = config.noise_variance_bounds;
            KernelParams::new(
                [
                    theta[0].exp().clamp(l_lo, l_hi),
                    theta[1].exp().clamp(l_lo, l_hi),
                ],
                theta[2].exp().clamp(s_lo, s_hi),
                theta[3].exp().clamp(n_lo, n_hi),
                config.smoothness,
            )
            .expect("clamped log-space parameters are positive and finite")
        };

        let mut objective = |theta: &[f64]| -> f64 {
            let params = params_at(&clamp(theta));
            match neg_log_marginal(&norm, &ys, &params) {
                Some(v) if v.is_finite() => v,
                _ => f64::INFINITY,
            }
        };

        // One deterministic start near the middle of the box plus seeded
        // uniform draws across the log-space search region.
        let mut starts: Vec<[f64; 4]> = Vec::with_capacity(config.restarts + 1);
        starts.push(clamp(&[0.5f64.ln(), 0.5f64.ln(), 0.0, 1e-4f64.ln()]));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for _ in 0..config.restarts {
            let mut s = [0.0; 4];
            for i in 0..4 {
                s[i] = lb[i] + rng.gen::<f64>() * (ub[i] - lb[i]);
            }
            starts.push(s);
        }

        let mut best: Option<([f64; 4], f64)> = None;
        for start in &starts {
            let res = optimize::nelder_mead(
                &mut objective,
                start,
                config.max_iterations,
                1e-6,
                1e-9,
            );
            if res.fx.is_finite() && best.as_ref().is_none_or(|(_, fx)| res.fx < *fx) {
                best = Some((clamp(&res.x), res.fx));
            }
        }
        let (theta, _) = best.ok_or(GpError::AllStartsFailed)?;
        let params = params_at(&theta);

        GpModel::from_parts(
            inputs.to_vec(),
            outputs.to_vec(),
            *box_,
            params,
            y_mean,
            y_scale,
            FitSource::Optimized(config.clone()),
        )
    }

    /// Build a model with caller-chosen hyperparameters and no output
    /// standardization. Accepts a single training run, which is occasionally
    /// useful for sanity-checking likelihood values by hand.
    pub fn with_params(
        inputs: &[InputPoint],
        outputs: &[f64],
        box_: &DesignBox,
        params: KernelParams,
    ) -> Result<GpModel, GpError> {
        check_training_data(inputs, outputs, 1)?;
        GpModel::from_parts(
            inputs.to_vec(),
            outputs.to_vec(),
            *box_,
            params,
            0.0,
            1.0,
            FitSource::FixedParams,
        )
    }

    /// Rebuild the model on new training data using the same procedure that
    /// produced this one: a fresh likelihood search for optimized models, the
    /// stored hyperparameters for fixed ones.
    pub fn refit(&self, inputs: &[InputPoint], outputs: &[f64]) -> Result<GpModel, GpError> {
        match &self.source {
            FitSource::Optimized(cfg) => GpModel::fit(inputs, outputs, &self.box_, cfg),
            FitSource::FixedParams => {
                GpModel::with_params(inputs, outputs, &self.box_, self.params)
            }
        }
    }

    pub(crate) fn from_parts(
        inputs: Vec<InputPoint>,
        outputs: Vec<f64>,
        box_: DesignBox,
        params: KernelParams,
        y_mean: f64,
        y_scale: f64,
        source: FitSource,
    ) -> Result<GpModel, GpError> {
        if inputs.len() != outputs.len() {
            return Err(GpError::LengthMismatch {
                inputs: inputs.len(),
                outputs: outputs.len(),
            });
        }
        if inputs.is_empty() {
            return Err(GpError::InsufficientData { needed: 1, got: 0 });
        }
        if !(y_mean.is_finite() && y_scale.is_finite() && y_scale > 0.0) {
            return Err(GpError::InvalidParameter(format!(
                "output standardization (mean {y_mean}, scale {y_scale}) must be finite with positive scale"
            )));
        }

        let norm_inputs: Vec<[f64; 2]> = inputs.iter().map(|p| box_.normalize(*p)).collect();
        let has_duplicates = {
            let mut dup = false;
            'outer: for i in 0..norm_inputs.len() {
                for j in 0..i {
                    if norm_inputs[i] == norm_inputs[j] {
                        dup = true;
                        break 'outer;
                    }
                }
            }
            dup
        };
        if has_duplicates && params.noise_variance() < 1e-8 {
            log::warn!(
                "training set repeats an input with noise variance {:e}; \
                 the covariance is near-singular and regularization will kick in",
                params.noise_variance()
            );
        }

        let ys = DVector::from_iterator(
            outputs.len(),
            outputs.iter().map(|y| (y - y_mean) / y_scale),
        );
        let gram = build_gram(&norm_inputs, &params);
        let (chol, jitter) = factorize(&gram, params.noise_variance())?;
        let alpha = chol.solve(&ys);
        let chol_l = chol.unpack();
        let lml = lml_from_factor(&chol_l, &ys, &alpha);

        Ok(GpModel {
            box_,
            inputs,
            norm_inputs,
            outputs,
            y_mean,
            y_scale,
            params,
            chol_l,
            alpha,
            jitter,
            lml,
            source,
        })
    }

    /// Posterior mean and variance at one query point, in output units.
    ///
    /// Queries outside the design box are answered but flagged. Tiny negative
    /// variances from round-off are clamped to zero; anything materially
    /// negative is reported as an error rather than silently patched.
    pub fn predict(&self, query: InputPoint) -> Result<Prediction, GpError> {
        if !query.is_finite() {
            return Err(GpError::NonFiniteQuery);
        }
        let q = self.box_.normalize(query);
        let n = self.norm_inputs.len();
        let k_star =
            DVector::from_fn(n, |i, _| matern_cov(self.norm_inputs[i], q, &self.params));
        let mean_std = k_star.dot(&self.alpha);
        let sol = self
            .chol_l
            .solve_lower_triangular(&k_star)
            .expect("factor from a successful Cholesky has a positive diagonal");
        let mut var_std = self.params.signal_variance() - sol.norm_squared();
        if var_std < 0.0 {
            // Round-off tolerance scales with the prior variance.
            let tol = 1e-8 * self.params.signal_variance().max(1.0);
            if var_std >= -tol {
                var_std = 0.0;
            } else {
                return Err(GpError::NegativeVariance {
                    value: var_std * self.y_scale * self.y_scale,
                });
            }
        }
        Ok(Prediction {
            mean: self.y_mean + self.y_scale * mean_std,
            variance: self.y_scale * self.y_scale * var_std,
            extrapolated: !self.box_.contains(query),
        })
    }

    /// Log marginal likelihood of the training data under the fitted
    /// hyperparameters (standardized output units for optimized fits).
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn training_inputs(&self) -> &[InputPoint] {
        &self.inputs
    }

    pub fn training_outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn training_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn design_box(&self) -> &DesignBox {
        &self.box_
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Diagonal regularization that was needed to factorize the covariance;
    /// zero for a well-conditioned fit.
    pub fn applied_jitter(&self) -> f64 {
        self.jitter
    }

    /// Output standardization constants (mean, scale) baked into the model.
    pub fn output_standardization(&self) -> (f64, f64) {
        (self.y_mean, self.y_scale)
    }

    pub fn fit_source(&self) -> &FitSource {
        &self.source
    }
}

fn check_training_data(
    inputs: &[InputPoint],
    outputs: &[f64],
    needed: usize,
) -> Result<(), GpError> {
    if inputs.len() != outputs.len() {
        return Err(GpError::LengthMismatch {
            inputs: inputs.len(),
            outputs: outputs.len(),
        });
    }
    if inputs.len() < needed {
        return Err(GpError::InsufficientData {
            needed,
            got: inputs.len(),
        });
    }
    if inputs.iter().any(|p| !p.is_finite()) || outputs.iter().any(|y| !y.is_finite()) {
        return Err(GpError::NonFiniteData);
    }
    Ok(())
}

/// Mean and sample standard deviation of the outputs; constant data falls
/// back to unit scale so the transform stays invertible.
fn standardization(outputs: &[f64]) -> (f64, f64) {
    let n = outputs.len() as f64;
    let mean = outputs.iter().sum::<f64>() / n;
    if outputs.len() < 2 {
        return (mean, 1.0);
    }
    let var = outputs.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd > 1e-300 {
        (mean, sd)
    } else {
        (mean, 1.0)
    }
}

/// Cholesky with an escalating diagonal-regularization ladder: the exact
/// matrix first, then 1e-10 growing tenfold per retry up to 1e-6.
fn factorize(
    gram: &DMatrix<f64>,
    noise_variance: f64,
) -> Result<(Cholesky<f64, nalgebra::Dyn>, f64), GpError> {
    let n = gram.nrows();
    let mut jitter = 0.0f64;
    loop {
        let mut k = gram.clone();
        for i in 0..n {
            k[(i, i)] += noise_variance + jitter;
        }
        if let Some(chol) = Cholesky::new(k) {
            return Ok((chol, jitter));
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > MAX_JITTER * (1.0 + 1e-12) {
            return Err(GpError::FactorizationFailed {
                max_jitter: MAX_JITTER,
            });
        }
    }
}

fn lml_from_factor(chol_l: &DMatrix<f64>, ys: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = ys.len() as f64;
    let log_det_half: f64 = (0..ys.len()).map(|i| chol_l[(i, i)].ln()).sum();
    -0.5 * ys.dot(alpha) - log_det_half - 0.5 * n * LN_2PI
}

/// Negative log marginal likelihood for the optimizer; `None` when the
/// covariance is not positive definite at these parameters.
fn neg_log_marginal(
    norm_inputs: &[[f64; 2]],
    ys: &DVector<f64>,
    params: &KernelParams,
) -> Option<f64> {
    let mut k = build_gram(norm_inputs, params);
    for i in 0..norm_inputs.len() {
        k[(i, i)] += params.noise_variance();
    }
    let chol = Cholesky::new(k)?;
    let alpha = chol.solve(ys);
    let l = chol.l_dirty();
    let n = ys.len() as f64;
    let log_det_half: f64 = (0..ys.len()).map(|i| l[(i, i)].ln()).sum();
    Some(0.5 * ys.dot(&alpha) + log_det_half + 0.5 * n * LN_2PI)
}
