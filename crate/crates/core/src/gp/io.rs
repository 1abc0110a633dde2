//! Model persistence.
//!
//! A saved model is a single self-describing JSON document carrying the
//! design box, the training rows with their case ids, the standardization
//! constants, the kernel hyperparameters, and how they were obtained. Floats
//! are written in shortest round-trip form, so a load reproduces the model
//! bit-for-bit; the covariance factorization is deterministic and cheap and
//! is recomputed on load rather than stored.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{DesignBox, InputPoint, Metric, SCHEMA_VERSION};

use super::{FitSource, GpError, GpModel, KernelParams};

const MODEL_KIND: &str = "injury-surrogate-gp-model";

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("cannot access model file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("model file {path} is not valid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("model file {path} is incompatible: {reason}")]
    Incompatible { path: PathBuf, reason: String },
    #[error("saved state is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] GpError),
}

/// A model restored from disk, together with its provenance.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: GpModel,
    pub metric: Metric,
    pub case_ids: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    kind: String,
    schema_version: u32,
    metric: Metric,
    design_box: DesignBox,
    standardization: Standardization,
    params: KernelParams,
    fit: FitSource,
    training: Vec<TrainingRow>,
}

#[derive(Serialize, Deserialize)]
struct Standardization {
    mean: f64,
    scale: f64,
}

#[derive(Serialize, Deserialize)]
struct TrainingRow {
    case: u32,
    torso_angle_deg: f64,
    dring_z: f64,
    value: f64,
}

/// Write `model` to `path` as JSON. `case_ids` pairs each training row with
/// the campaign case it came from and must match the training set length.
pub fn save_model(
    model: &GpModel,
    metric: Metric,
    case_ids: &[u32],
    path: impl AsRef<Path>,
) -> Result<(), ModelIoError> {
    let path = path.as_ref();
    if case_ids.len() != model.training_len() {
        return Err(ModelIoError::Inconsistent(format!(
            "{} case ids for {} training rows",
            case_ids.len(),
            model.training_len()
        )));
    }
    let (mean, scale) = model.output_standardization();
    let training = model
        .training_inputs()
        .iter()
        .zip(model.training_outputs())
        .zip(case_ids)
        .map(|((p, y), c)| TrainingRow {
            case: *c,
            torso_angle_deg: p.torso_angle_deg,
            dring_z: p.dring_z,
            value: *y,
        })
        .collect();
    let file = ModelFile {
        kind: MODEL_KIND.to_string(),
        schema_version: SCHEMA_VERSION,
        metric,
        design_box: *model.design_box(),
        standardization: Standardization { mean, scale },
        params: *model.params(),
        fit: model.fit_source().clone(),
        training,
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|source| ModelIoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| ModelIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Restore a model saved by [`save_model`]. The kernel matrices are rebuilt
/// from the stored rows and hyperparameters; no re-optimization happens.
pub fn load_model(path: impl AsRef<Path>) -> Result<LoadedModel, ModelIoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|source| ModelIoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if file.kind != MODEL_KIND {
        return Err(ModelIoError::Incompatible {
            path: path.to_path_buf(),
            reason: format!("kind is `{}`, expected `{MODEL_KIND}`", file.kind),
        });
    }
    if file.schema_version != SCHEMA_VERSION {
        return Err(ModelIoError::Incompatible {
            path: path.to_path_buf(),
            reason: format!(
                "schema version {} is not supported (this build reads {})",
                file.schema_version, SCHEMA_VERSION
            ),
        });
    }

    let mut inputs = Vec::with_capacity(file.training.len());
    let mut outputs = Vec::with_capacity(file.training.len());
    let mut case_ids = Vec::with_capacity(file.training.len());
    for row in &file.training {
        inputs.push(InputPoint::new(row.torso_angle_deg, row.dring_z));
        outputs.push(row.value);
        case_ids.push(row.case);
    }

    let model = GpModel::from_parts(
        inputs,
        outputs,
        file.design_box,
        file.params,
        file.standardization.mean,
        file.standardization.scale,
        file.fit,
    )?;
    Ok(LoadedModel {
        model,
        metric: file.metric,
        case_ids,
    })
}
