//! Adaptive refinement: decide where the next simulations should run, score
//! the surrogate against fresh results, and fold those results back in.
//!
//! The cycle is propose (highest posterior variance wins), evaluate
//! (relative error against observed values), augment (refit on the grown
//! training set), repeated until the surrogate clears the accuracy gate or
//! the round budget runs out. Simulations arrive through a [`RunOracle`] so
//! the same loop drives both scripted backends and a human-in-the-loop
//! campaign, where results land hours later: an unavailable oracle suspends
//! the loop and leaves behind the list of cases it is waiting for.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::campaign::{DesignBox, InputPoint};
use crate::gp::{GpError, GpModel};
use crate::uq;

/// Column header of a pending-cases manifest.
pub const PENDING_HEADER: &str = "case,torso_angle_deg,dring_z";

#[derive(Debug, Error)]
pub enum AdaptiveError {
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("requested {requested} proposals but only {available} candidates are available")]
    NotEnoughCandidates { requested: usize, available: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("candidate ({0}) lies outside the design box")]
    CandidateOutsideBox(InputPoint),
    #[error("relative error is undefined against an observed value of zero")]
    ZeroObservation,
    #[error("accuracy check received a non-finite value")]
    NonFiniteValue,
    #[error("no test runs to score against")]
    NoTestRuns,
    #[error("new run at ({point}) reports {new} but the model was trained on {existing} there")]
    ConflictingRun {
        point: InputPoint,
        existing: f64,
        new: f64,
    },
    #[error("cannot access pending manifest {path}: {source}")]
    PendingIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("pending manifest {path} is malformed at line {line}: {problem}")]
    PendingFormat {
        path: PathBuf,
        line: u64,
        problem: String,
    },
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Where a candidate pool came from; reported alongside proposals so a
/// campaign log stays auditable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    GridMidpoints,
    LhsPool,
    UserSupplied,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::GridMidpoints => "grid-midpoints",
            Provenance::LhsPool => "lhs-pool",
            Provenance::UserSupplied => "user-supplied",
        })
    }
}

/// A pool of locations the refinement loop may propose from.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    points: Vec<InputPoint>,
    provenance: Provenance,
}

impl CandidateSet {
    /// Midpoints of the cells of a `levels x levels` grid spanning the box.
    /// These are the locations a full-factorial screening leaves least
    /// constrained, which makes them the natural default pool.
    pub fn grid_midpoints(box_: &DesignBox, levels: usize) -> Result<Self, AdaptiveError> {
        if levels < 2 {
            return Err(AdaptiveError::InvalidRequest(format!(
                "a {levels}-level grid has no cells to take midpoints of"
            )));
        }
        let cells = levels - 1;
        let mut points = Vec::with_capacity(cells * cells);
        for i in 0..cells {
            for j in 0..cells {
                let u = [
                    (i as f64 + 0.5) / cells as f64,
                    (j as f64 + 0.5) / cells as f64,
                ];
                points.push(box_.denormalize(u));
            }
        }
        Ok(Self {
            points,
            provenance: Provenance::GridMidpoints,
        })
    }

    /// Space-filling pool drawn by Latin hypercube sampling.
    pub fn lhs_pool(n: usize, box_: &DesignBox, seed: u64) -> Result<Self, AdaptiveError> {
        let points = uq::lhs_sample(n, box_, seed)
            .map_err(|e| AdaptiveError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            points,
            provenance: Provenance::LhsPool,
        })
    }

    /// Caller-chosen locations. Must be non-empty, finite, and inside the
    /// box, so everything the loop proposes is actually runnable.
    pub fn user_supplied(
        points: Vec<InputPoint>,
        box_: &DesignBox,
    ) -> Result<Self, AdaptiveError> {
        if points.is_empty() {
            return Err(AdaptiveError::NoCandidates);
        }
        for p in &points {
            if !p.is_finite() {
                return Err(AdaptiveError::NonFiniteValue);
            }
            if !box_.contains(*p) {
                return Err(AdaptiveError::CandidateOutsideBox(*p));
            }
        }
        Ok(Self {
            points,
            provenance: Provenance::UserSupplied,
        })
    }

    pub fn points(&self) -> &[InputPoint] {
        &self.points
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// A proposed next simulation and the posterior variance that earned it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub point: InputPoint,
    pub variance: f64,
}

/// Pick the `k` candidates with the highest posterior variance, highest
/// first. Exact variance ties are broken lexicographically by coordinates so
/// the ranking never depends on candidate order.
pub fn propose_points(
    model: &GpModel,
    candidates: &[InputPoint],
    k: usize,
) -> Result<Vec<Proposal>, AdaptiveError> {
    if candidates.is_empty() {
        return Err(AdaptiveError::NoCandidates);
    }
    if k == 0 {
        return Err(AdaptiveError::InvalidRequest(
            "must request at least one proposal".into(),
        ));
    }
    if k > candidates.len() {
        return Err(AdaptiveError::NotEnoughCandidates {
            requested: k,
            available: candidates.len(),
        });
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for p in candidates {
        let variance = model.predict(*p)?.variance;
        scored.push(Proposal {
            point: *p,
            variance,
        });
    }
    scored.sort_by(|a, b| {
        b.variance
            .partial_cmp(&a.variance)
            .expect("posterior variances are finite")
            .then(
                a.point
                    .torso_angle_deg
                    .partial_cmp(&b.point.torso_angle_deg)
                    .expect("candidate coordinates are finite"),
            )
            .then(
                a.point
                    .dring_z
                    .partial_cmp(&b.point.dring_z)
                    .expect("candidate coordinates are finite"),
            )
    });
    scored.truncate(k);
    Ok(scored)
}

/// Prediction error as a percentage of the observed value. Undefined (an
/// error, not infinity) when the observation is exactly zero.
pub fn relative_error_pct(predicted: f64, observed: f64) -> Result<f64, AdaptiveError> {
    if !(predicted.is_finite() && observed.is_finite()) {
        return Err(AdaptiveError::NonFiniteValue);
    }
    if observed == 0.0 {
        return Err(AdaptiveError::ZeroObservation);
    }
    Ok(100.0 * (predicted - observed).abs() / observed.abs())
}

/// Scorecard for one prediction-versus-simulation comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointAccuracy {
    pub point: InputPoint,
    pub predicted: f64,
    pub observed: f64,
    pub rel_error_pct: f64,
}

/// Outcome of scoring a model against held-out runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub entries: Vec<PointAccuracy>,
    pub worst_error_pct: f64,
    pub threshold_pct: f64,
    /// True when every entry is strictly below the threshold.
    pub passed: bool,
}

/// Score the model against observed runs: relative error per point, worst
/// case overall, and a strict pass/fail against `threshold_pct`. Test points
/// outside the design box are scored anyway (the prediction is an
/// extrapolation and a warning says so).
pub fn evaluate_accuracy(
    model: &GpModel,
    test_runs: &[(InputPoint, f64)],
    threshold_pct: f64,
) -> Result<AccuracyReport, AdaptiveError> {
    if test_runs.is_empty() {
        return Err(AdaptiveError::NoTestRuns);
    }
    if !(threshold_pct.is_finite() && threshold_pct > 0.0) {
        return Err(AdaptiveError::InvalidRequest(format!(
            "accuracy threshold must be positive and finite, got {threshold_pct}"
        )));
    }
    let mut entries = Vec::with_capacity(test_runs.len());
    let mut worst = 0.0f64;
    for &(point, observed) in test_runs {
        let prediction = model.predict(point)?;
        if prediction.extrapolated {
            log::warn!(
                "accuracy check point ({point}) lies outside the design box; \
                 scoring an extrapolation"
            );
        }
        let rel = relative_error_pct(prediction.mean, observed)?;
        worst = worst.max(rel);
        entries.push(PointAccuracy {
            point,
            predicted: prediction.mean,
            observed,
            rel_error_pct: rel,
        });
    }
    Ok(AccuracyReport {
        entries,
        worst_error_pct: worst,
        threshold_pct,
        passed: worst < threshold_pct,
    })
}

/// Fold new runs into the training set and refit with the same procedure
/// that produced `model`.
///
/// A run that repeats an existing training input with the same output is
/// dropped as already known; the same input with a different output is a
/// contradiction and an error. An empty batch refits on unchanged data.
pub fn augment_and_refit(
    model: &GpModel,
    new_runs: &[(InputPoint, f64)],
) -> Result<GpModel, AdaptiveError> {
    let mut inputs: Vec<InputPoint> = model.training_inputs().to_vec();
    let mut outputs: Vec<f64> = model.training_outputs().to_vec();
    for &(point, value) in new_runs {
        if !(point.is_finite() && value.is_finite()) {
            return Err(AdaptiveError::NonFiniteValue);
        }
        match inputs.iter().position(|p| *p == point) {
            Some(i) if outputs[i] == value => continue,
            Some(i) => {
                return Err(AdaptiveError::ConflictingRun {
                    point,
                    existing: outputs[i],
                    new: value,
                })
            }
            None => {
                inputs.push(point);
                outputs.push(value);
            }
        }
    }
    Ok(model.refit(&inputs, &outputs)?)
}

/// Source of simulation results for the refinement loop.
pub trait RunOracle {
    fn run(&mut self, point: InputPoint) -> OracleReply;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleReply {
    Value(f64),
    /// The result is not available now (queued solver, manual run, ...).
    Unavailable,
}

impl<F: FnMut(InputPoint) -> OracleReply> RunOracle for F {
    fn run(&mut self, point: InputPoint) -> OracleReply {
        self(point)
    }
}

/// Knobs for [`adaptive_loop`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    /// Proposals per round (clamped to the available pool each round).
    pub k: usize,
    /// Accuracy gate in percent; the loop stops once the worst error is
    /// strictly below it.
    pub threshold_pct: f64,
    pub max_rounds: usize,
    /// Fold every evaluated run into the training set, not only the failing
    /// ones. Costs nothing extra (the simulations already ran) and keeps the
    /// final model consistent with everything that was observed.
    pub augment_all: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            k: 5,
            threshold_pct: 10.0,
            max_rounds: 5,
            augment_all: false,
        }
    }
}

/// A proposed simulation the campaign still owes the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingCase {
    pub case_id: u32,
    pub point: InputPoint,
}

/// Why the loop stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum LoopOutcome {
    /// The accuracy gate was cleared.
    Converged,
    /// The round budget ran out with the gate still failing.
    RoundsExhausted,
    /// The oracle could not supply results; these cases are owed. Rerun once
    /// their simulations land.
    Suspended(Vec<PendingCase>),
}

/// Final state of a refinement loop.
#[derive(Debug)]
pub struct LoopResult {
    pub model: GpModel,
    /// One report per completed evaluation round, in order.
    pub reports: Vec<AccuracyReport>,
    pub outcome: LoopOutcome,
}

/// Run propose / evaluate / augment rounds until the accuracy gate passes,
/// the round budget is exhausted, or the oracle comes up empty.
///
/// Each round proposes from the candidates not already in the training set;
/// once every candidate has been absorbed, the full pool is rescored as an
/// in-sample verification round. A suspension is atomic: partial results
/// from a round are discarded and the owed cases are numbered after the
/// current training set.
pub fn adaptive_loop(
    initial: GpModel,
    oracle: &mut dyn RunOracle,
    candidates: &CandidateSet,
    config: &LoopConfig,
) -> Result<LoopResult, AdaptiveError> {
    if candidates.points().is_empty() {
        return Err(AdaptiveError::NoCandidates);
    }
    if config.k == 0 {
        return Err(AdaptiveError::InvalidRequest(
            "must propose at least one point per round".into(),
        ));
    }
    if !(config.threshold_pct.is_finite() && config.threshold_pct > 0.0) {
        return Err(AdaptiveError::InvalidRequest(format!(
            "accuracy threshold must be positive and finite, got {}",
            config.threshold_pct
        )));
    }
    if config.max_rounds == 0 {
        return Err(AdaptiveError::InvalidRequest(
            "need at least one round".into(),
        ));
    }

    let mut model = initial;
    let mut reports = Vec::new();
    for _round in 0..config.max_rounds {
        let fresh: Vec<InputPoint> = candidates
            .points()
            .iter()
            .filter(|p| !model.training_inputs().contains(p))
            .copied()
            .collect();
        let pool: &[InputPoint] = if fresh.is_empty() {
            candidates.points()
        } else {
            &fresh
        };
        let k = config.k.min(pool.len());
        let proposals = propose_points(&model, pool, k)?;

        let mut runs: Vec<(InputPoint, f64)> = Vec::with_capacity(proposals.len());
        let mut pending = Vec::new();
        for (i, proposal) in proposals.iter().enumerate() {
            match oracle.run(proposal.point) {
                OracleReply::Value(v) => runs.push((proposal.point, v)),
                OracleReply::Unavailable => {
                    // Number the owed cases after the runs the model already
                    // holds; partial results from this round are dropped.
                    let base = model.training_len() as u32;
                    pending = proposals
                        .iter()
                        .enumerate()
                        .map(|(j, p)| PendingCase {
                            case_id: base + 1 + j as u32,
                            point: p.point,
                        })
                        .collect();
                    let _ = i;
                    break;
                }
            }
        }
        if !pending.is_empty() {
            return Ok(LoopResult {
                model,
                reports,
                outcome: LoopOutcome::Suspended(pending),
            });
        }

        let report = evaluate_accuracy(&model, &runs, config.threshold_pct)?;
        let passed = report.passed;
        let to_fold: Vec<(InputPoint, f64)> = if config.augment_all {
            runs
        } else {
            report
                .entries
                .iter()
                .filter(|e| e.rel_error_pct >= config.threshold_pct)
                .map(|e| (e.point, e.observed))
                .collect()
        };
        reports.push(report);

        if !to_fold.is_empty() {
            model = augment_and_refit(&model, &to_fold)?;
        }
        if passed {
            return Ok(LoopResult {
                model,
                reports,
                outcome: LoopOutcome::Converged,
            });
        }
    }
    Ok(LoopResult {
        model,
        reports,
        outcome: LoopOutcome::RoundsExhausted,
    })
}

/// Write the cases a suspended loop is waiting for.
pub fn write_pending_csv(
    cases: &[PendingCase],
    path: impl AsRef<Path>,
) -> Result<(), AdaptiveError> {
    let path = path.as_ref();
    let mut out = String::from(PENDING_HEADER);
    out.push('\n');
    for c in cases {
        out.push_str(&format!(
            "{},{},{}\n",
            c.case_id, c.point.torso_angle_deg, c.point.dring_z
        ));
    }
    fs::write(path, out).map_err(|source| AdaptiveError::PendingIo {
        path: path.to_path_buf(),
        source,
    })
}

/// Read back a manifest written by [`write_pending_csv`].
pub fn read_pending_csv(path: impl AsRef<Path>) -> Result<Vec<PendingCase>, AdaptiveError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| AdaptiveError::PendingIo {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == PENDING_HEADER => {}
        Some((_, header)) => {
            return Err(AdaptiveError::PendingFormat {
                path: path.to_path_buf(),
                line: 1,
                problem: format!("header is `{header}`, expected `{PENDING_HEADER}`"),
            })
        }
        None => {
            return Err(AdaptiveError::PendingFormat {
                path: path.to_path_buf(),
                line: 1,
                problem: "file is empty".into(),
            })
        }
    }

    let mut cases = Vec::new();
    for (idx, row) in lines {
        let line = idx as u64 + 1;
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(AdaptiveError::PendingFormat {
                path: path.to_path_buf(),
                line,
                problem: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let bad = |what: &str, raw: &str| AdaptiveError::PendingFormat {
            path: path.to_path_buf(),
            line,
            problem: format!("cannot parse {what} from `{raw}`"),
        };
        let case_id = u32::from_str(fields[0].trim()).map_err(|_| bad("case", fields[0]))?;
        let torso = f64::from_str(fields[1].trim())
            .map_err(|_| bad("torso_angle_deg", fields[1]))?;
        let dring = f64::from_str(fields[2].trim()).map_err(|_| bad("dring_z", fields[2]))?;
        let point = InputPoint::new(torso, dring);
        if !point.is_finite() {
            return Err(AdaptiveError::PendingFormat {
                path: path.to_path_buf(),
                line,
                problem: "coordinates must be finite".into(),
            });
        }
        cases.push(PendingCase { case_id, point });
    }
    if cases.is_empty() {
        return Err(AdaptiveError::PendingFormat {
            path: path.to_path_buf(),
            line: 1,
            problem: "no pending cases listed".into(),
        });
    }
    Ok(cases)
}
