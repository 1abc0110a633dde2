//! The simulation campaign: run records, the bundled dataset, and file I/O.
//!
//! A campaign is a small set of expensive simulator runs. Each run is a
//! [`RunRecord`]: a numbered case with its two inputs (torso angle in degrees,
//! D-ring Z offset in the design-table units of the bundled dataset) and the
//! two injury metrics extracted from the simulation (HIC15, peak T1
//! x-acceleration). A [`Ledger`] holds the validated collection together with
//! the [`DesignBox`] every input must lie in.
//!
//! The design box also owns unit normalization: all kernel math elsewhere in
//! the crate runs on inputs mapped affinely onto the unit square, which makes
//! results independent of the raw units used for either axis.
//!
//! On-disk format is CSV with the exact header
//! `case,torso_angle_deg,dring_z,hic15,a_t1_max` (UTF-8, LF), plus a
//! `<file>.meta` sidecar carrying the box, units note, and schema version.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version stamp written into exported sidecars and model files.
pub const SCHEMA_VERSION: u32 = 1;

/// Exact CSV header for ledger files.
pub const LEDGER_HEADER: &str = "case,torso_angle_deg,dring_z,hic15,a_t1_max";

/// Errors from campaign data handling.
#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV: {source}")]
    Malformed {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    HeaderMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path} line {line}: {problem}")]
    BadRow {
        path: PathBuf,
        line: u64,
        problem: String,
    },
    #[error("{path}: no data rows")]
    EmptyFile { path: PathBuf },
    #[error("duplicate case id {case_id}")]
    DuplicateCaseId { case_id: u32 },
    #[error(
        "cases {first} and {second} share input ({torso}, {dring}) but disagree on outputs"
    )]
    ConflictingRuns {
        first: u32,
        second: u32,
        torso: f64,
        dring: f64,
    },
    #[error("case {case_id}: input ({torso}, {dring}) lies outside the design box {box_}")]
    OutOfBox {
        case_id: u32,
        torso: f64,
        dring: f64,
        box_: DesignBox,
    },
    #[error("case {case_id}: {problem}")]
    BadRecord { case_id: u32, problem: String },
    #[error("design box {axis} range [{lo}, {hi}] is invalid: lower bound must be below upper")]
    InvalidBox { axis: &'static str, lo: f64, hi: f64 },
}

/// One point in the raw input space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputPoint {
    /// Occupant torso (recline) angle in degrees.
    pub torso_angle_deg: f64,
    /// Seat-belt D-ring Z offset, in the units of the design table.
    pub dring_z: f64,
}

impl InputPoint {
    pub fn new(torso_angle_deg: f64, dring_z: f64) -> Self {
        Self {
            torso_angle_deg,
            dring_z,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.torso_angle_deg.is_finite() && self.dring_z.is_finite()
    }
}

impl fmt::Display for InputPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.torso_angle_deg, self.dring_z)
    }
}

/// Axis-aligned input region; inputs are sampled uniformly and independently
/// per dimension within it.
///
/// Besides bounding the campaign, the box defines the affine map onto the
/// unit square used by all kernel evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDesignBox", into = "RawDesignBox")]
pub struct DesignBox {
    torso_angle_deg: (f64, f64),
    dring_z: (f64, f64),
}

#[derive(Serialize, Deserialize)]
struct RawDesignBox {
    torso_angle_deg: (f64, f64),
    dring_z: (f64, f64),
}

impl From<DesignBox> for RawDesignBox {
    fn from(b: DesignBox) -> Self {
        Self {
            torso_angle_deg: b.torso_angle_deg,
            dring_z: b.dring_z,
        }
    }
}

impl TryFrom<RawDesignBox> for DesignBox {
    type Error = CampaignError;
    fn try_from(raw: RawDesignBox) -> Result<Self, CampaignError> {
        DesignBox::new(raw.torso_angle_deg, raw.dring_z)
    }
}

impl DesignBox {
    /// Builds a box from per-axis `(lo, hi)` ranges. Each range must be
    /// finite with `lo < hi`; a collapsed axis would make normalization
    /// divide by zero.
    pub fn new(
        torso_angle_deg: (f64, f64),
        dring_z: (f64, f64),
    ) -> Result<Self, CampaignError> {
        for (axis, (lo, hi)) in [
            ("torso_angle_deg", torso_angle_deg),
            ("dring_z", dring_z),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CampaignError::InvalidBox { axis, lo, hi });
            }
        }
        Ok(Self {
            torso_angle_deg,
            dring_z,
        })
    }

    pub fn torso_angle_range(&self) -> (f64, f64) {
        self.torso_angle_deg
    }

    pub fn dring_z_range(&self) -> (f64, f64) {
        self.dring_z
    }

    /// Affine map onto the unit square: `(v - lo) / (hi - lo)` per axis.
    /// Out-of-box inputs map outside `[0, 1]` rather than erroring.
    pub fn normalize(&self, p: InputPoint) -> [f64; 2] {
        let (tlo, thi) = self.torso_angle_deg;
        let (dlo, dhi) = self.dring_z;
        [
            (p.torso_angle_deg - tlo) / (thi - tlo),
            (p.dring_z - dlo) / (dhi - dlo),
        ]
    }

    /// Inverse of [`normalize`](Self::normalize).
    pub fn denormalize(&self, u: [f64; 2]) -> InputPoint {
        let (tlo, thi) = self.torso_angle_deg;
        let (dlo, dhi) = self.dring_z;
        InputPoint::new(tlo + u[0] * (thi - tlo), dlo + u[1] * (dhi - dlo))
    }

    /// Whether the point lies inside the box, bounds inclusive.
    pub fn contains(&self, p: InputPoint) -> bool {
        let (tlo, thi) = self.torso_angle_deg;
        let (dlo, dhi) = self.dring_z;
        p.torso_angle_deg >= tlo
            && p.torso_angle_deg <= thi
            && p.dring_z >= dlo
            && p.dring_z <= dhi
    }
}

impl Default for DesignBox {
    /// The campaign region of the bundled dataset: torso angle −10…10
    /// degrees, D-ring −5…5 table units.
    fn default() -> Self {
        Self {
            torso_angle_deg: (-10.0, 10.0),
            dring_z: (-5.0, 5.0),
        }
    }
}

impl fmt::Display for DesignBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}]x[{}, {}]",
            self.torso_angle_deg.0, self.torso_angle_deg.1, self.dring_z.0, self.dring_z.1
        )
    }
}

/// Which injury metric a model or report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    /// Head Injury Criterion over a 15 ms window (dimensionless).
    #[serde(rename = "hic15")]
    Hic15,
    /// Peak T1-vertebra x-acceleration in m/s².
    #[serde(rename = "a_t1_max")]
    AT1Max,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Hic15, Metric::AT1Max];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Hic15 => "hic15",
            Metric::AT1Max => "a_t1_max",
        })
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hic15" => Ok(Metric::Hic15),
            "a_t1_max" => Ok(Metric::AT1Max),
            other => Err(format!(
                "unknown metric `{other}` (expected `hic15` or `a_t1_max`)"
            )),
        }
    }
}

/// One completed simulation case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub case_id: u32,
    pub input: InputPoint,
    /// HIC15, dimensionless, ≥ 0.
    pub hic15: f64,
    /// Peak T1 x-acceleration, m/s², > 0.
    pub a_t1_max: f64,
}

impl RunRecord {
    pub fn new(case_id: u32, input: InputPoint, hic15: f64, a_t1_max: f64) -> Self {
        Self {
            case_id,
            input,
            hic15,
            a_t1_max,
        }
    }

    pub fn metric_value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Hic15 => self.hic15,
            Metric::AT1Max => self.a_t1_max,
        }
    }

    fn validate(&self) -> Result<(), CampaignError> {
        let complain = |problem: String| CampaignError::BadRecord {
            case_id: self.case_id,
            problem,
        };
        if !self.input.is_finite() {
            return Err(complain(format!("non-finite input {}", self.input)));
        }
        if !self.hic15.is_finite() || self.hic15 < 0.0 {
            return Err(complain(format!(
                "hic15 = {} (must be finite and non-negative)",
                self.hic15
            )));
        }
        if !self.a_t1_max.is_finite() || self.a_t1_max <= 0.0 {
            return Err(complain(format!(
                "a_t1_max = {} (must be finite and positive)",
                self.a_t1_max
            )));
        }
        Ok(())
    }
}

/// Validated, ordered collection of runs inside one design box.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    runs: Vec<RunRecord>,
    box_: DesignBox,
}

impl Ledger {
    /// Validates and assembles a ledger: every record well-formed and
    /// in-box, case ids unique, and no two runs sharing an input while
    /// disagreeing on outputs.
    pub fn new(runs: Vec<RunRecord>, box_: DesignBox) -> Result<Self, CampaignError> {
        for (i, run) in runs.iter().enumerate() {
            run.validate()?;
            if !box_.contains(run.input) {
                return Err(CampaignError::OutOfBox {
                    case_id: run.case_id,
                    torso: run.input.torso_angle_deg,
                    dring: run.input.dring_z,
                    box_,
                });
            }
            for earlier in &runs[..i] {
                if earlier.case_id == run.case_id {
                    return Err(CampaignError::DuplicateCaseId {
                        case_id: run.case_id,
                    });
                }
                if earlier.input == run.input
                    && (earlier.hic15 != run.hic15 || earlier.a_t1_max != run.a_t1_max)
                {
                    return Err(CampaignError::ConflictingRuns {
                        first: earlier.case_id,
                        second: run.case_id,
                        torso: run.input.torso_angle_deg,
                        dring: run.input.dring_z,
                    });
                }
            }
        }
        Ok(Self { runs, box_ })
    }

    pub fn runs(&self) -> &[RunRecord] {
        &self.runs
    }

    pub fn design_box(&self) -> DesignBox {
        self.box_
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn case(&self, case_id: u32) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.case_id == case_id)
    }

    /// Ledger restricted to the runs matching `keep`, same box.
    pub fn filtered(&self, keep: impl Fn(&RunRecord) -> bool) -> Ledger {
        Ledger {
            runs: self.runs.iter().copied().filter(keep).collect(),
            box_: self.box_,
        }
    }

    pub fn inputs(&self) -> Vec<InputPoint> {
        self.runs.iter().map(|r| r.input).collect()
    }

    pub fn metric_values(&self, metric: Metric) -> Vec<f64> {
        self.runs.iter().map(|r| r.metric_value(metric)).collect()
    }
}

/// The bundled 27-case campaign: cases 1–25 sweep the full 5×5 grid of
/// torso ∈ {−10,−5,0,5,10} degrees × D-ring ∈ {−5,−2.5,0,2.5,5}; cases 26–27
/// are the points added during adaptive refinement.
const FIXTURE_ROWS: [(u32, f64, f64, f64, f64); 27] = [
    (1, -10.0, -5.0, 20.46, 13.74),
    (2, -10.0, -2.5, 19.44, 14.32),
    (3, -10.0, 0.0, 18.91, 13.68),
    (4, -10.0, 2.5, 19.44, 13.33),
    (5, -10.0, 5.0, 19.34, 13.64),
    (6, -5.0, -5.0, 21.77, 16.33),
    (7, -5.0, -2.5, 21.93, 15.29),
    (8, -5.0, 0.0, 21.38, 14.61),
    (9, -5.0, 2.5, 21.42, 13.92),
    (10, -5.0, 5.0, 22.0, 14.71),
    (11, 0.0, -5.0, 26.41, 14.82),
    (12, 0.0, -2.5, 25.02, 14.86),
    (13, 0.0, 0.0, 25.84, 14.35),
    (14, 0.0, 2.5, 25.11, 13.2),
    (15, 0.0, 5.0, 23.53, 13.08),
    (16, 5.0, -5.0, 32.0, 14.16),
    (17, 5.0, -2.5, 32.91, 14.46),
    (18, 5.0, 0.0, 31.2, 15.23),
    (19, 5.0, 2.5, 31.23, 14.21),
    (20, 5.0, 5.0, 30.85, 14.82),
    (21, 10.0, -5.0, 32.43, 13.53),
    (22, 10.0, -2.5, 32.65, 14.47),
    (23, 10.0, 0.0, 32.13, 14.02),
    (24, 10.0, 2.5, 32.73, 14.12),
    (25, 10.0, 5.0, 32.05, 14.6),
    (26, -2.5, -5.0, 24.28, 13.98),
    (27, 2.5, 0.0, 27.54, 13.43),
];

/// The embedded 27-case dataset over the default design box.
pub fn load_fixture() -> Ledger {
    let runs = FIXTURE_ROWS
        .iter()
        .map(|&(case_id, torso, dring, hic15, a_t1_max)| {
            RunRecord::new(case_id, InputPoint::new(torso, dring), hic15, a_t1_max)
        })
        .collect();
    Ledger::new(runs, DesignBox::default()).expect("embedded dataset is valid")
}

fn parse_field<T: FromStr>(
    path: &Path,
    line: u64,
    name: &str,
    raw: &str,
) -> Result<T, CampaignError> {
    raw.trim()
        .parse()
        .map_err(|_| CampaignError::BadRow {
            path: path.to_path_buf(),
            line,
            problem: format!("cannot parse {name} from `{raw}`"),
        })
}

/// Reads and validates a ledger CSV against `box_`.
///
/// Rejections carry the 1-based file line of the offending row.
pub fn ingest_csv(path: impl AsRef<Path>, box_: DesignBox) -> Result<Ledger, CampaignError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);

    let headers = reader.headers().map_err(|source| CampaignError::Malformed {
        path: path.to_path_buf(),
        source,
    })?;
    let found = headers.iter().collect::<Vec<_>>().join(",");
    if found != LEDGER_HEADER {
        return Err(CampaignError::HeaderMismatch {
            path: path.to_path_buf(),
            expected: LEDGER_HEADER.to_string(),
            found,
        });
    }

    let mut runs: Vec<RunRecord> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| CampaignError::Malformed {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |problem: String| CampaignError::BadRow {
            path: path.to_path_buf(),
            line,
            problem,
        };
        if record.len() != 5 {
            return Err(row_err(format!("expected 5 fields, found {}", record.len())));
        }
        let case_id: u32 = parse_field(path, line, "case", &record[0])?;
        let torso: f64 = parse_field(path, line, "torso_angle_deg", &record[1])?;
        let dring: f64 = parse_field(path, line, "dring_z", &record[2])?;
        let hic15: f64 = parse_field(path, line, "hic15", &record[3])?;
        let a_t1_max: f64 = parse_field(path, line, "a_t1_max", &record[4])?;

        let run = RunRecord::new(case_id, InputPoint::new(torso, dring), hic15, a_t1_max);
        run.validate()
            .map_err(|e| row_err(e.to_string()))?;
        if !box_.contains(run.input) {
            return Err(row_err(format!(
                "input ({torso}, {dring}) lies outside the design box {box_}"
            )));
        }
        if runs.iter().any(|r| r.case_id == case_id) {
            return Err(row_err(format!("duplicate case id {case_id}")));
        }
        if let Some(other) = runs
            .iter()
            .find(|r| r.input == run.input && (r.hic15 != hic15 || r.a_t1_max != a_t1_max))
        {
            return Err(row_err(format!(
                "input ({torso}, {dring}) conflicts with case {}: outputs differ",
                other.case_id
            )));
        }
        runs.push(run);
    }

    if runs.is_empty() {
        return Err(CampaignError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ledger::new(runs, box_)
}

/// Writes the ledger as CSV plus a `<file>.meta` sidecar (box, units,
/// schema version). Floats use shortest round-trip formatting, so
/// `ingest_csv(export_csv(..))` reproduces every field bit-for-bit.
pub fn export_csv(ledger: &Ledger, path: impl AsRef<Path>) -> Result<(), CampaignError> {
    let path = path.as_ref();
    let io_err = |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    };

    let mut out = String::new();
    out.push_str(LEDGER_HEADER);
    out.push('\n');
    for r in ledger.runs() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.case_id, r.input.torso_angle_deg, r.input.dring_z, r.hic15, r.a_t1_max
        ));
    }
    fs::write(path, out).map_err(io_err)?;

    let box_ = ledger.design_box();
    let sidecar = format!(
        "schema_version={}\n\
         torso_angle_deg_range={},{}\n\
         dring_z_range={},{}\n\
         units=torso_angle_deg in degrees; dring_z in design-table units; hic15 dimensionless; a_t1_max in m/s^2\n",
        SCHEMA_VERSION,
        box_.torso_angle_range().0,
        box_.torso_angle_range().1,
        box_.dring_z_range().0,
        box_.dring_z_range().1,
    );
    let mut meta = path.as_os_str().to_owned();
    meta.push(".meta");
    fs::write(PathBuf::from(meta), sidecar).map_err(io_err)?;
    Ok(())
}
