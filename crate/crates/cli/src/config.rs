//! Run configuration: defaults, the flat key=value config file, and the
//! flag overrides layered on top (flags always win).

use std::fmt;
use std::path::PathBuf;

use injury_surrogate::campaign::DesignBox;
use injury_surrogate::gp::Smoothness;
use injury_surrogate::{FitConfig, Metric};

/// Which metric(s) a command operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricChoice {
    One(Metric),
    Both,
}

impl MetricChoice {
    pub fn list(self) -> Vec<Metric> {
        match self {
            MetricChoice::One(m) => vec![m],
            MetricChoice::Both => Metric::ALL.to_vec(),
        }
    }

    /// The single selected metric, or an error for commands that cannot
    /// operate on both at once.
    pub fn single(self, command: &str) -> Result<Metric, String> {
        match self {
            MetricChoice::One(m) => Ok(m),
            MetricChoice::Both => Err(format!(
                "`{command}` needs a single metric; pass --metric hic15 or --metric a_t1_max"
            )),
        }
    }
}

impl fmt::Display for MetricChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricChoice::One(m) => write!(f, "{m}"),
            MetricChoice::Both => f.write_str("both"),
        }
    }
}

fn parse_metric_choice(s: &str) -> Result<MetricChoice, String> {
    if s == "both" {
        return Ok(MetricChoice::Both);
    }
    s.parse::<Metric>().map(MetricChoice::One).map_err(|_| {
        format!("unknown metric `{s}` (expected `hic15`, `a_t1_max`, or `both`)")
    })
}

/// Where `propose` draws its candidate inputs from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSource {
    GridMidpoints,
    LhsPool,
    File,
}

fn parse_candidate_source(s: &str) -> Result<CandidateSource, String> {
    match s {
        "grid-midpoints" => Ok(CandidateSource::GridMidpoints),
        "lhs-pool" => Ok(CandidateSource::LhsPool),
        "file" => Ok(CandidateSource::File),
        other => Err(format!(
            "unknown candidate source `{other}` (expected `grid-midpoints`, `lhs-pool`, or `file`)"
        )),
    }
}

/// Everything a command needs beyond its own flags. Built from defaults,
/// then the config file, then command-line overrides.
#[derive(Debug, Clone)]
pub struct RunConfig {
    torso_angle: (f64, f64),
    dring_z: (f64, f64),
    /// Kept in sync with the raw ranges by `validate`.
    pub design_box: DesignBox,
    pub metric: MetricChoice,
    pub smoothness: Smoothness,
    /// Seed for every random draw: fit restarts, LHS sampling, candidate pools.
    pub seed: u64,
    pub restarts: usize,
    pub noise_lo: f64,
    pub noise_hi: f64,
    /// Accuracy gate in percent (strict less-than).
    pub threshold_pct: f64,
    /// Points proposed per round.
    pub k: usize,
    /// Round budget when `augment` drives the refinement loop.
    pub max_rounds: usize,
    pub candidates: CandidateSource,
    /// Candidate manifest, required when `candidates = file`.
    pub candidate_file: Option<PathBuf>,
    /// Grid resolution per axis behind `grid-midpoints` (cells between levels).
    pub grid_levels: usize,
    /// Pool size behind `lhs-pool`.
    pub pool_size: usize,
    pub lhs_n: usize,
    pub percentiles: Vec<f64>,
    pub bins: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            torso_angle: (-10.0, 10.0),
            dring_z: (-5.0, 5.0),
            design_box: DesignBox::default(),
            metric: MetricChoice::Both,
            smoothness: Smoothness::FiveHalves,
            seed: 42,
            restarts: 8,
            noise_lo: 1e-8,
            noise_hi: 1e-2,
            threshold_pct: 10.0,
            k: 5,
            max_rounds: 5,
            candidates: CandidateSource::GridMidpoints,
            candidate_file: None,
            grid_levels: 5,
            pool_size: 1000,
            lhs_n: 10_000,
            percentiles: vec![90.0, 95.0],
            bins: 100,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            smoothness: self.smoothness,
            seed: self.seed,
            restarts: self.restarts,
            noise_variance_bounds: (self.noise_lo, self.noise_hi),
            ..FitConfig::default()
        }
    }

    /// Default artifact paths, all under the output directory.
    pub fn model_path(&self, metric: Metric) -> PathBuf {
        self.out.join(format!("model-{metric}.json"))
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.out.join("ledger.csv")
    }

    pub fn pending_path(&self, metric: Metric) -> PathBuf {
        self.out.join(format!("pending-{metric}.csv"))
    }

    /// Apply one `key = value` pair. `where_` names the source for errors
    /// ("config line 3" or "flag --seed").
    fn set(&mut self, key: &str, value: &str, where_: &str) -> Result<(), String> {
        let bad = |what: &str| format!("{where_}: cannot parse {what} from `{value}`");
        match key {
            // Raw edge updates; the box is validated once the whole layer
            // is applied, so edges can move in any order.
            "torso_angle_lo" | "torso_angle_hi" | "dring_z_lo" | "dring_z_hi" => {
                let v: f64 = value.parse().map_err(|_| bad(key))?;
                match key {
                    "torso_angle_lo" => self.torso_angle.0 = v,
                    "torso_angle_hi" => self.torso_angle.1 = v,
                    "dring_z_lo" => self.dring_z.0 = v,
                    _ => self.dring_z.1 = v,
                }
            }
            "metric" => self.metric = parse_metric_choice(value).map_err(|e| format!("{where_}: {e}"))?,
            "smoothness" => {
                self.smoothness = value
                    .parse()
                    .map_err(|e| format!("{where_}: {e}"))?
            }
            "seed" => self.seed = value.parse().map_err(|_| bad("an integer seed"))?,
            "restarts" => {
                self.restarts = parse_count(value, 1).map_err(|_| bad("a positive count"))?
            }
            "noise_lo" => self.noise_lo = parse_nonneg(value).map_err(|_| bad("a non-negative number"))?,
            "noise_hi" => self.noise_hi = parse_nonneg(value).map_err(|_| bad("a non-negative number"))?,
            "threshold_pct" => {
                let v: f64 = value.parse().map_err(|_| bad("a percentage"))?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(format!("{where_}: threshold_pct must be positive"));
                }
                self.threshold_pct = v;
            }
            "k" => self.k = parse_count(value, 1).map_err(|_| bad("a positive count"))?,
            "max_rounds" => {
                self.max_rounds = parse_count(value, 1).map_err(|_| bad("a positive count"))?
            }
            "candidates" => {
                self.candidates =
                    parse_candidate_source(value).map_err(|e| format!("{where_}: {e}"))?
            }
            "candidate_file" => self.candidate_file = Some(PathBuf::from(value)),
            "grid_levels" => {
                self.grid_levels = parse_count(value, 2).map_err(|_| bad("a count of at least 2"))?
            }
            "pool_size" => {
                self.pool_size = parse_count(value, 1).map_err(|_| bad("a positive count"))?
            }
            "lhs_n" => self.lhs_n = parse_count(value, 1).map_err(|_| bad("a positive count"))?,
            "percentiles" => {
                let mut levels = Vec::new();
                for part in value.split(',') {
                    let p: f64 = part.trim().parse().map_err(|_| bad("a percentile list"))?;
                    if !(p.is_finite() && 0.0 < p && p < 100.0) {
                        return Err(format!(
                            "{where_}: percentile {p} is outside (0, 100)"
                        ));
                    }
                    levels.push(p);
                }
                if levels.is_empty() {
                    return Err(format!("{where_}: percentile list is empty"));
                }
                self.percentiles = levels;
            }
            "bins" => self.bins = parse_count(value, 1).map_err(|_| bad("a positive count"))?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(format!("{where_}: unknown key `{other}`")),
        }
        Ok(())
    }

    /// Layer a config file over the current values. Lines are `key = value`;
    /// blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &std::path::Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let where_ = format!("{} line {}", path.display(), i + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{where_}: expected `key = value`, got `{line}`"))?;
            self.set(key.trim(), value.trim(), &where_)?;
        }
        self.validate()
    }

    /// Layer the global command-line flags over the current values.
    pub fn apply_flags(
        &mut self,
        metric: Option<&str>,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<(), String> {
        if let Some(m) = metric {
            self.metric = parse_metric_choice(m).map_err(|e| format!("--metric: {e}"))?;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        self.validate()
    }

    fn validate(&mut self) -> Result<(), String> {
        self.design_box = DesignBox::new(self.torso_angle, self.dring_z)
            .map_err(|e| e.to_string())?;
        if self.noise_lo > self.noise_hi {
            return Err(format!(
                "noise_lo ({}) must not exceed noise_hi ({})",
                self.noise_lo, self.noise_hi
            ));
        }
        if self.candidates == CandidateSource::File && self.candidate_file.is_none() {
            return Err("candidates = file requires candidate_file".to_string());
        }
        Ok(())
    }
}

fn parse_count(value: &str, min: usize) -> Result<usize, ()> {
    match value.parse::<usize>() {
        Ok(v) if v >= min => Ok(v),
        _ => Err(()),
    }
}

fn parse_nonneg(value: &str) -> Result<f64, ()> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(()),
    }
}
