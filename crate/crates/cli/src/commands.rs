//! The seven subcommands. Each returns `Ok(())` for exit 0, `Data` for
//! exit 2 (usage or data problems), or `Gate` for exit 3 (the accuracy
//! gate failed).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use injury_surrogate::adaptive::{
    adaptive_loop, propose_points, write_pending_csv, read_pending_csv, CandidateSet,
    LoopConfig, LoopOutcome, OracleReply, PendingCase,
};
use injury_surrogate::campaign::{export_csv, ingest_csv, load_fixture, Ledger, RunRecord};
use injury_surrogate::gp::{load_model, save_model, LoadedModel};
use injury_surrogate::uq::{empirical_pdf, lhs_sample, pushforward, summarize};
use injury_surrogate::{GpModel, InputPoint, Metric};

use crate::config::{CandidateSource, RunConfig};
use crate::report;
use crate::svg;

#[derive(Debug)]
pub enum Failure {
    /// Usage or data problem, exit 2.
    Data(String),
    /// The accuracy gate failed, exit 3.
    Gate(String),
}

pub type CmdResult = Result<(), Failure>;

fn data(msg: impl Into<String>) -> Failure {
    Failure::Data(msg.into())
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| data(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out_dir(cfg: &RunConfig) -> CmdResult {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| data(format!("cannot create {}: {e}", cfg.out.display())))
}

/// Load a model file and insist it belongs to `metric`, so a stray
/// `--model` path cannot silently grade the wrong response.
fn load_metric_model(path: &Path, metric: Metric) -> Result<LoadedModel, Failure> {
    let loaded = load_model(path).map_err(|e| data(e.to_string()))?;
    if loaded.metric != metric {
        return Err(data(format!(
            "model {} holds {}, not {metric}",
            path.display(),
            loaded.metric
        )));
    }
    Ok(loaded)
}

pub fn cmd_export(cfg: &RunConfig, fixture: bool) -> CmdResult {
    if !fixture {
        return Err(data(
            "nothing to export: pass --fixture to write the bundled campaign",
        ));
    }
    ensure_out_dir(cfg)?;
    let ledger = load_fixture();
    let path = cfg.ledger_path();
    export_csv(&ledger, &path).map_err(|e| data(e.to_string()))?;
    println!("wrote {} runs to {}", ledger.len(), path.display());
    Ok(())
}

pub fn cmd_ingest(cfg: &RunConfig, file: &Path) -> CmdResult {
    ensure_out_dir(cfg)?;
    let ledger = ingest_csv(file, cfg.design_box).map_err(|e| data(e.to_string()))?;
    let path = cfg.ledger_path();
    export_csv(&ledger, &path).map_err(|e| data(e.to_string()))?;
    println!(
        "ingested {} runs from {} into {}",
        ledger.len(),
        file.display(),
        path.display()
    );
    Ok(())
}

/// The campaign a command trains from: the bundled fixture, an explicit
/// path, or the canonical ledger in the output directory.
fn load_campaign(
    cfg: &RunConfig,
    fixture: bool,
    override_path: Option<&Path>,
) -> Result<Ledger, Failure> {
    if fixture {
        // Revalidate against the configured box in case it was reshaped.
        return Ledger::new(load_fixture().runs().to_vec(), cfg.design_box)
            .map_err(|e| data(e.to_string()));
    }
    let path = override_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.ledger_path());
    if !path.exists() {
        return Err(data(format!(
            "no campaign ledger at {}; run `export --fixture` or `ingest`, or pass --fixture",
            path.display()
        )));
    }
    ingest_csv(&path, cfg.design_box).map_err(|e| data(e.to_string()))
}

/// Parse `--cases` specs (`7` or `1-25`, repeatable) into the sub-ledger
/// they select, preserving ledger order. Every requested id must exist.
fn select_cases(ledger: &Ledger, specs: &[String]) -> Result<(Ledger, Vec<u32>), Failure> {
    let selected = if specs.is_empty() {
        ledger.filtered(|_| true)
    } else {
        let mut wanted = BTreeSet::new();
        for spec in specs {
            let (lo, hi) = match spec.split_once('-') {
                Some((a, b)) => {
                    let lo: u32 = a.trim().parse().map_err(|_| bad_case_spec(spec))?;
                    let hi: u32 = b.trim().parse().map_err(|_| bad_case_spec(spec))?;
                    (lo, hi)
                }
                None => {
                    let id: u32 = spec.trim().parse().map_err(|_| bad_case_spec(spec))?;
                    (id, id)
                }
            };
            if lo > hi {
                return Err(data(format!("--cases {spec}: empty range")));
            }
            for id in lo..=hi {
                if ledger.case(id).is_none() {
                    return Err(data(format!("--cases {spec}: case {id} is not in the ledger")));
                }
                wanted.insert(id);
            }
        }
        ledger.filtered(|r| wanted.contains(&r.case_id))
    };
    if selected.is_empty() {
        return Err(data("case selection matches no runs".to_string()));
    }
    let ids = selected.runs().iter().map(|r| r.case_id).collect();
    Ok((selected, ids))
}

fn bad_case_spec(spec: &str) -> Failure {
    data(format!(
        "--cases {spec}: expected a case id like `7` or a range like `1-25`"
    ))
}

pub fn cmd_fit(
    cfg: &RunConfig,
    fixture: bool,
    ledger_override: Option<&Path>,
    cases: &[String],
) -> CmdResult {
    ensure_out_dir(cfg)?;
    let campaign = load_campaign(cfg, fixture, ledger_override)?;
    let (selected, ids) = select_cases(&campaign, cases)?;
    let inputs = selected.inputs();
    let fit_config = cfg.fit_config();

    for metric in cfg.metric.list() {
        let values = selected.metric_values(metric);
        let model = GpModel::fit(&inputs, &values, &cfg.design_box, &fit_config)
            .map_err(|e| data(e.to_string()))?;
        let model_path = cfg.model_path(metric);
        save_model(&model, metric, &ids, &model_path).map_err(|e| data(e.to_string()))?;
        let text = report::fit_report(metric, &model, &ids);
        let report_path = cfg.out.join(format!("fit-report-{metric}.txt"));
        write_file(&report_path, &text)?;
        print!("{text}");
        println!("wrote {}", model_path.display());
        println!("wrote {}", report_path.display());
    }
    Ok(())
}

/// Candidate inputs for `propose`, per the configured source.
fn build_candidates(cfg: &RunConfig) -> Result<CandidateSet, Failure> {
    match cfg.candidates {
        CandidateSource::GridMidpoints => {
            CandidateSet::grid_midpoints(&cfg.design_box, cfg.grid_levels)
        }
        CandidateSource::LhsPool => {
            CandidateSet::lhs_pool(cfg.pool_size, &cfg.design_box, cfg.seed)
        }
        CandidateSource::File => {
            let path = cfg
                .candidate_file
                .as_ref()
                .expect("validated with candidates = file");
            let cases = read_pending_csv(path).map_err(|e| data(e.to_string()))?;
            let points = cases.into_iter().map(|c| c.point).collect();
            CandidateSet::user_supplied(points, &cfg.design_box)
        }
    }
    .map_err(|e| data(e.to_string()))
}

pub fn cmd_propose(
    cfg: &RunConfig,
    model_override: Option<&Path>,
    k_flag: Option<usize>,
) -> CmdResult {
    let metric = cfg.metric.single("propose").map_err(data)?;
    ensure_out_dir(cfg)?;
    let model_path = model_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.model_path(metric));
    let loaded = load_metric_model(&model_path, metric)?;
    let candidates = build_candidates(cfg)?;
    let k = k_flag.unwrap_or(cfg.k);

    let proposals = propose_points(&loaded.model, candidates.points(), k)
        .map_err(|e| data(e.to_string()))?;
    let next_id = loaded.case_ids.iter().max().copied().unwrap_or(0) + 1;
    let pending: Vec<PendingCase> = proposals
        .iter()
        .enumerate()
        .map(|(i, p)| PendingCase {
            case_id: next_id + i as u32,
            point: p.point,
        })
        .collect();
    let path = cfg.pending_path(metric);
    write_pending_csv(&pending, &path).map_err(|e| data(e.to_string()))?;

    println!(
        "{} candidates ({}), proposing {}:",
        candidates.points().len(),
        candidates.provenance(),
        pending.len()
    );
    for (c, p) in pending.iter().zip(&proposals) {
        println!(
            "  case {}: ({}, {})  posterior variance {:.6}",
            c.case_id, c.point.torso_angle_deg, c.point.dring_z, p.variance
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// Test runs for `check`/`augment`: every row of the results file, keyed
/// by the chosen metric.
fn results_runs(results: &Ledger, metric: Metric) -> Vec<(InputPoint, f64)> {
    results
        .runs()
        .iter()
        .map(|r| (r.input, r.metric_value(metric)))
        .collect()
}

pub fn cmd_check(
    cfg: &RunConfig,
    results_path: &Path,
    pending_path: Option<&Path>,
    model_override: Option<&Path>,
    threshold_flag: Option<f64>,
) -> CmdResult {
    let metric = cfg.metric.single("check").map_err(data)?;
    ensure_out_dir(cfg)?;
    let model_path = model_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.model_path(metric));
    let loaded = load_metric_model(&model_path, metric)?;
    let results = ingest_csv(results_path, cfg.design_box).map_err(|e| data(e.to_string()))?;

    if let Some(pending_path) = pending_path {
        let pending = read_pending_csv(pending_path).map_err(|e| data(e.to_string()))?;
        for pc in &pending {
            let found = results.runs().iter().any(|r| r.input == pc.point);
            if !found {
                return Err(data(format!(
                    "results file {} is missing pending case {} at ({}, {})",
                    results_path.display(),
                    pc.case_id,
                    pc.point.torso_angle_deg,
                    pc.point.dring_z
                )));
            }
        }
    }

    let threshold = match threshold_flag {
        Some(t) if t.is_finite() && t > 0.0 => t,
        Some(t) => return Err(data(format!("--threshold-pct {t}: must be positive"))),
        None => cfg.threshold_pct,
    };
    let runs = results_runs(&results, metric);
    let report = injury_surrogate::adaptive::evaluate_accuracy(&loaded.model, &runs, threshold)
        .map_err(|e| data(e.to_string()))?;

    let text = report::check_report(metric, &report);
    let report_path = cfg.out.join(format!("check-report-{metric}.txt"));
    write_file(&report_path, &text)?;
    print!("{text}");
    println!("wrote {}", report_path.display());

    if report.passed {
        Ok(())
    } else {
        Err(Failure::Gate(format!(
            "accuracy gate failed: worst error {:.4}% is not below {}%",
            report.worst_error_pct, threshold
        )))
    }
}

pub fn cmd_augment(
    cfg: &RunConfig,
    results_path: &Path,
    model_override: Option<&Path>,
    ledger_override: Option<&Path>,
    augment_all: bool,
) -> CmdResult {
    let metric = cfg.metric.single("augment").map_err(data)?;
    ensure_out_dir(cfg)?;
    let model_path = model_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.model_path(metric));
    let loaded = load_metric_model(&model_path, metric)?;
    let results = ingest_csv(results_path, cfg.design_box).map_err(|e| data(e.to_string()))?;
    let ledger_path = ledger_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.ledger_path());
    let campaign = load_campaign(cfg, false, Some(&ledger_path))?;

    // Run the refinement loop with the results file as both the candidate
    // pool and the oracle: absorb rows until the gate passes or the round
    // budget runs out.
    let candidates = CandidateSet::user_supplied(results.inputs(), &cfg.design_box)
        .map_err(|e| data(e.to_string()))?;
    let lookup = results.runs().to_vec();
    let mut oracle = move |q: InputPoint| match lookup.iter().find(|r| r.input == q) {
        Some(r) => OracleReply::Value(r.metric_value(metric)),
        None => OracleReply::Unavailable,
    };
    let loop_config = LoopConfig {
        k: cfg.k,
        threshold_pct: cfg.threshold_pct,
        max_rounds: cfg.max_rounds,
        augment_all,
    };
    let initial_len = loaded.model.training_len();
    let result = adaptive_loop(loaded.model, &mut oracle, &candidates, &loop_config)
        .map_err(|e| data(e.to_string()))?;

    // Map the newly absorbed training rows back to their results-file
    // cases, and extend the campaign ledger with any that are new to it.
    let mut absorbed_ids = Vec::new();
    let mut campaign_runs: Vec<RunRecord> = campaign.runs().to_vec();
    let mut appended = 0usize;
    for input in &result.model.training_inputs()[initial_len..] {
        let row = results
            .runs()
            .iter()
            .find(|r| r.input == *input)
            .ok_or_else(|| data("absorbed point is missing from the results file"))?;
        absorbed_ids.push(row.case_id);
        match campaign.case(row.case_id) {
            Some(existing) if existing == row => {}
            Some(_) => {
                return Err(data(format!(
                    "case {} in {} conflicts with the campaign ledger",
                    row.case_id,
                    results_path.display()
                )))
            }
            None => {
                campaign_runs.push(*row);
                appended += 1;
            }
        }
    }
    if appended > 0 {
        let extended = Ledger::new(campaign_runs, cfg.design_box)
            .map_err(|e| data(e.to_string()))?;
        export_csv(&extended, &ledger_path).map_err(|e| data(e.to_string()))?;
    }

    let mut ids = loaded.case_ids.clone();
    ids.extend(&absorbed_ids);
    save_model(&result.model, metric, &ids, &model_path).map_err(|e| data(e.to_string()))?;

    let text = report::augment_report(metric, &result, &absorbed_ids);
    let report_path = cfg.out.join(format!("augment-report-{metric}.txt"));
    write_file(&report_path, &text)?;
    print!("{text}");
    println!("wrote {}", model_path.display());
    if appended > 0 {
        println!("appended {appended} runs to {}", ledger_path.display());
    }

    match result.outcome {
        LoopOutcome::Converged => Ok(()),
        LoopOutcome::RoundsExhausted => Err(Failure::Gate(format!(
            "accuracy gate still failing after {} rounds",
            loop_config.max_rounds
        ))),
        LoopOutcome::Suspended(pending) => {
            let path = cfg.pending_path(metric);
            write_pending_csv(&pending, &path).map_err(|e| data(e.to_string()))?;
            println!(
                "awaiting {} runs, manifest at {}",
                pending.len(),
                path.display()
            );
            Ok(())
        }
    }
}

pub fn cmd_stats(
    cfg: &RunConfig,
    model_override: Option<&Path>,
    lhs_n_flag: Option<usize>,
) -> CmdResult {
    let metrics = cfg.metric.list();
    if model_override.is_some() && metrics.len() > 1 {
        return Err(data(
            "--model needs a single metric; pass --metric hic15 or --metric a_t1_max",
        ));
    }
    ensure_out_dir(cfg)?;
    let n = match lhs_n_flag {
        Some(0) => return Err(data("--lhs-n 0: need at least one sample")),
        Some(n) => n,
        None => cfg.lhs_n,
    };

    for metric in metrics {
        let model_path = model_override
            .map(Path::to_path_buf)
            .unwrap_or_else(|| cfg.model_path(metric));
        let loaded = load_metric_model(&model_path, metric)?;
        let model_box = loaded.model.design_box();
        if model_box.torso_angle_range() != cfg.design_box.torso_angle_range()
            || model_box.dring_z_range() != cfg.design_box.dring_z_range()
        {
            log::warn!(
                "sampling box {} differs from the model's training box {}",
                cfg.design_box,
                model_box
            );
        }

        let samples = lhs_sample(n, &cfg.design_box, cfg.seed).map_err(|e| data(e.to_string()))?;
        let values = pushforward(&loaded.model, &samples).map_err(|e| data(e.to_string()))?;
        let summary =
            summarize(metric, &values, &cfg.percentiles).map_err(|e| data(e.to_string()))?;
        let hist = empirical_pdf(&values, cfg.bins).map_err(|e| data(e.to_string()))?;

        let summary_path = cfg.out.join(format!("summary-{metric}.txt"));
        write_file(&summary_path, &summary.to_kv_string())?;
        let csv_path = cfg.out.join(format!("histogram-{metric}.csv"));
        write_file(&csv_path, &hist.to_csv_string())?;
        let svg_path = cfg.out.join(format!("histogram-{metric}.svg"));
        write_file(&svg_path, &svg::histogram_svg(metric, &hist, &summary))?;

        print!("{}", summary.to_kv_string());
        println!("wrote {}", summary_path.display());
        println!("wrote {}", csv_path.display());
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

