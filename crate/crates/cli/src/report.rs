//! Plain-text reports. No timestamps, no absolute paths: the same inputs
//! must produce the same bytes.

use injury_surrogate::adaptive::{relative_error_pct, AccuracyReport, LoopOutcome, LoopResult};
use injury_surrogate::{GpModel, Metric};

/// Fit report: hyperparameters, marginal likelihood, and an in-sample
/// error table over the training runs.
pub fn fit_report(metric: Metric, model: &GpModel, case_ids: &[u32]) -> String {
    let p = model.params();
    let [l0, l1] = p.lengthscales();
    let (y_mean, y_scale) = model.output_standardization();
    let mut out = format!(
        "metric = {metric}\n\
         training_runs = {}\n\
         log_marginal_likelihood = {}\n\
         lengthscales_normalized = {l0}, {l1}\n\
         signal_variance = {}\n\
         noise_variance = {}\n\
         smoothness = {}\n\
         applied_jitter = {}\n\
         output_mean = {y_mean}\n\
         output_scale = {y_scale}\n",
        model.training_len(),
        model.log_marginal_likelihood(),
        p.signal_variance(),
        p.noise_variance(),
        p.smoothness(),
        model.applied_jitter(),
    );

    let mut worst = 0.0f64;
    let mut rows = String::new();
    for (i, (&input, &observed)) in model
        .training_inputs()
        .iter()
        .zip(model.training_outputs())
        .enumerate()
    {
        let predicted = match model.predict(input) {
            Ok(pred) => pred.mean,
            Err(_) => f64::NAN,
        };
        let err = relative_error_pct(predicted, observed).unwrap_or(f64::NAN);
        worst = worst.max(err);
        let case = case_ids.get(i).copied().unwrap_or(0);
        rows.push_str(&format!(
            "{case}\t{}\t{}\t{observed}\t{predicted:.4}\t{err:.4}\n",
            input.torso_angle_deg, input.dring_z
        ));
    }
    out.push_str(&format!("max_in_sample_error_pct = {worst:.4}\n\n"));
    out.push_str("case\ttorso_angle_deg\tdring_z\tobserved\tpredicted\terror_pct\n");
    out.push_str(&rows);
    out
}

/// Accuracy-gate report for `check`.
pub fn check_report(metric: Metric, report: &AccuracyReport) -> String {
    let mut out = format!(
        "metric = {metric}\n\
         threshold_pct = {}\n\
         points_checked = {}\n\
         worst_error_pct = {}\n\
         passed = {}\n\n",
        report.threshold_pct,
        report.entries.len(),
        report.worst_error_pct,
        report.passed,
    );
    out.push_str("torso_angle_deg\tdring_z\tobserved\tpredicted\terror_pct\n");
    for e in &report.entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.4}\t{:.4}\n",
            e.point.torso_angle_deg, e.point.dring_z, e.observed, e.predicted, e.rel_error_pct
        ));
    }
    out
}

/// Round-by-round report for `augment`.
pub fn augment_report(metric: Metric, result: &LoopResult, absorbed: &[u32]) -> String {
    let absorbed_list = absorbed
        .iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let outcome = match &result.outcome {
        LoopOutcome::Converged => "converged",
        LoopOutcome::RoundsExhausted => "rounds-exhausted",
        LoopOutcome::Suspended(_) => "suspended",
    };
    let mut out = format!(
        "metric = {metric}\n\
         rounds = {}\n\
         outcome = {outcome}\n\
         training_runs = {}\n\
         absorbed_cases = {}\n",
        result.reports.len(),
        result.model.training_len(),
        if absorbed_list.is_empty() { "none" } else { &absorbed_list },
    );
    for (i, r) in result.reports.iter().enumerate() {
        out.push_str(&format!(
            "round_{}_worst_error_pct = {}\nround_{}_passed = {}\n",
            i + 1,
            r.worst_error_pct,
            i + 1,
            r.passed
        ));
    }
    out
}
