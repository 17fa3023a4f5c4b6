//! Human-readable rendering of a pipeline report.

use super::pipeline::PipelineReport;

/// One-screen summary for the CLI `report` subcommand.
pub fn render_text(report: &PipelineReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "problems: {}  traces: {}  per-record failures: {}\n",
        report.problems, report.traces, report.per_record_failures
    ));
    out.push_str(&format!(
        "truncated traces: {}  fallback labels: {}  repaired nodes: {}\n",
        report.truncated_traces, report.fallback_labels, report.repaired_nodes
    ));
    out.push_str("pass@1 by level:\n");
    for (level, rate) in &report.pass_at_1_by_level {
        out.push_str(&format!("  L{level}: {rate:.3}\n"));
    }
    for (name, protocol) in [
        ("l1_transfer", &report.l1_transfer),
        ("pooled_oracle", &report.pooled_oracle),
    ] {
        out.push_str(&format!(
            "{name} (depth {}, {} train rows):\n",
            protocol
                .chosen_depth
                .map(|d| d.to_string())
                .unwrap_or_else(|| "unbounded".into()),
            protocol.train_rows
        ));
        for (level, metrics) in &protocol.per_level {
            out.push_str(&format!(
                "  L{level}: acc {:.3}  w-f1 {:.3}  inc-f1 {:.3}  cor-f1 {:.3}  support {:?}\n",
                metrics.accuracy,
                metrics.weighted_f1,
                metrics.f1_incorrect,
                metrics.f1_correct,
                metrics.support
            ));
        }
    }
    for subset in &report.subsets {
        out.push_str(&format!(
            "subset {} ({} cols): acc {:.3}\n",
            subset.name, subset.columns, subset.metrics.accuracy
        ));
    }
    out.push_str("random feature sampling:\n");
    for point in &report.ablation {
        out.push_str(&format!(
            "  k={}: mean {:.3} +/- {:.3}\n",
            point.k, point.mean_accuracy, point.std_accuracy
        ));
    }
    match report.intervention.intervention_pass_at_1 {
        Some(rate) => out.push_str(&format!(
            "intervention: {}/{} recovered ({rate:.2})\n",
            report.intervention.recovered_count, report.intervention.flagged_count
        )),
        None => out.push_str("intervention: nothing flagged\n"),
    }
    out
}
