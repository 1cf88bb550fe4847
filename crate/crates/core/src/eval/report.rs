//! Human-readable rendering of scorecards and cost reports: aligned text
//! tables with one row per target.

use std::fmt::Write;

use super::{CostReport, Evaluation, TargetScorecard};

fn percent(accuracy: f64) -> String {
    format!("{:.1}%", accuracy * 100.0)
}

/// One row per target: rule, counts, and accuracy.
pub fn render_scorecard(card: &TargetScorecard) -> String {
    let target_width = card
        .targets
        .iter()
        .map(|t| t.target.len())
        .chain(["target".len()])
        .max()
        .unwrap_or(0);
    let rule_width = card
        .targets
        .iter()
        .map(|t| t.rule.as_str().len())
        .chain(["rule".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    writeln!(
        out,
        "{:<target_width$}  {:<rule_width$}  {:>7}  {:>5}  {:>8}",
        "target", "rule", "correct", "total", "accuracy"
    )
    .unwrap();
    for score in &card.targets {
        writeln!(
            out,
            "{:<target_width$}  {:<rule_width$}  {:>7}  {:>5}  {:>8}",
            score.target,
            score.rule.as_str(),
            score.n_correct,
            score.n_total,
            percent(score.accuracy()),
        )
        .unwrap();
    }
    out
}

pub fn render_cost(cost: &CostReport) -> String {
    let rows = [
        ("traces".to_string(), format!("{}", cost.n_traces)),
        ("completed".to_string(), format!("{}", cost.n_completed)),
        (
            "avg input tokens".to_string(),
            format!("{:.1}", cost.avg_input_tokens),
        ),
        (
            "avg output tokens".to_string(),
            format!("{:.1}", cost.avg_output_tokens),
        ),
        (
            "avg total tokens".to_string(),
            format!("{:.1}", cost.avg_total_tokens),
        ),
        (
            "avg elapsed seconds".to_string(),
            format!("{:.3}", cost.avg_elapsed_seconds),
        ),
        ("total cost".to_string(), format!("{:.4}", cost.total_cost)),
    ];
    let label_width = rows.iter().map(|(label, _)| label.len()).max().unwrap_or(0);
    let value_width = rows.iter().map(|(_, value)| value.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (label, value) in rows {
        writeln!(out, "{label:<label_width$}  {value:>value_width$}").unwrap();
    }
    out
}

pub fn render_evaluation(evaluation: &Evaluation) -> String {
    format!(
        "{}\n{}",
        render_scorecard(&evaluation.scorecard),
        render_cost(&evaluation.cost)
    )
}

/// Accuracy of several runs side by side: rows are targets, columns are
/// run names. Targets a run did not score render as a dash.
pub fn render_comparison(runs: &[(String, TargetScorecard)]) -> String {
    let mut targets: Vec<&str> = Vec::new();
    for (_, card) in runs {
        for score in &card.targets {
            if !targets.contains(&score.target.as_str()) {
                targets.push(&score.target);
            }
        }
    }
    let target_width = targets
        .iter()
        .map(|t| t.len())
        .chain(["target".len()])
        .max()
        .unwrap_or(0);
    let column_widths: Vec<usize> = runs.iter().map(|(name, _)| name.len().max(6)).collect();
    let mut out = String::new();
    write!(out, "{:<target_width$}", "target").unwrap();
    for ((name, _), width) in runs.iter().zip(&column_widths) {
        write!(out, "  {name:>width$}").unwrap();
    }
    out.push('\n');
    for target in targets {
        write!(out, "{target:<target_width$}").unwrap();
        for ((_, card), width) in runs.iter().zip(&column_widths) {
            let cell = card
                .accuracy(target)
                .map_or_else(|| "-".to_string(), percent);
            write!(out, "  {cell:>width$}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{MatchRule, PriceTable, TargetScore};

    fn card(pairs: &[(&str, usize, usize)]) -> TargetScorecard {
        TargetScorecard {
            targets: pairs
                .iter()
                .map(|&(target, n_correct, n_total)| TargetScore {
                    target: target.to_string(),
                    n_correct,
                    n_total,
                    rule: if target == "brand" {
                        MatchRule::Substring
                    } else {
                        MatchRule::Exact
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn scorecard_rows_are_aligned() {
        let text = render_scorecard(&card(&[("brand", 17, 20), ("price", 18, 20)]));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("target"));
        assert!(lines[1].contains("substring"));
        assert!(lines[1].ends_with("85.0%"));
        assert!(lines[2].ends_with("90.0%"));
        // Every row is padded to the same width.
        assert_eq!(lines[1].len(), lines[2].len());
    }

    #[test]
    fn cost_block_prints_every_aggregate() {
        let cost = CostReport {
            n_traces: 1101,
            n_completed: 1101,
            avg_input_tokens: 92_888.0,
            avg_output_tokens: 90.0,
            avg_total_tokens: 92_978.0,
            avg_elapsed_seconds: 8.5,
            total_cost: 15.399_907_2,
            prices: PriceTable {
                input_per_token: 0.15e-6,
                output_per_token: 0.60e-6,
            },
        };
        let text = render_cost(&cost);
        assert!(text.contains("avg total tokens"));
        assert!(text.contains("92978.0"));
        assert!(text.contains("15.3999"));
    }

    #[test]
    fn comparison_places_runs_side_by_side() {
        let runs = vec![
            (
                "baseline".to_string(),
                card(&[("brand", 10, 20), ("price", 20, 20)]),
            ),
            ("tuned".to_string(), card(&[("brand", 18, 20)])),
        ];
        let text = render_comparison(&runs);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("baseline"));
        assert!(lines[0].contains("tuned"));
        assert!(lines[1].starts_with("brand"));
        assert!(lines[1].contains("50.0%"));
        assert!(lines[1].contains("90.0%"));
        // The second run never scored price.
        assert!(lines[2].starts_with("price"));
        assert!(lines[2].trim_end().ends_with('-'));
    }
}
