//! Metrics log and evaluation report files, plus their terminal tables.

use std::fmt::Write as _;
use std::path::Path;

use diaglab_core::eval::{CaseResult, EvalReport, MetricDelta};
use diaglab_core::train::TrainMetrics;

use crate::codec::{content_lines, Fields, LineWriter};
use crate::error::{read_text, write_text, FormatError};

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricsRecord {
    Sft { epoch: usize, loss: f64 },
    Grpo(TrainMetrics),
}

/// `phase=sft` lines carry `epoch` and `loss`; `phase=grpo` lines carry the
/// training-metric fields. `wall_time` is 0 unless timing was requested, so
/// that repeated runs give identical logs.
pub fn format_metrics_record(r: &MetricsRecord) -> String {
    match r {
        MetricsRecord::Sft { epoch, loss } => {
            LineWriter::new().field("phase", "sft").field("epoch", epoch).field("loss", loss).finish()
        }
        MetricsRecord::Grpo(m) => LineWriter::new()
            .field("phase", "grpo")
            .field("step", m.step)
            .field("mean_reward", m.mean_reward)
            .field("format_pass_rate", m.format_pass_rate)
            .field("mean_kl", m.mean_kl)
            .field("clip_fraction", m.clip_fraction)
            .field("loss", m.loss)
            .field("wall_time", m.wall_time)
            .finish(),
    }
}

pub fn parse_metrics_log(text: &str) -> Result<Vec<MetricsRecord>, FormatError> {
    content_lines(text)
        .map(|(n, line)| {
            let f = Fields::parse(n, line)?;
            match f.require("phase")? {
                "sft" => {
                    f.only(&["phase", "epoch", "loss"])?;
                    Ok(MetricsRecord::Sft { epoch: f.parse_value("epoch")?, loss: f.parse_value("loss")? })
                }
                "grpo" => {
                    f.only(&[
                        "phase",
                        "step",
                        "mean_reward",
                        "format_pass_rate",
                        "mean_kl",
                        "clip_fraction",
                        "loss",
                        "wall_time",
                    ])?;
                    Ok(MetricsRecord::Grpo(TrainMetrics {
                        step: f.parse_value("step")?,
                        mean_reward: f.parse_value("mean_reward")?,
                        format_pass_rate: f.parse_value("format_pass_rate")?,
                        mean_kl: f.parse_value("mean_kl")?,
                        clip_fraction: f.parse_value("clip_fraction")?,
                        loss: f.parse_value("loss")?,
                        wall_time: f.parse_value("wall_time")?,
                    }))
                }
                other => Err(f.malformed(format!("unknown phase {other:?}"))),
            }
        })
        .collect()
}

pub fn read_metrics_log(path: &Path) -> Result<Vec<MetricsRecord>, FormatError> {
    parse_metrics_log(&read_text(path)?).map_err(|e| e.in_file(path))
}

/// Eval report file: a summary line (`kind=summary`) followed by one
/// `kind=case` line per case, ordered by id. Caption fields are omitted for
/// cases whose reference has no findings.
pub fn format_eval_report(r: &EvalReport) -> String {
    let mut s = LineWriter::new()
        .field("kind", "summary")
        .field("split", &r.split)
        .field("n_cases", r.n_cases)
        .field("n_caption_cases", r.n_caption_cases)
        .field("caption_cosine_mean", r.caption_cosine_mean)
        .field("caption_bleu_mean", r.caption_bleu_mean)
        .field("answer_cosine_mean", r.answer_cosine_mean)
        .field("answer_bleu_mean", r.answer_bleu_mean)
        .field("format_pass_rate", r.format_pass_rate)
        .field("reward_mean", r.reward_mean)
        .finish();
    for c in &r.cases {
        s += &LineWriter::new()
            .field("kind", "case")
            .field("id", &c.id)
            .field("format", c.format)
            .opt_field("caption_cosine", c.caption_cosine)
            .opt_field("caption_bleu", c.caption_bleu)
            .field("answer_cosine", c.answer_cosine)
            .field("answer_bleu", c.answer_bleu)
            .field("reward", c.reward)
            .field("generated", &c.generated)
            .finish();
    }
    s
}

pub fn parse_eval_report(text: &str) -> Result<EvalReport, FormatError> {
    let mut lines = content_lines(text);
    let (n, first) = lines.next().ok_or_else(|| FormatError::Invalid("empty report".into()))?;
    let f = Fields::parse(n, first)?;
    if f.get("kind") != Some("summary") {
        return Err(f.malformed("first line must be the summary"));
    }
    let mut report = EvalReport {
        split: f.require("split")?.into(),
        n_cases: f.parse_value("n_cases")?,
        n_caption_cases: f.parse_value("n_caption_cases")?,
        caption_cosine_mean: f.parse_value("caption_cosine_mean")?,
        caption_bleu_mean: f.parse_value("caption_bleu_mean")?,
        answer_cosine_mean: f.parse_value("answer_cosine_mean")?,
        answer_bleu_mean: f.parse_value("answer_bleu_mean")?,
        format_pass_rate: f.parse_value("format_pass_rate")?,
        reward_mean: f.parse_value("reward_mean")?,
        cases: Vec::new(),
    };
    for (n, line) in lines {
        let f = Fields::parse(n, line)?;
        if f.get("kind") != Some("case") {
            return Err(f.malformed("expected a case line"));
        }
        report.cases.push(CaseResult {
            id: f.require("id")?.into(),
            generated: f.require("generated")?.into(),
            format: f.parse_value("format")?,
            caption_cosine: f.parse_opt("caption_cosine")?,
            caption_bleu: f.parse_opt("caption_bleu")?,
            answer_cosine: f.parse_value("answer_cosine")?,
            answer_bleu: f.parse_value("answer_bleu")?,
            reward: f.parse_value("reward")?,
        });
    }
    if report.cases.len() != report.n_cases {
        return Err(FormatError::Invalid(format!(
            "summary says {} cases, found {}",
            report.n_cases,
            report.cases.len()
        )));
    }
    Ok(report)
}

pub fn read_eval_report(path: &Path) -> Result<EvalReport, FormatError> {
    parse_eval_report(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_eval_report(r: &EvalReport, path: &Path) -> Result<(), FormatError> {
    write_text(path, &format_eval_report(r))
}

pub fn eval_table(r: &EvalReport) -> String {
    let mut s = format!("split {} ({} cases, {} with findings)\n", r.split, r.n_cases, r.n_caption_cases);
    for (name, value) in diaglab_core::eval::report_metrics(r) {
        let _ = writeln!(s, "  {name:<18} {value:>8.4}");
    }
    s
}

pub fn compare_table(deltas: &[MetricDelta]) -> String {
    let mut s = format!("{:<18} {:>8} {:>8} {:>9}\n", "metric", "a", "b", "b-a");
    for d in deltas {
        let _ = writeln!(s, "{:<18} {:>8.4} {:>8.4} {:>+9.4}", d.name, d.a, d.b, d.delta);
    }
    s
}
