//! Corpus, feature, ROI-label, split and prompt files.
//!
//! Corpus line keys, in write order: `id`, `site`, `organ`, `features`
//! (comma-separated feature ids, possibly empty), `findings` (omitted when
//! absent), `diagnosis`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use diaglab_core::augment::{AugmentedPrompt, RoiPrediction};
use diaglab_core::corpus::{Organ, ReportRecord};
use diaglab_core::synth::{FeatureVector, RoiLabel};
use diaglab_core::CorpusSplit;

use crate::codec::{content_lines, join_floats, parse_floats, Fields, LineWriter};
use crate::error::{read_text, write_text, FormatError};

const CORPUS_KEYS: &[&str] = &["id", "site", "organ", "features", "findings", "diagnosis"];

pub fn format_record(r: &ReportRecord) -> String {
    LineWriter::new()
        .field("id", &r.id)
        .field("site", &r.site)
        .field("organ", r.organ.as_str())
        .field("features", r.feature_refs.join(","))
        .opt_field("findings", r.findings.as_deref())
        .field("diagnosis", &r.diagnosis)
        .finish()
}

fn parse_record(f: &Fields) -> Result<ReportRecord, FormatError> {
    f.only(CORPUS_KEYS)?;
    let organ_raw = f.require("organ")?;
    let organ = Organ::parse(organ_raw).ok_or_else(|| f.malformed(format!("unknown organ {organ_raw:?}")))?;
    let features = f.require("features")?;
    let record = ReportRecord {
        id: f.require("id")?.into(),
        site: f.require("site")?.into(),
        organ,
        feature_refs: if features.is_empty() { Vec::new() } else { features.split(',').map(String::from).collect() },
        findings: f.get("findings").map(String::from),
        diagnosis: f.require("diagnosis")?.into(),
    };
    record.validate().map_err(|e| f.malformed(e.to_string()))?;
    Ok(record)
}

pub fn format_corpus(records: &[ReportRecord]) -> String {
    records.iter().map(format_record).collect()
}

pub fn parse_corpus(text: &str) -> Result<Vec<ReportRecord>, FormatError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        let record = parse_record(&Fields::parse(n, line)?)?;
        if !seen.insert(record.id.clone()) {
            return Err(FormatError::DuplicateId(record.id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<ReportRecord>, FormatError> {
    parse_corpus(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_corpus(records: &[ReportRecord], path: &Path) -> Result<(), FormatError> {
    write_text(path, &format_corpus(records))
}

/// Feature file: one line per vector, the id followed by its values, space
/// separated. Every line must have the same dimension.
pub fn format_features(features: &[FeatureVector]) -> String {
    features.iter().map(|f| format!("{} {}\n", f.id, join_floats(&f.values))).collect()
}

pub fn parse_features(text: &str) -> Result<Vec<FeatureVector>, FormatError> {
    let mut out: Vec<FeatureVector> = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in content_lines(text) {
        let (id, rest) = line.split_once(' ').unwrap_or((line, ""));
        let values = parse_floats(n, rest)?;
        if values.is_empty() {
            return Err(FormatError::MalformedLine { line: n, reason: "feature vector has no values".into() });
        }
        if let Some(first) = out.first() {
            if first.values.len() != values.len() {
                return Err(FormatError::MalformedLine {
                    line: n,
                    reason: format!("dimension {} differs from {}", values.len(), first.values.len()),
                });
            }
        }
        if !seen.insert(id.to_string()) {
            return Err(FormatError::DuplicateId(id.into()));
        }
        out.push(FeatureVector { id: id.into(), values });
    }
    Ok(out)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureVector>, FormatError> {
    parse_features(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_features(features: &[FeatureVector], path: &Path) -> Result<(), FormatError> {
    write_text(path, &format_features(features))
}

pub fn feature_map(features: Vec<FeatureVector>) -> BTreeMap<String, Vec<f64>> {
    features.into_iter().map(|f| (f.id, f.values)).collect()
}

/// ROI label file: `feature`, `organ`, `class` per line.
pub fn format_labels(labels: &[RoiLabel]) -> String {
    labels
        .iter()
        .map(|l| {
            LineWriter::new()
                .field("feature", &l.feature_id)
                .field("organ", l.organ.as_str())
                .field("class", &l.class_name)
                .finish()
        })
        .collect()
}

pub fn parse_labels(text: &str) -> Result<Vec<RoiLabel>, FormatError> {
    content_lines(text)
        .map(|(n, line)| {
            let f = Fields::parse(n, line)?;
            f.only(&["feature", "organ", "class"])?;
            let organ_raw = f.require("organ")?;
            Ok(RoiLabel {
                feature_id: f.require("feature")?.into(),
                organ: Organ::parse(organ_raw).ok_or_else(|| f.malformed(format!("unknown organ {organ_raw:?}")))?,
                class_name: f.require("class")?.into(),
            })
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<RoiLabel>, FormatError> {
    parse_labels(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_labels(labels: &[RoiLabel], path: &Path) -> Result<(), FormatError> {
    write_text(path, &format_labels(labels))
}

/// Split file: `<split>\t<id>` per line, split one of sft, grpo, test.
pub fn format_split(split: &CorpusSplit) -> String {
    let mut s = String::new();
    for (name, ids) in [("sft", &split.sft), ("grpo", &split.grpo), ("test", &split.test)] {
        for id in ids {
            s.push_str(name);
            s.push('\t');
            s.push_str(id);
            s.push('\n');
        }
    }
    s
}

pub fn parse_split(text: &str) -> Result<CorpusSplit, FormatError> {
    let mut split = CorpusSplit::default();
    let mut seen = BTreeSet::new();
    for (n, line) in content_lines(text) {
        let (name, id) = line
            .split_once('\t')
            .ok_or_else(|| FormatError::MalformedLine { line: n, reason: "expected <split>\\t<id>".into() })?;
        let list = match name {
            "sft" => &mut split.sft,
            "grpo" => &mut split.grpo,
            "test" => &mut split.test,
            other => {
                return Err(FormatError::MalformedLine { line: n, reason: format!("unknown split {other:?}") })
            }
        };
        if !seen.insert(id.to_string()) {
            return Err(FormatError::DuplicateId(id.into()));
        }
        list.push(id.into());
    }
    Ok(split)
}

pub fn read_split(path: &Path) -> Result<CorpusSplit, FormatError> {
    parse_split(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_split(split: &CorpusSplit, path: &Path) -> Result<(), FormatError> {
    write_text(path, &format_split(split))
}

/// Prompt file: `id`, `site`, optional `label` and `confidence`, `text`.
pub fn format_prompts<'a>(prompts: impl IntoIterator<Item = (&'a str, &'a AugmentedPrompt)>) -> String {
    prompts
        .into_iter()
        .map(|(id, p)| {
            LineWriter::new()
                .field("id", id)
                .field("site", &p.site)
                .opt_field("label", p.aux_label())
                .opt_field("confidence", p.aux_confidence())
                .field("text", &p.text)
                .finish()
        })
        .collect()
}

pub fn parse_prompts(text: &str) -> Result<BTreeMap<String, AugmentedPrompt>, FormatError> {
    let mut out = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let f = Fields::parse(n, line)?;
        f.only(&["id", "site", "label", "confidence", "text"])?;
        let aux = match (f.get("label"), f.parse_opt::<f64>("confidence")?) {
            (Some(label), Some(confidence)) => Some(RoiPrediction { label: label.into(), confidence }),
            (None, None) => None,
            _ => return Err(f.malformed("label and confidence must appear together")),
        };
        let prompt = AugmentedPrompt { text: f.require("text")?.into(), site: f.require("site")?.into(), aux };
        let id = f.require("id")?.to_string();
        if out.insert(id.clone(), prompt).is_some() {
            return Err(FormatError::DuplicateId(id));
        }
    }
    Ok(out)
}

pub fn read_prompts(path: &Path) -> Result<BTreeMap<String, AugmentedPrompt>, FormatError> {
    parse_prompts(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_prompts(prompts: &BTreeMap<String, AugmentedPrompt>, path: &Path) -> Result<(), FormatError> {
    write_text(path, &format_prompts(prompts.iter().map(|(k, v)| (k.as_str(), v))))
}
