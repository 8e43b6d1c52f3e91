//! Report data model, raw-report extraction, and corpus splitting.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::rng::{self, Domain};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("missing required section {0}")]
    MissingSection(&'static str),
    #[error("section {0} appears more than once")]
    DuplicateSection(&'static str),
    #[error("section {0} has an empty body")]
    EmptyBody(&'static str),
    #[error("text before the first section header on line {0}")]
    UnexpectedText(usize),
    #[error("invalid record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("corpus size must be at least 1")]
    InvalidCount,
    #[error("insufficient records: {0}")]
    InsufficientRecords(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Organ {
    Gastric,
    Intestinal,
    Other,
}

impl Organ {
    pub fn as_str(self) -> &'static str {
        match self {
            Organ::Gastric => "gastric",
            Organ::Intestinal => "intestinal",
            Organ::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gastric" => Some(Organ::Gastric),
            "intestinal" => Some(Organ::Intestinal),
            "other" => Some(Organ::Other),
            _ => None,
        }
    }

    /// Whether this organ has a classifier branch.
    pub fn has_classifier(self) -> bool {
        !matches!(self, Organ::Other)
    }
}

/// Site keywords, checked in order against the lower-cased site string.
/// The first table with a matching substring wins; no match means `Other`.
pub const GASTRIC_SITE_KEYWORDS: &[&str] = &[
    "gastric", "stomach", "antrum", "antral", "cardia", "fundus", "pylor", "胃",
];
pub const INTESTINAL_SITE_KEYWORDS: &[&str] = &[
    "colon", "colonic", "rect", "sigmoid", "cecum", "caecum", "ileum", "ileocecal",
    "bowel", "intestin", "duoden", "jejun", "appendix", "肠",
];

pub fn organ_for_site(site: &str) -> Organ {
    let lower = site.to_lowercase();
    if GASTRIC_SITE_KEYWORDS.iter().any(|k| lower.contains(k)) {
        Organ::Gastric
    } else if INTESTINAL_SITE_KEYWORDS.iter().any(|k| lower.contains(k)) {
        Organ::Intestinal
    } else {
        Organ::Other
    }
}

/// One pathology case.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRecord {
    pub id: String,
    pub site: String,
    pub organ: Organ,
    /// Identifiers into a feature file; possibly empty.
    pub feature_refs: Vec<String>,
    /// Microscopic findings. Absent for conclusion-only reports.
    pub findings: Option<String>,
    pub diagnosis: String,
}

impl ReportRecord {
    pub fn has_findings(&self) -> bool {
        self.findings.is_some()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |reason: &str| CorpusError::InvalidRecord {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if !is_valid_identifier(&self.id) {
            return Err(bad("id must be non-empty and free of whitespace and commas"));
        }
        if self.site.trim().is_empty() {
            return Err(bad("site is empty"));
        }
        if self.diagnosis.trim().is_empty() {
            return Err(bad("diagnosis is empty"));
        }
        if let Some(f) = &self.findings {
            if f.trim().is_empty() {
                return Err(bad("findings present but empty"));
            }
        }
        if let Some(r) = self.feature_refs.iter().find(|r| !is_valid_identifier(r)) {
            return Err(bad(&format!("invalid feature ref {r:?}")));
        }
        Ok(())
    }
}

/// Identifiers (record ids, feature ids) are non-empty and contain no
/// whitespace or commas so they can be listed in the line formats.
pub fn is_valid_identifier(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c == ',' || c == '=')
}

/// Checks every record and that ids are unique.
pub fn validate_corpus(records: &[ReportRecord]) -> Result<(), CorpusError> {
    let mut seen = BTreeSet::new();
    for r in records {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(CorpusError::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}

const SITE: &str = "SITE:";
const FINDINGS: &str = "FINDINGS:";
const DIAGNOSIS: &str = "DIAGNOSIS:";

/// Parses a raw report into a record.
///
/// The raw schema has up to three sections. A section starts on a line that
/// begins with `SITE:`, `FINDINGS:` or `DIAGNOSIS:`; its body is the rest of
/// that line plus every following line up to the next header, trimmed.
/// `SITE:` and `DIAGNOSIS:` are required, `FINDINGS:` is optional, and order
/// is free. Blank lines before the first header are ignored.
pub fn parse_raw_report(id: &str, raw: &str) -> Result<ReportRecord, CorpusError> {
    let mut sections: [Option<String>; 3] = [None, None, None];
    let names = [SITE, FINDINGS, DIAGNOSIS];
    let mut current: Option<usize> = None;

    for (lineno, line) in raw.lines().enumerate() {
        let header = names.iter().position(|h| line.starts_with(h));
        match header {
            Some(k) => {
                if sections[k].is_some() {
                    return Err(CorpusError::DuplicateSection(names[k]));
                }
                sections[k] = Some(line[names[k].len()..].to_string());
                current = Some(k);
            }
            None => match current {
                Some(k) => {
                    let body = sections[k].as_mut().expect("open section");
                    body.push('\n');
                    body.push_str(line);
                }
                None if line.trim().is_empty() => {}
                None => return Err(CorpusError::UnexpectedText(lineno + 1)),
            },
        }
    }

    let [site, findings, diagnosis] = sections;
    let site = site.ok_or(CorpusError::MissingSection(SITE))?;
    let diagnosis = diagnosis.ok_or(CorpusError::MissingSection(DIAGNOSIS))?;
    let trimmed = |body: String, name: &'static str| {
        let t = body.trim();
        if t.is_empty() {
            Err(CorpusError::EmptyBody(name))
        } else {
            Ok(t.to_string())
        }
    };
    let site = trimmed(site, SITE)?;
    let findings = findings.map(|f| trimmed(f, FINDINGS)).transpose()?;
    let diagnosis = trimmed(diagnosis, DIAGNOSIS)?;

    let record = ReportRecord {
        id: id.to_string(),
        organ: organ_for_site(&site),
        site,
        feature_refs: Vec::new(),
        findings,
        diagnosis,
    };
    record.validate()?;
    Ok(record)
}

/// Inverse of [`parse_raw_report`] for records whose organ matches the site
/// keyword table and whose feature list is empty.
pub fn render_raw_report(record: &ReportRecord) -> String {
    let mut out = format!("{SITE} {}\n", record.site);
    if let Some(f) = &record.findings {
        out.push_str(&format!("{FINDINGS} {f}\n"));
    }
    out.push_str(&format!("{DIAGNOSIS} {}", record.diagnosis));
    out
}

/// Record ids assigned to each stage.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusSplit {
    pub sft: Vec<String>,
    pub grpo: Vec<String>,
    pub test: Vec<String>,
}

impl CorpusSplit {
    pub fn get(&self, name: &str) -> Option<&[String]> {
        match name {
            "sft" => Some(&self.sft),
            "grpo" => Some(&self.grpo),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    /// Checks the partition invariants against `records`.
    pub fn validate(&self, records: &[ReportRecord]) -> Result<(), CorpusError> {
        let mut seen = BTreeSet::new();
        for id in self.sft.iter().chain(&self.grpo).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(CorpusError::DuplicateId(id.clone()));
            }
        }
        let all: BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
        if seen != all {
            return Err(CorpusError::InsufficientRecords(
                "split does not cover the corpus exactly".into(),
            ));
        }
        for id in &self.sft {
            let r = records.iter().find(|r| &r.id == id).expect("covered");
            if !r.has_findings() {
                return Err(CorpusError::InvalidRecord {
                    id: id.clone(),
                    reason: "sft record lacks findings".into(),
                });
            }
        }
        Ok(())
    }
}

/// Splits a corpus into SFT, GRPO and test sets.
///
/// Records are shuffled by `seed`. SFT takes the first `sft_n`
/// findings-present records, test takes the next `test_n` findings-present
/// records (topping up with conclusion-only records if needed), and GRPO
/// gets everything else. Each list keeps corpus order.
pub fn split_corpus(
    records: &[ReportRecord],
    sft_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    let with_findings = records.iter().filter(|r| r.has_findings()).count();
    if with_findings < sft_n {
        return Err(CorpusError::InsufficientRecords(format!(
            "{sft_n} sft records requested, {with_findings} have findings"
        )));
    }
    if records.len() < sft_n + test_n {
        return Err(CorpusError::InsufficientRecords(format!(
            "{} records requested, corpus has {}",
            sft_n + test_n,
            records.len()
        )));
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng::stream(seed, Domain::Split, 0, 0));

    // 0 = grpo, 1 = sft, 2 = test
    let mut stage = alloc::vec![0u8; records.len()];
    let mut sft_left = sft_n;
    let mut test_left = test_n;
    for &i in &order {
        if !records[i].has_findings() {
            continue;
        }
        if sft_left > 0 {
            stage[i] = 1;
            sft_left -= 1;
        } else if test_left > 0 {
            stage[i] = 2;
            test_left -= 1;
        }
    }
    for &i in &order {
        if test_left == 0 {
            break;
        }
        if stage[i] == 0 && !records[i].has_findings() {
            stage[i] = 2;
            test_left -= 1;
        }
    }

    let mut split = CorpusSplit::default();
    for (r, s) in records.iter().zip(&stage) {
        let id = r.id.clone();
        match s {
            1 => split.sft.push(id),
            2 => split.test.push(id),
            _ => split.grpo.push(id),
        }
    }
    Ok(split)
}
