//! ROI classifier heads and classifier-driven prompt augmentation.
//!
//! Each organ with a classifier branch (gastric, intestinal) gets its own
//! linear head over frozen feature vectors. At prompt-building time the head
//! for the record's organ yields a top-1 label and confidence, which are
//! written into the query prompt next to the anatomical site. Records from
//! other organs get the site alone.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{Organ, ReportRecord};
use crate::math;

pub const DEFAULT_FEATURE_DIM: usize = 1536;

/// Default gastric ROI taxonomy (11 classes).
pub const GASTRIC_CLASSES: &[&str] = &[
    "non-neoplastic",
    "low-grade intraepithelial neoplasia",
    "high-grade intraepithelial neoplasia",
    "well-differentiated adenocarcinoma",
    "moderately differentiated adenocarcinoma",
    "poorly differentiated adenocarcinoma",
    "signet-ring cell carcinoma",
    "mucinous carcinoma",
    "other poorly cohesive carcinoma",
    "papillary adenocarcinoma",
    "atypical hyperplasia",
];

/// Default intestinal ROI taxonomy (4 classes).
pub const INTESTINAL_CLASSES: &[&str] = &[
    "carcinoma",
    "high-grade intraepithelial neoplasia",
    "low-grade intraepithelial neoplasia",
    "non-neoplastic",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training data contains fewer than two classes")]
    SingleClass,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("organ {0} has no classifier branch")]
    NoClassifier(&'static str),
    #[error("record {0} needs a classifier prediction")]
    MissingPrediction(String),
    #[error("record {0} is from an organ without a classifier; prediction not allowed")]
    UnexpectedPrediction(String),
    #[error("invalid head: {0}")]
    InvalidHead(String),
}

/// Linear classification head: `logits = Wᵀ x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub organ: Organ,
    pub dim: usize,
    /// Row-major `dim × classes`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub class_names: Vec<String>,
}

impl ClassifierHead {
    pub fn zeros(organ: Organ, dim: usize, class_names: Vec<String>) -> Result<Self, AugmentError> {
        if !organ.has_classifier() {
            return Err(AugmentError::NoClassifier(organ.as_str()));
        }
        let c = class_names.len();
        let head = Self { organ, dim, weights: vec![0.0; dim * c], bias: vec![0.0; c], class_names };
        head.validate()?;
        Ok(head)
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let c = self.classes();
        if c < 2 {
            return Err(AugmentError::InvalidHead("need at least two classes".into()));
        }
        if self.dim == 0 {
            return Err(AugmentError::InvalidHead("feature dimension is zero".into()));
        }
        if self.weights.len() != self.dim * c || self.bias.len() != c {
            return Err(AugmentError::InvalidHead(format!(
                "expected {}x{} weights and {} biases, got {} and {}",
                self.dim,
                c,
                c,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(AugmentError::InvalidHead("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn logits(&self, feature: &[f64]) -> Result<Vec<f64>, AugmentError> {
        if feature.len() != self.dim {
            return Err(AugmentError::DimensionMismatch { expected: self.dim, got: feature.len() });
        }
        let c = self.classes();
        let mut out = self.bias.clone();
        for (x, row) in feature.iter().zip(self.weights.chunks_exact(c)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += x * w;
            }
        }
        Ok(out)
    }

    /// Softmax class probabilities.
    pub fn probabilities(&self, feature: &[f64]) -> Result<Vec<f64>, AugmentError> {
        let mut p = self.logits(feature)?;
        math::softmax_in_place(&mut p);
        Ok(p)
    }
}

/// Top-1 classifier output.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiPrediction {
    pub label: String,
    pub confidence: f64,
}

/// Returns the argmax class (lowest index on ties) and its probability.
pub fn predict_roi(head: &ClassifierHead, feature: &[f64]) -> Result<RoiPrediction, AugmentError> {
    let p = head.probabilities(feature)?;
    let k = math::argmax(&p);
    Ok(RoiPrediction { label: head.class_names[k].clone(), confidence: p[k] })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { lr: 0.5, epochs: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    pub head: ClassifierHead,
    pub train_accuracy: f64,
    /// Mean cross-entropy before each epoch's update, then after the last.
    pub loss_history: Vec<f64>,
}

/// Fits a head by full-batch gradient descent on mean multinomial logistic
/// loss, starting from zero weights.
pub fn train_head(
    samples: &[(Vec<f64>, usize)],
    organ: Organ,
    class_names: Vec<String>,
    config: &HeadConfig,
) -> Result<TrainedHead, AugmentError> {
    let dim = samples.first().map(|(x, _)| x.len()).unwrap_or(0);
    let mut head = ClassifierHead::zeros(organ, dim.max(1), class_names)?;
    let c = head.classes();
    for (x, y) in samples {
        if x.len() != dim {
            return Err(AugmentError::DimensionMismatch { expected: dim, got: x.len() });
        }
        if *y >= c {
            return Err(AugmentError::LabelOutOfRange { label: *y, classes: c });
        }
    }
    let mut present = vec![false; c];
    for (_, y) in samples {
        present[*y] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(AugmentError::SingleClass);
    }

    let n = samples.len() as f64;
    let mut loss_history = Vec::with_capacity(config.epochs + 1);
    let mut grad_w = vec![0.0; dim * c];
    let mut grad_b = vec![0.0; c];
    for _ in 0..config.epochs {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        grad_b.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (x, y) in samples {
            let mut p = head.logits(x)?;
            loss -= p[*y] - math::log_sum_exp(&p);
            math::softmax_in_place(&mut p);
            p[*y] -= 1.0;
            for (xi, grow) in x.iter().zip(grad_w.chunks_exact_mut(c)) {
                for (g, d) in grow.iter_mut().zip(&p) {
                    *g += xi * d;
                }
            }
            for (g, d) in grad_b.iter_mut().zip(&p) {
                *g += d;
            }
        }
        loss_history.push(loss / n);
        let step = config.lr / n;
        for (w, g) in head.weights.iter_mut().zip(&grad_w) {
            *w -= step * g;
        }
        for (b, g) in head.bias.iter_mut().zip(&grad_b) {
            *b -= step * g;
        }
    }

    let mut correct = 0usize;
    let mut loss = 0.0;
    for (x, y) in samples {
        let logits = head.logits(x)?;
        loss -= logits[*y] - math::log_sum_exp(&logits);
        if math::argmax(&logits) == *y {
            correct += 1;
        }
    }
    loss_history.push(loss / n);
    Ok(TrainedHead { head, train_accuracy: correct as f64 / n, loss_history })
}

/// Prompt text around the site and classifier output.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub base_request: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            base_request: "Describe the microscopic findings and give the pathological diagnosis."
                .to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPrompt {
    pub text: String,
    pub site: String,
    /// Classifier label and confidence, present together or not at all.
    pub aux: Option<RoiPrediction>,
}

impl AugmentedPrompt {
    pub fn aux_label(&self) -> Option<&str> {
        self.aux.as_ref().map(|p| p.label.as_str())
    }

    pub fn aux_confidence(&self) -> Option<f64> {
        self.aux.as_ref().map(|p| p.confidence)
    }
}

/// Builds the query prompt for `record`.
///
/// Gastric and intestinal records must come with a prediction; other organs
/// must not.
pub fn build_prompt(
    record: &ReportRecord,
    prediction: Option<RoiPrediction>,
    template: &PromptTemplate,
) -> Result<AugmentedPrompt, AugmentError> {
    match (record.organ.has_classifier(), &prediction) {
        (true, None) => return Err(AugmentError::MissingPrediction(record.id.clone())),
        (false, Some(_)) => return Err(AugmentError::UnexpectedPrediction(record.id.clone())),
        _ => {}
    }
    if let Some(p) = &prediction {
        if !(0.0..=1.0).contains(&p.confidence) {
            return Err(AugmentError::InvalidHead(format!("confidence {} outside [0,1]", p.confidence)));
        }
    }
    Ok(render_prompt(&record.site, prediction, template))
}

/// Site-only prompt for any organ (the configuration without classifier
/// augmentation).
pub fn build_site_prompt(record: &ReportRecord, template: &PromptTemplate) -> AugmentedPrompt {
    render_prompt(&record.site, None, template)
}

fn render_prompt(site: &str, aux: Option<RoiPrediction>, template: &PromptTemplate) -> AugmentedPrompt {
    let text = match &aux {
        Some(p) => format!(
            "Site: {site}. Classifier: {} (confidence {:.2}). {}",
            p.label, p.confidence, template.base_request
        ),
        None => format!("Site: {site}. {}", template.base_request),
    };
    AugmentedPrompt { text, site: site.to_string(), aux }
}
