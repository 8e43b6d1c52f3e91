//! Synthetic report corpus with paired ROI feature vectors.
//!
//! Each record samples an organ, a site and a lesion class from
//! [`SYNTHETIC_LESIONS`] / [`SYNTHETIC_SITES`]; findings and diagnosis are
//! fixed templates keyed by lesion class, so the lesion class fully
//! determines the target text. Lesion class is independent of site within an
//! organ: only the classifier label can tell the policy which diagnosis to
//! write.
//!
//! Feature vectors are drawn per ROI from a class-conditional Gaussian. For an
//! organ with `C` classes the mean of class `k` is `separation` on every
//! coordinate `j` with `j % C == k` and 0 elsewhere; noise is isotropic with
//! standard deviation `noise_std`; the whole vector is then divided by `√D`
//! so its squared norm stays O(1) for any `D`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{CorpusError, Organ, ReportRecord};
use crate::math;
use crate::rng::{self, Domain};

pub struct LesionTemplate {
    pub organ: Organ,
    /// Classifier class name; empty for organs without a classifier.
    pub class_name: &'static str,
    pub findings: &'static str,
    pub diagnosis: &'static str,
}

pub const SYNTHETIC_LESIONS: &[LesionTemplate] = &[
    LesionTemplate {
        organ: Organ::Gastric,
        class_name: "non-neoplastic",
        findings: "lamina propria shows lymphocytic infiltrate",
        diagnosis: "chronic gastritis",
    },
    LesionTemplate {
        organ: Organ::Gastric,
        class_name: "low-grade intraepithelial neoplasia",
        findings: "glands show mild atypia",
        diagnosis: "low-grade intraepithelial neoplasia",
    },
    LesionTemplate {
        organ: Organ::Gastric,
        class_name: "adenocarcinoma",
        findings: "irregular glands invade stroma",
        diagnosis: "gastric adenocarcinoma",
    },
    LesionTemplate {
        organ: Organ::Intestinal,
        class_name: "non-neoplastic",
        findings: "crypts appear regular",
        diagnosis: "hyperplastic polyp",
    },
    LesionTemplate {
        organ: Organ::Intestinal,
        class_name: "low-grade intraepithelial neoplasia",
        findings: "crypts show mild atypia",
        diagnosis: "tubular adenoma with low-grade intraepithelial neoplasia",
    },
    LesionTemplate {
        organ: Organ::Intestinal,
        class_name: "carcinoma",
        findings: "atypical glands invade submucosa",
        diagnosis: "colonic adenocarcinoma",
    },
    LesionTemplate {
        organ: Organ::Other,
        class_name: "",
        findings: "squamous epithelium shows basal hyperplasia",
        diagnosis: "reflux esophagitis",
    },
];

/// (organ, sampling weight, sites)
pub const SYNTHETIC_SITES: &[(Organ, f64, &[&str])] = &[
    (Organ::Gastric, 0.45, &["gastric antrum", "gastric body"]),
    (Organ::Intestinal, 0.40, &["sigmoid colon", "rectum"]),
    (Organ::Other, 0.15, &["esophagus"]),
];

/// Classifier class names used by the synthetic corpus for `organ`, in class
/// index order.
pub fn synthetic_class_names(organ: Organ) -> Vec<String> {
    SYNTHETIC_LESIONS
        .iter()
        .filter(|l| l.organ == organ && !l.class_name.is_empty())
        .map(|l| l.class_name.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    /// Fraction of records generated without findings.
    pub captionless_fraction: f64,
    pub feature_dim: usize,
    pub features_per_record: usize,
    pub separation: f64,
    pub noise_std: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            captionless_fraction: 0.35,
            feature_dim: 1536,
            features_per_record: 1,
            separation: 3.0,
            noise_std: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub id: String,
    pub values: Vec<f64>,
}

/// Ground-truth ROI class for one feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiLabel {
    pub feature_id: String,
    pub organ: Organ,
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<ReportRecord>,
    pub features: Vec<FeatureVector>,
    /// Labels for ROIs of organs with a classifier branch.
    pub roi_labels: Vec<RoiLabel>,
}

pub fn generate_synthetic_corpus(
    n: usize,
    seed: u64,
    config: &SyntheticConfig,
) -> Result<SyntheticCorpus, CorpusError> {
    if n < 1 {
        return Err(CorpusError::InvalidCount);
    }
    let mut rng = rng::stream(seed, Domain::Corpus, 0, 0);
    let dim = config.feature_dim;
    let scale = 1.0 / math::sqrt(dim as f64);

    let mut out = SyntheticCorpus {
        records: Vec::with_capacity(n),
        features: Vec::with_capacity(n * config.features_per_record),
        roi_labels: Vec::new(),
    };

    for i in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = SYNTHETIC_SITES.len() - 1;
        for (k, (_, w, _)) in SYNTHETIC_SITES.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = k;
                break;
            }
        }
        let (organ, _, sites) = SYNTHETIC_SITES[pick];
        let site = sites[rng.random_range(0..sites.len())];

        let lesions: Vec<&LesionTemplate> =
            SYNTHETIC_LESIONS.iter().filter(|l| l.organ == organ).collect();
        let class_index = rng.random_range(0..lesions.len());
        let lesion = lesions[class_index];
        let captionless = rng.random::<f64>() < config.captionless_fraction;

        let id = format!("case-{i:05}");
        let mut feature_refs = Vec::with_capacity(config.features_per_record);
        for k in 0..config.features_per_record {
            let fid = format!("{id}-roi{k}");
            let values = (0..dim)
                .map(|j| {
                    let mean = if j % lesions.len() == class_index {
                        config.separation
                    } else {
                        0.0
                    };
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (mean + config.noise_std * z) * scale
                })
                .collect();
            if organ.has_classifier() {
                out.roi_labels.push(RoiLabel {
                    feature_id: fid.clone(),
                    organ,
                    class_name: lesion.class_name.to_string(),
                });
            }
            out.features.push(FeatureVector { id: fid.clone(), values });
            feature_refs.push(fid);
        }

        out.records.push(ReportRecord {
            id,
            site: site.to_string(),
            organ,
            feature_refs,
            findings: (!captionless).then(|| lesion.findings.to_string()),
            diagnosis: lesion.diagnosis.to_string(),
        });
    }
    Ok(out)
}
