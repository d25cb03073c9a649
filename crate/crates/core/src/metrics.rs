//! Dice similarity coefficient and the per-method summary statistics used to
//! compare individual models against the fused outputs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::codec::{read_masks, read_scores, SubjectRecord};
use crate::error::{Error, Result};
use crate::fusion::{binarize, fuse_volumes, FusionConfig, FusionMethod, Threshold};
use crate::grid::{
    count_foreground, ensure_same_shape, overlap_count, BinaryMask, MaskSet, ScoreMap, Volume,
};

/// `2|A ∩ B| / (|A| + |B|)`. Two empty sets agree perfectly and score 1.
pub fn dsc<M: MaskSet + ?Sized>(gs: &M, seg: &M) -> Result<f64> {
    let overlap = overlap_count(gs, seg)?;
    Ok(dice_from_counts(overlap, count_foreground(gs), count_foreground(seg)))
}

fn dice_from_counts(overlap: u64, gs: u64, seg: u64) -> f64 {
    let total = gs + seg;
    if total == 0 {
        1.0
    } else {
        (2 * overlap) as f64 / total as f64
    }
}

/// How slice-wise counts are aggregated into one subject score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DscMode {
    /// Pool counts over the whole volume, then apply the Dice formula once.
    #[default]
    Volume,
    /// Average per-slice Dice, skipping slices where both masks are empty.
    PerSliceMean,
}

impl FromStr for DscMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volume" => Ok(DscMode::Volume),
            "per-slice-mean" | "per_slice_mean" => Ok(DscMode::PerSliceMean),
            other => Err(Error::invalid(
                "dsc mode",
                format!("{other:?} (expected volume or per-slice-mean)"),
            )),
        }
    }
}

pub fn dsc_mode(gs: &Volume<BinaryMask>, seg: &Volume<BinaryMask>, mode: DscMode) -> Result<f64> {
    match mode {
        DscMode::Volume => dsc(gs, seg),
        DscMode::PerSliceMean => {
            ensure_same_shape(gs.shape(), seg.shape())?;
            let mut sum = 0.0;
            let mut counted = 0usize;
            for (a, b) in gs.slices().iter().zip(seg.slices()) {
                let (ca, cb) = (count_foreground(a), count_foreground(b));
                if ca + cb == 0 {
                    continue;
                }
                sum += dice_from_counts(overlap_count(a, b)?, ca, cb);
                counted += 1;
            }
            // Every slice empty in both: the volumes agree everywhere.
            Ok(if counted == 0 { 1.0 } else { sum / counted as f64 })
        }
    }
}

/// The six statistics reported for each method across subjects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    pub max: f64,
    pub q75: f64,
    pub median: f64,
    pub q25: f64,
    pub min: f64,
}

impl SummaryStats {
    pub fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("mean", self.mean),
            ("max", self.max),
            ("q75", self.q75),
            ("median", self.median),
            ("q25", self.q25),
            ("min", self.min),
        ]
    }
}

/// Quantile of sorted data by linear interpolation at rank `(n - 1) * p`.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = (sorted.len() - 1) as f64 * p;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    // Clamp guards against rounding pushing the result outside [lo, hi].
    (sorted[lo] + (sorted[hi] - sorted[lo]) * frac).clamp(sorted[lo], sorted[hi])
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::Empty("no values to summarize"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("statistics input", "NaN value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (min, max) = (sorted[0], sorted[n - 1]);
    // Summing in sorted order keeps the mean independent of input order.
    let mean = (sorted.iter().sum::<f64>() / n as f64).clamp(min, max);
    Ok(SummaryStats {
        mean,
        max,
        q75: quantile_sorted(&sorted, 0.75),
        median: quantile_sorted(&sorted, 0.5),
        q25: quantile_sorted(&sorted, 0.25),
        min,
    })
}

/// DSC for each method on one subject, in evaluation order.
#[derive(Debug, Clone, PartialEq)]
pub struct DscReport {
    pub subject_id: String,
    pub per_method: Vec<(String, f64)>,
}

impl DscReport {
    pub fn get(&self, method: &str) -> Option<f64> {
        self.per_method
            .iter()
            .find(|(m, _)| m == method)
            .map(|(_, v)| *v)
    }

    pub fn methods(&self) -> impl Iterator<Item = &str> + '_ {
        self.per_method.iter().map(|(m, _)| m.as_str())
    }
}

/// Method label of the `index`-th (zero-based) individual model.
pub fn model_label(index: usize) -> String {
    format!("model{}", index + 1)
}

/// A subject with every volume loaded and shape-checked.
#[derive(Debug, Clone)]
pub struct LoadedSubject {
    pub subject_id: String,
    pub gt: Volume<BinaryMask>,
    pub models: Vec<Volume<ScoreMap>>,
}

impl LoadedSubject {
    pub fn new(
        subject_id: impl Into<String>,
        gt: Volume<BinaryMask>,
        models: Vec<Volume<ScoreMap>>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if models.is_empty() {
            return Err(Error::Empty("subject has no model outputs").in_subject(&subject_id));
        }
        for m in &models {
            ensure_same_shape(gt.shape(), m.shape()).map_err(|e| e.in_subject(&subject_id))?;
        }
        Ok(LoadedSubject {
            subject_id,
            gt,
            models,
        })
    }

    pub fn load(record: &SubjectRecord) -> Result<Self> {
        let id = &record.subject_id;
        let gt = read_masks(&record.gt_path).map_err(|e| e.in_subject(id))?;
        let models = record
            .model_paths
            .iter()
            .map(|p| {
                let v = read_scores(p)?;
                ensure_same_shape(gt.shape(), v.shape()).map_err(|e| e.in_file(p))?;
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_subject(id))?;
        Self::new(id.clone(), gt, models)
    }
}

/// Scores every individual model (binarized at the threshold), then MSM and
/// MBM, against the subject's ground truth.
pub fn evaluate_subject(subject: &LoadedSubject, threshold: Threshold, mode: DscMode) -> Result<DscReport> {
    let mut per_method = Vec::with_capacity(subject.models.len() + 2);
    for (i, model) in subject.models.iter().enumerate() {
        let seg = model.map(|s| binarize(s, threshold));
        per_method.push((model_label(i), dsc_mode(&subject.gt, &seg, mode)?));
    }
    for method in [FusionMethod::Msm, FusionMethod::Mbm] {
        let fused = fuse_volumes(&subject.models, FusionConfig::new(method, threshold))?;
        per_method.push((method.name().to_string(), dsc_mode(&subject.gt, &fused, mode)?));
    }
    Ok(DscReport {
        subject_id: subject.subject_id.clone(),
        per_method,
    })
}

/// Per-subject reports plus per-method statistics across subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub reports: Vec<DscReport>,
    pub stats: Vec<(String, SummaryStats)>,
}

impl Evaluation {
    pub fn stats_for(&self, method: &str) -> Option<&SummaryStats> {
        self.stats.iter().find(|(m, _)| m == method).map(|(_, s)| s)
    }
}

pub fn summarize_reports(reports: &[DscReport]) -> Result<Vec<(String, SummaryStats)>> {
    let Some(first) = reports.first() else {
        return Ok(Vec::new());
    };
    first
        .methods()
        .map(|method| {
            let values = reports
                .iter()
                .map(|r| {
                    r.get(method).ok_or_else(|| {
                        Error::invalid(
                            "report set",
                            format!("subject {} lacks method {method}", r.subject_id),
                        )
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((method.to_string(), summary_stats(&values)?))
        })
        .collect()
}

/// Loads and evaluates every subject. Subjects are processed in parallel on
/// the current rayon pool; reports come back in record order.
///
/// Records must all carry the same number of models so the method columns line
/// up.
pub fn evaluate_subjects(records: &[SubjectRecord], threshold: Threshold, mode: DscMode) -> Result<Evaluation> {
    if records.is_empty() {
        return Err(Error::Empty("no subjects"));
    }
    let n_models = records[0].model_paths.len();
    if let Some(r) = records.iter().find(|r| r.model_paths.len() != n_models) {
        return Err(Error::invalid(
            "manifest",
            format!(
                "{} models, but {} has {}",
                n_models,
                r.subject_id,
                r.model_paths.len()
            ),
        )
        .in_subject(&r.subject_id));
    }
    let reports = records
        .par_iter()
        .map(|r| {
            let subject = LoadedSubject::load(r)?;
            evaluate_subject(&subject, threshold, mode).map_err(|e| e.in_subject(&r.subject_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = summarize_reports(&reports)?;
    Ok(Evaluation { reports, stats })
}

impl fmt::Display for SummaryStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, v) in self.rows() {
            writeln!(f, "{name:<7}{v:.4}")?;
        }
        Ok(())
    }
}
