//! Landmark error metrics.
//!
//! NME values are scaled by 100: an NME of 10 means the mean point error is
//! a tenth of the normalization factor. Values above 100 are legal.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, PredictionSet};
use crate::error::{Error, Result};
use crate::geometry::{
    checked_factor, normalization_factor, BoundingBox, LandmarkSet, NormalizationKind,
    NUM_LANDMARKS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmeRecord {
    pub image_id: String,
    pub nme: f64,
}

/// Cumulative error distribution as an exact step function.
#[derive(Debug, Clone, PartialEq)]
pub struct CedCurve {
    sorted: Vec<f64>,
}

impl CedCurve {
    pub fn sorted_nmes(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of values `<= t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }

    /// Corner points of the step function clipped to `[0, max]`, starting at
    /// `(0, CED(0))` and ending at `(max, CED(max))`.
    pub fn steps(&self, max: f64) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out = vec![(0.0, self.value_at(0.0))];
        let mut count = self.sorted.partition_point(|&v| v <= 0.0);
        while count < self.sorted.len() && self.sorted[count] <= max {
            let t = self.sorted[count];
            let before = count as f64 / n;
            while count < self.sorted.len() && self.sorted[count] == t {
                count += 1;
            }
            out.push((t, before));
            out.push((t, count as f64 / n));
        }
        out.push((max, count as f64 / n));
        out
    }
}

pub fn nme(
    pred: &LandmarkSet,
    gt: &LandmarkSet,
    gt_box: &BoundingBox,
    norm: NormalizationKind,
) -> Result<f64> {
    let factor = checked_factor(normalization_factor(gt, gt_box, norm), norm, "ground truth")?;
    let total: f64 = pred
        .points()
        .iter()
        .zip(gt.points())
        .map(|(p, g)| p.distance(g))
        .sum();
    Ok(100.0 * total / NUM_LANDMARKS as f64 / factor)
}

pub fn ced_curve(nmes: &[f64]) -> Result<CedCurve> {
    if nmes.is_empty() {
        return Err(Error::EmptyInput("CED curve needs at least one NME"));
    }
    if nmes.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN in NME list".to_string()));
    }
    let mut sorted = nmes.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(CedCurve { sorted })
}

/// Area under the CED curve on `[0, threshold]`, normalized to `[0, 100]`.
/// Computed in closed form from the sorted values.
pub fn auc(curve: &CedCurve, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "AUC threshold must be positive, got {threshold}"
        )));
    }
    let area: f64 = curve
        .sorted
        .iter()
        .map(|&v| (threshold - v.min(threshold)).max(0.0))
        .sum();
    Ok(100.0 * area / (curve.len() as f64 * threshold))
}

/// Percentage of values strictly greater than `threshold`.
pub fn failure_rate(nmes: &[f64], threshold: f64) -> Result<f64> {
    if nmes.is_empty() {
        return Err(Error::EmptyInput("failure rate needs at least one NME"));
    }
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "failure threshold must be positive, got {threshold}"
        )));
    }
    let failures = nmes.iter().filter(|&&v| v > threshold).count();
    Ok(100.0 * failures as f64 / nmes.len() as f64)
}

/// Manifest records that have a prediction, in image-id order.
fn covered<'a>(
    manifest: &'a DatasetManifest,
    preds: &'a PredictionSet,
) -> Vec<(&'a crate::dataset::FaceRecord, &'a LandmarkSet)> {
    let mut out: Vec<_> = manifest
        .records()
        .iter()
        .filter_map(|r| preds.get(&r.image_id).map(|p| (r, p)))
        .collect();
    out.sort_by(|a, b| a.0.image_id.cmp(&b.0.image_id));
    out
}

pub fn per_landmark_errors(
    preds: &PredictionSet,
    manifest: &DatasetManifest,
    norm: NormalizationKind,
) -> Result<Vec<f64>> {
    let pairs = covered(manifest, preds);
    if pairs.is_empty() {
        return Err(Error::ZeroCoverage);
    }
    let mut sums = vec![0.0; NUM_LANDMARKS];
    for (record, pred) in &pairs {
        let factor = checked_factor(
            normalization_factor(&record.landmarks, &record.gt_box(), norm),
            norm,
            &record.image_id,
        )?;
        for (s, (p, g)) in sums
            .iter_mut()
            .zip(pred.points().iter().zip(record.landmarks.points()))
        {
            *s += p.distance(g) / factor;
        }
    }
    let n = pairs.len() as f64;
    Ok(sums.into_iter().map(|s| 100.0 * s / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub normalization: NormalizationKind,
    pub fr_threshold: f64,
    pub mean_nme: f64,
    /// Percent of covered images with NME above `fr_threshold`.
    pub fr: f64,
    /// CED area up to `fr_threshold`, out of 100.
    pub auc: f64,
    pub per_landmark: Vec<f64>,
    /// Fraction of manifest images that have a prediction.
    pub coverage: f64,
    pub dataset_size: usize,
    pub per_image: Vec<NmeRecord>,
}

impl MetricReport {
    pub fn nmes(&self) -> Vec<f64> {
        self.per_image.iter().map(|r| r.nme).collect()
    }

    /// CSV with columns `kind,key,value`: one `image` row per evaluated
    /// image followed by `aggregate` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["kind", "key", "value"])?;
        for r in &self.per_image {
            csv.write_record(["image", r.image_id.as_str(), &r.nme.to_string()])?;
        }
        let t = self.fr_threshold;
        let aggregates = [
            (
                "normalization".to_string(),
                self.normalization.label().to_string(),
            ),
            ("threshold".to_string(), t.to_string()),
            ("mean_nme".to_string(), self.mean_nme.to_string()),
            (format!("fr@{t}"), self.fr.to_string()),
            (format!("auc@{t}"), self.auc.to_string()),
            ("coverage".to_string(), self.coverage.to_string()),
            ("dataset_size".to_string(), self.dataset_size.to_string()),
        ];
        for (k, v) in &aggregates {
            csv.write_record(["aggregate", k.as_str(), v.as_str()])?;
        }
        for (i, e) in self.per_landmark.iter().enumerate() {
            csv.write_record(["landmark", &(i + 1).to_string(), &e.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn evaluate(
    manifest: &DatasetManifest,
    preds: &PredictionSet,
    norm: NormalizationKind,
    fr_threshold: f64,
) -> Result<MetricReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no records"));
    }
    let pairs = covered(manifest, preds);
    if pairs.is_empty() {
        return Err(Error::ZeroCoverage);
    }
    let per_image = pairs
        .iter()
        .map(|(record, pred)| {
            nme(pred, &record.landmarks, &record.gt_box(), norm)
                .map(|nme| NmeRecord {
                    image_id: record.image_id.clone(),
                    nme,
                })
                .map_err(|e| match e {
                    Error::DegenerateNormalization { what, .. } => Error::DegenerateNormalization {
                        what,
                        context: record.image_id.clone(),
                    },
                    other => other,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let nmes: Vec<f64> = per_image.iter().map(|r| r.nme).collect();
    let curve = ced_curve(&nmes)?;
    let mean_nme = curve.sorted.iter().sum::<f64>() / nmes.len() as f64;
    Ok(MetricReport {
        dataset: manifest.name.clone(),
        normalization: norm,
        fr_threshold,
        mean_nme,
        fr: failure_rate(&nmes, fr_threshold)?,
        auc: auc(&curve, fr_threshold)?,
        per_landmark: per_landmark_errors(preds, manifest, norm)?,
        coverage: pairs.len() as f64 / manifest.len() as f64,
        dataset_size: manifest.len(),
        per_image,
    })
}
