//! Markdown / CSV metric tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::detection::DetectionReport;
use crate::error::{Error, Result};
use crate::geometry::NormalizationKind;
use crate::metrics::MetricReport;

pub const FOOTNOTE: &str = "FR and AUC out of 100; lower FR / higher AUC better";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub split: String,
    pub normalization: NormalizationKind,
    pub nme: f64,
    pub fr: f64,
    pub auc: f64,
    pub coverage: f64,
}

impl ReportRow {
    pub fn from_metrics(
        model: impl Into<String>,
        split: impl Into<String>,
        m: &MetricReport,
    ) -> Self {
        Self {
            model: model.into(),
            split: split.into(),
            normalization: m.normalization,
            nme: m.mean_nme,
            fr: m.fr,
            auc: m.auc,
            coverage: m.coverage,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportDoc {
    /// Threshold used for FR and AUC, shown in the column headers.
    pub threshold: f64,
    pub rows: Vec<ReportRow>,
}

impl ReportDoc {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            rows: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::EmptyInput("report has no rows"));
        }
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            if !seen.insert((r.model.as_str(), r.split.as_str(), r.normalization.label())) {
                return Err(Error::DuplicateId(format!(
                    "{}/{}/{}",
                    r.model,
                    r.split,
                    r.normalization.label()
                )));
            }
        }
        Ok(())
    }
}

fn threshold_label(t: f64) -> String {
    format!("{t}")
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().from_writer(buf)
}

fn into_string(buf: Vec<u8>) -> String {
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn emit_report(doc: &ReportDoc, format: ReportFormat) -> Result<String> {
    doc.validate()?;
    let t = threshold_label(doc.threshold);
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "| model | split | normalization | NME | FR@{t} | AUC@{t} | coverage |"
            );
            let _ = writeln!(out, "|---|---|---|---:|---:|---:|---:|");
            for r in &doc.rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.2} | {:.2} | {:.2} | {:.2} |",
                    r.model.replace('|', "\\|"),
                    r.split.replace('|', "\\|"),
                    r.normalization.label(),
                    r.nme,
                    r.fr,
                    r.auc,
                    r.coverage
                );
            }
            let _ = writeln!(out, "\n{FOOTNOTE}");
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            {
                let mut w = csv_writer(&mut buf);
                w.write_record([
                    "model".to_string(),
                    "split".into(),
                    "normalization".into(),
                    "NME".into(),
                    format!("FR@{t}"),
                    format!("AUC@{t}"),
                    "coverage".into(),
                ])?;
                for r in &doc.rows {
                    w.write_record([
                        r.model.clone(),
                        r.split.clone(),
                        r.normalization.label().to_string(),
                        r.nme.to_string(),
                        r.fr.to_string(),
                        r.auc.to_string(),
                        r.coverage.to_string(),
                    ])?;
                }
                w.flush()?;
            }
            let mut out = into_string(buf);
            let _ = writeln!(out, "# {FOOTNOTE}");
            Ok(out)
        }
    }
}

/// Inverse of the CSV branch of [`emit_report`]; `#` lines are comments.
pub fn parse_report_csv(text: &str) -> Result<ReportDoc> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let fr_col = headers.get(4).unwrap_or_default();
    let threshold: f64 = fr_col
        .strip_prefix("FR@")
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| {
            Error::parse(
                1,
                format!("unexpected column `{fr_col}`, expected FR@<threshold>"),
            )
        })?;
    let mut doc = ReportDoc::new(threshold);
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 7 {
            return Err(Error::parse(
                line,
                format!("expected 7 columns, found {}", rec.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .map_err(|_| Error::parse(line, format!("invalid number `{}`", &rec[k])))
        };
        doc.rows.push(ReportRow {
            model: rec[0].to_string(),
            split: rec[1].to_string(),
            normalization: rec[2].parse()?,
            nme: num(3)?,
            fr: num(4)?,
            auc: num(5)?,
            coverage: num(6)?,
        });
    }
    doc.validate()?;
    Ok(doc)
}

/// AP table, one row per `(split, report)`; AP is scaled to 0–100.
pub fn emit_detection_csv(rows: &[(String, DetectionReport)]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no detection results"));
    }
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record([
            "split",
            "iou",
            "AP",
            "num_gt",
            "num_detections",
            "true_positives",
        ])?;
        for (split, r) in rows {
            w.write_record([
                split.clone(),
                r.iou_threshold.to_string(),
                (100.0 * r.ap).to_string(),
                r.num_gt.to_string(),
                r.num_detections.to_string(),
                r.true_positives.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(into_string(buf))
}
