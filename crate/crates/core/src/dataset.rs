//! Annotation, prediction, detection and feature files, plus split filters.
//!
//! Canonical formats:
//!
//! * manifest CSV: `image_id,x1,y1,...,x68,y68,turned,tilted,occluded,expressive`
//!   optionally followed by `box_x,box_y,box_w,box_h` (cells may be empty);
//! * predictions JSON-lines: `{"image_id": "...", "points": [[x, y], ...]}`;
//! * detections JSON-lines: `{"image_id": "...", "boxes": [{"x","y","w","h","score"}, ...]}`;
//! * features CSV: `image_id,f1,...,fD` with an optional header row;
//! * `.pts`: the 300-W landmark file layout.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::{minimal_bounding_box, BoundingBox, LandmarkSet, Point2, NUM_LANDMARKS};

const NUM_COORDS: usize = 2 * NUM_LANDMARKS;
const ATTRIBUTE_COLUMNS: [&str; 4] = ["turned", "tilted", "occluded", "expressive"];
const BOX_COLUMNS: [&str; 4] = ["box_x", "box_y", "box_w", "box_h"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Turned,
    Tilted,
    Occluded,
    Expressive,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Turned,
        Attribute::Tilted,
        Attribute::Occluded,
        Attribute::Expressive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Attribute::Turned => "turned",
            Attribute::Tilted => "tilted",
            Attribute::Occluded => "occluded",
            Attribute::Expressive => "expressive",
        }
    }
}

/// Binary pose attributes of an annotated face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaceAttributes {
    pub turned: bool,
    pub tilted: bool,
    pub occluded: bool,
    pub expressive: bool,
}

impl FaceAttributes {
    pub fn get(&self, attribute: Attribute) -> bool {
        match attribute {
            Attribute::Turned => self.turned,
            Attribute::Tilted => self.tilted,
            Attribute::Occluded => self.occluded,
            Attribute::Expressive => self.expressive,
        }
    }

    pub fn set(&mut self, attribute: Attribute, value: bool) {
        match attribute {
            Attribute::Turned => self.turned = value,
            Attribute::Tilted => self.tilted = value,
            Attribute::Occluded => self.occluded = value,
            Attribute::Expressive => self.expressive = value,
        }
    }

    /// At least one adverse attribute is present.
    pub fn is_challenging(&self) -> bool {
        self.turned || self.tilted || self.occluded || self.expressive
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceRecord {
    pub image_id: String,
    pub landmarks: LandmarkSet,
    pub attributes: FaceAttributes,
    pub bbox: Option<BoundingBox>,
}

impl FaceRecord {
    /// The annotated box, or the minimal box around the landmarks.
    pub fn gt_box(&self) -> BoundingBox {
        self.bbox
            .unwrap_or_else(|| minimal_bounding_box(&self.landmarks))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    records: Vec<FaceRecord>,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, records: Vec<FaceRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.image_id.is_empty() {
                return Err(Error::InvalidArgument("empty image_id".to_string()));
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::DuplicateId(r.image_id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            records,
        })
    }

    pub fn records(&self) -> &[FaceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&FaceRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    pub fn landmark_sets(&self) -> Vec<LandmarkSet> {
        self.records.iter().map(|r| r.landmarks.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitFilter {
    All,
    /// No adverse attribute set.
    Common,
    /// At least one adverse attribute set.
    Challenging,
    ByAttribute(Attribute, bool),
}

impl SplitFilter {
    pub fn keeps(&self, attributes: &FaceAttributes) -> bool {
        match *self {
            SplitFilter::All => true,
            SplitFilter::Common => !attributes.is_challenging(),
            SplitFilter::Challenging => attributes.is_challenging(),
            SplitFilter::ByAttribute(a, v) => attributes.get(a) == v,
        }
    }

    pub fn label(&self) -> String {
        match self {
            SplitFilter::All => "all".to_string(),
            SplitFilter::Common => "common".to_string(),
            SplitFilter::Challenging => "challenging".to_string(),
            SplitFilter::ByAttribute(a, true) => a.name().to_string(),
            SplitFilter::ByAttribute(a, false) => format!("not-{}", a.name()),
        }
    }
}

impl std::str::FromStr for SplitFilter {
    type Err = Error;

    /// Accepts `all`, `common`, `challenging`, an attribute name, or
    /// `attribute=0|1`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => return Ok(SplitFilter::All),
            "common" => return Ok(SplitFilter::Common),
            "challenging" => return Ok(SplitFilter::Challenging),
            _ => {}
        }
        let (name, value) = match s.split_once('=') {
            Some((n, "1")) => (n, true),
            Some((n, "0")) => (n, false),
            Some(_) => {
                return Err(Error::InvalidArgument(format!("bad split filter `{s}`")));
            }
            None => (s, true),
        };
        Attribute::ALL
            .iter()
            .find(|a| a.name() == name)
            .map(|&a| SplitFilter::ByAttribute(a, value))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split filter `{s}`")))
    }
}

pub fn filter_split(manifest: &DatasetManifest, filter: SplitFilter) -> DatasetManifest {
    DatasetManifest {
        name: manifest.name.clone(),
        records: manifest
            .records
            .iter()
            .filter(|r| filter.keeps(&r.attributes))
            .cloned()
            .collect(),
    }
}

/// Predicted landmarks keyed by image id.
pub type PredictionSet = BTreeMap<String, LandmarkSet>;

/// Face detections keyed by image id.
pub type DetectionSet = BTreeMap<String, Vec<Detection>>;

/// Row-major N x D matrix of per-image feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    data: Vec<f64>,
    dim: usize,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, data: Vec<f64>, dim: usize) -> Result<Self> {
        if ids.len() * dim != data.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids x {dim} columns does not match {} values",
                ids.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite feature for `{}`",
                ids[i / dim.max(1)]
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId(dup.clone()));
        }
        Ok(Self { ids, data, dim })
    }

    pub fn from_rows(rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.1.len());
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in rows {
            if row.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "ragged row `{id}`: expected {dim} values, found {}",
                    row.len()
                )));
            }
            ids.push(id);
            data.extend(row);
        }
        Self::new(ids, data, dim)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

// --- .pts ------------------------------------------------------------------

pub fn parse_pts(text: &str) -> Result<LandmarkSet> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let last_line = text.lines().count().max(1);
    let mut it = lines.into_iter();

    let header = |entry: Option<(usize, &str)>, key: &str| -> Result<(usize, String)> {
        let (line, content) =
            entry.ok_or_else(|| Error::parse(last_line, format!("missing `{key}` header")))?;
        match content.split_once(':') {
            Some((k, v)) if k.trim() == key => Ok((line, v.trim().to_string())),
            _ => Err(Error::parse(
                line,
                format!("expected `{key}: ...`, found `{content}`"),
            )),
        }
    };

    let (line, version) = header(it.next(), "version")?;
    if version != "1" {
        return Err(Error::parse(
            line,
            format!("unsupported version `{version}`"),
        ));
    }
    let (line, n_points) = header(it.next(), "n_points")?;
    let declared: usize = n_points
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid n_points `{n_points}`")))?;
    if declared != NUM_LANDMARKS {
        return Err(Error::parse(
            line,
            format!("expected {NUM_LANDMARKS} points, n_points declares {declared}"),
        ));
    }
    match it.next() {
        Some((_, "{")) => {}
        Some((line, other)) => {
            return Err(Error::parse(
                line,
                format!("expected `{{`, found `{other}`"),
            ))
        }
        None => return Err(Error::parse(last_line, "missing `{`")),
    }

    let mut points = Vec::with_capacity(NUM_LANDMARKS);
    let mut closed = false;
    for (line, content) in it.by_ref() {
        if content == "}" {
            closed = true;
            break;
        }
        let mut fields = content.split_whitespace();
        let mut coord = |name: &str| -> Result<f64> {
            let tok = fields
                .next()
                .ok_or_else(|| Error::parse(line, format!("missing {name} coordinate")))?;
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(line, format!("non-numeric coordinate `{tok}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(line, format!("non-finite coordinate `{tok}`")))
            }
        };
        let x = coord("x")?;
        let y = coord("y")?;
        if let Some(extra) = fields.next() {
            return Err(Error::parse(line, format!("unexpected token `{extra}`")));
        }
        if points.len() == NUM_LANDMARKS {
            return Err(Error::parse(
                line,
                format!("expected {NUM_LANDMARKS} points, found more"),
            ));
        }
        points.push(Point2::new(x, y));
    }
    if !closed {
        return Err(Error::parse(last_line, "missing closing `}`"));
    }
    if let Some((line, content)) = it.next() {
        return Err(Error::parse(line, format!("trailing content `{content}`")));
    }
    if points.len() != NUM_LANDMARKS {
        return Err(Error::parse(
            last_line,
            format!("expected {NUM_LANDMARKS} points, found {}", points.len()),
        ));
    }
    LandmarkSet::new(points)
}

/// Serializes in `.pts` layout with shortest round-trip decimal coordinates.
pub fn format_pts(landmarks: &LandmarkSet) -> String {
    let mut out = format!("version: 1\nn_points: {NUM_LANDMARKS}\n{{\n");
    for p in landmarks.points() {
        out.push_str(&format!("{} {}\n", p.x, p.y));
    }
    out.push_str("}\n");
    out
}

pub fn load_pts(path: impl AsRef<Path>) -> Result<LandmarkSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_pts(&text).map_err(|e| e.in_file(path))
}

// --- manifest CSV ----------------------------------------------------------

fn manifest_header(with_box: bool) -> Vec<String> {
    let mut header = vec!["image_id".to_string()];
    for i in 1..=NUM_LANDMARKS {
        header.push(format!("x{i}"));
        header.push(format!("y{i}"));
    }
    header.extend(ATTRIBUTE_COLUMNS.iter().map(|s| s.to_string()));
    if with_box {
        header.extend(BOX_COLUMNS.iter().map(|s| s.to_string()));
    }
    header
}

fn parse_cell(line: usize, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("non-numeric {column} `{cell}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(line, format!("non-finite {column} `{cell}`")))
    }
}

pub fn read_manifest<R: Read>(reader: R, name: impl Into<String>) -> Result<DatasetManifest> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    let with_box = if header == manifest_header(true) {
        true
    } else if header == manifest_header(false) {
        false
    } else {
        return Err(Error::parse(
            1,
            format!(
                "unexpected manifest header ({} columns); expected image_id, x1..y68, {}[, {}]",
                header.len(),
                ATTRIBUTE_COLUMNS.join(", "),
                BOX_COLUMNS.join(", ")
            ),
        ));
    };
    let fixed = 1 + ATTRIBUTE_COLUMNS.len() + if with_box { BOX_COLUMNS.len() } else { 0 };

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in csv.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != header.len() {
            let coords = row.len().saturating_sub(fixed);
            return Err(Error::parse(
                line,
                format!("expected {NUM_COORDS} coordinates, found {coords}"),
            ));
        }
        let image_id = row[0].to_string();
        if image_id.is_empty() {
            return Err(Error::parse(line, "empty image_id"));
        }
        if !seen.insert(image_id.clone()) {
            return Err(Error::parse(
                line,
                format!("duplicate image_id `{image_id}`"),
            ));
        }
        let mut points = Vec::with_capacity(NUM_LANDMARKS);
        for k in 0..NUM_LANDMARKS {
            let x = parse_cell(line, &header[1 + 2 * k], &row[1 + 2 * k])?;
            let y = parse_cell(line, &header[2 + 2 * k], &row[2 + 2 * k])?;
            points.push(Point2::new(x, y));
        }
        let mut attributes = FaceAttributes::default();
        for (j, attr) in Attribute::ALL.iter().enumerate() {
            let cell = &row[1 + NUM_COORDS + j];
            let value = match cell {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::parse(
                        line,
                        format!("{} must be 0 or 1, found `{other}`", attr.name()),
                    ))
                }
            };
            attributes.set(*attr, value);
        }
        let bbox = if with_box {
            let start = 1 + NUM_COORDS + ATTRIBUTE_COLUMNS.len();
            let cells: Vec<&str> = (start..start + 4).map(|i| &row[i]).collect();
            if cells.iter().all(|c| c.is_empty()) {
                None
            } else {
                let mut v = [0.0; 4];
                for (k, cell) in cells.iter().enumerate() {
                    v[k] = parse_cell(line, BOX_COLUMNS[k], cell)?;
                }
                Some(
                    BoundingBox::new(v[0], v[1], v[2], v[3])
                        .map_err(|e| Error::parse(line, e.to_string()))?,
                )
            }
        } else {
            None
        };
        records.push(FaceRecord {
            image_id,
            landmarks: LandmarkSet::new(points)?,
            attributes,
            bbox,
        });
    }
    DatasetManifest::new(name, records)
}

/// Loads a manifest CSV; the manifest is named after the file stem.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    read_manifest(file, name).map_err(|e| e.in_file(path))
}

/// Writes the manifest CSV. Box columns are emitted only if some record has a box.
pub fn write_manifest<W: Write>(manifest: &DatasetManifest, writer: W) -> Result<()> {
    let with_box = manifest.records.iter().any(|r| r.bbox.is_some());
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(manifest_header(with_box))?;
    for r in &manifest.records {
        let mut row = vec![r.image_id.clone()];
        for p in r.landmarks.points() {
            row.push(p.x.to_string());
            row.push(p.y.to_string());
        }
        for a in Attribute::ALL {
            row.push(if r.attributes.get(a) { "1" } else { "0" }.to_string());
        }
        if with_box {
            match r.bbox {
                Some(b) => row.extend([b.x, b.y, b.w, b.h].iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

// --- JSON-lines ------------------------------------------------------------

fn json_lines<R: Read>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(e.into())),
        })
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    image_id: String,
    points: Vec<[f64; 2]>,
}

pub fn read_predictions<R: Read>(reader: R) -> Result<PredictionSet> {
    let mut out = PredictionSet::new();
    for item in json_lines(reader) {
        let (line, text) = item?;
        let parsed: PredictionLine =
            serde_json::from_str(&text).map_err(|e| Error::parse(line, e.to_string()))?;
        if parsed.points.len() != NUM_LANDMARKS {
            return Err(Error::parse(
                line,
                format!(
                    "expected {NUM_LANDMARKS} points, found {}",
                    parsed.points.len()
                ),
            ));
        }
        let set = LandmarkSet::from_pairs(&parsed.points)
            .map_err(|e| Error::parse(line, e.to_string()))?;
        if out.insert(parsed.image_id.clone(), set).is_some() {
            return Err(Error::parse(
                line,
                format!("duplicate image_id `{}`", parsed.image_id),
            ));
        }
    }
    Ok(out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<PredictionSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    read_predictions(file).map_err(|e| e.in_file(path))
}

pub fn write_predictions<W: Write>(preds: &PredictionSet, mut writer: W) -> Result<()> {
    for (id, set) in preds {
        let line = PredictionLine {
            image_id: id.clone(),
            points: set.to_pairs(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DetectionBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct DetectionLine {
    image_id: String,
    boxes: Vec<DetectionBox>,
}

pub fn read_detections<R: Read>(reader: R) -> Result<DetectionSet> {
    let mut out = DetectionSet::new();
    for item in json_lines(reader) {
        let (line, text) = item?;
        let parsed: DetectionLine =
            serde_json::from_str(&text).map_err(|e| Error::parse(line, e.to_string()))?;
        let mut dets = Vec::with_capacity(parsed.boxes.len());
        for b in parsed.boxes {
            let bbox = BoundingBox::new(b.x, b.y, b.w, b.h)
                .map_err(|e| Error::parse(line, e.to_string()))?;
            let det =
                Detection::new(bbox, b.score).map_err(|e| Error::parse(line, e.to_string()))?;
            dets.push(det);
        }
        if out.insert(parsed.image_id.clone(), dets).is_some() {
            return Err(Error::parse(
                line,
                format!("duplicate image_id `{}`", parsed.image_id),
            ));
        }
    }
    Ok(out)
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<DetectionSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    read_detections(file).map_err(|e| e.in_file(path))
}

pub fn write_detections<W: Write>(dets: &DetectionSet, mut writer: W) -> Result<()> {
    for (id, list) in dets {
        let line = DetectionLine {
            image_id: id.clone(),
            boxes: list
                .iter()
                .map(|d| DetectionBox {
                    x: d.bbox.x,
                    y: d.bbox.y,
                    w: d.bbox.w,
                    h: d.bbox.h,
                    score: d.score,
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

// --- features CSV ----------------------------------------------------------

pub fn read_features<R: Read>(reader: R) -> Result<FeatureMatrix> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, row) in csv.records().enumerate() {
        let row = row?;
        let line = row.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && row.get(0) == Some("image_id") {
            continue;
        }
        if row.len() < 2 {
            return Err(Error::parse(
                line,
                "expected image_id followed by feature values",
            ));
        }
        let d = row.len() - 1;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::parse(
                    line,
                    format!("ragged row: expected {expected} features, found {d}"),
                ))
            }
            _ => {}
        }
        for (k, cell) in row.iter().skip(1).enumerate() {
            data.push(parse_cell(line, &format!("feature {}", k + 1), cell)?);
        }
        ids.push(row[0].to_string());
    }
    FeatureMatrix::new(ids, data, dim.unwrap_or(0))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    read_features(file).map_err(|e| e.in_file(path))
}
