//! Standalone SVG rendering for CED curves, scatter plots and per-landmark
//! error faces.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::NUM_LANDMARKS;
use crate::metrics::ced_curve;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;
const MIN_RADIUS: f64 = 2.0;
const MAX_RADIUS: f64 = 12.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `values` of each series are per-image NMEs.
    Ced,
    /// `points` of each series are one colored group.
    Scatter,
    /// One series: 68 mean-face `points` and their 68 error `values`.
    LandmarkError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub name: String,
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn values(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            points: Vec::new(),
            values,
        }
    }

    pub fn points(name: impl Into<String>, points: Vec<[f64; 2]>) -> Self {
        Self {
            name: name.into(),
            points,
            values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub title: String,
    pub series: Vec<Series>,
    pub x_range: Option<[f64; 2]>,
    pub y_range: Option<[f64; 2]>,
    /// Vertical marker line (CED threshold).
    pub threshold: Option<f64>,
    /// Draw y increasing downwards, as in image coordinates.
    pub y_down: bool,
}

impl PlotSpec {
    pub fn new(kind: PlotKind, title: impl Into<String>, series: Vec<Series>) -> Self {
        Self {
            kind,
            title: title.into(),
            series,
            x_range: None,
            y_range: None,
            threshold: None,
            y_down: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::EmptyInput("plot needs at least one series"));
        }
        for s in &self.series {
            let empty = match self.kind {
                PlotKind::Ced => s.values.is_empty(),
                PlotKind::Scatter | PlotKind::LandmarkError => s.points.is_empty(),
            };
            if empty {
                return Err(Error::InvalidArgument(format!(
                    "series `{}` is empty",
                    s.name
                )));
            }
            let finite = s.values.iter().all(|v| v.is_finite())
                && s.points.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidArgument(format!(
                    "series `{}` has non-finite data",
                    s.name
                )));
            }
        }
        if self.kind == PlotKind::LandmarkError {
            let s = &self.series[0];
            if self.series.len() != 1
                || s.points.len() != NUM_LANDMARKS
                || s.values.len() != NUM_LANDMARKS
            {
                return Err(Error::InvalidArgument(
                    "landmark error plot needs one series of 68 points and 68 errors".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Frame {
    x: [f64; 2],
    y: [f64; 2],
    y_down: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + (x - self.x[0]) / (self.x[1] - self.x[0]) * w
    }

    fn py(&self, y: f64) -> f64 {
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let t = (y - self.y[0]) / (self.y[1] - self.y[0]);
        if self.y_down {
            MARGIN_TOP + t * h
        } else {
            HEIGHT - MARGIN_BOTTOM - t * h
        }
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> [f64; 2] {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    let pad = if span > 0.0 { 0.05 * span } else { 1.0 };
    [lo - pad, hi + pad]
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape_xml(title)
    );
}

fn axes(svg: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
    );
    let _ = writeln!(
        svg,
        r#"<g class="ticks" font-family="sans-serif" font-size="11">"#
    );
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let xv = f.x[0] + t * (f.x[1] - f.x[0]);
        let yv = f.y[0] + t * (f.y[1] - f.y[0]);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.px(xv),
            y1 + 16.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            f.py(yv) + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        escape_xml(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape_xml(y_label)
    );
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn legend(svg: &mut String, names: &[&str]) {
    let x = WIDTH - MARGIN_RIGHT + 16.0;
    let _ = writeln!(
        svg,
        r#"<g class="legend" font-family="sans-serif" font-size="12">"#
    );
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN_TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text></g>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y,
            escape_xml(name)
        );
    }
    let _ = writeln!(svg, "</g>");
}

fn render_ced(spec: &PlotSpec, svg: &mut String) -> Result<()> {
    let max_value = spec
        .series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .fold(0.0f64, f64::max);
    let x_max = spec
        .x_range
        .map(|r| r[1])
        .or(spec.threshold)
        .unwrap_or(if max_value > 0.0 { max_value } else { 1.0 });
    let frame = Frame {
        x: spec.x_range.unwrap_or([0.0, x_max]),
        y: spec.y_range.unwrap_or([0.0, 1.0]),
        y_down: false,
    };
    axes(svg, &frame, "NME", "fraction of images");
    if let Some(t) = spec.threshold {
        let _ = writeln!(
            svg,
            r##"<line class="threshold" x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#555" stroke-dasharray="4 3"/>"##,
            MARGIN_TOP,
            HEIGHT - MARGIN_BOTTOM,
            x = frame.px(t)
        );
    }
    for (i, s) in spec.series.iter().enumerate() {
        let curve = ced_curve(&s.values)?;
        let pts: Vec<String> = curve
            .steps(x_max)
            .into_iter()
            .map(|(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            PALETTE[i % PALETTE.len()],
            pts.join(" "),
            escape_xml(&s.name)
        );
    }
    let names: Vec<&str> = spec.series.iter().map(|s| s.name.as_str()).collect();
    legend(svg, &names);
    Ok(())
}

fn render_scatter(spec: &PlotSpec, svg: &mut String) {
    let all = || spec.series.iter().flat_map(|s| s.points.iter());
    let frame = Frame {
        x: spec
            .x_range
            .unwrap_or_else(|| padded_range(all().map(|p| p[0]))),
        y: spec
            .y_range
            .unwrap_or_else(|| padded_range(all().map(|p| p[1]))),
        y_down: spec.y_down,
    };
    axes(svg, &frame, "x", "y");
    for (i, s) in spec.series.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<g class="group" fill="{}" fill-opacity="0.8">"#,
            PALETTE[i % PALETTE.len()]
        );
        for p in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#,
                frame.px(p[0]),
                frame.py(p[1])
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    let names: Vec<&str> = spec.series.iter().map(|s| s.name.as_str()).collect();
    legend(svg, &names);
}

fn render_landmark_error(spec: &PlotSpec, svg: &mut String) {
    let s = &spec.series[0];
    let frame = Frame {
        x: spec
            .x_range
            .unwrap_or_else(|| padded_range(s.points.iter().map(|p| p[0]))),
        y: spec
            .y_range
            .unwrap_or_else(|| padded_range(s.points.iter().map(|p| p[1]))),
        y_down: spec.y_down,
    };
    let max_err = s.values.iter().copied().fold(0.0f64, f64::max);
    let _ = writeln!(
        svg,
        r#"<g class="landmarks" stroke="black" stroke-width="0.5">"#
    );
    for (p, &e) in s.points.iter().zip(&s.values) {
        let t = if max_err > 0.0 { e / max_err } else { 0.0 };
        let r = MIN_RADIUS + t * (MAX_RADIUS - MIN_RADIUS);
        let red = (255.0 * t).round() as u8;
        let blue = 255 - red;
        let _ = writeln!(
            svg,
            r##"<circle class="landmark" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#{red:02x}40{blue:02x}" fill-opacity="0.7"><title>{:.4}</title></circle>"##,
            frame.px(p[0]),
            frame.py(p[1]),
            r,
            e
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">max error {:.2}</text>"#,
        WIDTH - MARGIN_RIGHT + 16.0,
        MARGIN_TOP + 10.0,
        max_err
    );
}

pub fn render_plot(spec: &PlotSpec) -> Result<String> {
    spec.validate()?;
    let mut svg = String::new();
    header(&mut svg, &spec.title);
    match spec.kind {
        PlotKind::Ced => render_ced(spec, &mut svg)?,
        PlotKind::Scatter => render_scatter(spec, &mut svg),
        PlotKind::LandmarkError => render_landmark_error(spec, &mut svg),
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed SVG")
    }

    fn count(doc: &roxmltree::Document, tag: &str, class: Option<&str>) -> usize {
        doc.descendants()
            .filter(|n| {
                n.has_tag_name(tag) && class.is_none_or(|c| n.attribute("class") == Some(c))
            })
            .count()
    }

    #[test]
    fn ced_draws_one_polyline_per_series() {
        let mut spec = PlotSpec::new(
            PlotKind::Ced,
            "CED <iod>",
            vec![
                Series::values("model A", vec![1.0, 4.0, 9.0, 20.0]),
                Series::values("model B & co", vec![2.0, 3.0]),
            ],
        );
        spec.x_range = Some([0.0, 15.0]);
        spec.threshold = Some(10.0);
        let svg = render_plot(&spec).unwrap();
        let doc = parse(&svg);
        assert_eq!(count(&doc, "polyline", None), 2);
        assert_eq!(count(&doc, "line", Some("threshold")), 1);
        assert_eq!(count(&doc, "g", Some("legend-entry")), 2);
    }

    #[test]
    fn scatter_legend_per_group() {
        let spec = PlotSpec::new(
            PlotKind::Scatter,
            "t-SNE",
            vec![
                Series::points("adult", vec![[0.0, 0.0], [1.0, 1.0]]),
                Series::points("infant/common", vec![[5.0, 5.0]]),
                Series::points("infant/challenging", vec![[-3.0, 2.0]]),
            ],
        );
        let doc_text = render_plot(&spec).unwrap();
        let doc = parse(&doc_text);
        assert_eq!(count(&doc, "g", Some("legend-entry")), 3);
        assert_eq!(count(&doc, "circle", None), 4);
    }

    #[test]
    fn zero_error_landmarks_use_min_radius() {
        let points: Vec<[f64; 2]> = (0..68).map(|i| [i as f64, (i * 7 % 13) as f64]).collect();
        let mut series = Series::points("mean face", points);
        series.values = vec![0.0; 68];
        let spec = PlotSpec {
            y_down: true,
            ..PlotSpec::new(PlotKind::LandmarkError, "errors", vec![series])
        };
        let svg = render_plot(&spec).unwrap();
        let doc = parse(&svg);
        let radii: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("landmark"))
            .map(|n| n.attribute("r").unwrap().to_string())
            .collect();
        assert_eq!(radii.len(), 68);
        assert!(radii.iter().all(|r| r == "2.00"));
    }

    #[test]
    fn empty_series_rejected() {
        assert!(render_plot(&PlotSpec::new(PlotKind::Ced, "x", vec![])).is_err());
        assert!(render_plot(&PlotSpec::new(
            PlotKind::Ced,
            "x",
            vec![Series::values("a", vec![])]
        ))
        .is_err());
        assert!(render_plot(&PlotSpec::new(
            PlotKind::Scatter,
            "x",
            vec![Series::points("a", vec![[f64::NAN, 0.0]])]
        ))
        .is_err());
    }
}
