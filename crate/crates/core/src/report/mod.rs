//! Rendering of evaluation results: SVG plots and metric tables.

mod plot;
mod table;

pub use plot::{escape_xml, render_plot, PlotKind, PlotSpec, Series};
pub use table::{
    emit_detection_csv, emit_report, parse_report_csv, ReportDoc, ReportFormat, ReportRow, FOOTNOTE,
};
