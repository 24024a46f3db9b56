use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lmeval::augment::{
    apply_transform, gen_config_grid, grayscale, preset, sample_augmentation, warp_raster,
    GridSpace, Interpolation, RasterImage,
};
use lmeval::dataset::{
    filter_split, format_pts, load_detections, load_features, load_manifest, load_predictions,
    load_pts, DatasetManifest, SplitFilter,
};
use lmeval::detection::{evaluate_detections, DEFAULT_IOU_THRESHOLD};
use lmeval::geometry::{geometry_stats, mean_face};
use lmeval::metrics::{evaluate, per_landmark_errors};
use lmeval::report::{
    emit_detection_csv, emit_report, render_plot, PlotKind, PlotSpec, ReportDoc, ReportFormat,
    ReportRow, Series,
};
use lmeval::tsne::{run_tsne, TsneConfig};
use lmeval::{Error, NormalizationKind, Result};

#[derive(Parser)]
#[command(
    name = "lmeval",
    version,
    about = "Facial landmark and face detection evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Markdown,
    Csv,
    Json,
    /// Per-image NMEs, aggregates and per-landmark errors as long-form CSV.
    Detail,
}

#[derive(Subcommand)]
enum Command {
    /// NME, failure rate and AUC of one prediction file.
    EvalLandmarks {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        preds: PathBuf,
        #[arg(long, default_value = "iod")]
        norm: NormalizationKind,
        #[arg(long, default_value_t = 10.0)]
        threshold: f64,
        /// all, common, challenging, an attribute name, or attr=0|1.
        #[arg(long, default_value = "all")]
        split: SplitFilter,
        /// Model name shown in the report; defaults to the prediction file stem.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Face detection AP on the all / common / challenging splits.
    EvalDetections {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        dets: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cumulative error distribution plot for one or more prediction files.
    Ced {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        preds: Vec<PathBuf>,
        #[arg(long, default_value = "iod")]
        norm: NormalizationKind,
        #[arg(long, default_value = "all")]
        split: SplitFilter,
        /// Upper end of the NME axis.
        #[arg(long, default_value_t = 15.0)]
        max: f64,
        /// Position of the dashed failure-threshold marker.
        #[arg(long, default_value_t = 10.0)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean-face aspect ratio and interocular-to-box ratio of a manifest.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "all")]
        split: SplitFilter,
    },
    /// Plot of the box-normalized mean face.
    MeanFace {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "all")]
        split: SplitFilter,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean face with markers sized by per-landmark error.
    PerLandmark {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        preds: PathBuf,
        #[arg(long, default_value = "iod")]
        norm: NormalizationKind,
        #[arg(long, default_value = "all")]
        split: SplitFilter,
        #[arg(long)]
        out: PathBuf,
    },
    /// 2-D t-SNE embedding of per-image feature vectors.
    Tsne {
        #[arg(long)]
        features: PathBuf,
        /// Manifests whose names become the point groups.
        #[arg(long, num_args = 1..)]
        labels: Vec<PathBuf>,
        /// Append /common or /challenging to each group name.
        #[arg(long)]
        by_split: bool,
        #[arg(long, default_value_t = 50.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional scatter plot of the embedding.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Applies one sampled augmentation to an image and its landmarks.
    Augment {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        seed: u64,
        /// Binary PPM or PGM.
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        pts: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
        #[arg(long)]
        nearest: bool,
        #[arg(long, default_value_t = 0)]
        fill: u8,
    },
    /// Writes one JSON training configuration per grid point.
    GenConfigs {
        /// JSON search space; the published choice lists when omitted.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::File {
        path: path.into(),
        source: Box::new(e.into()),
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_split(path: &Path, split: &SplitFilter) -> Result<DatasetManifest> {
    let manifest = load_manifest(path)?;
    let subset = filter_split(&manifest, *split);
    if subset.is_empty() {
        return Err(Error::EmptyInput("split selects no images"));
    }
    Ok(subset)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::EvalLandmarks {
            manifest,
            preds,
            norm,
            threshold,
            split,
            model,
            format,
            out,
        } => {
            let subset = load_split(&manifest, &split)?;
            let report = evaluate(&subset, &load_predictions(&preds)?, norm, threshold)?;
            let text = match format {
                OutputFormat::Json => report.to_json()? + "\n",
                OutputFormat::Detail => {
                    let mut buf = Vec::new();
                    report.write_csv(&mut buf)?;
                    String::from_utf8_lossy(&buf).into_owned()
                }
                OutputFormat::Markdown | OutputFormat::Csv => {
                    let model = model.unwrap_or_else(|| stem(&preds));
                    let doc = ReportDoc {
                        threshold,
                        rows: vec![ReportRow::from_metrics(model, split.label(), &report)],
                    };
                    let fmt = if matches!(format, OutputFormat::Csv) {
                        ReportFormat::Csv
                    } else {
                        ReportFormat::Markdown
                    };
                    emit_report(&doc, fmt)?
                }
            };
            write_output(out.as_deref(), &text)
        }
        Command::EvalDetections {
            manifest,
            dets,
            iou,
            out,
        } => {
            let manifest = load_manifest(&manifest)?;
            let dets = load_detections(&dets)?;
            let mut rows = Vec::new();
            for split in [
                SplitFilter::All,
                SplitFilter::Common,
                SplitFilter::Challenging,
            ] {
                let subset = filter_split(&manifest, split);
                if !subset.is_empty() {
                    rows.push((split.label(), evaluate_detections(&subset, &dets, iou)?));
                }
            }
            write_output(out.as_deref(), &emit_detection_csv(&rows)?)
        }
        Command::Ced {
            manifest,
            preds,
            norm,
            split,
            max,
            threshold,
            out,
        } => {
            let subset = load_split(&manifest, &split)?;
            let mut series = Vec::new();
            for path in &preds {
                let report = evaluate(&subset, &load_predictions(path)?, norm, threshold)?;
                series.push(Series::values(stem(path), report.nmes()));
            }
            let mut spec = PlotSpec::new(
                PlotKind::Ced,
                format!("CED, NME ({}) on {}", norm.label(), split.label()),
                series,
            );
            spec.x_range = Some([0.0, max]);
            spec.threshold = Some(threshold);
            write_file(&out, render_plot(&spec)?)
        }
        Command::Stats { manifest, split } => {
            let subset = load_split(&manifest, &split)?;
            let stats = geometry_stats(&subset.landmark_sets())?;
            let json = serde_json::json!({
                "dataset": subset.name,
                "split": split.label(),
                "images": subset.len(),
                "mean_face_aspect_ratio": stats.mean_face_aspect_ratio,
                "mean_iod_over_box": stats.mean_iod_over_box,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&json).map_err(Error::from)?
            );
            Ok(())
        }
        Command::MeanFace {
            manifest,
            split,
            out,
        } => {
            let subset = load_split(&manifest, &split)?;
            let face = mean_face(&subset.landmark_sets(), NormalizationKind::BoxSize)?;
            let mut spec = PlotSpec::new(
                PlotKind::Scatter,
                format!("Mean face of {} ({} images)", subset.name, subset.len()),
                vec![Series::points(subset.name.clone(), face.to_pairs())],
            );
            spec.y_down = true;
            write_file(&out, render_plot(&spec)?)
        }
        Command::PerLandmark {
            manifest,
            preds,
            norm,
            split,
            out,
        } => {
            let subset = load_split(&manifest, &split)?;
            let errors = per_landmark_errors(&load_predictions(&preds)?, &subset, norm)?;
            let face = mean_face(&subset.landmark_sets(), NormalizationKind::BoxSize)?;
            let mut series = Series::points(stem(&preds), face.to_pairs());
            series.values = errors;
            let mut spec = PlotSpec::new(
                PlotKind::LandmarkError,
                format!("Per-landmark NME ({}) of {}", norm.label(), stem(&preds)),
                vec![series],
            );
            spec.y_down = true;
            write_file(&out, render_plot(&spec)?)
        }
        Command::Tsne {
            features,
            labels,
            by_split,
            perplexity,
            iterations,
            seed,
            out,
            plot,
        } => {
            let features = load_features(&features)?;
            let mut groups = HashMap::new();
            for path in &labels {
                let manifest = load_manifest(path)?;
                for r in manifest.records() {
                    let group = match (by_split, r.attributes.is_challenging()) {
                        (false, _) => manifest.name.clone(),
                        (true, false) => format!("{}/common", manifest.name),
                        (true, true) => format!("{}/challenging", manifest.name),
                    };
                    groups.insert(r.image_id.clone(), group);
                }
            }
            let config = TsneConfig {
                perplexity,
                iterations,
                seed,
                ..TsneConfig::default()
            };
            let embedding = run_tsne(&features, &config)?;
            let mut buf = Vec::new();
            embedding.write_csv(&groups, &mut buf)?;
            write_file(&out, buf)?;
            if let Some(plot) = plot {
                let mut by_group: Vec<(String, Vec<[f64; 2]>)> = Vec::new();
                for (id, xy) in embedding.ids.iter().zip(&embedding.coords) {
                    let g = groups
                        .get(id)
                        .cloned()
                        .unwrap_or_else(|| "unlabeled".to_string());
                    match by_group.iter_mut().find(|(name, _)| *name == g) {
                        Some((_, pts)) => pts.push(*xy),
                        None => by_group.push((g, vec![*xy])),
                    }
                }
                by_group.sort_by(|a, b| a.0.cmp(&b.0));
                let series = by_group
                    .into_iter()
                    .map(|(g, pts)| Series::points(g, pts))
                    .collect();
                let spec = PlotSpec::new(
                    PlotKind::Scatter,
                    format!("t-SNE (perplexity {perplexity})"),
                    series,
                );
                write_file(&plot, render_plot(&spec)?)?;
            }
            Ok(())
        }
        Command::Augment {
            preset: name,
            seed,
            image,
            pts,
            out_prefix,
            nearest,
            fill,
        } => {
            let config = preset(&name)?;
            let img = RasterImage::load(&image)?;
            let landmarks = load_pts(&pts)?;
            let sample = sample_augmentation(&config, seed, img.center())?;
            let interpolation = if nearest {
                Interpolation::Nearest
            } else {
                Interpolation::Bilinear
            };
            let mut warped = warp_raster(&sample.transform, &img, fill, interpolation)?;
            if sample.grayscale && warped.channels() == 3 {
                warped = grayscale(&warped)?;
            }
            let moved = apply_transform(&sample.transform, &landmarks)?;
            let ext = if warped.channels() == 1 { "pgm" } else { "ppm" };
            let prefix = out_prefix.to_string_lossy();
            warped.save(format!("{prefix}.{ext}"))?;
            write_file(Path::new(&format!("{prefix}.pts")), format_pts(&moved))?;
            let summary = serde_json::json!({
                "preset": name,
                "seed": seed,
                "rotation_deg": sample.rotation_deg,
                "zoom": sample.zoom,
                "grayscale": sample.grayscale,
                "transform": sample.transform.m,
            });
            println!("{summary}");
            Ok(())
        }
        Command::GenConfigs { space, out_dir } => {
            let space = match space {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::File {
                        path: path.clone(),
                        source: Box::new(e.into()),
                    })?;
                    serde_json::from_str::<GridSpace>(&text).map_err(|e| Error::File {
                        path,
                        source: Box::new(e.into()),
                    })?
                }
                None => GridSpace::published_defaults(),
            };
            let grid = gen_config_grid(&space)?;
            fs::create_dir_all(&out_dir).map_err(|e| Error::File {
                path: out_dir.clone(),
                source: Box::new(e.into()),
            })?;
            let docs = grid.documents();
            for (i, doc) in docs.iter().enumerate() {
                let json = serde_json::to_string_pretty(doc).map_err(Error::from)? + "\n";
                write_file(&out_dir.join(format!("config_{i:03}.json")), json)?;
            }
            println!(
                "{} configs ({} lr x freeze, {} rotation, {} zoom before deduplication)",
                docs.len(),
                grid.lr_freeze.len(),
                grid.rotation_sweep.len(),
                grid.zoom_sweep.len()
            );
            Ok(())
        }
    }
}

fn one_line(msg: impl std::fmt::Display) -> String {
    msg.to_string()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "error: usage: {}",
                one_line(first.trim_start_matches("error: "))
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), one_line(&e));
            ExitCode::FAILURE
        }
    }
}
