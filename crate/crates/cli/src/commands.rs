use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use anchorlab::anchors::{kmeans_anchor_shapes, AnchorShape, KMeansConfig};
use anchorlab::eval::{evaluate_dataset, ApReport, Interpolation};
use anchorlab::kitti::{self, classify_difficulty};
use anchorlab::net::{builtin_net, canonical_input, estimate_activation_memory, layer_dims};
use anchorlab::synth::{perturb_frames, write_result_frames, PerturbConfig, ScoreModel};
use anchorlab::DifficultyBin;

use crate::output::{csv_field, json, stdout, table, write_file};
use crate::{
    AnchorsArgs, Cli, CliError, Command, DifficultyFilter, EvalArgs, Format, GlobalOpts, Interp, NetinfoArgs,
    ScoreModelArg, SynthArgs, ValidateArgs,
};

pub fn run(cli: &Cli) -> Result<u8, CliError> {
    if let Some(dir) = &cli.global.output_dir {
        if dir.exists() && !dir.is_dir() {
            return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
        }
    }
    match &cli.command {
        Command::Validate(args) => validate(&cli.global, args),
        Command::Anchors(args) => anchors(&cli.global, args),
        Command::Netinfo(args) => netinfo(&cli.global, args),
        Command::Eval(args) => eval(&cli.global, args),
        Command::Synth(args) => synth(&cli.global, args),
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} directory {} does not exist",
            path.display()
        )))
    }
}

#[derive(Serialize)]
struct FileStatus {
    file: String,
    objects: usize,
    error: Option<String>,
}

#[derive(Serialize)]
struct ValidateReport {
    files: usize,
    valid: usize,
    invalid: usize,
    objects: usize,
    classes: BTreeMap<String, usize>,
    details: Vec<FileStatus>,
}

fn validate(global: &GlobalOpts, args: &ValidateArgs) -> Result<u8, CliError> {
    require_dir(&args.dir, "label")?;
    let frames = kitti::list_frames(&args.dir)?;
    let parsed: Vec<(FileStatus, Vec<String>)> = frames
        .par_iter()
        .map(|(id, path)| {
            let file = format!("{id}.txt");
            let classes = if args.results {
                kitti::read_result_file(path).map(|d| d.into_iter().map(|d| d.object.class_name).collect())
            } else {
                kitti::read_label_file(path).map(|g| g.into_iter().map(|g| g.class_name).collect::<Vec<_>>())
            };
            match classes {
                Ok(classes) => (
                    FileStatus {
                        file,
                        objects: classes.len(),
                        error: None,
                    },
                    classes,
                ),
                Err(e) => {
                    let msg = match e {
                        anchorlab::Error::File { source, .. } => source.to_string(),
                        other => other.to_string(),
                    };
                    (
                        FileStatus {
                            file,
                            objects: 0,
                            error: Some(msg),
                        },
                        Vec::new(),
                    )
                }
            }
        })
        .collect();

    let mut classes = BTreeMap::new();
    let mut details = Vec::with_capacity(parsed.len());
    for (status, names) in parsed {
        for n in names {
            *classes.entry(n).or_insert(0) += 1;
        }
        details.push(status);
    }
    let invalid = details.iter().filter(|d| d.error.is_some()).count();
    for d in &details {
        if let Some(e) = &d.error {
            eprintln!("{}: {e}", d.file);
        }
    }
    let report = ValidateReport {
        files: details.len(),
        valid: details.len() - invalid,
        invalid,
        objects: details.iter().map(|d| d.objects).sum(),
        classes,
        details,
    };

    let text = match global.format {
        Format::Json => json(&report),
        Format::Csv => {
            let mut s = String::from("file,status,objects,error\n");
            for d in &report.details {
                let status = if d.error.is_some() { "invalid" } else { "ok" };
                let err = d.error.as_deref().map(csv_field).unwrap_or_default();
                writeln!(s, "{},{status},{},{err}", csv_field(&d.file), d.objects).unwrap();
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            for d in &report.details {
                if let Some(e) = &d.error {
                    writeln!(s, "{}: {e}", d.file).unwrap();
                }
            }
            writeln!(
                s,
                "files {}  valid {}  invalid {}  objects {}",
                report.files, report.valid, report.invalid, report.objects
            )
            .unwrap();
            for (class, n) in &report.classes {
                writeln!(s, "  {class:<16}{n}").unwrap();
            }
            s
        }
    };
    emit(global, "validate", &text)?;
    Ok(if report.invalid > 0 { 2 } else { 0 })
}

/// Writes a report to stdout and, when `--output-dir` is set, to a file.
fn emit(global: &GlobalOpts, stem: &str, text: &str) -> Result<(), CliError> {
    stdout(text)?;
    if let Some(dir) = &global.output_dir {
        let ext = match global.format {
            Format::Text => "txt",
            Format::Csv => "csv",
            Format::Json => "json",
        };
        write_file(dir, &format!("{stem}.{ext}"), text)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AnchorsReport {
    class: String,
    observations: usize,
    k: usize,
    seed: u64,
    shapes: Vec<AnchorShape>,
    objective: f64,
    euclidean_sum: f64,
    iterations: usize,
    converged: bool,
}

fn anchors(global: &GlobalOpts, args: &AnchorsArgs) -> Result<u8, CliError> {
    require_dir(&args.labels, "label")?;
    if !(args.scale > 0.0 && args.scale.is_finite()) {
        return Err(CliError::Usage(format!("--scale must be positive, got {}", args.scale)));
    }
    if args.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let limit = match args.difficulty {
        DifficultyFilter::All => None,
        DifficultyFilter::Easy => Some(DifficultyBin::Easy),
        DifficultyFilter::Moderate => Some(DifficultyBin::Moderate),
        DifficultyFilter::Hard => Some(DifficultyBin::Hard),
    };

    let frames = kitti::read_label_dir(&args.labels)?;
    let observations: Vec<AnchorShape> = frames
        .iter()
        .flat_map(|f| &f.rows)
        .filter(|o| o.class_name == args.class)
        .filter(|o| limit.is_none_or(|bin| classify_difficulty(o) <= bin))
        .map(|o| AnchorShape::of_box(&o.bbox.scaled(args.scale)))
        .collect::<Result<_, _>>()?;
    if observations.len() < args.k {
        return Err(CliError::Data(anyhow::anyhow!(
            "only {} `{}` boxes found, fewer than k = {}",
            observations.len(),
            args.class,
            args.k
        )));
    }

    let cfg = KMeansConfig {
        k: args.k,
        seed: args.seed,
        max_iterations: args.max_iter,
        tolerance: args.tol,
    };
    let res = kmeans_anchor_shapes(&observations, &cfg)?;
    info!(
        "k-means: {} observations, objective {:.3}, euclidean sum {:.3}, {} iterations",
        observations.len(),
        res.objective,
        res.euclidean_sum,
        res.iterations
    );
    let mut shapes = res.shapes.clone();
    shapes.sort_by(|a, b| {
        (a.width * a.height)
            .total_cmp(&(b.width * b.height))
            .then(a.width.total_cmp(&b.width))
    });

    let report = AnchorsReport {
        class: args.class.clone(),
        observations: observations.len(),
        k: args.k,
        seed: args.seed,
        shapes,
        objective: res.objective,
        euclidean_sum: res.euclidean_sum,
        iterations: res.iterations,
        converged: res.converged,
    };

    let shapes_csv = {
        let mut s = String::from("width,height\n");
        for a in &report.shapes {
            writeln!(s, "{:.4},{:.4}", a.width, a.height).unwrap();
        }
        s
    };
    let text = match global.format {
        Format::Csv => shapes_csv.clone(),
        Format::Json => json(&report),
        Format::Text => {
            let rows: Vec<Vec<String>> = report
                .shapes
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    vec![
                        i.to_string(),
                        format!("{:.2}", a.width),
                        format!("{:.2}", a.height),
                        format!("{:.3}", a.height / a.width),
                    ]
                })
                .collect();
            let mut s = table(&["anchor", "width", "height", "h/w"], &rows);
            writeln!(s, "observations    {}", report.observations).unwrap();
            writeln!(s, "sum sq. dist    {:.4}", report.objective).unwrap();
            writeln!(s, "sum dist        {:.4}", report.euclidean_sum).unwrap();
            writeln!(
                s,
                "iterations      {} (converged: {})",
                report.iterations, report.converged
            )
            .unwrap();
            s
        }
    };
    stdout(&text)?;

    if let Some(dir) = &global.output_dir {
        write_file(dir, "anchors.csv", &shapes_csv)?;
        let mut scatter = String::from("width,height\n");
        for o in &observations {
            writeln!(scatter, "{:.4},{:.4}", o.width, o.height).unwrap();
        }
        write_file(dir, "observations.csv", &scatter)?;
        if global.format == Format::Json {
            write_file(dir, "anchors.json", &text)?;
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct NetLayerRow {
    layer: String,
    kind: String,
    width: u32,
    height: u32,
    channels: u32,
    stride: u32,
    activation_mb: f64,
    cumulative_train_mb: f64,
}

#[derive(Serialize)]
struct NetReport {
    net: String,
    input: String,
    bytes_per_element: u64,
    train_multiplier: f64,
    layers: Vec<NetLayerRow>,
    estimate_bytes: f64,
}

fn netinfo(global: &GlobalOpts, args: &NetinfoArgs) -> Result<u8, CliError> {
    let net = builtin_net(&args.net).map_err(|e| CliError::Usage(e.to_string()))?;
    let last = match &args.layer {
        Some(name) => net.layer_index(name).map_err(|e| CliError::Usage(e.to_string()))?,
        None => net.layers.len() - 1,
    };
    if !(args.train_multiplier >= 0.0 && args.train_multiplier.is_finite()) {
        return Err(CliError::Usage("--train-multiplier must be >= 0".into()));
    }
    let input = args.input.unwrap_or_else(|| canonical_input(&net));
    let reports = layer_dims(&net, input)?;
    let last_name = &net.layers[last].name;
    let estimate = estimate_activation_memory(&net, last_name, input, args.bytes_per_elem, args.train_multiplier)?;

    let mut cumulative = 0u64;
    let rows: Vec<NetLayerRow> = reports[..=last]
        .iter()
        .map(|r| {
            let bytes = r.activation_bytes(args.bytes_per_elem);
            cumulative += bytes;
            NetLayerRow {
                layer: r.name.clone(),
                kind: r.kind.to_string(),
                width: r.width,
                height: r.height,
                channels: r.channels,
                stride: r.cumulative_stride,
                activation_mb: bytes as f64 / 1e6,
                cumulative_train_mb: cumulative as f64 * args.train_multiplier / 1e6,
            }
        })
        .collect();
    let report = NetReport {
        net: net.name.clone(),
        input: input.to_string(),
        bytes_per_element: args.bytes_per_elem,
        train_multiplier: args.train_multiplier,
        layers: rows,
        estimate_bytes: estimate,
    };

    let text = match global.format {
        Format::Json => json(&report),
        Format::Csv => {
            let mut s = String::from("layer,kind,width,height,channels,stride,activation_mb,cumulative_train_mb\n");
            for r in &report.layers {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{:.3},{:.3}",
                    r.layer, r.kind, r.width, r.height, r.channels, r.stride, r.activation_mb, r.cumulative_train_mb
                )
                .unwrap();
            }
            s
        }
        Format::Text => {
            let rows: Vec<Vec<String>> = report
                .layers
                .iter()
                .map(|r| {
                    vec![
                        r.layer.clone(),
                        r.kind.clone(),
                        format!("{}x{}", r.width, r.height),
                        r.channels.to_string(),
                        r.stride.to_string(),
                        format!("{:.3}", r.activation_mb),
                        format!("{:.3}", r.cumulative_train_mb),
                    ]
                })
                .collect();
            let mut s = format!("{} input {}\n", report.net, report.input);
            s.push_str(&table(
                &["layer", "kind", "output", "channels", "stride", "MB", "train MB"],
                &rows,
            ));
            writeln!(
                s,
                "activation memory through {last_name}: {:.3} GB ({} B/elem, x{})",
                estimate / 1e9,
                args.bytes_per_elem,
                args.train_multiplier
            )
            .unwrap();
            s
        }
    };
    emit(global, "netinfo", &text)?;
    Ok(0)
}

fn ap_table(report: &ApReport, format: Format) -> String {
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Row<'a> {
                difficulty: &'a str,
                ap: f64,
                gt: usize,
                tp: usize,
                fp: usize,
                ignored: usize,
            }
            #[derive(Serialize)]
            struct Out<'a> {
                class: &'a str,
                iou_threshold: f64,
                interpolation: String,
                frames: usize,
                bins: Vec<Row<'a>>,
            }
            json(&Out {
                class: &report.class_name,
                iou_threshold: report.iou_threshold,
                interpolation: report.interpolation.to_string(),
                frames: report.frames,
                bins: report
                    .bins
                    .iter()
                    .map(|b| Row {
                        difficulty: b.difficulty.name(),
                        ap: b.ap,
                        gt: b.gt,
                        tp: b.tp,
                        fp: b.fp,
                        ignored: b.ignored,
                    })
                    .collect(),
            })
        }
        Format::Csv => {
            let mut s = String::from("difficulty,ap,gt,tp,fp,ignored\n");
            for b in &report.bins {
                writeln!(
                    s,
                    "{},{:.6},{},{},{},{}",
                    b.difficulty.name(),
                    b.ap,
                    b.gt,
                    b.tp,
                    b.fp,
                    b.ignored
                )
                .unwrap();
            }
            s
        }
        Format::Text => {
            let rows: Vec<Vec<String>> = report
                .bins
                .iter()
                .map(|b| {
                    vec![
                        b.difficulty.name().to_string(),
                        format!("{:.4}", b.ap),
                        b.gt.to_string(),
                        b.tp.to_string(),
                        b.fp.to_string(),
                        b.ignored.to_string(),
                    ]
                })
                .collect();
            let mut s = format!(
                "{} @ IoU {:.2}, {}, {} frames\n",
                report.class_name, report.iou_threshold, report.interpolation, report.frames
            );
            s.push_str(&table(&["bin", "AP", "gt", "tp", "fp", "ignored"], &rows));
            let ap = |d| report.ap(d);
            writeln!(
                s,
                "AP easy/moderate/hard: {:.3}/{:.3}/{:.3}",
                ap(DifficultyBin::Easy),
                ap(DifficultyBin::Moderate),
                ap(DifficultyBin::Hard)
            )
            .unwrap();
            s
        }
    }
}

fn eval(global: &GlobalOpts, args: &EvalArgs) -> Result<u8, CliError> {
    require_dir(&args.gt, "ground-truth")?;
    require_dir(&args.det, "detection")?;
    if !(args.iou > 0.0 && args.iou <= 1.0) {
        return Err(CliError::Usage(format!("--iou must lie in (0, 1], got {}", args.iou)));
    }
    let interpolation = match args.interp {
        Interp::R11 => Interpolation::R11,
        Interp::R40 => Interpolation::R40,
    };
    let report = evaluate_dataset(&args.det, &args.gt, &args.class, args.iou, interpolation)?;
    let text = ap_table(&report, global.format);
    emit(global, "ap", &text)?;

    if let Some(dir) = &global.output_dir {
        for b in &report.bins {
            let mut s = String::from("threshold,recall,precision\n");
            for p in &b.curve.points {
                writeln!(s, "{:.6},{:.6},{:.6}", p.threshold, p.recall, p.precision).unwrap();
            }
            write_file(dir, &format!("pr_{}.csv", b.difficulty.name()), &s)?;
        }
    }
    Ok(0)
}

fn synth(global: &GlobalOpts, args: &SynthArgs) -> Result<u8, CliError> {
    require_dir(&args.gt, "ground-truth")?;
    let out = args
        .out
        .as_ref()
        .or(global.output_dir.as_ref())
        .ok_or_else(|| CliError::Usage("synth needs --out or --output-dir".into()))?;
    let config = PerturbConfig {
        center_noise_sigma: args.center_sigma,
        scale_noise_sigma: args.scale_sigma,
        drop_rate: args.drop_rate,
        false_positive_rate: args.fp_rate,
        score_model: match args.score_model {
            ScoreModelArg::IouBased => ScoreModel::IouBased,
            ScoreModelArg::Random => ScoreModel::Random,
        },
        seed: args.seed,
        image: args.image,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let gts = kitti::read_label_dir(&args.gt)?;
    let dets = perturb_frames(&gts, &config)?;
    write_result_frames(out, &dets)?;

    let total: usize = dets.iter().map(|f| f.rows.len()).sum();
    let text = match global.format {
        Format::Csv => format!("frames,detections\n{},{total}\n", dets.len()),
        Format::Text => format!(
            "wrote {} result files ({total} detections) to {}\n",
            dets.len(),
            out.display()
        ),
        Format::Json => json(&serde_json::json!({ "frames": dets.len(), "detections": total })),
    };
    stdout(&text)?;
    Ok(0)
}
