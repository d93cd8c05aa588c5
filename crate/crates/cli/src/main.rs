//! `geoscene`: command-line driver for the synthesis pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use geoscene::assets::index::{AssetIndex, ObjectEntry};
use geoscene::assets::load_object_with;
use geoscene::dataset::coco::{cmd_export_coco, MaskFormat};
use geoscene::dataset::report::{
    cmd_losses, cmd_preview, cmd_sensitivity, cmd_stats, matrix_csv, validate_dataset, LossExtras,
};
use geoscene::dataset::{cmd_generate, load_config, DatasetManifest, LossConfig, Overrides, Project};
use geoscene::geoloss::arch::{
    parse_arch, receptive_field, shape_trace, Shape, COLOR_PATH, DISCRIMINATOR, GEOMETRY_PATH, PREDICTOR,
};
use geoscene::knowledge::KThreshold;
use geoscene::Error;
use serde_json::json;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "geoscene", version, about = "Knowledge-driven synthetic scene datasets")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// Config file; repeat to layer, later files win.
    #[arg(long, global = true, env = "GEOSCENE_CONFIG", value_delimiter = ',')]
    config: Vec<PathBuf>,
    #[arg(long, global = true, env = "GEOSCENE_SCENE")]
    scene: Option<String>,
    #[arg(long, global = true, env = "GEOSCENE_SEED")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "GEOSCENE_THREADS", default_value_t = 0)]
    threads: usize,
    /// A fixed threshold, or `calibrate`.
    #[arg(long, global = true, env = "GEOSCENE_K_THRESHOLD", value_parser = parse_threshold, allow_hyphen_values = true)]
    k_threshold: Option<KThreshold>,
    #[arg(long, global = true, env = "GEOSCENE_CALIBRATE_PERCENTILE")]
    calibrate_percentile: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Add an OBJ model to an asset index, or write the demo project.
    Import {
        obj: Option<PathBuf>,
        #[arg(long, required_unless_present = "demo")]
        id: Option<String>,
        #[arg(long, required_unless_present = "demo")]
        category: Option<String>,
        #[arg(long, default_value = "assets.json")]
        index: PathBuf,
        /// Model up axis as `x,y,z`.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        up: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Write the bundled demo project into this directory.
        #[arg(long, conflicts_with = "obj")]
        demo: Option<PathBuf>,
    },
    /// Check a dataset manifest, or the project config when none is given.
    Validate { manifest: Option<PathBuf> },
    /// Generate layouts and render one sample per layout.
    Gen {
        #[arg(long, env = "GEOSCENE_COUNT")]
        count: usize,
        #[arg(long, env = "GEOSCENE_OUT")]
        out: PathBuf,
    },
    /// Write COCO-style instance annotations for a dataset.
    ExportCoco {
        manifest: PathBuf,
        #[arg(long, env = "GEOSCENE_OUT")]
        out: PathBuf,
        /// Polygons instead of run-length masks.
        #[arg(long)]
        polygons: bool,
    },
    /// Instance counts per category and scene.
    Stats {
        manifest: PathBuf,
        /// Also recount the segmentation maps.
        #[arg(long)]
        verify: bool,
    },
    /// Score a candidate image against a rendered sample.
    Losses {
        /// Directory holding the sample files.
        dir: PathBuf,
        stem: String,
        #[arg(long)]
        candidate: PathBuf,
        /// Predicted geometry as a sample file set `DIR/STEM`.
        #[arg(long)]
        predicted: Option<PathBuf>,
        /// Discriminator score map (gray PNG).
        #[arg(long)]
        fake_scores: Option<PathBuf>,
    },
    /// Receptive field and shape trace of an architecture string.
    Rf {
        /// Spec string or one of: color, geometry, predictor, discriminator.
        #[arg(default_value = "discriminator")]
        arch: String,
        /// Input shape `HxWxC`.
        #[arg(long, default_value = "256x256x3")]
        input: String,
    },
    /// Prior-perturbation sensitivity experiment.
    Sensitivity {
        #[arg(long, env = "GEOSCENE_ANNOTATORS", default_value_t = 20)]
        annotators: usize,
        #[arg(long, env = "GEOSCENE_NOISE", default_value_t = 0.2)]
        noise: f64,
        #[arg(long, env = "GEOSCENE_OUT")]
        out: PathBuf,
    },
    /// Contact sheet of rendered samples.
    Preview {
        manifest: PathBuf,
        #[arg(long, env = "GEOSCENE_OUT")]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        max: usize,
    },
}

fn parse_threshold(s: &str) -> Result<KThreshold, String> {
    if s.eq_ignore_ascii_case("calibrate") {
        return Ok(KThreshold::Calibrate);
    }
    s.parse::<f64>()
        .map(KThreshold::Fixed)
        .map_err(|_| format!("expected a number or `calibrate`, got {s:?}"))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::BudgetExhausted { .. }) => EXIT_BUDGET,
        Some(Error::Io { .. } | Error::NotFound { .. } | Error::Image { .. }) => EXIT_IO,
        Some(_) => EXIT_VALIDATION,
        None if e.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
        None => EXIT_VALIDATION,
    }
}

/// Failure already reported on stdout, with a fixed exit code.
#[derive(Debug)]
struct Reported(u8);

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "failed with exit code {}", self.0)
    }
}

impl std::error::Error for Reported {}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

impl Global {
    fn overrides(&self) -> Overrides {
        Overrides {
            scene: self.scene.clone(),
            seed: self.seed,
            k_threshold: self.k_threshold,
            calibration_percentile: self.calibrate_percentile,
        }
    }

    fn config_paths(&self) -> Vec<PathBuf> {
        if self.config.is_empty() {
            vec![PathBuf::from("config.json")]
        } else {
            self.config.clone()
        }
    }

    fn project(&self) -> geoscene::Result<Project> {
        Project::open(&self.config_paths(), &self.overrides())
    }
}

fn write_file(path: &Path, text: String) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(())
}

fn import_obj(
    obj: &Path,
    id: String,
    category: String,
    index_path: &Path,
    up: Option<Vec<f64>>,
    scale: f64,
) -> anyhow::Result<()> {
    let up = up.map(|v| [v[0], v[1], v[2]]);
    let model = load_object_with(obj, &id, &category, up.map(Into::into), scale)?;
    let mut index = if index_path.exists() {
        AssetIndex::load(index_path)?
    } else {
        AssetIndex {
            base_dir: index_path.parent().map(Path::to_path_buf).unwrap_or_default(),
            ..AssetIndex::default()
        }
    };
    if index.objects.iter().any(|o| o.id == id) {
        return Err(Error::Validation(format!("object id {id:?} already in {}", index_path.display())).into());
    }
    let abs = std::path::absolute(obj).context("resolving model path")?;
    let base = std::path::absolute(&index.base_dir).context("resolving index directory")?;
    let path = abs.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(abs);
    index.objects.push(ObjectEntry { id: id.clone(), category, path, up, scale });
    write_file(index_path, serde_json::to_string_pretty(&index)? + "\n")?;
    print_json(&json!({
        "id": id,
        "index": index_path,
        "vertices": model.mesh.vertices.len(),
        "faces": model.mesh.faces.len(),
        "mass": model.mass,
    }))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    if g.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(g.threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.cmd {
        Cmd::Import { demo: Some(dir), .. } => {
            geoscene::fixtures::write_demo_project(&dir)?;
            print_json(&json!({"demo": dir, "config": dir.join("config.json")}))
        }
        Cmd::Import { obj, id, category, index, up, scale, demo: None } => {
            let obj = obj.ok_or_else(|| Error::Validation("an OBJ path or --demo is required".into()))?;
            import_obj(&obj, id.unwrap_or_default(), category.unwrap_or_default(), &index, up, scale)
        }
        Cmd::Validate { manifest: Some(m) } => {
            let report = validate_dataset(&m)?;
            print_json(&report)?;
            if report.ok {
                Ok(())
            } else {
                Err(Reported(EXIT_VALIDATION).into())
            }
        }
        Cmd::Validate { manifest: None } => {
            let p = g.project()?;
            print_json(&json!({
                "ok": true,
                "scene": p.scene.name,
                "objects": p.pool.model_count(),
                "categories": p.kb.models.keys().collect::<Vec<_>>(),
                "annotation_cost_s": geoscene::layoutgen::annotation_cost(&p.kb),
            }))
        }
        Cmd::Gen { count, out } => {
            let p = g.project()?;
            let (manifest, summary) = cmd_generate(&p, count, &out)?;
            print_json(&json!({
                "out": out,
                "samples": manifest.samples.len(),
                "requested": count,
                "complete": manifest.complete,
                "threshold": summary.threshold,
                "calibrated": summary.calibrated,
                "stats": summary.stats,
            }))?;
            summary.into_result()?;
            Ok(())
        }
        Cmd::ExportCoco { manifest, out, polygons } => {
            let m = DatasetManifest::load(&manifest)?;
            if !m.complete {
                return Err(Error::Validation(format!(
                    "{} is a partial dataset ({} of {} samples)",
                    manifest.display(),
                    m.samples.len(),
                    m.requested
                ))
                .into());
            }
            let format = if polygons { MaskFormat::Polygon } else { MaskFormat::Rle };
            let coco = cmd_export_coco(&manifest, &out, format)?;
            print_json(&json!({
                "out": out,
                "images": coco.images.len(),
                "annotations": coco.annotations.len(),
                "categories": coco.categories.len(),
            }))
        }
        Cmd::Stats { manifest, verify } => {
            let report = cmd_stats(&manifest, verify)?;
            print_json(&report)?;
            if report.recount_matches == Some(false) {
                return Err(Reported(EXIT_VALIDATION).into());
            }
            Ok(())
        }
        Cmd::Losses { dir, stem, candidate, predicted, fake_scores } => {
            let config = if g.config.is_empty() {
                LossConfig::default()
            } else {
                load_config(&g.config, &g.overrides())?.0.losses
            };
            let pred = predicted.as_ref().map(|p| {
                let stem = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (p.parent().map(Path::to_path_buf).unwrap_or_default(), stem)
            });
            let extras = LossExtras {
                predicted: pred.as_ref().map(|(d, s)| (d.as_path(), s.as_str())),
                fake_scores: fake_scores.as_deref(),
            };
            print_json(&cmd_losses(&dir, &stem, &candidate, &config, extras)?)
        }
        Cmd::Rf { arch, input } => {
            let text = match arch.as_str() {
                "color" => COLOR_PATH,
                "geometry" => GEOMETRY_PATH,
                "predictor" => PREDICTOR,
                "discriminator" => DISCRIMINATOR,
                s => s,
            };
            let spec = parse_arch(text)?;
            let dims: Vec<usize> = input
                .split(['x', 'X'])
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| Error::Validation(format!("bad input shape {input:?}, expected HxWxC")))?;
            let [height, width, channels] = dims[..] else {
                return Err(Error::Validation(format!("bad input shape {input:?}, expected HxWxC")).into());
            };
            let trace = shape_trace(&spec, Shape { height, width, channels })?;
            let rf = receptive_field(&spec).ok();
            print_json(&json!({
                "arch": spec.to_string(),
                "receptive_field": rf,
                "shapes": trace.iter().map(|s| [s.height, s.width, s.channels]).collect::<Vec<_>>(),
            }))
        }
        Cmd::Sensitivity { annotators, noise, out } => {
            let p = g.project()?;
            let report = cmd_sensitivity(&p, annotators, noise)?;
            let json_path = out.join("sensitivity.json");
            let csv_path = out.join("divergence.csv");
            write_file(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
            write_file(&csv_path, matrix_csv(&report.combined))?;
            print_json(&json!({
                "report": json_path,
                "matrix": csv_path,
                "bases": report.bases,
                "max_off_diagonal": report.max_off_diagonal(),
                "combined_noise_floor": report.combined_noise_floor,
            }))
        }
        Cmd::Preview { manifest, out, max } => {
            let (w, h) = cmd_preview(&manifest, &out, max)?;
            print_json(&json!({"out": out, "width": w, "height": h}))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(Reported(code)) = e.downcast_ref::<Reported>() {
                return ExitCode::from(*code);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
