//! Command-line front end: synthetic data generation, the multi-seed
//! experiment protocol, and train / predict / interpret round trips.

use clap::{Parser, Subcommand};
use omkl_core::attribution::{biomarker_report, AttributionConfig};
use omkl_core::data::{
    load_unlabeled_views, load_views, synthetic_multiview, write_labels_csv, write_view_csv,
    OmicsView,
};
use omkl_core::eval::{cross_validate, run_experiment, ExperimentOptions, Method, ParamPoint, SearchSpace};
use omkl_core::kernel::{compute_cross_gram, KernelSpec};
use omkl_core::kpca::kpca_project;
use omkl_core::model_file::{train_model, ModelKind, TrainedModel};
use omkl_core::CoreError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "omkl", version, about = "Multi-omics multiple-kernel-learning toolkit")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-view dataset as CSV files.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        /// Comma-separated feature counts, one per view.
        #[arg(long, default_value = "10,10,10")]
        dims: String,
        /// Comma-separated class-separation strengths, one per view.
        #[arg(long, default_value = "1.0,1.0,1.0")]
        strengths: String,
    },
    /// Run the full multi-seed evaluation protocol for one method.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed override, e.g. "0,1,2,3,4".
        #[arg(long)]
        seed_list: Option<String>,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Fit one model on the full dataset and save it.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict new samples with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Feature CSVs, one per view, in the model's view order.
        #[arg(long, required = true, num_args = 1..)]
        views: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-step biomarker report for a saved deep model.
    Interpret {
        #[arg(long)]
        model: PathBuf,
        /// Feature CSVs, one per view, in the model's view order.
        #[arg(long, required = true, num_args = 1..)]
        views: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 3)]
        top_components: usize,
        /// Comma-separated per-view feature report lengths (default 10 each).
        #[arg(long)]
        top_features: Option<String>,
    },
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_train_fraction() -> f64 {
    0.7
}

const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    schema_version: u32,
    view_paths: Vec<String>,
    label_path: String,
    method: Method,
    #[serde(default)]
    search: SearchSpace,
    #[serde(default)]
    options: ExperimentOptions,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_train_fraction")]
    train_fraction: f64,
    #[serde(default)]
    out_dir: Option<String>,
    /// Fixed hyperparameters for `train`; omit to select them by CV.
    #[serde(default)]
    point: Option<ParamPoint>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    fn data(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_DATA, message: message.into() }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> CliError {
        let code = match &err {
            CoreError::InvalidInput(_) => EXIT_CONFIG,
            CoreError::Data(_)
            | CoreError::DimensionMismatch(_)
            | CoreError::Io(_)
            | CoreError::Csv(_) => EXIT_DATA,
            CoreError::Numerical(_) => EXIT_NUMERICAL,
            CoreError::Serde(_) => EXIT_CONFIG,
        };
        CliError { code, message: err.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if config.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(CliError::config(format!(
            "unsupported schema_version {}, expected {CONFIG_SCHEMA_VERSION}",
            config.schema_version
        )));
    }
    if config.view_paths.is_empty() {
        return Err(CliError::config("field 'view_paths' must list at least one CSV"));
    }
    for p in &config.view_paths {
        if !Path::new(p).exists() {
            return Err(CliError::config(format!("view file not found: {p}")));
        }
    }
    if !Path::new(&config.label_path).exists() {
        return Err(CliError::config(format!(
            "label file not found: {}",
            config.label_path
        )));
    }
    if config.seeds.is_empty() {
        return Err(CliError::config("field 'seeds' must not be empty"));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(CliError::config("field 'train_fraction' must be in (0, 1)"));
    }
    Ok(config)
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> CliResult<Vec<T>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| CliError::config(format!("invalid {what} entry '{s}'")))
        })
        .collect()
}

/// Write-temp-then-rename so outputs appear atomically.
fn write_atomic(path: &Path, content: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::data(format!("cannot rename to {}: {e}", path.display())))?;
    Ok(())
}

fn check_view_files(paths: &[PathBuf]) -> CliResult<()> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::data(format!("view file not found: {}", p.display())));
        }
    }
    Ok(())
}

fn cmd_gen_synthetic(
    out: &Path,
    seed: u64,
    samples: usize,
    classes: usize,
    dims: &str,
    strengths: &str,
) -> CliResult<()> {
    let dims: Vec<usize> = parse_list(dims, "dims")?;
    let strengths: Vec<f64> = parse_list(strengths, "strengths")?;
    let dataset = synthetic_multiview(seed, samples, classes, &dims, &strengths)?;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;
    for (i, view) in dataset.views.iter().enumerate() {
        let path = out.join(format!("view{i}.csv"));
        write_view_csv(view, &path)?;
        println!("{}", path.display());
    }
    let labels = out.join("labels.csv");
    write_labels_csv(&dataset, &labels)?;
    println!("{}", labels.display());
    Ok(())
}

fn cmd_run(
    config_path: &Path,
    out: Option<PathBuf>,
    seed_list: Option<String>,
    train_fraction: Option<f64>,
) -> CliResult<()> {
    let mut config = load_config(config_path)?;
    if let Some(raw) = seed_list {
        config.seeds = parse_list(&raw, "seed")?;
    }
    if let Some(f) = train_fraction {
        config.train_fraction = f;
    }
    let out_dir = out
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let dataset = load_views(&config.view_paths, &config.label_path)?;
    let report = run_experiment(
        &dataset,
        config.method,
        &config.search,
        &config.options,
        &config.seeds,
        config.train_fraction,
    )?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::data(format!("serialization failed: {e}")))?;
    write_atomic(&out_dir.join("report.json"), &json)?;
    write_atomic(&out_dir.join("report.txt"), &report.table())?;
    print!("{}", report.table());
    Ok(())
}

fn cmd_train(config_path: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let config = load_config(config_path)?;
    let out_dir = out
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let dataset = load_views(&config.view_paths, &config.label_path)?;
    let seed = *config.seeds.first().unwrap();
    let point = match config.point {
        Some(p) => p,
        None => {
            cross_validate(&dataset, config.method, &config.search, &config.options, seed)?.best
        }
    };
    let model = train_model(&dataset, config.method, &point, &config.options, seed)?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join("model.json");
    model.save(&path)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_predict(model_path: &Path, view_paths: &[PathBuf], out: Option<PathBuf>) -> CliResult<()> {
    check_view_files(view_paths)?;
    let model = TrainedModel::load(model_path)?;
    if view_paths.len() != model.view_names.len() {
        return Err(CliError::data(format!(
            "model expects {} views ({}), got {}",
            model.view_names.len(),
            model.view_names.join(", "),
            view_paths.len()
        )));
    }
    let views = load_unlabeled_views(view_paths)?;
    let sample_ids = views[0].samples.clone();
    let values: Vec<_> = views.into_iter().map(|v| v.values).collect();
    let (preds, scores) = model.predict(&values)?;

    let mut csv = String::from("sample_id,predicted_label");
    for class in &model.class_names {
        csv.push_str(&format!(",score_{class}"));
    }
    csv.push('\n');
    for (i, id) in sample_ids.iter().enumerate() {
        csv.push_str(&format!("{id},{}", model.class_names[preds[i]]));
        for c in 0..model.class_names.len() {
            csv.push_str(&format!(",{}", scores[[i, c]]));
        }
        csv.push('\n');
    }
    let out_dir = out.unwrap_or_else(|| PathBuf::from("."));
    let path = out_dir.join("predictions.csv");
    write_atomic(&path, &csv)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_interpret(
    model_path: &Path,
    view_paths: &[PathBuf],
    out: Option<PathBuf>,
    steps: usize,
    top_components: usize,
    top_features: Option<String>,
) -> CliResult<()> {
    check_view_files(view_paths)?;
    let model = TrainedModel::load(model_path)?;
    let (deep, fits) = match &model.kind {
        ModelKind::Deep { model: m, fits } => (m, fits),
        _ => {
            return Err(CliError::config(
                "interpret requires a deep model (method deep_mkl or cross_modal_deep_mkl)",
            ))
        }
    };
    if view_paths.len() != model.view_names.len() {
        return Err(CliError::data(format!(
            "model expects {} views, got {}",
            model.view_names.len(),
            view_paths.len()
        )));
    }
    let top_features: Vec<usize> = match top_features {
        Some(raw) => {
            let parsed: Vec<usize> = parse_list(&raw, "top_features")?;
            if parsed.len() != model.view_names.len() {
                return Err(CliError::config(format!(
                    "top_features needs {} entries, got {}",
                    model.view_names.len(),
                    parsed.len()
                )));
            }
            parsed
        }
        None => vec![10; model.view_names.len()],
    };

    let views = load_unlabeled_views(view_paths)?;
    let sigma = match model.point {
        ParamPoint::Deep { sigma, .. } => sigma,
        ParamPoint::Svm { sigma, .. } => sigma,
    };
    let spec = KernelSpec::Rbf { sigma };
    let mut embeddings = Vec::new();
    for ((view, train), fit) in views.iter().zip(&model.train_values).zip(fits) {
        let cross = compute_cross_gram(&view.values, train, spec)?;
        embeddings.push(kpca_project(fit, &cross)?.scores);
    }
    // Rebuild the training views the feature ranking differentiates against.
    let train_views: Vec<OmicsView> = model
        .view_names
        .iter()
        .zip(&model.feature_names)
        .zip(&model.train_values)
        .map(|((name, features), values)| {
            OmicsView::new(
                name.clone(),
                model.train_sample_ids.clone(),
                features.clone(),
                values.clone(),
                None,
            )
        })
        .collect::<omkl_core::Result<_>>()?;

    let mut config = AttributionConfig::new(top_components, top_features);
    config.steps = steps;
    let report = biomarker_report(deep, fits, &train_views, &embeddings, None, &config)?;

    let out_dir = out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out_dir.display())))?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::data(format!("serialization failed: {e}")))?;
    write_atomic(&out_dir.join("attribution.json"), &json)?;
    report.write_csvs(&out_dir.join("components.csv"), &out_dir.join("features.csv"))?;
    println!("{}", out_dir.join("features.csv").display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::GenSynthetic { out, seed, samples, classes, dims, strengths } => {
            cmd_gen_synthetic(&out, seed, samples, classes, &dims, &strengths)
        }
        Command::Run { config, out, seed_list, train_fraction } => {
            cmd_run(&config, out, seed_list, train_fraction)
        }
        Command::Train { config, out } => cmd_train(&config, out),
        Command::Predict { model, views, out } => cmd_predict(&model, &views, out),
        Command::Interpret { model, views, out, steps, top_components, top_features } => {
            cmd_interpret(&model, &views, out, steps, top_components, top_features)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
