//! Pipeline driver: synthetic dataset generation, reference-model
//! training, mask-explanation runs (plain or frequency-filtered),
//! metric evaluation, band-ratio ablation sweeps, and a transform
//! utility for tensor files.
//!
//! Every command is deterministic given its flags and input files, and
//! every output artifact carries the resolved configuration (a JSON
//! sidecar or embedded field) so results reproduce from their own
//! metadata. Exit codes: 0 success, 2 usage/input error, 3 numerical
//! abort.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fep_core::data::{
    export_heatmap_frames, generate_dataset, load_dataset, motion_templates, save_dataset,
    LabeledClip, SyntheticSpec, DESK_TEMPLATE_TEMPERATURE,
};
use fep_core::dct::{DctPlan, GfmConfig};
use fep_core::io::{load_model, load_tensor, save_model, save_tensor};
use fep_core::metrics::{
    deletion_curve, drop_in_confidence, explanation_accuracy, stc, DeletionMode, MetricReport,
    StcConfig,
};
use fep_core::model::{AnyModel, Model, ObjectiveMode, TinyConvModel};
use fep_core::optimizer::{ablate, explain, ExplanationResult, OptimizerConfig};
use fep_core::tensor::ClipShape;
use fep_core::{Error as CoreError, Tensor};

use config::{resolve, resolve_opt, FileConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unusable input files; exit code 2.
    Usage(String),
    /// Numerical abort inside an optimization; exit code 3.
    Numeric(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFiniteGradient { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "fep",
    about = "Mask-based saliency explanations for video classifiers, with optional frequency-band filtering of the optimizer's gradients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic moving-blob dataset with ground-truth boxes.
    Generate(GenerateArgs),
    /// Build or train a reference model on a dataset and save it.
    Train(TrainArgs),
    /// Optimize explanation masks for one clip or the whole dataset.
    Explain(ExplainArgs),
    /// Score saved masks against a dataset and model.
    Evaluate(EvaluateArgs),
    /// Sweep band ratios and tabulate the metrics per cell.
    Ablate(AblateArgs),
    /// Forward or inverse 3-D transform of a rank-3 tensor file.
    Dct(DctArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of clips.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    blob_size: Option<usize>,
    #[arg(long)]
    blob_intensity: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Amplitude of the label-correlated checkerboard distractor.
    #[arg(long)]
    hf_amplitude: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    Template,
    Tinyconv,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    model_kind: Option<ModelKind>,
    #[arg(long)]
    out: PathBuf,
    /// Softmax temperature of the analytic template model.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    conv_channels: Option<usize>,
    #[arg(long)]
    kernel_t: Option<usize>,
    #[arg(long)]
    kernel_hw: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodFlag {
    Ep,
    Fep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum TargetFlag {
    /// Explain the model's own predicted label.
    Predicted,
    /// Explain the dataset's ground-truth label.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveFlag {
    Probability,
    Logit,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Zero-based clip index, or `all`.
    #[arg(long, default_value = "all")]
    clip_index: String,
    #[arg(long, value_enum)]
    method: Option<MethodFlag>,
    /// Low-band keep ratio (frequency-filtered method only).
    #[arg(long)]
    rl: Option<f64>,
    /// High-band keep ratio (frequency-filtered method only).
    #[arg(long)]
    rh: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also export per-frame PGM heatmaps.
    #[arg(long)]
    heatmaps: bool,
    #[arg(long, value_enum)]
    target: Option<TargetFlag>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    area: Option<f64>,
    #[arg(long)]
    blur_sigma: Option<f64>,
    #[arg(long)]
    mask_init: Option<f64>,
    #[arg(long)]
    mask_step: Option<usize>,
    #[arg(long)]
    mask_smooth_sigma: Option<f64>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveFlag>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum DeletionFlag {
    Zero,
    Blur,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Directory holding mask_NNNN.fept files, one per clip.
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    deletion_steps: Option<usize>,
    #[arg(long, value_enum)]
    deletion_mode: Option<DeletionFlag>,
    #[arg(long)]
    blur_sigma: Option<f64>,
    /// Reference labels: the model's predictions or the dataset truth.
    #[arg(long, value_enum)]
    labels: Option<TargetFlag>,
    /// Also write per-clip deletion curves as CSV into this directory.
    #[arg(long)]
    curves_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Low-band grid start:end:step (inclusive), e.g. 0.1:0.8:0.1.
    #[arg(long)]
    rl_grid: Option<String>,
    /// Fixed high-band ratio.
    #[arg(long)]
    rh: Option<f64>,
    /// High-band grid start:end:step (inclusive).
    #[arg(long)]
    rh_grid: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    area: Option<f64>,
    #[arg(long)]
    blur_sigma: Option<f64>,
    #[arg(long)]
    mask_init: Option<f64>,
    #[arg(long)]
    mask_step: Option<usize>,
    #[arg(long)]
    mask_smooth_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DctArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Apply the inverse transform instead of the forward one.
    #[arg(long)]
    inverse: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Explain(args) => cmd_explain(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Dct(args) => cmd_dct(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numerical abort: {}", msg);
            ExitCode::from(3)
        }
    }
}

// ---------------------------------------------------------------------------
// generate

#[derive(serde::Serialize)]
struct GenerateEcho {
    n: usize,
    spec: SyntheticSpec,
    out: String,
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let n = resolve(&args.n, &file.n, 50);
    if n == 0 {
        return Err(CliError::Usage("--n must be >= 1".into()));
    }
    let shape = ClipShape::new(
        resolve(&args.frames, &file.frames, 8),
        resolve(&args.channels, &file.channels, 1),
        resolve(&args.height, &file.height, 16),
        resolve(&args.width, &file.width, 16),
    )?;
    let spec = SyntheticSpec {
        clip_shape: shape,
        blob_size: resolve(&args.blob_size, &file.blob_size, 4),
        blob_intensity: resolve(&args.blob_intensity, &file.blob_intensity, 1.0),
        noise_sigma: resolve(&args.noise_sigma, &file.noise_sigma, 0.0),
        hf_noise_amplitude: resolve(&args.hf_amplitude, &file.hf_amplitude, 0.0),
        seed: resolve(&args.seed, &file.seed, 0),
    };
    let clips = generate_dataset::<f64>(&spec, n)?;
    save_dataset(&args.out, &clips)?;
    write_json_sidecar(
        &args.out,
        &GenerateEcho {
            n,
            spec,
            out: args.out.display().to_string(),
        },
    )?;
    println!("wrote {} clips (seed {}) to {}", n, spec.seed, args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(serde::Serialize)]
struct TrainEcho {
    data: String,
    model_kind: ModelKind,
    temperature: Option<f64>,
    epochs: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    conv_channels: Option<usize>,
    kernel: Option<(usize, usize, usize)>,
    final_loss: Option<f64>,
    train_accuracy: f64,
    out: String,
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let dataset = load_dataset(&args.data)?;
    if dataset.is_empty() {
        return Err(CliError::Usage("training dataset is empty".into()));
    }
    let kind = match args.model_kind {
        Some(k) => k,
        None => match file.model_kind.as_deref() {
            Some("template") => ModelKind::Template,
            Some("tinyconv") => ModelKind::Tinyconv,
            Some(other) => {
                return Err(CliError::Usage(format!("unknown model kind {:?}", other)))
            }
            None => ModelKind::Template,
        },
    };
    let first = &dataset[0].clip;
    let dims = first.shape();
    let shape = ClipShape::new(dims[0], dims[1], dims[2], dims[3])?;

    let mut echo = TrainEcho {
        data: args.data.display().to_string(),
        model_kind: kind,
        temperature: None,
        epochs: None,
        lr: None,
        seed: None,
        conv_channels: None,
        kernel: None,
        final_loss: None,
        train_accuracy: 0.0,
        out: args.out.display().to_string(),
    };

    let model = match kind {
        ModelKind::Template => {
            let temperature =
                resolve(&args.temperature, &file.temperature, DESK_TEMPLATE_TEMPERATURE);
            let blob_size = infer_blob_size(&dataset)?;
            echo.temperature = Some(temperature);
            AnyModel::Template(motion_templates::<f64>(&shape, blob_size, temperature)?)
        }
        ModelKind::Tinyconv => {
            let epochs = resolve(&args.epochs, &file.epochs, 100);
            let lr = resolve(&args.lr, &file.lr, 0.4);
            let seed = resolve(&args.seed, &file.seed, 1);
            let c_out = resolve(&args.conv_channels, &file.conv_channels, 4);
            let kt = resolve(&args.kernel_t, &file.kernel_t, 2);
            let khw = resolve(&args.kernel_hw, &file.kernel_hw, 3);
            echo.epochs = Some(epochs);
            echo.lr = Some(lr);
            echo.seed = Some(seed);
            echo.conv_channels = Some(c_out);
            echo.kernel = Some((kt, khw, khw));
            let classes = fep_core::data::NUM_CLASSES;
            let mut model: TinyConvModel<f64> =
                TinyConvModel::seeded_init(shape, c_out, (kt, khw, khw), classes, seed)?;
            let examples: Vec<(&Tensor<f64>, usize)> =
                dataset.iter().map(|lc| (&lc.clip, lc.label)).collect();
            echo.final_loss = Some(model.train_sgd(&examples, epochs, lr)?);
            AnyModel::TinyConv(model)
        }
    };

    let hits = dataset
        .iter()
        .filter(|lc| {
            model
                .predict(&lc.clip)
                .map(|p| p.label == lc.label)
                .unwrap_or(false)
        })
        .count();
    echo.train_accuracy = 100.0 * hits as f64 / dataset.len() as f64;

    save_model(&args.out, &model)?;
    write_json_sidecar(&args.out, &echo)?;
    println!(
        "saved {:?} model to {} (train accuracy {:.1}%)",
        kind,
        args.out.display(),
        echo.train_accuracy
    );
    Ok(())
}

/// Blob side length from the first clip's first-frame box count.
fn infer_blob_size(dataset: &[LabeledClip<f64>]) -> CliResult<usize> {
    let boxes = &dataset[0].boxes;
    let (h, w) = (boxes.shape()[1], boxes.shape()[2]);
    let count: usize = (0..h * w)
        .filter(|p| boxes.data()[*p] > 0.5)
        .count();
    let side = (count as f64).sqrt().round() as usize;
    if side == 0 || side * side != count {
        return Err(CliError::Usage(format!(
            "cannot infer a square blob from {} box pixels",
            count
        )));
    }
    Ok(side)
}

// ---------------------------------------------------------------------------
// explain

#[derive(serde::Serialize)]
struct ExplainEcho {
    data: String,
    model: String,
    clip_index: String,
    method: MethodFlag,
    target: TargetFlag,
    optimizer: OptimizerConfig,
}

#[allow(clippy::too_many_arguments)]
fn resolve_optimizer(
    epsilon: &Option<f64>,
    iterations: &Option<usize>,
    lambda: &Option<f64>,
    area: &Option<f64>,
    blur_sigma: &Option<f64>,
    mask_init: &Option<f64>,
    mask_step: &Option<usize>,
    mask_smooth_sigma: &Option<f64>,
    objective: Option<ObjectiveFlag>,
    seed: &Option<u64>,
    gfm: Option<GfmConfig>,
    file: &FileConfig,
) -> CliResult<OptimizerConfig> {
    let defaults = OptimizerConfig::default();
    let objective = match objective {
        Some(ObjectiveFlag::Probability) => ObjectiveMode::Probability,
        Some(ObjectiveFlag::Logit) => ObjectiveMode::Logit,
        None => match file.objective.as_deref() {
            Some("probability") | None => ObjectiveMode::Probability,
            Some("logit") => ObjectiveMode::Logit,
            Some(other) => {
                return Err(CliError::Usage(format!("unknown objective {:?}", other)))
            }
        },
    };
    let cfg = OptimizerConfig {
        epsilon: resolve(epsilon, &file.epsilon, defaults.epsilon),
        iterations: resolve(iterations, &file.iterations, defaults.iterations),
        lambda: resolve(lambda, &file.lambda, defaults.lambda),
        area: resolve(area, &file.area, defaults.area),
        gfm,
        blur_sigma: resolve(blur_sigma, &file.blur_sigma, defaults.blur_sigma),
        mask_init: resolve(mask_init, &file.mask_init, defaults.mask_init),
        mask_step: resolve(mask_step, &file.mask_step, defaults.mask_step),
        mask_smooth_sigma: resolve(
            mask_smooth_sigma,
            &file.mask_smooth_sigma,
            defaults.mask_smooth_sigma,
        ),
        objective,
        seed: resolve(seed, &file.seed, defaults.seed),
        record_trace: false,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_method(
    method: &Option<MethodFlag>,
    rl: &Option<f64>,
    rh: &Option<f64>,
    file: &FileConfig,
) -> CliResult<(MethodFlag, Option<GfmConfig>)> {
    let method = match method {
        Some(m) => *m,
        None => match file.method.as_deref() {
            Some("ep") => MethodFlag::Ep,
            Some("fep") => MethodFlag::Fep,
            Some(other) => return Err(CliError::Usage(format!("unknown method {:?}", other))),
            None => MethodFlag::Ep,
        },
    };
    match method {
        MethodFlag::Ep => {
            if rl.is_some() || rh.is_some() {
                return Err(CliError::Usage(
                    "--rl/--rh only apply to the frequency-filtered method".into(),
                ));
            }
            Ok((method, None))
        }
        MethodFlag::Fep => {
            let r_l = resolve_opt(rl, &file.rl)
                .ok_or_else(|| CliError::Usage("frequency-filtered method needs --rl".into()))?;
            let r_h = resolve(rh, &file.rh, 0.0);
            Ok((method, Some(GfmConfig::new(r_l, r_h)?)))
        }
    }
}

fn target_label(model: &AnyModel<f64>, lc: &LabeledClip<f64>, target: TargetFlag) -> CliResult<usize> {
    Ok(match target {
        TargetFlag::Predicted => model.predict(&lc.clip)?.label,
        TargetFlag::Truth => lc.label,
    })
}

fn cmd_explain(args: ExplainArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let dataset = load_dataset(&args.data)?;
    if dataset.is_empty() {
        return Err(CliError::Usage("dataset is empty".into()));
    }
    let model = load_model(&args.model)?;
    let (method, gfm) = resolve_method(&args.method, &args.rl, &args.rh, &file)?;
    let cfg = resolve_optimizer(
        &args.epsilon,
        &args.iterations,
        &args.lambda,
        &args.area,
        &args.blur_sigma,
        &args.mask_init,
        &args.mask_step,
        &args.mask_smooth_sigma,
        args.objective,
        &args.seed,
        gfm,
        &file,
    )?;
    let target = resolve_target(&args.target, &file)?;

    let indices: Vec<usize> = if args.clip_index == "all" {
        (0..dataset.len()).collect()
    } else {
        let idx: usize = args
            .clip_index
            .parse()
            .map_err(|_| CliError::Usage(format!("bad clip index {:?}", args.clip_index)))?;
        if idx >= dataset.len() {
            return Err(CliError::Usage(format!(
                "clip index {} out of range ({} clips)",
                idx,
                dataset.len()
            )));
        }
        vec![idx]
    };

    std::fs::create_dir_all(&args.out_dir)?;
    for &i in &indices {
        let lc = &dataset[i];
        let class = target_label(&model, lc, target)?;
        let mut run_cfg = cfg.clone();
        run_cfg.seed = cfg.seed.wrapping_add(i as u64);
        let result = explain(&model, &lc.clip, class, &run_cfg)?;
        write_explanation(&args.out_dir, i, &result)?;
        if args.heatmaps {
            let dir = args.out_dir.join(format!("heatmaps_{:04}", i));
            export_heatmap_frames(&lc.clip, &result.mask, &dir)?;
        }
    }

    let echo = ExplainEcho {
        data: args.data.display().to_string(),
        model: args.model.display().to_string(),
        clip_index: args.clip_index.clone(),
        method,
        target,
        optimizer: cfg,
    };
    write_json(&args.out_dir.join("config.json"), &echo)?;
    println!(
        "explained {} clip(s) into {}",
        indices.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn resolve_target(flag: &Option<TargetFlag>, file: &FileConfig) -> CliResult<TargetFlag> {
    Ok(match flag {
        Some(t) => *t,
        None => match file.target.as_deref() {
            Some("predicted") | None => TargetFlag::Predicted,
            Some("truth") => TargetFlag::Truth,
            Some(other) => return Err(CliError::Usage(format!("unknown target {:?}", other))),
        },
    })
}

fn write_explanation(dir: &Path, index: usize, result: &ExplanationResult<f64>) -> CliResult<()> {
    save_tensor(dir.join(format!("mask_{:04}.fept", index)), &result.mask)?;
    let mut csv = String::from("iteration,confidence,objective\n");
    for (i, (c, o)) in result
        .confidence_trace
        .iter()
        .zip(&result.objective_trace)
        .enumerate()
    {
        writeln!(csv, "{},{},{}", i, c, o).expect("string write");
    }
    std::fs::write(dir.join(format!("trace_{:04}.csv", index)), csv)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(serde::Serialize)]
struct EvaluateEcho {
    data: String,
    model: String,
    masks: String,
    tau: f64,
    deletion_steps: usize,
    deletion_mode: DeletionFlag,
    blur_sigma: f64,
    labels: TargetFlag,
}

#[derive(serde::Serialize)]
struct EvaluateOutput {
    config: EvaluateEcho,
    metrics: MetricReport,
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let dataset = load_dataset(&args.data)?;
    if dataset.is_empty() {
        return Err(CliError::Usage("dataset is empty".into()));
    }
    let model = load_model(&args.model)?;
    let tau = resolve(&args.tau, &file.tau, 0.5);
    let stc_cfg = StcConfig::new(tau)?;
    let deletion_steps = resolve(&args.deletion_steps, &file.deletion_steps, 16);
    let blur_sigma = resolve(&args.blur_sigma, &file.blur_sigma, 2.0);
    let deletion_flag = match args.deletion_mode {
        Some(m) => m,
        None => match file.deletion_mode.as_deref() {
            Some("zero") | None => DeletionFlag::Zero,
            Some("blur") => DeletionFlag::Blur,
            Some(other) => {
                return Err(CliError::Usage(format!("unknown deletion mode {:?}", other)))
            }
        },
    };
    let deletion_mode = match deletion_flag {
        DeletionFlag::Zero => DeletionMode::Zero,
        DeletionFlag::Blur => DeletionMode::Blur { sigma: blur_sigma },
    };
    let labels_mode = match args.labels {
        Some(l) => l,
        None => match file.labels.as_deref() {
            Some("predicted") | None => TargetFlag::Predicted,
            Some("truth") => TargetFlag::Truth,
            Some(other) => return Err(CliError::Usage(format!("unknown labels mode {:?}", other))),
        },
    };

    let masks = load_mask_dir(&args.masks, dataset.len())?;
    let clips: Vec<Tensor<f64>> = dataset.iter().map(|lc| lc.clip.clone()).collect();
    let labels: Vec<usize> = dataset
        .iter()
        .map(|lc| target_label(&model, lc, labels_mode))
        .collect::<CliResult<_>>()?;

    let dc = drop_in_confidence(&model, &clips, &masks, &labels)?;
    let acc = explanation_accuracy(&model, &clips, &masks, &labels)?;
    let mut stc_total = 0.0;
    let mut auc_total = 0.0;
    if let Some(dir) = &args.curves_dir {
        std::fs::create_dir_all(dir)?;
    }
    for (i, lc) in dataset.iter().enumerate() {
        stc_total += stc(&masks[i], &lc.boxes, &stc_cfg)?;
        let (curve, auc) =
            deletion_curve(&model, &lc.clip, &masks[i], labels[i], deletion_steps, deletion_mode)?;
        auc_total += auc;
        if let Some(dir) = &args.curves_dir {
            let mut csv = String::from("fraction,confidence\n");
            for (f, c) in &curve {
                writeln!(csv, "{},{}", f, c).expect("string write");
            }
            std::fs::write(dir.join(format!("deletion_{:04}.csv", i)), csv)?;
        }
    }

    let output = EvaluateOutput {
        config: EvaluateEcho {
            data: args.data.display().to_string(),
            model: args.model.display().to_string(),
            masks: args.masks.display().to_string(),
            tau,
            deletion_steps,
            deletion_mode: deletion_flag,
            blur_sigma,
            labels: labels_mode,
        },
        metrics: MetricReport {
            dc,
            acc,
            stc: stc_total / dataset.len() as f64,
            deletion_auc: auc_total / dataset.len() as f64,
            n_clips: dataset.len(),
        },
    };
    write_json(&args.out, &output)?;
    println!("clips          {}", output.metrics.n_clips);
    println!("drop in conf   {:.4}", output.metrics.dc);
    println!("accuracy       {:.4}", output.metrics.acc);
    println!("stc            {:.4}", output.metrics.stc);
    println!("deletion auc   {:.6}", output.metrics.deletion_auc);
    Ok(())
}

fn load_mask_dir(dir: &Path, expected: usize) -> CliResult<Vec<Tensor<f64>>> {
    let mut masks = Vec::with_capacity(expected);
    for i in 0..expected {
        let path = dir.join(format!("mask_{:04}.fept", i));
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "mask count mismatch: {} missing ({} clips in the dataset)",
                path.display(),
                expected
            )));
        }
        let mask = load_tensor(&path)?;
        // Accept T x H x W files (box volumes) as single-channel masks.
        let mask = match mask.shape() {
            [t, h, w] => mask.reshape(&[*t, 1, *h, *w])?,
            _ => mask,
        };
        masks.push(mask);
    }
    Ok(masks)
}

// ---------------------------------------------------------------------------
// ablate

#[derive(serde::Serialize)]
struct AblateEcho {
    data: String,
    model: String,
    rl_grid: String,
    rh_grid: String,
    tau: f64,
    optimizer: OptimizerConfig,
}

fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::Usage(format!("bad grid {:?}, expected start:end:step", text));
    let values = match parts.as_slice() {
        [single] => vec![single.parse::<f64>().map_err(|_| bad())?],
        [start, end, step] => {
            let start: f64 = start.parse().map_err(|_| bad())?;
            let end: f64 = end.parse().map_err(|_| bad())?;
            let step: f64 = step.parse().map_err(|_| bad())?;
            if step <= 0.0 || end < start {
                return Err(bad());
            }
            let mut out = Vec::new();
            let mut k = 0usize;
            loop {
                // Snap accumulated float error so grid points print cleanly.
                let v = ((start + k as f64 * step) * 1e9).round() / 1e9;
                if v > end + 1e-9 {
                    break;
                }
                out.push(v);
                k += 1;
            }
            out
        }
        _ => return Err(bad()),
    };
    if values.is_empty() {
        return Err(CliError::Usage(format!("grid {:?} is empty", text)));
    }
    Ok(values)
}

fn cmd_ablate(args: AblateArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let dataset = load_dataset(&args.data)?;
    if dataset.is_empty() {
        return Err(CliError::Usage("dataset is empty".into()));
    }
    let model = load_model(&args.model)?;

    let rl_text = args
        .rl_grid
        .clone()
        .ok_or_else(|| CliError::Usage("--rl-grid is required".into()))?;
    let rl_values = parse_grid(&rl_text)?;
    let rh_text = match (&args.rh_grid, &args.rh) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage("use either --rh or --rh-grid, not both".into()))
        }
        (Some(grid), None) => grid.clone(),
        (None, Some(v)) => format!("{}", v),
        (None, None) => "0".to_string(),
    };
    let rh_values = parse_grid(&rh_text)?;

    let mut pairs = Vec::new();
    for &rl in &rl_values {
        for &rh in &rh_values {
            pairs.push((rl, rh));
        }
    }

    let tau = resolve(&args.tau, &file.tau, 0.5);
    let cfg = resolve_optimizer(
        &args.epsilon,
        &args.iterations,
        &args.lambda,
        &args.area,
        &args.blur_sigma,
        &args.mask_init,
        &args.mask_step,
        &args.mask_smooth_sigma,
        None,
        &args.seed,
        None,
        &file,
    )?;

    let table = ablate(&model, &dataset, &pairs, &cfg, &StcConfig::new(tau)?)?;
    for ((rl, rh), reason) in &table.skipped {
        eprintln!("warning: skipped (r_l={}, r_h={}): {}", rl, rh, reason);
    }
    let mut csv = String::from("rl,rh,stc,dc,acc,tv\n");
    for row in &table.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.r_l, row.r_h, row.stc, row.dc, row.acc, row.tv
        )
        .expect("string write");
    }
    std::fs::write(&args.out, csv)?;
    write_json_sidecar(
        &args.out,
        &AblateEcho {
            data: args.data.display().to_string(),
            model: args.model.display().to_string(),
            rl_grid: rl_text,
            rh_grid: rh_text,
            tau,
            optimizer: cfg,
        },
    )?;
    println!(
        "wrote {} rows ({} skipped) to {}",
        table.rows.len(),
        table.skipped.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// dct

fn cmd_dct(args: DctArgs) -> CliResult<()> {
    let input = load_tensor(&args.input)?;
    if input.rank() != 3 {
        return Err(CliError::Usage(format!(
            "transform input must be rank 3, got rank {}",
            input.rank()
        )));
    }
    let plan = DctPlan::for_tensor(&input)?;
    let output = if args.inverse {
        plan.idct3(&input)?
    } else {
        plan.dct3(&input)?
    };
    save_tensor(&args.out, &output)?;
    println!(
        "{} transform: {} -> {}",
        if args.inverse { "inverse" } else { "forward" },
        args.input.display(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// shared output helpers

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("serialization failed: {}", e)))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes `<path>.config.json` next to an artifact.
fn write_json_sidecar<T: serde::Serialize>(artifact: &Path, value: &T) -> CliResult<()> {
    let mut sidecar = artifact.as_os_str().to_owned();
    sidecar.push(".config.json");
    write_json(Path::new(&sidecar), value)
}
