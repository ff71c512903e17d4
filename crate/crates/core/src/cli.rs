//! The `camlab` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data_io;
use crate::error::{Error, Result};
use crate::eval::{self, Baseline, CurveConfig, EvalConfig, MethodSelection, ScoreMode};
use crate::explain::{self, ContrastQuery, Paradigm};
use crate::network::{predict, Network};
use crate::training::{self, ShapeClass, TrainConfig};

pub const THREADS_ENV: &str = "CAMLAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "camlab",
    version,
    about = "Train small CNNs and explain them with Grad-CAM, Counterfactual-CAM and Contrast-CAM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic shapes dataset (train/ and test/ splits).
    GenData(GenDataArgs),
    /// Train the reference CNN on a dataset directory.
    Train(TrainArgs),
    /// Write explanation heatmaps for one image.
    Explain(ExplainArgs),
    /// Evaluate explanation maps over a dataset and write a report.
    Evaluate(EvaluateArgs),
    /// Evaluate every paradigm plus controls side by side, or tabulate
    /// existing reports.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Output directory; receives train/ and test/.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 400)]
    train_per_class: usize,
    #[arg(long, default_value_t = 100)]
    test_per_class: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 32)]
    size: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory (a split, or a gen-data root containing train/).
    #[arg(long)]
    data: PathBuf,
    /// Output weights file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = training::DEFAULT_LEARNING_RATE)]
    lr: f32,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long)]
    no_shuffle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ParadigmArg {
    Correlation,
    Counterfactual,
    Contrastive,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineArg {
    Mean,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Probabilistic,
    Accuracy,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Input image (binary PGM).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Output directory for the heatmaps.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ParadigmArg::Complete)]
    paradigm: ParadigmArg,
    /// Layer index to explain; defaults to the last spatial layer.
    #[arg(long)]
    layer: Option<usize>,
    /// Class to explain; defaults to the predicted class.
    #[arg(long)]
    class: Option<usize>,
    /// Contrast class; defaults to the runner-up class.
    #[arg(long)]
    contrast: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalOptions {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output report file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long)]
    contrast: Option<usize>,
    #[arg(long, default_value_t = eval::DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = BaselineArg::Mean)]
    baseline: BaselineArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Probabilistic)]
    mode: ModeArg,
    /// Binarize maps at this value before masking; continuous by default.
    #[arg(long)]
    threshold: Option<f32>,
    #[arg(long, default_value_t = eval::DEFAULT_COVERAGE_THRESHOLD)]
    coverage_threshold: f32,
    /// Seed of the random-map control.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    opts: EvalOptions,
    #[arg(long, value_enum, default_value_t = ParadigmArg::Complete)]
    paradigm: ParadigmArg,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    opts: EvalOptions,
    /// Include the uniform-map and random-map controls.
    #[arg(long)]
    controls: bool,
    /// Tabulate existing report files instead of evaluating.
    #[arg(long, num_args = 1..)]
    reports: Vec<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> std::result::Result<&'a T, Failure> {
    value
        .as_ref()
        .ok_or_else(|| Failure::Usage(format!("missing required flag {flag}")))
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn threads_from_env() -> std::result::Result<usize, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse().map_err(|_| {
            Failure::Usage(format!(
                "{THREADS_ENV} must be a non-negative integer, got {v:?}"
            ))
        }),
        _ => Ok(0),
    }
}

fn dispatch(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Explain(a) => explain_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Compare(a) => compare_cmd(a),
    }
}

pub fn class_name(net: &Network, class: usize) -> String {
    match ShapeClass::from_label(class) {
        Some(c) if net.num_classes() == training::SHAPE_CLASS_COUNT => c.name().to_string(),
        _ => format!("class{class}"),
    }
}

fn gen_data(a: GenDataArgs) -> std::result::Result<(), Failure> {
    let train = training::generate_shapes_dataset(a.seed, a.train_per_class, a.size)?;
    let test = training::generate_shapes_dataset(a.seed.wrapping_add(1), a.test_per_class, a.size)?;
    data_io::save_dataset(&a.out.join("train"), &train)?;
    data_io::save_dataset(&a.out.join("test"), &test)?;
    println!(
        "wrote {} training and {} test samples to {}",
        train.len(),
        test.len(),
        a.out.display()
    );
    Ok(())
}

/// A split directory, or the named split of a gen-data root.
fn resolve_split(dir: &Path, split: &str) -> PathBuf {
    if !dir.join(data_io::MANIFEST_NAME).is_file()
        && dir.join(split).join(data_io::MANIFEST_NAME).is_file()
    {
        dir.join(split)
    } else {
        dir.to_path_buf()
    }
}

fn train(a: TrainArgs) -> std::result::Result<(), Failure> {
    let config = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        shuffle: !a.no_shuffle,
    };
    config
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let samples = data_io::load_dataset(&resolve_split(&a.data, "train"))?;
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("training dataset is empty"))?;
    let (_, h, w) = first.image.chw()?;
    if h != w {
        return Err(Error::shape(format!("reference CNN needs square images, got {h}x{w}")).into());
    }
    let net = training::reference_cnn(h, a.seed)?;
    let (net, history) = training::train(&net, &samples, &config)?;
    for (i, e) in history.epochs.iter().enumerate() {
        println!(
            "epoch {:>3}: loss {:.6} accuracy {:.4}",
            i + 1,
            e.loss,
            e.accuracy
        );
    }
    data_io::save_weights(&net, &a.out)?;
    println!("saved weights to {}", a.out.display());
    Ok(())
}

fn resolve_layer(net: &Network, layer: Option<usize>) -> Result<usize> {
    match layer {
        Some(l) => Ok(l),
        None => explain::default_layer(net),
    }
}

fn explain_cmd(a: ExplainArgs) -> std::result::Result<(), Failure> {
    let model = require(&a.model, "--model")?;
    let image_path = require(&a.image, "--image")?;
    let out = require(&a.out, "--out")?;
    if a.paradigm == ParadigmArg::Complete && a.class.is_some() {
        return Err(Failure::Usage(
            "--class cannot be combined with --paradigm complete (it explains the predicted class)"
                .into(),
        ));
    }
    if matches!(
        a.paradigm,
        ParadigmArg::Correlation | ParadigmArg::Counterfactual
    ) && a.contrast.is_some()
    {
        return Err(Failure::Usage(
            "--contrast only applies to --paradigm contrastive or complete".into(),
        ));
    }
    let net = data_io::load_weights(model)?;
    let image = data_io::load_pgm_image(image_path)?;
    let layer = resolve_layer(&net, a.layer)?;
    let trace = net.forward(&image)?;
    let predicted = predict(trace.logits())?;
    let contrast = match a.contrast {
        Some(q) => q,
        None => explain::default_contrast(trace.logits())?,
    };
    fs::create_dir_all(out).map_err(Error::from)?;
    let name = |c: usize| class_name(&net, c);
    println!("predicted: {} (class {predicted})", name(predicted));

    let write = |method: &str, map: &crate::Tensor| -> Result<()> {
        let path = out.join(format!("{method}.pgm"));
        let (pgm, ppm) = data_io::export_map_tensor(map, &image, &path)?;
        println!("  wrote {} and {}", pgm.display(), ppm.display());
        Ok(())
    };

    match a.paradigm {
        ParadigmArg::Complete => {
            let c = explain::complete_explanation_traced(&net, &trace, layer, Some(contrast))?;
            for p in Paradigm::ALL {
                let q = (p == Paradigm::Contrastive).then(|| name(contrast));
                println!(
                    "{}: {}",
                    p.method_name(),
                    p.question(&name(predicted), q.as_deref())
                );
                write(p.method_name(), &c.map(p).upsampled)?;
            }
            println!("complete: all three questions at once");
            write(eval::COMPLETE_METHOD, &c.complete_upsampled()?)?;
        }
        ParadigmArg::Correlation | ParadigmArg::Counterfactual => {
            let class = a.class.unwrap_or(predicted);
            let (p, (_, map)) = if a.paradigm == ParadigmArg::Correlation {
                (
                    Paradigm::Correlation,
                    explain::grad_cam_traced(&net, &trace, class, layer)?,
                )
            } else {
                (
                    Paradigm::Counterfactual,
                    explain::counterfactual_cam_traced(&net, &trace, class, layer)?,
                )
            };
            println!("{}: {}", p.method_name(), p.question(&name(class), None));
            write(p.method_name(), &map.upsampled)?;
        }
        ParadigmArg::Contrastive => {
            let class = a.class.unwrap_or(predicted);
            let query = ContrastQuery {
                predicted: class,
                contrast,
            };
            let (_, map) = explain::contrast_cam_traced(&net, &trace, query, layer)?;
            let p = Paradigm::Contrastive;
            println!(
                "{}: {}",
                p.method_name(),
                p.question(&name(class), Some(&name(contrast)))
            );
            write(p.method_name(), &map.upsampled)?;
        }
    }
    Ok(())
}

struct Loaded {
    net: Network,
    samples: Vec<training::LabeledSample>,
    layer: usize,
    cfg: EvalConfig,
    echo: BTreeMap<String, String>,
}

fn load_for_eval(o: &EvalOptions) -> std::result::Result<Loaded, Failure> {
    let model = require(&o.model, "--model")?;
    let data = require(&o.data, "--data")?;
    require(&o.out, "--out")?;
    if o.steps < 2 {
        return Err(Failure::Usage(format!(
            "--steps must be at least 2, got {}",
            o.steps
        )));
    }
    if !(o.coverage_threshold > 0.0 && o.coverage_threshold < 1.0) {
        return Err(Failure::Usage(
            "--coverage-threshold must be in (0,1)".into(),
        ));
    }
    let threads = threads_from_env()?;
    let net = data_io::load_weights(model)?;
    let samples = data_io::load_dataset(&resolve_split(data, "test"))?;
    if let Some(s) = samples.iter().find(|s| s.label >= net.num_classes()) {
        return Err(Error::invalid(format!(
            "dataset label {} out of range for {} classes",
            s.label,
            net.num_classes()
        ))
        .into());
    }
    if let Some(q) = o.contrast {
        if q >= net.num_classes() {
            return Err(Failure::Usage(format!("--contrast {q} out of range")));
        }
    }
    let layer = resolve_layer(&net, o.layer)?;
    let baseline = match o.baseline {
        BaselineArg::Mean => Baseline::dataset_mean(&samples)?,
        BaselineArg::Zeros => Baseline::Zeros,
    };
    let mode = match o.mode {
        ModeArg::Probabilistic => ScoreMode::Probabilistic,
        ModeArg::Accuracy => ScoreMode::Accuracy,
    };
    let cfg = EvalConfig {
        curve: CurveConfig {
            mode,
            steps: o.steps,
            baseline,
        },
        mask_threshold: o.threshold,
        coverage_threshold: o.coverage_threshold,
        threads,
    };
    let mut echo = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        echo.insert(k.to_string(), v);
    };
    put("baseline", format!("{:?}", o.baseline).to_lowercase());
    put("mode", format!("{:?}", o.mode).to_lowercase());
    put("steps", o.steps.to_string());
    put("layer", layer.to_string());
    put(
        "contrast",
        o.contrast
            .map_or_else(|| "runner-up".to_string(), |q| q.to_string()),
    );
    put(
        "mask_threshold",
        o.threshold
            .map_or_else(|| "continuous".to_string(), |t| t.to_string()),
    );
    put("coverage_threshold", o.coverage_threshold.to_string());
    Ok(Loaded {
        net,
        samples,
        layer,
        cfg,
        echo,
    })
}

fn run_evaluation(
    o: &EvalOptions,
    selection: MethodSelection,
    extra: &[(&str, String)],
) -> std::result::Result<(), Failure> {
    let l = load_for_eval(o)?;
    let mut report =
        eval::evaluate_dataset(&l.net, &l.samples, l.layer, o.contrast, &selection, &l.cfg)?;
    report.seed = Some(o.seed);
    report.config = l.echo;
    for (k, v) in extra {
        report.config.insert(k.to_string(), v.clone());
    }
    let out = o.out.as_ref().expect("checked");
    data_io::write_report(&report, out)?;
    print!(
        "{}",
        data_io::comparison_table(&[("value".to_string(), report)])
    );
    println!("wrote report to {}", out.display());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> std::result::Result<(), Failure> {
    let (paradigms, complete) = match a.paradigm {
        ParadigmArg::Complete => (Paradigm::ALL.to_vec(), true),
        ParadigmArg::Correlation => (vec![Paradigm::Correlation], false),
        ParadigmArg::Counterfactual => (vec![Paradigm::Counterfactual], false),
        ParadigmArg::Contrastive => (vec![Paradigm::Contrastive], false),
    };
    let selection = MethodSelection {
        paradigms,
        complete,
        controls: None,
    };
    let paradigm = format!("{:?}", a.paradigm).to_lowercase();
    run_evaluation(&a.opts, selection, &[("paradigm", paradigm)])
}

fn compare_cmd(a: CompareArgs) -> std::result::Result<(), Failure> {
    if !a.reports.is_empty() {
        if a.opts.model.is_some() || a.opts.data.is_some() {
            return Err(Failure::Usage(
                "--reports cannot be combined with --model/--data".into(),
            ));
        }
        let mut loaded = Vec::new();
        for p in &a.reports {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            loaded.push((name, data_io::read_report(p)?));
        }
        print!("{}", data_io::comparison_table(&loaded));
        return Ok(());
    }
    let selection = MethodSelection {
        paradigms: Paradigm::ALL.to_vec(),
        complete: true,
        controls: a.controls.then_some(a.opts.seed),
    };
    run_evaluation(&a.opts, selection, &[("controls", a.controls.to_string())])
}
