//! `mothscan`: train, evaluate and run the sticky-trap moth detector.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mothscan_core::dataset::{cross_validate, load_dataset, write_dataset, PatchRecord};
use mothscan_core::pipeline::{detect_image, render_overlay, train_model, training_records, PipelineConfig};
use mothscan_core::svm::SvmModel;
use mothscan_core::synth::{patch_set, scene, SceneSpec};
use mothscan_core::{Error, GrayImage};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "mothscan", version, about = "Moth detection and counting on sticky-trap images")]
struct Cli {
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    /// JSON configuration; missing fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the moth classifier on a patch dataset.
    Train(TrainArgs),
    /// Cross-validate the classifier and print the results JSON.
    Evaluate(EvaluateArgs),
    /// Detect, separate and classify insects in one image.
    Detect(DetectArgs),
    /// Generate a synthetic patch dataset and trap scenes.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_name = "MODEL")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    #[arg(long, value_name = "MODEL")]
    model: PathBuf,
    #[arg(long, value_name = "OUT.png")]
    overlay: Option<PathBuf>,
    #[arg(long, value_name = "OUT.json")]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Patches per class.
    #[arg(long, default_value_t = 100)]
    patches: usize,
    #[arg(long, default_value_t = 10)]
    scenes: usize,
}

enum Failure {
    Data(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Data(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))
}

fn train(cfg: &PipelineConfig, args: &TrainArgs) -> Result<u8, Failure> {
    let mut cfg = cfg.clone();
    if let Some(seed) = args.seed {
        cfg.train_seed = seed;
    }
    let records = load_dataset(&args.data)?;
    let outcome = train_model(&records, &cfg)?;
    outcome.model.save(&args.out)?;
    let summary = serde_json::json!({
        "model": args.out,
        "records": records.len(),
        "support_vectors": outcome.model.svs.len(),
        "converged": outcome.converged,
        "updates": outcome.updates,
        "objective": outcome.objective,
        "config_hash": cfg.hash(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serialises"));
    if outcome.converged {
        Ok(0)
    } else {
        eprintln!("warning: optimiser stopped after {} updates without converging", outcome.updates);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn evaluate(cfg: &PipelineConfig, args: &EvaluateArgs) -> Result<u8, Failure> {
    let mut cfg = cfg.clone();
    if let Some(k) = args.folds {
        cfg.cv.folds = k;
    }
    if let Some(seed) = args.seed {
        cfg.cv.seed = seed;
    }
    if cfg.cv.folds < 2 {
        return Err(Failure::Usage("--folds must be at least 2".into()));
    }
    let records = training_records(&load_dataset(&args.data)?, &cfg)?;
    let report = cross_validate(&records, &cfg.hcs, &cfg.svm, &cfg.cv)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    Ok(0)
}

fn detect(cfg: &PipelineConfig, args: &DetectArgs) -> Result<u8, Failure> {
    let model = SvmModel::load(&args.model)?;
    let img = GrayImage::load(&args.image)?;
    let report = detect_image(&img, &model, cfg)?;
    let json = report.to_json();
    if let Some(path) = &args.json {
        write_text(path, &json)?;
    }
    if let Some(path) = &args.overlay {
        render_overlay(&img, &report.detections)
            .save(path)
            .map_err(|e| Failure::Data(Error::Image {
                path: path.clone(),
                source: e,
            }))?;
    }
    println!("{json}");
    Ok(0)
}

fn synth(cfg: &PipelineConfig, args: &SynthArgs) -> Result<u8, Failure> {
    let records: Vec<PatchRecord> = patch_set(args.patches, args.patches, cfg.hcs.window, args.seed)
        .into_iter()
        .enumerate()
        .map(|(i, (img, label))| {
            let kind = if label > 0 { "moth" } else { "other" };
            PatchRecord::original(format!("{kind}_{i:04}"), img, label)
        })
        .collect();
    write_dataset(args.out.join("patches"), &records)?;
    let dir = args.out.join("scenes");
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Data(Error::Io {
        path: dir.clone(),
        source: e,
    }))?;
    for i in 0..args.scenes {
        let sc = scene(&SceneSpec::default(), args.seed.wrapping_add(i as u64));
        sc.image.save_png(dir.join(format!("scene_{i:02}.png")))?;
        let truth = serde_json::to_string_pretty(&sc.truth()).expect("truth serialises");
        write_text(&dir.join(format!("scene_{i:02}.json")), &truth)?;
    }
    println!(
        "wrote {} patches to {} and {} scenes to {}",
        records.len(),
        args.out.join("patches").display(),
        args.scenes,
        dir.display()
    );
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if cli.dump_config {
        println!("{}", cfg.to_json());
        return Ok(0);
    }
    match &cli.command {
        Some(Command::Train(a)) => train(&cfg, a),
        Some(Command::Evaluate(a)) => evaluate(&cfg, a),
        Some(Command::Detect(a)) => detect(&cfg, a),
        Some(Command::Synth(a)) => synth(&cfg, a),
        None => Err(Failure::Usage("no subcommand given; see --help".into())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
