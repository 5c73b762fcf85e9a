//! Pipeline driver: dataset synthesis, the three training stages,
//! evaluation, the finite-difference gradient suite, and model
//! descriptions, all from one key=value config with flag overrides.
//!
//! Exit codes: 0 success, 2 config error, 3 data/model error,
//! 4 training divergence, 5 gradient-tolerance breach.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dkamc::attributes::class_attribute_matrix;
use dkamc::config::RunConfig;
use dkamc::error::Error;
use dkamc::eval::{
    baseline_classifier, dual_driven_classifier, evaluate, export_report, pair_rates_csv, pca_2d,
    AccuracyCurve, ConfusionMatrix,
};
use dkamc::models::{checkpoint, AttributeModel, Model, TransformNet, VisualModel};
use dkamc::nn::gradcheck;
use dkamc::signal::{load_dataset, save_dataset, synthesize_dataset, Dataset};
use dkamc::training::{
    frames_to_tensor, pretrain_attribute, pretrain_visual, split_dataset, train_embedding,
    EpochStats, TrainReport,
};

#[derive(Parser)]
#[command(
    name = "dkamc",
    about = "Dual-driven modulation classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// One flag per config key; flags override the config file.
#[derive(Args, Default)]
struct Overrides {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    snr_grid_db: Option<String>,
    #[arg(long)]
    frames_per_class_per_snr: Option<String>,
    #[arg(long)]
    samples_per_symbol: Option<String>,
    #[arg(long)]
    pulse: Option<String>,
    #[arg(long)]
    rng_seed: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    epochs_visual: Option<String>,
    #[arg(long)]
    epochs_attr: Option<String>,
    #[arg(long)]
    epochs_embed: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lambda_reg: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    train_fraction: Option<String>,
    #[arg(long)]
    dataset_path: Option<String>,
    #[arg(long)]
    checkpoint_dir: Option<String>,
    #[arg(long)]
    report_dir: Option<String>,
    #[arg(long)]
    pca_snr_db: Option<String>,
    /// intra-stage parallelism (1 = deterministic default)
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let pairs: [(&str, &Option<String>); 19] = [
            ("classes", &self.classes),
            ("snr_grid_db", &self.snr_grid_db),
            ("frames_per_class_per_snr", &self.frames_per_class_per_snr),
            ("samples_per_symbol", &self.samples_per_symbol),
            ("pulse", &self.pulse),
            ("rng_seed", &self.rng_seed),
            ("lr", &self.lr),
            ("momentum", &self.momentum),
            ("epochs_visual", &self.epochs_visual),
            ("epochs_attr", &self.epochs_attr),
            ("epochs_embed", &self.epochs_embed),
            ("batch_size", &self.batch_size),
            ("lambda_reg", &self.lambda_reg),
            ("seed", &self.seed),
            ("train_fraction", &self.train_fraction),
            ("dataset_path", &self.dataset_path),
            ("checkpoint_dir", &self.checkpoint_dir),
            ("report_dir", &self.report_dir),
            ("pca_snr_db", &self.pca_snr_db),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.apply_env()?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize and save a labeled I/Q dataset
    Gen(Overrides),
    /// Cross-entropy pretraining of the visual model
    PretrainVisual(Overrides),
    /// MSE pretraining of the attribute model
    PretrainAttr(Overrides),
    /// Train the transformation subnet against frozen checkpoints
    TrainEmbed(Overrides),
    /// Evaluate both classifiers and write the report bundle
    Eval(Overrides),
    /// Run the finite-difference gradient suite
    Gradcheck,
    /// Print a model's layer/shape table
    Describe {
        /// visual | attr | tnet
        #[arg(long)]
        model: String,
        /// optional checkpoint whose entries to list
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn exit_code(err: &Error) -> ExitCode {
    match err {
        Error::InvalidConfig(_) | Error::BadFraction(_) => ExitCode::from(2),
        Error::Divergence { .. } => ExitCode::from(4),
        _ => ExitCode::from(3),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(o) => o.resolve().and_then(|c| cmd_gen(&c)),
        Command::PretrainVisual(o) => o.resolve().and_then(|c| cmd_pretrain_visual(&c)),
        Command::PretrainAttr(o) => o.resolve().and_then(|c| cmd_pretrain_attr(&c)),
        Command::TrainEmbed(o) => o.resolve().and_then(|c| cmd_train_embed(&c)),
        Command::Eval(o) => o.resolve().and_then(|c| cmd_eval(&c)),
        Command::Gradcheck => return cmd_gradcheck(),
        Command::Describe {
            model,
            checkpoint,
            overrides,
        } => overrides
            .resolve()
            .and_then(|c| cmd_describe(&c, model, checkpoint.as_deref())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn cmd_gen(config: &RunConfig) -> Result<(), Error> {
    let dataset = synthesize_dataset(&config.channel, &config.classes)?;
    if let Some(parent) = config.dataset_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_dataset(&dataset, &config.dataset_path)?;
    let snapshot_dir = config
        .dataset_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    config.write_snapshot(snapshot_dir)?;
    println!(
        "wrote {} frames ({} classes, {} SNR bins) to {}",
        dataset.frames.len(),
        dataset.num_classes(),
        config.channel.snr_grid_db.len(),
        config.dataset_path.display()
    );
    Ok(())
}

fn load_split(config: &RunConfig) -> Result<(Dataset, Dataset), Error> {
    let dataset = load_dataset(&config.dataset_path)?;
    split_dataset(&dataset, config.train.train_fraction, config.train.seed)
}

fn report_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_loss,val_metric,seconds\n");
    for e in &report.epochs {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.3}\n",
            e.epoch, e.train_loss, e.val_metric, e.seconds
        ));
    }
    out
}

fn write_stage_outputs(
    config: &RunConfig,
    stage: &str,
    report: &TrainReport,
    model: &dyn Model<f32>,
) -> Result<(), Error> {
    std::fs::create_dir_all(&config.checkpoint_dir)?;
    checkpoint::save_model(&config.checkpoint_dir.join(format!("{stage}.dkw")), model)?;
    std::fs::write(
        config.checkpoint_dir.join(format!("loss_{stage}.csv")),
        report_csv(report),
    )?;
    config.write_snapshot(&config.checkpoint_dir)?;
    if let Some(last) = report.epochs.last() {
        println!(
            "{stage}: {} epochs, final loss {:.6}, val metric {:.6}",
            report.epochs.len(),
            last.train_loss,
            last.val_metric
        );
    }
    Ok(())
}

fn cmd_pretrain_visual(config: &RunConfig) -> Result<(), Error> {
    let (train, _) = load_split(config)?;
    let mut model = VisualModel::<f32>::new(config.classes.len());
    model.init(config.train.seed);
    let report = pretrain_visual(&mut model, &train, &config.train)?;
    write_stage_outputs(config, "visual", &report, &model)
}

fn cmd_pretrain_attr(config: &RunConfig) -> Result<(), Error> {
    let (train, _) = load_split(config)?;
    let cam = class_attribute_matrix(&config.classes)?;
    let mut model = AttributeModel::<f32>::new();
    model.init(config.train.seed.wrapping_add(1));
    let report = pretrain_attribute(&mut model, &train, &cam, &config.train)?;
    write_stage_outputs(config, "attribute", &report, &model)
}

fn cmd_train_embed(config: &RunConfig) -> Result<(), Error> {
    let (train, _) = load_split(config)?;
    let mut visual = VisualModel::<f32>::new(config.classes.len());
    checkpoint::load_into(&config.checkpoint_dir.join("visual.dkw"), &mut visual)?;
    let mut attr = AttributeModel::<f32>::new();
    checkpoint::load_into(&config.checkpoint_dir.join("attribute.dkw"), &mut attr)?;
    let mut tnet = TransformNet::<f32>::new();
    tnet.init(config.train.seed.wrapping_add(2));
    let report = train_embedding(&visual, &attr, &mut tnet, &train, &config.train)?;
    write_stage_outputs(config, "tnet", &report, &tnet)
}

/// Re-read a stage's loss CSV so eval can bundle all loss curves.
fn read_stage_report(path: &Path, stage: &str) -> Option<TrainReport> {
    let text = std::fs::read_to_string(path).ok()?;
    let mut epochs = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return None;
        }
        epochs.push(EpochStats {
            epoch: cols[0].parse().ok()?,
            train_loss: cols[1].parse().ok()?,
            val_metric: cols[2].parse().ok()?,
            seconds: cols[3].parse().ok()?,
        });
    }
    Some(TrainReport {
        stage: stage.to_string(),
        epochs,
    })
}

fn cmd_eval(config: &RunConfig) -> Result<(), Error> {
    let (_, test) = load_split(config)?;
    let cam = class_attribute_matrix(&config.classes)?;
    let mut visual = VisualModel::<f32>::new(config.classes.len());
    checkpoint::load_into(&config.checkpoint_dir.join("visual.dkw"), &mut visual)?;
    let mut tnet = TransformNet::<f32>::new();
    checkpoint::load_into(&config.checkpoint_dir.join("tnet.dkw"), &mut tnet)?;

    let mut dual = dual_driven_classifier(&visual, &tnet, &cam, test.frame_length)?;
    let dual_out = evaluate("dual_driven", &test, |frames| dual(frames))?;
    drop(dual);
    let mut baseline = baseline_classifier(&visual, test.frame_length);
    let base_out = evaluate("baseline", &test, |frames| baseline(frames))?;
    drop(baseline);

    // PCA scatter of visual features at one high SNR
    let pca_frames: Vec<_> = test
        .frames
        .iter()
        .filter(|f| i32::from(f.snr_db) == config.pca_snr_db)
        .collect();
    let scatter = if pca_frames.len() >= 3 {
        let x = frames_to_tensor::<f32>(&pca_frames, test.frame_length);
        let (feats, _) = visual.forward_eval(&x)?;
        let labels: Vec<usize> = pca_frames.iter().map(|f| f.label).collect();
        Some(pca_2d(&feats, &labels)?)
    } else {
        None
    };

    let losses: Vec<TrainReport> = [
        ("visual", "visual"),
        ("attribute", "attribute"),
        ("tnet", "embedding"),
    ]
    .iter()
    .filter_map(|(file, stage)| {
        read_stage_report(
            &config.checkpoint_dir.join(format!("loss_{file}.csv")),
            stage,
        )
    })
    .collect();

    // confusion rates for the hardest class pairs, both classifiers side by side
    let pairs: Vec<(usize, usize)> = (0..test.num_classes())
        .flat_map(|a| ((a + 1)..test.num_classes()).map(move |b| (a, b)))
        .filter(|&(a, b)| {
            let n = &test.class_names;
            (n[a] == "16QAM" && n[b] == "64QAM") || (n[a] == "64QAM" && n[b] == "16QAM")
        })
        .collect();
    if !pairs.is_empty() {
        std::fs::create_dir_all(&config.report_dir)?;
        let csv = pair_rates_csv(
            &pairs,
            &[
                ("dual_driven", &dual_out.overall),
                ("baseline", &base_out.overall),
            ],
            &test.class_names,
        )?;
        std::fs::write(config.report_dir.join("pair_rates.csv"), &csv)?;
        print!("{csv}");
    }

    let curves: Vec<AccuracyCurve> = vec![dual_out.curve.clone(), base_out.curve.clone()];
    let mut matrices: Vec<(String, ConfusionMatrix)> = vec![
        ("dual_driven".into(), dual_out.overall),
        ("baseline".into(), base_out.overall),
    ];
    for cm in dual_out.per_snr {
        let snr = cm.snr_filter.unwrap();
        matrices.push((format!("dual_driven_snr{snr}"), cm));
    }
    export_report(
        &config.report_dir,
        &curves,
        &matrices,
        scatter.as_ref(),
        &losses,
        &test.class_names,
    )?;
    config.write_snapshot(&config.report_dir)?;
    for curve in &curves {
        let overall: f64 = curve
            .points
            .iter()
            .map(|p| p.accuracy * p.n as f64)
            .sum::<f64>()
            / curve.points.iter().map(|p| p.n as f64).sum::<f64>();
        println!("{}: overall accuracy {:.4}", curve.classifier, overall);
    }
    println!("report written to {}", config.report_dir.display());
    Ok(())
}

fn cmd_gradcheck() -> ExitCode {
    let seeds: Vec<u64> = (0..20).map(|i| 9000 + i).collect();
    let mut failed = false;
    let mut run = |label: &str, results: Result<Vec<gradcheck::CaseResult>, Error>| match results {
        Ok(results) => {
            for r in results {
                let status = if r.pass() { "ok" } else { "FAIL" };
                if !r.pass() {
                    failed = true;
                }
                println!(
                    "{label} {:<14} max_rel_err {:.3e} (tol {:.0e}, {} coords) {status}",
                    r.name, r.max_rel_err, r.tolerance, r.coords_checked
                );
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            failed = true;
        }
    };
    run("f32", gradcheck::run_suite::<f32>(&seeds, 1e-3));
    run("f64", gradcheck::run_suite::<f64>(&seeds, 1e-5));
    run(
        "f64",
        gradcheck::composite_attribute_check(42).map(|r| vec![r]),
    );
    run(
        "f64",
        gradcheck::composite_visual_check(43).map(|r| vec![r]),
    );
    if failed {
        ExitCode::from(5)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_describe(config: &RunConfig, model: &str, ckpt: Option<&Path>) -> Result<(), Error> {
    let rows: Vec<[String; 3]> = match model {
        "visual" => VisualModel::<f32>::new(config.classes.len()).layer_table(),
        "attr" => AttributeModel::<f32>::new().layer_table(),
        "tnet" => vec![
            ["input".into(), "-".into(), "6".into()],
            ["fc1/relu".into(), "6x64".into(), "64".into()],
            ["fc2/relu".into(), "64x128".into(), "128".into()],
        ],
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown model {other:?} (expected visual, attr, or tnet)"
            )))
        }
    };
    println!("{:<18} {:<28} {}", "layer", "kernel", "output");
    for [name, kernel, output] in rows {
        println!("{name:<18} {kernel:<28} {output}");
    }
    if let Some(path) = ckpt {
        println!("\ncheckpoint {}:", path.display());
        for (name, tensor) in checkpoint::load(path)? {
            let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
            println!("  {name} [{}]", dims.join("x"));
        }
    }
    Ok(())
}
