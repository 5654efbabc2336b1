use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use benk::baselines::{BaseLearner, GaussianBeranConfig, SLearner, TLearner, XLearner};
use benk::bench::{
    emit_report, evaluate_predictor, preset, run_experiment, tune_hyperparameters,
    ExperimentConfig, ModelId, ReportFormat,
};
use benk::datagen::{generate_trial, GenConfig, LabeledTrial};
use benk::io::{
    read_datasets_csv, read_test_points_csv, write_datasets_csv, write_test_points_csv,
};
use benk::kernel::{gradient_check, Activation, KernelNetConfig};
use benk::trainer::{predict_cate, train_with_validation, TrainConfig, TrainedBenk};
use benk::SurvivalDataset;

#[derive(Parser)]
#[command(
    name = "benk",
    version,
    about = "Neural-kernel Beran estimator for treatment effects on survival data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON file or preset name (fig_size, fig_noise, fig_q, fig_p, table2).
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory; stdout when absent where that makes sense.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    /// Worker threads (0 = rayon default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trial: train.csv, validation.csv, test.csv.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a BENK model on the controls of a dataset CSV.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// RMSE of a model against the true effects of a test-point CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Saved BENK model, or a baseline name (T-NW, S-Cox, ...).
        #[arg(long)]
        model: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Validation controls, required to tune baselines.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Run a sweep and write the RMSE report.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Fill the seconds column with wall-clock time.
        #[arg(long)]
        timing: bool,
    },
    /// Compare analytic and finite-difference gradients of the kernel network.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_value = "8,8")]
        hidden: Vec<usize>,
        #[arg(long, default_value = "tanh")]
        activation: Activation,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let threads = match &cli.command {
        Command::Generate { common }
        | Command::Train { common, .. }
        | Command::Evaluate { common, .. }
        | Command::Benchmark { common, .. }
        | Command::Gradcheck { common, .. } => common.threads,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate { common } => generate(&common),
        Command::Train {
            common,
            data,
            validation,
        } => train(&common, &data, validation.as_deref()),
        Command::Evaluate {
            common,
            model,
            data,
            test,
            validation,
        } => evaluate(&common, &model, &data, &test, validation.as_deref()),
        Command::Benchmark { common, timing } => benchmark(&common, timing),
        Command::Gradcheck {
            common,
            trials,
            hidden,
            activation,
            tolerance,
        } => gradcheck(&common, trials, hidden, activation, tolerance),
    }
}

fn format_of(common: &Common) -> ReportFormat {
    common.format.parse().expect("clap restricts the format")
}

fn load_experiment(name: &str) -> Result<ExperimentConfig> {
    if let Some(cfg) = preset(name) {
        return Ok(cfg?);
    }
    let text = fs::read_to_string(name).with_context(|| format!("reading {name}"))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

/// A generator config, or the generator section of an experiment config.
fn load_generator(name: Option<&str>) -> Result<GenConfig> {
    let Some(name) = name else {
        return Ok(GenConfig::default());
    };
    if let Some(cfg) = preset(name) {
        return Ok(cfg?.generator);
    }
    let text = fs::read_to_string(name).with_context(|| format!("reading {name}"))?;
    if let Ok(exp) = ExperimentConfig::from_json(&text) {
        return Ok(exp.generator);
    }
    serde_json::from_str(&text).with_context(|| format!("parsing {name}"))
}

fn load_train(name: Option<&str>) -> Result<TrainConfig> {
    let Some(name) = name else {
        return Ok(TrainConfig::default());
    };
    if let Some(cfg) = preset(name) {
        return Ok(cfg?.train);
    }
    let text = fs::read_to_string(name).with_context(|| format!("reading {name}"))?;
    if let Ok(exp) = ExperimentConfig::from_json(&text) {
        return Ok(exp.train);
    }
    serde_json::from_str(&text).with_context(|| format!("parsing {name}"))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn generate(common: &Common) -> Result<ExitCode> {
    let mut cfg = load_generator(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let trial = generate_trial(&cfg)?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    write_datasets_csv(
        fs::File::create(dir.join("train.csv"))?,
        &[&trial.controls, &trial.treatments],
    )?;
    write_datasets_csv(
        fs::File::create(dir.join("validation.csv"))?,
        &[&trial.validation_controls],
    )?;
    write_test_points_csv(fs::File::create(dir.join("test.csv"))?, &trial.test_points)?;
    eprintln!(
        "wrote {} controls, {} treatments, {} validation controls, {} test points to {}",
        trial.controls.len(),
        trial.treatments.len(),
        trial.validation_controls.len(),
        trial.test_points.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn read_split(path: &Path) -> Result<(Option<SurvivalDataset>, Option<SurvivalDataset>)> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_datasets_csv(f)?)
}

fn read_controls(path: &Path) -> Result<SurvivalDataset> {
    read_split(path)?
        .0
        .with_context(|| format!("{} has no control rows", path.display()))
}

fn train(common: &Common, data: &Path, validation: Option<&Path>) -> Result<ExitCode> {
    let mut cfg = load_train(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let controls = read_controls(data)?;
    let val = validation.map(read_controls).transpose()?;
    let model = train_with_validation(&controls, val.as_ref(), &cfg)?;
    eprintln!(
        "trained on {} controls, kept epoch {}",
        controls.len(),
        model.selected_epoch
    );
    write_output(common.out.as_deref(), &model.to_text()?)?;
    Ok(ExitCode::SUCCESS)
}

fn evaluate(
    common: &Common,
    model: &str,
    data: &Path,
    test: &Path,
    validation: Option<&Path>,
) -> Result<ExitCode> {
    let (controls, treatments) = read_split(data)?;
    let controls = controls.context("dataset has no control rows")?;
    let treatments = treatments.context("dataset has no treatment rows")?;
    let test_points = read_test_points_csv(fs::File::open(test)?)?;
    let validation_controls = match validation {
        Some(p) => read_controls(p)?,
        None => controls.clone(),
    };
    let trial = LabeledTrial {
        controls,
        treatments,
        validation_controls,
        test_points,
        control_latent: vec![],
        treatment_latent: vec![],
        log_coeffs: vec![],
    };
    let (c, t) = (&trial.controls, &trial.treatments);
    let (name, rmse, hyper) = match model.parse::<ModelId>() {
        Ok(ModelId::Benk) => bail!("pass a saved model file to evaluate BENK"),
        Ok(id) => {
            if validation.is_none() {
                bail!("--validation is required to tune {id}");
            }
            let sel = tune_hyperparameters(id, &trial)?;
            let base = match (sel.bandwidth, sel.ridge) {
                (Some(b), _) => BaseLearner::GaussianBeran(GaussianBeranConfig::new(b)?),
                (None, Some(r)) => BaseLearner::Cox { ridge: r },
                _ => unreachable!("selection names a base learner"),
            };
            let rmse = match id {
                ModelId::TNw | ModelId::TCox => {
                    let l = TLearner::fit(&base, c, t)?;
                    evaluate_predictor(&trial, |z| l.cate(z))?
                }
                ModelId::SNw | ModelId::SCox => {
                    let l = SLearner::fit(&base, c, t)?;
                    evaluate_predictor(&trial, |z| l.cate(z))?
                }
                _ => {
                    let bw = sel.tau_bandwidth.context("missing tau bandwidth")?;
                    let l = XLearner::fit(&base, c, t, bw, None)?;
                    evaluate_predictor(&trial, |z| l.cate(z))?
                }
            };
            (id.name().to_string(), rmse, sel.to_string())
        }
        Err(_) => {
            let text = fs::read_to_string(model).with_context(|| format!("reading {model}"))?;
            let m = TrainedBenk::from_text(&text)?;
            let rmse = evaluate_predictor(&trial, |z| predict_cate(&m, c, t, z))?;
            (
                "BENK".to_string(),
                rmse,
                format!("epoch={}", m.selected_epoch),
            )
        }
    };
    let text = match format_of(common) {
        ReportFormat::Csv => format!("model,rmse,hyperparams\n{name},{rmse},{hyper}\n"),
        ReportFormat::Json => format!(
            "{}\n",
            serde_json::json!({"model": name, "rmse": rmse, "hyperparams": hyper})
        ),
    };
    write_output(common.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn benchmark(common: &Common, timing: bool) -> Result<ExitCode> {
    let name = common.config.as_deref().context("--config is required")?;
    let mut cfg = load_experiment(name)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let report = run_experiment(&cfg)?;
    write_output(
        common.out.as_deref(),
        &emit_report(&report, format_of(common), timing)?,
    )?;
    let failed = report.failed_cells();
    if failed > 0 {
        for r in report.records.iter().filter(|r| r.rmse.is_none()) {
            eprintln!(
                "failed: {} {}={} rep {}: {}",
                r.model,
                report.sweep_axis.name(),
                r.sweep_value,
                r.repetition,
                r.error.as_deref().unwrap_or("")
            );
        }
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(
    common: &Common,
    trials: usize,
    hidden: Vec<usize>,
    activation: Activation,
    tolerance: f64,
) -> Result<ExitCode> {
    let cfg = KernelNetConfig {
        feature_dim: 2,
        hidden_layers: hidden,
        activation,
        init_seed: 0,
    };
    let report = gradient_check(&cfg, trials, common.seed.unwrap_or(0))?;
    let text = match format_of(common) {
        ReportFormat::Csv => format!(
            "trials,compared,max_relative_error\n{},{},{}\n",
            report.trials, report.compared, report.max_relative_error
        ),
        ReportFormat::Json => format!("{}\n", serde_json::to_string(&report)?),
    };
    write_output(common.out.as_deref(), &text)?;
    if report.max_relative_error > tolerance {
        eprintln!(
            "max relative error {} exceeds {tolerance}",
            report.max_relative_error
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
