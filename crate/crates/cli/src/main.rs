use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use icurisk::dataio::{self, generate_synthetic_cohort, StratumStats};
use icurisk::models::ModelArtifact;
use icurisk::posterior::{posterior_risk, PriorSpec, DEFAULT_SAMPLES};
use icurisk::Schema;
use icurisk_cli::pipeline::{self, PRIORS_FILE, TRAIN_FEATURES_FILE};
use icurisk_cli::serve::{self, ServeState, DEFAULT_POSTERIOR_CAP, DEFAULT_SERVER_SEED};
use icurisk_cli::{config, emit_report, run_pipeline, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "icurisk", version, about = "Mortality-risk modeling pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline.
    Run {
        /// TOML run configuration; defaults apply when omitted.
        #[arg(long, short)]
        config: Option<PathBuf>,
        /// Override one key, e.g. `--set models.primary=forest`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render summary.md and SVG plots for a finished run.
    Report { dir: PathBuf },
    /// Write a synthetic cohort CSV and its schema sidecar.
    Generate {
        /// Stratum statistics (TOML); the bundled table when omitted.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, default_value_t = 1478)]
        n: usize,
        #[arg(long, default_value_t = config::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Posterior risk summary for a model under a prior document.
    Posterior {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        priors: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SERVER_SEED)]
        seed: u64,
    },
    /// Serve a model over HTTP.
    Serve {
        /// Run directory; supplies the primary model, training rows and priors.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Encoded training rows (CSV) for ALE and default priors.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Schema for `--data`; defaults to `<data>.schema.toml`.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        priors: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_POSTERIOR_CAP)]
        cap: usize,
        #[arg(long, default_value_t = DEFAULT_SERVER_SEED)]
        seed: u64,
    },
}

fn read_priors(path: &Path) -> Result<PriorSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    PriorSpec::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ModelArtifact, CliError> {
    ModelArtifact::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn json(v: &impl serde::Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Data(e.into()))
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            config,
            mut overrides,
            output,
            seed,
        } => {
            if let Some(o) = output {
                overrides.push(format!("output_dir={:?}", o.display().to_string()));
            }
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            let cfg = RunConfig::load(config.as_deref(), &overrides)?;
            let report = run_pipeline(&cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for m in &report.models {
                println!(
                    "{:<9} test AUROC {:.3} ({:.3}-{:.3})  sens {:.3}  spec {:.3}",
                    m.family.as_str(),
                    m.test.auroc,
                    m.test.ci_low,
                    m.test.ci_high,
                    m.test.sensitivity,
                    m.test.specificity
                );
            }
            println!(
                "posterior ({}): mean {:.3}, 95% interval {:.3}-{:.3}",
                report.primary_family, report.posterior.mean, report.posterior.q025, report.posterior.q975
            );
            println!("wrote {}", cfg.output_dir.join(pipeline::REPORT_FILE).display());
            Ok(())
        }
        Command::Report { dir } => {
            let out = emit_report(&dir)?;
            println!("wrote {} and {} plots", out.summary.display(), out.plots.len());
            Ok(())
        }
        Command::Generate { stats, n, seed, out } => {
            let st = match stats {
                Some(p) => StratumStats::load(&p).map_err(CliError::Data)?,
                None => StratumStats::bundled(),
            };
            let frame = generate_synthetic_cohort(&st, n, seed).map_err(CliError::Data)?;
            dataio::write_csv(&out, &frame, "").map_err(CliError::stage("write"))?;
            let schema_path = out.with_extension("schema.toml");
            let schema = frame.schema().to_toml_string().map_err(CliError::stage("write"))?;
            std::fs::write(&schema_path, schema).map_err(CliError::io(&schema_path))?;
            println!("wrote {} ({} rows) and {}", out.display(), frame.n_rows(), schema_path.display());
            Ok(())
        }
        Command::Posterior { model, priors, n, seed } => {
            let model = load_model(&model)?;
            let priors = read_priors(&priors)?;
            let s = posterior_risk(&model, &priors, n, seed).map_err(CliError::stage("posterior"))?;
            println!("{}", json(&s)?);
            Ok(())
        }
        Command::Serve {
            run,
            model,
            data,
            schema,
            priors,
            host,
            port,
            cap,
            seed,
        } => {
            let (model, data, priors) = match run {
                Some(dir) => {
                    let report = pipeline::load_report(&dir)?;
                    let m = model.unwrap_or_else(|| dir.join(format!("models/{}.json", report.primary_family)));
                    let d = data.unwrap_or_else(|| dir.join(TRAIN_FEATURES_FILE));
                    let p = priors.or_else(|| Some(dir.join(PRIORS_FILE)));
                    (m, d, p)
                }
                None => {
                    let m = model.ok_or_else(|| CliError::Config("--model or --run is required".into()))?;
                    let d = data.ok_or_else(|| CliError::Config("--data or --run is required".into()))?;
                    (m, d, priors)
                }
            };
            let schema_path = schema.unwrap_or_else(|| data.with_extension("schema.toml"));
            let schema = Schema::load(&schema_path).map_err(|e| CliError::Config(e.to_string()))?;
            let frame = dataio::load_csv(&data, &schema, "").map_err(CliError::Data)?;
            let priors = priors.as_deref().map(read_priors).transpose()?;
            let state = ServeState::new(load_model(&model)?, priors, &frame, cap, seed)?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| CliError::Config(format!("bad address {host}:{port}: {e}")))?;
            let rt = tokio::runtime::Runtime::new().map_err(CliError::io(Path::new("<runtime>")))?;
            rt.block_on(serve::serve(state, addr))
                .map_err(CliError::io(Path::new("<listener>")))
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
