//! Command line harness: generate and serve models, interpret instances,
//! run experiment sweeps, and render feature heatmaps.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use plm_openapi::api::{connect_http, serve_http, wrap_in_process, Metered, PredictionApi};
use plm_openapi::experiment::{
    run_experiment, write_report, ExperimentConfig, InstanceSource, MethodSpec, MetricKind,
    ModelSource,
};
use plm_openapi::interpret::{
    gradient_baseline, lime_interpret, naive_interpret, openapi_interpret, zoo_interpret,
    DecisionFeatures, GradientVariant, OpenApiOptions, Regularization,
};
use plm_openapi::model::{build_synthetic_plm, io, Instance, Model, ReluNet};
use plm_openapi::render::render_heatmap;
use plm_openapi::Error;

#[derive(Parser)]
#[command(
    name = "plm-openapi",
    version,
    about = "Exact decision-feature recovery for piecewise linear models behind prediction APIs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic model and write its JSON document.
    GenModel(GenModelArgs),
    /// Serve a model file over HTTP.
    Serve(ServeArgs),
    /// Interpret a single instance and print the decision features as JSON.
    Interpret(InterpretArgs),
    /// Run a configured interpreter/metric sweep and write CSV/JSON reports.
    Experiment(ExperimentArgs),
    /// Render a decision-features JSON file as an SVG heatmap.
    Render(RenderArgs),
}

#[derive(Args)]
struct GenModelArgs {
    /// Model family: "tree" or "relu".
    #[arg(long, default_value = "tree")]
    kind: String,
    /// Input dimension (tree models).
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// Class count (tree models).
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Tree depth: 2^depth leaves.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Layer widths for relu models, e.g. "4,8,3".
    #[arg(long, value_delimiter = ',')]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Model JSON file to serve.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
}

#[derive(Args)]
struct InterpretArgs {
    /// Model JSON file (in-process mode).
    #[arg(long, conflicts_with = "endpoint")]
    model: Option<PathBuf>,
    /// Remote prediction endpoint (API-only mode).
    #[arg(long)]
    endpoint: Option<String>,
    /// Instance as comma-separated values, e.g. "0.1,0.9".
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    /// Class to interpret; the predicted class when omitted.
    #[arg(long)]
    class: Option<usize>,
    /// One of: openapi, naive, zoo, lime_linear, lime_ridge, saliency,
    /// grad_input, integrated.
    #[arg(long, default_value = "openapi")]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-iter", default_value_t = 100)]
    max_iter: usize,
    /// Sampling half-width for naive/lime.
    #[arg(long, default_value_t = 1e-4)]
    r: f64,
    /// Perturbation distance for zoo.
    #[arg(long, default_value_t = 1e-4)]
    h: f64,
    /// Ridge strength for lime_ridge.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Sample count for lime; 3(d+1) when omitted.
    #[arg(long = "n-samples")]
    n_samples: Option<usize>,
    /// Path segments for integrated gradients.
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Write the features JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "endpoint")]
    model: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    /// Methods, comma separated.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Metrics, comma separated: l1dist, rd, wd, cs, ablation.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for results.csv / summary.json / metadata.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of sampled instances when no instance source is configured.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long = "instance-seed")]
    instance_seed: Option<u64>,
}

#[derive(Args)]
struct RenderArgs {
    /// Decision-features JSON (as printed by `interpret`).
    #[arg(long)]
    features: PathBuf,
    /// Grid shape "ROWSxCOLS"; rows*cols must equal the dimension.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidModel(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenModel(args) => gen_model(args),
        Command::Serve(args) => serve(args),
        Command::Interpret(args) => interpret(args),
        Command::Experiment(args) => experiment(args),
        Command::Render(args) => render(args),
    }
}

fn gen_model(args: GenModelArgs) -> Result<(), CliError> {
    let model = match args.kind.as_str() {
        "tree" => Model::Tree(
            build_synthetic_plm(args.dim, args.classes, args.depth, args.seed)
                .map_err(CliError::from)?,
        ),
        "relu" => {
            if args.widths.len() < 2 {
                return Err(CliError::Config(
                    "relu models need --widths with at least two layers".into(),
                ));
            }
            Model::Relu(ReluNet::random(args.widths.clone(), args.seed).map_err(CliError::from)?)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown model kind {other:?}; expected tree or relu"
            )))
        }
    };
    let json = io::to_json(&model);
    match args.out {
        Some(path) => std::fs::write(&path, json).map_err(|e| CliError::Runtime(e.to_string()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let model = io::load(&args.model).map_err(config_err)?;
    let server = serve_http(Arc::new(model), args.bind).map_err(CliError::from)?;
    eprintln!("serving on {}", server.endpoint());
    loop {
        std::thread::park();
    }
}

fn parse_instance(text: &str) -> Result<Instance, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(config_err))
        .collect::<Result<_, _>>()?;
    Instance::new(values).map_err(CliError::from)
}

fn interpret(args: InterpretArgs) -> Result<(), CliError> {
    let mut whitebox: Option<Arc<Model>> = None;
    let api: Box<dyn PredictionApi> = match (&args.model, &args.endpoint) {
        (Some(path), None) => {
            let model = Arc::new(io::load(path).map_err(config_err)?);
            whitebox = Some(Arc::clone(&model));
            Box::new(wrap_in_process(model))
        }
        (None, Some(url)) => Box::new(connect_http(url).map_err(CliError::from)?),
        _ => {
            return Err(CliError::Config(
                "exactly one of --model or --endpoint is required".into(),
            ))
        }
    };
    let metered = Metered::new(api.as_ref());
    let x0 = parse_instance(&args.x)?;
    if x0.dim() != metered.input_dim() {
        return Err(CliError::Config(format!(
            "instance has {} values, model wants {}",
            x0.dim(),
            metered.input_dim()
        )));
    }
    let class = match args.class {
        Some(c) if c < metered.class_count() => c,
        Some(c) => {
            return Err(CliError::Config(format!(
                "class {c} out of range for C={}",
                metered.class_count()
            )))
        }
        None => metered.predict(&x0).map_err(CliError::from)?.argmax(),
    };

    let dim = metered.input_dim();
    let n_samples = args.n_samples.unwrap_or(3 * (dim + 1));
    let mut converged = true;
    let mut iterations = 1u64;
    let mut radius_final: Option<f64> = None;

    let features: DecisionFeatures = match args.method.as_str() {
        "openapi" => {
            let opts = OpenApiOptions {
                max_iterations: args.max_iter,
                ..OpenApiOptions::default()
            };
            let result = openapi_interpret(&metered, &x0, class, &opts, args.seed)
                .map_err(CliError::from)?;
            converged = result.converged;
            iterations = result.iterations as u64;
            radius_final = Some(result.radius_final);
            result.features.unwrap_or(DecisionFeatures {
                class,
                weights: vec![],
            })
        }
        "naive" => {
            radius_final = Some(args.r);
            naive_interpret(&metered, &x0, class, args.r, args.seed).map_err(CliError::from)?
        }
        "zoo" => zoo_interpret(&metered, &x0, class, args.h).map_err(CliError::from)?,
        "lime_linear" => lime_interpret(
            &metered,
            &x0,
            class,
            args.r,
            n_samples,
            Regularization::None,
            args.seed,
        )
        .map_err(CliError::from)?,
        "lime_ridge" => lime_interpret(
            &metered,
            &x0,
            class,
            args.r,
            n_samples,
            Regularization::Ridge(args.lambda),
            args.seed,
        )
        .map_err(CliError::from)?,
        "saliency" | "grad_input" | "integrated" => {
            let model = whitebox.as_deref().ok_or_else(|| {
                CliError::Config(format!(
                    "method {:?} needs --model; it cannot run against an endpoint",
                    args.method
                ))
            })?;
            let variant = match args.method.as_str() {
                "saliency" => GradientVariant::Saliency,
                "grad_input" => GradientVariant::GradTimesInput,
                _ => GradientVariant::Integrated {
                    baseline: None,
                    steps: args.steps,
                },
            };
            gradient_baseline(model, &x0, class, &variant).map_err(CliError::from)?
        }
        other => return Err(CliError::Config(format!("unknown method {other:?}"))),
    };

    let output = serde_json::json!({
        "method": args.method,
        "class": features.class,
        "weights": features.weights,
        "converged": converged,
        "iterations": iterations,
        "r_final": radius_final,
        "queries": metered.count(),
    });
    let text = serde_json::to_string_pretty(&output).map_err(config_err)?;
    match args.out {
        Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Runtime(e.to_string()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Config(e.to_string()))?;
            ExperimentConfig::from_json(&text).map_err(CliError::from)?
        }
        None => {
            let model = model_source_from_flags(&args)?
                .ok_or_else(|| CliError::Config("need --config, --model, or --endpoint".into()))?;
            ExperimentConfig {
                model,
                methods: vec![],
                instances: InstanceSource::Sampled {
                    count: 200,
                    seed: 0,
                },
                metrics: vec![],
                seed: 0,
                max_iterations: 100,
                ablation_steps: 200,
                jobs: None,
                out_dir: None,
            }
        }
    };

    // Flag overrides on top of the config file.
    if args.config.is_some() {
        if let Some(model) = model_source_from_flags(&args)? {
            config.model = model;
        }
    }
    let r = args.r.unwrap_or(1e-4);
    let h = args.h.unwrap_or(1e-4);
    let lambda = args.lambda.unwrap_or(1.0);
    if !args.method.is_empty() {
        config.methods = args
            .method
            .iter()
            .map(|name| MethodSpec::from_name(name, r, h, lambda))
            .collect::<Result<_, _>>()
            .map_err(CliError::from)?;
    }
    if !args.metrics.is_empty() {
        config.metrics = args
            .metrics
            .iter()
            .map(|name| parse_metric(name))
            .collect::<Result<_, _>>()?;
    }
    if config.methods.is_empty() {
        config.methods = vec![MethodSpec::Openapi { max_iter: None }];
    }
    if config.metrics.is_empty() {
        config.metrics = vec![MetricKind::Cs];
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(jobs) = args.jobs {
        config.jobs = Some(jobs);
    }
    if let Some(max_iter) = args.max_iter {
        config.max_iterations = max_iter;
    }
    if let Some(count) = args.instances {
        config.instances = InstanceSource::Sampled {
            count,
            seed: args.instance_seed.unwrap_or(0),
        };
    }
    config.validate().map_err(CliError::from)?;

    let report = run_experiment(&config).map_err(CliError::from)?;
    let out = args
        .out
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    write_report(&report, &out).map_err(CliError::from)?;
    for (method, summary) in &report.summary {
        eprintln!(
            "{method}: {} runs, {} converged, {} errors",
            summary.runs, summary.converged, summary.errors
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn model_source_from_flags(args: &ExperimentArgs) -> Result<Option<ModelSource>, CliError> {
    Ok(match (&args.model, &args.endpoint) {
        (Some(path), None) => Some(ModelSource::File(path.clone())),
        (None, Some(url)) => Some(ModelSource::Endpoint(url.clone())),
        (None, None) => None,
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--model and --endpoint are mutually exclusive".into(),
            ))
        }
    })
}

fn parse_metric(name: &str) -> Result<MetricKind, CliError> {
    Ok(match name {
        "l1dist" => MetricKind::L1Dist,
        "rd" => MetricKind::Rd,
        "wd" => MetricKind::Wd,
        "cs" => MetricKind::Cs,
        "ablation" => MetricKind::Ablation,
        other => return Err(CliError::Config(format!("unknown metric {other:?}"))),
    })
}

fn render(args: RenderArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.features).map_err(config_err)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(config_err)?;
    let class = value["class"].as_u64().unwrap_or(0) as usize;
    let weights: Vec<f64> = value["weights"]
        .as_array()
        .ok_or_else(|| CliError::Config("features file has no weights array".into()))?
        .iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| CliError::Config("non-numeric weight".into()))
        })
        .collect::<Result<_, _>>()?;
    let (rows, cols) = parse_grid(&args.grid)?;
    let features = DecisionFeatures { class, weights };
    let svg = render_heatmap(&features, rows, cols).map_err(CliError::from)?;
    std::fs::write(&args.out, svg).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

fn parse_grid(text: &str) -> Result<(usize, usize), CliError> {
    let (rows, cols) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| CliError::Config(format!("bad grid {text:?}; expected ROWSxCOLS")))?;
    Ok((
        rows.trim().parse().map_err(config_err)?,
        cols.trim().parse().map_err(config_err)?,
    ))
}
