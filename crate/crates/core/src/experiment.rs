//! Experiment orchestration: load or build a model, expose it through a
//! prediction API (in-process or remote), sweep interpreters over an
//! instance set, attach metrics, and emit CSV/JSON reports.
//!
//! Runs are reproducible: every interpreter call draws its seed from the
//! master seed and the instance id, so the worker pool size never changes a
//! number. The CSV bodies are byte-identical across reruns of one config;
//! wall-clock data lives in a separate metadata file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::api::{connect_http, wrap_in_process, Metered, PredictionApi};
use crate::error::{Error, Result};
use crate::interpret::{
    gradient_baseline, lime_interpret, naive_interpret, openapi_interpret, sample_in_cube,
    zoo_interpret, DecisionFeatures, GradientVariant, OpenApiOptions, Regularization, SampleCloud,
    SATURATION_THRESHOLD,
};
use crate::linsys::SolveOptions;
use crate::metrics::{
    ablation_curve, cosine_consistency, l1_exactness, region_difference, weight_difference,
    AblationCurve,
};
use crate::model::{ground_truth_decision_features, Instance, Model};

/// Where the model comes from. Remote endpoints expose predictions only, so
/// oracle-based metrics and white-box methods reject them at validation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    File(PathBuf),
    Synthetic {
        d: usize,
        classes: usize,
        depth: usize,
        seed: u64,
    },
    Endpoint(String),
}

/// Interpretation methods with their per-method parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum MethodSpec {
    Openapi {
        #[serde(default)]
        max_iter: Option<usize>,
    },
    Naive {
        r: f64,
    },
    Zoo {
        h: f64,
    },
    LimeLinear {
        r: f64,
        n_samples: Option<usize>,
    },
    LimeRidge {
        r: f64,
        lambda: f64,
        n_samples: Option<usize>,
    },
    Saliency,
    GradInput,
    Integrated {
        steps: Option<usize>,
    },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Openapi { .. } => "openapi",
            MethodSpec::Naive { .. } => "naive",
            MethodSpec::Zoo { .. } => "zoo",
            MethodSpec::LimeLinear { .. } => "lime_linear",
            MethodSpec::LimeRidge { .. } => "lime_ridge",
            MethodSpec::Saliency => "saliency",
            MethodSpec::GradInput => "grad_input",
            MethodSpec::Integrated { .. } => "integrated",
        }
    }

    /// True for methods that read model parameters instead of the API.
    pub fn is_white_box(&self) -> bool {
        matches!(
            self,
            MethodSpec::Saliency | MethodSpec::GradInput | MethodSpec::Integrated { .. }
        )
    }

    /// Parses a bare method name into a spec with default parameters.
    pub fn from_name(name: &str, r: f64, h: f64, lambda: f64) -> Result<Self> {
        Ok(match name {
            "openapi" => MethodSpec::Openapi { max_iter: None },
            "naive" => MethodSpec::Naive { r },
            "zoo" => MethodSpec::Zoo { h },
            "lime_linear" => MethodSpec::LimeLinear { r, n_samples: None },
            "lime_ridge" => MethodSpec::LimeRidge {
                r,
                lambda,
                n_samples: None,
            },
            "saliency" => MethodSpec::Saliency,
            "grad_input" => MethodSpec::GradInput,
            "integrated" => MethodSpec::Integrated { steps: None },
            other => return Err(Error::Config(format!("unknown method {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    /// CSV file, one instance per row, no header.
    File(PathBuf),
    /// Uniform samples over the unit cube.
    Sampled { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricKind {
    #[serde(rename = "l1dist")]
    L1Dist,
    #[serde(rename = "rd")]
    Rd,
    #[serde(rename = "wd")]
    Wd,
    #[serde(rename = "cs")]
    Cs,
    #[serde(rename = "ablation")]
    Ablation,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::L1Dist => "l1dist",
            MetricKind::Rd => "rd",
            MetricKind::Wd => "wd",
            MetricKind::Cs => "cs",
            MetricKind::Ablation => "ablation",
        }
    }

    fn needs_oracle(&self) -> bool {
        matches!(self, MetricKind::L1Dist | MetricKind::Rd | MetricKind::Wd)
    }
}

fn default_max_iterations() -> usize {
    100
}

fn default_ablation_steps() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub methods: Vec<MethodSpec>,
    pub instances: InstanceSource,
    #[serde(default)]
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_ablation_steps")]
    pub ablation_steps: usize,
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Default output directory for reports; the CLI --out flag overrides.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        let endpoint_only = matches!(self.model, ModelSource::Endpoint(_));
        if endpoint_only {
            if let Some(m) = self.methods.iter().find(|m| m.is_white_box()) {
                return Err(Error::Config(format!(
                    "method {:?} needs model parameters, but the model source is an endpoint",
                    m.name()
                )));
            }
            if let Some(k) = self.metrics.iter().find(|k| k.needs_oracle()) {
                return Err(Error::Config(format!(
                    "metric {:?} needs the white-box oracle, but the model source is an endpoint",
                    k.name()
                )));
            }
        }
        if let InstanceSource::Sampled { count, .. } = self.instances {
            if count == 0 {
                return Err(Error::Config("instance count must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One (instance, method) outcome.
#[derive(Debug, Clone)]
pub struct ResultRecord {
    pub instance_id: usize,
    pub method: String,
    pub converged: bool,
    pub iterations: u64,
    pub radius_final: Option<f64>,
    pub queries: u64,
    pub metrics: BTreeMap<String, Option<f64>>,
    /// Recovered features, kept in memory for consistency metrics and
    /// rendering; not part of the CSV.
    pub features: Option<DecisionFeatures>,
    pub error: Option<String>,
    pub duration: Duration,
}

#[derive(Debug, Clone)]
pub struct SkippedInstance {
    pub instance_id: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct MetricStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricStats {
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let sum: f64 = values.iter().sum();
        Some(Self {
            count: values.len(),
            mean: sum / values.len() as f64,
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct MethodSummary {
    pub runs: usize,
    pub errors: usize,
    pub converged: usize,
    pub mean_iterations: f64,
    pub mean_queries: f64,
    pub metrics: BTreeMap<String, MetricStats>,
}

pub type Summary = BTreeMap<String, MethodSummary>;

#[derive(Debug)]
pub struct ExperimentReport {
    pub records: Vec<ResultRecord>,
    pub skipped: Vec<SkippedInstance>,
    pub summary: Summary,
    pub metric_columns: Vec<String>,
    pub ablation: Vec<(usize, String, AblationCurve)>,
    pub wall: Duration,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the RNG stream for one (instance, method) cell, derived from the
/// master seed so parallel dispatch never changes results.
pub fn derive_seed(master: u64, instance_id: u64, lane: u64) -> u64 {
    splitmix64(master ^ splitmix64(instance_id.wrapping_add(1)) ^ splitmix64(!lane))
}

fn load_instances(source: &InstanceSource, dim: usize) -> Result<Vec<Instance>> {
    match source {
        InstanceSource::Sampled { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..*count)
                .map(|_| {
                    Instance::new((0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
                        .expect("finite samples")
                })
                .collect())
        }
        InstanceSource::File(path) => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .from_path(path)?;
            let mut instances = Vec::new();
            for row in reader.records() {
                let row = row?;
                let values: Vec<f64> = row
                    .iter()
                    .map(|cell| {
                        cell.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Config(format!("bad instance value {cell:?}: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if values.len() != dim {
                    return Err(Error::Config(format!(
                        "instance row has {} values, model wants {dim}",
                        values.len()
                    )));
                }
                instances.push(Instance::new(values)?);
            }
            if instances.is_empty() {
                return Err(Error::Config("instance file is empty".into()));
            }
            Ok(instances)
        }
    }
}

/// Rebuilds the sample cloud a method used, without further queries: every
/// method's sampling stream is a pure function of its seed and parameters.
fn method_cloud(
    spec: &MethodSpec,
    x0: &Instance,
    dim: usize,
    seed: u64,
    openapi_cloud: Option<&SampleCloud>,
) -> Option<SampleCloud> {
    match spec {
        MethodSpec::Openapi { .. } => openapi_cloud.cloned(),
        MethodSpec::Naive { r } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(SampleCloud {
                center: x0.clone(),
                radius: *r,
                points: sample_in_cube(x0, *r, dim, &mut rng),
            })
        }
        MethodSpec::Zoo { h } => {
            let mut points = Vec::with_capacity(2 * dim);
            for axis in 0..dim {
                for sign in [1.0, -1.0] {
                    let mut v = x0.values().to_vec();
                    v[axis] += sign * h;
                    points.push(Instance::new(v).expect("finite probe"));
                }
            }
            Some(SampleCloud {
                center: x0.clone(),
                radius: *h,
                points,
            })
        }
        MethodSpec::LimeLinear { r, n_samples } | MethodSpec::LimeRidge { r, n_samples, .. } => {
            let n = n_samples.unwrap_or(3 * (dim + 1));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(SampleCloud {
                center: x0.clone(),
                radius: *r,
                points: sample_in_cube(x0, *r, n, &mut rng),
            })
        }
        MethodSpec::Saliency | MethodSpec::GradInput | MethodSpec::Integrated { .. } => None,
    }
}

struct MethodOutcome {
    features: Option<DecisionFeatures>,
    converged: bool,
    iterations: u64,
    radius_final: Option<f64>,
    cloud: Option<SampleCloud>,
}

fn run_method(
    spec: &MethodSpec,
    api: &dyn PredictionApi,
    model: Option<&Model>,
    x0: &Instance,
    class: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<MethodOutcome> {
    let dim = api.input_dim();
    match spec {
        MethodSpec::Openapi { max_iter } => {
            let opts = OpenApiOptions {
                max_iterations: max_iter.unwrap_or(max_iterations),
                initial_radius: 1.0,
                solve: SolveOptions::default(),
            };
            let result = openapi_interpret(api, x0, class, &opts, seed)?;
            Ok(MethodOutcome {
                converged: result.converged,
                iterations: result.iterations as u64,
                radius_final: Some(result.radius_final),
                cloud: Some(result.cloud.clone()),
                features: result.features,
            })
        }
        MethodSpec::Naive { r } => {
            let features = naive_interpret(api, x0, class, *r, seed)?;
            Ok(MethodOutcome {
                features: Some(features),
                converged: true,
                iterations: 1,
                radius_final: Some(*r),
                cloud: method_cloud(spec, x0, dim, seed, None),
            })
        }
        MethodSpec::Zoo { h } => {
            let features = zoo_interpret(api, x0, class, *h)?;
            Ok(MethodOutcome {
                features: Some(features),
                converged: true,
                iterations: 1,
                radius_final: Some(*h),
                cloud: method_cloud(spec, x0, dim, seed, None),
            })
        }
        MethodSpec::LimeLinear { r, n_samples } => {
            let n = n_samples.unwrap_or(3 * (dim + 1));
            let features = lime_interpret(api, x0, class, *r, n, Regularization::None, seed)?;
            Ok(MethodOutcome {
                features: Some(features),
                converged: true,
                iterations: 1,
                radius_final: Some(*r),
                cloud: method_cloud(spec, x0, dim, seed, None),
            })
        }
        MethodSpec::LimeRidge {
            r,
            lambda,
            n_samples,
        } => {
            let n = n_samples.unwrap_or(3 * (dim + 1));
            let features =
                lime_interpret(api, x0, class, *r, n, Regularization::Ridge(*lambda), seed)?;
            Ok(MethodOutcome {
                features: Some(features),
                converged: true,
                iterations: 1,
                radius_final: Some(*r),
                cloud: method_cloud(spec, x0, dim, seed, None),
            })
        }
        MethodSpec::Saliency | MethodSpec::GradInput | MethodSpec::Integrated { .. } => {
            let model = model.ok_or_else(|| {
                Error::Config("white-box method without a white-box model".into())
            })?;
            let variant = match spec {
                MethodSpec::Saliency => GradientVariant::Saliency,
                MethodSpec::GradInput => GradientVariant::GradTimesInput,
                MethodSpec::Integrated { steps } => GradientVariant::Integrated {
                    baseline: None,
                    steps: steps.unwrap_or(300),
                },
                _ => unreachable!(),
            };
            let features = gradient_baseline(model, x0, class, &variant)?;
            Ok(MethodOutcome {
                features: Some(features),
                converged: true,
                iterations: 1,
                radius_final: None,
                cloud: None,
            })
        }
    }
}

/// Runs the full sweep described by `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();

    let mut whitebox: Option<Arc<Model>> = None;
    let api: Box<dyn PredictionApi> = match &config.model {
        ModelSource::File(path) => {
            let model = Arc::new(crate::model::io::load(path)?);
            whitebox = Some(Arc::clone(&model));
            Box::new(wrap_in_process(model))
        }
        ModelSource::Synthetic {
            d,
            classes,
            depth,
            seed,
        } => {
            let model = Arc::new(Model::Tree(crate::model::build_synthetic_plm(
                *d, *classes, *depth, *seed,
            )?));
            whitebox = Some(Arc::clone(&model));
            Box::new(wrap_in_process(model))
        }
        ModelSource::Endpoint(url) => Box::new(connect_http(url)?),
    };
    let api: &dyn PredictionApi = api.as_ref();
    let dim = api.input_dim();

    let instances = load_instances(&config.instances, dim)?;

    // Pre-filter: drop saturated instances (and boundary instances when the
    // oracle is present), keeping the predicted class of the survivors.
    let mut usable: Vec<(usize, Instance, usize)> = Vec::new();
    let mut skipped = Vec::new();
    for (id, x0) in instances.iter().enumerate() {
        let y0 = match api.predict(x0) {
            Ok(y) => y,
            Err(e) => {
                skipped.push(SkippedInstance {
                    instance_id: id,
                    reason: format!("prediction failed: {e}"),
                });
                continue;
            }
        };
        if y0.max_prob() > SATURATION_THRESHOLD {
            skipped.push(SkippedInstance {
                instance_id: id,
                reason: "saturated".into(),
            });
            continue;
        }
        if let Some(model) = &whitebox {
            if matches!(model.local_form(x0), Err(Error::Boundary)) {
                skipped.push(SkippedInstance {
                    instance_id: id,
                    reason: "boundary".into(),
                });
                continue;
            }
        }
        usable.push((id, x0.clone(), y0.argmax()));
    }

    let want_ablation = config.metrics.contains(&MetricKind::Ablation);
    let whitebox_ref = whitebox.as_deref();

    let per_instance =
        |(id, x0, class): &(usize, Instance, usize)| -> Vec<(ResultRecord, Option<AblationCurve>)> {
            let mut out = Vec::with_capacity(config.methods.len());
            for (lane, spec) in config.methods.iter().enumerate() {
                let seed = derive_seed(config.seed, *id as u64, lane as u64);
                let metered = Metered::new(api);
                let begin = Instant::now();
                let outcome = run_method(
                    spec,
                    &metered,
                    whitebox_ref,
                    x0,
                    *class,
                    seed,
                    config.max_iterations,
                );
                let duration = begin.elapsed();
                let queries = metered.count();

                let mut record = ResultRecord {
                    instance_id: *id,
                    method: spec.name().to_string(),
                    converged: false,
                    iterations: 0,
                    radius_final: None,
                    queries,
                    metrics: BTreeMap::new(),
                    features: None,
                    error: None,
                    duration,
                };
                let mut curve = None;
                match outcome {
                    Err(e) => record.error = Some(e.to_string()),
                    Ok(outcome) => {
                        record.converged = outcome.converged;
                        record.iterations = outcome.iterations;
                        record.radius_final = outcome.radius_final;
                        for kind in &config.metrics {
                            let value = match kind {
                                MetricKind::L1Dist => match (whitebox_ref, &outcome.features) {
                                    (Some(model), Some(features)) => model
                                        .local_form(x0)
                                        .ok()
                                        .map(|form| ground_truth_decision_features(&form, *class))
                                        .and_then(|oracle| l1_exactness(features, &oracle).ok()),
                                    _ => None,
                                },
                                MetricKind::Rd => match (whitebox_ref, &outcome.cloud) {
                                    (Some(model), Some(cloud)) => {
                                        region_difference(model, x0, cloud).ok().map(f64::from)
                                    }
                                    _ => None,
                                },
                                MetricKind::Wd => match (whitebox_ref, &outcome.cloud) {
                                    (Some(model), Some(cloud)) => {
                                        weight_difference(model, x0, cloud, *class).ok()
                                    }
                                    _ => None,
                                },
                                // Filled in the serial pass once all features exist.
                                MetricKind::Cs => None,
                                MetricKind::Ablation => None,
                            };
                            if !matches!(kind, MetricKind::Ablation) {
                                record.metrics.insert(kind.name().to_string(), value);
                            }
                        }
                        if want_ablation {
                            if let Some(features) = &outcome.features {
                                curve =
                                    ablation_curve(&metered, x0, features, config.ablation_steps)
                                        .ok();
                            }
                        }
                        record.features = outcome.features;
                    }
                }
                out.push((record, curve));
            }
            out
        };

    let nested: Vec<Vec<(ResultRecord, Option<AblationCurve>)>> = match config.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| usable.par_iter().map(per_instance).collect())
        }
        None => usable.par_iter().map(per_instance).collect(),
    };

    let mut records = Vec::new();
    let mut ablation = Vec::new();
    for group in nested {
        for (record, curve) in group {
            if let Some(curve) = curve {
                ablation.push((record.instance_id, record.method.clone(), curve));
            }
            records.push(record);
        }
    }

    // Consistency pass: cosine similarity between each instance's features
    // and its Euclidean nearest neighbor's, per method.
    if config.metrics.contains(&MetricKind::Cs) && usable.len() > 1 {
        let nearest: BTreeMap<usize, usize> = usable
            .iter()
            .map(|(id, x0, _)| {
                let neighbor = usable
                    .iter()
                    .filter(|(other, _, _)| other != id)
                    .min_by(|(_, a, _), (_, b, _)| {
                        x0.distance(a).partial_cmp(&x0.distance(b)).unwrap()
                    })
                    .map(|(other, _, _)| *other)
                    .expect("more than one instance");
                (*id, neighbor)
            })
            .collect();
        let features: BTreeMap<(usize, &str), DecisionFeatures> = records
            .iter()
            .filter_map(|r| {
                r.features
                    .clone()
                    .map(|f| ((r.instance_id, r.method.as_str()), f))
            })
            .collect();
        let values: Vec<Option<f64>> = records
            .iter()
            .map(|record| {
                let neighbor = nearest.get(&record.instance_id)?;
                let own = features.get(&(record.instance_id, record.method.as_str()))?;
                let other = features.get(&(*neighbor, record.method.as_str()))?;
                cosine_consistency(own, other).ok()
            })
            .collect();
        for (record, value) in records.iter_mut().zip(values) {
            record.metrics.insert("cs".into(), value);
        }
    }

    let metric_columns: Vec<String> = config
        .metrics
        .iter()
        .filter(|k| !matches!(k, MetricKind::Ablation))
        .map(|k| k.name().to_string())
        .collect();
    let summary = summarize(&records, &metric_columns);

    Ok(ExperimentReport {
        records,
        skipped,
        summary,
        metric_columns,
        ablation,
        wall: start.elapsed(),
    })
}

/// Aggregates mean/min/max per method per metric, plus run counts.
pub fn summarize(records: &[ResultRecord], metric_columns: &[String]) -> Summary {
    let mut summary = Summary::new();
    let methods: Vec<String> = {
        let mut seen = Vec::new();
        for r in records {
            if !seen.contains(&r.method) {
                seen.push(r.method.clone());
            }
        }
        seen
    };
    for method in methods {
        let rows: Vec<&ResultRecord> = records.iter().filter(|r| r.method == method).collect();
        let ok_rows: Vec<&&ResultRecord> = rows.iter().filter(|r| r.error.is_none()).collect();
        let mut entry = MethodSummary {
            runs: rows.len(),
            errors: rows.len() - ok_rows.len(),
            converged: ok_rows.iter().filter(|r| r.converged).count(),
            mean_iterations: 0.0,
            mean_queries: 0.0,
            metrics: BTreeMap::new(),
        };
        if !ok_rows.is_empty() {
            entry.mean_iterations =
                ok_rows.iter().map(|r| r.iterations as f64).sum::<f64>() / ok_rows.len() as f64;
            entry.mean_queries =
                ok_rows.iter().map(|r| r.queries as f64).sum::<f64>() / ok_rows.len() as f64;
        }
        for column in metric_columns {
            let values: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.metrics.get(column).copied().flatten())
                .collect();
            if let Some(stats) = MetricStats::from_values(&values) {
                entry.metrics.insert(column.clone(), stats);
            }
        }
        summary.insert(method, entry);
    }
    summary
}

/// 17 significant digits: enough to round-trip any IEEE-754 double.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `results.csv`, `summary.json`, `metadata.json`, `skipped.csv`, and
/// (when ablation was requested) `ablation.csv` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut csv = csv::Writer::from_path(dir.join("results.csv"))?;
    let mut header = vec![
        "instance_id".to_string(),
        "method".to_string(),
        "converged".to_string(),
        "iterations".to_string(),
        "r_final".to_string(),
        "queries".to_string(),
    ];
    header.extend(report.metric_columns.iter().cloned());
    header.push("error".to_string());
    csv.write_record(&header)?;
    for record in &report.records {
        let mut row = vec![
            record.instance_id.to_string(),
            record.method.clone(),
            record.converged.to_string(),
            record.iterations.to_string(),
            record.radius_final.map(fmt_float).unwrap_or_default(),
            record.queries.to_string(),
        ];
        for column in &report.metric_columns {
            row.push(
                record
                    .metrics
                    .get(column)
                    .copied()
                    .flatten()
                    .map(fmt_float)
                    .unwrap_or_default(),
            );
        }
        row.push(record.error.clone().unwrap_or_default());
        csv.write_record(&row)?;
    }
    csv.flush()?;

    let summary_json = serde_json::to_string_pretty(&report.summary)?;
    std::fs::write(dir.join("summary.json"), summary_json)?;

    let mut skipped = csv::Writer::from_path(dir.join("skipped.csv"))?;
    skipped.write_record(["instance_id", "reason"])?;
    for skip in &report.skipped {
        skipped.write_record([skip.instance_id.to_string(), skip.reason.clone()])?;
    }
    skipped.flush()?;

    if !report.ablation.is_empty() {
        let mut ab = csv::Writer::from_path(dir.join("ablation.csv"))?;
        ab.write_record(["instance_id", "method", "step", "cpp", "label_changed"])?;
        for (id, method, curve) in &report.ablation {
            for (step, point) in curve.steps.iter().enumerate() {
                ab.write_record([
                    id.to_string(),
                    method.clone(),
                    (step + 1).to_string(),
                    fmt_float(point.cpp),
                    point.label_changed.to_string(),
                ])?;
            }
        }
        ab.flush()?;
    }

    // Wall-clock data is deliberately confined here so the CSV bodies stay
    // byte-identical across reruns.
    let mut durations = BTreeMap::new();
    for record in &report.records {
        let entry = durations
            .entry(record.method.clone())
            .or_insert((0.0, 0usize));
        entry.0 += record.duration.as_secs_f64();
        entry.1 += 1;
    }
    let mean_durations: BTreeMap<String, f64> = durations
        .into_iter()
        .map(|(method, (total, n))| (method, total / n as f64))
        .collect();
    let metadata = serde_json::json!({
        "wall_seconds": report.wall.as_secs_f64(),
        "unix_time": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "mean_method_seconds": mean_durations,
        "records": report.records.len(),
        "skipped": report.skipped.len(),
    });
    let mut file = std::fs::File::create(dir.join("metadata.json"))?;
    writeln!(file, "{}", serde_json::to_string_pretty(&metadata)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSource::Synthetic {
                d: 2,
                classes: 2,
                depth: 0,
                seed: 7,
            },
            // Globally linear model: the ideal case holds at any radius, and
            // a wide one keeps the square systems well conditioned.
            methods: vec![
                MethodSpec::Openapi { max_iter: None },
                MethodSpec::Naive { r: 0.5 },
            ],
            instances: InstanceSource::Sampled { count: 50, seed: 1 },
            metrics: vec![MetricKind::L1Dist, MetricKind::Rd, MetricKind::Wd],
            seed: 42,
            max_iterations: 100,
            ablation_steps: 200,
            jobs: None,
            out_dir: None,
        }
    }

    #[test]
    fn globally_linear_model_converges_everywhere() {
        let report = run_experiment(&base_config()).unwrap();
        let openapi = &report.summary["openapi"];
        assert_eq!(openapi.runs, 50 - report.skipped.len());
        assert_eq!(openapi.converged, openapi.runs);
        for method in ["openapi", "naive"] {
            let l1 = &report.summary[method].metrics["l1dist"];
            assert!(l1.max <= 1e-6, "{method} l1 max {}", l1.max);
        }
    }

    #[test]
    fn openapi_clouds_have_zero_rd_and_wd() {
        let mut config = base_config();
        config.model = ModelSource::Synthetic {
            d: 3,
            classes: 3,
            depth: 2,
            seed: 5,
        };
        config.methods = vec![MethodSpec::Openapi { max_iter: None }];
        config.instances = InstanceSource::Sampled {
            count: 200,
            seed: 2,
        };
        let report = run_experiment(&config).unwrap();
        let openapi = &report.summary["openapi"];
        assert_eq!(openapi.converged, openapi.runs);
        assert_eq!(openapi.metrics["rd"].mean, 0.0);
        assert!(openapi.metrics["wd"].mean <= 1e-10);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let config = base_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_report(&run_experiment(&config).unwrap(), dir_a.path()).unwrap();
        write_report(&run_experiment(&config).unwrap(), dir_b.path()).unwrap();
        for file in ["results.csv", "summary.json", "skipped.csv"] {
            let a = std::fs::read(dir_a.path().join(file)).unwrap();
            let b = std::fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between reruns");
        }
    }

    #[test]
    fn worker_pool_size_does_not_change_results() {
        let mut config = base_config();
        let baseline = run_experiment(&config).unwrap();
        config.jobs = Some(1);
        let serial = run_experiment(&config).unwrap();
        config.jobs = Some(4);
        let parallel = run_experiment(&config).unwrap();
        for (a, b) in baseline.records.iter().zip(serial.records.iter()) {
            assert_eq!(a.metrics, b.metrics);
        }
        for (a, b) in serial.records.iter().zip(parallel.records.iter()) {
            assert_eq!(a.instance_id, b.instance_id);
            assert_eq!(a.metrics, b.metrics);
            assert_eq!(a.queries, b.queries);
        }
    }

    #[test]
    fn endpoint_config_rejects_oracle_needs() {
        let mut config = base_config();
        config.model = ModelSource::Endpoint("http://localhost:1".into());
        assert!(matches!(config.validate(), Err(Error::Config(_))));
        config.metrics = vec![MetricKind::Cs];
        config.methods = vec![MethodSpec::Saliency];
        assert!(matches!(config.validate(), Err(Error::Config(_))));
        config.methods = vec![MethodSpec::Openapi { max_iter: None }];
        assert!(config.validate().is_ok());
    }

    #[test]
    fn config_round_trips_through_json() {
        let text = r#"{
            "model": {"synthetic": {"d": 4, "classes": 3, "depth": 1, "seed": 9}},
            "methods": [
                {"name": "openapi"},
                {"name": "zoo", "h": 1e-4},
                {"name": "lime_ridge", "r": 1e-4, "lambda": 1.0}
            ],
            "instances": {"sampled": {"count": 10, "seed": 3}},
            "metrics": ["l1dist", "cs"],
            "seed": 11
        }"#;
        let config = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(config.max_iterations, 100);
        assert_eq!(config.methods.len(), 3);
        assert_eq!(config.methods[1].name(), "zoo");
        let back = serde_json::to_string(&config).unwrap();
        let again = ExperimentConfig::from_json(&back).unwrap();
        assert_eq!(again.methods, config.methods);
    }

    #[test]
    fn instance_files_load_and_validate_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("instances.csv");
        std::fs::write(&path, "0.1,0.9\n0.4,0.6\n0.25,0.75\n").unwrap();
        let mut config = base_config();
        config.instances = InstanceSource::File(path.clone());
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.summary["openapi"].runs, 3);

        // Wrong width is a config error before any computation.
        std::fs::write(&path, "0.1,0.9,0.5\n").unwrap();
        assert!(matches!(run_experiment(&config), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_method_name_is_a_config_error() {
        assert!(MethodSpec::from_name("anchors", 0.1, 0.1, 1.0).is_err());
        assert_eq!(
            MethodSpec::from_name("grad_input", 0.1, 0.1, 1.0)
                .unwrap()
                .name(),
            "grad_input"
        );
    }

    #[test]
    fn derived_seeds_differ_across_instances_and_lanes() {
        let a = derive_seed(1, 0, 0);
        let b = derive_seed(1, 1, 0);
        let c = derive_seed(1, 0, 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(1, 0, 0));
    }
}
