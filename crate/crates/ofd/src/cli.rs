//! Pipeline orchestration: configuration, stage execution with persisted
//! artifacts, report/plot-data emission, and an artifact audit.
//!
//! Stages: `gen-data` (generation labels as it goes) -> `train` -> `approx`
//! -> `design` -> `evaluate`; `label` relabels an existing point file;
//! `run` executes everything; `validate` re-checks the invariants of the
//! persisted artifacts.

use crate::classifier::{self, Ellipsoid, TrainOptions, TrainReport};
use crate::dataset_gen::{self, GenOptions, LabeledDataset};
use crate::devices::{self, DeviceSpec, ProfileSet};
use crate::disagg::{self, AggregateModel, DisaggOptions, ScenarioPool};
use crate::eval;
use crate::flex_design;
use crate::market_model::{self, HorizonConfig, HPolytope};
use crate::poly_geom::{self, FmOptions};
use anyhow::{anyhow, bail, Context as _};
use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "ofd", about = "Flexibility-design pipeline for device fleets")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "ofd_out")]
    out_dir: PathBuf,
    /// Worker thread count (overrides config).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the primary input artifact of the stage.
    #[arg(long, global = true)]
    stage_input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate and label the dataset.
    GenData,
    /// Relabel an existing dataset file against the configured model.
    Label,
    /// Train the quadratic classifier.
    Train,
    /// Build the polytopic inner approximation of the classifier ellipsoid.
    Approx,
    /// Compute the prototype and solve the containment program.
    Design,
    /// Volumes, convexity metrics, report and plot data.
    Evaluate,
    /// All stages in order.
    Run,
    /// Re-check invariants of persisted artifacts.
    Validate,
}

// ---------------------------------------------------------------- config --

fn d_delta_hours() -> f64 {
    1.0
}
fn d_pool_size() -> usize {
    500
}
fn d_box_inflation() -> f64 {
    1.25
}
fn d_kappa() -> f64 {
    0.2
}
fn d_k() -> usize {
    25
}
fn d_balance() -> f64 {
    0.4
}
fn d_node_limit() -> usize {
    50_000
}
fn d_lambda() -> f64 {
    1e-5
}
fn d_epochs() -> usize {
    2000
}
fn d_train_fraction() -> f64 {
    0.8
}
fn d_delta() -> f64 {
    0.1
}
fn d_prune_budget() -> usize {
    20_000
}
fn d_row_cap() -> usize {
    1_000_000
}
fn d_mc_samples() -> usize {
    1_000_000
}
fn d_m2_count() -> usize {
    100
}
fn d_workers() -> usize {
    8
}
fn d_g_format() -> String {
    "full".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub t: usize,
    #[serde(default = "d_delta_hours")]
    pub delta_hours: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetCounts {
    #[serde(default)]
    pub pv: usize,
    #[serde(default)]
    pub battery: usize,
    #[serde(default)]
    pub ev: usize,
    #[serde(default)]
    pub tcl: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// "synthetic_t2" | "fleet" | "polytope"
    pub kind: String,
    #[serde(default)]
    pub fleet: FleetCounts,
    /// Scenario pool size R.
    #[serde(default = "d_pool_size")]
    pub pool_size: usize,
    /// Sampling box inflation around the model's bounding box
    /// (polytope-backed models only).
    #[serde(default = "d_box_inflation")]
    pub box_inflation: f64,
    /// Ground-truth polytope file for kind = "polytope".
    #[serde(default)]
    pub polytope_path: Option<String>,
    /// Replace the scenario pool by the single mean-externality scenario.
    #[serde(default)]
    pub mean_externality: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub n_target: usize,
    #[serde(default = "d_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default)]
    pub label_budget: Option<usize>,
    #[serde(default = "d_balance")]
    pub balance_target: f64,
    #[serde(default = "d_node_limit")]
    pub node_limit: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_train_fraction")]
    pub train_fraction: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            lambda: d_lambda(),
            epochs: d_epochs(),
            train_fraction: d_train_fraction(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSection {
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_prune_budget")]
    pub prune_budget: usize,
    #[serde(default = "d_row_cap")]
    pub row_cap: usize,
}

impl Default for ApproxSection {
    fn default() -> Self {
        ApproxSection {
            delta: d_delta(),
            prune_budget: d_prune_budget(),
            row_cap: d_row_cap(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    /// "full" (power + state-of-charge + ramp rows) or "reduced" (box).
    #[serde(default = "d_g_format")]
    pub g_format: String,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            g_format: d_g_format(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "d_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "d_m2_count")]
    pub m2_count: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            mc_samples: d_mc_samples(),
            m2_count: d_m2_count(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub horizon: HorizonSection,
    pub model: ModelSection,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub approx: ApproxSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_workers")]
    pub workers: usize,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| format!("at key `{}`: {}", e.path(), e.inner()))
    }
}

// ----------------------------------------------------------------- errors --

enum CliError {
    Config(String),
    Stage(&'static str, anyhow::Error),
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(CliError::Stage(stage, e)) => {
            eprintln!("stage `{stage}` failed: {e:#}");
            1
        }
    }
}

// ---------------------------------------------------------------- context --

struct Ctx {
    cfg: Config,
    h: HorizonConfig,
    out: PathBuf,
    stage_input: Option<PathBuf>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn input_or(&self, name: &str) -> PathBuf {
        self.stage_input.clone().unwrap_or_else(|| self.path(name))
    }

    fn disagg_opts(&self) -> DisaggOptions {
        DisaggOptions {
            node_limit: self.cfg.dataset.node_limit,
        }
    }

    fn g_matrix(&self) -> Result<DMatrix<f64>, CliError> {
        match self.cfg.design.g_format.as_str() {
            "full" => Ok(market_model::build_g(&self.h)),
            "reduced" => Ok(market_model::build_reduced_g(&self.h)),
            other => Err(CliError::Config(format!(
                "at key `design.g_format`: unknown format \"{other}\" (expected \"full\" or \"reduced\")"
            ))),
        }
    }

    fn polytope_of(&self, x: &DVector<f64>) -> Result<HPolytope, CliError> {
        let g = self.g_matrix()?;
        let tags = (0..g.nrows()).map(|i| format!("g[{i}]")).collect();
        Ok(HPolytope::new(g.clone(), x.clone(), tags))
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::from_path(p).map_err(CliError::Config)?,
        None => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global();
    let h = HorizonConfig {
        t: cfg.horizon.t,
        delta_hours: cfg.horizon.delta_hours,
    };
    if h.t == 0 {
        return Err(CliError::Config("at key `horizon.t`: must be >= 1".into()));
    }
    fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Stage("setup", anyhow!("cannot create out dir: {e}")))?;
    let ctx = Ctx {
        cfg,
        h,
        out: cli.out_dir,
        stage_input: cli.stage_input,
    };

    let wrap = |stage: &'static str, r: anyhow::Result<()>| -> Result<i32, CliError> {
        r.map(|()| 0).map_err(|e| CliError::Stage(stage, e))
    };
    match cli.cmd {
        Cmd::GenData => wrap("gen-data", stage_gen_data(&ctx)),
        Cmd::Label => wrap("label", stage_label(&ctx)),
        Cmd::Train => wrap("train", stage_train(&ctx)),
        Cmd::Approx => wrap("approx", stage_approx(&ctx)),
        Cmd::Design => wrap("design", stage_design(&ctx)),
        Cmd::Evaluate => wrap("evaluate", stage_evaluate(&ctx)),
        Cmd::Run => wrap("run", {
            stage_gen_data(&ctx)
                .and_then(|()| stage_train(&ctx))
                .and_then(|()| stage_approx(&ctx))
                .and_then(|()| stage_design(&ctx))
                .and_then(|()| stage_evaluate(&ctx))
        }),
        Cmd::Validate => stage_validate(&ctx).map_err(|e| CliError::Stage("validate", e)),
    }
}

// ----------------------------------------------------------------- stages --

/// The sampling box and the model the labels are checked against.
struct BuiltModel {
    model: AggregateModel,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Ground-truth polytope when the model is polytope-backed.
    truth: Option<HPolytope>,
}

fn inflate(p: &HPolytope, factor: f64) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = eval::bounding_box(p)?;
    let mut out_lo = Vec::with_capacity(lo.len());
    let mut out_hi = Vec::with_capacity(hi.len());
    for i in 0..lo.len() {
        let c = 0.5 * (lo[i] + hi[i]);
        let r = 0.5 * (hi[i] - lo[i]) * factor;
        out_lo.push(c - r);
        out_hi.push(c + r);
    }
    Ok((out_lo, out_hi))
}

fn build_fleet(ctx: &Ctx) -> Vec<DeviceSpec> {
    let c = &ctx.cfg.model.fleet;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    devices::sample_fleet(c.pv, c.battery, c.ev, c.tcl, &mut rng)
}

fn build_model(ctx: &Ctx) -> anyhow::Result<BuiltModel> {
    let cfg = &ctx.cfg;
    match cfg.model.kind.as_str() {
        "synthetic_t2" => {
            if ctx.h.t != 2 {
                bail!("model kind \"synthetic_t2\" requires horizon.t = 2");
            }
            let x = market_model::build_x(&market_model::synthetic_t2_vars(), &ctx.h)?;
            let poly = market_model::aggregator_polytope(&x, &ctx.h);
            let (lo, hi) = inflate(&poly, cfg.model.box_inflation)?;
            Ok(BuiltModel {
                model: AggregateModel::Polytope(poly.clone()),
                lo,
                hi,
                truth: Some(poly),
            })
        }
        "polytope" => {
            let path = cfg
                .model
                .polytope_path
                .as_ref()
                .ok_or_else(|| anyhow!("model.polytope_path is required for kind \"polytope\""))?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            let poly: HPolytope = serde_json::from_str(&text)?;
            let (lo, hi) = inflate(&poly, cfg.model.box_inflation)?;
            Ok(BuiltModel {
                model: AggregateModel::Polytope(poly.clone()),
                lo,
                hi,
                truth: Some(poly),
            })
        }
        "fleet" => {
            let fleet = build_fleet(ctx);
            if fleet.is_empty() {
                bail!("model.fleet device counts are all zero");
            }
            let profiles = ProfileSet::synthetic(&ctx.h);
            let pool = if cfg.model.mean_externality {
                let scen = devices::mean_scenario_with_profiles(&fleet, &ctx.h, &profiles)?;
                ScenarioPool::from_scenarios(&fleet, &ctx.h, vec![scen])?
            } else {
                ScenarioPool::build(
                    &fleet,
                    &ctx.h,
                    cfg.model.pool_size,
                    cfg.seed.wrapping_add(1),
                    &profiles,
                )?
            };
            let (lo, hi) = dataset_gen::box_bounds(&pool);
            Ok(BuiltModel {
                model: AggregateModel::Fleet(pool),
                lo,
                hi,
                truth: None,
            })
        }
        other => bail!("unknown model.kind \"{other}\""),
    }
}

fn stage_gen_data(ctx: &Ctx) -> anyhow::Result<()> {
    let built = build_model(ctx)?;
    let d = &ctx.cfg.dataset;
    let mut opts = GenOptions::new(d.n_target, d.epsilon, ctx.cfg.seed.wrapping_add(2));
    opts.kappa = d.kappa;
    opts.k = d.k;
    opts.balance_target = d.balance_target;
    opts.disagg = ctx.disagg_opts();
    if let Some(b) = d.label_budget {
        opts.label_budget = b;
    }
    let data = dataset_gen::generate(&built.model, (&built.lo, &built.hi), &ctx.h, &opts)?;
    data.save(&ctx.path("dataset.jsonl"))?;
    let box_json = serde_json::json!({"lo": built.lo, "hi": built.hi});
    fs::write(ctx.path("box.json"), serde_json::to_string_pretty(&box_json)?)?;
    eprintln!(
        "gen-data: {} points ({:.1}% feasible) -> {}",
        data.points.len(),
        100.0 * data.feasible_fraction(),
        ctx.path("dataset.jsonl").display()
    );
    Ok(())
}

fn stage_label(ctx: &Ctx) -> anyhow::Result<()> {
    let built = build_model(ctx)?;
    let input = ctx.input_or("dataset.jsonl");
    let mut data = LabeledDataset::load(&input, ctx.cfg.dataset.epsilon)?;
    let opts = ctx.disagg_opts();
    use rayon::prelude::*;
    let relabeled: Result<Vec<(i8, f64)>, disagg::DisaggError> = data
        .points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| {
            let p = DVector::from_column_slice(&pt.p);
            disagg::label(
                &p,
                &built.model,
                ctx.cfg.dataset.k,
                ctx.cfg.dataset.epsilon,
                ctx.cfg.seed.wrapping_add(10_000 + i as u64),
                &opts,
            )
            .map(|o| (o.y, o.c))
        })
        .collect();
    for (pt, (y, c)) in data.points.iter_mut().zip(relabeled?) {
        pt.y = y;
        pt.c = c;
    }
    data.save(&ctx.path("dataset.jsonl"))?;
    eprintln!(
        "label: relabeled {} points from {}",
        data.points.len(),
        input.display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ClassifierArtifact {
    ellipsoid: Ellipsoid,
    report: TrainReport,
}

fn stage_train(ctx: &Ctx) -> anyhow::Result<()> {
    let input = ctx.input_or("dataset.jsonl");
    let data = LabeledDataset::load(&input, ctx.cfg.dataset.epsilon)?;
    let c = &ctx.cfg.classifier;
    let mut opts = TrainOptions::new(c.lambda, ctx.cfg.seed.wrapping_add(3));
    opts.epochs = c.epochs;
    opts.train_fraction = c.train_fraction;
    let (ellipsoid, report) = classifier::train(&data, &opts)?;
    eprintln!(
        "train: accuracy {:.2}% train / {:.2}% validation",
        100.0 * report.train_accuracy,
        100.0 * report.validation_accuracy
    );
    let artifact = ClassifierArtifact { ellipsoid, report };
    fs::write(
        ctx.path("classifier.json"),
        serde_json::to_string_pretty(&artifact)?,
    )?;
    Ok(())
}

fn stage_approx(ctx: &Ctx) -> anyhow::Result<()> {
    let input = ctx.input_or("classifier.json");
    let artifact: ClassifierArtifact = serde_json::from_str(&fs::read_to_string(&input)?)?;
    let (m_mat, m_vec, r) = classifier::to_ball_form(&artifact.ellipsoid)?;
    let lifted = poly_geom::ball_approximation(ctx.h.t, r, ctx.cfg.approx.delta)?;
    let mapped = poly_geom::map_to_p(&lifted, &m_mat, &m_vec)?;
    let fm_opts = FmOptions {
        prune_budget: ctx.cfg.approx.prune_budget,
        row_cap: ctx.cfg.approx.row_cap,
    };
    let p_d = poly_geom::fourier_motzkin(&mapped, &fm_opts)?;
    eprintln!(
        "approx: {} lifted rows / {} auxiliaries -> {} facets",
        mapped.num_rows(),
        mapped.num_aux(),
        p_d.num_rows()
    );
    fs::write(ctx.path("pd.json"), serde_json::to_string_pretty(&p_d)?)?;
    Ok(())
}

fn stage_design(ctx: &Ctx) -> anyhow::Result<()> {
    let data = LabeledDataset::load(&ctx.input_or("dataset.jsonl"), ctx.cfg.dataset.epsilon)?;
    let p_d: HPolytope = serde_json::from_str(&fs::read_to_string(ctx.path("pd.json"))?)?;
    let g = ctx
        .g_matrix()
        .map_err(|e| anyhow!(cli_error_text(e)))?;
    let x_bar = flex_design::compute_prototype(&data, &g)?;
    let result = flex_design::farkas_design(&x_bar, &g, &p_d)?;
    eprintln!(
        "design: beta = {:.6}, {} target rows ({} dropped as redundant)",
        result.beta,
        result.diagnostics.num_target_rows,
        result.diagnostics.dropped_redundant_rows.len()
    );
    fs::write(
        ctx.path("prototype.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "x_bar": x_bar.iter().copied().collect::<Vec<f64>>()
        }))?,
    )?;
    fs::write(
        ctx.path("design.json"),
        serde_json::to_string_pretty(&result)?,
    )?;
    Ok(())
}

fn cli_error_text(e: CliError) -> String {
    match e {
        CliError::Config(m) => m,
        CliError::Stage(s, e) => format!("{s}: {e:#}"),
    }
}

#[derive(Serialize)]
struct VolumeEntry {
    estimate: f64,
    std_error: f64,
}

fn stage_evaluate(ctx: &Ctx) -> anyhow::Result<()> {
    let data = LabeledDataset::load(&ctx.input_or("dataset.jsonl"), ctx.cfg.dataset.epsilon)?;
    let p_d: HPolytope = serde_json::from_str(&fs::read_to_string(ctx.path("pd.json"))?)?;
    let artifact: ClassifierArtifact =
        serde_json::from_str(&fs::read_to_string(ctx.path("classifier.json"))?)?;
    let design: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ctx.path("design.json"))?)?;
    let x_star = DVector::from_vec(
        serde_json::from_value::<Vec<f64>>(design["x_star"].clone())
            .context("design.json: x_star")?,
    );
    let beta = design["beta"].as_f64().context("design.json: beta")?;
    let proto: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ctx.path("prototype.json"))?)?;
    let x_bar = DVector::from_vec(
        serde_json::from_value::<Vec<f64>>(proto["x_bar"].clone())
            .context("prototype.json: x_bar")?,
    );

    let p_star = ctx
        .polytope_of(&x_star)
        .map_err(|e| anyhow!(cli_error_text(e)))?;
    let p_proto = ctx
        .polytope_of(&x_bar)
        .map_err(|e| anyhow!(cli_error_text(e)))?;

    let n = ctx.cfg.eval.mc_samples;
    let seed = ctx.cfg.seed;
    let vol = |p: &HPolytope, s: u64| -> anyhow::Result<VolumeEntry> {
        let (estimate, std_error) = eval::mc_volume(p, n, s)?;
        Ok(VolumeEntry {
            estimate,
            std_error,
        })
    };
    let v_star = vol(&p_star, seed.wrapping_add(4))?;
    let v_proto = vol(&p_proto, seed.wrapping_add(5))?;
    let v_pd = vol(&p_d, seed.wrapping_add(6))?;

    let built = build_model(ctx)?;
    let v_truth = match &built.truth {
        Some(truth) => Some(vol(truth, seed.wrapping_add(7))?),
        None => None,
    };
    let ratio_to_truth = v_truth
        .as_ref()
        .map(|vt| v_star.estimate / vt.estimate.max(f64::MIN_POSITIVE));

    let m1 = eval::metric_m1(&data).map(Some).or_else(|e| match e {
        eval::EvalError::SingleClass | eval::EvalError::DegenerateHull => Ok(None),
        other => Err(other),
    })?;
    let m2 = eval::metric_m2(
        &data,
        &built.model,
        ctx.cfg.dataset.k,
        ctx.cfg.dataset.epsilon,
        ctx.cfg.eval.m2_count,
        seed.wrapping_add(8),
        &ctx.disagg_opts(),
    )?;

    let report = serde_json::json!({
        "seed": seed,
        "epsilon": ctx.cfg.dataset.epsilon,
        "num_points": data.points.len(),
        "feasible_fraction": data.feasible_fraction(),
        "train_accuracy": artifact.report.train_accuracy,
        "validation_accuracy": artifact.report.validation_accuracy,
        "beta": beta,
        "volumes": {
            "p_star": v_star,
            "prototype": v_proto,
            "p_d": v_pd,
            "ground_truth": v_truth,
        },
        "predicted_p_star_volume": flex_design::volume_scale(v_proto.estimate, beta, ctx.h.t)?,
        "ratio_to_truth": ratio_to_truth,
        "m1": m1,
        "m2": m2,
        "mc_samples": n,
        "m2_count": ctx.cfg.eval.m2_count,
    });
    fs::write(
        ctx.path("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    eprintln!(
        "evaluate: V(x*) = {:.4} +- {:.4}, m1 = {:?}, m2 = {:.3}",
        v_star.estimate, v_star.std_error, m1, m2
    );

    if ctx.h.t == 2 {
        emit_plots(ctx, &data, &p_star, &p_d, &artifact.ellipsoid, built.truth.as_ref())?;
    }
    Ok(())
}

fn write_outline(path: &Path, pts: &[(f64, f64)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["p1", "p2"])?;
    for (x, y) in pts {
        w.write_record([format!("{x:.12e}"), format!("{y:.12e}")])?;
    }
    // close the polyline
    if let Some((x, y)) = pts.first() {
        w.write_record([format!("{x:.12e}"), format!("{y:.12e}")])?;
    }
    w.flush()?;
    Ok(())
}

fn emit_plots(
    ctx: &Ctx,
    data: &LabeledDataset,
    p_star: &HPolytope,
    p_d: &HPolytope,
    ellipsoid: &Ellipsoid,
    truth: Option<&HPolytope>,
) -> anyhow::Result<()> {
    let dir = ctx.path("plots");
    fs::create_dir_all(&dir)?;
    write_outline(&dir.join("p_star.csv"), &eval::polytope_outline_2d(p_star, 256)?)?;
    write_outline(&dir.join("p_d.csv"), &eval::polytope_outline_2d(p_d, 256)?)?;
    if let Some(t) = truth {
        write_outline(&dir.join("truth.csv"), &eval::polytope_outline_2d(t, 256)?)?;
    }
    match eval::ellipsoid_outline_2d(ellipsoid, 256) {
        Ok(pts) => write_outline(&dir.join("ellipsoid.csv"), &pts)?,
        Err(eval::EvalError::Empty) => {}
        Err(e) => return Err(e.into()),
    }
    let mut w = csv::Writer::from_path(dir.join("dataset.csv"))?;
    w.write_record(["p1", "p2", "y"])?;
    for pt in &data.points {
        w.write_record([
            format!("{:.12e}", pt.p[0]),
            format!("{:.12e}", pt.p[1]),
            pt.y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct AuditCheck {
    name: String,
    passed: bool,
    detail: String,
}

fn stage_validate(ctx: &Ctx) -> anyhow::Result<i32> {
    let mut checks: Vec<AuditCheck> = Vec::new();
    let mut check = |name: &str, result: anyhow::Result<(bool, String)>| match result {
        Ok((passed, detail)) => checks.push(AuditCheck {
            name: name.into(),
            passed,
            detail,
        }),
        Err(e) => checks.push(AuditCheck {
            name: name.into(),
            passed: false,
            detail: format!("{e:#}"),
        }),
    };

    // presence
    let mut artifacts_ok = true;
    for name in ["dataset.jsonl", "classifier.json", "pd.json", "design.json"] {
        let path = ctx.path(name);
        let meta = fs::metadata(&path);
        let present = meta.as_ref().map(|m| m.len() > 0).unwrap_or(false);
        artifacts_ok &= present;
        check(
            &format!("artifact {name}"),
            Ok((
                present,
                if present {
                    "present".into()
                } else {
                    format!("missing-input: {}", path.display())
                },
            )),
        );
    }

    if artifacts_ok {
        // containment of the designed polytope in the inner approximation
        check("containment P(x*) in P_D", (|| {
            let p_d: HPolytope =
                serde_json::from_str(&fs::read_to_string(ctx.path("pd.json"))?)?;
            let design: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(ctx.path("design.json"))?)?;
            let x_star = DVector::from_vec(serde_json::from_value::<Vec<f64>>(
                design["x_star"].clone(),
            )?);
            let p_star = ctx
                .polytope_of(&x_star)
                .map_err(|e| anyhow!(cli_error_text(e)))?;
            let (ok, slack) = poly_geom::certify_containment(&p_star, &p_d)?;
            Ok((ok, format!("worst slack {slack:.3e}")))
        })());

        // ball-approximation sandwich at the trained radius
        check("ball sandwich", (|| {
            let artifact: ClassifierArtifact =
                serde_json::from_str(&fs::read_to_string(ctx.path("classifier.json"))?)?;
            let (_, _, r) = classifier::to_ball_form(&artifact.ellipsoid)?;
            let delta = ctx.cfg.approx.delta;
            let l = poly_geom::ball_approximation(ctx.h.t, r, delta)?;
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed.wrapping_add(9));
            let mut worst: f64 = 0.0;
            for _ in 0..100 {
                use rand::Rng;
                let mut u = DVector::from_fn(ctx.h.t, |_, _| rng.gen_range(-1.0..1.0f64));
                let norm = u.norm();
                if norm < 1e-6 {
                    continue;
                }
                u /= norm;
                let s = poly_geom::lifted_support(&l, &u)?;
                worst = worst.max(s - r).max(r / (1.0 + delta) - s);
            }
            Ok((worst <= 1e-7, format!("worst excess {worst:.3e}")))
        })());

        // label determinism on a dataset sample
        check("label determinism", (|| {
            let built = build_model(ctx)?;
            let data =
                LabeledDataset::load(&ctx.path("dataset.jsonl"), ctx.cfg.dataset.epsilon)?;
            let opts = ctx.disagg_opts();
            let mut ok = true;
            for (i, pt) in data.points.iter().take(3).enumerate() {
                let p = DVector::from_column_slice(&pt.p);
                let s = ctx.cfg.seed.wrapping_add(500 + i as u64);
                let a = disagg::label(&p, &built.model, ctx.cfg.dataset.k,
                    ctx.cfg.dataset.epsilon, s, &opts)?;
                let b = disagg::label(&p, &built.model, ctx.cfg.dataset.k,
                    ctx.cfg.dataset.epsilon, s, &opts)?;
                ok &= a.y == b.y && a.c == b.c;
            }
            Ok((ok, "3 points relabeled twice".into()))
        })());
    }

    let all_passed = checks.iter().all(|c| c.passed);
    let audit = serde_json::json!({"all_passed": all_passed, "checks": checks});
    fs::write(ctx.path("audit.json"), serde_json::to_string_pretty(&audit)?)?;
    for c in serde_json::from_value::<Vec<serde_json::Value>>(audit["checks"].clone())? {
        eprintln!(
            "validate: [{}] {} — {}",
            if c["passed"].as_bool().unwrap_or(false) {
                "PASS"
            } else {
                "FAIL"
            },
            c["name"].as_str().unwrap_or(""),
            c["detail"].as_str().unwrap_or("")
        );
    }
    Ok(if all_passed { 0 } else { 1 })
}
