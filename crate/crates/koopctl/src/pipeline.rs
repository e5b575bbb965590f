//! Stages shared by the subcommands and the end-to-end benchmark recipes.

use std::path::{Path, PathBuf};

use koopctl_core::controllability::{controllability_report, AccessibilityReport};
use koopctl_core::edmd::{fit_lifted_model, AssembleOptions, FitDiagnostics};
use koopctl_core::synthesis::{
    nearest_feasible_theta, solve_detmax, verify_clf, SynthesisConfig, SynthesisResult,
    SynthesisStatus,
};
use koopctl_core::systems::{
    closed_loop_simulate, generate_training_data, input_field_samples, simulate_unforced,
    uniform_initial_conditions, ControlAffineSystem, Henon, HenonParams, Trajectory, VanDerPol,
    VanDerPolParams,
};
use koopctl_core::{DMatrix, DVector, Dictionary, LiftedBilinearModel, SnapshotData};
use log::{info, warn};
use serde::Serialize;

use crate::io::{
    self, emit_plot_svg, file_sha256, write_model, write_timeseries_csv, ClfFile,
    ControllabilityFile, IoError, Manifest, ModelFile, PlotStyle, Provenance, Series,
    SynthesisFile, TimeSeries,
};

/// Norm below which a state counts as at the origin.
pub const CONVERGENCE_RADIUS: f64 = 1e-2;
/// Slack on `max(ΔV + (1 − θ)V)` accepted by the sampled CLF check.
pub const CLF_TOLERANCE: f64 = 1e-9;

/// A failed stage, carrying the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error("{stage}: {source}")]
    Core {
        stage: &'static str,
        source: koopctl_core::Error,
    },
    #[error("{stage}: {source}")]
    Io {
        stage: &'static str,
        source: IoError,
    },
    #[error("synth: {0}")]
    NoCertificate(String, SynthesisStatus),
    #[error("{0}")]
    Usage(String),
}

impl StageError {
    pub fn core(stage: &'static str) -> impl FnOnce(koopctl_core::Error) -> Self {
        move |source| StageError::Core { stage, source }
    }

    pub fn io(stage: &'static str) -> impl FnOnce(IoError) -> Self {
        move |source| match source {
            IoError::Core(source) => StageError::Core { stage, source },
            source => StageError::Io { stage, source },
        }
    }

    /// 2 blow-up, 3 fit failure, 4 infeasible, 5 unbounded, 64 usage, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            StageError::Core {
                source: koopctl_core::Error::BlowUp { .. },
                ..
            } => 2,
            StageError::Core { stage: "fit", .. } => 3,
            StageError::NoCertificate(_, SynthesisStatus::Unbounded) => 5,
            StageError::NoCertificate(..) => 4,
            StageError::Usage(_) => 64,
            _ => 1,
        }
    }
}

pub type StageResult<T> = Result<T, StageError>;

/// One of the two benchmark plants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Plant {
    VanDerPol(VanDerPolParams),
    Henon(HenonParams),
}

impl Plant {
    pub fn name(&self) -> &'static str {
        match self {
            Plant::VanDerPol(_) => "vdp",
            Plant::Henon(_) => "henon",
        }
    }

    pub fn system(&self) -> Box<dyn ControlAffineSystem> {
        match *self {
            Plant::VanDerPol(params) => Box::new(VanDerPol { params }),
            Plant::Henon(params) => Box::new(Henon { params }),
        }
    }

    /// Initial state when none is given.
    pub fn default_x0(&self) -> Vec<f64> {
        match self {
            Plant::VanDerPol(_) => vec![1.0, 1.0],
            Plant::Henon(_) => vec![0.0, 0.0],
        }
    }
}

/// Where the input direction `g(x)` of the fitted model comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InputField {
    /// Continuous-time direction, multiplied by the sampling step of the data
    /// when it has one.
    Constant(Vec<f64>),
    /// Exact discrete input direction of a built-in plant.
    Plant(Plant),
}

impl InputField {
    pub fn samples(&self, data: &SnapshotData, dt: Option<f64>) -> StageResult<DMatrix<f64>> {
        match self {
            InputField::Constant(g) => {
                if g.len() != data.state_dim() {
                    return Err(StageError::Usage(format!(
                        "--g has {} entries but the data has {} states",
                        g.len(),
                        data.state_dim()
                    )));
                }
                let scale = dt.unwrap_or(1.0);
                Ok(DMatrix::from_fn(data.len(), g.len(), |_, j| g[j] * scale))
            }
            InputField::Plant(p) => Ok(input_field_samples(p.system().as_ref(), data)),
        }
    }
}

/// Fitted model together with its file representation.
pub struct Fit {
    pub model: LiftedBilinearModel,
    pub diagnostics: FitDiagnostics,
    pub dictionary_size: usize,
    pub file: ModelFile,
}

/// SOURCE_DATE_EPOCH, when set to an integer.
pub fn source_date_epoch() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()
}

pub fn fit(
    series: &TimeSeries,
    data_path: &Path,
    degree: u32,
    constant: bool,
    g: &InputField,
) -> StageResult<Fit> {
    let data = series.snapshots().map_err(StageError::io("fit"))?;
    let dt = series.time_step().map_err(StageError::io("fit"))?;
    let dict = Dictionary::new(data.state_dim(), degree, constant).map_err(StageError::core("fit"))?;
    let g_samples = g.samples(&data, dt)?;
    let (model, _, diagnostics) =
        fit_lifted_model(&data, &dict, &g_samples, AssembleOptions::default())
            .map_err(StageError::core("fit"))?;
    if diagnostics.input_span_violated() {
        warn!(
            "fit: input direction is poorly represented in the dictionary span (relative residual {:e})",
            diagnostics.input_fit_residual
        );
    }
    let provenance = Provenance {
        data_sha256: file_sha256(data_path).map_err(StageError::io("fit"))?,
        fit_timestamp: source_date_epoch(),
        residuals: (&diagnostics).into(),
    };
    let file = ModelFile::new(&model, provenance);
    Ok(Fit {
        dictionary_size: dict.len(),
        model,
        diagnostics,
        file,
    })
}

/// Requested synthesis plus the relaxed retry used when it has no certificate.
#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub requested: SynthesisResult,
    pub nearest_theta: Option<f64>,
    pub relaxed: Option<SynthesisResult>,
}

impl SynthesisOutcome {
    /// Result used downstream: the requested one if it certifies, else the
    /// relaxed retry.
    pub fn used(&self) -> &SynthesisResult {
        if usable(&self.requested) {
            &self.requested
        } else {
            self.relaxed.as_ref().unwrap_or(&self.requested)
        }
    }
}

/// A certificate exists: either a solution or a point on an unbounded ray.
pub fn usable(r: &SynthesisResult) -> bool {
    r.status.has_certificate() || r.status == SynthesisStatus::Unbounded
}

/// Solves at the requested settings; on failure searches the nearest feasible
/// `θ` on `relax_grid` and solves again there.
pub fn synthesize(
    model: &LiftedBilinearModel,
    config: &SynthesisConfig,
    relax_grid: Option<&[f64]>,
) -> StageResult<SynthesisOutcome> {
    let requested = solve_detmax(&model.a, &model.b, config).map_err(StageError::core("synth"))?;
    info!(
        "synth: theta {} on {} multipliers -> {}",
        config.theta,
        config.epsilon_grid.len(),
        requested.status.as_str()
    );
    let mut outcome = SynthesisOutcome {
        requested,
        nearest_theta: None,
        relaxed: None,
    };
    if usable(&outcome.requested) {
        return Ok(outcome);
    }
    let Some(grid) = relax_grid else {
        return Ok(outcome);
    };
    let relaxed_config = SynthesisConfig {
        epsilon_grid: grid.to_vec(),
        ..config.clone()
    };
    outcome.nearest_theta = nearest_feasible_theta(&model.a, &model.b, &relaxed_config)
        .map_err(StageError::core("synth"))?;
    if let Some(theta) = outcome.nearest_theta {
        info!("synth: nearest feasible theta {theta}");
        let r = solve_detmax(
            &model.a,
            &model.b,
            &SynthesisConfig {
                theta,
                ..relaxed_config
            },
        )
        .map_err(StageError::core("synth"))?;
        info!("synth: relaxed run -> {}", r.status.as_str());
        outcome.relaxed = Some(r);
    } else {
        info!("synth: no feasible theta below 1 on the relaxed grid");
    }
    Ok(outcome)
}

/// `T` such that `‖x_t‖ < radius` for every `t ≥ T`, if any.
pub fn settle_step(traj: &Trajectory, radius: f64) -> Option<usize> {
    let norm = |x: &Vec<f64>| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let last_outside = traj.states.iter().rposition(|x| norm(x) >= radius);
    match last_outside {
        None => Some(0),
        Some(t) if t + 1 < traj.states.len() => Some(t + 1),
        Some(_) => None,
    }
}

pub fn state_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Draws `count` initial states whose lift lies in the ellipsoid, shrinking
/// the sampling box by half whenever a batch of candidates yields nothing.
/// States already within the convergence radius are skipped.
pub fn initial_states_in_ellipsoid(
    model: &LiftedBilinearModel,
    q: &DMatrix<f64>,
    count: usize,
    half_width: f64,
    seed: u64,
) -> StageResult<Vec<Vec<f64>>> {
    let ell = koopctl_core::synthesis::EllipsoidCertificate::new(q)
        .map_err(StageError::core("simulate"))?;
    let d = model.state_dim();
    let mut found = Vec::with_capacity(count);
    let mut width = half_width;
    for round in 0..40u64 {
        let ranges = vec![(-width, width); d];
        let mut hit = false;
        for x in uniform_initial_conditions(4000, &ranges, seed.wrapping_add(round)) {
            if state_norm(&x) <= CONVERGENCE_RADIUS {
                continue;
            }
            let z = model.lift(&x).map_err(StageError::core("simulate"))?;
            if ell.contains(&z) {
                found.push(x);
                hit = true;
                if found.len() == count {
                    return Ok(found);
                }
            }
        }
        if !hit {
            width *= 0.5;
        }
    }
    Ok(found)
}

/// Fixed settings of an end-to-end benchmark run.
#[derive(Debug, Clone)]
pub struct Recipe {
    pub name: &'static str,
    pub plant: Plant,
    /// Explicit training states; random ones are drawn when empty.
    pub training_x0: Vec<Vec<f64>>,
    pub training_random: usize,
    pub training_half_width: f64,
    pub training_steps: usize,
    pub degree: u32,
    pub constant: bool,
    pub synthesis: SynthesisConfig,
    /// Grid for the nearest-feasible-θ retry.
    pub relax_grid: Option<Vec<f64>>,
    pub ctrb_samples: usize,
    pub ctrb_radius: f64,
    pub clf_samples: usize,
    pub runs: usize,
    pub horizon: usize,
    pub burn_in: usize,
    pub ic_half_width: f64,
    pub seed: u64,
}

impl Recipe {
    /// Van der Pol, μ = 1, δt = 0.01, degree 5 with constant, θ = 0.001,
    /// ε = 0.01; 20 random training runs of 10 s in `[−3, 3]²`.
    pub fn vdp(seed: u64) -> Self {
        Self {
            name: "vdp",
            plant: Plant::VanDerPol(VanDerPolParams::default()),
            training_x0: Vec::new(),
            training_random: 20,
            training_half_width: 3.0,
            training_steps: 1000,
            degree: 5,
            constant: true,
            synthesis: SynthesisConfig::reference_benchmark(),
            relax_grid: Some(SynthesisConfig::default_epsilon_grid()),
            ctrb_samples: 100,
            ctrb_radius: 1.0,
            clf_samples: 10_000,
            runs: 10,
            horizon: 5000,
            burn_in: 1000,
            ic_half_width: 3.0,
            seed,
        }
    }

    /// The single 10 s training run from `(1, 1)`.
    pub fn vdp_single(seed: u64) -> Self {
        Self {
            name: "vdp-single",
            training_x0: vec![vec![1.0, 1.0]],
            training_random: 0,
            ..Self::vdp(seed)
        }
    }

    /// Hénon, a = 1.4, b = 0.3, 10000 steps from the origin, degree 2
    /// without constant; synthesis settings as for Van der Pol.
    pub fn henon(seed: u64) -> Self {
        Self {
            name: "henon",
            plant: Plant::Henon(HenonParams::default()),
            training_x0: vec![vec![0.0, 0.0]],
            training_random: 0,
            training_half_width: 0.0,
            training_steps: 10_000,
            degree: 2,
            constant: false,
            horizon: 2000,
            burn_in: 100,
            ic_half_width: 1.5,
            ..Self::vdp(seed)
        }
    }

    pub fn by_name(name: &str, seed: u64) -> Option<Self> {
        match name {
            "vdp" => Some(Self::vdp(seed)),
            "vdp-single" => Some(Self::vdp_single(seed)),
            "henon" => Some(Self::henon(seed)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub trajectories: usize,
    pub pairs: usize,
    pub truncated: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub dictionary_size: usize,
    pub n: usize,
    pub removed_direction: Option<usize>,
    pub regression_residual: f64,
    pub eigen_residual: f64,
    pub transform_condition: f64,
    pub input_fit_residual: f64,
    pub reconstruction_error: f64,
    pub max_eigenvalue_modulus: f64,
    pub b_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CtrbSummary {
    pub certified: bool,
    pub min_rank: usize,
    pub n: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub requested_theta: f64,
    pub requested_epsilon_grid: Vec<f64>,
    pub requested_status: String,
    pub nearest_feasible_theta: Option<f64>,
    pub relaxed_status: Option<String>,
    pub theta: f64,
    pub epsilon: f64,
    pub status: String,
    pub objective: Option<f64>,
    pub lmi_max_eigenvalue: f64,
    pub gain_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub x0: Vec<f64>,
    pub lifted_level: f64,
    pub open_loop_terminal_norm: Option<f64>,
    pub open_loop_max_norm_after_burn_in: Option<f64>,
    pub open_loop_blow_up_step: Option<usize>,
    pub closed_loop_terminal_norm: Option<f64>,
    pub closed_loop_settle_step: Option<usize>,
    pub closed_loop_blow_up_step: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub requested_runs: usize,
    pub horizon: usize,
    pub burn_in: usize,
    pub convergence_radius: f64,
    pub runs: Vec<RunSummary>,
    pub all_closed_loop_converged: bool,
}

/// Everything the acceptance checks read, filled stage by stage.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub recipe: String,
    pub seed: u64,
    pub completed: bool,
    pub failed_stage: Option<String>,
    pub data: Option<DataSummary>,
    pub fit: Option<FitSummary>,
    pub ctrb: Option<CtrbSummary>,
    pub synthesis: Option<SynthSummary>,
    pub clf: Option<ClfFile>,
    pub simulation: Option<SimulationSummary>,
}

/// Result of a pipeline run: the summary is written even when a stage fails.
pub struct PipelineRun {
    pub summary: PipelineSummary,
    pub outputs: Vec<PathBuf>,
    pub error: Option<StageError>,
}

pub fn run_pipeline(recipe: &Recipe, out: &Path) -> PipelineRun {
    let mut run = PipelineRun {
        summary: PipelineSummary {
            recipe: recipe.name.into(),
            seed: recipe.seed,
            completed: false,
            failed_stage: None,
            data: None,
            fit: None,
            ctrb: None,
            synthesis: None,
            clf: None,
            simulation: None,
        },
        outputs: Vec::new(),
        error: None,
    };
    if let Err(e) = pipeline_stages(recipe, out, &mut run) {
        let stage = match &e {
            StageError::Core { stage, .. } | StageError::Io { stage, .. } => *stage,
            StageError::NoCertificate(..) => "synth",
            StageError::Usage(_) => "usage",
        };
        run.summary.failed_stage = Some(stage.into());
        run.error = Some(e);
    } else {
        run.summary.completed = true;
    }
    let path = out.join("summary.json");
    match io::write_json(&path, &run.summary) {
        Ok(()) => run.outputs.push(path),
        Err(e) => {
            if run.error.is_none() {
                run.error = Some(StageError::Io {
                    stage: "pipeline",
                    source: e,
                });
            }
        }
    }
    run
}

fn pipeline_stages(recipe: &Recipe, out: &Path, run: &mut PipelineRun) -> StageResult<()> {
    let system = recipe.plant.system();
    let d = system.state_dim();

    // gen-data
    let x0_list = if recipe.training_x0.is_empty() {
        let w = recipe.training_half_width;
        uniform_initial_conditions(recipe.training_random, &vec![(-w, w); d], recipe.seed)
    } else {
        recipe.training_x0.clone()
    };
    let training = generate_training_data(system.as_ref(), &x0_list, recipe.training_steps)
        .map_err(StageError::core("gen-data"))?;
    for t in &training.truncated {
        warn!("gen-data: trajectory {} blew up at step {}", t.trajectory, t.step);
    }
    let data_path = out.join("data.csv");
    write_timeseries_csv(&data_path, &training.trajectories).map_err(StageError::io("gen-data"))?;
    run.outputs.push(data_path.clone());
    run.summary.data = Some(DataSummary {
        trajectories: training.trajectories.len(),
        pairs: training.data.len(),
        truncated: training.truncated.len(),
    });

    // fit, from the written file so the model hashes what is on disk
    let series = io::read_timeseries_csv(&data_path).map_err(StageError::io("fit"))?;
    let fitted = fit(
        &series,
        &data_path,
        recipe.degree,
        recipe.constant,
        &InputField::Plant(recipe.plant),
    )?;
    let model_path = out.join("model.json");
    write_model(&model_path, &fitted.file).map_err(StageError::io("fit"))?;
    run.outputs.push(model_path);
    let model = fitted.model;
    run.summary.fit = Some(FitSummary {
        dictionary_size: fitted.dictionary_size,
        n: model.dim(),
        removed_direction: model.removed_direction,
        regression_residual: fitted.diagnostics.regression_residual,
        eigen_residual: fitted.diagnostics.eigen_residual,
        transform_condition: fitted.diagnostics.transform_condition,
        input_fit_residual: fitted.diagnostics.input_fit_residual,
        reconstruction_error: fitted.diagnostics.reconstruction_error,
        max_eigenvalue_modulus: model
            .eigenvalues
            .iter()
            .map(|z| z.re.hypot(z.im))
            .fold(0.0, f64::max),
        b_norm: model.b.norm(),
    });

    // ctrb
    let report = controllability_report(
        &model,
        recipe.ctrb_samples,
        recipe.seed.wrapping_add(1),
        recipe.ctrb_radius,
    )
    .map_err(StageError::core("ctrb"))?;
    let ctrb_path = out.join("ctrb.json");
    io::write_json(&ctrb_path, &ControllabilityFile::from(&report))
        .map_err(StageError::io("ctrb"))?;
    run.outputs.push(ctrb_path);
    run.summary.ctrb = Some(ctrb_summary(&report));

    // synth
    let outcome = synthesize(&model, &recipe.synthesis, recipe.relax_grid.as_deref())?;
    let requested_path = out.join("synth_requested.json");
    io::write_json(&requested_path, &SynthesisFile::from(&outcome.requested))
        .map_err(StageError::io("synth"))?;
    run.outputs.push(requested_path);
    let used = outcome.used().clone();
    let synth_path = out.join("synth.json");
    io::write_json(&synth_path, &SynthesisFile::from(&used)).map_err(StageError::io("synth"))?;
    run.outputs.push(synth_path);
    run.summary.synthesis = Some(SynthSummary {
        requested_theta: recipe.synthesis.theta,
        requested_epsilon_grid: recipe.synthesis.epsilon_grid.clone(),
        requested_status: outcome.requested.status.as_str().into(),
        nearest_feasible_theta: outcome.nearest_theta,
        relaxed_status: outcome.relaxed.as_ref().map(|r| r.status.as_str().into()),
        theta: used.theta,
        epsilon: used.epsilon,
        status: used.status.as_str().into(),
        objective: used.objective.is_finite().then_some(used.objective),
        lmi_max_eigenvalue: used.lmi_max_eigenvalue,
        gain_norm: used.k.norm(),
    });
    if !usable(&used) {
        return Err(StageError::NoCertificate(
            format!(
                "no certificate at theta {} (requested {}), status {}",
                used.theta,
                recipe.synthesis.theta,
                used.status.as_str()
            ),
            used.status,
        ));
    }

    // clf
    let clf = verify_clf(
        &model.a,
        &model.b,
        &used.q,
        &used.k,
        used.theta,
        recipe.clf_samples,
        recipe.seed.wrapping_add(2),
        CLF_TOLERANCE,
    )
    .map_err(StageError::core("clf"))?;
    let clf_file = ClfFile::from(&clf);
    let clf_path = out.join("clf.json");
    io::write_json(&clf_path, &clf_file).map_err(StageError::io("clf"))?;
    run.outputs.push(clf_path);
    run.summary.clf = Some(clf_file);

    // simulate
    let starts = initial_states_in_ellipsoid(
        &model,
        &used.q,
        recipe.runs,
        recipe.ic_half_width,
        recipe.seed.wrapping_add(3),
    )?;
    if starts.len() < recipe.runs {
        warn!(
            "simulate: found {} of {} initial states inside the ellipsoid",
            starts.len(),
            recipe.runs
        );
    }
    let ell = used.ellipsoid().map_err(StageError::core("simulate"))?;
    let mut open = Vec::new();
    let mut closed = Vec::new();
    let mut runs = Vec::new();
    for x0 in &starts {
        let z0 = model.lift(x0).map_err(StageError::core("simulate"))?;
        let mut summary = RunSummary {
            x0: x0.clone(),
            lifted_level: ell.level(&z0),
            open_loop_terminal_norm: None,
            open_loop_max_norm_after_burn_in: None,
            open_loop_blow_up_step: None,
            closed_loop_terminal_norm: None,
            closed_loop_settle_step: None,
            closed_loop_blow_up_step: None,
        };
        match simulate_unforced(system.as_ref(), x0, recipe.horizon) {
            Ok(t) => {
                summary.open_loop_terminal_norm = Some(state_norm(t.last()));
                summary.open_loop_max_norm_after_burn_in = Some(
                    t.states
                        .iter()
                        .skip(recipe.burn_in)
                        .map(|x| state_norm(x))
                        .fold(0.0, f64::max),
                );
                open.push(t);
            }
            Err(koopctl_core::Error::BlowUp { step }) => summary.open_loop_blow_up_step = Some(step),
            Err(e) => return Err(StageError::core("simulate")(e)),
        }
        match closed_loop_simulate(system.as_ref(), &model, &used.k, x0, recipe.horizon, None) {
            Ok(t) => {
                summary.closed_loop_terminal_norm = Some(state_norm(t.last()));
                summary.closed_loop_settle_step = settle_step(&t, CONVERGENCE_RADIUS);
                closed.push(t);
            }
            Err(koopctl_core::Error::BlowUp { step }) => {
                summary.closed_loop_blow_up_step = Some(step)
            }
            Err(e) => return Err(StageError::core("simulate")(e)),
        }
        runs.push(summary);
    }
    let all_converged = !runs.is_empty()
        && runs.len() == recipe.runs
        && runs
            .iter()
            .all(|r| r.closed_loop_settle_step.is_some_and(|t| t <= recipe.horizon));
    run.summary.simulation = Some(SimulationSummary {
        requested_runs: recipe.runs,
        horizon: recipe.horizon,
        burn_in: recipe.burn_in,
        convergence_radius: CONVERGENCE_RADIUS,
        runs,
        all_closed_loop_converged: all_converged,
    });
    for (name, trajs) in [("open_loop.csv", &open), ("closed_loop.csv", &closed)] {
        if trajs.is_empty() {
            continue;
        }
        let path = out.join(name);
        write_timeseries_csv(&path, trajs).map_err(StageError::io("simulate"))?;
        run.outputs.push(path);
    }

    // plot
    let mut series = Vec::new();
    if let Some(t) = open.first() {
        series.push(phase_series("open loop", t));
    }
    if let Some(t) = closed.first() {
        series.push(phase_series("closed loop", t));
    }
    if !series.is_empty() {
        let path = out.join("trajectories.svg");
        let style = PlotStyle {
            title: format!("{}: open and closed loop", recipe.name),
            ..PlotStyle::default()
        };
        emit_plot_svg(&series, &style, &path).map_err(StageError::io("plot"))?;
        run.outputs.push(path);
    }
    Ok(())
}

pub fn ctrb_summary(report: &AccessibilityReport) -> CtrbSummary {
    CtrbSummary {
        certified: report.certified,
        min_rank: report.min_rank(),
        n: report.n,
        samples: report.samples.len(),
    }
}

/// First two state coordinates of a trajectory.
pub fn phase_series(label: &str, t: &Trajectory) -> Series {
    Series {
        label: label.into(),
        points: t
            .states
            .iter()
            .map(|x| (x[0], x.get(1).copied().unwrap_or(0.0)))
            .collect(),
    }
}

/// Manifest for a pipeline directory.
pub fn pipeline_manifest(args: Vec<String>, recipe: &Recipe, run: &PipelineRun) -> StageResult<Manifest> {
    let mut m = Manifest::new("pipeline", args, recipe.seed);
    for p in &run.outputs {
        m.add_output(p).map_err(StageError::io("pipeline"))?;
    }
    m.exit_code = run.error.as_ref().map_or(0, StageError::exit_code);
    Ok(m)
}

/// The gain as a vector the size of the model.
pub fn zero_gain(model: &LiftedBilinearModel) -> DVector<f64> {
    DVector::zeros(model.dim())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(norms: &[f64]) -> Trajectory {
        Trajectory {
            states: norms.iter().map(|&n| vec![n, 0.0]).collect(),
            inputs: None,
            dt: None,
        }
    }

    #[test]
    fn settle_step_cases() {
        assert_eq!(settle_step(&traj(&[1.0, 0.1, 0.001, 0.0]), 1e-2), Some(2));
        assert_eq!(settle_step(&traj(&[1.0, 0.001, 0.5, 0.001]), 1e-2), Some(3));
        assert_eq!(settle_step(&traj(&[1.0, 0.5]), 1e-2), None);
        assert_eq!(settle_step(&traj(&[0.0]), 1e-2), Some(0));
    }

    #[test]
    fn exit_codes() {
        let blow = StageError::core("simulate")(koopctl_core::Error::BlowUp { step: 3 });
        assert_eq!(blow.exit_code(), 2);
        let fit = StageError::core("fit")(koopctl_core::Error::NoConstantDirection);
        assert_eq!(fit.exit_code(), 3);
        assert_eq!(StageError::NoCertificate(String::new(), SynthesisStatus::Infeasible).exit_code(), 4);
        assert_eq!(StageError::NoCertificate(String::new(), SynthesisStatus::Unbounded).exit_code(), 5);
        assert_eq!(StageError::Usage(String::new()).exit_code(), 64);
        assert!(fit.to_string().starts_with("fit: "));
    }

    #[test]
    fn constant_input_field_scales_by_step() {
        let data = SnapshotData::from_pairs(&[(vec![0.0, 1.0], vec![1.0, 1.0])]).unwrap();
        let g = InputField::Constant(vec![0.0, 1.0]);
        assert_eq!(g.samples(&data, Some(0.01)).unwrap()[(0, 1)], 0.01);
        assert_eq!(g.samples(&data, None).unwrap()[(0, 1)], 1.0);
        assert!(matches!(
            InputField::Constant(vec![1.0]).samples(&data, None),
            Err(StageError::Usage(_))
        ));
    }

    #[test]
    fn recipes_by_name() {
        assert_eq!(Recipe::by_name("henon", 1).unwrap().degree, 2);
        assert_eq!(Recipe::by_name("vdp", 1).unwrap().synthesis.theta, 0.001);
        assert!(Recipe::by_name("lorenz", 1).is_none());
    }
}
