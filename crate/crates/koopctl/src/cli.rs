//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use koopctl_core::controllability::controllability_report;
use koopctl_core::synthesis::{SynthesisConfig, SynthesisStatus, VariableBox};
use koopctl_core::systems::{
    closed_loop_simulate, generate_training_data, uniform_initial_conditions, HenonParams,
    VanDerPolParams,
};
use koopctl_core::DVector;
use log::{info, warn};

use crate::io::{
    self, emit_plot_svg, read_model, read_timeseries_csv, write_model, write_timeseries_csv,
    ControllabilityFile, Manifest, PlotStyle, RunConfig, Series, SynthesisFile,
};
use crate::pipeline::{
    self, fit, phase_series, pipeline_manifest, run_pipeline, synthesize, InputField, Plant,
    Recipe, StageError, StageResult,
};

pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "koopctl", version, about = "Bilinear Koopman lifting and LMI feedback synthesis")]
pub struct Cli {
    /// JSON run configuration; its values take precedence over flags.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for default outputs and the manifest.
    #[arg(long, global = true, env = "KOOPCTL_OUT", value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemName {
    Vdp,
    Henon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecipeName {
    Vdp,
    VdpSingle,
    Henon,
}

#[derive(Debug, Args)]
pub struct PlantArgs {
    #[arg(long, value_enum)]
    pub system: Option<SystemName>,
    /// Van der Pol damping.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Van der Pol sampling step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Hénon parameter a.
    #[arg(long)]
    pub a: Option<f64>,
    /// Hénon parameter b.
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the unforced plant and write a time-series CSV.
    GenData {
        #[command(flatten)]
        plant: PlantArgs,
        /// Transitions per trajectory.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "random_x0")]
        x0: Option<Vec<f64>>,
        /// Number of random initial states.
        #[arg(long)]
        random_x0: Option<usize>,
        /// Half width of the box random initial states are drawn from.
        #[arg(long, default_value_t = 3.0)]
        range: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the lifted bilinear model to a time series.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        degree: Option<u32>,
        /// Include the constant monomial.
        #[arg(long, action = clap::ArgAction::Set)]
        constant: Option<bool>,
        /// Input direction: a constant vector such as `0,1` (multiplied by
        /// the sampling step when the data has one) or `vdp` / `henon`.
        #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
        g: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the accessibility rank of a model.
    Ctrb {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximize the stabilizability ellipsoid of a model.
    Synth {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        eps_grid: Option<Vec<f64>>,
        /// Bounds `q_max,y_max` on the entries of Q and on ‖y‖.
        #[arg(long = "box", value_delimiter = ',', num_args = 1, value_name = "Q_MAX,Y_MAX")]
        bounds: Option<Vec<f64>>,
        /// When no certificate exists, search the nearest feasible theta on
        /// the default multiplier grid and solve there.
        #[arg(long)]
        relax: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the plant under the lifted feedback `u = kᵀ W Φ(x)`.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// `zero` or a synthesis result file.
        #[arg(long, default_value = "zero")]
        gain: String,
        #[command(flatten)]
        plant: PlantArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, allow_hyphen_values = true)]
        u_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        u_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot the first two coordinates of time-series files.
    Plot {
        #[arg(long, required = true, num_args = 1..)]
        traj: Vec<PathBuf>,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark end to end.
    Pipeline {
        #[arg(long, value_enum)]
        recipe: RecipeName,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    let args: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("koopctl: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

struct Context {
    config: RunConfig,
    config_json: Option<serde_json::Value>,
    seed: u64,
    out_dir: PathBuf,
    args: Vec<String>,
}

impl Context {
    fn output(&self, explicit: Option<PathBuf>, default: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.out_dir.join(default))
    }

    fn manifest(&self, command: &str) -> Manifest {
        let mut m = Manifest::new(command, self.args.clone(), self.seed);
        m.config = self.config_json.clone();
        m
    }
}

fn execute(cli: Cli, args: Vec<String>) -> StageResult<i32> {
    let (config, config_json) = match &cli.config {
        Some(path) => {
            let cfg = RunConfig::load(path).map_err(StageError::io("config"))?;
            let json = serde_json::to_value(&cfg).ok();
            (cfg, json)
        }
        None => (RunConfig::default(), None),
    };
    let ctx = Context {
        seed: config.seed.unwrap_or(cli.seed),
        out_dir: config
            .out_dir
            .clone()
            .or(cli.out_dir)
            .unwrap_or_else(|| PathBuf::from(".")),
        config,
        config_json,
        args,
    };
    match cli.command {
        Command::GenData {
            plant,
            steps,
            x0,
            random_x0,
            range,
            out,
        } => gen_data(&ctx, plant, steps, x0, random_x0, range, out),
        Command::Fit {
            data,
            degree,
            constant,
            g,
            out,
        } => fit_command(&ctx, data, degree, constant, &g, out),
        Command::Ctrb {
            model,
            samples,
            radius,
            out,
        } => ctrb(&ctx, &model, samples, radius, out),
        Command::Synth {
            model,
            theta,
            eps_grid,
            bounds,
            relax,
            out,
        } => synth(&ctx, &model, theta, eps_grid, bounds, relax, out),
        Command::Simulate {
            model,
            gain,
            plant,
            x0,
            steps,
            u_min,
            u_max,
            out,
        } => simulate(&ctx, &model, &gain, plant, x0, steps, (u_min, u_max), out),
        Command::Plot { traj, title, out } => plot(&ctx, &traj, title, out),
        Command::Pipeline { recipe } => pipeline_command(&ctx, recipe),
    }
}

fn finish(ctx: &Context, mut manifest: Manifest, outputs: &[&Path], code: i32) -> StageResult<i32> {
    for p in outputs {
        manifest.add_output(p).map_err(StageError::io("manifest"))?;
    }
    manifest.exit_code = code;
    manifest.write(&ctx.out_dir).map_err(StageError::io("manifest"))?;
    Ok(code)
}

fn plant_from(ctx: &Context, args: &PlantArgs) -> StageResult<Plant> {
    let cfg = &ctx.config.system;
    let name = match cfg.name.as_deref() {
        Some("vdp") => Some(SystemName::Vdp),
        Some("henon") => Some(SystemName::Henon),
        _ => args.system,
    };
    match name {
        None => Err(StageError::Usage("missing --system (vdp or henon)".into())),
        Some(SystemName::Vdp) => {
            let d = VanDerPolParams::default();
            let params = VanDerPolParams::new(
                cfg.mu.or(args.mu).unwrap_or(d.mu),
                cfg.dt.or(args.dt).unwrap_or(d.dt),
            )
            .map_err(|e| StageError::Usage(format!("gen-data: {e}")))?;
            Ok(Plant::VanDerPol(params))
        }
        Some(SystemName::Henon) => {
            let d = HenonParams::default();
            let params = HenonParams {
                a: cfg.a.or(args.a).unwrap_or(d.a),
                b: cfg.b.or(args.b).unwrap_or(d.b),
            };
            if !(params.a.is_finite() && params.b.is_finite()) {
                return Err(StageError::Usage("Hénon parameters must be finite".into()));
            }
            Ok(Plant::Henon(params))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn gen_data(
    ctx: &Context,
    plant_args: PlantArgs,
    steps: usize,
    x0: Option<Vec<f64>>,
    random_x0: Option<usize>,
    range: f64,
    out: Option<PathBuf>,
) -> StageResult<i32> {
    let plant = plant_from(ctx, &plant_args)?;
    let steps = ctx.config.simulation.training_steps.unwrap_or(steps);
    let random_x0 = ctx.config.simulation.training_trajectories.or(random_x0);
    let system = plant.system();
    let d = system.state_dim();
    let x0_list = match (x0, random_x0) {
        (_, Some(k)) => {
            if k == 0 || !(range > 0.0) {
                return Err(StageError::Usage("--random-x0 needs K ≥ 1 and a positive --range".into()));
            }
            uniform_initial_conditions(k, &vec![(-range, range); d], ctx.seed)
        }
        (Some(x), None) => {
            if x.len() != d {
                return Err(StageError::Usage(format!("--x0 needs {d} values")));
            }
            vec![x]
        }
        (None, None) => vec![plant.default_x0()],
    };
    let training = generate_training_data(system.as_ref(), &x0_list, steps)
        .map_err(|e| StageError::Usage(format!("gen-data: {e}")))?;
    let path = ctx.output(out, "data.csv");
    write_timeseries_csv(&path, &training.trajectories).map_err(StageError::io("gen-data"))?;
    println!(
        "gen-data: {} {} trajectories, {} pairs -> {}",
        plant.name(),
        training.trajectories.len(),
        training.data.len(),
        path.display()
    );
    let code = match training.truncated.first() {
        Some(t) => {
            eprintln!(
                "koopctl: gen-data: trajectory {} blew up at step {} ({} truncated)",
                t.trajectory,
                t.step,
                training.truncated.len()
            );
            2
        }
        None => 0,
    };
    finish(ctx, ctx.manifest("gen-data"), &[&path], code)
}

fn parse_g(spec: &str) -> StageResult<InputField> {
    match spec.trim() {
        "vdp" => Ok(InputField::Plant(Plant::VanDerPol(VanDerPolParams::default()))),
        "henon" => Ok(InputField::Plant(Plant::Henon(HenonParams::default()))),
        s => s
            .split(',')
            .map(|v| v.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .map(InputField::Constant)
            .ok_or_else(|| StageError::Usage(format!("--g: `{spec}` is neither a vector nor vdp/henon"))),
    }
}

fn fit_command(
    ctx: &Context,
    data: Option<PathBuf>,
    degree: Option<u32>,
    constant: Option<bool>,
    g: &str,
    out: Option<PathBuf>,
) -> StageResult<i32> {
    let data = ctx
        .config
        .data
        .clone()
        .or(data)
        .ok_or_else(|| StageError::Usage("fit: missing --data".into()))?;
    let degree = ctx.config.dictionary.degree.or(degree).unwrap_or(5);
    let constant = ctx.config.dictionary.constant.or(constant).unwrap_or(true);
    let mut g = parse_g(g)?;
    let series = read_timeseries_csv(&data).map_err(StageError::io("fit"))?;
    if let InputField::Plant(Plant::VanDerPol(_)) = g {
        // the named field follows the sampling step of the data
        g = InputField::Constant(vec![0.0, 1.0]);
    }
    let fitted = fit(&series, &data, degree, constant, &g)?;
    let path = ctx.output(out, "model.json");
    write_model(&path, &fitted.file).map_err(StageError::io("fit"))?;
    let d = &fitted.diagnostics;
    println!(
        "fit: {} dictionary functions, n = {}{}; regression residual {:.3e}, reconstruction error {:.3e}, transform condition {:.3e} -> {}",
        fitted.dictionary_size,
        fitted.model.dim(),
        if fitted.model.removed_direction.is_some() { " after removing the constant direction" } else { "" },
        d.regression_residual,
        d.reconstruction_error,
        d.transform_condition,
        path.display()
    );
    let mut manifest = ctx.manifest("fit");
    manifest.add_input(&data).map_err(StageError::io("fit"))?;
    finish(ctx, manifest, &[&path], 0)
}

fn load_model(path: &Path, stage: &'static str) -> StageResult<koopctl_core::LiftedBilinearModel> {
    read_model(path)
        .and_then(|f| f.to_model())
        .map_err(StageError::io(stage))
}

fn ctrb(ctx: &Context, model_path: &Path, samples: usize, radius: f64, out: Option<PathBuf>) -> StageResult<i32> {
    let model = load_model(model_path, "ctrb")?;
    let report = controllability_report(&model, samples, ctx.seed, radius)
        .map_err(|e| StageError::Usage(format!("ctrb: {e}")))?;
    let path = ctx.output(out, "ctrb.json");
    io::write_json(&path, &ControllabilityFile::from(&report)).map_err(StageError::io("ctrb"))?;
    println!(
        "ctrb: n = {}, min rank {}, certified {} -> {}",
        report.n,
        report.min_rank(),
        report.certified,
        path.display()
    );
    let mut manifest = ctx.manifest("ctrb");
    manifest.add_input(model_path).map_err(StageError::io("ctrb"))?;
    finish(ctx, manifest, &[&path], 0)
}

fn synth(
    ctx: &Context,
    model_path: &Path,
    theta: Option<f64>,
    eps_grid: Option<Vec<f64>>,
    bounds: Option<Vec<f64>>,
    relax: bool,
    out: Option<PathBuf>,
) -> StageResult<i32> {
    let model = load_model(model_path, "synth")?;
    let sc = &ctx.config.synthesis;
    let mut config = SynthesisConfig::default();
    if let Some(t) = sc.theta.or(theta) {
        config.theta = t;
    }
    if let Some(g) = sc.eps_grid.clone().or(eps_grid) {
        config.epsilon_grid = g;
    }
    let bounds = sc.bounds.map(|b| b.to_vec()).or(bounds);
    config.bounds = match bounds.as_deref() {
        None => None,
        Some([q_max, y_max]) => Some(VariableBox {
            q_max: *q_max,
            y_max: *y_max,
        }),
        Some(_) => return Err(StageError::Usage("--box needs Q_MAX,Y_MAX".into())),
    };
    config
        .validate()
        .map_err(|e| StageError::Usage(format!("synth: {e}")))?;
    let relax_grid = SynthesisConfig::default_epsilon_grid();
    let outcome = synthesize(&model, &config, relax.then_some(relax_grid.as_slice()))?;
    let path = ctx.output(out, "synth.json");
    let used = outcome.used();
    io::write_json(&path, &SynthesisFile::from(used)).map_err(StageError::io("synth"))?;
    let mut outputs = vec![path.clone()];
    if outcome.relaxed.is_some() {
        let requested = path.with_file_name(format!(
            "{}.requested.json",
            path.file_stem().map_or("synth".into(), |s| s.to_string_lossy())
        ));
        io::write_json(&requested, &SynthesisFile::from(&outcome.requested))
            .map_err(StageError::io("synth"))?;
        outputs.push(requested);
    }
    if outcome.requested.status == SynthesisStatus::Infeasible {
        warn!("synth: infeasible at theta {}", config.theta);
        if let Some(t) = outcome.nearest_theta {
            println!("synth: nearest feasible theta {t}");
        }
    }
    println!(
        "synth: theta {}, epsilon {}, status {}, log det Q {}, LMI max eigenvalue {:.3e} -> {}",
        used.theta,
        used.epsilon,
        used.status.as_str(),
        used.objective,
        used.lmi_max_eigenvalue,
        path.display()
    );
    let code = match used.status {
        SynthesisStatus::Optimal | SynthesisStatus::Feasible => 0,
        SynthesisStatus::Infeasible => 4,
        SynthesisStatus::Unbounded => 5,
    };
    let mut manifest = ctx.manifest("synth");
    manifest.add_input(model_path).map_err(StageError::io("synth"))?;
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    finish(ctx, manifest, &refs, code)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    ctx: &Context,
    model_path: &Path,
    gain: &str,
    plant_args: PlantArgs,
    x0: Vec<f64>,
    steps: usize,
    (u_min, u_max): (Option<f64>, Option<f64>),
    out: Option<PathBuf>,
) -> StageResult<i32> {
    let model = load_model(model_path, "simulate")?;
    let plant = plant_from(ctx, &plant_args)?;
    let steps = ctx.config.simulation.steps.unwrap_or(steps);
    let mut manifest = ctx.manifest("simulate");
    manifest.add_input(model_path).map_err(StageError::io("simulate"))?;
    let k = if gain == "zero" {
        pipeline::zero_gain(&model)
    } else {
        let gain_path = Path::new(gain);
        let file: SynthesisFile = io::read_json(gain_path).map_err(StageError::io("simulate"))?;
        manifest.add_input(gain_path).map_err(StageError::io("simulate"))?;
        DVector::from_vec(file.k)
    };
    let bounds = match (u_min, u_max) {
        (None, None) => None,
        (lo, hi) => Some((lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))),
    };
    let system = plant.system();
    if x0.is_empty() {
        return Err(StageError::Usage("simulate: missing --x0".into()));
    }
    let traj = closed_loop_simulate(system.as_ref(), &model, &k, &x0, steps, bounds)
        .map_err(|e| match e {
            koopctl_core::Error::BlowUp { .. } => StageError::core("simulate")(e),
            e => StageError::Usage(format!("simulate: {e}")),
        })?;
    let path = ctx.output(out, "trajectory.csv");
    write_timeseries_csv(&path, std::slice::from_ref(&traj)).map_err(StageError::io("simulate"))?;
    println!(
        "simulate: {} steps, terminal norm {:.3e} -> {}",
        steps,
        pipeline::state_norm(traj.last()),
        path.display()
    );
    finish(ctx, manifest, &[&path], 0)
}

fn plot(ctx: &Context, files: &[PathBuf], title: Option<String>, out: Option<PathBuf>) -> StageResult<i32> {
    let mut series: Vec<Series> = Vec::new();
    let mut manifest = ctx.manifest("plot");
    for f in files {
        let ts = read_timeseries_csv(f).map_err(StageError::io("plot"))?;
        manifest.add_input(f).map_err(StageError::io("plot"))?;
        let stem = f.file_stem().map_or_else(|| f.display().to_string(), |s| s.to_string_lossy().into_owned());
        let many = ts.trajectories.len() > 1;
        for (i, t) in ts.trajectories.iter().enumerate() {
            let label = if many { format!("{stem} #{}", i + 1) } else { stem.clone() };
            series.push(phase_series(&label, t));
        }
    }
    let path = ctx.output(out, "plot.svg");
    let style = PlotStyle {
        title: title.unwrap_or_default(),
        ..PlotStyle::default()
    };
    emit_plot_svg(&series, &style, &path).map_err(StageError::io("plot"))?;
    println!("plot: {} series -> {}", series.len(), path.display());
    finish(ctx, manifest, &[&path], 0)
}

fn pipeline_command(ctx: &Context, name: RecipeName) -> StageResult<i32> {
    let mut recipe = match name {
        RecipeName::Vdp => Recipe::vdp(ctx.seed),
        RecipeName::VdpSingle => Recipe::vdp_single(ctx.seed),
        RecipeName::Henon => Recipe::henon(ctx.seed),
    };
    apply_config(&ctx.config, &mut recipe);
    info!("pipeline: recipe {} into {}", recipe.name, ctx.out_dir.display());
    let run = run_pipeline(&recipe, &ctx.out_dir);
    let manifest = {
        let mut m = pipeline_manifest(ctx.args.clone(), &recipe, &run)?;
        m.config = ctx.config_json.clone();
        m
    };
    manifest.write(&ctx.out_dir).map_err(StageError::io("pipeline"))?;
    let s = &run.summary;
    if let Some(syn) = &s.synthesis {
        println!(
            "pipeline: synthesis requested theta {} -> {}; used theta {} epsilon {} -> {}",
            syn.requested_theta, syn.requested_status, syn.theta, syn.epsilon, syn.status
        );
    }
    if let Some(sim) = &s.simulation {
        println!(
            "pipeline: {} runs, closed loop converged in all: {}",
            sim.runs.len(),
            sim.all_closed_loop_converged
        );
    }
    println!("pipeline: summary -> {}", ctx.out_dir.join("summary.json").display());
    match run.error {
        Some(e) => Err(e),
        None => Ok(0),
    }
}

fn apply_config(cfg: &RunConfig, recipe: &mut Recipe) {
    if let Some(d) = cfg.dictionary.degree {
        recipe.degree = d;
    }
    if let Some(c) = cfg.dictionary.constant {
        recipe.constant = c;
    }
    if let Some(t) = cfg.synthesis.theta {
        recipe.synthesis.theta = t;
    }
    if let Some(g) = &cfg.synthesis.eps_grid {
        recipe.synthesis.epsilon_grid = g.clone();
    }
    if let Some([q_max, y_max]) = cfg.synthesis.bounds {
        recipe.synthesis.bounds = Some(VariableBox { q_max, y_max });
    }
    if let Some(s) = cfg.simulation.steps {
        recipe.horizon = s;
    }
    if let Some(r) = cfg.simulation.runs {
        recipe.runs = r;
    }
    if let Some(n) = cfg.simulation.training_steps {
        recipe.training_steps = n;
    }
    if let Some(n) = cfg.simulation.training_trajectories {
        recipe.training_random = n;
        recipe.training_x0.clear();
    }
}
