//! `chj`: command-line interface to the contact Hamilton-Jacobi toolkit.
//!
//! Subcommands: `flow` (characteristic trajectories), `legendre`
//! (Lagrangian tabulation), `action` (implicit action sweeps), `semigroup`
//! (Lax-Oleinik evolution), `verify` (theorem batteries), `diagnose`
//! (model assumption checks). Exit status: 0 when all requested checks
//! pass, 2 on a check failure, 1 on usage or configuration errors.

mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use contact_hj::action::{self, ActionConfig, ActionQuery, Direction};
use contact_hj::flow::{self, ContactState, FlowError, StepControl};
use contact_hj::geometry::MAX_DIM;
use contact_hj::hamiltonian::SamplingPlan;
use contact_hj::semigroup;
use contact_hj::verify::{self, SubsolutionMode, VerificationReport};

use config::RunConfig;
use manifest::ManifestBuilder;

#[derive(Parser)]
#[command(
    name = "chj",
    version,
    about = "Contact Hamilton-Jacobi toolkit: characteristic flow, implicit actions, Lax-Oleinik semigroups, and subsolution verification on flat tori"
)]
struct Cli {
    /// Config file with [model], [grid], [evolution], [battery], [io] blocks
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: [io].out, "out")
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Model: inline expression over x1..,p1..,u, or a path to a TOML model block
    #[arg(long, global = true)]
    model: Option<String>,
    /// Declared bound on |dH/du| for inline expression models
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Grid nodes per axis
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// RNG seed for sampled batteries
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate characteristic trajectories and write them as CSV
    Flow(FlowArgs),
    /// Tabulate the Lagrangian L(x, v, u) over a velocity grid
    Legendre(LegendreArgs),
    /// Evaluate an implicit action function by shooting
    Action(ActionArgs),
    /// Evolve initial data under the backward or forward semigroup
    Semigroup(SemigroupArgs),
    /// Run a verification battery
    Verify(VerifyArgs),
    /// Check model assumptions on a sampling plan
    Diagnose(DiagnoseArgs),
}

#[derive(clap::Args)]
struct FlowArgs {
    /// Initial position (comma-separated per axis)
    #[arg(long, default_value = "0")]
    x0: String,
    /// Initial momentum (comma-separated per axis)
    #[arg(long, default_value = "0")]
    p0: String,
    /// Initial value coordinate
    #[arg(long, default_value_t = 0.0)]
    u0: f64,
    /// Horizon
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Integrator step
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    /// Enable adaptive stepping keyed to the energy-identity residual
    #[arg(long)]
    adaptive_tol: Option<f64>,
    /// CSV of initial states (x1[,x2],p1[,p2],u per line) for an ensemble
    #[arg(long)]
    states: Option<PathBuf>,
}

#[derive(clap::Args)]
struct LegendreArgs {
    /// Evaluation point (comma-separated per axis)
    #[arg(long, default_value = "0")]
    x: String,
    /// Value coordinate
    #[arg(long, default_value_t = 0.0)]
    u: f64,
    /// Velocity box half-width
    #[arg(long, default_value_t = 5.0)]
    v_max: f64,
    /// Velocities per axis
    #[arg(long, default_value_t = 101)]
    v_res: usize,
}

#[derive(clap::Args)]
struct ActionArgs {
    /// Anchor position
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    /// Anchor value
    #[arg(long, default_value_t = 0.0)]
    u0: f64,
    /// Evaluation position
    #[arg(long)]
    x: f64,
    /// Evaluation time (> 0)
    #[arg(long)]
    t: f64,
    #[arg(long, value_enum, default_value_t = DirectionArg::Backward)]
    direction: DirectionArg,
    /// Momentum scan box half-width
    #[arg(long, default_value_t = 20.0)]
    p_shoot: f64,
    /// Scan points
    #[arg(long, default_value_t = 512)]
    scan_points: usize,
    /// Integrator step for the shots
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
}

#[derive(clap::Args)]
struct SemigroupArgs {
    /// Initial data: expression over x variables, or a grid file
    #[arg(long)]
    init: String,
    /// Horizon
    #[arg(long)]
    t: f64,
    #[arg(long, value_enum, default_value_t = DirectionArg::Backward)]
    direction: DirectionArg,
    /// Time step override
    #[arg(long)]
    dt: Option<f64>,
    /// Velocity search radius override
    #[arg(long)]
    v_max: Option<f64>,
    /// Velocities per axis override
    #[arg(long)]
    v_res: Option<usize>,
    /// Snapshot cadence override (steps; 0 = none)
    #[arg(long)]
    snapshot_every: Option<usize>,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    battery: BatteryArg,
    /// Test function: expression over x variables, or a grid file
    #[arg(long)]
    phi: String,
    /// Horizons override (comma-separated)
    #[arg(long)]
    horizons: Option<String>,
    /// Sample count override
    #[arg(long)]
    samples: Option<usize>,
    /// Horizon for the lemma-inclusion battery
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Subsolution test mode
    #[arg(long, value_enum, default_value_t = ModeArg::Ae)]
    mode: ModeArg,
    /// Tolerance override
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(clap::Args)]
struct DiagnoseArgs {
    /// Momentum box half-width (default: model p_max)
    #[arg(long)]
    p_max: Option<f64>,
    /// Value box half-width (default: model u_max)
    #[arg(long)]
    u_max: Option<f64>,
    /// Completeness envelope slope A(h) = alpha |h| + beta
    #[arg(long)]
    alpha: Option<f64>,
    /// Completeness envelope offset
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Backward,
    Forward,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Backward => Direction::Backward,
            DirectionArg::Forward => Direction::Forward,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BatteryArg {
    Subsolution,
    TheoremA,
    TheoremB,
    CorollaryC,
    LemmaInclusion,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ae,
    Superdifferential,
}

/// Did the requested checks pass? Decides exit 0 vs exit 2.
struct Outcome {
    passed: bool,
    summary: String,
}

impl Outcome {
    fn pass(summary: impl Into<String>) -> Self {
        Self {
            passed: true,
            summary: summary.into(),
        }
    }

    fn fail(summary: impl Into<String>) -> Self {
        Self {
            passed: false,
            summary: summary.into(),
        }
    }
}

fn main() -> ExitCode {
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
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("worker pool setup")?;
    }

    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(model) = &cli.model {
        cfg.model = Some(config::model_override(model, cli.lambda)?);
    }
    if let Some(n) = cli.resolution {
        cfg.grid.resolution = vec![n; cfg.grid.dim];
    }
    if let Some(seed) = cli.seed {
        cfg.battery.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.io.out = out.clone();
    }

    let out_dir = cfg.io.out.clone();
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;

    let name = match &cli.command {
        Command::Flow(_) => "flow",
        Command::Legendre(_) => "legendre",
        Command::Action(_) => "action",
        Command::Semigroup(_) => "semigroup",
        Command::Verify(_) => "verify",
        Command::Diagnose(_) => "diagnose",
    };
    let mut manifest = ManifestBuilder::new(name);
    if let Some(path) = &cli.config {
        manifest.input(path);
    }

    let outcome = match &cli.command {
        Command::Flow(args) => run_flow(args, &cfg, &out_dir, &mut manifest)?,
        Command::Legendre(args) => run_legendre(args, &cfg, &out_dir, &mut manifest)?,
        Command::Action(args) => run_action(args, &cfg, &out_dir, &mut manifest)?,
        Command::Semigroup(args) => run_semigroup(args, &cfg, &out_dir, &mut manifest)?,
        Command::Verify(args) => run_verify(args, &cfg, &out_dir, &mut manifest)?,
        Command::Diagnose(args) => run_diagnose(args, &cfg, &out_dir, &mut manifest)?,
    };
    manifest.note(format!("outcome: {}", outcome.summary));
    manifest.write(&out_dir, &cfg)?;
    Ok(outcome)
}

fn parse_point(text: &str, dim: usize, what: &str) -> Result<[f64; MAX_DIM]> {
    let values = config::parse_float_list(text)?;
    if values.len() != dim {
        return Err(anyhow!(
            "{what} needs {dim} component(s), got {} in '{text}'",
            values.len()
        ));
    }
    let mut out = [0.0; MAX_DIM];
    out[..values.len()].copy_from_slice(&values);
    Ok(out)
}

fn run_flow(
    args: &FlowArgs,
    cfg: &RunConfig,
    out_dir: &Path,
    manifest: &mut ManifestBuilder,
) -> Result<Outcome> {
    let model = cfg.build_model()?;
    let spec = cfg.torus_spec()?;
    let dim = spec.dim();

    let states: Vec<ContactState> = match &args.states {
        Some(path) => {
            manifest.input(path);
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read states file {}", path.display()))?;
            let mut out = Vec::new();
            for (k, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') || line.starts_with("x1") {
                    continue;
                }
                let vals = config::parse_float_list(line)
                    .with_context(|| format!("states file line {}", k + 1))?;
                if vals.len() != 2 * dim + 1 {
                    return Err(anyhow!(
                        "states file line {}: expected {} values (x, p per axis, then u)",
                        k + 1,
                        2 * dim + 1
                    ));
                }
                let mut x = [0.0; MAX_DIM];
                let mut p = [0.0; MAX_DIM];
                x[..dim].copy_from_slice(&vals[..dim]);
                p[..dim].copy_from_slice(&vals[dim..2 * dim]);
                out.push(ContactState {
                    x,
                    p,
                    u: vals[2 * dim],
                });
            }
            out
        }
        None => vec![ContactState {
            x: parse_point(&args.x0, dim, "--x0")?,
            p: parse_point(&args.p0, dim, "--p0")?,
            u: args.u0,
        }],
    };
    if states.is_empty() {
        return Err(anyhow!("no initial states given"));
    }

    let ctl = match args.adaptive_tol {
        Some(tol) => StepControl::adaptive(args.h, tol),
        None => StepControl::fixed(args.h),
    };

    use rayon::prelude::*;
    let results: Vec<Result<flow::Trajectory, FlowError>> = states
        .par_iter()
        .map(|s0| flow::integrate(&model, &spec, s0, args.t, &ctl))
        .collect();

    let single = results.len() == 1;
    let mut blowups = 0usize;
    for (i, result) in results.into_iter().enumerate() {
        let name = if single {
            "trajectory.csv".to_string()
        } else {
            format!("trajectory_{i:04}.csv")
        };
        let traj = match result {
            Ok(traj) => traj,
            Err(FlowError::BlowUp { t_detect, .. }) => {
                blowups += 1;
                manifest.note(format!(
                    "state {i}: blow-up detected at t = {t_detect} (completeness fails on this horizon)"
                ));
                // rerun without the ceiling to keep the partial path
                let mut free = ctl;
                free.blowup_ceiling = f64::INFINITY;
                match flow::integrate(&model, &spec, &states[i], t_detect, &free) {
                    Ok(traj) => traj,
                    Err(e) => return Err(anyhow!("state {i}: {e}")),
                }
            }
            Err(e) => return Err(anyhow!("state {i}: {e}")),
        };
        let mut file = std::io::BufWriter::new(std::fs::File::create(out_dir.join(&name))?);
        traj.write_csv(&mut file).map_err(|e| anyhow!("{e}"))?;
        if single {
            let r = flow::energy_residual(&model, &traj).map_err(|e| anyhow!("{e}"))?;
            manifest.note(format!("energy-identity residual: {r:.3e}"));
        }
    }
    let summary = if blowups == 0 {
        format!("flow: {} trajectorie(s) written to {}", states.len(), out_dir.display())
    } else {
        format!(
            "flow: {} trajectorie(s), {blowups} blow-up(s) detected (see manifest)",
            states.len()
        )
    };
    Ok(Outcome::pass(summary))
}

fn run_legendre(
    args: &LegendreArgs,
    cfg: &RunConfig,
    out_dir: &Path,
    _manifest: &mut ManifestBuilder,
) -> Result<Outcome> {
    let model = cfg.build_model()?;
    let spec = cfg.torus_spec()?;
    let dim = spec.dim();
    let x = parse_point(&args.x, dim, "--x")?;

    let axis: Vec<f64> = (0..args.v_res)
        .map(|i| -args.v_max + 2.0 * args.v_max * i as f64 / (args.v_res - 1).max(1) as f64)
        .collect();
    let velocities: Vec<[f64; MAX_DIM]> = if dim == 1 {
        axis.iter().map(|&v| [v, 0.0]).collect()
    } else {
        axis.iter()
            .flat_map(|&v1| axis.iter().map(move |&v2| [v1, v2]))
            .collect()
    };

    let mut file =
        std::io::BufWriter::new(std::fs::File::create(out_dir.join("legendre.csv"))?);
    use std::io::Write as _;
    if dim == 1 {
        writeln!(file, "v1,L,argmax_p1")?;
    } else {
        writeln!(file, "v1,v2,L,argmax_p1,argmax_p2")?;
    }
    let mut failures = 0usize;
    for v in &velocities {
        match model.legendre(&x, v, args.u) {
            Ok(l) => {
                if dim == 1 {
                    writeln!(file, "{},{},{}", v[0], l.value, l.argmax_p[0])?;
                } else {
                    writeln!(
                        file,
                        "{},{},{},{},{}",
                        v[0], v[1], l.value, l.argmax_p[0], l.argmax_p[1]
                    )?;
                }
            }
            Err(e) => {
                failures += 1;
                if dim == 1 {
                    writeln!(file, "{},nan,nan", v[0])?;
                } else {
                    writeln!(file, "{},{},nan,nan,nan", v[0], v[1])?;
                }
                if failures == 1 {
                    eprintln!("legendre: first failure at v = {:?}: {e}", &v[..dim]);
                }
            }
        }
    }
    if failures == 0 {
        Ok(Outcome::pass(format!(
            "legendre: {} rows written to {}",
            velocities.len(),
            out_dir.join("legendre.csv").display()
        )))
    } else {
        Ok(Outcome::fail(format!(
            "legendre: {failures}/{} evaluations failed to converge",
            velocities.len()
        )))
    }
}

fn run_action(
    args: &ActionArgs,
    cfg: &RunConfig,
    out_dir: &Path,
    manifest: &mut ManifestBuilder,
) -> Result<Outcome> {
    let model = cfg.build_model()?;
    let spec = cfg.torus_spec()?;
    let action_cfg = ActionConfig {
        p_shoot: args.p_shoot,
        scan_points: args.scan_points,
        step_h: args.h,
        ..ActionConfig::default()
    };
    let direction: Direction = args.direction.into();
    let query = ActionQuery {
        x0: args.x0,
        u0: args.u0,
        x: args.x,
        t: args.t,
        direction,
    };

    let sweep = action::characteristic_sweep(
        &model, &spec, args.x0, args.u0, args.t, direction, &action_cfg,
    )
    .map_err(|e| anyhow!("{e}"))?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep.csv"))?);
    action::write_sweep_csv(&sweep, &spec, &mut file)?;

    match action::solve_from_sweep(&model, &spec, sweep, args.x, &action_cfg) {
        Ok(result) => {
            #[derive(serde::Serialize)]
            struct Optimum {
                direction: String,
                x0: f64,
                u0: f64,
                x: f64,
                t: f64,
                value: f64,
                attaining_p0: f64,
                winding: i64,
                candidates_scanned: usize,
            }
            let text = toml::to_string_pretty(&Optimum {
                direction: match direction {
                    Direction::Backward => "backward".into(),
                    Direction::Forward => "forward".into(),
                },
                x0: query.x0,
                u0: query.u0,
                x: query.x,
                t: query.t,
                value: result.value,
                attaining_p0: result.attaining_p0,
                winding: result.winding,
                candidates_scanned: result.candidates_scanned,
            })?;
            std::fs::write(out_dir.join("optimum.toml"), text)?;
            Ok(Outcome::pass(format!(
                "action: value {} attained by p0 = {} (winding {})",
                result.value, result.attaining_p0, result.winding
            )))
        }
        Err(e) => {
            manifest.note(format!("action failure: {e}"));
            Ok(Outcome::fail(format!(
                "action: {e}; endpoint sweep written for inspection"
            )))
        }
    }
}

fn run_semigroup(
    args: &SemigroupArgs,
    cfg: &RunConfig,
    out_dir: &Path,
    manifest: &mut ManifestBuilder,
) -> Result<Outcome> {
    let model = cfg.build_model()?;
    let spec = cfg.torus_spec()?;
    if Path::new(&args.init).is_file() {
        manifest.input(Path::new(&args.init));
    }
    let init = config::load_scalar_field(&args.init, &spec)?;

    let mut evolution = cfg.evolution.clone();
    if let Some(dt) = args.dt {
        evolution.dt = dt;
    }
    if let Some(v_max) = args.v_max {
        evolution.v_max = v_max;
    }
    if let Some(v_res) = args.v_res {
        evolution.v_res = v_res;
    }
    if let Some(every) = args.snapshot_every {
        evolution.snapshot_every = every;
    }
    let evo_cfg = evolution.to_config();

    let result = match args.direction {
        DirectionArg::Backward => semigroup::evolve_backward(&model, &init, args.t, &evo_cfg),
        DirectionArg::Forward => semigroup::evolve_forward(&model, &init, args.t, &evo_cfg),
    }
    .map_err(|e| anyhow!("{e}"))?;

    result
        .final_grid
        .write_to_path(out_dir.join("final.grid"))
        .map_err(|e| anyhow!("{e}"))?;
    let mut index = String::from("snapshot,time,file\n");
    for (i, (time, grid)) in result.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:04}.grid");
        grid.write_to_path(out_dir.join(&name)).map_err(|e| anyhow!("{e}"))?;
        index.push_str(&format!("{i},{time},{name}\n"));
    }
    std::fs::write(out_dir.join("snapshots.csv"), index)?;

    manifest.note(format!("max picard iterations: {}", result.picard_iters_max));
    manifest.note(format!("monotone vs initial: {}", result.monotone_flag));
    manifest.note(format!(
        "picard tolerance {}, iteration cap {}",
        evolution.picard_tol, evolution.picard_max
    ));
    Ok(Outcome::pass(format!(
        "semigroup: evolved to t = {} ({} snapshots) in {}",
        args.t,
        result.snapshots.len(),
        out_dir.display()
    )))
}

fn run_verify(
    args: &VerifyArgs,
    cfg: &RunConfig,
    out_dir: &Path,
    manifest: &mut ManifestBuilder,
) -> Result<Outcome> {
    let model = cfg.build_model()?;
    let spec = cfg.torus_spec()?;
    if Path::new(&args.phi).is_file() {
        manifest.input(Path::new(&args.phi));
    }
    let phi = config::load_scalar_field(&args.phi, &spec)?;

    let mut battery_cfg = cfg.battery.to_config(&cfg.evolution);
    if let Some(h) = &args.horizons {
        battery_cfg.horizons = config::parse_float_list(h)?;
    }
    if let Some(n) = args.samples {
        battery_cfg.samples = n;
    }
    if let Some(tol) = args.tolerance {
        battery_cfg.tol_override = Some(tol);
    }

    let report: VerificationReport = match args.battery {
        BatteryArg::Subsolution => {
            let mode = match args.mode {
                ModeArg::Ae => SubsolutionMode::AlmostEverywhere,
                ModeArg::Superdifferential => SubsolutionMode::Superdifferential,
            };
            let r = verify::check_subsolution(&model, &phi, mode, args.tolerance)
                .map_err(|e| anyhow!("{e}"))?;
            subsolution_as_report(&model, &r)
        }
        BatteryArg::TheoremA => {
            verify::battery_theorem_a(&model, &phi, &battery_cfg).map_err(|e| anyhow!("{e}"))?
        }
        BatteryArg::TheoremB => {
            verify::battery_theorem_b(&model, &phi, &battery_cfg).map_err(|e| anyhow!("{e}"))?
        }
        BatteryArg::CorollaryC => {
            verify::battery_corollary_c(&model, &phi, &battery_cfg, None)
                .map_err(|e| anyhow!("{e}"))?
        }
        BatteryArg::LemmaInclusion => {
            verify::check_lemma_flow_inclusion(&model, &phi, args.t, &battery_cfg)
                .map_err(|e| anyhow!("{e}"))?
        }
    };

    std::fs::write(out_dir.join("report.txt"), report.render_text())?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(out_dir.join("margins.csv"))?);
    report.write_margins_csv(&mut csv)?;

    let summary = format!(
        "verify {}: {} (report in {})",
        report.battery,
        if report.passed { "PASS" } else { "FAIL" },
        out_dir.display()
    );
    if report.passed {
        Ok(Outcome::pass(summary))
    } else {
        Ok(Outcome::fail(summary))
    }
}

fn subsolution_as_report(
    model: &contact_hj::hamiltonian::HamiltonianModel,
    r: &verify::SubsolutionReport,
) -> VerificationReport {
    let witness = r
        .witness
        .map(|w| {
            vec![format!(
                "worst margin {:.6} at node {:?} (x = {:?}, p = {:?})",
                w.margin, w.node, w.x, w.p
            )]
        })
        .unwrap_or_default();
    let sample_rows = r
        .witness
        .map(|w| {
            vec![verify::SampleRow {
                index: w.node[0],
                kind: "subsolution-worst".into(),
                t: 0.0,
                x: w.x,
                p: w.p,
                u0: 0.0,
                margin: w.margin,
            }]
        })
        .unwrap_or_default();
    VerificationReport {
        battery: "subsolution".into(),
        passed: r.passed,
        verdicts: vec![("subsolution".into(), r.passed)],
        margins: vec![
            ("worst_margin".into(), r.worst_margin),
            ("lipschitz_bound".into(), r.lipschitz_bound),
            ("constrained_nodes".into(), r.constrained_nodes as f64),
        ],
        witnesses: witness,
        parameters: vec![
            ("model".into(), model.describe()),
            ("mode".into(), r.mode.name().into()),
            ("tolerance".into(), format!("{}", r.tolerance_used)),
        ],
        sample_rows,
    }
}

fn run_diagnose(
    args: &DiagnoseArgs,
    cfg: &RunConfig,
    out_dir: &Path,
    _manifest: &mut ManifestBuilder,
) -> Result<Outcome> {
    let model = cfg.build_model()?;
    let spec = cfg.torus_spec()?;
    let mc = cfg.model.as_ref().expect("model built above");
    let p_max = args.p_max.unwrap_or(mc.p_max);
    let u_max = args.u_max.unwrap_or(mc.u_max);
    let mut plan = SamplingPlan::coarse(spec.dim(), p_max, u_max);
    let alpha = args.alpha.or(mc.alpha);
    let beta = args.beta.or(mc.beta);
    if let (Some(a), Some(b)) = (alpha, beta) {
        plan = plan.with_envelope(a, b);
    }

    let report = model.check_assumptions(&plan).map_err(|e| anyhow!("{e}"))?;
    let mut text = String::new();
    text.push_str(&format!("model = {}\n", model.describe()));
    text.push_str(&format!("passed = {}\n\n", report.all_passed()));
    let mut dump = |name: &str, c: &contact_hj::hamiltonian::AssumptionCheck| {
        text.push_str(&format!("[{name}]\n"));
        text.push_str(&format!("passed = {}\n", c.passed));
        text.push_str(&format!("margin = {}\n", c.margin));
        text.push_str(&format!(
            "witness = \"x = {:?}, p = {:?}, u = {}\"\n",
            &c.witness.0[..spec.dim()],
            &c.witness.1[..spec.dim()],
            c.witness.2
        ));
        text.push_str(&format!("detail = \"{}\"\n\n", c.detail));
    };
    dump("convexity", &report.convexity);
    dump("superlinearity", &report.superlinearity);
    dump("lipschitz_u", &report.lipschitz_u);
    if let Some(c) = &report.completeness {
        dump("completeness_envelope", c);
    }
    text.push_str(&format!("samples = {}\n", report.samples));
    text.push_str(&format!("note = \"{}\"\n", report.summary));
    std::fs::write(out_dir.join("report.txt"), &text)?;

    let summary = format!(
        "diagnose: {} (report in {})",
        if report.all_passed() { "PASS" } else { "FAIL" },
        out_dir.display()
    );
    if report.all_passed() {
        Ok(Outcome::pass(summary))
    } else {
        Ok(Outcome::fail(summary))
    }
}
