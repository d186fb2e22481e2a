use std::path::{Path, PathBuf};

use arena_core::sysid::{
    anneal_gains, AnnealConfig, EePoseTrajectory, Episode, GainBounds, JointCommands, Plant, ReferencePlant,
    TrajectoryRecord,
};
use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{jsonl_files, read_jsonl};
use crate::{CliError, Global};

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// Anneal (kp, kd) on the reference plant against recorded trajectories.
    Run(RunArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Directory of trajectory files (`*.jsonl`, one record per timestep).
    #[arg(long)]
    traj: PathBuf,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 2000.0)]
    kp_min: f64,
    #[arg(long, default_value_t = 15000.0)]
    kp_max: f64,
    #[arg(long, default_value_t = 10.0)]
    kd_min: f64,
    #[arg(long, default_value_t = 2000.0)]
    kd_max: f64,
    /// Reference plant mass per axis, kg.
    #[arg(long, default_value_t = 10.0)]
    mass: f64,
    /// Reference plant integration step, s; must divide the sample period.
    #[arg(long, default_value_t = 0.002)]
    dt: f64,
    /// CSV of ground-truth and simulated XY positions at the fitted gains.
    #[arg(long)]
    overlay: Option<PathBuf>,
}

#[derive(Serialize)]
struct Output<'a> {
    kp: f64,
    kd: f64,
    loss: f64,
    trace: &'a [f64],
}

#[derive(Serialize)]
struct OverlayRow<'a> {
    episode: &'a str,
    t: f64,
    gt_x: f64,
    gt_y: f64,
    sim_x: f64,
    sim_y: f64,
}

/// Turns one recorded trajectory into commands (the first three joint
/// channels; anything after them, such as the gripper, is ignored) and the
/// ground-truth end-effector poses.
fn episode(path: &Path, records: &[TrajectoryRecord]) -> Result<Episode, CliError> {
    let bad = |m: String| CliError::input(format!("{}: {m}", path.display()));
    if records.len() < 2 {
        return Err(bad("need at least two timesteps".into()));
    }
    let period = records[1].t - records[0].t;
    if period.is_nan() || period <= 0.0 {
        return Err(bad("timestamps must increase".into()));
    }
    for (k, w) in records.windows(2).enumerate() {
        if ((w[1].t - w[0].t) - period).abs() > 1e-6 * period {
            return Err(bad(format!("non-uniform sampling at step {}", k + 1)));
        }
    }
    let targets = records
        .iter()
        .map(|r| match r.q.as_slice() {
            [a, b, c, ..] => Ok(Vector3::new(*a, *b, *c)),
            _ => Err(bad(format!("t={}: need at least 3 joint channels", r.t))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ground_truth = EePoseTrajectory::from_records(records).map_err(|e| bad(e.to_string()))?;
    Ok(Episode { commands: JointCommands { period, targets }, ground_truth })
}

pub fn run(global: &Global, command: Command) -> Result<(), CliError> {
    let Command::Run(args) = command;
    let files = jsonl_files(&args.traj)?;
    if files.is_empty() {
        return Err(CliError::input(format!("{}: no trajectory files", args.traj.display())));
    }
    let mut names = Vec::new();
    let mut episodes = Vec::new();
    for f in &files {
        let records: Vec<TrajectoryRecord> = read_jsonl(f)?;
        episodes.push(episode(f, &records)?);
        names.push(f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    }
    let plant = ReferencePlant { mass: args.mass, dt: args.dt };
    let bounds = GainBounds { kp: (args.kp_min, args.kp_max), kd: (args.kd_min, args.kd_max) };
    let config = AnnealConfig { steps: args.steps, seed: global.seed, ..AnnealConfig::default() };
    let result = anneal_gains(&plant, &episodes, &bounds, &config).map_err(|e| CliError::input(e.to_string()))?;

    let json = serde_json::to_string(&Output {
        kp: result.gains.kp,
        kd: result.gains.kd,
        loss: result.loss,
        trace: &result.trace,
    })
    .expect("result serializes")
        + "\n";
    global.emit(&json)?;

    if let Some(path) = &args.overlay {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
        for (name, ep) in names.iter().zip(&episodes) {
            let sim = plant.simulate(&result.gains, &ep.commands).map_err(|e| CliError::input(e.to_string()))?;
            for (k, (g, s)) in ep.ground_truth.positions().iter().zip(sim.positions()).enumerate() {
                w.serialize(OverlayRow {
                    episode: name,
                    t: k as f64 * ep.commands.period,
                    gt_x: g.x,
                    gt_y: g.y,
                    sim_x: s.x,
                    sim_y: s.y,
                })
                .map_err(|e| CliError::io(path, e))?;
            }
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}
